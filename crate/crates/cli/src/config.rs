//! The pipeline config document: one JSON object with a section per stage.
//! Missing keys take their defaults, unknown keys are rejected.

use std::path::{Path, PathBuf};

use phenolift::frames::RearFrameConfig;
use phenolift::lifting::LiftingConfig;
use phenolift::prompting::{DEFAULT_GRID, DEFAULT_RADIUS};
use phenolift::traits::TraitConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Subcommand the document was resolved for. Checked when present.
    pub command: Option<String>,
    /// Every random choice derives from this.
    pub seed: u64,
    pub paths: Paths,
    pub prompts: PromptConfig,
    pub rear_frames: RearFrameConfig,
    /// `seed` is overwritten by the top-level key.
    pub lifting: LiftingConfig,
    pub traits: TraitConfig,
    pub metrics: MetricsConfig,
    pub synth: SynthConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            command: None,
            seed: 0,
            paths: Paths::default(),
            prompts: PromptConfig::default(),
            rear_frames: RearFrameConfig::default(),
            lifting: LiftingConfig::default(),
            traits: TraitConfig::default(),
            metrics: MetricsConfig::default(),
            synth: SynthConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub detections: Option<PathBuf>,
    pub masks: Option<PathBuf>,
    pub reference: Option<PathBuf>,
    pub frames: Option<PathBuf>,
    pub density: Option<PathBuf>,
    pub poses: Option<PathBuf>,
    pub cloud: Option<PathBuf>,
    pub pred: Option<PathBuf>,
    pub truth: Option<PathBuf>,
    /// Output file or directory, depending on the subcommand.
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PromptConfig {
    pub grid: u32,
    pub radius: u32,
}

impl Default for PromptConfig {
    fn default() -> Self {
        Self {
            grid: DEFAULT_GRID,
            radius: DEFAULT_RADIUS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum MatchingMode {
    /// Pairs from `id_map`, or each ground-truth id with itself.
    Explicit,
    GreedyIou,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    pub matching: MatchingMode,
    /// `[pred_id, truth_id]` pairs.
    pub id_map: Option<Vec<(i32, i32)>>,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            matching: MatchingMode::Explicit,
            id_map: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub scene: SceneParams,
    pub ribbon: RibbonParams,
    pub frames: FrameParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneParams {
    pub n_objects: usize,
    pub dims: [usize; 3],
    pub n_views: usize,
    pub image_size: u32,
    pub samples_per_ray: usize,
}

impl Default for SceneParams {
    fn default() -> Self {
        Self {
            n_objects: 3,
            dims: [64, 64, 64],
            n_views: 24,
            image_size: 128,
            samples_per_ray: 128,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RibbonParams {
    pub length: f64,
    pub width: f64,
    pub bend_radius: Option<f64>,
    pub spacing: f64,
}

impl Default for RibbonParams {
    fn default() -> Self {
        Self {
            length: 10.0,
            width: 2.0,
            bend_radius: None,
            spacing: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FrameParams {
    pub width: usize,
    pub height: usize,
    pub n_frames: usize,
    pub rear_first: usize,
    pub rear_last: usize,
    /// Gaussian pixel noise, intensities in [0, 1].
    pub noise_sigma: f64,
}

impl Default for FrameParams {
    fn default() -> Self {
        Self {
            width: 160,
            height: 120,
            n_frames: 30,
            rear_first: 10,
            rear_last: 20,
            noise_sigma: 2.0 / 255.0,
        }
    }
}

impl PipelineConfig {
    /// Defaults, or the document at `path`.
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| phenolift::Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// Pins the document to `command` and propagates the seed.
    pub fn resolve(&mut self, command: &str) -> Result<(), CliError> {
        if let Some(c) = &self.command {
            if c != command {
                return Err(CliError::Config(format!("config was resolved for `{c}`, not `{command}`")));
            }
        }
        self.command = Some(command.to_string());
        self.lifting.seed = self.seed;
        Ok(())
    }
}

/// Where the resolved config is echoed: inside an output directory, or next
/// to an output file with `.config.json` appended.
pub fn echo_path(out: &Path, out_is_dir: bool) -> PathBuf {
    if out_is_dir {
        out.join("config.json")
    } else {
        let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
        name.push(".config.json");
        out.with_file_name(name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_unknown_keys() {
        let mut cfg = PipelineConfig::default();
        cfg.seed = 7;
        cfg.traits.meshing.alpha = Some(0.2);
        cfg.rear_frames.threshold = 0.1 + 0.2;
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<PipelineConfig>(&text).unwrap(), cfg);
        assert!(serde_json::from_str::<PipelineConfig>(r#"{"sed": 1}"#).is_err());
        assert!(serde_json::from_str::<PipelineConfig>(r#"{"lifting": {"passes": 2, "x": 1}}"#).is_err());
        let partial: PipelineConfig = serde_json::from_str(r#"{"lifting": {"passes": 2}}"#).unwrap();
        assert_eq!(partial.lifting.passes, 2);
        assert_eq!(partial.lifting.chunk_rays, LiftingConfig::default().chunk_rays);
    }

    #[test]
    fn resolve_checks_command() {
        let mut cfg = PipelineConfig {
            seed: 3,
            ..Default::default()
        };
        cfg.resolve("lift").unwrap();
        assert_eq!(cfg.lifting.seed, 3);
        assert!(cfg.resolve("traits").is_err());
    }

    #[test]
    fn echo_locations() {
        assert_eq!(echo_path(Path::new("a/b.csv"), false), Path::new("a/b.csv.config.json"));
        assert_eq!(echo_path(Path::new("a/out"), true), Path::new("a/out/config.json"));
    }
}
