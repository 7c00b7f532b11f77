use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ssim::ssim;
use crate::error::{Error, Result};
use crate::raster::GrayImage;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RearFrameConfig {
    /// Minimum `s_mirror - s_raw` for a frame to count as rear-facing.
    pub threshold: f64,
    /// Width all images are resized to before comparison.
    pub down_width: usize,
}

impl Default for RearFrameConfig {
    fn default() -> Self {
        Self {
            threshold: 0.05,
            down_width: 128,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FrameScore {
    pub index: usize,
    pub s_raw: f64,
    pub s_mirror: f64,
    pub flagged: bool,
}

fn downsample(img: &GrayImage, width: usize) -> Result<GrayImage> {
    let height = ((img.height() as f64 * width as f64 / img.width() as f64).round() as usize).max(1);
    img.resize_bilinear(width, height)
}

/// SSIM of every frame against the reference, as-is and mirrored.
pub fn rear_frame_scores(
    reference: &GrayImage,
    frames: &[GrayImage],
    cfg: &RearFrameConfig,
) -> Result<Vec<FrameScore>> {
    if frames.is_empty() {
        return Err(Error::invalid("rear-frame search needs at least one frame"));
    }
    if cfg.down_width == 0 || !cfg.threshold.is_finite() {
        return Err(Error::invalid("down_width must be positive and threshold finite"));
    }
    let reference = downsample(reference, cfg.down_width)?;
    frames
        .par_iter()
        .enumerate()
        .map(|(index, frame)| {
            let small = downsample(frame, cfg.down_width)?;
            if small.height() != reference.height() {
                return Err(Error::ShapeMismatch(format!(
                    "frame {index} aspect differs from the reference ({}x{} vs {}x{})",
                    frame.width(),
                    frame.height(),
                    reference.width(),
                    reference.height()
                )));
            }
            let s_raw = ssim(&reference, &small)?;
            let s_mirror = ssim(&reference, &small.flip_horizontal())?;
            Ok(FrameScore {
                index,
                s_raw,
                s_mirror,
                flagged: s_mirror - s_raw > cfg.threshold,
            })
        })
        .collect()
}

/// First and last index of the flagged frames, if any.
pub fn find_rear_frames(
    reference: &GrayImage,
    frames: &[GrayImage],
    cfg: &RearFrameConfig,
) -> Result<Option<(usize, usize)>> {
    let scores = rear_frame_scores(reference, frames, cfg)?;
    let mut flagged = scores.iter().filter(|s| s.flagged).map(|s| s.index);
    Ok(flagged.next().map(|first| (first, flagged.last().unwrap_or(first))))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::make_rear_sequence;

    #[test]
    fn constructed_sequence() {
        let (reference, frames) = make_rear_sequence(160, 120, 30, (10, 20), 2.0 / 255.0, 9).unwrap();
        let cfg = RearFrameConfig::default();
        assert_eq!(find_rear_frames(&reference, &frames, &cfg).unwrap(), Some((10, 20)));
        let scores = rear_frame_scores(&reference, &frames, &cfg).unwrap();
        for s in &scores {
            assert_eq!(s.flagged, (10..=20).contains(&s.index), "{s:?}");
        }
    }

    #[test]
    fn identical_frames_not_flagged() {
        let (reference, _) = make_rear_sequence(64, 48, 1, (0, 0), 0.0, 2).unwrap();
        let frames = vec![reference.clone(); 5];
        assert_eq!(
            find_rear_frames(&reference, &frames, &RearFrameConfig::default()).unwrap(),
            None
        );
    }

    #[test]
    fn symmetric_content_not_flagged() {
        let img = GrayImage::from_fn(64, 40, |x, y| {
            let d = (x as f64 - 31.5).abs();
            ((d * 0.3).sin() * (y as f64 * 0.2).cos() * 0.5 + 0.5).clamp(0.0, 1.0)
        })
        .unwrap();
        let frames = vec![img.clone(), img.flip_horizontal()];
        let cfg = RearFrameConfig {
            down_width: 64,
            ..Default::default()
        };
        for s in rear_frame_scores(&img, &frames, &cfg).unwrap() {
            assert!((s.s_mirror - s.s_raw).abs() < 1e-12);
            assert!(!s.flagged);
        }
    }

    #[test]
    fn rejects_empty_and_mismatched() {
        let img = GrayImage::filled(32, 32, 0.5).unwrap();
        let cfg = RearFrameConfig::default();
        assert!(find_rear_frames(&img, &[], &cfg).is_err());
        let wide = GrayImage::filled(64, 16, 0.5).unwrap();
        assert!(find_rear_frames(&img, &[wide], &cfg).is_err());
    }
}
