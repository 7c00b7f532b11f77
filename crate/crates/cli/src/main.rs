//! `phenolift` command-line front end.

mod config;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;
use phenolift::frames::{find_rear_frames, rear_frame_scores, residual_handle};
use phenolift::geometry::LabeledPointCloud;
use phenolift::io;
use phenolift::lifting::{export_instances, lift_masks, MaskView};
use phenolift::metrics::{segmentation_metrics, segmentation_metrics_greedy};
use phenolift::prompting::{generate_pnp_prompts, InstanceDetection};
use phenolift::synth;
use phenolift::traits::{extract_traits, write_trait_csv_file};
use rayon::prelude::*;
use serde_json::json;

use config::{echo_path, MatchingMode, PipelineConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] phenolift::Error),
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    fn kind(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.kind(),
            CliError::Config(_) => "config",
            CliError::Usage(_) => "usage",
        }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(_) => 1,
            CliError::Config(_) | CliError::Usage(_) => 2,
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

#[derive(Parser)]
#[command(name = "phenolift", version, about = "Mask lifting and trait extraction for plant point clouds")]
struct Cli {
    /// JSON config document; flags override its keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Detections JSON to segmenter prompt JSON.
    Prompts(PromptsArgs),
    /// Close then open every mask in a directory.
    Postprocess(PostprocessArgs),
    /// Index range of rear-view frames.
    Rearframes(RearframesArgs),
    /// Lift per-view masks onto a density grid and label a point cloud.
    Lift(LiftArgs),
    /// Per-instance trait CSV from a labeled point cloud.
    Traits(TraitsArgs),
    /// Segmentation scores of a labeled cloud against ground truth.
    Metrics(MetricsArgs),
    /// Write synthetic fixtures.
    #[command(subcommand)]
    Synth(SynthCommand),
}

#[derive(Args)]
struct PromptsArgs {
    #[arg(long)]
    detections: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    grid: Option<u32>,
    #[arg(long)]
    radius: Option<u32>,
}

#[derive(Args)]
struct PostprocessArgs {
    #[arg(long)]
    masks: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RearframesArgs {
    #[arg(long)]
    reference: Option<PathBuf>,
    /// Directory of PNG frames, taken in file-name order.
    #[arg(long)]
    frames: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    down_width: Option<usize>,
}

#[derive(Args)]
struct LiftArgs {
    #[arg(long)]
    density: Option<PathBuf>,
    #[arg(long)]
    poses: Option<PathBuf>,
    #[arg(long)]
    masks: Option<PathBuf>,
    #[arg(long)]
    cloud: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    chunk_rays: Option<usize>,
    #[arg(long)]
    passes: Option<usize>,
    #[arg(long)]
    samples_per_ray: Option<usize>,
    #[arg(long)]
    export_threshold: Option<f64>,
}

#[derive(Args)]
struct TraitsArgs {
    #[arg(long)]
    cloud: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    scale_cm_per_unit: Option<f64>,
    #[arg(long)]
    voxel_size: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    outlier_sigma: Option<f64>,
    #[arg(long)]
    loop_iterations: Option<usize>,
    /// Neighbours per midrib step.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    width_strips: Option<usize>,
}

#[derive(Args)]
struct MetricsArgs {
    #[arg(long)]
    pred: Option<PathBuf>,
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    matching: Option<MatchingMode>,
    /// Comma-separated `pred:truth` pairs.
    #[arg(long, value_parser = parse_id_map)]
    id_map: Option<IdMap>,
}

#[derive(Clone)]
struct IdMap(Vec<(i32, i32)>);

fn parse_id_map(s: &str) -> std::result::Result<IdMap, String> {
    s.split(',')
        .map(|pair| {
            let (a, b) = pair.split_once(':').ok_or_else(|| format!("`{pair}` is not pred:truth"))?;
            Ok((a.trim().parse().map_err(|e| format!("{a}: {e}"))?, b.trim().parse().map_err(|e| format!("{b}: {e}"))?))
        })
        .collect::<std::result::Result<_, String>>()
        .map(IdMap)
}

#[derive(Subcommand)]
enum SynthCommand {
    /// Blob density scene with poses, per-view masks and labeled clouds.
    Scene {
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        n_objects: Option<usize>,
        #[arg(long)]
        n_views: Option<usize>,
        #[arg(long)]
        image_size: Option<u32>,
    },
    /// Ribbon leaf cloud, mesh and closed-form traits.
    Ribbon {
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        length: Option<f64>,
        #[arg(long)]
        width: Option<f64>,
        #[arg(long)]
        bend_radius: Option<f64>,
        #[arg(long)]
        spacing: Option<f64>,
    },
    /// Reference image and a frame sequence with a mirrored stretch.
    Frames {
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        noise_sigma: Option<f64>,
    },
}

fn set<T>(slot: &mut T, flag: Option<T>) {
    if let Some(v) = flag {
        *slot = v;
    }
}

fn set_path(slot: &mut Option<PathBuf>, flag: &Option<PathBuf>) {
    if flag.is_some() {
        slot.clone_from(flag);
    }
}

fn required<'a>(path: &'a Option<PathBuf>, key: &str) -> Result<&'a Path> {
    path.as_deref()
        .ok_or_else(|| CliError::Usage(format!("missing --{key} (config key paths.{key})")))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| phenolift::Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })?;
    Ok(())
}

fn create_parent(file: &Path) -> Result<()> {
    match file.parent() {
        Some(p) if !p.as_os_str().is_empty() => create_dir(p),
        _ => Ok(()),
    }
}

fn write_echo(cfg: &PipelineConfig, out: &Path, out_is_dir: bool) -> Result<()> {
    let path = echo_path(out, out_is_dir);
    io::write_json(&path, cfg)?;
    info!("config echo: {}", path.display());
    Ok(())
}

fn command_name(cmd: &Command) -> &'static str {
    match cmd {
        Command::Prompts(_) => "prompts",
        Command::Postprocess(_) => "postprocess",
        Command::Rearframes(_) => "rearframes",
        Command::Lift(_) => "lift",
        Command::Traits(_) => "traits",
        Command::Metrics(_) => "metrics",
        Command::Synth(SynthCommand::Scene { .. }) => "synth scene",
        Command::Synth(SynthCommand::Ribbon { .. }) => "synth ribbon",
        Command::Synth(SynthCommand::Frames { .. }) => "synth frames",
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    let mut cfg = PipelineConfig::load(cli.config.as_deref())?;
    set(&mut cfg.seed, cli.seed);
    cfg.resolve(command_name(&cli.command))?;
    match cli.command {
        Command::Prompts(a) => prompts(cfg, a),
        Command::Postprocess(a) => postprocess(cfg, a),
        Command::Rearframes(a) => rearframes(cfg, a),
        Command::Lift(a) => lift(cfg, a),
        Command::Traits(a) => traits(cfg, a),
        Command::Metrics(a) => metrics(cfg, a),
        Command::Synth(s) => synth_cmd(cfg, s),
    }
}

fn prompts(mut cfg: PipelineConfig, a: PromptsArgs) -> Result<()> {
    set_path(&mut cfg.paths.detections, &a.detections);
    set_path(&mut cfg.paths.out, &a.out);
    set(&mut cfg.prompts.grid, a.grid);
    set(&mut cfg.prompts.radius, a.radius);
    let input = required(&cfg.paths.detections, "detections")?;
    let out = required(&cfg.paths.out, "out")?;
    let detections: Vec<InstanceDetection> = io::read_json(input)?;
    let sets = generate_pnp_prompts(&detections, cfg.prompts.grid, cfg.prompts.radius)?;
    create_parent(out)?;
    io::write_json(out, &sets)?;
    info!("{} prompt sets -> {}", sets.len(), out.display());
    write_echo(&cfg, out, false)
}

fn postprocess(mut cfg: PipelineConfig, a: PostprocessArgs) -> Result<()> {
    set_path(&mut cfg.paths.masks, &a.masks);
    set_path(&mut cfg.paths.out, &a.out);
    let input = required(&cfg.paths.masks, "masks")?;
    let out = required(&cfg.paths.out, "out")?;
    let files: Vec<PathBuf> = io::scan_mask_dir(input)?
        .into_values()
        .flat_map(|objs| objs.into_values())
        .collect();
    if files.is_empty() {
        return Err(phenolift::Error::InvalidInput(format!("no mask files in {}", input.display())).into());
    }
    create_dir(out)?;
    files.par_iter().try_for_each(|f| -> Result<()> {
        let cleaned = residual_handle(&io::read_gray_png(f)?)?;
        let name = f.file_name().expect("scanned files have names");
        io::write_mask_png(out.join(name), &cleaned)?;
        Ok(())
    })?;
    info!("{} masks -> {}", files.len(), out.display());
    write_echo(&cfg, out, true)
}

fn png_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| phenolift::Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })? {
        let path = entry
            .map_err(|e| phenolift::Error::Io {
                path: dir.to_path_buf(),
                source: e,
            })?
            .path();
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")) {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

fn rearframes(mut cfg: PipelineConfig, a: RearframesArgs) -> Result<()> {
    set_path(&mut cfg.paths.reference, &a.reference);
    set_path(&mut cfg.paths.frames, &a.frames);
    set_path(&mut cfg.paths.out, &a.out);
    set(&mut cfg.rear_frames.threshold, a.threshold);
    set(&mut cfg.rear_frames.down_width, a.down_width);
    let reference = io::read_gray_png(required(&cfg.paths.reference, "reference")?)?;
    let frame_dir = required(&cfg.paths.frames, "frames")?;
    let out = required(&cfg.paths.out, "out")?;
    let files = png_files(frame_dir)?;
    let frames = files.iter().map(io::read_gray_png).collect::<phenolift::Result<Vec<_>>>()?;
    let range = find_rear_frames(&reference, &frames, &cfg.rear_frames)?;
    let scores = rear_frame_scores(&reference, &frames, &cfg.rear_frames)?;
    let range_json = range.map(|(first, last)| json!({"first": first, "last": last}));
    let names: Vec<String> = files
        .iter()
        .map(|f| f.file_name().unwrap_or_default().to_string_lossy().into_owned())
        .collect();
    create_parent(out)?;
    io::write_json(out, &json!({"range": range_json, "frames": names, "scores": scores}))?;
    println!("{}", serde_json::Value::from(range_json));
    write_echo(&cfg, out, false)
}

/// Mask views keyed by frame index, where mask frame `f` pairs with the
/// `f`-th pose. Objects are the union over frames, in ascending id order; an
/// object missing from a frame is an error.
fn load_views(masks: &Path, poses: &[phenolift::geometry::CameraPose]) -> Result<(Vec<i32>, Vec<MaskView>)> {
    let scanned = io::scan_mask_dir(masks)?;
    let Some(first) = scanned.values().next() else {
        return Err(phenolift::Error::InvalidInput(format!("no mask files in {}", masks.display())).into());
    };
    let objects: Vec<usize> = first.keys().copied().collect();
    let mut views = Vec::with_capacity(scanned.len());
    for (&frame, objs) in &scanned {
        if objs.keys().ne(objects.iter()) {
            return Err(phenolift::Error::ShapeMismatch(format!(
                "frame {frame} has objects {:?}, frame {} has {objects:?}",
                objs.keys().collect::<Vec<_>>(),
                scanned.keys().next().copied().unwrap_or(0)
            ))
            .into());
        }
        let pose = poses.get(frame).ok_or_else(|| {
            phenolift::Error::ShapeMismatch(format!("mask frame {frame} has no pose ({} poses)", poses.len()))
        })?;
        let masks = objs
            .values()
            .collect::<Vec<_>>()
            .par_iter()
            .map(|p| io::read_gray_png(p))
            .collect::<phenolift::Result<Vec<_>>>()?;
        views.push(MaskView { pose: *pose, masks });
    }
    let ids = objects
        .iter()
        .map(|&o| i32::try_from(o).map_err(|_| phenolift::Error::InvalidInput(format!("object id {o} too large"))))
        .collect::<phenolift::Result<Vec<_>>>()?;
    Ok((ids, views))
}

fn lift(mut cfg: PipelineConfig, a: LiftArgs) -> Result<()> {
    set_path(&mut cfg.paths.density, &a.density);
    set_path(&mut cfg.paths.poses, &a.poses);
    set_path(&mut cfg.paths.masks, &a.masks);
    set_path(&mut cfg.paths.cloud, &a.cloud);
    set_path(&mut cfg.paths.out, &a.out);
    let l = &mut cfg.lifting;
    set(&mut l.learning_rate, a.learning_rate);
    set(&mut l.lambda, a.lambda);
    set(&mut l.chunk_rays, a.chunk_rays);
    set(&mut l.passes, a.passes);
    set(&mut l.samples_per_ray, a.samples_per_ray);
    set(&mut l.export_threshold, a.export_threshold);
    cfg.lifting.validate()?;

    let density = io::read_density(required(&cfg.paths.density, "density")?)?;
    let (intrinsics, poses) = io::read_poses(required(&cfg.paths.poses, "poses")?)?.cameras()?;
    let (ids, views) = load_views(required(&cfg.paths.masks, "masks")?, &poses)?;
    let cloud = io::read_point_cloud(required(&cfg.paths.cloud, "cloud")?)?;
    let out = required(&cfg.paths.out, "out")?;
    info!("lifting {} objects over {} views", ids.len(), views.len());

    let field = lift_masks(&density, &intrinsics, &views, &cfg.lifting)?;
    let mut labeled = export_instances(&field, &cloud, cfg.lifting.export_threshold)?;
    if let Some(labels) = labeled.instance_ids.as_mut() {
        for id in labels.iter_mut().filter(|id| **id >= 0) {
            *id = ids[*id as usize];
        }
    }
    let labeled = LabeledPointCloud {
        colors: Some(labeled.instance_ids.iter().flatten().map(|&id| phenolift::lifting::instance_color(id)).collect()),
        ..labeled
    };
    create_dir(out)?;
    io::write_mask_field(out.join("mask_field.mfld"), &field)?;
    io::write_point_cloud(out.join("instances.ply"), &labeled)?;
    write_echo(&cfg, out, true)
}

fn traits(mut cfg: PipelineConfig, a: TraitsArgs) -> Result<()> {
    set_path(&mut cfg.paths.cloud, &a.cloud);
    set_path(&mut cfg.paths.out, &a.out);
    let t = &mut cfg.traits;
    set(&mut t.scale_cm_per_unit, a.scale_cm_per_unit);
    set(&mut t.meshing.voxel_size, a.voxel_size);
    if a.alpha.is_some() {
        t.meshing.alpha = a.alpha;
    }
    set(&mut t.meshing.outlier_sigma, a.outlier_sigma);
    set(&mut t.meshing.loop_iterations, a.loop_iterations);
    set(&mut t.length.k, a.k);
    set(&mut t.width_strips, a.width_strips);
    cfg.traits.validate()?;

    let cloud = io::read_point_cloud(required(&cfg.paths.cloud, "cloud")?)?;
    let out = required(&cfg.paths.out, "out")?;
    let rows = extract_traits(&cloud, &cfg.traits)?;
    create_parent(out)?;
    write_trait_csv_file(out, &rows)?;
    info!("{} instances -> {}", rows.len(), out.display());
    write_echo(&cfg, out, false)
}

fn metrics(mut cfg: PipelineConfig, a: MetricsArgs) -> Result<()> {
    set_path(&mut cfg.paths.pred, &a.pred);
    set_path(&mut cfg.paths.truth, &a.truth);
    set_path(&mut cfg.paths.out, &a.out);
    set(&mut cfg.metrics.matching, a.matching);
    if let Some(m) = a.id_map {
        cfg.metrics.id_map = Some(m.0);
    }
    let pred = io::read_point_cloud(required(&cfg.paths.pred, "pred")?)?;
    let truth = io::read_point_cloud(required(&cfg.paths.truth, "truth")?)?;
    let out = required(&cfg.paths.out, "out")?;
    if pred.points != truth.points {
        return Err(phenolift::Error::ShapeMismatch("prediction and ground truth must hold the same points in the same order".into()).into());
    }
    let report = match cfg.metrics.matching {
        MatchingMode::GreedyIou => segmentation_metrics_greedy(&pred, &truth)?,
        MatchingMode::Explicit => {
            let pairs = match &cfg.metrics.id_map {
                Some(m) => m.clone(),
                None => truth.instance_labels().into_iter().map(|t| (t, t)).collect(),
            };
            segmentation_metrics(&pred, &truth, &pairs)?
        }
    };
    create_parent(out)?;
    io::write_json(out, &report)?;
    println!("{}", serde_json::to_string_pretty(&report).map_err(phenolift::Error::from)?);
    write_echo(&cfg, out, false)
}

fn synth_cmd(mut cfg: PipelineConfig, cmd: SynthCommand) -> Result<()> {
    match cmd {
        SynthCommand::Scene {
            out,
            n_objects,
            n_views,
            image_size,
        } => {
            set_path(&mut cfg.paths.out, &out);
            let s = &mut cfg.synth.scene;
            set(&mut s.n_objects, n_objects);
            set(&mut s.n_views, n_views);
            set(&mut s.image_size, image_size);
            let out = required(&cfg.paths.out, "out")?;
            synth_scene(&cfg, out)?;
            write_echo(&cfg, out, true)
        }
        SynthCommand::Ribbon {
            out,
            length,
            width,
            bend_radius,
            spacing,
        } => {
            set_path(&mut cfg.paths.out, &out);
            let r = &mut cfg.synth.ribbon;
            set(&mut r.length, length);
            set(&mut r.width, width);
            if bend_radius.is_some() {
                r.bend_radius = bend_radius;
            }
            set(&mut r.spacing, spacing);
            let out = required(&cfg.paths.out, "out")?;
            let r = &cfg.synth.ribbon;
            let leaf = synth::make_ribbon_leaf(r.length, r.width, r.bend_radius, r.spacing, cfg.seed)?;
            create_dir(out)?;
            io::write_point_cloud(out.join("leaf.ply"), &leaf.cloud)?;
            io::write_mesh(out.join("leaf_mesh.ply"), &leaf.mesh)?;
            io::write_json(out.join("truth.json"), &leaf.truth)?;
            write_echo(&cfg, out, true)
        }
        SynthCommand::Frames { out, noise_sigma } => {
            set_path(&mut cfg.paths.out, &out);
            set(&mut cfg.synth.frames.noise_sigma, noise_sigma);
            let out = required(&cfg.paths.out, "out")?;
            let f = &cfg.synth.frames;
            let (reference, frames) = synth::make_rear_sequence(
                f.width,
                f.height,
                f.n_frames,
                (f.rear_first, f.rear_last),
                f.noise_sigma,
                cfg.seed,
            )?;
            create_dir(&out.join("frames"))?;
            io::write_gray_png(out.join("reference.png"), &reference)?;
            for (i, frame) in frames.iter().enumerate() {
                io::write_gray_png(out.join("frames").join(format!("frame_{i:05}.png")), frame)?;
            }
            io::write_json(out.join("truth.json"), &json!({"first": f.rear_first, "last": f.rear_last}))?;
            write_echo(&cfg, out, true)
        }
    }
}

/// `density.dgrd`, `poses.json`, `masks/`, the unlabeled `cloud.ply`, the
/// labeled `truth.ply` and the blob list in `blobs.json`.
fn synth_scene(cfg: &PipelineConfig, out: &Path) -> Result<()> {
    let p = &cfg.synth.scene;
    let mut scene_cfg = synth::BlobSceneConfig::new(p.n_objects, p.dims, p.n_views, cfg.seed);
    scene_cfg.image_size = p.image_size;
    scene_cfg.samples_per_ray = p.samples_per_ray;
    let scene = synth::make_blob_scene_with(&scene_cfg)?;
    let masks = synth::render_reference_masks(&scene)?;

    create_dir(&out.join("masks"))?;
    io::write_density(out.join("density.dgrd"), &scene.density)?;
    io::write_poses(out.join("poses.json"), &io::PoseDocument::new(scene.intrinsics, &scene.poses))?;
    masks.par_iter().enumerate().try_for_each(|(v, objs)| -> Result<()> {
        for (k, m) in objs.iter().enumerate() {
            io::write_gray_png(out.join("masks").join(io::mask_file_name(v, k)), m)?;
        }
        Ok(())
    })?;
    let unlabeled = LabeledPointCloud {
        instance_ids: None,
        ..scene.cloud.clone()
    };
    io::write_point_cloud(out.join("cloud.ply"), &unlabeled)?;
    io::write_point_cloud(out.join("truth.ply"), &scene.cloud)?;
    let blobs: Vec<_> = scene
        .blobs
        .iter()
        .enumerate()
        .map(|(i, b)| json!({"instance_id": i, "center": [b.center.x, b.center.y, b.center.z], "radius": b.radius}))
        .collect();
    io::write_json(out.join("blobs.json"), &blobs)?;
    let counts: BTreeMap<usize, usize> = scene.occupancy.iter().map(|o| o.iter().filter(|&&b| b).count()).enumerate().collect();
    info!("scene with {} blobs, occupied nodes {counts:?}", scene.blobs.len());
    Ok(())
}

fn fail(kind: &str, message: &str) {
    eprintln!("{}", json!({"error": kind, "message": message}));
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("").trim_start_matches("error: ");
            fail("usage", first);
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            fail(e.kind(), &e.to_string());
            ExitCode::from(e.exit_code())
        }
    }
}
