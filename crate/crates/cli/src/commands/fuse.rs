use std::path::{Path, PathBuf};

use clap::Args;
use focusfuse::io::{load_image, load_mask, save_image, save_image_with_depth, save_mask, save_score_map, BitDepth};
use focusfuse::pipeline::{decision_accuracy, difference_map, fuse_pipeline, PipelineConfig, DIFFERENCE_ALPHA};
use focusfuse::scorer::load_checkpoint;
use focusfuse::{ClassicalScorer, FocusMeasure, FocusScorer, ScorerModel};

use super::{create_dir, require_files};
use crate::config::{pipeline_config, PipelineFlags};
use crate::{CliError, Common, PipelineArgs};

#[derive(Args, Debug)]
pub struct FuseArgs {
    /// Source image A.
    a: PathBuf,
    /// Source image B, aligned with A.
    b: PathBuf,
    /// Fused output image (.png, .pgm or .ppm).
    #[arg(long)]
    out: PathBuf,
    /// classical or network.
    #[arg(long)]
    scorer: Option<String>,
    /// Sharpness measure of the classical scorer: sml or variance.
    #[arg(long)]
    measure: Option<String>,
    /// Patch size of the classical boundary scorer (default: half the initial patch size).
    #[arg(long)]
    boundary_patch_size: Option<usize>,
    #[arg(long)]
    initial_checkpoint: Option<PathBuf>,
    /// Defaults to the initial checkpoint.
    #[arg(long)]
    boundary_checkpoint: Option<PathBuf>,
    /// Write initial/refined score maps, boundary mask, decision map and the
    /// difference map against B into this directory.
    #[arg(long)]
    emit_intermediates: Option<PathBuf>,
    /// Ground-truth decision mask; prints the decision accuracy.
    #[arg(long)]
    gt: Option<PathBuf>,
    /// Sample depth of the fused image: 8 or 16.
    #[arg(long, default_value_t = 8)]
    depth: u8,
    #[command(flatten)]
    pipeline: PipelineArgs,
}

fn parse_measure(name: &str) -> Result<FocusMeasure, CliError> {
    match name {
        "sml" => Ok(FocusMeasure::SumModifiedLaplacian),
        "variance" => Ok(FocusMeasure::LocalVariance),
        other => Err(CliError::Usage(format!("unknown focus measure `{other}` (expected sml or variance)"))),
    }
}

fn load_network(path: &Path, configured_patch: Option<usize>) -> Result<ScorerModel<f32>, CliError> {
    require_files([path])?;
    let model: ScorerModel<f32> = load_checkpoint(path)?;
    let p = model.architecture().patch_size;
    if let Some(c) = configured_patch.filter(|&c| c != p) {
        return Err(CliError::Usage(format!(
            "configured patch size {c} differs from the {p}px checkpoint {}",
            path.display()
        )));
    }
    Ok(model)
}

type Scorers = (Box<dyn FocusScorer>, Box<dyn FocusScorer>);

fn build_scorers(args: &FuseArgs, common: &Common, cfg: &PipelineConfig) -> Result<Scorers, CliError> {
    let file = &common.file.fuse;
    let kind = args.scorer.as_deref().or(file.scorer.as_deref()).unwrap_or("classical");
    let configured_patch = args.pipeline.patch_size.or(common.file.pipeline.patch_size);
    match kind {
        "classical" => {
            let measure = parse_measure(args.measure.as_deref().or(file.measure.as_deref()).unwrap_or("sml"))?;
            let boundary_patch = args.boundary_patch_size.or(file.boundary_patch_size).unwrap_or((cfg.patch_size / 2).max(2));
            if boundary_patch == 0 {
                return Err(CliError::Usage("boundary patch size must be positive".into()));
            }
            log::info!("classical scorer: {measure:?}, {}px initial / {boundary_patch}px boundary patches", cfg.patch_size);
            Ok((
                Box::new(ClassicalScorer::new(measure, cfg.patch_size)),
                Box::new(ClassicalScorer::new(measure, boundary_patch)),
            ))
        }
        "network" => {
            let initial_path = args
                .initial_checkpoint
                .clone()
                .or_else(|| file.initial_checkpoint.clone())
                .ok_or_else(|| CliError::Usage("--scorer network needs --initial-checkpoint".into()))?;
            let boundary_path = args
                .boundary_checkpoint
                .clone()
                .or_else(|| file.boundary_checkpoint.clone())
                .unwrap_or_else(|| initial_path.clone());
            let initial = load_network(&initial_path, configured_patch)?;
            let boundary = load_network(&boundary_path, None)?;
            log::info!("network scorers: {} and {}", initial_path.display(), boundary_path.display());
            Ok((Box::new(initial), Box::new(boundary)))
        }
        other => Err(CliError::Usage(format!("unknown scorer `{other}` (expected classical or network)"))),
    }
}

pub fn run(common: &Common, args: FuseArgs) -> Result<(), CliError> {
    let flags = PipelineFlags {
        patch_size: args.pipeline.patch_size,
        window_half: args.pipeline.window_half,
        stride: args.pipeline.stride,
        threshold: args.pipeline.threshold,
    };
    let cfg = pipeline_config(&common.file.pipeline, &flags)?;
    let depth = match args.depth {
        8 => BitDepth::Eight,
        16 => BitDepth::Sixteen,
        d => return Err(CliError::Usage(format!("--depth must be 8 or 16, got {d}"))),
    };
    let mut inputs = vec![args.a.as_path(), args.b.as_path()];
    inputs.extend(args.gt.as_deref());
    require_files(inputs)?;
    let (initial, boundary) = build_scorers(&args, common, &cfg)?;
    let a = load_image(&args.a)?;
    let b = load_image(&args.b)?;
    let gt = args.gt.as_deref().map(load_mask).transpose()?;

    let out = fuse_pipeline(&a, &b, initial.as_ref(), boundary.as_ref(), &cfg)?;
    save_image_with_depth(&out.fused, &args.out, depth)?;
    for line in out.timings.to_string().lines() {
        log::info!("{line}");
    }
    if let Some(dir) = &args.emit_intermediates {
        create_dir(dir)?;
        save_score_map(&out.initial, dir.join("initial_score.pgm"))?;
        save_score_map(&out.refined, dir.join("refined_score.pgm"))?;
        save_mask(&out.boundary, dir.join("boundary.pgm"))?;
        save_mask(&out.decision, dir.join("decision.pgm"))?;
        save_image(&difference_map(&out.fused, &b, DIFFERENCE_ALPHA)?, dir.join("difference_b.png"))?;
    }
    let band = out.boundary.count_ones();
    match gt {
        Some(gt) => {
            let accuracy = decision_accuracy(&out.decision, &gt, None)?;
            println!("fused={} boundary_pixels={band} decision_accuracy={accuracy:.6}", args.out.display());
        }
        None => println!("fused={} boundary_pixels={band}", args.out.display()),
    }
    Ok(())
}
