use std::path::{Path, PathBuf};

use clap::Args;
use focusfuse::dataset::{CompositeStore, Manifest, ManifestSource, SampleSource};
use focusfuse::scorer::{load_checkpoint, save_checkpoint, Architecture};
use focusfuse::training::{split_holdout, train_with_observer, TrainConfig};
use focusfuse::{Error, ScorerModel};

use super::{create_dir, require_files, write_text};
use crate::config::{train_config, TrainFlags};
use crate::{CliError, Common};

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Corpus directory written by `synth`.
    #[arg(long)]
    data: PathBuf,
    /// Output directory for `<target>.ffsm` and `<target>_report.txt`.
    #[arg(long)]
    out: PathBuf,
    /// initial, boundary or both.
    #[arg(long)]
    target: Option<String>,
    /// Continue from a checkpoint (single target only); its architecture is kept.
    #[arg(long)]
    resume: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Residual blocks per stage (the network has 6n+2 layers).
    #[arg(long)]
    blocks_per_stage: Option<usize>,
    #[arg(long)]
    patch_size: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Target {
    Initial,
    Boundary,
}

impl Target {
    fn name(self) -> &'static str {
        match self {
            Target::Initial => "initial",
            Target::Boundary => "boundary",
        }
    }

    fn manifest_file(self) -> &'static str {
        match self {
            Target::Initial => "manifest.tsv",
            Target::Boundary => "boundary_manifest.tsv",
        }
    }
}

fn parse_targets(name: &str) -> Result<Vec<Target>, CliError> {
    match name {
        "initial" => Ok(vec![Target::Initial]),
        "boundary" => Ok(vec![Target::Boundary]),
        "both" => Ok(vec![Target::Initial, Target::Boundary]),
        other => Err(CliError::Usage(format!("unknown target `{other}` (expected initial, boundary or both)"))),
    }
}

/// The model to start from, after checking every source of a patch size agrees.
fn initial_model(
    resume: Option<&Path>,
    blocks: Option<usize>,
    patch_size: Option<usize>,
    manifest: &Manifest,
    seed: u64,
) -> Result<ScorerModel<f32>, CliError> {
    let conflict = |what: &str, a: usize, b: usize| CliError::Usage(format!("{what}: {a} vs {b}"));
    if let Some(p) = patch_size.filter(|&p| p != manifest.patch_size) {
        return Err(conflict("configured patch size differs from the corpus", p, manifest.patch_size));
    }
    match resume {
        Some(path) => {
            require_files([path])?;
            let model: ScorerModel<f32> = load_checkpoint(path)?;
            let arch = *model.architecture();
            if let Some(p) = patch_size.filter(|&p| p != arch.patch_size) {
                return Err(conflict("configured patch size differs from the checkpoint", p, arch.patch_size));
            }
            if arch.patch_size != manifest.patch_size {
                return Err(conflict("checkpoint patch size differs from the corpus", arch.patch_size, manifest.patch_size));
            }
            if let Some(n) = blocks.filter(|&n| n != arch.blocks_per_stage) {
                return Err(conflict("configured blocks per stage differ from the checkpoint", n, arch.blocks_per_stage));
            }
            Ok(model)
        }
        None => Ok(ScorerModel::new(Architecture::new(blocks.unwrap_or(1), manifest.patch_size), seed)?),
    }
}

fn train_target(
    target: Target,
    args: &TrainArgs,
    common: &Common,
    cfg: &TrainConfig,
    blocks: Option<usize>,
    patch_size: Option<usize>,
) -> Result<(), CliError> {
    let manifest_path = args.data.join(target.manifest_file());
    require_files([manifest_path.as_path()])?;
    let manifest = Manifest::load(&manifest_path)?;
    if manifest.is_empty() {
        return Err(CliError::Usage(format!("{} has no samples", manifest_path.display())));
    }
    let model = initial_model(args.resume.as_deref(), blocks, patch_size, &manifest, common.seed)?;
    let store = CompositeStore::load(args.data.join("composites"), &manifest)?;
    let (train_manifest, holdout_manifest) = split_holdout(&manifest, cfg.holdout_fraction, common.seed)?;
    let train_set = ManifestSource::new(&store, &train_manifest)?;
    let holdout = ManifestSource::new(&store, &holdout_manifest)?;
    let arch = *model.architecture();
    log::info!(
        "training {} scorer: {} layers, {}px patches, {} train / {} holdout samples, seed={}",
        target.name(),
        arch.weighted_layers(),
        arch.patch_size,
        train_set.len(),
        holdout.len(),
        common.seed
    );

    let checkpoint = args.out.join(format!("{}.ffsm", target.name()));
    let report_path = args.out.join(format!("{}_report.txt", target.name()));
    let mut write_error = None;
    let mut observe = |report: &focusfuse::training::TrainReport, _: &ScorerModel<f32>| {
        if let Some(e) = report.epochs.last() {
            log::info!("{} epoch={} loss={:.6} holdout_accuracy={:.4}", target.name(), e.epoch, e.loss, e.holdout_accuracy);
        }
        if let Err(e) = write_text(&report_path, &report.to_text()) {
            write_error.get_or_insert(e);
        }
    };
    match train_with_observer(model, &train_set, &holdout, cfg, &mut observe) {
        Ok((best, report)) => {
            if let Some(e) = write_error {
                return Err(e);
            }
            save_checkpoint(&best, &checkpoint)?;
            write_text(&report_path, &report.to_text())?;
            println!(
                "target={} epochs={} best_epoch={} best_holdout_accuracy={:.6} checkpoint={}",
                target.name(),
                report.epochs.len(),
                report.best_epoch,
                report.best_accuracy,
                checkpoint.display()
            );
            Ok(())
        }
        Err(Error::Diverged { epoch, report }) => {
            write_text(&report_path, &report.to_text())?;
            Err(CliError::Runtime(format!(
                "{} scorer diverged in epoch {epoch}; partial report kept at {}",
                target.name(),
                report_path.display()
            )))
        }
        Err(e) => Err(e.into()),
    }
}

pub fn run(common: &Common, args: TrainArgs) -> Result<(), CliError> {
    let file = &common.file.train;
    let targets = parse_targets(args.target.as_deref().or(file.target.as_deref()).unwrap_or("both"))?;
    if args.resume.is_some() && targets.len() > 1 {
        return Err(CliError::Usage("--resume needs a single --target".into()));
    }
    let flags = TrainFlags {
        epochs: args.epochs,
        learning_rate: args.learning_rate,
        batch_size: args.batch_size,
        blocks_per_stage: args.blocks_per_stage,
        patch_size: args.patch_size,
    };
    let cfg = train_config(file, &flags, common.seed)?;
    let blocks = flags.blocks_per_stage.or(file.blocks_per_stage);
    let patch_size = flags.patch_size.or(file.patch_size);
    create_dir(&args.out)?;
    for target in targets {
        train_target(target, &args, common, &cfg, blocks, patch_size)?;
    }
    Ok(())
}
