use std::path::{Path, PathBuf};

use clap::Args;
use focusfuse::dataset::{build_corpus, save_composites, synth, BackgroundSource, ForegroundSource};
use focusfuse::io::load_image;
use focusfuse::raster::to_grayscale;

use super::{create_dir, list_images, write_text};
use crate::config::{corpus_config, DatasetFlags};
use crate::{CliError, Common};

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Foreground images, each with a `<stem>_gt.<ext>` matte beside it.
    #[arg(long, requires = "bg_dir", conflicts_with = "procedural")]
    fg_dir: Option<PathBuf>,
    /// Background images.
    #[arg(long, requires = "fg_dir")]
    bg_dir: Option<PathBuf>,
    /// Generate `FGxBG` procedural sources instead of reading directories, e.g. `2x3`.
    #[arg(long)]
    procedural: Option<String>,
    /// Side of procedural backgrounds (foregrounds are generated at twice this).
    #[arg(long, default_value_t = 128)]
    size: usize,
    /// Output directory: composites/, manifest.tsv, boundary_manifest.tsv.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    samples_per_pair: Option<usize>,
    #[arg(long)]
    patch_size: Option<usize>,
    /// full, swap or none.
    #[arg(long)]
    augmentation: Option<String>,
}

fn matte_path(fg: &Path) -> PathBuf {
    let stem = fg.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
    let ext = fg.extension().and_then(|s| s.to_str()).unwrap_or_default();
    fg.with_file_name(format!("{stem}_gt.{ext}"))
}

fn is_matte(path: &Path) -> bool {
    path.file_stem().and_then(|s| s.to_str()).is_some_and(|s| s.ends_with("_gt"))
}

fn stem(path: &Path) -> String {
    path.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string()
}

fn read_sources(fg_dir: &Path, bg_dir: &Path) -> Result<(Vec<ForegroundSource>, Vec<BackgroundSource>), CliError> {
    let fg_files: Vec<PathBuf> = list_images(fg_dir)?.into_iter().filter(|p| !is_matte(p)).collect();
    let bg_files = list_images(bg_dir)?;
    if fg_files.is_empty() || bg_files.is_empty() {
        return Err(CliError::Usage(format!(
            "need at least one foreground in {} and one background in {}",
            fg_dir.display(),
            bg_dir.display()
        )));
    }
    let mut fgs = Vec::new();
    for path in &fg_files {
        let matte = matte_path(path);
        if !matte.is_file() {
            return Err(CliError::Usage(format!(
                "missing ground-truth matte {} for foreground {}",
                matte.display(),
                path.display()
            )));
        }
        let matte_img = load_image(&matte)?;
        fgs.push(ForegroundSource {
            name: stem(path),
            image: load_image(path)?,
            matte: to_grayscale(&matte_img)?,
        });
    }
    let bgs = bg_files
        .iter()
        .map(|p| {
            Ok(BackgroundSource {
                name: stem(p),
                image: load_image(p)?,
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    Ok((fgs, bgs))
}

fn procedural_sources(spec: &str, size: usize, seed: u64, half_resize: bool) -> Result<(Vec<ForegroundSource>, Vec<BackgroundSource>), CliError> {
    let parse = |s: &str| s.trim().parse::<usize>().ok().filter(|&n| n > 0);
    let (nf, nb) = spec
        .split_once(['x', 'X'])
        .and_then(|(f, b)| Some((parse(f)?, parse(b)?)))
        .ok_or_else(|| CliError::Usage(format!("--procedural expects FGxBG, e.g. 2x3, got `{spec}`")))?;
    if size < 16 {
        return Err(CliError::Usage("--size must be at least 16".into()));
    }
    let fg_size = if half_resize { 2 * size } else { size };
    let fgs = (0..nf)
        .map(|i| {
            let (image, matte) = synth::synthetic_foreground(fg_size, fg_size, seed.wrapping_add(1000 + i as u64));
            ForegroundSource {
                name: format!("fg{i:03}"),
                image,
                matte,
            }
        })
        .collect();
    let bgs = (0..nb)
        .map(|i| BackgroundSource {
            name: format!("bg{i:03}"),
            image: synth::synthetic_background(size, size, seed.wrapping_add(2000 + i as u64)),
        })
        .collect();
    Ok((fgs, bgs))
}

pub fn run(common: &Common, args: SynthArgs) -> Result<(), CliError> {
    let flags = DatasetFlags {
        samples_per_pair: args.samples_per_pair,
        patch_size: args.patch_size,
        augmentation: args.augmentation.clone(),
    };
    let cfg = corpus_config(&common.file.dataset, &flags)?;
    let (fgs, bgs) = match (&args.procedural, &args.fg_dir, &args.bg_dir) {
        (Some(spec), _, _) => procedural_sources(spec, args.size, common.seed, cfg.half_resize)?,
        (None, Some(fg), Some(bg)) => read_sources(fg, bg)?,
        _ => return Err(CliError::Usage("pass --fg-dir and --bg-dir, or --procedural".into())),
    };
    log::info!("building corpus from {} foregrounds x {} backgrounds, seed={}", fgs.len(), bgs.len(), common.seed);
    let corpus = build_corpus(&fgs, &bgs, &cfg, common.seed)?;

    let composites_dir = args.out.join("composites");
    create_dir(&composites_dir)?;
    save_composites(&composites_dir, &corpus.composites)?;
    write_text(&args.out.join("manifest.tsv"), &corpus.full.to_text())?;
    write_text(&args.out.join("boundary_manifest.tsv"), &corpus.boundary.to_text())?;
    let [zeros, ones] = corpus.full.label_counts();
    println!(
        "composites={} samples={} boundary_samples={} label0={zeros} label1={ones} seed={}",
        corpus.composites.len(),
        corpus.full.len(),
        corpus.boundary.len(),
        common.seed
    );
    Ok(())
}
