use std::path::{Path, PathBuf};

use clap::Args;
use focusfuse::io::load_image;
use focusfuse::metrics::evaluate_suite;

use super::{require_files, write_text};
use crate::config::metric_config;
use crate::{CliError, Common};

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Text file with one `id A B F` line per triple (tab or space separated,
    /// paths relative to the file, `#` starts a comment).
    #[arg(long)]
    manifest: PathBuf,
    /// CSV output; printed to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

struct Triple {
    id: String,
    paths: [PathBuf; 3],
}

fn parse_manifest(path: &Path) -> Result<Vec<Triple>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut triples = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or_default().trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let [id, a, b, f] = fields[..] else {
            return Err(CliError::Usage(format!(
                "{}:{}: expected `id A B F`, got {} fields",
                path.display(),
                n + 1,
                fields.len()
            )));
        };
        triples.push(Triple {
            id: id.to_string(),
            paths: [base.join(a), base.join(b), base.join(f)],
        });
    }
    Ok(triples)
}

pub fn run(common: &Common, args: EvalArgs) -> Result<(), CliError> {
    let cfg = metric_config(&common.file.metrics)?;
    require_files([args.manifest.as_path()])?;
    let triples = parse_manifest(&args.manifest)?;
    if triples.is_empty() {
        return Err(CliError::Usage(format!("{} lists no triples", args.manifest.display())));
    }
    require_files(triples.iter().flat_map(|t| t.paths.iter().map(PathBuf::as_path)))?;
    let entries = triples
        .iter()
        .map(|t| {
            let [a, b, f] = &t.paths;
            Ok((t.id.clone(), load_image(a)?, load_image(b)?, load_image(f)?))
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    log::info!("evaluating {} triples", entries.len());
    let table = evaluate_suite(&entries, &cfg)?;
    let csv = table.to_csv();
    match &args.out {
        Some(out) => write_text(out, &csv)?,
        None => print!("{csv}"),
    }
    Ok(())
}
