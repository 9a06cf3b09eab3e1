//! Sample manifests: one tab-separated record per sample.
//!
//! ```text
//! # seed=42
//! # patch_size=32
//! composite	row	col	label	aug	boundary	sigma
//! fg0_bg1	17	203	1	8	0	2.731
//! ```
//!
//! `aug` encodes the augmentation as `dihedral + 8 * swapped`. Patches are not
//! stored; they are cut from the composites when needed.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

const COLUMNS: &str = "composite\trow\tcol\tlabel\taug\tboundary\tsigma";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleRecord {
    /// Index into [`Manifest::composites`].
    pub composite: usize,
    pub center: (usize, usize),
    pub label: u8,
    pub aug: u8,
    pub boundary: bool,
}

impl SampleRecord {
    pub fn dihedral(&self) -> u8 {
        self.aug % 8
    }

    pub fn swapped(&self) -> bool {
        self.aug >= 8
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub seed: u64,
    pub patch_size: usize,
    /// Composite ids and their blur sigma, in first-use order.
    pub composites: Vec<(String, f64)>,
    pub records: Vec<SampleRecord>,
}

impl Manifest {
    pub fn new(seed: u64, patch_size: usize) -> Self {
        Self {
            seed,
            patch_size,
            composites: Vec::new(),
            records: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Same header and composite table, keeping only the given records.
    pub fn with_records(&self, records: Vec<SampleRecord>) -> Manifest {
        Manifest {
            seed: self.seed,
            patch_size: self.patch_size,
            composites: self.composites.clone(),
            records,
        }
    }

    pub fn composite_id(&self, record: &SampleRecord) -> &str {
        &self.composites[record.composite].0
    }

    pub fn label_counts(&self) -> [usize; 2] {
        let ones = self.records.iter().filter(|r| r.label == 1).count();
        [self.records.len() - ones, ones]
    }

    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(64 + self.records.len() * 40);
        let _ = writeln!(out, "# seed={}", self.seed);
        let _ = writeln!(out, "# patch_size={}", self.patch_size);
        out.push_str(COLUMNS);
        out.push('\n');
        for r in &self.records {
            let (id, sigma) = &self.composites[r.composite];
            let _ = writeln!(
                out,
                "{id}\t{}\t{}\t{}\t{}\t{}\t{sigma}",
                r.center.0, r.center.1, r.label, r.aug, r.boundary as u8
            );
        }
        out
    }

    pub fn parse(text: &str, context: &Path) -> Result<Manifest> {
        let bad = |line: usize, msg: String| Error::Format {
            path: context.to_path_buf(),
            message: format!("line {line}: {msg}"),
        };
        let mut seed = None;
        let mut patch_size = None;
        let mut composites: Vec<(String, f64)> = Vec::new();
        let mut index: HashMap<String, usize> = HashMap::new();
        let mut records = Vec::new();
        let mut seen_columns = false;
        for (n, line) in text.lines().enumerate() {
            let n = n + 1;
            if let Some(meta) = line.strip_prefix('#') {
                let (key, value) = meta.trim().split_once('=').ok_or_else(|| bad(n, "malformed header".into()))?;
                let parsed = value.trim().parse::<u64>().map_err(|e| bad(n, format!("{key}: {e}")))?;
                match key.trim() {
                    "seed" => seed = Some(parsed),
                    "patch_size" => patch_size = Some(parsed as usize),
                    _ => {}
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            if !seen_columns {
                if line != COLUMNS {
                    return Err(bad(n, format!("expected column header `{COLUMNS}`")));
                }
                seen_columns = true;
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 7 {
                return Err(bad(n, format!("expected 7 fields, found {}", fields.len())));
            }
            let num = |i: usize| fields[i].parse::<usize>().map_err(|e| bad(n, format!("field {}: {e}", i + 1)));
            let sigma: f64 = fields[6].parse().map_err(|e| bad(n, format!("sigma: {e}")))?;
            let composite = match index.get(fields[0]) {
                Some(&i) => {
                    if composites[i].1 != sigma {
                        return Err(bad(n, format!("inconsistent sigma for {}", fields[0])));
                    }
                    i
                }
                None => {
                    index.insert(fields[0].to_string(), composites.len());
                    composites.push((fields[0].to_string(), sigma));
                    composites.len() - 1
                }
            };
            let label = num(3)?;
            let aug = num(4)?;
            let boundary = num(5)?;
            if label > 1 || aug > 15 || boundary > 1 {
                return Err(bad(n, "label, aug or boundary out of range".into()));
            }
            records.push(SampleRecord {
                composite,
                center: (num(1)?, num(2)?),
                label: label as u8,
                aug: aug as u8,
                boundary: boundary == 1,
            });
        }
        Ok(Manifest {
            seed: seed.ok_or_else(|| bad(0, "missing `# seed=` header".into()))?,
            patch_size: patch_size.ok_or_else(|| bad(0, "missing `# patch_size=` header".into()))?,
            composites,
            records,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Manifest> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Manifest::parse(&text, path)
    }
}
