use std::fmt::Write as _;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::raster::Image;

use super::{q_cb, q_g, q_mi, q_y, MetricConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteRow {
    pub pair_id: String,
    pub q_mi: f64,
    pub q_g: f64,
    pub q_y: f64,
    pub q_cb: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteTable {
    pub rows: Vec<SuiteRow>,
    /// Column means, with `pair_id = "mean"`.
    pub mean: SuiteRow,
}

impl SuiteTable {
    /// Comma-separated table: header, one row per pair, then the mean row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("pair_id,q_mi,q_g,q_y,q_cb\n");
        for r in self.rows.iter().chain(std::iter::once(&self.mean)) {
            let _ = writeln!(out, "{},{:.6},{:.6},{:.6},{:.6}", r.pair_id, r.q_mi, r.q_g, r.q_y, r.q_cb);
        }
        out
    }
}

/// All four metrics for every `(id, A, B, F)` entry, plus column means.
pub fn evaluate_suite(entries: &[(String, Image, Image, Image)], cfg: &MetricConfig) -> Result<SuiteTable> {
    cfg.validate()?;
    if entries.is_empty() {
        return Err(Error::invalid("metric suite needs at least one triple"));
    }
    let rows = entries
        .par_iter()
        .map(|(id, a, b, f)| {
            Ok(SuiteRow {
                pair_id: id.clone(),
                q_mi: q_mi(a, b, f, cfg.bins)?,
                q_g: q_g(a, b, f, &cfg.gradient)?,
                q_y: q_y(a, b, f, &cfg.yang)?,
                q_cb: q_cb(a, b, f, &cfg.chen_blum)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let n = rows.len() as f64;
    let mean = |get: fn(&SuiteRow) -> f64| rows.iter().map(get).sum::<f64>() / n;
    let mean = SuiteRow {
        pair_id: "mean".into(),
        q_mi: mean(|r| r.q_mi),
        q_g: mean(|r| r.q_g),
        q_y: mean(|r| r.q_y),
        q_cb: mean(|r| r.q_cb),
    };
    Ok(SuiteTable { rows, mean })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::synthetic_composite;

    #[test]
    fn single_and_duplicated_pairs() {
        let c = synthetic_composite(32, 32, (2.0, 2.0), 1).unwrap();
        let entry = ("p0".to_string(), c.img_a.clone(), c.img_b.clone(), c.img_a.clone());
        let cfg = MetricConfig::default();
        let one = evaluate_suite(std::slice::from_ref(&entry), &cfg).unwrap();
        assert_eq!(one.rows.len(), 1);
        let r = &one.rows[0];
        assert_eq!((one.mean.q_mi, one.mean.q_g, one.mean.q_y, one.mean.q_cb), (r.q_mi, r.q_g, r.q_y, r.q_cb));
        let two = evaluate_suite(&[entry.clone(), entry], &cfg).unwrap();
        assert!((two.mean.q_g - one.mean.q_g).abs() < 1e-15);
        let csv = one.to_csv();
        assert_eq!(csv.lines().next().unwrap(), "pair_id,q_mi,q_g,q_y,q_cb");
        assert_eq!(csv.lines().count(), 3);
        assert!(evaluate_suite(&[], &cfg).is_err());
    }
}
