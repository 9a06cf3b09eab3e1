//! The fusion pipeline: initial score map, boundary detection and
//! re-scoring, binarization, small-region removal and decision-map fusion.

mod colormap;
mod regions;

use std::fmt;
use std::time::{Duration, Instant};

use crate::error::{Error, Result};
use crate::raster::{reflect_index, to_grayscale, BinaryMask, BoundaryMask, DecisionMap, Image, ScoreMap};
use crate::scorer::FocusScorer;

pub use colormap::{colorize, lookup_table};
pub use regions::{label_components, remove_small_regions};

/// Amplification used for difference maps.
pub const DIFFERENCE_ALPHA: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineConfig {
    /// Patch size for scorers built from this configuration.
    pub patch_size: usize,
    /// Half-size `l` of the `(2l+1) x (2l+1)` averaging window.
    pub window_half: usize,
    /// Pixels with `band_low < mean score < band_high` are near the boundary.
    pub band_low: f64,
    pub band_high: f64,
    /// Scores `>= threshold` select source A.
    pub threshold: f64,
    /// Components smaller than this fraction of the image area are cleared.
    pub min_region_fraction: f64,
    /// Score every `stride`-th pixel and fill the rest from the nearest lattice point.
    pub stride: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            patch_size: 64,
            window_half: 8,
            band_low: 0.2,
            band_high: 0.8,
            threshold: 0.5,
            min_region_fraction: 0.01,
            stride: 1,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.band_low && self.band_low < self.band_high && self.band_high < 1.0) {
            return Err(Error::invalid(format!(
                "boundary band ({}, {}) must satisfy 0 < low < high < 1",
                self.band_low, self.band_high
            )));
        }
        if self.patch_size == 0 || self.patch_size % 2 != 0 {
            return Err(Error::invalid(format!("patch size {} must be positive and even", self.patch_size)));
        }
        if self.window_half == 0 {
            return Err(Error::invalid("window half-size must be at least 1"));
        }
        if self.stride == 0 {
            return Err(Error::invalid("stride must be at least 1"));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::invalid(format!("threshold {} must lie in (0, 1)", self.threshold)));
        }
        if !(self.min_region_fraction >= 0.0) {
            return Err(Error::invalid("region fraction must be non-negative"));
        }
        Ok(())
    }
}

fn gray_pair(img_a: &Image, img_b: &Image) -> Result<(Image, Image)> {
    img_a.ensure_same_shape(img_b)?;
    Ok((to_grayscale(img_a)?, to_grayscale(img_b)?))
}

/// Nearest lattice coordinate for index `i` on a lattice `0, s, 2s, ...` inside `0..len`.
fn nearest_lattice(i: usize, stride: usize, len: usize) -> usize {
    let last = (len - 1) / stride;
    ((i + stride / 2) / stride).min(last) * stride
}

fn score_map_gray(a: &Image, b: &Image, scorer: &dyn FocusScorer, stride: usize) -> Result<ScoreMap> {
    let (h, w) = a.dims();
    if stride == 0 {
        return Err(Error::invalid("stride must be at least 1"));
    }
    let rows: Vec<usize> = (0..h).step_by(stride).collect();
    let cols: Vec<usize> = (0..w).step_by(stride).collect();
    let positions: Vec<(usize, usize)> = rows.iter().flat_map(|&r| cols.iter().map(move |&c| (r, c))).collect();
    let scores = scorer.score_positions(a, b, &positions)?;
    if stride == 1 {
        return ScoreMap::new(h, w, scores);
    }
    let mut dense = Vec::with_capacity(h * w);
    for r in 0..h {
        let lr = nearest_lattice(r, stride, h) / stride;
        for c in 0..w {
            let lc = nearest_lattice(c, stride, w) / stride;
            dense.push(scores[lr * cols.len() + lc]);
        }
    }
    ScoreMap::new(h, w, dense)
}

/// Focus score of the patch centred at every pixel (or every `stride`-th
/// pixel with nearest-neighbour fill). Color inputs are scored in gray.
pub fn generate_score_map(img_a: &Image, img_b: &Image, scorer: &dyn FocusScorer, cfg: &PipelineConfig) -> Result<ScoreMap> {
    let (a, b) = gray_pair(img_a, img_b)?;
    score_map_gray(&a, &b, scorer, cfg.stride)
}

/// Mean score over the `(2l+1) x (2l+1)` window centred at `center`,
/// reflecting indices at the borders.
pub fn mean_focus_score(map: &ScoreMap, center: (usize, usize), l: usize) -> f64 {
    let (h, w) = map.dims();
    let l = l as isize;
    let (r0, c0) = (center.0 as isize, center.1 as isize);
    let mut sum = 0.0;
    for r in r0 - l..=r0 + l {
        let rr = reflect_index(r, h);
        for c in c0 - l..=c0 + l {
            sum += map.get(rr, reflect_index(c, w));
        }
    }
    let side = (2 * l + 1) as f64;
    sum / (side * side)
}

/// Marks pixels whose window-mean score lies strictly inside the band.
pub fn detect_boundary(map: &ScoreMap, cfg: &PipelineConfig) -> BoundaryMask {
    let (h, w) = map.dims();
    BinaryMask::from_fn(h, w, |r, c| {
        let m = mean_focus_score(map, (r, c), cfg.window_half);
        cfg.band_low < m && m < cfg.band_high
    })
}

fn refine_gray(map: &ScoreMap, bmask: &BoundaryMask, a: &Image, b: &Image, scorer: &dyn FocusScorer) -> Result<ScoreMap> {
    if map.dims() != bmask.dims() {
        return Err(Error::dims(
            format!("{:?}", map.dims()),
            format!("{:?} boundary mask", bmask.dims()),
        ));
    }
    a.ensure_dims(map.dims())?;
    let (h, w) = map.dims();
    let positions: Vec<(usize, usize)> = (0..h)
        .flat_map(|r| (0..w).map(move |c| (r, c)))
        .filter(|&(r, c)| bmask.get(r, c))
        .collect();
    let mut out = map.clone();
    if positions.is_empty() {
        return Ok(out);
    }
    let scores = scorer.score_positions(a, b, &positions)?;
    for (&(r, c), s) in positions.iter().zip(scores) {
        out.set(r, c, s);
    }
    Ok(out)
}

/// Replaces the scores under the boundary mask with the boundary scorer's
/// output; every other score is kept.
pub fn refine(
    map: &ScoreMap,
    bmask: &BoundaryMask,
    img_a: &Image,
    img_b: &Image,
    boundary_scorer: &dyn FocusScorer,
    _cfg: &PipelineConfig,
) -> Result<ScoreMap> {
    let (a, b) = gray_pair(img_a, img_b)?;
    refine_gray(map, bmask, &a, &b, boundary_scorer)
}

/// `1` where `score >= threshold`, else `0`.
pub fn binarize(map: &ScoreMap, threshold: f64) -> DecisionMap {
    let (h, w) = map.dims();
    BinaryMask::from_fn(h, w, |r, c| map.get(r, c) >= threshold)
}

/// Selects each pixel from `img_a` where the decision map is 1, else from `img_b`.
pub fn fuse(img_a: &Image, img_b: &Image, dm: &DecisionMap) -> Result<Image> {
    img_a.ensure_same_shape(img_b)?;
    img_a.ensure_dims(dm.dims())?;
    let ch = img_a.channels();
    let mut data = Vec::with_capacity(img_a.data().len());
    for (i, &d) in dm.values().iter().enumerate() {
        let src = if d != 0 { img_a } else { img_b };
        data.extend_from_slice(&src.data()[i * ch..(i + 1) * ch]);
    }
    Ok(Image::from_raw(img_a.height(), img_a.width(), ch, data))
}

/// `clamp(alpha * |source - fused|, 0, 1)`, converted to gray.
pub fn difference_gray(fused: &Image, source: &Image, alpha: f64) -> Result<Image> {
    fused.ensure_same_shape(source)?;
    let data = fused
        .data()
        .iter()
        .zip(source.data())
        .map(|(f, s)| (alpha * (s - f).abs()).clamp(0.0, 1.0))
        .collect();
    to_grayscale(&Image::from_raw(fused.height(), fused.width(), fused.channels(), data))
}

/// Pseudo-colored difference map (see [`colorize`]).
pub fn difference_map(fused: &Image, source: &Image, alpha: f64) -> Result<Image> {
    let gray = difference_gray(fused, source, alpha)?;
    let data = gray.data().iter().flat_map(|&g| colorize(g)).collect();
    Ok(Image::from_raw(gray.height(), gray.width(), 3, data))
}

/// Wall-clock time spent in each stage.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StageTimings {
    pub score_map: Duration,
    pub boundary: Duration,
    pub refine: Duration,
    pub postprocess: Duration,
    pub fuse: Duration,
}

impl fmt::Display for StageTimings {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (name, d) in [
            ("score_map", self.score_map),
            ("boundary", self.boundary),
            ("refine", self.refine),
            ("postprocess", self.postprocess),
            ("fuse", self.fuse),
        ] {
            writeln!(f, "stage={name} seconds={:.6}", d.as_secs_f64())?;
        }
        Ok(())
    }
}

/// Fused image and every intermediate raster.
#[derive(Debug, Clone)]
pub struct FusionOutput {
    pub fused: Image,
    pub decision: DecisionMap,
    pub initial: ScoreMap,
    pub refined: ScoreMap,
    pub boundary: BoundaryMask,
    pub timings: StageTimings,
}

/// Runs every stage on two aligned sources.
pub fn fuse_pipeline(
    img_a: &Image,
    img_b: &Image,
    initial_scorer: &dyn FocusScorer,
    boundary_scorer: &dyn FocusScorer,
    cfg: &PipelineConfig,
) -> Result<FusionOutput> {
    cfg.validate()?;
    let (a, b) = gray_pair(img_a, img_b)?;
    let mut timings = StageTimings::default();

    let t = Instant::now();
    let initial = score_map_gray(&a, &b, initial_scorer, cfg.stride)?;
    timings.score_map = t.elapsed();

    let t = Instant::now();
    let boundary = detect_boundary(&initial, cfg);
    timings.boundary = t.elapsed();

    let t = Instant::now();
    let refined = refine_gray(&initial, &boundary, &a, &b, boundary_scorer)?;
    timings.refine = t.elapsed();

    let t = Instant::now();
    let decision = remove_small_regions(&binarize(&refined, cfg.threshold), cfg.min_region_fraction);
    timings.postprocess = t.elapsed();

    let t = Instant::now();
    let fused = fuse(img_a, img_b, &decision)?;
    timings.fuse = t.elapsed();

    Ok(FusionOutput {
        fused,
        decision,
        initial,
        refined,
        boundary,
        timings,
    })
}

/// Fraction of pixels where the decision map agrees with the ground truth,
/// optionally restricted to pixels where `within` is 1.
pub fn decision_accuracy(dm: &DecisionMap, gt: &BinaryMask, within: Option<&BinaryMask>) -> Result<f64> {
    if dm.dims() != gt.dims() {
        return Err(Error::dims(format!("{:?}", gt.dims()), format!("{:?}", dm.dims())));
    }
    let mut total = 0usize;
    let mut correct = 0usize;
    for i in 0..dm.values().len() {
        if within.is_some_and(|m| m.values()[i] == 0) {
            continue;
        }
        total += 1;
        correct += (dm.values()[i] == gt.values()[i]) as usize;
    }
    Ok(if total == 0 { 1.0 } else { correct as f64 / total as f64 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filter::gaussian_blur;
    use crate::scorer::{ClassicalScorer, ConstantScorer, FocusMeasure};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn texture(h: usize, w: usize, seed: u64) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..h * w).map(|_| rng.random_range(0.1..0.9)).collect();
        Image::new(h, w, 1, data).unwrap()
    }

    fn random_map(h: usize, w: usize, seed: u64) -> ScoreMap {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ScoreMap::new(h, w, (0..h * w).map(|_| rng.random::<f64>()).collect()).unwrap()
    }

    #[test]
    fn constant_scorer_gives_uniform_map() {
        let a = texture(20, 24, 1);
        let map = generate_score_map(&a, &a, &ConstantScorer::new(0.5, 8), &PipelineConfig::default()).unwrap();
        assert!(map.scores().iter().all(|&s| s == 0.5));
    }

    #[test]
    fn sharp_vs_blurred_scores_high_and_swaps_exactly() {
        let a = texture(96, 96, 2);
        let b = gaussian_blur(&a, 3.0).unwrap();
        let scorer = ClassicalScorer::new(FocusMeasure::SumModifiedLaplacian, 32);
        let cfg = PipelineConfig::default();
        let map = generate_score_map(&a, &b, &scorer, &cfg).unwrap();
        let mut sum = 0.0;
        let mut n = 0;
        for r in 16..80 {
            for c in 16..80 {
                sum += map.get(r, c);
                n += 1;
            }
        }
        assert!(sum / n as f64 > 0.9);
        let swapped = generate_score_map(&b, &a, &scorer, &cfg).unwrap();
        for (x, y) in map.scores().iter().zip(swapped.scores()) {
            assert!((x + y - 1.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn stride_fills_from_lattice() {
        let a = texture(30, 33, 3);
        let b = gaussian_blur(&a, 1.5).unwrap();
        let scorer = ClassicalScorer::new(FocusMeasure::LocalVariance, 8);
        let full = generate_score_map(&a, &b, &scorer, &PipelineConfig::default()).unwrap();
        let cfg = PipelineConfig {
            stride: 4,
            ..PipelineConfig::default()
        };
        let coarse = generate_score_map(&a, &b, &scorer, &cfg).unwrap();
        for r in 0..30 {
            for c in 0..33 {
                let (lr, lc) = (nearest_lattice(r, 4, 30), nearest_lattice(c, 4, 33));
                assert_eq!(coarse.get(r, c), full.get(lr, lc));
                if r % 4 == 0 && c % 4 == 0 {
                    assert_eq!((lr, lc), (r, c));
                }
            }
        }
    }

    #[test]
    fn mean_focus_score_cases() {
        let uniform = ScoreMap::filled(7, 9, 0.3).unwrap();
        for l in 0..5 {
            assert!((mean_focus_score(&uniform, (0, 8), l) - 0.3).abs() < 1e-12);
        }
        let map = ScoreMap::new(5, 5, (0..25).map(|i| i as f64 / 24.0).collect()).unwrap();
        let direct: f64 = [6, 7, 8, 11, 12, 13, 16, 17, 18].iter().map(|&i| i as f64 / 24.0).sum::<f64>() / 9.0;
        assert!((mean_focus_score(&map, (2, 2), 1) - direct).abs() < 1e-12);
        assert_eq!(mean_focus_score(&map, (3, 1), 0), map.get(3, 1));
    }

    #[test]
    fn boundary_uniform_maps() {
        let cfg = PipelineConfig::default();
        assert_eq!(detect_boundary(&ScoreMap::filled(6, 6, 1.0).unwrap(), &cfg).count_ones(), 0);
        assert_eq!(detect_boundary(&ScoreMap::filled(6, 6, 0.5).unwrap(), &cfg).count_ones(), 36);
    }

    #[test]
    fn boundary_step_map_band() {
        let (h, w) = (12, 20);
        let map = ScoreMap::new(h, w, (0..h * w).map(|i| if i % w >= w / 2 { 1.0 } else { 0.0 }).collect()).unwrap();
        let cfg = PipelineConfig {
            window_half: 2,
            ..PipelineConfig::default()
        };
        let mask = detect_boundary(&map, &cfg);
        for r in 0..h {
            for c in 0..w {
                // column fraction of ones in the 5-wide window: k/5; strictly inside (0.2, 0.8)
                let k = (c as isize - 2..=c as isize + 2).filter(|&x| reflect_index(x, w) >= w / 2).count();
                let expect = 0.2 < k as f64 / 5.0 && (k as f64 / 5.0) < 0.8;
                assert_eq!(mask.get(r, c), expect, "({r},{c})");
            }
            // strict inequalities: the 1/5 and 4/5 columns are excluded
            let band: Vec<usize> = (0..w).filter(|&c| mask.get(r, c)).collect();
            assert_eq!(band, vec![w / 2 - 1, w / 2]);
        }
    }

    #[test]
    fn refine_cases() {
        let a = texture(16, 16, 4);
        let cfg = PipelineConfig::default();
        let map = random_map(16, 16, 5);
        let none = BinaryMask::filled(16, 16, false).unwrap();
        assert_eq!(refine(&map, &none, &a, &a, &ConstantScorer::new(0.3, 8), &cfg).unwrap(), map);
        let all = BinaryMask::filled(16, 16, true).unwrap();
        let out = refine(&map, &all, &a, &a, &ConstantScorer::new(0.3, 8), &cfg).unwrap();
        assert!(out.scores().iter().all(|&s| s == 0.3));
        let wrong = BinaryMask::filled(8, 16, true).unwrap();
        assert!(refine(&map, &wrong, &a, &a, &ConstantScorer::new(0.3, 8), &cfg).is_err());
    }

    #[test]
    fn binarize_tie_and_complement() {
        let map = ScoreMap::new(1, 4, vec![0.7, 0.5, 0.2, 0.49]).unwrap();
        let dm = binarize(&map, 0.5);
        assert_eq!(dm.values(), &[1, 1, 0, 0]);
        let comp = binarize(&map.complement(), 0.5);
        for i in [0, 2, 3] {
            assert_eq!(comp.values()[i], 1 - dm.values()[i]);
        }
    }

    #[test]
    fn fuse_degenerate_cases() {
        let a = Image::new(2, 2, 3, (0..12).map(|i| i as f64 / 11.0).collect()).unwrap();
        let b = Image::filled(2, 2, 3, 0.25).unwrap();
        assert_eq!(fuse(&a, &b, &BinaryMask::filled(2, 2, true).unwrap()).unwrap(), a);
        assert_eq!(fuse(&a, &b, &BinaryMask::filled(2, 2, false).unwrap()).unwrap(), b);
        let dm = BinaryMask::new(2, 2, vec![1, 0, 0, 1]).unwrap();
        assert_eq!(fuse(&a, &a, &dm).unwrap(), a);
        let f = fuse(&a, &b, &dm).unwrap();
        assert_eq!(f.pixel(0, 1), b.pixel(0, 1));
        assert_eq!(f.pixel(1, 1), a.pixel(1, 1));
        assert!(fuse(&a, &Image::filled(2, 2, 1, 0.1).unwrap(), &dm).is_err());
    }

    #[test]
    fn difference_arithmetic() {
        let f = Image::filled(3, 3, 1, 0.5).unwrap();
        let zero = difference_gray(&f, &f, DIFFERENCE_ALPHA).unwrap();
        assert!(zero.data().iter().all(|&v| v == 0.0));
        let colored = difference_map(&f, &f, DIFFERENCE_ALPHA).unwrap();
        assert!(colored.data().chunks(3).all(|px| px == colorize(0.0)));
        let s = Image::filled(3, 3, 1, 0.55).unwrap();
        let d = difference_gray(&f, &s, DIFFERENCE_ALPHA).unwrap();
        assert!(d.data().iter().all(|&v| (v - 0.5).abs() < 1e-12));
        let far = Image::filled(3, 3, 1, 0.7).unwrap();
        assert!(difference_gray(&f, &far, DIFFERENCE_ALPHA).unwrap().data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn identical_sources_fuse_to_source() {
        let a = texture(40, 40, 7);
        let scorer = ClassicalScorer::new(FocusMeasure::SumModifiedLaplacian, 16);
        let out = fuse_pipeline(&a, &a, &scorer, &scorer, &PipelineConfig::default()).unwrap();
        assert_eq!(out.fused, a);
        assert!(out.initial.scores().iter().all(|&s| s == 0.5));
        assert!(out.timings.to_string().lines().count() == 5);
    }

    #[test]
    fn config_validation() {
        assert!(PipelineConfig::default().validate().is_ok());
        let bad = PipelineConfig {
            band_low: 0.8,
            band_high: 0.2,
            ..PipelineConfig::default()
        };
        assert!(bad.validate().is_err());
        let odd = PipelineConfig {
            patch_size: 63,
            ..PipelineConfig::default()
        };
        assert!(odd.validate().is_err());
    }
}
