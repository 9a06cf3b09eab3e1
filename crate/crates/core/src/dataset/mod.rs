//! Synthetic multi-focus training data.
//!
//! A sharp foreground is matted over a background; each source image keeps
//! one layer sharp and blurs the other:
//!
//! ```text
//! img_a = fg * gt + blur(bg) * (1 - gt)
//! img_b = blur(fg) * gt + bg * (1 - gt)
//! ```
//!
//! Patch pairs are sampled from the composites, labeled by the ground truth at
//! their centre and augmented by channel swaps and the eight dihedral
//! transforms.

mod manifest;
pub mod synth;

use std::collections::HashMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::io::{load_image, load_mask, save_image_with_depth, save_mask, BitDepth};
use crate::raster::{
    check_patch_inputs, downsample_half, extract_patch, reflect_index, to_grayscale, BinaryMask, GroundTruthMask, Image,
    PatchPair,
};

pub use crate::filter::gaussian_blur;
pub use manifest::{Manifest, SampleRecord};

/// One synthetic multi-focus pair with its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct CompositePair {
    pub img_a: Image,
    pub img_b: Image,
    /// 1 where source A is the focused one.
    pub gt: GroundTruthMask,
    pub sigma: f64,
}

/// A patch pair labeled 1 when its centre is focused in channel A.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub patch: PatchPair,
    pub label: u8,
}

/// Blends the two layers through the ground truth. `fg`, `gt` and `bg` must
/// already share dimensions (see [`place_foreground`]).
pub fn composite_pair(fg: &Image, gt: &GroundTruthMask, bg: &Image, sigma: f64) -> Result<CompositePair> {
    fg.ensure_same_shape(bg)?;
    fg.ensure_dims(gt.dims())?;
    let fg_blur = gaussian_blur(fg, sigma)?;
    let bg_blur = gaussian_blur(bg, sigma)?;
    let ch = fg.channels();
    let n = fg.data().len();
    let mut a = Vec::with_capacity(n);
    let mut b = Vec::with_capacity(n);
    for i in 0..n {
        if gt.values()[i / ch] != 0 {
            a.push(fg.data()[i]);
            b.push(fg_blur.data()[i]);
        } else {
            a.push(bg_blur.data()[i]);
            b.push(bg.data()[i]);
        }
    }
    Ok(CompositePair {
        img_a: Image::from_raw(fg.height(), fg.width(), ch, a),
        img_b: Image::from_raw(fg.height(), fg.width(), ch, b),
        gt: gt.clone(),
        sigma,
    })
}

/// Places `fg` with its top-left corner at `offset` inside a `dims` canvas.
/// Texture outside the foreground rectangle is filled by mirroring the
/// foreground (so blurring near the rectangle edge sees plausible content);
/// the ground truth is zero there.
pub fn place_foreground(
    fg: &Image,
    gt: &GroundTruthMask,
    dims: (usize, usize),
    offset: (isize, isize),
) -> Result<(Image, GroundTruthMask)> {
    fg.ensure_dims(gt.dims())?;
    let (h, w) = dims;
    if h == 0 || w == 0 {
        return Err(Error::invalid("canvas dimensions must be positive"));
    }
    let (fh, fw) = fg.dims();
    let ch = fg.channels();
    let inside = |r: usize, c: usize| {
        let (sr, sc) = (r as isize - offset.0, c as isize - offset.1);
        (sr >= 0 && sc >= 0 && (sr as usize) < fh && (sc as usize) < fw).then_some((sr as usize, sc as usize))
    };
    let mut data = Vec::with_capacity(h * w * ch);
    for r in 0..h {
        let sr = reflect_index(r as isize - offset.0, fh);
        for c in 0..w {
            let sc = reflect_index(c as isize - offset.1, fw);
            data.extend_from_slice(fg.pixel(sr, sc));
        }
    }
    let mask = BinaryMask::from_fn(h, w, |r, c| inside(r, c).is_some_and(|(sr, sc)| gt.get(sr, sc)));
    Ok((Image::from_raw(h, w, ch, data), mask))
}

fn random_offset(fg_len: usize, bg_len: usize, rng: &mut impl Rng) -> isize {
    if fg_len <= bg_len {
        rng.random_range(0..=bg_len - fg_len) as isize
    } else {
        -(rng.random_range(0..=fg_len - bg_len) as isize)
    }
}

/// Halves the foreground and its matte, thresholds the matte and places both
/// at a random position inside a `dims` canvas.
pub fn prepare_foreground(
    fg: &Image,
    matte: &Image,
    dims: (usize, usize),
    half_resize: bool,
    rng: &mut impl Rng,
) -> Result<(Image, GroundTruthMask)> {
    fg.ensure_dims(matte.dims())?;
    let (fg, matte) = if half_resize {
        (downsample_half(fg)?, downsample_half(&to_grayscale(matte)?)?)
    } else {
        (fg.clone(), to_grayscale(matte)?)
    };
    let gt = BinaryMask::from_matte(&matte)?;
    let offset = (random_offset(fg.height(), dims.0, rng), random_offset(fg.width(), dims.1, rng));
    place_foreground(&fg, &gt, dims, offset)
}

/// A seeded synthetic composite of `height x width` with sigma drawn from `sigma_range`.
pub fn synthetic_composite(height: usize, width: usize, sigma_range: (f64, f64), seed: u64) -> Result<CompositePair> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (fg, matte) = synth::synthetic_foreground(2 * height, 2 * width, rng.random());
    let bg = synth::synthetic_background(height, width, rng.random());
    let (fg, gt) = prepare_foreground(&fg, &matte, (height, width), true, &mut rng)?;
    let sigma = draw_sigma(sigma_range, &mut rng)?;
    composite_pair(&fg, &gt, &bg, sigma)
}

fn draw_sigma(range: (f64, f64), rng: &mut impl Rng) -> Result<f64> {
    let (lo, hi) = range;
    if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
        return Err(Error::invalid(format!("sigma range [{lo}, {hi}] must be positive and ordered")));
    }
    Ok(if lo == hi { lo } else { rng.random_range(lo..=hi) })
}

fn sample_centers(dims: (usize, usize), n: usize, rng: &mut impl Rng) -> Vec<(usize, usize)> {
    (0..n).map(|_| (rng.random_range(0..dims.0), rng.random_range(0..dims.1))).collect()
}

/// `n_per_pair` patches at uniformly random centres, labeled by the ground truth.
pub fn sample_patches(pair: &CompositePair, n_per_pair: usize, p: usize, rng_seed: u64) -> Result<Vec<LabeledSample>> {
    let a = to_grayscale(&pair.img_a)?;
    let b = to_grayscale(&pair.img_b)?;
    check_patch_inputs(&a, &b, p)?;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    sample_centers(pair.gt.dims(), n_per_pair, &mut rng)
        .into_iter()
        .map(|center| {
            Ok(LabeledSample {
                patch: extract_patch(&a, &b, center, p)?,
                label: pair.gt.get(center.0, center.1) as u8,
            })
        })
        .collect()
}

/// Exchanges the channels and flips the label.
pub fn swap_augment(s: &LabeledSample) -> LabeledSample {
    LabeledSample {
        patch: s.patch.swapped(),
        label: 1 - s.label,
    }
}

/// Dihedral transform `k` in `0..8`: an optional horizontal flip (`k >= 4`)
/// followed by `k % 4` counter-clockwise quarter turns.
pub fn dihedral(patch: &PatchPair, k: u8) -> PatchPair {
    let p = patch.size();
    let turns = k % 4;
    let flip = k >= 4;
    patch.remap(|r, c| {
        // walk the output coordinate back through the rotations, then the flip
        let (mut r, mut c) = (r, c);
        for _ in 0..turns {
            (r, c) = (c, p - 1 - r);
        }
        if flip {
            c = p - 1 - c;
        }
        (r, c)
    })
}

/// The eight dihedral variants, identity first; labels are unchanged.
pub fn geometric_augment(s: &LabeledSample) -> Vec<LabeledSample> {
    (0..8)
        .map(|k| LabeledSample {
            patch: dihedral(&s.patch, k),
            label: s.label,
        })
        .collect()
}

/// Whether `ones` foreground pixels out of `total` is between 10% and 90% inclusive.
fn mixed_fraction(ones: usize, total: usize) -> bool {
    ones * 10 >= total && ones * 10 <= 9 * total
}

/// True when the ground-truth window under the patch is between 10% and 90%
/// foreground, inclusive.
pub fn is_boundary_sample(s: &LabeledSample, gt_window: &GroundTruthMask) -> bool {
    assert_eq!(
        gt_window.dims(),
        (s.patch.size(), s.patch.size()),
        "ground-truth window must match the patch footprint"
    );
    mixed_fraction(gt_window.count_ones(), s.patch.size() * s.patch.size())
}

/// Which augmentations are applied to every sampled patch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Augmentation {
    pub swap: bool,
    /// Dihedral variant ids (see [`dihedral`]); `[0]` means no geometric augmentation.
    pub dihedral: Vec<u8>,
}

impl Augmentation {
    pub fn full() -> Self {
        Self {
            swap: true,
            dihedral: (0..8).collect(),
        }
    }

    pub fn swap_only() -> Self {
        Self {
            swap: true,
            dihedral: vec![0],
        }
    }

    pub fn none() -> Self {
        Self {
            swap: false,
            dihedral: vec![0],
        }
    }

    /// Samples produced per sampled patch.
    pub fn factor(&self) -> usize {
        (1 + self.swap as usize) * self.dihedral.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.dihedral.is_empty() {
            return Err(Error::invalid("at least one dihedral variant is required (0 = identity)"));
        }
        let mut seen = [false; 8];
        for &k in &self.dihedral {
            if k >= 8 || std::mem::replace(&mut seen[k as usize], true) {
                return Err(Error::invalid(format!("dihedral variants must be distinct ids below 8, got {k}")));
            }
        }
        Ok(())
    }
}

impl Default for Augmentation {
    fn default() -> Self {
        Self::full()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusConfig {
    pub samples_per_pair: usize,
    pub patch_size: usize,
    pub sigma_range: (f64, f64),
    pub augmentation: Augmentation,
    /// Halve foregrounds (and mattes) before placement.
    pub half_resize: bool,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            samples_per_pair: 10,
            patch_size: 64,
            sigma_range: (1.5, 4.0),
            augmentation: Augmentation::full(),
            half_resize: true,
        }
    }
}

impl CorpusConfig {
    pub fn validate(&self) -> Result<()> {
        if self.samples_per_pair == 0 {
            return Err(Error::invalid("samples per pair must be at least 1"));
        }
        if self.patch_size == 0 || self.patch_size % 2 != 0 {
            return Err(Error::invalid(format!("patch size {} must be positive and even", self.patch_size)));
        }
        draw_sigma(self.sigma_range, &mut ChaCha8Rng::seed_from_u64(0))?;
        self.augmentation.validate()
    }
}

#[derive(Debug, Clone)]
pub struct ForegroundSource {
    pub name: String,
    pub image: Image,
    /// Soft or hard alpha matte; thresholded at 0.5.
    pub matte: Image,
}

#[derive(Debug, Clone)]
pub struct BackgroundSource {
    pub name: String,
    pub image: Image,
}

#[derive(Debug, Clone)]
pub struct Composite {
    pub id: String,
    pub pair: CompositePair,
}

#[derive(Debug, Clone)]
pub struct Corpus {
    pub composites: Vec<Composite>,
    pub full: Manifest,
    /// Records of `full` whose patch straddles the focus boundary.
    pub boundary: Manifest,
}

fn harmonize(fg: &Image, bg: &Image) -> Result<(Image, Image)> {
    if fg.channels() == bg.channels() {
        Ok((fg.clone(), bg.clone()))
    } else {
        Ok((to_grayscale(fg)?, to_grayscale(bg)?))
    }
}

/// Composites every foreground over every background (foreground-major
/// order), samples and augments patches. Each pair draws from its own
/// seeded stream, so the result does not depend on thread scheduling.
pub fn build_corpus(fgs: &[ForegroundSource], bgs: &[BackgroundSource], cfg: &CorpusConfig, seed: u64) -> Result<Corpus> {
    cfg.validate()?;
    if fgs.is_empty() || bgs.is_empty() {
        return Err(Error::invalid("corpus needs at least one foreground and one background"));
    }
    let p = cfg.patch_size;
    let per_pair: Vec<(Composite, Vec<SampleRecord>)> = (0..fgs.len() * bgs.len())
        .into_par_iter()
        .map(|k| {
            let (fg, bg) = (&fgs[k / bgs.len()], &bgs[k % bgs.len()]);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            let (fg_img, bg_img) = harmonize(&fg.image, &bg.image)?;
            let (placed, gt) = prepare_foreground(&fg_img, &fg.matte, bg_img.dims(), cfg.half_resize, &mut rng)?;
            let sigma = draw_sigma(cfg.sigma_range, &mut rng)?;
            let pair = composite_pair(&placed, &gt, &bg_img, sigma)?;
            if p > 2 * gt.height().min(gt.width()) {
                return Err(Error::invalid(format!("patch size {p} too large for background {}", bg.name)));
            }
            let mut records = Vec::with_capacity(cfg.samples_per_pair * cfg.augmentation.factor());
            for center in sample_centers(gt.dims(), cfg.samples_per_pair, &mut rng) {
                let label = gt.get(center.0, center.1) as u8;
                let boundary = mixed_fraction(gt.window(center, p).count_ones(), p * p);
                for swap in 0..=cfg.augmentation.swap as u8 {
                    for &d in &cfg.augmentation.dihedral {
                        records.push(SampleRecord {
                            composite: k,
                            center,
                            label: if swap == 1 { 1 - label } else { label },
                            aug: d + 8 * swap,
                            boundary,
                        });
                    }
                }
            }
            let id = format!("{}__{}", fg.name, bg.name);
            Ok((Composite { id, pair }, records))
        })
        .collect::<Result<_>>()?;

    let mut full = Manifest::new(seed, p);
    let mut composites = Vec::with_capacity(per_pair.len());
    for (composite, records) in per_pair {
        full.composites.push((composite.id.clone(), composite.pair.sigma));
        full.records.extend(records);
        composites.push(composite);
    }
    let boundary = full.with_records(full.records.iter().filter(|r| r.boundary).copied().collect());
    Ok(Corpus {
        composites,
        full,
        boundary,
    })
}

fn composite_paths(dir: &Path, id: &str) -> [std::path::PathBuf; 3] {
    [
        dir.join(format!("{id}_a.png")),
        dir.join(format!("{id}_b.png")),
        dir.join(format!("{id}_gt.png")),
    ]
}

/// Writes each composite as `<id>_a.png`, `<id>_b.png` (16-bit) and `<id>_gt.png`.
pub fn save_composites(dir: impl AsRef<Path>, composites: &[Composite]) -> Result<()> {
    let dir = dir.as_ref();
    for c in composites {
        let [a, b, gt] = composite_paths(dir, &c.id);
        save_image_with_depth(&c.pair.img_a, a, BitDepth::Sixteen)?;
        save_image_with_depth(&c.pair.img_b, b, BitDepth::Sixteen)?;
        save_mask(&c.pair.gt, gt)?;
    }
    Ok(())
}

struct StoreEntry {
    a: Image,
    b: Image,
    gt: GroundTruthMask,
}

/// Gray composites that patches are cut from.
pub struct CompositeStore {
    index: HashMap<String, usize>,
    entries: Vec<StoreEntry>,
}

impl CompositeStore {
    pub fn from_composites(composites: &[Composite]) -> Result<Self> {
        let mut store = Self {
            index: HashMap::new(),
            entries: Vec::new(),
        };
        for c in composites {
            store.insert(&c.id, &c.pair.img_a, &c.pair.img_b, c.pair.gt.clone())?;
        }
        Ok(store)
    }

    /// Loads the composites a manifest refers to from `dir` (see [`save_composites`]).
    pub fn load(dir: impl AsRef<Path>, manifest: &Manifest) -> Result<Self> {
        let dir = dir.as_ref();
        let mut store = Self {
            index: HashMap::new(),
            entries: Vec::new(),
        };
        for (id, _) in &manifest.composites {
            let [a, b, gt] = composite_paths(dir, id);
            store.insert(id, &load_image(a)?, &load_image(b)?, load_mask(gt)?)?;
        }
        Ok(store)
    }

    fn insert(&mut self, id: &str, a: &Image, b: &Image, gt: GroundTruthMask) -> Result<()> {
        a.ensure_same_shape(b)?;
        a.ensure_dims(gt.dims())?;
        self.index.insert(id.to_string(), self.entries.len());
        self.entries.push(StoreEntry {
            a: to_grayscale(a)?,
            b: to_grayscale(b)?,
            gt,
        });
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ground_truth(&self, id: &str) -> Option<&GroundTruthMask> {
        self.index.get(id).map(|&i| &self.entries[i].gt)
    }
}

/// Random-access collection of labeled samples.
pub trait SampleSource: Sync {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn patch_size(&self) -> usize;

    fn sample(&self, i: usize) -> LabeledSample;

    fn label(&self, i: usize) -> u8 {
        self.sample(i).label
    }
}

impl SampleSource for [LabeledSample] {
    fn len(&self) -> usize {
        <[LabeledSample]>::len(self)
    }

    fn patch_size(&self) -> usize {
        self.first().map_or(0, |s| s.patch.size())
    }

    fn sample(&self, i: usize) -> LabeledSample {
        self[i].clone()
    }

    fn label(&self, i: usize) -> u8 {
        self[i].label
    }
}

impl SampleSource for Vec<LabeledSample> {
    fn len(&self) -> usize {
        self.as_slice().len()
    }

    fn patch_size(&self) -> usize {
        SampleSource::patch_size(self.as_slice())
    }

    fn sample(&self, i: usize) -> LabeledSample {
        self[i].clone()
    }

    fn label(&self, i: usize) -> u8 {
        self[i].label
    }
}

/// Manifest records materialized from a [`CompositeStore`] on demand.
pub struct ManifestSource<'a> {
    store: &'a CompositeStore,
    patch_size: usize,
    records: Vec<(usize, SampleRecord)>,
}

impl<'a> ManifestSource<'a> {
    pub fn new(store: &'a CompositeStore, manifest: &Manifest) -> Result<Self> {
        let entry_of: Vec<usize> = manifest
            .composites
            .iter()
            .map(|(id, _)| {
                store
                    .index
                    .get(id)
                    .copied()
                    .ok_or_else(|| Error::invalid(format!("composite {id} is not loaded")))
            })
            .collect::<Result<_>>()?;
        let p = manifest.patch_size;
        let mut records = Vec::with_capacity(manifest.records.len());
        for r in &manifest.records {
            let e = &store.entries[entry_of[r.composite]];
            check_patch_inputs(&e.a, &e.b, p)?;
            if r.center.0 >= e.a.height() || r.center.1 >= e.a.width() {
                return Err(Error::invalid(format!(
                    "record centre {:?} outside composite {}",
                    r.center,
                    manifest.composite_id(r)
                )));
            }
            records.push((entry_of[r.composite], *r));
        }
        Ok(Self {
            store,
            patch_size: p,
            records,
        })
    }

    pub fn record(&self, i: usize) -> &SampleRecord {
        &self.records[i].1
    }
}

impl SampleSource for ManifestSource<'_> {
    fn len(&self) -> usize {
        self.records.len()
    }

    fn patch_size(&self) -> usize {
        self.patch_size
    }

    fn sample(&self, i: usize) -> LabeledSample {
        let (e, r) = &self.records[i];
        let entry = &self.store.entries[*e];
        let patch = extract_patch(&entry.a, &entry.b, r.center, self.patch_size).expect("validated on construction");
        let patch = dihedral(&patch, r.dihedral());
        LabeledSample {
            patch: if r.swapped() { patch.swapped() } else { patch },
            label: r.label,
        }
    }

    fn label(&self, i: usize) -> u8 {
        self.records[i].1.label
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::fuse;

    fn tex(h: usize, w: usize, seed: u64) -> Image {
        synth::value_noise(h, w, 3, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    #[test]
    fn degenerate_ground_truths() {
        let fg = tex(20, 20, 1);
        let bg = tex(20, 20, 2);
        let ones = BinaryMask::filled(20, 20, true).unwrap();
        let pair = composite_pair(&fg, &ones, &bg, 2.0).unwrap();
        assert_eq!(pair.img_a, fg);
        assert_eq!(pair.img_b, gaussian_blur(&fg, 2.0).unwrap());
        let zeros = BinaryMask::filled(20, 20, false).unwrap();
        let pair = composite_pair(&fg, &zeros, &bg, 2.0).unwrap();
        assert_eq!(pair.img_a, gaussian_blur(&bg, 2.0).unwrap());
        assert_eq!(pair.img_b, bg);
    }

    #[test]
    fn checkerboard_matches_formula() {
        let fg = Image::filled(8, 8, 1, 0.8).unwrap();
        let bg = Image::filled(8, 8, 1, 0.2).unwrap();
        let gt = BinaryMask::from_fn(8, 8, |r, c| (r / 2 + c / 2) % 2 == 0);
        let pair = composite_pair(&fg, &gt, &bg, 1.5).unwrap();
        let (fb, bb) = (gaussian_blur(&fg, 1.5).unwrap(), gaussian_blur(&bg, 1.5).unwrap());
        for r in 0..8 {
            for c in 0..8 {
                let g = gt.get(r, c) as u8 as f64;
                let a = fg.get(r, c, 0) * g + bb.get(r, c, 0) * (1.0 - g);
                let b = fb.get(r, c, 0) * g + bg.get(r, c, 0) * (1.0 - g);
                assert_eq!(pair.img_a.get(r, c, 0), a);
                assert_eq!(pair.img_b.get(r, c, 0), b);
            }
        }
    }

    #[test]
    fn complementarity_and_perfect_fusion() {
        let c = synthetic_composite(48, 40, (1.5, 4.0), 5).unwrap();
        assert!((1.5..=4.0).contains(&c.sigma));
        let ones = c.gt.count_ones();
        assert!(ones > 0 && ones < 48 * 40);
        let fused = fuse(&c.img_a, &c.img_b, &c.gt).unwrap();
        for r in 0..48 {
            for col in 0..40 {
                let expect = if c.gt.get(r, col) { c.img_a.get(r, col, 0) } else { c.img_b.get(r, col, 0) };
                assert_eq!(fused.get(r, col, 0), expect);
            }
        }
    }

    #[test]
    fn placement_crops_and_mirrors() {
        let fg = Image::from_fn(4, 4, |r, c| (r * 4 + c) as f64 / 15.0);
        let gt = BinaryMask::filled(4, 4, true).unwrap();
        let (img, mask) = place_foreground(&fg, &gt, (6, 7), (1, 2)).unwrap();
        assert_eq!(img.get(1, 2, 0), fg.get(0, 0, 0));
        assert_eq!(img.get(4, 5, 0), fg.get(3, 3, 0));
        assert_eq!(img.get(0, 2, 0), fg.get(1, 0, 0));
        assert_eq!(mask.count_ones(), 16);
        assert!(!mask.get(0, 2) && mask.get(1, 2) && !mask.get(5, 2));
        let (_, cropped) = place_foreground(&fg, &gt, (2, 2), (-1, -1)).unwrap();
        assert_eq!(cropped.count_ones(), 4);
    }

    #[test]
    fn sampling_labels_and_determinism() {
        let fg = tex(32, 32, 3);
        let ones = BinaryMask::filled(32, 32, true).unwrap();
        let pair = composite_pair(&fg, &ones, &fg, 2.0).unwrap();
        let s = sample_patches(&pair, 20, 8, 1).unwrap();
        assert!(s.iter().all(|x| x.label == 1));
        assert_eq!(s, sample_patches(&pair, 20, 8, 1).unwrap());
    }

    #[test]
    fn label_proportion_follows_area() {
        let fg = tex(64, 64, 4);
        let half = BinaryMask::from_fn(64, 64, |_, c| c < 32);
        let pair = composite_pair(&fg, &half, &fg, 2.0).unwrap();
        let s = sample_patches(&pair, 1000, 8, 7).unwrap();
        let ones = s.iter().filter(|x| x.label == 1).count() as f64;
        // binomial(1000, 0.5): three standard deviations ~ 47.4
        assert!((ones - 500.0).abs() <= 3.0 * (1000.0f64 * 0.25).sqrt());
    }

    fn random_sample(p: usize, seed: u64) -> LabeledSample {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = (0..p * p).map(|_| rng.random()).collect();
        let b = (0..p * p).map(|_| rng.random()).collect();
        LabeledSample {
            patch: PatchPair::new(p, a, b, (0, 0)).unwrap(),
            label: 1,
        }
    }

    #[test]
    fn swap_is_an_involution() {
        let s = random_sample(6, 1);
        let t = swap_augment(&s);
        assert_eq!(t.label, 0);
        assert_eq!(t.patch.channel_a(), s.patch.channel_b());
        assert_eq!(swap_augment(&t), s);
    }

    #[test]
    fn dihedral_group() {
        let s = random_sample(6, 2);
        let variants = geometric_augment(&s);
        assert_eq!(variants.len(), 8);
        assert_eq!(variants[0], s);
        for i in 0..8 {
            for j in i + 1..8 {
                assert_ne!(variants[i].patch, variants[j].patch);
            }
        }
        assert_eq!(dihedral(&dihedral(&s.patch, 2), 2), s.patch);
        // closure: composing any two variants is another variant
        for i in 0..8 {
            for j in 0..8 {
                let composed = dihedral(&dihedral(&s.patch, i), j);
                assert!(variants.iter().any(|v| v.patch == composed), "{i} then {j}");
            }
        }
        let flat = LabeledSample {
            patch: PatchPair::new(4, vec![0.3; 16], vec![0.6; 16], (0, 0)).unwrap(),
            label: 0,
        };
        assert!(geometric_augment(&flat).iter().all(|v| *v == flat));
    }

    #[test]
    fn boundary_threshold_counts() {
        let s = random_sample(64, 3);
        let window = |ones: usize| BinaryMask::new(64, 64, (0..4096).map(|i| (i < ones) as u8).collect()).unwrap();
        assert!(!is_boundary_sample(&s, &window(4096)));
        assert!(is_boundary_sample(&s, &window(2048)));
        assert!(is_boundary_sample(&s, &window(410)));
        assert!(!is_boundary_sample(&s, &window(409)));
        assert!(is_boundary_sample(&s, &window(4096 - 410)));
        assert!(!is_boundary_sample(&s, &window(4096 - 409)));
    }

    fn sources(nf: usize, nb: usize) -> (Vec<ForegroundSource>, Vec<BackgroundSource>) {
        let fgs = (0..nf)
            .map(|i| {
                let (image, matte) = synth::synthetic_foreground(64, 64, i as u64);
                ForegroundSource {
                    name: format!("fg{i}"),
                    image,
                    matte,
                }
            })
            .collect();
        let bgs = (0..nb)
            .map(|i| BackgroundSource {
                name: format!("bg{i}"),
                image: synth::synthetic_background(40, 48, 100 + i as u64),
            })
            .collect();
        (fgs, bgs)
    }

    #[test]
    fn corpus_counts_and_determinism() {
        let (fgs, bgs) = sources(2, 3);
        let cfg = CorpusConfig {
            samples_per_pair: 10,
            patch_size: 16,
            augmentation: Augmentation::swap_only(),
            ..CorpusConfig::default()
        };
        let corpus = build_corpus(&fgs, &bgs, &cfg, 11).unwrap();
        assert_eq!(corpus.full.len(), 120);
        assert_eq!(corpus.composites.len(), 6);
        let [zeros, ones] = corpus.full.label_counts();
        assert_eq!(zeros, ones);
        let again = build_corpus(&fgs, &bgs, &cfg, 11).unwrap();
        assert_eq!(again.full.to_text(), corpus.full.to_text());
        assert_eq!(again.boundary.to_text(), corpus.boundary.to_text());

        let full_cfg = CorpusConfig {
            samples_per_pair: 2,
            augmentation: Augmentation::full(),
            ..cfg
        };
        assert_eq!(build_corpus(&fgs, &bgs, &full_cfg, 1).unwrap().full.len(), 2 * 3 * 2 * 16);
    }

    #[test]
    fn boundary_manifest_is_verified_subset() {
        let (fgs, bgs) = sources(2, 2);
        let cfg = CorpusConfig {
            samples_per_pair: 200,
            patch_size: 16,
            augmentation: Augmentation::none(),
            ..CorpusConfig::default()
        };
        let corpus = build_corpus(&fgs, &bgs, &cfg, 3).unwrap();
        assert!(!corpus.boundary.is_empty());
        let store = CompositeStore::from_composites(&corpus.composites).unwrap();
        for r in &corpus.boundary.records {
            assert!(corpus.full.records.contains(r));
            let gt = store.ground_truth(corpus.boundary.composite_id(r)).unwrap();
            let ones = gt.window(r.center, 16).count_ones();
            assert!(ones * 10 >= 256 && ones * 10 <= 9 * 256);
        }
    }

    #[test]
    fn manifest_source_materializes_augmentations() {
        let (fgs, bgs) = sources(1, 1);
        let cfg = CorpusConfig {
            samples_per_pair: 3,
            patch_size: 8,
            ..CorpusConfig::default()
        };
        let corpus = build_corpus(&fgs, &bgs, &cfg, 5).unwrap();
        let store = CompositeStore::from_composites(&corpus.composites).unwrap();
        let src = ManifestSource::new(&store, &corpus.full).unwrap();
        assert_eq!(src.len(), 48);
        let base = src.sample(0);
        let pair = &corpus.composites[0].pair;
        let direct = extract_patch(&pair.img_a, &pair.img_b, src.record(0).center, 8).unwrap();
        assert_eq!(base.patch, direct);
        for i in 0..16 {
            let r = src.record(i);
            let s = src.sample(i);
            let mut expect = LabeledSample {
                patch: dihedral(&direct, r.dihedral()),
                label: base.label,
            };
            if r.swapped() {
                expect = swap_augment(&expect);
            }
            assert_eq!(s, expect);
        }
    }

    #[test]
    fn composites_round_trip_through_disk() {
        let (fgs, bgs) = sources(1, 2);
        let cfg = CorpusConfig {
            samples_per_pair: 4,
            patch_size: 8,
            augmentation: Augmentation::none(),
            ..CorpusConfig::default()
        };
        let corpus = build_corpus(&fgs, &bgs, &cfg, 5).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_composites(dir.path(), &corpus.composites).unwrap();
        let store = CompositeStore::load(dir.path(), &corpus.full).unwrap();
        assert_eq!(store.len(), 2);
        let src = ManifestSource::new(&store, &corpus.full).unwrap();
        assert_eq!(src.len(), 8);
        let mem = CompositeStore::from_composites(&corpus.composites).unwrap();
        let ref_src = ManifestSource::new(&mem, &corpus.full).unwrap();
        for i in 0..8 {
            let (x, y) = (src.sample(i), ref_src.sample(i));
            let err = x.patch.channel_a().iter().zip(y.patch.channel_a()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(err <= 1.0 / 65535.0);
        }
    }
}
