//! Raster types shared by every stage: images, score maps, binary masks and
//! two-channel patch pairs.
//!
//! All intensities are `f64` in `[0, 1]`; quantization only happens in [`crate::io`].

use crate::error::{Error, Result};

/// Row-major `height x width x channels` raster with intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::invalid("image dimensions must be positive"));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::UnsupportedChannels(channels));
        }
        if data.len() != height * width * channels {
            return Err(Error::dims(
                format!("{} samples", height * width * channels),
                format!("{} samples", data.len()),
            ));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::invalid(format!("intensity {v} outside [0, 1]")));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f64) -> Result<Self> {
        Self::new(height, width, channels, vec![value; height * width * channels])
    }

    /// Builds a single-channel image from a function of `(row, col)`; values are clamped.
    pub fn from_fn(height: usize, width: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c).clamp(0.0, 1.0));
            }
        }
        Self {
            height,
            width,
            channels: 1,
            data,
        }
    }

    /// Wraps data that is already known to satisfy the invariants.
    pub(crate) fn from_raw(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), height * width * channels);
        Self {
            height,
            width,
            channels,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, channel: usize) -> f64 {
        self.data[(row * self.width + col) * self.channels + channel]
    }

    /// Pixel `(row, col)` as a slice of `channels` values.
    #[inline]
    pub fn pixel(&self, row: usize, col: usize) -> &[f64] {
        let i = (row * self.width + col) * self.channels;
        &self.data[i..i + self.channels]
    }

    pub(crate) fn ensure_same_shape(&self, other: &Image) -> Result<()> {
        if self.dims() != other.dims() || self.channels != other.channels {
            return Err(Error::dims(self.shape_str(), other.shape_str()));
        }
        Ok(())
    }

    pub(crate) fn ensure_dims(&self, dims: (usize, usize)) -> Result<()> {
        if self.dims() != dims {
            return Err(Error::dims(
                format!("{}x{}", dims.0, dims.1),
                format!("{}x{}", self.height, self.width),
            ));
        }
        Ok(())
    }

    fn shape_str(&self) -> String {
        format!("{}x{}x{}", self.height, self.width, self.channels)
    }

    /// Splits the image into one single-channel image per channel.
    pub fn split_channels(&self) -> Vec<Image> {
        (0..self.channels)
            .map(|ch| {
                let data = self.data.iter().skip(ch).step_by(self.channels).copied().collect();
                Image::from_raw(self.height, self.width, 1, data)
            })
            .collect()
    }
}

/// Luma weights used for every RGB to gray conversion.
pub const LUMA: [f64; 3] = [0.299, 0.587, 0.114];

/// Converts to one channel with fixed luma weights. Gray input is returned unchanged.
pub fn to_grayscale(img: &Image) -> Result<Image> {
    match img.channels {
        1 => Ok(img.clone()),
        3 => {
            let data = img
                .data
                .chunks_exact(3)
                .map(|px| (LUMA[0] * px[0] + LUMA[1] * px[1] + LUMA[2] * px[2]).clamp(0.0, 1.0))
                .collect();
            Ok(Image::from_raw(img.height, img.width, 1, data))
        }
        n => Err(Error::UnsupportedChannels(n)),
    }
}

/// Halves both dimensions by averaging 2x2 blocks; a trailing odd row/column is dropped.
pub fn downsample_half(img: &Image) -> Result<Image> {
    let (h, w) = (img.height / 2, img.width / 2);
    if h == 0 || w == 0 {
        return Err(Error::invalid("image too small to halve"));
    }
    let ch = img.channels;
    let mut data = Vec::with_capacity(h * w * ch);
    for r in 0..h {
        for c in 0..w {
            for k in 0..ch {
                let s = img.get(2 * r, 2 * c, k)
                    + img.get(2 * r, 2 * c + 1, k)
                    + img.get(2 * r + 1, 2 * c, k)
                    + img.get(2 * r + 1, 2 * c + 1, k);
                data.push(s * 0.25);
            }
        }
    }
    Ok(Image::from_raw(h, w, ch, data))
}

/// Maps any integer index onto `0..len` by mirroring about the end samples
/// without repeating them (`d c b | a b c d | c b a`).
#[inline]
pub fn reflect_index(i: isize, len: usize) -> usize {
    if len == 1 {
        return 0;
    }
    let period = 2 * (len as isize - 1);
    let m = i.rem_euclid(period);
    if m >= len as isize {
        (period - m) as usize
    } else {
        m as usize
    }
}

/// Per-pixel focus scores in `[0, 1]`: probability that source A is focused.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMap {
    height: usize,
    width: usize,
    scores: Vec<f64>,
}

impl ScoreMap {
    pub fn new(height: usize, width: usize, scores: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::invalid("score map dimensions must be positive"));
        }
        if scores.len() != height * width {
            return Err(Error::dims(height * width, scores.len()));
        }
        if let Some(v) = scores.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::invalid(format!("score {v} outside [0, 1]")));
        }
        Ok(Self {
            height,
            width,
            scores,
        })
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Result<Self> {
        Self::new(height, width, vec![value; height * width])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.scores[row * self.width + col]
    }

    pub(crate) fn set(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!((0.0..=1.0).contains(&value));
        self.scores[row * self.width + col] = value;
    }

    /// Elementwise `1 - score`.
    pub fn complement(&self) -> ScoreMap {
        ScoreMap {
            height: self.height,
            width: self.width,
            scores: self.scores.iter().map(|s| 1.0 - s).collect(),
        }
    }
}

/// Row-major binary raster. Used for decision maps (1 = take source A),
/// boundary masks (1 = near the focused/defocused boundary) and ground truth
/// (1 = focused in source A).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    height: usize,
    width: usize,
    mask: Vec<u8>,
}

pub type DecisionMap = BinaryMask;
pub type BoundaryMask = BinaryMask;
pub type GroundTruthMask = BinaryMask;

impl BinaryMask {
    pub fn new(height: usize, width: usize, mask: Vec<u8>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::invalid("mask dimensions must be positive"));
        }
        if mask.len() != height * width {
            return Err(Error::dims(height * width, mask.len()));
        }
        if mask.iter().any(|&v| v > 1) {
            return Err(Error::invalid("mask values must be 0 or 1"));
        }
        Ok(Self {
            height,
            width,
            mask,
        })
    }

    pub fn filled(height: usize, width: usize, value: bool) -> Result<Self> {
        Self::new(height, width, vec![value as u8; height * width])
    }

    pub fn from_fn(height: usize, width: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let mut mask = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                mask.push(f(r, c) as u8);
            }
        }
        Self {
            height,
            width,
            mask,
        }
    }

    /// Thresholds a (possibly soft) matte: values `>= 0.5` become 1.
    pub fn from_matte(matte: &Image) -> Result<Self> {
        let gray = to_grayscale(matte)?;
        Ok(Self {
            height: gray.height,
            width: gray.width,
            mask: gray.data.iter().map(|&v| (v >= 0.5) as u8).collect(),
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn values(&self) -> &[u8] {
        &self.mask
    }

    pub(crate) fn values_mut(&mut self) -> &mut [u8] {
        &mut self.mask
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        self.mask[row * self.width + col] != 0
    }

    pub fn count_ones(&self) -> usize {
        self.mask.iter().filter(|&&v| v != 0).count()
    }

    pub fn invert(&self) -> BinaryMask {
        BinaryMask {
            height: self.height,
            width: self.width,
            mask: self.mask.iter().map(|&v| 1 - v).collect(),
        }
    }

    /// The mask as a gray image with values {0, 1}.
    pub fn to_image(&self) -> Image {
        Image::from_raw(
            self.height,
            self.width,
            1,
            self.mask.iter().map(|&v| v as f64).collect(),
        )
    }

    /// `p x p` window around `center` using the patch convention of [`extract_patch`].
    pub fn window(&self, center: (usize, usize), p: usize) -> BinaryMask {
        let (r0, c0) = window_origin(center, p);
        let mut mask = Vec::with_capacity(p * p);
        for dr in 0..p as isize {
            let r = reflect_index(r0 + dr, self.height);
            for dc in 0..p as isize {
                let c = reflect_index(c0 + dc, self.width);
                mask.push(self.mask[r * self.width + c]);
            }
        }
        BinaryMask {
            height: p,
            width: p,
            mask,
        }
    }
}

/// Two aligned `size x size` gray windows stacked as the channels of one patch.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchPair {
    size: usize,
    channel_a: Vec<f64>,
    channel_b: Vec<f64>,
    center: (usize, usize),
}

impl PatchPair {
    pub fn new(size: usize, channel_a: Vec<f64>, channel_b: Vec<f64>, center: (usize, usize)) -> Result<Self> {
        if size == 0 {
            return Err(Error::invalid("patch size must be positive"));
        }
        if channel_a.len() != size * size || channel_b.len() != size * size {
            return Err(Error::dims(
                size * size,
                format!("{}/{}", channel_a.len(), channel_b.len()),
            ));
        }
        Ok(Self {
            size,
            channel_a,
            channel_b,
            center,
        })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn channel_a(&self) -> &[f64] {
        &self.channel_a
    }

    pub fn channel_b(&self) -> &[f64] {
        &self.channel_b
    }

    pub fn center(&self) -> (usize, usize) {
        self.center
    }

    /// The same patch with channels A and B exchanged.
    pub fn swapped(&self) -> PatchPair {
        PatchPair {
            size: self.size,
            channel_a: self.channel_b.clone(),
            channel_b: self.channel_a.clone(),
            center: self.center,
        }
    }

    /// Applies the same pixel permutation to both channels.
    pub(crate) fn remap(&self, map: impl Fn(usize, usize) -> (usize, usize)) -> PatchPair {
        let p = self.size;
        let mut a = vec![0.0; p * p];
        let mut b = vec![0.0; p * p];
        for r in 0..p {
            for c in 0..p {
                let (sr, sc) = map(r, c);
                a[r * p + c] = self.channel_a[sr * p + sc];
                b[r * p + c] = self.channel_b[sr * p + sc];
            }
        }
        PatchPair {
            size: p,
            channel_a: a,
            channel_b: b,
            center: self.center,
        }
    }
}

/// Top-left image coordinate of the `p x p` window whose designated center is
/// `center`. The center sits at offset `(p/2, p/2)` inside the window.
#[inline]
pub fn window_origin(center: (usize, usize), p: usize) -> (isize, isize) {
    let half = (p / 2) as isize;
    (center.0 as isize - half, center.1 as isize - half)
}

/// Copies the `p x p` window of a gray image anchored at `origin`, reflecting
/// out-of-bounds indices.
pub(crate) fn reflect_window(img: &Image, origin: (isize, isize), p: usize, out: &mut Vec<f64>) {
    debug_assert_eq!(img.channels, 1);
    out.clear();
    let (h, w) = img.dims();
    let interior = origin.0 >= 0
        && origin.1 >= 0
        && origin.0 as usize + p <= h
        && origin.1 as usize + p <= w;
    if interior {
        let (r0, c0) = (origin.0 as usize, origin.1 as usize);
        for r in r0..r0 + p {
            out.extend_from_slice(&img.data[r * w + c0..r * w + c0 + p]);
        }
        return;
    }
    let cols: Vec<usize> = (0..p as isize).map(|dc| reflect_index(origin.1 + dc, w)).collect();
    for dr in 0..p as isize {
        let r = reflect_index(origin.0 + dr, h);
        let row = &img.data[r * w..(r + 1) * w];
        out.extend(cols.iter().map(|&c| row[c]));
    }
}

/// Extracts the two-channel `p x p` patch centred on `center` from aligned gray images.
pub fn extract_patch(img_a: &Image, img_b: &Image, center: (usize, usize), p: usize) -> Result<PatchPair> {
    check_patch_inputs(img_a, img_b, p)?;
    if center.0 >= img_a.height || center.1 >= img_a.width {
        return Err(Error::invalid(format!(
            "center {:?} outside {}x{} image",
            center, img_a.height, img_a.width
        )));
    }
    let origin = window_origin(center, p);
    let mut a = Vec::with_capacity(p * p);
    let mut b = Vec::with_capacity(p * p);
    reflect_window(img_a, origin, p, &mut a);
    reflect_window(img_b, origin, p, &mut b);
    Ok(PatchPair {
        size: p,
        channel_a: a,
        channel_b: b,
        center,
    })
}

pub(crate) fn check_patch_inputs(img_a: &Image, img_b: &Image, p: usize) -> Result<()> {
    img_a.ensure_same_shape(img_b)?;
    if img_a.channels != 1 {
        return Err(Error::invalid("patch extraction expects single-channel images"));
    }
    if p == 0 || p % 2 != 0 {
        return Err(Error::invalid(format!("patch size {p} must be positive and even")));
    }
    let limit = 2 * img_a.height.min(img_a.width);
    if p > limit {
        return Err(Error::invalid(format!(
            "patch size {p} exceeds twice the smaller image side ({limit})"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(h: usize, w: usize) -> Image {
        Image::from_fn(h, w, |r, c| (r * w + c) as f64 / (h * w) as f64)
    }

    // Mirror an index into [0, n) by repeated reflection, one step at a time.
    fn mirror_step(mut i: isize, n: isize) -> usize {
        loop {
            if i < 0 {
                i = -i;
            } else if i >= n {
                i = 2 * (n - 1) - i;
            } else {
                return i as usize;
            }
        }
    }

    #[test]
    fn reflect_matches_stepwise_mirror() {
        for n in 2..9usize {
            for i in -40isize..40 {
                assert_eq!(reflect_index(i, n), mirror_step(i, n as isize), "i={i} n={n}");
            }
        }
        assert_eq!(reflect_index(-5, 1), 0);
    }

    #[test]
    fn constant_image_gives_constant_patch() {
        let img = Image::filled(40, 50, 1, 0.5).unwrap();
        let p = extract_patch(&img, &img, (3, 47), 64).unwrap();
        assert!(p.channel_a().iter().chain(p.channel_b()).all(|&v| v == 0.5));
    }

    #[test]
    fn corner_patch_matches_mirrored_indexing() {
        let a = ramp(6, 6);
        let b = Image::from_fn(6, 6, |r, c| 1.0 - (r * 6 + c) as f64 / 36.0);
        let patch = extract_patch(&a, &b, (0, 0), 4).unwrap();
        // rows/cols -2..2 mirror to [2, 1, 0, 1]
        let idx = [2usize, 1, 0, 1];
        for (pr, &r) in idx.iter().enumerate() {
            for (pc, &c) in idx.iter().enumerate() {
                assert_eq!(patch.channel_a()[pr * 4 + pc], a.get(r, c, 0));
                assert_eq!(patch.channel_b()[pr * 4 + pc], b.get(r, c, 0));
            }
        }
        assert_eq!(patch.channel_a()[2 * 4 + 2], a.get(0, 0, 0));
    }

    #[test]
    fn interior_patch_is_plain_subwindow() {
        let a = ramp(32, 32);
        let patch = extract_patch(&a, &a, (16, 15), 8).unwrap();
        for r in 0..8 {
            for c in 0..8 {
                assert_eq!(patch.channel_a()[r * 8 + c], a.get(12 + r, 11 + c, 0));
            }
        }
    }

    #[test]
    fn interior_translation_shifts_window() {
        let a = ramp(40, 40);
        let p1 = extract_patch(&a, &a, (20, 20), 8).unwrap();
        let p2 = extract_patch(&a, &a, (22, 19), 8).unwrap();
        for r in 0..6 {
            for c in 1..8 {
                assert_eq!(p2.channel_a()[r * 8 + c], p1.channel_a()[(r + 2) * 8 + c - 1]);
            }
        }
    }

    #[test]
    fn extract_patch_errors() {
        let a = Image::filled(8, 8, 1, 0.1).unwrap();
        let b = Image::filled(8, 9, 1, 0.1).unwrap();
        assert!(matches!(extract_patch(&a, &b, (0, 0), 4), Err(Error::DimensionMismatch { .. })));
        assert!(extract_patch(&a, &a, (0, 0), 18).is_err());
        assert!(extract_patch(&a, &a, (0, 0), 16).is_ok());
        assert!(extract_patch(&a, &a, (0, 0), 5).is_err());
    }

    #[test]
    fn grayscale_luma() {
        let white = Image::filled(1, 1, 3, 1.0).unwrap();
        assert!((to_grayscale(&white).unwrap().get(0, 0, 0) - 1.0).abs() < 1e-12);
        let red = Image::new(1, 1, 3, vec![1.0, 0.0, 0.0]).unwrap();
        assert_eq!(to_grayscale(&red).unwrap().get(0, 0, 0), 0.299);
        let gray = ramp(3, 4);
        assert_eq!(to_grayscale(&gray).unwrap(), gray);
    }

    #[test]
    fn image_rejects_bad_input() {
        assert!(matches!(Image::new(1, 1, 2, vec![0.0; 2]), Err(Error::UnsupportedChannels(2))));
        assert!(Image::new(1, 1, 1, vec![1.5]).is_err());
        assert!(Image::new(2, 2, 1, vec![0.0; 3]).is_err());
    }

    #[test]
    fn downsample_averages_blocks() {
        let img = Image::new(2, 4, 1, vec![0.0, 1.0, 0.2, 0.2, 1.0, 0.0, 0.2, 0.2]).unwrap();
        let half = downsample_half(&img).unwrap();
        assert_eq!(half.dims(), (1, 2));
        assert!((half.get(0, 0, 0) - 0.5).abs() < 1e-12);
        assert!((half.get(0, 1, 0) - 0.2).abs() < 1e-12);
    }

    #[test]
    fn mask_window_uses_patch_convention() {
        let m = BinaryMask::from_fn(10, 10, |r, c| r >= 5 && c >= 5);
        let w = m.window((5, 5), 4);
        // window rows/cols 3..7 -> lower-right 2x2 quadrant plus (row>=5 & col>=5)
        assert_eq!(w.count_ones(), 4);
        assert!(w.get(2, 2));
    }
}
