//! Two-channel residual classifier.
//!
//! The input stacks the A and B patches as two channels of one `p x p`
//! image. The network follows the CIFAR-style residual family with `6n + 2`
//! weighted layers: a 3x3 stem convolution, three stages of `n` basic blocks
//! (widths `w`, `2w`, `4w`; the first block of stages 2 and 3 downsamples with
//! stride 2), global average pooling and an affine head producing two logits.
//! Class 1 means "centre pixel focused in channel A". Shortcuts are
//! parameter-free: strided subsampling plus zero channel padding.
//!
//! Forward and backward passes are written out by hand for this fixed
//! architecture; convolutions go through im2col and a GEMM.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::raster::PatchPair;

use super::tensor::{Real, Tensor};
use super::FocusScorer;

const BN_EPS: f64 = 1e-5;

/// Hyperparameters fixing the network shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Architecture {
    /// Residual blocks per stage (`n`); the network has `6n + 2` weighted layers.
    pub blocks_per_stage: usize,
    pub patch_size: usize,
    pub widths: [usize; 3],
}

impl Architecture {
    pub const DEFAULT_WIDTHS: [usize; 3] = [16, 32, 64];

    pub fn new(blocks_per_stage: usize, patch_size: usize) -> Self {
        Self {
            blocks_per_stage,
            patch_size,
            widths: Self::DEFAULT_WIDTHS,
        }
    }

    /// `n = 9`: the 56-layer configuration on 64x64 patches.
    pub fn res56() -> Self {
        Self::new(9, 64)
    }

    pub fn weighted_layers(&self) -> usize {
        6 * self.blocks_per_stage + 2
    }

    pub fn validate(&self) -> Result<()> {
        if self.blocks_per_stage == 0 {
            return Err(Error::invalid("blocks per stage must be at least 1"));
        }
        if self.patch_size < 8 || self.patch_size % 4 != 0 {
            return Err(Error::invalid(format!(
                "patch size {} must be a multiple of 4 and at least 8",
                self.patch_size
            )));
        }
        if self.widths[0] == 0 || self.widths[1] < self.widths[0] || self.widths[2] < self.widths[1] {
            return Err(Error::invalid(format!(
                "stage widths {:?} must be positive and non-decreasing",
                self.widths
            )));
        }
        Ok(())
    }
}

/// How batch normalization obtains its statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormMode {
    /// Statistics of the current batch (training).
    Batch,
    /// Frozen running estimates (inference).
    Frozen,
}

#[derive(Debug, Clone, Copy)]
struct Conv {
    weight: usize,
    c_in: usize,
    c_out: usize,
    stride: usize,
}

#[derive(Debug, Clone, Copy)]
struct Norm {
    gamma: usize,
    beta: usize,
    stats: usize,
    channels: usize,
}

#[derive(Debug, Clone, Copy)]
struct Block {
    conv1: Conv,
    norm1: Norm,
    conv2: Conv,
    norm2: Norm,
}

#[derive(Debug, Clone)]
struct Layout {
    stem: Conv,
    stem_norm: Norm,
    blocks: Vec<Block>,
    fc_weight: usize,
    fc_bias: usize,
    shapes: Vec<Vec<usize>>,
    names: Vec<String>,
    norm_channels: Vec<usize>,
}

struct LayoutBuilder {
    shapes: Vec<Vec<usize>>,
    names: Vec<String>,
    norm_channels: Vec<usize>,
}

impl LayoutBuilder {
    fn tensor(&mut self, shape: Vec<usize>, name: String) -> usize {
        self.shapes.push(shape);
        self.names.push(name);
        self.shapes.len() - 1
    }

    fn conv(&mut self, name: &str, c_in: usize, c_out: usize, stride: usize) -> Conv {
        Conv {
            weight: self.tensor(vec![c_out, c_in, 3, 3], format!("{name}.weight")),
            c_in,
            c_out,
            stride,
        }
    }

    fn norm(&mut self, name: &str, channels: usize) -> Norm {
        self.norm_channels.push(channels);
        Norm {
            gamma: self.tensor(vec![channels], format!("{name}.gamma")),
            beta: self.tensor(vec![channels], format!("{name}.beta")),
            stats: self.norm_channels.len() - 1,
            channels,
        }
    }
}

impl Layout {
    /// Parameter tensors in declaration order: stem, blocks, head.
    fn build(arch: &Architecture) -> Layout {
        let mut b = LayoutBuilder {
            shapes: Vec::new(),
            names: Vec::new(),
            norm_channels: Vec::new(),
        };
        let w0 = arch.widths[0];
        let stem = b.conv("stem.conv", 2, w0, 1);
        let stem_norm = b.norm("stem.norm", w0);
        let mut blocks = Vec::new();
        let mut c_in = w0;
        for (stage, &width) in arch.widths.iter().enumerate() {
            for i in 0..arch.blocks_per_stage {
                let stride = if stage > 0 && i == 0 { 2 } else { 1 };
                let prefix = format!("stage{}.block{}", stage + 1, i);
                let conv1 = b.conv(&format!("{prefix}.conv1"), c_in, width, stride);
                let norm1 = b.norm(&format!("{prefix}.norm1"), width);
                let conv2 = b.conv(&format!("{prefix}.conv2"), width, width, 1);
                let norm2 = b.norm(&format!("{prefix}.norm2"), width);
                blocks.push(Block {
                    conv1,
                    norm1,
                    conv2,
                    norm2,
                });
                c_in = width;
            }
        }
        let fc_weight = b.tensor(vec![2, c_in], "head.weight".into());
        let fc_bias = b.tensor(vec![2], "head.bias".into());
        Layout {
            stem,
            stem_norm,
            blocks,
            fc_weight,
            fc_bias,
            shapes: b.shapes,
            names: b.names,
            norm_channels: b.norm_channels,
        }
    }
}

/// Per-tensor gradients, aligned with [`ScorerModel::params`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub tensors: Vec<Tensor<T>>,
}

/// Batch mean and biased variance observed by every normalization layer.
#[derive(Debug, Clone)]
pub struct BatchStats<T> {
    mean: Vec<Vec<T>>,
    var: Vec<Vec<T>>,
    count: usize,
}

/// The trainable two-channel residual scorer.
#[derive(Debug, Clone)]
pub struct ScorerModel<T: Real = f32> {
    arch: Architecture,
    layout: Layout,
    params: Vec<Tensor<T>>,
    running_mean: Vec<Vec<T>>,
    running_var: Vec<Vec<T>>,
}

struct NormCache<T> {
    xhat: Vec<T>,
    inv_std: Vec<T>,
}

struct BlockCache<T> {
    input: Vec<T>,
    in_dims: (usize, usize, usize),
    hidden: Vec<T>,
    mid_dims: (usize, usize, usize),
    norm1: NormCache<T>,
    norm2: NormCache<T>,
    output: Vec<T>,
}

struct ForwardCache<T> {
    input: Vec<T>,
    stem_norm: NormCache<T>,
    stem_out: Vec<T>,
    blocks: Vec<BlockCache<T>>,
    pooled: Vec<T>,
    final_dims: (usize, usize, usize),
}

impl<T: Real> ScorerModel<T> {
    /// Fresh model with fan-in scaled Gaussian weights and a zero head bias.
    pub fn new(arch: Architecture, seed: u64) -> Result<Self> {
        arch.validate()?;
        let layout = Layout::build(&arch);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::with_capacity(layout.shapes.len());
        for (shape, name) in layout.shapes.iter().zip(&layout.names) {
            let mut t = Tensor::zeros(shape);
            if name.ends_with(".weight") {
                let fan_in: usize = shape[1..].iter().product();
                let gain = if name.starts_with("head") { 1.0 } else { 2.0 };
                let normal = Normal::new(0.0, (gain / fan_in as f64).sqrt()).expect("valid std");
                t.data.iter_mut().for_each(|v| *v = T::from_f64(normal.sample(&mut rng)));
            } else if name.ends_with(".gamma") {
                t.data.iter_mut().for_each(|v| *v = T::ONE);
            }
            params.push(t);
        }
        let running_mean = layout.norm_channels.iter().map(|&c| vec![T::ZERO; c]).collect();
        let running_var = layout.norm_channels.iter().map(|&c| vec![T::ONE; c]).collect();
        Ok(Self {
            arch,
            layout,
            params,
            running_mean,
            running_var,
        })
    }

    /// Assembles a model from stored tensors, checking every shape.
    pub fn from_parts(
        arch: Architecture,
        params: Vec<Tensor<T>>,
        running_mean: Vec<Vec<T>>,
        running_var: Vec<Vec<T>>,
    ) -> Result<Self> {
        arch.validate()?;
        let layout = Layout::build(&arch);
        if params.len() != layout.shapes.len() {
            return Err(Error::dims(
                format!("{} parameter tensors", layout.shapes.len()),
                params.len(),
            ));
        }
        for ((p, shape), name) in params.iter().zip(&layout.shapes).zip(&layout.names) {
            if &p.shape != shape || p.data.len() != shape.iter().product::<usize>() {
                return Err(Error::dims(format!("{name} {shape:?}"), format!("{:?}", p.shape)));
            }
        }
        let stats_ok = |s: &Vec<Vec<T>>| {
            s.len() == layout.norm_channels.len()
                && s.iter().zip(&layout.norm_channels).all(|(v, &c)| v.len() == c)
        };
        if !stats_ok(&running_mean) || !stats_ok(&running_var) {
            return Err(Error::invalid("normalization statistics do not match the architecture"));
        }
        Ok(Self {
            arch,
            layout,
            params,
            running_mean,
            running_var,
        })
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn params(&self) -> &[Tensor<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.params
    }

    pub fn param_names(&self) -> &[String] {
        &self.layout.names
    }

    pub fn running_mean(&self) -> &[Vec<T>] {
        &self.running_mean
    }

    pub fn running_var(&self) -> &[Vec<T>] {
        &self.running_var
    }

    pub fn num_parameters(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    /// Index of the head bias tensor.
    pub fn head_indices(&self) -> (usize, usize) {
        (self.layout.fc_weight, self.layout.fc_bias)
    }

    pub fn cast<U: Real>(&self) -> ScorerModel<U> {
        ScorerModel {
            arch: self.arch,
            layout: self.layout.clone(),
            params: self.params.iter().map(Tensor::cast).collect(),
            running_mean: cast_stats(&self.running_mean),
            running_var: cast_stats(&self.running_var),
        }
    }

    fn pack(&self, patches: &[&PatchPair]) -> Result<Vec<T>> {
        let p = self.arch.patch_size;
        let mut input = Vec::with_capacity(patches.len() * 2 * p * p);
        for patch in patches {
            if patch.size() != p {
                return Err(Error::dims(format!("{p}x{p} patch"), format!("{0}x{0} patch", patch.size())));
            }
            input.extend(patch.channel_a().iter().map(|&v| T::from_f64(v)));
            input.extend(patch.channel_b().iter().map(|&v| T::from_f64(v)));
        }
        Ok(input)
    }

    /// Logits `(class 0, class 1)` for one patch with frozen statistics.
    pub fn forward(&self, patch: &PatchPair) -> Result<[T; 2]> {
        Ok(self.forward_batch(std::slice::from_ref(patch), NormMode::Frozen)?[0])
    }

    pub fn forward_batch(&self, patches: &[PatchPair], mode: NormMode) -> Result<Vec<[T; 2]>> {
        if patches.is_empty() {
            return Ok(Vec::new());
        }
        let refs: Vec<&PatchPair> = patches.iter().collect();
        let input = self.pack(&refs)?;
        let (logits, _, _) = self.run_forward(input, patches.len(), mode, false);
        Ok(logits)
    }

    /// Probability of class 1 ("centre focused in A") for one patch.
    pub fn focus_score(&self, patch: &PatchPair) -> Result<f64> {
        Ok(score_from_logits(self.forward(patch)?))
    }

    /// Mean softmax cross-entropy over a batch.
    pub fn loss(&self, patches: &[PatchPair], labels: &[u8], mode: NormMode) -> Result<f64> {
        check_labels(patches.len(), labels)?;
        let logits = self.forward_batch(patches, mode)?;
        Ok(mean_cross_entropy(&logits, labels))
    }

    /// Gradient of the softmax cross-entropy of one sample.
    pub fn gradient(&self, patch: &PatchPair, label: u8, mode: NormMode) -> Result<(f64, Gradients<T>)> {
        let (loss, grads, _) = self.batch_gradient(std::slice::from_ref(patch), &[label], mode)?;
        Ok((loss, grads))
    }

    /// Mean loss over the batch, its gradient with respect to every parameter
    /// tensor, and the batch statistics seen by the normalization layers.
    pub fn batch_gradient(
        &self,
        patches: &[PatchPair],
        labels: &[u8],
        mode: NormMode,
    ) -> Result<(f64, Gradients<T>, BatchStats<T>)> {
        check_labels(patches.len(), labels)?;
        if patches.is_empty() {
            return Err(Error::invalid("gradient of an empty batch"));
        }
        let refs: Vec<&PatchPair> = patches.iter().collect();
        let input = self.pack(&refs)?;
        let n = patches.len();
        let (logits, cache, stats) = self.run_forward(input, n, mode, true);
        let cache = cache.expect("cache requested");
        let loss = mean_cross_entropy(&logits, labels);
        let mut dlogits = Vec::with_capacity(2 * n);
        let inv_n = 1.0 / n as f64;
        for (l, &y) in logits.iter().zip(labels) {
            let p1 = score_from_logits(*l);
            let probs = [1.0 - p1, p1];
            for k in 0..2 {
                let onehot = if k == y as usize { 1.0 } else { 0.0 };
                dlogits.push(T::from_f64((probs[k] - onehot) * inv_n));
            }
        }
        let grads = self.run_backward(&cache, &dlogits, n, mode);
        Ok((loss, grads, stats))
    }

    /// Folds batch statistics into the running estimates (exponential moving
    /// average; variance uses the unbiased estimate).
    pub fn update_running_stats(&mut self, stats: &BatchStats<T>, momentum: f64) {
        let m = T::from_f64(momentum);
        let keep = T::ONE - m;
        let correction = if stats.count > 1 {
            T::from_f64(stats.count as f64 / (stats.count - 1) as f64)
        } else {
            T::ONE
        };
        for (layer, (mean, var)) in stats.mean.iter().zip(&stats.var).enumerate() {
            for c in 0..mean.len() {
                self.running_mean[layer][c] = keep * self.running_mean[layer][c] + m * mean[c];
                self.running_var[layer][c] = keep * self.running_var[layer][c] + m * var[c] * correction;
            }
        }
    }

    fn run_forward(
        &self,
        input: Vec<T>,
        n: usize,
        mode: NormMode,
        keep_cache: bool,
    ) -> (Vec<[T; 2]>, Option<ForwardCache<T>>, BatchStats<T>) {
        let p = self.arch.patch_size;
        let l = &self.layout;
        let mut stats = BatchStats {
            mean: vec![Vec::new(); l.norm_channels.len()],
            var: vec![Vec::new(); l.norm_channels.len()],
            count: 0,
        };

        let (mut x, h, w) = conv_forward(&input, n, 2, p, p, &self.params[l.stem.weight].data, l.stem);
        let stem_norm = self.norm_forward(&mut x, n, h * w, l.stem_norm, mode, &mut stats);
        relu_inplace(&mut x);
        let stem_out = if keep_cache { x.clone() } else { Vec::new() };

        let mut dims = (l.stem.c_out, h, w);
        let mut block_caches = Vec::new();
        for block in &l.blocks {
            let (c_in, h_in, w_in) = dims;
            let (mut hidden, ho, wo) = conv_forward(&x, n, c_in, h_in, w_in, &self.params[block.conv1.weight].data, block.conv1);
            let norm1 = self.norm_forward(&mut hidden, n, ho * wo, block.norm1, mode, &mut stats);
            relu_inplace(&mut hidden);
            let (mut out, _, _) = conv_forward(&hidden, n, block.conv2.c_in, ho, wo, &self.params[block.conv2.weight].data, block.conv2);
            let norm2 = self.norm_forward(&mut out, n, ho * wo, block.norm2, mode, &mut stats);
            shortcut_add(&x, n, c_in, h_in, w_in, &mut out, block.conv2.c_out, ho, wo, block.conv1.stride);
            relu_inplace(&mut out);
            let next = out;
            if keep_cache {
                block_caches.push(BlockCache {
                    input: std::mem::take(&mut x),
                    in_dims: dims,
                    hidden,
                    mid_dims: (block.conv2.c_out, ho, wo),
                    norm1,
                    norm2,
                    output: next.clone(),
                });
            }
            x = next;
            dims = (block.conv2.c_out, ho, wo);
        }

        let (c, h, w) = dims;
        let hw = h * w;
        let inv_hw = T::from_f64(1.0 / hw as f64);
        let mut pooled = vec![T::ZERO; n * c];
        for s in 0..n {
            for ch in 0..c {
                let plane = &x[(s * c + ch) * hw..(s * c + ch + 1) * hw];
                pooled[s * c + ch] = plane.iter().copied().sum::<T>() * inv_hw;
            }
        }
        let fw = &self.params[l.fc_weight].data;
        let fb = &self.params[l.fc_bias].data;
        let logits = (0..n)
            .map(|s| {
                let g = &pooled[s * c..(s + 1) * c];
                let mut out = [fb[0], fb[1]];
                for (k, o) in out.iter_mut().enumerate() {
                    let row = &fw[k * c..(k + 1) * c];
                    *o += row.iter().zip(g).map(|(&a, &b)| a * b).sum::<T>();
                }
                out
            })
            .collect();
        stats.count = n;
        let cache = keep_cache.then(|| ForwardCache {
            input,
            stem_norm,
            stem_out,
            blocks: block_caches,
            pooled,
            final_dims: dims,
        });
        (logits, cache, stats)
    }

    fn norm_forward(
        &self,
        x: &mut [T],
        n: usize,
        hw: usize,
        norm: Norm,
        mode: NormMode,
        stats: &mut BatchStats<T>,
    ) -> NormCache<T> {
        let c = norm.channels;
        let gamma = &self.params[norm.gamma].data;
        let beta = &self.params[norm.beta].data;
        let (mean, var) = match mode {
            NormMode::Batch => {
                let count = (n * hw) as f64;
                let mut mean = vec![T::ZERO; c];
                let mut var = vec![T::ZERO; c];
                for ch in 0..c {
                    let mut s = 0.0;
                    for smp in 0..n {
                        s += x[(smp * c + ch) * hw..(smp * c + ch + 1) * hw].iter().map(|v| v.to_f64()).sum::<f64>();
                    }
                    let mu = s / count;
                    let mut ss = 0.0;
                    for smp in 0..n {
                        ss += x[(smp * c + ch) * hw..(smp * c + ch + 1) * hw]
                            .iter()
                            .map(|v| {
                                let d = v.to_f64() - mu;
                                d * d
                            })
                            .sum::<f64>();
                    }
                    mean[ch] = T::from_f64(mu);
                    var[ch] = T::from_f64(ss / count);
                }
                (mean, var)
            }
            NormMode::Frozen => (self.running_mean[norm.stats].clone(), self.running_var[norm.stats].clone()),
        };
        let inv_std: Vec<T> = var.iter().map(|&v| T::from_f64(1.0 / (v.to_f64() + BN_EPS).sqrt())).collect();
        let mut xhat = vec![T::ZERO; x.len()];
        for smp in 0..n {
            for ch in 0..c {
                let range = (smp * c + ch) * hw..(smp * c + ch + 1) * hw;
                let (mu, is, g, b) = (mean[ch], inv_std[ch], gamma[ch], beta[ch]);
                for (v, xh) in x[range.clone()].iter_mut().zip(&mut xhat[range]) {
                    *xh = (*v - mu) * is;
                    *v = g * *xh + b;
                }
            }
        }
        if mode == NormMode::Batch {
            stats.mean[norm.stats] = mean;
            stats.var[norm.stats] = var;
        }
        NormCache { xhat, inv_std }
    }

    fn run_backward(&self, cache: &ForwardCache<T>, dlogits: &[T], n: usize, mode: NormMode) -> Gradients<T> {
        let l = &self.layout;
        let mut grads: Vec<Tensor<T>> = l.shapes.iter().map(|s| Tensor::zeros(s)).collect();
        let (c, h, w) = cache.final_dims;
        let hw = h * w;

        // head
        let fw = &self.params[l.fc_weight].data;
        let mut dpooled = vec![T::ZERO; n * c];
        for s in 0..n {
            let g = &cache.pooled[s * c..(s + 1) * c];
            for k in 0..2 {
                let d = dlogits[2 * s + k];
                grads[l.fc_bias].data[k] += d;
                for ch in 0..c {
                    grads[l.fc_weight].data[k * c + ch] += d * g[ch];
                    dpooled[s * c + ch] += d * fw[k * c + ch];
                }
            }
        }
        let inv_hw = T::from_f64(1.0 / hw as f64);
        let mut dx = vec![T::ZERO; n * c * hw];
        for (i, d) in dpooled.iter().enumerate() {
            let v = *d * inv_hw;
            dx[i * hw..(i + 1) * hw].iter_mut().for_each(|e| *e = v);
        }

        for (block, bc) in l.blocks.iter().zip(&cache.blocks).rev() {
            // output relu
            relu_backward(&mut dx, &bc.output);
            let (c_in, h_in, w_in) = bc.in_dims;
            let (c_mid, ho, wo) = bc.mid_dims;
            let mut dinput = vec![T::ZERO; n * c_in * h_in * w_in];
            shortcut_backward(&dx, n, c_mid, ho, wo, &mut dinput, c_in, h_in, w_in, block.conv1.stride);
            let dz2 = self.norm_backward(&dx, &bc.norm2, n, ho * wo, block.norm2, mode, &mut grads);
            let mut dhidden = conv_backward(
                &bc.hidden,
                n,
                c_mid,
                ho,
                wo,
                &self.params[block.conv2.weight].data,
                block.conv2,
                &dz2,
                &mut grads[block.conv2.weight].data,
                true,
            )
            .expect("input gradient requested");
            relu_backward(&mut dhidden, &bc.hidden);
            let dz1 = self.norm_backward(&dhidden, &bc.norm1, n, ho * wo, block.norm1, mode, &mut grads);
            let dconv_in = conv_backward(
                &bc.input,
                n,
                c_in,
                h_in,
                w_in,
                &self.params[block.conv1.weight].data,
                block.conv1,
                &dz1,
                &mut grads[block.conv1.weight].data,
                true,
            )
            .expect("input gradient requested");
            for (a, b) in dinput.iter_mut().zip(&dconv_in) {
                *a += *b;
            }
            dx = dinput;
        }

        let p = self.arch.patch_size;
        relu_backward(&mut dx, &cache.stem_out);
        let dz = self.norm_backward(&dx, &cache.stem_norm, n, p * p, l.stem_norm, mode, &mut grads);
        conv_backward(
            &cache.input,
            n,
            2,
            p,
            p,
            &self.params[l.stem.weight].data,
            l.stem,
            &dz,
            &mut grads[l.stem.weight].data,
            false,
        );
        Gradients { tensors: grads }
    }

    #[allow(clippy::too_many_arguments)]
    fn norm_backward(
        &self,
        dy: &[T],
        cache: &NormCache<T>,
        n: usize,
        hw: usize,
        norm: Norm,
        mode: NormMode,
        grads: &mut [Tensor<T>],
    ) -> Vec<T> {
        let c = norm.channels;
        let gamma = &self.params[norm.gamma].data;
        let mut dx = vec![T::ZERO; dy.len()];
        let count = (n * hw) as f64;
        for ch in 0..c {
            let mut sum_dy = 0.0;
            let mut sum_dy_xhat = 0.0;
            for smp in 0..n {
                let range = (smp * c + ch) * hw..(smp * c + ch + 1) * hw;
                for (d, xh) in dy[range.clone()].iter().zip(&cache.xhat[range]) {
                    sum_dy += d.to_f64();
                    sum_dy_xhat += d.to_f64() * xh.to_f64();
                }
            }
            grads[norm.gamma].data[ch] += T::from_f64(sum_dy_xhat);
            grads[norm.beta].data[ch] += T::from_f64(sum_dy);
            let scale = gamma[ch] * cache.inv_std[ch];
            for smp in 0..n {
                let range = (smp * c + ch) * hw..(smp * c + ch + 1) * hw;
                match mode {
                    NormMode::Frozen => {
                        for (o, d) in dx[range.clone()].iter_mut().zip(&dy[range]) {
                            *o = *d * scale;
                        }
                    }
                    NormMode::Batch => {
                        let mean_dy = T::from_f64(sum_dy / count);
                        let mean_dy_xhat = T::from_f64(sum_dy_xhat / count);
                        for ((o, d), xh) in dx[range.clone()].iter_mut().zip(&dy[range.clone()]).zip(&cache.xhat[range]) {
                            *o = scale * (*d - mean_dy - *xh * mean_dy_xhat);
                        }
                    }
                }
            }
        }
        dx
    }
}

fn cast_stats<T: Real, U: Real>(s: &[Vec<T>]) -> Vec<Vec<U>> {
    s.iter().map(|v| v.iter().map(|x| U::from_f64(x.to_f64())).collect()).collect()
}

fn check_labels(n: usize, labels: &[u8]) -> Result<()> {
    if labels.len() != n {
        return Err(Error::dims(format!("{n} labels"), labels.len()));
    }
    if labels.iter().any(|&y| y > 1) {
        return Err(Error::invalid("labels must be 0 or 1"));
    }
    Ok(())
}

/// Softmax probability of class 1.
pub(crate) fn score_from_logits<T: Real>(logits: [T; 2]) -> f64 {
    let d = logits[0].to_f64() - logits[1].to_f64();
    (1.0 / (1.0 + d.exp())).clamp(0.0, 1.0)
}

fn mean_cross_entropy<T: Real>(logits: &[[T; 2]], labels: &[u8]) -> f64 {
    let total: f64 = logits
        .iter()
        .zip(labels)
        .map(|(l, &y)| {
            let (a, b) = (l[0].to_f64(), l[1].to_f64());
            let m = a.max(b);
            let lse = m + ((a - m).exp() + (b - m).exp()).ln();
            lse - if y == 1 { b } else { a }
        })
        .sum();
    total / logits.len() as f64
}

fn relu_inplace<T: Real>(x: &mut [T]) {
    for v in x {
        if *v < T::ZERO {
            *v = T::ZERO;
        }
    }
}

fn relu_backward<T: Real>(d: &mut [T], activated: &[T]) {
    for (g, a) in d.iter_mut().zip(activated) {
        if !(*a > T::ZERO) {
            *g = T::ZERO;
        }
    }
}

fn out_size(size: usize, stride: usize) -> usize {
    (size - 1) / stride + 1
}

/// Unfolds one `c x h x w` sample into a `(c*9) x (ho*wo)` matrix for a 3x3
/// convolution with zero padding 1.
fn im2col<T: Real>(x: &[T], c: usize, h: usize, w: usize, stride: usize, col: &mut Vec<T>) -> (usize, usize) {
    let (ho, wo) = (out_size(h, stride), out_size(w, stride));
    col.clear();
    col.resize(c * 9 * ho * wo, T::ZERO);
    for ch in 0..c {
        let plane = &x[ch * h * w..(ch + 1) * h * w];
        for kr in 0..3 {
            for kc in 0..3 {
                let row = &mut col[((ch * 9) + kr * 3 + kc) * ho * wo..((ch * 9) + kr * 3 + kc + 1) * ho * wo];
                for oy in 0..ho {
                    let iy = (oy * stride + kr) as isize - 1;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let src = &plane[iy as usize * w..(iy as usize + 1) * w];
                    let dst = &mut row[oy * wo..(oy + 1) * wo];
                    for (ox, d) in dst.iter_mut().enumerate() {
                        let ix = (ox * stride + kc) as isize - 1;
                        if ix >= 0 && ix < w as isize {
                            *d = src[ix as usize];
                        }
                    }
                }
            }
        }
    }
    (ho, wo)
}

fn col2im_add<T: Real>(col: &[T], c: usize, h: usize, w: usize, stride: usize, dx: &mut [T]) {
    let (ho, wo) = (out_size(h, stride), out_size(w, stride));
    for ch in 0..c {
        let plane = &mut dx[ch * h * w..(ch + 1) * h * w];
        for kr in 0..3 {
            for kc in 0..3 {
                let row = &col[((ch * 9) + kr * 3 + kc) * ho * wo..((ch * 9) + kr * 3 + kc + 1) * ho * wo];
                for oy in 0..ho {
                    let iy = (oy * stride + kr) as isize - 1;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * w..(iy as usize + 1) * w];
                    for ox in 0..wo {
                        let ix = (ox * stride + kc) as isize - 1;
                        if ix >= 0 && ix < w as isize {
                            dst[ix as usize] += row[oy * wo + ox];
                        }
                    }
                }
            }
        }
    }
}

fn conv_forward<T: Real>(
    x: &[T],
    n: usize,
    c_in: usize,
    h: usize,
    w: usize,
    weight: &[T],
    conv: Conv,
) -> (Vec<T>, usize, usize) {
    debug_assert_eq!(c_in, conv.c_in);
    let (ho, wo) = (out_size(h, conv.stride), out_size(w, conv.stride));
    let k = c_in * 9;
    let mut out = vec![T::ZERO; n * conv.c_out * ho * wo];
    let mut col = Vec::new();
    for s in 0..n {
        im2col(&x[s * c_in * h * w..(s + 1) * c_in * h * w], c_in, h, w, conv.stride, &mut col);
        let dst = &mut out[s * conv.c_out * ho * wo..(s + 1) * conv.c_out * ho * wo];
        T::gemm(conv.c_out, k, ho * wo, T::ONE, weight, false, &col, false, T::ZERO, dst);
    }
    (out, ho, wo)
}

#[allow(clippy::too_many_arguments)]
fn conv_backward<T: Real>(
    x: &[T],
    n: usize,
    c_in: usize,
    h: usize,
    w: usize,
    weight: &[T],
    conv: Conv,
    dy: &[T],
    dweight: &mut [T],
    want_dx: bool,
) -> Option<Vec<T>> {
    let (ho, wo) = (out_size(h, conv.stride), out_size(w, conv.stride));
    let k = c_in * 9;
    let hw = ho * wo;
    let mut dx = want_dx.then(|| vec![T::ZERO; n * c_in * h * w]);
    let mut col = Vec::new();
    let mut dcol = vec![T::ZERO; k * hw];
    for s in 0..n {
        im2col(&x[s * c_in * h * w..(s + 1) * c_in * h * w], c_in, h, w, conv.stride, &mut col);
        let dys = &dy[s * conv.c_out * hw..(s + 1) * conv.c_out * hw];
        // dW (c_out x k) += dY (c_out x hw) * col^T (hw x k)
        T::gemm(conv.c_out, hw, k, T::ONE, dys, false, &col, true, T::ONE, dweight);
        if let Some(dx) = dx.as_mut() {
            // dcol (k x hw) = W^T (k x c_out) * dY (c_out x hw)
            T::gemm(k, conv.c_out, hw, T::ONE, weight, true, dys, false, T::ZERO, &mut dcol);
            col2im_add(&dcol, c_in, h, w, conv.stride, &mut dx[s * c_in * h * w..(s + 1) * c_in * h * w]);
        }
    }
    dx
}

#[allow(clippy::too_many_arguments)]
fn shortcut_add<T: Real>(
    x: &[T],
    n: usize,
    c_in: usize,
    h: usize,
    w: usize,
    out: &mut [T],
    c_out: usize,
    ho: usize,
    wo: usize,
    stride: usize,
) {
    for s in 0..n {
        for ch in 0..c_in.min(c_out) {
            let src = &x[(s * c_in + ch) * h * w..(s * c_in + ch + 1) * h * w];
            let dst = &mut out[(s * c_out + ch) * ho * wo..(s * c_out + ch + 1) * ho * wo];
            for oy in 0..ho {
                for ox in 0..wo {
                    dst[oy * wo + ox] += src[oy * stride * w + ox * stride];
                }
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn shortcut_backward<T: Real>(
    dout: &[T],
    n: usize,
    c_out: usize,
    ho: usize,
    wo: usize,
    dx: &mut [T],
    c_in: usize,
    h: usize,
    w: usize,
    stride: usize,
) {
    for s in 0..n {
        for ch in 0..c_in.min(c_out) {
            let src = &dout[(s * c_out + ch) * ho * wo..(s * c_out + ch + 1) * ho * wo];
            let dst = &mut dx[(s * c_in + ch) * h * w..(s * c_in + ch + 1) * h * w];
            for oy in 0..ho {
                for ox in 0..wo {
                    dst[oy * stride * w + ox * stride] += src[oy * wo + ox];
                }
            }
        }
    }
}

impl<T: Real> FocusScorer for ScorerModel<T> {
    fn patch_size(&self) -> usize {
        self.arch.patch_size
    }

    /// Panics if the patch size differs from the model's.
    fn score(&self, patch: &PatchPair) -> f64 {
        self.focus_score(patch).expect("patch size matches the model")
    }

    fn score_batch(&self, patches: &[PatchPair]) -> Vec<f64> {
        self.forward_batch(patches, NormMode::Frozen)
            .expect("patch size matches the model")
            .into_iter()
            .map(score_from_logits)
            .collect()
    }
}
