//! Small, unoptimised reference forward passes: direct convolution, the
//! squeeze-and-excitation block and the Ghost module.
//!
//! Every pass has a `*_counted` twin that reports the number of
//! multiply-accumulates it actually performed. Padding is materialised before
//! convolving, so taps that land on padding are performed (and counted) like any
//! other; this is what makes the observed counts comparable with the analytical
//! formulas in [`crate::complexity`].

use rand::Rng;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NnError {
    #[error("feature map dims must be >= 1 and data must hold h*w*c values")]
    BadFeatureMap,
    #[error("weight array has {got} values, expected {expected}")]
    BadWeights { expected: usize, got: usize },
    #[error("channel mismatch: layer expects {expected} input channels, got {got}")]
    ChannelMismatch { expected: usize, got: usize },
    #[error("kernel {k}x{k} is larger than the padded {h}x{w} input")]
    KernelTooLarge { k: usize, h: usize, w: usize },
    #[error("stride must be >= 1")]
    ZeroStride,
    #[error("ghost ratio {s} does not divide {c2} output channels")]
    RatioDoesNotDivide { s: usize, c2: usize },
    #[error("SE reduction {r} does not divide {c} channels")]
    ReductionDoesNotDivide { r: usize, c: usize },
    #[error("cheap-operation kernel size must be odd, got {0}")]
    EvenCheapKernel(usize),
}

/// Dense `h x w x c` tensor, channel-last.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    h: usize,
    w: usize,
    c: usize,
    data: Vec<f64>,
}

impl FeatureMap {
    pub fn new(h: usize, w: usize, c: usize, data: Vec<f64>) -> Result<Self, NnError> {
        if h == 0 || w == 0 || c == 0 || data.len() != h * w * c {
            return Err(NnError::BadFeatureMap);
        }
        Ok(Self { h, w, c, data })
    }

    pub fn zeros(h: usize, w: usize, c: usize) -> Result<Self, NnError> {
        Self::new(h, w, c, vec![0.0; h * w * c])
    }

    pub fn filled(h: usize, w: usize, c: usize, value: f64) -> Result<Self, NnError> {
        Self::new(h, w, c, vec![value; h * w * c])
    }

    pub fn random<R: Rng + ?Sized>(h: usize, w: usize, c: usize, rng: &mut R) -> Result<Self, NnError> {
        Self::new(h, w, c, (0..h * w * c).map(|_| rng.random_range(-1.0..1.0)).collect())
    }

    pub fn h(&self) -> usize {
        self.h
    }

    pub fn w(&self) -> usize {
        self.w
    }

    pub fn c(&self) -> usize {
        self.c
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize, ch: usize) -> f64 {
        self.data[(i * self.w + j) * self.c + ch]
    }

    #[inline]
    fn at_mut(&mut self, i: usize, j: usize, ch: usize) -> &mut f64 {
        &mut self.data[(i * self.w + j) * self.c + ch]
    }

    /// Copy with a zero border of `pad` pixels.
    fn padded(&self, pad: usize) -> FeatureMap {
        if pad == 0 {
            return self.clone();
        }
        let (h, w) = (self.h + 2 * pad, self.w + 2 * pad);
        let mut out = FeatureMap { h, w, c: self.c, data: vec![0.0; h * w * self.c] };
        for i in 0..self.h {
            for j in 0..self.w {
                let src = (i * self.w + j) * self.c;
                let dst = ((i + pad) * w + j + pad) * self.c;
                out.data[dst..dst + self.c].copy_from_slice(&self.data[src..src + self.c]);
            }
        }
        out
    }

    /// Stacks `self` and `other` along the channel axis.
    pub fn concat_channels(&self, other: &FeatureMap) -> Result<FeatureMap, NnError> {
        if self.h != other.h || self.w != other.w {
            return Err(NnError::BadFeatureMap);
        }
        let c = self.c + other.c;
        let mut data = Vec::with_capacity(self.h * self.w * c);
        for p in 0..self.h * self.w {
            data.extend_from_slice(&self.data[p * self.c..(p + 1) * self.c]);
            data.extend_from_slice(&other.data[p * other.c..(p + 1) * other.c]);
        }
        FeatureMap::new(self.h, self.w, c, data)
    }
}

/// Full convolution weights, laid out `[out][in][ky][kx]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvKernelSet {
    out_channels: usize,
    in_channels: usize,
    k: usize,
    weights: Vec<f64>,
}

impl ConvKernelSet {
    pub fn new(out_channels: usize, in_channels: usize, k: usize, weights: Vec<f64>) -> Result<Self, NnError> {
        let expected = out_channels * in_channels * k * k;
        if out_channels == 0 || in_channels == 0 || k == 0 || weights.len() != expected {
            return Err(NnError::BadWeights { expected, got: weights.len() });
        }
        Ok(Self { out_channels, in_channels, k, weights })
    }

    pub fn random<R: Rng + ?Sized>(
        out_channels: usize,
        in_channels: usize,
        k: usize,
        rng: &mut R,
    ) -> Result<Self, NnError> {
        let n = out_channels * in_channels * k * k;
        Self::new(out_channels, in_channels, k, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    #[inline]
    pub fn at(&self, o: usize, i: usize, ky: usize, kx: usize) -> f64 {
        self.weights[((o * self.in_channels + i) * self.k + ky) * self.k + kx]
    }
}

/// One `k x k` kernel per channel, laid out `[channel][ky][kx]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthwiseKernels {
    channels: usize,
    k: usize,
    weights: Vec<f64>,
}

impl DepthwiseKernels {
    pub fn new(channels: usize, k: usize, weights: Vec<f64>) -> Result<Self, NnError> {
        let expected = channels * k * k;
        if k == 0 || weights.len() != expected {
            return Err(NnError::BadWeights { expected, got: weights.len() });
        }
        Ok(Self { channels, k, weights })
    }

    pub fn random<R: Rng + ?Sized>(channels: usize, k: usize, rng: &mut R) -> Result<Self, NnError> {
        Self::new(channels, k, (0..channels * k * k).map(|_| rng.random_range(-1.0..1.0)).collect())
    }

    /// Kernels that copy their input channel unchanged (center tap 1).
    pub fn identity(channels: usize, k: usize) -> Result<Self, NnError> {
        let mut weights = vec![0.0; channels * k * k];
        let center = (k / 2) * k + k / 2;
        for ch in 0..channels {
            weights[ch * k * k + center] = 1.0;
        }
        Self::new(channels, k, weights)
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn k(&self) -> usize {
        self.k
    }

    #[inline]
    fn at(&self, ch: usize, ky: usize, kx: usize) -> f64 {
        self.weights[(ch * self.k + ky) * self.k + kx]
    }
}

/// Fully connected weights for the excitation path of an SE block.
///
/// `fc1` is `(c/r) x c` row-major with bias `b1`, `fc2` is `c x (c/r)` with bias `b2`.
#[derive(Debug, Clone, PartialEq)]
pub struct SEWeights {
    c: usize,
    r: usize,
    fc1: Vec<f64>,
    b1: Vec<f64>,
    fc2: Vec<f64>,
    b2: Vec<f64>,
}

impl SEWeights {
    pub fn new(c: usize, r: usize, fc1: Vec<f64>, b1: Vec<f64>, fc2: Vec<f64>, b2: Vec<f64>) -> Result<Self, NnError> {
        if r == 0 || c == 0 || c % r != 0 {
            return Err(NnError::ReductionDoesNotDivide { r, c });
        }
        let hidden = c / r;
        for (got, expected) in [(fc1.len(), hidden * c), (b1.len(), hidden), (fc2.len(), c * hidden), (b2.len(), c)] {
            if got != expected {
                return Err(NnError::BadWeights { expected, got });
            }
        }
        Ok(Self { c, r, fc1, b1, fc2, b2 })
    }

    pub fn random<R: Rng + ?Sized>(c: usize, r: usize, rng: &mut R) -> Result<Self, NnError> {
        if r == 0 || c == 0 || c % r != 0 {
            return Err(NnError::ReductionDoesNotDivide { r, c });
        }
        let hidden = c / r;
        let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.random_range(-1.0..1.0)).collect() };
        let fc1 = draw(hidden * c);
        let b1 = draw(hidden);
        let fc2 = draw(c * hidden);
        let b2 = draw(c);
        Self::new(c, r, fc1, b1, fc2, b2)
    }

    pub fn c(&self) -> usize {
        self.c
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn hidden(&self) -> usize {
        self.c / self.r
    }
}

/// Intrinsic convolution plus cheap depthwise transforms.
///
/// The primary kernels produce `c2 / s` intrinsic maps. Each intrinsic map `m`
/// then feeds `s - 1` cheap `l x l` depthwise kernels, producing cheap channels
/// `m * (s - 1) .. (m + 1) * (s - 1)`. The output is the intrinsic maps followed
/// by all cheap maps.
#[derive(Debug, Clone, PartialEq)]
pub struct GhostModule {
    ratio: usize,
    primary: ConvKernelSet,
    cheap: DepthwiseKernels,
}

impl GhostModule {
    pub fn new(primary: ConvKernelSet, cheap: DepthwiseKernels, s: usize) -> Result<Self, NnError> {
        let intrinsic = primary.out_channels;
        if s == 0 {
            return Err(NnError::RatioDoesNotDivide { s, c2: intrinsic * s });
        }
        let expected = (s - 1) * intrinsic;
        if cheap.channels != expected {
            return Err(NnError::BadWeights { expected: expected * cheap.k * cheap.k, got: cheap.weights.len() });
        }
        if cheap.k % 2 == 0 {
            return Err(NnError::EvenCheapKernel(cheap.k));
        }
        Ok(Self { ratio: s, primary, cheap })
    }

    /// Random weights for a module with `c2` outputs, ratio `s`, kernels `n` and `l`.
    pub fn random<R: Rng + ?Sized>(
        c1: usize,
        c2: usize,
        n: usize,
        s: usize,
        l: usize,
        rng: &mut R,
    ) -> Result<Self, NnError> {
        if s == 0 || c2 % s != 0 {
            return Err(NnError::RatioDoesNotDivide { s, c2 });
        }
        let intrinsic = c2 / s;
        let primary = ConvKernelSet::random(intrinsic, c1, n, rng)?;
        let cheap = DepthwiseKernels::random((s - 1) * intrinsic, l, rng)?;
        Self::new(primary, cheap, s)
    }

    pub fn out_channels(&self) -> usize {
        self.primary.out_channels * self.ratio
    }

    pub fn primary(&self) -> &ConvKernelSet {
        &self.primary
    }

    pub fn cheap(&self) -> &DepthwiseKernels {
        &self.cheap
    }
}

/// An output together with the multiply-accumulates spent producing it.
#[derive(Debug, Clone, PartialEq)]
pub struct Counted<T> {
    pub output: T,
    pub macs: u64,
}

/// Output spatial size of a convolution.
pub fn conv_out_dim(dim: usize, k: usize, stride: usize, pad: usize) -> Option<usize> {
    let padded = dim + 2 * pad;
    if stride == 0 || padded < k {
        None
    } else {
        Some((padded - k) / stride + 1)
    }
}

fn conv_impl(x: &FeatureMap, k: &ConvKernelSet, stride: usize, pad: usize, macs: &mut u64) -> Result<FeatureMap, NnError> {
    if k.in_channels != x.c {
        return Err(NnError::ChannelMismatch { expected: k.in_channels, got: x.c });
    }
    if stride == 0 {
        return Err(NnError::ZeroStride);
    }
    let too_large = NnError::KernelTooLarge { k: k.k, h: x.h + 2 * pad, w: x.w + 2 * pad };
    let h2 = conv_out_dim(x.h, k.k, stride, pad).ok_or(too_large.clone())?;
    let w2 = conv_out_dim(x.w, k.k, stride, pad).ok_or(too_large)?;
    let xp = x.padded(pad);
    let mut out = FeatureMap::zeros(h2, w2, k.out_channels)?;
    let mut count = 0u64;
    for i in 0..h2 {
        for j in 0..w2 {
            for o in 0..k.out_channels {
                let mut acc = 0.0;
                for ci in 0..k.in_channels {
                    for ky in 0..k.k {
                        for kx in 0..k.k {
                            acc += k.at(o, ci, ky, kx) * xp.at(i * stride + ky, j * stride + kx, ci);
                            count += 1;
                        }
                    }
                }
                *out.at_mut(i, j, o) = acc;
            }
        }
    }
    *macs += count;
    Ok(out)
}

/// Stride-1, same-padded depthwise convolution where output channel `t` reads
/// input channel `t / group`.
fn depthwise_impl(x: &FeatureMap, dk: &DepthwiseKernels, group: usize, macs: &mut u64) -> Result<FeatureMap, NnError> {
    if dk.channels != x.c * group {
        return Err(NnError::ChannelMismatch { expected: dk.channels / group, got: x.c });
    }
    let pad = dk.k / 2;
    let xp = x.padded(pad);
    let mut out = FeatureMap::zeros(x.h, x.w, dk.channels)?;
    let mut count = 0u64;
    for i in 0..x.h {
        for j in 0..x.w {
            for t in 0..dk.channels {
                let src = t / group;
                let mut acc = 0.0;
                for ky in 0..dk.k {
                    for kx in 0..dk.k {
                        acc += dk.at(t, ky, kx) * xp.at(i + ky, j + kx, src);
                        count += 1;
                    }
                }
                *out.at_mut(i, j, t) = acc;
            }
        }
    }
    *macs += count;
    Ok(out)
}

/// Cross-correlation with zero padding; output dims `floor((d + 2 pad - k) / stride) + 1`.
pub fn conv2d_direct(x: &FeatureMap, k: &ConvKernelSet, stride: usize, pad: usize) -> Result<FeatureMap, NnError> {
    Ok(conv2d_counted(x, k, stride, pad)?.output)
}

pub fn conv2d_counted(x: &FeatureMap, k: &ConvKernelSet, stride: usize, pad: usize) -> Result<Counted<FeatureMap>, NnError> {
    let mut macs = 0;
    let output = conv_impl(x, k, stride, pad, &mut macs)?;
    Ok(Counted { output, macs })
}

/// Global average pool: one value per channel.
pub fn squeeze(x: &FeatureMap) -> Vec<f64> {
    let mut sums = vec![0.0; x.c];
    for p in 0..x.h * x.w {
        for (ch, s) in sums.iter_mut().enumerate() {
            *s += x.data[p * x.c + ch];
        }
    }
    let n = (x.h * x.w) as f64;
    sums.into_iter().map(|s| s / n).collect()
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

fn excite_impl(z: &[f64], w: &SEWeights, macs: &mut u64) -> Vec<f64> {
    let hidden = w.hidden();
    let mut mid = vec![0.0; hidden];
    for (u, m) in mid.iter_mut().enumerate() {
        let row = &w.fc1[u * w.c..(u + 1) * w.c];
        let acc: f64 = row.iter().zip(z).map(|(a, b)| a * b).sum::<f64>() + w.b1[u];
        *m = acc.max(0.0);
    }
    let mut gate = vec![0.0; w.c];
    for (ch, g) in gate.iter_mut().enumerate() {
        let row = &w.fc2[ch * hidden..(ch + 1) * hidden];
        let acc: f64 = row.iter().zip(&mid).map(|(a, b)| a * b).sum::<f64>() + w.b2[ch];
        *g = sigmoid(acc);
    }
    *macs += 2 * (hidden * w.c) as u64;
    gate
}

/// Per-channel gates in `(0, 1)`: FC, rectifier, FC, logistic sigmoid.
pub fn excite(z: &[f64], w: &SEWeights) -> Vec<f64> {
    excite_impl(z, w, &mut 0)
}

/// Squeeze-and-excitation: scales every channel of `x` by its learned gate.
pub fn se_forward(x: &FeatureMap, w: &SEWeights) -> Result<FeatureMap, NnError> {
    Ok(se_counted(x, w)?.output)
}

/// Counts the two FC layers and the channel-wise rescale; pooling adds are not MACs.
pub fn se_counted(x: &FeatureMap, w: &SEWeights) -> Result<Counted<FeatureMap>, NnError> {
    if w.c != x.c {
        return Err(NnError::ChannelMismatch { expected: w.c, got: x.c });
    }
    let mut macs = 0;
    let gate = excite_impl(&squeeze(x), w, &mut macs);
    Ok(Counted { output: scale_channels(x, &gate, &mut macs), macs })
}

/// Multiplies channel `c` of `x` by `gate[c]`.
pub fn scale_channels_by(x: &FeatureMap, gate: &[f64]) -> FeatureMap {
    scale_channels(x, gate, &mut 0)
}

fn scale_channels(x: &FeatureMap, gate: &[f64], macs: &mut u64) -> FeatureMap {
    let data = x.data.iter().enumerate().map(|(idx, v)| v * gate[idx % x.c]).collect();
    *macs += x.data.len() as u64;
    FeatureMap { h: x.h, w: x.w, c: x.c, data }
}

/// Ghost module forward pass.
pub fn ghost_forward(x: &FeatureMap, g: &GhostModule, stride: usize, pad: usize) -> Result<FeatureMap, NnError> {
    Ok(ghost_counted(x, g, stride, pad)?.output)
}

pub fn ghost_counted(x: &FeatureMap, g: &GhostModule, stride: usize, pad: usize) -> Result<Counted<FeatureMap>, NnError> {
    let mut macs = 0;
    let intrinsic = conv_impl(x, &g.primary, stride, pad, &mut macs)?;
    if g.ratio == 1 {
        return Ok(Counted { output: intrinsic, macs });
    }
    let cheap = depthwise_impl(&intrinsic, &g.cheap, g.ratio - 1, &mut macs)?;
    Ok(Counted { output: intrinsic.concat_channels(&cheap)?, macs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Naive oracle: iterate output pixels and kernel taps, skipping reads that
    /// fall outside the unpadded input.
    fn oracle_conv(x: &FeatureMap, k: &ConvKernelSet, stride: usize, pad: usize) -> Vec<f64> {
        let h2 = (x.h() + 2 * pad - k.k()) / stride + 1;
        let w2 = (x.w() + 2 * pad - k.k()) / stride + 1;
        let mut out = vec![0.0; h2 * w2 * k.out_channels()];
        for o in 0..k.out_channels() {
            for i in 0..h2 {
                for j in 0..w2 {
                    let mut s = 0.0;
                    for ci in 0..k.in_channels() {
                        for ky in 0..k.k() {
                            for kx in 0..k.k() {
                                let yi = (i * stride + ky) as isize - pad as isize;
                                let xj = (j * stride + kx) as isize - pad as isize;
                                if yi < 0 || xj < 0 || yi >= x.h() as isize || xj >= x.w() as isize {
                                    continue;
                                }
                                s += k.at(o, ci, ky, kx) * x.at(yi as usize, xj as usize, ci);
                            }
                        }
                    }
                    out[(i * w2 + j) * k.out_channels() + o] = s;
                }
            }
        }
        out
    }

    #[test]
    fn one_by_one_identity() {
        let x = FeatureMap::new(2, 3, 1, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let k = ConvKernelSet::new(1, 1, 1, vec![1.0]).unwrap();
        assert_eq!(conv2d_direct(&x, &k, 1, 0).unwrap(), x);
    }

    #[test]
    fn all_ones_three_by_three() {
        let x = FeatureMap::filled(3, 3, 1, 1.0).unwrap();
        let k = ConvKernelSet::new(1, 1, 3, vec![1.0; 9]).unwrap();
        let y = conv2d_direct(&x, &k, 1, 0).unwrap();
        assert_eq!((y.h(), y.w(), y.c()), (1, 1, 1));
        assert_eq!(y.data(), &[9.0]);
    }

    #[test]
    fn conv_matches_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = FeatureMap::random(5, 5, 2, &mut rng).unwrap();
        let k = ConvKernelSet::random(4, 2, 3, &mut rng).unwrap();
        for (stride, pad) in [(1, 0), (1, 1), (2, 1), (2, 0), (3, 2)] {
            let y = conv2d_direct(&x, &k, stride, pad).unwrap();
            let expected = oracle_conv(&x, &k, stride, pad);
            assert_eq!(y.data().len(), expected.len());
            for (a, b) in y.data().iter().zip(&expected) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn conv_errors() {
        let x = FeatureMap::zeros(2, 2, 3).unwrap();
        let k = ConvKernelSet::new(1, 2, 1, vec![0.0; 2]).unwrap();
        assert_eq!(conv2d_direct(&x, &k, 1, 0), Err(NnError::ChannelMismatch { expected: 2, got: 3 }));
        let k = ConvKernelSet::new(1, 3, 5, vec![0.0; 75]).unwrap();
        assert!(matches!(conv2d_direct(&x, &k, 1, 1), Err(NnError::KernelTooLarge { .. })));
        assert!(conv2d_direct(&x, &k, 1, 2).is_ok());
        assert!(FeatureMap::new(2, 2, 1, vec![0.0; 3]).is_err());
    }

    #[test]
    fn conv_mac_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = FeatureMap::random(16, 16, 3, &mut rng).unwrap();
        let k = ConvKernelSet::random(16, 3, 3, &mut rng).unwrap();
        assert_eq!(conv2d_counted(&x, &k, 1, 1).unwrap().macs, 110_592);

        let g = GhostModule::random(3, 16, 3, 2, 3, &mut rng).unwrap();
        assert_eq!(ghost_counted(&x, &g, 1, 1).unwrap().macs, 73_728);

        let one = FeatureMap::filled(1, 1, 1, 2.0).unwrap();
        let k = ConvKernelSet::new(1, 1, 1, vec![3.0]).unwrap();
        let c = conv2d_counted(&one, &k, 1, 0).unwrap();
        assert_eq!((c.macs, c.output.data()[0]), (1, 6.0));
    }

    #[test]
    fn squeeze_is_mean() {
        let x = FeatureMap::new(2, 2, 1, vec![1.0, 3.0, 5.0, 7.0]).unwrap();
        assert_eq!(squeeze(&x), vec![4.0]);
    }

    #[test]
    fn se_with_half_gates_halves_input() {
        // zero weights and biases give sigmoid(0) = 0.5 on every channel
        let c = 4;
        let w = SEWeights::new(c, 2, vec![0.0; 8], vec![0.0; 2], vec![0.0; 8], vec![0.0; 4]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = FeatureMap::random(3, 3, c, &mut rng).unwrap();
        let y = se_forward(&x, &w).unwrap();
        for (a, b) in y.data().iter().zip(x.data()) {
            assert_eq!(*a, 0.5 * b);
        }
    }

    #[test]
    fn se_zero_input_gives_zero_output() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let w = SEWeights::random(8, 4, &mut rng).unwrap();
        let x = FeatureMap::zeros(3, 2, 8).unwrap();
        assert_eq!(squeeze(&x), vec![0.0; 8]);
        assert_eq!(se_forward(&x, &w).unwrap(), x);
    }

    #[test]
    fn se_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        assert!(matches!(SEWeights::random(6, 4, &mut rng), Err(NnError::ReductionDoesNotDivide { .. })));
        let w = SEWeights::random(8, 4, &mut rng).unwrap();
        let x = FeatureMap::zeros(3, 2, 4).unwrap();
        assert!(matches!(se_forward(&x, &w), Err(NnError::ChannelMismatch { .. })));
    }

    #[test]
    fn se_scales_each_channel_inside_unit_interval() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let c = 16;
            let w = SEWeights::random(c, 4, &mut rng).unwrap();
            let x = FeatureMap::random(4, 5, c, &mut rng).unwrap();
            let y = se_forward(&x, &w).unwrap();
            assert_eq!((y.h(), y.w(), y.c()), (x.h(), x.w(), x.c()));
            let gate = excite(&squeeze(&x), &w);
            for ch in 0..c {
                assert!(gate[ch] > 0.0 && gate[ch] < 1.0);
                for p in 0..x.h() * x.w() {
                    assert_eq!(y.data()[p * c + ch], x.data()[p * c + ch] * gate[ch]);
                }
            }
        }
    }

    #[test]
    fn ghost_with_ratio_one_is_plain_conv() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = FeatureMap::random(6, 5, 3, &mut rng).unwrap();
        let g = GhostModule::random(3, 8, 3, 1, 3, &mut rng).unwrap();
        let plain = conv2d_direct(&x, g.primary(), 1, 1).unwrap();
        assert_eq!(ghost_forward(&x, &g, 1, 1).unwrap(), plain);
    }

    #[test]
    fn ghost_identity_cheap_duplicates_intrinsic() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = FeatureMap::random(5, 5, 3, &mut rng).unwrap();
        let primary = ConvKernelSet::random(4, 3, 3, &mut rng).unwrap();
        let g = GhostModule::new(primary, DepthwiseKernels::identity(4, 3).unwrap(), 2).unwrap();
        let y = ghost_forward(&x, &g, 1, 1).unwrap();
        assert_eq!(y.c(), 8);
        for p in 0..y.h() * y.w() {
            for ch in 0..4 {
                assert_eq!(y.data()[p * 8 + ch], y.data()[p * 8 + 4 + ch]);
            }
        }
    }

    #[test]
    fn ghost_shape_matches_plain_conv() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..50 {
            let s = rng.random_range(1..=4usize);
            let c2 = s * rng.random_range(1..=4usize);
            let c1 = rng.random_range(1..=4usize);
            let n = rng.random_range(1..=3usize);
            let stride = rng.random_range(1..=2usize);
            let pad = rng.random_range(0..=1usize);
            let h = rng.random_range(n..=8);
            let w = rng.random_range(n..=8);
            let x = FeatureMap::random(h, w, c1, &mut rng).unwrap();
            let g = GhostModule::random(c1, c2, n, s, 3, &mut rng).unwrap();
            let k = ConvKernelSet::random(c2, c1, n, &mut rng).unwrap();
            let a = ghost_forward(&x, &g, stride, pad).unwrap();
            let b = conv2d_direct(&x, &k, stride, pad).unwrap();
            assert_eq!((a.h(), a.w(), a.c()), (b.h(), b.w(), b.c()));
        }
    }

    #[test]
    fn ghost_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        assert_eq!(
            GhostModule::random(3, 10, 3, 4, 3, &mut rng).unwrap_err(),
            NnError::RatioDoesNotDivide { s: 4, c2: 10 }
        );
        assert_eq!(GhostModule::random(3, 8, 3, 2, 2, &mut rng).unwrap_err(), NnError::EvenCheapKernel(2));
    }
}
