//! Per-stage feature recalibration adapter.
//!
//! ```text
//! d    = ProjDown(x)                 1x1 conv, C -> C/4
//! z    = DWConv3x3(d)                depthwise, stride 1, zero pad 1
//! u    = ProjUp(z)                   1x1 conv, C/4 -> C, zero-initialized
//! gate = sigmoid(W2 . mean_hw(z) + b2)
//! out  = x + u * (1 + alpha * gate)  gate broadcast over H x W
//! ```
//!
//! With `ProjUp` at zero the adapter is the identity, and every channel
//! scale `1 + alpha * gate` lies strictly between 1 and `1 + alpha`.
//! The gate can alternatively pool `x` itself ([`GateSource::Input`]),
//! in which case `W2` is `C x C`.

pub mod check;

use num_traits::Float;
use rand::Rng as _;
use thiserror::Error;

use crate::rng::{stage, Rng};

#[derive(Debug, Error, PartialEq)]
pub enum RecalibError {
    #[error("channel count {0} is not a positive multiple of 4")]
    Channels(usize),
    #[error("feature map has {got} channels, adapter expects {expected}")]
    ChannelMismatch { expected: usize, got: usize },
    #[error("feature map buffer has {got} values, expected {expected}")]
    BadLength { expected: usize, got: usize },
    #[error("upstream gradient shape {got:?} does not match output shape {expected:?}")]
    GradShape {
        expected: (usize, usize, usize),
        got: (usize, usize, usize),
    },
    #[error("alpha must be finite and >= 0, got {0}")]
    Alpha(f64),
}

/// What the channel gate pools over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GateSource {
    /// The depthwise-conv output `z` (C/4 channels).
    #[default]
    Bottleneck,
    /// The adapter input `x` (C channels).
    Input,
}

/// `C x H x W`, channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap<T> {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<T>,
}

impl<T: Float> FeatureMap<T> {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<T>) -> Result<Self, RecalibError> {
        let expected = channels * height * width;
        if data.len() != expected {
            return Err(RecalibError::BadLength {
                expected,
                got: data.len(),
            });
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
            data: vec![T::zero(); channels * height * width],
        }
    }

    pub fn plane(&self) -> usize {
        self.height * self.width
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn cast<U: Float>(&self) -> FeatureMap<U> {
        FeatureMap {
            channels: self.channels,
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|v| U::from(*v).expect("float cast")).collect(),
        }
    }
}

/// Weights are row-major `[out x in]`; depthwise kernels are `[C/4 x 9]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RecalibParams<T> {
    pub channels: usize,
    pub gate_source: GateSource,
    pub alpha: T,
    pub proj_down_w: Vec<T>,
    pub proj_down_b: Vec<T>,
    pub dw_w: Vec<T>,
    pub dw_b: Vec<T>,
    pub proj_up_w: Vec<T>,
    pub proj_up_b: Vec<T>,
    pub gate_w: Vec<T>,
    pub gate_b: Vec<T>,
}

impl<T: Float> RecalibParams<T> {
    /// All-zero parameters of the right shapes (also the gradient container).
    pub fn zeros(channels: usize, gate_source: GateSource) -> Result<Self, RecalibError> {
        let b = bottleneck(channels)?;
        let g = gate_inputs(channels, gate_source);
        let z = |n: usize| vec![T::zero(); n];
        Ok(Self {
            channels,
            gate_source,
            alpha: T::zero(),
            proj_down_w: z(b * channels),
            proj_down_b: z(b),
            dw_w: z(b * 9),
            dw_b: z(b),
            proj_up_w: z(channels * b),
            proj_up_b: z(channels),
            gate_w: z(channels * g),
            gate_b: z(channels),
        })
    }

    pub fn bottleneck(&self) -> usize {
        self.channels / 4
    }

    fn gate_inputs(&self) -> usize {
        gate_inputs(self.channels, self.gate_source)
    }

    pub fn tensors(&self) -> [(&'static str, &Vec<T>); 8] {
        [
            ("proj_down.weight", &self.proj_down_w),
            ("proj_down.bias", &self.proj_down_b),
            ("dwconv.weight", &self.dw_w),
            ("dwconv.bias", &self.dw_b),
            ("proj_up.weight", &self.proj_up_w),
            ("proj_up.bias", &self.proj_up_b),
            ("gate.weight", &self.gate_w),
            ("gate.bias", &self.gate_b),
        ]
    }

    pub fn tensors_mut(&mut self) -> [(&'static str, &mut Vec<T>); 8] {
        [
            ("proj_down.weight", &mut self.proj_down_w),
            ("proj_down.bias", &mut self.proj_down_b),
            ("dwconv.weight", &mut self.dw_w),
            ("dwconv.bias", &mut self.dw_b),
            ("proj_up.weight", &mut self.proj_up_w),
            ("proj_up.bias", &mut self.proj_up_b),
            ("gate.weight", &mut self.gate_w),
            ("gate.bias", &mut self.gate_b),
        ]
    }

    /// Weights and biases (alpha is a hyperparameter and not counted).
    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn cast<U: Float>(&self) -> RecalibParams<U> {
        let c = |v: &Vec<T>| v.iter().map(|x| U::from(*x).expect("float cast")).collect();
        RecalibParams {
            channels: self.channels,
            gate_source: self.gate_source,
            alpha: U::from(self.alpha).expect("float cast"),
            proj_down_w: c(&self.proj_down_w),
            proj_down_b: c(&self.proj_down_b),
            dw_w: c(&self.dw_w),
            dw_b: c(&self.dw_b),
            proj_up_w: c(&self.proj_up_w),
            proj_up_b: c(&self.proj_up_b),
            gate_w: c(&self.gate_w),
            gate_b: c(&self.gate_b),
        }
    }
}

fn bottleneck(channels: usize) -> Result<usize, RecalibError> {
    if channels == 0 || !channels.is_multiple_of(4) {
        return Err(RecalibError::Channels(channels));
    }
    Ok(channels / 4)
}

fn gate_inputs(channels: usize, source: GateSource) -> usize {
    match source {
        GateSource::Bottleneck => channels / 4,
        GateSource::Input => channels,
    }
}

pub fn init_params(channels: usize, alpha: f64, seed: u64) -> Result<RecalibParams<f64>, RecalibError> {
    init_params_with(channels, alpha, seed, GateSource::Bottleneck)
}

/// `ProjDown` and the depthwise conv draw from `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`;
/// `ProjUp` and the gate start at zero.
pub fn init_params_with(
    channels: usize,
    alpha: f64,
    seed: u64,
    gate_source: GateSource,
) -> Result<RecalibParams<f64>, RecalibError> {
    if !(alpha.is_finite() && alpha >= 0.0) {
        return Err(RecalibError::Alpha(alpha));
    }
    let mut p = RecalibParams::zeros(channels, gate_source)?;
    p.alpha = alpha;
    let mut rng = Rng::new(seed, crate::rng::stream_id(&[stage::RECALIB_INIT, &channels.to_string()]));
    let mut fill = |v: &mut Vec<f64>, fan_in: usize| {
        let bound = 1.0 / (fan_in as f64).sqrt();
        for x in v.iter_mut() {
            *x = rng.random_range(-bound..bound);
        }
    };
    fill(&mut p.proj_down_w, channels);
    fill(&mut p.proj_down_b, channels);
    fill(&mut p.dw_w, 9);
    fill(&mut p.dw_b, 9);
    Ok(p)
}

/// Exact weight + bias count for one adapter per entry of `embed_dims`,
/// with the default bottleneck-pooled gate.
pub fn param_count(embed_dims: &[usize]) -> Result<u64, RecalibError> {
    embed_dims.iter().try_fold(0u64, |acc, &c| {
        let b = bottleneck(c)? as u64;
        let c = c as u64;
        let down = c * b + b;
        let dw = 9 * b + b;
        let up = b * c + c;
        let gate = b * c + c;
        Ok(acc + down + dw + up + gate)
    })
}

/// Intermediates kept for the backward pass.
#[derive(Debug, Clone)]
struct Trace<T> {
    down: Vec<T>,
    z: Vec<T>,
    up: Vec<T>,
    pooled: Vec<T>,
    gate: Vec<T>,
}

fn sigmoid<T: Float>(v: T) -> T {
    T::one() / (T::one() + (-v).exp())
}

fn check_input<T: Float>(params: &RecalibParams<T>, x: &FeatureMap<T>) -> Result<(), RecalibError> {
    if x.channels != params.channels {
        return Err(RecalibError::ChannelMismatch {
            expected: params.channels,
            got: x.channels,
        });
    }
    let expected = x.channels * x.plane();
    if x.data.len() != expected {
        return Err(RecalibError::BadLength {
            expected,
            got: x.data.len(),
        });
    }
    Ok(())
}

fn run<T: Float>(params: &RecalibParams<T>, x: &FeatureMap<T>) -> (FeatureMap<T>, Trace<T>) {
    let c_in = params.channels;
    let b = params.bottleneck();
    let (h, w) = (x.height, x.width);
    let p = h * w;

    let mut down = vec![T::zero(); b * p];
    for o in 0..b {
        let row = &params.proj_down_w[o * c_in..(o + 1) * c_in];
        let dst = &mut down[o * p..(o + 1) * p];
        dst.iter_mut().for_each(|v| *v = params.proj_down_b[o]);
        for (ci, &wt) in row.iter().enumerate() {
            let src = &x.data[ci * p..(ci + 1) * p];
            for (d, &s) in dst.iter_mut().zip(src) {
                *d = *d + wt * s;
            }
        }
    }

    let mut z = vec![T::zero(); b * p];
    for ch in 0..b {
        let k = &params.dw_w[ch * 9..ch * 9 + 9];
        let src = &down[ch * p..(ch + 1) * p];
        for i in 0..h {
            for j in 0..w {
                let mut acc = params.dw_b[ch];
                for ki in 0..3 {
                    let r = i as isize + ki as isize - 1;
                    if r < 0 || r >= h as isize {
                        continue;
                    }
                    for kj in 0..3 {
                        let c = j as isize + kj as isize - 1;
                        if c < 0 || c >= w as isize {
                            continue;
                        }
                        acc = acc + k[ki * 3 + kj] * src[r as usize * w + c as usize];
                    }
                }
                z[ch * p + i * w + j] = acc;
            }
        }
    }

    let mut up = vec![T::zero(); c_in * p];
    for o in 0..c_in {
        let row = &params.proj_up_w[o * b..(o + 1) * b];
        let dst = &mut up[o * p..(o + 1) * p];
        dst.iter_mut().for_each(|v| *v = params.proj_up_b[o]);
        for (ci, &wt) in row.iter().enumerate() {
            let src = &z[ci * p..(ci + 1) * p];
            for (d, &s) in dst.iter_mut().zip(src) {
                *d = *d + wt * s;
            }
        }
    }

    let (pool_src, g) = match params.gate_source {
        GateSource::Bottleneck => (&z, b),
        GateSource::Input => (&x.data, c_in),
    };
    let inv_p = T::one() / T::from(p).expect("plane size");
    let pooled: Vec<T> = (0..g)
        .map(|ch| pool_src[ch * p..(ch + 1) * p].iter().fold(T::zero(), |a, &v| a + v) * inv_p)
        .collect();
    let gate: Vec<T> = (0..c_in)
        .map(|o| {
            let row = &params.gate_w[o * g..(o + 1) * g];
            let a = row
                .iter()
                .zip(&pooled)
                .fold(params.gate_b[o], |acc, (&wt, &s)| acc + wt * s);
            sigmoid(a)
        })
        .collect();

    let mut out = x.clone();
    for ch in 0..c_in {
        let scale = T::one() + params.alpha * gate[ch];
        for (o, &u) in out.data[ch * p..(ch + 1) * p]
            .iter_mut()
            .zip(&up[ch * p..(ch + 1) * p])
        {
            *o = *o + u * scale;
        }
    }
    (
        out,
        Trace {
            down,
            z,
            up,
            pooled,
            gate,
        },
    )
}

pub fn forward<T: Float>(params: &RecalibParams<T>, x: &FeatureMap<T>) -> Result<FeatureMap<T>, RecalibError> {
    check_input(params, x)?;
    Ok(run(params, x).0)
}

/// Per-channel multipliers `1 + alpha * gate` for input `x`.
pub fn channel_scales<T: Float>(params: &RecalibParams<T>, x: &FeatureMap<T>) -> Result<Vec<T>, RecalibError> {
    check_input(params, x)?;
    let (_, trace) = run(params, x);
    Ok(trace
        .gate
        .iter()
        .map(|&g| T::one() + params.alpha * g)
        .collect())
}

/// Gradients of a scalar loss `L` given `dL/d out`.
#[derive(Debug, Clone, PartialEq)]
pub struct RecalibGrads {
    pub x: FeatureMap<f64>,
    /// Same layout as the parameters; `alpha` holds `dL/d alpha`.
    pub params: RecalibParams<f64>,
}

/// Reverse-mode gradients of [`forward`] in f64.
pub fn backward(
    params: &RecalibParams<f64>,
    x: &FeatureMap<f64>,
    grad_out: &FeatureMap<f64>,
) -> Result<RecalibGrads, RecalibError> {
    check_input(params, x)?;
    if grad_out.shape() != x.shape() || grad_out.data.len() != x.data.len() {
        return Err(RecalibError::GradShape {
            expected: x.shape(),
            got: grad_out.shape(),
        });
    }
    let (_, t) = run(params, x);
    let c_in = params.channels;
    let b = params.bottleneck();
    let g = params.gate_inputs();
    let (h, w) = (x.height, x.width);
    let p = h * w;
    let go = &grad_out.data;

    let mut grads = RecalibParams::<f64>::zeros(c_in, params.gate_source)?;
    let mut dx = grad_out.data.clone();

    // Residual scale per channel.
    let mut d_up = vec![0.0; c_in * p];
    let mut d_pre = vec![0.0; c_in];
    for ch in 0..c_in {
        let scale = 1.0 + params.alpha * t.gate[ch];
        let mut dm = 0.0;
        for q in ch * p..(ch + 1) * p {
            d_up[q] = go[q] * scale;
            dm += go[q] * t.up[q];
        }
        grads.alpha += dm * t.gate[ch];
        d_pre[ch] = dm * params.alpha * t.gate[ch] * (1.0 - t.gate[ch]);
    }

    // Gate.
    let mut d_pooled = vec![0.0; g];
    for o in 0..c_in {
        grads.gate_b[o] = d_pre[o];
        for k in 0..g {
            grads.gate_w[o * g + k] = d_pre[o] * t.pooled[k];
            d_pooled[k] += params.gate_w[o * g + k] * d_pre[o];
        }
    }

    // ProjUp.
    let mut dz = vec![0.0; b * p];
    for o in 0..c_in {
        let du = &d_up[o * p..(o + 1) * p];
        grads.proj_up_b[o] = du.iter().sum();
        for k in 0..b {
            let zk = &t.z[k * p..(k + 1) * p];
            grads.proj_up_w[o * b + k] = du.iter().zip(zk).map(|(a, b)| a * b).sum();
            let wt = params.proj_up_w[o * b + k];
            for (d, &u) in dz[k * p..(k + 1) * p].iter_mut().zip(du) {
                *d += wt * u;
            }
        }
    }

    // Mean pooling.
    let inv_p = 1.0 / p as f64;
    match params.gate_source {
        GateSource::Bottleneck => {
            for k in 0..b {
                let add = d_pooled[k] * inv_p;
                dz[k * p..(k + 1) * p].iter_mut().for_each(|v| *v += add);
            }
        }
        GateSource::Input => {
            for k in 0..c_in {
                let add = d_pooled[k] * inv_p;
                dx[k * p..(k + 1) * p].iter_mut().for_each(|v| *v += add);
            }
        }
    }

    // Depthwise 3x3.
    let mut d_down = vec![0.0; b * p];
    for ch in 0..b {
        let k = &params.dw_w[ch * 9..ch * 9 + 9];
        let src = &t.down[ch * p..(ch + 1) * p];
        let dzc = &dz[ch * p..(ch + 1) * p];
        grads.dw_b[ch] = dzc.iter().sum();
        for i in 0..h {
            for j in 0..w {
                let gz = dzc[i * w + j];
                for ki in 0..3 {
                    let r = i as isize + ki as isize - 1;
                    if r < 0 || r >= h as isize {
                        continue;
                    }
                    for kj in 0..3 {
                        let c = j as isize + kj as isize - 1;
                        if c < 0 || c >= w as isize {
                            continue;
                        }
                        let q = r as usize * w + c as usize;
                        grads.dw_w[ch * 9 + ki * 3 + kj] += gz * src[q];
                        d_down[ch * p + q] += gz * k[ki * 3 + kj];
                    }
                }
            }
        }
    }

    // ProjDown.
    for o in 0..b {
        let dd = &d_down[o * p..(o + 1) * p];
        grads.proj_down_b[o] = dd.iter().sum();
        for ci in 0..c_in {
            let xc = &x.data[ci * p..(ci + 1) * p];
            grads.proj_down_w[o * c_in + ci] = dd.iter().zip(xc).map(|(a, b)| a * b).sum();
            let wt = params.proj_down_w[o * c_in + ci];
            for (d, &v) in dx[ci * p..(ci + 1) * p].iter_mut().zip(dd) {
                *d += wt * v;
            }
        }
    }

    Ok(RecalibGrads {
        x: FeatureMap {
            channels: c_in,
            height: h,
            width: w,
            data: dx,
        },
        params: grads,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};

    fn random_map(c: usize, h: usize, w: usize, seed: u64) -> FeatureMap<f64> {
        let mut rng = Rng::new(seed, 77);
        let data = (0..c * h * w).map(|_| StandardNormal.sample(&mut rng)).collect();
        FeatureMap::new(c, h, w, data).unwrap()
    }

    #[test]
    fn init_is_identity() {
        let p = init_params(8, 2.0, 1).unwrap();
        assert!(p.proj_up_w.iter().chain(&p.proj_up_b).all(|&v| v == 0.0));
        let x = random_map(8, 5, 6, 3);
        assert_eq!(forward(&p, &x).unwrap(), x);
        let pf: RecalibParams<f32> = p.cast();
        let xf: FeatureMap<f32> = x.cast();
        assert_eq!(forward(&pf, &xf).unwrap(), xf);
    }

    #[test]
    fn init_is_seeded_and_validated() {
        assert_eq!(init_params(16, 2.0, 4).unwrap(), init_params(16, 2.0, 4).unwrap());
        assert_ne!(init_params(16, 2.0, 4).unwrap(), init_params(16, 2.0, 5).unwrap());
        assert_eq!(init_params(6, 2.0, 0), Err(RecalibError::Channels(6)));
        assert_eq!(init_params(0, 2.0, 0), Err(RecalibError::Channels(0)));
        assert!(matches!(init_params(8, -1.0, 0), Err(RecalibError::Alpha(_))));
    }

    #[test]
    fn channel_mismatch() {
        let p = init_params(8, 2.0, 1).unwrap();
        let x = random_map(4, 2, 2, 0);
        assert_eq!(
            forward(&p, &x),
            Err(RecalibError::ChannelMismatch {
                expected: 8,
                got: 4
            })
        );
    }

    #[test]
    fn alpha_zero_is_plain_bottleneck() {
        let mut p = init_params(8, 0.0, 2).unwrap();
        let mut rng = Rng::new(2, 2);
        for v in p.proj_up_w.iter_mut().chain(p.gate_w.iter_mut()) {
            *v = rng.random_range(-1.0..1.0);
        }
        let x = random_map(8, 3, 3, 5);
        let out = forward(&p, &x).unwrap();
        let mut bare = p.clone();
        bare.gate_w.iter_mut().for_each(|v| *v = 123.0);
        let (_, trace) = run(&p, &x);
        for q in 0..x.data.len() {
            assert_eq!(out.data[q], x.data[q] + trace.up[q]);
        }
        // With alpha = 0 the gate weights are irrelevant.
        assert_eq!(forward(&bare, &x).unwrap(), out);
    }

    #[test]
    fn hand_evaluated_single_pixel() {
        // C = 4, H = W = 1, bottleneck width 1.
        // d = [1 2 3 4] . x + 0.5 with x = [1, -1, 0.5, 2]  ->  1 - 2 + 1.5 + 8 + 0.5 = 9
        // z = centre tap 0.5 * d + 0.25 = 4.75 (other taps hit zero padding)
        // u_c = up_w[c] * z + up_b[c], up_w = [1, -1, 0, 2], up_b = [0, 1, 0, 0]
        //     = [4.75, -3.75, 0, 9.5]
        // pooled = z = 4.75
        // a_c = gate_w[c] * 4.75 + gate_b[c], gate_w = [0, 0.2, -0.2, 0], gate_b = [0, 0, 0, 1]
        //     = [0, 0.95, -0.95, 1]
        // out_c = x_c + u_c * (1 + 2 sigmoid(a_c))
        let mut p = RecalibParams::<f64>::zeros(4, GateSource::Bottleneck).unwrap();
        p.alpha = 2.0;
        p.proj_down_w = vec![1.0, 2.0, 3.0, 4.0];
        p.proj_down_b = vec![0.5];
        p.dw_w = vec![9.0, 9.0, 9.0, 9.0, 0.5, 9.0, 9.0, 9.0, 9.0];
        p.dw_b = vec![0.25];
        p.proj_up_w = vec![1.0, -1.0, 0.0, 2.0];
        p.proj_up_b = vec![0.0, 1.0, 0.0, 0.0];
        p.gate_w = vec![0.0, 0.2, -0.2, 0.0];
        p.gate_b = vec![0.0, 0.0, 0.0, 1.0];
        let x = FeatureMap::new(4, 1, 1, vec![1.0, -1.0, 0.5, 2.0]).unwrap();

        let s = |a: f64| 1.0 / (1.0 + (-a).exp());
        let expected = [
            1.0 + 4.75 * (1.0 + 2.0 * 0.5),
            -1.0 + -3.75 * (1.0 + 2.0 * s(0.95)),
            0.5,
            2.0 + 9.5 * (1.0 + 2.0 * s(1.0)),
        ];
        assert_eq!(expected[0], 10.5);
        let out = forward(&p, &x).unwrap();
        for (o, e) in out.data.iter().zip(expected) {
            assert!((o - e).abs() < 1e-12, "{o} vs {e}");
        }
    }

    #[test]
    fn scales_inside_open_interval() {
        let mut p = init_params(16, 2.0, 8).unwrap();
        let mut rng = Rng::new(8, 8);
        for v in p.gate_w.iter_mut().chain(p.gate_b.iter_mut()) {
            *v = rng.random_range(-3.0..3.0);
        }
        let x = random_map(16, 4, 4, 1);
        for s in channel_scales(&p, &x).unwrap() {
            assert!(s > 1.0 && s < 3.0);
        }
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let p = check::random_params(8, GateSource::Bottleneck, &mut Rng::new(1, 1)).unwrap();
        let x = random_map(8, 3, 4, 2);
        let g = backward(&p, &x, &FeatureMap::zeros(8, 3, 4)).unwrap();
        assert!(g.x.data.iter().all(|&v| v == 0.0));
        assert_eq!(g.params.alpha, 0.0);
        for (_, t) in g.params.tensors() {
            assert!(t.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn identity_init_gradients() {
        // At init only the residual and ProjUp see gradient: dx = G and
        // dL/d up_w[o, k] = sum_p G[o, p] * 2 * z[k, p] (gate = 1/2, alpha = 2).
        let p = init_params(8, 2.0, 6).unwrap();
        let x = random_map(8, 4, 4, 7);
        let go = random_map(8, 4, 4, 8);
        let g = backward(&p, &x, &go).unwrap();
        assert_eq!(g.x, go);
        assert!(g.params.proj_up_w.iter().any(|&v| v.abs() > 1e-6));
        assert!(g.params.proj_down_w.iter().all(|&v| v == 0.0));
        assert!(g.params.gate_w.iter().all(|&v| v == 0.0));
        let fd = check::finite_difference(&p, &x, &go, 1e-5);
        let err = check::compare(&g, &fd);
        assert!(err.max_rel < 1e-4, "{err:?}");
    }

    #[test]
    fn backward_shape_errors() {
        let p = init_params(8, 2.0, 6).unwrap();
        let x = random_map(8, 4, 4, 7);
        assert!(matches!(
            backward(&p, &x, &FeatureMap::zeros(8, 4, 3)),
            Err(RecalibError::GradShape { .. })
        ));
    }

    #[test]
    fn counts() {
        assert_eq!(param_count(&[4]).unwrap(), 31);
        assert_eq!(param_count(&[64, 144, 288, 512]).unwrap(), 282_228);
        assert_eq!(param_count(&[6]), Err(RecalibError::Channels(6)));
        for c in [4, 8, 64] {
            let p = init_params(c, 2.0, 0).unwrap();
            assert_eq!(p.num_params() as u64, param_count(&[c]).unwrap());
        }
    }
}
