//! Fully connected tanh network with a linear scalar output, hand-written
//! reverse-mode gradients and an Adam optimizer.
//!
//! Parameters live in one flat vector. Layer `l` (fan-in `n`, fan-out `m`)
//! occupies `m·n` row-major weights followed by `m` biases.

use rand::Rng as _;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::rng;

pub const DEFAULT_HIDDEN: [usize; 2] = [200, 100];
pub const PARAM_FILE_MAGIC: &str = "jamfield-mlp";
pub const PARAM_FILE_VERSION: u32 = 1;

/// Affine map from physical coordinates into roughly `[-1, 1]^D`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputScaling {
    pub center: Vec<f64>,
    pub half_extent: Vec<f64>,
}

impl InputScaling {
    pub fn identity(dim: usize) -> Self {
        Self { center: vec![0.0; dim], half_extent: vec![1.0; dim] }
    }

    pub fn from_bounds(min: &[f64], max: &[f64]) -> Self {
        Self {
            center: min.iter().zip(max).map(|(a, b)| 0.5 * (a + b)).collect(),
            half_extent: min.iter().zip(max).map(|(a, b)| 0.5 * (b - a)).collect(),
        }
    }

    #[inline]
    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        for (((o, xi), c), h) in out.iter_mut().zip(x).zip(&self.center).zip(&self.half_extent) {
            *o = (xi - c) / h;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    layer_sizes: Vec<usize>,
    weights_and_biases: Vec<f64>,
    pub input_scaling: InputScaling,
}

/// Number of parameters for the given layer sizes.
pub fn param_count(layer_sizes: &[usize]) -> usize {
    layer_sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl MlpParams {
    pub fn zeros(layer_sizes: Vec<usize>, input_scaling: InputScaling) -> Result<Self> {
        let m = Self::check_sizes(&layer_sizes, &input_scaling)?;
        Ok(Self { layer_sizes, weights_and_biases: vec![0.0; m], input_scaling })
    }

    /// Uniform(−1/√fan_in, 1/√fan_in) for every weight and bias.
    pub fn init_uniform(layer_sizes: Vec<usize>, input_scaling: InputScaling, seed: u64) -> Result<Self> {
        let mut p = Self::zeros(layer_sizes, input_scaling)?;
        let mut r = rng::stream(seed, &[0x6d6c_7020]);
        let mut off = 0;
        for w in p.layer_sizes.clone().windows(2) {
            let bound = (1.0 / w[0] as f64).sqrt();
            let len = w[0] * w[1] + w[1];
            for v in &mut p.weights_and_biases[off..off + len] {
                *v = r.random_range(-bound..bound);
            }
            off += len;
        }
        Ok(p)
    }

    pub fn from_flat(layer_sizes: Vec<usize>, flat: Vec<f64>, input_scaling: InputScaling) -> Result<Self> {
        let m = Self::check_sizes(&layer_sizes, &input_scaling)?;
        if flat.len() != m {
            return Err(Error::DimensionMismatch { expected: m, got: flat.len() });
        }
        if flat.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite network parameter".into()));
        }
        Ok(Self { layer_sizes, weights_and_biases: flat, input_scaling })
    }

    fn check_sizes(layer_sizes: &[usize], scaling: &InputScaling) -> Result<usize> {
        if layer_sizes.len() < 2 || layer_sizes.contains(&0) {
            return Err(Error::InvalidParameter(format!("bad layer sizes {layer_sizes:?}")));
        }
        if *layer_sizes.last().unwrap() != 1 {
            return Err(Error::InvalidParameter("network output must be scalar".into()));
        }
        if scaling.center.len() != layer_sizes[0] || scaling.half_extent.len() != layer_sizes[0] {
            return Err(Error::DimensionMismatch { expected: layer_sizes[0], got: scaling.center.len() });
        }
        if scaling.half_extent.iter().any(|h| !(*h > 0.0)) {
            return Err(Error::InvalidParameter("input scaling half-extent must be positive".into()));
        }
        Ok(param_count(layer_sizes))
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn len(&self) -> usize {
        self.weights_and_biases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights_and_biases.is_empty()
    }

    pub fn flat(&self) -> &[f64] {
        &self.weights_and_biases
    }

    pub fn flat_mut(&mut self) -> &mut [f64] {
        &mut self.weights_and_biases
    }

    pub fn norm_sq(&self) -> f64 {
        self.weights_and_biases.iter().map(|v| v * v).sum()
    }

    /// (offset, fan_in, fan_out) of layer `l`.
    fn layer(&self, l: usize) -> (usize, usize, usize) {
        let off: usize = self.layer_sizes[..=l].windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        (off, self.layer_sizes[l], self.layer_sizes[l + 1])
    }

    pub fn forward(&self, x: &[f64]) -> f64 {
        let mut cache = ForwardCache::new(&self.layer_sizes);
        self.forward_cached(self.flat(), x, &mut cache)
    }

    /// Forward pass using an external parameter slice laid out like `self`.
    pub fn forward_cached(&self, flat: &[f64], x: &[f64], cache: &mut ForwardCache) -> f64 {
        self.input_scaling.apply(x, &mut cache.acts[0]);
        let n_layers = self.layer_sizes.len() - 1;
        for l in 0..n_layers {
            let (off, fan_in, fan_out) = self.layer(l);
            let w = &flat[off..off + fan_in * fan_out];
            let b = &flat[off + fan_in * fan_out..off + fan_in * fan_out + fan_out];
            let (prev, next) = cache.acts.split_at_mut(l + 1);
            let input = &prev[l];
            let out = &mut next[0];
            for (j, o) in out.iter_mut().enumerate() {
                let row = &w[j * fan_in..(j + 1) * fan_in];
                let z = b[j] + dot(row, input);
                *o = if l + 1 < n_layers { z.tanh() } else { z };
            }
        }
        cache.acts[n_layers][0]
    }

    /// Accumulates `upstream · ∂g/∂φ` into `grad` from a cache filled by
    /// [`forward_cached`](Self::forward_cached).
    pub fn backward_accumulate(&self, flat: &[f64], cache: &mut ForwardCache, upstream: f64, grad: &mut [f64]) {
        let n_layers = self.layer_sizes.len() - 1;
        cache.deltas[n_layers][0] = upstream;
        for l in (0..n_layers).rev() {
            let (off, fan_in, fan_out) = self.layer(l);
            let w = &flat[off..off + fan_in * fan_out];
            let (gw, rest) = grad[off..off + fan_in * fan_out + fan_out].split_at_mut(fan_in * fan_out);
            let input = &cache.acts[l];
            let (lower, upper) = cache.deltas.split_at_mut(l + 1);
            let delta = &upper[0];
            for j in 0..fan_out {
                let dj = delta[j];
                if dj == 0.0 {
                    continue;
                }
                rest[j] += dj;
                axpy(dj, input, &mut gw[j * fan_in..(j + 1) * fan_in]);
            }
            if l > 0 {
                let prev = &mut lower[l];
                prev.iter_mut().for_each(|v| *v = 0.0);
                for j in 0..fan_out {
                    let dj = delta[j];
                    if dj != 0.0 {
                        axpy(dj, &w[j * fan_in..(j + 1) * fan_in], prev);
                    }
                }
                for (p, a) in prev.iter_mut().zip(&cache.acts[l]) {
                    *p *= 1.0 - a * a;
                }
            }
        }
    }

    /// `upstream · ∂g(x)/∂φ`.
    pub fn gradient(&self, x: &[f64], upstream: f64) -> Vec<f64> {
        let mut cache = ForwardCache::new(&self.layer_sizes);
        let mut grad = vec![0.0; self.len()];
        self.forward_cached(self.flat(), x, &mut cache);
        self.backward_accumulate(self.flat(), &mut cache, upstream, &mut grad);
        grad
    }

    /// Upper bound on the Lipschitz constant of `x ↦ g(x)`: product of
    /// layer Frobenius norms times the input scaling gain.
    pub fn lipschitz_bound(&self) -> f64 {
        let gain = self.input_scaling.half_extent.iter().fold(0.0f64, |m, h| m.max(1.0 / h));
        (0..self.layer_sizes.len() - 1)
            .map(|l| {
                let (off, fan_in, fan_out) = self.layer(l);
                self.weights_and_biases[off..off + fan_in * fan_out].iter().map(|v| v * v).sum::<f64>().sqrt()
            })
            .product::<f64>()
            * gain
    }

    /// Versioned text encoding: a header with layer shapes and scaling, then
    /// one parameter per line.
    pub fn to_text(&self) -> String {
        let mut s = String::with_capacity(self.len() * 24 + 128);
        let join = |v: &[f64]| v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(" ");
        writeln!(s, "{PARAM_FILE_MAGIC} v{PARAM_FILE_VERSION}").unwrap();
        writeln!(s, "layers {}", self.layer_sizes.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(" ")).unwrap();
        writeln!(s, "activation tanh").unwrap();
        writeln!(s, "center {}", join(&self.input_scaling.center)).unwrap();
        writeln!(s, "half_extent {}", join(&self.input_scaling.half_extent)).unwrap();
        writeln!(s, "params {}", self.len()).unwrap();
        for v in &self.weights_and_biases {
            writeln!(s, "{v:?}").unwrap();
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |m: &str| Error::ParamFormat(m.to_string());
        let mut lines = text.lines();
        let mut header = |key: &str| -> Result<Vec<String>> {
            let line = lines.next().ok_or_else(|| bad(&format!("missing `{key}` line")))?;
            let mut parts = line.split_whitespace();
            if parts.next() != Some(key) {
                return Err(bad(&format!("expected `{key}`, got `{line}`")));
            }
            Ok(parts.map(str::to_string).collect())
        };
        let version = header(PARAM_FILE_MAGIC)?;
        if version != [format!("v{PARAM_FILE_VERSION}")] {
            return Err(bad(&format!("unsupported version {version:?}")));
        }
        let parse_usize = |v: Vec<String>| -> Result<Vec<usize>> {
            v.iter().map(|s| s.parse().map_err(|_| bad(&format!("bad integer `{s}`")))).collect()
        };
        let parse_f64 = |v: Vec<String>| -> Result<Vec<f64>> {
            v.iter().map(|s| s.parse().map_err(|_| bad(&format!("bad number `{s}`")))).collect()
        };
        let layer_sizes = parse_usize(header("layers")?)?;
        if header("activation")? != ["tanh"] {
            return Err(bad("only tanh activation is supported"));
        }
        let center = parse_f64(header("center")?)?;
        let half_extent = parse_f64(header("half_extent")?)?;
        let count = parse_usize(header("params")?)?;
        let flat: Vec<f64> = lines
            .filter(|l| !l.trim().is_empty())
            .map(|l| l.trim().parse().map_err(|_| bad(&format!("bad number `{l}`"))))
            .collect::<Result<_>>()?;
        if count != [flat.len()] {
            return Err(bad(&format!("header declares {count:?} params, found {}", flat.len())));
        }
        Self::from_flat(layer_sizes, flat, InputScaling { center, half_extent })
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    // four accumulators so the loop vectorizes
    let mut acc = [0.0; 4];
    let chunks = a.len() / 4;
    for k in 0..chunks {
        for (i, s) in acc.iter_mut().enumerate() {
            *s += a[4 * k + i] * b[4 * k + i];
        }
    }
    let mut tail = 0.0;
    for k in 4 * chunks..a.len() {
        tail += a[k] * b[k];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Scratch buffers for one forward/backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    acts: Vec<Vec<f64>>,
    deltas: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn new(layer_sizes: &[usize]) -> Self {
        let acts: Vec<Vec<f64>> = layer_sizes.iter().map(|&n| vec![0.0; n]).collect();
        Self { deltas: acts.clone(), acts }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
    step_count: u64,
    /// Per-coordinate multiplier on `lr`; empty means 1 everywhere.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    lr_scale: Vec<f64>,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(len: usize, lr: f64) -> Self {
        Self {
            first_moment: vec![0.0; len],
            second_moment: vec![0.0; len],
            step_count: 0,
            lr_scale: Vec::new(),
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    /// Scales the step size of coordinates `range` by `factor`.
    pub fn scale_lr(&mut self, range: std::ops::Range<usize>, factor: f64) {
        if self.lr_scale.is_empty() {
            self.lr_scale = vec![1.0; self.first_moment.len()];
        }
        self.lr_scale[range].iter_mut().for_each(|s| *s = factor);
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// One bias-corrected Adam update of `params` in place.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) -> Result<()> {
        if params.len() != self.first_moment.len() || grad.len() != params.len() {
            return Err(Error::DimensionMismatch {
                expected: self.first_moment.len(),
                got: grad.len().min(params.len()),
            });
        }
        self.step_count += 1;
        let t = self.step_count as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let step = self.lr / c1;
        for (i, ((p, g), (m, v))) in
            params.iter_mut().zip(grad).zip(self.first_moment.iter_mut().zip(&mut self.second_moment)).enumerate()
        {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let scale = self.lr_scale.get(i).copied().unwrap_or(1.0);
            *p -= scale * step * *m / ((*v / c2).sqrt() + self.eps);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn arch() -> Vec<usize> {
        vec![2, 200, 100, 1]
    }

    fn scaling() -> InputScaling {
        InputScaling::from_bounds(&[0.0, 0.0], &[1000.0, 1000.0])
    }

    #[test]
    fn parameter_count() {
        assert_eq!(param_count(&arch()), 20_801);
        assert_eq!(MlpParams::zeros(arch(), scaling()).unwrap().len(), 20_801);
    }

    #[test]
    fn zero_network_outputs_zero() {
        let p = MlpParams::zeros(arch(), scaling()).unwrap();
        assert_eq!(p.forward(&[12.0, 900.0]), 0.0);
    }

    #[test]
    fn output_bias_only_is_constant() {
        let mut p = MlpParams::zeros(arch(), scaling()).unwrap();
        *p.flat_mut().last_mut().unwrap() = 3.25;
        for x in [[0.0, 0.0], [500.0, 10.0], [-7.0, 2000.0]] {
            assert_eq!(p.forward(&x), 3.25);
        }
    }

    #[test]
    fn saturated_hidden_units_stay_bounded() {
        let sizes = vec![2, 3, 1];
        let mut p = MlpParams::init_uniform(sizes, InputScaling::identity(2), 4).unwrap();
        for v in &mut p.flat_mut()[..6] {
            *v *= 1e6;
        }
        let mut cache = ForwardCache::new(p.layer_sizes());
        p.forward_cached(p.flat(), &[0.7, -0.3], &mut cache);
        assert!(cache.acts[1].iter().all(|a| (-1.0..=1.0).contains(a)));
    }

    #[test]
    fn zero_upstream_gives_zero_gradient() {
        let p = MlpParams::init_uniform(arch(), scaling(), 1).unwrap();
        assert!(p.gradient(&[100.0, 200.0], 0.0).iter().all(|g| *g == 0.0));
    }

    #[test]
    fn output_bias_gradient_is_upstream() {
        let p = MlpParams::init_uniform(arch(), scaling(), 1).unwrap();
        let g = p.gradient(&[100.0, 200.0], -2.5);
        assert_eq!(*g.last().unwrap(), -2.5);
    }

    #[test]
    fn gradient_matches_finite_differences_small_net() {
        let p = MlpParams::init_uniform(vec![2, 7, 5, 1], InputScaling::identity(2), 11).unwrap();
        let x = [0.3, -0.8];
        let g = p.gradient(&x, 1.0);
        let h = 1e-5;
        for (k, gk) in g.iter().enumerate() {
            let mut up = p.clone();
            let mut dn = p.clone();
            up.flat_mut()[k] += h;
            dn.flat_mut()[k] -= h;
            let fd = (up.forward(&x) - dn.forward(&x)) / (2.0 * h);
            assert!((fd - gk).abs() <= 1e-7 * (1.0 + gk.abs()), "param {k}: {fd} vs {gk}");
        }
    }

    #[test]
    fn lipschitz_bound_holds() {
        let p = MlpParams::init_uniform(arch(), scaling(), 8).unwrap();
        let l = p.lipschitz_bound();
        let mut r = rng::stream(3, &[]);
        for _ in 0..50 {
            let a: [f64; 2] = [r.random_range(0.0..1000.0), r.random_range(0.0..1000.0)];
            let b: [f64; 2] = [r.random_range(0.0..1000.0), r.random_range(0.0..1000.0)];
            let dist = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
            assert!((p.forward(&a) - p.forward(&b)).abs() <= l * dist + 1e-12);
        }
    }

    #[test]
    fn adam_first_step_is_lr_times_sign() {
        let mut st = AdamState::new(3, 0.4);
        let mut p = vec![1.0, 1.0, 1.0];
        st.step(&mut p, &[5.0, -0.02, 300.0]).unwrap();
        assert!((p[0] - 0.6).abs() < 1e-6);
        assert!((p[1] - 1.4).abs() < 1e-5);
        assert!((p[2] - 0.6).abs() < 1e-6);
    }

    #[test]
    fn adam_zero_gradient_is_noop_and_checks_len() {
        let mut st = AdamState::new(2, 0.4);
        let mut p = vec![0.5, -1.5];
        for _ in 0..100 {
            st.step(&mut p, &[0.0, 0.0]).unwrap();
        }
        assert_eq!(p, vec![0.5, -1.5]);
        assert!(st.step(&mut p, &[0.0]).is_err());
    }

    #[test]
    fn adam_is_deterministic() {
        let run = || {
            let mut st = AdamState::new(2, 0.1);
            let mut p = vec![3.0, -2.0];
            for _ in 0..50 {
                let g = vec![2.0 * p[0], 4.0 * p[1]];
                st.step(&mut p, &g).unwrap();
            }
            p
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn text_roundtrip_and_rejections() {
        let p = MlpParams::init_uniform(vec![2, 4, 3, 1], scaling(), 5).unwrap();
        let text = p.to_text();
        assert!(text.starts_with("jamfield-mlp v1\nlayers 2 4 3 1\n"));
        assert_eq!(MlpParams::from_text(&text).unwrap(), p);
        assert!(MlpParams::from_text(&text.replace("v1", "v9")).is_err());
        assert!(MlpParams::from_text(&text.replace("params 31", "params 30")).is_err());
    }
}
