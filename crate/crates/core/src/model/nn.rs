//! A small fully connected network with a hand-written reverse pass over a
//! flat parameter vector. Hidden layers are Linear -> tanh, optionally
//! followed by a multiplicative time gain h * (1 + S tau) that lets every
//! layer rescale features by the (sinusoidally embedded) interpolation
//! times; the output layer is linear. No autograd, no tape: the cache holds
//! per-layer activations and the backward walks them in reverse.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::rngkit::RngKey;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mlp {
    pub in_dim: usize,
    pub hidden: Vec<usize>,
    pub out_dim: usize,
    /// Width of the time-feature vector fed to the per-layer gains; 0
    /// disables the gain sublayers entirely.
    pub time_dim: usize,
}

/// Activations saved by [`Mlp::forward_cached`] for one input.
pub struct MlpCache {
    /// a_0 = input, a_l = post-gain activation of hidden layer l.
    acts: Vec<Vec<f64>>,
    /// tanh outputs per hidden layer (pre-gain).
    tanhs: Vec<Vec<f64>>,
    /// gains s = S tau per hidden layer (empty when time_dim = 0).
    gains: Vec<Vec<f64>>,
    tfeat: Vec<f64>,
}

impl Mlp {
    pub fn new(in_dim: usize, hidden: Vec<usize>, out_dim: usize, time_dim: usize) -> Self {
        assert!(in_dim > 0 && out_dim > 0, "degenerate layer width");
        assert!(hidden.iter().all(|&h| h > 0), "degenerate hidden width");
        Mlp { in_dim, hidden, out_dim, time_dim }
    }

    fn layer_widths(&self) -> Vec<(usize, usize)> {
        let mut widths = Vec::with_capacity(self.hidden.len() + 1);
        let mut prev = self.in_dim;
        for &h in &self.hidden {
            widths.push((prev, h));
            prev = h;
        }
        widths.push((prev, self.out_dim));
        widths
    }

    pub fn n_params(&self) -> usize {
        let mut n = 0;
        let widths = self.layer_widths();
        let last = widths.len() - 1;
        for (l, &(p, h)) in widths.iter().enumerate() {
            n += h * p + h;
            if l < last && self.time_dim > 0 {
                n += h * self.time_dim;
            }
        }
        n
    }

    /// Uniform Xavier weights, zero biases, zero time gains (so a freshly
    /// initialized network ignores the times until training says otherwise).
    pub fn init_params(&self, key: RngKey) -> Vec<f64> {
        let mut rng = key.rng();
        let mut params = vec![0.0; self.n_params()];
        let widths = self.layer_widths();
        let last = widths.len() - 1;
        let mut off = 0;
        for (l, &(p, h)) in widths.iter().enumerate() {
            let a = (6.0 / (p + h) as f64).sqrt();
            for w in params[off..off + h * p].iter_mut() {
                *w = rng.random_range(-a..=a);
            }
            off += h * p + h; // biases stay zero
            if l < last && self.time_dim > 0 {
                off += h * self.time_dim; // gains stay zero
            }
        }
        debug_assert_eq!(off, params.len());
        params
    }

    pub fn forward(&self, params: &[f64], input: &[f64], tfeat: &[f64]) -> Vec<f64> {
        let (out, _) = self.forward_cached(params, input, tfeat);
        out
    }

    pub fn forward_cached(&self, params: &[f64], input: &[f64], tfeat: &[f64]) -> (Vec<f64>, MlpCache) {
        assert_eq!(params.len(), self.n_params(), "parameter vector length");
        assert_eq!(input.len(), self.in_dim, "input length");
        if self.time_dim > 0 {
            assert_eq!(tfeat.len(), self.time_dim, "time feature length");
        }
        let widths = self.layer_widths();
        let last = widths.len() - 1;
        let mut cache = MlpCache {
            acts: vec![input.to_vec()],
            tanhs: Vec::with_capacity(self.hidden.len()),
            gains: Vec::with_capacity(self.hidden.len()),
            tfeat: tfeat.to_vec(),
        };
        let mut off = 0;
        let mut a = input.to_vec();
        for (l, &(p, h)) in widths.iter().enumerate() {
            let w = &params[off..off + h * p];
            let b = &params[off + h * p..off + h * p + h];
            off += h * p + h;
            let mut u = vec![0.0; h];
            for i in 0..h {
                let row = &w[i * p..(i + 1) * p];
                let mut acc = b[i];
                for j in 0..p {
                    acc += row[j] * a[j];
                }
                u[i] = acc;
            }
            if l == last {
                return (u, cache);
            }
            let th: Vec<f64> = u.iter().map(|v| v.tanh()).collect();
            let mut y = th.clone();
            if self.time_dim > 0 {
                let s_mat = &params[off..off + h * self.time_dim];
                off += h * self.time_dim;
                let mut s = vec![0.0; h];
                for i in 0..h {
                    let row = &s_mat[i * self.time_dim..(i + 1) * self.time_dim];
                    let mut acc = 0.0;
                    for j in 0..self.time_dim {
                        acc += row[j] * tfeat[j];
                    }
                    s[i] = acc;
                    y[i] = th[i] * (1.0 + acc);
                }
                cache.gains.push(s);
            }
            cache.tanhs.push(th);
            cache.acts.push(y.clone());
            a = y;
        }
        unreachable!("output layer returns inside the loop");
    }

    /// Accumulates d(loss)/d(params) into `grad` given d(loss)/d(output),
    /// and optionally writes d(loss)/d(input) into `d_in`.
    pub fn backward(
        &self,
        params: &[f64],
        cache: &MlpCache,
        d_out: &[f64],
        grad: &mut [f64],
        mut d_in: Option<&mut [f64]>,
    ) {
        assert_eq!(grad.len(), self.n_params(), "gradient buffer length");
        assert_eq!(d_out.len(), self.out_dim, "output gradient length");
        let widths = self.layer_widths();
        let last = widths.len() - 1;

        // Parameter offsets per layer, forward order.
        let mut offsets = Vec::with_capacity(widths.len());
        let mut off = 0;
        for (l, &(p, h)) in widths.iter().enumerate() {
            offsets.push(off);
            off += h * p + h;
            if l < last && self.time_dim > 0 {
                off += h * self.time_dim;
            }
        }

        let mut d_a: Vec<f64> = d_out.to_vec();
        for l in (0..widths.len()).rev() {
            let (p, h) = widths[l];
            let base = offsets[l];
            let d_u: Vec<f64> = if l == last {
                d_a.clone()
            } else {
                let th = &cache.tanhs[l];
                let mut d_h = d_a.clone();
                if self.time_dim > 0 {
                    let s = &cache.gains[l];
                    let s_base = base + h * p + h;
                    for i in 0..h {
                        let gs = &mut grad[s_base + i * self.time_dim..s_base + (i + 1) * self.time_dim];
                        for j in 0..self.time_dim {
                            gs[j] += d_a[i] * th[i] * cache.tfeat[j];
                        }
                        d_h[i] = d_a[i] * (1.0 + s[i]);
                    }
                }
                (0..h).map(|i| d_h[i] * (1.0 - th[i] * th[i])).collect()
            };
            let a_prev = &cache.acts[l];
            for i in 0..h {
                let gw = &mut grad[base + i * p..base + (i + 1) * p];
                for j in 0..p {
                    gw[j] += d_u[i] * a_prev[j];
                }
            }
            for i in 0..h {
                grad[base + h * p + i] += d_u[i];
            }
            let w = &params[base..base + h * p];
            let mut d_prev = vec![0.0; p];
            for i in 0..h {
                let row = &w[i * p..(i + 1) * p];
                for j in 0..p {
                    d_prev[j] += row[j] * d_u[i];
                }
            }
            d_a = d_prev;
        }
        if let Some(di) = d_in.as_deref_mut() {
            assert_eq!(di.len(), self.in_dim);
            di.copy_from_slice(&d_a);
        }
    }
}

/// Central-difference gradient of `f` with respect to `params`, for checking
/// hand-written backward passes.
#[cfg(test)]
pub fn finite_diff<F: FnMut(&[f64]) -> f64>(params: &[f64], mut f: F, h: f64) -> Vec<f64> {
    let mut p = params.to_vec();
    let mut g = vec![0.0; p.len()];
    for i in 0..p.len() {
        let orig = p[i];
        p[i] = orig + h;
        let up = f(&p);
        p[i] = orig - h;
        let down = f(&p);
        p[i] = orig;
        g[i] = (up - down) / (2.0 * h);
    }
    g
}
