use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{CoreError, Result};
use crate::flow::{NoisyState, TrainableField, VelocityField};
use crate::rngkit::RngKey;

use super::nn::Mlp;
use super::TargetContext;

/// Shape of the denoiser. Every residue is featurized independently with
/// its own coordinates and latents plus a pooled, permutation-invariant
/// summary of the target, so the network sees absolute positions: placing
/// the binder requires reading the target features rather than any origin
/// shortcut.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldArch {
    pub d_z: usize,
    pub hidden: Vec<usize>,
    /// Octave pairs of the sinusoidal time embedding, per time channel.
    pub time_freqs: usize,
    /// Octave pairs of the chain-position embedding.
    pub relpos_freqs: usize,
    /// Width of the fold-class one-hot; 0 disables class conditioning.
    pub n_classes: usize,
}

impl Default for FieldArch {
    fn default() -> Self {
        FieldArch {
            d_z: crate::flow::DEFAULT_D_Z,
            hidden: vec![48, 48],
            time_freqs: 3,
            relpos_freqs: 2,
            n_classes: 0,
        }
    }
}

impl FieldArch {
    pub fn time_dim(&self) -> usize {
        4 * self.time_freqs + 1
    }

    pub fn in_dim(&self) -> usize {
        3 + self.d_z + 4 * self.time_freqs + 1 + 2 * self.relpos_freqs + 8 + self.n_classes
    }

    pub fn out_dim(&self) -> usize {
        3 + self.d_z
    }

    pub fn mlp(&self) -> Mlp {
        Mlp::new(self.in_dim(), self.hidden.clone(), self.out_dim(), self.time_dim())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpField {
    pub arch: FieldArch,
    pub params: Vec<f64>,
}

impl MlpField {
    pub fn init(arch: FieldArch, key: RngKey) -> Self {
        let params = arch.mlp().init_params(key);
        MlpField { arch, params }
    }

    /// All-zero parameters: the identically-zero field.
    pub fn zeros(arch: FieldArch) -> Self {
        let n = arch.mlp().n_params();
        MlpField { arch, params: vec![0.0; n] }
    }

    pub fn validate(&self) -> Result<()> {
        if self.params.len() != self.arch.mlp().n_params() {
            return Err(CoreError::Shape(format!(
                "parameter vector length {} does not match architecture ({})",
                self.params.len(),
                self.arch.mlp().n_params()
            )));
        }
        if !self.params.iter().all(|p| p.is_finite()) {
            return Err(CoreError::Numeric("non-finite parameter".into()));
        }
        Ok(())
    }

    fn time_features(&self, t_x: f64, t_z: f64) -> Vec<f64> {
        let mut f = Vec::with_capacity(self.arch.time_dim());
        for t in [t_x, t_z] {
            for k in 0..self.arch.time_freqs {
                let w = PI * (1u64 << k) as f64 * t;
                f.push(w.sin());
                f.push(w.cos());
            }
        }
        f.push(1.0);
        f
    }

    fn pooled_features(&self, ctx: &TargetContext) -> Vec<f64> {
        let mut f = Vec::with_capacity(8 + self.arch.n_classes);
        let hc = ctx.hotspot_centroid();
        let tc = ctx.centroid();
        f.extend_from_slice(&hc);
        f.extend_from_slice(&tc);
        f.push((1.0 + ctx.points.len() as f64).ln());
        f.push(ctx.n_hotspots() as f64 / ctx.points.len() as f64);
        for c in 0..self.arch.n_classes {
            f.push(if ctx.class_id == Some(c as u32) { 1.0 } else { 0.0 });
        }
        f
    }

    fn token_input(
        &self,
        noisy: &NoisyState,
        pooled: &[f64],
        tfeat: &[f64],
        i: usize,
    ) -> Vec<f64> {
        let n = noisy.state.n();
        let mut f = Vec::with_capacity(self.arch.in_dim());
        f.extend_from_slice(&noisy.state.coords[i]);
        f.extend_from_slice(noisy.state.latent(i));
        // Time features minus the trailing bias channel.
        f.extend_from_slice(&tfeat[..tfeat.len() - 1]);
        let p = if n > 1 { i as f64 / (n - 1) as f64 } else { 0.5 };
        f.push(2.0 * p - 1.0);
        for k in 0..self.arch.relpos_freqs {
            let w = PI * (1u64 << k) as f64 * p;
            f.push(w.sin());
            f.push(w.cos());
        }
        f.extend_from_slice(pooled);
        debug_assert_eq!(f.len(), self.arch.in_dim());
        f
    }

    fn check_inputs(&self, noisy: &NoisyState, ctx: &TargetContext) -> Result<()> {
        noisy.state.validate()?;
        ctx.validate()?;
        if noisy.state.d_z != self.arch.d_z {
            return Err(CoreError::Shape(format!(
                "state d_z {} != field d_z {}",
                noisy.state.d_z, self.arch.d_z
            )));
        }
        for (name, t) in [("t_x", noisy.t_x), ("t_z", noisy.t_z)] {
            if !(0.0..=1.0).contains(&t) {
                return Err(CoreError::InvalidArgument(format!("{} = {} outside [0, 1]", name, t)));
            }
        }
        if ctx.n_classes != 0 && ctx.n_classes != self.arch.n_classes {
            return Err(CoreError::Shape(format!(
                "context n_classes {} != field n_classes {}",
                ctx.n_classes, self.arch.n_classes
            )));
        }
        Ok(())
    }
}

impl VelocityField for MlpField {
    fn eval(&self, noisy: &NoisyState, ctx: &TargetContext) -> Result<(Vec<[f64; 3]>, Vec<f64>)> {
        self.check_inputs(noisy, ctx)?;
        let mlp = self.arch.mlp();
        let tfeat = self.time_features(noisy.t_x, noisy.t_z);
        let pooled = self.pooled_features(ctx);
        let n = noisy.state.n();
        let mut v_x = Vec::with_capacity(n);
        let mut v_z = Vec::with_capacity(n * self.arch.d_z);
        for i in 0..n {
            let input = self.token_input(noisy, &pooled, &tfeat, i);
            let out = mlp.forward(&self.params, &input, &tfeat);
            if !out.iter().all(|v| v.is_finite()) {
                return Err(CoreError::Numeric(format!("non-finite velocity at residue {}", i)));
            }
            v_x.push([out[0], out[1], out[2]]);
            v_z.extend_from_slice(&out[3..]);
        }
        Ok((v_x, v_z))
    }

    fn d_z(&self) -> usize {
        self.arch.d_z
    }
}

impl TrainableField for MlpField {
    fn n_params(&self) -> usize {
        self.params.len()
    }

    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn sq_err_grad(
        &self,
        noisy: &NoisyState,
        ctx: &TargetContext,
        tgt_x: &[[f64; 3]],
        tgt_z: &[f64],
        w_x: f64,
        w_z: f64,
        grad: &mut [f64],
    ) -> Result<(f64, f64)> {
        self.check_inputs(noisy, ctx)?;
        let n = noisy.state.n();
        let d_z = self.arch.d_z;
        if tgt_x.len() != n || tgt_z.len() != n * d_z {
            return Err(CoreError::Shape("target shapes do not match state".into()));
        }
        if grad.len() != self.params.len() {
            return Err(CoreError::Shape("gradient buffer length mismatch".into()));
        }
        let mlp = self.arch.mlp();
        let tfeat = self.time_features(noisy.t_x, noisy.t_z);
        let pooled = self.pooled_features(ctx);
        let mut sq_x = 0.0;
        let mut sq_z = 0.0;
        for i in 0..n {
            let input = self.token_input(noisy, &pooled, &tfeat, i);
            let (out, cache) = mlp.forward_cached(&self.params, &input, &tfeat);
            let mut d_out = vec![0.0; out.len()];
            for k in 0..3 {
                let r = out[k] - tgt_x[i][k];
                sq_x += r * r;
                d_out[k] = w_x * 2.0 * r;
            }
            for j in 0..d_z {
                let r = out[3 + j] - tgt_z[i * d_z + j];
                sq_z += r * r;
                d_out[3 + j] = w_z * 2.0 * r;
            }
            mlp.backward(&self.params, &cache, &d_out, grad, None);
        }
        if !(sq_x.is_finite() && sq_z.is_finite()) {
            return Err(CoreError::Numeric("non-finite squared error".into()));
        }
        Ok((sq_x, sq_z))
    }
}
