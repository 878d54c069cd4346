//! The generative core: linear interpolants over coordinates and latents
//! with translation noise, the time-sampling mixtures, conditional flow
//! matching and beta-ELBO losses, velocity-to-score conversion, and the
//! two-time SDE sampler.

mod interpolant;
mod loss;
mod sde;
mod schedule;
mod score;
mod times;

pub use interpolant::{interpolate, InterpolantDraw};
pub use loss::{cfm_loss, elbo_loss, gaussian_kl, CodecBatchItem, CodecDecoder, CodecEncoder};
pub use sde::{sde_step, EvalCounter, Sampler, SdeParams};
pub use schedule::{beta_x, beta_z, ScheduleKind, ScheduleSpec, DEFAULT_BETA_CLAMP};
pub use score::{velocity_to_score, velocity_to_score_vec3};
pub use times::{sample_times, TimeBranch};

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::model::TargetContext;
use crate::rngkit::RngKey;

/// Latent width used across the toy tasks.
pub const DEFAULT_D_Z: usize = 8;

/// Std of the global translation noise added to the coordinate noise
/// endpoint, in model units.
pub const DEFAULT_C_D: f64 = 0.2;

/// The object being generated: per-residue coordinates plus per-residue
/// latent channels (row-major, `d_z` per residue).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinderState {
    pub coords: Vec<[f64; 3]>,
    pub latents: Vec<f64>,
    pub d_z: usize,
}

impl BinderState {
    pub fn zeros(n: usize, d_z: usize) -> Self {
        BinderState { coords: vec![[0.0; 3]; n], latents: vec![0.0; n * d_z], d_z }
    }

    pub fn n(&self) -> usize {
        self.coords.len()
    }

    pub fn latent(&self, i: usize) -> &[f64] {
        &self.latents[i * self.d_z..(i + 1) * self.d_z]
    }

    pub fn validate(&self) -> Result<()> {
        if self.coords.is_empty() || self.d_z == 0 {
            return Err(CoreError::Shape("state needs N >= 1 and d_z >= 1".into()));
        }
        if self.latents.len() != self.coords.len() * self.d_z {
            return Err(CoreError::Shape(format!(
                "latents length {} != N {} x d_z {}",
                self.latents.len(),
                self.coords.len(),
                self.d_z
            )));
        }
        let finite = self.coords.iter().flatten().all(|v| v.is_finite())
            && self.latents.iter().all(|v| v.is_finite());
        if !finite {
            return Err(CoreError::Numeric("state contains non-finite entries".into()));
        }
        Ok(())
    }
}

/// A partially denoised state tagged with its two interpolation times and
/// the RNG stream that owns the rest of its trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct NoisyState {
    pub state: BinderState,
    pub t_x: f64,
    pub t_z: f64,
    pub rng_key: RngKey,
}

/// A denoising vector field over both branches. `eval` must be deterministic
/// given inputs; all sampling noise lives in the SDE loop.
pub trait VelocityField {
    /// Velocities (v_x: N x 3, v_z: N x d_z row-major).
    fn eval(&self, noisy: &NoisyState, ctx: &TargetContext) -> Result<(Vec<[f64; 3]>, Vec<f64>)>;
    fn d_z(&self) -> usize;
}

/// A field with a flat trainable parameter vector and a reverse-mode
/// backward pass for squared-error objectives.
pub trait TrainableField: VelocityField {
    fn n_params(&self) -> usize;
    fn params(&self) -> &[f64];
    fn params_mut(&mut self) -> &mut [f64];

    /// Forward plus backward in one pass: accumulates
    /// `w_x * d||v_x - tgt_x||^2/dtheta + w_z * d||v_z - tgt_z||^2/dtheta`
    /// into `grad` and returns the two unweighted squared-error sums.
    fn sq_err_grad(
        &self,
        noisy: &NoisyState,
        ctx: &TargetContext,
        tgt_x: &[[f64; 3]],
        tgt_z: &[f64],
        w_x: f64,
        w_z: f64,
        grad: &mut [f64],
    ) -> Result<(f64, f64)>;
}

/// Decodes the latent channels of a fully denoised state into discrete
/// labels (argmax over the decoder's label logits).
pub trait LabelDecoder {
    fn decode_labels(&self, state: &BinderState) -> Result<Vec<u8>>;
}
