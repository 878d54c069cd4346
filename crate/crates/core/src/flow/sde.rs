use std::sync::atomic::{AtomicU64, Ordering};

use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{CoreError, Result};
use crate::model::TargetContext;
use crate::rngkit::RngKey;

use super::schedule::{beta_x, beta_z, ScheduleSpec};
use super::score::velocity_to_score_vec3;
use super::{velocity_to_score, BinderState, InterpolantDraw, LabelDecoder, NoisyState, VelocityField};

/// Counts denoiser forward passes. Every evaluation in the crate goes
/// through [`EvalCounter::counted_eval`]; compute-scaling curves and run
/// manifests report this number, so there must be no other call path.
#[derive(Debug, Default)]
pub struct EvalCounter(AtomicU64);

impl EvalCounter {
    pub fn new() -> Self {
        EvalCounter(AtomicU64::new(0))
    }

    pub fn get(&self) -> u64 {
        self.0.load(Ordering::Relaxed)
    }

    pub fn reset(&self) {
        self.0.store(0, Ordering::Relaxed);
    }

    /// The single forward-pass site.
    pub fn counted_eval(
        &self,
        field: &dyn VelocityField,
        noisy: &NoisyState,
        ctx: &TargetContext,
    ) -> Result<(Vec<[f64; 3]>, Vec<f64>)> {
        self.0.fetch_add(1, Ordering::Relaxed);
        field.eval(noisy, ctx)
    }
}

/// Euler-Maruyama knobs. `beta_clamp = 0` switches the Langevin channel off
/// entirely (drift reduces to the plain velocity and no noise enters), which
/// together with the exact-score field is the deterministic-flow mode.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SdeParams {
    pub eta_x: f64,
    pub eta_z: f64,
    pub beta_clamp: f64,
}

impl Default for SdeParams {
    fn default() -> Self {
        SdeParams { eta_x: 0.1, eta_z: 0.1, beta_clamp: super::schedule::DEFAULT_BETA_CLAMP }
    }
}

fn check_on_grid(state: &NoisyState, schedule: &ScheduleSpec, step: usize) -> Result<()> {
    if step >= schedule.steps {
        return Err(CoreError::InvalidArgument(format!(
            "step {} out of range for a {}-step schedule",
            step, schedule.steps
        )));
    }
    let (tx, tz) = (schedule.t_x(step), schedule.t_z(step));
    if (state.t_x - tx).abs() > 1e-9 || (state.t_z - tz).abs() > 1e-9 {
        return Err(CoreError::InvalidArgument(format!(
            "state times ({}, {}) are not on the grid at step {} ({}, {})",
            state.t_x, state.t_z, step, tx, tz
        )));
    }
    Ok(())
}

/// One Euler-Maruyama update of both branches from grid index `step` to
/// `step + 1`:
///   x += (v_x + b_x * score_x) dt_x + eta_x * sqrt(2 b_x dt_x) * xi
/// and likewise for z with its own time, weight, and step size. Scores come
/// from the same forward pass via the velocity conversion. The per-step
/// Gaussian draws are consumed from `rng` in a fixed order (coords then
/// latents) regardless of eta, so configurations differing only in eta see
/// identical randomness elsewhere.
pub fn sde_step(
    state: &NoisyState,
    field: &dyn VelocityField,
    ctx: &TargetContext,
    step: usize,
    schedule: &ScheduleSpec,
    params: &SdeParams,
    rng: &mut ChaCha12Rng,
    counter: &EvalCounter,
) -> Result<NoisyState> {
    check_on_grid(state, schedule, step)?;
    let (v_x, v_z) = counter.counted_eval(field, state, ctx)?;
    let n = state.state.n();
    if v_x.len() != n || v_z.len() != state.state.latents.len() {
        return Err(CoreError::Shape(format!(
            "field output ({}, {}) does not match state ({}, {})",
            v_x.len(),
            v_z.len(),
            n,
            state.state.latents.len()
        )));
    }
    let (t_x0, t_x1) = (schedule.t_x(step), schedule.t_x(step + 1));
    let (t_z0, t_z1) = (schedule.t_z(step), schedule.t_z(step + 1));
    let (dt_x, dt_z) = (t_x1 - t_x0, t_z1 - t_z0);

    let langevin = params.beta_clamp > 0.0;
    let b_x = beta_x(t_x0, params.beta_clamp);
    let b_z = beta_z(t_z0, params.beta_clamp);
    let score_x = if langevin {
        Some(velocity_to_score_vec3(&v_x, &state.state.coords, t_x0)?)
    } else {
        None
    };
    let score_z = if langevin {
        Some(velocity_to_score(&v_z, &state.state.latents, t_z0)?)
    } else {
        None
    };
    let amp_x = if langevin { params.eta_x * (2.0 * b_x * dt_x).sqrt() } else { 0.0 };
    let amp_z = if langevin { params.eta_z * (2.0 * b_z * dt_z).sqrt() } else { 0.0 };

    let normal = StandardNormal;
    let mut coords = Vec::with_capacity(n);
    for i in 0..n {
        let mut p = [0.0; 3];
        for k in 0..3 {
            let xi: f64 = normal.sample(rng);
            let mut drift = v_x[i][k];
            if let Some(sc) = &score_x {
                drift += b_x * sc[i][k];
            }
            p[k] = state.state.coords[i][k] + dt_x * drift;
            if amp_x > 0.0 {
                p[k] += amp_x * xi;
            }
        }
        coords.push(p);
    }
    let mut latents = Vec::with_capacity(state.state.latents.len());
    for (j, &z) in state.state.latents.iter().enumerate() {
        let xi: f64 = normal.sample(rng);
        let mut drift = v_z[j];
        if let Some(sc) = &score_z {
            drift += b_z * sc[j];
        }
        let mut znew = z + dt_z * drift;
        if amp_z > 0.0 {
            znew += amp_z * xi;
        }
        latents.push(znew);
    }

    let out = BinderState { coords, latents, d_z: state.state.d_z };
    if out.validate().is_err() {
        return Err(CoreError::Numeric(format!("non-finite state after step {}", step)));
    }
    Ok(NoisyState { state: out, t_x: t_x1, t_z: t_z1, rng_key: state.rng_key })
}

/// Bundles everything needed to run trajectories against one target. Search
/// procedures drive `init` / `advance` / `decode` directly; `sample` is the
/// plain full-trajectory path.
pub struct Sampler<'a> {
    pub field: &'a dyn VelocityField,
    pub ctx: &'a TargetContext,
    pub schedule: &'a ScheduleSpec,
    pub params: SdeParams,
    pub c_d: f64,
    pub n_residues: usize,
    pub decoder: &'a dyn LabelDecoder,
    pub counter: &'a EvalCounter,
}

impl<'a> Sampler<'a> {
    /// Fresh noise state at t = 0. All init randomness comes from
    /// `key.child("init")`; step s of the trajectory then draws from
    /// `key.child("step").child_idx(s)`, so a trajectory is a pure function
    /// of its key and any suffix can be replayed from a stored state.
    pub fn init(&self, key: RngKey) -> NoisyState {
        let mut rng = key.child("init").rng();
        let d_z = self.field.d_z();
        let draw = InterpolantDraw::sample(&mut rng, self.n_residues, d_z, self.c_d);
        let coords = (0..self.n_residues).map(|i| draw.noise_coord(i)).collect();
        NoisyState {
            state: BinderState { coords, latents: draw.z0, d_z },
            t_x: 0.0,
            t_z: 0.0,
            rng_key: key,
        }
    }

    /// Grid index of a stored state, or an error if it sits off-grid.
    pub fn step_of(&self, state: &NoisyState) -> Result<usize> {
        let s = self.schedule.step_for_t_x(state.t_x).ok_or_else(|| {
            CoreError::InvalidArgument(format!("t_x = {} is not on the schedule grid", state.t_x))
        })?;
        if (state.t_z - self.schedule.t_z(s)).abs() > 1e-9 {
            return Err(CoreError::InvalidArgument(format!(
                "t_z = {} inconsistent with grid step {}",
                state.t_z, s
            )));
        }
        Ok(s)
    }

    /// Advances from the state's own grid index up to `to_step` inclusive
    /// of the last update (state ends at grid index `to_step`).
    pub fn advance(&self, state: NoisyState, to_step: usize) -> Result<NoisyState> {
        let from = self.step_of(&state)?;
        if to_step > self.schedule.steps || to_step < from {
            return Err(CoreError::InvalidArgument(format!(
                "cannot advance from step {} to {}",
                from, to_step
            )));
        }
        let step_key = state.rng_key.child("step");
        let mut cur = state;
        for s in from..to_step {
            let mut rng = step_key.child_idx(s as u64).rng();
            cur = sde_step(&cur, self.field, self.ctx, s, self.schedule, &self.params, &mut rng, self.counter)?;
        }
        Ok(cur)
    }

    /// Replaces the trajectory key, detaching a branched copy onto its own
    /// noise stream from the current step onward.
    pub fn with_key(&self, state: &NoisyState, key: RngKey) -> NoisyState {
        NoisyState { state: state.state.clone(), t_x: state.t_x, t_z: state.t_z, rng_key: key }
    }

    /// Decodes a terminal state (both times exactly 1) into coordinates and
    /// per-residue labels. Costs no forward passes.
    pub fn decode(&self, state: &NoisyState) -> Result<(BinderState, Vec<u8>)> {
        if state.t_x != 1.0 || state.t_z != 1.0 {
            return Err(CoreError::InvalidArgument(format!(
                "decode needs a terminal state, got times ({}, {})",
                state.t_x, state.t_z
            )));
        }
        let labels = self.decoder.decode_labels(&state.state)?;
        Ok((state.state.clone(), labels))
    }

    /// Full trajectory: init from `key` (or resume from `from`, which then
    /// owns the randomness via its stored key), run to t = 1, decode.
    pub fn sample(&self, key: RngKey, from: Option<NoisyState>) -> Result<(BinderState, Vec<u8>)> {
        let start = match from {
            Some(st) => st,
            None => self.init(key),
        };
        let end = self.advance(start, self.schedule.steps)?;
        self.decode(&end)
    }
}
