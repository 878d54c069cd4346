use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;

use crate::error::{CoreError, Result};

/// Ceiling applied to both Langevin weights; the first step evaluates at
/// t = 0 where the raw weights blow up, and runs with this clamped value.
pub const DEFAULT_BETA_CLAMP: f64 = 1e3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    /// t(u) = (1 - exp(-gamma u)) / (1 - exp(-gamma)); front-loads steps
    /// near t = 0.
    Exponential,
    /// t(u) = u^2; back-loads steps near t = 0.
    Quadratic,
    Linear,
}

/// Discrete time grids for the two branches. Both run s = 0..=steps with
/// t(0) = 0 and t(steps) = 1; the branches advance at different rates so
/// coordinates resolve before latents commit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleSpec {
    pub steps: usize,
    pub kind_x: ScheduleKind,
    pub kind_z: ScheduleKind,
    pub gamma_x: f64,
}

impl Default for ScheduleSpec {
    fn default() -> Self {
        ScheduleSpec {
            steps: 400,
            kind_x: ScheduleKind::Exponential,
            kind_z: ScheduleKind::Quadratic,
            gamma_x: 3.0,
        }
    }
}

fn eval_kind(kind: ScheduleKind, gamma: f64, u: f64) -> f64 {
    match kind {
        ScheduleKind::Exponential => (1.0 - (-gamma * u).exp()) / (1.0 - (-gamma).exp()),
        ScheduleKind::Quadratic => u * u,
        ScheduleKind::Linear => u,
    }
}

impl ScheduleSpec {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(CoreError::Config("schedule needs steps >= 1".into()));
        }
        if !(self.gamma_x.is_finite() && self.gamma_x > 0.0) {
            return Err(CoreError::Config(format!("gamma_x must be positive, got {}", self.gamma_x)));
        }
        Ok(())
    }

    pub fn t_x(&self, s: usize) -> f64 {
        debug_assert!(s <= self.steps);
        if s == self.steps {
            return 1.0; // exact endpoint regardless of rounding in eval
        }
        eval_kind(self.kind_x, self.gamma_x, s as f64 / self.steps as f64)
    }

    pub fn t_z(&self, s: usize) -> f64 {
        debug_assert!(s <= self.steps);
        if s == self.steps {
            return 1.0;
        }
        eval_kind(self.kind_z, self.gamma_x, s as f64 / self.steps as f64)
    }

    /// Grid index whose t_x matches `t` to within 1e-9, if any. Restarted
    /// trajectories must resume exactly on the grid.
    pub fn step_for_t_x(&self, t: f64) -> Option<usize> {
        (0..=self.steps).find(|&s| (self.t_x(s) - t).abs() < 1e-9)
    }
}

/// Langevin weight on the coordinate branch: 1/t, clamped.
pub fn beta_x(t: f64, clamp: f64) -> f64 {
    if t <= 0.0 {
        return clamp;
    }
    (1.0 / t).min(clamp)
}

/// Langevin weight on the latent branch: (pi/2) tan((pi/2)(1 - t)),
/// clamped. Zero at t = 1, diverges toward t = 0.
pub fn beta_z(t: f64, clamp: f64) -> f64 {
    if t <= 0.0 {
        return clamp;
    }
    if t >= 1.0 {
        return 0.0;
    }
    (FRAC_PI_2 * (FRAC_PI_2 * (1.0 - t)).tan()).min(clamp)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoints_and_monotonicity() {
        let sch = ScheduleSpec::default();
        assert_eq!(sch.t_x(0), 0.0);
        assert_eq!(sch.t_z(0), 0.0);
        assert_eq!(sch.t_x(sch.steps), 1.0);
        assert_eq!(sch.t_z(sch.steps), 1.0);
        for s in 0..sch.steps {
            assert!(sch.t_x(s + 1) > sch.t_x(s));
            assert!(sch.t_z(s + 1) > sch.t_z(s));
        }
    }

    #[test]
    fn coords_lead_latents_on_default_grids() {
        // The concave exponential grid dominates u, the quadratic grid sits
        // below u, so t_x(s) >= t_z(s) everywhere on the shared index.
        let sch = ScheduleSpec::default();
        for s in 0..=sch.steps {
            assert!(
                sch.t_x(s) >= sch.t_z(s),
                "branch order violated at s = {}: {} < {}",
                s,
                sch.t_x(s),
                sch.t_z(s)
            );
        }
    }

    #[test]
    fn exponential_midgrid_value() {
        let sch = ScheduleSpec::default();
        let u: f64 = 0.5;
        let want = (1.0 - (-3.0 * u).exp()) / (1.0 - (-3.0f64).exp());
        assert!((sch.t_x(200) - want).abs() < 1e-15);
        assert!((sch.t_z(200) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn beta_values() {
        assert_eq!(beta_x(0.5, DEFAULT_BETA_CLAMP), 2.0);
        assert_eq!(beta_x(0.0, DEFAULT_BETA_CLAMP), DEFAULT_BETA_CLAMP);
        assert_eq!(beta_x(1e-9, DEFAULT_BETA_CLAMP), DEFAULT_BETA_CLAMP);
        assert_eq!(beta_z(1.0, DEFAULT_BETA_CLAMP), 0.0);
        assert_eq!(beta_z(1e-12, DEFAULT_BETA_CLAMP), DEFAULT_BETA_CLAMP);
        // (pi/2) tan(pi/4) = pi/2 at t = 1/2.
        assert!((beta_z(0.5, DEFAULT_BETA_CLAMP) - FRAC_PI_2).abs() < 1e-15);
        // Clamp disabled entirely when set to zero (pure-ODE configuration).
        assert_eq!(beta_x(0.5, 0.0), 0.0);
        assert_eq!(beta_z(0.5, 0.0), 0.0);
    }

    #[test]
    fn step_lookup_round_trips() {
        let sch = ScheduleSpec::default();
        for s in [0usize, 1, 17, 200, 399, 400] {
            assert_eq!(sch.step_for_t_x(sch.t_x(s)), Some(s));
        }
        assert_eq!(sch.step_for_t_x(0.1234567), None);
    }

    #[test]
    fn rejects_bad_config() {
        let mut sch = ScheduleSpec::default();
        sch.steps = 0;
        assert!(sch.validate().is_err());
        let mut sch = ScheduleSpec::default();
        sch.gamma_x = -1.0;
        assert!(sch.validate().is_err());
    }
}
