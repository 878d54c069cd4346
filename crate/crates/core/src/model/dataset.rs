//! Synthetic binder-placement data. Each sample is a ring-shaped target
//! with a few designated hotspots and a short arc of binder residues docked
//! at one hotspot, plus per-residue labels and a 2-d local geometry code.
//! Latents are the canonical linear code of (geometry, label) with Gaussian
//! channel noise, i.e. a posterior draw from the hand-wired identity codec.

use rand::Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

use crate::error::{CoreError, Result};
use crate::flow::BinderState;
use crate::rngkit::{std_normal, RngKey};

use super::codec::{ToyCodec, AUX_DIM, N_LABELS};
use super::TargetContext;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TaskSpec {
    /// Points on the target ring.
    pub n_target: usize,
    pub target_radius: f64,
    /// Hotspot count; must be in 1..=n_target.
    pub n_hotspots: usize,
    /// Binder residues per sample.
    pub binder_len: usize,
    /// Arc radius range the binder is drawn from.
    pub arc_radius: (f64, f64),
    /// Angle swept by the binder arc, radians.
    pub arc_span: f64,
    /// Std of the iid coordinate jitter.
    pub jitter: f64,
    /// Std of the latent channel noise around the canonical code.
    pub latent_noise: f64,
    pub d_z: usize,
    /// Fold-class one-hot width; 0 disables class conditioning. Classes
    /// bucket the arc radius so the label carries real signal.
    pub n_classes: usize,
    /// Subtract the joint (target + binder) centroid from every sample, the
    /// convention the translation-noise mechanism is designed around.
    pub center_complex: bool,
}

impl Default for TaskSpec {
    fn default() -> Self {
        TaskSpec {
            n_target: 24,
            target_radius: 6.0,
            n_hotspots: 4,
            binder_len: 8,
            arc_radius: (1.5, 3.5),
            arc_span: 1.8,
            jitter: 0.25,
            latent_noise: 0.1,
            d_z: crate::flow::DEFAULT_D_Z,
            n_classes: 0,
            center_complex: true,
        }
    }
}

impl TaskSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_target == 0 || self.binder_len == 0 {
            return Err(CoreError::InvalidArgument("need target points and binder residues".into()));
        }
        if self.n_hotspots == 0 || self.n_hotspots > self.n_target {
            return Err(CoreError::InvalidArgument(format!(
                "hotspot count {} outside 1..={}",
                self.n_hotspots, self.n_target
            )));
        }
        if !(self.target_radius > 0.0) || !(self.arc_radius.0 > 0.0) || self.arc_radius.1 < self.arc_radius.0 {
            return Err(CoreError::InvalidArgument("bad radius configuration".into()));
        }
        if !(self.arc_span > 0.0 && self.arc_span < TAU) {
            return Err(CoreError::InvalidArgument(format!("arc span {} outside (0, 2pi)", self.arc_span)));
        }
        if self.jitter < 0.0 || self.latent_noise < 0.0 {
            return Err(CoreError::InvalidArgument("noise levels must be nonnegative".into()));
        }
        if self.d_z < AUX_DIM + N_LABELS {
            return Err(CoreError::InvalidArgument(format!(
                "d_z {} too small for the canonical code ({})",
                self.d_z,
                AUX_DIM + N_LABELS
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToyRecord {
    pub state: BinderState,
    pub labels: Vec<u8>,
    pub aux: Vec<[f64; AUX_DIM]>,
    pub ctx: TargetContext,
    /// Ring index of the hotspot the binder is docked at.
    pub anchor: usize,
    pub arc_radius: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToyDataset {
    pub spec: TaskSpec,
    pub records: Vec<ToyRecord>,
}

/// Rigid translation of a task context, for off-origin evaluation.
pub fn translate_context(ctx: &TargetContext, delta: [f64; 3]) -> TargetContext {
    let mut out = ctx.clone();
    for p in out.points.iter_mut() {
        for k in 0..3 {
            p[k] += delta[k];
        }
    }
    out
}

pub fn gen_toy_binder_dataset(spec: &TaskSpec, n_samples: usize, seed: u64) -> Result<ToyDataset> {
    spec.validate()?;
    let codec = ToyCodec::identity(spec.d_z, spec.latent_noise.max(1e-6))?;
    let root = RngKey::root(seed).child("toyset");
    let mut records = Vec::with_capacity(n_samples);
    for idx in 0..n_samples {
        let key = root.child_idx(idx as u64);
        let mut rng = key.child("geom").rng();

        let phase: f64 = rng.random_range(0.0..TAU);
        let m = spec.n_target;
        let mut points: Vec<[f64; 3]> = (0..m)
            .map(|j| {
                let a = phase + TAU * j as f64 / m as f64;
                [spec.target_radius * a.cos(), spec.target_radius * a.sin(), 0.0]
            })
            .collect();

        // Hotspots: a uniform draw of distinct ring indices.
        let mut indices: Vec<usize> = (0..m).collect();
        for i in 0..spec.n_hotspots {
            let j = rng.random_range(i..m);
            indices.swap(i, j);
        }
        let mut hotspot = vec![false; m];
        for &i in &indices[..spec.n_hotspots] {
            hotspot[i] = true;
        }
        let anchor_slot = rng.random_range(0..spec.n_hotspots);
        let anchor = indices[anchor_slot];

        // Binder arc docked at the anchor: radius r, swept in the local
        // (outward, tangent) frame, touching the anchor at its midpoint.
        let r = rng.random_range(spec.arc_radius.0..=spec.arc_radius.1);
        let a_pt = points[anchor];
        let u = [a_pt[0] / spec.target_radius, a_pt[1] / spec.target_radius, 0.0];
        let w = [-u[1], u[0], 0.0];
        let c = [a_pt[0] + r * u[0], a_pt[1] + r * u[1], 0.0];
        let k_len = spec.binder_len;
        let dtheta = if k_len > 1 { spec.arc_span / (k_len - 1) as f64 } else { 0.0 };
        let tilt: f64 = rng.random_range(-0.3..=0.3);
        let mut coords = Vec::with_capacity(k_len);
        let mut aux = Vec::with_capacity(k_len);
        for ki in 0..k_len {
            let theta = -0.5 * spec.arc_span + ki as f64 * dtheta;
            let radial = -r * theta.cos();
            let tangent = r * theta.sin();
            let mut p = [
                c[0] + radial * u[0] + tangent * w[0],
                c[1] + radial * u[1] + tangent * w[1],
                tilt * tangent,
            ];
            for coord in p.iter_mut() {
                *coord += spec.jitter * std_normal(&mut rng);
            }
            coords.push(p);
            let (lo, hi) = spec.arc_radius;
            let g0 = if hi > lo { 2.0 * (r - lo) / (hi - lo) - 1.0 } else { 0.0 };
            let g1 = if k_len > 1 { 2.0 * theta / spec.arc_span } else { 0.0 };
            aux.push([g0, g1]);
        }
        let labels: Vec<u8> = (0..k_len).map(|ki| ((anchor + ki) % N_LABELS) as u8).collect();

        if spec.center_complex {
            let mut cm = [0.0; 3];
            let total = (m + k_len) as f64;
            for p in points.iter().chain(coords.iter()) {
                for k in 0..3 {
                    cm[k] += p[k] / total;
                }
            }
            for p in points.iter_mut().chain(coords.iter_mut()) {
                for k in 0..3 {
                    p[k] -= cm[k];
                }
            }
        }

        let class_id = if spec.n_classes > 0 {
            let (lo, hi) = spec.arc_radius;
            let frac = if hi > lo { (r - lo) / (hi - lo) } else { 0.0 };
            let c = ((frac * spec.n_classes as f64) as usize).min(spec.n_classes - 1);
            Some(c as u32)
        } else {
            None
        };
        let ctx = TargetContext { points, hotspot, class_id, n_classes: spec.n_classes };
        ctx.validate()?;

        // Hotspot contact is a generation invariant, not a hope: the arc
        // midpoint sits on the anchor up to jitter.
        let touch = coords
            .iter()
            .map(|p| {
                let a = &ctx.points[anchor];
                ((p[0] - a[0]).powi(2) + (p[1] - a[1]).powi(2) + (p[2] - a[2]).powi(2)).sqrt()
            })
            .fold(f64::INFINITY, f64::min);
        if touch > crate::pipeline::INTERFACE_CUTOFF {
            return Err(CoreError::Validation(format!(
                "sample {} lost hotspot contact ({:.2})",
                idx, touch
            )));
        }

        let mu = codec.encode_mean(&coords, &aux, &labels)?;
        let mut zrng = key.child("z").rng();
        let latents: Vec<f64> = mu
            .iter()
            .map(|&v| v + spec.latent_noise * std_normal(&mut zrng))
            .collect();

        records.push(ToyRecord {
            state: BinderState { coords, latents, d_z: spec.d_z },
            labels,
            aux,
            ctx,
            anchor,
            arc_radius: r,
        });
    }
    Ok(ToyDataset { spec: spec.clone(), records })
}
