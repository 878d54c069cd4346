use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{CoreError, Result};
use crate::rngkit::{std_normal, RngKey};

use super::{BinderState, NoisyState};

/// One draw of the noise endpoint: standard-normal coordinates and latents
/// plus a single global translation shared by every residue's noise.
#[derive(Clone, Debug, PartialEq)]
pub struct InterpolantDraw {
    pub x0: Vec<[f64; 3]>,
    pub z0: Vec<f64>,
    /// Translation applied to the whole coordinate noise cloud, already
    /// scaled by c_d. Zero vector when c_d = 0.
    pub d: [f64; 3],
    pub c_d: f64,
}

impl InterpolantDraw {
    /// Draws x0, z0 ~ N(0, I) and d ~ N(0, c_d^2 I). The three translation
    /// normals are consumed from `rng` even when c_d = 0, so runs that
    /// differ only in c_d share every other random draw.
    pub fn sample<R: Rng + ?Sized>(rng: &mut R, n: usize, d_z: usize, c_d: f64) -> Self {
        let normal = StandardNormal;
        let x0: Vec<[f64; 3]> = (0..n)
            .map(|_| {
                [
                    normal.sample(rng),
                    normal.sample(rng),
                    normal.sample(rng),
                ]
            })
            .collect();
        let z0: Vec<f64> = (0..n * d_z).map(|_| normal.sample(rng)).collect();
        let d = [
            c_d * std_normal(rng),
            c_d * std_normal(rng),
            c_d * std_normal(rng),
        ];
        InterpolantDraw { x0, z0, d, c_d }
    }

    /// Coordinate noise endpoint for residue i: x0_i + d.
    pub fn noise_coord(&self, i: usize) -> [f64; 3] {
        [
            self.x0[i][0] + self.d[0],
            self.x0[i][1] + self.d[1],
            self.x0[i][2] + self.d[2],
        ]
    }
}

/// Linear interpolation between the noise draw and a clean state, each
/// branch at its own time:
///   x(t_x) = t_x * x  + (1 - t_x) * (x0 + d)
///   z(t_z) = t_z * z  + (1 - t_z) * z0
/// `clean.latents` must already hold the encoded latents E(x).
pub fn interpolate(
    clean: &BinderState,
    draw: &InterpolantDraw,
    t_x: f64,
    t_z: f64,
    rng_key: RngKey,
) -> Result<NoisyState> {
    clean.validate()?;
    if draw.x0.len() != clean.n() || draw.z0.len() != clean.latents.len() {
        return Err(CoreError::Shape(format!(
            "draw shape ({}, {}) does not match state ({}, {})",
            draw.x0.len(),
            draw.z0.len(),
            clean.n(),
            clean.latents.len()
        )));
    }
    for (name, t) in [("t_x", t_x), ("t_z", t_z)] {
        if !(0.0..=1.0).contains(&t) || !t.is_finite() {
            return Err(CoreError::InvalidArgument(format!("{} = {} outside [0, 1]", name, t)));
        }
    }
    let n = clean.n();
    let mut coords = Vec::with_capacity(n);
    for i in 0..n {
        let e = draw.noise_coord(i);
        coords.push([
            t_x * clean.coords[i][0] + (1.0 - t_x) * e[0],
            t_x * clean.coords[i][1] + (1.0 - t_x) * e[1],
            t_x * clean.coords[i][2] + (1.0 - t_x) * e[2],
        ]);
    }
    let latents = clean
        .latents
        .iter()
        .zip(&draw.z0)
        .map(|(&z1, &z0)| t_z * z1 + (1.0 - t_z) * z0)
        .collect();
    Ok(NoisyState {
        state: BinderState { coords, latents, d_z: clean.d_z },
        t_x,
        t_z,
        rng_key,
    })
}
