//! Optimal rigid superposition (Kabsch). Minimizes RMSD between two equal
//! length point sets over proper rotations and translations.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::{vec3, PointChain};
use crate::error::{CoreError, Result};

/// Rigid motion `p -> R p + t` aligning a mobile point set onto a fixed one,
/// together with the residual RMSD at the optimum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Alignment {
    pub rotation: [[f64; 3]; 3],
    pub translation: [f64; 3],
    pub rmsd: f64,
}

impl Alignment {
    pub fn apply(&self, p: [f64; 3]) -> [f64; 3] {
        let r = &self.rotation;
        [
            r[0][0] * p[0] + r[0][1] * p[1] + r[0][2] * p[2] + self.translation[0],
            r[1][0] * p[0] + r[1][1] * p[1] + r[1][2] * p[2] + self.translation[1],
            r[2][0] * p[0] + r[2][1] * p[1] + r[2][2] * p[2] + self.translation[2],
        ]
    }
}

/// Kabsch superposition of raw point sets. `mobile` and `fixed` must have
/// equal length >= 1. The returned rotation always has det = +1; coincident
/// or collinear inputs degrade gracefully (identity for fully degenerate
/// pairs) rather than erroring.
pub fn align_points(mobile: &[[f64; 3]], fixed: &[[f64; 3]]) -> Result<Alignment> {
    if mobile.len() != fixed.len() {
        return Err(CoreError::InvalidArgument(format!(
            "kabsch: point counts differ ({} vs {})",
            mobile.len(),
            fixed.len()
        )));
    }
    if mobile.is_empty() {
        return Err(CoreError::InvalidArgument("kabsch: empty point sets".into()));
    }

    let n = mobile.len() as f64;
    let mc = vec3::centroid(mobile);
    let fc = vec3::centroid(fixed);

    // Cross-covariance H = sum (m - mc)(f - fc)^T.
    let mut h = Matrix3::<f64>::zeros();
    for (m, f) in mobile.iter().zip(fixed) {
        let dm = vec3::sub(*m, mc);
        let df = vec3::sub(*f, fc);
        for r in 0..3 {
            for c in 0..3 {
                h[(r, c)] += dm[r] * df[c];
            }
        }
    }

    // R = V diag(1,1,s) U^T with s correcting the handedness, maximizing
    // tr(R H) over proper rotations.
    let svd = h.svd(true, true);
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(CoreError::Numeric("kabsch: SVD failed".into())),
    };
    let v = v_t.transpose();
    let s = (v * u.transpose()).determinant().signum();
    let r = v * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, s)) * u.transpose();

    let mut rotation = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            rotation[i][j] = r[(i, j)];
        }
    }
    let rm = [
        rotation[0][0] * mc[0] + rotation[0][1] * mc[1] + rotation[0][2] * mc[2],
        rotation[1][0] * mc[0] + rotation[1][1] * mc[1] + rotation[1][2] * mc[2],
        rotation[2][0] * mc[0] + rotation[2][1] * mc[1] + rotation[2][2] * mc[2],
    ];
    let translation = vec3::sub(fc, rm);

    let out = Alignment { rotation, translation, rmsd: 0.0 };
    let mut ss = 0.0;
    for (m, f) in mobile.iter().zip(fixed) {
        ss += vec3::dist2(out.apply(*m), *f);
    }
    Ok(Alignment { rmsd: (ss / n).sqrt(), ..out })
}

/// Superpose one chain onto another. Chains must have equal length.
pub fn kabsch_align(mobile: &PointChain, fixed: &PointChain) -> Result<Alignment> {
    align_points(&mobile.coords, &fixed.coords)
}
