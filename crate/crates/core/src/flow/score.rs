use crate::error::{CoreError, Result};

#[inline]
fn score_elem(v: f64, x: f64, t: f64) -> f64 {
    if t == 0.0 {
        // Prior score: the t = 0 marginal is the standard-normal source.
        -x
    } else {
        -(x - t * v) / (1.0 - t)
    }
}

/// Converts a velocity under the linear interpolant into the marginal score
/// at the same point: score = -(x_t - t v) / (1 - t). Undefined at t = 1.
pub fn velocity_to_score(v: &[f64], x_t: &[f64], t: f64) -> Result<Vec<f64>> {
    if v.len() != x_t.len() {
        return Err(CoreError::Shape(format!(
            "velocity length {} != state length {}",
            v.len(),
            x_t.len()
        )));
    }
    if !(0.0..1.0).contains(&t) {
        if t == 1.0 {
            return Err(CoreError::ScoreSingularity);
        }
        return Err(CoreError::InvalidArgument(format!("t = {} outside [0, 1)", t)));
    }
    Ok(v.iter().zip(x_t).map(|(&v, &x)| score_elem(v, x, t)).collect())
}

/// Coordinate-shaped variant of [`velocity_to_score`].
pub fn velocity_to_score_vec3(
    v: &[[f64; 3]],
    x_t: &[[f64; 3]],
    t: f64,
) -> Result<Vec<[f64; 3]>> {
    if v.len() != x_t.len() {
        return Err(CoreError::Shape(format!(
            "velocity length {} != state length {}",
            v.len(),
            x_t.len()
        )));
    }
    if !(0.0..1.0).contains(&t) {
        if t == 1.0 {
            return Err(CoreError::ScoreSingularity);
        }
        return Err(CoreError::InvalidArgument(format!("t = {} outside [0, 1)", t)));
    }
    Ok(v
        .iter()
        .zip(x_t)
        .map(|(v, x)| [
            score_elem(v[0], x[0], t),
            score_elem(v[1], x[1], t),
            score_elem(v[2], x[2], t),
        ])
        .collect())
}
