//! Interface membership and contact counting between two chains.

use super::{vec3, PointChain};
use crate::error::{CoreError, Result};

/// Indices in `a` with at least one point of `b` within `cutoff`, and the
/// symmetric set for `b`. Either set may be empty.
pub fn interface_residues(
    a: &PointChain,
    b: &PointChain,
    cutoff: f64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if cutoff <= 0.0 || !cutoff.is_finite() {
        return Err(CoreError::InvalidArgument(format!("cutoff must be positive, got {cutoff}")));
    }
    let c2 = cutoff * cutoff;
    let mut in_a = vec![false; a.len()];
    let mut in_b = vec![false; b.len()];
    for (i, p) in a.coords.iter().enumerate() {
        for (j, q) in b.coords.iter().enumerate() {
            if vec3::dist2(*p, *q) <= c2 {
                in_a[i] = true;
                in_b[j] = true;
            }
        }
    }
    let collect = |mask: Vec<bool>| mask.iter().enumerate().filter(|(_, m)| **m).map(|(i, _)| i).collect();
    Ok((collect(in_a), collect(in_b)))
}

/// Number of cross-chain point pairs within `donor_acceptor_max`. Stands in
/// for an interface hydrogen-bond count: a pair at most 3.5 units apart is
/// one proxy bond, with no angular term.
pub fn detect_contacts(binder: &PointChain, target: &PointChain, donor_acceptor_max: f64) -> Result<usize> {
    if donor_acceptor_max <= 0.0 || !donor_acceptor_max.is_finite() {
        return Err(CoreError::InvalidArgument(format!(
            "donor_acceptor_max must be positive, got {donor_acceptor_max}"
        )));
    }
    let c2 = donor_acceptor_max * donor_acceptor_max;
    let mut count = 0;
    for p in &binder.coords {
        for q in &target.coords {
            if vec3::dist2(*p, *q) <= c2 {
                count += 1;
            }
        }
    }
    Ok(count)
}
