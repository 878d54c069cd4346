//! Interface-seeded cropping of a complex down to a binder-target training
//! example. Three stages: pick a binder seed among interface residues, cut a
//! contiguous binder subsequence around it, then spatially crop the remaining
//! chains to a residue budget, closest stretches first.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::INTERFACE_CUTOFF;
use crate::error::{CoreError, Result};
use crate::geom::{vec3, Complex, PointChain};
use crate::rngkit::RngKey;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CropResult {
    pub binder: PointChain,
    pub target_chains: Vec<PointChain>,
    /// Position of the seed residue within `binder`.
    pub seed_index: usize,
    /// Set when fewer than `min_target` target residues fell inside the
    /// spatial cutoff, in which case all of them are kept.
    pub min_target_unmet: bool,
}

impl CropResult {
    pub fn total_residues(&self) -> usize {
        self.binder.len() + self.target_chains.iter().map(|c| c.len()).sum::<usize>()
    }
}

/// One maximal run of consecutive in-cutoff residues of a target chain.
struct Stretch {
    chain: usize,
    lo: usize,
    hi: usize, // inclusive positions
    min_dist: f64,
}

pub fn crop_complex(
    c: &Complex,
    rng_seed: u64,
    max_binder: usize,
    spatial_cutoff: f64,
    min_target: usize,
    max_total: usize,
) -> Result<CropResult> {
    if c.chains.len() < 2 {
        return Err(CoreError::InvalidArgument("crop needs at least 2 chains".into()));
    }
    if max_binder == 0 || spatial_cutoff <= 0.0 {
        return Err(CoreError::InvalidArgument("max_binder and spatial_cutoff must be positive".into()));
    }
    if max_total < max_binder + min_target {
        return Err(CoreError::InvalidArgument(format!(
            "max_total {max_total} cannot fit max_binder {max_binder} + min_target {min_target}"
        )));
    }

    // Stage 1: binder seed, uniform over all interface residues.
    let mut interface: Vec<(usize, usize)> = Vec::new();
    let cut2 = INTERFACE_CUTOFF * INTERFACE_CUTOFF;
    for (ci, chain) in c.chains.iter().enumerate() {
        for (ri, p) in chain.coords.iter().enumerate() {
            let near_other = c
                .chains
                .iter()
                .enumerate()
                .filter(|(cj, _)| *cj != ci)
                .any(|(_, other)| other.coords.iter().any(|q| vec3::dist2(*p, *q) <= cut2));
            if near_other {
                interface.push((ci, ri));
            }
        }
    }
    if interface.is_empty() {
        return Err(CoreError::NoInterface);
    }
    let mut rng = RngKey::root(rng_seed).child("crop").rng();
    let (binder_chain, seed_pos) = interface[rng.random_range(0..interface.len())];
    let chain = &c.chains[binder_chain];

    // Stage 2: contiguous subsequence containing the seed. Drawn length is
    // uniform over {1..max_binder}, capped by the chain, and the seed's
    // offset inside the window is uniform over the feasible placements.
    let len = rng.random_range(1..=max_binder).min(chain.len());
    let lo_min = (seed_pos + 1).saturating_sub(len);
    let lo_max = seed_pos.min(chain.len() - len);
    let lo = rng.random_range(lo_min..=lo_max);
    let binder = PointChain::new(
        chain.chain_id,
        chain.residue_ids[lo..lo + len].to_vec(),
        chain.coords[lo..lo + len].to_vec(),
    )?;
    let seed_index = seed_pos - lo;

    // Stage 3: spatial crop of every other chain against the budget.
    let bcoords = &binder.coords;
    let sc2 = spatial_cutoff * spatial_cutoff;
    let dist_to_binder =
        |p: [f64; 3]| bcoords.iter().map(|q| vec3::dist2(p, *q)).fold(f64::INFINITY, f64::min).sqrt();

    let mut stretches: Vec<Stretch> = Vec::new();
    let mut available = 0usize;
    for (ci, other) in c.chains.iter().enumerate() {
        if ci == binder_chain {
            continue;
        }
        let mask: Vec<bool> = other
            .coords
            .iter()
            .map(|p| bcoords.iter().any(|q| vec3::dist2(*p, *q) <= sc2))
            .collect();
        let mut pos = 0;
        while pos < mask.len() {
            if mask[pos] {
                let lo = pos;
                while pos < mask.len() && mask[pos] {
                    pos += 1;
                }
                let hi = pos - 1;
                let min_dist = (lo..=hi)
                    .map(|i| dist_to_binder(other.coords[i]))
                    .fold(f64::INFINITY, f64::min);
                available += hi - lo + 1;
                stretches.push(Stretch { chain: ci, lo, hi, min_dist });
            } else {
                pos += 1;
            }
        }
    }
    stretches.sort_by(|a, b| {
        a.min_dist
            .total_cmp(&b.min_dist)
            .then(a.chain.cmp(&b.chain))
            .then(a.lo.cmp(&b.lo))
    });

    let min_target_unmet = available < min_target;
    let mut budget = max_total - binder.len();
    // Selected positions per chain; whole stretches first, the one that
    // overflows the budget is truncated from its far end.
    let mut selected: Vec<Vec<(usize, usize)>> = vec![Vec::new(); c.chains.len()];
    for s in &stretches {
        if budget == 0 {
            break;
        }
        let full = s.hi - s.lo + 1;
        if full <= budget {
            selected[s.chain].push((s.lo, s.hi));
            budget -= full;
        } else {
            let (mut lo, mut hi) = (s.lo, s.hi);
            while hi - lo + 1 > budget {
                let d_lo = dist_to_binder(c.chains[s.chain].coords[lo]);
                let d_hi = dist_to_binder(c.chains[s.chain].coords[hi]);
                if d_lo > d_hi {
                    lo += 1;
                } else {
                    hi -= 1;
                }
            }
            selected[s.chain].push((lo, hi));
            budget = 0;
        }
    }

    let mut target_chains = Vec::new();
    for (ci, ranges) in selected.iter_mut().enumerate() {
        if ranges.is_empty() {
            continue;
        }
        ranges.sort();
        let other = &c.chains[ci];
        let mut residue_ids = Vec::new();
        let mut coords = Vec::new();
        for (lo, hi) in ranges.iter() {
            residue_ids.extend_from_slice(&other.residue_ids[*lo..=*hi]);
            coords.extend_from_slice(&other.coords[*lo..=*hi]);
        }
        target_chains.push(PointChain::new(other.chain_id, residue_ids, coords)?);
    }

    Ok(CropResult { binder, target_chains, seed_index, min_target_unmet })
}
