//! Greedy label refinement of a finished design.
//!
//! Starting from a generated (structure, labels) pair, each iteration
//! proposes a small batch of random label substitutions and keeps it only if
//! the combined reward strictly improves. Coordinates never move; this is the
//! cheap discrete polish applied after sampling.

use rand::Rng;

use crate::error::{CoreError, Result};
use crate::flow::BinderState;
use crate::model::TargetContext;
use crate::reward::{Reward, RewardBreakdown};
use crate::rngkit::RngKey;

use super::{wrap_candidate_err, Generator, SamplePhase, SuccessCriterion, SuccessSample, SuccessSet};

/// Mutations proposed per iteration: 1% of the binder length, rounded up.
pub fn mutations_per_iteration(n_residues: usize) -> usize {
    n_residues.div_ceil(100)
}

#[derive(Clone, Debug)]
pub struct RefineResult {
    pub state: BinderState,
    pub labels: Vec<u8>,
    pub reward: RewardBreakdown,
    /// Combined reward after each iteration (accepted or not); entry 0 is the
    /// starting reward, so the trace has iterations + 1 entries and never
    /// decreases.
    pub trace: Vec<f64>,
    pub accepted: usize,
}

/// `n_label_values` is the label alphabet size; proposals draw uniformly from
/// it (a draw equal to the current label is a no-op proposal and cannot
/// strictly improve, so it is effectively rejected).
pub fn mutation_refine(
    state: &BinderState,
    labels: &[u8],
    ctx: &TargetContext,
    reward: &dyn Reward,
    iterations: usize,
    n_label_values: u8,
    key: RngKey,
) -> Result<RefineResult> {
    if labels.len() != state.n() {
        return Err(CoreError::Shape(format!(
            "{} labels for {} residues",
            labels.len(),
            state.n()
        )));
    }
    if n_label_values == 0 {
        return Err(CoreError::InvalidArgument("label alphabet must be non-empty".into()));
    }
    if labels.iter().any(|&l| l >= n_label_values) {
        return Err(CoreError::InvalidArgument(format!(
            "label out of range for alphabet of {n_label_values}"
        )));
    }

    let mut current = labels.to_vec();
    let mut best = reward.eval(state, &current, ctx)?;
    let mut trace = Vec::with_capacity(iterations + 1);
    trace.push(best.total);
    let mut accepted = 0;

    let n_mut = mutations_per_iteration(state.n());
    let mut rng = key.child("refine").rng();
    for _ in 0..iterations {
        let mut proposal = current.clone();
        for _ in 0..n_mut {
            let pos = rng.random_range(0..proposal.len());
            proposal[pos] = rng.random_range(0..n_label_values);
        }
        let scored = reward.eval(state, &proposal, ctx)?;
        if scored.total.is_finite() && scored.total > best.total {
            current = proposal;
            best = scored;
            accepted += 1;
        }
        trace.push(best.total);
    }

    Ok(RefineResult { state: state.clone(), labels: current, reward: best, trace, accepted })
}

/// Sample-then-polish: draws `n` full trajectories the same way `best_of_n`
/// does, runs `mutation_refine` on each decoded sample, and keeps the refined
/// designs that pass the criterion. Candidate index doubles as the trajectory
/// index, so traces line up with a plain best-of-n run at the same key.
pub fn refine_search(
    gen: &dyn Generator,
    reward: &dyn Reward,
    criterion: &SuccessCriterion,
    n: usize,
    iterations: usize,
    n_label_values: u8,
    key: RngKey,
) -> Result<SuccessSet> {
    let mut set = SuccessSet::new();
    for i in 0..n {
        let traj_key = key.child("traj").child_idx(i as u64);
        let state = gen.init(traj_key);
        let end = gen.advance(state, gen.total_steps()).map_err(wrap_candidate_err(i))?;
        let (decoded, labels) = gen.decode(&end).map_err(wrap_candidate_err(i))?;
        let refined = mutation_refine(
            &decoded,
            &labels,
            gen.ctx(),
            reward,
            iterations,
            n_label_values,
            key.child("refine").child_idx(i as u64),
        )
        .map_err(wrap_candidate_err(i))?;
        if criterion.passes(&refined.reward)? {
            set.push(SuccessSample {
                state: refined.state,
                labels: refined.labels,
                reward: refined.reward,
                algorithm: "refine".into(),
                round: 0,
                candidate: i,
                phase: SamplePhase::Final,
            });
        }
    }
    set.sort_canonical();
    Ok(set)
}
