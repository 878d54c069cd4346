//! Beam search and its importance-sampling sibling.
//!
//! Both run the same round structure: every beam member branches L ways, each
//! branch advances K steps on its own noise stream, rolls out to t = 1 at low
//! temperature, and is scored on the clean rollout. They differ only in how
//! the next beam is chosen from the N·L scored candidates: top-N by reward
//! versus resampling proportional to exp(beta * reward).

use rand::Rng;
use rand_chacha::ChaCha12Rng;

use crate::error::{CoreError, Result};
use crate::flow::NoisyState;
use crate::reward::{Reward, RewardBreakdown};
use crate::rngkit::RngKey;

use super::{
    wrap_candidate_err, BudgetGuard, Generator, SamplePhase, SearchConfig, SuccessCriterion,
    SuccessSample, SuccessSet,
};

/// Block boundaries: 0 = b_0 < b_1 < ... < b_R = steps, each block at most
/// `block_steps` long, the last one shorter when steps is not divisible.
fn block_ends(steps: usize, block_steps: usize) -> Vec<usize> {
    let mut ends = Vec::new();
    let mut s = 0;
    while s < steps {
        s = (s + block_steps).min(steps);
        ends.push(s);
    }
    ends
}

/// Denoiser evaluations one full beam or steering run consumes: per round,
/// every one of the N·L candidates pays the block length plus the rollout to
/// the end of the schedule. Decoding is free. Exact, not an estimate; run
/// manifests and tests hold the counter to this number.
pub fn branch_rollout_evals(steps: usize, block_steps: usize, beam_width: usize, branch_factor: usize) -> u64 {
    let per_candidate: usize = block_ends(steps, block_steps)
        .iter()
        .zip(std::iter::once(0).chain(block_ends(steps, block_steps)))
        .map(|(&end, start)| (end - start) + (steps - end))
        .sum();
    (beam_width * branch_factor * per_candidate) as u64
}

struct Candidate {
    /// Post-block, pre-rollout state; becomes a beam member if kept.
    state: NoisyState,
    id: usize,
    decoded: crate::flow::BinderState,
    labels: Vec<u8>,
    reward: RewardBreakdown,
}

/// Branch every beam member L ways, advance one block, roll out, score.
/// Candidates whose reward is non-finite (or whose scorer fails) are dropped
/// with a warning; trajectory failures abort the search.
fn branch_and_score(
    gen: &dyn Generator,
    reward: &dyn Reward,
    beam: &[NoisyState],
    round: usize,
    block_end: usize,
    branch_factor: usize,
    key: RngKey,
) -> Result<Vec<Candidate>> {
    let steps = gen.total_steps();
    let mut out = Vec::with_capacity(beam.len() * branch_factor);
    for (b, member) in beam.iter().enumerate() {
        for j in 0..branch_factor {
            let id = b * branch_factor + j;
            let cand_key = key.child("cand").child_idx(round as u64).child_idx(id as u64);
            let branched = gen.rekey(member, cand_key);
            let advanced = gen.advance(branched, block_end).map_err(wrap_candidate_err(id))?;
            let terminal = if block_end == steps {
                advanced.clone()
            } else {
                let rolled = gen.rekey(&advanced, cand_key.child("rollout"));
                gen.advance(rolled, steps).map_err(wrap_candidate_err(id))?
            };
            let (decoded, labels) = gen.decode(&terminal).map_err(wrap_candidate_err(id))?;
            match reward.eval(&decoded, &labels, gen.ctx()) {
                Ok(breakdown) if breakdown.total.is_finite() => {
                    out.push(Candidate { state: advanced, id, decoded, labels, reward: breakdown });
                }
                Ok(breakdown) => {
                    log::warn!("round {round} candidate {id}: non-finite reward {}, dropped", breakdown.total);
                }
                Err(e) => {
                    log::warn!("round {round} candidate {id}: reward failed ({e}), dropped");
                }
            }
        }
    }
    if out.is_empty() {
        return Err(CoreError::SteeringCollapse { round });
    }
    Ok(out)
}

fn accept_passing(
    set: &mut SuccessSet,
    criterion: &SuccessCriterion,
    candidates: &[Candidate],
    algorithm: &str,
    round: usize,
    phase: SamplePhase,
) -> Result<()> {
    for c in candidates {
        if criterion.passes(&c.reward)? {
            set.push(SuccessSample {
                state: c.decoded.clone(),
                labels: c.labels.clone(),
                reward: c.reward.clone(),
                algorithm: algorithm.into(),
                round,
                candidate: c.id,
                phase,
            });
        }
    }
    Ok(())
}

enum NextBeam {
    TopN,
    Resample { beta: f64 },
}

fn run_rounds(
    gen: &dyn Generator,
    reward: &dyn Reward,
    criterion: &SuccessCriterion,
    cfg: &SearchConfig,
    key: RngKey,
    rule: NextBeam,
    algorithm: &str,
) -> Result<SuccessSet> {
    cfg.validate()?;
    let steps = gen.total_steps();
    let ends = block_ends(steps, cfg.block_steps);
    let guard = BudgetGuard::new(cfg.budget, gen);
    let mut decide_rng = key.child("decide").rng();

    let mut beam: Vec<NoisyState> = (0..cfg.beam_width)
        .map(|b| gen.init(key.child("beam-init").child_idx(b as u64)))
        .collect();
    let mut set = SuccessSet::new();

    for (round, &end) in ends.iter().enumerate() {
        let candidates =
            branch_and_score(gen, reward, &beam, round, end, cfg.branch_factor, key)?;
        accept_passing(&mut set, criterion, &candidates, algorithm, round, SamplePhase::Rollout)?;

        let kept: Vec<usize> = match rule {
            NextBeam::TopN => {
                let mut order: Vec<usize> = (0..candidates.len()).collect();
                order.sort_by(|&a, &b| {
                    candidates[b]
                        .reward
                        .total
                        .partial_cmp(&candidates[a].reward.total)
                        .unwrap()
                        .then(candidates[a].id.cmp(&candidates[b].id))
                });
                order.truncate(cfg.beam_width);
                order
            }
            NextBeam::Resample { beta } => {
                let totals: Vec<f64> = candidates.iter().map(|c| c.reward.total).collect();
                let weights = fks_weights(&totals, beta, round)?;
                resample_indices(&weights, cfg.beam_width, &mut decide_rng)
            }
        };
        beam = kept.iter().map(|&i| candidates[i].state.clone()).collect();

        // Final round: the kept states are terminal; record passing members
        // of the final beam once more under their own phase.
        if end == steps {
            let finals: Vec<Candidate> = kept
                .iter()
                .map(|&i| Candidate {
                    state: candidates[i].state.clone(),
                    id: candidates[i].id,
                    decoded: candidates[i].decoded.clone(),
                    labels: candidates[i].labels.clone(),
                    reward: candidates[i].reward.clone(),
                })
                .collect();
            accept_passing(&mut set, criterion, &finals, algorithm, round, SamplePhase::Final)?;
        }

        if guard.exhausted(gen) && end != steps {
            log::warn!("{algorithm}: budget exhausted after round {round}, stopping early");
            break;
        }
    }
    set.sort_canonical();
    Ok(set)
}

/// Keeps the N best-scoring candidates each round, ties broken by candidate
/// id. Passing rollouts from every round are kept in the success set even
/// when their branch is pruned.
pub fn beam_search(
    gen: &dyn Generator,
    reward: &dyn Reward,
    criterion: &SuccessCriterion,
    cfg: &SearchConfig,
    key: RngKey,
) -> Result<SuccessSet> {
    run_rounds(gen, reward, criterion, cfg, key, NextBeam::TopN, "beam")
}

/// Steering by sequential importance resampling: the next beam is drawn with
/// replacement from the candidates with probability proportional to
/// exp(beta * reward). beta = 0 degenerates to uniform resampling.
pub fn fk_steering(
    gen: &dyn Generator,
    reward: &dyn Reward,
    criterion: &SuccessCriterion,
    cfg: &SearchConfig,
    key: RngKey,
) -> Result<SuccessSet> {
    run_rounds(
        gen,
        reward,
        criterion,
        cfg,
        key,
        NextBeam::Resample { beta: cfg.inverse_temperature },
        "fks",
    )
}

/// Normalized resampling probabilities exp(beta * r_i) / sum, computed with
/// the max subtracted before exponentiation. Non-finite rewards get weight
/// zero; if none are finite the round has collapsed.
pub fn fks_weights(rewards: &[f64], beta: f64, round: usize) -> Result<Vec<f64>> {
    if !(beta >= 0.0) {
        return Err(CoreError::Config(format!("beta must be >= 0, got {beta}")));
    }
    let max = rewards.iter().copied().filter(|r| r.is_finite()).fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(CoreError::SteeringCollapse { round });
    }
    let weights: Vec<f64> = rewards
        .iter()
        .map(|&r| if r.is_finite() { (beta * (r - max)).exp() } else { 0.0 })
        .collect();
    let sum: f64 = weights.iter().sum();
    if !(sum > 0.0) || !sum.is_finite() {
        return Err(CoreError::SteeringCollapse { round });
    }
    Ok(weights.iter().map(|w| w / sum).collect())
}

/// `n` draws with replacement from the categorical distribution `probs`.
pub fn resample_indices(probs: &[f64], n: usize, rng: &mut ChaCha12Rng) -> Vec<usize> {
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let u: f64 = rng.random_range(0.0..1.0);
        let mut acc = 0.0;
        let mut chosen = probs.len() - 1;
        for (i, &p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                chosen = i;
                break;
            }
        }
        out.push(chosen);
    }
    out
}
