//! Inference-time compute scaling: spend more denoiser evaluations per design
//! in exchange for better and more diverse accepted samples.
//!
//! Four searchers share one vocabulary: a [`Generator`] produces and advances
//! trajectories, a [`Reward`](crate::reward::Reward) scores fully denoised
//! samples, a [`SuccessCriterion`] gates them, and everything accepted lands
//! in a [`SuccessSet`] with provenance. All procedures are deterministic
//! functions of (model parameters, config, root key).

mod beam;
mod mcts;
mod refine;

pub use beam::{beam_search, branch_rollout_evals, fk_steering, fks_weights, resample_indices};
pub use mcts::{mcts_run, mcts_search, ucb_score, SearchNode, SearchTree};
pub use refine::{mutation_refine, mutations_per_iteration, refine_search, RefineResult};

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::flow::{BinderState, NoisyState, Sampler};
use crate::model::TargetContext;
use crate::reward::{Reward, RewardBreakdown};
use crate::rngkit::RngKey;

/// Hard cap on a search run. Checked at round boundaries, so a run may finish
/// the round in flight before stopping.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case")]
pub enum Budget {
    Evals(u64),
    WallClockSecs(f64),
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct MctsConfig {
    /// Probability of expanding a fresh child at a node that has children.
    pub epsilon: f64,
    /// Exploration constant in the UCB score.
    pub exploration: f64,
    /// Simulations per committed node.
    pub simulations: usize,
}

impl Default for MctsConfig {
    fn default() -> Self {
        MctsConfig { epsilon: 0.5, exploration: 1.0, simulations: 20 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct SearchConfig {
    /// Beam width N.
    pub beam_width: usize,
    /// Branches per beam member L.
    pub branch_factor: usize,
    /// Denoising steps per search round K.
    pub block_steps: usize,
    /// Resampling sharpness for the steering searcher.
    pub inverse_temperature: f64,
    pub mcts: MctsConfig,
    pub budget: Option<Budget>,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            beam_width: 4,
            branch_factor: 4,
            block_steps: 100,
            inverse_temperature: 10.0,
            mcts: MctsConfig::default(),
            budget: None,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.beam_width < 1 || self.branch_factor < 1 || self.block_steps < 1 {
            return Err(CoreError::Config(format!(
                "beam_width, branch_factor, block_steps must all be >= 1, got ({}, {}, {})",
                self.beam_width, self.branch_factor, self.block_steps
            )));
        }
        if !(self.inverse_temperature >= 0.0) {
            return Err(CoreError::Config(format!(
                "inverse_temperature must be >= 0, got {}",
                self.inverse_temperature
            )));
        }
        if !(0.0..=1.0).contains(&self.mcts.epsilon) {
            return Err(CoreError::Config(format!("epsilon must lie in [0, 1], got {}", self.mcts.epsilon)));
        }
        if !(self.mcts.exploration >= 0.0) {
            return Err(CoreError::Config(format!("exploration must be >= 0, got {}", self.mcts.exploration)));
        }
        if self.mcts.simulations < 1 {
            return Err(CoreError::Config("simulations must be >= 1".into()));
        }
        if let Some(Budget::Evals(0)) = self.budget {
            return Err(CoreError::Config("eval budget of 0 admits no work".into()));
        }
        Ok(())
    }
}

/// Comparison direction of one success rule.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
pub enum Cmp {
    #[serde(rename = "lt")]
    Less,
    #[serde(rename = "gt")]
    Greater,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ThresholdRule {
    pub component: String,
    pub cmp: Cmp,
    pub threshold: f64,
}

/// Conjunction of per-component thresholds, evaluated on a reward breakdown.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SuccessCriterion {
    pub rules: Vec<ThresholdRule>,
}

impl SuccessCriterion {
    /// Toy default: the folding proxy below 7 of its 31-point range.
    pub fn default_toy() -> Self {
        SuccessCriterion {
            rules: vec![ThresholdRule {
                component: crate::reward::TERM_PROXY_IPAE.into(),
                cmp: Cmp::Less,
                threshold: 7.0,
            }],
        }
    }

    /// Accepts everything. Empty conjunction.
    pub fn always() -> Self {
        SuccessCriterion { rules: Vec::new() }
    }

    pub fn passes(&self, reward: &RewardBreakdown) -> Result<bool> {
        for rule in &self.rules {
            let value = reward.component(&rule.component).ok_or_else(|| {
                CoreError::Config(format!("criterion references unknown reward component {:?}", rule.component))
            })?;
            let ok = match rule.cmp {
                Cmp::Less => value < rule.threshold,
                Cmp::Greater => value > rule.threshold,
            };
            if !ok {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

/// Where in a search a sample was accepted: scored rollout mid-search, or a
/// member of the final kept set.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq, PartialOrd, Ord)]
pub enum SamplePhase {
    Rollout,
    Final,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct SuccessSample {
    pub state: BinderState,
    pub labels: Vec<u8>,
    pub reward: RewardBreakdown,
    pub algorithm: String,
    pub round: usize,
    pub candidate: usize,
    pub phase: SamplePhase,
}

/// Accepted samples. Content is a set: `sort_canonical` fixes the order by
/// provenance so two runs that accept the same samples serialize identically
/// regardless of insertion order.
#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
pub struct SuccessSet {
    pub samples: Vec<SuccessSample>,
}

impl SuccessSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn push(&mut self, sample: SuccessSample) {
        self.samples.push(sample);
    }

    pub fn merge(&mut self, other: SuccessSet) {
        self.samples.extend(other.samples);
    }

    pub fn sort_canonical(&mut self) {
        self.samples.sort_by(|a, b| {
            (a.round, a.candidate, a.phase, &a.algorithm).cmp(&(b.round, b.candidate, b.phase, &b.algorithm))
        });
    }

    pub fn best(&self) -> Option<&SuccessSample> {
        self.samples
            .iter()
            .max_by(|a, b| a.reward.total.partial_cmp(&b.reward.total).unwrap_or(std::cmp::Ordering::Equal))
    }
}

/// Trajectory source the searchers drive. The flow sampler is the real
/// implementation; tests substitute cheap scripted generators. Every
/// denoiser forward pass a generator performs must be visible in `evals`.
pub trait Generator {
    fn ctx(&self) -> &TargetContext;
    fn total_steps(&self) -> usize;
    fn init(&self, key: RngKey) -> NoisyState;
    fn step_of(&self, state: &NoisyState) -> Result<usize>;
    fn advance(&self, state: NoisyState, to_step: usize) -> Result<NoisyState>;
    /// Detaches a copy onto its own noise stream from the current step on.
    fn rekey(&self, state: &NoisyState, key: RngKey) -> NoisyState;
    fn decode(&self, state: &NoisyState) -> Result<(BinderState, Vec<u8>)>;
    fn evals(&self) -> u64;
}

impl<'a> Generator for Sampler<'a> {
    fn ctx(&self) -> &TargetContext {
        self.ctx
    }

    fn total_steps(&self) -> usize {
        self.schedule.steps
    }

    fn init(&self, key: RngKey) -> NoisyState {
        Sampler::init(self, key)
    }

    fn step_of(&self, state: &NoisyState) -> Result<usize> {
        Sampler::step_of(self, state)
    }

    fn advance(&self, state: NoisyState, to_step: usize) -> Result<NoisyState> {
        Sampler::advance(self, state, to_step)
    }

    fn rekey(&self, state: &NoisyState, key: RngKey) -> NoisyState {
        Sampler::with_key(self, state, key)
    }

    fn decode(&self, state: &NoisyState) -> Result<(BinderState, Vec<u8>)> {
        Sampler::decode(self, state)
    }

    fn evals(&self) -> u64 {
        self.counter.get()
    }
}

/// Round-boundary budget check shared by the searchers.
pub(crate) struct BudgetGuard {
    budget: Option<Budget>,
    started: Instant,
    evals_at_start: u64,
}

impl BudgetGuard {
    pub(crate) fn new(budget: Option<Budget>, gen: &dyn Generator) -> Self {
        BudgetGuard { budget, started: Instant::now(), evals_at_start: gen.evals() }
    }

    pub(crate) fn exhausted(&self, gen: &dyn Generator) -> bool {
        match self.budget {
            None => false,
            Some(Budget::Evals(cap)) => gen.evals() - self.evals_at_start >= cap,
            Some(Budget::WallClockSecs(secs)) => self.started.elapsed().as_secs_f64() >= secs,
        }
    }
}

pub(crate) fn wrap_candidate_err(candidate: usize) -> impl Fn(CoreError) -> CoreError {
    move |source| CoreError::Candidate { candidate, source: Box::new(source) }
}

/// Draws `n` independent trajectories, keeps every decoded sample the
/// criterion accepts. The baseline all scaling curves start from.
pub fn best_of_n(
    gen: &dyn Generator,
    reward: &dyn Reward,
    criterion: &SuccessCriterion,
    n: usize,
    key: RngKey,
) -> Result<SuccessSet> {
    let mut out = SuccessSet::new();
    for i in 0..n {
        let traj_key = key.child("traj").child_idx(i as u64);
        let state = gen.init(traj_key);
        let end = gen.advance(state, gen.total_steps()).map_err(wrap_candidate_err(i))?;
        let (decoded, labels) = gen.decode(&end).map_err(wrap_candidate_err(i))?;
        let breakdown = reward.eval(&decoded, &labels, gen.ctx()).map_err(wrap_candidate_err(i))?;
        if criterion.passes(&breakdown)? {
            out.push(SuccessSample {
                state: decoded,
                labels,
                reward: breakdown,
                algorithm: "bon".into(),
                round: 0,
                candidate: i,
                phase: SamplePhase::Final,
            });
        }
    }
    out.sort_canonical();
    Ok(out)
}


#[cfg(test)]
mod tests {
    use super::testkit::{x_above, StubGen, XReward};
    use super::*;

    #[test]
    fn config_defaults_are_valid_and_bad_values_rejected() {
        let cfg = SearchConfig::default();
        cfg.validate().unwrap();
        assert_eq!(
            (cfg.beam_width, cfg.branch_factor, cfg.block_steps, cfg.inverse_temperature),
            (4, 4, 100, 10.0)
        );
        assert_eq!(
            (cfg.mcts.epsilon, cfg.mcts.exploration, cfg.mcts.simulations),
            (0.5, 1.0, 20)
        );

        let mut bad = SearchConfig::default();
        bad.beam_width = 0;
        assert!(bad.validate().is_err());
        let mut bad = SearchConfig::default();
        bad.inverse_temperature = -1.0;
        assert!(bad.validate().is_err());
        let mut bad = SearchConfig::default();
        bad.mcts.epsilon = 1.5;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn criterion_evaluates_rules_and_flags_unknown_components() {
        let crit = SuccessCriterion::default_toy();
        let pass = RewardBreakdown {
            total: 0.9,
            components: vec![(crate::reward::TERM_PROXY_IPAE.to_string(), 3.0)],
        };
        let fail = RewardBreakdown {
            total: 0.1,
            components: vec![(crate::reward::TERM_PROXY_IPAE.to_string(), 12.0)],
        };
        assert!(crit.passes(&pass).unwrap());
        assert!(!crit.passes(&fail).unwrap());

        let stranger = RewardBreakdown { total: 0.0, components: vec![("weird".into(), 1.0)] };
        assert!(crit.passes(&stranger).is_err());
        assert!(SuccessCriterion::always().passes(&stranger).unwrap());
    }

    #[test]
    fn zero_trials_give_an_empty_set() {
        let gen = StubGen::new(4, 0.1);
        let out = best_of_n(&gen, &XReward, &SuccessCriterion::always(), 0, RngKey::root(1)).unwrap();
        assert!(out.is_empty());
    }

    #[test]
    fn impossible_criterion_accepts_nothing() {
        let gen = StubGen::new(4, 0.1);
        let out = best_of_n(&gen, &XReward, &x_above(f64::INFINITY), 50, RngKey::root(2)).unwrap();
        assert!(out.is_empty());
        // 50 trajectories of 4 steps each still ran.
        assert_eq!(gen.evals(), 200);
    }

    #[test]
    fn acceptance_rate_matches_the_binomial_oracle() {
        // With jump = 0, the decoded x is the init draw, uniform on [0, 1);
        // the criterion x > 0.7 accepts with p = 0.3.
        let gen = StubGen::new(1, 0.0);
        let n = 10_000;
        let out = best_of_n(&gen, &XReward, &x_above(0.7), n, RngKey::root(3)).unwrap();
        let p = 0.3;
        let mean = n as f64 * p;
        let sd = (n as f64 * p * (1.0 - p)).sqrt();
        let got = out.len() as f64;
        assert!((got - mean).abs() < 3.0 * sd, "accepted {got}, expected {mean} +- {sd}");
    }

    #[test]
    fn reruns_are_byte_identical_and_keys_matter() {
        let gen = StubGen::new(3, 0.5);
        let a = best_of_n(&gen, &XReward, &x_above(1.0), 40, RngKey::root(9)).unwrap();
        let b = best_of_n(&gen, &XReward, &x_above(1.0), 40, RngKey::root(9)).unwrap();
        let c = best_of_n(&gen, &XReward, &x_above(1.0), 40, RngKey::root(10)).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        assert_ne!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&c).unwrap());
    }

    #[test]
    fn success_set_canonical_order_is_insertion_independent() {
        let sample = |round: usize, candidate: usize| SuccessSample {
            state: BinderState::zeros(1, 1),
            labels: vec![0],
            reward: RewardBreakdown { total: 0.0, components: vec![] },
            algorithm: "bon".into(),
            round,
            candidate,
            phase: SamplePhase::Rollout,
        };
        let mut fwd = SuccessSet::new();
        let mut rev = SuccessSet::new();
        for (r, c) in [(0, 1), (0, 3), (1, 0), (2, 2)] {
            fwd.push(sample(r, c));
        }
        for (r, c) in [(2, 2), (1, 0), (0, 3), (0, 1)] {
            rev.push(sample(r, c));
        }
        fwd.sort_canonical();
        rev.sort_canonical();
        assert_eq!(fwd, rev);
    }
}
