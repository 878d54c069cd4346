//! Tree search over partial denoising trajectories with stochastic expansion.
//!
//! Selection and expansion are merged: descending through a node either picks
//! the best child by UCB or, with probability epsilon (always when the node is
//! childless or one block from the end), expands a fresh child by running one
//! more block of denoising on a new noise stream. Every simulation runs all
//! the way to t = 1, is decoded and scored there, and backpropagates its
//! reward to the root. After each batch of simulations the committed prefix
//! advances to the child with the highest mean reward.

use rand::Rng;

use crate::error::{CoreError, Result};
use crate::flow::NoisyState;
use crate::reward::Reward;
use crate::rngkit::RngKey;

use super::{BudgetGuard, Generator, SamplePhase, SearchConfig, SuccessCriterion, SuccessSample, SuccessSet};

/// One node of the search tree. `cum_reward / visits` is the value estimate
/// UCB exploits.
#[derive(Clone, Debug)]
pub struct SearchNode {
    pub state: NoisyState,
    pub visits: u64,
    pub cum_reward: f64,
    pub children: Vec<usize>,
    pub parent: Option<usize>,
    /// Grid step this node sits at.
    pub step: usize,
}

/// Arena-allocated tree plus the expansion statistics the epsilon contract is
/// checked against.
#[derive(Debug)]
pub struct SearchTree {
    pub nodes: Vec<SearchNode>,
    /// Decision points where both expanding and selecting were possible.
    pub free_choices: u64,
    /// How many of those chose to expand.
    pub free_expansions: u64,
    /// All expansions, forced ones included.
    pub expansions: u64,
}

impl SearchTree {
    fn new(root_state: NoisyState) -> Self {
        SearchTree {
            nodes: vec![SearchNode {
                state: root_state,
                visits: 0,
                cum_reward: 0.0,
                children: Vec::new(),
                parent: None,
                step: 0,
            }],
            free_choices: 0,
            free_expansions: 0,
            expansions: 0,
        }
    }

    pub fn root(&self) -> &SearchNode {
        &self.nodes[0]
    }
}

/// Upper-confidence score of `child` under `parent`:
/// mean reward + C * sqrt(ln V(parent) / V(child)).
pub fn ucb_score(child: &SearchNode, parent: &SearchNode, c: f64) -> Result<f64> {
    if child.visits == 0 || parent.visits == 0 {
        return Err(CoreError::InvalidArgument(
            "ucb_score needs at least one visit on both nodes".into(),
        ));
    }
    let mean = child.cum_reward / child.visits as f64;
    Ok(mean + c * ((parent.visits as f64).ln() / child.visits as f64).sqrt())
}

/// Runs the full search and returns only the accepted samples. `mcts_run`
/// below also hands back the tree, which the structural tests inspect.
pub fn mcts_search(
    gen: &dyn Generator,
    reward: &dyn Reward,
    criterion: &SuccessCriterion,
    cfg: &SearchConfig,
    key: RngKey,
) -> Result<SuccessSet> {
    Ok(mcts_run(gen, reward, criterion, cfg, key)?.0)
}

pub fn mcts_run(
    gen: &dyn Generator,
    reward: &dyn Reward,
    criterion: &SuccessCriterion,
    cfg: &SearchConfig,
    key: RngKey,
) -> Result<(SuccessSet, SearchTree)> {
    cfg.validate()?;
    let steps = gen.total_steps();
    let k = cfg.block_steps;
    let eps = cfg.mcts.epsilon;
    let c = cfg.mcts.exploration;
    let guard = BudgetGuard::new(cfg.budget, gen);

    let mut tree = SearchTree::new(gen.init(key.child("root")));
    let mut decide_rng = key.child("decide").rng();
    let mut expand_counter = 0u64;
    let mut set = SuccessSet::new();
    let mut committed = 0usize;
    let mut batch = 0usize;

    while tree.nodes[committed].step < steps {
        for sim in 0..cfg.mcts.simulations {
            let mut cur = committed;
            while tree.nodes[cur].step < steps {
                let node_step = tree.nodes[cur].step;
                let childless = tree.nodes[cur].children.is_empty();
                // A child expanded here would be terminal; always take a
                // fresh stream for the last block so terminal samples differ.
                let last_block = node_step + k >= steps;
                let expand = if childless || last_block {
                    tree.expansions += 1;
                    true
                } else {
                    tree.free_choices += 1;
                    let coin = decide_rng.random_range(0.0..1.0) < eps;
                    if coin {
                        tree.free_expansions += 1;
                        tree.expansions += 1;
                    }
                    coin
                };
                if expand {
                    let child_key = key.child("expand").child_idx(expand_counter);
                    expand_counter += 1;
                    let branched = gen.rekey(&tree.nodes[cur].state, child_key);
                    let to = (node_step + k).min(steps);
                    let child_state = gen.advance(branched, to)?;
                    let idx = tree.nodes.len();
                    tree.nodes.push(SearchNode {
                        state: child_state,
                        visits: 0,
                        cum_reward: 0.0,
                        children: Vec::new(),
                        parent: Some(cur),
                        step: to,
                    });
                    tree.nodes[cur].children.push(idx);
                    cur = idx;
                } else {
                    let parent = tree.nodes[cur].clone();
                    let mut best = (f64::NEG_INFINITY, usize::MAX);
                    for &ch in &parent.children {
                        let s = ucb_score(&tree.nodes[ch], &parent, c)?;
                        if s > best.0 {
                            best = (s, ch);
                        }
                    }
                    cur = best.1;
                }
            }

            let (decoded, labels) = gen.decode(&tree.nodes[cur].state)?;
            // A failed or non-finite reward drops the sample but the
            // simulation still backpropagates (as value 0) so the tree's
            // visit accounting stays consistent.
            let value = match reward.eval(&decoded, &labels, gen.ctx()) {
                Ok(breakdown) if breakdown.total.is_finite() => {
                    let value = breakdown.total;
                    if criterion.passes(&breakdown)? {
                        set.push(SuccessSample {
                            state: decoded,
                            labels,
                            reward: breakdown,
                            algorithm: "mcts".into(),
                            round: batch,
                            candidate: sim,
                            phase: SamplePhase::Rollout,
                        });
                    }
                    value
                }
                Ok(breakdown) => {
                    log::warn!("batch {batch} simulation {sim}: non-finite reward {}, counted as 0", breakdown.total);
                    0.0
                }
                Err(e) => {
                    log::warn!("batch {batch} simulation {sim}: reward failed ({e}), counted as 0");
                    0.0
                }
            };

            let mut walk = Some(cur);
            while let Some(i) = walk {
                tree.nodes[i].visits += 1;
                tree.nodes[i].cum_reward += value;
                walk = tree.nodes[i].parent;
            }
        }

        // Commit to the child with the best mean; ties fall to the earliest.
        let children = tree.nodes[committed].children.clone();
        let mut best = (f64::NEG_INFINITY, usize::MAX);
        for &ch in &children {
            let n = &tree.nodes[ch];
            if n.visits == 0 {
                continue;
            }
            let mean = n.cum_reward / n.visits as f64;
            if mean > best.0 {
                best = (mean, ch);
            }
        }
        if best.1 == usize::MAX {
            return Err(CoreError::Numeric(format!("batch {batch}: no visited child to commit to")));
        }
        committed = best.1;
        batch += 1;

        if guard.exhausted(gen) && tree.nodes[committed].step < steps {
            log::warn!("mcts: budget exhausted after batch {batch}, stopping early");
            break;
        }
    }

    set.sort_canonical();
    Ok((set, tree))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reward::RewardBreakdown;
    use crate::search::testkit::{x_above, StubGen, XReward};
    use crate::search::MctsConfig;

    fn node(visits: u64, cum: f64) -> SearchNode {
        SearchNode {
            state: NoisyState {
                state: crate::flow::BinderState::zeros(1, 1),
                t_x: 0.0,
                t_z: 0.0,
                rng_key: RngKey::root(0),
            },
            visits,
            cum_reward: cum,
            children: vec![],
            parent: None,
            step: 0,
        }
    }

    #[test]
    fn ucb_matches_direct_substitution() {
        let child = node(1, 0.7);
        let parent = node(3, 0.0);
        let got = ucb_score(&child, &parent, 2.0).unwrap();
        assert!((got - (0.7 + 2.0 * 3f64.ln().sqrt())).abs() < 1e-15);
    }

    #[test]
    fn ucb_with_zero_exploration_is_the_mean() {
        let child = node(4, 2.0);
        let parent = node(9, 0.0);
        assert_eq!(ucb_score(&child, &parent, 0.0).unwrap(), 0.5);
    }

    #[test]
    fn lower_visit_child_scores_higher_at_equal_mean() {
        let a = node(2, 1.0);
        let b = node(8, 4.0);
        let parent = node(10, 0.0);
        assert!(ucb_score(&a, &parent, 1.0).unwrap() > ucb_score(&b, &parent, 1.0).unwrap());
    }

    #[test]
    fn unvisited_nodes_rejected() {
        let child = node(0, 0.0);
        let parent = node(1, 0.0);
        assert!(ucb_score(&child, &parent, 1.0).is_err());
    }

    fn toy_cfg(eps: f64, sims: usize) -> SearchConfig {
        SearchConfig {
            beam_width: 1,
            branch_factor: 1,
            block_steps: 2,
            mcts: MctsConfig { epsilon: eps, exploration: 1.0, simulations: sims },
            ..SearchConfig::default()
        }
    }

    #[test]
    fn forced_expansion_mode_creates_one_child_per_expansion_event() {
        let gen = StubGen::new(6, 0.2);
        let (_, tree) = mcts_run(
            &gen,
            &XReward,
            &SuccessCriterion::always(),
            &toy_cfg(1.0, 5),
            RngKey::root(61),
        )
        .unwrap();
        let total_children: u64 = tree.nodes.iter().map(|n| n.children.len() as u64).sum();
        assert_eq!(total_children, tree.expansions);
        // Every non-root node is the product of exactly one expansion.
        assert_eq!(total_children as usize, tree.nodes.len() - 1);
    }

    #[test]
    fn visit_counts_dominate_children() {
        let gen = StubGen::new(8, 0.4);
        let (_, tree) = mcts_run(
            &gen,
            &XReward,
            &SuccessCriterion::always(),
            &toy_cfg(0.5, 8),
            RngKey::root(62),
        )
        .unwrap();
        for (i, n) in tree.nodes.iter().enumerate() {
            let child_visits: u64 = n.children.iter().map(|&c| tree.nodes[c].visits).sum();
            assert!(n.visits >= child_visits, "node {i}: {} < {child_visits}", n.visits);
            assert!(n.visits >= n.children.len() as u64, "node {i}");
            assert!(n.cum_reward.is_finite());
        }
        // The root sees every simulation of every batch.
        let batches = tree.root().visits / 8;
        assert_eq!(tree.root().visits, batches * 8);
        assert!(batches >= 1);
    }

    #[test]
    fn free_expansion_rate_tracks_epsilon() {
        let eps = 0.5;
        let mut choices = 0u64;
        let mut expansions = 0u64;
        for seed in 0..60 {
            let gen = StubGen::new(8, 0.3);
            let (_, tree) = mcts_run(
                &gen,
                &XReward,
                &SuccessCriterion::always(),
                &toy_cfg(eps, 10),
                RngKey::root(100 + seed),
            )
            .unwrap();
            choices += tree.free_choices;
            expansions += tree.free_expansions;
        }
        assert!(choices > 500, "not enough free decision points ({choices}) to estimate the rate");
        let rate = expansions as f64 / choices as f64;
        assert!((rate - eps).abs() < 0.1, "rate {rate} vs eps {eps} over {choices} choices");
    }

    #[test]
    fn accepted_samples_pass_on_reevaluation() {
        let gen = StubGen::new(6, 0.5);
        let crit = x_above(1.2);
        let (set, _) = mcts_run(&gen, &XReward, &crit, &toy_cfg(0.5, 6), RngKey::root(63)).unwrap();
        assert!(!set.is_empty());
        for s in &set.samples {
            let again = XReward.eval(&s.state, &s.labels, gen.ctx()).unwrap();
            assert_eq!(again.total, s.reward.total);
            assert!(crit.passes(&again).unwrap());
        }
    }

    #[test]
    fn search_is_deterministic_in_the_key() {
        let gen = StubGen::new(6, 0.5);
        let a = mcts_search(&gen, &XReward, &SuccessCriterion::always(), &toy_cfg(0.5, 4), RngKey::root(64)).unwrap();
        let b = mcts_search(&gen, &XReward, &SuccessCriterion::always(), &toy_cfg(0.5, 4), RngKey::root(64)).unwrap();
        let c = mcts_search(&gen, &XReward, &SuccessCriterion::always(), &toy_cfg(0.5, 4), RngKey::root(65)).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        assert_ne!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&c).unwrap());
    }

    #[test]
    fn terminal_children_are_always_fresh() {
        // With steps == block_steps the root sits one block from the end, so
        // every simulation must expand a new terminal child, never reuse one.
        let gen = StubGen::new(2, 0.3);
        let cfg = SearchConfig {
            block_steps: 2,
            mcts: MctsConfig { epsilon: 0.0, exploration: 1.0, simulations: 7 },
            ..toy_cfg(0.0, 7)
        };
        let (_, tree) = mcts_run(&gen, &XReward, &SuccessCriterion::always(), &cfg, RngKey::root(66)).unwrap();
        assert_eq!(tree.root().children.len(), 7);
        for &ch in &tree.root().children {
            assert_eq!(tree.nodes[ch].visits, 1);
            assert_eq!(tree.nodes[ch].step, 2);
        }
    }

    #[test]
    fn reward_breakdown_component_lookup() {
        let b = RewardBreakdown { total: 1.0, components: vec![("x".into(), 2.0)] };
        assert_eq!(b.component("x"), Some(2.0));
        assert_eq!(b.component("y"), None);
    }
}
