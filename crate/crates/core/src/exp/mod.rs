//! Experiment orchestration. One config file names the task, the model and
//! its training budget, the search algorithm, and the reward; `run_experiment`
//! executes the whole thing from a single seed and leaves a manifest, the
//! accepted samples, and a one-point scaling-curve row in the output
//! directory. Curves across many runs are assembled by `emit_curves`.

pub mod artifacts;
pub mod curves;

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::flow::{EvalCounter, Sampler, ScheduleSpec, SdeParams, DEFAULT_C_D};
use crate::geom::{greedy_cluster, PointChain};
use crate::model::{
    gen_toy_binder_dataset, train_field, FieldArch, MlpField, TargetContext, TaskSpec, ToyCodec,
    ToyDataset, TrainConfig, TrainTrace, N_LABELS,
};
use crate::reward::{RewardSpec, SpecReward};
use crate::rngkit::RngKey;
use crate::search::{
    beam_search, best_of_n, fk_steering, mcts_search, refine_search, SearchConfig,
    SuccessCriterion, SuccessSet,
};

pub use artifacts::{
    atomic_write, load_dataset, load_field, load_manifest, save_dataset, save_field, to_json_bytes,
    FieldCheckpoint, RewardStats, RunManifest,
};
pub use curves::{curves_from_manifests, emit_curves, parse_curve_csv, CurvePoint, ScalingCurve};

/// Structure-similarity threshold under which two accepted samples count as
/// the same design.
pub const DEFAULT_UNIQUE_THRESHOLD: f64 = 0.5;

/// The compute unit every manifest reports: denoiser forward passes, counted
/// at the single increment site inside the sampler.
pub const COMPUTE_UNIT: &str = "forward_calls";

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum Algo {
    Bon,
    Beam,
    Fks,
    Mcts,
    Refine,
}

impl Algo {
    pub fn name(self) -> &'static str {
        match self {
            Algo::Bon => "bon",
            Algo::Beam => "beam",
            Algo::Fks => "fks",
            Algo::Mcts => "mcts",
            Algo::Refine => "refine",
        }
    }
}

impl fmt::Display for Algo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algo {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bon" => Ok(Algo::Bon),
            "beam" => Ok(Algo::Beam),
            "fks" => Ok(Algo::Fks),
            "mcts" => Ok(Algo::Mcts),
            "refine" => Ok(Algo::Refine),
            other => Err(CoreError::Config(format!(
                "unknown algorithm {other:?}, expected bon|beam|fks|mcts|refine"
            ))),
        }
    }
}

/// Sampler-side flow parameters, config-file shaped.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct FlowParams {
    pub steps: usize,
    pub eta_x: f64,
    pub eta_z: f64,
    pub beta_clamp: f64,
    /// Translation-noise scale of the coordinate source distribution.
    pub c_d: f64,
}

impl Default for FlowParams {
    fn default() -> Self {
        let sched = ScheduleSpec::default();
        let params = SdeParams::default();
        FlowParams {
            steps: sched.steps,
            eta_x: params.eta_x,
            eta_z: params.eta_z,
            beta_clamp: params.beta_clamp,
            c_d: DEFAULT_C_D,
        }
    }
}

impl FlowParams {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(CoreError::Config("flow.steps must be >= 1".into()));
        }
        for (name, v) in [
            ("flow.eta_x", self.eta_x),
            ("flow.eta_z", self.eta_z),
            ("flow.beta_clamp", self.beta_clamp),
            ("flow.c_d", self.c_d),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(CoreError::Config(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }

    pub fn schedule(&self) -> ScheduleSpec {
        ScheduleSpec { steps: self.steps, ..ScheduleSpec::default() }
    }

    pub fn sde(&self) -> SdeParams {
        SdeParams { eta_x: self.eta_x, eta_z: self.eta_z, beta_clamp: self.beta_clamp }
    }
}

/// Everything one run needs. The schema is the set of fields here and in the
/// nested sections; unknown keys anywhere in the file are hard errors, so a
/// typo cannot silently fall back to a default.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExpConfig {
    pub seed: u64,
    pub algo: Algo,
    /// Training records generated for the run; one extra record is always
    /// drawn and its target context becomes the held-out search task.
    #[serde(default = "default_n_train")]
    pub n_train: usize,
    /// Trajectories for best-of-n, starts for refine. Ignored by the
    /// beam-shaped searchers, which size themselves from `search`.
    #[serde(default = "default_n_samples")]
    pub n_samples: usize,
    #[serde(default = "default_refine_iterations")]
    pub refine_iterations: usize,
    /// Label alphabet size for refinement proposals.
    #[serde(default = "default_label_values")]
    pub label_values: u8,
    /// Load this field checkpoint instead of training one.
    #[serde(default)]
    pub checkpoint: Option<PathBuf>,
    #[serde(default)]
    pub task: TaskSpec,
    #[serde(default)]
    pub flow: FlowParams,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub search: SearchConfig,
    #[serde(default = "RewardSpec::ipae_only")]
    pub reward: RewardSpec,
    #[serde(default = "SuccessCriterion::default_toy")]
    pub criterion: SuccessCriterion,
}

fn default_n_train() -> usize {
    48
}

fn default_n_samples() -> usize {
    16
}

fn default_refine_iterations() -> usize {
    200
}

fn default_label_values() -> u8 {
    N_LABELS as u8
}

impl ExpConfig {
    pub fn new(seed: u64, algo: Algo) -> Self {
        ExpConfig {
            seed,
            algo,
            n_train: default_n_train(),
            n_samples: default_n_samples(),
            refine_iterations: default_refine_iterations(),
            label_values: default_label_values(),
            checkpoint: None,
            task: TaskSpec::default(),
            flow: FlowParams::default(),
            train: TrainConfig::default(),
            search: SearchConfig::default(),
            reward: RewardSpec::ipae_only(),
            criterion: SuccessCriterion::default_toy(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExpConfig =
            toml::from_str(text).map_err(|e| CoreError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| CoreError::Serde(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.task.validate()?;
        self.flow.validate()?;
        self.search.validate()?;
        self.reward.validate()?;
        if self.label_values == 0 {
            return Err(CoreError::Config("label_values must be >= 1".into()));
        }
        if self.n_train == 0 && self.checkpoint.is_none() {
            return Err(CoreError::Config(
                "n_train must be >= 1 unless a checkpoint is given".into(),
            ));
        }
        // Criterion components must exist in the reward spec, otherwise every
        // sample would fail at score time instead of config time.
        for rule in &self.criterion.rules {
            if !self.reward.terms.iter().any(|t| t.name == rule.component) {
                return Err(CoreError::Config(format!(
                    "criterion component {:?} is not a reward term",
                    rule.component
                )));
            }
        }
        Ok(())
    }
}

/// Clusters the accepted structures and counts the clusters. Duplicate
/// designs from resampling land in one cluster, so this is the number the
/// scaling curves plot.
pub fn count_unique_successes(set: &SuccessSet, similarity_threshold: f64) -> Result<usize> {
    if set.samples.is_empty() {
        return Ok(0);
    }
    let chains: Vec<PointChain> = set
        .samples
        .iter()
        .map(|s| PointChain::from_coords(0, s.state.coords.clone()))
        .collect::<Result<_>>()?;
    Ok(greedy_cluster(&chains, similarity_threshold)?.n_clusters())
}

/// The trained (or loaded) pieces a run samples with. Built once per config
/// so every subcommand that needs a sampler constructs it the same way.
pub struct PreparedRun {
    pub field: MlpField,
    pub codec: ToyCodec,
    /// Held-out target context the run searches against.
    pub eval_ctx: TargetContext,
    pub train_set: ToyDataset,
    pub schedule: ScheduleSpec,
    pub sde: SdeParams,
    pub c_d: f64,
    pub n_residues: usize,
    /// Present when the field was trained here rather than checkpointed.
    pub trace: Option<TrainTrace>,
}

impl PreparedRun {
    pub fn sampler<'a>(&'a self, counter: &'a EvalCounter) -> Sampler<'a> {
        Sampler {
            field: &self.field,
            ctx: &self.eval_ctx,
            schedule: &self.schedule,
            params: self.sde,
            c_d: self.c_d,
            n_residues: self.n_residues,
            decoder: &self.codec,
            counter,
        }
    }
}

/// One extra record beyond the training set is always drawn; its context is
/// the held-out task the searchers are pointed at.
fn held_out_split(cfg: &ExpConfig) -> Result<(ToyDataset, TargetContext)> {
    let dataset = gen_toy_binder_dataset(&cfg.task, cfg.n_train + 1, cfg.seed)?;
    let eval_ctx = dataset.records[cfg.n_train].ctx.clone();
    let train_set =
        ToyDataset { spec: dataset.spec.clone(), records: dataset.records[..cfg.n_train].to_vec() };
    Ok((train_set, eval_ctx))
}

/// The held-out task context for `cfg`, recomputed without touching the
/// field. Cheap; useful for rendering artifacts of a finished run.
pub fn eval_context(cfg: &ExpConfig) -> Result<TargetContext> {
    cfg.validate()?;
    Ok(held_out_split(cfg)?.1)
}

/// Generates the run's data, then trains the field or loads the configured
/// checkpoint.
pub fn prepare_run(cfg: &ExpConfig) -> Result<PreparedRun> {
    cfg.validate()?;
    let root = RngKey::root(cfg.seed);
    let (train_set, eval_ctx) = held_out_split(cfg)?;

    let codec = ToyCodec::identity(cfg.task.d_z, cfg.task.latent_noise.max(1e-6))?;
    let (field, trace) = match &cfg.checkpoint {
        Some(path) => {
            let f = load_field(path)?;
            if f.arch.d_z != cfg.task.d_z || f.arch.n_classes != cfg.task.n_classes {
                return Err(CoreError::Config(format!(
                    "checkpoint arch (d_z {}, classes {}) does not fit the task (d_z {}, classes {})",
                    f.arch.d_z, f.arch.n_classes, cfg.task.d_z, cfg.task.n_classes
                )));
            }
            (f, None)
        }
        None => {
            let arch = FieldArch {
                d_z: cfg.task.d_z,
                n_classes: cfg.task.n_classes,
                ..FieldArch::default()
            };
            let mut f = MlpField::init(arch, root.child("field-init"));
            let trace = train_field(&mut f, &train_set, &codec, &cfg.train, root.child("train"))?;
            (f, Some(trace))
        }
    };

    Ok(PreparedRun {
        field,
        codec,
        eval_ctx,
        train_set,
        schedule: cfg.flow.schedule(),
        sde: cfg.flow.sde(),
        c_d: cfg.flow.c_d,
        n_residues: cfg.task.binder_len,
        trace,
    })
}

/// Runs one experiment end to end and writes `manifest.json`,
/// `successes.json`, and a one-row `curve.csv` into `out_dir`. Manifests are
/// append-only: a directory that already holds one is refused.
pub fn run_experiment(cfg: &ExpConfig, out_dir: &Path) -> Result<RunManifest> {
    cfg.validate()?;
    let manifest_path = out_dir.join("manifest.json");
    if manifest_path.exists() {
        return Err(CoreError::Config(format!(
            "{} already holds a manifest; runs are append-only, pick a fresh directory",
            out_dir.display()
        )));
    }
    let started = Instant::now();
    let prepared = prepare_run(cfg)?;
    let counter = EvalCounter::new();
    let sampler = prepared.sampler(&counter);
    let reward = SpecReward::new(cfg.reward.clone())?;

    let key = RngKey::root(cfg.seed).child("search");
    let set = match cfg.algo {
        Algo::Bon => best_of_n(&sampler, &reward, &cfg.criterion, cfg.n_samples, key)?,
        Algo::Beam => beam_search(&sampler, &reward, &cfg.criterion, &cfg.search, key)?,
        Algo::Fks => fk_steering(&sampler, &reward, &cfg.criterion, &cfg.search, key)?,
        Algo::Mcts => mcts_search(&sampler, &reward, &cfg.criterion, &cfg.search, key)?,
        Algo::Refine => refine_search(
            &sampler,
            &reward,
            &cfg.criterion,
            cfg.n_samples,
            cfg.refine_iterations,
            cfg.label_values,
            key,
        )?,
    };

    let manifest =
        RunManifest::build(cfg, &set, counter.get(), started.elapsed().as_secs_f64())?;

    artifacts::atomic_write(
        &out_dir.join("successes.json"),
        &artifacts::to_json_bytes(&set)?,
    )?;
    let curve = curves_from_manifests(std::slice::from_ref(&manifest))?;
    artifacts::atomic_write(
        &out_dir.join("curve.csv"),
        curves::write_curve_csv(&curve).as_bytes(),
    )?;
    artifacts::atomic_write(&manifest_path, &artifacts::to_json_bytes(&manifest)?)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::BinderState;
    use crate::geom::similarity;
    use crate::reward::RewardBreakdown;
    use crate::search::{branch_rollout_evals, SamplePhase, SuccessSample};

    fn tiny_cfg(seed: u64, algo: Algo) -> ExpConfig {
        let mut cfg = ExpConfig::new(seed, algo);
        cfg.task = TaskSpec { n_target: 8, n_hotspots: 2, binder_len: 4, ..TaskSpec::default() };
        cfg.n_train = 6;
        cfg.train = TrainConfig { lr: 0.02, steps: 8, batch: 4, c_d: DEFAULT_C_D };
        cfg.flow.steps = 12;
        cfg.search.beam_width = 2;
        cfg.search.branch_factor = 3;
        cfg.search.block_steps = 5;
        cfg.n_samples = 3;
        cfg.criterion = SuccessCriterion::always();
        cfg
    }

    #[test]
    fn minimal_toml_fills_defaults() {
        let cfg = ExpConfig::from_toml("seed = 3\nalgo = \"bon\"\n").unwrap();
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.algo, Algo::Bon);
        assert_eq!(cfg.n_train, 48);
        assert_eq!(cfg.task, TaskSpec::default());
        assert_eq!(cfg.reward, RewardSpec::ipae_only());
        assert_eq!(cfg.criterion, SuccessCriterion::default_toy());
        assert_eq!(cfg.flow.steps, ScheduleSpec::default().steps);
    }

    // The committed reference config documents every key at its default; if
    // a default moves, the file has to move with it.
    #[test]
    fn reference_config_spells_out_the_defaults() {
        let text = include_str!("../../../../configs/reference.toml");
        let cfg = ExpConfig::from_toml(text).unwrap();
        assert_eq!(cfg, ExpConfig::new(0, Algo::Bon));
    }

    #[test]
    fn unknown_keys_are_hard_errors() {
        let top = ExpConfig::from_toml("seed = 1\nalgo = \"bon\"\nbogus = 2\n");
        assert!(matches!(&top, Err(CoreError::Config(m)) if m.contains("bogus")), "{top:?}");

        let nested =
            ExpConfig::from_toml("seed = 1\nalgo = \"bon\"\n[task]\nn_targot = 3\n");
        assert!(
            matches!(&nested, Err(CoreError::Config(m)) if m.contains("n_targot")),
            "{nested:?}"
        );
    }

    #[test]
    fn toml_round_trip_preserves_config() {
        let mut cfg = tiny_cfg(11, Algo::Fks);
        cfg.search.inverse_temperature = 2.5;
        cfg.checkpoint = Some(PathBuf::from("field.json"));
        let text = cfg.to_toml().unwrap();
        assert_eq!(ExpConfig::from_toml(&text).unwrap(), cfg);
    }

    #[test]
    fn algo_names_parse_back() {
        for algo in [Algo::Bon, Algo::Beam, Algo::Fks, Algo::Mcts, Algo::Refine] {
            assert_eq!(algo.name().parse::<Algo>().unwrap(), algo);
        }
        assert!("gradient-descent".parse::<Algo>().is_err());
    }

    #[test]
    fn criterion_on_missing_term_rejected_at_validate() {
        let mut cfg = tiny_cfg(1, Algo::Bon);
        cfg.criterion = SuccessCriterion {
            rules: vec![crate::search::ThresholdRule {
                component: "contact_count".into(),
                cmp: crate::search::Cmp::Greater,
                threshold: 1.0,
            }],
        };
        let err = cfg.validate().unwrap_err();
        assert!(matches!(&err, CoreError::Config(m) if m.contains("contact_count")), "{err}");
    }

    fn sample_at(coords: Vec<[f64; 3]>) -> SuccessSample {
        let n = coords.len();
        SuccessSample {
            state: BinderState { coords, latents: vec![0.0; 8 * n], d_z: 8 },
            labels: vec![0; n],
            reward: RewardBreakdown { total: 1.0, components: vec![] },
            algorithm: "bon".into(),
            round: 0,
            candidate: 0,
            phase: SamplePhase::Final,
        }
    }

    #[test]
    fn unique_count_empty_and_identical() {
        assert_eq!(count_unique_successes(&SuccessSet::new(), 0.5).unwrap(), 0);

        let mut set = SuccessSet::new();
        for _ in 0..5 {
            set.push(sample_at(vec![[0.0, 0.0, 0.0], [3.0, 0.0, 0.0], [3.0, 3.0, 0.0]]));
        }
        assert_eq!(count_unique_successes(&set, 0.5).unwrap(), 1);
    }

    #[test]
    fn unique_count_matches_independent_greedy() {
        // 20 structures around 6 base shapes (chains of distinct spacing, so
        // they stay apart under superposition); the oracle is a from-scratch
        // leader scan over pairwise similarities.
        let mut rng = RngKey::root(404).child("uniq").rng();
        let mut set = SuccessSet::new();
        for i in 0..20 {
            let spacing = 2.0 + 3.0 * (i * 7 % 6) as f64;
            let coords: Vec<[f64; 3]> = (0..5)
                .map(|k| {
                    let mut jit = || 0.35 * crate::rngkit::std_normal(&mut rng);
                    [spacing * k as f64 + jit(), jit(), jit()]
                })
                .collect();
            set.push(sample_at(coords));
        }

        let chains: Vec<PointChain> = set
            .samples
            .iter()
            .map(|s| PointChain::from_coords(0, s.state.coords.clone()).unwrap())
            .collect();
        let mut leaders: Vec<&PointChain> = Vec::new();
        'outer: for c in &chains {
            for l in &leaders {
                if similarity(l, c).unwrap() >= 0.5 {
                    continue 'outer;
                }
            }
            leaders.push(c);
        }
        assert_eq!(count_unique_successes(&set, 0.5).unwrap(), leaders.len());
        assert!(leaders.len() > 1);
    }

    #[test]
    fn bon_with_zero_samples_writes_zero_eval_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny_cfg(5, Algo::Bon);
        cfg.n_samples = 0;
        let manifest = run_experiment(&cfg, dir.path()).unwrap();
        assert_eq!(manifest.total_evals, 0);
        assert_eq!(manifest.n_accepted, 0);
        assert_eq!(manifest.unique_successes, 0);
        assert!(manifest.reward_stats.is_none());

        let set: SuccessSet =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("successes.json")).unwrap())
                .unwrap();
        assert!(set.samples.is_empty());
        let roundtrip = load_manifest(&dir.path().join("manifest.json")).unwrap();
        assert_eq!(roundtrip.comparable(), manifest.comparable());
        assert!(dir.path().join("curve.csv").exists());
    }

    #[test]
    fn rerun_with_same_config_is_byte_identical() {
        let cfg = tiny_cfg(9, Algo::Bon);
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let ma = run_experiment(&cfg, a.path()).unwrap();
        let mb = run_experiment(&cfg, b.path()).unwrap();
        assert!(ma.n_accepted > 0, "tiny run should accept under the always-pass criterion");

        let read = |d: &Path, f: &str| std::fs::read(d.join(f)).unwrap();
        assert_eq!(read(a.path(), "successes.json"), read(b.path(), "successes.json"));
        assert_eq!(read(a.path(), "curve.csv"), read(b.path(), "curve.csv"));
        assert_eq!(
            artifacts::to_json_bytes(&ma.comparable()).unwrap(),
            artifacts::to_json_bytes(&mb.comparable()).unwrap()
        );
    }

    #[test]
    fn beam_manifest_evals_match_closed_form() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_cfg(2, Algo::Beam);
        let manifest = run_experiment(&cfg, dir.path()).unwrap();
        assert_eq!(manifest.total_evals, branch_rollout_evals(12, 5, 2, 3));
    }

    #[test]
    fn existing_manifest_is_never_overwritten() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny_cfg(5, Algo::Bon);
        cfg.n_samples = 0;
        run_experiment(&cfg, dir.path()).unwrap();
        let before = std::fs::read(dir.path().join("manifest.json")).unwrap();
        let again = run_experiment(&cfg, dir.path());
        assert!(matches!(again, Err(CoreError::Config(_))), "{again:?}");
        assert_eq!(std::fs::read(dir.path().join("manifest.json")).unwrap(), before);
    }

    #[test]
    fn checkpointed_run_skips_training_and_checks_arch() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_cfg(3, Algo::Bon);
        let field = MlpField::init(
            FieldArch { d_z: cfg.task.d_z, ..FieldArch::default() },
            RngKey::root(77).child("f"),
        );
        let ckpt = dir.path().join("field.json");
        save_field(&ckpt, &field).unwrap();

        let mut with_ckpt = cfg.clone();
        with_ckpt.checkpoint = Some(ckpt.clone());
        with_ckpt.train.steps = usize::MAX; // would hang if training ran
        let manifest = run_experiment(&with_ckpt, &dir.path().join("run")).unwrap();
        assert_eq!(manifest.total_evals, 3 * 12);

        let mut mismatched = with_ckpt.clone();
        mismatched.task.d_z = cfg.task.d_z + 1;
        let err = run_experiment(&mismatched, &dir.path().join("run2")).unwrap_err();
        assert!(matches!(&err, CoreError::Config(m) if m.contains("checkpoint")), "{err}");
    }
}
