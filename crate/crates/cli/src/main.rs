//! `placer`: train a placement field, draw samples, run compute-scaled
//! search, crop structures into training pairs, and sweep benchmark configs.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use placer_core::exp::{
    atomic_write, emit_curves, eval_context, load_manifest, prepare_run, run_experiment,
    save_dataset, save_field, to_json_bytes, Algo, ExpConfig, RunManifest,
};
use placer_core::flow::EvalCounter;
use placer_core::pipeline::{
    parse_structure, run_pipeline, write_structure, PipelineOptions, DEFAULT_CONTACT_DIST,
    DEFAULT_MAX_BINDER, DEFAULT_MAX_TOTAL, DEFAULT_MIN_CONTACTS, DEFAULT_MIN_TARGET,
    DEFAULT_SPATIAL_CUTOFF,
};
use placer_core::reward::ExternalScorer;
use placer_core::search::SuccessSet;
use placer_core::{Complex, RngKey};

#[derive(Parser)]
#[command(name = "placer", version, about = "Binder placement: training, sampling, search")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train a velocity field and save the checkpoint plus its training set.
    Train(TrainArgs),
    /// Draw unsteered samples from a trained field.
    Sample(SampleArgs),
    /// Run one search experiment end to end.
    Search(SearchArgs),
    /// Crop a multi-chain structure into binder/target training pairs.
    Pipeline(PipelineArgs),
    /// Run several configs and emit compute-scaling curves.
    Bench(BenchArgs),
    /// Re-plot curves from existing run manifests.
    Plot(PlotArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory for field.json, dataset.json, train_trace.json.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// How many trajectories to draw; defaults to n_samples from the config.
    #[arg(long)]
    count: Option<usize>,
    /// Also write one PDB-format file per sample.
    #[arg(long)]
    dump_pdb: bool,
}

#[derive(Args)]
struct SearchArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Override the config's algorithm (bon|beam|fks|mcts|refine).
    #[arg(long)]
    algo: Option<Algo>,
    /// Override the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Also write one PDB-format file per accepted sample.
    #[arg(long)]
    dump_pdb: bool,
}

#[derive(Args)]
struct PipelineArgs {
    /// Input structure (PDB format).
    #[arg(long)]
    input: PathBuf,
    /// Output directory for report.json and crop_*.pdb.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_CONTACT_DIST)]
    contact_dist: f64,
    #[arg(long, default_value_t = DEFAULT_MIN_CONTACTS)]
    min_contacts: usize,
    #[arg(long, default_value_t = DEFAULT_MAX_BINDER)]
    max_binder: usize,
    #[arg(long, default_value_t = DEFAULT_SPATIAL_CUTOFF)]
    spatial_cutoff: f64,
    #[arg(long, default_value_t = DEFAULT_MIN_TARGET)]
    min_target: usize,
    #[arg(long, default_value_t = DEFAULT_MAX_TOTAL)]
    max_total: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct BenchArgs {
    /// One TOML config per run; each runs in its own subdirectory of --out.
    #[arg(long, num_args = 1.., required = true)]
    configs: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PlotArgs {
    /// Run directories or manifest.json paths.
    #[arg(required = true)]
    runs: Vec<PathBuf>,
    /// Output directory for curve.csv and curve.svg.
    #[arg(long)]
    out: PathBuf,
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().cmd {
        Cmd::Train(a) => cmd_train(a),
        Cmd::Sample(a) => cmd_sample(a),
        Cmd::Search(a) => cmd_search(a),
        Cmd::Pipeline(a) => cmd_pipeline(a),
        Cmd::Bench(a) => cmd_bench(a),
        Cmd::Plot(a) => cmd_plot(a),
    }
}

fn load_config(path: &Path) -> Result<ExpConfig> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    ExpConfig::from_toml(&text).with_context(|| format!("parsing {}", path.display()))
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let cfg = load_config(&a.config)?;
    let prepared = prepare_run(&cfg)?;
    fs::create_dir_all(&a.out)?;
    save_field(&a.out.join("field.json"), &prepared.field)?;
    save_dataset(&a.out.join("dataset.json"), &prepared.train_set)?;
    match &prepared.trace {
        Some(trace) => {
            atomic_write(&a.out.join("train_trace.json"), &to_json_bytes(trace)?)?;
            println!(
                "trained {} steps on {} tasks; tail loss {:.6}",
                trace.losses.len(),
                prepared.train_set.records.len(),
                trace.tail_mean(0.1)
            );
        }
        None => println!("loaded checkpoint; nothing to train"),
    }
    println!("field checkpoint: {}", a.out.join("field.json").display());
    Ok(())
}

fn cmd_sample(a: SampleArgs) -> Result<()> {
    let cfg = load_config(&a.config)?;
    let count = a.count.unwrap_or(cfg.n_samples);
    let prepared = prepare_run(&cfg)?;
    let counter = EvalCounter::new();
    let sampler = prepared.sampler(&counter);
    fs::create_dir_all(&a.out)?;

    let key = RngKey::root(cfg.seed).child("sample");
    let mut records = Vec::with_capacity(count);
    for i in 0..count {
        let (state, labels) = sampler.sample(key.child_idx(i as u64), None)?;
        if a.dump_pdb {
            let text = ExternalScorer::render_input(&state, &labels, &prepared.eval_ctx)?;
            atomic_write(&a.out.join(format!("sample_{i:03}.pdb")), text.as_bytes())?;
        }
        records.push(serde_json::json!({ "index": i, "state": state, "labels": labels }));
    }
    atomic_write(&a.out.join("samples.json"), &to_json_bytes(&records)?)?;
    println!("wrote {count} samples ({} forward calls) to {}", counter.get(), a.out.display());
    Ok(())
}

fn cmd_search(a: SearchArgs) -> Result<()> {
    let mut cfg = load_config(&a.config)?;
    if let Some(algo) = a.algo {
        cfg.algo = algo;
    }
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    let manifest = run_experiment(&cfg, &a.out)?;
    if a.dump_pdb {
        let text = fs::read_to_string(a.out.join("successes.json"))?;
        let set: SuccessSet = serde_json::from_str(&text)?;
        let ctx = eval_context(&cfg)?;
        for (i, s) in set.samples.iter().enumerate() {
            let pdb = ExternalScorer::render_input(&s.state, &s.labels, &ctx)?;
            atomic_write(&a.out.join(format!("success_{i:03}.pdb")), pdb.as_bytes())?;
        }
    }
    print_run_line(&manifest);
    Ok(())
}

fn print_run_line(m: &RunManifest) {
    let reward = match &m.reward_stats {
        Some(s) => format!("reward {:.3}..{:.3} (mean {:.3})", s.min, s.max, s.mean),
        None => "no accepted rewards".into(),
    };
    println!(
        "{} seed {}: {} {}, {} accepted, {} unique, {}, {:.2}s",
        m.algorithm, m.seed, m.total_evals, m.compute_unit, m.n_accepted, m.unique_successes,
        reward, m.wall_clock_secs
    );
}

fn cmd_pipeline(a: PipelineArgs) -> Result<()> {
    let text = fs::read_to_string(&a.input)
        .with_context(|| format!("reading {}", a.input.display()))?;
    let complex = parse_structure(&text)?;
    let opts = PipelineOptions {
        contact_dist: a.contact_dist,
        min_contacts: a.min_contacts,
        max_binder: a.max_binder,
        spatial_cutoff: a.spatial_cutoff,
        min_target: a.min_target,
        max_total: a.max_total,
        seed: a.seed,
    };
    let report = run_pipeline(&complex, &opts)?;
    fs::create_dir_all(&a.out)?;
    atomic_write(&a.out.join("report.json"), &to_json_bytes(&report)?)?;
    // Crops are written target-first, binder as the last chain, matching the
    // layout the reward scorers expect.
    for (k, entry) in report.entries.iter().enumerate() {
        let mut chains = entry.crop.target_chains.clone();
        chains.push(entry.crop.binder.clone());
        let cropped = Complex::new(chains)?;
        atomic_write(&a.out.join(format!("crop_{k:03}.pdb")), write_structure(&cropped).as_bytes())?;
        println!(
            "crop {k}: chains {:?}, binder {} residues, total {}{}",
            entry.pair,
            entry.crop.binder.len(),
            entry.crop.total_residues(),
            if entry.crop.min_target_unmet { " (short target side)" } else { "" }
        );
    }
    println!(
        "{} chains, {} contacting pairs, {} crops -> {}",
        report.n_chains,
        report.dimers.len(),
        report.entries.len(),
        a.out.display()
    );
    Ok(())
}

fn cmd_bench(a: BenchArgs) -> Result<()> {
    fs::create_dir_all(&a.out)?;
    let mut used = HashSet::new();
    let mut manifests = Vec::with_capacity(a.configs.len());
    for path in &a.configs {
        let cfg = load_config(path)?;
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("run");
        let mut name = stem.to_string();
        let mut k = 1;
        while !used.insert(name.clone()) {
            name = format!("{stem}-{k}");
            k += 1;
        }
        let run_dir = a.out.join("runs").join(&name);
        let manifest = run_experiment(&cfg, &run_dir)?;
        print_run_line(&manifest);
        manifests.push(manifest);
    }
    emit_curves(&manifests, &a.out.join("curve.csv"), &a.out.join("curve.svg"))?;
    println!("curves: {} and curve.svg", a.out.join("curve.csv").display());
    Ok(())
}

fn cmd_plot(a: PlotArgs) -> Result<()> {
    let mut manifests = Vec::with_capacity(a.runs.len());
    for run in &a.runs {
        let path = if run.is_dir() { run.join("manifest.json") } else { run.clone() };
        manifests.push(load_manifest(&path)?);
    }
    if manifests.is_empty() {
        bail!("no manifests to plot");
    }
    fs::create_dir_all(&a.out)?;
    emit_curves(&manifests, &a.out.join("curve.csv"), &a.out.join("curve.svg"))?;
    println!("plotted {} runs into {}", manifests.len(), a.out.display());
    Ok(())
}
