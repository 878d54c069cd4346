// Scratch calibration harness. Not part of the deliverable.

use std::time::Instant;

use placer_core::exp::{count_unique_successes, prepare_run, Algo, ExpConfig, PreparedRun};
use placer_core::flow::{EvalCounter, Sampler, SdeParams};
use placer_core::model::dataset::translate_context;
use placer_core::reward::{
    com_placement_reward, contact_count_reward, SpecReward, RewardSpec, BOND_PROXY_DIST,
    TERM_PROXY_IPAE,
};
use placer_core::rngkit::std_normal;
use placer_core::search::{beam_search, best_of_n, branch_rollout_evals, fk_steering};
use placer_core::search::{Cmp, SuccessCriterion, ThresholdRule};
use placer_core::RngKey;

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn sd(v: &[f64]) -> f64 {
    let m = mean(v);
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

fn base_cfg(seed: u64, flow_steps: usize, train_steps: usize) -> ExpConfig {
    let mut cfg = ExpConfig::new(seed, Algo::Bon);
    cfg.n_train = 32;
    cfg.train.steps = train_steps;
    cfg.flow.steps = flow_steps;
    cfg
}

fn placement_err(run: &PreparedRun, seed: u64, mag: f64, n_tasks: usize, m: usize) -> f64 {
    let counter = EvalCounter::new();
    let mut errs = Vec::new();
    for k in 0..n_tasks as u64 {
        let key = RngKey::root(seed).child("ablate").child_idx(k);
        let mut drng = key.child("delta").rng();
        let mut d = [std_normal(&mut drng), std_normal(&mut drng), std_normal(&mut drng)];
        let n = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
        for c in d.iter_mut() {
            *c *= mag / n;
        }
        let ctx = translate_context(&run.eval_ctx, d);
        let sampler = Sampler {
            field: &run.field,
            ctx: &ctx,
            schedule: &run.schedule,
            params: SdeParams { eta_x: 0.0, eta_z: 0.0, beta_clamp: 0.0 },
            c_d: run.c_d,
            n_residues: run.n_residues,
            decoder: &run.codec,
            counter: &counter,
        };
        for j in 0..m as u64 {
            let (state, _) = sampler.sample(key.child("s").child_idx(j), None).unwrap();
            errs.push(-com_placement_reward(&state.coords, &ctx).unwrap());
        }
    }
    mean(&errs)
}

fn c5(mag: f64, train_steps: usize, flow_steps: usize) {
    let t0 = Instant::now();
    let mut diffs = Vec::new();
    for seed in 0..20u64 {
        let mut cfg_a = base_cfg(seed, flow_steps, train_steps);
        cfg_a.flow.c_d = 0.2;
        cfg_a.train.c_d = 0.2;
        let mut cfg_b = cfg_a.clone();
        cfg_b.flow.c_d = 0.0;
        cfg_b.train.c_d = 0.0;
        let a = prepare_run(&cfg_a).unwrap();
        let b = prepare_run(&cfg_b).unwrap();
        let ea = placement_err(&a, seed, mag, 5, 4);
        let eb = placement_err(&b, seed, mag, 5, 4);
        println!("seed {seed}: with-noise {ea:.3} without {eb:.3} diff {:+.3}", eb - ea);
        diffs.push(eb - ea);
    }
    let t = mean(&diffs) / (sd(&diffs) / (diffs.len() as f64).sqrt());
    println!(
        "mag {mag} train {train_steps} steps {flow_steps}: mean diff {:.4} t = {:.3} ({}s)",
        mean(&diffs),
        t,
        t0.elapsed().as_secs()
    );
}

fn crit(tau: f64) -> SuccessCriterion {
    SuccessCriterion {
        rules: vec![ThresholdRule {
            component: TERM_PROXY_IPAE.into(),
            cmp: Cmp::Less,
            threshold: tau,
        }],
    }
}

fn hard_cfg(seed: u64, eta: f64, beta: f64, train_steps: usize) -> ExpConfig {
    let mut cfg = base_cfg(seed, 60, train_steps);
    cfg.task.binder_len = 12;
    cfg.task.arc_radius = (2.0, 4.0);
    cfg.task.arc_span = 2.5;
    cfg.task.jitter = 0.4;
    cfg.flow.beta_clamp = 0.05;
    cfg.flow.eta_x = eta;
    cfg.flow.eta_z = 0.5;
    cfg.search.beam_width = 4;
    cfg.search.branch_factor = 4;
    cfg.search.block_steps = 15;
    cfg.search.inverse_temperature = beta;
    cfg.reward = RewardSpec {
        terms: vec![placer_core::reward::RewardTerm {
            name: placer_core::reward::TERM_COM_PLACEMENT.into(),
            weight: 1.0,
            normalizer: 3.0,
        }],
    };
    cfg.criterion = com_crit(0.8);
    cfg
}

fn com_crit(r: f64) -> SuccessCriterion {
    SuccessCriterion {
        rules: vec![ThresholdRule {
            component: placer_core::reward::TERM_COM_PLACEMENT.into(),
            cmp: Cmp::Greater,
            threshold: -r,
        }],
    }
}

fn c6com(eta: f64, train_steps: usize) {
    // Distribution of CoM placement distance under plain best-of-n on the
    // hard task, to place the acceptance radius.
    for seed in 0..4u64 {
        let cfg = hard_cfg(seed, eta, 5.0, train_steps);
        let run = prepare_run(&cfg).unwrap();
        let counter = EvalCounter::new();
        let sampler = run.sampler(&counter);
        let reward = SpecReward::new(cfg.reward.clone()).unwrap();
        let set = best_of_n(
            &sampler,
            &reward,
            &SuccessCriterion::always(),
            40,
            RngKey::root(seed).child("search"),
        )
        .unwrap();
        let mut vals: Vec<f64> = set
            .samples
            .iter()
            .map(|s| -s.reward.component(placer_core::reward::TERM_COM_PLACEMENT).unwrap())
            .collect();
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let uniq_all = count_unique_successes(&set, 0.5).unwrap();
        println!(
            "seed {seed}: dist min {:.2} q25 {:.2} med {:.2} max {:.2}; {} clusters in 40",
            vals[0],
            vals[vals.len() / 4],
            vals[vals.len() / 2],
            vals[vals.len() - 1],
            uniq_all
        );
    }
}

fn c6(r: f64, eta: f64, beta: f64, train_steps: usize) {
    let t0 = Instant::now();
    let (s, k, n, l) = (60usize, 15usize, 4usize, 4usize);
    let evals = branch_rollout_evals(s, k, n, l);
    let bon_n = (evals / s as u64) as usize;
    println!("budget {evals} evals, bon n = {bon_n}");
    let mut totals = [0usize; 3];
    let mut wins = [0usize; 2];
    for seed in 0..10u64 {
        let cfg = hard_cfg(seed, eta, beta, train_steps);
        let run = prepare_run(&cfg).unwrap();
        let reward = SpecReward::new(cfg.reward.clone()).unwrap();
        let criterion = com_crit(r);
        let key = RngKey::root(seed).child("search");

        let mut uniq = [0usize; 3];
        let mut used = [0u64; 3];
        for (i, algo) in ["bon", "beam", "fks"].iter().enumerate() {
            let counter = EvalCounter::new();
            let sampler = run.sampler(&counter);
            let set = match *algo {
                "bon" => best_of_n(&sampler, &reward, &criterion, bon_n, key.clone()).unwrap(),
                "beam" => {
                    beam_search(&sampler, &reward, &criterion, &cfg.search, key.clone()).unwrap()
                }
                _ => fk_steering(&sampler, &reward, &criterion, &cfg.search, key.clone()).unwrap(),
            };
            uniq[i] = count_unique_successes(&set, 0.5).unwrap();
            used[i] = counter.get();
        }
        println!(
            "seed {seed}: bon {} beam {} fks {} (evals {:?})",
            uniq[0], uniq[1], uniq[2], used
        );
        for i in 0..3 {
            totals[i] += uniq[i];
        }
        if uniq[1] as f64 >= 1.5 * uniq[0] as f64 {
            wins[0] += 1;
        }
        if uniq[2] as f64 >= 1.5 * uniq[0] as f64 {
            wins[1] += 1;
        }
    }
    println!(
        "r {r} eta {eta} beta {beta}: totals bon {} beam {} fks {} ratios {:.2} {:.2} wins {:?} ({}s)",
        totals[0],
        totals[1],
        totals[2],
        totals[1] as f64 / totals[0].max(1) as f64,
        totals[2] as f64 / totals[0].max(1) as f64,
        wins,
        t0.elapsed().as_secs()
    );
}

fn c6_dist(train_steps: usize) {
    // Distribution of the folding proxy under plain best-of-n, to place tau.
    for seed in 0..3u64 {
        let mut cfg = base_cfg(seed, 60, train_steps);
        let run = prepare_run(&cfg).unwrap();
        cfg.flow.eta_x = 0.3;
        cfg.flow.eta_z = 0.3;
        let counter = EvalCounter::new();
        let sampler = run.sampler(&counter);
        let reward = SpecReward::new(RewardSpec::ipae_only()).unwrap();
        let set = best_of_n(
            &sampler,
            &reward,
            &SuccessCriterion::always(),
            40,
            RngKey::root(seed).child("search"),
        )
        .unwrap();
        let mut vals: Vec<f64> = set
            .samples
            .iter()
            .map(|s| s.reward.component(TERM_PROXY_IPAE).unwrap())
            .collect();
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        println!(
            "seed {seed}: min {:.2} q25 {:.2} med {:.2} q75 {:.2} max {:.2}",
            vals[0],
            vals[vals.len() / 4],
            vals[vals.len() / 2],
            vals[3 * vals.len() / 4],
            vals[vals.len() - 1]
        );
    }
}

fn c12(tau: f64, train_steps: usize) {
    let t0 = Instant::now();
    let mut diffs = Vec::new();
    for seed in 0..10u64 {
        let mut cfg = base_cfg(seed, 60, train_steps);
        cfg.flow.eta_x = 0.3;
        cfg.flow.eta_z = 0.3;
        cfg.search.block_steps = 15;
        let run = prepare_run(&cfg).unwrap();
        let criterion = crit(tau);
        let key = RngKey::root(seed).child("search");
        let mut means = [f64::NAN; 2];
        let mut counts = [0usize; 2];
        for (i, spec) in [RewardSpec::ipae_only(), RewardSpec::ipae_and_contacts()]
            .into_iter()
            .enumerate()
        {
            let counter = EvalCounter::new();
            let sampler = run.sampler(&counter);
            let reward = SpecReward::new(spec).unwrap();
            let set = beam_search(&sampler, &reward, &criterion, &cfg.search, key.clone()).unwrap();
            let contacts: Vec<f64> = set
                .samples
                .iter()
                .map(|s| {
                    contact_count_reward(&s.state.coords, &run.eval_ctx, BOND_PROXY_DIST).unwrap()
                })
                .collect();
            counts[i] = contacts.len();
            if !contacts.is_empty() {
                means[i] = mean(&contacts);
            }
        }
        println!(
            "seed {seed}: ipae-only {:.3} (n {}) combined {:.3} (n {}) diff {:+.3}",
            means[0],
            counts[0],
            means[1],
            counts[1],
            means[1] - means[0]
        );
        diffs.push(means[1] - means[0]);
    }
    println!(
        "tau {tau}: mean diff {:+.4}, min {:+.4} ({}s)",
        mean(&diffs),
        diffs.iter().cloned().fold(f64::INFINITY, f64::min),
        t0.elapsed().as_secs()
    );
}

fn spread(train_steps: usize, lr: f64, eta: f64, clamp: f64) {
    let t0 = Instant::now();
    for seed in 0..2u64 {
        let mut cfg = hard_cfg(seed, eta, 8.0, train_steps);
        cfg.train.lr = lr;
        cfg.flow.beta_clamp = clamp;
        let run = prepare_run(&cfg).unwrap();
        let counter = EvalCounter::new();
        let sampler = run.sampler(&counter);
        let reward = SpecReward::new(cfg.reward.clone()).unwrap();
        let set = best_of_n(
            &sampler,
            &reward,
            &SuccessCriterion::always(),
            40,
            RngKey::root(seed).child("search"),
        )
        .unwrap();
        let dists: Vec<f64> = set
            .samples
            .iter()
            .map(|s| -s.reward.component(placer_core::reward::TERM_COM_PLACEMENT).unwrap())
            .collect();
        let chains: Vec<placer_core::PointChain> = set
            .samples
            .iter()
            .map(|s| placer_core::PointChain::from_coords(0, s.state.coords.clone()).unwrap())
            .collect();
        let mut rmsds = Vec::new();
        for i in 0..chains.len() {
            for j in (i + 1)..chains.len() {
                let al = placer_core::geom::align_points(
                    &chains[i].coords,
                    &chains[j].coords,
                )
                .unwrap();
                rmsds.push(al.rmsd);
            }
        }
        println!(
            "seed {seed}: com mean {:.2} sd {:.3}; pair rmsd mean {:.3} max {:.3}; {} clusters; tail loss {:.4}",
            mean(&dists),
            sd(&dists),
            mean(&rmsds),
            rmsds.iter().cloned().fold(0.0f64, f64::max),
            count_unique_successes(&set, 0.5).unwrap(),
            run.trace.as_ref().unwrap().tail_mean(0.05)
        );
    }
    println!("train {train_steps} lr {lr} eta {eta} ({}s)", t0.elapsed().as_secs());
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let f = |i: usize, d: f64| args.get(i).and_then(|s| s.parse().ok()).unwrap_or(d);
    match args.get(1).map(|s| s.as_str()) {
        Some("c5") => c5(f(2, 3.0), f(3, 800.0) as usize, f(4, 200.0) as usize),
        Some("c6") => c6(f(2, 0.8), f(3, 0.35), f(4, 8.0), f(5, 800.0) as usize),
        Some("c6dist") => c6_dist(f(2, 800.0) as usize),
        Some("c6com") => c6com(f(2, 0.35), f(3, 800.0) as usize),
        Some("spread") => spread(f(2, 3000.0) as usize, f(3, 0.02), f(4, 1.0), f(5, 1000.0)),
        Some("c12") => c12(f(2, 8.0), f(3, 800.0) as usize),
        _ => eprintln!("modes: c5 | c6 | c6dist | c12"),
    }
}
