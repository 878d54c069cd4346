//! Seeded builders shared by the benchmark targets. Everything here is
//! deterministic so timings compare like with like across runs.

use rand::Rng;

use placer_core::model::{gen_toy_binder_dataset, FieldArch, MlpField, TaskSpec, ToyCodec};
use placer_core::{PointChain, RngKey, TargetContext};

pub fn jittered_cloud(n: usize, seed: u64) -> Vec<[f64; 3]> {
    let mut rng = RngKey::root(seed).child("cloud").rng();
    (0..n)
        .map(|i| {
            let base = i as f64 * 1.7;
            [
                base + rng.random_range(-0.4..0.4),
                (base * 0.3).sin() * 5.0 + rng.random_range(-0.4..0.4),
                rng.random_range(-0.4..0.4),
            ]
        })
        .collect()
}

/// Chains drawn around a handful of distinct base shapes, for clustering.
pub fn shape_population(count: usize, seed: u64) -> Vec<PointChain> {
    let mut rng = RngKey::root(seed).child("pop").rng();
    (0..count)
        .map(|i| {
            let spacing = 2.0 + (i % 8) as f64;
            let coords = (0..12)
                .map(|k| {
                    [
                        k as f64 * spacing + rng.random_range(-0.3..0.3),
                        rng.random_range(-0.3..0.3),
                        rng.random_range(-0.3..0.3),
                    ]
                })
                .collect();
            PointChain::from_coords(i as u32, coords).unwrap()
        })
        .collect()
}

pub struct ToyPieces {
    pub field: MlpField,
    pub codec: ToyCodec,
    pub ctx: TargetContext,
    pub task: TaskSpec,
}

/// Untrained field over a default task; forward-pass cost is what the
/// trajectory benches measure, and init weights cost the same as trained.
pub fn toy_pieces(seed: u64) -> ToyPieces {
    let task = TaskSpec::default();
    let dataset = gen_toy_binder_dataset(&task, 1, seed).unwrap();
    let ctx = dataset.records[0].ctx.clone();
    let codec = ToyCodec::identity(task.d_z, task.latent_noise).unwrap();
    let arch = FieldArch { d_z: task.d_z, n_classes: task.n_classes, ..FieldArch::default() };
    let field = MlpField::init(arch, RngKey::root(seed).child("field"));
    ToyPieces { field, codec, ctx, task }
}
