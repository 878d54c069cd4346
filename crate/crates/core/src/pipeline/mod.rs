//! Structure-file ingestion and the dimer extraction / interface cropping
//! procedures that turn multi-chain complexes into binder-target training
//! examples.

mod crop;
mod dimer;
mod pdb;

pub use crop::{crop_complex, CropResult};
pub use dimer::{extract_dimers, split_domains, DomainAnnotation};
pub use pdb::{parse_structure, write_structure};

/// Cutoff defining interface residues for seeding crops; also reused by the
/// placement reward.
pub const INTERFACE_CUTOFF: f64 = 8.0;

/// Dimer rule defaults: a chain pair qualifies when each side has at least
/// `DEFAULT_MIN_CONTACTS` residues within `DEFAULT_CONTACT_DIST` of the other.
pub const DEFAULT_CONTACT_DIST: f64 = 10.0;
pub const DEFAULT_MIN_CONTACTS: usize = 4;

/// Crop budget defaults.
pub const DEFAULT_MAX_BINDER: usize = 250;
pub const DEFAULT_SPATIAL_CUTOFF: f64 = 15.0;
pub const DEFAULT_MIN_TARGET: usize = 50;
pub const DEFAULT_MAX_TOTAL: usize = 500;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::geom::Complex;
use crate::rngkit::RngKey;

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineOptions {
    pub contact_dist: f64,
    pub min_contacts: usize,
    pub max_binder: usize,
    pub spatial_cutoff: f64,
    pub min_target: usize,
    pub max_total: usize,
    pub seed: u64,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions {
            contact_dist: DEFAULT_CONTACT_DIST,
            min_contacts: DEFAULT_MIN_CONTACTS,
            max_binder: DEFAULT_MAX_BINDER,
            spatial_cutoff: DEFAULT_SPATIAL_CUTOFF,
            min_target: DEFAULT_MIN_TARGET,
            max_total: DEFAULT_MAX_TOTAL,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct PipelineEntry {
    /// Chain indices of the dimer in the input complex.
    pub pair: (usize, usize),
    pub crop: CropResult,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct PipelineReport {
    pub options: PipelineOptions,
    pub n_chains: usize,
    /// Every qualifying dimer, whether or not its crop produced an entry.
    pub dimers: Vec<(usize, usize)>,
    pub entries: Vec<PipelineEntry>,
}

/// Dimer extraction followed by one seeded crop per dimer. Each crop's seed
/// is derived from the report seed and the dimer's position in `dimers`, so
/// a pair that fails to crop never shifts the randomness of the others. A
/// dimer whose pairwise interface is empty at the (tighter) crop cutoff is
/// skipped with a warning; any other crop failure aborts.
pub fn run_pipeline(c: &Complex, opts: &PipelineOptions) -> Result<PipelineReport> {
    let dimers = extract_dimers(c, opts.contact_dist, opts.min_contacts)?;
    let mut entries = Vec::with_capacity(dimers.len());
    for (k, &(i, j)) in dimers.iter().enumerate() {
        let sub = Complex::new(vec![c.chains[i].clone(), c.chains[j].clone()])?;
        let crop_seed: u64 =
            RngKey::root(opts.seed).child("crop-pair").child_idx(k as u64).rng().random();
        match crop_complex(
            &sub,
            crop_seed,
            opts.max_binder,
            opts.spatial_cutoff,
            opts.min_target,
            opts.max_total,
        ) {
            Ok(crop) => entries.push(PipelineEntry { pair: (i, j), crop }),
            Err(crate::error::CoreError::NoInterface) => {
                log::warn!("dimer ({i}, {j}) has no interface at {INTERFACE_CUTOFF}, skipped");
            }
            Err(e) => return Err(e),
        }
    }
    Ok(PipelineReport { options: *opts, n_chains: c.chains.len(), dimers, entries })
}
