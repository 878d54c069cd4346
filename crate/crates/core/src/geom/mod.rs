//! Geometry primitives shared by the data pipeline, rewards, and evaluation:
//! rigid superposition, interface detection, contact counting, and greedy
//! structural clustering.

mod cluster;
mod interface;
mod kabsch;
pub mod vec3;

pub use cluster::{greedy_cluster, similarity, ClusterAssignment, SIMILARITY_D0};
pub use interface::{detect_contacts, interface_residues};
pub use kabsch::{align_points, kabsch_align, Alignment};

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// An ordered chain of points (alpha-carbon positions at full scale, bare
/// points in the toy tasks) with residue numbering.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointChain {
    pub chain_id: u32,
    pub residue_ids: Vec<i32>,
    pub coords: Vec<[f64; 3]>,
}

impl PointChain {
    pub fn new(chain_id: u32, residue_ids: Vec<i32>, coords: Vec<[f64; 3]>) -> Result<Self> {
        let c = PointChain { chain_id, residue_ids, coords };
        c.validate()?;
        Ok(c)
    }

    /// Chain with residues numbered 1..=n, for synthetic data.
    pub fn from_coords(chain_id: u32, coords: Vec<[f64; 3]>) -> Result<Self> {
        let ids = (1..=coords.len() as i32).collect();
        Self::new(chain_id, ids, coords)
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.coords.is_empty() {
            return Err(CoreError::Shape("chain has no coordinates".into()));
        }
        if self.coords.len() != self.residue_ids.len() {
            return Err(CoreError::Shape(format!(
                "chain {}: {} coords vs {} residue ids",
                self.chain_id,
                self.coords.len(),
                self.residue_ids.len()
            )));
        }
        if self.coords.iter().flatten().any(|v| !v.is_finite()) {
            return Err(CoreError::Numeric(format!(
                "chain {} contains non-finite coordinates",
                self.chain_id
            )));
        }
        if self.residue_ids.windows(2).any(|w| w[0] >= w[1]) {
            return Err(CoreError::InvalidArgument(format!(
                "chain {}: residue ids not strictly increasing",
                self.chain_id
            )));
        }
        Ok(())
    }
}

/// A multi-chain structure; `binder_index` marks which chain is the binder
/// when that designation exists.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Complex {
    pub chains: Vec<PointChain>,
    pub binder_index: Option<usize>,
}

impl Complex {
    pub fn new(chains: Vec<PointChain>) -> Result<Self> {
        let c = Complex { chains, binder_index: None };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.chains.is_empty() {
            return Err(CoreError::Shape("complex has no chains".into()));
        }
        for ch in &self.chains {
            ch.validate()?;
        }
        if let Some(b) = self.binder_index {
            if b >= self.chains.len() {
                return Err(CoreError::InvalidArgument(format!(
                    "binder index {b} out of range ({} chains)",
                    self.chains.len()
                )));
            }
        }
        Ok(())
    }

    pub fn total_residues(&self) -> usize {
        self.chains.iter().map(|c| c.len()).sum()
    }
}
