//! Domain splitting and dimer extraction: multi-domain chains become
//! separate chains, and chain pairs with enough mutual contacts become
//! training dimers.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::geom::{interface_residues, Complex, PointChain};

/// One structural domain of a source chain, possibly discontinuous.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DomainAnnotation {
    pub source_chain: u32,
    /// Inclusive residue-id ranges; must be non-overlapping with start <= end.
    pub ranges: Vec<(i32, i32)>,
}

impl DomainAnnotation {
    fn validate(&self) -> Result<()> {
        if self.ranges.is_empty() {
            return Err(CoreError::InvalidArgument("domain annotation with no ranges".into()));
        }
        for (s, e) in &self.ranges {
            if s > e {
                return Err(CoreError::InvalidArgument(format!("domain range {s}..{e} reversed")));
            }
        }
        let mut sorted = self.ranges.clone();
        sorted.sort();
        if sorted.windows(2).any(|w| w[0].1 >= w[1].0) {
            return Err(CoreError::InvalidArgument("domain ranges overlap".into()));
        }
        Ok(())
    }

    fn contains(&self, res_id: i32) -> bool {
        self.ranges.iter().any(|(s, e)| (*s..=*e).contains(&res_id))
    }
}

/// Re-chain a complex so each annotated domain becomes its own chain, in
/// annotation order with fresh sequential chain ids. Residues outside every
/// annotation are dropped.
pub fn split_domains(c: &Complex, annotations: &[DomainAnnotation]) -> Result<Complex> {
    let mut chains = Vec::with_capacity(annotations.len());
    for (di, ann) in annotations.iter().enumerate() {
        ann.validate()?;
        let source = c
            .chains
            .iter()
            .find(|ch| ch.chain_id == ann.source_chain)
            .ok_or_else(|| {
                CoreError::InvalidArgument(format!("annotation references missing chain {}", ann.source_chain))
            })?;
        let (min_id, max_id) = (source.residue_ids[0], *source.residue_ids.last().unwrap());
        for (s, e) in &ann.ranges {
            if *s < min_id || *e > max_id {
                return Err(CoreError::InvalidArgument(format!(
                    "domain range {s}..{e} outside chain {} span {min_id}..{max_id}",
                    ann.source_chain
                )));
            }
        }
        let mut residue_ids = Vec::new();
        let mut coords = Vec::new();
        for (rid, xyz) in source.residue_ids.iter().zip(&source.coords) {
            if ann.contains(*rid) {
                residue_ids.push(*rid);
                coords.push(*xyz);
            }
        }
        if residue_ids.is_empty() {
            return Err(CoreError::InvalidArgument(format!(
                "domain {di} selects no residues of chain {}",
                ann.source_chain
            )));
        }
        chains.push(PointChain::new(di as u32, residue_ids, coords)?);
    }
    Complex::new(chains)
}

/// Return chain index pairs (i, j), i < j, where each chain has at least
/// `min_contacts` residues within `contact_dist` of the other.
pub fn extract_dimers(c: &Complex, contact_dist: f64, min_contacts: usize) -> Result<Vec<(usize, usize)>> {
    if contact_dist <= 0.0 || !contact_dist.is_finite() {
        return Err(CoreError::InvalidArgument(format!("contact_dist must be positive, got {contact_dist}")));
    }
    if min_contacts == 0 {
        return Err(CoreError::InvalidArgument("min_contacts must be at least 1".into()));
    }
    let n = c.chains.len();
    let mut pairs = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let (ri, rj) = interface_residues(&c.chains[i], &c.chains[j], contact_dist)?;
            if ri.len() >= min_contacts && rj.len() >= min_contacts {
                pairs.push((i, j));
            }
        }
    }
    Ok(pairs)
}
