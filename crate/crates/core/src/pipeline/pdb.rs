//! Minimal PDB-format reader and writer. Only alpha-carbon ATOM records are
//! consumed; everything else (HETATM, TER, REMARK, anisotropy, occupancy) is
//! passed over. Column layout follows the fixed-width PDB convention:
//!
//! | columns | content        |
//! |---------|----------------|
//! | 1-6     | record name    |
//! | 13-16   | atom name      |
//! | 17      | altLoc         |
//! | 22      | chain id       |
//! | 23-26   | residue seq    |
//! | 31-54   | x, y, z %8.3f  |

use crate::error::{CoreError, Result};
use crate::geom::{Complex, PointChain};

fn field(line: &str, lo: usize, hi: usize) -> &str {
    // 1-based inclusive columns, tolerant of short lines.
    let bytes = line.as_bytes();
    let lo = (lo - 1).min(bytes.len());
    let hi = hi.min(bytes.len());
    &line[lo..hi]
}

/// Parse PDB text into a complex of CA-only chains, one chain per chain
/// identifier in order of first appearance.
pub fn parse_structure(text: &str) -> Result<Complex> {
    struct Partial {
        tag: char,
        residue_ids: Vec<i32>,
        coords: Vec<[f64; 3]>,
    }
    let mut chains: Vec<Partial> = Vec::new();

    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        if !line.starts_with("ATOM") {
            continue;
        }
        if field(line, 13, 16).trim() != "CA" {
            continue;
        }
        let alt = field(line, 17, 17);
        if !matches!(alt, "" | " " | "A") {
            continue;
        }
        if line.len() < 54 {
            return Err(CoreError::Parse {
                line: lineno,
                msg: format!("ATOM record too short ({} columns, need 54)", line.len()),
            });
        }
        let tag = field(line, 22, 22).chars().next().unwrap_or(' ');
        let res_id: i32 = field(line, 23, 26).trim().parse().map_err(|_| CoreError::Parse {
            line: lineno,
            msg: format!("bad residue number {:?}", field(line, 23, 26).trim()),
        })?;
        let mut xyz = [0.0f64; 3];
        for (k, (lo, hi)) in [(31, 38), (39, 46), (47, 54)].iter().enumerate() {
            xyz[k] = field(line, *lo, *hi).trim().parse().map_err(|_| CoreError::Parse {
                line: lineno,
                msg: format!("bad coordinate {:?}", field(line, *lo, *hi).trim()),
            })?;
        }

        match chains.iter_mut().find(|c| c.tag == tag) {
            Some(c) => {
                if c.residue_ids.last().is_some_and(|last| *last >= res_id) {
                    return Err(CoreError::Parse {
                        line: lineno,
                        msg: format!("residue {res_id} of chain {tag:?} out of order or duplicated"),
                    });
                }
                c.residue_ids.push(res_id);
                c.coords.push(xyz);
            }
            None => chains.push(Partial { tag, residue_ids: vec![res_id], coords: vec![xyz] }),
        }
    }

    if chains.is_empty() {
        return Err(CoreError::EmptyStructure);
    }
    let chains = chains
        .into_iter()
        .enumerate()
        .map(|(i, p)| PointChain::new(i as u32, p.residue_ids, p.coords))
        .collect::<Result<Vec<_>>>()?;
    Ok(Complex { chains, binder_index: None })
}

fn chain_letter(id: u32) -> char {
    (b'A' + (id % 26) as u8) as char
}

/// Render a complex as CA-only ATOM records (one TER per chain, END last).
/// Coordinates are written at the format's %8.3f precision, so a round trip
/// preserves them to 1e-3.
pub fn write_structure(c: &Complex) -> String {
    let mut out = String::new();
    let mut serial = 0usize;
    for chain in &c.chains {
        for (res_id, xyz) in chain.residue_ids.iter().zip(&chain.coords) {
            serial += 1;
            out.push_str(&format!(
                "ATOM  {:>5}  CA  ALA {}{:>4}    {:8.3}{:8.3}{:8.3}  1.00  0.00           C\n",
                serial % 100_000,
                chain_letter(chain.chain_id),
                res_id,
                xyz[0],
                xyz[1],
                xyz[2]
            ));
        }
        out.push_str("TER\n");
    }
    out.push_str("END\n");
    out
}
