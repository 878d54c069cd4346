//! Scaling curves: unique successes against spent compute, one polyline per
//! algorithm. Input is any pile of run manifests; runs of one algorithm at
//! the same budget are averaged into a single point.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

use super::artifacts::{atomic_write, RunManifest};

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct CurvePoint {
    pub compute: u64,
    /// Mean unique-success count over the runs at this budget.
    pub unique: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ScalingCurve {
    pub algorithm: String,
    /// Sorted by compute, strictly increasing.
    pub points: Vec<CurvePoint>,
}

/// Groups manifests by algorithm and orders each group by spent compute.
/// Refuses mixed compute units; averaging seconds into forward calls would be
/// nonsense.
pub fn curves_from_manifests(manifests: &[RunManifest]) -> Result<Vec<ScalingCurve>> {
    if manifests.is_empty() {
        return Err(CoreError::Validation("curves need at least one manifest".into()));
    }
    let unit = &manifests[0].compute_unit;
    for m in manifests {
        if &m.compute_unit != unit {
            return Err(CoreError::Validation(format!(
                "inconsistent compute units: {:?} vs {:?}",
                unit, m.compute_unit
            )));
        }
    }

    let mut grouped: BTreeMap<&str, BTreeMap<u64, Vec<f64>>> = BTreeMap::new();
    for m in manifests {
        grouped
            .entry(m.algorithm.as_str())
            .or_default()
            .entry(m.total_evals)
            .or_default()
            .push(m.unique_successes as f64);
    }

    Ok(grouped
        .into_iter()
        .map(|(algorithm, by_compute)| ScalingCurve {
            algorithm: algorithm.to_string(),
            points: by_compute
                .into_iter()
                .map(|(compute, uniques)| CurvePoint {
                    compute,
                    unique: uniques.iter().sum::<f64>() / uniques.len() as f64,
                })
                .collect(),
        })
        .collect())
}

pub fn write_curve_csv(curves: &[ScalingCurve]) -> String {
    let mut out = String::from("algorithm,compute,unique\n");
    for curve in curves {
        for p in &curve.points {
            out.push_str(&format!("{},{},{}\n", curve.algorithm, p.compute, p.unique));
        }
    }
    out
}

pub fn parse_curve_csv(text: &str) -> Result<Vec<ScalingCurve>> {
    let mut lines = text.lines();
    match lines.next() {
        Some("algorithm,compute,unique") => {}
        other => {
            return Err(CoreError::Parse {
                line: 1,
                msg: format!("expected curve header, got {other:?}"),
            })
        }
    }
    let mut curves: Vec<ScalingCurve> = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let parse = |msg: String| CoreError::Parse { line: i + 2, msg };
        let mut fields = line.splitn(3, ',');
        let (algo, compute, unique) = match (fields.next(), fields.next(), fields.next()) {
            (Some(a), Some(c), Some(u)) => (a, c, u),
            _ => return Err(parse(format!("expected 3 fields, got {line:?}"))),
        };
        let compute: u64 =
            compute.parse().map_err(|e| parse(format!("bad compute {compute:?}: {e}")))?;
        let unique: f64 =
            unique.parse().map_err(|e| parse(format!("bad unique {unique:?}: {e}")))?;
        match curves.last_mut() {
            Some(c) if c.algorithm == algo => c.points.push(CurvePoint { compute, unique }),
            _ => curves.push(ScalingCurve {
                algorithm: algo.to_string(),
                points: vec![CurvePoint { compute, unique }],
            }),
        }
    }
    Ok(curves)
}

const SVG_W: f64 = 640.0;
const SVG_H: f64 = 400.0;
const MARGIN: f64 = 55.0;
const PALETTE: [&str; 5] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#8c564b"];

/// Fixed-size line chart, one color per algorithm, markers on every point.
/// Everything is formatted with explicit precision so the file is identical
/// across runs and platforms.
pub fn render_curve_svg(curves: &[ScalingCurve]) -> Result<String> {
    if curves.is_empty() || curves.iter().all(|c| c.points.is_empty()) {
        return Err(CoreError::Validation("nothing to plot".into()));
    }
    let xs: Vec<f64> = curves.iter().flat_map(|c| c.points.iter().map(|p| p.compute as f64)).collect();
    let ys: Vec<f64> = curves.iter().flat_map(|c| c.points.iter().map(|p| p.unique)).collect();
    let (x_lo, x_hi) = span(&xs);
    let (y_lo, y_hi) = span(&ys);
    let sx = |v: f64| MARGIN + (v - x_lo) / (x_hi - x_lo) * (SVG_W - 2.0 * MARGIN);
    let sy = |v: f64| SVG_H - MARGIN - (v - y_lo) / (y_hi - y_lo) * (SVG_H - 2.0 * MARGIN);

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SVG_W}\" height=\"{SVG_H}\" \
         viewBox=\"0 0 {SVG_W} {SVG_H}\" font-family=\"monospace\" font-size=\"12\">\n"
    ));
    svg.push_str(&format!(
        "<rect width=\"{SVG_W}\" height=\"{SVG_H}\" fill=\"white\"/>\n"
    ));
    // Axes with end-tick labels.
    svg.push_str(&format!(
        "<line x1=\"{m}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>\n\
         <line x1=\"{m}\" y1=\"{t}\" x2=\"{m}\" y2=\"{b}\" stroke=\"black\"/>\n",
        m = MARGIN,
        b = SVG_H - MARGIN,
        r = SVG_W - MARGIN,
        t = MARGIN,
    ));
    svg.push_str(&format!(
        "<text x=\"{m}\" y=\"{y}\" text-anchor=\"middle\">{lo}</text>\n\
         <text x=\"{r}\" y=\"{y}\" text-anchor=\"middle\">{hi}</text>\n",
        m = MARGIN,
        r = SVG_W - MARGIN,
        y = SVG_H - MARGIN + 18.0,
        lo = x_lo as u64,
        hi = x_hi as u64,
    ));
    svg.push_str(&format!(
        "<text x=\"{x}\" y=\"{b}\" text-anchor=\"end\">{lo:.1}</text>\n\
         <text x=\"{x}\" y=\"{t}\" text-anchor=\"end\">{hi:.1}</text>\n",
        x = MARGIN - 6.0,
        b = SVG_H - MARGIN + 4.0,
        t = MARGIN + 4.0,
        lo = y_lo,
        hi = y_hi,
    ));
    svg.push_str(&format!(
        "<text x=\"{x}\" y=\"{y}\" text-anchor=\"middle\">compute (forward calls)</text>\n",
        x = SVG_W / 2.0,
        y = SVG_H - 12.0,
    ));
    svg.push_str(&format!(
        "<text x=\"14\" y=\"{y}\" transform=\"rotate(-90 14 {y})\" text-anchor=\"middle\">unique successes</text>\n",
        y = SVG_H / 2.0,
    ));

    for (i, curve) in curves.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        if curve.points.len() > 1 {
            let pts: Vec<String> = curve
                .points
                .iter()
                .map(|p| format!("{:.2},{:.2}", sx(p.compute as f64), sy(p.unique)))
                .collect();
            svg.push_str(&format!(
                "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"2\" points=\"{}\"/>\n",
                pts.join(" ")
            ));
        }
        for p in &curve.points {
            svg.push_str(&format!(
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3.5\" fill=\"{color}\"/>\n",
                sx(p.compute as f64),
                sy(p.unique)
            ));
        }
        svg.push_str(&format!(
            "<text x=\"{x}\" y=\"{y}\" fill=\"{color}\">{}</text>\n",
            curve.algorithm,
            x = SVG_W - MARGIN + 8.0,
            y = MARGIN + 16.0 * i as f64,
        ));
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Plot range with a degenerate-span guard so a single point still maps to
/// the canvas center instead of dividing by zero.
fn span(vals: &[f64]) -> (f64, f64) {
    let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if hi > lo {
        (lo, hi)
    } else {
        (lo - 0.5, hi + 0.5)
    }
}

pub fn emit_curves(
    manifests: &[RunManifest],
    csv_path: &Path,
    svg_path: &Path,
) -> Result<Vec<ScalingCurve>> {
    let curves = curves_from_manifests(manifests)?;
    atomic_write(csv_path, write_curve_csv(&curves).as_bytes())?;
    atomic_write(svg_path, render_curve_svg(&curves)?.as_bytes())?;
    Ok(curves)
}
