//! Subprocess-backed reward term.
//!
//! The scorer program receives one argument, the path of a coordinate file
//! holding the target (chain A) and binder (chain B) with the binder labels in
//! a leading REMARK line, and must print a single scalar to stdout. Folding
//! models or any other out-of-process score slot in here without code changes.

use std::io::Write;
use std::process::Command;

use crate::error::{CoreError, Result};
use crate::flow::BinderState;
use crate::geom::{Complex, PointChain};
use crate::model::TargetContext;
use crate::pipeline::write_structure;

#[derive(Clone, Debug)]
pub struct ExternalScorer {
    pub program: String,
    pub args: Vec<String>,
}

impl ExternalScorer {
    pub fn new(program: impl Into<String>) -> Self {
        ExternalScorer { program: program.into(), args: Vec::new() }
    }

    pub fn arg(mut self, a: impl Into<String>) -> Self {
        self.args.push(a.into());
        self
    }

    /// The exact file content handed to the scorer.
    pub fn render_input(state: &BinderState, labels: &[u8], ctx: &TargetContext) -> Result<String> {
        if labels.len() != state.n() {
            return Err(CoreError::Shape(format!(
                "{} labels for {} binder residues",
                labels.len(),
                state.n()
            )));
        }
        let complex = Complex::new(vec![
            PointChain::from_coords(0, ctx.points.clone())?,
            PointChain::from_coords(1, state.coords.clone())?,
        ])?;
        let label_str: Vec<String> = labels.iter().map(|l| l.to_string()).collect();
        Ok(format!("REMARK LABELS {}\n{}", label_str.join(" "), write_structure(&complex)))
    }

    pub fn score(&self, state: &BinderState, labels: &[u8], ctx: &TargetContext) -> Result<f64> {
        let text = Self::render_input(state, labels, ctx)?;
        let mut file = tempfile::Builder::new()
            .prefix("placer-score-")
            .suffix(".pdb")
            .tempfile()?;
        file.write_all(text.as_bytes())?;
        file.flush()?;

        let output = Command::new(&self.program)
            .args(&self.args)
            .arg(file.path())
            .output()
            .map_err(|e| CoreError::Scorer(format!("failed to launch {}: {e}", self.program)))?;
        if !output.status.success() {
            return Err(CoreError::Scorer(format!(
                "{} exited with {}: {}",
                self.program,
                output.status,
                String::from_utf8_lossy(&output.stderr).trim()
            )));
        }
        let stdout = String::from_utf8_lossy(&output.stdout);
        let value: f64 = stdout
            .trim()
            .parse()
            .map_err(|_| CoreError::Scorer(format!("{} printed {:?}, not a scalar", self.program, stdout.trim())))?;
        if !value.is_finite() {
            return Err(CoreError::Scorer(format!("{} printed non-finite value {value}", self.program)));
        }
        Ok(value)
    }
}
