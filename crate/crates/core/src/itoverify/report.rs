//! Aggregated verdicts with JSON, text and CSV renderings.

use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{ItoMode, ItoTermSet, PathwiseStudy};
use crate::error::Result;
use crate::levy::fmt;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub verdict: Verdict,
    /// Largest `|residual| / budget` over all Monte Carlo cells.
    pub max_ratio: f64,
    /// `cell: item, item` for every failing cell.
    pub failures: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub pathwise: Vec<PathwiseStudy>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub expectation: Vec<ItoTermSet>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub stransform: Vec<ItoTermSet>,
}

fn cell_name(c: &ItoTermSet) -> String {
    match &c.mode {
        ItoMode::Stransform { g } => format!("{} [stransform g={g}]", c.label),
        m => format!("{} [{}]", c.label, m.name()),
    }
}

/// Collects studies and term sets (pathwise sets carry no verdict and are
/// dropped) into one report.
pub fn verification_report(pathwise: Vec<PathwiseStudy>, cells: Vec<ItoTermSet>) -> VerificationReport {
    let mut failures = Vec::new();
    for p in &pathwise {
        for f in &p.failures {
            failures.push(format!("{} [pathwise]: {f}", p.label));
        }
    }
    let mut max_ratio: f64 = 0.0;
    let (mut expectation, mut stransform) = (Vec::new(), Vec::new());
    for c in cells {
        if let Some(r) = c.ratio() {
            max_ratio = max_ratio.max(r);
        }
        let bad = c.failing_terms();
        if !bad.is_empty() {
            failures.push(format!("{}: {}", cell_name(&c), bad.join(", ")));
        }
        match c.mode {
            ItoMode::Expectation => expectation.push(c),
            ItoMode::Stransform { .. } => stransform.push(c),
            ItoMode::Pathwise => {}
        }
    }
    VerificationReport {
        verdict: if failures.is_empty() { Verdict::Pass } else { Verdict::Fail },
        max_ratio,
        failures,
        pathwise,
        expectation,
        stransform,
    }
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }

    pub fn cells(&self) -> impl Iterator<Item = &ItoTermSet> {
        self.expectation.iter().chain(&self.stransform)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for p in &self.pathwise {
            let _ = writeln!(s, "pathwise {} ({} paths)", p.label, p.n_paths);
            let _ = writeln!(s, "  {:>8} {:>10} {:>12} {:>12} {:>9}", "cells", "dt", "rms_resid", "rms_lhs", "ratio");
            for l in &p.levels {
                let _ = writeln!(
                    s,
                    "  {:>8} {:>10.2e} {:>12.4e} {:>12.4e} {:>9.4}",
                    l.n_cells, l.dt, l.rms_residual, l.rms_lhs, l.ratio
                );
            }
            let red: Vec<String> = p.reductions.iter().map(|r| format!("{r:.2}")).collect();
            let _ = writeln!(s, "  reductions {}  {}", red.join(" "), if p.passed { "PASS" } else { "FAIL" });
        }
        for c in self.cells() {
            let _ = writeln!(s, "{} ({} paths)", cell_name(c), c.n_paths);
            let _ = writeln!(s, "  {:<14} {:>13} {:>11} {:>11}", "term", "value", "std_error", "quad_error");
            for (name, t) in c.terms() {
                let _ = writeln!(s, "  {:<14} {:>13.6e} {:>11.3e} {:>11.3e}", name, t.value, t.std_error, t.quad_error);
            }
            if let Some(b) = c.budget {
                let verdict = if c.passed() == Some(true) { "PASS" } else { "FAIL" };
                let _ = writeln!(s, "  budget {b:.3e}  ratio {:.3}  {verdict}", c.ratio().unwrap_or(f64::NAN));
            }
            for x in &c.cross_checks {
                let _ = writeln!(
                    s,
                    "  check {:<24} {:<13} {:>13.6e} vs {:>13.6e} budget {:.3e} {}",
                    x.name,
                    x.term,
                    x.estimate,
                    x.reference,
                    x.budget,
                    if x.passed { "ok" } else { "FAIL" }
                );
            }
            for n in &c.notes {
                let _ = writeln!(s, "  note: {n}");
            }
        }
        let _ = writeln!(s, "verdict {:?}  max ratio {:.3}", self.verdict, self.max_ratio);
        for f in &self.failures {
            let _ = writeln!(s, "  failing: {f}");
        }
        s
    }

    /// One row per cell and term.
    pub fn write_terms_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["cell", "mode", "g", "term", "value", "std_error", "quad_error"])?;
        for c in self.cells() {
            let g = match &c.mode {
                ItoMode::Stransform { g } => g.as_str(),
                _ => "",
            };
            for (name, t) in c.terms() {
                w.write_record([&c.label, c.mode.name(), g, name, &fmt(t.value), &fmt(t.std_error), &fmt(t.quad_error)])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// One row per cell with the residual, its budget and the verdict.
    pub fn write_residuals_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["cell", "mode", "g", "residual", "std_error", "quad_error", "budget", "ratio", "passed", "failing"])?;
        for c in self.cells() {
            let g = match &c.mode {
                ItoMode::Stransform { g } => g.as_str(),
                _ => "",
            };
            w.write_record([
                c.label.as_str(),
                c.mode.name(),
                g,
                &fmt(c.residual.value),
                &fmt(c.residual.std_error),
                &fmt(c.residual.quad_error),
                &fmt(c.budget.unwrap_or(f64::NAN)),
                &fmt(c.ratio().unwrap_or(f64::NAN)),
                if c.passed() == Some(true) { "true" } else { "false" },
                &c.failing_terms().join(";"),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}
