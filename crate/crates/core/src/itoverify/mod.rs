//! The generalised Ito formula for `G(M(T))`, term by term, checked
//! pathwise (increment kernel), in expectation and under `Q_g`.
//!
//! `G(M(T)) - G(0)` is compared with
//! `term_sigma + term_jumpsum + term_nu + term_L + term_lambda`, where the
//! last term is an anticipating integral that only exists through its
//! S-transform.

mod engine;
mod lattice;
mod report;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::levy::GridSpec;
use crate::quadrature::QuadratureSpec;
use crate::stransform::WeightDiagnostics;

pub use engine::{
    classical_terms, eval_terms_expectation, eval_terms_pathwise, eval_terms_stransform, pathwise_study,
    ClassicalTerms, PathwiseLevel, PathwiseSettings, PathwiseStudy,
};
pub use report::{verification_report, Verdict, VerificationReport};

/// Which level of the identity a term set belongs to.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ItoMode {
    Pathwise,
    Expectation,
    Stransform { g: String },
}

impl ItoMode {
    pub fn name(&self) -> &'static str {
        match self {
            ItoMode::Pathwise => "pathwise",
            ItoMode::Expectation => "expectation",
            ItoMode::Stransform { .. } => "stransform",
        }
    }
}

/// A term value with its Monte Carlo standard error and quadrature error
/// bound (both zero for exact pathwise sums).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TermEstimate {
    pub value: f64,
    pub std_error: f64,
    pub quad_error: f64,
}

impl TermEstimate {
    pub fn exact(value: f64) -> Self {
        Self { value, std_error: 0.0, quad_error: 0.0 }
    }
}

/// An independent evaluation of one term (or of the left side).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossCheck {
    pub name: String,
    /// Field of [`ItoTermSet`] whose estimate is checked.
    pub term: String,
    pub estimate: f64,
    pub reference: f64,
    pub budget: f64,
    pub passed: bool,
}

impl CrossCheck {
    pub fn new(name: &str, term: &str, estimate: f64, reference: f64, budget: f64) -> Self {
        let mut c = Self { name: name.into(), term: term.into(), estimate, reference, budget, passed: false };
        c.reevaluate();
        c
    }

    fn reevaluate(&mut self) {
        self.passed = (self.estimate - self.reference).abs() <= self.budget;
    }

    pub fn ratio(&self) -> f64 {
        (self.estimate - self.reference).abs() / self.budget
    }
}

/// All terms of the formula for one scenario cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ItoTermSet {
    pub label: String,
    pub mode: ItoMode,
    pub n_paths: usize,
    /// `G(M(T)) - G(0)`.
    pub lhs: TermEstimate,
    pub term_sigma: TermEstimate,
    pub term_jumpsum: TermEstimate,
    pub term_nu: TermEstimate,
    pub term_l: TermEstimate,
    /// Absent in pathwise mode, where `d_t f = 0`.
    pub term_lambda: Option<TermEstimate>,
    /// `lhs - sum of terms`.
    pub residual: TermEstimate,
    /// `3 SE + quadrature errors`; absent for a single pathwise evaluation.
    pub budget: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<WeightDiagnostics>,
    pub cross_checks: Vec<CrossCheck>,
    pub notes: Vec<String>,
}

pub(crate) const TERM_NAMES: [&str; 6] = ["lhs", "term_sigma", "term_jumpsum", "term_nu", "term_l", "term_lambda"];

impl ItoTermSet {
    /// `|residual| / budget`.
    pub fn ratio(&self) -> Option<f64> {
        self.budget.map(|b| self.residual.value.abs() / b)
    }

    pub fn residual_passed(&self) -> Option<bool> {
        self.budget.map(|b| self.residual.value.abs() <= b)
    }

    pub fn passed(&self) -> Option<bool> {
        self.residual_passed().map(|r| r && self.cross_checks.iter().all(|c| c.passed))
    }

    /// Names of the failing items: `residual` and the terms whose
    /// independent evaluations disagree.
    pub fn failing_terms(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.residual_passed() == Some(false) {
            out.push("residual".to_string());
        }
        for c in self.cross_checks.iter().filter(|c| !c.passed) {
            if !out.contains(&c.term) {
                out.push(c.term.clone());
            }
        }
        out
    }

    fn term_mut(&mut self, term: &str) -> Option<&mut TermEstimate> {
        match term {
            "lhs" => Some(&mut self.lhs),
            "term_sigma" => Some(&mut self.term_sigma),
            "term_jumpsum" => Some(&mut self.term_jumpsum),
            "term_nu" => Some(&mut self.term_nu),
            "term_l" => Some(&mut self.term_l),
            "term_lambda" => self.term_lambda.as_mut(),
            _ => None,
        }
    }

    /// Shifts one term by `delta` as if it had been computed wrongly, and
    /// propagates the shift to the residual and to the checks of that term.
    pub fn inject_fault(&mut self, term: &str, delta: f64) -> Result<()> {
        let t = self
            .term_mut(term)
            .ok_or_else(|| Error::InvalidParameter(format!("no term `{term}` (expected one of {TERM_NAMES:?})")))?;
        t.value += delta;
        self.residual.value += if term == "lhs" { delta } else { -delta };
        for c in self.cross_checks.iter_mut().filter(|c| c.term == term) {
            c.estimate += delta;
            c.reevaluate();
        }
        Ok(())
    }

    /// `(term, estimate)` pairs in formula order.
    pub fn terms(&self) -> Vec<(&'static str, TermEstimate)> {
        let mut v = vec![
            ("lhs", self.lhs),
            ("term_sigma", self.term_sigma),
            ("term_jumpsum", self.term_jumpsum),
            ("term_nu", self.term_nu),
            ("term_l", self.term_l),
        ];
        if let Some(l) = self.term_lambda {
            v.push(("term_lambda", l));
        }
        v.push(("residual", self.residual));
        v
    }
}

/// Monte Carlo and lattice settings shared by the expectation and
/// S-transform modes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ItoSettings {
    pub n_paths: usize,
    pub seed: u64,
    /// Simulation grid; `past` is ignored for kernels supported in `s >= 0`.
    pub grid: GridSpec,
    /// Spacing of the time lattice in grid cells (a power of two).
    pub stride: usize,
    /// Gauss points per panel of the `s`-rules before refinement.
    pub s_nodes: usize,
    /// Quadrature points for `nu` with a density.
    pub x_nodes: usize,
    /// Paths used to decide the `s`-rule resolution.
    pub pilot_paths: usize,
    pub max_doublings: usize,
    /// Time nodes of the deterministic `term_sigma` oracle.
    pub oracle_nodes: usize,
    /// Largest accepted empirical variance of the Doleans weights.
    pub weight_variance_cap: f64,
    pub quad: QuadratureSpec,
}

impl Default for ItoSettings {
    fn default() -> Self {
        Self {
            n_paths: 2000,
            seed: 1,
            grid: GridSpec { past: 1e4, n_cells: 512, ..GridSpec::default() },
            stride: 8,
            s_nodes: 16,
            x_nodes: 16,
            pilot_paths: 256,
            max_doublings: 2,
            oracle_nodes: 16,
            weight_variance_cap: 10.0,
            quad: QuadratureSpec::with_tolerances(1e-10, 1e-8),
        }
    }
}
