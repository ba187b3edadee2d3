//! Test functionals, the signed measures `Q_g` and S-transforms.
//!
//! `S(phi)(g) = E^{Q_g} phi` is estimated by Monte Carlo with Doleans-Dade
//! weights, or computed by quadrature for `M` and for integrals against it.

mod formulas;
mod functional;
mod weight;

pub use formulas::{ddt_s_m, s_lambda_rhs, s_m, s_m_diamond_rhs, s_n_rhs};
pub use functional::{battery, battery_element, BoundFunctional, Bump, Term, TestFunctional, TimeProfile};
pub use weight::{doleans_weight, mc_mean, s_transform_mc, McValue, SEstimate, WeightDiagnostics, WeightEvaluator};
