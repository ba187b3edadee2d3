//! Integrals against the Levy measure.

use super::{adaptive, graded_piece, Estimate, QuadValue, QuadratureSpec};
use crate::error::{Error, Result};
use crate::levy::{JumpLaw, JumpSpec};

/// `int h(x) nu(dx)` over the jump measure.
///
/// Atoms are summed exactly. For infinite-activity measures `h` must vanish
/// like `x^2` at the origin; faster growth is reported as
/// [`Error::GrowthAtOrigin`].
pub fn nu_integrate<V: QuadValue>(
    jumps: &JumpSpec,
    h: &dyn Fn(f64) -> V,
    spec: &QuadratureSpec,
) -> Result<Estimate<V>> {
    nu_integrate_with(jumps, h, spec)
}

/// Same as [`nu_integrate`]; kept separate so callers can pass closures
/// capturing large state by reference without boxing.
pub fn nu_integrate_with<V: QuadValue, F: Fn(f64) -> V>(
    jumps: &JumpSpec,
    h: F,
    spec: &QuadratureSpec,
) -> Result<Estimate<V>> {
    match jumps {
        JumpSpec::None => Ok(Estimate::exact(V::zero())),
        JumpSpec::CompoundPoisson { rate, law } => match law {
            JumpLaw::Atoms(atoms) => {
                let v = atoms.iter().fold(V::zero(), |acc, &(x, p)| acc + h(x) * (rate * p));
                if !v.is_finite_value() {
                    return Err(Error::NonFinite { at: f64::NAN });
                }
                Ok(Estimate::exact(v))
            }
            JumpLaw::Uniform { low, high } => {
                let density = rate / (high - low);
                let run = |a: f64, b: f64| {
                    adaptive(&h, a, b, 0.5 * spec.abs_tol / density, spec.rel_tol, spec.max_subdivisions)
                };
                let est = if *low < 0.0 && *high > 0.0 {
                    run(*low, 0.0)? + run(0.0, *high)?
                } else {
                    run(*low, *high)?
                };
                Ok(est.scale(density))
            }
        },
        JumpSpec::TemperedStable { alpha, lambda, c, min_jump } => {
            let (alpha, lambda, c, eps) = (*alpha, *lambda, *c, *min_jump);
            if eps == 0.0 {
                check_origin(&h)?;
            }
            let density = move |x: f64| c * (-lambda * x).exp() * x.powf(-1.0 - alpha);
            let sym = |x: f64| (h(x) + h(-x)) * density(x);
            let x0 = 1.0 / lambda;
            let sub = QuadratureSpec { abs_tol: spec.abs_tol / 3.0, ..spec.clone() };
            let mut total = Estimate::exact(V::zero());
            if eps < x0 {
                if eps == 0.0 {
                    total = total + graded_piece(&sym, 0.0, x0, alpha - 1.0, 0.0, &sub)?;
                } else {
                    let g = |y: f64| {
                        let x = eps * y.exp();
                        sym(x) * x
                    };
                    total = total
                        + adaptive(&g, 0.0, (x0 / eps).ln(), sub.abs_tol, sub.rel_tol, sub.max_subdivisions)?;
                }
            }
            let start = x0.max(eps);
            let g = |y: f64| {
                let x = start + y / (1.0 - y);
                sym(x) * (1.0 / ((1.0 - y) * (1.0 - y)))
            };
            total = total + adaptive(&g, 0.0, 1.0, sub.abs_tol, sub.rel_tol, sub.max_subdivisions)?;
            Ok(total)
        }
    }
}

fn check_origin<V: QuadValue, F: Fn(f64) -> V>(h: &F) -> Result<()> {
    let ratio = |x: f64| (h(x).magnitude() + h(-x).magnitude()) / (x * x);
    let outer = ratio(1e-2).max(ratio(1e-3)).max(1e-300);
    let inner = ratio(1e-6);
    if !inner.is_finite() || inner > 100.0 * outer {
        return Err(Error::GrowthAtOrigin);
    }
    Ok(())
}
