//! Double-exponential quadrature for integrands with unknown endpoint behaviour.

use super::{Estimate, QuadValue};
use crate::error::{Error, Result};

const T_MAX: f64 = 3.5;

pub fn tanh_sinh<V: QuadValue>(
    f: &dyn Fn(f64) -> V,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
    max_level: usize,
) -> Result<Estimate<V>> {
    if a == b {
        return Ok(Estimate::new(V::zero(), 0.0));
    }
    let c = 0.5 * (a + b);
    let d = 0.5 * (b - a);
    let half_pi = std::f64::consts::FRAC_PI_2;
    let evaluations = std::cell::Cell::new(0usize);
    let max_level = max_level.max(3);

    // contribution of the mirrored nodes +-t
    let point_sum = |t: f64| -> Result<V> {
        let u = half_pi * t.sinh();
        let w = half_pi * t.cosh() / (u.cosh() * u.cosh());
        if t == 0.0 {
            evaluations.set(evaluations.get() + 1);
            let v = f(c);
            return finite(v, c).map(|v| v * w);
        }
        let gap = d * (-u).exp() / u.cosh();
        let mut acc = V::zero();
        for s in [b - gap, a + gap] {
            if s <= a.min(b) || s >= a.max(b) || !w.is_normal() {
                continue;
            }
            evaluations.set(evaluations.get() + 1);
            acc = acc + finite(f(s), s)? * w;
        }
        Ok(acc)
    };

    let mut sum = point_sum(0.0)?;
    let mut k = 1;
    while (k as f64) <= T_MAX {
        sum = sum + point_sum(k as f64)?;
        k += 1;
    }
    let mut h = 1.0;
    let mut prev = sum * (h * d);
    for level in 1..=max_level {
        h *= 0.5;
        let mut t = h;
        while t <= T_MAX {
            sum = sum + point_sum(t)?;
            t += 2.0 * h;
        }
        let cur = sum * (h * d);
        let err = (cur - prev).magnitude();
        if level >= 3 && err <= abs_tol.max(rel_tol * cur.magnitude()) {
            return Ok(Estimate { value: cur, error: err, evaluations: evaluations.get() });
        }
        prev = cur;
        if level == max_level {
            return Err(Error::NonConvergence {
                value: cur.magnitude(),
                error: err,
                subdivisions: level,
            });
        }
    }
    unreachable!("loop returns at max_level")
}

fn finite<V: QuadValue>(v: V, at: f64) -> Result<V> {
    if v.is_finite_value() {
        Ok(v)
    } else {
        Err(Error::NonFinite { at })
    }
}
