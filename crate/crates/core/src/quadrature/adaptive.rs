//! Globally adaptive Gauss-Kronrod integration with a priority queue.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::gauss::{WG10, WGK21, XGK21};
use super::{Estimate, QuadValue};
use crate::error::{Error, Result};

struct Segment<V> {
    a: f64,
    b: f64,
    value: V,
    error: f64,
}

impl<V> PartialEq for Segment<V> {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl<V> Eq for Segment<V> {}
impl<V> PartialOrd for Segment<V> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<V> Ord for Segment<V> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// One 21-point Kronrod evaluation with the QUADPACK error heuristic.
pub(crate) fn gk21<V: QuadValue>(f: &dyn Fn(f64) -> V, a: f64, b: f64) -> Result<(V, f64)> {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    check(fc, c)?;
    let mut resk = fc * WGK21[10];
    let mut resg = V::zero();
    let mut resabs = fc.magnitude() * WGK21[10];
    let mut pairs = [(V::zero(), V::zero()); 10];
    for j in 0..10 {
        let dx = h * XGK21[j];
        let f1 = f(c - dx);
        let f2 = f(c + dx);
        check(f1, c - dx)?;
        check(f2, c + dx)?;
        pairs[j] = (f1, f2);
        resk = resk + (f1 + f2) * WGK21[j];
        resabs += (f1.magnitude() + f2.magnitude()) * WGK21[j];
        if j % 2 == 1 {
            resg = resg + (f1 + f2) * WG10[j / 2];
        }
    }
    let mean = resk * 0.5;
    let mut resasc = WGK21[10] * (fc - mean).magnitude();
    for j in 0..10 {
        resasc += WGK21[j] * ((pairs[j].0 - mean).magnitude() + (pairs[j].1 - mean).magnitude());
    }
    let ah = h.abs();
    let resabs = resabs * ah;
    let resasc = resasc * ah;
    let mut err = ((resk - resg) * h).magnitude();
    if resasc != 0.0 && err != 0.0 {
        err = resasc * (200.0 * err / resasc).powf(1.5).min(1.0);
    }
    if resabs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * resabs);
    }
    Ok((resk * h, err))
}

fn check<V: QuadValue>(v: V, at: f64) -> Result<()> {
    if v.is_finite_value() {
        Ok(())
    } else {
        Err(Error::NonFinite { at })
    }
}

/// Adaptive integration of `f` over the finite interval `[a, b]`.
pub fn adaptive<V: QuadValue>(
    f: &dyn Fn(f64) -> V,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
    max_subdivisions: usize,
) -> Result<Estimate<V>> {
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::InvalidParameter(format!("interval [{a}, {b}] is not finite")));
    }
    if a == b {
        return Ok(Estimate::new(V::zero(), 0.0));
    }
    let (value, error) = gk21(f, a, b)?;
    let mut evaluations = 21;
    let mut heap = BinaryHeap::new();
    heap.push(Segment { a, b, value, error });
    let mut frozen: Vec<Segment<V>> = Vec::new();
    let mut total = value;
    let mut total_err = error;
    let mut splits = 0usize;
    let mut roundoff = 0usize;
    loop {
        if total_err <= abs_tol.max(rel_tol * total.magnitude()) {
            break;
        }
        let Some(worst) = heap.pop() else { break };
        let mid = 0.5 * (worst.a + worst.b);
        let width = (worst.b - worst.a).abs();
        let scale = worst.a.abs().max(worst.b.abs()).max(f64::MIN_POSITIVE);
        if width <= 64.0 * f64::EPSILON * scale || mid == worst.a || mid == worst.b {
            frozen.push(worst);
            continue;
        }
        if splits >= max_subdivisions {
            heap.push(worst);
            let (v, e) = totals(&heap, &frozen);
            return Err(Error::NonConvergence {
                value: v.magnitude(),
                error: e,
                subdivisions: splits,
            });
        }
        let (v1, e1) = gk21(f, worst.a, mid)?;
        let (v2, e2) = gk21(f, mid, worst.b)?;
        evaluations += 42;
        splits += 1;
        // QUADPACK-style detection of a floating-point floor: refinement
        // neither moves the value nor shrinks the error
        let children = v1 + v2;
        if e1 + e2 >= 0.99 * worst.error && (children - worst.value).magnitude() <= 1e-5 * children.magnitude() {
            roundoff += 1;
        }
        total = total - worst.value + v1 + v2;
        total_err = total_err - worst.error + e1 + e2;
        heap.push(Segment { a: worst.a, b: mid, value: v1, error: e1 });
        heap.push(Segment { a: mid, b: worst.b, value: v2, error: e2 });
        if roundoff >= 6 {
            break;
        }
        if splits % 64 == 0 {
            let (v, e) = totals(&heap, &frozen);
            total = v;
            total_err = e;
        }
    }
    // at a floating-point floor the reported error may exceed the tolerance
    let (value, error) = totals(&heap, &frozen);
    Ok(Estimate { value, error, evaluations })
}

fn totals<V: QuadValue>(heap: &BinaryHeap<Segment<V>>, frozen: &[Segment<V>]) -> (V, f64) {
    let mut v = V::zero();
    let mut e = 0.0;
    for s in heap.iter().chain(frozen.iter()) {
        v = v + s.value;
        e += s.error;
    }
    (v, e)
}
