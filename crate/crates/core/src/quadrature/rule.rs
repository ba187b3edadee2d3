//! Fixed node/weight rules, built once and reused across Monte Carlo paths.

use super::gauss::gauss_legendre;
use super::QuadValue;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct FixedRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl FixedRule {
    /// `n`-point Gauss-Legendre rule on `[a, b]`.
    pub fn gauss_legendre(a: f64, b: f64, n: usize) -> Self {
        let (x, w) = gauss_legendre(n);
        let c = 0.5 * (a + b);
        let h = 0.5 * (b - a);
        Self {
            nodes: x.iter().map(|x| c + h * x).collect(),
            weights: w.iter().map(|w| h * w).collect(),
        }
    }

    /// Gauss-Legendre on `[a, b]` after the power substitutions used by
    /// [`super::integrate_singular`] at singular ends (exponents in `[0, 1)`).
    pub fn graded(a: f64, b: f64, lower: f64, upper: f64, n: usize) -> Self {
        if lower != 0.0 && upper != 0.0 {
            let m = 0.5 * (a + b);
            let mut r = Self::graded(a, m, lower, 0.0, n);
            r.append(Self::graded(m, b, 0.0, upper, n));
            return r;
        }
        let (x, w) = gauss_legendre(n);
        let len = b - a;
        let mut nodes = Vec::with_capacity(n);
        let mut weights = Vec::with_capacity(n);
        for (x, w) in x.iter().zip(&w) {
            let u = 0.5 * (x + 1.0);
            let wu = 0.5 * w;
            if lower != 0.0 {
                let p = 1.0 / (1.0 - lower);
                nodes.push(a + len * u.powf(p));
                weights.push(wu * len * p * u.powf(p - 1.0));
            } else if upper != 0.0 {
                let p = 1.0 / (1.0 - upper);
                nodes.push(b - len * u.powf(p));
                weights.push(wu * len * p * u.powf(p - 1.0));
            } else {
                nodes.push(a + len * u);
                weights.push(wu * len);
            }
        }
        Self { nodes, weights }
    }

    /// Rule for `[-cutoff, b]` (`b < 0`) on the log scale `s = b e^y`,
    /// `panel` units of `y` per Gauss-Legendre panel.
    pub fn log_tail(b: f64, cutoff: f64, panel: f64, n: usize) -> Self {
        assert!(b < 0.0 && cutoff > -b);
        let y_max = (cutoff / -b).ln();
        let panels = (y_max / panel).ceil().max(1.0) as usize;
        let mut r = Self::default();
        for i in 0..panels {
            let y0 = y_max * i as f64 / panels as f64;
            let y1 = y_max * (i + 1) as f64 / panels as f64;
            let base = Self::gauss_legendre(y0, y1, n);
            for (y, w) in base.nodes.iter().zip(&base.weights) {
                let s = b * y.exp();
                r.nodes.push(s);
                r.weights.push(w * -s);
            }
        }
        r
    }

    pub fn append(&mut self, other: Self) {
        self.nodes.extend(other.nodes);
        self.weights.extend(other.weights);
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate<V: QuadValue>(&self, f: impl Fn(f64) -> V) -> V {
        self.nodes
            .iter()
            .zip(&self.weights)
            .fold(V::zero(), |acc, (&x, &w)| acc + f(x) * w)
    }
}
