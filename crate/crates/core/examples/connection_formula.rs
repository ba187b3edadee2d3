//! S-transform of the integral of X(t) = cos W(t-) against M = L, computed
//! from its defining formula and from a weighted Monte Carlo of the forward
//! sums.

use std::sync::Arc;

use levy_volterra::charfn::cf_m_qg;
use levy_volterra::kernels::IndicatorKernel;
use levy_volterra::levy::{GridSpec, LevyModel, LevySimulator, TimeGrid};
use levy_volterra::quadrature::QuadratureSpec;
use levy_volterra::rng::path_seed;
use levy_volterra::stransform::{battery_element, s_m_diamond_rhs, s_transform_mc, WeightEvaluator};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let model = LevyModel::gaussian(1.0)?;
    let grid = Arc::new(TimeGrid::new(GridSpec::new(1.0, 0.0, 512))?);
    let lsim = LevySimulator::new(&model, Arc::clone(&grid))?;
    let spec = QuadratureSpec::default();
    let paths: Vec<_> = (0..16000).map(|i| lsim.simulate(path_seed(12, i))).collect();
    let sums: Vec<f64> = paths
        .iter()
        .map(|lp| lp.values().windows(2).map(|w| w[0].cos() * (w[1] - w[0])).sum())
        .collect();
    for name in ["early", "middle", "late"] {
        let g = battery_element(name)?;
        let bound = g.bind(&model)?;
        let sx = |t: f64| cf_m_qg(&IndicatorKernel, &bound, t, 1.0, &spec).map(|e| e.value.re).unwrap_or(f64::NAN);
        let formula = s_m_diamond_rhs(&sx, &IndicatorKernel, &bound, (0.0, 1.0), &spec)?;
        let we = WeightEvaluator::new(&g, &model, Arc::clone(&grid))?;
        let w: Vec<f64> = paths.iter().map(|lp| we.weight(lp)).collect();
        let mc = s_transform_mc(&sums, &w)?;
        println!("{name:>6}: formula {:+.4}, Monte Carlo {:+.4} +- {:.4}", formula.value, mc.value, mc.std_error);
    }
    Ok(())
}
