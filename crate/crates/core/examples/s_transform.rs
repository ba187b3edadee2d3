//! S-transform of M(t) for the built-in test functionals: quadrature
//! against weighted Monte Carlo.

use std::sync::Arc;

use levy_volterra::kernels::{FractionalKernel, KernelHandle, TruncatedKernel};
use levy_volterra::levy::{GridSpec, JumpLaw, JumpSpec, LevyModel, LevySimulator, TimeGrid};
use levy_volterra::quadrature::QuadratureSpec;
use levy_volterra::rng::path_seed;
use levy_volterra::stransform::{battery, s_m, s_transform_mc, WeightEvaluator};
use levy_volterra::volterra::VolterraSimulator;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let model = LevyModel::new(0.8, JumpSpec::compound_poisson(1.5, JumpLaw::Uniform { low: -1.0, high: 2.0 }))?;
    let past = 100.0;
    let grid = Arc::new(TimeGrid::new(GridSpec::new(1.0, past, 128))?);
    let inner: KernelHandle = Arc::new(FractionalKernel::new(0.25)?);
    let k = TruncatedKernel::new(Arc::clone(&inner), past)?;
    let lsim = LevySimulator::new(&model, Arc::clone(&grid))?;
    let msim = VolterraSimulator::new(inner, Arc::clone(&grid), vec![grid.nodes().len() - 1])?;
    let paths: Vec<_> = (0..4000).map(|i| lsim.simulate(path_seed(3, i))).collect();
    let m: Vec<f64> = paths.iter().map(|lp| msim.simulate(lp).map(|v| v.terminal())).collect::<Result<_, _>>()?;
    for (name, g) in battery() {
        let we = WeightEvaluator::new(&g, &model, Arc::clone(&grid))?;
        let w: Vec<f64> = paths.iter().map(|lp| we.weight(lp)).collect();
        let mc = s_transform_mc(&m, &w)?;
        let q = s_m(&k, &g.bind(&model)?, 1.0, &QuadratureSpec::default())?;
        println!("{name:>10}: quadrature {:+.4}, Monte Carlo {:+.4} +- {:.4}", q.value, mc.value, mc.std_error);
    }
    Ok(())
}
