//! Characteristic function of M(1) under P and under a signed measure Q_g,
//! compared with Monte Carlo.

use std::sync::Arc;

use levy_volterra::charfn::{cf_m, cf_m_qg};
use levy_volterra::kernels::{FractionalKernel, KernelHandle, TruncatedKernel};
use levy_volterra::levy::{GridSpec, JumpLaw, JumpSpec, LevyModel, LevySimulator, TimeGrid};
use levy_volterra::quadrature::QuadratureSpec;
use levy_volterra::rng::path_seed;
use levy_volterra::stransform::{battery_element, s_transform_mc, WeightEvaluator};
use levy_volterra::volterra::VolterraSimulator;
use num_complex::Complex64;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let model = LevyModel::new(1.0, JumpSpec::compound_poisson(2.0, JumpLaw::atom(2.0)))?;
    let past = 100.0;
    let grid = Arc::new(TimeGrid::new(GridSpec::new(1.0, past, 128))?);
    let inner: KernelHandle = Arc::new(FractionalKernel::new(0.25)?);
    let k = TruncatedKernel::new(Arc::clone(&inner), past)?;
    let g = battery_element("middle")?;
    let bound = g.bind(&model)?;

    let lsim = LevySimulator::new(&model, Arc::clone(&grid))?;
    let msim = VolterraSimulator::new(inner, Arc::clone(&grid), vec![grid.nodes().len() - 1])?;
    let weights = WeightEvaluator::new(&g, &model, Arc::clone(&grid))?;
    let (mut m, mut w) = (Vec::new(), Vec::new());
    for i in 0..4000 {
        let lp = lsim.simulate(path_seed(7, i));
        m.push(msim.simulate(&lp)?.terminal());
        w.push(weights.weight(&lp));
    }
    let ones = vec![1.0; m.len()];
    let spec = QuadratureSpec::default();
    println!("u, cf_M, MC, cf_M_Qg, weighted MC");
    for u in [-2.0, -1.0, 0.5, 1.0, 3.0] {
        let phi: Vec<Complex64> = m.iter().map(|x| Complex64::new(0.0, u * x).exp()).collect();
        let p = cf_m(&k, &model, 1.0, u, &spec)?.value;
        let q = cf_m_qg(&k, &bound, 1.0, u, &spec)?.value;
        let pm = s_transform_mc(&phi, &ones)?.value;
        let qm = s_transform_mc(&phi, &w)?.value;
        println!("{u:+.1}, {p:.4}, {pm:.4}, {q:.4}, {qm:.4}");
    }
    Ok(())
}
