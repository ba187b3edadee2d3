//! Classical Ito formula for G(x) = x^2 on jump-diffusion paths: the RMS
//! residual shrinks as the step is halved.

use levy_volterra::charfn::SmoothTestFunction;
use levy_volterra::itoverify::{pathwise_study, PathwiseSettings};
use levy_volterra::levy::{JumpLaw, JumpSpec, LevyModel};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let model = LevyModel::new(0.5, JumpSpec::compound_poisson(2.0, JumpLaw::Uniform { low: -1.0, high: 1.0 }))?;
    let settings = PathwiseSettings { n_paths: 200, ..PathwiseSettings::default() };
    let study = pathwise_study(&SmoothTestFunction::square(), &model, &settings)?;
    for l in &study.levels {
        println!("dt {:.2e}: rms residual {:.3e}, ratio {:.3e}", l.dt, l.rms_residual, l.ratio);
    }
    println!("reductions {:?}, passed {}", study.reductions, study.passed);
    Ok(())
}
