//! Expected terms of the Ito formula for a fractional Levy process.

use std::sync::Arc;

use levy_volterra::charfn::GSpec;
use levy_volterra::itoverify::{eval_terms_expectation, verification_report, ItoSettings};
use levy_volterra::kernels::FractionalKernel;
use levy_volterra::levy::{JumpLaw, JumpSpec, LevyModel};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let model = LevyModel::new(1.0, JumpSpec::compound_poisson(2.0, JumpLaw::atom(2.0)))?;
    let k = Arc::new(FractionalKernel::new(0.25)?);
    let settings = ItoSettings { n_paths: 2000, ..ItoSettings::default() };
    let cell = eval_terms_expectation(&GSpec::BUMP.build(), &(k as _), &model, &settings)?;
    print!("{}", verification_report(vec![], vec![cell]).to_text());
    Ok(())
}
