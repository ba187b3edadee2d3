//! The Ito formula tested through its S-transform against a few test
//! functionals.

use std::sync::Arc;

use levy_volterra::charfn::GSpec;
use levy_volterra::itoverify::{eval_terms_stransform, verification_report, ItoSettings};
use levy_volterra::kernels::FractionalKernel;
use levy_volterra::levy::{JumpLaw, JumpSpec, LevyModel};
use levy_volterra::stransform::battery_element;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let model = LevyModel::new(1.0, JumpSpec::compound_poisson(2.0, JumpLaw::atom(2.0)))?;
    let k = Arc::new(FractionalKernel::new(0.25)?);
    let gs = ["early", "signed", "two_terms"]
        .iter()
        .map(|n| Ok((n.to_string(), battery_element(n)?)))
        .collect::<levy_volterra::error::Result<Vec<_>>>()?;
    let settings = ItoSettings { n_paths: 2000, ..ItoSettings::default() };
    let cells = eval_terms_stransform(&GSpec::BUMP.build(), &(k as _), &model, &gs, &settings)?;
    let report = verification_report(vec![], cells);
    print!("{}", report.to_text());
    Ok(())
}
