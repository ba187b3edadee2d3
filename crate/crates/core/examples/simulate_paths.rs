//! Simulate one driver path and the fractional Volterra process it drives,
//! writing both to CSV.

use std::fs::File;
use std::sync::Arc;

use levy_volterra::kernels::FractionalKernel;
use levy_volterra::levy::{simulate_path, GridSpec, JumpLaw, JumpSpec, LevyModel, TimeGrid};
use levy_volterra::volterra::simulate_m;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let model = LevyModel::new(1.0, JumpSpec::compound_poisson(2.0, JumpLaw::atom(2.0)))?;
    let grid = Arc::new(TimeGrid::new(GridSpec::new(1.0, 100.0, 256))?);
    let lp = simulate_path(&model, &grid, 42)?;
    let m = simulate_m(Arc::new(FractionalKernel::new(0.25)?), &lp)?;
    lp.write_csv(File::create("levy_path.csv")?)?;
    m.write_csv(File::create("volterra_path.csv")?)?;
    println!("{}: L(1) = {:.4}, M(1) = {:.4}, {} jumps on [0, 1]", model.label(), lp.values().last().unwrap(), m.terminal(), m.jumps().len());
    Ok(())
}
