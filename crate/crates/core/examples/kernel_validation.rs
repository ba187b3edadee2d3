//! Run the kernel-class validator on a few fractional kernels and on a
//! kernel that looks into the future.

use levy_volterra::kernels::{validate_kernel, FnKernel, FractionalKernel, ProbeConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for d in [0.1, 0.25, 0.4] {
        let r = validate_kernel(&FractionalKernel::new(d)?, &ProbeConfig::default())?;
        println!("{}", r.to_text());
    }
    let ahead = FnKernel::new("1[0,t+1]", 0.0, |t, s| if (0.0..=t + 1.0).contains(&s) { 1.0 } else { 0.0 }, |_, _| 0.0, |_, _| 0.0);
    let r = validate_kernel(&ahead, &ProbeConfig::default())?;
    println!("{}", r.to_text());
    Ok(())
}
