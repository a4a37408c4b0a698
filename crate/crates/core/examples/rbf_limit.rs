//! Random Fourier feature inner products converge to the RBF kernel as the
//! number of features grows.
//!
//! cargo run --release --example rbf_limit

use softgconv::probes::rbf_limit;

fn main() -> softgconv::Result<()> {
    println!("{:>8} {:>12} {:>12}", "D", "mean |err|", "max |err|");
    for d in [16, 64, 256, 1024, 4096, 16384] {
        let r = rbf_limit(d, &[0.25, 0.25], 100, 7)?;
        println!(
            "{:>8} {:>12.5} {:>12.5}",
            d, r.mean_abs_error, r.max_abs_error
        );
    }
    Ok(())
}
