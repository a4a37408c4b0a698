//! Compares the analytic gradient of a small model with central differences.
//!
//! cargo run --release --example gradient_check

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use softgconv::kernel_field::SupportMask;
use softgconv::model_zoo::{build_model, ModelRow, ModelSpec};

fn main() -> softgconv::Result<()> {
    let spec = ModelSpec {
        image_size: 8,
        downsample: 1,
        widths: vec![3, 3],
        rff_features: 8,
        kernel_hidden: vec![8],
        mask: SupportMask::HardDisk { radius: 1.5 },
        ..ModelSpec::for_row(ModelRow::Se2SoftBoth, 1.0)?
    };
    let mut model = build_model(&spec, 1)?;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let images: Vec<Vec<f64>> = (0..2)
        .map(|_| (0..64).map(|_| rng.random_range(0.0..1.0)).collect())
        .collect();
    let refs: Vec<&[f64]> = images.iter().map(|v| v.as_slice()).collect();
    let labels = [0, 1];

    let (_, grads) = model.loss_and_grad(&refs, &labels)?;
    let h = 1e-5;
    let n_tensors = model.params().len();
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let t = rng.random_range(0..n_tensors);
        let j = rng.random_range(0..model.params()[t].len());
        let orig = model.params()[t].data()[j];
        model.params_mut()[t].data_mut()[j] = orig + h;
        let plus = model.loss_and_grad(&refs, &labels)?.0;
        model.params_mut()[t].data_mut()[j] = orig - h;
        let minus = model.loss_and_grad(&refs, &labels)?.0;
        model.params_mut()[t].data_mut()[j] = orig;
        let numeric = (plus - minus) / (2.0 * h);
        let analytic = grads[t].data()[j];
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8);
        println!(
            "param {t:>2}[{j:>3}]  analytic {analytic:+.6e}  numeric {numeric:+.6e}  rel {rel:.1e}"
        );
        worst = worst.max(rel);
    }
    println!("max relative error {worst:.2e}");
    Ok(())
}
