//! Picks `ω'` for the rotation axis by validation accuracy.
//!
//! cargo run --release --example omega_prime_sweep

use softgconv::datasets::{split, synth_glyph_set};
use softgconv::model_zoo::{build_model, ModelRow, ModelSpec};
use softgconv::train::{evaluate, train, TrainConfig};

fn main() -> softgconv::Result<()> {
    let set = synth_glyph_set(2000, 3)?;
    let [tr, va, te] = split(&set, 1000, 500, 500, 4)?;
    let cfg = TrainConfig {
        epochs: 8,
        batch_size: 32,
        lr: 0.01,
        seed: 0,
        patience: 3,
    };
    let mut best = (f64::NEG_INFINITY, 0.0, 0.0);
    println!("{:>6} {:>8} {:>8}", "omega'", "val", "test");
    for w in [0.0, 1.0, 2.0, 4.0] {
        let mut model = build_model(&ModelSpec::for_row(ModelRow::Se2SoftRotation, w)?, 0)?;
        let report = train(&mut model, &tr, &va, &cfg, |_| {})?;
        let test = evaluate(&model, &te, 256)?;
        println!("{w:>6} {:>8.3} {:>8.3}", report.best_val_acc, test);
        if report.best_val_acc > best.0 {
            best = (report.best_val_acc, w, test);
        }
    }
    println!("selected omega' = {} (test {:.3})", best.1, best.2);
    Ok(())
}
