//! MNIST6-180: is this 6 upside down? A strictly rotation-invariant model
//! cannot tell, a model soft in SO(2) can.
//!
//! Uses synthetic glyphs unless MNIST IDX paths are given:
//! cargo run --release --example mnist6_180 -- [train-images-idx3-ubyte train-labels-idx1-ubyte]

use softgconv::datasets::{build_mnist6_180, load_idx, split, synth_glyph_set};
use softgconv::model_zoo::{build_model, ModelRow, ModelSpec};
use softgconv::train::{evaluate, train, TrainConfig};

fn main() -> softgconv::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let set = match args.as_slice() {
        [images, labels] => build_mnist6_180(&load_idx(images.as_ref(), labels.as_ref())?, 0)?,
        _ => synth_glyph_set(5500, 11)?,
    };
    let [tr, va, te] = split(&set, 2000, 500, 3000, 1)?;
    println!(
        "train {:?}  val {:?}  test {:?} (class counts)",
        tr.class_counts(),
        va.class_counts(),
        te.class_counts()
    );

    for row in [ModelRow::Se2Strict, ModelRow::Se2SoftRotation] {
        let spec = ModelSpec::for_row(row, 1.0)?;
        let mut model = build_model(&spec, 0)?;
        let cfg = TrainConfig {
            epochs: 20,
            batch_size: 32,
            lr: 0.01,
            seed: 0,
            patience: 5,
        };
        let report = train(&mut model, &tr, &va, &cfg, |r| {
            println!(
                "  epoch {:>2}  loss {:.4}  val {:.3}",
                r.epoch, r.train_loss, r.val_acc
            )
        })?;
        let acc = evaluate(&model, &te, 256)?;
        println!(
            "{}: best epoch {}, test accuracy {:.4}\n",
            row.label(),
            report.best_epoch,
            acc
        );
    }
    Ok(())
}
