//! Renders strict and soft SE(2) kernels as PPM images.
//!
//! cargo run --example filter_bank -- /tmp/filters

use std::path::PathBuf;

use softgconv::group_operator::PixelGrid;
use softgconv::kernel_field::{render_filter_bank, KernelField, SupportMask};
use softgconv::lie_group::{sample_rotations, GroupElement, GroupKind, RotationMode};
use softgconv::rff::FrequencySpec;

fn main() -> softgconv::Result<()> {
    let out = PathBuf::from(
        std::env::args()
            .nth(1)
            .unwrap_or_else(|| "filter_bank".into()),
    );
    let field = KernelField::init(GroupKind::SE2, 64, 1, 2, 5)?;
    let grid = PixelGrid::new(15, 15, 0.5)?;
    let rotations = sample_rotations(4, RotationMode::CyclicDeterministic, 0)?;
    let probes: Vec<_> = [-8.0, 0.0, 8.0]
        .iter()
        .map(|&x| GroupElement::se2(x, 0.0, 0.0))
        .collect();

    for (name, wp) in [("strict", [0.0, 0.0, 0.0]), ("soft", [0.2, 0.2, 1.0])] {
        let freq = FrequencySpec::new(GroupKind::SE2, vec![0.25, 0.25, 1.0], wp.to_vec())?;
        let bank = render_filter_bank(
            &field,
            &freq,
            &SupportMask::DEFAULT,
            &grid,
            &rotations,
            &probes,
        )?;
        let files = bank.write_ppm(&out.join(name), "k")?;
        let same = (1..bank.n_probes).all(|p| bank.probe_slab(0, p) == bank.probe_slab(0, 0));
        println!(
            "{name}: {} images, probe slices identical: {same}",
            files.len()
        );
    }
    println!("written under {}", out.display());
    Ok(())
}
