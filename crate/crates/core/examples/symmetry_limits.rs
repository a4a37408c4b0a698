//! How `ω'` moves a layer between strict and broken equivariance, plus the
//! constant-kernel pooling limit.
//!
//! cargo run --release --example symmetry_limits

use softgconv::group_operator::{OperatorConfig, Padding, PixelGrid, SampleLayout};
use softgconv::kernel_field::{KernelField, SupportMask};
use softgconv::lie_group::{sample_rotations, GroupElement, GroupKind, RotationMode};
use softgconv::probes::{interpolation_curve, invariance_error, random_signal, Probe};
use softgconv::rff::FrequencySpec;

fn main() -> softgconv::Result<()> {
    let rots = sample_rotations(4, RotationMode::CyclicDeterministic, 0)?;
    let layout = SampleLayout::new(GroupKind::SE2, PixelGrid::new(12, 12, 1.0)?, rots)?;
    let f = random_signal(&layout, 2, 1)?;
    let field = KernelField::init(GroupKind::SE2, 32, 2, 4, 3)?;

    let grid = [0.0, 0.5, 1.0, 2.0, 4.0];
    for (name, probe, axes) in [
        ("translation", Probe::default_shifts(), [true, true, false]),
        ("rotation", Probe::quarter_turns(), [false, false, true]),
    ] {
        let factory = |w: f64| {
            let wp = axes.iter().map(|&on| if on { w } else { 0.0 }).collect();
            let freq = FrequencySpec::new(GroupKind::SE2, vec![0.25, 0.25, 1.0], wp)?;
            let mut cfg = OperatorConfig::new(freq, SupportMask::DEFAULT);
            cfg.padding = Padding::Circular;
            Ok((cfg, field.clone()))
        };
        // rotation ω' must be an integer harmonic
        let g: Vec<f64> = if name == "rotation" {
            vec![0.0, 1.0, 2.0, 4.0]
        } else {
            grid.to_vec()
        };
        println!("{name} equivariance error vs omega':");
        for p in interpolation_curve(factory, &f, &g, &probe, 3)? {
            println!("  {:>4}  {:.3e}", p.omega_prime, p.error);
        }
    }

    let actions = [
        GroupElement::se2(3.0, -2.0, 0.0),
        GroupElement::so2(std::f64::consts::PI),
    ];
    for mask in [SupportMask::None, SupportMask::DEFAULT] {
        let mut cfg = OperatorConfig::new(FrequencySpec::zero(GroupKind::SE2), mask);
        cfg.padding = Padding::Circular;
        let r = invariance_error(&cfg, &field, &f, &actions, 3)?;
        println!(
            "constant kernel, mask {mask:?}: invariance error {:.3e} (local pooling: {})",
            r.max_error, r.local_pooling
        );
    }
    Ok(())
}
