//! Symmetry instrumentation: relative equivariance and invariance errors of
//! single layers and whole models, and the error-vs-`ω'` curve.

use std::cmp::Ordering;
use std::f64::consts::{FRAC_PI_2, PI};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::group_operator::{
    apply_operator, relative_l2, GroupSignal, OperatorConfig, Padding, SampleLayout,
};
use crate::kernel_field::{KernelField, SupportMask};
use crate::lie_group::{GroupElement, GroupKind, RotationMode};
use crate::model_zoo::Model;
use crate::rff::init_basis;

/// The settings a report was produced under.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfigSnapshot {
    pub kind: GroupKind,
    pub omega: Vec<f64>,
    pub omega_prime: Vec<f64>,
    pub seed: u64,
    pub mask: SupportMask,
    pub padding: Padding,
    pub n_rotation_samples: usize,
    pub rotation_mode: RotationMode,
}

impl ConfigSnapshot {
    pub fn of(cfg: &OperatorConfig, seed: u64) -> Self {
        Self {
            kind: cfg.freq.kind,
            omega: cfg.freq.omega.clone(),
            omega_prime: cfg.freq.omega_prime.clone(),
            seed,
            mask: cfg.mask,
            padding: cfg.padding,
            n_rotation_samples: cfg.n_rotation_samples,
            rotation_mode: cfg.rotation_mode,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeRow {
    pub action: String,
    pub error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquivarianceReport {
    /// e.g. "translation-equivariance", "rotation-equivariance", "invariance".
    pub probe: String,
    pub rows: Vec<ProbeRow>,
    pub max_error: f64,
    pub mean_error: f64,
    pub config: ConfigSnapshot,
    /// Set for invariance probes under a bounded mask, where a constant kernel
    /// only pools locally and the error is expected to be nonzero.
    pub local_pooling: bool,
}

impl EquivarianceReport {
    fn new(probe: &str, rows: Vec<ProbeRow>, config: ConfigSnapshot, local_pooling: bool) -> Self {
        let max_error = rows.iter().map(|r| r.error).fold(0.0, f64::max);
        let mean_error = if rows.is_empty() {
            0.0
        } else {
            rows.iter().map(|r| r.error).sum::<f64>() / rows.len() as f64
        };
        Self {
            probe: probe.into(),
            rows,
            max_error,
            mean_error,
            config,
            local_pooling,
        }
    }

    /// Prefixes every action label, e.g. with a layer name.
    pub fn labelled(mut self, prefix: &str) -> Self {
        for r in &mut self.rows {
            r.action = format!("{prefix}/{}", r.action);
        }
        self
    }
}

/// Which group actions a probe applies.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Probe {
    /// Whole-pixel shifts `(dx, dy)`.
    Translation(Vec<(i64, i64)>),
    /// Multiples of a quarter turn.
    Rotation(Vec<usize>),
}

impl Probe {
    pub fn default_shifts() -> Probe {
        Probe::Translation(vec![(0, 0), (1, 0), (0, 1), (-2, 3), (5, -4)])
    }

    pub fn quarter_turns() -> Probe {
        Probe::Rotation(vec![0, 1, 2, 3])
    }
}

/// `‖h(shift(f, δ)) − shift(h(f), δ)‖ / ‖h(f)‖` for each shift `δ`.
pub fn translation_equivariance_error(
    cfg: &OperatorConfig,
    field: &KernelField,
    f: &GroupSignal,
    shifts: &[(i64, i64)],
    seed: u64,
) -> Result<EquivarianceReport> {
    if cfg.padding != Padding::Circular {
        return Err(invalid(
            "translation equivariance is only exact under circular padding",
        ));
    }
    let hf = apply_operator(f, cfg, field)?;
    let mut rows = Vec::with_capacity(shifts.len());
    for &(dx, dy) in shifts {
        let lhs = apply_operator(&f.shift(dx, dy)?, cfg, field)?;
        let rhs = hf.shift(dx, dy)?;
        rows.push(ProbeRow {
            action: format!("shift({dx},{dy})"),
            error: relative_l2(&lhs.values, &rhs.values),
        });
    }
    Ok(EquivarianceReport::new(
        "translation-equivariance",
        rows,
        ConfigSnapshot::of(cfg, seed),
        false,
    ))
}

/// Rotate-then-apply against apply-then-rotate for quarter turns. Rotating a
/// signal on SE(2) moves it over the grid and cycles its rotation slices.
pub fn rotation_equivariance_error(
    cfg: &OperatorConfig,
    field: &KernelField,
    f: &GroupSignal,
    quarter_turns: &[usize],
    seed: u64,
) -> Result<EquivarianceReport> {
    if cfg.rotation_mode != RotationMode::CyclicDeterministic {
        return Err(invalid(
            "rotation equivariance needs cyclic rotation samples",
        ));
    }
    if !f.kind().has_rotation() {
        return Err(invalid(
            "rotation equivariance needs an SO(2) or SE(2) signal",
        ));
    }
    if !f.layout.n_rot().is_multiple_of(4) {
        return Err(invalid(format!(
            "quarter turns need a rotation count divisible by 4, got {}",
            f.layout.n_rot()
        )));
    }
    let hf = apply_operator(f, cfg, field)?;
    let mut rows = Vec::with_capacity(quarter_turns.len());
    for &k in quarter_turns {
        let g = GroupElement::so2(k as f64 * FRAC_PI_2);
        let lhs = apply_operator(&f.act(&g, cfg.padding)?, cfg, field)?;
        let rhs = hf.act(&g, cfg.padding)?;
        rows.push(ProbeRow {
            action: format!("rotate({}deg)", 90 * k),
            error: relative_l2(&lhs.values, &rhs.values),
        });
    }
    Ok(EquivarianceReport::new(
        "rotation-equivariance",
        rows,
        ConfigSnapshot::of(cfg, seed),
        false,
    ))
}

/// `‖h(g·f) − h(f)‖ / ‖h(f)‖` for each action `g`.
pub fn invariance_error(
    cfg: &OperatorConfig,
    field: &KernelField,
    f: &GroupSignal,
    actions: &[GroupElement],
    seed: u64,
) -> Result<EquivarianceReport> {
    let hf = apply_operator(f, cfg, field)?;
    let mut rows = Vec::with_capacity(actions.len());
    for g in actions {
        let out = apply_operator(&f.act(g, cfg.padding)?, cfg, field)?;
        let (tx, ty) = g.translation();
        rows.push(ProbeRow {
            action: format!("g({tx},{ty},{})", g.angle()),
            error: relative_l2(&out.values, &hf.values),
        });
    }
    let local = cfg.mask.reach().is_some();
    Ok(EquivarianceReport::new(
        "invariance",
        rows,
        ConfigSnapshot::of(cfg, seed),
        local,
    ))
}

pub fn run_probe(
    probe: &Probe,
    cfg: &OperatorConfig,
    field: &KernelField,
    f: &GroupSignal,
    seed: u64,
) -> Result<EquivarianceReport> {
    match probe {
        Probe::Translation(s) => translation_equivariance_error(cfg, field, f, s, seed),
        Probe::Rotation(k) => rotation_equivariance_error(cfg, field, f, k, seed),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub omega_prime: f64,
    pub error: f64,
}

/// Max probe error for each `ω'` in `grid`; `factory` builds the layer for a
/// given `ω'`. The grid must be ascending and start at 0.
pub fn interpolation_curve(
    factory: impl Fn(f64) -> Result<(OperatorConfig, KernelField)>,
    f: &GroupSignal,
    grid: &[f64],
    probe: &Probe,
    seed: u64,
) -> Result<Vec<CurvePoint>> {
    validate_grid(grid)?;
    grid.iter()
        .map(|&w| {
            let (cfg, field) = factory(w)?;
            let report = run_probe(probe, &cfg, &field, f, seed)?;
            Ok(CurvePoint {
                omega_prime: w,
                error: report.max_error,
            })
        })
        .collect()
}

/// A grid of `ω'` values: non-empty, ascending, first entry 0.
pub fn validate_grid(grid: &[f64]) -> Result<()> {
    match grid.first() {
        None => Err(invalid("empty omega' grid")),
        Some(&g) if g != 0.0 => Err(invalid("omega' grid must start at 0")),
        _ if grid
            .windows(2)
            .any(|w| w[0].partial_cmp(&w[1]) != Some(Ordering::Less)) =>
        {
            Err(invalid("omega' grid must be strictly ascending"))
        }
        _ => Ok(()),
    }
}

/// Agreement of RFF inner products with the RBF kernel they approximate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RbfReport {
    pub features: usize,
    pub pairs: usize,
    pub mean_abs_error: f64,
    pub max_abs_error: f64,
}

/// Compares `⟨γ_ω(a), γ_ω(b)⟩` with `exp(−2π²‖ω⊙(a−b)‖²)` on `pairs` random
/// T(2) coefficient pairs drawn from `[-3, 3)²`.
pub fn rbf_limit(features: usize, omega: &[f64], pairs: usize, seed: u64) -> Result<RbfReport> {
    if pairs == 0 {
        return Err(invalid("rbf_limit needs at least one pair"));
    }
    let basis = init_basis(GroupKind::T2, features, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xa5a5);
    let (mut sum, mut max) = (0.0, 0.0f64);
    for _ in 0..pairs {
        let a = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
        let b = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
        let ga = basis.embed(&a, omega)?;
        let gb = basis.embed(&b, omega)?;
        let dot: f64 = ga.iter().zip(&gb).map(|(x, y)| x * y).sum();
        let d2: f64 = (0..2).map(|i| (omega[i] * (a[i] - b[i])).powi(2)).sum();
        let err = (dot - (-2.0 * PI * PI * d2).exp()).abs();
        sum += err;
        max = max.max(err);
    }
    Ok(RbfReport {
        features,
        pairs,
        mean_abs_error: sum / pairs as f64,
        max_abs_error: max,
    })
}

/// Uniform `[-1, 1)` values on `layout`.
pub fn random_signal(layout: &SampleLayout, channels: usize, seed: u64) -> Result<GroupSignal> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = (0..layout.len() * channels)
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    GroupSignal::new(layout.clone(), channels, values)
}

/// Relative change of the logits when the input image is turned by quarter
/// turns. Zero for a strict SE(2) model with cyclic C₄ sampling.
pub fn model_rotation_invariance(
    model: &Model,
    image: &[f64],
    quarter_turns: &[usize],
) -> Result<EquivarianceReport> {
    let side = model.spec.image_size;
    if image.len() != side * side {
        return Err(invalid("image does not match the model input size"));
    }
    let base = model.logits(&[image])?;
    let mut rows = Vec::with_capacity(quarter_turns.len());
    for &k in quarter_turns {
        let mut img = image.to_vec();
        for _ in 0..k % 4 {
            img = rotate_quarter(&img, side);
        }
        let out = model.logits(&[&img])?;
        rows.push(ProbeRow {
            action: format!("rotate-input({}deg)", 90 * k),
            error: relative_l2(out.data(), base.data()),
        });
    }
    let cfg = model.spec.operator_config(0)?;
    Ok(EquivarianceReport::new(
        "model-rotation-invariance",
        rows,
        ConfigSnapshot::of(&cfg, model.seed),
        false,
    ))
}

/// Counter-clockwise quarter turn of a square row-major image, with `y`
/// growing with the row index.
fn rotate_quarter(img: &[f64], side: usize) -> Vec<f64> {
    // (x, y) → (−y, x): new(row, col) = old(side−1−col, row)
    let mut out = vec![0.0; img.len()];
    for r in 0..side {
        for c in 0..side {
            out[r * side + c] = img[(side - 1 - c) * side + r];
        }
    }
    out
}

/// Every applicable probe for `model`: per-layer translation equivariance
/// (under circular padding), per-layer quarter-turn equivariance for SE(2),
/// and quarter-turn invariance of the logits for cyclic SE(2) models.
pub fn probe_model(model: &Model, seed: u64) -> Result<Vec<EquivarianceReport>> {
    let mut reports = Vec::new();
    let kind = model.spec.kind();
    for (i, field) in model.layers.iter().enumerate() {
        let mut cfg = model.spec.operator_config(i)?;
        let f = random_signal(model.layout(), field.c_in, seed.wrapping_add(i as u64))?;
        let name = format!("layer{}", i + 1);
        let circ = OperatorConfig {
            padding: Padding::Circular,
            ..cfg.clone()
        };
        reports.push(
            translation_equivariance_error(
                &circ,
                field,
                &f,
                &[(1, 0), (0, 1), (-2, 3)],
                model.seed,
            )?
            .labelled(&name),
        );
        if kind.has_rotation()
            && cfg.rotation_mode == RotationMode::CyclicDeterministic
            && model.layout().n_rot().is_multiple_of(4)
        {
            cfg.padding = model.spec.padding;
            reports.push(
                rotation_equivariance_error(&cfg, field, &f, &[1, 2, 3], model.seed)?
                    .labelled(&name),
            );
        }
    }
    let square = model.layout().grid.height == model.layout().grid.width;
    if kind.has_rotation()
        && square
        && model.spec.rotation_mode == RotationMode::CyclicDeterministic
        && model.layout().n_rot().is_multiple_of(4)
    {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let side = model.spec.image_size;
        let img: Vec<f64> = (0..side * side)
            .map(|_| rng.random_range(0.0..1.0))
            .collect();
        reports.push(model_rotation_invariance(model, &img, &[1, 2, 3])?);
    }
    Ok(reports)
}

/// `action,error` rows of all reports.
pub fn write_csv(path: &Path, reports: &[EquivarianceReport]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in reports {
        for row in &r.rows {
            w.serialize(row)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_json(path: &Path, reports: &[EquivarianceReport]) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(reports)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group_operator::PixelGrid;
    use crate::lie_group::sample_rotations;
    use crate::model_zoo::{build_model, ModelRow, ModelSpec};
    use crate::rff::FrequencySpec;

    fn se2_layout(side: usize) -> SampleLayout {
        let rots = sample_rotations(4, RotationMode::CyclicDeterministic, 0).unwrap();
        SampleLayout::new(
            GroupKind::SE2,
            PixelGrid::new(side, side, 1.0).unwrap(),
            rots,
        )
        .unwrap()
    }

    fn layer(
        kind: GroupKind,
        omega_prime: f64,
        padding: Padding,
        seed: u64,
    ) -> (OperatorConfig, KernelField) {
        let omega = if kind == GroupKind::T2 {
            vec![0.25; 2]
        } else {
            vec![0.25, 0.25, 1.0]
        };
        let freq = FrequencySpec::new(kind, omega, vec![omega_prime; kind.dim()]).unwrap();
        let mut cfg = OperatorConfig::new(freq, SupportMask::HardDisk { radius: 1.5 });
        cfg.padding = padding;
        (cfg, KernelField::init(kind, 16, 2, 3, seed).unwrap())
    }

    #[test]
    fn strict_translation_is_exact_and_soft_is_not() {
        let layout = SampleLayout::t2(PixelGrid::new(8, 8, 1.0).unwrap());
        let f = random_signal(&layout, 2, 1).unwrap();
        let (cfg, field) = layer(GroupKind::T2, 0.0, Padding::Circular, 2);
        let r = translation_equivariance_error(&cfg, &field, &f, &[(0, 0), (1, 2), (-3, 5)], 2)
            .unwrap();
        assert_eq!(r.rows[0].error, 0.0);
        assert!(r.max_error < 1e-10);
        let (cfg, field) = layer(GroupKind::T2, 2.0, Padding::Circular, 2);
        let r = translation_equivariance_error(&cfg, &field, &f, &[(1, 2)], 2).unwrap();
        assert!(r.max_error > 1e-6);
        let (cfg, field) = layer(GroupKind::T2, 0.0, Padding::Zero, 2);
        assert!(translation_equivariance_error(&cfg, &field, &f, &[(1, 0)], 2).is_err());
    }

    #[test]
    fn quarter_turns() {
        let f = random_signal(&se2_layout(6), 2, 3).unwrap();
        let (cfg, field) = layer(GroupKind::SE2, 0.0, Padding::Zero, 4);
        let r = rotation_equivariance_error(&cfg, &field, &f, &[0, 1, 2, 3], 4).unwrap();
        assert_eq!(r.rows[0].error, 0.0);
        assert!(r.max_error < 1e-8, "{r:?}");
        let (mut cfg, field) = layer(GroupKind::SE2, 0.0, Padding::Zero, 4);
        cfg.freq.omega_prime = vec![0.0, 0.0, 1.0];
        let r = rotation_equivariance_error(&cfg, &field, &f, &[1], 4).unwrap();
        assert!(r.max_error > 1e-6);
        cfg.rotation_mode = RotationMode::UniformRandom;
        assert!(rotation_equivariance_error(&cfg, &field, &f, &[1], 4).is_err());
    }

    #[test]
    fn global_and_local_pooling() {
        let f = random_signal(&se2_layout(6), 2, 5).unwrap();
        let freq = FrequencySpec::zero(GroupKind::SE2);
        let field = KernelField::init(GroupKind::SE2, 16, 2, 3, 6).unwrap();
        let actions = [
            GroupElement::se2(0.0, 0.0, 0.0),
            GroupElement::se2(2.0, -1.0, 0.0),
            GroupElement::se2(1.0, 3.0, FRAC_PI_2),
        ];
        let mut cfg = OperatorConfig::new(freq, SupportMask::None);
        cfg.padding = Padding::Circular;
        let r = invariance_error(&cfg, &field, &f, &actions, 6).unwrap();
        assert!(r.max_error < 1e-10 && !r.local_pooling, "{r:?}");
        cfg.mask = SupportMask::HardDisk { radius: 1.5 };
        let r = invariance_error(&cfg, &field, &f, &actions, 6).unwrap();
        assert!(r.local_pooling && r.max_error > 1e-6 && r.rows[0].error == 0.0);
    }

    #[test]
    fn curve_rows() {
        let layout = SampleLayout::t2(PixelGrid::new(8, 8, 1.0).unwrap());
        let f = random_signal(&layout, 2, 7).unwrap();
        let probe = Probe::default_shifts();
        let factory = |w| Ok(layer(GroupKind::T2, w, Padding::Circular, 8));
        let grid = [0.0, 0.5, 1.0, 2.0, 4.0];
        let curve = interpolation_curve(factory, &f, &grid, &probe, 8).unwrap();
        assert_eq!(curve.len(), grid.len());
        assert!(curve[0].error < 1e-10);
        assert!(curve[1..].iter().all(|p| p.error > 1e-6));
        assert_eq!(
            interpolation_curve(factory, &f, &[0.0], &probe, 8)
                .unwrap()
                .len(),
            1
        );
        for bad in [&[][..], &[1.0, 2.0], &[0.0, 2.0, 1.0]] {
            assert!(interpolation_curve(factory, &f, bad, &probe, 8).is_err());
        }
    }

    #[test]
    fn rbf_error_shrinks_with_width() {
        let small = rbf_limit(64, &[0.25, 0.25], 50, 1).unwrap();
        let large = rbf_limit(4096, &[0.25, 0.25], 50, 1).unwrap();
        assert!(large.mean_abs_error < small.mean_abs_error);
        assert!(large.max_abs_error < 0.1);
    }

    #[test]
    fn quarter_turn_helper_is_counter_clockwise() {
        // x grows with col, y with row; a point at +x ends up at +y.
        let side = 3;
        let mut img = vec![0.0; 9];
        img[side + 2] = 1.0; // row 1, col 2
        let out = rotate_quarter(&img, side);
        assert_eq!(out[2 * side + 1], 1.0);
    }

    #[test]
    fn model_suites() {
        let small = |row| ModelSpec {
            image_size: 8,
            downsample: 1,
            widths: vec![2, 3],
            mask: SupportMask::HardDisk { radius: 1.5 },
            ..ModelSpec::for_row(row, 1.0).unwrap()
        };
        for row in ModelRow::ALL {
            let model = build_model(&small(row), 1).unwrap();
            let reports = probe_model(&model, 2).unwrap();
            let max = reports.iter().map(|r| r.max_error).fold(0.0, f64::max);
            if row.is_soft() {
                assert!(max > 1e-6, "{row:?}");
            } else {
                assert!(max < 1e-10, "{row:?}: {max}");
            }
        }
    }

    #[test]
    fn reports_serialize() {
        let dir = tempfile::tempdir().unwrap();
        let model = build_model(&ModelSpec::toy(ModelRow::Se2Strict), 0).unwrap();
        let reports = probe_model(&model, 0).unwrap();
        write_csv(&dir.path().join("p.csv"), &reports).unwrap();
        write_json(&dir.path().join("p.json"), &reports).unwrap();
        let csv = std::fs::read_to_string(dir.path().join("p.csv")).unwrap();
        assert!(csv.starts_with("action,error\n"));
        let json = std::fs::read_to_string(dir.path().join("p.json")).unwrap();
        assert!(json.contains("omega_prime") && json.contains("\"seed\""));
    }
}
