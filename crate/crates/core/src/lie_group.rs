//! The translation group T(2), the rotation group SO(2) and the roto-translation
//! group SE(2) = T(2) ⋊ SO(2).
//!
//! Elements are stored in product coordinates: a translation `(tx, ty)` in pixels
//! and an angle in radians, always normalized to the principal branch `(-π, π]`.
//! The algebra coordinates used by the kernels are the same product coordinates,
//! so the log map of SE(2) is `(tx, ty, θ)` and not the twist of the matrix
//! logarithm. That keeps the x, y and r frequency axes independent.

use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GroupKind {
    T2,
    SO2,
    SE2,
}

impl GroupKind {
    pub fn dim(self) -> usize {
        match self {
            GroupKind::T2 => 2,
            GroupKind::SO2 => 1,
            GroupKind::SE2 => 3,
        }
    }

    pub fn has_translation(self) -> bool {
        !matches!(self, GroupKind::SO2)
    }

    pub fn has_rotation(self) -> bool {
        !matches!(self, GroupKind::T2)
    }

    /// Index of the rotation coefficient in the algebra basis, if any.
    pub fn rotation_axis(self) -> Option<usize> {
        match self {
            GroupKind::T2 => None,
            GroupKind::SO2 => Some(0),
            GroupKind::SE2 => Some(2),
        }
    }

    /// Indices of the translation coefficients in the algebra basis.
    pub fn translation_axes(self) -> &'static [usize] {
        match self {
            GroupKind::T2 | GroupKind::SE2 => &[0, 1],
            GroupKind::SO2 => &[],
        }
    }

    pub fn identity(self) -> GroupElement {
        GroupElement {
            kind: self,
            tx: 0.0,
            ty: 0.0,
            angle: 0.0,
        }
    }
}

/// Wraps an angle onto `(-π, π]`; `-π` maps to `+π`.
pub fn wrap_angle(theta: f64) -> f64 {
    let a = theta.rem_euclid(TAU);
    if a > PI {
        a - TAU
    } else {
        a
    }
}

/// `(cos θ, sin θ)` with components below 1e-15 snapped to zero, so quarter
/// turns act exactly on the pixel lattice.
pub fn cos_sin(theta: f64) -> (f64, f64) {
    let (s, c) = theta.sin_cos();
    let snap = |v: f64| if v.abs() < 1e-15 { 0.0 } else { v };
    (snap(c), snap(s))
}

pub fn rotate_vector(theta: f64, (x, y): (f64, f64)) -> (f64, f64) {
    let (c, s) = cos_sin(theta);
    (c * x - s * y, s * x + c * y)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupElement {
    kind: GroupKind,
    tx: f64,
    ty: f64,
    angle: f64,
}

impl GroupElement {
    pub fn t2(tx: f64, ty: f64) -> Self {
        Self {
            kind: GroupKind::T2,
            tx,
            ty,
            angle: 0.0,
        }
    }

    pub fn so2(angle: f64) -> Self {
        Self {
            kind: GroupKind::SO2,
            tx: 0.0,
            ty: 0.0,
            angle: wrap_angle(angle),
        }
    }

    pub fn se2(tx: f64, ty: f64, angle: f64) -> Self {
        Self {
            kind: GroupKind::SE2,
            tx,
            ty,
            angle: wrap_angle(angle),
        }
    }

    /// Builds an element of `kind` from product coordinates, dropping the
    /// components the group does not have.
    pub fn from_parts(kind: GroupKind, tx: f64, ty: f64, angle: f64) -> Self {
        match kind {
            GroupKind::T2 => Self::t2(tx, ty),
            GroupKind::SO2 => Self::so2(angle),
            GroupKind::SE2 => Self::se2(tx, ty, angle),
        }
    }

    pub fn kind(&self) -> GroupKind {
        self.kind
    }

    pub fn translation(&self) -> (f64, f64) {
        (self.tx, self.ty)
    }

    pub fn angle(&self) -> f64 {
        self.angle
    }

    pub fn is_identity(&self) -> bool {
        self.tx == 0.0 && self.ty == 0.0 && self.angle == 0.0
    }

    /// Largest absolute coordinate difference, with angles compared on the circle.
    pub fn deviation(&self, other: &GroupElement) -> f64 {
        let da = wrap_angle(self.angle - other.angle).abs();
        (self.tx - other.tx)
            .abs()
            .max((self.ty - other.ty).abs())
            .max(da)
    }
}

fn check_same(a: &GroupElement, b: &GroupElement) -> Result<()> {
    if a.kind != b.kind {
        return Err(Error::KindMismatch {
            expected: a.kind,
            found: b.kind,
        });
    }
    Ok(())
}

/// Group product `a · b`.
pub fn compose(a: &GroupElement, b: &GroupElement) -> Result<GroupElement> {
    check_same(a, b)?;
    Ok(match a.kind {
        GroupKind::T2 => GroupElement::t2(a.tx + b.tx, a.ty + b.ty),
        GroupKind::SO2 => GroupElement::so2(a.angle + b.angle),
        GroupKind::SE2 => {
            let (rx, ry) = rotate_vector(a.angle, (b.tx, b.ty));
            GroupElement::se2(a.tx + rx, a.ty + ry, a.angle + b.angle)
        }
    })
}

pub fn inverse(g: &GroupElement) -> GroupElement {
    match g.kind {
        GroupKind::T2 => GroupElement::t2(-g.tx, -g.ty),
        GroupKind::SO2 => GroupElement::so2(-g.angle),
        GroupKind::SE2 => {
            let (rx, ry) = rotate_vector(-g.angle, (g.tx, g.ty));
            GroupElement::se2(-rx, -ry, -g.angle)
        }
    }
}

/// The stationary argument `v⁻¹u`.
pub fn relative(u: &GroupElement, v: &GroupElement) -> Result<GroupElement> {
    compose(&inverse(v), u)
}

/// Coefficients of a Lie algebra element in the fixed basis: `(x, y)` for T(2),
/// `(r)` for SO(2), `(x, y, r)` for SE(2).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlgebraCoeffs {
    pub alpha: Vec<f64>,
}

impl AlgebraCoeffs {
    pub fn new(alpha: Vec<f64>) -> Self {
        Self { alpha }
    }

    pub fn len(&self) -> usize {
        self.alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty()
    }
}

/// Principal log. The rotation coefficient lands in `(-π, π]`.
pub fn log_map(g: &GroupElement) -> AlgebraCoeffs {
    let mut out = Vec::with_capacity(3);
    log_into(g, &mut out);
    AlgebraCoeffs::new(out)
}

pub(crate) fn log_into(g: &GroupElement, out: &mut Vec<f64>) {
    out.clear();
    match g.kind {
        GroupKind::T2 => out.extend_from_slice(&[g.tx, g.ty]),
        GroupKind::SO2 => out.push(g.angle),
        GroupKind::SE2 => out.extend_from_slice(&[g.tx, g.ty, g.angle]),
    }
}

pub fn exp_map(a: &AlgebraCoeffs, kind: GroupKind) -> Result<GroupElement> {
    if a.len() != kind.dim() {
        return Err(Error::DimensionMismatch {
            expected: kind.dim(),
            found: a.len(),
            context: "exp_map coefficients",
        });
    }
    let c = &a.alpha;
    Ok(match kind {
        GroupKind::T2 => GroupElement::t2(c[0], c[1]),
        GroupKind::SO2 => GroupElement::so2(c[0]),
        GroupKind::SE2 => GroupElement::se2(c[0], c[1], c[2]),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RotationMode {
    UniformRandom,
    CyclicDeterministic,
}

/// Rotation samples. Uniform mode draws `θ ~ U[0, 2π)`; cyclic mode returns the
/// cyclic subgroup `{2πk/n}` in order.
pub fn sample_rotations(n: usize, mode: RotationMode, seed: u64) -> Result<Vec<GroupElement>> {
    if n == 0 {
        return Err(invalid("sample_rotations needs n >= 1"));
    }
    Ok(match mode {
        RotationMode::CyclicDeterministic => (0..n)
            .map(|k| GroupElement::so2(TAU * k as f64 / n as f64))
            .collect(),
        RotationMode::UniformRandom => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..n)
                .map(|_| GroupElement::so2(rng.random_range(0.0..TAU)))
                .collect()
        }
    })
}

/// Action on the plane: `p ↦ R(θ)p + t`.
pub fn act_on_point(g: &GroupElement, p: (f64, f64)) -> (f64, f64) {
    let (rx, ry) = match g.kind {
        GroupKind::T2 => p,
        _ => rotate_vector(g.angle, p),
    };
    (rx + g.tx, ry + g.ty)
}

/// Changes of variables between the parameterizations `(u, v)`, `(v⁻¹u, v)`
/// and `(v⁻¹u, u)` of the kernel domain.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phi {
    /// `(u, v) ↦ (v⁻¹u, v)`
    Phi1,
    /// `(u, v) ↦ (v⁻¹u, u)`
    Phi2,
    /// `φ2⁻¹ ∘ φ1`
    Phi3,
}

pub type Pair = (GroupElement, GroupElement);

pub fn change_of_variables(which: Phi, (a, b): Pair) -> Result<Pair> {
    check_same(&a, &b)?;
    match which {
        Phi::Phi1 => Ok((relative(&a, &b)?, b)),
        Phi::Phi2 => Ok((relative(&a, &b)?, a)),
        Phi::Phi3 => {
            let p = change_of_variables(Phi::Phi1, (a, b))?;
            change_of_variables_inverse(Phi::Phi2, p)
        }
    }
}

pub fn change_of_variables_inverse(which: Phi, (a, b): Pair) -> Result<Pair> {
    check_same(&a, &b)?;
    match which {
        Phi::Phi1 => Ok((compose(&b, &a)?, b)),
        Phi::Phi2 => Ok((b, compose(&b, &inverse(&a))?)),
        Phi::Phi3 => {
            let p = change_of_variables(Phi::Phi2, (a, b))?;
            change_of_variables_inverse(Phi::Phi1, p)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn random_se2(rng: &mut ChaCha8Rng) -> GroupElement {
        GroupElement::se2(
            rng.random_range(-20.0..20.0),
            rng.random_range(-20.0..20.0),
            rng.random_range(-PI..PI),
        )
    }

    #[test]
    fn dims() {
        assert_eq!(GroupKind::T2.dim(), 2);
        assert_eq!(GroupKind::SO2.dim(), 1);
        assert_eq!(GroupKind::SE2.dim(), 3);
    }

    #[test]
    fn compose_examples() {
        let g = GroupElement::se2(1.5, -2.0, 0.7);
        assert_eq!(compose(&GroupKind::SE2.identity(), &g).unwrap(), g);

        let a = GroupElement::se2(1.0, 0.0, PI / 2.0);
        let b = GroupElement::se2(1.0, 0.0, 0.0);
        let ab = compose(&a, &b).unwrap();
        assert_eq!(ab.translation(), (1.0, 1.0));
        assert_eq!(ab.angle(), PI / 2.0);

        let r = compose(&GroupElement::so2(0.75 * PI), &GroupElement::so2(0.75 * PI)).unwrap();
        assert!((r.angle() + PI / 2.0).abs() < 1e-15);
    }

    #[test]
    fn compose_kind_mismatch() {
        let err = compose(&GroupElement::t2(0.0, 0.0), &GroupElement::so2(0.0));
        assert!(matches!(err, Err(Error::KindMismatch { .. })));
        assert!(relative(&GroupElement::t2(0.0, 0.0), &GroupElement::so2(0.0)).is_err());
    }

    #[test]
    fn inverse_examples() {
        assert_eq!(
            inverse(&GroupKind::SE2.identity()),
            GroupKind::SE2.identity()
        );
        assert_eq!(
            inverse(&GroupElement::t2(2.0, -3.0)),
            GroupElement::t2(-2.0, 3.0)
        );
    }

    #[test]
    fn inverse_round_trip_1000() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut worst: f64 = 0.0;
        for _ in 0..1000 {
            let g = random_se2(&mut rng);
            let e = compose(&inverse(&g), &g).unwrap();
            worst = worst.max(e.deviation(&GroupKind::SE2.identity()));
        }
        assert!(worst < 1e-12, "worst {worst}");
    }

    #[test]
    fn relative_examples() {
        let g = GroupElement::se2(3.0, 1.0, 2.0);
        assert!(
            relative(&g, &g)
                .unwrap()
                .deviation(&GroupKind::SE2.identity())
                < 1e-15
        );
        assert_eq!(
            relative(&GroupElement::t2(5.0, 5.0), &GroupElement::t2(2.0, 1.0)).unwrap(),
            GroupElement::t2(3.0, 4.0)
        );
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..1000 {
            let (u, v) = (random_se2(&mut rng), random_se2(&mut rng));
            let direct = compose(&inverse(&v), &u).unwrap();
            assert_eq!(relative(&u, &v).unwrap(), direct);
        }
    }

    #[test]
    fn log_exp_examples() {
        assert_eq!(log_map(&GroupElement::so2(PI / 2.0)).alpha, vec![PI / 2.0]);
        assert_eq!(log_map(&GroupElement::so2(PI)).alpha, vec![PI]);
        assert_eq!(log_map(&GroupElement::so2(-PI)).alpha, vec![PI]);
        assert_eq!(
            exp_map(&AlgebraCoeffs::new(vec![0.0; 3]), GroupKind::SE2).unwrap(),
            GroupKind::SE2.identity()
        );
        let g = exp_map(&AlgebraCoeffs::new(vec![TAU + 0.1]), GroupKind::SO2).unwrap();
        assert!((g.angle() - 0.1).abs() < 1e-15);
        assert!(matches!(
            exp_map(&AlgebraCoeffs::new(vec![0.0; 2]), GroupKind::SE2),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn exp_log_round_trips_1000() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let g = random_se2(&mut rng);
            let back = exp_map(&log_map(&g), GroupKind::SE2).unwrap();
            assert!(back.deviation(&g) < 1e-12);

            let alpha = vec![
                rng.random_range(-10.0..10.0),
                rng.random_range(-10.0..10.0),
                rng.random_range(-PI..PI),
            ];
            let a = AlgebraCoeffs::new(alpha.clone());
            let back = log_map(&exp_map(&a, GroupKind::SE2).unwrap());
            for (x, y) in back.alpha.iter().zip(&alpha) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn cyclic_samples() {
        let r = sample_rotations(4, RotationMode::CyclicDeterministic, 0).unwrap();
        let angles: Vec<f64> = r.iter().map(|g| g.angle()).collect();
        assert_eq!(angles[0], 0.0);
        assert_eq!(angles[1], PI / 2.0);
        assert_eq!(angles[2], PI);
        assert!((angles[3] + PI / 2.0).abs() < 1e-15);
        assert!(sample_rotations(0, RotationMode::UniformRandom, 0).is_err());
    }

    #[test]
    fn uniform_samples_are_seeded() {
        let a = sample_rotations(50, RotationMode::UniformRandom, 9).unwrap();
        let b = sample_rotations(50, RotationMode::UniformRandom, 9).unwrap();
        assert_eq!(a, b);
        let c = sample_rotations(50, RotationMode::UniformRandom, 10).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn uniform_samples_cos_mean_within_clt_bound() {
        let n = 100_000;
        let r = sample_rotations(n, RotationMode::UniformRandom, 42).unwrap();
        let mean = r.iter().map(|g| g.angle().cos()).sum::<f64>() / n as f64;
        let sigma = 1.0 / (2.0 * n as f64).sqrt();
        assert!(mean.abs() < 3.0 * sigma, "mean {mean}");
    }

    #[test]
    fn uniform_samples_pass_ks_at_one_percent() {
        let n = 100_000;
        let mut u: Vec<f64> = sample_rotations(n, RotationMode::UniformRandom, 7)
            .unwrap()
            .iter()
            .map(|g| g.angle().rem_euclid(TAU) / TAU)
            .collect();
        u.sort_by(f64::total_cmp);
        let nf = n as f64;
        let d = u
            .iter()
            .enumerate()
            .map(|(i, &x)| ((i + 1) as f64 / nf - x).max(x - i as f64 / nf))
            .fold(0.0, f64::max);
        // Asymptotic 1% critical value of the one-sample KS statistic.
        assert!(d < 1.628 / nf.sqrt(), "KS statistic {d}");
    }

    #[test]
    fn action_examples() {
        let p = (0.3, -1.2);
        assert_eq!(act_on_point(&GroupKind::SE2.identity(), p), p);
        assert_eq!(
            act_on_point(&GroupElement::so2(PI / 2.0), (1.0, 0.0)),
            (0.0, 1.0)
        );
    }

    #[test]
    fn action_is_homomorphism() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..1000 {
            let (g, h) = (random_se2(&mut rng), random_se2(&mut rng));
            let p = (rng.random_range(-30.0..30.0), rng.random_range(-30.0..30.0));
            let lhs = act_on_point(&compose(&g, &h).unwrap(), p);
            let rhs = act_on_point(&g, act_on_point(&h, p));
            assert!((lhs.0 - rhs.0).abs() < 1e-10 && (lhs.1 - rhs.1).abs() < 1e-10);
        }
    }

    #[test]
    fn phi_examples() {
        let u = GroupElement::se2(1.0, 2.0, 0.4);
        let (a, b) = change_of_variables(Phi::Phi2, (u, u)).unwrap();
        assert!(a.deviation(&GroupKind::SE2.identity()) < 1e-15);
        assert_eq!(b, u);

        let v = GroupElement::se2(-3.0, 0.5, -2.0);
        let direct = change_of_variables(Phi::Phi3, (u, v)).unwrap();
        let step = change_of_variables(Phi::Phi1, (u, v)).unwrap();
        let composed = change_of_variables_inverse(Phi::Phi2, step).unwrap();
        assert_eq!(direct, composed);
        assert!(change_of_variables(Phi::Phi1, (u, GroupElement::so2(0.0))).is_err());
    }

    #[test]
    fn phi_round_trips_1000() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for which in [Phi::Phi1, Phi::Phi2, Phi::Phi3] {
            for _ in 0..1000 {
                let pair = (random_se2(&mut rng), random_se2(&mut rng));
                let there = change_of_variables(which, pair).unwrap();
                let back = change_of_variables_inverse(which, there).unwrap();
                assert!(back.0.deviation(&pair.0) < 1e-12);
                assert!(back.1.deviation(&pair.1) < 1e-12);
            }
        }
    }

    proptest! {
        #[test]
        fn angles_stay_on_principal_branch(theta in -1e3f64..1e3) {
            let a = GroupElement::so2(theta).angle();
            prop_assert!(a > -PI && a <= PI);
        }

        #[test]
        fn associativity(
            a in (-9.0f64..9.0, -9.0f64..9.0, -4.0f64..4.0),
            b in (-9.0f64..9.0, -9.0f64..9.0, -4.0f64..4.0),
            c in (-9.0f64..9.0, -9.0f64..9.0, -4.0f64..4.0),
        ) {
            let (a, b, c) = (
                GroupElement::se2(a.0, a.1, a.2),
                GroupElement::se2(b.0, b.1, b.2),
                GroupElement::se2(c.0, c.1, c.2),
            );
            let lhs = compose(&compose(&a, &b).unwrap(), &c).unwrap();
            let rhs = compose(&a, &compose(&b, &c).unwrap()).unwrap();
            prop_assert!(lhs.deviation(&rhs) < 1e-12);
        }
    }
}
