//! Random Fourier feature embedding of Lie algebra coefficients.
//!
//! `γ_ω(α) = √(1/D) · [cos(2π W(α ⊙ ω)); sin(2π W(α ⊙ ω))]`
//!
//! Translation columns of `W` are standard normal. The rotation column holds
//! integers, and the rotation coefficient enters in turns (`α_r / 2π`), so with
//! an integer `ω_r` every feature is a circular harmonic `cos(n α_r)` /
//! `sin(n α_r)` and the embedding is exactly 2π-periodic in the angle.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::lie_group::{wrap_angle, GroupKind};

/// Integer values a rotation-axis entry of `W` can take.
pub const ROTATION_HARMONICS: [f64; 6] = [-3.0, -2.0, -1.0, 1.0, 2.0, 3.0];

/// Default number of feature pairs per embedding.
pub const DEFAULT_FEATURES: usize = 64;

/// Fixed random projection `W ∈ R^{D × dim(G)}`, stored row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RffBasis {
    kind: GroupKind,
    features: usize,
    weights: Vec<f64>,
}

pub fn init_basis(kind: GroupKind, features: usize, seed: u64) -> Result<RffBasis> {
    if features == 0 {
        return Err(invalid("RFF basis needs at least one feature"));
    }
    let dim = kind.dim();
    let rot = kind.rotation_axis();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut weights = Vec::with_capacity(features * dim);
    for _ in 0..features {
        for axis in 0..dim {
            let w = if Some(axis) == rot {
                ROTATION_HARMONICS[rng.random_range(0..ROTATION_HARMONICS.len())]
            } else {
                rng.sample(StandardNormal)
            };
            weights.push(w);
        }
    }
    Ok(RffBasis {
        kind,
        features,
        weights,
    })
}

impl RffBasis {
    /// Rebuilds a basis from stored weights, e.g. when loading a checkpoint.
    pub fn from_weights(kind: GroupKind, features: usize, weights: Vec<f64>) -> Result<Self> {
        if features == 0 || weights.len() != features * kind.dim() {
            return Err(Error::DimensionMismatch {
                expected: features * kind.dim(),
                found: weights.len(),
                context: "RFF weights",
            });
        }
        if let Some(r) = kind.rotation_axis() {
            if weights
                .iter()
                .skip(r)
                .step_by(kind.dim())
                .any(|w| w.fract() != 0.0)
            {
                return Err(invalid("rotation-axis RFF weights must be integers"));
            }
        }
        Ok(Self {
            kind,
            features,
            weights,
        })
    }

    pub fn kind(&self) -> GroupKind {
        self.kind
    }

    /// Number of feature pairs `D`; the embedding has length `2D`.
    pub fn features(&self) -> usize {
        self.features
    }

    pub fn embedding_len(&self) -> usize {
        2 * self.features
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Axes whose `W` column holds exact integers.
    pub fn integer_axes(&self) -> Vec<usize> {
        self.kind.rotation_axis().into_iter().collect()
    }

    pub fn embed(&self, alpha: &[f64], omega: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.embedding_len()];
        self.embed_into(alpha, omega, &mut out)?;
        Ok(out)
    }

    /// Writes `γ_ω(α)` into `out` (length `2D`).
    pub fn embed_into(&self, alpha: &[f64], omega: &[f64], out: &mut [f64]) -> Result<()> {
        let dim = self.kind.dim();
        if alpha.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: alpha.len(),
                context: "embed alpha",
            });
        }
        if omega.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: omega.len(),
                context: "embed omega",
            });
        }
        if out.len() != self.embedding_len() {
            return Err(Error::DimensionMismatch {
                expected: self.embedding_len(),
                found: out.len(),
                context: "embed output",
            });
        }
        let rot = self.kind.rotation_axis();
        let mut scaled = [0.0; 3];
        for axis in 0..dim {
            let turns = if Some(axis) == rot { 1.0 / TAU } else { 1.0 };
            scaled[axis] = alpha[axis] * omega[axis] * turns;
        }
        let norm = (1.0 / self.features as f64).sqrt();
        let (cos_half, sin_half) = out.split_at_mut(self.features);
        for (d, row) in self.weights.chunks_exact(dim).enumerate() {
            let proj: f64 = row.iter().zip(&scaled).map(|(w, a)| w * a).sum();
            let (s, c) = (TAU * proj).sin_cos();
            cos_half[d] = norm * c;
            sin_half[d] = norm * s;
        }
        Ok(())
    }

    /// Embeds a rotation coefficient alone (other axes at zero) after wrapping
    /// it onto the principal branch. `omega_r` must be an integer.
    pub fn embed_rotation_periodic(&self, alpha_r: f64, omega_r: f64) -> Result<Vec<f64>> {
        let axis = self
            .kind
            .rotation_axis()
            .ok_or_else(|| invalid("basis has no rotation axis"))?;
        check_rotation_frequency(omega_r)?;
        let dim = self.kind.dim();
        let mut alpha = vec![0.0; dim];
        let mut omega = vec![0.0; dim];
        alpha[axis] = wrap_angle(alpha_r);
        omega[axis] = omega_r;
        self.embed(&alpha, &omega)
    }
}

fn check_rotation_frequency(w: f64) -> Result<()> {
    if !(w >= 0.0 && w.fract() == 0.0 && w.is_finite()) {
        return Err(invalid(format!(
            "rotation frequency must be a non-negative integer, got {w}"
        )));
    }
    Ok(())
}

/// Filter-space (`omega`) and domain-space (`omega_prime`) frequencies.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrequencySpec {
    pub kind: GroupKind,
    pub omega: Vec<f64>,
    pub omega_prime: Vec<f64>,
}

impl FrequencySpec {
    pub fn new(kind: GroupKind, omega: Vec<f64>, omega_prime: Vec<f64>) -> Result<Self> {
        let spec = Self {
            kind,
            omega,
            omega_prime,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// All frequencies zero: the invariant (pooling) limit.
    pub fn zero(kind: GroupKind) -> Self {
        Self {
            kind,
            omega: vec![0.0; kind.dim()],
            omega_prime: vec![0.0; kind.dim()],
        }
    }

    /// `ω' = 0`: the strictly equivariant limit.
    pub fn strict(kind: GroupKind, omega: Vec<f64>) -> Result<Self> {
        Self::new(kind, omega, vec![0.0; kind.dim()])
    }

    pub fn validate(&self) -> Result<()> {
        let dim = self.kind.dim();
        for (name, v) in [("omega", &self.omega), ("omega_prime", &self.omega_prime)] {
            if v.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: v.len(),
                    context: if name == "omega" {
                        "omega length"
                    } else {
                        "omega_prime length"
                    },
                });
            }
            if v.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
                return Err(invalid(format!("{name} entries must be finite and >= 0")));
            }
            if let Some(r) = self.kind.rotation_axis() {
                check_rotation_frequency(v[r])?;
            }
        }
        Ok(())
    }

    pub fn is_stationary(&self) -> bool {
        self.omega_prime.iter().all(|&w| w == 0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn l2(a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    #[test]
    fn basis_is_deterministic() {
        let a = init_basis(GroupKind::SE2, 32, 11).unwrap();
        let b = init_basis(GroupKind::SE2, 32, 11).unwrap();
        assert_eq!(a, b);
        assert!(init_basis(GroupKind::T2, 0, 0).is_err());
    }

    #[test]
    fn rotation_column_is_integer() {
        let b = init_basis(GroupKind::SE2, 256, 3).unwrap();
        assert_eq!(b.integer_axes(), vec![2]);
        for row in b.weights().chunks(3) {
            assert_eq!(row[2].fract(), 0.0);
            assert!(row[2] != 0.0 && row[2].abs() <= 3.0);
        }
    }

    #[test]
    fn translation_columns_centered() {
        let d = 4096;
        let b = init_basis(GroupKind::T2, d, 5).unwrap();
        let mean = b.weights().iter().sum::<f64>() / (2 * d) as f64;
        assert!(
            mean.abs() < 4.0 / ((2 * d * 2) as f64).sqrt(),
            "mean {mean}"
        );
    }

    #[test]
    fn zero_frequency_gives_constant_embedding() {
        let b = init_basis(GroupKind::SE2, 16, 1).unwrap();
        let e = b.embed(&[3.0, -1.0, 2.0], &[0.0; 3]).unwrap();
        let c = (1.0f64 / 16.0).sqrt();
        assert!(e[..16].iter().all(|&v| v == c));
        assert!(e[16..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn embedding_has_unit_norm() {
        let b = init_basis(GroupKind::SE2, 64, 2).unwrap();
        let e = b.embed(&[0.4, -2.2, 1.1], &[0.7, 0.7, 2.0]).unwrap();
        let n: f64 = e.iter().map(|v| v * v).sum();
        assert!((n - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dimension_errors() {
        let b = init_basis(GroupKind::T2, 8, 0).unwrap();
        assert!(b.embed(&[1.0], &[1.0, 1.0]).is_err());
        assert!(b.embed(&[1.0, 1.0], &[1.0]).is_err());
        assert!(b.embed_rotation_periodic(0.1, 1.0).is_err());
    }

    #[test]
    fn rotation_periodicity() {
        let b = init_basis(GroupKind::SO2, 64, 4).unwrap();
        let e1 = b.embed_rotation_periodic(0.3, 2.0).unwrap();
        let e2 = b.embed_rotation_periodic(0.3 + TAU, 2.0).unwrap();
        assert!(l2(&e1, &e2) < 1e-10);
        // Without wrapping, integer harmonics still agree.
        let e3 = b.embed(&[0.3 + TAU], &[2.0]).unwrap();
        assert!(l2(&e1, &e3) < 1e-10);

        let c1 = b.embed_rotation_periodic(0.1, 0.0).unwrap();
        let c2 = b.embed_rotation_periodic(-2.5, 0.0).unwrap();
        assert_eq!(c1, c2);

        assert!(b.embed_rotation_periodic(0.3, 1.5).is_err());
        assert!(b.embed_rotation_periodic(0.3, -1.0).is_err());
    }

    #[test]
    fn continuity_across_branch_cut() {
        let b = init_basis(GroupKind::SE2, 64, 8).unwrap();
        let eps = 1e-6;
        let lo = b.embed_rotation_periodic(PI - eps, 3.0).unwrap();
        let hi = b.embed_rotation_periodic(-PI + eps, 3.0).unwrap();
        assert!(l2(&lo, &hi) < 1e-4);
    }

    #[test]
    fn zero_axis_is_ignored() {
        let b = init_basis(GroupKind::SE2, 32, 9).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let omega = [1.3, 0.0, 2.0];
        let base = b.embed(&[0.5, 0.0, 1.0], &omega).unwrap();
        for _ in 0..100 {
            let y: f64 = rng.random_range(-50.0..50.0);
            assert_eq!(b.embed(&[0.5, y, 1.0], &omega).unwrap(), base);
        }
    }

    #[test]
    fn frequency_spec_validation() {
        assert!(
            FrequencySpec::new(GroupKind::SE2, vec![1.0, 1.0, 1.0], vec![0.0, 0.0, 2.0]).is_ok()
        );
        assert!(FrequencySpec::new(GroupKind::SE2, vec![1.0, 1.0, 0.5], vec![0.0; 3]).is_err());
        assert!(FrequencySpec::new(GroupKind::T2, vec![-1.0, 1.0], vec![0.0; 2]).is_err());
        assert!(FrequencySpec::new(GroupKind::T2, vec![1.0], vec![0.0; 2]).is_err());
        assert!(FrequencySpec::zero(GroupKind::SO2).is_stationary());
    }
}
