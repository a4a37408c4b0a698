//! Continuous non-stationary kernels `k(v⁻¹u, v) = mask(v⁻¹u) · NN_θ([γ_ω(a_{v⁻¹u}); γ_ω'(a_v)])`.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diffgrad::{matmul_raw, silu, Tape, Tensor, Var};
use crate::error::{invalid, Error, Result};
use crate::group_operator::PixelGrid;
use crate::lie_group::{log_into, GroupElement, GroupKind};
use crate::rff::{FrequencySpec, RffBasis};

/// `E[silu(z)²]` for `z ~ N(0, 1)`, used to keep hidden activations at unit
/// second moment at initialization.
pub const SILU_SECOND_MOMENT: f64 = 0.355_775_519_817_352_3;

/// Default hidden widths of the kernel network.
pub const DEFAULT_HIDDEN: [usize; 2] = [32, 32];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    Silu,
}

/// Affine map `y = x W + b` with `W` stored `in × out`.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    pub weight: Tensor,
    pub bias: Tensor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct KernelNet {
    pub layers: Vec<Linear>,
    pub activation: Activation,
}

/// Builds a network with the given layer widths. Weights are uniform with a
/// fan-in scaled bound, biases start at zero.
///
/// The first layer sees two concatenated unit-norm embeddings, so its bound is
/// chosen for an input of squared norm 2 rather than from the fan-in.
pub fn init_kernel_net(widths: &[usize], seed: u64, scale: f64) -> Result<KernelNet> {
    if widths.len() < 2 || widths.contains(&0) {
        return Err(invalid(format!(
            "kernel net widths must have >= 2 positive entries, got {widths:?}"
        )));
    }
    if !(scale.is_finite() && scale > 0.0) {
        return Err(invalid("kernel net scale must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut layers = Vec::with_capacity(widths.len() - 1);
    for (i, pair) in widths.windows(2).enumerate() {
        let (fan_in, fan_out) = (pair[0], pair[1]);
        let bound = if i == 0 {
            scale * 1.5f64.sqrt()
        } else {
            scale * (3.0 / (fan_in as f64 * SILU_SECOND_MOMENT)).sqrt()
        };
        let w = (0..fan_in * fan_out)
            .map(|_| rng.random_range(-bound..bound))
            .collect();
        layers.push(Linear {
            weight: Tensor::new(vec![fan_in, fan_out], w)?,
            bias: Tensor::zeros(vec![fan_out]),
        });
    }
    Ok(KernelNet {
        layers,
        activation: Activation::Silu,
    })
}

impl KernelNet {
    pub fn input_width(&self) -> usize {
        self.layers[0].weight.shape()[0]
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().expect("non-empty").weight.shape()[1]
    }

    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.input_width()];
        w.extend(self.layers.iter().map(|l| l.weight.shape()[1]));
        w
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.len() + l.bias.len())
            .sum()
    }

    /// Parameters in the order `w0, b0, w1, b1, ...`.
    pub fn params(&self) -> Vec<&Tensor> {
        self.layers
            .iter()
            .flat_map(|l| [&l.weight, &l.bias])
            .collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }

    /// Evaluates `rows` inputs stored row-major in `x`.
    pub fn forward(&self, x: &[f64], rows: usize) -> Result<Vec<f64>> {
        if x.len() != rows * self.input_width() {
            return Err(Error::DimensionMismatch {
                expected: rows * self.input_width(),
                found: x.len(),
                context: "kernel net input",
            });
        }
        let mut h = x.to_vec();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let (k, n) = (layer.weight.shape()[0], layer.weight.shape()[1]);
            h = matmul_raw(&h, layer.weight.data(), rows, k, n);
            for row in h.chunks_exact_mut(n) {
                for (v, b) in row.iter_mut().zip(layer.bias.data()) {
                    *v += b;
                }
            }
            if i < last {
                h.iter_mut().for_each(|v| *v = silu(*v));
            }
        }
        Ok(h)
    }

    /// Records the parameters on `tape` as trainable leaves.
    pub fn register(&self, tape: &mut Tape) -> Vec<Var> {
        self.params()
            .into_iter()
            .map(|p| tape.leaf(p.clone(), true))
            .collect()
    }

    /// Differentiable forward pass; `params` come from [`KernelNet::register`].
    pub fn forward_tape(&self, tape: &mut Tape, params: &[Var], x: Var) -> Result<Var> {
        if params.len() != 2 * self.layers.len() {
            return Err(Error::DimensionMismatch {
                expected: 2 * self.layers.len(),
                found: params.len(),
                context: "kernel net parameter vars",
            });
        }
        let mut h = x;
        let last = self.layers.len() - 1;
        for i in 0..self.layers.len() {
            h = tape.matmul(h, params[2 * i])?;
            h = tape.add_row(h, params[2 * i + 1])?;
            if i < last {
                h = tape.silu(h);
            }
        }
        Ok(h)
    }
}

/// Spatial support of the kernel in filter-space, in pixels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SupportMask {
    HardDisk { radius: f64 },
    SoftGaussian { sigma: f64 },
    None,
}

impl SupportMask {
    /// Disk of diameter 7 pixels.
    pub const DEFAULT: SupportMask = SupportMask::HardDisk { radius: 3.5 };

    pub fn validate(&self) -> Result<()> {
        match *self {
            SupportMask::HardDisk { radius } if !(radius >= 0.0 && radius.is_finite()) => Err(
                invalid(format!("mask radius must be finite and >= 0, got {radius}")),
            ),
            SupportMask::SoftGaussian { sigma } if !(sigma > 0.0 && sigma.is_finite()) => Err(
                invalid(format!("mask sigma must be finite and > 0, got {sigma}")),
            ),
            _ => Ok(()),
        }
    }

    pub fn value(&self, dx: f64, dy: f64) -> f64 {
        let d2 = dx * dx + dy * dy;
        match *self {
            SupportMask::HardDisk { radius } => {
                if d2 <= radius * radius {
                    1.0
                } else {
                    0.0
                }
            }
            SupportMask::SoftGaussian { sigma } => (-d2 / (2.0 * sigma * sigma)).exp(),
            SupportMask::None => 1.0,
        }
    }

    /// Radius beyond which samples are dropped from the neighborhood. The soft
    /// mask is truncated at three standard deviations.
    pub fn reach(&self) -> Option<f64> {
        match *self {
            SupportMask::HardDisk { radius } => Some(radius),
            SupportMask::SoftGaussian { sigma } => Some(3.0 * sigma),
            SupportMask::None => None,
        }
    }
}

/// Fixed projections for the stationary and the nonstationary argument.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BasisPair {
    pub stationary: RffBasis,
    pub nonstationary: RffBasis,
}

impl BasisPair {
    pub fn new(stationary: RffBasis, nonstationary: RffBasis) -> Result<Self> {
        if stationary.kind() != nonstationary.kind() {
            return Err(Error::KindMismatch {
                expected: stationary.kind(),
                found: nonstationary.kind(),
            });
        }
        Ok(Self {
            stationary,
            nonstationary,
        })
    }

    pub fn kind(&self) -> GroupKind {
        self.stationary.kind()
    }

    /// Length of `[γ_ω; γ_ω']`.
    pub fn input_width(&self) -> usize {
        self.stationary.embedding_len() + self.nonstationary.embedding_len()
    }

    /// Embeds `(stationary, nonstationary)` pairs into a `rows × input_width` matrix.
    pub fn embed_pairs(
        &self,
        freq: &FrequencySpec,
        pairs: &[(GroupElement, GroupElement)],
    ) -> Result<Tensor> {
        let kind = self.kind();
        if freq.kind != kind {
            return Err(Error::KindMismatch {
                expected: kind,
                found: freq.kind,
            });
        }
        let width = self.input_width();
        let split = self.stationary.embedding_len();
        let mut data = vec![0.0; pairs.len() * width];
        let mut alpha = Vec::with_capacity(3);
        for ((s, n), row) in pairs.iter().zip(data.chunks_exact_mut(width)) {
            for g in [s, n] {
                if g.kind() != kind {
                    return Err(Error::KindMismatch {
                        expected: kind,
                        found: g.kind(),
                    });
                }
            }
            let (head, tail) = row.split_at_mut(split);
            log_into(s, &mut alpha);
            self.stationary.embed_into(&alpha, &freq.omega, head)?;
            log_into(n, &mut alpha);
            self.nonstationary
                .embed_into(&alpha, &freq.omega_prime, tail)?;
        }
        Tensor::new(vec![pairs.len(), width], data)
    }
}

/// Kernel bundle: embedding bases, network and channel structure.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelField {
    pub bases: BasisPair,
    pub net: KernelNet,
    pub c_in: usize,
    pub c_out: usize,
}

impl KernelField {
    pub fn new(bases: BasisPair, net: KernelNet, c_in: usize, c_out: usize) -> Result<Self> {
        if net.input_width() != bases.input_width() {
            return Err(Error::DimensionMismatch {
                expected: bases.input_width(),
                found: net.input_width(),
                context: "kernel net input width vs embeddings",
            });
        }
        if net.output_width() != c_in * c_out {
            return Err(Error::DimensionMismatch {
                expected: c_in * c_out,
                found: net.output_width(),
                context: "kernel net output width vs channels",
            });
        }
        Ok(Self {
            bases,
            net,
            c_in,
            c_out,
        })
    }

    /// Fresh field with `features` RFF pairs per embedding and the default
    /// hidden widths. Seeds for the two bases and the network are derived from `seed`.
    pub fn init(
        kind: GroupKind,
        features: usize,
        c_in: usize,
        c_out: usize,
        seed: u64,
    ) -> Result<Self> {
        let bases = BasisPair::new(
            crate::rff::init_basis(kind, features, seed.wrapping_mul(3).wrapping_add(1))?,
            crate::rff::init_basis(kind, features, seed.wrapping_mul(3).wrapping_add(2))?,
        )?;
        let mut widths = vec![bases.input_width()];
        widths.extend(DEFAULT_HIDDEN);
        widths.push(c_in * c_out);
        let net = init_kernel_net(&widths, seed.wrapping_mul(3).wrapping_add(3), 1.0)?;
        Self::new(bases, net, c_in, c_out)
    }

    pub fn kind(&self) -> GroupKind {
        self.bases.kind()
    }

    /// Masked kernel matrices for many argument pairs, `rows × (c_out·c_in)`.
    pub fn eval_rows(
        &self,
        freq: &FrequencySpec,
        mask: &SupportMask,
        pairs: &[(GroupElement, GroupElement)],
    ) -> Result<Tensor> {
        let emb = self.bases.embed_pairs(freq, pairs)?;
        let mut out = self.net.forward(emb.data(), pairs.len())?;
        let width = self.c_in * self.c_out;
        for ((s, _), row) in pairs.iter().zip(out.chunks_exact_mut(width)) {
            let (tx, ty) = s.translation();
            let m = mask.value(tx, ty);
            row.iter_mut().for_each(|v| *v *= m);
        }
        Tensor::new(vec![pairs.len(), width], out)
    }
}

/// `k(stationary, nonstationary)` as a `c_out × c_in` matrix.
pub fn eval_kernel(
    stationary: &GroupElement,
    nonstationary: &GroupElement,
    freq: &FrequencySpec,
    field: &KernelField,
    mask: &SupportMask,
) -> Result<Tensor> {
    let rows = field.eval_rows(freq, mask, &[(*stationary, *nonstationary)])?;
    rows.reshaped(vec![field.c_out, field.c_in])
}

/// Rasterized kernel values, indexed `[rotation][probe][channel pair][row][col]`.
#[derive(Clone, Debug, PartialEq)]
pub struct FilterBank {
    pub n_rotations: usize,
    pub n_probes: usize,
    pub n_pairs: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl FilterBank {
    pub fn slice(&self, rotation: usize, probe: usize, pair: usize) -> &[f64] {
        let hw = self.height * self.width;
        let start = ((rotation * self.n_probes + probe) * self.n_pairs + pair) * hw;
        &self.data[start..start + hw]
    }

    /// All channel pairs for one `(rotation, probe)`.
    pub fn probe_slab(&self, rotation: usize, probe: usize) -> &[f64] {
        let len = self.n_pairs * self.height * self.width;
        let start = (rotation * self.n_probes + probe) * len;
        &self.data[start..start + len]
    }

    /// Writes one grayscale PPM per slice, min-max normalized per slice, plus a
    /// `normalization.txt` sidecar with `file min max` lines.
    pub fn write_ppm(&self, dir: &Path, prefix: &str) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        let mut sidecar = String::from("# file min max\n");
        for r in 0..self.n_rotations {
            for p in 0..self.n_probes {
                for c in 0..self.n_pairs {
                    let s = self.slice(r, p, c);
                    let lo = s.iter().copied().fold(f64::INFINITY, f64::min);
                    let hi = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let name = format!("{prefix}_r{r}_p{p}_c{c}.ppm");
                    let path = dir.join(&name);
                    write_gray_ppm(&path, self.width, self.height, s, lo, hi)?;
                    sidecar.push_str(&format!("{name} {lo:e} {hi:e}\n"));
                    written.push(path);
                }
            }
        }
        fs::write(dir.join("normalization.txt"), sidecar)?;
        Ok(written)
    }
}

/// Binary PPM (P6) with equal RGB channels; values map linearly from `[lo, hi]` to `[0, 255]`.
pub fn write_gray_ppm(
    path: &Path,
    width: usize,
    height: usize,
    values: &[f64],
    lo: f64,
    hi: f64,
) -> Result<()> {
    let mut bytes = format!("P6\n{width} {height}\n255\n").into_bytes();
    let span = hi - lo;
    for &v in values {
        let g = if span > 0.0 {
            (((v - lo) / span) * 255.0).round().clamp(0.0, 255.0) as u8
        } else {
            0
        };
        bytes.extend_from_slice(&[g, g, g]);
    }
    fs::write(path, bytes)?;
    Ok(())
}

/// Evaluates the kernel on `grid` (as stationary translations) for every
/// rotation and nonstationary probe.
///
/// For T(2) the rotation list is ignored and a single slice is produced; for
/// SO(2) the grid only carries the mask.
pub fn render_filter_bank(
    field: &KernelField,
    freq: &FrequencySpec,
    mask: &SupportMask,
    grid: &PixelGrid,
    rotations: &[GroupElement],
    probes: &[GroupElement],
) -> Result<FilterBank> {
    let kind = field.kind();
    let rotations: Vec<f64> = match kind {
        GroupKind::T2 => vec![0.0],
        _ if rotations.is_empty() => vec![0.0],
        _ => rotations.iter().map(|r| r.angle()).collect(),
    };
    let mut data =
        Vec::with_capacity(rotations.len() * probes.len() * grid.len() * field.c_in * field.c_out);
    for &angle in &rotations {
        for probe in probes {
            let pairs: Vec<_> = (0..grid.len())
                .map(|p| {
                    let (x, y) = grid.position(p);
                    let s = match kind {
                        GroupKind::T2 => GroupElement::t2(x, y),
                        GroupKind::SO2 => GroupElement::so2(angle),
                        GroupKind::SE2 => GroupElement::se2(x, y, angle),
                    };
                    (s, *probe)
                })
                .collect();
            let mut vals = field
                .eval_rows(freq, &SupportMask::None, &pairs)?
                .into_data();
            let width = field.c_in * field.c_out;
            // channel-major layout: one raster per channel pair
            let mut slab = vec![0.0; vals.len()];
            for (p, (x, y)) in (0..grid.len()).map(|p| (p, grid.position(p))) {
                let m = mask.value(x, y);
                for c in 0..width {
                    vals[p * width + c] *= m;
                    slab[c * grid.len() + p] = vals[p * width + c];
                }
            }
            data.extend(slab);
        }
    }
    Ok(FilterBank {
        n_rotations: rotations.len(),
        n_probes: probes.len(),
        n_pairs: field.c_in * field.c_out,
        height: grid.height,
        width: grid.width,
        data,
    })
}
