//! Sample-based non-stationary group integral operator
//! `h(u) = norm · Σ_{v ∈ N(u)} k(v⁻¹u, v) f(v)`, with lifting of images to SE(2)
//! signals and projection back.
//!
//! Samples are a centred pixel grid, optionally crossed with a list of rotations.
//! Sample `i` is pixel `i / n_rot`, rotation `i % n_rot`.

use std::collections::HashMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::diffgrad::{ContractionPattern, Tape, Tensor, Var};
use crate::error::{invalid, Error, Result};
use crate::kernel_field::{KernelField, SupportMask};
use crate::lie_group::{
    compose, inverse, rotate_vector, wrap_angle, GroupElement, GroupKind, RotationMode,
};
use crate::rff::FrequencySpec;

/// Tolerance used to match transformed sample positions back onto the lattice.
const LATTICE_TOL: f64 = 1e-9;

/// `height × width` lattice centred on the origin, `spacing` pixels apart.
/// Row index grows with `y`, column index with `x`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PixelGrid {
    pub height: usize,
    pub width: usize,
    pub spacing: f64,
}

impl PixelGrid {
    pub fn new(height: usize, width: usize, spacing: f64) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(invalid("pixel grid must be non-empty"));
        }
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(invalid(format!(
                "grid spacing must be positive, got {spacing}"
            )));
        }
        Ok(Self {
            height,
            width,
            spacing,
        })
    }

    pub fn len(&self) -> usize {
        self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.width + col
    }

    pub fn row_col(&self, p: usize) -> (usize, usize) {
        (p / self.width, p % self.width)
    }

    pub fn position(&self, p: usize) -> (f64, f64) {
        let (row, col) = self.row_col(p);
        self.position_rc(row as f64, col as f64)
    }

    fn position_rc(&self, row: f64, col: f64) -> (f64, f64) {
        (
            (col - (self.width as f64 - 1.0) / 2.0) * self.spacing,
            (row - (self.height as f64 - 1.0) / 2.0) * self.spacing,
        )
    }

    /// Fractional `(row, col)` of a position.
    pub fn fractional_index(&self, (x, y): (f64, f64)) -> (f64, f64) {
        (
            y / self.spacing + (self.height as f64 - 1.0) / 2.0,
            x / self.spacing + (self.width as f64 - 1.0) / 2.0,
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Padding {
    Circular,
    Zero,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Projection {
    Mean,
    Max,
}

/// Dense `height × width × channels` image, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl Image {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(invalid("image must be non-empty"));
        }
        if data.len() != height * width * channels {
            return Err(Error::DimensionMismatch {
                expected: height * width * channels,
                found: data.len(),
                context: "image data",
            });
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn get(&self, row: usize, col: usize, c: usize) -> f64 {
        self.data[(row * self.width + col) * self.channels + c]
    }

    /// Bilinear sample at fractional `(row, col)`; zero outside the image.
    pub fn sample_bilinear(&self, row: f64, col: f64, c: usize) -> f64 {
        let (r0, c0) = (row.floor(), col.floor());
        let (fr, fc) = (row - r0, col - c0);
        let at = |r: f64, cc: f64| -> f64 {
            if r < 0.0 || cc < 0.0 || r >= self.height as f64 || cc >= self.width as f64 {
                0.0
            } else {
                self.get(r as usize, cc as usize, c)
            }
        };
        let mut v = 0.0;
        for (dr, wr) in [(0.0, 1.0 - fr), (1.0, fr)] {
            for (dc, wc) in [(0.0, 1.0 - fc), (1.0, fc)] {
                let w = wr * wc;
                if w != 0.0 {
                    v += w * at(r0 + dr, c0 + dc);
                }
            }
        }
        v
    }

    /// `(g · I)(p) = I(g⁻¹ p)` on the centred grid, by bilinear resampling.
    /// Quarter turns and integer shifts of a square image are exact.
    pub fn transform(&self, g: &GroupElement, spacing: f64) -> Result<Image> {
        let grid = PixelGrid::new(self.height, self.width, spacing)?;
        let gi = inverse(g);
        let mut data = vec![0.0; self.data.len()];
        for p in 0..grid.len() {
            let src = crate::lie_group::act_on_point(&gi, grid.position(p));
            let (row, col) = grid.fractional_index(src);
            let (row, col) = (snap(row), snap(col));
            for c in 0..self.channels {
                data[p * self.channels + c] = self.sample_bilinear(row, col, c);
            }
        }
        Image::new(self.height, self.width, self.channels, data)
    }

    /// 180° rotation as exact index reversal.
    pub fn rotate_180(&self) -> Image {
        let mut data = Vec::with_capacity(self.data.len());
        for px in self.data.chunks_exact(self.channels).rev() {
            data.extend_from_slice(px);
        }
        Image {
            data,
            ..self.clone()
        }
    }
}

fn snap(v: f64) -> f64 {
    let r = v.round();
    if (v - r).abs() < LATTICE_TOL {
        r
    } else {
        v
    }
}

/// The evaluation set of a signal: a grid crossed with a rotation list.
///
/// T(2) layouts carry no rotations; SO(2) layouts use a `1 × 1` grid.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleLayout {
    pub kind: GroupKind,
    pub grid: PixelGrid,
    pub rotations: Vec<GroupElement>,
}

impl SampleLayout {
    pub fn new(kind: GroupKind, grid: PixelGrid, rotations: Vec<GroupElement>) -> Result<Self> {
        match kind {
            GroupKind::T2 if !rotations.is_empty() => {
                return Err(invalid("T(2) layouts carry no rotation samples"));
            }
            GroupKind::SO2 if grid.len() != 1 => {
                return Err(invalid("SO(2) layouts use a 1x1 grid"))
            }
            GroupKind::SO2 | GroupKind::SE2 if rotations.is_empty() => {
                return Err(invalid("rotation list must be non-empty"));
            }
            _ => {}
        }
        if rotations.iter().any(|r| r.kind() != GroupKind::SO2) {
            return Err(invalid("rotation samples must be SO(2) elements"));
        }
        Ok(Self {
            kind,
            grid,
            rotations,
        })
    }

    pub fn t2(grid: PixelGrid) -> Self {
        Self {
            kind: GroupKind::T2,
            grid,
            rotations: Vec::new(),
        }
    }

    pub fn n_rot(&self) -> usize {
        self.rotations.len().max(1)
    }

    pub fn len(&self) -> usize {
        self.grid.len() * self.n_rot()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn angle(&self, r: usize) -> f64 {
        self.rotations.get(r).map_or(0.0, |g| g.angle())
    }

    pub fn element(&self, i: usize) -> GroupElement {
        let (p, r) = (i / self.n_rot(), i % self.n_rot());
        let (x, y) = self.grid.position(p);
        GroupElement::from_parts(self.kind, x, y, self.angle(r))
    }

    pub fn elements(&self) -> Vec<GroupElement> {
        (0..self.len()).map(|i| self.element(i)).collect()
    }

    fn rotation_index(&self, angle: f64) -> Option<usize> {
        if self.rotations.is_empty() {
            return (wrap_angle(angle).abs() < LATTICE_TOL).then_some(0);
        }
        self.rotations
            .iter()
            .position(|r| wrap_angle(r.angle() - angle).abs() < LATTICE_TOL)
    }

    /// Index of the sample at `g`, wrapping translations around the grid when
    /// `padding` is circular. `None` if `g` falls outside the sample set.
    pub fn locate(&self, g: &GroupElement, padding: Padding) -> Option<usize> {
        let (row, col) = self.grid.fractional_index(g.translation());
        let (ri, ci) = (row.round(), col.round());
        if (row - ri).abs() > LATTICE_TOL || (col - ci).abs() > LATTICE_TOL {
            return None;
        }
        let (h, w) = (self.grid.height as i64, self.grid.width as i64);
        let (mut ri, mut ci) = (ri as i64, ci as i64);
        match padding {
            Padding::Circular => {
                ri = ri.rem_euclid(h);
                ci = ci.rem_euclid(w);
            }
            Padding::Zero if ri < 0 || ci < 0 || ri >= h || ci >= w => return None,
            Padding::Zero => {}
        }
        let r = self.rotation_index(g.angle())?;
        Some(self.grid.index(ri as usize, ci as usize) * self.n_rot() + r)
    }
}

/// A sampled function `f: G → R^C`.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupSignal {
    pub layout: SampleLayout,
    pub channels: usize,
    /// `n_samples × channels`, row-major.
    pub values: Vec<f64>,
}

impl GroupSignal {
    pub fn new(layout: SampleLayout, channels: usize, values: Vec<f64>) -> Result<Self> {
        if channels == 0 {
            return Err(invalid("signal needs at least one channel"));
        }
        if values.len() != layout.len() * channels {
            return Err(Error::DimensionMismatch {
                expected: layout.len() * channels,
                found: values.len(),
                context: "signal values",
            });
        }
        Ok(Self {
            layout,
            channels,
            values,
        })
    }

    /// A T(2) signal holding the image pixels as samples.
    pub fn from_image(image: &Image, spacing: f64) -> Result<Self> {
        let grid = PixelGrid::new(image.height, image.width, spacing)?;
        Self::new(SampleLayout::t2(grid), image.channels, image.data.clone())
    }

    pub fn kind(&self) -> GroupKind {
        self.layout.kind
    }

    pub fn len(&self) -> usize {
        self.layout.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        &self.values[i * self.channels..(i + 1) * self.channels]
    }

    /// Left action `(g · f)(u) = f(g⁻¹u)`, defined when `g⁻¹` maps the sample set
    /// onto itself (integer shifts, quarter turns of a square grid, rotations in
    /// the rotation list). Translations wrap around under circular padding and
    /// read zeros otherwise.
    pub fn act(&self, g: &GroupElement, padding: Padding) -> Result<GroupSignal> {
        let g = lift_element(g, self.kind())?;
        let gi = inverse(&g);
        let mut values = vec![0.0; self.values.len()];
        for i in 0..self.len() {
            let src = compose(&gi, &self.layout.element(i))?;
            match self.layout.locate(&src, padding) {
                Some(j) => values[i * self.channels..(i + 1) * self.channels]
                    .copy_from_slice(self.sample(j)),
                None if padding == Padding::Zero
                    && self.layout.rotation_index(src.angle()).is_some() => {}
                None => {
                    return Err(invalid(format!(
                        "action {g:?} does not map the sample set onto itself"
                    )))
                }
            }
        }
        GroupSignal::new(self.layout.clone(), self.channels, values)
    }

    /// Circular shift by whole pixels.
    pub fn shift(&self, dx: i64, dy: i64) -> Result<GroupSignal> {
        let s = self.layout.grid.spacing;
        let t = GroupElement::from_parts(self.kind(), dx as f64 * s, dy as f64 * s, 0.0);
        self.act(&t, Padding::Circular)
    }

    /// Relative L2 distance `‖self − other‖ / max(‖other‖, 1e-12)`.
    pub fn relative_error(&self, reference: &GroupSignal) -> f64 {
        relative_l2(&self.values, &reference.values)
    }
}

pub fn relative_l2(a: &[f64], reference: &[f64]) -> f64 {
    let num: f64 = a
        .iter()
        .zip(reference)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt();
    let den: f64 = reference.iter().map(|y| y * y).sum::<f64>().sqrt();
    num / den.max(1e-12)
}

/// Embeds a plane or rotation element into `kind`, e.g. a pure rotation as an
/// SE(2) element with zero translation.
fn lift_element(g: &GroupElement, kind: GroupKind) -> Result<GroupElement> {
    if g.kind() == kind {
        return Ok(*g);
    }
    let (tx, ty) = g.translation();
    let angle = g.angle();
    let fits = match kind {
        GroupKind::SE2 => true,
        GroupKind::T2 => angle == 0.0,
        GroupKind::SO2 => tx == 0.0 && ty == 0.0,
    };
    if !fits {
        return Err(Error::KindMismatch {
            expected: kind,
            found: g.kind(),
        });
    }
    Ok(GroupElement::from_parts(kind, tx, ty, angle))
}

/// Lifts an image to SE(2) by replicating every pixel over the rotation samples.
pub fn lift_image(image: &Image, rotations: &[GroupElement], spacing: f64) -> Result<GroupSignal> {
    if rotations.is_empty() {
        return Err(invalid("lifting needs at least one rotation"));
    }
    let grid = PixelGrid::new(image.height, image.width, spacing)?;
    let layout = SampleLayout::new(GroupKind::SE2, grid, rotations.to_vec())?;
    let c = image.channels;
    let mut values = Vec::with_capacity(layout.len() * c);
    for px in image.data.chunks_exact(c) {
        for _ in 0..rotations.len() {
            values.extend_from_slice(px);
        }
    }
    GroupSignal::new(layout, c, values)
}

/// Reduces an SE(2) signal over its rotation samples.
pub fn project_signal(f: &GroupSignal, mode: Projection) -> Result<Image> {
    if f.kind() != GroupKind::SE2 {
        return Err(invalid(
            "projection needs an SE(2) signal factored as grid x rotations",
        ));
    }
    let (n_rot, c) = (f.layout.n_rot(), f.channels);
    let mut data = Vec::with_capacity(f.layout.grid.len() * c);
    for p in 0..f.layout.grid.len() {
        for ch in 0..c {
            let vals = (0..n_rot).map(|r| f.values[(p * n_rot + r) * c + ch]);
            data.push(match mode {
                Projection::Mean => vals.sum::<f64>() / n_rot as f64,
                Projection::Max => vals.fold(f64::NEG_INFINITY, f64::max),
            });
        }
    }
    Image::new(f.layout.grid.height, f.layout.grid.width, c, data)
}

/// Operator settings for one layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperatorConfig {
    pub freq: FrequencySpec,
    pub mask: SupportMask,
    pub n_rotation_samples: usize,
    pub rotation_mode: RotationMode,
    pub padding: Padding,
    /// Output scale; `None` means `1 / (nominal neighborhood size · √C_in)`.
    pub normalization: Option<f64>,
}

impl OperatorConfig {
    pub fn new(freq: FrequencySpec, mask: SupportMask) -> Self {
        let n = if freq.kind.has_rotation() { 4 } else { 1 };
        Self {
            freq,
            mask,
            n_rotation_samples: n,
            rotation_mode: RotationMode::CyclicDeterministic,
            padding: Padding::Zero,
            normalization: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.freq.validate()?;
        self.mask.validate()?;
        if self.n_rotation_samples == 0 {
            return Err(invalid("n_rotation_samples must be >= 1"));
        }
        if let Some(n) = self.normalization {
            if !n.is_finite() {
                return Err(invalid("normalization must be finite"));
            }
        }
        Ok(())
    }
}

/// Lattice offsets `(dx, dy)` with `‖(dx, dy)‖ · spacing` inside the mask
/// support, in row-major order (`dy` outer). `None` for unbounded support.
pub fn enumerate_offsets(mask: &SupportMask, spacing: f64) -> Option<Vec<(i64, i64)>> {
    let reach = mask.reach()?;
    let r2 = reach * reach;
    let n = (reach / spacing).floor() as i64;
    let mut out = Vec::new();
    for dy in -n..=n {
        for dx in -n..=n {
            let (x, y) = (dx as f64 * spacing, dy as f64 * spacing);
            if x * x + y * y <= r2 {
                out.push((dx, dy));
            }
        }
    }
    Some(out)
}

/// All grid offsets, for unbounded support: every pixel exactly once under
/// circular padding, every in-range displacement under zero padding.
fn full_offsets(grid: &PixelGrid, padding: Padding) -> Vec<(i64, i64)> {
    let range = |n: usize| -> Vec<i64> {
        let n = n as i64;
        match padding {
            Padding::Circular => (-(n - 1) / 2..=n / 2).collect(),
            Padding::Zero => (-(n - 1)..=n - 1).collect(),
        }
    };
    let (xs, ys) = (range(grid.width), range(grid.height));
    ys.iter()
        .flat_map(|&dy| xs.iter().map(move |&dx| (dx, dy)))
        .collect()
}

/// The operator compiled for one sample layout: which `(input, kernel row)`
/// pairs feed each output, and the kernel arguments of every distinct row.
#[derive(Clone, Debug)]
pub struct Stencil {
    pub layout: SampleLayout,
    pub pattern: Arc<ContractionPattern>,
    /// `(v⁻¹u, v)` per kernel row; nonstationary axes with zero frequency are zeroed.
    pub pairs: Vec<(GroupElement, GroupElement)>,
    pub mask_values: Vec<f64>,
    /// Neighborhood size of an interior sample.
    pub nominal: usize,
}

pub fn build_stencil(layout: &SampleLayout, cfg: &OperatorConfig, c_in: usize) -> Result<Stencil> {
    cfg.validate()?;
    let kind = layout.kind;
    if cfg.freq.kind != kind {
        return Err(Error::KindMismatch {
            expected: kind,
            found: cfg.freq.kind,
        });
    }
    if kind.has_rotation() && layout.rotations.len() != cfg.n_rotation_samples {
        return Err(Error::DimensionMismatch {
            expected: cfg.n_rotation_samples,
            found: layout.rotations.len(),
            context: "rotation samples in signal vs config",
        });
    }
    let grid = layout.grid;
    let offsets = if kind == GroupKind::SO2 {
        vec![(0, 0)]
    } else {
        enumerate_offsets(&cfg.mask, grid.spacing)
            .unwrap_or_else(|| full_offsets(&grid, cfg.padding))
    };
    let n_rot = layout.n_rot();
    let nominal = offsets.len() * n_rot;
    let scale = cfg
        .normalization
        .unwrap_or(1.0 / (nominal.max(1) as f64 * (c_in as f64).sqrt()));

    // axes of the nonstationary argument that reach the kernel
    let dim = kind.dim();
    let active: Vec<bool> = cfg.freq.omega_prime.iter().map(|&w| w != 0.0).collect();
    let keep = |g: &GroupElement| -> GroupElement {
        let (tx, ty) = g.translation();
        let mut c = match kind {
            GroupKind::T2 => [tx, ty, 0.0],
            GroupKind::SO2 => [0.0, 0.0, g.angle()],
            GroupKind::SE2 => [tx, ty, g.angle()],
        };
        for (axis, &on) in active.iter().enumerate().take(dim) {
            let slot = if kind == GroupKind::SO2 { 2 } else { axis };
            if !on {
                c[slot] = 0.0;
            }
        }
        GroupElement::from_parts(kind, c[0], c[1], c[2])
    };

    let mut rows: HashMap<[u64; 6], usize> = HashMap::new();
    let mut pairs = Vec::new();
    let mut mask_values = Vec::new();
    let mut pattern = ContractionPattern::new(layout.len(), 0, scale);
    let (h, w) = (grid.height as i64, grid.width as i64);
    let mut entries = Vec::with_capacity(nominal);
    for u in 0..layout.len() {
        let (p_u, r_u) = (u / n_rot, u % n_rot);
        let (row_u, col_u) = grid.row_col(p_u);
        let theta_u = layout.angle(r_u);
        entries.clear();
        for &(dx, dy) in &offsets {
            let (mut row_v, mut col_v) = (row_u as i64 - dy, col_u as i64 - dx);
            match cfg.padding {
                Padding::Circular => {
                    row_v = row_v.rem_euclid(h);
                    col_v = col_v.rem_euclid(w);
                }
                Padding::Zero if row_v < 0 || col_v < 0 || row_v >= h || col_v >= w => continue,
                Padding::Zero => {}
            }
            let d = (dx as f64 * grid.spacing, dy as f64 * grid.spacing);
            let m = cfg.mask.value(d.0, d.1);
            if m == 0.0 {
                continue;
            }
            let p_v = grid.index(row_v as usize, col_v as usize);
            for r_v in 0..n_rot {
                let theta_v = layout.angle(r_v);
                let stationary = match kind {
                    GroupKind::T2 => GroupElement::t2(d.0, d.1),
                    GroupKind::SO2 => GroupElement::so2(theta_u - theta_v),
                    GroupKind::SE2 => {
                        let (rx, ry) = rotate_vector(-theta_v, d);
                        GroupElement::se2(rx, ry, theta_u - theta_v)
                    }
                };
                let v = p_v * n_rot + r_v;
                let nonstationary = keep(&layout.element(v));
                let key = key_of(&stationary, &nonstationary);
                let next = pairs.len();
                let row = *rows.entry(key).or_insert(next);
                if row == next {
                    pairs.push((stationary, nonstationary));
                    mask_values.push(m);
                }
                entries.push((v, row));
            }
        }
        if entries.is_empty() {
            return Err(Error::EmptyNeighborhood { sample: u });
        }
        pattern.set_n_rows(pairs.len());
        pattern.push_output(entries.iter().copied());
    }
    pattern.set_n_rows(pairs.len());
    Ok(Stencil {
        layout: layout.clone(),
        pattern: Arc::new(pattern),
        pairs,
        mask_values,
        nominal,
    })
}

fn key_of(s: &GroupElement, n: &GroupElement) -> [u64; 6] {
    let (sx, sy) = s.translation();
    let (nx, ny) = n.translation();
    // +0.0 and -0.0 must share a row
    let b = |v: f64| (v + 0.0).to_bits();
    [b(sx), b(sy), b(s.angle()), b(nx), b(ny), b(n.angle())]
}

impl Stencil {
    pub fn n_rows(&self) -> usize {
        self.pairs.len()
    }

    /// Kernel input features, `rows × 4D`. Independent of the network weights.
    pub fn embeddings(&self, field: &KernelField, freq: &FrequencySpec) -> Result<Tensor> {
        field.bases.embed_pairs(freq, &self.pairs)
    }

    /// Masked kernel values per row, `rows × (c_out·c_in)`.
    pub fn kernel(&self, field: &KernelField, freq: &FrequencySpec) -> Result<Tensor> {
        let emb = self.embeddings(field, freq)?;
        let mut k = field.net.forward(emb.data(), self.n_rows())?;
        let width = field.c_in * field.c_out;
        for (row, m) in k.chunks_exact_mut(width).zip(&self.mask_values) {
            row.iter_mut().for_each(|v| *v *= m);
        }
        Tensor::new(vec![self.n_rows(), width], k)
    }

    /// Differentiable application to a `B × n_samples × c_in` input, given the
    /// cached embeddings and the registered network parameters.
    pub fn apply_tape(
        &self,
        tape: &mut Tape,
        field: &KernelField,
        net_params: &[Var],
        embeddings: Var,
        input: Var,
    ) -> Result<Var> {
        let k = field.net.forward_tape(tape, net_params, embeddings)?;
        let k = if self.mask_values.iter().all(|&m| m == 1.0) {
            k
        } else {
            tape.scale_rows(k, self.mask_values.clone())?
        };
        tape.contract(k, input, self.pattern.clone())
    }
}

/// Applies the operator to a single signal.
pub fn apply_operator(
    f: &GroupSignal,
    cfg: &OperatorConfig,
    field: &KernelField,
) -> Result<GroupSignal> {
    if field.kind() != f.kind() {
        return Err(Error::KindMismatch {
            expected: f.kind(),
            found: field.kind(),
        });
    }
    if f.channels != field.c_in {
        return Err(Error::DimensionMismatch {
            expected: field.c_in,
            found: f.channels,
            context: "signal channels vs kernel input channels",
        });
    }
    let stencil = build_stencil(&f.layout, cfg, field.c_in)?;
    let k = stencil.kernel(field, &cfg.freq)?;
    let out = stencil
        .pattern
        .forward(k.data(), &f.values, 1, field.c_in, field.c_out)?;
    GroupSignal::new(f.layout.clone(), field.c_out, out)
}
