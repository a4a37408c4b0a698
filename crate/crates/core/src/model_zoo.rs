//! Classifiers for the rows of the frequency table: strict and soft T(2)-CNNs
//! and strict and soft SE(2)-CNNs.
//!
//! Layout: lift (SE(2) only) → blocks of `operator → channel norm → SiLU` →
//! projection over rotations (SE(2) only) → spatial mean → linear head.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diffgrad::{Checkpoint, Reduce, Tape, Tensor, Var};
use crate::error::{invalid, Error, Result};
use crate::group_operator::{
    build_stencil, OperatorConfig, Padding, PixelGrid, Projection, SampleLayout, Stencil,
};
use crate::kernel_field::{init_kernel_net, BasisPair, KernelField, SupportMask, DEFAULT_HIDDEN};
use crate::lie_group::{sample_rotations, GroupKind, RotationMode};
use crate::rff::{init_basis, FrequencySpec, RffBasis, DEFAULT_FEATURES};

const CHECKPOINT_FORMAT: &str = "softgconv-model-v1";

/// One row of the frequency table.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelRow {
    /// Regular continuous CNN.
    T2Strict,
    T2Soft,
    Se2Strict,
    Se2SoftRotation,
    Se2SoftTranslation,
    Se2SoftBoth,
}

impl ModelRow {
    pub const ALL: [ModelRow; 6] = [
        ModelRow::T2Strict,
        ModelRow::Se2Strict,
        ModelRow::T2Soft,
        ModelRow::Se2SoftRotation,
        ModelRow::Se2SoftTranslation,
        ModelRow::Se2SoftBoth,
    ];

    pub fn kind(self) -> GroupKind {
        match self {
            ModelRow::T2Strict | ModelRow::T2Soft => GroupKind::T2,
            _ => GroupKind::SE2,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            ModelRow::T2Strict => "T(2)-CNN",
            ModelRow::Se2Strict => "SE(2)-CNN",
            ModelRow::T2Soft => "soft T(2)-CNN",
            ModelRow::Se2SoftRotation => "soft SE(2)-CNN [soft in SO(2)]",
            ModelRow::Se2SoftTranslation => "soft SE(2)-CNN [soft in T(2)]",
            ModelRow::Se2SoftBoth => "soft SE(2)-CNN [soft in T(2) and SO(2)]",
        }
    }

    /// Which `ω'` entries this row may set; the rest are pinned to zero.
    pub fn omega_prime_active(self) -> Vec<bool> {
        match self {
            ModelRow::T2Strict => vec![false, false],
            ModelRow::T2Soft => vec![true, true],
            ModelRow::Se2Strict => vec![false, false, false],
            ModelRow::Se2SoftRotation => vec![false, false, true],
            ModelRow::Se2SoftTranslation => vec![true, true, false],
            ModelRow::Se2SoftBoth => vec![true, true, true],
        }
    }

    pub fn is_soft(self) -> bool {
        self.omega_prime_active().iter().any(|&a| a)
    }

    /// The strict row with the same group.
    pub fn strict_counterpart(self) -> ModelRow {
        match self.kind() {
            GroupKind::T2 => ModelRow::T2Strict,
            _ => ModelRow::Se2Strict,
        }
    }
}

/// Architecture and symmetry settings; serialized as JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub row: ModelRow,
    /// Side length of the (square) input images.
    pub image_size: usize,
    /// Average-pooling factor applied to the input; the grid spacing equals it.
    pub downsample: usize,
    /// Output channels per block.
    pub widths: Vec<usize>,
    pub n_classes: usize,
    pub rff_features: usize,
    pub kernel_hidden: Vec<usize>,
    /// Filter-space frequencies, shared by all layers.
    pub omega: Vec<f64>,
    /// Domain-space frequencies, shared by all layers.
    pub omega_prime: Vec<f64>,
    /// Per-layer frequency override; when set it replaces the shared pair.
    #[serde(default)]
    pub layer_freqs: Option<Vec<FrequencySpec>>,
    pub mask: SupportMask,
    pub n_rotation_samples: usize,
    pub rotation_mode: RotationMode,
    pub padding: Padding,
    pub projection: Projection,
}

impl ModelSpec {
    /// Full-size default: 28×28 input, three blocks of widths 16, 32, 32.
    pub fn default_for(row: ModelRow) -> Self {
        let kind = row.kind();
        let omega = match kind {
            GroupKind::T2 => vec![0.25, 0.25],
            _ => vec![0.25, 0.25, 1.0],
        };
        Self {
            row,
            image_size: 28,
            downsample: 1,
            widths: vec![16, 32, 32],
            n_classes: 2,
            rff_features: DEFAULT_FEATURES,
            kernel_hidden: DEFAULT_HIDDEN.to_vec(),
            omega,
            omega_prime: vec![0.0; kind.dim()],
            layer_freqs: None,
            mask: SupportMask::DEFAULT,
            n_rotation_samples: if kind.has_rotation() { 4 } else { 1 },
            rotation_mode: RotationMode::CyclicDeterministic,
            padding: Padding::Zero,
            projection: Projection::Mean,
        }
    }

    /// Desk-scale preset for the MNIST6-180 experiment: input pooled to 14×14
    /// (grid spacing 2, so the 7-pixel disk holds 9 lattice offsets), two narrow
    /// blocks and a small kernel network.
    pub fn toy(row: ModelRow) -> Self {
        Self {
            downsample: 2,
            widths: vec![8, 8],
            rff_features: 32,
            kernel_hidden: vec![16],
            ..Self::default_for(row)
        }
    }

    /// Sets every `ω'` entry this row activates: translation axes to
    /// `translation`, the rotation axis to `rotation` (an integer).
    pub fn with_omega_prime(mut self, translation: f64, rotation: f64) -> Result<Self> {
        let kind = self.kind();
        let active = self.row.omega_prime_active();
        for (axis, (w, on)) in self.omega_prime.iter_mut().zip(active).enumerate() {
            let value = if Some(axis) == kind.rotation_axis() {
                rotation
            } else {
                translation
            };
            *w = if on { value } else { 0.0 };
        }
        self.validate()?;
        Ok(self)
    }

    /// `ω'` = `value` on every active axis.
    pub fn for_row(row: ModelRow, value: f64) -> Result<Self> {
        Self::toy(row).with_omega_prime(value, value)
    }

    pub fn kind(&self) -> GroupKind {
        self.row.kind()
    }

    pub fn shared_freq(&self) -> Result<FrequencySpec> {
        FrequencySpec::new(self.kind(), self.omega.clone(), self.omega_prime.clone())
    }

    pub fn layer_freq(&self, layer: usize) -> Result<FrequencySpec> {
        match &self.layer_freqs {
            Some(f) => f
                .get(layer)
                .cloned()
                .ok_or_else(|| invalid(format!("no frequency override for layer {layer}"))),
            None => self.shared_freq(),
        }
    }

    pub fn operator_config(&self, layer: usize) -> Result<OperatorConfig> {
        Ok(OperatorConfig {
            freq: self.layer_freq(layer)?,
            mask: self.mask,
            n_rotation_samples: self.n_rotation_samples,
            rotation_mode: self.rotation_mode,
            padding: self.padding,
            normalization: None,
        })
    }

    pub fn grid(&self) -> Result<PixelGrid> {
        let side = self.image_size / self.downsample;
        PixelGrid::new(side, side, self.downsample as f64)
    }

    pub fn validate(&self) -> Result<()> {
        let kind = self.kind();
        if self.widths.is_empty() || self.widths.contains(&0) {
            return Err(invalid("widths must be non-empty and positive"));
        }
        if self.n_classes < 2 || self.rff_features == 0 || self.kernel_hidden.contains(&0) {
            return Err(invalid(
                "n_classes >= 2, rff_features >= 1 and positive hidden widths required",
            ));
        }
        if self.downsample == 0
            || self.image_size == 0
            || !self.image_size.is_multiple_of(self.downsample)
        {
            return Err(invalid(
                "image_size must be a positive multiple of downsample",
            ));
        }
        if kind.has_rotation() && self.n_rotation_samples == 0 {
            return Err(invalid("SE(2) models need rotation samples"));
        }
        self.mask.validate()?;
        let freqs: Vec<FrequencySpec> = match &self.layer_freqs {
            Some(f) if f.len() != self.widths.len() => {
                return Err(Error::DimensionMismatch {
                    expected: self.widths.len(),
                    found: f.len(),
                    context: "per-layer frequency overrides",
                })
            }
            Some(f) => f.clone(),
            None => vec![self.shared_freq()?],
        };
        let active = self.row.omega_prime_active();
        for f in &freqs {
            if f.kind != kind {
                return Err(Error::KindMismatch {
                    expected: kind,
                    found: f.kind,
                });
            }
            f.validate()?;
            if kind.has_translation()
                && (f.omega[0] != f.omega[1] || f.omega_prime[0] != f.omega_prime[1])
            {
                return Err(invalid("translation axes share one frequency: need omega_x = omega_y and omega'_x = omega'_y"));
            }
            for (axis, (&w, &on)) in f.omega_prime.iter().zip(&active).enumerate() {
                if w != 0.0 && !on {
                    return Err(invalid(format!(
                        "row {:?} pins omega_prime[{axis}] to zero, got {w}",
                        self.row
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let spec: ModelSpec = serde_json::from_str(s)?;
        spec.validate()?;
        Ok(spec)
    }
}

/// Result of a recorded forward pass.
pub struct ForwardPass {
    pub logits: Var,
    /// Parameter leaves, in [`Model::params`] order.
    pub params: Vec<Var>,
}

#[derive(Clone, Debug)]
pub struct Model {
    pub spec: ModelSpec,
    pub seed: u64,
    pub layers: Vec<KernelField>,
    pub head_weight: Tensor,
    pub head_bias: Tensor,
    layout: SampleLayout,
    stencils: Vec<Stencil>,
    embeddings: Vec<Tensor>,
}

pub fn build_model(spec: &ModelSpec, seed: u64) -> Result<Model> {
    spec.validate()?;
    let kind = spec.kind();
    let grid = spec.grid()?;
    let layout = if kind.has_rotation() {
        let rots = sample_rotations(spec.n_rotation_samples, spec.rotation_mode, seed)?;
        SampleLayout::new(kind, grid, rots)?
    } else {
        SampleLayout::t2(grid)
    };
    let mut layers = Vec::with_capacity(spec.widths.len());
    let mut c_in = 1;
    for (i, &c_out) in spec.widths.iter().enumerate() {
        let base = seed.wrapping_mul(1009).wrapping_add(10 * i as u64 + 1);
        let bases = BasisPair::new(
            init_basis(kind, spec.rff_features, base)?,
            init_basis(kind, spec.rff_features, base + 1)?,
        )?;
        let mut widths = vec![bases.input_width()];
        widths.extend(&spec.kernel_hidden);
        widths.push(c_in * c_out);
        let net = init_kernel_net(&widths, base + 2, 1.0)?;
        layers.push(KernelField::new(bases, net, c_in, c_out)?);
        c_in = c_out;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(1009).wrapping_add(7));
    let bound = (3.0 / c_in as f64).sqrt();
    let w = (0..c_in * spec.n_classes)
        .map(|_| rng.random_range(-bound..bound))
        .collect();
    let b = (0..spec.n_classes)
        .map(|_| rng.random_range(-0.01..0.01))
        .collect();
    let mut model = Model {
        spec: spec.clone(),
        seed,
        layers,
        head_weight: Tensor::new(vec![c_in, spec.n_classes], w)?,
        head_bias: Tensor::new(vec![spec.n_classes], b)?,
        layout,
        stencils: Vec::new(),
        embeddings: Vec::new(),
    };
    model.compile()?;
    Ok(model)
}

impl Model {
    /// Rebuilds stencils and cached kernel inputs from `self.spec` and the bases.
    fn compile(&mut self) -> Result<()> {
        self.stencils.clear();
        self.embeddings.clear();
        for (i, field) in self.layers.iter().enumerate() {
            let cfg = self.spec.operator_config(i)?;
            let stencil = build_stencil(&self.layout, &cfg, field.c_in)?;
            self.embeddings.push(stencil.embeddings(field, &cfg.freq)?);
            self.stencils.push(stencil);
        }
        Ok(())
    }

    pub fn layout(&self) -> &SampleLayout {
        &self.layout
    }

    pub fn stencil(&self, layer: usize) -> &Stencil {
        &self.stencils[layer]
    }

    pub fn params(&self) -> Vec<&Tensor> {
        let mut p: Vec<&Tensor> = self.layers.iter().flat_map(|l| l.net.params()).collect();
        p.push(&self.head_weight);
        p.push(&self.head_bias);
        p
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut p: Vec<&mut Tensor> = self
            .layers
            .iter_mut()
            .flat_map(|l| l.net.params_mut())
            .collect();
        p.push(&mut self.head_weight);
        p.push(&mut self.head_bias);
        p
    }

    /// Trainable scalars. Frequencies and RFF projections are not trained.
    pub fn parameter_count(&self) -> usize {
        self.params().iter().map(|t| t.len()).sum()
    }

    pub fn snapshot(&self) -> Vec<Tensor> {
        self.params().into_iter().cloned().collect()
    }

    pub fn restore(&mut self, values: &[Tensor]) -> Result<()> {
        let mut params = self.params_mut();
        if params.len() != values.len() {
            return Err(Error::DimensionMismatch {
                expected: params.len(),
                found: values.len(),
                context: "parameter snapshot",
            });
        }
        for (p, v) in params.iter_mut().zip(values) {
            if p.shape() != v.shape() {
                return Err(Error::ShapeMismatch {
                    op: "restore",
                    lhs: p.shape().to_vec(),
                    rhs: v.shape().to_vec(),
                });
            }
            **p = v.clone();
        }
        Ok(())
    }

    /// Pools raw `image_size²` images and lays them out as the model input
    /// `B × n_samples × 1`, replicating pixels over rotations.
    pub fn prepare(&self, images: &[&[f64]]) -> Result<Tensor> {
        let side = self.spec.image_size;
        let k = self.spec.downsample;
        let small = side / k;
        let n_rot = self.layout.n_rot();
        let norm = 1.0 / (k * k) as f64;
        let mut data = Vec::with_capacity(images.len() * small * small * n_rot);
        for img in images {
            if img.len() != side * side {
                return Err(Error::DimensionMismatch {
                    expected: side * side,
                    found: img.len(),
                    context: "input image size",
                });
            }
            for r in 0..small {
                for c in 0..small {
                    let mut acc = 0.0;
                    for dr in 0..k {
                        for dc in 0..k {
                            acc += img[(r * k + dr) * side + c * k + dc];
                        }
                    }
                    for _ in 0..n_rot {
                        data.push(acc * norm);
                    }
                }
            }
        }
        Tensor::new(vec![images.len(), small * small * n_rot, 1], data)
    }

    /// Records the forward pass of a prepared batch on `tape`.
    pub fn forward(&self, tape: &mut Tape, input: Tensor) -> Result<ForwardPass> {
        let mut params = Vec::new();
        let mut x = tape.constant(input);
        for (i, field) in self.layers.iter().enumerate() {
            let vars = field.net.register(tape);
            let emb = tape.constant(self.embeddings[i].clone());
            x = self.stencils[i].apply_tape(tape, field, &vars, emb, x)?;
            x = tape.channel_norm(x)?;
            x = tape.silu(x);
            params.extend(vars);
        }
        if self.spec.kind().has_rotation() {
            let mode = match self.spec.projection {
                Projection::Mean => Reduce::Mean,
                Projection::Max => Reduce::Max,
            };
            x = tape.reduce_groups(x, self.layout.n_rot(), mode)?;
        }
        let pooled = tape.mean_samples(x)?;
        let w = tape.leaf(self.head_weight.clone(), true);
        let b = tape.leaf(self.head_bias.clone(), true);
        let logits = tape.matmul(pooled, w)?;
        let logits = tape.add_row(logits, b)?;
        params.push(w);
        params.push(b);
        Ok(ForwardPass { logits, params })
    }

    /// Logits `B × n_classes` for raw images.
    pub fn logits(&self, images: &[&[f64]]) -> Result<Tensor> {
        let input = self.prepare(images)?;
        let mut tape = Tape::new();
        let pass = self.forward(&mut tape, input)?;
        Ok(tape.value(pass.logits).clone())
    }

    /// Cross-entropy loss and its gradient with respect to [`Model::params`].
    pub fn loss_and_grad(&self, images: &[&[f64]], labels: &[usize]) -> Result<(f64, Vec<Tensor>)> {
        let input = self.prepare(images)?;
        let mut tape = Tape::new();
        let pass = self.forward(&mut tape, input)?;
        let loss = tape.softmax_cross_entropy(pass.logits, labels)?;
        let value = tape.value(loss).item().expect("scalar loss");
        let mut grads = tape.backward(loss)?;
        let g = pass
            .params
            .iter()
            .zip(self.params())
            .map(|(&v, p)| {
                grads
                    .take(v)
                    .unwrap_or_else(|| Tensor::zeros(p.shape().to_vec()))
            })
            .collect();
        Ok((value, g))
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut tensors = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            for (j, p) in layer.net.params().into_iter().enumerate() {
                tensors.push((format!("layer{i}.net.{j}"), p.clone()));
            }
            for (name, basis) in [
                ("stationary", &layer.bases.stationary),
                ("nonstationary", &layer.bases.nonstationary),
            ] {
                let shape = vec![basis.features(), basis.kind().dim()];
                let t = Tensor::new(shape, basis.weights().to_vec()).expect("basis shape");
                tensors.push((format!("layer{i}.rff.{name}"), t));
            }
        }
        tensors.push(("head.weight".into(), self.head_weight.clone()));
        tensors.push(("head.bias".into(), self.head_bias.clone()));
        Checkpoint {
            metadata: serde_json::json!({
                "format": CHECKPOINT_FORMAT,
                "seed": self.seed,
                "spec": self.spec,
            }),
            tensors,
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Model> {
        let bad = |m: String| Error::Checkpoint(m);
        if ck.metadata.get("format").and_then(|f| f.as_str()) != Some(CHECKPOINT_FORMAT) {
            return Err(bad("not a model checkpoint".into()));
        }
        let spec: ModelSpec = serde_json::from_value(ck.metadata["spec"].clone())?;
        let seed = ck.metadata["seed"]
            .as_u64()
            .ok_or_else(|| bad("missing seed".into()))?;
        let mut model = build_model(&spec, seed)?;
        let fetch = |name: &str, like: &Tensor| -> Result<Tensor> {
            let t = ck
                .get(name)
                .ok_or_else(|| bad(format!("missing tensor {name}")))?;
            if t.shape() != like.shape() {
                return Err(bad(format!(
                    "tensor {name} has shape {:?}, expected {:?}",
                    t.shape(),
                    like.shape()
                )));
            }
            Ok(t.clone())
        };
        for i in 0..model.layers.len() {
            let layer = &mut model.layers[i];
            for (j, p) in layer.net.params_mut().into_iter().enumerate() {
                *p = fetch(&format!("layer{i}.net.{j}"), p)?;
            }
            let kind = layer.kind();
            let load_basis = |name: &str, current: &RffBasis| -> Result<RffBasis> {
                let like = Tensor::zeros(vec![current.features(), kind.dim()]);
                let t = fetch(&format!("layer{i}.rff.{name}"), &like)?;
                RffBasis::from_weights(kind, current.features(), t.into_data())
            };
            let s = load_basis("stationary", &layer.bases.stationary)?;
            let n = load_basis("nonstationary", &layer.bases.nonstationary)?;
            layer.bases = BasisPair::new(s, n)?;
        }
        model.head_weight = fetch("head.weight", &model.head_weight)?;
        model.head_bias = fetch("head.bias", &model.head_bias)?;
        model.compile()?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_checkpoint().save(path)
    }

    pub fn load(path: &Path) -> Result<Model> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}
