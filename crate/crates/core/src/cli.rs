//! Command-line harness: `train`, `sweep`, `probe`, `render`.
//!
//! Every output directory receives `config.json` (the run configuration as
//! parsed), `env.json` (version and precision) and the command's results.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::datasets::{build_mnist6_180, load_idx, split, synth_glyph_set, LabeledImageSet};
use crate::error::{invalid, Error, Result};
use crate::group_operator::PixelGrid;
use crate::kernel_field::render_filter_bank;
use crate::lie_group::{sample_rotations, GroupElement, GroupKind, RotationMode};
use crate::model_zoo::{build_model, Model, ModelRow, ModelSpec};
use crate::probes::{probe_model, validate_grid, write_csv, write_json};
use crate::train::{evaluate, train, EpochRecord, TrainConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

#[derive(Parser, Debug)]
#[command(
    name = "softgconv",
    version,
    about = "Soft group-equivariant operators on T(2) and SE(2)"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Train one model on MNIST6-180.
    Train(TrainArgs),
    /// Train one model per omega' value and select by validation accuracy.
    Sweep(SweepArgs),
    /// Run equivariance probes on a checkpoint or a fresh model.
    Probe(ProbeArgs),
    /// Render kernel filter banks as PPM images.
    Render(RenderArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// 14×14 pooled input, two narrow blocks.
    Toy,
    /// 28×28 input, three blocks.
    Full,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RowArg {
    T2Strict,
    T2Soft,
    Se2Strict,
    Se2SoftRotation,
    Se2SoftTranslation,
    Se2SoftBoth,
}

impl From<RowArg> for ModelRow {
    fn from(r: RowArg) -> Self {
        match r {
            RowArg::T2Strict => ModelRow::T2Strict,
            RowArg::T2Soft => ModelRow::T2Soft,
            RowArg::Se2Strict => ModelRow::Se2Strict,
            RowArg::Se2SoftRotation => ModelRow::Se2SoftRotation,
            RowArg::Se2SoftTranslation => ModelRow::Se2SoftTranslation,
            RowArg::Se2SoftBoth => ModelRow::Se2SoftBoth,
        }
    }
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
pub struct ModelArgs {
    /// Model spec JSON; overrides --row, --preset and --omega-prime.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "se2-soft-rotation")]
    pub row: RowArg,
    #[arg(long, value_enum, default_value = "toy")]
    pub preset: Preset,
    /// Value of every omega' entry the row activates.
    #[arg(long, default_value_t = 1.0)]
    pub omega_prime: f64,
}

impl ModelArgs {
    fn resolve(&self, omega_prime: f64) -> Result<ModelSpec> {
        if let Some(path) = &self.spec {
            return ModelSpec::from_json(&fs::read_to_string(path)?);
        }
        let row = ModelRow::from(self.row);
        let base = match self.preset {
            Preset::Toy => ModelSpec::toy(row),
            Preset::Full => ModelSpec::default_for(row),
        };
        base.with_omega_prime(omega_prime, omega_prime)
    }
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
pub struct DataArgs {
    /// Use procedurally generated 6-glyphs instead of MNIST.
    #[arg(long)]
    pub synth_data: bool,
    /// MNIST training images (IDX).
    #[arg(long)]
    pub mnist_images: Option<PathBuf>,
    /// MNIST training labels (IDX).
    #[arg(long)]
    pub mnist_labels: Option<PathBuf>,
    #[arg(long, default_value_t = 2000)]
    pub n_train: usize,
    #[arg(long, default_value_t = 500)]
    pub n_val: usize,
    #[arg(long, default_value_t = 3000)]
    pub n_test: usize,
    /// Seed for glyph synthesis, rotation coin flips and the split.
    #[arg(long, default_value_t = 11)]
    pub data_seed: u64,
}

impl DataArgs {
    pub fn load(&self) -> Result<[LabeledImageSet; 3]> {
        let total = self.n_train + self.n_val + self.n_test;
        let set = if self.synth_data {
            synth_glyph_set(total, self.data_seed)?
        } else {
            match (&self.mnist_images, &self.mnist_labels) {
                (Some(i), Some(l)) => build_mnist6_180(&load_idx(i, l)?, self.data_seed)?,
                _ => {
                    return Err(invalid(
                        "no dataset: pass --mnist-images and --mnist-labels, or --synth-data",
                    ))
                }
            }
        };
        split(
            &set,
            self.n_train,
            self.n_val,
            self.n_test,
            self.data_seed.wrapping_add(1),
        )
    }
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
pub struct OptimArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 20)]
    pub epochs: usize,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0.01)]
    pub lr: f64,
    /// Epochs without validation improvement before stopping; 0 disables.
    #[arg(long, default_value_t = 5)]
    pub patience: usize,
}

impl OptimArgs {
    fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            lr: self.lr,
            seed: self.seed,
            patience: self.patience,
        }
    }
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
pub struct TrainArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub optim: OptimArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
pub struct SweepArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub optim: OptimArgs,
    /// Comma-separated ascending omega' values starting at 0.
    #[arg(long, default_value = "0,1,2,4")]
    pub omega_prime_grid: Grid,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
pub struct ProbeArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Probe a trained model instead of a fresh one.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
pub struct RenderArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Side of the rendered raster, in lattice steps of the model grid.
    #[arg(long, default_value_t = 9)]
    pub size: usize,
    /// Number of nonstationary probe positions along the x axis.
    #[arg(long, default_value_t = 3)]
    pub probes: usize,
    #[arg(long)]
    pub out: PathBuf,
}

/// A comma-separated list of `ω'` values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid(pub Vec<f64>);

impl FromStr for Grid {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let values = s
            .split(',')
            .filter(|p| !p.trim().is_empty())
            .map(|p| {
                p.trim()
                    .parse::<f64>()
                    .map_err(|e| format!("bad grid value {p:?}: {e}"))
            })
            .collect::<std::result::Result<Vec<_>, _>>()?;
        Ok(Grid(values))
    }
}

/// Exit code for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::NumericFailure(_) => EXIT_NUMERIC,
        Error::Io(_)
        | Error::Csv(_)
        | Error::BadMagic { .. }
        | Error::Truncated { .. }
        | Error::CountMismatch { .. }
        | Error::Data(_) => EXIT_DATA,
        _ => EXIT_CONFIG,
    }
}

#[derive(Serialize)]
struct EnvStamp {
    name: &'static str,
    version: &'static str,
    precision: &'static str,
    threads: usize,
}

fn prepare_dir(out: &Path, config: &impl Serialize) -> Result<()> {
    fs::create_dir_all(out)?;
    fs::write(
        out.join("config.json"),
        serde_json::to_string_pretty(config)?,
    )?;
    let env = EnvStamp {
        name: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        precision: "f64",
        threads: 1,
    };
    fs::write(out.join("env.json"), serde_json::to_string_pretty(&env)?)?;
    Ok(())
}

#[derive(Serialize)]
struct RunRecord<'a, A: Serialize> {
    command: &'static str,
    args: &'a A,
    spec: &'a ModelSpec,
}

/// Outcome of one training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub best_epoch: usize,
    pub val_acc: f64,
    pub test_acc: f64,
    pub epochs_run: usize,
}

fn train_into(
    out: &Path,
    spec: &ModelSpec,
    data: &[LabeledImageSet; 3],
    optim: &OptimArgs,
    record: &impl Serialize,
) -> Result<TrainOutcome> {
    prepare_dir(out, record)?;
    fs::write(out.join("spec.json"), spec.to_json()?)?;
    let mut model = build_model(spec, optim.seed)?;
    let mut metrics = csv::Writer::from_path(out.join("metrics.csv"))?;
    if optim.epochs == 0 {
        metrics.write_record(["epoch", "train_loss", "val_acc"])?;
    }
    let mut io_err = None;
    let report = train(
        &mut model,
        &data[0],
        &data[1],
        &optim.train_config(),
        |r: &EpochRecord| {
            if let Err(e) = metrics
                .serialize(r)
                .and_then(|_| metrics.flush().map_err(Into::into))
            {
                io_err.get_or_insert(e);
            }
        },
    )?;
    if let Some(e) = io_err {
        return Err(e.into());
    }
    metrics.flush()?;
    let test_acc = evaluate(&model, &data[2], 256)?;
    let outcome = TrainOutcome {
        best_epoch: report.best_epoch,
        val_acc: report.best_val_acc,
        test_acc,
        epochs_run: report.records.len(),
    };
    fs::write(
        out.join("test_accuracy.json"),
        serde_json::to_string_pretty(&outcome)?,
    )?;
    model.save(&out.join("model.ckpt"))?;
    Ok(outcome)
}

pub fn cmd_train(args: &TrainArgs) -> Result<TrainOutcome> {
    let spec = args.model.resolve(args.model.omega_prime)?;
    args.optim.train_config().validate()?;
    let data = args.data.load()?;
    let record = RunRecord {
        command: "train",
        args,
        spec: &spec,
    };
    let outcome = train_into(&args.out, &spec, &data, &args.optim, &record)?;
    eprintln!(
        "{}: best epoch {}, val {:.4}, test {:.4}",
        spec.row.label(),
        outcome.best_epoch,
        outcome.val_acc,
        outcome.test_acc
    );
    Ok(outcome)
}

/// One row of `sweep.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub omega_prime: f64,
    pub val_acc: f64,
    pub test_acc: f64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSelection {
    pub omega_prime: f64,
    pub val_acc: f64,
    pub test_acc: f64,
}

/// Trains one model per grid value (same seed) and picks the best validation
/// accuracy, ties going to the smaller `ω'`.
pub fn cmd_sweep(args: &SweepArgs) -> Result<(Vec<SweepRow>, SweepSelection)> {
    let grid = &args.omega_prime_grid.0;
    validate_grid(grid)?;
    let specs = grid
        .iter()
        .map(|&w| args.model.resolve(w))
        .collect::<Result<Vec<_>>>()?;
    args.optim.train_config().validate()?;
    let data = args.data.load()?;
    prepare_dir(
        &args.out,
        &RunRecord {
            command: "sweep",
            args,
            spec: &specs[0],
        },
    )?;
    let mut rows = Vec::with_capacity(grid.len());
    for (&w, spec) in grid.iter().zip(&specs) {
        let sub = args.out.join(format!("omega_prime_{w}"));
        let record = RunRecord {
            command: "sweep",
            args,
            spec,
        };
        let o = train_into(&sub, spec, &data, &args.optim, &record)?;
        eprintln!("omega' = {w}: val {:.4}, test {:.4}", o.val_acc, o.test_acc);
        rows.push(SweepRow {
            omega_prime: w,
            val_acc: o.val_acc,
            test_acc: o.test_acc,
            seed: args.optim.seed,
        });
    }
    let mut w = csv::Writer::from_path(args.out.join("sweep.csv"))?;
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush()?;
    let best = rows
        .iter()
        .fold(&rows[0], |b, r| if r.val_acc > b.val_acc { r } else { b });
    let selection = SweepSelection {
        omega_prime: best.omega_prime,
        val_acc: best.val_acc,
        test_acc: best.test_acc,
    };
    fs::write(
        args.out.join("selection.json"),
        serde_json::to_string_pretty(&selection)?,
    )?;
    Ok((rows, selection))
}

fn load_or_init(model: &ModelArgs, checkpoint: &Option<PathBuf>, seed: u64) -> Result<Model> {
    match checkpoint {
        Some(path) => {
            let m = Model::load(path)?;
            if model.spec.is_some() {
                let spec = model.resolve(model.omega_prime)?;
                if spec != m.spec {
                    return Err(Error::Checkpoint(format!(
                        "checkpoint {} was trained with a different spec",
                        path.display()
                    )));
                }
            }
            Ok(m)
        }
        None => build_model(&model.resolve(model.omega_prime)?, seed),
    }
}

pub fn cmd_probe(args: &ProbeArgs) -> Result<Vec<crate::probes::EquivarianceReport>> {
    let model = load_or_init(&args.model, &args.checkpoint, args.seed)?;
    prepare_dir(
        &args.out,
        &RunRecord {
            command: "probe",
            args,
            spec: &model.spec,
        },
    )?;
    let reports = probe_model(&model, args.seed)?;
    write_csv(&args.out.join("probes.csv"), &reports)?;
    write_json(&args.out.join("probes.json"), &reports)?;
    for r in &reports {
        eprintln!("{:<28} max {:.3e}", r.probe, r.max_error);
    }
    Ok(reports)
}

/// Writes `layer{i}/` with one PPM per rotation, probe and channel pair.
pub fn cmd_render(args: &RenderArgs) -> Result<Vec<PathBuf>> {
    if args.size == 0 || args.probes == 0 {
        return Err(invalid("--size and --probes must be positive"));
    }
    let model = load_or_init(&args.model, &args.checkpoint, args.seed)?;
    prepare_dir(
        &args.out,
        &RunRecord {
            command: "render",
            args,
            spec: &model.spec,
        },
    )?;
    let spacing = model.spec.downsample as f64;
    let raster = PixelGrid::new(args.size, args.size, spacing)?;
    let kind = model.spec.kind();
    let rotations = if kind.has_rotation() {
        sample_rotations(
            model.spec.n_rotation_samples,
            RotationMode::CyclicDeterministic,
            0,
        )?
    } else {
        Vec::new()
    };
    // probes spread over the image half-width along x
    let half = (model.spec.image_size as f64) / 2.0;
    let probes: Vec<GroupElement> = (0..args.probes)
        .map(|i| {
            let x = if args.probes == 1 {
                0.0
            } else {
                -half + 2.0 * half * i as f64 / (args.probes - 1) as f64
            };
            match kind {
                GroupKind::T2 => GroupElement::t2(x, 0.0),
                _ => GroupElement::se2(x, 0.0, 0.0),
            }
        })
        .collect();
    let mut written = Vec::new();
    for (i, field) in model.layers.iter().enumerate() {
        let freq = model.spec.layer_freq(i)?;
        let bank =
            render_filter_bank(field, &freq, &model.spec.mask, &raster, &rotations, &probes)?;
        written.extend(bank.write_ppm(&args.out.join(format!("layer{}", i + 1)), "kernel")?);
    }
    eprintln!("wrote {} images to {}", written.len(), args.out.display());
    Ok(written)
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Train(a) => cmd_train(a).map(drop),
        Command::Sweep(a) => cmd_sweep(a).map(drop),
        Command::Probe(a) => cmd_probe(a).map(drop),
        Command::Render(a) => cmd_render(a).map(drop),
    }
}

/// Parses `std::env::args`, runs the command and returns the exit code.
pub fn main_exit_code() -> i32 {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_parsing() {
        assert_eq!(
            "0,1,2,4".parse::<Grid>().unwrap().0,
            vec![0.0, 1.0, 2.0, 4.0]
        );
        assert_eq!(" 0, 0.5 ".parse::<Grid>().unwrap().0, vec![0.0, 0.5]);
        assert!("0,x".parse::<Grid>().is_err());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(
            exit_code(&Error::NumericFailure("nan".into())),
            EXIT_NUMERIC
        );
        assert_eq!(exit_code(&Error::Data("x".into())), EXIT_DATA);
        assert_eq!(exit_code(&invalid("x")), EXIT_CONFIG);
    }

    #[test]
    fn flags_parse() {
        let cli = Cli::try_parse_from([
            "softgconv",
            "sweep",
            "--synth-data",
            "--omega-prime-grid",
            "0,1",
            "--epochs",
            "3",
            "--out",
            "x",
        ])
        .unwrap();
        match cli.command {
            Command::Sweep(a) => {
                assert!(a.data.synth_data);
                assert_eq!(a.omega_prime_grid.0, vec![0.0, 1.0]);
                assert_eq!(a.optim.epochs, 3);
            }
            _ => panic!("wrong subcommand"),
        }
    }

    #[test]
    fn missing_dataset_is_a_config_error() {
        let d = DataArgs {
            synth_data: false,
            mnist_images: None,
            mnist_labels: None,
            n_train: 1,
            n_val: 1,
            n_test: 1,
            data_seed: 0,
        };
        assert_eq!(exit_code(&d.load().unwrap_err()), EXIT_CONFIG);
    }
}
