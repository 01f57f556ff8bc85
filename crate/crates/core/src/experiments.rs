//! Experiment drivers: division-ratio sweeps, wiring and standardization
//! ablations, depth/width grids and spectral masking.
//!
//! Run `r` of any experiment with base seed `s` splits with `s + r`,
//! initializes with `s + 1_000_000 + r` and shuffles training batches with
//! `s + 2_000_000 + r`. Tables written by `to_text` contain no timings, so
//! two replays of the same plan produce identical text.

use std::fmt::{self, Write as _};
use std::ops::Range;
use std::time::Instant;

use ndarray::{Array2, ArrayView2, Axis};

use crate::data::{split_indices, LabeledSpectra, Manifest, SplitSpec, SynthDataset};
use crate::error::{PnnError, Result};
use crate::metrics::{run_stats, EvalReport, MeanSd, RunStats};
use crate::model::Model;
use crate::network::{Mode, Network};
use crate::pnn::{self, PnnConfig, PnnModel, Wiring};
use crate::scalar::Scalar;
use crate::spectral::{Preprocessing, Spectrum, Standardizer};
use crate::training::{train, TrainConfig, TrainHistory};
use crate::vdnn::{self, VdnnConfig, VdnnModel};

pub const INIT_SEED_OFFSET: u64 = 1_000_000;
pub const SHUFFLE_SEED_OFFSET: u64 = 2_000_000;

/// Seeds used by run `run` of an experiment with base seed `base`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunSeeds {
    pub split: u64,
    pub init: u64,
    pub shuffle: u64,
}

impl RunSeeds {
    pub fn derive(base: u64, run: usize) -> Self {
        let r = run as u64;
        Self {
            split: base.wrapping_add(r),
            init: base.wrapping_add(INIT_SEED_OFFSET).wrapping_add(r),
            shuffle: base.wrapping_add(SHUFFLE_SEED_OFFSET).wrapping_add(r),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Family {
    Pnn {
        hidden_width: usize,
        depth: usize,
        wiring: Wiring,
    },
    Vdnn {
        depth: usize,
    },
}

impl Family {
    pub fn pnn(hidden_width: usize, depth: usize) -> Self {
        Family::Pnn {
            hidden_width,
            depth,
            wiring: Wiring::Full,
        }
    }

    pub fn depth(&self) -> usize {
        match *self {
            Family::Pnn { depth, .. } | Family::Vdnn { depth } => depth,
        }
    }

    pub fn with_depth(self, depth: usize) -> Self {
        match self {
            Family::Pnn {
                hidden_width,
                wiring,
                ..
            } => Family::Pnn {
                hidden_width,
                depth,
                wiring,
            },
            Family::Vdnn { .. } => Family::Vdnn { depth },
        }
    }

    pub fn with_hidden_width(self, hidden_width: usize) -> Self {
        match self {
            Family::Pnn { depth, wiring, .. } => Family::Pnn {
                hidden_width,
                depth,
                wiring,
            },
            v => v,
        }
    }

    pub fn build<T: Scalar>(&self, bins: usize, classes: usize, seed: u64) -> Result<AnyModel<T>> {
        Ok(match *self {
            Family::Pnn {
                hidden_width,
                depth,
                wiring,
            } => AnyModel::Pnn(PnnModel::init(
                PnnConfig::new(bins, hidden_width, depth, classes).with_wiring(wiring),
                seed,
            )?),
            Family::Vdnn { depth } => AnyModel::Vdnn(VdnnModel::init(VdnnConfig::new(bins, depth, classes), seed)?),
        })
    }

    pub fn hidden_weights(&self, bins: usize, classes: usize) -> u64 {
        match *self {
            Family::Pnn {
                hidden_width,
                depth,
                wiring,
            } => pnn::param_count(&PnnConfig::new(bins, hidden_width, depth, classes).with_wiring(wiring)).hidden_weights,
            Family::Vdnn { depth } => vdnn::param_count(&VdnnConfig::new(bins, depth, classes)).hidden_weights,
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Family::Pnn {
                hidden_width,
                depth,
                wiring: Wiring::Full,
            } => write!(f, "pnn{depth}(hd={hidden_width})"),
            Family::Pnn {
                hidden_width,
                depth,
                wiring,
            } => write!(f, "pnn{depth}(hd={hidden_width},{wiring})"),
            Family::Vdnn { depth } => write!(f, "vdnn{depth}"),
        }
    }
}

/// Either network family behind one type.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyModel<T> {
    Pnn(PnnModel<T>),
    Vdnn(VdnnModel<T>),
}

impl<T: Scalar> Model<T> for AnyModel<T> {
    fn network(&self) -> &Network<T> {
        match self {
            AnyModel::Pnn(m) => m.network(),
            AnyModel::Vdnn(m) => m.network(),
        }
    }

    fn network_mut(&mut self) -> &mut Network<T> {
        match self {
            AnyModel::Pnn(m) => m.network_mut(),
            AnyModel::Vdnn(m) => m.network_mut(),
        }
    }

    fn to_bytes(&self) -> Vec<u8> {
        match self {
            AnyModel::Pnn(m) => m.to_bytes(),
            AnyModel::Vdnn(m) => m.to_bytes(),
        }
    }
}

/// Anything that can yield a labeled spectrum matrix under a given
/// preprocessing path.
pub trait SpectraSource {
    fn spectra<T: Scalar>(&self, preprocessing: &Preprocessing) -> Result<LabeledSpectra<T>>;
}

impl SpectraSource for Manifest {
    fn spectra<T: Scalar>(&self, preprocessing: &Preprocessing) -> Result<LabeledSpectra<T>> {
        self.load_spectra(preprocessing)
    }
}

impl SpectraSource for SynthDataset {
    fn spectra<T: Scalar>(&self, preprocessing: &Preprocessing) -> Result<LabeledSpectra<T>> {
        SynthDataset::spectra(self, preprocessing)
    }
}

/// Experiment grid. Drivers read the fields relevant to them; `family`
/// supplies defaults for whatever a grid does not vary.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentPlan {
    pub family: Family,
    pub depths: Vec<usize>,
    pub hidden_widths: Vec<usize>,
    pub ratios: Vec<f64>,
    pub standardization: Vec<bool>,
    pub runs: usize,
    pub base_seed: u64,
    pub train: TrainConfig,
}

impl ExperimentPlan {
    pub fn new(family: Family) -> Self {
        Self {
            family,
            depths: vec![family.depth()],
            hidden_widths: match family {
                Family::Pnn { hidden_width, .. } => vec![hidden_width],
                Family::Vdnn { .. } => Vec::new(),
            },
            ratios: vec![0.75],
            standardization: vec![true],
            runs: 1,
            base_seed: 0,
            train: TrainConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.runs == 0 {
            return Err(PnnError::Config("runs must be >= 1".into()));
        }
        if self.ratios.is_empty() || self.depths.is_empty() {
            return Err(PnnError::Config("experiment grid is empty".into()));
        }
        if let Some(r) = self.ratios.iter().find(|r| !(**r > 0.0 && **r < 1.0)) {
            return Err(PnnError::Config(format!("division ratio {r} outside (0, 1)")));
        }
        if self.depths.contains(&0) || self.hidden_widths.contains(&0) {
            return Err(PnnError::Config("depths and hidden widths must be >= 1".into()));
        }
        self.train.validate()
    }
}

/// One trained-and-evaluated run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub run: usize,
    pub seeds: RunSeeds,
    pub train_samples: usize,
    pub test_samples: usize,
    pub report: EvalReport,
    pub history: TrainHistory,
    pub train_seconds: f64,
    pub model_bytes: usize,
}

impl RunOutcome {
    /// Machine-readable `key = value` dump.
    pub fn to_kv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "run = {}", self.run);
        let _ = writeln!(out, "split_seed = {}", self.seeds.split);
        let _ = writeln!(out, "init_seed = {}", self.seeds.init);
        let _ = writeln!(out, "shuffle_seed = {}", self.seeds.shuffle);
        let _ = writeln!(out, "train_samples = {}", self.train_samples);
        let _ = writeln!(out, "test_samples = {}", self.test_samples);
        let _ = writeln!(out, "train_seconds = {:.3}", self.train_seconds);
        let _ = writeln!(out, "model_bytes = {}", self.model_bytes);
        let epochs = self.history.epochs();
        if epochs > 0 {
            let _ = writeln!(out, "first_epoch_loss = {:.9}", self.history.epoch_mean_loss(1));
            let _ = writeln!(out, "last_epoch_loss = {:.9}", self.history.epoch_mean_loss(epochs));
        }
        out.push_str(&self.report.to_text());
        out
    }
}

/// Splits, trains and evaluates run `run`; returns the trained model too.
pub fn run_once<T: Scalar>(
    data: &LabeledSpectra<T>,
    family: Family,
    ratio: f64,
    train_config: &TrainConfig,
    base_seed: u64,
    run: usize,
) -> Result<(RunOutcome, AnyModel<T>)> {
    let seeds = RunSeeds::derive(base_seed, run);
    let (train_idx, test_idx) = split_indices(&data.labels, data.classes(), &SplitSpec::new(ratio, seeds.split))?;
    if test_idx.is_empty() {
        return Err(PnnError::Config(format!("division ratio {ratio} leaves no test samples")));
    }
    let train_set = data.subset(&train_idx);
    let test_set = data.subset(&test_idx);
    let mut model = family.build::<T>(data.bins(), data.classes(), seeds.init)?;
    let config = TrainConfig {
        seed: seeds.shuffle,
        ..train_config.clone()
    };
    let started = Instant::now();
    let history = train(&mut model, train_set.x.view(), &train_set.labels, &config)?;
    let train_seconds = started.elapsed().as_secs_f64();
    let report = evaluate(&model, test_set.x.view(), &test_set.labels, data.classes())?;
    let outcome = RunOutcome {
        run,
        seeds,
        train_samples: train_idx.len(),
        test_samples: test_idx.len(),
        report,
        history,
        train_seconds,
        model_bytes: model.to_bytes().len(),
    };
    Ok((outcome, model))
}

pub fn run_many<T: Scalar>(
    data: &LabeledSpectra<T>,
    family: Family,
    ratio: f64,
    train_config: &TrainConfig,
    base_seed: u64,
    runs: usize,
) -> Result<Vec<RunOutcome>> {
    (0..runs)
        .map(|r| run_once(data, family, ratio, train_config, base_seed, r).map(|(o, _)| o))
        .collect()
}

/// Inference-mode evaluation of `model` on a labeled matrix.
pub fn evaluate<T: Scalar, M: Model<T>>(model: &M, x: ArrayView2<T>, labels: &[usize], classes: usize) -> Result<EvalReport> {
    let (predictions, probs) = model.predict(x)?;
    EvalReport::from_scores(&predictions, labels, probs.view(), classes)
}

fn stats_of(outcomes: &[RunOutcome]) -> Result<RunStats> {
    let reports: Vec<EvalReport> = outcomes.iter().map(|o| o.report.clone()).collect();
    run_stats(&reports)
}

fn fmt_stat(s: &MeanSd) -> String {
    match s.sd {
        Some(sd) => format!("{:.4} ± {:.4}", s.mean, sd),
        None => format!("{:.4}", s.mean),
    }
}

fn stats_columns(s: &RunStats) -> String {
    format!(
        "{}\t{}\t{}\t{}",
        fmt_stat(&s.accuracy),
        fmt_stat(&s.macro_f1),
        fmt_stat(&s.micro_f1),
        s.auroc.as_ref().map(fmt_stat).unwrap_or_else(|| "-".into())
    )
}

const STATS_HEADER: &str = "accuracy\tmacro_f1\tmicro_f1\tauroc";

/// One labeled group of runs with its summary.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub label: String,
    pub stats: RunStats,
    pub runs: Vec<RunOutcome>,
}

impl Cell {
    fn new(label: String, runs: Vec<RunOutcome>) -> Result<Self> {
        Ok(Self {
            label,
            stats: stats_of(&runs)?,
            runs,
        })
    }

    pub fn accuracies(&self) -> Vec<f64> {
        self.runs.iter().map(|r| r.report.accuracy).collect()
    }

    pub fn mean_train_seconds(&self) -> f64 {
        self.runs.iter().map(|r| r.train_seconds).sum::<f64>() / self.runs.len().max(1) as f64
    }

    pub fn mean_first_epoch_loss(&self) -> f64 {
        self.runs.iter().map(|r| r.history.epoch_mean_loss(1)).sum::<f64>() / self.runs.len().max(1) as f64
    }

    pub fn mean_last_epoch_loss(&self) -> f64 {
        self.runs
            .iter()
            .map(|r| r.history.epoch_mean_loss(r.history.epochs()))
            .sum::<f64>()
            / self.runs.len().max(1) as f64
    }
}

/// Rows of labeled cells rendered as a tab-separated table.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub title: String,
    pub row_header: String,
    pub cells: Vec<Cell>,
}

impl Table {
    pub fn cell(&self, label: &str) -> Option<&Cell> {
        self.cells.iter().find(|c| c.label == label)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("# {}\n{}\truns\t{STATS_HEADER}\n", self.title, self.row_header);
        for c in &self.cells {
            let _ = writeln!(out, "{}\t{}\t{}", c.label, c.stats.runs, stats_columns(&c.stats));
        }
        out
    }

    /// Per-run `key = value` blocks, each headed by `[label run N]`.
    pub fn to_kv(&self) -> String {
        let mut out = String::new();
        for c in &self.cells {
            for r in &c.runs {
                let _ = writeln!(out, "[{} run {}]", c.label, r.run);
                out.push_str(&r.to_kv());
                out.push('\n');
            }
        }
        out
    }
}

/// `R` runs per division ratio; rows keyed `0.10`, `0.75`, ...
pub fn ratio_sweep<T: Scalar>(plan: &ExperimentPlan, data: &LabeledSpectra<T>) -> Result<Table> {
    plan.validate()?;
    let cells = plan
        .ratios
        .iter()
        .map(|&ratio| {
            let runs = run_many(data, plan.family, ratio, &plan.train, plan.base_seed, plan.runs)?;
            Cell::new(format!("{ratio:.2}"), runs)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Table {
        title: format!("division-ratio sweep, {}", plan.family),
        row_header: "train_ratio".into(),
        cells,
    })
}

/// Trains one wiring variant of `plan.family` (which must be a PNN) at
/// `ratio`.
pub fn feedforward_variant<T: Scalar>(
    wiring: Wiring,
    plan: &ExperimentPlan,
    data: &LabeledSpectra<T>,
    ratio: f64,
) -> Result<Cell> {
    plan.validate()?;
    let family = match plan.family {
        Family::Pnn {
            hidden_width, depth, ..
        } => Family::Pnn {
            hidden_width,
            depth,
            wiring,
        },
        Family::Vdnn { .. } => {
            return Err(PnnError::Config("wiring ablation needs a pnn family".into()));
        }
    };
    let runs = run_many(data, family, ratio, &plan.train, plan.base_seed, plan.runs)?;
    Cell::new(wiring.name().to_string(), runs)
}

/// All four wiring variants at `ratio`, in the order full, no_zh, no_x,
/// neither.
pub fn ablation_feedforward<T: Scalar>(plan: &ExperimentPlan, data: &LabeledSpectra<T>, ratio: f64) -> Result<Table> {
    let cells = Wiring::ALL
        .into_iter()
        .map(|w| feedforward_variant(w, plan, data, ratio))
        .collect::<Result<Vec<_>>>()?;
    Ok(Table {
        title: format!("feed-forward ablation at train ratio {ratio:.2}, {}", plan.family),
        row_header: "variant".into(),
        cells,
    })
}

/// Preprocessing path for a standardization mode: `on` is max-of-bin over
/// the whole-record spectrum, `off` the direct `bins`-point transform of
/// the record truncated or zero-padded to `bins` samples.
pub fn preprocessing_for(standardize: bool, bins: usize) -> Preprocessing {
    if standardize {
        Preprocessing::Standardized(Standardizer::new(bins))
    } else {
        Preprocessing::Direct { bins }
    }
}

/// Trains under one standardization mode at `ratio`.
pub fn ablation_standardization<T: Scalar, S: SpectraSource>(
    standardize: bool,
    source: &S,
    bins: usize,
    plan: &ExperimentPlan,
    ratio: f64,
) -> Result<Cell> {
    plan.validate()?;
    let data = source.spectra::<T>(&preprocessing_for(standardize, bins))?;
    let runs = run_many(&data, plan.family, ratio, &plan.train, plan.base_seed, plan.runs)?;
    Cell::new(if standardize { "on" } else { "off" }.to_string(), runs)
}

/// Both standardization modes for every ratio in the plan, rows keyed
/// `<mode>@<ratio>`.
pub fn standardization_table<T: Scalar, S: SpectraSource>(
    source: &S,
    bins: usize,
    plan: &ExperimentPlan,
) -> Result<Table> {
    let mut cells = Vec::new();
    for &mode in &plan.standardization {
        for &ratio in &plan.ratios {
            let mut cell = ablation_standardization::<T, S>(mode, source, bins, plan, ratio)?;
            cell.label = format!("{}@{ratio:.2}", cell.label);
            cells.push(cell);
        }
    }
    Ok(Table {
        title: format!("standardization ablation, {}", plan.family),
        row_header: "mode@ratio".into(),
        cells,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridRow {
    pub depth: usize,
    pub hidden_width: usize,
    pub hidden_weights: u64,
    pub cell: Cell,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridTable {
    pub ratio: f64,
    pub rows: Vec<GridRow>,
}

impl GridTable {
    /// Metric table without timings (replayable bit-exactly).
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "# depth/hidden-size sweep at train ratio {:.2}\ndepth\thidden_width\thidden_weights\tmodel_bytes\t{STATS_HEADER}\n",
            self.ratio
        );
        for r in &self.rows {
            let bytes = r.cell.runs.first().map_or(0, |o| o.model_bytes);
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}",
                r.depth,
                r.hidden_width,
                r.hidden_weights,
                bytes,
                stats_columns(&r.cell.stats)
            );
        }
        out
    }

    pub fn timings_text(&self) -> String {
        let mut out = String::from("depth\thidden_width\tmean_train_seconds\n");
        for r in &self.rows {
            let _ = writeln!(out, "{}\t{}\t{:.3}", r.depth, r.hidden_width, r.cell.mean_train_seconds());
        }
        out
    }
}

/// Every `(depth, hidden width)` pair of the plan at `ratio`; PNN only.
pub fn depth_hidden_sweep<T: Scalar>(plan: &ExperimentPlan, data: &LabeledSpectra<T>, ratio: f64) -> Result<GridTable> {
    plan.validate()?;
    if !matches!(plan.family, Family::Pnn { .. }) || plan.hidden_widths.is_empty() {
        return Err(PnnError::Config("depth/hidden sweep needs a pnn family and hidden widths".into()));
    }
    let mut rows = Vec::new();
    for &depth in &plan.depths {
        for &hd in &plan.hidden_widths {
            let family = plan.family.with_depth(depth).with_hidden_width(hd);
            let runs = run_many(data, family, ratio, &plan.train, plan.base_seed, plan.runs)?;
            rows.push(GridRow {
                depth,
                hidden_width: hd,
                hidden_weights: family.hidden_weights(data.bins(), data.classes()),
                cell: Cell::new(format!("d{depth}h{hd}"), runs)?,
            });
        }
    }
    Ok(GridTable { ratio, rows })
}

/// Effect of zeroing consecutive spectral windows on one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskReport {
    pub mask_size: usize,
    pub true_class: usize,
    /// True-class probability of the unmasked spectrum.
    pub baseline: f64,
    /// `baseline - masked score` per window.
    pub deltas: Vec<f64>,
}

impl MaskReport {
    pub fn windows(&self) -> usize {
        self.deltas.len()
    }

    pub fn window(&self, index: usize, bins: usize) -> Range<usize> {
        index * self.mask_size..((index + 1) * self.mask_size).min(bins)
    }

    /// Window whose removal costs the true class the most score.
    pub fn deficit_window(&self) -> usize {
        argmax_f64(&self.deltas)
    }
}

fn argmax_f64(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

fn masked_batch<T: Scalar>(spectrum: &[T], mask_size: usize) -> Array2<T> {
    let k = spectrum.len();
    let windows = k.div_ceil(mask_size);
    let mut batch = Array2::zeros((windows + 1, k));
    for (w, mut row) in batch.axis_iter_mut(Axis(0)).enumerate() {
        row.assign(&ndarray::ArrayView1::from(spectrum));
        if w < windows {
            row.slice_mut(ndarray::s![w * mask_size..((w + 1) * mask_size).min(k)])
                .fill(T::zero());
        }
    }
    batch
}

/// Zero-fills each window of `mask_size` bins in turn and records the drop
/// in the inference-mode probability of `true_class`.
pub fn mask_sweep<T: Scalar, M: Model<T>>(
    model: &M,
    spectrum: &Spectrum<T>,
    true_class: usize,
    mask_size: usize,
) -> Result<MaskReport> {
    let k = spectrum.len();
    if mask_size == 0 || mask_size > k {
        return Err(PnnError::Config(format!("mask size {mask_size} outside [1, {k}]")));
    }
    if true_class >= model.network().classes() {
        return Err(PnnError::InvalidInput(format!("class {true_class} out of range")));
    }
    let batch = masked_batch(spectrum.bins(), mask_size);
    let (probs, _) = model.forward(batch.view(), Mode::Infer)?;
    let windows = batch.nrows() - 1;
    let baseline = probs[[windows, true_class]].to_f64c();
    let deltas = (0..windows)
        .map(|w| baseline - probs[[w, true_class]].to_f64c())
        .collect();
    Ok(MaskReport {
        mask_size,
        true_class,
        baseline,
        deltas,
    })
}

/// Mask sweep averaged over every sample of each class.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassMaskReport {
    pub mask_size: usize,
    pub bins: usize,
    /// `[class][window]` mean score deltas.
    pub deltas: Vec<Vec<f64>>,
}

impl ClassMaskReport {
    pub fn deficit_window(&self, class: usize) -> usize {
        argmax_f64(&self.deltas[class])
    }

    pub fn deficit_range(&self, class: usize) -> Range<usize> {
        let w = self.deficit_window(class);
        w * self.mask_size..((w + 1) * self.mask_size).min(self.bins)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("# mask sweep, mask size {}\nclass\tdeficit_window\tbins", self.mask_size);
        let windows = self.deltas.first().map_or(0, Vec::len);
        for w in 0..windows {
            let _ = write!(out, "\tw{w}");
        }
        out.push('\n');
        for (c, d) in self.deltas.iter().enumerate() {
            let r = self.deficit_range(c);
            let _ = write!(out, "{c}\t{}\t{}..{}", self.deficit_window(c), r.start, r.end);
            for v in d {
                let _ = write!(out, "\t{v:.6}");
            }
            out.push('\n');
        }
        out
    }
}

pub fn class_mask_sweep<T: Scalar, M: Model<T>>(
    model: &M,
    data: &LabeledSpectra<T>,
    mask_size: usize,
) -> Result<ClassMaskReport> {
    let k = data.bins();
    let windows = k.div_ceil(mask_size.max(1));
    let mut sums = vec![vec![0.0; windows]; data.classes()];
    let mut counts = vec![0usize; data.classes()];
    for (row, &y) in data.x.rows().into_iter().zip(&data.labels) {
        let spectrum = Spectrum::new(row.to_vec())?;
        let report = mask_sweep(model, &spectrum, y, mask_size)?;
        for (s, d) in sums[y].iter_mut().zip(&report.deltas) {
            *s += d;
        }
        counts[y] += 1;
    }
    for (s, &n) in sums.iter_mut().zip(&counts) {
        if n > 0 {
            s.iter_mut().for_each(|v| *v /= n as f64);
        }
    }
    Ok(ClassMaskReport {
        mask_size,
        bins: k,
        deltas: sums,
    })
}
