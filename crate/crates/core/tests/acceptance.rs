//! Acceptance suite. Prints one PASS/FAIL/SKIP line per criterion and exits
//! non-zero if any gating criterion fails.
//!
//! `PNNKIT_ACCEPT=4,5` restricts the run to a subset. Criterion 13 needs
//! `PNNKIT_CWRU_MANIFEST` pointing at a manifest of real bearing records.

use std::collections::BTreeSet;
use std::path::Path;
use std::time::Instant;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pnnkit::data::{split_indices, synth_generate, SplitSpec, SynthDataset, SynthSpec};
use pnnkit::experiments::{
    ablation_feedforward, class_mask_sweep, ratio_sweep, run_once, standardization_table, Cell, ExperimentPlan,
    Family, RunSeeds, Table,
};
use pnnkit::metrics::{binary_auc, MeanSd};
use pnnkit::spectral::dft;
use pnnkit::training::{cross_entropy, finite_difference_audit};
use pnnkit::{
    pnn, vdnn, LabeledSpectraF64, Manifest, PnnConfig, PnnModel, Preprocessing, RawSignal, Standardizer, VdnnConfig,
    VdnnModel,
};

const BENCH_BINS: usize = 2048;
const BENCH_RATIOS: [f64; 2] = [0.75, 0.10];
const RUNS: usize = 5;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn benchmark_spec() -> SynthSpec {
    SynthSpec {
        classes: 7,
        samples_per_class: 75,
        noise_snr_db: 15.0,
        ..SynthSpec::default()
    }
}

fn benchmark_plan(family: Family) -> ExperimentPlan {
    let mut plan = ExperimentPlan::new(family);
    plan.ratios = BENCH_RATIOS.to_vec();
    plan.runs = RUNS;
    plan
}

fn benchmark_spectra(data: &SynthDataset) -> LabeledSpectraF64 {
    data.spectra(&Preprocessing::Standardized(Standardizer::new(BENCH_BINS)))
        .expect("benchmark spectra")
}

fn ratio_label(r: f64) -> String {
    format!("{r:.2}")
}

fn pooled_sd(a: &Cell, b: &Cell) -> f64 {
    let (sa, sb) = (a.stats.accuracy.sd_or_zero(), b.stats.accuracy.sd_or_zero());
    ((sa * sa + sb * sb) / 2.0).sqrt()
}

/// Everything criteria 4, 5, 8 and 12 share.
struct Benchmark {
    spectra: LabeledSpectraF64,
    pnn: Option<(Table, f64)>,
}

impl Benchmark {
    fn new() -> Self {
        Self {
            spectra: benchmark_spectra(&synth_generate(&benchmark_spec()).expect("benchmark generation")),
            pnn: None,
        }
    }

    fn pnn_table(&mut self) -> &(Table, f64) {
        if self.pnn.is_none() {
            let started = Instant::now();
            let table = ratio_sweep(&benchmark_plan(Family::pnn(32, 6)), &self.spectra).expect("PNN sweep");
            self.pnn = Some((table, started.elapsed().as_secs_f64()));
        }
        self.pnn.as_ref().unwrap()
    }
}

fn criterion_1() -> Verdict {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let x = Array2::from_shape_fn((4, 16), |_| rng.gen_range(-1.0..1.0f64));
    let labels = [0, 1, 2, 1];
    let pnn = PnnModel::<f64>::init(PnnConfig::new(16, 4, 3, 3), 5).unwrap();
    let vdnn = VdnnModel::<f64>::init(VdnnConfig::new(16, 3, 3), 5).unwrap();
    let a = finite_difference_audit(&pnn, x.view(), &labels, 1e-5).unwrap();
    let b = finite_difference_audit(&vdnn, x.view(), &labels, 1e-5).unwrap();
    let secs = started.elapsed().as_secs_f64();
    verdict(
        a.max_relative_error < 1e-5 && b.max_relative_error < 1e-5 && secs < 30.0,
        format!(
            "pnn max rel err {:.2e} ({} params), vdnn {:.2e} ({} params), {secs:.2} s",
            a.max_relative_error, a.checked, b.max_relative_error, b.checked
        ),
    )
}

fn criterion_2() -> Verdict {
    let started = Instant::now();
    let p = pnn::param_count(&PnnConfig::new(16384, 100, 6, 7)).hidden_weights;
    let v = vdnn::param_count(&VdnnConfig::new(16384, 6, 7)).hidden_weights;
    let ratio = v as f64 / (16384f64 * 16384f64);
    let secs = started.elapsed().as_secs_f64();
    verdict(
        p == 9_980_400 && (0.66..=0.68).contains(&ratio) && secs < 1.0,
        format!("pnn hidden weights {p}, vdnn {v} = {ratio:.4} K^2"),
    )
}

fn criterion_3() -> Verdict {
    let config = PnnConfig::new(16384, 100, 6, 7);
    let widths = config.input_widths()[..6].to_vec();
    let classifier = config.topology().classifier_input_width();
    let expected: Vec<usize> = (0..6).map(|n| 16384 + 100 * n).collect();
    verdict(
        widths == expected && classifier == 16984,
        format!("layer inputs {widths:?}, classifier input {classifier}"),
    )
}

fn criterion_4(bench: &mut Benchmark) -> Verdict {
    let (table, secs) = bench.pnn_table();
    let hi = table.cell(&ratio_label(0.75)).unwrap().stats.accuracy.mean;
    let lo = table.cell(&ratio_label(0.10)).unwrap().stats.accuracy.mean;
    verdict(
        hi >= 0.95 && lo >= 0.80 && *secs < 300.0,
        format!("PNN-6 mean accuracy 75-25 {hi:.4}, 10-90 {lo:.4}, {secs:.1} s"),
    )
}

fn criterion_5(bench: &mut Benchmark) -> Verdict {
    let (pnn_table, pnn_secs) = bench.pnn_table().clone();
    let started = Instant::now();
    let vdnn_table = ratio_sweep(&benchmark_plan(Family::Vdnn { depth: 6 }), &bench.spectra).expect("VDNN sweep");
    let secs = started.elapsed().as_secs_f64() + pnn_secs;
    let mut pass = secs < 300.0;
    let mut parts = Vec::new();
    for r in BENCH_RATIOS {
        let p = pnn_table.cell(&ratio_label(r)).unwrap().stats.accuracy.mean;
        let v = vdnn_table.cell(&ratio_label(r)).unwrap();
        let gap = (p - v.stats.accuracy.mean) * 100.0;
        pass &= gap >= 10.0;
        parts.push(format!(
            "{}: pnn {p:.4} vdnn {:.4} gap {gap:.1} pp (vdnn runs {:?})",
            ratio_label(r),
            v.stats.accuracy.mean,
            v.accuracies().iter().map(|a| format!("{a:.3}")).collect::<Vec<_>>()
        ));
    }
    verdict(pass, format!("{}, {secs:.1} s", parts.join("; ")))
}

fn criterion_6(bench: &Benchmark) -> Verdict {
    let started = Instant::now();
    let table = ablation_feedforward(&benchmark_plan(Family::pnn(32, 6)), &bench.spectra, 0.75).expect("ablation");
    let secs = started.elapsed().as_secs_f64();
    let cell = |name: &str| table.cell(name).unwrap();
    let mean = |name: &str| cell(name).stats.accuracy.mean;
    // `>` needs a margin of at least one pooled SD; `>=` tolerates one.
    let strictly = |a: &str, b: &str| {
        let m = mean(a) - mean(b);
        m > 0.0 && m >= pooled_sd(cell(a), cell(b))
    };
    let at_least = |a: &str, b: &str| mean(a) - mean(b) >= -pooled_sd(cell(a), cell(b));
    let pass = at_least("full", "no_zh") && strictly("no_zh", "neither") && strictly("full", "no_x") && secs < 600.0;
    let summary: Vec<String> = table
        .cells
        .iter()
        .map(|c| format!("{} {:.4}±{:.4}", c.label, c.stats.accuracy.mean, c.stats.accuracy.sd_or_zero()))
        .collect();
    verdict(pass, format!("{} at 75-25, {secs:.1} s", summary.join(", ")))
}

/// On/off standardization means at 10-90 for a given mix of record lengths.
fn standardization_means(lengths: Vec<usize>) -> (f64, f64) {
    let spec = SynthSpec {
        length_choices: lengths,
        ..benchmark_spec()
    };
    let data = synth_generate(&spec).expect("mixed-length generation");
    let mut plan = ExperimentPlan::new(Family::pnn(32, 6));
    plan.ratios = vec![0.10];
    plan.standardization = vec![true, false];
    plan.runs = RUNS;
    let table = standardization_table::<f64, _>(&data, BENCH_BINS, &plan).expect("standardization ablation");
    let mean = |label: &str| table.cell(label).unwrap().stats.accuracy.mean;
    (mean("on@0.10"), mean("off@0.10"))
}

fn criterion_7() -> Verdict {
    let started = Instant::now();
    let (on, off) = standardization_means(vec![6000, 8192, 12000]);
    let secs = started.elapsed().as_secs_f64();
    // Reported only: with a 4x spread of record lengths the unnormalized
    // magnitudes vary as much as the classes do.
    let (wide_on, wide_off) = standardization_means(vec![4096, 6000, 8192, 12000, 16384]);
    verdict(
        on >= off && secs < 300.0,
        format!(
            "lengths 6000/8192/12000 at 10-90: on {on:.4}, off {off:.4}, {secs:.1} s \
             (4096..16384 spread, not gating: on {wide_on:.4}, off {wide_off:.4})"
        ),
    )
}

fn criterion_8(bench: &mut Benchmark) -> Verdict {
    let (table, _) = bench.pnn_table();
    let mut pass = true;
    let mut parts = Vec::new();
    for r in BENCH_RATIOS {
        let cell = table.cell(&ratio_label(r)).unwrap();
        let (first, last) = (cell.mean_first_epoch_loss(), cell.mean_last_epoch_loss());
        pass &= last < 0.1 * first;
        parts.push(format!(
            "{}: epoch 1 {first:.4}, epoch 30 {last:.4} ({:.1}%)",
            ratio_label(r),
            100.0 * last / first
        ));
    }
    verdict(pass, parts.join("; "))
}

fn criterion_9() -> Verdict {
    // Resonance-dominated spectra: zeroing any window of the large shared
    // harmonics would otherwise drive every class score to zero.
    let spec = SynthSpec {
        resonance_gain: 3.0,
        ..benchmark_spec()
    };
    let dataset = synth_generate(&spec).expect("generation");
    let spectra = benchmark_spectra(&dataset);
    let plan = benchmark_plan(Family::pnn(32, 6));
    let (_, model) = run_once(&spectra, plan.family, 0.75, &plan.train, 0, 0).expect("training");
    let seeds = RunSeeds::derive(0, 0);
    let (_, test) = split_indices(&spectra.labels, spectra.classes(), &SplitSpec::new(0.75, seeds.split)).unwrap();
    let test = spectra.subset(&test);

    let started = Instant::now();
    let report = class_mask_sweep(&model, &test, BENCH_BINS / 32).expect("mask sweep");
    let secs = started.elapsed().as_secs_f64();
    let mut hits = 0;
    let mut parts = Vec::new();
    for (c, band) in dataset.bands.iter().enumerate() {
        let window = report.deficit_range(c);
        let injected = band.bin_range(dataset.spec.sample_rate_hz, BENCH_BINS);
        let overlap = window.start < injected.end && injected.start < window.end;
        hits += usize::from(overlap);
        parts.push(format!("{c}:{window:?}/{injected:?}{}", if overlap { "" } else { "x" }));
    }
    verdict(
        hits >= 5 && secs < 60.0,
        format!("{hits}/7 deficit windows on the injected band [{}], sweep {secs:.1} s", parts.join(" ")),
    )
}

fn criterion_10() -> Verdict {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst_parseval: f64 = 0.0;
    let mut worst_shift: f64 = 0.0;
    let fs = 12_000.0;
    for &len in &[4096usize, 10000, 16384] {
        let x: Vec<f64> = (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let time: f64 = x.iter().map(|v| v * v).sum();
        let freq: f64 = dft(&x).iter().map(|c| c.norm_sqr()).sum::<f64>() / len as f64;
        worst_parseval = worst_parseval.max((time - freq).abs() / time);

        for &bins in &[2048usize, 16384] {
            for &f in &[440.0, 1234.5, 3000.0, 5100.0] {
                let tone: Vec<f64> = (0..len)
                    .map(|n| (2.0 * std::f64::consts::PI * f * n as f64 / fs).sin())
                    .collect();
                let signal = RawSignal::new(tone, fs).unwrap();
                let peak = Standardizer::new(bins).apply(&signal).unwrap().argmax() as f64;
                let one_sided = (len / 2 + 1) as f64;
                let source_bin = (f * len as f64 / fs).round();
                let expected = if one_sided >= bins as f64 {
                    (source_bin * bins as f64 / one_sided).floor()
                } else {
                    source_bin * bins as f64 / one_sided
                };
                worst_shift = worst_shift.max((peak - expected).abs());
            }
        }
    }
    let secs = started.elapsed().as_secs_f64();
    verdict(
        worst_parseval < 1e-6 && worst_shift <= 1.0 && secs < 10.0,
        format!("Parseval rel err {worst_parseval:.2e}, worst peak shift {worst_shift:.2} bins, {secs:.2} s"),
    )
}

fn criterion_11() -> Verdict {
    let auc = binary_auc(&[0.1f64, 0.4, 0.35, 0.8], &[false, false, true, true]).unwrap();
    let uniform = Array2::from_elem((5, 7), 1.0f64 / 7.0);
    let (loss, _) = cross_entropy(uniform.view(), &[0, 1, 2, 3, 6]).unwrap();
    let sd = MeanSd::of(&[0.9, 1.0]).unwrap().sd.unwrap();
    let pass = (auc - 0.75).abs() < 1e-9
        && (loss - 7f64.ln()).abs() < 1e-9
        && (sd - 0.005f64.sqrt()).abs() < 1e-9;
    verdict(pass, format!("auroc {auc:.12}, uniform loss {loss:.12}, sd {sd:.12}"))
}

fn criterion_12(bench: &mut Benchmark) -> Verdict {
    let first = bench.pnn_table().0.to_text();
    let started = Instant::now();
    let again = ratio_sweep(&benchmark_plan(Family::pnn(32, 6)), &bench.spectra).expect("PNN sweep");
    let secs = started.elapsed().as_secs_f64();
    let identical = first == again.to_text()
        && bench.pnn_table().0.cells.iter().zip(&again.cells).all(|(a, b)| {
            a.runs
                .iter()
                .zip(&b.runs)
                .all(|(x, y)| x.report == y.report && x.history == y.history)
        });
    verdict(identical && secs < 300.0, format!("repeat identical: {identical}, {secs:.1} s"))
}

fn criterion_13() -> Option<Verdict> {
    let path = std::env::var("PNNKIT_CWRU_MANIFEST").ok()?;
    let result = (|| -> pnnkit::Result<f64> {
        let manifest = Manifest::load(Path::new(&path))?;
        let spectra = manifest.load_spectra::<f64>(&Preprocessing::Standardized(Standardizer::new(manifest.bins)))?;
        let mut plan = ExperimentPlan::new(Family::pnn(100, 6));
        plan.runs = 1;
        let table = ratio_sweep(&plan, &spectra)?;
        Ok(table.cells[0].stats.accuracy.mean)
    })();
    Some(match result {
        Ok(acc) => verdict(acc >= 0.99, format!("external data, PNN-6 75-25 accuracy {acc:.4}")),
        Err(e) => verdict(false, format!("external data unusable: {e}")),
    })
}

fn main() {
    let selected: Option<BTreeSet<u32>> = std::env::var("PNNKIT_ACCEPT")
        .ok()
        .map(|s| s.split(',').filter_map(|v| v.trim().parse().ok()).collect());
    let wanted = |n: u32| selected.as_ref().map_or(true, |s| s.contains(&n));

    let mut bench: Option<Benchmark> = None;
    let mut failed = Vec::new();
    for n in 1..=13u32 {
        if !wanted(n) {
            continue;
        }
        let started = Instant::now();
        if matches!(n, 4 | 5 | 6 | 8 | 12) && bench.is_none() {
            bench = Some(Benchmark::new());
        }
        let result = match n {
            1 => Some(criterion_1()),
            2 => Some(criterion_2()),
            3 => Some(criterion_3()),
            4 => Some(criterion_4(bench.as_mut().unwrap())),
            5 => Some(criterion_5(bench.as_mut().unwrap())),
            6 => Some(criterion_6(bench.as_mut().unwrap())),
            7 => Some(criterion_7()),
            8 => Some(criterion_8(bench.as_mut().unwrap())),
            9 => Some(criterion_9()),
            10 => Some(criterion_10()),
            11 => Some(criterion_11()),
            12 => Some(criterion_12(bench.as_mut().unwrap())),
            _ => criterion_13(),
        };
        let wall = started.elapsed().as_secs_f64();
        match result {
            Some(v) => {
                let status = if v.pass { "PASS" } else { "FAIL" };
                println!("criterion {n:>2} {status} {} [{wall:.1} s]", v.detail);
                if !v.pass && n != 13 {
                    failed.push(n);
                }
            }
            None => println!("criterion {n:>2} SKIP set PNNKIT_CWRU_MANIFEST to run the external-data check"),
        }
    }
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
