mod settings;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use pnnkit::data::{split, Manifest, Sample, SampleSource, SplitSpec, SynthSpec};
use pnnkit::experiments::{
    self, ablation_feedforward, class_mask_sweep, depth_hidden_sweep, evaluate, preprocessing_for,
    ratio_sweep, standardization_table, AnyModel, ExperimentPlan, Family, RunSeeds,
};
use pnnkit::spectral::{self, SIGNAL_MAGIC};
use pnnkit::{
    pnn, vdnn, Model, PnnConfig, PnnError, PnnModel, TrainConfig, VdnnConfig, VdnnModel, Wiring,
};

use settings::{Arch, Settings};

#[derive(Parser, Debug)]
#[command(name = "pnnkit", version, about = "Progressive neural networks for spectral fault classification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Turn a signal file or a manifest of signals into spectrum files.
    Preprocess(Flags),
    /// Generate a synthetic fault dataset (signals plus manifest).
    Synth(Flags),
    /// Split a manifest into train and test manifests.
    Split(Flags),
    /// Train a model on a manifest.
    Train(Flags),
    /// Evaluate a trained model on a manifest.
    Eval(Flags),
    /// Division-ratio sweep, or a depth/hidden-size grid with --grid.
    Sweep(Flags),
    /// Wiring-variant or standardization ablation.
    Ablate(Flags),
    /// Spectral masking attribution for a trained model.
    Mask(Flags),
    /// Print exact parameter counts.
    Paramcount(Flags),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Preprocess(_) => "preprocess",
            Command::Synth(_) => "synth",
            Command::Split(_) => "split",
            Command::Train(_) => "train",
            Command::Eval(_) => "eval",
            Command::Sweep(_) => "sweep",
            Command::Ablate(_) => "ablate",
            Command::Mask(_) => "mask",
            Command::Paramcount(_) => "paramcount",
        }
    }

    fn flags(&self) -> &Flags {
        match self {
            Command::Preprocess(f)
            | Command::Synth(f)
            | Command::Split(f)
            | Command::Train(f)
            | Command::Eval(f)
            | Command::Sweep(f)
            | Command::Ablate(f)
            | Command::Mask(f)
            | Command::Paramcount(f) => f,
        }
    }
}

/// Every flag maps onto a config key of the same name (dashes become
/// underscores) and overrides the config file.
#[derive(Args, Debug, Default)]
struct Flags {
    /// `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (default: $PNNKIT_OUT, else ./pnnkit-out).
    #[arg(long)]
    out: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Spectrum length.
    #[arg(long)]
    k: Option<String>,
    /// Hidden width per progressive layer; comma list for --grid.
    #[arg(long)]
    hd: Option<String>,
    /// Number of hidden layers; comma list for --grid.
    #[arg(long)]
    depth: Option<String>,
    #[arg(long)]
    classes: Option<String>,
    /// Training share in (0, 1); comma list for sweep.
    #[arg(long)]
    ratio: Option<String>,
    #[arg(long)]
    runs: Option<String>,
    #[arg(long)]
    epochs: Option<String>,
    #[arg(long)]
    batch: Option<String>,
    #[arg(long)]
    lr: Option<String>,
    #[arg(long)]
    wd: Option<String>,
    #[arg(long = "mask-size")]
    mask_size: Option<String>,
    /// pnn | vdnn
    #[arg(long)]
    arch: Option<String>,
    /// full | no_zh | no_x | neither | all
    #[arg(long)]
    variant: Option<String>,
    /// on | off | both
    #[arg(long)]
    standardize: Option<String>,
    /// Input manifest.
    #[arg(long)]
    manifest: Option<String>,
    /// Model file.
    #[arg(long)]
    model: Option<String>,
    /// Input signal file or manifest (preprocess).
    #[arg(long)]
    input: Option<String>,
    /// wiring | standardization (ablate)
    #[arg(long)]
    study: Option<String>,
    /// Synthetic generator: samples per class.
    #[arg(long = "samples-per-class")]
    samples_per_class: Option<String>,
    /// Synthetic generator: record length; comma list for mixed lengths.
    #[arg(long = "signal-length")]
    signal_length: Option<String>,
    /// Synthetic generator: noise level in dB (`inf` disables noise).
    #[arg(long = "snr-db")]
    snr_db: Option<String>,
    /// Depth/hidden-size grid instead of a ratio sweep.
    #[arg(long)]
    grid: bool,
}

impl Flags {
    fn overrides(&self) -> Vec<(&'static str, String)> {
        let pairs: [(&'static str, &Option<String>); 23] = [
            ("out", &self.out),
            ("seed", &self.seed),
            ("k", &self.k),
            ("hd", &self.hd),
            ("depth", &self.depth),
            ("classes", &self.classes),
            ("ratio", &self.ratio),
            ("runs", &self.runs),
            ("epochs", &self.epochs),
            ("batch", &self.batch),
            ("lr", &self.lr),
            ("wd", &self.wd),
            ("mask_size", &self.mask_size),
            ("arch", &self.arch),
            ("variant", &self.variant),
            ("standardize", &self.standardize),
            ("manifest", &self.manifest),
            ("model", &self.model),
            ("input", &self.input),
            ("study", &self.study),
            ("samples_per_class", &self.samples_per_class),
            ("signal_length", &self.signal_length),
            ("snr_db", &self.snr_db),
        ];
        let mut out: Vec<(&'static str, String)> = pairs
            .into_iter()
            .filter_map(|(k, v)| v.as_ref().map(|v| (k, v.clone())))
            .collect();
        if self.grid {
            out.push(("grid", "true".into()));
        }
        out
    }
}

/// Failure classes mapped onto exit codes.
#[derive(Debug)]
enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<PnnError> for Failure {
    fn from(e: PnnError) -> Self {
        match &e {
            PnnError::InvalidInput(_)
            | PnnError::Config(_)
            | PnnError::Format { .. }
            | PnnError::Manifest { .. } => Failure::Usage(e.to_string()),
            PnnError::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => {
                Failure::Usage(e.to_string())
            }
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: &Cli) -> CliResult<()> {
    let flags = cli.command.flags();
    let mut settings = Settings::default();
    if let Some(path) = &flags.config {
        let text = fs::read_to_string(path)
            .map_err(|e| Failure::Usage(format!("cannot read config file {}: {e}", path.display())))?;
        settings.apply_file(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    }
    for (key, value) in flags.overrides() {
        settings.set(key, &value).map_err(Failure::Usage)?;
    }
    let out = settings.out_dir();
    fs::create_dir_all(&out).map_err(|e| Failure::Runtime(format!("cannot create {}: {e}", out.display())))?;
    write_stamp(&out, cli.command.name(), &settings)?;

    match &cli.command {
        Command::Preprocess(_) => preprocess(&settings, &out),
        Command::Synth(_) => synth(&settings, &out),
        Command::Split(_) => split_cmd(&settings, &out),
        Command::Train(_) => train_cmd(&settings, &out),
        Command::Eval(_) => eval_cmd(&settings, &out),
        Command::Sweep(_) => sweep_cmd(&settings, &out),
        Command::Ablate(_) => ablate_cmd(&settings, &out),
        Command::Mask(_) => mask_cmd(&settings, &out),
        Command::Paramcount(_) => paramcount(&settings, &out),
    }
}

fn write_stamp(out: &Path, command: &str, settings: &Settings) -> CliResult<()> {
    let seeds = RunSeeds::derive(settings.seed, 0);
    let mut text = format!(
        "pnnkit_version = {}\ncommand = {command}\nargv = {}\n",
        env!("CARGO_PKG_VERSION"),
        std::env::args().collect::<Vec<_>>().join(" ")
    );
    text.push_str(&settings.to_text());
    text.push_str(&format!(
        "split_seed = {}\ninit_seed = {}\nshuffle_seed = {}\n",
        seeds.split, seeds.init, seeds.shuffle
    ));
    write_text(&out.join(format!("stamp_{command}.txt")), &text)
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| Failure::Runtime(format!("cannot write {}: {e}", path.display())))
}

fn required<'a>(value: &'a Option<String>, key: &str) -> CliResult<&'a str> {
    value
        .as_deref()
        .ok_or_else(|| Failure::Usage(format!("--{} is required for this command", key.replace('_', "-"))))
}

fn load_manifest(settings: &Settings) -> CliResult<Manifest> {
    Ok(Manifest::load(Path::new(required(&settings.manifest, "manifest")?))?)
}

/// Copy of `manifest` whose file paths are absolute, so it can be written
/// anywhere.
fn absolutize(manifest: &Manifest) -> CliResult<Manifest> {
    let mut m = manifest.clone();
    for s in &mut m.samples {
        if let SampleSource::File(p) = &s.source {
            let full = manifest.resolve(p);
            let abs = full
                .canonicalize()
                .map_err(|e| Failure::Usage(format!("sample `{}`: {}: {e}", s.id, full.display())))?;
            s.source = SampleSource::File(abs);
        }
    }
    Ok(m)
}

fn family(settings: &Settings) -> CliResult<Family> {
    let depth = settings.single_depth()?;
    Ok(match settings.arch {
        Arch::Pnn => Family::Pnn {
            hidden_width: settings.single_hd()?,
            depth,
            wiring: settings.single_variant()?,
        },
        Arch::Vdnn => Family::Vdnn { depth },
    })
}

fn train_config(settings: &Settings) -> TrainConfig {
    TrainConfig {
        learning_rate: settings.lr,
        weight_decay: settings.wd,
        batch_size: settings.batch,
        epochs: settings.epochs,
        ..TrainConfig::default()
    }
}

/// Plan seeded with the first listed depth, width and wiring; drivers that
/// iterate over lists replace the family themselves.
fn plan(settings: &Settings) -> CliResult<ExperimentPlan> {
    let first = |key: &str, len: usize| {
        if len == 0 {
            Err(Failure::Usage(format!("`{key}` needs at least one value")))
        } else {
            Ok(())
        }
    };
    first("depth", settings.depth.len())?;
    first("hd", settings.hd.len())?;
    let family = match settings.arch {
        Arch::Pnn => Family::Pnn {
            hidden_width: settings.hd[0],
            depth: settings.depth[0],
            wiring: settings.variant.first().copied().unwrap_or(Wiring::Full),
        },
        Arch::Vdnn => Family::Vdnn { depth: settings.depth[0] },
    };
    let mut plan = ExperimentPlan::new(family);
    plan.depths = settings.depth.clone();
    plan.hidden_widths = settings.hd.clone();
    plan.ratios = settings.ratio.clone();
    plan.standardization = settings.standardize.clone();
    plan.runs = settings.runs;
    plan.base_seed = settings.seed;
    plan.train = train_config(settings);
    plan.validate()?;
    Ok(plan)
}

fn preprocess(settings: &Settings, out: &Path) -> CliResult<()> {
    let input = PathBuf::from(required(&settings.input, "input")?);
    let prep = preprocessing_for(settings.single_standardize()?, settings.k);
    let bytes = fs::read(&input).map_err(|e| Failure::Usage(format!("cannot read {}: {e}", input.display())))?;
    if bytes.starts_with(SIGNAL_MAGIC) {
        let signal = spectral::decode_signal(&bytes)?.cast::<f64>();
        let stem = input.file_stem().and_then(|s| s.to_str()).unwrap_or("signal");
        let target = out.join(format!("{stem}.spc"));
        spectral::write_spectrum(&target, &prep.apply(&signal)?)?;
        println!("wrote {}", target.display());
        return Ok(());
    }
    let manifest = Manifest::load(&input)?;
    let spectra = manifest.load_spectra::<f64>(&prep)?;
    let dir = out.join("spectra");
    let mut samples = Vec::with_capacity(manifest.samples.len());
    for (s, row) in manifest.samples.iter().zip(spectra.x.rows()) {
        let name = format!("{}.spc", s.id);
        spectral::write_spectrum(&dir.join(&name), &pnnkit::Spectrum::new(row.to_vec())?)?;
        samples.push(Sample {
            id: s.id.clone(),
            label: s.label,
            source: SampleSource::File(PathBuf::from(name)),
        });
    }
    let mut provenance = manifest.provenance.clone();
    provenance.push(format!("preprocessed from {} with k={}", input.display(), settings.k));
    let result = Manifest {
        class_names: manifest.class_names.clone(),
        samples,
        bins: settings.k,
        provenance,
        root: dir.clone(),
    };
    result.save(&dir.join("manifest.txt"))?;
    println!("wrote {} spectra and {}", result.samples.len(), dir.join("manifest.txt").display());
    Ok(())
}

fn synth(settings: &Settings, out: &Path) -> CliResult<()> {
    let lengths = &settings.signal_length;
    let spec = SynthSpec {
        classes: settings.classes,
        samples_per_class: settings.samples_per_class,
        signal_length: lengths[0],
        length_choices: if lengths.len() > 1 { lengths.clone() } else { Vec::new() },
        noise_snr_db: settings.snr_db,
        seed: settings.seed,
        ..SynthSpec::default()
    };
    let data = pnnkit::data::synth_generate(&spec)?;
    let dir = out.join("synth");
    let manifest = data.write(&dir, settings.k)?;
    println!(
        "wrote {} signals in {} classes to {}",
        manifest.samples.len(),
        manifest.classes(),
        dir.join("manifest.txt").display()
    );
    Ok(())
}

fn split_cmd(settings: &Settings, out: &Path) -> CliResult<()> {
    let manifest = absolutize(&load_manifest(settings)?)?;
    let spec = SplitSpec::new(settings.single_ratio()?, RunSeeds::derive(settings.seed, 0).split);
    let (train, test) = split(&manifest, &spec)?;
    train.save(&out.join("train.manifest.txt"))?;
    test.save(&out.join("test.manifest.txt"))?;
    println!("train = {}\ntest = {}", train.samples.len(), test.samples.len());
    Ok(())
}

fn load_data(settings: &Settings, manifest: &Manifest) -> CliResult<pnnkit::LabeledSpectraF64> {
    Ok(manifest.load_spectra::<f64>(&preprocessing_for(settings.single_standardize()?, settings.k))?)
}

fn train_cmd(settings: &Settings, out: &Path) -> CliResult<()> {
    let manifest = load_manifest(settings)?;
    let data = load_data(settings, &manifest)?;
    let seeds = RunSeeds::derive(settings.seed, 0);
    let mut model: AnyModel<f64> = family(settings)?.build(data.bins(), data.classes(), seeds.init)?;
    let config = TrainConfig {
        seed: seeds.shuffle,
        ..train_config(settings)
    };
    let history = pnnkit::train(&mut model, data.x.view(), &data.labels, &config)?;
    let (path, bytes) = match &model {
        AnyModel::Pnn(m) => (out.join("model.pnn"), m.to_bytes()),
        AnyModel::Vdnn(m) => (out.join("model.vdnn"), m.to_bytes()),
    };
    fs::write(&path, bytes).map_err(|e| Failure::Runtime(format!("cannot write {}: {e}", path.display())))?;
    write_text(&out.join("history.tsv"), &history.to_table())?;
    let last = history.epochs();
    println!(
        "model = {}\nepochs = {last}\nfirst_epoch_loss = {:.6}\nlast_epoch_loss = {:.6}",
        path.display(),
        history.epoch_mean_loss(1),
        history.epoch_mean_loss(last)
    );
    Ok(())
}

fn load_model(settings: &Settings) -> CliResult<AnyModel<f64>> {
    let path = PathBuf::from(required(&settings.model, "model")?);
    let bytes = fs::read(&path).map_err(|e| Failure::Usage(format!("cannot read model {}: {e}", path.display())))?;
    if bytes.starts_with(pnn::MODEL_MAGIC) {
        Ok(AnyModel::Pnn(PnnModel::decode(&bytes)?))
    } else if bytes.starts_with(vdnn::MODEL_MAGIC) {
        Ok(AnyModel::Vdnn(VdnnModel::decode(&bytes)?))
    } else {
        Err(Failure::Usage(format!("{} is not a model file", path.display())))
    }
}

fn eval_cmd(settings: &Settings, out: &Path) -> CliResult<()> {
    let model = load_model(settings)?;
    let manifest = load_manifest(settings)?;
    let data = load_data(settings, &manifest)?;
    if data.bins() != model.network().input_width() || data.classes() != model.network().classes() {
        return Err(Failure::Usage(format!(
            "model expects k={} and {} classes, data has k={} and {}",
            model.network().input_width(),
            model.network().classes(),
            data.bins(),
            data.classes()
        )));
    }
    let report = evaluate(&model, data.x.view(), &data.labels, data.classes())?;
    let text = report.to_text();
    write_text(&out.join("report.txt"), &text)?;
    print!("{text}");
    Ok(())
}

fn sweep_cmd(settings: &Settings, out: &Path) -> CliResult<()> {
    let manifest = load_manifest(settings)?;
    let data = load_data(settings, &manifest)?;
    if settings.grid {
        let mut plan = plan(settings)?;
        if plan.hidden_widths.is_empty() {
            return Err(Failure::Usage("--grid needs --arch pnn".into()));
        }
        plan.family = Family::pnn(plan.hidden_widths[0], plan.depths[0]);
        let table = depth_hidden_sweep(&plan, &data, settings.single_ratio()?)?;
        write_text(&out.join("grid.tsv"), &table.to_text())?;
        write_text(&out.join("grid_timings.tsv"), &table.timings_text())?;
        let kv: String = table
            .rows
            .iter()
            .map(|r| experiments::Table {
                title: String::new(),
                row_header: String::new(),
                cells: vec![r.cell.clone()],
            })
            .map(|t| t.to_kv())
            .collect();
        write_text(&out.join("grid_runs.txt"), &kv)?;
        print!("{}", table.to_text());
        return Ok(());
    }
    family(settings)?;
    let table = ratio_sweep(&plan(settings)?, &data)?;
    write_text(&out.join("sweep.tsv"), &table.to_text())?;
    write_text(&out.join("sweep_runs.txt"), &table.to_kv())?;
    print!("{}", table.to_text());
    Ok(())
}

fn ablate_cmd(settings: &Settings, out: &Path) -> CliResult<()> {
    let manifest = load_manifest(settings)?;
    let table = match settings.study.as_str() {
        "wiring" => {
            if settings.arch != Arch::Pnn {
                return Err(Failure::Usage("wiring ablation needs --arch pnn".into()));
            }
            let data = load_data(settings, &manifest)?;
            let ratio = settings.single_ratio()?;
            let mut p = plan(settings)?;
            if settings.variant.len() == Wiring::ALL.len() {
                ablation_feedforward(&p, &data, ratio)?
            } else {
                let mut cells = Vec::new();
                for &w in &settings.variant {
                    p.family = Family::Pnn {
                        hidden_width: settings.single_hd()?,
                        depth: settings.single_depth()?,
                        wiring: w,
                    };
                    cells.push(experiments::feedforward_variant(w, &p, &data, ratio)?);
                }
                experiments::Table {
                    title: format!("feed-forward ablation at train ratio {ratio:.2}"),
                    row_header: "variant".into(),
                    cells,
                }
            }
        }
        "standardization" => standardization_table::<f64, _>(&manifest, settings.k, &plan(settings)?)?,
        other => return Err(Failure::Usage(format!("unknown study `{other}`"))),
    };
    write_text(&out.join(format!("ablate_{}.tsv", settings.study)), &table.to_text())?;
    write_text(&out.join(format!("ablate_{}_runs.txt", settings.study)), &table.to_kv())?;
    print!("{}", table.to_text());
    Ok(())
}

fn mask_cmd(settings: &Settings, out: &Path) -> CliResult<()> {
    let model = load_model(settings)?;
    let manifest = load_manifest(settings)?;
    let data = load_data(settings, &manifest)?;
    let mask = settings.mask_size.unwrap_or((data.bins() / 32).max(1));
    let report = class_mask_sweep(&model, &data, mask)?;
    let text = report.to_text();
    write_text(&out.join("mask.tsv"), &text)?;
    print!("{text}");
    Ok(())
}

fn paramcount(settings: &Settings, out: &Path) -> CliResult<()> {
    let depth = settings.single_depth()?;
    let counts = match settings.arch {
        Arch::Pnn => {
            let config = PnnConfig::new(settings.k, settings.single_hd()?, depth, settings.classes)
                .with_wiring(settings.single_variant()?);
            config.validate()?;
            pnn::param_count(&config)
        }
        Arch::Vdnn => {
            let config = VdnnConfig::new(settings.k, depth, settings.classes);
            config.validate()?;
            vdnn::param_count(&config)
        }
    };
    let text = format!(
        "hidden_weights={}\nhidden_biases={}\nbn_params={}\nclassifier_params={}\ntotal={}\n",
        counts.hidden_weights, counts.hidden_biases, counts.bn_params, counts.classifier_params, counts.total
    );
    write_text(&out.join("paramcount.txt"), &text)?;
    print!("{text}");
    Ok(())
}
