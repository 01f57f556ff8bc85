//! Labeled sample collections, the text manifest format, stratified
//! train/test splitting and a synthetic rotating-machinery signal generator.
//!
//! Manifest layout (UTF-8, line oriented):
//!
//! ```text
//! PNNMAN1 <C> <K>
//! # optional provenance lines
//! <class name 0>
//! ...
//! <class name C-1>
//! <id>\t<class name>\t<path>
//! ```
//!
//! Paths are relative to the manifest's directory unless absolute and may
//! point at either a signal container or a spectrum container.

use std::collections::HashSet;
use std::f64::consts::PI;
use std::fs;
use std::ops::Range;
use std::path::{Path, PathBuf};

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::container;
use crate::error::{PnnError, Result};
use crate::scalar::Scalar;
use crate::spectral::{self, Preprocessing, RawSignal, Spectrum, SIGNAL_MAGIC, SPECTRUM_MAGIC};

pub const MANIFEST_MAGIC: &str = "PNNMAN1";

#[derive(Debug, Clone, PartialEq)]
pub enum SampleSource {
    /// Signal or spectrum container on disk.
    File(PathBuf),
    /// In-memory spectrum; cannot be written to a manifest.
    Inline(Spectrum<f32>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub label: usize,
    pub source: SampleSource,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub class_names: Vec<String>,
    pub samples: Vec<Sample>,
    /// Standardized spectrum length `K`.
    pub bins: usize,
    pub provenance: Vec<String>,
    /// Directory relative paths are resolved against.
    pub root: PathBuf,
}

impl Manifest {
    pub fn classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.label).collect()
    }

    /// Checks class count, label range, id uniqueness and that every class
    /// has at least one sample.
    pub fn validate(&self) -> Result<()> {
        if self.classes() < 2 {
            return Err(PnnError::InvalidInput(format!(
                "manifest needs at least 2 classes, has {}",
                self.classes()
            )));
        }
        let mut ids = HashSet::new();
        let mut counts = vec![0usize; self.classes()];
        for s in &self.samples {
            if !ids.insert(s.id.as_str()) {
                return Err(PnnError::InvalidInput(format!("duplicate sample id `{}`", s.id)));
            }
            if s.label >= self.classes() {
                return Err(PnnError::InvalidInput(format!(
                    "sample `{}` has label {} outside {} classes",
                    s.id,
                    s.label,
                    self.classes()
                )));
            }
            counts[s.label] += 1;
        }
        if let Some(c) = counts.iter().position(|&n| n == 0) {
            return Err(PnnError::InvalidInput(format!(
                "class `{}` has no samples",
                self.class_names[c]
            )));
        }
        Ok(())
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.root.join(path)
        }
    }

    /// Manifest restricted to `indices`, keeping class list and provenance.
    pub fn subset(&self, indices: &[usize]) -> Manifest {
        Manifest {
            class_names: self.class_names.clone(),
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
            bins: self.bins,
            provenance: self.provenance.clone(),
            root: self.root.clone(),
        }
    }

    pub fn to_text(&self) -> Result<String> {
        let mut out = format!("{MANIFEST_MAGIC} {} {}\n", self.classes(), self.bins);
        for p in &self.provenance {
            out.push_str("# ");
            out.push_str(p);
            out.push('\n');
        }
        for name in &self.class_names {
            out.push_str(name);
            out.push('\n');
        }
        for s in &self.samples {
            let path = match &s.source {
                SampleSource::File(p) => p,
                SampleSource::Inline(_) => {
                    return Err(PnnError::InvalidInput(format!(
                        "sample `{}` is in-memory only and cannot be written",
                        s.id
                    )))
                }
            };
            out.push_str(&format!(
                "{}\t{}\t{}\n",
                s.id,
                self.class_names[s.label],
                path.display()
            ));
        }
        Ok(out)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        container::write_file(path, self.to_text()?.as_bytes())
    }

    pub fn parse(text: &str, origin: &Path) -> Result<Manifest> {
        let err = |line: usize, message: String| PnnError::Manifest {
            path: origin.to_path_buf(),
            line,
            message,
        };
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let (_, header) = lines.next().ok_or_else(|| err(1, "empty file".into()))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 3 || fields[0] != MANIFEST_MAGIC {
            return Err(err(1, format!("expected `{MANIFEST_MAGIC} <C> <K>` header")));
        }
        let classes: usize = fields[1]
            .parse()
            .map_err(|_| err(1, format!("bad class count `{}`", fields[1])))?;
        let bins: usize = fields[2]
            .parse()
            .map_err(|_| err(1, format!("bad bin count `{}`", fields[2])))?;

        let mut provenance = Vec::new();
        let mut class_names = Vec::with_capacity(classes);
        let mut samples = Vec::new();
        let mut ids = HashSet::new();
        for (no, line) in lines {
            if line.is_empty() {
                continue;
            }
            if class_names.len() < classes {
                if let Some(p) = line.strip_prefix('#') {
                    provenance.push(p.strip_prefix(' ').unwrap_or(p).to_string());
                } else {
                    class_names.push(line.to_string());
                }
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 3 {
                return Err(err(no, "expected `id<TAB>class<TAB>path`".into()));
            }
            let label = class_names
                .iter()
                .position(|c| c == cols[1])
                .ok_or_else(|| err(no, format!("unknown class `{}`", cols[1])))?;
            if !ids.insert(cols[0].to_string()) {
                return Err(err(no, format!("duplicate id `{}`", cols[0])));
            }
            samples.push(Sample {
                id: cols[0].to_string(),
                label,
                source: SampleSource::File(PathBuf::from(cols[2])),
            });
        }
        if class_names.len() != classes {
            return Err(err(
                text.lines().count(),
                format!("header declares {classes} classes, found {}", class_names.len()),
            ));
        }
        Ok(Manifest {
            class_names,
            samples,
            bins,
            provenance,
            root: origin.parent().map(Path::to_path_buf).unwrap_or_default(),
        })
    }

    /// Reads a manifest and checks that every referenced file exists.
    pub fn load(path: &Path) -> Result<Manifest> {
        let text = fs::read_to_string(path).map_err(|e| PnnError::io(path, e))?;
        let manifest = Manifest::parse(&text, path)?;
        for s in &manifest.samples {
            if let SampleSource::File(p) = &s.source {
                let full = manifest.resolve(p);
                if !full.is_file() {
                    return Err(PnnError::InvalidInput(format!(
                        "sample `{}` references missing file {}",
                        s.id,
                        full.display()
                    )));
                }
            }
        }
        Ok(manifest)
    }

    /// Loads every sample as a `K`-bin spectrum. Signal files go through
    /// `preprocessing`; spectrum files must already have `K` bins.
    pub fn load_spectra<T: Scalar>(&self, preprocessing: &Preprocessing) -> Result<LabeledSpectra<T>> {
        let k = preprocessing.bins();
        let mut x = Array2::zeros((self.samples.len(), k));
        for (row, s) in x.axis_iter_mut(Axis(0)).zip(&self.samples) {
            let spectrum: Spectrum<T> = match &s.source {
                SampleSource::Inline(sp) => Spectrum::new(sp.bins().iter().map(|&b| T::of(b as f64)).collect())?,
                SampleSource::File(p) => {
                    let full = self.resolve(p);
                    let bytes = container::read_file(&full)?;
                    if bytes.starts_with(SIGNAL_MAGIC) {
                        preprocessing.apply(&spectral::decode_signal(&bytes)?.cast::<T>())?
                    } else if bytes.starts_with(SPECTRUM_MAGIC) {
                        let sp = spectral::decode_spectrum(&bytes)?;
                        Spectrum::new(sp.bins().iter().map(|&b| T::of(b as f64)).collect())?
                    } else {
                        return Err(PnnError::format(
                            0,
                            format!("{} is neither a signal nor a spectrum file", full.display()),
                        ));
                    }
                }
            };
            if spectrum.len() != k {
                return Err(PnnError::Shape(format!(
                    "sample `{}` has {} bins, expected {k}",
                    s.id,
                    spectrum.len()
                )));
            }
            let mut row = row;
            row.assign(&ndarray::ArrayView1::from(spectrum.bins()));
        }
        Ok(LabeledSpectra {
            x,
            labels: self.labels(),
            class_names: self.class_names.clone(),
        })
    }
}

/// Dense `[M x K]` spectra with labels; what the trainer consumes.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSpectra<T> {
    pub x: Array2<T>,
    pub labels: Vec<usize>,
    pub class_names: Vec<String>,
}

impl<T: Scalar> LabeledSpectra<T> {
    pub fn classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn bins(&self) -> usize {
        self.x.ncols()
    }

    pub fn subset(&self, indices: &[usize]) -> LabeledSpectra<T> {
        LabeledSpectra {
            x: self.x.select(Axis(0), indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            class_names: self.class_names.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    /// Training share in `(0, 1)`.
    pub train_fraction: f64,
    pub seed: u64,
    pub stratified: bool,
}

impl SplitSpec {
    pub fn new(train_fraction: f64, seed: u64) -> Self {
        Self {
            train_fraction,
            seed,
            stratified: true,
        }
    }
}

/// `max(1, round_half_up(fraction * count))`
pub fn train_count(fraction: f64, count: usize) -> usize {
    ((fraction * count as f64 + 0.5).floor() as usize).clamp(1, count.max(1))
}

/// Seeded split of sample indices into sorted `(train, test)` lists.
///
/// Stratified mode takes `max(1, round(fraction * n_c))` samples of every
/// class `c`; unstratified mode applies the same rule to the whole set.
pub fn split_indices(labels: &[usize], classes: usize, spec: &SplitSpec) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(PnnError::Config(format!(
            "train fraction must be in (0, 1), got {}",
            spec.train_fraction
        )));
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for (i, &y) in labels.iter().enumerate() {
        if y >= classes {
            return Err(PnnError::InvalidInput(format!("label {y} outside {classes} classes")));
        }
        by_class[y].push(i);
    }
    if let Some(c) = by_class.iter().position(Vec::is_empty) {
        return Err(PnnError::InvalidInput(format!("class {c} has no samples")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    if spec.stratified {
        for members in &mut by_class {
            members.shuffle(&mut rng);
            let n = train_count(spec.train_fraction, members.len());
            train.extend_from_slice(&members[..n]);
            test.extend_from_slice(&members[n..]);
        }
    } else {
        let mut all: Vec<usize> = (0..labels.len()).collect();
        all.shuffle(&mut rng);
        let n = train_count(spec.train_fraction, all.len());
        train.extend_from_slice(&all[..n]);
        test.extend_from_slice(&all[n..]);
        let mut seen = vec![false; classes];
        train.iter().for_each(|&i| seen[labels[i]] = true);
        if let Some(c) = seen.iter().position(|s| !s) {
            return Err(PnnError::InvalidInput(format!(
                "unstratified split left class {c} without training samples"
            )));
        }
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// Splits a manifest into `(train, test)` manifests.
pub fn split(manifest: &Manifest, spec: &SplitSpec) -> Result<(Manifest, Manifest)> {
    let (train, test) = split_indices(&manifest.labels(), manifest.classes(), spec)?;
    Ok((manifest.subset(&train), manifest.subset(&test)))
}

/// Parameters of the synthetic fault-signal generator.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub classes: usize,
    pub samples_per_class: usize,
    /// Record length; ignored when `length_choices` is non-empty.
    pub signal_length: usize,
    /// Per-sample record length drawn uniformly from this list when set.
    pub length_choices: Vec<usize>,
    pub sample_rate_hz: f64,
    /// Shaft rotation frequency; harmonics `1..=harmonics` of it are present.
    pub base_freq_hz: f64,
    pub harmonics: usize,
    /// How far class harmonic patterns depart from a shared machine
    /// pattern: class `c` harmonic `h` is `shared_h * (1 + contrast * u)`
    /// with `u` uniform in `[-1, 1]`.
    pub class_contrast: f64,
    /// Overall amplitude scale applied to every component.
    pub amplitude: f64,
    /// White-noise level relative to the clean signal; `INFINITY` disables.
    pub noise_snr_db: f64,
    /// Resonance centre range as fractions of Nyquist.
    pub resonance_center: (f64, f64),
    /// Resonance bandwidth range as fractions of Nyquist.
    pub resonance_bandwidth: (f64, f64),
    /// Number of tones spread across each resonance band.
    pub resonance_tones: usize,
    /// Amplitude of each resonance tone relative to a unit harmonic.
    pub resonance_gain: f64,
    /// Per-sample multiplicative amplitude jitter (`0.1` = ±10%).
    pub amplitude_jitter: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            classes: 7,
            samples_per_class: 75,
            signal_length: 8192,
            length_choices: Vec::new(),
            sample_rate_hz: 12_000.0,
            base_freq_hz: 29.95,
            harmonics: 10,
            class_contrast: 0.02,
            amplitude: 0.01,
            noise_snr_db: 15.0,
            resonance_center: (0.1, 0.9),
            resonance_bandwidth: (0.01, 0.03),
            resonance_tones: 12,
            resonance_gain: 0.03,
            amplitude_jitter: 0.1,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 || self.samples_per_class == 0 {
            return Err(PnnError::Config(format!(
                "need >= 2 classes and >= 1 sample per class (got {} and {})",
                self.classes, self.samples_per_class
            )));
        }
        let lengths = if self.length_choices.is_empty() {
            vec![self.signal_length]
        } else {
            self.length_choices.clone()
        };
        if lengths.iter().any(|&l| l < 2) {
            return Err(PnnError::Config("signal length must be >= 2".into()));
        }
        if !(self.sample_rate_hz > 0.0) || !(self.base_freq_hz > 0.0) {
            return Err(PnnError::Config("sample rate and base frequency must be > 0".into()));
        }
        let nyquist = self.sample_rate_hz / 2.0;
        if self.harmonics as f64 * self.base_freq_hz >= nyquist {
            return Err(PnnError::Config(format!(
                "harmonic {} of {} Hz is above Nyquist ({nyquist} Hz)",
                self.harmonics, self.base_freq_hz
            )));
        }
        let (c_lo, c_hi) = self.resonance_center;
        let (b_lo, b_hi) = self.resonance_bandwidth;
        if !(0.0 < c_lo && c_lo <= c_hi && 0.0 < b_lo && b_lo <= b_hi) {
            return Err(PnnError::Config("resonance ranges must be positive and ordered".into()));
        }
        if c_hi + b_hi / 2.0 >= 1.0 || c_lo - b_hi / 2.0 <= 0.0 {
            return Err(PnnError::Config(format!(
                "resonance band up to {:.1} Hz leaves (0, Nyquist = {nyquist} Hz)",
                (c_hi + b_hi / 2.0) * nyquist
            )));
        }
        if !(self.class_contrast >= 0.0 && self.class_contrast <= 1.0) || !(self.amplitude > 0.0) {
            return Err(PnnError::Config(
                "class_contrast must be in [0, 1] and amplitude > 0".into(),
            ));
        }
        if self.resonance_tones == 0 || !(self.amplitude_jitter >= 0.0 && self.amplitude_jitter < 1.0) {
            return Err(PnnError::Config(
                "need >= 1 resonance tone and jitter in [0, 1)".into(),
            ));
        }
        if self.noise_snr_db.is_nan() {
            return Err(PnnError::Config("noise_snr_db is NaN".into()));
        }
        Ok(())
    }
}

/// Class-specific resonance band recorded by the generator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResonanceBand {
    pub center_hz: f64,
    pub bandwidth_hz: f64,
}

impl ResonanceBand {
    pub fn low_hz(&self) -> f64 {
        self.center_hz - self.bandwidth_hz / 2.0
    }

    pub fn high_hz(&self) -> f64 {
        self.center_hz + self.bandwidth_hz / 2.0
    }

    /// Standardized-spectrum bins the band occupies (one-sided spectrum
    /// mapped linearly onto `bins`).
    pub fn bin_range(&self, sample_rate_hz: f64, bins: usize) -> Range<usize> {
        let nyquist = sample_rate_hz / 2.0;
        let to_bin = |f: f64| ((f / nyquist) * bins as f64).clamp(0.0, bins as f64);
        let lo = to_bin(self.low_hz()).floor() as usize;
        let hi = (to_bin(self.high_hz()).ceil() as usize).max(lo + 1);
        lo..hi.min(bins)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct ClassSignature {
    band: ResonanceBand,
}

/// Generated signals plus the ground truth the generator used.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthDataset {
    pub spec: SynthSpec,
    pub class_names: Vec<String>,
    pub signals: Vec<RawSignal<f64>>,
    pub labels: Vec<usize>,
    pub harmonic_amplitudes: Vec<Vec<f64>>,
    pub bands: Vec<ResonanceBand>,
}

/// Each class gets a harmonic amplitude pattern over `f0`'s harmonics and
/// one resonance band (centre and width drawn once per class), both from
/// `seed`. Every sample jitters all amplitudes by `±amplitude_jitter`,
/// randomizes every phase and adds white noise at `noise_snr_db`.
pub fn synth_generate(spec: &SynthSpec) -> Result<SynthDataset> {
    spec.validate()?;
    let nyquist = spec.sample_rate_hz / 2.0;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let mut harmonic_amplitudes = Vec::with_capacity(spec.classes);
    let mut signatures = Vec::with_capacity(spec.classes);
    let shared: Vec<f64> = (0..spec.harmonics).map(|_| rng.gen_range(0.2..1.0)).collect();
    for _ in 0..spec.classes {
        harmonic_amplitudes.push(
            shared
                .iter()
                .map(|a| a * (1.0 + spec.class_contrast * rng.gen_range(-1.0..=1.0)))
                .collect::<Vec<f64>>(),
        );
        let center = rng.gen_range(spec.resonance_center.0..=spec.resonance_center.1) * nyquist;
        let width = rng.gen_range(spec.resonance_bandwidth.0..=spec.resonance_bandwidth.1) * nyquist;
        signatures.push(ClassSignature {
            band: ResonanceBand {
                center_hz: center,
                bandwidth_hz: width,
            },
        });
    }

    let tones = spec.resonance_tones;
    let mut signals = Vec::with_capacity(spec.classes * spec.samples_per_class);
    let mut labels = Vec::with_capacity(signals.capacity());
    for class in 0..spec.classes {
        let band = signatures[class].band;
        for _ in 0..spec.samples_per_class {
            let len = if spec.length_choices.is_empty() {
                spec.signal_length
            } else {
                *spec.length_choices.choose(&mut rng).expect("non-empty")
            };
            let mut components: Vec<(f64, f64, f64)> = Vec::with_capacity(spec.harmonics + tones);
            let jitter = |rng: &mut ChaCha8Rng, v: f64| {
                if v > 0.0 {
                    1.0 + rng.gen_range(-v..=v)
                } else {
                    1.0
                }
            };
            for (h, &a) in harmonic_amplitudes[class].iter().enumerate() {
                let f = spec.base_freq_hz * (h + 1) as f64;
                let a = spec.amplitude * a * jitter(&mut rng, spec.amplitude_jitter);
                components.push((f, a, rng.gen_range(0.0..2.0 * PI)));
            }
            for t in 0..tones {
                let frac = if tones == 1 { 0.5 } else { t as f64 / (tones - 1) as f64 };
                let f = band.low_hz() + frac * band.bandwidth_hz;
                let a = spec.amplitude * spec.resonance_gain * jitter(&mut rng, spec.amplitude_jitter);
                components.push((f, a, rng.gen_range(0.0..2.0 * PI)));
            }
            let dt = 1.0 / spec.sample_rate_hz;
            let mut samples: Vec<f64> = (0..len)
                .map(|n| {
                    let t = n as f64 * dt;
                    components
                        .iter()
                        .map(|&(f, a, phase)| a * (2.0 * PI * f * t + phase).sin())
                        .sum()
                })
                .collect();
            if spec.noise_snr_db.is_finite() {
                let power = samples.iter().map(|s| s * s).sum::<f64>() / len as f64;
                let sigma = (power / 10f64.powf(spec.noise_snr_db / 10.0)).sqrt();
                let normal = Normal::new(0.0, sigma).map_err(|e| PnnError::Config(e.to_string()))?;
                for s in &mut samples {
                    *s += normal.sample(&mut rng);
                }
            }
            signals.push(RawSignal::new(samples, spec.sample_rate_hz)?);
            labels.push(class);
        }
    }
    debug_assert!(signatures.iter().all(|s| s.band.high_hz() < nyquist));
    Ok(SynthDataset {
        spec: spec.clone(),
        class_names: (0..spec.classes).map(|c| format!("fault{c}")).collect(),
        signals,
        labels,
        harmonic_amplitudes,
        bands: signatures.into_iter().map(|s| s.band).collect(),
    })
}

impl SynthDataset {
    pub fn len(&self) -> usize {
        self.signals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.signals.is_empty()
    }

    pub fn spectra<T: Scalar>(&self, preprocessing: &Preprocessing) -> Result<LabeledSpectra<T>> {
        let k = preprocessing.bins();
        let mut x = Array2::zeros((self.signals.len(), k));
        for (mut row, sig) in x.axis_iter_mut(Axis(0)).zip(&self.signals) {
            let s = preprocessing.apply(&sig.cast::<T>())?;
            row.assign(&ndarray::ArrayView1::from(s.bins()));
        }
        Ok(LabeledSpectra {
            x,
            labels: self.labels.clone(),
            class_names: self.class_names.clone(),
        })
    }

    /// Writes one signal container per sample plus `manifest.txt` under
    /// `dir`, recording the resonance bands as provenance lines.
    pub fn write(&self, dir: &Path, bins: usize) -> Result<Manifest> {
        fs::create_dir_all(dir).map_err(|e| PnnError::io(dir, e))?;
        let mut samples = Vec::with_capacity(self.len());
        for (i, (sig, &label)) in self.signals.iter().zip(&self.labels).enumerate() {
            let name = format!("sample_{i:05}.sig");
            spectral::write_signal(&dir.join(&name), sig)?;
            samples.push(Sample {
                id: format!("s{i:05}"),
                label,
                source: SampleSource::File(PathBuf::from(name)),
            });
        }
        let mut provenance = vec![format!(
            "synthetic seed={} snr_db={} rate_hz={} f0_hz={}",
            self.spec.seed, self.spec.noise_snr_db, self.spec.sample_rate_hz, self.spec.base_freq_hz
        )];
        for (c, b) in self.bands.iter().enumerate() {
            provenance.push(format!(
                "band {} center_hz={:.3} bandwidth_hz={:.3}",
                self.class_names[c], b.center_hz, b.bandwidth_hz
            ));
        }
        let manifest = Manifest {
            class_names: self.class_names.clone(),
            samples,
            bins,
            provenance,
            root: dir.to_path_buf(),
        };
        manifest.save(&dir.join("manifest.txt"))?;
        Ok(manifest)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(classes: usize, per_class: usize) -> Vec<usize> {
        (0..classes).flat_map(|c| std::iter::repeat(c).take(per_class)).collect()
    }

    #[test]
    fn split_ten_percent_of_ten_by_ten() {
        let y = labels(10, 10);
        let (train, test) = split_indices(&y, 10, &SplitSpec::new(0.10, 1)).unwrap();
        assert_eq!(train.len(), 10);
        assert_eq!(test.len(), 90);
        for c in 0..10 {
            assert_eq!(train.iter().filter(|&&i| y[i] == c).count(), 1);
        }
    }

    #[test]
    fn split_three_quarters() {
        let y = labels(3, 8);
        let (train, test) = split_indices(&y, 3, &SplitSpec::new(0.75, 7)).unwrap();
        for c in 0..3 {
            assert_eq!(train.iter().filter(|&&i| y[i] == c).count(), 6);
            assert_eq!(test.iter().filter(|&&i| y[i] == c).count(), 2);
        }
    }

    #[test]
    fn singleton_class_goes_to_train() {
        let y = vec![0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 1];
        let (train, test) = split_indices(&y, 2, &SplitSpec::new(0.10, 0)).unwrap();
        assert!(train.contains(&10));
        assert!(test.iter().all(|&i| y[i] == 0));
    }

    #[test]
    fn split_errors() {
        assert!(split_indices(&[0, 0, 1], 3, &SplitSpec::new(0.5, 0)).is_err());
        assert!(split_indices(&[0, 1], 2, &SplitSpec::new(1.0, 0)).is_err());
        assert!(split_indices(&[0, 1], 2, &SplitSpec::new(0.0, 0)).is_err());
    }

    #[test]
    fn rounding_is_half_up() {
        assert_eq!(train_count(0.10, 75), 8);
        assert_eq!(train_count(0.75, 75), 56);
        assert_eq!(train_count(0.25, 2), 1);
        assert_eq!(train_count(0.5, 5), 3);
        assert_eq!(train_count(0.01, 3), 1);
    }

    #[test]
    fn synth_counts_and_determinism() {
        let spec = SynthSpec {
            samples_per_class: 3,
            signal_length: 512,
            ..SynthSpec::default()
        };
        let a = synth_generate(&spec).unwrap();
        assert_eq!(a.len(), 21);
        assert_eq!(a, synth_generate(&spec).unwrap());
        let b = synth_generate(&SynthSpec { seed: 1, ..spec }).unwrap();
        assert_ne!(a.signals, b.signals);
    }

    #[test]
    fn synth_rejects_band_above_nyquist() {
        let spec = SynthSpec {
            resonance_center: (0.5, 0.99),
            ..SynthSpec::default()
        };
        assert!(matches!(synth_generate(&spec), Err(PnnError::Config(_))));
        let spec = SynthSpec {
            base_freq_hz: 1000.0,
            ..SynthSpec::default()
        };
        assert!(synth_generate(&spec).is_err());
    }

    #[test]
    fn manifest_text_rejects_duplicates_and_unknown_classes() {
        let base = "PNNMAN1 2 4\n# note\na\nb\n";
        let ok = Manifest::parse(&format!("{base}x\ta\tx.sig\ny\tb\ty.sig\n"), Path::new("m.txt")).unwrap();
        assert_eq!(ok.provenance, vec!["note".to_string()]);
        assert_eq!(ok.labels(), vec![0, 1]);
        let dup = Manifest::parse(&format!("{base}x\ta\tx.sig\nx\tb\ty.sig\n"), Path::new("m.txt"));
        assert!(matches!(dup, Err(PnnError::Manifest { line: 6, .. })));
        let unknown = Manifest::parse(&format!("{base}x\tc\tx.sig\n"), Path::new("m.txt"));
        assert!(unknown.is_err());
        assert!(Manifest::parse("PNNMAN2 2 4\n", Path::new("m.txt")).is_err());
    }
}
