//! Resolved configuration: built-in defaults, then a `key = value` file,
//! then command-line flags.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use pnnkit::Wiring;

pub const OUT_ENV: &str = "PNNKIT_OUT";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arch {
    Pnn,
    Vdnn,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub out: Option<String>,
    pub seed: u64,
    pub k: usize,
    pub hd: Vec<usize>,
    pub depth: Vec<usize>,
    pub classes: usize,
    pub ratio: Vec<f64>,
    pub runs: usize,
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub wd: f64,
    pub mask_size: Option<usize>,
    pub arch: Arch,
    /// Empty until set: single-model commands then use `full`, the wiring
    /// ablation all four variants.
    pub variant: Vec<Wiring>,
    pub standardize: Vec<bool>,
    pub manifest: Option<String>,
    pub model: Option<String>,
    pub input: Option<String>,
    pub study: String,
    pub samples_per_class: usize,
    pub signal_length: Vec<usize>,
    pub snr_db: f64,
    pub grid: bool,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            out: None,
            seed: 0,
            k: pnnkit::DEFAULT_BINS,
            hd: vec![100],
            depth: vec![6],
            classes: 7,
            ratio: vec![0.75],
            runs: 1,
            epochs: 30,
            batch: 8,
            lr: 1e-4,
            wd: 1e-4,
            mask_size: None,
            arch: Arch::Pnn,
            variant: Vec::new(),
            standardize: vec![true],
            manifest: None,
            model: None,
            input: None,
            study: "wiring".into(),
            samples_per_class: 75,
            signal_length: vec![8192],
            snr_db: 15.0,
            grid: false,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, String> {
    value
        .parse()
        .map_err(|_| format!("invalid value `{value}` for `{key}`"))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>, String> {
    let items = value
        .split(',')
        .map(|v| parse(key, v.trim()))
        .collect::<Result<Vec<T>, String>>()?;
    if items.is_empty() {
        return Err(format!("`{key}` needs at least one value"));
    }
    Ok(items)
}

fn list_text<T: ToString>(items: &[T]) -> String {
    items.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

impl Settings {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let value = value.trim();
        match key {
            "out" => self.out = Some(value.to_string()),
            "seed" => self.seed = parse(key, value)?,
            "k" => self.k = parse(key, value)?,
            "hd" => self.hd = parse_list(key, value)?,
            "depth" => self.depth = parse_list(key, value)?,
            "classes" => self.classes = parse(key, value)?,
            "ratio" => self.ratio = parse_list(key, value)?,
            "runs" => self.runs = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "batch" => self.batch = parse(key, value)?,
            "lr" => self.lr = parse(key, value)?,
            "wd" => self.wd = parse(key, value)?,
            "mask_size" => self.mask_size = Some(parse(key, value)?),
            "arch" => {
                self.arch = match value {
                    "pnn" => Arch::Pnn,
                    "vdnn" => Arch::Vdnn,
                    _ => return Err(format!("`arch` must be pnn or vdnn, got `{value}`")),
                }
            }
            "variant" => {
                self.variant = if value == "all" {
                    Wiring::ALL.to_vec()
                } else {
                    value
                        .split(',')
                        .map(|v| v.trim().parse::<Wiring>().map_err(|e| e.to_string()))
                        .collect::<Result<_, _>>()?
                }
            }
            "standardize" => {
                self.standardize = match value {
                    "on" => vec![true],
                    "off" => vec![false],
                    "both" => vec![true, false],
                    _ => return Err(format!("`standardize` must be on, off or both, got `{value}`")),
                }
            }
            "manifest" => self.manifest = Some(value.to_string()),
            "model" => self.model = Some(value.to_string()),
            "input" => self.input = Some(value.to_string()),
            "study" => match value {
                "wiring" | "standardization" => self.study = value.to_string(),
                _ => return Err(format!("`study` must be wiring or standardization, got `{value}`")),
            },
            "samples_per_class" => self.samples_per_class = parse(key, value)?,
            "signal_length" => self.signal_length = parse_list(key, value)?,
            "snr_db" => self.snr_db = parse(key, value)?,
            "grid" => self.grid = parse(key, value)?,
            _ => return Err(format!("unknown config key `{key}`")),
        }
        Ok(())
    }

    /// Applies a `key = value` file. Blank lines and `#` comments are
    /// skipped; unknown keys are errors.
    pub fn apply_file(&mut self, text: &str) -> Result<(), String> {
        for (no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| format!("line {}: expected `key = value`", no + 1))?;
            self.set(key.trim(), value)
                .map_err(|e| format!("line {}: {e}", no + 1))?;
        }
        Ok(())
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out
            .clone()
            .or_else(|| std::env::var(OUT_ENV).ok().filter(|v| !v.is_empty()))
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("pnnkit-out"))
    }

    fn single<T: Copy>(items: &[T], key: &str) -> Result<T, String> {
        match items {
            [one] => Ok(*one),
            _ => Err(format!("`{key}` takes a single value for this command")),
        }
    }

    pub fn single_depth(&self) -> Result<usize, crate::Failure> {
        Self::single(&self.depth, "depth").map_err(crate::Failure::Usage)
    }

    pub fn single_hd(&self) -> Result<usize, crate::Failure> {
        Self::single(&self.hd, "hd").map_err(crate::Failure::Usage)
    }

    pub fn single_ratio(&self) -> Result<f64, crate::Failure> {
        Self::single(&self.ratio, "ratio").map_err(crate::Failure::Usage)
    }

    pub fn single_standardize(&self) -> Result<bool, crate::Failure> {
        Self::single(&self.standardize, "standardize").map_err(crate::Failure::Usage)
    }

    pub fn single_variant(&self) -> Result<Wiring, crate::Failure> {
        if self.variant.is_empty() {
            return Ok(Wiring::Full);
        }
        Self::single(&self.variant, "variant").map_err(crate::Failure::Usage)
    }

    /// Every key with its resolved value, one `key = value` per line, in a
    /// form [`Settings::apply_file`] accepts.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "out = {}", self.out_dir().display());
        let _ = writeln!(out, "seed = {}", self.seed);
        let _ = writeln!(out, "k = {}", self.k);
        let _ = writeln!(out, "hd = {}", list_text(&self.hd));
        let _ = writeln!(out, "depth = {}", list_text(&self.depth));
        let _ = writeln!(out, "classes = {}", self.classes);
        let _ = writeln!(out, "ratio = {}", list_text(&self.ratio));
        let _ = writeln!(out, "runs = {}", self.runs);
        let _ = writeln!(out, "epochs = {}", self.epochs);
        let _ = writeln!(out, "batch = {}", self.batch);
        let _ = writeln!(out, "lr = {}", self.lr);
        let _ = writeln!(out, "wd = {}", self.wd);
        if let Some(m) = self.mask_size {
            let _ = writeln!(out, "mask_size = {m}");
        }
        let _ = writeln!(
            out,
            "arch = {}",
            match self.arch {
                Arch::Pnn => "pnn",
                Arch::Vdnn => "vdnn",
            }
        );
        if !self.variant.is_empty() {
            let _ = writeln!(out, "variant = {}", list_text(&self.variant));
        }
        let _ = writeln!(
            out,
            "standardize = {}",
            match self.standardize.as_slice() {
                [true] => "on",
                [false] => "off",
                _ => "both",
            }
        );
        for (key, v) in [("manifest", &self.manifest), ("model", &self.model), ("input", &self.input)] {
            if let Some(v) = v {
                let _ = writeln!(out, "{key} = {v}");
            }
        }
        let _ = writeln!(out, "study = {}", self.study);
        let _ = writeln!(out, "samples_per_class = {}", self.samples_per_class);
        let _ = writeln!(out, "signal_length = {}", list_text(&self.signal_length));
        let _ = writeln!(out, "snr_db = {}", self.snr_db);
        let _ = writeln!(out, "grid = {}", self.grid);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_then_flags() {
        let mut s = Settings::default();
        s.apply_file("# comment\nk = 64\nratio = 0.1, 0.25\n\nvariant = all\n").unwrap();
        assert_eq!(s.k, 64);
        assert_eq!(s.ratio, vec![0.1, 0.25]);
        assert_eq!(s.variant.len(), 4);
        s.set("k", "32").unwrap();
        assert_eq!(s.k, 32);
    }

    #[test]
    fn rejects_unknown_and_malformed() {
        let mut s = Settings::default();
        assert!(s.apply_file("colour = blue\n").unwrap_err().contains("unknown config key"));
        assert!(s.apply_file("k 5\n").is_err());
        assert!(s.set("arch", "cnn").is_err());
        assert!(s.set("variant", "half").is_err());
        assert!(s.set("standardize", "maybe").is_err());
    }

    #[test]
    fn stamp_text_round_trips() {
        let mut s = Settings::default();
        s.set("standardize", "both").unwrap();
        s.set("variant", "no_x,full").unwrap();
        s.set("out", "/tmp/x").unwrap();
        s.set("snr_db", "inf").unwrap();
        let mut back = Settings::default();
        back.apply_file(&s.to_text()).unwrap();
        assert_eq!(back, s);
    }
}
