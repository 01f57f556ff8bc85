//! Progressive neural network.
//!
//! Hidden layer `n` (1-based) reads the input spectrum `X` concatenated with
//! the `H_d`-wide outputs of layers `1..n-1`, so its input width is
//! `K + (n-1) H_d`. The softmax classifier reads `X` together with all `D`
//! hidden outputs (`K + D H_d` columns). Every hidden layer is
//! `Linear -> ReLU -> BatchNorm`.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use ndarray::{concatenate, Array2, ArrayView2, Axis};

use crate::container::{self, Reader};
use crate::error::{PnnError, Result};
use crate::model::{Model, StoragePrecision};
use crate::network::{Network, Source, Topology};
use crate::scalar::Scalar;

pub const MODEL_MAGIC: &[u8; 8] = b"PNNMDL1\0";
pub const FORMAT_VERSION: u8 = 1;

/// Which feed-forward connections the hidden layers keep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Wiring {
    /// `X` plus every earlier hidden output.
    #[default]
    Full,
    /// `X` plus only the immediately preceding hidden output.
    NoHistory,
    /// Every earlier hidden output but not `X` (layer 1 still reads `X`).
    NoInput,
    /// Plain chain: each layer reads only its predecessor.
    Neither,
}

impl Wiring {
    pub const ALL: [Wiring; 4] = [
        Wiring::Full,
        Wiring::NoHistory,
        Wiring::NoInput,
        Wiring::Neither,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Wiring::Full => "full",
            Wiring::NoHistory => "no_zh",
            Wiring::NoInput => "no_x",
            Wiring::Neither => "neither",
        }
    }

    fn code(self) -> u8 {
        match self {
            Wiring::Full => 0,
            Wiring::NoHistory => 1,
            Wiring::NoInput => 2,
            Wiring::Neither => 3,
        }
    }

    fn from_code(code: u8) -> Option<Self> {
        Wiring::ALL.into_iter().find(|w| w.code() == code)
    }

    /// Sources read by consumer `n` (0-based), where `n == depth` is the
    /// classifier.
    fn sources(self, n: usize) -> Vec<Source> {
        if n == 0 {
            return vec![Source::Input];
        }
        let history = (0..n).map(Source::Hidden);
        match self {
            Wiring::Full => std::iter::once(Source::Input).chain(history).collect(),
            Wiring::NoHistory => vec![Source::Input, Source::Hidden(n - 1)],
            Wiring::NoInput => history.collect(),
            Wiring::Neither => vec![Source::Hidden(n - 1)],
        }
    }
}

impl fmt::Display for Wiring {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Wiring {
    type Err = PnnError;

    fn from_str(s: &str) -> Result<Self> {
        Wiring::ALL
            .into_iter()
            .find(|w| w.name() == s)
            .ok_or_else(|| PnnError::Config(format!("unknown wiring variant `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PnnConfig {
    /// Spectrum length `K`.
    pub input_bins: usize,
    /// `H_d`, width appended by every hidden layer.
    pub hidden_width: usize,
    /// Number of progressive hidden layers; the classifier is extra.
    pub depth: usize,
    pub classes: usize,
    pub bn_epsilon: f64,
    pub bn_momentum: f64,
    pub wiring: Wiring,
}

impl Default for PnnConfig {
    fn default() -> Self {
        Self {
            input_bins: crate::spectral::DEFAULT_BINS,
            hidden_width: 100,
            depth: 6,
            classes: 2,
            bn_epsilon: 1e-5,
            bn_momentum: 0.1,
            wiring: Wiring::Full,
        }
    }
}

impl PnnConfig {
    pub fn new(input_bins: usize, hidden_width: usize, depth: usize, classes: usize) -> Self {
        Self {
            input_bins,
            hidden_width,
            depth,
            classes,
            ..Self::default()
        }
    }

    pub fn with_wiring(mut self, wiring: Wiring) -> Self {
        self.wiring = wiring;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_bins == 0 || self.hidden_width == 0 || self.depth == 0 || self.classes < 2 {
            return Err(PnnError::Config(format!(
                "need K >= 1, H_d >= 1, depth >= 1, classes >= 2 (got K={}, H_d={}, D={}, C={})",
                self.input_bins, self.hidden_width, self.depth, self.classes
            )));
        }
        if !(self.bn_epsilon > 0.0) || !(self.bn_momentum > 0.0 && self.bn_momentum < 1.0) {
            return Err(PnnError::Config(
                "bn_epsilon must be > 0 and bn_momentum in (0, 1)".into(),
            ));
        }
        Ok(())
    }

    pub fn topology(&self) -> Topology {
        Topology {
            input_width: self.input_bins,
            hidden: (0..self.depth)
                .map(|n| (self.hidden_width, self.wiring.sources(n)))
                .collect(),
            classifier_sources: self.wiring.sources(self.depth),
            classes: self.classes,
        }
    }

    /// Input width of every hidden layer followed by the classifier's.
    pub fn input_widths(&self) -> Vec<usize> {
        let t = self.topology();
        (0..self.depth)
            .map(|n| t.hidden_input_width(n))
            .chain(std::iter::once(t.classifier_input_width()))
            .collect()
    }
}

/// Exact parameter counts. `bn_params` counts the trainable `gamma` and
/// `beta` only; running statistics are buffers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamBreakdown {
    pub hidden_weights: u64,
    pub hidden_biases: u64,
    pub bn_params: u64,
    pub classifier_params: u64,
    pub total: u64,
}

impl ParamBreakdown {
    pub(crate) fn from_topology(t: &Topology) -> Self {
        let mut hidden_weights = 0u64;
        let mut hidden_biases = 0u64;
        for (n, (width, _)) in t.hidden.iter().enumerate() {
            hidden_weights += (t.hidden_input_width(n) * width) as u64;
            hidden_biases += *width as u64;
        }
        let bn_params = 2 * hidden_biases;
        let classifier_params = ((t.classifier_input_width() + 1) * t.classes) as u64;
        Self {
            hidden_weights,
            hidden_biases,
            bn_params,
            classifier_params,
            total: hidden_weights + hidden_biases + bn_params + classifier_params,
        }
    }
}

/// With full wiring `hidden_weights = D K H_d + D(D-1)/2 H_d^2`, which is
/// `6 K H_d + 15 H_d^2` at depth 6.
pub fn param_count(config: &PnnConfig) -> ParamBreakdown {
    ParamBreakdown::from_topology(&config.topology())
}

/// Materializes the input of hidden layer `n` (1-based; `n = D + 1` is the
/// classifier): `X ++ out_1 ++ ... ++ out_{n-1}`.
pub fn layer_input<T: Scalar>(
    n: usize,
    x: ArrayView2<T>,
    prior_outputs: &[ArrayView2<T>],
    hidden_width: usize,
) -> Result<Array2<T>> {
    if n == 0 || prior_outputs.len() != n - 1 {
        return Err(PnnError::Shape(format!(
            "layer {n} needs {} prior outputs, got {}",
            n.saturating_sub(1),
            prior_outputs.len()
        )));
    }
    for (j, out) in prior_outputs.iter().enumerate() {
        if out.ncols() != hidden_width || out.nrows() != x.nrows() {
            return Err(PnnError::Shape(format!(
                "output of layer {} is {}x{}, expected {}x{hidden_width}",
                j + 1,
                out.nrows(),
                out.ncols(),
                x.nrows()
            )));
        }
    }
    let mut parts: Vec<ArrayView2<T>> = Vec::with_capacity(n);
    parts.push(x.view());
    parts.extend(prior_outputs.iter().map(|o| o.view()));
    concatenate(Axis(1), &parts).map_err(|e| PnnError::Shape(e.to_string()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PnnModel<T> {
    config: PnnConfig,
    net: Network<T>,
}

impl<T: Scalar> PnnModel<T> {
    /// Fan-in scaled uniform weights, zero biases, identity batch norm;
    /// fully determined by `seed`.
    pub fn init(config: PnnConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let net = Network::init(
            config.topology(),
            T::of(config.bn_epsilon),
            T::of(config.bn_momentum),
            seed,
        )?;
        Ok(Self { config, net })
    }

    pub fn zeros(config: PnnConfig) -> Result<Self> {
        config.validate()?;
        let net = Network::zeros(
            config.topology(),
            T::of(config.bn_epsilon),
            T::of(config.bn_momentum),
        )?;
        Ok(Self { config, net })
    }

    pub fn config(&self) -> &PnnConfig {
        &self.config
    }

    pub fn into_network(self) -> Network<T> {
        self.net
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        container::write_file(path, &self.encode(StoragePrecision::Native))
    }

    pub fn save_with(&self, path: &Path, precision: StoragePrecision) -> Result<()> {
        container::write_file(path, &self.encode(precision))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::decode(&container::read_file(path)?)
    }

    pub fn encode(&self, precision: StoragePrecision) -> Vec<u8> {
        let width = precision.width::<T>();
        let mut out = Vec::with_capacity(64 + self.net.payload_len(width));
        out.extend_from_slice(MODEL_MAGIC);
        out.push(FORMAT_VERSION);
        out.push(width);
        for v in [
            self.config.input_bins,
            self.config.hidden_width,
            self.config.depth,
            self.config.classes,
        ] {
            out.extend_from_slice(&(v as u64).to_le_bytes());
        }
        out.extend_from_slice(&self.config.bn_epsilon.to_le_bytes());
        out.extend_from_slice(&self.config.bn_momentum.to_le_bytes());
        out.push(self.config.wiring.code());
        self.net.write_tensors(&mut out, width);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        r.magic(MODEL_MAGIC)?;
        let width = read_header(&mut r)?;
        let at = r.offset();
        let mut dims = [0usize; 4];
        for d in &mut dims {
            *d = r.u64()? as usize;
        }
        let bn_epsilon = r.f64()?;
        let bn_momentum = r.f64()?;
        let wiring_at = r.offset();
        let wiring = Wiring::from_code(r.u8()?)
            .ok_or_else(|| PnnError::format(wiring_at, "unknown wiring code"))?;
        let config = PnnConfig {
            input_bins: dims[0],
            hidden_width: dims[1],
            depth: dims[2],
            classes: dims[3],
            bn_epsilon,
            bn_momentum,
            wiring,
        };
        config
            .validate()
            .map_err(|e| PnnError::format(at, e.to_string()))?;
        guard_size(&config.topology(), r.remaining(), at)?;
        let mut model = Self::zeros(config)?;
        model.net.read_tensors(&mut r, width)?;
        Ok(model)
    }
}

pub(crate) fn read_header(r: &mut Reader<'_>) -> Result<u8> {
    let at = r.offset();
    let version = r.u8()?;
    if version != FORMAT_VERSION {
        return Err(PnnError::format(
            at,
            format!("unsupported format version {version}"),
        ));
    }
    let at = r.offset();
    let width = r.u8()?;
    if width != 4 && width != 8 {
        return Err(PnnError::format(at, format!("unsupported scalar width {width}")));
    }
    Ok(width)
}

/// Refuses headers whose implied parameter count cannot fit in the file,
/// before any allocation happens.
pub(crate) fn guard_size(t: &Topology, remaining: usize, at: usize) -> Result<()> {
    let params = ParamBreakdown::from_topology(t).total as u128;
    if params > remaining as u128 {
        return Err(PnnError::format(
            at,
            format!("header describes {params} parameters but only {remaining} bytes follow"),
        ));
    }
    Ok(())
}

impl<T: Scalar> Model<T> for PnnModel<T> {
    fn network(&self) -> &Network<T> {
        &self.net
    }

    fn network_mut(&mut self) -> &mut Network<T> {
        &mut self.net
    }

    fn to_bytes(&self) -> Vec<u8> {
        self.encode(StoragePrecision::Native)
    }
}
