//! Vanilla fully connected baseline whose hidden widths shrink
//! geometrically (`floor(K * shrink)`, then `floor(prev * shrink)`, floored
//! at `min_width`). Layers use the same `Linear -> ReLU -> BatchNorm` stack
//! and initialization as the progressive network.

use std::path::Path;

use crate::container::{self, Reader};
use crate::error::{PnnError, Result};
use crate::model::{Model, StoragePrecision};
use crate::network::{Network, Source, Topology};
use crate::pnn::{guard_size, read_header, ParamBreakdown, FORMAT_VERSION};
use crate::scalar::Scalar;

pub const MODEL_MAGIC: &[u8; 8] = b"VDNMDL1\0";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VdnnConfig {
    pub input_bins: usize,
    pub depth: usize,
    pub classes: usize,
    pub shrink: f64,
    pub min_width: usize,
    pub bn_epsilon: f64,
    pub bn_momentum: f64,
}

impl VdnnConfig {
    pub fn new(input_bins: usize, depth: usize, classes: usize) -> Self {
        Self {
            input_bins,
            depth,
            classes,
            shrink: 0.5,
            min_width: 1,
            bn_epsilon: 1e-5,
            bn_momentum: 0.1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_bins == 0 || self.depth == 0 || self.classes < 2 || self.min_width == 0 {
            return Err(PnnError::Config(format!(
                "need K >= 1, depth >= 1, classes >= 2, min_width >= 1 (got K={}, D={}, C={}, min={})",
                self.input_bins, self.depth, self.classes, self.min_width
            )));
        }
        if !(self.shrink > 0.0 && self.shrink <= 1.0) {
            return Err(PnnError::Config(format!(
                "shrink must be in (0, 1], got {}",
                self.shrink
            )));
        }
        if !(self.bn_epsilon > 0.0) || !(self.bn_momentum > 0.0 && self.bn_momentum < 1.0) {
            return Err(PnnError::Config(
                "bn_epsilon must be > 0 and bn_momentum in (0, 1)".into(),
            ));
        }
        Ok(())
    }

    /// Hidden widths `w_1 .. w_D`.
    pub fn widths(&self) -> Vec<usize> {
        let mut widths = Vec::with_capacity(self.depth);
        let mut prev = self.input_bins;
        for _ in 0..self.depth {
            let w = ((prev as f64 * self.shrink).floor() as usize).max(self.min_width);
            widths.push(w);
            prev = w;
        }
        widths
    }

    pub fn topology(&self) -> Topology {
        let widths = self.widths();
        Topology {
            input_width: self.input_bins,
            hidden: widths
                .iter()
                .enumerate()
                .map(|(n, &w)| {
                    let src = if n == 0 { Source::Input } else { Source::Hidden(n - 1) };
                    (w, vec![src])
                })
                .collect(),
            classifier_sources: vec![Source::Hidden(self.depth - 1)],
            classes: self.classes,
        }
    }
}

/// For `shrink = 0.5`, depth 6 and large `K`, `hidden_weights` is close to
/// `K^2 (1/2 + 1/8 + ... + 1/2048) ≈ 0.666 K^2`.
pub fn param_count(config: &VdnnConfig) -> ParamBreakdown {
    ParamBreakdown::from_topology(&config.topology())
}

#[derive(Debug, Clone, PartialEq)]
pub struct VdnnModel<T> {
    config: VdnnConfig,
    net: Network<T>,
}

impl<T: Scalar> VdnnModel<T> {
    pub fn init(config: VdnnConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let net = Network::init(
            config.topology(),
            T::of(config.bn_epsilon),
            T::of(config.bn_momentum),
            seed,
        )?;
        Ok(Self { config, net })
    }

    pub fn zeros(config: VdnnConfig) -> Result<Self> {
        config.validate()?;
        let net = Network::zeros(
            config.topology(),
            T::of(config.bn_epsilon),
            T::of(config.bn_momentum),
        )?;
        Ok(Self { config, net })
    }

    pub fn config(&self) -> &VdnnConfig {
        &self.config
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        container::write_file(path, &self.encode(StoragePrecision::Native))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::decode(&container::read_file(path)?)
    }

    pub fn encode(&self, precision: StoragePrecision) -> Vec<u8> {
        let width = precision.width::<T>();
        let mut out = Vec::with_capacity(72 + self.net.payload_len(width));
        out.extend_from_slice(MODEL_MAGIC);
        out.push(FORMAT_VERSION);
        out.push(width);
        for v in [self.config.input_bins, self.config.depth, self.config.classes] {
            out.extend_from_slice(&(v as u64).to_le_bytes());
        }
        out.extend_from_slice(&self.config.shrink.to_le_bytes());
        out.extend_from_slice(&(self.config.min_width as u64).to_le_bytes());
        out.extend_from_slice(&self.config.bn_epsilon.to_le_bytes());
        out.extend_from_slice(&self.config.bn_momentum.to_le_bytes());
        self.net.write_tensors(&mut out, width);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        r.magic(MODEL_MAGIC)?;
        let width = read_header(&mut r)?;
        let at = r.offset();
        let input_bins = r.u64()? as usize;
        let depth = r.u64()? as usize;
        let classes = r.u64()? as usize;
        let shrink = r.f64()?;
        let min_width = r.u64()? as usize;
        let bn_epsilon = r.f64()?;
        let bn_momentum = r.f64()?;
        let config = VdnnConfig {
            input_bins,
            depth,
            classes,
            shrink,
            min_width,
            bn_epsilon,
            bn_momentum,
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

impl<T: Scalar> Model<T> for VdnnModel<T> {
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
