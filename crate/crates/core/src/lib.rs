//! Progressive neural networks for spectral fault classification.
//!
//! Raw vibration records are turned into fixed-length max-of-bin magnitude
//! spectra, then classified by a network whose hidden layers each see the
//! input spectrum plus the outputs of every earlier hidden layer. A shrinking
//! fully connected baseline, an Adam trainer, evaluation metrics and the
//! experiment drivers live alongside.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases at the bottom of this file name the common instantiations.

mod container;
pub mod data;
pub mod error;
pub mod experiments;
pub mod metrics;
pub mod model;
pub mod network;
pub mod pnn;
pub mod scalar;
pub mod spectral;
pub mod training;
pub mod vdnn;

pub use data::{LabeledSpectra, Manifest, SplitSpec, SynthDataset, SynthSpec};
pub use error::{PnnError, Result};
pub use experiments::{ExperimentPlan, Family};
pub use metrics::{EvalReport, MeanSd, RunStats};
pub use model::{Model, StoragePrecision};
pub use network::{Mode, Network};
pub use pnn::{param_count, ParamBreakdown, PnnConfig, PnnModel, Wiring};
pub use scalar::Scalar;
pub use spectral::{Preprocessing, RawSignal, Spectrum, Standardizer, DEFAULT_BINS};
pub use training::{train, TrainConfig, TrainHistory};
pub use vdnn::{VdnnConfig, VdnnModel};

pub type PnnModelF32 = PnnModel<f32>;
pub type PnnModelF64 = PnnModel<f64>;
pub type VdnnModelF32 = VdnnModel<f32>;
pub type VdnnModelF64 = VdnnModel<f64>;
pub type SpectrumF32 = Spectrum<f32>;
pub type SpectrumF64 = Spectrum<f64>;
pub type RawSignalF64 = RawSignal<f64>;
pub type LabeledSpectraF32 = LabeledSpectra<f32>;
pub type LabeledSpectraF64 = LabeledSpectra<f64>;
