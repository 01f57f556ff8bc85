use ndarray::{Array2, ArrayView2};

use crate::error::Result;
use crate::network::{ForwardCache, Gradients, Mode, Network};
use crate::scalar::Scalar;

/// A classifier backed by a [`Network`]; the unit the trainer, the
/// gradient audit and the experiment harness work with.
pub trait Model<T: Scalar>: Clone + Send + Sync {
    fn network(&self) -> &Network<T>;

    fn network_mut(&mut self) -> &mut Network<T>;

    fn forward(&self, x: ArrayView2<T>, mode: Mode) -> Result<(Array2<T>, ForwardCache<T>)> {
        self.network().forward(x, mode)
    }

    fn backward(&self, cache: &ForwardCache<T>, labels: &[usize]) -> Result<Gradients<T>> {
        self.network().backward(cache, labels)
    }

    fn parameter_gradients(&self, cache: &ForwardCache<T>, labels: &[usize]) -> Result<Gradients<T>> {
        self.network().parameter_gradients(cache, labels)
    }

    fn predict(&self, x: ArrayView2<T>) -> Result<(Vec<usize>, Array2<T>)> {
        self.network().predict(x)
    }

    /// Serialized container bytes.
    fn to_bytes(&self) -> Vec<u8>;
}

impl<T: Scalar> Model<T> for Network<T> {
    fn network(&self) -> &Network<T> {
        self
    }

    fn network_mut(&mut self) -> &mut Network<T> {
        self
    }

    fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_tensors(&mut out, T::WIDTH);
        out
    }
}

/// Storage precision of model containers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StoragePrecision {
    /// Width of the in-memory scalar; round-trips bit-exactly.
    #[default]
    Native,
    F32,
    F64,
}

impl StoragePrecision {
    pub(crate) fn width<T: Scalar>(self) -> u8 {
        match self {
            StoragePrecision::Native => T::WIDTH,
            StoragePrecision::F32 => 4,
            StoragePrecision::F64 => 8,
        }
    }
}
