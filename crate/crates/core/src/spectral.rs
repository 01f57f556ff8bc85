//! Whole-record magnitude spectra and max-of-bin size standardization.
//!
//! A raw recording of any length `L` is turned into its one-sided DFT
//! magnitude (`L/2 + 1` bins), which is then quantized to a fixed `K` bins by
//! taking the maximum inside each contiguous window. Peaks keep both their
//! height and their relative position regardless of `L`.

use std::f64::consts::PI;
use std::path::Path;

use num_complex::Complex;

use crate::container::{self, Reader};
use crate::error::{PnnError, Result};
use crate::scalar::Scalar;

/// Full-scale standardized spectrum length.
pub const DEFAULT_BINS: usize = 16384;

pub const SIGNAL_MAGIC: &[u8; 8] = b"PNNSIG1\0";
pub const SPECTRUM_MAGIC: &[u8; 8] = b"PNNSPC1\0";

/// Time-domain vibration recording.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSignal<T> {
    samples: Vec<T>,
    sample_rate_hz: f64,
}

impl<T: Scalar> RawSignal<T> {
    pub fn new(samples: Vec<T>, sample_rate_hz: f64) -> Result<Self> {
        if samples.len() < 2 {
            return Err(PnnError::InvalidInput(format!(
                "signal needs at least 2 samples, got {}",
                samples.len()
            )));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(PnnError::InvalidInput(format!(
                "sample {i} is not finite"
            )));
        }
        if !(sample_rate_hz > 0.0 && sample_rate_hz.is_finite()) {
            return Err(PnnError::InvalidInput(format!(
                "sample rate must be positive, got {sample_rate_hz}"
            )));
        }
        Ok(Self {
            samples,
            sample_rate_hz,
        })
    }

    pub fn samples(&self) -> &[T] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn cast<U: Scalar>(&self) -> RawSignal<U> {
        RawSignal {
            samples: self.samples.iter().map(|s| U::of(s.to_f64c())).collect(),
            sample_rate_hz: self.sample_rate_hz,
        }
    }
}

/// Fixed-length non-negative magnitude spectrum; the network input.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum<T> {
    bins: Vec<T>,
}

impl<T: Scalar> Spectrum<T> {
    pub fn new(bins: Vec<T>) -> Result<Self> {
        if bins.is_empty() {
            return Err(PnnError::InvalidInput("spectrum has no bins".into()));
        }
        if let Some(i) = bins.iter().position(|b| !(b.is_finite() && *b >= T::zero())) {
            return Err(PnnError::InvalidInput(format!(
                "spectrum bin {i} is negative or not finite"
            )));
        }
        Ok(Self { bins })
    }

    pub fn bins(&self) -> &[T] {
        &self.bins
    }

    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }

    pub fn into_bins(self) -> Vec<T> {
        self.bins
    }

    /// Index of the largest bin (first on ties).
    pub fn argmax(&self) -> usize {
        argmax(&self.bins)
    }
}

pub(crate) fn argmax<T: PartialOrd + Copy>(xs: &[T]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

fn twiddles<T: Scalar>(n: usize, sign: f64) -> Vec<Complex<T>> {
    (0..n / 2)
        .map(|j| {
            let theta = sign * 2.0 * PI * j as f64 / n as f64;
            Complex::new(T::of(theta.cos()), T::of(theta.sin()))
        })
        .collect()
}

/// In-place iterative radix-2 transform. `buf.len()` must be a power of two.
fn fft_pow2<T: Scalar>(buf: &mut [Complex<T>], inverse: bool) {
    let n = buf.len();
    debug_assert!(n.is_power_of_two());
    if n < 2 {
        return;
    }
    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = i.reverse_bits() >> (usize::BITS - bits);
        if j > i {
            buf.swap(i, j);
        }
    }
    let table = twiddles::<T>(n, if inverse { 1.0 } else { -1.0 });
    let mut len = 2;
    while len <= n {
        let half = len / 2;
        let stride = n / len;
        for start in (0..n).step_by(len) {
            for k in 0..half {
                let w = table[k * stride];
                let a = buf[start + k];
                let b = buf[start + k + half] * w;
                buf[start + k] = a + b;
                buf[start + k + half] = a - b;
            }
        }
        len <<= 1;
    }
    if inverse {
        let scale = T::one() / T::of_usize(n);
        for v in buf.iter_mut() {
            *v = *v * scale;
        }
    }
}

/// Exact length-`n` DFT for arbitrary `n` via the chirp-z identity, using
/// power-of-two transforms of length at least `2n - 1`.
fn bluestein<T: Scalar>(input: &[Complex<T>]) -> Vec<Complex<T>> {
    let n = input.len();
    let m = (2 * n - 1).next_power_of_two();
    // exp(-i pi k^2 / n); k^2 reduced mod 2n keeps the angle small
    let chirp: Vec<Complex<T>> = (0..n)
        .map(|k| {
            let k2 = ((k as u128 * k as u128) % (2 * n as u128)) as f64;
            let theta = -PI * k2 / n as f64;
            Complex::new(T::of(theta.cos()), T::of(theta.sin()))
        })
        .collect();

    let mut a = vec![Complex::new(T::zero(), T::zero()); m];
    for k in 0..n {
        a[k] = input[k] * chirp[k];
    }
    let mut b = vec![Complex::new(T::zero(), T::zero()); m];
    b[0] = chirp[0].conj();
    for k in 1..n {
        b[k] = chirp[k].conj();
        b[m - k] = chirp[k].conj();
    }
    fft_pow2(&mut a, false);
    fft_pow2(&mut b, false);
    for (x, y) in a.iter_mut().zip(&b) {
        *x = *x * *y;
    }
    fft_pow2(&mut a, true);
    (0..n).map(|k| a[k] * chirp[k]).collect()
}

/// Full two-sided DFT of a real sequence, `O(n log n)` for every length.
pub fn dft<T: Scalar>(samples: &[T]) -> Vec<Complex<T>> {
    let mut buf: Vec<Complex<T>> = samples
        .iter()
        .map(|&s| Complex::new(s, T::zero()))
        .collect();
    if buf.len().is_power_of_two() {
        fft_pow2(&mut buf, false);
        buf
    } else {
        bluestein(&buf)
    }
}

/// One-sided magnitude spectrum `|X[0..=L/2]|`.
pub fn dft_magnitude<T: Scalar>(signal: &RawSignal<T>) -> Vec<T> {
    let spectrum = dft(signal.samples());
    let half = signal.len() / 2 + 1;
    spectrum[..half].iter().map(|c| c.norm()).collect()
}

/// Quantizes a magnitude vector to `bins` entries.
///
/// When the input is at least as long as the output, output bin `i` is the
/// maximum over input indices `[i*M/K, (i+1)*M/K)`. Shorter inputs are
/// upsampled by nearest neighbour so peak magnitudes survive unchanged.
pub fn max_of_bin<T: Scalar>(magnitudes: &[T], bins: usize) -> Result<Spectrum<T>> {
    let m = magnitudes.len();
    if m == 0 || bins == 0 {
        return Err(PnnError::InvalidInput(format!(
            "max_of_bin needs non-empty input and output (got M={m}, K={bins})"
        )));
    }
    let out = if m >= bins {
        (0..bins)
            .map(|i| {
                let lo = i * m / bins;
                let hi = (i + 1) * m / bins;
                magnitudes[lo..hi]
                    .iter()
                    .copied()
                    .fold(T::neg_infinity(), T::max)
            })
            .collect()
    } else {
        (0..bins)
            .map(|i| magnitudes[((2 * i + 1) * m / (2 * bins)).min(m - 1)])
            .collect()
    };
    Spectrum::new(out)
}

/// Preprocessing settings: output length and optional unit-max scaling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Standardizer {
    pub bins: usize,
    pub unit_max: bool,
}

impl Default for Standardizer {
    fn default() -> Self {
        Self {
            bins: DEFAULT_BINS,
            unit_max: false,
        }
    }
}

impl Standardizer {
    pub fn new(bins: usize) -> Self {
        Self {
            bins,
            unit_max: false,
        }
    }

    pub fn apply<T: Scalar>(&self, signal: &RawSignal<T>) -> Result<Spectrum<T>> {
        let spectrum = max_of_bin(&dft_magnitude(signal), self.bins)?;
        if !self.unit_max {
            return Ok(spectrum);
        }
        let peak = spectrum
            .bins()
            .iter()
            .copied()
            .fold(T::zero(), T::max);
        if peak == T::zero() {
            return Ok(spectrum);
        }
        Spectrum::new(spectrum.into_bins().into_iter().map(|b| b / peak).collect())
    }
}

/// `max_of_bin(dft_magnitude(signal), bins)`.
pub fn preprocess<T: Scalar>(signal: &RawSignal<T>, bins: usize) -> Result<Spectrum<T>> {
    Standardizer::new(bins).apply(signal)
}

/// Unstandardized comparison path: the record is truncated or zero-padded
/// to `bins` samples and the full two-sided `bins`-point DFT magnitude is
/// returned.
pub fn direct_spectrum<T: Scalar>(signal: &RawSignal<T>, bins: usize) -> Result<Spectrum<T>> {
    if bins == 0 {
        return Err(PnnError::InvalidInput("bins must be positive".into()));
    }
    let mut samples = signal.samples().to_vec();
    samples.resize(bins, T::zero());
    Spectrum::new(dft(&samples).iter().map(|c| c.norm()).collect())
}

/// Signal-to-spectrum path used when building a dataset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Preprocessing {
    /// Whole-record DFT followed by max-of-bin standardization.
    Standardized(Standardizer),
    /// [`direct_spectrum`] with the given number of points.
    Direct { bins: usize },
}

impl Preprocessing {
    pub fn bins(&self) -> usize {
        match self {
            Preprocessing::Standardized(s) => s.bins,
            Preprocessing::Direct { bins } => *bins,
        }
    }

    pub fn apply<T: Scalar>(&self, signal: &RawSignal<T>) -> Result<Spectrum<T>> {
        match self {
            Preprocessing::Standardized(s) => s.apply(signal),
            Preprocessing::Direct { bins } => direct_spectrum(signal, *bins),
        }
    }
}

pub fn encode_signal<T: Scalar>(signal: &RawSignal<T>) -> Vec<u8> {
    let mut out = Vec::with_capacity(24 + 4 * signal.len());
    out.extend_from_slice(SIGNAL_MAGIC);
    out.extend_from_slice(&(signal.len() as u64).to_le_bytes());
    let millihertz = (signal.sample_rate_hz() * 1000.0).round() as u64;
    out.extend_from_slice(&millihertz.to_le_bytes());
    for s in signal.samples() {
        out.extend_from_slice(&s.to_f32().unwrap_or(f32::NAN).to_le_bytes());
    }
    out
}

pub fn decode_signal(bytes: &[u8]) -> Result<RawSignal<f32>> {
    let mut r = Reader::new(bytes);
    r.magic(SIGNAL_MAGIC)?;
    let count = r.u64()? as usize;
    let millihertz = r.u64()?;
    let samples = r.f32s(count)?;
    r.finish()?;
    RawSignal::new(samples, millihertz as f64 / 1000.0)
}

pub fn encode_spectrum<T: Scalar>(spectrum: &Spectrum<T>) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 4 * spectrum.len());
    out.extend_from_slice(SPECTRUM_MAGIC);
    out.extend_from_slice(&(spectrum.len() as u64).to_le_bytes());
    for b in spectrum.bins() {
        out.extend_from_slice(&b.to_f32().unwrap_or(f32::NAN).to_le_bytes());
    }
    out
}

pub fn decode_spectrum(bytes: &[u8]) -> Result<Spectrum<f32>> {
    let mut r = Reader::new(bytes);
    r.magic(SPECTRUM_MAGIC)?;
    let count = r.u64()? as usize;
    let bins = r.f32s(count)?;
    r.finish()?;
    Spectrum::new(bins)
}

pub fn write_signal<T: Scalar>(path: &Path, signal: &RawSignal<T>) -> Result<()> {
    container::write_file(path, &encode_signal(signal))
}

pub fn read_signal(path: &Path) -> Result<RawSignal<f32>> {
    decode_signal(&container::read_file(path)?)
}

pub fn write_spectrum<T: Scalar>(path: &Path, spectrum: &Spectrum<T>) -> Result<()> {
    container::write_file(path, &encode_spectrum(spectrum))
}

pub fn read_spectrum(path: &Path) -> Result<Spectrum<f32>> {
    decode_spectrum(&container::read_file(path)?)
}
