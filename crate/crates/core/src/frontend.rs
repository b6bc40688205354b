//! Short-time feature extraction: PCM signal to per-frame MFCC or PLP
//! vectors, optionally extended with delta and delta-delta coefficients.
//!
//! Pipeline per signal:
//! pre-emphasis → framing → Hamming window → |FFT|² → {mel + DCT | PLP}
//! → optional deltas.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{FeatureMatrix, FrameMatrix, Matrix};

/// Filter energies are clamped here before the logarithm.
pub const LOG_FLOOR: f64 = 1e-10;

/// Half-width of the delta regression window.
pub const DELTA_WINDOW: usize = 2;

const PLP_COMPRESSION: f64 = 0.33;

/// Mono audio with amplitudes nominally in [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct RawSignal {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl RawSignal {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::invalid("sample rate must be positive"));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::invalid(format!("sample {i} is not finite")));
        }
        Ok(RawSignal {
            samples,
            sample_rate,
        })
    }

    /// Normalizes signed 16-bit PCM by 1/32768.
    pub fn from_pcm16(pcm: &[i16], sample_rate: u32) -> Result<Self> {
        Self::new(
            pcm.iter().map(|&s| f64::from(s) / 32768.0).collect(),
            sample_rate,
        )
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Copies the half-open sample span `[begin, end)`.
    pub fn slice(&self, begin: usize, end: usize) -> Result<RawSignal> {
        if begin >= end || end > self.samples.len() {
            return Err(Error::invalid(format!(
                "span [{begin}, {end}) outside signal of {} samples",
                self.samples.len()
            )));
        }
        Ok(RawSignal {
            samples: self.samples[begin..end].to_vec(),
            sample_rate: self.sample_rate,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Mfcc,
    Plp,
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FeatureKind::Mfcc => "mfcc",
            FeatureKind::Plp => "plp",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FrontendConfig {
    pub pre_emphasis: f64,
    pub frame_len: usize,
    pub hop: usize,
    pub feature_kind: FeatureKind,
    pub num_ceps: usize,
    pub with_deltas: bool,
    pub num_mel_filters: usize,
    pub lp_order: usize,
}

impl Default for FrontendConfig {
    fn default() -> Self {
        FrontendConfig {
            pre_emphasis: 0.95,
            frame_len: 256,
            hop: 128,
            feature_kind: FeatureKind::Mfcc,
            num_ceps: 12,
            with_deltas: true,
            num_mel_filters: 26,
            lp_order: 12,
        }
    }
}

impl FrontendConfig {
    /// Output dimension per frame.
    pub fn dimension(&self) -> usize {
        self.num_ceps * if self.with_deltas { 3 } else { 1 }
    }

    /// Short name such as `mfcc36` or `plp12`.
    pub fn feature_name(&self) -> String {
        format!("{}{}", self.feature_kind, self.dimension())
    }

    /// Applies a feature name like `mfcc36` (with deltas) or `plp12`
    /// (static only). The number must be `num_ceps` or `3 * num_ceps`.
    pub fn with_feature_name(&self, name: &str) -> Result<FrontendConfig> {
        let name = name.trim().to_ascii_lowercase();
        let split = name
            .find(|c: char| c.is_ascii_digit())
            .ok_or_else(|| Error::invalid(format!("feature name `{name}` lacks a dimension")))?;
        let (kind, dim) = name.split_at(split);
        let kind = match kind {
            "mfcc" => FeatureKind::Mfcc,
            "plp" => FeatureKind::Plp,
            other => return Err(Error::invalid(format!("unknown feature kind `{other}`"))),
        };
        let dim: usize = dim
            .parse()
            .map_err(|_| Error::invalid(format!("bad feature dimension in `{name}`")))?;
        let with_deltas = if dim == self.num_ceps * 3 {
            true
        } else if dim == self.num_ceps {
            false
        } else {
            return Err(Error::invalid(format!(
                "feature `{name}`: dimension must be {} or {} for {} cepstra",
                self.num_ceps,
                self.num_ceps * 3,
                self.num_ceps
            )));
        };
        let mut out = self.clone();
        out.feature_kind = kind;
        out.with_deltas = with_deltas;
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.pre_emphasis) {
            return Err(Error::invalid("pre_emphasis must lie in [0, 1)"));
        }
        if self.hop == 0 || self.hop > self.frame_len {
            return Err(Error::invalid("hop must satisfy 0 < hop <= frame_len"));
        }
        if !self.frame_len.is_power_of_two() || self.frame_len < 2 {
            return Err(Error::invalid("frame_len must be a power of two >= 2"));
        }
        if self.num_ceps == 0 {
            return Err(Error::invalid("num_ceps must be at least 1"));
        }
        match self.feature_kind {
            FeatureKind::Mfcc if self.num_ceps >= self.num_mel_filters => Err(Error::invalid(
                "num_ceps must be smaller than num_mel_filters",
            )),
            FeatureKind::Plp if self.num_ceps > self.lp_order => {
                Err(Error::invalid("num_ceps must not exceed lp_order"))
            }
            _ => Ok(()),
        }
    }
}

/// `y[0] = x[0]`, `y[n] = x[n] - alpha * x[n-1]`.
pub fn pre_emphasize(signal: &RawSignal, alpha: f64) -> Result<RawSignal> {
    if signal.is_empty() {
        return Err(Error::invalid("cannot pre-emphasize an empty signal"));
    }
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::invalid(format!("pre-emphasis {alpha} outside [0, 1)")));
    }
    let x = &signal.samples;
    let mut y = Vec::with_capacity(x.len());
    y.push(x[0]);
    y.extend(x.windows(2).map(|w| w[1] - alpha * w[0]));
    Ok(RawSignal {
        samples: y,
        sample_rate: signal.sample_rate,
    })
}

/// Number of complete frames in a signal of `len` samples.
pub fn frame_count(len: usize, frame_len: usize, hop: usize) -> usize {
    if len < frame_len || hop == 0 {
        0
    } else {
        (len - frame_len) / hop + 1
    }
}

/// Frames per second for the given hop.
pub fn frame_rate(sample_rate: u32, hop: usize) -> f64 {
    f64::from(sample_rate) / hop as f64
}

/// Splits a signal into overlapping frames. The trailing partial frame is
/// dropped.
pub fn frame_signal(signal: &RawSignal, frame_len: usize, hop: usize) -> Result<FrameMatrix> {
    if hop == 0 || frame_len == 0 {
        return Err(Error::invalid("frame_len and hop must be positive"));
    }
    if signal.len() < frame_len {
        return Err(Error::TooShort {
            len: signal.len(),
            frame_len,
        });
    }
    let n = frame_count(signal.len(), frame_len, hop);
    let mut data = Vec::with_capacity(n * frame_len);
    for i in 0..n {
        data.extend_from_slice(&signal.samples[i * hop..i * hop + frame_len]);
    }
    Matrix::from_vec(n, frame_len, data)
}

pub fn hamming_window(n: usize) -> Vec<f64> {
    let denom = (n - 1) as f64;
    (0..n)
        .map(|i| 0.54 - 0.46 * (2.0 * PI * i as f64 / denom).cos())
        .collect()
}

pub fn apply_hamming(frames: &FrameMatrix) -> Result<FrameMatrix> {
    if frames.cols() < 2 {
        return Err(Error::invalid("Hamming window needs at least 2 samples"));
    }
    let w = hamming_window(frames.cols());
    let mut out = frames.clone();
    for i in 0..out.rows() {
        for (v, wn) in out.row_mut(i).iter_mut().zip(&w) {
            *v *= wn;
        }
    }
    Ok(out)
}

/// Reusable FFT plan producing `N/2 + 1` power bins.
#[derive(Clone)]
pub struct PowerSpectrum {
    fft: Arc<dyn Fft<f64>>,
    len: usize,
}

impl fmt::Debug for PowerSpectrum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PowerSpectrum").field("len", &self.len).finish()
    }
}

impl PowerSpectrum {
    pub fn new(len: usize) -> Result<Self> {
        if len < 2 || !len.is_power_of_two() {
            return Err(Error::invalid(format!(
                "frame length {len} is not a power of two"
            )));
        }
        let fft = FftPlanner::new().plan_fft_forward(len);
        Ok(PowerSpectrum { fft, len })
    }

    pub fn compute(&self, frame: &[f64]) -> Result<Vec<f64>> {
        if frame.len() != self.len {
            return Err(Error::invalid(format!(
                "frame of {} samples given to a {}-point FFT",
                frame.len(),
                self.len
            )));
        }
        let mut buf: Vec<Complex<f64>> = frame.iter().map(|&x| Complex::new(x, 0.0)).collect();
        self.fft.process(&mut buf);
        Ok(buf[..=self.len / 2].iter().map(|c| c.norm_sqr()).collect())
    }
}

/// `|DFT(frame)|²` for bins `0..=N/2`.
pub fn power_spectrum(frame: &[f64]) -> Result<Vec<f64>> {
    PowerSpectrum::new(frame.len())?.compute(frame)
}

pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular filters equally spaced on the mel scale from 0 Hz to Nyquist.
///
/// Weights are evaluated at each bin's exact frequency, so narrow low
/// filters still receive energy from the nearest bins.
#[derive(Debug, Clone)]
pub struct MelFilterbank {
    /// `(lower, center, upper)` edge frequencies in Hz per filter.
    edges: Vec<(f64, f64, f64)>,
    /// Sparse `(bin, weight)` lists per filter.
    weights: Vec<Vec<(usize, f64)>>,
}

impl MelFilterbank {
    pub fn new(n_bins: usize, sample_rate: u32, n_filters: usize) -> Result<Self> {
        if n_filters < 2 {
            return Err(Error::invalid("a mel filterbank needs at least 2 filters"));
        }
        if n_bins < 2 {
            return Err(Error::invalid("spectrum has fewer than 2 bins"));
        }
        let nyquist = f64::from(sample_rate) / 2.0;
        let mel_max = hz_to_mel(nyquist);
        let points: Vec<f64> = (0..n_filters + 2)
            .map(|i| mel_to_hz(mel_max * i as f64 / (n_filters + 1) as f64))
            .collect();
        let bin_hz = nyquist / (n_bins - 1) as f64;
        let mut edges = Vec::with_capacity(n_filters);
        let mut weights = Vec::with_capacity(n_filters);
        for j in 0..n_filters {
            let (lo, c, hi) = (points[j], points[j + 1], points[j + 2]);
            let w: Vec<(usize, f64)> = (0..n_bins)
                .filter_map(|b| {
                    let f = b as f64 * bin_hz;
                    let v = if f > lo && f <= c {
                        (f - lo) / (c - lo)
                    } else if f > c && f < hi {
                        (hi - f) / (hi - c)
                    } else {
                        0.0
                    };
                    (v > 0.0).then_some((b, v))
                })
                .collect();
            edges.push((lo, c, hi));
            weights.push(w);
        }
        Ok(MelFilterbank { edges, weights })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Passband `(lower, upper)` of filter `j` in Hz.
    pub fn passband(&self, j: usize) -> (f64, f64) {
        let (lo, _, hi) = self.edges[j];
        (lo, hi)
    }

    pub fn center(&self, j: usize) -> f64 {
        self.edges[j].1
    }

    /// Raw (linear) filter energies.
    pub fn energies(&self, spectrum: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .map(|w| w.iter().map(|&(b, v)| v * spectrum[b]).sum())
            .collect()
    }

    /// `ln(max(energy, LOG_FLOOR))` per filter.
    pub fn log_energies(&self, spectrum: &[f64]) -> Vec<f64> {
        self.energies(spectrum)
            .into_iter()
            .map(|e| e.max(LOG_FLOOR).ln())
            .collect()
    }
}

/// Log mel filterbank energies of a half spectrum.
pub fn mel_filterbank(spectrum: &[f64], sample_rate: u32, n_filters: usize) -> Result<Vec<f64>> {
    Ok(MelFilterbank::new(spectrum.len(), sample_rate, n_filters)?.log_energies(spectrum))
}

/// DCT-II cepstra `c_1..c_num_ceps` of log filter energies (c0 dropped).
pub fn mfcc(log_energies: &[f64], num_ceps: usize) -> Result<Vec<f64>> {
    let m = log_energies.len();
    if num_ceps == 0 || num_ceps >= m {
        return Err(Error::invalid(format!(
            "num_ceps {num_ceps} must satisfy 1 <= num_ceps < {m} filters"
        )));
    }
    let scale = (2.0 / m as f64).sqrt();
    Ok((1..=num_ceps)
        .map(|n| {
            scale
                * log_energies
                    .iter()
                    .enumerate()
                    .map(|(k, e)| e * (PI * n as f64 * (k as f64 + 0.5) / m as f64).cos())
                    .sum::<f64>()
        })
        .collect())
}

pub fn hz_to_bark(f: f64) -> f64 {
    6.0 * (f / 600.0).asinh()
}

pub fn bark_to_hz(z: f64) -> f64 {
    600.0 * (z / 6.0).sinh()
}

/// Critical-band masking curve, offset in Bark from the band center.
fn critical_band_weight(dz: f64) -> f64 {
    if !(-1.3..=2.5).contains(&dz) {
        0.0
    } else if dz < -0.5 {
        10f64.powf(2.5 * (dz + 0.5))
    } else if dz <= 0.5 {
        1.0
    } else {
        10f64.powf(-(dz - 0.5))
    }
}

/// Equal-loudness pre-emphasis at angular frequency `omega`.
fn equal_loudness(omega: f64) -> f64 {
    let w2 = omega * omega;
    (w2 + 56.8e6) * w2 * w2 / ((w2 + 6.3e6).powi(2) * (w2 + 0.38e9))
}

/// Levinson-Durbin recursion.
///
/// Returns `(a, err)` with `a[0] = 1` for the inverse filter
/// `A(z) = 1 + Σ a_k z^-k` and the final prediction-error variance.
pub fn levinson_durbin(r: &[f64], order: usize) -> Result<(Vec<f64>, f64)> {
    if r.len() <= order {
        return Err(Error::invalid(format!(
            "order {order} needs {} autocorrelation lags, got {}",
            order + 1,
            r.len()
        )));
    }
    let mut a = vec![0.0; order + 1];
    a[0] = 1.0;
    let mut err = r[0];
    if err.is_nan() || err <= 0.0 {
        return Err(Error::DegenerateSpectrum(err));
    }
    let mut prev = a.clone();
    for i in 1..=order {
        let acc: f64 = r[i] + (1..i).map(|j| prev[j] * r[i - j]).sum::<f64>();
        let k = -acc / err;
        for j in 1..i {
            a[j] = prev[j] + k * prev[i - j];
        }
        a[i] = k;
        err *= 1.0 - k * k;
        if err.is_nan() || err <= 0.0 {
            return Err(Error::DegenerateSpectrum(err));
        }
        prev.copy_from_slice(&a);
    }
    Ok((a, err))
}

/// Cepstrum `c_1..c_n` of the all-pole model `1 / A(z)`.
pub fn lpc_to_cepstrum(a: &[f64], n: usize) -> Vec<f64> {
    let p = a.len() - 1;
    let coef = |k: usize| if k <= p { a[k] } else { 0.0 };
    let mut c = vec![0.0; n + 1];
    for m in 1..=n {
        let mut acc = -coef(m);
        for k in 1..m {
            acc -= (k as f64 / m as f64) * c[k] * coef(m - k);
        }
        c[m] = acc;
    }
    c.remove(0);
    c
}

/// Autocorrelation lags `0..=order` of a power spectrum sampled at equal
/// steps on `[0, π]`, via the inverse DFT of its even extension.
pub fn spectrum_autocorrelation(spectrum: &[f64], order: usize) -> Vec<f64> {
    let m = spectrum.len();
    let period = 2 * (m - 1);
    (0..=order)
        .map(|k| {
            let mut acc = spectrum[0];
            acc += if k % 2 == 0 { 1.0 } else { -1.0 } * spectrum[m - 1];
            for (i, s) in spectrum.iter().enumerate().take(m - 1).skip(1) {
                acc += 2.0 * s * (PI * (k * i) as f64 / (m - 1) as f64).cos();
            }
            acc / period as f64
        })
        .collect()
}

/// LP modelling of an auditory spectrum (already loudness-weighted and
/// compressed): autocorrelation → Levinson-Durbin → cepstrum.
pub fn auditory_to_cepstra(auditory: &[f64], lp_order: usize, num_ceps: usize) -> Result<Vec<f64>> {
    if auditory.len() < 2 {
        return Err(Error::invalid("auditory spectrum needs at least 2 bands"));
    }
    let r = spectrum_autocorrelation(auditory, lp_order);
    let (a, _) = levinson_durbin(&r, lp_order)?;
    Ok(lpc_to_cepstrum(&a, num_ceps))
}

/// Perceptual linear prediction on Bark-spaced critical bands.
#[derive(Debug, Clone)]
pub struct PlpAnalyzer {
    band_centers_hz: Vec<f64>,
    band_weights: Vec<Vec<(usize, f64)>>,
    loudness: Vec<f64>,
    lp_order: usize,
    num_ceps: usize,
}

impl PlpAnalyzer {
    pub fn new(n_bins: usize, sample_rate: u32, lp_order: usize, num_ceps: usize) -> Result<Self> {
        if num_ceps == 0 || num_ceps > lp_order {
            return Err(Error::invalid(format!(
                "num_ceps {num_ceps} must satisfy 1 <= num_ceps <= lp_order {lp_order}"
            )));
        }
        if n_bins < 2 {
            return Err(Error::invalid("spectrum has fewer than 2 bins"));
        }
        let nyquist = f64::from(sample_rate) / 2.0;
        let bin_hz = nyquist / (n_bins - 1) as f64;
        let n_bands = hz_to_bark(nyquist).ceil() as usize + 1;
        if lp_order >= n_bands {
            return Err(Error::invalid(format!(
                "lp_order {lp_order} needs more than the {n_bands} critical bands available at {sample_rate} Hz"
            )));
        }
        let bin_bark: Vec<f64> = (0..n_bins).map(|b| hz_to_bark(b as f64 * bin_hz)).collect();
        let mut band_centers_hz = Vec::with_capacity(n_bands);
        let mut band_weights = Vec::with_capacity(n_bands);
        let mut loudness = Vec::with_capacity(n_bands);
        for i in 0..n_bands {
            let z = i as f64;
            let f = bark_to_hz(z);
            band_centers_hz.push(f);
            band_weights.push(
                bin_bark
                    .iter()
                    .enumerate()
                    .filter_map(|(b, &zb)| {
                        let w = critical_band_weight(zb - z);
                        (w > 0.0).then_some((b, w))
                    })
                    .collect(),
            );
            loudness.push(equal_loudness(2.0 * PI * f));
        }
        Ok(PlpAnalyzer {
            band_centers_hz,
            band_weights,
            loudness,
            lp_order,
            num_ceps,
        })
    }

    pub fn band_count(&self) -> usize {
        self.band_centers_hz.len()
    }

    /// Critical-band integration, equal-loudness weighting and cube-root
    /// compression. The outermost bands copy their neighbours.
    pub fn auditory_spectrum(&self, spectrum: &[f64]) -> Vec<f64> {
        let mut aud: Vec<f64> = self
            .band_weights
            .iter()
            .zip(&self.loudness)
            .map(|(w, e)| {
                let theta: f64 = w.iter().map(|&(b, v)| v * spectrum[b]).sum();
                (e * theta).max(LOG_FLOOR).powf(PLP_COMPRESSION)
            })
            .collect();
        let n = aud.len();
        aud[0] = aud[1];
        aud[n - 1] = aud[n - 2];
        aud
    }

    pub fn cepstra(&self, spectrum: &[f64]) -> Result<Vec<f64>> {
        auditory_to_cepstra(&self.auditory_spectrum(spectrum), self.lp_order, self.num_ceps)
    }
}

/// PLP cepstra `c_1..c_num_ceps` of a half power spectrum.
pub fn plp(spectrum: &[f64], sample_rate: u32, lp_order: usize, num_ceps: usize) -> Result<Vec<f64>> {
    PlpAnalyzer::new(spectrum.len(), sample_rate, lp_order, num_ceps)?.cepstra(spectrum)
}

fn regression_deltas(m: &Matrix) -> Matrix {
    let rows = m.rows();
    let norm: f64 = 2.0 * (1..=DELTA_WINDOW).map(|n| (n * n) as f64).sum::<f64>();
    let mut out = Matrix::zeros(rows, m.cols());
    for t in 0..rows {
        for n in 1..=DELTA_WINDOW {
            let next = m.row((t + n).min(rows - 1));
            let prev = m.row(t.saturating_sub(n));
            for (o, (a, b)) in out.row_mut(t).iter_mut().zip(next.iter().zip(prev)) {
                *o += n as f64 * (a - b);
            }
        }
        for o in out.row_mut(t) {
            *o /= norm;
        }
    }
    out
}

/// `[static | delta | delta-delta]` with a ±2 regression window and edge
/// replication.
pub fn append_deltas(features: &FeatureMatrix) -> Result<FeatureMatrix> {
    if features.is_empty() {
        return Err(Error::invalid("cannot compute deltas of zero frames"));
    }
    let d = regression_deltas(features);
    let dd = regression_deltas(&d);
    let cols = features.cols();
    let mut out = Matrix::zeros(features.rows(), cols * 3);
    for t in 0..features.rows() {
        let row = out.row_mut(t);
        row[..cols].copy_from_slice(features.row(t));
        row[cols..2 * cols].copy_from_slice(d.row(t));
        row[2 * cols..].copy_from_slice(dd.row(t));
    }
    Ok(out)
}

/// Per-signal feature extractor holding the precomputed FFT plan and
/// filterbanks for one configuration and sample rate.
#[derive(Debug, Clone)]
pub struct FeatureExtractor {
    config: FrontendConfig,
    sample_rate: u32,
    window: Vec<f64>,
    fft: PowerSpectrum,
    analysis: Analysis,
}

#[derive(Debug, Clone)]
enum Analysis {
    Mfcc(MelFilterbank),
    Plp(PlpAnalyzer),
}

impl FeatureExtractor {
    pub fn new(config: &FrontendConfig, sample_rate: u32) -> Result<Self> {
        config.validate()?;
        let n_bins = config.frame_len / 2 + 1;
        let analysis = match config.feature_kind {
            FeatureKind::Mfcc => Analysis::Mfcc(MelFilterbank::new(
                n_bins,
                sample_rate,
                config.num_mel_filters,
            )?),
            FeatureKind::Plp => Analysis::Plp(PlpAnalyzer::new(
                n_bins,
                sample_rate,
                config.lp_order,
                config.num_ceps,
            )?),
        };
        Ok(FeatureExtractor {
            config: config.clone(),
            sample_rate,
            window: hamming_window(config.frame_len),
            fft: PowerSpectrum::new(config.frame_len)?,
            analysis,
        })
    }

    pub fn config(&self) -> &FrontendConfig {
        &self.config
    }

    pub fn extract(&self, signal: &RawSignal) -> Result<FeatureMatrix> {
        if signal.sample_rate != self.sample_rate {
            return Err(Error::invalid(format!(
                "extractor built for {} Hz, signal is {} Hz",
                self.sample_rate, signal.sample_rate
            )));
        }
        if signal.len() < self.config.frame_len {
            return Err(Error::TooShort {
                len: signal.len(),
                frame_len: self.config.frame_len,
            });
        }
        let emphasized = pre_emphasize(signal, self.config.pre_emphasis)?;
        let frames = frame_signal(&emphasized, self.config.frame_len, self.config.hop)?;
        let mut out = Matrix::zeros(frames.rows(), self.config.num_ceps);
        let mut windowed = vec![0.0; self.config.frame_len];
        for i in 0..frames.rows() {
            for ((o, x), w) in windowed.iter_mut().zip(frames.row(i)).zip(&self.window) {
                *o = x * w;
            }
            let spectrum = self.fft.compute(&windowed)?;
            let ceps = match &self.analysis {
                Analysis::Mfcc(bank) => mfcc(&bank.log_energies(&spectrum), self.config.num_ceps)?,
                Analysis::Plp(plp) => plp.cepstra(&spectrum)?,
            };
            out.row_mut(i).copy_from_slice(&ceps);
        }
        if self.config.with_deltas {
            append_deltas(&out)
        } else {
            Ok(out)
        }
    }
}

/// Full front-end for one signal.
pub fn extract_features(signal: &RawSignal, config: &FrontendConfig) -> Result<FeatureMatrix> {
    FeatureExtractor::new(config, signal.sample_rate)?.extract(signal)
}
