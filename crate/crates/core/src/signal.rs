//! Complex baseband waveforms, tap windows, alignment, the NMSE metric and
//! sample file formats.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{DpdError, Result};

/// NMSE floor in dB, returned for a perfect reconstruction.
pub const NMSE_FLOOR_DB: f64 = -300.0;

/// Magic bytes of the binary IQ format.
pub const IQ_MAGIC: &[u8; 8] = b"DPDIQ1\0\0";

/// Waveform used by experiments unless a config says otherwise.
pub const STANDARD_BANDWIDTH: f64 = 0.15;
pub const STANDARD_SAMPLES: usize = 65_536;

const LOWPASS_TAPS: usize = 129;

/// Uniformly sampled complex baseband waveform.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSequence {
    samples: Vec<Complex64>,
    sample_rate_hint: f64,
}

impl ComplexSequence {
    pub fn new(samples: Vec<Complex64>) -> Result<Self> {
        Self::with_rate(samples, 1.0)
    }

    pub fn with_rate(samples: Vec<Complex64>, sample_rate_hint: f64) -> Result<Self> {
        if samples.is_empty() {
            return Err(DpdError::arg("complex sequence must hold at least one sample"));
        }
        if let Some(i) = samples.iter().position(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(DpdError::arg(format!("sample {i} is not finite")));
        }
        if !(sample_rate_hint.is_finite() && sample_rate_hint > 0.0) {
            return Err(DpdError::arg("sample rate hint must be positive and finite"));
        }
        Ok(Self { samples, sample_rate_hint })
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<Complex64> {
        self.samples
    }

    pub fn sample_rate_hint(&self) -> f64 {
        self.sample_rate_hint
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn energy(&self) -> f64 {
        energy(&self.samples)
    }

    pub fn rms(&self) -> f64 {
        (self.energy() / self.len() as f64).sqrt()
    }

    /// Peak-to-average power ratio in dB.
    pub fn papr_db(&self) -> f64 {
        let peak = self.samples.iter().map(|z| z.norm_sqr()).fold(0.0, f64::max);
        10.0 * (peak * self.len() as f64 / self.energy()).log10()
    }

    pub fn scaled(&self, gain: Complex64) -> Self {
        Self {
            samples: self.samples.iter().map(|z| z * gain).collect(),
            sample_rate_hint: self.sample_rate_hint,
        }
    }

    /// Copy of `self` with the given samples, keeping the rate hint.
    pub(crate) fn with_samples(&self, samples: Vec<Complex64>) -> Self {
        Self { samples, sample_rate_hint: self.sample_rate_hint }
    }
}

pub(crate) fn energy(x: &[Complex64]) -> f64 {
    x.iter().map(|z| z.norm_sqr()).sum()
}

/// Causal history and non-causal lookahead visible to a compensator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct TapWindow {
    pub pre_taps: usize,
    pub post_taps: usize,
}

impl TapWindow {
    pub fn new(pre_taps: usize, post_taps: usize) -> Self {
        Self { pre_taps, post_taps }
    }

    /// Purely causal window with `taps` total taps.
    pub fn causal_taps(taps: usize) -> Self {
        assert!(taps >= 1, "a tap window holds at least one tap");
        Self { pre_taps: taps - 1, post_taps: 0 }
    }

    pub fn total(&self) -> usize {
        self.pre_taps + self.post_taps + 1
    }

    /// Output indices whose windows touch no zero-filled edge.
    pub fn interior(&self, len: usize) -> std::ops::Range<usize> {
        self.pre_taps.min(len)..len.saturating_sub(self.post_taps)
    }
}

/// Taps `[x[n+post], ..., x[n], ..., x[n-pre]]`, zero outside the sequence.
pub fn window_at(x: &[Complex64], n: usize, w: TapWindow) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); w.total()];
    fill_window(x, n, w, &mut out);
    out
}

pub(crate) fn fill_window(x: &[Complex64], n: usize, w: TapWindow, out: &mut [Complex64]) {
    debug_assert_eq!(out.len(), w.total());
    let top = n as isize + w.post_taps as isize;
    for (t, slot) in out.iter_mut().enumerate() {
        let idx = top - t as isize;
        *slot = if idx >= 0 && (idx as usize) < x.len() {
            x[idx as usize]
        } else {
            Complex64::new(0.0, 0.0)
        };
    }
}

/// Band-limited complex Gaussian waveform at unit RMS.
///
/// White circular Gaussian noise is passed through a Blackman-windowed sinc
/// low-pass with cutoff `bandwidth_fraction / 2` cycles per sample. Only the
/// fully-overlapped part of the convolution is kept, so there is no start-up
/// transient.
pub fn generate_waveform(seed: u64, n_samples: usize, bandwidth_fraction: f64) -> Result<ComplexSequence> {
    if n_samples < 64 {
        return Err(DpdError::arg(format!("n_samples must be >= 64, got {n_samples}")));
    }
    if !(bandwidth_fraction > 0.0 && bandwidth_fraction <= 1.0) {
        return Err(DpdError::arg(format!(
            "bandwidth_fraction must lie in (0, 1], got {bandwidth_fraction}"
        )));
    }
    let h = lowpass_taps(bandwidth_fraction / 2.0, LOWPASS_TAPS);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    let white: Vec<Complex64> = (0..n_samples + h.len() - 1)
        .map(|_| {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            Complex64::new(re * scale, im * scale)
        })
        .collect();
    let mut out: Vec<Complex64> = (0..n_samples)
        .map(|n| {
            h.iter()
                .enumerate()
                .fold(Complex64::new(0.0, 0.0), |acc, (j, &hj)| acc + white[n + j] * hj)
        })
        .collect();
    let rms = (energy(&out) / n_samples as f64).sqrt();
    for z in &mut out {
        *z /= rms;
    }
    ComplexSequence::new(out)
}

/// Linear-phase windowed-sinc low-pass, cutoff in cycles per sample.
fn lowpass_taps(cutoff: f64, n_taps: usize) -> Vec<f64> {
    use std::f64::consts::PI;
    let mid = (n_taps - 1) as f64 / 2.0;
    (0..n_taps)
        .map(|i| {
            let m = i as f64 - mid;
            let sinc = if m == 0.0 {
                2.0 * cutoff
            } else {
                (2.0 * PI * cutoff * m).sin() / (PI * m)
            };
            let phase = 2.0 * PI * i as f64 / (n_taps - 1) as f64;
            let blackman = 0.42 - 0.5 * phase.cos() + 0.08 * (2.0 * phase).cos();
            sinc * blackman
        })
        .collect()
}

/// Normalized mean squared error in dB, clamped below at [`NMSE_FLOOR_DB`].
pub fn nmse(estimate: &ComplexSequence, reference: &ComplexSequence) -> Result<f64> {
    nmse_slices(estimate.samples(), reference.samples())
}

pub fn nmse_slices(estimate: &[Complex64], reference: &[Complex64]) -> Result<f64> {
    if estimate.len() != reference.len() {
        return Err(DpdError::arg(format!(
            "nmse length mismatch: {} vs {}",
            estimate.len(),
            reference.len()
        )));
    }
    let reference_energy = energy(reference);
    if reference_energy == 0.0 {
        return Err(DpdError::arg("nmse reference has zero energy"));
    }
    let err: f64 = estimate.iter().zip(reference).map(|(a, b)| (a - b).norm_sqr()).sum();
    Ok((10.0 * (err / reference_energy).log10()).max(NMSE_FLOOR_DB))
}

/// Integer delay and complex gain relating a measured signal to a reference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlignmentResult {
    /// `measured[n] ~ gain * reference[n - delay]`.
    pub delay: i64,
    pub gain: Complex64,
}

impl AlignmentResult {
    /// Undo delay and gain: `out[n] = measured[n + delay] / gain`, zero-filled.
    pub fn apply(&self, measured: &ComplexSequence) -> ComplexSequence {
        let x = measured.samples();
        let inv = self.gain.inv();
        let out = (0..x.len() as i64)
            .map(|n| {
                let idx = n + self.delay;
                if idx >= 0 && (idx as usize) < x.len() {
                    x[idx as usize] * inv
                } else {
                    Complex64::new(0.0, 0.0)
                }
            })
            .collect();
        measured.with_samples(out)
    }
}

/// Overlapping `(measured index, reference index)` pairs for a given lag.
fn overlap(len_ref: usize, len_meas: usize, delay: i64) -> impl Iterator<Item = (usize, usize)> {
    let start = delay.max(0);
    let end = (len_meas as i64).min(len_ref as i64 + delay);
    (start..end.max(start)).map(move |n| (n as usize, (n - delay) as usize))
}

/// Find the integer lag in `[-max_lag, max_lag]` with the largest
/// cross-correlation magnitude, then fit the complex gain by least squares.
pub fn align(reference: &ComplexSequence, measured: &ComplexSequence, max_lag: usize) -> Result<AlignmentResult> {
    let (r, m) = (reference.samples(), measured.samples());
    if r.len() <= 2 * max_lag || m.len() <= 2 * max_lag {
        return Err(DpdError::arg(format!(
            "alignment needs sequences longer than 2*max_lag = {}",
            2 * max_lag
        )));
    }
    if reference.energy() == 0.0 || measured.energy() == 0.0 {
        return Err(DpdError::arg("alignment input has zero energy"));
    }
    let max_lag = max_lag as i64;
    let mut best = (0i64, -1.0f64);
    for delay in -max_lag..=max_lag {
        let corr: Complex64 = overlap(r.len(), m.len(), delay).map(|(i, j)| m[i] * r[j].conj()).sum();
        if corr.norm() > best.1 {
            best = (delay, corr.norm());
        }
    }
    let delay = best.0;
    let (mut num, mut den) = (Complex64::new(0.0, 0.0), 0.0);
    for (i, j) in overlap(r.len(), m.len(), delay) {
        num += m[i] * r[j].conj();
        den += r[j].norm_sqr();
    }
    if den == 0.0 {
        return Err(DpdError::Alignment("reference has no energy over the overlap".into()));
    }
    let gain = num / den;
    if !(gain.norm() > 0.0 && gain.is_finite()) {
        return Err(DpdError::Alignment(format!("degenerate gain estimate {gain}")));
    }
    Ok(AlignmentResult { delay, gain })
}

/// Scalar least-squares gain `C` minimizing `|measured - C * reference|^2`.
pub fn ls_gain(reference: &[Complex64], measured: &[Complex64]) -> Result<Complex64> {
    let den = energy(reference);
    if den == 0.0 || reference.len() != measured.len() {
        return Err(DpdError::arg("gain estimate needs equal-length, nonzero reference"));
    }
    let num: Complex64 = reference.iter().zip(measured).map(|(r, m)| m * r.conj()).sum();
    Ok(num / den)
}

/// Write the little-endian `DPDIQ1` format.
pub fn write_iq(x: &ComplexSequence, path: impl AsRef<Path>) -> Result<()> {
    if x.is_empty() {
        return Err(DpdError::arg("refusing to write an empty sequence"));
    }
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(IQ_MAGIC)?;
    w.write_all(&(x.len() as u64).to_le_bytes())?;
    w.write_all(&x.sample_rate_hint().to_le_bytes())?;
    for z in x.samples() {
        w.write_all(&z.re.to_le_bytes())?;
        w.write_all(&z.im.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_iq(path: impl AsRef<Path>) -> Result<ComplexSequence> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(|_| DpdError::Format("truncated IQ header".into()))?;
    if &magic != IQ_MAGIC {
        return Err(DpdError::Format("bad magic, expected DPDIQ1".into()));
    }
    let mut word = [0u8; 8];
    r.read_exact(&mut word).map_err(|_| DpdError::Format("truncated IQ header".into()))?;
    let count = u64::from_le_bytes(word) as usize;
    r.read_exact(&mut word).map_err(|_| DpdError::Format("truncated IQ header".into()))?;
    let rate = f64::from_le_bytes(word);
    let mut payload = Vec::new();
    r.read_to_end(&mut payload)?;
    if payload.len() != count * 16 {
        return Err(DpdError::Format(format!(
            "payload holds {} bytes, header promises {} samples",
            payload.len(),
            count
        )));
    }
    let samples = payload
        .chunks_exact(16)
        .map(|c| {
            let re = f64::from_le_bytes(c[..8].try_into().unwrap());
            let im = f64::from_le_bytes(c[8..].try_into().unwrap());
            Complex64::new(re, im)
        })
        .collect();
    ComplexSequence::with_rate(samples, rate).map_err(|e| DpdError::Format(e.to_string()))
}

/// Two-column `re,im` CSV; a leading `re,im` header row is optional on read.
pub fn read_csv(path: impl AsRef<Path>) -> Result<ComplexSequence> {
    let mut reader = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_path(path)?;
    let mut samples = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        if row == 0 && record.get(0) == Some("re") && record.get(1) == Some("im") {
            continue;
        }
        if record.len() != 2 {
            return Err(DpdError::Format(format!("csv row {} has {} fields, expected 2", row + 1, record.len())));
        }
        let parse = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| DpdError::Format(format!("csv row {}: `{s}` is not a number", row + 1)))
        };
        samples.push(Complex64::new(parse(&record[0])?, parse(&record[1])?));
    }
    ComplexSequence::new(samples)
}

pub fn write_csv(x: &ComplexSequence, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["re", "im"])?;
    for z in x.samples() {
        w.write_record([format!("{:e}", z.re), format!("{:e}", z.im)])?;
    }
    w.flush()?;
    Ok(())
}

/// Read either format, chosen by extension (`.csv`, anything else is IQ).
pub fn read_samples(path: impl AsRef<Path>) -> Result<ComplexSequence> {
    let path = path.as_ref();
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        read_csv(path)
    } else {
        read_iq(path)
    }
}

pub fn write_samples(x: &ComplexSequence, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        write_csv(x, path)
    } else {
        write_iq(x, path)
    }
}
