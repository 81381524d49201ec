//! Recording → complex channel × frequency × trial tensor.
//!
//! The pipeline is: common average reference over the full recording, slicing
//! into non-overlapping trials, per-trial linear detrend (which also removes
//! the baseline mean), then one Hann-tapered DFT per trial and channel. Only
//! the bins inside the configured frequency range are kept.

use nalgebra::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{ComplexTensor, Dims, RMatrix, C64};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TensorizeConfig {
    pub trial_len_s: f64,
    pub freq_range_hz: [f64; 2],
    pub freq_step_hz: f64,
}

impl Default for TensorizeConfig {
    fn default() -> Self {
        TensorizeConfig { trial_len_s: 1.0, freq_range_hz: [1.0, 40.0], freq_step_hz: 1.0 }
    }
}

fn as_integer(x: f64, what: &str) -> Result<usize> {
    let r = x.round();
    if r < 0.0 || (x - r).abs() > 1e-9 * x.abs().max(1.0) {
        return Err(Error::invalid(format!("{what} must be a nonnegative integer, got {x}")));
    }
    Ok(r as usize)
}

impl TensorizeConfig {
    pub fn trial_samples(&self, fs: f64) -> Result<usize> {
        let l = as_integer(self.trial_len_s * fs, "trial_len_s × fs")?;
        if l < 2 {
            return Err(Error::invalid(format!("a trial must hold at least 2 samples, got {l}")));
        }
        Ok(l)
    }

    /// DFT bin indices kept for trials of `l` samples at `fs`.
    pub fn bins(&self, fs: f64, l: usize) -> Result<Vec<usize>> {
        let res = fs / l as f64;
        let [lo, hi] = self.freq_range_hz;
        if !(self.freq_step_hz > 0.0 && lo >= 0.0 && hi >= lo && hi <= fs / 2.0) {
            return Err(Error::invalid(format!(
                "frequency range [{lo}, {hi}] step {} is not valid for fs = {fs}",
                self.freq_step_hz
            )));
        }
        let first = as_integer(lo / res, "range start / bin resolution")?;
        let step = as_integer(self.freq_step_hz / res, "frequency step / bin resolution")?;
        let span = as_integer((hi - lo) / self.freq_step_hz, "range width / frequency step")?;
        if step == 0 {
            return Err(Error::invalid("frequency step is finer than the bin resolution"));
        }
        Ok((0..=span).map(|i| first + i * step).collect())
    }

    /// Center frequency (Hz) of every kept bin.
    pub fn frequencies(&self, fs: f64) -> Result<Vec<f64>> {
        let l = self.trial_samples(fs)?;
        Ok(self.bins(fs, l)?.into_iter().map(|b| b as f64 * fs / l as f64).collect())
    }
}

/// Splits `m × T` data into `K = ⌊T / L⌋` consecutive `m × L` trials,
/// discarding the remainder.
pub fn slice_trials(x: &RMatrix, fs: f64, trial_len_s: f64) -> Result<Vec<RMatrix>> {
    let l = TensorizeConfig { trial_len_s, ..Default::default() }.trial_samples(fs)?;
    let t = x.ncols();
    if t < l {
        return Err(Error::invalid(format!("recording has {t} samples, fewer than one trial of {l}")));
    }
    Ok((0..t / l).map(|k| x.columns(k * l, l).into_owned()).collect())
}

/// Subtracts the across-channel mean from every time sample.
pub fn common_average_reference(x: &RMatrix) -> Result<RMatrix> {
    if x.nrows() < 2 {
        return Err(Error::invalid("common average reference needs at least two channels"));
    }
    let mut out = x.clone();
    for mut col in out.column_iter_mut() {
        let mean = col.mean();
        col.add_scalar_mut(-mean);
    }
    Ok(out)
}

/// Removes the least-squares line from every channel of a trial.
pub fn detrend_baseline(trial: &RMatrix) -> Result<RMatrix> {
    let l = trial.ncols();
    if l < 2 {
        return Err(Error::invalid("detrending needs at least two samples"));
    }
    // Centered time axis makes intercept and slope decouple.
    let tc: Vec<f64> = (0..l).map(|n| n as f64 - (l - 1) as f64 / 2.0).collect();
    let stt: f64 = tc.iter().map(|t| t * t).sum();
    let mut out = trial.clone();
    for mut row in out.row_iter_mut() {
        let mean = row.mean();
        let slope = row.iter().zip(&tc).map(|(v, t)| v * t).sum::<f64>() / stt;
        for (v, t) in row.iter_mut().zip(&tc) {
            *v -= mean + slope * t;
        }
    }
    Ok(out)
}

/// Periodic Hann window of length `l` scaled to unit RMS.
pub fn hann_window(l: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..l)
        .map(|n| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * n as f64 / l as f64).cos()))
        .collect();
    let rms = (w.iter().map(|v| v * v).sum::<f64>() / l as f64).sqrt();
    w.into_iter().map(|v| v / rms).collect()
}

/// Full DFT of `x · window`.
pub fn windowed_spectrum(x: &[f64], window: &[f64]) -> Vec<C64> {
    let mut buf: Vec<C64> = x.iter().zip(window).map(|(v, w)| Complex::new(v * w, 0.0)).collect();
    FftPlanner::<f64>::new().plan_fft_forward(buf.len()).process(&mut buf);
    buf
}

/// Hann-tapered DFT of every trial and channel, keeping the configured bins.
/// Trials must already be referenced and detrended.
pub fn stft_tensorize(trials: &[RMatrix], fs: f64, cfg: &TensorizeConfig) -> Result<ComplexTensor> {
    let first = trials.first().ok_or_else(|| Error::invalid("no trials to tensorize"))?;
    let (m, l) = first.shape();
    if trials.iter().any(|t| t.shape() != (m, l)) {
        return Err(Error::invalid("all trials must share one shape"));
    }
    let expected = cfg.trial_samples(fs)?;
    if expected != l {
        return Err(Error::invalid(format!(
            "trials hold {l} samples but trial_len_s × fs = {expected}"
        )));
    }
    let bins = cfg.bins(fs, l)?;
    if bins.iter().any(|&b| b > l / 2) {
        return Err(Error::invalid("requested bins exceed the Nyquist bin"));
    }
    let window = hann_window(l);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(l);
    let k_count = trials.len();
    let mut data = vec![C64::new(0.0, 0.0); m * bins.len() * k_count];
    let mut buf = vec![C64::new(0.0, 0.0); l];
    for (k, trial) in trials.iter().enumerate() {
        for c in 0..m {
            for (n, slot) in buf.iter_mut().enumerate() {
                *slot = Complex::new(trial[(c, n)] * window[n], 0.0);
            }
            fft.process(&mut buf);
            for (fi, &b) in bins.iter().enumerate() {
                data[fi * m * k_count + k * m + c] = buf[b];
            }
        }
    }
    ComplexTensor::new(Dims::new(m, bins.len(), k_count), data)
}

/// Full preprocessing chain from an `m × T` recording.
pub fn tensorize(x: &RMatrix, fs: f64, cfg: &TensorizeConfig) -> Result<ComplexTensor> {
    let referenced = common_average_reference(x)?;
    let trials = slice_trials(&referenced, fs, cfg.trial_len_s)?
        .iter()
        .map(detrend_baseline)
        .collect::<Result<Vec<_>>>()?;
    stft_tensorize(&trials, fs, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use rand::Rng;
    use rand_distr::StandardNormal;
    use std::f64::consts::PI;

    fn random(m: usize, t: usize, seed: u64) -> RMatrix {
        let mut rng = seeded(seed);
        RMatrix::from_fn(m, t, |_, _| rng.sample(StandardNormal))
    }

    #[test]
    fn slicing_floor_semantics() {
        let x = random(3, 18000, 1);
        let trials = slice_trials(&x, 100.0, 1.0).unwrap();
        assert_eq!(trials.len(), 180);
        assert_eq!(trials[0].shape(), (3, 100));

        let y = random(2, 150, 2);
        let trials = slice_trials(&y, 100.0, 1.0).unwrap();
        assert_eq!(trials.len(), 1);
        assert_eq!(trials[0], y.columns(0, 100).into_owned());
        assert!(slice_trials(&random(2, 99, 3), 100.0, 1.0).is_err());
    }

    #[test]
    fn slicing_partitions_the_recording() {
        let x = random(4, 1234, 4);
        let trials = slice_trials(&x, 100.0, 1.0).unwrap();
        for (k, t) in trials.iter().enumerate() {
            assert_eq!(*t, x.columns(k * 100, 100).into_owned());
        }
    }

    #[test]
    fn car_properties() {
        let constant = RMatrix::from_fn(5, 7, |_, t| t as f64);
        assert!(common_average_reference(&constant).unwrap().iter().all(|v| *v == 0.0));

        let a = random(1, 10, 5);
        let pair = RMatrix::from_fn(2, 10, |r, t| if r == 0 { a[(0, t)] } else { -a[(0, t)] });
        assert_eq!(common_average_reference(&pair).unwrap(), pair);

        let r = common_average_reference(&random(4, 10, 6)).unwrap();
        assert!(r.column_iter().all(|c| c.sum().abs() < 1e-12));
        assert!(common_average_reference(&random(1, 10, 6)).is_err());
    }

    #[test]
    fn detrend_removes_lines_and_constants() {
        let ramp = RMatrix::from_fn(2, 50, |r, n| 3.0 + (r as f64 + 1.0) * 0.25 * n as f64);
        assert!(detrend_baseline(&ramp).unwrap().iter().all(|v| v.abs() < 1e-12));
        let r = detrend_baseline(&random(3, 40, 7)).unwrap();
        assert!(r.row_iter().all(|row| row.mean().abs() < 1e-12));
        assert!(detrend_baseline(&random(3, 1, 7)).is_err());
    }

    #[test]
    fn detrend_barely_touches_a_sine() {
        let sine = RMatrix::from_fn(1, 100, |_, n| (2.0 * PI * 10.0 * n as f64 / 100.0).sin());
        let out = detrend_baseline(&sine).unwrap();
        // Oracle: least-squares line fit removed explicitly, then amplitude ratio.
        let amp_in = sine.norm();
        let amp_out = out.norm();
        assert!((1.0 - amp_out / amp_in).abs() < 0.01);
    }

    #[test]
    fn cosine_lands_in_its_bin_with_analytic_phase() {
        let fs = 100.0;
        let phase = 0.7;
        let trial = RMatrix::from_fn(2, 100, |c, n| {
            if c == 0 {
                (2.0 * PI * 10.0 * n as f64 / fs + phase).cos()
            } else {
                0.0
            }
        });
        let x = stft_tensorize(&[trial], fs, &TensorizeConfig::default()).unwrap();
        assert_eq!(x.dims(), Dims::new(2, 40, 1));
        let mags: Vec<f64> = (0..40).map(|f| x.get(0, f, 0).norm()).collect();
        let imax = mags.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        assert_eq!(imax, 9, "bin index 9 holds 10 Hz");
        // Closed form: for an integer-bin cosine under a periodic Hann window,
        // X[10] = e^{iφ} · Σ w / 2.
        let w = hann_window(100);
        let expected = C64::from_polar(w.iter().sum::<f64>() / 2.0, phase);
        assert!((x.get(0, 9, 0) - expected).norm() < 1e-6);
        assert!((x.get(0, 9, 0).arg() - phase).abs() < 1e-6);
        assert!((0..40).all(|f| x.get(1, f, 0).norm() == 0.0));
    }

    #[test]
    fn zero_input_gives_zero_tensor() {
        let x = tensorize(&RMatrix::zeros(3, 500), 100.0, &TensorizeConfig::default()).unwrap();
        assert_eq!(x.dims(), Dims::new(3, 40, 5));
        assert_eq!(x.norm_squared(), 0.0);
    }

    #[test]
    fn hann_window_has_unit_rms() {
        let w = hann_window(100);
        let rms = (w.iter().map(|v| v * v).sum::<f64>() / 100.0).sqrt();
        assert!((rms - 1.0).abs() < 1e-12);
    }

    #[test]
    fn parseval_before_truncation() {
        let mut rng = seeded(8);
        let w = hann_window(100);
        for _ in 0..20 {
            let x: Vec<f64> = (0..100).map(|_| rng.sample(StandardNormal)).collect();
            let time: f64 = x.iter().zip(&w).map(|(v, w)| (v * w).powi(2)).sum();
            let spec: f64 = windowed_spectrum(&x, &w).iter().map(|z| z.norm_sqr()).sum::<f64>() / 100.0;
            assert!((time - spec).abs() < 1e-8 * time.max(1.0));
        }
    }

    #[test]
    fn tensorize_is_linear_and_deterministic() {
        let a = random(4, 600, 9);
        let b = random(4, 600, 10);
        let cfg = TensorizeConfig::default();
        let ta = tensorize(&a, 100.0, &cfg).unwrap();
        let tb = tensorize(&b, 100.0, &cfg).unwrap();
        let combo = tensorize(&(&a * 2.0 - &b * 0.5), 100.0, &cfg).unwrap();
        for ((z, x), y) in combo.data().iter().zip(ta.data()).zip(tb.data()) {
            assert!((z - (x * 2.0 - y * 0.5)).norm() < 1e-10);
        }
        assert_eq!(tensorize(&a, 100.0, &cfg).unwrap(), ta);
    }

    #[test]
    fn incompatible_configs_are_rejected() {
        let trials = slice_trials(&random(2, 300, 1), 100.0, 1.0).unwrap();
        let bad_step = TensorizeConfig { freq_step_hz: 0.5, ..Default::default() };
        assert!(stft_tensorize(&trials, 100.0, &bad_step).is_err());
        let bad_len = TensorizeConfig { trial_len_s: 2.0, ..Default::default() };
        assert!(stft_tensorize(&trials, 100.0, &bad_len).is_err());
        let beyond_nyquist = TensorizeConfig { freq_range_hz: [1.0, 60.0], ..Default::default() };
        assert!(stft_tensorize(&trials, 100.0, &beyond_nyquist).is_err());
        assert!(TensorizeConfig { trial_len_s: 1.005, ..Default::default() }.trial_samples(100.0).is_err());
    }

    #[test]
    fn default_frequencies_are_1_to_40_hz() {
        let f = TensorizeConfig::default().frequencies(100.0).unwrap();
        assert_eq!(f, (1..=40).map(|v| v as f64).collect::<Vec<_>>());
    }
}
