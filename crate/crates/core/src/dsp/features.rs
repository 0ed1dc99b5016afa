use ndarray::Array2;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::dsp::stft::{frame_count, hann_window};
use crate::dsp::AudioBuffer;
use crate::error::{Error, Result};

/// Per-frame feature vectors with the center time of each frame.
#[derive(Debug, Clone)]
pub struct FeatureMatrix {
    pub values: Array2<f64>,
    pub frame_times: Vec<f64>,
}

impl FeatureMatrix {
    pub fn n_frames(&self) -> usize {
        self.values.nrows()
    }

    pub fn dims(&self) -> usize {
        self.values.ncols()
    }

    /// Indices of frames whose center time lies in [start, end).
    pub fn frames_in(&self, start: f64, end: f64) -> Vec<usize> {
        self.frame_times
            .iter()
            .enumerate()
            .filter(|(_, &t)| t >= start && t < end)
            .map(|(i, _)| i)
            .collect()
    }
}

/// MFCC analysis parameters.
///
/// The overall log-energy coefficient c0 is always excluded: `n_coeffs`
/// counts the kept coefficients 1..=n_coeffs.
#[derive(Debug, Clone)]
pub struct MfccConfig {
    pub n_coeffs: usize,
    pub n_mels: usize,
    pub win_len: usize,
    pub hop: usize,
    pub pre_emphasis: f64,
    pub log_floor: f64,
}

impl MfccConfig {
    /// 19 coefficients over 40 mel bands, 25 ms window, 10 ms hop.
    pub fn for_sample_rate(sample_rate: u32) -> Self {
        let sr = sample_rate as f64;
        Self {
            n_coeffs: 19,
            n_mels: 40,
            win_len: (0.025 * sr).round() as usize,
            hop: (0.010 * sr).round() as usize,
            pre_emphasis: 0.97,
            log_floor: 1e-10,
        }
    }
}

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular mel filterbank, n_mels x n_bins, spanning [0, sr/2].
pub fn mel_filterbank(n_mels: usize, fft_size: usize, sample_rate: u32) -> Array2<f64> {
    let n_bins = fft_size / 2 + 1;
    let max_mel = hz_to_mel(sample_rate as f64 / 2.0);
    let edges: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(max_mel * i as f64 / (n_mels + 1) as f64))
        .collect();
    let mut bank = Array2::zeros((n_mels, n_bins));
    for m in 0..n_mels {
        let (lo, mid, hi) = (edges[m], edges[m + 1], edges[m + 2]);
        for k in 0..n_bins {
            let f = k as f64 * sample_rate as f64 / fft_size as f64;
            let w = if f >= lo && f <= mid {
                (f - lo) / (mid - lo)
            } else if f > mid && f <= hi {
                (hi - f) / (hi - mid)
            } else {
                0.0
            };
            bank[[m, k]] = w.max(0.0);
        }
    }
    bank
}

/// Orthonormal DCT-II matrix, n_out x n_in.
pub fn dct_ii_orthonormal(n_out: usize, n_in: usize) -> Array2<f64> {
    let mut d = Array2::zeros((n_out, n_in));
    let n = n_in as f64;
    for k in 0..n_out {
        let scale = if k == 0 {
            (1.0 / n).sqrt()
        } else {
            (2.0 / n).sqrt()
        };
        for i in 0..n_in {
            d[[k, i]] =
                scale * (std::f64::consts::PI * k as f64 * (2.0 * i as f64 + 1.0) / (2.0 * n)).cos();
        }
    }
    d
}

/// MFCC features: pre-emphasis, Hann-windowed power spectra, mel filterbank,
/// log with flooring, orthonormal DCT-II, coefficients 1..=n_coeffs.
pub fn mfcc(audio: &AudioBuffer, cfg: &MfccConfig) -> Result<FeatureMatrix> {
    if cfg.n_coeffs > cfg.n_mels {
        return Err(Error::invalid(format!(
            "n_coeffs {} exceeds n_mels {}",
            cfg.n_coeffs, cfg.n_mels
        )));
    }
    if cfg.n_coeffs == 0 || cfg.win_len == 0 || cfg.hop == 0 {
        return Err(Error::invalid("n_coeffs, win_len, hop must be positive"));
    }
    if audio.sample_rate < 8000 {
        return Err(Error::invalid(format!(
            "sample rate {} below supported minimum 8000 Hz",
            audio.sample_rate
        )));
    }
    if audio.is_empty() {
        return Err(Error::invalid("cannot extract MFCCs from empty audio"));
    }

    let fft_size = cfg.win_len.next_power_of_two();
    let sr = audio.sample_rate as f64;

    // Pre-emphasis over the whole signal.
    let mut emphasized = Vec::with_capacity(audio.len());
    emphasized.push(audio.samples[0] * (1.0 - cfg.pre_emphasis));
    for i in 1..audio.len() {
        emphasized.push(audio.samples[i] - cfg.pre_emphasis * audio.samples[i - 1]);
    }

    let n_frames = frame_count(audio.len(), cfg.win_len, cfg.hop);
    let win = hann_window(cfg.win_len);
    let bank = mel_filterbank(cfg.n_mels, fft_size, audio.sample_rate);
    let dct = dct_ii_orthonormal(cfg.n_coeffs + 1, cfg.n_mels);

    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(fft_size);
    let n_bins = fft_size / 2 + 1;

    let mut values = Array2::zeros((n_frames, cfg.n_coeffs));
    let mut frame_times = Vec::with_capacity(n_frames);
    let mut buf = vec![Complex::new(0.0, 0.0); fft_size];
    let mut power = vec![0.0f64; n_bins];
    let mut mel_log = vec![0.0f64; cfg.n_mels];

    for frame in 0..n_frames {
        let start = frame * cfg.hop;
        for (i, slot) in buf.iter_mut().enumerate() {
            let x = if i < cfg.win_len {
                emphasized.get(start + i).copied().unwrap_or(0.0) * win[i]
            } else {
                0.0
            };
            *slot = Complex::new(x, 0.0);
        }
        fft.process(&mut buf);
        for (k, p) in power.iter_mut().enumerate() {
            *p = buf[k].norm_sqr();
        }
        for (m, slot) in mel_log.iter_mut().enumerate() {
            let mut e = 0.0;
            for k in 0..n_bins {
                e += bank[[m, k]] * power[k];
            }
            *slot = e.max(cfg.log_floor).ln();
        }
        for c in 0..cfg.n_coeffs {
            let mut acc = 0.0;
            for (m, &v) in mel_log.iter().enumerate() {
                acc += dct[[c + 1, m]] * v;
            }
            values[[frame, c]] = acc;
        }
        frame_times.push((start as f64 + cfg.win_len as f64 / 2.0) / sr);
    }

    Ok(FeatureMatrix {
        values,
        frame_times,
    })
}
