use crate::dsp::stft::{stft, Window};
use crate::dsp::AudioBuffer;
use crate::error::{Error, Result};

/// Strictly increasing onset (stroke) times in seconds.
#[derive(Debug, Clone, Default)]
pub struct OnsetList {
    times: Vec<f64>,
}

impl OnsetList {
    pub fn new(times: Vec<f64>) -> Result<Self> {
        if times.iter().any(|t| !t.is_finite() || *t < 0.0) {
            return Err(Error::invalid("onset times must be finite and non-negative"));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("onset times must be strictly increasing"));
        }
        Ok(Self { times })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Spectral-flux onset detector parameters.
#[derive(Debug, Clone)]
pub struct OnsetConfig {
    pub win_len: usize,
    pub hop: usize,
    /// MAD multiplier in the adaptive threshold median + k * MAD.
    pub threshold_k: f64,
    /// Width of the sliding threshold window in seconds.
    pub median_window: f64,
    /// Minimum inter-onset gap in seconds.
    pub min_gap: f64,
}

impl OnsetConfig {
    /// ~23 ms window (rounded up to a power of two), 10 ms hop.
    pub fn for_sample_rate(sample_rate: u32) -> Self {
        let sr = sample_rate as f64;
        Self {
            win_len: ((0.023 * sr) as usize).next_power_of_two(),
            hop: (0.010 * sr).round() as usize,
            threshold_k: 1.5,
            median_window: 2.0,
            min_gap: 0.05,
        }
    }
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n == 0 {
        return 0.0;
    }
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Half-wave-rectified spectral flux per frame; flux[0] == 0.
pub fn spectral_flux(audio: &AudioBuffer, win_len: usize, hop: usize) -> Result<Vec<f64>> {
    let spec = stft(audio, win_len, hop, Window::Hann)?;
    let mut flux = vec![0.0; spec.frames()];
    for t in 1..spec.frames() {
        let mut acc = 0.0;
        for k in 0..spec.bins() {
            let d = spec.magnitudes[[t, k]] - spec.magnitudes[[t - 1, k]];
            if d > 0.0 {
                acc += d;
            }
        }
        flux[t] = acc;
    }
    Ok(flux)
}

/// Detects percussive onsets as local maxima of half-wave-rectified spectral
/// flux above an adaptive median + k*MAD threshold, with a minimum
/// inter-onset gap.
pub fn detect_onsets(audio: &AudioBuffer, cfg: &OnsetConfig) -> Result<OnsetList> {
    if audio.len() <= cfg.win_len {
        return Err(Error::invalid(format!(
            "audio ({} samples) not longer than one analysis frame ({})",
            audio.len(),
            cfg.win_len
        )));
    }
    let flux = spectral_flux(audio, cfg.win_len, cfg.hop)?;
    let n = flux.len();
    let sr = audio.sample_rate as f64;
    let half_window = ((cfg.median_window / 2.0) * sr / cfg.hop as f64).round() as usize;

    let mut threshold = vec![0.0; n];
    let mut scratch = Vec::new();
    for t in 0..n {
        let lo = t.saturating_sub(half_window);
        let hi = (t + half_window + 1).min(n);
        scratch.clear();
        scratch.extend_from_slice(&flux[lo..hi]);
        scratch.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let med = median(&scratch);
        let mut devs: Vec<f64> = scratch.iter().map(|v| (v - med).abs()).collect();
        devs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        threshold[t] = med + cfg.threshold_k * median(&devs);
    }

    // Flux peaks sit where the rising edge of the window crosses the attack;
    // for the Hann window that is about 3/4 of a window behind the frame start
    // (empirically calibrated on synthetic bursts).
    let time_offset = 0.75 * cfg.win_len as f64 / sr;
    let duration = audio.duration();

    let mut picked: Vec<(f64, f64)> = Vec::new(); // (time, flux)
    for t in 1..n.saturating_sub(1) {
        if flux[t] > threshold[t] && flux[t] >= flux[t - 1] && flux[t] > flux[t + 1] {
            let time = (t as f64 * cfg.hop as f64 / sr + time_offset).min(duration);
            match picked.last() {
                Some(&(prev_t, prev_f)) if time - prev_t < cfg.min_gap => {
                    if flux[t] > prev_f {
                        *picked.last_mut().unwrap() = (time, flux[t]);
                    }
                }
                _ => picked.push((time, flux[t])),
            }
        }
    }

    OnsetList::new(picked.into_iter().map(|(t, _)| t).collect())
}
