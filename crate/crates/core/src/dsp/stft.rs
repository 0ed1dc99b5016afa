use ndarray::Array2;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::dsp::AudioBuffer;
use crate::error::{Error, Result};

/// Analysis window shape. Only Hann is supported.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Window {
    Hann,
}

/// Magnitude/phase time-frequency representation of a mono signal.
///
/// `magnitudes` and `phases` are frames x bins with bins == fft_size/2 + 1.
#[derive(Debug, Clone)]
pub struct Spectrogram {
    pub magnitudes: Array2<f64>,
    pub phases: Array2<f64>,
    pub fft_size: usize,
    pub hop: usize,
    pub sample_rate: u32,
}

impl Spectrogram {
    pub fn frames(&self) -> usize {
        self.magnitudes.nrows()
    }

    pub fn bins(&self) -> usize {
        self.magnitudes.ncols()
    }

    fn validate(&self) -> Result<()> {
        if self.bins() != self.fft_size / 2 + 1 {
            return Err(Error::DimensionMismatch {
                expected: self.fft_size / 2 + 1,
                got: self.bins(),
            });
        }
        if self.phases.dim() != self.magnitudes.dim() {
            return Err(Error::invalid(
                "magnitude and phase matrices have different shapes",
            ));
        }
        if self.magnitudes.iter().any(|&m| m < 0.0) {
            return Err(Error::invalid("negative magnitude entry"));
        }
        Ok(())
    }
}

/// Periodic Hann window, exact COLA for hop = n/2 and n/4.
pub fn hann_window(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
        .collect()
}

/// Number of analysis frames for a signal of `len` samples.
///
/// Frames start every `hop` samples. When `len - fft_size` is a multiple of
/// `hop` this equals (len - fft_size)/hop + 1; otherwise one extra frame is
/// appended and zero-padded so the tail of the signal is covered. A signal
/// shorter than one frame yields a single zero-padded frame.
pub fn frame_count(len: usize, fft_size: usize, hop: usize) -> usize {
    if len <= fft_size {
        1
    } else {
        let full = (len - fft_size) / hop + 1;
        if (len - fft_size) % hop == 0 {
            full
        } else {
            full + 1
        }
    }
}

/// Short-time Fourier transform with a Hann analysis window.
///
/// The final partial frame is zero-padded to `fft_size`; roundtrip guarantees
/// apply to the fully-overlapped interior only.
pub fn stft(audio: &AudioBuffer, fft_size: usize, hop: usize, window: Window) -> Result<Spectrogram> {
    let Window::Hann = window;
    if audio.is_empty() {
        return Err(Error::invalid("cannot compute STFT of empty audio"));
    }
    if !fft_size.is_power_of_two() {
        return Err(Error::invalid(format!(
            "fft_size must be a power of two, got {fft_size}"
        )));
    }
    if hop == 0 || hop > fft_size {
        return Err(Error::invalid(format!(
            "hop must satisfy 0 < hop <= fft_size, got hop={hop} fft_size={fft_size}"
        )));
    }

    let len = audio.len();
    let n_frames = frame_count(len, fft_size, hop);
    let n_bins = fft_size / 2 + 1;
    let win = hann_window(fft_size);

    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(fft_size);

    let mut magnitudes = Array2::zeros((n_frames, n_bins));
    let mut phases = Array2::zeros((n_frames, n_bins));
    let mut buf = vec![Complex::new(0.0, 0.0); fft_size];

    for frame in 0..n_frames {
        let start = frame * hop;
        for (i, slot) in buf.iter_mut().enumerate() {
            let x = audio.samples.get(start + i).copied().unwrap_or(0.0);
            *slot = Complex::new(x * win[i], 0.0);
        }
        fft.process(&mut buf);
        for (bin, c) in buf.iter().take(n_bins).enumerate() {
            magnitudes[[frame, bin]] = c.norm();
            phases[[frame, bin]] = c.arg();
        }
    }

    Ok(Spectrogram {
        magnitudes,
        phases,
        fft_size,
        hop,
        sample_rate: audio.sample_rate,
    })
}

/// Inverse STFT by weighted overlap-add with the Hann synthesis window.
///
/// Requires hop <= fft_size/2 (COLA for Hann). Output length is
/// (frames - 1) * hop + fft_size; callers trim to the original length.
pub fn istft(spec: &Spectrogram) -> Result<AudioBuffer> {
    spec.validate()?;
    if spec.hop == 0 || spec.hop > spec.fft_size / 2 {
        return Err(Error::invalid(format!(
            "COLA violation: hop {} exceeds fft_size/2 = {}",
            spec.hop,
            spec.fft_size / 2
        )));
    }

    let fft_size = spec.fft_size;
    let hop = spec.hop;
    let n_frames = spec.frames();
    let n_bins = spec.bins();
    let out_len = (n_frames - 1) * hop + fft_size;
    let win = hann_window(fft_size);

    let mut planner = FftPlanner::<f64>::new();
    let ifft = planner.plan_fft_inverse(fft_size);

    let mut out = vec![0.0f64; out_len];
    let mut norm = vec![0.0f64; out_len];
    let mut buf = vec![Complex::new(0.0, 0.0); fft_size];

    for frame in 0..n_frames {
        for bin in 0..n_bins {
            let m = spec.magnitudes[[frame, bin]];
            let p = spec.phases[[frame, bin]];
            buf[bin] = Complex::from_polar(m, p);
        }
        for bin in 1..fft_size - n_bins + 1 {
            buf[fft_size - bin] = buf[bin].conj();
        }
        ifft.process(&mut buf);
        let start = frame * hop;
        for i in 0..fft_size {
            let sample = buf[i].re / fft_size as f64;
            out[start + i] += sample * win[i];
            norm[start + i] += win[i] * win[i];
        }
    }

    for (sample, w) in out.iter_mut().zip(norm.iter()) {
        *sample /= w.max(1e-12);
    }

    AudioBuffer::new(out, spec.sample_rate)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone(freq: f64, sr: u32, len: usize) -> AudioBuffer {
        let samples = (0..len)
            .map(|i| (2.0 * std::f64::consts::PI * freq * i as f64 / sr as f64).sin())
            .collect();
        AudioBuffer::new(samples, sr).unwrap()
    }

    #[test]
    fn zero_audio_gives_zero_magnitudes() {
        let audio = AudioBuffer::new(vec![0.0; 4096], 44100).unwrap();
        let spec = stft(&audio, 1024, 256, Window::Hann).unwrap();
        assert_eq!(spec.frames(), 13);
        assert!(spec.magnitudes.iter().all(|&m| m == 0.0));
    }

    #[test]
    fn bin_centered_tone_peaks_at_expected_bin() {
        // Bin 32 of a 1024-point FFT at 44.1 kHz.
        let sr = 44100;
        let freq = 32.0 * sr as f64 / 1024.0;
        let audio = tone(freq, sr, 8192);
        let spec = stft(&audio, 1024, 256, Window::Hann).unwrap();
        for frame in 1..spec.frames() - 4 {
            let row = spec.magnitudes.row(frame);
            let peak = row
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0;
            assert_eq!(peak, 32, "frame {frame} peaked at bin {peak}");
        }
    }

    #[test]
    fn empty_audio_is_error() {
        let audio = AudioBuffer {
            samples: vec![],
            sample_rate: 44100,
        };
        assert!(stft(&audio, 1024, 256, Window::Hann).is_err());
    }

    #[test]
    fn hop_larger_than_fft_is_error() {
        let audio = AudioBuffer::new(vec![0.0; 4096], 44100).unwrap();
        assert!(stft(&audio, 1024, 2048, Window::Hann).is_err());
    }

    #[test]
    fn istft_rejects_cola_violation() {
        let audio = AudioBuffer::new(vec![0.1; 4096], 44100).unwrap();
        let spec = stft(&audio, 1024, 768, Window::Hann).unwrap();
        assert!(istft(&spec).is_err());
    }

    #[test]
    fn zero_spectrogram_gives_zero_audio() {
        let spec = Spectrogram {
            magnitudes: Array2::zeros((8, 513)),
            phases: Array2::zeros((8, 513)),
            fft_size: 1024,
            hop: 256,
            sample_rate: 44100,
        };
        let audio = istft(&spec).unwrap();
        assert!(audio.samples.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn istft_is_linear_in_magnitude() {
        let audio = tone(440.0, 44100, 4096);
        let spec = stft(&audio, 1024, 256, Window::Hann).unwrap();
        let mut doubled = spec.clone();
        doubled.magnitudes *= 2.0;
        let once = istft(&spec).unwrap();
        let twice = istft(&doubled).unwrap();
        for (a, b) in once.samples.iter().zip(twice.samples.iter()) {
            assert!((2.0 * a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn roundtrip_interior_error_below_1e6() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let samples: Vec<f64> = (0..4096).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let audio = AudioBuffer::new(samples, 44100).unwrap();
        let spec = stft(&audio, 1024, 256, Window::Hann).unwrap();
        let back = istft(&spec).unwrap();
        assert!(back.len() >= audio.len());
        let max_err = (1024..4096 - 1024)
            .map(|i| (audio.samples[i] - back.samples[i]).abs())
            .fold(0.0f64, f64::max);
        assert!(max_err < 1e-6, "interior roundtrip error {max_err}");
    }

    #[test]
    fn partial_tail_adds_zero_padded_frame() {
        // 4100 samples: 12 full hops plus a 4-sample tail.
        let audio = AudioBuffer::new(vec![0.25; 4100], 44100).unwrap();
        let spec = stft(&audio, 1024, 256, Window::Hann).unwrap();
        assert_eq!(spec.frames(), 14);
    }
}
