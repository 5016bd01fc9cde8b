//! Transmit pulse synthesis, frame waveforms and spectrum-derived bounds.
//!
//! All times are in seconds. A [`SampledWaveform`] carries its own time base:
//! sample `i` sits at `origin + i * dt`.

use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Half-width of the synthesized pulse support, in units of the width parameter.
pub const PULSE_SUPPORT_WIDTHS: f64 = 4.0;

/// Minimum number of grid samples per pulse width.
pub const MIN_SAMPLES_PER_WIDTH: f64 = 4.0;

/// Second-order Gaussian monopulse.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseSpec {
    pub amplitude: f64,
    /// Width parameter zeta, seconds.
    pub width: f64,
    /// Rescale the sampled pulse so that `sum(s^2) * dt == 1`.
    pub unit_energy: bool,
}

impl PulseSpec {
    pub fn unit(width: f64) -> Self {
        Self {
            amplitude: 1.0,
            width,
            unit_energy: true,
        }
    }

    /// Continuous-time pulse value at `t` seconds from its centre.
    pub fn value(&self, t: f64) -> f64 {
        let r = t * t / (self.width * self.width);
        self.amplitude * (1.0 - 4.0 * PI * r) * (-2.0 * PI * r).exp()
    }

    /// Closed-form RMS bandwidth of the continuous pulse, `sqrt(5 / (2 pi)) / zeta`.
    pub fn rms_bandwidth_closed_form(&self) -> f64 {
        (5.0 / (2.0 * PI)).sqrt() / self.width
    }
}

/// Frame and receiver timing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameConfig {
    /// Frame duration T_f, seconds.
    pub frame_duration: f64,
    /// Energy-detector block duration T_b (= chip duration), seconds.
    pub block_duration: f64,
    /// Number of frames N_f.
    pub frames: usize,
    /// Nyquist sampling rate F_s, Hz.
    pub sample_rate: f64,
    /// Receiver bandwidth B, Hz.
    pub bandwidth: f64,
}

fn integer_ratio(num: f64, den: f64) -> Option<usize> {
    let r = num / den;
    let n = r.round();
    if n >= 1.0 && (r - n).abs() <= 1e-9 * n.max(1.0) {
        Some(n as usize)
    } else {
        None
    }
}

impl FrameConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.frame_duration,
            self.block_duration,
            self.sample_rate,
            self.bandwidth,
        ];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::InvalidFrame(
                "durations, rate and bandwidth must be positive".into(),
            ));
        }
        if self.frames == 0 {
            return Err(Error::InvalidFrame("at least one frame is required".into()));
        }
        if integer_ratio(self.frame_duration, self.block_duration).is_none() {
            return Err(Error::InvalidFrame(
                "frame duration is not an integer multiple of the block duration".into(),
            ));
        }
        if integer_ratio(self.block_duration, self.sample_interval()).is_none() {
            return Err(Error::InvalidFrame(
                "block duration is not an integer multiple of the sample interval".into(),
            ));
        }
        if self.sample_rate < 2.0 * self.bandwidth * (1.0 - 1e-12) {
            return Err(Error::InvalidFrame(
                "sample rate below twice the receiver bandwidth".into(),
            ));
        }
        Ok(())
    }

    pub fn sample_interval(&self) -> f64 {
        1.0 / self.sample_rate
    }

    /// N_obs = T_f / T_b.
    pub fn blocks_per_frame(&self) -> usize {
        integer_ratio(self.frame_duration, self.block_duration).unwrap_or(0)
    }

    pub fn samples_per_block(&self) -> usize {
        integer_ratio(self.block_duration, self.sample_interval()).unwrap_or(0)
    }

    pub fn samples_per_frame(&self) -> usize {
        self.blocks_per_frame() * self.samples_per_block()
    }

    /// Receive window length: the closed interval `[0, N_f T_f]`, so the last
    /// closed block has all of its samples.
    pub fn window_samples(&self) -> usize {
        self.frames * self.samples_per_frame() + 1
    }

    /// Noise degrees of freedom per block, M = 2 B T_b + 1.
    pub fn dof(&self) -> f64 {
        2.0 * self.bandwidth * self.block_duration + 1.0
    }

    /// Same timing on a different sampling grid.
    pub fn with_sample_rate(&self, sample_rate: f64) -> Self {
        Self {
            sample_rate,
            ..*self
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampledWaveform {
    pub samples: Vec<f64>,
    /// Sample interval, seconds.
    pub dt: f64,
    /// Time of sample 0, seconds.
    pub origin: f64,
}

impl SampledWaveform {
    pub fn zeros(len: usize, dt: f64, origin: f64) -> Self {
        Self {
            samples: vec![0.0; len],
            dt,
            origin,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// `sum(x^2) * dt`.
    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|x| x * x).sum::<f64>() * self.dt
    }

    pub fn time_of(&self, index: usize) -> f64 {
        self.origin + index as f64 * self.dt
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 * self.dt
    }

    pub fn scale(&mut self, factor: f64) {
        self.samples.iter_mut().for_each(|x| *x *= factor);
    }
}

/// Samples the pulse on a grid symmetric about t = 0 covering +-4 zeta.
pub fn gen_pulse(spec: &PulseSpec, dt: f64) -> Result<SampledWaveform> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidParameter(format!("sample interval {dt}")));
    }
    if !(spec.width > 0.0 && spec.width.is_finite()) {
        return Err(Error::InvalidParameter(format!("pulse width {}", spec.width)));
    }
    if spec.width < MIN_SAMPLES_PER_WIDTH * dt * (1.0 - 1e-12) {
        return Err(Error::GridTooCoarse {
            width: spec.width,
            max_dt: spec.width / MIN_SAMPLES_PER_WIDTH,
        });
    }
    let half = (PULSE_SUPPORT_WIDTHS * spec.width / dt + 1e-9).floor() as i64;
    let mut samples: Vec<f64> = (-half..=half)
        .map(|i| spec.value(i as f64 * dt))
        .collect();
    if spec.unit_energy {
        let energy = samples.iter().map(|x| x * x).sum::<f64>() * dt;
        let g = energy.sqrt().recip();
        samples.iter_mut().for_each(|x| *x *= g);
    }
    Ok(SampledWaveform {
        samples,
        dt,
        origin: -(half as f64) * dt,
    })
}

/// One pulse at the start of each of the N_f frames (no time hopping, positive polarity).
pub fn gen_tx_frames(cfg: &FrameConfig, spec: &PulseSpec) -> Result<SampledWaveform> {
    cfg.validate()?;
    let pulse = gen_pulse(spec, cfg.sample_interval())?;
    let step = cfg.samples_per_frame();
    let len = (cfg.frames - 1) * step + pulse.len();
    let mut out = SampledWaveform::zeros(len, pulse.dt, pulse.origin);
    for j in 0..cfg.frames {
        for (dst, src) in out.samples[j * step..].iter_mut().zip(&pulse.samples) {
            *dst += src;
        }
    }
    Ok(out)
}

/// Zeroth, first and second spectral moments of the sampled pulse,
/// `(int |S|^2 df, int f |S|^2 df, int f^2 |S|^2 df)`.
pub fn spectral_moments(spec: &PulseSpec, dt: f64) -> Result<(f64, f64, f64)> {
    let pulse = gen_pulse(spec, dt)?;
    let n = (8 * pulse.len()).next_power_of_two();
    let mut buf: Vec<Complex<f64>> = pulse
        .samples
        .iter()
        .map(|&x| Complex::new(x * dt, 0.0))
        .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
        .take(n)
        .collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);

    // Reorder to ascending frequency: bins n/2..n map to negative frequencies.
    let df = 1.0 / (n as f64 * dt);
    let ordered: Vec<(f64, f64)> = (0..n)
        .map(|k| (k + n / 2) % n)
        .map(|k| {
            let f = if k >= n / 2 {
                (k as f64 - n as f64) * df
            } else {
                k as f64 * df
            };
            (f, buf[k].norm_sqr())
        })
        .collect();

    let trapz = |g: &dyn Fn(f64, f64) -> f64| -> f64 {
        ordered
            .windows(2)
            .map(|w| 0.5 * (g(w[0].0, w[0].1) + g(w[1].0, w[1].1)) * (w[1].0 - w[0].0))
            .sum()
    };
    let m0 = trapz(&|_, p| p);
    let m1 = trapz(&|f, p| f * p);
    let m2 = trapz(&|f, p| f * f * p);
    Ok((m0, m1, m2))
}

/// RMS (effective) bandwidth beta of the sampled pulse, Hz.
pub fn effective_bandwidth(spec: &PulseSpec, dt: f64) -> Result<f64> {
    let (m0, _, m2) = spectral_moments(spec, dt)?;
    Ok((m2 / m0).sqrt())
}

/// Cramer-Rao bound on TOA variance, seconds^2, for linear SNR = E_b / N_0.
pub fn crlb(snr: f64, beta: f64) -> Result<f64> {
    if !(snr > 0.0 && snr.is_finite()) {
        return Err(Error::InvalidParameter(format!("snr {snr} must be positive")));
    }
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::InvalidParameter(format!("beta {beta} must be positive")));
    }
    Ok(1.0 / (8.0 * PI * PI * snr * beta * beta))
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    const NS: f64 = 1e-9;

    fn paper_frame() -> FrameConfig {
        FrameConfig {
            frame_duration: 200.0 * NS,
            block_duration: 1.0 * NS,
            frames: 1,
            sample_rate: 8e9,
            bandwidth: 4e9,
        }
    }

    #[test]
    fn pulse_point_values() {
        let spec = PulseSpec {
            amplitude: 1.0,
            width: 1.0 * NS,
            unit_energy: false,
        };
        assert_eq!(spec.value(0.0), 1.0);
        let half = spec.value(0.5 * NS);
        let expected = (1.0 - PI) * (-PI / 2.0).exp();
        assert!((half - expected).abs() < 1e-15);
        assert!((half + 0.4452).abs() < 1e-4);
    }

    #[test]
    fn pulse_unit_energy_and_symmetry() {
        let p = gen_pulse(&PulseSpec::unit(1.0 * NS), 0.125 * NS).unwrap();
        assert!((p.energy() - 1.0).abs() < 1e-9);
        let n = p.len();
        assert_eq!(n % 2, 1);
        for i in 0..n / 2 {
            assert_eq!(p.samples[i], p.samples[n - 1 - i]);
        }
        assert!((p.time_of(n / 2)).abs() < 1e-20);
        assert!((p.origin + 4.0 * NS).abs() < 1e-18);
    }

    #[test]
    fn pulse_energy_stable_under_refinement() {
        let raw = PulseSpec {
            amplitude: 1.0,
            width: 1.0 * NS,
            unit_energy: false,
        };
        let e1 = gen_pulse(&raw, 0.125 * NS).unwrap().energy();
        let e2 = gen_pulse(&raw, 0.0625 * NS).unwrap().energy();
        assert!(((e1 - e2) / e2).abs() < 1e-6);
        for width in [0.5 * NS, 1.0 * NS] {
            let u1 = gen_pulse(&PulseSpec::unit(width), 0.125 * NS).unwrap().energy();
            let u2 = gen_pulse(&PulseSpec::unit(width), 0.0625 * NS).unwrap().energy();
            assert!(((u1 - u2) / u2).abs() < 1e-6);
        }
    }

    #[test]
    fn coarse_grid_rejected() {
        let err = gen_pulse(&PulseSpec::unit(0.3 * NS), 0.125 * NS).unwrap_err();
        assert!(matches!(err, Error::GridTooCoarse { .. }));
        assert!(gen_pulse(&PulseSpec::unit(0.5 * NS), 0.125 * NS).is_ok());
    }

    #[test]
    fn frames_repeat_the_pulse() {
        let spec = PulseSpec::unit(0.5 * NS);
        let mut cfg = paper_frame();
        let single = gen_tx_frames(&cfg, &spec).unwrap();
        assert_eq!(single, gen_pulse(&spec, cfg.sample_interval()).unwrap());

        cfg.frames = 2;
        let two = gen_tx_frames(&cfg, &spec).unwrap();
        let step = cfg.samples_per_frame();
        assert_eq!(step, 1600);
        assert_eq!(cfg.window_samples(), 3201);
        assert_eq!(&two.samples[..single.len()], &single.samples[..]);
        assert_eq!(&two.samples[step..], &single.samples[..]);
        assert!((two.energy() - 2.0 * single.energy()).abs() < 1e-9 * two.energy());
    }

    #[test]
    fn frame_validation() {
        let cfg = paper_frame();
        cfg.validate().unwrap();
        assert_eq!(cfg.blocks_per_frame(), 200);
        assert_eq!(cfg.samples_per_block(), 8);
        assert!((cfg.dof() - 9.0).abs() < 1e-12);

        let bad = FrameConfig {
            block_duration: 0.7 * NS,
            ..cfg
        };
        assert!(bad.validate().is_err());
        let aliased = FrameConfig {
            bandwidth: 5e9,
            ..cfg
        };
        assert!(aliased.validate().is_err());
        let uneven = FrameConfig {
            sample_rate: 7.5e9,
            bandwidth: 3e9,
            ..cfg
        };
        assert!(uneven.validate().is_err());
    }

    #[test]
    fn bandwidth_scales_inversely_with_width() {
        let dt = 0.0625 * NS;
        let b1 = effective_bandwidth(&PulseSpec::unit(0.5 * NS), dt).unwrap();
        let b2 = effective_bandwidth(&PulseSpec::unit(1.0 * NS), dt).unwrap();
        assert!(((b1 / b2) - 2.0).abs() < 2e-3);
    }

    /// Independent route: Parseval gives int f^2 |S|^2 df = int s'(t)^2 dt / (4 pi^2),
    /// evaluated with the analytic derivative on a grid 16x finer than the FFT route.
    fn beta_time_domain_oracle(width: f64, dt: f64) -> f64 {
        let h = dt / 16.0;
        let c = 2.0 * PI / (width * width);
        let n = (8.0 * width / h) as i64;
        let (mut e, mut d) = (0.0, 0.0);
        for i in -n..=n {
            let t = i as f64 * h;
            let g = (-c * t * t).exp();
            let s = (1.0 - 2.0 * c * t * t) * g;
            let ds = (-6.0 * c * t + 4.0 * c * c * t * t * t) * g;
            e += s * s * h;
            d += ds * ds * h;
        }
        (d / e).sqrt() / (2.0 * PI)
    }

    #[test]
    fn bandwidth_matches_fine_grid_oracle() {
        let dt = 0.125 * NS;
        let spec = PulseSpec::unit(1.0 * NS);
        let beta = effective_bandwidth(&spec, dt).unwrap();
        let oracle = beta_time_domain_oracle(spec.width, dt);
        assert!(((beta - oracle) / oracle).abs() < 1e-3, "{beta} vs {oracle}");
        let closed = spec.rms_bandwidth_closed_form();
        assert!(((oracle - closed) / closed).abs() < 1e-6);
    }

    #[test]
    fn spectrum_first_moment_vanishes() {
        let (m0, m1, m2) = spectral_moments(&PulseSpec::unit(1.0 * NS), 0.125 * NS).unwrap();
        assert!(m0 > 0.0 && m2 > 0.0);
        let scale = (m0 * m2).sqrt();
        assert!(m1.abs() < 1e-9 * scale);
    }

    #[test]
    fn crlb_values() {
        let one = crlb(1.0, 1.0).unwrap();
        assert!((one - 1.0 / (8.0 * PI * PI)).abs() < 1e-15);
        assert!((one - 1.2665e-2).abs() < 1e-6);
        assert_eq!(crlb(2.0, 1.0).unwrap(), one / 2.0);
        assert_eq!(crlb(1.0, 2.0).unwrap(), one / 4.0);
        assert!(crlb(0.0, 1.0).is_err());
        assert!(crlb(1.0, -1.0).is_err());
    }

    proptest::proptest! {
        #[test]
        fn crlb_monotone(snr in 1e-3f64..1e6, beta in 1e6f64..1e11, k in 1.01f64..10.0) {
            let base = crlb(snr, beta).unwrap();
            proptest::prop_assert!(crlb(snr * k, beta).unwrap() < base);
            proptest::prop_assert!(crlb(snr, beta * k).unwrap() < base);
        }
    }
}
