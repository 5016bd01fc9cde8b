//! Channel realizations (single-path AWGN and a Saleh-Valenzuela residential
//! LOS approximation), noisy reception, power-delay-profile averaging and the
//! plain-text realization file format.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Exp, Gamma, Poisson, StandardNormal};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream_rng, SimRng};
use crate::signal::{db_to_linear, FrameConfig, SampledWaveform};

const NS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tap {
    pub gain: f64,
    /// Seconds.
    pub delay: f64,
}

/// Multipath taps with unit total power, sorted by strictly increasing delay.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    taps: Vec<Tap>,
    /// Nominal captured energy carried with imported/exported realizations.
    energy: f64,
}

impl ChannelRealization {
    /// Sorts, merges coincident delays and renormalizes the gains to unit power.
    pub fn new(mut taps: Vec<Tap>, energy: f64) -> Result<Self> {
        if taps.is_empty() {
            return Err(Error::InvalidParameter("channel needs at least one tap".into()));
        }
        if taps.iter().any(|t| !t.gain.is_finite() || !t.delay.is_finite()) {
            return Err(Error::InvalidParameter("non-finite tap".into()));
        }
        taps.sort_by(|a, b| a.delay.total_cmp(&b.delay));
        let mut merged: Vec<Tap> = Vec::with_capacity(taps.len());
        for t in taps {
            match merged.last_mut() {
                Some(last) if last.delay == t.delay => {
                    let p = last.gain * last.gain + t.gain * t.gain;
                    last.gain = last.gain.signum() * p.sqrt();
                }
                _ => merged.push(t),
            }
        }
        let power: f64 = merged.iter().map(|t| t.gain * t.gain).sum();
        if !(power > 0.0) {
            return Err(Error::InvalidParameter("channel has zero power".into()));
        }
        let g = power.sqrt().recip();
        merged.iter_mut().for_each(|t| t.gain *= g);
        Ok(Self {
            taps: merged,
            energy,
        })
    }

    pub fn taps(&self) -> &[Tap] {
        &self.taps
    }

    pub fn energy(&self) -> f64 {
        self.energy
    }

    /// First-path delay tau_1.
    pub fn toa(&self) -> f64 {
        self.taps[0].delay
    }

    pub fn power(&self) -> f64 {
        self.taps.iter().map(|t| t.gain * t.gain).sum()
    }

    /// Same profile with the first path moved to `toa`.
    pub fn with_toa(&self, toa: f64) -> Self {
        let shift = toa - self.toa();
        Self {
            taps: self
                .taps
                .iter()
                .map(|t| Tap {
                    gain: t.gain,
                    delay: t.delay + shift,
                })
                .collect(),
            energy: self.energy,
        }
    }
}

/// Single path, unit gain.
pub fn awgn_realization(tau_toa: f64, frame_duration: f64) -> Result<ChannelRealization> {
    if !(tau_toa >= 0.0 && tau_toa < frame_duration) {
        return Err(Error::DelayOutOfFrame {
            delay: tau_toa,
            frame: frame_duration,
        });
    }
    Ok(ChannelRealization {
        taps: vec![Tap {
            gain: 1.0,
            delay: tau_toa,
        }],
        energy: 1.0,
    })
}

/// Saleh-Valenzuela cluster/ray parameters. Defaults follow the published
/// residential line-of-sight set (single ray-rate, no cluster shadowing).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Cm1Params {
    pub cluster_rate_per_ns: f64,
    pub ray_rate_per_ns: f64,
    pub cluster_decay_ns: f64,
    pub ray_decay_ns: f64,
    pub mean_clusters: f64,
    pub nakagami_m: f64,
    /// Taps beyond this excess delay are discarded.
    pub max_excess_delay_ns: f64,
}

impl Default for Cm1Params {
    fn default() -> Self {
        Self {
            cluster_rate_per_ns: 0.047,
            ray_rate_per_ns: 1.54,
            cluster_decay_ns: 22.61,
            ray_decay_ns: 12.53,
            mean_clusters: 3.0,
            nakagami_m: 1.167,
            max_excess_delay_ns: 100.0,
        }
    }
}

impl Cm1Params {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("cluster_rate_per_ns", self.cluster_rate_per_ns),
            ("ray_rate_per_ns", self.ray_rate_per_ns),
            ("cluster_decay_ns", self.cluster_decay_ns),
            ("ray_decay_ns", self.ray_decay_ns),
            ("mean_clusters", self.mean_clusters),
            ("max_excess_delay_ns", self.max_excess_delay_ns),
        ];
        for (name, v) in fields {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be positive")));
            }
        }
        if !(self.nakagami_m >= 0.5 && self.nakagami_m.is_finite()) {
            return Err(Error::InvalidParameter("nakagami_m must be >= 0.5".into()));
        }
        Ok(())
    }
}

/// Draws one realization with first path at zero excess delay.
pub fn cm1_realization(params: &Cm1Params, seed: u64) -> Result<ChannelRealization> {
    params.validate()?;
    let mut rng = stream_rng(seed, &[0xC1]);
    cm1_draw(params, &mut rng)
}

pub(crate) fn cm1_draw(params: &Cm1Params, rng: &mut SimRng) -> Result<ChannelRealization> {
    let clusters = Poisson::new(params.mean_clusters)
        .map_err(|e| Error::InvalidParameter(e.to_string()))?
        .sample(rng)
        .max(1.0) as usize;
    let cluster_gap = Exp::new(params.cluster_rate_per_ns).expect("validated rate");
    let ray_gap = Exp::new(params.ray_rate_per_ns).expect("validated rate");
    let m = params.nakagami_m;
    let fading = Gamma::new(m, 1.0 / m).expect("validated shape");
    let max_delay = params.max_excess_delay_ns;

    let mut taps = Vec::new();
    let mut cluster_start: f64 = 0.0;
    for c in 0..clusters {
        if c > 0 {
            cluster_start += cluster_gap.sample(rng);
        }
        if cluster_start >= max_delay {
            break;
        }
        let cluster_power = (-cluster_start / params.cluster_decay_ns).exp();
        let mut ray: f64 = 0.0;
        while cluster_start + ray < max_delay {
            let mean_power = cluster_power * (-ray / params.ray_decay_ns).exp();
            let power: f64 = mean_power * fading.sample(rng);
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            taps.push(Tap {
                gain: sign * power.sqrt(),
                delay: (cluster_start + ray) * NS,
            });
            ray += ray_gap.sample(rng);
        }
    }
    ChannelRealization::new(taps, 1.0)
}

/// White Gaussian noise with two-sided PSD `N_0 / 2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub n0: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn two_sided_psd(&self) -> f64 {
        self.n0 / 2.0
    }

    /// Per-sample variance at rate `fs` before band limiting, `(N_0/2) F_s`.
    pub fn sample_variance(&self, fs: f64) -> f64 {
        self.two_sided_psd() * fs
    }
}

/// Zeroes every spectral component above `bandwidth` (ideal brick wall).
/// No-op when the bandwidth reaches the Nyquist frequency.
pub fn band_limit(samples: &mut [f64], dt: f64, bandwidth: f64) {
    let n = samples.len();
    if n == 0 || bandwidth >= 0.5 / dt * (1.0 - 1e-12) {
        return;
    }
    let mut buf: Vec<Complex<f64>> = samples.iter().map(|&x| Complex::new(x, 0.0)).collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(n).process(&mut buf);
    let df = 1.0 / (n as f64 * dt);
    for (k, v) in buf.iter_mut().enumerate() {
        let f = k.min(n - k) as f64 * df;
        if f > bandwidth {
            *v = Complex::new(0.0, 0.0);
        }
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    let scale = 1.0 / n as f64;
    for (dst, v) in samples.iter_mut().zip(&buf) {
        *dst = v.re * scale;
    }
}

/// Noiseless received waveform over the receive window `[0, N_f T_f]`, band
/// limited to `B` and scaled so the full (uncropped) received energy is `energy`.
pub fn received_signal(
    tx: &SampledWaveform,
    ch: &ChannelRealization,
    energy: f64,
    cfg: &FrameConfig,
) -> Result<SampledWaveform> {
    let dt = cfg.sample_interval();
    if ((tx.dt - dt) / dt).abs() > 1e-9 {
        return Err(Error::GridMismatch {
            left: tx.dt,
            right: dt,
        });
    }
    let window = cfg.window_samples();
    let tx_start = (tx.origin / dt).round() as i64;
    let shifts: Vec<i64> = ch.taps.iter().map(|t| (t.delay / dt).round() as i64).collect();
    let lo = (tx_start + shifts[0]).min(0);
    let hi = (tx_start + tx.len() as i64 + shifts[shifts.len() - 1]).max(window as i64);
    let mut ext = vec![0.0; (hi - lo) as usize];
    for (tap, &shift) in ch.taps.iter().zip(&shifts) {
        let base = (tx_start + shift - lo) as usize;
        for (dst, &s) in ext[base..].iter_mut().zip(&tx.samples) {
            *dst += tap.gain * s;
        }
    }
    band_limit(&mut ext, dt, cfg.bandwidth);
    let current: f64 = ext.iter().map(|x| x * x).sum::<f64>() * dt;
    if current > 0.0 {
        let g = (energy / current).sqrt();
        ext.iter_mut().for_each(|x| *x *= g);
    }
    let start = (-lo) as usize;
    Ok(SampledWaveform {
        samples: ext[start..start + window].to_vec(),
        dt,
        origin: 0.0,
    })
}

/// Band-limited white noise over the receive window.
pub fn noise_waveform(noise: &NoiseSpec, cfg: &FrameConfig) -> SampledWaveform {
    let dt = cfg.sample_interval();
    let window = cfg.window_samples();
    let sd = noise.sample_variance(cfg.sample_rate).sqrt();
    let mut rng = stream_rng(noise.seed, &[0x4E]);
    let mut samples: Vec<f64> = (0..window)
        .map(|_| sd * rng.sample::<f64, _>(StandardNormal))
        .collect();
    band_limit(&mut samples, dt, cfg.bandwidth);
    SampledWaveform {
        samples,
        dt,
        origin: 0.0,
    }
}

/// Received waveform for SNR = E_b / N_0 (dB), with E_b the captured energy.
pub fn apply_channel(
    tx: &SampledWaveform,
    ch: &ChannelRealization,
    noise: &NoiseSpec,
    snr_db: f64,
    cfg: &FrameConfig,
) -> Result<SampledWaveform> {
    if !(noise.n0 > 0.0) {
        return Err(Error::InvalidParameter("N_0 must be positive".into()));
    }
    let energy = db_to_linear(snr_db) * noise.n0;
    let mut rx = received_signal(tx, ch, energy, cfg)?;
    let w = noise_waveform(noise, cfg);
    for (x, n) in rx.samples.iter_mut().zip(&w.samples) {
        *x += n;
    }
    Ok(rx)
}

/// Per-block tap energy averaged over realizations, aligned so that the first
/// path falls in block 0, normalized to unit sum.
pub fn average_profile(
    realizations: &[ChannelRealization],
    block_duration: f64,
    blocks: usize,
) -> Vec<f64> {
    let mut acc = vec![0.0; blocks.max(1)];
    for ch in realizations {
        let t0 = ch.toa();
        for t in ch.taps() {
            let k = ((t.delay - t0) / block_duration + 1e-9).floor() as usize;
            if k < acc.len() {
                acc[k] += t.gain * t.gain;
            }
        }
    }
    let total: f64 = acc.iter().sum();
    if total > 0.0 {
        acc.iter_mut().for_each(|v| *v /= total);
    }
    acc
}

/// Averaged power-delay profile of `n_realizations` generator draws.
pub fn estimate_pdp(
    params: &Cm1Params,
    n_realizations: usize,
    block_duration: f64,
    seed: u64,
) -> Result<Vec<f64>> {
    if n_realizations == 0 {
        return Err(Error::InvalidParameter("n_realizations must be >= 1".into()));
    }
    params.validate()?;
    let blocks = (params.max_excess_delay_ns * NS / block_duration).ceil() as usize;
    let draws = (0..n_realizations as u64)
        .map(|i| cm1_draw(params, &mut stream_rng(seed, &[0x9D9, i])))
        .collect::<Result<Vec<_>>>()?;
    Ok(average_profile(&draws, block_duration, blocks))
}

/// Smallest number of leading blocks holding at least `fraction` of the profile energy.
pub fn profile_support(profile: &[f64], fraction: f64) -> usize {
    let total: f64 = profile.iter().sum();
    let mut acc = 0.0;
    for (i, v) in profile.iter().enumerate() {
        acc += v;
        if acc >= fraction * total * (1.0 - 1e-12) {
            return i + 1;
        }
    }
    profile.len()
}

/// Parses the realization file format: records of `E <energy>` followed by
/// `T <alpha> <tau_seconds>` lines, separated by blank lines.
pub fn parse_channel_file(text: &str) -> Result<Vec<ChannelRealization>> {
    let mut out = Vec::new();
    let mut energy: Option<f64> = None;
    let mut taps: Vec<Tap> = Vec::new();
    let mut record_line = 0;

    let finish = |energy: &mut Option<f64>,
                  taps: &mut Vec<Tap>,
                  line: usize,
                  out: &mut Vec<ChannelRealization>|
     -> Result<()> {
        match energy.take() {
            None if taps.is_empty() => Ok(()),
            None => Err(Error::ChannelFile {
                line,
                msg: "tap lines before an E header".into(),
            }),
            Some(_) if taps.is_empty() => Err(Error::ChannelFile {
                line,
                msg: "record has no taps".into(),
            }),
            Some(e) => {
                let power: f64 = taps.iter().map(|t| t.gain * t.gain).sum();
                if (power - 1.0).abs() > 1e-6 {
                    return Err(Error::ChannelFile {
                        line,
                        msg: format!("tap power {power} differs from 1"),
                    });
                }
                let mut prev = f64::NEG_INFINITY;
                for t in taps.iter() {
                    if !(t.delay > prev) {
                        return Err(Error::ChannelFile {
                            line,
                            msg: "tap delays must be strictly increasing".into(),
                        });
                    }
                    prev = t.delay;
                }
                out.push(ChannelRealization::new(std::mem::take(taps), e)?);
                Ok(())
            }
        }
    };

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            finish(&mut energy, &mut taps, record_line, &mut out)?;
            continue;
        }
        if line.starts_with('#') {
            continue;
        }
        let mut fields = line.split_whitespace();
        let tag = fields.next().unwrap_or_default();
        let nums: std::result::Result<Vec<f64>, _> = fields.map(str::parse::<f64>).collect();
        let nums = nums.map_err(|e| Error::ChannelFile {
            line: line_no,
            msg: e.to_string(),
        })?;
        match (tag, nums.as_slice()) {
            ("E", [e]) => {
                finish(&mut energy, &mut taps, record_line, &mut out)?;
                energy = Some(*e);
                record_line = line_no;
            }
            ("T", [alpha, tau]) => {
                if energy.is_none() {
                    return Err(Error::ChannelFile {
                        line: line_no,
                        msg: "tap line before an E header".into(),
                    });
                }
                taps.push(Tap {
                    gain: *alpha,
                    delay: *tau,
                });
            }
            _ => {
                return Err(Error::ChannelFile {
                    line: line_no,
                    msg: format!("unrecognized line '{line}'"),
                })
            }
        }
    }
    finish(&mut energy, &mut taps, record_line, &mut out)?;
    Ok(out)
}

pub fn read_channel_file(path: &Path) -> Result<Vec<ChannelRealization>> {
    parse_channel_file(&std::fs::read_to_string(path)?)
}

pub fn format_channel_file(realizations: &[ChannelRealization]) -> String {
    let mut s = String::new();
    for (i, ch) in realizations.iter().enumerate() {
        if i > 0 {
            s.push('\n');
        }
        let _ = writeln!(s, "E {:e}", ch.energy);
        for t in &ch.taps {
            let _ = writeln!(s, "T {:e} {:e}", t.gain, t.delay);
        }
    }
    s
}

pub fn write_channel_file(path: &Path, realizations: &[ChannelRealization]) -> Result<()> {
    std::fs::write(path, format_channel_file(realizations))?;
    Ok(())
}
