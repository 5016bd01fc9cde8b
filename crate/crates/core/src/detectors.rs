//! Nyquist-rate matched filtering and sub-Nyquist energy detection with
//! maximum-energy (MES) and weighted maximum-energy-sum (WMESS) selection.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{FrameConfig, SampledWaveform};

/// Detector outputs on a uniform time base.
///
/// For matched-filter output, element `k` is the correlation for a pulse centred
/// at `origin + k * spacing`. For energy-detector output, element `k` is the
/// energy of the block starting at `origin + k * spacing`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyVector {
    pub values: Vec<f64>,
    /// T_s for matched-filter output, T_b for energy blocks.
    pub spacing: f64,
    pub origin: f64,
}

impl EnergyVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DetectorKind {
    MatchedFilter,
    EnergyMes,
    EnergyWmess,
}

impl DetectorKind {
    pub fn label(&self) -> &'static str {
        match self {
            DetectorKind::MatchedFilter => "matched-filter",
            DetectorKind::EnergyMes => "energy-mes",
            DetectorKind::EnergyWmess => "energy-wmess",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToaEstimate {
    /// Seconds from frame start.
    pub tau: f64,
    /// Selected index, 1-based.
    pub index: usize,
    pub kind: DetectorKind,
    pub detector_id: usize,
}

impl ToaEstimate {
    pub fn with_id(self, detector_id: usize) -> Self {
        Self {
            detector_id,
            ..self
        }
    }
}

/// First index of the maximum (ties go to the lowest index).
pub fn argmax(values: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &v) in values.iter().enumerate() {
        match best {
            Some((_, b)) if v <= b => {}
            _ => best = Some((i, v)),
        }
    }
    best.map(|(i, _)| i)
}

/// Sliding correlation `x_n = T_s * sum_i m(n + i - c) s(i)` where `c` is the
/// template sample at t = 0. The received frame is zero-padded outside its span.
pub fn matched_filter(rx: &SampledWaveform, template: &SampledWaveform) -> Result<EnergyVector> {
    if ((rx.dt - template.dt) / rx.dt).abs() > 1e-9 {
        return Err(Error::GridMismatch {
            left: rx.dt,
            right: template.dt,
        });
    }
    if template.is_empty() || template.len() >= rx.len() {
        return Err(Error::Dimension(format!(
            "template length {} must be shorter than the received frame {}",
            template.len(),
            rx.len()
        )));
    }
    let centre = (-template.origin / template.dt).round().clamp(0.0, (template.len() - 1) as f64)
        as usize;
    let m = &rx.samples;
    let s = &template.samples;
    let n_rx = m.len();
    let values = (0..n_rx)
        .map(|n| {
            // Valid template range so that 0 <= n + i - centre < n_rx.
            let i_lo = centre.saturating_sub(n);
            let i_hi = (n_rx + centre - n).min(s.len());
            if i_lo >= i_hi {
                return 0.0;
            }
            let j_lo = n + i_lo - centre;
            let acc: f64 = m[j_lo..j_lo + (i_hi - i_lo)]
                .iter()
                .zip(&s[i_lo..i_hi])
                .map(|(a, b)| a * b)
                .sum();
            acc * rx.dt
        })
        .collect();
    Ok(EnergyVector {
        values,
        spacing: rx.dt,
        origin: rx.origin,
    })
}

/// Peak-picking estimate, `tau = origin + (n - 1) T_s` for 1-based `n`.
pub fn mf_estimate(x: &EnergyVector) -> Result<ToaEstimate> {
    let k = argmax(&x.values).ok_or_else(|| Error::Dimension("empty energy vector".into()))?;
    Ok(ToaEstimate {
        tau: x.origin + k as f64 * x.spacing,
        index: k + 1,
        kind: DetectorKind::MatchedFilter,
        detector_id: 0,
    })
}

/// Block energies accumulated over the N_f frames; see [`energy_blocks_with_offset`].
pub fn energy_blocks(rx: &SampledWaveform, cfg: &FrameConfig) -> Result<EnergyVector> {
    energy_blocks_with_offset(rx, cfg, 0)
}

/// Square-and-integrate over blocks of width T_b whose grid starts `offset`
/// samples after each frame start.
///
/// Each block integrates the samples on the closed interval
/// `[start, start + T_b]`, i.e. `T_b / T_s + 1` Nyquist samples, so a block
/// of white noise carries `M = 2 B T_b + 1` degrees of freedom when
/// `F_s = 2B`. Samples outside the received span count as zero.
pub fn energy_blocks_with_offset(
    rx: &SampledWaveform,
    cfg: &FrameConfig,
    offset: usize,
) -> Result<EnergyVector> {
    cfg.validate()?;
    if ((rx.dt - cfg.sample_interval()) / rx.dt).abs() > 1e-9 {
        return Err(Error::GridMismatch {
            left: rx.dt,
            right: cfg.sample_interval(),
        });
    }
    let spb = cfg.samples_per_block();
    let spf = cfg.samples_per_frame();
    let n_obs = cfg.blocks_per_frame();
    let sq: Vec<f64> = rx.samples.iter().map(|x| x * x).collect();
    let mut values = vec![0.0; n_obs];
    for frame in 0..cfg.frames {
        for (n, v) in values.iter_mut().enumerate() {
            let lo = frame * spf + offset + n * spb;
            if lo >= sq.len() {
                continue;
            }
            let hi = (lo + spb + 1).min(sq.len());
            *v += sq[lo..hi].iter().sum::<f64>();
        }
    }
    values.iter_mut().for_each(|v| *v *= rx.dt);
    Ok(EnergyVector {
        values,
        spacing: cfg.block_duration,
        origin: rx.origin + offset as f64 * rx.dt,
    })
}

fn block_midpoint(x: &EnergyVector, k: usize, kind: DetectorKind) -> ToaEstimate {
    ToaEstimate {
        tau: x.origin + (k as f64 + 0.5) * x.spacing,
        index: k + 1,
        kind,
        detector_id: 0,
    }
}

/// Maximum energy selection, `tau = (n - 1/2) T_b`.
pub fn mes_estimate(x: &EnergyVector) -> Result<ToaEstimate> {
    let k = argmax(&x.values).ok_or_else(|| Error::Dimension("empty energy vector".into()))?;
    Ok(block_midpoint(x, k, DetectorKind::EnergyMes))
}

/// Weighted maximum energy sum selection: the start block whose next `N_e`
/// energies correlate best with the a-priori profile. `x` is zero-padded
/// beyond its end.
pub fn wmess_estimate(x: &EnergyVector, profile: &[f64], n_e: usize) -> Result<ToaEstimate> {
    if profile.len() != n_e || n_e == 0 {
        return Err(Error::ProfileMismatch {
            profile: profile.len(),
            window: n_e,
        });
    }
    if x.is_empty() {
        return Err(Error::Dimension("empty energy vector".into()));
    }
    if n_e > x.len() {
        return Err(Error::Dimension(format!(
            "window {n_e} longer than {} blocks",
            x.len()
        )));
    }
    let n = x.len();
    let scores: Vec<f64> = (0..n)
        .map(|k| {
            let end = (k + n_e).min(n);
            x.values[k..end].iter().zip(profile).map(|(a, b)| a * b).sum()
        })
        .collect();
    let k = argmax(&scores).expect("non-empty");
    Ok(block_midpoint(x, k, DetectorKind::EnergyWmess))
}
