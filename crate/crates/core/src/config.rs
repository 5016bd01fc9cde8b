//! Experiment configuration, read from TOML. Times are in nanoseconds and
//! rates in GHz; unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::Cm1Params;
use crate::detectors::DetectorKind;
use crate::error::{Error, Result};
use crate::signal::{FrameConfig, PulseSpec};

const NS: f64 = 1e-9;
const GHZ: f64 = 1e9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FrameSection {
    pub frame_duration_ns: f64,
    pub block_duration_ns: f64,
    pub frames: usize,
    pub sample_rate_ghz: f64,
    pub bandwidth_ghz: f64,
    pub pulse_width_ns: f64,
    /// Run the matched filter on a finer grid in `static-mse`.
    pub fine_grid: bool,
    pub fine_sample_rate_ghz: f64,
}

impl Default for FrameSection {
    fn default() -> Self {
        Self {
            frame_duration_ns: 200.0,
            block_duration_ns: 1.0,
            frames: 1,
            sample_rate_ghz: 8.0,
            bandwidth_ghz: 4.0,
            pulse_width_ns: 0.5,
            fine_grid: false,
            fine_sample_rate_ghz: 64.0,
        }
    }
}

impl FrameSection {
    pub fn frame(&self) -> FrameConfig {
        FrameConfig {
            frame_duration: self.frame_duration_ns * NS,
            block_duration: self.block_duration_ns * NS,
            frames: self.frames,
            sample_rate: self.sample_rate_ghz * GHZ,
            bandwidth: self.bandwidth_ghz * GHZ,
        }
    }

    pub fn fine_frame(&self) -> FrameConfig {
        self.frame().with_sample_rate(self.fine_sample_rate_ghz * GHZ)
    }

    pub fn pulse(&self) -> PulseSpec {
        PulseSpec::unit(self.pulse_width_ns * NS)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChannelKind {
    Awgn,
    Cm1,
    File,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelSection {
    pub kind: ChannelKind,
    /// Realization file, required for `kind = "file"`.
    pub file: Option<PathBuf>,
    /// Upper end of the first-path delay range for static draws in multipath;
    /// AWGN draws use the whole frame.
    pub toa_max_ns: f64,
    pub cm1: Cm1Params,
}

impl Default for ChannelSection {
    fn default() -> Self {
        Self {
            kind: ChannelKind::Awgn,
            file: None,
            toa_max_ns: 100.0,
            cm1: Cm1Params::default(),
        }
    }
}

/// Sampling phase of the detectors in a fused bank.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BankTiming {
    /// All detectors share block boundaries.
    Aligned,
    /// Detector `d` is delayed by a bit-reversed fraction of a block, so any
    /// power-of-two bank spreads its phases evenly.
    Staggered,
    /// Independent uniform phase per detector and repetition.
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectorSection {
    /// Detectors evaluated by `static-mse`.
    pub kinds: Vec<DetectorKind>,
    /// Detector used by the fused bank.
    pub fusion_kind: DetectorKind,
    /// Bank size for `fusion-track` and `multipath`.
    pub count: usize,
    /// Largest bank tried by `ned-sweep`.
    pub max_count: usize,
    pub timing: BankTiming,
    /// WMESS window N_e in blocks; unset means the 99% energy support of the profile.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wmess_blocks: Option<usize>,
    /// Realizations averaged into the WMESS profile.
    pub pdp_realizations: usize,
}

impl Default for DetectorSection {
    fn default() -> Self {
        Self {
            kinds: vec![
                DetectorKind::MatchedFilter,
                DetectorKind::EnergyMes,
                DetectorKind::EnergyWmess,
            ],
            fusion_kind: DetectorKind::EnergyMes,
            count: 4,
            max_count: 32,
            timing: BankTiming::Staggered,
            wmess_blocks: None,
            pdp_realizations: 1000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrajectoryKind {
    /// One uniform draw per repetition, held for every step.
    StaticUniform,
    /// Linear ramp from `start_ns` to `end_ns`.
    Ramp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrajectorySection {
    pub kind: TrajectoryKind,
    pub start_ns: f64,
    pub end_ns: f64,
    pub steps: usize,
    /// Trailing fraction of steps averaged into the steady-state MSE.
    pub steady_fraction: f64,
}

impl Default for TrajectorySection {
    fn default() -> Self {
        Self {
            kind: TrajectoryKind::Ramp,
            start_ns: 20.0,
            end_ns: 60.0,
            steps: 500,
            steady_fraction: 0.2,
        }
    }
}

impl TrajectorySection {
    /// First step of the steady-state window.
    pub fn steady_start(&self) -> usize {
        let tail = ((self.steps as f64 * self.steady_fraction).round() as usize).clamp(1, self.steps);
        self.steps - tail
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KalmanSection {
    pub nu: f64,
    pub plant_var: f64,
    pub prior: [f64; 2],
    pub prior_var: f64,
    /// Warm-up measurements per detector used to estimate its variance.
    pub calibration_steps: usize,
    /// Fixed measurement variances in ns^2; one entry applies to every detector.
    pub variances: Vec<f64>,
}

impl Default for KalmanSection {
    fn default() -> Self {
        Self {
            nu: 0.99,
            plant_var: 1e-4,
            prior: [20.0, 1.0],
            prior_var: 0.01,
            calibration_steps: 50,
            variances: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub trials: usize,
    pub snr_db: Vec<f64>,
    pub output_dir: PathBuf,
    pub frame: FrameSection,
    pub channel: ChannelSection,
    pub detectors: DetectorSection,
    pub trajectory: TrajectorySection,
    pub kalman: KalmanSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            trials: 1000,
            snr_db: vec![0.0, 4.0, 8.0, 12.0, 16.0, 20.0, 24.0, 28.0, 32.0],
            output_dir: PathBuf::from("out"),
            frame: FrameSection::default(),
            channel: ChannelSection::default(),
            detectors: DetectorSection::default(),
            trajectory: TrajectorySection::default(),
            kalman: KalmanSection::default(),
        }
    }
}

impl ExperimentConfig {
    /// Small trial counts for quick runs.
    pub fn desk() -> Self {
        Self {
            trials: 200,
            ..Self::default()
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical TOML form.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml_string().as_bytes()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Config("trials must be >= 1".into()));
        }
        if self.snr_db.is_empty() {
            return Err(Error::Config("snr_db must not be empty".into()));
        }
        if self.snr_db.iter().any(|s| !s.is_finite()) {
            return Err(Error::Config("snr_db entries must be finite".into()));
        }
        self.frame.frame().validate()?;
        if self.frame.fine_grid {
            self.frame.fine_frame().validate()?;
        }
        if !(self.frame.pulse_width_ns > 0.0) {
            return Err(Error::Config("pulse_width_ns must be positive".into()));
        }
        self.channel.cm1.validate()?;
        if self.channel.kind == ChannelKind::File && self.channel.file.is_none() {
            return Err(Error::Config("channel.kind = \"file\" needs channel.file".into()));
        }
        if !(self.channel.toa_max_ns > 0.0 && self.channel.toa_max_ns <= self.frame.frame_duration_ns)
        {
            return Err(Error::Config("toa_max_ns must lie in (0, frame_duration_ns]".into()));
        }
        let d = &self.detectors;
        if d.kinds.is_empty() {
            return Err(Error::Config("detectors.kinds must not be empty".into()));
        }
        if d.count == 0 || d.max_count == 0 {
            return Err(Error::Config("detector counts must be >= 1".into()));
        }
        if d.fusion_kind == DetectorKind::MatchedFilter {
            return Err(Error::Config("fusion_kind must be an energy detector".into()));
        }
        if d
            .wmess_blocks
            .is_some_and(|n| n == 0 || n > self.frame.frame().blocks_per_frame())
        {
            return Err(Error::Config("wmess_blocks must lie in [1, N_obs]".into()));
        }
        if d.pdp_realizations == 0 {
            return Err(Error::Config("pdp_realizations must be >= 1".into()));
        }
        let t = &self.trajectory;
        if t.steps == 0 {
            return Err(Error::Config("trajectory.steps must be >= 1".into()));
        }
        if !(t.steady_fraction > 0.0 && t.steady_fraction <= 1.0) {
            return Err(Error::Config("steady_fraction must lie in (0, 1]".into()));
        }
        let frame_ns = self.frame.frame_duration_ns;
        for v in [t.start_ns, t.end_ns] {
            if !(v >= 0.0 && v < frame_ns) {
                return Err(Error::Config("trajectory must stay inside the frame".into()));
            }
        }
        let k = &self.kalman;
        crate::fusion::StateModel::new(k.nu, k.plant_var)?;
        if !(k.prior_var >= 0.0) || k.prior.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("invalid Kalman prior".into()));
        }
        if k.variances.is_empty() && k.calibration_steps == 0 {
            return Err(Error::Config(
                "either calibration_steps or fixed variances are required".into(),
            ));
        }
        if k.variances.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Config("variances must be non-negative".into()));
        }
        Ok(())
    }
}
