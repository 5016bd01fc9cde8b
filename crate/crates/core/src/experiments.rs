//! Monte Carlo experiment drivers: static MSE against SNR, fused tracking of
//! a TOA trajectory, the detector count needed to match the matched filter,
//! multipath comparisons and PDP estimation.
//!
//! Every random quantity is drawn from a stream keyed by the seed and the
//! (SNR, repetition, detector) indices, so results do not depend on thread
//! scheduling and a bank of N+1 detectors extends the bank of N.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::channel::{
    average_profile, profile_support, awgn_realization, band_limit, cm1_draw, estimate_pdp, read_channel_file,
    received_signal, ChannelRealization, Cm1Params,
};
use crate::config::{BankTiming, ChannelKind, ExperimentConfig, TrajectoryKind};
use crate::detectors::{
    energy_blocks_with_offset, matched_filter, mes_estimate, mf_estimate, wmess_estimate,
    DetectorKind,
};
use crate::error::{Error, Result};
use crate::fusion::{kalman_init, kalman_run, MeasurementModel, StateModel};
use crate::report::{MseReport, NedRow, SteadyRow, StaticRow, TrackRow};
use crate::rng::{stream_rng, SimRng};
use crate::signal::{
    crlb, db_to_linear, effective_bandwidth, gen_pulse, gen_tx_frames, FrameConfig,
    SampledWaveform,
};
use crate::stats::n_ed_required;

const NS: f64 = 1e-9;
const NS2: f64 = 1e18;
/// Floor on calibrated measurement variances, ns^2.
const MIN_VARIANCE: f64 = 1e-12;

const STREAM_STATIC: u64 = 0x5747;
const STREAM_TRACK: u64 = 0x7472;
const STREAM_PHASE: u64 = 0x7068;
const STREAM_TRUTH: u64 = 0x7475;
const STREAM_PDP: u64 = 0x9D9;
/// Detector index used for the matched-filter baseline.
const MF_TRACK: u64 = u64::MAX;

enum ChannelSource {
    Awgn,
    Cm1(Cm1Params),
    File(Vec<ChannelRealization>),
}

struct Receiver {
    frame: FrameConfig,
    tx: SampledWaveform,
    template: SampledWaveform,
}

impl Receiver {
    fn new(frame: FrameConfig, cfg: &ExperimentConfig) -> Result<Self> {
        frame.validate()?;
        let pulse = cfg.frame.pulse();
        Ok(Self {
            frame,
            tx: gen_tx_frames(&frame, &pulse)?,
            template: gen_pulse(&pulse, frame.sample_interval())?,
        })
    }

    /// Unit-energy received waveform plus white noise of PSD `n0 / 2`.
    fn receive(&self, ch: &ChannelRealization, n0: f64, rng: &mut SimRng) -> Result<SampledWaveform> {
        let mut rx = received_signal(&self.tx, ch, 1.0, &self.frame)?;
        let sd = (0.5 * n0 * self.frame.sample_rate).sqrt();
        let mut noise: Vec<f64> = (0..rx.len())
            .map(|_| sd * rng.sample::<f64, _>(StandardNormal))
            .collect();
        band_limit(&mut noise, rx.dt, self.frame.bandwidth);
        for (x, n) in rx.samples.iter_mut().zip(&noise) {
            *x += n;
        }
        Ok(rx)
    }
}

/// Everything derived once from a configuration.
pub struct Scenario<'a> {
    cfg: &'a ExperimentConfig,
    base: Receiver,
    fine: Option<Receiver>,
    channel: ChannelSource,
    profile: Vec<f64>,
}

fn truncate_profile(full: &[f64], n_e: usize) -> Vec<f64> {
    let mut p: Vec<f64> = full.iter().copied().chain(std::iter::repeat(0.0)).take(n_e).collect();
    let total: f64 = p.iter().sum();
    if total > 0.0 {
        p.iter_mut().for_each(|v| *v /= total);
    } else {
        p[0] = 1.0;
    }
    p
}

/// Radical inverse of `d` in base 2; any power-of-two prefix is evenly spread over `[0, 1)`.
fn van_der_corput(mut d: u64) -> f64 {
    let mut x = 0.0;
    let mut base = 0.5;
    while d > 0 {
        if d & 1 == 1 {
            x += base;
        }
        base *= 0.5;
        d >>= 1;
    }
    x
}

impl<'a> Scenario<'a> {
    pub fn new(cfg: &'a ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let base = Receiver::new(cfg.frame.frame(), cfg)?;
        let fine = if cfg.frame.fine_grid {
            Some(Receiver::new(cfg.frame.fine_frame(), cfg)?)
        } else {
            None
        };
        let block = base.frame.block_duration;
        let n_obs = base.frame.blocks_per_frame();
        let (channel, profile) = match cfg.channel.kind {
            ChannelKind::Awgn => (ChannelSource::Awgn, vec![1.0]),
            ChannelKind::Cm1 => {
                let params = cfg.channel.cm1;
                let full = estimate_pdp(
                    &params,
                    cfg.detectors.pdp_realizations,
                    block,
                    crate::rng::derive_seed(cfg.seed, &[STREAM_PDP]),
                )?;
                (ChannelSource::Cm1(params), full)
            }
            ChannelKind::File => {
                let path = cfg.channel.file.as_ref().expect("validated");
                let realizations = read_channel_file(path)?;
                let full = average_profile(&realizations, block, n_obs);
                (ChannelSource::File(realizations), full)
            }
        };
        let n_e = cfg
            .detectors
            .wmess_blocks
            .unwrap_or_else(|| profile_support(&profile, 0.99))
            .min(n_obs);
        let profile = truncate_profile(&profile, n_e);
        Ok(Self {
            cfg,
            base,
            fine,
            channel,
            profile,
        })
    }

    /// WMESS weight vector in use.
    pub fn profile(&self) -> &[f64] {
        &self.profile
    }

    /// Range of uniformly drawn first-path delays, seconds.
    fn toa_range(&self) -> f64 {
        match self.channel {
            ChannelSource::Awgn => self.base.frame.frame_duration,
            _ => self.cfg.channel.toa_max_ns * NS,
        }
    }

    fn draw_channel(&self, tau: f64, rng: &mut SimRng) -> Result<ChannelRealization> {
        match &self.channel {
            ChannelSource::Awgn => awgn_realization(tau, self.base.frame.frame_duration),
            ChannelSource::Cm1(params) => Ok(cm1_draw(params, rng)?.with_toa(tau)),
            ChannelSource::File(list) => {
                let i = rng.random_range(0..list.len());
                Ok(list[i].with_toa(tau))
            }
        }
    }

    fn block_offset(&self, timing: BankTiming, snr_index: usize, rep: usize, detector: usize) -> usize {
        let spb = self.base.frame.samples_per_block();
        match timing {
            BankTiming::Aligned => 0,
            BankTiming::Staggered => {
                ((van_der_corput(detector as u64) * spb as f64).floor() as usize).min(spb - 1)
            }
            BankTiming::Random => stream_rng(
                self.cfg.seed,
                &[STREAM_PHASE, snr_index as u64, rep as u64, detector as u64],
            )
            .random_range(0..spb),
        }
    }

    /// TOA estimate in seconds.
    fn estimate(&self, kind: DetectorKind, offset: usize, rx: &SampledWaveform, rcv: &Receiver) -> Result<f64> {
        let est = match kind {
            DetectorKind::MatchedFilter => mf_estimate(&matched_filter(rx, &rcv.template)?)?,
            DetectorKind::EnergyMes => mes_estimate(&energy_blocks_with_offset(rx, &rcv.frame, offset)?)?,
            DetectorKind::EnergyWmess => {
                let x = energy_blocks_with_offset(rx, &rcv.frame, offset)?;
                wmess_estimate(&x, &self.profile, self.profile.len())?
            }
        };
        Ok(est.tau)
    }

    fn receiver_for(&self, kind: DetectorKind) -> &Receiver {
        match (kind, &self.fine) {
            (DetectorKind::MatchedFilter, Some(fine)) => fine,
            _ => &self.base,
        }
    }

    /// CRLB in ns^2 for the pulse on the matched-filter grid.
    fn crlb_ns2(&self, snr_db: f64) -> Result<f64> {
        let rcv = self.receiver_for(DetectorKind::MatchedFilter);
        let beta = effective_bandwidth(&self.cfg.frame.pulse(), rcv.frame.sample_interval())?;
        Ok(crlb(db_to_linear(snr_db), beta)? * NS2)
    }

    /// Squared errors (ns^2) of each configured detector for one static trial.
    fn static_trial(&self, snr_index: usize, snr_db: f64, trial: usize) -> Result<Vec<f64>> {
        let n0 = 1.0 / db_to_linear(snr_db);
        let mut rng = stream_rng(self.cfg.seed, &[STREAM_STATIC, snr_index as u64, trial as u64]);
        let tau = rng.random_range(0.0..self.toa_range());
        let ch = self.draw_channel(tau, &mut rng)?;
        let rx = self.base.receive(&ch, n0, &mut rng)?;
        let fine_rx = match &self.fine {
            Some(fine) => Some(fine.receive(&ch, n0, &mut rng)?),
            None => None,
        };
        self.cfg
            .detectors
            .kinds
            .iter()
            .map(|&kind| {
                let (signal, rcv) = match (kind, &fine_rx, &self.fine) {
                    (DetectorKind::MatchedFilter, Some(f), Some(r)) => (f, r),
                    _ => (&rx, &self.base),
                };
                let err = (self.estimate(kind, 0, signal, rcv)? - tau) * 1e9;
                Ok(err * err)
            })
            .collect()
    }

    /// True TOA per step, seconds.
    fn truth(&self, snr_index: usize, rep: usize) -> Vec<f64> {
        let t = &self.cfg.trajectory;
        match t.kind {
            TrajectoryKind::StaticUniform => {
                let mut rng = stream_rng(self.cfg.seed, &[STREAM_TRUTH, snr_index as u64, rep as u64]);
                let tau = rng.random_range(0.0..self.toa_range());
                vec![tau; t.steps]
            }
            TrajectoryKind::Ramp => (0..t.steps)
                .map(|i| {
                    let frac = if t.steps > 1 {
                        i as f64 / (t.steps - 1) as f64
                    } else {
                        0.0
                    };
                    (t.start_ns + (t.end_ns - t.start_ns) * frac) * NS
                })
                .collect(),
        }
    }

    /// One detector's calibration variance and per-step estimates, both in ns units.
    fn track(
        &self,
        kind: DetectorKind,
        snr_index: usize,
        snr_db: f64,
        rep: usize,
        detector: u64,
        offset: usize,
        truth: &[f64],
    ) -> Result<Track> {
        let n0 = 1.0 / db_to_linear(snr_db);
        let rcv = &self.base;
        let mut rng = stream_rng(
            self.cfg.seed,
            &[STREAM_TRACK, snr_index as u64, rep as u64, detector],
        );
        let warmup = self.cfg.kalman.calibration_steps;
        let mut sq = 0.0;
        for _ in 0..warmup {
            let tau = rng.random_range(0.0..self.toa_range());
            let ch = self.draw_channel(tau, &mut rng)?;
            let rx = rcv.receive(&ch, n0, &mut rng)?;
            let err = (self.estimate(kind, offset, &rx, rcv)? - tau) * 1e9;
            sq += err * err;
        }
        let variance = if warmup > 0 {
            (sq / warmup as f64).max(MIN_VARIANCE)
        } else {
            0.0
        };
        let estimates = truth
            .iter()
            .map(|&tau| {
                let ch = self.draw_channel(tau, &mut rng)?;
                let rx = rcv.receive(&ch, n0, &mut rng)?;
                Ok(self.estimate(kind, offset, &rx, rcv)? * 1e9)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Track {
            variance,
            estimates,
        })
    }

    fn state_model(&self) -> Result<StateModel> {
        StateModel::new(self.cfg.kalman.nu, self.cfg.kalman.plant_var)
    }

    /// Measurement variances for a bank, from calibration unless fixed in the config.
    fn variances(&self, tracks: &[&Track]) -> Result<Vec<f64>> {
        let fixed = &self.cfg.kalman.variances;
        match fixed.len() {
            0 => Ok(tracks.iter().map(|t| t.variance).collect()),
            1 => Ok(vec![fixed[0]; tracks.len()]),
            n if n >= tracks.len() => Ok(fixed[..tracks.len()].to_vec()),
            n => Err(Error::Config(format!(
                "{n} fixed variances given for {} detectors",
                tracks.len()
            ))),
        }
    }

    /// Runs the filter on a bank and returns the fused trace in ns units.
    fn fuse(&self, tracks: &[&Track]) -> Result<crate::fusion::FusionTrace> {
        let k = &self.cfg.kalman;
        let prior = kalman_init(k.prior, nalgebra::Matrix2::identity() * k.prior_var)?;
        let meas = MeasurementModel::new(self.variances(tracks)?)?;
        let steps = tracks[0].estimates.len();
        let ys: Vec<Vec<f64>> = (0..steps)
            .map(|i| tracks.iter().map(|t| t.estimates[i]).collect())
            .collect();
        kalman_run(&ys, &self.state_model()?, &meas, &prior)
    }
}

#[derive(Debug, Clone)]
struct Track {
    variance: f64,
    estimates: Vec<f64>,
}

/// Simulated measurements of one Monte Carlo repetition.
struct Repetition {
    truth_ns: Vec<f64>,
    baseline: Track,
    bank: Vec<Track>,
}

/// Per-step and steady-state results for one bank size.
#[derive(Debug, Clone, PartialEq)]
pub struct BankSummary {
    pub n_detectors: usize,
    /// Mean over repetitions of the fused TOA, ns.
    pub mean_fused_ns: Vec<f64>,
    /// Mean over repetitions of the filter MSE `M(1,1)`, ns^2.
    pub mse_ns2: Vec<f64>,
    /// Mean over repetitions of the squared fused error, ns^2.
    pub tracking_mse_ns2: Vec<f64>,
    /// Filter MSE averaged over the steady-state window, ns^2.
    pub steady_mse_ns2: f64,
    /// Squared fused error averaged over the steady-state window, ns^2.
    pub steady_tracking_mse_ns2: f64,
    /// Raw single-detector MSE over the steady window, ns^2.
    pub single_shot_mse_ns2: f64,
}

/// Fused tracking results for one SNR.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackingResult {
    pub snr_db: f64,
    pub truth_ns: Vec<f64>,
    pub banks: Vec<BankSummary>,
    /// Matched filter feeding its own filter.
    pub baseline: BankSummary,
}

impl TrackingResult {
    pub fn track_rows(&self) -> Vec<TrackRow> {
        self.banks
            .iter()
            .flat_map(|b| {
                (0..self.truth_ns.len()).map(move |i| TrackRow {
                    step: i + 1,
                    true_toa_ns: self.truth_ns[i],
                    fused_toa_ns: b.mean_fused_ns[i],
                    mse_ns2: b.mse_ns2[i],
                    n_detectors: b.n_detectors,
                })
            })
            .collect()
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

fn summarize(scn: &Scenario, reps: &[Repetition], pick: impl Fn(&Repetition) -> Vec<&Track> + Sync) -> Result<BankSummary> {
    let steady_from = scn.cfg.trajectory.steady_start();
    let traces = reps
        .par_iter()
        .map(|r| scn.fuse(&pick(r)))
        .collect::<Result<Vec<_>>>()?;
    let steps = reps[0].truth_ns.len();
    let n = reps.len() as f64;
    let mut mean_fused = vec![0.0; steps];
    let mut mse = vec![0.0; steps];
    let mut tracking = vec![0.0; steps];
    let mut single = 0.0;
    for (r, trace) in reps.iter().zip(&traces) {
        for i in 0..steps {
            let e = trace.tau[i] - r.truth_ns[i];
            mean_fused[i] += trace.tau[i] / n;
            mse[i] += trace.mse[i] / n;
            tracking[i] += e * e / n;
        }
        let tracks = pick(r);
        single += mean(tracks.iter().map(|t| {
            mean((steady_from..steps).map(|i| (t.estimates[i] - r.truth_ns[i]).powi(2)))
        })) / n;
    }
    Ok(BankSummary {
        n_detectors: pick(&reps[0]).len(),
        steady_mse_ns2: mean(mse[steady_from..].iter().copied()),
        steady_tracking_mse_ns2: mean(tracking[steady_from..].iter().copied()),
        mean_fused_ns: mean_fused,
        mse_ns2: mse,
        tracking_mse_ns2: tracking,
        single_shot_mse_ns2: single,
    })
}

impl Scenario<'_> {
    fn repetitions(&self, kind: DetectorKind, snr_index: usize, snr_db: f64, detectors: usize) -> Result<Vec<Repetition>> {
        (0..self.cfg.trials)
            .into_par_iter()
            .map(|rep| {
                let truth = self.truth(snr_index, rep);
                let baseline = self.track(DetectorKind::MatchedFilter, snr_index, snr_db, rep, MF_TRACK, 0, &truth)?;
                let mut r = Repetition {
                    truth_ns: truth.iter().map(|t| t * 1e9).collect(),
                    baseline,
                    bank: Vec::new(),
                };
                self.extend_bank(&mut r, kind, snr_index, snr_db, rep, &truth, detectors)?;
                Ok(r)
            })
            .collect()
    }

    #[allow(clippy::too_many_arguments)]
    fn extend_bank(
        &self,
        r: &mut Repetition,
        kind: DetectorKind,
        snr_index: usize,
        snr_db: f64,
        rep: usize,
        truth: &[f64],
        detectors: usize,
    ) -> Result<()> {
        for d in r.bank.len()..detectors {
            let offset = self.block_offset(self.cfg.detectors.timing, snr_index, rep, d);
            r.bank.push(self.track(kind, snr_index, snr_db, rep, d as u64, offset, truth)?);
        }
        Ok(())
    }

    fn grow(&self, reps: &mut [Repetition], kind: DetectorKind, snr_index: usize, snr_db: f64, detectors: usize) -> Result<()> {
        reps.par_iter_mut().enumerate().try_for_each(|(rep, r)| {
            let truth = self.truth(snr_index, rep);
            self.extend_bank(r, kind, snr_index, snr_db, rep, &truth, detectors)
        })
    }

    fn tracking(&self, kind: DetectorKind, snr_index: usize, snr_db: f64, max_n: usize) -> Result<TrackingResult> {
        let reps = self.repetitions(kind, snr_index, snr_db, max_n)?;
        let banks = (1..=max_n)
            .map(|n| summarize(self, &reps, |r| r.bank[..n].iter().collect()))
            .collect::<Result<Vec<_>>>()?;
        let baseline = summarize(self, &reps, |r| vec![&r.baseline])?;
        Ok(TrackingResult {
            snr_db,
            truth_ns: reps[0].truth_ns.clone(),
            banks,
            baseline,
        })
    }
}

fn steady_rows(cfg: &ExperimentConfig, kind: DetectorKind, t: &TrackingResult) -> Vec<SteadyRow> {
    let row = |detector: &str, b: &BankSummary| SteadyRow {
        snr_db: t.snr_db,
        detector: detector.to_string(),
        n_detectors: b.n_detectors,
        steady_mse_ns2: b.steady_mse_ns2,
        tracking_mse_ns2: b.steady_tracking_mse_ns2,
        single_shot_mse_ns2: b.single_shot_mse_ns2,
        trials: cfg.trials,
        seed: cfg.seed,
    };
    std::iter::once(row(DetectorKind::MatchedFilter.label(), &t.baseline))
        .chain(t.banks.iter().map(|b| row(kind.label(), b)))
        .collect()
}

/// Static TOA MSE of every configured detector against SNR, τ ~ U[0, range).
pub fn run_static_mse(cfg: &ExperimentConfig) -> Result<MseReport> {
    let scn = Scenario::new(cfg)?;
    let mut report = MseReport::new(cfg);
    for (si, &snr_db) in cfg.snr_db.iter().enumerate() {
        let errors = (0..cfg.trials)
            .into_par_iter()
            .map(|t| scn.static_trial(si, snr_db, t))
            .collect::<Result<Vec<_>>>()?;
        let crlb_ns2 = scn.crlb_ns2(snr_db)?;
        for (k, kind) in cfg.detectors.kinds.iter().enumerate() {
            let mse = errors.iter().map(|e| e[k]).sum::<f64>() / cfg.trials as f64;
            report.static_rows.push(StaticRow {
                snr_db,
                detector: kind.label().to_string(),
                mse_ns2: mse,
                crlb_ns2,
                trials: cfg.trials,
                seed: cfg.seed,
            });
        }
    }
    Ok(report)
}

/// Fused tracking with banks of 1..=count detectors plus the matched-filter
/// baseline, for each SNR.
pub fn run_fusion_tracking(cfg: &ExperimentConfig) -> Result<(Vec<TrackingResult>, MseReport)> {
    let scn = Scenario::new(cfg)?;
    let kind = cfg.detectors.fusion_kind;
    let mut report = MseReport::new(cfg);
    let mut results = Vec::new();
    for (si, &snr_db) in cfg.snr_db.iter().enumerate() {
        let t = scn.tracking(kind, si, snr_db, cfg.detectors.count)?;
        report.steady_rows.extend(steady_rows(cfg, kind, &t));
        results.push(t);
    }
    Ok((results, report))
}

/// Bank size at which the fused steady-state MSE first reaches `target`,
/// interpolated linearly between integer sizes; infinite if never reached.
pub fn crossing(steady: &[f64], target: f64) -> f64 {
    for (i, &v) in steady.iter().enumerate() {
        if v <= target {
            if i == 0 {
                return 1.0;
            }
            let prev = steady[i - 1];
            let frac = if prev > v { (prev - target) / (prev - v) } else { 1.0 };
            return i as f64 + frac;
        }
    }
    f64::INFINITY
}

/// Empirical and analytic N_ED for each SNR. Banks grow in powers of two up
/// to `max_count` until the matched-filter baseline is reached.
pub fn run_ned_sweep(cfg: &ExperimentConfig) -> Result<MseReport> {
    let scn = Scenario::new(cfg)?;
    let kind = cfg.detectors.fusion_kind;
    let dof = scn.base.frame.dof();
    let mut report = MseReport::new(cfg);
    for (si, &snr_db) in cfg.snr_db.iter().enumerate() {
        let max_n = cfg.detectors.max_count;
        let mut size = max_n.min(8);
        let mut reps = scn.repetitions(kind, si, snr_db, size)?;
        let baseline = summarize(&scn, &reps, |r| vec![&r.baseline])?;
        let mut banks: Vec<BankSummary> = Vec::new();
        let ned = loop {
            for n in banks.len() + 1..=size {
                banks.push(summarize(&scn, &reps, |r| r.bank[..n].iter().collect())?);
            }
            let steady: Vec<f64> = banks.iter().map(|b| b.steady_mse_ns2).collect();
            let ned = crossing(&steady, baseline.steady_mse_ns2);
            if ned.is_finite() || size == max_n {
                break ned;
            }
            size = (size * 2).min(max_n);
            scn.grow(&mut reps, kind, si, snr_db, size)?;
        };
        let t = TrackingResult {
            snr_db,
            truth_ns: reps[0].truth_ns.clone(),
            banks,
            baseline,
        };
        report.steady_rows.extend(steady_rows(cfg, kind, &t));
        report.ned_rows.push(NedRow {
            snr_db,
            ned_empirical: ned,
            ned_analytic: n_ed_required(snr_db, dof),
        });
    }
    Ok(report)
}

/// Multipath comparison: static MSE of the configured detectors and fused
/// WMESS banks of 1..=count against the matched-filter baseline.
pub fn run_multipath(cfg: &ExperimentConfig) -> Result<MseReport> {
    if cfg.channel.kind == ChannelKind::Awgn {
        return Err(Error::Config("multipath needs channel.kind = \"cm1\" or \"file\"".into()));
    }
    let mut report = run_static_mse(cfg)?;
    let mut fused = cfg.clone();
    fused.detectors.fusion_kind = DetectorKind::EnergyWmess;
    let (_, tracking) = run_fusion_tracking(&fused)?;
    report.steady_rows = tracking.steady_rows;
    report.profile = Scenario::new(cfg)?.profile.clone();
    Ok(report)
}

/// Averaged power-delay profile per block, first path in block 1.
pub fn run_pdp_estimate(cfg: &ExperimentConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    let block = cfg.frame.frame().block_duration;
    match cfg.channel.kind {
        ChannelKind::File => {
            let list = read_channel_file(cfg.channel.file.as_ref().expect("validated"))?;
            let max_excess = list
                .iter()
                .map(|c| c.taps().last().map_or(0.0, |t| t.delay) - c.toa())
                .fold(0.0, f64::max);
            let blocks = ((max_excess / block).floor() as usize + 1).max(1);
            Ok(average_profile(&list, block, blocks))
        }
        _ => estimate_pdp(
            &cfg.channel.cm1,
            cfg.detectors.pdp_realizations,
            block,
            crate::rng::derive_seed(cfg.seed, &[STREAM_PDP]),
        ),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phases_are_nested_and_spread() {
        let v: Vec<f64> = (0..8).map(van_der_corput).collect();
        assert_eq!(v, vec![0.0, 0.5, 0.25, 0.75, 0.125, 0.625, 0.375, 0.875]);
        let mut four: Vec<f64> = v[..4].to_vec();
        four.sort_by(f64::total_cmp);
        assert_eq!(four, vec![0.0, 0.25, 0.5, 0.75]);
    }

    #[test]
    fn crossing_interpolates() {
        assert_eq!(crossing(&[1.0, 0.5], 2.0), 1.0);
        assert!((crossing(&[4.0, 2.0, 1.0], 1.5) - 2.5).abs() < 1e-12);
        assert_eq!(crossing(&[4.0, 3.0], 1.0), f64::INFINITY);
    }

    #[test]
    fn profile_truncation() {
        assert_eq!(truncate_profile(&[1.0], 3), vec![1.0, 0.0, 0.0]);
        let p = truncate_profile(&[0.5, 0.3, 0.2], 2);
        assert!((p[0] - 0.625).abs() < 1e-15);
        assert_eq!(truncate_profile(&[0.0, 0.0], 2), vec![1.0, 0.0]);
    }

    #[test]
    fn static_mse_runs_small() {
        let mut cfg = ExperimentConfig::desk();
        cfg.trials = 20;
        cfg.snr_db = vec![10.0, 30.0];
        let r = run_static_mse(&cfg).unwrap();
        assert_eq!(r.static_rows.len(), 6);
        assert!(r.static_rows.iter().all(|row| row.mse_ns2 >= 0.0 && row.crlb_ns2 > 0.0));
    }

    #[test]
    fn ramp_truth() {
        let cfg = ExperimentConfig::desk();
        let scn = Scenario::new(&cfg).unwrap();
        let t = scn.truth(0, 0);
        assert_eq!(t.len(), 500);
        assert!((t[0] - 20e-9).abs() < 1e-20);
        assert!((t[499] - 60e-9).abs() < 1e-20);
    }
}
