//! Analytic statistics of detector outputs: block-energy moments, CCDFs via the
//! generalized Marcum Q-function, correct-selection probability and the
//! number of energy detectors needed to match a matched filter.

use statrs::function::erf::erfc;
use statrs::function::gamma::{gamma_ur, ln_gamma};

use crate::error::{Error, Result};
use crate::signal::FrameConfig;

/// Mean and variance of an energy block under both hypotheses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorMoments {
    pub mu_sn: f64,
    pub var_sn: f64,
    pub mu_no: f64,
    pub var_no: f64,
    /// Degrees of freedom per block, 2 B T_b + 1.
    pub dof: f64,
    /// Total degrees of freedom over all frames, N_f M.
    pub total_dof: f64,
}

/// Gaussian-approximation block moments for captured energy `e_b` and
/// per-dimension noise variance `sigma2 = N_0 / 2`.
///
/// The signal-noise cross term is `4 sigma^2 E_b` (its dimensionally consistent
/// form); it equals the squared-energy form at the normalized `E_b = 1`.
pub fn detector_moments(cfg: &FrameConfig, e_b: f64, sigma2: f64) -> Result<DetectorMoments> {
    if !(e_b >= 0.0 && e_b.is_finite()) || !(sigma2 > 0.0 && sigma2.is_finite()) {
        return Err(Error::InvalidParameter(
            "E_b must be non-negative and sigma^2 positive".into(),
        ));
    }
    let m = cfg.dof();
    let nf = cfg.frames as f64;
    let noise_mean = nf * m * sigma2;
    let noise_var = 2.0 * nf * m * sigma2 * sigma2;
    Ok(DetectorMoments {
        mu_sn: noise_mean + e_b,
        var_sn: noise_var + 4.0 * sigma2 * e_b,
        mu_no: noise_mean,
        var_no: noise_var,
        dof: m,
        total_dof: nf * m,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Hypothesis {
    /// Noise-only block.
    H0,
    /// Signal-plus-noise block.
    H1,
}

/// Generalized Marcum Q-function `Q_nu(a, b)` for real order `nu > 0`, as the
/// Poisson mixture of regularized upper incomplete gamma functions
/// `sum_k e^{-a^2/2} (a^2/2)^k / k! * Q(nu + k, b^2/2)`, truncated once the
/// remaining Poisson mass falls below `1e-12` of the running sum.
pub fn marcum_q(nu: f64, a: f64, b: f64) -> f64 {
    assert!(nu > 0.0, "Marcum Q order must be positive");
    let a = a.abs();
    let b = b.abs();
    if b == 0.0 {
        return 1.0;
    }
    let lambda = 0.5 * a * a;
    let y = 0.5 * b * b;
    let mut q = gamma_ur(nu, y);
    if lambda == 0.0 {
        return q;
    }
    let ln_lambda = lambda.ln();
    let ln_y = y.ln();
    let mut sum = 0.0;
    let mut mass = 0.0;
    let mut k = 0usize;
    loop {
        let kf = k as f64;
        let ln_w = -lambda + kf * ln_lambda - ln_gamma(kf + 1.0);
        let w = ln_w.exp();
        sum += w * q;
        mass += w;
        // Q(s + 1, y) = Q(s, y) + y^s e^{-y} / Gamma(s + 1)
        let s = nu + kf;
        q = (q + (s * ln_y - y - ln_gamma(s + 1.0)).exp()).min(1.0);
        k += 1;
        let past_mode = kf > lambda;
        let tail = (1.0 - mass).max(0.0);
        if past_mode && (tail <= 1e-12 * sum.max(1e-300) || w == 0.0 && tail < 1e-15) {
            break;
        }
        if k > 100_000 + (lambda + 50.0 * lambda.sqrt()) as usize {
            break;
        }
    }
    sum.clamp(0.0, 1.0)
}

/// `P(x_n > eta)` for an energy block.
///
/// H1 uses `Q_{M'/2}(E_b / sigma, sqrt(eta) / sigma)` with the first argument
/// exactly as in the classical energy-detector expression; for a noncentral
/// chi-square with noncentrality `E_b / sigma^2` that argument would read
/// `sqrt(E_b) / sigma`, and the two agree at the normalized `E_b = 1`.
/// H0 uses the integer-order chi-square series with `floor(M'/2)` terms.
pub fn energy_ccdf(
    eta: f64,
    hypothesis: Hypothesis,
    cfg: &FrameConfig,
    e_b: f64,
    sigma2: f64,
) -> Result<f64> {
    if !(eta >= 0.0) {
        return Err(Error::InvalidParameter(format!("threshold {eta} must be >= 0")));
    }
    if !(sigma2 > 0.0) {
        return Err(Error::InvalidParameter("sigma^2 must be positive".into()));
    }
    let total_dof = cfg.frames as f64 * cfg.dof();
    let sigma = sigma2.sqrt();
    match hypothesis {
        Hypothesis::H1 => Ok(marcum_q(total_dof / 2.0, e_b / sigma, eta.sqrt() / sigma)),
        Hypothesis::H0 => {
            if eta.is_infinite() {
                return Ok(0.0);
            }
            let n0 = 2.0 * sigma2;
            let z = eta * cfg.frames as f64 / n0;
            let terms = (total_dof / 2.0).floor() as usize;
            let mut term = 1.0;
            let mut acc = 0.0;
            for i in 0..terms {
                if i > 0 {
                    term *= z / i as f64;
                }
                acc += term;
            }
            Ok(((-z).exp() * acc).clamp(0.0, 1.0))
        }
    }
}

/// Gaussian model of the selected sample under both hypotheses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectionModel {
    pub mu_sn: f64,
    pub sd_sn: f64,
    pub mu_no: f64,
    pub sd_no: f64,
}

impl SelectionModel {
    pub fn from_moments(m: &DetectorMoments) -> Self {
        Self {
            mu_sn: m.mu_sn,
            sd_sn: m.var_sn.sqrt(),
            mu_no: m.mu_no,
            sd_no: m.var_no.sqrt(),
        }
    }

    /// Matched-filter output: N(sqrt(E_b), sigma^2) vs N(0, sigma^2).
    pub fn matched_filter(e_b: f64, sigma2: f64) -> Self {
        Self {
            mu_sn: e_b.sqrt(),
            sd_sn: sigma2.sqrt(),
            mu_no: 0.0,
            sd_no: sigma2.sqrt(),
        }
    }
}

/// Standard normal CDF.
pub fn phi(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Gaussian tail probability Q(z) = 1 - Phi(z).
pub fn q_function(z: f64) -> f64 {
    0.5 * erfc(z / std::f64::consts::SQRT_2)
}

const KRONROD_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const KRONROD_WEIGHTS: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
// Gauss weights for KRONROD_NODES[1], [3], [5], [7].
const GAUSS_WEIGHTS: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = KRONROD_WEIGHTS[7] * fc;
    let mut gauss = GAUSS_WEIGHTS[3] * fc;
    for i in 0..7 {
        let x = h * KRONROD_NODES[i];
        let pair = f(c - x) + f(c + x);
        kronrod += KRONROD_WEIGHTS[i] * pair;
        if i % 2 == 1 {
            gauss += GAUSS_WEIGHTS[i / 2] * pair;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

/// Adaptive Gauss-Kronrod (7/15) quadrature to an absolute tolerance.
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    let mut total = 0.0;
    let mut stack = vec![(a, b, 0u32)];
    let width = b - a;
    while let Some((lo, hi, depth)) = stack.pop() {
        let (val, err) = gk15(f, lo, hi);
        let budget = tol * (hi - lo) / width;
        if err <= budget.max(1e-300) || depth >= 48 {
            total += val;
        } else {
            let mid = 0.5 * (lo + hi);
            stack.push((mid, hi, depth + 1));
            stack.push((lo, mid, depth + 1));
        }
    }
    total
}

/// Probability of correct and of erroneous maximum selection among `n_obs`
/// samples, one signal-plus-noise and `n_obs - 1` noise-only.
pub fn prob_correct_selection(model: &SelectionModel, n_obs: usize) -> Result<(f64, f64)> {
    if n_obs == 0 {
        return Err(Error::InvalidParameter("n_obs must be >= 1".into()));
    }
    if !(model.sd_sn > 0.0) || !(model.sd_no >= 0.0) {
        return Err(Error::InvalidParameter("standard deviations must be positive".into()));
    }
    if n_obs == 1 {
        return Ok((1.0, 0.0));
    }
    let others = (n_obs - 1) as f64;
    let SelectionModel {
        mu_sn,
        sd_sn,
        mu_no,
        sd_no,
    } = *model;
    let density = |x: f64| {
        let z = (x - mu_sn) / sd_sn;
        (-0.5 * z * z).exp() / (sd_sn * (2.0 * std::f64::consts::PI).sqrt())
    };
    let below = |x: f64| -> f64 {
        if sd_no == 0.0 {
            return if x > mu_no { 1.0 } else { 0.0 };
        }
        phi((x - mu_no) / sd_no)
    };
    let integrand = |x: f64| {
        let p = below(x);
        if p <= 0.0 {
            0.0
        } else {
            (others * p.ln()).exp() * density(x)
        }
    };
    let ps = integrate(&integrand, mu_sn - 10.0 * sd_sn, mu_sn + 10.0 * sd_sn, 1e-8).clamp(0.0, 1.0);
    Ok((ps, 1.0 - ps))
}

/// Variance of the mean of `k` i.i.d. block energies.
pub fn fused_variance(var_sn: f64, k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidParameter("K must be >= 1".into()));
    }
    Ok(var_sn / k as f64)
}

/// Ratio of energy-detector to matched-filter signal-block variance at
/// normalized `E_b = 1`: `2 M sigma^2 + 4` with `sigma^2 = 10^(-snr/10) / 2`.
pub fn n_ed_required(snr_db: f64, dof: f64) -> f64 {
    let sigma2 = 10f64.powf(-snr_db / 10.0) / 2.0;
    2.0 * dof * sigma2 + 4.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use rand::Rng;
    use rand_distr::StandardNormal;

    const NS: f64 = 1e-9;

    fn frame(bandwidth: f64, sample_rate: f64) -> FrameConfig {
        FrameConfig {
            frame_duration: 200.0 * NS,
            block_duration: 1.0 * NS,
            frames: 1,
            sample_rate,
            bandwidth,
        }
    }

    #[test]
    fn moments_examples() {
        let cfg = frame(4e9, 8e9);
        let m = detector_moments(&cfg, 1.0, 0.1).unwrap();
        assert!((m.mu_sn - 1.9).abs() < 1e-12);
        assert!((m.var_sn - 0.58).abs() < 1e-12);
        assert!((m.mu_no - 0.9).abs() < 1e-12);
        assert!((m.var_no - 0.18).abs() < 1e-12);
        assert!((m.dof - 9.0).abs() < 1e-12);
        let z = detector_moments(&cfg, 0.0, 0.1).unwrap();
        assert_eq!(z.mu_sn, z.mu_no);
        assert_eq!(z.var_sn, z.var_no);
        assert!(detector_moments(&cfg, 1.0, 0.0).is_err());
    }

    #[test]
    fn marcum_limits_and_known_values() {
        // Q_nu(0, b) is the central chi-square tail.
        let v = marcum_q(2.0, 0.0, 2.0);
        assert!((v - (-2.0f64).exp() * 3.0).abs() < 1e-12);
        assert_eq!(marcum_q(3.5, 1.0, 0.0), 1.0);
        // Q_1(a, b) with large a and small b approaches 1.
        assert!(marcum_q(1.0, 30.0, 1.0) > 1.0 - 1e-12);
        assert!(marcum_q(1.0, 1.0, 40.0) < 1e-100);
    }

    /// Noncentral chi-square tail by sampling: `sum_{i < 2 nu} (z_i + mu_i)^2 > b^2`
    /// with `sum mu_i^2 = a^2`.
    fn marcum_mc(order: usize, a: f64, b: f64, draws: usize, seed: u64) -> f64 {
        let mut rng = stream_rng(seed, &[]);
        let hits = (0..draws)
            .filter(|_| {
                let mut s = 0.0;
                for i in 0..2 * order {
                    let z: f64 = rng.sample(StandardNormal);
                    let x = if i == 0 { z + a } else { z };
                    s += x * x;
                }
                s > b * b
            })
            .count();
        hits as f64 / draws as f64
    }

    #[test]
    fn marcum_matches_noncentral_chi_square_sampling() {
        for (order, a, b) in [(1usize, 1.5, 2.0), (3, 2.0, 3.5), (9, 3.0, 5.0)] {
            let mc = marcum_mc(order, a, b, 400_000, order as u64);
            let q = marcum_q(order as f64, a, b);
            assert!((q - mc).abs() < 4e-3, "order {order}: {q} vs {mc}");
        }
    }

    #[test]
    fn marcum_half_integer_order_between_neighbours() {
        let lo = marcum_q(4.0, 2.0, 3.0);
        let mid = marcum_q(4.5, 2.0, 3.0);
        let hi = marcum_q(5.0, 2.0, 3.0);
        assert!(lo < mid && mid < hi);
    }

    #[test]
    fn ccdf_limits() {
        let cfg = frame(4e9, 8e9);
        for h in [Hypothesis::H0, Hypothesis::H1] {
            assert!((energy_ccdf(0.0, h, &cfg, 1.0, 0.1).unwrap() - 1.0).abs() < 1e-12);
            assert!(energy_ccdf(1e4, h, &cfg, 1.0, 0.1).unwrap() < 1e-12);
        }
        assert!(energy_ccdf(-1.0, Hypothesis::H0, &cfg, 1.0, 0.1).is_err());
    }

    #[test]
    fn ccdf_h0_matches_chi_square_sampling() {
        // M = 2 B T_b + 1 = 18 with B = 8.5 GHz, T_b = 1 ns.
        let cfg = frame(8.5e9, 20e9);
        let sigma2 = 0.05;
        let mut rng = stream_rng(17, &[]);
        let draws: Vec<f64> = (0..1_000_000)
            .map(|_| {
                (0..18)
                    .map(|_| rng.sample::<f64, _>(StandardNormal).powi(2))
                    .sum::<f64>()
                    * sigma2
            })
            .collect();
        for eta in [0.2, 0.5, 0.9, 1.2, 1.8, 2.5] {
            let emp = draws.iter().filter(|&&x| x > eta).count() as f64 / draws.len() as f64;
            let ana = energy_ccdf(eta, Hypothesis::H0, &cfg, 1.0, sigma2).unwrap();
            assert!((emp - ana).abs() < 1e-2, "eta {eta}: {emp} vs {ana}");
        }
    }

    #[test]
    fn ccdf_h1_uses_marcum() {
        let cfg = frame(4e9, 8e9);
        let sigma2: f64 = 0.1;
        let v = energy_ccdf(1.5, Hypothesis::H1, &cfg, 1.0, sigma2).unwrap();
        let direct = marcum_q(4.5, 1.0 / sigma2.sqrt(), (1.5 / sigma2).sqrt());
        assert!((v - direct).abs() < 1e-12);
    }

    proptest::proptest! {
        #[test]
        fn ccdf_h0_is_monotone(a in 0.0f64..5.0, d in 0.0f64..5.0, s2 in 0.01f64..1.0) {
            let cfg = frame(4e9, 8e9);
            let p1 = energy_ccdf(a, Hypothesis::H0, &cfg, 1.0, s2).unwrap();
            let p2 = energy_ccdf(a + d, Hypothesis::H0, &cfg, 1.0, s2).unwrap();
            proptest::prop_assert!((0.0..=1.0).contains(&p1));
            proptest::prop_assert!(p2 <= p1 + 1e-15);
        }
    }

    #[test]
    fn quadrature_basic() {
        let v = integrate(&|x: f64| x.sin(), 0.0, std::f64::consts::PI, 1e-12);
        assert!((v - 2.0).abs() < 1e-12);
        let step = integrate(&|x: f64| if x > 0.3 { 1.0 } else { 0.0 }, 0.0, 1.0, 1e-9);
        assert!((step - 0.7).abs() < 1e-8);
    }

    #[test]
    fn selection_edge_cases() {
        let m = SelectionModel::matched_filter(1.0, 0.05);
        assert_eq!(prob_correct_selection(&m, 1).unwrap(), (1.0, 0.0));
        let sharp = SelectionModel {
            mu_sn: 5.0,
            sd_sn: 0.1,
            mu_no: 0.0,
            sd_no: 1e-9,
        };
        let (ps, pe) = prob_correct_selection(&sharp, 200).unwrap();
        assert!(ps > 1.0 - 1e-8);
        assert!((ps + pe - 1.0).abs() < 1e-15);
        assert!(prob_correct_selection(&m, 0).is_err());
    }

    #[test]
    fn selection_matches_monte_carlo_for_matched_filter() {
        // SNR 10 dB, E_b = 1: sigma^2 = N_0 / 2 = 0.05.
        let sigma2: f64 = 0.05;
        let sd = sigma2.sqrt();
        let (ps, _) = prob_correct_selection(&SelectionModel::matched_filter(1.0, sigma2), 200).unwrap();
        let mut rng = stream_rng(23, &[]);
        let trials = 100_000;
        let wins = (0..trials)
            .filter(|_| {
                let sig = 1.0 + sd * rng.sample::<f64, _>(StandardNormal);
                (0..199).all(|_| sd * rng.sample::<f64, _>(StandardNormal) < sig)
            })
            .count();
        let mc = wins as f64 / trials as f64;
        assert!((ps - mc).abs() < 1e-2, "{ps} vs {mc}");
    }

    #[test]
    fn selection_monotone_in_candidates() {
        let cfg = frame(4e9, 8e9);
        let m = SelectionModel::from_moments(&detector_moments(&cfg, 1.0, 0.1).unwrap());
        let mut prev = 1.0;
        for n in [1, 2, 5, 20, 100, 200, 1000] {
            let (ps, _) = prob_correct_selection(&m, n).unwrap();
            assert!(ps <= prev + 1e-9);
            prev = ps;
        }
    }

    #[test]
    fn fused_variance_law() {
        assert_eq!(fused_variance(0.58, 1).unwrap(), 0.58);
        assert!((fused_variance(0.58, 4).unwrap() - 0.145).abs() < 1e-15);
        assert!(fused_variance(1.0, 0).is_err());
    }

    #[test]
    fn ned_values() {
        assert!((n_ed_required(20.0, 9.0) - 4.09).abs() < 1e-12);
        assert!((n_ed_required(400.0, 9.0) - 4.0).abs() < 1e-12);
        assert_eq!(n_ed_required(f64::INFINITY, 9.0), 4.0);
        let mut prev = f64::INFINITY;
        for snr in -10..60 {
            let v = n_ed_required(snr as f64, 9.0);
            assert!(v > 4.0 && v < prev);
            prev = v;
        }
    }
}
