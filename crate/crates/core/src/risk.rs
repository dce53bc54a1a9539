//! Risk evaluation: analytic per-model risk, oracle risk over a collection,
//! Monte Carlo risk of the PCO estimator, and log-log rate fits.

use std::fmt;

use rayon::prelude::*;

use crate::besov::{BesovBall, SignalKind};
use crate::error::{bail, PcoError, Result};
use crate::penalty::{PenaltySpec, Strategy};
use crate::rng::{experiment, stream_rng};
use crate::selection::{argmin_overall, i_cardinality, pco_estimate};
use crate::sequence::{
    abs_pow, bias_term, level_len, level_range, observe_with, weighted_lp_distance_pow, Model, NoiseKind,
    SignalSequence, WeightScheme,
};
use crate::stats::{compensated_sum, least_squares_line, mean_stderr};

/// Largest `N` used by the rate experiments.
pub const MAX_RATE_LEN: usize = 1 << 16;

/// Extra levels of the signal kept beyond `Λ^(N)` so the loss sees the tail.
pub const TAIL_LEVELS: i32 = 4;

/// `E‖θ̂^(m) − θ‖_p^p = B_p(m) + ε^p σ_p^p Σ_j ω_j |m_j|` for i.i.d. noise.
pub fn expected_model_risk(
    theta: &SignalSequence,
    m: &Model,
    epsilon: f64,
    noise: &NoiseKind,
    p: f64,
    w: &WeightScheme,
) -> Result<f64> {
    let bias = bias_term(theta, m, w, p)?;
    let unit = epsilon.powf(p) * noise.abs_moment(p);
    let var = compensated_sum(m.flat_indices().map(|i| w.at(i) * unit));
    Ok(bias + var)
}

/// Per-level bias/variance tables for the oracle scans.
struct OracleLevels {
    /// `tail`: bias from coordinates beyond `Λ^(N)`.
    tail: f64,
    /// Per level: `ω_j |θ|^p` sorted decreasingly and prefix sums.
    prefix: Vec<Vec<f64>>,
    weights: Vec<f64>,
    unit: f64,
    top: i32,
}

impl OracleLevels {
    fn new(theta: &SignalSequence, n: usize, epsilon: f64, noise: &NoiseKind, p: f64, w: &WeightScheme) -> Result<Self> {
        let top = crate::sequence::top_level_for_len(n)
            .filter(|_| n >= 2)
            .ok_or_else(|| PcoError::Geometry(format!("N = {n} is not a power of two >= 2")))?;
        if theta.len() < n {
            bail!(Geometry, "signal stores {} coordinates, N = {n}", theta.len());
        }
        let vals = theta.values();
        let tail = compensated_sum((n..vals.len()).map(|i| w.at(i) * abs_pow(vals[i], p)));
        let mut prefix = Vec::new();
        let mut weights = Vec::new();
        for j in -1..=top {
            let mut mags: Vec<f64> = vals[level_range(j)].iter().map(|&t| abs_pow(t, p)).collect();
            mags.sort_by(|a, b| b.total_cmp(a));
            let wj = w.at_level(j);
            let mut acc = vec![0.0];
            let mut s = 0.0;
            for v in mags {
                s += v;
                acc.push(wj * s);
            }
            prefix.push(acc);
            weights.push(wj);
        }
        Ok(Self {
            tail,
            prefix,
            weights,
            unit: epsilon.powf(p) * noise.abs_moment(p),
            top,
        })
    }

    /// Risk contribution of level `j` keeping its `d` largest coefficients.
    fn level_risk(&self, j: i32, d: usize) -> f64 {
        let pre = &self.prefix[(j + 1) as usize];
        let total = pre[pre.len() - 1];
        (total - pre[d]) + self.weights[(j + 1) as usize] * d as f64 * self.unit
    }

    fn cards_risk(&self, cards: impl Fn(i32) -> usize) -> f64 {
        self.tail + (-1..=self.top).map(|j| self.level_risk(j, cards(j))).sum::<f64>()
    }

    fn best_subset(&self) -> f64 {
        self.tail
            + (-1..=self.top)
                .map(|j| {
                    (0..=level_len(j))
                        .map(|d| self.level_risk(j, d))
                        .fold(f64::INFINITY, f64::min)
                })
                .sum::<f64>()
    }
}

/// `inf_{m ∈ 𝓜^a} E‖θ̂^(m) − θ‖_p^p` over one collection on `Λ^(N)`.
#[allow(clippy::too_many_arguments)]
pub fn oracle_risk(
    theta: &SignalSequence,
    strategy: Strategy,
    n: usize,
    epsilon: f64,
    noise: &NoiseKind,
    spec: &PenaltySpec,
    w: &WeightScheme,
) -> Result<f64> {
    let p = spec.p;
    match strategy {
        Strategy::FlatNested => {
            if theta.len() < n || n == 0 {
                bail!(Geometry, "signal stores {} coordinates, N = {n}", theta.len());
            }
            let unit = epsilon.powf(p) * noise.abs_moment(p);
            let total = compensated_sum(theta.values().iter().map(|&t| abs_pow(t, p)));
            let mut kept = 0.0;
            let mut best = f64::INFINITY;
            for k in 1..=n {
                kept += abs_pow(theta.values()[k - 1], p);
                best = best.min(total - kept + k as f64 * unit);
            }
            Ok(best)
        }
        Strategy::Threshold(_) => bail!(Unsupported, "no oracle for the thresholding baseline"),
        Strategy::S => Ok(OracleLevels::new(theta, n, epsilon, noise, p, w)?.best_subset()),
        Strategy::H => {
            let o = OracleLevels::new(theta, n, epsilon, noise, p, w)?;
            Ok((0..=o.top)
                .map(|cut| o.cards_risk(|j| if j <= cut { level_len(j) } else { 0 }))
                .fold(f64::INFINITY, f64::min))
        }
        Strategy::I => {
            let o = OracleLevels::new(theta, n, epsilon, noise, p, w)?;
            let rule = spec.constants.i_cardinality;
            Ok((0..=o.top)
                .map(|cut| o.cards_risk(|j| i_cardinality(cut, j, p, rule)))
                .fold(f64::INFINITY, f64::min))
        }
    }
}

/// Oracle risk over the union of several collections.
#[allow(clippy::too_many_arguments)]
pub fn oracle_risk_overall(
    theta: &SignalSequence,
    strategies: &[Strategy],
    n: usize,
    epsilon: f64,
    noise: &NoiseKind,
    spec: &PenaltySpec,
    w: &WeightScheme,
) -> Result<f64> {
    if strategies.is_empty() {
        bail!(Config, "no strategy enabled");
    }
    strategies
        .iter()
        .map(|&s| oracle_risk(theta, s, n, epsilon, noise, spec, w))
        .try_fold(f64::INFINITY, |acc, r| r.map(|v| acc.min(v)))
}

/// Monte Carlo risk of the PCO estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskReport {
    pub mc_risk: f64,
    pub mc_stderr: f64,
    pub oracle_risk: f64,
    pub oracle_ratio: f64,
    pub replicates: usize,
    pub epsilon: f64,
    /// Mean selected model size.
    pub mean_cardinality: f64,
}

/// Experiment settings shared by [`mc_risk`] and [`rate_fit`].
#[derive(Debug, Clone, PartialEq)]
pub struct McSettings {
    pub noise: NoiseKind,
    pub strategies: Vec<Strategy>,
    pub replicates: usize,
    pub seed: u64,
}

/// Realised losses `‖θ̃ − θ‖_p^p` and selected sizes, one per replicate.
///
/// Replicate `r` draws its noise from stream `r`.
pub fn mc_losses(
    theta: &SignalSequence,
    n: usize,
    epsilon: f64,
    spec: &PenaltySpec,
    w: &WeightScheme,
    settings: &McSettings,
) -> Result<Vec<(f64, usize)>> {
    let p = spec.p;
    (0..settings.replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream_rng(settings.seed, experiment::MONTE_CARLO, r as u64);
            let obs = observe_with(theta, epsilon, settings.noise, n, &mut rng)?;
            let sel = argmin_overall(&obs, spec, w, &settings.strategies)?;
            let est = pco_estimate(&obs, &sel)?;
            Ok((weighted_lp_distance_pow(est.values(), theta.values(), w, p), sel.cardinality()))
        })
        .collect()
}

/// Mean and standard error of the PCO loss over replicates, with the oracle
/// benchmark of the enabled collections.
pub fn mc_risk(
    theta: &SignalSequence,
    n: usize,
    epsilon: f64,
    spec: &PenaltySpec,
    w: &WeightScheme,
    settings: &McSettings,
) -> Result<RiskReport> {
    if settings.replicates < 2 {
        bail!(Domain, "need at least 2 replicates");
    }
    let losses = mc_losses(theta, n, epsilon, spec, w, settings)?;
    let vals: Vec<f64> = losses.iter().map(|l| l.0).collect();
    let (mc, se) = mean_stderr(&vals);
    let oracle = oracle_risk_overall(theta, &settings.strategies, n, epsilon, &settings.noise, spec, w)?;
    let mean_cardinality = losses.iter().map(|l| l.1 as f64).sum::<f64>() / losses.len() as f64;
    Ok(RiskReport {
        mc_risk: mc,
        mc_stderr: se,
        oracle_risk: oracle,
        oracle_ratio: if oracle > 0.0 { mc / oracle } else { f64::INFINITY },
        replicates: settings.replicates,
        epsilon,
        mean_cardinality,
    })
}

/// Minimax-rate zone of a Besov body for the `ℓp` loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    Homogeneous,
    Intermediate,
    Frontier,
    Sparse,
}

impl Regime {
    pub fn name(&self) -> &'static str {
        match self {
            Regime::Homogeneous => "homogeneous",
            Regime::Intermediate => "intermediate",
            Regime::Frontier => "frontier",
            Regime::Sparse => "sparse",
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Regime of `(p, s, r)`; `r = p/(2s+1)` up to a relative `1e−12` is the frontier.
pub fn classify_regime(p: f64, s: f64, r: f64) -> Regime {
    let edge = p / (2.0 * s + 1.0);
    if (r - edge).abs() <= 1e-12 * edge.abs().max(1.0) {
        Regime::Frontier
    } else if r >= p {
        Regime::Homogeneous
    } else if r > edge {
        Regime::Intermediate
    } else {
        Regime::Sparse
    }
}

/// Power of `ε` in the upper rate.
pub fn theory_exponent(p: f64, s: f64, r: f64) -> f64 {
    match classify_regime(p, s, r) {
        Regime::Sparse => 2.0 * p * (s - 1.0 / r + 1.0 / p) / (2.0 * s + 1.0 - 2.0 / r),
        _ => 2.0 * p * s / (2.0 * s + 1.0),
    }
}

/// Power of `|log ε|` in the upper rate (reported, never fitted).
pub fn log_exponent(p: f64, s: f64, r: f64) -> f64 {
    match classify_regime(p, s, r) {
        Regime::Homogeneous => 0.0,
        Regime::Intermediate => s * (p - 2.0).max(0.0) / (2.0 * s + 1.0),
        Regime::Frontier => p * s / (2.0 * s + 1.0) + 1.0,
        Regime::Sparse => p * (s - 1.0 / r + 1.0 / p) / (2.0 * s + 1.0 - 2.0 / r),
    }
}

/// Smallest power of two `≥ (R/ε)²`, at least 2 and at most [`MAX_RATE_LEN`].
pub fn rate_len(radius: f64, epsilon: f64) -> usize {
    let target = (radius / epsilon).powi(2);
    if !target.is_finite() || target >= MAX_RATE_LEN as f64 {
        return MAX_RATE_LEN;
    }
    (target.ceil().max(2.0) as usize).next_power_of_two()
}

/// Result of a rate sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct RateFit {
    pub epsilons: Vec<f64>,
    pub ns: Vec<usize>,
    pub reports: Vec<RiskReport>,
    /// Least-squares slope of `log mc_risk` on `log ε`.
    pub slope: f64,
    pub intercept: f64,
    pub theory: f64,
    pub regime: Regime,
    pub log_exponent: f64,
    /// `log mc_risk − fitted line`, per point.
    pub residuals: Vec<f64>,
}

impl RateFit {
    pub fn risks(&self) -> Vec<f64> {
        self.reports.iter().map(|r| r.mc_risk).collect()
    }
}

fn check_grid(epsilons: &[f64]) -> Result<()> {
    if epsilons.len() < 4 {
        bail!(Input, "rate fit needs at least 4 epsilon values, got {}", epsilons.len());
    }
    if epsilons.iter().any(|&e| !(e > 0.0 && e <= 1.0)) {
        bail!(Input, "epsilon values must lie in (0, 1]");
    }
    if epsilons.windows(2).any(|w| w[1] >= w[0]) {
        bail!(Input, "epsilon grid must be strictly decreasing");
    }
    Ok(())
}

/// Sweeps `ε`, generating `θ` from the ball for each `N(ε)` and recording the
/// PCO risk, then fits the log-log slope.
///
/// The signal for a given `N` is generated down to level `J + TAIL_LEVELS`
/// with the sweep seed, so the loss includes the bias beyond `Λ^(N)`.
pub fn rate_fit(
    ball: &BesovBall,
    p: f64,
    epsilons: &[f64],
    spec: &PenaltySpec,
    generator: SignalKind,
    settings: &McSettings,
) -> Result<RateFit> {
    check_grid(epsilons)?;
    ball.require_rate_regime()?;
    let w = WeightScheme::Dyadic { p };
    let mut ns = Vec::new();
    let mut reports = Vec::new();
    for (i, &eps) in epsilons.iter().enumerate() {
        let n = rate_len(ball.radius, eps);
        let top = crate::sequence::top_level_for_len(n).expect("power of two");
        let theta = generator.generate(ball, top + TAIL_LEVELS, settings.seed)?;
        let point = McSettings {
            seed: crate::rng::mix_seed(settings.seed, i as u64),
            ..settings.clone()
        };
        let spec_n = spec.with_n(n);
        reports.push(mc_risk(&theta, n, eps, &spec_n, &w, &point)?);
        ns.push(n);
    }
    let lx: Vec<f64> = epsilons.iter().map(|e| e.ln()).collect();
    let ly: Vec<f64> = reports.iter().map(|r| r.mc_risk.ln()).collect();
    let (slope, intercept) = least_squares_line(&lx, &ly);
    let residuals = lx.iter().zip(&ly).map(|(x, y)| y - (intercept + slope * x)).collect();
    Ok(RateFit {
        epsilons: epsilons.to_vec(),
        ns,
        reports,
        slope,
        intercept,
        theory: theory_exponent(p, ball.s, ball.r),
        regime: classify_regime(p, ball.s, ball.r),
        log_exponent: log_exponent(p, ball.s, ball.r),
        residuals,
    })
}

/// `mc_risk / (oracle + ε^p (1 + [p > 2] |log ε|^{p/2−1}))` for each point.
pub fn stabilized_oracle_ratios(fit: &RateFit, p: f64) -> Vec<f64> {
    fit.reports
        .iter()
        .map(|r| {
            let e = r.epsilon;
            let extra = if p > 2.0 { e.ln().abs().powf(p / 2.0 - 1.0) } else { 0.0 };
            r.mc_risk / (r.oracle_risk + e.powf(p) * (1.0 + extra))
        })
        .collect()
}
