//! Empirical concentration of `Z = Σ_{λ∈𝓘} |ξ_λ|^p`.
//!
//! The two-sided band checked here is
//! `½σ_p^p D − κ_p D^{(1−p/2)_+} x^{p/2} ≤ Z ≤ 3/2 σ_p^p D + κ_p D^{(1−p/2)_+} x^{p/2}`,
//! which should fail with probability at most `2e^{−x}`.

use rayon::prelude::*;
use statrs::distribution::{Binomial, DiscreteCDF};

use crate::error::{bail, PcoError, Result};
use crate::penalty::{elbow_exponent, kappa, NoiseMoments};
use crate::rng::{experiment, mix_seed, stream_rng};
use crate::sequence::{abs_pow, NoiseKind};
use crate::stats::binomial_se;

/// Replicates drawn from one RNG stream.
pub const BATCH: usize = 1024;

/// `replicates` independent draws of `Σ_{i<D} |ξ_i|^p`.
///
/// Batch `b` of [`BATCH`] replicates uses stream `b`, so the output does not
/// depend on the thread count.
pub fn simulate_z(noise: &NoiseKind, p: f64, d: usize, replicates: usize, seed: u64) -> Result<Vec<f64>> {
    if d == 0 {
        bail!(Domain, "block size D must be >= 1");
    }
    noise.validate()?;
    let mut out = vec![0.0; replicates];
    out.par_chunks_mut(BATCH).enumerate().for_each(|(b, chunk)| {
        let mut rng = stream_rng(seed, experiment::CONCENTRATION, b as u64);
        for z in chunk.iter_mut() {
            *z = (0..d).map(|_| abs_pow(noise.sample(&mut rng), p)).sum();
        }
    });
    Ok(out)
}

/// Outcome of a band check at one block size.
#[derive(Debug, Clone, PartialEq)]
pub struct TailCheckReport {
    pub p: f64,
    pub d: usize,
    pub replicates: usize,
    pub x_grid: Vec<f64>,
    /// Fraction of replicates outside the band, per `x`.
    pub empirical_exceedance: Vec<f64>,
    /// `2e^{−x}`, per `x`.
    pub bound: Vec<f64>,
    pub pass: bool,
}

impl TailCheckReport {
    /// Per-`x` acceptance: exceedance ≤ bound + 3 binomial standard errors.
    pub fn passes_at(&self, i: usize) -> bool {
        let q = self.bound[i].min(1.0);
        self.empirical_exceedance[i] <= self.bound[i] + 3.0 * binomial_se(q, self.replicates)
    }
}

/// Lower and upper edge of the band.
pub fn band(moments: &NoiseMoments, d: usize, x: f64) -> (f64, f64) {
    let p = moments.p;
    let sp = moments.sigma_pow();
    let df = d as f64;
    let dev = moments.kappa_p * df.powf(elbow_exponent(p)) * x.powf(p / 2.0);
    (0.5 * sp * df - dev, 1.5 * sp * df + dev)
}

fn check_x_grid(x_grid: &[f64]) -> Result<()> {
    if x_grid.is_empty() {
        bail!(Domain, "empty x grid");
    }
    if let Some(x) = x_grid.iter().find(|&&x| !(x >= 1.0)) {
        bail!(Domain, "x grid values must be >= 1, got {x}");
    }
    Ok(())
}

fn require_calibrated(noise: &NoiseKind, moments: &NoiseMoments) -> Result<()> {
    if !moments.is_calibrated() {
        return Err(PcoError::Uncalibrated {
            distribution: noise.label(),
            p: moments.p,
        });
    }
    Ok(())
}

/// Fraction of `samples` outside the band at each `x`.
pub fn band_exceedance(samples: &[f64], moments: &NoiseMoments, d: usize, x_grid: &[f64]) -> Vec<f64> {
    x_grid
        .iter()
        .map(|&x| {
            let (lo, hi) = band(moments, d, x);
            let out = samples.iter().filter(|&&z| z < lo || z > hi).count();
            out as f64 / samples.len() as f64
        })
        .collect()
}

/// Monte Carlo check of the two-sided band.
pub fn tail_check(
    noise: &NoiseKind,
    p: f64,
    d: usize,
    moments: &NoiseMoments,
    x_grid: &[f64],
    replicates: usize,
    seed: u64,
) -> Result<TailCheckReport> {
    require_calibrated(noise, moments)?;
    check_x_grid(x_grid)?;
    if moments.p != p {
        bail!(Config, "moments tabulated for p = {}, asked for p = {p}", moments.p);
    }
    if replicates < 2 {
        bail!(Domain, "need at least 2 replicates");
    }
    let z = simulate_z(noise, p, d, replicates, seed)?;
    let empirical_exceedance = band_exceedance(&z, moments, d, x_grid);
    let bound: Vec<f64> = x_grid.iter().map(|x| 2.0 * (-x).exp()).collect();
    let mut report = TailCheckReport {
        p,
        d,
        replicates,
        x_grid: x_grid.to_vec(),
        empirical_exceedance,
        bound,
        pass: false,
    };
    report.pass = (0..x_grid.len()).all(|i| report.passes_at(i));
    Ok(report)
}

/// Knobs for [`calibrate_constants`].
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationSettings {
    pub d_grid: Vec<usize>,
    pub x_grid: Vec<f64>,
    pub replicates: usize,
    /// One-sided confidence of the exact binomial bound.
    pub confidence: f64,
    pub step: f64,
    /// Largest lattice value tried for either constant.
    pub max_constant: f64,
    pub seed: u64,
}

impl Default for CalibrationSettings {
    fn default() -> Self {
        Self {
            d_grid: vec![1, 10, 100],
            x_grid: vec![1.0, 2.0, 3.0],
            replicates: 20_000,
            confidence: 0.99,
            step: 0.05,
            max_constant: 10.0,
            seed: 0,
        }
    }
}

/// `true` when `k` exceedances out of `n` are compatible with a true rate
/// `≤ q`: the exact one-sided upper confidence bound on the rate is `≤ q`.
fn rate_certified(k: usize, n: usize, q: f64, confidence: f64) -> bool {
    if q >= 1.0 {
        return true;
    }
    // Upper bound u solves P(Bin(n, u) ≤ k) = 1 − confidence; u ≤ q iff
    // P(Bin(n, q) ≤ k) ≤ 1 − confidence.
    let b = Binomial::new(q, n as u64).expect("q in [0, 1)");
    b.cdf(k as u64) <= 1.0 - confidence
}

/// One `(D, x)` constraint: sorted absolute deviations and the target rate.
struct Constraint {
    dev_sorted: Vec<f64>,
    sqrt_dx: f64,
    second: f64,
    q: f64,
}

impl Constraint {
    fn holds(&self, c1: f64, c2: f64, confidence: f64) -> bool {
        let t = c1 * self.sqrt_dx + c2 * self.second;
        let n = self.dev_sorted.len();
        let k = n - self.dev_sorted.partition_point(|&v| v <= t);
        rate_certified(k, n, self.q, confidence)
    }
}

/// Smallest lattice constants `(c1, c2)` such that
/// `|Z − E Z| ≤ c1 √(Dx) + c2 D^{(1−p/2)_+} x^{p/2}` holds with frequency at
/// least `1 − 2e^{−x}` at every grid point, certified by an exact binomial
/// bound. Among feasible points the one with the smallest `κ_p` wins (ties:
/// smaller `c1`, then smaller `c2`).
pub fn calibrate_constants(noise: &NoiseKind, p: f64, settings: &CalibrationSettings) -> Result<(f64, f64)> {
    crate::sequence::check_p(p)?;
    if settings.d_grid.is_empty() {
        bail!(Domain, "empty D grid");
    }
    check_x_grid(&settings.x_grid)?;
    if !(settings.confidence > 0.0 && settings.confidence < 1.0) {
        bail!(Domain, "confidence must lie in (0, 1)");
    }
    if !(settings.step > 0.0) || settings.max_constant < settings.step {
        bail!(Domain, "bad lattice (step {}, max {})", settings.step, settings.max_constant);
    }
    let sp = noise.abs_moment(p);
    let mut constraints = Vec::new();
    for &d in &settings.d_grid {
        let z = simulate_z(noise, p, d, settings.replicates, mix_seed(settings.seed, d as u64))?;
        let mean = d as f64 * sp;
        let mut dev: Vec<f64> = z.iter().map(|v| (v - mean).abs()).collect();
        dev.sort_by(f64::total_cmp);
        for &x in &settings.x_grid {
            constraints.push(Constraint {
                dev_sorted: dev.clone(),
                sqrt_dx: (d as f64 * x).sqrt(),
                second: (d as f64).powf(elbow_exponent(p)) * x.powf(p / 2.0),
                q: 2.0 * (-x).exp(),
            });
        }
    }
    let steps = (settings.max_constant / settings.step + 1e-9).floor() as usize;
    let lattice = |i: usize| ((i as f64) * settings.step * 1e6).round() / 1e6;
    let mut best: Option<(f64, f64, f64)> = None;
    for i1 in 1..=steps {
        let c1 = lattice(i1);
        // Feasibility is monotone in c2: find the smallest feasible c2.
        let feasible = |i2: usize| constraints.iter().all(|c| c.holds(c1, lattice(i2), settings.confidence));
        if !feasible(steps) {
            continue;
        }
        let (mut lo, mut hi) = (1usize, steps);
        while lo < hi {
            let mid = (lo + hi) / 2;
            if feasible(mid) {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        let c2 = lattice(lo);
        let k = kappa(p, sp.powf(1.0 / p), c1, c2);
        if best.is_none_or(|(bk, _, _)| k < bk - 1e-12) {
            best = Some((k, c1, c2));
        }
    }
    match best {
        Some((_, c1, c2)) => Ok((c1, c2)),
        None => {
            let worst = constraints
                .iter()
                .map(|c| {
                    let n = c.dev_sorted.len();
                    let k = n - c.dev_sorted.partition_point(|&v| v <= settings.max_constant * (c.sqrt_dx + c.second));
                    format!("q={:.4} exceed={:.4}", c.q, k as f64 / n as f64)
                })
                .collect::<Vec<_>>()
                .join(", ");
            bail!(CalibrationFailed, "no lattice point up to {} passes: {worst}", settings.max_constant)
        }
    }
}

/// Calibrated moments `(σ_p, c1, c2, κ_p)` for a distribution.
pub fn calibrated_moments(noise: &NoiseKind, p: f64, settings: &CalibrationSettings) -> Result<NoiseMoments> {
    let (c1, c2) = calibrate_constants(noise, p, settings)?;
    NoiseMoments::new(p, noise.sigma_p(p), c1, c2)
}
