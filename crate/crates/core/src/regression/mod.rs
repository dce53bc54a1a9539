//! Equispaced nonparametric regression `X_i = f(i/n) + σ η_i` through the
//! Haar sequence embedding `Y_{jk} = (1/n) Σ_i X_i φ_{jk}(t_i)`, `ε = σ/√n`.

pub mod wavelet;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;

use crate::error::{bail, PcoError, Result};
use crate::penalty::{ICardinality, NoiseMoments, PenaltySpec, Strategy};
use crate::rng::{experiment, mix_seed, stream_rng};
use crate::selection::{argmin_overall, pco_estimate, SelectionResult};
use crate::sequence::{abs_pow, level_range, NoiseKind, ObservationSet, SignalSequence, WeightScheme};
use crate::stats::mean_stderr;

pub use wavelet::{haar_eval, haar_forward, haar_forward_direct, haar_reconstruct, support_indices, WaveletBasis};

/// Responses `X_1..X_n` with known noise scale `σ`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionSample {
    x: Vec<f64>,
    sigma: f64,
}

impl RegressionSample {
    /// `n = x.len()` must be `2^k`, `k ≥ 1`.
    pub fn new(x: Vec<f64>, sigma: f64) -> Result<Self> {
        if x.len() < 2 || !x.len().is_power_of_two() {
            bail!(Geometry, "sample size {} is not a power of two >= 2", x.len());
        }
        if !(sigma >= 0.0) || !sigma.is_finite() {
            bail!(Domain, "sigma must be finite and >= 0, got {sigma}");
        }
        Ok(Self { x, sigma })
    }

    /// `X_i = f(i/n) + σ ξ_i`.
    pub fn simulate<R: Rng + ?Sized>(f: &TestFunction, n: usize, sigma: f64, noise: NoiseKind, rng: &mut R) -> Result<Self> {
        let mut x = sample_grid(f, n);
        for v in x.iter_mut() {
            *v += sigma * noise.sample(rng);
        }
        Self::new(x, sigma)
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn n(&self) -> usize {
        self.x.len()
    }

    /// `ε = σ/√n`.
    pub fn epsilon(&self) -> f64 {
        self.sigma / (self.n() as f64).sqrt()
    }
}

/// `f(i/n)`, `i = 0..n`.
pub fn sample_grid(f: &TestFunction, n: usize) -> Vec<f64> {
    (0..n).map(|i| f.eval(i as f64 / n as f64)).collect()
}

/// Embedded observations over `Λ^(N)`, `N = 2^{J+1} ≤ n`.
pub fn forward_coeffs(sample: &RegressionSample, basis: WaveletBasis, top: i32) -> Result<ObservationSet> {
    let WaveletBasis::Haar = basis;
    let y = haar_forward(sample.x(), top)?;
    let eps = sample.epsilon();
    if eps > 1.0 {
        bail!(Domain, "sigma/sqrt(n) = {eps} exceeds 1");
    }
    ObservationSet::dyadic(y, eps)
}

/// Discrete coefficients `θ_{jk} = (1/n) Σ_i f(t_i) φ_{jk}(t_i)`.
pub fn theta_of_f(f: &TestFunction, basis: WaveletBasis, top: i32, n: usize) -> Result<SignalSequence> {
    let WaveletBasis::Haar = basis;
    Ok(SignalSequence::truncated(haar_forward(&sample_grid(f, n), top)?))
}

/// Penalty settings with the regression variant of strategy I.
pub fn regression_spec(p: f64, n_coeffs: usize, moments_p: NoiseMoments, moments_2: NoiseMoments) -> Result<PenaltySpec> {
    let mut spec = PenaltySpec::new(p, n_coeffs, moments_p, moments_2)?;
    spec.constants.i_cardinality = ICardinality::Regression;
    Ok(spec)
}

/// PCO on the embedded sequence with dyadic weights `ω_j = 2^{j(p/2−1)}`.
pub fn pco_regress(
    sample: &RegressionSample,
    basis: WaveletBasis,
    top: i32,
    spec: &PenaltySpec,
    strategies: &[Strategy],
) -> Result<(SignalSequence, SelectionResult)> {
    let obs = forward_coeffs(sample, basis, top)?;
    let mut spec = spec.with_n(obs.len());
    spec.constants.i_cardinality = ICardinality::Regression;
    let w = WeightScheme::Dyadic { p: spec.p };
    let sel = argmin_overall(&obs, &spec, &w, strategies)?;
    Ok((pco_estimate(&obs, &sel)?, sel))
}

/// `f̃ = Σ θ̃_{jk} φ_{jk}` on `grid_size` equispaced points.
pub fn reconstruct(theta: &SignalSequence, basis: WaveletBasis, grid_size: usize) -> Result<Vec<f64>> {
    let WaveletBasis::Haar = basis;
    haar_reconstruct(theta.values(), grid_size)
}

/// `‖·‖_{ℬ^0_{p,p∧2}}` from Haar coefficients: level norms
/// `2^{j(1/2−1/p)} ‖θ_j‖_p` combined in `ℓ_{p∧2}`.
pub fn besov_zero_norm(coeffs: &[f64], p: f64) -> Result<f64> {
    let top = crate::sequence::top_level_for_len(coeffs.len())
        .ok_or_else(|| PcoError::Geometry(format!("coefficient count {} is not a power of two", coeffs.len())))?;
    let q = p.min(2.0);
    let mut acc = 0.0;
    for j in -1..=top {
        let lvl: f64 = coeffs[level_range(j)].iter().map(|&c| abs_pow(c, p)).sum();
        let jj = j.max(0) as f64;
        let norm = (jj * (0.5 - 1.0 / p)).exp2() * lvl.powf(1.0 / p);
        acc += norm.powf(q);
    }
    Ok(acc.powf(1.0 / q))
}

/// Functional risk of a sampled estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FunctionRisk {
    /// Riemann sum of `|f̂ − f|^p` on the grid.
    pub lp_pow: f64,
    /// `‖f̂ − f‖_{ℬ^0_{p,p∧2}}` of the grid difference.
    pub besov_surrogate: f64,
}

/// `(1/G) Σ_g |f̂(g/G) − f(g/G)|^p`, with `G = f_hat.len()`.
pub fn lp_function_risk(f_hat: &[f64], f: &TestFunction, p: f64) -> Result<FunctionRisk> {
    crate::sequence::check_p(p)?;
    let g = f_hat.len();
    if g < 2 || !g.is_power_of_two() {
        bail!(Geometry, "grid size {g} is not a power of two >= 2");
    }
    let diff: Vec<f64> = f_hat
        .iter()
        .enumerate()
        .map(|(i, &v)| v - f.eval(i as f64 / g as f64))
        .collect();
    let lp_pow = crate::stats::compensated_sum(diff.iter().map(|&d| abs_pow(d, p))) / g as f64;
    let top = g.trailing_zeros() as i32 - 1;
    let besov_surrogate = besov_zero_norm(&haar_forward(&diff, top)?, p)?;
    Ok(FunctionRisk { lp_pow, besov_surrogate })
}

/// Quadrature points per coefficient in risk evaluations.
pub const QUADRATURE_FACTOR: usize = 4;

/// Settings of a regression Monte Carlo run.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionMc {
    pub function: TestFunction,
    pub n: usize,
    pub sigma: f64,
    pub noise: NoiseKind,
    pub basis: WaveletBasis,
    /// `J`; `None` uses the finest level `log₂ n − 1`.
    pub top: Option<i32>,
    pub strategies: Vec<Strategy>,
    pub replicates: usize,
    pub seed: u64,
}

/// Mean and standard error of `‖f̃ − f‖_{L_p}^p` over replicates, on a grid of
/// [`QUADRATURE_FACTOR`]`·N` points. Replicate `r` uses stream `r`.
pub fn mc_function_risk(mc: &RegressionMc, spec: &PenaltySpec) -> Result<(f64, f64)> {
    if mc.replicates < 2 {
        bail!(Domain, "need at least 2 replicates");
    }
    let top = mc.top.unwrap_or(mc.n.trailing_zeros() as i32 - 1);
    let grid = QUADRATURE_FACTOR * crate::sequence::len_for_top_level(top);
    let truth: Vec<f64> = (0..grid).map(|g| mc.function.eval(g as f64 / grid as f64)).collect();
    let p = spec.p;
    let losses: Vec<f64> = (0..mc.replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream_rng(mix_seed(mc.seed, mc.n as u64), experiment::REGRESSION, r as u64);
            let sample = RegressionSample::simulate(&mc.function, mc.n, mc.sigma, mc.noise, &mut rng)?;
            let (est, _) = pco_regress(&sample, mc.basis, top, spec, &mc.strategies)?;
            let f_hat = reconstruct(&est, mc.basis, grid)?;
            Ok(crate::stats::compensated_sum(
                f_hat.iter().zip(&truth).map(|(a, b)| abs_pow(a - b, p)),
            ) / grid as f64)
        })
        .collect::<Result<_>>()?;
    Ok(mean_stderr(&losses))
}

/// Per-level tail frequencies of `Z_j = Σ_k |ξ_{jk}|^p` for pure-noise data.
#[derive(Debug, Clone, PartialEq)]
pub struct HarnessReport {
    pub p: f64,
    pub n: usize,
    pub replicates: usize,
    pub levels: Vec<i32>,
    pub x_grid: Vec<f64>,
    /// `exceedance[l][i]`: frequency of `Z_j ≥ 3/2 σ_p^p |𝓘_j| + κ |𝓘_j|^{(1−p/2)_+} x^{p/2}`.
    pub exceedance: Vec<Vec<f64>>,
    /// `max_{j,x} exceedance · e^x`.
    pub fitted: f64,
    /// `max(2, fitted)`.
    pub c_phi: f64,
}

/// Runs `f = 0`, `σ = 1` through the Haar embedding and records how often
/// each level's `Z_j` crosses the one-sided bound, with `ξ_{jk} = √n Y_{jk}`.
pub fn noise_harness(
    n: usize,
    top: i32,
    moments: &NoiseMoments,
    noise: NoiseKind,
    x_grid: &[f64],
    replicates: usize,
    seed: u64,
) -> Result<HarnessReport> {
    if !moments.is_calibrated() {
        return Err(PcoError::Uncalibrated {
            distribution: noise.label(),
            p: moments.p,
        });
    }
    if x_grid.iter().any(|&x| !(x >= 1.0)) || x_grid.is_empty() {
        bail!(Domain, "x grid values must be >= 1");
    }
    if replicates < 1 {
        bail!(Domain, "need at least 1 replicate");
    }
    let p = moments.p;
    let levels: Vec<i32> = (-1..=top).collect();
    let thresholds: Vec<Vec<f64>> = levels
        .iter()
        .map(|&j| {
            let d = crate::sequence::level_len(j);
            x_grid.iter().map(|&x| crate::concentration::band(moments, d, x).1).collect()
        })
        .collect();
    let root_n = (n as f64).sqrt();
    let counts = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream_rng(seed, experiment::REGRESSION, r as u64);
            let x: Vec<f64> = (0..n).map(|_| noise.sample(&mut rng)).collect();
            let y = haar_forward(&x, top)?;
            let mut hits = vec![vec![0usize; x_grid.len()]; levels.len()];
            for (l, &j) in levels.iter().enumerate() {
                let z: f64 = y[level_range(j)].iter().map(|&v| abs_pow(root_n * v, p)).sum();
                for (i, &th) in thresholds[l].iter().enumerate() {
                    if z >= th {
                        hits[l][i] += 1;
                    }
                }
            }
            Ok::<_, PcoError>(hits)
        })
        .try_reduce(
            || vec![vec![0usize; x_grid.len()]; levels.len()],
            |mut a, b| {
                for (ra, rb) in a.iter_mut().zip(&b) {
                    for (u, v) in ra.iter_mut().zip(rb) {
                        *u += v;
                    }
                }
                Ok(a)
            },
        )?;
    let exceedance: Vec<Vec<f64>> = counts
        .iter()
        .map(|row| row.iter().map(|&c| c as f64 / replicates as f64).collect())
        .collect();
    let fitted = exceedance
        .iter()
        .flat_map(|row| row.iter().zip(x_grid).map(|(e, x)| e * x.exp()))
        .fold(0.0, f64::max);
    Ok(HarnessReport {
        p,
        n,
        replicates,
        levels,
        x_grid: x_grid.to_vec(),
        exceedance,
        fitted,
        c_phi: fitted.max(2.0),
    })
}

/// Named test functions on `[0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TestFunction {
    Zero,
    Constant,
    Ramp,
    Blocks,
    Bumps,
    /// Piecewise constant on the 16 dyadic blocks of length 1/16.
    DyadicSteps,
    /// Haar series with `|θ_{jk}| = 2^{−j}` and pseudo-random signs for
    /// `j ≤ ROUGH_LEVELS`: a `B^{1/2}_{2,∞}` function.
    Rough,
}

/// Deepest level of [`TestFunction::Rough`].
pub const ROUGH_LEVELS: i32 = 20;

const STEP_VALUES: [f64; 16] = [
    0.5, 1.25, -0.75, 2.0, 0.0, -1.5, 0.25, 1.0, 3.0, -2.25, 0.75, 0.5, -0.5, 1.75, -1.0, 0.125,
];
const JUMPS: [f64; 11] = [0.1, 0.13, 0.15, 0.23, 0.25, 0.40, 0.44, 0.65, 0.76, 0.78, 0.81];
const BLOCK_HEIGHTS: [f64; 11] = [4.0, -5.0, 3.0, -4.0, 5.0, -4.2, 2.1, 4.3, -3.1, 2.1, -4.2];
const BUMP_HEIGHTS: [f64; 11] = [4.0, 5.0, 3.0, 4.0, 5.0, 4.2, 2.1, 4.3, 3.1, 5.1, 4.2];
const BUMP_WIDTHS: [f64; 11] = [0.005, 0.005, 0.006, 0.01, 0.01, 0.03, 0.01, 0.01, 0.005, 0.008, 0.005];

fn rough_sign(j: i32, k: u64) -> f64 {
    if mix_seed(j as u64 + 0x5eed, k) & 1 == 0 {
        1.0
    } else {
        -1.0
    }
}

impl TestFunction {
    pub fn eval(&self, t: f64) -> f64 {
        let t = t.rem_euclid(1.0);
        match self {
            TestFunction::Zero => 0.0,
            TestFunction::Constant => 1.0,
            TestFunction::Ramp => t,
            TestFunction::Blocks => JUMPS
                .iter()
                .zip(&BLOCK_HEIGHTS)
                .map(|(&tj, &h)| if t >= tj { h } else { 0.0 })
                .sum(),
            TestFunction::Bumps => JUMPS
                .iter()
                .zip(BUMP_HEIGHTS.iter().zip(&BUMP_WIDTHS))
                .map(|(&tj, (&h, &w))| h * (1.0 + ((t - tj) / w).abs()).powi(-4))
                .sum(),
            TestFunction::DyadicSteps => STEP_VALUES[((t * 16.0) as usize).min(15)],
            TestFunction::Rough => (0..=ROUGH_LEVELS)
                .map(|j| {
                    let scaled = t * (j as f64).exp2();
                    let k = scaled.floor();
                    let half = if scaled - k < 0.5 { 1.0 } else { -1.0 };
                    // θ_{jk} ψ_{jk}(t) = 2^{−j} s 2^{j/2} (±1).
                    rough_sign(j, k as u64) * half * (-(j as f64) / 2.0).exp2()
                })
                .sum(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            TestFunction::Zero => "zero",
            TestFunction::Constant => "constant",
            TestFunction::Ramp => "ramp",
            TestFunction::Blocks => "blocks",
            TestFunction::Bumps => "bumps",
            TestFunction::DyadicSteps => "steps",
            TestFunction::Rough => "rough",
        }
    }
}

impl fmt::Display for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TestFunction {
    type Err = PcoError;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim().to_ascii_lowercase().as_str() {
            "zero" => TestFunction::Zero,
            "constant" => TestFunction::Constant,
            "ramp" => TestFunction::Ramp,
            "blocks" => TestFunction::Blocks,
            "bumps" => TestFunction::Bumps,
            "steps" => TestFunction::DyadicSteps,
            "rough" => TestFunction::Rough,
            _ => bail!(Config, "unknown test function {s:?}"),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::penalty::default_moments;

    fn spec2(n: usize) -> PenaltySpec {
        let g = NoiseKind::StandardGaussian;
        let m = default_moments(2.0, &g, None).unwrap();
        regression_spec(2.0, n, m, m).unwrap()
    }

    #[test]
    fn sample_validation() {
        assert!(RegressionSample::new(vec![0.0; 6], 1.0).is_err());
        assert!(RegressionSample::new(vec![0.0; 1], 1.0).is_err());
        assert!(RegressionSample::new(vec![0.0; 8], -1.0).is_err());
        let s = RegressionSample::new(vec![0.0; 64], 0.5).unwrap();
        assert_eq!(s.epsilon(), 0.0625);
    }

    #[test]
    fn zero_and_constant_coefficients() {
        let z = theta_of_f(&TestFunction::Zero, WaveletBasis::Haar, 3, 16).unwrap();
        assert!(z.values().iter().all(|&v| v == 0.0));
        let c = theta_of_f(&TestFunction::Constant, WaveletBasis::Haar, 3, 16).unwrap();
        assert_eq!(c.values()[0], 1.0);
        assert!(c.values()[1..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn half_indicator_level_zero() {
        // f = 1 on [0, 1/2): θ_{0,0} = (1/8) Σ_{i<4} 1 = 1/2 for n = 8.
        let x: Vec<f64> = (0..8).map(|i| if i < 4 { 1.0 } else { 0.0 }).collect();
        let y = haar_forward(&x, 2).unwrap();
        assert_eq!(y[1], 0.5);
        assert_eq!(y[0], 0.5);
    }

    #[test]
    fn step_round_trip_is_exact() {
        for n in [16usize, 64, 256] {
            let top = n.trailing_zeros() as i32 - 1;
            let theta = theta_of_f(&TestFunction::DyadicSteps, WaveletBasis::Haar, top, n).unwrap();
            let back = reconstruct(&theta, WaveletBasis::Haar, n).unwrap();
            for (i, v) in back.iter().enumerate() {
                assert!((v - TestFunction::DyadicSteps.eval(i as f64 / n as f64)).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn noiseless_regression_recovers_coefficients() {
        let n = 64;
        let sample = RegressionSample::new(sample_grid(&TestFunction::DyadicSteps, n), 0.0).unwrap();
        let (est, sel) = pco_regress(&sample, WaveletBasis::Haar, 5, &spec2(64), &[Strategy::S]).unwrap();
        let theta = theta_of_f(&TestFunction::DyadicSteps, WaveletBasis::Haar, 5, n).unwrap();
        for (i, (&a, &b)) in est.values().iter().zip(theta.values()).enumerate() {
            assert!((a - b).abs() < 1e-12);
            assert_eq!(sel.model.contains(i), b != 0.0);
        }
    }

    #[test]
    fn modified_cardinality_only_above_two() {
        use crate::selection::i_cardinality;
        assert_eq!(i_cardinality(4, 5, 4.0, ICardinality::Regression), 0);
        assert_eq!(i_cardinality(4, 5, 2.0, ICardinality::Regression), i_cardinality(4, 5, 2.0, ICardinality::Sequence));
    }

    #[test]
    fn function_risk_examples() {
        let grid = 64;
        let exact = sample_grid(&TestFunction::Ramp, grid);
        let r = lp_function_risk(&exact, &TestFunction::Ramp, 2.0).unwrap();
        assert_eq!(r.lp_pow, 0.0);
        let shifted: Vec<f64> = exact.iter().map(|v| v + 0.3).collect();
        let r = lp_function_risk(&shifted, &TestFunction::Ramp, 3.0).unwrap();
        assert!((r.lp_pow - 0.027).abs() < 1e-12);
    }

    #[test]
    fn step_difference_matches_piecewise_integral() {
        // f̂ − f = 0.5 ψ_{1,1} − 2 ψ_{2,0}: ∫|·|^p from the piecewise values.
        let mut theta = vec![0.0; 8];
        theta[3] = 0.5;
        theta[4] = -2.0;
        let sig = SignalSequence::new(theta);
        let f_hat = reconstruct(&sig, WaveletBasis::Haar, 32).unwrap();
        let p = 3.0;
        let r = lp_function_risk(&f_hat, &TestFunction::Zero, p).unwrap();
        // Quarters: [−2·2, +2·2, 0.5·√2, −0.5·√2] on blocks of length 1/8 and 1/4.
        let a = 4.0_f64;
        let b = 0.5 * 2f64.sqrt();
        let exact = 2.0 * a.powf(p) / 8.0 + 2.0 * b.powf(p) / 4.0;
        assert!((r.lp_pow - exact).abs() < 1e-10);
    }

    #[test]
    fn lp_norm_below_besov_bridge() {
        // A single constant over many reconstructed functions bounds ‖g‖_Lp / ‖g‖_B.
        let mut rng = stream_rng(2, 2, 2);
        for p in [1.0, 2.0, 3.0, 4.0] {
            let mut worst: f64 = 0.0;
            for _ in 0..50 {
                let theta: Vec<f64> = (0..64).map(|_| rng.random_range(-1.0..1.0) * rng.random_range(0.0..1.0_f64).powi(4)).collect();
                let g = reconstruct(&SignalSequence::new(theta), WaveletBasis::Haar, 256).unwrap();
                let r = lp_function_risk(&g, &TestFunction::Zero, p).unwrap();
                worst = worst.max(r.lp_pow.powf(1.0 / p) / r.besov_surrogate);
            }
            assert!(worst.is_finite() && worst < 4.0, "p = {p}: {worst}");
        }
    }

    #[test]
    fn rough_function_coefficients_follow_design() {
        let n = 1 << 12;
        let theta = theta_of_f(&TestFunction::Rough, WaveletBasis::Haar, 5, n).unwrap();
        for j in 0..=5 {
            for &v in theta.level(j) {
                // Aliasing from levels above log2 n adds O(2^{−12/2}).
                assert!((v.abs() - (-(j as f64)).exp2()).abs() < 0.05, "j = {j}: {v}");
            }
        }
    }

    #[test]
    fn harness_replays_and_passes_small() {
        let g = NoiseKind::StandardGaussian;
        let m = default_moments(2.0, &g, None).unwrap();
        let a = noise_harness(64, 5, &m, g, &[2.0, 3.0], 2000, 1).unwrap();
        let b = noise_harness(64, 5, &m, g, &[2.0, 3.0], 2000, 1).unwrap();
        assert_eq!(a, b);
        assert!(a.c_phi <= 4.0);
        let un = NoiseMoments::uncalibrated(3.0, 1.0);
        assert!(noise_harness(64, 5, &un, g, &[2.0], 10, 1).is_err());
    }

    #[test]
    fn function_names_round_trip() {
        for f in [
            TestFunction::Zero,
            TestFunction::Constant,
            TestFunction::Ramp,
            TestFunction::Blocks,
            TestFunction::Bumps,
            TestFunction::DyadicSteps,
            TestFunction::Rough,
        ] {
            assert_eq!(f.name().parse::<TestFunction>().unwrap(), f);
        }
        assert!("sinc".parse::<TestFunction>().is_err());
    }
}
