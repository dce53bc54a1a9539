//! Noise-moment constants and penalty formulas.
//!
//! A penalty here is always separable across dyadic levels and depends on a
//! level only through its cardinality `|m_j|`: `pen(m) = Σ_j pen_j(|m_j|)`.
//! [`LevelPenalty`] captures that shape and is what the selection routines
//! consume.

use std::fmt;
use std::str::FromStr;

use crate::error::{bail, PcoError, Result};
use crate::sequence::{abs_pow, check_p, level_len, Model, NoiseKind, WeightScheme};

/// `(E|ξ|^p)^{1/p}` for a standard Gaussian: `(2^{p/2} Γ((p+1)/2) / √π)^{1/p}`.
pub fn sigma_p_gaussian(p: f64) -> Result<f64> {
    check_p(p)?;
    Ok(NoiseKind::StandardGaussian.sigma_p(p))
}

/// `(p − 2)_+`-style positive part.
#[inline]
pub fn pos(x: f64) -> f64 {
    x.max(0.0)
}

/// Exponent `(1 − p/2)_+` of the cardinality in the deviation term.
#[inline]
pub fn elbow_exponent(p: f64) -> f64 {
    pos(1.0 - p / 2.0)
}

/// Concentration constants of `Σ|ξ_λ|^p` at one loss index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseMoments {
    pub p: f64,
    pub sigma_p: f64,
    pub c1: f64,
    pub c2: f64,
    pub kappa_p: f64,
}

impl NoiseMoments {
    /// Builds the moments, deriving `κ_p = c2 + c1 max(1, c1 / (2 σ_p^p))`.
    pub fn new(p: f64, sigma_p: f64, c1: f64, c2: f64) -> Result<Self> {
        check_p(p)?;
        if !(sigma_p > 0.0) {
            bail!(Domain, "sigma_p = {sigma_p} must be > 0");
        }
        if !(c1 >= 0.0 && c2 >= 0.0) {
            bail!(Domain, "concentration constants must be >= 0 (c1 = {c1}, c2 = {c2})");
        }
        Ok(Self {
            p,
            sigma_p,
            c1,
            c2,
            kappa_p: kappa(p, sigma_p, c1, c2),
        })
    }

    /// Moments with unknown concentration constants.
    pub fn uncalibrated(p: f64, sigma_p: f64) -> Self {
        Self {
            p,
            sigma_p,
            c1: f64::NAN,
            c2: f64::NAN,
            kappa_p: f64::NAN,
        }
    }

    pub fn is_calibrated(&self) -> bool {
        self.c1.is_finite() && self.c2.is_finite() && self.kappa_p.is_finite()
    }

    /// `σ_p^p = E|ξ|^p`.
    pub fn sigma_pow(&self) -> f64 {
        self.sigma_p.powf(self.p)
    }
}

/// `κ_p = c2 + c1 max(1, c1 / (2 σ_p^p))`.
pub fn kappa(p: f64, sigma_p: f64, c1: f64, c2: f64) -> f64 {
    c2 + c1 * (c1 / (2.0 * sigma_p.powf(p))).max(1.0)
}

/// One row of a persisted moments table.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentsEntry {
    pub distribution: String,
    pub moments: NoiseMoments,
    pub calibration_date: String,
}

/// Calibrated constants keyed by `(distribution label, p)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MomentsTable {
    pub entries: Vec<MomentsEntry>,
}

impl MomentsTable {
    pub fn lookup(&self, noise: &NoiseKind, p: f64) -> Option<NoiseMoments> {
        let label = noise.label();
        self.entries
            .iter()
            .find(|e| e.distribution == label && (e.moments.p - p).abs() < 1e-12)
            .map(|e| e.moments)
    }

    pub fn insert(&mut self, entry: MomentsEntry) {
        self.entries
            .retain(|e| !(e.distribution == entry.distribution && (e.moments.p - entry.moments.p).abs() < 1e-12));
        self.entries.push(entry);
    }
}

/// Constants known in closed form: Gaussian `p = 1` gives `(√2, 0)`, Gaussian
/// `p = 2` gives `(2, 2)`.
pub fn tabulated_moments(p: f64, noise: &NoiseKind) -> Option<NoiseMoments> {
    match noise {
        NoiseKind::StandardGaussian if p == 1.0 => {
            NoiseMoments::new(1.0, noise.sigma_p(1.0), std::f64::consts::SQRT_2, 0.0).ok()
        }
        NoiseKind::StandardGaussian if p == 2.0 => NoiseMoments::new(2.0, 1.0, 2.0, 2.0).ok(),
        _ => None,
    }
}

/// Moments at index `p`: closed-form constants first, then `table`.
///
/// Anything else is an [`PcoError::Uncalibrated`] error; run
/// [`crate::concentration::calibrate_constants`] to fill the gap.
pub fn default_moments(p: f64, noise: &NoiseKind, table: Option<&MomentsTable>) -> Result<NoiseMoments> {
    check_p(p)?;
    noise.validate()?;
    if let Some(m) = tabulated_moments(p, noise) {
        return Ok(m);
    }
    if let Some(m) = table.and_then(|t| t.lookup(noise, p)) {
        return Ok(m);
    }
    Err(PcoError::Uncalibrated {
        distribution: noise.label(),
        p,
    })
}

/// Model-collection strategies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Strategy {
    /// Nested full-level cuts at `L`.
    H,
    /// Full levels up to `L − 1`, then decaying cardinalities.
    I,
    /// Every subset of every level.
    S,
    /// Prefixes `{1..k}` of the flat enumeration, constant weights.
    FlatNested,
    /// `pen(m) = Σ_{λ∈m} w_λ t^p`.
    Threshold(f64),
}

impl Strategy {
    pub fn name(&self) -> String {
        match self {
            Strategy::H => "H".into(),
            Strategy::I => "I".into(),
            Strategy::S => "S".into(),
            Strategy::FlatNested => "flat".into(),
            Strategy::Threshold(t) => format!("threshold({t})"),
        }
    }

    /// Position in the tie-break order `H < I < S`.
    pub(crate) fn rank(&self) -> u8 {
        match self {
            Strategy::H => 0,
            Strategy::I => 1,
            Strategy::S => 2,
            Strategy::FlatNested => 3,
            Strategy::Threshold(_) => 4,
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for Strategy {
    type Err = PcoError;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        match t.to_ascii_lowercase().as_str() {
            "h" => Ok(Strategy::H),
            "i" => Ok(Strategy::I),
            "s" => Ok(Strategy::S),
            "flat" | "flatnested" | "flat_nested" => Ok(Strategy::FlatNested),
            other => {
                if let Some(v) = other.strip_prefix("threshold:") {
                    let t: f64 = v
                        .parse()
                        .map_err(|_| PcoError::Config(format!("bad threshold in {s:?}")))?;
                    if !(t > 0.0) {
                        bail!(Config, "threshold must be > 0, got {t}");
                    }
                    Ok(Strategy::Threshold(t))
                } else {
                    bail!(Config, "unknown strategy tag {s:?}")
                }
            }
        }
    }
}

/// How strategy I sizes the levels above the cut.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ICardinality {
    /// `⌊2^{L+l} 2^{−lp/2} (l+1)^{−3}⌋`.
    Sequence,
    /// Regression variant: exponent `−3p/2` on `(l+1)` when `p > 2`.
    Regression,
}

/// Strategy constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StrategyConstants {
    /// Factor of `x_m = a log|m|` in the flat nested collection.
    pub a: f64,
    /// `K` in `x^I`.
    pub k_i: f64,
    /// Multiplier in `x^S = K_S |m_j| j` (`p + 1` by default).
    pub k_s: f64,
    pub i_cardinality: ICardinality,
}

impl StrategyConstants {
    pub fn defaults(p: f64) -> Self {
        Self {
            a: 1.0 + elbow_exponent(p) + 0.5,
            k_i: p + 1.0,
            k_s: p + 1.0,
            i_cardinality: ICardinality::Sequence,
        }
    }
}

/// Everything the PCO penalties need.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenaltySpec {
    pub p: f64,
    /// Cap parameter `q > 1` (default `p + 1`).
    pub q: f64,
    /// Observed size `N`.
    pub n: usize,
    pub moments_p: NoiseMoments,
    pub moments_2: NoiseMoments,
    pub constants: StrategyConstants,
}

impl PenaltySpec {
    pub fn new(p: f64, n: usize, moments_p: NoiseMoments, moments_2: NoiseMoments) -> Result<Self> {
        let spec = Self {
            p,
            q: p + 1.0,
            n,
            moments_p,
            moments_2,
            constants: StrategyConstants::defaults(p),
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Penalty settings built from [`default_moments`] at `p` and 2.
    pub fn for_noise(p: f64, n: usize, noise: &NoiseKind, table: Option<&MomentsTable>) -> Result<Self> {
        let mp = default_moments(p, noise, table)?;
        let m2 = default_moments(2.0, noise, table)?;
        Self::new(p, n, mp, m2)
    }

    pub fn with_n(mut self, n: usize) -> Self {
        self.n = n;
        self
    }

    pub fn validate(&self) -> Result<()> {
        check_p(self.p)?;
        if !(self.q > 1.0) {
            bail!(Domain, "cap exponent q = {} must be > 1", self.q);
        }
        if (self.moments_p.p - self.p).abs() > 1e-12 || self.moments_2.p != 2.0 {
            bail!(Config, "moment indices do not match p = {} and 2", self.p);
        }
        if !self.moments_p.is_calibrated() || !self.moments_2.is_calibrated() {
            return Err(PcoError::Uncalibrated {
                distribution: "unknown".into(),
                p: if self.moments_p.is_calibrated() { 2.0 } else { self.p },
            });
        }
        Ok(())
    }

    /// `(2q log N)^{p/2 − 1}`.
    pub fn cap_factor(&self) -> f64 {
        (2.0 * self.q * (self.n as f64).ln()).powf(self.p / 2.0 - 1.0)
    }
}

fn check_level_args(d: usize, x: f64) -> Result<()> {
    if d >= 1 && !(x >= 1.0) {
        bail!(Precondition, "x = {x} < 1 for a non-empty level (|m_j| = {d})");
    }
    Ok(())
}

/// `p_j(m_j) = 3/2 σ_p^p |m_j| + κ_p 2^{(p−2)_+/2} |m_j|^{(1−p/2)_+} x^{p/2}`.
pub fn p_level(d: usize, x: f64, m: &NoiseMoments) -> Result<f64> {
    check_level_args(d, x)?;
    Ok(p_level_unchecked(d, x, m))
}

#[inline]
fn p_level_unchecked(d: usize, x: f64, m: &NoiseMoments) -> f64 {
    if d == 0 {
        return 0.0;
    }
    let p = m.p;
    let df = d as f64;
    1.5 * m.sigma_pow() * df
        + m.kappa_p * (pos(p - 2.0) / 2.0).exp2() * df.powf(elbow_exponent(p)) * x.powf(p / 2.0)
}

/// `p_j^#(m_j) = 3/2 σ_2^2 |m_j| + κ_2 x`.
pub fn p_level_sharp(d: usize, x: f64, m2: &NoiseMoments) -> Result<f64> {
    check_level_args(d, x)?;
    Ok(p_level_sharp_unchecked(d, x, m2))
}

#[inline]
fn p_level_sharp_unchecked(d: usize, x: f64, m2: &NoiseMoments) -> f64 {
    if d == 0 {
        return 0.0;
    }
    1.5 * m2.sigma_p * m2.sigma_p * d as f64 + m2.kappa_p * x
}

/// Strategy factor `x_{m_j}` for a level `j` holding `d` selected coefficients.
///
/// Values below 1 on non-empty levels are raised to 1; an empty level gets 0.
pub fn x_factor(strategy: Strategy, p: f64, j: i32, d: usize, c: &StrategyConstants) -> Result<f64> {
    if d == 0 {
        return Ok(0.0);
    }
    let df = d as f64;
    let raw = match strategy {
        Strategy::H => p / 2.0 * df.ln(),
        Strategy::I => c.k_i * df * (1.0 + (level_len(j) as f64 / df).ln()),
        Strategy::S => c.k_s * df * j as f64,
        Strategy::FlatNested => c.a * df.ln(),
        Strategy::Threshold(_) => bail!(Config, "threshold baseline has no x-factor"),
    };
    Ok(raw.max(1.0))
}

/// A penalty that is a sum over levels of a function of `|m_j|`.
pub trait LevelPenalty {
    /// Contribution of level `j` when it holds `d` coefficients.
    fn level_penalty(&self, j: i32, d: usize) -> f64;

    /// `level_penalty(j, d) − level_penalty(j, d − 1)` for `d ≥ 1`. Override
    /// when the marginal cost has an exact closed form.
    fn increment(&self, j: i32, d: usize) -> f64 {
        self.level_penalty(j, d) - self.level_penalty(j, d - 1)
    }
}

/// `pen^a` for one of the PCO strategies.
#[derive(Debug, Clone, Copy)]
pub struct StrategyPenalty<'a> {
    pub spec: &'a PenaltySpec,
    pub strategy: Strategy,
    pub epsilon: f64,
    pub weights: WeightScheme,
    /// Whether the `p > 2` cap applies (the default for dyadic strategies).
    pub capped: bool,
}

impl<'a> StrategyPenalty<'a> {
    pub fn new(spec: &'a PenaltySpec, strategy: Strategy, epsilon: f64, weights: WeightScheme) -> Self {
        Self {
            spec,
            strategy,
            epsilon,
            weights,
            capped: !matches!(strategy, Strategy::FlatNested),
        }
    }

    /// Unweighted level value `p_j` or `min(p_j, cap · p_j^#)`.
    fn level_core(&self, j: i32, d: usize) -> f64 {
        if d == 0 {
            return 0.0;
        }
        let spec = self.spec;
        let x = x_factor(self.strategy, spec.p, j, d, &spec.constants).unwrap_or(f64::NAN);
        let base = p_level_unchecked(d, x, &spec.moments_p);
        if self.capped && spec.p > 2.0 {
            base.min(spec.cap_factor() * p_level_sharp_unchecked(d, x, &spec.moments_2))
        } else {
            base
        }
    }
}

impl LevelPenalty for StrategyPenalty<'_> {
    fn level_penalty(&self, j: i32, d: usize) -> f64 {
        if d == 0 {
            return 0.0;
        }
        let w = match self.strategy {
            Strategy::FlatNested => 1.0,
            _ => self.weights.at_level(j),
        };
        2.0 * self.epsilon.powf(self.spec.p) * w * self.level_core(j, d)
    }
}

/// Thresholding penalty `Σ_{λ∈m} w_λ t^p`.
#[derive(Debug, Clone, Copy)]
pub struct ThresholdPenalty {
    pub t: f64,
    pub p: f64,
    pub weights: WeightScheme,
}

impl LevelPenalty for ThresholdPenalty {
    fn level_penalty(&self, j: i32, d: usize) -> f64 {
        d as f64 * self.increment(j, 1)
    }

    /// Same rounding as the gain `w_j |Y|^p`, so `|Y| = t` ties exactly.
    fn increment(&self, j: i32, _d: usize) -> f64 {
        self.weights.at_level(j) * abs_pow(self.t, self.p)
    }
}

/// The zero penalty (diagnostic override).
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroPenalty;

impl LevelPenalty for ZeroPenalty {
    fn level_penalty(&self, _j: i32, _d: usize) -> f64 {
        0.0
    }
}

/// Any closure `(j, d) -> value`.
impl<F: Fn(i32, usize) -> f64> LevelPenalty for F {
    fn level_penalty(&self, j: i32, d: usize) -> f64 {
        self(j, d)
    }
}

/// `pen(m) = 2ε^p Σ_j ω_j p_j(|m_j|)` with `p ≤ 2`, and the per-level
/// `min(p_j, (2q log N)^{p/2−1} p_j^#)` when `p > 2`.
///
/// `x_of(j, d)` supplies the factors; it must return at least 1 on
/// non-empty levels.
pub fn pen<F>(model: &Model, spec: &PenaltySpec, epsilon: f64, w: &WeightScheme, x_of: F) -> Result<f64>
where
    F: Fn(i32, usize) -> f64,
{
    if !(epsilon > 0.0) {
        bail!(Domain, "pen needs epsilon > 0, got {epsilon}");
    }
    if spec.p > 2.0 && spec.n < 2 {
        bail!(Domain, "capped penalty needs N >= 2");
    }
    let cards = model.level_cardinalities()?;
    let cap = spec.cap_factor();
    let mut total = 0.0;
    for (slot, &d) in cards.iter().enumerate() {
        let j = slot as i32 - 1;
        if d == 0 {
            continue;
        }
        let x = x_of(j, d);
        let base = p_level(d, x, &spec.moments_p)?;
        let level = if spec.p > 2.0 {
            base.min(cap * p_level_sharp(d, x, &spec.moments_2)?)
        } else {
            base
        };
        total += w.at_level(j) * level;
    }
    Ok(2.0 * epsilon.powf(spec.p) * total)
}

/// `pen^a(m)` evaluated through [`pen`] with the strategy's factors.
pub fn strategy_pen(model: &Model, spec: &PenaltySpec, strategy: Strategy, epsilon: f64, w: &WeightScheme) -> Result<f64> {
    let c = spec.constants;
    pen(model, spec, epsilon, w, |j, d| {
        x_factor(strategy, spec.p, j, d, &c).unwrap_or(f64::NAN)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gauss(p: f64) -> NoiseMoments {
        default_moments(p, &NoiseKind::StandardGaussian, None).unwrap()
    }

    #[test]
    fn gaussian_sigma() {
        assert!((sigma_p_gaussian(2.0).unwrap() - 1.0).abs() < 1e-12);
        assert!((sigma_p_gaussian(1.0).unwrap() - (2.0 / std::f64::consts::PI).sqrt()).abs() < 1e-12);
        assert!((sigma_p_gaussian(4.0).unwrap() - 3f64.powf(0.25)).abs() < 1e-12);
        assert!(sigma_p_gaussian(0.9).is_err());
    }

    #[test]
    fn gaussian_sigma_against_quadrature() {
        // Independent oracle: trapezoidal E|ξ|^p on [-12, 12].
        for p in [1.0, 1.5, 3.0] {
            let h = 1e-4;
            let n = (24.0 / h) as usize;
            let mut acc = 0.0;
            for i in 0..=n {
                let x = -12.0 + i as f64 * h;
                let f = x.abs().powf(p) * (-x * x / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt();
                acc += if i == 0 || i == n { 0.5 * f } else { f };
            }
            let sigma = (acc * h).powf(1.0 / p);
            assert!((sigma - sigma_p_gaussian(p).unwrap()).abs() < 1e-7, "p = {p}");
        }
    }

    #[test]
    fn tabulated_kappas() {
        assert_eq!(gauss(2.0).kappa_p, 4.0);
        let s1 = (2.0 / std::f64::consts::PI).sqrt();
        let expected = std::f64::consts::SQRT_2 * (std::f64::consts::SQRT_2 / (2.0 * s1)).max(1.0);
        assert!((gauss(1.0).kappa_p - expected).abs() < 1e-12);
        assert!(matches!(
            default_moments(3.0, &NoiseKind::StandardGaussian, None),
            Err(PcoError::Uncalibrated { .. })
        ));
    }

    #[test]
    fn table_lookup() {
        let mut t = MomentsTable::default();
        let m = NoiseMoments::new(2.0, 1.0, 0.05, 0.05).unwrap();
        t.insert(MomentsEntry {
            distribution: "rademacher".into(),
            moments: m,
            calibration_date: "x".into(),
        });
        assert_eq!(default_moments(2.0, &NoiseKind::Rademacher, Some(&t)).unwrap(), m);
        assert!(default_moments(3.0, &NoiseKind::Rademacher, Some(&t)).is_err());
    }

    #[test]
    fn level_values() {
        let m2 = gauss(2.0);
        assert_eq!(p_level(0, 0.0, &m2).unwrap(), 0.0);
        assert!((p_level(10, 5.0, &m2).unwrap() - 35.0).abs() < 1e-12);
        let m1 = gauss(1.0);
        let expected = 1.5 * m1.sigma_p * 4.0 + m1.kappa_p * 2.0;
        assert!((p_level(4, 1.0, &m1).unwrap() - expected).abs() < 1e-12);
        assert!((p_level_sharp(10, 5.0, &m2).unwrap() - 35.0).abs() < 1e-12);
        assert!((p_level_sharp(1, 1.0, &m2).unwrap() - 5.5).abs() < 1e-12);
        assert_eq!(p_level_sharp(0, 0.0, &m2).unwrap(), 0.0);
        assert!(matches!(p_level(3, 0.5, &m2), Err(PcoError::Precondition(_))));
    }

    #[test]
    fn x_factor_examples() {
        let c = StrategyConstants { k_i: 2.0, ..StrategyConstants::defaults(2.0) };
        assert_eq!(x_factor(Strategy::H, 2.0, 3, 1, &c).unwrap(), 1.0);
        let xi = x_factor(Strategy::I, 2.0, 5, 2, &c).unwrap();
        assert!((xi - 4.0 * (1.0 + 16f64.ln())).abs() < 1e-12);
        let c3 = StrategyConstants::defaults(3.0);
        assert_eq!(x_factor(Strategy::S, 3.0, 4, 2, &c3).unwrap(), 32.0);
        assert_eq!(x_factor(Strategy::S, 3.0, 0, 1, &c3).unwrap(), 1.0);
        assert_eq!(x_factor(Strategy::S, 3.0, -1, 1, &c3).unwrap(), 1.0);
        assert_eq!(x_factor(Strategy::S, 3.0, 4, 0, &c3).unwrap(), 0.0);
        assert!(matches!(x_factor(Strategy::Threshold(1.0), 2.0, 1, 1, &c), Err(PcoError::Config(_))));
        assert!("Q".parse::<Strategy>().is_err());
    }

    #[test]
    fn capped_penalty_hand_evaluation() {
        // p = 4, q = 5, N = 256, one level j = 3 with 8 coefficients, x = 12.
        let p = 4.0;
        let m4 = NoiseMoments::new(p, 3f64.powf(0.25), 1.7, 0.9).unwrap();
        let spec = PenaltySpec::new(p, 256, m4, gauss(2.0)).unwrap();
        assert_eq!(spec.q, 5.0);
        let model = Model::from_flat_indices(256, 8..16).unwrap();
        let eps = 0.3;
        let w = WeightScheme::Dyadic { p };
        let got = pen(&model, &spec, eps, &w, |_, _| 12.0).unwrap();
        // Hand evaluation.
        let kappa4 = 0.9 + 1.7 * (1.7f64 / (2.0 * 3.0)).max(1.0);
        let base = 1.5 * 3.0 * 8.0 + kappa4 * 2.0 * 1.0 * 144.0;
        let sharp = 1.5 * 8.0 + 4.0 * 12.0;
        let capf = 2.0 * 5.0 * 256f64.ln();
        let expected = 2.0 * eps.powi(4) * 8.0 * base.min(capf * sharp);
        assert!((got - expected).abs() < 1e-12 * expected);
    }

    #[test]
    fn cap_is_identity_at_p2() {
        let spec = PenaltySpec::new(2.0, 64, gauss(2.0), gauss(2.0)).unwrap();
        assert_eq!(spec.cap_factor(), 1.0);
        let model = Model::from_flat_indices(64, [0, 1, 2, 5, 9, 33]).unwrap();
        let w = WeightScheme::Dyadic { p: 2.0 };
        for strategy in [Strategy::H, Strategy::I, Strategy::S] {
            let sp = StrategyPenalty::new(&spec, strategy, 0.1, w);
            let capped: f64 = model
                .level_cardinalities()
                .unwrap()
                .iter()
                .enumerate()
                .map(|(s, &d)| sp.level_penalty(s as i32 - 1, d))
                .sum();
            let uncapped = strategy_pen(&model, &spec, strategy, 0.1, &w).unwrap();
            assert!((capped - uncapped).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_model_has_zero_penalty() {
        let spec = PenaltySpec::new(2.0, 16, gauss(2.0), gauss(2.0)).unwrap();
        let v = strategy_pen(&Model::empty(16), &spec, Strategy::S, 0.2, &WeightScheme::Constant).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn penalty_homogeneous_in_epsilon() {
        let p = 3.0;
        let m3 = NoiseMoments::new(p, NoiseKind::StandardGaussian.sigma_p(p), 2.0, 1.0).unwrap();
        let spec = PenaltySpec::new(p, 32, m3, gauss(2.0)).unwrap();
        let model = Model::from_flat_indices(32, [0, 1, 3, 4, 8, 9, 10, 20]).unwrap();
        let w = WeightScheme::Dyadic { p };
        for s in [Strategy::H, Strategy::I, Strategy::S] {
            let a = strategy_pen(&model, &spec, s, 0.2, &w).unwrap();
            let b = strategy_pen(&model, &spec, s, 0.1, &w).unwrap();
            assert!((a / b - 8.0).abs() < 1e-12);
        }
    }

    #[test]
    fn h_factor_satisfies_growth_condition() {
        for p in [1.0, 2.0, 3.0, 6.0] {
            let c = StrategyConstants::defaults(p);
            let mut worst: f64 = 0.0;
            let mut d = 1usize;
            while d <= 1 << 20 {
                let x = x_factor(Strategy::H, p, 20, d, &c).unwrap();
                worst = worst.max(x / (d as f64).powf(2.0 / p.max(2.0)));
                d += 1 + d / 64;
            }
            assert!(worst.is_finite() && worst < 10.0, "p = {p}: {worst}");
        }
    }

    #[test]
    fn pen_requires_positive_epsilon() {
        let spec = PenaltySpec::new(2.0, 8, gauss(2.0), gauss(2.0)).unwrap();
        assert!(strategy_pen(&Model::full(8), &spec, Strategy::S, 0.0, &WeightScheme::Constant).is_err());
    }
}
