//! The sequence model `Y = θ + ε ξ` on a dyadic index space.
//!
//! Coefficients are stored flat in level-major order: index 0 is `(−1, 0)` and
//! level `j ≥ 0` occupies the half-open range `[2^j, 2^{j+1})`. The first `N`
//! flat coordinates of a dyadic sequence with `N = 2^{J+1}` are therefore
//! exactly the levels `−1..=J`. Flat (non-dyadic) sequences use the same
//! storage with constant weights, so nested prefix models are prefixes of
//! this order.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{bail, PcoError, Result};
use crate::rng::{experiment, stream_rng};

/// Number of coefficients at level `j` (`|K_{-1}| = 1`, `|K_j| = 2^j`).
pub fn level_len(j: i32) -> usize {
    if j < 0 {
        1
    } else {
        1usize << j
    }
}

/// Flat index range of level `j`.
pub fn level_range(j: i32) -> Range<usize> {
    if j < 0 {
        0..1
    } else {
        let start = 1usize << j;
        start..2 * start
    }
}

/// Level of a flat index.
pub fn level_of(flat: usize) -> i32 {
    if flat == 0 {
        -1
    } else {
        (usize::BITS - 1 - flat.leading_zeros()) as i32
    }
}

/// Top level `J` of a dyadic vector of length `n = 2^{J+1}`, if `n` is one.
pub fn top_level_for_len(n: usize) -> Option<i32> {
    if n >= 1 && n.is_power_of_two() {
        Some(n.trailing_zeros() as i32 - 1)
    } else {
        None
    }
}

/// Length `2^{J+1}` of the dyadic space with top level `top`.
pub fn len_for_top_level(top: i32) -> usize {
    1usize << (top + 1)
}

/// Position `(j, k)` in the dyadic index space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DyadicIndex {
    pub j: i32,
    pub k: usize,
}

impl DyadicIndex {
    pub fn new(j: i32, k: usize) -> Result<Self> {
        if j < -1 {
            bail!(Geometry, "level {j} below -1");
        }
        if k >= level_len(j) {
            bail!(Geometry, "position {k} outside level {j} (size {})", level_len(j));
        }
        Ok(Self { j, k })
    }

    pub fn flat(&self) -> usize {
        level_range(self.j).start + self.k
    }

    pub fn from_flat(flat: usize) -> Self {
        let j = level_of(flat);
        Self {
            j,
            k: flat - level_range(j).start,
        }
    }
}

impl fmt::Display for DyadicIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.j, self.k)
    }
}

/// Weights of the `ℓp(w)` loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WeightScheme {
    /// `w_λ = 1`.
    Constant,
    /// `w_{jk} = ω_j = 2^{j(p/2 − 1)}`, including `j = −1`.
    Dyadic { p: f64 },
}

impl WeightScheme {
    pub fn at_level(&self, j: i32) -> f64 {
        match *self {
            WeightScheme::Constant => 1.0,
            WeightScheme::Dyadic { p } => (j as f64 * (p / 2.0 - 1.0)).exp2(),
        }
    }

    pub fn at(&self, flat: usize) -> f64 {
        match self {
            WeightScheme::Constant => 1.0,
            WeightScheme::Dyadic { .. } => self.at_level(level_of(flat)),
        }
    }
}

/// `|x|^p` with fast paths for the common integer exponents.
#[inline]
pub fn abs_pow(x: f64, p: f64) -> f64 {
    let a = x.abs();
    if p == 2.0 {
        a * a
    } else if p == 1.0 {
        a
    } else if p == 4.0 {
        let s = a * a;
        s * s
    } else {
        a.powf(p)
    }
}

pub(crate) fn check_p(p: f64) -> Result<()> {
    if !(p >= 1.0) || !p.is_finite() {
        bail!(Domain, "loss index p = {p} must be a finite number >= 1");
    }
    Ok(())
}

/// A target sequence `θ`, stored in level-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalSequence {
    values: Vec<f64>,
    /// `false` when coefficients beyond the stored range may be non-zero.
    tail_is_zero: bool,
}

impl SignalSequence {
    /// A sequence whose coefficients beyond `values` are exactly zero.
    pub fn new(values: Vec<f64>) -> Self {
        Self {
            values,
            tail_is_zero: true,
        }
    }

    /// A truncation of a sequence whose tail is unknown. Bias terms computed
    /// from it are lower bounds.
    pub fn truncated(values: Vec<f64>) -> Self {
        Self {
            values,
            tail_is_zero: false,
        }
    }

    pub fn zeros(len: usize) -> Self {
        Self::new(vec![0.0; len])
    }

    /// Zero sequence holding levels `−1..=top`.
    pub fn zeros_to_level(top: i32) -> Self {
        Self::zeros(len_for_top_level(top))
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn tail_is_zero(&self) -> bool {
        self.tail_is_zero
    }

    /// `J_max` when the stored length is a power of two.
    pub fn top_level(&self) -> Option<i32> {
        top_level_for_len(self.values.len())
    }

    /// Coefficient at `idx`; zero beyond the stored range.
    pub fn get(&self, idx: DyadicIndex) -> f64 {
        self.values.get(idx.flat()).copied().unwrap_or(0.0)
    }

    pub fn set(&mut self, idx: DyadicIndex, value: f64) -> Result<()> {
        let f = idx.flat();
        match self.values.get_mut(f) {
            Some(slot) => {
                *slot = value;
                Ok(())
            }
            None => bail!(Geometry, "{idx} beyond stored range"),
        }
    }

    /// Coefficients of level `j` (empty if the level is not stored).
    pub fn level(&self, j: i32) -> &[f64] {
        let r = level_range(j);
        if r.end <= self.values.len() {
            &self.values[r]
        } else {
            &[]
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            values: self.values.iter().map(|v| c * v).collect(),
            tail_is_zero: self.tail_is_zero,
        }
    }

    /// Iterator over `(index, value)` pairs.
    pub fn iter(&self) -> impl Iterator<Item = (DyadicIndex, f64)> + '_ {
        self.values
            .iter()
            .enumerate()
            .map(|(i, &v)| (DyadicIndex::from_flat(i), v))
    }
}

/// Noise distributions, each satisfying `P(|ξ| ≥ t) ≤ 2 e^{−t²/2}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseKind {
    StandardGaussian,
    Rademacher,
    /// Uniform on `[−√3 c, √3 c]`, `0 < c ≤ 1`.
    UniformScaled { c: f64 },
}

impl NoiseKind {
    /// Uniform on `[−1, 1]`.
    pub const UNIFORM_UNIT: NoiseKind = NoiseKind::UniformScaled {
        c: 0.577_350_269_189_625_8,
    };

    pub fn validate(&self) -> Result<()> {
        if let NoiseKind::UniformScaled { c } = *self {
            // Variance-one uniform (c = 1) still meets the sub-Gaussian tail.
            if !(c > 0.0 && c <= 1.0) {
                bail!(Config, "uniform noise scale c = {c} must lie in (0, 1]");
            }
        }
        Ok(())
    }

    pub fn name(&self) -> &'static str {
        match self {
            NoiseKind::StandardGaussian => "gaussian",
            NoiseKind::Rademacher => "rademacher",
            NoiseKind::UniformScaled { .. } => "uniform",
        }
    }

    /// Label that round-trips through [`FromStr`].
    pub fn label(&self) -> String {
        match self {
            NoiseKind::UniformScaled { c } if *c != NoiseKind::UNIFORM_UNIT_C => {
                format!("uniform:{c}")
            }
            other => other.name().to_string(),
        }
    }

    const UNIFORM_UNIT_C: f64 = 0.577_350_269_189_625_8;

    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            NoiseKind::StandardGaussian => rng.sample(StandardNormal),
            NoiseKind::Rademacher => {
                if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
            NoiseKind::UniformScaled { c } => {
                let half = 3f64.sqrt() * c;
                rng.random_range(-half..half)
            }
        }
    }

    pub fn fill<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        for v in out {
            *v = self.sample(rng);
        }
    }

    /// `E|ξ|^p`, in closed form for every supported distribution.
    pub fn abs_moment(&self, p: f64) -> f64 {
        match *self {
            NoiseKind::StandardGaussian => {
                // 2^{p/2} Γ((p+1)/2) / √π
                (p / 2.0 * std::f64::consts::LN_2 + statrs::function::gamma::ln_gamma((p + 1.0) / 2.0)
                    - 0.5 * std::f64::consts::PI.ln())
                .exp()
            }
            NoiseKind::Rademacher => 1.0,
            NoiseKind::UniformScaled { c } => (3f64.sqrt() * c).powf(p) / (p + 1.0),
        }
    }

    /// `σ_p = (E|ξ|^p)^{1/p}`.
    pub fn sigma_p(&self, p: f64) -> f64 {
        self.abs_moment(p).powf(1.0 / p)
    }
}

impl FromStr for NoiseKind {
    type Err = PcoError;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        let kind = match lower.as_str() {
            "gaussian" | "normal" | "standard_gaussian" => NoiseKind::StandardGaussian,
            "rademacher" => NoiseKind::Rademacher,
            "uniform" | "uniform_scaled" => NoiseKind::UNIFORM_UNIT,
            other => match other.strip_prefix("uniform:") {
                Some(c) => NoiseKind::UniformScaled {
                    c: c.parse()
                        .map_err(|_| PcoError::Config(format!("bad uniform scale in {s:?}")))?,
                },
                None => bail!(Config, "unknown noise distribution {s:?}"),
            },
        };
        kind.validate()?;
        Ok(kind)
    }
}

/// A noise distribution together with the seed of its stream.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(kind: NoiseKind, seed: u64) -> Self {
        Self { kind, seed }
    }

    pub fn gaussian(seed: u64) -> Self {
        Self::new(NoiseKind::StandardGaussian, seed)
    }

    pub fn rng(&self) -> rand_chacha::ChaCha8Rng {
        stream_rng(self.seed, experiment::NOISE, 0)
    }
}

/// `count` i.i.d. draws from `spec`.
pub fn generate_noise(spec: &NoiseSpec, count: usize) -> Result<Vec<f64>> {
    if count == 0 {
        bail!(Precondition, "noise count must be >= 1");
    }
    spec.kind.validate()?;
    let mut rng = spec.rng();
    let mut out = vec![0.0; count];
    spec.kind.fill(&mut rng, &mut out);
    Ok(out)
}

/// Realised observations `Y_λ`, `λ ∈ Λ^(N)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSet {
    y: Vec<f64>,
    epsilon: f64,
}

impl ObservationSet {
    pub fn new(y: Vec<f64>, epsilon: f64) -> Result<Self> {
        if y.is_empty() {
            bail!(Geometry, "observation set must hold at least one coordinate");
        }
        if !(epsilon >= 0.0) || !epsilon.is_finite() {
            bail!(Domain, "noise level {epsilon} must be finite and >= 0");
        }
        Ok(Self { y, epsilon })
    }

    /// Observations on the dyadic space; `y.len()` must be `2^{J+1}`.
    pub fn dyadic(y: Vec<f64>, epsilon: f64) -> Result<Self> {
        if top_level_for_len(y.len()).is_none() || y.len() < 2 {
            bail!(Geometry, "dyadic observation length {} is not a power of two >= 2", y.len());
        }
        Self::new(y, epsilon)
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// `N`.
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// `J` when `N = 2^{J+1}`.
    pub fn top_level(&self) -> Option<i32> {
        top_level_for_len(self.y.len())
    }

    pub fn require_top_level(&self) -> Result<i32> {
        match self.top_level() {
            Some(j) if self.y.len() >= 2 => Ok(j),
            _ => bail!(Geometry, "observation length {} is not a power of two >= 2", self.y.len()),
        }
    }

    pub fn level(&self, j: i32) -> &[f64] {
        &self.y[level_range(j)]
    }
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&epsilon) {
        bail!(Domain, "noise level {epsilon} outside [0, 1]");
    }
    Ok(())
}

/// `Y_λ = θ_λ + ε ξ_λ` on the first `n` dyadic coordinates, `n = 2^{J+1}`.
pub fn observe(theta: &SignalSequence, epsilon: f64, spec: &NoiseSpec, n: usize) -> Result<ObservationSet> {
    if n < 2 || !n.is_power_of_two() {
        bail!(Geometry, "N = {n} is not a power of two >= 2");
    }
    let mut rng = spec.rng();
    observe_with(theta, epsilon, spec.kind, n, &mut rng)
}

/// Flat-mode observation of an arbitrary number of coordinates.
pub fn observe_flat(theta: &SignalSequence, epsilon: f64, spec: &NoiseSpec, n: usize) -> Result<ObservationSet> {
    if n == 0 {
        bail!(Geometry, "N must be >= 1");
    }
    let mut rng = spec.rng();
    observe_with(theta, epsilon, spec.kind, n, &mut rng)
}

/// Observation with a caller-supplied generator (used by Monte Carlo drivers).
pub fn observe_with<R: Rng + ?Sized>(
    theta: &SignalSequence,
    epsilon: f64,
    kind: NoiseKind,
    n: usize,
    rng: &mut R,
) -> Result<ObservationSet> {
    check_epsilon(epsilon)?;
    kind.validate()?;
    if theta.len() < n {
        bail!(Geometry, "signal stores {} coordinates, N = {n} requested", theta.len());
    }
    let mut y = theta.values()[..n].to_vec();
    for v in y.iter_mut() {
        *v += epsilon * kind.sample(rng);
    }
    ObservationSet::new(y, epsilon)
}

/// A model `m ⊆ Λ^(N)`, stored as a membership mask over the first `N`
/// coordinates.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Model {
    mask: Vec<bool>,
}

impl Model {
    pub fn empty(n: usize) -> Self {
        Self { mask: vec![false; n] }
    }

    pub fn full(n: usize) -> Self {
        Self { mask: vec![true; n] }
    }

    pub fn from_mask(mask: Vec<bool>) -> Self {
        Self { mask }
    }

    /// Prefix model `{1..k}` of the flat enumeration.
    pub fn prefix(n: usize, k: usize) -> Self {
        let mut mask = vec![false; n];
        mask[..k.min(n)].iter_mut().for_each(|b| *b = true);
        Self { mask }
    }

    pub fn from_flat_indices<I: IntoIterator<Item = usize>>(n: usize, indices: I) -> Result<Self> {
        let mut mask = vec![false; n];
        for i in indices {
            match mask.get_mut(i) {
                Some(b) => *b = true,
                None => bail!(InvalidModel, "index {} outside Λ^(N), N = {n}", DyadicIndex::from_flat(i)),
            }
        }
        Ok(Self { mask })
    }

    pub fn from_indices<I: IntoIterator<Item = DyadicIndex>>(n: usize, indices: I) -> Result<Self> {
        Self::from_flat_indices(n, indices.into_iter().map(|i| i.flat()))
    }

    /// `N`, the size of the ambient space.
    pub fn ambient_len(&self) -> usize {
        self.mask.len()
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn contains(&self, flat: usize) -> bool {
        self.mask.get(flat).copied().unwrap_or(false)
    }

    pub fn insert(&mut self, flat: usize) {
        self.mask[flat] = true;
    }

    /// `|m|`.
    pub fn cardinality(&self) -> usize {
        self.mask.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.mask.iter().any(|&b| b)
    }

    pub fn flat_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.mask.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i)
    }

    pub fn indices(&self) -> impl Iterator<Item = DyadicIndex> + '_ {
        self.flat_indices().map(DyadicIndex::from_flat)
    }

    /// `|m_j|` for `j = −1..=J`, indexed by `j + 1`.
    pub fn level_cardinalities(&self) -> Result<Vec<usize>> {
        let top = match top_level_for_len(self.mask.len()) {
            Some(t) => t,
            None => bail!(Geometry, "model over {} coordinates is not dyadic", self.mask.len()),
        };
        Ok((-1..=top)
            .map(|j| self.mask[level_range(j)].iter().filter(|&&b| b).count())
            .collect())
    }

    /// Lexicographic order of the sorted index lists.
    pub fn cmp_lex(&self, other: &Model) -> std::cmp::Ordering {
        self.flat_indices().cmp(other.flat_indices())
    }
}

/// `Σ_λ w_λ |v_λ|^p` over the stored coordinates.
pub fn weighted_lp_pow(v: &[f64], w: &WeightScheme, p: f64) -> f64 {
    crate::stats::compensated_sum(v.iter().enumerate().map(|(i, &x)| w.at(i) * abs_pow(x, p)))
}

/// `‖v‖_{ℓp(w)} = (Σ w_λ |v_λ|^p)^{1/p}`.
pub fn weighted_lp_norm(v: &SignalSequence, w: &WeightScheme, p: f64) -> Result<f64> {
    check_p(p)?;
    Ok(weighted_lp_pow(v.values(), w, p).powf(1.0 / p))
}

/// `‖a − b‖_{ℓp(w)}^p`, treating missing coordinates as zero.
pub fn weighted_lp_distance_pow(a: &[f64], b: &[f64], w: &WeightScheme, p: f64) -> f64 {
    let n = a.len().max(b.len());
    crate::stats::compensated_sum((0..n).map(|i| {
        let x = a.get(i).copied().unwrap_or(0.0) - b.get(i).copied().unwrap_or(0.0);
        w.at(i) * abs_pow(x, p)
    }))
}

/// `B_p(m) = Σ_{λ ∉ m} w_λ |θ_λ|^p`.
///
/// The sum runs over every stored coordinate of `θ`. When `θ` is a
/// truncation with unknown tail ([`SignalSequence::tail_is_zero`] is false)
/// the value is a lower bound.
pub fn bias_term(theta: &SignalSequence, m: &Model, w: &WeightScheme, p: f64) -> Result<f64> {
    check_p(p)?;
    if m.ambient_len() > theta.len() {
        bail!(InvalidModel, "model spans {} coordinates, signal stores {}", m.ambient_len(), theta.len());
    }
    let b = crate::stats::compensated_sum(
        theta
            .values()
            .iter()
            .enumerate()
            .filter(|(i, _)| !m.contains(*i))
            .map(|(i, &t)| w.at(i) * abs_pow(t, p)),
    );
    if !b.is_finite() {
        bail!(Domain, "weighted lp norm of the signal diverges");
    }
    Ok(b)
}

/// Realised `V_p(m) = Σ_{λ∈m} w_λ |Y_λ − θ_λ|^p = ε^p Σ_{λ∈m} w_λ |ξ_λ|^p`.
pub fn variance_term(
    obs: &ObservationSet,
    theta: &SignalSequence,
    m: &Model,
    w: &WeightScheme,
    p: f64,
) -> Result<f64> {
    check_p(p)?;
    if m.ambient_len() != obs.len() {
        bail!(InvalidModel, "model spans {} coordinates, Λ^(N) has {}", m.ambient_len(), obs.len());
    }
    if theta.len() < obs.len() {
        bail!(Geometry, "signal shorter than the observation set");
    }
    Ok(crate::stats::compensated_sum(
        m.flat_indices()
            .map(|i| w.at(i) * abs_pow(obs.y()[i] - theta.values()[i], p)),
    ))
}

/// The projection estimate `θ̂^(m) = (Y_λ 1_{λ∈m})_λ`, stored over Λ^(N).
pub fn projection_estimate(obs: &ObservationSet, m: &Model) -> Result<SignalSequence> {
    if m.ambient_len() != obs.len() {
        bail!(InvalidModel, "model spans {} coordinates, Λ^(N) has {}", m.ambient_len(), obs.len());
    }
    Ok(SignalSequence::new(
        obs.y()
            .iter()
            .zip(m.mask())
            .map(|(&y, &b)| if b { y } else { 0.0 })
            .collect(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_coords() -> SignalSequence {
        SignalSequence::new(vec![1.0, 0.5])
    }

    #[test]
    fn flat_index_roundtrip() {
        for f in 0..64 {
            let idx = DyadicIndex::from_flat(f);
            assert_eq!(idx.flat(), f);
            assert!(idx.k < level_len(idx.j));
        }
        assert_eq!(DyadicIndex::from_flat(0), DyadicIndex { j: -1, k: 0 });
        assert_eq!(DyadicIndex::from_flat(1), DyadicIndex { j: 0, k: 0 });
        assert_eq!(DyadicIndex::from_flat(5), DyadicIndex { j: 2, k: 1 });
        assert!(DyadicIndex::new(-1, 1).is_err());
        assert!(DyadicIndex::new(3, 8).is_err());
    }

    #[test]
    fn level_space_sizes() {
        let n: usize = (-1..=4).map(level_len).sum();
        assert_eq!(n, 32);
        assert_eq!(top_level_for_len(32), Some(4));
        assert_eq!(top_level_for_len(24), None);
    }

    #[test]
    fn weights() {
        let w = WeightScheme::Dyadic { p: 2.0 };
        assert!((-1..10).all(|j| w.at_level(j) == 1.0));
        let w4 = WeightScheme::Dyadic { p: 4.0 };
        assert_eq!(w4.at_level(3), 8.0);
        assert_eq!(w4.at_level(-1), 0.5);
        assert_eq!(WeightScheme::Constant.at_level(7), 1.0);
    }

    #[test]
    fn norm_examples() {
        let v = two_coords();
        let c = weighted_lp_norm(&v, &WeightScheme::Constant, 2.0).unwrap();
        assert!((c - 1.25f64.sqrt()).abs() < 1e-15);
        let d = weighted_lp_norm(&v, &WeightScheme::Dyadic { p: 2.0 }, 2.0).unwrap();
        assert_eq!(c, d);
        let single = SignalSequence::new(vec![2.0]);
        assert_eq!(weighted_lp_norm(&single, &WeightScheme::Constant, 1.0).unwrap(), 2.0);
        assert!(matches!(
            weighted_lp_norm(&v, &WeightScheme::Constant, 0.5),
            Err(PcoError::Domain(_))
        ));
    }

    #[test]
    fn bias_examples() {
        let theta = two_coords();
        let w = WeightScheme::Constant;
        assert_eq!(bias_term(&theta, &Model::full(2), &w, 2.0).unwrap(), 0.0);
        assert_eq!(bias_term(&theta, &Model::empty(2), &w, 2.0).unwrap(), 1.25);
        let first = Model::from_flat_indices(2, [0]).unwrap();
        assert_eq!(bias_term(&theta, &first, &w, 2.0).unwrap(), 0.25);
    }

    #[test]
    fn variance_example() {
        let theta = two_coords();
        let obs = ObservationSet::new(vec![1.2, 0.3], 0.1).unwrap();
        let m = Model::from_flat_indices(2, [0]).unwrap();
        let w = WeightScheme::Constant;
        let v = variance_term(&obs, &theta, &m, &w, 2.0).unwrap();
        let b = bias_term(&theta, &m, &w, 2.0).unwrap();
        assert!((v - 0.04).abs() < 1e-12);
        assert_eq!(b, 0.25);
        let est = projection_estimate(&obs, &m).unwrap();
        let direct = weighted_lp_distance_pow(est.values(), theta.values(), &w, 2.0);
        assert!((direct - 0.29).abs() < 1e-12);
        assert!((v + b - direct).abs() < 1e-12);
    }

    #[test]
    fn variance_rejects_foreign_model() {
        let theta = two_coords();
        let obs = ObservationSet::new(vec![1.2, 0.3], 0.1).unwrap();
        let m = Model::empty(4);
        assert!(matches!(
            variance_term(&obs, &theta, &m, &WeightScheme::Constant, 2.0),
            Err(PcoError::InvalidModel(_))
        ));
        assert!(Model::from_flat_indices(2, [5]).is_err());
    }

    #[test]
    fn zero_noise_is_exact() {
        let theta = SignalSequence::new((0..16).map(|i| i as f64 * 0.1).collect());
        let obs = observe(&theta, 0.0, &NoiseSpec::gaussian(3), 16).unwrap();
        assert_eq!(obs.y(), theta.values());
        let w = WeightScheme::Dyadic { p: 3.0 };
        for k in 0..=16 {
            let m = Model::prefix(16, k);
            assert_eq!(variance_term(&obs, &theta, &m, &w, 3.0).unwrap(), 0.0);
        }
    }

    #[test]
    fn zero_signal_gives_pure_noise() {
        let spec = NoiseSpec::gaussian(11);
        let obs = observe(&SignalSequence::zeros(8), 1.0, &spec, 8).unwrap();
        assert_eq!(obs.y(), generate_noise(&spec, 8).unwrap().as_slice());
    }

    #[test]
    fn observe_rejects_bad_geometry() {
        let theta = SignalSequence::zeros(32);
        let spec = NoiseSpec::gaussian(1);
        assert!(matches!(observe(&theta, 0.1, &spec, 12), Err(PcoError::Geometry(_))));
        assert!(matches!(observe(&theta, 0.1, &spec, 64), Err(PcoError::Geometry(_))));
        assert!(matches!(observe(&theta, 1.5, &spec, 16), Err(PcoError::Domain(_))));
        assert!(observe_flat(&theta, 0.1, &spec, 12).is_ok());
    }

    #[test]
    fn rademacher_support() {
        let xs = generate_noise(&NoiseSpec::new(NoiseKind::Rademacher, 5), 4).unwrap();
        assert!(xs.iter().all(|&x| x == 1.0 || x == -1.0));
    }

    #[test]
    fn noise_tags() {
        assert_eq!("gaussian".parse::<NoiseKind>().unwrap(), NoiseKind::StandardGaussian);
        assert_eq!("uniform".parse::<NoiseKind>().unwrap(), NoiseKind::UNIFORM_UNIT);
        assert_eq!(
            "uniform:1".parse::<NoiseKind>().unwrap(),
            NoiseKind::UniformScaled { c: 1.0 }
        );
        assert!(matches!("cauchy".parse::<NoiseKind>(), Err(PcoError::Config(_))));
        assert!("uniform:2".parse::<NoiseKind>().is_err());
        for k in [NoiseKind::StandardGaussian, NoiseKind::Rademacher, NoiseKind::UNIFORM_UNIT, NoiseKind::UniformScaled { c: 0.9 }] {
            assert_eq!(k.label().parse::<NoiseKind>().unwrap(), k);
        }
    }

    #[test]
    fn closed_form_moments() {
        let g = NoiseKind::StandardGaussian;
        assert!((g.abs_moment(2.0) - 1.0).abs() < 1e-12);
        assert!((g.abs_moment(4.0) - 3.0).abs() < 1e-12);
        assert!((NoiseKind::UNIFORM_UNIT.abs_moment(2.0) - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn lexicographic_order() {
        let a = Model::from_flat_indices(4, [0, 3]).unwrap();
        let b = Model::from_flat_indices(4, [1]).unwrap();
        assert_eq!(a.cmp_lex(&b), std::cmp::Ordering::Less);
        assert_eq!(a.level_cardinalities().unwrap(), vec![1, 0, 1]);
    }
}
