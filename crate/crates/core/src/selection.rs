//! PCO model selection.
//!
//! `Crit(m) = −Σ_{λ∈m} w_λ |Y_λ|^p + pen(m)`. Every penalty used here depends
//! on a level only through `|m_j|`, so inside a level the best model of a
//! given size keeps the largest `|Y_{jk}|`. The fast routines sort each level
//! once and then scan cardinalities; [`brute_force_argmin`] enumerates the
//! collections directly and serves as the test oracle.
//!
//! Ties are broken deterministically: strategy order `H < I < S`, then the
//! smaller `|m|`, then the lexicographically smaller index list. Equal `|Y|`
//! inside a level are ordered by smaller `k` first.

use std::cmp::Ordering;

use itertools::Itertools;

use crate::error::{bail, PcoError, Result};
use crate::penalty::{
    p_level, x_factor, ICardinality, LevelPenalty, PenaltySpec, Strategy, StrategyPenalty, ThresholdPenalty,
};
use crate::sequence::{
    abs_pow, level_len, level_range, projection_estimate, Model, ObservationSet, SignalSequence, WeightScheme,
};

/// Outcome of a selection.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionResult {
    pub model: Model,
    pub strategy: Strategy,
    pub crit_value: f64,
    /// `|m_j|` for `j = −1..=J` (a single entry in flat mode).
    pub level_cardinalities: Vec<usize>,
    /// The cut `L` for strategies H and I, the prefix length in flat mode.
    pub cut_level: Option<i32>,
}

impl SelectionResult {
    pub fn cardinality(&self) -> usize {
        self.level_cardinalities.iter().sum()
    }
}

/// `true` when candidate `a` beats `b` under the tie-break rule.
fn beats(a: (f64, u8, usize), am: &Model, b: (f64, u8, usize), bm: &Model) -> bool {
    match a.0.partial_cmp(&b.0) {
        Some(Ordering::Less) => return true,
        Some(Ordering::Greater) => return false,
        _ => {}
    }
    match a.1.cmp(&b.1).then(a.2.cmp(&b.2)) {
        Ordering::Less => true,
        Ordering::Greater => false,
        Ordering::Equal => am.cmp_lex(bm) == Ordering::Less,
    }
}

fn check_p_matches(spec: &PenaltySpec) -> f64 {
    spec.p
}

/// One level sorted by decreasing `|Y_{jk}|` (ties: smaller `k` first), with
/// weighted prefix gains `prefix[d] = ω_j Σ_{i<d} |Y|^p`.
#[derive(Debug, Clone)]
struct LevelOrder {
    order: Vec<usize>,
    prefix: Vec<f64>,
    /// `ω_j |Y|^p` in sorted order.
    gains: Vec<f64>,
}

/// All levels of an observation set, sorted once.
#[derive(Debug, Clone)]
pub struct SortedLevels {
    top: i32,
    n: usize,
    levels: Vec<LevelOrder>,
}

impl SortedLevels {
    pub fn new(obs: &ObservationSet, w: &WeightScheme, p: f64) -> Result<Self> {
        let top = obs.require_top_level()?;
        let levels = (-1..=top)
            .map(|j| {
                let ys = obs.level(j);
                let mut order: Vec<usize> = (0..ys.len()).collect();
                order.sort_by(|&a, &b| ys[b].abs().total_cmp(&ys[a].abs()).then(a.cmp(&b)));
                let wj = w.at_level(j);
                let mut prefix = Vec::with_capacity(ys.len() + 1);
                let mut acc = 0.0;
                prefix.push(0.0);
                for &k in &order {
                    acc += abs_pow(ys[k], p);
                    prefix.push(wj * acc);
                }
                let gains = order.iter().map(|&k| wj * abs_pow(ys[k], p)).collect();
                LevelOrder { order, prefix, gains }
            })
            .collect();
        Ok(Self {
            top,
            n: obs.len(),
            levels,
        })
    }

    pub fn top_level(&self) -> i32 {
        self.top
    }

    fn level(&self, j: i32) -> &LevelOrder {
        &self.levels[(j + 1) as usize]
    }

    /// Model keeping the top `cards[j+1]` coefficients of each level.
    fn model_for(&self, cards: &[usize]) -> Model {
        let mut model = Model::empty(self.n);
        for (slot, &d) in cards.iter().enumerate() {
            let j = slot as i32 - 1;
            let start = level_range(j).start;
            for &k in &self.level(j).order[..d] {
                model.insert(start + k);
            }
        }
        model
    }

    /// `Σ_j (pen_j(d_j) − prefix_j(d_j))`.
    fn crit_for<P: LevelPenalty + ?Sized>(&self, cards: &[usize], pen: &P) -> f64 {
        cards
            .iter()
            .enumerate()
            .map(|(slot, &d)| {
                let j = slot as i32 - 1;
                pen.level_penalty(j, d) - self.level(j).prefix[d]
            })
            .sum()
    }
}

/// `|m_{L+l}|` in strategy I, capped at the level size.
pub fn i_cardinality(cut: i32, j: i32, p: f64, rule: ICardinality) -> usize {
    if j < cut {
        return level_len(j);
    }
    let l = (j - cut) as f64;
    let decay = match rule {
        ICardinality::Regression if p > 2.0 => 1.5 * p,
        _ => 3.0,
    };
    let v = (j as f64 - l * p / 2.0).exp2() / (l + 1.0).powf(decay);
    let v = (v * (1.0 + 1e-12)).floor();
    (v as usize).min(level_len(j))
}

fn i_cards(top: i32, cut: i32, p: f64, rule: ICardinality) -> Vec<usize> {
    (-1..=top).map(|j| i_cardinality(cut, j, p, rule)).collect()
}

fn h_cards(top: i32, cut: i32) -> Vec<usize> {
    (-1..=top)
        .map(|j| if j <= cut { level_len(j) } else { 0 })
        .collect()
}

/// Exact minimiser over the full collection (every subset of every level)
/// for an arbitrary cardinality-based penalty.
pub fn argmin_full_collection<P: LevelPenalty + ?Sized>(
    obs: &ObservationSet,
    w: &WeightScheme,
    p: f64,
    pen: &P,
    strategy: Strategy,
) -> Result<SelectionResult> {
    let sorted = SortedLevels::new(obs, w, p)?;
    Ok(argmin_full_sorted(&sorted, pen, strategy))
}

fn argmin_full_sorted<P: LevelPenalty + ?Sized>(sorted: &SortedLevels, pen: &P, strategy: Strategy) -> SelectionResult {
    // Scan cumulative marginal terms: a zero marginal term (an exact tie)
    // never moves the running value, so the smaller size keeps the tie.
    let mut cards = Vec::with_capacity(sorted.levels.len());
    for j in -1..=sorted.top {
        let lvl = sorted.level(j);
        let mut best_d = 0;
        let mut best = 0.0;
        let mut run = 0.0;
        for (i, &g) in lvl.gains.iter().enumerate() {
            run += pen.increment(j, i + 1) - g;
            if run < best {
                best = run;
                best_d = i + 1;
            }
        }
        cards.push(best_d);
    }
    SelectionResult {
        model: sorted.model_for(&cards),
        strategy,
        crit_value: sorted.crit_for(&cards, pen),
        level_cardinalities: cards,
        cut_level: None,
    }
}

/// Strategy S: full per-level subset collection with `x^S = K_S |m_j| j`.
#[allow(non_snake_case)]
pub fn argmin_S(obs: &ObservationSet, spec: &PenaltySpec, w: &WeightScheme) -> Result<SelectionResult> {
    let sorted = SortedLevels::new(obs, w, check_p_matches(spec))?;
    Ok(argmin_s_sorted(&sorted, obs.epsilon(), spec, w))
}

fn argmin_s_sorted(sorted: &SortedLevels, epsilon: f64, spec: &PenaltySpec, w: &WeightScheme) -> SelectionResult {
    let pen = StrategyPenalty::new(spec, Strategy::S, epsilon, *w);
    argmin_full_sorted(sorted, &pen, Strategy::S)
}

fn argmin_cut_sorted<F>(
    sorted: &SortedLevels,
    pen: &StrategyPenalty<'_>,
    strategy: Strategy,
    cards_for: F,
) -> SelectionResult
where
    F: Fn(i32) -> Vec<usize>,
{
    let mut best: Option<(f64, usize, i32, Vec<usize>)> = None;
    for cut in 0..=sorted.top {
        let cards = cards_for(cut);
        let c = sorted.crit_for(&cards, pen);
        let size: usize = cards.iter().sum();
        let better = match &best {
            None => true,
            Some((bc, bs, _, bcards)) => {
                let a = sorted.model_for(&cards);
                let b = sorted.model_for(bcards);
                beats((c, 0, size), &a, (*bc, 0, *bs), &b)
            }
        };
        if better {
            best = Some((c, size, cut, cards));
        }
    }
    let (crit_value, _, cut, cards) = best.expect("at least one cut level");
    SelectionResult {
        model: sorted.model_for(&cards),
        strategy,
        crit_value,
        level_cardinalities: cards,
        cut_level: Some(cut),
    }
}

/// Strategy H: nested cuts `m_j = Λ_j` for `j ≤ L`, `∅` above, scanned over
/// `L = 0..=J`.
#[allow(non_snake_case)]
pub fn argmin_H(obs: &ObservationSet, spec: &PenaltySpec, w: &WeightScheme) -> Result<SelectionResult> {
    let sorted = SortedLevels::new(obs, w, spec.p)?;
    Ok(argmin_h_sorted(&sorted, obs.epsilon(), spec, w))
}

fn argmin_h_sorted(sorted: &SortedLevels, epsilon: f64, spec: &PenaltySpec, w: &WeightScheme) -> SelectionResult {
    let pen = StrategyPenalty::new(spec, Strategy::H, epsilon, *w);
    let top = sorted.top;
    argmin_cut_sorted(sorted, &pen, Strategy::H, |cut| h_cards(top, cut))
}

/// Strategy I: full levels below `L`, then the largest
/// `⌊2^{L+l} 2^{−lp/2} (l+1)^{−3}⌋` coefficients at level `L + l`.
#[allow(non_snake_case)]
pub fn argmin_I(obs: &ObservationSet, spec: &PenaltySpec, w: &WeightScheme) -> Result<SelectionResult> {
    let sorted = SortedLevels::new(obs, w, spec.p)?;
    Ok(argmin_i_sorted(&sorted, obs.epsilon(), spec, w))
}

fn argmin_i_sorted(sorted: &SortedLevels, epsilon: f64, spec: &PenaltySpec, w: &WeightScheme) -> SelectionResult {
    let pen = StrategyPenalty::new(spec, Strategy::I, epsilon, *w);
    let top = sorted.top;
    let (p, rule) = (spec.p, spec.constants.i_cardinality);
    argmin_cut_sorted(sorted, &pen, Strategy::I, |cut| i_cards(top, cut, p, rule))
}

/// Flat nested collection `{1..k}`, `k = 1..=N`, with `x_m = a log|m|` and
/// constant weights.
pub fn argmin_flat(obs: &ObservationSet, spec: &PenaltySpec, w: &WeightScheme) -> Result<SelectionResult> {
    require_constant_weights(w, spec.p)?;
    let p = spec.p;
    let eps_p = obs.epsilon().powf(p);
    let mut best: Option<(f64, usize)> = None;
    let mut gain = 0.0;
    for k in 1..=obs.len() {
        gain += abs_pow(obs.y()[k - 1], p);
        let c = flat_penalty(k, spec, eps_p)? - gain;
        if best.is_none_or(|(bc, _)| c < bc) {
            best = Some((c, k));
        }
    }
    let (crit_value, k) = best.expect("N >= 1");
    Ok(SelectionResult {
        model: Model::prefix(obs.len(), k),
        strategy: Strategy::FlatNested,
        crit_value,
        level_cardinalities: vec![k],
        cut_level: Some(k as i32),
    })
}

fn require_constant_weights(w: &WeightScheme, p: f64) -> Result<()> {
    match w {
        WeightScheme::Constant => Ok(()),
        WeightScheme::Dyadic { p: wp } if *wp == 2.0 => {
            let _ = p;
            Ok(())
        }
        _ => bail!(Config, "the flat nested collection uses constant weights"),
    }
}

fn flat_penalty(d: usize, spec: &PenaltySpec, eps_p: f64) -> Result<f64> {
    let x = x_factor(Strategy::FlatNested, spec.p, 0, d, &spec.constants)?;
    Ok(2.0 * eps_p * p_level(d, x, &spec.moments_p)?)
}

/// Minimiser over the union of the enabled collections.
pub fn argmin_overall(
    obs: &ObservationSet,
    spec: &PenaltySpec,
    w: &WeightScheme,
    strategies: &[Strategy],
) -> Result<SelectionResult> {
    if strategies.is_empty() {
        bail!(Config, "no strategy enabled");
    }
    let needs_sorted = strategies
        .iter()
        .any(|s| matches!(s, Strategy::H | Strategy::I | Strategy::S | Strategy::Threshold(_)));
    let sorted = if needs_sorted {
        Some(SortedLevels::new(obs, w, spec.p)?)
    } else {
        None
    };
    let mut best: Option<SelectionResult> = None;
    for &s in strategies {
        let eps = obs.epsilon();
        let r = match (s, &sorted) {
            (Strategy::H, Some(so)) => argmin_h_sorted(so, eps, spec, w),
            (Strategy::I, Some(so)) => argmin_i_sorted(so, eps, spec, w),
            (Strategy::S, Some(so)) => argmin_s_sorted(so, eps, spec, w),
            (Strategy::Threshold(t), Some(so)) => {
                argmin_full_sorted(so, &ThresholdPenalty { t, p: spec.p, weights: *w }, s)
            }
            (Strategy::FlatNested, _) => argmin_flat(obs, spec, w)?,
            _ => unreachable!("sorted levels computed for dyadic strategies"),
        };
        best = Some(match best {
            None => r,
            Some(b) => {
                let ka = (r.crit_value, s.rank(), r.cardinality());
                let kb = (b.crit_value, b.strategy.rank(), b.cardinality());
                if beats(ka, &r.model, kb, &b.model) {
                    r
                } else {
                    b
                }
            }
        });
    }
    Ok(best.expect("non-empty strategy list"))
}

/// `θ̃ = θ̂^(m̂)`.
pub fn pco_estimate(obs: &ObservationSet, result: &SelectionResult) -> Result<SignalSequence> {
    projection_estimate(obs, &result.model)
}

/// Hard thresholding `{λ : |Y_λ| > t}`.
pub fn threshold_estimate(obs: &ObservationSet, t: f64, _w: &WeightScheme, _p: f64) -> Result<(Model, SignalSequence)> {
    if !(t > 0.0) {
        bail!(Domain, "threshold must be > 0, got {t}");
    }
    let model = Model::from_mask(obs.y().iter().map(|y| y.abs() > t).collect());
    let est = projection_estimate(obs, &model)?;
    Ok((model, est))
}

/// `−Σ_{λ∈m} w_λ |Y_λ|^p`.
fn fit_term(obs: &ObservationSet, m: &Model, w: &WeightScheme, p: f64) -> f64 {
    -m.flat_indices().map(|i| w.at(i) * abs_pow(obs.y()[i], p)).sum::<f64>()
}

/// `Crit(m)` with the penalty of `strategy`.
///
/// Fails with [`PcoError::InvalidModel`] when `m` is not in the strategy's
/// collection.
pub fn crit(
    obs: &ObservationSet,
    m: &Model,
    strategy: Strategy,
    spec: &PenaltySpec,
    w: &WeightScheme,
) -> Result<f64> {
    if m.ambient_len() != obs.len() {
        bail!(InvalidModel, "model spans {} coordinates, N = {}", m.ambient_len(), obs.len());
    }
    let p = spec.p;
    let fit = fit_term(obs, m, w, p);
    match strategy {
        Strategy::Threshold(t) => {
            let pen: f64 = m.flat_indices().map(|i| w.at(i) * t.powf(p)).sum();
            Ok(fit + pen)
        }
        Strategy::FlatNested => {
            require_constant_weights(w, p)?;
            let d = m.cardinality();
            if d == 0 || !m.mask()[..d].iter().all(|&b| b) {
                bail!(InvalidModel, "not a non-empty prefix model");
            }
            Ok(fit + flat_penalty(d, spec, obs.epsilon().powf(p))?)
        }
        Strategy::H | Strategy::I | Strategy::S => {
            let cards = m.level_cardinalities()?;
            let top = obs.require_top_level()?;
            admissible_cut(&cards, top, strategy, spec)?;
            let pen = StrategyPenalty::new(spec, strategy, obs.epsilon(), *w);
            let total: f64 = cards
                .iter()
                .enumerate()
                .map(|(s, &d)| pen.level_penalty(s as i32 - 1, d))
                .sum();
            Ok(fit + total)
        }
    }
}

/// `Crit(m)` for an arbitrary cardinality-based penalty (any subset admissible).
pub fn crit_with<P: LevelPenalty + ?Sized>(
    obs: &ObservationSet,
    m: &Model,
    w: &WeightScheme,
    p: f64,
    pen: &P,
) -> Result<f64> {
    if m.ambient_len() != obs.len() {
        bail!(InvalidModel, "model spans {} coordinates, N = {}", m.ambient_len(), obs.len());
    }
    let cards = m.level_cardinalities()?;
    let total: f64 = cards
        .iter()
        .enumerate()
        .map(|(s, &d)| pen.level_penalty(s as i32 - 1, d))
        .sum();
    Ok(fit_term(obs, m, w, p) + total)
}

/// The cut level certifying membership of a model with these level sizes.
fn admissible_cut(cards: &[usize], top: i32, strategy: Strategy, spec: &PenaltySpec) -> Result<Option<i32>> {
    match strategy {
        Strategy::S => Ok(None),
        Strategy::H => (0..=top)
            .find(|&cut| h_cards(top, cut) == cards)
            .map(Some)
            .ok_or_else(|| PcoError::InvalidModel("not a nested full-level cut".into())),
        Strategy::I => (0..=top)
            .find(|&cut| i_cards(top, cut, spec.p, spec.constants.i_cardinality) == cards)
            .map(Some)
            .ok_or_else(|| PcoError::InvalidModel("level sizes do not match any strategy-I cut".into())),
        _ => Ok(None),
    }
}

/// Largest collection the exhaustive search accepts.
pub const BRUTE_FORCE_LIMIT: u128 = 1_000_000;

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

/// Number of models in a strategy's collection on `N` coordinates.
pub fn collection_size(n: usize, strategy: Strategy, spec: &PenaltySpec) -> u128 {
    let top = crate::sequence::top_level_for_len(n);
    match (strategy, top) {
        (Strategy::S | Strategy::Threshold(_), _) => {
            if n >= 127 {
                u128::MAX
            } else {
                1u128 << n
            }
        }
        (Strategy::FlatNested, _) => n as u128,
        (Strategy::H, Some(t)) => (t + 1) as u128,
        (Strategy::I, Some(t)) => (0..=t)
            .map(|cut| {
                i_cards(t, cut, spec.p, spec.constants.i_cardinality)
                    .iter()
                    .enumerate()
                    .map(|(s, &d)| binomial(level_len(s as i32 - 1), d))
                    .product::<u128>()
            })
            .sum(),
        _ => 0,
    }
}

/// Calls `f` on every model of the collection, in a fixed order.
fn for_each_model<F>(n: usize, strategy: Strategy, spec: &PenaltySpec, mut f: F) -> Result<()>
where
    F: FnMut(Model) -> Result<()>,
{
    let size = collection_size(n, strategy, spec);
    if size > BRUTE_FORCE_LIMIT {
        return Err(PcoError::TooLarge {
            count: size,
            limit: BRUTE_FORCE_LIMIT,
        });
    }
    match strategy {
        Strategy::S | Strategy::Threshold(_) => {
            for bits in 0u64..(1u64 << n) {
                f(Model::from_mask((0..n).map(|i| bits >> i & 1 == 1).collect()))?;
            }
        }
        Strategy::FlatNested => {
            for k in 1..=n {
                f(Model::prefix(n, k))?;
            }
        }
        Strategy::H | Strategy::I => {
            let top = crate::sequence::top_level_for_len(n)
                .ok_or_else(|| PcoError::Geometry(format!("N = {n} is not dyadic")))?;
            for cut in 0..=top {
                let cards = if strategy == Strategy::H {
                    h_cards(top, cut)
                } else {
                    i_cards(top, cut, spec.p, spec.constants.i_cardinality)
                };
                let per_level: Vec<Vec<Vec<usize>>> = cards
                    .iter()
                    .enumerate()
                    .map(|(s, &d)| {
                        let j = s as i32 - 1;
                        level_range(j).combinations(d).collect()
                    })
                    .collect();
                for choice in per_level.iter().multi_cartesian_product() {
                    f(Model::from_flat_indices(n, choice.into_iter().flatten().copied())?)?;
                }
            }
        }
    }
    Ok(())
}

/// Exhaustive minimisation of `crit_fn` over a strategy's collection.
pub fn brute_force_argmin_with<F>(
    obs: &ObservationSet,
    spec: &PenaltySpec,
    strategy: Strategy,
    crit_fn: F,
) -> Result<SelectionResult>
where
    F: Fn(&Model) -> Result<f64>,
{
    let mut best: Option<(f64, usize, Model)> = None;
    for_each_model(obs.len(), strategy, spec, |m| {
        let c = crit_fn(&m)?;
        let size = m.cardinality();
        let better = match &best {
            None => true,
            Some((bc, bs, bm)) => beats((c, 0, size), &m, (*bc, 0, *bs), bm),
        };
        if better {
            best = Some((c, size, m));
        }
        Ok(())
    })?;
    let (crit_value, _, model) = best.ok_or_else(|| PcoError::InvalidModel("empty collection".into()))?;
    let top = obs.top_level();
    let level_cardinalities = match strategy {
        Strategy::FlatNested => vec![model.cardinality()],
        _ => model.level_cardinalities()?,
    };
    let cut_level = match (strategy, top) {
        (Strategy::H | Strategy::I, Some(t)) => admissible_cut(&level_cardinalities, t, strategy, spec)?,
        (Strategy::FlatNested, _) => Some(model.cardinality() as i32),
        _ => None,
    };
    Ok(SelectionResult {
        model,
        strategy,
        crit_value,
        level_cardinalities,
        cut_level,
    })
}

/// Exhaustive minimisation of [`crit`] over a strategy's collection.
pub fn brute_force_argmin(
    obs: &ObservationSet,
    spec: &PenaltySpec,
    w: &WeightScheme,
    strategy: Strategy,
) -> Result<SelectionResult> {
    brute_force_argmin_with(obs, spec, strategy, |m| crit(obs, m, strategy, spec, w))
}

/// Exhaustive minimisation over the union `{(m, a)}` of several collections.
pub fn brute_force_overall(
    obs: &ObservationSet,
    spec: &PenaltySpec,
    w: &WeightScheme,
    strategies: &[Strategy],
) -> Result<SelectionResult> {
    if strategies.is_empty() {
        bail!(Config, "no strategy enabled");
    }
    let mut best: Option<SelectionResult> = None;
    for &s in strategies {
        let r = brute_force_argmin(obs, spec, w, s)?;
        best = Some(match best {
            Some(b)
                if !beats(
                    (r.crit_value, s.rank(), r.cardinality()),
                    &r.model,
                    (b.crit_value, b.strategy.rank(), b.cardinality()),
                    &b.model,
                ) =>
            {
                b
            }
            _ => r,
        });
    }
    Ok(best.expect("non-empty"))
}
