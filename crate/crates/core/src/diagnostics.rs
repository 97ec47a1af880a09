//! Dependence diagnostics for block maxima.
//!
//! The mixing functional `beta` compares `P(M_{p(1)+...+p(k)} <= v)` with the
//! product of the `k^d` sub-block probabilities obtained by cutting every axis
//! into `k` consecutive pieces. Block probabilities come from a closed form,
//! from exhaustive enumeration of a small moving-max field, or from Monte
//! Carlo. Maximizing over a finite split grid only yields a lower bound on the
//! true supremum.
//!
//! The Berman bound compares the Gaussian example field with its i.i.d.
//! counterpart at a level `u`.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::Serialize;

use crate::covariance::SeparableCovariance;
use crate::error::{invalid, Error, Result};
use crate::lattice::{max_in_box, MonotoneCurve, MultiIndex};
use crate::normal;
use crate::phantom::{model_label, EmpiricalLaw, LevelSequence, MaxLaw};
use crate::sampling::{pow_prob, FieldModel, Marginal};

/// Largest innovation count accepted by the enumeration oracle.
pub const ENUMERATION_SITE_LIMIT: usize = 25;

/// `k` parts `p(1), ..., p(k)` in `N_0^d`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct BlockSplit {
    pub parts: Vec<Vec<usize>>,
}

impl BlockSplit {
    pub fn new(parts: Vec<Vec<usize>>) -> Result<Self> {
        if parts.len() < 2 {
            return Err(invalid("k", "a split needs at least two parts"));
        }
        let d = parts[0].len();
        if d == 0 || parts.iter().any(|p| p.len() != d) {
            return Err(invalid(
                "parts",
                "all parts need the same positive dimension",
            ));
        }
        Ok(Self { parts })
    }

    /// The two-part split `(p, q)`.
    pub fn pair(p: Vec<usize>, q: Vec<usize>) -> Result<Self> {
        Self::new(vec![p, q])
    }

    pub fn k(&self) -> usize {
        self.parts.len()
    }

    pub fn dim(&self) -> usize {
        self.parts[0].len()
    }

    /// `p(1) + ... + p(k)`.
    pub fn total(&self) -> Vec<usize> {
        (0..self.dim())
            .map(|a| self.parts.iter().map(|p| p[a]).sum())
            .collect()
    }

    /// Extents of the `k^d` sub-blocks, `(p_1(i_1), ..., p_d(i_d))`.
    pub fn blocks(&self) -> Vec<Vec<usize>> {
        let k = self.k() as i64;
        let d = self.dim();
        MultiIndex::new(vec![0; d], vec![k - 1; d])
            .map(|i| {
                i.iter()
                    .enumerate()
                    .map(|(a, &j)| self.parts[j as usize][a])
                    .collect()
            })
            .collect()
    }

    pub fn check(&self, limit: &[usize]) -> Result<()> {
        if self.dim() != limit.len() {
            return Err(Error::DimensionMismatch {
                expected: limit.len(),
                got: self.dim(),
            });
        }
        for (a, (t, l)) in self.total().iter().zip(limit).enumerate() {
            if t > l {
                return Err(Error::SplitConstraint {
                    index: a,
                    limit: limit.to_vec(),
                });
            }
        }
        Ok(())
    }
}

/// `floor(T psi(n))`, componentwise.
pub fn split_limit(psi: &MonotoneCurve, t: f64, n: usize) -> Result<Vec<usize>> {
    if !(t > 0.0) {
        return Err(invalid("T", "must be positive"));
    }
    Ok(psi
        .point(n)?
        .iter()
        .map(|&x| (t * x as f64).floor() as usize)
        .collect())
}

/// Two-part splits with coordinates of `p` and `q` in
/// `{0, L/4, L/2, 3L/4, L}` (floored) and `p + q <= L`.
pub fn quarter_grid(limit: &[usize]) -> Vec<BlockSplit> {
    let per_axis: Vec<Vec<(usize, usize)>> = limit
        .iter()
        .map(|&l| {
            let mut marks = vec![0, l / 4, l / 2, 3 * l / 4, l];
            marks.dedup();
            let mut pairs = Vec::new();
            for &p in &marks {
                for &q in &marks {
                    if p + q <= l {
                        pairs.push((p, q));
                    }
                }
            }
            pairs
        })
        .collect();
    product_splits(
        &per_axis
            .iter()
            .map(|v| v.iter().map(|&(p, q)| vec![p, q]).collect())
            .collect::<Vec<_>>(),
    )
}

/// Every `k`-part split with `p(1) + ... + p(k) <= L`.
pub fn full_grid(limit: &[usize], k: usize) -> Result<Vec<BlockSplit>> {
    if k < 2 {
        return Err(invalid("k", "must be at least 2"));
    }
    let per_axis: Vec<Vec<Vec<usize>>> = limit.iter().map(|&l| compositions(l, k)).collect();
    Ok(product_splits(&per_axis))
}

// All k-tuples of nonnegative integers with sum <= l.
fn compositions(l: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(left: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for v in 0..=left {
            cur.push(v);
            rec(left - v, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(l, k, &mut Vec::with_capacity(k), &mut out);
    out
}

// Cartesian product of per-axis part tuples.
fn product_splits(per_axis: &[Vec<Vec<usize>>]) -> Vec<BlockSplit> {
    let d = per_axis.len();
    let hi: Vec<i64> = per_axis.iter().map(|v| v.len() as i64 - 1).collect();
    MultiIndex::new(vec![0; d], hi)
        .map(|sel| {
            let k = per_axis[0][0].len();
            let parts = (0..k)
                .map(|j| (0..d).map(|a| per_axis[a][sel[a] as usize][j]).collect())
                .collect();
            BlockSplit { parts }
        })
        .collect()
}

/// Source of `P(M_[1, extents] <= v)` at a fixed level.
pub trait BlockProbability {
    /// Probabilities for several extents. Empty blocks have probability 1.
    fn probabilities(&self, extents: &[Vec<usize>]) -> Result<Vec<f64>>;

    fn mode(&self) -> &'static str;
}

/// Closed-form block probabilities.
#[derive(Debug, Clone)]
pub struct ExactOracle<'a> {
    pub model: &'a FieldModel,
    pub level: f64,
}

impl BlockProbability for ExactOracle<'_> {
    fn probabilities(&self, extents: &[Vec<usize>]) -> Result<Vec<f64>> {
        extents
            .iter()
            .map(|e| {
                if e.contains(&0) {
                    return Ok(1.0);
                }
                self.model
                    .exact_block_max_cdf(e, self.level)
                    .ok_or_else(|| Error::Unsupported("no closed-form block-max law".into()))
            })
            .collect()
    }
    fn mode(&self) -> &'static str {
        "exact"
    }
}

/// Exhaustive enumeration over all innovation configurations of a moving-max
/// field with two-atom innovations.
#[derive(Debug, Clone)]
pub struct EnumerationOracle {
    window: Vec<usize>,
    atoms: [(f64, f64); 2],
    level: f64,
}

impl EnumerationOracle {
    pub fn new(model: &FieldModel, level: f64) -> Result<Self> {
        match model {
            FieldModel::MovingMax { window, innovation } => {
                innovation.validate()?;
                let atoms = innovation.atoms().ok_or_else(|| {
                    Error::Unsupported("enumeration needs two-atom innovations".into())
                })?;
                Ok(Self {
                    window: window.clone(),
                    atoms,
                    level,
                })
            }
            _ => Err(Error::Unsupported(
                "enumeration needs a moving-max model".into(),
            )),
        }
    }

    /// `P(M_[1, extents] <= v)` summed over all `2^sites` configurations.
    pub fn probability(&self, extents: &[usize]) -> Result<f64> {
        if extents.len() != self.window.len() {
            return Err(Error::DimensionMismatch {
                expected: self.window.len(),
                got: extents.len(),
            });
        }
        if extents.contains(&0) {
            return Ok(1.0);
        }
        let grid: Vec<usize> = extents
            .iter()
            .zip(&self.window)
            .map(|(n, w)| n + w - 1)
            .collect();
        let sites: usize = grid.iter().product();
        if sites > ENUMERATION_SITE_LIMIT {
            return Err(Error::EnumerationTooLarge {
                sites,
                limit: ENUMERATION_SITE_LIMIT,
            });
        }
        // Windows of each field site, as index lists into the innovation grid.
        let d = grid.len();
        let mut gstride = vec![1usize; d];
        for a in (0..d - 1).rev() {
            gstride[a] = gstride[a + 1] * grid[a + 1];
        }
        let field_sites: Vec<Vec<i64>> =
            MultiIndex::new(vec![0; d], extents.iter().map(|&n| n as i64 - 1).collect()).collect();
        let window_masks: Vec<u32> = field_sites
            .iter()
            .map(|k| {
                MultiIndex::new(
                    vec![0; d],
                    self.window.iter().map(|&w| w as i64 - 1).collect(),
                )
                .map(|off| {
                    (0..d)
                        .map(|a| (k[a] + off[a]) as usize * gstride[a])
                        .sum::<usize>()
                })
                .fold(0u32, |m, i| m | (1 << i))
            })
            .collect();
        let [(low, p_low), (high, _)] = self.atoms;
        let low_ok = low <= self.level;
        let high_ok = high <= self.level;
        let mut total = 0.0;
        // bit set = innovation takes the high atom
        for cfg in 0u32..(1u32 << sites) {
            let ok = window_masks.iter().all(|&m| {
                let has_high = cfg & m != 0;
                let has_low = !cfg & m != 0;
                (!has_high || high_ok) && (!has_low || low_ok)
            });
            if ok {
                let h = cfg.count_ones() as i32;
                total += p_low.powi(sites as i32 - h) * (1.0 - p_low).powi(h);
            }
        }
        Ok(total)
    }
}

impl BlockProbability for EnumerationOracle {
    fn probabilities(&self, extents: &[Vec<usize>]) -> Result<Vec<f64>> {
        let mut cache: HashMap<&[usize], f64> = HashMap::new();
        extents
            .iter()
            .map(|e| {
                if let Some(&p) = cache.get(e.as_slice()) {
                    return Ok(p);
                }
                let p = self.probability(e)?;
                cache.insert(e, p);
                Ok(p)
            })
            .collect()
    }
    fn mode(&self) -> &'static str {
        "exact"
    }
}

/// Monte Carlo block probabilities. Every replication draws one field on the
/// bounding rectangle and evaluates all requested corner blocks, so the
/// estimates share replications.
#[derive(Debug, Clone)]
pub struct MonteCarloOracle<'a> {
    pub model: &'a FieldModel,
    pub level: f64,
    pub reps: usize,
    pub seed: u64,
}

impl MonteCarloOracle<'_> {
    /// Indicator matrix `[rep][extent] = 1{M_extent <= v}`.
    fn indicators(&self, extents: &[Vec<usize>]) -> Result<Vec<Vec<bool>>> {
        if self.reps == 0 {
            return Err(invalid("reps", "need at least one replication"));
        }
        let d = extents.first().map(|e| e.len()).unwrap_or(0);
        let bound: Vec<usize> = (0..d)
            .map(|a| extents.iter().map(|e| e[a]).max().unwrap_or(1).max(1))
            .collect();
        let sampler = self.model.sampler(&bound)?;
        let ones = vec![1usize; d];
        Ok((0..self.reps as u64)
            .into_par_iter()
            .map(|r| {
                let s = sampler.sample(self.seed, r);
                extents
                    .iter()
                    .map(|e| {
                        e.contains(&0) || max_in_box(s.values(), &bound, &ones, e) <= self.level
                    })
                    .collect()
            })
            .collect())
    }
}

impl BlockProbability for MonteCarloOracle<'_> {
    fn probabilities(&self, extents: &[Vec<usize>]) -> Result<Vec<f64>> {
        let ind = self.indicators(extents)?;
        let r = ind.len() as f64;
        Ok((0..extents.len())
            .map(|j| ind.iter().filter(|row| row[j]).count() as f64 / r)
            .collect())
    }
    fn mode(&self) -> &'static str {
        "mc"
    }
}

/// Value of the functional at one split.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SplitValue {
    pub split: BlockSplit,
    /// `P(M_total <= v) - prod P(M_block <= v)`.
    pub signed: f64,
    /// Delta-method SE in Monte Carlo mode, 0 otherwise.
    pub se: f64,
}

/// A `beta` evaluation over a split grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BetaReport {
    pub functional: String,
    pub k: usize,
    pub grid: usize,
    pub level: f64,
    /// Max of `|signed|` over the grid; a lower bound on the functional.
    pub value: f64,
    pub argmax: Option<BlockSplit>,
    pub mode: String,
    pub se: f64,
    pub verdicts: BTreeMap<String, bool>,
}

fn distinct_extents(splits: &[BlockSplit]) -> (Vec<Vec<usize>>, HashMap<Vec<usize>, usize>) {
    let mut list = Vec::new();
    let mut index = HashMap::new();
    for s in splits {
        for e in std::iter::once(s.total()).chain(s.blocks()) {
            index.entry(e.clone()).or_insert_with(|| {
                list.push(e);
                list.len() - 1
            });
        }
    }
    (list, index)
}

/// `signed` for every split, using `probs[index[extent]]`.
fn split_values(
    splits: &[BlockSplit],
    probs: &[f64],
    index: &HashMap<Vec<usize>, usize>,
) -> Vec<f64> {
    splits
        .iter()
        .map(|s| {
            let whole = probs[index[&s.total()]];
            let prod: f64 = s.blocks().iter().map(|b| probs[index[b]]).product();
            whole - prod
        })
        .collect()
}

/// Evaluates the functional at every split with the given oracle.
pub fn evaluate_splits(
    oracle: &dyn BlockProbability,
    splits: &[BlockSplit],
) -> Result<Vec<SplitValue>> {
    let (extents, index) = distinct_extents(splits);
    let probs = oracle.probabilities(&extents)?;
    Ok(split_values(splits, &probs, &index)
        .into_iter()
        .zip(splits)
        .map(|(signed, s)| SplitValue {
            split: s.clone(),
            signed,
            se: 0.0,
        })
        .collect())
}

/// Monte Carlo evaluation with delta-method standard errors that account
/// for the shared replications.
pub fn evaluate_splits_mc(
    oracle: &MonteCarloOracle<'_>,
    splits: &[BlockSplit],
) -> Result<Vec<SplitValue>> {
    let (extents, index) = distinct_extents(splits);
    let ind = oracle.indicators(&extents)?;
    let r = ind.len() as f64;
    let probs: Vec<f64> = (0..extents.len())
        .map(|j| ind.iter().filter(|row| row[j]).count() as f64 / r)
        .collect();
    let signed = split_values(splits, &probs, &index);
    let out = splits
        .iter()
        .zip(signed)
        .map(|(s, signed)| {
            // gradient of P_total - prod P_b with respect to each distinct probability
            let mut grad: HashMap<usize, f64> = HashMap::new();
            *grad.entry(index[&s.total()]).or_default() += 1.0;
            let blocks: Vec<usize> = s.blocks().iter().map(|b| index[b]).collect();
            for (i, &bi) in blocks.iter().enumerate() {
                let others: f64 = blocks
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| j != i)
                    .map(|(_, &bj)| probs[bj])
                    .product();
                *grad.entry(bi).or_default() -= others;
            }
            let lin: Vec<f64> = ind
                .iter()
                .map(|row| {
                    grad.iter()
                        .map(|(&j, &g)| if row[j] { g } else { 0.0 })
                        .sum()
                })
                .collect();
            let mean = lin.iter().sum::<f64>() / r;
            let var = lin.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / r;
            SplitValue {
                split: s.clone(),
                signed,
                se: (var / r).sqrt(),
            }
        })
        .collect();
    Ok(out)
}

/// How block probabilities are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProbabilityMode {
    Exact,
    Enumerate,
    MonteCarlo { reps: usize, seed: u64 },
}

/// Evaluates every split with the oracle selected by `mode`.
pub fn evaluate_with_mode(
    mode: ProbabilityMode,
    model: &FieldModel,
    level: f64,
    splits: &[BlockSplit],
) -> Result<Vec<SplitValue>> {
    match mode {
        ProbabilityMode::Exact => evaluate_splits(&ExactOracle { model, level }, splits),
        ProbabilityMode::Enumerate => {
            evaluate_splits(&EnumerationOracle::new(model, level)?, splits)
        }
        ProbabilityMode::MonteCarlo { reps, seed } => evaluate_splits_mc(
            &MonteCarloOracle {
                model,
                level,
                reps,
                seed,
            },
            splits,
        ),
    }
}

/// Report for already evaluated splits.
pub fn beta_from_values(
    values: &[SplitValue],
    level: f64,
    mode: ProbabilityMode,
) -> Result<BetaReport> {
    let k = values
        .first()
        .map(|v| v.split.k())
        .ok_or_else(|| invalid("splits", "grid is empty"))?;
    let best = values
        .iter()
        .fold(None::<&SplitValue>, |b, v| match b {
            Some(b) if b.signed.abs() >= v.signed.abs() => Some(b),
            _ => Some(v),
        })
        .expect("grid is nonempty");
    Ok(BetaReport {
        functional: if k == 2 {
            "beta".into()
        } else {
            format!("beta_{k}")
        },
        k,
        grid: values.len(),
        level,
        value: best.signed.abs(),
        argmax: Some(best.split.clone()),
        mode: match mode {
            ProbabilityMode::MonteCarlo { .. } => "mc",
            _ => "exact",
        }
        .into(),
        se: best.se,
        verdicts: BTreeMap::new(),
    })
}

/// Functional over an explicit level and grid.
pub fn beta_from_oracle(
    mode: ProbabilityMode,
    model: &FieldModel,
    level: f64,
    splits: &[BlockSplit],
) -> Result<BetaReport> {
    let k = splits
        .first()
        .map(|s| s.k())
        .ok_or_else(|| invalid("splits", "grid is empty"))?;
    if splits.iter().any(|s| s.k() != k) {
        return Err(invalid(
            "splits",
            "all splits need the same number of parts",
        ));
    }
    beta_from_values(
        &evaluate_with_mode(mode, model, level, splits)?,
        level,
        mode,
    )
}

/// Two-part functional `beta_T^psi(n)` over the supplied grid, at level
/// `v_psi(n)` taken from `levels`.
#[allow(clippy::too_many_arguments)]
pub fn beta_estimate(
    model: &FieldModel,
    psi: &MonotoneCurve,
    levels: &LevelSequence,
    t: f64,
    n: usize,
    splits: &[BlockSplit],
    mode: ProbabilityMode,
) -> Result<BetaReport> {
    if splits.iter().any(|s| s.k() != 2) {
        return Err(invalid("splits", "beta uses two-part splits"));
    }
    beta_k_estimate(model, psi, levels, t, n, 2, splits, mode)
}

/// `k`-part functional `beta_T^psi(n, k)` over the supplied grid.
#[allow(clippy::too_many_arguments)]
pub fn beta_k_estimate(
    model: &FieldModel,
    psi: &MonotoneCurve,
    levels: &LevelSequence,
    t: f64,
    n: usize,
    k: usize,
    splits: &[BlockSplit],
    mode: ProbabilityMode,
) -> Result<BetaReport> {
    if k < 2 {
        return Err(invalid("k", "must be at least 2"));
    }
    if n == 0 || n > levels.levels.len() {
        return Err(invalid("n", format!("no level stored for n = {n}")));
    }
    let limit = split_limit(psi, t, n)?;
    for s in splits {
        if s.k() != k {
            return Err(invalid(
                "splits",
                format!("expected {k} parts, got {}", s.k()),
            ));
        }
        s.check(&limit)?;
    }
    beta_from_oracle(mode, model, levels.levels[n - 1], splits)
}

/// The constant `L(delta)` in the comparison bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
#[derive(Default)]
pub enum LRule {
    /// `(1 / 2 pi) (1 - delta^2)^{-1/2}`.
    #[default]
    Standard,
    Constant {
        value: f64,
    },
}

impl LRule {
    pub fn evaluate(&self, delta: f64) -> Result<f64> {
        match *self {
            LRule::Standard => {
                if !(delta.abs() < 1.0) {
                    return Err(invalid("delta", "must lie in (-1, 1)"));
                }
                Ok(1.0 / (2.0 * std::f64::consts::PI) / (1.0 - delta * delta).sqrt())
            }
            LRule::Constant { value } => {
                if !(value > 0.0) {
                    return Err(invalid("L", "must be positive"));
                }
                Ok(value)
            }
        }
    }
}

/// Default split exponent: midpoint of `(0, (1 - 3 delta) / (1 + delta))`.
pub fn default_alpha(delta: f64) -> Result<f64> {
    let hi = (1.0 - 3.0 * delta) / (1.0 + delta);
    if !(hi > 0.0) {
        return Err(invalid(
            "delta",
            format!("{delta} leaves no admissible alpha"),
        ));
    }
    Ok(hi / 2.0)
}

/// Comparison bound and its decomposition.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BermanReport {
    pub n: usize,
    pub u: f64,
    pub l_rule: LRule,
    pub l_value: f64,
    pub delta: f64,
    pub alpha: f64,
    /// `2^d L n^d sum r exp(-u^2 / (1 + r))` over `{0..n}^d \ {0}`.
    pub total: f64,
    /// Part of `total` from offsets with every coordinate in `[ceil(n^alpha), n]`.
    pub sigma1: f64,
    /// The remaining offsets.
    pub sigma2: f64,
}

fn berman_term(r: f64, u: f64) -> f64 {
    r * (-(u * u) / (1.0 + r)).exp()
}

/// Comparison bound by direct summation over all offsets.
pub fn berman_bound(
    c: &SeparableCovariance,
    n: usize,
    u: f64,
    l_rule: LRule,
    alpha: Option<f64>,
) -> Result<BermanReport> {
    if n == 0 {
        return Err(invalid("n", "must be at least 1"));
    }
    if !(u > 0.0) {
        return Err(invalid("u", "must be positive"));
    }
    let d = c.dim();
    let delta = c.delta_sup(n)?.delta;
    let l_value = l_rule.evaluate(delta)?;
    let alpha = match alpha {
        Some(a) if a > 0.0 && a < 1.0 => a,
        Some(a) => return Err(invalid("alpha", format!("{a} is outside (0, 1)"))),
        None => default_alpha(delta)?,
    };
    let cut = (n as f64).powf(alpha).ceil() as i64;
    let (mut s1, mut s2) = (0.0, 0.0);
    for off in MultiIndex::new(vec![0; d], vec![n as i64; d]) {
        if off.iter().all(|&x| x == 0) {
            continue;
        }
        let term = berman_term(c.covariance_at(&off), u);
        if off.iter().all(|&x| x >= cut) {
            s1 += term;
        } else {
            s2 += term;
        }
    }
    let scale = 2f64.powi(d as i32) * l_value * (n as f64).powi(d as i32);
    Ok(BermanReport {
        n,
        u,
        l_rule,
        l_value,
        delta,
        alpha,
        total: scale * (s1 + s2),
        sigma1: scale * s1,
        sigma2: scale * s2,
    })
}

/// Total of [`berman_bound`] from per-axis covariance tables and row sums.
pub fn berman_bound_factored(
    c: &SeparableCovariance,
    n: usize,
    u: f64,
    l_rule: LRule,
) -> Result<f64> {
    if n == 0 || !(u > 0.0) {
        return Err(invalid("n, u", "need n >= 1 and u > 0"));
    }
    let d = c.dim();
    let delta = c.delta_sup(n)?.delta;
    let l_value = l_rule.evaluate(delta)?;
    let tables: Vec<Vec<f64>> = c
        .axes()
        .iter()
        .map(|p| (0..=n).map(|i| p.eval(i as f64)).collect())
        .collect();
    // sum over the leading axes, with the last axis reduced as a row sum
    let last = &tables[d - 1];
    let mut total = 0.0;
    let lead_hi = vec![n as i64; d - 1];
    for lead in MultiIndex::new(vec![0; d - 1], lead_hi) {
        let r0: f64 = lead
            .iter()
            .enumerate()
            .map(|(a, &i)| tables[a][i as usize])
            .product();
        let start = usize::from(lead.iter().all(|&i| i == 0));
        let row: f64 = last[start..]
            .iter()
            .map(|&rj| berman_term(r0 * rj, u))
            .sum();
        total += row;
    }
    Ok(2f64.powi(d as i32) * l_value * (n as f64).powi(d as i32) * total)
}

/// Empirical gap against the i.i.d. benchmark next to the bound.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundComparison {
    pub n: usize,
    pub u: f64,
    pub empirical: f64,
    pub iid: f64,
    pub gap: f64,
    pub bound: f64,
    pub se: f64,
    /// `gap <= bound + 3 se`.
    pub verdict: bool,
}

/// Compares `|P^(M_n <= u) - Phi(u)^{n^d}|` with the bound, reusing an
/// existing empirical law of `M` on the `n x ... x n` block.
pub fn bound_vs_law(
    model: &FieldModel,
    law: &EmpiricalLaw,
    n: usize,
    u: f64,
    l_rule: LRule,
) -> Result<BoundComparison> {
    let d = law.provenance.dims.len();
    let bound = match model {
        FieldModel::GaussianSeparable(c) => berman_bound(c, n, u, l_rule, None)?.total,
        FieldModel::Iid {
            marginal: Marginal::StandardNormal,
        } => 0.0,
        _ => {
            return Err(Error::Unsupported(
                "comparison bound needs a Gaussian field".into(),
            ))
        }
    };
    let empirical = law.cdf(u);
    let iid = pow_prob(normal::cdf(u), (n as f64).powi(d as i32));
    let gap = (empirical - iid).abs();
    let se = (empirical * (1.0 - empirical) / law.reps() as f64).sqrt();
    Ok(BoundComparison {
        n,
        u,
        empirical,
        iid,
        gap,
        bound,
        se,
        verdict: gap <= bound + 3.0 * se,
    })
}

/// Simulates `reps` maxima on the `n x n` block and compares with the bound.
pub fn bound_vs_empirical(
    model: &FieldModel,
    n: usize,
    u: f64,
    reps: usize,
    seed: u64,
) -> Result<BoundComparison> {
    let d = model.dim().unwrap_or(2);
    let law = crate::phantom::empirical_max_law(model, &vec![n; d], reps, seed)?;
    debug_assert_eq!(law.provenance.model, model_label(model));
    bound_vs_law(model, &law, n, u, LRule::Standard)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covariance::GammaPair;

    fn two_atom(window: Vec<usize>, p_low: f64) -> FieldModel {
        FieldModel::MovingMax {
            window,
            innovation: Marginal::TwoAtom {
                low: 0.0,
                high: 1.0,
                p_low,
            },
        }
    }

    #[test]
    fn split_blocks_and_totals() {
        let s = BlockSplit::pair(vec![1, 2], vec![3, 0]).unwrap();
        assert_eq!(s.total(), vec![4, 2]);
        assert_eq!(
            s.blocks(),
            vec![vec![1, 2], vec![1, 0], vec![3, 2], vec![3, 0]]
        );
        assert!(s.check(&[4, 2]).is_ok());
        assert!(matches!(
            s.check(&[3, 2]),
            Err(Error::SplitConstraint { index: 0, .. })
        ));
        assert!(BlockSplit::new(vec![vec![1]]).is_err());
    }

    #[test]
    fn grids() {
        assert_eq!(compositions(3, 2).len(), 10);
        assert_eq!(compositions(3, 3).len(), 20);
        assert_eq!(full_grid(&[3, 3], 2).unwrap().len(), 100);
        let q = quarter_grid(&[8, 8]);
        assert!(q.iter().all(|s| s.check(&[8, 8]).is_ok()));
        assert!(q.contains(&BlockSplit::pair(vec![2, 4], vec![6, 4]).unwrap()));
    }

    #[test]
    fn iid_beta_vanishes_exactly() {
        let model = FieldModel::Iid {
            marginal: Marginal::Uniform,
        };
        let rep = beta_from_oracle(
            ProbabilityMode::Exact,
            &model,
            0.97,
            &quarter_grid(&[12, 12]),
        )
        .unwrap();
        assert!(rep.value < 1e-15, "{}", rep.value);
        assert_eq!(rep.mode, "exact");
    }

    #[test]
    fn enumeration_matches_closed_form() {
        let model = two_atom(vec![2, 2], 0.7);
        for level in [-0.5, 0.5, 1.5] {
            let oracle = EnumerationOracle::new(&model, level).unwrap();
            for e in [[1, 1], [2, 3], [3, 3], [3, 1]] {
                let want = model.exact_block_max_cdf(&e, level).unwrap();
                let got = oracle.probability(&e).unwrap();
                assert!((got - want).abs() < 1e-12, "{e:?} {level}: {got} vs {want}");
            }
        }
        let too_big = EnumerationOracle::new(&model, 0.5).unwrap();
        assert!(matches!(
            too_big.probability(&[5, 5]),
            Err(Error::EnumerationTooLarge { .. })
        ));
    }

    #[test]
    fn zero_part_reduces_blocks() {
        // With p = 0 the product has the single nonempty block q.
        let model = two_atom(vec![2, 2], 0.8);
        let s = BlockSplit::pair(vec![0, 0], vec![3, 3]).unwrap();
        let v = evaluate_splits(&EnumerationOracle::new(&model, 0.5).unwrap(), &[s]).unwrap();
        assert!(v[0].signed.abs() < 1e-15);
        let nonempty = BlockSplit::pair(vec![0, 2], vec![3, 1]).unwrap();
        assert_eq!(
            nonempty
                .blocks()
                .iter()
                .filter(|b| b.iter().all(|&x| x > 0))
                .count(),
            2
        );
    }

    #[test]
    fn moving_max_beta_positive() {
        let model = two_atom(vec![2, 2], 0.8);
        let rep = beta_from_oracle(
            ProbabilityMode::Enumerate,
            &model,
            0.5,
            &full_grid(&[3, 3], 2).unwrap(),
        )
        .unwrap();
        assert!(rep.value > 0.01);
    }

    #[test]
    fn berman_small_cases() {
        let c = SeparableCovariance::example(GammaPair::default(), 2).unwrap();
        let u = 2.0;
        let rep = berman_bound(&c, 1, u, LRule::Standard, None).unwrap();
        let mut want = 0.0;
        for off in [[0, 1], [1, 0], [1, 1]] {
            want += berman_term(c.covariance_at(&off), u);
        }
        want *= 4.0 * rep.l_value;
        assert!((rep.total - want).abs() < 1e-15);
        assert!((rep.sigma1 + rep.sigma2 - rep.total).abs() < 1e-15);
        let f = berman_bound_factored(&c, 1, u, LRule::Standard).unwrap();
        assert!((f - want).abs() < 1e-14);
    }

    #[test]
    fn l_rule_values() {
        assert!(
            (LRule::Standard.evaluate(0.0).unwrap() - 1.0 / (2.0 * std::f64::consts::PI)).abs()
                < 1e-16
        );
        assert_eq!(LRule::Constant { value: 2.0 }.evaluate(0.5).unwrap(), 2.0);
        assert!(LRule::Standard.evaluate(1.0).is_err());
        assert!(default_alpha(0.4).is_err());
    }
}
