//! Phantom distribution functions.
//!
//! A distribution function `G` is a phantom d.f. for a stationary field when
//! `sup_x |P(M_n <= x) - G(x)^{n^*}|` vanishes as `n` grows; along a curve
//! `psi` only `n = psi(k)` is considered. This module measures that distance
//! for empirical and closed-form laws, builds the step candidate `G_psi` from
//! a level sequence, and evaluates the limiting laws that separate the
//! sectorial and directional behaviour of the example field.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::lattice::{star, MonotoneCurve};
use crate::normal;
use crate::quadrature::{expect_adaptive, GaussHermite};
use crate::sampling::{moving_max_sites, pow_prob, FieldModel, Marginal};

/// An evaluatable distribution function with a power operation.
pub trait PhantomCandidate: Send + Sync {
    fn name(&self) -> String;

    /// `G(x)`, right-continuous.
    fn cdf(&self, x: f64) -> f64;

    /// `G(x-)`.
    fn cdf_left(&self, x: f64) -> f64 {
        self.cdf(x)
    }

    /// `ln G(x)`; `-inf` where `G` vanishes.
    fn ln_cdf(&self, x: f64) -> f64 {
        self.cdf(x).ln()
    }

    /// `G(x)^m`, computed as `exp(m ln G(x))` with exact 0 and 1 branches.
    fn power(&self, x: f64, m: f64) -> f64 {
        pow_ln(self.ln_cdf(x), m)
    }

    /// `G(x-)^m`.
    fn power_left(&self, x: f64, m: f64) -> f64 {
        pow_prob(self.cdf_left(x), m)
    }

    /// Jump locations, if `G` has any.
    fn breakpoints(&self) -> Vec<f64> {
        Vec::new()
    }

    /// Level inversion `inf { x : G(x) >= p }`.
    fn quantile(&self, p: f64) -> f64;
}

fn pow_ln(ln_g: f64, m: f64) -> f64 {
    if ln_g == f64::NEG_INFINITY || ln_g.is_nan() {
        0.0
    } else if ln_g >= 0.0 {
        1.0
    } else {
        (m * ln_g).exp()
    }
}

/// The standard normal d.f. `Phi`.
#[derive(Debug, Clone, Copy, Default)]
pub struct NormalCandidate;

impl PhantomCandidate for NormalCandidate {
    fn name(&self) -> String {
        "Phi".into()
    }
    fn cdf(&self, x: f64) -> f64 {
        normal::cdf(x)
    }
    fn ln_cdf(&self, x: f64) -> f64 {
        normal::ln_cdf(x)
    }
    fn power_left(&self, x: f64, m: f64) -> f64 {
        self.power(x, m)
    }
    fn quantile(&self, p: f64) -> f64 {
        normal::quantile(p)
    }
}

/// Any [`Marginal`] used as a candidate.
#[derive(Debug, Clone, Copy)]
pub struct MarginalCandidate(pub Marginal);

impl PhantomCandidate for MarginalCandidate {
    fn name(&self) -> String {
        format!("{:?}", self.0)
    }
    fn cdf(&self, x: f64) -> f64 {
        self.0.cdf(x)
    }
    fn cdf_left(&self, x: f64) -> f64 {
        self.0.cdf_left(x)
    }
    fn ln_cdf(&self, x: f64) -> f64 {
        match self.0 {
            Marginal::StandardNormal => normal::ln_cdf(x),
            _ => self.0.cdf(x).ln(),
        }
    }
    fn breakpoints(&self) -> Vec<f64> {
        self.0
            .atoms()
            .map(|a| vec![a[0].0, a[1].0])
            .unwrap_or_default()
    }
    fn quantile(&self, p: f64) -> f64 {
        self.0.quantile(p)
    }
}

/// The law of a block maximum, empirical or exact.
pub trait MaxLaw {
    fn cdf(&self, x: f64) -> f64;
    fn cdf_left(&self, x: f64) -> f64 {
        self.cdf(x)
    }
    fn breakpoints(&self) -> Vec<f64> {
        Vec::new()
    }
    /// Replication count for Monte Carlo laws.
    fn replications(&self) -> Option<usize> {
        None
    }
}

/// Where an empirical law came from.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub model: String,
    pub dims: Vec<usize>,
    pub seed: u64,
}

/// Sorted Monte Carlo sample of a max statistic.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmpiricalLaw {
    sorted: Vec<f64>,
    pub provenance: Provenance,
}

impl EmpiricalLaw {
    pub fn from_samples(mut samples: Vec<f64>, provenance: Provenance) -> Result<Self> {
        if samples.is_empty() {
            return Err(invalid("reps", "need at least one replication"));
        }
        if samples.iter().any(|x| x.is_nan()) {
            return Err(invalid("samples", "NaN in sample"));
        }
        samples.sort_by(f64::total_cmp);
        Ok(Self {
            sorted: samples,
            provenance,
        })
    }

    pub fn reps(&self) -> usize {
        self.sorted.len()
    }

    pub fn sorted(&self) -> &[f64] {
        &self.sorted
    }

    /// Order statistic at index `ceil(p R)` (1-based), clamped to `[1, R]`.
    pub fn quantile(&self, p: f64) -> f64 {
        let r = self.sorted.len();
        let k = ((p * r as f64).ceil() as usize).clamp(1, r);
        self.sorted[k - 1]
    }

    /// Binomial standard error of the ECDF at `x`.
    pub fn standard_error(&self, x: f64) -> f64 {
        let p = self.cdf(x);
        (p * (1.0 - p) / self.reps() as f64).sqrt()
    }
}

impl MaxLaw for EmpiricalLaw {
    fn cdf(&self, x: f64) -> f64 {
        self.sorted.partition_point(|&s| s <= x) as f64 / self.sorted.len() as f64
    }
    fn cdf_left(&self, x: f64) -> f64 {
        self.sorted.partition_point(|&s| s < x) as f64 / self.sorted.len() as f64
    }
    fn breakpoints(&self) -> Vec<f64> {
        let mut b = self.sorted.clone();
        b.dedup();
        b
    }
    fn replications(&self) -> Option<usize> {
        Some(self.sorted.len())
    }
}

/// Closed-form block-max law of a model on `[1, dims]`.
#[derive(Debug, Clone)]
pub struct ExactMaxLaw<'a> {
    pub model: &'a FieldModel,
    pub dims: Vec<usize>,
}

impl<'a> ExactMaxLaw<'a> {
    pub fn new(model: &'a FieldModel, dims: Vec<usize>) -> Result<Self> {
        if model.exact_block_max_cdf(&dims, 0.0).is_none() {
            return Err(Error::Unsupported("no closed-form block-max law".into()));
        }
        Ok(Self { model, dims })
    }

    fn cells(&self) -> f64 {
        match self.model {
            FieldModel::MovingMax { window, .. } => moving_max_sites(window, &self.dims) as f64,
            _ => self.dims.iter().product::<usize>() as f64,
        }
    }
}

impl MaxLaw for ExactMaxLaw<'_> {
    fn cdf(&self, x: f64) -> f64 {
        self.model
            .exact_block_max_cdf(&self.dims, x)
            .expect("checked in new")
    }
    fn cdf_left(&self, x: f64) -> f64 {
        match self.model {
            FieldModel::Iid { marginal }
            | FieldModel::MovingMax {
                innovation: marginal,
                ..
            } => pow_prob(marginal.cdf_left(x), self.cells()),
            FieldModel::GaussianSeparable(_) => unreachable!(),
        }
    }
    fn breakpoints(&self) -> Vec<f64> {
        match self.model {
            FieldModel::Iid { marginal }
            | FieldModel::MovingMax {
                innovation: marginal,
                ..
            } => MarginalCandidate(*marginal).breakpoints(),
            FieldModel::GaussianSeparable(_) => Vec::new(),
        }
    }
}

/// Result of a sup-distance evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DistanceReport {
    pub distance: f64,
    /// Point where the supremum is attained (left limit if `from_left`).
    pub argmax: f64,
    pub from_left: bool,
    /// Binomial SE of the law at the argmax; 0 for exact laws.
    pub se: f64,
}

/// `sup_x |F(x) - H(x)|` for a monotone target `H` given by its values and
/// left limits. Evaluated at every breakpoint of `F`, every extra point, and
/// both one-sided limits there.
pub fn sup_distance<L, H, HL>(
    law: &L,
    target: H,
    target_left: HL,
    extra_points: &[f64],
) -> DistanceReport
where
    L: MaxLaw + ?Sized,
    H: Fn(f64) -> f64,
    HL: Fn(f64) -> f64,
{
    let mut pts = law.breakpoints();
    pts.extend_from_slice(extra_points);
    pts.retain(|x| !x.is_nan());
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let mut best = DistanceReport {
        distance: 0.0,
        argmax: f64::NAN,
        from_left: false,
        se: 0.0,
    };
    for &x in &pts {
        let left = (law.cdf_left(x) - target_left(x)).abs();
        if left > best.distance {
            best = DistanceReport {
                distance: left,
                argmax: x,
                from_left: true,
                se: 0.0,
            };
        }
        let right = (law.cdf(x) - target(x)).abs();
        if right > best.distance {
            best = DistanceReport {
                distance: right,
                argmax: x,
                from_left: false,
                se: 0.0,
            };
        }
    }
    if let Some(r) = law.replications() {
        if best.argmax.is_finite() {
            let p = if best.from_left {
                target_left(best.argmax)
            } else {
                target(best.argmax)
            };
            best.se = (p * (1.0 - p) / r as f64).sqrt();
        }
    }
    best
}

/// `sup_x |P(M <= x) - G(x)^m|` with details.
///
/// Exact whenever either the law or `G` is a step function. For two
/// continuous laws the supremum is taken over `grid` as well.
pub fn phantom_distance_report<L: MaxLaw + ?Sized>(
    law: &L,
    g: &dyn PhantomCandidate,
    m: f64,
    grid: &[f64],
) -> Result<DistanceReport> {
    if !(m > 0.0) {
        return Err(invalid("m", format!("{m} must be positive")));
    }
    let mut extra = g.breakpoints();
    extra.extend_from_slice(grid);
    Ok(sup_distance(
        law,
        |x| g.power(x, m),
        |x| g.power_left(x, m),
        &extra,
    ))
}

/// `sup_x |P(M <= x) - G(x)^m|`.
pub fn phantom_distance<L: MaxLaw + ?Sized>(
    law: &L,
    g: &dyn PhantomCandidate,
    m: f64,
) -> Result<f64> {
    Ok(phantom_distance_report(law, g, m, &[])?.distance)
}

/// Draws `reps` independent maxima over `[1, dims]`.
pub fn empirical_max_law(
    model: &FieldModel,
    dims: &[usize],
    reps: usize,
    seed: u64,
) -> Result<EmpiricalLaw> {
    if reps == 0 {
        return Err(invalid("reps", "need at least one replication"));
    }
    let sampler = model.sampler(dims)?;
    let maxima: Vec<f64> = (0..reps as u64)
        .into_par_iter()
        .map(|r| sampler.sample_max(seed, r))
        .collect();
    EmpiricalLaw::from_samples(
        maxima,
        Provenance {
            model: model_label(model),
            dims: dims.to_vec(),
            seed,
        },
    )
}

pub(crate) fn model_label(model: &FieldModel) -> String {
    match model {
        FieldModel::GaussianSeparable(c) => match c.gammas() {
            Some(g) => format!(
                "gaussian_separable(gamma1={}, gamma2={})",
                g.gamma1, g.gamma2
            ),
            None => "gaussian_separable(custom)".into(),
        },
        FieldModel::Iid { marginal } => format!("iid({marginal:?})"),
        FieldModel::MovingMax { window, innovation } => {
            format!("moving_max(window={window:?}, {innovation:?})")
        }
    }
}

/// Levels `v_psi(n)` along a curve, for a target probability `gamma`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelSequence {
    /// `psi(1), ..., psi(H)`.
    pub points: Vec<Vec<usize>>,
    /// Nondecreasing levels `v_psi(1), ..., v_psi(H)`.
    pub levels: Vec<f64>,
    pub gamma: f64,
    /// Known right end `v_inf` of the levels, if any.
    pub v_inf: Option<f64>,
    /// Positions where the raw levels decreased before the running-max repair.
    pub repaired: Vec<usize>,
}

impl LevelSequence {
    pub fn new(
        points: Vec<Vec<usize>>,
        levels: Vec<f64>,
        gamma: f64,
        v_inf: Option<f64>,
    ) -> Result<Self> {
        if points.len() != levels.len() || levels.is_empty() {
            return Err(invalid("levels", "need one level per curve point"));
        }
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(invalid("gamma", format!("{gamma} is outside (0, 1)")));
        }
        Ok(Self {
            points,
            levels,
            gamma,
            v_inf,
            repaired: Vec::new(),
        })
    }

    pub fn stars(&self) -> Vec<f64> {
        self.points.iter().map(|p| star(p) as f64).collect()
    }

    pub fn repair_flag(&self) -> bool {
        !self.repaired.is_empty()
    }
}

/// The step candidate
/// `G(x) = 0` below `v_1`, `gamma^{1/psi(n)^*}` on `[v_n, v_{n+1})`, and 1
/// from `v_inf` on.
#[derive(Debug, Clone, PartialEq)]
pub struct GPsi {
    levels: Vec<f64>,
    stars: Vec<f64>,
    gamma: f64,
    cap: f64,
}

impl GPsi {
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Index of the step containing `x`, if any.
    fn step_at(&self, x: f64) -> Option<usize> {
        if x >= self.cap {
            return None;
        }
        let k = self.levels.partition_point(|&v| v <= x);
        k.checked_sub(1)
    }

    fn step_left_of(&self, x: f64) -> Option<usize> {
        if x > self.cap {
            return None;
        }
        let k = self.levels.partition_point(|&v| v < x);
        k.checked_sub(1)
    }

    /// Linear interpolation between the step corners. Not the canonical
    /// candidate; provided for plotting and smoothing experiments.
    pub fn smoothed(&self) -> InterpolatedGPsi {
        let mut pts: Vec<(f64, f64)> = self
            .levels
            .iter()
            .zip(&self.stars)
            .map(|(&v, &s)| (v, self.gamma.powf(1.0 / s)))
            .collect();
        pts.push((self.cap, 1.0));
        pts.dedup_by(|b, a| {
            if a.0 == b.0 {
                a.1 = a.1.max(b.1);
                true
            } else {
                false
            }
        });
        InterpolatedGPsi { pts }
    }
}

impl PhantomCandidate for GPsi {
    fn name(&self) -> String {
        format!("G_psi(gamma={})", self.gamma)
    }
    fn cdf(&self, x: f64) -> f64 {
        if x >= self.cap {
            return 1.0;
        }
        match self.step_at(x) {
            Some(n) => self.gamma.powf(1.0 / self.stars[n]),
            None => 0.0,
        }
    }
    fn cdf_left(&self, x: f64) -> f64 {
        if x > self.cap {
            return 1.0;
        }
        match self.step_left_of(x) {
            Some(n) => self.gamma.powf(1.0 / self.stars[n]),
            None => 0.0,
        }
    }
    fn ln_cdf(&self, x: f64) -> f64 {
        if x >= self.cap {
            return 0.0;
        }
        match self.step_at(x) {
            Some(n) => self.gamma.ln() / self.stars[n],
            None => f64::NEG_INFINITY,
        }
    }
    // gamma^(m / psi(n)^*): exactly gamma when m = psi(n)^*.
    fn power(&self, x: f64, m: f64) -> f64 {
        if x >= self.cap {
            return 1.0;
        }
        match self.step_at(x) {
            Some(n) => self.gamma.powf(m / self.stars[n]),
            None => 0.0,
        }
    }
    fn power_left(&self, x: f64, m: f64) -> f64 {
        if x > self.cap {
            return 1.0;
        }
        match self.step_left_of(x) {
            Some(n) => self.gamma.powf(m / self.stars[n]),
            None => 0.0,
        }
    }
    fn breakpoints(&self) -> Vec<f64> {
        let mut b = self.levels.clone();
        b.push(self.cap);
        b.dedup();
        b
    }
    fn quantile(&self, p: f64) -> f64 {
        if p <= 0.0 {
            return f64::NEG_INFINITY;
        }
        for (n, &v) in self.levels.iter().enumerate() {
            if v >= self.cap {
                break;
            }
            if self.cdf(v) >= p {
                return self.levels[n];
            }
        }
        self.cap
    }
}

/// Piecewise-linear smoothing of [`GPsi`].
#[derive(Debug, Clone, PartialEq)]
pub struct InterpolatedGPsi {
    pts: Vec<(f64, f64)>,
}

impl PhantomCandidate for InterpolatedGPsi {
    fn name(&self) -> String {
        "G_psi (linear interpolation, non-canonical)".into()
    }
    fn cdf(&self, x: f64) -> f64 {
        let k = self.pts.partition_point(|&(v, _)| v <= x);
        if k == 0 {
            return 0.0;
        }
        if k == self.pts.len() {
            return 1.0;
        }
        let (x0, y0) = self.pts[k - 1];
        let (x1, y1) = self.pts[k];
        y0 + (y1 - y0) * (x - x0) / (x1 - x0)
    }
    fn cdf_left(&self, x: f64) -> f64 {
        // only the first corner is a jump
        if x <= self.pts[0].0 {
            0.0
        } else {
            self.cdf(x)
        }
    }
    fn power_left(&self, x: f64, m: f64) -> f64 {
        pow_prob(self.cdf_left(x), m)
    }
    fn breakpoints(&self) -> Vec<f64> {
        self.pts.iter().map(|p| p.0).collect()
    }
    fn quantile(&self, p: f64) -> f64 {
        if p <= self.pts[0].1 {
            return self.pts[0].0;
        }
        for w in self.pts.windows(2) {
            let ((x0, y0), (x1, y1)) = (w[0], w[1]);
            if p <= y1 {
                return x0 + (x1 - x0) * (p - y0) / (y1 - y0);
            }
        }
        self.pts.last().unwrap().0
    }
}

/// Builds `G_psi` from a level sequence.
///
/// With `v_inf` known, every stored level starts a step and `G = 1` from
/// `v_inf`. Otherwise the last stored level plays the role of `v_inf`.
pub fn construct_g_psi(levels: &LevelSequence) -> Result<GPsi> {
    if let Some(i) = levels.levels.windows(2).position(|w| w[1] < w[0]) {
        return Err(Error::NotMonotone(i + 1));
    }
    let stars = levels.stars();
    let (step_levels, step_stars, cap) = match levels.v_inf {
        Some(v) => {
            if v < *levels.levels.last().unwrap() {
                return Err(invalid("v_inf", "below the last level"));
            }
            (levels.levels.clone(), stars, v)
        }
        None => {
            let h = levels.levels.len();
            (
                levels.levels[..h - 1].to_vec(),
                stars[..h - 1].to_vec(),
                levels.levels[h - 1],
            )
        }
    };
    if step_stars.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid("points", "psi(n)^* must be strictly increasing"));
    }
    Ok(GPsi {
        levels: step_levels,
        stars: step_stars,
        gamma: levels.gamma,
        cap,
    })
}

/// Indices `n` (1-based) where `G(v_n)^{psi(n)^*} != gamma`.
///
/// When the running-max repair made several levels equal, `G` takes the
/// value of the last of them, so only that index is checked. Levels at or
/// above `v_inf` are skipped since `G = 1` there.
pub fn self_consistency_violations(g: &GPsi, levels: &LevelSequence) -> Vec<usize> {
    let stars = levels.stars();
    let cap = levels.v_inf.unwrap_or(f64::INFINITY);
    let h = levels.levels.len();
    (0..h)
        .filter(|&i| i + 1 == h || levels.levels[i + 1] > levels.levels[i])
        .filter(|&i| levels.levels[i] < cap && (levels.v_inf.is_some() || i + 1 < h))
        .filter(|&i| g.power(levels.levels[i], stars[i]) != levels.gamma)
        .map(|i| i + 1)
        .collect()
}

/// Exact level `u` with `n^2 (1 - Phi(u)) = c`.
pub fn levels_u(c: f64, n: usize) -> Result<f64> {
    level_for_cells(c, (n as f64) * (n as f64))
}

/// Exact level `u` with `cells (1 - Phi(u)) = c`.
pub fn level_for_cells(c: f64, cells: f64) -> Result<f64> {
    if !(c > 0.0) || !(c < cells) {
        return Err(invalid("c", format!("need 0 < c < {cells}, got {c}")));
    }
    Ok(normal::upper_quantile(c / cells))
}

/// `a_n = sqrt(2 ln n)`, `b_n = a_n - (ln ln n + ln 4 pi) / (2 a_n)`.
pub fn normalizers(n: f64) -> Result<(f64, f64)> {
    if !(n >= 3.0) {
        return Err(invalid("n", format!("{n} < 3")));
    }
    let a = (2.0 * n.ln()).sqrt();
    let b = a - (n.ln().ln() + (4.0 * std::f64::consts::PI).ln()) / (2.0 * a);
    Ok((a, b))
}

/// The Gumbel law `exp(-exp(-x))`.
pub fn gumbel_h0(x: f64) -> f64 {
    (-(-x).exp()).exp()
}

fn limit_h_integrand(x: f64, kappa: f64) -> impl Fn(f64) -> f64 {
    let s = (2.0 * kappa).sqrt();
    move |z: f64| (-(-x - kappa + s * z).exp()).exp()
}

/// `H(x) = E exp(-exp(-x - kappa + sqrt(2 kappa) Z))`, the limit law of the
/// normalized equicorrelated maximum with `rho_N ln N -> kappa`.
pub fn limit_h(x: f64, kappa: f64) -> Result<f64> {
    if !(kappa > 0.0) {
        return Err(invalid("kappa", "must be positive"));
    }
    Ok(GaussHermite::default_rule().expect(limit_h_integrand(x, kappa)))
}

/// [`limit_h`] by adaptive Gauss–Kronrod quadrature.
pub fn limit_h_adaptive(x: f64, kappa: f64) -> Result<f64> {
    if !(kappa > 0.0) {
        return Err(invalid("kappa", "must be positive"));
    }
    Ok(expect_adaptive(limit_h_integrand(x, kappa), 1e-13))
}

fn check_equi(n: f64, rho: f64) -> Result<()> {
    if !(n >= 1.0) {
        return Err(invalid("N", "must be at least 1"));
    }
    if !(0.0..1.0).contains(&rho) {
        return Err(invalid("rho", format!("{rho} is outside [0, 1)")));
    }
    Ok(())
}

fn equi_integrand(n: f64, rho: f64, w: f64) -> impl Fn(f64) -> f64 {
    let (sr, s1) = (rho.sqrt(), (1.0 - rho).sqrt());
    move |z: f64| pow_ln(normal::ln_cdf((w - sr * z) / s1), n)
}

/// `P(max of N standard normals with common correlation rho <= w)`
/// `= E Phi((w - sqrt(rho) Z) / sqrt(1 - rho))^N`.
pub fn equicorrelated_max_cdf(n: f64, rho: f64, w: f64) -> Result<f64> {
    check_equi(n, rho)?;
    if rho == 0.0 {
        return Ok(pow_ln(normal::ln_cdf(w), n));
    }
    Ok(GaussHermite::default_rule()
        .expect(equi_integrand(n, rho, w))
        .clamp(0.0, 1.0))
}

/// [`equicorrelated_max_cdf`] by adaptive Gauss–Kronrod quadrature.
pub fn equicorrelated_max_cdf_adaptive(n: f64, rho: f64, w: f64) -> Result<f64> {
    check_equi(n, rho)?;
    Ok(expect_adaptive(equi_integrand(n, rho, w), 1e-13).clamp(0.0, 1.0))
}

/// `P(a_N (M~_N - b_N) <= x)` with `rho_N = kappa / ln N`.
pub fn normalized_equicorrelated_cdf(n: f64, kappa: f64, x: f64) -> Result<f64> {
    let (a, b) = normalizers(n)?;
    equicorrelated_max_cdf(n, kappa / n.ln(), x / a + b)
}

/// `theta = ln gamma_or / ln gamma_in`, required to lie in (0, 1].
pub fn extremal_index(gamma_or: f64, gamma_in: f64) -> Result<f64> {
    for (name, g) in [("gamma_or", gamma_or), ("gamma_in", gamma_in)] {
        if !(g > 0.0 && g < 1.0) {
            return Err(invalid(name, format!("{g} is outside (0, 1)")));
        }
    }
    let theta = gamma_or.ln() / gamma_in.ln();
    if theta > 1.0 || theta <= 0.0 {
        return Err(Error::InconsistentExtremalIndex { theta });
    }
    Ok(theta)
}

/// Extremal-index computation at one rectangle size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExtremalIndexEstimate {
    pub level: f64,
    pub gamma_in: f64,
    pub gamma_or: f64,
    pub theta: f64,
    /// SE of `gamma_or` for Monte Carlo estimates, 0 when exact.
    pub se: f64,
}

/// Level `v` with `F(v)^{n^*} = gamma_in` for the model's marginal `F`.
pub fn marginal_level(model: &FieldModel, dims: &[usize], gamma_in: f64) -> Result<f64> {
    let cells = dims.iter().product::<usize>() as f64;
    let p = gamma_in.powf(1.0 / cells);
    Ok(match model {
        FieldModel::GaussianSeparable(_) => normal::quantile(p),
        FieldModel::Iid { marginal } => marginal.quantile(p),
        FieldModel::MovingMax { window, innovation } => {
            let w = window.iter().product::<usize>() as f64;
            innovation.quantile(p.powf(1.0 / w))
        }
    })
}

/// Extremal index from closed-form laws: `gamma_or = P(M_dims <= v)` at the
/// level with `F(v)^{n^*} = gamma_in`.
pub fn extremal_index_exact(
    model: &FieldModel,
    dims: &[usize],
    gamma_in: f64,
) -> Result<ExtremalIndexEstimate> {
    let level = marginal_level(model, dims, gamma_in)?;
    let gamma_or = model
        .exact_block_max_cdf(dims, level)
        .ok_or_else(|| Error::Unsupported("no closed-form block-max law".into()))?;
    let gamma_in_eff = pow_prob(
        model.marginal_cdf(level),
        dims.iter().product::<usize>() as f64,
    );
    let theta = extremal_index(gamma_or, gamma_in_eff)?;
    Ok(ExtremalIndexEstimate {
        level,
        gamma_in: gamma_in_eff,
        gamma_or,
        theta,
        se: 0.0,
    })
}

/// Extremal index with `gamma_or` estimated by Monte Carlo.
pub fn extremal_index_mc(
    model: &FieldModel,
    dims: &[usize],
    gamma_in: f64,
    reps: usize,
    seed: u64,
) -> Result<ExtremalIndexEstimate> {
    let level = marginal_level(model, dims, gamma_in)?;
    let law = empirical_max_law(model, dims, reps, seed)?;
    let gamma_or = law.cdf(level);
    let gamma_in_eff = pow_prob(
        model.marginal_cdf(level),
        dims.iter().product::<usize>() as f64,
    );
    let theta = extremal_index(gamma_or, gamma_in_eff)?;
    Ok(ExtremalIndexEstimate {
        level,
        gamma_in: gamma_in_eff,
        gamma_or,
        theta,
        se: law.standard_error(level),
    })
}

/// Right end of the marginal support.
pub fn support_sup(model: &FieldModel) -> f64 {
    match model {
        FieldModel::GaussianSeparable(_) => f64::INFINITY,
        FieldModel::Iid { marginal }
        | FieldModel::MovingMax {
            innovation: marginal,
            ..
        } => match marginal {
            Marginal::Uniform => 1.0,
            Marginal::TwoAtom { high, .. } => *high,
            Marginal::StandardNormal => f64::INFINITY,
        },
    }
}

/// Empirical `gamma`-quantiles of `M_psi(n)`, `n = 1..=horizon`, made
/// nondecreasing by a running maximum. `v_inf` is the right end of the
/// marginal support.
///
/// All curve points share the seed, so replication `r` uses the same
/// substream at every `n`.
pub fn estimate_level_sequence(
    model: &FieldModel,
    curve: &MonotoneCurve,
    gamma: f64,
    horizon: usize,
    reps: usize,
    seed: u64,
) -> Result<LevelSequence> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(invalid("gamma", format!("{gamma} is outside (0, 1)")));
    }
    let points = curve.materialize(horizon)?;
    let mut raw = Vec::with_capacity(horizon);
    for p in &points {
        let law = empirical_max_law(model, p, reps, seed)?;
        raw.push(law.quantile(gamma));
    }
    let mut levels = Vec::with_capacity(horizon);
    let mut repaired = Vec::new();
    let mut run = f64::NEG_INFINITY;
    for (i, &v) in raw.iter().enumerate() {
        if v < run {
            repaired.push(i + 1);
        }
        run = run.max(v);
        levels.push(run);
    }
    let mut seq = LevelSequence::new(points, levels, gamma, Some(support_sup(model)))?;
    seq.repaired = repaired;
    Ok(seq)
}

/// Exact levels for models with a closed-form law: `P(M_psi(n) <= v) = gamma`.
pub fn exact_level_sequence(
    model: &FieldModel,
    curve: &MonotoneCurve,
    gamma: f64,
    horizon: usize,
) -> Result<LevelSequence> {
    let points = curve.materialize(horizon)?;
    let (innovation, window) = match model {
        FieldModel::Iid { marginal } => (*marginal, None),
        FieldModel::MovingMax { window, innovation } => (*innovation, Some(window.as_slice())),
        FieldModel::GaussianSeparable(_) => {
            return Err(Error::Unsupported("no closed-form block-max law".into()))
        }
    };
    let sites = |p: &[usize]| match window {
        Some(w) => moving_max_sites(w, p) as f64,
        None => p.iter().product::<usize>() as f64,
    };
    let levels = points
        .iter()
        .map(|p| innovation.quantile(gamma.powf(1.0 / sites(p))))
        .collect();
    let v_inf = Some(support_sup(model));
    LevelSequence::new(points, levels, gamma, v_inf)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn prov() -> Provenance {
        Provenance {
            model: "test".into(),
            dims: vec![1],
            seed: 0,
        }
    }

    #[test]
    fn empirical_law_basics() {
        let law = EmpiricalLaw::from_samples(vec![3.0, 1.0, 2.0, 2.0], prov()).unwrap();
        assert_eq!(law.cdf(0.0), 0.0);
        assert_eq!(law.cdf(2.0), 0.75);
        assert_eq!(law.cdf_left(2.0), 0.25);
        assert_eq!(law.cdf(3.0), 1.0);
        assert_eq!(law.quantile(0.5), 2.0);
        assert_eq!(law.quantile(0.26), 2.0);
        assert_eq!(law.quantile(0.25), 1.0);
        assert_eq!(law.breakpoints(), vec![1.0, 2.0, 3.0]);
        assert!(EmpiricalLaw::from_samples(vec![], prov()).is_err());
    }

    /// Step candidate equal to the ECDF of a sample.
    struct Ecdf(EmpiricalLaw);
    impl PhantomCandidate for Ecdf {
        fn name(&self) -> String {
            "ecdf".into()
        }
        fn cdf(&self, x: f64) -> f64 {
            self.0.cdf(x)
        }
        fn cdf_left(&self, x: f64) -> f64 {
            self.0.cdf_left(x)
        }
        fn breakpoints(&self) -> Vec<f64> {
            self.0.breakpoints()
        }
        fn quantile(&self, p: f64) -> f64 {
            self.0.quantile(p)
        }
    }

    #[test]
    fn self_distance_vanishes() {
        let law = EmpiricalLaw::from_samples(vec![0.3, 0.1, 0.9, 0.5, 0.5], prov()).unwrap();
        let g = Ecdf(law.clone());
        assert!(phantom_distance(&law, &g, 1.0).unwrap() <= 1.0 / 5.0);
        assert!(phantom_distance(&law, &g, 1.0).unwrap() < 1e-15);
    }

    #[test]
    fn degenerate_candidate_is_far() {
        let law =
            EmpiricalLaw::from_samples((1..=100).map(|i| i as f64).collect(), prov()).unwrap();
        let g = MarginalCandidate(Marginal::Uniform); // G = 1 below the sample minimum
        let d = phantom_distance(&law, &g, 1.0).unwrap();
        assert!(d >= 1.0 - 1.0 / 100.0 - 1e-12, "{d}");
        assert!(phantom_distance(&law, &g, 0.0).is_err());
    }

    #[test]
    fn distance_hand_computed() {
        // ECDF of {0.5} against the uniform d.f.: sup is 0.5 on either side.
        let law = EmpiricalLaw::from_samples(vec![0.5], prov()).unwrap();
        let rep =
            phantom_distance_report(&law, &MarginalCandidate(Marginal::Uniform), 1.0, &[]).unwrap();
        assert!((rep.distance - 0.5).abs() < 1e-15);
        // with m = 2: G^2(0.5-) = 0.25 vs 0, G^2(0.5) = 0.25 vs 1 -> 0.75
        let d2 = phantom_distance(&law, &MarginalCandidate(Marginal::Uniform), 2.0).unwrap();
        assert!((d2 - 0.75).abs() < 1e-15);
    }

    #[test]
    fn g_psi_branches_and_self_consistency() {
        let pts = vec![vec![1, 1], vec![2, 2], vec![3, 3]];
        let seq = LevelSequence::new(pts, vec![0.2, 0.5, 0.8], 0.4, Some(1.0)).unwrap();
        let g = construct_g_psi(&seq).unwrap();
        assert_eq!(g.cdf(0.1), 0.0);
        assert_eq!(g.cdf(0.2), 0.4f64.powf(1.0));
        assert_eq!(g.cdf(0.6), 0.4f64.powf(0.25));
        assert_eq!(g.cdf(1.0), 1.0);
        assert_eq!(g.cdf_left(0.5), 0.4);
        for (v, s) in seq.levels.iter().zip(seq.stars()) {
            assert_eq!(g.power(*v, s), 0.4);
        }
        assert_eq!(g.quantile(0.4), 0.2);
        assert_eq!(g.quantile(0.5), 0.5);

        // without v_inf the last level closes the support
        let seq2 = LevelSequence::new(
            vec![vec![1], vec![2], vec![3]],
            vec![0.1, 0.2, 0.3],
            0.5,
            None,
        )
        .unwrap();
        let g2 = construct_g_psi(&seq2).unwrap();
        assert_eq!(g2.cdf(0.3), 1.0);
        assert_eq!(g2.power(0.2, 2.0), 0.5);

        let bad = LevelSequence::new(vec![vec![1], vec![2]], vec![0.3, 0.1], 0.5, None).unwrap();
        assert!(matches!(construct_g_psi(&bad), Err(Error::NotMonotone(1))));
    }

    #[test]
    fn smoothed_g_psi_is_monotone() {
        let seq = LevelSequence::new(
            vec![vec![1], vec![2], vec![4]],
            vec![0.1, 0.3, 0.6],
            0.3,
            Some(1.0),
        )
        .unwrap();
        let s = construct_g_psi(&seq).unwrap().smoothed();
        let mut last = 0.0;
        for i in 0..=120 {
            let v = s.cdf(i as f64 / 100.0);
            assert!(v >= last);
            last = v;
        }
        assert_eq!(s.cdf(1.0), 1.0);
        let q = s.quantile(0.5);
        assert!((s.cdf(q) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn level_u_values() {
        assert!(levels_u(50.0, 10).unwrap().abs() < 1e-15);
        let u = levels_u(1.0, 100).unwrap();
        // cross-check by bisection on Phi
        let (mut lo, mut hi) = (0.0f64, 10.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if normal::sf(mid) > 1e-4 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert!((u - lo).abs() < 1e-10);
        assert!((u - 3.719).abs() < 1e-3);
        let big = levels_u(1.0, 1_000_000).unwrap();
        let ratio = big / (4.0 * 1e6f64.ln()).sqrt();
        assert!((0.9..=1.1).contains(&ratio), "{ratio}");
        assert!(levels_u(100.0, 10).is_err());
        assert!(levels_u(0.0, 10).is_err());
    }

    #[test]
    fn normalizer_values() {
        let (a3, _) = normalizers(3.0).unwrap();
        assert_eq!(a3, (2.0 * 3f64.ln()).sqrt());
        let (a, b) = normalizers(16.0).unwrap();
        let want_a = (2.0 * 16f64.ln()).sqrt();
        assert_eq!(a, want_a);
        assert!(
            (b - (want_a - (16f64.ln().ln() + (4.0 * std::f64::consts::PI).ln()) / (2.0 * want_a)))
                .abs()
                < 1e-15
        );
        assert!(normalizers(2.9).is_err());
        let mut prev = 0.0;
        for n in 3..200 {
            let (a, _) = normalizers(n as f64).unwrap();
            assert!(a > prev);
            prev = a;
        }
    }

    #[test]
    fn gumbel_values() {
        assert_eq!(gumbel_h0(0.0), (-1f64).exp());
        assert_eq!(gumbel_h0(800.0), 1.0);
        assert!((gumbel_h0(-(2f64.ln().ln())) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn limit_h_properties() {
        assert!(limit_h(20.0, 1.0).unwrap() >= 1.0 - 1e-6);
        assert!((limit_h(0.0, 1e-8).unwrap() - gumbel_h0(0.0)).abs() <= 1e-4);
        let a = limit_h(0.0, 0.026).unwrap();
        let b = limit_h_adaptive(0.0, 0.026).unwrap();
        assert!((a - b).abs() <= 1e-8, "{a} vs {b}");
        assert!(limit_h(0.0, 0.0).is_err());
        let mut prev = 0.0;
        for i in -40..=60 {
            let v = limit_h(i as f64 / 5.0, 0.026).unwrap();
            assert!(v >= prev && v <= 1.0);
            prev = v;
        }
    }

    #[test]
    fn equicorrelated_cdf_special_cases() {
        let w: f64 = 2.1;
        let iid = equicorrelated_max_cdf(10.0, 0.0, w).unwrap();
        assert!((iid - normal::cdf(w).powi(10)).abs() < 1e-15);
        let single = equicorrelated_max_cdf(1.0, 0.4, w).unwrap();
        assert!((single - normal::cdf(w)).abs() < 1e-10);
        let gh = equicorrelated_max_cdf(100.0, 0.1, 2.5).unwrap();
        let ad = equicorrelated_max_cdf_adaptive(100.0, 0.1, 2.5).unwrap();
        assert!((gh - ad).abs() < 1e-8, "{gh} vs {ad}");
        assert!(equicorrelated_max_cdf(0.5, 0.1, 0.0).is_err());
        assert!(equicorrelated_max_cdf(2.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn equicorrelated_cdf_monotonicity() {
        let mut prev = 0.0;
        for i in -20..=60 {
            let v = equicorrelated_max_cdf(1e4, 0.05, i as f64 / 10.0).unwrap();
            assert!(v >= prev - 1e-15);
            prev = v;
        }
        let mut prev = 1.0;
        for n in [1.0, 10.0, 100.0, 1e4, 1e6] {
            let v = equicorrelated_max_cdf(n, 0.05, 3.0).unwrap();
            assert!(v <= prev + 1e-15);
            prev = v;
        }
    }

    #[test]
    fn extremal_index_values() {
        assert_eq!(extremal_index(0.3, 0.3).unwrap(), 1.0);
        assert!((extremal_index(0.5, 0.25).unwrap() - 0.5).abs() < 1e-15);
        assert!(matches!(
            extremal_index(0.25, 0.5),
            Err(Error::InconsistentExtremalIndex { .. })
        ));
        assert!(extremal_index(1.0, 0.5).is_err());
    }

    #[test]
    fn moving_max_theta_exact() {
        let model = FieldModel::MovingMax {
            window: vec![2, 2],
            innovation: Marginal::Uniform,
        };
        let est = extremal_index_exact(&model, &[200, 200], (-1f64).exp()).unwrap();
        let want = 201.0f64 * 201.0 / (4.0 * 200.0 * 200.0);
        assert!((est.theta - want).abs() < 1e-9, "{} vs {want}", est.theta);
        assert!((est.theta - 0.25).abs() <= 0.02);
    }
}
