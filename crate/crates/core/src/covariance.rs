//! Polya-type characteristic polygons and the separable lattice covariance
//! built from them.
//!
//! Two concrete polygons are provided. `eta1` interpolates
//! `gamma1 * ln(ln k) / ln k` at integers `k >= 28`, with a single extra
//! knot at 1; `eta2` interpolates `gamma2 / ln k` at integers `k >= 3`, again
//! with one extra knot at 1. Both are convex, decreasing and positive on
//! `[0, inf)`, hence characteristic functions, and the covariance of the
//! example field is `r(i, j) = eta1(i) * eta2(j)`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::lattice::MultiIndex;

/// Number of integer knots stored before switching to the closed form.
pub const DEFAULT_KNOT_HORIZON: usize = 1_000_000;

fn lnln_over_ln(k: f64) -> f64 {
    k.ln().ln() / k.ln()
}

/// `27 ln(ln 27)/ln 27 - 26 ln(ln 28)/ln 28`: the value of `eta1(1) / gamma1`.
pub fn eta1_unit_knot() -> f64 {
    27.0 * lnln_over_ln(27.0) - 26.0 * lnln_over_ln(28.0)
}

/// `2/ln 2 - 1/ln 3`: the value of `eta2(1) / gamma2`.
pub fn eta2_unit_knot() -> f64 {
    2.0 / 2f64.ln() - 1.0 / 3f64.ln()
}

/// How a polygon is continued past its last stored knot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum TailRule {
    /// `gamma1 ln(ln t) / ln t` at integers, linear in between.
    Eta1 { gamma1: f64 },
    /// `gamma2 / ln t` at integers, linear in between.
    Eta2 { gamma2: f64 },
    /// Constant continuation of the last knot value.
    Hold,
}

impl TailRule {
    fn at_integer(&self, k: f64) -> Option<f64> {
        match *self {
            TailRule::Eta1 { gamma1 } => Some(gamma1 * lnln_over_ln(k)),
            TailRule::Eta2 { gamma2 } => Some(gamma2 / k.ln()),
            TailRule::Hold => None,
        }
    }
}

/// Piecewise-linear even function on R given by its knots on `[0, inf)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CharacteristicPolygon {
    knots: Vec<(f64, f64)>,
    tail: TailRule,
}

impl CharacteristicPolygon {
    /// Wraps raw knots without validation; see [`validate_polya`].
    pub fn from_knots(knots: Vec<(f64, f64)>, tail: TailRule) -> Result<Self> {
        if knots.is_empty() {
            return Err(invalid("knots", "polygon needs at least one knot"));
        }
        if knots.windows(2).any(|w| !(w[0].0 < w[1].0)) {
            return Err(invalid("knots", "abscissae must be strictly increasing"));
        }
        if knots.iter().any(|&(t, v)| !t.is_finite() || !v.is_finite()) {
            return Err(invalid("knots", "non-finite knot"));
        }
        Ok(Self { knots, tail })
    }

    pub fn knots(&self) -> &[(f64, f64)] {
        &self.knots
    }

    pub fn tail(&self) -> TailRule {
        self.tail
    }

    fn last_knot(&self) -> (f64, f64) {
        *self.knots.last().expect("non-empty")
    }

    /// Evaluates the polygon at any real `t`, reflecting negative arguments.
    pub fn eval(&self, t: f64) -> f64 {
        let t = t.abs();
        let (t_last, v_last) = self.last_knot();
        if t <= t_last {
            // first knot with abscissa >= t
            let idx = self.knots.partition_point(|&(kt, _)| kt < t);
            let (t1, v1) = self.knots[idx];
            if t1 == t || idx == 0 {
                return v1;
            }
            let (t0, v0) = self.knots[idx - 1];
            return v0 + (v1 - v0) * (t - t0) / (t1 - t0);
        }
        let lo = t.floor();
        let hi = lo + 1.0;
        let value_at = |k: f64| -> f64 {
            if k <= t_last {
                v_last
            } else {
                self.tail.at_integer(k).unwrap_or(v_last)
            }
        };
        let (vl, vh) = (value_at(lo), value_at(hi));
        if t == lo {
            vl
        } else if lo < t_last {
            // between the last knot and the next integer
            v_last + (vh - v_last) * (t - t_last) / (hi - t_last)
        } else {
            vl + (vh - vl) * (t - lo)
        }
    }

    /// Knots plus the first tail point, the sequence validation runs over.
    fn validation_points(&self) -> Vec<(f64, f64)> {
        let mut pts = self.knots.clone();
        let (t_last, _) = self.last_knot();
        let next = t_last.floor() + 1.0;
        if let Some(v) = self.tail.at_integer(next) {
            pts.push((next, v));
        }
        pts
    }
}

/// Outcome of a Polya-criterion check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolyaReport {
    pub valid: bool,
    /// Violations in check order: origin, positivity, nonincreasing, convexity.
    pub diagnostics: Vec<String>,
}

impl PolyaReport {
    pub fn first_violation(&self) -> Option<&str> {
        self.diagnostics.first().map(String::as_str)
    }
}

/// Checks value 1 at 0, positivity, monotone decrease and convexity.
///
/// Convexity is tested by cross-multiplied slope comparison with zero
/// tolerance.
pub fn validate_polya(p: &CharacteristicPolygon) -> PolyaReport {
    let pts = p.validation_points();
    let mut diagnostics = Vec::new();
    if pts[0] != (0.0, 1.0) {
        diagnostics.push(format!(
            "origin violated: first knot is ({}, {}), expected (0, 1)",
            pts[0].0, pts[0].1
        ));
    }
    if let Some(i) = pts.iter().position(|&(_, v)| v <= 0.0) {
        diagnostics.push(format!(
            "positivity violated at knot {i} (t = {})",
            pts[i].0
        ));
    }
    if let Some(i) = pts.windows(2).position(|w| w[1].1 > w[0].1) {
        diagnostics.push(format!(
            "nonincreasing violated between knots {i} and {} (t = {} -> {})",
            i + 1,
            pts[i].0,
            pts[i + 1].0
        ));
    }
    let convex_break = pts.windows(3).position(|w| {
        let (t0, v0) = w[0];
        let (t1, v1) = w[1];
        let (t2, v2) = w[2];
        // slope(0,1) <= slope(1,2)  <=>  (v1-v0)(t2-t1) <= (v2-v1)(t1-t0)
        (v1 - v0) * (t2 - t1) > (v2 - v1) * (t1 - t0)
    });
    if let Some(i) = convex_break {
        diagnostics.push(format!(
            "convexity violated at knot {} (t = {})",
            i + 1,
            pts[i + 1].0
        ));
    }
    PolyaReport {
        valid: diagnostics.is_empty(),
        diagnostics,
    }
}

fn check_unit_open(name: &'static str, g: f64) -> Result<()> {
    if g > 0.0 && g < 1.0 {
        Ok(())
    } else {
        Err(invalid(name, format!("{g} is outside (0, 1)")))
    }
}

fn ensure_polya(p: CharacteristicPolygon) -> Result<CharacteristicPolygon> {
    let report = validate_polya(&p);
    if report.valid {
        Ok(p)
    } else {
        Err(Error::InfeasiblePolygon(report.diagnostics.join("; ")))
    }
}

/// `eta1` with integer knots stored up to `horizon` (at least 28).
pub fn build_eta1_with_horizon(gamma1: f64, horizon: usize) -> Result<CharacteristicPolygon> {
    check_unit_open("gamma1", gamma1)?;
    let horizon = horizon.max(28);
    let mut knots = Vec::with_capacity(horizon - 25);
    knots.push((0.0, 1.0));
    knots.push((1.0, gamma1 * eta1_unit_knot()));
    knots.extend((28..=horizon).map(|k| {
        let k = k as f64;
        (k, gamma1 * lnln_over_ln(k))
    }));
    ensure_polya(CharacteristicPolygon::from_knots(
        knots,
        TailRule::Eta1 { gamma1 },
    )?)
}

pub fn build_eta1(gamma1: f64) -> Result<CharacteristicPolygon> {
    build_eta1_with_horizon(gamma1, DEFAULT_KNOT_HORIZON)
}

/// `eta2` with integer knots stored up to `horizon` (at least 3).
pub fn build_eta2_with_horizon(gamma2: f64, horizon: usize) -> Result<CharacteristicPolygon> {
    check_unit_open("gamma2", gamma2)?;
    let horizon = horizon.max(3);
    let mut knots = Vec::with_capacity(horizon);
    knots.push((0.0, 1.0));
    knots.push((1.0, gamma2 * eta2_unit_knot()));
    knots.extend((3..=horizon).map(|k| {
        let k = k as f64;
        (k, gamma2 / k.ln())
    }));
    ensure_polya(CharacteristicPolygon::from_knots(
        knots,
        TailRule::Eta2 { gamma2 },
    )?)
}

pub fn build_eta2(gamma2: f64) -> Result<CharacteristicPolygon> {
    build_eta2_with_horizon(gamma2, DEFAULT_KNOT_HORIZON)
}

/// The pair `(gamma1, gamma2)` scaling the two polygons.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaPair {
    pub gamma1: f64,
    pub gamma2: f64,
}

impl Default for GammaPair {
    fn default() -> Self {
        Self {
            gamma1: 0.26,
            gamma2: 0.10,
        }
    }
}

impl GammaPair {
    /// Validated constructor.
    pub fn new(gamma1: f64, gamma2: f64) -> Result<Self> {
        let g = Self { gamma1, gamma2 };
        if validate_gammas(&g) {
            Ok(g)
        } else {
            Err(invalid(
                "gammas",
                format!("({gamma1}, {gamma2}) violates the admissibility chain"),
            ))
        }
    }

    /// `(1 - 2 gamma1) / (1 + 2 gamma1)`, the ceiling for `delta`.
    pub fn delta_ceiling(&self) -> f64 {
        (1.0 - 2.0 * self.gamma1) / (1.0 + 2.0 * self.gamma1)
    }

    pub fn kappa(&self) -> f64 {
        self.gamma1 * self.gamma2
    }
}

/// `gamma1 > 1/4` and `eta1(1) < eta2(1) < (1 - 2 gamma1)/(1 + 2 gamma1)`,
/// with both gammas in (0, 1).
pub fn validate_gammas(g: &GammaPair) -> bool {
    let in_unit = |x: f64| x > 0.0 && x < 1.0;
    if !in_unit(g.gamma1) || !in_unit(g.gamma2) {
        return false;
    }
    let lhs = g.gamma1 * eta1_unit_knot();
    let mid = g.gamma2 * eta2_unit_knot();
    g.gamma1 > 0.25 && lhs < mid && mid < g.delta_ceiling()
}

/// Product covariance `r(k) = prod_i axes[i](k_i)` on Z^d.
#[derive(Debug, Clone, PartialEq)]
pub struct SeparableCovariance {
    axes: Vec<CharacteristicPolygon>,
    gammas: Option<GammaPair>,
}

impl SeparableCovariance {
    pub fn new(axes: Vec<CharacteristicPolygon>) -> Result<Self> {
        if axes.is_empty() {
            return Err(invalid("axes", "need at least one axis"));
        }
        Ok(Self { axes, gammas: None })
    }

    /// The example covariance: `eta1` on axis 0 and, for `d = 2`, `eta2` on
    /// axis 1.
    pub fn example(gammas: GammaPair, d: usize) -> Result<Self> {
        Self::example_with_horizon(gammas, d, DEFAULT_KNOT_HORIZON)
    }

    pub fn example_with_horizon(gammas: GammaPair, d: usize, horizon: usize) -> Result<Self> {
        let gammas = GammaPair::new(gammas.gamma1, gammas.gamma2)?;
        let axes = match d {
            1 => vec![build_eta1_with_horizon(gammas.gamma1, horizon)?],
            2 => vec![
                build_eta1_with_horizon(gammas.gamma1, horizon)?,
                build_eta2_with_horizon(gammas.gamma2, horizon)?,
            ],
            _ => {
                return Err(invalid(
                    "d",
                    format!("the example covariance is defined for d in {{1, 2}}, got {d}; supply explicit axes"),
                ))
            }
        };
        Ok(Self {
            axes,
            gammas: Some(gammas),
        })
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn axes(&self) -> &[CharacteristicPolygon] {
        &self.axes
    }

    pub fn gammas(&self) -> Option<GammaPair> {
        self.gammas
    }

    /// `r(k)` at a lattice offset.
    pub fn covariance_at(&self, k: &[i64]) -> f64 {
        assert_eq!(k.len(), self.axes.len(), "offset dimension mismatch");
        self.axes
            .iter()
            .zip(k)
            .map(|(axis, &ki)| axis.eval(ki as f64))
            .product()
    }

    /// Supremum of `r` over the punctured box `[-R, R]^d \ {0}`.
    pub fn delta_sup(&self, search_radius: usize) -> Result<DeltaReport> {
        if search_radius < 1 {
            return Err(invalid("search_radius", "must be at least 1"));
        }
        let d = self.dim();
        let r = search_radius as i64;
        let mut best = f64::NEG_INFINITY;
        let mut argmax = vec![0; d];
        for idx in MultiIndex::new(vec![-r; d], vec![r; d]) {
            if idx.iter().all(|&c| c == 0) {
                continue;
            }
            let v = self.covariance_at(&idx);
            if v > best {
                best = v;
                argmax = idx;
            }
        }
        let ceiling = self.gammas.map(|g| g.delta_ceiling());
        Ok(DeltaReport {
            delta: best,
            argmax,
            ceiling,
            below_ceiling: ceiling.map(|c| best < c),
        })
    }
}

/// Result of [`SeparableCovariance::delta_sup`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeltaReport {
    pub delta: f64,
    pub argmax: Vec<i64>,
    /// `(1 - 2 gamma1)/(1 + 2 gamma1)` when the covariance came from a gamma pair.
    pub ceiling: Option<f64>,
    pub below_ceiling: Option<bool>,
}

/// JSON description of a covariance:
/// `{ "gamma1": .., "gamma2": .., "d": .., "axes": [[[t, v], ...], ...] }`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CovarianceSpec {
    #[serde(default = "default_gamma1")]
    pub gamma1: f64,
    #[serde(default = "default_gamma2")]
    pub gamma2: f64,
    #[serde(default = "default_d")]
    pub d: usize,
    /// Explicit knot lists, one per axis; tails are held constant.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub axes: Option<Vec<Vec<[f64; 2]>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub knot_horizon: Option<usize>,
}

fn default_gamma1() -> f64 {
    GammaPair::default().gamma1
}
fn default_gamma2() -> f64 {
    GammaPair::default().gamma2
}
fn default_d() -> usize {
    2
}

impl Default for CovarianceSpec {
    fn default() -> Self {
        Self {
            gamma1: default_gamma1(),
            gamma2: default_gamma2(),
            d: default_d(),
            axes: None,
            knot_horizon: None,
        }
    }
}

impl CovarianceSpec {
    pub fn gammas(&self) -> GammaPair {
        GammaPair {
            gamma1: self.gamma1,
            gamma2: self.gamma2,
        }
    }

    pub fn build(&self) -> Result<SeparableCovariance> {
        match &self.axes {
            None => SeparableCovariance::example_with_horizon(
                self.gammas(),
                self.d,
                self.knot_horizon.unwrap_or(DEFAULT_KNOT_HORIZON),
            ),
            Some(axes) => {
                if axes.len() != self.d {
                    return Err(Error::DimensionMismatch {
                        expected: self.d,
                        got: axes.len(),
                    });
                }
                let polys = axes
                    .iter()
                    .map(|knots| {
                        let knots = knots.iter().map(|&[t, v]| (t, v)).collect();
                        ensure_polya(CharacteristicPolygon::from_knots(knots, TailRule::Hold)?)
                    })
                    .collect::<Result<Vec<_>>>()?;
                SeparableCovariance::new(polys)
            }
        }
    }
}
