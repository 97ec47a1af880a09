//! Rectangles in N^d, partial maxima over them, and monotone curves.
//!
//! Lattice coordinates are 1-based and rectangles are inclusive, so the
//! rectangle `[1, n]` covers `n^* = n_1 * ... * n_d` cells.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::sampling::FieldSample;

/// Odometer over the integer box `lo..=hi` (last coordinate fastest).
#[derive(Debug, Clone)]
pub struct MultiIndex {
    lo: Vec<i64>,
    hi: Vec<i64>,
    next: Option<Vec<i64>>,
}

impl MultiIndex {
    pub fn new(lo: Vec<i64>, hi: Vec<i64>) -> Self {
        assert_eq!(lo.len(), hi.len());
        let empty = lo.iter().zip(&hi).any(|(l, h)| l > h);
        let next = if empty { None } else { Some(lo.clone()) };
        Self { lo, hi, next }
    }
}

impl Iterator for MultiIndex {
    type Item = Vec<i64>;

    fn next(&mut self) -> Option<Vec<i64>> {
        let current = self.next.take()?;
        let mut succ = current.clone();
        let mut axis = succ.len();
        loop {
            if axis == 0 {
                break;
            }
            axis -= 1;
            if succ[axis] < self.hi[axis] {
                succ[axis] += 1;
                self.next = Some(succ);
                break;
            }
            succ[axis] = self.lo[axis];
        }
        Some(current)
    }
}

/// Product of the coordinates, `n^*`.
pub fn star(n: &[usize]) -> u128 {
    n.iter().map(|&x| x as u128).product()
}

/// Inclusive rectangle `[lo, hi]` in 1-based lattice coordinates.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rectangle {
    pub lo: Vec<usize>,
    pub hi: Vec<usize>,
}

impl Rectangle {
    pub fn new(lo: Vec<usize>, hi: Vec<usize>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::DimensionMismatch {
                expected: lo.len(),
                got: hi.len(),
            });
        }
        Ok(Self { lo, hi })
    }

    /// The rectangle `[1, dims]`; empty if any extent is 0.
    pub fn corner(dims: &[usize]) -> Self {
        Self {
            lo: vec![1; dims.len()],
            hi: dims.to_vec(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.lo.iter().zip(&self.hi).any(|(l, h)| l > h)
    }

    pub fn extents(&self) -> Vec<usize> {
        if self.is_empty() {
            return vec![0; self.lo.len()];
        }
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(l, h)| h - l + 1)
            .collect()
    }
}

/// Maximum of the sample over `r`; `-inf` for an empty rectangle.
pub fn block_max(s: &FieldSample, r: &Rectangle) -> Result<f64> {
    let dims = s.dims();
    if r.lo.len() != dims.len() {
        return Err(Error::DimensionMismatch {
            expected: dims.len(),
            got: r.lo.len(),
        });
    }
    if r.is_empty() {
        return Ok(f64::NEG_INFINITY);
    }
    if r.lo.contains(&0) || r.hi.iter().zip(dims).any(|(h, n)| h > n) {
        return Err(Error::OutOfRange {
            lo: r.lo.clone(),
            hi: r.hi.clone(),
            dims: dims.to_vec(),
        });
    }
    Ok(max_in_box(s.values(), dims, &r.lo, &r.hi))
}

// Unchecked row-major scan; the last axis is contiguous.
pub(crate) fn max_in_box(values: &[f64], dims: &[usize], lo: &[usize], hi: &[usize]) -> f64 {
    let d = dims.len();
    let mut strides = vec![1usize; d];
    for i in (0..d.saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * dims[i + 1];
    }
    let last = d - 1;
    let outer_lo: Vec<i64> = lo[..last].iter().map(|&x| x as i64).collect();
    let outer_hi: Vec<i64> = hi[..last].iter().map(|&x| x as i64).collect();
    let mut best = f64::NEG_INFINITY;
    for outer in MultiIndex::new(outer_lo, outer_hi) {
        let base: usize = outer
            .iter()
            .zip(&strides)
            .map(|(&c, &st)| (c as usize - 1) * st)
            .sum();
        let row = &values[base + lo[last] - 1..base + hi[last]];
        best = row.iter().copied().fold(best, f64::max);
    }
    best
}

/// The curve `n -> (floor(n / ln n), floor(ln n))`, defined for `n >= 3`.
pub fn curve_psi_example(n: usize) -> Result<[usize; 2]> {
    if n < 3 {
        return Err(Error::CurveDomain {
            index: n,
            reason: "both coordinates are >= 1 only for n >= 3".into(),
        });
    }
    let ln = (n as f64).ln();
    Ok([(n as f64 / ln).floor() as usize, ln.floor() as usize])
}

/// `Delta(n) = (n, ..., n)`.
pub fn curve_diagonal(n: usize, d: usize) -> Vec<usize> {
    vec![n; d]
}

/// Raw `psi_example` points for `n = 3..=last` with the componentwise
/// running-max repair applied.
pub fn psi_example_repaired(last: usize) -> Vec<[usize; 2]> {
    let mut out = Vec::with_capacity(last.saturating_sub(2));
    let mut run = [0usize; 2];
    for n in 3..=last {
        let p = curve_psi_example(n).expect("n >= 3");
        run = [run[0].max(p[0]), run[1].max(p[1])];
        out.push(run);
    }
    out
}

/// A map `N -> N^d`, either closed-form or tabulated.
///
/// Index `n` is 1-based. Tables are finite; asking past the end is an error.
#[derive(Debug, Clone, PartialEq)]
pub enum MonotoneCurve {
    Diagonal { d: usize },
    Table { points: Vec<Vec<usize>> },
}

impl MonotoneCurve {
    pub fn diagonal(d: usize) -> Self {
        Self::Diagonal { d }
    }

    pub fn from_table(points: Vec<Vec<usize>>) -> Result<Self> {
        let d = points
            .first()
            .map(Vec::len)
            .ok_or_else(|| invalid("table", "empty curve table"))?;
        if d == 0 || points.iter().any(|p| p.len() != d) {
            return Err(invalid("table", "points must share a positive dimension"));
        }
        Ok(Self::Table { points })
    }

    /// Tabulates `f(1..=horizon)`.
    pub fn from_fn(horizon: usize, f: impl Fn(usize) -> Vec<usize>) -> Result<Self> {
        Self::from_table((1..=horizon).map(f).collect())
    }

    /// The example curve with repeated consecutive points removed, so that
    /// `psi(n)^*` is strictly increasing. Built from raw indices `3..=last`.
    pub fn psi_example(last: usize) -> Result<Self> {
        let mut points: Vec<Vec<usize>> = Vec::new();
        for p in psi_example_repaired(last) {
            if points.last().map(|q| q.as_slice() != p).unwrap_or(true) {
                points.push(p.to_vec());
            }
        }
        Self::from_table(points)
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Diagonal { d } => *d,
            Self::Table { points } => points[0].len(),
        }
    }

    /// Number of points available, `None` when unbounded.
    pub fn len(&self) -> Option<usize> {
        match self {
            Self::Diagonal { .. } => None,
            Self::Table { points } => Some(points.len()),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == Some(0)
    }

    pub fn point(&self, n: usize) -> Result<Vec<usize>> {
        if n == 0 {
            return Err(Error::CurveDomain {
                index: 0,
                reason: "curves are indexed from 1".into(),
            });
        }
        match self {
            Self::Diagonal { d } => Ok(curve_diagonal(n, *d)),
            Self::Table { points } => {
                points
                    .get(n - 1)
                    .cloned()
                    .ok_or_else(|| Error::CurveDomain {
                        index: n,
                        reason: format!("table has {} points", points.len()),
                    })
            }
        }
    }

    pub fn star_at(&self, n: usize) -> Result<u128> {
        Ok(star(&self.point(n)?))
    }

    /// Points `1..=horizon`.
    pub fn materialize(&self, horizon: usize) -> Result<Vec<Vec<usize>>> {
        (1..=horizon).map(|n| self.point(n)).collect()
    }
}

/// Curve description as it appears in configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CurveSpec {
    Diagonal {
        #[serde(default = "two")]
        d: usize,
    },
    PsiExample {
        /// Largest raw index used to tabulate the curve.
        #[serde(default = "default_psi_last")]
        last: usize,
    },
    Table {
        table: Vec<Vec<usize>>,
    },
}

fn two() -> usize {
    2
}
fn default_psi_last() -> usize {
    100_000
}

impl CurveSpec {
    pub fn build(&self) -> Result<MonotoneCurve> {
        match self {
            CurveSpec::Diagonal { d } => Ok(MonotoneCurve::diagonal(*d)),
            CurveSpec::PsiExample { last } => MonotoneCurve::psi_example(*last),
            CurveSpec::Table { table } => MonotoneCurve::from_table(table.clone()),
        }
    }
}

/// Result of [`validate_curve`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveReport {
    pub valid: bool,
    pub violations: Vec<String>,
}

impl CurveReport {
    pub fn first_violation(&self) -> Option<&str> {
        self.violations.first().map(String::as_str)
    }
}

/// Finite-horizon check of the monotone-curve conditions: componentwise
/// nondecreasing with distinct consecutive points, `psi(n)^*/psi(n+1)^* >=
/// 1 - tol_ratio` for `n >= n_ratio`, and every coordinate growing.
pub fn validate_curve(
    psi: &MonotoneCurve,
    horizon: usize,
    tol_ratio: f64,
    n_ratio: usize,
) -> Result<CurveReport> {
    if horizon < 2 {
        return Err(invalid("horizon", "must be at least 2"));
    }
    let pts = psi.materialize(horizon)?;
    let mut violations = Vec::new();

    for (i, w) in pts.windows(2).enumerate() {
        let n = i + 1;
        if w[0].iter().zip(&w[1]).any(|(a, b)| a > b) {
            violations.push(format!(
                "monotonicity violated at n = {n}: {:?} -> {:?}",
                w[0], w[1]
            ));
            break;
        }
        if w[0] == w[1] {
            violations.push(format!(
                "strictness violated at n = {n}: psi(n) = psi(n+1) = {:?}",
                w[0]
            ));
            break;
        }
    }

    for (i, w) in pts.windows(2).enumerate() {
        let n = i + 1;
        if n < n_ratio {
            continue;
        }
        let ratio = star(&w[0]) as f64 / star(&w[1]) as f64;
        if ratio < 1.0 - tol_ratio {
            violations.push(format!(
                "ratio violated at n = {n}: psi(n)*/psi(n+1)* = {ratio} < 1 - {tol_ratio}"
            ));
            break;
        }
    }

    let (first, last) = (&pts[0], &pts[pts.len() - 1]);
    for (axis, (a, b)) in first.iter().zip(last).enumerate() {
        if b <= a {
            violations.push(format!(
                "growth violated: coordinate {axis} does not increase over the horizon"
            ));
        }
    }

    Ok(CurveReport {
        valid: violations.is_empty(),
        violations,
    })
}

/// Defaults: `tol_ratio = 0.05` checked from `horizon / 2`.
pub fn validate_curve_default(psi: &MonotoneCurve, horizon: usize) -> Result<CurveReport> {
    validate_curve(psi, horizon, 0.05, horizon / 2)
}

fn in_box(phi: &[usize], psi: &[usize], c: f64) -> bool {
    phi.iter().zip(psi).all(|(&f, &p)| {
        let (f, p) = (f as f64, p as f64);
        p / c <= f && f <= c * p
    })
}

/// Whether `phi(n)` lies in `U(psi, C)` for every `n` in `n0..=horizon`.
///
/// Witnesses `j` are searched among indices with `psi(j)^*` in
/// `[phi(n)^* / C^d, phi(n)^* C^d]`, which contains every candidate.
pub fn in_neighborhood(
    phi: &MonotoneCurve,
    psi: &MonotoneCurve,
    c: f64,
    horizon: usize,
    n0: usize,
) -> Result<bool> {
    if !(c >= 1.0) {
        return Err(invalid("C", format!("{c} < 1")));
    }
    let d = psi.dim();
    if phi.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: phi.dim(),
        });
    }
    let cd = c.powi(d as i32);
    let n0 = n0.max(1);
    for n in n0..=horizon {
        let p = phi.point(n)?;
        let s = star(&p) as f64;
        let (lo_star, hi_star) = (s / cd, s * cd);
        let mut j = first_index_with_star_at_least(psi, lo_star)?;
        let mut found = false;
        while let Some(j_now) = j {
            let q = match psi.point(j_now) {
                Ok(q) => q,
                Err(_) => break,
            };
            if star(&q) as f64 > hi_star {
                break;
            }
            if in_box(&p, &q, c) {
                found = true;
                break;
            }
            j = Some(j_now + 1);
        }
        if !found {
            return Ok(false);
        }
    }
    Ok(true)
}

// Exponential then binary search on the strictly increasing psi(j)^*.
fn first_index_with_star_at_least(psi: &MonotoneCurve, target: f64) -> Result<Option<usize>> {
    let ok = |j: usize| -> Option<bool> { psi.star_at(j).ok().map(|s| s as f64 >= target) };
    let limit = psi.len();
    let mut hi = 1usize;
    loop {
        if let Some(l) = limit {
            if hi >= l {
                hi = l;
                break;
            }
        }
        match ok(hi) {
            Some(true) => break,
            Some(false) => hi *= 2,
            None => return Ok(None),
        }
    }
    if ok(hi) != Some(true) {
        return Ok(None);
    }
    let mut lo = 1usize;
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if ok(mid) == Some(true) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    Ok(Some(lo))
}

/// Joins consecutive waypoints by unit steps, raising coordinates in index
/// order `0..d`.
pub fn densify_to_curve(m: &[Vec<usize>]) -> Result<MonotoneCurve> {
    let first = m.first().ok_or_else(|| invalid("m", "empty sequence"))?;
    let d = first.len();
    let mut out = vec![first.clone()];
    for (k, w) in m.windows(2).enumerate() {
        let (a, b) = (&w[0], &w[1]);
        if b.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: b.len(),
            });
        }
        if a.iter().zip(b).any(|(x, y)| x > y) || a == b {
            return Err(Error::NotMonotone(k + 1));
        }
        let mut cur = a.clone();
        for axis in 0..d {
            while cur[axis] < b[axis] {
                cur[axis] += 1;
                out.push(cur.clone());
            }
        }
    }
    MonotoneCurve::from_table(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn multi_index_counts() {
        assert_eq!(MultiIndex::new(vec![-1, -1], vec![1, 1]).count(), 9);
        assert_eq!(MultiIndex::new(vec![1, 2], vec![0, 2]).count(), 0);
        let v: Vec<_> = MultiIndex::new(vec![0, 0], vec![1, 1]).collect();
        assert_eq!(v, vec![vec![0, 0], vec![0, 1], vec![1, 0], vec![1, 1]]);
    }

    #[test]
    fn block_max_cases() {
        let s = FieldSample::new(vec![2, 3], vec![1.0, 5.0, 2.0, 0.5, -1.0, 9.0], 0).unwrap();
        let single = Rectangle::new(vec![2, 2], vec![2, 2]).unwrap();
        assert_eq!(block_max(&s, &single).unwrap(), -1.0);
        let empty = Rectangle::new(vec![2, 2], vec![1, 3]).unwrap();
        assert_eq!(block_max(&s, &empty).unwrap(), f64::NEG_INFINITY);
        assert_eq!(block_max(&s, &Rectangle::corner(&[2, 3])).unwrap(), 9.0);
        assert_eq!(block_max(&s, &Rectangle::corner(&[2, 2])).unwrap(), 5.0);
        let too_big = Rectangle::new(vec![1, 1], vec![3, 1]).unwrap();
        assert!(matches!(
            block_max(&s, &too_big),
            Err(Error::OutOfRange { .. })
        ));
    }

    #[test]
    fn planted_maximum_is_found() {
        let dims = vec![7, 5, 4];
        let n: usize = dims.iter().product();
        let mut values: Vec<f64> = (0..n).map(|i| ((i * 37) % 101) as f64 / 101.0).collect();
        values[77] = 42.0;
        let s = FieldSample::new(dims.clone(), values, 1).unwrap();
        assert_eq!(block_max(&s, &Rectangle::corner(&dims)).unwrap(), 42.0);
    }

    #[test]
    fn psi_example_points() {
        assert_eq!(curve_psi_example(3).unwrap(), [2, 1]);
        assert_eq!(curve_psi_example(8).unwrap(), [3, 2]);
        assert!(curve_psi_example(2).is_err());
        // the repair is a no-op from n = 3 on
        for (i, p) in psi_example_repaired(5000).iter().enumerate() {
            assert_eq!(*p, curve_psi_example(i + 3).unwrap());
        }
    }

    #[test]
    fn psi_example_table_is_a_valid_curve() {
        let c = MonotoneCurve::psi_example(20_000).unwrap();
        let len = c.len().unwrap();
        let rep = validate_curve_default(&c, len).unwrap();
        assert!(rep.valid, "{:?}", rep.violations);
        assert_eq!(c.point(1).unwrap(), vec![2, 1]);
    }

    #[test]
    fn diagonal_curve() {
        assert_eq!(curve_diagonal(1, 2), vec![1, 1]);
        assert_eq!(curve_diagonal(5, 3), vec![5, 5, 5]);
        let c = MonotoneCurve::diagonal(3);
        assert_eq!(c.star_at(4).unwrap(), 64);
        assert!(validate_curve(&c, 200, 0.05, 100).unwrap().valid);
        assert!(validate_curve(&c, 200, 0.0, 1)
            .unwrap()
            .violations
            .iter()
            .all(|v| !v.contains("growth")));
    }

    #[test]
    fn validate_curve_rejections() {
        let doubling = MonotoneCurve::from_fn(20, |n| vec![1usize << n, 1]).unwrap();
        let rep = validate_curve(&doubling, 20, 0.05, 10).unwrap();
        assert!(!rep.valid);
        assert!(rep.first_violation().unwrap().starts_with("ratio violated"));

        let constant = MonotoneCurve::from_fn(10, |_| vec![3, 3]).unwrap();
        let rep = validate_curve(&constant, 10, 0.05, 5).unwrap();
        assert!(rep
            .first_violation()
            .unwrap()
            .starts_with("strictness violated"));

        let dip = MonotoneCurve::from_table(vec![vec![1, 1], vec![2, 1], vec![1, 3]]).unwrap();
        assert!(validate_curve(&dip, 3, 1.0, 1)
            .unwrap()
            .first_violation()
            .unwrap()
            .starts_with("monotonicity"));
        assert!(validate_curve(&dip, 1, 0.1, 1).is_err());
    }

    #[test]
    fn neighborhood_examples() {
        let delta = MonotoneCurve::diagonal(2);
        assert!(in_neighborhood(&delta, &delta, 1.0, 300, 1).unwrap());
        let wide = MonotoneCurve::from_fn(400, |n| vec![2 * n, n]).unwrap();
        assert!(in_neighborhood(&wide, &delta, 2.0, 400, 1).unwrap());
        assert!(!in_neighborhood(&wide, &delta, 1.5, 400, 1).unwrap());
        let square = MonotoneCurve::from_fn(100, |n| vec![n * n, n]).unwrap();
        assert!(!in_neighborhood(&square, &delta, 3.0, 100, 1).unwrap());
        // a finite exception prefix n <= C^2 is tolerated
        assert!(in_neighborhood(&square, &delta, 3.0, 9, 1).unwrap());
        assert!(in_neighborhood(&delta, &delta, 0.5, 3, 1).is_err());
    }

    #[test]
    fn densify_examples() {
        let c = densify_to_curve(&[vec![1, 1], vec![2, 2]]).unwrap();
        assert_eq!(
            c.materialize(3).unwrap(),
            vec![vec![1, 1], vec![2, 1], vec![2, 2]]
        );
        let chain = vec![vec![1, 1], vec![1, 2], vec![2, 2]];
        assert_eq!(
            densify_to_curve(&chain).unwrap().materialize(3).unwrap(),
            chain
        );
        assert!(matches!(
            densify_to_curve(&[vec![2, 2], vec![1, 3]]),
            Err(Error::NotMonotone(1))
        ));
        assert!(densify_to_curve(&[vec![2, 2], vec![2, 2]]).is_err());
    }

    #[test]
    fn curve_spec_json() {
        let s: CurveSpec = serde_json::from_str(r#"{"kind":"diagonal"}"#).unwrap();
        assert_eq!(s.build().unwrap(), MonotoneCurve::diagonal(2));
        let t: CurveSpec =
            serde_json::from_str(r#"{"kind":"table","table":[[1,1],[2,1]]}"#).unwrap();
        assert_eq!(t.build().unwrap().point(2).unwrap(), vec![2, 1]);
        let p: CurveSpec = serde_json::from_str(r#"{"kind":"psi_example","last":50}"#).unwrap();
        assert_eq!(p.build().unwrap().point(1).unwrap(), vec![2, 1]);
        assert!(serde_json::from_str::<CurveSpec>(r#"{"kind":"spiral"}"#).is_err());
    }
}
