//! Exact samplers for the example Gaussian field, the equicorrelated
//! comparison maximum, and the oracle models (i.i.d. and moving maxima).
//!
//! The Gaussian field has covariance `r(k) = prod_i eta_i(k_i)`, so its
//! covariance matrix on a rectangle is the Kronecker product of the per-axis
//! Toeplitz matrices `T_i[a, b] = eta_i(a - b)`. Writing `T_i = L_i L_i^T`,
//! applying each `L_i` along its axis to an i.i.d. N(0, 1) array yields an
//! exact draw.

use std::io::Write;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::covariance::{CharacteristicPolygon, SeparableCovariance};
use crate::error::{invalid, Error, Result};
use crate::normal;
use crate::rng::{substream, StreamRng};

/// A realization over the rectangle `[1, dims]`, stored row-major (last axis
/// contiguous).
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSample {
    dims: Vec<usize>,
    values: Vec<f64>,
    seed: u64,
}

impl FieldSample {
    pub fn new(dims: Vec<usize>, values: Vec<f64>, seed: u64) -> Result<Self> {
        if dims.is_empty() || dims.contains(&0) {
            return Err(invalid("dims", "every extent must be positive"));
        }
        let cells: usize = dims.iter().product();
        if values.len() != cells {
            return Err(Error::DimensionMismatch {
                expected: cells,
                got: values.len(),
            });
        }
        Ok(Self { dims, values, seed })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Value at a 1-based lattice index.
    pub fn get(&self, index: &[usize]) -> Option<f64> {
        if index.len() != self.dims.len() {
            return None;
        }
        let mut off = 0;
        for (&i, &n) in index.iter().zip(&self.dims) {
            if i == 0 || i > n {
                return None;
            }
            off = off * n + (i - 1);
        }
        Some(self.values[off])
    }

    /// Maximum over the whole sample.
    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// CSV dump: a `# dims=.. seed=..` header, then one line per index of
    /// the leading axes holding the values along the last axis.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let dims: Vec<String> = self.dims.iter().map(|n| n.to_string()).collect();
        writeln!(w, "# dims={} seed={}", dims.join("x"), self.seed)?;
        let last = *self.dims.last().expect("non-empty dims");
        for row in self.values.chunks(last) {
            let line: Vec<String> = row.iter().map(|v| format!("{v:.17e}")).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        Ok(())
    }
}

/// One-dimensional law used for i.i.d. fields and moving-max innovations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case", deny_unknown_fields)]
pub enum Marginal {
    Uniform,
    StandardNormal,
    /// `low` with probability `p_low`, otherwise `high`.
    TwoAtom {
        low: f64,
        high: f64,
        p_low: f64,
    },
}

impl Marginal {
    pub fn validate(&self) -> Result<()> {
        if let Marginal::TwoAtom { low, high, p_low } = *self {
            if !(low < high) {
                return Err(invalid("two_atom", "need low < high"));
            }
            if !(p_low > 0.0 && p_low < 1.0) {
                return Err(invalid("two_atom", "p_low must be in (0, 1)"));
            }
        }
        Ok(())
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match *self {
            Marginal::Uniform => x.clamp(0.0, 1.0),
            Marginal::StandardNormal => normal::cdf(x),
            Marginal::TwoAtom { low, high, p_low } => {
                if x < low {
                    0.0
                } else if x < high {
                    p_low
                } else {
                    1.0
                }
            }
        }
    }

    /// Left limit `P(Z < x)`.
    pub fn cdf_left(&self, x: f64) -> f64 {
        match *self {
            Marginal::TwoAtom { low, high, p_low } => {
                if x <= low {
                    0.0
                } else if x <= high {
                    p_low
                } else {
                    1.0
                }
            }
            _ => self.cdf(x),
        }
    }

    /// Generalized inverse `inf { x : F(x) >= p }`.
    pub fn quantile(&self, p: f64) -> f64 {
        match *self {
            Marginal::Uniform => p.clamp(0.0, 1.0),
            Marginal::StandardNormal => normal::quantile(p),
            Marginal::TwoAtom { low, high, p_low } => {
                if p <= p_low {
                    low
                } else {
                    high
                }
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Marginal::Uniform => rng.random::<f64>(),
            Marginal::StandardNormal => rng.sample(StandardNormal),
            Marginal::TwoAtom { low, high, p_low } => {
                if rng.random::<f64>() < p_low {
                    low
                } else {
                    high
                }
            }
        }
    }

    /// Support points when the law is discrete.
    pub fn atoms(&self) -> Option<[(f64, f64); 2]> {
        match *self {
            Marginal::TwoAtom { low, high, p_low } => Some([(low, p_low), (high, 1.0 - p_low)]),
            _ => None,
        }
    }
}

/// The law of a stationary field.
#[derive(Debug, Clone, PartialEq)]
pub enum FieldModel {
    GaussianSeparable(SeparableCovariance),
    Iid {
        marginal: Marginal,
    },
    /// `X_k = max { Z_j : k <= j < k + window }` over i.i.d. innovations.
    MovingMax {
        window: Vec<usize>,
        innovation: Marginal,
    },
}

impl FieldModel {
    /// Marginal distribution function of a single site.
    pub fn marginal_cdf(&self, x: f64) -> f64 {
        match self {
            FieldModel::GaussianSeparable(_) => normal::cdf(x),
            FieldModel::Iid { marginal } => marginal.cdf(x),
            FieldModel::MovingMax { window, innovation } => innovation
                .cdf(x)
                .powf(window.iter().product::<usize>() as f64),
        }
    }

    pub fn dim(&self) -> Option<usize> {
        match self {
            FieldModel::GaussianSeparable(c) => Some(c.dim()),
            FieldModel::Iid { .. } => None,
            FieldModel::MovingMax { window, .. } => Some(window.len()),
        }
    }

    /// `P(M_dims <= x)` when it has a closed form.
    pub fn exact_block_max_cdf(&self, dims: &[usize], x: f64) -> Option<f64> {
        match self {
            FieldModel::GaussianSeparable(_) => None,
            FieldModel::Iid { marginal } => Some(pow_prob(
                marginal.cdf(x),
                dims.iter().product::<usize>() as f64,
            )),
            FieldModel::MovingMax { window, innovation } => {
                Some(moving_max_exact_cdf(window, innovation, dims, x))
            }
        }
    }

    /// Prepares a sampler for rectangles of the given extent.
    pub fn sampler(&self, dims: &[usize]) -> Result<FieldSampler> {
        if dims.is_empty() || dims.contains(&0) {
            return Err(invalid("dims", "every extent must be positive"));
        }
        if let Some(d) = self.dim() {
            if d != dims.len() {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: dims.len(),
                });
            }
        }
        let kind = match self {
            FieldModel::GaussianSeparable(c) => {
                let factors = c
                    .axes()
                    .iter()
                    .zip(dims)
                    .enumerate()
                    .map(|(axis, (poly, &n))| toeplitz_cholesky(poly, n, axis).map(Arc::new))
                    .collect::<Result<Vec<_>>>()?;
                SamplerKind::Gaussian { factors }
            }
            FieldModel::Iid { marginal } => {
                marginal.validate()?;
                SamplerKind::Iid {
                    marginal: *marginal,
                }
            }
            FieldModel::MovingMax { window, innovation } => {
                innovation.validate()?;
                if window.contains(&0) {
                    return Err(invalid("window", "every extent must be positive"));
                }
                SamplerKind::MovingMax {
                    window: window.clone(),
                    innovation: *innovation,
                }
            }
        };
        Ok(FieldSampler {
            dims: dims.to_vec(),
            kind,
        })
    }
}

/// `p^m` with exact 0 and 1 branches, computed in log space.
pub fn pow_prob(p: f64, m: f64) -> f64 {
    if p <= 0.0 {
        0.0
    } else if p >= 1.0 {
        1.0
    } else {
        (m * p.ln()).exp()
    }
}

/// Number of innovations feeding the block `[1, dims]`.
pub fn moving_max_sites(window: &[usize], dims: &[usize]) -> usize {
    dims.iter().zip(window).map(|(&n, &w)| n + w - 1).product()
}

/// `P(M_dims <= x) = F_Z(x)^{prod (n_i + w_i - 1)}`.
pub fn moving_max_exact_cdf(
    window: &[usize],
    innovation: &Marginal,
    dims: &[usize],
    x: f64,
) -> f64 {
    if dims.contains(&0) {
        return 1.0;
    }
    pow_prob(innovation.cdf(x), moving_max_sites(window, dims) as f64)
}

/// Lower Cholesky factor of an `n x n` matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LowerFactor {
    n: usize,
    data: Vec<f64>,
}

impl LowerFactor {
    pub fn size(&self) -> usize {
        self.n
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let n = self.n;
        for i in 0..n {
            let row = &self.data[i * n..i * n + i + 1];
            y[i] = row.iter().zip(&x[..=i]).map(|(a, b)| a * b).sum();
        }
    }
}

/// Cholesky factor of `T[a, b] = poly(a - b)`, `0 <= a, b < n`.
pub fn toeplitz_cholesky(
    poly: &CharacteristicPolygon,
    n: usize,
    axis: usize,
) -> Result<LowerFactor> {
    let col: Vec<f64> = (0..n).map(|k| poly.eval(k as f64)).collect();
    let mut l = vec![0.0; n * n];
    let tol = f64::EPSILON * n as f64 * col[0].abs().max(1.0);
    for i in 0..n {
        for j in 0..=i {
            let dot: f64 = (0..j).map(|k| l[i * n + k] * l[j * n + k]).sum();
            let a = col[i - j];
            if i == j {
                let pivot = a - dot;
                if !(pivot > tol) {
                    return Err(Error::Factorization {
                        axis,
                        minor: i + 1,
                        pivot,
                    });
                }
                l[i * n + i] = pivot.sqrt();
            } else {
                l[i * n + j] = (a - dot) / l[j * n + j];
            }
        }
    }
    Ok(LowerFactor { n, data: l })
}

#[derive(Debug, Clone)]
enum SamplerKind {
    Gaussian {
        factors: Vec<Arc<LowerFactor>>,
    },
    Iid {
        marginal: Marginal,
    },
    MovingMax {
        window: Vec<usize>,
        innovation: Marginal,
    },
}

/// A model bound to a rectangle size, holding any per-axis factors.
#[derive(Debug, Clone)]
pub struct FieldSampler {
    dims: Vec<usize>,
    kind: SamplerKind,
}

impl FieldSampler {
    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    /// Replication `rep` of the run seeded with `seed`.
    pub fn sample(&self, seed: u64, rep: u64) -> FieldSample {
        let mut rng = substream(seed, rep);
        let values = self.draw_values(&mut rng);
        FieldSample {
            dims: self.dims.clone(),
            values,
            seed,
        }
    }

    /// Maximum over the whole rectangle for replication `rep`.
    pub fn sample_max(&self, seed: u64, rep: u64) -> f64 {
        self.sample(seed, rep).max()
    }

    pub fn draw_values(&self, rng: &mut StreamRng) -> Vec<f64> {
        let cells: usize = self.dims.iter().product();
        match &self.kind {
            SamplerKind::Gaussian { factors } => {
                let mut values: Vec<f64> = (0..cells).map(|_| rng.sample(StandardNormal)).collect();
                for (axis, f) in factors.iter().enumerate() {
                    apply_along_axis(&mut values, &self.dims, axis, f);
                }
                values
            }
            SamplerKind::Iid { marginal } => (0..cells).map(|_| marginal.sample(rng)).collect(),
            SamplerKind::MovingMax { window, innovation } => {
                let grid: Vec<usize> = self
                    .dims
                    .iter()
                    .zip(window)
                    .map(|(n, w)| n + w - 1)
                    .collect();
                let count: usize = grid.iter().product();
                let z: Vec<f64> = (0..count).map(|_| innovation.sample(rng)).collect();
                sliding_box_max(z, &grid, window)
            }
        }
    }
}

fn strides(dims: &[usize]) -> Vec<usize> {
    let mut s = vec![1usize; dims.len()];
    for i in (0..dims.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * dims[i + 1];
    }
    s
}

fn apply_along_axis(values: &mut [f64], dims: &[usize], axis: usize, f: &LowerFactor) {
    let n = dims[axis];
    if n == 1 {
        // 1x1 factor of a unit-variance axis
        let c = f.at(0, 0);
        if c != 1.0 {
            values.iter_mut().for_each(|v| *v *= c);
        }
        return;
    }
    let st = strides(dims)[axis];
    let block = st * n;
    let mut x = vec![0.0; n];
    let mut y = vec![0.0; n];
    for outer in (0..values.len()).step_by(block) {
        for inner in 0..st {
            let base = outer + inner;
            for t in 0..n {
                x[t] = values[base + t * st];
            }
            f.apply(&x, &mut y);
            for t in 0..n {
                values[base + t * st] = y[t];
            }
        }
    }
}

// Box maximum over windows, done as successive 1-D sliding maxima.
fn sliding_box_max(mut z: Vec<f64>, grid: &[usize], window: &[usize]) -> Vec<f64> {
    let mut dims = grid.to_vec();
    for axis in 0..dims.len() {
        let w = window[axis];
        let n_in = dims[axis];
        let n_out = n_in + 1 - w;
        let st_in = strides(&dims);
        let mut out_dims = dims.clone();
        out_dims[axis] = n_out;
        let st_out = strides(&out_dims);
        let outer_count: usize = dims[..axis].iter().product();
        let inner = st_in[axis];
        let mut out = vec![f64::NEG_INFINITY; out_dims.iter().product()];
        for o in 0..outer_count {
            let base_in = o * n_in * inner;
            let base_out = o * n_out * inner;
            for i in 0..inner {
                for t in 0..n_out {
                    let mut m = f64::NEG_INFINITY;
                    for s in 0..w {
                        m = m.max(z[base_in + (t + s) * st_in[axis] + i]);
                    }
                    out[base_out + t * st_out[axis] + i] = m;
                }
            }
        }
        z = out;
        dims = out_dims;
    }
    z
}

/// One exact draw of the Gaussian field on `[1, dims]`.
pub fn sample_gaussian_separable(
    c: &SeparableCovariance,
    dims: &[usize],
    seed: u64,
) -> Result<FieldSample> {
    Ok(FieldModel::GaussianSeparable(c.clone())
        .sampler(dims)?
        .sample(seed, 0))
}

/// One draw of `sqrt(1 - rho) max(xi_1..xi_N) + sqrt(rho) zeta`.
pub fn sample_equicorrelated_max(n: usize, rho: f64, seed: u64) -> Result<f64> {
    let mut rng = substream(seed, 0);
    equicorrelated_max_with(n, rho, &mut rng)
}

pub fn equicorrelated_max_with<R: Rng + ?Sized>(n: usize, rho: f64, rng: &mut R) -> Result<f64> {
    if n == 0 {
        return Err(invalid("N", "must be at least 1"));
    }
    if !(0.0..1.0).contains(&rho) {
        return Err(invalid("rho", format!("{rho} is outside [0, 1)")));
    }
    let mut m = f64::NEG_INFINITY;
    for _ in 0..n {
        let x: f64 = rng.sample(StandardNormal);
        m = m.max(x);
    }
    let zeta: f64 = rng.sample(StandardNormal);
    Ok((1.0 - rho).sqrt() * m + rho.sqrt() * zeta)
}

/// One draw of the moving-maximum field on `[1, dims]`.
pub fn sample_moving_max(
    window: &[usize],
    innovation: Marginal,
    dims: &[usize],
    seed: u64,
) -> Result<FieldSample> {
    let model = FieldModel::MovingMax {
        window: window.to_vec(),
        innovation,
    };
    Ok(model.sampler(dims)?.sample(seed, 0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covariance::{GammaPair, TailRule};

    fn example() -> SeparableCovariance {
        SeparableCovariance::example_with_horizon(GammaPair::default(), 2, 500).unwrap()
    }

    #[test]
    fn cholesky_reproduces_toeplitz() {
        let c = example();
        for (axis, poly) in c.axes().iter().enumerate() {
            let l = toeplitz_cholesky(poly, 40, axis).unwrap();
            for i in 0..40 {
                for j in 0..40 {
                    let s: f64 = (0..40).map(|k| l.at(i, k) * l.at(j, k)).sum();
                    let want = poly.eval(i as f64 - j as f64);
                    assert!((s - want).abs() < 1e-13, "({i},{j}) {s} vs {want}");
                }
            }
        }
    }

    #[test]
    fn degenerate_polygon_is_rejected() {
        let flat = CharacteristicPolygon::from_knots(vec![(0.0, 1.0), (1.0, 1.0)], TailRule::Hold)
            .unwrap();
        let c = SeparableCovariance::new(vec![flat.clone(), flat]).unwrap();
        match sample_gaussian_separable(&c, &[3, 3], 1) {
            Err(Error::Factorization { axis, minor, .. }) => {
                assert_eq!(axis, 0);
                assert_eq!(minor, 2);
            }
            other => panic!("expected factorization error, got {other:?}"),
        }
    }

    #[test]
    fn reproducible_draws() {
        let c = example();
        let a = sample_gaussian_separable(&c, &[6, 5], 99).unwrap();
        let b = sample_gaussian_separable(&c, &[6, 5], 99).unwrap();
        assert_eq!(a, b);
        let other = sample_gaussian_separable(&c, &[6, 5], 100).unwrap();
        assert_ne!(a.values(), other.values());
        let m1 = sample_moving_max(&[2, 2], Marginal::Uniform, &[4, 4], 5).unwrap();
        let m2 = sample_moving_max(&[2, 2], Marginal::Uniform, &[4, 4], 5).unwrap();
        assert_eq!(m1, m2);
    }

    #[test]
    fn moving_max_unit_window_is_iid_draw() {
        let s = sample_moving_max(&[1, 1], Marginal::Uniform, &[3, 4], 11).unwrap();
        let mut rng = substream(11, 0);
        let direct: Vec<f64> = (0..12)
            .map(|_| Marginal::Uniform.sample(&mut rng))
            .collect();
        assert_eq!(s.values(), direct.as_slice());
    }

    #[test]
    fn moving_max_matches_brute_force() {
        let window = [2usize, 3];
        let dims = [4usize, 5];
        let grid = [5usize, 7];
        let mut rng = substream(3, 0);
        let z: Vec<f64> = (0..35)
            .map(|_| Marginal::Uniform.sample(&mut rng))
            .collect();
        let fast = sliding_box_max(z.clone(), &grid, &window);
        for i in 0..dims[0] {
            for j in 0..dims[1] {
                let mut m = f64::NEG_INFINITY;
                for a in 0..window[0] {
                    for b in 0..window[1] {
                        m = m.max(z[(i + a) * grid[1] + j + b]);
                    }
                }
                assert_eq!(fast[i * dims[1] + j], m);
            }
        }
    }

    #[test]
    fn exact_laws() {
        let m = FieldModel::MovingMax {
            window: vec![2, 2],
            innovation: Marginal::Uniform,
        };
        let x: f64 = 0.93;
        assert!((m.exact_block_max_cdf(&[5, 5], x).unwrap() - x.powi(36)).abs() < 1e-15);
        assert!((m.marginal_cdf(x) - x.powi(4)).abs() < 1e-15);
        let iid = FieldModel::Iid {
            marginal: Marginal::Uniform,
        };
        assert!((iid.exact_block_max_cdf(&[2, 2], x).unwrap() - x.powi(4)).abs() < 1e-15);
        assert_eq!(pow_prob(0.0, 1e8), 0.0);
        assert_eq!(pow_prob(1.0, 1e8), 1.0);
    }

    #[test]
    fn equicorrelated_sampler_edge_cases() {
        assert!(sample_equicorrelated_max(0, 0.1, 1).is_err());
        assert!(sample_equicorrelated_max(5, 1.0, 1).is_err());
        assert!(sample_equicorrelated_max(5, 0.3, 1).unwrap().is_finite());
    }

    #[test]
    fn csv_dump_has_header() {
        let s = FieldSample::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0], 9).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "# dims=2x2 seed=9");
        assert_eq!(lines.count(), 2);
        assert_eq!(s.get(&[2, 1]), Some(3.0));
        assert_eq!(s.get(&[3, 1]), None);
    }

    #[test]
    fn two_atom_marginal() {
        let m = Marginal::TwoAtom {
            low: 0.0,
            high: 1.0,
            p_low: 0.3,
        };
        assert_eq!(m.cdf(-0.1), 0.0);
        assert_eq!(m.cdf(0.0), 0.3);
        assert_eq!(m.cdf_left(0.0), 0.0);
        assert_eq!(m.cdf(1.0), 1.0);
        assert_eq!(m.quantile(0.3), 0.0);
        assert_eq!(m.quantile(0.31), 1.0);
        assert!(Marginal::TwoAtom {
            low: 1.0,
            high: 0.0,
            p_low: 0.5
        }
        .validate()
        .is_err());
    }
}
