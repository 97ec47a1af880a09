//! Expectations under the standard normal law.
//!
//! Two unrelated rules are provided so results can be cross-checked: a
//! Gauss–Hermite rule (default, 200 nodes) and an adaptive Gauss–Kronrod
//! 7/15 rule on a truncated interval.

use std::f64::consts::PI;
use std::sync::OnceLock;

/// Default number of Gauss–Hermite nodes.
pub const DEFAULT_NODES: usize = 200;

/// Gauss–Hermite rule for the weight `exp(-t^2)`.
#[derive(Debug, Clone)]
pub struct GaussHermite {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussHermite {
    /// Builds an `n`-point rule. Nonnegative roots of the orthonormal
    /// Hermite polynomial are bracketed by sign changes on a fine grid and
    /// polished by Newton steps; the rest follow by symmetry.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "need at least one node");
        let half = n / 2;
        let upper = (2.0 * n as f64 + 1.0).sqrt() + 1.0;
        // roots are at least ~pi / sqrt(2n + 1) apart
        let step = std::f64::consts::PI / (2.0 * n as f64 + 1.0).sqrt() / 8.0;
        let mut roots = Vec::with_capacity(half + 1);
        let mut a = if n % 2 == 1 { step / 2.0 } else { 0.0 };
        let mut fa = hermite(n, a).0;
        while roots.len() < half && a < upper {
            let b = a + step;
            let fb = hermite(n, b).0;
            if fa == 0.0 || fa.signum() != fb.signum() {
                roots.push(polish(n, a, b));
            }
            a = b;
            fa = fb;
        }
        assert_eq!(roots.len(), half, "missed a Hermite root");
        let mut nodes = Vec::with_capacity(n);
        nodes.extend(roots.iter().rev().map(|&z| -z));
        if n % 2 == 1 {
            nodes.push(0.0);
        }
        nodes.extend(roots.iter().copied());
        let weights = nodes
            .iter()
            .map(|&z| {
                let pp = (2.0 * n as f64).sqrt() * hermite(n, z).1;
                2.0 / (pp * pp)
            })
            .collect();
        Self { nodes, weights }
    }

    /// Shared default rule.
    pub fn default_rule() -> &'static GaussHermite {
        static RULE: OnceLock<GaussHermite> = OnceLock::new();
        RULE.get_or_init(|| GaussHermite::new(DEFAULT_NODES))
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// E f(Z) for Z ~ N(0, 1).
    pub fn expect<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        let scale = std::f64::consts::SQRT_2;
        let sum: f64 = self
            .nodes
            .iter()
            .zip(&self.weights)
            .map(|(&t, &w)| w * f(scale * t))
            .sum();
        sum / PI.sqrt()
    }
}

// Orthonormal Hermite values (h_n(z), h_{n-1}(z)) for the weight exp(-t^2).
fn hermite(n: usize, z: f64) -> (f64, f64) {
    let mut p1 = PI.powf(-0.25);
    let mut p2 = 0.0;
    for j in 1..=n {
        let jf = j as f64;
        let p3 = p2;
        p2 = p1;
        p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
    }
    (p1, p2)
}

// Root of h_n in [a, b]: bisection down to a short bracket, then Newton.
fn polish(n: usize, mut a: f64, mut b: f64) -> f64 {
    let fa0 = hermite(n, a).0;
    for _ in 0..20 {
        let m = 0.5 * (a + b);
        if hermite(n, m).0.signum() == fa0.signum() {
            a = m;
        } else {
            b = m;
        }
    }
    let mut z = 0.5 * (a + b);
    for _ in 0..10 {
        let (p, q) = hermite(n, z);
        let dz = p / ((2.0 * n as f64).sqrt() * q);
        z -= dz;
        if dz.abs() <= 1e-16 * z.abs().max(1.0) {
            break;
        }
    }
    z
}

// Gauss–Kronrod 7/15 abscissae and weights on [-1, 1].
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        kronrod += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

/// Adaptive Gauss–Kronrod integral of `f` over `[a, b]` to absolute
/// tolerance `tol`.
pub fn integrate_adaptive<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    let mut stack = vec![(a, b, tol, 0u32)];
    let mut total = 0.0;
    while let Some((lo, hi, eps, depth)) = stack.pop() {
        let (val, err) = gk15(&f, lo, hi);
        if err <= eps || depth >= 50 {
            total += val;
        } else {
            let mid = 0.5 * (lo + hi);
            stack.push((lo, mid, 0.5 * eps, depth + 1));
            stack.push((mid, hi, 0.5 * eps, depth + 1));
        }
    }
    total
}

/// E f(Z) for Z ~ N(0, 1) by adaptive quadrature on [-40, 40].
pub fn expect_adaptive<F: Fn(f64) -> f64>(f: F, tol: f64) -> f64 {
    let g = |z: f64| f(z) * crate::normal::pdf(z);
    // Split at 0 so the peak of the density sits on a panel boundary.
    integrate_adaptive(g, -40.0, 0.0, 0.5 * tol) + integrate_adaptive(g, 0.0, 40.0, 0.5 * tol)
}
