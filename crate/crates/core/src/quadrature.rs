//! Gaussian quadrature rules and an adaptive Gauss–Kronrod integrator.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Nodes and weights of an interpolatory rule, nodes ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Maps a rule on `[-1, 1]` to `[a, b]`.
    pub fn mapped(&self, a: f64, b: f64) -> GaussRule {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        GaussRule {
            nodes: self.nodes.iter().map(|&x| mid + half * x).collect(),
            weights: self.weights.iter().map(|&w| half * w).collect(),
        }
    }

    pub fn nodes_weights(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.nodes.iter().copied().zip(self.weights.iter().copied())
    }

    pub fn integrate(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for j in 2..=n {
        let jf = j as f64;
        let p2 = ((2.0 * jf - 1.0) * x * p1 - (jf - 1.0) * p0) / jf;
        p0 = p1;
        p1 = p2;
    }
    let nf = n as f64;
    let dp = nf * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// `n`-point Gauss–Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> Result<GaussRule> {
    if n == 0 {
        return Err(Error::invalid(
            "Gauss-Legendre rule needs at least one node",
        ));
    }
    if n == 1 {
        return Ok(GaussRule {
            nodes: vec![0.0],
            weights: vec![2.0],
        });
    }
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() <= 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d.is_finite() {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    Ok(GaussRule { nodes, weights })
}

/// Orthonormal probabilists' Hermite values `ψ_n(x)` and `ψ_{n-1}(x)`, where
/// `ψ_j = He_j / √(j!)`.
fn orthonormal_hermite(n: usize, x: f64) -> (f64, f64) {
    let mut prev = 0.0;
    let mut cur = 1.0;
    for j in 0..n {
        let jf = j as f64;
        let next = (x * cur - jf.sqrt() * prev) / (jf + 1.0).sqrt();
        prev = cur;
        cur = next;
    }
    (cur, prev)
}

/// Roots of the probabilists' Hermite polynomial `He_n`, ascending.
///
/// Newton iteration on the three-term recurrence with deflation against the
/// roots already found, starting from the largest root and using symmetry.
pub fn hermite_roots(n: usize) -> Result<Vec<f64>> {
    if n == 0 {
        return Ok(Vec::new());
    }
    let nf = n as f64;
    let mut found: Vec<f64> = Vec::with_capacity(n.div_ceil(2));
    // Initial guesses for the physicists' roots (scaled by √2 below).
    let mut phys: Vec<f64> = Vec::with_capacity(n.div_ceil(2));
    for i in 0..n / 2 {
        let z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.855_75 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
            1 => phys[0] - 1.14 * nf.powf(0.426) / phys[0],
            2 => 1.86 * phys[1] - 0.86 * phys[0],
            3 => 1.91 * phys[2] - 0.91 * phys[1],
            _ => 2.0 * phys[i - 1] - phys[i - 2],
        };
        let mut x = z * std::f64::consts::SQRT_2;
        let mut converged = false;
        for _ in 0..200 {
            let (p, pm1) = orthonormal_hermite(n, x);
            let dp = nf.sqrt() * pm1;
            let deflation: f64 = found.iter().map(|&r| 1.0 / (x - r)).sum();
            let dx = p / (dp - p * deflation);
            x -= dx;
            if dx.abs() <= 1e-15 * x.abs().max(1.0) {
                converged = true;
                break;
            }
        }
        if !converged || !x.is_finite() {
            return Err(Error::Numerical(format!(
                "Hermite root {i} of degree {n} did not converge"
            )));
        }
        phys.push(x / std::f64::consts::SQRT_2);
        found.push(x);
    }
    let mut roots: Vec<f64> = found.iter().map(|&r| -r).collect();
    if n % 2 == 1 {
        roots.push(0.0);
    }
    roots.extend(found.iter().rev());
    roots.sort_by(f64::total_cmp);
    Ok(roots)
}

/// `n`-point Gauss–Hermite rule for the standard normal density: weights are
/// probabilities (they sum to one) and `Σ wᵢ g(xᵢ) ≈ E g(Z)`.
pub fn gauss_hermite(n: usize) -> Result<GaussRule> {
    if n == 0 {
        return Err(Error::invalid("Gauss-Hermite rule needs at least one node"));
    }
    let nodes = hermite_roots(n)?;
    let nf = n as f64;
    let weights = nodes
        .iter()
        .map(|&x| {
            let (_, pm1) = orthonormal_hermite(n, x);
            1.0 / (nf * pm1 * pm1)
        })
        .collect();
    Ok(GaussRule { nodes, weights })
}

const KRONROD_NODES: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];

const KRONROD_WEIGHTS: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

const GAUSS7_WEIGHTS: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn kronrod_segment(f: &mut impl FnMut(f64) -> f64, a: f64, b: f64) -> Segment {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let fc = f(mid);
    let mut kronrod = KRONROD_WEIGHTS[7] * fc;
    let mut gauss = GAUSS7_WEIGHTS[3] * fc;
    for j in 0..7 {
        let dx = half * KRONROD_NODES[j];
        let s = f(mid - dx) + f(mid + dx);
        kronrod += KRONROD_WEIGHTS[j] * s;
        if j % 2 == 1 {
            gauss += GAUSS7_WEIGHTS[j / 2] * s;
        }
    }
    Segment {
        a,
        b,
        value: kronrod * half,
        error: ((kronrod - gauss) * half).abs(),
    }
}

/// Globally adaptive G7–K15 integration of `f` over the finite interval
/// `[a, b]`, refining the worst segment until the summed error estimate drops
/// below `rel_tol · |integral|` (or a fixed segment budget is spent).
pub fn integrate_adaptive(mut f: impl FnMut(f64) -> f64, a: f64, b: f64, rel_tol: f64) -> f64 {
    const MAX_SEGMENTS: usize = 4000;
    let mut heap = BinaryHeap::new();
    heap.push(kronrod_segment(&mut f, a, b));
    loop {
        let total: f64 = heap.iter().map(|s| s.value).sum();
        let err: f64 = heap.iter().map(|s| s.error).sum();
        if err <= rel_tol * total.abs() || err < 1e-300 || heap.len() >= MAX_SEGMENTS {
            return total;
        }
        let worst = heap.pop().expect("non-empty");
        let mid = 0.5 * (worst.a + worst.b);
        heap.push(kronrod_segment(&mut f, worst.a, mid));
        heap.push(kronrod_segment(&mut f, mid, worst.b));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::specfun::{normal_abs_moment, normal_moment};

    #[test]
    fn legendre_integrates_polynomials_exactly() {
        let rule = gauss_legendre(16).unwrap();
        let w: f64 = rule.weights.iter().sum();
        assert!((w - 2.0).abs() < 1e-14);
        // ∫_{-1}^{1} x^30 dx = 2/31
        assert!((rule.integrate(|x| x.powi(30)) - 2.0 / 31.0).abs() < 1e-14);
        let r64 = gauss_legendre(64).unwrap().mapped(0.0, PI / 2.0);
        assert!((r64.integrate(f64::sin) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn hermite_small_cases() {
        let r2 = gauss_hermite(2).unwrap();
        assert!((r2.nodes[0] + 1.0).abs() < 1e-15 && (r2.nodes[1] - 1.0).abs() < 1e-15);
        assert!((r2.weights[0] - 0.5).abs() < 1e-15);
        let r3 = gauss_hermite(3).unwrap();
        assert!((r3.nodes[2] - 3f64.sqrt()).abs() < 1e-15);
        assert_eq!(r3.nodes[1], 0.0);
        assert!((r3.weights[1] - 2.0 / 3.0).abs() < 1e-15);
        assert!((r3.weights[0] - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn hermite_rules_reproduce_normal_moments() {
        for n in [4usize, 9, 16, 32, 64] {
            let rule = gauss_hermite(n).unwrap();
            assert_eq!(rule.len(), n);
            assert!(rule.nodes.windows(2).all(|w| w[0] < w[1]));
            for k in 0..(2 * n as u32).min(24) {
                let m = rule.integrate(|x| x.powi(k as i32));
                let exact = normal_moment(k);
                let scale = normal_abs_moment(k).max(1.0);
                assert!(
                    (m - exact).abs() <= 1e-11 * scale,
                    "n={n} k={k}: {m} vs {exact}"
                );
            }
        }
    }

    #[test]
    fn hermite_64_characteristic_function() {
        let rule = gauss_hermite(64).unwrap();
        for a in [0.5, 1.0, 2.0, 3.0] {
            let approx = rule.integrate(|z| (a * z).cos());
            assert!((approx - (-a * a / 2.0f64).exp()).abs() < 1e-14);
        }
    }

    #[test]
    fn adaptive_handles_endpoint_singularity() {
        // ∫₀¹ x^{-1/2} dx = 2
        let v = integrate_adaptive(
            |x| if x > 0.0 { x.powf(-0.5) } else { 0.0 },
            0.0,
            1.0,
            1e-12,
        );
        assert!((v - 2.0).abs() < 1e-9);
        let v = integrate_adaptive(f64::exp, 0.0, 1.0, 1e-14);
        assert!((v - (1f64.exp() - 1.0)).abs() < 1e-14);
    }
}
