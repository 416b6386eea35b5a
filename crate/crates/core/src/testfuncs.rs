//! Smooth bounded test functions with derivative evaluators, sup-norms of
//! every available derivative, and (when known) the normal expectation
//! `Φh = E h(Z)`.

use std::fmt;
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{gauss_hermite, gauss_legendre};

/// Whether a norm or expectation is exact or a numerical estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Certainty {
    Exact,
    Estimated,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupNorm {
    pub value: f64,
    pub certainty: Certainty,
}

impl SupNorm {
    fn exact(value: f64) -> Self {
        SupNorm {
            value,
            certainty: Certainty::Exact,
        }
    }

    fn estimated(value: f64) -> Self {
        SupNorm {
            value,
            certainty: Certainty::Estimated,
        }
    }
}

/// Inflation applied to grid-estimated sup-norms.
pub const NORM_INFLATION: f64 = 1.01;

/// Highest derivative order tracked for the logistic family.
pub const LOGISTIC_MAX_ORDER: usize = 12;

const ESTIMATE_GRID: usize = 20_001;

#[derive(Debug, Clone)]
enum Family {
    Constant {
        value: f64,
    },
    Cosine {
        a: f64,
        phase: f64,
    },
    Logistic {
        a: f64,
        polys: Vec<Vec<f64>>,
        unit_norms: Vec<f64>,
    },
    Tabulated(Tabulated),
}

/// A univariate test function `h`.
#[derive(Debug, Clone)]
pub struct TestFunction {
    family: Family,
}

impl TestFunction {
    /// `h ≡ value`.
    pub fn constant(value: f64) -> Self {
        TestFunction {
            family: Family::Constant { value },
        }
    }

    /// `h(w) = cos(a w + phase)`; `‖h^(j)‖ = |a|^j` and `Φh = cos(phase) e^{-a²/2}`.
    pub fn cosine(a: f64, phase: f64) -> Result<Self> {
        if a == 0.0 || !a.is_finite() || !phase.is_finite() {
            return Err(Error::invalid(format!(
                "cosine family needs finite a != 0, got a = {a}"
            )));
        }
        Ok(TestFunction {
            family: Family::Cosine { a, phase },
        })
    }

    /// `h(w) = 1 / (1 + e^{-a w})`.
    ///
    /// Derivatives are polynomials in `σ = h(w)`; their sup-norms are estimated
    /// on a fine grid of `σ ∈ [0, 1]` and inflated by [`NORM_INFLATION`].
    pub fn logistic(a: f64) -> Result<Self> {
        if a == 0.0 || !a.is_finite() {
            return Err(Error::invalid(format!(
                "logistic family needs finite a != 0, got a = {a}"
            )));
        }
        // P_0(s) = s, P_{j+1}(s) = P_j'(s) · s(1 - s)
        let mut polys: Vec<Vec<f64>> = vec![vec![0.0, 1.0]];
        for j in 0..LOGISTIC_MAX_ORDER {
            let p = &polys[j];
            let dp: Vec<f64> = (1..p.len()).map(|i| i as f64 * p[i]).collect();
            let mut next = vec![0.0; dp.len() + 2];
            for (i, &c) in dp.iter().enumerate() {
                next[i + 1] += c;
                next[i + 2] -= c;
            }
            polys.push(next);
        }
        let unit_norms = polys
            .iter()
            .map(|p| {
                let sup = (0..ESTIMATE_GRID)
                    .map(|i| poly_eval(p, i as f64 / (ESTIMATE_GRID - 1) as f64).abs())
                    .fold(0.0, f64::max);
                sup * NORM_INFLATION
            })
            .collect();
        Ok(TestFunction {
            family: Family::Logistic {
                a,
                polys,
                unit_norms,
            },
        })
    }

    /// A user-supplied function sampled on a strictly increasing grid, with
    /// derivatives up to `order` obtained by local polynomial differentiation.
    /// Outside the grid the function is continued by its end values.
    pub fn tabulated(samples: &[(f64, f64)], order: usize) -> Result<Self> {
        Ok(TestFunction {
            family: Family::Tabulated(Tabulated::new(samples, order)?),
        })
    }

    /// Loads a two-column `w,h(w)` CSV (header optional).
    pub fn from_csv(path: impl AsRef<Path>, order: usize) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        let samples = read_two_columns(std::io::BufReader::new(file))?;
        Self::tabulated(&samples, order)
    }

    /// Highest derivative order available (`usize::MAX` for analytic families).
    pub fn max_order(&self) -> usize {
        match &self.family {
            Family::Constant { .. } | Family::Cosine { .. } => usize::MAX,
            Family::Logistic { .. } => LOGISTIC_MAX_ORDER,
            Family::Tabulated(t) => t.order,
        }
    }

    pub fn has_order(&self, j: usize) -> bool {
        j <= self.max_order()
    }

    /// `h^(j)(w)`.
    pub fn evaluate(&self, j: usize, w: f64) -> Result<f64> {
        if !self.has_order(j) {
            return Err(Error::InsufficientOrder {
                required: j,
                available: self.max_order(),
            });
        }
        Ok(self.derivative(j, w))
    }

    /// Unchecked `h^(j)(w)`; callers guarantee `j <= max_order()`.
    pub(crate) fn derivative(&self, j: usize, w: f64) -> f64 {
        match &self.family {
            Family::Constant { value } => {
                if j == 0 {
                    *value
                } else {
                    0.0
                }
            }
            Family::Cosine { a, phase } => {
                let x = a * w + phase;
                let scale = a.powi(j as i32);
                match j % 4 {
                    0 => scale * x.cos(),
                    1 => -scale * x.sin(),
                    2 => -scale * x.cos(),
                    _ => scale * x.sin(),
                }
            }
            Family::Logistic { a, polys, .. } => {
                let s = logistic(a * w);
                a.powi(j as i32) * poly_eval(&polys[j], s)
            }
            Family::Tabulated(t) => t.derivative(j, w),
        }
    }

    /// `‖h^(j)‖`, or `None` when the derivative is not available.
    pub fn sup_norm(&self, j: usize) -> Option<SupNorm> {
        if !self.has_order(j) {
            return None;
        }
        Some(match &self.family {
            Family::Constant { value } => SupNorm::exact(if j == 0 { value.abs() } else { 0.0 }),
            Family::Cosine { a, .. } => SupNorm::exact(a.abs().powi(j as i32)),
            Family::Logistic { a, unit_norms, .. } => {
                if j == 0 {
                    SupNorm::exact(1.0)
                } else {
                    SupNorm::estimated(a.abs().powi(j as i32) * unit_norms[j])
                }
            }
            Family::Tabulated(t) => SupNorm::estimated(t.norms[j]),
        })
    }

    /// `E h(σZ)` for `σ ≥ 0`.
    pub fn scaled_expectation(&self, sigma: f64) -> (f64, Certainty) {
        match &self.family {
            Family::Constant { value } => (*value, Certainty::Exact),
            Family::Cosine { a, phase } => (
                phase.cos() * (-(a * sigma).powi(2) / 2.0).exp(),
                Certainty::Exact,
            ),
            // σ(x) + σ(-x) = 1 and Z is symmetric
            Family::Logistic { .. } => (0.5, Certainty::Exact),
            Family::Tabulated(t) => (t.normal_expectation(sigma), Certainty::Estimated),
        }
    }

    /// `Φh = E h(Z)`.
    pub fn phi(&self) -> (f64, Certainty) {
        self.scaled_expectation(1.0)
    }

    /// `‖h - E h(σZ)‖`.
    pub fn scaled_centered_norm(&self, sigma: f64) -> SupNorm {
        let (mean, mean_certainty) = self.scaled_expectation(sigma);
        match &self.family {
            Family::Constant { value } => SupNorm {
                value: (value - mean).abs(),
                certainty: mean_certainty,
            },
            // cos attains both ±1
            Family::Cosine { .. } => SupNorm::exact(1.0 + mean.abs()),
            Family::Logistic { .. } => SupNorm::exact(0.5f64.max((mean - 0.5).abs() + 0.5)),
            Family::Tabulated(t) => {
                let sup = t.ys.iter().map(|y| (y - mean).abs()).fold(0.0, f64::max);
                SupNorm::estimated(sup * NORM_INFLATION)
            }
        }
    }

    /// `‖h - Φh‖`.
    pub fn centered_norm(&self) -> SupNorm {
        self.scaled_centered_norm(1.0)
    }

    pub fn family_name(&self) -> &'static str {
        match &self.family {
            Family::Constant { .. } => "constant",
            Family::Cosine { .. } => "cosine",
            Family::Logistic { .. } => "logistic",
            Family::Tabulated(_) => "tabulated",
        }
    }
}

impl fmt::Display for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.family {
            Family::Constant { value } => write!(f, "h(w) = {value}"),
            Family::Cosine { a, phase } => write!(f, "h(w) = cos({a} w + {phase})"),
            Family::Logistic { a, .. } => write!(f, "h(w) = 1/(1 + exp(-{a} w))"),
            Family::Tabulated(t) => write!(
                f,
                "tabulated h on [{}, {}] ({} samples, order {})",
                t.xs[0],
                t.xs[t.xs.len() - 1],
                t.xs.len(),
                t.order
            ),
        }
    }
}

fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn poly_eval(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

pub(crate) fn read_two_columns(reader: impl BufRead) -> Result<Vec<(f64, f64)>> {
    let mut rows = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim().trim_start_matches('\u{feff}');
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut fields = trimmed.split(',').map(str::trim);
        let (Some(a), Some(b), None) = (fields.next(), fields.next(), fields.next()) else {
            return Err(Error::Parse {
                line: idx + 1,
                message: "expected two columns".into(),
            });
        };
        match (a.parse::<f64>(), b.parse::<f64>()) {
            (Ok(x), Ok(y)) => rows.push((x, y)),
            // a non-numeric first row is a header
            _ if rows.is_empty() && idx == 0 => continue,
            _ => {
                return Err(Error::Parse {
                    line: idx + 1,
                    message: format!("non-numeric row `{trimmed}`"),
                })
            }
        }
    }
    Ok(rows)
}

/// Sampled function with derivatives from local Lagrange stencils.
#[derive(Debug, Clone)]
struct Tabulated {
    xs: Vec<f64>,
    ys: Vec<f64>,
    order: usize,
    stencil: usize,
    norms: Vec<f64>,
}

impl Tabulated {
    fn new(samples: &[(f64, f64)], order: usize) -> Result<Self> {
        let min_points = 4 * (order + 1);
        if samples.len() < min_points {
            return Err(Error::invalid(format!(
                "tabulated function of order {order} needs at least {min_points} samples, got {}",
                samples.len()
            )));
        }
        if samples
            .iter()
            .any(|(x, y)| !x.is_finite() || !y.is_finite())
        {
            return Err(Error::invalid("tabulated samples must be finite"));
        }
        if samples.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::invalid("tabulated grid must be strictly increasing"));
        }
        let xs: Vec<f64> = samples.iter().map(|s| s.0).collect();
        let ys: Vec<f64> = samples.iter().map(|s| s.1).collect();
        let stencil = (order + 4).max(6).min(xs.len());
        let mut t = Tabulated {
            xs,
            ys,
            order,
            stencil,
            norms: Vec::new(),
        };
        t.norms = (0..=order)
            .map(|j| {
                let sup = if j == 0 {
                    t.ys.iter().map(|y| y.abs()).fold(0.0, f64::max)
                } else {
                    t.xs.iter()
                        .map(|&x| t.derivative(j, x).abs())
                        .fold(0.0, f64::max)
                };
                sup * NORM_INFLATION
            })
            .collect();
        Ok(t)
    }

    fn derivative(&self, j: usize, w: f64) -> f64 {
        let n = self.xs.len();
        if w < self.xs[0] || w > self.xs[n - 1] {
            return if j == 0 {
                if w < self.xs[0] {
                    self.ys[0]
                } else {
                    self.ys[n - 1]
                }
            } else {
                0.0
            };
        }
        let pos = self.xs.partition_point(|&x| x < w);
        let start = pos.saturating_sub(self.stencil / 2).min(n - self.stencil);
        let nodes = &self.xs[start..start + self.stencil];
        let weights = fornberg_weights(w, nodes, j);
        weights
            .iter()
            .zip(&self.ys[start..start + self.stencil])
            .map(|(c, y)| c * y)
            .sum()
    }

    /// `E h(σZ)` with the constant continuation beyond the grid, by composite
    /// Gauss–Legendre on `[-12σ, 12σ]` split at the grid ends.
    fn normal_expectation(&self, sigma: f64) -> f64 {
        if sigma == 0.0 {
            return self.derivative(0, 0.0);
        }
        let lo = -12.0 * sigma;
        let hi = 12.0 * sigma;
        let mut cuts = vec![lo];
        for &c in &[self.xs[0], self.xs[self.xs.len() - 1]] {
            if c > lo && c < hi {
                cuts.push(c);
            }
        }
        cuts.push(hi);
        let rule = gauss_legendre(16).expect("valid order");
        let density = |x: f64| {
            let z = x / sigma;
            (-0.5 * z * z).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt())
        };
        let mut total = 0.0;
        for pair in cuts.windows(2) {
            let panels = 200;
            let width = (pair[1] - pair[0]) / panels as f64;
            for p in 0..panels {
                let a = pair[0] + p as f64 * width;
                total += rule
                    .mapped(a, a + width)
                    .integrate(|x| self.derivative(0, x) * density(x));
            }
        }
        total
    }
}

/// Finite-difference weights for the `order`-th derivative at `z` from the
/// given nodes (Fornberg's recursion).
fn fornberg_weights(z: f64, nodes: &[f64], order: usize) -> Vec<f64> {
    let n = nodes.len();
    let m = order;
    let mut c = vec![vec![0.0; m + 1]; n];
    let mut c1 = 1.0;
    let mut c4 = nodes[0] - z;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(m);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = nodes[i] - z;
        for jj in 0..i {
            let c3 = nodes[i] - nodes[jj];
            c2 *= c3;
            if jj == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[jj][k] = (c4 * c[jj][k] - k as f64 * c[jj][k - 1]) / c3;
            }
            c[jj][0] = c4 * c[jj][0] / c3;
        }
        c1 = c2;
    }
    c.into_iter().map(|row| row[m]).collect()
}

/// `h(w) = g(⟨u, w⟩)` on `ℝ^d` for a univariate profile `g`.
///
/// Every partial derivative is `∂^α h = (∏ u_i^{α_i}) g^{(|α|)}`, so partial
/// and operator norms follow from the norms of `g`.
#[derive(Debug, Clone)]
pub struct RidgeFunction {
    direction: Vec<f64>,
    profile: TestFunction,
}

impl RidgeFunction {
    pub fn new(direction: Vec<f64>, profile: TestFunction) -> Result<Self> {
        if direction.is_empty() || direction.iter().any(|u| !u.is_finite()) {
            return Err(Error::invalid(
                "ridge direction must be a non-empty finite vector",
            ));
        }
        Ok(RidgeFunction { direction, profile })
    }

    pub fn dim(&self) -> usize {
        self.direction.len()
    }

    pub fn direction(&self) -> &[f64] {
        &self.direction
    }

    pub fn profile(&self) -> &TestFunction {
        &self.profile
    }

    pub fn evaluate(&self, w: &[f64]) -> Result<f64> {
        if w.len() != self.dim() {
            return Err(Error::invalid("dimension mismatch"));
        }
        let s: f64 = self.direction.iter().zip(w).map(|(u, x)| u * x).sum();
        self.profile.evaluate(0, s)
    }

    /// `‖∂^{|α|} h / ∏ ∂w_{i}‖` for the multi-index given as a list of
    /// coordinates (repeats allowed).
    pub fn partial_norm(&self, indices: &[usize]) -> Option<SupNorm> {
        if indices.iter().any(|&i| i >= self.dim()) {
            return None;
        }
        let g = self.profile.sup_norm(indices.len())?;
        let factor: f64 = indices.iter().map(|&i| self.direction[i].abs()).product();
        Some(SupNorm {
            value: factor * g.value,
            certainty: g.certainty,
        })
    }

    /// `‖∂^k h / ∂w_j^k‖`.
    pub fn pure_partial_norm(&self, j: usize, k: usize) -> Option<SupNorm> {
        self.partial_norm(&vec![j; k])
    }

    /// `M_k(h) = sup_w ‖D^k h(w)‖_op = |u|^k ‖g^(k)‖`.
    pub fn operator_norm(&self, k: usize) -> Option<SupNorm> {
        let g = self.profile.sup_norm(k)?;
        Some(SupNorm {
            value: self.euclidean_norm().powi(k as i32) * g.value,
            certainty: g.certainty,
        })
    }

    pub fn euclidean_norm(&self) -> f64 {
        self.direction.iter().map(|u| u * u).sum::<f64>().sqrt()
    }

    /// `E h(Z)` for the `d`-dimensional standard normal.
    pub fn phi(&self) -> (f64, Certainty) {
        self.profile.scaled_expectation(self.euclidean_norm())
    }

    /// `E h(Σ^{1/2} Z) = E g(√(uᵀΣu) Z)`.
    pub fn covariance_expectation(&self, sigma: &[Vec<f64>]) -> (f64, Certainty) {
        self.profile.scaled_expectation(self.projected_std(sigma))
    }

    /// `‖h - E h(Σ^{1/2} Z)‖`.
    pub fn covariance_centered_norm(&self, sigma: &[Vec<f64>]) -> SupNorm {
        self.profile.scaled_centered_norm(self.projected_std(sigma))
    }

    fn projected_std(&self, sigma: &[Vec<f64>]) -> f64 {
        let u = &self.direction;
        let mut q = 0.0;
        for (i, row) in sigma.iter().enumerate() {
            for (j, s) in row.iter().enumerate() {
                q += u[i] * s * u[j];
            }
        }
        q.max(0.0).sqrt()
    }
}

/// Cross-check `Φh` against Gauss–Hermite quadrature of `h` with `nodes` points.
pub fn quadrature_phi(h: &TestFunction, nodes: usize) -> Result<f64> {
    let rule = gauss_hermite(nodes)?;
    Ok(rule.integrate(|z| h.derivative(0, z)))
}
