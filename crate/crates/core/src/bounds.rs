//! Explicit normal-approximation bounds for sums of independent summands
//! with matching moments, plus the multivariate constants.

use serde::{Deserialize, Serialize};

use crate::covariance::CovarianceModel;
use crate::distributions::EpsilonTable;
use crate::error::{Error, Result};
use crate::specfun::{factorial, gamma_ratio_constant};
use crate::testfuncs::{Certainty, RidgeFunction, SupNorm, TestFunction};

/// Tolerance (relative to `max(1, E|Z|^k)`) for "moments match".
pub const MATCHING_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NkBranch {
    #[serde(rename = "3*h^(k-1)")]
    ThreeLower,
    #[serde(rename = "gamma-ratio*h^(k)")]
    GammaRatio,
    #[serde(rename = "h^(k+1)/(k+1)")]
    NextOrder,
}

impl NkBranch {
    pub fn label(self) -> &'static str {
        match self {
            NkBranch::ThreeLower => "3*h^(k-1)",
            NkBranch::GammaRatio => "gamma-ratio*h^(k)",
            NkBranch::NextOrder => "h^(k+1)/(k+1)",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NkValue {
    pub value: f64,
    pub branch: NkBranch,
}

fn min_branch(candidates: &[(NkBranch, Option<f64>)], k: usize) -> Result<NkValue> {
    let mut best: Option<NkValue> = None;
    for &(branch, value) in candidates {
        if let Some(value) = value {
            if best.is_none_or(|b| value < b.value) {
                best = Some(NkValue { value, branch });
            }
        }
    }
    best.ok_or_else(|| Error::MissingData(format!("no derivative norms available for N_{k}")))
}

fn norm_at(norms: &[Option<f64>], j: usize) -> Option<f64> {
    norms.get(j).copied().flatten()
}

/// `N_k = min{3‖h^(k-1)‖, c_{k+1}‖h^(k)‖, ‖h^(k+1)‖/(k+1)}` where
/// `c_k = Γ(k/2)/(√2 Γ((k+1)/2))`. `norms[j]` is `‖h^(j)‖`; missing norms
/// drop their branch.
pub fn n_k(norms: &[Option<f64>], k: usize) -> Result<NkValue> {
    if k == 0 {
        return Err(Error::domain("N_k needs k >= 1"));
    }
    let c = gamma_ratio_constant(k as u32 + 1)?.value;
    min_branch(
        &[
            (NkBranch::ThreeLower, norm_at(norms, k - 1).map(|v| 3.0 * v)),
            (NkBranch::GammaRatio, norm_at(norms, k).map(|v| c * v)),
            (
                NkBranch::NextOrder,
                norm_at(norms, k + 1).map(|v| v / (k as f64 + 1.0)),
            ),
        ],
        k,
    )
}

/// Two-branch variant used for each coordinate of a multivariate test
/// function: `min{c_{k+1}‖∂^k_j h‖, ‖∂^{k+1}_j h‖/(k+1)}`.
pub fn m_jk(norms: &[Option<f64>], k: usize) -> Result<NkValue> {
    if k == 0 {
        return Err(Error::domain("M_{j,k} needs k >= 1"));
    }
    let c = gamma_ratio_constant(k as u32 + 1)?.value;
    min_branch(
        &[
            (NkBranch::GammaRatio, norm_at(norms, k).map(|v| c * v)),
            (
                NkBranch::NextOrder,
                norm_at(norms, k + 1).map(|v| v / (k as f64 + 1.0)),
            ),
        ],
        k,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InnerTerm {
    /// Summand index (from 1); absent when identically distributed
    /// summands are aggregated.
    pub i: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub j: Option<usize>,
    pub k: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub j: Option<usize>,
    pub k: usize,
    pub value: f64,
    pub branch: NkBranch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub total: f64,
    pub first_moment_term: f64,
    pub inner_terms: Vec<InnerTerm>,
    pub remainder_term: f64,
    pub nk_branches: Vec<BranchRecord>,
    #[serde(default)]
    pub notes: Vec<String>,
}

impl BoundReport {
    /// `first_moment_term + Σ inner_terms + remainder_term`, summed in
    /// report order.
    pub fn recomputed_total(&self) -> f64 {
        let mut total = self.first_moment_term;
        for t in &self.inner_terms {
            total += t.value;
        }
        total + self.remainder_term
    }
}

/// Moment data for the summands `X_1, …, X_n`.
#[derive(Debug, Clone, Copy)]
pub enum Summands<'a> {
    /// `n` copies of one law; per-summand terms are reported once, scaled by `n`.
    Iid {
        table: &'a EpsilonTable,
        n: u64,
    },
    Independent(&'a [EpsilonTable]),
}

impl Summands<'_> {
    pub fn n(&self) -> u64 {
        match self {
            Summands::Iid { n, .. } => *n,
            Summands::Independent(t) => t.len() as u64,
        }
    }

    /// `(index, table, multiplicity)` in a fixed order.
    fn groups(&self) -> Vec<(Option<usize>, &EpsilonTable, f64)> {
        match self {
            Summands::Iid { table, n } => vec![(None, *table, *n as f64)],
            Summands::Independent(t) => t
                .iter()
                .enumerate()
                .map(|(i, e)| (Some(i + 1), e, 1.0))
                .collect(),
        }
    }

    fn check(&self, p: usize) -> Result<()> {
        if self.n() == 0 {
            return Err(Error::domain("need at least one summand"));
        }
        for (_, t, _) in self.groups() {
            if (t.p as usize) < p || t.eps.len() < p + 1 || t.abs_moments.len() < p + 2 {
                return Err(Error::InsufficientOrder {
                    required: p,
                    available: t.p as usize,
                });
            }
        }
        Ok(())
    }
}

fn norms_of(h: &TestFunction, upto: usize) -> (Vec<Option<f64>>, bool) {
    let raw: Vec<Option<SupNorm>> = (0..=upto).map(|j| h.sup_norm(j)).collect();
    let estimated = raw
        .iter()
        .flatten()
        .any(|s| s.certainty == Certainty::Estimated);
    (
        raw.into_iter().map(|s| s.map(|s| s.value)).collect(),
        estimated,
    )
}

struct Coordinate<'a> {
    j: Option<usize>,
    summands: Summands<'a>,
    /// `‖∂h/∂w_j‖` (or `‖h′‖`).
    first_norm: Option<f64>,
    /// `N_k` (or `M_{j,k}`) for `k = 1..=p`, index `k - 1`.
    nk: Vec<NkValue>,
}

fn assemble(coords: &[Coordinate<'_>], n: u64, p: usize) -> Result<BoundReport> {
    let nf = n as f64;
    let mut first_moment_term = 0.0;
    let mut inner_terms = Vec::new();
    let mut remainder_term = 0.0;
    let mut nk_branches = Vec::new();
    for c in coords {
        let mut abs_eps1 = 0.0;
        for (_, t, mult) in c.summands.groups() {
            abs_eps1 += mult * t.eps(1).abs();
        }
        if abs_eps1 > 0.0 {
            let norm = c
                .first_norm
                .ok_or_else(|| Error::MissingData("first derivative norm".into()))?;
            first_moment_term += norm * abs_eps1 / nf.sqrt();
        }
        for (k, nk) in c.nk.iter().enumerate().map(|(i, v)| (i + 1, v)) {
            nk_branches.push(BranchRecord {
                j: c.j,
                k,
                value: nk.value,
                branch: nk.branch,
            });
        }
        for k in 1..p {
            let nk = c.nk[k - 1].value;
            let scale = nk / (factorial(k as u32) * nf.powf((k as f64 + 1.0) / 2.0));
            for (i, t, mult) in c.summands.groups() {
                let coeff = (k as f64 * t.eps(k as u32 - 1) - t.eps(k as u32 + 1)).abs();
                inner_terms.push(InnerTerm {
                    i,
                    j: c.j,
                    k,
                    value: mult * scale * coeff,
                });
            }
        }
        let np = c.nk[p - 1].value;
        let mut moment_sum = 0.0;
        for (_, t, mult) in c.summands.groups() {
            moment_sum += mult
                * (t.abs_moment(p as u32 - 1) / factorial(p as u32 - 1)
                    + t.abs_moment(p as u32 + 1) / factorial(p as u32));
        }
        remainder_term += np / nf.powf((p as f64 + 1.0) / 2.0) * moment_sum;
    }
    let mut report = BoundReport {
        total: 0.0,
        first_moment_term,
        inner_terms,
        remainder_term,
        nk_branches,
        notes: Vec::new(),
    };
    report.total = report.recomputed_total();
    Ok(report)
}

/// Bound on `|E h(W_n) - Φh|` for `W_n = n^{-1/2} Σ X_i` with independent
/// summands, expanded to order `p`.
pub fn sum_bound(summands: Summands<'_>, h: &TestFunction, p: usize) -> Result<BoundReport> {
    if p == 0 {
        return Err(Error::domain("p must be at least 1"));
    }
    summands.check(p)?;
    let (norms, estimated) = norms_of(h, p + 1);
    let nk = (1..=p)
        .map(|k| n_k(&norms, k))
        .collect::<Result<Vec<_>>>()?;
    let coords = [Coordinate {
        j: None,
        summands,
        first_norm: norm_at(&norms, 1),
        nk,
    }];
    let mut report = assemble(&coords, summands.n(), p)?;
    if report
        .nk_branches
        .iter()
        .any(|b| b.k == 1 && b.branch == NkBranch::ThreeLower)
    {
        report
            .notes
            .push("N_1 taken from the 3*||h|| branch".into());
    }
    if estimated {
        report
            .notes
            .push("some derivative norms are numerical estimates".into());
    }
    Ok(report)
}

fn check_matching(summands: &Summands<'_>, p: usize) -> Result<()> {
    for (i, t, _) in summands.groups() {
        let mut clipped = t.clone();
        clipped.p = p as u32;
        if let Some(k) = clipped.first_mismatch(MATCHING_TOLERANCE) {
            let who = i.map_or("summands".to_string(), |i| format!("summand {i}"));
            return Err(Error::Precondition(format!(
                "{who}: moment of order {k} differs from the normal one by {:e}",
                t.eps(k)
            )));
        }
    }
    Ok(())
}

/// The remainder alone, valid when the first `p` moments of every summand
/// agree with those of the standard normal.
pub fn matched_moment_bound(summands: Summands<'_>, h: &TestFunction, p: usize) -> Result<f64> {
    if p == 0 {
        return Err(Error::domain("p must be at least 1"));
    }
    summands.check(p)?;
    check_matching(&summands, p)?;
    let (norms, _) = norms_of(h, p + 1);
    let np = n_k(&norms, p)?.value;
    let nf = summands.n() as f64;
    let mut sum = 0.0;
    for (_, t, mult) in summands.groups() {
        sum += mult
            * (t.abs_moment(p as u32 - 1) / factorial(p as u32 - 1)
                + t.abs_moment(p as u32 + 1) / factorial(p as u32));
    }
    Ok(np / nf.powf((p as f64 + 1.0) / 2.0) * sum)
}

/// Constants asserted by the caller: for every `k`,
/// `‖h^(k)‖|ε_k| ≤ (C/n^α) k^{-δ} (k-1)!` and the same with `‖h^(k+2)‖`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesConstants {
    pub c: f64,
    pub alpha: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionCheck {
    /// Largest `k` at which the condition was checked.
    pub checked_up_to: usize,
    pub holds: bool,
    /// Largest observed ratio of left to right-hand side.
    pub worst_ratio: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub worst_k: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesBound {
    pub partial_sum: f64,
    pub tail_bound: f64,
    pub total: f64,
    pub truncation: usize,
    pub condition: ConditionCheck,
}

/// Truncated series bound for a single variable `X_n` whose deficits decay
/// fast enough. `eps(k)` gives `ε_{n,k}` and `norms(j)` gives `‖h^(j)‖`.
///
/// Terms `k = 1..=K` are summed directly. For `k > K` each term is at most
/// `(C/n^α)[1/((k+1)(k-1)^{1+δ}) + (k+1)^{-(1+δ)}]`, whose sum is bounded by
/// `(C/n^α)[K^{-(2+δ)} + K^{-(1+δ)}/(1+δ) + (K+1)^{-δ}/δ]`.
pub fn series_bound(
    eps: impl Fn(usize) -> f64,
    norms: impl Fn(usize) -> Option<f64>,
    constants: SeriesConstants,
    n: f64,
    truncation: usize,
) -> Result<SeriesBound> {
    let SeriesConstants { c, alpha, delta } = constants;
    if truncation < 2 {
        return Err(Error::domain(format!(
            "truncation must be at least 2, got {truncation}"
        )));
    }
    if !(delta > 0.0) {
        return Err(Error::domain(format!(
            "delta must be positive, got {delta}"
        )));
    }
    if !(c >= 0.0) || !alpha.is_finite() || !(n > 0.0) {
        return Err(Error::domain("need C >= 0, finite alpha and n > 0"));
    }
    let big_k = truncation;
    let eps0 = |k: usize| if k == 0 { 0.0 } else { eps(k) };
    let weighted = |j: usize, k: usize| -> Result<f64> {
        let e = eps0(k);
        if e == 0.0 {
            return Ok(0.0);
        }
        norms(j)
            .map(|v| v * e.abs())
            .ok_or_else(|| Error::MissingData(format!("norm of derivative {j}")))
    };

    let mut partial_sum = weighted(1, 1)?;
    for k in 1..=big_k {
        let e = (k as f64 * eps0(k - 1) - eps0(k + 1)).abs();
        if e == 0.0 {
            continue;
        }
        let norm = norms(k + 1)
            .ok_or_else(|| Error::MissingData(format!("norm of derivative {}", k + 1)))?;
        partial_sum += norm / factorial(k as u32 + 1) * e;
    }

    let kf = big_k as f64;
    let scale = c / n.powf(alpha);
    let tail_bound = scale
        * (kf.powf(-(2.0 + delta))
            + kf.powf(-(1.0 + delta)) / (1.0 + delta)
            + (kf + 1.0).powf(-delta) / delta);

    let mut worst_ratio = 0.0f64;
    let mut worst_k = None;
    for k in 1..=big_k + 1 {
        let rhs = scale * (k as f64).powf(-delta) * factorial(k as u32 - 1);
        for j in [k, k + 2] {
            let e = eps0(k);
            if e == 0.0 {
                continue;
            }
            if let Some(v) = norms(j) {
                let lhs = v * e.abs();
                let ratio = if rhs > 0.0 { lhs / rhs } else { f64::INFINITY };
                if ratio > worst_ratio {
                    worst_ratio = ratio;
                    worst_k = Some(k);
                }
            }
        }
    }
    let condition = ConditionCheck {
        checked_up_to: big_k + 1,
        holds: worst_ratio <= 1.0 + 1e-12,
        worst_ratio,
        worst_k,
    };
    Ok(SeriesBound {
        partial_sum,
        tail_bound,
        total: partial_sum + tail_bound,
        truncation: big_k,
        condition,
    })
}

/// Derivative norms of a function on `ℝ^d`.
pub trait MultivariateNorms {
    fn dim(&self) -> usize;
    /// `‖∂^{|α|} h / ∏ ∂w_i‖` for a list of coordinates.
    fn partial_norm(&self, indices: &[usize]) -> Option<SupNorm>;
    /// `M_k(h)`, the sup of the operator norm of `D^k h`.
    fn operator_norm(&self, k: usize) -> Option<SupNorm>;
    /// `‖h - E h(Σ^{1/2} Z)‖`.
    fn centered_norm(&self, sigma: &[Vec<f64>]) -> Option<SupNorm>;
}

impl MultivariateNorms for RidgeFunction {
    fn dim(&self) -> usize {
        RidgeFunction::dim(self)
    }

    fn partial_norm(&self, indices: &[usize]) -> Option<SupNorm> {
        RidgeFunction::partial_norm(self, indices)
    }

    fn operator_norm(&self, k: usize) -> Option<SupNorm> {
        RidgeFunction::operator_norm(self, k)
    }

    fn centered_norm(&self, sigma: &[Vec<f64>]) -> Option<SupNorm> {
        Some(self.covariance_centered_norm(sigma))
    }
}

/// Bounds on `‖∂^k f/∏ ∂w_{i_j}‖` and `M_k(f)` for the solution of the
/// multivariate normal Stein equation with covariance `Σ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MvnConstants {
    pub k: usize,
    pub indices: Vec<usize>,
    /// Partial derivative bound through `Σ^{-1/2}` row norms (min over slots for `k ≥ 2`).
    pub partial: Option<f64>,
    /// Slot attaining the minimum in `partial`.
    pub partial_slot: Option<usize>,
    /// `‖∂^k h/∏ ∂w_{i_j}‖ / k`.
    pub partial_same_order: Option<f64>,
    /// Operator norm bound through `‖Σ^{-1/2}‖_op`.
    pub operator: Option<f64>,
    /// `M_k(h) / k`.
    pub operator_same_order: Option<f64>,
}

pub fn mvn_constant_catalog(
    model: &CovarianceModel,
    h: &impl MultivariateNorms,
    indices: &[usize],
) -> Result<MvnConstants> {
    let k = indices.len();
    if k == 0 {
        return Err(Error::domain("need at least one differentiation index"));
    }
    let d = model.dim();
    if h.dim() != d {
        return Err(Error::invalid(format!(
            "test function has dimension {}, covariance {d}",
            h.dim()
        )));
    }
    if let Some(&bad) = indices.iter().find(|&&i| i >= d) {
        return Err(Error::invalid(format!(
            "coordinate {bad} out of range for d = {d}"
        )));
    }
    let kf = k as f64;
    let (partial, partial_slot, operator) = if k == 1 {
        let centered = h.centered_norm(&model.sigma).map(|s| s.value);
        let root = std::f64::consts::FRAC_PI_2.sqrt();
        (
            centered.map(|c| root * model.row_norms[indices[0]] * c),
            centered.map(|_| 0),
            centered.map(|c| root * model.op_norm * c),
        )
    } else {
        let g = gamma_ratio_constant(k as u32)?.value;
        let mut best: Option<(f64, usize)> = None;
        for l in 0..k {
            let rest: Vec<usize> = indices
                .iter()
                .enumerate()
                .filter(|&(m, _)| m != l)
                .map(|(_, &i)| i)
                .collect();
            if let Some(norm) = h.partial_norm(&rest) {
                let v = g * model.row_norms[indices[l]] * norm.value;
                if best.is_none_or(|(b, _)| v < b) {
                    best = Some((v, l));
                }
            }
        }
        let operator = h.operator_norm(k - 1).map(|m| g * model.op_norm * m.value);
        (best.map(|b| b.0), best.map(|b| b.1), operator)
    };
    let catalog = MvnConstants {
        k,
        indices: indices.to_vec(),
        partial,
        partial_slot,
        partial_same_order: h.partial_norm(indices).map(|s| s.value / kf),
        operator,
        operator_same_order: h.operator_norm(k).map(|s| s.value / kf),
    };
    if catalog.partial.is_none()
        && catalog.partial_same_order.is_none()
        && catalog.operator.is_none()
        && catalog.operator_same_order.is_none()
    {
        return Err(Error::MissingData(format!(
            "no derivative norms of order {} or {k}",
            k - 1
        )));
    }
    Ok(catalog)
}

/// Bound on `|E h(W) - E h(Z)|` for `W_j = n^{-1/2} Σ_i X_{i,j}` with all
/// `X_{i,j}` independent; `coords[j]` describes coordinate `j`.
pub fn multivariate_sum_bound(
    coords: &[Summands<'_>],
    h: &impl MultivariateNorms,
    p: usize,
) -> Result<BoundReport> {
    if p == 0 {
        return Err(Error::domain("p must be at least 1"));
    }
    let d = coords.len();
    if d == 0 || h.dim() != d {
        return Err(Error::invalid(format!(
            "need one summand description per coordinate ({} given, d = {})",
            d,
            h.dim()
        )));
    }
    let n = coords[0].n();
    if coords.iter().any(|c| c.n() != n) {
        return Err(Error::invalid(
            "every coordinate needs the same number of summands",
        ));
    }
    let mut estimated = false;
    let mut prepared = Vec::with_capacity(d);
    for (j, summands) in coords.iter().enumerate() {
        summands.check(p)?;
        let raw: Vec<Option<SupNorm>> = (0..=p + 1).map(|k| h.partial_norm(&vec![j; k])).collect();
        estimated |= raw
            .iter()
            .flatten()
            .any(|s| s.certainty == Certainty::Estimated);
        let norms: Vec<Option<f64>> = raw.into_iter().map(|s| s.map(|s| s.value)).collect();
        let nk = (1..=p)
            .map(|k| m_jk(&norms, k))
            .collect::<Result<Vec<_>>>()?;
        prepared.push(Coordinate {
            j: Some(j + 1),
            summands: *summands,
            first_norm: norm_at(&norms, 1),
            nk,
        });
    }
    let mut report = assemble(&prepared, n, p)?;
    if estimated {
        report
            .notes
            .push("some derivative norms are numerical estimates".into());
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covariance::covariance_model;
    use crate::distributions::{hermite_distribution, moments, DiscreteDistribution};

    fn ones(upto: usize) -> Vec<Option<f64>> {
        vec![Some(1.0); upto + 1]
    }

    #[test]
    fn nk_examples() {
        let v = n_k(&ones(4), 3).unwrap();
        assert_eq!(v.value, 0.25);
        assert_eq!(v.branch, NkBranch::NextOrder);
        let v = n_k(&ones(6), 5).unwrap();
        assert!((v.value - 1.0 / 6.0).abs() < 1e-15);
        let mut norms = ones(4);
        norms[4] = None;
        let v = n_k(&norms, 3).unwrap();
        assert_eq!(v.branch, NkBranch::GammaRatio);
        assert!((v.value - 0.531_923_1).abs() < 1e-6);
        assert!(n_k(&[None, None, None], 1).is_err());
        assert!(n_k(&ones(2), 0).is_err());
    }

    #[test]
    fn nk_middle_branch_formula() {
        // Γ(2)/(√2 Γ(5/2)) = 4/(3√(2π))
        let v = n_k(&[Some(10.0), Some(10.0), Some(1.0), Some(10.0)], 2).unwrap();
        let c = gamma_ratio_constant(3).unwrap().value;
        assert_eq!(v.branch, NkBranch::GammaRatio);
        assert_eq!(v.value, c);
    }

    #[test]
    fn rademacher_cosine_p3() {
        let table = moments(&DiscreteDistribution::rademacher(), 3).unwrap();
        let h = TestFunction::cosine(1.0, 0.0).unwrap();
        for n in [1u64, 7, 64, 1000] {
            let r = sum_bound(Summands::Iid { table: &table, n }, &h, 3).unwrap();
            assert!((r.total - 1.0 / (6.0 * n as f64)).abs() < 1e-15 / n as f64);
            assert_eq!(r.first_moment_term, 0.0);
            assert!(r.inner_terms.iter().all(|t| t.value == 0.0));
            assert_eq!(r.total, r.recomputed_total());
            let c = matched_moment_bound(Summands::Iid { table: &table, n }, &h, 3).unwrap();
            assert!((c - r.total).abs() < 1e-15);
        }
    }

    #[test]
    fn independent_matches_iid() {
        let table = moments(
            &DiscreteDistribution::new(vec![-1.0, 0.0, 2.0], vec![0.4, 0.3, 0.3]).unwrap(),
            3,
        )
        .unwrap();
        let h = TestFunction::logistic(1.0).unwrap();
        let iid = sum_bound(
            Summands::Iid {
                table: &table,
                n: 5,
            },
            &h,
            3,
        )
        .unwrap();
        let tables = vec![table.clone(); 5];
        let ind = sum_bound(Summands::Independent(&tables), &h, 3).unwrap();
        assert!((iid.total - ind.total).abs() < 1e-14);
        assert!(iid.first_moment_term > 0.0);
        assert_eq!(ind.inner_terms.len(), 2 * 5);
        assert!(ind.inner_terms.iter().all(|t| t.i.is_some()));
    }

    #[test]
    fn degenerate_is_zero() {
        let t = EpsilonTable::zeros(4);
        let h = TestFunction::cosine(1.0, 0.0).unwrap();
        let r = sum_bound(Summands::Iid { table: &t, n: 10 }, &h, 4).unwrap();
        assert_eq!(r.total, 0.0);
        let ts = [t.clone(), t.clone()];
        let r = multivariate_sum_bound(
            &[Summands::Independent(&ts), Summands::Independent(&ts)],
            &RidgeFunction::new(vec![1.0, 1.0], h).unwrap(),
            4,
        )
        .unwrap();
        assert_eq!(r.total, 0.0);
    }

    #[test]
    fn single_summand_p5() {
        // one summand matching five normal moments, E|X|^4 = 3, E|X|^6 = 9
        let mut t = EpsilonTable::zeros(5);
        t.abs_moments[4] = 3.0;
        t.abs_moments[6] = 9.0;
        let h = TestFunction::cosine(1.0, 0.0).unwrap();
        let r = sum_bound(Summands::Iid { table: &t, n: 1 }, &h, 5).unwrap();
        assert!((r.total - (1.0 / 6.0) * (3.0 / 24.0 + 9.0 / 120.0)).abs() < 1e-15);
    }

    #[test]
    fn hermite_three_p5() {
        let dist = hermite_distribution(3).unwrap();
        let table = moments(&dist, 5).unwrap();
        let h = TestFunction::cosine(1.0, 0.0).unwrap();
        for n in [1u64, 4, 32] {
            let v = matched_moment_bound(Summands::Iid { table: &table, n }, &h, 5).unwrap();
            let expected = (1.0 / 6.0) * (3.0 / 24.0 + 9.0 / 120.0) / (n * n) as f64;
            assert!((v - expected).abs() < 1e-12 * expected);
        }
        // three atoms cannot match EZ^6
        let t6 = moments(&dist, 6).unwrap();
        assert!(matches!(
            matched_moment_bound(Summands::Iid { table: &t6, n: 4 }, &h, 6),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn matched_bound_ratio_and_preconditions() {
        let table = moments(&DiscreteDistribution::rademacher(), 3).unwrap();
        let h = TestFunction::cosine(1.0, 0.0).unwrap();
        let a = matched_moment_bound(
            Summands::Iid {
                table: &table,
                n: 10,
            },
            &h,
            3,
        )
        .unwrap();
        let b = matched_moment_bound(
            Summands::Iid {
                table: &table,
                n: 20,
            },
            &h,
            3,
        )
        .unwrap();
        assert!((a / b - 2.0).abs() < 1e-14);
        let t4 = moments(&DiscreteDistribution::rademacher(), 4).unwrap();
        assert!(matches!(
            matched_moment_bound(Summands::Iid { table: &t4, n: 10 }, &h, 4),
            Err(Error::Precondition(_))
        ));
        assert!(matches!(
            sum_bound(
                Summands::Iid {
                    table: &table,
                    n: 10
                },
                &h,
                5
            ),
            Err(Error::InsufficientOrder { .. })
        ));
    }

    #[test]
    fn first_order_note() {
        let table = moments(
            &DiscreteDistribution::new(vec![0.0, 3.0], vec![0.5, 0.5]).unwrap(),
            1,
        )
        .unwrap();
        let h = TestFunction::cosine(1.0, 0.0).unwrap();
        let r = sum_bound(
            Summands::Iid {
                table: &table,
                n: 4,
            },
            &h,
            1,
        )
        .unwrap();
        assert!(r.first_moment_term > 0.0);
        assert_eq!(r.nk_branches.len(), 1);
        // N_1 = min{3, c_2, 1/2} = 1/2
        assert_eq!(r.nk_branches[0].branch, NkBranch::NextOrder);
        let fast = TestFunction::cosine(10.0, 0.0).unwrap();
        let r = sum_bound(
            Summands::Iid {
                table: &table,
                n: 4,
            },
            &fast,
            1,
        )
        .unwrap();
        assert_eq!(r.nk_branches[0].branch, NkBranch::ThreeLower);
        assert!(r.notes.iter().any(|n| n.contains("N_1")));
    }

    #[test]
    fn report_json_round_trip() {
        let table = moments(
            &DiscreteDistribution::new(vec![-1.0, 0.5, 2.0], vec![0.3, 0.4, 0.3]).unwrap(),
            3,
        )
        .unwrap();
        let h = TestFunction::cosine(1.0, 0.0).unwrap();
        let r = sum_bound(
            Summands::Iid {
                table: &table,
                n: 9,
            },
            &h,
            3,
        )
        .unwrap();
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains("\"nk_branches\"") && json.contains("\"first_moment_term\""));
        let back: BoundReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r);
    }

    fn synthetic_eps(n: f64) -> impl Fn(usize) -> f64 {
        move |k: usize| factorial(k as u32 - 1) / ((k * k) as f64 * n)
    }

    #[test]
    fn series_bound_synthetic() {
        let constants = SeriesConstants {
            c: 1.0,
            alpha: 1.0,
            delta: 2.0,
        };
        let zeta3 = 1.202_056_903_159_594_2;
        for n in [1.0, 10.0, 1000.0] {
            let r = series_bound(synthetic_eps(n), |_| Some(1.0), constants, n, 20).unwrap();
            assert!(r.condition.holds);
            assert!(r.total * n <= 1.5 + 2.0 * zeta3);
            assert!(r.partial_sum > 0.0 && r.tail_bound > 0.0);
        }
        let a = series_bound(synthetic_eps(8.0), |_| Some(1.0), constants, 8.0, 12).unwrap();
        let b = series_bound(synthetic_eps(16.0), |_| Some(1.0), constants, 16.0, 12).unwrap();
        assert!((a.total / b.total - 2.0).abs() < 1e-12);
    }

    #[test]
    fn series_tail_dominates_remaining_terms() {
        let constants = SeriesConstants {
            c: 1.0,
            alpha: 1.0,
            delta: 2.0,
        };
        let full = series_bound(synthetic_eps(1.0), |_| Some(1.0), constants, 1.0, 150).unwrap();
        for big_k in [2usize, 3, 5, 10, 40] {
            let r = series_bound(synthetic_eps(1.0), |_| Some(1.0), constants, 1.0, big_k).unwrap();
            assert!(r.total >= full.partial_sum, "K = {big_k}");
        }
    }

    #[test]
    fn series_errors_and_zero() {
        let constants = SeriesConstants {
            c: 1.0,
            alpha: 1.0,
            delta: 2.0,
        };
        let r = series_bound(|_| 0.0, |_| Some(1.0), constants, 5.0, 4).unwrap();
        assert_eq!(r.partial_sum, 0.0);
        assert!(r.tail_bound > 0.0);
        assert!(series_bound(|_| 0.0, |_| Some(1.0), constants, 5.0, 1).is_err());
        let bad = SeriesConstants {
            delta: 0.0,
            ..constants
        };
        assert!(series_bound(|_| 0.0, |_| Some(1.0), bad, 5.0, 4).is_err());
        let r = series_bound(|k| factorial(k as u32), |_| Some(1.0), constants, 1.0, 4).unwrap();
        assert!(!r.condition.holds);
    }

    #[test]
    fn mvn_catalog_examples() {
        let eye = covariance_model(&[
            vec![1.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
        ])
        .unwrap();
        let h = RidgeFunction::new(vec![1.0, 0.0, 0.0], TestFunction::cosine(1.0, 0.0).unwrap())
            .unwrap();
        let c = mvn_constant_catalog(&eye, &h, &[0, 0, 0]).unwrap();
        assert!((c.partial.unwrap() - 0.626_657_068_657_750_1).abs() < 1e-12);
        assert_eq!(c.operator, c.partial);
        assert!((c.partial_same_order.unwrap() - 1.0 / 3.0).abs() < 1e-15);

        let diag = covariance_model(&[vec![4.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let h2 =
            RidgeFunction::new(vec![1.0, 1.0], TestFunction::cosine(1.0, 0.0).unwrap()).unwrap();
        let c = mvn_constant_catalog(&diag, &h2, &[0]).unwrap();
        let centered = h2.covariance_centered_norm(&diag.sigma).value;
        assert!(
            (c.partial.unwrap() - std::f64::consts::FRAC_PI_2.sqrt() * 0.5 * centered).abs()
                < 1e-15
        );

        for k in 2..8usize {
            let c = mvn_constant_catalog(&eye, &h, &vec![0; k]).unwrap();
            assert_eq!(
                c.operator.unwrap(),
                gamma_ratio_constant(k as u32).unwrap().value
            );
        }
        assert!(mvn_constant_catalog(&eye, &h, &[3]).is_err());
        assert!(mvn_constant_catalog(&eye, &h, &[]).is_err());
    }

    #[test]
    fn mvn_slot_minimum() {
        let model = covariance_model(&[vec![4.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let h =
            RidgeFunction::new(vec![1.0, 3.0], TestFunction::cosine(1.0, 0.0).unwrap()).unwrap();
        // slot 0: row norm 1/2 times |u_1| = 3; slot 1: row norm 1 times |u_0| = 1
        let c = mvn_constant_catalog(&model, &h, &[0, 1]).unwrap();
        assert_eq!(c.partial_slot, Some(1));
        assert!((c.partial.unwrap() - gamma_ratio_constant(2).unwrap().value).abs() < 1e-15);
    }

    #[test]
    fn multivariate_rademacher_pair() {
        let table = moments(&DiscreteDistribution::rademacher(), 3).unwrap();
        let h =
            RidgeFunction::new(vec![1.0, 1.0], TestFunction::cosine(1.0, 0.0).unwrap()).unwrap();
        for n in [8u64, 100] {
            let s = Summands::Iid { table: &table, n };
            let r = multivariate_sum_bound(&[s, s], &h, 3).unwrap();
            assert!((r.total - 1.0 / (3.0 * n as f64)).abs() < 1e-15);
            assert!(r.nk_branches.iter().all(|b| b.j.is_some()));
        }
    }

    #[test]
    fn multivariate_dominates_one_dimensional() {
        let table = moments(
            &DiscreteDistribution::new(vec![-1.0, 0.5, 2.0], vec![0.3, 0.4, 0.3]).unwrap(),
            3,
        )
        .unwrap();
        let g = TestFunction::cosine(10.0, 0.3).unwrap();
        let s = Summands::Iid {
            table: &table,
            n: 6,
        };
        let one = sum_bound(s, &g, 3).unwrap();
        assert!(one
            .nk_branches
            .iter()
            .any(|b| b.branch == NkBranch::ThreeLower));
        let multi =
            multivariate_sum_bound(&[s], &RidgeFunction::new(vec![1.0], g).unwrap(), 3).unwrap();
        assert!(multi.total >= one.total);
    }
}
