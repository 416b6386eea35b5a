//! Finite-atom distributions, normal-moment deficits, Gauss–Hermite
//! moment-matched laws and exact laws of standardized i.i.d. sums.

use std::io::{BufRead, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::gauss_hermite;
use crate::specfun::{normal_abs_moment, normal_moment};
use crate::testfuncs::read_two_columns;

/// Relative tolerance under which neighbouring atoms are merged.
pub const MERGE_TOLERANCE: f64 = 1e-12;

/// Default cap on the number of atoms a convolution may produce.
pub const DEFAULT_SUPPORT_CAP: usize = 5_000_000;

const PROB_SUM_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteDistribution {
    atoms: Vec<f64>,
    probs: Vec<f64>,
}

impl DiscreteDistribution {
    /// Sorts the atoms, merges (near-)duplicates and checks the weights.
    pub fn new(atoms: Vec<f64>, probs: Vec<f64>) -> Result<Self> {
        if atoms.len() != probs.len() || atoms.is_empty() {
            return Err(Error::invalid(
                "atoms and probabilities must be non-empty and of equal length",
            ));
        }
        if atoms.iter().any(|a| !a.is_finite()) {
            return Err(Error::invalid("atoms must be finite"));
        }
        if probs.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
            return Err(Error::invalid(
                "probabilities must be finite and non-negative",
            ));
        }
        let total: f64 = probs.iter().sum();
        let tol = PROB_SUM_TOLERANCE * (probs.len() as f64).max(1.0);
        if (total - 1.0).abs() > tol {
            return Err(Error::invalid(format!(
                "probabilities sum to {total}, not 1"
            )));
        }
        let mut pairs: Vec<(f64, f64)> = atoms.into_iter().zip(probs).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        Ok(merge_sorted(pairs))
    }

    /// Uniform law on `{-1, +1}`.
    pub fn rademacher() -> Self {
        DiscreteDistribution {
            atoms: vec![-1.0, 1.0],
            probs: vec![0.5, 0.5],
        }
    }

    pub fn point_mass(x: f64) -> Self {
        DiscreteDistribution {
            atoms: vec![x],
            probs: vec![1.0],
        }
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn expectation(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.atoms
            .iter()
            .zip(&self.probs)
            .map(|(&x, &p)| p * f(x))
            .sum()
    }

    pub fn moment(&self, k: u32) -> f64 {
        self.expectation(|x| x.powi(k as i32))
    }

    pub fn abs_moment(&self, k: u32) -> f64 {
        self.expectation(|x| x.abs().powi(k as i32))
    }

    /// Law of `c X`.
    pub fn scaled(&self, c: f64) -> Self {
        let mut pairs: Vec<(f64, f64)> = self
            .atoms
            .iter()
            .map(|&x| c * x)
            .zip(self.probs.iter().copied())
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        merge_sorted(pairs)
    }

    /// Law of `X + Y` for independent `X ~ self`, `Y ~ other`.
    pub fn convolve(&self, other: &DiscreteDistribution) -> Self {
        let mut pairs = Vec::with_capacity(self.len() * other.len());
        for (&x, &p) in self.atoms.iter().zip(&self.probs) {
            for (&y, &q) in other.atoms.iter().zip(&other.probs) {
                pairs.push((x + y, p * q));
            }
        }
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        merge_sorted(pairs)
    }

    /// Reads `atom,prob` rows (header optional).
    pub fn from_csv_reader(reader: impl BufRead) -> Result<Self> {
        let rows = read_two_columns(reader)?;
        let (atoms, probs) = rows.into_iter().unzip();
        Self::new(atoms, probs)
    }

    pub fn from_csv(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_csv_reader(std::io::BufReader::new(std::fs::File::open(path)?))
    }

    /// Writes `atom,prob` rows with a header; values round-trip exactly.
    pub fn write_csv(&self, mut out: impl Write) -> Result<()> {
        writeln!(out, "atom,prob")?;
        for (x, p) in self.atoms.iter().zip(&self.probs) {
            writeln!(out, "{x:?},{p:?}")?;
        }
        Ok(())
    }

    /// Inverse-CDF draw.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for (&x, &p) in self.atoms.iter().zip(&self.probs) {
            acc += p;
            if u < acc {
                return x;
            }
        }
        self.atoms[self.atoms.len() - 1]
    }
}

fn merge_sorted(pairs: Vec<(f64, f64)>) -> DiscreteDistribution {
    let scale = pairs.iter().map(|p| p.0.abs()).fold(0.0, f64::max);
    let tol = MERGE_TOLERANCE * scale;
    let mut atoms: Vec<f64> = Vec::with_capacity(pairs.len());
    let mut probs: Vec<f64> = Vec::with_capacity(pairs.len());
    for (x, p) in pairs {
        match atoms.last() {
            Some(&last) if x - last <= tol => *probs.last_mut().expect("parallel vectors") += p,
            _ => {
                atoms.push(x);
                probs.push(p);
            }
        }
    }
    DiscreteDistribution { atoms, probs }
}

/// Raw moments, normal-moment deficits and absolute moments of one summand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsilonTable {
    pub p: u32,
    /// `EX^k` for `k = 0..=p+1`.
    pub moments: Vec<f64>,
    /// `ε_k = EX^k - EZ^k` for `k = 0..=p`.
    pub eps: Vec<f64>,
    /// `E|X|^k` for `k = 0..=p+1`.
    pub abs_moments: Vec<f64>,
}

impl EpsilonTable {
    pub fn eps(&self, k: u32) -> f64 {
        self.eps[k as usize]
    }

    pub fn abs_moment(&self, k: u32) -> f64 {
        self.abs_moments[k as usize]
    }

    /// All-zero deficits and absolute moments (a degenerate input).
    pub fn zeros(p: u32) -> Self {
        let n = p as usize;
        EpsilonTable {
            p,
            moments: vec![0.0; n + 2],
            eps: vec![0.0; n + 1],
            abs_moments: vec![0.0; n + 2],
        }
    }

    /// First `k ≥ 1` with `|ε_k| > tol · max(1, E|Z|^k)`, if any.
    pub fn first_mismatch(&self, tol: f64) -> Option<u32> {
        (1..=self.p).find(|&k| self.eps(k).abs() > tol * normal_abs_moment(k).max(1.0))
    }
}

/// Moment table through order `p` (absolute moments through `p + 1`).
pub fn moments(dist: &DiscreteDistribution, p: u32) -> Result<EpsilonTable> {
    if p == 0 {
        return Err(Error::domain("moment tables need p >= 1"));
    }
    let raw: Vec<f64> = (0..=p + 1)
        .map(|k| if k == 0 { 1.0 } else { dist.moment(k) })
        .collect();
    let eps = (0..=p)
        .map(|k| {
            if k == 0 {
                0.0
            } else {
                raw[k as usize] - normal_moment(k)
            }
        })
        .collect();
    let abs_moments = (0..=p + 1)
        .map(|k| if k == 0 { 1.0 } else { dist.abs_moment(k) })
        .collect();
    Ok(EpsilonTable {
        p,
        moments: raw,
        eps,
        abs_moments,
    })
}

/// Tolerance (relative to `max(1, E|Z|^k)`) used to validate Hermite laws.
pub const HERMITE_MOMENT_TOLERANCE: f64 = 1e-9;

/// The `m`-atom law on the roots of `He_m` with Gauss–Hermite weights; it
/// matches `EZ^k` for every `k ≤ 2m - 1`.
pub fn hermite_distribution(m: usize) -> Result<DiscreteDistribution> {
    if !(2..=16).contains(&m) {
        return Err(Error::domain(format!(
            "hermite_distribution needs 2 <= m <= 16, got {m}"
        )));
    }
    let rule = gauss_hermite(m)?;
    let total: f64 = rule.weights.iter().sum();
    let probs: Vec<f64> = rule.weights.iter().map(|w| w / total).collect();
    let dist = DiscreteDistribution {
        atoms: rule.nodes,
        probs,
    };
    let table = moments(&dist, 2 * m as u32 - 1)?;
    if let Some(k) = table.first_mismatch(HERMITE_MOMENT_TOLERANCE) {
        return Err(Error::Numerical(format!(
            "Hermite law with {m} atoms misses EZ^{k} by {}",
            table.eps(k)
        )));
    }
    Ok(dist)
}

/// Exact law of `W_n = n^{-1/2} (X_1 + … + X_n)` for i.i.d. `X_i ~ dist`.
pub fn convolve_iid(dist: &DiscreteDistribution, n: u64) -> Result<DiscreteDistribution> {
    convolve_iid_with_cap(dist, n, DEFAULT_SUPPORT_CAP)
}

pub fn convolve_iid_with_cap(
    dist: &DiscreteDistribution,
    n: u64,
    cap: usize,
) -> Result<DiscreteDistribution> {
    if n == 0 {
        return Err(Error::domain("convolve_iid needs n >= 1"));
    }
    let mut acc = dist.clone();
    for _ in 1..n {
        let projected = acc.len().saturating_mul(dist.len());
        if projected > cap {
            return Err(Error::SupportCap { projected, cap });
        }
        acc = acc.convolve(dist);
    }
    if n == 1 {
        return Ok(acc);
    }
    let scale = 1.0 / (n as f64).sqrt();
    acc.atoms.iter_mut().for_each(|x| *x *= scale);
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rademacher_deficits() {
        let t = moments(&DiscreteDistribution::rademacher(), 4).unwrap();
        assert_eq!(&t.eps[..4], &[0.0, 0.0, 0.0, 0.0]);
        assert_eq!(t.eps(4), -2.0);
        assert_eq!(t.abs_moment(5), 1.0);
    }

    #[test]
    fn point_mass_deficit() {
        let t = moments(&DiscreteDistribution::point_mass(0.0), 2).unwrap();
        assert_eq!(t.eps(2), -1.0);
        assert_eq!(t.eps(0), 0.0);
    }

    #[test]
    fn three_atom_law() {
        let s = 3f64.sqrt();
        let d = DiscreteDistribution::new(vec![s, -s, 0.0], vec![1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0])
            .unwrap();
        let t = moments(&d, 6).unwrap();
        for k in 0..=5 {
            assert!(t.eps(k).abs() < 1e-13, "k={k}");
        }
        assert!((t.eps(6) + 6.0).abs() < 1e-12);
        for k in 0..=6u32 {
            assert!(t.moments[k as usize].abs() <= t.abs_moment(k) + 1e-15);
        }
    }

    #[test]
    fn hermite_small() {
        let d2 = hermite_distribution(2).unwrap();
        assert_eq!(d2.atoms(), &[-1.0, 1.0]);
        assert!((d2.probs()[0] - 0.5).abs() < 1e-15);
        let d3 = hermite_distribution(3).unwrap();
        let s = 3f64.sqrt();
        assert!((d3.atoms()[0] + s).abs() < 1e-15 && (d3.atoms()[2] - s).abs() < 1e-15);
        assert!((d3.probs()[1] - 2.0 / 3.0).abs() < 1e-15);
        assert!(hermite_distribution(1).is_err());
        assert!(hermite_distribution(17).is_err());
    }

    #[test]
    fn hermite_deficit_at_order_2m_is_minus_m_factorial() {
        // x^{2m} - He_m(x)^2 has degree 2m - 1, so E X^{2m} - EZ^{2m} = -E He_m(Z)^2 = -m!.
        for m in 2..=16usize {
            let fact = crate::specfun::factorial(m as u32);
            let d = hermite_distribution(m).unwrap();
            let t = moments(&d, 2 * m as u32).unwrap();
            let e = t.eps(2 * m as u32);
            assert!((e + fact).abs() <= 1e-8 * fact, "m={m}: {e} vs {}", -fact);
        }
    }

    #[test]
    fn rademacher_pair_sum() {
        let w = convolve_iid(&DiscreteDistribution::rademacher(), 2).unwrap();
        let r2 = 2f64.sqrt();
        assert_eq!(w.len(), 3);
        assert!((w.atoms()[0] + r2).abs() < 1e-15 && w.atoms()[1] == 0.0);
        assert_eq!(w.probs(), &[0.25, 0.5, 0.25]);
    }

    #[test]
    fn identity_for_single_summand() {
        let d = hermite_distribution(4).unwrap();
        assert_eq!(convolve_iid(&d, 1).unwrap(), d);
    }

    #[test]
    fn rademacher_hundred_is_binomial() {
        let w = convolve_iid(&DiscreteDistribution::rademacher(), 100).unwrap();
        assert_eq!(w.len(), 101);
        // binomial(100, 1/2) masses by the multiplicative recurrence
        let mut mass = 0.5f64.powi(100);
        for (j, &p) in w.probs().iter().enumerate() {
            assert!((p - mass).abs() <= 1e-12 * mass, "j={j}");
            let expected_atom = (2.0 * j as f64 - 100.0) / 10.0;
            assert!((w.atoms()[j] - expected_atom).abs() < 1e-12);
            mass *= (100 - j) as f64 / (j + 1) as f64;
        }
    }

    #[test]
    fn support_cap_is_enforced() {
        let d =
            DiscreteDistribution::new(vec![0.0, 1.0, std::f64::consts::PI], vec![0.2, 0.3, 0.5])
                .unwrap();
        assert!(matches!(
            convolve_iid_with_cap(&d, 10, 50),
            Err(Error::SupportCap { .. })
        ));
    }

    #[test]
    fn invalid_inputs() {
        assert!(DiscreteDistribution::new(vec![0.0, 1.0], vec![0.5, 0.6]).is_err());
        assert!(DiscreteDistribution::new(vec![0.0], vec![-1.0]).is_err());
        assert!(DiscreteDistribution::new(vec![], vec![]).is_err());
        let merged = DiscreteDistribution::new(vec![1.0, 1.0, 0.0], vec![0.25, 0.25, 0.5]).unwrap();
        assert_eq!(merged.atoms(), &[0.0, 1.0]);
        assert_eq!(merged.probs(), &[0.5, 0.5]);
    }

    #[test]
    fn csv_round_trip() {
        let d = hermite_distribution(5).unwrap();
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        let back = DiscreteDistribution::from_csv_reader(buf.as_slice()).unwrap();
        assert_eq!(back, d);
    }
}
