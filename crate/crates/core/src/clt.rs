//! Distances `|E h(W_n) - Φh|` for standardized sums, exact or by Monte
//! Carlo, and log-log rate fits over a series of `n`.

use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::{convolve_iid, DiscreteDistribution};
use crate::error::{Error, Result};
use crate::testfuncs::{Certainty, RidgeFunction, TestFunction};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case")]
pub enum Method {
    Exact,
    MonteCarlo { ci_half_width: f64 },
}

impl Method {
    pub fn ci(&self) -> f64 {
        match self {
            Method::Exact => 0.0,
            Method::MonteCarlo { ci_half_width } => *ci_half_width,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistancePoint {
    pub n: u64,
    pub distance: f64,
    pub method: Method,
}

/// Distances at strictly increasing `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceSeries {
    points: Vec<DistancePoint>,
}

impl DistanceSeries {
    pub fn new(points: Vec<DistancePoint>) -> Result<Self> {
        if points.windows(2).any(|w| w[1].n <= w[0].n) {
            return Err(Error::invalid(
                "distance series needs strictly increasing n",
            ));
        }
        for p in &points {
            if !(p.distance >= 0.0) {
                return Err(Error::invalid(format!(
                    "distance at n = {} is negative or NaN",
                    p.n
                )));
            }
            if let Method::MonteCarlo { ci_half_width } = p.method {
                if !(ci_half_width >= 0.0) {
                    return Err(Error::invalid(
                        "Monte Carlo CI half-width must be non-negative",
                    ));
                }
            }
        }
        Ok(DistanceSeries { points })
    }

    pub fn points(&self) -> &[DistancePoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// `n,distance,method,ci` with a header row.
    pub fn write_csv(&self, mut out: impl Write) -> Result<()> {
        writeln!(out, "n,distance,method,ci")?;
        for p in &self.points {
            let tag = match p.method {
                Method::Exact => "exact",
                Method::MonteCarlo { .. } => "monte-carlo",
            };
            writeln!(out, "{},{:?},{},{:?}", p.n, p.distance, tag, p.method.ci())?;
        }
        Ok(())
    }

    pub fn read_csv(reader: impl BufRead) -> Result<Self> {
        let mut points = Vec::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || (idx == 0 && line.starts_with('n')) {
                continue;
            }
            let parse_err = |message: String| Error::Parse {
                line: idx + 1,
                message,
            };
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 4 {
                return Err(parse_err(format!(
                    "expected 4 columns, found {}",
                    fields.len()
                )));
            }
            let n = fields[0]
                .parse::<u64>()
                .map_err(|e| parse_err(e.to_string()))?;
            let distance = fields[1]
                .parse::<f64>()
                .map_err(|e| parse_err(e.to_string()))?;
            let ci = fields[3]
                .parse::<f64>()
                .map_err(|e| parse_err(e.to_string()))?;
            let method = match fields[2] {
                "exact" => Method::Exact,
                "monte-carlo" => Method::MonteCarlo { ci_half_width: ci },
                other => return Err(parse_err(format!("unknown method `{other}`"))),
            };
            points.push(DistancePoint {
                n,
                distance,
                method,
            });
        }
        Self::new(points)
    }
}

fn certified_phi(h: &TestFunction) -> Result<f64> {
    match h.phi() {
        (v, Certainty::Exact) => Ok(v),
        (_, Certainty::Estimated) => Err(Error::Precondition(format!(
            "exact distance needs an exact normal expectation, {h} only has an estimate"
        ))),
    }
}

/// `|E h(W_n) - Φh|` over the exact law of `W_n`.
pub fn exact_distance(dist: &DiscreteDistribution, h: &TestFunction, n: u64) -> Result<f64> {
    let phi = certified_phi(h)?;
    let law = convolve_iid(dist, n)?;
    Ok((law.expectation(|w| h.derivative(0, w)) - phi).abs())
}

/// Exact distances along a grid of `n`, reusing nothing between points.
pub fn exact_distance_series(
    dist: &DiscreteDistribution,
    h: &TestFunction,
    ns: &[u64],
) -> Result<DistanceSeries> {
    let phi = certified_phi(h)?;
    let points = ns
        .par_iter()
        .map(|&n| {
            let law = convolve_iid(dist, n)?;
            let distance = (law.expectation(|w| h.derivative(0, w)) - phi).abs();
            Ok(DistancePoint {
                n,
                distance,
                method: Method::Exact,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    DistanceSeries::new(points)
}

/// `|E h(W_n) - E h(Z)|` for `W_n = n^{-1/2} Σ X_i` with independent
/// coordinates `X_{i,j} ~ coords[j]` and a ridge test function.
pub fn exact_distance_ridge(
    coords: &[DiscreteDistribution],
    h: &RidgeFunction,
    n: u64,
) -> Result<f64> {
    if coords.len() != h.dim() {
        return Err(Error::invalid(format!(
            "{} coordinate laws for a {}-dimensional function",
            coords.len(),
            h.dim()
        )));
    }
    let phi = match h.phi() {
        (v, Certainty::Exact) => v,
        _ => {
            return Err(Error::Precondition(
                "ridge function lacks an exact normal expectation".into(),
            ))
        }
    };
    // ⟨u, X_i⟩ is a sum of independent scaled coordinates.
    let mut projected = DiscreteDistribution::point_mass(0.0);
    for (law, &u) in coords.iter().zip(h.direction()) {
        projected = projected.convolve(&law.scaled(u));
    }
    let sum_law = convolve_iid(&projected, n)?;
    Ok((sum_law.expectation(|s| h.profile().derivative(0, s)) - phi).abs())
}

/// A source of i.i.d. real variates.
pub trait VariateSource: Sync {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64;
}

impl VariateSource for DiscreteDistribution {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        DiscreteDistribution::sample(self, rng)
    }
}

/// Standard normal variates by Box–Muller (for smoke tests of the MC path).
#[derive(Debug, Clone, Copy, Default)]
pub struct StandardNormal;

impl VariateSource for StandardNormal {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u1: f64 = 1.0 - rng.gen::<f64>();
        let u2: f64 = rng.gen();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub estimate: f64,
    pub ci_half_width: f64,
    pub reps: u64,
}

/// CI half-width multiplier on the standard error.
pub const CI_MULTIPLIER: f64 = 3.0;

/// Replications per deterministic work unit.
const CHUNK: u64 = 4096;

#[derive(Debug, Clone, Copy)]
struct Moments {
    count: f64,
    mean: f64,
    m2: f64,
}

impl Moments {
    const EMPTY: Moments = Moments {
        count: 0.0,
        mean: 0.0,
        m2: 0.0,
    };

    fn push(&mut self, y: f64) {
        self.count += 1.0;
        let delta = y - self.mean;
        self.mean += delta / self.count;
        self.m2 += delta * (y - self.mean);
    }

    fn merge(self, other: Moments) -> Moments {
        if other.count == 0.0 {
            return self;
        }
        if self.count == 0.0 {
            return other;
        }
        let count = self.count + other.count;
        let delta = other.mean - self.mean;
        Moments {
            count,
            mean: self.mean + delta * other.count / count,
            m2: self.m2 + other.m2 + delta * delta * self.count * other.count / count,
        }
    }
}

/// RNG of replication `rep`: ChaCha8 keyed by `seed`, stream `rep`.
pub fn replication_rng(seed: u64, rep: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep);
    rng
}

/// Monte Carlo estimate of `|E h(W_n) - Φh|` with a `3σ/√reps` half-width.
///
/// Each replication draws from its own counter-based stream and replications
/// are reduced in fixed chunks in index order, so the result is bit-identical
/// for any `threads`.
pub fn mc_distance<S: VariateSource>(
    sampler: &S,
    h: &TestFunction,
    n: u64,
    reps: u64,
    seed: u64,
    threads: Option<usize>,
) -> Result<McEstimate> {
    if n == 0 {
        return Err(Error::domain("mc_distance needs n >= 1"));
    }
    if reps < 1000 {
        return Err(Error::Precondition(format!(
            "mc_distance needs at least 1000 replications, got {reps}"
        )));
    }
    let phi = h.phi().0;
    let scale = 1.0 / (n as f64).sqrt();
    let chunks = reps.div_ceil(CHUNK);
    let run = || -> Vec<Moments> {
        (0..chunks)
            .into_par_iter()
            .map(|c| {
                let mut acc = Moments::EMPTY;
                for rep in c * CHUNK..((c + 1) * CHUNK).min(reps) {
                    let mut rng = replication_rng(seed, rep);
                    let sum: f64 = (0..n).map(|_| sampler.sample(&mut rng)).sum();
                    acc.push(h.derivative(0, sum * scale));
                }
                acc
            })
            .collect()
    };
    let parts = match threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t.max(1))
            .build()
            .map_err(|e| Error::Numerical(format!("thread pool: {e}")))?
            .install(run),
        None => run(),
    };
    let total = parts.into_iter().fold(Moments::EMPTY, Moments::merge);
    let variance = if total.count > 1.0 {
        total.m2 / (total.count - 1.0)
    } else {
        0.0
    };
    Ok(McEstimate {
        estimate: (total.mean - phi).abs(),
        ci_half_width: CI_MULTIPLIER * (variance.max(0.0) / total.count).sqrt(),
        reps,
    })
}

/// Least-squares line through `(ln n, ln d_n)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub max_abs_residual: f64,
    pub points: usize,
}

pub fn rate_fit(series: &DistanceSeries) -> Result<RateFit> {
    let pairs: Vec<(f64, f64)> = series
        .points()
        .iter()
        .map(|p| (p.n as f64, p.distance))
        .collect();
    fit_power_law(&pairs)
}

/// Power-law fit `d ≈ e^{intercept} n^{slope}` over `(n, d)` pairs.
pub fn fit_power_law(pairs: &[(f64, f64)]) -> Result<RateFit> {
    if pairs.len() < 4 {
        return Err(Error::Precondition(format!(
            "rate fit needs at least 4 points, got {}",
            pairs.len()
        )));
    }
    if let Some((n, d)) = pairs.iter().find(|(n, d)| !(*d > 0.0) || !(*n > 0.0)) {
        return Err(Error::invalid(format!(
            "rate fit needs positive values, got d = {d} at n = {n}"
        )));
    }
    let xs: Vec<f64> = pairs.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = pairs.iter().map(|p| p.1.ln()).collect();
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::invalid("rate fit needs at least two distinct n"));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let max_abs_residual = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).abs())
        .fold(0.0, f64::max);
    Ok(RateFit {
        slope,
        intercept,
        max_abs_residual,
        points: pairs.len(),
    })
}

/// `start, 2·start, …` up to and including `end`.
pub fn dyadic_grid(start: u64, end: u64) -> Vec<u64> {
    std::iter::successors(Some(start.max(1)), |&n| n.checked_mul(2))
        .take_while(|&n| n <= end)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cos1() -> TestFunction {
        TestFunction::cosine(1.0, 0.0).unwrap()
    }

    #[test]
    fn rademacher_cos_closed_form() {
        for n in [1u64, 4, 16, 100] {
            let d = exact_distance(&DiscreteDistribution::rademacher(), &cos1(), n).unwrap();
            let closed = ((1.0 / (n as f64).sqrt()).cos().powi(n as i32) - (-0.5f64).exp()).abs();
            assert!((d - closed).abs() < 1e-14, "n={n}");
        }
        let d4 = exact_distance(&DiscreteDistribution::rademacher(), &cos1(), 4).unwrap();
        assert!((d4 - 0.013_397_861_346_956_2).abs() < 1e-15, "{d4}");
    }

    #[test]
    fn constant_function_distance_is_zero() {
        let h = TestFunction::constant(2.5);
        assert_eq!(
            exact_distance(&DiscreteDistribution::rademacher(), &h, 7).unwrap(),
            0.0
        );
        let mc = mc_distance(&DiscreteDistribution::rademacher(), &h, 5, 2000, 1, None).unwrap();
        assert_eq!(mc.estimate, 0.0);
        assert_eq!(mc.ci_half_width, 0.0);
    }

    #[test]
    fn rate_fit_synthetic_power_laws() {
        let ns = [8.0, 16.0, 32.0, 64.0];
        let fit = fit_power_law(&ns.map(|n| (n, 5.0 / n))).unwrap();
        assert!((fit.slope + 1.0).abs() < 1e-12);
        assert!((fit.intercept - 5f64.ln()).abs() < 1e-12);
        let fit2 = fit_power_law(&ns.map(|n| (n, 3.0 / (n * n)))).unwrap();
        assert!((fit2.slope + 2.0).abs() < 1e-12);
        assert!(fit_power_law(&ns[..3].iter().map(|&n| (n, 1.0 / n)).collect::<Vec<_>>()).is_err());
        assert!(fit_power_law(&[(1.0, 1.0), (2.0, 0.0), (3.0, 1.0), (4.0, 1.0)]).is_err());
    }

    #[test]
    fn mc_is_deterministic_and_seed_sensitive() {
        let r = DiscreteDistribution::rademacher();
        let a = mc_distance(&r, &cos1(), 8, 20_000, 42, Some(1)).unwrap();
        let b = mc_distance(&r, &cos1(), 8, 20_000, 42, Some(3)).unwrap();
        assert_eq!(a.estimate.to_bits(), b.estimate.to_bits());
        let c = mc_distance(&r, &cos1(), 8, 20_000, 43, Some(1)).unwrap();
        assert_ne!(a.estimate.to_bits(), c.estimate.to_bits());
        assert!(mc_distance(&r, &cos1(), 8, 999, 1, None).is_err());
    }

    #[test]
    fn mc_normal_summands_have_no_bias() {
        let mc = mc_distance(&StandardNormal, &cos1(), 4, 200_000, 9, None).unwrap();
        assert!(mc.estimate <= mc.ci_half_width, "{mc:?}");
    }

    #[test]
    fn ridge_distance_two_rademacher_coordinates() {
        let h = RidgeFunction::new(vec![1.0, 1.0], cos1()).unwrap();
        let coords = vec![DiscreteDistribution::rademacher(); 2];
        for n in [8u64, 32] {
            let d = exact_distance_ridge(&coords, &h, n).unwrap();
            let closed =
                ((1.0 / (n as f64).sqrt()).cos().powi(2 * n as i32) - (-1.0f64).exp()).abs();
            assert!((d - closed).abs() < 1e-14);
        }
    }

    #[test]
    fn series_csv_round_trip_and_validation() {
        let s = DistanceSeries::new(vec![
            DistancePoint {
                n: 8,
                distance: 0.1,
                method: Method::Exact,
            },
            DistancePoint {
                n: 16,
                distance: 0.05,
                method: Method::MonteCarlo {
                    ci_half_width: 0.001,
                },
            },
        ])
        .unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        assert_eq!(DistanceSeries::read_csv(buf.as_slice()).unwrap(), s);
        assert!(DistanceSeries::new(vec![
            DistancePoint {
                n: 8,
                distance: 0.1,
                method: Method::Exact
            },
            DistancePoint {
                n: 8,
                distance: 0.1,
                method: Method::Exact
            },
        ])
        .is_err());
    }

    #[test]
    fn dyadic() {
        assert_eq!(dyadic_grid(8, 64), vec![8, 16, 32, 64]);
        assert_eq!(dyadic_grid(8, 4096).len(), 10);
    }
}
