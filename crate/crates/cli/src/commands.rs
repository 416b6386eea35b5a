use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use stein_bounds::bounds::{MvnConstants, SeriesBound, SeriesConstants, MATCHING_TOLERANCE};
use stein_bounds::clt::{exact_distance_ridge, exact_distance_series, mc_distance};
use stein_bounds::specfun::factorial;
use stein_bounds::stein::VerificationReport;
use stein_bounds::{
    convolve_iid, covariance_model, moments, multivariate_sum_bound, mvn_constant_catalog,
    rate_fit, series_bound, sum_bound, verify_bounds, BoundReport, CovarianceModel, DistancePoint,
    DistanceSeries, Error, Method, QuadratureOrders, RateFit, SteinSolution, Summands,
    TestFunction, WGrid,
};

use crate::config::{Command, Config, EpsilonSource, RateMethod};
use crate::error::CliError;

/// Values that flags may override.
#[derive(Debug, Clone)]
pub struct Settings {
    pub out: PathBuf,
    pub seed: u64,
    pub threads: Option<usize>,
    pub quadrature_order: Option<usize>,
}

/// What a finished command reports: artifacts written and gate status.
#[derive(Debug, Default)]
pub struct Outcome {
    pub written: Vec<PathBuf>,
    pub failed_gates: Vec<String>,
}

pub fn run(config: &Config, settings: &Settings) -> Result<Outcome, CliError> {
    fs::create_dir_all(&settings.out)?;
    match config.command {
        Command::Bound => bound(config, settings),
        Command::VerifyStein => verify_stein(config, settings),
        Command::Rate => rate(config, settings),
        Command::MvnBound => mvn_bound(config, settings),
        Command::Thm34 => thm34(config, settings),
    }
}

fn write_json<T: Serialize>(
    dir: &Path,
    name: &str,
    value: &T,
    outcome: &mut Outcome,
) -> Result<(), CliError> {
    let path = dir.join(name);
    let mut text =
        serde_json::to_string_pretty(value).map_err(|e| CliError::Numerical(e.to_string()))?;
    text.push('\n');
    fs::write(&path, text)?;
    outcome.written.push(path);
    Ok(())
}

fn create(dir: &Path, name: &str, outcome: &mut Outcome) -> Result<BufWriter<File>, CliError> {
    let path = dir.join(name);
    let file = File::create(&path)?;
    outcome.written.push(path);
    Ok(BufWriter::new(file))
}

fn bound(config: &Config, settings: &Settings) -> Result<Outcome, CliError> {
    let p = config.p()?;
    let ns = config.n_values()?;
    let [n] = ns[..] else {
        return Err(CliError::Config("`bound` takes a single `n`".into()));
    };
    let table = moments(&config.distribution()?, p as u32)?;
    let h = config.test_function()?;
    let report = sum_bound(Summands::Iid { table: &table, n }, &h, p)?;
    let mut outcome = Outcome::default();
    write_json(&settings.out, "bound_report.json", &report, &mut outcome)?;
    Ok(outcome)
}

fn verify_stein(config: &Config, settings: &Settings) -> Result<Outcome, CliError> {
    let h = config.test_function()?;
    let orders = settings
        .quadrature_order
        .map(QuadratureOrders::uniform)
        .unwrap_or_default();
    let solution = SteinSolution::new(h, orders)?;
    let v = &config.verify;
    let grid = WGrid {
        lo: v.w_min,
        hi: v.w_max,
        step: v.step,
    };
    let report: VerificationReport = verify_bounds(&solution, v.k_max, grid)?;
    let mut outcome = Outcome::default();
    for r in report.records.iter().filter(|r| !r.pass) {
        outcome.failed_gates.push(format!(
            "k = {}: sup|f| = {:.6e} (bound {:.6e}), sup|w f| = {:.6e} (bound {:.6e})",
            r.k, r.sup_f, r.bound, r.sup_wf, r.wf_bound
        ));
    }
    write_json(&settings.out, "verification.json", &report, &mut outcome)?;
    Ok(outcome)
}

#[derive(Debug, Serialize)]
struct RateSummary {
    fit: RateFit,
    expected_slope: Option<f64>,
    slope_tolerance: f64,
    slope_pass: Option<bool>,
    dominance_pass: bool,
}

fn rate(config: &Config, settings: &Settings) -> Result<Outcome, CliError> {
    let p = config.p()?;
    let ns = config.n_values()?;
    let dist = config.distribution()?;
    let h = config.test_function()?;
    let table = moments(&dist, p as u32)?;
    let series = match config.rate.method {
        RateMethod::Exact => exact_distance_series(&dist, &h, &ns)?,
        RateMethod::Mc => {
            let mut points = Vec::with_capacity(ns.len());
            for &n in &ns {
                let est = mc_distance(
                    &dist,
                    &h,
                    n,
                    config.rate.reps,
                    settings.seed,
                    settings.threads,
                )?;
                points.push(DistancePoint {
                    n,
                    distance: est.estimate,
                    method: Method::MonteCarlo {
                        ci_half_width: est.ci_half_width,
                    },
                });
            }
            DistanceSeries::new(points)?
        }
    };
    let fit = rate_fit(&series)?;

    let mut outcome = Outcome::default();
    let mut csv = create(&settings.out, "bound_series.csv", &mut outcome)?;
    writeln!(csv, "n,bound,distance,dominated")?;
    let mut dominance_pass = true;
    for point in series.points() {
        let bound = sum_bound(
            Summands::Iid {
                table: &table,
                n: point.n,
            },
            &h,
            p,
        )?
        .total;
        let dominated = bound >= point.distance - point.method.ci();
        if !dominated {
            dominance_pass = false;
            outcome.failed_gates.push(format!(
                "n = {}: bound {bound:e} below distance {:e}",
                point.n, point.distance
            ));
        }
        writeln!(
            csv,
            "{},{:?},{:?},{}",
            point.n, bound, point.distance, dominated
        )?;
    }
    csv.flush()?;

    let expected_slope = config.rate.expected_slope.or_else(|| {
        table
            .first_mismatch(MATCHING_TOLERANCE)
            .is_none()
            .then(|| -((p as f64 - 1.0) / 2.0))
    });
    let slope_pass = expected_slope.map(|s| (fit.slope - s).abs() <= config.rate.slope_tolerance);
    if slope_pass == Some(false) {
        outcome.failed_gates.push(format!(
            "fitted slope {:.4} outside {:?} ± {}",
            fit.slope, expected_slope, config.rate.slope_tolerance
        ));
    }

    let mut csv = create(&settings.out, "distances.csv", &mut outcome)?;
    series.write_csv(&mut csv)?;
    csv.flush()?;
    let summary = RateSummary {
        fit,
        expected_slope,
        slope_tolerance: config.rate.slope_tolerance,
        slope_pass,
        dominance_pass,
    };
    write_json(&settings.out, "rate_fit.json", &summary, &mut outcome)?;
    Ok(outcome)
}

#[derive(Debug, Serialize)]
struct MvnEntry {
    n: u64,
    bound: BoundReport,
    exact_distance: Option<f64>,
    dominated: Option<bool>,
}

#[derive(Debug, Serialize)]
struct MvnReport {
    d: usize,
    p: usize,
    entries: Vec<MvnEntry>,
    #[serde(skip_serializing_if = "Option::is_none")]
    covariance: Option<CovarianceModel>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    constants: Vec<MvnConstants>,
}

fn mvn_bound(config: &Config, settings: &Settings) -> Result<Outcome, CliError> {
    let p = config.p()?;
    let ns = config.n_values()?;
    let d = match config.d {
        Some(d) => d,
        None => return Err(CliError::Config("missing key `d`".into())),
    };
    let dist = config.distribution()?;
    let h = config.ridge_function(d)?;
    let table = moments(&dist, p as u32)?;
    let coords = vec![dist; d];
    let mut outcome = Outcome::default();
    let mut entries = Vec::with_capacity(ns.len());
    for n in ns {
        let summands = vec![Summands::Iid { table: &table, n }; d];
        let bound = multivariate_sum_bound(&summands, &h, p)?;
        let exact_distance = match exact_distance_ridge(&coords, &h, n) {
            Ok(v) => Some(v),
            Err(Error::SupportCap { .. } | Error::MissingData(_)) => None,
            Err(e) => return Err(e.into()),
        };
        let dominated = exact_distance.map(|e| bound.total >= e);
        if dominated == Some(false) {
            outcome.failed_gates.push(format!(
                "n = {n}: bound {:e} below exact distance",
                bound.total
            ));
        }
        entries.push(MvnEntry {
            n,
            bound,
            exact_distance,
            dominated,
        });
    }
    let (covariance, constants) = match &config.mvn.sigma {
        Some(sigma) => {
            let model = covariance_model(sigma)?;
            let mut constants = Vec::new();
            for i in 0..d {
                for k in 1..=p {
                    constants.push(mvn_constant_catalog(&model, &h, &vec![i; k])?);
                }
            }
            (Some(model), constants)
        }
        None => (None, Vec::new()),
    };
    let report = MvnReport {
        d,
        p,
        entries,
        covariance,
        constants,
    };
    write_json(
        &settings.out,
        "mvn_bound_report.json",
        &report,
        &mut outcome,
    )?;
    Ok(outcome)
}

#[derive(Debug, Serialize)]
struct SeriesEntry {
    n: u64,
    #[serde(flatten)]
    bound: SeriesBound,
}

#[derive(Debug, Serialize)]
struct SeriesReport {
    constants: SeriesConstants,
    epsilon: &'static str,
    results: Vec<SeriesEntry>,
}

fn norms(h: &TestFunction) -> impl Fn(usize) -> Option<f64> + '_ {
    move |j| h.sup_norm(j).map(|s| s.value)
}

fn thm34(config: &Config, settings: &Settings) -> Result<Outcome, CliError> {
    let spec = config
        .thm34
        .as_ref()
        .ok_or_else(|| CliError::Config("missing key `thm34`".into()))?;
    let constants = SeriesConstants {
        c: spec.c,
        alpha: spec.alpha,
        delta: spec.delta,
    };
    let ns = config.n_values()?;
    let h = config.test_function()?;
    let norm = norms(&h);
    let mut outcome = Outcome::default();
    let mut results = Vec::with_capacity(ns.len());
    for n in ns {
        let nf = n as f64;
        let bound = match spec.epsilon {
            EpsilonSource::Synthetic => {
                let eps = |k: usize| {
                    let scale = norm(k).unwrap_or(0.0).max(norm(k + 2).unwrap_or(0.0));
                    if scale == 0.0 {
                        0.0
                    } else {
                        factorial(k as u32 - 1) / ((k * k) as f64 * nf * scale)
                    }
                };
                series_bound(eps, &norm, constants, nf, spec.truncation)?
            }
            EpsilonSource::Distribution => {
                let law = convolve_iid(&config.distribution()?, n)?;
                let table = moments(&law, spec.truncation as u32 + 1)?;
                series_bound(
                    |k| table.eps(k as u32),
                    &norm,
                    constants,
                    nf,
                    spec.truncation,
                )?
            }
        };
        if !bound.condition.holds {
            outcome.failed_gates.push(format!(
                "n = {n}: decay condition fails at k = {:?} (ratio {:.4})",
                bound.condition.worst_k, bound.condition.worst_ratio
            ));
        }
        results.push(SeriesEntry { n, bound });
    }
    let epsilon = match spec.epsilon {
        EpsilonSource::Synthetic => "synthetic",
        EpsilonSource::Distribution => "distribution",
    };
    write_json(
        &settings.out,
        "thm34.json",
        &SeriesReport {
            constants,
            epsilon,
            results,
        },
        &mut outcome,
    )?;
    Ok(outcome)
}
