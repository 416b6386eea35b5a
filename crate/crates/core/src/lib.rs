//! Explicit normal-approximation bounds from Stein's method, numerical
//! solutions of the Stein equation, and exact laws of normalized sums.

pub mod bounds;
pub mod clt;
pub mod covariance;
pub mod distributions;
pub mod error;
pub mod quadrature;
pub mod specfun;
pub mod stein;
pub mod testfuncs;

pub use bounds::{
    m_jk, matched_moment_bound, multivariate_sum_bound, mvn_constant_catalog, n_k, series_bound,
    sum_bound, BoundReport, MvnConstants, NkBranch, SeriesBound, SeriesConstants, Summands,
};
pub use clt::{
    exact_distance, mc_distance, rate_fit, DistancePoint, DistanceSeries, Method, RateFit,
};
pub use covariance::{covariance_model, CovarianceModel};
pub use distributions::{
    convolve_iid, hermite_distribution, moments, DiscreteDistribution, EpsilonTable,
};
pub use error::{Error, Result};
pub use stein::{
    derivative_bounds, stein_derivative, verify_bounds, QuadratureOrders, Representation,
    SteinSolution, WGrid,
};
pub use testfuncs::{RidgeFunction, SupNorm, TestFunction};
