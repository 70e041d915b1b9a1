//! Correlation decay, Green–Kubo variance, Birkhoff-sum CLT diagnostics and
//! fast-tail norms of the singular observable `x^{-τ}`.

mod clt;
mod correlation;
mod observable;
mod quadrature;
mod sampling;
mod tail;

pub use clt::{
    birkhoff_clt_report, birkhoff_clt_report_with, green_kubo_sigma, CltOptions, CltReport,
    GreenKubo, COBOUNDARY_TOL, MIN_CLT_SAMPLES,
};
pub use correlation::{
    correlation_series, CorrelationMethod, CorrelationRoute, CorrelationSeries,
    CORRELATION_CELL_CAP, QUADRATURE_POINTS,
};
pub use observable::{
    expectation, integrate_against, power_moment, Observable, ObservablePiece, EPS_SING,
};
pub use quadrature::{gauss_jacobi, JacobiRule, RuleCache};
pub use sampling::{
    invariant_density, DensitySampler, DensitySource, InvariantDensity, Orbit, OrbitSampler,
};
pub use tail::{tail_norm_series, TailNormSeries};
