use crate::scalar::Scalar;
use crate::tracking::{estimate_ideal_error, GlobalStats, PartitionMeta};

use super::AdaIvfParams;

/// Value of the local indicator for one partition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalIndicator {
    pub value: f64,
    pub size_term: f64,
    pub drift_term: f64,
    /// `mu0` was the zero vector, so drift is the absolute shift.
    pub degenerate_origin: bool,
}

/// Size deviation from the target: `(s - t) / t` above it, `(t - s) / s`
/// below it. An empty partition scores infinity.
pub fn size_deviation(size: usize, target: usize) -> f64 {
    let (s, t) = (size as f64, target as f64);
    if size >= target {
        (s - t) / t
    } else if size == 0 {
        f64::INFINITY
    } else {
        (t - s) / s
    }
}

/// Relative shift of the running mean from `mu0`; absolute when `mu0 = 0`.
pub fn drift<T: Scalar>(mu: &[T], mu0: &[T]) -> (f64, bool) {
    let mut shift = 0.0f64;
    let mut base = 0.0f64;
    for (a, b) in mu.iter().zip(mu0) {
        let d = a.as_f64() - b.as_f64();
        shift += d * d;
        base += b.as_f64() * b.as_f64();
    }
    if base == 0.0 {
        (shift.sqrt(), true)
    } else {
        (shift.sqrt() / base.sqrt(), false)
    }
}

/// `f = alpha * T * (beta * f_s + (1 - beta) * f_d)`.
pub fn local_indicator<T: Scalar>(meta: &PartitionMeta<T>, params: &AdaIvfParams) -> LocalIndicator {
    let size_term = size_deviation(meta.size, params.tau_s);
    let (drift_term, degenerate_origin) = drift(&meta.mu, &meta.mu0);
    let mut mix = params.beta * size_term;
    if params.beta < 1.0 {
        mix += (1.0 - params.beta) * drift_term;
    }
    LocalIndicator {
        value: params.alpha * meta.temperature * mix,
        size_term,
        drift_term,
        degenerate_origin,
    }
}

/// Value of the global indicator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GlobalIndicator {
    pub value: f64,
    pub imbalance_term: f64,
    pub error_term: f64,
    /// Estimated ideal error of a rebuild at the current size.
    pub ideal_error: f64,
    /// `sigma0 = 0`: imbalance is the absolute change.
    pub degenerate_baseline: bool,
    /// Ideal error was zero: error term is the absolute excess.
    pub degenerate_error: bool,
}

/// `G = gamma * |sigma - sigma0| / sigma0 + (1 - gamma) * |eps - eps'| / eps'`.
pub fn global_indicator(stats: &GlobalStats, params: &AdaIvfParams) -> GlobalIndicator {
    let ideal = estimate_ideal_error(stats);
    let ds = (stats.sigma - stats.sigma0).abs();
    let (imbalance_term, degenerate_baseline) = if stats.sigma0 > 0.0 {
        (ds / stats.sigma0, false)
    } else {
        (ds, true)
    };
    let de = (stats.eps - ideal).abs();
    let (error_term, degenerate_error) = if ideal > 0.0 {
        (de / ideal, false)
    } else {
        (de, true)
    };
    GlobalIndicator {
        value: params.gamma * imbalance_term + (1.0 - params.gamma) * error_term,
        imbalance_term,
        error_term,
        ideal_error: ideal,
        degenerate_baseline,
        degenerate_error,
    }
}
