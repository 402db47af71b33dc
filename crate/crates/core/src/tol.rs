//! Central record of the numerical tolerances the engine and its tests promise.

/// Tolerance constants used across the crate and its test suites.
///
/// Everything is 64-bit floating point; these are the slack budgets for
/// comparing streaming results against batch recomputations.
#[derive(Debug, Clone, Copy)]
pub struct Tolerances {
    /// Relative tolerance for online vs. batch shifted logSumExp.
    pub lse_rel: f64,
    /// Absolute tolerance for logSumExp shift equivariance.
    pub lse_shift_abs: f64,
    /// Relative tolerance for streaming vs. two-pass sample variance.
    pub welford_rel: f64,
    /// Relative tolerance for Welford M2 under input permutation.
    pub welford_perm_rel: f64,
    /// Relative, element-wise tolerance for the online engine vs. the offline oracle.
    pub engine_oracle_rel: f64,
    /// Relative tolerance for stream dump/replay round trips.
    pub replay_rel: f64,
}

pub const TOL: Tolerances = Tolerances {
    lse_rel: 1e-12,
    lse_shift_abs: 1e-12,
    welford_rel: 1e-10,
    welford_perm_rel: 1e-8,
    engine_oracle_rel: 1e-10,
    replay_rel: 1e-12,
};

/// Relative error |a-b| / max(|a|, |b|), or the absolute error when both are tiny.
pub fn rel_err(a: f64, b: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let scale = a.abs().max(b.abs());
    if scale < 1e-300 {
        (a - b).abs()
    } else {
        (a - b).abs() / scale
    }
}

/// True when `a` and `b` agree within relative tolerance `tol`.
pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    if a.is_infinite() || b.is_infinite() {
        return a == b;
    }
    rel_err(a, b) <= tol
}
