//! Order-streaming scalar reducers: Welford's online variance and the online
//! logSumExp trick. Both see one value at a time and keep O(1) state, which is
//! what lets the WAIC engine run without storing MCMC samples.

use crate::error::{Error, Result};

/// Streaming sample-variance accumulator.
///
/// Maintains `count`, the running mean, and `m2` (the sum of squared
/// deviations from the running mean) via the two-delta recurrence. The
/// sample variance is `m2 / (count - 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct WelfordState {
    count: u64,
    mean: f64,
    m2: f64,
}

impl Default for WelfordState {
    fn default() -> Self {
        Self::new()
    }
}

impl WelfordState {
    pub fn new() -> Self {
        WelfordState { count: 0, mean: 0.0, m2: 0.0 }
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn m2(&self) -> f64 {
        self.m2
    }

    /// Feed one observation. Rejects non-finite input so that a poisoned mean
    /// is impossible.
    pub fn update(&mut self, x: f64) -> Result<()> {
        if !x.is_finite() {
            return Err(Error::NonFinite { context: "Welford update", value: x });
        }
        self.count += 1;
        let delta1 = x - self.mean;
        self.mean += delta1 / self.count as f64;
        let delta2 = x - self.mean;
        self.m2 += delta1 * delta2;
        // delta1 and delta2 share a sign, so m2 never decreases.
        debug_assert!(self.m2 >= 0.0);
        Ok(())
    }

    /// Sample variance `m2 / (count - 1)`. Errors loudly below two
    /// observations instead of returning NaN.
    pub fn finalize(&self) -> Result<f64> {
        if self.count < 2 {
            return Err(Error::InsufficientSamples { have: self.count, need: 2 });
        }
        Ok(self.m2 / (self.count - 1) as f64)
    }

    pub(crate) fn from_parts(count: u64, mean: f64, m2: f64) -> Self {
        WelfordState { count, mean, m2 }
    }

    pub(crate) fn parts(&self) -> (u64, f64, f64) {
        (self.count, self.mean, self.m2)
    }
}

/// Streaming logSumExp accumulator for one log-mean-exp reduction.
///
/// Stores the running maximum of all values seen and an inner sum of
/// exponentials rescaled to that maximum. When a larger value arrives, the
/// inner sum is deflated by `exp(-(new - max))` before the new term joins as
/// `exp(0) = 1`, so no exponent ever exceeds zero and nothing overflows.
#[derive(Debug, Clone, PartialEq)]
pub struct LogSumExpState {
    count: u64,
    max: f64,
    sum: f64,
}

impl Default for LogSumExpState {
    fn default() -> Self {
        Self::new()
    }
}

impl LogSumExpState {
    pub fn new() -> Self {
        LogSumExpState { count: 0, max: f64::NEG_INFINITY, sum: 0.0 }
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    /// Running maximum of the values seen so far (meaningless before the
    /// first update).
    pub fn current_max(&self) -> f64 {
        self.max
    }

    pub fn current_sum(&self) -> f64 {
        self.sum
    }

    pub fn is_initialized(&self) -> bool {
        self.count > 0
    }

    /// Feed one log-scale value.
    ///
    /// `-inf` is a legal input (the log density of an impossible point): it
    /// contributes `exp(-inf) = 0` to the sum, and a state that has seen
    /// nothing but `-inf` finalizes to `-inf`.
    pub fn update(&mut self, h: f64) -> Result<()> {
        if h.is_nan() || h == f64::INFINITY {
            return Err(Error::NonFinite { context: "logSumExp update", value: h });
        }
        self.count += 1;
        if self.count == 1 {
            self.max = h;
            self.sum = 1.0;
            return Ok(());
        }
        if self.max == f64::NEG_INFINITY {
            if h == f64::NEG_INFINITY {
                // Still degenerate; keep counting terms.
                self.sum += 1.0;
            } else {
                // Every earlier term was exp(-inf) = 0.
                self.max = h;
                self.sum = 1.0;
            }
        } else if h > self.max {
            let new_v = h - self.max;
            self.sum = self.sum * (-new_v).exp() + 1.0;
            self.max = h;
        } else {
            // Ties land here: exp(0) = 1, identical result with no rescale.
            self.sum += (h - self.max).exp();
        }
        debug_assert!(self.count == 0 || self.sum >= 1.0);
        Ok(())
    }

    /// `log((1/S) * sum_s exp(h_s))`, cross-checking that the caller's `S`
    /// matches the number of values actually seen.
    pub fn finalize(&self, sample_count: u64) -> Result<f64> {
        if sample_count == 0 || self.count == 0 {
            return Err(Error::InsufficientSamples { have: self.count, need: 1 });
        }
        if sample_count != self.count {
            return Err(Error::SampleCountMismatch { expected: sample_count, seen: self.count });
        }
        Ok(self.log_mean_exp())
    }

    /// Log-mean-exp over everything seen so far, without the count
    /// cross-check. Used for the quarter-K snapshots where the divisor is the
    /// running count itself. The two logs cancel before the shift is added
    /// back, so a run of identical inputs returns that value bit-for-bit.
    pub fn log_mean_exp(&self) -> f64 {
        debug_assert!(self.count > 0);
        self.max + (self.sum.ln() - (self.count as f64).ln())
    }

    pub(crate) fn from_parts(count: u64, max: f64, sum: f64) -> Self {
        LogSumExpState { count, max, sum }
    }

    pub(crate) fn parts(&self) -> (u64, f64, f64) {
        (self.count, self.max, self.sum)
    }
}

/// Batch shifted logSumExp over a slice, divided by its length:
/// `max + log(sum(exp(h - max))) - log(len)`.
///
/// This is the non-streaming reference the online state is tested against.
pub fn batch_log_mean_exp(values: &[f64]) -> f64 {
    assert!(!values.is_empty());
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let sum: f64 = values.iter().map(|&h| (h - max).exp()).sum();
    max + sum.ln() - (values.len() as f64).ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tol::{rel_close, TOL};
    use proptest::prelude::*;

    /// Two-pass sample variance, the independent oracle for Welford.
    fn two_pass_variance(xs: &[f64]) -> f64 {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)
    }

    fn welford_of(xs: &[f64]) -> WelfordState {
        let mut w = WelfordState::new();
        for &x in xs {
            w.update(x).unwrap();
        }
        w
    }

    fn lse_of(hs: &[f64]) -> LogSumExpState {
        let mut s = LogSumExpState::new();
        for &h in hs {
            s.update(h).unwrap();
        }
        s
    }

    #[test]
    fn welford_constant_sequence() {
        let w = welford_of(&[5.0, 5.0, 5.0]);
        assert_eq!(w.mean(), 5.0);
        assert_eq!(w.m2(), 0.0);
        assert_eq!(w.finalize().unwrap(), 0.0);
    }

    #[test]
    fn welford_one_to_four() {
        let w = welford_of(&[1.0, 2.0, 3.0, 4.0]);
        assert!(rel_close(w.m2(), 5.0, 1e-15));
        assert!(rel_close(w.finalize().unwrap(), 5.0 / 3.0, 1e-15));
        // Matches the oracle too.
        assert!(rel_close(w.finalize().unwrap(), two_pass_variance(&[1.0, 2.0, 3.0, 4.0]), 1e-15));
    }

    #[test]
    fn welford_single_element() {
        let w = welford_of(&[2.0]);
        assert_eq!(w.count(), 1);
        assert_eq!(w.mean(), 2.0);
        assert_eq!(w.m2(), 0.0);
        assert!(matches!(w.finalize(), Err(Error::InsufficientSamples { have: 1, need: 2 })));
    }

    #[test]
    fn welford_rejects_non_finite() {
        let mut w = WelfordState::new();
        assert!(matches!(w.update(f64::NAN), Err(Error::NonFinite { .. })));
        assert!(matches!(w.update(f64::INFINITY), Err(Error::NonFinite { .. })));
        assert!(matches!(w.update(f64::NEG_INFINITY), Err(Error::NonFinite { .. })));
        assert_eq!(w.count(), 0);
    }

    #[test]
    fn welford_empty_finalize_errors() {
        assert!(WelfordState::new().finalize().is_err());
    }

    #[test]
    fn lse_equal_values() {
        let c = -3.7;
        let s = lse_of(&[c, c]);
        assert!(rel_close(s.finalize(2).unwrap(), c, 1e-15));
    }

    #[test]
    fn lse_log1_log3() {
        let s = lse_of(&[1.0f64.ln(), 3.0f64.ln()]);
        assert!(rel_close(s.finalize(2).unwrap(), 2.0f64.ln(), TOL.lse_rel));
    }

    #[test]
    fn lse_deep_negative_pair() {
        // Naive exp-sum underflows to zero here; the shifted form stays finite.
        let s = lse_of(&[-1000.0, -1002.0]);
        let expected = -1000.0 + ((1.0 + (-2.0f64).exp()) / 2.0).ln();
        let got = s.finalize(2).unwrap();
        assert!(got.is_finite());
        assert!(rel_close(got, expected, TOL.lse_rel));
        let naive = (((-1000.0f64).exp() + (-1002.0f64).exp()) / 2.0).ln();
        assert_eq!(naive, f64::NEG_INFINITY);
    }

    #[test]
    fn lse_single_value() {
        let s = lse_of(&[0.25]);
        assert_eq!(s.finalize(1).unwrap(), 0.25);
    }

    #[test]
    fn lse_log_one_to_four() {
        let hs: Vec<f64> = [1.0f64, 2.0, 3.0, 4.0].iter().map(|x| x.ln()).collect();
        let s = lse_of(&hs);
        assert!(rel_close(s.finalize(4).unwrap(), 2.5f64.ln(), TOL.lse_rel));
    }

    #[test]
    fn lse_order_does_not_matter() {
        let mut inc: Vec<f64> = (0..50).map(|i| -900.0 + 13.0 * i as f64).collect();
        let s_inc = lse_of(&inc);
        inc.reverse();
        let s_dec = lse_of(&inc);
        let batch = batch_log_mean_exp(&inc);
        assert!(rel_close(s_inc.finalize(50).unwrap(), batch, TOL.lse_rel));
        assert!(rel_close(s_dec.finalize(50).unwrap(), batch, TOL.lse_rel));
    }

    #[test]
    fn lse_count_mismatch() {
        let s = lse_of(&[0.0, 1.0, 2.0]);
        assert!(matches!(
            s.finalize(2),
            Err(Error::SampleCountMismatch { expected: 2, seen: 3 })
        ));
    }

    #[test]
    fn lse_zero_samples_errors() {
        let s = LogSumExpState::new();
        assert!(matches!(s.finalize(0), Err(Error::InsufficientSamples { .. })));
    }

    #[test]
    fn lse_rejects_nan_and_positive_infinity() {
        let mut s = LogSumExpState::new();
        assert!(s.update(f64::NAN).is_err());
        assert!(s.update(f64::INFINITY).is_err());
        assert_eq!(s.count(), 0);
    }

    #[test]
    fn lse_all_neg_inf_finalizes_to_neg_inf() {
        let s = lse_of(&[f64::NEG_INFINITY, f64::NEG_INFINITY]);
        assert_eq!(s.finalize(2).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn lse_neg_inf_mixed_with_finite() {
        // -inf first, then finite: the zero-mass terms vanish.
        let s = lse_of(&[f64::NEG_INFINITY, -2.0]);
        let expected = (0.5 * (-2.0f64).exp()).ln();
        assert!(rel_close(s.finalize(2).unwrap(), expected, TOL.lse_rel));
        // finite first, then -inf: absorbed as zero.
        let s = lse_of(&[-2.0, f64::NEG_INFINITY]);
        assert!(rel_close(s.finalize(2).unwrap(), expected, TOL.lse_rel));
    }

    #[test]
    fn lse_max_tracks_maximum_exactly() {
        let hs = [3.0, -1.0, 7.5, 7.5, 2.0];
        let s = lse_of(&hs);
        assert_eq!(s.current_max(), 7.5);
    }

    #[test]
    fn lse_extreme_gaps_stay_finite() {
        // Gaps up to ~1e3 and magnitudes near the representable floor.
        let s = lse_of(&[-1e308, -1e308 + 900.0, -1e308 + 1.0]);
        let got = s.log_mean_exp();
        assert!(got.is_finite() || got == f64::NEG_INFINITY);
        assert!(rel_close(got, batch_log_mean_exp(&[-1e308, -1e308 + 900.0, -1e308 + 1.0]), TOL.lse_rel));
        let s = lse_of(&[700.0, 709.0, -300.0]);
        assert!(s.log_mean_exp().is_finite());
    }

    proptest! {
        #[test]
        fn prop_lse_matches_batch(hs in proptest::collection::vec(-1e4f64..1e2, 1..200)) {
            let s = lse_of(&hs);
            let batch = batch_log_mean_exp(&hs);
            prop_assert!(rel_close(s.finalize(hs.len() as u64).unwrap(), batch, TOL.lse_rel));
        }

        #[test]
        fn prop_lse_shift_equivariance(
            hs in proptest::collection::vec(-1e3f64..1e2, 1..100),
            c in -500.0f64..500.0,
        ) {
            let base = lse_of(&hs).log_mean_exp();
            let shifted: Vec<f64> = hs.iter().map(|h| h + c).collect();
            let got = lse_of(&shifted).log_mean_exp();
            prop_assert!((got - (base + c)).abs() <= TOL.lse_shift_abs * (1.0 + base.abs() + c.abs()));
        }

        #[test]
        fn prop_welford_matches_two_pass(xs in proptest::collection::vec(-1e6f64..1e6, 2..400)) {
            let w = welford_of(&xs);
            let oracle = two_pass_variance(&xs);
            let got = w.finalize().unwrap();
            // Near-constant sequences legitimately cancel; compare on the data's scale.
            let scale = xs.iter().map(|x| x * x).sum::<f64>() / xs.len() as f64;
            prop_assert!((got - oracle).abs() <= TOL.welford_rel * (scale + oracle.abs()));
        }

        #[test]
        fn prop_welford_mean_matches_arithmetic_mean(
            xs in proptest::collection::vec(-1e6f64..1e6, 1..400)
        ) {
            let w = welford_of(&xs);
            // Kahan-summed mean as the oracle; tolerance on the data's scale,
            // since cancellation can make the mean itself arbitrarily small.
            let mut sum = 0.0f64;
            let mut comp = 0.0f64;
            for &x in &xs {
                let y = x - comp;
                let t = sum + y;
                comp = (t - sum) - y;
                sum = t;
            }
            let mean = sum / xs.len() as f64;
            let scale = xs.iter().map(|x| x.abs()).sum::<f64>() / xs.len() as f64;
            prop_assert!((w.mean() - mean).abs() <= 1e-12 * (scale + mean.abs()));
        }

        #[test]
        fn prop_welford_permutation_invariant(
            xs in proptest::collection::vec(-1e4f64..1e4, 3..100),
            seed in 0u64..1024,
        ) {
            let mut shuffled = xs.clone();
            // Cheap deterministic shuffle.
            let mut state = seed.wrapping_mul(0x9e3779b97f4a7c15).wrapping_add(1);
            for i in (1..shuffled.len()).rev() {
                state ^= state << 13;
                state ^= state >> 7;
                state ^= state << 17;
                shuffled.swap(i, (state % (i as u64 + 1)) as usize);
            }
            let a = welford_of(&xs);
            let b = welford_of(&shuffled);
            let scale = xs.iter().map(|x| x * x).sum::<f64>() / xs.len() as f64;
            prop_assert!((a.m2() - b.m2()).abs() <= TOL.welford_perm_rel * (scale * xs.len() as f64 + a.m2()));
        }
    }
}
