//! Sample-average UBSR estimation: the empirical function `g-hat`, the
//! search-and-bisect estimator, the tolerance schedules pairing `delta`
//! with the batch size, a closed-form SAA oracle for exponential loss, and
//! the 1-D empirical Wasserstein distance used in sensitivity tests.

use crate::error::{Error, Result};
use crate::loss::LossFunction;
use crate::models::SampleBatch;

/// How the bisection tolerance scales with the batch size.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeltaSchedule {
    /// `delta = d1 / sqrt(m)` (Lipschitz losses).
    InverseSqrt,
    /// `delta = d1 / m^(1/4)` (smooth losses).
    InverseQuarterPower,
}

/// Configuration of the search-and-bisect estimator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorConfig {
    /// Bisection tolerance; the returned estimate is within `delta` of the
    /// exact SAA root.
    pub delta: f64,
    /// Coefficient of the tolerance schedule.
    pub d1: f64,
    pub schedule: DeltaSchedule,
    /// Cap on bracket-expansion doublings before giving up.
    pub max_doublings: u32,
}

impl EstimatorConfig {
    pub fn new(delta: f64, d1: f64, schedule: DeltaSchedule) -> Result<Self> {
        if !(delta > 0.0) {
            return Err(Error::InvalidParameter {
                name: "delta",
                value: delta,
            });
        }
        if !(d1 > 0.0) {
            return Err(Error::InvalidParameter { name: "d1", value: d1 });
        }
        Ok(EstimatorConfig {
            delta,
            d1,
            schedule,
            max_doublings: 60,
        })
    }

    /// Config with `delta` tied to the batch size via the schedule.
    pub fn for_batch(d1: f64, schedule: DeltaSchedule, m: usize) -> Result<Self> {
        let delta = delta_schedule(m, d1, schedule)?;
        EstimatorConfig::new(delta, d1, schedule)
    }
}

/// Point estimate with its bracket and iteration counts.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateResult {
    pub t_hat: f64,
    pub delta: f64,
    /// `[low, high]` with `g-hat(low) >= 0 >= g-hat(high)` and
    /// `high - low <= 2 delta`.
    pub bracket: (f64, f64),
    pub iters_search: u32,
    pub iters_bisect: u32,
    pub m: usize,
}

/// Tolerance for a batch of size `m` under the given schedule.
pub fn delta_schedule(m: usize, d1: f64, schedule: DeltaSchedule) -> Result<f64> {
    if m == 0 {
        return Err(Error::InvalidParameter {
            name: "m",
            value: 0.0,
        });
    }
    if !(d1 > 0.0) {
        return Err(Error::InvalidParameter { name: "d1", value: d1 });
    }
    Ok(match schedule {
        DeltaSchedule::InverseSqrt => d1 / (m as f64).sqrt(),
        DeltaSchedule::InverseQuarterPower => d1 / (m as f64).powf(0.25),
    })
}

/// Empirical shortfall function `g-hat(t) = (1/m) sum l(-Z_i - t) - lambda`,
/// accumulated with compensated summation.
pub fn empirical_g(samples: &SampleBatch, t: f64, loss: &LossFunction, lambda: f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::InvalidParameter {
            name: "batch_len",
            value: 0.0,
        });
    }
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for &z in &samples.values {
        let v = loss.eval(-z - t)?;
        // Kahan compensation.
        let y = v - comp;
        let s = sum + y;
        comp = (s - sum) - y;
        sum = s;
    }
    Ok(sum / samples.len() as f64 - lambda)
}

/// Search-and-bisect UBSR estimator.
///
/// Starting from `low = min(0, sign(g-hat(0)))`, `high = max(0, sign(g-hat(0)))`,
/// the bracket is expanded by doubling until `g-hat` changes sign, then
/// bisected until `high - low <= 2 delta`; the midpoint is returned. `sign(0)`
/// is taken as 0, so a batch with `g-hat(0) = 0` returns 0 immediately.
pub fn ubsr_sb(
    samples: &SampleBatch,
    config: &EstimatorConfig,
    loss: &LossFunction,
    lambda: f64,
) -> Result<EstimateResult> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidParameter {
            name: "lambda",
            value: lambda,
        });
    }
    let g = |t: f64| empirical_g(samples, t, loss, lambda);

    let g0 = g(0.0)?;
    let sign0 = if g0 > 0.0 {
        1.0
    } else if g0 < 0.0 {
        -1.0
    } else {
        0.0
    };
    let mut low = 0.0f64.min(sign0);
    let mut high = 0.0f64.max(sign0);

    let mut iters_search = 0u32;
    while g(high)? > 0.0 {
        if iters_search >= config.max_doublings {
            return Err(Error::BracketNotFound(config.max_doublings));
        }
        high *= 2.0;
        iters_search += 1;
    }
    while g(low)? < 0.0 {
        if iters_search >= config.max_doublings {
            return Err(Error::BracketNotFound(config.max_doublings));
        }
        low *= 2.0;
        iters_search += 1;
    }

    let mut width = high - low;
    let mut t_hat = 0.5 * (low + high);
    let mut iters_bisect = 0u32;
    while width > 2.0 * config.delta {
        if g(t_hat)? > 0.0 {
            low = t_hat;
        } else {
            high = t_hat;
        }
        width = high - low;
        t_hat = 0.5 * (low + high);
        iters_bisect += 1;
    }

    Ok(EstimateResult {
        t_hat,
        delta: config.delta,
        bracket: (low, high),
        iters_search,
        iters_bisect,
        m: samples.len(),
    })
}

/// Closed-form SAA root under exponential loss:
/// `t = (1/beta) * (log((1/m) sum exp(-beta Z_i)) - log(lambda))`,
/// computed via a max-shifted log-sum-exp.
pub fn exp_loss_saa_oracle(samples: &SampleBatch, beta: f64, lambda: f64) -> Result<f64> {
    if !(beta > 0.0) {
        return Err(Error::InvalidParameter {
            name: "beta",
            value: beta,
        });
    }
    if !(lambda > 0.0) {
        return Err(Error::InvalidParameter {
            name: "lambda",
            value: lambda,
        });
    }
    if samples.is_empty() {
        return Err(Error::InvalidParameter {
            name: "batch_len",
            value: 0.0,
        });
    }
    let m = samples.len() as f64;
    let max_arg = samples
        .values
        .iter()
        .map(|&z| -beta * z)
        .fold(f64::NEG_INFINITY, f64::max);
    if max_arg > crate::loss::EXP_GUARD {
        return Err(Error::OverflowGuard(max_arg));
    }
    let sum: f64 = samples.values.iter().map(|&z| (-beta * z - max_arg).exp()).sum();
    Ok((max_arg + (sum / m).ln() - lambda.ln()) / beta)
}

/// Exact 1-D Wasserstein distance between equal-size empirical measures:
/// sort both batches and take the `p`-mean of coordinatewise gaps.
pub fn wasserstein_1d(x: &SampleBatch, y: &SampleBatch, p: u32) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::SizeMismatch(x.len(), y.len()));
    }
    assert!(p == 1 || p == 2, "only W1 and W2 are supported");
    let mut xs = x.values.clone();
    let mut ys = y.values.clone();
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ys.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let m = xs.len() as f64;
    let cost: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(a, b)| (a - b).abs().powi(p as i32))
        .sum::<f64>()
        / m;
    Ok(if p == 1 { cost } else { cost.sqrt() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{gaussian_ubsr_oracle, GaussianSource};
    use proptest::prelude::*;

    fn exp_loss(beta: f64) -> LossFunction {
        LossFunction::exponential(beta).unwrap()
    }

    fn batch(values: Vec<f64>) -> SampleBatch {
        SampleBatch::from_values(values).unwrap()
    }

    fn default_cfg(delta: f64) -> EstimatorConfig {
        EstimatorConfig::new(delta, 1.0, DeltaSchedule::InverseSqrt).unwrap()
    }

    #[test]
    fn empirical_g_values() {
        let b = batch(vec![0.0, 0.0, 0.0]);
        let g = empirical_g(&b, 0.0, &exp_loss(1.0), 1.0).unwrap();
        assert_eq!(g, 0.0);

        let b = batch(vec![1.0, -1.0]);
        let g = empirical_g(&b, 0.0, &exp_loss(1.0), 1.0).unwrap();
        assert!((g - (1.0f64.cosh() - 1.0)).abs() < 1e-12);
        assert!((g - 0.543081).abs() < 1e-6);
    }

    #[test]
    fn empirical_g_strictly_decreasing() {
        let src = GaussianSource::new(0.0, 1.0).unwrap();
        let b = src.sample(100, 5, 0).unwrap();
        let l = exp_loss(0.5);
        let mut prev = empirical_g(&b, -5.0, &l, 0.05).unwrap();
        let mut t = -4.0;
        while t <= 5.0 {
            let cur = empirical_g(&b, t, &l, 0.05).unwrap();
            assert!(cur < prev);
            prev = cur;
            t += 1.0;
        }
    }

    #[test]
    fn sb_root_at_origin_short_circuits() {
        let b = batch(vec![0.0; 5]);
        let r = ubsr_sb(&b, &default_cfg(1e-8), &exp_loss(1.0), 1.0).unwrap();
        assert_eq!(r.t_hat, 0.0);
        assert_eq!(r.iters_search, 0);
        assert_eq!(r.iters_bisect, 0);
    }

    #[test]
    fn sb_constant_batch_closed_form() {
        let z = 1.7;
        let beta = 0.5;
        let lambda = 0.05;
        let b = batch(vec![z; 10]);
        let cfg = default_cfg(1e-9);
        let r = ubsr_sb(&b, &cfg, &exp_loss(beta), lambda).unwrap();
        let expected = -z - lambda.ln() / beta;
        assert!((r.t_hat - expected).abs() <= cfg.delta + 1e-12);
    }

    #[test]
    fn sb_matches_saa_oracle_on_random_batches() {
        let src = GaussianSource::new(0.0, 1.0).unwrap();
        let l = exp_loss(0.5);
        for seed in 0..1000u64 {
            let m = 1 + (seed as usize % 200);
            let b = src.sample(m, seed, 0).unwrap();
            let cfg = default_cfg(1e-6);
            let r = ubsr_sb(&b, &cfg, &l, 0.05).unwrap();
            let oracle = exp_loss_saa_oracle(&b, 0.5, 0.05).unwrap();
            assert!(
                (r.t_hat - oracle).abs() <= cfg.delta,
                "seed {seed}: {} vs {}",
                r.t_hat,
                oracle
            );
        }
    }

    #[test]
    fn sb_bracket_invariant_and_iteration_bound() {
        let src = GaussianSource::new(1.0, 2.0).unwrap();
        let l = exp_loss(0.5);
        for seed in 0..200u64 {
            let b = src.sample(50, seed, 0).unwrap();
            let cfg = default_cfg(1e-7);
            let r = ubsr_sb(&b, &cfg, &l, 0.05).unwrap();
            let (lo, hi) = r.bracket;
            assert!(empirical_g(&b, lo, &l, 0.05).unwrap() >= 0.0);
            assert!(empirical_g(&b, hi, &l, 0.05).unwrap() <= 0.0);
            assert!(hi - lo <= 2.0 * cfg.delta);
            assert!(lo <= r.t_hat && r.t_hat <= hi);
            // Iteration-complexity bound in terms of the discovered bracket.
            let scale = lo.abs().max(hi.abs()).max(1.0);
            let bound = 2.0 * (1.0 + (scale / cfg.delta.sqrt()).log2()) + 4.0;
            assert!(((r.iters_search + r.iters_bisect) as f64) <= bound);
        }
    }

    #[test]
    fn sb_bracket_not_found_when_doubling_cap_hits() {
        // The root sits near 1e6; reaching it needs ~20 doublings.
        let b = batch(vec![-1e6; 4]);
        let mut cfg = default_cfg(1e-6);
        cfg.max_doublings = 4;
        let l = LossFunction::piecewise(2.0, 0.5).unwrap();
        let r = ubsr_sb(&b, &cfg, &l, 1.0);
        assert!(matches!(r, Err(Error::BracketNotFound(4))));
    }

    #[test]
    fn saa_oracle_values() {
        assert_eq!(exp_loss_saa_oracle(&batch(vec![0.0]), 1.0, 1.0).unwrap(), 0.0);
        let z = -2.3;
        let t = exp_loss_saa_oracle(&batch(vec![z; 7]), 0.5, 0.05).unwrap();
        assert!((t - (-z - 0.05f64.ln() / 0.5)).abs() < 1e-12);
        let t = exp_loss_saa_oracle(&batch(vec![1.0, -1.0]), 1.0, 1.0).unwrap();
        assert!((t - 1.0f64.cosh().ln()).abs() < 1e-12);
        assert!((t - 0.433781).abs() < 1e-6);
    }

    #[test]
    fn delta_schedule_values() {
        assert_eq!(delta_schedule(1, 0.3, DeltaSchedule::InverseSqrt).unwrap(), 0.3);
        assert!((delta_schedule(100, 0.3, DeltaSchedule::InverseSqrt).unwrap() - 0.03).abs() < 1e-15);
        assert!(
            (delta_schedule(16, 1.0, DeltaSchedule::InverseQuarterPower).unwrap() - 0.5).abs()
                < 1e-15
        );
    }

    #[test]
    fn wasserstein_values() {
        let x = batch(vec![0.0, 1.0]);
        let y = batch(vec![2.0, 5.0]);
        assert_eq!(wasserstein_1d(&x, &y, 1).unwrap(), 3.0);
        assert_eq!(wasserstein_1d(&x, &x, 1).unwrap(), 0.0);
        let a = batch(vec![0.0, 0.0]);
        let c = batch(vec![-4.2, -4.2]);
        assert!((wasserstein_1d(&a, &c, 1).unwrap() - 4.2).abs() < 1e-12);
        assert!((wasserstein_1d(&a, &c, 2).unwrap() - 4.2).abs() < 1e-12);
        assert!(wasserstein_1d(&x, &batch(vec![1.0]), 1).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(256))]

        // Cash invariance at the SAA level: shifting every sample by c
        // shifts the estimate by -c (up to bisection tolerance).
        #[test]
        fn cash_invariance(seed in 0u64..10_000, c in -5.0f64..5.0) {
            let src = GaussianSource::new(0.0, 1.0).unwrap();
            let b = src.sample(40, seed, 0).unwrap();
            let shifted = batch(b.values.iter().map(|z| z + c).collect());
            let cfg = default_cfg(1e-7);
            let l = exp_loss(0.5);
            let t = ubsr_sb(&b, &cfg, &l, 0.05).unwrap().t_hat;
            let ts = ubsr_sb(&shifted, &cfg, &l, 0.05).unwrap().t_hat;
            prop_assert!((ts - (t - c)).abs() <= 2.0 * cfg.delta);
        }

        // Monotonicity: componentwise-dominating samples give a smaller
        // risk estimate.
        #[test]
        fn monotonicity(seed in 0u64..10_000, bump in 0.0f64..3.0) {
            let src = GaussianSource::new(0.0, 1.0).unwrap();
            let b = src.sample(40, seed, 0).unwrap();
            let dominating = batch(b.values.iter().map(|z| z + bump).collect());
            let cfg = default_cfg(1e-7);
            let l = exp_loss(0.5);
            let t = ubsr_sb(&b, &cfg, &l, 0.05).unwrap().t_hat;
            let td = ubsr_sb(&dominating, &cfg, &l, 0.05).unwrap().t_hat;
            prop_assert!(td <= t + 2.0 * cfg.delta);
        }

        // Sensitivity of the estimate in 1-Wasserstein distance for a
        // Lipschitz loss: |t(x) - t(y)| <= (L1/b) W1 + 2 delta.
        #[test]
        fn wasserstein_sensitivity(seed in 0u64..10_000) {
            let src = GaussianSource::new(0.0, 1.0).unwrap();
            let x = src.sample(30, seed, 0).unwrap();
            let y = src.sample(30, seed, 1).unwrap();
            let l = LossFunction::piecewise(2.0, 0.5).unwrap();
            let cfg = default_cfg(1e-7);
            let tx = ubsr_sb(&x, &cfg, &l, 0.6).unwrap().t_hat;
            let ty = ubsr_sb(&y, &cfg, &l, 0.6).unwrap().t_hat;
            let w1 = wasserstein_1d(&x, &y, 1).unwrap();
            prop_assert!((tx - ty).abs() <= 2.0 / 0.5 * w1 + 2.0 * cfg.delta);
        }
    }
}
