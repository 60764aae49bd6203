//! Ratio estimator for the UBSR gradient.
//!
//! For portfolio return `F(theta, xi) = xi' theta` the gradient of
//! `h(theta) = SR(F(theta, xi))` is the negated ratio of two expectations
//! of `l'(-F - h(theta))`, one weighted by `grad F`. The estimator below
//! replaces both expectations by batch means evaluated at a UBSR estimate
//! `t_hat` computed from an independent batch.

use crate::error::{Error, Result};
use crate::estimator::{delta_schedule, ubsr_sb, EstimateResult, EstimatorConfig};
use crate::loss::LossFunction;
use crate::models::{portfolio_value, PortfolioModel, SampleBatch, ScenarioBatch};

/// Gradient estimate with its diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientEstimate {
    /// The d-vector estimating `grad h(theta)`.
    pub j: Vec<f64>,
    /// The UBSR estimate used in numerator and denominator.
    pub t_hat: f64,
    pub m: usize,
    /// Batch mean of `l'`; must be strictly positive.
    pub denom: f64,
}

/// Inputs to the theoretical gradient-error bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundInputs {
    pub c1: f64,
    pub c2: f64,
    pub d1: f64,
    pub l1: f64,
    pub l2: f64,
    pub m_bound: f64,
    pub d: usize,
    pub sigma1: f64,
    pub sigma2: f64,
    pub b: f64,
}

/// Ratio gradient estimate at `theta`, using `t_hat` from an independent
/// batch. Returns the negated ratio so the result estimates `grad h(theta)`
/// directly.
pub fn estimate_gradient(
    theta: &[f64],
    z: &ScenarioBatch,
    t_hat: f64,
    model: &PortfolioModel,
    loss: &LossFunction,
) -> Result<GradientEstimate> {
    if theta.len() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            got: theta.len(),
        });
    }
    if z.is_empty() {
        return Err(Error::InvalidParameter {
            name: "batch_len",
            value: 0.0,
        });
    }
    let d = theta.len();
    let mut num = vec![0.0f64; d];
    let mut den = 0.0f64;
    for xi in &z.values {
        let f = portfolio_value(theta, xi)?;
        let w = loss.eval_derivative(-f - t_hat)?;
        den += w;
        for (ni, x) in num.iter_mut().zip(xi) {
            *ni += w * x;
        }
    }
    if den <= 0.0 {
        return Err(Error::DegenerateDenominator(den / z.len() as f64));
    }
    let j: Vec<f64> = num.iter().map(|n| -n / den).collect();
    if let Some(&bad) = j.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFinite(bad));
    }
    Ok(GradientEstimate {
        j,
        t_hat,
        m: z.len(),
        denom: den / z.len() as f64,
    })
}

/// Draws two independent batches from disjoint streams of one seed: `Z-hat`
/// for the UBSR estimate (via search-and-bisect on the induced scalar
/// returns, with `delta` from the schedule at `m`) and `Z` for the ratio.
pub fn ubsr_and_gradient(
    theta: &[f64],
    m: usize,
    config: &EstimatorConfig,
    model: &PortfolioModel,
    loss: &LossFunction,
    lambda: f64,
    seed: u64,
) -> Result<(EstimateResult, GradientEstimate)> {
    let delta = delta_schedule(m, config.d1, config.schedule)?;
    let cfg = EstimatorConfig { delta, ..*config };

    let z_hat = model.sample(m, seed, 0)?;
    let returns: Vec<f64> = z_hat
        .values
        .iter()
        .map(|xi| portfolio_value(theta, xi))
        .collect::<Result<_>>()?;
    let scalar = SampleBatch {
        values: returns,
        seed_tag: seed,
    };
    let est = ubsr_sb(&scalar, &cfg, loss, lambda)?;

    let z = model.sample(m, seed, 1)?;
    let grad = estimate_gradient(theta, &z, est.t_hat, model, loss)?;
    Ok((est, grad))
}

/// Theoretical first- and second-moment bounds on the gradient estimation
/// error, as functions of the problem constants:
///
/// `D1 = (2 (C1 + d1) L1 L2 M + L1 (sigma1 sqrt(d) + M sigma2)) / b^2`
/// `D2 = (8 (C2 + d1^2) L1^2 L2^2 M^2 + 4 L1^2 (d sigma1^2 + M^2 sigma2^2)) / b^4`
pub fn theoretical_gradient_bounds(inputs: &BoundInputs) -> Result<(f64, f64)> {
    let checks: [(&'static str, f64); 8] = [
        ("c1", inputs.c1),
        ("c2", inputs.c2),
        ("l1", inputs.l1),
        ("l2", inputs.l2),
        ("m_bound", inputs.m_bound),
        ("sigma1", inputs.sigma1),
        ("sigma2", inputs.sigma2),
        ("b", inputs.b),
    ];
    for (name, v) in checks {
        // sigma1/sigma2/d1 = 0 are meaningful limits; the rest must be > 0.
        let ok = match name {
            "sigma1" | "sigma2" => v >= 0.0,
            _ => v > 0.0,
        };
        if !ok || !v.is_finite() {
            return Err(Error::InvalidParameter { name, value: v });
        }
    }
    if inputs.d1 < 0.0 || inputs.d == 0 {
        return Err(Error::InvalidParameter {
            name: "d1",
            value: inputs.d1,
        });
    }
    let BoundInputs {
        c1,
        c2,
        d1,
        l1,
        l2,
        m_bound: mb,
        d,
        sigma1,
        sigma2,
        b,
    } = *inputs;
    let d = d as f64;
    let d1_hat = (2.0 * (c1 + d1) * l1 * l2 * mb + l1 * (sigma1 * d.sqrt() + mb * sigma2))
        / (b * b);
    let d2_hat = (8.0 * (c2 + d1 * d1) * l1 * l1 * l2 * l2 * mb * mb
        + 4.0 * l1 * l1 * (d * sigma1 * sigma1 + mb * mb * sigma2 * sigma2))
        / (b * b * b * b);
    Ok((d1_hat, d2_hat))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::DeltaSchedule;
    use crate::models::{portfolio_ubsr_grad, portfolio_ubsr_oracle, Box2};

    fn model_2d() -> PortfolioModel {
        PortfolioModel::new(
            vec![0.1, 0.05],
            vec![vec![0.04, 0.0], vec![0.0, 0.01]],
            Box2::new(vec![-100.0, -100.0], vec![100.0, 100.0]).unwrap(),
        )
        .unwrap()
    }

    fn exp_loss() -> LossFunction {
        LossFunction::exponential(0.5).unwrap()
    }

    #[test]
    fn single_atom_batch_collapses_to_scenario() {
        let model = model_2d();
        let xi = vec![0.3, -0.7];
        let z = ScenarioBatch {
            values: vec![xi.clone(); 8],
            seed_tag: 0,
        };
        let theta = vec![1.0, 2.0];
        let g = estimate_gradient(&theta, &z, 0.9, &model, &exp_loss()).unwrap();
        for (a, b) in g.j.iter().zip(&xi) {
            assert!((a + b).abs() < 1e-12, "{:?}", g.j);
        }
    }

    #[test]
    fn ratio_is_scale_invariant_in_l_prime() {
        // Shifting t_hat multiplies every exponential l' value by the same
        // positive constant; the ratio must not move.
        let model = model_2d();
        let z = model.sample(50, 3, 1).unwrap();
        let theta = vec![1.0, 1.0];
        let a = estimate_gradient(&theta, &z, 0.5, &model, &exp_loss()).unwrap();
        let b = estimate_gradient(&theta, &z, 4.5, &model, &exp_loss()).unwrap();
        for (x, y) in a.j.iter().zip(&b.j) {
            assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn denominator_positive_and_recorded() {
        let model = model_2d();
        let z = model.sample(100, 9, 1).unwrap();
        let g = estimate_gradient(&[1.0, 1.0], &z, 6.0, &model, &exp_loss()).unwrap();
        assert!(g.denom > 0.0);
    }

    #[test]
    fn degenerate_denominator_is_an_error() {
        // Polynomial loss has l' = 0 on the negative axis; pick t_hat large
        // enough that every argument is negative.
        let model = model_2d();
        let z = model.sample(20, 1, 1).unwrap();
        let loss = LossFunction::polynomial(2.0).unwrap();
        let r = estimate_gradient(&[0.1, 0.1], &z, 100.0, &model, &loss);
        assert!(matches!(r, Err(Error::DegenerateDenominator(_))));
    }

    #[test]
    fn gradient_near_zero_at_optimum() {
        let model = model_2d();
        let theta = vec![5.0, 10.0]; // (beta Sigma)^{-1} mu for beta = 0.5
        let cfg = EstimatorConfig::new(1e-3, 1.0, DeltaSchedule::InverseSqrt).unwrap();
        let (_, g) = ubsr_and_gradient(&theta, 100_000, &cfg, &model, &exp_loss(), 0.05, 17)
            .unwrap();
        let norm = g.j.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(norm <= 0.02, "norm = {norm}");
    }

    #[test]
    fn matches_finite_difference_of_oracle() {
        let model = model_2d();
        let beta = 0.5;
        let lambda = 0.05;
        let cfg = EstimatorConfig::new(1e-3, 1.0, DeltaSchedule::InverseSqrt).unwrap();
        for (i, theta) in [[1.0, 1.0], [3.0, -2.0], [0.5, 7.0]].iter().enumerate() {
            let (_, g) =
                ubsr_and_gradient(theta, 100_000, &cfg, &model, &exp_loss(), lambda, 100 + i as u64)
                    .unwrap();
            let h = 1e-4;
            let mut fd = vec![0.0; 2];
            for k in 0..2 {
                let mut tp = theta.to_vec();
                let mut tm = theta.to_vec();
                tp[k] += h;
                tm[k] -= h;
                fd[k] = (portfolio_ubsr_oracle(&tp, &model, beta, lambda).unwrap()
                    - portfolio_ubsr_oracle(&tm, &model, beta, lambda).unwrap())
                    / (2.0 * h);
            }
            let err = g
                .j
                .iter()
                .zip(&fd)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            assert!(err < 0.05, "theta {theta:?}: err {err}");
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let model = model_2d();
        let cfg = EstimatorConfig::new(1e-4, 1.0, DeltaSchedule::InverseSqrt).unwrap();
        let a = ubsr_and_gradient(&[1.0, 1.0], 500, &cfg, &model, &exp_loss(), 0.05, 77).unwrap();
        let b = ubsr_and_gradient(&[1.0, 1.0], 500, &cfg, &model, &exp_loss(), 0.05, 77).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn near_deterministic_model_gives_minus_mu() {
        let model = PortfolioModel::new(
            vec![0.1, 0.05],
            vec![vec![1e-18, 0.0], vec![0.0, 1e-18]],
            Box2::new(vec![-100.0, -100.0], vec![100.0, 100.0]).unwrap(),
        )
        .unwrap();
        let cfg = EstimatorConfig::new(1e-8, 1e-4, DeltaSchedule::InverseSqrt).unwrap();
        let theta = vec![1.0, 1.0];
        let (est, g) =
            ubsr_and_gradient(&theta, 1000, &cfg, &model, &exp_loss(), 0.05, 5).unwrap();
        assert!((g.j[0] + 0.1).abs() < 1e-6, "{:?}", g.j);
        assert!((g.j[1] + 0.05).abs() < 1e-6, "{:?}", g.j);
        let expect_t = -0.15 - 0.05f64.ln() / 0.5;
        assert!((est.t_hat - expect_t).abs() < 1e-4);
    }

    #[test]
    fn bias_decreases_with_batch_size() {
        let model = model_2d();
        let theta = vec![1.0, 1.0];
        let exact = portfolio_ubsr_grad(&theta, &model, 0.5).unwrap();
        let cfg = EstimatorConfig::new(1e-4, 1.0, DeltaSchedule::InverseSqrt).unwrap();
        let mean_err_norm = |m: usize| -> f64 {
            let reps = 200;
            let mut acc = vec![0.0; 2];
            for rep in 0..reps {
                let (_, g) = ubsr_and_gradient(
                    &theta,
                    m,
                    &cfg,
                    &model,
                    &exp_loss(),
                    0.05,
                    1000 + rep as u64,
                )
                .unwrap();
                for k in 0..2 {
                    acc[k] += g.j[k] - exact[k];
                }
            }
            acc.iter().map(|v| (v / reps as f64).powi(2)).sum::<f64>().sqrt()
        };
        let b_small = mean_err_norm(50);
        let b_large = mean_err_norm(5000);
        assert!(b_large < b_small, "bias {b_small} -> {b_large}");
    }

    #[test]
    fn bound_formulas() {
        let inputs = BoundInputs {
            c1: 1.0,
            c2: 1.0,
            d1: 1.0,
            l1: 1.0,
            l2: 1.0,
            m_bound: 1.0,
            d: 1,
            sigma1: 1.0,
            sigma2: 1.0,
            b: 1.0,
        };
        let (d1h, d2h) = theoretical_gradient_bounds(&inputs).unwrap();
        assert_eq!(d1h, 6.0);
        assert_eq!(d2h, 8.0 * 2.0 + 4.0 * 2.0);

        // Homogeneity in b.
        let doubled = BoundInputs { b: 2.0, ..inputs };
        let (d1b, d2b) = theoretical_gradient_bounds(&doubled).unwrap();
        assert!((d1b - d1h / 4.0).abs() < 1e-15);
        assert!((d2b - d2h / 16.0).abs() < 1e-15);

        // Zero-variance, zero-d1 limit keeps only the bias term.
        let pure_bias = BoundInputs {
            sigma1: 0.0,
            sigma2: 0.0,
            d1: 0.0,
            ..inputs
        };
        let (d1p, _) = theoretical_gradient_bounds(&pure_bias).unwrap();
        assert_eq!(d1p, 2.0);
    }
}
