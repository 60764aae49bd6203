//! Projected stochastic gradient on the UBSR objective.
//!
//! Each iteration draws two independent batches: one feeds the
//! search-and-bisect estimator for `t_hat`, the other the ratio gradient
//! estimator. The iterate is updated with step size `c / k` and projected
//! back onto the feasible box.

use crate::error::{Error, Result};
use crate::estimator::{DeltaSchedule, EstimatorConfig};
use crate::gradient::ubsr_and_gradient;
use crate::loss::LossFunction;
use crate::models::{portfolio_ubsr_oracle, Box2, PortfolioModel};

/// Batch size per iteration: fixed, or growing linearly with the iteration
/// index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BatchSchedule {
    Constant(usize),
    Linear,
}

/// Configuration for a single optimization run.
#[derive(Debug, Clone, PartialEq)]
pub struct SGConfig {
    /// Step coefficient; step size at iteration `k` is `c / k`.
    pub c: f64,
    pub batch_schedule: BatchSchedule,
    pub n_iters: usize,
    /// Coefficient of the bisection tolerance `delta_k = d1 / sqrt(m_k)`.
    pub d1: f64,
    pub theta0: Vec<f64>,
    pub seed: u64,
}

/// Optional ground truth for trace diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct Reference {
    pub theta_star: Vec<f64>,
    pub beta: f64,
    pub lambda: f64,
}

/// One recorded iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct SGIterRecord {
    pub k: usize,
    pub theta: Vec<f64>,
    pub alpha: f64,
    pub m: usize,
    pub delta: f64,
    pub t_hat: f64,
    pub grad: Vec<f64>,
    pub grad_norm: f64,
    /// Squared distance to the reference optimum, when known.
    pub dist_sq: Option<f64>,
    /// Objective gap to the reference optimum, when known.
    pub h_gap: Option<f64>,
}

/// Full run record.
#[derive(Debug, Clone, PartialEq)]
pub struct SGTrace {
    pub records: Vec<SGIterRecord>,
    pub final_theta: Vec<f64>,
    pub warnings: Vec<String>,
}

/// Step size `c / k`.
pub fn step_size(k: usize, c: f64) -> f64 {
    debug_assert!(k >= 1);
    c / k as f64
}

/// Batch size at iteration `k` under the schedule.
pub fn batch_size(k: usize, schedule: BatchSchedule) -> usize {
    debug_assert!(k >= 1);
    match schedule {
        BatchSchedule::Constant(m) => m,
        BatchSchedule::Linear => k,
    }
}

/// Componentwise clamp onto the box. Idempotent and non-expansive.
pub fn project_box(x: &[f64], box_: &Box2) -> Result<Vec<f64>> {
    if x.len() != box_.dim() {
        return Err(Error::DimensionMismatch {
            expected: box_.dim(),
            got: x.len(),
        });
    }
    Ok(x.iter()
        .zip(box_.lo.iter().zip(&box_.hi))
        .map(|(v, (lo, hi))| v.clamp(*lo, *hi))
        .collect())
}

/// Admissible step coefficient for the Gaussian portfolio: the midpoint
/// `2 / mu_sc` of the interval `[1/mu_sc, 3/mu_sc]`, where the strong
/// convexity constant is `mu_sc = beta * lambda_min(Sigma)`.
pub fn suggest_c(model: &PortfolioModel, beta: f64) -> Result<f64> {
    if !(beta > 0.0) {
        return Err(Error::InvalidParameter {
            name: "beta",
            value: beta,
        });
    }
    let mu_sc = beta * model.sigma_lambda_min();
    if !(mu_sc > 0.0) {
        return Err(Error::FactorizationFailure);
    }
    Ok(2.0 / mu_sc)
}

/// Runs projected stochastic gradient for `n_iters` iterations and returns
/// the full trace. Identical config gives an identical trace.
pub fn ubsr_sg(
    config: &SGConfig,
    model: &PortfolioModel,
    loss: &LossFunction,
    lambda: f64,
    reference: Option<&Reference>,
) -> Result<SGTrace> {
    if !model.theta_box.contains(&config.theta0, 0.0) {
        return Err(Error::InvalidStart);
    }
    if !(config.c > 0.0) {
        return Err(Error::InvalidParameter {
            name: "c",
            value: config.c,
        });
    }

    let mut warnings = Vec::new();
    if let LossFunction::Exponential { beta } = loss {
        let mu_sc = beta * model.sigma_lambda_min();
        let prod = mu_sc * config.c;
        if !(1.0..=3.0).contains(&prod) {
            warnings.push(format!(
                "step coefficient outside admissible range: mu_sc * c = {prod:.6}, want [1, 3]"
            ));
        }
    }

    let est_cfg = EstimatorConfig::new(config.d1, config.d1, DeltaSchedule::InverseSqrt)?;
    let mut theta = config.theta0.clone();
    let mut records = Vec::with_capacity(config.n_iters);

    for k in 1..=config.n_iters {
        let alpha = step_size(k, config.c);
        let m = batch_size(k, config.batch_schedule);
        // Streams 2k and 2k+1 of the run seed back the (Z-hat, Z) pair for
        // this iteration; ubsr_and_gradient offsets within its own seed, so
        // give it a per-iteration derived seed instead.
        let iter_seed = config
            .seed
            .wrapping_mul(0x9e37_79b9_7f4a_7c15)
            .wrapping_add(k as u64);
        let (est, grad) =
            ubsr_and_gradient(&theta, m, &est_cfg, model, loss, lambda, iter_seed)
                .map_err(|e| e.with_context(format!("iteration {k}")))?;

        let proposal: Vec<f64> = theta
            .iter()
            .zip(&grad.j)
            .map(|(t, g)| t - alpha * g)
            .collect();
        theta = project_box(&proposal, &model.theta_box)?;

        let grad_norm = grad.j.iter().map(|v| v * v).sum::<f64>().sqrt();
        let (dist_sq, h_gap) = match reference {
            Some(r) => {
                let d2 = theta
                    .iter()
                    .zip(&r.theta_star)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>();
                let h = portfolio_ubsr_oracle(&theta, model, r.beta, r.lambda)?;
                let h_star = portfolio_ubsr_oracle(&r.theta_star, model, r.beta, r.lambda)?;
                (Some(d2), Some(h - h_star))
            }
            None => (None, None),
        };
        records.push(SGIterRecord {
            k,
            theta: theta.clone(),
            alpha,
            m,
            delta: est.delta,
            t_hat: est.t_hat,
            grad: grad.j,
            grad_norm,
            dist_sq,
            h_gap,
        });
    }

    Ok(SGTrace {
        final_theta: theta,
        records,
        warnings,
    })
}
