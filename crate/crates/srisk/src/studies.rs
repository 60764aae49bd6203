//! Replication studies behind the CLI: estimation error distributions,
//! MSE rate checks, gradient-error rate checks, and optimization runs.
//!
//! All studies are deterministic given `(config, seed)`: replications fan
//! out over a worker pool with per-replication derived streams and are
//! merged in replication order, so output files are byte-identical across
//! runs regardless of thread count.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use rayon::prelude::*;
use statrs::function::erf::erf;

use crate::config::Config;
use crate::error::{Error, Result};
use crate::estimator::{
    delta_schedule, ubsr_sb, DeltaSchedule, EstimatorConfig,
};
use crate::gradient::ubsr_and_gradient;
use crate::loss::LossFunction;
use crate::models::{
    portfolio_argmin_oracle, portfolio_ubsr_grad, GaussianSource,
};
use crate::optimizer::{suggest_c, ubsr_sg, BatchSchedule, Reference, SGConfig, SGTrace};

/// What to run and where to put the results.
#[derive(Debug, Clone)]
pub struct RunSpec {
    pub config: Config,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub reps: usize,
}

/// Per-`m` summary of the estimation error `t_hat - t*`.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorStats {
    pub m: usize,
    pub reps: usize,
    pub mean_err: f64,
    pub mse: f64,
    pub mse_times_m: f64,
    pub q05: f64,
    pub q25: f64,
    pub q50: f64,
    pub q75: f64,
    pub q95: f64,
}

/// Slope fit of `log(mse)` against `log(m)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    /// `exp(intercept)`: the empirical constant in `mse ~ C * m^slope`.
    pub implied_constant: f64,
    /// Theoretical constant from the supplied bound inputs, when given.
    pub theoretical_constant: Option<f64>,
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Linear-interpolation quantile of an unsorted slice.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    assert!(!values.is_empty() && (0.0..=1.0).contains(&q));
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let pos = q * (v.len() - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    if i + 1 < v.len() {
        v[i] * (1.0 - frac) + v[i + 1] * frac
    } else {
        v[i]
    }
}

/// Ordinary-least-squares slope and intercept of `y` on `x`.
pub fn ols_fit(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    if x.len() < 3 {
        return Err(Error::InsufficientData {
            need: 3,
            got: x.len(),
        });
    }
    let mx = mean(x);
    let my = mean(y);
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

fn norm_cdf(z: f64) -> f64 {
    0.5 * (1.0 + erf(z / std::f64::consts::SQRT_2))
}

fn norm_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Exact `E[l(-X - t)] - lambda` for `X ~ N(mu, sigma^2)` and the built-in
/// loss families (polynomial restricted to `p = 2`). The argument
/// `Y = -X - t` is Gaussian with mean `nu = -mu - t`, which makes the
/// expectation a linear combination of Gaussian partial moments.
fn gaussian_exact_g(loss: &LossFunction, mu: f64, sigma: f64, lambda: f64, t: f64) -> Result<f64> {
    let nu = -mu - t;
    let s = sigma;
    let z = nu / s;
    let e = match *loss {
        LossFunction::Exponential { beta } => (beta * nu + beta * beta * s * s / 2.0).exp(),
        LossFunction::PiecewiseLinear {
            slope_pos,
            slope_neg,
        } => {
            let pos_part = nu * norm_cdf(z) + s * norm_pdf(z);
            let neg_part = nu * norm_cdf(-z) - s * norm_pdf(z);
            slope_pos * pos_part + slope_neg * neg_part
        }
        LossFunction::PolynomialPositivePart { p } => {
            if (p - 2.0).abs() > 1e-12 {
                return Err(Error::InvalidParameter { name: "p", value: p });
            }
            ((nu * nu + s * s) * norm_cdf(z) + nu * s * norm_pdf(z)) / 2.0
        }
    };
    Ok(e - lambda)
}

/// True UBSR of a Gaussian source for any built-in loss, by bisecting the
/// exact shortfall function. Independent of the SAA estimation path.
pub fn gaussian_true_ubsr(
    loss: &LossFunction,
    mu: f64,
    sigma: f64,
    lambda: f64,
) -> Result<Option<f64>> {
    if let LossFunction::PolynomialPositivePart { p } = loss {
        if (p - 2.0).abs() > 1e-12 {
            return Ok(None);
        }
    }
    let g = |t: f64| gaussian_exact_g(loss, mu, sigma, lambda, t);
    let (mut lo, mut hi) = (-1.0f64, 1.0f64);
    let mut guard = 0;
    while g(lo)? < 0.0 {
        lo *= 2.0;
        guard += 1;
        if guard > 200 {
            return Err(Error::BracketNotFound(200));
        }
    }
    while g(hi)? > 0.0 {
        hi *= 2.0;
        guard += 1;
        if guard > 200 {
            return Err(Error::BracketNotFound(200));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Some(0.5 * (lo + hi)))
}

fn schedule_from_config(cfg: &Config) -> Result<DeltaSchedule> {
    Ok(match cfg.get_str("schedule").unwrap_or("sqrt") {
        "sqrt" => DeltaSchedule::InverseSqrt,
        "quarter" => DeltaSchedule::InverseQuarterPower,
        other => {
            return Err(Error::Config {
                line: 0,
                msg: format!("unknown schedule `{other}` (want `sqrt` or `quarter`)"),
            })
        }
    })
}

struct EstimateRep {
    t_hat: f64,
    delta: f64,
    err: Option<f64>,
    iters_search: u32,
    iters_bisect: u32,
}

fn stats_from_errors(m: usize, errors: &[f64]) -> ErrorStats {
    let mean_err = mean(errors);
    let mse = errors.iter().map(|e| e * e).sum::<f64>() / errors.len() as f64;
    ErrorStats {
        m,
        reps: errors.len(),
        mean_err,
        mse,
        mse_times_m: mse * m as f64,
        q05: quantile(errors, 0.05),
        q25: quantile(errors, 0.25),
        q50: quantile(errors, 0.50),
        q75: quantile(errors, 0.75),
        q95: quantile(errors, 0.95),
    }
}

fn run_estimate_grid(spec: &RunSpec) -> Result<(Vec<usize>, Vec<Vec<EstimateRep>>)> {
    let cfg = &spec.config;
    let loss = cfg.get_loss("loss")?;
    let lambda = cfg.get_f64("lambda")?;
    let mu = cfg.get_f64_or("mu", 0.0)?;
    let sigma = cfg.get_f64_or("sigma", 1.0)?;
    let d1 = cfg.get_f64_or("d1", 1.0)?;
    let schedule = schedule_from_config(cfg)?;
    let m_list = cfg.get_usize_list("m_list")?;
    let source = GaussianSource::new(mu, sigma)?;
    let t_star = gaussian_true_ubsr(&loss, mu, sigma, lambda)?;

    let mut all = Vec::with_capacity(m_list.len());
    for (mi, &m) in m_list.iter().enumerate() {
        let est_cfg = EstimatorConfig::for_batch(d1, schedule, m)?;
        let reps: Vec<EstimateRep> = (0..spec.reps)
            .into_par_iter()
            .map(|rep| -> Result<EstimateRep> {
                let stream = ((mi as u64) << 32) | rep as u64;
                let batch = source.sample(m, spec.seed, stream)?;
                let r = ubsr_sb(&batch, &est_cfg, &loss, lambda)
                    .map_err(|e| e.with_context(format!("m={m}, rep={rep}")))?;
                Ok(EstimateRep {
                    t_hat: r.t_hat,
                    delta: r.delta,
                    err: t_star.map(|t| r.t_hat - t),
                    iters_search: r.iters_search,
                    iters_bisect: r.iters_bisect,
                })
            })
            .collect::<Result<_>>()?;
        all.push(reps);
    }
    Ok((m_list, all))
}

/// Estimation study: per-`m` error distributions against the closed-form
/// Gaussian oracle. Writes `errors_m{m}.csv` per grid point and a
/// `summary.csv`.
pub fn run_estimate_study(spec: &RunSpec) -> Result<Vec<ErrorStats>> {
    fs::create_dir_all(&spec.out_dir)?;
    let (m_list, grid) = run_estimate_grid(spec)?;

    let mut summaries = Vec::new();
    for (&m, reps) in m_list.iter().zip(&grid) {
        let path = spec.out_dir.join(format!("errors_m{m}.csv"));
        let mut w = BufWriter::new(File::create(&path)?);
        writeln!(w, "m,rep,t_hat,delta,err,iters_search,iters_bisect")?;
        for (rep, r) in reps.iter().enumerate() {
            let err = r.err.map(|e| e.to_string()).unwrap_or_default();
            writeln!(
                w,
                "{m},{rep},{},{},{err},{},{}",
                r.t_hat, r.delta, r.iters_search, r.iters_bisect
            )?;
        }
        w.flush()?;
        let errors: Vec<f64> = reps.iter().filter_map(|r| r.err).collect();
        if !errors.is_empty() {
            summaries.push(stats_from_errors(m, &errors));
        }
    }

    let mut w = BufWriter::new(File::create(spec.out_dir.join("summary.csv"))?);
    writeln!(w, "m,reps,mean_err,mse,mse_times_m,q05,q25,q50,q75,q95")?;
    for s in &summaries {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{}",
            s.m, s.reps, s.mean_err, s.mse, s.mse_times_m, s.q05, s.q25, s.q50, s.q75, s.q95
        )?;
    }
    w.flush()?;
    Ok(summaries)
}

/// MSE-rate check: runs the estimation grid, fits the log-log slope of
/// `mse` against `m`, and reports the implied empirical constant next to
/// the theoretical one when a moment bound `t_bound` is configured. The
/// fit is reported, not asserted.
pub fn run_rate_check(spec: &RunSpec) -> Result<(Vec<ErrorStats>, RateFit)> {
    let cfg = &spec.config;
    let m_list = cfg.get_usize_list("m_list")?;
    if m_list.len() < 3 {
        return Err(Error::InsufficientData {
            need: 3,
            got: m_list.len(),
        });
    }
    let summaries = run_estimate_study(spec)?;
    let xs: Vec<f64> = summaries.iter().map(|s| (s.m as f64).ln()).collect();
    let ys: Vec<f64> = summaries.iter().map(|s| s.mse.ln()).collect();
    let (slope, intercept) = ols_fit(&xs, &ys)?;

    // Theoretical MSE constant, when the moment bound T is supplied:
    // C2 = 108 L1^2 T^2 / b^2 for Lipschitz losses (rate 1/m),
    // C4 = (540 L2^2 + 108 a^2) T^4 / b^2 for smooth losses (rate 1/sqrt(m)).
    let theoretical_constant = if cfg.has("t_bound") {
        let t = cfg.get_f64("t_bound")?;
        let loss = cfg.get_loss("loss")?;
        let r = cfg.get_f64_or("domain_halfwidth", 10.0)?;
        let k = loss.constants(r)?;
        Some(match k.regime {
            crate::loss::LossRegime::Lipschitz => 108.0 * k.l1 * k.l1 * t * t / (k.b * k.b),
            crate::loss::LossRegime::Smooth => {
                (540.0 * k.l2 * k.l2 + 108.0 * k.a * k.a) * t.powi(4) / (k.b * k.b)
            }
        })
    } else {
        None
    };

    let fit = RateFit {
        slope,
        intercept,
        implied_constant: intercept.exp(),
        theoretical_constant,
    };
    let mut w = BufWriter::new(File::create(spec.out_dir.join("rate.csv"))?);
    writeln!(w, "slope,intercept,implied_constant,theoretical_constant")?;
    writeln!(
        w,
        "{},{},{},{}",
        fit.slope,
        fit.intercept,
        fit.implied_constant,
        fit.theoretical_constant
            .map(|v| v.to_string())
            .unwrap_or_default()
    )?;
    w.flush()?;
    Ok((summaries, fit))
}

/// Per-`m` gradient replication summary.
#[derive(Debug, Clone, PartialEq)]
pub struct GradStats {
    pub m: usize,
    pub reps: usize,
    /// Mean of `||J - grad h(theta)||_2^2`.
    pub mse: f64,
}

/// Gradient-error study at a fixed `theta` over an `m`-grid, against the
/// exact quadratic gradient. Writes `grad_m{m}.csv` per grid point, a
/// `summary.csv`, and the slope fit in `rate.csv`.
pub fn run_grad_check(spec: &RunSpec) -> Result<(Vec<GradStats>, RateFit)> {
    let cfg = &spec.config;
    fs::create_dir_all(&spec.out_dir)?;
    let loss = cfg.get_loss("loss")?;
    let beta = match loss {
        LossFunction::Exponential { beta } => beta,
        _ => {
            return Err(Error::Config {
                line: 0,
                msg: "grad-check needs `loss = exponential(...)` for an exact gradient oracle"
                    .into(),
            })
        }
    };
    let lambda = cfg.get_f64("lambda")?;
    let model = cfg.get_portfolio()?;
    let theta = cfg.get_f64_list("theta")?;
    let d1 = cfg.get_f64_or("d1", 1.0)?;
    let m_list = cfg.get_usize_list("m_list")?;
    let exact = portfolio_ubsr_grad(&theta, &model, beta)?;
    let d = model.dim();

    let mut summaries = Vec::new();
    for (mi, &m) in m_list.iter().enumerate() {
        let est_cfg = EstimatorConfig::new(
            delta_schedule(m, d1, DeltaSchedule::InverseSqrt)?,
            d1,
            DeltaSchedule::InverseSqrt,
        )?;
        let rows: Vec<(Vec<f64>, f64, f64, f64)> = (0..spec.reps)
            .into_par_iter()
            .map(|rep| -> Result<_> {
                let seed = spec
                    .seed
                    .wrapping_add(((mi as u64) << 40) | ((rep as u64) << 8));
                let (est, g) =
                    ubsr_and_gradient(&theta, m, &est_cfg, &model, &loss, lambda, seed)
                        .map_err(|e| e.with_context(format!("m={m}, rep={rep}")))?;
                let err_l2 = g
                    .j
                    .iter()
                    .zip(&exact)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                Ok((g.j, est.t_hat, g.denom, err_l2))
            })
            .collect::<Result<_>>()?;

        let path = spec.out_dir.join(format!("grad_m{m}.csv"));
        let mut w = BufWriter::new(File::create(&path)?);
        let j_cols: Vec<String> = (1..=d).map(|i| format!("j_{i}")).collect();
        writeln!(w, "m,rep,theta_id,{},t_hat,denom,err_l2", j_cols.join(","))?;
        for (rep, (j, t_hat, denom, err)) in rows.iter().enumerate() {
            let j_str: Vec<String> = j.iter().map(|v| v.to_string()).collect();
            writeln!(w, "{m},{rep},0,{},{t_hat},{denom},{err}", j_str.join(","))?;
        }
        w.flush()?;
        let mse = rows.iter().map(|(_, _, _, e)| e * e).sum::<f64>() / rows.len() as f64;
        summaries.push(GradStats {
            m,
            reps: rows.len(),
            mse,
        });
    }

    let mut w = BufWriter::new(File::create(spec.out_dir.join("summary.csv"))?);
    writeln!(w, "m,reps,mse,mse_times_m")?;
    for s in &summaries {
        writeln!(w, "{},{},{},{}", s.m, s.reps, s.mse, s.mse * s.m as f64)?;
    }
    w.flush()?;

    let xs: Vec<f64> = summaries.iter().map(|s| (s.m as f64).ln()).collect();
    let ys: Vec<f64> = summaries.iter().map(|s| s.mse.ln()).collect();
    let (slope, intercept) = ols_fit(&xs, &ys)?;
    let fit = RateFit {
        slope,
        intercept,
        implied_constant: intercept.exp(),
        theoretical_constant: None,
    };
    let mut w = BufWriter::new(File::create(spec.out_dir.join("rate.csv"))?);
    writeln!(w, "slope,intercept,implied_constant,theoretical_constant")?;
    writeln!(w, "{},{},{},", fit.slope, fit.intercept, fit.implied_constant)?;
    w.flush()?;
    Ok((summaries, fit))
}

/// Parses `linear` or `constant(m)`.
pub fn parse_batch_schedule(text: &str) -> std::result::Result<BatchSchedule, String> {
    let text = text.trim();
    if text == "linear" {
        return Ok(BatchSchedule::Linear);
    }
    if let Some(inner) = text.strip_prefix("constant(").and_then(|s| s.strip_suffix(')')) {
        let m = inner
            .trim()
            .parse::<usize>()
            .map_err(|_| format!("not an integer: `{}`", inner.trim()))?;
        if m == 0 {
            return Err("constant batch size must be >= 1".into());
        }
        return Ok(BatchSchedule::Constant(m));
    }
    Err(format!("unknown batch schedule `{text}`"))
}

/// Median-envelope summary over seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeSummary {
    pub theta_star: Vec<f64>,
    pub traces: Vec<SGTrace>,
    /// `(k, median dist_sq, median h_gap)` per iteration.
    pub envelope: Vec<(usize, f64, f64)>,
}

/// Optimization study: many seeds of the projected stochastic gradient run,
/// per-seed trace files plus a median-envelope `summary.csv` whose header
/// records the reference optimum.
pub fn run_optimize_study(spec: &RunSpec) -> Result<OptimizeSummary> {
    let cfg = &spec.config;
    fs::create_dir_all(&spec.out_dir)?;
    let loss = cfg.get_loss("loss")?;
    let beta = match loss {
        LossFunction::Exponential { beta } => beta,
        _ => {
            return Err(Error::Config {
                line: 0,
                msg: "optimize needs `loss = exponential(...)` for the quadratic reference".into(),
            })
        }
    };
    let lambda = cfg.get_f64("lambda")?;
    let model = cfg.get_portfolio()?;
    let n_iters = cfg.get_usize_or("n_iters", 1000)?;
    let d1 = cfg.get_f64_or("d1", 1.0)?;
    let schedule = parse_batch_schedule(cfg.get_str("batch_schedule").unwrap_or("linear"))
        .map_err(|msg| Error::Config { line: 0, msg })?;
    let c = if cfg.has("c") {
        cfg.get_f64("c")?
    } else {
        suggest_c(&model, beta)?
    };
    let theta0 = if cfg.has("theta0") {
        cfg.get_f64_list("theta0")?
    } else {
        vec![0.0; model.dim()]
    };

    let theta_star = portfolio_argmin_oracle(&model, beta)?;
    let reference = Reference {
        theta_star: theta_star.clone(),
        beta,
        lambda,
    };
    let d = model.dim();

    let traces: Vec<SGTrace> = (0..spec.reps)
        .into_par_iter()
        .map(|s| -> Result<SGTrace> {
            let run_cfg = SGConfig {
                c,
                batch_schedule: schedule,
                n_iters,
                d1,
                theta0: theta0.clone(),
                seed: spec.seed.wrapping_add(s as u64),
            };
            ubsr_sg(&run_cfg, &model, &loss, lambda, Some(&reference))
                .map_err(|e| e.with_context(format!("seed index {s}")))
        })
        .collect::<Result<_>>()?;

    for (s, trace) in traces.iter().enumerate() {
        let path = spec.out_dir.join(format!("trace_seed{s}.csv"));
        let mut w = BufWriter::new(File::create(&path)?);
        let theta_cols: Vec<String> = (1..=d).map(|i| format!("theta_{i}")).collect();
        let grad_cols: Vec<String> = (1..=d).map(|i| format!("grad_{i}")).collect();
        writeln!(
            w,
            "k,alpha,m_k,delta_k,t_hat,{},{},dist_sq,h_gap",
            theta_cols.join(","),
            grad_cols.join(",")
        )?;
        for rec in &trace.records {
            let theta: Vec<String> = rec.theta.iter().map(|v| v.to_string()).collect();
            let grad: Vec<String> = rec.grad.iter().map(|v| v.to_string()).collect();
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{}",
                rec.k,
                rec.alpha,
                rec.m,
                rec.delta,
                rec.t_hat,
                theta.join(","),
                grad.join(","),
                rec.dist_sq.unwrap_or(f64::NAN),
                rec.h_gap.unwrap_or(f64::NAN)
            )?;
            if rec.k % 50 == 0 {
                w.flush()?;
            }
        }
        w.flush()?;
    }

    let mut envelope = Vec::with_capacity(n_iters);
    for k in 0..n_iters {
        let dists: Vec<f64> = traces
            .iter()
            .map(|t| t.records[k].dist_sq.unwrap())
            .collect();
        let gaps: Vec<f64> = traces.iter().map(|t| t.records[k].h_gap.unwrap()).collect();
        envelope.push((k + 1, quantile(&dists, 0.5), quantile(&gaps, 0.5)));
    }

    let mut w = BufWriter::new(File::create(spec.out_dir.join("summary.csv"))?);
    let ts: Vec<String> = theta_star.iter().map(|v| v.to_string()).collect();
    writeln!(w, "# theta_star = {}", ts.join(","))?;
    writeln!(w, "k,median_dist_sq,median_h_gap")?;
    for (k, d2, gap) in &envelope {
        writeln!(w, "{k},{d2},{gap}")?;
    }
    w.flush()?;

    Ok(OptimizeSummary {
        theta_star,
        traces,
        envelope,
    })
}
