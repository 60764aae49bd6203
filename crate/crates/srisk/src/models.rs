//! Sampling models and closed-form shortfall-risk oracles.
//!
//! Two sources are supported: a scalar Gaussian and a Gaussian portfolio
//! where the return of allocation `theta` is `xi' * theta` with
//! `xi ~ N(mu, Sigma)`. For the exponential loss both admit closed-form
//! UBSR values, which the study harnesses use as ground truth.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Deterministic RNG for a `(master_seed, stream)` pair.
///
/// Distinct streams from one master seed are disjoint, which gives the
/// independent `Z` / `Z-hat` batches the gradient estimator requires.
pub fn stream_rng(master_seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(stream);
    rng
}

/// Scalar Gaussian source `N(mu, sigma^2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianSource {
    pub mu: f64,
    pub sigma: f64,
}

impl GaussianSource {
    pub fn new(mu: f64, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) {
            return Err(Error::InvalidParameter {
                name: "sigma",
                value: sigma,
            });
        }
        Ok(GaussianSource { mu, sigma })
    }

    /// Draws `n` i.i.d. samples. Identical `(seed, stream)` gives an
    /// identical batch, bit for bit.
    pub fn sample(&self, n: usize, seed: u64, stream: u64) -> Result<SampleBatch> {
        if n == 0 {
            return Err(Error::InvalidParameter {
                name: "n",
                value: 0.0,
            });
        }
        let mut rng = stream_rng(seed, stream);
        let values = (0..n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                self.mu + self.sigma * z
            })
            .collect();
        Ok(SampleBatch {
            values,
            seed_tag: seed,
        })
    }
}

/// Per-coordinate closed interval bounds defining the feasible box.
#[derive(Debug, Clone, PartialEq)]
pub struct Box2 {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Box2 {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::DimensionMismatch {
                expected: lo.len(),
                got: hi.len(),
            });
        }
        for (l, h) in lo.iter().zip(&hi) {
            if !(l <= h) {
                return Err(Error::InvalidParameter {
                    name: "box",
                    value: *l,
                });
            }
        }
        Ok(Box2 { lo, hi })
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(v, (l, h))| *v >= l - tol && *v <= h + tol)
    }
}

/// Gaussian portfolio model: returns `xi ~ N(mu_vec, sigma_mat)`, feasible
/// allocations in an axis-aligned box.
#[derive(Debug, Clone, PartialEq)]
pub struct PortfolioModel {
    pub mu_vec: Vec<f64>,
    pub sigma_mat: Vec<Vec<f64>>,
    pub theta_box: Box2,
    chol: Vec<Vec<f64>>,
}

/// Ordered batch of scalar samples.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    pub values: Vec<f64>,
    pub seed_tag: u64,
}

impl SampleBatch {
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidParameter {
                name: "batch_len",
                value: 0.0,
            });
        }
        if let Some(&bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(bad));
        }
        Ok(SampleBatch {
            values,
            seed_tag: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Ordered batch of scenario vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioBatch {
    pub values: Vec<Vec<f64>>,
    pub seed_tag: u64,
}

impl ScenarioBatch {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Lower-triangular Cholesky factor of a symmetric matrix, or None if the
/// matrix is not positive-definite.
fn cholesky(mat: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = mat.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = mat[i][j];
            for k in 0..j {
                s -= l[i][k] * l[j][k];
            }
            if i == j {
                if s <= 0.0 {
                    return None;
                }
                l[i][j] = s.sqrt();
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    Some(l)
}

impl PortfolioModel {
    pub fn new(mu_vec: Vec<f64>, sigma_mat: Vec<Vec<f64>>, theta_box: Box2) -> Result<Self> {
        let d = mu_vec.len();
        if sigma_mat.len() != d || sigma_mat.iter().any(|row| row.len() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: sigma_mat.len(),
            });
        }
        if theta_box.dim() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: theta_box.dim(),
            });
        }
        for i in 0..d {
            for j in 0..d {
                if (sigma_mat[i][j] - sigma_mat[j][i]).abs() > 1e-12 {
                    return Err(Error::FactorizationFailure);
                }
            }
        }
        let chol = cholesky(&sigma_mat).ok_or(Error::FactorizationFailure)?;
        Ok(PortfolioModel {
            mu_vec,
            sigma_mat,
            theta_box,
            chol,
        })
    }

    pub fn dim(&self) -> usize {
        self.mu_vec.len()
    }

    /// Draws `n` i.i.d. scenario vectors from `N(mu_vec, sigma_mat)` via the
    /// lower-triangular factor applied to standard normals.
    pub fn sample(&self, n: usize, seed: u64, stream: u64) -> Result<ScenarioBatch> {
        if n == 0 {
            return Err(Error::InvalidParameter {
                name: "n",
                value: 0.0,
            });
        }
        let d = self.dim();
        let mut rng = stream_rng(seed, stream);
        let mut values = Vec::with_capacity(n);
        for _ in 0..n {
            let z: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
            let mut xi = self.mu_vec.clone();
            for i in 0..d {
                for (k, zk) in z.iter().enumerate().take(i + 1) {
                    xi[i] += self.chol[i][k] * zk;
                }
            }
            values.push(xi);
        }
        Ok(ScenarioBatch {
            values,
            seed_tag: seed,
        })
    }

    /// Smallest eigenvalue of `sigma_mat`, by bisection on the
    /// positive-definiteness predicate `Sigma - t I > 0`.
    pub fn sigma_lambda_min(&self) -> f64 {
        self.eig_extreme(false)
    }

    /// Largest eigenvalue of `sigma_mat`.
    pub fn sigma_lambda_max(&self) -> f64 {
        self.eig_extreme(true)
    }

    fn eig_extreme(&self, largest: bool) -> f64 {
        let d = self.dim();
        // Gershgorin bound on the spectrum.
        let bound = (0..d)
            .map(|i| self.sigma_mat[i].iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0f64, f64::max);
        let shifted_pd = |t: f64| -> bool {
            let mut m = self.sigma_mat.clone();
            for i in 0..d {
                if largest {
                    // t I - Sigma is PD iff t > lambda_max.
                    for j in 0..d {
                        m[i][j] = -self.sigma_mat[i][j];
                    }
                    m[i][i] += t;
                } else {
                    m[i][i] -= t;
                }
            }
            cholesky(&m).is_some()
        };
        let (mut lo, mut hi) = (0.0f64, bound + 1.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid == lo || mid == hi {
                break;
            }
            let mid_below = if largest {
                !shifted_pd(mid)
            } else {
                shifted_pd(mid)
            };
            if mid_below {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }
}

/// Portfolio return `xi' * theta`.
pub fn portfolio_value(theta: &[f64], xi: &[f64]) -> Result<f64> {
    if theta.len() != xi.len() {
        return Err(Error::DimensionMismatch {
            expected: theta.len(),
            got: xi.len(),
        });
    }
    Ok(theta.iter().zip(xi).map(|(t, x)| t * x).sum())
}

/// Gradient of `xi' * theta` in `theta`, i.e. `xi`.
pub fn portfolio_grad(theta: &[f64], xi: &[f64]) -> Result<Vec<f64>> {
    if theta.len() != xi.len() {
        return Err(Error::DimensionMismatch {
            expected: theta.len(),
            got: xi.len(),
        });
    }
    Ok(xi.to_vec())
}

/// Closed-form UBSR of `X ~ N(mu, sigma^2)` under exponential loss
/// `exp(beta x)` with tolerance `lambda`:
/// `-mu + beta sigma^2 / 2 - ln(lambda) / beta`.
pub fn gaussian_ubsr_oracle(mu: f64, sigma: f64, beta: f64, lambda: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::InvalidParameter {
            name: "sigma",
            value: sigma,
        });
    }
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
    Ok(-mu + beta * sigma * sigma / 2.0 - lambda.ln() / beta)
}

/// Closed-form portfolio UBSR under exponential loss:
/// `-mu' theta + beta (theta' Sigma theta) / 2 - ln(lambda) / beta`.
pub fn portfolio_ubsr_oracle(
    theta: &[f64],
    model: &PortfolioModel,
    beta: f64,
    lambda: f64,
) -> Result<f64> {
    if theta.len() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            got: theta.len(),
        });
    }
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
    let mean = portfolio_value(theta, &model.mu_vec)?;
    let var = quad_form(&model.sigma_mat, theta);
    Ok(-mean + beta * var / 2.0 - lambda.ln() / beta)
}

/// Exact gradient of the portfolio UBSR quadratic: `-mu + beta Sigma theta`.
pub fn portfolio_ubsr_grad(theta: &[f64], model: &PortfolioModel, beta: f64) -> Result<Vec<f64>> {
    if theta.len() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            got: theta.len(),
        });
    }
    Ok((0..model.dim())
        .map(|i| {
            -model.mu_vec[i]
                + beta
                    * model.sigma_mat[i]
                        .iter()
                        .zip(theta)
                        .map(|(s, t)| s * t)
                        .sum::<f64>()
        })
        .collect())
}

fn quad_form(mat: &[Vec<f64>], x: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (i, row) in mat.iter().enumerate() {
        for (j, m) in row.iter().enumerate() {
            acc += x[i] * m * x[j];
        }
    }
    acc
}

/// Minimizer of the portfolio UBSR quadratic over the box, by projected
/// gradient on the exact quadratic, run to gradient-map norm `<= 1e-10`.
///
/// For an interior optimum this equals `(beta Sigma)^{-1} mu`.
pub fn portfolio_argmin_oracle(model: &PortfolioModel, beta: f64) -> Result<Vec<f64>> {
    if !(beta > 0.0) {
        return Err(Error::InvalidParameter {
            name: "beta",
            value: beta,
        });
    }
    let d = model.dim();
    let step = 1.0 / (beta * model.sigma_lambda_max());
    let mut theta: Vec<f64> = (0..d)
        .map(|i| {
            let (lo, hi) = (model.theta_box.lo[i], model.theta_box.hi[i]);
            0.0f64.clamp(lo, hi)
        })
        .collect();
    const MAX_ITERS: usize = 1_000_000;
    for _ in 0..MAX_ITERS {
        let g = portfolio_ubsr_grad(&theta, model, beta)?;
        let next: Vec<f64> = (0..d)
            .map(|i| (theta[i] - step * g[i]).clamp(model.theta_box.lo[i], model.theta_box.hi[i]))
            .collect();
        let gm_norm = theta
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b) / step)
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt();
        theta = next;
        if gm_norm <= 1e-10 {
            return Ok(theta);
        }
    }
    Err(Error::NonConvergence(MAX_ITERS))
}
