//! The variational objective: reparameterized ELBO estimates and gradients
//! for a mean-field Gaussian posterior over the unconstrained parameters.

use ndarray::Array2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::data::{Dataset, OutcomeType};
use crate::error::{Error, Result};
use crate::inference::unconstrained::Layout;
use crate::model::{log_joint_and_grad, PopulationReference, PriorConfig};
use crate::util::LN_2PI;

/// Mean-field Gaussian over the flat parameter vector.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct VariationalPosterior {
    pub mean: Vec<f64>,
    pub log_sd: Vec<f64>,
}

impl VariationalPosterior {
    pub fn entropy(&self) -> f64 {
        let p = self.log_sd.len() as f64;
        self.log_sd.iter().sum::<f64>() + 0.5 * p * (1.0 + LN_2PI)
    }

    pub fn validate(&self) -> Result<()> {
        if self.mean.len() != self.log_sd.len() {
            return Err(Error::Schema("posterior mean and log_sd shapes differ".into()));
        }
        if self.log_sd.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidValue("log_sd must be finite".into()));
        }
        Ok(())
    }
}

/// Everything needed to evaluate the joint density at a flat vector:
/// the dataset (outcome already centered for continuous fits), population
/// reference, priors, the latent Cholesky factor, and the layout.
pub struct ModelContext<'a> {
    pub ds: &'a Dataset,
    pub popref: &'a PopulationReference,
    pub priors: &'a PriorConfig,
    pub outcome: OutcomeType,
    pub chol: &'a Array2<f64>,
    pub layout: Layout,
}

impl ModelContext<'_> {
    /// log p(D, constrain(z)) + log |Jacobian|, with the gradient written
    /// into `grad`.
    pub fn value_and_grad(&self, z: &[f64], grad: &mut [f64]) -> f64 {
        let (cp, logjac) = self.layout.constrain(z);
        let (value, jg) = log_joint_and_grad(
            self.ds,
            &cp.clusters,
            &cp.pi,
            cp.sigma0,
            cp.sigma1,
            self.chol,
            &cp.eta,
            self.popref,
            self.priors,
            self.outcome,
            self.layout.feature_selection,
        );
        self.layout.chain_gradient(&cp, &jg, grad);
        value + logjac
    }

    pub fn value(&self, z: &[f64]) -> f64 {
        let mut scratch = vec![0.0; z.len()];
        self.value_and_grad(z, &mut scratch)
    }
}

const MAX_RESAMPLES: usize = 5;

fn draw_eps(rng: &mut ChaCha8Rng, eps: &mut [f64]) {
    for e in eps.iter_mut() {
        *e = rng.sample(StandardNormal);
    }
}

/// Monte-Carlo ELBO estimate over `num_samples` reparameterized draws.
/// Deterministic given the seed; non-finite draws are resampled up to five
/// times before erroring.
pub fn elbo_estimate(
    q: &VariationalPosterior,
    ctx: &ModelContext,
    num_samples: usize,
    seed: u64,
) -> Result<f64> {
    q.validate()?;
    if num_samples == 0 {
        return Err(Error::InvalidValue("num_samples must be at least 1".into()));
    }
    let p = q.mean.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut eps = vec![0.0; p];
    let mut z = vec![0.0; p];
    let mut acc = 0.0;
    for s in 0..num_samples {
        let mut value = f64::NAN;
        for _ in 0..=MAX_RESAMPLES {
            draw_eps(&mut rng, &mut eps);
            for i in 0..p {
                z[i] = q.mean[i] + q.log_sd[i].exp() * eps[i];
            }
            value = ctx.value(&z);
            if value.is_finite() {
                break;
            }
        }
        if !value.is_finite() {
            return Err(Error::Numerics(format!(
                "ELBO draw {s} stayed non-finite after {MAX_RESAMPLES} resamples"
            )));
        }
        acc += value;
    }
    Ok(acc / num_samples as f64 + q.entropy())
}

/// Gradient of the ELBO with respect to the variational mean and log-sd,
/// estimated with the reparameterization trick under common random numbers.
/// Returns (elbo, d/d mean, d/d log_sd).
pub fn elbo_gradient(
    q: &VariationalPosterior,
    ctx: &ModelContext,
    num_samples: usize,
    seed: u64,
) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    q.validate()?;
    if num_samples == 0 {
        return Err(Error::InvalidValue("num_samples must be at least 1".into()));
    }
    let p = q.mean.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut eps = vec![0.0; p];
    let mut z = vec![0.0; p];
    let mut g = vec![0.0; p];
    let mut g_mean = vec![0.0; p];
    let mut g_log_sd = vec![0.0; p];
    let mut acc = 0.0;
    for s in 0..num_samples {
        let mut value = f64::NAN;
        for _ in 0..=MAX_RESAMPLES {
            draw_eps(&mut rng, &mut eps);
            for i in 0..p {
                z[i] = q.mean[i] + q.log_sd[i].exp() * eps[i];
            }
            value = ctx.value_and_grad(&z, &mut g);
            if value.is_finite() && g.iter().all(|v| v.is_finite()) {
                break;
            }
            value = f64::NAN;
        }
        if !value.is_finite() {
            return Err(Error::Numerics(format!(
                "ELBO gradient draw {s} stayed non-finite after {MAX_RESAMPLES} resamples"
            )));
        }
        acc += value;
        for i in 0..p {
            g_mean[i] += g[i];
            g_log_sd[i] += g[i] * eps[i] * q.log_sd[i].exp();
        }
    }
    let inv = 1.0 / num_samples as f64;
    for i in 0..p {
        g_mean[i] *= inv;
        // Entropy contributes +1 to every log-sd coordinate.
        g_log_sd[i] = g_log_sd[i] * inv + 1.0;
    }
    Ok((acc * inv + q.entropy(), g_mean, g_log_sd))
}
