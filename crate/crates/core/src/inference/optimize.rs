//! Stochastic gradient ascent on the ELBO with per-coordinate adaptive step
//! sizes (decaying average of squared gradients) and a smoothed-trace
//! stopping rule.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::util::LN_2PI;

#[derive(Debug, Clone)]
pub struct OptOptions {
    pub max_iters: usize,
    pub base_step: f64,
    pub mc_samples: usize,
    pub smooth_window: usize,
    pub conv_window: usize,
    pub conv_rel_tol: f64,
}

impl Default for OptOptions {
    fn default() -> Self {
        Self {
            max_iters: 5000,
            base_step: 0.05,
            mc_samples: 1,
            smooth_window: 50,
            conv_window: 200,
            conv_rel_tol: 1e-5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OptRun {
    pub mean: Vec<f64>,
    pub log_sd: Vec<f64>,
    pub smoothed_trace: Vec<f64>,
    pub final_elbo: f64,
    pub iterations: usize,
}

const RMS_DECAY: f64 = 0.9;
const RMS_EPS: f64 = 1e-8;
const MAX_RESAMPLES: usize = 5;

/// Maximize the ELBO of a mean-field Gaussian over the objective
/// `value_and_grad(z, grad) -> g(z)` where g is the log joint plus the
/// transform Jacobian. The per-iteration ELBO sample is smoothed with a
/// moving window; optimization stops when the smoothed value's relative
/// change over `conv_window` iterations falls below `conv_rel_tol`.
pub fn optimize_elbo<F>(
    value_and_grad: F,
    mean0: Vec<f64>,
    log_sd0: Vec<f64>,
    opts: &OptOptions,
    rng: &mut ChaCha8Rng,
) -> Result<OptRun>
where
    F: Fn(&[f64], &mut [f64]) -> f64,
{
    let p = mean0.len();
    if log_sd0.len() != p {
        return Err(Error::Schema("mean and log_sd lengths differ".into()));
    }
    let mut mean = mean0;
    let mut log_sd = log_sd0;
    let mut s_mean = vec![0.0; p];
    let mut s_log_sd = vec![0.0; p];
    let mut eps = vec![0.0; p];
    let mut z = vec![0.0; p];
    let mut g = vec![0.0; p];
    let mut g_mean = vec![0.0; p];
    let mut g_log_sd = vec![0.0; p];

    let entropy_const = 0.5 * (1.0 + LN_2PI) * p as f64;
    let mut window: std::collections::VecDeque<f64> =
        std::collections::VecDeque::with_capacity(opts.smooth_window);
    let mut window_sum = 0.0;
    let mut smoothed_trace = Vec::with_capacity(opts.max_iters.min(1 << 20));
    let mut iterations = 0;

    for t in 0..opts.max_iters {
        iterations = t + 1;
        g_mean.iter_mut().for_each(|v| *v = 0.0);
        g_log_sd.iter_mut().for_each(|v| *v = 0.0);
        let mut val_acc = 0.0;
        for _ in 0..opts.mc_samples {
            let mut value = f64::NAN;
            for _ in 0..=MAX_RESAMPLES {
                for i in 0..p {
                    eps[i] = rng.sample(StandardNormal);
                    z[i] = mean[i] + log_sd[i].exp() * eps[i];
                }
                value = value_and_grad(&z, &mut g);
                if value.is_finite() && g.iter().all(|v| v.is_finite()) {
                    break;
                }
                value = f64::NAN;
            }
            if !value.is_finite() {
                return Err(Error::Numerics(format!(
                    "objective stayed non-finite at iteration {t} after {MAX_RESAMPLES} resamples"
                )));
            }
            val_acc += value;
            for i in 0..p {
                g_mean[i] += g[i];
                g_log_sd[i] += g[i] * eps[i] * log_sd[i].exp();
            }
        }
        let inv = 1.0 / opts.mc_samples as f64;
        let entropy: f64 = log_sd.iter().sum::<f64>() + entropy_const;
        let elbo_sample = val_acc * inv + entropy;
        let lr = opts.base_step / (1.0 + t as f64 / 1000.0).powf(0.7);
        for i in 0..p {
            let gm = g_mean[i] * inv;
            let gs = g_log_sd[i] * inv + 1.0;
            s_mean[i] = RMS_DECAY * s_mean[i] + (1.0 - RMS_DECAY) * gm * gm;
            s_log_sd[i] = RMS_DECAY * s_log_sd[i] + (1.0 - RMS_DECAY) * gs * gs;
            mean[i] += lr * gm / (s_mean[i].sqrt() + RMS_EPS);
            log_sd[i] += lr * gs / (s_log_sd[i].sqrt() + RMS_EPS);
        }

        if window.len() == opts.smooth_window {
            window_sum -= window.pop_front().unwrap();
        }
        window.push_back(elbo_sample);
        window_sum += elbo_sample;
        let smoothed = window_sum / window.len() as f64;
        smoothed_trace.push(smoothed);

        if t >= opts.conv_window && t >= opts.smooth_window {
            let prev = smoothed_trace[t - opts.conv_window];
            if ((smoothed - prev) / (smoothed.abs() + 1e-12)).abs() < opts.conv_rel_tol {
                break;
            }
        }
    }

    let final_elbo = *smoothed_trace.last().ok_or_else(|| {
        Error::Numerics("optimizer produced an empty trace (max_iters = 0?)".into())
    })?;
    Ok(OptRun { mean, log_sd, smoothed_trace, final_elbo, iterations })
}
