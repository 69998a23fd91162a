//! The supervised causal mixture density: per-cluster covariate likelihoods
//! with soft feature selection, arm-dependent outcome likelihoods under
//! continuous and binary outcomes, priors, and the full log joint.
//!
//! Gradients with respect to every constrained parameter are computed
//! analytically alongside the value; the variational layer chains them
//! through its transforms.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::data::{ColumnKind, Dataset, OutcomeType};
use crate::error::{Error, Result};
use crate::gp::{GpHyper, GpLatent};
use crate::linalg::{lower_matvec, lower_transpose_matvec};
use crate::util::{
    beta_logpdf, dirichlet_sym_logpdf, half_normal_logpdf, logsumexp, normal_logpdf, sigmoid,
    softplus, LN_2PI,
};

/// Per-cluster parameters. All vectors have length D (the encoded dimension);
/// only the entries matching each column's kind are consulted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterParams {
    pub theta_mu: Vec<f64>,
    pub theta_sd: Vec<f64>,
    pub theta_p: Vec<f64>,
    pub gamma: Vec<f64>,
    pub beta: f64,
}

impl ClusterParams {
    pub fn validate(&self, kinds: &[ColumnKind]) -> Result<()> {
        let d = kinds.len();
        if [&self.theta_mu, &self.theta_sd, &self.theta_p, &self.gamma]
            .iter()
            .any(|v| v.len() != d)
        {
            return Err(Error::Schema("cluster parameter vectors must have length D".into()));
        }
        for (j, kind) in kinds.iter().enumerate() {
            match kind {
                ColumnKind::Continuous => {
                    if self.theta_sd[j] <= 0.0 {
                        return Err(Error::InvalidValue("theta_sd must be positive".into()));
                    }
                }
                ColumnKind::Binary => {
                    if self.theta_p[j] <= 0.0 || self.theta_p[j] >= 1.0 {
                        return Err(Error::InvalidValue("theta_p must lie in (0,1)".into()));
                    }
                }
            }
            if self.gamma[j] <= 0.0 || self.gamma[j] >= 1.0 {
                return Err(Error::InvalidValue("gamma must lie in (0,1)".into()));
            }
        }
        Ok(())
    }
}

/// Population-level reference values the selection weights shrink toward:
/// sample means of continuous dimensions and prevalences of binary ones,
/// computed on the fitting split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationReference {
    pub theta0_mu: Vec<f64>,
    pub theta0_p: Vec<f64>,
}

impl PopulationReference {
    pub fn from_dataset(ds: &Dataset) -> Self {
        let n = ds.n() as f64;
        let d = ds.d();
        let mut theta0_mu = vec![0.0; d];
        let mut theta0_p = vec![0.0; d];
        for j in 0..d {
            let mean = ds.x.column(j).sum() / n;
            match ds.column_kinds[j] {
                ColumnKind::Continuous => theta0_mu[j] = mean,
                // Keep prevalences interior so Bernoulli logs stay finite.
                ColumnKind::Binary => theta0_p[j] = mean.clamp(1e-6, 1.0 - 1e-6),
            }
        }
        Self { theta0_mu, theta0_p }
    }
}

/// Parameters shared across clusters.
#[derive(Debug, Clone)]
pub struct GlobalParams {
    pub pi: Vec<f64>,
    /// Arm noise scales; ignored for binary outcomes.
    pub sigma0: f64,
    pub sigma1: f64,
    pub gp_latent: GpLatent,
    pub gp_hyper: GpHyper,
}

impl GlobalParams {
    pub fn validate(&self) -> Result<()> {
        let s: f64 = self.pi.iter().sum();
        if (s - 1.0).abs() > 1e-10 || self.pi.iter().any(|&p| p <= 0.0) {
            return Err(Error::InvalidValue("pi must be a strictly positive simplex".into()));
        }
        if self.sigma0 <= 0.0 || self.sigma1 <= 0.0 {
            return Err(Error::InvalidValue("noise scales must be positive".into()));
        }
        Ok(())
    }
}

fn default_beta_prior_mean() -> Vec<f64> {
    Vec::new()
}
fn default_beta_prior_sd() -> f64 {
    1.0
}
fn default_sigma_hn_sd() -> f64 {
    0.01
}
fn default_gamma_a() -> f64 {
    0.5
}
fn default_gamma_b() -> f64 {
    0.5
}
fn default_pi_conc() -> f64 {
    1.0
}
fn default_theta_mu_sd() -> f64 {
    10.0
}
fn default_theta_sd_hn() -> f64 {
    5.0
}
fn default_theta_p_ab() -> f64 {
    1.0
}

/// Prior hyperparameters. Defaults follow the reference configuration:
/// standard-normal treatment effects, half-normal(0.01) noise scales,
/// Beta(0.5, 0.5) selection weights, flat Dirichlet mixture weights, and
/// broad proper priors on the cluster covariate parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PriorConfig {
    /// Per-cluster prior means for the treatment effects; empty means all 0.
    pub beta_prior_mean: Vec<f64>,
    pub beta_prior_sd: f64,
    pub sigma_halfnormal_sd: f64,
    pub gamma_beta_a: f64,
    pub gamma_beta_b: f64,
    pub pi_dirichlet_conc: f64,
    pub theta_mu_prior_sd: f64,
    pub theta_sd_halfnormal_sd: f64,
    pub theta_p_beta_a: f64,
    pub theta_p_beta_b: f64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self {
            beta_prior_mean: default_beta_prior_mean(),
            beta_prior_sd: default_beta_prior_sd(),
            sigma_halfnormal_sd: default_sigma_hn_sd(),
            gamma_beta_a: default_gamma_a(),
            gamma_beta_b: default_gamma_b(),
            pi_dirichlet_conc: default_pi_conc(),
            theta_mu_prior_sd: default_theta_mu_sd(),
            theta_sd_halfnormal_sd: default_theta_sd_hn(),
            theta_p_beta_a: default_theta_p_ab(),
            theta_p_beta_b: default_theta_p_ab(),
        }
    }
}

impl PriorConfig {
    pub fn validate(&self, k: usize) -> Result<()> {
        if !self.beta_prior_mean.is_empty() && self.beta_prior_mean.len() != k {
            return Err(Error::Schema(format!(
                "beta_prior_mean has {} entries, expected {k} (or empty for zeros)",
                self.beta_prior_mean.len()
            )));
        }
        let positive = [
            self.beta_prior_sd,
            self.sigma_halfnormal_sd,
            self.gamma_beta_a,
            self.gamma_beta_b,
            self.pi_dirichlet_conc,
            self.theta_mu_prior_sd,
            self.theta_sd_halfnormal_sd,
            self.theta_p_beta_a,
            self.theta_p_beta_b,
        ];
        if positive.iter().any(|&v| v <= 0.0 || !v.is_finite()) {
            return Err(Error::InvalidValue("prior hyperparameters must be positive".into()));
        }
        Ok(())
    }

    pub fn beta_mean(&self, k: usize) -> f64 {
        self.beta_prior_mean.get(k).copied().unwrap_or(0.0)
    }
}

/// Composite blend of a cluster parameter toward its population reference:
/// gamma * theta_k + (1 - gamma) * theta_0.
pub fn composite_blend(theta_k: f64, theta_0: f64, gamma: f64) -> f64 {
    gamma * theta_k + (1.0 - gamma) * theta_0
}

/// Log density of one covariate row under one cluster.
pub fn covariate_loglik(
    x: &[f64],
    params: &ClusterParams,
    popref: &PopulationReference,
    kinds: &[ColumnKind],
    feature_selection: bool,
) -> Result<f64> {
    let mut ll = 0.0;
    for (j, kind) in kinds.iter().enumerate() {
        match kind {
            ColumnKind::Continuous => {
                let m = if feature_selection {
                    composite_blend(params.theta_mu[j], popref.theta0_mu[j], params.gamma[j])
                } else {
                    params.theta_mu[j]
                };
                ll += normal_logpdf(x[j], m, params.theta_sd[j]);
            }
            ColumnKind::Binary => {
                if x[j] != 0.0 && x[j] != 1.0 {
                    return Err(Error::InvalidValue(format!(
                        "binary covariate value {} is not 0/1",
                        x[j]
                    )));
                }
                let p = if feature_selection {
                    composite_blend(params.theta_p[j], popref.theta0_p[j], params.gamma[j])
                } else {
                    params.theta_p[j]
                };
                ll += if x[j] == 1.0 { p.ln() } else { (1.0 - p).ln() };
            }
        }
    }
    Ok(ll)
}

/// Log density of an observed outcome given arm, control surface value, and
/// the cluster's treatment effect.
pub fn outcome_loglik(
    y: f64,
    a: u8,
    mu0: f64,
    tau_k: f64,
    sigma0: f64,
    sigma1: f64,
    outcome_type: OutcomeType,
) -> Result<f64> {
    if !y.is_finite() || !mu0.is_finite() || !tau_k.is_finite() {
        return Err(Error::Numerics("non-finite outcome inputs".into()));
    }
    let af = a as f64;
    match outcome_type {
        OutcomeType::Continuous => {
            let sd = if a == 1 { sigma1 } else { sigma0 };
            Ok(normal_logpdf(y, mu0 + af * tau_k, sd))
        }
        OutcomeType::Binary { .. } => {
            if y != 0.0 && y != 1.0 {
                return Err(Error::InvalidValue("binary outcome must be 0/1".into()));
            }
            let m = mu0 + af * tau_k;
            Ok(y * m - softplus(m))
        }
    }
}

/// Precomputed per-(cluster, dimension) likelihood terms.
struct BlendCache {
    d: usize,
    /// continuous dims: (blended mean, 1/sd^2, -ln sd - 0.5 ln 2pi)
    cont: Vec<(f64, f64, f64)>,
    /// binary dims: (blended p, ln p, ln(1-p))
    bin: Vec<(f64, f64, f64)>,
    log_pi: Vec<f64>,
}

impl BlendCache {
    fn new(
        params: &[ClusterParams],
        pi: &[f64],
        popref: &PopulationReference,
        kinds: &[ColumnKind],
        feature_selection: bool,
    ) -> Self {
        let k = params.len();
        let d = kinds.len();
        let mut cont = vec![(0.0, 0.0, 0.0); k * d];
        let mut bin = vec![(0.0, 0.0, 0.0); k * d];
        for (ki, p) in params.iter().enumerate() {
            for (j, kind) in kinds.iter().enumerate() {
                let idx = ki * d + j;
                match kind {
                    ColumnKind::Continuous => {
                        let m = if feature_selection {
                            composite_blend(p.theta_mu[j], popref.theta0_mu[j], p.gamma[j])
                        } else {
                            p.theta_mu[j]
                        };
                        let sd = p.theta_sd[j];
                        cont[idx] = (m, 1.0 / (sd * sd), -sd.ln() - 0.5 * LN_2PI);
                    }
                    ColumnKind::Binary => {
                        let pb = if feature_selection {
                            composite_blend(p.theta_p[j], popref.theta0_p[j], p.gamma[j])
                        } else {
                            p.theta_p[j]
                        };
                        bin[idx] = (pb, pb.ln(), (1.0 - pb).ln());
                    }
                }
            }
        }
        let log_pi = pi.iter().map(|&w| w.ln()).collect();
        Self { d, cont, bin, log_pi }
    }

    #[inline]
    fn row_loglik(&self, x: &[f64], kinds: &[ColumnKind], ki: usize) -> f64 {
        let base = ki * self.d;
        let mut ll = self.log_pi[ki];
        for (j, kind) in kinds.iter().enumerate() {
            match kind {
                ColumnKind::Continuous => {
                    let (m, inv_var, c) = self.cont[base + j];
                    let z = x[j] - m;
                    ll += c - 0.5 * z * z * inv_var;
                }
                ColumnKind::Binary => {
                    let (_, lp, l1p) = self.bin[base + j];
                    ll += if x[j] == 1.0 { lp } else { l1p };
                }
            }
        }
        ll
    }
}

/// N x K matrix of per-point, per-cluster log masses:
/// log pi_k + covariate term, plus the outcome term when requested.
///
/// With `include_outcome = false` this is the covariate-only matrix used for
/// test-time assignment.
pub fn pointwise_cluster_logliks(
    ds: &Dataset,
    params: &[ClusterParams],
    globals: &GlobalParams,
    popref: &PopulationReference,
    outcome_type: OutcomeType,
    include_outcome: bool,
    feature_selection: bool,
) -> Result<Array2<f64>> {
    let n = ds.n();
    let k = params.len();
    if globals.pi.len() != k {
        return Err(Error::Schema("pi length must match the number of clusters".into()));
    }
    for p in params {
        p.validate(&ds.column_kinds)?;
    }
    globals.validate()?;
    if include_outcome && globals.gp_latent.n() != n {
        return Err(Error::Schema(format!(
            "GP latent covers {} rows, dataset has {n}",
            globals.gp_latent.n()
        )));
    }
    let cache = BlendCache::new(params, &globals.pi, popref, &ds.column_kinds, feature_selection);
    let xs = ds.x.as_slice().expect("contiguous design matrix");
    let d = ds.d();
    let mut out = Array2::<f64>::zeros((n, k));
    for i in 0..n {
        let row = &xs[i * d..(i + 1) * d];
        for ki in 0..k {
            let mut ll = cache.row_loglik(row, &ds.column_kinds, ki);
            if include_outcome {
                ll += outcome_loglik(
                    ds.y[i],
                    ds.a[i],
                    globals.gp_latent.values[i],
                    params[ki].beta,
                    globals.sigma0,
                    globals.sigma1,
                    outcome_type,
                )?;
            }
            out[[i, ki]] = ll;
        }
    }
    Ok(out)
}

/// Row-wise softmax of a log-mass matrix; each output row sums to 1.
pub fn responsibilities(pointwise: &Array2<f64>) -> Array2<f64> {
    let (n, k) = pointwise.dim();
    let mut out = Array2::<f64>::zeros((n, k));
    let mut row = vec![0.0; k];
    for i in 0..n {
        for j in 0..k {
            row[j] = pointwise[[i, j]];
        }
        let lse = logsumexp(&row);
        for j in 0..k {
            out[[i, j]] = (row[j] - lse).exp();
        }
    }
    out
}

/// Data log likelihood: sum over rows of logsumexp over clusters.
pub fn log_likelihood(
    ds: &Dataset,
    params: &[ClusterParams],
    globals: &GlobalParams,
    popref: &PopulationReference,
    outcome_type: OutcomeType,
    feature_selection: bool,
) -> Result<f64> {
    let pw = pointwise_cluster_logliks(ds, params, globals, popref, outcome_type, true, feature_selection)?;
    let k = params.len();
    let mut row = vec![0.0; k];
    let mut total = 0.0;
    for i in 0..ds.n() {
        for j in 0..k {
            row[j] = pw[[i, j]];
        }
        total += logsumexp(&row);
    }
    Ok(total)
}

/// Log prior over all parameters, including the whitened GP vector.
/// Normalization constants are kept everywhere.
pub fn log_prior(
    params: &[ClusterParams],
    globals: &GlobalParams,
    popref: &PopulationReference,
    priors: &PriorConfig,
    kinds: &[ColumnKind],
    outcome_type: OutcomeType,
    feature_selection: bool,
) -> f64 {
    let mut lp = dirichlet_sym_logpdf(&globals.pi, priors.pi_dirichlet_conc);
    for (ki, p) in params.iter().enumerate() {
        lp += normal_logpdf(p.beta, priors.beta_mean(ki), priors.beta_prior_sd);
        for (j, kind) in kinds.iter().enumerate() {
            match kind {
                ColumnKind::Continuous => {
                    lp += normal_logpdf(p.theta_mu[j], popref.theta0_mu[j], priors.theta_mu_prior_sd);
                    lp += half_normal_logpdf(p.theta_sd[j], priors.theta_sd_halfnormal_sd);
                }
                ColumnKind::Binary => {
                    lp += beta_logpdf(p.theta_p[j], priors.theta_p_beta_a, priors.theta_p_beta_b);
                }
            }
            if feature_selection {
                lp += beta_logpdf(p.gamma[j], priors.gamma_beta_a, priors.gamma_beta_b);
            }
        }
    }
    if !outcome_type.is_binary() {
        lp += half_normal_logpdf(globals.sigma0, priors.sigma_halfnormal_sd);
        lp += half_normal_logpdf(globals.sigma1, priors.sigma_halfnormal_sd);
    }
    for &e in &globals.gp_latent.whitened {
        lp += normal_logpdf(e, 0.0, 1.0);
    }
    lp
}

/// Full log joint: data likelihood plus prior.
pub fn log_joint(
    ds: &Dataset,
    params: &[ClusterParams],
    globals: &GlobalParams,
    popref: &PopulationReference,
    priors: &PriorConfig,
    outcome_type: OutcomeType,
    feature_selection: bool,
) -> Result<f64> {
    let ll = log_likelihood(ds, params, globals, popref, outcome_type, feature_selection)?;
    let lp = log_prior(params, globals, popref, priors, &ds.column_kinds, outcome_type, feature_selection);
    let total = ll + lp;
    if !total.is_finite() {
        return Err(Error::Numerics(format!(
            "log joint is non-finite (likelihood {ll}, prior {lp})"
        )));
    }
    Ok(total)
}

/// Gradient of the log joint with respect to the constrained parameters.
/// Matrices are K x D; `eta` is the whitened GP vector's gradient.
#[derive(Debug, Clone)]
pub struct JointGrad {
    pub pi: Vec<f64>,
    pub theta_mu: Array2<f64>,
    pub theta_sd: Array2<f64>,
    pub theta_p: Array2<f64>,
    pub gamma: Array2<f64>,
    pub beta: Vec<f64>,
    pub sigma0: f64,
    pub sigma1: f64,
    pub eta: Vec<f64>,
}

impl JointGrad {
    fn zeros(k: usize, d: usize, n: usize) -> Self {
        Self {
            pi: vec![0.0; k],
            theta_mu: Array2::zeros((k, d)),
            theta_sd: Array2::zeros((k, d)),
            theta_p: Array2::zeros((k, d)),
            gamma: Array2::zeros((k, d)),
            beta: vec![0.0; k],
            sigma0: 0.0,
            sigma1: 0.0,
            eta: vec![0.0; n],
        }
    }
}

/// Value and gradient of the log joint, with the GP latent expressed through
/// its whitened coordinates: mu0 = L eta.
///
/// This is the inner evaluation of the variational objective, so it avoids
/// re-validating inputs; callers are expected to supply interior-point
/// parameters (the constraining transforms guarantee this).
#[allow(clippy::too_many_arguments)]
pub fn log_joint_and_grad(
    ds: &Dataset,
    params: &[ClusterParams],
    pi: &[f64],
    sigma0: f64,
    sigma1: f64,
    latent_chol: &Array2<f64>,
    eta: &[f64],
    popref: &PopulationReference,
    priors: &PriorConfig,
    outcome_type: OutcomeType,
    feature_selection: bool,
) -> (f64, JointGrad) {
    let n = ds.n();
    let d = ds.d();
    let k = params.len();
    let binary = outcome_type.is_binary();
    let mut grad = JointGrad::zeros(k, d, n);

    let mut mu0 = vec![0.0; n];
    lower_matvec(latent_chol, eta, &mut mu0);

    let cache = BlendCache::new(params, pi, popref, &ds.column_kinds, feature_selection);
    let xs = ds.x.as_slice().expect("contiguous design matrix");
    let inv_var0 = 1.0 / (sigma0 * sigma0);
    let inv_var1 = 1.0 / (sigma1 * sigma1);
    let lns0 = sigma0.ln();
    let lns1 = sigma1.ln();

    let mut value = 0.0;
    let mut dmu0 = vec![0.0; n];
    let mut lls = vec![0.0; k];
    let mut resp = vec![0.0; k];

    for i in 0..n {
        let row = &xs[i * d..(i + 1) * d];
        let (a, y) = (ds.a[i], ds.y[i]);
        let af = a as f64;
        for ki in 0..k {
            let mut ll = cache.row_loglik(row, &ds.column_kinds, ki);
            let m = mu0[i] + af * params[ki].beta;
            ll += if binary {
                y * m - softplus(m)
            } else if a == 1 {
                let z = y - m;
                -0.5 * LN_2PI - lns1 - 0.5 * z * z * inv_var1
            } else {
                let z = y - m;
                -0.5 * LN_2PI - lns0 - 0.5 * z * z * inv_var0
            };
            lls[ki] = ll;
        }
        let lse = logsumexp(&lls);
        value += lse;
        for ki in 0..k {
            resp[ki] = (lls[ki] - lse).exp();
        }

        for ki in 0..k {
            let r = resp[ki];
            if r == 0.0 {
                continue;
            }
            let p = &params[ki];
            grad.pi[ki] += r / pi[ki];
            let base = ki * d;
            for (j, kind) in ds.column_kinds.iter().enumerate() {
                match kind {
                    ColumnKind::Continuous => {
                        let (m, inv_var, _) = cache.cont[base + j];
                        let z = row[j] - m;
                        let dmean = r * z * inv_var;
                        if feature_selection {
                            grad.theta_mu[[ki, j]] += dmean * p.gamma[j];
                            grad.gamma[[ki, j]] += dmean * (p.theta_mu[j] - popref.theta0_mu[j]);
                        } else {
                            grad.theta_mu[[ki, j]] += dmean;
                        }
                        let sd = p.theta_sd[j];
                        grad.theta_sd[[ki, j]] += r * (z * z * inv_var - 1.0) / sd;
                    }
                    ColumnKind::Binary => {
                        let (pb, _, _) = cache.bin[base + j];
                        let dp = if row[j] == 1.0 { r / pb } else { -r / (1.0 - pb) };
                        if feature_selection {
                            grad.theta_p[[ki, j]] += dp * p.gamma[j];
                            grad.gamma[[ki, j]] += dp * (p.theta_p[j] - popref.theta0_p[j]);
                        } else {
                            grad.theta_p[[ki, j]] += dp;
                        }
                    }
                }
            }
            // Outcome terms.
            let m = mu0[i] + af * p.beta;
            if binary {
                let dm = r * (y - sigmoid(m));
                dmu0[i] += dm;
                grad.beta[ki] += dm * af;
            } else {
                let (inv_var, _sd) = if a == 1 { (inv_var1, sigma1) } else { (inv_var0, sigma0) };
                let z = y - m;
                let dm = r * z * inv_var;
                dmu0[i] += dm;
                grad.beta[ki] += dm * af;
                let dsd = r * (z * z * inv_var - 1.0);
                if a == 1 {
                    grad.sigma1 += dsd / sigma1;
                } else {
                    grad.sigma0 += dsd / sigma0;
                }
            }
        }
    }

    // Chain the control-surface gradient through mu0 = L eta, then add the
    // standard-normal prior on eta.
    lower_transpose_matvec(latent_chol, &dmu0, &mut grad.eta);
    for i in 0..n {
        grad.eta[i] -= eta[i];
        value += normal_logpdf(eta[i], 0.0, 1.0);
    }

    // Priors on the remaining parameters.
    value += dirichlet_sym_logpdf(pi, priors.pi_dirichlet_conc);
    for ki in 0..k {
        grad.pi[ki] += (priors.pi_dirichlet_conc - 1.0) / pi[ki];
    }
    for (ki, p) in params.iter().enumerate() {
        let bm = priors.beta_mean(ki);
        value += normal_logpdf(p.beta, bm, priors.beta_prior_sd);
        grad.beta[ki] -= (p.beta - bm) / (priors.beta_prior_sd * priors.beta_prior_sd);
        for (j, kind) in ds.column_kinds.iter().enumerate() {
            match kind {
                ColumnKind::Continuous => {
                    value += normal_logpdf(p.theta_mu[j], popref.theta0_mu[j], priors.theta_mu_prior_sd);
                    grad.theta_mu[[ki, j]] -= (p.theta_mu[j] - popref.theta0_mu[j])
                        / (priors.theta_mu_prior_sd * priors.theta_mu_prior_sd);
                    value += half_normal_logpdf(p.theta_sd[j], priors.theta_sd_halfnormal_sd);
                    grad.theta_sd[[ki, j]] -= p.theta_sd[j]
                        / (priors.theta_sd_halfnormal_sd * priors.theta_sd_halfnormal_sd);
                }
                ColumnKind::Binary => {
                    value += beta_logpdf(p.theta_p[j], priors.theta_p_beta_a, priors.theta_p_beta_b);
                    grad.theta_p[[ki, j]] += (priors.theta_p_beta_a - 1.0) / p.theta_p[j]
                        - (priors.theta_p_beta_b - 1.0) / (1.0 - p.theta_p[j]);
                }
            }
            if feature_selection {
                value += beta_logpdf(p.gamma[j], priors.gamma_beta_a, priors.gamma_beta_b);
                grad.gamma[[ki, j]] += (priors.gamma_beta_a - 1.0) / p.gamma[j]
                    - (priors.gamma_beta_b - 1.0) / (1.0 - p.gamma[j]);
            }
        }
    }
    if !binary {
        value += half_normal_logpdf(sigma0, priors.sigma_halfnormal_sd);
        value += half_normal_logpdf(sigma1, priors.sigma_halfnormal_sd);
        let inv = 1.0 / (priors.sigma_halfnormal_sd * priors.sigma_halfnormal_sd);
        grad.sigma0 -= sigma0 * inv;
        grad.sigma1 -= sigma1 * inv;
    }

    (value, grad)
}
