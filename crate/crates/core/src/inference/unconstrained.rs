//! Transform between constrained model parameters and the flat real vector
//! the variational family works on.
//!
//! Layout (contiguous slices, in order): softmax logits for pi (K-1 entries,
//! last cluster pinned at 0); theta_mu for continuous dims; log theta_sd for
//! continuous dims; logit theta_p for binary dims; logit gamma for every dim
//! (feature selection only); beta; log sigma0 and log sigma1 (continuous
//! outcome only); whitened GP vector eta (N entries).
//!
//! The log-Jacobian of the constraining map is part of the variational
//! objective.

use crate::data::ColumnKind;
use crate::model::ClusterParams;
use crate::util::{logit, sigmoid};

/// Sigmoid outputs are clamped to this interior margin so downstream logs
/// stay finite.
const P_EPS: f64 = 1e-12;
/// Box on log-scale coordinates before exponentiation.
const LOG_CLAMP: f64 = 40.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub k: usize,
    pub d: usize,
    pub n: usize,
    pub cont_dims: Vec<usize>,
    pub bin_dims: Vec<usize>,
    pub feature_selection: bool,
    pub has_sigmas: bool,
    off_pi: usize,
    off_theta_mu: usize,
    off_theta_log_sd: usize,
    off_theta_logit_p: usize,
    off_gamma: usize,
    off_beta: usize,
    off_log_sigma0: usize,
    off_log_sigma1: usize,
    off_eta: usize,
    len: usize,
}

/// Constrained parameters unpacked from one point of the flat vector.
#[derive(Debug, Clone)]
pub struct ConstrainedParams {
    pub clusters: Vec<ClusterParams>,
    pub pi: Vec<f64>,
    pub sigma0: f64,
    pub sigma1: f64,
    pub eta: Vec<f64>,
}

impl Layout {
    pub fn new(
        k: usize,
        kinds: &[ColumnKind],
        n: usize,
        feature_selection: bool,
        has_sigmas: bool,
    ) -> Layout {
        let d = kinds.len();
        let cont_dims: Vec<usize> = (0..d).filter(|&j| kinds[j] == ColumnKind::Continuous).collect();
        let bin_dims: Vec<usize> = (0..d).filter(|&j| kinds[j] == ColumnKind::Binary).collect();
        let nc = cont_dims.len();
        let nb = bin_dims.len();

        let off_pi = 0;
        let off_theta_mu = off_pi + (k - 1);
        let off_theta_log_sd = off_theta_mu + k * nc;
        let off_theta_logit_p = off_theta_log_sd + k * nc;
        let off_gamma = off_theta_logit_p + k * nb;
        let off_beta = off_gamma + if feature_selection { k * d } else { 0 };
        let off_log_sigma0 = off_beta + k;
        let off_log_sigma1 = off_log_sigma0 + usize::from(has_sigmas);
        let off_eta = off_log_sigma1 + usize::from(has_sigmas);
        let len = off_eta + n;

        Layout {
            k,
            d,
            n,
            cont_dims,
            bin_dims,
            feature_selection,
            has_sigmas,
            off_pi,
            off_theta_mu,
            off_theta_log_sd,
            off_theta_logit_p,
            off_gamma,
            off_beta,
            off_log_sigma0,
            off_log_sigma1,
            off_eta,
            len,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn eta_range(&self) -> std::ops::Range<usize> {
        self.off_eta..self.off_eta + self.n
    }

    pub fn beta_range(&self) -> std::ops::Range<usize> {
        self.off_beta..self.off_beta + self.k
    }

    pub fn gamma_range(&self) -> Option<std::ops::Range<usize>> {
        self.feature_selection
            .then(|| self.off_gamma..self.off_gamma + self.k * self.d)
    }

    /// Map the flat vector to constrained parameters, returning the
    /// log-Jacobian of the transform as well.
    pub fn constrain(&self, z: &[f64]) -> (ConstrainedParams, f64) {
        debug_assert_eq!(z.len(), self.len);
        let (k, d) = (self.k, self.d);
        let nc = self.cont_dims.len();
        let nb = self.bin_dims.len();
        let mut logjac = 0.0;

        // pi via softmax with the last logit pinned at zero.
        let mut pi = vec![0.0; k];
        {
            let mut mx = 0.0f64;
            for i in 0..k - 1 {
                mx = mx.max(z[self.off_pi + i]);
            }
            let mut s = (-mx).exp();
            for i in 0..k - 1 {
                pi[i] = (z[self.off_pi + i] - mx).exp();
                s += pi[i];
            }
            pi[k - 1] = (-mx).exp();
            for p in pi.iter_mut() {
                *p /= s;
                logjac += p.ln();
            }
        }

        let mut clusters = Vec::with_capacity(k);
        for ki in 0..k {
            let mut theta_mu = vec![0.0; d];
            let mut theta_sd = vec![1.0; d];
            let mut theta_p = vec![0.5; d];
            let mut gamma = vec![if self.feature_selection { 0.5 } else { 1.0 }; d];
            for (c, &j) in self.cont_dims.iter().enumerate() {
                theta_mu[j] = z[self.off_theta_mu + ki * nc + c];
                let v = z[self.off_theta_log_sd + ki * nc + c].clamp(-LOG_CLAMP, LOG_CLAMP);
                theta_sd[j] = v.exp();
                logjac += v;
            }
            for (b, &j) in self.bin_dims.iter().enumerate() {
                let w = z[self.off_theta_logit_p + ki * nb + b];
                let p = sigmoid(w).clamp(P_EPS, 1.0 - P_EPS);
                theta_p[j] = p;
                logjac += p.ln() + (1.0 - p).ln();
            }
            if self.feature_selection {
                for j in 0..d {
                    let w = z[self.off_gamma + ki * d + j];
                    let g = sigmoid(w).clamp(P_EPS, 1.0 - P_EPS);
                    gamma[j] = g;
                    logjac += g.ln() + (1.0 - g).ln();
                }
            }
            clusters.push(ClusterParams {
                theta_mu,
                theta_sd,
                theta_p,
                gamma,
                beta: z[self.off_beta + ki],
            });
        }

        let (sigma0, sigma1) = if self.has_sigmas {
            let v0 = z[self.off_log_sigma0].clamp(-LOG_CLAMP, LOG_CLAMP);
            let v1 = z[self.off_log_sigma1].clamp(-LOG_CLAMP, LOG_CLAMP);
            logjac += v0 + v1;
            (v0.exp(), v1.exp())
        } else {
            (1.0, 1.0)
        };

        let eta = z[self.eta_range()].to_vec();
        (ConstrainedParams { clusters, pi, sigma0, sigma1, eta }, logjac)
    }

    /// Inverse of `constrain` for interior parameter values.
    pub fn unconstrain(&self, p: &ConstrainedParams) -> Vec<f64> {
        let (k, d) = (self.k, self.d);
        let nc = self.cont_dims.len();
        let nb = self.bin_dims.len();
        let mut z = vec![0.0; self.len];
        let log_pk = p.pi[k - 1].ln();
        for i in 0..k - 1 {
            z[self.off_pi + i] = p.pi[i].ln() - log_pk;
        }
        for (ki, cl) in p.clusters.iter().enumerate() {
            for (c, &j) in self.cont_dims.iter().enumerate() {
                z[self.off_theta_mu + ki * nc + c] = cl.theta_mu[j];
                z[self.off_theta_log_sd + ki * nc + c] = cl.theta_sd[j].ln();
            }
            for (b, &j) in self.bin_dims.iter().enumerate() {
                z[self.off_theta_logit_p + ki * nb + b] = logit(cl.theta_p[j]);
            }
            if self.feature_selection {
                for j in 0..d {
                    z[self.off_gamma + ki * d + j] = logit(cl.gamma[j]);
                }
            }
            z[self.off_beta + ki] = cl.beta;
        }
        if self.has_sigmas {
            z[self.off_log_sigma0] = p.sigma0.ln();
            z[self.off_log_sigma1] = p.sigma1.ln();
        }
        z[self.eta_range()].copy_from_slice(&p.eta);
        z
    }

    /// Chain a gradient with respect to the constrained parameters into the
    /// flat space, adding the log-Jacobian gradient. `cp` must be the result
    /// of `constrain(z)`.
    pub fn chain_gradient(
        &self,
        cp: &ConstrainedParams,
        grad: &crate::model::JointGrad,
        out: &mut [f64],
    ) {
        debug_assert_eq!(out.len(), self.len);
        let (k, d) = (self.k, self.d);
        let nc = self.cont_dims.len();
        let nb = self.bin_dims.len();

        // pi: softmax chain plus Jacobian term d/dz_j sum_k ln pi_k = 1 - K pi_j.
        let s: f64 = grad.pi.iter().zip(cp.pi.iter()).map(|(g, p)| g * p).sum();
        for j in 0..k - 1 {
            let pj = cp.pi[j];
            out[self.off_pi + j] = pj * (grad.pi[j] - s) + (1.0 - k as f64 * pj);
        }

        for ki in 0..k {
            let cl = &cp.clusters[ki];
            for (c, &j) in self.cont_dims.iter().enumerate() {
                out[self.off_theta_mu + ki * nc + c] = grad.theta_mu[[ki, j]];
                // theta_sd = exp(v): chain plus Jacobian derivative 1.
                out[self.off_theta_log_sd + ki * nc + c] =
                    grad.theta_sd[[ki, j]] * cl.theta_sd[j] + 1.0;
            }
            for (b, &j) in self.bin_dims.iter().enumerate() {
                let p = cl.theta_p[j];
                out[self.off_theta_logit_p + ki * nb + b] =
                    grad.theta_p[[ki, j]] * p * (1.0 - p) + (1.0 - 2.0 * p);
            }
            if self.feature_selection {
                for j in 0..d {
                    let g = cl.gamma[j];
                    out[self.off_gamma + ki * d + j] =
                        grad.gamma[[ki, j]] * g * (1.0 - g) + (1.0 - 2.0 * g);
                }
            }
            out[self.off_beta + ki] = grad.beta[ki];
        }
        if self.has_sigmas {
            out[self.off_log_sigma0] = grad.sigma0 * cp.sigma0 + 1.0;
            out[self.off_log_sigma1] = grad.sigma1 * cp.sigma1 + 1.0;
        }
        out[self.eta_range()].copy_from_slice(&grad.eta);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn layout() -> Layout {
        Layout::new(
            3,
            &[ColumnKind::Continuous, ColumnKind::Binary, ColumnKind::Continuous],
            4,
            true,
            true,
        )
    }

    #[test]
    fn length_accounts_for_every_block() {
        let l = layout();
        // pi: 2, theta_mu: 6, log_sd: 6, logit_p: 3, gamma: 9, beta: 3,
        // sigmas: 2, eta: 4
        assert_eq!(l.len(), 2 + 6 + 6 + 3 + 9 + 3 + 2 + 4);
    }

    #[test]
    fn constrain_unconstrain_round_trip() {
        let l = layout();
        let z: Vec<f64> = (0..l.len()).map(|i| ((i as f64) * 0.37).sin() * 1.5).collect();
        let (cp, _) = l.constrain(&z);
        let z2 = l.unconstrain(&cp);
        for (a, b) in z.iter().zip(z2.iter()) {
            assert_relative_eq!(a, b, epsilon = 1e-10);
        }
        // pi is a simplex
        let s: f64 = cp.pi.iter().sum();
        assert_relative_eq!(s, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn no_sigma_block_for_binary_outcomes() {
        let l = Layout::new(2, &[ColumnKind::Binary], 3, true, false);
        // pi: 1, logit_p: 2, gamma: 2, beta: 2, eta: 3
        assert_eq!(l.len(), 1 + 2 + 2 + 2 + 3);
        let z = vec![0.1; l.len()];
        let (cp, _) = l.constrain(&z);
        assert_eq!(cp.sigma0, 1.0);
        assert_eq!(cp.sigma1, 1.0);
    }

    #[test]
    fn no_gamma_block_without_feature_selection() {
        let l = Layout::new(2, &[ColumnKind::Continuous], 3, false, true);
        assert_eq!(l.len(), 1 + 2 + 2 + 2 + 2 + 3);
        let z = vec![0.3; l.len()];
        let (cp, _) = l.constrain(&z);
        assert_eq!(cp.clusters[0].gamma[0], 1.0);
    }

    #[test]
    fn k_equals_one_has_empty_pi_block() {
        let l = Layout::new(1, &[ColumnKind::Continuous], 2, true, true);
        let z = vec![0.0; l.len()];
        let (cp, _) = l.constrain(&z);
        assert_eq!(cp.pi, vec![1.0]);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        // d logjac / dz_i computed by central differences must equal the
        // analytic contribution in chain_gradient with a zero model gradient.
        let l = layout();
        let z: Vec<f64> = (0..l.len()).map(|i| ((i as f64) * 0.61).cos()).collect();
        let (cp, _) = l.constrain(&z);
        let zero = crate::model::JointGrad {
            pi: vec![0.0; 3],
            theta_mu: ndarray::Array2::zeros((3, 3)),
            theta_sd: ndarray::Array2::zeros((3, 3)),
            theta_p: ndarray::Array2::zeros((3, 3)),
            gamma: ndarray::Array2::zeros((3, 3)),
            beta: vec![0.0; 3],
            sigma0: 0.0,
            sigma1: 0.0,
            eta: vec![0.0; 4],
        };
        let mut analytic = vec![0.0; l.len()];
        l.chain_gradient(&cp, &zero, &mut analytic);
        let h = 1e-6;
        for i in 0..l.len() {
            let mut zp = z.clone();
            zp[i] += h;
            let mut zm = z.clone();
            zm[i] -= h;
            let (_, jp) = l.constrain(&zp);
            let (_, jm) = l.constrain(&zm);
            let fd = (jp - jm) / (2.0 * h);
            assert_relative_eq!(analytic[i], fd, epsilon = 1e-5, max_relative = 1e-5);
        }
    }
}
