//! Diagonal-covariance Gaussian mixture fitted by EM with k-means++ seeding.
//!
//! Used to initialize the cluster parameters of the full model and exported
//! standalone as the unsupervised baseline for comparison runs. Binary
//! columns are treated as continuous here; the resulting means double as
//! prevalence initializers.

use ndarray::Array2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::util::{logsumexp, LN_2PI};

/// Fitted diagonal Gaussian mixture.
#[derive(Debug, Clone)]
pub struct GmmModel {
    pub means: Array2<f64>,
    pub sds: Array2<f64>,
    pub weights: Vec<f64>,
    pub loglik: f64,
    pub iterations: usize,
}

const VAR_FLOOR: f64 = 1e-6;
const MAX_RESEEDS: usize = 3;

impl GmmModel {
    /// Per-row posterior responsibilities under the fitted mixture.
    pub fn responsibilities(&self, x: &Array2<f64>) -> Array2<f64> {
        let (n, k) = (x.nrows(), self.weights.len());
        let mut out = Array2::<f64>::zeros((n, k));
        let mut row = vec![0.0; k];
        for i in 0..n {
            self.log_masses(x, i, &mut row);
            let lse = logsumexp(&row);
            for j in 0..k {
                out[[i, j]] = (row[j] - lse).exp();
            }
        }
        out
    }

    /// Hard cluster labels by maximum responsibility.
    pub fn assign(&self, x: &Array2<f64>) -> Vec<usize> {
        let resp = self.responsibilities(x);
        (0..x.nrows())
            .map(|i| {
                let mut best = 0;
                for j in 1..self.weights.len() {
                    if resp[[i, j]] > resp[[i, best]] {
                        best = j;
                    }
                }
                best
            })
            .collect()
    }

    /// Total log likelihood of a row set under the mixture.
    pub fn loglik_of(&self, x: &Array2<f64>) -> f64 {
        let k = self.weights.len();
        let mut row = vec![0.0; k];
        let mut total = 0.0;
        for i in 0..x.nrows() {
            self.log_masses(x, i, &mut row);
            total += logsumexp(&row);
        }
        total
    }

    fn log_masses(&self, x: &Array2<f64>, i: usize, out: &mut [f64]) {
        let d = x.ncols();
        for (j, o) in out.iter_mut().enumerate() {
            let mut ll = self.weights[j].ln();
            for t in 0..d {
                let sd = self.sds[[j, t]];
                let z = (x[[i, t]] - self.means[[j, t]]) / sd;
                ll += -0.5 * LN_2PI - sd.ln() - 0.5 * z * z;
            }
            *o = ll;
        }
    }
}

fn kmeanspp_seeds(x: &Array2<f64>, k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = x.nrows();
    let d = x.ncols();
    let sq_dist = |a: usize, b_row: &[f64]| {
        let mut s = 0.0;
        for t in 0..d {
            let dd = x[[a, t]] - b_row[t];
            s += dd * dd;
        }
        s
    };
    let mut seeds = vec![rng.gen_range(0..n)];
    let mut min_d: Vec<f64> = (0..n)
        .map(|i| sq_dist(i, x.row(seeds[0]).to_slice().unwrap()))
        .collect();
    while seeds.len() < k {
        let total: f64 = min_d.iter().sum();
        let next = if total <= 0.0 {
            rng.gen_range(0..n)
        } else {
            let mut target = rng.gen_range(0.0..total);
            let mut pick = n - 1;
            for (i, &w) in min_d.iter().enumerate() {
                if target < w {
                    pick = i;
                    break;
                }
                target -= w;
            }
            pick
        };
        seeds.push(next);
        for i in 0..n {
            let dnew = sq_dist(i, x.row(next).to_slice().unwrap());
            if dnew < min_d[i] {
                min_d[i] = dnew;
            }
        }
    }
    seeds
}

/// Fit a diagonal-covariance Gaussian mixture with EM.
///
/// The log likelihood is non-decreasing across iterations; the loop stops
/// when its absolute change falls below `tol` or `max_iters` is reached.
/// A component left responsible for fewer than two points is re-seeded from
/// the most distant point, at most three times overall.
pub fn gmm_em(
    x: &Array2<f64>,
    k: usize,
    seed: u64,
    max_iters: usize,
    tol: f64,
) -> Result<(GmmModel, Array2<f64>)> {
    let (n, d) = (x.nrows(), x.ncols());
    if k == 0 {
        return Err(Error::InvalidValue("K must be at least 1".into()));
    }
    if n < k {
        return Err(Error::InvalidValue(format!("{n} rows cannot support {k} components")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Overall per-dimension moments for seeding scales and re-seeds.
    let mut overall_mean = vec![0.0; d];
    let mut overall_var = vec![0.0; d];
    for t in 0..d {
        let col = x.column(t);
        let m = col.sum() / n as f64;
        overall_mean[t] = m;
        overall_var[t] =
            (col.iter().map(|&v| (v - m) * (v - m)).sum::<f64>() / n as f64).max(VAR_FLOOR);
    }

    let seeds = kmeanspp_seeds(x, k, &mut rng);
    let mut means = Array2::<f64>::zeros((k, d));
    let mut sds = Array2::<f64>::zeros((k, d));
    for (j, &s) in seeds.iter().enumerate() {
        for t in 0..d {
            means[[j, t]] = x[[s, t]];
            sds[[j, t]] = overall_var[t].sqrt();
        }
    }
    let mut weights = vec![1.0 / k as f64; k];
    let mut model = GmmModel { means, sds, weights: weights.clone(), loglik: f64::NEG_INFINITY, iterations: 0 };

    let mut resp = Array2::<f64>::zeros((n, k));
    let mut prev_ll = f64::NEG_INFINITY;
    let mut reseeds = 0usize;
    let mut row = vec![0.0; k];

    for iter in 0..max_iters {
        // E step.
        let mut ll = 0.0;
        for i in 0..n {
            model.log_masses(x, i, &mut row);
            let lse = logsumexp(&row);
            ll += lse;
            for j in 0..k {
                resp[[i, j]] = (row[j] - lse).exp();
            }
        }

        // M step with degeneracy handling.
        let mut degenerate = None;
        let mut nk = vec![0.0; k];
        for j in 0..k {
            nk[j] = (0..n).map(|i| resp[[i, j]]).sum();
            if nk[j] < 2.0 {
                degenerate = Some(j);
            }
        }
        if let Some(j) = degenerate {
            if reseeds >= MAX_RESEEDS {
                return Err(Error::Numerics(format!(
                    "GMM component {j} degenerated after {MAX_RESEEDS} re-seeds"
                )));
            }
            reseeds += 1;
            // Re-seed from the point farthest from every current mean.
            let mut far = 0;
            let mut far_d = -1.0;
            for i in 0..n {
                let mut best = f64::INFINITY;
                for jj in 0..k {
                    let mut s = 0.0;
                    for t in 0..d {
                        let dd = x[[i, t]] - model.means[[jj, t]];
                        s += dd * dd;
                    }
                    best = best.min(s);
                }
                if best > far_d {
                    far_d = best;
                    far = i;
                }
            }
            for t in 0..d {
                model.means[[j, t]] = x[[far, t]];
                model.sds[[j, t]] = overall_var[t].sqrt();
            }
            model.weights[j] = 1.0 / n as f64;
            let norm: f64 = model.weights.iter().sum();
            for w in model.weights.iter_mut() {
                *w /= norm;
            }
            prev_ll = f64::NEG_INFINITY;
            continue;
        }

        for j in 0..k {
            weights[j] = nk[j] / n as f64;
            for t in 0..d {
                let mut m = 0.0;
                for i in 0..n {
                    m += resp[[i, j]] * x[[i, t]];
                }
                m /= nk[j];
                let mut v = 0.0;
                for i in 0..n {
                    let dd = x[[i, t]] - m;
                    v += resp[[i, j]] * dd * dd;
                }
                v = (v / nk[j]).max(VAR_FLOOR);
                model.means[[j, t]] = m;
                model.sds[[j, t]] = v.sqrt();
            }
        }
        model.weights = weights.clone();
        model.loglik = ll;
        model.iterations = iter + 1;

        if (ll - prev_ll).abs() < tol {
            break;
        }
        prev_ll = ll;
    }

    // Final E step so the returned responsibilities match the returned model.
    for i in 0..n {
        model.log_masses(x, i, &mut row);
        let lse = logsumexp(&row);
        for j in 0..k {
            resp[[i, j]] = (row[j] - lse).exp();
        }
    }
    model.loglik = model.loglik_of(x);
    Ok((model, resp))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::ari;
    use approx::assert_relative_eq;
    use rand_distr::{Distribution, Normal};

    fn two_blobs(n_per: usize, sep: f64, seed: u64) -> (Array2<f64>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let norm = Normal::new(0.0, 1.0).unwrap();
        let mut x = Array2::<f64>::zeros((2 * n_per, 2));
        let mut labels = vec![0usize; 2 * n_per];
        for i in 0..2 * n_per {
            let c = i / n_per;
            labels[i] = c;
            for t in 0..2 {
                x[[i, t]] = norm.sample(&mut rng) + if c == 1 { sep } else { 0.0 };
            }
        }
        (x, labels)
    }

    #[test]
    fn separated_blobs_recovered_exactly() {
        let (x, labels) = two_blobs(100, 10.0, 3);
        let (model, _) = gmm_em(&x, 2, 1, 200, 1e-8).unwrap();
        let got = model.assign(&x);
        let got_i: Vec<i64> = got.iter().map(|&v| v as i64).collect();
        let want: Vec<i64> = labels.iter().map(|&v| v as i64).collect();
        assert_relative_eq!(ari(&want, &got_i).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn single_component_is_sample_mle() {
        let (x, _) = two_blobs(50, 1.0, 7);
        let (model, resp) = gmm_em(&x, 1, 1, 100, 1e-10).unwrap();
        let n = x.nrows() as f64;
        for t in 0..2 {
            let mean = x.column(t).sum() / n;
            let var = x.column(t).iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / n;
            assert_relative_eq!(model.means[[0, t]], mean, epsilon = 1e-9);
            assert_relative_eq!(model.sds[[0, t]], var.sqrt(), epsilon = 1e-9);
        }
        for i in 0..x.nrows() {
            assert_relative_eq!(resp[[i, 0]], 1.0);
        }
    }

    #[test]
    fn responsibilities_rows_sum_to_one() {
        let (x, _) = two_blobs(60, 3.0, 11);
        let (_, resp) = gmm_em(&x, 3, 5, 100, 1e-8).unwrap();
        for i in 0..x.nrows() {
            let s: f64 = (0..3).map(|j| resp[[i, j]]).sum();
            assert!((s - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn loglik_non_decreasing_over_refits() {
        let (x, _) = two_blobs(80, 4.0, 13);
        let (m5, _) = gmm_em(&x, 2, 9, 5, 0.0).unwrap();
        let (m50, _) = gmm_em(&x, 2, 9, 50, 0.0).unwrap();
        assert!(m50.loglik >= m5.loglik - 1e-9);
    }

    #[test]
    fn more_components_than_rows_rejected() {
        let (x, _) = two_blobs(2, 1.0, 1);
        assert!(gmm_em(&x, 10, 1, 10, 1e-6).is_err());
    }
}
