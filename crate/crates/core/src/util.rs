//! Small numeric helpers used throughout the crate.

pub const LN_2PI: f64 = 1.8378770664093453;

/// Log-sum-exp of a slice, stable against overflow.
///
/// Returns negative infinity for an empty slice.
pub fn logsumexp(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    let s: f64 = v.iter().map(|&x| (x - m).exp()).sum();
    m + s.ln()
}

/// Softmax of `v` written into `out`; returns the log-sum-exp.
pub fn softmax_into(v: &[f64], out: &mut [f64]) -> f64 {
    let lse = logsumexp(v);
    for (o, &x) in out.iter_mut().zip(v.iter()) {
        *o = (x - lse).exp();
    }
    lse
}

/// Numerically stable logistic function.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// log(1 + exp(x)) without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else if x < -30.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Gaussian log density.
pub fn normal_logpdf(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    -0.5 * LN_2PI - sd.ln() - 0.5 * z * z
}

/// Half-normal log density (support x >= 0), including the factor-2 constant.
pub fn half_normal_logpdf(x: f64, sd: f64) -> f64 {
    std::f64::consts::LN_2 + normal_logpdf(x, 0.0, sd)
}

/// Beta log density on (0,1).
pub fn beta_logpdf(x: f64, a: f64, b: f64) -> f64 {
    use statrs::function::gamma::ln_gamma;
    let ln_beta = ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b);
    (a - 1.0) * x.ln() + (b - 1.0) * (1.0 - x).ln() - ln_beta
}

/// Symmetric-Dirichlet log density with concentration `conc` in each slot.
pub fn dirichlet_sym_logpdf(pi: &[f64], conc: f64) -> f64 {
    use statrs::function::gamma::ln_gamma;
    let k = pi.len() as f64;
    let norm = ln_gamma(conc * k) - k * ln_gamma(conc);
    norm + pi.iter().map(|&p| (conc - 1.0) * p.ln()).sum::<f64>()
}

/// Mean and unbiased (n-1) standard deviation.
pub fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = v.iter().map(|&x| (x - mean) * (x - mean)).sum();
    (mean, (ss / (n - 1.0)).sqrt())
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn logsumexp_matches_naive_on_small_values() {
        let v = [-1.0_f64, -2.0, -3.0];
        let naive = v.iter().map(|x| x.exp()).sum::<f64>().ln();
        assert_relative_eq!(logsumexp(&v), naive, max_relative = 1e-12);
    }

    #[test]
    fn logsumexp_survives_large_magnitudes() {
        let v = [1000.0, 1000.0];
        assert_relative_eq!(logsumexp(&v), 1000.0 + 2f64.ln(), max_relative = 1e-12);
    }

    #[test]
    fn sigmoid_extremes() {
        assert!(sigmoid(-800.0) >= 0.0);
        assert!(sigmoid(800.0) <= 1.0);
        assert_relative_eq!(sigmoid(0.0), 0.5);
    }

    #[test]
    fn beta_half_half_is_arcsine() {
        // Beta(0.5, 0.5) at x = 0.5 has density 1/(pi * sqrt(0.25)) = 2/pi.
        assert_relative_eq!(
            beta_logpdf(0.5, 0.5, 0.5),
            (2.0 / std::f64::consts::PI).ln(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn dirichlet_uniform_is_log_factorial() {
        // Dirichlet(1,..,1) density is (K-1)! everywhere on the simplex.
        let pi = [0.2, 0.3, 0.5];
        assert_relative_eq!(dirichlet_sym_logpdf(&pi, 1.0), 2f64.ln(), max_relative = 1e-12);
    }

    #[test]
    fn mean_sd_unbiased_denominator() {
        let (m, s) = mean_sd(&[1.0, 2.0, 3.0]);
        assert_relative_eq!(m, 2.0);
        assert_relative_eq!(s, 1.0);
    }
}
