//! Scalar helpers shared by the model and the sampler.

/// Probabilities are clamped to this distance from {0, 1} before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;

#[inline]
pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// `ln(p)` and `ln(1 - p)` after clamping `p` into `[PROB_FLOOR, 1 - PROB_FLOOR]`.
#[inline]
pub fn clamped_log_pair(p: f64) -> (f64, f64) {
    let p = p.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR);
    (p.ln(), (-p).ln_1p())
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Log of the multivariate beta function `B(alpha) = prod Γ(alpha_h) / Γ(sum alpha_h)`.
pub fn ln_multivariate_beta(alpha: impl IntoIterator<Item = f64>) -> f64 {
    let mut total = 0.0;
    let mut acc = 0.0;
    for a in alpha {
        total += a;
        acc += statrs::function::gamma::ln_gamma(a);
    }
    acc - statrs::function::gamma::ln_gamma(total)
}

/// Standard normal CDF.
#[inline]
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2)
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance; zero for fewer than two values.
pub fn variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v: Vec<f64> = xs.iter().copied().filter(|x| !x.is_nan()).collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
