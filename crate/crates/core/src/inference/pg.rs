//! Pólya-gamma draws.
//!
//! `PG(1, z)` is sampled exactly by the alternating-series accept/reject
//! scheme for the Jacobi distribution `J*(1, z/2)`: a proposal mixing a
//! truncated exponential (right of `t = 0.64`) and a truncated inverse
//! Gaussian (left of `t`), accepted by evaluating partial sums of the series
//! density until they bracket the uniform. `PG(b, z)` for integer `b` is the
//! sum of `b` independent `PG(1, z)` draws.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::math::norm_cdf;

const TRUNC: f64 = 0.64;
const TRUNC_RECIP: f64 = 1.0 / TRUNC;

/// Number of terms in the truncated infinite-sum fallback.
pub const TRUNCATED_TERMS: usize = 160;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PgMethod {
    /// Exact accept/reject sampler.
    #[default]
    Exact,
    /// Sum of the first [`TRUNCATED_TERMS`] gamma terms; biased low, for cross-checks.
    Truncated,
}

/// Mean of `PG(b, z)`: `b tanh(z/2) / (2z)`, with limit `b/4` at zero.
pub fn pg_mean(b: f64, z: f64) -> f64 {
    if z.abs() < 1e-8 {
        b * (0.25 - z * z / 48.0)
    } else {
        b * (0.5 * z).tanh() / (2.0 * z)
    }
}

/// Variance of `PG(1, z)`: `(sinh z - z) / (4 z^3 cosh^2(z/2))`, limit `1/24`.
pub fn pg_variance(z: f64) -> f64 {
    let z = z.abs();
    if z < 1e-3 {
        1.0 / 24.0 - z * z / 160.0
    } else {
        (z.sinh() - z) / (4.0 * z.powi(3) * (0.5 * z).cosh().powi(2))
    }
}

/// Exact draw from `PG(1, z)`.
pub fn pg_draw<R: Rng + ?Sized>(z: f64, rng: &mut R) -> f64 {
    let z = 0.5 * z.abs();
    let k = 0.125 * PI * PI + 0.5 * z * z;
    let p_exp = texpon_mass(z, k);
    loop {
        let x = if rng.random::<f64>() < p_exp {
            let e: f64 = Exp1.sample(rng);
            TRUNC + e / k
        } else {
            truncated_inverse_gaussian(z, rng)
        };
        let mut s = series_coef(0, x);
        let y = rng.random::<f64>() * s;
        let mut n = 0;
        loop {
            n += 1;
            if n % 2 == 1 {
                s -= series_coef(n, x);
                if y <= s {
                    return 0.25 * x;
                }
            } else {
                s += series_coef(n, x);
                if y > s {
                    break;
                }
            }
        }
    }
}

/// Draw from `PG(b, z)` for integer `b >= 0` (zero for `b = 0`).
pub fn pg_draw_sum<R: Rng + ?Sized>(b: usize, z: f64, method: PgMethod, rng: &mut R) -> f64 {
    match method {
        PgMethod::Exact => (0..b).map(|_| pg_draw(z, rng)).sum(),
        PgMethod::Truncated => (0..b).map(|_| pg_draw_truncated(z, TRUNCATED_TERMS, rng)).sum(),
    }
}

/// `PG(1, z) = (1 / 2π²) Σ_k g_k / ((k - 1/2)² + z²/(4π²))`, cut at `terms`.
pub fn pg_draw_truncated<R: Rng + ?Sized>(z: f64, terms: usize, rng: &mut R) -> f64 {
    let c = z * z / (4.0 * PI * PI);
    let mut acc = 0.0;
    for k in 1..=terms {
        let g: f64 = Exp1.sample(rng);
        let kh = k as f64 - 0.5;
        acc += g / (kh * kh + c);
    }
    acc / (2.0 * PI * PI)
}

/// Probability of proposing from the exponential tail piece.
fn texpon_mass(z: f64, k: f64) -> f64 {
    let rt = TRUNC_RECIP.sqrt();
    let b = rt * (TRUNC * z - 1.0);
    let a = -rt * (TRUNC * z + 1.0);
    let x0 = k.ln() + k * TRUNC;
    let xb = x0 - z + ln_norm_cdf(b);
    let xa = x0 + z + ln_norm_cdf(a);
    let q_over_p = 4.0 / PI * (xb.exp() + xa.exp());
    1.0 / (1.0 + q_over_p)
}

fn ln_norm_cdf(x: f64) -> f64 {
    if x > -30.0 {
        norm_cdf(x).ln()
    } else {
        // Mills-ratio asymptote
        -0.5 * x * x - (-x).ln() - 0.5 * (2.0 * PI).ln()
    }
}

/// Inverse Gaussian with mean `1/z` and shape 1, truncated to `(0, TRUNC)`.
fn truncated_inverse_gaussian<R: Rng + ?Sized>(z: f64, rng: &mut R) -> f64 {
    if TRUNC_RECIP > z {
        loop {
            let (mut e1, mut e2): (f64, f64);
            loop {
                e1 = Exp1.sample(rng);
                e2 = Exp1.sample(rng);
                if e1 * e1 <= 2.0 * e2 / TRUNC {
                    break;
                }
            }
            let x = 1.0 + e1 * TRUNC;
            let x = TRUNC / (x * x);
            let alpha = (-0.5 * z * z * x).exp();
            if rng.random::<f64>() <= alpha {
                return x;
            }
        }
    } else {
        let mu = 1.0 / z;
        loop {
            let n: f64 = StandardNormal.sample(rng);
            let y = n * n;
            let half_mu = 0.5 * mu;
            let mu_y = mu * y;
            let mut x = mu + half_mu * mu_y - half_mu * (4.0 * mu_y + mu_y * mu_y).sqrt();
            if rng.random::<f64>() > mu / (mu + x) {
                x = mu * mu / x;
            }
            if x <= TRUNC {
                return x;
            }
        }
    }
}

/// Piecewise series coefficient `a_n(x)` of the `J*(1)` density.
fn series_coef(n: usize, x: f64) -> f64 {
    let nh = n as f64 + 0.5;
    let k = nh * PI;
    if x > TRUNC {
        k * (-0.5 * k * k * x).exp()
    } else if x > 0.0 {
        (-1.5 * ((0.5 * PI).ln() + x.ln()) + k.ln() - 2.0 * nh * nh / x).exp()
    } else {
        0.0
    }
}
