//! Convergence diagnostics.

use serde::{Deserialize, Serialize};

use super::PosteriorChain;
use crate::error::{Error, Result};
use crate::math::{mean, median, variance};

/// Gelman–Rubin potential scale reduction over equal-length sub-chains.
pub fn psrf(chains: &[&[f64]]) -> Result<f64> {
    let m = chains.len();
    if m < 2 {
        return Err(Error::Contract("psrf needs at least two sub-chains".into()));
    }
    let n = chains[0].len();
    if n < 2 || chains.iter().any(|c| c.len() != n) {
        return Err(Error::Contract("psrf needs equal-length sub-chains of length >= 2".into()));
    }
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let w = chains.iter().map(|c| variance(c)).sum::<f64>() / m as f64;
    let b = n as f64 * variance(&means);
    if w <= 0.0 {
        return Ok(if b <= 0.0 { 1.0 } else { f64::INFINITY });
    }
    let nf = n as f64;
    let v_hat = (nf - 1.0) / nf * w + b / nf;
    Ok((v_hat / w).sqrt())
}

/// PSRF after splitting every chain into `pieces` consecutive sub-chains.
/// Leftover draws at the end of a chain are dropped.
pub fn split_psrf(chains: &[&[f64]], pieces: usize) -> Result<f64> {
    let mut subs: Vec<&[f64]> = Vec::new();
    let shortest = chains.iter().map(|c| c.len()).min().unwrap_or(0);
    let len = shortest / pieces.max(1);
    for c in chains {
        for k in 0..pieces {
            subs.push(&c[k * len..(k + 1) * len]);
        }
    }
    psrf(&subs)
}

/// Effective sample size by Geyer's initial positive sequence.
pub fn ess(draws: &[f64]) -> Result<f64> {
    let n = draws.len();
    if n < 10 {
        return Err(Error::Contract(format!("ess needs at least 10 draws, got {n}")));
    }
    let m = mean(draws);
    let centered: Vec<f64> = draws.iter().map(|x| x - m).collect();
    let c0 = centered.iter().map(|x| x * x).sum::<f64>() / n as f64;
    if c0 <= 0.0 {
        return Ok(n as f64);
    }
    let acf = |lag: usize| -> f64 {
        centered[..n - lag].iter().zip(&centered[lag..]).map(|(a, b)| a * b).sum::<f64>()
            / (n as f64 * c0)
    };
    let mut sum = 0.0;
    let mut k = 0;
    while 2 * k + 1 < n {
        let gamma = acf(2 * k) + acf(2 * k + 1);
        if gamma <= 0.0 {
            break;
        }
        sum += gamma;
        k += 1;
    }
    let tau = (2.0 * sum - 1.0).max(1.0 / n as f64);
    Ok((n as f64 / tau).min(n as f64 * (n as f64).log10()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionalDiagnostic {
    pub name: String,
    pub psrf: f64,
    /// Summed over chains.
    pub ess: f64,
}

/// Convergence and mixing summary over the monitored functionals
/// (`rho[l]`, `pi1[l]`, `pi2[l]`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub n_chains: usize,
    pub pieces_per_chain: usize,
    pub n_stored: usize,
    pub psrf_max: f64,
    pub psrf_median: f64,
    pub n_psrf_above_1_1: usize,
    pub ess_min: f64,
    pub ess_median: f64,
    /// `ess_median / n_stored`.
    pub ess_median_fraction: f64,
    pub functionals: Vec<FunctionalDiagnostic>,
}

impl DiagnosticsReport {
    pub fn from_chains(chains: &[PosteriorChain], pieces: usize) -> Result<Self> {
        if chains.is_empty() || chains.iter().any(|c| c.n_stored() < 10) {
            return Err(Error::Contract("diagnostics need at least 10 stored draws per chain".into()));
        }
        let n_stored: usize = chains.iter().map(|c| c.n_stored()).sum();
        let m = chains[0].rho.cols();
        let mut functionals = Vec::with_capacity(3 * m);
        let families: [(&str, fn(&PosteriorChain) -> &super::DrawMatrix); 3] = [
            ("rho", |c| &c.rho),
            ("pi1", |c| &c.group_probs[0]),
            ("pi2", |c| &c.group_probs[1]),
        ];
        for (name, get) in families {
            for l in 0..m {
                let cols: Vec<Vec<f64>> = chains.iter().map(|c| get(c).column(l)).collect();
                let refs: Vec<&[f64]> = cols.iter().map(Vec::as_slice).collect();
                let psrf = split_psrf(&refs, pieces)?;
                let ess = cols.iter().map(|c| ess(c)).sum::<Result<f64>>()?;
                functionals.push(FunctionalDiagnostic { name: format!("{name}[{l}]"), psrf, ess });
            }
        }
        let psrfs: Vec<f64> = functionals.iter().map(|f| f.psrf).collect();
        let esses: Vec<f64> = functionals.iter().map(|f| f.ess).collect();
        let ess_median = median(&esses);
        Ok(Self {
            n_chains: chains.len(),
            pieces_per_chain: pieces,
            n_stored,
            psrf_max: psrfs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            psrf_median: median(&psrfs),
            n_psrf_above_1_1: psrfs.iter().filter(|&&p| !(p < 1.1)).count(),
            ess_min: esses.iter().copied().fold(f64::INFINITY, f64::min),
            ess_median,
            ess_median_fraction: ess_median / n_stored as f64,
            functionals,
        })
    }

    pub fn write_json(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};
    use rand_xoshiro::Xoshiro256PlusPlus;

    fn normals(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
        (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    #[test]
    fn constant_subchains() {
        let c = vec![2.0; 100];
        assert_eq!(psrf(&[&c, &c, &c, &c]).unwrap(), 1.0);
        assert_eq!(ess(&c).unwrap(), 100.0);
    }

    #[test]
    fn iid_subchains_near_one() {
        let x = normals(4000, 1);
        let subs: Vec<&[f64]> = x.chunks(1000).collect();
        assert!(psrf(&subs).unwrap() < 1.05);
    }

    #[test]
    fn shifted_subchains_flagged() {
        let a = normals(1000, 2);
        let b: Vec<f64> = normals(1000, 3).iter().map(|x| x + 5.0).collect();
        assert!(psrf(&[&a, &a, &b, &b]).unwrap() > 1.5);
    }

    #[test]
    fn ess_iid_and_ar1() {
        let x = normals(4000, 4);
        let e = ess(&x).unwrap();
        assert!((3200.0..=4800.0).contains(&e), "{e}");
        let eps = normals(4000, 5);
        let mut ar = vec![0.0; 4000];
        ar[0] = eps[0] / (1.0f64 - 0.25).sqrt();
        for t in 1..4000 {
            ar[t] = 0.5 * ar[t - 1] + eps[t];
        }
        let e = ess(&ar).unwrap();
        assert!((e - 1333.0).abs() < 0.25 * 1333.0, "{e}");
    }

    #[test]
    fn split_uses_all_chains() {
        let a = normals(400, 6);
        let b = normals(400, 7);
        let r = split_psrf(&[&a, &b], 4).unwrap();
        assert!(r < 1.1);
        assert!(psrf(&[&a]).is_err());
    }
}
