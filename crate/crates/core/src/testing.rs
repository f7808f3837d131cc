//! Global and edgewise tests, decision rules and group prediction.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::baselines::BaselineReport;
use crate::error::{Error, Result};
use crate::graph::{EdgeIndex, EdgeVector, Group};
use crate::inference::diagnostics::ess;
use crate::inference::PosteriorChain;
use crate::math::log_sum_exp;
use crate::model::MixtureSnapshot;

pub const DEFAULT_GLOBAL_THRESHOLD: f64 = 0.9;
pub const DEFAULT_LOCAL_THRESHOLD: f64 = 0.9;
pub const DEFAULT_EPSILON: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub global_pr_h1: f64,
    /// Monte Carlo standard error of `global_pr_h1`; reporting only.
    pub global_mcse: f64,
    pub global_threshold: f64,
    pub global_reject: bool,
    pub epsilon: f64,
    pub local_threshold: f64,
    pub local_pr: Vec<f64>,
    pub decisions: Vec<bool>,
    /// Cutoff on `local_pr` achieving the requested Bayesian FDR, when asked for.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub bayes_fdr: Option<BayesFdr>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub baselines: Option<BaselineReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BayesFdr {
    pub target: f64,
    /// `None` when no rejection set meets the target.
    pub cutoff: Option<f64>,
    pub n_rejected: usize,
}

impl TestReport {
    pub fn from_chains(
        chains: &[PosteriorChain],
        global_threshold: f64,
        epsilon: f64,
        local_threshold: f64,
        fdr_target: Option<f64>,
    ) -> Result<Self> {
        let (global_pr_h1, global_reject) = global_test(chains, global_threshold)?;
        let (local_pr, decisions) = local_tests(chains, epsilon, local_threshold)?;
        let bayes_fdr = fdr_target.map(|target| {
            let cutoff = bayes_fdr_threshold(&local_pr, target);
            let n_rejected = cutoff.map_or(0, |c| local_pr.iter().filter(|&&p| p > c).count());
            BayesFdr { target, cutoff, n_rejected }
        });
        Ok(Self {
            global_pr_h1,
            global_mcse: global_mcse(chains),
            global_threshold,
            global_reject,
            epsilon,
            local_threshold,
            local_pr,
            decisions,
            bayes_fdr,
            baselines: None,
        })
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(path, e))
    }
}

fn nonempty(chains: &[PosteriorChain]) -> Result<()> {
    if chains.iter().all(|c| c.n_stored() == 0) {
        return Err(Error::Contract("no stored draws".into()));
    }
    Ok(())
}

/// Posterior probability of the global alternative, pooled over chains,
/// and whether it exceeds `threshold`.
pub fn global_test(chains: &[PosteriorChain], threshold: f64) -> Result<(f64, bool)> {
    nonempty(chains)?;
    let total: usize = chains.iter().map(|c| c.n_stored()).sum();
    let ones: usize = chains.iter().flat_map(|c| &c.t).map(|&t| t as usize).sum();
    let p = ones as f64 / total as f64;
    Ok((p, p > threshold))
}

fn global_mcse(chains: &[PosteriorChain]) -> f64 {
    let all: Vec<f64> = chains.iter().flat_map(|c| c.t.iter().map(|&t| t as f64)).collect();
    if all.len() < 2 {
        return 0.0;
    }
    let var = crate::math::variance(&all);
    let eff: f64 = chains
        .iter()
        .map(|c| {
            let t: Vec<f64> = c.t.iter().map(|&t| t as f64).collect();
            ess(&t).unwrap_or(t.len() as f64)
        })
        .sum();
    (var / eff).sqrt()
}

/// Per-edge posterior probability that Cramér's V exceeds `epsilon`.
pub fn local_tests(
    chains: &[PosteriorChain],
    epsilon: f64,
    threshold: f64,
) -> Result<(Vec<f64>, Vec<bool>)> {
    nonempty(chains)?;
    let m = chains[0].rho.cols();
    let mut above = vec![0usize; m];
    let mut total = 0usize;
    for c in chains {
        if c.rho.cols() != m {
            return Err(Error::Contract("chains disagree on the number of edges".into()));
        }
        for i in 0..c.rho.rows() {
            for (k, &r) in above.iter_mut().zip(c.rho.row(i)) {
                *k += (r > epsilon) as usize;
            }
        }
        total += c.rho.rows();
    }
    let pr: Vec<f64> = above.iter().map(|&k| k as f64 / total as f64).collect();
    let dec = pr.iter().map(|&p| p > threshold).collect();
    Ok((pr, dec))
}

/// Smallest cutoff `c` such that rejecting `{l : pr_l > c}` has expected
/// false discovery proportion `mean(1 - pr_l)` at most `target`.
/// `None` means no nonempty rejection set qualifies.
pub fn bayes_fdr_threshold(local_pr: &[f64], target: f64) -> Option<f64> {
    let mut sorted: Vec<f64> = local_pr.iter().copied().filter(|&p| p > 0.0).collect();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut best = None;
    let mut complement = 0.0;
    for k in 0..sorted.len() {
        complement += 1.0 - sorted[k];
        let next = sorted.get(k + 1).copied().unwrap_or(0.0);
        // only cut between distinct values
        if next == sorted[k] {
            continue;
        }
        if complement / (k + 1) as f64 <= target {
            best = Some(next);
        }
    }
    best
}

/// `pr(Y = 2 | a)` for a single parameter draw, computed in log space.
pub fn group_two_probability(snap: &MixtureSnapshot, a: &EdgeVector) -> f64 {
    let l1 = snap.p_y(Group::One).ln() + snap.log_pmf(a, Group::One);
    let l2 = snap.p_y(Group::Two).ln() + snap.log_pmf(a, Group::Two);
    (l2 - log_sum_exp(&[l1, l2])).exp()
}

/// Posterior predictive probability of group 2, averaged over draws.
pub fn predict_group(snapshots: &[MixtureSnapshot], a: &EdgeVector) -> Result<f64> {
    if snapshots.is_empty() {
        return Err(Error::Contract("prediction needs at least one stored draw".into()));
    }
    if snapshots[0].n_edges() != a.len() {
        return Err(Error::Contract(format!(
            "network has {} edges, model has {}",
            a.len(),
            snapshots[0].n_edges()
        )));
    }
    Ok(snapshots.iter().map(|s| group_two_probability(s, a)).sum::<f64>() / snapshots.len() as f64)
}

/// Writes per-edge values as a symmetric `v × v` matrix with a zero diagonal.
pub fn write_edge_matrix_csv(values: &[f64], v: usize, path: &Path) -> Result<()> {
    let idx = EdgeIndex::new(v);
    if values.len() != idx.len() {
        return Err(Error::Contract(format!("{} values for {} edges", values.len(), idx.len())));
    }
    let mut m = vec![vec![0.0; v]; v];
    for (l, &(a, b)) in idx.pairs().iter().enumerate() {
        m[a][b] = values[l];
        m[b][a] = values[l];
    }
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    for row in m {
        w.write_record(row.iter().map(|x| x.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}
