//! Frequentist comparison procedures: edgewise Fisher exact tests with
//! Benjamini–Hochberg control, and a MANOVA on network summary statistics.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, FisherSnedecor};
use statrs::function::factorial::ln_factorial;

use crate::error::{Error, Result};
use crate::graph::stats::summary_stats_with_index;
use crate::graph::{EdgeIndex, Group, NetworkDataset, SummaryVector};

/// Relative tolerance when comparing table probabilities to the observed one.
const TIE_TOLERANCE: f64 = 1e-7;

/// Counts of a 2×2 table: rows are groups, columns are edge present / absent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContingencyTable2x2 {
    pub a: u64,
    pub b: u64,
    pub c: u64,
    pub d: u64,
}

impl ContingencyTable2x2 {
    pub fn new(a: u64, b: u64, c: u64, d: u64) -> Self {
        Self { a, b, c, d }
    }

    /// Table of edge `l` across the two groups.
    pub fn for_edge(data: &NetworkDataset, l: usize) -> Self {
        let mut t = Self::new(0, 0, 0, 0);
        for (net, g) in data.networks().iter().zip(data.groups()) {
            match (g, net.get(l)) {
                (Group::One, true) => t.a += 1,
                (Group::One, false) => t.b += 1,
                (Group::Two, true) => t.c += 1,
                (Group::Two, false) => t.d += 1,
            }
        }
        t
    }
}

/// Two-sided Fisher exact test: total hypergeometric mass of tables with the
/// observed margins that are no more probable than the observed table.
pub fn fisher_exact_two_sided(t: ContingencyTable2x2) -> f64 {
    let r1 = t.a + t.b;
    let r2 = t.c + t.d;
    let c1 = t.a + t.c;
    let n = r1 + r2;
    let c2 = n - c1;
    if r1 == 0 || r2 == 0 || c1 == 0 || c2 == 0 {
        return 1.0;
    }
    let ln_denom = ln_factorial(n) - ln_factorial(r1) - ln_factorial(r2) - ln_factorial(c1)
        - ln_factorial(c2);
    let ln_p = |x: u64| -> f64 {
        -ln_denom
            - ln_factorial(x)
            - ln_factorial(r1 - x)
            - ln_factorial(c1 - x)
            - ln_factorial(r2 + x - c1)
    };
    let lo = c1.saturating_sub(r2);
    let hi = r1.min(c1);
    let obs = ln_p(t.a);
    let bound = obs + TIE_TOLERANCE.ln_1p();
    let p: f64 = (lo..=hi).map(ln_p).filter(|&lp| lp <= bound).map(f64::exp).sum();
    p.min(1.0)
}

/// Calibrates a p-value onto a probability-like scale:
/// `1 / (1 - e p ln p)` below `1/e`, and `1/2` otherwise.
pub fn calibrate_p(p: f64) -> f64 {
    let p = p.max(f64::MIN_POSITIVE);
    if p * std::f64::consts::E < 1.0 {
        1.0 / (1.0 - std::f64::consts::E * p * p.ln())
    } else {
        0.5
    }
}

/// Benjamini–Hochberg step-up rule at level `q`; returns per-test reject flags.
pub fn benjamini_hochberg(pvals: &[f64], q: f64) -> Vec<bool> {
    let m = pvals.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| pvals[i].total_cmp(&pvals[j]));
    let k = (0..m).rev().find(|&i| pvals[order[i]] <= (i + 1) as f64 * q / m as f64);
    let mut reject = vec![false; m];
    if let Some(k) = k {
        let cut = pvals[order[k]];
        for (r, &p) in reject.iter_mut().zip(pvals) {
            *r = p <= cut;
        }
    }
    reject
}

/// Fisher p-value for every edge.
pub fn edgewise_fisher(data: &NetworkDataset) -> Vec<f64> {
    (0..EdgeIndex::new(data.v()).len())
        .map(|l| fisher_exact_two_sided(ContingencyTable2x2::for_edge(data, l)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManovaResult {
    pub wilks_lambda: f64,
    pub f_statistic: f64,
    pub df1: f64,
    pub df2: f64,
    pub p_value: f64,
    pub alpha: f64,
    pub reject: bool,
    pub used: Vec<String>,
    /// Statistics left out because they were missing, constant or collinear.
    pub dropped: Vec<String>,
}

/// One-way two-group MANOVA by Wilks' lambda with its exact F transform.
///
/// `rows` are observations; columns are named by `names`. Columns with a
/// missing value, no within-group variation, or that are collinear with
/// earlier columns are dropped.
pub fn manova_two_groups(
    rows: &[Vec<f64>],
    groups: &[Group],
    names: &[&str],
    alpha: f64,
) -> Result<ManovaResult> {
    let n = rows.len();
    if groups.len() != n {
        return Err(Error::Contract("one group label per observation".into()));
    }
    let counts = [0, 1].map(|y| groups.iter().filter(|g| g.index() == y).count());
    let p_all = names.len();

    let mut dropped = Vec::new();
    let mut keep: Vec<usize> = Vec::new();
    for j in 0..p_all {
        if rows.iter().any(|r| !r[j].is_finite()) {
            dropped.push(names[j].to_string());
            continue;
        }
        let mut trial = keep.clone();
        trial.push(j);
        let (w, _) = sscp(rows, groups, &trial);
        if well_conditioned(&w) {
            keep = trial;
        } else {
            dropped.push(names[j].to_string());
        }
    }
    let p = keep.len();
    let used: Vec<String> = keep.iter().map(|&j| names[j].to_string()).collect();
    let degenerate = |dropped| ManovaResult {
        wilks_lambda: 1.0,
        f_statistic: 0.0,
        df1: p as f64,
        df2: n as f64 - p as f64 - 1.0,
        p_value: 1.0,
        alpha,
        reject: false,
        used: used.clone(),
        dropped,
    };
    if p == 0 || counts.iter().any(|&c| c == 0) {
        return Ok(degenerate(dropped));
    }
    if n < p + 2 {
        return Err(Error::Contract(format!("{n} observations are too few for {p} statistics")));
    }
    let (w, b) = sscp(rows, groups, &keep);
    let det_w = w.determinant();
    let det_t = (&w + &b).determinant();
    let lambda = (det_w / det_t).clamp(0.0, 1.0);
    let df1 = p as f64;
    let df2 = (n - p - 1) as f64;
    let f = if lambda > 0.0 { (1.0 - lambda) / lambda * df2 / df1 } else { f64::INFINITY };
    let dist = FisherSnedecor::new(df1, df2).map_err(|e| Error::Contract(e.to_string()))?;
    let p_value = if f.is_finite() { dist.sf(f).clamp(0.0, 1.0) } else { 0.0 };
    Ok(ManovaResult {
        wilks_lambda: lambda,
        f_statistic: f,
        df1,
        df2,
        p_value,
        alpha,
        reject: p_value < alpha,
        used,
        dropped,
    })
}

/// Within-group and between-group sums of squares and cross-products.
fn sscp(rows: &[Vec<f64>], groups: &[Group], cols: &[usize]) -> (DMatrix<f64>, DMatrix<f64>) {
    let p = cols.len();
    let n = rows.len() as f64;
    let mut means = [vec![0.0; p], vec![0.0; p]];
    let mut counts = [0usize; 2];
    let mut grand = vec![0.0; p];
    for (r, g) in rows.iter().zip(groups) {
        counts[g.index()] += 1;
        for (k, &j) in cols.iter().enumerate() {
            means[g.index()][k] += r[j];
            grand[k] += r[j] / n;
        }
    }
    for y in 0..2 {
        if counts[y] > 0 {
            means[y].iter_mut().for_each(|m| *m /= counts[y] as f64);
        }
    }
    let mut w = DMatrix::zeros(p, p);
    for (r, g) in rows.iter().zip(groups) {
        let m = &means[g.index()];
        for a in 0..p {
            for b in 0..p {
                w[(a, b)] += (r[cols[a]] - m[a]) * (r[cols[b]] - m[b]);
            }
        }
    }
    let mut bm = DMatrix::zeros(p, p);
    for y in 0..2 {
        let c = counts[y] as f64;
        for a in 0..p {
            for b in 0..p {
                bm[(a, b)] += c * (means[y][a] - grand[a]) * (means[y][b] - grand[b]);
            }
        }
    }
    (w, bm)
}

/// Determinant of the correlation form of `w` stays away from zero.
fn well_conditioned(w: &DMatrix<f64>) -> bool {
    let d: Vec<f64> = w.diagonal().iter().copied().collect();
    if d.iter().any(|&x| !(x > 1e-12)) {
        return false;
    }
    let corr = DMatrix::from_fn(w.nrows(), w.ncols(), |a, b| w[(a, b)] / (d[a] * d[b]).sqrt());
    corr.determinant() > 1e-10
}

/// MANOVA on the four network summary statistics.
pub fn manova_summary_test(data: &NetworkDataset, alpha: f64) -> Result<ManovaResult> {
    let idx = EdgeIndex::new(data.v());
    let rows: Vec<Vec<f64>> = data
        .networks()
        .iter()
        .map(|e| summary_stats_with_index(e, data.blocks(), &idx).to_array().to_vec())
        .collect();
    manova_two_groups(&rows, data.groups(), &SummaryVector::NAMES, alpha)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineReport {
    pub manova: ManovaResult,
    pub fisher_p: Vec<f64>,
    pub fisher_calibrated: Vec<f64>,
    pub bh_q: f64,
    pub bh_reject: Vec<bool>,
}

pub fn baseline_report(data: &NetworkDataset, alpha: f64, q: f64) -> Result<BaselineReport> {
    let fisher_p = edgewise_fisher(data);
    Ok(BaselineReport {
        manova: manova_summary_test(data, alpha)?,
        fisher_calibrated: fisher_p.iter().map(|&p| calibrate_p(p)).collect(),
        bh_reject: benjamini_hochberg(&fisher_p, q),
        bh_q: q,
        fisher_p,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_xoshiro::Xoshiro256PlusPlus;

    /// Exact two-sided p as a ratio of integer counts.
    fn fisher_oracle(t: ContingencyTable2x2) -> f64 {
        fn choose(n: u64, k: u64) -> u128 {
            let mut r: u128 = 1;
            for i in 0..k.min(n - k) {
                r = r * (n - i) as u128 / (i + 1) as u128;
            }
            r
        }
        let (r1, r2, c1) = (t.a + t.b, t.c + t.d, t.a + t.c);
        let count = |x: u64| choose(r1, x) * choose(r2, c1 - x);
        let lo = c1.saturating_sub(r2);
        let hi = r1.min(c1);
        let obs = count(t.a);
        let total: u128 = (lo..=hi).map(count).sum();
        let tail: u128 =
            (lo..=hi).map(count).filter(|&c| c * 10_000_000 <= obs * 10_000_001).sum();
        tail as f64 / total as f64
    }

    #[test]
    fn fisher_examples() {
        assert!((fisher_exact_two_sided(ContingencyTable2x2::new(2, 0, 0, 2)) - 1.0 / 3.0).abs() < 1e-12);
        assert!((fisher_exact_two_sided(ContingencyTable2x2::new(1, 1, 1, 1)) - 1.0).abs() < 1e-12);
        assert_eq!(fisher_exact_two_sided(ContingencyTable2x2::new(0, 0, 3, 4)), 1.0);
        assert_eq!(fisher_exact_two_sided(ContingencyTable2x2::new(3, 0, 4, 0)), 1.0);
    }

    proptest! {
        #[test]
        fn fisher_matches_enumeration(a in 0u64..16, b in 0u64..16, c in 0u64..16, d in 0u64..16) {
            let t = ContingencyTable2x2::new(a, b, c, d);
            let got = fisher_exact_two_sided(t);
            let want = if a + b == 0 || c + d == 0 || a + c == 0 || b + d == 0 { 1.0 } else { fisher_oracle(t) };
            prop_assert!((got - want).abs() < 1e-9, "{:?}: {} vs {}", t, got, want);
        }

        #[test]
        fn calibration_nonincreasing(p in 1e-12f64..1.0, q in 1e-12f64..1.0) {
            // smaller p-values map to stronger evidence
            let (lo, hi) = if p < q { (p, q) } else { (q, p) };
            prop_assert!(calibrate_p(lo) + 1e-15 >= calibrate_p(hi));
            prop_assert!((0.5..=1.0).contains(&calibrate_p(lo)));
        }

        #[test]
        fn bh_superset_in_q(ps in prop::collection::vec(0.0f64..1.0, 1..40), q1 in 0.01f64..0.5, dq in 0.0f64..0.4) {
            let a = benjamini_hochberg(&ps, q1);
            let b = benjamini_hochberg(&ps, q1 + dq);
            prop_assert!(a.iter().zip(&b).all(|(x, y)| !x || *y));
        }
    }

    #[test]
    fn calibration_examples() {
        assert!((calibrate_p((-1.0f64).exp()) - 0.5).abs() < 1e-15);
        assert_eq!(calibrate_p(0.5), 0.5);
        let want = 1.0 / (1.0 - std::f64::consts::E * 0.01 * 0.01f64.ln());
        assert!((calibrate_p(0.01) - want).abs() < 1e-15);
        assert!((calibrate_p(0.01) - 0.8887).abs() < 1e-4);
        assert!(calibrate_p(0.0).is_finite());
    }

    #[test]
    fn bh_examples() {
        assert_eq!(benjamini_hochberg(&[0.01, 0.02, 0.2], 0.1), vec![true, true, false]);
        assert_eq!(benjamini_hochberg(&[1.0, 1.0], 0.1), vec![false, false]);
        assert_eq!(benjamini_hochberg(&[0.05], 0.1), vec![true]);
        assert!(benjamini_hochberg(&[], 0.1).is_empty());
    }

    fn gaussian_rows(n: usize, shift: f64, rng: &mut impl Rng) -> (Vec<Vec<f64>>, Vec<Group>) {
        use rand_distr::{Distribution, StandardNormal};
        let mut rows = Vec::new();
        let mut groups = Vec::new();
        for i in 0..n {
            let g = if i < n / 2 { Group::One } else { Group::Two };
            let s = if g == Group::Two { shift } else { 0.0 };
            rows.push((0..3).map(|k| {
                let e: f64 = StandardNormal.sample(rng);
                e + if k == 0 { s } else { 0.0 }
            }).collect());
            groups.push(g);
        }
        (rows, groups)
    }

    #[test]
    fn manova_size_and_power() {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(3);
        let names = ["x", "y", "z"];
        let reps = 400;
        let mut rej = 0;
        for _ in 0..reps {
            let (rows, g) = gaussian_rows(40, 0.0, &mut rng);
            rej += manova_two_groups(&rows, &g, &names, 0.1).unwrap().reject as usize;
        }
        let rate = rej as f64 / reps as f64;
        assert!((rate - 0.1).abs() < 0.05, "{rate}");
        let (rows, g) = gaussian_rows(40, 3.0, &mut rng);
        assert!(manova_two_groups(&rows, &g, &names, 0.1).unwrap().reject);
    }

    #[test]
    fn manova_label_swap_and_drops() {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(4);
        let (mut rows, g) = gaussian_rows(30, 0.5, &mut rng);
        for r in rows.iter_mut() {
            r.push(2.0 * r[0] - r[1]);
            r.push(f64::NAN);
        }
        let names = ["x", "y", "z", "combo", "missing"];
        let a = manova_two_groups(&rows, &g, &names, 0.1).unwrap();
        assert_eq!(a.dropped, vec!["combo", "missing"]);
        let swapped: Vec<Group> = g.iter().map(|g| Group::from_index(1 - g.index())).collect();
        let b = manova_two_groups(&rows, &swapped, &names, 0.1).unwrap();
        assert!((a.p_value - b.p_value).abs() < 1e-12);
        assert!((0.0..=1.0).contains(&a.p_value));
    }
}
