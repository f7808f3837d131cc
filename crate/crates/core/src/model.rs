//! Dependent mixture of low-rank logistic factorizations.
//!
//! Component `h` assigns edge `l = (v, u)` the probability
//! `logistic(z[l] + Σ_r λ_r x[v, r] x[u, r])`. Group `y` draws its component
//! from the mixing vector `ν_y`, and edges are independent given the
//! component. The groups share everything except `ν_y`, so
//! `ν_1 = ν_2` is equivalent to equality of the two network distributions.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{n_pairs, EdgeIndex, EdgeVector, Group};
use crate::math::{clamped_log_pair, log_sum_exp, logistic};

/// Largest node count accepted by [`MixtureSnapshot::enumerate_pmf`].
pub const ENUMERATION_MAX_V: usize = 5;

/// Latent coordinates and nonnegative weights of one mixture component.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentFactors {
    pub x: DMatrix<f64>,
    pub lambda: Vec<f64>,
}

impl ComponentFactors {
    pub fn new(x: DMatrix<f64>, lambda: Vec<f64>) -> Result<Self> {
        if lambda.is_empty() {
            return Err(Error::Contract("rank must be at least 1".into()));
        }
        if x.ncols() != lambda.len() {
            return Err(Error::Contract(format!(
                "coordinates have {} columns, weights have {} entries",
                x.ncols(),
                lambda.len()
            )));
        }
        if let Some(w) = lambda.iter().find(|w| !(**w >= 0.0)) {
            return Err(Error::Contract(format!("negative or NaN weight {w}")));
        }
        Ok(Self { x, lambda })
    }

    /// All-zero coordinates with unit weights.
    pub fn zeros(v: usize, r: usize) -> Self {
        Self { x: DMatrix::zeros(v, r), lambda: vec![1.0; r] }
    }

    pub fn rank(&self) -> usize {
        self.lambda.len()
    }

    /// The weighted dot products `Σ_r λ_r x[v, r] x[u, r]` for every pair.
    pub fn log_odds_offsets(&self, idx: &EdgeIndex) -> Vec<f64> {
        idx.pairs()
            .iter()
            .map(|&(a, b)| {
                (0..self.rank())
                    .map(|r| self.lambda[r] * self.x[(a, r)] * self.x[(b, r)])
                    .sum()
            })
            .collect()
    }
}

/// Per-edge probabilities of one component, or a group mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EdgeProbabilityVector(Vec<f64>);

impl EdgeProbabilityVector {
    pub fn new(pi: Vec<f64>) -> Result<Self> {
        if let Some(p) = pi.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::Contract(format!("edge probability {p} outside [0, 1]")));
        }
        Ok(Self(pi))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl std::ops::Index<usize> for EdgeProbabilityVector {
    type Output = f64;
    fn index(&self, l: usize) -> &f64 {
        &self.0[l]
    }
}

pub fn component_edge_probs(
    z: &[f64],
    c: &ComponentFactors,
    idx: &EdgeIndex,
) -> Result<EdgeProbabilityVector> {
    if z.len() != idx.len() || c.x.nrows() != idx.v() {
        return Err(Error::Contract(format!(
            "dimension mismatch: z has {} entries, coordinates have {} rows, index is for v = {}",
            z.len(),
            c.x.nrows(),
            idx.v()
        )));
    }
    let d = c.log_odds_offsets(idx);
    Ok(EdgeProbabilityVector(z.iter().zip(&d).map(|(z, d)| logistic(z + d)).collect()))
}

/// One full parameter state of the model.
///
/// Component assignments `g` are 0-based.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureModelState {
    pub p_y1: f64,
    pub nu: [Vec<f64>; 2],
    pub upsilon: Vec<f64>,
    /// Hypothesis indicator: `false` for equal mixing vectors.
    pub t: bool,
    pub z: Vec<f64>,
    pub components: Vec<ComponentFactors>,
    pub g: Vec<usize>,
}

fn check_simplex(name: &str, w: &[f64]) -> Result<()> {
    let s: f64 = w.iter().sum();
    if (s - 1.0).abs() > 1e-9 || w.iter().any(|x| !(0.0..=1.0).contains(x)) {
        return Err(Error::Contract(format!("{name} is not a probability vector: {w:?}")));
    }
    Ok(())
}

impl MixtureModelState {
    pub fn h(&self) -> usize {
        self.components.len()
    }

    pub fn v(&self) -> usize {
        self.components.first().map_or(0, |c| c.x.nrows())
    }

    pub fn validate(&self) -> Result<()> {
        let h = self.h();
        if h == 0 {
            return Err(Error::Contract("state has no components".into()));
        }
        if !(self.p_y1 > 0.0 && self.p_y1 < 1.0) {
            return Err(Error::Contract(format!("p_y1 = {} outside (0, 1)", self.p_y1)));
        }
        for (name, w) in [("nu_1", &self.nu[0]), ("nu_2", &self.nu[1]), ("upsilon", &self.upsilon)]
        {
            if w.len() != h {
                return Err(Error::Contract(format!("{name} has {} entries, H = {h}", w.len())));
            }
            check_simplex(name, w)?;
        }
        if !self.t && (self.nu[0] != self.upsilon || self.nu[1] != self.upsilon) {
            return Err(Error::Contract("t = 0 requires nu_1 = nu_2 = upsilon".into()));
        }
        let v = self.v();
        if self.z.len() != n_pairs(v) {
            return Err(Error::Contract(format!("z has {} entries for v = {v}", self.z.len())));
        }
        if self.components.iter().any(|c| c.x.nrows() != v) {
            return Err(Error::Contract("components disagree on v".into()));
        }
        if let Some(g) = self.g.iter().find(|&&g| g >= h) {
            return Err(Error::Contract(format!("assignment {g} out of range for H = {h}")));
        }
        Ok(())
    }

    /// Evaluates every component's edge probabilities.
    pub fn snapshot(&self, idx: &EdgeIndex) -> Result<MixtureSnapshot> {
        let pi = self
            .components
            .iter()
            .map(|c| component_edge_probs(&self.z, c, idx).map(EdgeProbabilityVector::into_inner))
            .collect::<Result<Vec<_>>>()?;
        MixtureSnapshot::new(idx.v(), self.p_y1, self.nu.clone(), pi)
    }
}

/// The identified part of a state: group probability, mixing vectors and
/// component edge probabilities. Every reported functional is computed from
/// this.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureSnapshot {
    pub v: usize,
    pub p_y1: f64,
    pub nu: [Vec<f64>; 2],
    /// `pi[h][l]`.
    pub pi: Vec<Vec<f64>>,
}

impl MixtureSnapshot {
    pub fn new(v: usize, p_y1: f64, nu: [Vec<f64>; 2], pi: Vec<Vec<f64>>) -> Result<Self> {
        let h = pi.len();
        if h == 0 || nu[0].len() != h || nu[1].len() != h {
            return Err(Error::Contract(format!(
                "{h} components but mixing vectors of length {} and {}",
                nu[0].len(),
                nu[1].len()
            )));
        }
        if pi.iter().any(|p| p.len() != n_pairs(v)) {
            return Err(Error::Contract(format!("component length differs from {}", n_pairs(v))));
        }
        if !(0.0..=1.0).contains(&p_y1) {
            return Err(Error::Contract(format!("p_y1 = {p_y1} outside [0, 1]")));
        }
        check_simplex("nu_1", &nu[0])?;
        check_simplex("nu_2", &nu[1])?;
        Ok(Self { v, p_y1, nu, pi })
    }

    pub fn h(&self) -> usize {
        self.pi.len()
    }

    pub fn n_edges(&self) -> usize {
        n_pairs(self.v)
    }

    pub fn p_y(&self, y: Group) -> f64 {
        match y {
            Group::One => self.p_y1,
            Group::Two => 1.0 - self.p_y1,
        }
    }

    /// `π̄_y[l] = Σ_h ν_hy π_l^(h)`.
    pub fn group_edge_probs(&self, y: Group) -> EdgeProbabilityVector {
        let nu = &self.nu[y.index()];
        let mut out = vec![0.0; self.n_edges()];
        for (w, pi) in nu.iter().zip(&self.pi) {
            for (o, p) in out.iter_mut().zip(pi) {
                *o += w * p;
            }
        }
        EdgeProbabilityVector(out)
    }

    /// Unconditional edge probabilities `Σ_y p_Y(y) π̄_y[l]`.
    pub fn marginal_edge_probs(&self) -> EdgeProbabilityVector {
        let a = self.group_edge_probs(Group::One);
        let b = self.group_edge_probs(Group::Two);
        EdgeProbabilityVector(
            a.0.iter().zip(&b.0).map(|(a, b)| self.p_y1 * a + (1.0 - self.p_y1) * b).collect(),
        )
    }

    /// Model-based Cramér's V between the group label and edge `l`.
    pub fn cramers_v(&self, l: usize) -> f64 {
        let p1: f64 = self.nu[0].iter().zip(&self.pi).map(|(w, p)| w * p[l]).sum();
        let p2: f64 = self.nu[1].iter().zip(&self.pi).map(|(w, p)| w * p[l]).sum();
        cramers_v_from_conditionals(self.p_y1, p1, p2)
    }

    pub fn cramers_v_all(&self) -> Vec<f64> {
        let a = self.group_edge_probs(Group::One);
        let b = self.group_edge_probs(Group::Two);
        a.0.iter().zip(&b.0).map(|(&p1, &p2)| cramers_v_from_conditionals(self.p_y1, p1, p2)).collect()
    }

    /// Per-component log-likelihood of `a`, before mixing.
    pub fn component_log_likelihoods(&self, a: &EdgeVector) -> Vec<f64> {
        self.pi
            .iter()
            .map(|pi| {
                pi.iter()
                    .zip(a.bits())
                    .map(|(&p, &bit)| {
                        let (lp, lq) = clamped_log_pair(p);
                        if bit == 1 {
                            lp
                        } else {
                            lq
                        }
                    })
                    .sum()
            })
            .collect()
    }

    /// `ln p(a | y)` via log-sum-exp over components.
    pub fn log_pmf(&self, a: &EdgeVector, y: Group) -> f64 {
        let ll = self.component_log_likelihoods(a);
        let terms: Vec<f64> =
            self.nu[y.index()].iter().zip(&ll).map(|(w, l)| w.ln() + l).collect();
        log_sum_exp(&terms)
    }

    pub fn pmf(&self, a: &EdgeVector, y: Group) -> f64 {
        self.log_pmf(a, y).exp()
    }

    /// Draws a component from `ν_y`, then independent edges from it.
    pub fn sample_network<R: Rng + ?Sized>(&self, y: Group, rng: &mut R) -> (EdgeVector, usize) {
        let h = sample_categorical(&self.nu[y.index()], rng);
        let bits =
            self.pi[h].iter().map(|&p| u8::from(rng.random::<f64>() < p)).collect::<Vec<_>>();
        (EdgeVector::new(self.v, bits).expect("sampled vector has the right length"), h)
    }

    /// Exhaustive `p(a | y)` over all configurations; entry `k` is the
    /// configuration whose bit `l` is edge `l`.
    pub fn enumerate_pmf(&self, y: Group) -> Result<Vec<f64>> {
        if self.v > ENUMERATION_MAX_V {
            return Err(Error::Contract(format!(
                "enumeration refused for v = {} (max {ENUMERATION_MAX_V})",
                self.v
            )));
        }
        let m = self.n_edges();
        Ok((0..1usize << m)
            .map(|k| self.pmf(&config_from_mask(self.v, k), y))
            .collect())
    }
}

/// Configuration `k` of [`MixtureSnapshot::enumerate_pmf`].
pub fn config_from_mask(v: usize, k: usize) -> EdgeVector {
    let bits = (0..n_pairs(v)).map(|l| ((k >> l) & 1) as u8).collect();
    EdgeVector::new(v, bits).expect("mask length matches v")
}

/// Cramér's V for a binary edge given `p_Y(1)` and the two conditional edge
/// probabilities.
pub fn cramers_v_from_conditionals(p_y1: f64, p1: f64, p2: f64) -> f64 {
    if p1 == p2 {
        return 0.0;
    }
    let marg1 = p_y1 * p1 + (1.0 - p_y1) * p2;
    let mut rho2 = 0.0;
    for (py, cond1) in [(p_y1, p1), (1.0 - p_y1, p2)] {
        for (cond, marg) in [(cond1, marg1), (1.0 - cond1, 1.0 - marg1)] {
            let diff = cond - marg;
            if marg > 0.0 {
                rho2 += py * diff * diff / marg;
            }
        }
    }
    rho2.sqrt().min(1.0)
}

pub fn sample_categorical<R: Rng + ?Sized>(w: &[f64], rng: &mut R) -> usize {
    let total: f64 = w.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (h, &x) in w.iter().enumerate() {
        if u < x {
            return h;
        }
        u -= x;
    }
    w.iter().rposition(|&x| x > 0.0).unwrap_or(w.len() - 1)
}

pub fn mixture_pmf(a: &EdgeVector, y: Group, state: &MixtureModelState) -> Result<f64> {
    Ok(state.snapshot(&EdgeIndex::new(state.v()))?.pmf(a, y))
}

pub fn group_edge_probs(state: &MixtureModelState, y: Group) -> Result<EdgeProbabilityVector> {
    Ok(state.snapshot(&EdgeIndex::new(state.v()))?.group_edge_probs(y))
}

pub fn cramers_v(state: &MixtureModelState, l: usize) -> Result<f64> {
    let snap = state.snapshot(&EdgeIndex::new(state.v()))?;
    if l >= snap.n_edges() {
        return Err(Error::Contract(format!("edge index {l} out of range")));
    }
    Ok(snap.cramers_v(l))
}

pub fn sample_network<R: Rng + ?Sized>(
    state: &MixtureModelState,
    y: Group,
    rng: &mut R,
) -> Result<(EdgeVector, usize)> {
    Ok(state.snapshot(&EdgeIndex::new(state.v()))?.sample_network(y, rng))
}

pub fn enumerate_pmf(state: &MixtureModelState, y: Group) -> Result<Vec<f64>> {
    state.snapshot(&EdgeIndex::new(state.v()))?.enumerate_pmf(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::logit;
    use rand::SeedableRng;
    use rand_xoshiro::Xoshiro256PlusPlus;

    fn snap(v: usize, p_y1: f64, nu: [Vec<f64>; 2], pi: Vec<Vec<f64>>) -> MixtureSnapshot {
        MixtureSnapshot::new(v, p_y1, nu, pi).unwrap()
    }

    #[test]
    fn component_probs_closed_forms() {
        let idx = EdgeIndex::new(3);
        let c = ComponentFactors::new(DMatrix::zeros(3, 2), vec![0.0, 0.0]).unwrap();
        let p = component_edge_probs(&[0.0; 3], &c, &idx).unwrap();
        assert!(p.as_slice().iter().all(|&x| x == 0.5));

        let p = component_edge_probs(&[logit(0.75); 3], &c, &idx).unwrap();
        assert!(p.as_slice().iter().all(|&x| (x - 0.75).abs() < 1e-15));

        let c = ComponentFactors::new(DMatrix::from_element(3, 1, 1.0), vec![1.0]).unwrap();
        let p = component_edge_probs(&[0.0; 3], &c, &idx).unwrap();
        assert!((p[0] - 0.731_058_578_630_004_9).abs() < 1e-12);

        assert!(component_edge_probs(&[0.0; 2], &c, &idx).is_err());
        assert!(ComponentFactors::new(DMatrix::zeros(3, 1), vec![-1.0]).is_err());
    }

    #[test]
    fn single_component_is_bernoulli_product() {
        let s = snap(3, 0.5, [vec![1.0], vec![1.0]], vec![vec![0.2, 0.7, 0.4]]);
        let a = EdgeVector::new(3, vec![1, 0, 1]).unwrap();
        assert!((s.pmf(&a, Group::One) - 0.2 * 0.3 * 0.4).abs() < 1e-15);
    }

    #[test]
    fn symmetric_two_component_single_edge() {
        let s = snap(2, 0.5, [vec![0.5, 0.5], vec![0.5, 0.5]], vec![vec![0.2], vec![0.8]]);
        let a = EdgeVector::new(2, vec![1]).unwrap();
        assert!((s.pmf(&a, Group::One) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn group_probs_example() {
        let s = snap(2, 0.5, [vec![0.3, 0.7], vec![0.5, 0.5]], vec![vec![0.2], vec![0.6]]);
        assert!((s.group_edge_probs(Group::One)[0] - 0.48).abs() < 1e-15);
        let s = snap(2, 0.5, [vec![0.3, 0.7], vec![0.3, 0.7]], vec![vec![0.2], vec![0.2]]);
        assert!((s.group_edge_probs(Group::Two)[0] - 0.2).abs() < 1e-15);
        assert_eq!(s.cramers_v(0), 0.0);
    }

    #[test]
    fn cramers_v_examples() {
        assert!((cramers_v_from_conditionals(0.5, 0.8, 0.2) - 0.6).abs() < 1e-12);
        assert_eq!(cramers_v_from_conditionals(0.3, 0.4, 0.4), 0.0);
        let eps = 1e-6;
        assert!((cramers_v_from_conditionals(0.5, 1.0 - eps, eps) - 1.0).abs() < 1e-4);
        // degenerate marginal with equal conditionals
        assert_eq!(cramers_v_from_conditionals(0.5, 0.0, 0.0), 0.0);
        assert_eq!(cramers_v_from_conditionals(0.5, 1.0, 1.0), 0.0);
    }

    #[test]
    fn sampling_extremes() {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(1);
        let s = snap(4, 0.5, [vec![0.5, 0.5], vec![0.5, 0.5]], vec![vec![1.0; 6], vec![1.0; 6]]);
        assert_eq!(s.sample_network(Group::One, &mut rng).0.n_edges(), 6);
        let s = snap(4, 0.5, [vec![1.0], vec![1.0]], vec![vec![0.0; 6]]);
        assert_eq!(s.sample_network(Group::Two, &mut rng).0.n_edges(), 0);
    }

    #[test]
    fn log_space_matches_direct_product() {
        let s = snap(
            3,
            0.4,
            [vec![0.25, 0.75], vec![0.6, 0.4]],
            vec![vec![0.1, 0.5, 0.9], vec![0.3, 0.2, 0.6]],
        );
        for k in 0..8 {
            let a = config_from_mask(3, k);
            for y in Group::BOTH {
                let direct: f64 = (0..2)
                    .map(|h| {
                        s.nu[y.index()][h]
                            * (0..3)
                                .map(|l| if a.get(l) { s.pi[h][l] } else { 1.0 - s.pi[h][l] })
                                .product::<f64>()
                    })
                    .sum();
                assert!((s.pmf(&a, y) - direct).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn uniform_enumeration() {
        let s = snap(3, 0.5, [vec![1.0], vec![1.0]], vec![vec![0.5; 3]]);
        let table = s.enumerate_pmf(Group::One).unwrap();
        assert_eq!(table.len(), 8);
        assert!(table.iter().all(|p| (p - 0.125).abs() < 1e-15));
        let big = snap(6, 0.5, [vec![1.0], vec![1.0]], vec![vec![0.5; 15]]);
        assert!(big.enumerate_pmf(Group::One).is_err());
    }

    #[test]
    fn state_validation() {
        let v = 3;
        let mut st = MixtureModelState {
            p_y1: 0.5,
            nu: [vec![0.5, 0.5], vec![0.5, 0.5]],
            upsilon: vec![0.5, 0.5],
            t: false,
            z: vec![0.0; 3],
            components: vec![ComponentFactors::zeros(v, 1), ComponentFactors::zeros(v, 1)],
            g: vec![0, 1],
        };
        st.validate().unwrap();
        st.nu[0] = vec![0.2, 0.8];
        assert!(st.validate().is_err());
        st.t = true;
        st.validate().unwrap();
        st.g.push(2);
        assert!(st.validate().is_err());
    }
}
