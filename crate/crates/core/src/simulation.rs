//! Scenario generators, replicated studies and their scoring.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{benjamini_hochberg, edgewise_fisher, manova_summary_test};
use crate::error::{Error, Result};
use crate::graph::{EdgeIndex, Group, NetworkDataset};
use crate::inference::{run_chains, GibbsConfig, Hyperparameters};
use crate::math::logit;
use crate::model::{ComponentFactors, MixtureSnapshot};
use crate::testing::{global_test, local_tests};

/// Latent factors of one true component; `x` is `v × r`, row per node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentSpec {
    pub x: Vec<Vec<f64>>,
    pub lambda: Vec<f64>,
}

/// A fully specified data-generating mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub name: String,
    pub n: usize,
    pub v: usize,
    /// Block id per node.
    pub blocks: Vec<usize>,
    /// Shared log-odds for pairs inside one block.
    pub z_within: f64,
    /// Shared log-odds for pairs across blocks.
    pub z_between: f64,
    pub components: Vec<ComponentSpec>,
    pub nu: [Vec<f64>; 2],
    pub p_y1: f64,
    /// Nodes with nonzero latent coordinates.
    pub active_nodes: Vec<usize>,
    pub seed: u64,
}

impl ScenarioSpec {
    pub fn h_true(&self) -> usize {
        self.components.len()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("scenario {}: {m}", self.name)));
        if self.blocks.len() != self.v {
            return bad(format!("{} block ids for {} nodes", self.blocks.len(), self.v));
        }
        if self.components.is_empty() {
            return bad("no components".into());
        }
        for y in 0..2 {
            let s: f64 = self.nu[y].iter().sum();
            if self.nu[y].len() != self.h_true() || (s - 1.0).abs() > 1e-9 || self.nu[y].iter().any(|w| *w < 0.0) {
                return bad(format!("mixing vector {} is not a distribution over components", y + 1));
            }
        }
        if !(self.p_y1 > 0.0 && self.p_y1 < 1.0) {
            return bad("p_y1 must lie in (0, 1)".into());
        }
        if self.active_nodes.iter().any(|&a| a >= self.v) {
            return bad("active node outside the node set".into());
        }
        for c in &self.components {
            if c.x.len() != self.v || c.x.iter().any(|r| r.len() != c.lambda.len()) {
                return bad("factor matrix shape".into());
            }
        }
        Ok(())
    }

    pub fn shared_log_odds(&self) -> Vec<f64> {
        EdgeIndex::new(self.v)
            .pairs()
            .iter()
            .map(|&(a, b)| if self.blocks[a] == self.blocks[b] { self.z_within } else { self.z_between })
            .collect()
    }

    /// The true parameters as a mixture draw.
    pub fn truth(&self) -> Result<MixtureSnapshot> {
        self.validate()?;
        let idx = EdgeIndex::new(self.v);
        let z = self.shared_log_odds();
        let pi = self
            .components
            .iter()
            .map(|c| {
                let r = c.lambda.len();
                let x = DMatrix::from_fn(self.v, r, |a, k| c.x[a][k]);
                let f = ComponentFactors::new(x, c.lambda.clone())?;
                Ok(crate::model::component_edge_probs(&z, &f, &idx)?.into_inner())
            })
            .collect::<Result<Vec<_>>>()?;
        MixtureSnapshot::new(self.v, self.p_y1, self.nu.clone(), pi)
    }

    /// `δ_l = 1` where the true group edge probabilities differ.
    pub fn local_truth(&self) -> Result<Vec<bool>> {
        let t = self.truth()?;
        let p1 = t.group_edge_probs(Group::One);
        let p2 = t.group_edge_probs(Group::Two);
        Ok(p1.as_slice().iter().zip(p2.as_slice()).map(|(a, b)| (a - b).abs() > 1e-12).collect())
    }

    /// Draws a dataset. The first `round(n p_Y(1))` subjects are in group 1.
    pub fn generate<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<NetworkDataset> {
        let truth = self.truth()?;
        let n1 = ((self.n as f64) * self.p_y1).round() as usize;
        let mut nets = Vec::with_capacity(self.n);
        let mut groups = Vec::with_capacity(self.n);
        for i in 0..self.n {
            let y = if i < n1 { Group::One } else { Group::Two };
            nets.push(truth.sample_network(y, rng).0);
            groups.push(y);
        }
        NetworkDataset::new(self.v, nets, groups, Some(self.blocks.clone()))
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(path, e))
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let s: Self = serde_json::from_str(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)?;
        s.validate()?;
        Ok(s)
    }
}

const V_SIM: usize = 20;

fn two_blocks(v: usize) -> Vec<usize> {
    (0..v).map(|a| (a >= v / 2) as usize).collect()
}

/// Magnitude of the nonzero coordinates in scenario 1.
pub const SCENARIO1_COORD: f64 = std::f64::consts::SQRT_2;

/// Two components that differ only on the four pairs joining node 0 to
/// nodes 1–4. Component 2 is component 1 with nodes 1↔3 and 2↔4 swapped,
/// all inside one block, so every network summary has the same law in both
/// components and hence in both groups.
pub fn scenario1_spec(dependent: bool, n: usize, seed: u64) -> ScenarioSpec {
    let v = V_SIM;
    let signs = [[1.0, 1.0, 1.0, -1.0, -1.0], [1.0, -1.0, -1.0, 1.0, 1.0]];
    let components = signs
        .iter()
        .map(|s| ComponentSpec {
            x: (0..v).map(|a| vec![if a < 5 { s[a] * SCENARIO1_COORD } else { 0.0 }]).collect(),
            lambda: vec![1.0],
        })
        .collect();
    let nu = if dependent {
        [vec![0.8, 0.2], vec![0.2, 0.8]]
    } else {
        [vec![0.5, 0.5], vec![0.5, 0.5]]
    };
    ScenarioSpec {
        name: if dependent { "scenario1-dependent" } else { "scenario1-independent" }.into(),
        n,
        v,
        blocks: two_blocks(v),
        z_within: 0.0,
        z_between: logit(0.2),
        components,
        nu,
        p_y1: 0.5,
        active_nodes: (0..5).collect(),
        seed,
    }
}

pub fn make_scenario1(dependent: bool, seed: u64) -> Result<(ScenarioSpec, NetworkDataset, Vec<bool>)> {
    build(scenario1_spec(dependent, 50, seed))
}

/// Three components sharing within-block probability 0.75 whose
/// between-block probabilities are 0.5, 0.8 and 0.2. Group 1 uses the first
/// only, group 2 splits evenly between the others, so group edge marginals
/// agree while the joint laws differ.
pub fn scenario2_spec(n: usize, seed: u64) -> ScenarioSpec {
    let v = V_SIM;
    let blocks = two_blocks(v);
    let sq = 3.0f64.sqrt();
    let between = [0.0, logit(0.8), logit(0.2)];
    let components = between
        .iter()
        .map(|&q| {
            let cos = q / 3.0;
            let sin = (1.0 - cos * cos).sqrt();
            ComponentSpec {
                x: blocks
                    .iter()
                    .map(|&b| if b == 0 { vec![sq, 0.0] } else { vec![sq * cos, sq * sin] })
                    .collect(),
                lambda: vec![1.0, 1.0],
            }
        })
        .collect();
    ScenarioSpec {
        name: "scenario2".into(),
        n,
        v,
        blocks,
        z_within: logit(0.75) - 3.0,
        z_between: 0.0,
        components,
        nu: [vec![1.0, 0.0, 0.0], vec![0.0, 0.5, 0.5]],
        p_y1: 0.5,
        active_nodes: (0..v).collect(),
        seed,
    }
}

pub fn make_scenario2(seed: u64) -> Result<(ScenarioSpec, NetworkDataset, Vec<bool>)> {
    build(scenario2_spec(50, seed))
}

fn build(spec: ScenarioSpec) -> Result<(ScenarioSpec, NetworkDataset, Vec<bool>)> {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(spec.seed);
    let data = spec.generate(&mut rng)?;
    let truth = spec.local_truth()?;
    Ok((spec, data, truth))
}

/// Scenario names accepted by [`scenario_by_name`].
pub const SCENARIO_NAMES: [&str; 3] = ["scenario1-dependent", "scenario1-independent", "scenario2"];

pub fn scenario_by_name(name: &str, n: usize, seed: u64) -> Option<ScenarioSpec> {
    match name {
        "scenario1-dependent" => Some(scenario1_spec(true, n, seed)),
        "scenario1-independent" => Some(scenario1_spec(false, n, seed)),
        "scenario2" => Some(scenario2_spec(n, seed)),
        _ => None,
    }
}

/// Number of edges joining the two blocks.
pub fn between_block_edges(net: &crate::graph::EdgeVector, blocks: &[usize]) -> usize {
    let idx = EdgeIndex::new(net.v());
    net.ones().filter(|&l| {
        let (a, b) = idx.pair(l);
        blocks[a] != blocks[b]
    }).count()
}

/// Sample bimodality coefficient `(g² + 1) / (k + 3(n-1)² / ((n-2)(n-3)))`
/// with sample skewness `g` and excess kurtosis `k`. Values above `5/9`
/// suggest bimodality.
pub fn bimodality_coefficient(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let m = crate::math::mean(xs);
    let m2 = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    let m3 = xs.iter().map(|x| (x - m).powi(3)).sum::<f64>() / n;
    let m4 = xs.iter().map(|x| (x - m).powi(4)).sum::<f64>() / n;
    if m2 <= 0.0 {
        return 0.0;
    }
    let g1 = m3 / m2.powf(1.5);
    let g2 = m4 / (m2 * m2) - 3.0;
    // bias-corrected sample skewness and excess kurtosis
    let skew = g1 * (n * (n - 1.0)).sqrt() / (n - 2.0);
    let kurt = (n - 1.0) / ((n - 2.0) * (n - 3.0)) * ((n + 1.0) * g2 + 6.0);
    (skew * skew + 1.0) / (kurt + 3.0 * (n - 1.0).powi(2) / ((n - 2.0) * (n - 3.0)))
}

pub const BIMODALITY_THRESHOLD: f64 = 5.0 / 9.0;

/// Area under the ROC curve of `scores` against binary `labels`, ties
/// counted as one half. `None` if either class is empty.
pub fn auc(scores: &[f64], labels: &[bool]) -> Option<f64> {
    let mut items: Vec<(f64, bool)> = scores.iter().copied().zip(labels.iter().copied()).collect();
    let n_pos = items.iter().filter(|x| x.1).count();
    let n_neg = items.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    items.sort_by(|a, b| a.0.total_cmp(&b.0));
    // rank-sum with midranks
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < items.len() {
        let mut j = i;
        while j + 1 < items.len() && items[j + 1].0 == items[i].0 {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += mid * items[i..=j].iter().filter(|x| x.1).count() as f64;
        i = j + 1;
    }
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Some(u / (n_pos * n_neg) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    MixtureModel,
    FisherBh,
    Manova,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::MixtureModel, Method::FisherBh, Method::Manova];
}

/// Error rates of one method over a set of replicates. Rates that the method
/// does not produce are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScorePanel {
    pub method: Method,
    pub global_type_i: Option<f64>,
    pub global_type_ii: Option<f64>,
    pub local_type_i: Option<f64>,
    pub local_type_ii: Option<f64>,
    pub fwer: Option<f64>,
    pub fdr: Option<f64>,
    pub auc_min: Option<f64>,
    pub auc_mean: Option<f64>,
    pub auc_median: Option<f64>,
    pub auc_max: Option<f64>,
    pub replicates: usize,
    pub failures: usize,
}

/// Outcome of one method on one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub scenario: String,
    pub replicate: usize,
    pub seed: u64,
    pub n: usize,
    pub method: Method,
    /// Global alternative is true for this dataset.
    pub h1_true: bool,
    pub global_score: Option<f64>,
    pub global_reject: Option<bool>,
    pub false_rejections: Option<usize>,
    pub true_rejections: Option<usize>,
    pub n_null: usize,
    pub n_alt: usize,
    pub auc: Option<f64>,
    pub failed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub hyper: Hyperparameters,
    pub gibbs: GibbsConfig,
    pub global_threshold: f64,
    pub local_threshold: f64,
    pub epsilon: f64,
    pub manova_alpha: f64,
    pub bh_q: f64,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            hyper: Hyperparameters::default(),
            gibbs: GibbsConfig { posterior_predictive: false, ..Default::default() },
            global_threshold: 0.9,
            local_threshold: 0.9,
            epsilon: 0.1,
            manova_alpha: 0.1,
            bh_q: 0.1,
        }
    }
}

/// Runs every method on one dataset.
pub fn evaluate_replicate(
    spec: &ScenarioSpec,
    replicate: usize,
    methods: &[Method],
    cfg: &StudyConfig,
) -> Vec<ReplicateRecord> {
    let seed = spec.seed;
    let generated = (|| {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
        let data = spec.generate(&mut rng)?;
        let delta = spec.local_truth()?;
        let h1 = spec.nu[0] != spec.nu[1];
        Ok::<_, Error>((data, delta, h1))
    })();
    let (data, delta, h1_true) = match generated {
        Ok(x) => x,
        Err(_) => {
            return methods.iter().map(|&m| failed_record(spec, replicate, m, false, &[])).collect()
        }
    };
    let n_alt = delta.iter().filter(|&&d| d).count();
    let n_null = delta.len() - n_alt;
    let base = |method| ReplicateRecord {
        scenario: spec.name.clone(),
        replicate,
        seed,
        n: spec.n,
        method,
        h1_true,
        global_score: None,
        global_reject: None,
        false_rejections: None,
        true_rejections: None,
        n_null,
        n_alt,
        auc: None,
        failed: false,
    };
    let count = |reject: &[bool]| {
        let fp = reject.iter().zip(&delta).filter(|(r, d)| **r && !**d).count();
        let tp = reject.iter().zip(&delta).filter(|(r, d)| **r && **d).count();
        (fp, tp)
    };

    methods
        .iter()
        .map(|&method| match method {
            Method::MixtureModel => {
                let gibbs = GibbsConfig { seed: seed ^ 0x5eed, ..cfg.gibbs.clone() };
                let fitted = run_chains(&data, &cfg.hyper, &gibbs).and_then(|chains| {
                    let g = global_test(&chains, cfg.global_threshold)?;
                    let l = local_tests(&chains, cfg.epsilon, cfg.local_threshold)?;
                    Ok((g, l))
                });
                match fitted {
                    Ok(((p, reject), (local_pr, decisions))) => {
                        let (fp, tp) = count(&decisions);
                        ReplicateRecord {
                            global_score: Some(p),
                            global_reject: Some(reject),
                            false_rejections: Some(fp),
                            true_rejections: Some(tp),
                            auc: auc(&local_pr, &delta),
                            ..base(method)
                        }
                    }
                    Err(_) => failed_record(spec, replicate, method, h1_true, &delta),
                }
            }
            Method::FisherBh => {
                let p = edgewise_fisher(&data);
                let reject = benjamini_hochberg(&p, cfg.bh_q);
                let (fp, tp) = count(&reject);
                let scores: Vec<f64> = p.iter().map(|p| 1.0 - p).collect();
                ReplicateRecord {
                    false_rejections: Some(fp),
                    true_rejections: Some(tp),
                    auc: auc(&scores, &delta),
                    ..base(method)
                }
            }
            Method::Manova => match manova_summary_test(&data, cfg.manova_alpha) {
                Ok(r) => ReplicateRecord {
                    global_score: Some(r.p_value),
                    global_reject: Some(r.reject),
                    ..base(method)
                },
                Err(_) => failed_record(spec, replicate, method, h1_true, &delta),
            },
        })
        .collect()
}

fn failed_record(spec: &ScenarioSpec, replicate: usize, method: Method, h1_true: bool, delta: &[bool]) -> ReplicateRecord {
    let n_alt = delta.iter().filter(|&&d| d).count();
    ReplicateRecord {
        scenario: spec.name.clone(),
        replicate,
        seed: spec.seed,
        n: spec.n,
        method,
        h1_true,
        global_score: None,
        global_reject: None,
        false_rejections: None,
        true_rejections: None,
        n_null: delta.len() - n_alt,
        n_alt,
        auc: None,
        failed: true,
    }
}

fn rate(hits: usize, total: usize) -> Option<f64> {
    (total > 0).then(|| hits as f64 / total as f64)
}

/// Aggregates replicate records of one method.
pub fn score(records: &[ReplicateRecord], method: Method) -> ScorePanel {
    let recs: Vec<&ReplicateRecord> = records.iter().filter(|r| r.method == method).collect();
    let ok: Vec<&ReplicateRecord> = recs.iter().copied().filter(|r| !r.failed).collect();

    let globals: Vec<(bool, bool)> =
        ok.iter().filter_map(|r| r.global_reject.map(|g| (r.h1_true, g))).collect();
    let null_g: Vec<bool> = globals.iter().filter(|x| !x.0).map(|x| x.1).collect();
    let alt_g: Vec<bool> = globals.iter().filter(|x| x.0).map(|x| x.1).collect();
    let global_type_i = rate(null_g.iter().filter(|&&r| r).count(), null_g.len());
    let global_type_ii = rate(alt_g.iter().filter(|&&r| !r).count(), alt_g.len());

    let locals: Vec<&ReplicateRecord> = ok.iter().copied().filter(|r| r.false_rejections.is_some()).collect();
    let (mut fp, mut nulls, mut tp, mut alts) = (0, 0, 0, 0);
    let mut any_false = 0;
    let mut fdp_sum = 0.0;
    for r in &locals {
        let f = r.false_rejections.unwrap();
        let t = r.true_rejections.unwrap();
        fp += f;
        tp += t;
        nulls += r.n_null;
        alts += r.n_alt;
        any_false += (f > 0) as usize;
        if f + t > 0 {
            fdp_sum += f as f64 / (f + t) as f64;
        }
    }
    let have_local = !locals.is_empty();
    let local_type_i = if have_local { rate(fp, nulls) } else { None };
    let local_type_ii = if have_local { rate(alts - tp, alts) } else { None };
    let fwer = if have_local { rate(any_false, locals.len()) } else { None };
    let fdr = have_local.then(|| fdp_sum / locals.len() as f64);

    let mut aucs: Vec<f64> = ok.iter().filter_map(|r| r.auc).collect();
    aucs.sort_by(f64::total_cmp);
    let (auc_min, auc_mean, auc_median, auc_max) = if aucs.is_empty() {
        (None, None, None, None)
    } else {
        (
            aucs.first().copied(),
            Some(crate::math::mean(&aucs)),
            Some(crate::math::median(&aucs)),
            aucs.last().copied(),
        )
    };
    ScorePanel {
        method,
        global_type_i,
        global_type_ii,
        local_type_i,
        local_type_ii,
        fwer,
        fdr,
        auc_min,
        auc_mean,
        auc_median,
        auc_max,
        replicates: recs.len(),
        failures: recs.len() - ok.len(),
    }
}

/// Study output: one panel per method plus the per-replicate ledger.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyResult {
    pub label: String,
    pub panels: Vec<ScorePanel>,
    #[serde(skip)]
    pub records: Vec<ReplicateRecord>,
}

/// Seed of replicate `k` of scenario number `s` in a study seeded `seed`.
pub fn replicate_seed(seed: u64, scenario: usize, k: usize) -> u64 {
    seed.wrapping_mul(1_000_003).wrapping_add((scenario as u64) << 32).wrapping_add(k as u64)
}

/// Runs `replicates` datasets of every scenario through every method.
/// Replicates run in parallel on the current rayon pool.
pub fn run_study(
    label: &str,
    scenarios: &[ScenarioSpec],
    replicates: usize,
    methods: &[Method],
    cfg: &StudyConfig,
) -> StudyResult {
    let jobs: Vec<(usize, usize)> =
        (0..scenarios.len()).flat_map(|s| (0..replicates).map(move |k| (s, k))).collect();
    let records: Vec<ReplicateRecord> = jobs
        .par_iter()
        .flat_map_iter(|&(s, k)| {
            let spec = ScenarioSpec { seed: replicate_seed(scenarios[s].seed, s, k), ..scenarios[s].clone() };
            evaluate_replicate(&spec, k, methods, cfg)
        })
        .collect();
    let panels = methods.iter().map(|&m| score(&records, m)).collect();
    StudyResult { label: label.into(), panels, records }
}

/// Named study presets.
pub const PRESETS: [&str; 2] = ["table1-desk", "samplesize-sweep"];

/// Expands a preset into labelled scenario lists.
pub fn preset_scenarios(preset: &str, seed: u64) -> Option<Vec<(String, Vec<ScenarioSpec>)>> {
    match preset {
        "table1-desk" => Some(vec![(
            "n=50".into(),
            vec![scenario1_spec(true, 50, seed), scenario1_spec(false, 50, seed)],
        )]),
        "samplesize-sweep" => Some(
            [20, 40, 100]
                .iter()
                .map(|&n| {
                    (format!("n={n}"), vec![scenario1_spec(true, n, seed), scenario1_spec(false, n, seed)])
                })
                .collect(),
        ),
        _ => None,
    }
}

pub fn write_records_csv(records: &[ReplicateRecord], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}
