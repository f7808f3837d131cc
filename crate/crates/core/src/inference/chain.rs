//! Running chains and persisting their stored functionals.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::sampler::GibbsSampler;
use super::{GibbsConfig, Hyperparameters};
use crate::error::{Error, Result};
use crate::graph::stats::summary_stats_with_index;
use crate::graph::{Group, NetworkDataset, SummaryVector};
use crate::model::MixtureSnapshot;

/// Row-major matrix of stored draws, one row per stored iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct DrawMatrix {
    cols: usize,
    data: Vec<f64>,
}

impl DrawMatrix {
    pub fn new(cols: usize) -> Self {
        Self { cols, data: Vec::new() }
    }

    pub fn from_rows(cols: usize, rows: &[Vec<f64>]) -> Result<Self> {
        let mut m = Self::new(cols);
        for r in rows {
            m.push_row(r)?;
        }
        Ok(m)
    }

    pub fn push_row(&mut self, row: &[f64]) -> Result<()> {
        if row.len() != self.cols {
            return Err(Error::Contract(format!(
                "row of length {} pushed to a {}-column draw matrix",
                row.len(),
                self.cols
            )));
        }
        self.data.extend_from_slice(row);
        Ok(())
    }

    pub fn rows(&self) -> usize {
        if self.cols == 0 {
            0
        } else {
            self.data.len() / self.cols
        }
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows()).map(|i| self.data[i * self.cols + j]).collect()
    }

    pub fn column_means(&self) -> Vec<f64> {
        let n = self.rows().max(1) as f64;
        let mut out = vec![0.0; self.cols];
        for i in 0..self.rows() {
            for (o, x) in out.iter_mut().zip(self.row(i)) {
                *o += x / n;
            }
        }
        out
    }

    pub fn write_csv(&self, path: &Path, prefix: &str) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
        w.write_record((1..=self.cols).map(|j| format!("{prefix}{j}")))?;
        for i in 0..self.rows() {
            w.write_record(self.row(i).iter().map(|x| x.to_string()))?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path).map_err(|e| csv_io(path, e))?;
        let cols = r.headers()?.len();
        let mut m = Self::new(cols);
        for (i, rec) in r.records().enumerate() {
            let rec = rec?;
            let row = rec
                .iter()
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Load {
                    path: path.to_path_buf(),
                    row: i + 2,
                    msg: e.to_string(),
                })?;
            m.push_row(&row)?;
        }
        Ok(m)
    }
}

fn csv_io(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::io(path, source),
        other => Error::Format(format!("{}: {other:?}", path.display())),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainMetadata {
    pub config: GibbsConfig,
    pub hyper: Hyperparameters,
    pub chain_index: usize,
    pub seed: u64,
    pub v: usize,
    pub n: usize,
    pub n_stored: usize,
    /// Fraction of stored draws with `T = 1`.
    pub h1_fraction: f64,
    pub version: String,
}

/// Stored draws of one chain.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorChain {
    pub meta: ChainMetadata,
    pub t: Vec<u8>,
    pub p_y1: Vec<f64>,
    /// `pr(H_1 | -)` evaluated at each stored draw.
    pub prob_h1: Vec<f64>,
    pub nu: [DrawMatrix; 2],
    pub group_probs: [DrawMatrix; 2],
    pub rho: DrawMatrix,
    pub occupancy: DrawMatrix,
    /// Summary statistics of one simulated network per group per draw.
    pub predictive: Option<[DrawMatrix; 2]>,
    pub snapshots: Option<Vec<MixtureSnapshot>>,
}

impl PosteriorChain {
    pub fn n_stored(&self) -> usize {
        self.t.len()
    }

    pub fn h1_fraction(&self) -> f64 {
        if self.t.is_empty() {
            0.0
        } else {
            self.t.iter().map(|&t| t as f64).sum::<f64>() / self.t.len() as f64
        }
    }

    pub fn save(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut out = Vec::new();
        let meta = dir.join("metadata.json");
        fs::write(&meta, serde_json::to_string_pretty(&self.meta)?).map_err(|e| Error::io(&meta, e))?;
        out.push(meta);

        let scalar = |name: &str, xs: Vec<f64>, out: &mut Vec<PathBuf>| -> Result<()> {
            let p = dir.join(name);
            DrawMatrix { cols: 1, data: xs }.write_csv(&p, "value")?;
            out.push(p);
            Ok(())
        };
        scalar("t.csv", self.t.iter().map(|&t| t as f64).collect(), &mut out)?;
        scalar("p_y1.csv", self.p_y1.clone(), &mut out)?;
        scalar("prob_h1.csv", self.prob_h1.clone(), &mut out)?;

        let mut matrix = |name: &str, m: &DrawMatrix, prefix: &str| -> Result<()> {
            let p = dir.join(name);
            m.write_csv(&p, prefix)?;
            out.push(p);
            Ok(())
        };
        matrix("nu1.csv", &self.nu[0], "h")?;
        matrix("nu2.csv", &self.nu[1], "h")?;
        matrix("group_probs1.csv", &self.group_probs[0], "e")?;
        matrix("group_probs2.csv", &self.group_probs[1], "e")?;
        matrix("rho.csv", &self.rho, "e")?;
        matrix("occupancy.csv", &self.occupancy, "h")?;
        if let Some(pp) = &self.predictive {
            for (y, m) in pp.iter().enumerate() {
                let p = dir.join(format!("predictive{}.csv", y + 1));
                write_summary_csv(m, &p)?;
                out.push(p);
            }
        }
        if let Some(s) = &self.snapshots {
            let p = dir.join("snapshots.json");
            fs::write(&p, serde_json::to_string(s)?).map_err(|e| Error::io(&p, e))?;
            out.push(p);
        }
        Ok(out)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let meta_path = dir.join("metadata.json");
        let meta: ChainMetadata =
            serde_json::from_str(&fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?)?;
        let read = |name: &str| DrawMatrix::read_csv(&dir.join(name));
        let t = read("t.csv")?.column(0).iter().map(|&x| x as u8).collect();
        let p_y1 = read("p_y1.csv")?.column(0);
        let prob_h1 = read("prob_h1.csv")?.column(0);
        let predictive = if dir.join("predictive1.csv").exists() {
            Some([read("predictive1.csv")?, read("predictive2.csv")?])
        } else {
            None
        };
        let snap_path = dir.join("snapshots.json");
        let snapshots = if snap_path.exists() {
            Some(serde_json::from_str(
                &fs::read_to_string(&snap_path).map_err(|e| Error::io(&snap_path, e))?,
            )?)
        } else {
            None
        };
        Ok(Self {
            meta,
            t,
            p_y1,
            prob_h1,
            nu: [read("nu1.csv")?, read("nu2.csv")?],
            group_probs: [read("group_probs1.csv")?, read("group_probs2.csv")?],
            rho: read("rho.csv")?,
            occupancy: read("occupancy.csv")?,
            predictive,
            snapshots,
        })
    }
}

fn write_summary_csv(m: &DrawMatrix, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
    w.write_record(SummaryVector::NAMES)?;
    for i in 0..m.rows() {
        w.write_record(m.row(i).iter().map(|x| x.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Writes each chain into `dir/chain_<k>`.
pub fn save_chains(chains: &[PosteriorChain], dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for (k, c) in chains.iter().enumerate() {
        out.extend(c.save(&dir.join(format!("chain_{k}")))?);
    }
    Ok(out)
}

/// Reads either a single chain directory or a directory of `chain_<k>` subdirectories.
pub fn load_chains(dir: &Path) -> Result<Vec<PosteriorChain>> {
    if dir.join("metadata.json").exists() {
        return Ok(vec![PosteriorChain::load(dir)?]);
    }
    let mut chains = Vec::new();
    for k in 0.. {
        let sub = dir.join(format!("chain_{k}"));
        if !sub.exists() {
            break;
        }
        chains.push(PosteriorChain::load(&sub)?);
    }
    if chains.is_empty() {
        return Err(Error::Format(format!("{} holds no chain", dir.display())));
    }
    Ok(chains)
}

/// Runs one chain and stores thinned post-burn-in functionals.
pub fn run_chain<R: Rng + ?Sized>(
    data: &NetworkDataset,
    hyper: &Hyperparameters,
    config: &GibbsConfig,
    rng: &mut R,
) -> Result<PosteriorChain> {
    run_chain_indexed(data, hyper, config, 0, config.seed, rng)
}

fn run_chain_indexed<R: Rng + ?Sized>(
    data: &NetworkDataset,
    hyper: &Hyperparameters,
    config: &GibbsConfig,
    chain_index: usize,
    seed: u64,
    rng: &mut R,
) -> Result<PosteriorChain> {
    config.validate()?;
    let hyper = hyper.resolved();
    let mut s = GibbsSampler::new(data, &hyper, config.pg_method, rng)?;
    let (h, m) = (hyper.h_max, s.edge_index().len());
    let n_stored = config.n_stored();

    let mut t = Vec::with_capacity(n_stored);
    let mut p_y1 = Vec::with_capacity(n_stored);
    let mut prob_h1 = Vec::with_capacity(n_stored);
    let mut nu = [DrawMatrix::new(h), DrawMatrix::new(h)];
    let mut group_probs = [DrawMatrix::new(m), DrawMatrix::new(m)];
    let mut rho = DrawMatrix::new(m);
    let mut occupancy = DrawMatrix::new(h);
    let mut predictive = [DrawMatrix::new(4), DrawMatrix::new(4)];
    let mut snapshots = Vec::new();

    for it in 0..config.n_iter {
        s.step(rng)?;
        if it < config.burn_in || (it - config.burn_in + 1) % config.thin != 0 {
            continue;
        }
        if t.len() == n_stored {
            break;
        }
        let snap = s.snapshot();
        t.push(s.t() as u8);
        p_y1.push(s.p_y1());
        prob_h1.push(s.last_prob_h1());
        for y in Group::BOTH {
            nu[y.index()].push_row(&snap.nu[y.index()])?;
            group_probs[y.index()].push_row(snap.group_edge_probs(y).as_slice())?;
        }
        rho.push_row(&snap.cramers_v_all())?;
        occupancy.push_row(&s.occupancy().iter().map(|&c| c as f64).collect::<Vec<_>>())?;
        if config.posterior_predictive {
            for y in Group::BOTH {
                let (net, _) = snap.sample_network(y, rng);
                let stats = summary_stats_with_index(&net, data.blocks(), s.edge_index());
                predictive[y.index()].push_row(&stats.to_array())?;
            }
        }
        if config.store_snapshots && (t.len() - 1) % config.snapshot_every == 0 {
            snapshots.push(snap);
        }
    }

    let mut chain = PosteriorChain {
        meta: ChainMetadata {
            config: config.clone(),
            hyper,
            chain_index,
            seed,
            v: data.v(),
            n: data.n(),
            n_stored: t.len(),
            h1_fraction: 0.0,
            version: env!("CARGO_PKG_VERSION").to_string(),
        },
        t,
        p_y1,
        prob_h1,
        nu,
        group_probs,
        rho,
        occupancy,
        predictive: config.posterior_predictive.then_some(predictive),
        snapshots: config.store_snapshots.then_some(snapshots),
    };
    chain.meta.h1_fraction = chain.h1_fraction();
    Ok(chain)
}

/// Runs `config.n_chains` chains seeded `config.seed + k`, in parallel on
/// the current rayon pool. Output does not depend on the pool size.
pub fn run_chains(
    data: &NetworkDataset,
    hyper: &Hyperparameters,
    config: &GibbsConfig,
) -> Result<Vec<PosteriorChain>> {
    config.validate()?;
    (0..config.n_chains)
        .into_par_iter()
        .map(|k| {
            let seed = config.seed.wrapping_add(k as u64);
            let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
            run_chain_indexed(data, hyper, config, k, seed, &mut rng)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::EdgeVector;

    fn small_data() -> NetworkDataset {
        let v = 5;
        let nets = (0..12)
            .map(|i| {
                EdgeVector::new(v, (0..10).map(|l| ((i * 7 + l * 3) % 4 == 0) as u8).collect())
                    .unwrap()
            })
            .collect();
        let groups = (0..12).map(|i| if i < 6 { Group::One } else { Group::Two }).collect();
        NetworkDataset::new(v, nets, groups, Some(vec![0, 0, 0, 1, 1])).unwrap()
    }

    fn small_config() -> GibbsConfig {
        GibbsConfig { n_iter: 60, burn_in: 20, thin: 2, seed: 7, store_snapshots: true, posterior_predictive: false, ..Default::default() }
    }

    #[test]
    fn stores_expected_count_and_is_deterministic() {
        let data = small_data();
        let hyper = Hyperparameters { h_max: 3, r_max: 2, ..Default::default() };
        let cfg = small_config();
        let a = run_chains(&data, &hyper, &cfg).unwrap();
        let b = run_chains(&data, &hyper, &cfg).unwrap();
        assert_eq!(a, b);
        let c = &a[0];
        assert_eq!(c.n_stored(), 20);
        assert_eq!(c.rho.rows(), 20);
        assert!(c.group_probs.iter().all(|m| (0..m.rows())
            .all(|i| m.row(i).iter().all(|p| *p > 0.0 && *p < 1.0))));
        assert_eq!(c.snapshots.as_ref().unwrap().len(), 20);
    }

    #[test]
    fn save_load_roundtrip() {
        let data = small_data();
        let hyper = Hyperparameters { h_max: 2, r_max: 2, ..Default::default() };
        let cfg = GibbsConfig { n_chains: 2, ..small_config() };
        let chains = run_chains(&data, &hyper, &cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_chains(&chains, dir.path()).unwrap();
        let back = load_chains(dir.path()).unwrap();
        assert_eq!(back, chains);
        assert_eq!(back[1].meta.seed, 8);
    }
}
