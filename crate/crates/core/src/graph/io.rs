//! Dataset ingestion and export.
//!
//! Canonical layout: a networks CSV with one lower-triangular edge vector per
//! row, a groups CSV with one label (1 or 2) per row, and an optional blocks
//! CSV with one block id per node. Header rows are optional everywhere.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{nodes_for_pairs, vectorize, Adjacency, EdgeVector, Group, NetworkDataset};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InputFormat {
    /// One edge vector per CSV row.
    #[default]
    Csv,
    /// A directory of whitespace-delimited `v × v` matrices, read in file-name order.
    AdjacencyDir,
}

impl std::str::FromStr for InputFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "csv" => Ok(Self::Csv),
            "adjacency-dir" => Ok(Self::AdjacencyDir),
            other => Err(format!("unknown input format `{other}` (csv | adjacency-dir)")),
        }
    }
}

fn read_records(path: &Path) -> Result<Vec<(usize, Vec<String>)>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::Format(format!("{}: {other:?}", path.display())),
        })?;
    let mut out: Vec<(usize, Vec<String>)> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.iter().all(str::is_empty) {
            continue;
        }
        out.push((i + 1, rec.iter().map(str::to_owned).collect()));
    }
    // a first row that is not fully numeric is a header
    if let Some((_, first)) = out.first() {
        if first.iter().any(|f| f.parse::<i64>().is_err()) {
            out.remove(0);
        }
    }
    Ok(out)
}

fn load_err(path: &Path, row: usize, msg: impl Into<String>) -> Error {
    Error::Load { path: path.to_path_buf(), row, msg: msg.into() }
}

fn parse_bit(path: &Path, row: usize, field: &str) -> Result<u8> {
    match field {
        "0" => Ok(0),
        "1" => Ok(1),
        other => Err(load_err(path, row, format!("non-binary entry `{other}`"))),
    }
}

fn load_networks_csv(path: &Path) -> Result<(usize, Vec<EdgeVector>)> {
    let records = read_records(path)?;
    let Some((_, first)) = records.first() else {
        return Err(load_err(path, 0, "no network rows"));
    };
    let width = first.len();
    let v = nodes_for_pairs(width).ok_or_else(|| {
        load_err(path, records[0].0, format!("{width} columns is not v(v-1)/2 for any v >= 2"))
    })?;
    let mut nets = Vec::with_capacity(records.len());
    for (row, fields) in &records {
        if fields.len() != width {
            return Err(load_err(
                path,
                *row,
                format!("ragged row: {} columns, expected {width}", fields.len()),
            ));
        }
        let bits = fields.iter().map(|f| parse_bit(path, *row, f)).collect::<Result<Vec<_>>>()?;
        nets.push(EdgeVector::new(v, bits)?);
    }
    Ok((v, nets))
}

fn load_adjacency_dir(dir: &Path) -> Result<(usize, Vec<EdgeVector>)> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(load_err(dir, 0, "no adjacency files"));
    }
    let mut nets = Vec::with_capacity(files.len());
    let mut v0 = None;
    for (i, file) in files.iter().enumerate() {
        let text = fs::read_to_string(file).map_err(|e| Error::io(file, e))?;
        let rows = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .enumerate()
            .map(|(r, line)| {
                line.split_whitespace()
                    .map(|f| parse_bit(file, r + 1, f))
                    .collect::<Result<Vec<u8>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        let adj = Adjacency::from_rows(&rows)
            .map_err(|e| load_err(file, i + 1, e.to_string()))?;
        match v0 {
            None => v0 = Some(adj.v()),
            Some(v) if v != adj.v() => {
                return Err(load_err(file, i + 1, format!("{} nodes, expected {v}", adj.v())))
            }
            _ => {}
        }
        nets.push(vectorize(&adj));
    }
    Ok((v0.unwrap_or(0), nets))
}

pub fn load_groups(path: &Path) -> Result<Vec<Group>> {
    read_records(path)?
        .into_iter()
        .map(|(row, fields)| {
            if fields.len() != 1 {
                return Err(load_err(path, row, format!("expected 1 column, got {}", fields.len())));
            }
            match fields[0].as_str() {
                "1" => Ok(Group::One),
                "2" => Ok(Group::Two),
                other => Err(load_err(path, row, format!("group label `{other}` not in {{1, 2}}"))),
            }
        })
        .collect()
}

/// Reads one block id per node; ids are mapped to `0..k` in order of first appearance.
pub fn load_blocks(path: &Path) -> Result<Vec<usize>> {
    let mut ids: HashMap<String, usize> = HashMap::new();
    let mut text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    if !text.ends_with('\n') {
        text.push('\n');
    }
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let field = line.split(',').next().unwrap_or("").trim();
        if field.is_empty() {
            continue;
        }
        if i == 0 && field.parse::<i64>().is_err() {
            continue;
        }
        let next = ids.len();
        out.push(*ids.entry(field.to_owned()).or_insert(next));
    }
    Ok(out)
}

/// Loads unlabelled networks; returns the node count and the edge vectors.
pub fn load_networks(path: &Path, format: InputFormat) -> Result<(usize, Vec<EdgeVector>)> {
    match format {
        InputFormat::Csv => load_networks_csv(path),
        InputFormat::AdjacencyDir => load_adjacency_dir(path),
    }
}

/// Loads and cross-checks a labelled dataset.
pub fn load_dataset(
    networks: &Path,
    groups: &Path,
    format: InputFormat,
    blocks: Option<&Path>,
) -> Result<NetworkDataset> {
    let (v, nets) = load_networks(networks, format)?;
    let labels = load_groups(groups)?;
    if labels.len() != nets.len() {
        return Err(load_err(
            groups,
            labels.len().min(nets.len()) + 1,
            format!("{} labels for {} networks", labels.len(), nets.len()),
        ));
    }
    let blocks = match blocks {
        Some(p) => {
            let b = load_blocks(p)?;
            if b.len() != v {
                return Err(load_err(p, b.len(), format!("{} block ids for {v} nodes", b.len())));
            }
            Some(b)
        }
        None => None,
    };
    NetworkDataset::new(v, nets, labels, blocks)
}

fn write_file(path: &Path, body: &str) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(body.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Writes `networks.csv`, `groups.csv` and, when present, `blocks.csv` into `dir`.
pub fn save_dataset(ds: &NetworkDataset, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();

    let mut body = String::with_capacity(ds.n() * (2 * super::n_pairs(ds.v()) + 1));
    for e in ds.networks() {
        let row: Vec<&str> = e.bits().iter().map(|&b| if b == 1 { "1" } else { "0" }).collect();
        body.push_str(&row.join(","));
        body.push('\n');
    }
    let p = dir.join("networks.csv");
    write_file(&p, &body)?;
    written.push(p);

    let body: String = ds.groups().iter().map(|g| format!("{}\n", g.label())).collect();
    let p = dir.join("groups.csv");
    write_file(&p, &body)?;
    written.push(p);

    if let Some(blocks) = ds.blocks() {
        let body: String = blocks.iter().map(|b| format!("{}\n", b + 1)).collect();
        let p = dir.join("blocks.csv");
        write_file(&p, &body)?;
        written.push(p);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn loads_small_csv() {
        let dir = tempfile::tempdir().unwrap();
        let n = write(dir.path(), "n.csv", "1,0,1\n0,0,0\n");
        let g = write(dir.path(), "g.csv", "1\n2\n");
        let ds = load_dataset(&n, &g, InputFormat::Csv, None).unwrap();
        assert_eq!((ds.n(), ds.v()), (2, 3));
        assert_eq!(ds.groups(), &[Group::One, Group::Two]);
    }

    #[test]
    fn header_rows_are_skipped() {
        let dir = tempfile::tempdir().unwrap();
        let n = write(dir.path(), "n.csv", "e1,e2,e3\n1,0,1\n");
        let g = write(dir.path(), "g.csv", "group\n2\n");
        let ds = load_dataset(&n, &g, InputFormat::Csv, None).unwrap();
        assert_eq!(ds.n(), 1);
    }

    #[test]
    fn bad_label_names_row() {
        let dir = tempfile::tempdir().unwrap();
        let n = write(dir.path(), "n.csv", "1,0,1\n0,0,0\n");
        let g = write(dir.path(), "g.csv", "1\n3\n");
        let err = load_dataset(&n, &g, InputFormat::Csv, None).unwrap_err();
        match err {
            Error::Load { row, msg, .. } => {
                assert_eq!(row, 2);
                assert!(msg.contains('3'));
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn ragged_and_nonbinary_rows() {
        let dir = tempfile::tempdir().unwrap();
        let g = write(dir.path(), "g.csv", "1\n2\n");
        let n = write(dir.path(), "n.csv", "1,0,1\n0,0\n");
        assert!(matches!(
            load_dataset(&n, &g, InputFormat::Csv, None),
            Err(Error::Load { row: 2, .. })
        ));
        let n = write(dir.path(), "n2.csv", "1,0,1\n0,2,0\n");
        assert!(matches!(
            load_dataset(&n, &g, InputFormat::Csv, None),
            Err(Error::Load { row: 2, .. })
        ));
        let n = write(dir.path(), "n3.csv", "1,0\n0,0\n");
        assert!(load_dataset(&n, &g, InputFormat::Csv, None).is_err());
    }

    #[test]
    fn label_count_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let n = write(dir.path(), "n.csv", "1,0,1\n0,0,0\n");
        let g = write(dir.path(), "g.csv", "1\n");
        assert!(load_dataset(&n, &g, InputFormat::Csv, None).is_err());
    }

    #[test]
    fn adjacency_directory() {
        let dir = tempfile::tempdir().unwrap();
        let mats = dir.path().join("mats");
        fs::create_dir(&mats).unwrap();
        write(&mats, "b.txt", "0 1 0\n1 0 1\n0 1 0\n");
        write(&mats, "a.txt", "0 0 0\n0 0 0\n0 0 0\n");
        let g = write(dir.path(), "g.csv", "1\n2\n");
        let ds = load_dataset(&mats, &g, InputFormat::AdjacencyDir, None).unwrap();
        assert_eq!(ds.networks()[0].n_edges(), 0);
        assert_eq!(ds.networks()[1].bits(), &[1, 0, 1]);
        write(&mats, "c.txt", "0 1\n0 0\n");
        let g = write(dir.path(), "g.csv", "1\n2\n1\n");
        assert!(load_dataset(&mats, &g, InputFormat::AdjacencyDir, None).is_err());
    }

    #[test]
    fn blocks_file() {
        let dir = tempfile::tempdir().unwrap();
        let n = write(dir.path(), "n.csv", "1,0,1\n");
        let g = write(dir.path(), "g.csv", "1\n");
        let b = write(dir.path(), "b.csv", "block\nL\nL\nR\n");
        let ds = load_dataset(&n, &g, InputFormat::Csv, Some(&b)).unwrap();
        assert_eq!(ds.blocks(), Some(&[0, 0, 1][..]));
        let b = write(dir.path(), "b2.csv", "1\n2\n");
        assert!(load_dataset(&n, &g, InputFormat::Csv, Some(&b)).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn save_then_load_is_identity(
            v in 2usize..8,
            rows in proptest::collection::vec((any::<u64>(), any::<bool>()), 1..12),
        ) {
            let m = crate::graph::n_pairs(v);
            let nets: Vec<EdgeVector> = rows.iter().map(|(s, _)| {
                let bits = (0..m).map(|k| ((s >> (k % 64)) & 1) as u8).collect();
                EdgeVector::new(v, bits).unwrap()
            }).collect();
            let groups = rows.iter().map(|(_, g)| if *g { Group::Two } else { Group::One }).collect();
            let blocks = (0..v).map(|i| i % 2).collect();
            let ds = NetworkDataset::new(v, nets, groups, Some(blocks)).unwrap();
            let dir = tempfile::tempdir().unwrap();
            save_dataset(&ds, dir.path()).unwrap();
            let back = load_dataset(
                &dir.path().join("networks.csv"),
                &dir.path().join("groups.csv"),
                InputFormat::Csv,
                Some(&dir.path().join("blocks.csv")),
            ).unwrap();
            prop_assert_eq!(back, ds);
        }
    }
}
