//! Synthetic datasets, non-IID partitioning and label entropy.

use std::io::{BufRead, Write};
use std::path::Path;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::nn::Batch;
use crate::seed::{self, stream, SimRng};
use crate::{Error, Result};

/// Blob centers depend only on (classes, dim), so train and test sets drawn
/// with different seeds share them.
const CENTER_SEED: u64 = 0x5EED_B10B;
const CENTER_RADIUS: f64 = 3.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    inputs: Array2<f64>,
    labels: Vec<usize>,
    n_classes: usize,
}

impl Dataset {
    pub fn new(inputs: Array2<f64>, labels: Vec<usize>, n_classes: usize) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::Contract("dataset must hold at least one sample".into()));
        }
        if inputs.nrows() != labels.len() {
            return Err(Error::dim("labels", inputs.nrows(), labels.len()));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= n_classes) {
            return Err(Error::Contract(format!("label {bad} outside [0, {n_classes})")));
        }
        Ok(Self {
            inputs,
            labels,
            n_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn inputs(&self) -> &Array2<f64> {
        &self.inputs
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Rows at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        Dataset::new(
            self.inputs.select(Axis(0), indices),
            indices.iter().map(|&i| self.labels[i]).collect(),
            self.n_classes,
        )
    }

    pub fn batch(&self, indices: &[usize]) -> Batch {
        Batch {
            inputs: self.inputs.select(Axis(0), indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    pub fn as_batch(&self) -> Batch {
        Batch {
            inputs: self.inputs.clone(),
            labels: self.labels.clone(),
        }
    }

    /// One row per sample: `features...,label`.
    pub fn write_csv<W: Write>(&self, mut writer: W) -> Result<()> {
        for (row, label) in self.inputs.rows().into_iter().zip(&self.labels) {
            for v in row {
                write!(writer, "{v},")?;
            }
            writeln!(writer, "{label}")?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_csv(file)
    }

    pub fn read_csv<R: BufRead>(reader: R, n_classes: usize) -> Result<Dataset> {
        let mut values = Vec::new();
        let mut labels = Vec::new();
        let mut dim = None;
        for (line_no, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let cells: Vec<&str> = line.split(',').collect();
            let parse_err = |what: &str| Error::Parse(format!("line {}: bad {what}", line_no + 1));
            let (label, features) = cells.split_last().ok_or_else(|| parse_err("row"))?;
            if *dim.get_or_insert(features.len()) != features.len() {
                return Err(parse_err("column count"));
            }
            for cell in features {
                values.push(cell.trim().parse::<f64>().map_err(|_| parse_err("feature"))?);
            }
            labels.push(label.trim().parse::<usize>().map_err(|_| parse_err("label"))?);
        }
        let dim = dim.unwrap_or(0);
        let inputs = Array2::from_shape_vec((labels.len(), dim), values).map_err(|e| Error::Parse(e.to_string()))?;
        Dataset::new(inputs, labels, n_classes)
    }
}

fn class_centers(n_classes: usize, dim: usize) -> Vec<Vec<f64>> {
    let mut rng = seed::rng(CENTER_SEED, &[n_classes as u64, dim as u64]);
    (0..n_classes)
        .map(|_| {
            let mut v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
            v.iter_mut().for_each(|x| *x *= CENTER_RADIUS / norm);
            v
        })
        .collect()
}

/// Gaussian blobs: `n_per_class` samples around each of `n_classes` centers
/// placed at radius 3 along fixed directions, with per-axis noise `spread`.
pub fn gen_blobs(n_classes: usize, dim: usize, n_per_class: usize, spread: f64, seed: u64) -> Result<Dataset> {
    if n_classes < 2 {
        return Err(Error::config("n_classes", "need at least 2 classes"));
    }
    if dim < 2 {
        return Err(Error::config("dim", "need at least 2 features"));
    }
    if n_per_class < 1 {
        return Err(Error::config("n_per_class", "need at least 1 sample per class"));
    }
    if !(spread > 0.0 && spread.is_finite()) {
        return Err(Error::config("spread", "must be positive"));
    }
    let centers = class_centers(n_classes, dim);
    let mut rng = seed::rng(seed, &[stream::DATA]);
    let n = n_classes * n_per_class;
    let mut inputs = Array2::zeros((n, dim));
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let class = i % n_classes;
        for (j, c) in centers[class].iter().enumerate() {
            let noise: f64 = rng.sample(StandardNormal);
            inputs[[i, j]] = c + spread * noise;
        }
        labels.push(class);
    }
    Dataset::new(inputs, labels, n_classes)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartitionConfig {
    pub n_clients: usize,
    pub alpha: f64,
    pub seed: u64,
}

/// Draws one point from a symmetric Dirichlet(alpha) over `k` coordinates.
pub(crate) fn sample_symmetric_dirichlet(rng: &mut SimRng, alpha: f64, k: usize) -> Vec<f64> {
    let gamma = Gamma::new(alpha, 1.0).expect("alpha validated positive");
    let draws: Vec<f64> = (0..k).map(|_| gamma.sample(rng)).collect();
    let total: f64 = draws.iter().sum();
    if total > 0.0 && total.is_finite() {
        draws.iter().map(|d| d / total).collect()
    } else {
        // every gamma draw underflowed: all mass on one coordinate
        let mut p = vec![0.0; k];
        p[rng.random_range(0..k)] = 1.0;
        p
    }
}

/// Integer counts summing to `total` that follow `proportions`; leftover units
/// go to the largest fractional remainders, ties to the lowest index.
pub fn largest_remainder(proportions: &[f64], total: usize) -> Vec<usize> {
    let raw: Vec<f64> = proportions.iter().map(|p| p * total as f64).collect();
    let mut counts: Vec<usize> = raw.iter().map(|r| r.floor().max(0.0) as usize).collect();
    let assigned: usize = counts.iter().sum();
    if assigned > total {
        // only reachable when proportions sum above one
        return counts;
    }
    let mut order: Vec<usize> = (0..raw.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = raw[a] - raw[a].floor();
        let fb = raw[b] - raw[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &i in order.iter().cycle().take(total - assigned) {
        counts[i] += 1;
    }
    counts
}

/// Splits `ds` across clients with per-class Dirichlet proportions.
///
/// Each sample lands in exactly one shard. Shards left empty by the draw
/// receive one sample taken from the currently largest shard.
pub fn dirichlet_partition(ds: &Dataset, cfg: &PartitionConfig) -> Result<Vec<Dataset>> {
    if cfg.n_clients == 0 {
        return Err(Error::config("n_clients", "need at least one client"));
    }
    if !(cfg.alpha > 0.0 && cfg.alpha.is_finite()) {
        return Err(Error::config("alpha", "Dirichlet concentration must be positive"));
    }
    if ds.len() < cfg.n_clients {
        return Err(Error::Contract(format!(
            "{} samples cannot cover {} clients",
            ds.len(),
            cfg.n_clients
        )));
    }
    let k = cfg.n_clients;
    let mut rng = seed::rng(cfg.seed, &[stream::DATA, k as u64]);
    let mut shards: Vec<Vec<usize>> = vec![Vec::new(); k];
    for class in 0..ds.n_classes() {
        let mut members: Vec<usize> = (0..ds.len()).filter(|&i| ds.labels[i] == class).collect();
        if members.is_empty() {
            continue;
        }
        members.shuffle(&mut rng);
        let proportions = sample_symmetric_dirichlet(&mut rng, cfg.alpha, k);
        let counts = largest_remainder(&proportions, members.len());
        let mut start = 0;
        for (shard, count) in shards.iter_mut().zip(counts) {
            shard.extend_from_slice(&members[start..start + count]);
            start += count;
        }
    }
    while let Some(empty) = shards.iter().position(|s| s.is_empty()) {
        let donor = (0..k)
            .max_by(|&a, &b| shards[a].len().cmp(&shards[b].len()).then(b.cmp(&a)))
            .expect("k >= 1");
        let moved = shards[donor].pop().expect("donor holds at least two samples");
        shards[empty].push(moved);
    }
    shards
        .into_iter()
        .map(|mut idx| {
            idx.sort_unstable();
            ds.subset(&idx)
        })
        .collect()
}

/// Shannon entropy, in bits, of the label distribution.
pub fn label_entropy(ds: &Dataset) -> f64 {
    entropy_of_counts(&ds.class_counts())
}

pub fn entropy_of_counts(counts: &[usize]) -> f64 {
    let n: usize = counts.iter().sum();
    if n == 0 {
        return 0.0;
    }
    let h: f64 = counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let q = c as f64 / n as f64;
            -q * q.log2()
        })
        .sum();
    h.max(0.0)
}
