//! Supervised sense disambiguation with a weighted k-nearest-neighbor
//! classifier over the three feature blocks, tuned by grid search on a
//! development split.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::embeddings::{cosine, EmbeddingTable};
use crate::features::{
    extract_window, feature_triple, join_vector, mean_feature, parse_vector, FeatureMode, FeatureTriple, PrepInstance,
};
use crate::{Error, Result};

/// Floor added to neighbor distances before inverting them into votes.
pub const VOTE_EPSILON: f64 = 1e-6;

/// Non-negative weights of the left, right and interplay distance terms.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlockWeights {
    pub left: f64,
    pub right: f64,
    pub inter: f64,
}

impl BlockWeights {
    pub fn new(left: f64, right: f64, inter: f64) -> Result<Self> {
        let w = BlockWeights { left, right, inter };
        let parts = w.as_array();
        if parts.iter().any(|x| !x.is_finite() || *x < 0.0) || parts.iter().sum::<f64>() <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "weights must be non-negative and not all zero, got {w}"
            )));
        }
        Ok(w)
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.left, self.right, self.inter]
    }

    pub fn scaled(&self, c: f64) -> Self {
        BlockWeights {
            left: self.left * c,
            right: self.right * c,
            inter: self.inter * c,
        }
    }

    /// Whether the weights only use blocks enabled by `mode`.
    pub fn fits(&self, mode: FeatureMode) -> bool {
        match mode {
            FeatureMode::Average => true,
            _ => self
                .as_array()
                .iter()
                .zip(mode.blocks())
                .all(|(w, used)| used || *w == 0.0),
        }
    }

    fn combine(&self, d: &[f64; 3]) -> f64 {
        self.left * d[0] + self.right * d[1] + self.inter * d[2]
    }
}

impl fmt::Display for BlockWeights {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{}", self.left, self.right, self.inter)
    }
}

impl FromStr for BlockWeights {
    type Err = Error;

    /// Parses `left,right,inter`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::InvalidArgument(format!("invalid weights {s:?}")))?;
        match parts[..] {
            [l, r, i] => BlockWeights::new(l, r, i),
            _ => Err(Error::InvalidArgument(format!("expected three weights, got {s:?}"))),
        }
    }
}

/// The representation an exemplar or query carries.
#[derive(Clone, Debug, PartialEq)]
pub enum InstanceFeatures {
    Triple(FeatureTriple),
    /// The single mean over every context vector.
    Average {
        vector: Vec<f64>,
        degenerate: bool,
    },
}

impl InstanceFeatures {
    pub fn compute(
        instance: &PrepInstance,
        k_left: usize,
        k_right: usize,
        mode: FeatureMode,
        table: &EmbeddingTable,
    ) -> Self {
        match mode {
            FeatureMode::Average => {
                let window = extract_window(instance, k_left, k_right, table);
                let all: Vec<&str> = window.left.iter().chain(&window.right).copied().collect();
                let (vector, degenerate) = mean_feature(&all, table);
                InstanceFeatures::Average { vector, degenerate }
            }
            _ => InstanceFeatures::Triple(feature_triple(instance, k_left, k_right, table)),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            InstanceFeatures::Triple(t) => t.dim(),
            InstanceFeatures::Average { vector, .. } => vector.len(),
        }
    }

    /// Per-block cosine distances to `other`. A block where either side is
    /// degenerate contributes 1. The baseline representation fills only the
    /// first slot.
    fn block_distances(&self, other: &InstanceFeatures) -> [f64; 3] {
        match (self, other) {
            (InstanceFeatures::Triple(a), InstanceFeatures::Triple(b)) => {
                let mut d = [1.0; 3];
                for (slot, ((va, da), (vb, db))) in d.iter_mut().zip(a.blocks().into_iter().zip(b.blocks())) {
                    *slot = cosine_distance(va, da, vb, db);
                }
                d
            }
            (
                InstanceFeatures::Average {
                    vector: a,
                    degenerate: da,
                },
                InstanceFeatures::Average {
                    vector: b,
                    degenerate: db,
                },
            ) => [cosine_distance(a, *da, b, *db), 0.0, 0.0],
            _ => [1.0, 1.0, 1.0],
        }
    }
}

fn cosine_distance(a: &[f64], a_degenerate: bool, b: &[f64], b_degenerate: bool) -> f64 {
    if a_degenerate || b_degenerate {
        return 1.0;
    }
    cosine(a, b).map_or(1.0, |c| 1.0 - c)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Exemplar {
    pub features: InstanceFeatures,
    pub sense: String,
}

/// A weighted k-NN sense classifier for one preposition.
#[derive(Clone, Debug, PartialEq)]
pub struct KnnModel {
    preposition: String,
    k_neighbors: usize,
    weights: BlockWeights,
    k_left: usize,
    k_right: usize,
    mode: FeatureMode,
    exemplars: Vec<Exemplar>,
}

/// Hyperparameters of a [`KnnModel`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KnnParams {
    pub k_neighbors: usize,
    pub weights: BlockWeights,
    pub k_left: usize,
    pub k_right: usize,
    pub mode: FeatureMode,
}

impl KnnModel {
    pub fn new(preposition: impl Into<String>, params: KnnParams, exemplars: Vec<Exemplar>) -> Result<Self> {
        if params.k_neighbors == 0 || params.k_left == 0 || params.k_right == 0 {
            return Err(Error::InvalidArgument("k and window sizes must be at least 1".into()));
        }
        let weights = BlockWeights::new(params.weights.left, params.weights.right, params.weights.inter)?;
        if exemplars.is_empty() {
            return Err(Error::Empty("exemplar set".into()));
        }
        let dim = exemplars[0].features.dim();
        for e in &exemplars {
            let same_kind = matches!(
                (&e.features, params.mode),
                (InstanceFeatures::Average { .. }, FeatureMode::Average)
            ) || (params.mode != FeatureMode::Average
                && matches!(e.features, InstanceFeatures::Triple(_)));
            if !same_kind {
                return Err(Error::InvalidArgument("exemplar does not match feature mode".into()));
            }
            if e.features.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: e.features.dim(),
                });
            }
            check_sense(&e.sense)?;
        }
        Ok(KnnModel {
            preposition: preposition.into(),
            k_neighbors: params.k_neighbors,
            weights,
            k_left: params.k_left,
            k_right: params.k_right,
            mode: params.mode,
            exemplars,
        })
    }

    /// Builds exemplars from labeled instances of a single preposition.
    pub fn train(instances: &[PrepInstance], params: KnnParams, table: &EmbeddingTable) -> Result<Self> {
        let preposition = single_preposition(instances)?;
        let features = compute_features(instances, params.k_left, params.k_right, params.mode, table);
        let exemplars = instances
            .iter()
            .zip(features)
            .map(|(inst, features)| {
                let sense = inst
                    .sense()
                    .ok_or_else(|| Error::InvalidArgument(format!("instance {} has no sense", inst.id())))?;
                Ok(Exemplar {
                    features,
                    sense: sense.to_string(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        KnnModel::new(preposition, params, exemplars)
    }

    pub fn preposition(&self) -> &str {
        &self.preposition
    }

    pub fn params(&self) -> KnnParams {
        KnnParams {
            k_neighbors: self.k_neighbors,
            weights: self.weights,
            k_left: self.k_left,
            k_right: self.k_right,
            mode: self.mode,
        }
    }

    pub fn exemplars(&self) -> &[Exemplar] {
        &self.exemplars
    }

    pub fn dim(&self) -> usize {
        self.exemplars[0].features.dim()
    }

    /// Same exemplars under different weights and neighbor count.
    pub fn with_params(&self, k_neighbors: usize, weights: BlockWeights) -> Result<Self> {
        let mut params = self.params();
        params.k_neighbors = k_neighbors;
        params.weights = weights;
        KnnModel::new(self.preposition.clone(), params, self.exemplars.clone())
    }

    /// Exemplar indices and distances of the `k` nearest exemplars. Equal
    /// distances keep exemplar order.
    pub fn neighbors(&self, query: &InstanceFeatures) -> Result<Vec<(usize, f64)>> {
        if query.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: query.dim(),
            });
        }
        let distances: Vec<f64> = self
            .exemplars
            .iter()
            .map(|e| self.weights.combine(&query.block_distances(&e.features)))
            .collect();
        Ok(top_k(&distances, self.k_neighbors))
    }

    pub fn predict(&self, query: &InstanceFeatures) -> Result<&str> {
        let neighbors = self.neighbors(query)?;
        Ok(vote(
            neighbors.iter().map(|&(i, d)| (self.exemplars[i].sense.as_str(), d)),
        ))
    }

    pub fn predict_instance(&self, instance: &PrepInstance, table: &EmbeddingTable) -> Result<&str> {
        let q = InstanceFeatures::compute(instance, self.k_left, self.k_right, self.mode, table);
        self.predict(&q)
    }

    pub fn write_tsv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            self.preposition,
            self.k_neighbors,
            self.weights,
            self.k_left,
            self.k_right,
            self.dim(),
            self.mode
        )?;
        for e in &self.exemplars {
            match &e.features {
                InstanceFeatures::Triple(t) => writeln!(
                    out,
                    "{}\t{}{}{}\t{}\t{}\t{}",
                    e.sense,
                    u8::from(t.left_degenerate),
                    u8::from(t.right_degenerate),
                    u8::from(t.inter_degenerate),
                    join_vector(&t.v_left),
                    join_vector(&t.v_right),
                    join_vector(&t.v_inter)
                )?,
                InstanceFeatures::Average { vector, degenerate } => {
                    writeln!(out, "{}\t{}\t{}", e.sense, u8::from(*degenerate), join_vector(vector))?
                }
            }
        }
        Ok(())
    }

    pub fn read_tsv<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let header = lines.next().ok_or_else(|| Error::parse(1, "missing header"))??;
        let h: Vec<&str> = header.split('\t').collect();
        if h.len() != 7 {
            return Err(Error::parse(1, "header needs 7 columns"));
        }
        let num = |s: &str, what: &str| -> Result<usize> {
            s.parse().map_err(|_| Error::parse(1, format!("invalid {what}")))
        };
        let w = parse_vector(h[2], 1)?;
        if w.len() != 3 {
            return Err(Error::parse(1, "weights need three values"));
        }
        let params = KnnParams {
            k_neighbors: num(h[1], "k_neighbors")?,
            weights: BlockWeights::new(w[0], w[1], w[2]).map_err(|e| Error::parse(1, e.to_string()))?,
            k_left: num(h[3], "k_left")?,
            k_right: num(h[4], "k_right")?,
            mode: h[6].parse().map_err(|_| Error::parse(1, "invalid feature mode"))?,
        };
        let dim = num(h[5], "dim")?;
        if h[0].is_empty() {
            return Err(Error::parse(1, "empty preposition"));
        }

        let mut exemplars = Vec::new();
        for (i, line) in lines.enumerate() {
            let line_no = i + 2;
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            let bit = |c: char| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                _ => Err(Error::parse(line_no, "invalid flag")),
            };
            let check_dim = |v: Vec<f64>| {
                if v.len() == dim {
                    Ok(v)
                } else {
                    Err(Error::parse(line_no, format!("expected {dim} values")))
                }
            };
            let features = if params.mode == FeatureMode::Average {
                if cols.len() != 3 || cols[1].len() != 1 {
                    return Err(Error::parse(line_no, "expected sense, flag, vector"));
                }
                InstanceFeatures::Average {
                    degenerate: bit(cols[1].chars().next().unwrap())?,
                    vector: check_dim(parse_vector(cols[2], line_no)?)?,
                }
            } else {
                let flags: Vec<char> = cols.get(1).map(|f| f.chars().collect()).unwrap_or_default();
                if cols.len() != 5 || flags.len() != 3 {
                    return Err(Error::parse(line_no, "expected sense, flags, three vectors"));
                }
                InstanceFeatures::Triple(FeatureTriple {
                    left_degenerate: bit(flags[0])?,
                    right_degenerate: bit(flags[1])?,
                    inter_degenerate: bit(flags[2])?,
                    v_left: check_dim(parse_vector(cols[2], line_no)?)?,
                    v_right: check_dim(parse_vector(cols[3], line_no)?)?,
                    v_inter: check_dim(parse_vector(cols[4], line_no)?)?,
                })
            };
            check_sense(cols[0]).map_err(|e| Error::parse(line_no, e.to_string()))?;
            exemplars.push(Exemplar {
                features,
                sense: cols[0].to_string(),
            });
        }
        KnnModel::new(h[0], params, exemplars).map_err(|e| match e {
            Error::Parse { .. } => e,
            other => Error::parse(1, other.to_string()),
        })
    }
}

fn check_sense(sense: &str) -> Result<()> {
    if sense.is_empty() || sense.contains(['\t', '\n', '\r']) {
        return Err(Error::InvalidArgument(format!("invalid sense label {sense:?}")));
    }
    Ok(())
}

/// Indices of the `k` smallest distances, stable on ties.
fn top_k(distances: &[f64], k: usize) -> Vec<(usize, f64)> {
    let mut order: Vec<usize> = (0..distances.len()).collect();
    order.sort_by(|&a, &b| distances[a].total_cmp(&distances[b]));
    order.truncate(k);
    order.into_iter().map(|i| (i, distances[i])).collect()
}

/// Inverse-distance vote; ties go to the lexicographically smallest sense.
fn vote<'a>(neighbors: impl Iterator<Item = (&'a str, f64)>) -> &'a str {
    let mut mass: BTreeMap<&str, f64> = BTreeMap::new();
    for (sense, d) in neighbors {
        *mass.entry(sense).or_default() += 1.0 / (d + VOTE_EPSILON);
    }
    let mut best: Option<(&str, f64)> = None;
    for (sense, m) in mass {
        if best.is_none_or(|(_, bm)| m > bm) {
            best = Some((sense, m));
        }
    }
    best.map(|(s, _)| s).unwrap_or_default()
}

fn single_preposition(instances: &[PrepInstance]) -> Result<&str> {
    let first = instances.first().ok_or_else(|| Error::Empty("instances".into()))?;
    let prep = first.preposition();
    if let Some(other) = instances.iter().find(|i| i.preposition() != prep) {
        return Err(Error::InvalidArgument(format!(
            "instance {} is for {:?}, expected {prep:?}",
            other.id(),
            other.preposition()
        )));
    }
    Ok(prep)
}

fn compute_features(
    instances: &[PrepInstance],
    k_left: usize,
    k_right: usize,
    mode: FeatureMode,
    table: &EmbeddingTable,
) -> Vec<InstanceFeatures> {
    instances
        .par_iter()
        .map(|i| InstanceFeatures::compute(i, k_left, k_right, mode, table))
        .collect()
}

/// Fraction of labeled test instances the model classifies correctly.
pub fn evaluate(model: &KnnModel, test: &[PrepInstance], table: &EmbeddingTable) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::Empty("test set".into()));
    }
    let results: Vec<Result<bool>> = test
        .par_iter()
        .map(|inst| {
            let gold = inst
                .sense()
                .ok_or_else(|| Error::InvalidArgument(format!("instance {} has no sense", inst.id())))?;
            Ok(model.predict_instance(inst, table)? == gold)
        })
        .collect();
    let mut hits = 0usize;
    for r in results {
        hits += usize::from(r?);
    }
    Ok(hits as f64 / test.len() as f64)
}

/// Splits instances into train and development sets.
///
/// Selection is stratified by sense: every sense keeps at least one instance
/// in train, and the overall train size is `round(ratio * n)` unless that
/// minimum forces it higher. Both outputs keep input order.
pub fn split_train_dev(
    instances: &[PrepInstance],
    ratio: f64,
    seed: u64,
) -> Result<(Vec<PrepInstance>, Vec<PrepInstance>)> {
    if instances.is_empty() {
        return Err(Error::Empty("instances".into()));
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::InvalidArgument(format!("ratio must be in (0, 1), got {ratio}")));
    }
    let mut strata: BTreeMap<Option<&str>, Vec<usize>> = BTreeMap::new();
    for (i, inst) in instances.iter().enumerate() {
        strata.entry(inst.sense()).or_default().push(i);
    }

    // Largest-remainder allocation of the train quota across strata.
    let target = (ratio * instances.len() as f64).round() as usize;
    let mut quota: Vec<usize> = Vec::with_capacity(strata.len());
    let mut remainders: Vec<(usize, f64)> = Vec::new();
    for (s, members) in strata.values().enumerate() {
        let exact = ratio * members.len() as f64;
        let base = (exact.floor() as usize).max(1).min(members.len());
        quota.push(base);
        if base < members.len() {
            remainders.push((s, exact - exact.floor()));
        }
    }
    let assigned: usize = quota.iter().sum();
    remainders.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    for (s, _) in remainders.into_iter().take(target.saturating_sub(assigned)) {
        quota[s] += 1;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut in_train = vec![false; instances.len()];
    for (members, q) in strata.values().zip(quota) {
        let mut shuffled = members.clone();
        shuffled.shuffle(&mut rng);
        for &i in &shuffled[..q] {
            in_train[i] = true;
        }
    }
    let (train, dev): (Vec<_>, Vec<_>) = instances.iter().cloned().zip(in_train).partition(|(_, t)| *t);
    Ok((
        train.into_iter().map(|(i, _)| i).collect(),
        dev.into_iter().map(|(i, _)| i).collect(),
    ))
}

/// Candidate hyperparameters for [`tune`].
#[derive(Clone, Debug, PartialEq)]
pub struct TuneGrid {
    pub k_neighbors: Vec<usize>,
    pub weights: Vec<BlockWeights>,
    pub k_left: Vec<usize>,
    pub k_right: Vec<usize>,
}

impl Default for TuneGrid {
    fn default() -> Self {
        let levels = [0.0, 0.5, 1.0];
        let mut weights = Vec::new();
        for l in levels {
            for r in levels {
                for i in levels {
                    if let Ok(w) = BlockWeights::new(l, r, i) {
                        weights.push(w);
                    }
                }
            }
        }
        TuneGrid {
            k_neighbors: vec![1, 3, 5, 9, 15],
            weights,
            k_left: vec![1, 2, 3, 4],
            k_right: vec![1, 2, 3, 4],
        }
    }
}

impl TuneGrid {
    /// Sorted, deduplicated copy restricted to the weights usable by `mode`.
    fn canonical(&self, mode: FeatureMode) -> Result<TuneGrid> {
        fn sorted_usize(v: &[usize]) -> Vec<usize> {
            let mut v = v.to_vec();
            v.sort_unstable();
            v.dedup();
            v
        }
        let mut weights: Vec<BlockWeights> = if mode == FeatureMode::Average {
            vec![BlockWeights::new(1.0, 0.0, 0.0)?]
        } else {
            self.weights.iter().copied().filter(|w| w.fits(mode)).collect()
        };
        for w in &weights {
            BlockWeights::new(w.left, w.right, w.inter)?;
        }
        weights.sort_by(|a, b| {
            a.left
                .total_cmp(&b.left)
                .then(a.right.total_cmp(&b.right))
                .then(a.inter.total_cmp(&b.inter))
        });
        weights.dedup();
        let grid = TuneGrid {
            k_neighbors: sorted_usize(&self.k_neighbors),
            weights,
            k_left: sorted_usize(&self.k_left),
            k_right: sorted_usize(&self.k_right),
        };
        if grid.k_neighbors.is_empty() || grid.weights.is_empty() || grid.k_left.is_empty() || grid.k_right.is_empty() {
            return Err(Error::Empty(format!("tuning grid for mode {mode}")));
        }
        if grid.k_neighbors[0] == 0 || grid.k_left[0] == 0 || grid.k_right[0] == 0 {
            return Err(Error::InvalidArgument("grid values must be at least 1".into()));
        }
        Ok(grid)
    }
}

/// Dev accuracy of one grid cell.
#[derive(Clone, Debug, PartialEq)]
pub struct CellScore {
    pub params: KnnParams,
    pub accuracy: f64,
}

#[derive(Clone, Debug)]
pub struct TuneOutcome {
    pub model: KnnModel,
    pub dev_accuracy: f64,
    /// Every evaluated cell, in grid iteration order.
    pub cells: Vec<CellScore>,
}

/// Exhaustive grid search for the cell with the best dev accuracy.
///
/// Cells are visited with window sizes outermost, then weights, then neighbor
/// count, each ascending; the first cell reaching the maximum wins.
pub fn tune(
    train: &[PrepInstance],
    dev: &[PrepInstance],
    grid: &TuneGrid,
    mode: FeatureMode,
    table: &EmbeddingTable,
) -> Result<TuneOutcome> {
    let preposition = single_preposition(train)?;
    if dev.is_empty() {
        return Err(Error::Empty("development set".into()));
    }
    if let Some(bad) = dev.iter().find(|i| i.preposition() != preposition) {
        return Err(Error::InvalidArgument(format!(
            "dev instance {} is for {:?}, expected {preposition:?}",
            bad.id(),
            bad.preposition()
        )));
    }
    let gold: Vec<&str> = dev
        .iter()
        .map(|i| {
            i.sense()
                .ok_or_else(|| Error::InvalidArgument(format!("dev instance {} has no sense", i.id())))
        })
        .collect::<Result<_>>()?;
    let grid = grid.canonical(mode)?;

    let mut cells = Vec::new();
    let mut best: Option<(KnnModel, f64)> = None;
    for &k_left in &grid.k_left {
        for &k_right in &grid.k_right {
            let base = KnnParams {
                k_neighbors: grid.k_neighbors[0],
                weights: grid.weights[0],
                k_left,
                k_right,
                mode,
            };
            let model = KnnModel::train(train, base, table)?;
            let queries = compute_features(dev, k_left, k_right, mode, table);
            let blocks: Vec<Vec<[f64; 3]>> = queries
                .par_iter()
                .map(|q| model.exemplars.iter().map(|e| q.block_distances(&e.features)).collect())
                .collect();

            let scores: Vec<Vec<f64>> = grid
                .weights
                .par_iter()
                .map(|w| score_weights(&model, &blocks, &gold, w, &grid.k_neighbors))
                .collect();

            for (w, per_k) in grid.weights.iter().zip(scores) {
                for (&k, accuracy) in grid.k_neighbors.iter().zip(per_k) {
                    let params = KnnParams {
                        k_neighbors: k,
                        weights: *w,
                        ..base
                    };
                    if best.as_ref().is_none_or(|(_, b)| accuracy > *b) {
                        best = Some((model.with_params(k, *w)?, accuracy));
                    }
                    cells.push(CellScore { params, accuracy });
                }
            }
        }
    }
    let (model, dev_accuracy) = best.expect("grid is nonempty");
    Ok(TuneOutcome {
        model,
        dev_accuracy,
        cells,
    })
}

/// Dev accuracy for every neighbor count under one weight vector, from
/// precomputed block distances.
fn score_weights(
    model: &KnnModel,
    blocks: &[Vec<[f64; 3]>],
    gold: &[&str],
    weights: &BlockWeights,
    ks: &[usize],
) -> Vec<f64> {
    let max_k = *ks.last().unwrap();
    let mut hits = vec![0usize; ks.len()];
    for (row, g) in blocks.iter().zip(gold) {
        let distances: Vec<f64> = row.iter().map(|d| weights.combine(d)).collect();
        let ranked = top_k(&distances, max_k);
        for (h, &k) in hits.iter_mut().zip(ks) {
            let take = k.min(ranked.len());
            let predicted = vote(
                ranked[..take]
                    .iter()
                    .map(|&(i, d)| (model.exemplars[i].sense.as_str(), d)),
            );
            if predicted == *g {
                *h += 1;
            }
        }
    }
    hits.into_iter().map(|h| h as f64 / gold.len() as f64).collect()
}
