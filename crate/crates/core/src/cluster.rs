//! Unsupervised sense induction: k-means over instance feature vectors, with
//! clusters named by the dominant training sense of their members.

use std::collections::{BTreeMap, HashSet};
use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::embeddings::EmbeddingTable;
use crate::features::{instance_vector, parse_vector, FeatureMode, PrepInstance};
use crate::linalg::squared_distance;
use crate::{Error, Result};

/// Context window used on both sides when clustering.
pub const CLUSTER_WINDOW: usize = 2;

#[derive(Clone, Debug, PartialEq)]
pub struct KMeansModel {
    centroids: Vec<Vec<f64>>,
    feature_mode: FeatureMode,
    senses: Option<Vec<String>>,
    purity: Option<Vec<f64>>,
}

/// A fitted model plus the trace of the fit.
#[derive(Clone, Debug)]
pub struct KMeansFit {
    pub model: KMeansModel,
    pub assignments: Vec<usize>,
    /// Within-cluster sum of squared distances after each assignment step.
    pub sse_history: Vec<f64>,
}

impl KMeansModel {
    pub fn new(centroids: Vec<Vec<f64>>, feature_mode: FeatureMode) -> Result<Self> {
        let dim = centroids
            .first()
            .map(Vec::len)
            .ok_or_else(|| Error::Empty("centroids".into()))?;
        if dim == 0 {
            return Err(Error::InvalidArgument("zero-dimensional centroids".into()));
        }
        for c in &centroids {
            if c.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: c.len(),
                });
            }
            if c.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument("non-finite centroid".into()));
            }
        }
        Ok(KMeansModel {
            centroids,
            feature_mode,
            senses: None,
            purity: None,
        })
    }

    pub fn k(&self) -> usize {
        self.centroids.len()
    }

    pub fn dim(&self) -> usize {
        self.centroids[0].len()
    }

    pub fn centroids(&self) -> &[Vec<f64>] {
        &self.centroids
    }

    pub fn feature_mode(&self) -> FeatureMode {
        self.feature_mode
    }

    pub fn with_feature_mode(mut self, mode: FeatureMode) -> Self {
        self.feature_mode = mode;
        self
    }

    pub fn senses(&self) -> Option<&[String]> {
        self.senses.as_deref()
    }

    pub fn purity(&self) -> Option<&[f64]> {
        self.purity.as_deref()
    }

    /// Index of the nearest centroid by Euclidean distance; ties go to the
    /// lowest cluster id.
    pub fn assign(&self, point: &[f64]) -> Result<usize> {
        if point.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: point.len(),
            });
        }
        Ok(nearest_centroid(&self.centroids, point).0)
    }

    /// Names each cluster after the most frequent sense among the training
    /// points assigned to it. Ties go to the lexicographically smallest sense;
    /// clusters without training points get the overall most frequent sense.
    pub fn label(mut self, points: &[Vec<f64>], senses: &[String]) -> Result<Self> {
        if points.len() != senses.len() {
            return Err(Error::InvalidArgument(format!(
                "{} points but {} senses",
                points.len(),
                senses.len()
            )));
        }
        if points.is_empty() {
            return Err(Error::Empty("training points".into()));
        }
        let mut per_cluster: Vec<BTreeMap<&str, usize>> = vec![BTreeMap::new(); self.k()];
        let mut overall: BTreeMap<&str, usize> = BTreeMap::new();
        for (p, s) in points.iter().zip(senses) {
            let c = self.assign(p)?;
            *per_cluster[c].entry(s).or_default() += 1;
            *overall.entry(s).or_default() += 1;
        }
        let fallback = majority(&overall).expect("nonempty").0.to_string();
        let mut labels = Vec::with_capacity(self.k());
        let mut purity = Vec::with_capacity(self.k());
        for counts in &per_cluster {
            match majority(counts) {
                Some((sense, count)) => {
                    labels.push(sense.to_string());
                    purity.push(count as f64 / counts.values().sum::<usize>() as f64);
                }
                None => {
                    labels.push(fallback.clone());
                    purity.push(0.0);
                }
            }
        }
        self.senses = Some(labels);
        self.purity = Some(purity);
        Ok(self)
    }

    pub fn predict(&self, point: &[f64]) -> Result<&str> {
        let senses = self.senses.as_ref().ok_or(Error::UnlabeledModel)?;
        Ok(&senses[self.assign(point)?])
    }

    pub fn write_tsv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{} {} {}", self.k(), self.dim(), self.feature_mode)?;
        for c in &self.centroids {
            let row: Vec<String> = c.iter().map(f64::to_string).collect();
            writeln!(out, "{}", row.join("\t"))?;
        }
        if let (Some(senses), Some(purity)) = (&self.senses, &self.purity) {
            writeln!(out, "labels")?;
            for (i, (s, p)) in senses.iter().zip(purity).enumerate() {
                writeln!(out, "{i}\t{s}\t{p}")?;
            }
        }
        Ok(())
    }

    pub fn read_tsv<R: BufRead>(input: R) -> Result<Self> {
        let lines: Vec<String> = input.lines().collect::<std::io::Result<_>>()?;
        let header = lines.first().ok_or_else(|| Error::parse(1, "missing header"))?;
        let fields: Vec<&str> = header.split(' ').collect();
        if fields.len() != 3 {
            return Err(Error::parse(1, "header must be \"k D feature_mode\""));
        }
        let k: usize = fields[0].parse().map_err(|_| Error::parse(1, "invalid k"))?;
        let dim: usize = fields[1].parse().map_err(|_| Error::parse(1, "invalid dimension"))?;
        let mode: FeatureMode = fields[2].parse().map_err(|_| Error::parse(1, "invalid feature mode"))?;
        if k == 0 || dim == 0 {
            return Err(Error::parse(1, "k and D must be positive"));
        }
        if lines.len() < 1 + k {
            return Err(Error::parse(lines.len() + 1, "missing centroid rows"));
        }
        let mut centroids = Vec::with_capacity(k);
        for (i, line) in lines[1..=k].iter().enumerate() {
            let row = parse_vector(&line.replace('\t', ","), i + 2)?;
            if row.len() != dim {
                return Err(Error::parse(i + 2, format!("expected {dim} values")));
            }
            centroids.push(row);
        }
        let mut model = KMeansModel::new(centroids, mode)?;
        let rest = &lines[1 + k..];
        if rest.iter().all(|l| l.is_empty()) {
            return Ok(model);
        }
        if rest[0] != "labels" {
            return Err(Error::parse(k + 2, "expected \"labels\" block"));
        }
        let mut senses = vec![None; k];
        let mut purity = vec![0.0; k];
        for (i, line) in rest[1..].iter().enumerate() {
            let line_no = k + 3 + i;
            if line.is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 3 {
                return Err(Error::parse(line_no, "expected cluster_id, sense, purity"));
            }
            let id: usize = cols[0]
                .parse()
                .ok()
                .filter(|&id| id < k)
                .ok_or_else(|| Error::parse(line_no, "invalid cluster id"))?;
            let p: f64 = cols[2]
                .parse()
                .ok()
                .filter(|p: &f64| (0.0..=1.0).contains(p))
                .ok_or_else(|| Error::parse(line_no, "invalid purity"))?;
            if cols[1].is_empty() {
                return Err(Error::parse(line_no, "empty sense"));
            }
            senses[id] = Some(cols[1].to_string());
            purity[id] = p;
        }
        let senses: Option<Vec<String>> = senses.into_iter().collect();
        let senses = senses.ok_or_else(|| Error::parse(lines.len(), "labels do not cover every cluster"))?;
        model.senses = Some(senses);
        model.purity = Some(purity);
        Ok(model)
    }
}

fn majority<'a>(counts: &BTreeMap<&'a str, usize>) -> Option<(&'a str, usize)> {
    // BTreeMap iterates in ascending key order, so strict `>` keeps the
    // smallest sense among ties.
    let mut best: Option<(&str, usize)> = None;
    for (&sense, &count) in counts {
        if best.is_none_or(|(_, c)| count > c) {
            best = Some((sense, count));
        }
    }
    best
}

fn nearest_centroid(centroids: &[Vec<f64>], point: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centroids.iter().enumerate() {
        let d = squared_distance(c, point);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

/// k-means with k-means++ seeding and Lloyd iterations.
///
/// Iterates until the assignment no longer changes or `max_iter` update steps
/// have run. A cluster that loses all its points is re-seeded with the point
/// farthest from its own centroid.
pub fn kmeans_fit(points: &[Vec<f64>], k: usize, seed: u64, max_iter: usize) -> Result<KMeansFit> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    if points.len() < k {
        return Err(Error::InvalidArgument(format!(
            "{} points is fewer than k = {k}",
            points.len()
        )));
    }
    let dim = points[0].len();
    if let Some(bad) = points.iter().find(|p| p.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: bad.len(),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = plus_plus_init(points, k, &mut rng);
    let (mut assignments, sse) = assign_all(&centroids, points);
    let mut sse_history = vec![sse];

    for _ in 0..max_iter {
        update_centroids(&mut centroids, &mut assignments, points);
        let (next, sse) = assign_all(&centroids, points);
        sse_history.push(sse);
        let converged = next == assignments;
        assignments = next;
        if converged {
            break;
        }
    }

    Ok(KMeansFit {
        model: KMeansModel::new(centroids, FeatureMode::All)?,
        assignments,
        sse_history,
    })
}

fn plus_plus_init(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut centroids = vec![points[rng.random_range(0..points.len())].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| squared_distance(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let chosen = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            // Scan in input order; fall back to the last positive weight if
            // rounding leaves the target past the end.
            let mut pick = d2.iter().rposition(|&d| d > 0.0).unwrap_or(0);
            for (i, &d) in d2.iter().enumerate() {
                acc += d;
                if acc > target && d > 0.0 {
                    pick = i;
                    break;
                }
            }
            pick
        } else {
            rng.random_range(0..points.len())
        };
        let c = points[chosen].clone();
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(squared_distance(p, &c));
        }
        centroids.push(c);
    }
    centroids
}

fn assign_all(centroids: &[Vec<f64>], points: &[Vec<f64>]) -> (Vec<usize>, f64) {
    let mut sse = 0.0;
    let assignments = points
        .iter()
        .map(|p| {
            let (c, d) = nearest_centroid(centroids, p);
            sse += d;
            c
        })
        .collect();
    (assignments, sse)
}

fn update_centroids(centroids: &mut [Vec<f64>], assignments: &mut [usize], points: &[Vec<f64>]) {
    let dim = points[0].len();
    let k = centroids.len();
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (p, &c) in points.iter().zip(assignments.iter()) {
        counts[c] += 1;
        for (s, v) in sums[c].iter_mut().zip(p) {
            *s += v;
        }
    }
    for c in 0..k {
        if counts[c] > 0 {
            let n = counts[c] as f64;
            centroids[c] = sums[c].iter().map(|s| s / n).collect();
        }
    }
    for c in 0..k {
        if counts[c] > 0 {
            continue;
        }
        // Farthest point from its own centroid, among clusters that can spare it.
        let far = points
            .iter()
            .enumerate()
            .filter(|(i, _)| counts[assignments[*i]] > 1)
            .map(|(i, p)| (i, squared_distance(p, &centroids[assignments[i]])))
            .fold(None, |best: Option<(usize, f64)>, (i, d)| match best {
                Some((_, bd)) if bd >= d => best,
                _ => Some((i, d)),
            });
        if let Some((i, _)) = far {
            counts[assignments[i]] -= 1;
            assignments[i] = c;
            counts[c] = 1;
            centroids[c] = points[i].clone();
        }
    }
}

/// Fraction of predictions equal to the gold labels.
pub fn disambiguation_accuracy<S: AsRef<str>, T: AsRef<str>>(predictions: &[S], gold: &[T]) -> Result<f64> {
    if predictions.len() != gold.len() {
        return Err(Error::InvalidArgument(format!(
            "{} predictions but {} gold labels",
            predictions.len(),
            gold.len()
        )));
    }
    if predictions.is_empty() {
        return Err(Error::Empty("predictions".into()));
    }
    let hits = predictions
        .iter()
        .zip(gold)
        .filter(|(p, g)| p.as_ref() == g.as_ref())
        .count();
    Ok(hits as f64 / predictions.len() as f64)
}

/// Options for fitting one preposition's sense clusters from instances.
#[derive(Clone, Debug)]
pub struct ClusterOptions {
    pub mode: FeatureMode,
    /// Cluster count; defaults to the number of distinct training senses.
    pub k: Option<usize>,
    pub seed: u64,
    pub max_iter: usize,
}

impl Default for ClusterOptions {
    fn default() -> Self {
        ClusterOptions {
            mode: FeatureMode::All,
            k: None,
            seed: 42,
            max_iter: 300,
        }
    }
}

/// Clusters labeled instances of a single preposition and labels the clusters.
pub fn fit_instances(
    instances: &[PrepInstance],
    table: &EmbeddingTable,
    options: &ClusterOptions,
) -> Result<KMeansModel> {
    let labeled: Vec<&PrepInstance> = instances.iter().filter(|i| i.sense().is_some()).collect();
    if labeled.is_empty() {
        return Err(Error::Empty("labeled training instances".into()));
    }
    let senses: Vec<String> = labeled.iter().map(|i| i.sense().unwrap().to_string()).collect();
    let distinct = senses.iter().collect::<HashSet<_>>().len();
    let k = options.k.unwrap_or(distinct).min(labeled.len());
    let points: Vec<Vec<f64>> = labeled
        .iter()
        .map(|i| instance_vector(i, CLUSTER_WINDOW, CLUSTER_WINDOW, options.mode, table))
        .collect();
    let fit = kmeans_fit(&points, k, options.seed, options.max_iter)?;
    fit.model.with_feature_mode(options.mode).label(&points, &senses)
}

/// Predicted senses for instances under a labeled model.
pub fn predict_instances(
    model: &KMeansModel,
    instances: &[PrepInstance],
    table: &EmbeddingTable,
) -> Result<Vec<String>> {
    instances
        .iter()
        .map(|i| {
            let v = instance_vector(i, CLUSTER_WINDOW, CLUSTER_WINDOW, model.feature_mode(), table);
            model.predict(&v).map(str::to_string)
        })
        .collect()
}

/// Groups instances by preposition, keeping input order inside each group.
pub fn group_by_preposition(instances: &[PrepInstance]) -> BTreeMap<String, Vec<PrepInstance>> {
    let mut groups: BTreeMap<String, Vec<PrepInstance>> = BTreeMap::new();
    for inst in instances {
        groups
            .entry(inst.preposition().to_string())
            .or_default()
            .push(inst.clone());
    }
    groups
}
