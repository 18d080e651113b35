//! Acceptance criteria, one line of output per criterion.
//!
//! Criteria 9 and 10 need external data and report SKIP unless these
//! variables are set:
//!
//! - `PSD_VECTORS`: pretrained word vectors in the textual format.
//! - `PSD_SEMEVAL_DIR`: either `train.tsv` and `test.tsv` instance files, or
//!   `train/` and `test/` directories holding `*.xml` and optional `*.key` files.
//! - `PSD_VPC_DATA`, `PSD_SENSE_VECTORS`, `PSD_KNN_MODELS`: the VPC dataset,
//!   sense-specific vectors and a directory of `<prep>.knn.tsv` models.

mod common;

use std::collections::{BTreeMap, HashSet};
use std::env;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use prepsense::classify::{evaluate, tune, BlockWeights, KnnParams, TuneGrid};
use prepsense::cluster::{fit_instances, group_by_preposition, predict_instances, ClusterOptions};
use prepsense::corpus::{convert_semeval, read_instances_tsv, sense_token, tag_corpus, Corpus};
use prepsense::embed_train::{gradient_check, train_cbow, TrainConfig};
use prepsense::eval::{
    parse_vpc, prec_at_k, relation_eval, select_vpc_sense, vpc_accuracy, vpc_paraphrase, RelationVector, VpcEntry,
};
use prepsense::features::{interplay_feature, PrepInstance};
use prepsense::{EmbeddingTable, FeatureMode, KnnModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::*;

enum Status {
    Pass,
    Fail,
    Skip,
}

struct Outcome {
    status: Status,
    detail: String,
}

fn gate(ok: bool, detail: String) -> Outcome {
    Outcome {
        status: if ok { Status::Pass } else { Status::Fail },
        detail,
    }
}

fn skip(detail: &str) -> Outcome {
    Outcome {
        status: Status::Skip,
        detail: detail.to_string(),
    }
}

// ---------------------------------------------------------------------------
// 1. Interplay vector against a sphere grid in the combined span.

fn matrix(vs: &[Vec<f64>]) -> DMatrix<f64> {
    DMatrix::from_fn(vs[0].len(), vs.len(), |r, c| vs[c][r])
}

/// Orthogonal projector onto the column space of `a`, via the normal equations.
fn projector(a: &DMatrix<f64>) -> DMatrix<f64> {
    let gram = a.transpose() * a;
    let inv = gram.try_inverse().expect("independent columns");
    a * inv * a.transpose()
}

/// Sum of squared distances of unit `c` (span coordinates) to both subspaces.
fn span_objective(m: &DMatrix<f64>, c: &[f64]) -> f64 {
    let k = c.len();
    let vals = m.as_slice();
    let mut quad = 0.0;
    let mut sq = 0.0;
    for j in 0..k {
        sq += c[j] * c[j];
        let col = &vals[j * k..(j + 1) * k];
        let mut acc = 0.0;
        for i in 0..k {
            acc += col[i] * c[i];
        }
        quad += acc * c[j];
    }
    2.0 * sq - quad
}

fn from_angles(angles: &[f64], out: &mut Vec<f64>) {
    out.clear();
    let mut sines = 1.0;
    for a in angles {
        let (sin, cos) = a.sin_cos();
        out.push(sines * cos);
        sines *= sin;
    }
    out.push(sines);
}

/// Minimum over all angle tuples `start[i] + j * step` with `j` in `0..counts[i]`.
fn scan(m: &DMatrix<f64>, start: &[f64], step: f64, counts: &[usize]) -> (f64, Vec<f64>) {
    let mut best = (f64::INFINITY, start.to_vec());
    let mut idx = vec![0usize; counts.len()];
    let mut angles = start.to_vec();
    let mut c = Vec::with_capacity(counts.len() + 1);
    loop {
        for ((a, &j), s) in angles.iter_mut().zip(&idx).zip(start) {
            *a = s + j as f64 * step;
        }
        from_angles(&angles, &mut c);
        let v = span_objective(m, &c);
        if v < best.0 {
            best = (v, angles.clone());
        }
        let mut pos = 0;
        loop {
            if pos == idx.len() {
                return best;
            }
            idx[pos] += 1;
            if idx[pos] < counts[pos] {
                break;
            }
            idx[pos] = 0;
            pos += 1;
        }
    }
}

/// Minimum of the objective over the unit sphere of the span, sampled on a
/// 2-degree angular grid. Antipodal points share a value, so the last angle
/// covers half a turn. Spans of dimension 5 or more are searched coarse to
/// fine, ending on the 2-degree lattice around the best coarse cells.
fn grid_min(m: &DMatrix<f64>) -> f64 {
    let k = m.nrows();
    if k == 1 {
        return span_objective(m, &[1.0]);
    }
    let deg = std::f64::consts::PI / 180.0;
    let full = |step_deg: usize| -> Vec<usize> {
        let mut c = vec![180 / step_deg + 1; k - 1];
        c[k - 2] = 180 / step_deg;
        c
    };
    if k <= 4 {
        return scan(m, &vec![0.0; k - 1], 2.0 * deg, &full(2)).0;
    }
    let coarse = if k == 5 { 10 } else { 15 };
    let (mut best, mut center) = scan(m, &vec![0.0; k - 1], coarse as f64 * deg, &full(coarse));
    for step in [8.0, 6.0, 4.0, 2.0] {
        loop {
            let start: Vec<f64> = center.iter().map(|a| a - 2.0 * step * deg).collect();
            let (v, at) = scan(m, &start, step * deg, &vec![5; k - 1]);
            if v < best - 1e-15 {
                best = v;
                center = at;
            } else {
                break;
            }
        }
    }
    best
}

fn sign_free_distance(a: &[f64], b: &[f64]) -> f64 {
    let minus: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let plus: f64 = a.iter().zip(b).map(|(x, y)| (x + y).powi(2)).sum::<f64>().sqrt();
    minus.min(plus)
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn ac1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut worst_gap, mut worst_span, mut worst_scale) = (f64::NEG_INFINITY, 0.0f64, 0.0f64);
    for _ in 0..1000 {
        let dim = rng.random_range(5..=50);
        let nl = rng.random_range(1..=3);
        let nr = rng.random_range(1..=3);
        let left: Vec<Vec<f64>> = (0..nl).map(|_| gaussian(&mut rng, dim)).collect();
        let right: Vec<Vec<f64>> = (0..nr).map(|_| gaussian(&mut rng, dim)).collect();
        let (v, _) = interplay_feature(&left, &right, dim);

        // Independent oracle: QR basis of the combined span, projectors from
        // the normal equations.
        let both: Vec<Vec<f64>> = left.iter().chain(&right).cloned().collect();
        let a = matrix(&both);
        let m_cols = a.ncols().min(dim);
        let q = a.clone().qr().q().columns(0, m_cols).into_owned();
        let p = projector(&matrix(&left)) + projector(&matrix(&right));
        let m = q.transpose() * &p * &q;
        let vv = DVector::from_column_slice(&v);
        let objective = 2.0 * vv.dot(&vv) - (vv.transpose() * &p * &vv)[(0, 0)];
        worst_gap = worst_gap.max(objective - grid_min(&m));

        // Same spans from different spanning vectors.
        let mix = |vs: &[Vec<f64>], rng: &mut ChaCha8Rng| -> Vec<Vec<f64>> {
            (0..vs.len())
                .map(|i| {
                    let mut out = vec![0.0; dim];
                    for (j, x) in vs.iter().enumerate() {
                        let c: f64 = if i == j { 2.0 } else { 0.0 } + rng.random_range(-0.5..0.5);
                        for (o, xi) in out.iter_mut().zip(x) {
                            *o += c * xi;
                        }
                    }
                    out
                })
                .collect()
        };
        let (mixed, _) = interplay_feature(&mix(&left, &mut rng), &mix(&right, &mut rng), dim);
        worst_span = worst_span.max(sign_free_distance(&v, &mixed));

        let c = rng.random_range(0.01..100.0);
        let scale =
            |vs: &[Vec<f64>]| -> Vec<Vec<f64>> { vs.iter().map(|x| x.iter().map(|y| y * c).collect()).collect() };
        let (scaled, _) = interplay_feature(&scale(&left), &scale(&right), dim);
        worst_scale = worst_scale.max(max_abs_diff(&v, &scaled));
    }
    gate(
        worst_gap <= 1e-6 && worst_span <= 1e-6 && worst_scale <= 1e-6,
        format!(
            "1000 cases: max objective minus grid minimum {worst_gap:.2e}, span change {worst_span:.2e}, scale change {worst_scale:.2e}"
        ),
    )
}

// ---------------------------------------------------------------------------
// 2. Two unit vectors with a positive dot product: the normalized sum.

fn ac2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let dim = rng.random_range(2..=50);
        let a = unit(&mut rng, dim);
        let mut b = unit(&mut rng, dim);
        if dot(&a, &b) < 0.0 {
            b.iter_mut().for_each(|x| *x = -*x);
        }
        if dot(&a, &b) < 1e-6 {
            continue;
        }
        let sum: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
        let n = norm(&sum);
        let expected: Vec<f64> = sum.iter().map(|x| x / n).collect();
        let (v, _) = interplay_feature(&[a], &[b], dim);
        worst = worst.max(max_abs_diff(&v, &expected));
    }
    gate(worst <= 1e-9, format!("max deviation from (a+b)/|a+b| {worst:.2e}"))
}

// ---------------------------------------------------------------------------
// 3. k-means recovers two planted senses.

fn ac3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let dim = 10;
    let sigma = 0.1;
    let mu_a = unit(&mut rng, dim);
    let mut mu_b = unit(&mut rng, dim);
    let proj = dot(&mu_a, &mu_b);
    mu_b.iter_mut().zip(&mu_a).for_each(|(b, a)| *b -= proj * a);
    let nb = norm(&mu_b);
    mu_b.iter_mut().for_each(|b| *b /= nb);
    let separation = norm(&mu_a.iter().zip(&mu_b).map(|(a, b)| a - b).collect::<Vec<_>>());

    let words_a = word_cloud(&mut rng, "a", 30, &mu_a, sigma);
    let words_b = word_cloud(&mut rng, "b", 30, &mu_b, sigma);
    let names_a: Vec<String> = words_a.iter().map(|w| w.0.clone()).collect();
    let names_b: Vec<String> = words_b.iter().map(|w| w.0.clone()).collect();
    let mut rows = words_a;
    rows.extend(words_b);
    rows.push(("at".into(), gaussian(&mut rng, dim)));
    let table = table(dim, rows);

    let instances: Vec<PrepInstance> = (0..200)
        .map(|i| {
            let (words, sense) = if i % 2 == 0 { (&names_a, "A") } else { (&names_b, "B") };
            let left = pick(&mut rng, words, 2);
            let right = pick(&mut rng, words, 2);
            instance(&format!("i{i}"), &left, "at", &right, Some(sense))
        })
        .collect();
    let model = fit_instances(&instances, &table, &ClusterOptions::default()).expect("fit");
    let predicted = predict_instances(&model, &instances, &table).expect("predict");
    let hits = predicted
        .iter()
        .zip(&instances)
        .filter(|(p, i)| Some(p.as_str()) == i.sense())
        .count();
    let acc = hits as f64 / instances.len() as f64;
    gate(
        acc >= 0.95,
        format!(
            "accuracy {acc:.3} on 200 instances, separation {:.1} sigma",
            separation / sigma
        ),
    )
}

// ---------------------------------------------------------------------------
// 4 and 5. A preposition whose sense depends jointly on both sides.

struct JointTask {
    table: EmbeddingTable,
    train: Vec<PrepInstance>,
    dev: Vec<PrepInstance>,
    test: Vec<PrepInstance>,
}

/// Context words fall into classes P, Q and R. Sense A puts the ordered pairs
/// (P,Q), (Q,R), (R,P) on the left and right; sense B the reversed pairs. Each
/// side alone, and the pooled context mean, carry no information.
fn joint_task(seed: u64, sigma: f64, sizes: [usize; 3]) -> JointTask {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = 12;
    let mut rows = Vec::new();
    let mut classes = Vec::new();
    for name in ["p", "q", "r"] {
        let center = unit(&mut rng, dim);
        let words = word_cloud(&mut rng, name, 15, &center, sigma);
        classes.push(words.iter().map(|w| w.0.clone()).collect::<Vec<_>>());
        rows.extend(words);
    }
    rows.push(("through".into(), gaussian(&mut rng, dim)));
    let table = table(dim, rows);
    let mut make = |n: usize, tag: &str| -> Vec<PrepInstance> {
        (0..n)
            .map(|i| {
                let pair = rng.random_range(0..3);
                let sense_a = rng.random_bool(0.5);
                let (l, r) = if sense_a {
                    (pair, (pair + 1) % 3)
                } else {
                    ((pair + 1) % 3, pair)
                };
                let left = pick(&mut rng, &classes[l], 2);
                let right = pick(&mut rng, &classes[r], 2);
                let sense = if sense_a { "A" } else { "B" };
                instance(&format!("{tag}{i}"), &left, "through", &right, Some(sense))
            })
            .collect()
    };
    let train = make(sizes[0], "train");
    let dev = make(sizes[1], "dev");
    let test = make(sizes[2], "test");
    JointTask {
        table,
        train,
        dev,
        test,
    }
}

fn ac4() -> Outcome {
    let task = joint_task(4, 0.35, [240, 80, 200]);
    let grid = TuneGrid::default();
    let score = |mode: FeatureMode| -> (f64, f64) {
        let out = tune(&task.train, &task.dev, &grid, mode, &task.table).expect("tune");
        (
            out.dev_accuracy,
            evaluate(&out.model, &task.test, &task.table).expect("evaluate"),
        )
    };
    let (dev_all, test_all) = score(FeatureMode::All);
    let (dev_avg, test_avg) = score(FeatureMode::Average);
    gate(
        test_all - test_avg >= 0.05,
        format!("test accuracy (l,r,i) {test_all:.3} vs average {test_avg:.3} (dev {dev_all:.3} vs {dev_avg:.3})"),
    )
}

fn ac5() -> Outcome {
    let task = joint_task(5, 0.9, [120, 60, 0]);
    let grid = TuneGrid {
        k_neighbors: vec![7, 1, 3, 5],
        weights: ["1,1,1", "1,0,0", "0,1,1", "1,0.5,0", "0.5,1,1"]
            .iter()
            .map(|w| w.parse::<BlockWeights>().unwrap())
            .collect(),
        k_left: vec![2, 1],
        k_right: vec![1, 2],
    };
    let out = tune(&task.train, &task.dev, &grid, FeatureMode::All, &task.table).expect("tune");

    let mut independent = Vec::new();
    for &k_left in &[1, 2] {
        for &k_right in &[1, 2] {
            for w in &grid.weights {
                for &k in &[1, 3, 5, 7] {
                    let params = KnnParams {
                        k_neighbors: k,
                        weights: *w,
                        k_left,
                        k_right,
                        mode: FeatureMode::All,
                    };
                    let model = KnnModel::train(&task.train, params, &task.table).expect("train");
                    independent.push((params, evaluate(&model, &task.dev, &task.table).expect("evaluate")));
                }
            }
        }
    }
    let best = independent.iter().map(|c| c.1).fold(f64::NEG_INFINITY, f64::max);
    let all_cells_match = out.cells.len() == independent.len()
        && out.cells.iter().all(|cell| {
            independent
                .iter()
                .any(|(p, acc)| *p == cell.params && *acc == cell.accuracy)
        });
    let chosen = independent.iter().find(|(p, _)| *p == out.model.params()).map(|c| c.1);
    gate(
        out.dev_accuracy == best && chosen == Some(best) && all_cells_match,
        format!(
            "{} cells; tuner {:.4}, independent maximum {best:.4}, every cell reproduced: {all_cells_match}",
            independent.len(),
            out.dev_accuracy
        ),
    )
}

// ---------------------------------------------------------------------------
// 6. CBOW gradients and loss.

fn toy_corpus(seed: u64, n: usize) -> Vec<Vec<String>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let subjects = ["cat", "dog", "bird", "fish"];
    let verbs = ["sat", "ran", "slept", "swam"];
    let places = ["mat", "park", "tree", "pond"];
    (0..n)
        .map(|_| {
            let i = rng.random_range(0..4);
            let s = format!("the {} {} on::{} the {}", subjects[i], verbs[i], i % 2, places[i]);
            s.split(' ').map(String::from).collect()
        })
        .collect()
}

fn ac6() -> Outcome {
    let mut worst = 0.0f64;
    for seed in 0..10 {
        for dim in [1, 4, 8] {
            let config = TrainConfig {
                dim,
                seed,
                ..TrainConfig::default()
            };
            worst = worst.max(gradient_check(&config).expect("check").max_relative_error);
        }
    }
    let config = TrainConfig {
        dim: 10,
        epochs: 2,
        min_count: 1,
        ..TrainConfig::default()
    };
    let out = train_cbow(&toy_corpus(6, 400), &config).expect("train");
    let expected = (1.0 + config.negatives as f64) * std::f64::consts::LN_2;
    let initial = out.initial_loss.unwrap_or(f64::NAN);
    let losses = &out.epoch_losses;
    gate(
        worst < 1e-4 && (initial - expected).abs() < 1e-9 && losses[1] < losses[0],
        format!(
            "max relative gradient error {worst:.2e}; initial loss {initial:.12} vs {expected:.12}; epoch losses {:.4} then {:.4}",
            losses[0], losses[1]
        ),
    )
}

// ---------------------------------------------------------------------------
// 7. Tag a planted corpus, retrain, and inspect the sense vectors.

fn ac7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let dim = 16;
    let mu_a = unit(&mut rng, dim);
    let mu_b = unit(&mut rng, dim);
    let cloud_a = word_cloud(&mut rng, "alpha", 20, &mu_a, 0.3);
    let cloud_b = word_cloud(&mut rng, "beta", 20, &mu_b, 0.3);
    let words_a: Vec<String> = cloud_a.iter().map(|w| w.0.clone()).collect();
    let words_b: Vec<String> = cloud_b.iter().map(|w| w.0.clone()).collect();
    let fillers: Vec<String> = (0..200).map(|i| format!("filler{i}")).collect();
    let mut rows = cloud_a;
    rows.extend(cloud_b);
    for f in &fillers {
        rows.push((f.clone(), gaussian(&mut rng, dim)));
    }
    rows.push(("zap".into(), gaussian(&mut rng, dim)));
    let pretrained = table(dim, rows);

    // Sentences are filler, sense words, a slot, sense words, filler. The slot
    // holds the pseudo-preposition in half of them (always when `force`) and
    // another sense word otherwise. Returns the sentence, its planted sense and
    // the position of "zap" if present.
    let sentence = |rng: &mut ChaCha8Rng, force: bool| -> (Vec<String>, &'static str, Option<usize>) {
        let a = rng.random_bool(0.5);
        let words = if a { &words_a } else { &words_b };
        let mut s = pick(rng, &fillers, 2);
        s.extend(pick(rng, words, 2));
        let with_zap = force || rng.random_bool(0.5);
        let at = s.len();
        s.push(if with_zap {
            "zap".into()
        } else {
            pick(rng, words, 1).remove(0)
        });
        s.extend(pick(rng, words, 2));
        s.extend(pick(rng, &fillers, 2));
        (s, if a { "A" } else { "B" }, with_zap.then_some(at))
    };

    let labeled: Vec<PrepInstance> = (0..200)
        .map(|i| {
            let (s, sense, at) = sentence(&mut rng, true);
            PrepInstance::new(format!("l{i}"), s, at.unwrap(), Some(sense.into())).unwrap()
        })
        .collect();
    let params = KnnParams {
        k_neighbors: 5,
        weights: BlockWeights::new(1.0, 1.0, 1.0).unwrap(),
        k_left: 2,
        k_right: 2,
        mode: FeatureMode::All,
    };
    let model = KnnModel::train(&labeled, params, &pretrained).expect("train k-NN");

    let planted: Vec<_> = (0..5000).map(|_| sentence(&mut rng, false)).collect();
    let corpus = Corpus {
        sentences: planted.iter().map(|p| p.0.clone()).collect(),
        source: "planted".into(),
    };
    let models = BTreeMap::from([("zap".to_string(), model)]);
    let tagged = tag_corpus(&corpus, &models, &pretrained).expect("tag");
    let (mut correct, mut total) = (0, 0);
    for (s, (_, sense, at)) in tagged.sentences.iter().zip(&planted) {
        if let Some(at) = at {
            total += 1;
            correct += usize::from(s[*at] == sense_token("zap", sense));
        }
    }
    let tag_acc = correct as f64 / total as f64;

    let config = TrainConfig {
        dim: 24,
        min_count: 1,
        seed: 7,
        ..TrainConfig::default()
    };
    let trained = train_cbow(&tagged.sentences, &config).expect("retrain").table;
    let set_a: HashSet<&str> = words_a.iter().map(String::as_str).collect();
    let set_b: HashSet<&str> = words_b.iter().map(String::as_str).collect();
    let overlaps = |token: &str| -> (usize, usize, Vec<String>) {
        let query = trained.get(token).expect("sense token trained").to_vec();
        let near = trained.nearest(&query, 5, &HashSet::from([token])).expect("neighbors");
        let names: Vec<String> = near.into_iter().map(|n| n.token).collect();
        let own_a = names.iter().filter(|n| set_a.contains(n.as_str())).count();
        let own_b = names.iter().filter(|n| set_b.contains(n.as_str())).count();
        (own_a, own_b, names)
    };
    let (a_in_a, a_in_b, near_a) = overlaps("zap::A");
    let (b_in_a, b_in_b, near_b) = overlaps("zap::B");
    gate(
        tag_acc >= 0.95 && a_in_a >= 3 && a_in_b <= 1 && b_in_b >= 3 && b_in_a <= 1,
        format!(
            "tag accuracy {tag_acc:.3}; zap::A neighbors {near_a:?} ({a_in_a} own, {a_in_b} other); zap::B neighbors {near_b:?} ({b_in_b} own, {b_in_a} other)"
        ),
    )
}

// ---------------------------------------------------------------------------
// 8. Metric formulas on hand-computed fixtures.

fn ac8() -> Outcome {
    let entry = |verb: &str, gold: &[&str]| {
        VpcEntry::new(
            verb,
            "up",
            vec![vec![verb.to_string(), "up".to_string()]],
            gold.iter().map(|g| g.to_string()).collect(),
            None,
        )
        .unwrap()
    };
    let entries = vec![entry("e1", &["x", "y"]), entry("e2", &["z"]), entry("e3", &["w"])];
    let lists =
        |v: &[&[&str]]| -> Vec<Vec<String>> { v.iter().map(|l| l.iter().map(|s| s.to_string()).collect()).collect() };
    let cands = lists(&[&["x", "q", "y"], &["q", "r", "s"], &["w", "r", "s"]]);
    let expected_prec = [
        (1.0 + 0.0 + 1.0) / 3.0,
        (1.0 / 2.0 + 0.0 + 1.0 / 2.0) / 3.0,
        (2.0 / 3.0 + 0.0 + 1.0 / 3.0) / 3.0,
    ];
    let mut ok = true;
    let mut got = Vec::new();
    for (k, want) in (1..=3).zip(expected_prec) {
        let p = prec_at_k(&entries, &cands, k).unwrap();
        let acc = vpc_accuracy(&entries, &cands, k).unwrap();
        let per_entry: f64 = entries
            .iter()
            .zip(&cands)
            .map(|(e, c)| {
                f64::from(u8::from(
                    prec_at_k(std::slice::from_ref(e), std::slice::from_ref(c), k).unwrap() > 0.0,
                ))
            })
            .sum::<f64>()
            / 3.0;
        ok &= p == want && acc == 2.0 / 3.0 && acc == per_entry && p <= 1.0;
        got.push(format!("prec@{k}={p:.4} acc@{k}={acc:.4}"));
    }

    let r = [0.0, 1.0, 0.5];
    let rows = vec![
        ("u1".to_string(), vec![1.0, 0.0, 0.0]),
        ("t1".to_string(), vec![1.0, 1.0, 0.5]),
        ("u2".to_string(), vec![0.0, 0.0, 1.0]),
        ("t2".to_string(), vec![0.0, 1.0, 1.5]),
        ("rel".to_string(), r.to_vec()),
    ];
    let t = table(3, rows);
    let pairs = vec![
        ("u1".to_string(), "t1".to_string()),
        ("u2".to_string(), "t2".to_string()),
    ];
    let explicit = relation_eval(&t, &pairs, &RelationVector::Explicit(r.to_vec()), 1, false).unwrap();
    let token = relation_eval(&t, &pairs, &RelationVector::Token("rel".into()), 1, false).unwrap();
    ok &= explicit.accuracy == 1.0 && token.accuracy == 1.0;
    gate(
        ok,
        format!(
            "{}; relation accuracy {} (explicit) {} (token)",
            got.join(", "),
            explicit.accuracy,
            token.accuracy
        ),
    )
}

// ---------------------------------------------------------------------------
// 9 and 10. External data.

fn env_path(name: &str) -> Option<PathBuf> {
    env::var_os(name).map(PathBuf::from).filter(|p| p.exists())
}

fn files_with(dir: &Path, ext: &str) -> Vec<PathBuf> {
    let mut out: Vec<PathBuf> = std::fs::read_dir(dir)
        .map(|rd| rd.filter_map(|e| e.ok().map(|e| e.path())).collect())
        .unwrap_or_default();
    out.retain(|p| p.extension().is_some_and(|e| e == ext));
    out.sort();
    out
}

fn semeval_split(dir: &Path, name: &str) -> Vec<PrepInstance> {
    let tsv = dir.join(format!("{name}.tsv"));
    if tsv.exists() {
        return read_instances_tsv(&tsv).expect("instance file");
    }
    let sub = dir.join(name);
    convert_semeval(&files_with(&sub, "xml"), &files_with(&sub, "key"))
        .expect("SemEval files")
        .0
}

fn micro_accuracy(pairs: &[(usize, usize)]) -> f64 {
    let hits: usize = pairs.iter().map(|p| p.0).sum();
    let total: usize = pairs.iter().map(|p| p.1).sum();
    hits as f64 / total.max(1) as f64
}

fn ac9() -> Outcome {
    let (Some(vectors), Some(dir)) = (env_path("PSD_VECTORS"), env_path("PSD_SEMEVAL_DIR")) else {
        return skip("set PSD_VECTORS and PSD_SEMEVAL_DIR to run");
    };
    let table = EmbeddingTable::load(&vectors).expect("vectors").table;
    let labeled =
        |v: Vec<PrepInstance>| -> Vec<PrepInstance> { v.into_iter().filter(|i| i.sense().is_some()).collect() };
    let train = group_by_preposition(&labeled(semeval_split(&dir, "train")));
    let test = group_by_preposition(&labeled(semeval_split(&dir, "test")));

    let mut cluster: BTreeMap<FeatureMode, Vec<(usize, usize)>> = BTreeMap::new();
    let mut knn: BTreeMap<FeatureMode, Vec<(usize, usize)>> = BTreeMap::new();
    for mode in [FeatureMode::All, FeatureMode::Average] {
        for (prep, tr) in &train {
            let Some(te) = test.get(prep) else { continue };
            let options = ClusterOptions {
                mode,
                ..ClusterOptions::default()
            };
            let model = fit_instances(tr, &table, &options).expect("cluster");
            let pred = predict_instances(&model, te, &table).expect("predict");
            let hits = pred
                .iter()
                .zip(te)
                .filter(|(p, i)| Some(p.as_str()) == i.sense())
                .count();
            cluster.entry(mode).or_default().push((hits, te.len()));

            let (tr_part, dev) = prepsense::classify::split_train_dev(tr, 0.8, 42).expect("split");
            if dev.is_empty() {
                continue;
            }
            let out = tune(&tr_part, &dev, &TuneGrid::default(), mode, &table).expect("tune");
            let full = KnnModel::train(tr, out.model.params(), &table).expect("train");
            let acc = evaluate(&full, te, &table).expect("evaluate");
            knn.entry(mode)
                .or_default()
                .push(((acc * te.len() as f64).round() as usize, te.len()));
        }
    }
    let c_all = micro_accuracy(&cluster[&FeatureMode::All]);
    let c_avg = micro_accuracy(&cluster[&FeatureMode::Average]);
    let k_all = micro_accuracy(&knn[&FeatureMode::All]);
    let k_avg = micro_accuracy(&knn[&FeatureMode::Average]);
    let near = |got: f64, reference: f64| {
        if (got - reference).abs() <= 0.05 {
            "within 0.05"
        } else {
            "off by more than 0.05"
        }
    };
    gate(
        c_all > c_avg && k_all > k_avg,
        format!(
            "unsupervised (l,r,i) {c_all:.3} vs average {c_avg:.3} (reference 0.584 vs 0.555, {} / {}); k-NN {k_all:.3} vs {k_avg:.3} (reference 0.804 vs 0.731, {} / {})",
            near(c_all, 0.584),
            near(c_avg, 0.555),
            near(k_all, 0.804),
            near(k_avg, 0.731)
        ),
    )
}

fn ac10() -> Outcome {
    let (Some(data), Some(vectors), Some(senses), Some(models)) = (
        env_path("PSD_VPC_DATA"),
        env_path("PSD_VECTORS"),
        env_path("PSD_SENSE_VECTORS"),
        env_path("PSD_KNN_MODELS"),
    ) else {
        return skip("set PSD_VPC_DATA, PSD_VECTORS, PSD_SENSE_VECTORS and PSD_KNN_MODELS to run");
    };
    let global = EmbeddingTable::load(&vectors).expect("vectors").table;
    let sense_table = EmbeddingTable::load(&senses).expect("sense vectors").table;
    let entries = parse_vpc(std::io::BufReader::new(std::fs::File::open(&data).expect("VPC data"))).expect("VPC data");
    let mut knn = BTreeMap::new();
    for path in files_with(&models, "tsv") {
        let model = KnnModel::read_tsv(std::io::BufReader::new(std::fs::File::open(&path).unwrap())).expect("model");
        knn.insert(model.preposition().to_string(), model);
    }

    let topk = 3;
    let mut kept = Vec::new();
    let mut lists: [Vec<Vec<String>>; 3] = Default::default();
    for e in entries {
        let Some(model) = knn.get(&e.particle) else { continue };
        let Some(tok) = select_vpc_sense(&e, model, &global).expect("sense selection") else {
            continue;
        };
        if !(global.contains(&e.verb)
            && global.contains(&e.particle)
            && sense_table.contains(&e.verb)
            && sense_table.contains(&tok))
        {
            continue;
        }
        lists[0].push(vpc_paraphrase(&global, &e, Some(&e.particle), topk).unwrap());
        lists[1].push(vpc_paraphrase(&global, &e, None, topk).unwrap());
        lists[2].push(vpc_paraphrase(&sense_table, &e, Some(&tok), topk).unwrap());
        kept.push(e);
    }
    if kept.is_empty() {
        return gate(false, "no VPC entry could be evaluated".into());
    }
    let acc: Vec<f64> = lists.iter().map(|l| vpc_accuracy(&kept, l, topk).unwrap()).collect();
    gate(
        acc[2] > acc[0] && acc[2] > acc[1],
        format!(
            "{} entries: global {:.3}, simplex {:.3}, sense {:.3} (reference 0.44, 0.44, 0.73)",
            kept.len(),
            acc[0],
            acc[1],
            acc[2]
        ),
    )
}

fn main() -> ExitCode {
    type Check = fn() -> Outcome;
    let criteria: [(&str, Check); 10] = [
        ("interplay vector vs sphere-grid oracle", ac1),
        ("bisector identity", ac2),
        ("k-means planted recovery", ac3),
        ("joint-context k-NN beats average baseline", ac4),
        ("tuner matches independent grid re-evaluation", ac5),
        ("CBOW gradient, initial loss, epoch loss", ac6),
        ("end-to-end tag and retrain", ac7),
        ("metric formulas", ac8),
        ("SemEval ordering (external data)", ac9),
        ("VPC ordering (external data)", ac10),
    ];
    let filter: Vec<String> = env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let id = format!("AC{}", i + 1);
        if !filter.is_empty() && !filter.contains(&id) {
            continue;
        }
        let started = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            gate(false, format!("panicked: {msg}"))
        });
        let label = match outcome.status {
            Status::Pass => "PASS",
            Status::Fail => {
                failed += 1;
                "FAIL"
            }
            Status::Skip => "SKIP",
        };
        println!(
            "{id:<5} {label}  {name} [{:.1}s]: {}",
            started.elapsed().as_secs_f64(),
            outcome.detail
        );
    }
    if failed > 0 {
        println!("acceptance: {failed} criteria failed");
        ExitCode::FAILURE
    } else {
        println!("acceptance: all runnable criteria passed");
        ExitCode::SUCCESS
    }
}
