use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use log::{info, warn};
use prepsense::classify::{evaluate, split_train_dev, tune, KnnModel, TuneGrid};
use prepsense::cluster::{fit_instances, group_by_preposition, predict_instances, ClusterOptions, KMeansModel};
use prepsense::corpus::{
    convert_semeval, read_instances_tsv, read_token_lines, split_sense_token, tag_stream, write_instances_tsv,
};
use prepsense::embed_train::{train_cbow, TrainConfig};
use prepsense::eval::{
    emit_report, parse_relation_pairs, parse_vpc, prec_at_k, relation_eval, select_vpc_sense, vpc_accuracy,
    vpc_paraphrase, EvalRecord, RelationVector, VpcCondition, VpcEntry,
};
use prepsense::features::{feature_triples, write_features_tsv};
use prepsense::{EmbeddingTable, Error, PrepInstance};

use crate::args::*;

const KNN_SUFFIX: &str = ".knn.tsv";
const KMEANS_SUFFIX: &str = ".kmeans.tsv";

/// Runs the selected subcommand and returns its one-line summary.
pub fn run(cli: &Cli) -> Result<String> {
    match &cli.command {
        Command::ConvertSemeval(a) => convert(a),
        Command::Features(a) => features(a),
        Command::Cluster(ClusterCommand::Fit(a)) => cluster_fit(a, cli.seed),
        Command::Cluster(ClusterCommand::Eval(a)) => cluster_eval(a),
        Command::Knn(KnnCommand::Tune(a)) => knn_tune(a, cli.seed),
        Command::Knn(KnnCommand::Eval(a)) => knn_eval(a),
        Command::Tag(a) => tag(a),
        Command::Embed(EmbedCommand::Train(a)) => embed_train(a, cli.seed),
        Command::Eval(EvalCommand::Analogy(a)) => analogy(a),
        Command::Eval(EvalCommand::Vpc(a)) => vpc(a),
    }
}

fn load_table(path: &Path) -> Result<EmbeddingTable> {
    let loaded = EmbeddingTable::load(path).context("loading embeddings")?;
    if !loaded.duplicates.is_empty() {
        warn!(
            "{}: {} duplicate tokens, first rows kept",
            path.display(),
            loaded.duplicates.len()
        );
    }
    Ok(loaded.table)
}

fn load_instances(path: &Path) -> Result<Vec<PrepInstance>> {
    read_instances_tsv(path).context("reading instances")
}

fn write_report(path: Option<&PathBuf>, records: &[EvalRecord]) -> Result<()> {
    if let Some(p) = path {
        emit_report(p, records).with_context(|| format!("writing report {}", p.display()))?;
    }
    Ok(())
}

fn model_path(dir: &Path, preposition: &str, suffix: &str) -> Result<PathBuf> {
    if preposition.is_empty() || preposition.contains(['/', '\\']) || preposition.starts_with('.') {
        bail!("preposition {preposition:?} cannot name a model file");
    }
    Ok(dir.join(format!("{preposition}{suffix}")))
}

fn create_file(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn open_file(path: &Path) -> Result<BufReader<File>> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(BufReader::new(f))
}

/// Model files in `dir` with `suffix`, keyed by preposition, optionally
/// restricted to `only`.
fn model_files(dir: &Path, suffix: &str, only: &[String]) -> Result<BTreeMap<String, PathBuf>> {
    let mut out = BTreeMap::new();
    for entry in fs::read_dir(dir).with_context(|| format!("reading model directory {}", dir.display()))? {
        let path = entry?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
            continue;
        };
        if let Some(prep) = name.strip_suffix(suffix) {
            if only.is_empty() || only.iter().any(|p| p == prep) {
                out.insert(prep.to_string(), path.clone());
            }
        }
    }
    if out.is_empty() {
        bail!("no {suffix} model files in {}", dir.display());
    }
    Ok(out)
}

fn load_knn_models(dir: &Path, only: &[String]) -> Result<BTreeMap<String, KnnModel>> {
    let mut models = BTreeMap::new();
    for (prep, path) in model_files(dir, KNN_SUFFIX, only)? {
        let model =
            KnnModel::read_tsv(open_file(&path)?).with_context(|| format!("reading model {}", path.display()))?;
        if model.preposition() != prep {
            bail!("{} holds a model for {:?}", path.display(), model.preposition());
        }
        models.insert(prep, model);
    }
    Ok(models)
}

fn selected_groups(instances: &[PrepInstance], only: &[String]) -> BTreeMap<String, Vec<PrepInstance>> {
    let mut groups = group_by_preposition(instances);
    if !only.is_empty() {
        groups.retain(|p, _| only.contains(p));
    }
    groups
}

fn labeled(instances: &[PrepInstance]) -> Vec<PrepInstance> {
    instances.iter().filter(|i| i.sense().is_some()).cloned().collect()
}

fn convert(a: &ConvertArgs) -> Result<String> {
    let (instances, report) = convert_semeval(&a.xml, &a.key)?;
    write_instances_tsv(&a.out, &instances).with_context(|| format!("writing {}", a.out.display()))?;
    let n = instances.len();
    write_report(
        a.report.as_ref(),
        &[
            EvalRecord::new(
                "convert-semeval",
                "all",
                "converted",
                n as f64,
                n,
                report.skipped_head.len(),
            ),
            EvalRecord::new("convert-semeval", "all", "labeled", report.labeled as f64, n, 0),
            EvalRecord::new(
                "convert-semeval",
                "all",
                "keys-without-instance",
                report.missing_in_xml.len() as f64,
                n,
                0,
            ),
        ],
    )?;
    Ok(format!(
        "convert-semeval: {n} instances ({} labeled, {} skipped, {} unmatched keys)",
        report.labeled,
        report.skipped_head.len(),
        report.missing_in_xml.len()
    ))
}

fn features(a: &FeaturesArgs) -> Result<String> {
    if a.k_left == 0 || a.k_right == 0 {
        bail!("--k-left and --k-right must be at least 1");
    }
    let table = load_table(&a.embeddings)?;
    let instances = load_instances(&a.instances)?;
    let triples = feature_triples(&instances, a.k_left, a.k_right, &table);
    let degenerate = triples
        .iter()
        .filter(|t| t.left_degenerate || t.right_degenerate || t.inter_degenerate)
        .count();
    let rows: Vec<(String, _)> = instances.iter().map(|i| i.id().to_string()).zip(triples).collect();
    write_features_tsv(create_file(&a.out)?, &rows)?;
    Ok(format!(
        "features: {} instances, {degenerate} with a degenerate block",
        rows.len()
    ))
}

fn cluster_fit(a: &ClusterFitArgs, seed: u64) -> Result<String> {
    let table = load_table(&a.embeddings)?;
    let instances = load_instances(&a.instances)?;
    fs::create_dir_all(&a.model).with_context(|| format!("creating {}", a.model.display()))?;
    let options = ClusterOptions {
        mode: a.features,
        k: a.k,
        seed,
        max_iter: a.max_iter,
    };
    let mut records = Vec::new();
    let mut fitted = 0;
    let mut trained = 0;
    for (prep, group) in selected_groups(&instances, &a.prep) {
        let train = labeled(&group);
        if train.is_empty() {
            warn!("{prep}: no labeled instances, skipped");
            continue;
        }
        let model = fit_instances(&train, &table, &options).with_context(|| format!("fitting {prep}"))?;
        model.write_tsv(create_file(&model_path(&a.model, &prep, KMEANS_SUFFIX)?)?)?;
        let predicted = predict_instances(&model, &train, &table)?;
        let hits = predicted
            .iter()
            .zip(&train)
            .filter(|(p, i)| Some(p.as_str()) == i.sense())
            .count();
        records.push(EvalRecord::new(
            "cluster-fit",
            &prep,
            "train-accuracy",
            hits as f64 / train.len() as f64,
            train.len(),
            group.len() - train.len(),
        ));
        fitted += 1;
        trained += train.len();
    }
    if fitted == 0 {
        bail!("no preposition had labeled instances");
    }
    write_report(a.report.as_ref(), &records)?;
    Ok(format!("cluster fit: {fitted} prepositions, {trained} instances"))
}

/// Scores per-preposition predictions and returns the overall accuracy line.
fn score_models<F>(name: &str, a: &ModelEvalArgs, preps: &BTreeSet<String>, mut predict: F) -> Result<String>
where
    F: FnMut(&str, &[PrepInstance]) -> Result<f64>,
{
    let instances = load_instances(&a.instances)?;
    let mut records = Vec::new();
    let mut hits = 0.0;
    let mut total = 0;
    let mut skipped = 0;
    for (prep, group) in selected_groups(&instances, &a.prep) {
        let test = labeled(&group);
        if test.is_empty() || !preps.contains(&prep) {
            skipped += group.len();
            continue;
        }
        skipped += group.len() - test.len();
        let acc = predict(&prep, &test)?;
        hits += acc * test.len() as f64;
        total += test.len();
        records.push(EvalRecord::new(
            name,
            &prep,
            "accuracy",
            acc,
            test.len(),
            group.len() - test.len(),
        ));
    }
    if total == 0 {
        records.push(EvalRecord::not_available(
            name,
            "all",
            "accuracy",
            skipped,
            "no labeled instance has a model",
        ));
        write_report(a.report.as_ref(), &records)?;
        bail!("no labeled instance has a model");
    }
    let overall = hits / total as f64;
    records.push(EvalRecord::new(name, "all", "accuracy", overall, total, skipped));
    write_report(a.report.as_ref(), &records)?;
    Ok(format!(
        "{name}: accuracy {overall:.4} over {total} instances ({skipped} skipped)"
    ))
}

fn cluster_eval(a: &ModelEvalArgs) -> Result<String> {
    let table = load_table(&a.embeddings)?;
    let mut models: BTreeMap<String, KMeansModel> = BTreeMap::new();
    for (prep, path) in model_files(&a.model, KMEANS_SUFFIX, &a.prep)? {
        let m =
            KMeansModel::read_tsv(open_file(&path)?).with_context(|| format!("reading model {}", path.display()))?;
        models.insert(prep, m);
    }
    let preps = models.keys().cloned().collect();
    score_models("cluster-eval", a, &preps, |prep, test| {
        let predicted = predict_instances(&models[prep], test, &table)?;
        let hits = predicted
            .iter()
            .zip(test)
            .filter(|(p, i)| Some(p.as_str()) == i.sense())
            .count();
        Ok(hits as f64 / test.len() as f64)
    })
}

fn knn_eval(a: &ModelEvalArgs) -> Result<String> {
    let table = load_table(&a.embeddings)?;
    let models = load_knn_models(&a.model, &a.prep)?;
    let preps = models.keys().cloned().collect();
    score_models("knn-eval", a, &preps, |prep, test| {
        Ok(evaluate(&models[prep], test, &table)?)
    })
}

fn knn_tune(a: &KnnTuneArgs, seed: u64) -> Result<String> {
    let table = load_table(&a.embeddings)?;
    let instances = load_instances(&a.instances)?;
    let dev_groups = match &a.dev {
        Some(p) => Some(group_by_preposition(&load_instances(p)?)),
        None => None,
    };
    let mut grid = TuneGrid::default();
    if !a.k.is_empty() {
        grid.k_neighbors = a.k.clone();
    }
    if !a.k_left.is_empty() {
        grid.k_left = a.k_left.clone();
    }
    if !a.k_right.is_empty() {
        grid.k_right = a.k_right.clone();
    }
    if !a.weights.is_empty() {
        grid.weights = a.weights.clone();
    }
    fs::create_dir_all(&a.model).with_context(|| format!("creating {}", a.model.display()))?;

    let mut records = Vec::new();
    for (prep, group) in selected_groups(&instances, &a.prep) {
        let all = labeled(&group);
        let (train, dev) = match &dev_groups {
            Some(d) => (
                all.clone(),
                labeled(d.get(&prep).map(Vec::as_slice).unwrap_or_default()),
            ),
            None => split_train_dev(&all, a.train_ratio, seed)?,
        };
        if train.is_empty() || dev.is_empty() {
            warn!("{prep}: too few labeled instances to tune, skipped");
            continue;
        }
        let outcome = tune(&train, &dev, &grid, a.features, &table).with_context(|| format!("tuning {prep}"))?;
        let params = outcome.model.params();
        info!(
            "{prep}: k={} weights={} k_left={} k_right={} dev accuracy {:.4}",
            params.k_neighbors, params.weights, params.k_left, params.k_right, outcome.dev_accuracy
        );
        // The saved model keeps the selected settings but uses every labeled instance.
        let union: Vec<PrepInstance> = train.iter().chain(&dev).cloned().collect();
        let model = KnnModel::train(&union, params, &table)?;
        model.write_tsv(create_file(&model_path(&a.model, &prep, KNN_SUFFIX)?)?)?;
        records.push(EvalRecord::new(
            "knn-tune",
            &prep,
            "dev-accuracy",
            outcome.dev_accuracy,
            dev.len(),
            group.len() - all.len(),
        ));
    }
    if records.is_empty() {
        bail!("no preposition could be tuned");
    }
    write_report(a.report.as_ref(), &records)?;
    let mean = records.iter().filter_map(|r| r.value).sum::<f64>() / records.len() as f64;
    Ok(format!(
        "knn tune: {} prepositions, mean dev accuracy {mean:.4}",
        records.len()
    ))
}

fn tag(a: &TagArgs) -> Result<String> {
    let table = load_table(&a.embeddings)?;
    let models = load_knn_models(&a.model, &a.prep)?;
    let stats = tag_stream(
        open_file(&a.corpus)?,
        create_file(&a.out)?,
        &models,
        &table,
        a.batch_lines,
    )?;
    Ok(format!(
        "tag: {} sentences, {} tagged tokens, {} prepositions modeled",
        stats.sentences,
        stats.tagged,
        models.len()
    ))
}

fn embed_train(a: &EmbedTrainArgs, seed: u64) -> Result<String> {
    let sentences = read_token_lines(open_file(&a.corpus)?)?;
    let config = TrainConfig {
        dim: a.dim,
        window: a.window,
        prep_window: a.prep_window,
        negatives: a.negatives,
        epochs: a.epochs,
        initial_lr: a.lr,
        min_count: a.min_count,
        subsample_threshold: a.subsample,
        seed,
        dynamic_window: a.dynamic_window,
        parallel: a.parallel,
        workers: rayon::current_num_threads(),
    };
    let out = train_cbow(&sentences, &config)?;
    out.table
        .save(&a.out)
        .with_context(|| format!("writing {}", a.out.display()))?;
    let records: Vec<EvalRecord> = out
        .epoch_losses
        .iter()
        .enumerate()
        .map(|(e, l)| {
            EvalRecord::new(
                "embed-train",
                &format!("epoch{}", e + 1),
                "mean-loss",
                *l,
                sentences.len(),
                0,
            )
        })
        .collect();
    write_report(a.report.as_ref(), &records)?;
    let losses: Vec<String> = out.epoch_losses.iter().map(|l| format!("{l:.4}")).collect();
    Ok(format!(
        "embed train: {} sentences, {} tokens in vocabulary, dim {}, epoch losses [{}]",
        sentences.len(),
        out.table.len(),
        out.table.dim(),
        losses.join(", ")
    ))
}

/// Turns "could not evaluate" errors into an NA record and passes others on.
fn score_or_na(
    evaluation: &str,
    condition: &str,
    metric: &str,
    total: usize,
    result: prepsense::Result<prepsense::eval::RelationScore>,
) -> Result<EvalRecord> {
    match result {
        Ok(s) => Ok(EvalRecord::new(
            evaluation,
            condition,
            metric,
            s.accuracy,
            s.evaluated,
            s.skipped.len(),
        )),
        Err(e @ (Error::Empty(_) | Error::InvalidArgument(_) | Error::ZeroNorm)) => Ok(EvalRecord::not_available(
            evaluation,
            condition,
            metric,
            total,
            &e.to_string(),
        )),
        Err(e) => Err(e.into()),
    }
}

fn analogy(a: &AnalogyArgs) -> Result<String> {
    if a.topk == 0 {
        bail!("--topk must be at least 1");
    }
    let global = load_table(&a.embeddings)?;
    let senses = a.senses.as_deref().map(load_table).transpose()?;
    let sets = parse_relation_pairs(open_file(&a.pairs)?).with_context(|| format!("reading {}", a.pairs.display()))?;

    let mut default_token = None;
    let mut per_relation = BTreeMap::new();
    for item in &a.prep {
        match item.split_once('=') {
            Some((rel, tok)) => {
                per_relation.insert(rel.trim().to_string(), tok.trim().to_string());
            }
            None => default_token = Some(item.trim().to_string()),
        }
    }

    let metric = format!("top{}", a.topk);
    let mut records = Vec::new();
    let mut summary = Vec::new();
    for set in &sets {
        let token = per_relation
            .get(&set.name)
            .or(default_token.as_ref())
            .ok_or_else(|| anyhow!("no --prep token for relation {:?}", set.name))?;
        let bare = split_sense_token(token).map_or(token.as_str(), |(p, _)| p);
        let n = set.pairs.len();

        let global_rec = score_or_na(
            &set.name,
            "global",
            &metric,
            n,
            relation_eval(
                &global,
                &set.pairs,
                &RelationVector::Token(bare.to_string()),
                a.topk,
                false,
            ),
        )?;
        let sense_rec = match (&senses, split_sense_token(token)) {
            (Some(table), Some(_)) => score_or_na(
                &set.name,
                "sense",
                &metric,
                n,
                relation_eval(table, &set.pairs, &RelationVector::Token(token.clone()), a.topk, false),
            )?,
            (None, _) => EvalRecord::not_available(&set.name, "sense", &metric, n, "no sense embeddings given"),
            (_, None) => EvalRecord::not_available(&set.name, "sense", &metric, n, "--prep token has no sense tag"),
        };
        let diff_rec = score_or_na(
            &set.name,
            "diff",
            &metric,
            n,
            relation_eval(&global, &set.pairs, &RelationVector::Diff, a.topk, a.holdout),
        )?;
        let show = |r: &EvalRecord| r.value.map_or("NA".to_string(), |v| format!("{v:.4}"));
        summary.push(format!(
            "{}: global={} sense={} diff={}",
            set.name,
            show(&global_rec),
            show(&sense_rec),
            show(&diff_rec)
        ));
        records.extend([global_rec, sense_rec, diff_rec]);
    }
    emit_report(&a.out, &records).with_context(|| format!("writing report {}", a.out.display()))?;
    Ok(format!("eval analogy {metric}: {}", summary.join("; ")))
}

struct VpcRun {
    entries: Vec<VpcEntry>,
    candidates: BTreeMap<VpcCondition, Vec<Vec<String>>>,
}

fn vpc_records(evaluation: &str, run: &VpcRun, topk: usize, skipped: usize) -> Result<Vec<EvalRecord>> {
    let mut out = Vec::new();
    let n = run.entries.len();
    for cond in VpcCondition::ALL {
        let acc_metric = format!("accuracy@{topk}");
        if n == 0 {
            out.push(EvalRecord::not_available(
                evaluation,
                cond.as_str(),
                &acc_metric,
                skipped,
                "no entry is evaluable under every condition",
            ));
            continue;
        }
        let cands = &run.candidates[&cond];
        out.push(EvalRecord::new(
            evaluation,
            cond.as_str(),
            &acc_metric,
            vpc_accuracy(&run.entries, cands, topk)?,
            n,
            skipped,
        ));
        for k in 1..=topk {
            out.push(EvalRecord::new(
                evaluation,
                cond.as_str(),
                &format!("prec@{k}"),
                prec_at_k(&run.entries, cands, k)?,
                n,
                skipped,
            ));
        }
    }
    Ok(out)
}

fn vpc(a: &VpcArgs) -> Result<String> {
    if a.topk == 0 {
        bail!("--topk must be at least 1");
    }
    let global = load_table(&a.embeddings)?;
    let senses = load_table(&a.senses)?;
    let models = load_knn_models(&a.model, &[])?;
    let entries = parse_vpc(open_file(&a.vpc)?).with_context(|| format!("reading {}", a.vpc.display()))?;
    let total = entries.len();

    let mut run = VpcRun {
        entries: Vec::new(),
        candidates: VpcCondition::ALL.iter().map(|c| (*c, Vec::new())).collect(),
    };
    for entry in entries {
        let phrase = entry.phrase();
        let sense = match models.get(&entry.particle) {
            Some(m) => select_vpc_sense(&entry, m, &global)?,
            None => None,
        };
        let Some(sense) = sense else {
            warn!("{phrase}: no sense could be chosen for the particle, skipped");
            continue;
        };
        let evaluable = global.contains(&entry.verb)
            && global.contains(&entry.particle)
            && senses.contains(&entry.verb)
            && senses.contains(&sense);
        if !evaluable {
            warn!("{phrase}: verb or particle missing from an embedding table, skipped");
            continue;
        }
        let lists = [
            (
                VpcCondition::Global,
                vpc_paraphrase(&global, &entry, Some(&entry.particle), a.topk)?,
            ),
            (VpcCondition::Simplex, vpc_paraphrase(&global, &entry, None, a.topk)?),
            (
                VpcCondition::Sense,
                vpc_paraphrase(&senses, &entry, Some(&sense), a.topk)?,
            ),
        ];
        for (cond, list) in lists {
            info!("{phrase} [{}] {}", cond.as_str(), list.join(" "));
            run.candidates
                .get_mut(&cond)
                .expect("all conditions present")
                .push(list);
        }
        run.entries.push(entry);
    }
    let skipped = total - run.entries.len();
    let mut records = vpc_records("vpc", &run, a.topk, skipped)?;

    let types: BTreeSet<String> = run.entries.iter().filter_map(|e| e.phrase_type.clone()).collect();
    for t in types {
        let keep: Vec<usize> = (0..run.entries.len())
            .filter(|&i| run.entries[i].phrase_type.as_deref() == Some(t.as_str()))
            .collect();
        let sub = VpcRun {
            entries: keep.iter().map(|&i| run.entries[i].clone()).collect(),
            candidates: run
                .candidates
                .iter()
                .map(|(c, lists)| (*c, keep.iter().map(|&i| lists[i].clone()).collect()))
                .collect(),
        };
        records.extend(vpc_records(&format!("vpc/{t}"), &sub, a.topk, 0)?);
    }
    emit_report(&a.out, &records).with_context(|| format!("writing report {}", a.out.display()))?;

    let metric = format!("accuracy@{}", a.topk);
    let scores: Vec<String> = records
        .iter()
        .filter(|r| r.evaluation == "vpc" && r.metric == metric)
        .map(|r| {
            format!(
                "{}={}",
                r.condition,
                r.value.map_or("NA".to_string(), |v| format!("{v:.4}"))
            )
        })
        .collect();
    Ok(format!(
        "eval vpc: {} entries ({skipped} skipped), {metric} {}",
        run.entries.len(),
        scores.join(" ")
    ))
}
