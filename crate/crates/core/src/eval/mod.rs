//! Relation approximation and phrasal-verb paraphrase evaluation.

mod report;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::BufRead;

use rayon::prelude::*;

use crate::classify::KnnModel;
use crate::corpus::{sense_token, tokenize_sentence};
use crate::embeddings::EmbeddingTable;
use crate::features::PrepInstance;
use crate::linalg::{add, axpy};
use crate::{Error, Result, SENSE_DELIMITER};

pub use report::{emit_report, parse_report_tsv, render_text, write_report_tsv, EvalRecord, REPORT_HEADER};

/// Name given to pairs that appear before any `: name` header.
pub const DEFAULT_RELATION: &str = "default";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RelationPairSet {
    pub name: String,
    pub pairs: Vec<(String, String)>,
}

/// Reads relation pairs: `: name` lines open a relation, other lines hold a
/// base and a target separated by a tab (or other whitespace). Tokens are
/// lowercased to match the tokenizer. Blank lines and `#` comments are skipped.
pub fn parse_relation_pairs<R: BufRead>(input: R) -> Result<Vec<RelationPairSet>> {
    let mut sets: Vec<RelationPairSet> = Vec::new();
    let mut header_line = 0;
    for (n, line) in input.lines().enumerate() {
        let line = line?;
        let lineno = n + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        if let Some(name) = trimmed.strip_prefix(':') {
            let name = name.trim();
            if name.is_empty() {
                return Err(Error::parse(lineno, "empty relation name"));
            }
            if let Some(prev) = sets.last() {
                if prev.pairs.is_empty() {
                    return Err(Error::parse(
                        header_line,
                        format!("relation {:?} has no pairs", prev.name),
                    ));
                }
            }
            if sets.iter().any(|s| s.name == name) {
                return Err(Error::parse(lineno, format!("relation {name:?} repeated")));
            }
            sets.push(RelationPairSet {
                name: name.to_string(),
                pairs: Vec::new(),
            });
            header_line = lineno;
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        if fields.len() != 2 {
            return Err(Error::parse(
                lineno,
                format!("expected 2 fields, found {}", fields.len()),
            ));
        }
        if sets.is_empty() {
            sets.push(RelationPairSet {
                name: DEFAULT_RELATION.to_string(),
                pairs: Vec::new(),
            });
        }
        let set = sets.last_mut().expect("a set exists");
        set.pairs.push((fields[0].to_lowercase(), fields[1].to_lowercase()));
    }
    if let Some(last) = sets.last() {
        if last.pairs.is_empty() {
            return Err(Error::parse(
                header_line,
                format!("relation {:?} has no pairs", last.name),
            ));
        }
    }
    if sets.is_empty() {
        return Err(Error::Empty("relation pairs".into()));
    }
    Ok(sets)
}

fn scaled(v: &[f64], factor: f64) -> Vec<f64> {
    v.iter().map(|x| x * factor).collect()
}

type Pair = (String, String);

/// Splits pairs into those whose tokens are both in `table` and the rest.
fn partition_pairs<'a>(table: &EmbeddingTable, pairs: &'a [Pair]) -> (Vec<&'a Pair>, Vec<Pair>) {
    let mut known = Vec::new();
    let mut oov = Vec::new();
    for p in pairs {
        if table.contains(&p.0) && table.contains(&p.1) {
            known.push(p);
        } else {
            oov.push(p.clone());
        }
    }
    (known, oov)
}

fn difference(table: &EmbeddingTable, pair: &(String, String)) -> Vec<f64> {
    let base = table.get(&pair.0).expect("checked in vocabulary");
    let target = table.get(&pair.1).expect("checked in vocabulary");
    target.iter().zip(base).map(|(t, b)| t - b).collect()
}

/// The mean target-minus-base difference and the pairs it skipped.
#[derive(Clone, Debug, PartialEq)]
pub struct DiffVector {
    pub vector: Vec<f64>,
    pub used: usize,
    pub skipped: Vec<(String, String)>,
}

/// Mean of `v_target - v_base` over the pairs whose tokens are in `table`.
pub fn diff_baseline_vector(table: &EmbeddingTable, pairs: &[(String, String)]) -> Result<DiffVector> {
    let (known, skipped) = partition_pairs(table, pairs);
    if known.is_empty() {
        return Err(Error::Empty("no relation pair is in the vocabulary".into()));
    }
    let mut sum = vec![0.0; table.dim()];
    for p in &known {
        sum = add(&sum, &difference(table, p));
    }
    Ok(DiffVector {
        vector: scaled(&sum, 1.0 / known.len() as f64),
        used: known.len(),
        skipped,
    })
}

/// Where the vector added to each base word comes from.
#[derive(Clone, Debug, PartialEq)]
pub enum RelationVector {
    /// The table's vector for this token; the token is excluded from answers.
    Token(String),
    /// The mean difference over the evaluated pairs.
    Diff,
    Explicit(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct RelationScore {
    pub accuracy: f64,
    pub hits: usize,
    pub evaluated: usize,
    pub skipped: Vec<(String, String)>,
}

/// Fraction of pairs whose target is among the `topk` nearest neighbors of
/// `v_base + relation`, with the base word (and a relation token) excluded.
///
/// With `holdout` and [`RelationVector::Diff`], each pair is scored with the
/// mean difference of the other pairs. A query that sums to the zero vector
/// counts as a miss.
pub fn relation_eval(
    table: &EmbeddingTable,
    pairs: &[(String, String)],
    relation: &RelationVector,
    topk: usize,
    holdout: bool,
) -> Result<RelationScore> {
    if topk == 0 {
        return Err(Error::InvalidArgument("topk must be at least 1".into()));
    }
    let (known, skipped) = partition_pairs(table, pairs);
    if known.is_empty() {
        return Err(Error::Empty("no relation pair is in the vocabulary".into()));
    }
    let dim = table.dim();
    let diffs: Vec<Vec<f64>> = match relation {
        RelationVector::Diff => known.iter().map(|p| difference(table, p)).collect(),
        _ => Vec::new(),
    };
    let diff_sum = diffs.iter().fold(vec![0.0; dim], |acc, d| add(&acc, d));
    if holdout && matches!(relation, RelationVector::Diff) && known.len() < 2 {
        return Err(Error::InvalidArgument(
            "holdout needs at least two evaluable pairs".into(),
        ));
    }

    let shared: Option<Vec<f64>> = match relation {
        RelationVector::Token(t) => Some(
            table
                .get(t)
                .ok_or_else(|| Error::InvalidArgument(format!("relation token {t:?} not in vocabulary")))?
                .to_vec(),
        ),
        RelationVector::Explicit(v) => {
            if v.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: v.len(),
                });
            }
            Some(v.clone())
        }
        RelationVector::Diff if !holdout => Some(scaled(&diff_sum, 1.0 / known.len() as f64)),
        RelationVector::Diff => None,
    };
    let relation_token = match relation {
        RelationVector::Token(t) => Some(t.as_str()),
        _ => None,
    };

    let hits = known
        .par_iter()
        .enumerate()
        .map(|(i, pair)| {
            let offset = match &shared {
                Some(v) => v.clone(),
                None => {
                    let mut rest = diff_sum.clone();
                    axpy(-1.0, &diffs[i], &mut rest);
                    scaled(&rest, 1.0 / (known.len() - 1) as f64)
                }
            };
            let query = add(table.get(&pair.0).expect("checked"), &offset);
            let found = match table.nearest_by(&query, topk, |t| t == pair.0 || Some(t) == relation_token) {
                Ok(list) => list.iter().any(|n| n.token == pair.1),
                Err(Error::ZeroNorm) => false,
                Err(e) => return Err(e),
            };
            Ok(found)
        })
        .collect::<Result<Vec<bool>>>()?
        .into_iter()
        .filter(|&h| h)
        .count();
    Ok(RelationScore {
        accuracy: hits as f64 / known.len() as f64,
        hits,
        evaluated: known.len(),
        skipped,
    })
}

/// A verb-particle construction with example sentences and gold paraphrases.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VpcEntry {
    pub verb: String,
    pub particle: String,
    /// Tokenized example sentences.
    pub sentences: Vec<Vec<String>>,
    pub gold: BTreeSet<String>,
    /// Optional phrase type used to group metrics.
    pub phrase_type: Option<String>,
}

impl VpcEntry {
    pub fn new(
        verb: impl Into<String>,
        particle: impl Into<String>,
        sentences: Vec<Vec<String>>,
        gold: BTreeSet<String>,
        phrase_type: Option<String>,
    ) -> Result<Self> {
        let verb = verb.into();
        let particle = particle.into();
        if verb.is_empty() || particle.is_empty() {
            return Err(Error::InvalidArgument("empty verb or particle".into()));
        }
        if verb == particle {
            return Err(Error::InvalidArgument(format!("verb and particle are both {verb:?}")));
        }
        if sentences.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "{verb} {particle}: no example sentence"
            )));
        }
        if gold.is_empty() || gold.contains(&verb) || gold.iter().any(String::is_empty) {
            return Err(Error::InvalidArgument(format!(
                "{verb} {particle}: gold set must be nonempty and exclude the verb"
            )));
        }
        Ok(VpcEntry {
            verb,
            particle,
            sentences,
            gold,
            phrase_type,
        })
    }

    pub fn phrase(&self) -> String {
        format!("{} {}", self.verb, self.particle)
    }
}

/// Reads the VPC dataset: `verb TAB particle TAB gold,gold,... TAB sentence
/// [TAB sentence ...]`. A sentence column of the form `type=<name>` sets the
/// phrase type instead. Tokens are lowercased; sentences are tokenized.
pub fn parse_vpc<R: BufRead>(input: R) -> Result<Vec<VpcEntry>> {
    let mut out = Vec::new();
    for (n, line) in input.lines().enumerate() {
        let line = line?;
        let lineno = n + 1;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() < 4 {
            return Err(Error::parse(
                lineno,
                format!("expected at least 4 columns, found {}", fields.len()),
            ));
        }
        let gold: BTreeSet<String> = fields[2]
            .split(',')
            .map(|g| g.trim().to_lowercase())
            .filter(|g| !g.is_empty())
            .collect();
        let mut sentences = Vec::new();
        let mut phrase_type = None;
        for f in &fields[3..] {
            if let Some(t) = f.trim().strip_prefix("type=") {
                if phrase_type.replace(t.trim().to_string()).is_some() {
                    return Err(Error::parse(lineno, "phrase type given twice"));
                }
            } else if !f.trim().is_empty() {
                sentences.push(tokenize_sentence(f));
            }
        }
        let entry = VpcEntry::new(
            fields[0].trim().to_lowercase(),
            fields[1].trim().to_lowercase(),
            sentences,
            gold,
            phrase_type,
        )
        .map_err(|e| Error::parse(lineno, e.to_string()))?;
        out.push(entry);
    }
    if out.is_empty() {
        return Err(Error::Empty("VPC dataset".into()));
    }
    Ok(out)
}

/// Picks the particle's sense token by classifying the particle in each
/// example sentence and taking the majority sense (ties go to the smallest
/// id). Returns `None` when no sentence contains the particle.
pub fn select_vpc_sense(entry: &VpcEntry, model: &KnnModel, table: &EmbeddingTable) -> Result<Option<String>> {
    let mut votes: BTreeMap<String, usize> = BTreeMap::new();
    for sentence in &entry.sentences {
        let verb_pos = sentence.iter().position(|t| t.starts_with(&entry.verb)).unwrap_or(0);
        let pos = sentence
            .iter()
            .skip(verb_pos)
            .position(|t| *t == entry.particle)
            .map(|p| p + verb_pos)
            .or_else(|| sentence.iter().position(|t| *t == entry.particle));
        let Some(pos) = pos else { continue };
        let inst = PrepInstance::new(entry.phrase(), sentence.clone(), pos, None)?;
        *votes
            .entry(model.predict_instance(&inst, table)?.to_string())
            .or_default() += 1;
    }
    let best = votes.iter().max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)));
    Ok(best.map(|(sense, _)| sense_token(&entry.particle, sense)))
}

/// How the particle enters the paraphrase query.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum VpcCondition {
    /// Verb plus the particle's sense token.
    Sense,
    /// Verb plus the untagged particle.
    Global,
    /// Verb alone.
    Simplex,
}

impl VpcCondition {
    pub const ALL: [VpcCondition; 3] = [VpcCondition::Global, VpcCondition::Simplex, VpcCondition::Sense];

    pub fn as_str(self) -> &'static str {
        match self {
            VpcCondition::Sense => "sense",
            VpcCondition::Global => "global",
            VpcCondition::Simplex => "simplex",
        }
    }
}

/// Paraphrase candidates for `entry`: the `topk` nearest neighbors of
/// `v_verb + v_prep` (or `v_verb` alone when `prep_token` is `None`),
/// excluding the verb, its sense-tagged variants and `prep_token`.
pub fn vpc_paraphrase(
    table: &EmbeddingTable,
    entry: &VpcEntry,
    prep_token: Option<&str>,
    topk: usize,
) -> Result<Vec<String>> {
    let verb = table
        .get(&entry.verb)
        .ok_or_else(|| Error::InvalidArgument(format!("verb {:?} not in vocabulary", entry.verb)))?;
    let query = match prep_token {
        Some(p) => {
            let v = table
                .get(p)
                .ok_or_else(|| Error::InvalidArgument(format!("particle {p:?} not in vocabulary")))?;
            add(verb, v)
        }
        None => verb.to_vec(),
    };
    let tagged_prefix = format!("{}{SENSE_DELIMITER}", entry.verb);
    let list = table.nearest_by(&query, topk, |t| {
        t == entry.verb || Some(t) == prep_token || t.starts_with(&tagged_prefix)
    })?;
    Ok(list.into_iter().map(|n| n.token).collect())
}

fn check_aligned(entries: &[VpcEntry], candidates: &[Vec<String>], k: usize) -> Result<()> {
    if entries.is_empty() {
        return Err(Error::Empty("VPC entries".into()));
    }
    if entries.len() != candidates.len() {
        return Err(Error::InvalidArgument(format!(
            "{} entries but {} candidate lists",
            entries.len(),
            candidates.len()
        )));
    }
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    Ok(())
}

fn gold_hits(entry: &VpcEntry, candidates: &[String], k: usize) -> usize {
    let top: HashSet<&String> = candidates.iter().take(k).collect();
    top.iter().filter(|c| entry.gold.contains(c.as_str())).count()
}

/// Fraction of entries with at least one gold paraphrase among their first
/// `topk` candidates.
pub fn vpc_accuracy(entries: &[VpcEntry], candidates: &[Vec<String>], topk: usize) -> Result<f64> {
    check_aligned(entries, candidates, topk)?;
    let hits = entries
        .iter()
        .zip(candidates)
        .filter(|(e, c)| gold_hits(e, c, topk) > 0)
        .count();
    Ok(hits as f64 / entries.len() as f64)
}

/// Mean over entries of `|top-k candidates ∩ gold| / k`.
pub fn prec_at_k(entries: &[VpcEntry], candidates: &[Vec<String>], k: usize) -> Result<f64> {
    check_aligned(entries, candidates, k)?;
    let total: f64 = entries
        .iter()
        .zip(candidates)
        .map(|(e, c)| gold_hits(e, c, k) as f64 / k as f64)
        .sum();
    Ok(total / entries.len() as f64)
}
