//! Geometric context features for a preposition occurrence.
//!
//! Three vectors are extracted per occurrence: the mean of the left context,
//! the mean of the right context, and the interplay vector, the unit vector
//! whose summed squared distances to the span of the left context vectors and
//! to the span of the right context vectors is smallest.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;

use crate::embeddings::EmbeddingTable;
use crate::linalg::{add, axpy, dot, norm, normalized, scale};
use crate::{Error, Result};

/// Relative residual below which a context vector is treated as linearly
/// dependent on the ones already in the basis.
const RANK_TOLERANCE: f64 = 1e-8;

/// Eigenvalues this close to the largest are treated as tied.
const EIGEN_TIE_GAP: f64 = 1e-9;

/// One occurrence of a preposition inside a tokenized sentence.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PrepInstance {
    id: String,
    tokens: Vec<String>,
    prep_index: usize,
    sense: Option<String>,
}

impl PrepInstance {
    pub fn new(id: impl Into<String>, tokens: Vec<String>, prep_index: usize, sense: Option<String>) -> Result<Self> {
        if prep_index >= tokens.len() {
            return Err(Error::InvalidArgument(format!(
                "preposition index {prep_index} out of range for {} tokens",
                tokens.len()
            )));
        }
        Ok(PrepInstance {
            id: id.into(),
            tokens,
            prep_index,
            sense,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn prep_index(&self) -> usize {
        self.prep_index
    }

    pub fn preposition(&self) -> &str {
        &self.tokens[self.prep_index]
    }

    pub fn sense(&self) -> Option<&str> {
        self.sense.as_deref()
    }

    pub fn with_sense(mut self, sense: Option<String>) -> Self {
        self.sense = sense;
        self
    }
}

/// In-vocabulary context tokens on each side of a preposition, nearest first.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ContextWindow<'a> {
    pub left: Vec<&'a str>,
    pub right: Vec<&'a str>,
}

/// Collects up to `k_left` / `k_right` in-vocabulary tokens around the
/// preposition. Out-of-vocabulary tokens are skipped and do not use up a slot;
/// the scan stops at the sentence boundary.
pub fn extract_window<'a>(
    instance: &'a PrepInstance,
    k_left: usize,
    k_right: usize,
    table: &EmbeddingTable,
) -> ContextWindow<'a> {
    let tokens = instance.tokens();
    let idx = instance.prep_index();
    let left = tokens[..idx]
        .iter()
        .rev()
        .filter(|t| table.contains(t))
        .take(k_left)
        .map(String::as_str)
        .collect();
    let right = tokens[idx + 1..]
        .iter()
        .filter(|t| table.contains(t))
        .take(k_right)
        .map(String::as_str)
        .collect();
    ContextWindow { left, right }
}

/// Mean of the token vectors. An empty (or fully out-of-vocabulary) list gives
/// the zero vector and `degenerate = true`.
pub fn mean_feature(tokens: &[&str], table: &EmbeddingTable) -> (Vec<f64>, bool) {
    let vectors: Vec<&[f64]> = tokens.iter().filter_map(|t| table.get(t)).collect();
    match mean_of(&vectors) {
        Some(mean) => (mean, false),
        None => (vec![0.0; table.dim()], true),
    }
}

fn mean_of(vectors: &[&[f64]]) -> Option<Vec<f64>> {
    let first = vectors.first()?;
    let mut sum = vec![0.0; first.len()];
    for v in vectors {
        axpy(1.0, v, &mut sum);
    }
    scale(&mut sum, 1.0 / vectors.len() as f64);
    Some(sum)
}

/// Orthonormal basis of `span(vectors)` by modified Gram-Schmidt, dropping
/// vectors whose residual falls under the rank tolerance.
fn orthonormal_basis<V: AsRef<[f64]>>(vectors: &[V]) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for v in vectors {
        let v = v.as_ref();
        let original = norm(v);
        if original == 0.0 {
            continue;
        }
        let mut w = v.to_vec();
        // Two sweeps keep the basis orthogonal to working precision.
        for _ in 0..2 {
            for q in &basis {
                let c = dot(q, &w);
                axpy(-c, q, &mut w);
            }
        }
        let residual = norm(&w);
        if residual > RANK_TOLERANCE * original {
            scale(&mut w, 1.0 / residual);
            basis.push(w);
        }
    }
    basis
}

/// Flips `v` so that it points along `reference`; if `v` is orthogonal to the
/// reference, makes its first nonzero coordinate positive.
fn orient(v: &mut [f64], reference: &[f64]) {
    let d = dot(v, reference);
    let tol = 1e-12 * norm(reference).max(f64::MIN_POSITIVE);
    let flip = if d.abs() > tol {
        d < 0.0
    } else {
        v.iter().find(|x| x.abs() > 1e-12).is_some_and(|x| *x < 0.0)
    };
    if flip {
        scale(v, -1.0);
    }
}

/// The interplay vector of two sets of context vectors.
///
/// Minimizing `dist²(v, span L) + dist²(v, span R)` over unit `v` is the same
/// as maximizing `vᵀ(P_L + P_R)v`, so the answer is the top eigenvector of the
/// sum of the two orthogonal projectors. The eigenproblem is solved on the
/// combined span, which has at most `|L| + |R|` dimensions.
///
/// The sign is chosen to agree with the sum of the two context means. When one
/// side is empty the normalized mean of the other side is returned and the
/// result is flagged degenerate; when both are empty the zero vector is.
pub fn interplay_feature<V: AsRef<[f64]>>(left: &[V], right: &[V], dim: usize) -> (Vec<f64>, bool) {
    let left_basis = orthonormal_basis(left);
    let right_basis = orthonormal_basis(right);
    let left_slices: Vec<&[f64]> = left.iter().map(AsRef::as_ref).collect();
    let right_slices: Vec<&[f64]> = right.iter().map(AsRef::as_ref).collect();
    let left_mean = mean_of(&left_slices).unwrap_or_else(|| vec![0.0; dim]);
    let right_mean = mean_of(&right_slices).unwrap_or_else(|| vec![0.0; dim]);

    match (left_basis.is_empty(), right_basis.is_empty()) {
        (true, true) => (vec![0.0; dim], true),
        (true, false) => (one_sided(&right_mean, &right_basis), true),
        (false, true) => (one_sided(&left_mean, &left_basis), true),
        (false, false) => {
            let reference = add(&left_mean, &right_mean);
            (top_eigenvector(&left_basis, &right_basis, &reference), false)
        }
    }
}

fn one_sided(mean: &[f64], basis: &[Vec<f64>]) -> Vec<f64> {
    normalized(mean).unwrap_or_else(|| {
        let mut v = basis[0].clone();
        orient(&mut v, mean);
        v
    })
}

fn top_eigenvector(left: &[Vec<f64>], right: &[Vec<f64>], reference: &[f64]) -> Vec<f64> {
    let combined: Vec<&Vec<f64>> = left.iter().chain(right).collect();
    let basis = orthonormal_basis(&combined);
    let m = basis.len();

    // Restriction of P_L + P_R to the combined span: sum of C Cᵀ with
    // C = Bᵀ Q for each side's orthonormal basis Q.
    let mut restricted = DMatrix::<f64>::zeros(m, m);
    for side in [left, right] {
        let coords = DMatrix::from_fn(m, side.len(), |i, j| dot(&basis[i], &side[j]));
        restricted += &coords * coords.transpose();
    }
    let eig = SymmetricEigen::new(restricted);

    let top = eig.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let reference_coords: Vec<f64> = basis.iter().map(|b| dot(b, reference)).collect();
    let tied: Vec<usize> = (0..m).filter(|&i| eig.eigenvalues[i] >= top - EIGEN_TIE_GAP).collect();

    let column = |i: usize| eig.eigenvectors.column(i).iter().copied().collect::<Vec<f64>>();
    let mut coords = if tied.len() == 1 {
        column(tied[0])
    } else {
        // Among a tied top eigenspace, pick the direction with the largest
        // projection of the context means.
        let mut projected = vec![0.0; m];
        for &i in &tied {
            let e = column(i);
            axpy(dot(&e, &reference_coords), &e, &mut projected);
        }
        normalized(&projected).unwrap_or_else(|| column(tied[0]))
    };
    orient(&mut coords, &reference_coords);

    let mut v = vec![0.0; reference.len()];
    for (c, b) in coords.iter().zip(&basis) {
        axpy(*c, b, &mut v);
    }
    let mut v = normalized(&v).unwrap_or(v);
    orient(&mut v, reference);
    v
}

/// The sum of squared distances from `v` to the spans of `left` and `right`.
///
/// Exposed for diagnostics; computed by projecting onto orthonormal bases.
pub fn interplay_objective<V: AsRef<[f64]>>(v: &[f64], left: &[V], right: &[V]) -> f64 {
    let vv = dot(v, v);
    [orthonormal_basis(left), orthonormal_basis(right)]
        .iter()
        .map(|basis| vv - basis.iter().map(|q| dot(q, v).powi(2)).sum::<f64>())
        .sum()
}

/// The three features of one occurrence, with flags marking blocks that could
/// not be computed from real context.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureTriple {
    pub v_left: Vec<f64>,
    pub v_right: Vec<f64>,
    pub v_inter: Vec<f64>,
    pub left_degenerate: bool,
    pub right_degenerate: bool,
    pub inter_degenerate: bool,
}

impl FeatureTriple {
    pub fn dim(&self) -> usize {
        self.v_left.len()
    }

    pub fn blocks(&self) -> [(&[f64], bool); 3] {
        [
            (&self.v_left, self.left_degenerate),
            (&self.v_right, self.right_degenerate),
            (&self.v_inter, self.inter_degenerate),
        ]
    }
}

pub fn feature_triple(instance: &PrepInstance, k_left: usize, k_right: usize, table: &EmbeddingTable) -> FeatureTriple {
    let window = extract_window(instance, k_left, k_right, table);
    triple_from_window(&window, table)
}

fn triple_from_window(window: &ContextWindow<'_>, table: &EmbeddingTable) -> FeatureTriple {
    let (v_left, left_degenerate) = mean_feature(&window.left, table);
    let (v_right, right_degenerate) = mean_feature(&window.right, table);
    let lookup = |tokens: &[&str]| -> Vec<&[f64]> { tokens.iter().filter_map(|t| table.get(t)).collect() };
    let (v_inter, inter_degenerate) = interplay_feature(&lookup(&window.left), &lookup(&window.right), table.dim());
    FeatureTriple {
        v_left,
        v_right,
        v_inter,
        left_degenerate,
        right_degenerate,
        inter_degenerate,
    }
}

/// Feature triples for a batch of instances, computed in parallel. Output order
/// matches input order.
pub fn feature_triples(
    instances: &[PrepInstance],
    k_left: usize,
    k_right: usize,
    table: &EmbeddingTable,
) -> Vec<FeatureTriple> {
    instances
        .par_iter()
        .map(|inst| feature_triple(inst, k_left, k_right, table))
        .collect()
}

/// Which feature blocks make up an instance's vector representation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FeatureMode {
    All,
    LeftRight,
    LeftInter,
    RightInter,
    /// Mean of every context vector on both sides; the baseline.
    Average,
}

impl FeatureMode {
    pub const ALL_MODES: [FeatureMode; 5] = [
        FeatureMode::All,
        FeatureMode::LeftRight,
        FeatureMode::LeftInter,
        FeatureMode::RightInter,
        FeatureMode::Average,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureMode::All => "all",
            FeatureMode::LeftRight => "lr",
            FeatureMode::LeftInter => "li",
            FeatureMode::RightInter => "ri",
            FeatureMode::Average => "average",
        }
    }

    /// Whether the left, right and interplay blocks are used, in that order.
    /// The baseline uses none of them.
    pub fn blocks(self) -> [bool; 3] {
        match self {
            FeatureMode::All => [true, true, true],
            FeatureMode::LeftRight => [true, true, false],
            FeatureMode::LeftInter => [true, false, true],
            FeatureMode::RightInter => [false, true, true],
            FeatureMode::Average => [false, false, false],
        }
    }
}

impl fmt::Display for FeatureMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FeatureMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "all" | "lri" => FeatureMode::All,
            "lr" | "left_right" => FeatureMode::LeftRight,
            "li" | "left_inter" => FeatureMode::LeftInter,
            "ri" | "right_inter" => FeatureMode::RightInter,
            "average" | "average_baseline" => FeatureMode::Average,
            other => return Err(Error::InvalidArgument(format!("unknown feature mode {other:?}"))),
        })
    }
}

/// Flattens the selected feature blocks into one vector.
///
/// Each block is L2-normalized before concatenation; zero blocks stay zero.
/// The baseline mode instead returns the plain mean over all tokens of the
/// window, left and right together.
pub fn concat_features(
    triple: &FeatureTriple,
    mode: FeatureMode,
    window: &ContextWindow<'_>,
    table: &EmbeddingTable,
) -> Vec<f64> {
    if mode == FeatureMode::Average {
        let all: Vec<&str> = window.left.iter().chain(&window.right).copied().collect();
        return mean_feature(&all, table).0;
    }
    let mut out = Vec::with_capacity(3 * triple.dim());
    for ((block, _), used) in triple.blocks().into_iter().zip(mode.blocks()) {
        if used {
            match normalized(block) {
                Some(unit) => out.extend(unit),
                None => out.extend(std::iter::repeat_n(0.0, block.len())),
            }
        }
    }
    out
}

/// Window extraction, triple and concatenation in one step.
pub fn instance_vector(
    instance: &PrepInstance,
    k_left: usize,
    k_right: usize,
    mode: FeatureMode,
    table: &EmbeddingTable,
) -> Vec<f64> {
    let window = extract_window(instance, k_left, k_right, table);
    let triple = triple_from_window(&window, table);
    concat_features(&triple, mode, &window, table)
}

/// Writes triples as TSV: id, three 0/1 degeneracy flags, then the left,
/// right and interplay vectors as comma-joined decimals.
pub fn write_features_tsv<W: Write>(mut out: W, rows: &[(String, FeatureTriple)]) -> Result<()> {
    for (id, t) in rows {
        writeln!(
            out,
            "{id}\t{}\t{}\t{}\t{}\t{}\t{}",
            u8::from(t.left_degenerate),
            u8::from(t.right_degenerate),
            u8::from(t.inter_degenerate),
            join_vector(&t.v_left),
            join_vector(&t.v_right),
            join_vector(&t.v_inter),
        )?;
    }
    Ok(())
}

pub fn read_features_tsv<R: BufRead>(input: R) -> Result<Vec<(String, FeatureTriple)>> {
    let mut rows = Vec::new();
    let mut dim = None;
    for (i, line) in input.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 7 {
            return Err(Error::parse(
                line_no,
                format!("expected 7 columns, found {}", cols.len()),
            ));
        }
        let flag = |s: &str| match s {
            "0" => Ok(false),
            "1" => Ok(true),
            _ => Err(Error::parse(line_no, format!("invalid flag {s:?}"))),
        };
        let triple = FeatureTriple {
            left_degenerate: flag(cols[1])?,
            right_degenerate: flag(cols[2])?,
            inter_degenerate: flag(cols[3])?,
            v_left: parse_vector(cols[4], line_no)?,
            v_right: parse_vector(cols[5], line_no)?,
            v_inter: parse_vector(cols[6], line_no)?,
        };
        let d = triple.v_left.len();
        if triple.v_right.len() != d || triple.v_inter.len() != d || *dim.get_or_insert(d) != d {
            return Err(Error::parse(line_no, "inconsistent vector dimensions"));
        }
        rows.push((cols[0].to_string(), triple));
    }
    Ok(rows)
}

pub(crate) fn join_vector(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| x.to_string()).collect();
    parts.join(",")
}

pub(crate) fn parse_vector(s: &str, line: usize) -> Result<Vec<f64>> {
    if s.is_empty() {
        return Err(Error::parse(line, "empty vector"));
    }
    s.split(',')
        .map(|x| {
            x.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::parse(line, format!("invalid number {x:?}")))
        })
        .collect()
}
