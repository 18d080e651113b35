//! Dense word-vector tables in the textual interchange format.
//!
//! The format is the one written by most embedding trainers: a header line
//! `<count> <dim>` followed by one `<token> v1 ... v_dim` line per token.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use log::warn;

use crate::linalg::{dot, norm};
use crate::{Error, Result};

/// A vocabulary with one dense vector per token.
///
/// Tables are immutable once built. Lookups are exact-match on the stored
/// token strings; no case folding is applied.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    vocab: Vec<String>,
    index: HashMap<String, usize>,
    dim: usize,
    data: Vec<f64>,
    norms: Vec<f64>,
}

/// A token and its cosine similarity to a query.
#[derive(Clone, Debug, PartialEq)]
pub struct Neighbor {
    pub token: String,
    pub cosine: f64,
}

/// Result of loading a table, with any non-fatal issues found in the input.
#[derive(Debug)]
pub struct LoadedTable {
    pub table: EmbeddingTable,
    /// Tokens that appeared more than once; the first row was kept.
    pub duplicates: Vec<String>,
}

impl EmbeddingTable {
    /// An empty table of the given dimension.
    pub fn empty(dim: usize) -> Result<Self> {
        Self::from_rows(dim, Vec::<(String, Vec<f64>)>::new()).map(|t| t.table)
    }

    /// Builds a table from `(token, vector)` rows. Duplicate tokens keep their
    /// first row and are reported in [`LoadedTable::duplicates`].
    pub fn from_rows<I, S>(dim: usize, rows: I) -> Result<LoadedTable>
    where
        I: IntoIterator<Item = (S, Vec<f64>)>,
        S: Into<String>,
    {
        if dim == 0 {
            return Err(Error::InvalidArgument("dimension must be at least 1".into()));
        }
        let mut table = EmbeddingTable {
            vocab: Vec::new(),
            index: HashMap::new(),
            dim,
            data: Vec::new(),
            norms: Vec::new(),
        };
        let mut duplicates = Vec::new();
        for (token, vector) in rows {
            let token = token.into();
            if vector.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: vector.len(),
                });
            }
            if token.is_empty() || token.chars().any(char::is_whitespace) {
                return Err(Error::InvalidArgument(format!("invalid token {token:?}")));
            }
            if vector.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "non-finite entry in vector for {token:?}"
                )));
            }
            if table.index.contains_key(&token) {
                warn!("duplicate token {token:?}; keeping first occurrence");
                duplicates.push(token);
                continue;
            }
            table.push(token, &vector);
        }
        Ok(LoadedTable { table, duplicates })
    }

    fn push(&mut self, token: String, vector: &[f64]) {
        self.index.insert(token.clone(), self.vocab.len());
        self.vocab.push(token);
        self.norms.push(norm(vector));
        self.data.extend_from_slice(vector);
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vocab.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vocab.is_empty()
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    /// The vector stored for `token`, or `None` if it is out of vocabulary.
    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.index_of(token).map(|i| self.row(i))
    }

    pub fn row(&self, idx: usize) -> &[f64] {
        &self.data[idx * self.dim..(idx + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.vocab
            .iter()
            .enumerate()
            .map(move |(i, t)| (t.as_str(), self.row(i)))
    }

    /// A copy of the table with every vector multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        for v in &mut out.data {
            *v *= factor;
        }
        for n in &mut out.norms {
            *n *= factor.abs();
        }
        out
    }

    /// Loads a table from a file in the textual word-vector format.
    pub fn load(path: impl AsRef<Path>) -> Result<LoadedTable> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::file(path, e))?;
        Self::read_from(BufReader::new(file))
    }

    pub fn read_from<R: BufRead>(reader: R) -> Result<LoadedTable> {
        let mut lines = reader.lines();
        let header = match lines.next() {
            Some(line) => line?,
            None => return Err(Error::parse(1, "missing header")),
        };
        let mut fields = header.split_whitespace();
        let count = parse_header_field(fields.next(), "count")?;
        let dim = parse_header_field(fields.next(), "dimension")?;
        if fields.next().is_some() {
            return Err(Error::parse(1, "header must be \"<count> <dim>\""));
        }
        if dim == 0 {
            return Err(Error::parse(1, "dimension must be at least 1"));
        }

        let mut rows = Vec::with_capacity(count.min(1 << 20));
        for (i, line) in lines.enumerate() {
            let line_no = i + 2;
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            if rows.len() == count {
                return Err(Error::parse(
                    line_no,
                    format!("header declares {count} rows but more follow"),
                ));
            }
            let mut parts = line.split_whitespace();
            let token = parts.next().unwrap_or_default().to_string();
            let mut vector = Vec::with_capacity(dim);
            for part in parts {
                let v: f64 = part
                    .parse()
                    .map_err(|_| Error::parse(line_no, format!("non-numeric entry {part:?}")))?;
                if !v.is_finite() {
                    return Err(Error::parse(line_no, format!("non-finite entry {part:?}")));
                }
                vector.push(v);
            }
            if vector.len() != dim {
                return Err(Error::parse(
                    line_no,
                    format!("expected {dim} values, found {}", vector.len()),
                ));
            }
            rows.push((token, vector));
        }
        if rows.len() != count {
            return Err(Error::parse(
                rows.len() + 2,
                format!("header declares {count} rows, found {}", rows.len()),
            ));
        }
        Self::from_rows(dim, rows)
    }

    /// Writes the table in the textual word-vector format.
    ///
    /// Values are printed with the shortest representation that parses back
    /// to the same `f64`, so a save/load round trip is exact.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::file(path, e))?;
        let mut writer = BufWriter::new(file);
        self.write_to(&mut writer)?;
        writer.flush()?;
        Ok(())
    }

    pub fn write_to<W: Write>(&self, mut writer: W) -> Result<()> {
        writeln!(writer, "{} {}", self.len(), self.dim)?;
        for (token, vector) in self.iter() {
            write!(writer, "{token}")?;
            for v in vector {
                write!(writer, " {v}")?;
            }
            writeln!(writer)?;
        }
        Ok(())
    }

    /// The `k` tokens most cosine-similar to `query`, skipping `exclude`.
    pub fn nearest(&self, query: &[f64], k: usize, exclude: &HashSet<&str>) -> Result<Vec<Neighbor>> {
        self.nearest_by(query, k, |token| exclude.contains(token))
    }

    /// Like [`nearest`](Self::nearest), with an arbitrary exclusion predicate.
    ///
    /// Results are sorted by decreasing cosine; equal scores keep vocabulary
    /// order. Zero-norm table rows are never returned.
    pub fn nearest_by<F>(&self, query: &[f64], k: usize, mut excluded: F) -> Result<Vec<Neighbor>>
    where
        F: FnMut(&str) -> bool,
    {
        if k == 0 {
            return Err(Error::InvalidArgument("k must be at least 1".into()));
        }
        if query.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: query.len(),
            });
        }
        let query_norm = norm(query);
        if query_norm == 0.0 || !query_norm.is_finite() {
            return Err(Error::ZeroNorm);
        }

        let mut scored: Vec<(usize, f64)> = Vec::new();
        for (i, token) in self.vocab.iter().enumerate() {
            if self.norms[i] == 0.0 || excluded(token) {
                continue;
            }
            let cos = (dot(query, self.row(i)) / (query_norm * self.norms[i])).clamp(-1.0, 1.0);
            scored.push((i, cos));
        }
        // Stable sort keeps vocabulary order among equal scores.
        scored.sort_by(|a, b| b.1.total_cmp(&a.1));
        Ok(scored
            .into_iter()
            .take(k)
            .map(|(i, cosine)| Neighbor {
                token: self.vocab[i].clone(),
                cosine,
            })
            .collect())
    }
}

fn parse_header_field(field: Option<&str>, what: &str) -> Result<usize> {
    field
        .ok_or_else(|| Error::parse(1, format!("missing {what} in header")))?
        .parse()
        .map_err(|_| Error::parse(1, format!("invalid {what} in header")))
}

/// Cosine similarity of two nonzero vectors of equal length.
pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroNorm);
    }
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}
