//! Tokenization, instance extraction and storage, and sense-tagging of raw
//! text with trained classifiers.

mod semeval;

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::classify::KnnModel;
use crate::embeddings::EmbeddingTable;
use crate::features::PrepInstance;
use crate::{Error, Result, SENSE_DELIMITER};

pub use semeval::{
    convert_semeval, parse_semeval_key, parse_semeval_xml, to_prep_instance, SemevalInstance, SemevalReport,
};

/// Tokenized sentences. Sentences are never empty and tokens never contain
/// whitespace.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Corpus {
    pub sentences: Vec<Vec<String>>,
    pub source: String,
}

/// A corpus in which modeled preposition tokens read `<prep>::<sense>`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TaggedCorpus {
    pub sentences: Vec<Vec<String>>,
}

impl TaggedCorpus {
    /// One sentence per line, tokens joined by single spaces.
    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        for s in &self.sentences {
            writeln!(out, "{}", s.join(" "))?;
        }
        Ok(())
    }
}

/// Splits text after every `.`, `?` or `!` that is followed by whitespace.
/// The terminator stays with its sentence.
pub fn split_sentences(text: &str) -> Vec<&str> {
    let mut pieces = Vec::new();
    let mut start = 0;
    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if matches!(c, '.' | '?' | '!') {
            if let Some(&(_, next)) = chars.peek() {
                if next.is_whitespace() {
                    let end = i + c.len_utf8();
                    pieces.push(&text[start..end]);
                    start = end;
                }
            }
        }
    }
    pieces.push(&text[start..]);
    pieces
}

/// Lowercases, splits on whitespace, and strips leading and trailing
/// punctuation. The sense delimiter `::` is treated as whitespace so that
/// tokenized text never looks tagged.
pub fn tokenize_sentence(sentence: &str) -> Vec<String> {
    sentence
        .to_lowercase()
        .replace(SENSE_DELIMITER, " ")
        .split_whitespace()
        .map(|t| t.trim_matches(|c: char| !c.is_alphanumeric()))
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

pub fn tokenize(text: &str) -> Corpus {
    Corpus {
        sentences: split_sentences(text)
            .into_iter()
            .map(tokenize_sentence)
            .filter(|s| !s.is_empty())
            .collect(),
        source: String::new(),
    }
}

pub fn tokenize_bytes(bytes: &[u8]) -> Result<Corpus> {
    std::str::from_utf8(bytes).map(tokenize).map_err(|_| Error::Encoding)
}

/// One instance per occurrence of a listed preposition, in corpus order, with
/// ids `<sentence>:<token>`.
pub fn extract_instances(corpus: &Corpus, prepositions: &HashSet<&str>) -> Vec<PrepInstance> {
    let mut out = Vec::new();
    for (s, sentence) in corpus.sentences.iter().enumerate() {
        for (t, token) in sentence.iter().enumerate() {
            if prepositions.contains(token.as_str()) {
                out.push(
                    PrepInstance::new(format!("{s}:{t}"), sentence.clone(), t, None).expect("index within sentence"),
                );
            }
        }
    }
    out
}

/// Instance TSV: id, preposition, 0-based index, sense (`-` when unlabeled),
/// space-joined tokens.
pub fn write_instances<W: Write>(mut out: W, instances: &[PrepInstance]) -> Result<()> {
    for inst in instances {
        if inst.id().contains(['\t', '\n']) || inst.sense().is_some_and(|s| s.contains(['\t', '\n'])) {
            return Err(Error::InvalidArgument(format!(
                "instance {:?} has tabs or newlines",
                inst.id()
            )));
        }
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}",
            inst.id(),
            inst.preposition(),
            inst.prep_index(),
            inst.sense().unwrap_or("-"),
            inst.tokens().join(" ")
        )?;
    }
    Ok(())
}

pub fn read_instances<R: BufRead>(input: R) -> Result<Vec<PrepInstance>> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 5 {
            return Err(Error::parse(
                line_no,
                format!("expected 5 columns, found {}", cols.len()),
            ));
        }
        let index: usize = cols[2]
            .parse()
            .map_err(|_| Error::parse(line_no, format!("invalid index {:?}", cols[2])))?;
        let tokens: Vec<String> = cols[4].split_whitespace().map(str::to_string).collect();
        if index >= tokens.len() {
            return Err(Error::parse(
                line_no,
                format!("index {index} out of range for {} tokens", tokens.len()),
            ));
        }
        if tokens[index] != cols[1] {
            return Err(Error::parse(
                line_no,
                format!("token at {index} is {:?}, not {:?}", tokens[index], cols[1]),
            ));
        }
        let sense = match cols[3] {
            "-" => None,
            "" => return Err(Error::parse(line_no, "empty sense column")),
            s => Some(s.to_string()),
        };
        out.push(PrepInstance::new(cols[0], tokens, index, sense).expect("index checked"));
    }
    Ok(out)
}

pub fn read_instances_tsv(path: impl AsRef<Path>) -> Result<Vec<PrepInstance>> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::file(path, e))?;
    read_instances(BufReader::new(f))
}

pub fn write_instances_tsv(path: impl AsRef<Path>, instances: &[PrepInstance]) -> Result<()> {
    let path = path.as_ref();
    let f = File::create(path).map_err(|e| Error::file(path, e))?;
    let mut w = BufWriter::new(f);
    write_instances(&mut w, instances)?;
    w.flush()?;
    Ok(())
}

/// The token written for a preposition tagged with `sense`. Whitespace in the
/// sense id is replaced so the token stays a single word.
pub fn sense_token(preposition: &str, sense: &str) -> String {
    let sense: String = sense.chars().map(|c| if c.is_whitespace() { '_' } else { c }).collect();
    format!("{preposition}{SENSE_DELIMITER}{sense}")
}

/// Splits a tagged token into preposition and sense id.
pub fn split_sense_token(token: &str) -> Option<(&str, &str)> {
    token.split_once(SENSE_DELIMITER)
}

fn check_models(models: &BTreeMap<String, KnnModel>) -> Result<()> {
    for (key, model) in models {
        if key != model.preposition() {
            return Err(Error::InvalidArgument(format!(
                "model keyed {key:?} is for {:?}",
                model.preposition()
            )));
        }
    }
    Ok(())
}

/// Rewrites every modeled preposition in `sentence` as a sense token.
pub fn tag_sentence(
    sentence: &[String],
    models: &BTreeMap<String, KnnModel>,
    table: &EmbeddingTable,
) -> Result<Vec<String>> {
    let mut out = sentence.to_vec();
    for (idx, token) in sentence.iter().enumerate() {
        if let Some(model) = models.get(token) {
            let inst = PrepInstance::new("", sentence.to_vec(), idx, None)?;
            out[idx] = sense_token(token, model.predict_instance(&inst, table)?);
        }
    }
    Ok(out)
}

pub fn tag_corpus(
    corpus: &Corpus,
    models: &BTreeMap<String, KnnModel>,
    table: &EmbeddingTable,
) -> Result<TaggedCorpus> {
    check_models(models)?;
    let sentences = corpus
        .sentences
        .par_iter()
        .map(|s| tag_sentence(s, models, table))
        .collect::<Result<Vec<_>>>()?;
    Ok(TaggedCorpus { sentences })
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TagStats {
    pub sentences: usize,
    pub tagged: usize,
}

/// Streams raw text line by line, tokenizes it, and writes the tagged
/// sentences one per line. Lines are processed in parallel batches of
/// `batch_lines`; output order equals input order.
pub fn tag_stream<R: BufRead, W: Write>(
    input: R,
    mut output: W,
    models: &BTreeMap<String, KnnModel>,
    table: &EmbeddingTable,
    batch_lines: usize,
) -> Result<TagStats> {
    check_models(models)?;
    let mut stats = TagStats::default();
    let mut batch: Vec<String> = Vec::with_capacity(batch_lines);
    let mut lines = input.lines();
    loop {
        batch.clear();
        for line in lines.by_ref().take(batch_lines.max(1)) {
            batch.push(line?);
        }
        if batch.is_empty() {
            break;
        }
        let tagged: Vec<Vec<Vec<String>>> = batch
            .par_iter()
            .map(|line| {
                tokenize(line)
                    .sentences
                    .iter()
                    .map(|s| tag_sentence(s, models, table))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<_>>()?;
        for sentence in tagged.into_iter().flatten() {
            stats.sentences += 1;
            stats.tagged += sentence.iter().filter(|t| t.contains(SENSE_DELIMITER)).count();
            writeln!(output, "{}", sentence.join(" "))?;
        }
    }
    Ok(stats)
}

/// Reads pre-tokenized text, one sentence per line with space-separated
/// tokens, as used for embedding training.
pub fn read_token_lines<R: BufRead>(input: R) -> Result<Vec<Vec<String>>> {
    let mut out = Vec::new();
    for line in input.lines() {
        let tokens: Vec<String> = line?.split_whitespace().map(str::to_string).collect();
        if !tokens.is_empty() {
            out.push(tokens);
        }
    }
    Ok(out)
}
