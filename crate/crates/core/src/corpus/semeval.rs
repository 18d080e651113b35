//! Lexical-sample XML in the style of the SemEval-2007 preposition task.
//!
//! ```text
//! <lexelt item="with.p">
//!   <instance id="with.p.fn.1">
//!     <answer instance="with.p.fn.1" senseid="3(1)"/>
//!     <context>He washed it <head>with</head> water.</context>
//!   </instance>
//! </lexelt>
//! ```
//!
//! Answers come either inline as `<answer senseid=..>` or from key files with
//! lines `<lexelt> <instance-id> <sense> [more senses]`.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::Path;

use log::warn;
use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;

use super::{split_sentences, tokenize_sentence};
use crate::features::PrepInstance;
use crate::{Error, Result};

/// One `<instance>` element, with its context split around the head.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SemevalInstance {
    pub id: String,
    pub before: String,
    pub head: String,
    pub after: String,
    pub answer: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SemevalReport {
    pub converted: usize,
    pub labeled: usize,
    /// Instances whose head did not survive tokenization as a single token.
    pub skipped_head: Vec<String>,
    /// Key entries naming instances that are not in any XML file.
    pub missing_in_xml: Vec<String>,
}

fn attribute(e: &BytesStart<'_>, name: &[u8]) -> Option<String> {
    e.attributes()
        .flatten()
        .find(|a| a.key.as_ref() == name)
        .map(|a| match a.unescape_value() {
            Ok(v) => v.into_owned(),
            Err(_) => String::from_utf8_lossy(&a.value).into_owned(),
        })
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Region {
    Outside,
    Before,
    Head,
    After,
}

/// Parses the instances of one lexical-sample document. `label` names the
/// source in error messages.
pub fn parse_semeval_xml(text: &str, label: &str) -> Result<Vec<SemevalInstance>> {
    let mut reader = Reader::from_str(text);
    let mut out = Vec::new();
    let mut current: Option<SemevalInstance> = None;
    let mut region = Region::Outside;

    let markup = |reader: &Reader<&[u8]>, message: String| Error::Markup {
        file: label.to_string(),
        offset: reader.error_position(),
        message,
    };

    loop {
        let event = reader.read_event().map_err(|e| markup(&reader, e.to_string()))?;
        match event {
            Event::Start(e) | Event::Empty(e) if e.name().as_ref() == b"instance" => {
                if current.is_some() {
                    return Err(markup(&reader, "nested <instance>".into()));
                }
                let id = attribute(&e, b"id").ok_or_else(|| markup(&reader, "<instance> without id".into()))?;
                current = Some(SemevalInstance {
                    id,
                    ..Default::default()
                });
            }
            Event::Start(e) | Event::Empty(e) if e.name().as_ref() == b"answer" => {
                if let Some(inst) = current.as_mut() {
                    if inst.answer.is_none() {
                        inst.answer = attribute(&e, b"senseid");
                    }
                }
            }
            Event::Start(e) => match e.name().as_ref() {
                b"context" if current.is_some() => region = Region::Before,
                b"head" if region == Region::Before => region = Region::Head,
                _ => {}
            },
            Event::End(e) => match e.name().as_ref() {
                b"head" if region == Region::Head => region = Region::After,
                b"context" => region = Region::Outside,
                b"instance" => {
                    if let Some(inst) = current.take() {
                        out.push(inst);
                    }
                    region = Region::Outside;
                }
                _ => {}
            },
            Event::Text(t) => {
                let text = match t.unescape() {
                    Ok(s) => s.into_owned(),
                    Err(_) => String::from_utf8_lossy(&t).into_owned(),
                };
                push_text(current.as_mut(), region, &text);
            }
            Event::CData(t) => {
                push_text(current.as_mut(), region, &String::from_utf8_lossy(&t));
            }
            Event::Eof => break,
            _ => {}
        }
    }
    if current.is_some() {
        return Err(markup(&reader, "unterminated <instance>".into()));
    }
    Ok(out)
}

fn push_text(inst: Option<&mut SemevalInstance>, region: Region, text: &str) {
    let Some(inst) = inst else { return };
    match region {
        Region::Before => inst.before.push_str(text),
        Region::Head => inst.head.push_str(text),
        Region::After => inst.after.push_str(text),
        Region::Outside => {}
    }
}

/// Parses an answer key. Lines with three or more fields are
/// `<lexelt> <id> <sense>...`; two-field lines are `<id> <sense>`. Only the
/// first sense of each instance is kept.
pub fn parse_semeval_key(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let fields: Vec<&str> = line.split_whitespace().collect();
        let (id, sense) = match fields.len() {
            0 => continue,
            1 => return Err(Error::parse(i + 1, "key line needs an instance id and a sense")),
            2 => (fields[0], fields[1]),
            _ => (fields[1], fields[2]),
        };
        out.entry(id.to_string()).or_insert_with(|| sense.to_string());
    }
    Ok(out)
}

/// Decodes UTF-8, falling back to Latin-1 (the encoding of the original
/// distribution) when the bytes are not valid UTF-8.
fn decode(bytes: Vec<u8>) -> String {
    match String::from_utf8(bytes) {
        Ok(s) => s,
        Err(e) => e.into_bytes().iter().map(|&b| b as char).collect(),
    }
}

/// Turns a parsed instance into a [`PrepInstance`] restricted to the sentence
/// containing the head, or `None` when the head is not a single token.
pub fn to_prep_instance(inst: &SemevalInstance, sense: Option<String>) -> Option<PrepInstance> {
    let head = tokenize_sentence(&inst.head);
    if head.len() != 1 {
        return None;
    }
    let before = split_sentences(&inst.before);
    let mut tokens = before.last().map(|s| tokenize_sentence(s)).unwrap_or_default();
    let prep_index = tokens.len();
    tokens.extend(head);
    if let Some(first) = split_sentences(&inst.after).first() {
        tokens.extend(tokenize_sentence(first));
    }
    PrepInstance::new(inst.id.clone(), tokens, prep_index, sense).ok()
}

/// Converts lexical-sample XML files plus optional key files into instances.
pub fn convert_semeval<P: AsRef<Path>, Q: AsRef<Path>>(
    xml_paths: &[P],
    key_paths: &[Q],
) -> Result<(Vec<PrepInstance>, SemevalReport)> {
    let mut keys = BTreeMap::new();
    for path in key_paths {
        let path = path.as_ref();
        let text = decode(fs::read(path).map_err(|e| Error::file(path, e))?);
        for (id, sense) in parse_semeval_key(&text)? {
            keys.entry(id).or_insert(sense);
        }
    }

    let mut report = SemevalReport::default();
    let mut instances = Vec::new();
    let mut seen = HashSet::new();
    for path in xml_paths {
        let path = path.as_ref();
        let text = decode(fs::read(path).map_err(|e| Error::file(path, e))?);
        for inst in parse_semeval_xml(&text, &path.display().to_string())? {
            seen.insert(inst.id.clone());
            let sense = keys.get(&inst.id).cloned().or_else(|| inst.answer.clone());
            match to_prep_instance(&inst, sense) {
                Some(p) => {
                    report.labeled += usize::from(p.sense().is_some());
                    instances.push(p);
                }
                None => {
                    warn!("{}: could not locate head {:?}", inst.id, inst.head);
                    report.skipped_head.push(inst.id);
                }
            }
        }
    }
    for id in keys.keys() {
        if !seen.contains(id) {
            warn!("key entry {id} has no instance in the XML input");
            report.missing_in_xml.push(id.clone());
        }
    }
    report.converted = instances.len();
    Ok((instances, report))
}
