//! On-disk formats.
//!
//! Transcripts are JSON Lines, one answer per line; blank lines are
//! skipped and parse errors carry the 1-based line number. Registries,
//! criteria, and agent specs are single JSON documents. All parsing is
//! strict: unknown fields are rejected so typos fail loudly instead of
//! silently defaulting.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::domain::{Adherence, AnswerRecord, Criterion, Explanation, ExplanationRegistry, Transcript};
use crate::error::{Error, Result};
use crate::kl::rid_from_test_length;
use crate::sim::SyntheticAgent;

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRecord {
    question_id: String,
    score: f64,
    #[serde(default)]
    explanation_id: Option<String>,
    #[serde(default)]
    timestamp: Option<u64>,
}

/// Parse a JSONL transcript. An empty input yields an empty transcript;
/// whether that is acceptable is the certifier's call.
pub fn parse_transcript(reader: impl BufRead) -> Result<Transcript> {
    let mut records = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let number = idx + 1;
        let ingest = |reason: String| Error::Ingest { line: number, reason };
        let line = line.map_err(|e| ingest(e.to_string()))?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let raw: RawRecord =
            serde_json::from_str(trimmed).map_err(|e| ingest(e.to_string()))?;
        let mut record = AnswerRecord::new(raw.question_id, raw.score)
            .map_err(|e| ingest(e.to_string()))?;
        if let Some(id) = raw.explanation_id {
            record = record.with_explanation(id);
        }
        if let Some(ts) = raw.timestamp {
            record = record.with_timestamp(ts);
        }
        records.push(record);
    }
    Ok(Transcript::from_records(records))
}

pub fn read_transcript(path: impl AsRef<Path>) -> Result<Transcript> {
    parse_transcript(BufReader::new(File::open(path)?))
}

pub fn write_transcript(mut writer: impl Write, transcript: &Transcript) -> Result<()> {
    for record in transcript.records() {
        serde_json::to_writer(&mut writer, record)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

pub fn transcript_to_jsonl(transcript: &Transcript) -> String {
    let mut buf = Vec::new();
    write_transcript(&mut buf, transcript).expect("writing to memory cannot fail");
    String::from_utf8(buf).expect("serialized JSON is UTF-8")
}

/// One explanation as stored in a registry file. `covered_ids` lists
/// already-answered questions the explanation retroactively covers; it
/// matters only when replaying events into an online certifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegistryEntry {
    pub id: String,
    pub coverage_mass: f64,
    pub score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adherence: Option<Adherence>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covered_ids: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegistryDoc {
    pub explanations: Vec<RegistryEntry>,
}

impl RegistryDoc {
    pub fn to_registry(&self) -> Result<ExplanationRegistry> {
        let explanations = self
            .explanations
            .iter()
            .map(|e| Explanation::new(&e.id, e.coverage_mass, e.score, e.adherence))
            .collect::<Result<Vec<_>>>()?;
        ExplanationRegistry::new(explanations)
    }

    pub fn from_registry(registry: &ExplanationRegistry) -> Self {
        RegistryDoc {
            explanations: registry
                .explanations()
                .iter()
                .map(|e| RegistryEntry {
                    id: e.id().to_string(),
                    coverage_mass: e.coverage_mass(),
                    score: e.score(),
                    adherence: e.adherence_observed(),
                    covered_ids: None,
                })
                .collect(),
        }
    }
}

pub fn parse_registry(text: &str) -> Result<RegistryDoc> {
    Ok(serde_json::from_str(text)?)
}

pub fn read_registry(path: impl AsRef<Path>) -> Result<RegistryDoc> {
    parse_registry(&std::fs::read_to_string(path)?)
}

pub fn write_registry(mut writer: impl Write, doc: &RegistryDoc) -> Result<()> {
    serde_json::to_writer_pretty(&mut writer, doc)?;
    writer.write_all(b"\n")?;
    Ok(())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCriterion {
    pg: f64,
    delta: f64,
    #[serde(default)]
    rid: Option<f64>,
    #[serde(default)]
    rid_test_length: Option<u64>,
}

/// Build a criterion from either an explicit rid or a rid test length
/// (the longest test the agent must be able to pass with no ridiculous
/// answer, at the same delta). Exactly one must be given.
pub fn criterion_from_parts(
    pg: f64,
    delta: f64,
    rid: Option<f64>,
    rid_test_length: Option<u64>,
) -> Result<Criterion> {
    match (rid, rid_test_length) {
        (Some(r), None) => Criterion::new(pg, r, delta),
        (None, Some(n)) => Criterion::new(pg, rid_from_test_length(n, delta)?.value(), delta),
        (Some(_), Some(_)) => Err(Error::InvalidCriterion(
            "give rid or rid_test_length, not both".to_string(),
        )),
        (None, None) => Err(Error::InvalidCriterion(
            "one of rid or rid_test_length is required".to_string(),
        )),
    }
}

pub fn parse_criterion(text: &str) -> Result<Criterion> {
    let raw: RawCriterion = serde_json::from_str(text)?;
    criterion_from_parts(raw.pg, raw.delta, raw.rid, raw.rid_test_length)
}

pub fn read_criterion(path: impl AsRef<Path>) -> Result<Criterion> {
    parse_criterion(&std::fs::read_to_string(path)?)
}

pub fn parse_agent(text: &str) -> Result<SyntheticAgent> {
    let agent: SyntheticAgent = serde_json::from_str(text)?;
    agent.validate()?;
    Ok(agent)
}

pub fn read_agent(path: impl AsRef<Path>) -> Result<SyntheticAgent> {
    parse_agent(&std::fs::read_to_string(path)?)
}
