//! Scopes, criteria, transcripts, and the explanation partition.
//!
//! A transcript is an ordered list of scored answers; a record is ridiculous
//! exactly when its score is 0. An explanation declares that some known
//! fraction of the question distribution (its coverage mass) is answered by
//! a trusted procedure with a fixed score; the registry holds a disjoint
//! family of such explanations plus the leftover residual mass. Partitioning
//! a transcript against a registry splits tagged records (per explanation)
//! from residual ones.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for mass bookkeeping (coverage masses summing to one).
pub const MASS_TOLERANCE: f64 = 1e-12;
/// Tolerance for a tagged record's score against its explanation's declared
/// score.
pub const SCORE_CONSISTENCY_TOLERANCE: f64 = 1e-9;

/// The bar an agent must clear: passing grade, ridiculousness threshold, and
/// the certification failure budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Criterion {
    pg: f64,
    rid: f64,
    delta: f64,
}

impl Criterion {
    pub fn new(pg: f64, rid: f64, delta: f64) -> Result<Self> {
        for (name, v) in [("pg", pg), ("rid", rid), ("delta", delta)] {
            if !v.is_finite() || v <= 0.0 || v >= 1.0 {
                return Err(Error::InvalidCriterion(format!(
                    "{name} must lie strictly between 0 and 1, got {v}"
                )));
            }
        }
        if rid >= pg {
            return Err(Error::InvalidCriterion(format!(
                "rid ({rid}) must be strictly below pg ({pg})"
            )));
        }
        Ok(Criterion { pg, rid, delta })
    }

    pub fn pg(&self) -> f64 {
        self.pg
    }

    pub fn rid(&self) -> f64 {
        self.rid
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Soft warnings: the thresholds are usable but suspicious. A
    /// ridiculousness threshold is expected to sit far below the passing
    /// grade.
    pub fn advisories(&self) -> Vec<String> {
        let mut notes = Vec::new();
        if self.rid >= self.pg / 10.0 {
            notes.push(format!(
                "rid ({}) is within a factor of 10 of pg ({}); expected rid << pg",
                self.rid, self.pg
            ));
        }
        notes
    }
}

/// One scored answer. Ridiculous iff score is exactly 0.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnswerRecord {
    question_id: String,
    score: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    explanation_id: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    timestamp: Option<u64>,
}

impl AnswerRecord {
    pub fn new(question_id: impl Into<String>, score: f64) -> Result<Self> {
        let question_id = question_id.into();
        if !score.is_finite() || !(0.0..=1.0).contains(&score) {
            return Err(Error::InvalidRecord {
                question_id,
                reason: format!("score must lie in [0,1], got {score}"),
            });
        }
        Ok(AnswerRecord {
            question_id,
            score,
            explanation_id: None,
            timestamp: None,
        })
    }

    pub fn with_explanation(mut self, explanation_id: impl Into<String>) -> Self {
        self.explanation_id = Some(explanation_id.into());
        self
    }

    pub fn with_timestamp(mut self, timestamp: u64) -> Self {
        self.timestamp = Some(timestamp);
        self
    }

    pub fn question_id(&self) -> &str {
        &self.question_id
    }

    pub fn score(&self) -> f64 {
        self.score
    }

    pub fn explanation_id(&self) -> Option<&str> {
        self.explanation_id.as_deref()
    }

    pub fn timestamp(&self) -> Option<u64> {
        self.timestamp
    }

    pub fn is_ridiculous(&self) -> bool {
        self.score == 0.0
    }
}

/// Ordered scored answers.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Transcript {
    records: Vec<AnswerRecord>,
}

/// Empirical means of a transcript: average score, ridiculous fraction,
/// sample count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TranscriptSummary {
    pub s_hat: f64,
    pub r_hat: f64,
    pub n: u64,
}

impl Transcript {
    pub fn from_records(records: Vec<AnswerRecord>) -> Self {
        Transcript { records }
    }

    pub fn records(&self) -> &[AnswerRecord] {
        &self.records
    }

    pub fn n(&self) -> u64 {
        self.records.len() as u64
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn summarize(&self) -> Result<TranscriptSummary> {
        if self.records.is_empty() {
            return Err(Error::NoSamples);
        }
        let n = self.records.len();
        let score_sum: f64 = self.records.iter().map(|r| r.score).sum();
        let ridiculous = self.records.iter().filter(|r| r.is_ridiculous()).count();
        Ok(TranscriptSummary {
            s_hat: score_sum / n as f64,
            r_hat: ridiculous as f64 / n as f64,
            n: n as u64,
        })
    }
}

/// Observed adherence counts for an explanation: how often the agent was
/// seen using the procedure out of how many probes into its question set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Adherence {
    pub uses: u64,
    pub probes: u64,
}

impl Adherence {
    /// Empirical adherence rate. Caller guarantees probes > 0.
    pub fn rate(&self) -> f64 {
        self.uses as f64 / self.probes as f64
    }
}

/// A trusted derivation procedure covering part of the question
/// distribution with a uniform score.
#[derive(Debug, Clone, PartialEq)]
pub struct Explanation {
    id: String,
    coverage_mass: f64,
    score: f64,
    adherence_observed: Option<Adherence>,
}

impl Explanation {
    pub fn new(
        id: impl Into<String>,
        coverage_mass: f64,
        score: f64,
        adherence_observed: Option<Adherence>,
    ) -> Result<Self> {
        let id = id.into();
        if !coverage_mass.is_finite() || !(0.0..=1.0).contains(&coverage_mass) {
            return Err(Error::InvalidRegistry(format!(
                "explanation `{id}`: coverage_mass must lie in [0,1], got {coverage_mass}"
            )));
        }
        if !score.is_finite() || !(0.0..=1.0).contains(&score) {
            return Err(Error::InvalidRegistry(format!(
                "explanation `{id}`: score must lie in [0,1], got {score}"
            )));
        }
        if let Some(a) = adherence_observed {
            if a.uses > a.probes {
                return Err(Error::InvalidRegistry(format!(
                    "explanation `{id}`: {} uses exceed {} probes",
                    a.uses, a.probes
                )));
            }
        }
        Ok(Explanation {
            id,
            coverage_mass,
            score,
            adherence_observed,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn coverage_mass(&self) -> f64 {
        self.coverage_mass
    }

    pub fn score(&self) -> f64 {
        self.score
    }

    pub fn adherence_observed(&self) -> Option<Adherence> {
        self.adherence_observed
    }

    /// Derived, never stored: an explanation is ridiculous iff its score
    /// is 0.
    pub fn is_ridiculous(&self) -> bool {
        self.score == 0.0
    }

    /// Ridiculousness indicator as mass: 1 for a zero-score explanation.
    pub fn ridiculous_value(&self) -> f64 {
        if self.is_ridiculous() {
            1.0
        } else {
            0.0
        }
    }
}

/// Invariant breaches a raw explanation list can exhibit.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    DuplicateId(String),
    MassExceedsOne { total: f64 },
    ResidualMismatch { declared: f64, derived: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DuplicateId(id) => write!(f, "duplicate explanation id `{id}`"),
            Violation::MassExceedsOne { total } => {
                write!(f, "coverage mass exceeds 1: total {total}")
            }
            Violation::ResidualMismatch { declared, derived } => write!(
                f,
                "residual mass {declared} does not complement coverage ({derived} expected)"
            ),
        }
    }
}

/// Check a raw explanation list against the registry invariants: unique ids
/// and total coverage mass at most 1. Violations are data, not failures.
pub fn validate_explanations(explanations: &[Explanation]) -> Vec<Violation> {
    let mut violations = Vec::new();
    let mut seen = BTreeSet::new();
    for e in explanations {
        if !seen.insert(e.id.as_str()) {
            violations.push(Violation::DuplicateId(e.id.clone()));
        }
    }
    let total: f64 = explanations.iter().map(|e| e.coverage_mass).sum();
    if total > 1.0 + MASS_TOLERANCE {
        violations.push(Violation::MassExceedsOne { total });
    }
    violations
}

/// A disjoint family of explanations plus the residual mass no explanation
/// covers. Construction enforces the invariants, so a built registry always
/// validates clean; `residual_mass` is derived as the complement of the
/// total coverage.
#[derive(Debug, Clone, PartialEq)]
pub struct ExplanationRegistry {
    explanations: Vec<Explanation>,
    residual_mass: f64,
}

impl ExplanationRegistry {
    pub fn new(explanations: Vec<Explanation>) -> Result<Self> {
        let violations = validate_explanations(&explanations);
        if !violations.is_empty() {
            let joined = violations
                .iter()
                .map(Violation::to_string)
                .collect::<Vec<_>>()
                .join("; ");
            return Err(Error::InvalidRegistry(joined));
        }
        Ok(Self::from_parts(explanations))
    }

    /// Assemble without re-validating. Caller guarantees the invariants
    /// hold (the online certifier enforces them per event).
    pub(crate) fn from_parts(explanations: Vec<Explanation>) -> Self {
        let total: f64 = explanations.iter().map(|e| e.coverage_mass).sum();
        let mut residual_mass = (1.0 - total).max(0.0);
        if residual_mass < MASS_TOLERANCE {
            residual_mass = 0.0;
        }
        ExplanationRegistry {
            explanations,
            residual_mass,
        }
    }

    /// A registry with no explanations: everything is residual.
    pub fn empty() -> Self {
        ExplanationRegistry {
            explanations: Vec::new(),
            residual_mass: 1.0,
        }
    }

    pub fn explanations(&self) -> &[Explanation] {
        &self.explanations
    }

    pub fn residual_mass(&self) -> f64 {
        self.residual_mass
    }

    pub fn len(&self) -> usize {
        self.explanations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.explanations.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Explanation> {
        self.explanations.iter().find(|e| e.id == id)
    }

    /// Deterministic grade contribution: Σ coverage·score.
    pub fn score_mass(&self) -> f64 {
        self.explanations
            .iter()
            .map(|e| e.coverage_mass * e.score)
            .sum()
    }

    /// Deterministic ridiculousness contribution: Σ coverage over
    /// zero-score explanations.
    pub fn ridiculous_mass(&self) -> f64 {
        self.explanations
            .iter()
            .map(|e| e.coverage_mass * e.ridiculous_value())
            .sum()
    }
}

/// Re-check a constructed registry. Always empty for registries built via
/// `new`; exists so externally assembled data can be audited uniformly.
pub fn validate_registry(registry: &ExplanationRegistry) -> Vec<Violation> {
    let mut violations = validate_explanations(&registry.explanations);
    let total: f64 = registry.explanations.iter().map(|e| e.coverage_mass).sum();
    let derived = (1.0 - total).max(0.0);
    if (registry.residual_mass - derived).abs() > MASS_TOLERANCE {
        violations.push(Violation::ResidualMismatch {
            declared: registry.residual_mass,
            derived,
        });
    }
    violations
}

/// Split a transcript into per-explanation record counts and the residual
/// transcript (records with no explanation tag), preserving order. Every
/// registered explanation appears in the counts, possibly with 0.
pub fn partition_transcript(
    transcript: &Transcript,
    registry: &ExplanationRegistry,
) -> Result<(BTreeMap<String, u64>, Transcript)> {
    let mut counts: BTreeMap<String, u64> = registry
        .explanations()
        .iter()
        .map(|e| (e.id().to_string(), 0))
        .collect();
    let mut residual = Vec::new();
    for record in transcript.records() {
        match record.explanation_id() {
            None => residual.push(record.clone()),
            Some(id) => match counts.get_mut(id) {
                Some(count) => *count += 1,
                None => return Err(Error::UnknownExplanation(id.to_string())),
            },
        }
    }
    Ok((counts, Transcript::from_records(residual)))
}

/// Verify that every tagged record scores what its explanation declares
/// (within [`SCORE_CONSISTENCY_TOLERANCE`]). Applies where explanations are
/// trusted to determine the score outright; adherence probing legitimately
/// violates it.
pub fn check_tagged_scores(
    transcript: &Transcript,
    registry: &ExplanationRegistry,
) -> Result<()> {
    for record in transcript.records() {
        if let Some(id) = record.explanation_id() {
            let explanation = registry
                .get(id)
                .ok_or_else(|| Error::UnknownExplanation(id.to_string()))?;
            if (record.score() - explanation.score()).abs() > SCORE_CONSISTENCY_TOLERANCE {
                return Err(Error::ScoreMismatch {
                    question_id: record.question_id().to_string(),
                    explanation_id: id.to_string(),
                    got: record.score(),
                    declared: explanation.score(),
                });
            }
        }
    }
    Ok(())
}
