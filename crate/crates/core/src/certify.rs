//! The certification procedures.
//!
//! Each procedure evaluates four one-sided conditions: a good pair at
//! confidence delta whose conjunction certifies understanding, and a bad
//! pair at delta/2 each, either of which certifies the opposite. The good
//! and bad conditions for the same quantity cannot both hold (the delta
//! lower bound never exceeds the delta/2 upper bound), so at most one
//! verdict direction fires; when neither does, the evidence is inconclusive
//! and no guarantee is claimed.
//!
//! Procedure variants differ in what evidence they consume:
//! sample-only (a plain transcript), explanation-residual (deterministic
//! explanation mass plus residual samples), and uncertain-adherence
//! (explanation mass discounted by adherence estimates, with the failure
//! budget split across the per-explanation bounds).

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::domain::{
    check_tagged_scores, partition_transcript, AnswerRecord, Criterion, Explanation,
    ExplanationRegistry, Transcript, TranscriptSummary, MASS_TOLERANCE,
};
use crate::error::{Error, Result};
use crate::kl::{lower_bound, upper_bound, BoundQuery, Probability};

pub const GOOD_GRADE: &str = "Good-Grade";
pub const GOOD_RID: &str = "Good-Rid";
pub const BAD_GRADE: &str = "Bad-Grade";
pub const BAD_RID: &str = "Bad-Rid";
pub const GOOD_GRADE_EXP: &str = "Good-Grade-Exp";
pub const GOOD_RID_EXP: &str = "Good-Rid-Exp";
pub const BAD_GRADE_EXP: &str = "Bad-Grade-Exp";
pub const BAD_RID_EXP: &str = "Bad-Rid-Exp";
pub const GOOD_GRADE_EUA: &str = "Good-Grade-EUA";
pub const BAD_GRADE_EUA: &str = "Bad-Grade-EUA";

/// What a certification run concluded about the agent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Outcome {
    Understands,
    DoesNotUnderstand,
    NoConclusion,
}

impl std::fmt::Display for Outcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Outcome::Understands => "Understands",
            Outcome::DoesNotUnderstand => "DoesNotUnderstand",
            Outcome::NoConclusion => "NoConclusion",
        };
        f.write_str(s)
    }
}

/// Which evidence model produced a verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Procedure {
    #[serde(rename = "P1")]
    Samples,
    #[serde(rename = "P2")]
    Explanations,
    #[serde(rename = "P3")]
    UncertainAdherence,
}

impl std::fmt::Display for Procedure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Procedure::Samples => "P1",
            Procedure::Explanations => "P2",
            Procedure::UncertainAdherence => "P3",
        };
        f.write_str(s)
    }
}

/// One evaluated condition: the confidence-bound value, the threshold it
/// was compared against, and whether it held.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConditionCheck {
    pub bound: f64,
    pub threshold: f64,
    pub satisfied: bool,
}

/// Full result of a certification: the outcome plus every condition that
/// went into it, whether or not it fired.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub outcome: Outcome,
    pub procedure: Procedure,
    pub conditions: BTreeMap<String, ConditionCheck>,
}

fn lcb(p: f64, n: u64, delta: f64) -> Result<f64> {
    let query = BoundQuery::new(Probability::new(p)?, n, delta)?;
    Ok(lower_bound(&query).value())
}

fn ucb(p: f64, n: u64, delta: f64) -> Result<f64> {
    let query = BoundQuery::new(Probability::new(p)?, n, delta)?;
    Ok(upper_bound(&query).value())
}

fn decide(conditions: &BTreeMap<String, ConditionCheck>, names: [&str; 4]) -> Outcome {
    let [good_grade, good_rid, bad_grade, bad_rid] = names;
    let holds = |name: &str| {
        conditions
            .get(name)
            .expect("condition evaluated before deciding")
            .satisfied
    };
    if holds(good_grade) && holds(good_rid) {
        Outcome::Understands
    } else if holds(bad_grade) || holds(bad_rid) {
        Outcome::DoesNotUnderstand
    } else {
        Outcome::NoConclusion
    }
}

/// Certify from a plain transcript. Explanation tags, if present, are
/// ignored; every record is treated as an ordinary sample.
pub fn certify_samples(transcript: &Transcript, criterion: &Criterion) -> Result<Verdict> {
    let summary = transcript.summarize()?;
    let delta = criterion.delta();
    let (s, r, n) = (summary.s_hat, summary.r_hat, summary.n);

    let mut conditions = BTreeMap::new();
    let gg = lcb(s, n, delta)?;
    let gr = ucb(r, n, delta)?;
    let bg = ucb(s, n, delta / 2.0)?;
    let br = lcb(r, n, delta / 2.0)?;
    conditions.insert(
        GOOD_GRADE.to_string(),
        ConditionCheck { bound: gg, threshold: criterion.pg(), satisfied: gg >= criterion.pg() },
    );
    conditions.insert(
        GOOD_RID.to_string(),
        ConditionCheck { bound: gr, threshold: criterion.rid(), satisfied: gr <= criterion.rid() },
    );
    conditions.insert(
        BAD_GRADE.to_string(),
        ConditionCheck { bound: bg, threshold: criterion.pg(), satisfied: bg < criterion.pg() },
    );
    conditions.insert(
        BAD_RID.to_string(),
        ConditionCheck { bound: br, threshold: criterion.rid(), satisfied: br > criterion.rid() },
    );

    Ok(Verdict {
        outcome: decide(&conditions, [GOOD_GRADE, GOOD_RID, BAD_GRADE, BAD_RID]),
        procedure: Procedure::Samples,
        conditions,
    })
}

/// Shared evaluation for the explanation-residual model. `residual` is the
/// summary of residual samples when there are any; `None` with positive
/// residual mass means no residual evidence yet, in which case the residual
/// term gets the vacuous bounds [0, 1].
fn explanation_conditions(
    registry: &ExplanationRegistry,
    residual: Option<&TranscriptSummary>,
    criterion: &Criterion,
) -> Result<BTreeMap<String, ConditionCheck>> {
    let det_s = registry.score_mass();
    let det_r = registry.ridiculous_mass();
    let p_res = registry.residual_mass();
    let delta = criterion.delta();

    let (res_s_lo, res_s_hi, res_r_hi, res_r_lo) = if p_res == 0.0 {
        (0.0, 0.0, 0.0, 0.0)
    } else {
        match residual {
            Some(sum) => (
                lcb(sum.s_hat, sum.n, delta)?,
                ucb(sum.s_hat, sum.n, delta / 2.0)?,
                ucb(sum.r_hat, sum.n, delta)?,
                lcb(sum.r_hat, sum.n, delta / 2.0)?,
            ),
            None => (0.0, 1.0, 1.0, 0.0),
        }
    };

    let gge = det_s + p_res * res_s_lo;
    let gre = det_r + p_res * res_r_hi;
    let bge = det_s + p_res * res_s_hi;
    let bre = det_r + p_res * res_r_lo;

    let mut conditions = BTreeMap::new();
    conditions.insert(
        GOOD_GRADE_EXP.to_string(),
        ConditionCheck { bound: gge, threshold: criterion.pg(), satisfied: gge >= criterion.pg() },
    );
    conditions.insert(
        GOOD_RID_EXP.to_string(),
        ConditionCheck { bound: gre, threshold: criterion.rid(), satisfied: gre <= criterion.rid() },
    );
    conditions.insert(
        BAD_GRADE_EXP.to_string(),
        ConditionCheck { bound: bge, threshold: criterion.pg(), satisfied: bge < criterion.pg() },
    );
    conditions.insert(
        BAD_RID_EXP.to_string(),
        ConditionCheck { bound: bre, threshold: criterion.rid(), satisfied: bre > criterion.rid() },
    );
    Ok(conditions)
}

fn explanation_verdict(conditions: BTreeMap<String, ConditionCheck>) -> Verdict {
    Verdict {
        outcome: decide(
            &conditions,
            [GOOD_GRADE_EXP, GOOD_RID_EXP, BAD_GRADE_EXP, BAD_RID_EXP],
        ),
        procedure: Procedure::Explanations,
        conditions,
    }
}

/// Certify from explanation mass plus a residual-only transcript. The
/// transcript must contain only untagged records; the explanations'
/// contribution is deterministic, so only the residual needs bounds. With
/// zero residual mass the transcript is not consulted at all; with positive
/// residual mass it must be nonempty.
pub fn certify_with_explanations(
    transcript: &Transcript,
    registry: &ExplanationRegistry,
    criterion: &Criterion,
) -> Result<Verdict> {
    if let Some(tagged) = transcript
        .records()
        .iter()
        .find(|r| r.explanation_id().is_some())
    {
        return Err(Error::ResidualTagged(tagged.question_id().to_string()));
    }
    let residual = if registry.residual_mass() > 0.0 {
        Some(transcript.summarize().map_err(|e| match e {
            Error::NoSamples => Error::ResidualSamplesRequired,
            other => other,
        })?)
    } else {
        None
    };
    let conditions = explanation_conditions(registry, residual.as_ref(), criterion)?;
    Ok(explanation_verdict(conditions))
}

/// Full-transcript driver for the explanation-residual model: check that
/// tagged records score what their explanations declare, split off the
/// residual, and certify it.
pub fn certify_explained_transcript(
    transcript: &Transcript,
    registry: &ExplanationRegistry,
    criterion: &Criterion,
) -> Result<Verdict> {
    check_tagged_scores(transcript, registry)?;
    let (_counts, residual) = partition_transcript(transcript, registry)?;
    certify_with_explanations(&residual, registry, criterion)
}

/// Certify when explanation adherence is itself uncertain. Tags mark which
/// records fall in an explanation's question set; adherence comes from the
/// registry's observed (uses, probes) counts. The failure budget is split
/// evenly across the per-explanation adherence bounds and the residual
/// grade bound; ridiculousness is bounded from the whole transcript at full
/// budget.
pub fn certify_uncertain_application(
    transcript: &Transcript,
    registry: &ExplanationRegistry,
    criterion: &Criterion,
) -> Result<Verdict> {
    let overall = transcript.summarize()?;
    let (_counts, residual_t) = partition_transcript(transcript, registry)?;
    let delta = criterion.delta();
    let splits = registry.len() as f64 + 1.0;
    let delta_good = delta / splits;
    let delta_bad = delta / (2.0 * splits);

    let mut ggu = 0.0;
    let mut bgu = 0.0;
    for e in registry.explanations() {
        if e.coverage_mass() == 0.0 {
            continue;
        }
        let adherence = e
            .adherence_observed()
            .filter(|a| a.probes > 0)
            .ok_or_else(|| Error::NoAdherenceObservations(e.id().to_string()))?;
        let pi_hat = adherence.rate();
        let pi_lo = lcb(pi_hat, adherence.probes, delta_good)?;
        let pi_hi = ucb(pi_hat, adherence.probes, delta_bad)?;
        // optimistic: adheres at least pi_lo often, scoring s when it does
        // and 0 otherwise; pessimistic: adheres at most pi_hi often, scoring
        // 1 whenever it deviates
        ggu += e.coverage_mass() * pi_lo * e.score();
        bgu += e.coverage_mass() * (pi_hi * e.score() + (1.0 - pi_hi));
    }

    let p_res = registry.residual_mass();
    if p_res > 0.0 {
        let residual = residual_t.summarize().map_err(|e| match e {
            Error::NoSamples => Error::ResidualSamplesRequired,
            other => other,
        })?;
        ggu += p_res * lcb(residual.s_hat, residual.n, delta_good)?;
        bgu += p_res * ucb(residual.s_hat, residual.n, delta_bad)?;
    }

    let gr = ucb(overall.r_hat, overall.n, delta)?;
    let br = lcb(overall.r_hat, overall.n, delta / 2.0)?;

    let mut conditions = BTreeMap::new();
    conditions.insert(
        GOOD_GRADE_EUA.to_string(),
        ConditionCheck { bound: ggu, threshold: criterion.pg(), satisfied: ggu >= criterion.pg() },
    );
    conditions.insert(
        GOOD_RID.to_string(),
        ConditionCheck { bound: gr, threshold: criterion.rid(), satisfied: gr <= criterion.rid() },
    );
    conditions.insert(
        BAD_GRADE_EUA.to_string(),
        ConditionCheck { bound: bgu, threshold: criterion.pg(), satisfied: bgu < criterion.pg() },
    );
    conditions.insert(
        BAD_RID.to_string(),
        ConditionCheck { bound: br, threshold: criterion.rid(), satisfied: br > criterion.rid() },
    );

    Ok(Verdict {
        outcome: decide(&conditions, [GOOD_GRADE_EUA, GOOD_RID, BAD_GRADE_EUA, BAD_RID]),
        procedure: Procedure::UncertainAdherence,
        conditions,
    })
}

/// Incremental certification state: explanations accepted so far and the
/// residual sample buffer. Starts with full residual mass and nothing
/// buffered.
#[derive(Debug, Clone)]
pub struct OnlineState {
    criterion: Criterion,
    explanations: Vec<Explanation>,
    buffer: Vec<AnswerRecord>,
}

/// One step of an online certification stream.
#[derive(Debug, Clone)]
pub enum OnlineEvent {
    /// A fresh residual sample.
    Record(AnswerRecord),
    /// A newly accepted explanation, with the ids of buffered questions it
    /// retroactively covers; those samples stop being residual evidence.
    Explanation {
        explanation: Explanation,
        covered_ids: BTreeSet<String>,
    },
}

impl OnlineState {
    pub fn new(criterion: Criterion) -> Self {
        OnlineState {
            criterion,
            explanations: Vec::new(),
            buffer: Vec::new(),
        }
    }

    pub fn criterion(&self) -> &Criterion {
        &self.criterion
    }

    pub fn buffer(&self) -> &[AnswerRecord] {
        &self.buffer
    }

    pub fn buffer_transcript(&self) -> Transcript {
        Transcript::from_records(self.buffer.clone())
    }

    /// The registry implied by the explanations accepted so far. Event
    /// handling enforces the registry invariants, so this cannot fail.
    pub fn registry(&self) -> ExplanationRegistry {
        ExplanationRegistry::from_parts(self.explanations.clone())
    }

    pub fn residual_mass(&self) -> f64 {
        self.registry().residual_mass()
    }

    /// Evaluate the explanation-residual conditions on the current state.
    /// With residual mass but an empty buffer the residual term is bounded
    /// vacuously, so the verdict degrades to NoConclusion rather than
    /// erroring.
    pub fn current_verdict(&self) -> Result<Verdict> {
        let registry = self.registry();
        let residual = if registry.residual_mass() > 0.0 && !self.buffer.is_empty() {
            Some(self.buffer_transcript().summarize()?)
        } else {
            None
        };
        let conditions = explanation_conditions(&registry, residual.as_ref(), &self.criterion)?;
        Ok(explanation_verdict(conditions))
    }
}

/// Apply one event and re-certify. Record events must be untagged (coverage
/// is declared through explanation events, not record tags); explanation
/// events must fit in the remaining residual mass and use a fresh id.
/// A rejected event leaves the state unchanged.
pub fn online_update(state: &mut OnlineState, event: OnlineEvent) -> Result<Verdict> {
    match event {
        OnlineEvent::Record(record) => {
            if record.explanation_id().is_some() {
                return Err(Error::OnlineTaggedRecord(record.question_id().to_string()));
            }
            state.buffer.push(record);
        }
        OnlineEvent::Explanation {
            explanation,
            covered_ids,
        } => {
            let remaining = state.residual_mass();
            if explanation.coverage_mass() > remaining + MASS_TOLERANCE {
                return Err(Error::MassExceedsResidual {
                    mass: explanation.coverage_mass(),
                    remaining,
                });
            }
            if state.explanations.iter().any(|e| e.id() == explanation.id()) {
                return Err(Error::InvalidRegistry(format!(
                    "duplicate explanation id `{}`",
                    explanation.id()
                )));
            }
            state.explanations.push(explanation);
            state
                .buffer
                .retain(|r| !covered_ids.contains(r.question_id()));
        }
    }
    state.current_verdict()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Adherence;
    use approx::assert_abs_diff_eq;

    fn record(id: &str, score: f64) -> AnswerRecord {
        AnswerRecord::new(id, score).unwrap()
    }

    fn uniform_transcript(score: f64, n: usize) -> Transcript {
        Transcript::from_records((0..n).map(|i| record(&format!("q{i}"), score)).collect())
    }

    #[test]
    fn strong_agent_with_many_samples_certifies() {
        let c = Criterion::new(0.85, 0.00052, 0.05).unwrap();
        let v = certify_samples(&uniform_transcript(0.9, 10_000), &c).unwrap();
        assert_eq!(v.outcome, Outcome::Understands);
        assert_abs_diff_eq!(
            v.conditions[GOOD_GRADE].bound,
            0.892497254154188,
            epsilon = 1e-8
        );
        assert_abs_diff_eq!(
            v.conditions[GOOD_RID].bound,
            0.000299528359776612,
            epsilon = 1e-10
        );
        assert!(v.conditions[GOOD_GRADE].satisfied);
        assert!(v.conditions[GOOD_RID].satisfied);
        assert!(!v.conditions[BAD_GRADE].satisfied);
        assert!(!v.conditions[BAD_RID].satisfied);
        // all four bounds are reported regardless of outcome
        assert_eq!(v.conditions.len(), 4);
    }

    #[test]
    fn weak_agent_is_refuted_on_both_axes() {
        // s_hat = 0.5 with 1% ridiculous answers, well under pg = 0.7
        let mut records = vec![record("z0", 0.0); 10];
        records.extend((0..980).map(|i| record(&format!("h{i}"), 0.5)));
        records.extend((0..10).map(|i| record(&format!("o{i}"), 1.0)));
        let t = Transcript::from_records(records);
        let summary = t.summarize().unwrap();
        assert_eq!((summary.s_hat, summary.r_hat), (0.5, 0.01));

        let c = Criterion::new(0.7, 0.00052, 0.05).unwrap();
        let v = certify_samples(&t, &c).unwrap();
        assert_eq!(v.outcome, Outcome::DoesNotUnderstand);
        assert!(v.conditions[BAD_GRADE].satisfied);
        assert!(v.conditions[BAD_RID].satisfied);
        assert_abs_diff_eq!(
            v.conditions[BAD_GRADE].bound,
            0.542867849409283,
            epsilon = 1e-8
        );
        assert_abs_diff_eq!(
            v.conditions[BAD_RID].bound,
            0.00368460585678482,
            epsilon = 1e-9
        );
    }

    #[test]
    fn ten_samples_prove_nothing_either_way() {
        let c = Criterion::new(0.7, 0.00052, 0.05).unwrap();
        let v = certify_samples(&uniform_transcript(0.9, 10), &c).unwrap();
        assert_eq!(v.outcome, Outcome::NoConclusion);
        assert!(v.conditions.values().all(|c| !c.satisfied));
        // grade cannot be confirmed (0.545 < 0.7) nor refuted (0.999 >= 0.7)
        assert_abs_diff_eq!(
            v.conditions[GOOD_GRADE].bound,
            0.545253027807146,
            epsilon = 1e-8
        );
        assert_abs_diff_eq!(
            v.conditions[BAD_GRADE].bound,
            0.999022889582204,
            epsilon = 1e-8
        );
    }

    #[test]
    fn certify_samples_ignores_explanation_tags() {
        let c = Criterion::new(0.85, 0.00052, 0.05).unwrap();
        let plain = uniform_transcript(0.9, 500);
        let tagged = Transcript::from_records(
            plain
                .records()
                .iter()
                .map(|r| record(r.question_id(), r.score()).with_explanation("e"))
                .collect(),
        );
        assert_eq!(
            certify_samples(&plain, &c).unwrap(),
            certify_samples(&tagged, &c).unwrap()
        );
    }

    #[test]
    fn empty_transcript_is_rejected() {
        let c = Criterion::new(0.85, 0.00052, 0.05).unwrap();
        assert!(matches!(
            certify_samples(&Transcript::default(), &c),
            Err(Error::NoSamples)
        ));
    }

    #[test]
    fn full_coverage_is_deterministic() {
        let registry = ExplanationRegistry::new(vec![
            Explanation::new("good", 0.6, 1.0, None).unwrap(),
            Explanation::new("bad", 0.4, 0.0, None).unwrap(),
        ])
        .unwrap();
        let c = Criterion::new(0.55, 0.3, 0.05).unwrap();
        // no residual mass, so an empty transcript is fine
        let v = certify_with_explanations(&Transcript::default(), &registry, &c).unwrap();
        assert_eq!(v.outcome, Outcome::DoesNotUnderstand);
        assert_eq!(v.conditions[GOOD_GRADE_EXP].bound, 0.6);
        assert_eq!(v.conditions[BAD_RID_EXP].bound, 0.4);
        assert!(v.conditions[BAD_RID_EXP].satisfied);
        assert!(v.conditions[GOOD_GRADE_EXP].satisfied);
        // grade looks fine but the ridiculous mass sinks it
        assert!(!v.conditions[GOOD_RID_EXP].satisfied);
    }

    #[test]
    fn residual_mass_requires_residual_samples() {
        let registry = ExplanationRegistry::new(vec![
            Explanation::new("half", 0.5, 0.6, None).unwrap(),
        ])
        .unwrap();
        let c = Criterion::new(0.5, 0.01, 0.05).unwrap();
        assert!(matches!(
            certify_with_explanations(&Transcript::default(), &registry, &c),
            Err(Error::ResidualSamplesRequired)
        ));
    }

    #[test]
    fn tagged_records_are_not_residual_evidence() {
        let registry = ExplanationRegistry::new(vec![
            Explanation::new("half", 0.5, 0.6, None).unwrap(),
        ])
        .unwrap();
        let c = Criterion::new(0.5, 0.01, 0.05).unwrap();
        let t = Transcript::from_records(vec![record("q0", 0.6).with_explanation("half")]);
        match certify_with_explanations(&t, &registry, &c) {
            Err(Error::ResidualTagged(id)) => assert_eq!(id, "q0"),
            other => panic!("expected residual-tagged error, got {other:?}"),
        }
    }

    #[test]
    fn explanation_grade_bound_matches_oracle() {
        // 0.5 mass explained at score 0.6 plus 50 residual samples at 0.6:
        // good-grade bound = 0.3 + 0.5 * L(0.6, 50, 0.05)
        let registry = ExplanationRegistry::new(vec![
            Explanation::new("alpha", 0.5, 0.6, None).unwrap(),
        ])
        .unwrap();
        let c = Criterion::new(0.5, 0.05, 0.05).unwrap();
        let v = certify_with_explanations(&uniform_transcript(0.6, 50), &registry, &c).unwrap();
        assert_abs_diff_eq!(
            v.conditions[GOOD_GRADE_EXP].bound,
            0.513786400303572,
            epsilon = 1e-8
        );
        // ridiculousness bound: 0 + 0.5 * U(0, 50, 0.05)
        assert_abs_diff_eq!(
            v.conditions[GOOD_RID_EXP].bound,
            0.029077539558486134,
            epsilon = 1e-10
        );
        assert_eq!(v.outcome, Outcome::Understands);
    }

    #[test]
    fn perfectly_explained_half_needs_no_bound() {
        // 0.5 mass explained at score 1 contributes deterministically;
        // only the 99 residual samples are bounded
        let registry = ExplanationRegistry::new(vec![
            Explanation::new("proof", 0.5, 1.0, None).unwrap(),
        ])
        .unwrap();
        let c = Criterion::new(0.7, 0.05, 0.05).unwrap();
        let v = certify_with_explanations(&uniform_transcript(0.6, 99), &registry, &c).unwrap();
        // 0.5 + 0.5 * L(0.6, 99, 0.05)
        assert_abs_diff_eq!(
            v.conditions[GOOD_GRADE_EXP].bound,
            0.738643373184931,
            epsilon = 1e-8
        );
        // 0 + 0.5 * U(0, 99, 0.05)
        assert_abs_diff_eq!(
            v.conditions[GOOD_RID_EXP].bound,
            0.0149033368866754,
            epsilon = 1e-10
        );
        assert_eq!(v.outcome, Outcome::Understands);
    }

    #[test]
    fn ridiculous_explanations_refute_through_their_own_mass() {
        // 0.3 mass is explained ridiculously; even a spotless residual
        // cannot dilute it below rid. The refutation bound must count the
        // explanations' ridiculousness, not their scores.
        let registry = ExplanationRegistry::new(vec![
            Explanation::new("junk", 0.3, 0.0, None).unwrap(),
            Explanation::new("fine", 0.2, 1.0, None).unwrap(),
        ])
        .unwrap();
        let c = Criterion::new(0.6, 0.25, 0.05).unwrap();
        let v = certify_with_explanations(&uniform_transcript(0.8, 50), &registry, &c).unwrap();
        assert_abs_diff_eq!(v.conditions[BAD_RID_EXP].bound, 0.3, epsilon = 1e-12);
        assert!(v.conditions[BAD_RID_EXP].satisfied);
        assert_eq!(v.outcome, Outcome::DoesNotUnderstand);
    }

    fn adherence_fixture() -> (Transcript, ExplanationRegistry) {
        // one explanation with mass 0.5, score 0.6, observed adhering on
        // all 50 probes; 50 tagged + 50 untagged records, all scoring 0.6
        let registry = ExplanationRegistry::new(vec![
            Explanation::new(
                "alpha",
                0.5,
                0.6,
                Some(Adherence { uses: 50, probes: 50 }),
            )
            .unwrap(),
        ])
        .unwrap();
        let mut records: Vec<AnswerRecord> = (0..50)
            .map(|i| record(&format!("t{i}"), 0.6).with_explanation("alpha"))
            .collect();
        records.extend((0..50).map(|i| record(&format!("u{i}"), 0.6)));
        (Transcript::from_records(records), registry)
    }

    #[test]
    fn adherence_grade_bound_matches_oracle() {
        // 0.5 * L(1, 50, 0.025) * 0.6 + 0.5 * L(0.6, 50, 0.025)
        let (t, registry) = adherence_fixture();
        let c = Criterion::new(0.45, 0.01, 0.05).unwrap();
        let v = certify_uncertain_application(&t, &registry, &c).unwrap();
        assert_abs_diff_eq!(
            v.conditions[GOOD_GRADE_EUA].bound,
            0.48317013754727219,
            epsilon = 1e-8
        );
        // ridiculousness is bounded over all 100 records at full budget
        let gr = v.conditions[GOOD_RID].bound;
        assert_abs_diff_eq!(gr, 0.0295130496070399, epsilon = 1e-10);
        assert_eq!(v.outcome, Outcome::NoConclusion);
    }

    #[test]
    fn adherence_uncertainty_can_cost_more_than_it_buys_at_tiny_n() {
        // 10 total samples, half of them adherence probes: the discounted
        // bound lands below what plain sampling gets from the same records
        let registry = ExplanationRegistry::new(vec![
            Explanation::new("alpha", 0.5, 0.6, Some(Adherence { uses: 5, probes: 5 }))
                .unwrap(),
        ])
        .unwrap();
        let mut records: Vec<AnswerRecord> = (0..5)
            .map(|i| record(&format!("t{i}"), 0.6).with_explanation("alpha"))
            .collect();
        records.extend((0..5).map(|i| record(&format!("u{i}"), 0.6)));
        let t = Transcript::from_records(records);
        let c = Criterion::new(0.45, 0.01, 0.05).unwrap();

        let p3 = certify_uncertain_application(&t, &registry, &c).unwrap();
        let p1 = certify_samples(&t, &c).unwrap();
        // 0.5 * L(1,5,0.025) * 0.6 + 0.5 * L(0.6,5,0.025)
        assert_abs_diff_eq!(
            p3.conditions[GOOD_GRADE_EUA].bound,
            0.194629410908127,
            epsilon = 1e-8
        );
        assert_abs_diff_eq!(
            p1.conditions[GOOD_GRADE].bound,
            0.236716819455870,
            epsilon = 1e-8
        );
        assert!(p3.conditions[GOOD_GRADE_EUA].bound < p1.conditions[GOOD_GRADE].bound);
    }

    #[test]
    fn missing_adherence_observations_are_an_error() {
        let (t, _) = adherence_fixture();
        let registry = ExplanationRegistry::new(vec![
            Explanation::new("alpha", 0.5, 0.6, None).unwrap(),
        ])
        .unwrap();
        let c = Criterion::new(0.45, 0.01, 0.05).unwrap();
        match certify_uncertain_application(&t, &registry, &c) {
            Err(Error::NoAdherenceObservations(id)) => assert_eq!(id, "alpha"),
            other => panic!("expected missing-adherence error, got {other:?}"),
        }

        let zero_probes = ExplanationRegistry::new(vec![
            Explanation::new("alpha", 0.5, 0.6, Some(Adherence { uses: 0, probes: 0 }))
                .unwrap(),
        ])
        .unwrap();
        assert!(matches!(
            certify_uncertain_application(&t, &zero_probes, &c),
            Err(Error::NoAdherenceObservations(_))
        ));
    }

    #[test]
    fn massless_explanations_need_no_adherence() {
        let registry = ExplanationRegistry::new(vec![
            Explanation::new("ghost", 0.0, 0.6, None).unwrap(),
        ])
        .unwrap();
        let c = Criterion::new(0.45, 0.01, 0.05).unwrap();
        // 0.5 sums exactly, so the residual mean is exactly 0.5
        let v = certify_uncertain_application(&uniform_transcript(0.5, 50), &registry, &c)
            .unwrap();
        // the ghost still counts toward the budget split (k = 1)
        let expected = lcb(0.5, 50, 0.05 / 2.0).unwrap();
        assert_eq!(v.conditions[GOOD_GRADE_EUA].bound, expected);
    }

    #[test]
    fn empty_registry_reduces_to_sample_certification() {
        let t = uniform_transcript(0.9, 400);
        let c = Criterion::new(0.85, 0.01, 0.05).unwrap();
        let p3 = certify_uncertain_application(&t, &ExplanationRegistry::empty(), &c).unwrap();
        let p1 = certify_samples(&t, &c).unwrap();
        assert_eq!(p3.outcome, p1.outcome);
        assert_eq!(
            p3.conditions[GOOD_GRADE_EUA].bound,
            p1.conditions[GOOD_GRADE].bound
        );
        assert_eq!(p3.conditions[GOOD_RID].bound, p1.conditions[GOOD_RID].bound);
        assert_eq!(
            p3.conditions[BAD_GRADE_EUA].bound,
            p1.conditions[BAD_GRADE].bound
        );
        assert_eq!(p3.conditions[BAD_RID].bound, p1.conditions[BAD_RID].bound);
    }

    #[test]
    fn explained_transcript_driver_checks_scores_and_partitions() {
        let registry = ExplanationRegistry::new(vec![
            Explanation::new("alpha", 0.5, 0.6, None).unwrap(),
        ])
        .unwrap();
        let c = Criterion::new(0.5, 0.01, 0.05).unwrap();

        let mut records: Vec<AnswerRecord> = (0..50)
            .map(|i| record(&format!("t{i}"), 0.6).with_explanation("alpha"))
            .collect();
        records.extend((0..50).map(|i| record(&format!("u{i}"), 0.6)));
        let t = Transcript::from_records(records);
        let via_driver = certify_explained_transcript(&t, &registry, &c).unwrap();
        let direct =
            certify_with_explanations(&uniform_transcript(0.6, 50), &registry, &c).unwrap();
        // driver strips the tagged records; the residual the two paths see
        // differs only in question ids
        assert_eq!(via_driver, direct);

        let inconsistent = Transcript::from_records(vec![
            record("t0", 0.9).with_explanation("alpha"),
            record("u0", 0.6),
        ]);
        assert!(matches!(
            certify_explained_transcript(&inconsistent, &registry, &c),
            Err(Error::ScoreMismatch { .. })
        ));
    }

    #[test]
    fn online_stream_converges_to_batch_verdict() {
        let c = Criterion::new(0.5, 0.01, 0.05).unwrap();
        let mut state = OnlineState::new(c);

        // fresh state: full residual mass, no evidence, no conclusion
        let v0 = state.current_verdict().unwrap();
        assert_eq!(v0.outcome, Outcome::NoConclusion);
        assert_eq!(v0.conditions[GOOD_GRADE_EXP].bound, 0.0);
        assert_eq!(v0.conditions[BAD_GRADE_EXP].bound, 1.0);

        for i in 0..30 {
            online_update(&mut state, OnlineEvent::Record(record(&format!("q{i}"), 0.6)))
                .unwrap();
        }
        let covered: BTreeSet<String> = (0..10).map(|i| format!("q{i}")).collect();
        let v = online_update(
            &mut state,
            OnlineEvent::Explanation {
                explanation: Explanation::new("alpha", 0.5, 0.6, None).unwrap(),
                covered_ids: covered,
            },
        )
        .unwrap();
        assert_eq!(state.buffer().len(), 20);
        assert_abs_diff_eq!(state.residual_mass(), 0.5, epsilon = 1e-12);

        let batch =
            certify_with_explanations(&state.buffer_transcript(), &state.registry(), &c)
                .unwrap();
        assert_eq!(v, batch);
    }

    #[test]
    fn online_rejects_bad_events_without_corrupting_state() {
        let c = Criterion::new(0.5, 0.01, 0.05).unwrap();
        let mut state = OnlineState::new(c);
        online_update(&mut state, OnlineEvent::Record(record("q0", 0.6))).unwrap();

        assert!(matches!(
            online_update(
                &mut state,
                OnlineEvent::Record(record("q1", 0.6).with_explanation("alpha")),
            ),
            Err(Error::OnlineTaggedRecord(_))
        ));
        assert_eq!(state.buffer().len(), 1);

        online_update(
            &mut state,
            OnlineEvent::Explanation {
                explanation: Explanation::new("big", 0.9, 1.0, None).unwrap(),
                covered_ids: BTreeSet::new(),
            },
        )
        .unwrap();
        assert!(matches!(
            online_update(
                &mut state,
                OnlineEvent::Explanation {
                    explanation: Explanation::new("bigger", 0.2, 1.0, None).unwrap(),
                    covered_ids: BTreeSet::new(),
                },
            ),
            Err(Error::MassExceedsResidual { .. })
        ));
        assert!(matches!(
            online_update(
                &mut state,
                OnlineEvent::Explanation {
                    explanation: Explanation::new("big", 0.05, 1.0, None).unwrap(),
                    covered_ids: BTreeSet::new(),
                },
            ),
            Err(Error::InvalidRegistry(_))
        ));
        assert_eq!(state.registry().len(), 1);
        assert_abs_diff_eq!(state.residual_mass(), 0.1, epsilon = 1e-12);
    }

    #[test]
    fn covering_the_whole_buffer_degrades_to_vacuous_bounds() {
        let c = Criterion::new(0.5, 0.01, 0.05).unwrap();
        let mut state = OnlineState::new(c);
        online_update(&mut state, OnlineEvent::Record(record("q0", 0.6))).unwrap();
        let v = online_update(
            &mut state,
            OnlineEvent::Explanation {
                explanation: Explanation::new("alpha", 0.5, 0.6, None).unwrap(),
                covered_ids: BTreeSet::from(["q0".to_string()]),
            },
        )
        .unwrap();
        assert!(state.buffer().is_empty());
        assert_eq!(v.outcome, Outcome::NoConclusion);
        // residual term spans [0, 1]: grade bound bottoms out at the
        // deterministic mass, refutation bound tops out above it
        assert_abs_diff_eq!(v.conditions[GOOD_GRADE_EXP].bound, 0.3, epsilon = 1e-12);
        assert_abs_diff_eq!(v.conditions[BAD_GRADE_EXP].bound, 0.8, epsilon = 1e-12);
    }
}
