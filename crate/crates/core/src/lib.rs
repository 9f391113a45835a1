//! Certification of question-answering agents from scored transcripts.
//!
//! The question this crate answers: given a passing grade, a ridiculousness
//! threshold, and a failure budget delta, does the observed evidence prove
//! the agent clears the bar, prove it does not, or neither? Verdicts are
//! backed by exact Bernoulli-KL confidence bounds, so a rendered conclusion
//! is wrong with probability at most delta.
//!
//! - [`kl`]: the relative-entropy inversion the bounds are built on.
//! - [`domain`]: criteria, transcripts, explanations, registries.
//! - [`certify`]: the three certification procedures and the online
//!   incremental variant.
//! - [`sim`]: synthetic agents with known ground truth, for validating the
//!   failure-probability guarantee empirically.
//! - [`tables`]: reference tables of bound values.
//! - [`io`]: JSONL transcripts and JSON configuration documents.

pub mod certify;
pub mod domain;
pub mod error;
pub mod io;
pub mod kl;
pub mod sim;
pub mod tables;

pub use certify::{
    certify_explained_transcript, certify_samples, certify_uncertain_application,
    certify_with_explanations, online_update, ConditionCheck, OnlineEvent, OnlineState, Outcome,
    Procedure, Verdict,
};
pub use domain::{
    check_tagged_scores, partition_transcript, validate_explanations, validate_registry,
    Adherence, AnswerRecord, Criterion, Explanation, ExplanationRegistry, Transcript,
    TranscriptSummary, Violation,
};
pub use error::{Error, Result};
pub use kl::{
    bernoulli_kl, bounds, hoeffding_informative, hoeffding_lower, hoeffding_upper, lower_bound,
    rid_display, rid_from_test_length, upper_bound, BoundQuery, BoundResult, Probability,
};
