//! Synthetic agents with known ground truth, and measurement of how often
//! certification gets them wrong.
//!
//! An agent is a mixture: each explanation covers a slice of the question
//! distribution where the agent adheres to the declared procedure with some
//! probability (scoring the declared value) and otherwise answers from an
//! off-procedure score distribution; the residual slice draws from the
//! agent's own score distribution. True score and ridiculousness are closed
//! form, so every rendered verdict can be judged against the truth.
//!
//! Trials are reproducible under parallelism: each trial seeds its own RNG
//! from the master seed and selects a per-trial stream, so results do not
//! depend on scheduling or worker count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::certify::{
    certify_explained_transcript, certify_samples, certify_uncertain_application, Outcome,
    Procedure,
};
use crate::domain::{
    Adherence, AnswerRecord, Criterion, Explanation, ExplanationRegistry, Transcript,
    MASS_TOLERANCE,
};
use crate::error::{Error, Result};

/// Weights must sum to 1 within this tolerance.
pub const WEIGHT_TOLERANCE: f64 = 1e-9;

/// One outcome of a discrete score distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreAtom {
    pub score: f64,
    pub weight: f64,
}

/// An explanation as the agent actually behaves: declared coverage and
/// score, the probability of adhering to the procedure on covered
/// questions, and what the agent scores when it deviates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentExplanation {
    pub id: String,
    pub coverage_mass: f64,
    pub score: f64,
    #[serde(default = "default_adherence_prob")]
    pub adherence_prob: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub off_score_atoms: Vec<ScoreAtom>,
}

fn default_adherence_prob() -> f64 {
    1.0
}

/// A fully specified agent: residual score distribution, explanation
/// behaviors, and a default sampling seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticAgent {
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub score_atoms: Vec<ScoreAtom>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub explanations: Vec<AgentExplanation>,
}

fn check_atoms(context: &str, atoms: &[ScoreAtom]) -> Result<()> {
    if atoms.is_empty() {
        return Err(Error::InvalidAgent(format!(
            "{context}: score distribution is empty"
        )));
    }
    let mut total = 0.0;
    for a in atoms {
        if !a.score.is_finite() || !(0.0..=1.0).contains(&a.score) {
            return Err(Error::InvalidAgent(format!(
                "{context}: score {} outside [0,1]",
                a.score
            )));
        }
        if !a.weight.is_finite() || a.weight < 0.0 {
            return Err(Error::InvalidAgent(format!(
                "{context}: weight {} is negative",
                a.weight
            )));
        }
        total += a.weight;
    }
    if (total - 1.0).abs() > WEIGHT_TOLERANCE {
        return Err(Error::InvalidAgent(format!(
            "{context}: weights sum to {total}, expected 1"
        )));
    }
    Ok(())
}

fn atom_mean(atoms: &[ScoreAtom]) -> f64 {
    atoms.iter().map(|a| a.weight * a.score).sum()
}

fn atom_zero_mass(atoms: &[ScoreAtom]) -> f64 {
    atoms
        .iter()
        .filter(|a| a.score == 0.0)
        .map(|a| a.weight)
        .sum()
}

fn draw_atom(atoms: &[ScoreAtom], rng: &mut ChaCha8Rng) -> f64 {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for a in atoms {
        acc += a.weight;
        if u < acc {
            return a.score;
        }
    }
    // u landed in the rounding sliver past the last cumulative weight
    atoms.last().expect("validated nonempty").score
}

impl SyntheticAgent {
    pub fn validate(&self) -> Result<()> {
        let mut total_mass = 0.0;
        let mut ids = std::collections::BTreeSet::new();
        for e in &self.explanations {
            if !ids.insert(e.id.as_str()) {
                return Err(Error::InvalidAgent(format!(
                    "duplicate explanation id `{}`",
                    e.id
                )));
            }
            if !e.coverage_mass.is_finite() || !(0.0..=1.0).contains(&e.coverage_mass) {
                return Err(Error::InvalidAgent(format!(
                    "explanation `{}`: coverage_mass {} outside [0,1]",
                    e.id, e.coverage_mass
                )));
            }
            if !e.score.is_finite() || !(0.0..=1.0).contains(&e.score) {
                return Err(Error::InvalidAgent(format!(
                    "explanation `{}`: score {} outside [0,1]",
                    e.id, e.score
                )));
            }
            if !e.adherence_prob.is_finite() || !(0.0..=1.0).contains(&e.adherence_prob) {
                return Err(Error::InvalidAgent(format!(
                    "explanation `{}`: adherence_prob {} outside [0,1]",
                    e.id, e.adherence_prob
                )));
            }
            if e.adherence_prob < 1.0 || !e.off_score_atoms.is_empty() {
                check_atoms(&format!("explanation `{}` off-procedure", e.id), &e.off_score_atoms)?;
            }
            total_mass += e.coverage_mass;
        }
        if total_mass > 1.0 + MASS_TOLERANCE {
            return Err(Error::InvalidAgent(format!(
                "explanation coverage sums to {total_mass}, exceeding 1"
            )));
        }
        if self.residual_mass() > 0.0 || !self.score_atoms.is_empty() {
            check_atoms("residual", &self.score_atoms)?;
        }
        Ok(())
    }

    pub fn residual_mass(&self) -> f64 {
        let total: f64 = self.explanations.iter().map(|e| e.coverage_mass).sum();
        let residual = (1.0 - total).max(0.0);
        if residual < MASS_TOLERANCE {
            0.0
        } else {
            residual
        }
    }

    /// Ground-truth expected score and ridiculousness probability.
    pub fn true_stats(&self) -> (f64, f64) {
        let mut s = 0.0;
        let mut r = 0.0;
        for e in &self.explanations {
            let (off_mean, off_zero) = if e.off_score_atoms.is_empty() {
                (0.0, 0.0)
            } else {
                (atom_mean(&e.off_score_atoms), atom_zero_mass(&e.off_score_atoms))
            };
            s += e.coverage_mass * (e.adherence_prob * e.score + (1.0 - e.adherence_prob) * off_mean);
            let on_zero = if e.score == 0.0 { 1.0 } else { 0.0 };
            r += e.coverage_mass * (e.adherence_prob * on_zero + (1.0 - e.adherence_prob) * off_zero);
        }
        let p_res = self.residual_mass();
        if p_res > 0.0 {
            s += p_res * atom_mean(&self.score_atoms);
            r += p_res * atom_zero_mass(&self.score_atoms);
        }
        (s, r)
    }

    /// The registry this agent claims: declared masses and scores, no
    /// adherence observations.
    pub fn declared_registry(&self) -> Result<ExplanationRegistry> {
        let explanations = self
            .explanations
            .iter()
            .map(|e| Explanation::new(&e.id, e.coverage_mass, e.score, None))
            .collect::<Result<Vec<_>>>()?;
        ExplanationRegistry::new(explanations)
    }
}

struct SampleOutput {
    records: Vec<AnswerRecord>,
    adherence: Vec<Adherence>,
}

fn sample_records(agent: &SyntheticAgent, n: u64, rng: &mut ChaCha8Rng) -> SampleOutput {
    let mut adherence = vec![Adherence { uses: 0, probes: 0 }; agent.explanations.len()];
    let mut records = Vec::with_capacity(n as usize);
    for i in 0..n {
        let question_id = format!("q{i:06}");
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut chosen = None;
        for (j, e) in agent.explanations.iter().enumerate() {
            acc += e.coverage_mass;
            if u < acc {
                chosen = Some(j);
                break;
            }
        }
        if chosen.is_none() && agent.score_atoms.is_empty() {
            // full-coverage agent: the rounding sliver past the cumulative
            // masses belongs to the last explanation
            chosen = Some(agent.explanations.len() - 1);
        }
        let record = match chosen {
            Some(j) => {
                let e = &agent.explanations[j];
                adherence[j].probes += 1;
                let score = if rng.random::<f64>() < e.adherence_prob {
                    adherence[j].uses += 1;
                    e.score
                } else {
                    draw_atom(&e.off_score_atoms, rng)
                };
                AnswerRecord::new(question_id, score)
                    .expect("agent scores validated")
                    .with_explanation(&e.id)
            }
            None => AnswerRecord::new(question_id, draw_atom(&agent.score_atoms, rng))
                .expect("agent scores validated"),
        };
        records.push(record);
    }
    SampleOutput { records, adherence }
}

/// Sample a transcript of n answers.
pub fn sample_transcript(agent: &SyntheticAgent, n: u64, seed: u64) -> Result<Transcript> {
    agent.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(Transcript::from_records(
        sample_records(agent, n, &mut rng).records,
    ))
}

/// Sample a transcript together with the registry carrying the adherence
/// counts observed during sampling (probes = covered questions seen, uses =
/// those answered by the declared procedure).
pub fn sample_transcript_with_registry(
    agent: &SyntheticAgent,
    n: u64,
    seed: u64,
) -> Result<(Transcript, ExplanationRegistry)> {
    agent.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let out = sample_records(agent, n, &mut rng);
    let explanations = agent
        .explanations
        .iter()
        .zip(out.adherence)
        .map(|(e, a)| Explanation::new(&e.id, e.coverage_mass, e.score, Some(a)))
        .collect::<Result<Vec<_>>>()?;
    Ok((
        Transcript::from_records(out.records),
        ExplanationRegistry::new(explanations)?,
    ))
}

/// How a batch of certification trials went against the agent's ground
/// truth. A wrong verdict is a rendered conclusion that contradicts the
/// truth; NoConclusion is never wrong, and trials whose evidence was
/// unusable (certification errored) count as NoConclusion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoverageReport {
    pub procedure: Procedure,
    pub n: u64,
    pub trials: u64,
    pub wrong_verdicts: u64,
    pub no_conclusions: u64,
    pub empirical_failure_rate: f64,
    pub delta: f64,
    pub true_score: f64,
    pub true_ridiculousness: f64,
    pub truth_understands: bool,
}

fn run_trial(
    agent: &SyntheticAgent,
    criterion: &Criterion,
    procedure: Procedure,
    declared: &ExplanationRegistry,
    n: u64,
    rng: &mut ChaCha8Rng,
) -> Outcome {
    let out = sample_records(agent, n, rng);
    let transcript = Transcript::from_records(out.records);
    let verdict = match procedure {
        Procedure::Samples => certify_samples(&transcript, criterion),
        Procedure::Explanations => certify_explained_transcript(&transcript, declared, criterion),
        Procedure::UncertainAdherence => {
            let observed: Result<Vec<Explanation>> = agent
                .explanations
                .iter()
                .zip(out.adherence)
                .map(|(e, a)| Explanation::new(&e.id, e.coverage_mass, e.score, Some(a)))
                .collect();
            observed
                .and_then(ExplanationRegistry::new)
                .and_then(|reg| certify_uncertain_application(&transcript, &reg, criterion))
        }
    };
    verdict.map(|v| v.outcome).unwrap_or(Outcome::NoConclusion)
}

#[allow(clippy::too_many_arguments)]
fn failure_counts(
    agent: &SyntheticAgent,
    criterion: &Criterion,
    procedure: Procedure,
    declared: &ExplanationRegistry,
    truth_understands: bool,
    n: u64,
    trials: u64,
    master_seed: u64,
    stream_offset: u64,
) -> (u64, u64) {
    (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
            rng.set_stream(stream_offset + trial);
            let outcome = run_trial(agent, criterion, procedure, declared, n, &mut rng);
            let wrong = match outcome {
                Outcome::Understands => !truth_understands,
                Outcome::DoesNotUnderstand => truth_understands,
                Outcome::NoConclusion => false,
            };
            (u64::from(wrong), u64::from(outcome == Outcome::NoConclusion))
        })
        .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1))
}

/// Run repeated certifications of a known agent and count wrong verdicts.
/// The guarantee under test is that the wrong-verdict probability stays at
/// or below delta; an agent sitting exactly on a threshold is rejected
/// because the guarantee says nothing there.
pub fn validate_coverage(
    agent: &SyntheticAgent,
    criterion: &Criterion,
    procedure: Procedure,
    n: u64,
    trials: u64,
    master_seed: u64,
) -> Result<CoverageReport> {
    agent.validate()?;
    if n == 0 || trials == 0 {
        return Err(Error::InvalidQuery(
            "n and trials must be positive".to_string(),
        ));
    }
    let (s, r) = agent.true_stats();
    if s == criterion.pg() || r == criterion.rid() {
        return Err(Error::BoundaryCase(format!(
            "true score {s} and ridiculousness {r} against pg {} rid {}",
            criterion.pg(),
            criterion.rid()
        )));
    }
    let truth_understands = s >= criterion.pg() && r <= criterion.rid();
    let declared = agent.declared_registry()?;
    let (wrong, nc) = failure_counts(
        agent,
        criterion,
        procedure,
        &declared,
        truth_understands,
        n,
        trials,
        master_seed,
        0,
    );
    Ok(CoverageReport {
        procedure,
        n,
        trials,
        wrong_verdicts: wrong,
        no_conclusions: nc,
        empirical_failure_rate: wrong as f64 / trials as f64,
        delta: criterion.delta(),
        true_score: s,
        true_ridiculousness: r,
        truth_understands,
    })
}

/// NoConclusion frequency as evidence grows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EfficiencyPoint {
    pub n: u64,
    pub no_conclusion_rate: f64,
}

/// Measure how often each sample size fails to reach a conclusion. Trial
/// streams are disjoint across grid points, so the curve is reproducible
/// point by point.
pub fn sample_efficiency_curve(
    agent: &SyntheticAgent,
    criterion: &Criterion,
    procedure: Procedure,
    n_grid: &[u64],
    trials: u64,
    master_seed: u64,
) -> Result<Vec<EfficiencyPoint>> {
    agent.validate()?;
    if n_grid.is_empty() || trials == 0 || n_grid.contains(&0) {
        return Err(Error::InvalidQuery(
            "n_grid must be nonempty with positive n, trials must be positive".to_string(),
        ));
    }
    let (s, r) = agent.true_stats();
    let truth_understands = s >= criterion.pg() && r <= criterion.rid();
    let declared = agent.declared_registry()?;
    let mut curve = Vec::with_capacity(n_grid.len());
    for (idx, &n) in n_grid.iter().enumerate() {
        let (_wrong, nc) = failure_counts(
            agent,
            criterion,
            procedure,
            &declared,
            truth_understands,
            n,
            trials,
            master_seed,
            idx as u64 * trials,
        );
        curve.push(EfficiencyPoint {
            n,
            no_conclusion_rate: nc as f64 / trials as f64,
        });
    }
    Ok(curve)
}
