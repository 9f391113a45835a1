//! Inverse Bernoulli relative-entropy confidence bounds.
//!
//! For an empirical mean `p̂` of `n` independent `[0,1]`-valued samples and a
//! failure budget `δ`, the Chernoff bound in relative-entropy form says the
//! true mean `q` satisfies `d(p̂, q) ≤ ln(1/δ)/n` with probability at least
//! `1 − δ`, where `d` is the relative entropy between Bernoulli distributions
//! with parameters `p` and `q`:
//!
//! ```text
//! d(p, q) = p·ln(p/q) + (1−p)·ln((1−p)/(1−q))
//! ```
//!
//! extended to the boundary by its limits: `d(0, q) = ln(1/(1−q))`,
//! `d(1, q) = ln(1/q)`, `d(p, p) = 0` (including at 0 and 1), and `+∞`
//! whenever `q` sits on an endpoint that `p` gives positive mass against.
//!
//! Inverting the inequality gives the two bounds computed here:
//!
//! ```text
//! U(p̂, n, δ) = max{ q ∈ [0,1] : d(p̂, q) ≤ ln(1/δ)/n }
//! L(p̂, n, δ) = min{ q ∈ [0,1] : d(p̂, q) ≤ ln(1/δ)/n }
//! ```
//!
//! `d(p̂, ·)` is convex with its minimum 0 at `q = p̂`, so it is nondecreasing
//! on `[p̂, 1]` and nonincreasing on `[0, p̂]`; each branch is bisected
//! independently. The feasible set `{q : d ≤ v}` is closed (on the branch,
//! `d` is continuous and diverges to `+∞` at any excluded endpoint), so the
//! max and min are attained and bisection converges to the boundary root.
//! Closed forms cover the degenerate brackets: `U(0, n, δ) = 1 − δ^(1/n)`,
//! `U(1, ·, ·) = 1`, `L(1, n, δ) = δ^(1/n)`, `L(0, ·, ·) = 0`.
//!
//! The module also provides the ridiculousness threshold derived from a test
//! length (the largest per-question failure rate that keeps `n_t` questions
//! all clean with probability `1 − δ`) and the Hoeffding comparators
//! `p̂ ± sqrt(−ln(δ)/n)`, kept unclamped so uninformative values (below 0 or
//! above 1) stay visible.

use serde::{Deserialize, Serialize};
use std::fmt;

use crate::error::{Error, Result};

/// Absolute bisection tolerance in `q`.
pub const BISECTION_TOLERANCE: f64 = 1e-9;
/// Iteration cap; never binding for tolerance 1e-9 on a unit bracket.
pub const BISECTION_MAX_ITERATIONS: u32 = 200;

/// A validated probability in `[0,1]`. Construction rejects NaN and
/// out-of-range values.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Probability(f64);

impl Probability {
    pub const ZERO: Probability = Probability(0.0);
    pub const ONE: Probability = Probability(1.0);

    pub fn new(value: f64) -> Result<Self> {
        if value.is_nan() || !(0.0..=1.0).contains(&value) {
            return Err(Error::InvalidProbability(value));
        }
        Ok(Probability(value))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Probability {
    type Error = Error;

    fn try_from(value: f64) -> Result<Self> {
        Probability::new(value)
    }
}

impl From<Probability> for f64 {
    fn from(p: Probability) -> f64 {
        p.0
    }
}

impl fmt::Display for Probability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// The `(p̂, n, δ)` triple a bound is computed from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundQuery {
    p_hat: Probability,
    n: u64,
    delta: f64,
}

impl BoundQuery {
    pub fn new(p_hat: Probability, n: u64, delta: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidQuery("n must be at least 1".into()));
        }
        if !delta.is_finite() || delta <= 0.0 || delta >= 1.0 {
            return Err(Error::InvalidQuery(format!(
                "delta must lie strictly between 0 and 1, got {delta}"
            )));
        }
        Ok(BoundQuery { p_hat, n, delta })
    }

    pub fn p_hat(&self) -> Probability {
        self.p_hat
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// The divergence budget `ln(1/δ)/n`.
    pub fn radius_v(&self) -> f64 {
        -self.delta.ln() / self.n as f64
    }
}

/// Both inverse bounds for one query, with the divergence budget they used.
///
/// Invariant: `lower ≤ p̂ ≤ upper` for the generating query.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundResult {
    pub lower: Probability,
    pub upper: Probability,
    pub radius_v: f64,
}

/// Relative entropy `d(p, q)` between Bernoulli(`p`) and Bernoulli(`q`).
///
/// Returns `+∞` (a distinguished value, never an overflow) exactly when a
/// `p`-possible outcome has `q`-probability zero. Case order matters: the
/// `p == q` check first makes `d(0,0) = d(1,1) = 0`.
pub fn bernoulli_kl(p: Probability, q: Probability) -> f64 {
    let (p, q) = (p.value(), q.value());
    if p == q {
        return 0.0;
    }
    if p == 0.0 {
        // q != 0 here; q = 1 leaves no mass for the 0-outcome
        return if q == 1.0 { f64::INFINITY } else { -(1.0 - q).ln() };
    }
    if p == 1.0 {
        return if q == 0.0 { f64::INFINITY } else { -q.ln() };
    }
    if q == 0.0 || q == 1.0 {
        return f64::INFINITY;
    }
    p * (p / q).ln() + (1.0 - p) * ((1.0 - p) / (1.0 - q)).ln()
}

/// `U(p̂, n, δ)`: the largest candidate mean within the divergence budget.
pub fn upper_bound(query: &BoundQuery) -> Probability {
    let p = query.p_hat.value();
    if p == 1.0 {
        return Probability::ONE;
    }
    if p == 0.0 {
        // d(0, q) = ln(1/(1−q)) ≤ v  ⟺  q ≤ 1 − e^(−v) = 1 − δ^(1/n)
        let u = 1.0 - query.delta.powf(1.0 / query.n as f64);
        return Probability(u.clamp(0.0, 1.0));
    }
    let v = query.radius_v();
    // invariant: d(p, lo) ≤ v < d(p, hi); d(p, 1) = +∞ keeps hi infeasible
    let mut lo = p;
    let mut hi = 1.0;
    let mut iterations = 0;
    while hi - lo > BISECTION_TOLERANCE && iterations < BISECTION_MAX_ITERATIONS {
        let mid = 0.5 * (lo + hi);
        if bernoulli_kl(query.p_hat, Probability(mid)) <= v {
            lo = mid;
        } else {
            hi = mid;
        }
        iterations += 1;
    }
    Probability(0.5 * (lo + hi))
}

/// `L(p̂, n, δ)`: the smallest candidate mean within the divergence budget.
pub fn lower_bound(query: &BoundQuery) -> Probability {
    let p = query.p_hat.value();
    if p == 0.0 {
        return Probability::ZERO;
    }
    if p == 1.0 {
        // d(1, q) = ln(1/q) ≤ v  ⟺  q ≥ e^(−v) = δ^(1/n)
        let l = query.delta.powf(1.0 / query.n as f64);
        return Probability(l.clamp(0.0, 1.0));
    }
    let v = query.radius_v();
    // invariant: d(p, lo) > v ≥ d(p, hi); d(p, 0) = +∞ keeps lo infeasible
    let mut lo = 0.0;
    let mut hi = p;
    let mut iterations = 0;
    while hi - lo > BISECTION_TOLERANCE && iterations < BISECTION_MAX_ITERATIONS {
        let mid = 0.5 * (lo + hi);
        if bernoulli_kl(query.p_hat, Probability(mid)) <= v {
            hi = mid;
        } else {
            lo = mid;
        }
        iterations += 1;
    }
    Probability(0.5 * (lo + hi))
}

/// Both bounds at once.
pub fn bounds(query: &BoundQuery) -> BoundResult {
    BoundResult {
        lower: lower_bound(query),
        upper: upper_bound(query),
        radius_v: query.radius_v(),
    }
}

/// The largest per-question ridiculousness rate that keeps a test of
/// `n_t` questions free of ridiculous answers with probability `1 − δ`:
/// solving `(1 − RID)^n_t = 1 − δ` gives `RID = 1 − exp(ln(1−δ)/n_t)`.
pub fn rid_from_test_length(n_t: u64, delta: f64) -> Result<Probability> {
    if n_t == 0 {
        return Err(Error::InvalidQuery("test length must be at least 1".into()));
    }
    if !delta.is_finite() || delta <= 0.0 || delta >= 1.0 {
        return Err(Error::InvalidQuery(format!(
            "delta must lie strictly between 0 and 1, got {delta}"
        )));
    }
    // -expm1 keeps precision when ln(1−δ)/n_t is tiny
    let rid = -((1.0 - delta).ln() / n_t as f64).exp_m1();
    Probability::new(rid)
}

/// Display form for a derived threshold: ceiling at two significant digits,
/// so the printed value never understates the exact one.
pub fn rid_display(rid: f64) -> String {
    if rid <= 0.0 {
        return "0".to_string();
    }
    let exponent = rid.log10().floor() as i32;
    let scale = 10f64.powi(exponent - 1);
    let ceiled = (rid / scale).ceil() * scale;
    let decimals = (1 - exponent).max(0) as usize;
    format!("{ceiled:.decimals$}")
}

/// Hoeffding lower comparator `p̂ − sqrt(−ln(δ)/n)`, unclamped: values below
/// 0 signal an uninformative bound and are returned as-is.
pub fn hoeffding_lower(p_hat: Probability, n: u64, delta: f64) -> f64 {
    p_hat.value() - hoeffding_radius(n, delta)
}

/// Hoeffding upper comparator `p̂ + sqrt(−ln(δ)/n)`, unclamped.
pub fn hoeffding_upper(p_hat: Probability, n: u64, delta: f64) -> f64 {
    p_hat.value() + hoeffding_radius(n, delta)
}

/// Whether an unclamped Hoeffding comparator actually constrains a
/// probability.
pub fn hoeffding_informative(value: f64) -> bool {
    (0.0..=1.0).contains(&value)
}

fn hoeffding_radius(n: u64, delta: f64) -> f64 {
    (-delta.ln() / n as f64).sqrt()
}
