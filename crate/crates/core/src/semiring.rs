//! Scalar semirings used as the ground set of every tensor value.
//!
//! Each semiring is a zero-sized (or near zero-sized) type implementing
//! [`Semiring`]; values are the associated `Elem` type. Runtime selection by
//! name goes through [`SemiringKind`].

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde_json::{json, Value as Json};

use crate::error::{Error, Result};
use crate::grammar::RuleId;

/// Default absolute tolerance for floating point comparisons.
pub const DEFAULT_TOLERANCE: f64 = 1e-9;

/// A commutative monoid `(add, zero)` and a monoid `(mul, one)` where `mul`
/// distributes over `add` and `zero` annihilates.
pub trait Semiring: Clone + fmt::Debug + Send + Sync {
    type Elem: Clone + fmt::Debug + PartialEq + Send + Sync;

    fn name(&self) -> &'static str;
    fn zero(&self) -> Self::Elem;
    fn one(&self) -> Self::Elem;
    fn add(&self, a: &Self::Elem, b: &Self::Elem) -> Self::Elem;
    fn mul(&self, a: &Self::Elem, b: &Self::Elem) -> Self::Elem;

    fn is_commutative(&self) -> bool;
    fn is_idempotent(&self) -> bool;
    fn is_omega_continuous(&self) -> bool;

    /// Equality used for axiom checks and fixpoint convergence. Exact unless
    /// the semiring is floating point.
    fn approx_eq(&self, a: &Self::Elem, b: &Self::Elem, _tolerance: f64) -> bool {
        a == b
    }

    /// `a ⊑ b` iff there is some `z` with `a + z = b`.
    fn natural_leq(&self, _a: &Self::Elem, _b: &Self::Elem) -> Result<bool> {
        Err(Error::Unsupported(format!(
            "semiring {} has no decidable natural order",
            self.name()
        )))
    }

    /// Parses one weight token of a grammar file. `rule` is the rule the
    /// weight belongs to, which derivation-tracking semirings record.
    fn parse_weight(&self, token: &str, rule: RuleId) -> std::result::Result<Self::Elem, String>;

    fn format_value(&self, v: &Self::Elem) -> String;
    fn value_to_json(&self, v: &Self::Elem) -> Json;
    fn value_from_json(&self, j: &Json) -> Option<Self::Elem>;

    fn is_zero(&self, v: &Self::Elem) -> bool {
        *v == self.zero()
    }

    fn properties(&self) -> SemiringProperties {
        SemiringProperties {
            commutative: self.is_commutative(),
            idempotent: self.is_idempotent(),
            omega_continuous: self.is_omega_continuous(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SemiringProperties {
    pub commutative: bool,
    pub idempotent: bool,
    pub omega_continuous: bool,
}

/// The shipped semirings, selectable by name.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SemiringKind {
    Boolean,
    Counting,
    Probability,
    Viterbi,
    Log,
    ViterbiDerivation,
}

impl SemiringKind {
    pub const ALL: [SemiringKind; 6] = [
        SemiringKind::Boolean,
        SemiringKind::Counting,
        SemiringKind::Probability,
        SemiringKind::Viterbi,
        SemiringKind::Log,
        SemiringKind::ViterbiDerivation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SemiringKind::Boolean => "boolean",
            SemiringKind::Counting => "counting",
            SemiringKind::Probability => "probability",
            SemiringKind::Viterbi => "viterbi",
            SemiringKind::Log => "log",
            SemiringKind::ViterbiDerivation => "viterbi-derivation",
        }
    }

    pub fn properties(self) -> SemiringProperties {
        match self {
            SemiringKind::Boolean => Boolean.properties(),
            SemiringKind::Counting => Counting.properties(),
            SemiringKind::Probability => Probability.properties(),
            SemiringKind::Viterbi => Viterbi.properties(),
            SemiringKind::Log => Log.properties(),
            SemiringKind::ViterbiDerivation => ViterbiDerivation.properties(),
        }
    }
}

impl FromStr for SemiringKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SemiringKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::UnknownSemiring(s.to_string()))
    }
}

impl fmt::Display for SemiringKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Looks up a semiring by its identifier.
pub fn make_semiring(name: &str) -> Result<SemiringKind> {
    name.parse()
}

fn parse_real(token: &str) -> std::result::Result<f64, String> {
    let x: f64 = token
        .parse()
        .map_err(|_| format!("`{token}` is not a real number"))?;
    if !x.is_finite() || x < 0.0 {
        return Err(format!("`{token}` is not a non-negative real"));
    }
    Ok(x)
}

fn real_to_json(x: f64) -> Json {
    if x.is_finite() {
        json!(x)
    } else if x == f64::NEG_INFINITY {
        json!("-inf")
    } else if x == f64::INFINITY {
        json!("inf")
    } else {
        json!("nan")
    }
}

fn real_from_json(j: &Json) -> Option<f64> {
    match j {
        Json::Number(n) => n.as_f64(),
        Json::String(s) => match s.as_str() {
            "-inf" => Some(f64::NEG_INFINITY),
            "inf" => Some(f64::INFINITY),
            _ => None,
        },
        _ => None,
    }
}

/// `({F, T}, ∨, ∧, F, T)`
#[derive(Clone, Copy, Debug, Default)]
pub struct Boolean;

impl Semiring for Boolean {
    type Elem = bool;

    fn name(&self) -> &'static str {
        "boolean"
    }
    fn zero(&self) -> bool {
        false
    }
    fn one(&self) -> bool {
        true
    }
    fn add(&self, a: &bool, b: &bool) -> bool {
        *a || *b
    }
    fn mul(&self, a: &bool, b: &bool) -> bool {
        *a && *b
    }
    fn is_commutative(&self) -> bool {
        true
    }
    fn is_idempotent(&self) -> bool {
        true
    }
    fn is_omega_continuous(&self) -> bool {
        true
    }
    fn natural_leq(&self, a: &bool, b: &bool) -> Result<bool> {
        Ok(!*a || *b)
    }
    fn parse_weight(&self, token: &str, _rule: RuleId) -> std::result::Result<bool, String> {
        match token {
            "T" => Ok(true),
            "F" => Ok(false),
            // Numeric weights are read as their support.
            _ => parse_real(token)
                .map(|x| x > 0.0)
                .map_err(|_| format!("`{token}` is not a boolean (T/F)")),
        }
    }
    fn format_value(&self, v: &bool) -> String {
        if *v { "T" } else { "F" }.to_string()
    }
    fn value_to_json(&self, v: &bool) -> Json {
        json!(v)
    }
    fn value_from_json(&self, j: &Json) -> Option<bool> {
        j.as_bool()
    }
}

/// Natural numbers with saturating `+` and `×`; `u64::MAX` stands in for ∞.
#[derive(Clone, Copy, Debug, Default)]
pub struct Counting;

impl Semiring for Counting {
    type Elem = u64;

    fn name(&self) -> &'static str {
        "counting"
    }
    fn zero(&self) -> u64 {
        0
    }
    fn one(&self) -> u64 {
        1
    }
    fn add(&self, a: &u64, b: &u64) -> u64 {
        a.saturating_add(*b)
    }
    fn mul(&self, a: &u64, b: &u64) -> u64 {
        a.saturating_mul(*b)
    }
    fn is_commutative(&self) -> bool {
        true
    }
    fn is_idempotent(&self) -> bool {
        false
    }
    fn is_omega_continuous(&self) -> bool {
        true
    }
    fn natural_leq(&self, a: &u64, b: &u64) -> Result<bool> {
        Ok(a <= b)
    }
    fn parse_weight(&self, token: &str, _rule: RuleId) -> std::result::Result<u64, String> {
        token
            .parse()
            .map_err(|_| format!("`{token}` is not a non-negative integer"))
    }
    fn format_value(&self, v: &u64) -> String {
        v.to_string()
    }
    fn value_to_json(&self, v: &u64) -> Json {
        json!(v)
    }
    fn value_from_json(&self, j: &Json) -> Option<u64> {
        j.as_u64()
    }
}

/// Non-negative reals with ordinary `+` and `×`.
#[derive(Clone, Copy, Debug, Default)]
pub struct Probability;

impl Semiring for Probability {
    type Elem = f64;

    fn name(&self) -> &'static str {
        "probability"
    }
    fn zero(&self) -> f64 {
        0.0
    }
    fn one(&self) -> f64 {
        1.0
    }
    fn add(&self, a: &f64, b: &f64) -> f64 {
        a + b
    }
    fn mul(&self, a: &f64, b: &f64) -> f64 {
        a * b
    }
    fn is_commutative(&self) -> bool {
        true
    }
    fn is_idempotent(&self) -> bool {
        false
    }
    fn is_omega_continuous(&self) -> bool {
        true
    }
    fn approx_eq(&self, a: &f64, b: &f64, tolerance: f64) -> bool {
        a == b || (a - b).abs() <= tolerance
    }
    fn natural_leq(&self, a: &f64, b: &f64) -> Result<bool> {
        Ok(a <= b)
    }
    fn parse_weight(&self, token: &str, _rule: RuleId) -> std::result::Result<f64, String> {
        parse_real(token)
    }
    fn format_value(&self, v: &f64) -> String {
        v.to_string()
    }
    fn value_to_json(&self, v: &f64) -> Json {
        real_to_json(*v)
    }
    fn value_from_json(&self, j: &Json) -> Option<f64> {
        real_from_json(j)
    }
}

/// Best-derivation probability: `([0,1], max, ×, 0, 1)`.
#[derive(Clone, Copy, Debug, Default)]
pub struct Viterbi;

impl Semiring for Viterbi {
    type Elem = f64;

    fn name(&self) -> &'static str {
        "viterbi"
    }
    fn zero(&self) -> f64 {
        0.0
    }
    fn one(&self) -> f64 {
        1.0
    }
    fn add(&self, a: &f64, b: &f64) -> f64 {
        a.max(*b)
    }
    fn mul(&self, a: &f64, b: &f64) -> f64 {
        a * b
    }
    fn is_commutative(&self) -> bool {
        true
    }
    fn is_idempotent(&self) -> bool {
        true
    }
    fn is_omega_continuous(&self) -> bool {
        true
    }
    fn approx_eq(&self, a: &f64, b: &f64, tolerance: f64) -> bool {
        a == b || (a - b).abs() <= tolerance
    }
    fn natural_leq(&self, a: &f64, b: &f64) -> Result<bool> {
        Ok(a <= b)
    }
    fn parse_weight(&self, token: &str, _rule: RuleId) -> std::result::Result<f64, String> {
        let x = parse_real(token)?;
        if x > 1.0 {
            return Err(format!("viterbi weight `{token}` exceeds 1"));
        }
        Ok(x)
    }
    fn format_value(&self, v: &f64) -> String {
        v.to_string()
    }
    fn value_to_json(&self, v: &f64) -> Json {
        real_to_json(*v)
    }
    fn value_from_json(&self, j: &Json) -> Option<f64> {
        real_from_json(j)
    }
}

/// Log-domain probabilities: `(ℝ ∪ {−∞}, logsumexp, +, −∞, 0)`.
///
/// Grammar-file tokens are plain probabilities and are stored as their
/// natural log.
#[derive(Clone, Copy, Debug, Default)]
pub struct Log;

impl Semiring for Log {
    type Elem = f64;

    fn name(&self) -> &'static str {
        "log"
    }
    fn zero(&self) -> f64 {
        f64::NEG_INFINITY
    }
    fn one(&self) -> f64 {
        0.0
    }
    fn add(&self, a: &f64, b: &f64) -> f64 {
        let (hi, lo) = if a >= b { (*a, *b) } else { (*b, *a) };
        if lo == f64::NEG_INFINITY {
            return hi;
        }
        hi + (lo - hi).exp().ln_1p()
    }
    fn mul(&self, a: &f64, b: &f64) -> f64 {
        if *a == f64::NEG_INFINITY || *b == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            a + b
        }
    }
    fn is_commutative(&self) -> bool {
        true
    }
    fn is_idempotent(&self) -> bool {
        false
    }
    fn is_omega_continuous(&self) -> bool {
        true
    }
    fn approx_eq(&self, a: &f64, b: &f64, tolerance: f64) -> bool {
        a == b || (a - b).abs() <= tolerance
    }
    fn natural_leq(&self, a: &f64, b: &f64) -> Result<bool> {
        Ok(a <= b)
    }
    fn parse_weight(&self, token: &str, _rule: RuleId) -> std::result::Result<f64, String> {
        parse_real(token).map(f64::ln)
    }
    fn format_value(&self, v: &f64) -> String {
        v.to_string()
    }
    fn value_to_json(&self, v: &f64) -> Json {
        real_to_json(*v)
    }
    fn value_from_json(&self, j: &Json) -> Option<f64> {
        real_from_json(j)
    }
}

/// A best derivation: its probability and the rule sequence that achieves it.
#[derive(Clone, Debug, PartialEq)]
pub struct BestDerivation {
    pub score: f64,
    pub rules: Vec<RuleId>,
}

impl BestDerivation {
    pub fn new(score: f64, rules: Vec<RuleId>) -> Self {
        if score == 0.0 {
            BestDerivation {
                score: 0.0,
                rules: Vec::new(),
            }
        } else {
            BestDerivation { score, rules }
        }
    }

    /// Ordering by preference: higher score first, ties go to the shorter
    /// rule sequence, then the lexicographically smaller one.
    fn preference(&self, other: &Self) -> Ordering {
        other
            .score
            .total_cmp(&self.score)
            .then(self.rules.len().cmp(&other.rules.len()))
            .then_with(|| self.rules.cmp(&other.rules))
    }
}

/// Viterbi semiring that also carries the winning rule sequence. `mul`
/// concatenates sequences, so it is not commutative.
#[derive(Clone, Copy, Debug, Default)]
pub struct ViterbiDerivation;

impl Semiring for ViterbiDerivation {
    type Elem = BestDerivation;

    fn name(&self) -> &'static str {
        "viterbi-derivation"
    }
    fn zero(&self) -> BestDerivation {
        BestDerivation::new(0.0, Vec::new())
    }
    fn one(&self) -> BestDerivation {
        BestDerivation::new(1.0, Vec::new())
    }
    fn add(&self, a: &BestDerivation, b: &BestDerivation) -> BestDerivation {
        match a.preference(b) {
            Ordering::Greater => b.clone(),
            _ => a.clone(),
        }
    }
    fn mul(&self, a: &BestDerivation, b: &BestDerivation) -> BestDerivation {
        let score = a.score * b.score;
        if score == 0.0 {
            return self.zero();
        }
        let mut rules = Vec::with_capacity(a.rules.len() + b.rules.len());
        rules.extend_from_slice(&a.rules);
        rules.extend_from_slice(&b.rules);
        BestDerivation { score, rules }
    }
    fn is_commutative(&self) -> bool {
        false
    }
    fn is_idempotent(&self) -> bool {
        true
    }
    fn is_omega_continuous(&self) -> bool {
        true
    }
    fn approx_eq(&self, a: &BestDerivation, b: &BestDerivation, tolerance: f64) -> bool {
        (a.score == b.score || (a.score - b.score).abs() <= tolerance) && a.rules == b.rules
    }
    fn natural_leq(&self, a: &BestDerivation, b: &BestDerivation) -> Result<bool> {
        Ok(a.preference(b) != Ordering::Less || a == b)
    }
    fn parse_weight(
        &self,
        token: &str,
        rule: RuleId,
    ) -> std::result::Result<BestDerivation, String> {
        let x = Viterbi.parse_weight(token, rule)?;
        Ok(BestDerivation::new(x, vec![rule]))
    }
    fn format_value(&self, v: &BestDerivation) -> String {
        let rules: Vec<String> = v.rules.iter().map(ToString::to_string).collect();
        format!("{}<{}>", v.score, rules.join(" "))
    }
    fn value_to_json(&self, v: &BestDerivation) -> Json {
        let rules: Vec<String> = v.rules.iter().map(ToString::to_string).collect();
        json!({ "score": real_to_json(v.score), "rules": rules })
    }
    fn value_from_json(&self, j: &Json) -> Option<BestDerivation> {
        let score = real_from_json(j.get("score")?)?;
        let rules = j
            .get("rules")?
            .as_array()?
            .iter()
            .map(|r| r.as_str()?.parse().ok())
            .collect::<Option<Vec<RuleId>>>()?;
        Some(BestDerivation::new(score, rules))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(i: usize) -> RuleId {
        RuleId(i)
    }

    #[test]
    fn make_semiring_by_name() {
        for kind in SemiringKind::ALL {
            assert_eq!(make_semiring(kind.name()).unwrap(), kind);
        }
        assert!(matches!(
            make_semiring("tropical"),
            Err(Error::UnknownSemiring(_))
        ));
    }

    #[test]
    fn boolean_ops() {
        assert!(Boolean.add(&true, &false));
        assert!(!Boolean.mul(&true, &false));
    }

    #[test]
    fn viterbi_add_is_max() {
        assert_eq!(Viterbi.add(&0.3, &0.7), 0.7);
    }

    #[test]
    fn natural_order_examples() {
        assert!(Probability.natural_leq(&0.2, &0.5).unwrap());
        assert!(Boolean.natural_leq(&false, &true).unwrap());
        assert!(!Counting.natural_leq(&5, &3).unwrap());
        assert!(!Boolean.natural_leq(&true, &false).unwrap());
    }

    #[test]
    fn log_add_is_stable() {
        let a = -1000.0;
        let b = -1000.0;
        let s = Log.add(&a, &b);
        assert!((s - (-1000.0 + 2f64.ln())).abs() < 1e-12);
        assert_eq!(Log.add(&Log.zero(), &-3.0), -3.0);
        assert_eq!(Log.mul(&Log.zero(), &-3.0), Log.zero());
    }

    #[test]
    fn log_weights_are_read_as_probabilities() {
        assert_eq!(Log.parse_weight("1", r(0)).unwrap(), 0.0);
        assert_eq!(Log.parse_weight("0", r(0)).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn viterbi_derivation_is_not_commutative() {
        let s = ViterbiDerivation;
        let a = BestDerivation::new(0.5, vec![r(0)]);
        let b = BestDerivation::new(0.5, vec![r(1)]);
        assert_ne!(s.mul(&a, &b), s.mul(&b, &a));
        assert!(!s.is_commutative());
    }

    #[test]
    fn viterbi_derivation_ties_prefer_short_then_lexicographic() {
        let s = ViterbiDerivation;
        let short = BestDerivation::new(0.5, vec![r(3)]);
        let long = BestDerivation::new(0.5, vec![r(0), r(1)]);
        assert_eq!(s.add(&short, &long), short);
        assert_eq!(s.add(&long, &short), short);
        let lo = BestDerivation::new(0.5, vec![r(0), r(2)]);
        let hi = BestDerivation::new(0.5, vec![r(1), r(0)]);
        assert_eq!(s.add(&hi, &lo), lo);
    }

    #[test]
    fn viterbi_derivation_right_distributes_when_one_sequence_prefixes_another() {
        // A plain lexicographic tie-break fails this case.
        let s = ViterbiDerivation;
        let b = BestDerivation::new(0.5, vec![r(1)]);
        let c = BestDerivation::new(0.5, vec![r(1), r(0)]);
        let a = BestDerivation::new(0.5, vec![r(2)]);
        let left = s.mul(&s.add(&b, &c), &a);
        let right = s.add(&s.mul(&b, &a), &s.mul(&c, &a));
        assert_eq!(left, right);
    }

    #[test]
    fn viterbi_derivation_zero_annihilates() {
        let s = ViterbiDerivation;
        let a = BestDerivation::new(0.25, vec![r(4)]);
        assert_eq!(s.mul(&s.zero(), &a), s.zero());
        assert_eq!(s.mul(&a, &s.zero()), s.zero());
        assert_eq!(s.add(&s.zero(), &a), a);
    }

    #[test]
    fn json_round_trip() {
        let s = ViterbiDerivation;
        let a = BestDerivation::new(0.125, vec![r(0), r(2)]);
        assert_eq!(s.value_from_json(&s.value_to_json(&a)), Some(a));
        assert_eq!(
            Log.value_from_json(&Log.value_to_json(&f64::NEG_INFINITY)),
            Some(f64::NEG_INFINITY)
        );
        assert_eq!(
            Counting.value_from_json(&Counting.value_to_json(&17)),
            Some(17)
        );
    }

    #[test]
    fn parse_weight_errors() {
        assert!(Counting.parse_weight("1.5", r(0)).is_err());
        assert!(Probability.parse_weight("-0.5", r(0)).is_err());
        assert!(Viterbi.parse_weight("1.5", r(0)).is_err());
        assert!(Boolean.parse_weight("maybe", r(0)).is_err());
        assert_eq!(Boolean.parse_weight("T", r(0)), Ok(true));
    }
}
