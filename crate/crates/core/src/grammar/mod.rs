//! Context-free grammars whose rules carry tensor weights.
//!
//! Weight ranks follow one global convention: the rule's right-hand-side
//! nonterminals left to right, then the left-hand side. `A -> B c D` with
//! `dim(A)=3, dim(B)=2, dim(D)=4` therefore has a weight in `S^{2×4×3}`;
//! terminals contribute no rank.

mod enumerate;
mod file;
mod tree;

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

pub use enumerate::{enumerate_derivations, Enumeration};
pub use file::{parse_grammar_file, parse_grammar_source, GrammarSource, RuleSource};
pub use tree::DerivationTree;

use crate::error::{Error, Result};
use crate::semiring::Semiring;
use crate::tensor::{Shape, Tensor};

/// Stable rule identifier; displayed 1-based as `r1`, `r2`, ...
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RuleId(pub usize);

impl fmt::Display for RuleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "r{}", self.0 + 1)
    }
}

impl FromStr for RuleId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        s.strip_prefix('r')
            .and_then(|n| n.parse::<usize>().ok())
            .filter(|&n| n >= 1)
            .map(|n| RuleId(n - 1))
            .ok_or_else(|| Error::InvalidArgument(format!("`{s}` is not a rule id")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NonterminalId(pub usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TerminalId(pub usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Symbol {
    Terminal(TerminalId),
    Nonterminal(NonterminalId),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Rule {
    pub id: RuleId,
    pub lhs: NonterminalId,
    pub rhs: Vec<Symbol>,
}

impl Rule {
    /// Right-hand-side nonterminals, left to right.
    pub fn children(&self) -> impl Iterator<Item = NonterminalId> + '_ {
        self.rhs.iter().filter_map(|s| match s {
            Symbol::Nonterminal(n) => Some(*n),
            Symbol::Terminal(_) => None,
        })
    }

    pub fn arity(&self) -> usize {
        self.children().count()
    }
}

/// The unweighted grammar: symbols, dimensions, rules, start symbol.
#[derive(Clone, Debug)]
pub struct Grammar {
    nonterminals: Vec<String>,
    dims: Vec<usize>,
    terminals: Vec<String>,
    rules: Vec<Rule>,
    start: NonterminalId,
    nt_index: HashMap<String, NonterminalId>,
    t_index: HashMap<String, TerminalId>,
    by_lhs: Vec<Vec<RuleId>>,
}

impl Grammar {
    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn rule(&self, id: RuleId) -> &Rule {
        &self.rules[id.0]
    }

    pub fn rules_for(&self, lhs: NonterminalId) -> &[RuleId] {
        &self.by_lhs[lhs.0]
    }

    pub fn start(&self) -> NonterminalId {
        self.start
    }

    pub fn num_nonterminals(&self) -> usize {
        self.nonterminals.len()
    }

    pub fn nonterminal_ids(&self) -> impl Iterator<Item = NonterminalId> {
        (0..self.nonterminals.len()).map(NonterminalId)
    }

    pub fn nonterminal_name(&self, n: NonterminalId) -> &str {
        &self.nonterminals[n.0]
    }

    pub fn terminal_name(&self, t: TerminalId) -> &str {
        &self.terminals[t.0]
    }

    pub fn terminals(&self) -> &[String] {
        &self.terminals
    }

    pub fn nonterminal(&self, name: &str) -> Option<NonterminalId> {
        self.nt_index.get(name).copied()
    }

    pub fn terminal(&self, name: &str) -> Option<TerminalId> {
        self.t_index.get(name).copied()
    }

    pub fn dim(&self, n: NonterminalId) -> usize {
        self.dims[n.0]
    }

    /// The weight shape a rule must have: rhs nonterminal dims, then lhs dim.
    pub fn expected_shape(&self, id: RuleId) -> Shape {
        let rule = self.rule(id);
        let mut dims: Vec<usize> = rule.children().map(|n| self.dim(n)).collect();
        dims.push(self.dim(rule.lhs));
        Shape::new(dims).expect("dimensions are validated at construction")
    }

    /// Maps whitespace-separated tokens to terminal ids.
    pub fn encode_sentence<S: AsRef<str>>(&self, tokens: &[S]) -> Result<Vec<TerminalId>> {
        tokens
            .iter()
            .map(|t| {
                self.terminal(t.as_ref())
                    .ok_or_else(|| Error::UnknownTerminal(t.as_ref().to_string()))
            })
            .collect()
    }

    pub fn display_rule(&self, id: RuleId) -> String {
        let rule = self.rule(id);
        let rhs: Vec<&str> = rule
            .rhs
            .iter()
            .map(|s| match s {
                Symbol::Terminal(t) => self.terminal_name(*t),
                Symbol::Nonterminal(n) => self.nonterminal_name(*n),
            })
            .collect();
        format!("{} -> {}", self.nonterminal_name(rule.lhs), rhs.join(" "))
    }

    /// True when some nonterminal can rewrite to itself through unary rules.
    pub fn has_unary_cycle(&self) -> bool {
        let n = self.num_nonterminals();
        // reach[a][b]: a =>+ b by unary nonterminal rules
        let mut reach = vec![vec![false; n]; n];
        for rule in &self.rules {
            if let [Symbol::Nonterminal(b)] = rule.rhs.as_slice() {
                reach[rule.lhs.0][b.0] = true;
            }
        }
        for k in 0..n {
            for i in 0..n {
                if reach[i][k] {
                    let via = reach[k].clone();
                    for (to, &r) in reach[i].iter_mut().zip(&via) {
                        *to |= r;
                    }
                }
            }
        }
        (0..n).any(|i| reach[i][i])
    }
}

/// Incrementally declares nonterminals and rules. Right-hand-side symbols
/// that are not declared nonterminals become terminals.
#[derive(Clone, Debug, Default)]
pub struct GrammarBuilder {
    nonterminals: Vec<(String, usize)>,
    rules: Vec<(String, Vec<String>)>,
    start: Option<String>,
}

impl GrammarBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn nonterminal(&mut self, name: &str, dim: usize) -> &mut Self {
        self.nonterminals.push((name.to_string(), dim));
        self
    }

    pub fn start(&mut self, name: &str) -> &mut Self {
        self.start = Some(name.to_string());
        self
    }

    /// Adds a rule and returns the id it will receive.
    pub fn rule<S: AsRef<str>>(&mut self, lhs: &str, rhs: &[S]) -> RuleId {
        self.rules.push((
            lhs.to_string(),
            rhs.iter().map(|s| s.as_ref().to_string()).collect(),
        ));
        RuleId(self.rules.len() - 1)
    }

    pub fn build(&self) -> Result<Grammar> {
        let mut nt_index = HashMap::new();
        let mut nonterminals = Vec::new();
        let mut dims = Vec::new();
        for (name, dim) in &self.nonterminals {
            if *dim == 0 {
                return Err(Error::Grammar(format!(
                    "dimension of {name} must be at least 1"
                )));
            }
            if nt_index
                .insert(name.clone(), NonterminalId(nonterminals.len()))
                .is_some()
            {
                return Err(Error::Grammar(format!("nonterminal {name} declared twice")));
            }
            nonterminals.push(name.clone());
            dims.push(*dim);
        }
        let start_name = self
            .start
            .as_deref()
            .ok_or_else(|| Error::Grammar("no start symbol".into()))?;
        let start = *nt_index
            .get(start_name)
            .ok_or_else(|| Error::UndeclaredSymbol(start_name.to_string()))?;
        if self.rules.is_empty() {
            return Err(Error::Grammar("grammar must have at least one rule".into()));
        }

        let mut terminals = Vec::new();
        let mut t_index = HashMap::new();
        let mut rules = Vec::new();
        let mut seen = HashSet::new();
        let mut by_lhs = vec![Vec::new(); nonterminals.len()];
        for (i, (lhs, rhs)) in self.rules.iter().enumerate() {
            let id = RuleId(i);
            let lhs_id = *nt_index
                .get(lhs)
                .ok_or_else(|| Error::UndeclaredSymbol(lhs.clone()))?;
            if rhs.is_empty() {
                return Err(Error::Grammar(format!(
                    "rule {lhs} -> has an empty right-hand side"
                )));
            }
            let rhs_syms = rhs
                .iter()
                .map(|s| match nt_index.get(s) {
                    Some(n) => Symbol::Nonterminal(*n),
                    None => {
                        let next = TerminalId(terminals.len());
                        let t = *t_index.entry(s.clone()).or_insert(next);
                        if t == next {
                            terminals.push(s.clone());
                        }
                        Symbol::Terminal(t)
                    }
                })
                .collect::<Vec<_>>();
            if !seen.insert((lhs_id, rhs_syms.clone())) {
                return Err(Error::Grammar(format!(
                    "duplicate rule {lhs} -> {}",
                    rhs.join(" ")
                )));
            }
            by_lhs[lhs_id.0].push(id);
            rules.push(Rule {
                id,
                lhs: lhs_id,
                rhs: rhs_syms,
            });
        }
        Ok(Grammar {
            nonterminals,
            dims,
            terminals,
            rules,
            start,
            nt_index,
            t_index,
            by_lhs,
        })
    }
}

/// What was found where a weight of the expected shape should be.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Found {
    Shape(Shape),
    /// A flat literal with this many values.
    Values(usize),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ShapeViolation {
    pub rule: RuleId,
    pub rule_text: String,
    pub expected: Shape,
    pub found: Found,
}

impl fmt::Display for ShapeViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "rule {} ({}): expected shape {} ({} values), found ",
            self.rule,
            self.rule_text,
            self.expected,
            self.expected.size()
        )?;
        match &self.found {
            Found::Shape(s) => write!(f, "shape {s}"),
            Found::Values(n) => write!(f, "{n} values"),
        }
    }
}

/// Checks that every rule's weight has shape `[d(rhs NTs)..., d(lhs)]`.
/// An empty result means the weights are well defined.
pub fn check_well_defined<T>(grammar: &Grammar, weights: &[Tensor<T>]) -> Vec<ShapeViolation> {
    let mut out = Vec::new();
    for rule in grammar.rules() {
        let expected = grammar.expected_shape(rule.id);
        let found = weights.get(rule.id.0).map(|w| w.shape());
        if found != Some(&expected) {
            out.push(ShapeViolation {
                rule: rule.id,
                rule_text: grammar.display_rule(rule.id),
                expected,
                found: match found {
                    Some(s) => Found::Shape(s.clone()),
                    None => Found::Values(0),
                },
            });
        }
    }
    out
}

/// A grammar with a well-defined tensor weight per rule.
#[derive(Clone, Debug)]
pub struct WeightedCfg<S: Semiring> {
    grammar: Grammar,
    weights: Vec<Tensor<S::Elem>>,
    semiring: S,
}

impl<S: Semiring> WeightedCfg<S> {
    /// Fails with [`Error::IllDefined`] unless every weight has its
    /// expected shape.
    pub fn new(grammar: Grammar, weights: Vec<Tensor<S::Elem>>, semiring: S) -> Result<Self> {
        let violations = check_well_defined(&grammar, &weights);
        if !violations.is_empty() {
            return Err(Error::IllDefined(violations));
        }
        if weights.len() != grammar.rules().len() {
            return Err(Error::Grammar(format!(
                "{} weights for {} rules",
                weights.len(),
                grammar.rules().len()
            )));
        }
        Ok(WeightedCfg {
            grammar,
            weights,
            semiring,
        })
    }

    pub fn grammar(&self) -> &Grammar {
        &self.grammar
    }

    pub fn semiring(&self) -> &S {
        &self.semiring
    }

    pub fn weight(&self, id: RuleId) -> &Tensor<S::Elem> {
        &self.weights[id.0]
    }

    pub fn weights(&self) -> &[Tensor<S::Elem>] {
        &self.weights
    }

    pub fn check_well_defined(&self) -> Vec<ShapeViolation> {
        check_well_defined(&self.grammar, &self.weights)
    }

    pub fn start_dim(&self) -> usize {
        self.grammar.dim(self.grammar.start())
    }

    /// Same grammar with each weight entry mapped into another semiring.
    pub fn map_weights<T: Semiring>(
        &self,
        semiring: T,
        mut f: impl FnMut(RuleId, &S::Elem) -> T::Elem,
    ) -> WeightedCfg<T> {
        let weights = self
            .weights
            .iter()
            .enumerate()
            .map(|(i, w)| w.map(|v| f(RuleId(i), v)))
            .collect();
        WeightedCfg {
            grammar: self.grammar.clone(),
            weights,
            semiring,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::semiring::Probability;

    fn aaa_grammar(a_dim: usize) -> Grammar {
        let mut b = GrammarBuilder::new();
        b.nonterminal("S", 2).nonterminal("A", a_dim).start("S");
        b.rule("S", &["A", "A"]);
        b.rule("A", &["A", "A"]);
        b.rule("A", &["a"]);
        b.build().unwrap()
    }

    fn zeros(shape: &[usize]) -> Tensor<f64> {
        Tensor::filled(Shape::from(shape), 0.0)
    }

    #[test]
    fn rule_ids_display_one_based() {
        assert_eq!(RuleId(0).to_string(), "r1");
        assert_eq!("r3".parse::<RuleId>().unwrap(), RuleId(2));
        assert!("r0".parse::<RuleId>().is_err());
        assert!("x1".parse::<RuleId>().is_err());
    }

    #[test]
    fn expected_shapes_put_lhs_last() {
        let g = aaa_grammar(3);
        assert_eq!(g.expected_shape(RuleId(0)).dims(), &[3, 3, 2]);
        assert_eq!(g.expected_shape(RuleId(1)).dims(), &[3, 3, 3]);
        assert_eq!(g.expected_shape(RuleId(2)).dims(), &[3]);
    }

    #[test]
    fn well_defined_weights_pass() {
        let g = aaa_grammar(3);
        let w = vec![zeros(&[3, 3, 2]), zeros(&[3, 3, 3]), zeros(&[3])];
        assert!(check_well_defined(&g, &w).is_empty());
        assert!(WeightedCfg::new(g, w, Probability).is_ok());
    }

    #[test]
    fn dimension_clash_is_reported_for_that_rule() {
        let g = aaa_grammar(3);
        let w = vec![zeros(&[3, 3, 2]), zeros(&[3, 3, 3]), zeros(&[2])];
        let v = check_well_defined(&g, &w);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].rule, RuleId(2));
        assert_eq!(v[0].found, Found::Shape(Shape::from([2])));
        assert!(matches!(
            WeightedCfg::new(g, w, Probability),
            Err(Error::IllDefined(_))
        ));
    }

    #[test]
    fn scalar_configuration_passes() {
        let g = aaa_grammar(1);
        assert_eq!(g.dim(NonterminalId(1)), 1);
        let w = vec![zeros(&[1, 1, 2]), zeros(&[1, 1, 1]), zeros(&[1])];
        assert!(check_well_defined(&g, &w).is_empty());
    }

    #[test]
    fn builder_rejects_bad_grammars() {
        let mut b = GrammarBuilder::new();
        b.nonterminal("S", 1).start("S");
        assert!(b.build().is_err(), "no rules");

        let mut b = GrammarBuilder::new();
        b.nonterminal("S", 1).start("S");
        b.rule("S", &["a"]);
        b.rule("S", &["a"]);
        assert!(b.build().is_err(), "duplicate");

        let mut b = GrammarBuilder::new();
        b.nonterminal("S", 1).start("S");
        b.rule::<&str>("S", &[]);
        assert!(b.build().is_err(), "epsilon");

        let mut b = GrammarBuilder::new();
        b.nonterminal("S", 1).start("T");
        b.rule("S", &["a"]);
        assert!(matches!(b.build(), Err(Error::UndeclaredSymbol(_))));

        let mut b = GrammarBuilder::new();
        b.nonterminal("S", 1).start("S");
        b.rule("X", &["a"]);
        assert!(matches!(b.build(), Err(Error::UndeclaredSymbol(_))));

        let mut b = GrammarBuilder::new();
        b.nonterminal("S", 0).start("S");
        b.rule("S", &["a"]);
        assert!(b.build().is_err(), "zero dim");
    }

    #[test]
    fn mixed_rules_contribute_only_nonterminal_ranks() {
        let mut b = GrammarBuilder::new();
        b.nonterminal("A", 3)
            .nonterminal("B", 2)
            .nonterminal("D", 4)
            .start("A");
        let r = b.rule("A", &["B", "c", "D"]);
        b.rule("B", &["b"]);
        b.rule("D", &["d"]);
        let g = b.build().unwrap();
        assert_eq!(g.expected_shape(r).dims(), &[2, 4, 3]);
        assert_eq!(g.display_rule(r), "A -> B c D");
    }

    #[test]
    fn unary_cycle_detection() {
        let mut b = GrammarBuilder::new();
        b.nonterminal("S", 1).nonterminal("A", 1).start("S");
        b.rule("S", &["A"]);
        b.rule("A", &["a"]);
        assert!(!b.build().unwrap().has_unary_cycle());
        b.rule("A", &["S"]);
        assert!(b.build().unwrap().has_unary_cycle());
    }
}
