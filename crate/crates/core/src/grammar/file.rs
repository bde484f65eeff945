//! Text format for weighted grammars.
//!
//! ```text
//! # comment
//! start S
//! dim S 2
//! dim A 3
//! rule S -> A A : [ ...18 values, row-major 3x3x2... ]
//! rule A -> a   : [ 0.2 0.5 1.0 ]
//! ```
//!
//! Every nonterminal needs a `dim` line; any other rhs symbol is a terminal.
//! A tensor literal may span several lines. Its shape is implied by the rule.

use super::{Found, GrammarBuilder, RuleId, ShapeViolation, WeightedCfg};
use crate::error::{Error, Result};
use crate::semiring::Semiring;
use crate::tensor::{literal_tokens, Tensor};

#[derive(Clone, Debug, Default)]
pub struct GrammarSource {
    pub start: Option<(String, usize)>,
    pub dims: Vec<(String, usize, usize)>,
    pub rules: Vec<RuleSource>,
}

#[derive(Clone, Debug)]
pub struct RuleSource {
    pub lhs: String,
    pub rhs: Vec<String>,
    pub values: Vec<String>,
    pub line: usize,
}

fn syntax(line: usize, message: impl Into<String>) -> Error {
    Error::Syntax {
        line,
        message: message.into(),
    }
}

/// Reads the file structure without interpreting weight tokens.
pub fn parse_grammar_source(text: &str) -> Result<GrammarSource> {
    let mut src = GrammarSource::default();
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, strip_comment(l)));
    while let Some((line_no, line)) = lines.next() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (keyword, rest) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
        let rest = rest.trim();
        match keyword {
            "start" => {
                if rest.is_empty() || rest.contains(char::is_whitespace) {
                    return Err(syntax(line_no, "expected `start <nonterminal>`"));
                }
                if src.start.is_some() {
                    return Err(syntax(line_no, "start symbol given twice"));
                }
                src.start = Some((rest.to_string(), line_no));
            }
            "dim" => {
                let parts: Vec<&str> = rest.split_whitespace().collect();
                let [name, value] = parts.as_slice() else {
                    return Err(syntax(line_no, "expected `dim <nonterminal> <n>`"));
                };
                let d: usize = value
                    .parse()
                    .map_err(|_| syntax(line_no, format!("`{value}` is not a dimension")))?;
                if d == 0 {
                    return Err(syntax(
                        line_no,
                        format!("dimension of {name} must be at least 1"),
                    ));
                }
                if src.dims.iter().any(|(n, _, _)| n == name) {
                    return Err(syntax(line_no, format!("{name} declared twice")));
                }
                src.dims.push((name.to_string(), d, line_no));
            }
            "rule" => {
                let (head, literal) = rest
                    .split_once(':')
                    .ok_or_else(|| syntax(line_no, "expected `rule <lhs> -> <rhs> : [values]`"))?;
                let (lhs, rhs) = head
                    .split_once("->")
                    .ok_or_else(|| syntax(line_no, "missing `->`"))?;
                let lhs = lhs.trim();
                if lhs.is_empty() || lhs.contains(char::is_whitespace) {
                    return Err(syntax(line_no, "left-hand side must be one nonterminal"));
                }
                let rhs: Vec<String> = rhs.split_whitespace().map(str::to_string).collect();
                if rhs.is_empty() {
                    return Err(syntax(
                        line_no,
                        "empty right-hand side (epsilon rules are not supported)",
                    ));
                }
                let mut literal = literal.trim().to_string();
                if !literal.starts_with('[') {
                    return Err(syntax(line_no, "weight literal must start with `[`"));
                }
                while !literal.contains(']') {
                    let (_, more) = lines
                        .next()
                        .ok_or_else(|| syntax(line_no, "unterminated weight literal"))?;
                    literal.push(' ');
                    literal.push_str(more.trim());
                }
                if !literal.ends_with(']') {
                    return Err(syntax(line_no, "unexpected text after weight literal"));
                }
                let values = literal_tokens(&literal)
                    .map_err(|e| syntax(line_no, e.to_string()))?
                    .into_iter()
                    .map(str::to_string)
                    .collect();
                src.rules.push(RuleSource {
                    lhs: lhs.to_string(),
                    rhs,
                    values,
                    line: line_no,
                });
            }
            other => return Err(syntax(line_no, format!("unknown directive `{other}`"))),
        }
    }
    if src.rules.is_empty() {
        return Err(syntax(
            text.lines().count().max(1),
            "grammar must have at least one rule",
        ));
    }
    Ok(src)
}

fn strip_comment(line: &str) -> &str {
    line.split_once('#').map_or(line, |(head, _)| head)
}

impl GrammarSource {
    /// Interprets the weights in `semiring`. Literal lengths that disagree
    /// with the declared dimensions are collected into
    /// [`Error::IllDefined`].
    pub fn build<S: Semiring>(&self, semiring: S) -> Result<WeightedCfg<S>> {
        let mut b = GrammarBuilder::new();
        for (name, d, _) in &self.dims {
            b.nonterminal(name, *d);
        }
        let (start, start_line) = self
            .start
            .as_ref()
            .ok_or_else(|| syntax(1, "missing `start` line"))?;
        b.start(start);
        for r in &self.rules {
            b.rule(&r.lhs, &r.rhs);
        }
        let grammar = b.build().map_err(|e| match e {
            Error::UndeclaredSymbol(ref name) if name == start => syntax(
                *start_line,
                format!("start symbol {name} has no `dim` line"),
            ),
            Error::UndeclaredSymbol(name) => {
                let line = self
                    .rules
                    .iter()
                    .find(|r| r.lhs == name)
                    .map_or(1, |r| r.line);
                syntax(line, format!("left-hand side {name} has no `dim` line"))
            }
            Error::Grammar(msg) => syntax(1, msg),
            other => other,
        })?;

        let mut violations = Vec::new();
        let mut weights = Vec::with_capacity(self.rules.len());
        for (i, r) in self.rules.iter().enumerate() {
            let id = RuleId(i);
            let expected = grammar.expected_shape(id);
            if r.values.len() != expected.size() {
                violations.push(ShapeViolation {
                    rule: id,
                    rule_text: grammar.display_rule(id),
                    expected,
                    found: Found::Values(r.values.len()),
                });
                continue;
            }
            let data = r
                .values
                .iter()
                .map(|tok| {
                    semiring
                        .parse_weight(tok, id)
                        .map_err(|m| syntax(r.line, m))
                })
                .collect::<Result<Vec<_>>>()?;
            weights.push(Tensor::new(expected, data)?);
        }
        if !violations.is_empty() {
            return Err(Error::IllDefined(violations));
        }
        WeightedCfg::new(grammar, weights, semiring)
    }
}

/// Parses a grammar file and interprets its weights in `semiring`.
pub fn parse_grammar_file<S: Semiring>(text: &str, semiring: S) -> Result<WeightedCfg<S>> {
    parse_grammar_source(text)?.build(semiring)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::semiring::{Boolean, Counting, Probability};

    const AAA: &str = "\
# three rules
start S
dim S 2
dim A 3
rule S -> A A : [ 0.1 0.2 0.3 0.4 0.5 0.6
                  0.1 0.2 0.3 0.4 0.5 0.6
                  0.1 0.2 0.3 0.4 0.5 0.6 ]
rule A -> A A : [0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1,
                 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1,
                 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1]
rule A -> a : [0.5, 0.25, 1.0]  # lexical
";

    #[test]
    fn parses_three_rule_grammar() {
        let g = parse_grammar_file(AAA, Probability).unwrap();
        assert_eq!(g.grammar().rules().len(), 3);
        assert_eq!(g.weight(RuleId(0)).dims(), &[3, 3, 2]);
        assert_eq!(g.weight(RuleId(2)).data(), &[0.5, 0.25, 1.0]);
        assert_eq!(g.grammar().terminals(), &["a".to_string()]);
    }

    #[test]
    fn literal_length_mismatch_names_rule() {
        let text = "start S\ndim S 1\ndim A 3\nrule S -> A : [1 1 1]\nrule A -> a : [1,2]\n";
        match parse_grammar_file(text, Counting) {
            Err(Error::IllDefined(v)) => {
                assert_eq!(v.len(), 1);
                assert_eq!(v[0].rule, RuleId(1));
                assert_eq!(v[0].found, Found::Values(2));
                assert!(v[0].to_string().contains("A -> a"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_rule_section_is_an_error() {
        let err = parse_grammar_file("start S\ndim S 1\n", Boolean).unwrap_err();
        assert!(err.to_string().contains("at least one rule"));
    }

    #[test]
    fn syntax_errors_carry_line_numbers() {
        let cases = [
            ("start S\ndim S x\nrule S -> a : [T]\n", 2),
            ("start S\ndim S 1\nrule S a : [T]\n", 3),
            ("start S\ndim S 1\nrule S -> : [T]\n", 3),
            ("start S\ndim S 1\nrule S -> a : [T\n", 3),
            ("start S\ndim S 1\nfrobnicate\nrule S -> a : [T]\n", 3),
            ("start S\ndim S 1\nrule S -> a : [maybe]\n", 3),
            ("start S\ndim S 1\nrule X -> a : [T]\n", 3),
            ("start T\ndim S 1\nrule S -> a : [T]\n", 1),
        ];
        for (text, line) in cases {
            match parse_grammar_file(text, Boolean) {
                Err(Error::Syntax { line: l, .. }) => assert_eq!(l, line, "{text}"),
                other => panic!("{text}: unexpected {other:?}"),
            }
        }
    }

    #[test]
    fn duplicate_rules_rejected() {
        let text = "start S\ndim S 1\nrule S -> a : [T]\nrule S -> a : [F]\n";
        assert!(parse_grammar_file(text, Boolean).is_err());
    }

    #[test]
    fn boolean_tokens() {
        let text = "start S\ndim S 2\nrule S -> a : [T F]\n";
        let g = parse_grammar_file(text, Boolean).unwrap();
        assert_eq!(g.weight(RuleId(0)).data(), &[true, false]);
    }
}
