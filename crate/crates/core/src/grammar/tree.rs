use std::fmt;
use std::str::FromStr;

use super::{Grammar, RuleId, Symbol, TerminalId};
use crate::error::{Error, Result};

/// A grammar derivation tree `⟨r: T₁…T_k⟩`: one child per rhs nonterminal
/// of `rule`, left to right.
///
/// Serializes as an S-expression of rule ids, e.g. `(r1 (r3) (r2 (r3) (r3)))`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct DerivationTree {
    pub rule: RuleId,
    pub children: Vec<DerivationTree>,
}

impl DerivationTree {
    pub fn leaf(rule: RuleId) -> Self {
        DerivationTree {
            rule,
            children: Vec::new(),
        }
    }

    pub fn node(rule: RuleId, children: Vec<DerivationTree>) -> Self {
        DerivationTree { rule, children }
    }

    pub fn size(&self) -> usize {
        1 + self
            .children
            .iter()
            .map(DerivationTree::size)
            .sum::<usize>()
    }

    pub fn depth(&self) -> usize {
        1 + self
            .children
            .iter()
            .map(DerivationTree::depth)
            .max()
            .unwrap_or(0)
    }

    /// Checks that each child's rule rewrites the matching rhs nonterminal.
    pub fn validate(&self, g: &Grammar) -> Result<()> {
        let mut stack = vec![self];
        while let Some(t) = stack.pop() {
            let rule = g
                .rules()
                .get(t.rule.0)
                .ok_or_else(|| Error::InvalidArgument(format!("no rule {}", t.rule)))?;
            let expected: Vec<_> = rule.children().collect();
            if expected.len() != t.children.len() {
                return Err(Error::InvalidArgument(format!(
                    "rule {} has {} nonterminal children, tree node has {}",
                    t.rule,
                    expected.len(),
                    t.children.len()
                )));
            }
            for (child, nt) in t.children.iter().zip(expected) {
                let child_lhs = g
                    .rules()
                    .get(child.rule.0)
                    .ok_or_else(|| Error::InvalidArgument(format!("no rule {}", child.rule)))?
                    .lhs;
                if child_lhs != nt {
                    return Err(Error::InvalidArgument(format!(
                        "child {} of {} rewrites {}, expected {}",
                        child.rule,
                        t.rule,
                        g.nonterminal_name(child_lhs),
                        g.nonterminal_name(nt)
                    )));
                }
                stack.push(child);
            }
        }
        Ok(())
    }

    /// The terminal string the tree derives.
    pub fn terminal_yield(&self, g: &Grammar) -> Vec<TerminalId> {
        let mut out = Vec::new();
        self.push_yield(g, &mut out);
        out
    }

    fn push_yield(&self, g: &Grammar, out: &mut Vec<TerminalId>) {
        let mut children = self.children.iter();
        for sym in &g.rule(self.rule).rhs {
            match sym {
                Symbol::Terminal(t) => out.push(*t),
                Symbol::Nonterminal(_) => {
                    if let Some(c) = children.next() {
                        c.push_yield(g, out);
                    }
                }
            }
        }
    }
}

impl fmt::Display for DerivationTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}", self.rule)?;
        for c in &self.children {
            write!(f, " {c}")?;
        }
        write!(f, ")")
    }
}

impl FromStr for DerivationTree {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let spaced = s.replace('(', " ( ").replace(')', " ) ");
        let tokens: Vec<&str> = spaced.split_whitespace().collect();
        let mut pos = 0;
        let tree = parse_sexpr(&tokens, &mut pos)?;
        if pos != tokens.len() {
            return Err(Error::InvalidArgument(format!(
                "trailing input after derivation tree: `{}`",
                tokens[pos..].join(" ")
            )));
        }
        Ok(tree)
    }
}

fn parse_sexpr(tokens: &[&str], pos: &mut usize) -> Result<DerivationTree> {
    let bad = |msg: &str| Error::InvalidArgument(format!("malformed derivation tree: {msg}"));
    if tokens.get(*pos) != Some(&"(") {
        return Err(bad("expected `(`"));
    }
    *pos += 1;
    let rule: RuleId = tokens
        .get(*pos)
        .ok_or_else(|| bad("missing rule id"))?
        .parse()?;
    *pos += 1;
    let mut children = Vec::new();
    loop {
        match tokens.get(*pos) {
            Some(&")") => {
                *pos += 1;
                return Ok(DerivationTree { rule, children });
            }
            Some(&"(") => children.push(parse_sexpr(tokens, pos)?),
            Some(t) => return Err(bad(&format!("unexpected `{t}`"))),
            None => return Err(bad("unbalanced parentheses")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::GrammarBuilder;

    #[test]
    fn sexpr_round_trip() {
        let text = "(r1 (r3) (r2 (r3) (r3)))";
        let t: DerivationTree = text.parse().unwrap();
        assert_eq!(t.to_string(), text);
        assert_eq!(t.size(), 5);
        assert_eq!(t.depth(), 3);
    }

    #[test]
    fn sexpr_errors() {
        assert!("(r1".parse::<DerivationTree>().is_err());
        assert!("r1".parse::<DerivationTree>().is_err());
        assert!("(r1) (r2)".parse::<DerivationTree>().is_err());
        assert!("(x1)".parse::<DerivationTree>().is_err());
    }

    #[test]
    fn validate_and_yield() {
        let mut b = GrammarBuilder::new();
        b.nonterminal("S", 1).nonterminal("A", 1).start("S");
        b.rule("S", &["A", "A"]);
        b.rule("A", &["A", "A"]);
        b.rule("A", &["a"]);
        let g = b.build().unwrap();
        let t: DerivationTree = "(r1 (r3) (r2 (r3) (r3)))".parse().unwrap();
        t.validate(&g).unwrap();
        assert_eq!(t.terminal_yield(&g).len(), 3);
        let bad: DerivationTree = "(r1 (r3) (r1 (r3) (r3)))".parse().unwrap();
        assert!(bad.validate(&g).is_err());
        let short: DerivationTree = "(r1 (r3))".parse().unwrap();
        assert!(short.validate(&g).is_err());
    }
}
