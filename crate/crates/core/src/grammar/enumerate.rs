//! Exhaustive enumeration of the derivation trees of a sentence.
//!
//! This is the brute-force reference the dynamic programs are checked
//! against, so it works directly on the grammar by span splitting and
//! shares no code with the chart machinery.

use std::collections::HashMap;
use std::rc::Rc;

use super::{DerivationTree, Grammar, NonterminalId, RuleId, Symbol, TerminalId};
use crate::error::{Error, Result};

#[derive(Clone, Debug, Default)]
pub struct Enumeration {
    pub trees: Vec<DerivationTree>,
    /// Set when the cap was hit or a unary cycle forced a depth cut-off.
    pub truncated: bool,
}

/// Every derivation tree of `sentence` from the start symbol, in
/// deterministic order: rules by id, then leftmost split first.
pub fn enumerate_derivations(
    g: &Grammar,
    sentence: &[TerminalId],
    cap: usize,
) -> Result<Enumeration> {
    if sentence.is_empty() {
        return Err(Error::InvalidArgument("sentence must be non-empty".into()));
    }
    if cap == 0 {
        return Err(Error::InvalidArgument(
            "enumeration cap must be at least 1".into(),
        ));
    }
    // Without unary cycles a node spans at most |N| nested nodes per span
    // length, so this bound never cuts a real derivation.
    let height = sentence.len() * g.num_nonterminals() + 1;
    let mut e = Enumerator {
        g,
        sentence,
        cap,
        memo: HashMap::new(),
        truncated: false,
    };
    let trees = e.trees(g.start(), 0, sentence.len(), height);
    Ok(Enumeration {
        trees: trees.as_ref().clone(),
        truncated: e.truncated,
    })
}

type Key = (NonterminalId, usize, usize, usize);

struct Enumerator<'a> {
    g: &'a Grammar,
    sentence: &'a [TerminalId],
    cap: usize,
    memo: HashMap<Key, Rc<Vec<DerivationTree>>>,
    truncated: bool,
}

impl Enumerator<'_> {
    fn trees(
        &mut self,
        nt: NonterminalId,
        i: usize,
        j: usize,
        height: usize,
    ) -> Rc<Vec<DerivationTree>> {
        if height == 0 {
            if !self.g.rules_for(nt).is_empty() {
                self.truncated = true;
            }
            return Rc::new(Vec::new());
        }
        if let Some(hit) = self.memo.get(&(nt, i, j, height)) {
            return hit.clone();
        }
        let mut out = Vec::new();
        for &rule in self.g.rules_for(nt) {
            let mut prefix = Vec::new();
            self.expand(rule, 0, i, j, height - 1, &mut prefix, &mut out);
        }
        let out = Rc::new(out);
        self.memo.insert((nt, i, j, height), out.clone());
        out
    }

    #[allow(clippy::too_many_arguments)]
    fn expand(
        &mut self,
        rule: RuleId,
        pos: usize,
        i: usize,
        j: usize,
        height: usize,
        prefix: &mut Vec<DerivationTree>,
        out: &mut Vec<DerivationTree>,
    ) {
        let g = self.g;
        let rhs = &g.rule(rule).rhs;
        if pos == rhs.len() {
            if i == j {
                if out.len() < self.cap {
                    out.push(DerivationTree::node(rule, prefix.clone()));
                } else {
                    self.truncated = true;
                }
            }
            return;
        }
        // every remaining symbol consumes at least one token
        let remaining = rhs.len() - pos;
        if j - i < remaining {
            return;
        }
        match rhs[pos] {
            Symbol::Terminal(t) => {
                if self.sentence[i] == t {
                    self.expand(rule, pos + 1, i + 1, j, height, prefix, out);
                }
            }
            Symbol::Nonterminal(n) => {
                let first_end = if remaining == 1 { j } else { i + 1 };
                for end in first_end..=j - (remaining - 1) {
                    let subs = self.trees(n, i, end, height);
                    for sub in subs.iter() {
                        if out.len() >= self.cap {
                            self.truncated = true;
                            return;
                        }
                        prefix.push(sub.clone());
                        self.expand(rule, pos + 1, end, j, height, prefix, out);
                        prefix.pop();
                    }
                }
            }
        }
    }
}
