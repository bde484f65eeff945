//! Values of derivation trees and of their left-to-right linearizations.

use std::fmt;

use crate::error::{Error, Result};
use crate::grammar::{enumerate_derivations, DerivationTree, RuleId, TerminalId, WeightedCfg};
use crate::semiring::Semiring;
use crate::tensor::{add_assign, contract, contract_list_in_order, zero_tensor, Shape, Tensor};

/// Preorder (depth-first, left-to-right) rule sequence of a derivation tree.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct DerivationString {
    pub rules: Vec<RuleId>,
}

impl fmt::Display for DerivationString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, r) in self.rules.iter().enumerate() {
            if i > 0 {
                write!(f, " ")?;
            }
            write!(f, "{r}")?;
        }
        Ok(())
    }
}

pub fn flatten(t: &DerivationTree) -> DerivationString {
    let mut rules = Vec::with_capacity(t.size());
    let mut stack = vec![t];
    while let Some(node) = stack.pop() {
        rules.push(node.rule);
        stack.extend(node.children.iter().rev());
    }
    DerivationString { rules }
}

/// Rebuilds the tree from its preorder string. Each rule's arity says how
/// many subtrees follow it.
pub fn unflatten(g: &WeightedCfg<impl Semiring>, e: &DerivationString) -> Result<DerivationTree> {
    let grammar = g.grammar();
    // (rule, children still expected, children collected so far)
    let mut open: Vec<(RuleId, usize, Vec<DerivationTree>)> = Vec::new();
    let mut done = None;
    for &rule in &e.rules {
        if done.is_some() {
            return Err(Error::InvalidArgument(format!(
                "derivation string `{e}` continues after a complete tree"
            )));
        }
        let arity = grammar
            .rules()
            .get(rule.0)
            .ok_or_else(|| Error::InvalidArgument(format!("no rule {rule}")))?
            .arity();
        open.push((rule, arity, Vec::new()));
        while let Some((_, want, have)) = open.last() {
            if have.len() < *want {
                break;
            }
            let (rule, _, children) = open.pop().expect("non-empty");
            let node = DerivationTree::node(rule, children);
            match open.last_mut() {
                Some((_, _, siblings)) => siblings.push(node),
                None => done = Some(node),
            }
        }
    }
    let tree = done
        .ok_or_else(|| Error::InvalidArgument(format!("derivation string `{e}` is incomplete")))?;
    tree.validate(grammar)?;
    Ok(tree)
}

/// `w(r) ⊗ [V(T₁), …, V(T_k)]`, evaluated bottom-up with an explicit stack.
/// The result is rank 1 with the root's lhs dimension.
pub fn tree_value<S: Semiring>(g: &WeightedCfg<S>, t: &DerivationTree) -> Result<Tensor<S::Elem>> {
    t.validate(g.grammar())?;
    let s = g.semiring();
    let mut work: Vec<(&DerivationTree, bool)> = vec![(t, false)];
    let mut values: Vec<Tensor<S::Elem>> = Vec::new();
    while let Some((node, expanded)) = work.pop() {
        if !expanded {
            work.push((node, true));
            work.extend(node.children.iter().rev().map(|c| (c, false)));
            continue;
        }
        let args = values.split_off(values.len() - node.children.len());
        let refs: Vec<&Tensor<S::Elem>> = args.iter().collect();
        values.push(contract_list_in_order(s, g.weight(node.rule), &refs)?);
    }
    Ok(values.pop().expect("root value"))
}

/// `w(R₁) ⊗ w(R₂) ⊗ … ⊗ w(Rₙ)` strictly left to right.
///
/// Each step contracts the accumulator's first open rank (the leftmost
/// nonterminal not yet rewritten) with the next rule's lhs rank, which is
/// the last rank of its weight. The rule's child ranks take its place at
/// the front, so the shapes follow the sentential forms of the leftmost
/// derivation and end at the root's lhs dimension.
pub fn string_value<S: Semiring>(
    g: &WeightedCfg<S>,
    e: &DerivationString,
) -> Result<Tensor<S::Elem>> {
    let s = g.semiring();
    let (first, rest) = e
        .rules
        .split_first()
        .ok_or_else(|| Error::InvalidArgument("empty derivation string".into()))?;
    let weight = |r: &RuleId| {
        g.weights()
            .get(r.0)
            .ok_or_else(|| Error::InvalidArgument(format!("no rule {r}")))
    };
    let mut acc = weight(first)?.clone();
    for r in rest {
        let w = weight(r)?;
        if acc.rank() < 2 {
            return Err(Error::undefined(
                "derivation string value",
                format!("no nonterminal left to rewrite with {r}"),
            ));
        }
        acc = contract(s, &acc, 0, w, w.rank() - 1)?;
    }
    Ok(acc)
}

/// `⊕` of the tree values of every derivation of `sentence`, by exhaustive
/// enumeration. Returns the enumeration's truncation flag alongside.
pub fn sentence_value_oracle<S: Semiring>(
    g: &WeightedCfg<S>,
    sentence: &[TerminalId],
    cap: usize,
) -> Result<(Tensor<S::Elem>, bool)> {
    let s = g.semiring();
    let e = enumerate_derivations(g.grammar(), sentence, cap)?;
    let mut total = zero_tensor(s, Shape::new(vec![g.start_dim()])?);
    for t in &e.trees {
        add_assign(s, &mut total, &tree_value(g, t)?)?;
    }
    Ok((total, e.truncated))
}
