//! Random grammars, samplers, and an independent scalar CKY used as
//! references by the integration and acceptance tests.
#![allow(dead_code)]

use std::collections::HashSet;
use std::path::PathBuf;

use lvsp::grammar::{
    DerivationTree, Grammar, GrammarBuilder, NonterminalId, RuleId, Symbol, TerminalId, WeightedCfg,
};
use lvsp::semiring::{
    BestDerivation, Boolean, Counting, Log, Probability, Semiring, Viterbi, ViterbiDerivation,
};
use lvsp::tensor::Tensor;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn grammar_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../grammars")
}

pub fn read_grammar(name: &str) -> String {
    std::fs::read_to_string(grammar_dir().join(name)).expect("bundled grammar")
}

pub const TERMINALS: [&str; 3] = ["a", "b", "c"];

/// A sparse CNF grammar: every nonterminal has at least one lexical rule
/// (so every tree can be closed off) and the start symbol has at least one
/// binary rule.
pub fn random_cnf_grammar(r: &mut ChaCha8Rng, max_nts: usize, max_dim: usize) -> Grammar {
    let k = r.gen_range(1..=max_nts);
    let names: Vec<String> = (0..k)
        .map(|i| {
            if i == 0 {
                "S".to_string()
            } else {
                format!("N{i}")
            }
        })
        .collect();
    let mut b = GrammarBuilder::new();
    for name in &names {
        b.nonterminal(name, r.gen_range(1..=max_dim));
    }
    b.start("S");
    let mut seen = HashSet::new();
    for (i, lhs) in names.iter().enumerate() {
        let mut terminals = TERMINALS.to_vec();
        terminals.shuffle(r);
        for t in terminals.iter().take(r.gen_range(1..=2)) {
            b.rule(lhs, &[*t]);
        }
        let binary = r.gen_range(if i == 0 { 1 } else { 0 }..=3);
        for _ in 0..binary {
            let left = &names[r.gen_range(0..k)];
            let right = &names[r.gen_range(0..k)];
            if seen.insert((i, left.clone(), right.clone())) {
                b.rule(lhs, &[left.as_str(), right.as_str()]);
            }
        }
    }
    b.build().expect("generated grammar is valid")
}

/// Probability weights in `[0.05, 1)`.
pub fn random_probability_weights(r: &mut ChaCha8Rng, g: &Grammar) -> WeightedCfg<Probability> {
    let weights = g
        .rules()
        .iter()
        .map(|rule| Tensor::from_fn(g.expected_shape(rule.id), |_| r.gen_range(0.05..1.0)))
        .collect();
    WeightedCfg::new(g.clone(), weights, Probability).unwrap()
}

/// Weights `k/16` so that sums and short products are exact in `f64`.
pub fn random_dyadic_weights(r: &mut ChaCha8Rng, g: &Grammar) -> WeightedCfg<Probability> {
    let weights = g
        .rules()
        .iter()
        .map(|rule| {
            Tensor::from_fn(g.expected_shape(rule.id), |_| {
                f64::from(r.gen_range(1..16u32)) / 16.0
            })
        })
        .collect();
    WeightedCfg::new(g.clone(), weights, Probability).unwrap()
}

pub fn to_boolean(p: &WeightedCfg<Probability>) -> WeightedCfg<Boolean> {
    p.map_weights(Boolean, |_, &x| x > 0.3)
}

pub fn to_counting(p: &WeightedCfg<Probability>) -> WeightedCfg<Counting> {
    p.map_weights(Counting, |_, &x| (x * 4.0) as u64)
}

pub fn to_viterbi(p: &WeightedCfg<Probability>) -> WeightedCfg<Viterbi> {
    p.map_weights(Viterbi, |_, &x| x)
}

pub fn to_log(p: &WeightedCfg<Probability>) -> WeightedCfg<Log> {
    p.map_weights(Log, |_, &x| x.ln())
}

pub fn to_viterbi_derivation(p: &WeightedCfg<Probability>) -> WeightedCfg<ViterbiDerivation> {
    p.map_weights(ViterbiDerivation, |r, &x| BestDerivation::new(x, vec![r]))
}

/// A random derivation tree rooted at `nt` with depth at most `depth`.
pub fn random_tree(
    r: &mut ChaCha8Rng,
    g: &Grammar,
    nt: NonterminalId,
    depth: usize,
) -> DerivationTree {
    let rules = g.rules_for(nt);
    let allowed: Vec<RuleId> = rules
        .iter()
        .copied()
        .filter(|&id| depth > 1 || g.rule(id).arity() == 0)
        .collect();
    let id = *allowed
        .choose(r)
        .expect("every nonterminal has a lexical rule");
    let children = g
        .rule(id)
        .children()
        .collect::<Vec<_>>()
        .into_iter()
        .map(|c| random_tree(r, g, c, depth - 1))
        .collect();
    DerivationTree::node(id, children)
}

/// Samples a sentence of at most `max_len` tokens from the start symbol.
pub fn sample_sentence(r: &mut ChaCha8Rng, g: &Grammar, max_len: usize) -> Vec<TerminalId> {
    loop {
        let depth = r.gen_range(2..=6);
        let t = random_tree(r, g, g.start(), depth);
        let s = t.terminal_yield(g);
        if s.len() <= max_len {
            return s;
        }
    }
}

/// All root-to-node paths of a tree, as child positions.
pub fn node_paths(t: &DerivationTree) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut stack = vec![(t, Vec::new())];
    while let Some((node, path)) = stack.pop() {
        for (i, c) in node.children.iter().enumerate() {
            let mut p = path.clone();
            p.push(i);
            stack.push((c, p));
        }
        out.push(path);
    }
    out
}

/// Textbook CKY inside/outside over scalar rule weights, written without the
/// tensor code. Needs a grammar with all dimensions 1 and only `A -> a` and
/// `A -> B C` rules.
pub struct ScalarCky<S: Semiring> {
    pub n: usize,
    pub inside: Vec<Vec<Vec<S::Elem>>>,
    pub outside: Vec<Vec<Vec<S::Elem>>>,
}

impl<S: Semiring> ScalarCky<S> {
    pub fn run(cfg: &WeightedCfg<S>, sentence: &[TerminalId]) -> Self {
        let s = cfg.semiring();
        let g = cfg.grammar();
        let n = sentence.len();
        let k = g.num_nonterminals();
        let scalar = |id: RuleId| {
            let w = cfg.weight(id);
            assert_eq!(w.data().len(), 1, "scalar reference needs dims of 1");
            w.data()[0].clone()
        };
        let table = || vec![vec![vec![s.zero(); k]; n + 1]; n + 1];
        let mut inside = table();
        for i in 0..n {
            for rule in g.rules() {
                if rule.rhs == [Symbol::Terminal(sentence[i])] {
                    let cell = &mut inside[i][i + 1][rule.lhs.0];
                    *cell = s.add(cell, &scalar(rule.id));
                }
            }
        }
        for len in 2..=n {
            for i in 0..=n - len {
                let j = i + len;
                for m in i + 1..j {
                    for rule in g.rules() {
                        if let [Symbol::Nonterminal(b), Symbol::Nonterminal(c)] =
                            rule.rhs.as_slice()
                        {
                            let prod = s.mul(
                                &s.mul(&scalar(rule.id), &inside[i][m][b.0]),
                                &inside[m][j][c.0],
                            );
                            let cell = &mut inside[i][j][rule.lhs.0];
                            *cell = s.add(cell, &prod);
                        }
                    }
                }
            }
        }
        let mut outside = table();
        outside[0][n][g.start().0] = s.one();
        for len in (2..=n).rev() {
            for i in 0..=n - len {
                let j = i + len;
                for m in i + 1..j {
                    for rule in g.rules() {
                        if let [Symbol::Nonterminal(b), Symbol::Nonterminal(c)] =
                            rule.rhs.as_slice()
                        {
                            let top = s.mul(&outside[i][j][rule.lhs.0], &scalar(rule.id));
                            let left = s.mul(&top, &inside[m][j][c.0]);
                            let right = s.mul(&top, &inside[i][m][b.0]);
                            let cell = &mut outside[i][m][b.0];
                            *cell = s.add(cell, &left);
                            let cell = &mut outside[m][j][c.0];
                            *cell = s.add(cell, &right);
                        }
                    }
                }
            }
        }
        ScalarCky { n, inside, outside }
    }
}

/// Random element generators for the semiring axiom checks.
pub fn random_probability(r: &mut ChaCha8Rng) -> f64 {
    if r.gen_bool(0.1) {
        0.0
    } else {
        r.gen_range(0.0..2.0)
    }
}

pub fn random_log(r: &mut ChaCha8Rng) -> f64 {
    if r.gen_bool(0.1) {
        f64::NEG_INFINITY
    } else {
        r.gen_range(-5.0..1.0)
    }
}

/// Dyadic scores in `[0, 1]` keep products exact, so tie-breaking between
/// equal scores is exercised deterministically.
pub fn random_best_derivation(r: &mut ChaCha8Rng) -> BestDerivation {
    let score = f64::from(r.gen_range(0..=8u32)) / 8.0;
    let len = r.gen_range(0..=3);
    let rules = (0..len).map(|_| RuleId(r.gen_range(0..3))).collect();
    BestDerivation::new(score, rules)
}
