//! Item-based CKY descriptions, chart construction, and inner values.
//!
//! Positions are 0-based: item `[i, A, j]` says `A` derives tokens
//! `i..j`, and the goal is `[0, S, n]`.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};
use std::fmt;

use petgraph::algo::tarjan_scc;
use petgraph::graph::{DiGraph, NodeIndex};

use crate::error::{Error, Result};
use crate::grammar::{
    DerivationTree, Grammar, NonterminalId, RuleId, Symbol, TerminalId, WeightedCfg,
};
use crate::semiring::{Semiring, DEFAULT_TOLERANCE};
use crate::tensor::{add_assign, approx_eq, contract_list_in_order, zero_tensor, Shape, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Item {
    pub start: usize,
    pub nt: NonterminalId,
    pub end: usize,
}

impl Item {
    pub fn new(start: usize, nt: NonterminalId, end: usize) -> Self {
        Item { start, nt, end }
    }

    pub fn display(&self, g: &Grammar) -> String {
        format!(
            "{} {} {}",
            self.start,
            g.nonterminal_name(self.nt),
            self.end
        )
    }

    fn schedule_key(&self) -> (usize, usize, NonterminalId) {
        (self.end - self.start, self.start, self.nt)
    }
}

/// One instantiated deduction step. The rule is always the first
/// antecedent; `antecedents` are the item antecedents after it, in the
/// order of the rule's right-hand-side nonterminals.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct InferenceInstance {
    pub conclusion: Item,
    pub rule: RuleId,
    pub antecedents: Vec<Item>,
}

/// The built-in item-based descriptions.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Description {
    /// `w(A→wᵢ) / [i,A,i+1]` and `w(A→BC) [i,B,k] [k,C,j] / [i,A,j]`.
    Cky,
    /// CKY plus `w(A→B) [i,B,j] / [i,A,j]`.
    CkyUnary,
}

impl Description {
    pub fn name(self) -> &'static str {
        match self {
            Description::Cky => "cky",
            Description::CkyUnary => "cky-unary",
        }
    }

    /// The smallest built-in description that covers every rule shape.
    pub fn for_grammar(g: &Grammar) -> Self {
        let has_unary = g
            .rules()
            .iter()
            .any(|r| matches!(r.rhs.as_slice(), [Symbol::Nonterminal(_)]));
        if has_unary {
            Description::CkyUnary
        } else {
            Description::Cky
        }
    }

    pub fn validate(self, g: &Grammar) -> Result<()> {
        for rule in g.rules() {
            let fits = match rule.rhs.as_slice() {
                [Symbol::Terminal(_)] => true,
                [Symbol::Nonterminal(_), Symbol::Nonterminal(_)] => true,
                [Symbol::Nonterminal(_)] => self == Description::CkyUnary,
                _ => false,
            };
            if !fits {
                return Err(Error::DescriptionMismatch {
                    rule: g.display_rule(rule.id),
                    description: self.name().to_string(),
                });
            }
        }
        Ok(())
    }
}

impl fmt::Display for Description {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Derivable items and the instances that conclude them.
#[derive(Clone, Debug)]
pub struct Instantiation {
    pub items: Vec<Item>,
    pub instances: Vec<InferenceInstance>,
    pub goal: Item,
}

/// Instantiates `description` over `sentence`, keeping only items that are
/// derivable bottom-up.
pub fn instantiate(
    g: &Grammar,
    description: Description,
    sentence: &[TerminalId],
) -> Result<Instantiation> {
    instantiate_guarded(g, description, sentence, |_| true)
}

/// Like [`instantiate`], with a side condition: an instance is kept only
/// when `guard` accepts it. Guards filter instances and never contribute
/// values.
pub fn instantiate_guarded(
    g: &Grammar,
    description: Description,
    sentence: &[TerminalId],
    guard: impl Fn(&InferenceInstance) -> bool,
) -> Result<Instantiation> {
    description.validate(g)?;
    if sentence.is_empty() {
        return Err(Error::InvalidArgument("sentence must be non-empty".into()));
    }
    let n = sentence.len();
    let nn = g.num_nonterminals();

    let mut lexical: HashMap<TerminalId, Vec<RuleId>> = HashMap::new();
    let mut unary_by_child: Vec<Vec<RuleId>> = vec![Vec::new(); nn];
    let mut binary_by_left: Vec<Vec<(RuleId, NonterminalId)>> = vec![Vec::new(); nn];
    for rule in g.rules() {
        match rule.rhs.as_slice() {
            [Symbol::Terminal(t)] => lexical.entry(*t).or_default().push(rule.id),
            [Symbol::Nonterminal(b)] => unary_by_child[b.0].push(rule.id),
            [Symbol::Nonterminal(b), Symbol::Nonterminal(c)] => {
                binary_by_left[b.0].push((rule.id, *c))
            }
            _ => unreachable!("validated above"),
        }
    }

    let cell = |i: usize, j: usize, a: NonterminalId| (i * (n + 1) + j) * nn + a.0;
    let mut derivable = vec![false; (n + 1) * (n + 1) * nn];
    let mut items = Vec::new();
    let mut instances = Vec::new();

    for len in 1..=n {
        for i in 0..=n - len {
            let j = i + len;
            let mut candidates = Vec::new();
            if len == 1 {
                for &r in lexical.get(&sentence[i]).into_iter().flatten() {
                    candidates.push(InferenceInstance {
                        conclusion: Item::new(i, g.rule(r).lhs, j),
                        rule: r,
                        antecedents: Vec::new(),
                    });
                }
            } else {
                for k in i + 1..j {
                    for b in g.nonterminal_ids() {
                        if !derivable[cell(i, k, b)] {
                            continue;
                        }
                        for &(r, c) in &binary_by_left[b.0] {
                            if derivable[cell(k, j, c)] {
                                candidates.push(InferenceInstance {
                                    conclusion: Item::new(i, g.rule(r).lhs, j),
                                    rule: r,
                                    antecedents: vec![Item::new(i, b, k), Item::new(k, c, j)],
                                });
                            }
                        }
                    }
                }
            }

            let mut fresh = Vec::new();
            let mut accept = |inst: InferenceInstance,
                              derivable: &mut Vec<bool>,
                              items: &mut Vec<Item>,
                              fresh: &mut Vec<NonterminalId>| {
                if !guard(&inst) {
                    return;
                }
                let a = inst.conclusion.nt;
                if !derivable[cell(i, j, a)] {
                    derivable[cell(i, j, a)] = true;
                    items.push(inst.conclusion);
                    fresh.push(a);
                }
                instances.push(inst);
            };
            for inst in candidates {
                accept(inst, &mut derivable, &mut items, &mut fresh);
            }
            // unary closure within the span; each item is expanded once
            while let Some(b) = fresh.pop() {
                for &r in &unary_by_child[b.0] {
                    let inst = InferenceInstance {
                        conclusion: Item::new(i, g.rule(r).lhs, j),
                        rule: r,
                        antecedents: vec![Item::new(i, b, j)],
                    };
                    accept(inst, &mut derivable, &mut items, &mut fresh);
                }
            }
        }
    }
    Ok(Instantiation {
        items,
        instances,
        goal: Item::new(0, g.start(), n),
    })
}

/// A strongly connected group of items, computed together.
#[derive(Clone, Debug)]
pub struct Bucket {
    pub items: Vec<usize>,
    /// More than one item, or an item that depends on itself.
    pub looping: bool,
    pub inner_outcome: Option<LoopOutcome>,
    pub outer_outcome: Option<LoopOutcome>,
}

/// Groups items into strongly connected components of the dependency graph
/// (antecedent → conclusion) and orders them so that every bucket comes
/// after the buckets it depends on. Ties go to shorter spans, then earlier
/// starts, so the order reads bottom-up.
pub fn bucket_order(items: &[Item], instances: &[InferenceInstance]) -> Vec<Bucket> {
    let index: HashMap<Item, usize> = items.iter().enumerate().map(|(i, x)| (*x, i)).collect();
    let mut graph: DiGraph<(), ()> = DiGraph::with_capacity(items.len(), instances.len());
    for _ in items {
        graph.add_node(());
    }
    let mut self_loop = vec![false; items.len()];
    for inst in instances {
        let to = index[&inst.conclusion];
        for a in &inst.antecedents {
            let from = index[a];
            if from == to {
                self_loop[to] = true;
            }
            graph.update_edge(NodeIndex::new(from), NodeIndex::new(to), ());
        }
    }

    let sccs = tarjan_scc(&graph);
    let mut comp_of = vec![0; items.len()];
    for (c, comp) in sccs.iter().enumerate() {
        for node in comp {
            comp_of[node.index()] = c;
        }
    }
    let mut succ: Vec<Vec<usize>> = vec![Vec::new(); sccs.len()];
    let mut indegree = vec![0usize; sccs.len()];
    for edge in graph.raw_edges() {
        let (a, b) = (
            comp_of[edge.source().index()],
            comp_of[edge.target().index()],
        );
        if a != b {
            succ[a].push(b);
            indegree[b] += 1;
        }
    }
    let key = |c: usize| {
        sccs[c]
            .iter()
            .map(|n| items[n.index()].schedule_key())
            .min()
            .expect("non-empty component")
    };
    let mut ready: BinaryHeap<Reverse<(_, usize)>> = (0..sccs.len())
        .filter(|&c| indegree[c] == 0)
        .map(|c| Reverse((key(c), c)))
        .collect();
    let mut buckets = Vec::with_capacity(sccs.len());
    while let Some(Reverse((_, c))) = ready.pop() {
        let mut members: Vec<usize> = sccs[c].iter().map(|n| n.index()).collect();
        members.sort_by_key(|&m| items[m].schedule_key());
        let looping = members.len() > 1 || self_loop[members[0]];
        buckets.push(Bucket {
            items: members,
            looping,
            inner_outcome: None,
            outer_outcome: None,
        });
        for &d in &succ[c] {
            indegree[d] -= 1;
            if indegree[d] == 0 {
                ready.push(Reverse((key(d), d)));
            }
        }
    }
    buckets
}

/// Stopping policy for looping buckets.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LoopConfig {
    /// Absolute per-entry tolerance between successive generations; exact
    /// equality is used for idempotent semirings.
    pub tolerance: f64,
    pub max_generations: usize,
}

impl Default for LoopConfig {
    fn default() -> Self {
        LoopConfig {
            tolerance: DEFAULT_TOLERANCE,
            max_generations: 10_000,
        }
    }
}

impl LoopConfig {
    pub fn validate(&self) -> Result<()> {
        if self.tolerance.is_nan() || self.tolerance <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "tolerance must be positive, got {}",
                self.tolerance
            )));
        }
        if self.max_generations == 0 {
            return Err(Error::InvalidArgument(
                "max generations must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LoopOutcome {
    /// The generation at which values stopped changing, or the limit.
    pub generations: usize,
    pub converged: bool,
}

/// Instantiated items with their inner (and, after the outside pass,
/// outer) values.
#[derive(Clone, Debug)]
pub struct Chart<'g, S: Semiring> {
    cfg: &'g WeightedCfg<S>,
    sentence: Vec<TerminalId>,
    items: Vec<Item>,
    index: HashMap<Item, usize>,
    instances: Vec<InferenceInstance>,
    by_conclusion: Vec<Vec<usize>>,
    /// For each item: (instance, position among the item antecedents).
    uses: Vec<Vec<(usize, usize)>>,
    pub(crate) buckets: Vec<Bucket>,
    bucket_of: Vec<usize>,
    goal: Item,
    pub(crate) inner: Vec<Option<Tensor<S::Elem>>>,
    pub(crate) outer: Vec<Option<Tensor<S::Elem>>>,
}

impl<'g, S: Semiring> Chart<'g, S> {
    pub fn new(
        cfg: &'g WeightedCfg<S>,
        description: Description,
        sentence: &[TerminalId],
    ) -> Result<Self> {
        Self::from_instantiation(
            cfg,
            sentence,
            instantiate(cfg.grammar(), description, sentence)?,
        )
    }

    pub fn with_guard(
        cfg: &'g WeightedCfg<S>,
        description: Description,
        sentence: &[TerminalId],
        guard: impl Fn(&InferenceInstance) -> bool,
    ) -> Result<Self> {
        let inst = instantiate_guarded(cfg.grammar(), description, sentence, guard)?;
        Self::from_instantiation(cfg, sentence, inst)
    }

    fn from_instantiation(
        cfg: &'g WeightedCfg<S>,
        sentence: &[TerminalId],
        inst: Instantiation,
    ) -> Result<Self> {
        let Instantiation {
            items,
            instances,
            goal,
        } = inst;
        let index: HashMap<Item, usize> = items.iter().enumerate().map(|(i, x)| (*x, i)).collect();
        let mut by_conclusion = vec![Vec::new(); items.len()];
        let mut uses = vec![Vec::new(); items.len()];
        for (k, inst) in instances.iter().enumerate() {
            by_conclusion[index[&inst.conclusion]].push(k);
            for (p, a) in inst.antecedents.iter().enumerate() {
                uses[index[a]].push((k, p));
            }
        }
        let buckets = bucket_order(&items, &instances);
        let mut bucket_of = vec![0; items.len()];
        for (b, bucket) in buckets.iter().enumerate() {
            for &x in &bucket.items {
                bucket_of[x] = b;
            }
        }
        let n = items.len();
        Ok(Chart {
            cfg,
            sentence: sentence.to_vec(),
            items,
            index,
            instances,
            by_conclusion,
            uses,
            buckets,
            bucket_of,
            goal,
            inner: vec![None; n],
            outer: vec![None; n],
        })
    }

    pub fn cfg(&self) -> &'g WeightedCfg<S> {
        self.cfg
    }

    pub fn semiring(&self) -> &'g S {
        self.cfg.semiring()
    }

    pub fn sentence(&self) -> &[TerminalId] {
        &self.sentence
    }

    pub fn items(&self) -> &[Item] {
        &self.items
    }

    pub fn instances(&self) -> &[InferenceInstance] {
        &self.instances
    }

    pub fn buckets(&self) -> &[Bucket] {
        &self.buckets
    }

    pub fn goal(&self) -> Item {
        self.goal
    }

    pub fn index_of(&self, x: Item) -> Option<usize> {
        self.index.get(&x).copied()
    }

    pub fn bucket_of(&self, idx: usize) -> usize {
        self.bucket_of[idx]
    }

    /// Instances concluding item `idx`.
    pub fn instances_concluding(&self, idx: usize) -> &[usize] {
        &self.by_conclusion[idx]
    }

    /// `(instance, antecedent position)` pairs where item `idx` is used.
    pub fn uses_of(&self, idx: usize) -> &[(usize, usize)] {
        &self.uses[idx]
    }

    pub fn is_derivable(&self) -> bool {
        self.index.contains_key(&self.goal)
    }

    pub fn inner(&self, x: Item) -> Option<&Tensor<S::Elem>> {
        self.index_of(x).and_then(|i| self.inner[i].as_ref())
    }

    /// Shape `[dim(nt)]` of an item's inner value.
    pub fn item_shape(&self, idx: usize) -> Shape {
        Shape::new(vec![self.cfg.grammar().dim(self.items[idx].nt)]).expect("dims are positive")
    }

    pub(crate) fn inner_at(&self, idx: usize) -> Result<&Tensor<S::Elem>> {
        self.inner[idx].as_ref().ok_or_else(|| {
            Error::Scheduling(format!(
                "inner value of [{}] read before it was computed",
                self.items[idx].display(self.cfg.grammar())
            ))
        })
    }

    /// `w(rule) ⊗ [K(a₂), …, K(a_k)]` for one instance, where `value` gives
    /// the antecedent values.
    fn instance_inner<'a>(
        &self,
        k: usize,
        value: impl Fn(usize) -> Result<&'a Tensor<S::Elem>>,
    ) -> Result<Tensor<S::Elem>>
    where
        S::Elem: 'a,
    {
        let inst = &self.instances[k];
        let args = inst
            .antecedents
            .iter()
            .map(|a| value(self.index[a]))
            .collect::<Result<Vec<_>>>()?;
        contract_list_in_order(self.semiring(), self.cfg.weight(inst.rule), &args)
    }

    /// `V(x) = ⊕ V(a₁) ⊗ [V(a₂), …, V(a_k)]` over the instances concluding
    /// `x`. Every antecedent must already have its value.
    pub fn inner_value(&mut self, x: Item) -> Result<&Tensor<S::Elem>> {
        let idx = self.index_of(x).ok_or_else(|| {
            Error::InvalidArgument(format!(
                "[{}] is not derivable",
                x.display(self.cfg.grammar())
            ))
        })?;
        if self.buckets[self.bucket_of[idx]].looping {
            return Err(Error::InvalidArgument(format!(
                "[{}] is in a looping bucket",
                x.display(self.cfg.grammar())
            )));
        }
        let s = self.semiring();
        let mut total = zero_tensor(s, self.item_shape(idx));
        for &k in &self.by_conclusion[idx] {
            let v = self.instance_inner(k, |a| self.inner_at(a))?;
            add_assign(s, &mut total, &v)?;
        }
        self.inner[idx] = Some(total);
        Ok(self.inner[idx].as_ref().expect("just set"))
    }

    /// Generation-wise fixpoint iteration for a looping bucket, starting
    /// from zero: antecedents inside the bucket take the previous
    /// generation's value, all others their final value.
    pub fn inner_value_looping(
        &mut self,
        bucket: usize,
        config: &LoopConfig,
    ) -> Result<LoopOutcome> {
        config.validate()?;
        let s = self.semiring();
        if !s.is_omega_continuous() {
            return Err(Error::Unsupported(format!(
                "fixpoint iteration needs an omega-continuous semiring, {} is not",
                s.name()
            )));
        }
        let members = self.buckets[bucket].items.clone();
        let pos: HashMap<usize, usize> = members.iter().enumerate().map(|(p, &m)| (m, p)).collect();
        let mut current: Vec<Tensor<S::Elem>> = members
            .iter()
            .map(|&m| zero_tensor(s, self.item_shape(m)))
            .collect();
        let mut outcome = LoopOutcome {
            generations: config.max_generations,
            converged: false,
        };
        for generation in 1..=config.max_generations {
            let mut next = Vec::with_capacity(members.len());
            for &m in &members {
                let mut total = zero_tensor(s, self.item_shape(m));
                for &k in &self.by_conclusion[m] {
                    let v = self.instance_inner(k, |a| match pos.get(&a) {
                        Some(&p) => Ok(&current[p]),
                        None => self.inner_at(a),
                    })?;
                    add_assign(s, &mut total, &v)?;
                }
                next.push(total);
            }
            let same = next
                .iter()
                .zip(&current)
                .all(|(a, b)| same_generation(s, a, b, config.tolerance));
            current = next;
            if same {
                outcome = LoopOutcome {
                    generations: generation,
                    converged: true,
                };
                break;
            }
        }
        for (&m, v) in members.iter().zip(current) {
            self.inner[m] = Some(v);
        }
        self.buckets[bucket].inner_outcome = Some(outcome);
        Ok(outcome)
    }

    /// Computes every inner value in bucket order.
    pub fn compute_inner(&mut self, config: &LoopConfig) -> Result<()> {
        for b in 0..self.buckets.len() {
            if self.buckets[b].looping {
                self.inner_value_looping(b, config)?;
            } else {
                let x = self.items[self.buckets[b].items[0]];
                self.inner_value(x)?;
            }
        }
        Ok(())
    }

    /// `V(goal)`, or the zero vector when the goal is not derivable.
    pub fn goal_value(&self) -> Result<Tensor<S::Elem>> {
        match self.index_of(self.goal) {
            Some(idx) => Ok(self.inner_at(idx)?.clone()),
            None => Ok(zero_tensor(
                self.semiring(),
                Shape::new(vec![self.cfg.start_dim()])?,
            )),
        }
    }

    /// One warning line per looping bucket that hit the generation limit.
    pub fn warnings(&self) -> Vec<String> {
        let g = self.cfg.grammar();
        let mut out = Vec::new();
        for b in &self.buckets {
            for (what, outcome) in [("inner", b.inner_outcome), ("outer", b.outer_outcome)] {
                if let Some(o) = outcome.filter(|o| !o.converged) {
                    let names: Vec<String> = b
                        .items
                        .iter()
                        .map(|&m| format!("[{}]", self.items[m].display(g)))
                        .collect();
                    out.push(format!(
                        "warning: {what} values of looping bucket {} did not converge within {} generations",
                        names.join(" "),
                        o.generations
                    ));
                }
            }
        }
        out
    }

    /// Chart listing of inner values: `i NT j : [values]` per item, `---`
    /// between buckets, `(loop, g=N)` before looping buckets.
    pub fn dump_inner(&self) -> String {
        self.dump(&self.inner, |b| b.inner_outcome)
    }

    pub(crate) fn dump(
        &self,
        values: &[Option<Tensor<S::Elem>>],
        outcome: impl Fn(&Bucket) -> Option<LoopOutcome>,
    ) -> String {
        let g = self.cfg.grammar();
        let s = self.semiring();
        let mut out = Vec::new();
        for (b, bucket) in self.buckets.iter().enumerate() {
            if b > 0 {
                out.push("---".to_string());
            }
            if bucket.looping {
                match outcome(bucket) {
                    Some(o) => out.push(format!("(loop, g={})", o.generations)),
                    None => out.push("(loop)".to_string()),
                }
            }
            for &m in &bucket.items {
                let v = match &values[m] {
                    Some(t) => t.format_with(|x| s.format_value(x)),
                    None => "unset".to_string(),
                };
                out.push(format!("{} : {v}", self.items[m].display(g)));
            }
        }
        let mut text = out.join("\n");
        text.push('\n');
        text
    }

    /// All item derivation trees of the goal, up to `cap`. Only available
    /// when no bucket loops (otherwise there are infinitely many).
    pub fn item_trees(&self, cap: usize) -> Result<(Vec<ItemTree>, bool)> {
        if self.buckets.iter().any(|b| b.looping) {
            return Err(Error::Unsupported(
                "item trees of a cyclic chart are unbounded".into(),
            ));
        }
        let Some(goal) = self.index_of(self.goal) else {
            return Ok((Vec::new(), false));
        };
        let mut memo: HashMap<usize, Vec<ItemTree>> = HashMap::new();
        let mut truncated = false;
        let trees = self.trees_of(goal, cap, &mut memo, &mut truncated);
        Ok((trees, truncated))
    }

    fn trees_of(
        &self,
        idx: usize,
        cap: usize,
        memo: &mut HashMap<usize, Vec<ItemTree>>,
        truncated: &mut bool,
    ) -> Vec<ItemTree> {
        if let Some(hit) = memo.get(&idx) {
            return hit.clone();
        }
        let mut out = Vec::new();
        for &k in &self.by_conclusion[idx] {
            let inst = &self.instances[k];
            let child_sets: Vec<Vec<ItemTree>> = inst
                .antecedents
                .iter()
                .map(|a| self.trees_of(self.index[a], cap, memo, truncated))
                .collect();
            let mut partial: Vec<Vec<ItemTree>> = vec![Vec::new()];
            for set in &child_sets {
                let mut grown = Vec::new();
                for p in &partial {
                    for t in set {
                        if grown.len() >= cap {
                            *truncated = true;
                            break;
                        }
                        let mut q = p.clone();
                        q.push(t.clone());
                        grown.push(q);
                    }
                }
                partial = grown;
            }
            for children in partial {
                if out.len() >= cap {
                    *truncated = true;
                    break;
                }
                out.push(ItemTree {
                    item: inst.conclusion,
                    rule: inst.rule,
                    children,
                });
            }
        }
        memo.insert(idx, out.clone());
        out
    }
}

/// Iterates until two generations agree: exactly for idempotent semirings,
/// within `tolerance` otherwise.
pub(crate) fn same_generation<S: Semiring>(
    s: &S,
    a: &Tensor<S::Elem>,
    b: &Tensor<S::Elem>,
    tolerance: f64,
) -> bool {
    if s.is_idempotent() {
        a == b
    } else {
        approx_eq(s, a, b, tolerance)
    }
}

/// Builds the chart, computes all inner values, and returns `V(goal)`.
pub fn sentence_value<S: Semiring>(
    cfg: &WeightedCfg<S>,
    description: Description,
    sentence: &[TerminalId],
    config: &LoopConfig,
) -> Result<Tensor<S::Elem>> {
    let mut chart = Chart::new(cfg, description, sentence)?;
    chart.compute_inner(config)?;
    chart.goal_value()
}

/// An item derivation tree: each node is an instance, labelled by its
/// conclusion and rule, with one subtree per item antecedent.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ItemTree {
    pub item: Item,
    pub rule: RuleId,
    pub children: Vec<ItemTree>,
}

impl ItemTree {
    /// Maps a grammar derivation tree whose yield starts at `start` to the
    /// item tree with the same rules and the induced spans.
    pub fn from_derivation(g: &Grammar, t: &DerivationTree, start: usize) -> ItemTree {
        let mut pos = start;
        let mut children = Vec::with_capacity(t.children.len());
        let mut sub = t.children.iter();
        for sym in &g.rule(t.rule).rhs {
            match sym {
                Symbol::Terminal(_) => pos += 1,
                Symbol::Nonterminal(_) => {
                    let child =
                        ItemTree::from_derivation(g, sub.next().expect("validated tree"), pos);
                    pos = child.item.end;
                    children.push(child);
                }
            }
        }
        ItemTree {
            item: Item::new(start, g.rule(t.rule).lhs, pos),
            rule: t.rule,
            children,
        }
    }

    /// Forgets the spans.
    pub fn to_derivation(&self) -> DerivationTree {
        DerivationTree::node(
            self.rule,
            self.children.iter().map(ItemTree::to_derivation).collect(),
        )
    }

    /// Item labels of all nodes, preorder.
    pub fn items(&self) -> Vec<Item> {
        let mut out = Vec::new();
        let mut stack = vec![self];
        while let Some(t) = stack.pop() {
            out.push(t.item);
            stack.extend(t.children.iter().rev());
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::derivation::sentence_value_oracle;
    use crate::grammar::{enumerate_derivations, GrammarBuilder};
    use crate::semiring::{Boolean, Counting, Probability, Viterbi};

    fn aaa_grammar(s_dim: usize, a_dim: usize) -> Grammar {
        let mut b = GrammarBuilder::new();
        b.nonterminal("S", s_dim).nonterminal("A", a_dim).start("S");
        b.rule("S", &["A", "A"]);
        b.rule("A", &["A", "A"]);
        b.rule("A", &["a"]);
        b.build().unwrap()
    }

    fn filled<S: Semiring>(g: Grammar, s: S, v: S::Elem) -> WeightedCfg<S> {
        let w = g
            .rules()
            .iter()
            .map(|r| Tensor::filled(g.expected_shape(r.id), v.clone()))
            .collect();
        WeightedCfg::new(g, w, s).unwrap()
    }

    fn probability_aaa() -> WeightedCfg<Probability> {
        let g = aaa_grammar(2, 3);
        let mut k = 0u32;
        let w = g
            .rules()
            .iter()
            .map(|r| {
                Tensor::from_fn(g.expected_shape(r.id), |_| {
                    k += 3;
                    0.05 + f64::from(k % 11) * 0.07
                })
            })
            .collect();
        WeightedCfg::new(g, w, Probability).unwrap()
    }

    fn sentence(g: &Grammar, text: &str) -> Vec<TerminalId> {
        g.encode_sentence(&text.split_whitespace().collect::<Vec<_>>())
            .unwrap()
    }

    #[test]
    fn aaa_items_include_both_derivations() {
        let g = aaa_grammar(2, 3);
        let s = sentence(&g, "a a a");
        let inst = instantiate(&g, Description::Cky, &s).unwrap();
        let a = g.nonterminal("A").unwrap();
        let start = g.start();
        for item in [
            Item::new(0, a, 1),
            Item::new(1, a, 2),
            Item::new(2, a, 3),
            Item::new(1, a, 3),
            Item::new(0, a, 2),
            Item::new(0, start, 3),
        ] {
            assert!(inst.items.contains(&item), "{item:?}");
        }
        assert_eq!(inst.goal, Item::new(0, start, 3));
        let to_goal = inst
            .instances
            .iter()
            .filter(|i| i.conclusion == inst.goal)
            .count();
        assert_eq!(to_goal, 2);
    }

    #[test]
    fn single_token_single_instance() {
        let mut b = GrammarBuilder::new();
        b.nonterminal("S", 1).start("S");
        b.rule("S", &["a"]);
        let g = b.build().unwrap();
        let inst = instantiate(&g, Description::Cky, &sentence(&g, "a")).unwrap();
        assert_eq!(inst.instances.len(), 1);
        assert_eq!(inst.instances[0].conclusion, inst.goal);
    }

    #[test]
    fn long_rules_do_not_fit() {
        let mut b = GrammarBuilder::new();
        b.nonterminal("A", 1).nonterminal("B", 1).start("A");
        b.rule("A", &["B", "B", "B"]);
        b.rule("B", &["b"]);
        let g = b.build().unwrap();
        let err = instantiate(&g, Description::CkyUnary, &sentence(&g, "b b b")).unwrap_err();
        match err {
            Error::DescriptionMismatch { rule, .. } => assert_eq!(rule, "A -> B B B"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unary_rules_need_the_extended_description() {
        let mut b = GrammarBuilder::new();
        b.nonterminal("S", 1).nonterminal("A", 1).start("S");
        b.rule("S", &["A"]);
        b.rule("A", &["a"]);
        let g = b.build().unwrap();
        assert!(Description::Cky.validate(&g).is_err());
        assert_eq!(Description::for_grammar(&g), Description::CkyUnary);
    }

    #[test]
    fn binary_buckets_are_singletons() {
        let g = aaa_grammar(1, 1);
        let inst = instantiate(&g, Description::Cky, &sentence(&g, "a a a a")).unwrap();
        let buckets = bucket_order(&inst.items, &inst.instances);
        assert_eq!(buckets.len(), inst.items.len());
        assert!(buckets.iter().all(|b| !b.looping && b.items.len() == 1));
    }

    #[test]
    fn unary_cycle_forms_looping_bucket() {
        let mut b = GrammarBuilder::new();
        b.nonterminal("S", 1).nonterminal("A", 1).start("S");
        b.rule("S", &["A"]);
        b.rule("A", &["S"]);
        b.rule("A", &["a"]);
        let g = b.build().unwrap();
        let inst = instantiate(&g, Description::CkyUnary, &sentence(&g, "a")).unwrap();
        let buckets = bucket_order(&inst.items, &inst.instances);
        assert_eq!(buckets.len(), 1);
        assert!(buckets[0].looping);
        assert_eq!(buckets[0].items.len(), 2);

        let mut b = GrammarBuilder::new();
        b.nonterminal("A", 1).start("A");
        b.rule("A", &["A"]);
        b.rule("A", &["a"]);
        let g = b.build().unwrap();
        let inst = instantiate(&g, Description::CkyUnary, &sentence(&g, "a")).unwrap();
        let buckets = bucket_order(&inst.items, &inst.instances);
        assert_eq!(buckets.len(), 1);
        assert!(buckets[0].looping, "self-edge");
    }

    #[test]
    fn acyclic_unary_chain_is_ordered() {
        let mut b = GrammarBuilder::new();
        b.nonterminal("A", 1)
            .nonterminal("B", 1)
            .nonterminal("C", 1)
            .start("A");
        b.rule("A", &["B"]);
        b.rule("B", &["C"]);
        b.rule("C", &["c"]);
        let g = b.build().unwrap();
        let inst = instantiate(&g, Description::CkyUnary, &sentence(&g, "c")).unwrap();
        let buckets = bucket_order(&inst.items, &inst.instances);
        let order: Vec<&str> = buckets
            .iter()
            .map(|b| {
                assert!(!b.looping);
                g.nonterminal_name(inst.items[b.items[0]].nt)
            })
            .collect();
        assert_eq!(order, vec!["C", "B", "A"]);
    }

    #[test]
    fn reading_unset_antecedent_is_a_scheduling_error() {
        let cfg = probability_aaa();
        let s = sentence(cfg.grammar(), "a a");
        let mut chart = Chart::new(&cfg, Description::Cky, &s).unwrap();
        let goal = chart.goal();
        assert!(matches!(chart.inner_value(goal), Err(Error::Scheduling(_))));
    }

    #[test]
    fn lexical_item_value_is_rule_weight() {
        let cfg = probability_aaa();
        let s = sentence(cfg.grammar(), "a a");
        let mut chart = Chart::new(&cfg, Description::Cky, &s).unwrap();
        chart.compute_inner(&LoopConfig::default()).unwrap();
        let a = cfg.grammar().nonterminal("A").unwrap();
        assert_eq!(
            chart.inner(Item::new(0, a, 1)).unwrap(),
            cfg.weight(RuleId(2))
        );
    }

    #[test]
    fn aaa_sentence_value_matches_enumeration() {
        let cfg = probability_aaa();
        let s = sentence(cfg.grammar(), "a a a");
        let got = sentence_value(&cfg, Description::Cky, &s, &LoopConfig::default()).unwrap();
        let (want, _) = sentence_value_oracle(&cfg, &s, 1000).unwrap();
        assert!(approx_eq(&Probability, &got, &want, 1e-12));
    }

    #[test]
    fn counting_and_boolean_aaa() {
        let s_text = "a a a";
        let counting = filled(aaa_grammar(1, 1), Counting, 1);
        let s = sentence(counting.grammar(), s_text);
        let v = sentence_value(&counting, Description::Cky, &s, &LoopConfig::default()).unwrap();
        assert_eq!(v.data(), &[2]);
        let boolean = filled(aaa_grammar(1, 1), Boolean, true);
        let v = sentence_value(&boolean, Description::Cky, &s, &LoopConfig::default()).unwrap();
        assert_eq!(v.data(), &[true]);
        let short = sentence(boolean.grammar(), "a");
        let v = sentence_value(&boolean, Description::Cky, &short, &LoopConfig::default()).unwrap();
        assert_eq!(v.data(), &[false]);
    }

    fn unary_loop(c: f64, w: f64) -> WeightedCfg<Probability> {
        let mut b = GrammarBuilder::new();
        b.nonterminal("A", 1).start("A");
        b.rule("A", &["A"]);
        b.rule("A", &["a"]);
        let g = b.build().unwrap();
        let weights = vec![
            Tensor::filled(Shape::from([1, 1]), c),
            Tensor::filled(Shape::from([1]), w),
        ];
        WeightedCfg::new(g, weights, Probability).unwrap()
    }

    #[test]
    fn geometric_unary_cycle() {
        let cfg = unary_loop(0.5, 0.3);
        let s = sentence(cfg.grammar(), "a");
        let mut chart = Chart::new(&cfg, Description::CkyUnary, &s).unwrap();
        chart.compute_inner(&LoopConfig::default()).unwrap();
        let v = chart.goal_value().unwrap().data()[0];
        assert!((v - 0.6).abs() < 1e-9);
        let outcome = chart.buckets()[0].inner_outcome.unwrap();
        assert!(outcome.converged);
        assert!(chart
            .dump_inner()
            .starts_with(&format!("(loop, g={})\n0 A 1 : ", outcome.generations)));
    }

    #[test]
    fn boolean_cycle_converges_in_two_generations() {
        let cfg = unary_loop(1.0, 1.0).map_weights(Boolean, |_, &x| x > 0.0);
        let s = sentence(cfg.grammar(), "a");
        let mut chart = Chart::new(&cfg, Description::CkyUnary, &s).unwrap();
        let outcome = chart
            .inner_value_looping(0, &LoopConfig::default())
            .unwrap();
        assert_eq!(
            outcome,
            LoopOutcome {
                generations: 2,
                converged: true
            }
        );
        assert_eq!(chart.goal_value().unwrap().data(), &[true]);
    }

    #[test]
    fn non_convergence_is_reported() {
        let cfg = unary_loop(0.99, 1.0);
        let s = sentence(cfg.grammar(), "a");
        let mut chart = Chart::new(&cfg, Description::CkyUnary, &s).unwrap();
        let config = LoopConfig {
            tolerance: 1e-12,
            max_generations: 5,
        };
        let outcome = chart.inner_value_looping(0, &config).unwrap();
        assert!(!outcome.converged);
        assert_eq!(chart.warnings().len(), 1);
    }

    #[test]
    fn looping_values_increase_with_generations() {
        let cfg = unary_loop(0.7, 0.2).map_weights(Viterbi, |_, &x| x);
        let s = sentence(cfg.grammar(), "a");
        let mut prev = 0.0;
        for max_generations in 1..6 {
            let mut chart = Chart::new(&cfg, Description::CkyUnary, &s).unwrap();
            chart
                .inner_value_looping(
                    0,
                    &LoopConfig {
                        tolerance: 1e-9,
                        max_generations,
                    },
                )
                .unwrap();
            let v = chart.goal_value().unwrap().data()[0];
            assert!(Viterbi.natural_leq(&prev, &v).unwrap());
            prev = v;
        }
    }

    #[test]
    fn guard_filters_instances() {
        let cfg = filled(aaa_grammar(1, 1), Counting, 1);
        let s = sentence(cfg.grammar(), "a a a");
        // forbid splitting the goal after the first token
        let mut chart = Chart::with_guard(&cfg, Description::Cky, &s, |inst| {
            !(inst.conclusion.end - inst.conclusion.start == 3 && inst.antecedents[0].end == 1)
        })
        .unwrap();
        chart.compute_inner(&LoopConfig::default()).unwrap();
        assert_eq!(chart.goal_value().unwrap().data(), &[1]);
    }

    #[test]
    fn item_trees_biject_with_derivations() {
        let cfg = filled(aaa_grammar(1, 1), Counting, 1);
        let s = sentence(cfg.grammar(), "a a a a");
        let chart = Chart::new(&cfg, Description::Cky, &s).unwrap();
        let (item_trees, truncated) = chart.item_trees(1000).unwrap();
        assert!(!truncated);
        let e = enumerate_derivations(cfg.grammar(), &s, 1000).unwrap();
        assert_eq!(item_trees.len(), e.trees.len());
        for t in &e.trees {
            let it = ItemTree::from_derivation(cfg.grammar(), t, 0);
            assert!(item_trees.contains(&it));
            assert_eq!(&it.to_derivation(), t);
            assert_eq!(it.item, chart.goal());
        }
    }

    #[test]
    fn dump_lists_buckets() {
        let cfg = filled(aaa_grammar(1, 1), Counting, 1);
        let s = sentence(cfg.grammar(), "a a");
        let mut chart = Chart::new(&cfg, Description::Cky, &s).unwrap();
        chart.compute_inner(&LoopConfig::default()).unwrap();
        let text = chart.dump_inner();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(
            lines,
            vec![
                "0 A 1 : [1]",
                "---",
                "1 A 2 : [1]",
                "---",
                "0 S 2 : [1]",
                "---",
                "0 A 2 : [1]"
            ]
        );
    }
}
