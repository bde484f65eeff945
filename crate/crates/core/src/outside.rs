//! Outer values, the standalone outer-tree valuation, and expected counts.
//!
//! `Z(x)` has shape `[dim(x)] ++ [dim(S)]`: it maps an inner value of `x`
//! to the vector of sentence values it contributes to. Only commutative
//! semirings are supported.

use std::collections::{BTreeMap, HashMap};

use crate::deduction::{same_generation, Chart, Item, LoopConfig, LoopOutcome};
use crate::derivation::tree_value;
use crate::error::{Error, Result};
use crate::grammar::{DerivationTree, RuleId, WeightedCfg};
use crate::semiring::{Probability, Semiring};
use crate::tensor::{
    add_assign, approx_eq, contract_list, contract_list_at, contract_list_in_order, contract_star,
    identity_tensor, invert_permutation, zero_tensor, Shape, Tensor,
};

fn require_commutative<S: Semiring>(s: &S) -> Result<()> {
    if s.is_commutative() {
        Ok(())
    } else {
        Err(Error::Unsupported(format!(
            "outer values need a commutative semiring and {} is not; \
             the non-commutative outside computation is out of scope",
            s.name()
        )))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
enum Rank {
    Lead(usize),
    OuterStart,
    Removed(usize),
    Start,
    Trail(usize),
}

/// Permutation applied to `w ⊗_k [I, V(later siblings)]` before the earlier
/// siblings and the parent's outer value are contracted.
///
/// After that contraction the ranks are `k` leading sibling ranks, then the
/// identity's block `[d_S, dims(x)…, d_S]` (`rank_tk + 2` ranks), then the
/// trailing parent ranks. The permutation moves the block to the end so the
/// leading ranks meet the earlier siblings and the parent ranks line up with
/// `Z(parent)`. Returned in scatter form: rank `i` goes to `pi[i]`.
pub fn build_pi(k: usize, rank_tk: usize, total_rank: usize) -> Result<Vec<usize>> {
    if rank_tk == 0 || total_rank < k + rank_tk + 2 {
        return Err(Error::InvalidArgument(format!(
            "no outer permutation for k={k}, removed rank {rank_tk}, total rank {total_rank}"
        )));
    }
    let trailing = total_rank - k - rank_tk - 2;
    let block = || {
        std::iter::once(Rank::OuterStart)
            .chain((0..rank_tk).map(Rank::Removed))
            .chain(std::iter::once(Rank::Start))
    };
    let before: Vec<Rank> = (0..k)
        .map(Rank::Lead)
        .chain(block())
        .chain((0..trailing).map(Rank::Trail))
        .collect();
    let after: Vec<Rank> = (0..k)
        .map(Rank::Lead)
        .chain((0..trailing).map(Rank::Trail))
        .chain(block())
        .collect();
    let position: HashMap<Rank, usize> = after.iter().enumerate().map(|(i, r)| (*r, i)).collect();
    let pi: Vec<usize> = before.iter().map(|r| position[r]).collect();
    if rank_tk == 1 {
        let closed = closed_form_pi(k, rank_tk, total_rank);
        if invert_permutation(&pi) != closed {
            return Err(Error::InvalidArgument(format!(
                "outer permutation {pi:?} disagrees with index arithmetic {closed:?}"
            )));
        }
    }
    Ok(pi)
}

/// `[1..i, j+1..n, i+1..j]` with `i = k + r − 1`, `j = k + 2r + 1`, shifted
/// to 0-based and read as a gather list (result rank `t` takes source rank
/// `list[t]`). Agrees with [`build_pi`] for `r = 1`, where `k` is the number
/// of leading sibling ranks.
pub fn closed_form_pi(k: usize, rank_tk: usize, total_rank: usize) -> Vec<usize> {
    let i = k + rank_tk - 1;
    let j = (k + 2 * rank_tk + 1).min(total_rank);
    (0..i).chain(j..total_rank).chain(i..j).collect()
}

impl<S: Semiring> Chart<'_, S> {
    pub fn outer(&self, x: Item) -> Option<&Tensor<S::Elem>> {
        self.index_of(x).and_then(|i| self.outer[i].as_ref())
    }

    fn outer_at(&self, idx: usize) -> Result<&Tensor<S::Elem>> {
        self.outer[idx].as_ref().ok_or_else(|| {
            Error::Scheduling(format!(
                "outer value of [{}] read before it was computed",
                self.items()[idx].display(self.cfg().grammar())
            ))
        })
    }

    fn outer_shape(&self, idx: usize) -> Shape {
        let mut dims = self.item_shape(idx).dims().to_vec();
        dims.push(self.cfg().start_dim());
        Shape::new(dims).expect("dims are positive")
    }

    /// `I_S` for the goal, zero otherwise.
    fn outer_base(&self, idx: usize) -> Result<Tensor<S::Elem>> {
        let s = self.semiring();
        if self.items()[idx] == self.goal() {
            identity_tensor(s, &[self.cfg().start_dim()])
        } else {
            Ok(zero_tensor(s, self.outer_shape(idx)))
        }
    }

    /// `(w ⊗_p [I, V(a_{p+1}), …])^π ⊗ [V(a_0), …, V(a_{p−1})] ⊗* Z(parent)`
    /// for the item at position `p` of instance `k`.
    fn outer_contribution(
        &self,
        k: usize,
        p: usize,
        z_parent: &Tensor<S::Elem>,
    ) -> Result<Tensor<S::Elem>> {
        let s = self.semiring();
        let inst = &self.instances()[k];
        let child = |a: &Item| self.inner_at(self.index_of(*a).expect("antecedents are items"));
        let removed = child(&inst.antecedents[p])?;
        let mut id_dims = removed.dims().to_vec();
        id_dims.push(self.cfg().start_dim());
        let identity = identity_tensor(s, &id_dims)?;

        let mut args = vec![&identity];
        for a in &inst.antecedents[p + 1..] {
            args.push(child(a)?);
        }
        let opened = contract_list_at(s, self.cfg().weight(inst.rule), p, &args)?;
        let pi = build_pi(p, removed.rank(), opened.rank())?;
        let moved = opened.permute(&pi)?;
        let earlier = inst.antecedents[..p]
            .iter()
            .map(child)
            .collect::<Result<Vec<_>>>()?;
        let closed = contract_list(s, &moved, &earlier)?;
        let z = contract_star(s, &closed, z_parent)?;
        debug_assert_eq!(z.rank(), removed.rank() + 1);
        Ok(z)
    }

    /// `Z(x) = [x = goal]·I_S ⊕` the contributions of every instance that
    /// uses `x`. The parents' outer values must already be computed.
    pub fn outer_value(&mut self, x: Item) -> Result<&Tensor<S::Elem>> {
        require_commutative(self.semiring())?;
        let g = self.cfg().grammar();
        let idx = self.index_of(x).ok_or_else(|| {
            Error::InvalidArgument(format!("[{}] is not derivable", x.display(g)))
        })?;
        if self.buckets()[self.bucket_of(idx)].looping {
            return Err(Error::InvalidArgument(format!(
                "[{}] is in a looping bucket",
                x.display(g)
            )));
        }
        let s = self.semiring();
        let mut total = self.outer_base(idx)?;
        for &(k, p) in self.uses_of(idx) {
            let parent = self
                .index_of(self.instances()[k].conclusion)
                .expect("conclusions are items");
            let c = self.outer_contribution(k, p, self.outer_at(parent)?)?;
            add_assign(s, &mut total, &c)?;
        }
        self.outer[idx] = Some(total);
        Ok(self.outer[idx].as_ref().expect("just set"))
    }

    /// Fixpoint iteration for the outer values of a looping bucket: parents
    /// inside the bucket take the previous generation's value.
    pub fn outer_value_looping(
        &mut self,
        bucket: usize,
        config: &LoopConfig,
    ) -> Result<LoopOutcome> {
        config.validate()?;
        let s = self.semiring();
        require_commutative(s)?;
        if !s.is_omega_continuous() {
            return Err(Error::Unsupported(format!(
                "fixpoint iteration needs an omega-continuous semiring, {} is not",
                s.name()
            )));
        }
        let members = self.buckets()[bucket].items.clone();
        let pos: HashMap<usize, usize> = members.iter().enumerate().map(|(p, &m)| (m, p)).collect();
        let mut current: Vec<Tensor<S::Elem>> = members
            .iter()
            .map(|&m| zero_tensor(s, self.outer_shape(m)))
            .collect();
        let mut outcome = LoopOutcome {
            generations: config.max_generations,
            converged: false,
        };
        for generation in 1..=config.max_generations {
            let mut next = Vec::with_capacity(members.len());
            for &m in &members {
                let mut total = self.outer_base(m)?;
                for &(k, p) in self.uses_of(m) {
                    let parent = self
                        .index_of(self.instances()[k].conclusion)
                        .expect("conclusions are items");
                    let z_parent = match pos.get(&parent) {
                        Some(&q) => &current[q],
                        None => self.outer_at(parent)?,
                    };
                    let c = self.outer_contribution(k, p, z_parent)?;
                    add_assign(s, &mut total, &c)?;
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
        for (&m, z) in members.iter().zip(current) {
            self.outer[m] = Some(z);
        }
        self.buckets[bucket].outer_outcome = Some(outcome);
        Ok(outcome)
    }

    /// Computes every outer value in reverse bucket order. Inner values must
    /// be complete.
    pub fn compute_outer(&mut self, config: &LoopConfig) -> Result<()> {
        require_commutative(self.semiring())?;
        for b in (0..self.buckets().len()).rev() {
            if self.buckets()[b].looping {
                self.outer_value_looping(b, config)?;
            } else {
                let x = self.items()[self.buckets()[b].items[0]];
                self.outer_value(x)?;
            }
        }
        Ok(())
    }

    /// `V(x) ⊗* Z(x)`: the sentence value restricted to derivations through
    /// `x`, each counted once per occurrence of `x`.
    pub fn inside_outside_product(&self, x: Item) -> Result<Tensor<S::Elem>> {
        let idx = self.index_of(x).ok_or_else(|| {
            Error::InvalidArgument(format!(
                "[{}] is not derivable",
                x.display(self.cfg().grammar())
            ))
        })?;
        contract_star(self.semiring(), self.inner_at(idx)?, self.outer_at(idx)?)
    }

    /// Chart listing of outer values, in the same format as inner values.
    pub fn dump_outer(&self) -> String {
        self.dump(&self.outer, |b| b.outer_outcome)
    }
}

/// Outer value of the subtree at `path` (child positions from the root),
/// computed directly from the definition: the removed node's index is left
/// free and every other rule weight and sibling value is summed out.
pub fn outer_tree_value<S: Semiring>(
    cfg: &WeightedCfg<S>,
    d: &DerivationTree,
    path: &[usize],
) -> Result<Tensor<S::Elem>> {
    let s = cfg.semiring();
    require_commutative(s)?;
    d.validate(cfg.grammar())?;
    let d_s = cfg.start_dim();
    let mut z = identity_tensor(s, &[d_s])?;
    let mut node = d;
    for &p in path {
        let child = node.children.get(p).ok_or_else(|| {
            Error::InvalidArgument(format!("node {} has no child {p}", node.rule))
        })?;
        let siblings: Vec<Option<Tensor<S::Elem>>> = node
            .children
            .iter()
            .enumerate()
            .map(|(i, c)| {
                if i == p {
                    Ok(None)
                } else {
                    tree_value(cfg, c).map(Some)
                }
            })
            .collect::<Result<_>>()?;
        let w = cfg.weight(node.rule);
        let m = node.children.len();
        let d_x = w.dims()[p];
        let mut next = vec![s.zero(); d_x * d_s];
        for (offset, idx) in w.shape().indices().enumerate() {
            let mut prod = w.data()[offset].clone();
            for (i, v) in siblings.iter().enumerate() {
                if let Some(v) = v {
                    prod = s.mul(&prod, v.get(&[idx[i]]));
                }
            }
            for sv in 0..d_s {
                let term = s.mul(&prod, z.get(&[idx[m], sv]));
                let slot = &mut next[idx[p] * d_s + sv];
                *slot = s.add(slot, &term);
            }
        }
        z = Tensor::new(Shape::new(vec![d_x, d_s])?, next)?;
        node = child;
    }
    Ok(z)
}

#[derive(Clone, Debug)]
pub struct SplitCheck<T> {
    /// `V(D)` by tree valuation.
    pub whole: Tensor<T>,
    /// `V(T) ⊗* Z(O)` with `Z(O)` from [`outer_tree_value`].
    pub split: Tensor<T>,
    pub holds: bool,
}

/// Splits `d` at `path` into an inner tree and an outer tree and compares
/// `V(d)` with `V(inner) ⊗* Z(outer)`.
pub fn check_outer_split<S: Semiring>(
    cfg: &WeightedCfg<S>,
    d: &DerivationTree,
    path: &[usize],
    tolerance: f64,
) -> Result<SplitCheck<S::Elem>> {
    let s = cfg.semiring();
    let whole = tree_value(cfg, d)?;
    let mut inner = d;
    for &p in path {
        inner = inner.children.get(p).ok_or_else(|| {
            Error::InvalidArgument(format!("node {} has no child {p}", inner.rule))
        })?;
    }
    let z = outer_tree_value(cfg, d, path)?;
    let split = contract_star(s, &tree_value(cfg, inner)?, &z)?;
    let holds = approx_eq(s, &whole, &split, tolerance);
    Ok(SplitCheck {
        whole,
        split,
        holds,
    })
}

/// Posterior expected number of uses of each rule in a parse. The sentence
/// total sums `V(goal)` over the start symbol's latent states, i.e. the
/// root distribution is taken to be all ones.
pub fn expected_rule_counts(chart: &Chart<'_, Probability>) -> Result<BTreeMap<RuleId, f64>> {
    let s = chart.semiring();
    let mut counts: BTreeMap<RuleId, f64> = chart
        .cfg()
        .grammar()
        .rules()
        .iter()
        .map(|r| (r.id, 0.0))
        .collect();
    if !chart.is_derivable() {
        return Err(Error::UndefinedPosterior);
    }
    let total: f64 = chart.goal_value()?.data().iter().sum();
    if total <= 0.0 || !total.is_finite() {
        return Err(Error::UndefinedPosterior);
    }
    for inst in chart.instances() {
        let children = inst
            .antecedents
            .iter()
            .map(|a| {
                chart
                    .inner(*a)
                    .ok_or_else(|| Error::Scheduling("inner values missing".into()))
            })
            .collect::<Result<Vec<_>>>()?;
        let value = contract_list_in_order(s, chart.cfg().weight(inst.rule), &children)?;
        let z = chart
            .outer(inst.conclusion)
            .ok_or_else(|| Error::Scheduling("outer values missing".into()))?;
        let through: f64 = contract_star(s, &value, z)?.data().iter().sum();
        *counts.get_mut(&inst.rule).expect("every rule has an entry") += through / total;
    }
    Ok(counts)
}
