//! Dense rank-n tensors over a semiring and the partial operations on them.
//!
//! Rank indices are 0-based throughout: `contract(a, 0, b, 0)` contracts the
//! first rank of `a` with the first rank of `b`.

use std::fmt;

use crate::error::{Error, Result};
use crate::semiring::Semiring;

/// Ordered list of dimensions; empty for a rank-0 scalar.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Default)]
pub struct Shape(Vec<usize>);

impl Shape {
    pub fn new(dims: Vec<usize>) -> Result<Self> {
        if let Some(pos) = dims.iter().position(|&d| d == 0) {
            return Err(Error::InvalidArgument(format!(
                "dimension {pos} of shape {dims:?} is zero"
            )));
        }
        Ok(Shape(dims))
    }

    pub fn scalar() -> Self {
        Shape(Vec::new())
    }

    pub fn dims(&self) -> &[usize] {
        &self.0
    }

    pub fn rank(&self) -> usize {
        self.0.len()
    }

    /// Number of entries; 1 for rank 0.
    pub fn size(&self) -> usize {
        self.0.iter().product()
    }

    /// Row-major strides.
    pub fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1; self.0.len()];
        for i in (0..self.0.len().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * self.0[i + 1];
        }
        strides
    }

    pub fn offset(&self, index: &[usize]) -> usize {
        debug_assert_eq!(index.len(), self.rank());
        index
            .iter()
            .zip(&self.0)
            .fold(0, |acc, (&i, &d)| acc * d + i)
    }

    /// Iterates over all multi-indices in row-major order.
    pub fn indices(&self) -> MultiIndexIter {
        MultiIndexIter::new(self.0.clone())
    }
}

impl From<&[usize]> for Shape {
    /// Panics on a zero dimension; use [`Shape::new`] for untrusted input.
    fn from(dims: &[usize]) -> Self {
        Shape::new(dims.to_vec()).expect("zero dimension in shape")
    }
}

impl<const N: usize> From<[usize; N]> for Shape {
    fn from(dims: [usize; N]) -> Self {
        Shape::from(&dims[..])
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (i, d) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{d}")?;
        }
        write!(f, "]")
    }
}

/// Row-major odometer over a box of indices.
pub struct MultiIndexIter {
    dims: Vec<usize>,
    current: Vec<usize>,
    done: bool,
}

impl MultiIndexIter {
    fn new(dims: Vec<usize>) -> Self {
        let done = dims.contains(&0);
        MultiIndexIter {
            current: vec![0; dims.len()],
            dims,
            done,
        }
    }
}

impl Iterator for MultiIndexIter {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if self.done {
            return None;
        }
        let out = self.current.clone();
        let mut i = self.dims.len();
        loop {
            if i == 0 {
                self.done = true;
                break;
            }
            i -= 1;
            self.current[i] += 1;
            if self.current[i] < self.dims[i] {
                break;
            }
            self.current[i] = 0;
        }
        Some(out)
    }
}

/// A shape plus a row-major buffer of semiring values.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    shape: Shape,
    data: Vec<T>,
}

impl<T: Clone> Tensor<T> {
    pub fn new(shape: Shape, data: Vec<T>) -> Result<Self> {
        if data.len() != shape.size() {
            return Err(Error::InvalidArgument(format!(
                "shape {shape} needs {} values, got {}",
                shape.size(),
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn scalar(value: T) -> Self {
        Tensor {
            shape: Shape::scalar(),
            data: vec![value],
        }
    }

    pub fn vector(data: Vec<T>) -> Result<Self> {
        Tensor::new(Shape::new(vec![data.len()])?, data)
    }

    pub fn filled(shape: Shape, value: T) -> Self {
        let data = vec![value; shape.size()];
        Tensor { shape, data }
    }

    pub fn from_fn(shape: Shape, mut f: impl FnMut(&[usize]) -> T) -> Self {
        let data = shape.indices().map(|idx| f(&idx)).collect();
        Tensor { shape, data }
    }

    pub fn map<U: Clone>(&self, f: impl FnMut(&T) -> U) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(f).collect(),
        }
    }

    /// Reorders ranks: rank `i` of `self` becomes rank `pi[i]` of the result.
    pub fn permute(&self, pi: &[usize]) -> Result<Self> {
        let rank = self.rank();
        if !is_permutation(pi, rank) {
            return Err(Error::InvalidArgument(format!(
                "{pi:?} is not a permutation of 0..{rank}"
            )));
        }
        let mut out_dims = vec![0; rank];
        for (i, &p) in pi.iter().enumerate() {
            out_dims[p] = self.dims()[i];
        }
        let out_shape = Shape(out_dims);
        let out_strides = out_shape.strides();
        let mut data: Vec<Option<T>> = vec![None; self.data.len()];
        for (src, idx) in self.shape.indices().enumerate() {
            let dst: usize = idx.iter().zip(pi).map(|(&i, &p)| i * out_strides[p]).sum();
            data[dst] = Some(self.data[src].clone());
        }
        Ok(Tensor {
            shape: out_shape,
            data: data.into_iter().map(|v| v.expect("bijective")).collect(),
        })
    }
}

fn is_permutation(pi: &[usize], n: usize) -> bool {
    if pi.len() != n {
        return false;
    }
    let mut seen = vec![false; n];
    for &p in pi {
        if p >= n || seen[p] {
            return false;
        }
        seen[p] = true;
    }
    true
}

/// Inverse of a permutation given in "rank i goes to pi[i]" form.
pub fn invert_permutation(pi: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; pi.len()];
    for (i, &p) in pi.iter().enumerate() {
        inv[p] = i;
    }
    inv
}

/// The additive identity of a given shape.
pub fn zero_tensor<S: Semiring>(s: &S, shape: Shape) -> Tensor<S::Elem> {
    Tensor::filled(shape, s.zero())
}

/// Rank-2r tensor over `dims ++ dims` with `one` where the first r indices
/// equal the last r pointwise and `zero` elsewhere.
pub fn identity_tensor<S: Semiring>(s: &S, dims: &[usize]) -> Result<Tensor<S::Elem>> {
    let r = dims.len();
    let mut full = dims.to_vec();
    full.extend_from_slice(dims);
    let shape = Shape::new(full)?;
    let (one, zero) = (s.one(), s.zero());
    Ok(Tensor::from_fn(shape, |idx| {
        if idx[..r] == idx[r..] {
            one.clone()
        } else {
            zero.clone()
        }
    }))
}

/// Componentwise `⊕`; defined only for equal shapes.
pub fn tensor_add<S: Semiring>(
    s: &S,
    a: &Tensor<S::Elem>,
    b: &Tensor<S::Elem>,
) -> Result<Tensor<S::Elem>> {
    if a.shape != b.shape {
        return Err(Error::undefined(
            "tensor addition",
            format!("shapes {} and {} differ", a.shape, b.shape),
        ));
    }
    Ok(Tensor {
        shape: a.shape.clone(),
        data: a
            .data
            .iter()
            .zip(&b.data)
            .map(|(x, y)| s.add(x, y))
            .collect(),
    })
}

/// In-place `acc ⊕= b`.
pub(crate) fn add_assign<S: Semiring>(
    s: &S,
    acc: &mut Tensor<S::Elem>,
    b: &Tensor<S::Elem>,
) -> Result<()> {
    if acc.shape != b.shape {
        return Err(Error::undefined(
            "tensor addition",
            format!("shapes {} and {} differ", acc.shape, b.shape),
        ));
    }
    for (x, y) in acc.data.iter_mut().zip(&b.data) {
        *x = s.add(x, y);
    }
    Ok(())
}

/// Single-rank contraction: rank `k` of `a` against rank `l` of `b`.
///
/// The result keeps `a`'s ranks before `k`, then all of `b`'s uncontracted
/// ranks in order, then `a`'s ranks after `k`.
pub fn contract<S: Semiring>(
    s: &S,
    a: &Tensor<S::Elem>,
    k: usize,
    b: &Tensor<S::Elem>,
    l: usize,
) -> Result<Tensor<S::Elem>> {
    contract_multi(s, a, k, b, l, 1)
}

/// Contracts `r` consecutive ranks: `a[k + p]` against `b[l + p]` for
/// `p in 0..r`. Each product is taken as `a × b`.
pub fn contract_multi<S: Semiring>(
    s: &S,
    a: &Tensor<S::Elem>,
    k: usize,
    b: &Tensor<S::Elem>,
    l: usize,
    r: usize,
) -> Result<Tensor<S::Elem>> {
    let (ad, bd) = (a.dims(), b.dims());
    if k + r > ad.len() || l + r > bd.len() {
        return Err(Error::undefined(
            "contraction",
            format!(
                "cannot contract {r} rank(s) at {k} of {} with {l} of {}",
                a.shape, b.shape
            ),
        ));
    }
    if ad[k..k + r] != bd[l..l + r] {
        return Err(Error::undefined(
            "contraction",
            format!(
                "dimensions {:?} of {} do not match {:?} of {}",
                &ad[k..k + r],
                a.shape,
                &bd[l..l + r],
                b.shape
            ),
        ));
    }

    // Result layout: a[..k] ++ b[..l] ++ b[l+r..] ++ a[k+r..]
    let a_head = &ad[..k];
    let a_tail = &ad[k + r..];
    let b_head = &bd[..l];
    let b_tail = &bd[l + r..];
    let mut out_dims = Vec::with_capacity(ad.len() + bd.len() - 2 * r);
    out_dims.extend_from_slice(a_head);
    out_dims.extend_from_slice(b_head);
    out_dims.extend_from_slice(b_tail);
    out_dims.extend_from_slice(a_tail);
    let out_shape = Shape(out_dims);

    let a_strides = a.shape.strides();
    let b_strides = b.shape.strides();
    let summed = Shape(ad[k..k + r].to_vec());
    let summed_offsets: Vec<(usize, usize)> = summed
        .indices()
        .map(|c| {
            let ao = c
                .iter()
                .enumerate()
                .map(|(p, &i)| i * a_strides[k + p])
                .sum();
            let bo = c
                .iter()
                .enumerate()
                .map(|(p, &i)| i * b_strides[l + p])
                .sum();
            (ao, bo)
        })
        .collect();

    let (n_ah, n_bh, n_bt) = (a_head.len(), b_head.len(), b_tail.len());
    let mut data = Vec::with_capacity(out_shape.size());
    for idx in out_shape.indices() {
        let (ah, rest) = idx.split_at(n_ah);
        let (bh, rest) = rest.split_at(n_bh);
        let (bt, at) = rest.split_at(n_bt);
        let a_base: usize = ah
            .iter()
            .enumerate()
            .map(|(p, &i)| i * a_strides[p])
            .sum::<usize>()
            + at.iter()
                .enumerate()
                .map(|(p, &i)| i * a_strides[k + r + p])
                .sum::<usize>();
        let b_base: usize = bh
            .iter()
            .enumerate()
            .map(|(p, &i)| i * b_strides[p])
            .sum::<usize>()
            + bt.iter()
                .enumerate()
                .map(|(p, &i)| i * b_strides[l + r + p])
                .sum::<usize>();
        let mut acc = s.zero();
        for &(ao, bo) in &summed_offsets {
            let prod = s.mul(&a.data[a_base + ao], &b.data[b_base + bo]);
            acc = s.add(&acc, &prod);
        }
        data.push(acc);
    }
    Ok(Tensor {
        shape: out_shape,
        data,
    })
}

/// `a ⊗* b`: contracts the leading `min(rank a, rank b)` ranks of both.
pub fn contract_star<S: Semiring>(
    s: &S,
    a: &Tensor<S::Elem>,
    b: &Tensor<S::Elem>,
) -> Result<Tensor<S::Elem>> {
    let r = a.rank().min(b.rank());
    contract_multi(s, a, 0, b, 0, r)
}

/// `x ⊗ [args₀, …, argsₙ₋₁]`: `args[i]`'s first rank is contracted with
/// rank `i` of `x`, applied from the last argument to the first.
pub fn contract_list<S: Semiring>(
    s: &S,
    x: &Tensor<S::Elem>,
    args: &[&Tensor<S::Elem>],
) -> Result<Tensor<S::Elem>> {
    contract_list_at(s, x, 0, args)
}

/// Like [`contract_list`] but starting at rank `start` of `x`: `args[i]`
/// contracts with rank `start + i`.
pub fn contract_list_at<S: Semiring>(
    s: &S,
    x: &Tensor<S::Elem>,
    start: usize,
    args: &[&Tensor<S::Elem>],
) -> Result<Tensor<S::Elem>> {
    if start + args.len() > x.rank() {
        return Err(Error::undefined(
            "list contraction",
            format!(
                "{} argument(s) from rank {start} exceed rank {} of {}",
                args.len(),
                x.rank(),
                x.shape
            ),
        ));
    }
    let mut acc = x.clone();
    for (i, arg) in args.iter().enumerate().rev() {
        acc = contract(s, &acc, start + i, arg, 0)?;
    }
    Ok(acc)
}

/// Same result shape as [`contract_list`], but the arguments are contracted
/// first to last, so every entry is a sum of products `x × a₀ × … × aₙ₋₁`.
/// Over a commutative semiring this equals [`contract_list`]; over a
/// non-commutative one it is the order that matches a left-to-right
/// reading of the arguments.
pub fn contract_list_in_order<S: Semiring>(
    s: &S,
    x: &Tensor<S::Elem>,
    args: &[&Tensor<S::Elem>],
) -> Result<Tensor<S::Elem>> {
    if args.len() > x.rank() {
        return Err(Error::undefined(
            "list contraction",
            format!(
                "{} argument(s) exceed rank {} of {}",
                args.len(),
                x.rank(),
                x.shape
            ),
        ));
    }
    let mut acc = x.clone();
    // ranks already produced by earlier arguments sit in front of x's ranks
    let mut offset = 0;
    for arg in args {
        if arg.rank() == 0 {
            return Err(Error::undefined(
                "list contraction",
                "rank-0 argument has no rank to contract",
            ));
        }
        acc = contract(s, &acc, offset, arg, 0)?;
        offset += arg.rank() - 1;
    }
    Ok(acc)
}

impl<T> Tensor<T> {
    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn dims(&self) -> &[usize] {
        self.shape.dims()
    }

    pub fn rank(&self) -> usize {
        self.shape.rank()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn get(&self, index: &[usize]) -> &T {
        &self.data[self.shape.offset(index)]
    }

    /// Bracketed, comma-separated row-major literal.
    pub fn format_with(&self, mut f: impl FnMut(&T) -> String) -> String {
        let items: Vec<String> = self.data.iter().map(&mut f).collect();
        format!("[{}]", items.join(", "))
    }
}

/// Splits a tensor literal such as `[0.5, 0.5 0.0,1.0]` into value tokens.
pub fn literal_tokens(text: &str) -> Result<Vec<&str>> {
    let inner = text
        .trim()
        .strip_prefix('[')
        .and_then(|t| t.strip_suffix(']'))
        .ok_or_else(|| Error::InvalidArgument(format!("`{text}` is not a bracketed literal")))?;
    Ok(inner
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .collect())
}

/// Entrywise approximate equality; false on shape mismatch.
pub fn approx_eq<S: Semiring>(
    s: &S,
    a: &Tensor<S::Elem>,
    b: &Tensor<S::Elem>,
    tolerance: f64,
) -> bool {
    a.shape == b.shape
        && a.data
            .iter()
            .zip(&b.data)
            .all(|(x, y)| s.approx_eq(x, y, tolerance))
}
