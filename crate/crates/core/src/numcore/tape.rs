//! Reverse-mode automatic differentiation over dense matrices.
//!
//! A [`Tape`] records every operation of one forward pass. Parameters enter
//! through [`Tape::param`] and are deduplicated, so a parameter used in many
//! places receives the sum of its contributions. [`Tape::backward`] walks the
//! record in reverse and returns the gradient of a 1×1 loss with respect to
//! every parameter leaf.

use std::collections::HashMap;

use super::matrix::gemm_into;
use super::{Matrix, ParamId, ParamSet, Real};
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op<T> {
    Leaf,
    Param,
    MatMul(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Affine {
        x: Var,
        mul: T,
    },
    ScaleRows(Var, Var),
    Relu(Var),
    Sigmoid(Var),
    Square(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    GatherRows(Var, Vec<usize>),
    GroupMeanRows(Var, Vec<Vec<usize>>),
    BlocksToCols {
        x: Var,
        blocks: usize,
    },
    BlockAttention {
        q: Var,
        k: Var,
        v: Var,
        blocks: usize,
        scale: T,
        probs: Vec<T>,
    },
    Sum(Var),
    Mean(Var),
    Bce {
        p: Var,
        targets: Vec<T>,
    },
}

#[derive(Debug)]
struct Node<T> {
    value: Matrix<T>,
    op: Op<T>,
}

/// Gradients of a scalar with respect to the parameter leaves of a tape.
#[derive(Clone, Debug)]
pub struct Gradients<T> {
    by_param: Vec<(ParamId, Matrix<T>)>,
}

impl<T: Real> Gradients<T> {
    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Matrix<T>)> {
        self.by_param.iter().map(|(id, g)| (*id, g))
    }

    pub fn wrt(&self, id: ParamId) -> Option<&Matrix<T>> {
        self.by_param.iter().find(|(i, _)| *i == id).map(|(_, g)| g)
    }
}

const BCE_CLAMP: f64 = 1e-12;

#[derive(Debug, Default)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
    params: HashMap<ParamId, Var>,
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            params: HashMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Matrix<T>, op: Op<T>) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Matrix<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    pub fn constant(&mut self, m: Matrix<T>) -> Var {
        self.push(m, Op::Leaf)
    }

    /// Leaf for a parameter; repeated calls return the same node.
    pub fn param(&mut self, params: &ParamSet<T>, id: ParamId) -> Var {
        if let Some(&v) = self.params.get(&id) {
            return v;
        }
        let v = self.push(params.value(id).clone(), Op::Param);
        self.params.insert(id, v);
        v
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(Error::dim(op, format!("{sa:?}"), format!("{sb:?}")));
        }
        Ok(())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    /// Adds a 1×m row to every row of an n×m matrix.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (xv, bv) = (self.value(x), self.value(bias));
        if bv.rows() != 1 || bv.cols() != xv.cols() {
            return Err(Error::dim(
                "add_bias",
                format!("(1, {})", xv.cols()),
                format!("{:?}", bv.shape()),
            ));
        }
        let mut out = xv.clone();
        let b = bv.as_slice();
        for r in 0..out.rows() {
            for (o, &bb) in out.row_mut(r).iter_mut().zip(b) {
                *o = *o + bb;
            }
        }
        Ok(self.push(out, Op::AddBias(x, bias)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let out = self.value(a).zip_map(self.value(b), |x, y| x + y);
        Ok(self.push(out, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let out = self.value(a).zip_map(self.value(b), |x, y| x - y);
        Ok(self.push(out, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let out = self.value(a).zip_map(self.value(b), |x, y| x * y);
        Ok(self.push(out, Op::Mul(a, b)))
    }

    /// `mul·x + add`, elementwise.
    pub fn affine(&mut self, x: Var, mul: T, add: T) -> Var {
        let out = self.value(x).map(|v| mul * v + add);
        self.push(out, Op::Affine { x, mul })
    }

    pub fn scale(&mut self, x: Var, factor: T) -> Var {
        self.affine(x, factor, T::zero())
    }

    /// Multiplies row `r` of `x` by `s[r]`, with `s` an n×1 column.
    pub fn scale_rows(&mut self, x: Var, s: Var) -> Result<Var> {
        let (xv, sv) = (self.value(x), self.value(s));
        if sv.cols() != 1 || sv.rows() != xv.rows() {
            return Err(Error::dim(
                "scale_rows",
                format!("({}, 1)", xv.rows()),
                format!("{:?}", sv.shape()),
            ));
        }
        let mut out = xv.clone();
        for r in 0..out.rows() {
            let f = sv.get(r, 0);
            out.row_mut(r).iter_mut().for_each(|v| *v = *v * f);
        }
        Ok(self.push(out, Op::ScaleRows(x, s)))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| v.max(T::zero()));
        self.push(out, Op::Relu(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let out = self.value(x).map(sigmoid);
        self.push(out, Op::Sigmoid(x))
    }

    pub fn square(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| v * v);
        self.push(out, Op::Square(x))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| Error::contract("concat_cols of nothing"))?;
        let rows = self.shape(first).0;
        let mut cols = 0;
        for &p in parts {
            if self.shape(p).0 != rows {
                return Err(Error::dim("concat_cols", rows, self.shape(p).0));
            }
            cols += self.shape(p).1;
        }
        let mut out = Matrix::zeros(rows, cols);
        for r in 0..rows {
            let row = out.row_mut(r);
            let mut off = 0;
            for &p in parts {
                let src = self.nodes[p.0].value.row(r);
                row[off..off + src.len()].copy_from_slice(src);
                off += src.len();
            }
        }
        Ok(self.push(out, Op::ConcatCols(parts.to_vec())))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| Error::contract("concat_rows of nothing"))?;
        let cols = self.shape(first).1;
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let v = self.value(p);
            if v.cols() != cols {
                return Err(Error::dim("concat_rows", cols, v.cols()));
            }
            rows += v.rows();
            data.extend_from_slice(v.as_slice());
        }
        let out = Matrix::from_vec(rows, cols, data)?;
        Ok(self.push(out, Op::ConcatRows(parts.to_vec())))
    }

    /// Row `r` of the result is row `idx[r]` of `x`.
    pub fn gather_rows(&mut self, x: Var, idx: Vec<usize>) -> Result<Var> {
        let xv = self.value(x);
        let cols = xv.cols();
        let mut data = Vec::with_capacity(idx.len() * cols);
        for &i in &idx {
            if i >= xv.rows() {
                return Err(Error::dim("gather_rows", format!("< {}", xv.rows()), i));
            }
            data.extend_from_slice(xv.row(i));
        }
        let out = Matrix::from_vec(idx.len(), cols, data)?;
        Ok(self.push(out, Op::GatherRows(x, idx)))
    }

    /// Row `g` of the result is the mean of the rows of `x` listed in `groups[g]`.
    pub fn group_mean_rows(&mut self, x: Var, groups: Vec<Vec<usize>>) -> Result<Var> {
        let xv = self.value(x);
        let mut out = Matrix::zeros(groups.len(), xv.cols());
        for (g, members) in groups.iter().enumerate() {
            if members.is_empty() {
                return Err(Error::contract("group_mean_rows: empty group"));
            }
            let w = T::one() / T::of(members.len() as f64);
            for &i in members {
                if i >= xv.rows() {
                    return Err(Error::dim("group_mean_rows", format!("< {}", xv.rows()), i));
                }
                for (o, &v) in out.row_mut(g).iter_mut().zip(xv.row(i)) {
                    *o = *o + v * w;
                }
            }
        }
        Ok(self.push(out, Op::GroupMeanRows(x, groups)))
    }

    /// Lays `blocks` stacked row blocks (each `n` rows) side by side, then
    /// right-pads with zero columns to `total_blocks` blocks.
    pub fn blocks_to_cols(&mut self, x: Var, blocks: usize, total_blocks: usize) -> Result<Var> {
        let xv = self.value(x);
        if blocks == 0 || !xv.rows().is_multiple_of(blocks) || total_blocks < blocks {
            return Err(Error::dim(
                "blocks_to_cols",
                format!("rows divisible by {blocks}, total >= blocks"),
                format!("{} rows, total {total_blocks}", xv.rows()),
            ));
        }
        let n = xv.rows() / blocks;
        let d = xv.cols();
        let mut out = Matrix::zeros(n, total_blocks * d);
        for i in 0..blocks {
            for b in 0..n {
                out.row_mut(b)[i * d..(i + 1) * d].copy_from_slice(xv.row(i * n + b));
            }
        }
        Ok(self.push(out, Op::BlocksToCols { x, blocks }))
    }

    /// Attention across `blocks` stacked row blocks, independently for each
    /// row position inside a block. Block `i`, position `b` attends over
    /// blocks `j` with logits `scale · q[i,b]·k[j,b]`.
    pub fn block_attention(
        &mut self,
        q: Var,
        k: Var,
        v: Var,
        blocks: usize,
        scale: T,
    ) -> Result<Var> {
        let (qv, kv, vv) = (self.value(q), self.value(k), self.value(v));
        if qv.shape() != kv.shape() || qv.rows() != vv.rows() {
            return Err(Error::dim(
                "block_attention",
                format!("q {:?} = k, rows = v rows", qv.shape()),
                format!("k {:?}, v {:?}", kv.shape(), vv.shape()),
            ));
        }
        if blocks == 0 || qv.rows() % blocks != 0 {
            return Err(Error::dim(
                "block_attention",
                format!("rows divisible by {blocks}"),
                qv.rows(),
            ));
        }
        let n = qv.rows() / blocks;
        let mut probs = vec![T::zero(); n * blocks * blocks];
        let mut out = Matrix::zeros(vv.rows(), vv.cols());
        let mut logits = vec![T::zero(); blocks];
        for b in 0..n {
            for i in 0..blocks {
                let qi = qv.row(i * n + b);
                for (j, l) in logits.iter_mut().enumerate() {
                    *l = scale * dot(qi, kv.row(j * n + b));
                }
                let p = &mut probs[(b * blocks + i) * blocks..(b * blocks + i + 1) * blocks];
                softmax_into(&logits, p);
                let orow = out.row_mut(i * n + b);
                for (j, &pj) in p.iter().enumerate() {
                    for (o, &x) in orow.iter_mut().zip(vv.row(j * n + b)) {
                        *o = *o + pj * x;
                    }
                }
            }
        }
        Ok(self.push(
            out,
            Op::BlockAttention {
                q,
                k,
                v,
                blocks,
                scale,
                probs,
            },
        ))
    }

    /// Attention probabilities of a `block_attention` node, indexed
    /// `[position][query block][key block]`.
    pub fn attention_probs(&self, node: Var) -> Option<Vec<Vec<Vec<T>>>> {
        match &self.nodes[node.0].op {
            Op::BlockAttention { blocks, probs, .. } => {
                let l = *blocks;
                Some(
                    probs
                        .chunks(l * l)
                        .map(|pb| pb.chunks(l).map(<[T]>::to_vec).collect())
                        .collect(),
                )
            }
            _ => None,
        }
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).sum();
        self.push(Matrix::scalar(s), Op::Sum(x))
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        if xv.is_empty() {
            return Err(Error::contract("mean of empty matrix"));
        }
        let s = xv.sum() / T::of(xv.len() as f64);
        Ok(self.push(Matrix::scalar(s), Op::Mean(x)))
    }

    /// Elementwise binary cross-entropy of probabilities `p` against targets.
    pub fn bce(&mut self, p: Var, targets: Vec<T>) -> Result<Var> {
        let pv = self.value(p);
        if targets.len() != pv.len() {
            return Err(Error::dim("bce", pv.len(), targets.len()));
        }
        let eps = T::of(BCE_CLAMP);
        let mut out = pv.clone();
        for (o, &y) in out.as_mut_slice().iter_mut().zip(&targets) {
            let pc = o.max(eps).min(T::one() - eps);
            *o = -(y * pc.ln() + (T::one() - y) * (T::one() - pc).ln());
        }
        Ok(self.push(out, Op::Bce { p, targets }))
    }

    /// Gradients of the 1×1 node `loss` with respect to every parameter leaf.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        let grads = self.backward_all(loss)?;
        let mut by_param: Vec<(ParamId, Matrix<T>)> = self
            .params
            .iter()
            .map(|(&id, &v)| {
                let g = grads[v.0].clone().unwrap_or_else(|| {
                    Matrix::zeros(self.nodes[v.0].value.rows(), self.nodes[v.0].value.cols())
                });
                (id, g)
            })
            .collect();
        by_param.sort_by_key(|(id, _)| *id);
        Ok(Gradients { by_param })
    }

    /// Gradient of `loss` with respect to an arbitrary node.
    pub fn grad_of(&self, loss: Var, wrt: Var) -> Result<Matrix<T>> {
        let grads = self.backward_all(loss)?;
        let (r, c) = self.shape(wrt);
        Ok(grads[wrt.0].clone().unwrap_or_else(|| Matrix::zeros(r, c)))
    }

    fn backward_all(&self, loss: Var) -> Result<Vec<Option<Matrix<T>>>> {
        if self.shape(loss) != (1, 1) {
            return Err(Error::contract(format!(
                "backward needs a 1x1 loss, got {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Matrix<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Matrix::scalar(T::one()));
        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            self.backprop_node(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Ok(grads)
    }

    fn backprop_node(&self, idx: usize, g: &Matrix<T>, grads: &mut [Option<Matrix<T>>]) {
        let node = &self.nodes[idx];
        let val = |v: Var| &self.nodes[v.0].value;
        match &node.op {
            Op::Leaf | Op::Param => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                with_grad(grads, *a, av.shape(), |ga| {
                    gemm_into(g, false, bv, true, ga, T::one())
                });
                with_grad(grads, *b, bv.shape(), |gb| {
                    gemm_into(av, true, g, false, gb, T::one())
                });
            }
            Op::AddBias(x, bias) => {
                accumulate(grads, *x, g.clone());
                let mut gb = Matrix::zeros(1, g.cols());
                for r in 0..g.rows() {
                    for (o, &v) in gb.as_mut_slice().iter_mut().zip(g.row(r)) {
                        *o = *o + v;
                    }
                }
                accumulate(grads, *bias, gb);
            }
            Op::Add(a, b) => {
                accumulate(grads, *a, g.clone());
                accumulate(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                accumulate(grads, *a, g.clone());
                accumulate(grads, *b, g.map(|v| -v));
            }
            Op::Mul(a, b) => {
                accumulate(grads, *a, g.zip_map(val(*b), |gv, bv| gv * bv));
                accumulate(grads, *b, g.zip_map(val(*a), |gv, av| gv * av));
            }
            Op::Affine { x, mul } => {
                let m = *mul;
                accumulate(grads, *x, g.map(|v| v * m));
            }
            Op::ScaleRows(x, s) => {
                let (xv, sv) = (val(*x), val(*s));
                let mut gx = g.clone();
                let mut gs = Matrix::zeros(sv.rows(), 1);
                for r in 0..g.rows() {
                    let f = sv.get(r, 0);
                    gs.set(r, 0, dot(g.row(r), xv.row(r)));
                    gx.row_mut(r).iter_mut().for_each(|v| *v = *v * f);
                }
                accumulate(grads, *x, gx);
                accumulate(grads, *s, gs);
            }
            Op::Relu(x) => {
                let gx = g.zip_map(
                    &node.value,
                    |gv, y| if y > T::zero() { gv } else { T::zero() },
                );
                accumulate(grads, *x, gx);
            }
            Op::Sigmoid(x) => {
                let gx = g.zip_map(&node.value, |gv, y| gv * y * (T::one() - y));
                accumulate(grads, *x, gx);
            }
            Op::Square(x) => {
                let two = T::of(2.0);
                accumulate(grads, *x, g.zip_map(val(*x), |gv, xv| two * gv * xv));
            }
            Op::ConcatCols(parts) => {
                let mut off = 0;
                for &p in parts {
                    let (pr, pc) = val(p).shape();
                    let mut gp = Matrix::zeros(pr, pc);
                    for r in 0..pr {
                        gp.row_mut(r).copy_from_slice(&g.row(r)[off..off + pc]);
                    }
                    off += pc;
                    accumulate(grads, p, gp);
                }
            }
            Op::ConcatRows(parts) => {
                let mut off = 0;
                let cols = g.cols();
                for &p in parts {
                    let pr = val(p).rows();
                    let slice = &g.as_slice()[off * cols..(off + pr) * cols];
                    accumulate(
                        grads,
                        p,
                        Matrix::from_vec(pr, cols, slice.to_vec()).expect("shape"),
                    );
                    off += pr;
                }
            }
            Op::GatherRows(x, idx_list) => {
                let shape = val(*x).shape();
                with_grad(grads, *x, shape, |gx| {
                    for (r, &i) in idx_list.iter().enumerate() {
                        for (o, &v) in gx.row_mut(i).iter_mut().zip(g.row(r)) {
                            *o = *o + v;
                        }
                    }
                });
            }
            Op::GroupMeanRows(x, groups) => {
                let shape = val(*x).shape();
                with_grad(grads, *x, shape, |gx| {
                    for (gi, members) in groups.iter().enumerate() {
                        let w = T::one() / T::of(members.len() as f64);
                        for &i in members {
                            for (o, &v) in gx.row_mut(i).iter_mut().zip(g.row(gi)) {
                                *o = *o + v * w;
                            }
                        }
                    }
                });
            }
            Op::BlocksToCols { x, blocks } => {
                let (rows, d) = val(*x).shape();
                let n = rows / blocks;
                let mut gx = Matrix::zeros(rows, d);
                for i in 0..*blocks {
                    for b in 0..n {
                        gx.row_mut(i * n + b)
                            .copy_from_slice(&g.row(b)[i * d..(i + 1) * d]);
                    }
                }
                accumulate(grads, *x, gx);
            }
            Op::BlockAttention {
                q,
                k,
                v,
                blocks,
                scale,
                probs,
            } => {
                let (qv, kv, vv) = (val(*q), val(*k), val(*v));
                let l = *blocks;
                let n = qv.rows() / l;
                let mut gq = Matrix::zeros(qv.rows(), qv.cols());
                let mut gk = Matrix::zeros(kv.rows(), kv.cols());
                let mut gv = Matrix::zeros(vv.rows(), vv.cols());
                let mut dp = vec![T::zero(); l];
                for b in 0..n {
                    for i in 0..l {
                        let p = &probs[(b * l + i) * l..(b * l + i + 1) * l];
                        let go = g.row(i * n + b);
                        for j in 0..l {
                            dp[j] = dot(go, vv.row(j * n + b));
                            for (o, &x) in gv.row_mut(j * n + b).iter_mut().zip(go) {
                                *o = *o + p[j] * x;
                            }
                        }
                        let inner: T = p.iter().zip(&dp).map(|(&a, &b)| a * b).sum();
                        for j in 0..l {
                            let dl = p[j] * (dp[j] - inner) * *scale;
                            if dl == T::zero() {
                                continue;
                            }
                            let krow = kv.row(j * n + b);
                            for (o, &x) in gq.row_mut(i * n + b).iter_mut().zip(krow) {
                                *o = *o + dl * x;
                            }
                            let qrow = qv.row(i * n + b);
                            for (o, &x) in gk.row_mut(j * n + b).iter_mut().zip(qrow) {
                                *o = *o + dl * x;
                            }
                        }
                    }
                }
                accumulate(grads, *q, gq);
                accumulate(grads, *k, gk);
                accumulate(grads, *v, gv);
            }
            Op::Sum(x) => {
                let s = g.get(0, 0);
                let (r, c) = val(*x).shape();
                accumulate(grads, *x, Matrix::filled(r, c, s));
            }
            Op::Mean(x) => {
                let (r, c) = val(*x).shape();
                let s = g.get(0, 0) / T::of((r * c) as f64);
                accumulate(grads, *x, Matrix::filled(r, c, s));
            }
            Op::Bce { p, targets } => {
                let eps = T::of(BCE_CLAMP);
                let pv = val(*p);
                let mut gp = pv.clone();
                for ((o, &y), &gv) in gp.as_mut_slice().iter_mut().zip(targets).zip(g.as_slice()) {
                    let pr = *o;
                    *o = if pr < eps || pr > T::one() - eps {
                        T::zero()
                    } else {
                        gv * (pr - y) / (pr * (T::one() - pr))
                    };
                }
                accumulate(grads, *p, gp);
            }
        }
    }
}

fn accumulate<T: Real>(grads: &mut [Option<Matrix<T>>], v: Var, g: Matrix<T>) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

fn with_grad<T: Real>(
    grads: &mut [Option<Matrix<T>>],
    v: Var,
    shape: (usize, usize),
    f: impl FnOnce(&mut Matrix<T>),
) {
    let slot = grads[v.0].get_or_insert_with(|| Matrix::zeros(shape.0, shape.1));
    f(slot);
}

pub(crate) fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

pub(crate) fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

pub(crate) fn softmax_into<T: Real>(logits: &[T], out: &mut [T]) {
    let m = logits.iter().fold(T::neg_infinity(), |a, &b| a.max(b));
    let mut z = T::zero();
    for (o, &l) in out.iter_mut().zip(logits) {
        *o = (l - m).exp();
        z = z + *o;
    }
    out.iter_mut().for_each(|o| *o = *o / z);
}
