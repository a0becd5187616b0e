//! Reverse-mode tape over 2-D blocks.
//!
//! Every node holds a `rows × cols` row-major block. Parameters are bound
//! by reference, so building a tape never copies weights. Backward returns
//! a [`Gradients`] table; callers fold parameter gradients back into their
//! [`ParameterSet`] with [`ParameterSet::accumulate_from`].

use std::borrow::Cow;

use crate::error::{config, usage, Error, Result};

use super::tensor::{ParameterSet, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    /// x · wᵀ
    MatMulT(Var, Var),
    /// a · b
    MatMul(Var, Var),
    /// x + 1·b, b a single row
    AddRow(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Elu(Var),
    Abs(Var),
    LogEps(Var, f64),
    ConcatCols(Var, Var),
    SoftmaxRows(Var),
    GroupScores { q: Var, k: Var, n: usize, scale: f64 },
    GroupMix { c: Var, v: Var, n: usize },
    GroupDiag { c: Var, n: usize },
    GatherCols { x: Var, idx: Vec<usize> },
    MaskedRowMax { x: Var, arg: Vec<usize> },
    BatchVecMat { q: Var, w: Var, n: usize, e: usize },
    RowDot(Var, Var),
    Reshape(Var),
    Sum(Var),
    Detach,
}

struct Node<'a> {
    rows: usize,
    cols: usize,
    value: Cow<'a, [f64]>,
    op: Op,
    needs_grad: bool,
}

/// A recorded computation. Values are computed eagerly as ops are added.
pub struct Tape<'a> {
    nodes: Vec<Node<'a>>,
}

/// Parameters of a set bound onto a tape, in set order.
pub struct Bound<'a> {
    set: &'a ParameterSet,
    vars: Vec<Var>,
}

impl<'a> Bound<'a> {
    pub fn get(&self, name: &str) -> Result<Var> {
        match self.set.index_of(name) {
            Some(i) => Ok(self.vars[i]),
            None => config(format!("no parameter named {name}")),
        }
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }

    pub fn set(&self) -> &'a ParameterSet {
        self.set
    }
}

/// Gradient of a scalar with respect to every node that needed one.
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn wrt(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }
}

impl ParameterSet {
    /// Add gradients for a bound set into its tensors' grad slots.
    pub fn accumulate_from(&mut self, bound_vars: &[Var], grads: &Gradients) -> Result<()> {
        if bound_vars.len() != self.len() {
            return config("bound variables do not match parameter set");
        }
        for (i, v) in bound_vars.iter().enumerate() {
            let t = self.tensor_at_mut(i);
            match grads.wrt(*v) {
                Some(g) => t.accumulate_grad(g)?,
                None => {
                    let zeros = vec![0.0; t.len()];
                    t.accumulate_grad(&zeros)?
                }
            }
        }
        Ok(())
    }
}

/// Numerically stable softmax of one row, in place.
pub fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in row.iter_mut() {
        *v /= total;
    }
}

fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (isize, isize),
    b: &[f64],
    (rsb, csb): (isize, isize),
    c: &mut [f64],
    beta: f64,
) {
    debug_assert!(c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    // Safety: strides describe in-bounds views of the slices checked by callers.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

fn add_into(slot: &mut Option<Vec<f64>>, len: usize, f: impl FnOnce(&mut [f64])) {
    let buf = slot.get_or_insert_with(|| vec![0.0; len]);
    f(buf);
}

impl<'a> Default for Tape<'a> {
    fn default() -> Self {
        Self::new()
    }
}

impl<'a> Tape<'a> {
    pub fn new() -> Self {
        Tape { nodes: Vec::with_capacity(256) }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, rows: usize, cols: usize, value: Cow<'a, [f64]>, op: Op, needs_grad: bool) -> Var {
        debug_assert_eq!(rows * cols, value.len());
        self.nodes.push(Node { rows, cols, value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        let n = &self.nodes[v.0];
        (n.rows, n.cols)
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[0]
    }

    /// Copy a node out as a `[rows, cols]` tensor.
    pub fn to_tensor(&self, v: Var) -> Tensor {
        let n = &self.nodes[v.0];
        Tensor::matrix(n.rows, n.cols, n.value.to_vec()).expect("node shape")
    }

    pub fn rows_of(&self, v: Var) -> Vec<Vec<f64>> {
        let n = &self.nodes[v.0];
        n.value.chunks(n.cols).map(<[f64]>::to_vec).collect()
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Constant input; never receives a gradient.
    pub fn constant(&mut self, rows: usize, cols: usize, values: Vec<f64>) -> Result<Var> {
        if rows * cols != values.len() {
            return config(format!("constant {rows}x{cols} given {} values", values.len()));
        }
        Ok(self.push(rows, cols, Cow::Owned(values), Op::Leaf, false))
    }

    /// Input leaf whose gradient is reported by backward.
    pub fn variable(&mut self, rows: usize, cols: usize, values: Vec<f64>) -> Result<Var> {
        if rows * cols != values.len() {
            return config(format!("variable {rows}x{cols} given {} values", values.len()));
        }
        Ok(self.push(rows, cols, Cow::Owned(values), Op::Leaf, true))
    }

    /// Leaf borrowing a tensor; tracked when the tensor requires grad.
    pub fn tensor(&mut self, t: &'a Tensor) -> Var {
        let (r, c) = t.shape2();
        self.push(r, c, Cow::Borrowed(t.values()), Op::Leaf, t.requires_grad())
    }

    pub fn bind(&mut self, set: &'a ParameterSet) -> Bound<'a> {
        let vars = set.iter().map(|(_, t)| self.tensor(t)).collect();
        Bound { set, vars }
    }

    /// Bind a set as constants: same values, no gradient tracking.
    pub fn bind_frozen(&mut self, set: &'a ParameterSet) -> Bound<'a> {
        let vars = set
            .iter()
            .map(|(_, t)| {
                let (r, c) = t.shape2();
                self.push(r, c, Cow::Borrowed(t.values()), Op::Leaf, false)
            })
            .collect();
        Bound { set, vars }
    }

    pub fn detach(&mut self, x: Var) -> Var {
        let (r, c) = self.shape(x);
        let value = self.value(x).to_vec();
        self.push(r, c, Cow::Owned(value), Op::Detach, false)
    }

    /// `x · wᵀ` for `x: r×k`, `w: o×k`.
    pub fn matmul_t(&mut self, x: Var, w: Var) -> Result<Var> {
        let (r, k) = self.shape(x);
        let (o, k2) = self.shape(w);
        if k != k2 {
            return config(format!("matmul_t inner dims {k} vs {k2}"));
        }
        let mut out = vec![0.0; r * o];
        gemm(r, k, o, self.value(x), (k as isize, 1), self.value(w), (1, k as isize), &mut out, 0.0);
        let ng = self.needs(x) || self.needs(w);
        Ok(self.push(r, o, Cow::Owned(out), Op::MatMulT(x, w), ng))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (r, k) = self.shape(a);
        let (k2, c) = self.shape(b);
        if k != k2 {
            return config(format!("matmul inner dims {k} vs {k2}"));
        }
        let mut out = vec![0.0; r * c];
        gemm(r, k, c, self.value(a), (k as isize, 1), self.value(b), (c as isize, 1), &mut out, 0.0);
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(r, c, Cow::Owned(out), Op::MatMul(a, b), ng))
    }

    pub fn add_row(&mut self, x: Var, b: Var) -> Result<Var> {
        let (r, c) = self.shape(x);
        let (br, bc) = self.shape(b);
        if br != 1 || bc != c {
            return config(format!("row bias {br}x{bc} for {r}x{c}"));
        }
        let bias = self.value(b);
        let out: Vec<f64> = self
            .value(x)
            .chunks(c)
            .flat_map(|row| row.iter().zip(bias).map(|(v, b)| v + b))
            .collect();
        let ng = self.needs(x) || self.needs(b);
        Ok(self.push(r, c, Cow::Owned(out), Op::AddRow(x, b), ng))
    }

    /// Affine map `x · wᵀ + b`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let y = self.matmul_t(x, w)?;
        self.add_row(y, b)
    }

    fn zip_same(&mut self, a: Var, b: Var, op: Op, f: impl Fn(f64, f64) -> f64) -> Result<Var> {
        let sa = self.shape(a);
        let sb = self.shape(b);
        if sa != sb {
            return config(format!("elementwise shapes {sa:?} vs {sb:?}"));
        }
        let out = self.value(a).iter().zip(self.value(b)).map(|(x, y)| f(*x, *y)).collect();
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(sa.0, sa.1, Cow::Owned(out), op, ng))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_same(a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_same(a, b, Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_same(a, b, Op::Mul(a, b), |x, y| x * y)
    }

    fn map(&mut self, x: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let (r, c) = self.shape(x);
        let out = self.value(x).iter().map(|v| f(*v)).collect();
        let ng = self.needs(x);
        self.push(r, c, Cow::Owned(out), op, ng)
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        self.map(x, Op::Scale(x, s), |v| v * s)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.map(x, Op::Sigmoid(x), |v| 1.0 / (1.0 + (-v).exp()))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.map(x, Op::Tanh(x), f64::tanh)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.map(x, Op::Relu(x), |v| if v > 0.0 { v } else { 0.0 })
    }

    /// ELU with unit scale.
    pub fn elu(&mut self, x: Var) -> Var {
        self.map(x, Op::Elu(x), |v| if v > 0.0 { v } else { v.exp_m1() })
    }

    pub fn abs(&mut self, x: Var) -> Var {
        self.map(x, Op::Abs(x), f64::abs)
    }

    /// `ln(x + eps)`.
    pub fn log_eps(&mut self, x: Var, eps: f64) -> Var {
        self.map(x, Op::LogEps(x, eps), |v| (v + eps).ln())
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ra, ca) = self.shape(a);
        let (rb, cb) = self.shape(b);
        if ra != rb {
            return config(format!("concat rows {ra} vs {rb}"));
        }
        let mut out = Vec::with_capacity(ra * (ca + cb));
        for (x, y) in self.value(a).chunks(ca).zip(self.value(b).chunks(cb)) {
            out.extend_from_slice(x);
            out.extend_from_slice(y);
        }
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(ra, ca + cb, Cow::Owned(out), Op::ConcatCols(a, b), ng))
    }

    pub fn softmax_rows(&mut self, x: Var) -> Result<Var> {
        let (r, c) = self.shape(x);
        if self.value(x).iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("softmax of non-finite scores".into()));
        }
        let mut out = self.value(x).to_vec();
        out.chunks_mut(c).for_each(softmax_in_place);
        let ng = self.needs(x);
        Ok(self.push(r, c, Cow::Owned(out), Op::SoftmaxRows(x), ng))
    }

    /// Scaled dot products within groups of `n` consecutive rows:
    /// `out[g·n+i, j] = scale · q[g·n+i] · k[g·n+j]`.
    pub fn group_scores(&mut self, q: Var, k: Var, n: usize, scale: f64) -> Result<Var> {
        let (rq, d) = self.shape(q);
        if self.shape(k) != (rq, d) || n == 0 || rq % n != 0 {
            return config(format!("group_scores shapes {:?} {:?} n={n}", self.shape(q), self.shape(k)));
        }
        let (qv, kv) = (self.value(q), self.value(k));
        let mut out = vec![0.0; rq * n];
        for g in 0..rq / n {
            for i in 0..n {
                let qi = &qv[(g * n + i) * d..(g * n + i + 1) * d];
                for j in 0..n {
                    let kj = &kv[(g * n + j) * d..(g * n + j + 1) * d];
                    let dot: f64 = qi.iter().zip(kj).map(|(a, b)| a * b).sum();
                    out[(g * n + i) * n + j] = scale * dot;
                }
            }
        }
        let ng = self.needs(q) || self.needs(k);
        Ok(self.push(rq, n, Cow::Owned(out), Op::GroupScores { q, k, n, scale }, ng))
    }

    /// Weighted sums within groups: `out[g·n+i] = Σ_j c[g·n+i, j] · v[g·n+j]`.
    pub fn group_mix(&mut self, c: Var, v: Var, n: usize) -> Result<Var> {
        let (rc, cc) = self.shape(c);
        let (rv, d) = self.shape(v);
        if cc != n || rc != rv || n == 0 || rc % n != 0 {
            return config(format!("group_mix shapes {:?} {:?} n={n}", self.shape(c), self.shape(v)));
        }
        let (cv, vv) = (self.value(c), self.value(v));
        let mut out = vec![0.0; rv * d];
        for g in 0..rc / n {
            for i in 0..n {
                let row = g * n + i;
                let o = &mut out[row * d..(row + 1) * d];
                for j in 0..n {
                    let w = cv[row * n + j];
                    let vj = &vv[(g * n + j) * d..(g * n + j + 1) * d];
                    for (x, y) in o.iter_mut().zip(vj) {
                        *x += w * y;
                    }
                }
            }
        }
        let ng = self.needs(c) || self.needs(v);
        Ok(self.push(rv, d, Cow::Owned(out), Op::GroupMix { c, v, n }, ng))
    }

    /// Diagonal entries `c[g·n+i, i]` as a column.
    pub fn group_diag(&mut self, c: Var, n: usize) -> Result<Var> {
        let (r, cols) = self.shape(c);
        if cols != n || n == 0 || r % n != 0 {
            return config(format!("group_diag shape {r}x{cols} n={n}"));
        }
        let cv = self.value(c);
        let out = (0..r).map(|row| cv[row * n + row % n]).collect();
        let ng = self.needs(c);
        Ok(self.push(r, 1, Cow::Owned(out), Op::GroupDiag { c, n }, ng))
    }

    /// One entry per row, `x[r, idx[r]]`, as a column.
    pub fn gather_cols(&mut self, x: Var, idx: Vec<usize>) -> Result<Var> {
        let (r, c) = self.shape(x);
        if idx.len() != r || idx.iter().any(|&i| i >= c) {
            return config(format!("gather_cols index out of range for {r}x{c}"));
        }
        let xv = self.value(x);
        let out = idx.iter().enumerate().map(|(row, &i)| xv[row * c + i]).collect();
        let ng = self.needs(x);
        Ok(self.push(r, 1, Cow::Owned(out), Op::GatherCols { x, idx }, ng))
    }

    /// Row-wise max over entries whose mask is true; ties go to the lowest index.
    pub fn masked_row_max(&mut self, x: Var, mask: &[bool]) -> Result<Var> {
        let (r, c) = self.shape(x);
        if mask.len() != r * c {
            return config("masked_row_max mask size");
        }
        let xv = self.value(x);
        let mut arg = Vec::with_capacity(r);
        let mut out = Vec::with_capacity(r);
        for row in 0..r {
            let mut best: Option<usize> = None;
            for j in 0..c {
                if mask[row * c + j] && best.map_or(true, |b| xv[row * c + j] > xv[row * c + b]) {
                    best = Some(j);
                }
            }
            let Some(b) = best else {
                return usage(format!("row {row} has no available entry"));
            };
            arg.push(b);
            out.push(xv[row * c + b]);
        }
        let ng = self.needs(x);
        Ok(self.push(r, 1, Cow::Owned(out), Op::MaskedRowMax { x, arg }, ng))
    }

    /// Per-row vector–matrix product: `q: R×n`, `w: R×(n·e)` holding an
    /// `n×e` matrix per row; result `R×e`.
    pub fn batch_vec_mat(&mut self, q: Var, w: Var, n: usize, e: usize) -> Result<Var> {
        let (r, qn) = self.shape(q);
        let (rw, wc) = self.shape(w);
        if qn != n || rw != r || wc != n * e {
            return config(format!("batch_vec_mat shapes {r}x{qn} {rw}x{wc} n={n} e={e}"));
        }
        let (qv, wv) = (self.value(q), self.value(w));
        let mut out = vec![0.0; r * e];
        for row in 0..r {
            let o = &mut out[row * e..(row + 1) * e];
            for i in 0..n {
                let qi = qv[row * n + i];
                let wi = &wv[row * n * e + i * e..row * n * e + (i + 1) * e];
                for (x, y) in o.iter_mut().zip(wi) {
                    *x += qi * y;
                }
            }
        }
        let ng = self.needs(q) || self.needs(w);
        Ok(self.push(r, e, Cow::Owned(out), Op::BatchVecMat { q, w, n, e }, ng))
    }

    /// Row-wise dot products as a column.
    pub fn row_dot(&mut self, a: Var, b: Var) -> Result<Var> {
        let (r, c) = self.shape(a);
        if self.shape(b) != (r, c) {
            return config("row_dot shapes differ");
        }
        let out = self
            .value(a)
            .chunks(c)
            .zip(self.value(b).chunks(c))
            .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p * q).sum())
            .collect();
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(r, 1, Cow::Owned(out), Op::RowDot(a, b), ng))
    }

    /// Reinterpret the row-major data under a new shape.
    pub fn reshape(&mut self, x: Var, rows: usize, cols: usize) -> Result<Var> {
        let (r, c) = self.shape(x);
        if r * c != rows * cols {
            return config(format!("reshape {r}x{c} to {rows}x{cols}"));
        }
        let value = self.value(x).to_vec();
        let ng = self.needs(x);
        Ok(self.push(rows, cols, Cow::Owned(value), Op::Reshape(x), ng))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let total = self.value(x).iter().sum();
        let ng = self.needs(x);
        self.push(1, 1, Cow::Owned(vec![total]), Op::Sum(x), ng)
    }

    /// Reverse sweep from a scalar node.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let (r, c) = self.shape(loss);
        if r * c != 1 {
            return usage(format!("backward needs a scalar loss, got {r}x{c}"));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);
        for id in (0..=loss.0).rev() {
            let node = &self.nodes[id];
            if !node.needs_grad {
                continue;
            }
            let Some(dy) = grads[id].take() else { continue };
            self.propagate(node, &dy, &mut grads);
            grads[id] = Some(dy);
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, node: &Node<'a>, dy: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let val = |v: Var| -> &[f64] { &self.nodes[v.0].value };
        let shape = |v: Var| (self.nodes[v.0].rows, self.nodes[v.0].cols);
        let needs = |v: Var| self.nodes[v.0].needs_grad;
        let y = &node.value;
        match &node.op {
            Op::Leaf | Op::Detach => {}
            Op::MatMulT(x, w) => {
                let (r, k) = shape(*x);
                let o = node.cols;
                if needs(*x) {
                    add_into(&mut grads[x.0], r * k, |g| {
                        gemm(r, o, k, dy, (o as isize, 1), val(*w), (k as isize, 1), g, 1.0)
                    });
                }
                if needs(*w) {
                    add_into(&mut grads[w.0], o * k, |g| {
                        gemm(o, r, k, dy, (1, o as isize), val(*x), (k as isize, 1), g, 1.0)
                    });
                }
            }
            Op::MatMul(a, b) => {
                let (r, k) = shape(*a);
                let c = node.cols;
                if needs(*a) {
                    add_into(&mut grads[a.0], r * k, |g| {
                        gemm(r, c, k, dy, (c as isize, 1), val(*b), (1, c as isize), g, 1.0)
                    });
                }
                if needs(*b) {
                    add_into(&mut grads[b.0], k * c, |g| {
                        gemm(k, r, c, val(*a), (1, k as isize), dy, (c as isize, 1), g, 1.0)
                    });
                }
            }
            Op::AddRow(x, b) => {
                let c = node.cols;
                if needs(*x) {
                    add_into(&mut grads[x.0], dy.len(), |g| g.iter_mut().zip(dy).for_each(|(a, d)| *a += d));
                }
                if needs(*b) {
                    add_into(&mut grads[b.0], c, |g| {
                        for row in dy.chunks(c) {
                            g.iter_mut().zip(row).for_each(|(a, d)| *a += d);
                        }
                    });
                }
            }
            Op::Add(a, b) | Op::Sub(a, b) => {
                let sign = if matches!(node.op, Op::Sub(..)) { -1.0 } else { 1.0 };
                if needs(*a) {
                    add_into(&mut grads[a.0], dy.len(), |g| g.iter_mut().zip(dy).for_each(|(s, d)| *s += d));
                }
                if needs(*b) {
                    add_into(&mut grads[b.0], dy.len(), |g| {
                        g.iter_mut().zip(dy).for_each(|(s, d)| *s += sign * d)
                    });
                }
            }
            Op::Mul(a, b) => {
                if needs(*a) {
                    let bv = val(*b);
                    add_into(&mut grads[a.0], dy.len(), |g| {
                        for i in 0..g.len() {
                            g[i] += dy[i] * bv[i];
                        }
                    });
                }
                if needs(*b) {
                    let av = val(*a);
                    add_into(&mut grads[b.0], dy.len(), |g| {
                        for i in 0..g.len() {
                            g[i] += dy[i] * av[i];
                        }
                    });
                }
            }
            Op::Scale(x, s) => {
                add_into(&mut grads[x.0], dy.len(), |g| g.iter_mut().zip(dy).for_each(|(a, d)| *a += s * d));
            }
            Op::Sigmoid(x) => add_into(&mut grads[x.0], dy.len(), |g| {
                for i in 0..g.len() {
                    g[i] += dy[i] * y[i] * (1.0 - y[i]);
                }
            }),
            Op::Tanh(x) => add_into(&mut grads[x.0], dy.len(), |g| {
                for i in 0..g.len() {
                    g[i] += dy[i] * (1.0 - y[i] * y[i]);
                }
            }),
            Op::Relu(x) => {
                let xv = val(*x);
                add_into(&mut grads[x.0], dy.len(), |g| {
                    for i in 0..g.len() {
                        if xv[i] > 0.0 {
                            g[i] += dy[i];
                        }
                    }
                })
            }
            Op::Elu(x) => {
                let xv = val(*x);
                add_into(&mut grads[x.0], dy.len(), |g| {
                    for i in 0..g.len() {
                        g[i] += if xv[i] > 0.0 { dy[i] } else { dy[i] * (y[i] + 1.0) };
                    }
                })
            }
            Op::Abs(x) => {
                let xv = val(*x);
                add_into(&mut grads[x.0], dy.len(), |g| {
                    for i in 0..g.len() {
                        if xv[i] > 0.0 {
                            g[i] += dy[i];
                        } else if xv[i] < 0.0 {
                            g[i] -= dy[i];
                        }
                    }
                })
            }
            Op::LogEps(x, eps) => {
                let xv = val(*x);
                add_into(&mut grads[x.0], dy.len(), |g| {
                    for i in 0..g.len() {
                        g[i] += dy[i] / (xv[i] + eps);
                    }
                })
            }
            Op::ConcatCols(a, b) => {
                let (_, ca) = shape(*a);
                let (_, cb) = shape(*b);
                let c = ca + cb;
                if needs(*a) {
                    add_into(&mut grads[a.0], node.rows * ca, |g| {
                        for (gr, dr) in g.chunks_mut(ca).zip(dy.chunks(c)) {
                            gr.iter_mut().zip(&dr[..ca]).for_each(|(s, d)| *s += d);
                        }
                    });
                }
                if needs(*b) {
                    add_into(&mut grads[b.0], node.rows * cb, |g| {
                        for (gr, dr) in g.chunks_mut(cb).zip(dy.chunks(c)) {
                            gr.iter_mut().zip(&dr[ca..]).for_each(|(s, d)| *s += d);
                        }
                    });
                }
            }
            Op::SoftmaxRows(x) => {
                let c = node.cols;
                add_into(&mut grads[x.0], dy.len(), |g| {
                    for ((gr, dr), yr) in g.chunks_mut(c).zip(dy.chunks(c)).zip(y.chunks(c)) {
                        let dot: f64 = dr.iter().zip(yr).map(|(a, b)| a * b).sum();
                        for j in 0..c {
                            gr[j] += yr[j] * (dr[j] - dot);
                        }
                    }
                })
            }
            Op::GroupScores { q, k, n, scale } => {
                let (rows, d) = shape(*q);
                let (n, scale) = (*n, *scale);
                if needs(*q) {
                    let kv = val(*k);
                    add_into(&mut grads[q.0], rows * d, |g| {
                        for row in 0..rows {
                            let base = row - row % n;
                            for j in 0..n {
                                let w = scale * dy[row * n + j];
                                let kj = &kv[(base + j) * d..(base + j + 1) * d];
                                g[row * d..(row + 1) * d].iter_mut().zip(kj).for_each(|(s, kk)| *s += w * kk);
                            }
                        }
                    });
                }
                if needs(*k) {
                    let qv = val(*q);
                    add_into(&mut grads[k.0], rows * d, |g| {
                        for row in 0..rows {
                            let base = row - row % n;
                            let qi = &qv[row * d..(row + 1) * d];
                            for j in 0..n {
                                let w = scale * dy[row * n + j];
                                g[(base + j) * d..(base + j + 1) * d]
                                    .iter_mut()
                                    .zip(qi)
                                    .for_each(|(s, qq)| *s += w * qq);
                            }
                        }
                    });
                }
            }
            Op::GroupMix { c, v, n } => {
                let n = *n;
                let (rows, d) = shape(*v);
                if needs(*c) {
                    let vv = val(*v);
                    add_into(&mut grads[c.0], rows * n, |g| {
                        for row in 0..rows {
                            let base = row - row % n;
                            let dz = &dy[row * d..(row + 1) * d];
                            for j in 0..n {
                                let vj = &vv[(base + j) * d..(base + j + 1) * d];
                                g[row * n + j] += dz.iter().zip(vj).map(|(a, b)| a * b).sum::<f64>();
                            }
                        }
                    });
                }
                if needs(*v) {
                    let cv = val(*c);
                    add_into(&mut grads[v.0], rows * d, |g| {
                        for row in 0..rows {
                            let base = row - row % n;
                            let dz = &dy[row * d..(row + 1) * d];
                            for j in 0..n {
                                let w = cv[row * n + j];
                                g[(base + j) * d..(base + j + 1) * d]
                                    .iter_mut()
                                    .zip(dz)
                                    .for_each(|(s, z)| *s += w * z);
                            }
                        }
                    });
                }
            }
            Op::GroupDiag { c, n } => {
                let n = *n;
                add_into(&mut grads[c.0], node.rows * n, |g| {
                    for row in 0..node.rows {
                        g[row * n + row % n] += dy[row];
                    }
                })
            }
            Op::GatherCols { x, idx } => {
                let (r, c) = shape(*x);
                add_into(&mut grads[x.0], r * c, |g| {
                    for (row, &i) in idx.iter().enumerate() {
                        g[row * c + i] += dy[row];
                    }
                })
            }
            Op::MaskedRowMax { x, arg } => {
                let (r, c) = shape(*x);
                add_into(&mut grads[x.0], r * c, |g| {
                    for (row, &i) in arg.iter().enumerate() {
                        g[row * c + i] += dy[row];
                    }
                })
            }
            Op::BatchVecMat { q, w, n, e } => {
                let (n, e) = (*n, *e);
                let rows = node.rows;
                if needs(*q) {
                    let wv = val(*w);
                    add_into(&mut grads[q.0], rows * n, |g| {
                        for row in 0..rows {
                            let d = &dy[row * e..(row + 1) * e];
                            for i in 0..n {
                                let wi = &wv[row * n * e + i * e..row * n * e + (i + 1) * e];
                                g[row * n + i] += d.iter().zip(wi).map(|(a, b)| a * b).sum::<f64>();
                            }
                        }
                    });
                }
                if needs(*w) {
                    let qv = val(*q);
                    add_into(&mut grads[w.0], rows * n * e, |g| {
                        for row in 0..rows {
                            let d = &dy[row * e..(row + 1) * e];
                            for i in 0..n {
                                let qi = qv[row * n + i];
                                g[row * n * e + i * e..row * n * e + (i + 1) * e]
                                    .iter_mut()
                                    .zip(d)
                                    .for_each(|(s, dd)| *s += qi * dd);
                            }
                        }
                    });
                }
            }
            Op::RowDot(a, b) => {
                let (r, c) = shape(*a);
                for (src, other) in [(*a, *b), (*b, *a)] {
                    if needs(src) {
                        let ov = val(other);
                        add_into(&mut grads[src.0], r * c, |g| {
                            for row in 0..r {
                                for j in 0..c {
                                    g[row * c + j] += dy[row] * ov[row * c + j];
                                }
                            }
                        });
                    }
                }
            }
            Op::Reshape(x) => {
                add_into(&mut grads[x.0], dy.len(), |g| g.iter_mut().zip(dy).for_each(|(s, d)| *s += d));
            }
            Op::Sum(x) => {
                let (r, c) = shape(*x);
                add_into(&mut grads[x.0], r * c, |g| g.iter_mut().for_each(|s| *s += dy[0]));
            }
        }
    }
}
