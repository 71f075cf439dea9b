//! The tape: eager forward ops with recorded adjoints.

use std::sync::Arc;

use ndarray::{s, Array1, Array2, Axis};

use super::Scalar;

/// Handle to a node on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(pub(crate) usize);

/// 1-D convolution geometry. Input rows are time steps, columns channels.
#[derive(Debug, Clone, Copy)]
pub struct ConvSpec {
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    pub dilation: usize,
}

impl ConvSpec {
    pub fn out_len(&self, t_in: usize) -> usize {
        let span = (self.kernel - 1) * self.dilation + 1;
        (t_in + 2 * self.pad - span) / self.stride + 1
    }
}

enum Op<T: Scalar> {
    Leaf,
    Constant,
    Add(Var, Var),
    Sub(Var, Var),
    MulElem(Var, Var),
    Scale(Var, T),
    AddRowBroadcast(Var, Var),
    BroadcastRow(Var, usize),
    MatMul(Var, Var),
    /// a (M×K) · bᵀ where b is (N×K).
    MatMulTransB(Var, Var),
    Gelu(Var),
    LayerNormRows {
        x: Var,
        gamma: Var,
        beta: Var,
        rstd: Array1<T>,
        mean: Array1<T>,
    },
    SoftmaxRows(Var),
    AddConstMat(Var, Arc<Array2<T>>),
    MulConstMat(Var, Arc<Array2<T>>),
    GatherRows(Var, Arc<Vec<usize>>),
    ConcatRows(Var, Var),
    ConcatCols(Var, Var),
    SliceRows {
        x: Var,
        start: usize,
    },
    SliceCols {
        x: Var,
        start: usize,
    },
    SumAll(Var),
    Rope {
        x: Var,
        head_dim: usize,
        cos: Arc<Array2<T>>,
        sin: Arc<Array2<T>>,
    },
    Conv1d {
        x: Var,
        w: Var,
        b: Var,
        spec: ConvSpec,
        cols: Array2<T>,
    },
    Upsample2xRows(Var),
    CrossEntropyRows {
        logits: Var,
        targets: Arc<Vec<usize>>,
        mask: Arc<Vec<bool>>,
        probs: Array2<T>,
        count: usize,
    },
    /// Forward takes the supplied value; backward routes the gradient to `x`.
    StraightThrough {
        x: Var,
    },
    Detach(Var),
}

struct Node<T: Scalar> {
    data: Array2<T>,
    op: Op<T>,
    needs_grad: bool,
}

/// Gradients produced by [`Tape::backward`].
pub struct Grads<T: Scalar> {
    by_node: Vec<Option<Array2<T>>>,
}

impl<T: Scalar> Grads<T> {
    pub fn get(&self, v: Var) -> Option<&Array2<T>> {
        self.by_node[v.0].as_ref()
    }
    pub fn take(&mut self, v: Var) -> Option<Array2<T>> {
        self.by_node[v.0].take()
    }
}

pub struct Tape<T: Scalar> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::with_capacity(256) }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn data(&self, v: Var) -> &Array2<T> {
        &self.nodes[v.0].data
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        let d = self.nodes[v.0].data.dim();
        (d.0, d.1)
    }

    pub fn scalar(&self, v: Var) -> T {
        debug_assert_eq!(self.nodes[v.0].data.dim(), (1, 1));
        self.nodes[v.0].data[[0, 0]]
    }

    fn push(&mut self, data: Array2<T>, op: Op<T>, needs_grad: bool) -> Var {
        self.nodes.push(Node { data, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// A differentiable input (parameter or traced activation source).
    pub fn leaf(&mut self, data: Array2<T>) -> Var {
        self.push(data, Op::Leaf, true)
    }

    /// A non-differentiable input.
    pub fn constant(&mut self, data: Array2<T>) -> Var {
        self.push(data, Op::Constant, false)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let data = &self.nodes[a.0].data + &self.nodes[b.0].data;
        let g = self.ng(a) || self.ng(b);
        self.push(data, Op::Add(a, b), g)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let data = &self.nodes[a.0].data - &self.nodes[b.0].data;
        let g = self.ng(a) || self.ng(b);
        self.push(data, Op::Sub(a, b), g)
    }

    pub fn mul_elem(&mut self, a: Var, b: Var) -> Var {
        let data = &self.nodes[a.0].data * &self.nodes[b.0].data;
        let g = self.ng(a) || self.ng(b);
        self.push(data, Op::MulElem(a, b), g)
    }

    pub fn scale(&mut self, a: Var, c: T) -> Var {
        let data = self.nodes[a.0].data.mapv(|x| x * c);
        let g = self.ng(a);
        self.push(data, Op::Scale(a, c), g)
    }

    /// `a` is N×D, `row` is 1×D; adds the row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let r = self.nodes[row.0].data.row(0).to_owned();
        let data = &self.nodes[a.0].data + &r;
        let g = self.ng(a) || self.ng(row);
        self.push(data, Op::AddRowBroadcast(a, row), g)
    }

    /// Repeat a 1×D row n times into an N×D matrix.
    pub fn broadcast_row(&mut self, row: Var, n: usize) -> Var {
        let r = &self.nodes[row.0].data;
        debug_assert_eq!(r.nrows(), 1);
        let d = r.ncols();
        let mut data = Array2::zeros((n, d));
        for mut out in data.rows_mut() {
            out.assign(&r.row(0));
        }
        let g = self.ng(row);
        self.push(data, Op::BroadcastRow(row, n), g)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let data = self.nodes[a.0].data.dot(&self.nodes[b.0].data);
        let g = self.ng(a) || self.ng(b);
        self.push(data, Op::MatMul(a, b), g)
    }

    /// a · bᵀ without materializing the transpose as a node.
    pub fn matmul_tb(&mut self, a: Var, b: Var) -> Var {
        let data = self.nodes[a.0].data.dot(&self.nodes[b.0].data.t());
        let g = self.ng(a) || self.ng(b);
        self.push(data, Op::MatMulTransB(a, b), g)
    }

    /// `x · w + bias_row`, the standard dense layer.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Var {
        let y = self.matmul(x, w);
        self.add_row(y, b)
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        let data = self.nodes[a.0].data.mapv(gelu_tanh);
        let g = self.ng(a);
        self.push(data, Op::Gelu(a), g)
    }

    /// Per-row layer norm with learned 1×D gamma/beta.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Var {
        let xd = &self.nodes[x.0].data;
        let (n, d) = xd.dim();
        let eps = T::from_f64(1e-5);
        let inv_d = T::from_f64(1.0 / d as f64);
        let mut mean = Array1::zeros(n);
        let mut rstd = Array1::zeros(n);
        let mut data = Array2::zeros((n, d));
        let gm = self.nodes[gamma.0].data.row(0).to_owned();
        let bt = self.nodes[beta.0].data.row(0).to_owned();
        for i in 0..n {
            let row = xd.row(i);
            let mu = row.iter().fold(T::zero(), |a, &v| a + v) * inv_d;
            let var = row.iter().fold(T::zero(), |a, &v| a + (v - mu) * (v - mu)) * inv_d;
            let rs = T::one() / (var + eps).sqrt();
            mean[i] = mu;
            rstd[i] = rs;
            for j in 0..d {
                data[[i, j]] = (row[j] - mu) * rs * gm[j] + bt[j];
            }
        }
        let g = self.ng(x) || self.ng(gamma) || self.ng(beta);
        self.push(data, Op::LayerNormRows { x, gamma, beta, rstd, mean }, g)
    }

    /// Numerically stable row-wise softmax.
    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let data = softmax_rows_arr(&self.nodes[a.0].data);
        let g = self.ng(a);
        self.push(data, Op::SoftmaxRows(a), g)
    }

    pub fn add_const(&mut self, a: Var, c: Arc<Array2<T>>) -> Var {
        let data = &self.nodes[a.0].data + c.as_ref();
        let g = self.ng(a);
        self.push(data, Op::AddConstMat(a, c), g)
    }

    pub fn mul_const(&mut self, a: Var, c: Arc<Array2<T>>) -> Var {
        let data = &self.nodes[a.0].data * c.as_ref();
        let g = self.ng(a);
        self.push(data, Op::MulConstMat(a, c), g)
    }

    /// Row lookup (embedding gather).
    pub fn gather_rows(&mut self, table: Var, idx: Arc<Vec<usize>>) -> Var {
        let t = &self.nodes[table.0].data;
        let d = t.ncols();
        let mut data = Array2::zeros((idx.len(), d));
        for (i, &ix) in idx.iter().enumerate() {
            data.row_mut(i).assign(&t.row(ix));
        }
        let g = self.ng(table);
        self.push(data, Op::GatherRows(table, idx), g)
    }

    pub fn concat_rows(&mut self, a: Var, b: Var) -> Var {
        let ad = &self.nodes[a.0].data;
        let bd = &self.nodes[b.0].data;
        debug_assert_eq!(ad.ncols(), bd.ncols());
        let mut data = Array2::zeros((ad.nrows() + bd.nrows(), ad.ncols()));
        data.slice_mut(s![..ad.nrows(), ..]).assign(ad);
        data.slice_mut(s![ad.nrows().., ..]).assign(bd);
        let g = self.ng(a) || self.ng(b);
        self.push(data, Op::ConcatRows(a, b), g)
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Var {
        let ad = &self.nodes[a.0].data;
        let bd = &self.nodes[b.0].data;
        debug_assert_eq!(ad.nrows(), bd.nrows());
        let mut data = Array2::zeros((ad.nrows(), ad.ncols() + bd.ncols()));
        data.slice_mut(s![.., ..ad.ncols()]).assign(ad);
        data.slice_mut(s![.., ad.ncols()..]).assign(bd);
        let g = self.ng(a) || self.ng(b);
        self.push(data, Op::ConcatCols(a, b), g)
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Var {
        let data = self.nodes[x.0].data.slice(s![start..start + len, ..]).to_owned();
        let g = self.ng(x);
        self.push(data, Op::SliceRows { x, start }, g)
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Var {
        let data = self.nodes[x.0].data.slice(s![.., start..start + len]).to_owned();
        let g = self.ng(x);
        self.push(data, Op::SliceCols { x, start }, g)
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let s = self.nodes[a.0].data.iter().fold(T::zero(), |acc, &v| acc + v);
        let g = self.ng(a);
        self.push(Array2::from_elem((1, 1), s), Op::SumAll(a), g)
    }

    /// Rotary rotation of adjacent column pairs within each head block.
    /// `cos`/`sin` are N×(head_dim/2), shared across heads.
    pub fn rope(&mut self, x: Var, head_dim: usize, cos: Arc<Array2<T>>, sin: Arc<Array2<T>>) -> Var {
        let xd = &self.nodes[x.0].data;
        let data = rope_apply(xd, head_dim, &cos, &sin, false);
        let g = self.ng(x);
        self.push(data, Op::Rope { x, head_dim, cos, sin }, g)
    }

    /// 1-D convolution over time. `x` is T×Cin, `w` is (k·Cin)×Cout with row
    /// index `tap * Cin + channel`, `b` is 1×Cout.
    pub fn conv1d(&mut self, x: Var, w: Var, b: Var, spec: ConvSpec) -> Var {
        let xd = &self.nodes[x.0].data;
        let cols = im2col(xd, spec);
        let mut data = cols.dot(&self.nodes[w.0].data);
        let bias = self.nodes[b.0].data.row(0).to_owned();
        data += &bias;
        let g = self.ng(x) || self.ng(w) || self.ng(b);
        self.push(data, Op::Conv1d { x, w, b, spec, cols }, g)
    }

    /// Nearest-neighbour 2x upsampling along rows.
    pub fn upsample2x_rows(&mut self, x: Var) -> Var {
        let xd = &self.nodes[x.0].data;
        let (n, d) = xd.dim();
        let mut data = Array2::zeros((2 * n, d));
        for i in 0..n {
            data.row_mut(2 * i).assign(&xd.row(i));
            data.row_mut(2 * i + 1).assign(&xd.row(i));
        }
        let g = self.ng(x);
        self.push(data, Op::Upsample2xRows(x), g)
    }

    /// Mean cross-entropy over rows where `mask` is true.
    /// Returns a 1×1 scalar; panics if no row is selected.
    pub fn cross_entropy_rows(&mut self, logits: Var, targets: Arc<Vec<usize>>, mask: Arc<Vec<bool>>) -> Var {
        let ld = &self.nodes[logits.0].data;
        let (n, _v) = ld.dim();
        debug_assert_eq!(targets.len(), n);
        debug_assert_eq!(mask.len(), n);
        let probs = softmax_rows_arr(ld);
        let count = mask.iter().filter(|&&m| m).count();
        assert!(count > 0, "cross_entropy_rows: empty supervision set");
        let mut total = 0.0f64;
        for i in 0..n {
            if mask[i] {
                let p = probs[[i, targets[i]]].to_f64().max(1e-300);
                total -= p.ln();
            }
        }
        let mean = T::from_f64(total / count as f64);
        let g = self.ng(logits);
        self.push(
            Array2::from_elem((1, 1), mean),
            Op::CrossEntropyRows { logits, targets, mask, probs, count },
            g,
        )
    }

    /// Forward evaluates to `value`; backward passes the gradient to `x`
    /// unchanged. The standard quantization straight-through estimator.
    pub fn straight_through(&mut self, x: Var, value: Array2<T>) -> Var {
        debug_assert_eq!(self.nodes[x.0].data.dim(), value.dim());
        let g = self.ng(x);
        self.push(value, Op::StraightThrough { x }, g)
    }

    /// Copy of `x` that blocks gradient flow.
    pub fn detach(&mut self, x: Var) -> Var {
        let data = self.nodes[x.0].data.clone();
        self.push(data, Op::Detach(x), false)
    }

    /// Masked mean squared error between two nodes.
    /// `mask` is 0/1; `count` divides the summed squared error.
    pub fn masked_mse(&mut self, a: Var, b: Var, mask: Arc<Array2<T>>, count: usize) -> Var {
        let d = self.sub(a, b);
        let dm = self.mul_const(d, mask);
        let sq = self.mul_elem(dm, dm);
        let total = self.sum_all(sq);
        self.scale(total, T::from_f64(1.0 / count as f64))
    }

    /// Reverse pass from a 1×1 scalar root.
    pub fn backward(&mut self, root: Var) -> Grads<T> {
        assert_eq!(self.nodes[root.0].data.dim(), (1, 1), "backward root must be scalar");
        let n = self.nodes.len();
        let mut grads: Vec<Option<Array2<T>>> = (0..n).map(|_| None).collect();
        grads[root.0] = Some(Array2::from_elem((1, 1), T::one()));

        for i in (0..=root.0).rev() {
            if !self.nodes[i].needs_grad {
                continue;
            }
            let g = match grads[i].take() {
                Some(g) => g,
                None => continue,
            };
            self.accumulate(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        Grads { by_node: grads }
    }

    fn add_grad(&self, grads: &mut [Option<Array2<T>>], v: Var, delta: Array2<T>) {
        if !self.nodes[v.0].needs_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(g) => *g += &delta,
            slot @ None => *slot = Some(delta),
        }
    }

    fn accumulate(&self, i: usize, g: &Array2<T>, grads: &mut [Option<Array2<T>>]) {
        match &self.nodes[i].op {
            Op::Leaf | Op::Constant => {}
            Op::Add(a, b) => {
                self.add_grad(grads, *a, g.clone());
                self.add_grad(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                self.add_grad(grads, *a, g.clone());
                self.add_grad(grads, *b, g.mapv(|x| T::zero() - x));
            }
            Op::MulElem(a, b) => {
                self.add_grad(grads, *a, g * &self.nodes[b.0].data);
                self.add_grad(grads, *b, g * &self.nodes[a.0].data);
            }
            Op::Scale(a, c) => {
                self.add_grad(grads, *a, g.mapv(|x| x * *c));
            }
            Op::AddRowBroadcast(a, row) => {
                self.add_grad(grads, *a, g.clone());
                let sum = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                self.add_grad(grads, *row, sum);
            }
            Op::BroadcastRow(row, _) => {
                let sum = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                self.add_grad(grads, *row, sum);
            }
            Op::MatMul(a, b) => {
                self.add_grad(grads, *a, g.dot(&self.nodes[b.0].data.t()));
                self.add_grad(grads, *b, self.nodes[a.0].data.t().dot(g));
            }
            Op::MatMulTransB(a, b) => {
                self.add_grad(grads, *a, g.dot(&self.nodes[b.0].data));
                self.add_grad(grads, *b, g.t().dot(&self.nodes[a.0].data));
            }
            Op::Gelu(a) => {
                let mut d = self.nodes[a.0].data.mapv(gelu_tanh_deriv);
                d *= g;
                self.add_grad(grads, *a, d);
            }
            Op::LayerNormRows { x, gamma, beta, rstd, mean } => {
                let xd = &self.nodes[x.0].data;
                let (n, d) = xd.dim();
                let gm = self.nodes[gamma.0].data.row(0).to_owned();
                let inv_d = T::from_f64(1.0 / d as f64);
                let mut dx = Array2::zeros((n, d));
                let mut dgamma = Array2::zeros((1, d));
                let mut dbeta = Array2::zeros((1, d));
                for i in 0..n {
                    let rs = rstd[i];
                    let mu = mean[i];
                    // xhat and the two row reductions
                    let mut sum_dxhat = T::zero();
                    let mut sum_dxhat_xhat = T::zero();
                    for j in 0..d {
                        let xhat = (xd[[i, j]] - mu) * rs;
                        let dxhat = g[[i, j]] * gm[j];
                        sum_dxhat = sum_dxhat + dxhat;
                        sum_dxhat_xhat = sum_dxhat_xhat + dxhat * xhat;
                        dgamma[[0, j]] = dgamma[[0, j]] + g[[i, j]] * xhat;
                        dbeta[[0, j]] = dbeta[[0, j]] + g[[i, j]];
                    }
                    for j in 0..d {
                        let xhat = (xd[[i, j]] - mu) * rs;
                        let dxhat = g[[i, j]] * gm[j];
                        dx[[i, j]] = rs * (dxhat - sum_dxhat * inv_d - xhat * sum_dxhat_xhat * inv_d);
                    }
                }
                self.add_grad(grads, *x, dx);
                self.add_grad(grads, *gamma, dgamma);
                self.add_grad(grads, *beta, dbeta);
            }
            Op::SoftmaxRows(a) => {
                let y = &self.nodes[i].data;
                let (n, d) = y.dim();
                let mut dx = Array2::zeros((n, d));
                for r in 0..n {
                    let mut dot = T::zero();
                    for c in 0..d {
                        dot = dot + g[[r, c]] * y[[r, c]];
                    }
                    for c in 0..d {
                        dx[[r, c]] = y[[r, c]] * (g[[r, c]] - dot);
                    }
                }
                self.add_grad(grads, *a, dx);
            }
            Op::AddConstMat(a, _) => {
                self.add_grad(grads, *a, g.clone());
            }
            Op::MulConstMat(a, c) => {
                self.add_grad(grads, *a, g * c.as_ref());
            }
            Op::GatherRows(table, idx) => {
                let d = self.nodes[table.0].data.ncols();
                let v = self.nodes[table.0].data.nrows();
                let mut dt = Array2::zeros((v, d));
                for (r, &ix) in idx.iter().enumerate() {
                    let mut row = dt.row_mut(ix);
                    row += &g.row(r);
                }
                self.add_grad(grads, *table, dt);
            }
            Op::ConcatRows(a, b) => {
                let ra = self.nodes[a.0].data.nrows();
                self.add_grad(grads, *a, g.slice(s![..ra, ..]).to_owned());
                self.add_grad(grads, *b, g.slice(s![ra.., ..]).to_owned());
            }
            Op::ConcatCols(a, b) => {
                let ca = self.nodes[a.0].data.ncols();
                self.add_grad(grads, *a, g.slice(s![.., ..ca]).to_owned());
                self.add_grad(grads, *b, g.slice(s![.., ca..]).to_owned());
            }
            Op::SliceRows { x, start } => {
                let (n, d) = self.nodes[x.0].data.dim();
                let mut dx = Array2::zeros((n, d));
                dx.slice_mut(s![*start..*start + g.nrows(), ..]).assign(g);
                self.add_grad(grads, *x, dx);
            }
            Op::SliceCols { x, start } => {
                let (n, d) = self.nodes[x.0].data.dim();
                let mut dx = Array2::zeros((n, d));
                dx.slice_mut(s![.., *start..*start + g.ncols()]).assign(g);
                self.add_grad(grads, *x, dx);
            }
            Op::SumAll(a) => {
                let (n, d) = self.nodes[a.0].data.dim();
                let gv = g[[0, 0]];
                self.add_grad(grads, *a, Array2::from_elem((n, d), gv));
            }
            Op::Rope { x, head_dim, cos, sin } => {
                let dx = rope_apply(g, *head_dim, cos, sin, true);
                self.add_grad(grads, *x, dx);
            }
            Op::Conv1d { x, w, b, spec, cols } => {
                let wd = &self.nodes[w.0].data;
                // dW = colsᵀ · g ; db = column sums ; dx via col2im of g · wᵀ
                self.add_grad(grads, *w, cols.t().dot(g));
                self.add_grad(grads, *b, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                let dcols = g.dot(&wd.t());
                let xd = &self.nodes[x.0].data;
                let mut dx = Array2::zeros(xd.dim());
                col2im_add(&dcols, &mut dx, *spec);
                self.add_grad(grads, *x, dx);
            }
            Op::Upsample2xRows(x) => {
                let n = self.nodes[x.0].data.nrows();
                let d = self.nodes[x.0].data.ncols();
                let mut dx = Array2::zeros((n, d));
                for i in 0..n {
                    for j in 0..d {
                        dx[[i, j]] = g[[2 * i, j]] + g[[2 * i + 1, j]];
                    }
                }
                self.add_grad(grads, *x, dx);
            }
            Op::CrossEntropyRows { logits, targets, mask, probs, count } => {
                let gv = g[[0, 0]] * T::from_f64(1.0 / *count as f64);
                let (n, v) = probs.dim();
                let mut dl = Array2::zeros((n, v));
                for r in 0..n {
                    if mask[r] {
                        for c in 0..v {
                            dl[[r, c]] = probs[[r, c]] * gv;
                        }
                        dl[[r, targets[r]]] = dl[[r, targets[r]]] - gv;
                    }
                }
                self.add_grad(grads, *logits, dl);
            }
            Op::StraightThrough { x } => {
                self.add_grad(grads, *x, g.clone());
            }
            Op::Detach(_) => {}
        }
    }
}

fn gelu_tanh<T: Scalar>(x: T) -> T {
    let c = T::from_f64(0.7978845608028654); // sqrt(2/pi)
    let k = T::from_f64(0.044715);
    let half = T::from_f64(0.5);
    let u = c * (x + k * x * x * x);
    half * x * (T::one() + u.tanh())
}

fn gelu_tanh_deriv<T: Scalar>(x: T) -> T {
    let c = T::from_f64(0.7978845608028654);
    let k = T::from_f64(0.044715);
    let half = T::from_f64(0.5);
    let three = T::from_f64(3.0);
    let u = c * (x + k * x * x * x);
    let t = u.tanh();
    let sech2 = T::one() - t * t;
    half * (T::one() + t) + half * x * sech2 * c * (T::one() + three * k * x * x)
}

fn softmax_rows_arr<T: Scalar>(x: &Array2<T>) -> Array2<T> {
    let (n, d) = x.dim();
    let mut out = Array2::zeros((n, d));
    for i in 0..n {
        let row = x.row(i);
        let mut mx = row[0];
        for &v in row.iter() {
            if v > mx {
                mx = v;
            }
        }
        let mut denom = T::zero();
        for j in 0..d {
            let e = (row[j] - mx).exp();
            out[[i, j]] = e;
            denom = denom + e;
        }
        let inv = T::one() / denom;
        for j in 0..d {
            out[[i, j]] = out[[i, j]] * inv;
        }
    }
    out
}

/// Rotate adjacent column pairs inside each `head_dim` block.
/// With `inverse` the rotation angle is negated (used for the adjoint).
fn rope_apply<T: Scalar>(
    x: &Array2<T>,
    head_dim: usize,
    cos: &Array2<T>,
    sin: &Array2<T>,
    inverse: bool,
) -> Array2<T> {
    let (n, d) = x.dim();
    debug_assert_eq!(d % head_dim, 0);
    debug_assert_eq!(head_dim % 2, 0);
    let planes = head_dim / 2;
    debug_assert_eq!(cos.dim(), (n, planes));
    let heads = d / head_dim;
    let mut out = Array2::zeros((n, d));
    for i in 0..n {
        for h in 0..heads {
            let base = h * head_dim;
            for p in 0..planes {
                let c = cos[[i, p]];
                let s = if inverse { T::zero() - sin[[i, p]] } else { sin[[i, p]] };
                let x0 = x[[i, base + 2 * p]];
                let x1 = x[[i, base + 2 * p + 1]];
                out[[i, base + 2 * p]] = x0 * c - x1 * s;
                out[[i, base + 2 * p + 1]] = x0 * s + x1 * c;
            }
        }
    }
    out
}

fn im2col<T: Scalar>(x: &Array2<T>, spec: ConvSpec) -> Array2<T> {
    let (t_in, c_in) = x.dim();
    let t_out = spec.out_len(t_in);
    let mut cols = Array2::zeros((t_out, spec.kernel * c_in));
    for t in 0..t_out {
        for j in 0..spec.kernel {
            let src = t as isize * spec.stride as isize - spec.pad as isize + (j * spec.dilation) as isize;
            if src >= 0 && (src as usize) < t_in {
                let src = src as usize;
                for c in 0..c_in {
                    cols[[t, j * c_in + c]] = x[[src, c]];
                }
            }
        }
    }
    cols
}

fn col2im_add<T: Scalar>(dcols: &Array2<T>, dx: &mut Array2<T>, spec: ConvSpec) {
    let (t_in, c_in) = dx.dim();
    let t_out = dcols.nrows();
    for t in 0..t_out {
        for j in 0..spec.kernel {
            let src = t as isize * spec.stride as isize - spec.pad as isize + (j * spec.dilation) as isize;
            if src >= 0 && (src as usize) < t_in {
                let src = src as usize;
                for c in 0..c_in {
                    dx[[src, c]] = dx[[src, c]] + dcols[[t, j * c_in + c]];
                }
            }
        }
    }
}
