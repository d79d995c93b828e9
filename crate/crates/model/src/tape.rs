//! Reverse-mode differentiation over 2-D arrays.
//!
//! Every operation appends a node holding its value; [`Tape::backward`]
//! walks the nodes in reverse and returns the gradient of a scalar root
//! with respect to every node.

use std::collections::HashMap;

use ndarray::{s, Array2, Axis};

use crate::params::ParameterStore;

pub type NodeId = usize;

const LN_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

enum Op {
    Leaf,
    MatMul(NodeId, NodeId),
    /// `a · bᵀ`
    MatMulBT(NodeId, NodeId),
    Add(NodeId, NodeId),
    /// `a + row` with `row` of shape `1×n` broadcast over rows.
    AddRow(NodeId, NodeId),
    Scale(NodeId, f64),
    /// Adds a constant (for masks); the gradient passes straight through.
    AddConst(NodeId),
    MulConst(NodeId, Array2<f64>),
    Gelu(NodeId),
    Softmax(NodeId),
    LayerNorm {
        x: NodeId,
        gain: NodeId,
        bias: NodeId,
        xhat: Array2<f64>,
        inv_std: Vec<f64>,
    },
    RowGather(NodeId, Vec<usize>),
    /// Output element `k` (row-major) is source element `idx[k]` (row-major).
    Gather(NodeId, Vec<usize>),
    SliceCols(NodeId, usize),
    ConcatCols(Vec<NodeId>),
    /// Mean token NLL; keeps the softmax probabilities.
    CrossEntropy(NodeId, Vec<usize>, Array2<f64>),
    SumAll(NodeId),
}

#[derive(Default)]
pub struct Tape {
    values: Vec<Array2<f64>>,
    ops: Vec<Op>,
    param_of: Vec<Option<usize>>,
    param_nodes: HashMap<usize, NodeId>,
}

fn softmax_rows(x: &Array2<f64>) -> Array2<f64> {
    let mut y = x.clone();
    for mut row in y.rows_mut() {
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if m == f64::NEG_INFINITY {
            row.fill(0.0);
            continue;
        }
        row.mapv_inplace(|v| (v - m).exp());
        let z = row.sum();
        row.mapv_inplace(|v| v / z);
    }
    y
}

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + 0.044715 * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: Array2<f64>, op: Op) -> NodeId {
        self.values.push(value);
        self.ops.push(op);
        self.param_of.push(None);
        self.values.len() - 1
    }

    pub fn value(&self, id: NodeId) -> &Array2<f64> {
        &self.values[id]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn constant(&mut self, value: Array2<f64>) -> NodeId {
        self.push(value, Op::Leaf)
    }

    /// Leaf for parameter `idx`; repeated calls return the same node.
    pub fn param(&mut self, store: &ParameterStore, idx: usize) -> NodeId {
        if let Some(&id) = self.param_nodes.get(&idx) {
            return id;
        }
        let id = self.push(store.value(idx).clone(), Op::Leaf);
        self.param_of[id] = Some(idx);
        self.param_nodes.insert(idx, id);
        id
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.values[a].dot(&self.values[b]);
        self.push(v, Op::MatMul(a, b))
    }

    pub fn matmul_bt(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.values[a].dot(&self.values[b].t());
        self.push(v, Op::MatMulBT(a, b))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = &self.values[a] + &self.values[b];
        self.push(v, Op::Add(a, b))
    }

    pub fn add_row(&mut self, a: NodeId, row: NodeId) -> NodeId {
        let v = &self.values[a] + &self.values[row];
        self.push(v, Op::AddRow(a, row))
    }

    pub fn scale(&mut self, a: NodeId, s: f64) -> NodeId {
        let v = &self.values[a] * s;
        self.push(v, Op::Scale(a, s))
    }

    pub fn add_const(&mut self, a: NodeId, c: &Array2<f64>) -> NodeId {
        let v = &self.values[a] + c;
        self.push(v, Op::AddConst(a))
    }

    pub fn mul_const(&mut self, a: NodeId, c: Array2<f64>) -> NodeId {
        let v = &self.values[a] * &c;
        self.push(v, Op::MulConst(a, c))
    }

    pub fn gelu(&mut self, a: NodeId) -> NodeId {
        let v = self.values[a].mapv(gelu);
        self.push(v, Op::Gelu(a))
    }

    pub fn softmax(&mut self, a: NodeId) -> NodeId {
        let v = softmax_rows(&self.values[a]);
        self.push(v, Op::Softmax(a))
    }

    pub fn layer_norm(&mut self, x: NodeId, gain: NodeId, bias: NodeId) -> NodeId {
        let xv = &self.values[x];
        let n = xv.ncols() as f64;
        let mut xhat = xv.clone();
        let mut inv_std = Vec::with_capacity(xv.nrows());
        for mut row in xhat.rows_mut() {
            let mean = row.sum() / n;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let is = 1.0 / (var + LN_EPS).sqrt();
            row.mapv_inplace(|v| (v - mean) * is);
            inv_std.push(is);
        }
        let v = &xhat * &self.values[gain] + &self.values[bias];
        self.push(
            v,
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            },
        )
    }

    pub fn row_gather(&mut self, table: NodeId, ids: &[usize]) -> NodeId {
        let t = &self.values[table];
        let mut v = Array2::zeros((ids.len(), t.ncols()));
        for (r, &i) in ids.iter().enumerate() {
            v.row_mut(r).assign(&t.row(i));
        }
        self.push(v, Op::RowGather(table, ids.to_vec()))
    }

    pub fn gather(&mut self, src: NodeId, idx: Vec<usize>, shape: (usize, usize)) -> NodeId {
        let flat = self.values[src].as_standard_layout().into_owned();
        let flat = flat.as_slice().expect("standard layout");
        let v = Array2::from_shape_fn(shape, |(i, j)| flat[idx[i * shape.1 + j]]);
        self.push(v, Op::Gather(src, idx))
    }

    pub fn slice_cols(&mut self, a: NodeId, start: usize, width: usize) -> NodeId {
        let v = self.values[a].slice(s![.., start..start + width]).to_owned();
        self.push(v, Op::SliceCols(a, start))
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> NodeId {
        let views: Vec<_> = parts.iter().map(|&p| self.values[p].view()).collect();
        let v = ndarray::concatenate(Axis(1), &views).expect("matching row counts");
        self.push(v, Op::ConcatCols(parts.to_vec()))
    }

    pub fn cross_entropy(&mut self, logits: NodeId, targets: &[usize]) -> NodeId {
        let probs = softmax_rows(&self.values[logits]);
        let m = targets.len() as f64;
        let loss = targets
            .iter()
            .enumerate()
            .map(|(r, &t)| -probs[[r, t]].max(f64::MIN_POSITIVE).ln())
            .sum::<f64>()
            / m;
        self.push(
            Array2::from_elem((1, 1), loss),
            Op::CrossEntropy(logits, targets.to_vec(), probs),
        )
    }

    pub fn sum_all(&mut self, a: NodeId) -> NodeId {
        let v = Array2::from_elem((1, 1), self.values[a].sum());
        self.push(v, Op::SumAll(a))
    }

    /// Gradients of the scalar `root` with respect to every node.
    pub fn backward(&self, root: NodeId) -> Vec<Option<Array2<f64>>> {
        let mut grads: Vec<Option<Array2<f64>>> = vec![None; self.values.len()];
        grads[root] = Some(Array2::ones(self.values[root].raw_dim()));
        fn acc(grads: &mut [Option<Array2<f64>>], id: NodeId, delta: Array2<f64>) {
            match &mut grads[id] {
                Some(g) => *g += &delta,
                slot => *slot = Some(delta),
            }
        }
        for id in (0..=root).rev() {
            let Some(g) = grads[id].take() else { continue };
            match &self.ops[id] {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    acc(&mut grads, *a, g.dot(&self.values[*b].t()));
                    acc(&mut grads, *b, self.values[*a].t().dot(&g));
                }
                Op::MatMulBT(a, b) => {
                    acc(&mut grads, *a, g.dot(&self.values[*b]));
                    acc(&mut grads, *b, g.t().dot(&self.values[*a]));
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *a, g.clone());
                    acc(&mut grads, *b, g.clone());
                }
                Op::AddRow(a, row) => {
                    acc(&mut grads, *row, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                    acc(&mut grads, *a, g.clone());
                }
                Op::Scale(a, s) => acc(&mut grads, *a, &g * *s),
                Op::AddConst(a) => acc(&mut grads, *a, g.clone()),
                Op::MulConst(a, c) => acc(&mut grads, *a, &g * c),
                Op::Gelu(a) => {
                    let d = self.values[*a].mapv(gelu_grad);
                    acc(&mut grads, *a, &g * &d);
                }
                Op::Softmax(a) => {
                    let y = &self.values[id];
                    let gy = &g * y;
                    let dot = gy.sum_axis(Axis(1)).insert_axis(Axis(1));
                    acc(&mut grads, *a, &gy - &(y * &dot));
                }
                Op::LayerNorm {
                    x,
                    gain,
                    bias,
                    xhat,
                    inv_std,
                } => {
                    acc(&mut grads, *bias, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                    acc(&mut grads, *gain, (&g * xhat).sum_axis(Axis(0)).insert_axis(Axis(0)));
                    let dxhat = &g * &self.values[*gain];
                    let n = xhat.ncols() as f64;
                    let mut dx = Array2::zeros(xhat.raw_dim());
                    for r in 0..xhat.nrows() {
                        let dh = dxhat.row(r);
                        let xh = xhat.row(r);
                        let sum_d = dh.sum();
                        let sum_dx = (&dh * &xh).sum();
                        let is = inv_std[r];
                        for c in 0..xhat.ncols() {
                            dx[[r, c]] = is / n * (n * dh[c] - sum_d - xh[c] * sum_dx);
                        }
                    }
                    acc(&mut grads, *x, dx);
                }
                Op::RowGather(table, ids) => {
                    let mut d = Array2::zeros(self.values[*table].raw_dim());
                    for (r, &i) in ids.iter().enumerate() {
                        let mut row = d.row_mut(i);
                        row += &g.row(r);
                    }
                    acc(&mut grads, *table, d);
                }
                Op::Gather(src, idx) => {
                    let shape = self.values[*src].raw_dim();
                    let cols = shape[1];
                    let mut d = Array2::zeros(shape);
                    for (k, gv) in g.iter().enumerate() {
                        let f = idx[k];
                        d[[f / cols, f % cols]] += gv;
                    }
                    acc(&mut grads, *src, d);
                }
                Op::SliceCols(a, start) => {
                    let mut d = Array2::zeros(self.values[*a].raw_dim());
                    d.slice_mut(s![.., *start..*start + g.ncols()]).assign(&g);
                    acc(&mut grads, *a, d);
                }
                Op::ConcatCols(parts) => {
                    let mut at = 0;
                    for &p in parts {
                        let w = self.values[p].ncols();
                        acc(&mut grads, p, g.slice(s![.., at..at + w]).to_owned());
                        at += w;
                    }
                }
                Op::CrossEntropy(logits, targets, probs) => {
                    let m = targets.len() as f64;
                    let mut d = probs.clone();
                    for (r, &t) in targets.iter().enumerate() {
                        d[[r, t]] -= 1.0;
                    }
                    acc(&mut grads, *logits, d * (g[[0, 0]] / m));
                }
                Op::SumAll(a) => {
                    let d = Array2::from_elem(self.values[*a].raw_dim(), g[[0, 0]]);
                    acc(&mut grads, *a, d);
                }
            }
            grads[id] = Some(g);
        }
        grads
    }

    /// Adds the gradients of parameter leaves into the store, times `weight`.
    pub fn accumulate(&self, grads: &[Option<Array2<f64>>], store: &mut ParameterStore, weight: f64) {
        for (&idx, &node) in &self.param_nodes {
            if let Some(g) = &grads[node] {
                store.grad_mut(idx).scaled_add(weight, g);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    /// Central-difference check of d(sum(f(x) * w))/dx for a unary builder.
    fn check(x0: Array2<f64>, build: impl Fn(&mut Tape, NodeId) -> NodeId) {
        let (r, c) = x0.dim();
        let eval = |x: &Array2<f64>| {
            let mut t = Tape::new();
            let xi = t.constant(x.clone());
            let y = build(&mut t, xi);
            let wy = Array2::from_shape_fn(t.value(y).raw_dim(), |(i, j)| ((i * 7 + j * 3) % 5) as f64 - 2.0);
            let z = t.mul_const(y, wy);
            let s = t.sum_all(z);
            (t, xi, s)
        };
        let (t, xi, s) = eval(&x0);
        let grads = t.backward(s);
        let analytic = grads[xi].clone().unwrap();
        let h = 1e-6;
        for i in 0..r {
            for j in 0..c {
                let mut xp = x0.clone();
                xp[[i, j]] += h;
                let mut xm = x0.clone();
                xm[[i, j]] -= h;
                let (tp, _, sp) = eval(&xp);
                let (tm, _, sm) = eval(&xm);
                let num = (tp.value(sp)[[0, 0]] - tm.value(sm)[[0, 0]]) / (2.0 * h);
                let a = analytic[[i, j]];
                assert!((a - num).abs() <= 1e-6 * (1.0 + a.abs()), "({i},{j}) {a} vs {num}");
            }
        }
    }

    fn x() -> Array2<f64> {
        array![[0.3, -1.2, 0.8], [1.5, 0.1, -0.4]]
    }

    #[test]
    fn unary_gradients() {
        check(x(), |t, a| t.gelu(a));
        check(x(), |t, a| t.softmax(a));
        check(x(), |t, a| {
            let g = t.constant(array![[1.2, 0.7, -0.3]]);
            let b = t.constant(array![[0.1, 0.2, 0.3]]);
            t.layer_norm(a, g, b)
        });
        check(x(), |t, a| t.gather(a, vec![5, 0, 0, 3], (2, 2)));
        check(x(), |t, a| t.row_gather(a, &[1, 1, 0]));
        check(x(), |t, a| {
            let l = t.slice_cols(a, 1, 2);
            let r = t.slice_cols(a, 0, 1);
            t.concat_cols(&[l, r])
        });
        check(x(), |t, a| t.cross_entropy(a, &[2, 0]));
        check(x(), |t, a| {
            let m = t.constant(array![[0.5, 1.0], [-1.0, 2.0], [0.3, 0.3]]);
            let p = t.matmul(a, m);
            let q = t.scale(p, -0.7);
            t.matmul_bt(p, q)
        });
        check(x(), |t, a| {
            let b = t.constant(array![[1.0, 2.0, 3.0]]);
            let y = t.add_row(a, b);
            let y = t.scale(y, 0.5);
            t.add(y, a)
        });
    }

    #[test]
    fn masked_softmax_rows() {
        let mut t = Tape::new();
        let a = t.constant(array![[1.0, 2.0], [3.0, 4.0]]);
        let m = t.add_const(a, &array![[0.0, f64::NEG_INFINITY], [0.0, 0.0]]);
        let y = t.softmax(m);
        assert_eq!(t.value(y)[[0, 0]], 1.0);
        assert_eq!(t.value(y)[[0, 1]], 0.0);
        assert!((t.value(y).row(1).sum() - 1.0).abs() < 1e-12);
    }
}
