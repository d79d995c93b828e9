//! Disentangled self-attention and plain cross-attention on the tape.

use ndarray::Array2;

use crate::tape::{NodeId, Tape};

/// Clipped relative distance of query `i` to key `j`, in `[0, 2·max_rel)`.
pub fn relative_bucket(i: usize, j: usize, max_rel: usize) -> usize {
    let k = max_rel as i64;
    let d = i as i64 - j as i64;
    if d <= -k {
        0
    } else if d >= k {
        (2 * k - 1) as usize
    } else {
        (d + k) as usize
    }
}

/// Additive mask: `-inf` above the diagonal when `causal`, zeros otherwise.
pub fn attention_mask(n: usize, causal: bool) -> Array2<f64> {
    Array2::from_shape_fn((n, n), |(i, j)| if causal && j > i { f64::NEG_INFINITY } else { 0.0 })
}

/// Projection weights of one disentangled attention layer, as tape nodes.
#[derive(Debug, Clone, Copy)]
pub struct DisentangledWeights {
    pub wcq: NodeId,
    pub wck: NodeId,
    pub wcv: NodeId,
    pub wrq: NodeId,
    pub wrk: NodeId,
    pub wo: NodeId,
}

#[derive(Debug, Clone, Copy)]
pub struct CrossWeights {
    pub wq: NodeId,
    pub wk: NodeId,
    pub wv: NodeId,
    pub wo: NodeId,
}

/// Output node and the per-head attention probability nodes.
pub struct AttentionOutput {
    pub output: NodeId,
    pub probs: Vec<NodeId>,
}

/// Multi-head attention with content-to-content, content-to-position and
/// position-to-content scores over the relative table `p` (`2·max_rel × d`).
///
/// Per head, `score[i][j] = qc_i·kc_j + qc_i·kr_δ(i,j) + kc_j·qr_δ(j,i)`,
/// scaled by `1/sqrt(3·d_head)`, masked, softmaxed, applied to `vc`; the
/// heads are concatenated and projected by `wo`.
pub fn disentangled_attention(
    tape: &mut Tape,
    h: NodeId,
    p: NodeId,
    w: &DisentangledWeights,
    mask: &Array2<f64>,
    heads: usize,
    max_rel: usize,
) -> AttentionOutput {
    let n = tape.value(h).nrows();
    let d = tape.value(h).ncols();
    let dh = d / heads;
    let qc = tape.matmul(h, w.wcq);
    let kc = tape.matmul(h, w.wck);
    let vc = tape.matmul(h, w.wcv);
    let qr = tape.matmul(p, w.wrq);
    let kr = tape.matmul(p, w.wrk);
    let buckets = 2 * max_rel;
    // flat indices into the (n × 2·max_rel) score tables
    let c2p_idx: Vec<usize> = (0..n * n)
        .map(|k| {
            let (i, j) = (k / n, k % n);
            i * buckets + relative_bucket(i, j, max_rel)
        })
        .collect();
    let p2c_idx: Vec<usize> = (0..n * n)
        .map(|k| {
            let (i, j) = (k / n, k % n);
            j * buckets + relative_bucket(j, i, max_rel)
        })
        .collect();
    let scale = 1.0 / ((3 * dh) as f64).sqrt();
    let mut outs = Vec::with_capacity(heads);
    let mut probs = Vec::with_capacity(heads);
    for head in 0..heads {
        let at = head * dh;
        let qc_h = tape.slice_cols(qc, at, dh);
        let kc_h = tape.slice_cols(kc, at, dh);
        let vc_h = tape.slice_cols(vc, at, dh);
        let qr_h = tape.slice_cols(qr, at, dh);
        let kr_h = tape.slice_cols(kr, at, dh);
        let c2c = tape.matmul_bt(qc_h, kc_h);
        let c2p_full = tape.matmul_bt(qc_h, kr_h);
        let c2p = tape.gather(c2p_full, c2p_idx.clone(), (n, n));
        let p2c_full = tape.matmul_bt(kc_h, qr_h);
        let p2c = tape.gather(p2c_full, p2c_idx.clone(), (n, n));
        let s = tape.add(c2c, c2p);
        let s = tape.add(s, p2c);
        let s = tape.scale(s, scale);
        let s = tape.add_const(s, mask);
        let a = tape.softmax(s);
        probs.push(a);
        outs.push(tape.matmul(a, vc_h));
    }
    let cat = tape.concat_cols(&outs);
    AttentionOutput {
        output: tape.matmul(cat, w.wo),
        probs,
    }
}

/// Standard multi-head attention of queries `x` over memory `mem`, scaled by
/// `1/sqrt(d_head)`, no mask.
pub fn cross_attention(tape: &mut Tape, x: NodeId, mem: NodeId, w: &CrossWeights, heads: usize) -> AttentionOutput {
    let d = tape.value(x).ncols();
    let dh = d / heads;
    let q = tape.matmul(x, w.wq);
    let k = tape.matmul(mem, w.wk);
    let v = tape.matmul(mem, w.wv);
    let scale = 1.0 / (dh as f64).sqrt();
    let mut outs = Vec::with_capacity(heads);
    let mut probs = Vec::with_capacity(heads);
    for head in 0..heads {
        let at = head * dh;
        let qh = tape.slice_cols(q, at, dh);
        let kh = tape.slice_cols(k, at, dh);
        let vh = tape.slice_cols(v, at, dh);
        let s = tape.matmul_bt(qh, kh);
        let s = tape.scale(s, scale);
        let a = tape.softmax(s);
        probs.push(a);
        outs.push(tape.matmul(a, vh));
    }
    let cat = tape.concat_cols(&outs);
    AttentionOutput {
        output: tape.matmul(cat, w.wo),
        probs,
    }
}

/// Plain-array weights for running one attention layer outside a model.
#[derive(Debug, Clone)]
pub struct DisentangledParams {
    pub wcq: Array2<f64>,
    pub wck: Array2<f64>,
    pub wcv: Array2<f64>,
    pub wrq: Array2<f64>,
    pub wrk: Array2<f64>,
    pub wo: Array2<f64>,
}

/// Forward pass on plain arrays: returns the output and the per-head
/// attention probabilities.
pub fn disentangled_attention_forward(
    h: &Array2<f64>,
    p: &Array2<f64>,
    w: &DisentangledParams,
    mask: &Array2<f64>,
    heads: usize,
    max_rel: usize,
) -> (Array2<f64>, Vec<Array2<f64>>) {
    let mut tape = Tape::new();
    let hn = tape.constant(h.clone());
    let pn = tape.constant(p.clone());
    let nodes = DisentangledWeights {
        wcq: tape.constant(w.wcq.clone()),
        wck: tape.constant(w.wck.clone()),
        wcv: tape.constant(w.wcv.clone()),
        wrq: tape.constant(w.wrq.clone()),
        wrk: tape.constant(w.wrk.clone()),
        wo: tape.constant(w.wo.clone()),
    };
    let out = disentangled_attention(&mut tape, hn, pn, &nodes, mask, heads, max_rel);
    let probs = out.probs.iter().map(|&a| tape.value(a).clone()).collect();
    (tape.value(out.output).clone(), probs)
}
