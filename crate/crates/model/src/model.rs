//! Encoder/decoder solver: disentangled-attention encoder, decoder with
//! absolute positions injected before its last block.

use mwp_core::expr::{parse_equation, Equation};
use mwp_core::quantity::TaggedProblem;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attention::{attention_mask, cross_attention, disentangled_attention, CrossWeights, DisentangledWeights};
use crate::config::SolverConfig;
use crate::params::ParameterStore;
use crate::tape::{NodeId, Tape};
use crate::vocab::{Vocab, BOS_ID, EOS_ID};
use crate::ModelError;

#[derive(Debug, Clone, Copy)]
struct Norm {
    g: usize,
    b: usize,
}

#[derive(Debug, Clone, Copy)]
struct Ffn {
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
}

#[derive(Debug, Clone, Copy)]
struct SelfAttn {
    wcq: usize,
    wck: usize,
    wcv: usize,
    wrq: usize,
    wrk: usize,
    wo: usize,
}

#[derive(Debug, Clone, Copy)]
struct Cross {
    wq: usize,
    wk: usize,
    wv: usize,
    wo: usize,
}

#[derive(Debug, Clone)]
struct EncLayer {
    attn: SelfAttn,
    ln1: Norm,
    ffn: Ffn,
    ln2: Norm,
}

#[derive(Debug, Clone)]
struct DecLayer {
    attn: SelfAttn,
    ln1: Norm,
    cross: Cross,
    ln2: Norm,
    ffn: Ffn,
    ln3: Norm,
}

/// Parameter indices, resolved once from the names.
#[derive(Debug, Clone)]
struct Layout {
    content: usize,
    relative: usize,
    absolute: usize,
    enc_ln: Norm,
    dec_ln: Norm,
    enc: Vec<EncLayer>,
    dec: Vec<DecLayer>,
    out_w: usize,
    out_b: usize,
}

fn param_shapes(c: &SolverConfig) -> Vec<(String, (usize, usize))> {
    let (d, v) = (c.d, c.vocab.len());
    let mut s: Vec<(String, (usize, usize))> = vec![
        ("embed.content".into(), (v, d)),
        ("embed.relative".into(), (2 * c.max_rel, d)),
        ("embed.absolute".into(), (c.max_len, d)),
        ("enc.emb_ln.g".into(), (1, d)),
        ("enc.emb_ln.b".into(), (1, d)),
        ("dec.emb_ln.g".into(), (1, d)),
        ("dec.emb_ln.b".into(), (1, d)),
    ];
    let attn = |s: &mut Vec<(String, (usize, usize))>, p: &str| {
        for w in ["wcq", "wck", "wcv", "wrq", "wrk", "wo"] {
            s.push((format!("{p}.{w}"), (d, d)));
        }
    };
    let norm = |s: &mut Vec<(String, (usize, usize))>, p: &str| {
        s.push((format!("{p}.g"), (1, d)));
        s.push((format!("{p}.b"), (1, d)));
    };
    let ffn = |s: &mut Vec<(String, (usize, usize))>, p: &str| {
        s.push((format!("{p}.w1"), (d, c.d_ff)));
        s.push((format!("{p}.b1"), (1, c.d_ff)));
        s.push((format!("{p}.w2"), (c.d_ff, d)));
        s.push((format!("{p}.b2"), (1, d)));
    };
    for l in 0..c.n_enc {
        attn(&mut s, &format!("enc.{l}.attn"));
        norm(&mut s, &format!("enc.{l}.ln1"));
        ffn(&mut s, &format!("enc.{l}.ffn"));
        norm(&mut s, &format!("enc.{l}.ln2"));
    }
    for l in 0..c.n_dec {
        attn(&mut s, &format!("dec.{l}.attn"));
        norm(&mut s, &format!("dec.{l}.ln1"));
        for w in ["wq", "wk", "wv", "wo"] {
            s.push((format!("dec.{l}.cross.{w}"), (d, d)));
        }
        norm(&mut s, &format!("dec.{l}.ln2"));
        ffn(&mut s, &format!("dec.{l}.ffn"));
        norm(&mut s, &format!("dec.{l}.ln3"));
    }
    s.push(("out.w".into(), (d, v)));
    s.push(("out.b".into(), (1, v)));
    s
}

fn layout(c: &SolverConfig, p: &ParameterStore) -> Result<Layout, ModelError> {
    let id = |n: String| {
        p.id(&n)
            .ok_or_else(|| ModelError::Checkpoint(format!("missing parameter {n}")))
    };
    let norm = |n: String| -> Result<Norm, ModelError> {
        Ok(Norm {
            g: id(format!("{n}.g"))?,
            b: id(format!("{n}.b"))?,
        })
    };
    let ffn = |n: String| -> Result<Ffn, ModelError> {
        Ok(Ffn {
            w1: id(format!("{n}.w1"))?,
            b1: id(format!("{n}.b1"))?,
            w2: id(format!("{n}.w2"))?,
            b2: id(format!("{n}.b2"))?,
        })
    };
    let attn = |n: String| -> Result<SelfAttn, ModelError> {
        Ok(SelfAttn {
            wcq: id(format!("{n}.wcq"))?,
            wck: id(format!("{n}.wck"))?,
            wcv: id(format!("{n}.wcv"))?,
            wrq: id(format!("{n}.wrq"))?,
            wrk: id(format!("{n}.wrk"))?,
            wo: id(format!("{n}.wo"))?,
        })
    };
    let enc = (0..c.n_enc)
        .map(|l| {
            Ok(EncLayer {
                attn: attn(format!("enc.{l}.attn"))?,
                ln1: norm(format!("enc.{l}.ln1"))?,
                ffn: ffn(format!("enc.{l}.ffn"))?,
                ln2: norm(format!("enc.{l}.ln2"))?,
            })
        })
        .collect::<Result<_, ModelError>>()?;
    let dec = (0..c.n_dec)
        .map(|l| {
            Ok(DecLayer {
                attn: attn(format!("dec.{l}.attn"))?,
                ln1: norm(format!("dec.{l}.ln1"))?,
                cross: Cross {
                    wq: id(format!("dec.{l}.cross.wq"))?,
                    wk: id(format!("dec.{l}.cross.wk"))?,
                    wv: id(format!("dec.{l}.cross.wv"))?,
                    wo: id(format!("dec.{l}.cross.wo"))?,
                },
                ln2: norm(format!("dec.{l}.ln2"))?,
                ffn: ffn(format!("dec.{l}.ffn"))?,
                ln3: norm(format!("dec.{l}.ln3"))?,
            })
        })
        .collect::<Result<_, ModelError>>()?;
    Ok(Layout {
        content: id("embed.content".into())?,
        relative: id("embed.relative".into())?,
        absolute: id("embed.absolute".into())?,
        enc_ln: norm("enc.emb_ln".into())?,
        dec_ln: norm("dec.emb_ln".into())?,
        enc,
        dec,
        out_w: id("out.w".into())?,
        out_b: id("out.b".into())?,
    })
}

/// A decoded equation; `equation` is `None` when the text does not parse.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub text: String,
    #[serde(skip)]
    pub equation: Option<Equation>,
    pub malformed: bool,
}

impl Prediction {
    pub fn from_text(text: String) -> Self {
        let equation = parse_equation(&text).ok();
        Prediction {
            malformed: equation.is_none(),
            text,
            equation,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolverModel {
    pub config: SolverConfig,
    pub vocab: Vocab,
    pub params: ParameterStore,
    layout: Layout,
}

impl SolverModel {
    /// Fresh model: matrices uniform in `±sqrt(6/(fan_in+fan_out))`, layer
    /// norms at gain 1 and bias 0, biases 0.
    pub fn new(config: SolverConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParameterStore::new();
        for (name, (r, c)) in param_shapes(&config) {
            if name.ends_with(".g") {
                params.add(&name, Array2::ones((r, c)));
            } else if r == 1 {
                params.add(&name, Array2::zeros((r, c)));
            } else {
                params.add_uniform(&name, r, c, &mut rng);
            }
        }
        Self::from_parts(config, params)
    }

    /// Checks the parameter set against the configuration.
    pub fn from_parts(config: SolverConfig, params: ParameterStore) -> Result<Self, ModelError> {
        config.validate()?;
        for (name, shape) in param_shapes(&config) {
            match params.get(&name) {
                Some(v) if v.dim() == shape => {}
                Some(v) => {
                    return Err(ModelError::Checkpoint(format!(
                        "parameter {name} has shape {:?}, expected {shape:?}",
                        v.dim()
                    )))
                }
                None => return Err(ModelError::Checkpoint(format!("missing parameter {name}"))),
            }
        }
        let layout = layout(&config, &params)?;
        Ok(SolverModel {
            vocab: Vocab::from_tokens(config.vocab.clone()),
            config,
            params,
            layout,
        })
    }

    fn check_ids(&self, ids: &[usize]) -> Result<(), ModelError> {
        if ids.is_empty() {
            return Err(ModelError::EmptySequence);
        }
        if ids.len() > self.config.max_len {
            return Err(ModelError::TooLong {
                len: ids.len(),
                max: self.config.max_len,
            });
        }
        match ids.iter().find(|&&i| i >= self.vocab.len()) {
            Some(&i) => Err(ModelError::TokenOutOfRange(i)),
            None => Ok(()),
        }
    }

    fn dropout(&self, tape: &mut Tape, x: NodeId, rng: &mut Option<&mut ChaCha8Rng>) -> NodeId {
        let p = self.config.dropout;
        match rng {
            Some(r) if p > 0.0 => {
                let keep = 1.0 / (1.0 - p);
                let mask = Array2::from_shape_simple_fn(tape.value(x).raw_dim(), || {
                    if r.random::<f64>() < p {
                        0.0
                    } else {
                        keep
                    }
                });
                tape.mul_const(x, mask)
            }
            _ => x,
        }
    }

    fn norm(&self, tape: &mut Tape, x: NodeId, n: Norm) -> NodeId {
        let g = tape.param(&self.params, n.g);
        let b = tape.param(&self.params, n.b);
        tape.layer_norm(x, g, b)
    }

    fn ffn(&self, tape: &mut Tape, x: NodeId, f: Ffn) -> NodeId {
        let w1 = tape.param(&self.params, f.w1);
        let b1 = tape.param(&self.params, f.b1);
        let w2 = tape.param(&self.params, f.w2);
        let b2 = tape.param(&self.params, f.b2);
        let hdn = tape.matmul(x, w1);
        let hdn = tape.add_row(hdn, b1);
        let hdn = tape.gelu(hdn);
        let o = tape.matmul(hdn, w2);
        tape.add_row(o, b2)
    }

    fn self_attn(&self, tape: &mut Tape, x: NodeId, a: SelfAttn, causal: bool) -> NodeId {
        let p = tape.param(&self.params, self.layout.relative);
        let w = DisentangledWeights {
            wcq: tape.param(&self.params, a.wcq),
            wck: tape.param(&self.params, a.wck),
            wcv: tape.param(&self.params, a.wcv),
            wrq: tape.param(&self.params, a.wrq),
            wrk: tape.param(&self.params, a.wrk),
            wo: tape.param(&self.params, a.wo),
        };
        let n = tape.value(x).nrows();
        let mask = attention_mask(n, causal);
        disentangled_attention(tape, x, p, &w, &mask, self.config.h, self.config.max_rel).output
    }

    /// Encoder states on the tape; dropout is active when `rng` is given.
    pub fn encode(
        &self,
        tape: &mut Tape,
        src: &[usize],
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> Result<NodeId, ModelError> {
        self.check_ids(src)?;
        let table = tape.param(&self.params, self.layout.content);
        let x = tape.row_gather(table, src);
        let x = self.norm(tape, x, self.layout.enc_ln);
        let mut x = self.dropout(tape, x, &mut rng);
        for layer in &self.layout.enc {
            let a = self.self_attn(tape, x, layer.attn, false);
            let a = self.dropout(tape, a, &mut rng);
            let s = tape.add(x, a);
            x = self.norm(tape, s, layer.ln1);
            let f = self.ffn(tape, x, layer.ffn);
            let f = self.dropout(tape, f, &mut rng);
            let s = tape.add(x, f);
            x = self.norm(tape, s, layer.ln2);
        }
        Ok(x)
    }

    /// Next-token logits at every prefix position.
    pub fn decode(
        &self,
        tape: &mut Tape,
        memory: NodeId,
        prefix: &[usize],
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> Result<NodeId, ModelError> {
        self.check_ids(prefix)?;
        let table = tape.param(&self.params, self.layout.content);
        let x = tape.row_gather(table, prefix);
        let x = self.norm(tape, x, self.layout.dec_ln);
        let mut x = self.dropout(tape, x, &mut rng);
        let last = self.layout.dec.len() - 1;
        for (l, layer) in self.layout.dec.iter().enumerate() {
            if l == last {
                // absolute positions enter only the final block
                let abs = tape.param(&self.params, self.layout.absolute);
                let positions: Vec<usize> = (0..prefix.len()).collect();
                let pos = tape.row_gather(abs, &positions);
                x = tape.add(x, pos);
            }
            let a = self.self_attn(tape, x, layer.attn, true);
            let a = self.dropout(tape, a, &mut rng);
            let s = tape.add(x, a);
            x = self.norm(tape, s, layer.ln1);
            let w = CrossWeights {
                wq: tape.param(&self.params, layer.cross.wq),
                wk: tape.param(&self.params, layer.cross.wk),
                wv: tape.param(&self.params, layer.cross.wv),
                wo: tape.param(&self.params, layer.cross.wo),
            };
            let c = cross_attention(tape, x, memory, &w, self.config.h).output;
            let c = self.dropout(tape, c, &mut rng);
            let s = tape.add(x, c);
            x = self.norm(tape, s, layer.ln2);
            let f = self.ffn(tape, x, layer.ffn);
            let f = self.dropout(tape, f, &mut rng);
            let s = tape.add(x, f);
            x = self.norm(tape, s, layer.ln3);
        }
        let w = tape.param(&self.params, self.layout.out_w);
        let b = tape.param(&self.params, self.layout.out_b);
        let logits = tape.matmul(x, w);
        Ok(tape.add_row(logits, b))
    }

    /// Teacher-forced mean NLL of `tgt[1..]` given `tgt[..len-1]`.
    pub fn loss(
        &self,
        tape: &mut Tape,
        src: &[usize],
        tgt: &[usize],
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> Result<NodeId, ModelError> {
        if tgt.len() < 2 {
            return Err(ModelError::EmptySequence);
        }
        let memory = self.encode(tape, src, rng.as_deref_mut())?;
        let logits = self.decode(tape, memory, &tgt[..tgt.len() - 1], rng)?;
        Ok(tape.cross_entropy(logits, &tgt[1..]))
    }

    /// Contextual states `(len × d)`, no dropout.
    pub fn encoder_forward(&self, tokens: &[usize]) -> Result<Array2<f64>, ModelError> {
        let mut tape = Tape::new();
        let x = self.encode(&mut tape, tokens, None)?;
        Ok(tape.value(x).clone())
    }

    /// Next-token distributions `(prefix len × vocab)`; the last row is the
    /// distribution for the token after the prefix.
    pub fn emd_decode(&self, encoder_states: &Array2<f64>, prefix: &[usize]) -> Result<Array2<f64>, ModelError> {
        if prefix.first() != Some(&BOS_ID) {
            return Err(ModelError::MissingStart);
        }
        if encoder_states.ncols() != self.config.d {
            return Err(ModelError::Shape(format!(
                "encoder states have {} columns, expected {}",
                encoder_states.ncols(),
                self.config.d
            )));
        }
        let mut tape = Tape::new();
        let mem = tape.constant(encoder_states.clone());
        let logits = self.decode(&mut tape, mem, prefix, None)?;
        let probs = tape.softmax(logits);
        Ok(tape.value(probs).clone())
    }

    /// Argmax decoding from `<s>` until `</s>` or `max_len` tokens.
    pub fn greedy_decode_ids(&self, src: &[usize]) -> Result<Vec<usize>, ModelError> {
        let memory = self.encoder_forward(src)?;
        let mut prefix = vec![BOS_ID];
        while prefix.len() < self.config.max_len {
            let probs = self.emd_decode(&memory, &prefix)?;
            let row = probs.row(probs.nrows() - 1);
            let mut best = 0;
            for (i, &p) in row.iter().enumerate() {
                if p > row[best] {
                    best = i;
                }
            }
            prefix.push(best);
            if best == EOS_ID {
                break;
            }
        }
        Ok(prefix[1..].to_vec())
    }

    /// Source ids for a tagged text, keeping the last `max_len` tokens.
    pub fn encode_source(&self, tagged_text: &str) -> Vec<usize> {
        let ids = self.vocab.encode_text(tagged_text);
        let skip = ids.len().saturating_sub(self.config.max_len);
        ids[skip..].to_vec()
    }

    /// Decodes an equation for a tagged problem. Never fails: problems the
    /// model cannot read give a malformed prediction.
    pub fn greedy_decode(&self, problem: &TaggedProblem) -> Prediction {
        let src = self.encode_source(&problem.tagged_text);
        match self.greedy_decode_ids(&src) {
            Ok(ids) => Prediction::from_text(self.vocab.decode_equation(&ids)),
            Err(_) => Prediction::from_text(String::new()),
        }
    }
}
