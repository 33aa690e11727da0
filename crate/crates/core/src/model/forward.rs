//! The forward computation, recorded on a [`Tape`] so every path is differentiable.

use super::config::{Block, ModelConfig};
use super::params::ModelParams;
use crate::engine::{Gradients, Tape, Var};
use crate::error::{AmdetError, Result};
use crate::signal::SampleTensor;
use crate::tensor::Mat;

/// A tape plus lazily-bound parameter leaves.
pub struct Graph<'p> {
    pub tape: Tape,
    params: &'p ModelParams,
    leaves: Vec<Option<Var>>,
}

/// Handles to the interesting intermediate nodes of one forward pass.
#[derive(Debug, Clone)]
pub struct Trace {
    pub logits: Var,
    /// Spectral-block output per frame, `2f × C`.
    pub spectral: Vec<Var>,
    /// Spatial-block output per frame, `C × 2f`.
    pub spatial: Vec<Var>,
    /// Temporal attention weights, `1 × frames`.
    pub temporal_weights: Var,
}

impl<'p> Graph<'p> {
    pub fn new(params: &'p ModelParams) -> Self {
        Graph {
            tape: Tape::new(),
            params,
            leaves: vec![None; params.len()],
        }
    }

    pub fn param(&mut self, name: &str) -> Result<Var> {
        let i = self
            .params
            .position(name)
            .ok_or_else(|| AmdetError::invalid("param", format!("no parameter named {name:?}")))?;
        if let Some(v) = self.leaves[i] {
            return Ok(v);
        }
        let v = self.tape.named_leaf(name, self.params.tensors()[i].clone());
        self.leaves[i] = Some(v);
        Ok(v)
    }

    pub fn value(&self, v: Var) -> &Mat {
        self.tape.value(v)
    }

    /// Gradient for every parameter, zeros where a parameter was unused.
    pub fn param_grads(&self, grads: &Gradients) -> Vec<Mat> {
        self.params
            .tensors()
            .iter()
            .zip(&self.leaves)
            .map(|(p, leaf)| match leaf.and_then(|v| grads.get(v)) {
                Some(g) => g.clone(),
                None => Mat::zeros(p.rows, p.cols),
            })
            .collect()
    }

    /// Multi-head scaled dot-product self-attention over the rows of `x`.
    pub fn mha(&mut self, prefix: &str, x: Var, heads: usize) -> Result<Var> {
        let d = self.value(x).cols;
        if heads == 0 || d % heads != 0 {
            return Err(AmdetError::invalid(
                format!("{prefix}.heads"),
                format!("token dim {d} not divisible by {heads} heads"),
            ));
        }
        if !self.value(x).is_finite() {
            return Err(AmdetError::non_finite(format!("{prefix} attention input")));
        }
        let dk = d / heads;
        let scale = 1.0 / (dk as f64).sqrt();
        let proj = |g: &mut Self, p: &str| -> Result<Var> {
            let w = g.param(&format!("{prefix}.w{p}"))?;
            let b = g.param(&format!("{prefix}.b{p}"))?;
            Ok(g.tape.linear(x, w, b))
        };
        let q = proj(self, "q")?;
        let k = proj(self, "k")?;
        let v = proj(self, "v")?;
        let mut outs = Vec::with_capacity(heads);
        for h in 0..heads {
            let (s, e) = (h * dk, (h + 1) * dk);
            let (qh, kh, vh) = if heads == 1 {
                (q, k, v)
            } else {
                (
                    self.tape.slice_cols(q, s, e),
                    self.tape.slice_cols(k, s, e),
                    self.tape.slice_cols(v, s, e),
                )
            };
            let scores = self.tape.matmul_t(qh, kh);
            let scaled = self.tape.scale(scores, scale);
            let attn = self.tape.softmax_rows(scaled);
            outs.push(self.tape.matmul(attn, vh));
        }
        let cat = if heads == 1 {
            outs[0]
        } else {
            self.tape.concat_cols(&outs)
        };
        let wo = self.param(&format!("{prefix}.wo"))?;
        let bo = self.param(&format!("{prefix}.bo"))?;
        Ok(self.tape.linear(cat, wo, bo))
    }

    /// Post-LN transformer encoder layer: `h = LN(MHA(z) + z)`, `out = LN(MLP(h) + h)`.
    pub fn encoder_layer(&mut self, prefix: &str, z: Var, heads: usize) -> Result<Var> {
        let attn = self.mha(&format!("{prefix}.attn"), z, heads)?;
        let res1 = self.tape.add(attn, z);
        let g1 = self.param(&format!("{prefix}.ln1.gain"))?;
        let b1 = self.param(&format!("{prefix}.ln1.bias"))?;
        let h = self.tape.layer_norm(res1, g1, b1);

        let w1 = self.param(&format!("{prefix}.mlp.w1"))?;
        let bb1 = self.param(&format!("{prefix}.mlp.b1"))?;
        let w2 = self.param(&format!("{prefix}.mlp.w2"))?;
        let bb2 = self.param(&format!("{prefix}.mlp.b2"))?;
        let hidden = self.tape.linear(h, w1, bb1);
        let act = self.tape.relu(hidden);
        let mlp = self.tape.linear(act, w2, bb2);
        let res2 = self.tape.add(mlp, h);
        let g2 = self.param(&format!("{prefix}.ln2.gain"))?;
        let b2 = self.param(&format!("{prefix}.ln2.bias"))?;
        Ok(self.tape.layer_norm(res2, g2, b2))
    }

    fn encoder_stack(&mut self, block: &str, x: Var, layers: usize, heads: usize) -> Result<Var> {
        let mut z = x;
        for l in 0..layers {
            z = self.encoder_layer(&format!("{block}.layers.{l}"), z, heads)?;
        }
        Ok(z)
    }

    /// Per frame: add the spectral positional encoding, then the shared encoder
    /// stack with the `2f` feature rows as tokens.
    pub fn spectral_block(&mut self, cfg: &ModelConfig, frames: &[Var]) -> Result<Vec<Var>> {
        if !cfg.uses(Block::Spectral) {
            return Ok(frames.to_vec());
        }
        let pos = self.param("spectral.pos")?;
        frames
            .iter()
            .map(|&x| {
                check_shape(self.value(x), (cfg.features(), cfg.channels), "spectral_block input")?;
                let z = self.tape.add(x, pos);
                self.encoder_stack("spectral", z, cfg.spectral_layers, cfg.spectral_heads)
            })
            .collect()
    }

    /// Per frame: transpose to `C × 2f`, add the spatial positional encoding,
    /// then the shared encoder stack with channels as tokens.
    pub fn spatial_block(&mut self, cfg: &ModelConfig, frames: &[Var]) -> Result<Vec<Var>> {
        let pos = if cfg.uses(Block::Spatial) {
            Some(self.param("spatial.pos")?)
        } else {
            None
        };
        frames
            .iter()
            .map(|&x| {
                check_shape(self.value(x), (cfg.features(), cfg.channels), "spatial_block input")?;
                let t = self.tape.transpose(x);
                match pos {
                    Some(pos) => {
                        let z = self.tape.add(t, pos);
                        self.encoder_stack("spatial", z, cfg.spatial_layers, cfg.spatial_heads)
                    }
                    None => Ok(t),
                }
            })
            .collect()
    }

    /// Scores each flattened frame, softmaxes over frames and returns
    /// `(weighted sum 1 × 2fC, weights 1 × frames)`.
    pub fn temporal_block(&mut self, cfg: &ModelConfig, frames: &[Var]) -> Result<(Var, Var)> {
        let flat = cfg.flat();
        let mut rows = Vec::with_capacity(frames.len());
        for &f in frames {
            check_shape(self.value(f), (cfg.channels, cfg.features()), "temporal_block input")?;
            rows.push(self.tape.reshape(f, 1, flat));
        }
        let z_ta = self.tape.concat_rows(&rows);
        let weights = if cfg.uses(Block::Temporal) {
            let w = self.param("temporal.w")?;
            let b = self.param("temporal.b")?;
            let scores = self.tape.linear(z_ta, w, b);
            let row = self.tape.transpose(scores);
            self.tape.softmax_rows(row)
        } else {
            let n = frames.len();
            self.tape.leaf(Mat::filled(1, n, 1.0 / n as f64))
        };
        let out = self.tape.matmul(weights, z_ta);
        Ok((out, weights))
    }

    pub fn classify(&mut self, o: Var) -> Result<Var> {
        let w = self.param("classifier.w")?;
        let b = self.param("classifier.b")?;
        Ok(self.tape.linear(o, w, b))
    }

    /// spectral → spatial → temporal → classifier for one sample.
    pub fn forward(&mut self, cfg: &ModelConfig, sample: &SampleTensor) -> Result<Trace> {
        let expected = [cfg.frames, cfg.features(), cfg.channels];
        if sample.shape() != expected {
            return Err(AmdetError::shape("sample", expected, sample.shape()));
        }
        if !sample.values.iter().all(|v| v.is_finite()) {
            return Err(AmdetError::non_finite("input sample"));
        }
        let inputs: Vec<Var> = (0..cfg.frames)
            .map(|t| {
                let m = Mat::from_vec(cfg.features(), cfg.channels, sample.frame(t).to_vec());
                self.tape.leaf(m)
            })
            .collect();
        let spectral = self.spectral_block(cfg, &inputs)?;
        let spatial = self.spatial_block(cfg, &spectral)?;
        let (pooled, temporal_weights) = self.temporal_block(cfg, &spatial)?;
        let logits = self.classify(pooled)?;
        Ok(Trace {
            logits,
            spectral,
            spatial,
            temporal_weights,
        })
    }
}

fn check_shape(m: &Mat, expected: (usize, usize), context: &str) -> Result<()> {
    if m.shape() != expected {
        return Err(AmdetError::shape(context, expected, m.shape()));
    }
    Ok(())
}
