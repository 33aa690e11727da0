//! Plain-loop reference implementations, independent of the tape.
#![allow(dead_code)]

use amdet::model::{Amdet, Block, ModelConfig, ModelParams};
use amdet::signal::{SampleMeta, SampleTensor};
use amdet::tensor::Mat;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Rows = Vec<Vec<f64>>;

pub fn rows_of(m: &Mat) -> Rows {
    (0..m.rows).map(|r| m.row(r).to_vec()).collect()
}

pub fn max_abs(a: &Rows, b: &Rows) -> f64 {
    a.iter()
        .flatten()
        .zip(b.iter().flatten())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn p<'a>(params: &'a ModelParams, name: &str) -> &'a Mat {
    params.get(name).unwrap()
}

/// x · W + b with explicit triple loops.
pub fn affine(x: &Rows, w: &Mat, b: &Mat) -> Rows {
    x.iter()
        .map(|row| {
            (0..w.cols)
                .map(|j| {
                    let mut acc = b.get(0, j);
                    for (k, &xk) in row.iter().enumerate() {
                        acc += xk * w.get(k, j);
                    }
                    acc
                })
                .collect()
        })
        .collect()
}

/// Attention weight matrices per head plus the projected output.
pub fn mha_naive(x: &Rows, params: &ModelParams, prefix: &str, heads: usize) -> (Rows, Vec<Rows>) {
    let d = x[0].len();
    let dk = d / heads;
    let q = affine(x, p(params, &format!("{prefix}.wq")), p(params, &format!("{prefix}.bq")));
    let k = affine(x, p(params, &format!("{prefix}.wk")), p(params, &format!("{prefix}.bk")));
    let v = affine(x, p(params, &format!("{prefix}.wv")), p(params, &format!("{prefix}.bv")));
    let n = x.len();
    let mut concat = vec![vec![0.0; d]; n];
    let mut all_weights = Vec::new();
    for h in 0..heads {
        let mut weights = vec![vec![0.0; n]; n];
        for i in 0..n {
            let mut scores = vec![0.0; n];
            for j in 0..n {
                let mut s = 0.0;
                for c in h * dk..(h + 1) * dk {
                    s += q[i][c] * k[j][c];
                }
                scores[j] = s / (dk as f64).sqrt();
            }
            let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
            let z: f64 = e.iter().sum();
            for j in 0..n {
                weights[i][j] = e[j] / z;
            }
            for c in h * dk..(h + 1) * dk {
                concat[i][c] = (0..n).map(|j| weights[i][j] * v[j][c]).sum();
            }
        }
        all_weights.push(weights);
    }
    let out = affine(&concat, p(params, &format!("{prefix}.wo")), p(params, &format!("{prefix}.bo")));
    (out, all_weights)
}

pub fn layer_norm_naive(x: &Rows, gain: &Mat, bias: &Mat) -> Rows {
    x.iter()
        .map(|row| {
            let n = row.len() as f64;
            let mean = row.iter().sum::<f64>() / n;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            let s = (var + amdet::engine::LN_EPS).sqrt();
            row.iter()
                .enumerate()
                .map(|(j, v)| (v - mean) / s * gain.get(0, j) + bias.get(0, j))
                .collect()
        })
        .collect()
}

fn add(a: &Rows, b: &Rows) -> Rows {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.iter().zip(y).map(|(u, v)| u + v).collect())
        .collect()
}

pub fn encoder_naive(x: &Rows, params: &ModelParams, prefix: &str, heads: usize) -> Rows {
    let (attn, _) = mha_naive(x, params, &format!("{prefix}.attn"), heads);
    let h = layer_norm_naive(
        &add(&attn, x),
        p(params, &format!("{prefix}.ln1.gain")),
        p(params, &format!("{prefix}.ln1.bias")),
    );
    let hidden: Rows = affine(&h, p(params, &format!("{prefix}.mlp.w1")), p(params, &format!("{prefix}.mlp.b1")))
        .into_iter()
        .map(|r| r.into_iter().map(|v| v.max(0.0)).collect())
        .collect();
    let mlp = affine(&hidden, p(params, &format!("{prefix}.mlp.w2")), p(params, &format!("{prefix}.mlp.b2")));
    layer_norm_naive(
        &add(&mlp, &h),
        p(params, &format!("{prefix}.ln2.gain")),
        p(params, &format!("{prefix}.ln2.bias")),
    )
}

fn transpose(x: &Rows) -> Rows {
    (0..x[0].len()).map(|j| x.iter().map(|r| r[j]).collect()).collect()
}

/// Hand-chained forward: spectral → spatial → temporal → classifier.
pub fn forward_naive(cfg: &ModelConfig, params: &ModelParams, sample: &SampleTensor) -> Vec<f64> {
    let (f2, c) = (cfg.features(), cfg.channels);
    let mut flat_frames = Vec::new();
    for t in 0..cfg.frames {
        let mut z: Rows = (0..f2)
            .map(|r| (0..c).map(|ch| sample.get(t, r, ch)).collect())
            .collect();
        if cfg.ablation != Some(Block::Spectral) {
            let pos = rows_of(p(params, "spectral.pos"));
            z = add(&z, &pos);
            for l in 0..cfg.spectral_layers {
                z = encoder_naive(&z, params, &format!("spectral.layers.{l}"), cfg.spectral_heads);
            }
        }
        let mut s = transpose(&z);
        if cfg.ablation != Some(Block::Spatial) {
            s = add(&s, &rows_of(p(params, "spatial.pos")));
            for l in 0..cfg.spatial_layers {
                s = encoder_naive(&s, params, &format!("spatial.layers.{l}"), cfg.spatial_heads);
            }
        }
        flat_frames.push(s.into_iter().flatten().collect::<Vec<f64>>());
    }
    let weights: Vec<f64> = if cfg.ablation == Some(Block::Temporal) {
        vec![1.0 / cfg.frames as f64; cfg.frames]
    } else {
        let w = p(params, "temporal.w");
        let b = p(params, "temporal.b").get(0, 0);
        let scores: Vec<f64> = flat_frames
            .iter()
            .map(|f| f.iter().enumerate().map(|(i, v)| v * w.get(i, 0)).sum::<f64>() + b)
            .collect();
        let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
        let z: f64 = e.iter().sum();
        e.iter().map(|v| v / z).collect()
    };
    let pooled: Vec<f64> = (0..cfg.flat())
        .map(|i| (0..cfg.frames).map(|t| weights[t] * flat_frames[t][i]).sum())
        .collect();
    affine(&vec![pooled], p(params, "classifier.w"), p(params, "classifier.b")).remove(0)
}

pub fn random_sample(cfg: &ModelConfig, seed: u64, label: usize) -> SampleTensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = SampleTensor::zeros(
        cfg.frames,
        cfg.features(),
        cfg.channels,
        label,
        SampleMeta {
            subject: None,
            trial: seed as usize,
            segment: 0,
        },
    );
    for v in &mut s.values {
        *v = rng.random_range(-1.5..1.5);
    }
    s
}

/// Randomizes every parameter so LN gains/biases and zero-initialized tensors
/// are exercised too.
pub fn jitter_params(params: &mut ModelParams, seed: u64, scale: f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for t in params.tensors_mut() {
        for v in &mut t.data {
            *v += rng.random_range(-scale..scale);
        }
    }
}

/// Relative error with a 1e-6 magnitude floor in the denominator.
pub fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

/// Which ReLU units are active across the batch; a central difference is only
/// meaningful when both probes see the same pattern.
pub fn relu_pattern(model: &Amdet, batch: &[&SampleTensor]) -> Vec<bool> {
    let mut out = Vec::new();
    for s in batch {
        let mut g = model.graph();
        g.forward(&model.config, s).unwrap();
        for v in g.tape.vars_of_kind("relu") {
            out.extend(g.value(v).data.iter().map(|&a| a > 0.0));
        }
    }
    out
}
