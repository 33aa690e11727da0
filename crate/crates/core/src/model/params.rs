use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::config::{Block, ModelConfig};
use crate::error::{AmdetError, Result};
use crate::tensor::Mat;

const POS_STD: f64 = 0.02;

#[derive(Debug, Clone, Copy)]
enum Init {
    /// Uniform in ±√(1/fan_in).
    Uniform { fan_in: usize },
    Normal(f64),
    Const(f64),
}

/// Every learnable tensor, addressable by dotted name, in a fixed order.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    names: Vec<String>,
    tensors: Vec<Mat>,
    index: HashMap<String, usize>,
}

/// FNV-1a, used to derive one PRNG stream per parameter name.
fn name_hash(name: &str) -> u64 {
    name.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

fn layout(cfg: &ModelConfig) -> Vec<(String, usize, usize, Init)> {
    let mut out = Vec::new();
    let mut encoder = |prefix: &str, layers: usize, d: usize| {
        let hidden = cfg.mlp.hidden(d);
        for l in 0..layers {
            let p = format!("{prefix}.layers.{l}");
            for proj in ["q", "k", "v", "o"] {
                out.push((format!("{p}.attn.w{proj}"), d, d, Init::Uniform { fan_in: d }));
                out.push((format!("{p}.attn.b{proj}"), 1, d, Init::Uniform { fan_in: d }));
            }
            out.push((format!("{p}.ln1.gain"), 1, d, Init::Const(1.0)));
            out.push((format!("{p}.ln1.bias"), 1, d, Init::Const(0.0)));
            out.push((format!("{p}.mlp.w1"), d, hidden, Init::Uniform { fan_in: d }));
            out.push((format!("{p}.mlp.b1"), 1, hidden, Init::Uniform { fan_in: d }));
            out.push((format!("{p}.mlp.w2"), hidden, d, Init::Uniform { fan_in: hidden }));
            out.push((format!("{p}.mlp.b2"), 1, d, Init::Uniform { fan_in: hidden }));
            out.push((format!("{p}.ln2.gain"), 1, d, Init::Const(1.0)));
            out.push((format!("{p}.ln2.bias"), 1, d, Init::Const(0.0)));
        }
    };
    let (f2, c) = (cfg.features(), cfg.channels);
    let mut pre = Vec::new();
    if cfg.uses(Block::Spectral) {
        pre.push(("spectral.pos".to_string(), f2, c, Init::Normal(POS_STD)));
    }
    if cfg.uses(Block::Spatial) {
        pre.push(("spatial.pos".to_string(), c, f2, Init::Normal(POS_STD)));
    }
    if cfg.uses(Block::Spectral) {
        encoder("spectral", cfg.spectral_layers, c);
    }
    if cfg.uses(Block::Spatial) {
        encoder("spatial", cfg.spatial_layers, f2);
    }
    let flat = cfg.flat();
    if cfg.uses(Block::Temporal) {
        out.push(("temporal.w".into(), flat, 1, Init::Uniform { fan_in: flat }));
        out.push(("temporal.b".into(), 1, 1, Init::Uniform { fan_in: flat }));
    }
    out.push(("classifier.w".into(), flat, cfg.classes, Init::Uniform { fan_in: flat }));
    out.push(("classifier.b".into(), 1, cfg.classes, Init::Const(0.0)));
    pre.extend(out);
    pre
}

impl ModelParams {
    /// Seeded initialization; each tensor draws from its own name-derived stream.
    pub fn init(cfg: &ModelConfig) -> Result<Self> {
        cfg.validate()?;
        let mut names = Vec::new();
        let mut tensors = Vec::new();
        for (name, rows, cols, init) in layout(cfg) {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ name_hash(&name));
            let n = rows * cols;
            let data: Vec<f64> = match init {
                Init::Uniform { fan_in } => {
                    let bound = (1.0 / fan_in as f64).sqrt();
                    (0..n).map(|_| rng.random_range(-bound..bound)).collect()
                }
                Init::Normal(std) => {
                    let dist = Normal::new(0.0, std).expect("valid std");
                    (0..n).map(|_| dist.sample(&mut rng)).collect()
                }
                Init::Const(v) => vec![v; n],
            };
            names.push(name);
            tensors.push(Mat::from_vec(rows, cols, data));
        }
        Ok(Self::from_parts(names, tensors))
    }

    pub fn from_parts(names: Vec<String>, tensors: Vec<Mat>) -> Self {
        let index = names.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
        ModelParams {
            names,
            tensors,
            index,
        }
    }

    /// Expected `(name, rows, cols)` layout for a config.
    pub fn shapes(cfg: &ModelConfig) -> Vec<(String, usize, usize)> {
        layout(cfg).into_iter().map(|(n, r, c, _)| (n, r, c)).collect()
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Mat] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Mat] {
        &mut self.tensors
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn get(&self, name: &str) -> Result<&Mat> {
        self.position(name)
            .map(|i| &self.tensors[i])
            .ok_or_else(|| AmdetError::invalid("param", format!("no parameter named {name:?}")))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Mat> {
        match self.position(name) {
            Some(i) => Ok(&mut self.tensors[i]),
            None => Err(AmdetError::invalid("param", format!("no parameter named {name:?}"))),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Mat)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn count(&self) -> usize {
        self.tensors.iter().map(Mat::len).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(Mat::is_finite)
    }

    /// Rounds every value to the nearest `f32`, as a checkpoint would store it.
    pub fn quantize_f32(&mut self) {
        for t in &mut self.tensors {
            for v in &mut t.data {
                *v = f64::from(*v as f32);
            }
        }
    }

    /// Checks names and shapes against the layout of `cfg`.
    pub fn check_layout(&self, cfg: &ModelConfig) -> Result<()> {
        let expected = Self::shapes(cfg);
        if expected.len() != self.len() {
            return Err(AmdetError::shape("parameter count", expected.len(), self.len()));
        }
        for ((name, r, c), (have, t)) in expected.into_iter().zip(self.iter()) {
            if name != have || (r, c) != t.shape() {
                return Err(AmdetError::shape(format!("parameter {name}"), (r, c), (have, t.shape())));
            }
        }
        Ok(())
    }
}
