use serde::{Deserialize, Serialize};

use crate::error::{AmdetError, Result};

/// Width of the encoder feed-forward hidden layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MlpWidth {
    /// `ratio × d` hidden units, `d` being the token dimension of the encoder.
    Ratio(usize),
    /// Fixed hidden width regardless of token dimension.
    Fixed(usize),
}

impl MlpWidth {
    pub fn hidden(&self, d: usize) -> usize {
        match *self {
            MlpWidth::Ratio(r) => r * d,
            MlpWidth::Fixed(h) => h,
        }
    }

    pub fn describe(&self) -> String {
        match *self {
            MlpWidth::Ratio(r) => format!("mlp_ratio={r}"),
            MlpWidth::Fixed(h) => format!("mlp_hidden={h} (fixed)"),
        }
    }
}

/// Attention block removed for ablation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Block {
    Spectral,
    Spatial,
    Temporal,
}

impl Block {
    pub const ALL: [Block; 3] = [Block::Spectral, Block::Spatial, Block::Temporal];

    pub fn name(&self) -> &'static str {
        match self {
            Block::Spectral => "spectral",
            Block::Spatial => "spatial",
            Block::Temporal => "temporal",
        }
    }
}

impl std::str::FromStr for Block {
    type Err = AmdetError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "spectral" => Ok(Block::Spectral),
            "spatial" => Ok(Block::Spatial),
            "temporal" => Ok(Block::Temporal),
            other => Err(AmdetError::invalid(
                "remove",
                format!("unknown block {other:?} (spectral|spatial|temporal)"),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub channels: usize,
    pub bands: usize,
    pub frames: usize,
    pub classes: usize,
    pub spectral_layers: usize,
    pub spatial_layers: usize,
    pub spectral_heads: usize,
    pub spatial_heads: usize,
    pub mlp: MlpWidth,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ablation: Option<Block>,
}

impl Default for ModelConfig {
    /// 62 channels, five bands, six frames, three classes.
    fn default() -> Self {
        ModelConfig {
            channels: 62,
            bands: 5,
            frames: 6,
            classes: 3,
            spectral_layers: 1,
            spatial_layers: 1,
            spectral_heads: 2,
            spatial_heads: 2,
            mlp: MlpWidth::Fixed(2048),
            seed: 0,
            ablation: None,
        }
    }
}

impl ModelConfig {
    /// `2f`, the length of the feature axis.
    pub fn features(&self) -> usize {
        2 * self.bands
    }

    /// `2f·C`, the length of a flattened frame.
    pub fn flat(&self) -> usize {
        self.features() * self.channels
    }

    pub fn uses(&self, block: Block) -> bool {
        self.ablation != Some(block)
    }

    pub fn validate(&self) -> Result<()> {
        let nonzero = [
            ("channels", self.channels),
            ("bands", self.bands),
            ("frames", self.frames),
            ("spectral_layers", self.spectral_layers),
            ("spatial_layers", self.spatial_layers),
            ("spectral_heads", self.spectral_heads),
            ("spatial_heads", self.spatial_heads),
        ];
        for (name, v) in nonzero {
            if v == 0 {
                return Err(AmdetError::invalid(format!("model.{name}"), "must be at least 1"));
            }
        }
        if self.classes < 2 {
            return Err(AmdetError::invalid("model.classes", "need at least two classes"));
        }
        if self.mlp.hidden(1) == 0 {
            return Err(AmdetError::invalid("model.mlp", "hidden width must be positive"));
        }
        if self.channels % self.spectral_heads != 0 {
            return Err(AmdetError::invalid(
                "model.spectral_heads",
                format!("{} channels not divisible by {} heads", self.channels, self.spectral_heads),
            ));
        }
        if self.features() % self.spatial_heads != 0 {
            return Err(AmdetError::invalid(
                "model.spatial_heads",
                format!("{} features not divisible by {} heads", self.features(), self.spatial_heads),
            ));
        }
        Ok(())
    }

    pub fn with_ablation(&self, block: Option<Block>) -> Self {
        ModelConfig {
            ablation: block,
            ..self.clone()
        }
    }
}
