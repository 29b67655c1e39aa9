//! Built-in architecture and experiment presets.
//!
//! The zoo carries one fully reconstructed architecture (`pirnateco`, a
//! ResNet18-style stack adapted to 16-antenna, 924-subcarrier channel
//! snapshots) plus published metadata rows for the localization models it is
//! compared against: weight counts, forward FLOPs, training energy, carbon
//! mass, and per-category epoch counts where known.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arch::{Activation, KernelGeometry, LayerSpec, ModelGraph, PoolKind, TensorShape};
use crate::energy::TrainingConfig;

/// Samples in the training split shared by all presets.
pub const TRAINING_SAMPLES: u64 = 15_723;

/// Batch size shared by all presets.
pub const BATCH_SIZE: u32 = 32;

/// Evaluation category of a training run, or the cross-category mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Random,
    Narrow,
    Wide,
    Within,
    /// Pseudo-category: arithmetic mean of the four epoch counts.
    Mean,
}

impl Category {
    pub const ALL: [Category; 4] =
        [Category::Random, Category::Narrow, Category::Wide, Category::Within];
}

impl std::str::FromStr for Category {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "random" => Ok(Category::Random),
            "narrow" => Ok(Category::Narrow),
            "wide" => Ok(Category::Wide),
            "within" => Ok(Category::Within),
            "mean" => Ok(Category::Mean),
            other => Err(format!("unknown category '{other}'")),
        }
    }
}

/// Epochs used per evaluation category.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryEpochs {
    pub random: u32,
    pub narrow: u32,
    pub wide: u32,
    pub within: u32,
}

impl CategoryEpochs {
    pub fn get(&self, category: Category) -> f64 {
        match category {
            Category::Random => self.random as f64,
            Category::Narrow => self.narrow as f64,
            Category::Wide => self.wide as f64,
            Category::Within => self.within as f64,
            Category::Mean => self.mean(),
        }
    }

    pub fn mean(&self) -> f64 {
        (self.random + self.narrow + self.wide + self.within) as f64 / 4.0
    }
}

/// One zoo entry: a reconstructed graph, published metadata, or both.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZooEntry {
    pub name: String,
    pub graph: Option<ModelGraph>,
    pub published_weights: Option<u64>,
    pub published_flops: Option<u64>,
    pub published_energy_kj: Option<f64>,
    pub published_carbon_g: Option<f64>,
    pub epochs_by_category: Option<CategoryEpochs>,
}

impl ZooEntry {
    fn metadata(name: &str, weights: u64) -> Self {
        Self {
            name: name.to_string(),
            graph: None,
            published_weights: Some(weights),
            published_flops: None,
            published_energy_kj: None,
            published_carbon_g: None,
            epochs_by_category: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ZooError {
    #[error("unknown model '{name}'")]
    UnknownModel { name: String },
}

/// The reconstructed `pirnateco` stack: a 1x7/1x3 strided stem over the
/// subcarriers of each antenna, a 1x4 max pool, four two-block residual
/// stages at widths 32/64/128/256 with downsampling at stage entry, and a
/// 1000-unit leaky-ReLU head.
fn pirnateco_graph() -> ModelGraph {
    let layers = vec![
        LayerSpec::Input { shape: TensorShape::new(16, 924, 2) },
        LayerSpec::Conv2D {
            filters: 32,
            geom: KernelGeometry::new(1, 7, 1, 3),
            activation: Activation::Relu,
            bias: true,
        },
        LayerSpec::BatchNorm,
        LayerSpec::Pool { kind: PoolKind::Max, geom: KernelGeometry::new(1, 4, 1, 4) },
        LayerSpec::ResBlock { filters: 32, downsample: false },
        LayerSpec::ResBlock { filters: 32, downsample: false },
        LayerSpec::ResBlock { filters: 64, downsample: true },
        LayerSpec::ResBlock { filters: 64, downsample: false },
        LayerSpec::ResBlock { filters: 128, downsample: true },
        LayerSpec::ResBlock { filters: 128, downsample: false },
        LayerSpec::ResBlock { filters: 256, downsample: true },
        LayerSpec::ResBlock { filters: 256, downsample: false },
        LayerSpec::GlobalAvgPool,
        LayerSpec::Flatten,
        LayerSpec::Dense {
            units: 1000,
            activation: Activation::LeakyRelu { alpha: Activation::DEFAULT_ALPHA },
            bias: true,
        },
        LayerSpec::Dense { units: 3, activation: Activation::None, bias: true },
    ];
    ModelGraph::new("pirnateco", layers).expect("preset graph is valid")
}

fn entries() -> Vec<ZooEntry> {
    vec![
        ZooEntry {
            name: "pirnateco".into(),
            graph: Some(pirnateco_graph()),
            published_weights: Some(3_100_000),
            published_flops: Some(345_000_000),
            published_energy_kj: Some(152.0),
            published_carbon_g: Some(10.6),
            epochs_by_category: Some(CategoryEpochs {
                random: 85,
                narrow: 15,
                wide: 15,
                within: 20,
            }),
        },
        ZooEntry {
            name: "chin-cnn".into(),
            graph: None,
            published_weights: Some(13_700_000),
            published_flops: Some(535_000_000),
            published_energy_kj: Some(264.0),
            published_carbon_g: Some(18.3),
            epochs_by_category: Some(CategoryEpochs {
                random: 67,
                narrow: 30,
                wide: 23,
                within: 31,
            }),
        },
        ZooEntry {
            name: "cerar-cnn4r".into(),
            graph: None,
            published_weights: Some(10_800_000),
            published_flops: Some(2_479_000_000),
            published_energy_kj: Some(2547.0),
            published_carbon_g: Some(176.9),
            epochs_by_category: Some(CategoryEpochs {
                random: 181,
                narrow: 32,
                wide: 34,
                within: 68,
            }),
        },
        ZooEntry::metadata("arnold-fcnn", 32_300_000),
        ZooEntry::metadata("arnold-cnn", 7_600_000),
        ZooEntry::metadata("debast-cnn", 400_000),
        ZooEntry::metadata("chin-fcnn", 123_600_000),
        ZooEntry::metadata("cerar-cnn4", 5_300_000),
        ZooEntry::metadata("cerar-cnn4s", 16_300_000),
    ]
}

/// Looks up a preset by name.
pub fn get_model(name: &str) -> Result<ZooEntry, ZooError> {
    entries()
        .into_iter()
        .find(|e| e.name == name)
        .ok_or_else(|| ZooError::UnknownModel { name: name.to_string() })
}

/// All preset names with a flag for whether a full graph is available.
/// Sorted by name.
pub fn list_models() -> Vec<(String, bool)> {
    let mut names: Vec<(String, bool)> =
        entries().into_iter().map(|e| (e.name.clone(), e.graph.is_some())).collect();
    names.sort();
    names
}

/// Training preset for the reconstructed model: 15723 samples in batches of
/// 32, epochs per category.
pub fn default_training_config(category: Category) -> TrainingConfig {
    let entry = get_model("pirnateco").expect("pirnateco preset exists");
    training_config_for(&entry, category).expect("pirnateco preset has epochs")
}

/// Training preset for any entry with per-category epoch counts.
pub fn training_config_for(entry: &ZooEntry, category: Category) -> Option<TrainingConfig> {
    let epochs = entry.epochs_by_category?.get(category);
    Some(
        TrainingConfig::new(TRAINING_SAMPLES, epochs, BATCH_SIZE)
            .expect("preset training config is valid"),
    )
}
