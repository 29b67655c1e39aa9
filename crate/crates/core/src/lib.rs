//! Static complexity, energy, and carbon accounting for convolutional
//! network architectures.
//!
//! The pipeline: parse or build a [`arch::ModelGraph`], expand residual-block
//! macros with [`arch::normalize_graph`], propagate tensor shapes with
//! [`shape::infer_shapes`], price every layer with [`cost::model_cost`], and
//! convert FLOPs to training energy and CO2-equivalent mass with the
//! [`energy`] module. The [`exec`] module is a brute-force counting executor
//! that validates the analytic counts at desk scale, and [`zoo`] ships
//! citable presets.

pub mod arch;
pub mod cost;
pub mod dsl;
pub mod energy;
pub mod exec;
pub mod shape;
pub mod synth;
pub mod zoo;

pub use arch::{
    normalize_graph, validate_graph, Activation, GraphError, KernelGeometry, LayerSpec,
    ModelGraph, PoolKind, TensorShape,
};
pub use cost::{model_cost, model_cost_with, CostConfig, CountingMode, LayerCost, ModelCost};
pub use dsl::{parse_model, serialize_model, DslError, ParseError, ParseErrorKind};
pub use energy::{
    backsolve_gpu_efficiency, carbon_from_energy, energy_forward, energy_prediction,
    energy_training, project_carbon, EnergyParams, EnergyReport, TrainingConfig,
};
pub use exec::{compare_counts, execute_counting, DiscrepancyReport, ExecError, OpCount, Tensor};
pub use shape::{conv_output_dim, infer_shapes, ShapeError, ShapedGraph};
