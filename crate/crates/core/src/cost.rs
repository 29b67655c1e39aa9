//! Per-layer and whole-model FLOPs and parameter counts.
//!
//! All counting is exact integer arithmetic. A multiply-accumulate counts as
//! 2 FLOPs. In the default fidelity mode only convolutional, dense, and
//! pooling layers cost anything; the extended mode also prices
//! normalization, skip additions, standalone activations, and global average
//! pooling at their element counts.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arch::{Activation, KernelGeometry, LayerSpec, TensorShape};
use crate::shape::{conv_output_dim, DegenerateDim, ShapedGraph};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CostError {
    #[error(transparent)]
    DegenerateDim(#[from] DegenerateDim),
    #[error("pooling layers must not be padded")]
    PoolWithPadding,
}

/// Which layers are priced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CountingMode {
    /// Only conv, dense, and pooling layers cost FLOPs.
    PaperFidelity,
    /// Additionally prices batchnorm (2 per element), skip additions and
    /// standalone activations (1 per element), and global average pooling
    /// (1 per element plus 1 per channel).
    Extended,
}

impl std::fmt::Display for CountingMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CountingMode::PaperFidelity => write!(f, "paper_fidelity"),
            CountingMode::Extended => write!(f, "extended"),
        }
    }
}

/// Cost model options beyond the counting mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostConfig {
    pub mode: CountingMode,
    /// Price a conv activation at one FLOP per output element instead of the
    /// default per-filter window term.
    pub relu_per_element: bool,
}

impl CostConfig {
    pub fn new(mode: CountingMode) -> Self {
        Self { mode, relu_per_element: false }
    }
}

/// FLOPs and parameter count of one layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerCost {
    pub layer_index: usize,
    pub flops: u64,
    pub params: u64,
    pub output_shape: TensorShape,
}

/// Aggregated model cost.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelCost {
    pub per_layer: Vec<LayerCost>,
    pub total_flops: u64,
    pub total_params: u64,
}

fn to_u64(v: u128) -> u64 {
    u64::try_from(v).expect("FLOP count overflows u64")
}

/// FLOPs of a dense layer: `2 * inputs * outputs`, plus `outputs` when an
/// activation is applied.
pub fn flops_fc(input_size: u64, output_size: u64, activation: Activation) -> u64 {
    let mac = 2 * input_size as u128 * output_size as u128;
    let act = if activation.is_none() { 0 } else { output_size as u128 };
    to_u64(mac + act)
}

/// Per-output-position window term: 2 multiplies and 2 adds per tap, plus 1
/// for the bias.
fn window_term(channels: u64, geom: &KernelGeometry) -> u128 {
    2 * channels as u128 * geom.k_rows as u128 * geom.k_cols as u128 + 1
}

fn out_positions(in_shape: TensorShape, geom: &KernelGeometry) -> Result<u128, DegenerateDim> {
    let h = conv_output_dim(in_shape.rows, geom.k_rows, geom.p_rows, geom.s_rows)?;
    let w = conv_output_dim(in_shape.cols, geom.k_cols, geom.p_cols, geom.s_cols)?;
    Ok(h as u128 * w as u128)
}

/// FLOPs of one convolution filter swept over the input:
/// `H_out * W_out * (2*C*K_r*K_c + 1)`.
pub fn flops_conv_filter(
    in_shape: TensorShape,
    geom: &KernelGeometry,
) -> Result<u64, DegenerateDim> {
    let positions = out_positions(in_shape, geom)?;
    Ok(to_u64(positions * window_term(in_shape.channels as u64, geom)))
}

/// FLOPs of a full convolutional layer with `filters` filters.
///
/// With an activation, each filter is charged one extra window term; the
/// `relu_per_element` alternative instead charges one FLOP per output
/// element.
pub fn flops_conv_layer(
    in_shape: TensorShape,
    geom: &KernelGeometry,
    filters: u64,
    activation: Activation,
) -> Result<u64, DegenerateDim> {
    flops_conv_layer_with(in_shape, geom, filters, activation, false)
}

pub fn flops_conv_layer_with(
    in_shape: TensorShape,
    geom: &KernelGeometry,
    filters: u64,
    activation: Activation,
    relu_per_element: bool,
) -> Result<u64, DegenerateDim> {
    let positions = out_positions(in_shape, geom)?;
    let term = window_term(in_shape.channels as u64, geom);
    let per_filter = positions * term;
    let total = if activation.is_none() {
        per_filter * filters as u128
    } else if relu_per_element {
        (per_filter + positions) * filters as u128
    } else {
        (per_filter + term) * filters as u128
    };
    Ok(to_u64(total))
}

/// FLOPs of a pooling layer: `H_out * W_out * (2*C*K_r*K_c + 1)`.
///
/// This prices pooling windows like convolution windows even though a max
/// pool executes comparisons rather than multiply-accumulates; the reference
/// executor reports the measured comparison count side by side.
pub fn flops_pool(in_shape: TensorShape, geom: &KernelGeometry) -> Result<u64, CostError> {
    if geom.has_padding() {
        return Err(CostError::PoolWithPadding);
    }
    let positions = out_positions(in_shape, geom)?;
    Ok(to_u64(positions * window_term(in_shape.channels as u64, geom)))
}

/// Weight count of a layer, biases included.
///
/// Batch normalization carries a scale and a shift per channel; running
/// statistics are not parameters.
pub fn param_count(layer: &LayerSpec, in_shape: TensorShape) -> u64 {
    match layer {
        LayerSpec::Conv2D { filters, geom, bias, .. } => {
            let per_filter = in_shape.channels as u128 * geom.k_rows as u128 * geom.k_cols as u128
                + u128::from(*bias);
            to_u64(*filters as u128 * per_filter)
        }
        LayerSpec::Dense { units, bias, .. } => {
            to_u64(*units as u128 * (in_shape.channels as u128 + u128::from(*bias)))
        }
        LayerSpec::BatchNorm => 2 * in_shape.channels as u64,
        _ => 0,
    }
}

fn layer_flops(
    layer: &LayerSpec,
    in_shape: TensorShape,
    out_shape: TensorShape,
    cfg: CostConfig,
) -> Result<u64, CostError> {
    let flops = match layer {
        LayerSpec::Conv2D { filters, geom, activation, .. } => flops_conv_layer_with(
            in_shape,
            geom,
            *filters as u64,
            *activation,
            cfg.relu_per_element,
        )?,
        LayerSpec::Dense { units, activation, .. } => {
            flops_fc(in_shape.channels as u64, *units as u64, *activation)
        }
        LayerSpec::Pool { geom, .. } => flops_pool(in_shape, geom)?,
        LayerSpec::BatchNorm => match cfg.mode {
            CountingMode::PaperFidelity => 0,
            CountingMode::Extended => 2 * in_shape.elements(),
        },
        LayerSpec::AddFrom { .. } | LayerSpec::ActivationOnly { .. } => match cfg.mode {
            CountingMode::PaperFidelity => 0,
            CountingMode::Extended => in_shape.elements(),
        },
        LayerSpec::GlobalAvgPool => match cfg.mode {
            CountingMode::PaperFidelity => 0,
            CountingMode::Extended => in_shape.elements() + in_shape.channels as u64,
        },
        LayerSpec::Input { .. }
        | LayerSpec::Flatten
        | LayerSpec::Label { .. }
        | LayerSpec::Route { .. } => 0,
        LayerSpec::ResBlock { .. } => unreachable!("shaped graphs are normalized"),
    };
    let _ = out_shape;
    Ok(flops)
}

/// Costs every layer of a shaped graph and sums the totals.
pub fn model_cost(sg: &ShapedGraph, mode: CountingMode) -> ModelCost {
    model_cost_with(sg, CostConfig::new(mode))
}

pub fn model_cost_with(sg: &ShapedGraph, cfg: CostConfig) -> ModelCost {
    let mut per_layer = Vec::with_capacity(sg.graph.layers.len());
    let mut total_flops: u64 = 0;
    let mut total_params: u64 = 0;
    for (index, layer) in sg.graph.layers.iter().enumerate() {
        let (in_shape, out_shape) = sg.shapes[index];
        // shapes were already inferred, so window arithmetic cannot fail here
        let flops = layer_flops(layer, in_shape, out_shape, cfg)
            .expect("cost of a shaped layer is defined");
        let params = param_count(layer, in_shape);
        total_flops = total_flops.checked_add(flops).expect("FLOP total overflows u64");
        total_params = total_params.checked_add(params).expect("param total overflows u64");
        per_layer.push(LayerCost { layer_index: index, flops, params, output_shape: out_shape });
    }
    ModelCost { per_layer, total_flops, total_params }
}
