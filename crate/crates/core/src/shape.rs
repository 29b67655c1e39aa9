//! Tensor shape propagation through a normalized graph.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arch::{LayerSpec, ModelGraph, TensorShape};

/// A window does not fit: `input + 2*padding < kernel`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("kernel {kernel} does not fit input {input} with padding {padding}")]
pub struct DegenerateDim {
    pub input: usize,
    pub kernel: usize,
    pub padding: usize,
    pub stride: usize,
}

/// Shape propagation failure; `index` is the offending layer.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ShapeError {
    #[error("layer {index}: {source}")]
    DegenerateDim {
        index: usize,
        #[source]
        source: DegenerateDim,
    },
    #[error("layer {index}: dense layer requires flattened input, got {shape}")]
    DenseOnUnflattenedInput { index: usize, shape: TensorShape },
    #[error("layer {index}: skip tensor '{label}' has shape {labeled}, current is {current}")]
    SkipShapeMismatch {
        index: usize,
        label: String,
        labeled: TensorShape,
        current: TensorShape,
    },
}

impl ShapeError {
    pub fn layer_index(&self) -> usize {
        match self {
            ShapeError::DegenerateDim { index, .. }
            | ShapeError::DenseOnUnflattenedInput { index, .. }
            | ShapeError::SkipShapeMismatch { index, .. } => *index,
        }
    }
}

/// Output extent of a strided window sweep along one dimension:
/// `floor((input - kernel + 2*padding) / stride) + 1`.
///
/// Incomplete trailing windows are discarded.
pub fn conv_output_dim(
    input: usize,
    kernel: usize,
    padding: usize,
    stride: usize,
) -> Result<usize, DegenerateDim> {
    debug_assert!(input >= 1 && kernel >= 1 && stride >= 1);
    let padded = input + 2 * padding;
    if padded < kernel {
        return Err(DegenerateDim { input, kernel, padding, stride });
    }
    Ok((padded - kernel) / stride + 1)
}

/// A normalized graph together with each layer's input and output shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapedGraph {
    pub graph: ModelGraph,
    /// (input, output) per layer; same length as `graph.layers`
    pub shapes: Vec<(TensorShape, TensorShape)>,
}

impl ShapedGraph {
    pub fn output_shape(&self) -> TensorShape {
        self.shapes.last().map(|(_, out)| *out).expect("graph has an input layer")
    }

    /// Largest dimension appearing in any layer shape.
    pub fn max_dim(&self) -> usize {
        self.shapes
            .iter()
            .flat_map(|(i, o)| [i.rows, i.cols, i.channels, o.rows, o.cols, o.channels])
            .max()
            .unwrap_or(0)
    }
}

/// Propagates shapes layer by layer through a normalized, validated graph.
///
/// Each layer's input is the previous layer's output; `Route` layers replace
/// the running shape with the labeled one, and `AddFrom` requires the labeled
/// shape to equal the current shape exactly.
pub fn infer_shapes(g: &ModelGraph) -> Result<ShapedGraph, ShapeError> {
    assert!(!g.has_macros(), "infer_shapes requires a normalized graph");

    let mut shapes: Vec<(TensorShape, TensorShape)> = Vec::with_capacity(g.layers.len());
    let mut current = g.input_shape().expect("validated graph starts with input");

    for (index, layer) in g.layers.iter().enumerate() {
        let input = current;
        let output = match layer {
            LayerSpec::Input { shape } => *shape,
            LayerSpec::Conv2D { filters, geom, .. } => TensorShape {
                rows: dim(index, input.rows, geom.k_rows, geom.p_rows, geom.s_rows)?,
                cols: dim(index, input.cols, geom.k_cols, geom.p_cols, geom.s_cols)?,
                channels: *filters,
            },
            LayerSpec::Pool { geom, .. } => TensorShape {
                rows: dim(index, input.rows, geom.k_rows, geom.p_rows, geom.s_rows)?,
                cols: dim(index, input.cols, geom.k_cols, geom.p_cols, geom.s_cols)?,
                channels: input.channels,
            },
            LayerSpec::Dense { units, .. } => {
                if !input.is_flat() {
                    return Err(ShapeError::DenseOnUnflattenedInput { index, shape: input });
                }
                TensorShape::flat(*units)
            }
            LayerSpec::Flatten => TensorShape::flat(input.rows * input.cols * input.channels),
            LayerSpec::GlobalAvgPool => TensorShape::flat(input.channels),
            LayerSpec::AddFrom { label } => {
                let labeled = labeled_shape(g, &shapes, label);
                if labeled != input {
                    return Err(ShapeError::SkipShapeMismatch {
                        index,
                        label: label.clone(),
                        labeled,
                        current: input,
                    });
                }
                input
            }
            LayerSpec::Route { label } => labeled_shape(g, &shapes, label),
            LayerSpec::BatchNorm
            | LayerSpec::Label { .. }
            | LayerSpec::ActivationOnly { .. } => input,
            LayerSpec::ResBlock { .. } => unreachable!("normalized graph has no macros"),
        };
        shapes.push((input, output));
        current = output;
    }

    Ok(ShapedGraph { graph: g.clone(), shapes })
}

fn labeled_shape(
    g: &ModelGraph,
    shapes: &[(TensorShape, TensorShape)],
    label: &str,
) -> TensorShape {
    let idx = *g.labels().get(label).expect("validated graph has no dangling labels");
    shapes[idx].1
}

fn dim(
    index: usize,
    input: usize,
    kernel: usize,
    padding: usize,
    stride: usize,
) -> Result<usize, ShapeError> {
    conv_output_dim(input, kernel, padding, stride)
        .map_err(|source| ShapeError::DegenerateDim { index, source })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::{Activation, KernelGeometry, PoolKind};

    /// Independent oracle: number of window start offsets `t >= 0` with
    /// `t*stride + kernel <= input + 2*padding`.
    fn windows_by_enumeration(input: usize, kernel: usize, padding: usize, stride: usize) -> usize {
        let padded = input + 2 * padding;
        (0..=padded).filter(|t| t % stride == 0 && t + kernel <= padded).count()
    }

    #[test]
    fn strided_wide_input_matches_enumeration() {
        // floor((924 - 7)/3) + 1, cross-checked by enumerating start
        // positions 0, 3, ..., 915
        assert_eq!(conv_output_dim(924, 7, 0, 3).unwrap(), 306);
        assert_eq!(windows_by_enumeration(924, 7, 0, 3), 306);
    }

    #[test]
    fn unit_kernel_is_identity() {
        for n in 1..=64 {
            assert_eq!(conv_output_dim(n, 1, 0, 1).unwrap(), n);
        }
    }

    #[test]
    fn small_window_case() {
        assert_eq!(conv_output_dim(4, 2, 0, 1).unwrap(), 3);
        assert_eq!(windows_by_enumeration(4, 2, 0, 1), 3);
    }

    #[test]
    fn degenerate_window_is_rejected() {
        assert!(conv_output_dim(3, 5, 0, 1).is_err());
        assert!(conv_output_dim(3, 5, 1, 1).is_ok()); // 3 + 2 >= 5
    }

    #[test]
    fn matches_window_enumeration_exhaustively() {
        for input in 1..=64usize {
            for padding in 0..=4usize {
                let padded = input + 2 * padding;
                for kernel in 1..=padded.min(64) {
                    for stride in 1..=8usize {
                        assert_eq!(
                            conv_output_dim(input, kernel, padding, stride).unwrap(),
                            windows_by_enumeration(input, kernel, padding, stride),
                            "i={input} k={kernel} p={padding} s={stride}"
                        );
                    }
                }
            }
        }
    }

    fn shaped(layers: Vec<LayerSpec>) -> Result<ShapedGraph, ShapeError> {
        let g = ModelGraph::new("t", layers).unwrap();
        infer_shapes(&crate::arch::normalize_graph(&g))
    }

    #[test]
    fn conv_shape_on_wide_input() {
        let sg = shaped(vec![
            LayerSpec::Input { shape: TensorShape::new(16, 924, 2) },
            LayerSpec::Conv2D {
                filters: 32,
                geom: KernelGeometry::new(1, 7, 1, 3),
                activation: Activation::Relu,
                bias: true,
            },
        ])
        .unwrap();
        assert_eq!(sg.shapes[1].1, TensorShape::new(16, 306, 32));
    }

    #[test]
    fn pool_preserves_channels() {
        let sg = shaped(vec![
            LayerSpec::Input { shape: TensorShape::new(16, 306, 32) },
            LayerSpec::Pool { kind: PoolKind::Max, geom: KernelGeometry::new(1, 4, 1, 4) },
        ])
        .unwrap();
        // floor((306 - 4)/4) + 1 = 76 by window enumeration
        assert_eq!(sg.shapes[1].1, TensorShape::new(16, 76, 32));
    }

    #[test]
    fn dense_requires_flat_input() {
        let err = shaped(vec![
            LayerSpec::Input { shape: TensorShape::new(2, 2, 4) },
            LayerSpec::Dense { units: 10, activation: Activation::None, bias: true },
        ])
        .unwrap_err();
        assert!(matches!(err, ShapeError::DenseOnUnflattenedInput { index: 1, .. }));
    }

    #[test]
    fn dense_on_flat_input() {
        let sg = shaped(vec![
            LayerSpec::Input { shape: TensorShape::flat(256) },
            LayerSpec::Dense { units: 1000, activation: Activation::None, bias: true },
        ])
        .unwrap();
        assert_eq!(sg.shapes[1].1, TensorShape::flat(1000));
    }

    #[test]
    fn flatten_and_global_avg_pool() {
        let sg = shaped(vec![
            LayerSpec::Input { shape: TensorShape::new(2, 10, 256) },
            LayerSpec::GlobalAvgPool,
            LayerSpec::Flatten,
        ])
        .unwrap();
        assert_eq!(sg.shapes[1].1, TensorShape::flat(256));
        assert_eq!(sg.shapes[2].1, TensorShape::flat(256));
    }

    #[test]
    fn add_from_preserves_shape() {
        let sg = shaped(vec![
            LayerSpec::Input { shape: TensorShape::new(4, 4, 8) },
            LayerSpec::Label { label: "x".into() },
            LayerSpec::BatchNorm,
            LayerSpec::AddFrom { label: "x".into() },
        ])
        .unwrap();
        assert_eq!(sg.shapes[3].0, sg.shapes[3].1);
    }

    #[test]
    fn add_from_rejects_mismatched_shapes() {
        let err = shaped(vec![
            LayerSpec::Input { shape: TensorShape::new(4, 4, 8) },
            LayerSpec::Label { label: "x".into() },
            LayerSpec::Pool { kind: PoolKind::Max, geom: KernelGeometry::new(2, 2, 2, 2) },
            LayerSpec::AddFrom { label: "x".into() },
        ])
        .unwrap_err();
        assert!(matches!(err, ShapeError::SkipShapeMismatch { index: 3, .. }));
    }

    #[test]
    fn degenerate_conv_reports_layer_index() {
        let err = shaped(vec![
            LayerSpec::Input { shape: TensorShape::new(2, 2, 1) },
            LayerSpec::Conv2D {
                filters: 1,
                geom: KernelGeometry::new(5, 5, 1, 1),
                activation: Activation::None,
                bias: true,
            },
        ])
        .unwrap_err();
        assert!(matches!(err, ShapeError::DegenerateDim { index: 1, .. }));
    }

    #[test]
    fn residual_block_shapes_chain_through_route() {
        let sg = shaped(vec![
            LayerSpec::Input { shape: TensorShape::new(8, 8, 16) },
            LayerSpec::ResBlock { filters: 32, downsample: true },
        ])
        .unwrap();
        assert_eq!(sg.output_shape(), TensorShape::new(4, 4, 32));
        // every layer's input equals the previous layer's output
        for i in 1..sg.shapes.len() {
            assert_eq!(sg.shapes[i].0, sg.shapes[i - 1].1);
        }
    }
}
