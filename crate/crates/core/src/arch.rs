//! Architecture graph types and the validation/normalization passes every
//! other module consumes.
//!
//! A model is an ordered list of layers. Skip connections are expressed with
//! three marker layers: `Label` names the current tensor, `Route` rewinds the
//! running tensor to a labeled one, and `AddFrom` adds a labeled tensor to the
//! current one element-wise. Residual blocks are written as a `ResBlock` macro
//! and expanded by [`normalize_graph`].

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Rows x cols x channels of a feature map.
///
/// A flattened tensor is represented as `1 x 1 x n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TensorShape {
    pub rows: usize,
    pub cols: usize,
    pub channels: usize,
}

impl TensorShape {
    pub fn new(rows: usize, cols: usize, channels: usize) -> Self {
        Self { rows, cols, channels }
    }

    /// Shape of a flattened vector of `n` features.
    pub fn flat(n: usize) -> Self {
        Self { rows: 1, cols: 1, channels: n }
    }

    pub fn is_flat(&self) -> bool {
        self.rows == 1 && self.cols == 1
    }

    /// Total number of elements.
    pub fn elements(&self) -> u64 {
        self.rows as u64 * self.cols as u64 * self.channels as u64
    }

    fn check(&self) -> Result<(), String> {
        if self.rows < 1 || self.cols < 1 || self.channels < 1 {
            Err(format!("tensor shape {self} has a zero dimension"))
        } else {
            Ok(())
        }
    }
}

impl std::fmt::Display for TensorShape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}", self.rows, self.cols, self.channels)
    }
}

/// Kernel size, stride, and padding of a conv or pool layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct KernelGeometry {
    pub k_rows: usize,
    pub k_cols: usize,
    pub s_rows: usize,
    pub s_cols: usize,
    pub p_rows: usize,
    pub p_cols: usize,
}

impl KernelGeometry {
    /// Geometry with explicit stride and zero padding.
    pub fn new(k_rows: usize, k_cols: usize, s_rows: usize, s_cols: usize) -> Self {
        Self { k_rows, k_cols, s_rows, s_cols, p_rows: 0, p_cols: 0 }
    }

    pub fn with_padding(mut self, p_rows: usize, p_cols: usize) -> Self {
        self.p_rows = p_rows;
        self.p_cols = p_cols;
        self
    }

    /// Square kernel, stride 1, zero padding.
    pub fn square(k: usize) -> Self {
        Self::new(k, k, 1, 1)
    }

    pub fn has_padding(&self) -> bool {
        self.p_rows != 0 || self.p_cols != 0
    }

    fn check(&self) -> Result<(), String> {
        if self.k_rows < 1 || self.k_cols < 1 {
            Err(format!("kernel {}x{} has a zero dimension", self.k_rows, self.k_cols))
        } else if self.s_rows < 1 || self.s_cols < 1 {
            Err(format!("stride {}x{} has a zero component", self.s_rows, self.s_cols))
        } else {
            Ok(())
        }
    }
}

/// Activation applied after a layer's linear part.
///
/// The leaky slope is carried in the variant, so `alpha` exists exactly when
/// the activation is leaky.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Activation {
    None,
    Relu,
    LeakyRelu { alpha: f64 },
}

impl Activation {
    /// Default leaky slope used throughout the tool.
    pub const DEFAULT_ALPHA: f64 = 1e-3;

    pub fn is_none(&self) -> bool {
        matches!(self, Activation::None)
    }

    pub fn alpha(&self) -> f64 {
        match self {
            Activation::LeakyRelu { alpha } => *alpha,
            _ => 0.0,
        }
    }
}

/// Max or average pooling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PoolKind {
    Max,
    Avg,
}

/// One layer of a model description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LayerSpec {
    Input {
        shape: TensorShape,
    },
    Conv2D {
        filters: usize,
        geom: KernelGeometry,
        activation: Activation,
        bias: bool,
    },
    Pool {
        kind: PoolKind,
        geom: KernelGeometry,
    },
    Dense {
        units: usize,
        activation: Activation,
        bias: bool,
    },
    BatchNorm,
    Flatten,
    GlobalAvgPool,
    /// Element-wise addition of the tensor named by `label`.
    AddFrom { label: String },
    /// Names the current tensor for a later `AddFrom` or `Route`.
    Label { label: String },
    /// Rewinds the running tensor to the one named by `label`. Zero cost;
    /// lets a flat layer list carry layers on a skip branch.
    Route { label: String },
    /// Standalone activation with no weights (e.g. the post-add ReLU of a
    /// residual block).
    ActivationOnly { activation: Activation },
    /// Residual block macro; expanded by [`normalize_graph`].
    ResBlock { filters: usize, downsample: bool },
}

impl LayerSpec {
    /// Keyword used in reports and in the model description language.
    pub fn kind_name(&self) -> &'static str {
        match self {
            LayerSpec::Input { .. } => "input",
            LayerSpec::Conv2D { .. } => "conv2d",
            LayerSpec::Pool { kind: PoolKind::Max, .. } => "maxpool",
            LayerSpec::Pool { kind: PoolKind::Avg, .. } => "avgpool",
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::BatchNorm => "batchnorm",
            LayerSpec::Flatten => "flatten",
            LayerSpec::GlobalAvgPool => "globalavgpool",
            LayerSpec::AddFrom { .. } => "addfrom",
            LayerSpec::Label { .. } => "label",
            LayerSpec::Route { .. } => "route",
            LayerSpec::ActivationOnly { .. } => "activation",
            LayerSpec::ResBlock { .. } => "resblock",
        }
    }

    /// Markers carry no tensor math of their own.
    pub fn is_marker(&self) -> bool {
        matches!(self, LayerSpec::Label { .. } | LayerSpec::Route { .. })
    }
}

/// Validation failure; `index` is the offending layer's position.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("layer {index}: model must start with an input layer")]
    MissingInput { index: usize },
    #[error("layer {index}: input layer only allowed at position 0")]
    MisplacedInput { index: usize },
    #[error("layer {index}: label '{label}' already defined")]
    DuplicateLabel { index: usize, label: String },
    #[error("layer {index}: reference to undefined or later label '{label}'")]
    DanglingSkipReference { index: usize, label: String },
    #[error("layer {index}: pooling layers must not be padded")]
    PoolWithPadding { index: usize },
    #[error("layer {index}: {reason}")]
    InvalidField { index: usize, reason: String },
    #[error("model name must not contain quotes or newlines")]
    InvalidName,
}

impl GraphError {
    /// Offending layer index, when the error concerns one.
    pub fn layer_index(&self) -> Option<usize> {
        match self {
            GraphError::MissingInput { index }
            | GraphError::MisplacedInput { index }
            | GraphError::DuplicateLabel { index, .. }
            | GraphError::DanglingSkipReference { index, .. }
            | GraphError::PoolWithPadding { index }
            | GraphError::InvalidField { index, .. } => Some(*index),
            GraphError::InvalidName => None,
        }
    }
}

/// An ordered layer sequence with named skip edges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelGraph {
    pub name: String,
    pub layers: Vec<LayerSpec>,
    /// label -> index of the `Label` layer that defines it
    labels: BTreeMap<String, usize>,
}

impl ModelGraph {
    /// Builds a graph and checks every structural invariant.
    pub fn new(name: impl Into<String>, layers: Vec<LayerSpec>) -> Result<Self, GraphError> {
        let graph = Self::new_unchecked(name, layers);
        validate_graph(&graph)?;
        Ok(graph)
    }

    /// Builds a graph without validating. The label table is still derived
    /// from the layer list (first definition wins; duplicates are caught by
    /// [`validate_graph`]).
    pub fn new_unchecked(name: impl Into<String>, layers: Vec<LayerSpec>) -> Self {
        let mut labels = BTreeMap::new();
        for (i, layer) in layers.iter().enumerate() {
            if let LayerSpec::Label { label } = layer {
                labels.entry(label.clone()).or_insert(i);
            }
        }
        Self { name: name.into(), layers, labels }
    }

    /// label -> defining layer index
    pub fn labels(&self) -> &BTreeMap<String, usize> {
        &self.labels
    }

    pub fn input_shape(&self) -> Option<TensorShape> {
        match self.layers.first() {
            Some(LayerSpec::Input { shape }) => Some(*shape),
            _ => None,
        }
    }

    pub fn has_macros(&self) -> bool {
        self.layers.iter().any(|l| matches!(l, LayerSpec::ResBlock { .. }))
    }
}

fn check_positive(index: usize, what: &str, v: usize) -> Result<(), GraphError> {
    if v < 1 {
        Err(GraphError::InvalidField { index, reason: format!("{what} must be >= 1") })
    } else {
        Ok(())
    }
}

/// Checks every structural and field invariant of `g`.
///
/// Deterministic; returns the first violation in layer order.
pub fn validate_graph(g: &ModelGraph) -> Result<(), GraphError> {
    if g.name.contains('"') || g.name.contains('\n') {
        return Err(GraphError::InvalidName);
    }
    match g.layers.first() {
        Some(LayerSpec::Input { .. }) => {}
        _ => return Err(GraphError::MissingInput { index: 0 }),
    }

    let mut seen_labels: BTreeMap<&str, usize> = BTreeMap::new();
    for (index, layer) in g.layers.iter().enumerate() {
        match layer {
            LayerSpec::Input { shape } => {
                if index != 0 {
                    return Err(GraphError::MisplacedInput { index });
                }
                shape.check().map_err(|reason| GraphError::InvalidField { index, reason })?;
            }
            LayerSpec::Conv2D { filters, geom, activation, .. } => {
                check_positive(index, "filters", *filters)?;
                geom.check().map_err(|reason| GraphError::InvalidField { index, reason })?;
                check_alpha(index, activation)?;
            }
            LayerSpec::Pool { geom, .. } => {
                geom.check().map_err(|reason| GraphError::InvalidField { index, reason })?;
                if geom.has_padding() {
                    return Err(GraphError::PoolWithPadding { index });
                }
            }
            LayerSpec::Dense { units, activation, .. } => {
                check_positive(index, "units", *units)?;
                check_alpha(index, activation)?;
            }
            LayerSpec::Label { label } => {
                check_identifier(index, label)?;
                if seen_labels.contains_key(label.as_str()) {
                    return Err(GraphError::DuplicateLabel { index, label: label.clone() });
                }
                seen_labels.insert(label, index);
            }
            LayerSpec::AddFrom { label } | LayerSpec::Route { label } => {
                check_identifier(index, label)?;
                if !seen_labels.contains_key(label.as_str()) {
                    return Err(GraphError::DanglingSkipReference {
                        index,
                        label: label.clone(),
                    });
                }
            }
            LayerSpec::ActivationOnly { activation } => check_alpha(index, activation)?,
            LayerSpec::ResBlock { filters, .. } => check_positive(index, "filters", *filters)?,
            LayerSpec::BatchNorm | LayerSpec::Flatten | LayerSpec::GlobalAvgPool => {}
        }
    }
    Ok(())
}

/// Labels must be serializable identifiers: `[A-Za-z_][A-Za-z0-9_]*`.
pub fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn check_identifier(index: usize, label: &str) -> Result<(), GraphError> {
    if is_identifier(label) {
        Ok(())
    } else {
        Err(GraphError::InvalidField {
            index,
            reason: format!("'{label}' is not a valid label identifier"),
        })
    }
}

fn check_alpha(index: usize, activation: &Activation) -> Result<(), GraphError> {
    if let Activation::LeakyRelu { alpha } = activation {
        if !alpha.is_finite() || *alpha < 0.0 {
            return Err(GraphError::InvalidField {
                index,
                reason: format!("leaky slope must be a finite non-negative real, got {alpha}"),
            });
        }
    }
    Ok(())
}

/// Expands every `ResBlock` macro into concrete layers.
///
/// A block with filters `f` becomes two 3x3 convolutions (the first carries
/// the ReLU), each followed by batch normalization, with a skip addition
/// around the pair and a standalone ReLU after the add. Downsampling blocks
/// stride the first convolution by 2 and project the skip branch with a
/// strided 1x1 convolution plus batch normalization.
///
/// Idempotent, and preserves the relative order of non-macro layers.
pub fn normalize_graph(g: &ModelGraph) -> ModelGraph {
    if !g.has_macros() {
        return g.clone();
    }

    let mut out: Vec<LayerSpec> = Vec::with_capacity(g.layers.len() + 8);
    let mut counter = 0usize;
    for layer in &g.layers {
        match layer {
            LayerSpec::ResBlock { filters, downsample } => {
                counter += 1;
                expand_res_block(&mut out, g, &mut counter, *filters, *downsample);
            }
            other => out.push(other.clone()),
        }
    }
    ModelGraph::new_unchecked(g.name.clone(), out)
}

/// Picks a label of the form `_rb<counter><suffix>` not already used in `g`.
fn fresh_label(g: &ModelGraph, counter: &mut usize, suffix: &str) -> String {
    loop {
        let candidate = format!("_rb{counter}{suffix}");
        if !g.labels().contains_key(&candidate) {
            return candidate;
        }
        *counter += 1;
    }
}

fn expand_res_block(
    out: &mut Vec<LayerSpec>,
    g: &ModelGraph,
    counter: &mut usize,
    filters: usize,
    downsample: bool,
) {
    let stride = if downsample { 2 } else { 1 };
    let entry = fresh_label(g, counter, "");
    out.push(LayerSpec::Label { label: entry.clone() });

    // The AddFrom junction references the block entry directly for identity
    // blocks, or the projected tensor for downsampling blocks.
    let skip = if downsample {
        let skip = fresh_label(g, counter, "s");
        out.push(LayerSpec::Conv2D {
            filters,
            geom: KernelGeometry::new(1, 1, 2, 2),
            activation: Activation::None,
            bias: true,
        });
        out.push(LayerSpec::BatchNorm);
        out.push(LayerSpec::Label { label: skip.clone() });
        out.push(LayerSpec::Route { label: entry });
        skip
    } else {
        entry
    };

    out.push(LayerSpec::Conv2D {
        filters,
        geom: KernelGeometry::new(3, 3, stride, stride).with_padding(1, 1),
        activation: Activation::Relu,
        bias: true,
    });
    out.push(LayerSpec::BatchNorm);
    out.push(LayerSpec::Conv2D {
        filters,
        geom: KernelGeometry::new(3, 3, 1, 1).with_padding(1, 1),
        activation: Activation::None,
        bias: true,
    });
    out.push(LayerSpec::BatchNorm);
    out.push(LayerSpec::AddFrom { label: skip });
    out.push(LayerSpec::ActivationOnly { activation: Activation::Relu });
}

#[cfg(test)]
mod tests {
    use super::*;

    fn conv(filters: usize, k: (usize, usize), s: (usize, usize)) -> LayerSpec {
        LayerSpec::Conv2D {
            filters,
            geom: KernelGeometry::new(k.0, k.1, s.0, s.1),
            activation: Activation::Relu,
            bias: true,
        }
    }

    #[test]
    fn accepts_input_plus_strided_conv() {
        let g = ModelGraph::new(
            "stem",
            vec![
                LayerSpec::Input { shape: TensorShape::new(16, 924, 2) },
                conv(32, (1, 7), (1, 3)),
            ],
        );
        assert!(g.is_ok());
    }

    #[test]
    fn accepts_minimal_graph() {
        let g = ModelGraph::new(
            "tiny",
            vec![LayerSpec::Input { shape: TensorShape::new(1, 1, 1) }],
        );
        assert!(g.is_ok());
    }

    #[test]
    fn rejects_graph_without_input() {
        let err = ModelGraph::new("bad", vec![conv(8, (3, 3), (1, 1))]).unwrap_err();
        assert_eq!(err, GraphError::MissingInput { index: 0 });
    }

    #[test]
    fn rejects_misplaced_input() {
        let err = ModelGraph::new(
            "bad",
            vec![
                LayerSpec::Input { shape: TensorShape::new(1, 1, 1) },
                LayerSpec::Input { shape: TensorShape::new(1, 1, 1) },
            ],
        )
        .unwrap_err();
        assert_eq!(err, GraphError::MisplacedInput { index: 1 });
    }

    #[test]
    fn rejects_duplicate_label() {
        let err = ModelGraph::new(
            "bad",
            vec![
                LayerSpec::Input { shape: TensorShape::new(1, 1, 1) },
                LayerSpec::Label { label: "a".into() },
                LayerSpec::Label { label: "a".into() },
            ],
        )
        .unwrap_err();
        assert_eq!(err, GraphError::DuplicateLabel { index: 2, label: "a".into() });
    }

    #[test]
    fn rejects_dangling_and_forward_references() {
        let err = ModelGraph::new(
            "bad",
            vec![
                LayerSpec::Input { shape: TensorShape::new(1, 1, 1) },
                LayerSpec::AddFrom { label: "later".into() },
                LayerSpec::Label { label: "later".into() },
            ],
        )
        .unwrap_err();
        assert_eq!(err, GraphError::DanglingSkipReference { index: 1, label: "later".into() });
    }

    #[test]
    fn rejects_padded_pool() {
        let err = ModelGraph::new(
            "bad",
            vec![
                LayerSpec::Input { shape: TensorShape::new(4, 4, 1) },
                LayerSpec::Pool {
                    kind: PoolKind::Max,
                    geom: KernelGeometry::new(2, 2, 2, 2).with_padding(1, 0),
                },
            ],
        )
        .unwrap_err();
        assert_eq!(err, GraphError::PoolWithPadding { index: 1 });
    }

    #[test]
    fn rejects_zero_filters() {
        let err = ModelGraph::new(
            "bad",
            vec![
                LayerSpec::Input { shape: TensorShape::new(4, 4, 1) },
                LayerSpec::Conv2D {
                    filters: 0,
                    geom: KernelGeometry::square(1),
                    activation: Activation::None,
                    bias: true,
                },
            ],
        )
        .unwrap_err();
        assert!(matches!(err, GraphError::InvalidField { index: 1, .. }));
    }

    fn resnet_like(blocks: Vec<LayerSpec>) -> ModelGraph {
        let mut layers = vec![LayerSpec::Input { shape: TensorShape::new(8, 8, 32) }];
        layers.extend(blocks);
        ModelGraph::new("blocks", layers).unwrap()
    }

    #[test]
    fn identity_block_expands_to_six_concrete_layers() {
        let g = resnet_like(vec![LayerSpec::ResBlock { filters: 32, downsample: false }]);
        let n = normalize_graph(&g);
        let kinds: Vec<&str> = n.layers[1..].iter().map(|l| l.kind_name()).collect();
        assert_eq!(
            kinds,
            vec!["label", "conv2d", "batchnorm", "conv2d", "batchnorm", "addfrom", "activation"]
        );
        // 2 convs + 2 batchnorms + the add junction + the post-add relu
        let concrete = n.layers[1..].iter().filter(|l| !l.is_marker()).count();
        assert_eq!(concrete, 6);
        // first conv carries the relu, the second does not
        match (&n.layers[2], &n.layers[4]) {
            (
                LayerSpec::Conv2D { geom: g1, activation: a1, .. },
                LayerSpec::Conv2D { geom: g2, activation: a2, .. },
            ) => {
                assert_eq!((g1.k_rows, g1.k_cols, g1.s_rows, g1.p_rows), (3, 3, 1, 1));
                assert_eq!((g2.k_rows, g2.s_rows), (3, 1));
                assert_eq!(*a1, Activation::Relu);
                assert_eq!(*a2, Activation::None);
            }
            other => panic!("unexpected expansion {other:?}"),
        }
        validate_graph(&n).unwrap();
    }

    #[test]
    fn downsample_block_adds_projection_on_skip_branch() {
        let g = resnet_like(vec![LayerSpec::ResBlock { filters: 64, downsample: true }]);
        let n = normalize_graph(&g);
        let kinds: Vec<&str> = n.layers[1..].iter().map(|l| l.kind_name()).collect();
        assert_eq!(
            kinds,
            vec![
                "label", "conv2d", "batchnorm", "label", "route", "conv2d", "batchnorm",
                "conv2d", "batchnorm", "addfrom", "activation"
            ]
        );
        // projection conv is 1x1 stride 2 without activation
        match &n.layers[2] {
            LayerSpec::Conv2D { filters, geom, activation, .. } => {
                assert_eq!(*filters, 64);
                assert_eq!((geom.k_rows, geom.k_cols, geom.s_rows, geom.s_cols), (1, 1, 2, 2));
                assert!(!geom.has_padding());
                assert_eq!(*activation, Activation::None);
            }
            other => panic!("unexpected projection layer {other:?}"),
        }
        // main path's first conv is strided
        match &n.layers[6] {
            LayerSpec::Conv2D { geom, activation, .. } => {
                assert_eq!((geom.s_rows, geom.s_cols), (2, 2));
                assert_eq!(*activation, Activation::Relu);
            }
            other => panic!("unexpected main conv {other:?}"),
        }
        validate_graph(&n).unwrap();
    }

    #[test]
    fn normalize_without_macros_is_identity() {
        let g = ModelGraph::new(
            "plain",
            vec![
                LayerSpec::Input { shape: TensorShape::new(4, 4, 1) },
                conv(2, (2, 2), (1, 1)),
                LayerSpec::Flatten,
            ],
        )
        .unwrap();
        assert_eq!(normalize_graph(&g), g);
    }

    #[test]
    fn normalize_is_idempotent() {
        let g = resnet_like(vec![
            LayerSpec::ResBlock { filters: 32, downsample: false },
            LayerSpec::ResBlock { filters: 64, downsample: true },
        ]);
        let once = normalize_graph(&g);
        let twice = normalize_graph(&once);
        assert_eq!(once, twice);
    }

    #[test]
    fn normalize_preserves_non_macro_layers_and_order() {
        // distinctive layers that the expansion itself never emits
        let pool = LayerSpec::Pool {
            kind: PoolKind::Max,
            geom: KernelGeometry::new(1, 4, 1, 4),
        };
        let dense = LayerSpec::Dense { units: 77, activation: Activation::None, bias: true };
        let g = resnet_like(vec![
            pool.clone(),
            LayerSpec::ResBlock { filters: 32, downsample: false },
            LayerSpec::GlobalAvgPool,
            LayerSpec::ResBlock { filters: 64, downsample: true },
            dense.clone(),
        ]);
        let n = normalize_graph(&g);
        assert!(!n.has_macros());
        assert_eq!(n.layers[0], g.layers[0]); // input stays first
        let positions: Vec<usize> = [&pool, &LayerSpec::GlobalAvgPool, &dense]
            .iter()
            .map(|wanted| n.layers.iter().position(|l| l == *wanted).expect("layer kept"))
            .collect();
        assert!(positions.windows(2).all(|w| w[0] < w[1]), "order kept: {positions:?}");
    }

    #[test]
    fn auto_labels_avoid_user_labels() {
        let g = ModelGraph::new(
            "clash",
            vec![
                LayerSpec::Input { shape: TensorShape::new(8, 8, 16) },
                LayerSpec::Label { label: "_rb1".into() },
                LayerSpec::ResBlock { filters: 16, downsample: false },
            ],
        )
        .unwrap();
        let n = normalize_graph(&g);
        validate_graph(&n).unwrap();
    }

    #[test]
    fn rejects_name_with_quote() {
        let err = ModelGraph::new(
            "a\"b",
            vec![LayerSpec::Input { shape: TensorShape::new(1, 1, 1) }],
        )
        .unwrap_err();
        assert_eq!(err, GraphError::InvalidName);
    }
}
