//! The `.nnm` model description language: parsing and canonical
//! serialization.
//!
//! The format is line oriented. `#` starts a comment to end of line, blank
//! lines are ignored, and the first meaningful line may be a header of the
//! form `model "<name>"`. Every other line is one layer: a keyword followed
//! by positional values or `key=value` pairs. Dimension pairs are written
//! `RxC`. Canonical output prints one layer per line with fields in a fixed
//! order, lowercase keywords, single spaces, and default-valued fields
//! omitted.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arch::{
    is_identifier, validate_graph, Activation, GraphError, KernelGeometry, LayerSpec, ModelGraph,
    PoolKind, TensorShape,
};

/// Category of a parse failure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ParseErrorKind {
    UnknownKeyword,
    BadDimensionPair,
    MissingField,
    DuplicateField,
    BadInteger,
    BadReal,
}

/// Positioned parse failure; line and column are 1-based.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}, column {column}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub message: String,
    pub kind: ParseErrorKind,
}

/// Failure of [`parse_model`]: either a positioned syntax error or a graph
/// invariant violated by an otherwise well-formed description.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum DslError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("line {line}: {source}")]
    Validation {
        line: usize,
        #[source]
        source: GraphError,
    },
}

impl DslError {
    /// Line the error points at.
    pub fn line(&self) -> usize {
        match self {
            DslError::Parse(e) => e.line,
            DslError::Validation { line, .. } => *line,
        }
    }
}

fn err(
    line: usize,
    column: usize,
    kind: ParseErrorKind,
    message: impl Into<String>,
) -> ParseError {
    ParseError { line, column, message: message.into(), kind }
}

/// A token with its 1-based column.
#[derive(Debug, Clone, Copy)]
struct Token<'a> {
    column: usize,
    text: &'a str,
}

/// Strips the comment part of a line. A `#` inside the quoted model name
/// does not start a comment.
fn strip_comment(line: &str) -> &str {
    let mut in_quotes = false;
    for (i, c) in line.char_indices() {
        match c {
            '"' => in_quotes = !in_quotes,
            '#' if !in_quotes => return &line[..i],
            _ => {}
        }
    }
    line
}

fn tokenize(line: &str) -> Vec<Token<'_>> {
    let mut tokens = Vec::new();
    let mut start: Option<usize> = None;
    let mut chars: Vec<(usize, char)> = line.char_indices().collect();
    chars.push((line.len(), ' ')); // sentinel
    let mut col = 0usize;
    let mut start_col = 0usize;
    for (i, c) in chars {
        col += 1;
        if c.is_whitespace() {
            if let Some(s) = start.take() {
                tokens.push(Token { column: start_col, text: &line[s..i] });
            }
        } else if start.is_none() {
            start = Some(i);
            start_col = col;
        }
    }
    tokens
}

/// Collected `key=value` fields of one layer line.
struct Fields<'a> {
    keyword: &'a str,
    line: usize,
    entries: Vec<(Token<'a>, &'a str, &'a str)>, // (token, key, value)
}

impl<'a> Fields<'a> {
    fn collect(keyword: &'a str, line: usize, tokens: &[Token<'a>]) -> Result<Self, ParseError> {
        let mut entries: Vec<(Token<'a>, &'a str, &'a str)> = Vec::new();
        for tok in tokens {
            let Some((key, value)) = tok.text.split_once('=') else {
                return Err(err(
                    line,
                    tok.column,
                    ParseErrorKind::UnknownKeyword,
                    format!("expected key=value, got '{}'", tok.text),
                ));
            };
            if entries.iter().any(|(_, k, _)| *k == key) {
                return Err(err(
                    line,
                    tok.column,
                    ParseErrorKind::DuplicateField,
                    format!("duplicate field '{key}'"),
                ));
            }
            entries.push((*tok, key, value));
        }
        Ok(Self { keyword, line, entries })
    }

    fn take(&mut self, key: &str) -> Option<(Token<'a>, &'a str)> {
        let pos = self.entries.iter().position(|(_, k, _)| *k == key)?;
        let (tok, _, value) = self.entries.remove(pos);
        Some((tok, value))
    }

    fn require(&mut self, key: &str) -> Result<(Token<'a>, &'a str), ParseError> {
        self.take(key).ok_or_else(|| {
            err(
                self.line,
                1,
                ParseErrorKind::MissingField,
                format!("{} requires {key}=...", self.keyword),
            )
        })
    }

    fn finish(self) -> Result<(), ParseError> {
        if let Some((tok, key, _)) = self.entries.first() {
            return Err(err(
                self.line,
                tok.column,
                ParseErrorKind::UnknownKeyword,
                format!("unknown field '{key}' for {}", self.keyword),
            ));
        }
        Ok(())
    }
}

fn parse_uint(line: usize, tok: Token<'_>, text: &str, what: &str, min: usize) -> Result<usize, ParseError> {
    let value: usize = text.parse().map_err(|_| {
        err(line, tok.column, ParseErrorKind::BadInteger, format!("{what} must be an unsigned integer, got '{text}'"))
    })?;
    if value < min {
        return Err(err(line, tok.column, ParseErrorKind::BadInteger, format!("{what} must be >= {min}")));
    }
    Ok(value)
}

fn parse_real(line: usize, tok: Token<'_>, text: &str, what: &str) -> Result<f64, ParseError> {
    let value: f64 = text.parse().map_err(|_| {
        err(line, tok.column, ParseErrorKind::BadReal, format!("{what} must be a real number, got '{text}'"))
    })?;
    if !value.is_finite() || value < 0.0 {
        return Err(err(line, tok.column, ParseErrorKind::BadReal, format!("{what} must be finite and non-negative")));
    }
    Ok(value)
}

fn parse_pair(line: usize, tok: Token<'_>, text: &str, what: &str, min: usize) -> Result<(usize, usize), ParseError> {
    let bad = |msg: String| err(line, tok.column, ParseErrorKind::BadDimensionPair, msg);
    let (r, c) = text
        .split_once('x')
        .ok_or_else(|| bad(format!("{what} must be a RxC pair, got '{text}'")))?;
    let parse = |s: &str| -> Result<usize, ParseError> {
        s.parse().map_err(|_| bad(format!("{what} must be a RxC pair of unsigned integers, got '{text}'")))
    };
    let (r, c) = (parse(r)?, parse(c)?);
    if r < min || c < min {
        return Err(err(line, tok.column, ParseErrorKind::BadInteger, format!("{what} components must be >= {min}")));
    }
    Ok((r, c))
}

fn parse_bool(line: usize, tok: Token<'_>, text: &str, what: &str) -> Result<bool, ParseError> {
    match text {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(err(line, tok.column, ParseErrorKind::UnknownKeyword, format!("{what} must be true or false, got '{text}'"))),
    }
}

/// Parses `activation=`/`alpha=` fields shared by conv2d, dense, and
/// standalone activation lines.
fn parse_activation(fields: &mut Fields<'_>, line: usize) -> Result<Activation, ParseError> {
    let act = fields.take("activation");
    let alpha = fields.take("alpha");
    build_activation(line, act, alpha)
}

fn build_activation<'a>(
    line: usize,
    act: Option<(Token<'a>, &'a str)>,
    alpha: Option<(Token<'a>, &'a str)>,
) -> Result<Activation, ParseError> {
    let kind = match act {
        None => "none",
        Some((_, v)) => v,
    };
    match kind {
        "none" | "relu" => {
            if let Some((tok, _)) = alpha {
                return Err(err(line, tok.column, ParseErrorKind::UnknownKeyword, "alpha requires activation=leaky_relu"));
            }
            Ok(if kind == "none" { Activation::None } else { Activation::Relu })
        }
        "leaky_relu" => {
            let alpha = match alpha {
                Some((tok, v)) => parse_real(line, tok, v, "alpha")?,
                None => Activation::DEFAULT_ALPHA,
            };
            Ok(Activation::LeakyRelu { alpha })
        }
        other => {
            let col = act.map(|(t, _)| t.column).unwrap_or(1);
            Err(err(line, col, ParseErrorKind::UnknownKeyword, format!("unknown activation '{other}'")))
        }
    }
}

fn parse_identifier<'a>(line: usize, keyword: &str, tokens: &[Token<'a>]) -> Result<&'a str, ParseError> {
    let Some(tok) = tokens.first() else {
        return Err(err(line, 1, ParseErrorKind::MissingField, format!("{keyword} requires an identifier")));
    };
    if tokens.len() > 1 {
        let extra = tokens[1];
        return Err(err(line, extra.column, ParseErrorKind::UnknownKeyword, format!("unexpected token '{}'", extra.text)));
    }
    if !is_identifier(tok.text) {
        return Err(err(line, tok.column, ParseErrorKind::UnknownKeyword, format!("'{}' is not a valid identifier", tok.text)));
    }
    Ok(tok.text)
}

/// Parses a model description into a validated graph.
///
/// Total: every input yields either a graph that passes validation or a
/// positioned error.
pub fn parse_model(text: &str) -> Result<ModelGraph, DslError> {
    let mut name: Option<String> = None;
    let mut name_line = 1usize;
    let mut layers: Vec<LayerSpec> = Vec::new();
    let mut layer_lines: Vec<usize> = Vec::new();

    for (line_idx, raw) in text.lines().enumerate() {
        let line = line_idx + 1;
        let content = strip_comment(raw);
        let tokens = tokenize(content);
        let Some(keyword) = tokens.first().copied() else { continue };
        let rest = &tokens[1..];

        if keyword.text == "model" {
            if name.is_some() {
                return Err(err(line, keyword.column, ParseErrorKind::DuplicateField, "duplicate model header").into());
            }
            if !layers.is_empty() {
                return Err(err(line, keyword.column, ParseErrorKind::UnknownKeyword, "model header must precede all layers").into());
            }
            name = Some(parse_model_name(line, content, keyword)?);
            name_line = line;
            continue;
        }

        let layer = parse_layer(line, keyword, rest)?;
        layers.push(layer);
        layer_lines.push(line);
    }

    let graph = ModelGraph::new_unchecked(name.unwrap_or_default(), layers);
    if let Err(source) = validate_graph(&graph) {
        let line = source
            .layer_index()
            .and_then(|i| layer_lines.get(i).copied())
            .unwrap_or(name_line);
        return Err(DslError::Validation { line, source });
    }
    Ok(graph)
}

fn parse_model_name(line: usize, content: &str, keyword: Token<'_>) -> Result<String, ParseError> {
    let missing = || err(line, keyword.column, ParseErrorKind::MissingField, "model header requires a quoted name: model \"<name>\"");
    let open = content.find('"').ok_or_else(missing)?;
    let close = content.rfind('"').filter(|c| *c > open).ok_or_else(missing)?;
    let after = content[close + 1..].trim();
    if !after.is_empty() {
        return Err(err(line, close + 2, ParseErrorKind::UnknownKeyword, format!("unexpected token '{after}' after model name")));
    }
    let between = content[keyword.column - 1 + keyword.text.len()..open].trim();
    if !between.is_empty() {
        return Err(err(line, keyword.column + keyword.text.len(), ParseErrorKind::UnknownKeyword, format!("unexpected token '{between}' before model name")));
    }
    Ok(content[open + 1..close].to_string())
}

fn parse_layer(line: usize, keyword: Token<'_>, rest: &[Token<'_>]) -> Result<LayerSpec, ParseError> {
    match keyword.text {
        "input" => {
            let mut dims = [0usize; 3];
            let names = ["rows", "cols", "channels"];
            for (i, name) in names.iter().enumerate() {
                let Some(tok) = rest.get(i) else {
                    return Err(err(line, 1, ParseErrorKind::MissingField, format!("input requires {name}")));
                };
                dims[i] = parse_uint(line, *tok, tok.text, name, 1)?;
            }
            if let Some(extra) = rest.get(3) {
                return Err(err(line, extra.column, ParseErrorKind::UnknownKeyword, format!("unexpected token '{}'", extra.text)));
            }
            Ok(LayerSpec::Input { shape: TensorShape::new(dims[0], dims[1], dims[2]) })
        }
        "conv2d" => {
            let mut f = Fields::collect("conv2d", line, rest)?;
            let (ftok, fval) = f.require("filters")?;
            let filters = parse_uint(line, ftok, fval, "filters", 1)?;
            let (ktok, kval) = f.require("kernel")?;
            let (k_rows, k_cols) = parse_pair(line, ktok, kval, "kernel", 1)?;
            let (s_rows, s_cols) = match f.take("stride") {
                Some((tok, v)) => parse_pair(line, tok, v, "stride", 1)?,
                None => (1, 1),
            };
            let (p_rows, p_cols) = match f.take("pad") {
                Some((tok, v)) => parse_pair(line, tok, v, "pad", 0)?,
                None => (0, 0),
            };
            let activation = parse_activation(&mut f, line)?;
            let bias = match f.take("bias") {
                Some((tok, v)) => parse_bool(line, tok, v, "bias")?,
                None => true,
            };
            f.finish()?;
            Ok(LayerSpec::Conv2D {
                filters,
                geom: KernelGeometry::new(k_rows, k_cols, s_rows, s_cols).with_padding(p_rows, p_cols),
                activation,
                bias,
            })
        }
        "maxpool" | "avgpool" => {
            let kind = if keyword.text == "maxpool" { PoolKind::Max } else { PoolKind::Avg };
            let mut f = Fields::collect(keyword.text, line, rest)?;
            let (ktok, kval) = f.require("kernel")?;
            let (k_rows, k_cols) = parse_pair(line, ktok, kval, "kernel", 1)?;
            let (s_rows, s_cols) = match f.take("stride") {
                Some((tok, v)) => parse_pair(line, tok, v, "stride", 1)?,
                None => (k_rows, k_cols),
            };
            f.finish()?;
            Ok(LayerSpec::Pool { kind, geom: KernelGeometry::new(k_rows, k_cols, s_rows, s_cols) })
        }
        "dense" => {
            let mut f = Fields::collect("dense", line, rest)?;
            let (utok, uval) = f.require("units")?;
            let units = parse_uint(line, utok, uval, "units", 1)?;
            let activation = parse_activation(&mut f, line)?;
            let bias = match f.take("bias") {
                Some((tok, v)) => parse_bool(line, tok, v, "bias")?,
                None => true,
            };
            f.finish()?;
            Ok(LayerSpec::Dense { units, activation, bias })
        }
        "batchnorm" | "flatten" | "globalavgpool" => {
            if let Some(extra) = rest.first() {
                return Err(err(line, extra.column, ParseErrorKind::UnknownKeyword, format!("unexpected token '{}'", extra.text)));
            }
            Ok(match keyword.text {
                "batchnorm" => LayerSpec::BatchNorm,
                "flatten" => LayerSpec::Flatten,
                _ => LayerSpec::GlobalAvgPool,
            })
        }
        "label" => Ok(LayerSpec::Label { label: parse_identifier(line, "label", rest)?.to_string() }),
        "addfrom" => Ok(LayerSpec::AddFrom { label: parse_identifier(line, "addfrom", rest)?.to_string() }),
        "route" => Ok(LayerSpec::Route { label: parse_identifier(line, "route", rest)?.to_string() }),
        "activation" => {
            let Some(kind) = rest.first() else {
                return Err(err(line, 1, ParseErrorKind::MissingField, "activation requires a kind"));
            };
            let mut f = Fields::collect("activation", line, &rest[1..])?;
            let alpha = f.take("alpha");
            f.finish()?;
            let activation = build_activation(line, Some((*kind, kind.text)), alpha)?;
            Ok(LayerSpec::ActivationOnly { activation })
        }
        "resblock" => {
            let mut f = Fields::collect("resblock", line, rest)?;
            let (ftok, fval) = f.require("filters")?;
            let filters = parse_uint(line, ftok, fval, "filters", 1)?;
            let downsample = match f.take("downsample") {
                Some((tok, v)) => parse_bool(line, tok, v, "downsample")?,
                None => false,
            };
            f.finish()?;
            Ok(LayerSpec::ResBlock { filters, downsample })
        }
        other => Err(err(line, keyword.column, ParseErrorKind::UnknownKeyword, format!("unknown keyword '{other}'"))),
    }
}

fn push_activation(out: &mut String, activation: &Activation) {
    match activation {
        Activation::None => {}
        Activation::Relu => out.push_str(" activation=relu"),
        Activation::LeakyRelu { alpha } => {
            out.push_str(" activation=leaky_relu alpha=");
            out.push_str(&alpha.to_string());
        }
    }
}

fn push_pair(out: &mut String, key: &str, r: usize, c: usize) {
    out.push(' ');
    out.push_str(key);
    out.push('=');
    out.push_str(&r.to_string());
    out.push('x');
    out.push_str(&c.to_string());
}

/// Serializes a graph to canonical text: header first, one layer per line,
/// LF separators, no trailing newline, default-valued fields omitted.
pub fn serialize_model(g: &ModelGraph) -> String {
    let mut lines: Vec<String> = Vec::with_capacity(g.layers.len() + 1);
    lines.push(format!("model \"{}\"", g.name));
    for layer in &g.layers {
        lines.push(serialize_layer(layer));
    }
    lines.join("\n")
}

fn serialize_layer(layer: &LayerSpec) -> String {
    let mut out = String::new();
    match layer {
        LayerSpec::Input { shape } => {
            out.push_str(&format!("input {} {} {}", shape.rows, shape.cols, shape.channels));
        }
        LayerSpec::Conv2D { filters, geom, activation, bias } => {
            out.push_str(&format!("conv2d filters={filters}"));
            push_pair(&mut out, "kernel", geom.k_rows, geom.k_cols);
            if (geom.s_rows, geom.s_cols) != (1, 1) {
                push_pair(&mut out, "stride", geom.s_rows, geom.s_cols);
            }
            if geom.has_padding() {
                push_pair(&mut out, "pad", geom.p_rows, geom.p_cols);
            }
            push_activation(&mut out, activation);
            if !bias {
                out.push_str(" bias=false");
            }
        }
        LayerSpec::Pool { kind, geom } => {
            out.push_str(match kind {
                PoolKind::Max => "maxpool",
                PoolKind::Avg => "avgpool",
            });
            push_pair(&mut out, "kernel", geom.k_rows, geom.k_cols);
            if (geom.s_rows, geom.s_cols) != (geom.k_rows, geom.k_cols) {
                push_pair(&mut out, "stride", geom.s_rows, geom.s_cols);
            }
        }
        LayerSpec::Dense { units, activation, bias } => {
            out.push_str(&format!("dense units={units}"));
            push_activation(&mut out, activation);
            if !bias {
                out.push_str(" bias=false");
            }
        }
        LayerSpec::BatchNorm => out.push_str("batchnorm"),
        LayerSpec::Flatten => out.push_str("flatten"),
        LayerSpec::GlobalAvgPool => out.push_str("globalavgpool"),
        LayerSpec::AddFrom { label } => out.push_str(&format!("addfrom {label}")),
        LayerSpec::Label { label } => out.push_str(&format!("label {label}")),
        LayerSpec::Route { label } => out.push_str(&format!("route {label}")),
        LayerSpec::ActivationOnly { activation } => match activation {
            Activation::None => out.push_str("activation none"),
            Activation::Relu => out.push_str("activation relu"),
            Activation::LeakyRelu { alpha } => {
                out.push_str(&format!("activation leaky_relu alpha={alpha}"));
            }
        },
        LayerSpec::ResBlock { filters, downsample } => {
            out.push_str(&format!("resblock filters={filters}"));
            if *downsample {
                out.push_str(" downsample=true");
            }
        }
    }
    out
}
