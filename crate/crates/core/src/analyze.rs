//! Static analysis of model graphs: parameter counts, multiply-accumulates,
//! element-wise op counts and shape traces, plus a side-by-side table against
//! the published HENet sizes.
//!
//! Conventions: conv params are `in·out·k²/groups` (+`out` with bias), FC is
//! `D·K + K`, batch norm contributes its trainable `γ, β` (`2·C`) unless
//! excluded; running statistics are tracked separately. Conv MACs are
//! `out_c·(in_c/G)·k²·H_out·W_out` (padded taps included), FC MACs are `D·K`,
//! and FLOPs are `2·MACs`. Batch norm, ReLU, shuffle, add, slice and concat are
//! element ops, reported in their own column and excluded from MACs.

use std::fmt::Write as _;

use crate::arch::{Layer, LayerKind, ModelFamily, ModelGraph};
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Shape};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CountingConvention {
    /// Count batch-norm `γ` and `β` as parameters.
    pub include_bn: bool,
}

impl Default for CountingConvention {
    fn default() -> Self {
        CountingConvention { include_bn: true }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerRow {
    pub name: String,
    pub kind: LayerKind,
    pub output: Shape,
    pub params: u64,
    pub macs: u64,
    pub elementwise: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisReport {
    pub family: ModelFamily,
    pub repeat: usize,
    pub input: Shape,
    pub convention: CountingConvention,
    pub rows: Vec<LayerRow>,
    pub total_params: u64,
    pub total_macs: u64,
    pub total_elementwise: u64,
    /// Batch-norm running mean/var entries (never part of `total_params`).
    pub bn_running: u64,
}

impl AnalysisReport {
    pub fn total_flops(&self) -> u64 {
        2 * self.total_macs
    }

    pub fn mflops(&self) -> f64 {
        self.total_flops() as f64 / 1e6
    }

    pub fn weighted_layers(&self) -> usize {
        self.rows.iter().filter(|r| r.kind.is_weighted()).count()
    }
}

/// Parameters owned by one layer.
pub fn layer_params<T: Scalar>(layer: &Layer<T>, convention: CountingConvention) -> u64 {
    match layer {
        Layer::Conv(p) => {
            let w = (p.in_channels * p.out_channels * p.kernel * p.kernel / p.groups) as u64;
            w + p.bias.as_ref().map_or(0, |_| p.out_channels as u64)
        }
        Layer::BatchNorm(p) if convention.include_bn => 2 * p.channels as u64,
        Layer::Linear(p) => (p.in_features * p.out_features + p.out_features) as u64,
        _ => 0,
    }
}

/// Multiply-accumulates of one layer producing `output`.
pub fn layer_macs<T: Scalar>(layer: &Layer<T>, output: Shape) -> u64 {
    match layer {
        Layer::Conv(p) => {
            (p.out_channels * p.in_per_group() * p.kernel * p.kernel) as u64 * (output.n * output.plane()) as u64
        }
        Layer::Linear(p) => (output.n * p.in_features * p.out_features) as u64,
        _ => 0,
    }
}

fn layer_elementwise<T: Scalar>(layer: &Layer<T>, output: Shape) -> u64 {
    match layer {
        Layer::BatchNorm(_)
        | Layer::Relu
        | Layer::Shuffle { .. }
        | Layer::Add
        | Layer::Slice { .. }
        | Layer::Concat => output.numel() as u64,
        _ => 0,
    }
}

/// Propagate `input` through the graph and count every layer.
pub fn analyze<T: Scalar>(g: &ModelGraph<T>, input: Shape, convention: CountingConvention) -> Result<AnalysisReport> {
    let declared = g.input_shape();
    if input.c != declared.c || input.h != declared.h || input.w != declared.w {
        return Err(Error::ShapeMismatch {
            op: "analyze",
            left: input,
            right: declared.with_batch(input.n),
        });
    }
    let mut shapes = Vec::with_capacity(g.nodes().len());
    let mut rows = Vec::new();
    let mut bn_running = 0;
    for node in g.nodes() {
        let out = match node.layer {
            Layer::Input => input,
            _ => {
                let ins: Vec<Shape> = node.inputs.iter().map(|&i| shapes[i]).collect();
                node.layer.output_shape(&ins)?
            }
        };
        shapes.push(out);
        if let Layer::Input = node.layer {
            continue;
        }
        if let Layer::BatchNorm(p) = &node.layer {
            bn_running += 2 * p.channels as u64;
        }
        rows.push(LayerRow {
            name: node.name.clone(),
            kind: node.layer.kind(),
            output: out,
            params: layer_params(&node.layer, convention),
            macs: layer_macs(&node.layer, out),
            elementwise: layer_elementwise(&node.layer, out),
        });
    }
    Ok(AnalysisReport {
        family: g.family(),
        repeat: g.config().repeat,
        input,
        convention,
        total_params: rows.iter().map(|r| r.params).sum(),
        total_macs: rows.iter().map(|r| r.macs).sum(),
        total_elementwise: rows.iter().map(|r| r.elementwise).sum(),
        rows,
        bn_running,
    })
}

/// Per-layer and total parameter counts.
pub fn count_params<T: Scalar>(g: &ModelGraph<T>, include_bn: bool) -> (Vec<(String, u64)>, u64) {
    let conv = CountingConvention { include_bn };
    let rows: Vec<(String, u64)> = g
        .nodes()
        .iter()
        .filter(|n| !matches!(n.layer, Layer::Input))
        .map(|n| (n.name.clone(), layer_params(&n.layer, conv)))
        .collect();
    let total = rows.iter().map(|r| r.1).sum();
    (rows, total)
}

/// Per-layer and total MACs for `input`.
pub fn count_macs<T: Scalar>(g: &ModelGraph<T>, input: Shape) -> Result<(Vec<(String, u64)>, u64)> {
    let report = analyze(g, input, CountingConvention::default())?;
    let rows: Vec<(String, u64)> = report.rows.iter().map(|r| (r.name.clone(), r.macs)).collect();
    Ok((rows, report.total_macs))
}

fn shape_str(s: Shape) -> String {
    format!("{}x{}x{}x{}", s.n, s.c, s.h, s.w)
}

pub fn render_table(r: &AnalysisReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "model {} repeat {} input {}", r.family, r.repeat, shape_str(r.input));
    let width = r.rows.iter().map(|row| row.name.len()).max().unwrap_or(4).max(5);
    let _ = writeln!(
        s,
        "{:<width$}  {:<9}  {:>14}  {:>8}  {:>10}  {:>10}",
        "layer", "kind", "output", "params", "macs", "elementwise"
    );
    for row in &r.rows {
        let _ = writeln!(
            s,
            "{:<width$}  {:<9}  {:>14}  {:>8}  {:>10}  {:>10}",
            row.name,
            row.kind.name(),
            shape_str(row.output),
            row.params,
            row.macs,
            row.elementwise
        );
    }
    let _ = writeln!(
        s,
        "total params {} (bn {}) | macs {} | flops {} ({:.3} MFLOPs) | elementwise {} | bn running stats {}",
        r.total_params,
        if r.convention.include_bn {
            "included"
        } else {
            "excluded"
        },
        r.total_macs,
        r.total_flops(),
        r.mflops(),
        r.total_elementwise,
        r.bn_running
    );
    s
}

pub fn render_kv(r: &AnalysisReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "model={}", r.family);
    let _ = writeln!(s, "repeat={}", r.repeat);
    let _ = writeln!(s, "input={}", shape_str(r.input));
    let _ = writeln!(s, "convention.include_bn={}", r.convention.include_bn);
    for row in &r.rows {
        let _ = writeln!(s, "layer.{}.kind={}", row.name, row.kind.name());
        let _ = writeln!(s, "layer.{}.output={}", row.name, shape_str(row.output));
        let _ = writeln!(s, "layer.{}.params={}", row.name, row.params);
        let _ = writeln!(s, "layer.{}.macs={}", row.name, row.macs);
        let _ = writeln!(s, "layer.{}.elementwise={}", row.name, row.elementwise);
    }
    let _ = writeln!(s, "total.params={}", r.total_params);
    let _ = writeln!(s, "total.macs={}", r.total_macs);
    let _ = writeln!(s, "total.flops={}", r.total_flops());
    let _ = writeln!(s, "total.mflops={:.3}", r.mflops());
    let _ = writeln!(s, "total.elementwise={}", r.total_elementwise);
    let _ = writeln!(s, "total.bn_running={}", r.bn_running);
    let _ = writeln!(s, "total.weighted_layers={}", r.weighted_layers());
    s
}

/// Published HENet CIFAR-10 sizes: `(repeat, parameters, MFLOPS)`.
pub const REFERENCE_SIZES: [(usize, u64, f64); 3] = [(2, 507_000, 7.3), (3, 641_000, 10.2), (4, 775_000, 13.2)];

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub repeat: usize,
    pub params: u64,
    pub reference_params: u64,
    pub macs: u64,
    pub mflops: f64,
    pub reference_mflops: f64,
}

impl ComparisonRow {
    pub fn params_ratio(&self) -> f64 {
        self.params as f64 / self.reference_params as f64
    }

    pub fn flops_ratio(&self) -> f64 {
        self.mflops / self.reference_mflops
    }

    /// MMACs against the reference column, for readers who suspect it counts MACs.
    pub fn macs_ratio(&self) -> f64 {
        self.macs as f64 / 1e6 / self.reference_mflops
    }
}

/// Pair computed totals with the published ones. Reports for repeats without a
/// published row are skipped. Values are shown side by side, never asserted.
pub fn compare_to_reference(reports: &[AnalysisReport]) -> Vec<ComparisonRow> {
    reports
        .iter()
        .filter_map(|r| {
            let &(repeat, params, mflops) = REFERENCE_SIZES.iter().find(|(rep, _, _)| *rep == r.repeat)?;
            Some(ComparisonRow {
                repeat,
                params: r.total_params,
                reference_params: params,
                macs: r.total_macs,
                mflops: r.mflops(),
                reference_mflops: mflops,
            })
        })
        .collect()
}

pub fn render_comparison_table(rows: &[ComparisonRow]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:>6}  {:>10}  {:>10}  {:>7}  {:>8}  {:>8}  {:>7}  {:>8}  {:>8}",
        "repeat", "params", "published", "ratio", "MFLOPs", "published", "ratio", "MMACs", "ratio"
    );
    for r in rows {
        let _ = writeln!(
            s,
            "{:>6}  {:>10}  {:>10}  {:>7.3}  {:>8.3}  {:>9.1}  {:>7.3}  {:>8.3}  {:>8.3}",
            r.repeat,
            r.params,
            r.reference_params,
            r.params_ratio(),
            r.mflops,
            r.reference_mflops,
            r.flops_ratio(),
            r.macs as f64 / 1e6,
            r.macs_ratio()
        );
    }
    s
}

pub fn render_comparison_kv(rows: &[ComparisonRow]) -> String {
    let mut s = String::new();
    for r in rows {
        let p = format!("compare.repeat{}", r.repeat);
        let _ = writeln!(s, "{p}.params={}", r.params);
        let _ = writeln!(s, "{p}.published_params={}", r.reference_params);
        let _ = writeln!(s, "{p}.params_ratio={:.3}", r.params_ratio());
        let _ = writeln!(s, "{p}.mflops={:.3}", r.mflops);
        let _ = writeln!(s, "{p}.published_mflops={:.1}", r.reference_mflops);
        let _ = writeln!(s, "{p}.mflops_ratio={:.3}", r.flops_ratio());
        let _ = writeln!(s, "{p}.mmacs={:.3}", r.macs as f64 / 1e6);
        let _ = writeln!(s, "{p}.mmacs_ratio={:.3}", r.macs_ratio());
    }
    s
}
