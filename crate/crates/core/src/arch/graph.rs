//! Executable model graphs.
//!
//! A [`ModelGraph`] is a topologically ordered list of primitive layers. Each
//! node names its inputs by index, so the add/concat/slice wiring of the
//! stride-1 blocks is explicit in the graph. Backward runs the nodes in
//! reverse and accumulates gradients into each node's inputs in a fixed order.

use std::fmt;

use crate::arch::block::BlockSpec;
use crate::arch::config::NetworkConfig;
use crate::error::{Error, Result};
use crate::ops::{
    batch_norm, batch_norm_backward, channel_shuffle, channel_shuffle_backward, fully_connected,
    fully_connected_backward, group_conv2d_backward, group_conv2d_forward, relu, relu_backward, BatchNormParams,
    BnCache, BnMode, ConvParams, LinearParams,
};
use crate::tensor::{add_elementwise, concat_channels, slice_channels, Scalar, Shape, Tensor};

pub type NodeId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

impl Mode {
    fn bn(self) -> BnMode {
        match self {
            Mode::Train => BnMode::Train,
            Mode::Infer => BnMode::Infer,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelFamily {
    HeNet,
    ShuffleNet,
}

impl ModelFamily {
    pub fn name(self) -> &'static str {
        match self {
            ModelFamily::HeNet => "henet",
            ModelFamily::ShuffleNet => "shufflenet",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "henet" => Some(ModelFamily::HeNet),
            "shufflenet" => Some(ModelFamily::ShuffleNet),
            _ => None,
        }
    }
}

impl fmt::Display for ModelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer<T = f32> {
    Input,
    Conv(ConvParams<T>),
    BatchNorm(BatchNormParams<T>),
    Relu,
    Shuffle {
        groups: usize,
    },
    Slice {
        lo: usize,
        hi: usize,
    },
    Add,
    Concat,
    /// Flattens its input, then applies a fully connected layer.
    Linear(LinearParams<T>),
}

impl<T: Scalar> Layer<T> {
    pub fn kind(&self) -> LayerKind {
        match self {
            Layer::Input => LayerKind::Input,
            Layer::Conv(_) => LayerKind::Conv,
            Layer::BatchNorm(_) => LayerKind::BatchNorm,
            Layer::Relu => LayerKind::Relu,
            Layer::Shuffle { .. } => LayerKind::Shuffle,
            Layer::Slice { .. } => LayerKind::Slice,
            Layer::Add => LayerKind::Add,
            Layer::Concat => LayerKind::Concat,
            Layer::Linear(_) => LayerKind::Linear,
        }
    }

    fn arity(&self) -> usize {
        match self {
            Layer::Input => 0,
            Layer::Add | Layer::Concat => 2,
            _ => 1,
        }
    }

    fn cast<U: Scalar>(&self) -> Layer<U> {
        match self {
            Layer::Input => Layer::Input,
            Layer::Conv(p) => Layer::Conv(ConvParams {
                in_channels: p.in_channels,
                out_channels: p.out_channels,
                kernel: p.kernel,
                stride: p.stride,
                padding: p.padding,
                groups: p.groups,
                weight: p.weight.cast(),
                bias: p.bias.as_ref().map(Tensor::cast),
            }),
            Layer::BatchNorm(p) => Layer::BatchNorm(BatchNormParams {
                channels: p.channels,
                gamma: p.gamma.cast(),
                beta: p.beta.cast(),
                running_mean: p.running_mean.cast(),
                running_var: p.running_var.cast(),
                epsilon: p.epsilon,
                momentum: p.momentum,
            }),
            Layer::Relu => Layer::Relu,
            Layer::Shuffle { groups } => Layer::Shuffle { groups: *groups },
            Layer::Slice { lo, hi } => Layer::Slice { lo: *lo, hi: *hi },
            Layer::Add => Layer::Add,
            Layer::Concat => Layer::Concat,
            Layer::Linear(p) => Layer::Linear(LinearParams {
                in_features: p.in_features,
                out_features: p.out_features,
                weight: p.weight.cast(),
                bias: p.bias.cast(),
            }),
        }
    }

    /// Output shape for the given input shapes, validating arity and compatibility.
    pub fn output_shape(&self, inputs: &[Shape]) -> Result<Shape> {
        if inputs.len() != self.arity() {
            return Err(Error::Build(format!(
                "{} layer takes {} inputs, got {}",
                self.kind(),
                self.arity(),
                inputs.len()
            )));
        }
        match self {
            Layer::Input => unreachable!("input shape is declared, not derived"),
            Layer::Conv(p) => {
                if inputs[0].c != p.in_channels {
                    return Err(Error::ShapeMismatch {
                        op: "conv",
                        left: inputs[0],
                        right: inputs[0].with_channels(p.in_channels),
                    });
                }
                p.output_shape(inputs[0])
            }
            Layer::BatchNorm(p) => {
                if inputs[0].c != p.channels {
                    return Err(Error::ShapeMismatch {
                        op: "batch_norm",
                        left: inputs[0],
                        right: inputs[0].with_channels(p.channels),
                    });
                }
                Ok(inputs[0])
            }
            Layer::Relu => Ok(inputs[0]),
            Layer::Shuffle { groups } => {
                if *groups == 0 || !inputs[0].c.is_multiple_of(*groups) {
                    return Err(Error::Build(format!(
                        "shuffle groups {groups} do not divide {} channels",
                        inputs[0].c
                    )));
                }
                Ok(inputs[0])
            }
            Layer::Slice { lo, hi } => {
                if lo > hi || *hi > inputs[0].c {
                    return Err(Error::Build(format!(
                        "slice {lo}..{hi} out of range for {} channels",
                        inputs[0].c
                    )));
                }
                Ok(inputs[0].with_channels(hi - lo))
            }
            Layer::Add => {
                if inputs[0] != inputs[1] {
                    return Err(Error::ShapeMismatch {
                        op: "add",
                        left: inputs[0],
                        right: inputs[1],
                    });
                }
                Ok(inputs[0])
            }
            Layer::Concat => {
                let (a, b) = (inputs[0], inputs[1]);
                if a.n != b.n || a.h != b.h || a.w != b.w {
                    return Err(Error::ShapeMismatch {
                        op: "concat",
                        left: a,
                        right: b,
                    });
                }
                Ok(a.with_channels(a.c + b.c))
            }
            Layer::Linear(p) => {
                if inputs[0].sample_len() != p.in_features {
                    return Err(Error::Build(format!(
                        "fully connected layer expects {} features, input {} has {}",
                        p.in_features,
                        inputs[0],
                        inputs[0].sample_len()
                    )));
                }
                Ok(Shape::new(inputs[0].n, p.out_features, 1, 1))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LayerKind {
    Input,
    Conv,
    BatchNorm,
    Relu,
    Shuffle,
    Slice,
    Add,
    Concat,
    Linear,
}

impl LayerKind {
    pub fn name(self) -> &'static str {
        match self {
            LayerKind::Input => "input",
            LayerKind::Conv => "conv",
            LayerKind::BatchNorm => "batchnorm",
            LayerKind::Relu => "relu",
            LayerKind::Shuffle => "shuffle",
            LayerKind::Slice => "slice",
            LayerKind::Add => "add",
            LayerKind::Concat => "concat",
            LayerKind::Linear => "fc",
        }
    }

    /// Whether the layer owns trainable weights (conv or fully connected).
    pub fn is_weighted(self) -> bool {
        matches!(self, LayerKind::Conv | LayerKind::Linear)
    }
}

impl fmt::Display for LayerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node<T = f32> {
    pub name: String,
    pub layer: Layer<T>,
    pub inputs: Vec<NodeId>,
    /// Output shape for a batch of one.
    pub output: Shape,
}

/// Where a block sits in the graph, including its skip-connection checkpoints.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockRecord {
    pub name: String,
    pub stage: usize,
    pub spec: Option<BlockSpec>,
    pub input: NodeId,
    pub output: NodeId,
    /// Node producing the block transform `h` (stride-1 blocks).
    pub transform: Option<NodeId>,
    /// Node producing the running sum `X⁺` (stride-1 blocks).
    pub running_sum: Option<NodeId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    ConvWeight,
    ConvBias,
    BnGamma,
    BnBeta,
    FcWeight,
    FcBias,
}

impl ParamKind {
    pub fn is_batch_norm(self) -> bool {
        matches!(self, ParamKind::BnGamma | ParamKind::BnBeta)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamInfo {
    pub name: String,
    pub kind: ParamKind,
    pub node: NodeId,
    pub shape: Shape,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelGraph<T = f32> {
    pub(crate) family: ModelFamily,
    pub(crate) config: NetworkConfig,
    pub(crate) nodes: Vec<Node<T>>,
    pub(crate) blocks: Vec<BlockRecord>,
    /// Per-channel mean subtracted from inputs in `[0, 1]` units.
    pub(crate) input_mean: Vec<f32>,
}

/// Every intermediate value of one forward pass, kept for backward.
#[derive(Debug, Clone)]
pub struct Activations<T = f32> {
    pub mode: Mode,
    pub values: Vec<Tensor<T>>,
    pub(crate) bn: Vec<Option<BnCache<T>>>,
}

impl<T: Scalar> Activations<T> {
    pub fn value(&self, id: NodeId) -> &Tensor<T> {
        &self.values[id]
    }

    pub fn scores(&self) -> &Tensor<T> {
        self.values.last().expect("non-empty graph")
    }
}

/// Gradients aligned with [`ModelGraph::param_infos`].
#[derive(Debug, Clone)]
pub struct Gradients<T = f32> {
    pub params: Vec<Tensor<T>>,
    pub input: Tensor<T>,
}

fn accumulate<T: Scalar>(slot: &mut Option<Tensor<T>>, g: Tensor<T>) -> Result<()> {
    match slot {
        Some(t) => t.add_assign(&g),
        None => {
            *slot = Some(g);
            Ok(())
        }
    }
}

impl<T: Scalar> ModelGraph<T> {
    pub fn family(&self) -> ModelFamily {
        self.family
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn nodes(&self) -> &[Node<T>] {
        &self.nodes
    }

    pub fn blocks(&self) -> &[BlockRecord] {
        &self.blocks
    }

    pub fn input_mean(&self) -> &[f32] {
        &self.input_mean
    }

    pub fn set_input_mean(&mut self, mean: Vec<f32>) -> Result<()> {
        if mean.len() != self.config.input_channels {
            return Err(Error::invalid(
                "set_input_mean",
                format!("{} means for {} input channels", mean.len(), self.config.input_channels),
            ));
        }
        self.input_mean = mean;
        Ok(())
    }

    /// Input shape for a batch of one.
    pub fn input_shape(&self) -> Shape {
        self.nodes[0].output
    }

    pub fn num_classes(&self) -> usize {
        self.nodes.last().map_or(0, |n| n.output.c)
    }

    pub fn cast<U: Scalar>(&self) -> ModelGraph<U> {
        ModelGraph {
            family: self.family,
            config: self.config.clone(),
            nodes: self
                .nodes
                .iter()
                .map(|n| Node {
                    name: n.name.clone(),
                    layer: n.layer.cast(),
                    inputs: n.inputs.clone(),
                    output: n.output,
                })
                .collect(),
            blocks: self.blocks.clone(),
            input_mean: self.input_mean.clone(),
        }
    }

    /// Re-derives every node's shape from its inputs and checks the graph is topologically ordered.
    pub fn validate(&self) -> Result<()> {
        if !matches!(self.nodes.first().map(|n| &n.layer), Some(Layer::Input)) {
            return Err(Error::Build("graph must start with its input node".into()));
        }
        for (id, node) in self.nodes.iter().enumerate().skip(1) {
            if node.inputs.iter().any(|&i| i >= id) {
                return Err(Error::Build(format!("node {} reads a later node", node.name)));
            }
            let shapes: Vec<Shape> = node.inputs.iter().map(|&i| self.nodes[i].output).collect();
            let derived = node.layer.output_shape(&shapes)?;
            if derived != node.output {
                return Err(Error::Build(format!(
                    "node {} declares {} but computes {}",
                    node.name, node.output, derived
                )));
            }
        }
        Ok(())
    }

    pub fn param_infos(&self) -> Vec<ParamInfo> {
        let mut out = Vec::new();
        for (id, node) in self.nodes.iter().enumerate() {
            let mut push = |suffix: &str, kind, shape| {
                out.push(ParamInfo {
                    name: format!("{}.{suffix}", node.name),
                    kind,
                    node: id,
                    shape,
                })
            };
            match &node.layer {
                Layer::Conv(p) => {
                    push("weight", ParamKind::ConvWeight, p.weight.shape());
                    if let Some(b) = &p.bias {
                        push("bias", ParamKind::ConvBias, b.shape());
                    }
                }
                Layer::BatchNorm(p) => {
                    push("gamma", ParamKind::BnGamma, p.gamma.shape());
                    push("beta", ParamKind::BnBeta, p.beta.shape());
                }
                Layer::Linear(p) => {
                    push("weight", ParamKind::FcWeight, p.weight.shape());
                    push("bias", ParamKind::FcBias, p.bias.shape());
                }
                _ => {}
            }
        }
        out
    }

    /// Trainable tensors in [`Self::param_infos`] order.
    pub fn params(&self) -> Vec<&Tensor<T>> {
        let mut out = Vec::new();
        for node in &self.nodes {
            match &node.layer {
                Layer::Conv(p) => {
                    out.push(&p.weight);
                    out.extend(p.bias.as_ref());
                }
                Layer::BatchNorm(p) => out.extend([&p.gamma, &p.beta]),
                Layer::Linear(p) => out.extend([&p.weight, &p.bias]),
                _ => {}
            }
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out = Vec::new();
        for node in &mut self.nodes {
            match &mut node.layer {
                Layer::Conv(p) => {
                    out.push(&mut p.weight);
                    out.extend(p.bias.as_mut());
                }
                Layer::BatchNorm(p) => out.extend([&mut p.gamma, &mut p.beta]),
                Layer::Linear(p) => out.extend([&mut p.weight, &mut p.bias]),
                _ => {}
            }
        }
        out
    }

    /// Non-trainable state (batch-norm running statistics), named like parameters.
    pub fn buffers(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out = Vec::new();
        for node in &self.nodes {
            if let Layer::BatchNorm(p) = &node.layer {
                out.push((format!("{}.running_mean", node.name), &p.running_mean));
                out.push((format!("{}.running_var", node.name), &p.running_var));
            }
        }
        out
    }

    pub fn buffers_mut(&mut self) -> Vec<(String, &mut Tensor<T>)> {
        let mut out = Vec::new();
        for node in &mut self.nodes {
            if let Layer::BatchNorm(p) = &mut node.layer {
                out.push((format!("{}.running_mean", node.name), &mut p.running_mean));
                out.push((format!("{}.running_var", node.name), &mut p.running_var));
            }
        }
        out
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<()> {
        let want = self.input_shape();
        let got = x.shape();
        if got.c != want.c || got.h != want.h || got.w != want.w || got.n == 0 {
            return Err(Error::ShapeMismatch {
                op: "forward_model input",
                left: got,
                right: want.with_batch(got.n.max(1)),
            });
        }
        Ok(())
    }

    fn eval_node(&self, id: NodeId, inputs: &[&Tensor<T>], mode: Mode) -> Result<(Tensor<T>, Option<BnCache<T>>)> {
        let node = &self.nodes[id];
        let out = match &node.layer {
            Layer::Input => unreachable!("input handled by caller"),
            Layer::Conv(p) => group_conv2d_forward(inputs[0], p)?,
            Layer::BatchNorm(p) => {
                let (y, cache) = batch_norm(inputs[0], p, mode.bn())?;
                return Ok((y, Some(cache)));
            }
            Layer::Relu => relu(inputs[0]),
            Layer::Shuffle { groups } => channel_shuffle(inputs[0], *groups)?,
            Layer::Slice { lo, hi } => slice_channels(inputs[0], *lo, *hi)?,
            Layer::Add => add_elementwise(inputs[0], inputs[1])?,
            Layer::Concat => concat_channels(inputs[0], inputs[1])?,
            Layer::Linear(p) => fully_connected(inputs[0], p)?,
        };
        Ok((out, None))
    }

    /// Scores `(N, K, 1, 1)` for a batch; intermediate values are dropped after their last use.
    pub fn forward(&self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        self.check_input(x)?;
        let mut last_use = vec![0usize; self.nodes.len()];
        for (id, node) in self.nodes.iter().enumerate() {
            for &i in &node.inputs {
                last_use[i] = id;
            }
        }
        let mut values: Vec<Option<Tensor<T>>> = vec![None; self.nodes.len()];
        values[0] = Some(x.clone());
        for id in 1..self.nodes.len() {
            let node = &self.nodes[id];
            let (out, _) = {
                let inputs: Vec<&Tensor<T>> = node
                    .inputs
                    .iter()
                    .map(|&i| values[i].as_ref().expect("value alive until last use"))
                    .collect();
                self.eval_node(id, &inputs, mode)?
            };
            values[id] = Some(out);
            for &i in &node.inputs {
                if last_use[i] == id {
                    values[i] = None;
                }
            }
        }
        Ok(values.pop().flatten().expect("graph ends in the score node"))
    }

    /// Forward pass keeping every intermediate value.
    pub fn forward_trace(&self, x: &Tensor<T>, mode: Mode) -> Result<Activations<T>> {
        self.check_input(x)?;
        let mut values = Vec::with_capacity(self.nodes.len());
        let mut bn = Vec::with_capacity(self.nodes.len());
        values.push(x.clone());
        bn.push(None);
        for id in 1..self.nodes.len() {
            let inputs: Vec<&Tensor<T>> = self.nodes[id].inputs.iter().map(|&i| &values[i]).collect();
            let (out, cache) = self.eval_node(id, &inputs, mode)?;
            values.push(out);
            bn.push(cache);
        }
        Ok(Activations { mode, values, bn })
    }

    /// Reverse pass from `grad_scores` (shaped like the scores).
    pub fn backward(&self, acts: &Activations<T>, grad_scores: &Tensor<T>) -> Result<Gradients<T>> {
        let count = self.nodes.len();
        if acts.values.len() != count {
            return Err(Error::invalid("backward", "activations do not belong to this graph"));
        }
        if grad_scores.shape() != acts.scores().shape() {
            return Err(Error::ShapeMismatch {
                op: "backward",
                left: grad_scores.shape(),
                right: acts.scores().shape(),
            });
        }
        // first parameter slot of every node
        let mut param_base = Vec::with_capacity(count);
        let mut total = 0;
        for node in &self.nodes {
            param_base.push(total);
            total += match &node.layer {
                Layer::Conv(p) => 1 + usize::from(p.bias.is_some()),
                Layer::BatchNorm(_) | Layer::Linear(_) => 2,
                _ => 0,
            };
        }
        let mut param_grads: Vec<Option<Tensor<T>>> = vec![None; total];
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; count];
        grads[count - 1] = Some(grad_scores.clone());

        for id in (1..count).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &self.nodes[id];
            let x = |k: usize| &acts.values[node.inputs[k]];
            let base = param_base[id];
            match &node.layer {
                Layer::Input => unreachable!(),
                Layer::Conv(p) => {
                    let r = group_conv2d_backward(x(0), p, &g)?;
                    param_grads[base] = Some(r.grad_weight);
                    if let Some(gb) = r.grad_bias {
                        param_grads[base + 1] = Some(gb);
                    }
                    accumulate(&mut grads[node.inputs[0]], r.grad_input)?;
                }
                Layer::BatchNorm(p) => {
                    let cache = acts.bn[id].as_ref().expect("batch norm cache recorded");
                    let r = batch_norm_backward(x(0), p, cache, &g)?;
                    param_grads[base] = Some(r.grad_gamma);
                    param_grads[base + 1] = Some(r.grad_beta);
                    accumulate(&mut grads[node.inputs[0]], r.grad_input)?;
                }
                Layer::Relu => {
                    let gx = relu_backward(&acts.values[id], &g)?;
                    accumulate(&mut grads[node.inputs[0]], gx)?;
                }
                Layer::Shuffle { groups } => {
                    accumulate(&mut grads[node.inputs[0]], channel_shuffle_backward(&g, *groups)?)?;
                }
                Layer::Slice { lo, hi: _ } => {
                    let xs = x(0).shape();
                    let plane = xs.plane();
                    let mut gx = Tensor::zeros(xs);
                    let gs = g.shape();
                    for n in 0..xs.n {
                        let dst = (n * xs.c + lo) * plane;
                        gx.data_mut()[dst..dst + gs.sample_len()].copy_from_slice(g.sample(n));
                    }
                    accumulate(&mut grads[node.inputs[0]], gx)?;
                }
                Layer::Add => {
                    accumulate(&mut grads[node.inputs[0]], g.clone())?;
                    accumulate(&mut grads[node.inputs[1]], g)?;
                }
                Layer::Concat => {
                    let split = x(0).shape().c;
                    let c = g.shape().c;
                    let left = slice_channels(&g, 0, split)?;
                    let right = slice_channels(&g, split, c)?;
                    accumulate(&mut grads[node.inputs[0]], left)?;
                    accumulate(&mut grads[node.inputs[1]], right)?;
                }
                Layer::Linear(p) => {
                    let r = fully_connected_backward(x(0), p, &g)?;
                    param_grads[base] = Some(r.grad_weight);
                    param_grads[base + 1] = Some(r.grad_bias);
                    accumulate(&mut grads[node.inputs[0]], r.grad_input)?;
                }
            }
        }
        let params = self
            .params()
            .into_iter()
            .zip(param_grads)
            .map(|(p, g)| g.unwrap_or_else(|| Tensor::zeros(p.shape())))
            .collect();
        let input = grads[0].take().unwrap_or_else(|| Tensor::zeros(acts.values[0].shape()));
        Ok(Gradients { params, input })
    }

    /// Fold the batch statistics from a train-mode pass into every batch-norm's running averages.
    pub fn commit_batch_stats(&mut self, acts: &Activations<T>) {
        if acts.mode != Mode::Train {
            return;
        }
        for (node, cache) in self.nodes.iter_mut().zip(&acts.bn) {
            if let (Layer::BatchNorm(p), Some(c)) = (&mut node.layer, cache) {
                p.update_running_stats(c);
            }
        }
    }

    /// Output shapes of every block, in order, prefixed by the stem output.
    pub fn block_trace(&self) -> Vec<(String, Shape)> {
        self.blocks
            .iter()
            .map(|b| (b.name.clone(), self.nodes[b.output].output))
            .collect()
    }
}

/// Incremental graph construction with shape checking at every step.
pub(crate) struct GraphBuilder<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> GraphBuilder<T> {
    pub fn new(input: Shape) -> Self {
        GraphBuilder {
            nodes: vec![Node {
                name: "input".into(),
                layer: Layer::Input,
                inputs: vec![],
                output: input.with_batch(1),
            }],
        }
    }

    pub fn shape(&self, id: NodeId) -> Shape {
        self.nodes[id].output
    }

    pub fn push(&mut self, name: impl Into<String>, layer: Layer<T>, inputs: &[NodeId]) -> Result<NodeId> {
        let name = name.into();
        let shapes: Vec<Shape> = inputs.iter().map(|&i| self.nodes[i].output).collect();
        let output = layer
            .output_shape(&shapes)
            .map_err(|e| Error::Build(format!("{name}: {e}")))?;
        self.nodes.push(Node {
            name,
            layer,
            inputs: inputs.to_vec(),
            output,
        });
        Ok(self.nodes.len() - 1)
    }

    pub fn finish(self, family: ModelFamily, config: NetworkConfig, blocks: Vec<BlockRecord>) -> ModelGraph<T> {
        let input_mean = vec![0.0; config.input_channels];
        ModelGraph {
            family,
            config,
            nodes: self.nodes,
            blocks,
            input_mean,
        }
    }
}
