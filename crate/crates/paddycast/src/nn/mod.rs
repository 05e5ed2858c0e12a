//! Minimal tensor/layer engine with exact backpropagation for small tabular
//! regressors. Models are feed-forward DAGs: node 0 is the network input and
//! every later node consumes earlier nodes, which is enough to express plain
//! stacks, dense concatenation blocks, and encoder/decoder heads.
//!
//! Everything is 64-bit; gradients are checked against central finite
//! differences in the test suite.

pub mod serialize;
mod train;

pub use serialize::{ModelContainer, ModelMeta};
pub use train::{
    fit, gradient_check, Dataset, FitLoss, LossKind, Optimizer, TrainConfig, TrainedModel,
};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Dense, contiguous value buffer with a rank <= 3 shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.is_empty() || shape.len() > 3 {
            return Err(Error::Shape(format!("rank {} not in 1..=3", shape.len())));
        }
        let count: usize = shape.iter().product();
        if count != data.len() {
            return Err(Error::Shape(format!(
                "shape {shape:?} needs {count} values, got {}",
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Tensor {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let count = shape.iter().product();
        Tensor {
            shape,
            data: vec![0.0; count],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Pointwise activation functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Sigmoid,
    Silu,
    Tanh,
    Linear,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Sigmoid => 1.0 / (1.0 + (-x).exp()),
            Activation::Silu => x / (1.0 + (-x).exp()),
            Activation::Tanh => x.tanh(),
            Activation::Linear => x,
        }
    }

    /// Derivative with respect to the pre-activation input.
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => {
                let s = 1.0 / (1.0 + (-x).exp());
                s * (1.0 - s)
            }
            Activation::Silu => {
                let s = 1.0 / (1.0 + (-x).exp());
                s + x * s * (1.0 - s)
            }
            Activation::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
            Activation::Linear => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Sigmoid => "sigmoid",
            Activation::Silu => "silu",
            Activation::Tanh => "tanh",
            Activation::Linear => "linear",
        }
    }
}

/// Layer kinds. `Concat` joins all of a node's rank-1 inputs end to end.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerSpec {
    Dense { units: usize },
    Conv1d { filters: usize, kernel: usize, stride: usize },
    Activation(Activation),
    Flatten,
    Concat,
}

/// One node of the model DAG. `inputs` hold node ids; id 0 is the network
/// input, node k (1-based) may only reference ids < k.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeSpec {
    pub layer: LayerSpec,
    pub inputs: Vec<usize>,
}

/// A feed-forward DAG over rank <= 2 intermediate values.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub input_dim: usize,
    pub nodes: Vec<NodeSpec>,
    /// Node id producing the model output.
    pub output: usize,
    /// Optional second head (e.g. a reconstruction of the input).
    pub aux_output: Option<usize>,
}

impl ModelSpec {
    /// Convenience builder for a plain layer stack.
    pub fn sequential(input_dim: usize, layers: Vec<LayerSpec>) -> ModelSpec {
        let nodes: Vec<NodeSpec> = layers
            .into_iter()
            .enumerate()
            .map(|(i, layer)| NodeSpec {
                layer,
                inputs: vec![i],
            })
            .collect();
        let output = nodes.len();
        ModelSpec {
            input_dim,
            nodes,
            output,
            aux_output: None,
        }
    }

    /// Infer the value shape at every node (index 0 = network input),
    /// validating layer/shape compatibility.
    pub fn infer_shapes(&self) -> Result<Vec<Vec<usize>>> {
        if self.input_dim == 0 {
            return Err(Error::Shape("input dimension must be >= 1".into()));
        }
        let mut shapes: Vec<Vec<usize>> = vec![vec![self.input_dim]];
        for (k, node) in self.nodes.iter().enumerate() {
            let id = k + 1;
            if node.inputs.is_empty() || node.inputs.iter().any(|&i| i >= id) {
                return Err(Error::Shape(format!(
                    "node {id} must reference earlier nodes only"
                )));
            }
            let ins: Vec<&Vec<usize>> = node.inputs.iter().map(|&i| &shapes[i]).collect();
            let shape = match &node.layer {
                LayerSpec::Dense { units } => {
                    if *units == 0 {
                        return Err(Error::Shape("dense units must be positive".into()));
                    }
                    if ins.len() != 1 || ins[0].len() != 1 {
                        return Err(Error::Shape(format!(
                            "node {id}: dense expects one rank-1 input"
                        )));
                    }
                    vec![*units]
                }
                LayerSpec::Conv1d {
                    filters,
                    kernel,
                    stride,
                } => {
                    if *filters == 0 || *kernel == 0 || *stride == 0 {
                        return Err(Error::Shape("conv1d dimensions must be positive".into()));
                    }
                    if ins.len() != 1 {
                        return Err(Error::Shape(format!("node {id}: conv1d expects one input")));
                    }
                    let (_, length) = conv_input_dims(ins[0])?;
                    if *kernel > length {
                        return Err(Error::Shape(format!(
                            "node {id}: kernel {kernel} exceeds input length {length}"
                        )));
                    }
                    let out_len = (length - kernel) / stride + 1;
                    vec![*filters, out_len]
                }
                LayerSpec::Activation(_) => {
                    if ins.len() != 1 {
                        return Err(Error::Shape(format!(
                            "node {id}: activation expects one input"
                        )));
                    }
                    ins[0].clone()
                }
                LayerSpec::Flatten => {
                    if ins.len() != 1 {
                        return Err(Error::Shape(format!("node {id}: flatten expects one input")));
                    }
                    vec![ins[0].iter().product()]
                }
                LayerSpec::Concat => {
                    if ins.iter().any(|s| s.len() != 1) {
                        return Err(Error::Shape(format!(
                            "node {id}: concat expects rank-1 inputs"
                        )));
                    }
                    vec![ins.iter().map(|s| s[0]).sum()]
                }
            };
            shapes.push(shape);
        }
        let check_head = |id: usize| -> Result<()> {
            if id == 0 || id > self.nodes.len() {
                return Err(Error::Shape(format!("output node {id} out of range")));
            }
            Ok(())
        };
        check_head(self.output)?;
        if let Some(aux) = self.aux_output {
            check_head(aux)?;
        }
        Ok(shapes)
    }
}

fn conv_input_dims(shape: &[usize]) -> Result<(usize, usize)> {
    match shape.len() {
        1 => Ok((1, shape[0])),
        2 => Ok((shape[0], shape[1])),
        _ => Err(Error::Shape("conv1d input must be rank 1 or 2".into())),
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
struct NodeParams {
    weights: Vec<f64>,
    bias: Vec<f64>,
}

/// A model with materialized parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    spec: ModelSpec,
    shapes: Vec<Vec<usize>>,
    params: Vec<NodeParams>,
}

impl Model {
    /// Initialize parameters with uniform +-sqrt(6/(fan_in+fan_out)) draws
    /// from a seeded generator.
    pub fn init(spec: ModelSpec, seed: u64) -> Result<Model> {
        let shapes = spec.infer_shapes()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::with_capacity(spec.nodes.len());
        for (k, node) in spec.nodes.iter().enumerate() {
            let p = match &node.layer {
                LayerSpec::Dense { units } => {
                    let fan_in = shapes[node.inputs[0]][0];
                    let limit = (6.0 / (fan_in + units) as f64).sqrt();
                    NodeParams {
                        weights: (0..units * fan_in)
                            .map(|_| rng.gen_range(-limit..limit))
                            .collect(),
                        bias: vec![0.0; *units],
                    }
                }
                LayerSpec::Conv1d {
                    filters, kernel, ..
                } => {
                    let (channels, _) = conv_input_dims(&shapes[node.inputs[0]])?;
                    let fan_in = channels * kernel;
                    let fan_out = filters * kernel;
                    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                    NodeParams {
                        weights: (0..filters * channels * kernel)
                            .map(|_| rng.gen_range(-limit..limit))
                            .collect(),
                        bias: vec![0.0; *filters],
                    }
                }
                _ => NodeParams::default(),
            };
            let _ = k;
            params.push(p);
        }
        Ok(Model {
            spec,
            shapes,
            params,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn input_dim(&self) -> usize {
        self.spec.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.shapes[self.spec.output].iter().product()
    }

    pub fn param_count(&self) -> usize {
        self.params
            .iter()
            .map(|p| p.weights.len() + p.bias.len())
            .sum()
    }

    /// Flatten all parameters into one vector (weights then bias, per node).
    pub fn get_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for p in &self.params {
            out.extend_from_slice(&p.weights);
            out.extend_from_slice(&p.bias);
        }
        out
    }

    pub fn set_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::Shape(format!(
                "expected {} parameters, got {}",
                self.param_count(),
                flat.len()
            )));
        }
        let mut cursor = 0;
        for p in &mut self.params {
            let nw = p.weights.len();
            p.weights.copy_from_slice(&flat[cursor..cursor + nw]);
            cursor += nw;
            let nb = p.bias.len();
            p.bias.copy_from_slice(&flat[cursor..cursor + nb]);
            cursor += nb;
        }
        Ok(())
    }

    fn node_forward(&self, k: usize, acts: &[Vec<f64>]) -> Vec<f64> {
        let node = &self.spec.nodes[k];
        let p = &self.params[k];
        match &node.layer {
            LayerSpec::Dense { units } => {
                let x = &acts[node.inputs[0]];
                let fan_in = x.len();
                let mut y = p.bias.clone();
                for (u, yu) in y.iter_mut().enumerate() {
                    let row = &p.weights[u * fan_in..(u + 1) * fan_in];
                    *yu += row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
                }
                debug_assert_eq!(y.len(), *units);
                y
            }
            LayerSpec::Conv1d {
                filters,
                kernel,
                stride,
            } => {
                let in_shape = &self.shapes[node.inputs[0]];
                let (channels, length) = conv_input_dims(in_shape).unwrap();
                let x = &acts[node.inputs[0]];
                let out_len = (length - kernel) / stride + 1;
                let mut y = vec![0.0; filters * out_len];
                for f in 0..*filters {
                    for o in 0..out_len {
                        let mut acc = p.bias[f];
                        for c in 0..channels {
                            for t in 0..*kernel {
                                let w = p.weights[(f * channels + c) * kernel + t];
                                acc += w * x[c * length + o * stride + t];
                            }
                        }
                        y[f * out_len + o] = acc;
                    }
                }
                y
            }
            LayerSpec::Activation(a) => acts[node.inputs[0]].iter().map(|&v| a.apply(v)).collect(),
            LayerSpec::Flatten => acts[node.inputs[0]].clone(),
            LayerSpec::Concat => {
                let mut y = Vec::new();
                for &i in &node.inputs {
                    y.extend_from_slice(&acts[i]);
                }
                y
            }
        }
    }

    /// Activations of every node for one input vector (index 0 = the input).
    pub(crate) fn forward_all(&self, input: &[f64]) -> Result<Vec<Vec<f64>>> {
        if input.len() != self.spec.input_dim {
            return Err(Error::Shape(format!(
                "input length {} does not match model input {}",
                input.len(),
                self.spec.input_dim
            )));
        }
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(self.spec.nodes.len() + 1);
        acts.push(input.to_vec());
        for k in 0..self.spec.nodes.len() {
            let y = self.node_forward(k, &acts);
            acts.push(y);
        }
        Ok(acts)
    }

    /// Deterministic forward pass; no internal state is mutated.
    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        let acts = self.forward_all(input.data())?;
        Ok(Tensor::new(
            self.shapes[self.spec.output].clone(),
            acts[self.spec.output].clone(),
        )?)
    }

    /// Scalar prediction for a rank-1 input; errors if the output is not
    /// a single value.
    pub fn predict_scalar(&self, input: &[f64]) -> Result<f64> {
        let acts = self.forward_all(input)?;
        let out = &acts[self.spec.output];
        if out.len() != 1 {
            return Err(Error::Shape(format!(
                "expected scalar output, got {} values",
                out.len()
            )));
        }
        Ok(out[0])
    }

    /// Backpropagate `seed_grads` (gradients of the loss with respect to the
    /// listed node outputs) and accumulate parameter gradients into
    /// `param_grads` (same flat layout as [`Model::get_params`]).
    pub(crate) fn backward(
        &self,
        acts: &[Vec<f64>],
        seed_grads: &[(usize, Vec<f64>)],
        param_grads: &mut [f64],
    ) {
        let n_nodes = self.spec.nodes.len();
        let mut grads: Vec<Vec<f64>> = acts.iter().map(|a| vec![0.0; a.len()]).collect();
        for (id, g) in seed_grads {
            for (slot, v) in grads[*id].iter_mut().zip(g) {
                *slot += v;
            }
        }
        // flat offsets of each node's parameter block
        let mut offsets = Vec::with_capacity(n_nodes);
        let mut cursor = 0;
        for p in &self.params {
            offsets.push(cursor);
            cursor += p.weights.len() + p.bias.len();
        }

        for k in (0..n_nodes).rev() {
            let node = &self.spec.nodes[k];
            let id = k + 1;
            if grads[id].iter().all(|&g| g == 0.0) {
                continue;
            }
            let g = grads[id].clone();
            let p = &self.params[k];
            let off = offsets[k];
            match &node.layer {
                LayerSpec::Dense { .. } => {
                    let x_id = node.inputs[0];
                    let x = &acts[x_id];
                    let fan_in = x.len();
                    let (wg, bg) =
                        param_grads[off..off + p.weights.len() + p.bias.len()]
                            .split_at_mut(p.weights.len());
                    for (u, &gu) in g.iter().enumerate() {
                        bg[u] += gu;
                        for (j, &xj) in x.iter().enumerate() {
                            wg[u * fan_in + j] += gu * xj;
                        }
                    }
                    for (j, slot) in grads[x_id].iter_mut().enumerate() {
                        let mut acc = 0.0;
                        for (u, &gu) in g.iter().enumerate() {
                            acc += gu * p.weights[u * fan_in + j];
                        }
                        *slot += acc;
                    }
                }
                LayerSpec::Conv1d {
                    filters,
                    kernel,
                    stride,
                } => {
                    let x_id = node.inputs[0];
                    let in_shape = &self.shapes[x_id];
                    let (channels, length) = conv_input_dims(in_shape).unwrap();
                    let out_len = (length - kernel) / stride + 1;
                    let x = &acts[x_id];
                    let (wg, bg) =
                        param_grads[off..off + p.weights.len() + p.bias.len()]
                            .split_at_mut(p.weights.len());
                    let mut xg = vec![0.0; x.len()];
                    for f in 0..*filters {
                        for o in 0..out_len {
                            let gu = g[f * out_len + o];
                            if gu == 0.0 {
                                continue;
                            }
                            bg[f] += gu;
                            for c in 0..channels {
                                for t in 0..*kernel {
                                    let wi = (f * channels + c) * kernel + t;
                                    let xi = c * length + o * stride + t;
                                    wg[wi] += gu * x[xi];
                                    xg[xi] += gu * p.weights[wi];
                                }
                            }
                        }
                    }
                    for (slot, v) in grads[x_id].iter_mut().zip(&xg) {
                        *slot += v;
                    }
                }
                LayerSpec::Activation(a) => {
                    let x_id = node.inputs[0];
                    let x = acts[x_id].clone();
                    for (j, slot) in grads[x_id].iter_mut().enumerate() {
                        *slot += g[j] * a.derivative(x[j]);
                    }
                }
                LayerSpec::Flatten => {
                    let x_id = node.inputs[0];
                    for (slot, v) in grads[x_id].iter_mut().zip(&g) {
                        *slot += v;
                    }
                }
                LayerSpec::Concat => {
                    let mut cursor = 0;
                    for &i in &node.inputs {
                        let len = acts[i].len();
                        let piece = g[cursor..cursor + len].to_vec();
                        for (slot, v) in grads[i].iter_mut().zip(&piece) {
                            *slot += v;
                        }
                        cursor += len;
                    }
                }
            }
        }
    }

    pub(crate) fn output_node(&self) -> usize {
        self.spec.output
    }

    pub(crate) fn aux_node(&self) -> Option<usize> {
        self.spec.aux_output
    }

    pub(crate) fn from_parts(spec: ModelSpec, flat_params: &[f64]) -> Result<Model> {
        let mut model = Model::init(spec, 0)?;
        model.set_params(flat_params)?;
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_dense_layer() {
        let spec = ModelSpec::sequential(3, vec![LayerSpec::Dense { units: 3 }]);
        let mut model = Model::init(spec, 0).unwrap();
        // identity weights, zero bias
        let mut params = vec![0.0; 12];
        params[0] = 1.0;
        params[4] = 1.0;
        params[8] = 1.0;
        model.set_params(&params).unwrap();
        let out = model.forward(&Tensor::vector(vec![1.5, -2.0, 0.25])).unwrap();
        assert_eq!(out.data(), &[1.5, -2.0, 0.25]);
    }

    #[test]
    fn relu_definition() {
        let spec = ModelSpec::sequential(3, vec![LayerSpec::Activation(Activation::Relu)]);
        let model = Model::init(spec, 0).unwrap();
        let out = model.forward(&Tensor::vector(vec![-1.0, 0.0, 2.0])).unwrap();
        assert_eq!(out.data(), &[0.0, 0.0, 2.0]);
    }

    #[test]
    fn conv1d_hand_convolution() {
        let spec = ModelSpec::sequential(
            3,
            vec![LayerSpec::Conv1d {
                filters: 1,
                kernel: 2,
                stride: 1,
            }],
        );
        let mut model = Model::init(spec, 0).unwrap();
        model.set_params(&[1.0, 1.0, 0.0]).unwrap(); // kernel {1,1}, bias 0
        let out = model.forward(&Tensor::vector(vec![1.0, 2.0, 3.0])).unwrap();
        assert_eq!(out.shape(), &[1, 2]);
        assert_eq!(out.data(), &[3.0, 5.0]);
    }

    #[test]
    fn activation_textbook_values() {
        for (x, relu, sig, tanh) in [
            (-1.0, 0.0, 0.268941421369995, -0.761594155955765),
            (0.0, 0.0, 0.5, 0.0),
            (1.0, 1.0, 0.731058578630005, 0.761594155955765),
        ] {
            assert!((Activation::Relu.apply(x) - relu).abs() < 1e-12);
            assert!((Activation::Sigmoid.apply(x) - sig).abs() < 1e-12);
            assert!((Activation::Tanh.apply(x) - tanh).abs() < 1e-12);
            // SiLU(x) = x * sigmoid(x)
            assert!(
                (Activation::Silu.apply(x) - x * Activation::Sigmoid.apply(x)).abs() < 1e-15
            );
        }
        assert_eq!(Activation::Silu.apply(0.0), 0.0);
    }

    #[test]
    fn forward_is_pure() {
        let spec = ModelSpec::sequential(
            4,
            vec![
                LayerSpec::Dense { units: 5 },
                LayerSpec::Activation(Activation::Tanh),
                LayerSpec::Dense { units: 1 },
            ],
        );
        let model = Model::init(spec, 42).unwrap();
        let x = Tensor::vector(vec![0.1, -0.2, 0.3, 0.4]);
        let a = model.forward(&x).unwrap();
        let b = model.forward(&x).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let spec = ModelSpec::sequential(4, vec![LayerSpec::Dense { units: 2 }]);
        let model = Model::init(spec, 0).unwrap();
        assert!(model.forward(&Tensor::vector(vec![1.0, 2.0])).is_err());
    }

    #[test]
    fn kernel_longer_than_input_rejected() {
        let spec = ModelSpec::sequential(
            2,
            vec![LayerSpec::Conv1d {
                filters: 1,
                kernel: 3,
                stride: 1,
            }],
        );
        assert!(Model::init(spec, 0).is_err());
    }

    #[test]
    fn param_roundtrip() {
        let spec = ModelSpec::sequential(
            3,
            vec![LayerSpec::Dense { units: 4 }, LayerSpec::Dense { units: 1 }],
        );
        let model = Model::init(spec.clone(), 9).unwrap();
        let params = model.get_params();
        assert_eq!(params.len(), 3 * 4 + 4 + 4 + 1);
        let rebuilt = Model::from_parts(spec, &params).unwrap();
        assert_eq!(model, rebuilt);
    }

    #[test]
    fn same_seed_same_init() {
        let spec = ModelSpec::sequential(6, vec![LayerSpec::Dense { units: 3 }]);
        let a = Model::init(spec.clone(), 5).unwrap();
        let b = Model::init(spec, 5).unwrap();
        assert_eq!(a.get_params(), b.get_params());
    }
}
