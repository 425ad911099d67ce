//! A directed acyclic graph of layers with a single input and output.

use super::layer::{Cache, Layer, LayerSpec, Mode};
use crate::error::{shape_err, Error, Result};
use crate::tensor::{Scalar, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct Node<S: Scalar> {
    pub name: String,
    /// `None` only for the input node.
    pub layer: Option<Layer<S>>,
    pub inputs: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Graph<S: Scalar = f32> {
    nodes: Vec<Node<S>>,
}

/// Forward caches kept for a backward pass.
pub struct Trace<S: Scalar> {
    caches: Vec<Option<Cache<S>>>,
    output_dims: Vec<usize>,
}

/// Parameter gradients, one list per node in node order.
pub type Grads<S> = Vec<Vec<Tensor<S>>>;

impl<S: Scalar> Default for Graph<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> Graph<S> {
    pub fn new() -> Self {
        Graph {
            nodes: vec![Node {
                name: "input".into(),
                layer: None,
                inputs: Vec::new(),
            }],
        }
    }

    pub const INPUT: usize = 0;

    /// Append a node; it becomes the graph output.
    pub fn push(&mut self, name: impl Into<String>, layer: Layer<S>, inputs: &[usize]) -> Result<usize> {
        let id = self.nodes.len();
        let name = name.into();
        if inputs.is_empty() || inputs.iter().any(|&i| i >= id) {
            return Err(shape_err(format!("node {name}: inputs {inputs:?} invalid")));
        }
        if inputs.len() > 1 && *layer.spec() != LayerSpec::Add {
            return Err(shape_err(format!("node {name}: only add takes several inputs")));
        }
        if self.nodes.iter().any(|n| n.name == name) {
            return Err(shape_err(format!("duplicate node name {name}")));
        }
        self.nodes.push(Node {
            name,
            layer: Some(layer),
            inputs: inputs.to_vec(),
        });
        Ok(id)
    }

    pub fn nodes(&self) -> &[Node<S>] {
        &self.nodes
    }

    pub fn output(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn layers(&self) -> impl Iterator<Item = &Layer<S>> {
        self.nodes.iter().filter_map(|n| n.layer.as_ref())
    }

    pub fn param_count(&self) -> usize {
        self.layers().map(|l| l.spec().param_count()).sum()
    }

    fn remaining_uses(&self) -> Vec<usize> {
        let mut uses = vec![0; self.nodes.len()];
        for n in &self.nodes {
            for &i in &n.inputs {
                uses[i] += 1;
            }
        }
        uses
    }

    fn run(&self, x: &Tensor<S>, mode: Mode, keep: bool) -> Result<(Tensor<S>, Vec<Option<Cache<S>>>)> {
        let out_id = self.output();
        if out_id == 0 {
            return Ok((x.clone(), Vec::new()));
        }
        let mut uses = self.remaining_uses();
        let mut values: Vec<Option<Tensor<S>>> = vec![None; self.nodes.len()];
        let mut caches: Vec<Option<Cache<S>>> = (0..self.nodes.len()).map(|_| None).collect();
        values[0] = Some(x.clone());
        for (id, node) in self.nodes.iter().enumerate().skip(1) {
            let layer = node.layer.as_ref().expect("non-input node has a layer");
            let ins: Vec<&Tensor<S>> = node
                .inputs
                .iter()
                .map(|&i| values[i].as_ref().expect("topological order"))
                .collect();
            let y = if keep {
                let (y, c) = layer.forward_many(&ins, mode).map_err(|e| annotate(e, &node.name))?;
                caches[id] = Some(c);
                y
            } else {
                layer.apply(&ins, mode).map_err(|e| annotate(e, &node.name))?
            };
            if cfg!(debug_assertions) && !y.all_finite() {
                return Err(Error::NonFinite(node.name.clone()));
            }
            values[id] = Some(y);
            for &i in &node.inputs {
                uses[i] -= 1;
                if uses[i] == 0 {
                    values[i] = None;
                }
            }
        }
        Ok((values[out_id].take().expect("output computed"), caches))
    }

    pub fn forward(&self, x: &Tensor<S>, mode: Mode) -> Result<(Tensor<S>, Trace<S>)> {
        let (y, caches) = self.run(x, mode, true)?;
        let output_dims = y.dims().to_vec();
        Ok((y, Trace { caches, output_dims }))
    }

    /// Eval-mode forward that keeps no caches.
    pub fn infer(&self, x: &Tensor<S>) -> Result<Tensor<S>> {
        Ok(self.run(x, Mode::Eval, false)?.0)
    }

    /// Returns the input gradient and per-node parameter gradients.
    pub fn backward(&self, trace: &Trace<S>, grad: &Tensor<S>) -> Result<(Tensor<S>, Grads<S>)> {
        grad.ensure_dims(&trace.output_dims, "output grad")?;
        let n = self.nodes.len();
        let mut pending: Vec<Option<Tensor<S>>> = vec![None; n];
        let mut param_grads: Grads<S> = vec![Vec::new(); n];
        pending[self.output()] = Some(grad.clone());
        for id in (1..n).rev() {
            let Some(g) = pending[id].take() else {
                param_grads[id] = self.nodes[id]
                    .layer
                    .as_ref()
                    .map(|l| l.params().iter().map(|p| Tensor::zeros(p.dims())).collect())
                    .unwrap_or_default();
                continue;
            };
            let node = &self.nodes[id];
            let layer = node.layer.as_ref().expect("non-input node has a layer");
            let cache = trace.caches[id]
                .as_ref()
                .ok_or_else(|| shape_err("trace does not match graph"))?;
            let (gin, gp) = layer.backward(cache, &g).map_err(|e| annotate(e, &node.name))?;
            param_grads[id] = gp;
            for (&src, gi) in node.inputs.iter().zip(gin) {
                match &mut pending[src] {
                    Some(acc) => acc.add_assign(&gi)?,
                    slot => *slot = Some(gi),
                }
            }
        }
        let gx = pending[0]
            .take()
            .ok_or_else(|| shape_err("input does not reach output"))?;
        Ok((gx, param_grads))
    }

    pub fn update_running_stats(&mut self, trace: &Trace<S>, momentum: f64) {
        for (node, cache) in self.nodes.iter_mut().zip(&trace.caches) {
            if let (Some(layer), Some(cache)) = (node.layer.as_mut(), cache) {
                layer.update_running_stats(cache, momentum);
            }
        }
    }

    /// Trainable parameters in node order.
    pub fn params(&self) -> Vec<&Tensor<S>> {
        self.layers().flat_map(|l| l.params().iter()).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<S>> {
        self.nodes
            .iter_mut()
            .filter_map(|n| n.layer.as_mut())
            .flat_map(|l| l.params_mut().iter_mut())
            .collect()
    }

    /// Flatten [`Grads`] into the order of [`Graph::params`].
    pub fn flatten_grads(grads: Grads<S>) -> Vec<Tensor<S>> {
        grads.into_iter().flatten().collect()
    }

    /// Every stored tensor (parameters then buffers per node) with a
    /// dotted name.
    pub fn named_tensors(&self) -> Vec<(String, &Tensor<S>)> {
        let mut out = Vec::new();
        for node in &self.nodes {
            if let Some(l) = &node.layer {
                let spec = l.spec();
                for ((name, _), t) in spec.param_shapes().iter().zip(l.params()) {
                    out.push((format!("{}.{name}", node.name), t));
                }
                for ((name, _), t) in spec.buffer_shapes().iter().zip(l.buffers()) {
                    out.push((format!("{}.{name}", node.name), t));
                }
            }
        }
        out
    }

    /// Replace stored tensors by name; the set of names and shapes must
    /// match exactly.
    pub fn load_named_tensors(&mut self, mut tensors: std::collections::HashMap<String, Tensor<S>>) -> Result<()> {
        let expected = self.named_tensors().len();
        if tensors.len() != expected {
            return Err(Error::Checkpoint(format!(
                "expected {expected} tensors, found {}",
                tensors.len()
            )));
        }
        for node in &mut self.nodes {
            let Some(l) = node.layer.as_mut() else { continue };
            let spec = l.spec().clone();
            for ((name, dims), slot) in spec.param_shapes().iter().zip(l.params_mut()) {
                *slot = take_named(&mut tensors, &node.name, name, dims)?;
            }
            for ((name, dims), slot) in spec.buffer_shapes().iter().zip(l.buffers_mut()) {
                *slot = take_named(&mut tensors, &node.name, name, dims)?;
            }
        }
        Ok(())
    }

    pub fn cast<T: Scalar>(&self) -> Graph<T> {
        Graph {
            nodes: self
                .nodes
                .iter()
                .map(|n| Node {
                    name: n.name.clone(),
                    layer: n.layer.as_ref().map(Layer::cast),
                    inputs: n.inputs.clone(),
                })
                .collect(),
        }
    }
}

fn take_named<S: Scalar>(
    map: &mut std::collections::HashMap<String, Tensor<S>>,
    node: &str,
    name: &str,
    dims: &[usize],
) -> Result<Tensor<S>> {
    let key = format!("{node}.{name}");
    let t = map
        .remove(&key)
        .ok_or_else(|| Error::Checkpoint(format!("missing tensor {key}")))?;
    if t.dims() != dims {
        return Err(Error::Checkpoint(format!(
            "tensor {key}: expected {dims:?}, found {:?}",
            t.dims()
        )));
    }
    Ok(t)
}

fn annotate(e: Error, node: &str) -> Error {
    match e {
        Error::Shape(m) => Error::Shape(format!("{node}: {m}")),
        other => other,
    }
}
