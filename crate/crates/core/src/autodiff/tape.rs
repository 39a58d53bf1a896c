use std::fmt;
use std::sync::Arc;

use super::kernels::{self, ConvGeometry, UpConvGeometry};
use super::Tensor;
use crate::error::{Error, Result};

/// Handle to a node recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// A fixed linear map that can take part in a recorded graph.
///
/// The backward pass pulls gradients through [`LinearMap::adjoint`], so
/// implementations must supply the exact transpose of [`LinearMap::apply`].
pub trait LinearMap: Send + Sync {
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    fn apply(&self, x: &[f64]) -> Vec<f64>;
    fn adjoint(&self, r: &[f64]) -> Vec<f64>;
}

#[derive(Clone)]
enum Op {
    Leaf,
    Conv1d {
        input: NodeId,
        weight: NodeId,
        bias: NodeId,
        geometry: ConvGeometry,
    },
    Upsample {
        input: NodeId,
        factor: usize,
    },
    UpsampleConv1d {
        input: NodeId,
        weight: NodeId,
        bias: NodeId,
        geometry: UpConvGeometry,
    },
    LeakyRelu {
        input: NodeId,
        slope: f64,
    },
    Linear {
        input: NodeId,
        map: Arc<dyn LinearMap>,
    },
    SquaredError {
        prediction: NodeId,
        target: Arc<[f64]>,
    },
    TotalVariation {
        input: NodeId,
    },
    Add {
        lhs: NodeId,
        rhs: NodeId,
    },
    Scale {
        input: NodeId,
        factor: f64,
    },
    Sum {
        input: NodeId,
    },
}

impl fmt::Debug for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Op::Leaf => "leaf",
            Op::Conv1d { .. } => "conv1d",
            Op::Upsample { .. } => "upsample",
            Op::UpsampleConv1d { .. } => "upsample_conv1d",
            Op::LeakyRelu { .. } => "leaky_relu",
            Op::Linear { .. } => "linear",
            Op::SquaredError { .. } => "squared_error",
            Op::TotalVariation { .. } => "total_variation",
            Op::Add { .. } => "add",
            Op::Scale { .. } => "scale",
            Op::Sum { .. } => "sum",
        };
        f.write_str(name)
    }
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Record of executed operations for reverse-mode differentiation.
///
/// Nodes are appended in execution order, so every input id is smaller than
/// the id of its consumer and a single reverse sweep visits them in
/// topological order.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Per-node gradients produced by [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `id`, or `None` when the loss
    /// does not depend on that node.
    pub fn get(&self, id: NodeId) -> Option<&Tensor> {
        self.grads.get(id.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, id: NodeId) -> Option<Tensor> {
        self.grads.get_mut(id.0).and_then(Option::take)
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    fn check(&self, id: NodeId) -> Result<&Tensor> {
        self.nodes
            .get(id.0)
            .map(|n| &n.value)
            .ok_or_else(|| Error::invalid(format!("node {} is not on this tape", id.0)))
    }

    fn push(&mut self, value: Tensor, op: Op) -> NodeId {
        self.nodes.push(Node { value, op });
        NodeId(self.nodes.len() - 1)
    }

    /// Records a constant or parameter.
    pub fn leaf(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Leaf)
    }

    /// Cross-correlation of a `c_in × L` input with a `c_out × c_in × k`
    /// kernel, zero padding on both ends.
    pub fn conv1d(
        &mut self,
        input: NodeId,
        weight: NodeId,
        bias: NodeId,
        stride: usize,
        padding: usize,
    ) -> Result<NodeId> {
        let x = self.check(input)?;
        let w = self.check(weight)?;
        let b = self.check(bias)?;
        if x.rank() != 2 {
            return Err(Error::shape(format!(
                "conv1d input has shape {:?}",
                x.shape()
            )));
        }
        if w.rank() != 3 {
            return Err(Error::shape(format!(
                "conv1d kernel has shape {:?}",
                w.shape()
            )));
        }
        let (cout, cin, k) = (w.shape()[0], w.shape()[1], w.shape()[2]);
        if cin != x.channels() {
            return Err(Error::shape(format!(
                "kernel expects {cin} input channels, input has {}",
                x.channels()
            )));
        }
        if b.shape() != [cout] {
            return Err(Error::shape(format!(
                "bias shape {:?} does not match {cout} output channels",
                b.shape()
            )));
        }
        if stride == 0 {
            return Err(Error::invalid("conv1d stride must be positive"));
        }
        if k == 0 || k > x.length() + 2 * padding {
            return Err(Error::shape(format!(
                "kernel width {k} exceeds padded length {}",
                x.length() + 2 * padding
            )));
        }
        let geometry = ConvGeometry {
            in_channels: cin,
            out_channels: cout,
            width: k,
            length: x.length(),
            stride,
            padding,
        };
        let out = kernels::conv1d_forward(x.values(), w.values(), b.values(), &geometry);
        let value = Tensor::from_parts(out, vec![cout, geometry.output_length()]);
        Ok(self.push(
            value,
            Op::Conv1d {
                input,
                weight,
                bias,
                geometry,
            },
        ))
    }

    /// `conv1d(upsample_nearest(input, factor), weight, bias, 1, k / 2)` as one
    /// node, evaluated in polyphase form on the low-resolution input. The
    /// kernel width `k` must be odd.
    pub fn upsample_conv1d(
        &mut self,
        input: NodeId,
        weight: NodeId,
        bias: NodeId,
        factor: usize,
    ) -> Result<NodeId> {
        if factor == 0 {
            return Err(Error::invalid("upsample factor must be positive"));
        }
        let x = self.check(input)?;
        let w = self.check(weight)?;
        let b = self.check(bias)?;
        if x.rank() != 2 || w.rank() != 3 {
            return Err(Error::shape(format!(
                "upsample_conv1d input {:?} / kernel {:?}",
                x.shape(),
                w.shape()
            )));
        }
        let (cout, cin, k) = (w.shape()[0], w.shape()[1], w.shape()[2]);
        if cin != x.channels() {
            return Err(Error::shape(format!(
                "kernel expects {cin} input channels, input has {}",
                x.channels()
            )));
        }
        if b.shape() != [cout] {
            return Err(Error::shape(format!(
                "bias shape {:?} does not match {cout} output channels",
                b.shape()
            )));
        }
        if k % 2 == 0 || k > x.length() * factor + k / 2 * 2 {
            return Err(Error::shape(format!(
                "kernel width {k} must be odd and fit the input"
            )));
        }
        let geometry = UpConvGeometry {
            in_channels: cin,
            out_channels: cout,
            width: k,
            length: x.length(),
            factor,
        };
        let out = kernels::upconv_forward(x.values(), w.values(), b.values(), &geometry);
        let value = Tensor::from_parts(out, vec![cout, geometry.output_length()]);
        Ok(self.push(
            value,
            Op::UpsampleConv1d {
                input,
                weight,
                bias,
                geometry,
            },
        ))
    }

    /// Repeats every sample `factor` times along the length axis.
    pub fn upsample_nearest(&mut self, input: NodeId, factor: usize) -> Result<NodeId> {
        if factor == 0 {
            return Err(Error::invalid("upsample factor must be positive"));
        }
        let x = self.check(input)?;
        if x.rank() != 2 {
            return Err(Error::shape(format!(
                "upsample input has shape {:?}",
                x.shape()
            )));
        }
        let shape = vec![x.channels(), x.length() * factor];
        let value = Tensor::from_parts(kernels::upsample_forward(x.values(), factor), shape);
        Ok(self.push(value, Op::Upsample { input, factor }))
    }

    /// `x` for `x ≥ 0`, `slope·x` otherwise.
    pub fn leaky_relu(&mut self, input: NodeId, slope: f64) -> Result<NodeId> {
        let x = self.check(input)?;
        let out = x
            .values()
            .iter()
            .map(|&v| if v >= 0.0 { v } else { slope * v })
            .collect();
        let value = Tensor::from_parts(out, x.shape().to_vec());
        Ok(self.push(value, Op::LeakyRelu { input, slope }))
    }

    /// Applies a linear map to the flattened input; the result has shape `[m]`.
    pub fn linear(&mut self, input: NodeId, map: Arc<dyn LinearMap>) -> Result<NodeId> {
        let x = self.check(input)?;
        if x.len() != map.input_dim() {
            return Err(Error::shape(format!(
                "linear map expects {} inputs, got {}",
                map.input_dim(),
                x.len()
            )));
        }
        let out = map.apply(x.values());
        let value = Tensor::from_parts(out, vec![map.output_dim()]);
        Ok(self.push(value, Op::Linear { input, map }))
    }

    /// Sum of squared differences against a constant target.
    pub fn mse_loss(&mut self, prediction: NodeId, target: &[f64]) -> Result<NodeId> {
        let p = self.check(prediction)?;
        let value = squared_error(p.values(), target)?;
        Ok(self.push(
            Tensor::scalar(value),
            Op::SquaredError {
                prediction,
                target: target.into(),
            },
        ))
    }

    /// Sum of absolute first differences of the flattened input.
    pub fn tv_loss(&mut self, input: NodeId) -> Result<NodeId> {
        let x = self.check(input)?;
        let value = total_variation(x.values())?;
        Ok(self.push(Tensor::scalar(value), Op::TotalVariation { input }))
    }

    pub fn add(&mut self, lhs: NodeId, rhs: NodeId) -> Result<NodeId> {
        let a = self.check(lhs)?;
        let b = self.check(rhs)?;
        if a.shape() != b.shape() {
            return Err(Error::shape(format!(
                "cannot add shapes {:?} and {:?}",
                a.shape(),
                b.shape()
            )));
        }
        let out = a
            .values()
            .iter()
            .zip(b.values())
            .map(|(x, y)| x + y)
            .collect();
        let value = Tensor::from_parts(out, a.shape().to_vec());
        Ok(self.push(value, Op::Add { lhs, rhs }))
    }

    pub fn scale(&mut self, input: NodeId, factor: f64) -> Result<NodeId> {
        let x = self.check(input)?;
        let out = x.values().iter().map(|v| v * factor).collect();
        let value = Tensor::from_parts(out, x.shape().to_vec());
        Ok(self.push(value, Op::Scale { input, factor }))
    }

    pub fn sum(&mut self, input: NodeId) -> Result<NodeId> {
        let x = self.check(input)?;
        let value = Tensor::scalar(x.values().iter().sum());
        Ok(self.push(value, Op::Sum { input }))
    }

    /// Reverse sweep from a scalar loss node. The loss's own gradient is 1.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        let root = self.check(loss)?;
        if !root.is_scalar() {
            return Err(Error::shape(format!(
                "backward needs a scalar loss, node has shape {:?}",
                root.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::from_parts(vec![1.0], root.shape().to_vec()));

        for id in (0..=loss.0).rev() {
            // Inputs always precede their consumer, so every update lands in
            // `grads[..id]` while `dy` stays borrowed from `grads[id]`.
            let (grads, rest) = grads.split_at_mut(id);
            let Some(dy) = rest[0].as_ref() else { continue };
            let node = &self.nodes[id];
            match &node.op {
                Op::Leaf => {}
                Op::Conv1d {
                    input,
                    weight,
                    bias,
                    geometry,
                } => {
                    let (dx, dw, db) = kernels::conv1d_backward(
                        self.value(*input).values(),
                        self.value(*weight).values(),
                        dy.values(),
                        geometry,
                    );
                    accumulate(grads, self, *input, dx);
                    accumulate(grads, self, *weight, dw);
                    accumulate(grads, self, *bias, db);
                }
                Op::UpsampleConv1d {
                    input,
                    weight,
                    bias,
                    geometry,
                } => {
                    let (dx, dw, db) = kernels::upconv_backward(
                        self.value(*input).values(),
                        self.value(*weight).values(),
                        dy.values(),
                        geometry,
                    );
                    accumulate(grads, self, *input, dx);
                    accumulate(grads, self, *weight, dw);
                    accumulate(grads, self, *bias, db);
                }
                Op::Upsample { input, factor } => {
                    let dx = kernels::upsample_backward(dy.values(), *factor);
                    accumulate(grads, self, *input, dx);
                }
                Op::LeakyRelu { input, slope } => {
                    let x = self.value(*input).values();
                    let dx = x
                        .iter()
                        .zip(dy.values())
                        .map(|(&v, &g)| if v >= 0.0 { g } else { slope * g })
                        .collect();
                    accumulate(grads, self, *input, dx);
                }
                Op::Linear { input, map } => {
                    accumulate(grads, self, *input, map.adjoint(dy.values()));
                }
                Op::SquaredError { prediction, target } => {
                    let g = dy.values()[0];
                    let p = self.value(*prediction).values();
                    let dx = p
                        .iter()
                        .zip(target.iter())
                        .map(|(a, b)| 2.0 * g * (a - b))
                        .collect();
                    accumulate(grads, self, *prediction, dx);
                }
                Op::TotalVariation { input } => {
                    let g = dy.values()[0];
                    let x = self.value(*input).values();
                    let mut dx = vec![0.0; x.len()];
                    for i in 1..x.len() {
                        let s = sign(x[i] - x[i - 1]) * g;
                        dx[i] += s;
                        dx[i - 1] -= s;
                    }
                    accumulate(grads, self, *input, dx);
                }
                Op::Add { lhs, rhs } => {
                    accumulate(grads, self, *lhs, dy.values().to_vec());
                    accumulate(grads, self, *rhs, dy.values().to_vec());
                }
                Op::Scale { input, factor } => {
                    let dx = dy.values().iter().map(|g| g * factor).collect();
                    accumulate(grads, self, *input, dx);
                }
                Op::Sum { input } => {
                    let g = dy.values()[0];
                    let dx = vec![g; self.value(*input).len()];
                    accumulate(grads, self, *input, dx);
                }
            }
        }
        Ok(Gradients { grads })
    }
}

fn accumulate(grads: &mut [Option<Tensor>], tape: &Tape, id: NodeId, delta: Vec<f64>) {
    match &mut grads[id.0] {
        Some(existing) => {
            for (g, d) in existing.values_mut().iter_mut().zip(&delta) {
                *g += d;
            }
        }
        slot @ None => {
            let shape = tape.value(id).shape().to_vec();
            *slot = Some(Tensor::from_parts(delta, shape));
        }
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Sum of squared differences.
pub fn squared_error(prediction: &[f64], target: &[f64]) -> Result<f64> {
    if prediction.len() != target.len() {
        return Err(Error::shape(format!(
            "squared error between lengths {} and {}",
            prediction.len(),
            target.len()
        )));
    }
    Ok(prediction
        .iter()
        .zip(target)
        .map(|(a, b)| (a - b) * (a - b))
        .sum())
}

/// Sum of absolute first differences; needs at least two samples.
pub fn total_variation(x: &[f64]) -> Result<f64> {
    if x.len() < 2 {
        return Err(Error::invalid(format!(
            "total variation needs at least 2 samples, got {}",
            x.len()
        )));
    }
    Ok(x.windows(2).map(|w| (w[1] - w[0]).abs()).sum())
}
