//! The 1D convolutional generator `G(z, w)`.
//!
//! Each block is nearest-neighbour upsampling followed by a stride-1 "same"
//! convolution and a leaky ReLU. A final single-channel convolution without
//! activation produces the `1 × n` output.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::autodiff::{NodeId, Tape, Tensor};
use crate::error::{Error, Result};
use crate::rng::seeded;

pub const DEFAULT_FILTERS: usize = 64;
pub const DEFAULT_LATENT_CHANNELS: usize = 32;
pub const DEFAULT_KERNEL_SIZE: usize = 3;
pub const DEFAULT_LEAKY_SLOPE: f64 = 0.2;
/// Latent lengths the canonical architecture may start from.
pub const LATENT_LENGTH_RANGE: (usize, usize) = (8, 64);
/// Preferred latent length when several factorizations exist.
pub const PREFERRED_LATENT_LENGTH: usize = 16;

const LATENT_MAX: f64 = 0.1;

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorSpec {
    pub output_length: usize,
    pub filters_per_layer: usize,
    pub num_blocks: usize,
    pub kernel_size: usize,
    pub upsample_factor: usize,
    pub latent_channels: usize,
    pub latent_length: usize,
    pub leaky_slope: f64,
}

/// Splits `n` into `latent_length · 2^blocks` with at least one block and the
/// latent length inside [`LATENT_LENGTH_RANGE`].
///
/// Among valid splits the smallest latent length `≥ 16` wins; when none is
/// that long, the longest available latent is used.
pub fn canonical_factorization(n: usize) -> Option<(usize, usize)> {
    let (lo, hi) = LATENT_LENGTH_RANGE;
    let mut options = Vec::new();
    let mut blocks = 1;
    while n % (1 << blocks) == 0 && n >> blocks >= lo {
        let latent = n >> blocks;
        if latent <= hi {
            options.push((latent, blocks));
        }
        blocks += 1;
    }
    options
        .iter()
        .copied()
        .filter(|&(latent, _)| latent >= PREFERRED_LATENT_LENGTH)
        .min_by_key(|&(latent, _)| latent)
        .or_else(|| options.iter().copied().max_by_key(|&(latent, _)| latent))
}

/// Canonical architecture for an `n`-sample output.
pub fn default_spec(n: usize, filters: usize) -> Result<GeneratorSpec> {
    if filters == 0 {
        return Err(Error::invalid("filters_per_layer must be positive"));
    }
    let (latent_length, num_blocks) = canonical_factorization(n).ok_or_else(|| {
        Error::invalid(format!(
            "signal length {n} is not latent_length·2^k with latent_length in [{}, {}]; \
             pad the signal first (signal_io::pad_to_valid_length)",
            LATENT_LENGTH_RANGE.0, LATENT_LENGTH_RANGE.1
        ))
    })?;
    Ok(GeneratorSpec {
        output_length: n,
        filters_per_layer: filters,
        num_blocks,
        kernel_size: DEFAULT_KERNEL_SIZE,
        upsample_factor: 2,
        latent_channels: DEFAULT_LATENT_CHANNELS,
        latent_length,
        leaky_slope: DEFAULT_LEAKY_SLOPE,
    })
}

impl GeneratorSpec {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("output_length", self.output_length),
            ("filters_per_layer", self.filters_per_layer),
            ("num_blocks", self.num_blocks),
            ("kernel_size", self.kernel_size),
            ("upsample_factor", self.upsample_factor),
            ("latent_channels", self.latent_channels),
            ("latent_length", self.latent_length),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::invalid(format!("{name} must be positive")));
        }
        if self.kernel_size % 2 == 0 {
            return Err(Error::invalid("kernel_size must be odd"));
        }
        let grown = (0..self.num_blocks).try_fold(self.latent_length, |len, _| {
            len.checked_mul(self.upsample_factor)
        });
        if grown != Some(self.output_length) {
            return Err(Error::invalid(format!(
                "latent length {} grown {} times by {} does not reach {}",
                self.latent_length, self.num_blocks, self.upsample_factor, self.output_length
            )));
        }
        Ok(())
    }

    /// Kernel shapes `[out, in, k]` of every convolution, final layer last.
    pub fn kernel_shapes(&self) -> Vec<[usize; 3]> {
        let f = self.filters_per_layer;
        let k = self.kernel_size;
        let mut shapes = Vec::with_capacity(self.num_blocks + 1);
        shapes.push([f, self.latent_channels, k]);
        shapes.extend(std::iter::repeat_n([f, f, k], self.num_blocks - 1));
        shapes.push([1, f, k]);
        shapes
    }

    pub fn parameter_count(&self) -> usize {
        self.kernel_shapes()
            .iter()
            .map(|[o, i, k]| o * i * k + o)
            .sum()
    }
}

/// An instantiated generator: weights plus its frozen latent input.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorNet {
    spec: GeneratorSpec,
    /// `[kernel_0, bias_0, kernel_1, bias_1, …]`, final layer last.
    params: Vec<Tensor>,
    latent: Tensor,
}

/// Node handles produced by [`GeneratorNet::forward`].
#[derive(Clone, Debug)]
pub struct GeneratorGraph {
    pub output: NodeId,
    /// Parameter leaves in the same order as [`GeneratorNet::parameters`].
    pub params: Vec<NodeId>,
}

/// Draws a generator for `spec` from `seed`.
///
/// The latent is drawn first (iid uniform on `[0, 0.1)`), then every kernel
/// in layer order from `N(0, 2 / (c_in·k))`. Biases start at zero.
pub fn init_generator(spec: &GeneratorSpec, seed: u64) -> Result<GeneratorNet> {
    spec.validate()?;
    let mut rng = seeded(seed);
    let latent_values = (0..spec.latent_channels * spec.latent_length)
        .map(|_| rng.random_range(0.0..LATENT_MAX))
        .collect();
    let latent = Tensor::signal(spec.latent_channels, spec.latent_length, latent_values)?;

    let mut params = Vec::new();
    for [out, inp, k] in spec.kernel_shapes() {
        let std = (2.0 / (inp * k) as f64).sqrt();
        let values = (0..out * inp * k)
            .map(|_| std * rng.sample::<f64, _>(StandardNormal))
            .collect();
        params.push(Tensor::new(values, vec![out, inp, k])?);
        params.push(Tensor::zeros(&[out]));
    }
    Ok(GeneratorNet {
        spec: spec.clone(),
        params,
        latent,
    })
}

impl GeneratorNet {
    /// Builds a net from explicit weights, checking every shape.
    pub fn from_parts(spec: GeneratorSpec, params: Vec<Tensor>, latent: Tensor) -> Result<Self> {
        spec.validate()?;
        let shapes = spec.kernel_shapes();
        if params.len() != 2 * shapes.len() {
            return Err(Error::shape(format!(
                "expected {} parameter tensors, got {}",
                2 * shapes.len(),
                params.len()
            )));
        }
        for (layer, shape) in shapes.iter().enumerate() {
            let (w, b) = (&params[2 * layer], &params[2 * layer + 1]);
            if w.shape() != shape || b.shape() != [shape[0]] {
                return Err(Error::shape(format!(
                    "layer {layer}: kernel {:?} / bias {:?}, expected {:?}",
                    w.shape(),
                    b.shape(),
                    shape
                )));
            }
        }
        if latent.shape() != [spec.latent_channels, spec.latent_length] {
            return Err(Error::shape(format!(
                "latent has shape {:?}",
                latent.shape()
            )));
        }
        Ok(GeneratorNet {
            spec,
            params,
            latent,
        })
    }

    pub fn spec(&self) -> &GeneratorSpec {
        &self.spec
    }

    pub fn latent(&self) -> &Tensor {
        &self.latent
    }

    pub fn parameters(&self) -> &[Tensor] {
        &self.params
    }

    /// Mutable access to the weights. The latent stays frozen.
    pub fn parameters_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    /// Records `G(z, w)` on `tape`; the output node has shape `1 × n`.
    pub fn forward(&self, tape: &mut Tape) -> Result<GeneratorGraph> {
        let params: Vec<NodeId> = self.params.iter().map(|p| tape.leaf(p.clone())).collect();
        let pad = self.spec.kernel_size / 2;
        let mut h = tape.leaf(self.latent.clone());
        for block in 0..self.spec.num_blocks {
            h = tape.upsample_conv1d(
                h,
                params[2 * block],
                params[2 * block + 1],
                self.spec.upsample_factor,
            )?;
            h = tape.leaky_relu(h, self.spec.leaky_slope)?;
        }
        let last = 2 * self.spec.num_blocks;
        let output = tape.conv1d(h, params[last], params[last + 1], 1, pad)?;
        Ok(GeneratorGraph { output, params })
    }

    /// Forward pass without keeping the tape.
    pub fn generate(&self) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let graph = self.forward(&mut tape)?;
        Ok(tape.value(graph.output).values().to_vec())
    }
}
