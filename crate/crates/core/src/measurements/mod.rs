//! Linear measurement processes `y = A·x + η`.
//!
//! Four operators are supported: a row subsample of the identity (missing
//! samples), a dense Gaussian projection scaled by `1/√m`, a row subsample of
//! the orthonormal DCT-II matrix, and the identity (denoising). Each one
//! applies `A` and its exact transpose without materializing anything but
//! the Gaussian matrix.

mod dct;

use std::fmt;
use std::sync::Arc;

use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;

pub use dct::{dct_forward, dct_forward_direct, dct_inverse, dct_inverse_direct, Dct};

use crate::autodiff::LinearMap;
use crate::error::{Error, Result};
use crate::rng::seeded;

#[derive(Clone, Debug)]
enum Variant {
    Mask { kept: Vec<usize> },
    Gaussian { matrix: Arc<[f64]> },
    DctRows { rows: Vec<usize>, plan: Arc<Dct> },
    Identity,
}

/// A linear map from `n` signal samples to `m` measurements.
#[derive(Clone, Debug)]
pub struct MeasurementOperator {
    variant: Variant,
    n: usize,
    m: usize,
    descriptor: OperatorDescriptor,
}

/// Replayable description of an operator: its kind, dimensions and seed.
#[derive(Clone, Debug, PartialEq)]
pub enum OperatorDescriptor {
    Mask {
        n: usize,
        m: usize,
        seed: u64,
    },
    Gaussian {
        n: usize,
        m: usize,
        seed: u64,
    },
    Dct {
        n: usize,
        m: usize,
        seed: u64,
    },
    Identity {
        n: usize,
    },
    /// Every sample observed except the contiguous block `[start, start + length)`.
    Gap {
        n: usize,
        start: usize,
        length: usize,
    },
    /// Explicit observed indices, e.g. from blank cells in a data file.
    Indices {
        n: usize,
        kept: Vec<usize>,
    },
}

fn check_subsample(n: usize, m: usize) -> Result<()> {
    if n == 0 || m == 0 || m > n {
        return Err(Error::invalid(format!(
            "need 1 <= m <= n for row sampling, got m = {m}, n = {n}"
        )));
    }
    Ok(())
}

fn sample_rows(n: usize, m: usize, seed: u64) -> Vec<usize> {
    let mut rows = index::sample(&mut seeded(seed), n, m).into_vec();
    rows.sort_unstable();
    rows
}

fn check_indices(n: usize, indices: &[usize]) -> Result<()> {
    if indices.is_empty() {
        return Err(Error::invalid("index set is empty"));
    }
    if indices.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("indices must be strictly increasing"));
    }
    if indices[indices.len() - 1] >= n {
        return Err(Error::invalid(format!("index out of range for n = {n}")));
    }
    Ok(())
}

/// Observes `m` samples chosen uniformly without replacement.
pub fn make_mask_operator(n: usize, m: usize, seed: u64) -> Result<MeasurementOperator> {
    check_subsample(n, m)?;
    Ok(MeasurementOperator {
        variant: Variant::Mask {
            kept: sample_rows(n, m, seed),
        },
        n,
        m,
        descriptor: OperatorDescriptor::Mask { n, m, seed },
    })
}

/// Dense `m × n` matrix with iid `N(0, 1)/√m` entries, drawn row by row.
pub fn make_gaussian_operator(n: usize, m: usize, seed: u64) -> Result<MeasurementOperator> {
    if n == 0 || m == 0 {
        return Err(Error::invalid(
            "Gaussian projection needs m >= 1 and n >= 1",
        ));
    }
    let scale = 1.0 / (m as f64).sqrt();
    let mut rng = seeded(seed);
    let matrix = (0..m * n)
        .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
        .collect();
    Ok(MeasurementOperator {
        variant: Variant::Gaussian { matrix },
        n,
        m,
        descriptor: OperatorDescriptor::Gaussian { n, m, seed },
    })
}

/// Observes `m` orthonormal DCT-II coefficients chosen uniformly without
/// replacement. The DC row gets no special treatment.
pub fn make_dct_operator(n: usize, m: usize, seed: u64) -> Result<MeasurementOperator> {
    check_subsample(n, m)?;
    Ok(MeasurementOperator {
        variant: Variant::DctRows {
            rows: sample_rows(n, m, seed),
            plan: Arc::new(Dct::new(n)),
        },
        n,
        m,
        descriptor: OperatorDescriptor::Dct { n, m, seed },
    })
}

pub fn identity_operator(n: usize) -> Result<MeasurementOperator> {
    if n == 0 {
        return Err(Error::invalid("identity needs n >= 1"));
    }
    Ok(MeasurementOperator {
        variant: Variant::Identity,
        n,
        m: n,
        descriptor: OperatorDescriptor::Identity { n },
    })
}

/// Observes every sample outside `[start, start + length)`.
pub fn make_gap_operator(n: usize, start: usize, length: usize) -> Result<MeasurementOperator> {
    if length == 0 || start + length > n || length >= n {
        return Err(Error::invalid(format!(
            "gap [{start}, {}) must be non-empty, inside [0, {n}) and leave samples observed",
            start + length
        )));
    }
    let kept: Vec<usize> = (0..start).chain(start + length..n).collect();
    Ok(MeasurementOperator {
        m: kept.len(),
        variant: Variant::Mask { kept },
        n,
        descriptor: OperatorDescriptor::Gap { n, start, length },
    })
}

impl OperatorDescriptor {
    pub fn build(&self) -> Result<MeasurementOperator> {
        match *self {
            OperatorDescriptor::Mask { n, m, seed } => make_mask_operator(n, m, seed),
            OperatorDescriptor::Gaussian { n, m, seed } => make_gaussian_operator(n, m, seed),
            OperatorDescriptor::Dct { n, m, seed } => make_dct_operator(n, m, seed),
            OperatorDescriptor::Identity { n } => identity_operator(n),
            OperatorDescriptor::Gap { n, start, length } => make_gap_operator(n, start, length),
            OperatorDescriptor::Indices { n, ref kept } => {
                MeasurementOperator::mask_from_indices(n, kept.clone())
            }
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            OperatorDescriptor::Mask { .. } => "mask",
            OperatorDescriptor::Gaussian { .. } => "gaussian",
            OperatorDescriptor::Dct { .. } => "dct",
            OperatorDescriptor::Identity { .. } => "identity",
            OperatorDescriptor::Gap { .. } => "gap",
            OperatorDescriptor::Indices { .. } => "indices",
        }
    }
}

/// Text form: `kind=<kind> n=<n> …`, space-separated `key=value` pairs.
impl fmt::Display for OperatorDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "kind={}", self.kind())?;
        match self {
            OperatorDescriptor::Mask { n, m, seed }
            | OperatorDescriptor::Gaussian { n, m, seed }
            | OperatorDescriptor::Dct { n, m, seed } => write!(f, " n={n} m={m} seed={seed}"),
            OperatorDescriptor::Identity { n } => write!(f, " n={n}"),
            OperatorDescriptor::Gap { n, start, length } => {
                write!(f, " n={n} start={start} length={length}")
            }
            OperatorDescriptor::Indices { n, kept } => {
                let list: Vec<String> = kept.iter().map(usize::to_string).collect();
                write!(f, " n={n} kept={}", list.join(","))
            }
        }
    }
}

impl std::str::FromStr for OperatorDescriptor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut fields = std::collections::BTreeMap::new();
        for token in s.split_whitespace() {
            let (key, value) = token.split_once('=').ok_or_else(|| {
                Error::Config(format!("operator field `{token}` is not key=value"))
            })?;
            fields.insert(key, value);
        }
        let num = |key: &str| -> Result<u64> {
            fields
                .get(key)
                .ok_or_else(|| Error::Config(format!("operator is missing `{key}`")))?
                .parse()
                .map_err(|_| Error::Config(format!("operator field `{key}` is not an integer")))
        };
        let size = |key: &str| num(key).map(|v| v as usize);
        match fields.get("kind").copied() {
            Some("mask") => Ok(OperatorDescriptor::Mask {
                n: size("n")?,
                m: size("m")?,
                seed: num("seed")?,
            }),
            Some("gaussian") => Ok(OperatorDescriptor::Gaussian {
                n: size("n")?,
                m: size("m")?,
                seed: num("seed")?,
            }),
            Some("dct") => Ok(OperatorDescriptor::Dct {
                n: size("n")?,
                m: size("m")?,
                seed: num("seed")?,
            }),
            Some("identity") => Ok(OperatorDescriptor::Identity { n: size("n")? }),
            Some("gap") => Ok(OperatorDescriptor::Gap {
                n: size("n")?,
                start: size("start")?,
                length: size("length")?,
            }),
            Some("indices") => {
                let kept = fields
                    .get("kept")
                    .ok_or_else(|| Error::Config("operator is missing `kept`".into()))?
                    .split(',')
                    .map(|v| {
                        v.parse()
                            .map_err(|_| Error::Config(format!("bad index `{v}` in `kept`")))
                    })
                    .collect::<Result<Vec<usize>>>()?;
                Ok(OperatorDescriptor::Indices {
                    n: size("n")?,
                    kept,
                })
            }
            other => Err(Error::Config(format!("unknown operator kind {other:?}"))),
        }
    }
}

impl MeasurementOperator {
    /// Mask operator over explicit observed indices (strictly increasing).
    pub fn mask_from_indices(n: usize, kept: Vec<usize>) -> Result<Self> {
        check_indices(n, &kept)?;
        let m = kept.len();
        Ok(MeasurementOperator {
            descriptor: OperatorDescriptor::Indices {
                n,
                kept: kept.clone(),
            },
            variant: Variant::Mask { kept },
            n,
            m,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn descriptor(&self) -> &OperatorDescriptor {
        &self.descriptor
    }

    /// Observed sample indices, for row-subsampled identity operators.
    pub fn kept_indices(&self) -> Option<&[usize]> {
        match &self.variant {
            Variant::Mask { kept } => Some(kept),
            _ => None,
        }
    }

    /// Complement of [`Self::kept_indices`].
    pub fn missing_indices(&self) -> Option<Vec<usize>> {
        let kept = self.kept_indices()?;
        let mut observed = vec![false; self.n];
        for &i in kept {
            observed[i] = true;
        }
        Some((0..self.n).filter(|&i| !observed[i]).collect())
    }

    /// Selected DCT rows, for DCT operators.
    pub fn dct_rows(&self) -> Option<&[usize]> {
        match &self.variant {
            Variant::DctRows { rows, .. } => Some(rows),
            _ => None,
        }
    }

    /// Row-major `m × n` matrix of a Gaussian operator.
    pub fn gaussian_matrix(&self) -> Option<&[f64]> {
        match &self.variant {
            Variant::Gaussian { matrix } => Some(matrix),
            _ => None,
        }
    }

    /// `A·x`.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n {
            return Err(Error::shape(format!(
                "operator expects {} samples, got {}",
                self.n,
                x.len()
            )));
        }
        Ok(match &self.variant {
            Variant::Mask { kept } => kept.iter().map(|&i| x[i]).collect(),
            Variant::Gaussian { matrix } => matrix
                .chunks_exact(self.n)
                .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
                .collect(),
            Variant::DctRows { rows, plan } => {
                let coeffs = plan.forward(x);
                rows.iter().map(|&k| coeffs[k]).collect()
            }
            Variant::Identity => x.to_vec(),
        })
    }

    /// `Aᵀ·r`.
    pub fn adjoint(&self, r: &[f64]) -> Result<Vec<f64>> {
        if r.len() != self.m {
            return Err(Error::shape(format!(
                "adjoint expects {} measurements, got {}",
                self.m,
                r.len()
            )));
        }
        Ok(match &self.variant {
            Variant::Mask { kept } => {
                let mut out = vec![0.0; self.n];
                for (&i, &v) in kept.iter().zip(r) {
                    out[i] = v;
                }
                out
            }
            Variant::Gaussian { matrix } => {
                let mut out = vec![0.0; self.n];
                for (row, &v) in matrix.chunks_exact(self.n).zip(r) {
                    for (o, a) in out.iter_mut().zip(row) {
                        *o += a * v;
                    }
                }
                out
            }
            Variant::DctRows { rows, plan } => {
                let mut coeffs = vec![0.0; self.n];
                for (&k, &v) in rows.iter().zip(r) {
                    coeffs[k] = v;
                }
                plan.inverse(&coeffs)
            }
            Variant::Identity => r.to_vec(),
        })
    }
}

impl LinearMap for MeasurementOperator {
    fn input_dim(&self) -> usize {
        self.n
    }

    fn output_dim(&self) -> usize {
        self.m
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        MeasurementOperator::apply(self, x).expect("tape checked the input length")
    }

    fn adjoint(&self, r: &[f64]) -> Vec<f64> {
        MeasurementOperator::adjoint(self, r).expect("backward passes m-vectors")
    }
}

/// `x + σ·g` with `g` iid standard normal drawn from `seed`.
pub fn add_awgn(x: &[f64], sigma: f64, seed: u64) -> Result<Vec<f64>> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::invalid(format!(
            "noise level must be >= 0, got {sigma}"
        )));
    }
    if sigma == 0.0 {
        return Ok(x.to_vec());
    }
    let mut rng = seeded(seed);
    Ok(x.iter()
        .map(|v| v + sigma * rng.sample::<f64, _>(StandardNormal))
        .collect())
}
