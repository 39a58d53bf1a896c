//! Classical comparison methods: L1-regularized least squares over DCT
//! coefficients, and natural cubic spline interpolation for missing samples.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measurements::{Dct, MeasurementOperator};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LassoConfig {
    pub alpha: f64,
    pub max_iterations: usize,
    /// Stop once the relative change of the coefficient iterate drops below this.
    pub tolerance: f64,
}

impl Default for LassoConfig {
    fn default() -> Self {
        LassoConfig {
            alpha: 1e-5,
            max_iterations: 5000,
            tolerance: 1e-7,
        }
    }
}

impl LassoConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0) {
            return Err(Error::invalid(format!(
                "alpha must be >= 0, got {}",
                self.alpha
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::invalid("max_iterations must be >= 1"));
        }
        if !(self.tolerance >= 0.0) {
            return Err(Error::invalid("tolerance must be >= 0"));
        }
        Ok(())
    }
}

pub const POWER_ITERATIONS: usize = 50;

pub fn soft_threshold(v: f64, threshold: f64) -> f64 {
    if v > threshold {
        v - threshold
    } else if v < -threshold {
        v + threshold
    } else {
        0.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LassoSolution {
    pub coefficients: Vec<f64>,
    pub reconstruction: Vec<f64>,
    pub iterations: usize,
    /// Objective of the accepted iterate after each iteration.
    pub objective_history: Vec<f64>,
    pub lipschitz: f64,
}

/// `y ≈ A·idct(c)` with the DCT synthesis folded into the operator.
struct Composed<'a> {
    op: &'a MeasurementOperator,
    dct: Dct,
}

impl Composed<'_> {
    fn apply(&self, c: &[f64]) -> Result<Vec<f64>> {
        self.op.apply(&self.dct.inverse(c))
    }

    fn adjoint(&self, r: &[f64]) -> Result<Vec<f64>> {
        Ok(self.dct.forward(&self.op.adjoint(r)?))
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn l1(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

/// Largest eigenvalue of `BᵀB` by power iteration from a fixed start vector.
fn power_iteration(b: &Composed, n: usize) -> Result<f64> {
    let mut v: Vec<f64> = (0..n).map(|i| 1.0 + (i % 7) as f64 / 7.0).collect();
    let mut estimate = 0.0;
    for _ in 0..POWER_ITERATIONS {
        let len = norm(&v);
        if len == 0.0 {
            return Ok(0.0);
        }
        v.iter_mut().for_each(|x| *x /= len);
        let w = b.adjoint(&b.apply(&v)?)?;
        estimate = v.iter().zip(&w).map(|(a, b)| a * b).sum();
        v = w;
    }
    Ok(estimate)
}

/// Minimizes `(1/(2m))·‖y − A·idct(c)‖² + α·‖c‖₁` by monotone FISTA.
pub fn lasso_dct_solve(
    y: &[f64],
    op: &MeasurementOperator,
    n: usize,
    config: &LassoConfig,
) -> Result<LassoSolution> {
    config.validate()?;
    let m = op.m();
    if m == 0 || y.is_empty() {
        return Err(Error::invalid("Lasso needs at least one measurement"));
    }
    if op.n() != n || y.len() != m {
        return Err(Error::shape(format!(
            "operator is {}×{}, got n = {n} and {} measurements",
            op.m(),
            op.n(),
            y.len()
        )));
    }
    let b = Composed {
        op,
        dct: Dct::new(n),
    };
    let scale = 1.0 / m as f64;
    let lipschitz = scale * power_iteration(&b, n)?;
    if lipschitz <= 0.0 || !lipschitz.is_finite() {
        return Err(Error::NonFinite(format!("Lipschitz estimate {lipschitz}")));
    }
    let step = 1.0 / lipschitz;
    let threshold = config.alpha * step;
    let objective = |c: &[f64], bc: &[f64]| {
        let r: f64 = bc.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum();
        0.5 * scale * r + config.alpha * l1(c)
    };

    let mut x = vec![0.0; n];
    let mut fx = objective(&x, &vec![0.0; m]);
    let mut probe = x.clone();
    let mut t = 1.0f64;
    let mut history = Vec::new();
    let mut iterations = 0;
    while iterations < config.max_iterations {
        iterations += 1;
        let residual: Vec<f64> = b.apply(&probe)?.iter().zip(y).map(|(a, b)| a - b).collect();
        let grad = b.adjoint(&residual)?;
        let z: Vec<f64> = probe
            .iter()
            .zip(&grad)
            .map(|(p, g)| soft_threshold(p - step * scale * g, threshold))
            .collect();
        let fz = objective(&z, &b.apply(&z)?);
        if !fz.is_finite() {
            return Err(Error::NonFinite(format!(
                "Lasso objective at iteration {iterations}"
            )));
        }

        let change = norm(&z.iter().zip(&x).map(|(a, b)| a - b).collect::<Vec<_>>());
        let reference = norm(&x).max(f64::MIN_POSITIVE);
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let accepted = fz <= fx;
        let x_next = if accepted { z.clone() } else { x.clone() };
        probe = (0..n)
            .map(|i| {
                x_next[i]
                    + (t / t_next) * (z[i] - x_next[i])
                    + ((t - 1.0) / t_next) * (x_next[i] - x[i])
            })
            .collect();
        if accepted {
            fx = fz;
        }
        x = x_next;
        t = t_next;
        history.push(fx);
        if change <= config.tolerance * reference {
            break;
        }
    }

    let reconstruction = b.dct.inverse(&x);
    Ok(LassoSolution {
        coefficients: x,
        reconstruction,
        iterations,
        objective_history: history,
        lipschitz,
    })
}

/// Reconstruction `idct(c*)` from [`lasso_dct_solve`].
pub fn lasso_dct(
    y: &[f64],
    op: &MeasurementOperator,
    n: usize,
    config: &LassoConfig,
) -> Result<Vec<f64>> {
    Ok(lasso_dct_solve(y, op, n, config)?.reconstruction)
}

/// Natural cubic spline through `(known_indices[i], known_values[i])`,
/// evaluated at `0..n`. Positions before the first or after the last knot
/// take that knot's value.
pub fn spline_impute(known_values: &[f64], known_indices: &[usize], n: usize) -> Result<Vec<f64>> {
    let k = known_indices.len();
    if k != known_values.len() {
        return Err(Error::shape(format!(
            "{} knot indices but {} values",
            k,
            known_values.len()
        )));
    }
    if k < 2 {
        return Err(Error::invalid("spline needs at least 2 knots"));
    }
    if known_indices.windows(2).any(|w| w[0] >= w[1]) || known_indices[k - 1] >= n {
        return Err(Error::invalid(
            "knot indices must be strictly increasing and < n",
        ));
    }
    let xs: Vec<f64> = known_indices.iter().map(|&i| i as f64).collect();
    let ys = known_values;
    let h: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();

    // second derivatives with zero curvature at both ends (Thomas algorithm)
    let mut second = vec![0.0; k];
    if k > 2 {
        let inner = k - 2;
        let mut diag = vec![0.0; inner];
        let mut rhs = vec![0.0; inner];
        for j in 0..inner {
            let i = j + 1;
            diag[j] = 2.0 * (h[i - 1] + h[i]);
            rhs[j] = 6.0 * ((ys[i + 1] - ys[i]) / h[i] - (ys[i] - ys[i - 1]) / h[i - 1]);
        }
        for j in 1..inner {
            let factor = h[j] / diag[j - 1];
            diag[j] -= factor * h[j];
            rhs[j] -= factor * rhs[j - 1];
        }
        second[inner] = rhs[inner - 1] / diag[inner - 1];
        for j in (0..inner - 1).rev() {
            second[j + 1] = (rhs[j] - h[j + 1] * second[j + 2]) / diag[j];
        }
    }

    let mut out = vec![0.0; n];
    out[..known_indices[0]].fill(ys[0]);
    out[known_indices[k - 1]..].fill(ys[k - 1]);
    for seg in 0..k - 1 {
        let (lo, hi) = (known_indices[seg], known_indices[seg + 1]);
        out[lo] = ys[seg];
        for (p, slot) in out.iter_mut().enumerate().take(hi).skip(lo + 1) {
            let b = (p as f64 - xs[seg]) / h[seg];
            let a = 1.0 - b;
            *slot = a * ys[seg]
                + b * ys[seg + 1]
                + ((a * a * a - a) * second[seg] + (b * b * b - b) * second[seg + 1])
                    * h[seg]
                    * h[seg]
                    / 6.0;
        }
    }
    out[known_indices[k - 1]] = ys[k - 1];
    Ok(out)
}
