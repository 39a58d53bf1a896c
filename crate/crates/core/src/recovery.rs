//! Fitting generator weights to observed measurements.
//!
//! The objective is `‖y − A·G(z, w)‖² + λ·TV(G(z, w))`, minimized over `w`
//! by RMSProp with momentum and coupled L2 weight decay. Optimization stops
//! after a fixed number of iterations and the last iterate is the output.
//! Independent restarts re-draw the generator and are aggregated in restart
//! order.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::autodiff::{NodeId, Tape, Tensor};
use crate::error::{Error, Result};
use crate::generator::{default_spec, init_generator, GeneratorNet, DEFAULT_FILTERS};
use crate::measurements::{add_awgn, identity_operator, MeasurementOperator};
use crate::rng::{derive_seed, label_hash};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RecoveryConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub tv_lambda: f64,
    pub iterations: usize,
    pub restarts: usize,
    pub filters_per_layer: usize,
    pub rmsprop_smoothing: f64,
    pub rmsprop_epsilon: f64,
    /// Set per run by the caller; not part of serialized configs.
    #[serde(skip)]
    pub seed: u64,
}

impl Default for RecoveryConfig {
    fn default() -> Self {
        RecoveryConfig {
            learning_rate: 1e-4,
            momentum: 0.9,
            weight_decay: 1.0,
            tv_lambda: 0.1,
            iterations: 3000,
            restarts: 5,
            filters_per_layer: DEFAULT_FILTERS,
            rmsprop_smoothing: 0.99,
            rmsprop_epsilon: 1e-8,
            seed: 0,
        }
    }
}

impl RecoveryConfig {
    pub fn validate(&self) -> Result<()> {
        let checks = [
            (self.learning_rate > 0.0, "learning_rate must be > 0"),
            (self.iterations >= 1, "iterations must be >= 1"),
            (self.restarts >= 1, "restarts must be >= 1"),
            (self.tv_lambda >= 0.0, "tv_lambda must be >= 0"),
            (self.weight_decay >= 0.0, "weight_decay must be >= 0"),
            (
                self.filters_per_layer >= 1,
                "filters_per_layer must be >= 1",
            ),
            (
                (0.0..=1.0).contains(&self.rmsprop_smoothing),
                "rmsprop_smoothing must lie in [0, 1]",
            ),
            (self.rmsprop_epsilon >= 0.0, "rmsprop_epsilon must be >= 0"),
            (self.momentum >= 0.0, "momentum must be >= 0"),
        ];
        for (ok, message) in checks {
            if !ok {
                return Err(Error::invalid(message));
            }
        }
        Ok(())
    }
}

/// Nodes recorded by [`objective`].
#[derive(Clone, Debug)]
pub struct ObjectiveGraph {
    pub loss: NodeId,
    pub fidelity: NodeId,
    pub tv: NodeId,
    pub output: NodeId,
    pub params: Vec<NodeId>,
}

/// Records the full objective for `net` on `tape`.
pub fn objective(
    net: &GeneratorNet,
    op: &MeasurementOperator,
    y: &[f64],
    tv_lambda: f64,
    tape: &mut Tape,
) -> Result<ObjectiveGraph> {
    if op.n() != net.spec().output_length {
        return Err(Error::shape(format!(
            "operator acts on {} samples but the generator emits {}",
            op.n(),
            net.spec().output_length
        )));
    }
    if y.len() != op.m() {
        return Err(Error::shape(format!(
            "{} measurements for an operator with m = {}",
            y.len(),
            op.m()
        )));
    }
    let graph = net.forward(tape)?;
    let measured = tape.linear(graph.output, Arc::new(op.clone()))?;
    let fidelity = tape.mse_loss(measured, y)?;
    let tv = tape.tv_loss(graph.output)?;
    let weighted = tape.scale(tv, tv_lambda)?;
    let loss = tape.add(fidelity, weighted)?;
    Ok(ObjectiveGraph {
        loss,
        fidelity,
        tv,
        output: graph.output,
        params: graph.params,
    })
}

/// Per-weight optimizer buffers.
#[derive(Clone, Debug, PartialEq)]
pub struct RmsPropState {
    pub square_avg: Vec<Tensor>,
    pub momentum_buf: Vec<Tensor>,
}

impl RmsPropState {
    pub fn zeros_like(weights: &[Tensor]) -> Self {
        let zeros: Vec<Tensor> = weights.iter().map(|w| Tensor::zeros(w.shape())).collect();
        RmsPropState {
            square_avg: zeros.clone(),
            momentum_buf: zeros,
        }
    }
}

/// One RMSProp update in place:
/// `g ← ∇ + wd·w`, `s ← ρs + (1−ρ)g²`, `u ← μu + g/√(s+ε)`, `w ← w − lr·u`.
pub fn rmsprop_step(
    weights: &mut [Tensor],
    gradients: &[Tensor],
    state: &mut RmsPropState,
    config: &RecoveryConfig,
) -> Result<()> {
    let n = weights.len();
    if gradients.len() != n || state.square_avg.len() != n || state.momentum_buf.len() != n {
        return Err(Error::shape("optimizer state does not match the weights"));
    }
    let rho = config.rmsprop_smoothing;
    for i in 0..n {
        let w = weights[i].values_mut();
        let g = gradients[i].values();
        let s = state.square_avg[i].values_mut();
        let u = state.momentum_buf[i].values_mut();
        if g.len() != w.len() || s.len() != w.len() || u.len() != w.len() {
            return Err(Error::shape(format!("tensor {i}: optimizer shapes differ")));
        }
        for j in 0..w.len() {
            let grad = g[j] + config.weight_decay * w[j];
            s[j] = rho * s[j] + (1.0 - rho) * grad * grad;
            u[j] = config.momentum * u[j] + grad / (s[j] + config.rmsprop_epsilon).sqrt();
            w[j] -= config.learning_rate * u[j];
        }
    }
    Ok(())
}

/// Per-iteration objective values of one restart, recorded before each step.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LossCurve {
    pub objective: Vec<f64>,
    pub fidelity: Vec<f64>,
    pub tv: Vec<f64>,
}

impl LossCurve {
    pub fn len(&self) -> usize {
        self.objective.len()
    }

    pub fn is_empty(&self) -> bool {
        self.objective.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RestartOutcome {
    pub restart: usize,
    pub seed: u64,
    pub curve: LossCurve,
    /// Output of the final weights; `None` when the restart diverged.
    pub reconstruction: Option<Vec<f64>>,
    pub final_objective: Option<f64>,
    pub mse: Option<f64>,
    pub error: Option<String>,
}

impl RestartOutcome {
    pub fn succeeded(&self) -> bool {
        self.error.is_none()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RecoveryResult {
    pub restarts: Vec<RestartOutcome>,
    /// Index into `restarts` of the successful restart with the lowest final objective.
    pub best: Option<usize>,
    /// Mean of the successful restarts' MSEs, when ground truth was given.
    pub mean_mse: Option<f64>,
}

impl RecoveryResult {
    pub fn best_reconstruction(&self) -> Option<&[f64]> {
        self.best
            .and_then(|i| self.restarts[i].reconstruction.as_deref())
    }

    pub fn per_restart_mse(&self) -> Vec<Option<f64>> {
        self.restarts.iter().map(|r| r.mse).collect()
    }

    pub fn failures(&self) -> impl Iterator<Item = &RestartOutcome> {
        self.restarts.iter().filter(|r| !r.succeeded())
    }
}

/// Seed of restart `r`. Independent of how many restarts are run.
pub fn restart_seed(base: u64, restart: usize) -> u64 {
    derive_seed(base, &[label_hash("restart"), restart as u64])
}

fn mean_squared(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64
}

/// How a restart's reconstruction is scored against ground truth.
pub type Scorer<'a> = &'a (dyn Fn(&[f64]) -> Result<f64> + Sync);

/// Fits a fresh generator `config.restarts` times.
///
/// `ground_truth` scores each reconstruction by plain MSE; use
/// [`recover_scored`] for other metrics.
pub fn recover(
    y: &[f64],
    op: &MeasurementOperator,
    config: &RecoveryConfig,
    ground_truth: Option<&[f64]>,
) -> Result<RecoveryResult> {
    if let Some(x) = ground_truth {
        if x.len() != op.n() {
            return Err(Error::shape(format!(
                "ground truth has {} samples, operator n = {}",
                x.len(),
                op.n()
            )));
        }
    }
    let score = |xhat: &[f64]| Ok(mean_squared(ground_truth.unwrap_or(xhat), xhat));
    recover_scored(y, op, config, ground_truth.map(|_| &score as Scorer))
}

pub fn recover_scored(
    y: &[f64],
    op: &MeasurementOperator,
    config: &RecoveryConfig,
    scorer: Option<Scorer>,
) -> Result<RecoveryResult> {
    config.validate()?;
    let spec = default_spec(op.n(), config.filters_per_layer)?;
    if y.len() != op.m() {
        return Err(Error::shape(format!(
            "{} measurements for an operator with m = {}",
            y.len(),
            op.m()
        )));
    }

    let mut restarts = Vec::with_capacity(config.restarts);
    for r in 0..config.restarts {
        let seed = restart_seed(config.seed, r);
        let net = init_generator(&spec, seed)?;
        let mut outcome = run_restart(net, y, op, config);
        outcome.restart = r;
        outcome.seed = seed;
        if let (Some(score), Some(xhat)) = (scorer, &outcome.reconstruction) {
            outcome.mse = Some(score(xhat)?);
        }
        restarts.push(outcome);
    }

    let best = restarts
        .iter()
        .enumerate()
        .filter_map(|(i, r)| r.final_objective.map(|f| (i, f)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(i, _)| i);
    let scored: Vec<f64> = restarts.iter().filter_map(|r| r.mse).collect();
    let mean_mse = (!scored.is_empty()).then(|| scored.iter().sum::<f64>() / scored.len() as f64);
    Ok(RecoveryResult {
        restarts,
        best,
        mean_mse,
    })
}

fn run_restart(
    mut net: GeneratorNet,
    y: &[f64],
    op: &MeasurementOperator,
    config: &RecoveryConfig,
) -> RestartOutcome {
    let mut curve = LossCurve::default();
    let mut state = RmsPropState::zeros_like(net.parameters());
    let failed = |curve: LossCurve, message: String| RestartOutcome {
        restart: 0,
        seed: 0,
        curve,
        reconstruction: None,
        final_objective: None,
        mse: None,
        error: Some(message),
    };

    for iteration in 0..=config.iterations {
        let mut tape = Tape::new();
        let graph = match objective(&net, op, y, config.tv_lambda, &mut tape) {
            Ok(g) => g,
            Err(e) => return failed(curve, e.to_string()),
        };
        let loss = tape.value(graph.loss).values()[0];
        if !loss.is_finite() {
            return failed(
                curve,
                format!("objective became {loss} at iteration {iteration}"),
            );
        }
        if iteration == config.iterations {
            let reconstruction = tape.value(graph.output).values().to_vec();
            return RestartOutcome {
                restart: 0,
                seed: 0,
                curve,
                reconstruction: Some(reconstruction),
                final_objective: Some(loss),
                mse: None,
                error: None,
            };
        }
        curve.objective.push(loss);
        curve.fidelity.push(tape.value(graph.fidelity).values()[0]);
        curve.tv.push(tape.value(graph.tv).values()[0]);

        let step = tape.backward(graph.loss).and_then(|mut grads| {
            let gradients: Vec<Tensor> = graph
                .params
                .iter()
                .zip(net.parameters())
                .map(|(&id, w)| grads.take(id).unwrap_or_else(|| Tensor::zeros(w.shape())))
                .collect();
            rmsprop_step(net.parameters_mut(), &gradients, &mut state, config)
        });
        if let Err(e) = step {
            return failed(curve, e.to_string());
        }
    }
    unreachable!("the loop returns at the final iteration")
}

/// `base` adapted for denoising at noise level `sigma`: 300 iterations and a
/// filter count that shrinks as the noise grows.
pub fn denoise_config(sigma: f64, base: &RecoveryConfig) -> Result<RecoveryConfig> {
    if !(sigma >= 0.0) {
        return Err(Error::invalid(format!(
            "noise level must be >= 0, got {sigma}"
        )));
    }
    let filters_per_layer = if sigma < 0.15 {
        64
    } else if sigma < 0.2 {
        16
    } else {
        8
    };
    Ok(RecoveryConfig {
        iterations: 300,
        filters_per_layer,
        ..base.clone()
    })
}

/// Loss curves from fitting the clean signal, pure noise, and their sum.
/// The fidelity term of each is what shows the gap.
#[derive(Clone, Debug, PartialEq)]
pub struct ImpedanceCurves {
    pub clean: LossCurve,
    pub noise: LossCurve,
    pub noisy: LossCurve,
}

/// Fits a single restart to each of the three targets from one shared
/// initialization. The noise draw is seeded from `config.seed`.
pub fn noise_impedance_curves(
    signal: &[f64],
    sigma: f64,
    iterations: usize,
    config: &RecoveryConfig,
) -> Result<ImpedanceCurves> {
    let op = identity_operator(signal.len())?;
    let run_config = RecoveryConfig {
        iterations,
        restarts: 1,
        ..config.clone()
    };
    let noise = add_awgn(
        &vec![0.0; signal.len()],
        sigma,
        derive_seed(config.seed, &[label_hash("impedance-noise")]),
    )?;
    let noisy: Vec<f64> = signal.iter().zip(&noise).map(|(a, b)| a + b).collect();
    let fit = |target: &[f64]| -> Result<LossCurve> {
        let result = recover(target, &op, &run_config, None)?;
        let outcome = &result.restarts[0];
        match &outcome.error {
            Some(e) => Err(Error::NonFinite(e.clone())),
            None => Ok(outcome.curve.clone()),
        }
    };
    Ok(ImpedanceCurves {
        clean: fit(signal)?,
        noise: fit(&noise)?,
        noisy: fit(&noisy)?,
    })
}
