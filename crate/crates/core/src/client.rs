//! Client-side local training.
//!
//! A client copies the server model `y_0 = w`, runs SGD for one epoch (or a
//! fixed number of steps) and returns `delta = y_0 - y_Q`. The server
//! *subtracts* a scaled aggregate of these deltas, so a client that descends
//! produces a delta pointing along the accumulated gradient.

use std::fmt;
use std::str::FromStr;

use crate::datagen::{ClientDataset, Example};
use crate::error::{Error, Result};
use crate::models::Objective;
use crate::numkit::{DenseVec, PrngStream};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LocalMode {
    FixedSteps(usize),
    OneEpoch,
}

/// How a client's delta is weighted when it enters the server buffer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Weighting {
    /// Weight 1; small batches were already damped by the step-size rule.
    LrNorm,
    /// Weight = number of local training examples.
    ExampleWeight,
    Uniform,
}

impl Weighting {
    pub fn name(self) -> &'static str {
        match self {
            Weighting::LrNorm => "lr_norm",
            Weighting::ExampleWeight => "example_weight",
            Weighting::Uniform => "uniform",
        }
    }
}

impl fmt::Display for Weighting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Weighting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lr_norm" => Ok(Weighting::LrNorm),
            "example_weight" => Ok(Weighting::ExampleWeight),
            "uniform" => Ok(Weighting::Uniform),
            other => Err(Error::config(format!("unknown weighting `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalConfig {
    pub eta_local: f64,
    /// Nominal batch size `B`.
    pub batch_size: usize,
    pub mode: LocalMode,
    pub lr_norm_enabled: bool,
    pub weighting: Weighting,
    /// FedProx proximal coefficient; zero disables the term.
    pub prox_mu: f64,
}

impl Default for LocalConfig {
    fn default() -> Self {
        LocalConfig {
            eta_local: 0.1,
            batch_size: 32,
            mode: LocalMode::OneEpoch,
            lr_norm_enabled: true,
            weighting: Weighting::LrNorm,
            prox_mu: 0.0,
        }
    }
}

impl LocalConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta_local.is_finite() && self.eta_local >= 0.0) {
            return Err(Error::config(
                "local.eta_local must be a non-negative number",
            ));
        }
        if self.batch_size == 0 {
            return Err(Error::config("local.batch_size must be positive"));
        }
        if let LocalMode::FixedSteps(0) = self.mode {
            return Err(Error::config("local.steps must be positive"));
        }
        if !(self.prox_mu.is_finite() && self.prox_mu >= 0.0) {
            return Err(Error::config("local.prox_mu must be non-negative"));
        }
        Ok(())
    }

    /// Step size for a batch of `n` examples.
    pub fn step_lr(&self, n: usize) -> Result<f64> {
        if self.lr_norm_enabled {
            normalized_step_lr(self.eta_local, n, self.batch_size)
        } else if n == 0 || n > self.batch_size {
            Err(batch_error(n, self.batch_size))
        } else {
            Ok(self.eta_local)
        }
    }
}

fn batch_error(n: usize, b: usize) -> Error {
    Error::Structural(format!("batch of {n} examples outside 1..={b}"))
}

/// LR-Norm: `eta_local * n / B` for a batch of `n <= B` examples.
pub fn normalized_step_lr(eta_local: f64, n: usize, nominal_batch: usize) -> Result<f64> {
    if n == 0 || n > nominal_batch {
        return Err(batch_error(n, nominal_batch));
    }
    Ok(eta_local * n as f64 / nominal_batch as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClientUpdate {
    /// `y_0 - y_Q`.
    pub delta: DenseVec,
    pub client_id: usize,
    /// Server step whose model the client trained from.
    pub pull_version: u64,
    pub num_examples: usize,
    pub num_steps_taken: usize,
}

/// `base_grad + mu * (y - anchor)`, the gradient of the FedProx term added
/// to the local loss.
pub fn proximal_gradient(
    base_grad: &DenseVec,
    y: &DenseVec,
    anchor: &DenseVec,
    mu: f64,
) -> Result<DenseVec> {
    let diff = y.sub(anchor)?;
    DenseVec::axpy(mu, &diff, base_grad)
}

pub fn update_weight(update: &ClientUpdate, weighting: Weighting) -> f64 {
    match weighting {
        Weighting::LrNorm | Weighting::Uniform => 1.0,
        Weighting::ExampleWeight => update.num_examples as f64,
    }
}

/// Shuffle `0..n` and cut it into consecutive batches of at most `batch`.
pub fn epoch_batches(n: usize, batch: usize, rng: &mut PrngStream) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut order);
    order.chunks(batch.max(1)).map(<[usize]>::to_vec).collect()
}

/// One SGD step `y <- y - eta * (grad + mu (y - anchor))`. `grad` is scratch
/// space of the model's dimension.
pub fn sgd_step<O: Objective + ?Sized>(
    objective: &O,
    y: &mut [f64],
    batch: &[&Example],
    eta: f64,
    prox: Option<(f64, &[f64])>,
    grad: &mut [f64],
) -> Result<()> {
    objective.gradient(y, batch, grad)?;
    if let Some((mu, anchor)) = prox {
        for ((g, yi), wi) in grad.iter_mut().zip(y.iter()).zip(anchor) {
            *g += mu * (yi - wi);
        }
    }
    for (yi, g) in y.iter_mut().zip(grad.iter()) {
        *yi -= eta * g;
    }
    Ok(())
}

/// Run local SGD from `w` on `data` and return the client's delta.
pub fn local_train<O: Objective + ?Sized>(
    objective: &O,
    w: &DenseVec,
    data: &ClientDataset,
    cfg: &LocalConfig,
    rng: &mut PrngStream,
    pull_version: u64,
) -> Result<ClientUpdate> {
    if data.is_empty() {
        return Err(Error::config(format!(
            "client {} has no examples",
            data.client_id
        )));
    }
    if w.dim() != objective.num_params() {
        return Err(Error::DimMismatch {
            expected: objective.num_params(),
            actual: w.dim(),
        });
    }
    let n = data.len();
    let batches: Vec<Vec<usize>> = match cfg.mode {
        LocalMode::OneEpoch => epoch_batches(n, cfg.batch_size, rng),
        LocalMode::FixedSteps(q) => {
            let mut out = Vec::with_capacity(q);
            while out.len() < q {
                let take = q - out.len();
                out.extend(epoch_batches(n, cfg.batch_size, rng).into_iter().take(take));
            }
            out
        }
    };

    let anchor = w.as_slice();
    let prox = (cfg.prox_mu > 0.0).then_some((cfg.prox_mu, anchor));
    let mut y = anchor.to_vec();
    let mut grad = vec![0.0; y.len()];
    let mut refs: Vec<&Example> = Vec::with_capacity(cfg.batch_size.min(n));
    for (step, batch) in batches.iter().enumerate() {
        refs.clear();
        refs.extend(batch.iter().map(|&i| &data.examples[i]));
        let eta = cfg.step_lr(refs.len())?;
        sgd_step(objective, &mut y, &refs, eta, prox, &mut grad)?;
        if !y.iter().all(|v| v.is_finite()) {
            return Err(Error::Numerical { step });
        }
    }
    for (d, yi) in y.iter_mut().zip(anchor) {
        *d = yi - *d;
    }
    Ok(ClientUpdate {
        delta: DenseVec::from_vec(y),
        client_id: data.client_id,
        pull_version,
        num_examples: n,
        num_steps_taken: batches.len(),
    })
}
