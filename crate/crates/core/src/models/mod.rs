//! Differentiable classifiers trained by the clients: multinomial logistic
//! regression and a one-hidden-layer tanh MLP, both scored with mean
//! cross-entropy.

mod checkpoint;
mod gradcheck;

use std::fmt;

pub use checkpoint::{read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC};
pub use gradcheck::{finite_diff_against, finite_diff_check, FiniteDiffReport};

use crate::datagen::Example;
use crate::error::{Error, Result};
use crate::numkit::{DenseVec, PrngStream};

/// Anything local SGD can optimise: a loss over a batch and its gradient
/// with respect to a flat parameter vector.
pub trait Objective {
    fn num_params(&self) -> usize;

    fn loss(&self, params: &[f64], batch: &[&Example]) -> Result<f64>;

    /// Writes the gradient of [`Objective::loss`] into `grad`.
    fn gradient(&self, params: &[f64], batch: &[&Example], grad: &mut [f64]) -> Result<()>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Architecture {
    /// Weights `W` (classes x features, row-major) followed by bias `b`.
    Logistic { features: usize, classes: usize },
    /// `W1` (hidden x features), `b1`, `W2` (classes x hidden), `b2`.
    Mlp {
        features: usize,
        hidden: usize,
        classes: usize,
    },
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Architecture::Logistic { features, classes } => {
                write!(f, "logistic({features}x{classes})")
            }
            Architecture::Mlp {
                features,
                hidden,
                classes,
            } => write!(f, "mlp({features}x{hidden}x{classes})"),
        }
    }
}

impl Architecture {
    pub fn features(&self) -> usize {
        match *self {
            Architecture::Logistic { features, .. } | Architecture::Mlp { features, .. } => {
                features
            }
        }
    }

    pub fn classes(&self) -> usize {
        match *self {
            Architecture::Logistic { classes, .. } | Architecture::Mlp { classes, .. } => classes,
        }
    }

    pub fn param_count(&self) -> usize {
        match *self {
            Architecture::Logistic { features, classes } => classes * (features + 1),
            Architecture::Mlp {
                features,
                hidden,
                classes,
            } => hidden * (features + 1) + classes * (hidden + 1),
        }
    }

    /// Zeros for logistic regression; `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`
    /// weights and zero biases for the MLP.
    pub fn init(&self, rng: &PrngStream) -> ModelParams {
        let mut flat = vec![0.0; self.param_count()];
        if let Architecture::Mlp {
            features,
            hidden,
            classes,
        } = *self
        {
            let mut rng = rng.fork(0x1417);
            let mut fill = |slice: &mut [f64], fan_in: usize| {
                let bound = 1.0 / (fan_in as f64).sqrt();
                for v in slice {
                    *v = (2.0 * rng.next_unit() - 1.0) * bound;
                }
            };
            let w1 = hidden * features;
            fill(&mut flat[..w1], features);
            let w2_start = w1 + hidden;
            fill(&mut flat[w2_start..w2_start + classes * hidden], hidden);
        }
        ModelParams {
            arch: *self,
            flat: DenseVec::from_vec(flat),
        }
    }

    fn check(&self, params: &[f64], batch: &[&Example]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::DimMismatch {
                expected: self.param_count(),
                actual: params.len(),
            });
        }
        if batch.is_empty() {
            return Err(Error::Structural("empty batch".into()));
        }
        for ex in batch {
            if ex.features.dim() != self.features() {
                return Err(Error::DimMismatch {
                    expected: self.features(),
                    actual: ex.features.dim(),
                });
            }
            if ex.label >= self.classes() {
                return Err(Error::Structural(format!(
                    "label {} out of range for {} classes",
                    ex.label,
                    self.classes()
                )));
            }
        }
        Ok(())
    }

    /// Logits for one example; `hidden` receives the tanh activations of the
    /// MLP and is untouched for the logistic model.
    fn forward(&self, params: &[f64], x: &[f64], hidden: &mut [f64], logits: &mut [f64]) {
        match *self {
            Architecture::Logistic { features, classes } => {
                let (w, b) = params.split_at(classes * features);
                for c in 0..classes {
                    let row = &w[c * features..(c + 1) * features];
                    logits[c] = b[c] + dot(row, x);
                }
            }
            Architecture::Mlp {
                features,
                hidden: width,
                classes,
            } => {
                let (w1, rest) = params.split_at(width * features);
                let (b1, rest) = rest.split_at(width);
                let (w2, b2) = rest.split_at(classes * width);
                for j in 0..width {
                    hidden[j] = (b1[j] + dot(&w1[j * features..(j + 1) * features], x)).tanh();
                }
                for c in 0..classes {
                    logits[c] = b2[c] + dot(&w2[c * width..(c + 1) * width], hidden);
                }
            }
        }
    }

    fn hidden_width(&self) -> usize {
        match *self {
            Architecture::Logistic { .. } => 0,
            Architecture::Mlp { hidden, .. } => hidden,
        }
    }

    /// Top-1 accuracy and mean cross-entropy over `data`.
    pub fn evaluate(&self, params: &[f64], data: &[Example]) -> Result<Evaluation> {
        if data.is_empty() {
            return Err(Error::config("cannot evaluate on an empty dataset"));
        }
        let refs: Vec<&Example> = data.iter().collect();
        self.check(params, &refs)?;
        let mut hidden = vec![0.0; self.hidden_width()];
        let mut logits = vec![0.0; self.classes()];
        let mut correct = 0usize;
        let mut total_loss = 0.0;
        for ex in data {
            self.forward(params, ex.features.as_slice(), &mut hidden, &mut logits);
            total_loss += log_sum_exp(&logits) - logits[ex.label];
            if argmax(&logits) == ex.label {
                correct += 1;
            }
        }
        Ok(Evaluation {
            accuracy: correct as f64 / data.len() as f64,
            loss: total_loss / data.len() as f64,
        })
    }
}

impl Objective for Architecture {
    fn num_params(&self) -> usize {
        self.param_count()
    }

    fn loss(&self, params: &[f64], batch: &[&Example]) -> Result<f64> {
        self.check(params, batch)?;
        let mut hidden = vec![0.0; self.hidden_width()];
        let mut logits = vec![0.0; self.classes()];
        let total: f64 = batch
            .iter()
            .map(|ex| {
                self.forward(params, ex.features.as_slice(), &mut hidden, &mut logits);
                log_sum_exp(&logits) - logits[ex.label]
            })
            .sum();
        Ok(total / batch.len() as f64)
    }

    fn gradient(&self, params: &[f64], batch: &[&Example], grad: &mut [f64]) -> Result<()> {
        self.check(params, batch)?;
        if grad.len() != params.len() {
            return Err(Error::DimMismatch {
                expected: params.len(),
                actual: grad.len(),
            });
        }
        grad.iter_mut().for_each(|g| *g = 0.0);
        let classes = self.classes();
        let features = self.features();
        let width = self.hidden_width();
        let mut hidden = vec![0.0; width];
        let mut logits = vec![0.0; classes];
        let mut dhidden = vec![0.0; width];

        for ex in batch {
            let x = ex.features.as_slice();
            self.forward(params, x, &mut hidden, &mut logits);
            softmax_in_place(&mut logits);
            logits[ex.label] -= 1.0;
            let dz = &logits;
            match *self {
                Architecture::Logistic { .. } => {
                    let (gw, gb) = grad.split_at_mut(classes * features);
                    for c in 0..classes {
                        axpy(dz[c], x, &mut gw[c * features..(c + 1) * features]);
                        gb[c] += dz[c];
                    }
                }
                Architecture::Mlp { .. } => {
                    let w2 =
                        &params[width * (features + 1)..width * (features + 1) + classes * width];
                    let (gw1, rest) = grad.split_at_mut(width * features);
                    let (gb1, rest) = rest.split_at_mut(width);
                    let (gw2, gb2) = rest.split_at_mut(classes * width);
                    dhidden.iter_mut().for_each(|v| *v = 0.0);
                    for c in 0..classes {
                        axpy(dz[c], &hidden, &mut gw2[c * width..(c + 1) * width]);
                        gb2[c] += dz[c];
                        axpy(dz[c], &w2[c * width..(c + 1) * width], &mut dhidden);
                    }
                    for j in 0..width {
                        let da = dhidden[j] * (1.0 - hidden[j] * hidden[j]);
                        axpy(da, x, &mut gw1[j * features..(j + 1) * features]);
                        gb1[j] += da;
                    }
                }
            }
        }
        let inv = 1.0 / batch.len() as f64;
        grad.iter_mut().for_each(|g| *g *= inv);
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    pub loss: f64,
}

/// A flat parameter vector tagged with the architecture that reads it.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub arch: Architecture,
    pub flat: DenseVec,
}

impl ModelParams {
    pub fn new(arch: Architecture, flat: DenseVec) -> Result<Self> {
        if flat.dim() != arch.param_count() {
            return Err(Error::DimMismatch {
                expected: arch.param_count(),
                actual: flat.dim(),
            });
        }
        Ok(ModelParams { arch, flat })
    }

    pub fn zeros(arch: Architecture) -> Self {
        ModelParams {
            arch,
            flat: DenseVec::zeros(arch.param_count()),
        }
    }
}

pub fn loss(params: &ModelParams, batch: &[&Example]) -> Result<f64> {
    params.arch.loss(params.flat.as_slice(), batch)
}

pub fn gradient(params: &ModelParams, batch: &[&Example]) -> Result<DenseVec> {
    let mut g = vec![0.0; params.flat.dim()];
    params
        .arch
        .gradient(params.flat.as_slice(), batch, &mut g)?;
    Ok(DenseVec::from_vec(g))
}

pub fn evaluate(params: &ModelParams, dataset: &[Example]) -> Result<Evaluation> {
    params.arch.evaluate(params.flat.as_slice(), dataset)
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn log_sum_exp(z: &[f64]) -> f64 {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

fn softmax_in_place(z: &mut [f64]) {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in z.iter_mut() {
        *v = (*v - m).exp();
        total += *v;
    }
    z.iter_mut().for_each(|v| *v /= total);
}

/// Index of the largest value; ties go to the lowest index.
fn argmax(z: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in z.iter().enumerate().skip(1) {
        if v > z[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    const LOGREG2: Architecture = Architecture::Logistic {
        features: 2,
        classes: 2,
    };

    fn ex(x: &[f64], y: usize) -> Example {
        Example::new(x.to_vec(), y)
    }

    #[test]
    fn zero_logistic_loss_is_ln2() {
        let data = [ex(&[1.0, 2.0], 0), ex(&[-1.0, 0.5], 1)];
        let refs: Vec<&Example> = data.iter().collect();
        let l = loss(&ModelParams::zeros(LOGREG2), &refs).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn duplicated_batch_has_same_loss() {
        let p = ModelParams::new(
            LOGREG2,
            DenseVec::from_vec(vec![0.3, -0.2, 0.1, 0.7, 0.05, -0.4]),
        )
        .unwrap();
        let data = [ex(&[1.0, 2.0], 0), ex(&[-1.0, 0.5], 1), ex(&[0.2, 0.2], 1)];
        let once: Vec<&Example> = data.iter().collect();
        let twice: Vec<&Example> = data.iter().chain(data.iter()).collect();
        let a = loss(&p, &once).unwrap();
        let b = loss(&p, &twice).unwrap();
        assert!((a - b).abs() < 1e-15);
    }

    #[test]
    fn loss_is_permutation_invariant() {
        let p = ModelParams::new(
            LOGREG2,
            DenseVec::from_vec(vec![0.3, -0.2, 0.1, 0.7, 0.05, -0.4]),
        )
        .unwrap();
        let data = [ex(&[1.0, 2.0], 0), ex(&[-1.0, 0.5], 1), ex(&[0.2, 0.2], 1)];
        let fwd: Vec<&Example> = data.iter().collect();
        let rev: Vec<&Example> = data.iter().rev().collect();
        assert!((loss(&p, &fwd).unwrap() - loss(&p, &rev).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn gradient_at_origin_single_positive_example() {
        let x = [0.8, -1.5];
        let data = [ex(&x, 1)];
        let refs: Vec<&Example> = data.iter().collect();
        let g = gradient(&ModelParams::zeros(LOGREG2), &refs).unwrap();
        // row of class 1 holds (sigma(0) - 1) x = -0.5 x
        assert_eq!(&g.as_slice()[2..4], &[-0.5 * x[0], -0.5 * x[1]]);
        assert_eq!(&g.as_slice()[0..2], &[0.5 * x[0], 0.5 * x[1]]);
        assert_eq!(&g.as_slice()[4..6], &[0.5, -0.5]);
    }

    #[test]
    fn gradient_of_concatenation_is_weighted_mean() {
        let arch = Architecture::Mlp {
            features: 2,
            hidden: 3,
            classes: 3,
        };
        let p = arch.init(&PrngStream::new(4, 0));
        let a = [ex(&[1.0, 2.0], 0), ex(&[-1.0, 0.5], 2)];
        let b = [ex(&[0.1, -0.3], 1), ex(&[2.0, 0.0], 2), ex(&[0.5, 0.5], 0)];
        let ga = gradient(&p, &a.iter().collect::<Vec<_>>()).unwrap();
        let gb = gradient(&p, &b.iter().collect::<Vec<_>>()).unwrap();
        let all: Vec<&Example> = a.iter().chain(b.iter()).collect();
        let g = gradient(&p, &all).unwrap();
        for i in 0..g.dim() {
            let expect = (2.0 * ga[i] + 3.0 * gb[i]) / 5.0;
            assert!((g[i] - expect).abs() < 1e-14);
        }
    }

    #[test]
    fn small_step_descends() {
        let arch = Architecture::Logistic {
            features: 3,
            classes: 3,
        };
        let data = [
            ex(&[2.0, 0.0, 0.1], 0),
            ex(&[0.0, 2.0, -0.3], 1),
            ex(&[0.2, 0.1, 2.0], 2),
            ex(&[1.5, 0.4, 0.0], 0),
        ];
        let refs: Vec<&Example> = data.iter().collect();
        let p = ModelParams::zeros(arch);
        let g = gradient(&p, &refs).unwrap();
        let next = ModelParams::new(arch, DenseVec::axpy(-0.01, &g, &p.flat).unwrap()).unwrap();
        assert!(loss(&next, &refs).unwrap() < loss(&p, &refs).unwrap());
    }

    #[test]
    fn evaluate_oracle_and_chance() {
        // w = identity separates points on their own axis
        let arch = Architecture::Logistic {
            features: 2,
            classes: 2,
        };
        let p =
            ModelParams::new(arch, DenseVec::from_vec(vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0])).unwrap();
        let data = vec![ex(&[2.0, 0.0], 0), ex(&[0.0, 3.0], 1), ex(&[1.0, -1.0], 0)];
        assert_eq!(evaluate(&p, &data).unwrap().accuracy, 1.0);

        let balanced = vec![
            ex(&[1.0, 1.0], 0),
            ex(&[1.0, 1.0], 1),
            ex(&[2.0, 0.0], 0),
            ex(&[0.0, 2.0], 1),
        ];
        let zero = evaluate(&ModelParams::zeros(arch), &balanced).unwrap();
        assert!((0.4..=0.6).contains(&zero.accuracy));
        assert!((zero.loss - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn evaluate_is_pure_and_rejects_empty() {
        let arch = Architecture::Mlp {
            features: 2,
            hidden: 4,
            classes: 2,
        };
        let p = arch.init(&PrngStream::new(1, 1));
        let data = vec![ex(&[1.0, 2.0], 0), ex(&[-1.0, 0.5], 1)];
        assert_eq!(evaluate(&p, &data).unwrap(), evaluate(&p, &data).unwrap());
        assert!(matches!(evaluate(&p, &[]), Err(Error::Config(_))));
    }

    #[test]
    fn dimension_errors() {
        let data = [ex(&[1.0, 2.0, 3.0], 0)];
        let refs: Vec<&Example> = data.iter().collect();
        assert!(matches!(
            loss(&ModelParams::zeros(LOGREG2), &refs),
            Err(Error::DimMismatch { .. })
        ));
        assert!(ModelParams::new(LOGREG2, DenseVec::zeros(5)).is_err());
    }

    #[test]
    fn argmax_prefers_lowest_index() {
        assert_eq!(argmax(&[0.0, 0.0, 0.0]), 0);
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
    }

    #[test]
    fn mlp_init_is_bounded_and_deterministic() {
        let arch = Architecture::Mlp {
            features: 16,
            hidden: 32,
            classes: 4,
        };
        let a = arch.init(&PrngStream::new(3, 0));
        assert_eq!(a, arch.init(&PrngStream::new(3, 0)));
        let w1 = &a.flat.as_slice()[..32 * 16];
        assert!(w1.iter().all(|v| v.abs() <= 0.25));
        assert!(w1.iter().any(|v| *v != 0.0));
        assert!(a.flat.as_slice()[32 * 16..32 * 17]
            .iter()
            .all(|v| *v == 0.0));
    }
}
