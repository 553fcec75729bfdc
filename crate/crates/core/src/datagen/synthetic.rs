use rand::Rng;
use rand_distr::{Gamma, StandardNormal};

use super::{ClientDataset, Example};
use crate::error::{Error, Result};
use crate::numkit::PrngStream;

/// Parameters of a synthetic class-conditional Gaussian federation.
///
/// Class `c` has mean `class_separation * e_c` (a scaled one-hot corner) and
/// unit isotropic noise. Each client draws its label mix from
/// `Dirichlet(label_skew_alpha)` and its size from a log-normal whose mean is
/// `mean_examples_per_client`.
#[derive(Debug, Clone, PartialEq)]
pub struct FederationSpec {
    pub num_clients: usize,
    pub feature_dim: usize,
    pub num_classes: usize,
    pub label_skew_alpha: f64,
    pub size_lognormal_sigma: f64,
    pub mean_examples_per_client: usize,
    pub class_separation: f64,
    pub seed: u64,
}

impl Default for FederationSpec {
    fn default() -> Self {
        FederationSpec {
            num_clients: 2000,
            feature_dim: 10,
            num_classes: 3,
            label_skew_alpha: 0.3,
            size_lognormal_sigma: 1.0,
            mean_examples_per_client: 50,
            class_separation: 2.0,
            seed: 1,
        }
    }
}

impl FederationSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_clients == 0 {
            return Err(Error::config("federation needs at least one client"));
        }
        if self.mean_examples_per_client == 0 {
            return Err(Error::config("mean_examples_per_client must be at least 1"));
        }
        if self.num_classes < 2 {
            return Err(Error::config("need at least two classes"));
        }
        if self.feature_dim < self.num_classes {
            return Err(Error::config(format!(
                "feature_dim ({}) must be >= num_classes ({}) to place class means",
                self.feature_dim, self.num_classes
            )));
        }
        if !(self.label_skew_alpha.is_finite() && self.label_skew_alpha > 0.0) {
            return Err(Error::config("label_skew_alpha must be positive"));
        }
        if !(self.size_lognormal_sigma.is_finite() && self.size_lognormal_sigma >= 0.0) {
            return Err(Error::config("size_lognormal_sigma must be non-negative"));
        }
        if !self.class_separation.is_finite() {
            return Err(Error::config("class_separation must be finite"));
        }
        Ok(())
    }

    pub fn class_mean(&self, class: usize) -> Vec<f64> {
        let mut mean = vec![0.0; self.feature_dim];
        mean[class] = self.class_separation;
        mean
    }
}

fn draw_size(spec: &FederationSpec, rng: &mut PrngStream) -> usize {
    let sigma = spec.size_lognormal_sigma;
    let mu = (spec.mean_examples_per_client as f64).ln() - 0.5 * sigma * sigma;
    let z: f64 = rng.sample(StandardNormal);
    ((mu + sigma * z).exp().round() as usize).max(1)
}

fn draw_label_mix(spec: &FederationSpec, rng: &mut PrngStream) -> Vec<f64> {
    let gamma = Gamma::new(spec.label_skew_alpha, 1.0).expect("alpha validated");
    let mut p: Vec<f64> = (0..spec.num_classes).map(|_| rng.sample(gamma)).collect();
    let total: f64 = p.iter().sum();
    if total > 0.0 && total.is_finite() {
        p.iter_mut().for_each(|v| *v /= total);
    } else {
        // every gamma draw underflowed: put all mass on one class
        let c = rng.below(spec.num_classes as u64) as usize;
        p.iter_mut()
            .enumerate()
            .for_each(|(i, v)| *v = (i == c) as u8 as f64);
    }
    p
}

/// Largest-remainder apportionment of `n` examples to classes.
fn apportion(p: &[f64], n: usize) -> Vec<usize> {
    let quotas: Vec<f64> = p.iter().map(|q| q * n as f64).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let mut left = n - counts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..p.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &c in order.iter().cycle() {
        if left == 0 {
            break;
        }
        counts[c] += 1;
        left -= 1;
    }
    counts
}

pub fn generate_federation(spec: &FederationSpec) -> Result<Vec<ClientDataset>> {
    spec.validate()?;
    let root = PrngStream::new(spec.seed, 0x5EED_FEDE);
    let means: Vec<Vec<f64>> = (0..spec.num_classes).map(|c| spec.class_mean(c)).collect();

    let clients = (0..spec.num_clients)
        .map(|client_id| {
            let mut rng = root.fork(client_id as u64);
            let size = draw_size(spec, &mut rng);
            let mix = draw_label_mix(spec, &mut rng);
            let mut labels: Vec<usize> = apportion(&mix, size)
                .into_iter()
                .enumerate()
                .flat_map(|(c, k)| std::iter::repeat_n(c, k))
                .collect();
            rng.shuffle(&mut labels);
            let examples = labels
                .into_iter()
                .map(|label| {
                    let features = means[label]
                        .iter()
                        .map(|m| {
                            let z: f64 = rng.sample(StandardNormal);
                            m + z
                        })
                        .collect();
                    Example::new(features, label)
                })
                .collect();
            ClientDataset::new(client_id, examples)
        })
        .collect();
    Ok(clients)
}
