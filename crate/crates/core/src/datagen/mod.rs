//! Federated datasets: synthetic non-IID federations with long-tailed client
//! sizes, CSV ingestion, and per-client train/eval splitting.

mod csv_source;
mod split;
mod synthetic;

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

pub use csv_source::load_csv_federation;
pub use split::train_eval_split;
pub use synthetic::{generate_federation, FederationSpec};

use crate::numkit::DenseVec;

#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub features: DenseVec,
    /// Class id in `[0, num_classes)`.
    pub label: usize,
}

impl Example {
    pub fn new(features: Vec<f64>, label: usize) -> Self {
        Example {
            features: DenseVec::from_vec(features),
            label,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClientDataset {
    pub client_id: usize,
    pub examples: Vec<Example>,
    /// Importance weight `p_i` of this client in the global objective.
    pub weight: f64,
}

impl ClientDataset {
    pub fn new(client_id: usize, examples: Vec<Example>) -> Self {
        ClientDataset {
            client_id,
            examples,
            weight: 1.0,
        }
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }
}

pub fn total_examples(federation: &[ClientDataset]) -> usize {
    federation.iter().map(ClientDataset::len).sum()
}

/// Stable 64-bit digest of every client id, label and feature bit pattern.
pub fn federation_fingerprint(federation: &[ClientDataset]) -> u64 {
    let mut h = DefaultHasher::new();
    for client in federation {
        client.client_id.hash(&mut h);
        client.weight.to_bits().hash(&mut h);
        client.examples.len().hash(&mut h);
        for ex in &client.examples {
            ex.label.hash(&mut h);
            for v in ex.features.as_slice() {
                v.to_bits().hash(&mut h);
            }
        }
    }
    h.finish()
}

/// All examples of a federation pooled into one list, client order first.
pub fn pooled(federation: &[ClientDataset]) -> Vec<Example> {
    federation
        .iter()
        .flat_map(|c| c.examples.iter().cloned())
        .collect()
}
