use super::{ClientDataset, Example};
use crate::error::{Error, Result};
use crate::numkit::PrngStream;

/// Hold out `eval_fraction` of every client's examples into a shared eval
/// pool. Clients with a single example keep it; every other client keeps at
/// least one training example.
pub fn train_eval_split(
    federation: &[ClientDataset],
    eval_fraction: f64,
    seed: u64,
) -> Result<(Vec<ClientDataset>, Vec<Example>)> {
    if !(eval_fraction > 0.0 && eval_fraction < 1.0) {
        return Err(Error::config(format!(
            "eval_fraction must lie in (0, 1), got {eval_fraction}"
        )));
    }
    let root = PrngStream::new(seed, 0x5B11_7000);
    let mut train = Vec::with_capacity(federation.len());
    let mut eval = Vec::new();
    for client in federation {
        let n = client.len();
        let n_eval = if n < 2 {
            0
        } else {
            ((n as f64 * eval_fraction).floor() as usize).min(n - 1)
        };
        let mut order: Vec<usize> = (0..n).collect();
        root.fork(client.client_id as u64).shuffle(&mut order);
        let mut held = vec![false; n];
        for &i in &order[..n_eval] {
            held[i] = true;
        }
        let mut kept = Vec::with_capacity(n - n_eval);
        for (ex, is_held) in client.examples.iter().zip(held) {
            if is_held {
                eval.push(ex.clone());
            } else {
                kept.push(ex.clone());
            }
        }
        train.push(ClientDataset {
            client_id: client.client_id,
            examples: kept,
            weight: client.weight,
        });
    }
    Ok((train, eval))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn client(id: usize, n: usize) -> ClientDataset {
        let examples = (0..n)
            .map(|i| Example::new(vec![i as f64, id as f64], i % 2))
            .collect();
        ClientDataset::new(id, examples)
    }

    fn key(ex: &Example) -> (u64, u64, usize) {
        (ex.features[0].to_bits(), ex.features[1].to_bits(), ex.label)
    }

    #[test]
    fn half_split_of_ten() {
        let (train, eval) = train_eval_split(&[client(0, 10)], 0.5, 1).unwrap();
        assert_eq!(train[0].len(), 5);
        assert_eq!(eval.len(), 5);
    }

    #[test]
    fn conserves_examples() {
        let fed: Vec<_> = (0..6).map(|i| client(i, 3 + 4 * i)).collect();
        let (train, eval) = train_eval_split(&fed, 0.3, 5).unwrap();
        let mut before: Vec<_> = fed
            .iter()
            .flat_map(|c| c.examples.iter().map(key))
            .collect();
        let mut after: Vec<_> = train
            .iter()
            .flat_map(|c| c.examples.iter().map(key))
            .chain(eval.iter().map(key))
            .collect();
        before.sort_unstable();
        after.sort_unstable();
        assert_eq!(before, after);
    }

    #[test]
    fn seeds_change_membership_not_counts() {
        let fed = vec![client(0, 40), client(1, 17)];
        let (t1, e1) = train_eval_split(&fed, 0.25, 1).unwrap();
        let (t2, e2) = train_eval_split(&fed, 0.25, 2).unwrap();
        assert_eq!(e1.len(), e2.len());
        for (a, b) in t1.iter().zip(&t2) {
            assert_eq!(a.len(), b.len());
        }
        assert_ne!(e1, e2);
    }

    #[test]
    fn singleton_client_stays_in_train() {
        let (train, eval) = train_eval_split(&[client(0, 1)], 0.9, 1).unwrap();
        assert_eq!(train[0].len(), 1);
        assert!(eval.is_empty());
    }

    #[test]
    fn bad_fraction_is_rejected() {
        assert!(train_eval_split(&[client(0, 4)], 0.0, 1).is_err());
        assert!(train_eval_split(&[client(0, 4)], 1.0, 1).is_err());
    }
}
