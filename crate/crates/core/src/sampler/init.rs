//! Starting allocations.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::model::Model;
use crate::scalar::Scalar;

/// How the first allocation of a chain is chosen.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitStrategy {
    /// Independent uniform labels.
    #[default]
    Uniform,
    /// Lloyd iterations from the best of several k-means++ seedings.
    KMeans,
}

pub fn initial_labels<T: Scalar, R: Rng + ?Sized>(model: &Model<T>, strategy: InitStrategy, rng: &mut R) -> Vec<usize> {
    match strategy {
        InitStrategy::Uniform => (0..model.n()).map(|_| rng.random_range(0..model.k())).collect(),
        InitStrategy::KMeans => (0..KMEANS_RESTARTS)
            .map(|_| kmeans_labels(model, rng, 50))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(labels, _)| labels)
            .unwrap_or_default(),
    }
}

const KMEANS_RESTARTS: usize = 10;

fn sq_dist<T: Scalar>(a: &[T], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| (x.as_f64() - y).powi(2)).sum()
}

/// Labels and their within-cluster sum of squares.
fn kmeans_labels<T: Scalar, R: Rng + ?Sized>(model: &Model<T>, rng: &mut R, max_iter: usize) -> (Vec<usize>, f64) {
    let data = model.data();
    let (n, k, d) = (model.n(), model.k(), model.dim());
    if n == 0 {
        return (Vec::new(), 0.0);
    }
    let to_f64 = |i: usize| data.row(i).iter().map(|v| v.as_f64()).collect::<Vec<f64>>();
    let mut centers = vec![to_f64(rng.random_range(0..n))];
    while centers.len() < k {
        let d2: Vec<f64> = (0..n)
            .map(|i| centers.iter().map(|c| sq_dist(data.row(i), c)).fold(f64::INFINITY, f64::min))
            .collect();
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            d2.iter().position(|&w| {
                u -= w;
                u < 0.0
            })
            .unwrap_or(n - 1)
        } else {
            rng.random_range(0..n)
        };
        centers.push(to_f64(pick));
    }
    let mut labels = vec![0; n];
    for _ in 0..max_iter {
        let mut changed = false;
        for (i, label) in labels.iter_mut().enumerate() {
            let best = (0..k)
                .min_by(|&a, &b| sq_dist(data.row(i), &centers[a]).total_cmp(&sq_dist(data.row(i), &centers[b])))
                .unwrap_or(0);
            if best != *label {
                *label = best;
                changed = true;
            }
        }
        let mut sums = vec![vec![0.0; d]; k];
        let mut counts = vec![0usize; k];
        for (i, &l) in labels.iter().enumerate() {
            counts[l] += 1;
            for (s, v) in sums[l].iter_mut().zip(data.row(i)) {
                *s += v.as_f64();
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                centers[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
        if !changed {
            break;
        }
    }
    let sse = labels.iter().enumerate().map(|(i, &l)| sq_dist(data.row(i), &centers[l])).sum();
    (labels, sse)
}
