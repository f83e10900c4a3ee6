//! Synthetic mixture data with planted outliers.

use std::io::Write;

use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Dataset, Hyperparameters};
use crate::sampler::ChainRng;
use crate::symmat::{factorize_matrix, Matrix, SpdMatrix};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSpec {
    pub n_per_component: Vec<usize>,
    /// One mean per component.
    pub component_means: Vec<Vec<f64>>,
    /// One covariance per component, as rows.
    pub component_cov: Vec<Vec<Vec<f64>>>,
    /// Points appended verbatim after the component draws.
    #[serde(default)]
    pub outliers: Vec<Vec<f64>>,
    pub seed: u64,
}

/// Simulated rows with their generating component; planted outliers carry `None`.
#[derive(Clone, Debug, PartialEq)]
pub struct Simulated {
    pub data: Dataset<f64>,
    pub labels: Vec<Option<usize>>,
}

impl Simulated {
    /// One label per line: the 1-based component, or 0 for a planted outlier.
    pub fn write_labels<W: Write>(&self, mut w: W) -> Result<()> {
        for l in &self.labels {
            writeln!(w, "{}", l.map_or(0, |k| k + 1))?;
        }
        Ok(())
    }
}

impl SimulationSpec {
    pub fn dim(&self) -> usize {
        self.component_means.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.n_per_component.len();
        if k == 0 {
            return Err(Error::InvalidConfig("at least one component is required".into()));
        }
        if self.component_means.len() != k || self.component_cov.len() != k {
            return Err(Error::InvalidConfig(format!(
                "{k} component sizes but {} means and {} covariances",
                self.component_means.len(),
                self.component_cov.len()
            )));
        }
        let d = self.dim();
        if d == 0 {
            return Err(Error::InvalidConfig("means must have at least one coordinate".into()));
        }
        for v in self.component_means.iter().chain(&self.outliers) {
            if v.len() != d {
                return Err(Error::DimensionMismatch { expected: d, found: v.len() });
            }
        }
        for c in &self.component_cov {
            let m = Matrix::from_rows(c)?;
            if m.dim() != d {
                return Err(Error::DimensionMismatch { expected: d, found: m.dim() });
            }
            SpdMatrix::new(m)?;
        }
        Ok(())
    }

    /// Four unit-covariance components in three dimensions with equidistant means 11
    /// apart, and three identical outliers at the midpoint of the first two means.
    /// `clustered` is the number of non-outlier rows (157 for 160 rows in total).
    pub fn outlier_study(clustered: usize, seed: u64) -> Self {
        let k = 4;
        let means = equidistant_means(k, 3, 11.0).expect("four points fit in three dimensions");
        let mid = equidistant_point(&means[..2]).expect("two distinct means");
        let n_per_component = (0..k).map(|c| clustered / k + usize::from(c < clustered % k)).collect();
        let identity = vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]];
        Self {
            n_per_component,
            component_means: means,
            component_cov: vec![identity; k],
            outliers: vec![mid; 3],
            seed,
        }
    }
}

/// Prior used with [`SimulationSpec::outlier_study`]: `m0 = 0`, `κ0 = 0.005`,
/// `S0 = 2I`, `β = 3`, and `ν0 = 2.02`, the smallest round value above `D - 1`.
pub fn outlier_study_hyperparameters() -> Hyperparameters<f64> {
    Hyperparameters {
        k: 4,
        m0: vec![0.0; 3],
        kappa0: 0.005,
        nu0: 2.02,
        s0: SpdMatrix::new(Matrix::from_diagonal(&[2.0; 3])).expect("diagonal is SPD"),
        beta: 3.0,
    }
}

/// Draws the component samples in order, then appends the outliers.
pub fn simulate(spec: &SimulationSpec) -> Result<Simulated> {
    spec.validate()?;
    let d = spec.dim();
    let mut rng = ChainRng::seed_from_u64(spec.seed);
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (k, &n) in spec.n_per_component.iter().enumerate() {
        let chol = factorize_matrix(Matrix::from_rows(&spec.component_cov[k])?)?;
        let l = chol.lower();
        for _ in 0..n {
            let z: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
            let row = (0..d).map(|r| spec.component_means[k][r] + (0..=r).map(|c| l[(r, c)] * z[c]).sum::<f64>()).collect();
            rows.push(row);
            labels.push(Some(k));
        }
    }
    for o in &spec.outliers {
        rows.push(o.clone());
        labels.push(None);
    }
    Ok(Simulated { data: Dataset::new(rows)?, labels })
}

/// `k` points in `d` dimensions with every pairwise distance equal to `distance`
/// (vertices of a regular simplex, centred at the origin). Needs `k <= d + 1`.
pub fn equidistant_means(k: usize, d: usize, distance: f64) -> Result<Vec<Vec<f64>>> {
    if k == 0 || k > d + 1 {
        return Err(Error::InvalidInput(format!("{k} equidistant points do not fit in {d} dimensions")));
    }
    // scaled unit vectors in R^k, centred, expressed in an orthonormal basis of their span
    let s = distance / std::f64::consts::SQRT_2;
    let centred: Vec<Vec<f64>> =
        (0..k).map(|i| (0..k).map(|j| s * (f64::from(u8::from(i == j)) - 1.0 / k as f64)).collect()).collect();
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for v in centred.iter().take(k.saturating_sub(1)) {
        let mut w = v.clone();
        for b in &basis {
            let dot: f64 = w.iter().zip(b).map(|(x, y)| x * y).sum();
            w.iter_mut().zip(b).for_each(|(x, y)| *x -= dot * y);
        }
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        basis.push(w.into_iter().map(|x| x / norm).collect());
    }
    Ok(centred
        .iter()
        .map(|v| {
            let mut p: Vec<f64> = basis.iter().map(|b| v.iter().zip(b).map(|(x, y)| x * y).sum()).collect();
            p.resize(d, 0.0);
            p
        })
        .collect())
}

/// The point in the affine hull of `points` at equal distance from all of them
/// (the midpoint for two points, the circumcentre in general).
pub fn equidistant_point(points: &[Vec<f64>]) -> Result<Vec<f64>> {
    let Some(p0) = points.first() else {
        return Err(Error::InvalidInput("no points given".into()));
    };
    let m = points.len() - 1;
    if m == 0 {
        return Ok(p0.clone());
    }
    let diffs: Vec<Vec<f64>> = points[1..].iter().map(|p| p.iter().zip(p0).map(|(a, b)| a - b).collect()).collect();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let gram: Vec<f64> = (0..m).flat_map(|i| (0..m).map(move |j| (i, j))).map(|(i, j)| dot(&diffs[i], &diffs[j])).collect();
    let f = factorize_matrix(Matrix::from_row_major(m, gram)?)
        .map_err(|_| Error::InvalidInput("points must be affinely independent".into()))?;
    let rhs: Vec<f64> = diffs.iter().map(|v| dot(v, v) / 2.0).collect();
    let a = f.solve(&rhs);
    Ok((0..p0.len()).map(|c| p0[c] + (0..m).map(|j| a[j] * diffs[j][c]).sum::<f64>()).collect())
}
