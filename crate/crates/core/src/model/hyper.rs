use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::symmat::SpdMatrix;

/// Gaussian-inverse-Wishart prior `(m0, κ0, ν0, S0)` plus the symmetric Dirichlet weight `β`.
#[derive(Clone, Debug, PartialEq)]
pub struct Hyperparameters<T> {
    /// Number of mixture components.
    pub k: usize,
    pub m0: Vec<T>,
    /// Prior mean strength; zero gives the flat-mean prior.
    pub kappa0: T,
    pub nu0: T,
    /// Prior scatter.
    pub s0: SpdMatrix<T>,
    pub beta: T,
}

impl<T: Scalar> Hyperparameters<T> {
    pub fn dim(&self) -> usize {
        self.m0.len()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        let bad = |msg: String| Err(Error::InvalidHyperparameters(msg));
        if self.k == 0 {
            return bad("K must be at least 1".into());
        }
        if d == 0 || self.s0.dim() != d {
            return bad(format!("m0 has dimension {d} but S0 is {}x{}", self.s0.dim(), self.s0.dim()));
        }
        if self.m0.iter().any(|x| !x.is_finite()) {
            return bad("m0 must be finite".into());
        }
        if !(self.kappa0 >= T::zero()) || !self.kappa0.is_finite() {
            return bad("kappa0 must be finite and >= 0".into());
        }
        if !(self.nu0 > T::of_usize(d) - T::one()) || !self.nu0.is_finite() {
            return bad(format!("nu0 must exceed D - 1 = {}", d - 1));
        }
        if !(self.beta > T::zero()) || !self.beta.is_finite() {
            return bad("beta must be positive".into());
        }
        Ok(())
    }
}
