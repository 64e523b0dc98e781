//! Functions of the frequency variable that can be sampled pointwise.

use std::sync::Arc;

use num_complex::Complex64;

/// A complex-valued function on `ℝ^d`, typically a characteristic function or a candidate.
pub trait Spectral: Send + Sync {
    fn dim(&self) -> usize;
    fn value(&self, t: &[f64]) -> Complex64;
}

type SpectralFn = dyn Fn(&[f64]) -> Complex64 + Send + Sync;

/// Closure-backed [`Spectral`] implementation.
#[derive(Clone)]
pub struct FnSpectral {
    dim: usize,
    f: Arc<SpectralFn>,
}

impl FnSpectral {
    pub fn new(dim: usize, f: impl Fn(&[f64]) -> Complex64 + Send + Sync + 'static) -> Self {
        FnSpectral { dim, f: Arc::new(f) }
    }

    /// The constant function 1, the characteristic function of a point mass at 0.
    pub fn one(dim: usize) -> Self {
        FnSpectral::new(dim, |_| Complex64::new(1.0, 0.0))
    }
}

impl std::fmt::Debug for FnSpectral {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FnSpectral").field("dim", &self.dim).finish()
    }
}

impl Spectral for FnSpectral {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, t: &[f64]) -> Complex64 {
        (self.f)(t)
    }
}

impl<T: Spectral + ?Sized> Spectral for Arc<T> {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn value(&self, t: &[f64]) -> Complex64 {
        (**self).value(t)
    }
}
