use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `n` equal compartments on a circle of circumference `length`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CircleLattice {
    n: usize,
    length: f64,
    h: f64,
    diffusivity: f64,
}

impl CircleLattice {
    /// A single compartment is accepted; its Laplacian is identically zero.
    pub fn new(n: usize, length: f64, diffusivity: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::Lattice("compartment count must be positive".into()));
        }
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::Lattice(format!(
                "circumference must be positive, got {length}"
            )));
        }
        if !(diffusivity.is_finite() && diffusivity >= 0.0) {
            return Err(Error::Lattice(format!(
                "diffusivity must be nonnegative, got {diffusivity}"
            )));
        }
        Ok(Self {
            n,
            length,
            h: length / n as f64,
            diffusivity,
        })
    }

    /// Lattice with spacing `h`; `length / h` must be an integer up to rounding.
    pub fn from_spacing(h: f64, length: f64, diffusivity: f64) -> Result<Self> {
        let ratio = length / h;
        let n = ratio.round();
        if !(n >= 1.0) || (ratio - n).abs() > 1e-9 * ratio.max(1.0) {
            return Err(Error::Lattice(format!(
                "spacing {h} does not divide circumference {length}"
            )));
        }
        Self::new(n as usize, length, diffusivity)
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn length(&self) -> f64 {
        self.length
    }

    #[inline]
    pub fn h(&self) -> f64 {
        self.h
    }

    #[inline]
    pub fn diffusivity(&self) -> f64 {
        self.diffusivity
    }

    pub fn with_diffusivity(&self, diffusivity: f64) -> Result<Self> {
        Self::new(self.n, self.length, diffusivity)
    }

    #[inline]
    pub fn position(&self, k: usize) -> f64 {
        self.h * k as f64
    }

    #[inline]
    pub fn next(&self, k: usize) -> usize {
        if k + 1 == self.n {
            0
        } else {
            k + 1
        }
    }

    #[inline]
    pub fn prev(&self, k: usize) -> usize {
        if k == 0 {
            self.n - 1
        } else {
            k - 1
        }
    }

    /// `k + offset` modulo `n`.
    #[inline]
    pub fn shift(&self, k: usize, offset: isize) -> usize {
        (k as isize + offset).rem_euclid(self.n as isize) as usize
    }

    /// Compartment whose position is closest to `x` (ties go to the lower index).
    pub fn nearest(&self, x: f64) -> usize {
        let t = x.rem_euclid(self.length) / self.h;
        (t.round() as usize) % self.n
    }

    /// `D / h^2`.
    #[inline]
    pub fn stiffness(&self) -> f64 {
        self.diffusivity / (self.h * self.h)
    }
}
