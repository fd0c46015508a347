//! Spatial mollification and the regularized gradient `∇(u ∗ ρ_σ)`.
//!
//! Kernels are separable products of 1D profiles. The convolution only sums
//! over taps inside the grid and renormalizes the surviving weights for every
//! output pixel, so constants are reproduced exactly up to the boundary.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{gradient, GradientField, GridSpec, ImageField};

/// Bandwidths below this collapse the kernel onto the center pixel.
pub const DELTA_SIGMA: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelKind {
    Gaussian,
    /// `exp(−1/(1 − (x/R)²))` on `|x| < R`, with `R = 3σ`.
    CompactBump,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kernel {
    pub kind: KernelKind,
    /// Bandwidth in pixels.
    pub sigma: f64,
    /// Taps reach `support_radius` pixels from the center.
    pub support_radius: usize,
}

impl Kernel {
    /// Gaussian truncated at `⌈4σ⌉` pixels.
    pub fn gaussian(sigma: f64) -> Result<Self> {
        check_sigma(sigma)?;
        Ok(Self {
            kind: KernelKind::Gaussian,
            sigma,
            support_radius: if sigma < DELTA_SIGMA { 0 } else { (4.0 * sigma).ceil() as usize },
        })
    }

    pub fn compact_bump(sigma: f64) -> Result<Self> {
        check_sigma(sigma)?;
        Ok(Self {
            kind: KernelKind::CompactBump,
            sigma,
            support_radius: if sigma < DELTA_SIGMA { 0 } else { (3.0 * sigma).ceil() as usize },
        })
    }

    /// Unnormalized 1D weights for offsets `−r..=r`.
    pub fn weights(&self) -> Vec<f64> {
        let r = self.support_radius as i64;
        if r == 0 {
            return vec![1.0];
        }
        (-r..=r)
            .map(|t| {
                let x = t as f64;
                match self.kind {
                    KernelKind::Gaussian => (-0.5 * x * x / (self.sigma * self.sigma)).exp(),
                    KernelKind::CompactBump => {
                        let q = x / (3.0 * self.sigma);
                        if q.abs() < 1.0 {
                            (-1.0 / (1.0 - q * q)).exp()
                        } else {
                            0.0
                        }
                    }
                }
            })
            .collect()
    }
}

fn check_sigma(sigma: f64) -> Result<()> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::Parameter(format!("kernel bandwidth must be > 0, got {sigma}")));
    }
    Ok(())
}

/// `u ∗ ρ_σ` restricted to the grid, with per-pixel weight renormalization.
pub fn convolve(u: &ImageField, kern: &Kernel) -> Result<ImageField> {
    check_sigma(kern.sigma)?;
    if kern.support_radius == 0 {
        return Ok(u.clone());
    }
    let grid = GridSpec::new(u.dims(), u.channels())?;
    let w = kern.weights();
    let r = kern.support_radius as i64;
    let k = grid.channels();
    let mut src = u.values().to_vec();
    let mut dst = vec![0.0; src.len()];
    for a in 0..grid.axes() {
        let n = grid.dims()[a] as i64;
        let stride = grid.strides()[a];
        dst.par_chunks_mut(k).enumerate().for_each(|(c, out)| {
            let x = grid.coord(c, a) as i64;
            let lo = (x - r).max(0);
            let hi = (x + r).min(n - 1);
            out.iter_mut().for_each(|v| *v = 0.0);
            let mut total = 0.0;
            for y in lo..=hi {
                let wt = w[(y - x + r) as usize];
                total += wt;
                let cell = (c as i64 + (y - x) * stride as i64) as usize;
                for (i, o) in out.iter_mut().enumerate() {
                    *o += wt * src[cell * k + i];
                }
            }
            out.iter_mut().for_each(|v| *v /= total);
        });
        std::mem::swap(&mut src, &mut dst);
    }
    ImageField::from_vec(&grid, src)
}

/// Regularized gradient `∇(u ∗ ρ_σ)`.
pub fn grad_sigma(u: &ImageField, kern: &Kernel, grid: &GridSpec) -> Result<GradientField> {
    u.check_grid(grid)?;
    gradient(&convolve(u, kern)?, grid)
}
