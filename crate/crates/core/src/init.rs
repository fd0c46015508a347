//! Input preparation: intensity rescaling, synthetic noise and the initial
//! diffusivity estimated from local gradient covariance.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{gradient, GridSpec, ImageField, Tensor4Field};

/// Default covariance window (pixels per side).
pub const DEFAULT_WINDOW: usize = 5;

/// Maps raw intensities in `[lo, hi]` onto `[−1, 1]` (same map for every channel).
pub fn rescale(u_raw: &ImageField, lo: f64, hi: f64) -> Result<ImageField> {
    check_bounds(lo, hi)?;
    if let Some(&value) = u_raw.values().iter().find(|v| !(**v >= lo && **v <= hi)) {
        return Err(Error::Range { value, lo, hi });
    }
    let mut out = u_raw.clone();
    let scale = 2.0 / (hi - lo);
    out.values_mut()
        .iter_mut()
        .for_each(|v| *v = (*v - lo) * scale - 1.0);
    Ok(out)
}

/// Inverse of [`rescale`]; values outside `[−1, 1]` are mapped affinely too.
pub fn unrescale(u: &ImageField, lo: f64, hi: f64) -> Result<ImageField> {
    check_bounds(lo, hi)?;
    let mut out = u.clone();
    let half = 0.5 * (hi - lo);
    out.values_mut()
        .iter_mut()
        .for_each(|v| *v = lo + (*v + 1.0) * half);
    Ok(out)
}

fn check_bounds(lo: f64, hi: f64) -> Result<()> {
    if !(hi > lo && lo.is_finite() && hi.is_finite()) {
        return Err(Error::Parameter(format!("rescale needs lo < hi, got [{lo}, {hi}]")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseKind {
    GaussianIid,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    /// Standard deviation in rescaled intensity units.
    pub std: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn gaussian(std: f64, seed: u64) -> Self {
        Self {
            kind: NoiseKind::GaussianIid,
            std,
            seed,
        }
    }
}

/// Adds i.i.d. zero-mean Gaussian noise, one ChaCha8 standard-normal draw per
/// value in storage order, scaled by `std`. The result is not clamped.
pub fn add_noise(u: &ImageField, spec: &NoiseSpec) -> Result<ImageField> {
    if !(spec.std >= 0.0 && spec.std.is_finite()) {
        return Err(Error::Parameter(format!("noise std must be >= 0, got {}", spec.std)));
    }
    let mut out = u.clone();
    if spec.std == 0.0 {
        return Ok(out);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    match spec.kind {
        NoiseKind::GaussianIid => {
            for v in out.values_mut() {
                let z: f64 = rng.sample(StandardNormal);
                *v += spec.std * z;
            }
        }
    }
    Ok(out)
}

/// Initial diffusivity: per cell, the sample covariance (divisor `m − 1`) of
/// the vectorized gradient matrices over a `window`-wide cube clipped to the
/// grid, plus `alpha·Id`.
pub fn init_h0(
    u_noisy: &ImageField,
    grid: &GridSpec,
    window: usize,
    alpha: f64,
) -> Result<Tensor4Field> {
    if window < 3 || window.is_multiple_of(2) {
        return Err(Error::Parameter(format!("window must be odd and >= 3, got {window}")));
    }
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::Parameter(format!("alpha must be > 0, got {alpha}")));
    }
    if let Some(&n) = grid.dims().iter().find(|&&n| n < window) {
        return Err(Error::Parameter(format!(
            "window {window} larger than grid axis of {n} cells"
        )));
    }
    let g = gradient(u_noisy, grid)?;
    let n = grid.channels() * grid.axes();
    let half = (window / 2) as i64;
    let axes = grid.axes();

    let mut field = Tensor4Field::uniform(grid, &crate::tensor::Tensor4::zeros(grid.channels(), axes))?;
    field
        .values_mut()
        .par_chunks_mut(n * n)
        .enumerate()
        .for_each(|(c, out)| {
            let center = grid.coords(c);
            let mut lo = [0usize; 3];
            let mut hi = [0usize; 3];
            for a in 0..axes {
                let x = center[a] as i64;
                lo[a] = (x - half).max(0) as usize;
                hi[a] = (x + half).min(grid.dims()[a] as i64 - 1) as usize;
            }
            let extent: Vec<usize> = (0..axes).map(|a| hi[a] - lo[a] + 1).collect();
            let total: usize = extent.iter().product();
            let mut idx = [0usize; 3];
            let members: Vec<usize> = (0..total)
                .map(|mut t| {
                    for a in (0..axes).rev() {
                        idx[a] = lo[a] + t % extent[a];
                        t /= extent[a];
                    }
                    grid.index(&idx[..axes])
                })
                .collect();

            let m = members.len() as f64;
            let mut mean = vec![0.0; n];
            for &cell in &members {
                for (acc, v) in mean.iter_mut().zip(g.cell_slice(cell)) {
                    *acc += v;
                }
            }
            mean.iter_mut().for_each(|v| *v /= m);

            out.iter_mut().for_each(|v| *v = 0.0);
            let mut dev = vec![0.0; n];
            for &cell in &members {
                for ((dv, v), mu) in dev.iter_mut().zip(g.cell_slice(cell)).zip(&mean) {
                    *dv = v - mu;
                }
                for r in 0..n {
                    for q in r..n {
                        out[r * n + q] += dev[r] * dev[q];
                    }
                }
            }
            for r in 0..n {
                for q in r..n {
                    let v = out[r * n + q] / (m - 1.0);
                    out[r * n + q] = v;
                    out[q * n + r] = v;
                }
                out[r * n + r] += alpha;
            }
        });
    Ok(field)
}
