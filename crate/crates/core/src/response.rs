//! Diffusivity response functions `F: ℝ^{k×d} → S_{≥0}(ℝ^{k×d})`.
//!
//! The thresholded projection response diffuses isotropically (weight 3/2)
//! for weak gradients and blends into the projection onto the gradient's
//! orthogonal complement as `D:D` approaches `s²`. Above the threshold only
//! the component of the flux along `D` itself is suppressed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::tensor::{self, ColorMatrix, Tensor4};

/// Which response law to evaluate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ResponseKind {
    /// Smooth-then-projection response controlled by the threshold `s`.
    ThresholdedProjection,
    /// Isotropic `g(‖D‖)·Id` with `g(r) = 1/(1 + r/λ)`.
    PeronaMalikScalar { lambda: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResponseParams {
    /// Contrast threshold, in rescaled intensity-gradient units.
    pub s: f64,
    /// Uniform positivity shift added as `ω·Id`.
    pub omega: f64,
    pub kind: ResponseKind,
}

impl Default for ResponseParams {
    fn default() -> Self {
        Self {
            s: 0.1,
            omega: 0.0,
            kind: ResponseKind::ThresholdedProjection,
        }
    }
}

impl ResponseParams {
    pub fn thresholded(s: f64, omega: f64) -> Self {
        Self {
            s,
            omega,
            kind: ResponseKind::ThresholdedProjection,
        }
    }

    pub fn perona_malik(lambda: f64, omega: f64) -> Self {
        Self {
            s: lambda,
            omega,
            kind: ResponseKind::PeronaMalikScalar { lambda },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.s > 0.0 && self.s.is_finite()) {
            return Err(Error::Parameter(format!("threshold s must be > 0, got {}", self.s)));
        }
        if !(self.omega >= 0.0 && self.omega.is_finite()) {
            return Err(Error::Parameter(format!("omega must be >= 0, got {}", self.omega)));
        }
        if let ResponseKind::PeronaMalikScalar { lambda } = self.kind {
            if !(lambda > 0.0 && lambda.is_finite()) {
                return Err(Error::Parameter(format!("lambda must be > 0, got {lambda}")));
            }
        }
        Ok(())
    }

    /// Evaluates the configured response at `D`.
    pub fn evaluate(&self, dm: &ColorMatrix) -> Tensor4 {
        let (k, d) = dm.shape();
        let mut out = Tensor4::zeros(k, d);
        self.evaluate_into(dm.as_slice(), out.as_mut_slice());
        out
    }

    /// `F(0)`, the diffusivity of a flat image.
    pub fn at_zero(&self, k: usize, d: usize) -> Tensor4 {
        self.evaluate(&ColorMatrix::zeros(k, d))
    }

    /// Writes `F(D)` for a flattened `D` into a zeroed or stale `(n×n)` buffer.
    pub(crate) fn evaluate_into(&self, dm: &[f64], out: &mut [f64]) {
        let n = dm.len();
        let nsq = tensor::dot(dm, dm);
        match self.kind {
            ResponseKind::ThresholdedProjection => {
                let s2 = self.s * self.s;
                if nsq >= s2 {
                    // P_{D⊥} = Id − D⊗D / (D:D)
                    for r in 0..n {
                        for c in 0..n {
                            out[r * n + c] = -dm[r] * dm[c] / nsq;
                        }
                    }
                    add_diag(out, n, 1.0);
                } else {
                    // (3/2)(1−ρ)·Id + ρ·P_{D⊥} with ρ = D:D/s², written as
                    // ((3/2)(1−ρ) + ρ)·Id − D⊗D/s² so that D = 0 needs no projection.
                    let rho = nsq / s2;
                    for r in 0..n {
                        for c in 0..n {
                            out[r * n + c] = -dm[r] * dm[c] / s2;
                        }
                    }
                    add_diag(out, n, 1.5 * (1.0 - rho) + rho);
                }
            }
            ResponseKind::PeronaMalikScalar { lambda } => {
                out.iter_mut().for_each(|v| *v = 0.0);
                let g = 1.0 / (1.0 + nsq.sqrt() / lambda);
                add_diag(out, n, g);
            }
        }
        // added last so that the ω-shifted response is exactly F + ω·Id
        add_diag(out, n, self.omega);
    }
}

fn add_diag(out: &mut [f64], n: usize, a: f64) {
    for m in 0..n {
        out[m * n + m] += a;
    }
}

/// Thresholded projection response `F_s(D)` (plus `ω·Id`).
pub fn response_fs(dm: &ColorMatrix, p: &ResponseParams) -> Result<Tensor4> {
    if p.kind != ResponseKind::ThresholdedProjection {
        return Err(Error::Parameter("response_fs requires ThresholdedProjection".into()));
    }
    p.validate()?;
    Ok(p.evaluate(dm))
}

/// Scalar Perona–Malik response `g(‖D‖_F)·Id` (plus `ω·Id`).
pub fn response_pm(dm: &ColorMatrix, p: &ResponseParams) -> Result<Tensor4> {
    if !matches!(p.kind, ResponseKind::PeronaMalikScalar { .. }) {
        return Err(Error::Parameter("response_pm requires PeronaMalikScalar".into()));
    }
    p.validate()?;
    Ok(p.evaluate(dm))
}

/// Empirical Lipschitz bound of the response inside the ball of `radius`.
///
/// Half the trials are independent pairs drawn uniformly in the ball, the
/// other half are near pairs separated by `1e-4·radius` that probe the local
/// Jacobian. Tensor differences are measured in the Frobenius norm.
pub fn lipschitz_probe(
    p: &ResponseParams,
    k: usize,
    d: usize,
    trials: usize,
    radius: f64,
    seed: u64,
) -> Result<f64> {
    if trials == 0 {
        return Err(Error::Parameter("lipschitz_probe needs at least one trial".into()));
    }
    if !(radius > 0.0) {
        return Err(Error::Parameter(format!("radius must be > 0, got {radius}")));
    }
    p.validate()?;
    let n = k * d;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fa = vec![0.0; n * n];
    let mut fb = vec![0.0; n * n];
    let mut best = 0.0_f64;
    for t in 0..trials {
        let a = sample_ball(&mut rng, n, radius);
        let b = if t % 2 == 0 {
            sample_ball(&mut rng, n, radius)
        } else {
            let step = 1e-4 * radius;
            let dir = sample_ball(&mut rng, n, 1.0);
            let dn = tensor::dot(&dir, &dir).sqrt().max(f64::MIN_POSITIVE);
            let mut b: Vec<f64> = a.iter().zip(&dir).map(|(x, u)| x + step * u / dn).collect();
            // keep the partner inside the ball
            let bn = tensor::dot(&b, &b).sqrt();
            if bn > radius {
                b.iter_mut().for_each(|v| *v *= radius / bn);
            }
            b
        };
        let dist = a
            .iter()
            .zip(&b)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt();
        if dist == 0.0 {
            continue;
        }
        p.evaluate_into(&a, &mut fa);
        p.evaluate_into(&b, &mut fb);
        let diff = fa
            .iter()
            .zip(&fb)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt();
        best = best.max(diff / dist);
    }
    Ok(best)
}

fn sample_ball<R: Rng>(rng: &mut R, n: usize, radius: f64) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let norm = tensor::dot(&v, &v).sqrt().max(f64::MIN_POSITIVE);
    let r = radius * rng.random::<f64>().powf(1.0 / n as f64);
    v.iter_mut().for_each(|x| *x *= r / norm);
    v
}

/// Unthresholded response `P_{D⊥}`, kept for comparison tests only.
#[cfg(test)]
pub(crate) fn response_naive(dm: &ColorMatrix) -> Result<Tensor4> {
    tensor::project_orth(dm)
}
