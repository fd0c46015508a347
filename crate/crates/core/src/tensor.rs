//! Linear algebra on `k×d` color-gradient matrices and symmetric fourth-order
//! tensors acting on them.
//!
//! A [`Tensor4`] over `ℝ^{k×d}` is stored as a dense `(k·d)×(k·d)` matrix in
//! row-major order. Matrix entry `(i, j)` of a [`ColorMatrix`] maps to the
//! flat index `i·d + j`, so `H_{ijIJ}` lives at row `i·d + j`, column `I·d + J`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Relative tolerance used when validating tensor symmetry.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Absolute slack used by [`is_psd`].
pub const PSD_SLACK: f64 = 1e-10;

/// Frobenius norms below this are treated as the zero direction.
pub const DEGENERACY_THRESHOLD: f64 = 1e-14;

/// A `k×d` matrix: one row per color channel, one column per spatial axis.
#[derive(Debug, Clone, PartialEq)]
pub struct ColorMatrix {
    k: usize,
    d: usize,
    entries: Vec<f64>,
}

impl ColorMatrix {
    pub fn zeros(k: usize, d: usize) -> Self {
        Self {
            k,
            d,
            entries: vec![0.0; k * d],
        }
    }

    /// Builds a matrix from row-major entries.
    pub fn from_vec(k: usize, d: usize, entries: Vec<f64>) -> Result<Self> {
        if entries.len() != k * d {
            return Err(Error::Dimension(format!(
                "expected {} entries for a {k}x{d} matrix, got {}",
                k * d,
                entries.len()
            )));
        }
        Ok(Self { k, d, entries })
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let k = rows.len();
        let d = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::Dimension("ragged rows".into()));
        }
        Ok(Self {
            k,
            d,
            entries: rows.iter().flat_map(|r| r.iter().copied()).collect(),
        })
    }

    pub fn channels(&self) -> usize {
        self.k
    }

    pub fn axes(&self) -> usize {
        self.d
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.k, self.d)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.d + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.entries[i * self.d + j] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.entries
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.entries
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn norm_sq(&self) -> f64 {
        self.entries.iter().map(|v| v * v).sum()
    }

    pub fn scale(&self, a: f64) -> Self {
        Self {
            k: self.k,
            d: self.d,
            entries: self.entries.iter().map(|v| a * v).collect(),
        }
    }

    fn check_same_shape(&self, other: &Self) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::Dimension(format!(
                "matrix shapes {:?} and {:?} differ",
                self.shape(),
                other.shape()
            )));
        }
        Ok(())
    }
}

/// Frobenius scalar product `A:B = Σ_ij A_ij B_ij`.
pub fn frobenius(a: &ColorMatrix, b: &ColorMatrix) -> Result<f64> {
    a.check_same_shape(b)?;
    Ok(dot(&a.entries, &b.entries))
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Symmetric fourth-order tensor on `ℝ^{k×d}`, i.e. a symmetric linear map of
/// `k×d` matrices into themselves.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4 {
    k: usize,
    d: usize,
    entries: Vec<f64>,
}

impl Tensor4 {
    pub fn zeros(k: usize, d: usize) -> Self {
        let n = k * d;
        Self {
            k,
            d,
            entries: vec![0.0; n * n],
        }
    }

    pub fn identity(k: usize, d: usize) -> Self {
        Self::scaled_identity(k, d, 1.0)
    }

    pub fn scaled_identity(k: usize, d: usize, a: f64) -> Self {
        let mut t = Self::zeros(k, d);
        let n = k * d;
        for m in 0..n {
            t.entries[m * n + m] = a;
        }
        t
    }

    /// Builds a tensor from its row-major `(k·d)×(k·d)` matrix form and
    /// checks symmetry.
    pub fn from_matrix(k: usize, d: usize, entries: Vec<f64>) -> Result<Self> {
        let n = k * d;
        if entries.len() != n * n {
            return Err(Error::Dimension(format!(
                "expected {} entries for a ({n}x{n}) tensor, got {}",
                n * n,
                entries.len()
            )));
        }
        let t = Self { k, d, entries };
        t.check_symmetric()?;
        Ok(t)
    }

    /// Outer product `A ⊗ B`, mapping `D ↦ (B:D) A`.
    pub fn outer(a: &ColorMatrix, b: &ColorMatrix) -> Result<Self> {
        a.check_same_shape(b)?;
        let (k, d) = a.shape();
        let n = k * d;
        let mut entries = vec![0.0; n * n];
        for (r, &ar) in a.entries.iter().enumerate() {
            for (c, &bc) in b.entries.iter().enumerate() {
                entries[r * n + c] = ar * bc;
            }
        }
        Ok(Self { k, d, entries })
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.k, self.d)
    }

    /// Side length `k·d` of the matrix form.
    pub fn dim(&self) -> usize {
        self.k * self.d
    }

    /// Entry `H_{ijIJ}`.
    pub fn get(&self, i: usize, j: usize, big_i: usize, big_j: usize) -> f64 {
        let n = self.dim();
        self.entries[(i * self.d + j) * n + big_i * self.d + big_j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.entries
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.entries
    }

    pub fn norm(&self) -> f64 {
        self.entries.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn scale(&self, a: f64) -> Self {
        Self {
            k: self.k,
            d: self.d,
            entries: self.entries.iter().map(|v| a * v).collect(),
        }
    }

    /// `a·self + b·other`.
    pub fn lin_comb(&self, a: f64, other: &Self, b: f64) -> Result<Self> {
        self.check_same_shape(other)?;
        Ok(Self {
            k: self.k,
            d: self.d,
            entries: self
                .entries
                .iter()
                .zip(&other.entries)
                .map(|(x, y)| a * x + b * y)
                .collect(),
        })
    }

    /// Adds `a·Id` in place.
    pub fn add_identity(&mut self, a: f64) {
        let n = self.dim();
        for m in 0..n {
            self.entries[m * n + m] += a;
        }
    }

    pub fn max_asymmetry(&self) -> f64 {
        let n = self.dim();
        let mut worst = 0.0_f64;
        for r in 0..n {
            for c in (r + 1)..n {
                worst = worst.max((self.entries[r * n + c] - self.entries[c * n + r]).abs());
            }
        }
        worst
    }

    pub fn check_symmetric(&self) -> Result<()> {
        let scale = self
            .entries
            .iter()
            .fold(0.0_f64, |m, v| m.max(v.abs()))
            .max(1.0);
        let asym = self.max_asymmetry();
        if !asym.is_finite() || asym > SYMMETRY_TOL * scale {
            return Err(Error::Symmetry { asymmetry: asym });
        }
        Ok(())
    }

    fn check_same_shape(&self, other: &Self) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::Dimension(format!(
                "tensor shapes {:?} and {:?} differ",
                self.shape(),
                other.shape()
            )));
        }
        Ok(())
    }
}

/// Tensor-matrix product `(HD)_ij = Σ_IJ H_ijIJ D_IJ`.
pub fn apply(h: &Tensor4, dm: &ColorMatrix) -> Result<ColorMatrix> {
    if h.shape() != dm.shape() {
        return Err(Error::Dimension(format!(
            "tensor over {:?} applied to {:?} matrix",
            h.shape(),
            dm.shape()
        )));
    }
    let mut out = ColorMatrix::zeros(dm.k, dm.d);
    apply_into(h.as_slice(), dm.as_slice(), out.as_mut_slice());
    Ok(out)
}

/// Unchecked kernel of [`apply`] on flat slices.
#[inline]
pub(crate) fn apply_into(h: &[f64], x: &[f64], out: &mut [f64]) {
    let n = x.len();
    for (r, o) in out.iter_mut().enumerate() {
        *o = dot(&h[r * n..(r + 1) * n], x);
    }
}

/// Orthogonal projection onto the Frobenius complement of `dhat`:
/// `P(D) = D − (D:D̂) D̂ / (D̂:D̂)`.
pub fn project_orth(dhat: &ColorMatrix) -> Result<Tensor4> {
    let nsq = dhat.norm_sq();
    let norm = nsq.sqrt();
    let inf = dhat.entries.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if !(norm >= DEGENERACY_THRESHOLD * inf.max(1.0)) {
        return Err(Error::DegenerateDirection { norm });
    }
    let mut p = Tensor4::outer(dhat, dhat)?.scale(-1.0 / nsq);
    p.add_identity(1.0);
    Ok(p)
}

/// Extreme eigenvalues of a tensor's symmetric matrix form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralBound {
    pub lambda_min: f64,
    pub lambda_max: f64,
}

pub fn spectral_bounds(h: &Tensor4) -> Result<SpectralBound> {
    h.check_symmetric()?;
    Ok(spectral_bounds_unchecked(h.as_slice(), h.dim()))
}

/// Extreme eigenvalues of a symmetric `n×n` row-major matrix.
pub(crate) fn spectral_bounds_unchecked(entries: &[f64], n: usize) -> SpectralBound {
    if n == 1 {
        return SpectralBound {
            lambda_min: entries[0],
            lambda_max: entries[0],
        };
    }
    let m = DMatrix::from_row_slice(n, n, entries);
    let eig = m.symmetric_eigenvalues();
    let (lo, hi) = eig
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    SpectralBound {
        lambda_min: lo,
        lambda_max: hi,
    }
}

/// Whether `(HD):D ≥ κ (D:D)` for all `D`, i.e. `λ_min(H) ≥ κ` up to
/// [`PSD_SLACK`]. Asymmetric input reports `false`.
pub fn is_psd(h: &Tensor4, kappa: f64) -> bool {
    spectral_bounds(h).is_ok_and(|b| b.lambda_min >= kappa - PSD_SLACK)
}
