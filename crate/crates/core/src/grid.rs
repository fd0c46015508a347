//! Pixel grids, fields living on them, and the discrete differential
//! operators of the diffusion system.
//!
//! The gradient is staggered: the color-gradient matrix attached to cell `x`
//! holds, in column `j`, the forward difference across the face between `x`
//! and `x + e_j`. Faces on the domain boundary carry a zero entry. The
//! divergence is defined as the exact negative adjoint of that gradient, so
//! the discrete Green formula, per-channel mass conservation and the
//! symmetry of `u ↦ div(H∇u)` hold to rounding. Diffusivity tensors share the
//! gradient's staggered location: `H(x)` acts on the gradient matrix of `x`.
//!
//! Cells are stored row-major (last axis fastest); within a cell, channels
//! are contiguous.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::solver::conjugate_gradient;
use crate::stencil;
use crate::tensor::{self, ColorMatrix, SpectralBound, Tensor4};

/// Shape of the pixel grid and the number of color channels.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    dims: Vec<usize>,
    spacing: Vec<f64>,
    channels: usize,
    strides: Vec<usize>,
}

impl GridSpec {
    /// Grid with unit spacing along every axis.
    pub fn new(dims: &[usize], channels: usize) -> Result<Self> {
        Self::with_spacing(dims, &vec![1.0; dims.len()], channels)
    }

    pub fn with_spacing(dims: &[usize], spacing: &[f64], channels: usize) -> Result<Self> {
        if dims.is_empty() || dims.len() > 3 {
            return Err(Error::Parameter(format!(
                "grids must have 1 to 3 axes, got {}",
                dims.len()
            )));
        }
        if dims.iter().any(|&n| n < 2) {
            return Err(Error::Parameter(format!("every axis needs >= 2 cells, got {dims:?}")));
        }
        if spacing.len() != dims.len() || spacing.iter().any(|&h| !(h > 0.0 && h.is_finite())) {
            return Err(Error::Parameter(format!("invalid spacing {spacing:?}")));
        }
        if channels == 0 {
            return Err(Error::Parameter("at least one channel required".into()));
        }
        let mut strides = vec![1; dims.len()];
        for a in (0..dims.len() - 1).rev() {
            strides[a] = strides[a + 1] * dims[a + 1];
        }
        Ok(Self {
            dims: dims.to_vec(),
            spacing: spacing.to_vec(),
            channels,
            strides,
        })
    }

    /// Same geometry with a different channel count.
    pub fn with_channels(&self, channels: usize) -> Result<Self> {
        Self::with_spacing(&self.dims, &self.spacing, channels)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Number of spatial axes `d`.
    pub fn axes(&self) -> usize {
        self.dims.len()
    }

    pub fn cells(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    /// Coordinate of `cell` along `axis`.
    #[inline]
    pub fn coord(&self, cell: usize, axis: usize) -> usize {
        (cell / self.strides[axis]) % self.dims[axis]
    }

    pub fn coords(&self, cell: usize) -> Vec<usize> {
        (0..self.axes()).map(|a| self.coord(cell, a)).collect()
    }

    pub fn index(&self, coords: &[usize]) -> usize {
        coords.iter().zip(&self.strides).map(|(c, s)| c * s).sum()
    }
}

/// A `k`-channel intensity field, one value per cell and channel.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageField {
    dims: Vec<usize>,
    channels: usize,
    values: Vec<f64>,
}

impl ImageField {
    pub fn zeros(grid: &GridSpec) -> Self {
        Self {
            dims: grid.dims.clone(),
            channels: grid.channels,
            values: vec![0.0; grid.cells() * grid.channels],
        }
    }

    pub fn constant(grid: &GridSpec, v: f64) -> Self {
        let mut f = Self::zeros(grid);
        f.values.iter_mut().for_each(|x| *x = v);
        f
    }

    pub fn from_vec(grid: &GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.cells() * grid.channels {
            return Err(Error::Dimension(format!(
                "field has {} values, grid needs {}",
                values.len(),
                grid.cells() * grid.channels
            )));
        }
        Ok(Self {
            dims: grid.dims.clone(),
            channels: grid.channels,
            values,
        })
    }

    /// Builds a field from `f(coords, channel)`.
    pub fn from_fn(grid: &GridSpec, mut f: impl FnMut(&[usize], usize) -> f64) -> Self {
        let k = grid.channels;
        let mut values = Vec::with_capacity(grid.cells() * k);
        for c in 0..grid.cells() {
            let xs = grid.coords(c);
            for i in 0..k {
                values.push(f(&xs, i));
            }
        }
        Self {
            dims: grid.dims.clone(),
            channels: k,
            values,
        }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn cells(&self) -> usize {
        self.values.len() / self.channels
    }

    pub fn get(&self, cell: usize, channel: usize) -> f64 {
        self.values[cell * self.channels + channel]
    }

    pub fn set(&mut self, cell: usize, channel: usize, v: f64) {
        self.values[cell * self.channels + channel] = v;
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn check_grid(&self, grid: &GridSpec) -> Result<()> {
        if self.dims != grid.dims || self.channels != grid.channels {
            return Err(Error::Dimension(format!(
                "field {:?}x{} does not match grid {:?}x{}",
                self.dims, self.channels, grid.dims, grid.channels
            )));
        }
        Ok(())
    }

    /// Plain sum of one channel over all cells.
    pub fn channel_sum(&self, channel: usize) -> f64 {
        self.values
            .iter()
            .skip(channel)
            .step_by(self.channels)
            .sum()
    }

    pub fn channel_means(&self) -> Vec<f64> {
        let n = self.cells() as f64;
        (0..self.channels).map(|i| self.channel_sum(i) / n).collect()
    }

    /// Copy with each channel's mean removed.
    pub fn mean_free(&self) -> Self {
        let means = self.channel_means();
        let mut out = self.clone();
        for (m, v) in out.values.iter_mut().enumerate() {
            *v -= means[m % self.channels];
        }
        out
    }

    /// `‖u‖₂` with the grid's cell volume as quadrature weight.
    pub fn l2_norm(&self, grid: &GridSpec) -> f64 {
        (grid.cell_volume() * tensor::dot(&self.values, &self.values)).sqrt()
    }

    /// `a·self + b·other`.
    pub fn lin_comb(&self, a: f64, other: &Self, b: f64) -> Result<Self> {
        if self.dims != other.dims || self.channels != other.channels {
            return Err(Error::Dimension("field shapes differ".into()));
        }
        Ok(Self {
            dims: self.dims.clone(),
            channels: self.channels,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(x, y)| a * x + b * y)
                .collect(),
        })
    }
}

/// Per-cell `k×d` color-gradient matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientField {
    dims: Vec<usize>,
    channels: usize,
    axes: usize,
    values: Vec<f64>,
}

impl GradientField {
    pub fn zeros(grid: &GridSpec) -> Self {
        Self {
            dims: grid.dims.clone(),
            channels: grid.channels,
            axes: grid.axes(),
            values: vec![0.0; grid.cells() * grid.channels * grid.axes()],
        }
    }

    pub fn from_vec(grid: &GridSpec, values: Vec<f64>) -> Result<Self> {
        let mut g = Self::zeros(grid);
        if values.len() != g.values.len() {
            return Err(Error::Dimension(format!(
                "gradient field has {} values, grid needs {}",
                values.len(),
                g.values.len()
            )));
        }
        g.values = values;
        Ok(g)
    }

    pub fn cells(&self) -> usize {
        self.values.len() / (self.channels * self.axes)
    }

    pub fn matrix(&self, cell: usize) -> ColorMatrix {
        let n = self.channels * self.axes;
        ColorMatrix::from_vec(
            self.channels,
            self.axes,
            self.values[cell * n..(cell + 1) * n].to_vec(),
        )
        .expect("cell slice has k*d entries")
    }

    pub fn cell_slice(&self, cell: usize) -> &[f64] {
        let n = self.channels * self.axes;
        &self.values[cell * n..(cell + 1) * n]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    fn check_grid(&self, grid: &GridSpec) -> Result<()> {
        if self.dims != grid.dims || self.channels != grid.channels || self.axes != grid.axes() {
            return Err(Error::Dimension("gradient field does not match grid".into()));
        }
        Ok(())
    }
}

/// Per-cell symmetric diffusivity tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4Field {
    dims: Vec<usize>,
    channels: usize,
    axes: usize,
    values: Vec<f64>,
}

impl Tensor4Field {
    pub fn uniform(grid: &GridSpec, h: &Tensor4) -> Result<Self> {
        if h.shape() != (grid.channels, grid.axes()) {
            return Err(Error::Dimension(format!(
                "tensor over {:?} does not match grid with k={} d={}",
                h.shape(),
                grid.channels,
                grid.axes()
            )));
        }
        Ok(Self {
            dims: grid.dims.clone(),
            channels: grid.channels,
            axes: grid.axes(),
            values: h.as_slice().repeat(grid.cells()),
        })
    }

    pub fn from_cells(grid: &GridSpec, cells: &[Tensor4]) -> Result<Self> {
        if cells.len() != grid.cells() {
            return Err(Error::Dimension(format!(
                "{} tensors for {} cells",
                cells.len(),
                grid.cells()
            )));
        }
        let mut values = Vec::with_capacity(cells.len() * grid.channels.pow(2) * grid.axes().pow(2));
        for t in cells {
            if t.shape() != (grid.channels, grid.axes()) {
                return Err(Error::Dimension("cell tensor shape mismatch".into()));
            }
            values.extend_from_slice(t.as_slice());
        }
        Ok(Self {
            dims: grid.dims.clone(),
            channels: grid.channels,
            axes: grid.axes(),
            values,
        })
    }

    /// Side length `k·d` of each cell's matrix form.
    pub fn tensor_dim(&self) -> usize {
        self.channels * self.axes
    }

    pub fn cells(&self) -> usize {
        self.values.len() / self.tensor_dim().pow(2)
    }

    pub fn cell(&self, c: usize) -> Tensor4 {
        let mut t = Tensor4::zeros(self.channels, self.axes);
        t.as_mut_slice().copy_from_slice(self.cell_slice(c));
        t
    }

    pub fn cell_slice(&self, c: usize) -> &[f64] {
        let m = self.tensor_dim().pow(2);
        &self.values[c * m..(c + 1) * m]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn check_grid(&self, grid: &GridSpec) -> Result<()> {
        if self.dims != grid.dims || self.channels != grid.channels || self.axes != grid.axes() {
            return Err(Error::Dimension("tensor field does not match grid".into()));
        }
        Ok(())
    }

    pub fn check_symmetric(&self) -> Result<()> {
        (0..self.cells())
            .into_par_iter()
            .try_for_each(|c| self.cell(c).check_symmetric())
    }

    /// Smallest eigenvalue over all cells and the first cell attaining it.
    pub fn min_eigenvalue(&self) -> (f64, usize) {
        let n = self.tensor_dim();
        (0..self.cells())
            .into_par_iter()
            .map(|c| (tensor::spectral_bounds_unchecked(self.cell_slice(c), n).lambda_min, c))
            .reduce(
                || (f64::INFINITY, usize::MAX),
                |a, b| if b.0 < a.0 || (b.0 == a.0 && b.1 < a.1) { b } else { a },
            )
    }

    pub fn cell_bounds(&self, c: usize) -> SpectralBound {
        tensor::spectral_bounds_unchecked(self.cell_slice(c), self.tensor_dim())
    }

    /// Largest cell-wise Frobenius distance to a fixed tensor.
    pub fn max_distance_to(&self, t: &Tensor4) -> f64 {
        let r = t.as_slice();
        (0..self.cells())
            .into_par_iter()
            .map(|c| {
                self.cell_slice(c)
                    .iter()
                    .zip(r)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt()
            })
            .reduce(|| 0.0, f64::max)
    }
}

/// Staggered forward-difference gradient with zero slope across boundary faces.
pub fn gradient(u: &ImageField, grid: &GridSpec) -> Result<GradientField> {
    u.check_grid(grid)?;
    let mut g = GradientField::zeros(grid);
    stencil::gradient(grid, &u.values, &mut g.values);
    Ok(g)
}

/// Divergence with zero normal flux through boundary faces; the negative
/// adjoint of [`gradient`].
pub fn divergence(flux: &GradientField, grid: &GridSpec) -> Result<ImageField> {
    flux.check_grid(grid)?;
    let mut out = ImageField::zeros(grid);
    stencil::divergence(grid, &flux.values, &mut out.values);
    Ok(out)
}

/// `div(H∇u)` under no-flux boundary conditions.
pub fn diffusion_apply(h: &Tensor4Field, u: &ImageField, grid: &GridSpec) -> Result<ImageField> {
    u.check_grid(grid)?;
    h.check_symmetric()?;
    let op = DiffusionOperator::new(grid, h)?;
    let mut out = ImageField::zeros(grid);
    op.apply(&u.values, &mut out.values);
    Ok(out)
}

/// Reusable matrix-free form of `u ↦ div(H∇u)` for a fixed tensor field.
pub struct DiffusionOperator<'a> {
    grid: &'a GridSpec,
    h: &'a Tensor4Field,
}

impl<'a> DiffusionOperator<'a> {
    pub fn new(grid: &'a GridSpec, h: &'a Tensor4Field) -> Result<Self> {
        h.check_grid(grid)?;
        Ok(Self { grid, h })
    }

    /// Writes `div(H∇x)` into `out`; both are flat field buffers.
    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        let grid = self.grid;
        let n = grid.channels * grid.axes();
        let mut flux = vec![0.0; grid.cells() * n];
        stencil::diffusion(grid, &self.h.values, x, &mut flux, out);
    }
}

/// Smallest nonzero eigenvalue of the scalar Neumann Laplacian `−div∇` on
/// the grid's geometry, found by inverse iteration on mean-free vectors.
pub fn poincare_estimate(grid: &GridSpec) -> Result<f64> {
    let scalar = grid.with_channels(1)?;
    let n = scalar.cells();
    let neg_laplacian = |x: &[f64], out: &mut [f64]| {
        let mut g = vec![0.0; n * scalar.axes()];
        stencil::gradient(&scalar, x, &mut g);
        stencil::divergence(&scalar, &g, out);
        out.iter_mut().for_each(|v| *v = -*v);
    };

    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut x: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
    remove_mean(&mut x);
    normalize(&mut x);

    let max_outer = 500;
    let cg_iters = 20 * n + 1000;
    let mut lambda_prev = f64::NAN;
    let mut ax = vec![0.0; n];
    for _ in 0..max_outer {
        let mut y = x.clone();
        conjugate_gradient(neg_laplacian, &x, &mut y, 1e-13, cg_iters)?;
        remove_mean(&mut y);
        normalize(&mut y);
        neg_laplacian(&y, &mut ax);
        let lambda = tensor::dot(&y, &ax);
        x = y;
        if (lambda - lambda_prev).abs() <= 1e-13 * lambda {
            return Ok(lambda);
        }
        lambda_prev = lambda;
    }
    Err(Error::Numerical(format!(
        "inverse iteration did not settle after {max_outer} sweeps (last estimate {lambda_prev})"
    )))
}

fn remove_mean(x: &mut [f64]) {
    let m = x.iter().sum::<f64>() / x.len() as f64;
    x.iter_mut().for_each(|v| *v -= m);
}

fn normalize(x: &mut [f64]) {
    let nrm = tensor::dot(x, x).sqrt();
    x.iter_mut().for_each(|v| *v /= nrm);
}
