//! Time integration of the coupled image/diffusivity system.
//!
//! Each step first relaxes `H` towards the response with the exact solution
//! of `τ∂ₜH + H = F` over one step, with `F` frozen at the extrapolated
//! midpoint state `ū = (3u_n − u_{n−1})/2`:
//!
//! ```text
//! H_{n+1} = e^{−Δt/τ} H_n + (1 − e^{−Δt/τ}) F(∇_σ ū)
//! ```
//!
//! then solves the backward-Euler diffusion step `(I − Δt·div H_{n+1}∇) u_{n+1} = u_n`
//! by conjugate gradients. The `H` update is a convex combination, so cell
//! spectra never drop below `α e^{−t/τ} + ω(1 − e^{−t/τ})`, whatever `Δt` is.
//! Evaluating `F` at the midpoint makes the update second-order accurate
//! against the memory form of the relaxation law.

use std::io::{self, Write};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{gradient, DiffusionOperator, GradientField, GridSpec, ImageField, Tensor4Field};
use crate::mollifier::{grad_sigma, Kernel, KernelKind};
use crate::response::ResponseParams;
use crate::solver::{conjugate_gradient, CgStats};
use crate::tensor::Tensor4;

/// Slack allowed on the predicted spectral floor of `H`.
pub const KAPPA_SLACK: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct FilterParams {
    /// Relaxation time `τ`.
    pub tau: f64,
    /// Mollifier bandwidth in pixels; `0` uses the raw gradient.
    pub sigma: f64,
    pub kernel: KernelKind,
    pub dt: f64,
    pub t_end: f64,
    pub response: ResponseParams,
    /// Spectral floor of the initial diffusivity.
    pub alpha: f64,
    /// Relative residual target of the implicit solve.
    pub cg_tol: f64,
    /// `None` selects `10·√cells + 200`.
    pub cg_max_iter: Option<usize>,
}

impl Default for FilterParams {
    fn default() -> Self {
        Self {
            tau: 0.5,
            sigma: 1.0,
            kernel: KernelKind::Gaussian,
            dt: 0.25,
            t_end: 3.0,
            response: ResponseParams::default(),
            alpha: 0.1,
            cg_tol: 1e-10,
            cg_max_iter: None,
        }
    }
}

impl FilterParams {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Parameter(format!("{name} must be > 0, got {v}")))
            }
        };
        positive("tau", self.tau)?;
        positive("dt", self.dt)?;
        positive("alpha", self.alpha)?;
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::Parameter(format!("sigma must be >= 0, got {}", self.sigma)));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(Error::Parameter(format!("t_end must be >= 0, got {}", self.t_end)));
        }
        if !(self.cg_tol > 0.0 && self.cg_tol <= 1e-2) {
            return Err(Error::Parameter(format!(
                "cg_tol must lie in (0, 1e-2], got {}",
                self.cg_tol
            )));
        }
        if self.cg_max_iter == Some(0) {
            return Err(Error::Parameter("cg_max_iter must be >= 1".into()));
        }
        self.response.validate()
    }

    pub fn cg_max_iter_for(&self, grid: &GridSpec) -> usize {
        self.cg_max_iter
            .unwrap_or_else(|| 10 * (grid.cells() as f64).sqrt().ceil() as usize + 200)
    }

    /// Number of fixed-size steps needed to reach `t_end`.
    pub fn steps(&self) -> usize {
        if self.t_end <= 0.0 {
            0
        } else {
            (self.t_end / self.dt - 1e-9).ceil() as usize
        }
    }

    /// Predicted spectral floor `α e^{−t/τ} + ω(1 − e^{−t/τ})`.
    pub fn kappa_at(&self, t: f64) -> f64 {
        let decay = (-t / self.tau).exp();
        self.alpha * decay + self.response.omega * (1.0 - decay)
    }

    fn kernel(&self) -> Result<Option<Kernel>> {
        if self.sigma == 0.0 {
            return Ok(None);
        }
        Ok(Some(match self.kernel {
            KernelKind::Gaussian => Kernel::gaussian(self.sigma)?,
            KernelKind::CompactBump => Kernel::compact_bump(self.sigma)?,
        }))
    }
}

/// Image and diffusivity at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterState {
    pub t: f64,
    pub u: ImageField,
    pub h: Tensor4Field,
    pub kappa_predicted: f64,
    /// Image one step back, used for the midpoint extrapolation.
    pub u_prev: Option<ImageField>,
    pub steps: usize,
}

impl FilterState {
    pub fn new(u0: ImageField, h0: Tensor4Field, p: &FilterParams) -> Self {
        Self {
            t: 0.0,
            u: u0,
            h: h0,
            kappa_predicted: p.kappa_at(0.0),
            u_prev: None,
            steps: 0,
        }
    }

    /// State the coefficient is evaluated at: `(3u_n − u_{n−1})/2`, or `u_0`
    /// on the first step.
    pub fn coefficient_state(&self) -> ImageField {
        match &self.u_prev {
            Some(prev) => self
                .u
                .lin_comb(1.5, prev, -0.5)
                .expect("previous image shares the grid"),
            None => self.u.clone(),
        }
    }
}

/// Per-step diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub t: f64,
    pub l2_norm_u: f64,
    pub mass_per_channel: Vec<f64>,
    pub energy: f64,
    pub min_eig_h: f64,
    pub cg_iters: usize,
}

/// Gradient feeding the response: `∇(u ∗ ρ_σ)` for `σ > 0`, `∇u` otherwise.
pub fn response_gradient(u: &ImageField, p: &FilterParams, grid: &GridSpec) -> Result<GradientField> {
    match p.kernel()? {
        Some(kern) => grad_sigma(u, &kern, grid),
        None => gradient(u, grid),
    }
}

/// Cell-wise `F(D)` over a gradient field.
pub fn response_field(
    g: &GradientField,
    response: &ResponseParams,
    grid: &GridSpec,
) -> Result<Tensor4Field> {
    let n = grid.channels() * grid.axes();
    let mut out = Tensor4Field::uniform(grid, &Tensor4::zeros(grid.channels(), grid.axes()))?;
    out.values_mut()
        .par_chunks_mut(n * n)
        .enumerate()
        .for_each(|(c, cell)| response.evaluate_into(g.cell_slice(c), cell));
    Ok(out)
}

/// Relaxes `H` over one step towards `F` evaluated at the extrapolated state.
pub fn step_h(state: &FilterState, p: &FilterParams, grid: &GridSpec) -> Result<Tensor4Field> {
    let g = response_gradient(&state.coefficient_state(), p, grid)?;
    let target = response_field(&g, &p.response, grid)?;
    Ok(relax(&state.h, &target, (-p.dt / p.tau).exp()))
}

/// `a·H + (1 − a)·F`, cell-wise, evaluated as `H + (1 − a)(F − H)` so that
/// `F = H` is reproduced exactly.
pub(crate) fn relax(h: &Tensor4Field, target: &Tensor4Field, a: f64) -> Tensor4Field {
    let mut out = h.clone();
    let b = 1.0 - a;
    out.values_mut()
        .par_iter_mut()
        .zip(target.values().par_iter())
        .for_each(|(v, f)| *v += b * (f - *v));
    out
}

/// Solves `u⁺ − Δt·div(H∇u⁺) = u` by conjugate gradients.
pub fn step_u(
    state: &FilterState,
    h_next: &Tensor4Field,
    p: &FilterParams,
    grid: &GridSpec,
) -> Result<(ImageField, CgStats)> {
    implicit_diffusion(&state.u, state.u_prev.as_ref(), h_next, p, grid)
}

/// The solve starts from `2u − u_prev` when the previous image is known,
/// else from `u`. Both guesses carry the mass of `u`, and the operator maps
/// mean-free vectors to mean-free vectors, so every iterate conserves mass.
pub(crate) fn implicit_diffusion(
    u: &ImageField,
    u_prev: Option<&ImageField>,
    h: &Tensor4Field,
    p: &FilterParams,
    grid: &GridSpec,
) -> Result<(ImageField, CgStats)> {
    u.check_grid(grid)?;
    let op = DiffusionOperator::new(grid, h)?;
    let dt = p.dt;
    let apply = |x: &[f64], out: &mut [f64]| {
        op.apply(x, out);
        out.iter_mut().zip(x).for_each(|(o, xi)| *o = xi - dt * *o);
    };
    let mut next = match u_prev {
        Some(prev) => u.lin_comb(2.0, prev, -1.0)?,
        None => u.clone(),
    };
    let stats = conjugate_gradient(
        apply,
        u.values(),
        next.values_mut(),
        p.cg_tol,
        p.cg_max_iter_for(grid),
    )?;
    Ok((next, stats))
}

/// Discrete `E = ½∫|u|² + (τ/2)∫‖H − F(0)‖²`.
pub fn energy(state: &FilterState, p: &FilterParams, grid: &GridSpec) -> f64 {
    let f0 = p.response.at_zero(grid.channels(), grid.axes());
    energy_parts(&state.u, &state.h, &f0, p.tau, grid)
}

fn energy_parts(u: &ImageField, h: &Tensor4Field, f0: &Tensor4, tau: f64, grid: &GridSpec) -> f64 {
    let vol = grid.cell_volume();
    let u_part: f64 = u.values().iter().map(|v| v * v).sum();
    let m = f0.as_slice().len();
    // per-cell terms in parallel, summed in cell order so traces are reproducible
    let per_cell: Vec<f64> = h
        .values()
        .par_chunks(m)
        .map(|cell| {
            cell.iter()
                .zip(f0.as_slice())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
        })
        .collect();
    let h_part: f64 = per_cell.iter().sum();
    0.5 * vol * u_part + 0.5 * tau * vol * h_part
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn record(
    t: f64,
    u: &ImageField,
    h: &Tensor4Field,
    f0: &Tensor4,
    tau: f64,
    min_eig_h: f64,
    cg_iters: usize,
    grid: &GridSpec,
) -> TraceRecord {
    let vol = grid.cell_volume();
    TraceRecord {
        t,
        l2_norm_u: u.l2_norm(grid),
        mass_per_channel: (0..grid.channels()).map(|i| vol * u.channel_sum(i)).collect(),
        energy: energy_parts(u, h, f0, tau, grid),
        min_eig_h,
        cg_iters,
    }
}

fn check_initial(u0: &ImageField, h0: &Tensor4Field, p: &FilterParams, grid: &GridSpec) -> Result<()> {
    p.validate()?;
    u0.check_grid(grid)?;
    h0.check_grid(grid)?;
    if !u0.is_finite() {
        return Err(Error::Parameter("initial image has non-finite values".into()));
    }
    h0.check_symmetric()?;
    let (lmin, cell) = h0.min_eigenvalue();
    if lmin < p.alpha - crate::tensor::PSD_SLACK {
        return Err(Error::Parameter(format!(
            "initial diffusivity at cell {cell} has min eigenvalue {lmin:e} below alpha = {}",
            p.alpha
        )));
    }
    Ok(())
}

/// Advances one full step, checking the spectral floor of the new `H`.
pub fn advance(state: &mut FilterState, p: &FilterParams, grid: &GridSpec) -> Result<(CgStats, usize, f64)> {
    let h_next = step_h(state, p, grid)?;
    let (u_next, stats) = step_u(state, &h_next, p, grid)?;
    if !u_next.is_finite() {
        return Err(Error::Numerical(format!("non-finite image after step {}", state.steps + 1)));
    }
    let steps = state.steps + 1;
    let t = steps as f64 * p.dt;
    let kappa = p.kappa_at(t);
    let (min_eig, cell) = h_next.min_eigenvalue();
    if min_eig < kappa - KAPPA_SLACK {
        return Err(Error::Invariant {
            t,
            cell,
            min_eig,
            bound: kappa,
        });
    }
    let prev = std::mem::replace(&mut state.u, u_next);
    state.u_prev = Some(prev);
    state.h = h_next;
    state.t = t;
    state.steps = steps;
    state.kappa_predicted = kappa;
    Ok((stats, cell, min_eig))
}

/// Integrates from `(u0, H0)` to `t_end`. The returned trace holds the
/// initial state followed by one record per step.
pub fn run(
    u0: &ImageField,
    h0: &Tensor4Field,
    p: &FilterParams,
    grid: &GridSpec,
) -> Result<(FilterState, Vec<TraceRecord>)> {
    check_initial(u0, h0, p, grid)?;
    let f0 = p.response.at_zero(grid.channels(), grid.axes());
    let mut state = FilterState::new(u0.clone(), h0.clone(), p);
    let steps = p.steps();
    let mut trace = Vec::with_capacity(steps + 1);
    let min_eig0 = state.h.min_eigenvalue().0;
    trace.push(record(0.0, &state.u, &state.h, &f0, p.tau, min_eig0, 0, grid));
    for _ in 0..steps {
        let (stats, _, min_eig) = advance(&mut state, p, grid)?;
        trace.push(record(state.t, &state.u, &state.h, &f0, p.tau, min_eig, stats.iterations, grid));
    }
    Ok((state, trace))
}

/// Least-squares slope of `ln E(t)` against `t` over the second half of the
/// trace.
pub fn decay_rate_fit(traces: &[TraceRecord]) -> Result<f64> {
    if traces.len() < 10 {
        return Err(Error::Fit(format!("need >= 10 records, got {}", traces.len())));
    }
    let tail = &traces[traces.len() / 2..];
    if let Some(r) = tail.iter().find(|r| !(r.energy > 0.0 && r.energy.is_finite())) {
        return Err(Error::Fit(format!("nonpositive energy {} at t={}", r.energy, r.t)));
    }
    let n = tail.len() as f64;
    let mt = tail.iter().map(|r| r.t).sum::<f64>() / n;
    let my = tail.iter().map(|r| r.energy.ln()).sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for r in tail {
        let dx = r.t - mt;
        sxy += dx * (r.energy.ln() - my);
        sxx += dx * dx;
    }
    if sxx == 0.0 {
        return Err(Error::Fit("all records share one time".into()));
    }
    Ok(sxy / sxx)
}

/// Runs `steps` steps and compares the recursively updated `H` with a direct
/// product-trapezoid quadrature of
/// `H(t) = e^{−t/τ}H⁰ + (1/τ)∫₀ᵗ e^{−(t−s)/τ} F(∇_σ u(s)) ds`
/// over the stored image trajectory. Returns the largest cell-wise Frobenius
/// discrepancy over all step times.
pub fn memory_form_check(
    u0: &ImageField,
    h0: &Tensor4Field,
    p: &FilterParams,
    grid: &GridSpec,
    steps: usize,
) -> Result<f64> {
    check_initial(u0, h0, p, grid)?;
    if steps == 0 {
        return Ok(0.0);
    }
    let mut state = FilterState::new(u0.clone(), h0.clone(), p);
    let mut responses = vec![response_field(&response_gradient(u0, p, grid)?, &p.response, grid)?];
    let mut recursive = Vec::with_capacity(steps);
    for _ in 0..steps {
        advance(&mut state, p, grid)?;
        responses.push(response_field(
            &response_gradient(&state.u, p, grid)?,
            &p.response,
            grid,
        )?);
        recursive.push(state.h.clone());
    }

    // Weights of the exponential kernel against the linear interpolant of F
    // on one step: ∫ e^{−(h−s)/τ}/τ [(1−s/h) F_j + (s/h) F_{j+1}] ds.
    let x = p.dt / p.tau;
    let a = (-x).exp();
    let phi = -(-x).exp_m1() / x;
    let w_right = 1.0 - phi;
    let w_left = phi - a;

    let mut worst = 0.0_f64;
    for (n, h_rec) in recursive.iter().enumerate() {
        let n = n + 1;
        let mut quad: Vec<f64> = h0.values().iter().map(|v| v * a.powi(n as i32)).collect();
        for j in 0..n {
            let decay = a.powi((n - j - 1) as i32);
            let (fl, fr) = (responses[j].values(), responses[j + 1].values());
            quad.par_iter_mut()
                .zip(fl.par_iter().zip(fr.par_iter()))
                .for_each(|(q, (l, r))| *q += decay * (w_left * l + w_right * r));
        }
        let m = grid.channels().pow(2) * grid.axes().pow(2);
        let gap = quad
            .par_chunks(m)
            .zip(h_rec.values().par_chunks(m))
            .map(|(q, h)| {
                q.iter()
                    .zip(h)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt()
            })
            .reduce(|| 0.0, f64::max);
        worst = worst.max(gap);
    }
    Ok(worst)
}

/// Writes the trace as CSV with 17 significant digits per float.
pub fn write_trace_csv<W: Write>(mut w: W, trace: &[TraceRecord]) -> io::Result<()> {
    let k = trace.first().map_or(0, |r| r.mass_per_channel.len());
    let mut header = String::from("t,l2_norm_u");
    for i in 0..k {
        header.push_str(&format!(",mass_c{i}"));
    }
    header.push_str(",energy,min_eig_H,cg_iters");
    writeln!(w, "{header}")?;
    for r in trace {
        write!(w, "{:.16e},{:.16e}", r.t, r.l2_norm_u)?;
        for m in &r.mass_per_channel {
            write!(w, ",{m:.16e}")?;
        }
        writeln!(w, ",{:.16e},{:.16e},{}", r.energy, r.min_eig_h, r.cg_iters)?;
    }
    Ok(())
}
