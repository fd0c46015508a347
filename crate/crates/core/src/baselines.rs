//! Reference filters without diffusivity memory.
//!
//! Both baselines set `H` directly from the current image every step and
//! reuse the implicit diffusion solve of the relaxation filter, so any
//! difference to [`integrator::run`](crate::integrator::run) comes from the
//! `H` dynamics alone. The coefficient is evaluated at the same extrapolated
//! state as in the relaxation filter, which makes the Catté baseline the
//! exact `τ → 0` limit of the discrete scheme.

use crate::error::{Error, Result};
use crate::grid::{gradient, GridSpec, ImageField};
use crate::integrator::{
    implicit_diffusion, record, response_field, response_gradient, FilterParams, FilterState,
    TraceRecord,
};
use crate::response::ResponseParams;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BaselineKind {
    /// `H = F(∇_σ u)` with the configured response; needs `σ > 0`.
    CatteRegularized,
    /// `H = g(‖∇u‖)·Id` on the raw gradient.
    ///
    /// Ill-posed in the continuum; the discrete version is only a
    /// demonstration and carries no stability guarantee beyond the implicit
    /// solve.
    PeronaMalik { lambda: f64 },
}

/// Runs a baseline filter to `p.t_end`; `p.tau` and `p.alpha` are ignored.
pub fn run_baseline(
    u0: &ImageField,
    p: &FilterParams,
    kind: BaselineKind,
    grid: &GridSpec,
) -> Result<(ImageField, Vec<TraceRecord>)> {
    let p = FilterParams {
        tau: 1.0,
        alpha: 1.0,
        ..p.clone()
    };
    p.validate()?;
    u0.check_grid(grid)?;
    let response = match kind {
        BaselineKind::CatteRegularized => {
            if p.sigma <= 0.0 {
                return Err(Error::Parameter("Catte baseline needs sigma > 0".into()));
            }
            p.response
        }
        BaselineKind::PeronaMalik { lambda } => {
            let r = ResponseParams::perona_malik(lambda, p.response.omega);
            r.validate()?;
            r
        }
    };
    let coefficient = |u: &ImageField| match kind {
        BaselineKind::CatteRegularized => {
            response_field(&response_gradient(u, &p, grid)?, &response, grid)
        }
        BaselineKind::PeronaMalik { .. } => response_field(&gradient(u, grid)?, &response, grid),
    };
    // tau only weighs the H term of the energy; baselines report the image part
    let f0 = response.at_zero(grid.channels(), grid.axes());

    let mut h = coefficient(u0)?;
    let mut state = FilterState::new(u0.clone(), h.clone(), &p);
    let mut trace = vec![record(0.0, u0, &h, &f0, 0.0, h.min_eigenvalue().0, 0, grid)];
    for n in 1..=p.steps() {
        h = coefficient(&state.coefficient_state())?;
        let (next, stats) = implicit_diffusion(&state.u, state.u_prev.as_ref(), &h, &p, grid)?;
        if !next.is_finite() {
            return Err(Error::Numerical(format!("non-finite image after step {n}")));
        }
        state.u_prev = Some(std::mem::replace(&mut state.u, next));
        state.t = n as f64 * p.dt;
        let min_eig = h.min_eigenvalue().0;
        trace.push(record(state.t, &state.u, &h, &f0, 0.0, min_eig, stats.iterations, grid));
    }
    Ok((state.u, trace))
}

/// Discrete `L²`-in-time distance between the `‖u‖₂` histories of two runs:
/// `sqrt(Σ_n (t_n − t_{n−1}) (a_n − b_n)²)` over records `1..`.
pub fn compare_trajectories(a: &[TraceRecord], b: &[TraceRecord]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Dimension(format!(
            "trajectories have {} and {} records",
            a.len(),
            b.len()
        )));
    }
    let mut acc = 0.0;
    for n in 1..a.len() {
        let dt = a[n].t - a[n - 1].t;
        if (a[n].t - b[n].t).abs() > 1e-9 * a[n].t.abs().max(1.0) {
            return Err(Error::Dimension(format!(
                "record {n} at t={} vs t={}",
                a[n].t, b[n].t
            )));
        }
        let diff = a[n].l2_norm_u - b[n].l2_norm_u;
        acc += dt * diff * diff;
    }
    Ok(acc.sqrt())
}
