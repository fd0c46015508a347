//! Cell loops behind the grid operators.
//!
//! The loops are written once against [`Shape`] and instantiated with
//! compile-time channel and axis counts for the common image layouts, which
//! lets the per-cell work unroll; other layouts fall back to runtime sizes.

use rayon::prelude::*;

use crate::grid::GridSpec;

/// Cells per parallel task.
const PAR_CHUNK_CELLS: usize = 512;

/// Per axis: whether the cell has a neighbor behind (`.0`) and ahead (`.1`).
type Interior = [(bool, bool); 3];

/// Strides and inverse spacings, hoisted out of the cell loops.
#[derive(Clone, Copy)]
struct Geometry {
    strides: [usize; 3],
    inv_h: [f64; 3],
}

impl Geometry {
    fn of(grid: &GridSpec) -> Self {
        let mut g = Geometry {
            strides: [0; 3],
            inv_h: [0.0; 3],
        };
        for a in 0..grid.axes() {
            g.strides[a] = grid.strides()[a];
            g.inv_h[a] = 1.0 / grid.spacing()[a];
        }
        g
    }
}

pub(crate) trait Shape: Copy + Send + Sync {
    fn k(self) -> usize;
    fn d(self) -> usize;
}

#[derive(Clone, Copy)]
pub(crate) struct Fixed<const K: usize, const D: usize>;

impl<const K: usize, const D: usize> Shape for Fixed<K, D> {
    #[inline(always)]
    fn k(self) -> usize {
        K
    }
    #[inline(always)]
    fn d(self) -> usize {
        D
    }
}

#[derive(Clone, Copy)]
pub(crate) struct Dyn {
    k: usize,
    d: usize,
}

impl Shape for Dyn {
    #[inline(always)]
    fn k(self) -> usize {
        self.k
    }
    #[inline(always)]
    fn d(self) -> usize {
        self.d
    }
}

/// Binds `$s` to the most specific [`Shape`] for the grid and evaluates `$body`.
macro_rules! with_shape {
    ($grid:expr, $s:ident => $body:expr) => {
        match ($grid.channels(), $grid.axes()) {
            (1, 1) => { let $s = Fixed::<1, 1>; $body }
            (1, 2) => { let $s = Fixed::<1, 2>; $body }
            (3, 2) => { let $s = Fixed::<3, 2>; $body }
            (1, 3) => { let $s = Fixed::<1, 3>; $body }
            (3, 3) => { let $s = Fixed::<3, 3>; $body }
            (k, d) => { let $s = Dyn { k, d }; $body }
        }
    };
}

/// Calls `f(cell, interior, out_cell, scratch)` for every cell, where
/// `out_cell` is the cell's `width`-sized slice of `out` and `scratch` holds
/// `width` values reused between cells. Chunks of cells run in parallel;
/// coordinates are tracked incrementally inside a chunk.
#[inline(always)]
fn for_each_cell<F>(grid: &GridSpec, out: &mut [f64], width: usize, f: F)
where
    F: Fn(usize, &Interior, &mut [f64], &mut [f64]) + Sync,
{
    let d = grid.axes();
    let dims = grid.dims();
    out.par_chunks_mut(PAR_CHUNK_CELLS * width)
        .enumerate()
        .for_each(|(chunk, block)| {
            let first = chunk * PAR_CHUNK_CELLS;
            let mut scratch = vec![0.0; width];
            let mut x = [0usize; 3];
            for (a, xa) in x.iter_mut().enumerate().take(d) {
                *xa = grid.coord(first, a);
            }
            for (offset, cell_out) in block.chunks_exact_mut(width).enumerate() {
                let mut interior = [(false, false); 3];
                for a in 0..d {
                    interior[a] = (x[a] > 0, x[a] + 1 < dims[a]);
                }
                f(first + offset, &interior, cell_out, &mut scratch);
                // row-major odometer, last axis fastest
                for a in (0..d).rev() {
                    x[a] += 1;
                    if x[a] < dims[a] {
                        break;
                    }
                    x[a] = 0;
                }
            }
        });
}

#[inline(always)]
fn forward_differences<S: Shape>(
    s: S,
    geo: &Geometry,
    u: &[f64],
    c: usize,
    interior: &Interior,
    g: &mut [f64],
) {
    let (k, d) = (s.k(), s.d());
    let g = &mut g[..k * d];
    let here = &u[c * k..(c + 1) * k];
    for a in 0..d {
        if interior[a].1 {
            let nb = (c + geo.strides[a]) * k;
            let ahead = &u[nb..nb + k];
            let inv_h = geo.inv_h[a];
            for i in 0..k {
                g[i * d + a] = (ahead[i] - here[i]) * inv_h;
            }
        } else {
            for i in 0..k {
                g[i * d + a] = 0.0;
            }
        }
    }
}

#[inline(always)]
fn backward_sum<S: Shape>(s: S, geo: &Geometry, j: &[f64], c: usize, interior: &Interior, o: &mut [f64]) {
    let (k, d) = (s.k(), s.d());
    let kd = k * d;
    let o = &mut o[..k];
    o.iter_mut().for_each(|v| *v = 0.0);
    let here = &j[c * kd..(c + 1) * kd];
    for a in 0..d {
        let inv_h = geo.inv_h[a];
        if interior[a].1 {
            for i in 0..k {
                o[i] += here[i * d + a] * inv_h;
            }
        }
        if interior[a].0 {
            let back = (c - geo.strides[a]) * kd;
            let behind = &j[back..back + kd];
            for i in 0..k {
                o[i] -= behind[i * d + a] * inv_h;
            }
        }
    }
}

#[inline(always)]
fn matvec<S: Shape>(s: S, h: &[f64], x: &[f64], out: &mut [f64]) {
    let n = s.k() * s.d();
    let h = &h[..n * n];
    let x = &x[..n];
    let out = &mut out[..n];
    for r in 0..n {
        let row = &h[r * n..(r + 1) * n];
        let mut acc = 0.0;
        for j in 0..n {
            acc += row[j] * x[j];
        }
        out[r] = acc;
    }
}

pub(crate) fn gradient(grid: &GridSpec, u: &[f64], out: &mut [f64]) {
    let geo = Geometry::of(grid);
    with_shape!(grid, s => {
        for_each_cell(grid, out, s.k() * s.d(), |c, interior, g, _| {
            forward_differences(s, &geo, u, c, interior, g)
        })
    })
}

pub(crate) fn divergence(grid: &GridSpec, j: &[f64], out: &mut [f64]) {
    let geo = Geometry::of(grid);
    with_shape!(grid, s => {
        for_each_cell(grid, out, s.k(), |c, interior, o, _| backward_sum(s, &geo, j, c, interior, o))
    })
}

/// `out = div(H∇x)`; `flux` is scratch of gradient size.
pub(crate) fn diffusion(grid: &GridSpec, h: &[f64], x: &[f64], flux: &mut [f64], out: &mut [f64]) {
    let geo = Geometry::of(grid);
    with_shape!(grid, s => {
        let n = s.k() * s.d();
        for_each_cell(grid, flux, n, |c, interior, f, g| {
            forward_differences(s, &geo, x, c, interior, g);
            matvec(s, &h[c * n * n..(c + 1) * n * n], g, f);
        });
        for_each_cell(grid, out, s.k(), |c, interior, o, _| backward_sum(s, &geo, flux, c, interior, o))
    })
}
