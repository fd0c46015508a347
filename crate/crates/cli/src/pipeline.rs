//! load → rescale → noise → initial diffusivity → filter → unrescale → save.

use std::fs::File;
use std::io::BufWriter;

use aniso_core::baselines::{run_baseline, BaselineKind};
use aniso_core::init::{add_noise, init_h0, rescale, unrescale};
use aniso_core::integrator::{run, write_trace_csv};
use aniso_core::{GridSpec, ImageField, TraceRecord};

use crate::config::{Mode, RunConfig};
use crate::error::CliError;
use crate::metrics::psnr;
use crate::pnm::{load_image, save_image};

/// Result of filtering an image held in memory, on the `[0, 1]` scale.
#[derive(Debug, Clone)]
pub struct Filtered {
    /// Input after noise injection.
    pub noisy: ImageField,
    /// Filter output, not yet clamped.
    pub output: ImageField,
    pub trace: Vec<TraceRecord>,
}

pub fn filter_image(input: &ImageField, cfg: &RunConfig) -> Result<Filtered, CliError> {
    let grid = GridSpec::new(input.dims(), input.channels()).map_err(CliError::engine("grid"))?;
    let (lo, hi) = cfg.range;
    let u = rescale(input, lo, hi).map_err(CliError::engine("rescale"))?;
    let noisy = add_noise(&u, &cfg.noise).map_err(CliError::engine("add noise"))?;
    let (u_out, trace) = match cfg.mode {
        Mode::Relax => {
            let h0 = init_h0(&noisy, &grid, cfg.window, cfg.filter.alpha)
                .map_err(CliError::engine("initial diffusivity"))?;
            let (state, trace) = run(&noisy, &h0, &cfg.filter, &grid).map_err(CliError::engine("filter"))?;
            (state.u, trace)
        }
        Mode::Catte => run_baseline(&noisy, &cfg.filter, BaselineKind::CatteRegularized, &grid)
            .map_err(CliError::engine("filter"))?,
        Mode::PeronaMalik => {
            let lambda = cfg.lambda.unwrap_or(cfg.filter.response.s);
            run_baseline(&noisy, &cfg.filter, BaselineKind::PeronaMalik { lambda }, &grid)
                .map_err(CliError::engine("filter"))?
        }
    };
    if !u_out.is_finite() {
        return Err(CliError::Engine {
            stage: "filter",
            source: aniso_core::Error::Numerical("non-finite output pixel".into()),
        });
    }
    let back = |f: &ImageField| unrescale(f, lo, hi).map_err(CliError::engine("unrescale"));
    Ok(Filtered {
        noisy: back(&noisy)?,
        output: back(&u_out)?,
        trace,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub steps: usize,
    pub psnr_vs_input: f64,
    pub psnr_noisy_vs_reference: Option<f64>,
    pub psnr_vs_reference: Option<f64>,
}

pub fn execute(cfg: &RunConfig) -> Result<Report, CliError> {
    let load = |path: &std::path::Path| {
        load_image(path).map_err(|source| CliError::Image {
            stage: "load",
            path: path.to_path_buf(),
            source,
        })
    };
    let input = load(&cfg.input)?;
    let reference = cfg.reference.as_deref().map(load).transpose()?;

    let result = filter_image(&input, cfg)?;
    let clamped = clamp01(&result.output);
    save_image(&clamped, &cfg.output).map_err(|source| CliError::Image {
        stage: "save",
        path: cfg.output.clone(),
        source,
    })?;
    if let Some(path) = &cfg.trace {
        let io_err = |source| CliError::Io {
            stage: "write trace",
            path: path.clone(),
            source,
        };
        let file = File::create(path).map_err(io_err)?;
        write_trace_csv(BufWriter::new(file), &result.trace).map_err(io_err)?;
    }

    let metric = |a: &ImageField, b: &ImageField| psnr(a, b).map_err(CliError::engine("psnr"));
    let (noisy_ref, out_ref) = match &reference {
        Some(r) => (
            Some(metric(&clamp01(&result.noisy), r)?),
            Some(metric(&clamped, r)?),
        ),
        None => (None, None),
    };
    Ok(Report {
        steps: result.trace.len().saturating_sub(1),
        psnr_vs_input: metric(&clamped, &input)?,
        psnr_noisy_vs_reference: noisy_ref,
        psnr_vs_reference: out_ref,
    })
}

pub fn clamp01(u: &ImageField) -> ImageField {
    let mut out = u.clone();
    out.values_mut().iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
    out
}
