//! Run configuration: command-line flags over an optional `key = value` file.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use aniso_core::init::{NoiseSpec, DEFAULT_WINDOW};
use aniso_core::integrator::FilterParams;
use aniso_core::ResponseParams;
use clap::Parser;

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Relax,
    Catte,
    PeronaMalik,
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "relax" => Ok(Mode::Relax),
            "catte" => Ok(Mode::Catte),
            "pm" => Ok(Mode::PeronaMalik),
            other => Err(format!("unknown mode {other:?}; expected relax, catte or pm")),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Relax => "relax",
            Mode::Catte => "catte",
            Mode::PeronaMalik => "pm",
        })
    }
}

/// Anisotropic denoising of PGM/PPM images.
///
/// Every option except `--config` may also be given in the config file as
/// `name = value`, using the flag name without the leading dashes.
#[derive(Debug, Default, Parser)]
#[command(name = "anisodenoise", version)]
pub struct Args {
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// relax, catte or pm
    #[arg(long)]
    pub mode: Option<Mode>,
    #[arg(long)]
    pub tau: Option<f64>,
    /// Mollifier bandwidth in pixels
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Contrast threshold of the response
    #[arg(long = "threshold-s")]
    pub threshold_s: Option<f64>,
    #[arg(long)]
    pub omega: Option<f64>,
    /// Spectral floor of the initial diffusivity
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long = "t-end")]
    pub t_end: Option<f64>,
    /// Std of added Gaussian noise, in units of the [-1, 1] working range
    #[arg(long = "noise-std")]
    pub noise_std: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Odd window size for the initial diffusivity estimate
    #[arg(long)]
    pub window: Option<usize>,
    /// Write a per-step CSV trace here
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Clean image to report PSNR against
    #[arg(long)]
    pub reference: Option<PathBuf>,
    /// Perona-Malik contrast parameter; defaults to the threshold s
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub input: PathBuf,
    pub output: PathBuf,
    pub trace: Option<PathBuf>,
    pub reference: Option<PathBuf>,
    pub mode: Mode,
    pub filter: FilterParams,
    pub noise: NoiseSpec,
    pub window: usize,
    pub lambda: Option<f64>,
    /// Intensity range of loaded images, mapped onto `[−1, 1]`.
    pub range: (f64, f64),
}

impl RunConfig {
    /// Defaults for everything except the paths.
    pub fn new(input: impl Into<PathBuf>, output: impl Into<PathBuf>) -> Self {
        Self {
            input: input.into(),
            output: output.into(),
            trace: None,
            reference: None,
            mode: Mode::Relax,
            filter: FilterParams::default(),
            noise: NoiseSpec::gaussian(0.0, 0),
            window: DEFAULT_WINDOW,
            lambda: None,
            range: (0.0, 1.0),
        }
    }

    pub fn from_args(args: Args) -> Result<Self, CliError> {
        let file = match &args.config {
            Some(path) => parse_config_file(path)?,
            None => HashMap::new(),
        };
        let mut file = FileValues(file);

        let input = pick(args.input, &mut file, "input")?
            .ok_or_else(|| CliError::Config("missing --input".into()))?;
        let output = pick(args.output, &mut file, "output")?
            .ok_or_else(|| CliError::Config("missing --output".into()))?;
        let mut c = RunConfig::new(input, output);
        if c.input.as_os_str().is_empty() || c.output.as_os_str().is_empty() {
            return Err(CliError::Config("paths must be nonempty".into()));
        }
        c.trace = pick(args.trace, &mut file, "trace")?;
        c.reference = pick(args.reference, &mut file, "reference")?;
        set(&mut c.mode, pick(args.mode, &mut file, "mode")?);

        let f = &mut c.filter;
        set(&mut f.tau, pick(args.tau, &mut file, "tau")?);
        set(&mut f.sigma, pick(args.sigma, &mut file, "sigma")?);
        set(&mut f.alpha, pick(args.alpha, &mut file, "alpha")?);
        set(&mut f.dt, pick(args.dt, &mut file, "dt")?);
        set(&mut f.t_end, pick(args.t_end, &mut file, "t-end")?);
        let s = pick(args.threshold_s, &mut file, "threshold-s")?.unwrap_or(f.response.s);
        let omega = pick(args.omega, &mut file, "omega")?.unwrap_or(f.response.omega);
        f.response = ResponseParams::thresholded(s, omega);

        set(&mut c.noise.std, pick(args.noise_std, &mut file, "noise-std")?);
        set(&mut c.noise.seed, pick(args.seed, &mut file, "seed")?);
        set(&mut c.window, pick(args.window, &mut file, "window")?);
        c.lambda = pick(args.lambda, &mut file, "lambda")?;

        if let Some(key) = file.0.keys().min() {
            return Err(CliError::Config(format!("unknown config key {key:?}")));
        }
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |e: aniso_core::Error| CliError::Config(e.to_string());
        match self.mode {
            Mode::Relax => self.filter.validate().map_err(bad)?,
            // τ and α do not enter the baselines
            Mode::Catte | Mode::PeronaMalik => FilterParams {
                tau: 1.0,
                alpha: 1.0,
                ..self.filter.clone()
            }
            .validate()
            .map_err(bad)?,
        }
        if !(self.noise.std >= 0.0 && self.noise.std.is_finite()) {
            return Err(CliError::Config(format!(
                "noise-std must be >= 0, got {}",
                self.noise.std
            )));
        }
        if self.window < 3 || self.window.is_multiple_of(2) {
            return Err(CliError::Config(format!(
                "window must be odd and >= 3, got {}",
                self.window
            )));
        }
        if let Some(l) = self.lambda {
            if !(l > 0.0 && l.is_finite()) {
                return Err(CliError::Config(format!("lambda must be > 0, got {l}")));
            }
        }
        Ok(())
    }
}

struct FileValues(HashMap<String, String>);

/// Flag value if given, else the file entry; file entries are consumed so
/// leftovers can be reported as unknown keys.
fn pick<T>(flag: Option<T>, file: &mut FileValues, key: &str) -> Result<Option<T>, CliError>
where
    T: FromStr,
    T::Err: fmt::Display,
{
    let from_file = file.0.remove(key);
    if flag.is_some() {
        return Ok(flag);
    }
    from_file
        .map(|v| {
            v.parse()
                .map_err(|e| CliError::Config(format!("config key {key}: {e}")))
        })
        .transpose()
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

pub fn parse_config_file(path: &Path) -> Result<HashMap<String, String>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Io {
        stage: "read config",
        path: path.to_path_buf(),
        source: e,
    })?;
    parse_config(&text)
}

/// `key = value` lines; blank lines and lines starting with `#` are ignored.
pub fn parse_config(text: &str) -> Result<HashMap<String, String>, CliError> {
    let mut out = HashMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("config line {}: expected key = value", n + 1)))?;
        let key = key.trim().to_string();
        if out.insert(key.clone(), value.trim().to_string()).is_some() {
            return Err(CliError::Config(format!("config line {}: duplicate key {key:?}", n + 1)));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(extra: &[&str]) -> Args {
        let mut argv = vec!["anisodenoise"];
        argv.extend_from_slice(extra);
        Args::try_parse_from(argv).unwrap()
    }

    #[test]
    fn parses_key_values() {
        let m = parse_config("# comment\n\ntau = 0.3\n  mode=catte  \n").unwrap();
        assert_eq!(m["tau"], "0.3");
        assert_eq!(m["mode"], "catte");
        assert!(parse_config("tau 0.3").is_err());
        assert!(parse_config("tau = 1\ntau = 2").is_err());
    }

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        fs::write(&path, "input = a.ppm\noutput = b.ppm\ntau = 0.3\nsigma = 2\nseed = 7\n").unwrap();
        let c = RunConfig::from_args(args(&["--config", path.to_str().unwrap(), "--tau", "0.9"])).unwrap();
        assert_eq!(c.filter.tau, 0.9);
        assert_eq!(c.filter.sigma, 2.0);
        assert_eq!(c.noise.seed, 7);
        assert_eq!(c.input, PathBuf::from("a.ppm"));
    }

    #[test]
    fn rejects_invalid_values() {
        for bad in [
            &["--input", "a", "--output", "b", "--tau", "0"][..],
            &["--input", "a", "--output", "b", "--window", "4"],
            &["--input", "a", "--output", "b", "--noise-std=-1"],
            &["--output", "b"],
        ] {
            assert!(matches!(RunConfig::from_args(args(bad)), Err(CliError::Config(_))), "{bad:?}");
        }
        assert!(Args::try_parse_from(["x", "--mode", "fast"]).is_err());
    }

    #[test]
    fn unknown_file_keys_are_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        fs::write(&path, "input = a\noutput = b\ntua = 1\n").unwrap();
        let err = RunConfig::from_args(args(&["--config", path.to_str().unwrap()])).unwrap_err();
        assert!(err.to_string().contains("tua"));
    }

    #[test]
    fn baseline_modes_ignore_tau() {
        let c = RunConfig::from_args(args(&["--input", "a", "--output", "b", "--mode", "pm", "--tau", "0"]));
        assert_eq!(c.unwrap().mode, Mode::PeronaMalik);
    }
}
