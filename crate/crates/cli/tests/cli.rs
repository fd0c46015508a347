use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use aniso_cli::pnm::save_image;
use aniso_core::{GridSpec, ImageField};

fn bin(args: &[&std::ffi::OsStr]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_anisodenoise"))
        .args(args)
        .output()
        .unwrap()
}

fn run(args: &[&str], paths: &[(&str, &Path)]) -> Output {
    let mut argv: Vec<std::ffi::OsString> = args.iter().map(Into::into).collect();
    for (flag, p) in paths {
        argv.push(flag.into());
        argv.push(p.as_os_str().to_owned());
    }
    let refs: Vec<&std::ffi::OsStr> = argv.iter().map(|s| s.as_os_str()).collect();
    bin(&refs)
}

/// Bright disk on a dark background, one or three channels.
fn write_disk(path: &Path, n: usize, channels: usize) -> ImageField {
    let g = GridSpec::new(&[n, n], channels).unwrap();
    let c = (n as f64 - 1.0) / 2.0;
    let r = n as f64 / 4.0;
    let img = ImageField::from_fn(&g, |x, ch| {
        let (dy, dx) = (x[0] as f64 - c, x[1] as f64 - c);
        let inside = dy * dy + dx * dx <= r * r;
        if inside {
            0.8 - 0.1 * ch as f64
        } else {
            0.2
        }
    });
    save_image(&img, path).unwrap();
    img
}

fn tmp(dir: &tempfile::TempDir, name: &str) -> PathBuf {
    dir.path().join(name)
}

#[test]
fn missing_input_exits_with_io_code() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[], &[("--input", &tmp(&dir, "nope.ppm")), ("--output", &tmp(&dir, "o.ppm"))]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(!tmp(&dir, "o.ppm").exists());
}

#[test]
fn malformed_image_exits_with_io_code() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(tmp(&dir, "bad.ppm"), b"P6\n4 4\n255\n\x01\x02").unwrap();
    let out = run(&[], &[("--input", &tmp(&dir, "bad.ppm")), ("--output", &tmp(&dir, "o.ppm"))]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn invalid_parameters_exit_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    write_disk(&tmp(&dir, "in.pgm"), 16, 1);
    let paths = [("--input", tmp(&dir, "in.pgm")), ("--output", tmp(&dir, "o.pgm"))];
    let paths: Vec<(&str, &Path)> = paths.iter().map(|(f, p)| (*f, p.as_path())).collect();
    for bad in [
        &["--mode", "relax", "--tau", "0"][..],
        &["--sigma=-1"],
        &["--dt", "0"],
        &["--window", "2"],
    ] {
        let out = run(bad, &paths);
        assert_eq!(out.status.code(), Some(2), "{bad:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
    fs::write(tmp(&dir, "run.conf"), "sigma = 1\nbogus = 3\n").unwrap();
    let out = run(&[], &[paths[0], paths[1], ("--config", &tmp(&dir, "run.conf"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn zero_time_without_noise_reproduces_input() {
    let dir = tempfile::tempdir().unwrap();
    for (name, channels) in [("in.pgm", 1), ("in.ppm", 3)] {
        write_disk(&tmp(&dir, name), 20, channels);
        let out_path = tmp(&dir, &format!("out_{name}"));
        let out = run(
            &["--noise-std", "0", "--t-end", "0"],
            &[("--input", &tmp(&dir, name)), ("--output", &out_path)],
        );
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        assert_eq!(fs::read(&out_path).unwrap(), fs::read(tmp(&dir, name)).unwrap());
    }
}

#[test]
fn denoises_a_disk_and_writes_a_trace() {
    let dir = tempfile::tempdir().unwrap();
    write_disk(&tmp(&dir, "clean.ppm"), 32, 3);
    let trace = tmp(&dir, "trace.csv");
    let out = run(
        &["--noise-std", "0.2", "--seed", "5", "--t-end", "1.5"],
        &[
            ("--input", &tmp(&dir, "clean.ppm")),
            ("--reference", &tmp(&dir, "clean.ppm")),
            ("--output", &tmp(&dir, "out.ppm")),
            ("--trace", &trace),
        ],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    let line = stdout.lines().find(|l| l.starts_with("psnr vs reference")).unwrap();
    let nums: Vec<f64> = line
        .split(|c: char| !(c.is_ascii_digit() || c == '.'))
        .filter_map(|t| t.parse().ok())
        .collect();
    let (filtered, noisy) = (nums[0], nums[1]);
    assert!(filtered > noisy + 1.0, "{line}");

    let csv = fs::read_to_string(trace).unwrap();
    // header, t = 0, then 6 steps of 0.25
    assert_eq!(csv.lines().count(), 8);
}

#[test]
fn baseline_modes_run() {
    let dir = tempfile::tempdir().unwrap();
    write_disk(&tmp(&dir, "in.pgm"), 16, 1);
    for mode in ["catte", "pm"] {
        let out = run(
            &["--mode", mode, "--t-end", "0.5"],
            &[("--input", &tmp(&dir, "in.pgm")), ("--output", &tmp(&dir, "o.pgm"))],
        );
        assert!(out.status.success(), "{mode}: {}", String::from_utf8_lossy(&out.stderr));
    }
}
