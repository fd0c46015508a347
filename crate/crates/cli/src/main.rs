use std::process::ExitCode;

use aniso_cli::{execute, Args, RunConfig};
use clap::Parser;

fn main() -> ExitCode {
    let args = Args::parse();
    let result = RunConfig::from_args(args).and_then(|cfg| execute(&cfg));
    match result {
        Ok(report) => {
            println!("steps: {}", report.steps);
            println!("psnr vs input: {:.3} dB", report.psnr_vs_input);
            if let (Some(noisy), Some(out)) = (report.psnr_noisy_vs_reference, report.psnr_vs_reference) {
                println!("psnr vs reference: {out:.3} dB (noisy: {noisy:.3} dB)");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
