//! Video frame interpolation CLI.
//!
//! Verbs: `interpolate`, `train`, `sweep-tau`, `metrics`. Exit codes:
//! 0 success, 1 usage error, 2 data/format error.

mod args;
mod commands;
mod manifest;

use args::{Args, CliError};
use std::process::ExitCode;

const USAGE: &str = "\
usage: vfi <command> [--flag value ...]

commands:
  interpolate   synthesize a frame between two others
      --checkpoint <file>  trained model checkpoint (required)
      --frame0 <png>       first reference frame (required)
      --frame1 <png>       second reference frame (required)
      --out <png>          output frame path (required)
      --t <float>          target time in (0,1), default 0.5
      --tau <float>        sampling temperature, default from checkpoint (0.3)
      --seed <int>         latent sampling seed, default 0
      --flow01 <flo>       forward flow file (optional for synthetic pairs)
      --flow10 <flo>       backward flow file
  train         optimize a model from a config file
      --config <file>      key = value config (or set VFI_CONFIG)
      --resume <ckpt>      continue from a checkpoint
  sweep-tau     decode one pair across temperatures and seeds
      --checkpoint --frame0 --frame1 --out <dir> as above
      --taus <list>        comma-separated temperatures (required)
      --seeds <list>       comma-separated seeds, default 1,2,3,4
      --gt <png>           ground truth for the quality columns (optional)
      --t --flow01 --flow10 as above
  metrics       PSNR and SSIM between two images
      --a <png> --b <png>  images to compare (required)
      --out <file>         also write the values as a manifest (optional)
";

fn dispatch() -> Result<(), CliError> {
    let argv: Vec<String> = std::env::args().collect();
    let Some(command) = argv.get(1) else {
        return Err(CliError::Usage("no command given".into()));
    };
    let rest = &argv[2..];
    match command.as_str() {
        "interpolate" => commands::cmd_interpolate(&Args::parse(rest)?, &argv),
        "train" => commands::cmd_train(&Args::parse(rest)?, &argv),
        "sweep-tau" => commands::cmd_sweep_tau(&Args::parse(rest)?, &argv),
        "metrics" => commands::cmd_metrics(&Args::parse(rest)?, &argv),
        "--help" | "help" | "-h" => {
            print!("{USAGE}");
            Ok(())
        }
        other => Err(CliError::Usage(format!("unknown command `{other}`"))),
    }
}

fn main() -> ExitCode {
    match dispatch() {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            eprintln!();
            eprint!("{USAGE}");
            ExitCode::from(1)
        }
        Err(CliError::Data(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
