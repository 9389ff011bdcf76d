use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

/// Discounted and ergodic solves, Lyapunov certificates and refinement studies
/// driven by a TOML file.
#[derive(Parser)]
#[command(version)]
struct Args {
    /// Run configuration (TOML).
    config: PathBuf,
    /// Output directory; overrides `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for assembly and operator application.
    #[arg(long)]
    workers: Option<usize>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count)]
    verbose: u8,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let level = match args.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(n) = args.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    let code = nonlocal_hjb::harness::execute(&args.config, args.out.as_deref());
    ExitCode::from(code as u8)
}
