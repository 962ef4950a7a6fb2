use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use mvlab::runner::{run_from_file, Suite, EXIT_CONFIG, EXIT_RUNTIME};

#[derive(Parser, Debug)]
#[command(name = "mvlab", version, about = "Run one verification suite and write CSV reports")]
struct Cli {
    /// validate | simulate | flow | log-harnack | harnack-power | shift-harnack | transport-selftest
    suite: Suite,
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `[run] out`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides `[scheme] seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; defaults to the number of cores.
    #[arg(long)]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(EXIT_CONFIG as u8);
        }
        pool = pool.num_threads(n);
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start thread pool: {e}");
            return ExitCode::from(EXIT_RUNTIME as u8);
        }
    };
    let outcome = pool.install(|| run_from_file(&cli.config, cli.suite, cli.out.as_deref(), cli.seed));
    if let Some(e) = &outcome.error {
        eprintln!("error: {e}");
    }
    if let Some(status) = outcome.manifest.get("status") {
        println!("{} {status}", cli.suite);
    }
    ExitCode::from(outcome.exit_code as u8)
}
