use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use nfbeam_cli::{parse_config_with, run, CliError, Kind};

/// Near-field beamspace experiments.
#[derive(Parser)]
#[command(name = "nfb", version)]
struct Args {
    /// Experiment to run.
    #[arg(value_enum)]
    kind: Kind,
    /// JSON experiment config.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default: the config's `out`, else `nfb-out`).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("NFB_THREADS") else { return Ok(()) };
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|_| CliError::config(Some("NFB_THREADS"), format!("not a thread count: {raw:?}")))?;
    if n > 0 {
        // fails only if the pool was already built, which cannot happen here
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

fn main() -> ExitCode {
    let args = Args::parse();
    let result = threads()
        .and_then(|_| {
            std::fs::read_to_string(&args.config).map_err(|source| CliError::Io { path: args.config.clone(), source })
        })
        .and_then(|text| parse_config_with(&text, Some(args.kind), args.seed))
        .and_then(|cfg| {
            let out = args.out.clone().or_else(|| cfg.out.clone().map(PathBuf::from)).unwrap_or("nfb-out".into());
            run(&cfg, &out).map(|summary| (summary, out))
        });
    match result {
        Ok((summary, out)) => {
            let pass = summary["pass"].as_bool() == Some(true);
            println!(
                "{} {}: {} (artifacts in {})",
                if pass { "PASS" } else { "FAIL" },
                args.kind.name(),
                summary["metrics"],
                out.display()
            );
            if pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            }
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(1)
        }
    }
}
