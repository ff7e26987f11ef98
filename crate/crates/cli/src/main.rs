use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use log::error;
use paircon_cli::{execute, recipes, resolve, CliError, Source};

/// Photon-pair condensate simulator.
#[derive(Parser, Debug)]
#[command(name = "paircon", version)]
struct Args {
    /// Configuration file (TOML, or a manifest.json from an earlier run).
    #[arg(long, conflicts_with = "recipe")]
    config: Option<PathBuf>,
    /// Built-in recipe to start from.
    #[arg(long)]
    recipe: Option<String>,
    /// Override, `key=value`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Random seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Cap on worker threads; results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
    /// Print the built-in recipes and exit.
    #[arg(long)]
    list_recipes: bool,
    /// Positional `key=value` overrides, applied after `--set`.
    #[arg(value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

fn run(args: Args) -> Result<(), CliError> {
    if args.list_recipes {
        for r in recipes::RECIPES {
            println!("{:<28} {}", r.name, r.about);
        }
        return Ok(());
    }
    let mut overrides = args.set.clone();
    overrides.extend(args.overrides.iter().cloned());
    if let Some(s) = args.seed {
        overrides.push(format!("seed={s}"));
    }
    if let Some(o) = &args.out {
        overrides.push(format!("output_dir={}", o.display()));
    }
    let source = match (&args.config, &args.recipe) {
        (Some(p), _) => Source::File(p),
        (None, Some(r)) => Source::Recipe(r),
        (None, None) => Source::Empty,
    };
    let cfg = resolve(source, &overrides)?;
    if let Some(n) = args.threads {
        if n == 0 {
            return Err(CliError::Validation("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    let art = execute(&cfg)?;
    println!("{}", serde_json::to_string_pretty(&serde_json::Value::Object(art.summary)).unwrap_or_default());
    println!("wrote {}", cfg.output_dir.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
