use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use kbreason_cli::experiments::{render_table, render_text};
use kbreason_cli::{list_presets, load_config, presets_dir, resolve_config, run_experiment, write_artifacts, CliError};

#[derive(Parser)]
#[command(name = "kbreason", version, about = "Run knowledge-graph reasoning experiments from config files")]
struct Cli {
    /// Directory holding the bundled `*.cfg` presets.
    #[arg(long, global = true, value_name = "DIR")]
    presets_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Table,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment from a config file or preset name.
    Run {
        config: String,
        /// Root directory for run outputs.
        #[arg(long, default_value = "runs")]
        out: PathBuf,
        /// Worker threads for prior samples (default: all cores).
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
    /// Check a config and report every violation.
    Validate { config: String },
    /// List bundled presets (`--format table` prints one name per line).
    Presets {
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let dir = presets_dir(cli.presets_dir.as_deref());
    match cli.command {
        Command::Run {
            config,
            out,
            jobs,
            format,
        } => {
            if let Some(n) = jobs {
                rayon::ThreadPoolBuilder::new()
                    .num_threads(n.max(1))
                    .build_global()
                    .map_err(|e| CliError::Io(format!("thread pool: {e}")))?;
            }
            let path = resolve_config(&config, &dir)?;
            let config = load_config(&path)?.map_err(CliError::Validation)?;
            let output = run_experiment(&config)?;
            let written = write_artifacts(&output, &out)?;
            match format {
                Format::Text => print!("{}", render_text(&output)),
                Format::Table => print!("{}", render_table(&output)),
            }
            eprintln!("wrote {}", written.display());
            Ok(())
        }
        Command::Validate { config } => {
            let path = resolve_config(&config, &dir)?;
            load_config(&path)?.map_err(CliError::Validation)?;
            println!("{}: ok", path.display());
            Ok(())
        }
        Command::Presets { format } => {
            for p in list_presets(&dir)? {
                match format {
                    Format::Text => println!("{:<24} {}", p.name, p.description),
                    Format::Table => println!("{}", p.name),
                }
            }
            Ok(())
        }
    }
}
