//! `freetower`: batch front end for tower constructions.
//!
//! Exit codes: 0 ok, 2 parse error, 3 validity failure, 4 undecided
//! validity check (accepted with `--assume-valid`).

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{read_input, run, CliError, Flags};

#[derive(Parser)]
#[command(name = "freetower", version, about = "Towers over free groups")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Level to present; for `complete`, the injectivity radius.
    #[arg(long, global = true)]
    level: Option<usize>,
    /// Test-sequence index.
    #[arg(long, global = true)]
    n: Option<u64>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Oracle budget (number of sequence points).
    #[arg(long, global = true)]
    budget: Option<u64>,
    /// Comma-separated exponents for `extend`.
    #[arg(long, global = true, allow_hyphen_values = true)]
    p: Option<String>,
    /// JSON list of closure embeddings.
    #[arg(long, global = true)]
    embeddings: Option<PathBuf>,
    /// Record undecided validity checks as warnings instead of failing.
    #[arg(long, global = true)]
    assume_valid: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a tower spec or GAD and print a summary.
    Build { spec: PathBuf },
    /// Print the canonical presentation.
    Present { spec: PathBuf },
    /// Build the twin tower.
    Twin { spec: PathBuf },
    /// Close abelian flats.
    Closure { spec: PathBuf },
    /// Symmetric closure of the twin tower.
    Symmetrize { spec: PathBuf },
    /// Completion of a GAD with its embedding.
    Complete { spec: PathBuf },
    /// Emit the test-sequence point at index `--n`.
    Testseq { spec: PathBuf },
    /// Decide whether `z ↦ γ^p` extends over the closure.
    Extend { spec: PathBuf },
    /// Limit-oracle verdict on a word.
    Oracle {
        spec: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        word: String,
    },
    /// Run the fixture suite (`$BSW_FIXTURES` or ./fixtures).
    VerifyFixtures,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut flags = Flags {
        level: cli.level,
        n: cli.n,
        seed: cli.seed,
        budget: cli.budget,
        p: cli.p,
        word: None,
        embeddings: cli.embeddings,
        assume_valid: cli.assume_valid,
    };
    let result = match cli.command {
        Command::VerifyFixtures => {
            let dir = std::env::var_os("BSW_FIXTURES").map(PathBuf::from).unwrap_or_else(|| PathBuf::from("fixtures"));
            return match commands::cmd_verify_fixtures(&dir) {
                Ok((report, all)) => {
                    print!("{report}");
                    if all {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::from(3)
                    }
                }
                Err(e) => fail(e),
            };
        }
        Command::Oracle { spec, word } => {
            flags.word = Some(word);
            dispatch("oracle", &spec, &flags)
        }
        Command::Build { spec } => dispatch("build", &spec, &flags),
        Command::Present { spec } => dispatch("present", &spec, &flags),
        Command::Twin { spec } => dispatch("twin", &spec, &flags),
        Command::Closure { spec } => dispatch("closure", &spec, &flags),
        Command::Symmetrize { spec } => dispatch("symmetrize", &spec, &flags),
        Command::Complete { spec } => dispatch("complete", &spec, &flags),
        Command::Testseq { spec } => dispatch("testseq", &spec, &flags),
        Command::Extend { spec } => dispatch("extend", &spec, &flags),
    };
    match result {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(e) => fail(e),
    }
}

fn fail(e: CliError) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(e.exit_code() as u8)
}

fn dispatch(command: &str, spec: &PathBuf, flags: &Flags) -> Result<String, CliError> {
    run(command, &read_input(spec)?, flags)
}
