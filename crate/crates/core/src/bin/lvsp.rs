use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use lvsp::cli::{run, Command, RunConfig};

#[derive(Parser)]
#[command(
    name = "lvsp",
    version,
    about = "Semiring parsing with tensor-weighted grammars"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Check that every rule weight has the shape its nonterminals require
    Check(Args),
    /// Compute the value of the goal item
    Parse(Args),
    /// Inner and outer values, plus expected rule counts for probabilities
    InsideOutside(Args),
    /// Enumerate derivations and value each tree and its derivation string
    Oracle(Args),
}

#[derive(clap::Args)]
struct Args {
    #[arg(long)]
    grammar: PathBuf,
    /// boolean, counting, probability, viterbi, log or viterbi-derivation
    #[arg(long, default_value = "probability")]
    semiring: String,
    /// Whitespace-separated tokens
    #[arg(long)]
    sentence: Option<String>,
    /// File with one sentence per line
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long, default_value_t = 1e-9)]
    tolerance: f64,
    #[arg(long, default_value_t = 10_000)]
    max_generations: usize,
    #[arg(long)]
    json: bool,
    #[arg(long)]
    dump_chart: bool,
    /// Maximum number of derivations the oracle enumerates
    #[arg(long, default_value_t = 10_000)]
    cap: usize,
}

fn main() -> anyhow::Result<ExitCode> {
    let cli = Cli::parse();
    let (command, args) = match cli.command {
        Cmd::Check(a) => (Command::Check, a),
        Cmd::Parse(a) => (Command::Parse, a),
        Cmd::InsideOutside(a) => (Command::InsideOutside, a),
        Cmd::Oracle(a) => (Command::Oracle, a),
    };
    let config = RunConfig {
        command,
        grammar_path: args.grammar,
        semiring: args.semiring,
        sentence: args.sentence,
        input: args.input,
        tolerance: args.tolerance,
        max_generations: args.max_generations,
        json: args.json,
        dump_chart: args.dump_chart,
        cap: args.cap,
    };
    let out = run(&config);
    std::io::stdout().write_all(out.stdout.as_bytes())?;
    std::io::stderr().write_all(out.stderr.as_bytes())?;
    Ok(ExitCode::from(out.exit_code as u8))
}
