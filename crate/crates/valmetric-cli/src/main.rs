use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgGroup, Parser, Subcommand};
use valmetric::Error;
use valmetric_cli::{evaluate_cmd, exit_code, export_graph, parse_guides, recommend_cmd, server, summary, Source};

#[derive(Parser)]
#[command(name = "valmetric", version, about = "Validation metrics and problem-aware metric recommendation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Recommend a metric pool from a fingerprint, a saved transcript, or an interactive questionnaire.
    #[command(group(ArgGroup::new("source").required(true).args(["fingerprint", "interactive", "answers_from"])))]
    Recommend {
        #[arg(long)]
        fingerprint: Option<PathBuf>,
        #[arg(long)]
        interactive: bool,
        /// Replay a transcript of answers and guide choices.
        #[arg(long)]
        answers_from: Option<PathBuf>,
        /// Resolve a decision guide, e.g. DG6.1=DSC. Repeatable.
        #[arg(long = "guide", value_name = "ID=OPTION")]
        guides: Vec<String>,
        /// Write the pool here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Save the session transcript for later --answers-from replay.
        #[arg(long)]
        save_transcript: Option<PathBuf>,
    },
    /// Compute every metric of a pool over a dataset and write report files.
    Evaluate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        pool: PathBuf,
        #[arg(long)]
        agg: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
    },
    /// Export the decision graph as JSON.
    ExportGraph {
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn write_out(path: Option<&PathBuf>, text: &str) -> Result<(), Error> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| Error::Computation(format!("{}: {e}", p.display()))),
        None => {
            let mut o = io::stdout().lock();
            o.write_all(text.as_bytes()).and_then(|_| o.write_all(b"\n")).map_err(|e| Error::Computation(e.to_string()))
        }
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Recommend { fingerprint, interactive, answers_from, guides, out, save_transcript } => {
            let source = match (fingerprint, answers_from) {
                (Some(f), _) => Source::Fingerprint(f),
                (None, Some(t)) => Source::Transcript(t),
                _ if interactive => Source::Interactive,
                _ => unreachable!("clap enforces one source"),
            };
            let guides = parse_guides(&guides)?;
            let outcome = recommend_cmd(source, &guides, &mut io::stdin().lock(), &mut io::stderr())?;
            if let Some(p) = save_transcript {
                let t = serde_json::to_string_pretty(outcome.session.transcript()).expect("transcript serializes");
                write_out(Some(&p), &t)?;
            }
            eprint!("{}", summary(&outcome.pool));
            write_out(out.as_ref(), &outcome.pool.to_json())
        }
        Command::Evaluate { data, pool, agg, out } => {
            let report = evaluate_cmd(&data, &pool, agg.as_deref(), &out)?;
            println!("{}", report.results_csv().trim_end());
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            eprintln!("report written to {}", out.display());
            Ok(())
        }
        Command::Serve { port } => {
            let rt = tokio::runtime::Runtime::new().map_err(|e| Error::Computation(e.to_string()))?;
            rt.block_on(server::serve(port)).map_err(|e| Error::Computation(format!("server: {e}")))
        }
        Command::ExportGraph { out } => write_out(out.as_ref(), &export_graph()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
