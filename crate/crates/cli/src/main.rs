mod embed;
mod eval;
mod input;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mlembed::{Heuristics, Preset};

#[derive(Parser, Debug)]
#[command(name = "mlembed", version, about = "Multilevel graph embedding")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Embed a graph and write the matrix plus a run record.
    Embed(embed::EmbedArgs),
    /// Score an embedding on link prediction or node classification.
    Eval(eval::EvalArgs),
    /// Print per-level coarsening statistics.
    CoarsenReport(report::ReportArgs),
}

/// Flags shared by the commands that coarsen a graph.
#[derive(Args, Debug, Clone)]
pub struct CoarsenArgs {
    /// Stop coarsening once a level has at most this many vertices.
    #[arg(long)]
    pub coarsen_threshold: Option<usize>,
    /// Stop once a level keeps more than this fraction of its parent.
    #[arg(long)]
    pub shrink_limit: Option<f64>,
    /// Maximum number of levels, the input graph included.
    #[arg(long)]
    pub max_levels: Option<usize>,
}

/// Input format of a graph file.
#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum GraphFormat {
    /// Binary CSR cache if the file starts with its magic, edge list otherwise.
    Auto,
    EdgeList,
    Csr,
}

pub fn parse_preset(s: &str) -> Result<Preset, String> {
    s.parse().map_err(|e: mlembed::Error| e.to_string())
}

pub fn parse_heuristics(s: &str) -> Result<Heuristics, String> {
    s.parse().map_err(|e: mlembed::Error| e.to_string())
}

/// Accepts plain bytes or a `K`, `M`, `G` suffix (powers of 1024).
pub fn parse_bytes(s: &str) -> Result<u64, String> {
    let s = s.trim();
    let (digits, shift) = match s.char_indices().last() {
        Some((i, c)) if c.is_ascii_alphabetic() => {
            let shift = match c.to_ascii_uppercase() {
                'K' => 10,
                'M' => 20,
                'G' => 30,
                _ => return Err(format!("unknown size suffix in {s:?}")),
            };
            (&s[..i], shift)
        }
        _ => (s, 0),
    };
    let value: u64 = digits.parse().map_err(|_| format!("malformed size {s:?}"))?;
    value
        .checked_mul(1u64 << shift)
        .ok_or_else(|| format!("size {s:?} overflows"))
}

pub fn default_threads() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

pub fn sidecar(path: &std::path::Path, ext: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(ext);
    PathBuf::from(s)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Embed(args) => embed::run(&args),
        Command::Eval(args) => eval::run(&args),
        Command::CoarsenReport(args) => report::run(&args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
