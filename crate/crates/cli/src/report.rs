use std::io::{self, Write};
use std::path::PathBuf;

use anyhow::Result;
use clap::Args;
use mlembed::{coarsen, density, CoarseningConfig, Heuristics};

use crate::{input, parse_heuristics, CoarsenArgs, GraphFormat};

#[derive(Args, Debug)]
pub struct ReportArgs {
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = GraphFormat::Auto)]
    pub format: GraphFormat,
    #[arg(long)]
    pub directed: bool,
    /// Comma separated settings; one report block each.
    #[arg(long, value_delimiter = ',', value_parser = parse_heuristics, default_value = "ordering+hub2")]
    pub heuristics: Vec<Heuristics>,
    #[command(flatten)]
    pub coarsen: CoarsenArgs,
    #[arg(long)]
    pub threads: Option<usize>,
    /// Write each level's vertex mapping here as `map_<i>.u32`.
    #[arg(long)]
    pub dump_dir: Option<PathBuf>,
}

pub fn run(a: &ReportArgs) -> Result<()> {
    let loaded = input::load_graph(&a.input, a.format, a.directed)?;
    let stdout = io::stdout();
    let mut out = stdout.lock();
    for &h in &a.heuristics {
        let mut cfg = CoarseningConfig {
            heuristics: h,
            thread_count: a.threads.unwrap_or_else(crate::default_threads),
            max_levels: a.coarsen.max_levels,
            ..CoarseningConfig::default()
        };
        if let Some(t) = a.coarsen.coarsen_threshold {
            cfg.threshold = t;
        }
        if let Some(s) = a.coarsen.shrink_limit {
            cfg.shrink_limit = s;
        }
        let result = coarsen(&loaded.graph, &cfg)?;
        writeln!(out, "# heuristics {h}")?;
        writeln!(out, "# level\ttime_s\tvertices\tdensity")?;
        for (i, g) in result.levels.iter().enumerate() {
            let d = if g.vertex_count() == 0 { 0.0 } else { density(g)? };
            writeln!(
                out,
                "{i}\t{:.6}\t{}\t{d:.4}",
                result.level_times[i].as_secs_f64(),
                g.vertex_count()
            )?;
        }
        if let Some(dir) = &a.dump_dir {
            result.dump(io::sink(), Some(&dir.join(h.to_string())))?;
        }
    }
    Ok(())
}
