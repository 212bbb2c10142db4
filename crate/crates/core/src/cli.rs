//! Command-line front end. `run` returns the process exit code:
//! 0 success, 1 usage error, 2 invalid input or plan, 3 internal invariant
//! failure.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::{Error, Result};
use crate::format::{evaluate, PlanDoc};
use crate::graph::{load_validated, Graph};
use crate::graphgen::{self, Arch, Optimizer, SizeDist, TrainingSizes, MB};
use crate::planner::{compare_baselines, parse_alpha, plan, Baseline, ComparisonRow, PlannerConfig};
use crate::viz::render_svg;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_INVARIANT: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "memplan", version, about = "Peak-memory-minimizing ordering and static layout of tensor graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Order and lay out a graph.
    Plan {
        #[arg(long)]
        graph: PathBuf,
        /// Plan document destination; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the full planner statistics here.
        #[arg(long)]
        report: Option<PathBuf>,
        #[command(flatten)]
        opts: PlanOpts,
    },
    /// Recompute a plan's statistics from its graph and check it.
    Eval {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        plan: PathBuf,
    },
    /// Generate a graph document.
    Gen {
        #[arg(long, value_enum)]
        kind: GenKind,
        #[arg(long, value_enum, default_value = "mlp")]
        arch: ArchArg,
        #[arg(long, default_value_t = 2)]
        blocks: usize,
        #[arg(long, value_enum, default_value = "adam")]
        optimizer: OptimizerArg,
        /// Op count for chain and random graphs.
        #[arg(long, default_value_t = 10)]
        ops: usize,
        /// Edge probability for random and segmented graphs.
        #[arg(long, default_value_t = 0.3)]
        density: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare the plan with baseline orders and layouts.
    Compare {
        #[arg(long)]
        graph: PathBuf,
        /// Comma-separated baselines; all when absent.
        #[arg(long, value_delimiter = ',')]
        baselines: Option<Vec<String>>,
        /// Emit JSON instead of a table.
        #[arg(long)]
        json: bool,
        #[command(flatten)]
        opts: PlanOpts,
    },
    /// Draw a plan's layout as SVG.
    Viz {
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
struct PlanOpts {
    #[arg(long, default_value_t = 20)]
    node_limit: usize,
    #[arg(long, default_value_t = 24)]
    layout_limit: usize,
    #[arg(long, default_value_t = 2.0)]
    delay_radius: f64,
    /// Weight-update footprint per gradient byte, as name=value pairs.
    #[arg(long, default_value = "adam=3,sgd=1")]
    alpha: String,
    /// Optimizer of every weight-update branch; inferred when absent.
    #[arg(long)]
    optimizer: Option<String>,
    #[arg(long, default_value_t = 1)]
    ops_per_step: usize,
    /// Seconds allowed for each exact ordering.
    #[arg(long, default_value_t = 60.0)]
    time_limit_order: f64,
    /// Seconds allowed for each exact layout.
    #[arg(long, default_value_t = 60.0)]
    time_limit_layout: f64,
    /// Worker threads; 0 uses one per core.
    #[arg(long, default_value_t = 0)]
    workers: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl PlanOpts {
    fn config(&self) -> Result<PlannerConfig> {
        let budget = |s: f64| {
            Duration::try_from_secs_f64(s)
                .ok()
                .filter(|d| !d.is_zero())
                .ok_or_else(|| Error::Config(format!("time limit {s} is not a positive number of seconds")))
        };
        let cfg = PlannerConfig {
            node_limit: self.node_limit,
            layout_limit: self.layout_limit,
            delay_radius: self.delay_radius,
            alpha: parse_alpha(&self.alpha)?,
            optimizer: self.optimizer.as_ref().map(|o| o.to_ascii_lowercase()),
            ops_per_step: self.ops_per_step,
            order_budget: budget(self.time_limit_order)?,
            layout_budget: budget(self.time_limit_layout)?,
            seed: self.seed,
            workers: self.workers,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum GenKind {
    Diamond,
    Chain,
    Random,
    Segmented,
    Training,
    GreedyTrap,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ArchArg {
    Mlp,
    Residual,
    TransformerBlock,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum OptimizerArg {
    Sgd,
    Adam,
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { stderr.write_all(text.as_bytes()) } else { stdout.write_all(text.as_bytes()) };
            return code;
        }
    };
    match execute(cli.command, stdout, stderr) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => EXIT_USAGE,
        Error::Contract(_) | Error::Assembly(_) | Error::Invariant(_) => EXIT_INVARIANT,
        _ => EXIT_INPUT,
    }
}

fn read_graph(path: &Path) -> Result<Graph> {
    load_validated(&fs::read_to_string(path)?)
}

fn emit(out: Option<&Path>, text: &str, stdout: &mut dyn Write) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text)?,
        None => stdout.write_all(text.as_bytes())?,
    }
    Ok(())
}

fn execute(cmd: Command, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<i32> {
    match cmd {
        Command::Plan { graph, out, report, opts } => {
            let cfg = opts.config()?;
            let g = read_graph(&graph)?;
            let p = plan(&g, &cfg)?;
            let doc = PlanDoc::from_plan(&g, &p);
            emit(out.as_deref(), &(doc.to_json() + "\n"), stdout)?;
            if let Some(r) = report {
                fs::write(r, serde_json::to_string_pretty(&p.stats)? + "\n")?;
            }
            writeln!(
                stderr,
                "theoretical peak {} B, capacity {} B, fragmentation {:.2}%, {}/{} leaves optimal, {} delayed updates",
                p.stats.theoretical_peak,
                p.layout.capacity,
                p.stats.fragmentation_pct,
                p.stats.optimal_leaves,
                p.stats.total_leaves,
                p.stats.delayed_updates
            )?;
            Ok(EXIT_OK)
        }
        Command::Eval { graph, plan } => {
            let g = read_graph(&graph)?;
            let doc = PlanDoc::from_json(&fs::read_to_string(plan)?)?;
            let report = evaluate(&g, &doc)?;
            writeln!(stdout, "{}", serde_json::to_string_pretty(&report)?)?;
            if report.violations.is_empty() {
                Ok(EXIT_OK)
            } else {
                writeln!(stderr, "plan is invalid: {} violation(s)", report.violations.len())?;
                Ok(EXIT_INPUT)
            }
        }
        Command::Gen { kind, arch, blocks, optimizer, ops, density, seed, out } => {
            let optimizer = match optimizer {
                OptimizerArg::Sgd => Optimizer::Sgd,
                OptimizerArg::Adam => Optimizer::Adam,
            };
            let arch = match arch {
                ArchArg::Mlp => Arch::Mlp,
                ArchArg::Residual => Arch::Residual,
                ArchArg::TransformerBlock => Arch::TransformerBlock,
            };
            if !(0.0..=1.0).contains(&density) {
                return Err(Error::Config(format!("density {density} is outside [0, 1]")));
            }
            let g = match kind {
                GenKind::Diamond => graphgen::diamond(),
                GenKind::Chain => graphgen::chain(ops, MB),
                GenKind::Random => graphgen::gen_random_dag(ops, density, SizeDist::default(), seed),
                GenKind::Segmented => {
                    let per = ops.max(1).div_ceil(3);
                    graphgen::gen_segmented_dag(&[per, per, per], density, SizeDist::default(), seed)
                }
                GenKind::Training => gen_training(arch, blocks, optimizer, seed)?,
                GenKind::GreedyTrap => graphgen::gen_greedy_trap(seed)?,
            };
            emit(out.as_deref(), &(g.to_json() + "\n"), stdout)?;
            Ok(EXIT_OK)
        }
        Command::Compare { graph, baselines, json, opts } => {
            let cfg = opts.config()?;
            let baselines: Vec<Baseline> = match baselines {
                Some(names) => names.iter().map(|n| n.parse()).collect::<Result<_>>()?,
                None => Baseline::ALL.to_vec(),
            };
            let g = read_graph(&graph)?;
            let c = compare_baselines(&g, &cfg, &baselines)?;
            if json {
                writeln!(stdout, "{}", serde_json::to_string_pretty(&c)?)?;
            } else {
                write_table(&c.plan, &c.baselines, stdout)?;
            }
            Ok(EXIT_OK)
        }
        Command::Viz { plan, out } => {
            let doc = PlanDoc::from_json(&fs::read_to_string(plan)?)?;
            if doc.tensors.is_empty() && !doc.layout.is_empty() {
                return Err(Error::Contract("plan document has no tensor spans to draw".into()));
            }
            fs::write(out, render_svg(&doc))?;
            Ok(EXIT_OK)
        }
    }
}

fn gen_training(arch: Arch, blocks: usize, optimizer: Optimizer, seed: u64) -> Result<Graph> {
    if blocks == 0 {
        return Err(Error::Config("a training graph needs at least one block".into()));
    }
    graphgen::gen_training_graph(arch, blocks, TrainingSizes::default(), optimizer, seed)
}

fn write_table(ours: &ComparisonRow, rows: &[ComparisonRow], out: &mut dyn Write) -> Result<()> {
    writeln!(
        out,
        "{:<18} {:<18} {:>14} {:>14} {:>8} {:>11} {:>11}",
        "order", "layout", "peak_bytes", "capacity", "frag%", "peak_save%", "cap_save%"
    )?;
    for r in std::iter::once(ours).chain(rows) {
        writeln!(
            out,
            "{:<18} {:<18} {:>14} {:>14} {:>8.2} {:>11.2} {:>11.2}",
            r.order,
            r.layout,
            r.theoretical_peak,
            r.capacity,
            r.fragmentation_pct,
            r.peak_saving_pct,
            r.capacity_saving_pct
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn call(args: &[&str]) -> (i32, String, String) {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let code = run(std::iter::once("memplan").chain(args.iter().copied()), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn missing_subcommand_is_usage_error() {
        assert_eq!(call(&[]).0, EXIT_USAGE);
        assert_eq!(call(&["plan"]).0, EXIT_USAGE);
    }

    #[test]
    fn help_succeeds() {
        let (code, out, _) = call(&["--help"]);
        assert_eq!(code, EXIT_OK);
        assert!(out.contains("plan") && out.contains("viz"));
    }

    #[test]
    fn gen_diamond_to_stdout() {
        let (code, out, _) = call(&["gen", "--kind", "diamond"]);
        assert_eq!(code, EXIT_OK);
        assert_eq!(load_validated(&out).unwrap().num_ops(), 4);
    }

    #[test]
    fn missing_graph_file_is_input_error() {
        let (code, _, err) = call(&["plan", "--graph", "/nonexistent/graph.json"]);
        assert_eq!(code, EXIT_INPUT);
        assert!(err.contains("error"));
    }

    #[test]
    fn error_classes_map_to_codes() {
        assert_eq!(exit_code(&Error::Config(String::new())), EXIT_USAGE);
        assert_eq!(exit_code(&Error::Cycle), EXIT_INPUT);
        assert_eq!(exit_code(&Error::Invariant(String::new())), EXIT_INVARIANT);
    }
}
