//! Command line for the pricing arena: benchmark solvers, ad-hoc
//! simulations, scenario experiments, profit surfaces, and report
//! generation over finished experiment directories.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use bertrand_arena::config::ExperimentConfig;
use bertrand_arena::equilibrium::{equilibrium_report, SolverOptions};
use bertrand_arena::harness::io::fmt_sig;
use bertrand_arena::harness::{execute, execute_custom, generate_report, write_experiment};
use bertrand_arena::market::MarketSpec;

#[derive(Parser)]
#[command(name = "bertrand-arena", version, about = "Two-firm repeated price competition between learning agents")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print a market's competitive and monopoly benchmarks as JSON.
    Equilibria(MarketArgs),
    /// Run the configured pairing as a single ad-hoc cell.
    Simulate(RunArgs),
    /// Run a config's full scenario protocol.
    Experiment(RunArgs),
    /// Emit firm 0's profit over a price-pair grid as CSV.
    Surface {
        #[command(flatten)]
        market: MarketArgs,
        /// Samples per price axis.
        #[arg(long, default_value_t = 100)]
        resolution: usize,
        /// Write here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compute summary tables for a finished experiment directory.
    Report {
        /// Directory holding manifest.json and per-run artifacts.
        #[arg(long)]
        dir: PathBuf,
    },
}

#[derive(Args)]
struct MarketArgs {
    /// Demand model: standard, edgeworth, or logit.
    #[arg(long)]
    model: String,
    /// Marginal cost.
    #[arg(long, default_value_t = 0.0)]
    c: f64,
    /// Edgeworth capacity share.
    #[arg(long, default_value_t = 0.6)]
    k: f64,
    /// Logit quality index.
    #[arg(long, default_value_t = 2.0)]
    g: f64,
    /// Logit differentiation.
    #[arg(long, default_value_t = 0.25)]
    mu: f64,
}

impl MarketArgs {
    fn build(&self) -> Result<MarketSpec> {
        let spec = match self.model.as_str() {
            "standard" => MarketSpec::standard(self.c),
            "edgeworth" => MarketSpec::edgeworth(self.c, self.k),
            "logit" => MarketSpec::logit(self.c, self.g, self.mu),
            other => bail!("unknown model {other:?}; expected standard, edgeworth, or logit"),
        };
        Ok(spec?)
    }
}

#[derive(Args)]
struct RunArgs {
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory. Defaults to $BERTRAND_ARENA_OUT/<scenario>, or
    /// ./out/<scenario>.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Replace the config's base seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Runs executed in parallel; outputs do not depend on this.
    #[arg(long, default_value_t = 1)]
    n_workers: usize,
    /// Config override as a dotted TOML path, e.g. `n_runs=2` or
    /// `market.mu=0.5`. Repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Suppress per-epoch progress lines.
    #[arg(long)]
    quiet: bool,
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Equilibria(market) => cmd_equilibria(&market),
        Command::Simulate(args) => cmd_run(&args, true),
        Command::Experiment(args) => cmd_run(&args, false),
        Command::Surface { market, resolution, out } => cmd_surface(&market, resolution, out.as_deref()),
        Command::Report { dir } => {
            generate_report(&dir)?;
            println!("report written under {}", dir.display());
            Ok(())
        }
    }
}

fn cmd_equilibria(market: &MarketArgs) -> Result<()> {
    let spec = market.build()?;
    let eq = equilibrium_report(&spec, &SolverOptions::default())?;
    #[derive(Serialize)]
    struct Benchmarks {
        p_nash: f64,
        p_monopoly: f64,
        pi_nash: f64,
        pi_monopoly: f64,
    }
    let out = Benchmarks {
        p_nash: eq.p_nash,
        p_monopoly: eq.p_monopoly,
        pi_nash: eq.pi_nash,
        pi_monopoly: eq.pi_monopoly,
    };
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(())
}

fn cmd_surface(market: &MarketArgs, resolution: usize, out: Option<&Path>) -> Result<()> {
    let spec = market.build()?;
    let points = spec.profit_surface(resolution)?;
    let mut w: Box<dyn Write> = match out {
        Some(path) => {
            if let Some(parent) = path.parent() {
                fs::create_dir_all(parent)?;
            }
            Box::new(BufWriter::new(fs::File::create(path)?))
        }
        None => Box::new(BufWriter::new(std::io::stdout())),
    };
    writeln!(w, "p0,p1,profit0")?;
    for pt in points {
        writeln!(w, "{},{},{}", fmt_sig(pt.p0), fmt_sig(pt.p1), fmt_sig(pt.profit0))?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_run(args: &RunArgs, custom: bool) -> Result<()> {
    let cfg = load_config(args)?;
    let result = if custom {
        execute_custom(&cfg, args.n_workers, args.quiet)?
    } else {
        execute(&cfg, args.n_workers, args.quiet)?
    };
    let dir = out_dir(args, &result.scenario_label);
    write_experiment(&dir, &cfg, &result)?;
    if result.failures.is_empty() {
        generate_report(&dir)?;
        println!(
            "{} runs complete; artifacts under {}",
            result.outputs.len(),
            dir.display()
        );
        Ok(())
    } else {
        for f in &result.failures {
            eprintln!("run failed: group={} seed={}: {}", f.group, f.seed, f.message);
        }
        bail!(
            "{} of {} runs failed; partial artifacts under {}",
            result.failures.len(),
            result.failures.len() + result.outputs.len(),
            dir.display()
        );
    }
}

fn load_config(args: &RunArgs) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(&args.config)
        .with_context(|| format!("reading {}", args.config.display()))?;
    let mut doc: toml::Value =
        text.parse().with_context(|| format!("parsing {}", args.config.display()))?;
    for ov in &args.overrides {
        apply_override(&mut doc, ov).with_context(|| format!("applying --override {ov}"))?;
    }
    let mut cfg: ExperimentConfig =
        doc.try_into().context("config does not match the experiment schema")?;
    if let Some(seed) = args.seed {
        cfg.base_seed = seed;
    }
    // Roster rules are scenario business: experiment enforces them, simulate
    // accepts any pairing.
    cfg.validate_base()?;
    Ok(cfg)
}

/// Sets a single value in the parsed document. The value side is parsed as
/// TOML, so numbers, booleans, and quoted strings all work; bare words are
/// taken as strings.
fn apply_override(doc: &mut toml::Value, spec: &str) -> Result<()> {
    let (path, raw) = spec.split_once('=').context("expected KEY=VALUE")?;
    let value = parse_toml_value(raw)?;
    let mut node = doc;
    let keys: Vec<&str> = path.split('.').collect();
    let (last, parents) = keys.split_last().context("empty key")?;
    for key in parents {
        let table = node
            .as_table_mut()
            .with_context(|| format!("{key} does not address a table"))?;
        node = table
            .entry(key.to_string())
            .or_insert_with(|| toml::Value::Table(Default::default()));
    }
    node.as_table_mut()
        .with_context(|| format!("{last} does not address a table"))?
        .insert(last.to_string(), value);
    Ok(())
}

fn parse_toml_value(raw: &str) -> Result<toml::Value> {
    let typed = format!("v = {raw}").parse::<toml::Table>();
    let parsed = match typed {
        Ok(t) => t,
        Err(_) => format!("v = {raw:?}").parse::<toml::Table>().context("unparseable value")?,
    };
    Ok(parsed["v"].clone())
}

fn out_dir(args: &RunArgs, label: &str) -> PathBuf {
    match &args.out {
        Some(dir) => dir.clone(),
        None => match std::env::var_os("BERTRAND_ARENA_OUT") {
            Some(root) => PathBuf::from(root).join(label),
            None => PathBuf::from("out").join(label),
        },
    }
}
