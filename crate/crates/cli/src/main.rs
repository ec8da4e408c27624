use std::fs::{self, File};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use costshare::equilibrium::{is_nash, run_brd, worst_nash, BrdOrder};
use costshare::generators::{
    gen_freeloader, gen_quadratic, gen_random, gen_two_job_unit, gen_valley, RandomShape,
};
use costshare::harness::{
    poa_exact, reproduce, sweep, write_check_table, write_reports_csv, write_reports_json,
    HarnessConfig, PoaReport, StockFamilies, SweepFamily, SweepPoint,
};
use costshare::mechanism::{is_mechanism_nash, support_payments, worst_supportable};
use costshare::model::{read_assignment, read_instance, total_cost};
use costshare::optimal::{
    opt_bruteforce, opt_concave_search, opt_flow_convex, opt_unit_greedy, solve,
};
use costshare::search::DEFAULT_BUDGET;
use costshare::{CostFunction, Instance, MechProfile, OptResult};

#[derive(Parser)]
#[command(
    name = "costshare",
    version,
    about = "Cost-sharing scheduling games: equilibria, optima and price of anarchy"
)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Seed for random instances and shuffled dynamics.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Tolerance for every floating-point comparison.
    #[arg(long, global = true, default_value_t = 1e-9)]
    eps: f64,
    /// Largest search space (or branch-and-bound node count) to explore.
    #[arg(long, global = true, default_value_t = DEFAULT_BUDGET)]
    budget: u128,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Output file; for poa, sweep and reproduce, the output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Write 0 in runtime_ms so repeated runs are byte-identical.
    #[arg(long, global = true)]
    no_timing: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Write a generated instance as JSON.
    Gen {
        #[command(subcommand)]
        family: GenFamily,
    },
    /// Compute an optimal assignment.
    Opt {
        instance: PathBuf,
        #[arg(long, value_enum, default_value_t = Method::Auto)]
        method: Method,
    },
    /// Check an assignment, find the worst equilibrium, or run best-response dynamics.
    Ne {
        instance: PathBuf,
        /// Assignment to check instead of searching.
        #[arg(long, conflicts_with = "brd")]
        check: Option<PathBuf>,
        /// Run best-response dynamics from this assignment.
        #[arg(long)]
        brd: Option<PathBuf>,
        /// Shuffle the job order each pass (seeded by --seed).
        #[arg(long, requires = "brd")]
        shuffle: bool,
        #[arg(long, default_value_t = 1_000_000, requires = "brd")]
        max_steps: usize,
        /// Write the dynamics trace as CSV here.
        #[arg(long, requires = "brd")]
        trace: Option<PathBuf>,
    },
    /// Verify a mechanism profile, build payments for an assignment, or find the worst supportable outcome.
    Mech {
        instance: PathBuf,
        /// Profile (`{"slots":[..],"payments":[..]}`) to verify.
        #[arg(long, conflicts_with = "support")]
        check: Option<PathBuf>,
        /// Assignment to find sustaining payments for.
        #[arg(long)]
        support: Option<PathBuf>,
    },
    /// Price of anarchy of one instance, with witness files.
    Poa {
        instance: PathBuf,
        /// Also compute the ratio under the payment mechanism.
        #[arg(long)]
        mechanism: bool,
    },
    /// One report row per grid point.
    Sweep {
        #[arg(long, value_enum)]
        family: SweepKind,
        /// Valley heights or job counts, comma separated.
        #[arg(long, value_delimiter = ',', required = true)]
        sizes: Vec<usize>,
        /// Degrees, comma separated; `unit` for unit costs (random only).
        #[arg(long, value_delimiter = ',', default_value = "0.5")]
        degrees: Vec<String>,
        /// Horizon for random instances.
        #[arg(long, default_value_t = 6)]
        horizon: usize,
        /// Make random instances share this slot.
        #[arg(long)]
        common_slot: Option<usize>,
        #[arg(long)]
        mechanism: bool,
    },
    /// Run every reproduction check and print one line per criterion.
    Reproduce,
}

#[derive(Subcommand)]
enum GenFamily {
    Quadratic,
    TwoJobUnit,
    Valley {
        #[arg(long)]
        h: usize,
        #[arg(long)]
        degree: f64,
    },
    Freeloader {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        degree: f64,
    },
    Random {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        horizon: usize,
        /// Omit for unit costs.
        #[arg(long)]
        degree: Option<f64>,
        #[arg(long)]
        common_slot: Option<usize>,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Method {
    Auto,
    Brute,
    Unit,
    Flow,
    Concave,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SweepKind {
    Valley,
    Freeloader,
    Random,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

impl Global {
    fn harness(&self, mechanism: bool) -> HarnessConfig {
        HarnessConfig {
            eps: self.eps,
            budget: self.budget,
            seed: self.seed,
            mechanism,
            record_timing: !self.no_timing,
        }
    }

    /// Writes `text` to `--out` or stdout.
    fn emit(&self, text: &str) -> Result<()> {
        match &self.out {
            Some(path) => {
                fs::write(path, text).with_context(|| format!("writing {}", path.display()))
            }
            None => {
                let mut stdout = io::stdout().lock();
                stdout.write_all(text.as_bytes())?;
                if !text.ends_with('\n') {
                    stdout.write_all(b"\n")?;
                }
                Ok(())
            }
        }
    }
}

fn load_instance(path: &Path) -> Result<Instance> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    read_instance(file).with_context(|| format!("reading {}", path.display()))
}

fn load_assignment(path: &Path) -> Result<costshare::Assignment> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    read_assignment(file).with_context(|| format!("reading {}", path.display()))
}

fn run(cli: Cli) -> Result<bool> {
    let g = &cli.global;
    match cli.command {
        Command::Gen { family } => {
            let inst = match family {
                GenFamily::Quadratic => gen_quadratic()?.instance,
                GenFamily::TwoJobUnit => gen_two_job_unit()?.instance,
                GenFamily::Valley { h, degree } => gen_valley(h, degree)?.instance,
                GenFamily::Freeloader { n, degree } => gen_freeloader(n, degree)?.instance,
                GenFamily::Random {
                    n,
                    horizon,
                    degree,
                    common_slot,
                } => {
                    let cost = match degree {
                        Some(d) => CostFunction::monomial(d)?,
                        None => CostFunction::Unit,
                    };
                    let shape = common_slot.map_or(RandomShape::General, RandomShape::CommonSlot);
                    gen_random(n, horizon, g.seed, shape, cost)?
                }
            };
            g.emit(&inst.to_json())?;
            Ok(true)
        }
        Command::Opt { instance, method } => {
            let inst = load_instance(&instance)?;
            let opt: OptResult = match method {
                Method::Auto => solve(&inst, g.budget)?,
                Method::Brute => opt_bruteforce(&inst, g.budget)?,
                Method::Unit => opt_unit_greedy(&inst)?,
                Method::Flow => opt_flow_convex(&inst)?,
                Method::Concave => opt_concave_search(&inst, g.budget)?,
            };
            let text = match g.format {
                Format::Json => opt.to_json(),
                Format::Csv => format!(
                    "cost,method,exact,slots\n{},{},{},{}\n",
                    opt.cost,
                    opt.method.as_str(),
                    opt.exact,
                    opt.assignment
                        .slots
                        .iter()
                        .map(|s| s.to_string())
                        .collect::<Vec<_>>()
                        .join(" ")
                ),
            };
            g.emit(&text)?;
            Ok(opt.exact)
        }
        Command::Ne {
            instance,
            check,
            brd,
            shuffle,
            max_steps,
            trace,
        } => {
            let inst = load_instance(&instance)?;
            if let Some(path) = check {
                let a = load_assignment(&path)?;
                let verdict = is_nash(&inst, &a, g.eps)?;
                let doc = serde_json::json!({
                    "nash": verdict.holds(),
                    "cost": total_cost(&inst, &a)?,
                    "violations": verdict.violations,
                });
                g.emit(&serde_json::to_string_pretty(&doc)?)?;
                return Ok(verdict.holds());
            }
            if let Some(path) = brd {
                let start = load_assignment(&path)?;
                let order = if shuffle {
                    BrdOrder::Random(g.seed)
                } else {
                    BrdOrder::RoundRobin
                };
                let (end, steps) = run_brd(&inst, &start, order, max_steps, g.eps)?;
                if let Some(trace_path) = trace {
                    steps.write_csv(File::create(&trace_path)?)?;
                }
                let doc = serde_json::json!({
                    "slots": end.slots,
                    "cost": total_cost(&inst, &end)?,
                    "steps": steps.steps.len(),
                });
                g.emit(&serde_json::to_string_pretty(&doc)?)?;
                return Ok(true);
            }
            let (a, cost) = worst_nash(&inst, g.budget, g.eps)?;
            let doc = serde_json::json!({ "slots": a.slots, "cost": cost });
            g.emit(&serde_json::to_string_pretty(&doc)?)?;
            Ok(true)
        }
        Command::Mech {
            instance,
            check,
            support,
        } => {
            let inst = load_instance(&instance)?;
            if let Some(path) = check {
                let text = fs::read_to_string(&path)
                    .with_context(|| format!("reading {}", path.display()))?;
                let profile = MechProfile::from_json(&text)?;
                let verdict = is_mechanism_nash(&inst, &profile, g.eps)?;
                let doc = serde_json::json!({
                    "nash": verdict.holds(),
                    "cost": total_cost(&inst, &profile.assignment)?,
                    "violations": verdict.violations,
                });
                g.emit(&serde_json::to_string_pretty(&doc)?)?;
                return Ok(verdict.holds());
            }
            if let Some(path) = support {
                let a = load_assignment(&path)?;
                let cert = support_payments(&inst, &a, g.eps)?;
                g.emit(&serde_json::to_string_pretty(&cert.to_json())?)?;
                return Ok(cert.feasible);
            }
            let (profile, _) = worst_supportable(&inst, g.budget, g.eps)?;
            g.emit(&profile.to_json())?;
            Ok(true)
        }
        Command::Poa {
            instance,
            mechanism,
        } => {
            let inst = load_instance(&instance)?;
            let id = instance
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "instance".into());
            let mut outcome = poa_exact(&inst, &id, &g.harness(mechanism))?;
            if let Some(dir) = &g.out {
                outcome.write_witnesses(dir)?;
            }
            let exact = outcome.report.exact;
            write_reports(g, &[outcome.report])?;
            Ok(exact)
        }
        Command::Sweep {
            family,
            sizes,
            degrees,
            horizon,
            common_slot,
            mechanism,
        } => {
            let family = match family {
                SweepKind::Valley => SweepFamily::Valley,
                SweepKind::Freeloader => SweepFamily::Freeloader,
                SweepKind::Random => SweepFamily::Random {
                    horizon,
                    shape: common_slot.map_or(RandomShape::General, RandomShape::CommonSlot),
                },
            };
            let degrees = degrees
                .iter()
                .map(|d| match d.as_str() {
                    "unit" => Ok(None),
                    _ => d
                        .parse::<f64>()
                        .map(Some)
                        .with_context(|| format!("bad degree {d:?}")),
                })
                .collect::<Result<Vec<_>>>()?;
            let points: Vec<SweepPoint> = degrees
                .iter()
                .flat_map(|&degree| {
                    sizes.iter().map(move |&size| SweepPoint {
                        family,
                        size,
                        degree,
                    })
                })
                .collect();
            let rows = sweep(&points, &g.harness(mechanism), g.out.as_deref())?;
            let mut reports = Vec::new();
            let mut ok = true;
            for row in rows {
                match row.outcome {
                    Ok(out) => reports.push(out.report),
                    Err(e) => {
                        ok = false;
                        eprintln!("{}: {e}", row.id);
                    }
                }
            }
            write_reports(g, &reports)?;
            Ok(ok)
        }
        Command::Reproduce => {
            let results = reproduce(&g.harness(true), &StockFamilies, g.out.as_deref())?;
            for r in &results {
                println!("{r}");
            }
            if g.out.is_none() {
                write_check_table(&results, io::stdout().lock())?;
            }
            Ok(results.iter().all(|r| r.passed()))
        }
    }
}

/// Reports go to `<out>/reports.{csv,json}` when an output directory is
/// given, otherwise to stdout.
fn write_reports(g: &Global, reports: &[PoaReport]) -> Result<()> {
    let ext = match g.format {
        Format::Csv => "csv",
        Format::Json => "json",
    };
    let sink: Box<dyn Write> = match &g.out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            Box::new(File::create(dir.join(format!("reports.{ext}")))?)
        }
        None => Box::new(io::stdout().lock()),
    };
    match g.format {
        Format::Csv => write_reports_csv(reports, sink)?,
        Format::Json => write_reports_json(reports, sink)?,
    }
    if g.out.is_none() && g.format == Format::Json {
        println!();
    }
    Ok(())
}
