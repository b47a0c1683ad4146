use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use evosched::battery::dispatch_batteries;
use evosched::decode::Evaluator;
use evosched::evolution::{evolve, Algorithm, EvolutionConfig};
use evosched::feasibility::check_schedule;
use evosched::instance::SizeClass;
use evosched::local_search::{improve_schedule, Variant};
use evosched::objective;
use evosched::pipeline::{run_pipeline, PipelineConfig};
use evosched::synth::generate_synthetic_instance;
use evosched::{parse_instance, Instance, Schedule, SeriesFrame};

#[derive(Parser)]
#[command(name = "evosched", version, about = "Schedule campus activities and batteries against a load forecast")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a seeded synthetic instance (JSON plus series CSVs).
    GenInstance {
        #[arg(long, value_enum, default_value_t = Size::Small)]
        size: Size,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Search for a base schedule.
    Evolve {
        #[command(flatten)]
        input: Input,
        #[arg(long, value_enum, default_value_t = Algo::Cmaes)]
        algo: Algo,
        #[command(flatten)]
        search: Search,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Improve a schedule one activity at a time.
    Improve {
        #[command(flatten)]
        input: Input,
        #[arg(long)]
        schedule: PathBuf,
        #[arg(long, value_enum, default_value_t = VariantArg::Both)]
        variant: VariantArg,
        /// Output schedule JSON.
        #[arg(long)]
        out: PathBuf,
    },
    /// Add battery dispatch to a schedule.
    Battery {
        #[command(flatten)]
        input: Input,
        #[arg(long)]
        schedule: PathBuf,
        /// Output schedule JSON.
        #[arg(long)]
        out: PathBuf,
    },
    /// Check a schedule and print its cost.
    Evaluate {
        #[command(flatten)]
        input: Input,
        #[arg(long)]
        schedule: PathBuf,
        /// Realised base load to evaluate against as well.
        #[arg(long)]
        actual: Option<PathBuf>,
        /// Also write the cost report here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evolve, improve, dispatch batteries and report every stage.
    Pipeline {
        #[command(flatten)]
        input: Input,
        #[arg(long)]
        actual: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Algo::Cmaes)]
        algo: Algo,
        #[command(flatten)]
        search: Search,
        #[arg(long, value_enum, default_value_t = VariantArg::Both)]
        variant: VariantArg,
        /// Base schedules carried into improvement.
        #[arg(long, default_value_t = 10)]
        top_k: usize,
        /// Improved schedules that get a battery dispatch.
        #[arg(long, default_value_t = 3)]
        battery_candidates: usize,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct Input {
    #[arg(long)]
    instance: PathBuf,
    /// Base-load forecast CSV; defaults to the instance's base load.
    #[arg(long)]
    forecast: Option<PathBuf>,
}

#[derive(Args)]
struct Search {
    #[arg(long, default_value_t = 100)]
    pop: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Wall-clock budget for the search. Defaults to 60 s unless --runs is set.
    #[arg(long)]
    time_budget_s: Option<f64>,
    /// Number of runs (first run plus restarts); gives reproducible output.
    #[arg(long)]
    runs: Option<usize>,
    /// Generation cap per run.
    #[arg(long)]
    generations: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Size {
    Small,
    Large,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Algo {
    Cmaes,
    Ga,
    Both,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Keep,
    Drop,
    Both,
}

impl VariantArg {
    fn variants(self) -> Vec<Variant> {
        match self {
            VariantArg::Keep => vec![Variant::Keep],
            VariantArg::Drop => vec![Variant::Drop],
            VariantArg::Both => vec![Variant::Keep, Variant::Drop],
        }
    }
}

impl Algo {
    fn algorithms(self) -> Vec<Algorithm> {
        match self {
            Algo::Cmaes => vec![Algorithm::Cmaes],
            Algo::Ga => vec![Algorithm::Ga],
            Algo::Both => vec![Algorithm::Cmaes, Algorithm::Ga],
        }
    }
}

impl Search {
    fn config(&self) -> EvolutionConfig {
        let time_budget_s = match (self.time_budget_s, self.runs) {
            (None, None) => Some(60.0),
            (t, _) => t,
        };
        EvolutionConfig {
            population_size: self.pop,
            seed: self.seed,
            time_budget_s,
            max_runs: self.runs,
            max_generations: self.generations,
            ..EvolutionConfig::default()
        }
    }
}

struct Loaded {
    instance: Instance,
    load: SeriesFrame,
}

fn load_input(input: &Input) -> anyhow::Result<Loaded> {
    let instance = parse_instance(&input.instance)?;
    let load = match &input.forecast {
        Some(p) => read_series(p, &instance)?,
        None => instance.base_load.clone(),
    };
    Ok(Loaded { instance, load })
}

fn read_series(path: &Path, instance: &Instance) -> anyhow::Result<SeriesFrame> {
    let s = SeriesFrame::read_csv(path)?;
    if s.len() != instance.horizon.n_slots {
        return Err(evosched::Error::Validation(format!(
            "{} has {} values, horizon has {} slots",
            path.display(),
            s.len(),
            instance.horizon.n_slots
        ))
        .into());
    }
    Ok(s)
}

fn read_schedule(path: &Path, instance: &Instance) -> anyhow::Result<Schedule> {
    let schedule = Schedule::read_json(path, instance)?;
    if let Err(msg) = check_schedule(instance, &schedule) {
        return Err(evosched::Error::Validation(format!("{}: {msg}", path.display())).into());
    }
    Ok(schedule)
}

fn write_json(path: &Path, value: &serde_json::Value) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let text = serde_json::to_string_pretty(value)? + "\n";
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::GenInstance { size, seed, out } => {
            let size = match size {
                Size::Small => SizeClass::Small,
                Size::Large => SizeClass::Large,
            };
            if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            generate_synthetic_instance(size, seed).write(&out)?;
        }
        Command::Evolve {
            input,
            algo,
            search,
            out,
        } => {
            let Loaded { instance, load } = load_input(&input)?;
            let ev = Evaluator::new(&instance, &load)?;
            std::fs::create_dir_all(&out)?;
            let mut summary = Vec::new();
            let mut best: Option<evosched::decode::EvaluatedIndividual> = None;
            for algorithm in algo.algorithms() {
                let config = EvolutionConfig {
                    algorithm,
                    ..search.config()
                };
                let result = evolve(&ev, &config, 1)?;
                let name = match algorithm {
                    Algorithm::Cmaes => "cmaes",
                    Algorithm::Ga => "ga",
                };
                result.trace.write_csv(&out.join(format!("trace_{name}.csv")))?;
                summary.push(json!({
                    "algorithm": algorithm,
                    "best_cost": result.best.cost,
                    "evaluations": result.trace.evaluations,
                    "restarts": result.trace.restarts,
                }));
                if best.as_ref().map_or(true, |b| result.best.cost < b.cost) {
                    best = Some(result.best);
                }
            }
            let best = best.expect("at least one algorithm ran");
            let Some(schedule) = &best.schedule else {
                bail!(evosched::Error::Stage {
                    stage: "evolve",
                    source: Box::new(evosched::Error::Config(
                        "no feasible base schedule found within the budget".into()
                    )),
                });
            };
            schedule.write_json(&out.join("base_schedule.json"))?;
            let report = json!({ "cost": best.breakdown, "runs": summary });
            write_json(&out.join("evolve.json"), &report)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::Improve {
            input,
            schedule,
            variant,
            out,
        } => {
            let Loaded { instance, load } = load_input(&input)?;
            let base = read_schedule(&schedule, &instance)?.without_batteries();
            let ev = Evaluator::new(&instance, &load)?;
            let mut best = base.clone();
            let mut best_cost = ev.cost(&base).total;
            for v in variant.variants() {
                let s = improve_schedule(&ev, &base, v);
                let c = ev.cost(&s).total;
                if c < best_cost {
                    best = s;
                    best_cost = c;
                }
            }
            best.write_json(&out)?;
            println!(
                "{}",
                serde_json::to_string_pretty(&json!({
                    "input_cost": ev.cost(&base),
                    "improved_cost": ev.cost(&best),
                }))?
            );
        }
        Command::Battery {
            input,
            schedule,
            out,
        } => {
            let Loaded { instance, load } = load_input(&input)?;
            let base = read_schedule(&schedule, &instance)?.without_batteries();
            let activity_load = load.with_values(objective::total_load(&instance, &load.values, &base));
            let plan = dispatch_batteries(&instance.batteries, &activity_load, &instance.price.values);
            let mut with_batteries = base.clone();
            with_batteries.battery_actions = plan.actions;
            with_batteries.write_json(&out)?;
            println!(
                "{}",
                serde_json::to_string_pretty(&json!({
                    "input_cost": objective::evaluate(&instance, &load.values, &base),
                    "final_cost": objective::evaluate(&instance, &load.values, &with_batteries),
                }))?
            );
        }
        Command::Evaluate {
            input,
            schedule,
            actual,
            out,
        } => {
            let Loaded { instance, load } = load_input(&input)?;
            let schedule = read_schedule(&schedule, &instance)?;
            let actual = actual.map(|p| read_series(&p, &instance)).transpose()?;
            let report = json!({
                "forecast": objective::evaluate(&instance, &load.values, &schedule),
                "actual": actual.map(|a| objective::evaluate(&instance, &a.values, &schedule)),
            });
            if let Some(out) = out {
                write_json(&out, &report)?;
            }
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::Pipeline {
            input,
            actual,
            algo,
            search,
            variant,
            top_k,
            battery_candidates,
            out,
        } => {
            let Loaded { instance, load } = load_input(&input)?;
            let actual = actual.map(|p| read_series(&p, &instance)).transpose()?;
            let config = PipelineConfig {
                algorithms: algo.algorithms(),
                evolution: search.config(),
                top_k,
                variants: variant.variants(),
                battery_candidates,
            };
            let output = run_pipeline(&instance, Some(&load), actual.as_ref(), &config)?;
            output.write(&out)?;
            println!(
                "{}",
                serde_json::to_string_pretty(&json!({
                    "base_cost": output.report.base_cost,
                    "improved_cost": output.report.improved_cost,
                    "final_cost": output.report.final_cost,
                }))?
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            let validation = err
                .downcast_ref::<evosched::Error>()
                .is_some_and(evosched::Error::is_validation);
            ExitCode::from(if validation { 2 } else { 3 })
        }
    }
}
