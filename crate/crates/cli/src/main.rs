use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hsplab::estimation::EstimationMode;
use hsplab::oracles::InstanceDescriptor;
use hsplab_cli::config::{resolve_cap, ExperimentConfig, SolverKind};
use hsplab_cli::dump;
use hsplab_cli::run::{execute, RunReport, TruthSource};
use hsplab_cli::verify::hsp_battery;
use hsplab_cli::{CliError, Status};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "hsplab", version, about = "Seeded experiments with simulated Abelian hidden subgroup algorithms")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// Experiment config (JSON). Instance flags must then be left out.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Master seed; trial seeds are derived from it.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Independent runs of the solver, each with its own derived seed.
    #[arg(long, global = true, value_name = "N")]
    trials: Option<usize>,
    /// Control register size 2^N instead of the automatic choice.
    #[arg(long, global = true, value_name = "N")]
    control_bits: Option<u32>,
    /// Solver round budget per trial.
    #[arg(long, global = true, value_name = "N")]
    budget: Option<usize>,
    /// Largest state dimension to simulate. Overrides HSPLAB_CAP.
    #[arg(long, global = true, value_name = "DIM")]
    cap: Option<usize>,
    /// Write the JSON report here instead of to stdout.
    #[arg(long, global = true, value_name = "PATH")]
    json_out: Option<PathBuf>,
    /// Also write one JSON line per trial here.
    #[arg(long, global = true, value_name = "PATH")]
    jsonl: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Is a one-bit function constant or balanced?
    Deutsch {
        #[arg(long)]
        f0: Option<u8>,
        #[arg(long)]
        f1: Option<u8>,
    },
    /// Recover the XOR mask s from f(x) = f(x + s).
    Simon {
        /// Secret as a bit string, e.g. 101.
        #[arg(long)]
        secret: Option<String>,
        #[arg(long)]
        allow_zero: bool,
    },
    /// Multiplicative order of a base modulo N.
    Order {
        #[arg(long)]
        modulus: Option<u64>,
        #[arg(long)]
        base: Option<u64>,
    },
    /// Least period of an injective-on-a-period function on Z.
    Period(PeriodArgs),
    /// Hidden subgroup of a finite Abelian group.
    Hsp(GroupArgs),
    /// m with base^m = target modulo a prime.
    Dlog {
        #[arg(long)]
        modulus: Option<u64>,
        #[arg(long)]
        base: Option<u64>,
        #[arg(long)]
        target: Option<u64>,
        /// Order of the cyclic group; the order of the base by default.
        #[arg(long)]
        group_order: Option<u64>,
    },
    /// Period of a function that merges up to m values.
    RobustPeriod {
        #[command(flatten)]
        inner: PeriodArgs,
        #[command(flatten)]
        merge: MergeArgs,
    },
    /// Hidden subgroup of a function that merges up to m cosets.
    RobustHsp {
        #[command(flatten)]
        inner: GroupArgs,
        #[command(flatten)]
        merge: MergeArgs,
    },
    /// A nontrivial factor of an odd composite with two distinct primes.
    Factor {
        #[arg(long)]
        modulus: Option<u64>,
    },
    /// Exact outcome distributions as JSON.
    Dump {
        #[command(subcommand)]
        what: DumpCommand,
    },
    /// Score a config, or every subgroup of a group, against brute force.
    Verify {
        /// Run the battery over every subgroup of this group, e.g. 4,2.
        #[arg(long, value_name = "MODULI")]
        hsp_battery: Option<String>,
    },
}

#[derive(Args)]
struct PeriodArgs {
    #[arg(long)]
    period: Option<u64>,
    /// Seed of the random relabelling of one period; identity when absent.
    #[arg(long)]
    relabel_seed: Option<u64>,
}

#[derive(Args)]
struct GroupArgs {
    /// Cyclic factors, e.g. 4,2.
    #[arg(long)]
    moduli: Option<String>,
    /// Generators of the planted subgroup, e.g. "2,0;0,1". Empty for {0}.
    #[arg(long)]
    generators: Option<String>,
    #[arg(long, default_value_t = 0)]
    relabel_seed: u64,
}

#[derive(Args)]
struct MergeArgs {
    /// How many values may share an output.
    #[arg(long)]
    multiplicity: Option<u64>,
    #[arg(long, default_value_t = 0)]
    merge_seed: u64,
}

#[derive(Subcommand)]
enum DumpCommand {
    /// Law of the inverse transform applied to a phase state.
    Estimator {
        /// Phase as a/b or a decimal in [0, 1).
        #[arg(long)]
        phi: String,
        /// Register size N.
        #[arg(long)]
        size: usize,
    },
    /// Control law of estimation with a full register.
    RegisterPe {
        #[command(flatten)]
        target: EstimationArgs,
        #[arg(long, value_enum)]
        mode: Option<Mode>,
    },
    /// Law of estimation with one recycled control qubit.
    SemiclassicalPe {
        #[command(flatten)]
        target: EstimationArgs,
    },
}

#[derive(Args)]
struct EstimationArgs {
    /// Instance descriptor as JSON, e.g. '{"kind":"order","modulus":15,"base":4}'.
    #[arg(long)]
    instance: String,
    #[arg(long, default_value_t = 0)]
    generator: usize,
    /// Control bits n; the register has 2^n states.
    #[arg(long)]
    bits: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Oracle,
    Shift,
}

fn config_error(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn need<T>(value: Option<T>, flag: &str) -> Result<T, CliError> {
    value.ok_or_else(|| config_error(format!("missing --{flag}")))
}

fn parse_list(text: &str) -> Result<Vec<u64>, CliError> {
    text.split(',')
        .map(|v| v.trim().parse().map_err(|_| config_error(format!("{text:?} is not a comma-separated list"))))
        .collect()
}

fn parse_generators(text: &str) -> Result<Vec<Vec<u64>>, CliError> {
    text.split(';').filter(|g| !g.trim().is_empty()).map(parse_list).collect()
}

/// What the instance flags of a subcommand describe. `None` when no
/// instance flag was given.
struct Request {
    kind: SolverKind,
    instance: Option<InstanceDescriptor>,
    modulus: Option<u64>,
    group_order: Option<u64>,
}

fn period_descriptor(args: &PeriodArgs) -> Result<Option<InstanceDescriptor>, CliError> {
    if args.period.is_none() && args.relabel_seed.is_none() {
        return Ok(None);
    }
    Ok(Some(InstanceDescriptor::Period {
        period: need(args.period, "period")?,
        relabeling: None,
        seed: args.relabel_seed,
    }))
}

fn group_descriptor(args: &GroupArgs) -> Result<Option<InstanceDescriptor>, CliError> {
    if args.moduli.is_none() && args.generators.is_none() {
        return Ok(None);
    }
    Ok(Some(InstanceDescriptor::Hsp {
        moduli: parse_list(&need(args.moduli.clone(), "moduli")?)?,
        generators: parse_generators(args.generators.as_deref().unwrap_or(""))?,
        seed: args.relabel_seed,
    }))
}

fn merged(inner: Option<InstanceDescriptor>, merge: &MergeArgs) -> Result<Option<InstanceDescriptor>, CliError> {
    match inner {
        None if merge.multiplicity.is_none() => Ok(None),
        None => Err(config_error("--multiplicity needs an instance")),
        Some(inner) => Ok(Some(InstanceDescriptor::ManyToOne {
            inner: Box::new(inner),
            multiplicity: need(merge.multiplicity, "multiplicity")?,
            merge: None,
            seed: merge.merge_seed,
        })),
    }
}

fn request(command: &Command) -> Result<Request, CliError> {
    let plain = |kind, instance| Request { kind, instance, modulus: None, group_order: None };
    Ok(match command {
        Command::Deutsch { f0, f1 } => plain(
            SolverKind::Deutsch,
            match (f0, f1) {
                (None, None) => None,
                _ => Some(InstanceDescriptor::Deutsch { f0: need(*f0, "f0")?, f1: need(*f1, "f1")? }),
            },
        ),
        Command::Simon { secret, allow_zero } => plain(
            SolverKind::Simon,
            secret.clone().map(|secret| InstanceDescriptor::Simon { secret, allow_zero: *allow_zero }),
        ),
        Command::Order { modulus, base } => plain(
            SolverKind::Order,
            match (modulus, base) {
                (None, None) => None,
                _ => {
                    Some(InstanceDescriptor::Order { modulus: need(*modulus, "modulus")?, base: need(*base, "base")? })
                }
            },
        ),
        Command::Period(args) => plain(SolverKind::Period, period_descriptor(args)?),
        Command::Hsp(args) => plain(SolverKind::Hsp, group_descriptor(args)?),
        Command::Dlog { modulus, base, target, group_order } => Request {
            kind: SolverKind::Dlog,
            instance: match (modulus, base, target) {
                (None, None, None) => None,
                _ => Some(InstanceDescriptor::Dlog {
                    modulus: need(*modulus, "modulus")?,
                    base: need(*base, "base")?,
                    target: need(*target, "target")?,
                }),
            },
            modulus: None,
            group_order: *group_order,
        },
        Command::RobustPeriod { inner, merge } => {
            plain(SolverKind::RobustPeriod, merged(period_descriptor(inner)?, merge)?)
        }
        Command::RobustHsp { inner, merge } => plain(SolverKind::RobustHsp, merged(group_descriptor(inner)?, merge)?),
        Command::Factor { modulus } => {
            Request { kind: SolverKind::Factor, instance: None, modulus: *modulus, group_order: None }
        }
        Command::Dump { .. } | Command::Verify { .. } => unreachable!("not a solver"),
    })
}

fn cap_from_env(flag: Option<usize>, config: usize) -> Result<usize, CliError> {
    resolve_cap(flag, std::env::var("HSPLAB_CAP").ok().as_deref(), config)
}

fn apply_overrides(config: &mut ExperimentConfig, common: &Common) -> Result<(), CliError> {
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(trials) = common.trials {
        config.trials = trials;
    }
    if let Some(bits) = common.control_bits {
        config.params.control_bits = Some(bits);
    }
    if let Some(budget) = common.budget {
        config.params.budget = budget;
    }
    config.params.cap = cap_from_env(common.cap, config.params.cap)?;
    Ok(())
}

fn experiment(req: Request, common: &Common) -> Result<ExperimentConfig, CliError> {
    let given = req.instance.is_some() || req.modulus.is_some();
    let mut config = match (&common.config, given) {
        (Some(_), true) => return Err(config_error("instance flags and --config are exclusive")),
        (Some(path), false) => {
            let config = ExperimentConfig::load(path)?;
            if config.solver != req.kind {
                return Err(config_error(format!("config is for {}, not {}", config.solver.name(), req.kind.name())));
            }
            config
        }
        (None, true) => {
            let mut config = ExperimentConfig::new(req.kind, req.instance, common.seed.unwrap_or(0));
            config.modulus = req.modulus;
            config.group_order = req.group_order;
            config
        }
        (None, false) => return Err(config_error(format!("{} needs instance flags or --config", req.kind.name()))),
    };
    apply_overrides(&mut config, common)?;
    Ok(config)
}

fn emit<T: Serialize>(value: &T, path: Option<&Path>) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("reports serialise");
    match path {
        Some(path) => std::fs::write(path, text + "\n").map_err(|e| CliError::Io(format!("{}: {e}", path.display()))),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn write_jsonl<T: Serialize>(rows: impl IntoIterator<Item = T>, path: &Path) -> Result<(), CliError> {
    let io = |e: std::io::Error| CliError::Io(format!("{}: {e}", path.display()));
    let mut out = BufWriter::new(File::create(path).map_err(io)?);
    for row in rows {
        serde_json::to_writer(&mut out, &row).expect("records serialise");
        out.write_all(b"\n").map_err(io)?;
    }
    out.flush().map_err(io)
}

fn finish_run(report: &RunReport, common: &Common) -> Result<Status, CliError> {
    if let Some(path) = &common.jsonl {
        write_jsonl(&report.trials, path)?;
    }
    emit(report, common.json_out.as_deref().or(report.config.output.as_deref()))?;
    for trial in report.trials.iter().filter(|t| t.error.is_some()) {
        eprintln!("trial {}: {}", trial.index, trial.error.as_deref().unwrap_or_default());
    }
    eprintln!(
        "{}: {}/{} trials match, {} failed",
        report.config.solver.name(),
        report.matches,
        report.trials.len(),
        report.failures
    );
    Ok(report.status())
}

fn main_inner(cli: Cli) -> Result<Status, CliError> {
    let common = &cli.common;
    match &cli.command {
        Command::Dump { what } => {
            let cap = cap_from_env(common.cap, hsplab::amplitudes::DEFAULT_DIM_CAP)?;
            let parse = |text: &str| -> Result<InstanceDescriptor, CliError> {
                serde_json::from_str(text).map_err(|e| config_error(format!("--instance: {e}")))
            };
            let out = match what {
                DumpCommand::Estimator { phi, size } => dump::estimator(dump::parse_phase(phi)?, *size, cap)?,
                DumpCommand::RegisterPe { target, mode } => {
                    let mode = mode.map(|m| match m {
                        Mode::Oracle => EstimationMode::Oracle,
                        Mode::Shift => EstimationMode::Shift,
                    });
                    dump::register(&parse(&target.instance)?, target.generator, target.bits, mode, cap)?
                }
                DumpCommand::SemiclassicalPe { target } => {
                    dump::semiclassical(&parse(&target.instance)?, target.generator, target.bits, cap)?
                }
            };
            emit(&out, common.json_out.as_deref())?;
            Ok(Status::Success)
        }
        Command::Verify { hsp_battery: Some(moduli) } => {
            if common.config.is_some() {
                return Err(config_error("--hsp-battery and --config are exclusive"));
            }
            let mut template = ExperimentConfig::new(SolverKind::Hsp, None, common.seed.unwrap_or(0));
            template.params.control_bits = common.control_bits;
            if let Some(budget) = common.budget {
                template.params.budget = budget;
            }
            template.params.cap = cap_from_env(common.cap, template.params.cap)?;
            template.params.validate().map_err(|e| config_error(e.to_string()))?;
            let report = hsp_battery(
                parse_list(moduli)?,
                template.seed,
                common.trials.unwrap_or(1),
                &template.params,
                template.params.cap,
            )?;
            if let Some(path) = &common.jsonl {
                write_jsonl(report.cases.iter().flat_map(|c| &c.trials), path)?;
            }
            emit(&report, common.json_out.as_deref())?;
            eprintln!("hsp battery: {}/{} runs match, {} failed", report.matches, report.runs, report.failures);
            Ok(report.status())
        }
        Command::Verify { hsp_battery: None } => {
            let path = common.config.as_ref().ok_or_else(|| config_error("verify needs --config or --hsp-battery"))?;
            let mut config = ExperimentConfig::load(path)?;
            apply_overrides(&mut config, common)?;
            finish_run(&execute(&config, TruthSource::Exhaustive)?, common)
        }
        command => {
            let config = experiment(request(command)?, common)?;
            finish_run(&execute(&config, TruthSource::Planted)?, common)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let status = main_inner(cli).unwrap_or_else(|e| {
        eprintln!("hsplab: {e}");
        e.status()
    });
    ExitCode::from(status.code())
}
