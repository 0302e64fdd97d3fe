//! Running a configured experiment and scoring it against a reference.

use std::time::Instant;

use hsplab::algorithms::*;
use hsplab::arith::{derive_seed, factorize, multiplicative_order, pow_mod};
use hsplab::groups::SubgroupGenerators;
use hsplab::oracles::{symmetry_group, InstanceDescriptor, OracleInstance, QueryCount};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::{ExperimentConfig, SolverKind, SCHEMA};
use crate::{CliError, Status};

/// Stream id for per-trial seeds.
pub const TRIAL_STREAM: u64 = 0x7472_6961;

/// Where the expected answer comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TruthSource {
    /// What the instance was built to hide.
    Planted,
    /// Recomputed by brute force from the black box alone.
    Exhaustive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "value")]
pub enum Answer {
    Subgroup(SubgroupGenerators),
    Integer(u64),
    /// A nontrivial split `n = factor * cofactor`.
    Split {
        factor: u64,
        cofactor: u64,
    },
    /// Prime factorisation, as the reference for a split.
    Factorisation(Vec<(u64, u32)>),
}

impl Answer {
    fn agrees_with(&self, truth: &Answer) -> bool {
        match (self, truth) {
            (Answer::Subgroup(a), Answer::Subgroup(b)) => a.canonical() == b.canonical(),
            (Answer::Integer(a), Answer::Integer(b)) => a == b,
            (Answer::Split { factor, cofactor }, Answer::Factorisation(primes)) => {
                let n: u64 = primes.iter().map(|&(p, e)| p.pow(e)).product();
                *factor > 1 && *cofactor > 1 && factor * cofactor == n
            }
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub index: usize,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub recovered: Option<Answer>,
    #[serde(rename = "match")]
    pub matched: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Solver rounds used, in the solver's own unit.
    pub rounds: usize,
    pub queries: QueryCount,
    pub samples: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema: u32,
    pub config: ExperimentConfig,
    pub truth_source: TruthSource,
    pub truth: Answer,
    pub trials: Vec<TrialRecord>,
    pub matches: usize,
    pub failures: usize,
    pub queries: QueryCount,
    /// The only field that differs between replays.
    pub wall_time_ms: f64,
}

impl RunReport {
    pub fn status(&self) -> Status {
        if self.failures > 0 {
            Status::SolverFailure
        } else if self.matches < self.trials.len() {
            Status::Mismatch
        } else {
            Status::Success
        }
    }
}

/// Runs every trial of `config`, in parallel, and scores each one.
pub fn execute(config: &ExperimentConfig, source: TruthSource) -> Result<RunReport, CliError> {
    let start = Instant::now();
    let instance = config.prepare()?;
    let truth = reference(config, instance.as_ref(), source)?;
    let trials: Vec<TrialRecord> =
        (0..config.trials).into_par_iter().map(|index| run_trial(config, instance.as_ref(), index, &truth)).collect();
    let queries = trials.iter().fold(QueryCount::default(), |acc, t| QueryCount {
        quantum: acc.quantum + t.queries.quantum,
        classical: acc.classical + t.queries.classical,
        shifts: acc.shifts + t.queries.shifts,
    });
    Ok(RunReport {
        schema: SCHEMA,
        config: config.clone(),
        truth_source: source,
        matches: trials.iter().filter(|t| t.matched).count(),
        failures: trials.iter().filter(|t| t.error.is_some()).count(),
        truth,
        trials,
        queries,
        wall_time_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}

fn run_trial(config: &ExperimentConfig, shared: Option<&OracleInstance>, index: usize, truth: &Answer) -> TrialRecord {
    let seed = derive_seed(config.seed, TRIAL_STREAM, index as u64);
    let params = config.params.with_seed(seed);
    let instance = shared.map(OracleInstance::with_fresh_counter);
    match solve(config, instance.as_ref(), &params) {
        Ok(solved) => TrialRecord {
            index,
            seed,
            matched: solved.answer.agrees_with(truth),
            recovered: Some(solved.answer),
            error: None,
            rounds: solved.rounds,
            queries: solved.queries,
            samples: solved.samples,
        },
        Err(e) => TrialRecord {
            index,
            seed,
            recovered: None,
            matched: false,
            error: Some(e.to_string()),
            rounds: 0,
            queries: instance.map(|i| i.black_box.counts()).unwrap_or_default(),
            samples: Value::Array(Vec::new()),
        },
    }
}

struct Solved {
    answer: Answer,
    rounds: usize,
    queries: QueryCount,
    samples: Value,
}

fn to_value<T: Serialize>(samples: &T) -> Value {
    serde_json::to_value(samples).expect("solver records serialise")
}

fn from_order(res: OrderResult) -> Solved {
    Solved {
        answer: Answer::Integer(res.period),
        rounds: res.trials,
        queries: res.queries,
        samples: to_value(&res.samples),
    }
}

fn from_hsp(res: HspResult) -> Solved {
    Solved {
        answer: Answer::Subgroup(res.subgroup),
        rounds: res.trials,
        queries: res.queries,
        samples: to_value(&res.samples),
    }
}

fn solve(
    config: &ExperimentConfig,
    instance: Option<&OracleInstance>,
    params: &SolverParams,
) -> hsplab::Result<Solved> {
    let inst = || instance.expect("validated: every solver but factor has an instance");
    Ok(match config.solver {
        SolverKind::Deutsch | SolverKind::Simon | SolverKind::Hsp => from_hsp(solve_hsp_general(inst(), params)?),
        SolverKind::RobustHsp => from_hsp(robust_hsp(inst(), params)?),
        SolverKind::Order => from_order(find_order(inst(), params)?),
        SolverKind::Period => from_order(find_period(inst(), params)?),
        SolverKind::RobustPeriod => from_order(robust_period(inst(), params)?),
        SolverKind::Dlog => {
            let r = config.dlog_group_order().expect("validated");
            let res = solve_dlog(inst(), r, params)?;
            Solved {
                answer: Answer::Integer(res.exponent),
                rounds: res.trials,
                queries: res.queries,
                samples: to_value(&res.samples),
            }
        }
        SolverKind::Factor => {
            let n = config.modulus.expect("validated");
            let res = factor_via_order(n, params)?;
            Solved {
                answer: Answer::Split { factor: res.factor, cofactor: res.cofactor },
                rounds: res.attempts,
                queries: QueryCount::default(),
                samples: to_value(&res),
            }
        }
    })
}

/// The answer each trial is scored against.
fn reference(
    config: &ExperimentConfig,
    instance: Option<&OracleInstance>,
    source: TruthSource,
) -> Result<Answer, CliError> {
    let cap = |e: hsplab::Error| CliError::Cap(e.to_string());
    if config.solver == SolverKind::Factor {
        let n = config.modulus.expect("validated");
        return Ok(Answer::Factorisation(match source {
            TruthSource::Planted => factorize(n),
            TruthSource::Exhaustive => trial_division(n),
        }));
    }
    let instance = instance.expect("every solver but factor has an instance");
    let planted = source == TruthSource::Planted;
    Ok(match config.solver {
        // A merged function can have more symmetry than was planted; the
        // robust solvers are right to report all of it.
        SolverKind::RobustHsp => Answer::Subgroup(symmetry_group(instance).map_err(cap)?),
        _ if config.solver.finds_subgroup() => Answer::Subgroup(if planted {
            instance.truth.hidden.clone()
        } else {
            symmetry_group(instance).map_err(cap)?
        }),
        SolverKind::Order => {
            let Some(InstanceDescriptor::Order { modulus, base }) = &config.instance else { unreachable!("validated") };
            Answer::Integer(if planted {
                multiplicative_order(*base, *modulus).expect("validated")
            } else {
                (1..=*modulus).find(|&k| pow_mod(*base, k, *modulus) == 1).expect("units have finite order")
            })
        }
        SolverKind::Period if planted => Answer::Integer(instance.period().expect("validated")),
        SolverKind::Period | SolverKind::RobustPeriod => Answer::Integer(least_period(instance)?),
        SolverKind::Dlog => {
            let Some(InstanceDescriptor::Dlog { modulus, base, target }) = &config.instance else {
                unreachable!("validated")
            };
            let r = config.dlog_group_order().expect("validated");
            let brute = (0..r).find(|&m| pow_mod(*base, m, *modulus) == *target % modulus);
            match (planted, instance.truth.dlog_exponent) {
                (true, Some(m)) => Answer::Integer(m),
                _ => {
                    Answer::Integer(brute.ok_or_else(|| CliError::Config("target is not a power of the base".into()))?)
                }
            }
        }
        _ => unreachable!("every kind is covered"),
    })
}

/// Least period of a function on `Z` by direct comparison, searching up to
/// the bound `multiplicity * |X|` that every admissible period respects.
fn least_period(instance: &OracleInstance) -> Result<u64, CliError> {
    let bb = &instance.black_box;
    let bound = bb.codomain_size() * bb.multiplicity();
    if bound > 1 << 12 {
        return Err(CliError::Cap(format!("period search bound {bound} exceeds 4096")));
    }
    let values: Vec<u64> = (0..2 * bound).map(|t| bb.query(&[t])).collect();
    Ok((1..=bound).find(|&k| (0..bound).all(|t| values[(t + k) as usize] == values[t as usize])).unwrap_or(bound))
}

fn trial_division(mut n: u64) -> Vec<(u64, u32)> {
    let mut out = Vec::new();
    let mut p = 2;
    while p * p <= n {
        let mut e = 0;
        while n.is_multiple_of(p) {
            n /= p;
            e += 1;
        }
        if e > 0 {
            out.push((p, e));
        }
        p += 1;
    }
    if n > 1 {
        out.push((n, 1));
    }
    out
}
