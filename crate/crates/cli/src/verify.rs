//! Batteries that check a solver against brute force on every planted
//! subgroup of a group.

use std::time::Instant;

use hsplab::algorithms::SolverParams;
use hsplab::arith::derive_seed;
use hsplab::groups::{all_subgroups, GroupSpec, SubgroupGenerators};
use hsplab::oracles::InstanceDescriptor;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, SolverKind, SCHEMA};
use crate::run::{execute, TrialRecord, TruthSource};
use crate::{CliError, Status};

/// Stream id for the relabelling seed of each battery case.
const CASE_STREAM: u64 = 0x6361_7365;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatteryCase {
    pub planted: SubgroupGenerators,
    pub relabel_seed: u64,
    pub trials: Vec<TrialRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatteryReport {
    pub schema: u32,
    pub moduli: Vec<u64>,
    pub seed: u64,
    pub cases: Vec<BatteryCase>,
    pub matches: usize,
    pub failures: usize,
    pub runs: usize,
    pub wall_time_ms: f64,
}

impl BatteryReport {
    pub fn status(&self) -> Status {
        if self.failures > 0 {
            Status::SolverFailure
        } else if self.matches < self.runs {
            Status::Mismatch
        } else {
            Status::Success
        }
    }
}

/// Plants every subgroup of `moduli` in turn, solves, and compares with
/// the exhaustively computed symmetry group.
pub fn hsp_battery(
    moduli: Vec<u64>,
    seed: u64,
    trials: usize,
    params: &SolverParams,
    cap: usize,
) -> Result<BatteryReport, CliError> {
    let start = Instant::now();
    let spec = GroupSpec::new(moduli.clone()).map_err(|e| CliError::Config(e.to_string()))?;
    let subgroups = all_subgroups(&spec, cap).map_err(|e| CliError::Cap(e.to_string()))?;
    let mut cases = Vec::with_capacity(subgroups.len());
    for (i, planted) in subgroups.into_iter().enumerate() {
        let relabel_seed = derive_seed(seed, CASE_STREAM, i as u64);
        let descriptor = InstanceDescriptor::Hsp {
            moduli: moduli.clone(),
            generators: planted.gens.iter().map(|g| g.0.clone()).collect(),
            seed: relabel_seed,
        };
        let mut config = ExperimentConfig::new(SolverKind::Hsp, Some(descriptor), relabel_seed);
        config.trials = trials;
        config.params = params.clone();
        let report = execute(&config, TruthSource::Exhaustive)?;
        cases.push(BatteryCase { planted, relabel_seed, trials: report.trials });
    }
    let all = || cases.iter().flat_map(|c| &c.trials);
    Ok(BatteryReport {
        schema: SCHEMA,
        moduli,
        seed,
        matches: all().filter(|t| t.matched).count(),
        failures: all().filter(|t| t.error.is_some()).count(),
        runs: all().count(),
        cases,
        wall_time_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}
