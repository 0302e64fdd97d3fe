//! Experiment configuration files.

use std::path::{Path, PathBuf};

use hsplab::algorithms::SolverParams;
use hsplab::arith::multiplicative_order;
use hsplab::oracles::{Factor, InstanceDescriptor, OracleInstance};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Version of the config and report formats.
pub const SCHEMA: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum SolverKind {
    Deutsch,
    Simon,
    Order,
    Period,
    Hsp,
    Dlog,
    RobustPeriod,
    RobustHsp,
    Factor,
}

impl SolverKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Deutsch => "deutsch",
            Self::Simon => "simon",
            Self::Order => "order",
            Self::Period => "period",
            Self::Hsp => "hsp",
            Self::Dlog => "dlog",
            Self::RobustPeriod => "robust-period",
            Self::RobustHsp => "robust-hsp",
            Self::Factor => "factor",
        }
    }

    /// Solvers whose answer is a subgroup rather than a number.
    pub fn finds_subgroup(self) -> bool {
        matches!(self, Self::Deutsch | Self::Simon | Self::Hsp | Self::RobustHsp)
    }
}

fn one() -> usize {
    1
}

/// One experiment: an instance, a solver and how often to run it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema: u32,
    pub solver: SolverKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instance: Option<InstanceDescriptor>,
    /// The integer to factor. Only for `factor`, which takes no instance.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modulus: Option<u64>,
    /// Order of the cyclic group for `dlog`; defaults to the order of the base.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group_order: Option<u64>,
    /// Master seed. Trial `i` runs with a seed derived from it and `i`.
    pub seed: u64,
    #[serde(default = "one")]
    pub trials: usize,
    /// `params.seed` is ignored in favour of the derived trial seeds.
    #[serde(default)]
    pub params: SolverParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(solver: SolverKind, instance: Option<InstanceDescriptor>, seed: u64) -> Self {
        Self {
            schema: SCHEMA,
            solver,
            instance,
            modulus: None,
            group_order: None,
            seed,
            trials: 1,
            params: SolverParams::default(),
            output: None,
        }
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let config: Self = serde_json::from_str(text).map_err(|e| CliError::Config(format!("config: {e}")))?;
        config.check_fields()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Checks everything that can be checked without running a solver,
    /// including that the instance builds and suits the solver.
    pub fn validate(&self) -> Result<(), CliError> {
        self.prepare().map(|_| ())
    }

    /// Validates and builds the instance; `None` for `factor`.
    pub fn prepare(&self) -> Result<Option<OracleInstance>, CliError> {
        self.check_fields()?;
        if self.solver == SolverKind::Factor {
            return Ok(None);
        }
        let bad = |msg: String| Err(CliError::Config(msg));
        let instance = self.build()?;
        let on_integers = matches!(instance.black_box.domain().factors(), [Factor::Integers]);
        match self.solver {
            SolverKind::Period | SolverKind::RobustPeriod if !on_integers => {
                bad(format!("{} needs a function on Z", self.solver.name()))
            }
            SolverKind::Hsp | SolverKind::RobustHsp if on_integers => {
                bad(format!("{} needs a finite group", self.solver.name()))
            }
            SolverKind::Dlog if self.dlog_group_order().is_none() => bad("base is not a unit".into()),
            _ => Ok(Some(instance)),
        }
    }

    /// The checks that need no instance.
    fn check_fields(&self) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::Config(msg));
        if self.schema != SCHEMA {
            return bad(format!("unsupported schema {}, expected {SCHEMA}", self.schema));
        }
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        self.params.validate().map_err(|e| CliError::Config(e.to_string()))?;
        if self.solver == SolverKind::Factor {
            return match (self.modulus, &self.instance) {
                (Some(_), None) => Ok(()),
                _ => bad("factor takes `modulus` and no instance".into()),
            };
        }
        if self.modulus.is_some() {
            return bad(format!("`modulus` is only used by factor, not {}", self.solver.name()));
        }
        if self.group_order.is_some() && self.solver != SolverKind::Dlog {
            return bad("`group_order` is only used by dlog".into());
        }
        let Some(descriptor) = &self.instance else {
            return bad(format!("{} needs an instance", self.solver.name()));
        };
        use InstanceDescriptor as D;
        let kind_ok = match self.solver {
            SolverKind::Deutsch => matches!(descriptor, D::Deutsch { .. }),
            SolverKind::Simon => matches!(descriptor, D::Simon { .. }),
            SolverKind::Order => matches!(descriptor, D::Order { .. }),
            SolverKind::Dlog => matches!(descriptor, D::Dlog { .. }),
            _ => true,
        };
        if !kind_ok {
            return bad(format!("{} cannot run on this instance kind", self.solver.name()));
        }
        Ok(())
    }

    pub fn build(&self) -> Result<OracleInstance, CliError> {
        let descriptor = self.instance.as_ref().ok_or_else(|| CliError::Config("no instance".into()))?;
        descriptor.build().map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn dlog_group_order(&self) -> Option<u64> {
        match (&self.instance, self.group_order) {
            (_, Some(r)) => Some(r),
            (Some(InstanceDescriptor::Dlog { modulus, base, .. }), None) => multiplicative_order(*base, *modulus),
            _ => None,
        }
    }
}

/// Dimension cap: the command-line flag, then `HSPLAB_CAP`, then the config.
pub fn resolve_cap(flag: Option<usize>, env: Option<&str>, config: usize) -> Result<usize, CliError> {
    if let Some(cap) = flag {
        return Ok(cap);
    }
    match env {
        Some(text) => {
            text.trim().parse().map_err(|_| CliError::Config(format!("HSPLAB_CAP={text:?} is not a dimension")))
        }
        None => Ok(config),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_round_trips() {
        let text =
            r#"{"schema": 1, "solver": "order", "instance": {"kind": "order", "modulus": 15, "base": 2}, "seed": 7}"#;
        let config = ExperimentConfig::parse(text).unwrap();
        assert_eq!(config.trials, 1);
        assert_eq!(config.params, SolverParams::default());
        let again = ExperimentConfig::parse(&serde_json::to_string(&config).unwrap()).unwrap();
        assert_eq!(again, config);
    }

    #[test]
    fn seed_and_schema_are_mandatory() {
        let no_seed = r#"{"schema": 1, "solver": "order", "instance": {"kind": "order", "modulus": 15, "base": 2}}"#;
        assert!(ExperimentConfig::parse(no_seed).is_err());
        let no_schema = r#"{"solver": "order", "instance": {"kind": "order", "modulus": 15, "base": 2}, "seed": 1}"#;
        assert!(ExperimentConfig::parse(no_schema).is_err());
        let future =
            r#"{"schema": 2, "solver": "order", "instance": {"kind": "order", "modulus": 15, "base": 2}, "seed": 1}"#;
        assert!(ExperimentConfig::parse(future).is_err());
    }

    #[test]
    fn mismatched_solver_and_instance_are_rejected() {
        let cases = [
            r#"{"schema": 1, "solver": "simon", "instance": {"kind": "order", "modulus": 15, "base": 2}, "seed": 1}"#,
            r#"{"schema": 1, "solver": "hsp", "instance": {"kind": "period", "period": 4}, "seed": 1}"#,
            r#"{"schema": 1, "solver": "period", "instance": {"kind": "simon", "secret": "11"}, "seed": 1}"#,
            r#"{"schema": 1, "solver": "factor", "instance": {"kind": "period", "period": 4}, "seed": 1}"#,
            r#"{"schema": 1, "solver": "order", "modulus": 15, "seed": 1}"#,
            r#"{"schema": 1, "solver": "order", "instance": {"kind": "order", "modulus": 15, "base": 5}, "seed": 1}"#,
            r#"{"schema": 1, "solver": "order", "instance": {"kind": "order", "modulus": 15, "base": 2}, "seed": 1, "trials": 0}"#,
            r#"{"schema": 1, "solver": "order", "instance": {"kind": "order", "modulus": 15, "base": 2}, "seed": 1, "extra": 0}"#,
        ];
        for text in cases {
            let checked = ExperimentConfig::parse(text).and_then(|c| c.validate());
            assert!(matches!(checked, Err(CliError::Config(_))), "{text}");
        }
    }

    #[test]
    fn dlog_order_defaults_to_the_order_of_the_base() {
        let text = r#"{"schema": 1, "solver": "dlog", "instance": {"kind": "dlog", "modulus": 7, "base": 3, "target": 4}, "seed": 1}"#;
        assert_eq!(ExperimentConfig::parse(text).unwrap().dlog_group_order(), Some(6));
    }

    #[test]
    fn cap_precedence() {
        assert_eq!(resolve_cap(Some(10), Some("20"), 30).unwrap(), 10);
        assert_eq!(resolve_cap(None, Some(" 20 "), 30).unwrap(), 20);
        assert_eq!(resolve_cap(None, None, 30).unwrap(), 30);
        assert!(resolve_cap(None, Some("lots"), 30).is_err());
    }
}
