//! Exact outcome distributions for external plotting.

use hsplab::estimation::{register_distribution, semiclassical_distribution, EstimationMode};
use hsplab::oracles::InstanceDescriptor;
use hsplab::qft::estimator_distribution;
use serde::{Deserialize, Serialize};

use crate::config::SCHEMA;
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum DumpKind {
    Estimator,
    RegisterPe,
    SemiclassicalPe,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionDump {
    pub schema: u32,
    pub kind: DumpKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phi: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub instance: Option<InstanceDescriptor>,
    /// Generator whose phase is estimated.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub generator: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<EstimationMode>,
    #[serde(rename = "N")]
    pub n: usize,
    pub probs: Vec<f64>,
}

fn core_error(e: hsplab::Error) -> CliError {
    match e {
        hsplab::Error::DimensionCap { .. } | hsplab::Error::SizeCap(_) => CliError::Cap(e.to_string()),
        other => CliError::Config(other.to_string()),
    }
}

/// Parses a phase given as `a/b` or as a decimal in `[0, 1)`.
pub fn parse_phase(text: &str) -> Result<f64, CliError> {
    let bad = || CliError::Config(format!("phase {text:?} is neither a/b nor a decimal"));
    let phi = match text.split_once('/') {
        Some((a, b)) => {
            let (a, b): (u64, u64) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
            if b == 0 {
                return Err(bad());
            }
            a as f64 / b as f64
        }
        None => text.trim().parse().map_err(|_| bad())?,
    };
    if (0.0..1.0).contains(&phi) {
        Ok(phi)
    } else {
        Err(CliError::Config(format!("phase {text} outside [0, 1)")))
    }
}

pub fn estimator(phi: f64, n: usize, cap: usize) -> Result<DistributionDump, CliError> {
    if n > cap {
        return Err(CliError::Cap(format!("N = {n} exceeds the cap of {cap}")));
    }
    let d = estimator_distribution(phi, n).map_err(core_error)?;
    Ok(DistributionDump {
        schema: SCHEMA,
        kind: DumpKind::Estimator,
        phi: Some(phi),
        instance: None,
        generator: None,
        mode: None,
        n: d.n,
        probs: d.probs,
    })
}

fn register_size(bits: usize) -> Result<usize, CliError> {
    if bits == 0 || bits > 40 {
        return Err(CliError::Config(format!("{bits} control bits is outside 1..=40")));
    }
    Ok(1 << bits)
}

/// Control law of a full-register estimation. Defaults to shifts when the
/// instance has them, so it is directly comparable with the one-qubit law.
pub fn register(
    descriptor: &InstanceDescriptor,
    generator: usize,
    bits: usize,
    mode: Option<EstimationMode>,
    cap: usize,
) -> Result<DistributionDump, CliError> {
    let instance = descriptor.build().map_err(core_error)?;
    let bb = &instance.black_box;
    let mode = mode.unwrap_or(if bb.has_shift() { EstimationMode::Shift } else { EstimationMode::Oracle });
    let n = register_size(bits)?;
    let probs = register_distribution(bb, generator, n, mode, cap).map_err(core_error)?;
    Ok(DistributionDump {
        schema: SCHEMA,
        kind: DumpKind::RegisterPe,
        phi: None,
        instance: Some(descriptor.clone()),
        generator: Some(generator),
        mode: Some(mode),
        n,
        probs,
    })
}

/// Outcome law of the one-control-qubit estimation with `bits` rounds.
pub fn semiclassical(
    descriptor: &InstanceDescriptor,
    generator: usize,
    bits: usize,
    cap: usize,
) -> Result<DistributionDump, CliError> {
    let instance = descriptor.build().map_err(core_error)?;
    let n = register_size(bits)?;
    if n > cap {
        return Err(CliError::Cap(format!("2^{bits} outcomes exceed the cap of {cap}")));
    }
    let probs = semiclassical_distribution(&instance.black_box, generator, bits).map_err(core_error)?;
    Ok(DistributionDump {
        schema: SCHEMA,
        kind: DumpKind::SemiclassicalPe,
        phi: None,
        instance: Some(descriptor.clone()),
        generator: Some(generator),
        mode: Some(EstimationMode::Shift),
        n,
        probs,
    })
}
