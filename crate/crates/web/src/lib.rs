//! WebAssembly bindings for the static demo page in `www/`. Every export
//! returns a JSON string; the page parses it and draws bar charts.

use hsplab::algorithms::{solve_hsp_general, SolverParams};
use hsplab::amplitudes::sample_index;
use hsplab::arith::derive_seed;
use hsplab::estimation::{prepare_character_state, register_distribution, semiclassical_distribution, EstimationMode};
use hsplab::groups::{GroupElement, GroupSpec, SubgroupGenerators};
use hsplab::oracles::{make_hsp_instance, make_order_instance};
use hsplab::qft::estimator_distribution;
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Largest register or group the page may ask for.
const PAGE_CAP: usize = 1 << 16;

#[derive(Debug, Serialize)]
pub struct EstimatorView {
    pub phi: f64,
    pub probs: Vec<f64>,
    pub closest: usize,
}

#[derive(Debug, Serialize)]
pub struct ComparisonView {
    pub order: u64,
    pub register: Vec<f64>,
    pub one_qubit: Vec<f64>,
    pub l1: f64,
}

#[derive(Debug, Serialize)]
pub struct CharacterView {
    pub moduli: Vec<u64>,
    /// Every character with nonzero probability and its weight.
    pub support: Vec<(Vec<u64>, f64)>,
    pub samples: Vec<Vec<u64>>,
    pub recovered: Option<SubgroupGenerators>,
    pub error: Option<String>,
}

pub fn estimator_view(phi: f64, n: usize) -> Result<EstimatorView, String> {
    if n == 0 || n > PAGE_CAP {
        return Err(format!("N must be in 1..={PAGE_CAP}"));
    }
    let d = estimator_distribution(phi, n).map_err(|e| e.to_string())?;
    Ok(EstimatorView { phi, closest: d.closest_outcome(), probs: d.probs })
}

/// Full register against one recycled qubit for `a^x mod n`.
pub fn comparison_view(modulus: u64, base: u64, bits: usize) -> Result<ComparisonView, String> {
    if !(1..=12).contains(&bits) {
        return Err("bits must be in 1..=12".into());
    }
    let instance = make_order_instance(modulus, base).map_err(|e| e.to_string())?;
    let bb = &instance.black_box;
    let register =
        register_distribution(bb, 0, 1 << bits, EstimationMode::Shift, PAGE_CAP).map_err(|e| e.to_string())?;
    let one_qubit = semiclassical_distribution(bb, 0, bits).map_err(|e| e.to_string())?;
    let l1 = register.iter().zip(&one_qubit).map(|(a, b)| (a - b).abs()).sum();
    Ok(ComparisonView { order: instance.period().unwrap_or(0), register, one_qubit, l1 })
}

fn parse_list(text: &str) -> Result<Vec<u64>, String> {
    text.split(',').map(|v| v.trim().parse().map_err(|_| format!("{text:?} is not a list of integers"))).collect()
}

/// Character law of a planted subgroup, `count` seeded draws from it and
/// what the solver recovers.
pub fn character_view(moduli: &str, generators: &str, count: usize, seed: u64) -> Result<CharacterView, String> {
    let spec = GroupSpec::new(parse_list(moduli)?).map_err(|e| e.to_string())?;
    if spec.order().is_none_or(|n| n > PAGE_CAP as u64) {
        return Err(format!("group order must be at most {PAGE_CAP}"));
    }
    let gens = generators
        .split(';')
        .filter(|g| !g.trim().is_empty())
        .map(|g| parse_list(g).map(GroupElement))
        .collect::<Result<Vec<_>, _>>()?;
    let planted = SubgroupGenerators::new(spec.clone(), gens).map_err(|e| e.to_string())?;
    let instance = make_hsp_instance(&spec, &planted, seed).map_err(|e| e.to_string())?;
    let state = prepare_character_state(&instance.black_box, PAGE_CAP).map_err(|e| e.to_string())?;
    let registers: Vec<usize> = (0..spec.rank()).collect();
    let law = state.joint_marginal(&registers).map_err(|e| e.to_string())?;
    let element = |i: usize| spec.element_at(i as u64).0;
    let support = law.iter().enumerate().filter(|(_, &p)| p > 1e-12).map(|(i, &p)| (element(i), p)).collect();
    let samples = (0..count.min(10_000))
        .map(|k| element(sample_index(&law, derive_seed(seed, 1, k as u64)).expect("normalised law")))
        .collect();
    let (recovered, error) = match solve_hsp_general(&instance, &SolverParams::default().with_seed(seed)) {
        Ok(res) => (Some(res.subgroup), None),
        Err(e) => (None, Some(e.to_string())),
    };
    Ok(CharacterView { moduli: spec.moduli().to_vec(), support, samples, recovered, error })
}

fn to_js<T: Serialize>(view: Result<T, String>) -> Result<String, JsError> {
    view.map(|v| serde_json::to_string(&v).expect("views serialise")).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn estimator(phi: f64, n: usize) -> Result<String, JsError> {
    to_js(estimator_view(phi, n))
}

#[wasm_bindgen]
pub fn compare_estimation(modulus: u64, base: u64, bits: usize) -> Result<String, JsError> {
    to_js(comparison_view(modulus, base, bits))
}

#[wasm_bindgen]
pub fn sample_characters(moduli: &str, generators: &str, count: usize, seed: u64) -> Result<String, JsError> {
    to_js(character_view(moduli, generators, count, seed))
}
