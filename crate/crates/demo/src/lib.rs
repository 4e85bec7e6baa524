//! WebAssembly bindings for the static demo page in `www/`.
//!
//! Every export returns JSON text; the page parses it.

use std::sync::Arc;

use serde::Serialize;
use wasm_bindgen::prelude::*;

use screensearch::ambiguity::{AmbiguityEstimate, AmbiguityParams};
use screensearch::eval_harness::{ambiguity_curve_from_values, auc, frontier_curve_from_states};
use screensearch::explorer::{run_episode, EpisodeContext, PolicySpec, PuctConfig, SharedWorld};
use screensearch::gui_sim::{Scenario, SimEnv};
use screensearch::retrieval_index::{meets_threshold, sparse_similarity, DedupConfig};
use screensearch::scenarios;
use screensearch::screen_model::extract_signature;

fn load(name: &str, tau: f64) -> Result<Arc<Scenario>, String> {
    let spec = scenarios::by_name(name).ok_or_else(|| format!("unknown scenario `{name}`"))?;
    Scenario::compile(spec, tau).map(Arc::new).map_err(|e| e.to_string())
}

/// `u(s)` for evidence counts `0..=max_n` at a fixed dispersion.
pub fn shrinkage(dispersion: f64, kappa: f64, u0: f64, max_n: u32) -> Result<Vec<f64>, String> {
    let params = AmbiguityParams::new(kappa, u0).map_err(|e| e.to_string())?;
    if !(0.0..=1.0).contains(&dispersion) {
        return Err("dispersion must lie in [0, 1]".into());
    }
    Ok((0..=max_n as u64)
        .map(|n| AmbiguityEstimate::shrink(dispersion, n, &params).score)
        .collect())
}

#[derive(Serialize)]
pub struct JitterReport {
    pub accepted: bool,
    pub error: Option<String>,
    pub bound: Option<f64>,
    pub min_similarity: Option<f64>,
    pub mean_similarity: Option<f64>,
    pub merged: usize,
    pub draws: usize,
}

/// Renders `draws` jittered copies of one hidden state and compares each
/// with the jitter-free template. A jitter setting the loader cannot prove
/// safe is reported as rejected.
pub fn jitter(scenario: &str, state: &str, max_shift_px: f64, fraction: f64, draws: usize, seed: u64) -> JitterReport {
    let tau = DedupConfig::default().tau;
    let rejected = |e: String| JitterReport {
        accepted: false,
        error: Some(e),
        bound: None,
        min_similarity: None,
        mean_similarity: None,
        merged: 0,
        draws,
    };
    let Some(mut spec) = scenarios::by_name(scenario) else {
        return rejected(format!("unknown scenario `{scenario}`"));
    };
    spec.jitter.max_shift_px = Some(max_shift_px);
    spec.jitter.fraction = fraction;
    let sc = match Scenario::compile(spec, tau) {
        Ok(sc) => Arc::new(sc),
        Err(e) => return rejected(e.to_string()),
    };
    let Some(template) = sc.template_observation(state) else {
        return rejected(format!("unknown state `{state}`"));
    };
    let base = extract_signature(&template).expect("template renders");
    let mut env = SimEnv::new(Arc::clone(&sc), seed);
    let mut sims = Vec::with_capacity(draws);
    for i in 0..draws {
        let obs = env.reset_to(seed.wrapping_add(i as u64), state).expect("state exists");
        sims.push(sparse_similarity(&extract_signature(&obs).expect("observation renders"), &base));
    }
    let n = sims.len().max(1) as f64;
    JitterReport {
        accepted: true,
        error: None,
        bound: sc.jitter_bound(state),
        min_similarity: sims.iter().copied().reduce(f64::min),
        mean_similarity: (!sims.is_empty()).then(|| sims.iter().sum::<f64>() / n),
        merged: sims.iter().filter(|&&s| meets_threshold(s, tau)).count(),
        draws,
    }
}

#[derive(Serialize)]
pub struct EpisodeCurves {
    pub policy: String,
    pub frontier: Vec<f64>,
    pub delta_u: Vec<f64>,
    pub frontier_auc: f64,
    pub ambiguity_auc: f64,
    pub states: usize,
}

/// One episode from the scenario's initial state on an empty graph.
pub fn episode(scenario: &str, policy: &str, budget: usize, seed: u64) -> Result<EpisodeCurves, String> {
    let sc = load(scenario, DedupConfig::default().tau)?;
    let spec = PolicySpec::parse(policy, &PuctConfig::default()).map_err(|e| e.to_string())?;
    let world = SharedWorld::new(DedupConfig::default(), AmbiguityParams::default()).map_err(|e| e.to_string())?;
    let mut env = SimEnv::new(Arc::clone(&sc), seed);
    let ctx = EpisodeContext {
        worker: "demo".into(),
        episode: 0,
        seed,
        budget,
        policy: spec.clone(),
        scenario: sc.name().to_string(),
        scenario_hash: sc.hash().to_string(),
        config: serde_json::Value::Null,
    };
    let trace = run_episode(&mut env, &world, &ctx, None).map_err(|e| e.to_string())?;
    let frontier = frontier_curve_from_states(&[trace.state_sequence()]).map_err(|e| e.to_string())?;
    let delta_u = ambiguity_curve_from_values(&[trace.visit_ambiguity()]).map_err(|e| e.to_string())?;
    let states = world.graph.read().graph.node_count();
    Ok(EpisodeCurves {
        policy: spec.label,
        frontier_auc: auc(&frontier),
        ambiguity_auc: auc(&delta_u),
        frontier,
        delta_u,
        states,
    })
}

fn json<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("serializable")
}

#[wasm_bindgen]
pub fn scenario_names() -> String {
    json(&scenarios::NAMES)
}

/// Hidden state ids of a built-in scenario.
#[wasm_bindgen]
pub fn scenario_states(name: &str) -> Result<String, JsError> {
    let sc = load(name, DedupConfig::default().tau).map_err(|e| JsError::new(&e))?;
    let ids: Vec<&str> = sc.hidden_states().map(|h| h.id.as_str()).collect();
    Ok(json(&ids))
}

#[wasm_bindgen]
pub fn shrinkage_curve(dispersion: f64, kappa: f64, u0: f64, max_n: u32) -> Result<String, JsError> {
    shrinkage(dispersion, kappa, u0, max_n).map(|v| json(&v)).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn jitter_probe(scenario: &str, state: &str, max_shift_px: f64, fraction: f64, draws: u32, seed: u32) -> String {
    json(&jitter(scenario, state, max_shift_px, fraction, draws as usize, seed as u64))
}

#[wasm_bindgen]
pub fn episode_curves(scenario: &str, policy: &str, budget: u32, seed: u32) -> Result<String, JsError> {
    episode(scenario, policy, budget as usize, seed as u64)
        .map(|c| json(&c))
        .map_err(|e| JsError::new(&e))
}
