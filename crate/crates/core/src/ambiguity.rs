//! Matched-action outcome dispersion and the shrunken ambiguity score.
//!
//! For a state `s`, every signature executed from its cluster has an
//! empirical next-state distribution. Dispersion is the visit-weighted mean
//! of their normalized entropies:
//!
//! ```text
//! D(s) = Σ_σ w(s,σ) · H̄(P(s'|s,σ)),   w(s,σ) = n(s,σ) / n(s)
//! ρ(s) = n(s) / (n(s) + κ)
//! u(s) = ρ(s)·D(s) + (1 − ρ(s))·u0
//! ```

use std::collections::HashMap;
use std::path::Path;

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::state_graph::{StateGraph, StateId};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AmbiguityParams {
    /// Shrinkage pseudo-count.
    pub kappa: f64,
    /// Prior ambiguity for states without evidence.
    pub u0: f64,
}

impl AmbiguityParams {
    pub fn new(kappa: f64, u0: f64) -> Result<Self> {
        let p = Self { kappa, u0 };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.kappa > 0.0) || !self.kappa.is_finite() {
            return Err(Error::Config(format!("kappa must be positive, got {}", self.kappa)));
        }
        if !(0.0..=1.0).contains(&self.u0) {
            return Err(Error::Config(format!("u0 must lie in [0, 1], got {}", self.u0)));
        }
        Ok(())
    }
}

impl Default for AmbiguityParams {
    fn default() -> Self {
        Self { kappa: 5.0, u0: 0.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AmbiguityEstimate {
    pub dispersion: f64,
    pub evidence: u64,
    pub confidence: f64,
    pub score: f64,
}

impl AmbiguityEstimate {
    /// Applies the shrinkage to a dispersion measured over `evidence` samples.
    pub fn shrink(dispersion: f64, evidence: u64, params: &AmbiguityParams) -> Self {
        let n = evidence as f64;
        let confidence = n / (n + params.kappa);
        Self {
            dispersion,
            evidence,
            confidence,
            score: confidence * dispersion + (1.0 - confidence) * params.u0,
        }
    }

    /// Estimate for a state with no recorded evidence.
    pub fn prior(params: &AmbiguityParams) -> Self {
        Self::shrink(0.0, 0, params)
    }
}

/// Shannon entropy divided by `ln k`, where `k` is the number of outcomes with
/// positive probability. A single outcome has zero entropy.
pub fn normalized_entropy(p: &[f64]) -> Result<f64> {
    if p.is_empty() {
        return Err(Error::InvalidInput("entropy of an empty distribution".into()));
    }
    if p.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
        return Err(Error::InvalidInput("probabilities must be finite and non-negative".into()));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidInput(format!("probabilities sum to {total}, not 1")));
    }
    let support = p.iter().filter(|&&x| x > 0.0).count();
    if support <= 1 {
        return Ok(0.0);
    }
    let h: f64 = p.iter().filter(|&&x| x > 0.0).map(|&x| -x * x.ln()).sum();
    Ok((h / (support as f64).ln()).clamp(0.0, 1.0))
}

fn entropy_of_counts<'a>(counts: impl Iterator<Item = &'a u64>, total: u64) -> f64 {
    let n = total as f64;
    let mut support = 0usize;
    let mut h = 0.0;
    for &c in counts {
        if c > 0 {
            support += 1;
            let p = c as f64 / n;
            h -= p * p.ln();
        }
    }
    if support <= 1 {
        0.0
    } else {
        (h / (support as f64).ln()).clamp(0.0, 1.0)
    }
}

/// `(D(s), n(s))`. A state without evidence reports `(0, 0)`.
pub fn dispersion(graph: &StateGraph, s: &str) -> Result<(f64, u64)> {
    let node = graph
        .node(s)
        .ok_or_else(|| Error::InvalidInput(format!("unknown state {s}")))?;
    let n_s = node.total_visits();
    if n_s == 0 {
        return Ok((0.0, 0));
    }
    let total = n_s as f64;
    let d: f64 = node
        .actions()
        .values()
        .filter(|a| a.visits() > 0)
        .map(|a| (a.visits() as f64 / total) * entropy_of_counts(a.outcomes().values(), a.visits()))
        .sum();
    Ok((d.clamp(0.0, 1.0), n_s))
}

pub fn ambiguity_score(graph: &StateGraph, s: &str, params: &AmbiguityParams) -> Result<AmbiguityEstimate> {
    let (d, n) = dispersion(graph, s)?;
    Ok(AmbiguityEstimate::shrink(d, n, params))
}

/// Like [`ambiguity_score`], but a state absent from the graph gets the prior.
pub fn score_or_prior(graph: &StateGraph, s: &str, params: &AmbiguityParams) -> AmbiguityEstimate {
    if graph.contains_state(s) {
        ambiguity_score(graph, s, params).expect("state exists")
    } else {
        AmbiguityEstimate::prior(params)
    }
}

/// Per-state memo keyed on the node revision, so any new outgoing transition
/// from a state invalidates its entry.
#[derive(Debug, Default)]
pub struct AmbiguityCache {
    entries: Mutex<HashMap<StateId, (u64, AmbiguityEstimate)>>,
}

impl AmbiguityCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, graph: &StateGraph, s: &str, params: &AmbiguityParams) -> AmbiguityEstimate {
        let Some(node) = graph.node(s) else {
            return AmbiguityEstimate::prior(params);
        };
        let rev = node.revision();
        let mut entries = self.entries.lock();
        if let Some((r, est)) = entries.get(s) {
            if *r == rev {
                return *est;
            }
        }
        let est = ambiguity_score(graph, s, params).expect("state exists");
        entries.insert(s.to_string(), (rev, est));
        est
    }

    pub fn len(&self) -> usize {
        self.entries.lock().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmbiguityRow {
    pub state_id: StateId,
    pub n_s: u64,
    #[serde(rename = "D")]
    pub dispersion: f64,
    pub rho: f64,
    pub u: f64,
}

pub fn ambiguity_report(graph: &StateGraph, params: &AmbiguityParams) -> Vec<AmbiguityRow> {
    graph
        .nodes()
        .map(|(id, _)| {
            let est = ambiguity_score(graph, id, params).expect("state exists");
            AmbiguityRow {
                state_id: id.clone(),
                n_s: est.evidence,
                dispersion: est.dispersion,
                rho: est.confidence,
                u: est.score,
            }
        })
        .collect()
}

pub fn write_ambiguity_report(rows: &[AmbiguityRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    if rows.is_empty() {
        w.write_record(["state_id", "n_s", "D", "rho", "u"])?;
    }
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
