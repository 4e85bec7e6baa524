//! The shared deduplicated state graph.
//!
//! Nodes are deduplicated state IDs; each node keeps its outgoing action
//! statistics as `signature -> {outcome state -> count}` so that the visit
//! count `N(s, σ)` is always the sum of its outcome counts.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::screen_model::{parse_atom, AtomKind};

pub type StateId = String;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    Click,
    TypeText,
}

impl fmt::Display for ActionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ActionKind::Click => "click",
            ActionKind::TypeText => "type_text",
        })
    }
}

/// What was executed: the kind, the structural atom of the target element
/// and, for typing, the typed text. Ordering is lexicographic over
/// `(kind, target_token, payload)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ActionSignature {
    pub kind: ActionKind,
    pub target_token: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload: Option<String>,
}

impl ActionSignature {
    pub fn click(target_token: impl Into<String>) -> Result<Self> {
        let sig = Self {
            kind: ActionKind::Click,
            target_token: target_token.into(),
            payload: None,
        };
        sig.validate()?;
        Ok(sig)
    }

    pub fn type_text(target_token: impl Into<String>, payload: impl Into<String>) -> Result<Self> {
        let sig = Self {
            kind: ActionKind::TypeText,
            target_token: target_token.into(),
            payload: Some(payload.into()),
        };
        sig.validate()?;
        Ok(sig)
    }

    pub fn validate(&self) -> Result<()> {
        match parse_atom(&self.target_token) {
            Some(a) if a.kind == AtomKind::ControlType => {}
            _ => {
                return Err(Error::InvalidInput(format!(
                    "action target `{}` is not a control-type atom",
                    self.target_token
                )))
            }
        }
        match (self.kind, &self.payload) {
            (ActionKind::Click, None) | (ActionKind::TypeText, Some(_)) => Ok(()),
            _ => Err(Error::InvalidInput(format!(
                "payload must be present exactly for type_text ({self})"
            ))),
        }
    }
}

impl fmt::Display for ActionSignature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.payload {
            Some(p) => write!(f, "{} {} {:?}", self.kind, self.target_token, p),
            None => write!(f, "{} {}", self.kind, self.target_token),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionRecord {
    pub from_state: StateId,
    pub signature: ActionSignature,
    pub to_state: StateId,
    pub worker_id: String,
    pub step_index: usize,
    pub was_new_state: bool,
    pub was_new_edge: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ActionEntry {
    visits: u64,
    outcomes: BTreeMap<StateId, u64>,
}

impl ActionEntry {
    pub fn visits(&self) -> u64 {
        self.visits
    }

    pub fn outcomes(&self) -> &BTreeMap<StateId, u64> {
        &self.outcomes
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct StateNode {
    external: bool,
    members: BTreeSet<String>,
    actions: BTreeMap<ActionSignature, ActionEntry>,
    revision: u64,
}

impl StateNode {
    pub fn is_external(&self) -> bool {
        self.external
    }

    /// Observation IDs merged into this state.
    pub fn members(&self) -> &BTreeSet<String> {
        &self.members
    }

    pub fn actions(&self) -> &BTreeMap<ActionSignature, ActionEntry> {
        &self.actions
    }

    /// Bumped on every outgoing transition; used for cache invalidation.
    pub fn revision(&self) -> u64 {
        self.revision
    }

    pub fn total_visits(&self) -> u64 {
        self.actions.values().map(|a| a.visits).sum()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct StateGraph {
    nodes: BTreeMap<StateId, StateNode>,
    edge_count: usize,
}

impl StateGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Number of distinct `(s, σ, s')` triples.
    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn external_count(&self) -> usize {
        self.nodes.values().filter(|n| n.external).count()
    }

    pub fn contains_state(&self, s: &str) -> bool {
        self.nodes.contains_key(s)
    }

    pub fn node(&self, s: &str) -> Option<&StateNode> {
        self.nodes.get(s)
    }

    pub fn nodes(&self) -> impl Iterator<Item = (&StateId, &StateNode)> {
        self.nodes.iter()
    }

    pub fn contains_edge(&self, from: &str, sig: &ActionSignature, to: &str) -> bool {
        self.nodes
            .get(from)
            .and_then(|n| n.actions.get(sig))
            .is_some_and(|a| a.outcomes.contains_key(to))
    }

    /// `N(s, σ)`; zero for unknown states or signatures.
    pub fn action_visits(&self, s: &str, sig: &ActionSignature) -> u64 {
        self.nodes
            .get(s)
            .and_then(|n| n.actions.get(sig))
            .map_or(0, |a| a.visits)
    }

    /// Inserts a state if absent. Returns true for the caller that inserted it.
    pub fn ensure_state(&mut self, s: &str, external: bool) -> bool {
        if self.nodes.contains_key(s) {
            return false;
        }
        self.nodes.insert(
            s.to_string(),
            StateNode {
                external,
                ..Default::default()
            },
        );
        true
    }

    pub fn add_member(&mut self, s: &str, observation_id: &str) -> Result<bool> {
        let node = self
            .nodes
            .get_mut(s)
            .ok_or_else(|| Error::Integrity(format!("unknown state {s}")))?;
        Ok(node.members.insert(observation_id.to_string()))
    }

    /// Read-only frontier test for a candidate transition.
    pub fn frontier_check(&self, from: &str, sig: &ActionSignature, to: &str) -> (bool, bool) {
        (!self.contains_state(to), !self.contains_edge(from, sig, to))
    }

    /// Records one executed transition. The returned flags describe the
    /// graph as it was immediately before this call.
    pub fn record_transition(
        &mut self,
        from: &str,
        sig: &ActionSignature,
        to: &str,
        worker: &str,
        step_index: usize,
        to_external: bool,
    ) -> Result<TransitionRecord> {
        if !self.nodes.contains_key(from) {
            return Err(Error::Integrity(format!("transition from unknown state {from}")));
        }
        let was_new_state = self.ensure_state(to, to_external);
        let node = self.nodes.get_mut(from).expect("checked above");
        let entry = node.actions.entry(sig.clone()).or_default();
        let count = entry.outcomes.entry(to.to_string()).or_insert(0);
        let was_new_edge = *count == 0;
        *count += 1;
        entry.visits += 1;
        node.revision += 1;
        if was_new_edge {
            self.edge_count += 1;
        }
        Ok(TransitionRecord {
            from_state: from.to_string(),
            signature: sig.clone(),
            to_state: to.to_string(),
            worker_id: worker.to_string(),
            step_index,
            was_new_state,
            was_new_edge,
        })
    }

    /// Empirical next-state distribution `P(s' | s, σ)`.
    pub fn outcome_distribution(&self, s: &str, sig: &ActionSignature) -> Result<Vec<(StateId, f64)>> {
        let entry = self
            .nodes
            .get(s)
            .and_then(|n| n.actions.get(sig))
            .filter(|a| a.visits > 0)
            .ok_or_else(|| Error::NoEvidence {
                state: s.to_string(),
                signature: sig.to_string(),
            })?;
        let n = entry.visits as f64;
        Ok(entry
            .outcomes
            .iter()
            .map(|(to, &c)| (to.clone(), c as f64 / n))
            .collect())
    }

    /// Verifies `N(s, σ) = Σ_s' count(s, σ, s')`, edge endpoints, and the
    /// cached edge count.
    pub fn check_consistency(&self) -> Result<()> {
        let mut edges = 0;
        for (s, node) in &self.nodes {
            for (sig, entry) in &node.actions {
                let sum: u64 = entry.outcomes.values().sum();
                if sum != entry.visits {
                    return Err(Error::Integrity(format!(
                        "N({s}, {sig}) = {} but outcome counts sum to {sum}",
                        entry.visits
                    )));
                }
                for (to, &c) in &entry.outcomes {
                    if c == 0 {
                        return Err(Error::Integrity(format!("zero-count edge {s} -> {to}")));
                    }
                    if !self.nodes.contains_key(to) {
                        return Err(Error::Integrity(format!("edge endpoint {to} is not a node")));
                    }
                    edges += 1;
                }
            }
        }
        if edges != self.edge_count {
            return Err(Error::Integrity(format!(
                "edge count {} disagrees with {edges} stored edges",
                self.edge_count
            )));
        }
        Ok(())
    }

    pub fn export(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let member_count = self.nodes.values().map(|n| n.members.len()).sum();
        let mut lines = vec![GraphLine::Header {
            format: GRAPH_FORMAT.into(),
            version: 1,
            node_count: self.nodes.len(),
            edge_count: self.edge_count,
            member_count,
        }];
        for (id, node) in &self.nodes {
            lines.push(GraphLine::Node { id: id.clone(), external: node.external });
        }
        for (id, node) in &self.nodes {
            for (sig, entry) in &node.actions {
                for (to, &count) in &entry.outcomes {
                    lines.push(GraphLine::Edge {
                        from: id.clone(),
                        signature: sig.clone(),
                        to: to.clone(),
                        count,
                    });
                }
            }
        }
        for (id, node) in &self.nodes {
            for m in &node.members {
                lines.push(GraphLine::Member { state: id.clone(), observation: m.clone() });
            }
        }
        for line in lines {
            serde_json::to_writer(&mut w, &line)?;
            w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Loads a graph file. Repeated edge lines add their counts.
    pub fn import(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut nodes: Vec<(String, bool)> = Vec::new();
        let mut edges: Vec<(usize, String, ActionSignature, String, u64)> = Vec::new();
        let mut members: Vec<(usize, String, String)> = Vec::new();
        let mut seen_header = false;
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let lineno = i + 1;
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let parse_err = |msg: String| Error::Parse { path: path.to_path_buf(), line: lineno, msg };
            let parsed: GraphLine = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
            match parsed {
                GraphLine::Header { format, version, .. } => {
                    if seen_header {
                        return Err(parse_err("duplicate header".into()));
                    }
                    if format != GRAPH_FORMAT || version != 1 {
                        return Err(parse_err(format!("unsupported format {format} v{version}")));
                    }
                    seen_header = true;
                }
                _ if !seen_header => return Err(parse_err("missing header line".into())),
                GraphLine::Node { id, external } => nodes.push((id, external)),
                GraphLine::Edge { from, signature, to, count } => {
                    signature.validate().map_err(|e| parse_err(e.to_string()))?;
                    edges.push((lineno, from, signature, to, count));
                }
                GraphLine::Member { state, observation } => members.push((lineno, state, observation)),
            }
        }
        if !seen_header {
            return Err(Error::Parse { path: path.to_path_buf(), line: 1, msg: "missing header line".into() });
        }
        let mut g = StateGraph::new();
        for (id, external) in nodes {
            g.ensure_state(&id, external);
        }
        for (lineno, from, sig, to, count) in edges {
            let err = |msg: String| Error::Parse { path: path.to_path_buf(), line: lineno, msg };
            if count == 0 {
                return Err(err("edge count must be positive".into()));
            }
            if !g.contains_state(&to) {
                return Err(err(format!("edge target {to} is not a declared node")));
            }
            let node = g.nodes.get_mut(&from).ok_or_else(|| err(format!("edge source {from} is not a declared node")))?;
            let entry = node.actions.entry(sig).or_default();
            let c = entry.outcomes.entry(to).or_insert(0);
            if *c == 0 {
                g.edge_count += 1;
            }
            *c += count;
            entry.visits += count;
            node.revision += count;
        }
        for (lineno, state, obs) in members {
            g.add_member(&state, &obs).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: lineno,
                msg: e.to_string(),
            })?;
        }
        Ok(g)
    }
}

const GRAPH_FORMAT: &str = "screensearch-graph";

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum GraphLine {
    Header {
        format: String,
        version: u32,
        node_count: usize,
        edge_count: usize,
        member_count: usize,
    },
    Node {
        id: StateId,
        #[serde(default)]
        external: bool,
    },
    Edge {
        from: StateId,
        signature: ActionSignature,
        to: StateId,
        count: u64,
    },
    Member {
        state: StateId,
        observation: String,
    },
}
