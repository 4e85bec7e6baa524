//! One-step PUCT exploration over the shared state graph.
//!
//! Each step observes the current screen, maps it to a deduplicated state,
//! scores the executable signatures with `Q + U`, executes the argmax, and
//! credits an immediate reward for new states, new edges and ambiguity
//! reduction. There are no rollouts; `Q` is the running mean of the rewards
//! credited to an arm.

use std::collections::{HashMap, HashSet, VecDeque};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::time::{Duration, Instant};

use parking_lot::RwLock;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::ambiguity::{AmbiguityCache, AmbiguityParams};
use crate::error::{Error, Result};
use crate::retrieval_index::{DedupConfig, RetrievalQuery, ScreenIndex};
use crate::rng::{derive_seed, rng_from_seed};
use crate::screen_model::{element_atoms, extract_signature, normalize_text, ScreenObservation, StructuralSignature};
use crate::state_graph::{ActionSignature, StateGraph, StateId};

/// Control label of elements that receive `type_text` instead of `click`.
pub const EDITABLE_LABEL: &str = "edit";
/// Number of ranked signatures that share the bulk of the heuristic prior.
pub const HEURISTIC_TOP_M: usize = 10;
/// Total mass left for signatures outside the heuristic top-m.
pub const HEURISTIC_FLOOR_MASS: f64 = 0.01;
/// Score bonus for controls that usually drive navigation.
pub const CONTROL_BONUS: f64 = 0.5;
/// Window of recent states penalized by the loop-avoiding baseline.
pub const LOOP_WINDOW: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PriorKind {
    #[serde(rename = "uniform_prior@1")]
    Uniform,
    #[serde(rename = "heuristic@1")]
    Heuristic,
}

impl PriorKind {
    pub fn label(&self) -> &'static str {
        match self {
            PriorKind::Uniform => "uniform_prior@1",
            PriorKind::Heuristic => "heuristic@1",
        }
    }
}

impl std::str::FromStr for PriorKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform_prior@1" | "uniform" => Ok(PriorKind::Uniform),
            "heuristic@1" | "heuristic" => Ok(PriorKind::Heuristic),
            _ => Err(Error::Config(format!("unknown prior `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PuctConfig {
    pub c_puct: f64,
    pub lambda_state: f64,
    pub lambda_edge: f64,
    pub lambda_amb: f64,
    pub prior_kind: PriorKind,
    /// Kept for configuration compatibility; backups are undiscounted.
    pub gamma: f64,
}

impl Default for PuctConfig {
    fn default() -> Self {
        Self {
            c_puct: 1.25,
            lambda_state: 1.0,
            lambda_edge: 0.5,
            lambda_amb: 1.0,
            prior_kind: PriorKind::Uniform,
            gamma: 1.0,
        }
    }
}

impl PuctConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c_puct > 0.0) || !self.c_puct.is_finite() {
            return Err(Error::Config(format!("c_puct must be positive, got {}", self.c_puct)));
        }
        for (name, v) in [
            ("lambda_state", self.lambda_state),
            ("lambda_edge", self.lambda_edge),
            ("lambda_amb", self.lambda_amb),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be non-negative, got {v}")));
            }
        }
        if self.gamma != 1.0 {
            return Err(Error::Config(format!("gamma is fixed at 1.0, got {}", self.gamma)));
        }
        Ok(())
    }
}

/// Visit count and running-mean reward of one `(s, σ)` arm.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ArmStats {
    pub n: u64,
    pub q: f64,
}

/// `Q`/`N` per state and signature.
#[derive(Debug, Clone, Default)]
pub struct ActionStats {
    arms: HashMap<StateId, HashMap<ActionSignature, ArmStats>>,
}

impl ActionStats {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, s: &str, sig: &ActionSignature) -> ArmStats {
        self.arms.get(s).and_then(|m| m.get(sig)).copied().unwrap_or_default()
    }

    pub fn arms_for(&self, s: &str, sigs: &[ActionSignature]) -> Vec<ArmStats> {
        match self.arms.get(s) {
            Some(m) => sigs.iter().map(|g| m.get(g).copied().unwrap_or_default()).collect(),
            None => vec![ArmStats::default(); sigs.len()],
        }
    }

    pub fn backup(&mut self, s: &str, sig: &ActionSignature, r: f64) {
        let arm = self
            .arms
            .entry(s.to_string())
            .or_default()
            .entry(sig.clone())
            .or_default();
        backup(arm, r);
    }

    pub fn iter(&self) -> impl Iterator<Item = (&StateId, &ActionSignature, &ArmStats)> {
        self.arms.iter().flat_map(|(s, m)| m.iter().map(move |(g, a)| (s, g, a)))
    }
}

/// Running-mean update: `N += 1; Q += (r − Q) / N`.
pub fn backup(arm: &mut ArmStats, r: f64) {
    arm.n += 1;
    arm.q += (r - arm.q) / arm.n as f64;
}

fn bonus_label(label: &str) -> bool {
    let squashed: String = normalize_text(label)
        .chars()
        .filter(|c| !matches!(c, ' ' | '_' | '-'))
        .collect();
    matches!(squashed.as_str(), "button" | "menuitem" | "edit")
}

/// Executable signatures of a screen: one click per executable element and,
/// for editable elements, one `type_text` per payload. Sorted by their
/// serialized form, duplicates removed.
pub fn enumerate_signatures(obs: &ScreenObservation, payloads: &[String]) -> Result<Vec<ActionSignature>> {
    let mut out = Vec::new();
    for el in obs.elements.iter().filter(|e| e.executable) {
        let atoms = element_atoms(el, obs.screen_width, obs.screen_height)?;
        if normalize_text(&el.control_label) == EDITABLE_LABEL {
            for p in payloads {
                out.push(ActionSignature::type_text(atoms.control.clone(), p.clone())?);
            }
        } else {
            out.push(ActionSignature::click(atoms.control)?);
        }
    }
    let mut keyed: Vec<(String, ActionSignature)> = out.into_iter().map(|s| (s.to_string(), s)).collect();
    keyed.sort_by(|a, b| a.0.cmp(&b.0));
    keyed.dedup_by(|a, b| a.0 == b.0);
    Ok(keyed.into_iter().map(|(_, s)| s).collect())
}

/// Structural atoms of the first executable element targeted by `sig`.
pub fn target_tokens(obs: &ScreenObservation, sig: &ActionSignature) -> Vec<String> {
    obs.elements
        .iter()
        .filter(|e| e.executable)
        .find_map(|el| {
            let atoms = element_atoms(el, obs.screen_width, obs.screen_height).ok()?;
            (atoms.control == sig.target_token).then(|| {
                let mut v = vec![atoms.control];
                v.extend(atoms.text);
                v
            })
        })
        .unwrap_or_else(|| vec![sig.target_token.clone()])
}

fn target_label(obs: &ScreenObservation, sig: &ActionSignature) -> Option<String> {
    obs.elements.iter().filter(|e| e.executable).find_map(|el| {
        let atoms = element_atoms(el, obs.screen_width, obs.screen_height).ok()?;
        (atoms.control == sig.target_token).then(|| el.control_label.clone())
    })
}

/// Count of the target element's atoms absent from `vocab`.
pub fn novelty(obs: &ScreenObservation, sig: &ActionSignature, vocab: &HashSet<String>) -> usize {
    target_tokens(obs, sig).iter().filter(|t| !vocab.contains(*t)).count()
}

/// Heuristic score: novel atoms plus a bonus for navigation controls.
pub fn heuristic_score(obs: &ScreenObservation, sig: &ActionSignature, vocab: &HashSet<String>) -> f64 {
    let bonus = target_label(obs, sig).is_some_and(|l| bonus_label(&l));
    novelty(obs, sig, vocab) as f64 + if bonus { CONTROL_BONUS } else { 0.0 }
}

/// Proposal distribution over `sigs`.
pub fn prior(
    obs: &ScreenObservation,
    sigs: &[ActionSignature],
    kind: PriorKind,
    vocab: &HashSet<String>,
) -> Result<Vec<f64>> {
    if sigs.is_empty() {
        return Err(Error::InvalidInput("prior over an empty signature set".into()));
    }
    let n = sigs.len();
    match kind {
        PriorKind::Uniform => Ok(vec![1.0 / n as f64; n]),
        PriorKind::Heuristic => {
            let mut order: Vec<(f64, String, usize)> = sigs
                .iter()
                .enumerate()
                .map(|(i, s)| (heuristic_score(obs, s, vocab), s.to_string(), i))
                .collect();
            order.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(&b.1)));
            let m = HEURISTIC_TOP_M.min(n);
            let harmonic: f64 = (1..=m).map(|r| 1.0 / r as f64).sum();
            let (head, tail_each) = if n > m {
                (1.0 - HEURISTIC_FLOOR_MASS, HEURISTIC_FLOOR_MASS / (n - m) as f64)
            } else {
                (1.0, 0.0)
            };
            let mut p = vec![0.0; n];
            for (rank, (_, _, i)) in order.iter().enumerate() {
                p[*i] = if rank < m {
                    head * (1.0 / (rank + 1) as f64) / harmonic
                } else {
                    tail_each
                };
            }
            let total: f64 = p.iter().sum();
            for x in &mut p {
                *x /= total;
            }
            Ok(p)
        }
    }
}

/// Exploration bonus `c · P · sqrt(ΣN) / (1 + N)`.
pub fn exploration_bonus(c_puct: f64, prior: f64, total_visits: u64, n: u64) -> f64 {
    c_puct * prior * (total_visits as f64).sqrt() / (1.0 + n as f64)
}

/// Index of `argmax Q + U`. Ties go to the higher prior, then to the
/// lexicographically smaller serialized signature.
pub fn select_action(sigs: &[ActionSignature], arms: &[ArmStats], prior: &[f64], cfg: &PuctConfig) -> usize {
    assert!(!sigs.is_empty(), "select_action needs at least one signature");
    assert_eq!(sigs.len(), arms.len());
    assert_eq!(sigs.len(), prior.len());
    let total: u64 = arms.iter().map(|a| a.n).sum();
    let value = |i: usize| arms[i].q + exploration_bonus(cfg.c_puct, prior[i], total, arms[i].n);
    let mut best = 0;
    let mut best_v = value(0);
    for i in 1..sigs.len() {
        let v = value(i);
        let better = v > best_v
            || (v == best_v
                && (prior[i] > prior[best]
                    || (prior[i] == prior[best] && sigs[i].to_string() < sigs[best].to_string())));
        if better {
            best = i;
            best_v = v;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub state: f64,
    pub edge: f64,
    pub ambiguity: f64,
    pub total: f64,
}

/// `λ_state·1[new state] + λ_edge·1[new edge] + λ_amb·max(u(s) − u(s'), 0)`,
/// with both ambiguities taken on the graph before the transition.
pub fn immediate_reward(new_state: bool, new_edge: bool, u_from: f64, u_to: f64, cfg: &PuctConfig) -> RewardBreakdown {
    let state = if new_state { cfg.lambda_state } else { 0.0 };
    let edge = if new_edge { cfg.lambda_edge } else { 0.0 };
    let ambiguity = cfg.lambda_amb * (u_from - u_to).max(0.0);
    RewardBreakdown {
        state,
        edge,
        ambiguity,
        total: state + edge + ambiguity,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Puct,
    ReactiveRandom,
    ReactiveGreedyNovelty,
    ReactiveLoopAvoid,
}

impl std::str::FromStr for PolicyKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "puct" => Ok(PolicyKind::Puct),
            "reactive_random" => Ok(PolicyKind::ReactiveRandom),
            "reactive_greedy_novelty" => Ok(PolicyKind::ReactiveGreedyNovelty),
            "reactive_loop_avoid" => Ok(PolicyKind::ReactiveLoopAvoid),
            _ => Err(Error::Config(format!("unknown policy `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySpec {
    pub kind: PolicyKind,
    #[serde(default)]
    pub config: PuctConfig,
    pub label: String,
}

impl PolicySpec {
    pub fn puct(config: PuctConfig) -> Self {
        let label = format!("puct/{}", config.prior_kind.label());
        Self { kind: PolicyKind::Puct, config, label }
    }

    pub fn baseline(kind: PolicyKind) -> Self {
        let label = serde_json::to_value(kind)
            .ok()
            .and_then(|v| v.as_str().map(str::to_string))
            .unwrap_or_default();
        Self { kind, config: PuctConfig::default(), label }
    }

    /// Parses `puct`, `puct:heuristic@1`, or a baseline name.
    pub fn parse(s: &str, base: &PuctConfig) -> Result<Self> {
        let (name, prior) = match s.split_once(':') {
            Some((n, p)) => (n, Some(p.parse::<PriorKind>()?)),
            None => (s, None),
        };
        let kind: PolicyKind = name.parse()?;
        if kind == PolicyKind::Puct {
            let mut cfg = *base;
            if let Some(p) = prior {
                cfg.prior_kind = p;
            }
            Ok(Self::puct(cfg))
        } else if prior.is_some() {
            Err(Error::Config(format!("policy `{name}` takes no prior")))
        } else {
            Ok(Self { config: *base, ..Self::baseline(kind) })
        }
    }
}

/// The environment interface the explorer drives.
pub trait Environment {
    fn observation(&self) -> &ScreenObservation;
    fn step(&mut self, sig: &ActionSignature) -> Result<ScreenObservation>;
    /// Whether the current screen belongs to another application.
    fn is_external(&self) -> bool;
    fn payloads(&self) -> &[String];
}

#[derive(Debug, Default)]
pub struct GraphState {
    pub graph: StateGraph,
    pub stats: ActionStats,
}

/// State shared by all workers of one run.
#[derive(Debug)]
pub struct SharedWorld {
    pub index: RwLock<ScreenIndex>,
    pub graph: RwLock<GraphState>,
    pub vocab: RwLock<HashSet<String>>,
    pub cache: AmbiguityCache,
    pub params: AmbiguityParams,
}

impl SharedWorld {
    pub fn new(dedup: DedupConfig, params: AmbiguityParams) -> Result<Self> {
        params.validate()?;
        Ok(Self::with_index(ScreenIndex::new(dedup)?, params))
    }

    pub fn with_index(index: ScreenIndex, params: AmbiguityParams) -> Self {
        Self {
            index: RwLock::new(index),
            graph: RwLock::new(GraphState::default()),
            vocab: RwLock::new(HashSet::new()),
            cache: AmbiguityCache::new(),
            params,
        }
    }

    /// Maps an observation to its deduplicated state, indexing it.
    pub fn dedup(&self, obs: &ScreenObservation) -> Result<(StructuralSignature, StateId, f64)> {
        let sig = extract_signature(obs)?;
        let mut index = self.index.write();
        let q = RetrievalQuery::new(
            sig.clone(),
            obs.rollout_group.clone(),
            obs.display_mode,
            obs.text_size_bin,
            index.config().top_k,
        );
        let d = index.observe(&q, &obs.rollout_group)?;
        Ok((sig, d.state_id, d.best_similarity))
    }

    pub fn ambiguity(&self, graph: &StateGraph, s: &str) -> f64 {
        self.cache.get(graph, s, &self.params).score
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub worker: String,
    pub episode: usize,
    pub seed: u64,
    pub policy: PolicySpec,
    pub budget: usize,
    pub scenario: String,
    pub scenario_hash: String,
    pub config: serde_json::Value,
    pub start_state: StateId,
    pub start_observation: String,
    pub start_new_state: bool,
    pub start_external: bool,
    pub start_u: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub state_id: StateId,
    pub signature: ActionSignature,
    pub to_state_id: StateId,
    pub to_observation: String,
    pub similarity: f64,
    pub candidates: usize,
    pub prior: f64,
    pub reward: RewardBreakdown,
    pub u_before_from: f64,
    pub u_before_to: f64,
    pub u_after_from: f64,
    pub u_after_to: f64,
    pub new_state: bool,
    pub new_edge: bool,
    pub external: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTrace {
    pub header: TraceHeader,
    pub steps: Vec<StepRecord>,
    /// Set when the environment faulted; the steps before it are kept.
    pub aborted: Option<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum TraceLine {
    Header(TraceHeader),
    Step(StepRecord),
    End { actions: usize, aborted: Option<String> },
}

impl EpisodeTrace {
    /// State ids `s_0, s_1, …, s_T` of the episode.
    pub fn state_sequence(&self) -> Vec<&str> {
        std::iter::once(self.header.start_state.as_str())
            .chain(self.steps.iter().map(|s| s.to_state_id.as_str()))
            .collect()
    }

    /// `u(s_0), u(s_1), …` as measured right after each visit.
    pub fn visit_ambiguity(&self) -> Vec<f64> {
        std::iter::once(self.header.start_u)
            .chain(self.steps.iter().map(|s| s.u_after_to))
            .collect()
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        let mut line = |l: &TraceLine| -> Result<()> {
            serde_json::to_writer(&mut w, l)?;
            w.write_all(b"\n").map_err(|e| Error::io("<trace>", e))
        };
        line(&TraceLine::Header(self.header.clone()))?;
        for s in &self.steps {
            line(&TraceLine::Step(s.clone()))?;
        }
        line(&TraceLine::End {
            actions: self.steps.len(),
            aborted: self.aborted.clone(),
        })
    }
}

pub fn write_traces(traces: &[EpisodeTrace], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for t in traces {
        t.write_jsonl(&mut w)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a JSON-lines trace file holding any number of episodes.
pub fn read_traces(path: &Path) -> Result<Vec<EpisodeTrace>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let perr = |line: usize, msg: String| Error::Parse { path: path.to_path_buf(), line, msg };
    let mut out = Vec::new();
    let mut cur: Option<EpisodeTrace> = None;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: TraceLine = serde_json::from_str(&line).map_err(|e| perr(i + 1, e.to_string()))?;
        match parsed {
            TraceLine::Header(h) => {
                if cur.is_some() {
                    return Err(perr(i + 1, "header before the previous episode ended".into()));
                }
                cur = Some(EpisodeTrace { header: h, steps: Vec::new(), aborted: None });
            }
            TraceLine::Step(s) => match cur.as_mut() {
                Some(t) => t.steps.push(s),
                None => return Err(perr(i + 1, "step outside an episode".into())),
            },
            TraceLine::End { actions, aborted } => {
                let mut t = cur.take().ok_or_else(|| perr(i + 1, "end outside an episode".into()))?;
                if t.steps.len() != actions {
                    return Err(perr(i + 1, format!("episode declares {actions} actions, has {}", t.steps.len())));
                }
                t.aborted = aborted;
                out.push(t);
            }
        }
    }
    if cur.is_some() {
        return Err(perr(0, "truncated trace: missing end record".into()));
    }
    Ok(out)
}

/// Everything about an episode that is not the environment or the world.
#[derive(Debug, Clone)]
pub struct EpisodeContext {
    pub worker: String,
    pub episode: usize,
    pub seed: u64,
    pub budget: usize,
    pub policy: PolicySpec,
    pub scenario: String,
    pub scenario_hash: String,
    pub config: serde_json::Value,
}

struct PolicyState {
    rng: crate::rng::SimRng,
    recent: VecDeque<StateId>,
    last_outcome: HashMap<(StateId, ActionSignature), StateId>,
}

fn choose(
    spec: &PolicySpec,
    st: &mut PolicyState,
    world: &SharedWorld,
    obs: &ScreenObservation,
    s: &str,
    sigs: &[ActionSignature],
) -> Result<(usize, f64)> {
    match spec.kind {
        PolicyKind::Puct => {
            let p = {
                let vocab = world.vocab.read();
                prior(obs, sigs, spec.config.prior_kind, &vocab)?
            };
            let arms = world.graph.read().stats.arms_for(s, sigs);
            let i = select_action(sigs, &arms, &p, &spec.config);
            Ok((i, p[i]))
        }
        PolicyKind::ReactiveRandom => {
            let i = st.rng.random_range(0..sigs.len());
            Ok((i, 1.0 / sigs.len() as f64))
        }
        PolicyKind::ReactiveGreedyNovelty | PolicyKind::ReactiveLoopAvoid => {
            let vocab = world.vocab.read();
            let scores: Vec<f64> = sigs
                .iter()
                .map(|g| {
                    let mut v = novelty(obs, g, &vocab) as f64;
                    if spec.kind == PolicyKind::ReactiveLoopAvoid {
                        let looped = st
                            .last_outcome
                            .get(&(s.to_string(), g.clone()))
                            .is_some_and(|to| st.recent.contains(to));
                        if looped {
                            v -= 1.0;
                        }
                    }
                    v
                })
                .collect();
            let best = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let tied: Vec<usize> = (0..sigs.len()).filter(|&i| scores[i] == best).collect();
            let i = tied[st.rng.random_range(0..tied.len())];
            Ok((i, 1.0 / tied.len() as f64))
        }
    }
}

/// Runs up to `ctx.budget` actions from the environment's current screen.
/// When `latency` is given, the time spent enumerating, scoring and
/// selecting each action is appended to it.
pub fn run_episode(
    env: &mut dyn Environment,
    world: &SharedWorld,
    ctx: &EpisodeContext,
    mut latency: Option<&mut Vec<Duration>>,
) -> Result<EpisodeTrace> {
    ctx.policy.config.validate()?;
    let mut pstate = PolicyState {
        rng: rng_from_seed(derive_seed(ctx.seed, &["policy"])),
        recent: VecDeque::new(),
        last_outcome: HashMap::new(),
    };
    let start_obs = env.observation().clone();
    let (start_sig, s0, _) = world.dedup(&start_obs)?;
    let start_external = env.is_external();
    let (start_new_state, start_u) = {
        let mut g = world.graph.write();
        let new = g.graph.ensure_state(&s0, start_external);
        g.graph.add_member(&s0, &start_sig.canonical_id)?;
        (new, world.ambiguity(&g.graph, &s0))
    };
    let mut trace = EpisodeTrace {
        header: TraceHeader {
            worker: ctx.worker.clone(),
            episode: ctx.episode,
            seed: ctx.seed,
            policy: ctx.policy.clone(),
            budget: ctx.budget,
            scenario: ctx.scenario.clone(),
            scenario_hash: ctx.scenario_hash.clone(),
            config: ctx.config.clone(),
            start_state: s0.clone(),
            start_observation: start_sig.canonical_id.clone(),
            start_new_state,
            start_external,
            start_u,
        },
        steps: Vec::new(),
        aborted: None,
    };
    let mut s = s0;
    let mut obs = start_obs;
    pstate.recent.push_back(s.clone());
    for step in 0..ctx.budget {
        // no clock on targets without one unless timing was asked for
        let t0 = latency.is_some().then(Instant::now);
        let sigs = enumerate_signatures(&obs, env.payloads())?;
        if sigs.is_empty() {
            break;
        }
        let (choice, p) = choose(&ctx.policy, &mut pstate, world, &obs, &s, &sigs)?;
        if let (Some(l), Some(t0)) = (latency.as_deref_mut(), t0) {
            l.push(t0.elapsed());
        }
        let sig = sigs[choice].clone();
        let next = match env.step(&sig) {
            Ok(o) => o,
            Err(e) => {
                trace.aborted = Some(Error::EnvFault { step, msg: e.to_string() }.to_string());
                break;
            }
        };
        let (next_sig, s_next, similarity) = match world.dedup(&next) {
            Ok(x) => x,
            Err(e) => {
                trace.aborted = Some(Error::EnvFault { step, msg: e.to_string() }.to_string());
                break;
            }
        };
        let external = env.is_external();
        let record = {
            let mut g = world.graph.write();
            let u_before_from = world.ambiguity(&g.graph, &s);
            let u_before_to = world.ambiguity(&g.graph, &s_next);
            let rec = g
                .graph
                .record_transition(&s, &sig, &s_next, &ctx.worker, step, external)?;
            g.graph.add_member(&s_next, &next_sig.canonical_id)?;
            let reward = immediate_reward(rec.was_new_state, rec.was_new_edge, u_before_from, u_before_to, &ctx.policy.config);
            g.stats.backup(&s, &sig, reward.total);
            StepRecord {
                step,
                state_id: s.clone(),
                signature: sig.clone(),
                to_state_id: s_next.clone(),
                to_observation: next_sig.canonical_id.clone(),
                similarity,
                candidates: sigs.len(),
                prior: p,
                reward,
                u_before_from,
                u_before_to,
                u_after_from: world.ambiguity(&g.graph, &s),
                u_after_to: world.ambiguity(&g.graph, &s_next),
                new_state: rec.was_new_state,
                new_edge: rec.was_new_edge,
                external,
            }
        };
        world.vocab.write().extend(target_tokens(&obs, &sig));
        pstate.last_outcome.insert((s.clone(), sig), s_next.clone());
        pstate.recent.push_back(s_next.clone());
        if pstate.recent.len() > LOOP_WINDOW {
            pstate.recent.pop_front();
        }
        trace.steps.push(record);
        s = s_next;
        obs = next;
    }
    Ok(trace)
}
