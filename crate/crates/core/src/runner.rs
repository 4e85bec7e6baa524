//! Run orchestration: configuration, multi-worker exploration, the prior
//! ablation and the latency profile.

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::ambiguity::AmbiguityParams;
use crate::error::{Error, Result};
use crate::eval_harness::discovery_rate;
use crate::explorer::{
    run_episode, write_traces, EpisodeContext, EpisodeTrace, PolicySpec, PriorKind, PuctConfig, SharedWorld,
};
use crate::gui_sim::{SimEnv, StartSnapshot, VisitPath};
use crate::retrieval_index::DedupConfig;
use crate::rng::{derive_seed, rng_from_seed};
use crate::screen_model::StructuralSignature;
use crate::state_graph::ActionSignature;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: PathBuf,
    pub workers: usize,
    /// Actions per episode.
    pub budget: usize,
    /// Total episodes across all workers.
    pub episodes: usize,
    pub puct: PuctConfig,
    pub ambiguity: AmbiguityParams,
    pub dedup: DedupConfig,
    pub seed: u64,
    pub output: PathBuf,
    /// Path length used for the distinct-trajectory count.
    pub trajectory_length: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            scenario: PathBuf::from("scenarios/reference_notepad.json"),
            workers: 1,
            budget: 50,
            episodes: 1,
            puct: PuctConfig::default(),
            ambiguity: AmbiguityParams::default(),
            dedup: DedupConfig::default(),
            seed: 0,
            output: PathBuf::from("out"),
            trajectory_length: 3,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Every problem with the configuration, in one error.
    pub fn validate(&self) -> Result<()> {
        let mut v = Vec::new();
        if self.workers == 0 {
            v.push("workers must be at least 1".to_string());
        }
        if self.trajectory_length == 0 {
            v.push("trajectory_length must be at least 1".to_string());
        }
        for r in [self.puct.validate(), self.ambiguity.validate(), self.dedup.validate()] {
            if let Err(e) = r {
                v.push(e.to_string());
            }
        }
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(v.join("; ")))
        }
    }

    pub fn echo(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }

    pub fn load_scenario(&self) -> Result<Arc<crate::gui_sim::Scenario>> {
        load_scenario(&self.scenario)
    }
}

/// Loads a scenario named by configuration. A missing or unreadable file is
/// reported as a configuration error.
pub fn load_scenario(path: &Path) -> Result<Arc<crate::gui_sim::Scenario>> {
    match crate::gui_sim::Scenario::load(path) {
        Ok(sc) => Ok(Arc::new(sc)),
        Err(Error::Io { path, source }) => Err(Error::Config(format!("{}: {source}", path.display()))),
        Err(e) => Err(e),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExploreSummary {
    pub scenario: String,
    pub total_observations: u64,
    pub unique_states: u64,
    pub discovery_rate: f64,
    pub cross_app_states: u64,
    pub trajectories: u64,
    pub trajectory_length: usize,
    pub new_state_flags: u64,
    pub edges: u64,
    pub indexed_screens: u64,
    pub aborted_episodes: u64,
}

pub struct ExploreOutcome {
    pub summary: ExploreSummary,
    pub traces: Vec<EpisodeTrace>,
    pub world: SharedWorld,
}

/// Distinct windows of `len` consecutive transitions, as state-action paths.
pub fn trajectory_count(traces: &[EpisodeTrace], len: usize) -> u64 {
    let mut seen: HashSet<Vec<String>> = HashSet::new();
    for t in traces {
        if t.steps.len() < len || len == 0 {
            continue;
        }
        for w in t.steps.windows(len) {
            let mut key = vec![w[0].state_id.clone()];
            for s in w {
                key.push(s.signature.to_string());
                key.push(s.to_state_id.clone());
            }
            seen.insert(key);
        }
    }
    seen.len() as u64
}

/// Runs `cfg.episodes` episodes over `cfg.workers` threads sharing one world.
/// Episode `e` runs on worker `e % workers` with a seed derived from the
/// root seed and `e` alone.
pub fn explore(cfg: &RunConfig, scenario: &Arc<crate::gui_sim::Scenario>) -> Result<ExploreOutcome> {
    explore_with(cfg, scenario, SharedWorld::new(cfg.dedup.clone(), cfg.ambiguity)?, None)
}

fn explore_with(
    cfg: &RunConfig,
    scenario: &Arc<crate::gui_sim::Scenario>,
    world: SharedWorld,
    latency: Option<&mut Vec<Duration>>,
) -> Result<ExploreOutcome> {
    cfg.validate()?;
    let echo = cfg.echo();
    let policy = PolicySpec::puct(cfg.puct);
    let run_one = |e: usize, lat: Option<&mut Vec<Duration>>| -> Result<EpisodeTrace> {
        let seed = derive_seed(cfg.seed, &["episode", &e.to_string()]);
        let mut env = SimEnv::new(Arc::clone(scenario), derive_seed(seed, &["env"]));
        let ctx = EpisodeContext {
            worker: format!("w{}", e % cfg.workers),
            episode: e,
            seed,
            budget: cfg.budget,
            policy: policy.clone(),
            scenario: scenario.name().to_string(),
            scenario_hash: scenario.hash().to_string(),
            config: echo.clone(),
        };
        run_episode(&mut env, &world, &ctx, lat)
    };
    let mut traces: Vec<EpisodeTrace> = Vec::with_capacity(cfg.episodes);
    if cfg.workers == 1 {
        let mut lat = latency;
        for e in 0..cfg.episodes {
            traces.push(run_one(e, lat.as_deref_mut())?);
        }
    } else {
        let mut by_episode: BTreeMap<usize, Result<EpisodeTrace>> = BTreeMap::new();
        std::thread::scope(|scope| {
            let handles: Vec<_> = (0..cfg.workers)
                .map(|w| {
                    let run_one = &run_one;
                    scope.spawn(move || {
                        (w..cfg.episodes)
                            .step_by(cfg.workers)
                            .map(|e| (e, run_one(e, None)))
                            .collect::<Vec<_>>()
                    })
                })
                .collect();
            for h in handles {
                by_episode.extend(h.join().expect("explore worker panicked"));
            }
        });
        for (_, t) in by_episode {
            traces.push(t?);
        }
    }
    let summary = summarize(cfg, scenario.name(), &traces, &world)?;
    Ok(ExploreOutcome { summary, traces, world })
}

fn summarize(cfg: &RunConfig, scenario: &str, traces: &[EpisodeTrace], world: &SharedWorld) -> Result<ExploreSummary> {
    let g = world.graph.read();
    g.graph.check_consistency()?;
    let total: u64 = traces.iter().map(|t| 1 + t.steps.len() as u64).sum();
    let unique = g.graph.node_count() as u64;
    let flags: u64 = traces
        .iter()
        .map(|t| t.header.start_new_state as u64 + t.steps.iter().filter(|s| s.new_state).count() as u64)
        .sum();
    Ok(ExploreSummary {
        scenario: scenario.to_string(),
        total_observations: total,
        unique_states: unique,
        discovery_rate: if total == 0 { 0.0 } else { discovery_rate(total, unique)? },
        cross_app_states: g.graph.external_count() as u64,
        trajectories: trajectory_count(traces, cfg.trajectory_length),
        trajectory_length: cfg.trajectory_length,
        new_state_flags: flags,
        edges: g.graph.edge_count() as u64,
        indexed_screens: world.index.read().len() as u64,
        aborted_episodes: traces.iter().filter(|t| t.aborted.is_some()).count() as u64,
    })
}

/// Output file names inside a run directory.
pub mod files {
    pub const TRACES: &str = "traces.jsonl";
    pub const GRAPH: &str = "graph.jsonl";
    pub const INDEX: &str = "index.jsonl";
    pub const SUMMARY: &str = "summary.json";
}

#[derive(Serialize)]
struct SummaryFile<'a, T: Serialize> {
    config: &'a serde_json::Value,
    #[serde(flatten)]
    body: &'a T,
}

pub fn write_summary<T: Serialize>(path: &Path, config: &serde_json::Value, body: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(&SummaryFile { config, body })?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// Writes traces, graph, index and summary into `cfg.output`.
pub fn write_explore_outputs(cfg: &RunConfig, out: &ExploreOutcome) -> Result<()> {
    let dir = &cfg.output;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_traces(&out.traces, &dir.join(files::TRACES))?;
    out.world.graph.read().graph.export(&dir.join(files::GRAPH))?;
    out.world.index.read().save_snapshot(&dir.join(files::INDEX))?;
    write_summary(&dir.join(files::SUMMARY), &cfg.echo(), &out.summary)
}

/// One visit per logged state: the episode snapshot and the action prefix
/// that reached it. Start states have an empty prefix.
pub fn visit_paths<'a>(traces: &'a [EpisodeTrace], actions: &'a [Vec<ActionSignature>], initial_state: &str) -> Vec<VisitPath<'a>> {
    let mut out = Vec::new();
    for (t, acts) in traces.iter().zip(actions) {
        let snapshot = StartSnapshot {
            seed: derive_seed(t.header.seed, &["env"]),
            initial_state: initial_state.to_string(),
        };
        out.push(VisitPath {
            snapshot: snapshot.clone(),
            actions: &acts[..0],
            state_id: &t.header.start_state,
        });
        for (i, s) in t.steps.iter().enumerate() {
            out.push(VisitPath {
                snapshot: snapshot.clone(),
                actions: &acts[..=i],
                state_id: &s.to_state_id,
            });
        }
    }
    out
}

pub fn trace_actions(traces: &[EpisodeTrace]) -> Vec<Vec<ActionSignature>> {
    traces
        .iter()
        .map(|t| t.steps.iter().map(|s| s.signature.clone()).collect())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub prior: String,
    pub total_observations: u64,
    pub unique_states: u64,
    pub discovery_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationResult {
    pub rows: Vec<AblationRow>,
    /// Heuristic rate over uniform rate.
    pub ratio: f64,
}

/// Explores with the heuristic and the uniform prior under identical seeds
/// and budgets.
pub fn prior_ablation(cfg: &RunConfig, scenario: &Arc<crate::gui_sim::Scenario>) -> Result<AblationResult> {
    if cfg.budget == 0 || cfg.episodes == 0 {
        return Err(Error::Config("prior ablation needs a positive budget and episode count".into()));
    }
    let mut rows = Vec::new();
    for kind in [PriorKind::Heuristic, PriorKind::Uniform] {
        let mut c = cfg.clone();
        c.puct.prior_kind = kind;
        let out = explore(&c, scenario)?;
        rows.push(AblationRow {
            prior: kind.label().to_string(),
            total_observations: out.summary.total_observations,
            unique_states: out.summary.unique_states,
            discovery_rate: out.summary.discovery_rate,
        });
    }
    let ratio = rows[0].discovery_rate / rows[1].discovery_rate;
    Ok(AblationResult { rows, ratio })
}

/// CSV with a `# config: <json>` first line.
pub fn write_csv<T: Serialize>(rows: &[T], config: &serde_json::Value, path: &Path) -> Result<()> {
    use std::io::Write;
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    writeln!(file, "# config: {}", serde_json::to_string(config)?).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Fills a world with `states` synthetic states, each with a few explored
/// arms, and one indexed screen per state.
pub fn populate_synthetic(world: &SharedWorld, states: usize, seed: u64, rollout_group: &str) -> Result<()> {
    let mut rng = rng_from_seed(seed);
    let vocab: Vec<String> = (0..4000)
        .map(|i| format!("r{}_c{}|T:syn{}", i % 30, (i / 30) % 30, i / 900))
        .collect();
    let ids: Vec<String> = (0..states).map(|i| format!("synthetic-{i:06}")).collect();
    {
        let mut index = world.index.write();
        for id in &ids {
            let ct = (0..30).map(|_| vocab.choose(&mut rng).unwrap().clone()).collect();
            let txt = (0..10)
                .map(|k| format!("r{}_c{}|X:syn {}", k, rng.random_range(0..30), rng.random_range(0..100_000)))
                .collect();
            let sig = StructuralSignature::from_tokens(ct, txt, crate::screen_model::DisplayMode::Light, 100);
            index.insert(sig, rollout_group, id.clone())?;
        }
    }
    let mut g = world.graph.write();
    for id in &ids {
        g.graph.ensure_state(id, false);
    }
    for (i, id) in ids.iter().enumerate() {
        for a in 0..3 {
            let sig = ActionSignature::click(format!("r{}_c{}|T:button", a, i % 30))?;
            let to = &ids[rng.random_range(0..ids.len())];
            g.graph.record_transition(id, &sig, to, "synthetic", 0, false)?;
            g.stats.backup(id, &sig, rng.random::<f64>());
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencySample {
    pub corpus_states: usize,
    pub action: usize,
    pub decision_ns: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencySummary {
    pub corpus_states: usize,
    pub actions: usize,
    pub median_ns: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyProfile {
    pub samples: Vec<LatencySample>,
    pub summaries: Vec<LatencySummary>,
    /// Largest corpus median over smallest corpus median.
    pub ratio: f64,
}

fn median(mut v: Vec<u64>) -> u64 {
    if v.is_empty() {
        return 0;
    }
    v.sort_unstable();
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2
    }
}

/// Per-action decision time (enumeration, prior and selection) of a run on
/// top of a graph pre-populated with each of `sizes` synthetic states.
pub fn latency_profile(cfg: &RunConfig, scenario: &Arc<crate::gui_sim::Scenario>, sizes: &[usize]) -> Result<LatencyProfile> {
    let mut samples = Vec::new();
    let mut summaries = Vec::new();
    for &size in sizes {
        let world = SharedWorld::new(cfg.dedup.clone(), cfg.ambiguity)?;
        populate_synthetic(&world, size, derive_seed(cfg.seed, &["synthetic"]), scenario.rollout_group())?;
        let mut lat = Vec::new();
        let mut c = cfg.clone();
        c.workers = 1;
        explore_with(&c, scenario, world, Some(&mut lat))?;
        let ns: Vec<u64> = lat.iter().map(|d| d.as_nanos() as u64).collect();
        summaries.push(LatencySummary {
            corpus_states: size,
            actions: ns.len(),
            median_ns: median(ns.clone()),
        });
        samples.extend(ns.into_iter().enumerate().map(|(i, d)| LatencySample {
            corpus_states: size,
            action: i,
            decision_ns: d,
        }));
    }
    let ratio = match (summaries.first(), summaries.last()) {
        (Some(a), Some(b)) if a.median_ns > 0 => b.median_ns as f64 / a.median_ns as f64,
        _ => f64::NAN,
    };
    Ok(LatencyProfile { samples, summaries, ratio })
}
