//! Replay-start evaluation: every policy runs a fixed budget from each
//! verified prefix on a fresh graph, and the frontier and ambiguity curves
//! are averaged over episodes.
//!
//! `M_V(t)` counts the distinct deduplicated states reached within the
//! first `t` actions, excluding the start state, so `M_V(0) = 0`. `Δu_t` is
//! `u(s_t) − u(s_0)` with each `u` taken on the episode's own graph right
//! after the state was entered.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::ambiguity::{score_or_prior, AmbiguityParams};
use crate::error::{Error, Result};
use crate::explorer::{enumerate_signatures, run_episode, EpisodeContext, EpisodeTrace, PolicySpec, SharedWorld};
use crate::gui_sim::{replay_env, verify_replay, ReplayPrefix, Scenario, SimEnv};
use crate::retrieval_index::{DedupConfig, ScreenIndex};
use crate::rng::{derive_seed, rng_from_seed};

pub use crate::explorer::PolicyKind;

/// Mean number of new distinct states after `t` actions, for `t` in
/// `0..T`. Each inner slice is `s_0, s_1, …, s_T`.
pub fn frontier_curve_from_states<S: AsRef<str>>(episodes: &[Vec<S>]) -> Result<Vec<f64>> {
    let Some(first) = episodes.first() else {
        return Ok(Vec::new());
    };
    let len = first.len();
    if episodes.iter().any(|e| e.len() != len) {
        return Err(Error::InvalidInput("episodes have different lengths".into()));
    }
    let horizon = len.saturating_sub(1);
    let mut sums = vec![0.0; horizon];
    for ep in episodes {
        let start = ep[0].as_ref();
        let mut seen: HashSet<&str> = HashSet::new();
        for t in 0..horizon {
            if t > 0 {
                let s = ep[t].as_ref();
                if s != start {
                    seen.insert(s);
                }
            }
            sums[t] += seen.len() as f64;
        }
    }
    let n = episodes.len() as f64;
    Ok(sums.into_iter().map(|x| x / n).collect())
}

/// Mean of `u(s_t) − u(s_0)` for `t` in `0..T`. Each inner slice is
/// `u(s_0), …, u(s_T)`.
pub fn ambiguity_curve_from_values(episodes: &[Vec<f64>]) -> Result<Vec<f64>> {
    let Some(first) = episodes.first() else {
        return Ok(Vec::new());
    };
    let len = first.len();
    if episodes.iter().any(|e| e.len() != len) {
        return Err(Error::InvalidInput("episodes have different lengths".into()));
    }
    let horizon = len.saturating_sub(1);
    let mut sums = vec![0.0; horizon];
    for ep in episodes {
        for t in 0..horizon {
            sums[t] += ep[t] - ep[0];
        }
    }
    let n = episodes.len() as f64;
    Ok(sums.into_iter().map(|x| x / n).collect())
}

pub fn frontier_curve(traces: &[EpisodeTrace]) -> Result<Vec<f64>> {
    let seqs: Vec<Vec<&str>> = traces.iter().map(EpisodeTrace::state_sequence).collect();
    frontier_curve_from_states(&seqs)
}

/// `Δu_t` from traces. The `u` values were recorded with the parameters the
/// episodes ran under; `params` only has to agree with them.
pub fn ambiguity_curve(traces: &[EpisodeTrace], params: &AmbiguityParams) -> Result<Vec<f64>> {
    params.validate()?;
    let vals: Vec<Vec<f64>> = traces.iter().map(EpisodeTrace::visit_ambiguity).collect();
    ambiguity_curve_from_values(&vals)
}

/// Discrete area under a curve: the plain sum of its values.
pub fn auc(series: &[f64]) -> f64 {
    series.iter().sum()
}

/// `100 · unique / total`.
pub fn discovery_rate(total_interactions: u64, unique_states: u64) -> Result<f64> {
    if total_interactions == 0 {
        return Err(Error::InvalidInput("discovery rate needs at least one interaction".into()));
    }
    Ok(100.0 * unique_states as f64 / total_interactions as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyResult {
    pub label: String,
    pub episodes: usize,
    pub frontier: Vec<f64>,
    pub ambiguity: Vec<f64>,
    pub m_v_final: f64,
    pub frontier_auc: f64,
    pub du_final: f64,
    pub ambiguity_auc: f64,
}

impl PolicyResult {
    pub fn from_curves(label: &str, episodes: usize, frontier: Vec<f64>, ambiguity: Vec<f64>) -> Self {
        Self {
            label: label.to_string(),
            episodes,
            m_v_final: frontier.last().copied().unwrap_or(0.0),
            frontier_auc: auc(&frontier),
            du_final: ambiguity.last().copied().unwrap_or(0.0),
            ambiguity_auc: auc(&ambiguity),
            frontier,
            ambiguity,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkResult {
    pub budget: usize,
    pub policies: Vec<PolicyResult>,
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub budget: usize,
    pub seed: u64,
    pub dedup: DedupConfig,
    pub ambiguity: AmbiguityParams,
    /// Replays per prefix when re-verifying the pool.
    pub verify_trials: usize,
    pub threads: usize,
    pub config_echo: serde_json::Value,
}

/// Runs every policy from every prefix. Each episode gets a fresh world;
/// episodes run in parallel and are reassembled in `(policy, prefix)` order.
pub fn run_benchmark(
    scenario: &Arc<Scenario>,
    pool: &[ReplayPrefix],
    policies: &[PolicySpec],
    corpus_index: &ScreenIndex,
    cfg: &BenchConfig,
) -> Result<(BenchmarkResult, Vec<EpisodeTrace>)> {
    if cfg.budget == 0 {
        return Err(Error::Config("benchmark budget must be at least 1".into()));
    }
    let mut labels = HashSet::new();
    for p in policies {
        p.config.validate()?;
        if !labels.insert(p.label.as_str()) {
            return Err(Error::Config(format!("duplicate policy label `{}`", p.label)));
        }
    }
    cfg.dedup.validate()?;
    cfg.ambiguity.validate()?;
    for p in pool {
        if !verify_replay(scenario, p, cfg.verify_trials.max(1), corpus_index)? {
            return Err(Error::UnverifiedPrefix(p.target_state_id.clone()));
        }
    }

    let jobs: Vec<(usize, usize)> = (0..policies.len())
        .flat_map(|pi| (0..pool.len()).map(move |bi| (pi, bi)))
        .collect();
    let run = |&(pi, bi): &(usize, usize)| -> Result<EpisodeTrace> {
        let policy = &policies[pi];
        let prefix = &pool[bi];
        let world = SharedWorld::new(cfg.dedup.clone(), cfg.ambiguity)?;
        let mut env = replay_env(scenario, prefix, prefix.trial_seed(0))?;
        let ctx = EpisodeContext {
            worker: format!("bench/{}", policy.label),
            episode: bi,
            seed: derive_seed(cfg.seed, &["bench", &policy.label, &bi.to_string()]),
            budget: cfg.budget,
            policy: policy.clone(),
            scenario: scenario.name().to_string(),
            scenario_hash: scenario.hash().to_string(),
            config: cfg.config_echo.clone(),
        };
        run_episode(&mut env, &world, &ctx, None)
    };
    let threads = cfg.threads.max(1).min(jobs.len().max(1));
    let mut results: BTreeMap<usize, Result<EpisodeTrace>> = BTreeMap::new();
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..threads)
            .map(|w| {
                let jobs = &jobs;
                let run = &run;
                scope.spawn(move || {
                    (w..jobs.len())
                        .step_by(threads)
                        .map(|j| (j, run(&jobs[j])))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        for h in handles {
            results.extend(h.join().expect("benchmark worker panicked"));
        }
    });
    let traces: Vec<EpisodeTrace> = results.into_values().collect::<Result<_>>()?;

    let mut out = Vec::new();
    for (pi, policy) in policies.iter().enumerate() {
        let eps = &traces[pi * pool.len()..(pi + 1) * pool.len()];
        if let Some(t) = eps.iter().find(|t| t.steps.len() != cfg.budget) {
            return Err(Error::EnvFault {
                step: t.steps.len(),
                msg: format!(
                    "episode {} of `{}` stopped early{}",
                    t.header.episode,
                    policy.label,
                    t.aborted.as_deref().map(|a| format!(": {a}")).unwrap_or_default()
                ),
            });
        }
        let frontier = frontier_curve(eps)?;
        let ambiguity = ambiguity_curve(eps, &cfg.ambiguity)?;
        out.push(PolicyResult::from_curves(&policy.label, eps.len(), frontier, ambiguity));
    }
    Ok((BenchmarkResult { budget: cfg.budget, policies: out }, traces))
}

const SUMMARY_HEADER: [&str; 6] = ["label", "episodes", "m_v_final", "frontier_auc", "du_final", "ambiguity_auc"];

fn file_label(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?))
}

/// Writes `summary.csv` and one `curve_<label>.csv` per policy into `dir`.
/// Every file starts with a `#` comment line carrying the config echo.
pub fn emit_report(result: &BenchmarkResult, config_echo: &serde_json::Value, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let echo = format!("# config: {}\n", serde_json::to_string(config_echo)?);
    let path = dir.join("summary.csv");
    let mut w = create(&path)?;
    w.write_all(echo.as_bytes()).map_err(|e| Error::io(&path, e))?;
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(SUMMARY_HEADER)?;
    for p in &result.policies {
        csv.write_record([
            p.label.clone(),
            p.episodes.to_string(),
            p.m_v_final.to_string(),
            p.frontier_auc.to_string(),
            p.du_final.to_string(),
            p.ambiguity_auc.to_string(),
        ])?;
    }
    csv.flush().map_err(|e| Error::io(&path, e))?;
    for p in &result.policies {
        let path = dir.join(format!("curve_{}.csv", file_label(&p.label)));
        let mut w = create(&path)?;
        w.write_all(echo.as_bytes()).map_err(|e| Error::io(&path, e))?;
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(["t", "M_V", "delta_u"])?;
        for (t, (m, u)) in p.frontier.iter().zip(&p.ambiguity).enumerate() {
            csv.write_record([t.to_string(), m.to_string(), u.to_string()])?;
        }
        csv.flush().map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub label: String,
    pub episodes: usize,
    pub m_v_final: f64,
    pub frontier_auc: f64,
    pub du_final: f64,
    pub ambiguity_auc: f64,
}

impl From<&PolicyResult> for SummaryRow {
    fn from(p: &PolicyResult) -> Self {
        Self {
            label: p.label.clone(),
            episodes: p.episodes,
            m_v_final: p.m_v_final,
            frontier_auc: p.frontier_auc,
            du_final: p.du_final,
            ambiguity_auc: p.ambiguity_auc,
        }
    }
}

/// Parses a `summary.csv` written by [`emit_report`].
pub fn read_summary(path: &Path) -> Result<Vec<SummaryRow>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(file);
    rdr.deserialize().map(|r| r.map_err(Error::from)).collect()
}

/// Reads the config echo line of a report file.
pub fn read_config_echo(path: &Path) -> Result<serde_json::Value> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut first = String::new();
    BufReader::new(file).read_line(&mut first).map_err(|e| Error::io(path, e))?;
    let json = first.strip_prefix("# config: ").ok_or_else(|| Error::Parse {
        path: path.to_path_buf(),
        line: 1,
        msg: "missing config echo".into(),
    })?;
    Ok(serde_json::from_str(json.trim())?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReading {
    pub hidden_state: String,
    pub state_id: String,
    pub samples: u64,
    pub ambiguity: f64,
}

/// Random walk over the scenario until every observed state that one of
/// `hidden` maps to has at least `samples` outgoing transitions, then reads
/// the ambiguity of those states. Gives up after `max_steps` actions.
pub fn aliasing_probe(
    scenario: &Arc<Scenario>,
    hidden: &[&str],
    samples: u64,
    seed: u64,
    dedup: DedupConfig,
    params: AmbiguityParams,
    max_steps: usize,
) -> Result<Vec<ProbeReading>> {
    use rand::seq::IndexedRandom;

    let world = SharedWorld::new(dedup, params)?;
    let mut env = SimEnv::new(Arc::clone(scenario), derive_seed(seed, &["env"]));
    let mut rng = rng_from_seed(derive_seed(seed, &["probe"]));
    let mut targets: BTreeMap<String, String> = BTreeMap::new();
    let (_, mut current, _) = world.dedup(env.observation())?;
    world.graph.write().graph.ensure_state(&current, env.is_external());
    let done = |targets: &BTreeMap<String, String>, g: &crate::state_graph::StateGraph| {
        hidden.iter().all(|h| {
            targets
                .get(*h)
                .and_then(|s| g.node(s))
                .is_some_and(|n| n.total_visits() >= samples)
        })
    };
    for step in 0..max_steps {
        if hidden.contains(&env.hidden_state()) {
            targets.insert(env.hidden_state().to_string(), current.clone());
        }
        if done(&targets, &world.graph.read().graph) {
            break;
        }
        let sigs = enumerate_signatures(env.observation(), scenario.payloads())?;
        let Some(sig) = sigs.choose(&mut rng).cloned() else {
            return Err(Error::EnvFault { step, msg: "no executable elements".into() });
        };
        let obs = env.step(&sig);
        let (_, next, _) = world.dedup(&obs)?;
        world
            .graph
            .write()
            .graph
            .record_transition(&current, &sig, &next, "probe", step, env.is_external())?;
        current = next;
    }
    let g = world.graph.read();
    if !done(&targets, &g.graph) {
        return Err(Error::InvalidInput(format!(
            "probe did not collect {samples} samples per target within {max_steps} steps"
        )));
    }
    Ok(hidden
        .iter()
        .map(|h| {
            let s = &targets[*h];
            let est = score_or_prior(&g.graph, s, &params);
            ProbeReading {
                hidden_state: h.to_string(),
                state_id: s.clone(),
                samples: g.graph.node(s).map_or(0, |n| n.total_visits()),
                ambiguity: est.score,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frontier_examples() {
        assert!(frontier_curve_from_states::<&str>(&[]).unwrap().is_empty());
        let stuck = vec![vec!["a"; 6]];
        assert_eq!(frontier_curve_from_states(&stuck).unwrap(), vec![0.0; 5]);
        let fresh = vec![vec!["a", "b", "c", "d", "e"]];
        assert_eq!(frontier_curve_from_states(&fresh).unwrap(), vec![0.0, 1.0, 2.0, 3.0]);
        // returning to the start never counts
        let back = vec![vec!["a", "b", "a", "c"]];
        assert_eq!(frontier_curve_from_states(&back).unwrap(), vec![0.0, 1.0, 1.0]);
        let uneven = vec![vec!["a", "b"], vec!["a"]];
        assert!(frontier_curve_from_states(&uneven).is_err());
    }

    #[test]
    fn budget_one_gives_single_point() {
        let eps = vec![vec!["a", "b"]];
        assert_eq!(frontier_curve_from_states(&eps).unwrap(), vec![0.0]);
    }

    #[test]
    fn ambiguity_examples() {
        let c = ambiguity_curve_from_values(&[vec![0.5, 0.3, 0.6, 0.9]]).unwrap();
        assert_eq!(c.len(), 3);
        assert_eq!(c[0], 0.0);
        assert!((c[1] + 0.2).abs() < 1e-12);
        assert!((c[2] - 0.1).abs() < 1e-12);
        let flat = ambiguity_curve_from_values(&[vec![0.4; 5], vec![0.7; 5]]).unwrap();
        assert_eq!(flat, vec![0.0; 4]);
    }

    #[test]
    fn auc_and_rate() {
        assert_eq!(auc(&[0.0; 4]), 0.0);
        assert_eq!(auc(&[1.0, 2.0, 3.0]), 6.0);
        assert_eq!(discovery_rate(10, 10).unwrap(), 100.0);
        assert!(discovery_rate(0, 0).is_err());
    }

    #[test]
    fn report_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let echo = serde_json::json!({"seed": 7});
        let empty = BenchmarkResult { budget: 3, policies: vec![] };
        emit_report(&empty, &echo, dir.path()).unwrap();
        assert!(read_summary(&dir.path().join("summary.csv")).unwrap().is_empty());

        let policies: Vec<PolicyResult> = (0..5)
            .map(|i| {
                PolicyResult::from_curves(
                    &format!("p/{i}"),
                    3,
                    vec![0.0, 1.0 / 3.0, 2.0 / 3.0 + i as f64],
                    vec![0.0, -0.1 * i as f64, 0.3_f64.sqrt()],
                )
            })
            .collect();
        let result = BenchmarkResult { budget: 3, policies };
        emit_report(&result, &echo, dir.path()).unwrap();
        let rows = read_summary(&dir.path().join("summary.csv")).unwrap();
        assert_eq!(rows.len(), 5);
        for (row, p) in rows.iter().zip(&result.policies) {
            assert_eq!(row, &SummaryRow::from(p));
        }
        assert_eq!(read_config_echo(&dir.path().join("curve_p_3.csv")).unwrap(), echo);
    }

    #[test]
    fn probe_separates_aliased_hub() {
        let run = |spec| {
            let sc = Arc::new(Scenario::compile(spec, 0.93).unwrap());
            aliasing_probe(&sc, &["hub_a", "hub_b"], 50, 3, DedupConfig::default(), AmbiguityParams::default(), 100_000)
                .unwrap()
        };
        let aliased = run(crate::scenarios::aliased_hub());
        assert_eq!(aliased[0].state_id, aliased[1].state_id);
        assert!(aliased[0].ambiguity > 0.7, "{aliased:?}");
        let control = run(crate::scenarios::alias_free_hub());
        assert_ne!(control[0].state_id, control[1].state_id);
        assert!(control.iter().all(|r| r.ambiguity < 0.3), "{control:?}");
    }
}
