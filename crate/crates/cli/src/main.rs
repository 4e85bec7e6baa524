use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use screensearch::ambiguity::{ambiguity_report, write_ambiguity_report, AmbiguityParams};
use screensearch::eval_harness::{emit_report, run_benchmark, BenchConfig};
use screensearch::explorer::{read_traces, write_traces, PolicySpec, PriorKind};
use screensearch::gui_sim::{build_replay_pool, read_pool, write_pool, PoolRequest, Scenario};
use screensearch::retrieval_index::{DedupConfig, RetrievalQuery, ScreenIndex, SimilarityWeights};
use screensearch::runner::{
    self, explore, files, latency_profile, prior_ablation, trace_actions, visit_paths, write_csv,
    write_explore_outputs, write_summary, RunConfig,
};
use screensearch::screen_model::{extract_signature, read_observations};
use screensearch::state_graph::StateGraph;
use screensearch::{scenarios, Error, Result};

#[derive(Parser)]
#[command(name = "screensearch", version, about = "Explore simulated GUIs and evaluate exploration policies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run workers over a scenario and build the state graph
    Explore(RunArgs),
    /// Replay-start benchmarks
    #[command(subcommand)]
    Bench(BenchCommand),
    /// Inspect a saved screen index
    #[command(subcommand)]
    Index(IndexCommand),
    /// Per-state ambiguity
    #[command(subcommand)]
    Ambiguity(AmbiguityCommand),
    /// Scenario files
    #[command(subcommand)]
    Sim(SimCommand),
    /// Compare the heuristic and uniform priors under matched seeds
    PriorAblation(RunArgs),
    /// Decision time per action on top of large synthetic graphs
    LatencyProfile {
        #[command(flatten)]
        run: RunArgs,
        /// Synthetic graph sizes to profile against
        #[arg(long, value_delimiter = ',', default_value = "1000,30000")]
        sizes: Vec<usize>,
    },
}

/// Config file plus overrides. Flags win over the file.
#[derive(Args, Clone, Default)]
struct RunArgs {
    /// JSON run configuration
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
    /// Actions per episode
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    top_k: Option<usize>,
    /// Control-type weight; the text weight becomes 1 minus this
    #[arg(long)]
    lambda_ct: Option<f64>,
    #[arg(long)]
    c_puct: Option<f64>,
    #[arg(long)]
    prior: Option<PriorKind>,
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long)]
    u0: Option<f64>,
}

impl RunArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($field:ident => $($target:tt)+) => {
                if let Some(v) = self.$field.clone() {
                    cfg.$($target)+ = v;
                }
            };
        }
        set!(scenario => scenario);
        set!(workers => workers);
        set!(budget => budget);
        set!(episodes => episodes);
        set!(seed => seed);
        set!(output => output);
        set!(tau => dedup.tau);
        set!(top_k => dedup.top_k);
        set!(c_puct => puct.c_puct);
        set!(prior => puct.prior_kind);
        set!(kappa => ambiguity.kappa);
        set!(u0 => ambiguity.u0);
        if let Some(ct) = self.lambda_ct {
            cfg.dedup.weights = SimilarityWeights { control_type: ct, text: 1.0 - ct };
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum BenchCommand {
    /// Select verified replay-start prefixes from an explore run
    Pool {
        /// Output directory of a previous `explore`
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value_t = 3)]
        count: usize,
        #[arg(long, default_value_t = 3)]
        min_occurrences: usize,
        #[arg(long, default_value_t = 5)]
        min_anchor: usize,
        #[arg(long, default_value_t = 5)]
        trials: usize,
    },
    /// Run every policy from every prefix with fresh statistics
    Run(BenchRunArgs),
}

#[derive(Args, Serialize)]
struct BenchRunArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    pool: PathBuf,
    /// Index snapshot the pool was verified against
    #[arg(long)]
    index: PathBuf,
    #[arg(long, default_value_t = 50)]
    budget: usize,
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "puct,reactive_random,reactive_greedy_novelty,reactive_loop_avoid"
    )]
    policies: Vec<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 5)]
    verify_trials: usize,
    #[arg(long, default_value_t = 4)]
    threads: usize,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Subcommand)]
enum IndexCommand {
    Stats { index: PathBuf },
    /// Dedup decision for each observation in a JSON-lines file
    Query {
        index: PathBuf,
        #[arg(long)]
        from_file: PathBuf,
        /// Rollout-group prefix; defaults to each observation's own group
        #[arg(long)]
        group: Option<String>,
    },
}

#[derive(Subcommand)]
enum AmbiguityCommand {
    Report {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long, default_value_t = AmbiguityParams::default().kappa)]
        kappa: f64,
        #[arg(long, default_value_t = AmbiguityParams::default().u0)]
        u0: f64,
        /// CSV path; the table goes to stdout when omitted
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum SimCommand {
    /// Check a scenario file and report every violation
    Validate {
        scenario: PathBuf,
        #[arg(long, default_value_t = DedupConfig::default().tau)]
        tau: f64,
    },
    /// Write a built-in scenario as JSON
    Generate {
        /// Scenario name, or `all`
        name: String,
        /// Output file, or directory when generating all
        #[arg(long)]
        output: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 2 } else { 3 })
        }
    }
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Explore(args) => cmd_explore(&args),
        Command::Bench(BenchCommand::Pool {
            run,
            scenario,
            output,
            count,
            min_occurrences,
            min_anchor,
            trials,
        }) => {
            let req = PoolRequest { min_occurrences, min_anchor, count, trials };
            cmd_pool(&run, &scenario, &output, &req)
        }
        Command::Bench(BenchCommand::Run(args)) => cmd_bench(&args),
        Command::Index(IndexCommand::Stats { index }) => {
            let idx = ScreenIndex::load_snapshot(&index)?;
            println!("{}", serde_json::to_string_pretty(&idx.stats())?);
            Ok(())
        }
        Command::Index(IndexCommand::Query { index, from_file, group }) => cmd_query(&index, &from_file, group),
        Command::Ambiguity(AmbiguityCommand::Report { graph, kappa, u0, output }) => {
            let params = AmbiguityParams::new(kappa, u0)?;
            let g = StateGraph::import(&graph)?;
            let rows = ambiguity_report(&g, &params);
            match output {
                Some(p) => write_ambiguity_report(&rows, &p),
                None => {
                    let mut w = csv::Writer::from_writer(std::io::stdout());
                    for r in &rows {
                        w.serialize(r)?;
                    }
                    w.flush().map_err(|e| Error::io("<stdout>", e))
                }
            }
        }
        Command::Sim(SimCommand::Validate { scenario, tau }) => {
            let text = std::fs::read_to_string(&scenario)
                .map_err(|e| Error::Config(format!("{}: {e}", scenario.display())))?;
            let spec = serde_json::from_str(&text).map_err(|e| Error::Parse {
                path: scenario.clone(),
                line: e.line(),
                msg: e.to_string(),
            })?;
            let sc = Scenario::compile(spec, tau)?;
            println!("{}: ok ({} hidden states, hash {})", sc.name(), sc.state_count(), sc.hash());
            Ok(())
        }
        Command::Sim(SimCommand::Generate { name, output }) => cmd_generate(&name, &output),
        Command::PriorAblation(args) => {
            let cfg = args.resolve()?;
            let sc = cfg.load_scenario()?;
            let result = prior_ablation(&cfg, &sc)?;
            std::fs::create_dir_all(&cfg.output).map_err(|e| Error::io(&cfg.output, e))?;
            write_csv(&result.rows, &cfg.echo(), &cfg.output.join("prior_ablation.csv"))?;
            for r in &result.rows {
                println!("{:<18} {:>10} {:>8} {:>7.2}%", r.prior, r.total_observations, r.unique_states, r.discovery_rate);
            }
            println!("ratio {:.3}", result.ratio);
            Ok(())
        }
        Command::LatencyProfile { run, sizes } => cmd_latency(&run, &sizes),
    }
}

fn cmd_explore(args: &RunArgs) -> Result<()> {
    let cfg = args.resolve()?;
    let sc = cfg.load_scenario()?;
    let out = explore(&cfg, &sc)?;
    write_explore_outputs(&cfg, &out)?;
    let s = &out.summary;
    println!("scenario\ttotal\tunique\trate\tcross_app\ttrajectories@{}", s.trajectory_length);
    println!(
        "{}\t{}\t{}\t{:.2}%\t{}\t{}",
        s.scenario, s.total_observations, s.unique_states, s.discovery_rate, s.cross_app_states, s.trajectories
    );
    Ok(())
}

fn cmd_pool(run: &Path, scenario: &Path, output: &Path, req: &PoolRequest) -> Result<()> {
    let sc = runner::load_scenario(scenario)?;
    let traces = read_traces(&run.join(files::TRACES))?;
    let index = ScreenIndex::load_snapshot(&run.join(files::INDEX))?;
    let actions = trace_actions(&traces);
    let visits = visit_paths(&traces, &actions, &sc.spec().initial_state);
    let pool = build_replay_pool(&sc, &visits, &index, req)?;
    write_pool(&pool, output)?;
    for p in &pool {
        println!("{}\tanchor {}", p.target_state_id, p.anchor_step);
    }
    Ok(())
}

fn cmd_bench(args: &BenchRunArgs) -> Result<()> {
    let sc = runner::load_scenario(&args.scenario)?;
    let pool = read_pool(&args.pool)?;
    let index = ScreenIndex::load_snapshot(&args.index)?;
    let base = RunConfig::default().puct;
    let policies = args
        .policies
        .iter()
        .map(|p| PolicySpec::parse(p, &base))
        .collect::<Result<Vec<_>>>()?;
    let echo = serde_json::to_value(args)?;
    let cfg = BenchConfig {
        budget: args.budget,
        seed: args.seed,
        dedup: index.config().clone(),
        ambiguity: AmbiguityParams::default(),
        verify_trials: args.verify_trials,
        threads: args.threads,
        config_echo: echo.clone(),
    };
    let (result, traces) = run_benchmark(&sc, &pool, &policies, &index, &cfg)?;
    std::fs::create_dir_all(&args.output).map_err(|e| Error::io(&args.output, e))?;
    emit_report(&result, &echo, &args.output)?;
    write_traces(&traces, &args.output.join(files::TRACES))?;
    println!("policy\tM_V(T-1)\tfrontier_auc\tdu(T-1)\tambiguity_auc");
    for p in &result.policies {
        println!(
            "{}\t{:.2}\t{:.2}\t{:.4}\t{:.4}",
            p.label, p.m_v_final, p.frontier_auc, p.du_final, p.ambiguity_auc
        );
    }
    Ok(())
}

#[derive(Serialize)]
struct QueryRow {
    line: usize,
    canonical_id: String,
    state_id: String,
    is_new: bool,
    best_similarity: f64,
    candidates: Vec<(String, f64)>,
}

fn cmd_query(index: &Path, from_file: &Path, group: Option<String>) -> Result<()> {
    let idx = ScreenIndex::load_snapshot(index)?;
    for (i, obs) in read_observations(from_file)?.into_iter().enumerate() {
        let sig = extract_signature(&obs)?;
        let prefix = group.clone().unwrap_or_else(|| obs.rollout_group.clone());
        let q = RetrievalQuery::new(sig.clone(), prefix, obs.display_mode, obs.text_size_bin, idx.config().top_k);
        let d = idx.dedup_decide(&q);
        let row = QueryRow {
            line: i + 1,
            canonical_id: sig.canonical_id.clone(),
            state_id: d.state_id,
            is_new: d.is_new,
            best_similarity: d.best_similarity,
            candidates: idx.search(&q).into_iter().map(|c| (c.canonical_id, c.score)).collect(),
        };
        println!("{}", serde_json::to_string(&row)?);
    }
    Ok(())
}

fn cmd_generate(name: &str, output: &Path) -> Result<()> {
    let write = |name: &str, path: &Path| -> Result<()> {
        let spec = scenarios::by_name(name).ok_or_else(|| Error::Config(format!("unknown scenario `{name}`")))?;
        let text = serde_json::to_string_pretty(&spec)? + "\n";
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    };
    if name == "all" {
        std::fs::create_dir_all(&output).map_err(|e| Error::io(&output, e))?;
        for n in scenarios::NAMES {
            write(n, &output.join(format!("{n}.json")))?;
        }
        Ok(())
    } else {
        write(name, output)
    }
}

fn cmd_latency(args: &RunArgs, sizes: &[usize]) -> Result<()> {
    let cfg = args.resolve()?;
    let sc = cfg.load_scenario()?;
    let profile = latency_profile(&cfg, &sc, sizes)?;
    std::fs::create_dir_all(&cfg.output).map_err(|e| Error::io(&cfg.output, e))?;
    write_csv(&profile.samples, &cfg.echo(), &cfg.output.join("latency_series.csv"))?;
    #[derive(Serialize)]
    struct Body<'a> {
        summaries: &'a [runner::LatencySummary],
        ratio: f64,
    }
    write_summary(
        &cfg.output.join("latency_summary.json"),
        &cfg.echo(),
        &Body { summaries: &profile.summaries, ratio: profile.ratio },
    )?;
    for s in &profile.summaries {
        println!("{:>8} states  {:>6} actions  median {} ns", s.corpus_states, s.actions, s.median_ns);
    }
    println!("ratio {:.3}", profile.ratio);
    Ok(())
}
