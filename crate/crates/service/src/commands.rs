//! The `crowdrule` subcommands.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crowdrule_core::analytics::{
    export_blinded, import_judgments, oracle_judgments, positive_pairs, render_svg, render_text, report, BlindMap,
    ReportConfig, Tails,
};
use crowdrule_core::builder::{render_tokens, replay, rule_to_actions, BuilderAction};
use crowdrule_core::dataset::{load_truth, Dataset};
use crowdrule_core::demo;
use crowdrule_core::model::{load_predicates, read_jsonl, write_jsonl, PredicateRegistry};
use crowdrule_core::orchestration::{
    filter_workers, Condition, Event, ExperimentConfig, FilterConfig, Orchestrator, ResponseRecord, RuleSubmission,
};
use crowdrule_core::rule::{parse_rule, validate_rule};
use crowdrule_core::sim::{run_population, summarize, validate_population, PersonaSpec};

use crate::api::{router, AppState, Judging};
use crate::config::{load_conditions, ServiceConfig};
use crate::store::{logical_clock, read_log, system_clock, Store};

#[derive(Debug, Parser)]
#[command(
    name = "crowdrule",
    version,
    about = "Crowdsourced action constraints: task service and analysis tools"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the HTTP API.
    Serve {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run a seeded worker population through the task service.
    Simulate(SimulateArgs),
    /// Sample worker positives into a blinded judging set.
    JudgeExport(JudgeExportArgs),
    /// Judge a blinded set against the hidden rules.
    JudgeOracle(JudgeOracleArgs),
    /// Per-condition positive rate, precision and pairwise tests.
    Analyze(AnalyzeArgs),
    /// Compile a rule to builder actions and print the rendered rule.
    CompileDnf(CompileArgs),
    /// Write the synthetic demo dataset.
    DemoData {
        /// Parent directory; `demo/` and `tires/` are created in it.
        #[arg(long, default_value = "data")]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Dataset directory.
    #[arg(long, default_value = "data/demo")]
    pub data: PathBuf,
    /// Replaces the dataset's condition table.
    #[arg(long)]
    pub conditions: Option<PathBuf>,
}

impl DataArgs {
    fn load(&self) -> anyhow::Result<Dataset> {
        let mut ds = Dataset::load(&self.data).with_context(|| format!("loading {}", self.data.display()))?;
        if let Some(p) = &self.conditions {
            ds.conditions = load_conditions(p)?;
        }
        ds.check().context("dataset check")?;
        Ok(ds)
    }
}

/// Responses and rule submissions, either replayed from an event log or
/// read from JSONL files.
#[derive(Debug, Args)]
pub struct RecordArgs {
    #[arg(long, conflicts_with_all = ["responses", "rules"])]
    pub events: Option<PathBuf>,
    #[arg(long)]
    pub responses: Option<PathBuf>,
    #[arg(long)]
    pub rules: Option<PathBuf>,
}

impl RecordArgs {
    fn load(&self) -> anyhow::Result<(Vec<ResponseRecord>, Vec<RuleSubmission>)> {
        if let Some(p) = &self.events {
            let events = load_events(p)?;
            let st = Orchestrator::replay(ExperimentConfig::new(0, vec![]), &events).state;
            return Ok((st.responses, st.submissions));
        }
        if self.responses.is_none() && self.rules.is_none() {
            bail!("give --events, or --responses and/or --rules");
        }
        let responses = match &self.responses {
            Some(p) => read_records(p, &["worker_id", "question_id", "answer"])?,
            None => vec![],
        };
        let rules = match &self.rules {
            Some(p) => read_records(p, &["worker_id", "question_id", "accepted"])?,
            None => vec![],
        };
        Ok((responses, rules))
    }
}

fn read_records<T: serde::de::DeserializeOwned>(path: &Path, required: &[&'static str]) -> anyhow::Result<Vec<T>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(read_jsonl(&text, required)
        .with_context(|| format!("parsing {}", path.display()))?
        .into_iter()
        .map(|(_, t)| t)
        .collect())
}

fn write(path: &Path, content: &str) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    std::fs::write(path, content).with_context(|| format!("writing {}", path.display()))
}

fn pretty<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("serializes") + "\n"
}

/// A population file (TOML).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PopulationFile {
    /// Conditions workers are drawn from; empty means all.
    #[serde(default)]
    pub conditions: Vec<Condition>,
    /// Seed for condition assignment and HIT composition; defaults to the
    /// run seed.
    #[serde(default)]
    pub experiment_seed: Option<u64>,
    #[serde(default)]
    pub filter: FilterConfig,
    pub workers: Vec<PersonaSpec>,
}

impl PopulationFile {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let p: PopulationFile = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        validate_population(&p.workers)?;
        Ok(p)
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Hidden rules; defaults to `truth.jsonl` in the dataset directory.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[arg(long)]
    pub population: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory for the event log, records and summary.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn simulate(a: &SimulateArgs) -> anyhow::Result<()> {
    let ds = Arc::new(a.data.load()?);
    let truth_path = a.truth.clone().unwrap_or_else(|| a.data.data.join("truth.jsonl"));
    let truth = load_truth(&truth_path).with_context(|| format!("loading {}", truth_path.display()))?;
    let pop = PopulationFile::load(&a.population)?;
    let config = ExperimentConfig {
        seed: pop.experiment_seed.unwrap_or(a.seed),
        active_conditions: if pop.conditions.is_empty() {
            Condition::ALL.to_vec()
        } else {
            pop.conditions.clone()
        },
        filter: pop.filter,
    };
    std::fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let log = a.out.join("events.jsonl");
    if log.exists() {
        bail!("{} already exists", log.display());
    }
    let (mut store, _) = Store::open(&log, config.clone(), ds.clone(), false, logical_clock())?;
    let workers = run_population(&mut store, &pop.workers, &ds, &truth, a.seed)?;
    let (responses, rules) = store.read(|st| (st.responses.clone(), st.submissions.clone()));
    let outcome = summarize(workers, &responses, &rules, &config, &ds, &truth);
    write(&a.out.join("responses.jsonl"), &write_jsonl(&responses))?;
    write(&a.out.join("rules.jsonl"), &write_jsonl(&rules))?;
    write(&a.out.join("summary.json"), &pretty(&outcome))?;
    println!(
        "{} workers, {} responses, {} rules; positives {} unfiltered, {} filtered",
        outcome.workers.len(),
        responses.len(),
        rules.len(),
        outcome.unfiltered_positives,
        outcome.filtered_positives
    );
    Ok(())
}

#[derive(Debug, Args)]
pub struct JudgeExportArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub records: RecordArgs,
    #[arg(long)]
    pub sample: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Sample from every worker, including those that failed gold.
    #[arg(long)]
    pub unfiltered: bool,
    /// Writes `items.jsonl` (for the judge) and `map.json` (kept back).
    #[arg(long)]
    pub out: PathBuf,
}

pub fn judge_export(a: &JudgeExportArgs) -> anyhow::Result<()> {
    let ds = a.data.load()?;
    let (mut responses, mut rules) = a.records.load()?;
    if !a.unfiltered {
        let kept = filter_workers(&responses, &rules, &ds, &FilterConfig::default());
        responses = kept.responses;
        rules = kept.rules;
    }
    let positives = positive_pairs(&responses, &rules, &ds);
    let export = export_blinded(&positives, a.sample, a.seed, &ds);
    if export.clamped {
        eprintln!(
            "warning: only {} positives available, fewer than the {} requested",
            positives.len(),
            a.sample
        );
    }
    write(&a.out.join("items.jsonl"), &write_jsonl(&export.items))?;
    write(&a.out.join("map.json"), &pretty(&export.map))?;
    println!("{} items from {} positives", export.items.len(), positives.len());
    Ok(())
}

fn load_map(path: &Path) -> anyhow::Result<BlindMap> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

#[derive(Debug, Args)]
pub struct JudgeOracleArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[arg(long)]
    pub map: PathBuf,
    #[arg(long, default_value = "oracle")]
    pub judge_id: String,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn judge_oracle(a: &JudgeOracleArgs) -> anyhow::Result<()> {
    let ds = a.data.load()?;
    let truth_path = a.truth.clone().unwrap_or_else(|| a.data.data.join("truth.jsonl"));
    let truth = load_truth(&truth_path).with_context(|| format!("loading {}", truth_path.display()))?;
    let map = load_map(&a.map)?;
    let js = oracle_judgments(&map, &truth, &ds, &a.judge_id);
    write(&a.out, &write_jsonl(&js))?;
    println!("{} judgments", js.len());
    Ok(())
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub records: RecordArgs,
    #[arg(long, requires = "map")]
    pub judgments: Option<PathBuf>,
    #[arg(long)]
    pub map: Option<PathBuf>,
    /// two, less or greater.
    #[arg(long, default_value = "two")]
    pub tails: String,
    /// Keep workers who answered yes to fake gold.
    #[arg(long)]
    pub keep_fake_gold_failures: bool,
    /// Writes `report.json`, `report.txt` and `precision.svg`.
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_tails(s: &str) -> anyhow::Result<Tails> {
    Ok(match s {
        "two" => Tails::Two,
        "less" => Tails::Less,
        "greater" => Tails::Greater,
        other => bail!("unknown tails `{other}`; use two, less or greater"),
    })
}

pub fn analyze(a: &AnalyzeArgs) -> anyhow::Result<()> {
    let ds = a.data.load()?;
    let (responses, rules) = a.records.load()?;
    let map = match &a.map {
        Some(p) => load_map(p)?,
        None => BlindMap::new(),
    };
    let judgments = match &a.judgments {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            import_judgments(&text, &map).with_context(|| format!("importing {}", p.display()))?
        }
        None => vec![],
    };
    let cfg = ReportConfig {
        tails: parse_tails(&a.tails)?,
        filter: FilterConfig {
            fake_gold_filters: !a.keep_fake_gold_failures,
        },
    };
    let r = report(&responses, &rules, &map, &judgments, &ds, &cfg);
    let text = render_text(&r);
    write(&a.out.join("report.json"), &pretty(&r))?;
    write(&a.out.join("report.txt"), &text)?;
    write(&a.out.join("precision.svg"), &render_svg(&r))?;
    print!("{text}");
    Ok(())
}

#[derive(Debug, Args)]
pub struct CompileArgs {
    /// Rule in canonical text form, e.g. `( lit:has_bracket[] AND lit:!level_at_least[level=5] )`.
    #[arg(long)]
    pub expr: String,
    /// Predicate registry; defaults to the demo and road predicates.
    #[arg(long, conflicts_with = "data")]
    pub predicates: Option<PathBuf>,
    /// Dataset directory whose predicates to use.
    #[arg(long)]
    pub data: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Compiled {
    pub actions: Vec<BuilderAction>,
    pub tokens: String,
}

pub fn builtin_registry() -> PredicateRegistry {
    let mut specs = demo::predicates();
    specs.extend(demo::tires_predicates());
    PredicateRegistry::new(specs).expect("built-in predicates are valid")
}

pub fn compile(expr: &str, registry: &PredicateRegistry) -> anyhow::Result<Compiled> {
    let rule = parse_rule(expr).context("parsing --expr")?;
    if let Err(v) = validate_rule(&rule, registry) {
        let msgs: Vec<String> = v.iter().map(|x| x.to_string()).collect();
        bail!("rule does not fit the predicates: {}", msgs.join("; "));
    }
    let actions = rule_to_actions(&rule, registry)?;
    let b = replay(&actions, registry).map_err(|(i, e)| anyhow::anyhow!("action {i}: {e}"))?;
    Ok(Compiled {
        tokens: render_tokens(&b),
        actions,
    })
}

pub fn compile_dnf(a: &CompileArgs) -> anyhow::Result<()> {
    let registry = match (&a.predicates, &a.data) {
        (Some(p), _) => load_predicates(p).with_context(|| format!("loading {}", p.display()))?,
        (None, Some(d)) => {
            let p = d.join("predicates.jsonl");
            load_predicates(&p).with_context(|| format!("loading {}", p.display()))?
        }
        (None, None) => builtin_registry(),
    };
    print!("{}", pretty(&compile(&a.expr, &registry)?));
    Ok(())
}

pub fn demo_data(out: &Path) -> anyhow::Result<()> {
    let d = demo::generate();
    let dir = out.join("demo");
    d.write(&dir).with_context(|| format!("writing {}", dir.display()))?;
    write(
        &out.join("tires").join("predicates.jsonl"),
        &write_jsonl(&demo::tires_predicates()),
    )?;
    println!(
        "wrote {} states and {} actions to {}",
        d.states.len(),
        d.actions.len(),
        dir.display()
    );
    Ok(())
}

pub async fn serve(config_path: &Path) -> anyhow::Result<()> {
    let cfg = ServiceConfig::load(config_path)?;
    let ds = Arc::new(cfg.dataset()?);
    let (store, rec) = Store::open(&cfg.event_log, cfg.experiment(), ds, cfg.fsync, system_clock())?;
    if rec.truncated_bytes > 0 {
        tracing::warn!(
            bytes = rec.truncated_bytes,
            "dropped a torn last line from the event log"
        );
    }
    tracing::info!(events = rec.events, log = %cfg.event_log.display(), "replayed event log");
    let judging = match &cfg.judging {
        Some(j) => Some(Arc::new(Judging::open(&j.items, &j.judgments)?)),
        None => None,
    };
    let app = router(AppState {
        store: Arc::new(store),
        judging,
    });
    let listener = tokio::net::TcpListener::bind(&cfg.bind)
        .await
        .with_context(|| format!("binding {}", cfg.bind))?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}

/// Events from a log file, tolerating a torn last line.
pub fn load_events(path: &Path) -> anyhow::Result<Vec<Event>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(read_log(path, &text)?.0)
}

pub async fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Serve { config } => serve(&config).await,
        Command::Simulate(a) => simulate(&a),
        Command::JudgeExport(a) => judge_export(&a),
        Command::JudgeOracle(a) => judge_oracle(&a),
        Command::Analyze(a) => analyze(&a),
        Command::CompileDnf(a) => compile_dnf(&a),
        Command::DemoData { out } => demo_data(&out),
    }
}
