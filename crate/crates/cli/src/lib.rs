//! The `navxai` command-line tool.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or I/O error.

pub mod config;
pub mod experiment;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use navxai::advisor::TemplateBank;
use navxai::metrics::Grouping;
use navxai::policy::Strategy;
use navxai::predictor::{train_offline, Hyperparams, PredictorModel};
use navxai::session::{examples_from_log, EventPayload, FlowKind};
use navxai::simuser::PopulationPreset;
use navxai::world::{TaskBank, WorldConfig};

use config::FileConfig;
use experiment::{default_tasks, load_logs, render, report_from_log, write, write_outputs, Experiment};

#[derive(Debug, Parser)]
#[command(name = "navxai", version, about = "Grid-city navigation study: simulate, train, generate tasks, serve, report")]
pub struct Cli {
    /// TOML file supplying defaults for any flag.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run synthetic participants under one or more strategies.
    Simulate(SimulateArgs),
    /// Fit the decision predictor on stored session logs.
    Train(TrainArgs),
    /// Generate a bank of validated city tasks.
    GenTasks(GenTasksArgs),
    /// Serve the session HTTP API.
    Serve(ServeArgs),
    /// Aggregate metrics over stored session logs.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub seed: Option<u64>,
    /// Participants per condition.
    #[arg(long)]
    pub n: Option<usize>,
    /// paperlike, uniform or tree-lover.
    #[arg(long)]
    pub preset: Option<String>,
    /// Comma-separated strategies, e.g. balanced,preference,random,fixed-language.
    #[arg(long)]
    pub compare: Option<String>,
    /// headless-custom, personalization or population.
    #[arg(long)]
    pub flow: Option<String>,
    #[arg(long)]
    pub tasks: Option<PathBuf>,
    #[arg(long)]
    pub templates: Option<PathBuf>,
    #[arg(long)]
    pub error_rate: Option<f64>,
    /// Output directory for logs, tables and the summary.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Predictor for the balanced strategy; a pilot model is trained when absent.
    #[arg(long)]
    pub model: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Directory of session logs.
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    /// Model file to write.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct GenTasksArgs {
    /// Number of tasks.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Task-bank file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub bind: Option<String>,
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub tasks: Option<PathBuf>,
    #[arg(long)]
    pub templates: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Directory of session logs.
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    /// Directory for the CSV/JSON tables; the aggregate CSV goes to stdout either way.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// strategy, modality or strategy-modality.
    #[arg(long)]
    pub group_by: Option<String>,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(anyhow::Error),
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Data(e)
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli, out) {
        Ok(()) => 0,
        Err(CliError::Usage(m)) => {
            eprintln!("error: {m}");
            1
        }
        Err(CliError::Data(e)) => {
            eprintln!("error: {e:#}");
            2
        }
    }
}

pub fn execute(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    let file = match &cli.config {
        Some(p) => FileConfig::load(p).map_err(|e| usage(format!("{e:#}")))?,
        None => FileConfig::default(),
    };
    match cli.command {
        Command::Simulate(a) => simulate(a, &file, out),
        Command::Train(a) => train(a, &file, out),
        Command::GenTasks(a) => gen_tasks(a, &file, out),
        Command::Serve(a) => serve(a, &file, out),
        Command::Report(a) => report(a, &file, out),
    }
}

pub fn parse_compare(s: &str) -> Result<Vec<Strategy>, CliError> {
    s.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| p.parse::<Strategy>().map_err(|e| usage(e.to_string())))
        .collect()
}

pub fn parse_flow(s: &str) -> Result<FlowKind, CliError> {
    match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
        "headless-custom" | "headless" | "custom" => Ok(FlowKind::HeadlessCustom),
        "personalization" => Ok(FlowKind::Personalization),
        "population" => Ok(FlowKind::Population),
        other => Err(usage(format!("unknown flow '{other}'"))),
    }
}

fn read(path: &Path) -> anyhow::Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

pub fn load_tasks(path: &Path) -> anyhow::Result<TaskBank> {
    let bank = TaskBank::from_json(&read(path)?).with_context(|| format!("parsing task bank {}", path.display()))?;
    bank.validate().with_context(|| format!("task bank {}", path.display()))?;
    Ok(bank)
}

pub fn load_templates(path: &Path) -> anyhow::Result<TemplateBank> {
    TemplateBank::from_json(&read(path)?).with_context(|| format!("parsing template bank {}", path.display()))
}

pub fn load_model(path: &Path) -> anyhow::Result<PredictorModel> {
    PredictorModel::from_json(&read(path)?).with_context(|| format!("parsing model {}", path.display()))
}

fn pick<T: Clone>(flag: Option<T>, file: &Option<T>) -> Option<T> {
    flag.or_else(|| file.clone())
}

fn emit(out: &mut dyn Write, text: &str) -> Result<(), CliError> {
    out.write_all(text.as_bytes()).and_then(|_| out.flush()).context("writing output").map_err(CliError::Data)
}

fn simulate(a: SimulateArgs, f: &FileConfig, out: &mut dyn Write) -> Result<(), CliError> {
    let seed = pick(a.seed, &f.seed).unwrap_or(0);
    let n = pick(a.n, &f.n).unwrap_or(20);
    if n == 0 {
        return Err(usage("--n must be at least 1"));
    }
    let preset: PopulationPreset = pick(a.preset, &f.preset)
        .unwrap_or_else(|| "paperlike".into())
        .parse()
        .map_err(|e: navxai::simuser::SimUserError| usage(e.to_string()))?;
    let flow = parse_flow(&pick(a.flow, &f.flow).unwrap_or_else(|| "headless-custom".into()))?;
    let compare = parse_compare(&pick(a.compare, &f.compare).unwrap_or_else(|| "balanced,preference-max".into()))?;
    let error_rate = pick(a.error_rate, &f.error_rate).unwrap_or(0.30);
    if !(0.0..=1.0).contains(&error_rate) {
        return Err(usage(format!("--error-rate {error_rate} outside [0, 1]")));
    }
    let world = f.world.clone().unwrap_or_default();
    let tasks = match pick(a.tasks, &f.tasks) {
        Some(p) => load_tasks(&p)?,
        None => default_tasks(seed, &world)?,
    };
    let mut exp = Experiment::new(tasks);
    exp.flow = flow;
    exp.compare = compare;
    exp.preset = preset;
    exp.n = n;
    exp.seed = seed;
    exp.error_rate = error_rate;
    exp.templates = pick(a.templates, &f.templates).map(|p| load_templates(&p).map(Arc::new)).transpose()?;
    exp.model = pick(a.model, &f.model).map(|p| load_model(&p)).transpose()?;
    exp.pilot_sessions = f.pilot_sessions.unwrap_or(exp.pilot_sessions);
    exp.hyperparams = f.hyperparams.unwrap_or_default();
    exp.validate().map_err(|e| usage(e.to_string()))?;

    let output = exp.run()?;
    let grouping = grouping(f.group_by.as_deref().unwrap_or("strategy"))?;
    let rendered = match pick(a.out, &f.out) {
        Some(dir) => write_outputs(&dir, &output, grouping)?,
        None => render(&output.reports(), grouping),
    };
    let mut text = format!(
        "flow {} | preset {} | n {} per condition | seed {} | error rate {}\n",
        flow_label(flow),
        preset,
        n,
        seed,
        error_rate
    );
    if let Some(p) = &output.pilot {
        text += &format!(
            "pilot predictor: {} examples, loss {:.4}, accuracy {:.4}\n",
            p.report.examples, p.report.final_loss, p.report.accuracy
        );
    }
    text += "\n";
    text += &rendered.summary;
    emit(out, &text)
}

fn grouping(s: &str) -> Result<Grouping, CliError> {
    s.parse::<Grouping>().map_err(usage)
}

pub fn flow_label(flow: FlowKind) -> &'static str {
    match flow {
        FlowKind::HeadlessCustom => "headless-custom",
        FlowKind::Personalization => "personalization",
        FlowKind::Population => "population",
    }
}

#[derive(Debug, Serialize)]
pub struct TrainSummary {
    pub sessions: usize,
    pub train_sessions: usize,
    pub heldout_sessions: usize,
    pub train_examples: usize,
    pub heldout_examples: usize,
    pub epochs: usize,
    pub final_loss: f64,
    pub train_accuracy: f64,
    pub heldout_accuracy: f64,
    /// Share of the most common chosen direction in the held-out examples.
    pub majority_baseline: f64,
}

fn train(a: TrainArgs, f: &FileConfig, out: &mut dyn Write) -> Result<(), CliError> {
    let dir = pick(a.data_dir, &f.data_dir).ok_or_else(|| usage("train needs --data-dir"))?;
    let seed = pick(a.seed, &f.seed).unwrap_or(0);
    let hp: Hyperparams = f.hyperparams.unwrap_or_default();
    let mut logs = load_logs(&dir)?;
    logs.retain(|l| matches!(l.first().map(|e| &e.payload), Some(EventPayload::SessionCreated(_))));
    let id = |l: &Vec<navxai::session::Event>| match &l[0].payload {
        EventPayload::SessionCreated(c) => c.session_id.clone(),
        _ => String::new(),
    };
    logs.sort_by_key(id);
    // Every fifth session is held out; with fewer than five, the last one.
    let n_logs = logs.len();
    let heldout_of = |i: usize| match n_logs {
        0 | 1 => false,
        2..=4 => i == n_logs - 1,
        _ => i % 5 == 4,
    };
    let (mut train_ex, mut held_ex) = (Vec::new(), Vec::new());
    let mut held_sessions = 0;
    for (i, l) in logs.iter().enumerate() {
        if heldout_of(i) {
            held_sessions += 1;
            held_ex.extend(examples_from_log(l));
        } else {
            train_ex.extend(examples_from_log(l));
        }
    }
    if train_ex.is_empty() {
        return Err(CliError::Data(anyhow::anyhow!("no decisions found in logs under {}", dir.display())));
    }
    let (model, rep) = train_offline(&train_ex, &hp, seed).map_err(anyhow::Error::from)?;
    let eval = if held_ex.is_empty() { &train_ex } else { &held_ex };
    let mut counts = [0usize; 3];
    for ex in eval {
        counts[ex.label.index()] += 1;
    }
    let summary = TrainSummary {
        sessions: logs.len(),
        train_sessions: logs.len() - held_sessions,
        heldout_sessions: held_sessions,
        train_examples: train_ex.len(),
        heldout_examples: held_ex.len(),
        epochs: rep.epochs,
        final_loss: rep.final_loss,
        train_accuracy: rep.accuracy,
        heldout_accuracy: model.accuracy(eval).map_err(anyhow::Error::from)?,
        majority_baseline: *counts.iter().max().unwrap_or(&0) as f64 / eval.len() as f64,
    };
    if let Some(path) = pick(a.out, &f.out) {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
        }
        std::fs::write(&path, model.to_json()).with_context(|| format!("writing {}", path.display()))?;
    }
    emit(out, &(serde_json::to_string_pretty(&summary).expect("serializable") + "\n"))
}

fn gen_tasks(a: GenTasksArgs, f: &FileConfig, out: &mut dyn Write) -> Result<(), CliError> {
    let n = pick(a.n, &f.n).unwrap_or(experiment::DEFAULT_TASK_COUNT);
    if n == 0 {
        return Err(usage("--n must be at least 1"));
    }
    let seed = pick(a.seed, &f.seed).unwrap_or(0);
    let world: WorldConfig = f.world.clone().unwrap_or_default();
    let bank = TaskBank::generate(n, seed, &world).map_err(anyhow::Error::from)?;
    let json = bank.to_json();
    match pick(a.out, &f.out) {
        Some(path) => {
            std::fs::write(&path, &json).with_context(|| format!("writing {}", path.display()))?;
            emit(out, &format!("wrote {} tasks to {}\n", bank.tasks.len(), path.display()))
        }
        None => emit(out, &(json + "\n")),
    }
}

fn serve(a: ServeArgs, f: &FileConfig, out: &mut dyn Write) -> Result<(), CliError> {
    let bind = pick(a.bind, &f.bind).unwrap_or_else(|| "127.0.0.1:8080".into());
    let opts = navxai_server::ServeOptions {
        data_dir: pick(a.data_dir, &f.data_dir),
        model: pick(a.model, &f.model),
        tasks: pick(a.tasks, &f.tasks),
        templates: pick(a.templates, &f.templates),
        seed: pick(a.seed, &f.seed).unwrap_or(0),
    };
    let service = Arc::new(navxai_server::build_service(&opts).map_err(anyhow::Error::from)?);
    let rt = tokio::runtime::Runtime::new().context("starting the runtime")?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(&bind).await.with_context(|| format!("binding {bind}"))?;
        let addr = listener.local_addr().context("reading the bound address")?;
        writeln!(out, "listening on http://{addr}").and_then(|_| out.flush()).context("writing output")?;
        navxai_server::serve(listener, service, shutdown_signal()).await.context("serving")
    })?;
    emit(out, "shut down\n")
}

async fn shutdown_signal() {
    #[cfg(unix)]
    {
        use tokio::signal::unix::{signal, SignalKind};
        let mut term = signal(SignalKind::terminate()).expect("installing SIGTERM handler");
        tokio::select! {
            _ = tokio::signal::ctrl_c() => {}
            _ = term.recv() => {}
        }
    }
    #[cfg(not(unix))]
    {
        let _ = tokio::signal::ctrl_c().await;
    }
}

fn report(a: ReportArgs, f: &FileConfig, out: &mut dyn Write) -> Result<(), CliError> {
    let dir = pick(a.data_dir, &f.data_dir).ok_or_else(|| usage("report needs --data-dir"))?;
    let grouping = grouping(&pick(a.group_by, &f.group_by).unwrap_or_else(|| "strategy".into()))?;
    let reports = load_logs(&dir)?.iter().map(|l| report_from_log(l)).collect::<anyhow::Result<Vec<_>>>()?;
    let rendered = render(&reports, grouping);
    if let Some(dir) = pick(a.out, &f.out) {
        std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        write(&dir, "sessions.csv", &rendered.sessions_csv)?;
        write(&dir, "aggregate.csv", &rendered.aggregate_csv)?;
        write(&dir, "aggregate.json", &rendered.aggregate_json)?;
        write(&dir, "summary.txt", &rendered.summary)?;
    }
    emit(out, &rendered.aggregate_csv)
}
