//! Command-line front end. `run` returns the process exit code:
//! 0 on success, 1 for bad input or usage, 2 when the filesystem fails.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::baselines::{
    frame_histogram, sacd_evaluate, static_run, write_histogram, SacdAgent, SacdConfig, SacdFrameTable, SacdPolicy,
    StaticPolicy,
};
use crate::config::KeyValues;
use crate::ddqn::{load_policy, save_episode_log, train_loop, AgentConfig, DdqnAgent};
use crate::env::{action_table, save_step_log, EnvConfig, SbfdEnv};
use crate::error::{Error, Result};
use crate::eval::{emit_plots, run_compare, CompareInputs, PhaseAnnotation, Scheduler};
use crate::forecaster::{
    evaluate_mae, stitched_forecast, train, ForecastConfig, ForecastModel, ForecastTable, TrainConfig,
};
use crate::traffic::{build_chain, build_dataset, generate_trace, ChainConfig, FitScope, TrafficTrace};

#[derive(Parser, Debug)]
#[command(name = "sbfd", version, about = "Predictive SBFD UL/DL split scheduling")]
struct Cli {
    /// key=value overrides for the environment, agent and SAC-D settings
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// RNG seed (commands without randomness accept and ignore it)
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate an MMPP traffic trace (plus a `.phases.csv` sidecar)
    Generate(GenerateArgs),
    /// Train the CNN + Bi-LSTM forecaster
    TrainForecaster(TrainForecasterArgs),
    /// Train the DDQN split selector
    TrainAgent(TrainAgentArgs),
    /// Train the SAC-Discrete frame selector
    TrainSacd(TrainSacdArgs),
    /// Run a fixed split through the queued environment
    RunStatic(RunStaticArgs),
    /// Stitched multi-step forecast over a span of a trace
    Forecast(ForecastArgs),
    /// Run all three schedulers on one trace and report
    Compare(CompareArgs),
}

#[derive(Args, Debug)]
struct GenerateArgs {
    /// chain description; the default three-state chain if omitted
    #[arg(long)]
    chain: Option<PathBuf>,
    #[arg(long, default_value_t = 100_000)]
    slots: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct TrainForecasterArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 5)]
    epochs: usize,
    #[arg(long, default_value_t = 32)]
    batch: usize,
    #[arg(long, default_value_t = 4)]
    patience: usize,
    /// cap on gradient steps per epoch (whole epoch if omitted)
    #[arg(long)]
    max_steps: Option<usize>,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long)]
    quiet: bool,
}

#[derive(Args, Debug)]
struct TrainAgentArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    forecaster: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 100)]
    episodes: usize,
    /// episode log CSV
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TrainSacdArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    episodes: Option<usize>,
    /// greedy evaluation histogram over the whole trace
    #[arg(long)]
    histogram: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct RunStaticArgs {
    #[arg(long, default_value = "20:80")]
    split: StaticPolicy,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    start: usize,
    /// to the end of the trace if omitted
    #[arg(long)]
    slots: Option<usize>,
}

#[derive(Args, Debug)]
struct ForecastArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// first forecast slot; the model's lookback if omitted
    #[arg(long)]
    start: Option<usize>,
    #[arg(long, default_value_t = 800)]
    slots: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct CompareArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    forecaster: PathBuf,
    #[arg(long)]
    agent: PathBuf,
    #[arg(long)]
    sacd: PathBuf,
    #[arg(long, default_value = "20:80")]
    split: StaticPolicy,
    /// phase labels; the trace's `.phases.csv` sidecar, else demand thresholds
    #[arg(long)]
    phases: Option<PathBuf>,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long)]
    start: Option<usize>,
    #[arg(long)]
    slots: Option<usize>,
}

pub fn run<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_io() {
                2
            } else {
                1
            }
        }
    }
}

struct Settings {
    kv: KeyValues,
    seed: u64,
}

impl Settings {
    fn env(&self) -> Result<EnvConfig> {
        EnvConfig::from_key_values(&self.kv)
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    let kv = match &cli.config {
        Some(p) => KeyValues::load(p)?,
        None => KeyValues::default(),
    };
    let s = Settings { kv, seed: cli.seed };
    match cli.command {
        Command::Generate(a) => generate(&s, a),
        Command::TrainForecaster(a) => train_forecaster(&s, a),
        Command::TrainAgent(a) => train_agent(&s, a),
        Command::TrainSacd(a) => train_sacd(&s, a),
        Command::RunStatic(a) => run_static(&s, a),
        Command::Forecast(a) => forecast(a),
        Command::Compare(a) => compare(&s, a),
    }
}

fn generate(s: &Settings, a: GenerateArgs) -> Result<()> {
    let cfg = match &a.chain {
        Some(p) => ChainConfig::load(p)?,
        None => ChainConfig::default_three_state(),
    };
    let chain = build_chain(&cfg)?;
    let trace = generate_trace(&chain, a.slots, s.seed)?;
    trace.save_csv(&a.out)?;
    let capacity = s.env()?.capacity;
    let phases = PhaseAnnotation::from_hidden_states(&trace, &chain, capacity)?;
    let side = PhaseAnnotation::sidecar_path(&a.out);
    phases.save_csv(&side)?;
    println!("wrote {} slots to {} (phases in {})", trace.len(), a.out.display(), side.display());
    Ok(())
}

fn train_forecaster(s: &Settings, a: TrainForecasterArgs) -> Result<()> {
    let trace = TrafficTrace::load_csv(&a.data)?;
    let fc = ForecastConfig::default();
    let ds = build_dataset(&trace, fc.lookback, fc.horizon, FitScope::Train)?;
    let mut model = ForecastModel::<f32>::new(fc, s.seed)?;
    let mut cfg = TrainConfig {
        epochs: a.epochs,
        batch_size: a.batch,
        patience: a.patience,
        seed: s.seed,
        max_steps_per_epoch: a.max_steps,
        verbose: !a.quiet,
        ..TrainConfig::default()
    };
    cfg.adam.learning_rate = a.lr;
    let history = train(&mut model, &ds, &cfg)?;
    model.save(&a.out)?;
    let mae = evaluate_mae(&model, &ds, s.env()?.capacity as f64)?;
    println!(
        "trained {} epochs (best {}); test MAE UL {:.0} bits/slot ({:.2}%), DL {:.0} bits/slot ({:.2}%)",
        history.epochs.len(),
        history.best_epoch + 1,
        mae.ul_bits,
        mae.ul_pct,
        mae.dl_bits,
        mae.dl_pct
    );
    Ok(())
}

fn train_agent(s: &Settings, a: TrainAgentArgs) -> Result<()> {
    let trace = TrafficTrace::load_csv(&a.data)?;
    let model = ForecastModel::<f32>::load(&a.forecaster)?;
    let env_cfg = s.env()?;
    let mut agent_cfg = AgentConfig::from_key_values(&s.kv)?;
    agent_cfg.seed = s.seed;
    let table = ForecastTable::build(&model, &trace)?;
    let mut env = SbfdEnv::new(env_cfg, &trace, &table)?;
    let mut agent = DdqnAgent::<f32>::new(agent_cfg, env.state_dim(), env.actions().len())?;
    let logs = train_loop(&mut env, &mut agent, a.episodes)?;
    agent.save(&a.out)?;
    if let Some(p) = &a.log {
        save_episode_log(p, &logs)?;
    }
    if let (Some(first), Some(last)) = (logs.first(), logs.last()) {
        println!(
            "trained {} episodes: mean reward {:.4} -> {:.4}, epsilon {:.3}",
            logs.len(),
            first.mean_reward,
            last.mean_reward,
            last.epsilon
        );
    }
    Ok(())
}

fn train_sacd(s: &Settings, a: TrainSacdArgs) -> Result<()> {
    let trace = TrafficTrace::load_csv(&a.data)?;
    let mut cfg = SacdConfig::from_key_values(&s.kv)?;
    cfg.seed = s.seed;
    if let Some(n) = a.episodes {
        cfg.episodes = n;
    }
    let frames = if s.kv.contains("frame.0.ul") {
        SacdFrameTable::from_key_values(&s.kv)?
    } else {
        SacdFrameTable::default()
    };
    let mut agent = SacdAgent::<f32>::new(cfg, frames)?;
    agent.train(&trace)?;
    let policy = agent.policy();
    policy.save(&a.out)?;
    let slots = sacd_evaluate(&policy, &trace, 0, trace.len(), cfg.episode_len, cfg.capacity)?;
    let counts = frame_histogram(&slots, policy.frames.len());
    if let Some(p) = &a.histogram {
        let mut buf = Vec::new();
        write_histogram(&mut buf, &policy.frames, &counts).expect("writing to memory");
        std::fs::write(p, buf).map_err(|e| Error::io(p, e))?;
    }
    let shares: Vec<String> = policy
        .frames
        .frames()
        .iter()
        .zip(&counts)
        .map(|(f, c)| format!("{} {:.1}%", f.name, 100.0 * *c as f64 / slots.len().max(1) as f64))
        .collect();
    println!("trained {} episodes; greedy frames: {}", cfg.episodes, shares.join(", "));
    Ok(())
}

fn run_static(s: &Settings, a: RunStaticArgs) -> Result<()> {
    let trace = TrafficTrace::load_csv(&a.data)?;
    let len = match a.slots {
        Some(n) => n,
        None => trace.len().checked_sub(a.start).ok_or(Error::TraceTooShort {
            len: trace.len(),
            needed: a.start,
        })?,
    };
    let records = static_run(&trace, a.split, &s.env()?, a.start, len)?;
    save_step_log(&a.out, &records)?;
    let last = records.last().map_or((0, 0), |r| (r.q_ul, r.q_dl));
    println!("{} slots at {}; final queues UL {} DL {} bits", records.len(), a.split.split, last.0, last.1);
    Ok(())
}

fn forecast(a: ForecastArgs) -> Result<()> {
    let trace = TrafficTrace::load_csv(&a.data)?;
    let model = ForecastModel::<f32>::load(&a.ckpt)?;
    let norm = *model.require_normalizer()?;
    let start = a.start.unwrap_or(model.config().lookback);
    let f = stitched_forecast(&model, &trace, &norm, start, a.slots)?;
    let mut body = String::from("slot,pred_ul_bits,pred_dl_bits,true_ul_bits,true_dl_bits\n");
    for (k, p) in f.bits.iter().enumerate() {
        let d = trace.slot(start + k);
        body.push_str(&format!("{},{:.1},{:.1},{},{}\n", start + k, p[0], p[1], d.ul, d.dl));
    }
    std::fs::write(&a.out, body).map_err(|e| Error::io(&a.out, e))?;
    let (u, d) = f.mae_against(&trace);
    println!("{} slots from {start}; MAE UL {u:.0} DL {d:.0} bits/slot", f.len());
    Ok(())
}

fn load_phases(explicit: Option<&Path>, data: &Path, trace: &TrafficTrace, capacity: u64) -> Result<PhaseAnnotation> {
    let side = PhaseAnnotation::sidecar_path(data);
    match explicit {
        Some(p) => PhaseAnnotation::load_csv(p),
        None if side.exists() => PhaseAnnotation::load_csv(&side),
        None => Ok(PhaseAnnotation::from_thresholds(trace, capacity)),
    }
}

fn compare(s: &Settings, a: CompareArgs) -> Result<()> {
    let trace = TrafficTrace::load_csv(&a.data)?;
    let env = s.env()?;
    let phases = load_phases(a.phases.as_deref(), &a.data, &trace, env.capacity)?;
    let forecaster = ForecastModel::<f32>::load(&a.forecaster)?;
    let ddqn = load_policy::<f32>(&a.agent)?;
    let sacd = SacdPolicy::<f32>::load(&a.sacd)?;
    let sacd_cfg = SacdConfig::from_key_values(&s.kv)?;
    let span = match (a.start, a.slots) {
        (None, None) => None,
        (start, slots) => {
            let start = start.unwrap_or(forecaster.config().lookback);
            let n = slots.unwrap_or(trace.len().saturating_sub(start));
            Some(start..start + n)
        }
    };
    let out = run_compare(&CompareInputs {
        trace: &trace,
        phases: &phases,
        forecaster: &forecaster,
        ddqn: &ddqn,
        sacd: &sacd,
        static_policy: a.split,
        env,
        sacd_episode_len: sacd_cfg.episode_len,
        span,
    })?;
    std::fs::create_dir_all(&a.out_dir).map_err(|e| Error::io(&a.out_dir, e))?;
    let table = action_table();
    let labels = |sched: Scheduler, i: usize| match sched {
        Scheduler::Sacd => sacd.frames.get(i).map_or_else(|_| i.to_string(), |f| f.name.clone()),
        _ => table.get(i).map_or_else(|_| i.to_string(), |sp| sp.to_string()),
    };
    out.report
        .save(&a.out_dir.join("report.csv"), &a.out_dir.join("report.txt"), &labels)?;
    emit_plots(&out, &trace, &a.out_dir)?;
    print!("{}", out.report.to_text(&labels));
    Ok(())
}
