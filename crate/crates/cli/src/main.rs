use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use oikos_bridge::{serve, ServeConfig, SessionSource};
use oikos_core::assets;
use oikos_core::populate::{parse_rules, populate};
use oikos_core::runtime::policy::{scripted, Policy, RandomPolicy};
use oikos_core::runtime::{bench, replay, resolve_scene, ActionCommand, EpisodeLog, Session, TaskSpec};
use oikos_core::sampling::{apply_conditions, parse_conditions, DEFAULT_MAX_ATTEMPTS};
use oikos_core::taxonomy::Taxonomy;
use oikos_core::world::{SceneDoc, World};

#[derive(Parser)]
#[command(name = "oikos", version, about = "Household-activity simulation kernel")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one episode of a task.
    Run {
        /// Task file, or the name of a bundled task.
        task: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the episode log here.
        #[arg(long)]
        record: Option<PathBuf>,
        /// `scripted:<name>`, `random:<seed>` or `idle`. Defaults to the
        /// task's own scripted policy.
        #[arg(long)]
        policy: Option<String>,
        /// Print predicate flips as they happen.
        #[arg(long)]
        events: bool,
    },
    /// Re-simulate a log and check every step digest.
    Replay {
        log: PathBuf,
        /// Scene to replay against; defaults to the one named in the log.
        #[arg(long)]
        scene: Option<PathBuf>,
    },
    /// Sample a scene satisfying a list of conditions.
    Sample {
        scene: PathBuf,
        conditions: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Fill a scene with objects according to population rules.
    Populate {
        scene: PathBuf,
        rules: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        output: PathBuf,
        /// Write the population report here as JSON.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Measure step throughput on an idle session.
    Bench {
        scene: PathBuf,
        #[arg(long, default_value_t = 1000)]
        steps: u64,
    },
    /// Serve a task over WebSocket with a static HTTP endpoint.
    Serve {
        task: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "127.0.0.1")]
        bind: std::net::IpAddr,
        /// Directory of console assets served at `/`.
        #[arg(long = "static")]
        static_dir: Option<PathBuf>,
        /// Directory for recorded logs.
        #[arg(long, default_value = "logs")]
        logs: PathBuf,
    },
}

fn taxonomy() -> Arc<Taxonomy> {
    Arc::new(Taxonomy::builtin())
}

/// Reads a file, falling back to a bundled asset of the same name.
fn read_input(path: &Path, bundled: impl Fn(&str) -> Option<&'static str>) -> Result<Vec<u8>> {
    match std::fs::read(path) {
        Ok(b) => Ok(b),
        Err(e) => match bundled(&path.to_string_lossy()) {
            Some(text) => Ok(text.as_bytes().to_vec()),
            None => Err(e).with_context(|| format!("cannot read {}", path.display())),
        },
    }
}

fn load_scene(path: &Path) -> Result<SceneDoc> {
    let bytes = read_input(path, assets::scene)?;
    SceneDoc::from_json(&bytes).with_context(|| format!("invalid scene {}", path.display()))
}

fn load_task(path: &Path) -> Result<(TaskSpec, SceneDoc)> {
    let task = TaskSpec::load(path).with_context(|| format!("cannot load task {}", path.display()))?;
    let scene = task.scene(Some(path)).with_context(|| format!("cannot resolve scene `{}`", task.scene))?;
    Ok((task, scene))
}

fn policy_for(spec: Option<&str>, task: &TaskSpec) -> Result<(String, Option<Box<dyn Policy>>)> {
    let spec = match spec {
        Some(s) => s.to_string(),
        None => match &task.policy {
            Some(p) => format!("scripted:{p}"),
            None => "idle".into(),
        },
    };
    let policy: Option<Box<dyn Policy>> = match spec.split_once(':') {
        Some(("scripted", name)) => match scripted(name) {
            Some(s) => Some(Box::new(s)),
            None => bail!("no scripted policy named `{name}`"),
        },
        Some(("random", seed)) => Some(Box::new(RandomPolicy::new(seed.parse().context("random policy seed")?))),
        None if spec == "idle" => None,
        _ => bail!("unknown policy `{spec}`; use scripted:<name>, random:<seed> or idle"),
    };
    Ok((spec, policy))
}

fn run(task_path: &Path, seed: u64, record: Option<&Path>, policy: Option<&str>, events: bool) -> Result<ExitCode> {
    let (task, scene) = load_task(task_path)?;
    let (label, mut policy) = policy_for(policy, &task)?;
    let mut session = Session::new(&scene, taxonomy(), &task, seed)?;
    println!("task: {}", task.name);
    println!("seed: {seed}");
    println!("policy: {label}");
    while !session.done() {
        let actions = match policy.as_mut() {
            Some(p) => p.act(session.world()),
            None => vec![ActionCommand::Noop],
        };
        let r = session.step(&actions)?;
        if events {
            for e in &r.events {
                println!("step {}: {} {} -> {}", e.step, e.expr, e.old, e.new);
            }
        }
    }
    println!("steps: {}", session.step_index());
    match session.success_step() {
        Some(s) => println!("success: true (step {s})"),
        None => println!("success: false"),
    }
    println!("final digest: {}", session.world().digest_hex());
    if let Some(path) = record {
        session.log().write(path).with_context(|| format!("cannot write {}", path.display()))?;
        println!("recorded: {}", path.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn replay_cmd(path: &Path, scene: Option<&Path>) -> Result<ExitCode> {
    let log = EpisodeLog::read(path).with_context(|| format!("cannot read log {}", path.display()))?;
    let scene = match scene {
        Some(p) => load_scene(p)?,
        None => resolve_scene(&log.header.scene_ref, path.parent())
            .or_else(|_| resolve_scene(&log.header.scene_ref, None))
            .with_context(|| format!("cannot resolve scene `{}`", log.header.scene_ref))?,
    };
    match replay(&log, &scene, taxonomy()) {
        Ok(r) => {
            println!("replay ok: {} steps", r.step_digests.len());
            match r.success_step {
                Some(s) => println!("success: true (step {s})"),
                None => println!("success: false"),
            }
            println!("final digest: {}", r.final_digest);
            for m in &log.footer.markers {
                println!("marker: step {} {}", m.step, m.label);
            }
            Ok(ExitCode::SUCCESS)
        }
        Err(e) => {
            eprintln!("replay failed: {e}");
            Ok(ExitCode::FAILURE)
        }
    }
}

fn sample_cmd(scene: &Path, conditions: &Path, seed: u64, output: &Path) -> Result<ExitCode> {
    let scene = load_scene(scene)?;
    let text = String::from_utf8(read_input(conditions, assets::file)?).context("conditions are not UTF-8")?;
    let mut world = World::from_scene(taxonomy(), &scene)?;
    let conds = parse_conditions(&text)?;
    apply_conditions(&mut world, &conds, &mut ChaCha8Rng::seed_from_u64(seed), DEFAULT_MAX_ATTEMPTS)?;
    let out = world.to_scene();
    std::fs::write(output, out.to_json()).with_context(|| format!("cannot write {}", output.display()))?;
    println!("sampled {} conditions; scene digest {}", conds.len(), out.digest_hex());
    Ok(ExitCode::SUCCESS)
}

fn populate_cmd(scene: &Path, rules: &Path, seed: u64, output: &Path, report_path: Option<&Path>) -> Result<ExitCode> {
    let scene = load_scene(scene)?;
    let rules = parse_rules(&read_input(rules, assets::file)?)?;
    let mut world = World::from_scene(taxonomy(), &scene)?;
    let report = populate(&mut world, &rules, &mut ChaCha8Rng::seed_from_u64(seed))?;
    let out = world.to_scene();
    std::fs::write(output, out.to_json()).with_context(|| format!("cannot write {}", output.display()))?;
    for (i, r) in report.rules.iter().enumerate() {
        println!(
            "rule {i}: {} candidates, {} activated, {} placed, {} skipped",
            r.candidates, r.activated, r.placed, r.skipped
        );
    }
    println!("objects added: {}", report.object_delta);
    for f in &report.post_check_failures {
        println!("no longer holds after settling: {f}");
    }
    println!("scene digest: {}", out.digest_hex());
    if let Some(p) = report_path {
        std::fs::write(p, serde_json::to_string_pretty(&report)?).with_context(|| format!("cannot write {}", p.display()))?;
    }
    Ok(ExitCode::SUCCESS)
}

fn bench_cmd(scene: &Path, steps: u64) -> Result<ExitCode> {
    let scene = load_scene(scene)?;
    let r = bench(&scene, taxonomy(), steps)?;
    println!("objects: {}", r.objects);
    println!("steps: {}", r.steps);
    println!("steps/s mean: {:.1}", r.mean);
    println!("steps/s min: {:.1}", r.min);
    println!("steps/s max: {:.1}", r.max);
    println!("final digest: {}", r.final_digest);
    Ok(ExitCode::SUCCESS)
}

fn serve_cmd(task: &Path, config: ServeConfig, seed: u64) -> Result<ExitCode> {
    let source = SessionSource::from_task_file(task, seed)?;
    let handle = serve(source, config)?;
    println!("listening on http://{0}/ (websocket ws://{0}/)", handle.local_addr());
    handle.wait();
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { task, seed, record, policy, events } => run(&task, seed, record.as_deref(), policy.as_deref(), events),
        Command::Replay { log, scene } => replay_cmd(&log, scene.as_deref()),
        Command::Sample { scene, conditions, seed, output } => sample_cmd(&scene, &conditions, seed, &output),
        Command::Populate { scene, rules, seed, output, report } => populate_cmd(&scene, &rules, seed, &output, report.as_deref()),
        Command::Bench { scene, steps } => bench_cmd(&scene, steps),
        Command::Serve { task, port, seed, bind, static_dir, logs } => {
            let config = ServeConfig { bind, port, static_dir, log_dir: logs, ..Default::default() };
            serve_cmd(&task, config, seed)
        }
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
