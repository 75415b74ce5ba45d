use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use labplan::backends::{latency_report, LatencyRecord, Module};
use labplan::controller::{evaluate_move, train_policy, Algorithm, LinearPolicy, ScriptedController, TrainConfig, HELD_OUT_BASE};
use labplan::grounder::{ground, render_primitives, GroundingContext};
use labplan::harness::{
    ablation_config, decoupling_config, decoupling_experiment, generate_datasets, load_triples, run_ablation_grid, run_task_eval, run_trial,
    trial_setup, Check, DataGenConfig, EvalConfig, PipelineVariant, TrialId, TrialResources,
};
use labplan::plan_ir::{parse_instruction, write_plan_file, Goal, TaskKind};
use labplan::predictor::{held_out_mse, train, Denoiser, PredictorConfig};
use labplan::reasoner::{audit_errors, check_constraints, refine_loop, ReasonerConfig};
use labplan::simulator::observe;

#[derive(Parser)]
#[command(name = "labplan", version, about = "Plan, ground and execute lab manipulation tasks in a 2-D simulator")]
struct Cli {
    /// TOML file with optional [eval], [data], [predictor] and [controller] tables.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone)]
struct TrialArgs {
    #[arg(long, default_value = "pick_place")]
    task: TaskKind,
    #[arg(long, default_value_t = 0)]
    prompt: usize,
    #[arg(long, default_value_t = 0)]
    scene: usize,
    /// Pipeline variant id (full, no-predictor, no-task-planner, direct, flat, cot-wo-stepN).
    #[arg(long)]
    variant: Option<String>,
}

#[derive(Args, Clone, Default)]
struct SweepArgs {
    /// Comma-separated task list.
    #[arg(long, value_delimiter = ',')]
    tasks: Vec<TaskKind>,
    #[arg(long)]
    prompts: Option<usize>,
    #[arg(long)]
    scenes: Option<usize>,
    #[arg(long)]
    variant: Option<String>,
    /// Per-line planner corruption rate.
    #[arg(long)]
    corruption: Option<f64>,
    #[arg(long)]
    defect_rate: Option<f64>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    predictor: Option<PathBuf>,
    #[arg(long)]
    policy: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Print the refined plan for one trial's goal.
    Plan {
        #[command(flatten)]
        trial: TrialArgs,
        /// Plan this goal text instead of the sampled prompt.
        #[arg(long)]
        goal: Option<String>,
    },
    /// Ground one instruction against a trial's initial scene.
    Ground {
        #[command(flatten)]
        trial: TrialArgs,
        #[arg(long)]
        instruction: String,
    },
    /// Run one trial end to end and print its record.
    Run {
        #[command(flatten)]
        trial: TrialArgs,
    },
    /// Full evaluation sweep.
    Eval {
        #[command(flatten)]
        sweep: SweepArgs,
        /// Exit nonzero unless counts are conserved and, for the noiseless rule
        /// pipeline, every trial succeeds with no E1/E2.
        #[arg(long)]
        check: bool,
    },
    /// Run every pipeline variant under the same seeds.
    Ablate {
        #[command(flatten)]
        sweep: SweepArgs,
        /// Variant ids; the whole grid when empty.
        #[arg(long, value_delimiter = ',')]
        variants: Vec<String>,
    },
    /// Factorized pipeline against the flat baseline on mix and crystallize.
    Decouple {
        #[command(flatten)]
        sweep: SweepArgs,
    },
    /// Scripted rollouts for predictor and controller training.
    GenData {
        /// Rollouts per task instead of the task table counts.
        #[arg(long)]
        count: Option<usize>,
        #[arg(long, value_delimiter = ',')]
        tasks: Vec<TaskKind>,
    },
    TrainPredictor {
        /// Triples file or gen-data output directory.
        #[arg(long)]
        data: PathBuf,
        /// Held-out triples for the MSE report.
        #[arg(long)]
        held_out: Option<PathBuf>,
        #[arg(long)]
        steps: Option<usize>,
        /// Small-batch schedule (lr 1e-5, batch 1) instead of the desk schedule.
        #[arg(long)]
        slow: bool,
    },
    TrainController {
        #[arg(long)]
        budget: Option<usize>,
        #[arg(long)]
        actor_critic: bool,
        /// Held-out Move scenes for the success report.
        #[arg(long, default_value_t = 200)]
        eval_scenes: u64,
    },
    /// Per-module latency summary, from `MODULE=ms` samples or a small measured sweep.
    Latency {
        /// e.g. LLM=3024
        #[arg(long = "sample")]
        samples: Vec<String>,
        /// Modules that run inside the control loop.
        #[arg(long, value_delimiter = ',', default_value = "RL")]
        online: Vec<String>,
    },
}

#[derive(Deserialize, Default)]
#[serde(default)]
struct FileConfig {
    eval: EvalConfig,
    data: DataGenConfig,
    predictor: Option<PredictorConfig>,
    controller: TrainConfig,
}

fn load_config(path: Option<&Path>) -> Result<FileConfig> {
    match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing {}", p.display()))
        }
        None => Ok(FileConfig::default()),
    }
}

fn apply_sweep(mut c: EvalConfig, a: &SweepArgs) -> Result<EvalConfig> {
    if !a.tasks.is_empty() {
        c.tasks = a.tasks.clone();
    }
    if let Some(v) = a.prompts {
        c.prompts_per_task = v;
    }
    if let Some(v) = a.scenes {
        c.scenes_per_prompt = v;
    }
    if let Some(v) = &a.variant {
        c.variant = PipelineVariant::named(v)?;
    }
    if let Some(v) = a.corruption {
        c.corruption = v;
    }
    if let Some(v) = a.defect_rate {
        c.defect_rate = v;
    }
    if a.threads.is_some() {
        c.threads = a.threads;
    }
    if a.predictor.is_some() {
        c.predictor_path = a.predictor.clone();
    }
    if a.policy.is_some() {
        c.policy_path = a.policy.clone();
    }
    Ok(c)
}

fn resources(c: &EvalConfig) -> Result<TrialResources> {
    let policy = match &c.policy_path {
        Some(p) => Some(LinearPolicy::load(BufReader::new(File::open(p).with_context(|| format!("opening {}", p.display()))?))?),
        None => None,
    };
    let predictor = match &c.predictor_path {
        Some(p) => Some(Arc::new(Denoiser::load(BufReader::new(File::open(p).with_context(|| format!("opening {}", p.display()))?))?)),
        None => None,
    };
    Ok(TrialResources { backend: c.build_backend()?, policy, predictor })
}

fn print_checks(checks: &[Check]) -> bool {
    for c in checks {
        println!("[{}] {}: {}", if c.passed { "pass" } else { "FAIL" }, c.name, c.detail);
    }
    checks.iter().all(|c| c.passed)
}

fn trial_config(base: &EvalConfig, t: &TrialArgs) -> Result<EvalConfig> {
    let mut c = base.clone();
    c.tasks = vec![t.task];
    if let Some(v) = &t.variant {
        c.variant = PipelineVariant::named(v)?;
    }
    Ok(c)
}

fn main() -> ExitCode {
    match run() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run() -> Result<bool> {
    let cli = Cli::parse();
    let mut file = load_config(cli.config.as_deref())?;
    if let Some(s) = cli.seed {
        file.eval.seed = s;
        file.data.seed = s;
        file.controller.seed = s;
        if let Some(p) = &mut file.predictor {
            p.seed = s;
        }
    }
    let out = cli.out;
    match cli.cmd {
        Cmd::Plan { trial, goal } => {
            let c = trial_config(&file.eval, &trial)?;
            let (_, prompt, world) = trial_setup(&c, TrialId { task: trial.task, prompt: trial.prompt, scene: trial.scene })
                .map_err(anyhow::Error::msg)?;
            let goal = Goal::new(goal.as_deref().unwrap_or(&prompt))?;
            let schema = world.schema();
            let rcfg = ReasonerConfig { stages: c.variant.stages, max_phi_iters: c.max_phi_iters, ..ReasonerConfig::default() };
            let res = refine_loop(&goal, &schema, &rcfg, &c.build_backend()?)?;
            println!("# goal: {}", goal.text());
            print!("{}", write_plan_file(&res.plan));
            let violations = check_constraints(&res.plan, &schema, &rcfg.active_pack(&[]))?;
            let audit = audit_errors(&res.plan, &schema);
            println!("# iterations {}, violations {}, E1 {}, E2 {}", res.iterations, violations.len(), audit.has_e1(), audit.has_e2());
            Ok(true)
        }
        Cmd::Ground { trial, instruction } => {
            let c = trial_config(&file.eval, &trial)?;
            let (_, _, world) = trial_setup(&c, TrialId { task: trial.task, prompt: trial.prompt, scene: trial.scene })
                .map_err(anyhow::Error::msg)?;
            let step = parse_instruction(1, &instruction, None);
            let seq = ground(&GroundingContext::new(step, observe(&world)), &c.build_backend()?)?;
            println!("{}", render_primitives(&seq));
            Ok(true)
        }
        Cmd::Run { trial } => {
            let c = trial_config(&file.eval, &trial)?;
            let rec = run_trial(&c, TrialId { task: trial.task, prompt: trial.prompt, scene: trial.scene }, &resources(&c)?);
            println!("{}", serde_json::to_string_pretty(&rec)?);
            Ok(rec.success)
        }
        Cmd::Eval { sweep, check } => {
            let c = apply_sweep(file.eval, &sweep)?;
            let report = run_task_eval(&c, &resources(&c)?)?;
            report.write(&out, "eval")?;
            print!("{}", report.to_csv());
            println!("fingerprint {}; reports in {}", report.fingerprint, out.display());
            if !check {
                return Ok(true);
            }
            let mut checks = Vec::new();
            for t in &report.tasks {
                checks.push(Check {
                    name: format!("{} trial count", t.task),
                    passed: t.trials == c.trials_per_task() && t.is_conserved(),
                    detail: format!("{} trials, {} successes", t.trials, t.successes),
                });
                let upper_bound = c.corruption == 0.0 && c.defect_rate == 0.0 && c.variant == PipelineVariant::full();
                if upper_bound {
                    checks.push(Check {
                        name: format!("{} noiseless pipeline", t.task),
                        passed: t.success_rate == 100.0 && t.e1_rate == 0.0 && t.e2_rate == 0.0,
                        detail: format!("success {:.1}%, E1 {:.1}%, E2 {:.1}%", t.success_rate, t.e1_rate, t.e2_rate),
                    });
                }
            }
            Ok(print_checks(&checks))
        }
        Cmd::Ablate { sweep, variants } => {
            let base = if cli.config.is_some() { file.eval } else { ablation_config(file.eval.seed) };
            let c = apply_sweep(base, &sweep)?;
            let grid = if variants.is_empty() {
                PipelineVariant::grid()
            } else {
                variants.iter().map(|v| PipelineVariant::named(v)).collect::<Result<_, _>>()?
            };
            let report = run_ablation_grid(&c, &grid, &resources(&c)?)?;
            report.write(&out)?;
            print!("{}", report.to_csv());
            Ok(print_checks(&report.checks))
        }
        Cmd::Decouple { sweep } => {
            let base = if cli.config.is_some() { file.eval } else { decoupling_config(file.eval.seed) };
            let c = apply_sweep(base, &sweep)?;
            let report = decoupling_experiment(&c, &resources(&c)?)?;
            report.write(&out)?;
            Ok(print_checks(&report.checks))
        }
        Cmd::GenData { count, tasks } => {
            let mut d = file.data;
            if !tasks.is_empty() {
                d.tasks = tasks;
            }
            if let Some(n) = count {
                d.counts = d.tasks.iter().map(|k| (*k, n)).collect();
            }
            for f in generate_datasets(&d, &out)? {
                println!("{}: {} rollouts -> {}", f.task, f.rollouts, f.triples.display());
            }
            Ok(true)
        }
        Cmd::TrainPredictor { data, held_out, steps, slow } => {
            let mut cfg = file.predictor.unwrap_or_else(|| if slow { PredictorConfig::default() } else { PredictorConfig::desk() });
            if let Some(s) = steps {
                cfg.train_steps = s;
            }
            let triples = load_triples(&data)?;
            println!("training on {} triples for {} steps", triples.len(), cfg.train_steps);
            let (model, curve) = train(&triples, &cfg)?;
            std::fs::create_dir_all(&out)?;
            model.save(BufWriter::new(File::create(out.join("predictor.ckpt"))?))?;
            std::fs::write(out.join("predictor_loss.csv"), curve.to_csv())?;
            if let Some(h) = held_out {
                let ho = load_triples(&h)?;
                let a = held_out_mse(&model, &ho, cfg.seed, false)?;
                let b = held_out_mse(&model, &ho, cfg.seed, true)?;
                println!("held-out mse {:.5}, copy baseline {:.5}, shuffled instructions {:.5}", a.mse, a.copy_mse, b.mse);
            }
            println!("checkpoint {}", out.join("predictor.ckpt").display());
            Ok(true)
        }
        Cmd::TrainController { budget, actor_critic, eval_scenes } => {
            let mut cfg = file.controller;
            if let Some(b) = budget {
                cfg.budget = b;
            }
            if actor_critic {
                cfg.algorithm = Algorithm::ActorCritic;
            }
            let (mut policy, log) = train_policy(&cfg)?;
            std::fs::create_dir_all(&out)?;
            policy.save(BufWriter::new(File::create(out.join("policy.ckpt"))?))?;
            std::fs::write(out.join("controller_log.csv"), log.to_csv())?;
            let seeds = HELD_OUT_BASE..HELD_OUT_BASE + eval_scenes;
            let learned = evaluate_move(&mut policy, seeds.clone())?;
            let scripted = evaluate_move(&mut ScriptedController::default(), seeds)?;
            println!("held-out Move success: learned {:.1}%, scripted {:.1}%", learned * 100.0, scripted * 100.0);
            Ok(true)
        }
        Cmd::Latency { samples, online } => {
            let online: Vec<Module> = online.iter().map(|m| m.to_ascii_uppercase().parse()).collect::<Result<_, _>>().map_err(anyhow::Error::msg)?;
            let records: Vec<LatencyRecord> = if samples.is_empty() {
                let c = EvalConfig { prompts_per_task: 2, scenes_per_prompt: 2, ..file.eval };
                run_task_eval(&c, &resources(&c)?)?.records.iter().flat_map(|r| r.latency.clone()).collect()
            } else {
                let mut v = Vec::new();
                for s in &samples {
                    let (m, ms) = s.split_once('=').with_context(|| format!("expected MODULE=ms, got '{s}'"))?;
                    let module: Module = m.trim().to_ascii_uppercase().parse().map_err(anyhow::Error::msg)?;
                    v.push(LatencyRecord { module, ms: ms.trim().parse()?, online: online.contains(&module) });
                }
                v
            };
            if records.is_empty() {
                bail!("no latency samples");
            }
            print!("{}", latency_report(&records).to_csv());
            Ok(true)
        }
    }
}
