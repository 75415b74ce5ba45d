//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits nonzero
//! if any criterion fails. Tolerances are the constants below.

mod common;

use std::time::{Duration, Instant};

use labplan::backends::{latency_report, LatencyRecord, Module};
use labplan::controller::{
    evaluate_move, move_env, reward, train_policy, ControlAction, ControlObservation, RewardWeights, ScriptedController,
    TickEvents, TrainConfig, HELD_OUT_BASE, V_MAX,
};
use labplan::grounder::{parse_primitives, render_primitives};
use labplan::harness::{
    ablation_config, decoupling_config, decoupling_experiment, generate_task, run_ablation_grid, run_task_eval, EvalConfig,
    PipelineVariant, TrialResources,
};
use labplan::plan_ir::{diff_plans, parse_plan, render_plan, Goal, TaskKind};
use labplan::predictor::{held_out_mse, make_schedule, sample_chain, train, Cond, NoiseModel, NoiseSchedule, PredictorConfig};
use labplan::reasoner::{audit_errors, check_constraints, refine_loop, validate_and_correct, ReasonerConfig};
use labplan::simulator::{sample_prompt, sample_scene, schema_for, step_primitive, step_primitive_traced, trace_hash};
use labplan::tasks::{entry, TaskSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const PHI_MAX_ITERATIONS: usize = 2;
const PHI_SEEDS: u64 = 50;
const PHI_BUDGET: Duration = Duration::from_secs(30);
const ROUND_TRIP_CASES: u64 = 10_000;
const CONSERVATION_SEQUENCES: u64 = 1_000;
const DIFFUSION_STEPS: usize = 100;
const COMPOSITION_TOL: f64 = 1e-6;
const ORACLE_TOL: f64 = 1e-3;
const MARGINAL_DRAWS: usize = 10_000;
const MARGINAL_MEAN_TOL: f64 = 0.15;
const MARGINAL_VAR: (f64, f64) = (0.8, 1.2);
const DIFFUSION_BUDGET: Duration = Duration::from_secs(120);
const PREDICTOR_RATIO: f64 = 0.5;
const PREDICTOR_HELD_OUT_PER_TASK: usize = 10;
const PREDICTOR_HELD_OUT_SEED: u64 = 99;
const PREDICTOR_BUDGET: Duration = Duration::from_secs(15 * 60);
const SCRIPTED_SCENES: u64 = 1_000;
const TICK_SLACK: u32 = 5;
const LEARNED_SCENES: u64 = 200;
const LEARNED_MIN_SUCCESS: f64 = 0.8;
const CONTROLLER_BUDGET: Duration = Duration::from_secs(10 * 60);
const TRIALS_PER_TASK: usize = 1_000;
const DECOUPLING_MIN_SCENES: usize = 200;
const ONLINE_TOTAL_MS: f64 = 15.0;

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn c1_phi_convergence() -> Outcome {
    let start = Instant::now();
    let cfg = ReasonerConfig::default();
    let backend = labplan::backends::BackendHandle::rule();
    let mut worst = 0;
    for kind in TaskKind::TEMPLATED {
        for seed in 0..PHI_SEEDS {
            let spec = TaskSpec::variant(kind, seed as usize);
            let world = sample_scene(&spec, seed).map_err(|e| e.to_string())?;
            let schema = world.schema();
            let prompt = sample_prompt(&spec, seed).map_err(|e| e.to_string())?;
            let goal = Goal::new(&prompt).map_err(|e| e.to_string())?;
            let out = refine_loop(&goal, &schema, &cfg, &backend).map_err(|e| e.to_string())?;
            worst = worst.max(out.iterations);
            ensure(out.converged && out.iterations <= PHI_MAX_ITERATIONS, format!("{kind} seed {seed}: {} iterations", out.iterations))?;
            let v = check_constraints(&out.plan, &schema, &cfg.constraint_pack).map_err(|e| e.to_string())?;
            ensure(v.is_empty(), format!("{kind} seed {seed}: {} violations", v.len()))?;
            let again = validate_and_correct(&out.plan, &schema, &cfg.constraint_pack, &backend).map_err(|e| e.to_string())?;
            ensure(diff_plans(&out.plan, &again).is_empty(), format!("{kind} seed {seed}: extra pass edits the plan"))?;
        }
    }
    let t = start.elapsed();
    ensure(t < PHI_BUDGET, format!("took {t:?}"))?;
    Ok(format!("{} plans, max {worst} iterations, {:.2}s", 7 * PHI_SEEDS, t.as_secs_f64()))
}

fn c2_error_oracle() -> Outcome {
    let s = schema_for(&TaskSpec::variant(TaskKind::Crystallize, 0)).map_err(|e| e.to_string())?;
    let cases = [
        ("1. pick up cup\n2. pour solution into petri dish\n3. place cup next to petri dish\n4. pick up cuboid\n5. place cuboid in petri dish\n6. move petri dish to crystallization station\n7. wait at crystallization station", (0, 0)),
        ("1. pick up cuboid\n2. pick up cuboid", (1, 0)),
        ("1. pick up cuboid\n2. pour contents from cuboid", (0, 1)),
    ];
    let mut got = Vec::new();
    for (text, want) in cases {
        let a = audit_errors(&parse_plan(text, Some(&s)).map_err(|e| e.to_string())?, &s);
        got.push((a.e1, a.e2));
        ensure((a.e1, a.e2) == want, format!("expected {want:?}, got {:?}", (a.e1, a.e2)))?;
    }
    Ok(format!("{got:?}"))
}

fn c3_round_trip() -> Outcome {
    let targets: Vec<String> = ["cuboid", "beaker", "petri_dish", "cup_a", "crystallization_station", "Stick"].iter().map(|s| s.to_string()).collect();
    for seed in 0..ROUND_TRIP_CASES {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let seq = common::primitive_seq(&mut rng, &targets, 20);
        let text = render_primitives(&seq);
        let back = parse_primitives(&text).map_err(|e| format!("seed {seed}: {e}"))?;
        ensure(back.primitives == seq.primitives && render_primitives(&back) == text, format!("primitive seed {seed}"))?;
        let plan = parse_plan(&common::plan_text(&mut rng, 12), None).map_err(|e| e.to_string())?;
        let rendered = render_plan(&plan);
        let again = parse_plan(&rendered, None).map_err(|e| e.to_string())?;
        ensure(again.steps == plan.steps && render_plan(&again) == rendered, format!("plan seed {seed}"))?;
    }
    Ok(format!("{ROUND_TRIP_CASES} sequences + {ROUND_TRIP_CASES} plans, 0 failures"))
}

fn c4_conservation() -> Outcome {
    let mut primitives = 0usize;
    for seed in 0..CONSERVATION_SEQUENCES {
        let kind = TaskKind::TEMPLATED[(seed % 7) as usize];
        let spec = TaskSpec::variant(kind, (seed / 7) as usize);
        let run = |trace: bool| -> Result<(u64, bool, String), String> {
            let mut world = sample_scene(&spec, seed).map_err(|e| e.to_string())?;
            let total = world.total_volume();
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xC4);
            let seq = common::primitive_seq(&mut rng, &common::move_targets(&world), 24);
            let mut ctl = ScriptedController::default();
            let mut records = Vec::new();
            let mut conserved = true;
            for p in &seq.primitives {
                let r = if trace {
                    step_primitive_traced(&mut world, p, &mut ctl, true, None)
                } else {
                    step_primitive(&mut world, p, &mut ctl)
                }
                .map_err(|e| e.to_string())?;
                records.extend(r.trace);
                conserved &= world.total_volume() == total;
            }
            Ok((seq.len() as u64, conserved, trace_hash(&records)))
        };
        let (n, conserved, _) = run(false)?;
        primitives += n as usize;
        ensure(conserved, format!("{kind} seed {seed}: volume changed"))?;
        let (_, _, h1) = run(true)?;
        let (_, _, h2) = run(true)?;
        ensure(h1 == h2, format!("{kind} seed {seed}: trace hashes differ"))?;
    }
    Ok(format!("{CONSERVATION_SEQUENCES} sequences ({primitives} primitives), volume exact, traces hash-identical"))
}

struct Oracle<'a> {
    x0: &'a [f64],
    schedule: &'a NoiseSchedule,
}

impl NoiseModel for Oracle<'_> {
    fn predict_noise(&self, x_t: &[f64], t: usize, _cond: &Cond) -> Vec<f64> {
        let a = self.schedule.alpha_bar[t];
        x_t.iter().zip(self.x0).map(|(x, x0)| (x - a.sqrt() * x0) / (1.0 - a).sqrt()).collect()
    }
}

fn c5_diffusion() -> Outcome {
    let start = Instant::now();
    let s = make_schedule(DIFFUSION_STEPS).map_err(|e| e.to_string())?;
    ensure(s.alpha_bar[0] == 1.0 && s.alpha_bar.windows(2).all(|w| w[1] < w[0]), "alpha_bar not strictly decreasing")?;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst_comp: f64 = 0.0;
    for trial in 0..200 {
        let t = 1 + trial % DIFFUSION_STEPS;
        let x0: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let zs: Vec<Vec<f64>> = (0..t).map(|_| (0..4).map(|_| rng.sample(StandardNormal)).collect()).collect();
        let mut x = x0.clone();
        for (i, z) in zs.iter().enumerate() {
            x = s.forward_step(&x, i + 1, z);
        }
        let norm = (1.0 - s.alpha_bar[t]).sqrt();
        let z_eff: Vec<f64> = (0..4)
            .map(|d| {
                zs.iter()
                    .enumerate()
                    .map(|(i, z)| {
                        let tail: f64 = ((i + 2)..=t).map(|k| (1.0 - s.beta_at(k)).sqrt()).product();
                        tail * s.beta_at(i + 1).sqrt() * z[d]
                    })
                    .sum::<f64>()
                    / norm
            })
            .collect();
        let closed = s.forward_noise(&x0, t, &z_eff);
        worst_comp = x.iter().zip(&closed).map(|(a, b)| (a - b).abs()).fold(worst_comp, f64::max);
    }
    ensure(worst_comp < COMPOSITION_TOL, format!("composition error {worst_comp:e}"))?;
    let cond = Cond { current: vec![], instruction: vec![], horizon: 1.0 };
    let mut worst_oracle: f64 = 0.0;
    for _ in 0..50 {
        let x0: Vec<f64> = (0..12).map(|_| rng.random_range(-1.0..1.0)).collect();
        let out = sample_chain(&Oracle { x0: &x0, schedule: &s }, &s, x0.len(), &cond, &mut rng);
        worst_oracle = out.iter().zip(&x0).map(|(a, b)| (a - b).abs()).fold(worst_oracle, f64::max);
    }
    ensure(worst_oracle < ORACLE_TOL, format!("oracle chain error {worst_oracle:e}"))?;
    let x0 = [1.0, -1.0, 0.5, 0.0];
    let (mut sum, mut sq) = ([0.0; 4], [0.0; 4]);
    for _ in 0..MARGINAL_DRAWS {
        let z: Vec<f64> = (0..4).map(|_| rng.sample(StandardNormal)).collect();
        let x = s.forward_noise(&x0, DIFFUSION_STEPS, &z);
        for d in 0..4 {
            sum[d] += x[d];
            sq[d] += x[d] * x[d];
        }
    }
    let n = MARGINAL_DRAWS as f64;
    let mut worst_mean: f64 = 0.0;
    let mut vars = Vec::new();
    for d in 0..4 {
        let mean = sum[d] / n;
        let var = sq[d] / n - mean * mean;
        worst_mean = worst_mean.max(mean.abs());
        vars.push(var);
        ensure(mean.abs() < MARGINAL_MEAN_TOL && (MARGINAL_VAR.0..=MARGINAL_VAR.1).contains(&var), format!("dim {d}: mean {mean:.3}, var {var:.3}"))?;
    }
    let t = start.elapsed();
    ensure(t < DIFFUSION_BUDGET, format!("took {t:?}"))?;
    Ok(format!(
        "composition {worst_comp:.1e}, oracle {worst_oracle:.1e}, marginal |mean| <= {worst_mean:.3}, var {:.3}..{:.3}, {:.2}s",
        vars.iter().cloned().fold(f64::INFINITY, f64::min),
        vars.iter().cloned().fold(0.0, f64::max),
        t.as_secs_f64()
    ))
}

fn c6_predictor() -> Outcome {
    let mut train_set = Vec::new();
    let mut held_out = Vec::new();
    for kind in TaskKind::TEMPLATED {
        let count = entry(kind).map(|e| e.training_count).unwrap_or(0);
        train_set.extend(generate_task(kind, count, 0, 8).map_err(|e| e.to_string())?.triples);
        held_out.extend(generate_task(kind, PREDICTOR_HELD_OUT_PER_TASK, PREDICTOR_HELD_OUT_SEED, 8).map_err(|e| e.to_string())?.triples);
    }
    let start = Instant::now();
    let (model, _) = train(&train_set, &PredictorConfig::desk()).map_err(|e| e.to_string())?;
    let t = start.elapsed();
    let plain = held_out_mse(&model, &held_out, 1, false).map_err(|e| e.to_string())?;
    let shuffled = held_out_mse(&model, &held_out, 1, true).map_err(|e| e.to_string())?;
    let detail = format!(
        "{} train / {} held-out triples; MSE {:.4} vs copy {:.4} (ratio {:.3}), shuffled {:.4}; trained in {:.1}s",
        train_set.len(),
        held_out.len(),
        plain.mse,
        plain.copy_mse,
        plain.mse / plain.copy_mse,
        shuffled.mse,
        t.as_secs_f64()
    );
    ensure(plain.mse <= PREDICTOR_RATIO * plain.copy_mse, detail.clone())?;
    ensure(shuffled.mse > plain.mse, detail.clone())?;
    ensure(t <= PREDICTOR_BUDGET, detail.clone())?;
    Ok(detail)
}

fn c7_controller() -> Outcome {
    let mut scripted = ScriptedController::default();
    for seed in 0..SCRIPTED_SCENES {
        let mut env = move_env(seed, RewardWeights::default()).map_err(|e| e.to_string())?;
        let bound = (env.distance() / V_MAX).ceil() as u32 + TICK_SLACK;
        let r = env.run(&mut scripted).map_err(|e| e.to_string())?;
        ensure(r.outcome.is_done() && r.steps <= bound, format!("scene {seed}: {:?} after {} ticks (bound {bound})", r.outcome, r.steps))?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let w = RewardWeights::default();
    for _ in 0..10_000 {
        let mut obs = || ControlObservation {
            ee: [rng.random(), rng.random()],
            to_target: [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)],
            engaged: false,
            obstacle: [1.0, 1.0],
        };
        let (a, b) = (obs(), obs());
        let r = reward(&w, &a, &ControlAction::default(), &b, TickEvents::default());
        ensure(r == w.w_move * (a.distance() - b.distance()), "reward differs from w_move * progress")?;
    }
    let start = Instant::now();
    let (mut policy, _) = train_policy(&TrainConfig::default()).map_err(|e| e.to_string())?;
    let t = start.elapsed();
    let rate = evaluate_move(&mut policy, HELD_OUT_BASE..HELD_OUT_BASE + LEARNED_SCENES).map_err(|e| e.to_string())?;
    let detail = format!(
        "scripted {SCRIPTED_SCENES}/{SCRIPTED_SCENES} within bound; learned {:.1}% on {LEARNED_SCENES} held-out scenes; trained in {:.1}s",
        rate * 100.0,
        t.as_secs_f64()
    );
    ensure(rate >= LEARNED_MIN_SUCCESS && t <= CONTROLLER_BUDGET, detail.clone())?;
    Ok(detail)
}

fn c8_c9_protocol() -> (Outcome, Outcome) {
    let config = EvalConfig::default();
    let report = match run_task_eval(&config, &TrialResources::rule()) {
        Ok(r) => r,
        Err(e) => return (Err(e.to_string()), Err(e.to_string())),
    };
    let shape = (|| {
        ensure(config.trials_per_task() == TRIALS_PER_TASK, format!("{} trials per task", config.trials_per_task()))?;
        ensure(report.tasks.len() == 7, "missing tasks")?;
        for t in &report.tasks {
            ensure(t.trials == TRIALS_PER_TASK && t.is_conserved(), format!("{}: {} trials, conserved {}", t.task, t.trials, t.is_conserved()))?;
        }
        ensure(report.records.len() == 7 * TRIALS_PER_TASK, "record count")?;
        Ok(format!("7 tasks x {} prompts x {} scenes = {} trials each, conserved", config.prompts_per_task, config.scenes_per_prompt, TRIALS_PER_TASK))
    })();
    let oracle = (|| {
        for t in &report.tasks {
            ensure(t.success_rate == 100.0 && t.e1_rate == 0.0 && t.e2_rate == 0.0, format!("{}: success {}%, E1 {}%, E2 {}%", t.task, t.success_rate, t.e1_rate, t.e2_rate))?;
        }
        Ok("100% success, 0% E1/E2 on all 7 tasks".to_string())
    })();
    (shape, oracle)
}

fn c10_decoupling() -> Outcome {
    let config = decoupling_config(0);
    let backend = config.build_backend().map_err(|e| e.to_string())?;
    let r = decoupling_experiment(&config, &TrialResources { backend, ..TrialResources::rule() }).map_err(|e| e.to_string())?;
    let mut parts = Vec::new();
    for kind in [TaskKind::Mix, TaskKind::Crystallize] {
        let f = r.factorized.task(kind).ok_or("missing task")?;
        let g = r.flat.task(kind).ok_or("missing task")?;
        ensure(f.trials >= DECOUPLING_MIN_SCENES, format!("{kind}: only {} scenes", f.trials))?;
        ensure(f.success_rate >= g.success_rate, format!("{kind}: factorized {:.1}% < flat {:.1}%", f.success_rate, g.success_rate))?;
        parts.push(format!("{kind} {:.1}% vs flat {:.1}%", f.success_rate, g.success_rate));
    }
    ensure(r.goal_accesses == 0, format!("{} goal accesses", r.goal_accesses))?;
    ensure(r.fallback_bound_ok, "fallback rounds exceed pack size")?;
    Ok(format!("{}; 0 goal accesses; max {} fallback rounds", parts.join(", "), r.max_fallback_rounds))
}

fn c11_ablation() -> Outcome {
    let config = ablation_config(0);
    let backend = config.build_backend().map_err(|e| e.to_string())?;
    let variants = [PipelineVariant::full(), PipelineVariant::no_task_planner(), PipelineVariant::without_stage(2).map_err(|e| e.to_string())?];
    let r = run_ablation_grid(&config, &variants, &TrialResources { backend, ..TrialResources::rule() }).map_err(|e| e.to_string())?;
    ensure(r.checks.len() == 3, format!("{} checks", r.checks.len()))?;
    let detail = r.checks.iter().map(|c| c.detail.clone()).collect::<Vec<_>>().join("; ");
    ensure(r.checks.iter().all(|c| c.passed), detail.clone())?;
    Ok(detail)
}

fn c12_latency() -> Outcome {
    let rec = |module, ms, online| LatencyRecord { module, ms, online };
    let seeded = latency_report(&[
        rec(Module::Llm, 3024.0, false),
        rec(Module::Mp, 5714.0, false),
        rec(Module::Vlm, 3441.0, false),
        rec(Module::Rl, 15.0, true),
    ]);
    ensure(seeded.online_total_ms == ONLINE_TOTAL_MS, format!("online total {}", seeded.online_total_ms))?;
    let config = EvalConfig { tasks: vec![TaskKind::Mix], prompts_per_task: 2, scenes_per_prompt: 2, ..EvalConfig::default() };
    let live = run_task_eval(&config, &TrialResources::rule()).map_err(|e| e.to_string())?.latency;
    let header = |csv: String| csv.lines().next().unwrap_or("").to_string();
    ensure(header(live.to_csv()) == header(seeded.to_csv()), "live report schema differs")?;
    ensure(live.module(Module::Rl).is_some_and(|m| m.count > 0) && live.module(Module::Llm).is_some_and(|m| m.count > 0), "live run missing module samples")?;
    Ok(format!("online total {} ms; live run reports {} modules", seeded.online_total_ms, live.modules.len()))
}

fn main() {
    let mut results: Vec<(&str, Outcome)> = vec![
        ("1 plan refinement converges", c1_phi_convergence()),
        ("2 E1/E2 classification", c2_error_oracle()),
        ("3 DSL and plan round-trip", c3_round_trip()),
        ("4 conservation and determinism", c4_conservation()),
        ("5 diffusion math", c5_diffusion()),
        ("6 predictor usefulness", c6_predictor()),
        ("7 controller", c7_controller()),
    ];
    let (shape, oracle) = c8_c9_protocol();
    results.push(("8 protocol shape", shape));
    results.push(("9 end-to-end oracle", oracle));
    results.push(("10 decoupling", c10_decoupling()));
    results.push(("11 ablation directions", c11_ablation()));
    results.push(("12 latency accounting", c12_latency()));
    let mut failed = 0;
    for (name, r) in &results {
        match r {
            Ok(d) => println!("PASS  criterion {name}: {d}"),
            Err(d) => {
                failed += 1;
                println!("FAIL  criterion {name}: {d}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
