use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use mgpi::bellman::apply_bellman;
use mgpi::divergence::{search_naive_divergence, write_archive, SearchConfig};
use mgpi::game::validate_game;
use mgpi::generate::{random_game_seeded, GeneratorConfig};
use mgpi::linear_fa::{build_projection, fa_pi, kappa_fa, FaConfig, FeatureFile, StateFeatureScheme};
use mgpi::linear_game::{cost_model, induced_values, linear_generalized_pi, BetaWeights, LinearModelFile, LinearPiConfig};
use mgpi::model_rl::{evaluate_against, generative_sample, plan_on_model, sample_bound, ComputationInputs, SampleBoundInputs};
use mgpi::planners::{generalized_pi, hoffman_karp, min_lookahead, naive_pi, solve_reference, value_iteration, NaiveStatus};
use mgpi::stochastic_pi::{stochastic_pi, StepSchedule, StochasticConfig, Visitation};
use mgpi::trace::fmt_f64;
use mgpi::{ConvergenceTrace, Error, GameFile, GameModel, PlannerConfig, Rollout, StochasticPolicyPair};
use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Map, Value};

use crate::manifest::RunManifest;
use crate::{Algo, CompareArgs, Context, FaArgs, Failure, GenArgs, LinearArgs, RlArgs, SearchArgs, SolveArgs, Status, StochasticArgs};

const SEED_VAR: &str = "MGPI_SEED";

fn seed_override(given: u64) -> Result<u64, Failure> {
    match std::env::var(SEED_VAR) {
        Ok(text) => text.trim().parse().map_err(|_| Failure::Usage(format!("{SEED_VAR}={text:?} is not an unsigned integer"))),
        Err(std::env::VarError::NotPresent) => Ok(given),
        Err(e) => Err(Failure::Usage(format!("{SEED_VAR}: {e}"))),
    }
}

fn at(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::Input(format!("{}: {e}", path.display()))
}

fn load_game(man: &mut RunManifest, path: &Path) -> Result<GameModel, Failure> {
    let text = man.read_input(path)?;
    let file = GameFile::from_json_str(&text).map_err(|e| at(path, e))?;
    validate_game(&file).map_err(|e| at(path, e))
}

fn load_json<T: serde::de::DeserializeOwned>(man: &mut RunManifest, path: &Path) -> Result<T, Failure> {
    let text = man.read_input(path)?;
    serde_json::from_str(&text).map_err(|e| at(path, e))
}

fn vec_of(v: &DVector<f64>) -> Vec<f64> {
    v.iter().copied().collect()
}

struct Clock {
    start: Instant,
    enabled: bool,
}

impl Clock {
    fn start(ctx: &Context) -> Self {
        Clock { start: Instant::now(), enabled: !ctx.omit_timing }
    }

    fn ms(&self) -> Option<f64> {
        self.enabled.then(|| self.start.elapsed().as_secs_f64() * 1e3)
    }

    fn stamp(&self, report: &mut Value) {
        if let (Some(ms), Value::Object(map)) = (self.ms(), report) {
            map.insert("wall_ms".into(), json!(ms));
        }
    }
}

fn write_trace(man: &mut RunManifest, path: Option<&PathBuf>, trace: &ConvergenceTrace) -> Result<(), Failure> {
    let Some(path) = path else { return Ok(()) };
    let text = trace.to_csv_string()?;
    man.write_output(path, text.as_bytes())
}

/// JSON report to `out` or stdout, then the manifest.
fn emit(mut man: RunManifest, out: Option<&PathBuf>, mut report: Value) -> Result<(), Failure> {
    if let Value::Object(map) = &mut report {
        let mut with_ref = Map::new();
        with_ref.insert("manifest".into(), json!(man.reference()));
        with_ref.append(map);
        *map = with_ref;
    }
    let text = serde_json::to_string_pretty(&report).map_err(|e| Failure::Input(e.to_string()))? + "\n";
    match out {
        Some(path) => man.write_output(path, text.as_bytes())?,
        None => {
            std::io::stdout().write_all(text.as_bytes()).map_err(|e| Failure::Input(format!("stdout: {e}")))?;
        }
    }
    man.finish()
}

fn policy_json(p: &StochasticPolicyPair) -> Value {
    json!({ "mu": p.mu, "nu": p.nu })
}

pub fn gen(ctx: &Context, args: GenArgs) -> Result<Status, Failure> {
    let seed = seed_override(args.seed)?;
    let mut man = RunManifest::new("gen", &args, ctx.manifest_path(Some(&args.out)));
    man.seed = Some(seed);
    let mut cfg = GeneratorConfig::new(args.states, args.actions, args.discount)
        .with_sparsity(args.sparsity)
        .with_min_actions(args.min_actions);
    if args.mdp {
        cfg = cfg.mdp();
    }
    let game = random_game_seeded(&cfg, seed).map_err(|e| Failure::Usage(e.to_string()))?;
    let text = game.to_file().to_json_string()? + "\n";
    man.write_output(&args.out, text.as_bytes())?;
    man.finish()?;
    Ok(Status::Done)
}

struct Run {
    status: &'static str,
    value: DVector<f64>,
    policy: StochasticPolicyPair,
    trace: ConvergenceTrace,
    cycle: Option<(usize, usize)>,
}

/// Default lookahead: the smallest that meets the rate condition for generalized PI, 1 otherwise.
fn resolve_lookahead(game: &GameModel, algo: Algo, m: Rollout, h: Option<usize>) -> Result<usize, Failure> {
    match (h, algo) {
        (Some(h), _) => Ok(h),
        (None, Algo::Gpi) => Ok(min_lookahead(game.discount(), m)?),
        (None, _) => Ok(1),
    }
}

fn run_planner(game: &GameModel, algo: Algo, config: &PlannerConfig) -> Result<Run, Failure> {
    let plain = match algo {
        Algo::Vi => value_iteration(game, config),
        Algo::Gpi => generalized_pi(game, config),
        Algo::Hk => hoffman_karp(game, config),
        Algo::Naive => {
            let out = naive_pi(game, config)?;
            let (status, cycle) = match out.status {
                NaiveStatus::Converged => ("converged", None),
                NaiveStatus::Cycling { first_seen, period } => ("cycling", Some((first_seen, period))),
                NaiveStatus::MaxIters => ("max_iters", None),
            };
            return Ok(Run { status, value: out.value, policy: out.policy, trace: out.trace, cycle });
        }
    };
    match plain {
        Ok(out) => Ok(Run { status: "converged", value: out.value, policy: out.policy, trace: out.trace, cycle: None }),
        Err(Error::MaxItersExceeded { state, .. }) => {
            let (_, policy) = apply_bellman(game, &state.last)?;
            Ok(Run { status: "max_iters", value: state.last, policy, trace: state.trace, cycle: None })
        }
        Err(e) => Err(e.into()),
    }
}

fn status_of(run: &Run) -> Status {
    match run.status {
        "cycling" => Status::Cycling,
        "max_iters" => Status::MaxIters,
        _ => Status::Done,
    }
}

pub fn solve(ctx: &Context, args: SolveArgs) -> Result<Status, Failure> {
    let mut man = RunManifest::new("solve", &args, ctx.manifest_path(args.out.as_ref()));
    let game = load_game(&mut man, &args.game)?;
    let clock = Clock::start(ctx);
    let h = resolve_lookahead(&game, args.algo, args.m, args.h)?;
    let mut config = PlannerConfig::new(args.m, h).with_tol(args.tol).with_max_iters(args.max_iters);
    if args.reference {
        config = config.with_reference(solve_reference(&game)?);
    }
    let run = run_planner(&game, args.algo, &config)?;
    write_trace(&mut man, args.trace.as_ref(), &run.trace)?;
    let mut report = json!({
        "algo": args.algo,
        "rollout": args.m.to_string(),
        "lookahead": h,
        "stop_tol": args.tol,
        "status": run.status,
        "iterations": run.trace.len(),
        "final_residual": run.trace.last_residual(),
        "work": run.trace.work,
        "value": vec_of(&run.value),
        "policy": policy_json(&run.policy),
    });
    if let Some((first_seen, period)) = run.cycle {
        report["cycle"] = json!({ "first_seen": first_seen, "period": period });
    }
    clock.stamp(&mut report);
    let status = status_of(&run);
    emit(man, args.out.as_ref(), report)?;
    Ok(status)
}

/// `algo[:key=value,...]` with keys m, H, tol and max_iters.
fn parse_config(spec: &str, args: &CompareArgs) -> Result<(Algo, Rollout, Option<usize>, PlannerConfig), Failure> {
    let bad = |msg: String| Failure::Usage(format!("configuration `{spec}`: {msg}"));
    let (name, rest) = spec.split_once(':').unwrap_or((spec, ""));
    let algo = <Algo as clap::ValueEnum>::from_str(name.trim(), true).map_err(|_| bad(format!("unknown algorithm `{name}`")))?;
    let mut m = Rollout::Infinite;
    let mut h = None;
    let mut tol = args.tol;
    let mut max_iters = args.max_iters;
    for pair in rest.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (key, value) = pair.split_once('=').ok_or_else(|| bad(format!("expected key=value, got `{pair}`")))?;
        match key.trim() {
            "m" => m = value.parse().map_err(bad)?,
            "H" => h = Some(value.trim().parse().map_err(|_| bad(format!("H must be a positive integer, got `{value}`")))?),
            "tol" => tol = value.trim().parse().map_err(|_| bad(format!("tol must be a number, got `{value}`")))?,
            "max_iters" => {
                max_iters = value.trim().parse().map_err(|_| bad(format!("max_iters must be an integer, got `{value}`")))?
            }
            other => return Err(bad(format!("unknown key `{other}`"))),
        }
    }
    Ok((algo, m, h, PlannerConfig::new(m, 1).with_tol(tol).with_max_iters(max_iters)))
}

pub fn compare(ctx: &Context, args: CompareArgs) -> Result<Status, Failure> {
    if args.configs.is_empty() {
        return Err(Failure::Usage("compare needs at least one configuration, e.g. `vi gpi:m=3`".into()));
    }
    let parsed = args.configs.iter().map(|c| parse_config(c, &args)).collect::<Result<Vec<_>, _>>()?;
    let mut man = RunManifest::new("compare", &args, ctx.manifest_path(args.out.as_ref()));
    let game = load_game(&mut man, &args.game)?;
    let mut table = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Failure::Input(e.to_string());
    table
        .write_record(["algo", "iters", "operator_applications", "matrix_games_solved", "wall_ms", "final_residual"])
        .map_err(csv_err)?;
    for (spec, (algo, m, h, mut config)) in args.configs.iter().zip(parsed) {
        config.lookahead = resolve_lookahead(&game, algo, m, h)?;
        let clock = Clock::start(ctx);
        let run = run_planner(&game, algo, &config)?;
        let wall = clock.ms().map_or_else(String::new, |ms| format!("{ms:.3}"));
        let residual = run.trace.last_residual().map_or_else(String::new, fmt_f64);
        table
            .write_record([
                spec.clone(),
                run.trace.len().to_string(),
                run.trace.work.operator_applications.to_string(),
                run.trace.work.matrix_games_solved.to_string(),
                wall,
                residual,
            ])
            .map_err(csv_err)?;
    }
    let bytes = table.into_inner().map_err(|e| Failure::Input(e.to_string()))?;
    match &args.out {
        Some(path) => man.write_output(path, &bytes)?,
        None => std::io::stdout().write_all(&bytes).map_err(|e| Failure::Input(format!("stdout: {e}")))?,
    }
    man.finish()?;
    Ok(Status::Done)
}

pub fn rl(ctx: &Context, args: RlArgs) -> Result<Status, Failure> {
    let seed = seed_override(args.seed)?;
    let mut man = RunManifest::new("rl", &args, ctx.manifest_path(args.out.as_ref()));
    man.seed = Some(seed);
    let game = load_game(&mut man, &args.game)?;
    let alpha = game.discount();
    let h = match args.h {
        Some(h) => h,
        None => min_lookahead(alpha, args.m)?,
    };
    let star = solve_reference(&game)?;
    let mut runs = Vec::new();
    for &n in &args.n {
        let clock = Clock::start(ctx);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(n);
        let est = generative_sample(&game, n, &mut rng)?;
        let plan = plan_on_model(&est, args.m, h, args.eps_opt)?;
        let eval = evaluate_against(&game, &plan.policy, &star)?;
        let mut entry = json!({
            "n": n,
            "q_error": eval.q_error,
            "v_error": eval.v_error,
            "iterations": plan.trace.len(),
            "stop_tol": plan.stop_tol,
        });
        clock.stamp(&mut entry);
        runs.push(entry);
    }
    let states = 0..game.num_states();
    let max_u = states.clone().map(|s| game.actions_max(s)).max().unwrap_or(1);
    let max_v = states.map(|s| game.actions_min(s)).max().unwrap_or(1);
    let max_support = game.triples().map(|(s, u, v, _)| game.successors(s, u, v).len()).max().unwrap_or(1);
    let mut inputs =
        SampleBoundInputs::new(alpha, args.eps, args.delta, game.num_states() as u64, max_u as u64, max_v as u64);
    inputs.computation = Some(ComputationInputs {
        m: args.m,
        horizon: h,
        eps_opt: args.eps_opt,
        d: game.num_triples() as u64,
        r: max_support as u64,
        a_max: max_u.max(max_v) as u64,
    });
    let bound = sample_bound(&inputs)?;
    let report = json!({
        "rollout": args.m.to_string(),
        "lookahead": h,
        "eps_opt": args.eps_opt,
        "runs": runs,
        "sample_bound": bound,
    });
    emit(man, args.out.as_ref(), report)?;
    Ok(Status::Done)
}

fn load_scheme(man: &mut RunManifest, path: &Path) -> Result<StateFeatureScheme, Failure> {
    let file: FeatureFile = load_json(man, path)?;
    file.into_scheme().map_err(|e| at(path, e))
}

pub fn fa(ctx: &Context, args: FaArgs) -> Result<Status, Failure> {
    let mut man = RunManifest::new("fa", &args, ctx.manifest_path(args.out.as_ref()));
    let game = load_game(&mut man, &args.game)?;
    let scheme = load_scheme(&mut man, &args.features)?;
    let clock = Clock::start(ctx);
    let h = match args.h {
        Some(h) => h,
        None => {
            // Smallest H with κ_FA < 1; κ_FA falls to 0 as H grows.
            let delta_fv = build_projection(&scheme)?.delta_fv;
            let mut h = 1;
            while kappa_fa(game.discount(), args.m, h, delta_fv)? >= 1.0 {
                h += 1;
            }
            h
        }
    };
    let mut config = FaConfig::new(args.m, h, args.iters);
    if args.reference {
        config = config.with_reference(solve_reference(&game)?);
    }
    let out = fa_pi(&game, &scheme, &DVector::zeros(scheme.dim()), &config)?;
    write_trace(&mut man, args.trace.as_ref(), &out.trace)?;
    let theta = out.final_theta();
    let mut report = json!({
        "rollout": args.m.to_string(),
        "lookahead": h,
        "iterations": out.trace.len(),
        "final_residual": out.trace.last_residual(),
        "work": out.trace.work,
        "bound": out.report,
        "theta": vec_of(theta),
        "value": vec_of(&scheme.values(theta)),
        "policy": out.policies.last().map(policy_json),
    });
    clock.stamp(&mut report);
    emit(man, args.out.as_ref(), report)?;
    Ok(Status::Done)
}

pub fn linear(ctx: &Context, args: LinearArgs) -> Result<Status, Failure> {
    let mut man = RunManifest::new("linear", &args, ctx.manifest_path(args.out.as_ref()));
    let file: LinearModelFile = load_json(&mut man, &args.model)?;
    let lg = file.into_model(args.discount).map_err(|e| at(&args.model, e))?;
    let clock = Clock::start(ctx);
    let mut config = LinearPiConfig::new(args.m, args.h, args.iters);
    config.stop_tol = args.tol;
    if args.reference {
        config.reference = Some(solve_reference(lg.base())?);
    }
    let base = lg.base();
    let a_max = (0..base.num_states()).map(|s| base.actions_max(s).max(base.actions_min(s))).max().unwrap_or(1);
    let cost = match args.m {
        Rollout::Steps(m) => Some(cost_model(
            lg.dim() as u64,
            lg.max_reach() as u64,
            a_max as u64,
            lg.anchors().len() as u64,
            lg.reach_sum() as u64,
            m as u64,
            args.h as u64,
        )?),
        Rollout::Infinite => None,
    };
    let mut report = json!({
        "rollout": args.m.to_string(),
        "lookahead": args.h,
        "d": lg.dim(),
        "anchors": lg.anchors(),
        "cost_per_iteration": cost,
    });
    let status = match linear_generalized_pi(&lg, &BetaWeights::zeros(lg.dim()), &config) {
        Ok(out) => {
            write_trace(&mut man, args.trace.as_ref(), &out.trace)?;
            let beta = out.betas.last().expect("beta_0 is always present");
            report["status"] = json!(if args.tol.is_some() { "converged" } else { "completed" });
            report["iterations"] = json!(out.trace.len());
            report["final_residual"] = json!(out.trace.last_residual());
            report["work"] = json!(out.trace.work);
            report["beta"] = json!(vec_of(&beta.beta));
            report["value"] = json!(vec_of(&induced_values(&lg, beta)?));
            report["policy"] = json!(out.policies.last());
            Status::Done
        }
        Err(Error::MaxItersExceeded { state, .. }) => {
            write_trace(&mut man, args.trace.as_ref(), &state.trace)?;
            report["status"] = json!("max_iters");
            report["iterations"] = json!(state.trace.len());
            report["final_residual"] = json!(state.trace.last_residual());
            report["work"] = json!(state.trace.work);
            report["value"] = json!(vec_of(&state.last));
            Status::MaxIters
        }
        Err(e) => return Err(e.into()),
    };
    clock.stamp(&mut report);
    emit(man, args.out.as_ref(), report)?;
    Ok(status)
}

pub fn stochastic(ctx: &Context, args: StochasticArgs) -> Result<Status, Failure> {
    let seed = seed_override(args.seed)?;
    let mut man = RunManifest::new("stochastic", &args, ctx.manifest_path(args.out.as_ref()));
    man.seed = Some(seed);
    let game = load_game(&mut man, &args.game)?;
    let scheme = match &args.features {
        Some(path) => load_scheme(&mut man, path)?,
        None => StateFeatureScheme::tabular(game.num_states()),
    };
    let clock = Clock::start(ctx);
    let mut config = StochasticConfig::new(args.m, args.h, args.iters, seed);
    config.schedule = StepSchedule::Harmonic { c: args.step_c, p: args.step_p };
    if let Some(starts) = args.starts {
        config.visitation = Visitation::Sampled { starts_per_iter: starts };
    }
    config.diagnostics = args.diagnostics;
    if args.reference {
        config.reference = Some(solve_reference(&game)?);
    }
    let out = stochastic_pi(&game, &scheme, &DVector::zeros(scheme.dim()), &config)?;
    write_trace(&mut man, args.trace.as_ref(), &out.trace)?;
    let theta = out.thetas.last().expect("theta_0 is always present");
    let mut report = json!({
        "rollout": args.m.to_string(),
        "lookahead": args.h,
        "iterations": args.iters,
        "final_sup_error": out.trace.records.last().and_then(|r| r.sup_error),
        "work": out.trace.work,
        "diagnostics": out.diagnostics,
        "theta": vec_of(theta),
        "value": vec_of(&scheme.values(theta)),
    });
    clock.stamp(&mut report);
    emit(man, args.out.as_ref(), report)?;
    Ok(Status::Done)
}

pub fn search_naive(ctx: &Context, args: SearchArgs) -> Result<Status, Failure> {
    let first_seed = seed_override(args.first_seed)?;
    let primary = args.out.clone().unwrap_or_else(|| args.archive.clone());
    let mut man = RunManifest::new("search-naive", &args, ctx.manifest_path(Some(&primary)));
    man.seed = Some(first_seed);
    let config = SearchConfig {
        first_seed,
        games: args.games,
        min_states: args.min_states,
        max_states: args.max_states,
        max_actions: args.max_actions,
        discount: args.discount,
        rollout: args.m,
        max_iters: args.max_iters,
        stop_tol: args.tol,
    };
    let clock = Clock::start(ctx);
    let summary = search_naive_divergence(&config).map_err(|e| match e {
        Error::ParameterOutOfRange(msg) => Failure::Usage(msg),
        other => other.into(),
    })?;
    let mut archive = Vec::new();
    write_archive(&summary.instances, &mut archive)?;
    man.write_output(&args.archive, &archive)?;
    let instances: Vec<Value> = summary
        .instances
        .iter()
        .map(|i| json!({ "seed": i.seed, "states": i.game.num_states, "first_seen": i.first_seen, "period": i.period }))
        .collect();
    let mut report = json!({
        "tried": summary.tried,
        "converged": summary.converged,
        "cycling": summary.cycling,
        "max_iters": summary.max_iters,
        "archive": args.archive.display().to_string(),
        "instances": instances,
    });
    clock.stamp(&mut report);
    emit(man, args.out.as_ref(), report)?;
    Ok(if summary.cycling > 0 { Status::Cycling } else { Status::Done })
}
