//! Instance generation, training, evaluation and the gradient self-test.

use movrptw::env::{estimate_bounds, DecodeMode, WeightVector};
use movrptw::io::{generate_instance, read_front, write_instance_json, GeneratorConfig};
use movrptw::nn::{grad_check, GradCheckConfig, GradCheckReport, NormMode, Probe};
use movrptw::policy::{PolicyConfig, PolicyNet};
use movrptw::train::{train, TrainConfig, TrainRun, WeightMode};
use movrptw::vrptw::{check_feasible, evaluate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::args::{EvalArgs, GenArgs, GlobalArgs, GradCheckArgs, TrainArgs};
use crate::error::{CliError, CliResult};
use crate::files::{create_parent, load_config, load_instance};

pub fn gen(args: &GenArgs, global: &GlobalArgs) -> CliResult<()> {
    let mut cfg: GeneratorConfig = load_config(args.config.as_deref())?;
    if let Some(n) = args.customers {
        cfg.customer_count = n;
    }
    if let Some(s) = global.seed {
        cfg.seed = s;
    }
    if args.count == 0 {
        return Err(CliError::Usage("--count must be at least 1".into()));
    }
    cfg.validate()?;
    let instances = (0..args.count as u64)
        .map(|k| generate_instance::<f64>(&GeneratorConfig { seed: cfg.seed + k, ..cfg.clone() }))
        .collect::<Result<Vec<_>, _>>()?;
    if let [one] = instances.as_slice() {
        create_parent(&args.out)?;
        write_instance_json(one, &args.out)?;
    } else {
        std::fs::create_dir_all(&args.out).map_err(|e| movrptw::Error::io(&args.out, e))?;
        for (k, inst) in instances.iter().enumerate() {
            write_instance_json(inst, &args.out.join(format!("instance-{k:03}.json")))?;
        }
    }
    println!("{} instance(s) with {} customers written", instances.len(), cfg.customer_count);
    Ok(())
}

/// Parses `random` or a fixed pair `w1,w2`.
pub fn parse_weight_mode(text: &str) -> CliResult<WeightMode> {
    if text.eq_ignore_ascii_case("random") {
        return Ok(WeightMode::RandomSimplex);
    }
    let parts: Vec<f64> = text
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::Usage(format!("--weights `{text}`: {e}")))?;
    match parts.as_slice() {
        &[w1, w2] => Ok(WeightMode::Fixed(w1, w2)),
        _ => Err(CliError::Usage(format!("--weights expects `random` or `w1,w2`, got `{text}`"))),
    }
}

pub fn train_command(args: &TrainArgs, global: &GlobalArgs) -> CliResult<()> {
    let mut cfg: TrainConfig = load_config(args.config.as_deref())?;
    if let Some(v) = args.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = args.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = args.batches_per_epoch {
        cfg.batches_per_epoch = v;
    }
    if let Some(v) = args.lr {
        cfg.lr = v;
    }
    if let Some(v) = args.customers {
        cfg.customer_count = v;
    }
    if let Some(v) = args.eval_size {
        cfg.eval_size = v;
    }
    if let Some(w) = &args.weights {
        cfg.weight_mode = parse_weight_mode(w)?;
    }
    if let Some(s) = global.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    let run = TrainRun { dir: Some(args.out_dir.clone()), resume: args.resume, reproducible: global.reproducible };
    let outcome = train::<f32>(&cfg, &run)?;
    if let Some(last) = outcome.log.last() {
        println!(
            "epoch {}: mean reward {:.4}, success {:.3}, greedy {:.4} (baseline {:.4})",
            last.epoch, last.mean_reward, last.success_rate, last.greedy_reward, last.baseline_greedy_reward
        );
    }
    Ok(())
}

pub fn eval(args: &EvalArgs) -> CliResult<()> {
    let instance = load_instance::<f64>(&args.instance.instance, args.instance.truncate)?;
    let records = read_front(&args.solution)?;
    let mut infeasible = 0;
    for (k, r) in records.iter().enumerate() {
        let report = check_feasible(&instance, &r.routes);
        if report.is_feasible() {
            let o = evaluate(&instance, &r.routes)?;
            let stale = (o.cost - r.f1).abs() > 1e-6 * o.cost.abs().max(1.0) || (o.satisfaction - r.f2).abs() > 1e-6;
            let note = if stale { format!(" (file says {} / {})", r.f1, r.f2) } else { String::new() };
            println!("{k}: feasible, f1 {} f2 {}{note}", o.cost, o.satisfaction);
        } else {
            infeasible += 1;
            println!("{k}: infeasible");
            for v in &report.violations {
                println!("    {v:?}");
            }
        }
    }
    if infeasible > 0 {
        return Err(CliError::Quality(format!("{infeasible} of {} solutions are infeasible", records.len())));
    }
    Ok(())
}

/// Checks the log-probability gradient of a sampled episode under a default-size policy
/// in double precision.
pub fn policy_grad_check(customers: usize, check: &GradCheckConfig, seed: u64) -> CliResult<GradCheckReport> {
    let instance = generate_instance::<f64>(&GeneratorConfig::with_customers(customers, seed))?;
    let mut net = PolicyNet::<f64>::new(PolicyConfig::default(), seed)?;
    let config = *net.config();
    let bounds = estimate_bounds(&instance)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w1: f64 = rng.gen();
    let weights = WeightVector::new(w1, 1.0 - w1)?;
    let episode = net.rollout(&instance, weights, &bounds, DecodeMode::Sample, &mut rng)?;
    Ok(grad_check(net.params_mut(), check, &mut rng, |store| {
        let view = PolicyNet::from_params(config, store.clone())?;
        let r = view.replay_log_prob(&instance, weights, &episode.actions, NormMode::Train)?;
        Ok(Probe { value: r.log_prob, grads: r.grads, region: r.region })
    })?)
}

pub fn grad_check_command(args: &GradCheckArgs, global: &GlobalArgs) -> CliResult<()> {
    if args.customers == 0 || args.params == 0 || !(args.step > 0.0) || !(args.tolerance > 0.0) {
        return Err(CliError::Usage("customers, params, step and tolerance must be positive".into()));
    }
    let check = GradCheckConfig { n_params: args.params, step: args.step, tolerance: args.tolerance, floor: 1e-9 };
    let report = policy_grad_check(args.customers, &check, global.seed.unwrap_or(0))?;
    println!(
        "{} coordinates checked, {} redrawn at kinks, max relative error {:.3e} (tolerance {:.1e})",
        report.entries.len(),
        report.skipped,
        report.max_relative_error,
        report.tolerance
    );
    if report.passed {
        Ok(())
    } else {
        Err(CliError::Quality("gradient check failed".into()))
    }
}
