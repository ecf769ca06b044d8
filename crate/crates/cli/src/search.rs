//! Sweep, evolution, pipeline and comparison commands.

use std::path::Path;
use std::time::Instant;

use movrptw::io::{write_front, FrontFormat, FrontRecord, Provenance};
use movrptw::moea::{
    evolve, front_hypervolume, reference_for, random_population, seed_population, EvolutionConfig, EvolutionResult,
    GenerationMetrics, InitMode, Point,
};
use movrptw::train::{weight_grid, weight_sweep, SweepPoint};
use movrptw::vrptw::{self, check_feasible};
use movrptw::{Instance, PolicyNet, Population, Real};
use serde::Serialize;

use crate::args::{CompareArgs, EvolutionArgs, EvolveArgs, GlobalArgs, InitArg, PipelineArgs, SweepArgs};
use crate::error::{CliError, CliResult};
use crate::files::{create_parent, load_config, load_instance, load_policy, record, write_jsonl};

pub const SEED_FRONT_FILE: &str = "seed_front.csv";
pub const FINAL_FRONT_FILE: &str = "final_front.csv";
pub const METRICS_FILE: &str = "metrics.jsonl";

/// Successful sweep episodes as front records carrying their weights.
/// Weights are taken from the double-precision grid so they print exactly.
pub fn sweep_records(instance: &vrptw::Instance<f64>, sweep: &[SweepPoint<Real>], interval: f64) -> CliResult<Vec<FrontRecord>> {
    let grid = weight_grid::<f64>(interval)?;
    sweep
        .iter()
        .zip(grid)
        .filter(|(p, _)| p.episode.success)
        .map(|(p, w)| record(instance, &p.episode.plan, Some((w.w1(), w.w2())), Provenance::Wadrl))
        .collect()
}

fn individual_records(instance: &vrptw::Instance<f64>, members: &[movrptw::Individual], provenance: Provenance) -> CliResult<Vec<FrontRecord>> {
    members.iter().map(|m| record(instance, &m.plan, None, provenance)).collect()
}

fn check_interval(interval: f64) -> CliResult<()> {
    if interval > 0.0 && interval <= 1.0 {
        Ok(())
    } else {
        Err(CliError::Usage(format!("--interval must lie in (0, 1], got {interval}")))
    }
}

/// Evolution config from the optional file, the flags and the global seed.
pub fn evolution_config(args: &EvolutionArgs, global: &GlobalArgs) -> CliResult<EvolutionConfig> {
    let mut cfg: EvolutionConfig = load_config(args.config.as_deref())?;
    if let Some(g) = args.generations {
        cfg.generations = g;
    }
    if let Some(n) = args.population {
        cfg.population_size = n;
    }
    if let Some(s) = global.seed {
        cfg.seed = s;
    }
    check_interval(args.interval)?;
    cfg.validate()?;
    Ok(cfg)
}

/// Initial population; the seeded variant also returns the sweep it came from and
/// counts the sweep in the construction time.
pub fn initial_population(
    instance: &Instance,
    mode: InitMode,
    policy: Option<&PolicyNet>,
    config: &EvolutionConfig,
    interval: f64,
) -> CliResult<(Population, Vec<SweepPoint<Real>>)> {
    match mode {
        InitMode::Random => Ok((random_population(instance, config)?, Vec::new())),
        InitMode::Wadrl => {
            let net = policy.ok_or_else(|| CliError::Usage("seeded initialisation needs --checkpoint".into()))?;
            let started = Instant::now();
            let sweep = weight_sweep(net, instance, interval)?;
            let swept = started.elapsed().as_secs_f64();
            let episodes: Vec<_> = sweep.iter().map(|p| p.episode.clone()).collect();
            let mut population = seed_population(instance, &episodes, config)?;
            population.seconds += swept;
            Ok((population, sweep))
        }
    }
}

/// Fails with a quality error when the front is empty or any member breaks a constraint.
pub fn quality_gate(instance: &vrptw::Instance<f64>, records: &[FrontRecord]) -> CliResult<()> {
    if records.is_empty() {
        return Err(CliError::Quality("the final front has no feasible solution".into()));
    }
    let broken: Vec<String> = records
        .iter()
        .enumerate()
        .filter_map(|(k, r)| {
            let report = check_feasible(instance, &r.routes);
            (!report.is_feasible()).then(|| format!("solution {k}: {:?}", report.violations))
        })
        .collect();
    if broken.is_empty() {
        Ok(())
    } else {
        Err(CliError::Quality(format!("infeasible final-front members:\n{}", broken.join("\n"))))
    }
}

fn timed_metrics(metrics: &[GenerationMetrics], reproducible: bool) -> Vec<GenerationMetrics> {
    metrics.iter().map(|m| GenerationMetrics { seconds: if reproducible { 0.0 } else { m.seconds }, ..m.clone() }).collect()
}

fn final_records(instance: &vrptw::Instance<f64>, result: &EvolutionResult<Real>) -> CliResult<Vec<FrontRecord>> {
    individual_records(instance, &result.final_front(), Provenance::Nsga2)
}

pub fn sweep(args: &SweepArgs) -> CliResult<()> {
    check_interval(args.interval)?;
    let exact: vrptw::Instance<f64> = load_instance(&args.instance.instance, args.instance.truncate)?;
    let instance: Instance = exact.cast();
    let net = load_policy(&args.checkpoint, &instance)?;
    let sweep = weight_sweep(&net, &instance, args.interval)?;
    let records = sweep_records(&exact, &sweep, args.interval)?;
    let failed = sweep.len() - records.len();
    if failed > 0 {
        log::warn!("{failed} of {} weight vectors left customers unserved", sweep.len());
    }
    if records.is_empty() {
        return Err(CliError::Quality("no weight vector produced a complete solution".into()));
    }
    create_parent(&args.out)?;
    write_front(&records, &args.out, FrontFormat::from_path(&args.out))?;
    println!("{} solutions written to {}", records.len(), args.out.display());
    Ok(())
}

pub fn evolve_command(args: &EvolveArgs, global: &GlobalArgs) -> CliResult<()> {
    let mut cfg = evolution_config(&args.evolution, global)?;
    if let Some(init) = args.init {
        cfg.init_mode = match init {
            InitArg::Wadrl => InitMode::Wadrl,
            InitArg::Random => InitMode::Random,
        };
    }
    if cfg.init_mode == InitMode::Wadrl && args.checkpoint.is_none() {
        return Err(CliError::Usage("--init wadrl needs --checkpoint".into()));
    }
    let exact: vrptw::Instance<f64> = load_instance(&args.instance.instance, args.instance.truncate)?;
    let instance: Instance = exact.cast();
    let net = args.checkpoint.as_deref().map(|p| load_policy(p, &instance)).transpose()?;
    let (init, _) = initial_population(&instance, cfg.init_mode, net.as_ref(), &cfg, args.evolution.interval)?;
    let result = evolve(&instance, init, &cfg)?;
    let records = final_records(&exact, &result)?;
    create_parent(&args.out)?;
    write_front(&records, &args.out, FrontFormat::from_path(&args.out))?;
    if let Some(path) = &args.metrics {
        write_jsonl(&timed_metrics(&result.metrics, global.reproducible), path)?;
    }
    report(&result);
    quality_gate(&exact, &records)
}

fn report(result: &EvolutionResult<Real>) {
    if let Some(last) = result.metrics.last() {
        println!(
            "generation {}: hypervolume {:.4}, {} feasible, final front of {}",
            last.generation,
            last.hypervolume,
            last.feasible_count,
            result.final_front().len()
        );
    }
}

pub fn pipeline(args: &PipelineArgs, global: &GlobalArgs) -> CliResult<()> {
    let cfg = EvolutionConfig { init_mode: InitMode::Wadrl, ..evolution_config(&args.evolution, global)? };
    let exact: vrptw::Instance<f64> = load_instance(&args.instance.instance, args.instance.truncate)?;
    let instance: Instance = exact.cast();
    let net = load_policy(&args.checkpoint, &instance)?;
    let (init, sweep) = initial_population(&instance, InitMode::Wadrl, Some(&net), &cfg, args.evolution.interval)?;
    let result = evolve(&instance, init, &cfg)?;
    let seeds = sweep_records(&exact, &sweep, args.evolution.interval)?;
    let finals = final_records(&exact, &result)?;
    let dir = &args.out_dir;
    std::fs::create_dir_all(dir).map_err(|e| movrptw::Error::io(dir, e))?;
    write_front(&seeds, &dir.join(SEED_FRONT_FILE), FrontFormat::Csv)?;
    write_front(&finals, &dir.join(FINAL_FRONT_FILE), FrontFormat::Csv)?;
    write_jsonl(&timed_metrics(&result.metrics, global.reproducible), &dir.join(METRICS_FILE))?;
    println!("{} of {} sweep solutions complete", seeds.len(), sweep.len());
    report(&result);
    quality_gate(&exact, &finals)
}

/// One row of the comparison table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareRow {
    pub mode: String,
    pub generations: usize,
    pub f1_mean: f64,
    pub f2_mean: f64,
    pub seconds: f64,
    pub hypervolume: f64,
}

fn mode_name(mode: InitMode) -> &'static str {
    match mode {
        InitMode::Wadrl => "wadrl",
        InitMode::Random => "random",
    }
}

/// Runs both initialisations for every budget. All runs share one hypervolume reference,
/// taken from the two initial populations unless the config fixes it.
pub fn compare_modes(
    instance: &Instance,
    policy: &PolicyNet,
    config: &EvolutionConfig,
    budgets: &[usize],
    interval: f64,
) -> CliResult<Vec<CompareRow>> {
    let inits = [InitMode::Wadrl, InitMode::Random]
        .into_iter()
        .map(|mode| Ok((mode, initial_population(instance, mode, Some(policy), config, interval)?.0)))
        .collect::<CliResult<Vec<_>>>()?;
    let reference = config.reference.unwrap_or_else(|| {
        let points: Vec<Point> = inits.iter().flat_map(|(_, p)| p.points()).collect();
        reference_for(&points)
    });
    let mut rows = Vec::new();
    for (mode, init) in &inits {
        for &generations in budgets {
            let cfg = EvolutionConfig { generations, reference: Some(reference), init_mode: *mode, ..config.clone() };
            let result = evolve(instance, init.clone(), &cfg)?;
            let front = result.final_front();
            let points: Vec<Point> = front.iter().map(|m| m.point()).collect();
            let n = points.len().max(1) as f64;
            rows.push(CompareRow {
                mode: mode_name(*mode).into(),
                generations,
                f1_mean: points.iter().map(|p| p.f1).sum::<f64>() / n,
                f2_mean: points.iter().map(|p| p.f2).sum::<f64>() / n,
                seconds: init.seconds + result.metrics.last().map_or(0.0, |m| m.seconds),
                hypervolume: front_hypervolume(&points, reference),
            });
        }
    }
    Ok(rows)
}

pub fn compare(args: &CompareArgs, global: &GlobalArgs) -> CliResult<()> {
    let cfg = evolution_config(&args.evolution, global)?;
    if args.budgets.is_empty() {
        return Err(CliError::Usage("--budgets needs at least one value".into()));
    }
    let exact: vrptw::Instance<f64> = load_instance(&args.instance.instance, args.instance.truncate)?;
    let instance: Instance = exact.cast();
    let net = load_policy(&args.checkpoint, &instance)?;
    let mut rows = compare_modes(&instance, &net, &cfg, &args.budgets, args.evolution.interval)?;
    if global.reproducible {
        rows.iter_mut().for_each(|r| r.seconds = 0.0);
    }
    write_rows(&rows, &args.out)?;
    for r in &rows {
        println!("{:>6} {:>5}: f1 {:.2} f2 {:.4} hv {:.4} {:.2}s", r.mode, r.generations, r.f1_mean, r.f2_mean, r.hypervolume, r.seconds);
    }
    Ok(())
}

fn write_rows(rows: &[CompareRow], path: &Path) -> CliResult<()> {
    create_parent(path)?;
    let mut w = csv::Writer::from_path(path).map_err(movrptw::Error::from)?;
    for r in rows {
        w.serialize(r).map_err(movrptw::Error::from)?;
    }
    w.flush().map_err(|e| movrptw::Error::io(path, e))?;
    Ok(())
}
