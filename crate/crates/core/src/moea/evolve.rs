use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::genotype::{decode_genotype, mutate, order_crossover, random_genotype, Individual};
use super::pareto::{crowded_cmp, crowding_distance, fast_nondominated_sort, hypervolume_2d, pareto_front, Point};
use crate::env::EpisodeResult;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::vrptw::Instance;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitMode {
    Wadrl,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvolutionConfig {
    pub population_size: usize,
    pub generations: usize,
    pub crossover_rate: f64,
    pub mutation_rate: f64,
    pub tournament_size: usize,
    pub seed: u64,
    pub init_mode: InitMode,
    /// Attempts per random individual before an infeasible one is accepted.
    pub random_retries: usize,
    /// Hypervolume reference `(f1, f2)`; derived from the initial population when absent.
    pub reference: Option<(f64, f64)>,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        EvolutionConfig {
            population_size: 51,
            generations: 500,
            crossover_rate: 0.9,
            mutation_rate: 0.2,
            tournament_size: 2,
            seed: 0,
            init_mode: InitMode::Wadrl,
            random_retries: 20,
            reference: None,
        }
    }
}

impl EvolutionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population_size < 4 {
            return Err(Error::Config("population_size must be at least 4".into()));
        }
        if self.tournament_size < 1 {
            return Err(Error::Config("tournament_size must be at least 1".into()));
        }
        for (name, p) in [("crossover_rate", self.crossover_rate), ("mutation_rate", self.mutation_rate)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} must lie in [0, 1]")));
            }
        }
        if let Some((r1, r2)) = self.reference {
            if !r1.is_finite() || !r2.is_finite() {
                return Err(Error::Config("reference must be finite".into()));
            }
        }
        Ok(())
    }
}

/// A population together with the wall time spent building it.
#[derive(Debug, Clone, PartialEq)]
pub struct Population<S> {
    pub members: Vec<Individual<S>>,
    pub seconds: f64,
}

impl<S: Scalar> Population<S> {
    pub fn points(&self) -> Vec<Point> {
        self.members.iter().map(Individual::point).collect()
    }

    /// Mean `(f1, f2)` over all members.
    pub fn mean_objectives(&self) -> (f64, f64) {
        let n = self.members.len().max(1) as f64;
        let (a, b) = self.points().iter().fold((0.0, 0.0), |(a, b), p| (a + p.f1, b + p.f2));
        (a / n, b / n)
    }
}

fn random_individual<S: Scalar, R: Rng + ?Sized>(instance: &Instance<S>, retries: usize, rng: &mut R) -> Result<Individual<S>> {
    let mut ind = decode_genotype(instance, &random_genotype(instance.customer_count(), rng))?;
    for _ in 1..retries.max(1) {
        if ind.feasible() {
            break;
        }
        ind = decode_genotype(instance, &random_genotype(instance.customer_count(), rng))?;
    }
    Ok(ind)
}

/// Random giant tours split greedily, each retried until feasible or out of attempts.
pub fn random_population<S: Scalar>(instance: &Instance<S>, config: &EvolutionConfig) -> Result<Population<S>> {
    config.validate()?;
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let members = (0..config.population_size)
        .map(|_| random_individual(instance, config.random_retries, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    Ok(Population { members, seconds: started.elapsed().as_secs_f64() })
}

/// Initial population from a weight sweep: every successful episode keeps its own route
/// plan; failed episodes and any missing slots are filled with random individuals.
pub fn seed_population<S: Scalar>(instance: &Instance<S>, sweep: &[EpisodeResult<S>], config: &EvolutionConfig) -> Result<Population<S>> {
    config.validate()?;
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut members = Vec::with_capacity(config.population_size);
    for ep in sweep.iter().take(config.population_size) {
        let ind = if ep.success {
            let ind = Individual::from_plan(instance, ep.plan.clone())?;
            let split = decode_genotype(instance, &ind.genotype)?;
            if split.plan != ind.plan {
                log::debug!("split of a seeded tour differs from its plan: {:?} vs {:?}", split.plan.routes, ind.plan.routes);
            }
            ind
        } else {
            random_individual(instance, config.random_retries, &mut rng)?
        };
        members.push(ind);
    }
    while members.len() < config.population_size {
        members.push(random_individual(instance, config.random_retries, &mut rng)?);
    }
    Ok(Population { members, seconds: started.elapsed().as_secs_f64() })
}

/// Per-generation progress record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationMetrics {
    pub generation: usize,
    /// Hypervolume of every feasible non-dominated solution found so far.
    pub hypervolume: f64,
    pub feasible_count: usize,
    pub best_f1: Option<f64>,
    pub best_f2: Option<f64>,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct EvolutionResult<S> {
    pub population: Vec<Individual<S>>,
    /// Feasible non-dominated solutions seen in any generation, sorted by cost.
    pub archive: Vec<Individual<S>>,
    pub metrics: Vec<GenerationMetrics>,
    pub reference: (f64, f64),
}

impl<S: Scalar> EvolutionResult<S> {
    /// Feasible non-dominated members of the final population, one per objective pair.
    pub fn final_front(&self) -> Vec<Individual<S>> {
        front_of(&self.population)
    }
}

/// Feasible non-dominated members of `members`, one per objective pair, sorted by cost.
pub fn front_of<S: Scalar>(members: &[Individual<S>]) -> Vec<Individual<S>> {
    let points: Vec<Point> = members.iter().map(Individual::point).collect();
    pareto_front(&points).into_iter().map(|i| members[i].clone()).collect()
}

/// Reference point `(1.05 · max f1, 0)` over the given solutions.
pub fn reference_for(points: &[Point]) -> (f64, f64) {
    let feasible: Vec<f64> = points.iter().filter(|p| p.violations == 0).map(|p| p.f1).collect();
    let pool = if feasible.is_empty() { points.iter().map(|p| p.f1).collect() } else { feasible };
    (1.05 * pool.iter().copied().fold(0.0, f64::max), 0.0)
}

/// Hypervolume of the feasible points inside the reference box.
pub fn front_hypervolume(points: &[Point], reference: (f64, f64)) -> f64 {
    let inside: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| p.violations == 0 && p.f1 <= reference.0 && p.f2 >= reference.1)
        .map(|p| (p.f1, p.f2))
        .collect();
    hypervolume_2d(&inside, reference).expect("points were filtered to the reference box")
}

/// Sets rank and crowding distance of every member.
fn rank_and_crowd<S: Scalar>(members: &mut [Individual<S>]) -> Vec<Vec<usize>> {
    let points: Vec<Point> = members.iter().map(Individual::point).collect();
    let fronts = fast_nondominated_sort(&points);
    for (r, front) in fronts.iter().enumerate() {
        let pts: Vec<Point> = front.iter().map(|&i| points[i]).collect();
        for (&i, d) in front.iter().zip(crowding_distance(&pts)) {
            members[i].rank = r + 1;
            members[i].crowding = d;
        }
    }
    fronts
}

fn tournament<'a, S, R: Rng + ?Sized>(pop: &'a [Individual<S>], size: usize, rng: &mut R) -> &'a Individual<S> {
    let mut best = &pop[rng.gen_range(0..pop.len())];
    for _ in 1..size {
        let other = &pop[rng.gen_range(0..pop.len())];
        if crowded_cmp(other.rank, other.crowding, best.rank, best.crowding).is_lt() {
            best = other;
        }
    }
    best
}

fn update_archive<S: Scalar>(archive: &mut Vec<Individual<S>>, candidates: &[Individual<S>]) {
    let mut pool = std::mem::take(archive);
    pool.extend(candidates.iter().filter(|c| c.feasible()).cloned());
    *archive = front_of(&pool);
}

fn metrics_of<S: Scalar>(
    generation: usize,
    population: &[Individual<S>],
    archive: &[Individual<S>],
    reference: (f64, f64),
    started: Instant,
) -> GenerationMetrics {
    let feasible: Vec<Point> = population.iter().filter(|i| i.feasible()).map(Individual::point).collect();
    let archive_points: Vec<Point> = archive.iter().map(Individual::point).collect();
    GenerationMetrics {
        generation,
        hypervolume: front_hypervolume(&archive_points, reference),
        feasible_count: feasible.len(),
        best_f1: feasible.iter().map(|p| p.f1).min_by(f64::total_cmp),
        best_f2: feasible.iter().map(|p| p.f2).max_by(f64::total_cmp),
        seconds: started.elapsed().as_secs_f64(),
    }
}

/// Elitist NSGA-II: binary tournaments on (rank, crowding), OX1 crossover, swap or
/// inversion mutation, and truncation of parents plus offspring back to the
/// population size by rank and then crowding distance.
pub fn evolve<S: Scalar>(instance: &Instance<S>, init: Population<S>, config: &EvolutionConfig) -> Result<EvolutionResult<S>> {
    config.validate()?;
    let n = config.population_size;
    if init.members.len() != n {
        return Err(Error::Config(format!("initial population has {} members, expected {n}", init.members.len())));
    }
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_0f_e70_1e);
    let mut population = init.members;
    rank_and_crowd(&mut population);
    let reference = config.reference.unwrap_or_else(|| reference_for(&population.iter().map(Individual::point).collect::<Vec<_>>()));
    let mut archive = Vec::new();
    update_archive(&mut archive, &population);
    let mut metrics = vec![metrics_of(0, &population, &archive, reference, started)];
    for generation in 1..=config.generations {
        let children: Vec<Vec<usize>> = (0..n)
            .map(|_| {
                let p1 = tournament(&population, config.tournament_size, &mut rng);
                let p2 = tournament(&population, config.tournament_size, &mut rng);
                let mut child = if rng.gen_bool(config.crossover_rate) {
                    order_crossover(&p1.genotype, &p2.genotype, &mut rng)
                } else {
                    p1.genotype.clone()
                };
                mutate(&mut child, config.mutation_rate, &mut rng);
                child
            })
            .collect();
        let offspring = children.par_iter().map(|g| decode_genotype(instance, g)).collect::<Result<Vec<_>>>()?;
        update_archive(&mut archive, &offspring);
        let mut merged = population;
        merged.extend(offspring);
        let fronts = rank_and_crowd(&mut merged);
        let mut keep = Vec::with_capacity(n);
        for front in fronts {
            if keep.len() + front.len() <= n {
                keep.extend(front);
            } else {
                let mut last = front;
                last.sort_by(|&a, &b| merged[b].crowding.total_cmp(&merged[a].crowding).then(a.cmp(&b)));
                keep.extend(last.into_iter().take(n - keep.len()));
            }
            if keep.len() == n {
                break;
            }
        }
        keep.sort_unstable();
        let mut slots: Vec<Option<Individual<S>>> = merged.into_iter().map(Some).collect();
        population = keep.into_iter().map(|i| slots[i].take().expect("each index kept once")).collect();
        metrics.push(metrics_of(generation, &population, &archive, reference, started));
    }
    Ok(EvolutionResult { population, archive, metrics, reference })
}
