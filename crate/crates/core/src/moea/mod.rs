//! Multiobjective evolutionary search over giant-tour encodings.

mod evolve;
mod genotype;
mod pareto;

pub use evolve::{
    evolve, front_hypervolume, front_of, random_population, reference_for, seed_population, EvolutionConfig,
    EvolutionResult, GenerationMetrics, InitMode, Population,
};
pub use genotype::{
    decode_genotype, mutate, order_crossover, order_crossover_segment, random_genotype, validate_genotype, Genotype,
    Individual,
};
pub use pareto::{constrained_dominates, crowded_cmp, crowding_distance, dominates, fast_nondominated_sort, hypervolume_2d, pareto_front, Point};
