use std::path::PathBuf;

use movrptw::env::EpisodeResult;
use movrptw::io::{read_solomon, SolomonOptions};
use movrptw::moea::{evolve, random_population, seed_population, EvolutionConfig};
use movrptw::policy::{PolicyConfig, PolicyNet};
use movrptw::train::weight_sweep;
use movrptw::vrptw::check_feasible;

fn rc101_20() -> movrptw::Instance {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/solomon/RC101.txt");
    read_solomon(path, &SolomonOptions { truncate: Some(20), ..SolomonOptions::default() }).unwrap().instance
}

#[test]
fn untrained_policy_seeds_a_feasible_population() {
    let inst = rc101_20();
    let net = PolicyNet::new(PolicyConfig { embed_dim: 32, layers: 1, heads: 4, ff_hidden: 64, ..PolicyConfig::default() }, 2).unwrap();
    let sweep: Vec<EpisodeResult<f32>> = weight_sweep(&net, &inst, 0.02).unwrap().into_iter().map(|p| p.episode).collect();
    let cfg = EvolutionConfig { generations: 60, seed: 4, ..EvolutionConfig::default() };
    let seeded = seed_population(&inst, &sweep, &cfg).unwrap();
    assert_eq!(seeded.members.len(), 51);
    let out = evolve(&inst, seeded, &cfg).unwrap();
    let front = out.final_front();
    assert!(!front.is_empty());
    for ind in &front {
        assert!(check_feasible(&inst, &ind.plan).is_feasible(), "{:?}", ind.plan);
    }
    for w in out.metrics.windows(2) {
        assert!(w[1].hypervolume >= w[0].hypervolume);
    }
}

#[test]
fn random_start_improves_over_generations() {
    let inst = rc101_20();
    let cfg = EvolutionConfig { generations: 100, seed: 8, ..EvolutionConfig::default() };
    let out = evolve(&inst, random_population(&inst, &cfg).unwrap(), &cfg).unwrap();
    let (first, last) = (&out.metrics[0], out.metrics.last().unwrap());
    assert!(last.hypervolume > first.hypervolume);
    assert_eq!(last.feasible_count, 51);
}
