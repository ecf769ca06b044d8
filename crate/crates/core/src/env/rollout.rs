use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;

use super::{reward, MdpState, NormalizationBounds, WeightVector};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::vrptw::{evaluate, Instance, ObjectiveValues, RoutePlan};

/// Anything that can propose a distribution over the next vertex.
pub trait Policy<S: Scalar> {
    /// Probabilities over all vertices; masked vertices should receive (close to) zero.
    fn action_probabilities(&mut self, instance: &Instance<S>, state: &MdpState<S>, mask: &[bool]) -> Result<Vec<S>>;
}

/// Picks uniformly among the unmasked vertices.
#[derive(Debug, Clone, Copy, Default)]
pub struct UniformPolicy;

impl<S: Scalar> Policy<S> for UniformPolicy {
    fn action_probabilities(&mut self, _: &Instance<S>, _: &MdpState<S>, mask: &[bool]) -> Result<Vec<S>> {
        let open = mask.iter().filter(|&&m| !m).count();
        if open == 0 {
            return Err(Error::AllMasked);
        }
        let p = S::one() / S::of_usize(open);
        Ok(mask.iter().map(|&m| if m { S::zero() } else { p }).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecodeMode {
    Sample,
    Greedy,
}

/// Chooses a vertex; masked vertices are never returned whatever their probability.
///
/// Greedy mode takes the most probable open vertex (lowest id on ties).
pub fn select_action<S: Scalar, R: Rng + ?Sized>(probs: &[S], mask: &[bool], mode: DecodeMode, rng: &mut R) -> Result<usize> {
    let open = || probs.iter().zip(mask).enumerate().filter(|(_, (_, m))| !**m);
    let mut best: Option<(usize, S)> = None;
    for (i, (&p, _)) in open() {
        if best.map_or(true, |(_, b)| p > b) {
            best = Some((i, p));
        }
    }
    let (argmax, _) = best.ok_or(Error::AllMasked)?;
    if mode == DecodeMode::Greedy {
        return Ok(argmax);
    }
    let weights: Vec<f64> = probs
        .iter()
        .zip(mask)
        .map(|(p, &m)| if m { 0.0 } else { p.as_f64().max(0.0) })
        .collect();
    match WeightedIndex::new(&weights) {
        Ok(dist) => Ok(dist.sample(rng)),
        Err(_) => Ok(argmax),
    }
}

/// Outcome of one episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeResult<S> {
    /// Visited vertices starting with the initial depot `0`.
    pub actions: Vec<usize>,
    pub plan: RoutePlan,
    /// Present only for successful episodes.
    pub objectives: Option<ObjectiveValues<S>>,
    pub reward: S,
    pub success: bool,
    /// Sum of the log-probabilities of the chosen actions.
    pub log_prob: S,
}

/// Runs the policy from the initial state until no vertex is selectable.
pub fn rollout<S: Scalar, P: Policy<S> + ?Sized, R: Rng + ?Sized>(
    policy: &mut P,
    instance: &Instance<S>,
    weights: WeightVector<S>,
    bounds: &NormalizationBounds<S>,
    mode: DecodeMode,
    rng: &mut R,
) -> Result<EpisodeResult<S>> {
    let mut state = MdpState::reset(instance, weights);
    let mut actions = vec![0];
    let mut log_prob = S::zero();
    loop {
        let mask = state.mask(instance);
        if mask.iter().all(|&m| m) {
            break;
        }
        let probs = policy.action_probabilities(instance, &state, &mask)?;
        let a = select_action(&probs, &mask, mode, rng)?;
        log_prob += probs[a].ln();
        state.apply(instance, a)?;
        actions.push(a);
    }
    let success = state.is_success();
    let plan = RoutePlan::from_actions(&actions);
    let objectives = if success { Some(evaluate(instance, &plan)?) } else { None };
    let reward = reward(objectives.as_ref(), bounds, weights);
    Ok(EpisodeResult { actions, plan, objectives, reward, success, log_prob })
}
