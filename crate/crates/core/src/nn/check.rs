use rand::seq::index::sample;
use rand::Rng;
use serde::Serialize;

use super::{Gradients, ParamId, ParamStore};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckConfig {
    pub n_params: usize,
    /// Central-difference half step.
    pub step: f64,
    pub tolerance: f64,
    /// Lower bound of the relative-error denominator, so gradients that are zero up to
    /// rounding compare on an absolute scale.
    pub floor: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig { n_params: 100, step: 1e-3, tolerance: 1e-3, floor: 1e-3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckEntry {
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub relative_error: f64,
}

/// One evaluation of the checked function.
#[derive(Debug, Clone)]
pub struct Probe<S> {
    pub value: S,
    pub grads: Gradients<S>,
    /// Identifies the piece of a piecewise-smooth function (see `Tape::region`); use 0
    /// for smooth functions.
    pub region: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub entries: Vec<GradCheckEntry>,
    /// Coordinates whose difference interval crossed into another piece and were replaced.
    pub skipped: usize,
    pub max_relative_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// Compares backward-pass gradients with central differences on randomly chosen
/// trainable coordinates; the store is restored before returning.
///
/// A coordinate whose `x ± step` evaluations land in a different piece than `x` (a ReLU
/// switched) has no meaningful central difference; it is skipped and another coordinate
/// is drawn.
pub fn grad_check<S, F, R>(store: &mut ParamStore<S>, cfg: &GradCheckConfig, rng: &mut R, mut f: F) -> Result<GradCheckReport>
where
    S: Scalar,
    F: FnMut(&ParamStore<S>) -> Result<Probe<S>>,
    R: Rng + ?Sized,
{
    let coords: Vec<(ParamId, usize)> = store
        .ids()
        .filter(|&id| store.is_trainable(id))
        .flat_map(|id| (0..store.value(id).len()).map(move |i| (id, i)))
        .collect();
    if coords.is_empty() {
        return Err(Error::Config("no trainable parameters to check".into()));
    }
    let base = f(store)?;
    let grads = base.grads;
    let order = sample(rng, coords.len(), coords.len());
    let want = cfg.n_params.min(coords.len());
    let mut entries = Vec::with_capacity(want);
    let mut skipped = 0;
    for k in order.iter() {
        if entries.len() == want {
            break;
        }
        let (id, i) = coords[k];
        let analytic = grads.get(id).map_or(0.0, |g| g.data()[i].as_f64());
        let original = store.value(id).data()[i];
        let hi = S::of(original.as_f64() + cfg.step);
        let lo = S::of(original.as_f64() - cfg.step);
        store.value_mut(id).data_mut()[i] = hi;
        let plus = f(store);
        store.value_mut(id).data_mut()[i] = lo;
        let minus = f(store);
        store.value_mut(id).data_mut()[i] = original;
        let (plus, minus) = (plus?, minus?);
        if plus.region != base.region || minus.region != base.region {
            skipped += 1;
            continue;
        }
        // Divide by the representable step actually taken.
        let numeric = (plus.value.as_f64() - minus.value.as_f64()) / (hi.as_f64() - lo.as_f64());
        let scale = analytic.abs().max(numeric.abs()).max(cfg.floor);
        entries.push(GradCheckEntry {
            param: store.name(id).to_string(),
            index: i,
            analytic,
            numeric,
            relative_error: (analytic - numeric).abs() / scale,
        });
    }
    let max = entries.iter().map(|e| e.relative_error).fold(0.0, f64::max);
    Ok(GradCheckReport { entries, skipped, max_relative_error: max, tolerance: cfg.tolerance, passed: max <= cfg.tolerance })
}
