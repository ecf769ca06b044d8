//! Attention policy: vertex encoder, weight-embedding module and masked pointer decoder.

mod decoder;

pub use decoder::DecoderSession;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{rollout, DecodeMode, EpisodeResult, MdpState, NormalizationBounds, WeightVector};
use crate::error::{Error, Result};
use crate::nn::{BatchNormIds, Gradients, NodeId, NormMode, ParamId, ParamStore, Tape, Tensor};
use crate::scalar::Scalar;
use crate::vrptw::Instance;

pub const DEPOT_FEATURES: usize = 3;
pub const CUSTOMER_FEATURES: usize = 8;
pub const WEIGHT_FEATURES: usize = 4;
/// Coordinates are divided by this before embedding.
pub const COORD_SCALE: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PolicyConfig {
    pub embed_dim: usize,
    pub layers: usize,
    pub heads: usize,
    pub ff_hidden: usize,
    /// Compatibilities are squashed into `[-clip, clip]`.
    pub clip: f64,
    pub mask_value: f64,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig { embed_dim: 128, layers: 3, heads: 8, ff_hidden: 512, clip: 10.0, mask_value: -999999.0 }
    }
}

impl PolicyConfig {
    pub fn key_dim(&self) -> usize {
        self.embed_dim / self.heads
    }

    pub fn validate(&self) -> Result<()> {
        if self.embed_dim == 0 || self.heads == 0 || self.embed_dim % self.heads != 0 {
            return Err(Error::Config(format!(
                "embed_dim {} must be a positive multiple of heads {}",
                self.embed_dim, self.heads
            )));
        }
        if self.ff_hidden == 0 || !(self.clip > 0.0) || !(self.mask_value <= -1e5) {
            return Err(Error::Config("ff_hidden > 0, clip > 0 and mask_value <= -1e5 required".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Dense {
    w: ParamId,
    b: Option<ParamId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct FeedForward {
    inner: Dense,
    outer: Dense,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct EncoderLayer {
    wq: ParamId,
    wk: ParamId,
    wv: ParamId,
    wo: ParamId,
    bn1: BatchNormIds,
    ff: FeedForward,
    bn2: BatchNormIds,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Layout {
    depot: Dense,
    customer: Dense,
    layers: Vec<EncoderLayer>,
    weight_in: Dense,
    weight_ff: FeedForward,
    dec_wq: ParamId,
    dec_wk: ParamId,
    dec_wv: ParamId,
    dec_wo: ParamId,
}

/// Parameter shapes in creation order: `(name, shape, fan_in)`; batch-norm entries have fan_in 0.
fn parameter_plan(cfg: &PolicyConfig) -> Vec<(String, Vec<usize>, usize)> {
    let d = cfg.embed_dim;
    let mut plan = vec![
        ("enc.depot.w".to_string(), vec![d, DEPOT_FEATURES], DEPOT_FEATURES),
        ("enc.depot.b".to_string(), vec![1, d], DEPOT_FEATURES),
        ("enc.customer.w".to_string(), vec![d, CUSTOMER_FEATURES], CUSTOMER_FEATURES),
        ("enc.customer.b".to_string(), vec![1, d], CUSTOMER_FEATURES),
    ];
    let bn = |plan: &mut Vec<(String, Vec<usize>, usize)>, p: &str| {
        for s in ["gamma", "beta", "mean", "var"] {
            plan.push((format!("{p}.{s}"), vec![1, d], 0));
        }
    };
    let ff = |plan: &mut Vec<(String, Vec<usize>, usize)>, p: &str| {
        plan.push((format!("{p}.w1"), vec![cfg.ff_hidden, d], d));
        plan.push((format!("{p}.b1"), vec![1, cfg.ff_hidden], d));
        plan.push((format!("{p}.w2"), vec![d, cfg.ff_hidden], cfg.ff_hidden));
        plan.push((format!("{p}.b2"), vec![1, d], cfg.ff_hidden));
    };
    for l in 0..cfg.layers {
        for m in ["wq", "wk", "wv", "wo"] {
            plan.push((format!("enc.{l}.{m}"), vec![d, d], d));
        }
        bn(&mut plan, &format!("enc.{l}.bn1"));
        ff(&mut plan, &format!("enc.{l}.ff"));
        bn(&mut plan, &format!("enc.{l}.bn2"));
    }
    plan.push(("weight.w".to_string(), vec![d, WEIGHT_FEATURES], WEIGHT_FEATURES));
    plan.push(("weight.b".to_string(), vec![1, d], WEIGHT_FEATURES));
    ff(&mut plan, "weight.ff");
    plan.push(("dec.wq".to_string(), vec![d, 3 * d], 3 * d));
    for m in ["wk", "wv", "wo"] {
        plan.push((format!("dec.{m}"), vec![d, d], d));
    }
    plan
}

impl Layout {
    fn resolve<S: Scalar>(store: &ParamStore<S>, cfg: &PolicyConfig) -> Result<Layout> {
        for (name, shape, _) in parameter_plan(cfg) {
            match store.id(&name) {
                Some(id) if store.value(id).shape() == shape.as_slice() => {}
                Some(id) => {
                    return Err(Error::Checkpoint(format!(
                        "parameter `{name}` has shape {:?}, expected {shape:?}",
                        store.value(id).shape()
                    )))
                }
                None => return Err(Error::Checkpoint(format!("parameter `{name}` is missing"))),
            }
        }
        if store.len() != parameter_plan(cfg).len() {
            return Err(Error::Checkpoint("parameter file has unexpected entries".into()));
        }
        let id = |n: &str| store.id(n).expect("checked above");
        let dense = |p: &str| Dense { w: id(&format!("{p}.w")), b: Some(id(&format!("{p}.b"))) };
        let ff = |p: &str| FeedForward {
            inner: Dense { w: id(&format!("{p}.w1")), b: Some(id(&format!("{p}.b1"))) },
            outer: Dense { w: id(&format!("{p}.w2")), b: Some(id(&format!("{p}.b2"))) },
        };
        let bn = |p: &str| BatchNormIds {
            gamma: id(&format!("{p}.gamma")),
            beta: id(&format!("{p}.beta")),
            running_mean: id(&format!("{p}.mean")),
            running_var: id(&format!("{p}.var")),
        };
        let layers = (0..cfg.layers)
            .map(|l| EncoderLayer {
                wq: id(&format!("enc.{l}.wq")),
                wk: id(&format!("enc.{l}.wk")),
                wv: id(&format!("enc.{l}.wv")),
                wo: id(&format!("enc.{l}.wo")),
                bn1: bn(&format!("enc.{l}.bn1")),
                ff: ff(&format!("enc.{l}.ff")),
                bn2: bn(&format!("enc.{l}.bn2")),
            })
            .collect();
        Ok(Layout {
            depot: dense("enc.depot"),
            customer: dense("enc.customer"),
            layers,
            weight_in: dense("weight"),
            weight_ff: ff("weight.ff"),
            dec_wq: id("dec.wq"),
            dec_wk: id("dec.wk"),
            dec_wv: id("dec.wv"),
            dec_wo: id("dec.wo"),
        })
    }
}

/// Output of [`PolicyNet::replay_log_prob`].
#[derive(Debug, Clone)]
pub struct Replay<S> {
    pub log_prob: S,
    pub grads: Gradients<S>,
    pub stat_updates: Vec<(ParamId, Tensor<S>)>,
    /// ReLU activity fingerprint of the forward pass.
    pub region: u64,
}

/// Policy network: configuration, parameter layout and parameter values.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyNet<S> {
    config: PolicyConfig,
    layout: Layout,
    params: ParamStore<S>,
}

impl<S: Scalar> PolicyNet<S> {
    /// Fresh parameters: linear weights uniform in `±1/√fan_in`, batch norm at identity.
    pub fn new(config: PolicyConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        for (name, shape, fan_in) in parameter_plan(&config) {
            if fan_in > 0 {
                store.add_uniform(name, &shape, fan_in, &mut rng)?;
            } else {
                let fill = if name.ends_with(".gamma") || name.ends_with(".var") { S::one() } else { S::zero() };
                let trainable = name.ends_with(".gamma") || name.ends_with(".beta");
                store.add(name, Tensor::filled(&shape, fill), trainable)?;
            }
        }
        PolicyNet::from_params(config, store)
    }

    /// Wraps loaded parameters, checking names and shapes against the configuration.
    pub fn from_params(config: PolicyConfig, params: ParamStore<S>) -> Result<Self> {
        config.validate()?;
        let layout = Layout::resolve(&params, &config)?;
        Ok(PolicyNet { config, layout, params })
    }

    pub fn config(&self) -> &PolicyConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore<S> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<S> {
        &mut self.params
    }

    pub fn into_params(self) -> ParamStore<S> {
        self.params
    }

    /// Scaled depot features `[x, y, L0]` and customer features `[x, y, E, e, l, L, d, v]`.
    pub fn vertex_features(instance: &Instance<S>) -> (Tensor<S>, Tensor<S>) {
        let coord = S::of(COORD_SCALE);
        let horizon = instance.depot().horizon_end;
        let cap = instance.fleet().capacity;
        let depot = instance.depot();
        let depot_row = Tensor::row(vec![depot.coord.x / coord, depot.coord.y / coord, S::one()]);
        let mut data = Vec::with_capacity(instance.customer_count() * CUSTOMER_FEATURES);
        for (c, hard) in instance.customers().iter().zip(instance.hard_windows()) {
            data.extend_from_slice(&[
                c.coord.x / coord,
                c.coord.y / coord,
                hard.start / horizon,
                c.soft_window.start / horizon,
                c.soft_window.end / horizon,
                hard.end / horizon,
                c.demand / cap,
                c.service_time / horizon,
            ]);
        }
        let customers = Tensor::matrix(instance.customer_count(), CUSTOMER_FEATURES, data).expect("feature count");
        (depot_row, customers)
    }

    /// Initial embeddings of every vertex of every instance, stacked as
    /// `[depot, customers...]` per instance. All instances must have the same size.
    pub fn embed_vertices(&self, tape: &mut Tape<'_, S>, instances: &[&Instance<S>]) -> Result<NodeId> {
        let n = check_batch(instances)?;
        let h = n - 1;
        let b = instances.len();
        let mut depot = Vec::with_capacity(b * DEPOT_FEATURES);
        let mut cust = Vec::with_capacity(b * h * CUSTOMER_FEATURES);
        for inst in instances {
            let (d, c) = Self::vertex_features(inst);
            depot.extend_from_slice(d.data());
            cust.extend_from_slice(c.data());
        }
        let depot = tape.input(Tensor::matrix(b, DEPOT_FEATURES, depot)?, false);
        let cust = tape.input(Tensor::matrix(b * h, CUSTOMER_FEATURES, cust)?, false);
        let l = &self.layout;
        let depot = tape.dense(depot, l.depot.w, l.depot.b)?;
        let cust = tape.dense(cust, l.customer.w, l.customer.b)?;
        let stacked = tape.concat_rows(&[depot, cust])?;
        let order: Vec<usize> = (0..b).flat_map(|i| std::iter::once(i).chain((0..h).map(move |c| b + i * h + c))).collect();
        tape.gather_rows(stacked, &order)
    }

    /// Node embeddings after all encoder layers, `[batch · vertices, embed_dim]`.
    pub fn encode(&self, tape: &mut Tape<'_, S>, instances: &[&Instance<S>], mode: NormMode) -> Result<NodeId> {
        let n = check_batch(instances)?;
        let mut h = self.embed_vertices(tape, instances)?;
        for layer in &self.layout.layers {
            let q = tape.dense(h, layer.wq, None)?;
            let k = tape.dense(h, layer.wk, None)?;
            let v = tape.dense(h, layer.wv, None)?;
            let a = tape.attention(q, k, v, self.config.heads, n, n, None)?;
            let a = tape.dense(a, layer.wo, None)?;
            let skip = tape.add(h, a)?;
            let hat = tape.batch_norm(skip, layer.bn1, mode)?;
            let f = feed_forward(tape, &layer.ff, hat)?;
            let skip = tape.add(hat, f)?;
            h = tape.batch_norm(skip, layer.bn2, mode)?;
        }
        Ok(h)
    }

    /// Encodes one instance with running batch-norm statistics; returns `[vertices, embed_dim]`.
    pub fn encode_instance(&self, instance: &Instance<S>) -> Result<Tensor<S>> {
        let mut tape = Tape::new(&self.params);
        let h = self.encode(&mut tape, &[instance], NormMode::Infer)?;
        Ok(tape.value(h).clone())
    }

    /// Decoder over precomputed node embeddings of `instance`.
    pub fn session<'a>(&'a self, instance: &'a Instance<S>, embeddings: Tensor<S>, track_grad: bool) -> Result<DecoderSession<'a, S>> {
        DecoderSession::new(self, instance, embeddings, track_grad)
    }

    /// Inference rollout (running batch-norm statistics).
    pub fn rollout<R: rand::Rng + ?Sized>(
        &self,
        instance: &Instance<S>,
        weights: WeightVector<S>,
        bounds: &NormalizationBounds<S>,
        mode: DecodeMode,
        rng: &mut R,
    ) -> Result<EpisodeResult<S>> {
        let emb = self.encode_instance(instance)?;
        let mut session = self.session(instance, emb, false)?;
        rollout(&mut session, instance, weights, bounds, mode, rng)
    }

    /// Greedy inference rollout; deterministic.
    pub fn greedy(&self, instance: &Instance<S>, weights: WeightVector<S>, bounds: &NormalizationBounds<S>) -> Result<EpisodeResult<S>> {
        self.rollout(instance, weights, bounds, DecodeMode::Greedy, &mut ChaCha8Rng::seed_from_u64(0))
    }

    /// Log-probability of a given action sequence and its gradient with respect to every
    /// trainable parameter. The encoder runs in `mode`; running-statistic updates are
    /// returned rather than applied.
    pub fn replay_log_prob(
        &self,
        instance: &Instance<S>,
        weights: WeightVector<S>,
        actions: &[usize],
        mode: NormMode,
    ) -> Result<Replay<S>> {
        let mut enc = Tape::new(&self.params);
        let h = self.encode(&mut enc, &[instance], mode)?;
        let mut session = self.session(instance, enc.value(h).clone(), true)?;
        let mut state = MdpState::reset(instance, weights);
        for &a in &actions[1..] {
            let mask = state.mask(instance);
            session.log_probs(&state, &mask)?;
            state.apply(instance, a)?;
        }
        let lp = session.episode_log_prob(actions)?;
        let value = session.tape().value(lp).data()[0];
        let (mut grads, emb) = session.backward(lp, S::one())?;
        if let Some(emb) = emb {
            grads.merge(&enc.backward(&[(h, emb)])?.params);
        }
        let region = enc.region() ^ session.tape().region().rotate_left(17);
        Ok(Replay { log_prob: value, grads, stat_updates: enc.take_stat_updates(), region })
    }

    pub fn cast<T: Scalar>(&self) -> PolicyNet<T> {
        PolicyNet { config: self.config, layout: self.layout.clone(), params: self.params.cast() }
    }
}

fn feed_forward<S: Scalar>(tape: &mut Tape<'_, S>, ff: &FeedForward, x: NodeId) -> Result<NodeId> {
    let h = tape.dense(x, ff.inner.w, ff.inner.b)?;
    let h = tape.relu(h)?;
    tape.dense(h, ff.outer.w, ff.outer.b)
}

fn check_batch<S: Scalar>(instances: &[&Instance<S>]) -> Result<usize> {
    let Some(first) = instances.first() else {
        return Err(Error::Shape("empty instance batch".into()));
    };
    let n = first.vertex_count();
    if instances.iter().any(|i| i.vertex_count() != n) {
        return Err(Error::Shape("instances in a batch must have the same number of customers".into()));
    }
    Ok(n)
}
