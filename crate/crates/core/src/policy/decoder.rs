use super::{feed_forward, PolicyNet};
use crate::env::{MdpState, Policy};
use crate::error::{Error, Result};
use crate::nn::{Gradients, NodeId, Tape, Tensor};
use crate::scalar::Scalar;
use crate::vrptw::Instance;

/// Step-by-step decoder for one instance.
///
/// Every call to [`DecoderSession::log_probs`] is recorded on the session's tape so the
/// log-probability of the finished episode can be differentiated afterwards.
pub struct DecoderSession<'a, S> {
    net: &'a PolicyNet<S>,
    instance: &'a Instance<S>,
    tape: Tape<'a, S>,
    embeddings: NodeId,
    keys: NodeId,
    values: NodeId,
    graph: NodeId,
    steps: Vec<NodeId>,
}

impl<'a, S: Scalar> DecoderSession<'a, S> {
    pub(super) fn new(net: &'a PolicyNet<S>, instance: &'a Instance<S>, embeddings: Tensor<S>, track_grad: bool) -> Result<Self> {
        let n = instance.vertex_count();
        if embeddings.rows() != n || embeddings.cols() != net.config.embed_dim {
            return Err(Error::Shape(format!(
                "embeddings {:?} do not match {n} vertices × {}",
                embeddings.shape(),
                net.config.embed_dim
            )));
        }
        let mut tape = Tape::new(&net.params);
        let embeddings = tape.input(embeddings, track_grad);
        let l = &net.layout;
        let keys = tape.dense(embeddings, l.dec_wk, None)?;
        let values = tape.dense(embeddings, l.dec_wv, None)?;
        let graph = tape.mean_rows(embeddings, n)?;
        Ok(DecoderSession { net, instance, tape, embeddings, keys, values, graph, steps: Vec::new() })
    }

    pub fn tape(&self) -> &Tape<'a, S> {
        &self.tape
    }

    /// Graph embedding: mean of the node embeddings.
    pub fn graph_embedding(&self) -> &Tensor<S> {
        self.tape.value(self.graph)
    }

    /// Weight-embedding output for the vehicle state and preference in `state`.
    pub fn weight_embedding(&mut self, state: &MdpState<S>) -> Result<NodeId> {
        let inst = self.instance;
        let w = state.weights();
        let feats = Tensor::row(vec![
            state.load() / inst.fleet().capacity,
            state.time() / inst.depot().horizon_end,
            w.w1(),
            w.w2(),
        ]);
        let x = self.tape.input(feats, false);
        let l = &self.net.layout;
        let x = self.tape.dense(x, l.weight_in.w, l.weight_in.b)?;
        feed_forward(&mut self.tape, &l.weight_ff, x)
    }

    /// Records one decoding step and returns the `[1, vertices]` log-probability row.
    pub fn log_probs(&mut self, state: &MdpState<S>, mask: &[bool]) -> Result<NodeId> {
        if mask.len() != self.instance.vertex_count() {
            return Err(Error::Shape(format!("mask has {} entries", mask.len())));
        }
        if mask.iter().all(|&m| m) {
            return Err(Error::AllMasked);
        }
        let cfg = *self.net.config();
        let n = self.instance.vertex_count();
        let o = self.weight_embedding(state)?;
        let current = self.tape.gather_rows(self.embeddings, &[state.current()])?;
        let context = self.tape.concat_cols(&[self.graph, current, o])?;
        let l = &self.net.layout;
        let q = self.tape.dense(context, l.dec_wq, None)?;
        let glimpse = self.tape.attention(q, self.keys, self.values, cfg.heads, 1, n, Some(mask))?;
        let glimpse = self.tape.dense(glimpse, l.dec_wo, None)?;
        let compat = self.tape.matmul_t(glimpse, self.keys)?;
        let compat = self.tape.scale(compat, S::one() / S::of_usize(cfg.key_dim()).sqrt())?;
        let compat = self.tape.tanh(compat)?;
        let compat = self.tape.scale(compat, S::of(cfg.clip))?;
        let lp = self.tape.masked_log_softmax(compat, mask, S::of(cfg.mask_value))?;
        self.steps.push(lp);
        Ok(lp)
    }

    /// Probability vector for the next vertex.
    pub fn probabilities(&mut self, state: &MdpState<S>, mask: &[bool]) -> Result<Vec<S>> {
        let lp = self.log_probs(state, mask)?;
        Ok(self.tape.value(lp).data().iter().map(|v| v.exp()).collect())
    }

    pub fn steps_recorded(&self) -> usize {
        self.steps.len()
    }

    /// Sum of the recorded log-probabilities of `actions` (which starts with the initial
    /// depot, so it has one more entry than there are recorded steps).
    pub fn episode_log_prob(&mut self, actions: &[usize]) -> Result<NodeId> {
        if actions.len() != self.steps.len() + 1 {
            return Err(Error::Shape(format!("{} actions for {} recorded steps", actions.len(), self.steps.len())));
        }
        let picks = self
            .steps
            .clone()
            .into_iter()
            .zip(&actions[1..])
            .map(|(lp, &a)| self.tape.pick(lp, a))
            .collect::<Result<Vec<_>>>()?;
        if picks.is_empty() {
            return Ok(self.tape.input(Tensor::scalar(S::zero()), false));
        }
        self.tape.sum(&picks)
    }

    /// Gradients of `seed · node`: parameter gradients and, when tracked, the gradient
    /// with respect to the node embeddings.
    pub fn backward(&self, node: NodeId, seed: S) -> Result<(Gradients<S>, Option<Tensor<S>>)> {
        let back = self.tape.backward(&[(node, Tensor::scalar(seed))])?;
        let emb = back.node(self.embeddings).cloned();
        Ok((back.params, emb))
    }
}

impl<S: Scalar> Policy<S> for DecoderSession<'_, S> {
    fn action_probabilities(&mut self, _: &Instance<S>, state: &MdpState<S>, mask: &[bool]) -> Result<Vec<S>> {
        self.probabilities(state, mask)
    }
}
