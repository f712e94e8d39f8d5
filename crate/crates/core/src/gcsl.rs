//! Goal-conditioned policy `pi(a | s, g)` trained by hindsight maximum likelihood.

use rand::Rng;

use crate::env::{Action, ActionSpace, GoalEnvSpec};
use crate::error::{Error, Result};
use crate::nn::{
    argmax, categorical_nll_into, sample_categorical, softmax, trunk_sizes, Adam, Checkpoint, DenseNet,
    GradVector, HeadKind, MixtureHead,
};
use crate::replay::GcslSample;

/// Network on `[s || g]` with a categorical head (discrete actions) or a
/// Gaussian-mixture head anchored at zero (continuous actions).
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    net: DenseNet,
    head: HeadKind,
    state_dim: usize,
}

impl Policy {
    pub fn new<R: Rng + ?Sized>(spec: &GoalEnvSpec, hidden: usize, mixture_k: usize, rng: &mut R) -> Result<Self> {
        let head = match spec.action_space {
            ActionSpace::Discrete { n_actions } => HeadKind::Categorical { n_actions },
            ActionSpace::Continuous { dim, .. } => HeadKind::Mixture { k: mixture_k, dim },
        };
        let sizes = trunk_sizes(2 * spec.state_dim, hidden, head.out_dim());
        Ok(Policy {
            net: DenseNet::new(&sizes, rng)?,
            head,
            state_dim: spec.state_dim,
        })
    }

    pub fn from_checkpoint(ckpt: Checkpoint) -> Result<Self> {
        let in_dim = ckpt.net.in_dim();
        if in_dim % 2 != 0 {
            return Err(Error::Checkpoint(format!(
                "policy input width {in_dim} is not [state || goal]"
            )));
        }
        Ok(Policy {
            state_dim: in_dim / 2,
            head: ckpt.head,
            net: ckpt.net,
        })
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            head: self.head,
            net: self.net.clone(),
        }
    }

    pub fn head(&self) -> HeadKind {
        self.head
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn net(&self) -> &DenseNet {
        &self.net
    }

    pub fn net_mut(&mut self) -> &mut DenseNet {
        &mut self.net
    }

    /// Raw head output for `(s, g)`.
    pub fn output(&self, s: &[f64], g: &[f64]) -> Result<Vec<f64>> {
        let mut input = Vec::with_capacity(2 * self.state_dim);
        input.extend_from_slice(s);
        input.extend_from_slice(g);
        self.net.forward(&input)
    }

    /// Mean action negative log-likelihood over `batch` and its gradient.
    pub fn loss_and_grad(&self, batch: &[GcslSample<'_>]) -> Result<(f64, GradVector)> {
        if batch.is_empty() {
            return Err(Error::InvalidArgument("empty GCSL batch".into()));
        }
        let d = self.state_dim;
        let mut input = Vec::with_capacity(batch.len() * 2 * d);
        for smp in batch {
            input.extend_from_slice(smp.s);
            input.extend_from_slice(smp.g);
        }
        let cache = self.net.forward_batch(&input, batch.len())?;
        let width = self.head.out_dim();
        let mut d_out = vec![0.0; batch.len() * width];
        let scale = 1.0 / batch.len() as f64;
        let mut total = 0.0;
        for (r, smp) in batch.iter().enumerate() {
            let row = cache.output_row(r);
            let grad = &mut d_out[r * width..(r + 1) * width];
            total += match (self.head, smp.a) {
                (HeadKind::Categorical { n_actions }, Action::Discrete(a)) if *a < n_actions => {
                    categorical_nll_into(row, *a, grad)
                }
                (HeadKind::Mixture { k, dim }, Action::Continuous(a)) if a.len() == dim => {
                    let zero = vec![0.0; dim];
                    MixtureHead::new(k, dim).view(row).nll_into(&zero, a, grad)
                }
                _ => return Err(Error::InvalidArgument(format!("action {:?} does not fit the policy head", smp.a))),
            };
            for g in grad.iter_mut() {
                *g *= scale;
            }
        }
        let loss = total * scale;
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!("GCSL loss = {loss}")));
        }
        Ok((loss, self.net.backward(&cache, &d_out)?))
    }

    /// One Adam step on the batch NLL; returns the loss before the step.
    pub fn train_step(&mut self, batch: &[GcslSample<'_>], opt: &mut Adam) -> Result<f64> {
        let (loss, grad) = self.loss_and_grad(batch)?;
        opt.step(self.net.params_mut(), &grad, None)?;
        Ok(loss)
    }

    /// Greedy: highest logit, or the mean of the heaviest mixture mode.
    /// Otherwise a draw from the full policy distribution.
    pub fn act<R: Rng + ?Sized>(&self, s: &[f64], g: &[f64], rng: &mut R, greedy: bool) -> Result<Action> {
        let out = self.output(s, g)?;
        Ok(self.action_from_output(&out, rng, greedy))
    }

    /// [`Self::act`] over many `(s, g)` pairs in one forward pass.
    pub fn act_batch<R: Rng + ?Sized>(&self, s: &[&[f64]], g: &[&[f64]], rng: &mut R, greedy: bool) -> Result<Vec<Action>> {
        if s.len() != g.len() {
            return Err(Error::DimensionMismatch {
                context: "policy batch",
                expected: s.len(),
                actual: g.len(),
            });
        }
        let mut input = Vec::with_capacity(s.len() * 2 * self.state_dim);
        for (si, gi) in s.iter().zip(g) {
            input.extend_from_slice(si);
            input.extend_from_slice(gi);
        }
        let cache = self.net.forward_batch(&input, s.len())?;
        Ok((0..s.len())
            .map(|r| self.action_from_output(cache.output_row(r), rng, greedy))
            .collect())
    }

    pub fn action_from_output<R: Rng + ?Sized>(&self, out: &[f64], rng: &mut R, greedy: bool) -> Action {
        match self.head {
            HeadKind::Categorical { .. } => {
                if greedy {
                    Action::Discrete(argmax(out))
                } else {
                    Action::Discrete(sample_categorical(&softmax(out), rng))
                }
            }
            HeadKind::Mixture { k, dim } => {
                let view = MixtureHead::new(k, dim).view(out);
                let zero = vec![0.0; dim];
                if greedy {
                    Action::Continuous(view.mean(view.most_likely(), &zero))
                } else {
                    Action::Continuous(view.sample(&zero, rng, None))
                }
            }
        }
    }
}
