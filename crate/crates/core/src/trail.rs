//! Trajectory encoder `pi_S(m | s, g, t)` and sub-goal mediated acting.
//!
//! The encoder is a Gaussian-mixture network on `[s || g || t]` whose mode
//! means are anchored at `s`. It is trained on three terms:
//!
//! * sub-goal likelihood of visited states at their relative position `t`,
//! * an edge term pulling the most likely mode to `s` at `t = 0` and to `g`
//!   at `t = 1`,
//! * a self-consistency term asking the prediction at `t1 * t2` to agree with
//!   the nested prediction from `(s, m1)` at `t2`, where `m1` is the
//!   prediction at `t1`.
//!
//! Mode selections (`argmax` of the logits) and the nested target are held
//! constant when differentiating.

use rand::Rng;

use crate::env::{Action, StateVec};
use crate::error::{Error, Result};
use crate::gcsl::Policy;
use crate::nn::{argmax, trunk_sizes, Adam, Checkpoint, DenseNet, ForwardCache, GradVector, HeadKind, MixtureHead};
use crate::replay::{ReplayBuffer, StatePair, TrailSample};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrailLossConfig {
    pub alpha_edge: f64,
    pub alpha_sc: f64,
    pub k: usize,
    /// Global-norm gradient clip for encoder updates.
    pub grad_clip: Option<f64>,
}

impl Default for TrailLossConfig {
    fn default() -> Self {
        TrailLossConfig {
            alpha_edge: 0.01,
            alpha_sc: 0.01,
            k: 2,
            grad_clip: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TrailLosses {
    pub total: f64,
    pub sub: f64,
    pub edge: f64,
    pub sc: f64,
}

/// An edge-loss pair. `modes` pins the selected mode at `t = 0` and `t = 1`;
/// `None` selects them from the current logits.
#[derive(Debug, Clone, Copy)]
pub struct EdgeQuery<'a> {
    pub s: &'a [f64],
    pub g: &'a [f64],
    pub modes: Option<[usize; 2]>,
}

/// A self-consistency term with its mode and nested target already fixed.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsistencyTarget {
    pub s: StateVec,
    pub g: StateVec,
    /// `t1 * t2`
    pub t: f64,
    pub mode: usize,
    pub target: StateVec,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryEncoder {
    net: DenseNet,
    head: MixtureHead,
    state_dim: usize,
}

impl TrajectoryEncoder {
    pub fn new<R: Rng + ?Sized>(state_dim: usize, hidden: usize, k: usize, rng: &mut R) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidArgument("mixture needs at least one mode".into()));
        }
        let head = MixtureHead::new(k, state_dim);
        Ok(TrajectoryEncoder {
            net: DenseNet::new(&trunk_sizes(2 * state_dim + 1, hidden, head.width()), rng)?,
            head,
            state_dim,
        })
    }

    pub fn from_net(net: DenseNet, k: usize) -> Result<Self> {
        let in_dim = net.in_dim();
        if in_dim < 3 || (in_dim - 1) % 2 != 0 {
            return Err(Error::InvalidArgument(format!(
                "encoder input width {in_dim} is not [s || g || t]"
            )));
        }
        let state_dim = (in_dim - 1) / 2;
        let head = MixtureHead::new(k, state_dim);
        if net.out_dim() != head.width() {
            return Err(Error::DimensionMismatch {
                context: "encoder head",
                expected: head.width(),
                actual: net.out_dim(),
            });
        }
        Ok(TrajectoryEncoder { net, head, state_dim })
    }

    pub fn from_checkpoint(ckpt: Checkpoint) -> Result<Self> {
        match ckpt.head {
            HeadKind::Mixture { k, .. } => Self::from_net(ckpt.net, k),
            HeadKind::Categorical { .. } => Err(Error::Checkpoint(
                "encoder checkpoint must have a mixture head".into(),
            )),
        }
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            head: HeadKind::Mixture {
                k: self.head.k,
                dim: self.state_dim,
            },
            net: self.net.clone(),
        }
    }

    pub fn head(&self) -> MixtureHead {
        self.head
    }

    pub fn k(&self) -> usize {
        self.head.k
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

    fn push_input(&self, buf: &mut Vec<f64>, s: &[f64], g: &[f64], t: f64) {
        buf.extend_from_slice(s);
        buf.extend_from_slice(g);
        buf.push(t);
    }

    fn forward_rows(&self, rows: &[(&[f64], &[f64], f64)]) -> Result<ForwardCache> {
        let mut input = Vec::with_capacity(rows.len() * (2 * self.state_dim + 1));
        for (s, g, t) in rows {
            if s.len() != self.state_dim || g.len() != self.state_dim {
                return Err(Error::DimensionMismatch {
                    context: "encoder state",
                    expected: self.state_dim,
                    actual: if s.len() != self.state_dim { s.len() } else { g.len() },
                });
            }
            self.push_input(&mut input, s, g, *t);
        }
        self.net.forward_batch(&input, rows.len())
    }

    /// Raw mixture output at `(s, g, t)`.
    pub fn output(&self, s: &[f64], g: &[f64], t: f64) -> Result<Vec<f64>> {
        Ok(self.forward_rows(&[(s, g, t)])?.output().to_vec())
    }

    pub fn mean(&self, s: &[f64], g: &[f64], t: f64, mode: usize) -> Result<StateVec> {
        let out = self.output(s, g, t)?;
        Ok(self.head.view(&out).mean(mode, s))
    }

    /// Mode whose `t = 0` mean is closest to `s` and `t = 1` mean closest to
    /// `g` (sum of squared distances; ties go to the lowest index).
    pub fn best_mode(&self, s: &[f64], g: &[f64]) -> Result<usize> {
        let cache = self.forward_rows(&[(s, g, 0.0), (s, g, 1.0)])?;
        Ok(best_mode_from_outputs(
            self.head,
            cache.output_row(0),
            cache.output_row(1),
            s,
            g,
        ))
    }

    /// Sub-goal at relative position `t` from the best mode: its mean, or a
    /// draw from that mode's Gaussian when `stochastic`.
    pub fn subgoal<R: Rng + ?Sized>(&self, s: &[f64], g: &[f64], t: f64, rng: &mut R, stochastic: bool) -> Result<StateVec> {
        Ok(self.subgoals_batch(&[s], &[g], &[t], rng, stochastic)?.remove(0))
    }

    /// [`Self::subgoal`] for many queries at once; `t[r]` is the relative
    /// position for query `r`.
    pub fn subgoals_batch<R: Rng + ?Sized>(
        &self,
        s: &[&[f64]],
        g: &[&[f64]],
        t: &[f64],
        rng: &mut R,
        stochastic: bool,
    ) -> Result<Vec<StateVec>> {
        let n = s.len();
        if g.len() != n || t.len() != n {
            return Err(Error::DimensionMismatch {
                context: "sub-goal batch",
                expected: n,
                actual: if g.len() != n { g.len() } else { t.len() },
            });
        }
        let mut rows = Vec::with_capacity(3 * n);
        for r in 0..n {
            rows.push((s[r], g[r], 0.0));
            rows.push((s[r], g[r], 1.0));
            rows.push((s[r], g[r], t[r]));
        }
        let cache = self.forward_rows(&rows)?;
        Ok((0..n)
            .map(|r| {
                let k = best_mode_from_outputs(self.head, cache.output_row(3 * r), cache.output_row(3 * r + 1), s[r], g[r]);
                let view = self.head.view(cache.output_row(3 * r + 2));
                if stochastic {
                    view.sample(s[r], rng, Some(k))
                } else {
                    view.mean(k, s[r])
                }
            })
            .collect())
    }

    /// Draws `t1, t2 ~ U(0, 1)` per pair and fixes the regularized mode and
    /// nested target `mu_k'(s, mu_k'(s, g, t1), t2)`.
    pub fn freeze_consistency<R: Rng + ?Sized>(&self, pairs: &[StatePair<'_>], rng: &mut R) -> Result<Vec<ConsistencyTarget>> {
        let times: Vec<(f64, f64)> = pairs.iter().map(|_| (rng.random::<f64>(), rng.random::<f64>())).collect();
        let outer: Vec<(&[f64], &[f64], f64)> = pairs.iter().zip(&times).map(|(p, (t1, _))| (p.s, p.g, *t1)).collect();
        let outer = self.forward_rows(&outer)?;
        let mut modes = Vec::with_capacity(pairs.len());
        let mut firsts = Vec::with_capacity(pairs.len());
        for (r, p) in pairs.iter().enumerate() {
            let view = self.head.view(outer.output_row(r));
            let k = view.most_likely();
            modes.push(k);
            firsts.push(view.mean(k, p.s));
        }
        let inner: Vec<(&[f64], &[f64], f64)> = pairs
            .iter()
            .zip(&firsts)
            .zip(&times)
            .map(|((p, m1), (_, t2))| (p.s, m1.as_slice(), *t2))
            .collect();
        let inner = self.forward_rows(&inner)?;
        Ok(pairs
            .iter()
            .enumerate()
            .map(|(r, p)| ConsistencyTarget {
                s: p.s.to_vec(),
                g: p.g.to_vec(),
                t: times[r].0 * times[r].1,
                mode: modes[r],
                target: self.head.view(inner.output_row(r)).mean(modes[r], p.s),
            })
            .collect())
    }

    /// Weighted objective `sub + alpha_edge * edge + alpha_sc * sc` and its
    /// gradient. Each term is a mean over its own batch; empty batches count
    /// as zero. Terms with zero weight are evaluated but never enter the
    /// backward pass.
    pub fn objective(
        &self,
        sub: &[TrailSample<'_>],
        edge: &[EdgeQuery<'_>],
        sc: &[ConsistencyTarget],
        alpha_edge: f64,
        alpha_sc: f64,
    ) -> Result<(TrailLosses, GradVector)> {
        let width = self.head.width();
        let mut losses = TrailLosses::default();
        let mut grad_rows: Vec<(&[f64], &[f64], f64)> = Vec::new();
        let mut frozen_rows: Vec<(&[f64], &[f64], f64)> = Vec::new();

        let sub_rows: Vec<(&[f64], &[f64], f64)> = sub.iter().map(|x| (x.s, x.g, x.t)).collect();
        let edge_rows: Vec<(&[f64], &[f64], f64)> = edge.iter().flat_map(|q| [(q.s, q.g, 0.0), (q.s, q.g, 1.0)]).collect();
        let sc_rows: Vec<(&[f64], &[f64], f64)> = sc.iter().map(|x| (x.s.as_slice(), x.g.as_slice(), x.t)).collect();

        let sub_at = place(&sub_rows, true, &mut grad_rows, &mut frozen_rows);
        let edge_at = place(&edge_rows, alpha_edge != 0.0, &mut grad_rows, &mut frozen_rows);
        let sc_at = place(&sc_rows, alpha_sc != 0.0, &mut grad_rows, &mut frozen_rows);

        let grad_cache = self.forward_rows(&grad_rows)?;
        let frozen_cache = if frozen_rows.is_empty() {
            None
        } else {
            Some(self.forward_rows(&frozen_rows)?)
        };
        let row = |(off, in_grad): (usize, bool), r: usize| -> &[f64] {
            if in_grad {
                grad_cache.output_row(off + r)
            } else {
                frozen_cache.as_ref().unwrap().output_row(off + r)
            }
        };
        let mut d_out = vec![0.0; grad_rows.len() * width];

        if !sub.is_empty() {
            let scale = 1.0 / sub.len() as f64;
            let mut total = 0.0;
            for (r, x) in sub.iter().enumerate() {
                let off = (sub_at.0 + r) * width;
                let g = &mut d_out[off..off + width];
                total += self.head.view(row(sub_at, r)).nll_into(x.s, x.m, g);
                g.iter_mut().for_each(|v| *v *= scale);
            }
            losses.sub = total * scale;
        }

        let d = self.state_dim;
        let k = self.head.k;
        if !edge.is_empty() {
            let scale = alpha_edge / edge.len() as f64;
            let mut total = 0.0;
            for (r, q) in edge.iter().enumerate() {
                let out0 = self.head.view(row(edge_at, 2 * r));
                let out1 = self.head.view(row(edge_at, 2 * r + 1));
                let [k0, k1] = q.modes.unwrap_or([argmax(out0.logits()), argmax(out1.logits())]);
                total += edge_error(self.head, out0.raw(), out1.raw(), q.s, q.g, [k0, k1]);
                if edge_at.1 {
                    let (c0, c1) = (out0.offset(k0), out1.offset(k1));
                    for i in 0..d {
                        let e0 = c0[i];
                        let e1 = q.s[i] + c1[i] - q.g[i];
                        d_out[(edge_at.0 + 2 * r) * width + k + k0 * d + i] += 2.0 * e0 * scale;
                        d_out[(edge_at.0 + 2 * r + 1) * width + k + k1 * d + i] += 2.0 * e1 * scale;
                    }
                }
            }
            losses.edge = total / edge.len() as f64;
        }

        if !sc.is_empty() {
            let scale = alpha_sc / sc.len() as f64;
            let mut total = 0.0;
            for (r, x) in sc.iter().enumerate() {
                let out = row(sc_at, r);
                total += consistency_error(self.head, out, &x.s, x.mode, &x.target);
                if sc_at.1 {
                    let c = self.head.view(out).offset(x.mode);
                    for i in 0..d {
                        let e = x.s[i] + c[i] - x.target[i];
                        d_out[(sc_at.0 + r) * width + k + x.mode * d + i] += 2.0 * e * scale;
                    }
                }
            }
            losses.sc = total / sc.len() as f64;
        }

        losses.total = losses.sub + alpha_edge * losses.edge + alpha_sc * losses.sc;
        if !losses.total.is_finite() {
            return Err(Error::NonFinite(format!("trail loss {losses:?}")));
        }
        let grad = if grad_rows.is_empty() {
            GradVector::zeros(self.net.num_params())
        } else {
            self.net.backward(&grad_cache, &d_out)?
        };
        Ok((losses, grad))
    }

    /// Mean mixture NLL of the visited state `m` given `(s, g, t)`.
    pub fn subgoal_loss(&self, batch: &[TrailSample<'_>]) -> Result<(f64, GradVector)> {
        if batch.is_empty() {
            return Err(Error::InvalidArgument("empty sub-goal batch".into()));
        }
        let (l, g) = self.objective(batch, &[], &[], 0.0, 0.0)?;
        Ok((l.sub, g))
    }

    /// Mean edge loss over `pairs` (unit weight).
    pub fn edge_loss(&self, pairs: &[StatePair<'_>]) -> Result<(f64, GradVector)> {
        if pairs.is_empty() {
            return Err(Error::InvalidArgument("empty edge batch".into()));
        }
        let queries: Vec<EdgeQuery> = pairs.iter().map(|p| EdgeQuery { s: p.s, g: p.g, modes: None }).collect();
        let (l, g) = self.objective(&[], &queries, &[], 1.0, 0.0)?;
        Ok((l.edge, g))
    }

    /// Mean self-consistency loss over `pairs` (unit weight), drawing fresh
    /// `t1, t2` from `rng`.
    pub fn self_consistency_loss<R: Rng + ?Sized>(&self, pairs: &[StatePair<'_>], rng: &mut R) -> Result<(f64, GradVector)> {
        if pairs.is_empty() {
            return Err(Error::InvalidArgument("empty self-consistency batch".into()));
        }
        let targets = self.freeze_consistency(pairs, rng)?;
        let (l, g) = self.objective(&[], &[], &targets, 0.0, 1.0)?;
        Ok((l.sc, g))
    }

    /// One Adam step on the weighted loss. The sub-goal batch, edge pairs and
    /// self-consistency pairs are three independent draws from `buffer`.
    /// Terms with zero weight are skipped entirely (no draws, reported as
    /// NaN), so `alpha = (0, 0)` consumes the RNG exactly like sub-goal-only
    /// training.
    pub fn train_step<R: Rng + ?Sized>(
        &mut self,
        buffer: &ReplayBuffer,
        cfg: &TrailLossConfig,
        batch_size: usize,
        opt: &mut Adam,
        rng: &mut R,
    ) -> Result<TrailLosses> {
        let sub = buffer.sample_trail(batch_size, rng)?;
        let edge: Vec<EdgeQuery> = if cfg.alpha_edge != 0.0 {
            buffer
                .sample_pairs(batch_size, rng)?
                .into_iter()
                .map(|p| EdgeQuery { s: p.s, g: p.g, modes: None })
                .collect()
        } else {
            Vec::new()
        };
        let targets = if cfg.alpha_sc != 0.0 {
            let pairs = buffer.sample_pairs(batch_size, rng)?;
            self.freeze_consistency(&pairs, rng)?
        } else {
            Vec::new()
        };
        let (mut losses, grad) = self.objective(&sub, &edge, &targets, cfg.alpha_edge, cfg.alpha_sc)?;
        if edge.is_empty() {
            losses.edge = f64::NAN;
        }
        if targets.is_empty() {
            losses.sc = f64::NAN;
        }
        opt.step(self.net.params_mut(), &grad, cfg.grad_clip)?;
        Ok(losses)
    }
}

/// Appends `rows` to the gradient batch when `weighted`, otherwise to the
/// evaluation-only batch. Returns the offset and which batch was used.
fn place<'a>(
    rows: &[(&'a [f64], &'a [f64], f64)],
    weighted: bool,
    grad_rows: &mut Vec<(&'a [f64], &'a [f64], f64)>,
    frozen_rows: &mut Vec<(&'a [f64], &'a [f64], f64)>,
) -> (usize, bool) {
    let target = if weighted { grad_rows } else { frozen_rows };
    let off = target.len();
    target.extend_from_slice(rows);
    (off, weighted)
}

/// `argmin_k ||mu_k(t=0) - s||^2 + ||mu_k(t=1) - g||^2`, lowest index on ties.
pub fn best_mode_from_outputs(head: MixtureHead, start_out: &[f64], goal_out: &[f64], s: &[f64], g: &[f64]) -> usize {
    let v0 = head.view(start_out);
    let v1 = head.view(goal_out);
    let mut best = 0;
    let mut best_cost = f64::INFINITY;
    for k in 0..head.k {
        let c0 = v0.offset(k);
        let c1 = v1.offset(k);
        let mut cost = 0.0;
        for i in 0..head.dim {
            // mu(t=0) - s = c0, mu(t=1) - g = s + c1 - g
            let e1 = s[i] + c1[i] - g[i];
            cost += c0[i] * c0[i] + e1 * e1;
        }
        if cost < best_cost {
            best_cost = cost;
            best = k;
        }
    }
    best
}

/// Squared edge error of one pair: `||mu_k0(t=0) - s||^2 + ||mu_k1(t=1) - g||^2`
/// from the raw outputs at `t = 0` and `t = 1`.
pub fn edge_error(head: MixtureHead, start_out: &[f64], goal_out: &[f64], s: &[f64], g: &[f64], modes: [usize; 2]) -> f64 {
    let m0 = head.view(start_out).mean(modes[0], s);
    let m1 = head.view(goal_out).mean(modes[1], s);
    m0.iter().zip(s).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
        + m1.iter().zip(g).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
}

/// Squared distance between mode `mode` of `out` (anchored at `s`) and a
/// frozen nested target.
pub fn consistency_error(head: MixtureHead, out: &[f64], s: &[f64], mode: usize, target: &[f64]) -> f64 {
    head.view(out)
        .mean(mode, s)
        .iter()
        .zip(target)
        .map(|(a, b)| (a - b) * (a - b))
        .sum()
}

/// Relative sub-goal position at step `i` of a `horizon`-step episode.
pub fn subgoal_time(i: usize, horizon: usize) -> f64 {
    ((i + 1) as f64 / horizon as f64).max(0.5)
}

/// Sub-goal mediated action: pick the best mode, query the encoder at
/// `t = max(0.5, (i + 1) / T)`, then ask the policy how to reach that
/// sub-goal. `stochastic` samples both the sub-goal and the action.
#[allow(clippy::too_many_arguments)]
pub fn get_action<R: Rng + ?Sized>(
    policy: &Policy,
    encoder: &TrajectoryEncoder,
    s: &[f64],
    g: &[f64],
    i: usize,
    horizon: usize,
    rng: &mut R,
    stochastic: bool,
) -> Result<Action> {
    if i >= horizon {
        return Err(Error::InvalidArgument(format!("step {i} outside horizon {horizon}")));
    }
    Ok(get_action_batch(policy, encoder, &[s], &[g], &[i], horizon, rng, stochastic)?.remove(0))
}

/// [`get_action`] for a batch of queries sharing one horizon; `steps[r]` is
/// the step index of query `r`.
#[allow(clippy::too_many_arguments)]
pub fn get_action_batch<R: Rng + ?Sized>(
    policy: &Policy,
    encoder: &TrajectoryEncoder,
    s: &[&[f64]],
    g: &[&[f64]],
    steps: &[usize],
    horizon: usize,
    rng: &mut R,
    stochastic: bool,
) -> Result<Vec<Action>> {
    if let Some(&i) = steps.iter().find(|&&i| i >= horizon) {
        return Err(Error::InvalidArgument(format!("step {i} outside horizon {horizon}")));
    }
    let t: Vec<f64> = steps.iter().map(|&i| subgoal_time(i, horizon)).collect();
    let m = encoder.subgoals_batch(s, g, &t, rng, stochastic)?;
    let m_refs: Vec<&[f64]> = m.iter().map(|v| v.as_slice()).collect();
    policy.act_batch(s, &m_refs, rng, !stochastic)
}
