//! Soft actor-critic over squashed-Gaussian policies, in four safety
//! variants: plain, reward-penalty, Lagrangian with learned cost critics, and
//! hard constraint squashing.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diffcore::{polyak_update, Adam, AdamScalar, Gradients, Mlp};
use crate::env::Obs;
use crate::scalar::{c, FloatT};
use crate::world::{BatteryRule, WorldLayout};

use super::buffer::{ReplayBuffer, Transition};
use super::policy::{base_log_prob, FlowPolicy, SquashKind};
use super::{SacConfig, SacVariant};

/// Cost critics and their targets, present only for the Lagrangian variant.
/// Index 0 tracks obstacle flags, index 1 battery flags.
#[derive(Clone, Debug, Serialize, Deserialize)]
struct CostCritics<T: FloatT> {
    nets: [Mlp<T>; 2],
    targets: [Mlp<T>; 2],
    adams: [Adam<T>; 2],
}

/// Summary of one gradient update.
#[derive(Clone, Copy, Debug)]
pub struct UpdateStats<T> {
    pub critic_loss: T,
    pub actor_loss: T,
    pub alpha: T,
    pub mean_log_prob: T,
    pub lambdas: [T; 2],
    /// A non-finite gradient was rejected somewhere this round; parameters it
    /// would have touched were left alone.
    pub degenerate: bool,
}

/// One learner: policy, twin critics with targets, temperature, and (for the
/// Lagrangian variant) cost critics with multipliers.
///
/// All randomness comes from counter-isolated streams of one seed: stream 0
/// drives rollouts and batch draws, streams 1-5 initialize the policy, both
/// reward critics, and the two cost critics. Variants therefore share
/// identical initial weights and identical runtime draw sequences wherever
/// their architectures overlap, which the equivalence tests below rely on.
///
/// Replay contents are not serialized; a deserialized agent carries an empty
/// zero-capacity buffer and must have it rebuilt (see [`ReplayBuffer::reset`])
/// before training resumes.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SacAgent<T: FloatT> {
    pub(crate) variant: SacVariant,
    pub(crate) config: SacConfig<T>,
    pub(crate) policy: FlowPolicy<T>,
    pub(crate) policy_adam: Adam<T>,
    pub(crate) q1: Mlp<T>,
    pub(crate) q2: Mlp<T>,
    pub(crate) q1_target: Mlp<T>,
    pub(crate) q2_target: Mlp<T>,
    pub(crate) q1_adam: Adam<T>,
    pub(crate) q2_adam: Adam<T>,
    pub(crate) log_alpha: T,
    pub(crate) alpha_adam: AdamScalar<T>,
    cost: Option<CostCritics<T>>,
    pub(crate) lambdas: [T; 2],
    #[serde(skip)]
    pub(crate) buffer: ReplayBuffer<T>,
    pub(crate) rng: ChaCha8Rng,
    pub(crate) env_steps: u64,
}

/// Critic input layout: normalized observation followed by the raw action.
fn critic_input<T: FloatT>(norm_obs: &[T; 5], action: &[T; 2]) -> [T; 7] {
    [
        norm_obs[0], norm_obs[1], norm_obs[2], norm_obs[3], norm_obs[4], action[0], action[1],
    ]
}

/// Reward the critics regress. The penalty variant charges a fixed price for
/// transitions that raised either constraint flag; everyone else sees the raw
/// reward.
fn shaped_reward<T: FloatT>(variant: SacVariant, penalty: T, tr: &Transition<T>) -> T {
    match variant {
        SacVariant::Penalty if tr.flag_obstacle || tr.flag_battery => tr.reward - penalty,
        _ => tr.reward,
    }
}

/// Frozen regression targets for one update round.
pub(crate) struct CriticRow<T> {
    input: [T; 7],
    y: T,
    yc: [T; 2],
}

pub(crate) struct CriticBatch<T> {
    rows: Vec<CriticRow<T>>,
}

#[derive(Clone, Copy)]
pub(crate) enum CriticTargetKind {
    Reward,
    Cost(usize),
}

/// Everything the actor pass produces: the loss, its side statistics, and
/// (when asked) parameter gradients for the policy head.
pub(crate) struct ActorEval<T> {
    pub loss: T,
    pub mean_log_prob: T,
    pub mean_cost_q: [T; 2],
    pub grads: Option<Gradients<T>>,
}

impl<T: FloatT> SacAgent<T> {
    pub fn new(
        variant: SacVariant,
        config: SacConfig<T>,
        layout: WorldLayout<T>,
        rule: BatteryRule<T>,
        seed: u64,
    ) -> Self {
        let stream = |s: u64| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            r.set_stream(s);
            r
        };
        let kind = match variant {
            SacVariant::Constrained => SquashKind::Constrained,
            _ => SquashKind::UnitBox,
        };
        let w = config.hidden_width;
        let act = config.activation;
        let policy = FlowPolicy::new(kind, layout, rule, w, act, &mut stream(1));
        let q_arch = [7, w, w, 1];
        let q1 = Mlp::init(&q_arch, act, &mut stream(2)).expect("critic architecture is valid");
        let q2 = Mlp::init(&q_arch, act, &mut stream(3)).expect("critic architecture is valid");
        let cost = (variant == SacVariant::Lagrangian).then(|| {
            let co = Mlp::init(&q_arch, act, &mut stream(4)).expect("critic architecture is valid");
            let cb = Mlp::init(&q_arch, act, &mut stream(5)).expect("critic architecture is valid");
            CostCritics {
                targets: [co.clone(), cb.clone()],
                adams: [Adam::new(&co), Adam::new(&cb)],
                nets: [co, cb],
            }
        });
        SacAgent {
            variant,
            policy_adam: Adam::new(policy.head()),
            q1_adam: Adam::new(&q1),
            q2_adam: Adam::new(&q2),
            q1_target: q1.clone(),
            q2_target: q2.clone(),
            q1,
            q2,
            log_alpha: config.alpha_init.ln(),
            alpha_adam: AdamScalar::default(),
            cost,
            lambdas: [T::zero(); 2],
            buffer: ReplayBuffer::new(config.buffer_capacity),
            rng: stream(0),
            env_steps: 0,
            policy,
            config,
        }
    }

    pub fn variant(&self) -> SacVariant {
        self.variant
    }

    pub fn config(&self) -> &SacConfig<T> {
        &self.config
    }

    pub fn policy(&self) -> &FlowPolicy<T> {
        &self.policy
    }

    pub fn policy_mut(&mut self) -> &mut FlowPolicy<T> {
        &mut self.policy
    }

    pub fn alpha(&self) -> T {
        self.log_alpha.exp()
    }

    pub fn lambdas(&self) -> [T; 2] {
        self.lambdas
    }

    pub fn env_steps(&self) -> u64 {
        self.env_steps
    }

    pub fn buffer(&self) -> &ReplayBuffer<T> {
        &self.buffer
    }

    pub fn buffer_mut(&mut self) -> &mut ReplayBuffer<T> {
        &mut self.buffer
    }

    /// Exploration action: uniform over the squash image until the warmup
    /// budget is spent, then policy samples.
    pub fn rollout_action(&mut self, obs: &Obs<T>) -> [T; 2] {
        if (self.env_steps as usize) < self.config.warmup_steps {
            self.policy.uniform_support_action(obs, &mut self.rng)
        } else {
            self.policy.sample_action(obs, &mut self.rng).0
        }
    }

    /// Greedy action for evaluation: the squashed policy mean.
    pub fn greedy_action(&self, obs: &Obs<T>) -> [T; 2] {
        self.policy.mean_action(obs)
    }

    pub fn observe(&mut self, tr: Transition<T>) {
        self.buffer.push(tr);
        self.env_steps += 1;
    }

    pub fn ready_to_update(&self) -> bool {
        (self.env_steps as usize) >= self.config.warmup_steps
            && self.buffer.len() >= self.config.batch_size
    }

    fn draw_noise(&mut self, n: usize) -> Vec<[T; 2]> {
        (0..n)
            .map(|_| [T::std_normal(&mut self.rng), T::std_normal(&mut self.rng)])
            .collect()
    }

    /// Bellman backups from the frozen target networks, with a fresh policy
    /// sample at each next state. Cost backups (when present) reuse the same
    /// sample, so the Lagrangian variant consumes exactly the same randomness
    /// as the plain one.
    pub(crate) fn critic_targets(&self, idx: &[usize], noise: &[[T; 2]]) -> CriticBatch<T> {
        let alpha = self.log_alpha.exp();
        let gamma = self.config.gamma;
        let mut rows = Vec::with_capacity(idx.len());
        for (k, &i) in idx.iter().enumerate() {
            let tr = self.buffer.get(i);
            let (a2, logp2) = self.policy.sample_action_with(&tr.next_obs, &noise[k]);
            let in2 = critic_input(&self.policy.norm().apply(&tr.next_obs), &a2);
            let q1t = self.q1_target.forward(&in2).expect("critic takes 7 inputs")[0];
            let q2t = self.q2_target.forward(&in2).expect("critic takes 7 inputs")[0];
            let cont = if tr.truncated { T::zero() } else { gamma };
            let y = shaped_reward(self.variant, self.config.penalty, tr)
                + cont * (q1t.min(q2t) - alpha * logp2);
            let mut yc = [T::zero(); 2];
            if let Some(cost) = &self.cost {
                let flags = [tr.flag_obstacle, tr.flag_battery];
                for (k2, &raised) in flags.iter().enumerate() {
                    let qt = cost.targets[k2].forward(&in2).expect("critic takes 7 inputs")[0];
                    let f = if raised { T::one() } else { T::zero() };
                    yc[k2] = f + cont * qt;
                }
            }
            let input = critic_input(&self.policy.norm().apply(&tr.obs), &tr.action);
            rows.push(CriticRow { input, y, yc });
        }
        CriticBatch { rows }
    }

    /// Mean squared error of one critic against its frozen targets.
    pub(crate) fn critic_loss(net: &Mlp<T>, batch: &CriticBatch<T>, kind: CriticTargetKind) -> T {
        let n = c::<T>(batch.rows.len() as f64);
        let mut loss = T::zero();
        for row in &batch.rows {
            let q = net.forward(&row.input).expect("critic takes 7 inputs")[0];
            let y = match kind {
                CriticTargetKind::Reward => row.y,
                CriticTargetKind::Cost(k) => row.yc[k],
            };
            let e = q - y;
            loss = loss + e * e;
        }
        loss / n
    }

    /// Loss and parameter gradients for one critic.
    pub(crate) fn critic_grads(
        net: &Mlp<T>,
        batch: &CriticBatch<T>,
        kind: CriticTargetKind,
    ) -> (T, Gradients<T>) {
        let n = c::<T>(batch.rows.len() as f64);
        let two = c::<T>(2.0);
        let mut grads = net.zero_gradients();
        let mut loss = T::zero();
        for row in &batch.rows {
            let trace = net.trace(&row.input).expect("critic takes 7 inputs");
            let q = trace.output()[0];
            let y = match kind {
                CriticTargetKind::Reward => row.y,
                CriticTargetKind::Cost(k) => row.yc[k],
            };
            let e = q - y;
            loss = loss + e * e;
            net.backward_trace(&trace, &[two * e / n], &mut grads)
                .expect("critic shapes line up");
        }
        (loss / n, grads)
    }

    /// Reparameterized actor objective
    /// `mean( alpha * log pi - min Q + sum_k lambda_k * Qc_k )`
    /// on fresh samples, with head gradients when requested. Takes the policy
    /// by reference so finite-difference checks can evaluate perturbed copies
    /// against the same critics, multipliers, and noise.
    pub(crate) fn actor_eval(
        &self,
        policy: &FlowPolicy<T>,
        idx: &[usize],
        noise: &[[T; 2]],
        want_grads: bool,
    ) -> ActorEval<T> {
        let n = c::<T>(idx.len() as f64);
        let alpha = self.log_alpha.exp();
        let mut grads = if want_grads {
            Some(policy.head().zero_gradients())
        } else {
            None
        };
        let mut loss = T::zero();
        let mut sum_logp = T::zero();
        let mut sum_qc = [T::zero(); 2];
        for (k, &i) in idx.iter().enumerate() {
            let tr = self.buffer.get(i);
            let nobs = policy.norm().apply(&tr.obs);
            let h = policy.head_eval(&nobs);
            let xi = noise[k];
            let sigma = [h.log_sigma[0].exp(), h.log_sigma[1].exp()];
            let u = [h.mu[0] + sigma[0] * xi[0], h.mu[1] + sigma[1] * xi[1]];
            let chain = policy.chain(&tr.obs);
            let ct = chain
                .forward_trace(&u)
                .expect("squash accepts any finite input");
            let out = ct.output();
            let a = [out[0], out[1]];
            let logp = base_log_prob(&xi, &h.log_sigma) - ct.log_det;
            let qin = critic_input(&nobs, &a);
            let t1 = self.q1.trace(&qin).expect("critic takes 7 inputs");
            let t2 = self.q2.trace(&qin).expect("critic takes 7 inputs");
            let q1v = t1.output()[0];
            let q2v = t2.output()[0];
            let use_q1 = q1v <= q2v;
            let mut sample_loss = alpha * logp - q1v.min(q2v);
            // Pullback of the per-batch objective onto the action coordinates.
            let mut da = [T::zero(); 2];
            if want_grads {
                let (net, trace) = if use_q1 { (&self.q1, &t1) } else { (&self.q2, &t2) };
                let gq = net.input_grad(trace, &[T::one()]).expect("critic shapes line up");
                da[0] = -gq[5] / n;
                da[1] = -gq[6] / n;
            }
            if let Some(cost) = &self.cost {
                for k2 in 0..2 {
                    let ctr = cost.nets[k2].trace(&qin).expect("critic takes 7 inputs");
                    let qc = ctr.output()[0];
                    sum_qc[k2] = sum_qc[k2] + qc;
                    let lam = self.lambdas[k2];
                    // Exact-zero multipliers contribute nothing; skipping them
                    // keeps idle cost critics out of the arithmetic entirely.
                    if lam != T::zero() {
                        sample_loss = sample_loss + lam * qc;
                        if want_grads {
                            let gc = cost.nets[k2]
                                .input_grad(&ctr, &[T::one()])
                                .expect("critic shapes line up");
                            da[0] = da[0] + lam * gc[5] / n;
                            da[1] = da[1] + lam * gc[6] / n;
                        }
                    }
                }
            }
            loss = loss + sample_loss;
            sum_logp = sum_logp + logp;
            if let Some(g) = grads.as_mut() {
                // d(loss)/du through the squash: action pullback plus the
                // -alpha * log-det route.
                let gu = chain.vjp(&ct, &da, -alpha / n).expect("chain shapes line up");
                let mut head_grad = [T::zero(); 4];
                for d in 0..2 {
                    head_grad[d] = gu[d];
                    // A clamped log-sigma output is a constant: neither the
                    // u-path nor the entropy term responds to it.
                    head_grad[2 + d] = if h.in_clamp[d] {
                        gu[d] * sigma[d] * xi[d] - alpha / n
                    } else {
                        T::zero()
                    };
                }
                policy
                    .head()
                    .backward_trace(&h.trace, &head_grad, g)
                    .expect("head shapes line up");
            }
        }
        ActorEval {
            loss: loss / n,
            mean_log_prob: sum_logp / n,
            mean_cost_q: [sum_qc[0] / n, sum_qc[1] / n],
            grads,
        }
    }

    /// One gradient round: critics toward frozen Bellman targets, actor on
    /// fresh reparameterized samples, temperature toward the entropy target,
    /// multipliers toward the cost limit, then a soft target refresh. Returns
    /// `None` until warmup transitions have accumulated.
    pub fn update(&mut self) -> Option<UpdateStats<T>> {
        if !self.ready_to_update() {
            return None;
        }
        let n = self.config.batch_size;
        let lr = self.config.lr;
        let idx = self.buffer.sample_indices(&mut self.rng, n);
        let target_noise = self.draw_noise(n);
        let actor_noise = self.draw_noise(n);
        let mut degenerate = false;

        let batch = self.critic_targets(&idx, &target_noise);
        let (l1, g1) = Self::critic_grads(&self.q1, &batch, CriticTargetKind::Reward);
        let (l2, g2) = Self::critic_grads(&self.q2, &batch, CriticTargetKind::Reward);
        degenerate |= self.q1_adam.step(&mut self.q1, &g1, lr).is_err();
        degenerate |= self.q2_adam.step(&mut self.q2, &g2, lr).is_err();
        if let Some(cost) = &mut self.cost {
            for k in 0..2 {
                let (_, g) = Self::critic_grads(&cost.nets[k], &batch, CriticTargetKind::Cost(k));
                degenerate |= cost.adams[k].step(&mut cost.nets[k], &g, lr).is_err();
            }
        }

        let eval = self.actor_eval(&self.policy, &idx, &actor_noise, true);
        let grads = eval.grads.as_ref().expect("gradients were requested");
        degenerate |= self
            .policy_adam
            .step(self.policy.head_mut(), grads, lr)
            .is_err();

        // Temperature: d/d(log alpha) of -alpha * (mean log pi + target).
        let alpha = self.log_alpha.exp();
        let g_alpha = -alpha * (eval.mean_log_prob + self.config.target_entropy);
        self.alpha_adam.step(&mut self.log_alpha, g_alpha, lr);

        // Multipliers climb while the cost critics predict violations beyond
        // the limit, and are clamped to [0, lambda_max].
        if self.cost.is_some() {
            for k in 0..2 {
                let next = self.lambdas[k]
                    + self.config.lambda_lr * (eval.mean_cost_q[k] - self.config.cost_limit);
                self.lambdas[k] = next.max(T::zero()).min(self.config.lambda_max);
            }
        }

        let tau = self.config.tau;
        polyak_update(&mut self.q1_target, &self.q1, tau).expect("same architecture");
        polyak_update(&mut self.q2_target, &self.q2, tau).expect("same architecture");
        if let Some(cost) = &mut self.cost {
            for k in 0..2 {
                polyak_update(&mut cost.targets[k], &cost.nets[k], tau).expect("same architecture");
            }
        }

        Some(UpdateStats {
            critic_loss: (l1 + l2) / c::<T>(2.0),
            actor_loss: eval.loss,
            alpha,
            mean_log_prob: eval.mean_log_prob,
            lambdas: self.lambdas,
            degenerate,
        })
    }
}
