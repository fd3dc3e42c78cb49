//! Actor-critic agent that proposes RIS phases, with the environment that
//! scores them by the sum-rate of the re-optimized beamformers.

use std::collections::VecDeque;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::beamforming::{optimize_beamformers, BeamformingOptions};
use crate::channel::ChannelRealization;
use crate::error::{Error, Result};
use crate::neural::{
    mlp_eval, mlp_forward, mlp_gradients, soft_update, Activation, AdamState, Concat, MlpParams, MlpSpec,
};
use crate::numerics::RngStream;
use crate::sysmodel::{wrap_phase, BeamformerPair, LinkBudget, PhaseConfig};

/// `[previous sum-rate, previous phases…]`.
#[derive(Clone, Debug, PartialEq)]
pub struct State(Vec<f64>);

impl State {
    pub fn new(rate: f64, phases: &[f64]) -> Result<Self> {
        let mut v = Vec::with_capacity(phases.len() + 1);
        v.push(rate);
        v.extend_from_slice(phases);
        if !v.iter().all(|x| x.is_finite()) {
            return Err(Error::Numerical("state has non-finite entries".into()));
        }
        Ok(State(v))
    }

    pub fn rate(&self) -> f64 {
        self.0[0]
    }

    pub fn phases(&self) -> &[f64] {
        &self.0[1..]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Phase vector wrapped into `[−π, π)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Action(Vec<f64>);

impl Action {
    pub fn new(phases: impl IntoIterator<Item = f64>) -> Self {
        Action(phases.into_iter().map(wrap_phase).collect())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn to_phases(&self) -> PhaseConfig {
        PhaseConfig::new(self.0.iter().copied())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub s: State,
    pub a: Action,
    pub r: f64,
    pub s_next: State,
}

/// Bounded FIFO of transitions.
#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    capacity: usize,
    items: VecDeque<Transition>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Config("replay capacity must be positive".into()));
        }
        Ok(ReplayBuffer {
            capacity,
            items: VecDeque::with_capacity(capacity.min(1 << 16)),
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.items.len() == self.capacity
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(t);
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.items.iter()
    }

    /// `batch` indices drawn uniformly with replacement; `None` while fewer
    /// than `batch` transitions are stored.
    pub fn sample(&self, rng: &mut RngStream, batch: usize) -> Option<Vec<&Transition>> {
        if batch == 0 || self.items.len() < batch {
            return None;
        }
        Some((0..batch).map(|_| &self.items[rng.below(self.items.len())]).collect())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DdpgConfig {
    pub steps_per_episode: usize,
    pub episodes: usize,
    pub batch_size: usize,
    pub discount: f64,
    pub tau: f64,
    pub lr_actor: f64,
    pub lr_critic: f64,
    /// Variance of the real Gaussian exploration noise at step 0.
    pub noise_variance: f64,
    /// Per-step multiplicative decay of the noise standard deviation.
    pub noise_decay: f64,
    pub hidden: [usize; 2],
    pub replay_capacity: usize,
    /// Train only once the buffer holds `replay_capacity` transitions.
    pub strict_replay: bool,
}

impl Default for DdpgConfig {
    fn default() -> Self {
        DdpgConfig::full_scale()
    }
}

impl DdpgConfig {
    pub fn full_scale() -> Self {
        DdpgConfig {
            steps_per_episode: 800,
            episodes: 500,
            batch_size: 16,
            discount: 0.99,
            tau: 0.001,
            lr_actor: 1e-4,
            lr_critic: 2e-4,
            noise_variance: 0.1,
            noise_decay: 1e-4,
            hidden: [100, 45],
            replay_capacity: 50_000,
            strict_replay: false,
        }
    }

    /// Full-scale hyperparameters with 50 episodes of 200 steps.
    pub fn desk() -> Self {
        DdpgConfig {
            steps_per_episode: 200,
            episodes: 50,
            ..DdpgConfig::full_scale()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("steps_per_episode", self.steps_per_episode),
            ("episodes", self.episodes),
            ("batch_size", self.batch_size),
            ("hidden[0]", self.hidden[0]),
            ("hidden[1]", self.hidden[1]),
            ("replay_capacity", self.replay_capacity),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if !(self.discount > 0.0 && self.discount <= 1.0) {
            return Err(Error::Config(format!("discount must be in (0, 1], got {}", self.discount)));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::Config(format!("tau must be in (0, 1], got {}", self.tau)));
        }
        for (name, v) in [("lr_actor", self.lr_actor), ("lr_critic", self.lr_critic)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.noise_variance >= 0.0 && self.noise_variance.is_finite()) {
            return Err(Error::Config(format!("noise_variance must be >= 0, got {}", self.noise_variance)));
        }
        if !(0.0..1.0).contains(&self.noise_decay) {
            return Err(Error::Config(format!("noise_decay must be in [0, 1), got {}", self.noise_decay)));
        }
        if self.batch_size > self.replay_capacity {
            return Err(Error::Config("batch_size exceeds replay_capacity".into()));
        }
        Ok(())
    }

    /// Exploration standard deviation at global step `t`.
    pub fn noise_std(&self, t: u64) -> f64 {
        self.noise_variance.sqrt() * (1.0 - self.noise_decay).powf(t as f64)
    }

    fn replay_ready(&self, buf: &ReplayBuffer) -> bool {
        if self.strict_replay {
            buf.is_full()
        } else {
            buf.len() >= self.batch_size
        }
    }
}

/// `[N+1, ψ₁, ψ₂, N]` with ReLU, ReLU, tanh.
pub fn actor_spec(n: usize, hidden: [usize; 2]) -> Result<MlpSpec> {
    MlpSpec::new(
        vec![n + 1, hidden[0], hidden[1], n],
        vec![Activation::Relu, Activation::Relu, Activation::Tanh],
        None,
    )
}

/// `[N+1, ψ₁ (+N action), ψ₂, 1]` with ReLU, ReLU, identity.
pub fn critic_spec(n: usize, hidden: [usize; 2]) -> Result<MlpSpec> {
    MlpSpec::new(
        vec![n + 1, hidden[0], hidden[1], 1],
        vec![Activation::Relu, Activation::Relu, Activation::Identity],
        Some(Concat { layer: 1, width: n }),
    )
}

/// Evaluation and target networks with their optimizers.
#[derive(Clone, Debug)]
pub struct Networks {
    pub actor: MlpParams,
    pub critic: MlpParams,
    pub target_actor: MlpParams,
    pub target_critic: MlpParams,
    pub actor_opt: AdamState,
    pub critic_opt: AdamState,
}

impl Networks {
    /// Targets start as copies of the evaluation networks.
    pub fn new(n: usize, cfg: &DdpgConfig, rng: &mut RngStream) -> Result<Self> {
        let actor = MlpParams::init(&actor_spec(n, cfg.hidden)?, rng);
        let critic = MlpParams::init(&critic_spec(n, cfg.hidden)?, rng);
        Ok(Networks {
            actor_opt: AdamState::for_params(&actor, cfg.lr_actor),
            critic_opt: AdamState::for_params(&critic, cfg.lr_critic),
            target_actor: actor.clone(),
            target_critic: critic.clone(),
            actor,
            critic,
        })
    }

    pub fn elements(&self) -> usize {
        self.actor.spec().output_width()
    }
}

/// Deterministic policy `π·μ(s)`.
pub fn policy(actor: &MlpParams, s: &State) -> Result<Vec<f64>> {
    Ok(mlp_eval(actor, s.as_slice(), None)?.into_iter().map(|y| PI * y).collect())
}

/// Policy output plus real Gaussian noise of standard deviation `noise_std`, wrapped.
pub fn act(actor: &MlpParams, s: &State, noise_std: f64, rng: &mut RngStream) -> Result<Action> {
    let mean = policy(actor, s)?;
    if noise_std == 0.0 {
        return Ok(Action::new(mean));
    }
    Ok(Action::new(mean.into_iter().map(|m| m + noise_std * rng.normal())))
}

pub fn q_value(critic: &MlpParams, s: &State, a: &[f64]) -> Result<f64> {
    Ok(mlp_eval(critic, s.as_slice(), Some(a))?[0])
}

/// Fixed channels for one episode.
#[derive(Clone, Debug)]
pub struct Environment {
    pub channel: ChannelRealization,
    pub budget: LinkBudget,
    pub beamforming: BeamformingOptions,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub reward: f64,
    pub next_state: State,
    pub beamformers: BeamformerPair,
}

impl Environment {
    pub fn elements(&self) -> usize {
        self.channel.total_elements()
    }

    pub fn step(&self, a: &Action) -> Result<StepOutcome> {
        let report = optimize_beamformers(&self.channel, &a.to_phases(), &self.budget, &self.beamforming)?;
        Ok(StepOutcome {
            reward: report.sum_rate,
            next_state: State::new(report.sum_rate, a.as_slice())?,
            beamformers: report.pair,
        })
    }
}

pub fn env_step(
    ch: &ChannelRealization,
    a: &Action,
    budget: &LinkBudget,
    bf: &BeamformingOptions,
) -> Result<(f64, State)> {
    let env = Environment {
        channel: ch.clone(),
        budget: *budget,
        beamforming: *bf,
    };
    env.step(a).map(|o| (o.reward, o.next_state))
}

/// `y_j = r_j + ρ·Q'(s_{j+1}, μ'(s_{j+1}))`.
pub fn critic_target(
    batch: &[&Transition],
    target_actor: &MlpParams,
    target_critic: &MlpParams,
    discount: f64,
) -> Result<Vec<f64>> {
    if batch.is_empty() {
        return Err(Error::Domain("empty minibatch".into()));
    }
    batch
        .iter()
        .map(|t| {
            if discount == 0.0 {
                return Ok(t.r);
            }
            let a_next = policy(target_actor, &t.s_next)?;
            Ok(t.r + discount * q_value(target_critic, &t.s_next, &a_next)?)
        })
        .collect()
}

/// Mean squared TD error and its gradient with respect to the critic parameters.
pub fn critic_loss_grad(critic: &MlpParams, batch: &[&Transition], y: &[f64]) -> Result<(f64, Vec<f64>)> {
    if batch.len() != y.len() || batch.is_empty() {
        return Err(Error::Shape(format!("{} transitions, {} targets", batch.len(), y.len())));
    }
    let scale = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    let mut grads = vec![0.0; critic.len()];
    for (t, &yj) in batch.iter().zip(y) {
        let (q, tape) = mlp_forward(critic, t.s.as_slice(), Some(t.a.as_slice()))?;
        let err = yj - q[0];
        loss += scale * err * err;
        let g = mlp_gradients(critic, &tape, &[-2.0 * scale * err])?;
        for (acc, gi) in grads.iter_mut().zip(g.params) {
            *acc += gi;
        }
    }
    Ok((loss, grads))
}

/// Mean `Q(s, π·μ(s))` and its gradient with respect to the actor parameters.
pub fn actor_objective_grad(actor: &MlpParams, critic: &MlpParams, batch: &[&Transition]) -> Result<(f64, Vec<f64>)> {
    if batch.is_empty() {
        return Err(Error::Domain("empty minibatch".into()));
    }
    let scale = 1.0 / batch.len() as f64;
    let mut objective = 0.0;
    let mut grads = vec![0.0; actor.len()];
    for t in batch {
        let (mu, actor_tape) = mlp_forward(actor, t.s.as_slice(), None)?;
        let a: Vec<f64> = mu.iter().map(|y| PI * y).collect();
        let (q, critic_tape) = mlp_forward(critic, t.s.as_slice(), Some(&a))?;
        objective += scale * q[0];
        let dq_da = mlp_gradients(critic, &critic_tape, &[scale])?
            .side
            .expect("critic takes the action as side input");
        let upstream: Vec<f64> = dq_da.iter().map(|g| PI * g).collect();
        let g = mlp_gradients(actor, &actor_tape, &upstream)?;
        for (acc, gi) in grads.iter_mut().zip(g.params) {
            *acc += gi;
        }
    }
    Ok((objective, grads))
}

/// One Adam descent step on the critic loss; returns the loss before the step.
pub fn critic_update(nets: &mut Networks, batch: &[&Transition], y: &[f64]) -> Result<f64> {
    let (loss, grads) = critic_loss_grad(&nets.critic, batch, y)?;
    nets.critic_opt.update(nets.critic.flat_mut(), &grads)?;
    Ok(loss)
}

/// One Adam ascent step on the actor objective; returns the objective before the step.
pub fn actor_update(nets: &mut Networks, batch: &[&Transition]) -> Result<f64> {
    let (objective, grads) = actor_objective_grad(&nets.actor, &nets.critic, batch)?;
    let descent: Vec<f64> = grads.into_iter().map(|g| -g).collect();
    nets.actor_opt.update(nets.actor.flat_mut(), &descent)?;
    Ok(objective)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepDiagnostics {
    pub critic_loss: f64,
    pub actor_objective: f64,
}

/// Critic step, actor step, then soft target updates. `None` if the buffer is not ready.
pub fn train_step(
    nets: &mut Networks,
    buf: &ReplayBuffer,
    cfg: &DdpgConfig,
    rng: &mut RngStream,
) -> Result<Option<StepDiagnostics>> {
    if !cfg.replay_ready(buf) {
        return Ok(None);
    }
    let Some(batch) = buf.sample(rng, cfg.batch_size) else {
        return Ok(None);
    };
    let y = critic_target(&batch, &nets.target_actor, &nets.target_critic, cfg.discount)?;
    let critic_loss = critic_update(nets, &batch, &y)?;
    let actor_objective = actor_update(nets, &batch)?;
    soft_update(&mut nets.target_critic, &nets.critic, cfg.tau)?;
    soft_update(&mut nets.target_actor, &nets.actor, cfg.tau)?;
    Ok(Some(StepDiagnostics {
        critic_loss,
        actor_objective,
    }))
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeStats {
    pub episode: usize,
    pub mean_reward: f64,
    pub best_reward: f64,
    /// Exploration standard deviation after the episode's last step.
    pub noise_std: f64,
    /// Mean over the episode's training steps; NaN if none ran.
    pub critic_loss: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub best_reward: f64,
    pub best_phases: PhaseConfig,
    pub best_beamformers: BeamformerPair,
    pub trace: Vec<EpisodeStats>,
}

const PURPOSE_INIT: u64 = 1;
const PURPOSE_NOISE: u64 = 2;
const PURPOSE_REPLAY: u64 = 3;
const PURPOSE_START: u64 = 4;

/// Stepwise driver of the training loop.
pub struct Trainer {
    cfg: DdpgConfig,
    nets: Networks,
    buffer: ReplayBuffer,
    noise_rng: RngStream,
    replay_rng: RngStream,
    start_rng: RngStream,
    global_step: u64,
    env: Option<Environment>,
    state: Option<State>,
    best: Option<(f64, Action, BeamformerPair)>,
}

impl Trainer {
    pub fn new(n: usize, cfg: &DdpgConfig, rng: &RngStream) -> Result<Self> {
        cfg.validate()?;
        if n == 0 {
            return Err(Error::Config("number of RIS elements must be positive".into()));
        }
        Ok(Trainer {
            cfg: cfg.clone(),
            nets: Networks::new(n, cfg, &mut rng.derive(PURPOSE_INIT, 0))?,
            buffer: ReplayBuffer::new(cfg.replay_capacity)?,
            noise_rng: rng.derive(PURPOSE_NOISE, 0),
            replay_rng: rng.derive(PURPOSE_REPLAY, 0),
            start_rng: rng.derive(PURPOSE_START, 0),
            global_step: 0,
            env: None,
            state: None,
            best: None,
        })
    }

    pub fn networks(&self) -> &Networks {
        &self.nets
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    pub fn environment(&self) -> Option<&Environment> {
        self.env.as_ref()
    }

    pub fn global_step(&self) -> u64 {
        self.global_step
    }

    pub fn noise_std(&self) -> f64 {
        self.cfg.noise_std(self.global_step)
    }

    /// Installs `env`, draws random phases, and observes the initial state.
    pub fn begin_episode(&mut self, env: Environment) -> Result<()> {
        let n = self.nets.elements();
        if env.elements() != n {
            return Err(Error::Shape(format!(
                "environment has {} RIS elements, agent acts on {n}",
                env.elements()
            )));
        }
        let theta0 = Action::new((0..n).map(|_| self.start_rng.uniform(-PI, PI)));
        let outcome = env.step(&theta0)?;
        self.state = Some(outcome.next_state);
        self.env = Some(env);
        Ok(())
    }

    /// Act, score, store, train. Returns the transition and any training diagnostics.
    pub fn step(&mut self) -> Result<(Transition, Option<StepDiagnostics>)> {
        let (Some(env), Some(s)) = (self.env.as_ref(), self.state.as_ref()) else {
            return Err(Error::Config("step called before begin_episode".into()));
        };
        let noise = self.cfg.noise_std(self.global_step);
        let a = act(&self.nets.actor, s, noise, &mut self.noise_rng)?;
        let outcome = env.step(&a)?;
        if self.best.as_ref().is_none_or(|(r, _, _)| outcome.reward > *r) {
            self.best = Some((outcome.reward, a.clone(), outcome.beamformers.clone()));
        }
        let t = Transition {
            s: s.clone(),
            a,
            r: outcome.reward,
            s_next: outcome.next_state.clone(),
        };
        self.buffer.push(t.clone());
        self.state = Some(outcome.next_state);
        self.global_step += 1;
        let diag = train_step(&mut self.nets, &self.buffer, &self.cfg, &mut self.replay_rng)?;
        Ok((t, diag))
    }

    /// Highest reward observed so far with its action and beamformers.
    pub fn best(&self) -> Option<(f64, &Action, &BeamformerPair)> {
        self.best.as_ref().map(|(r, a, w)| (*r, a, w))
    }
}

/// Runs every episode with channels from `env_factory(episode)`.
pub fn train(
    mut env_factory: impl FnMut(usize) -> Result<Environment>,
    n: usize,
    cfg: &DdpgConfig,
    rng: &RngStream,
) -> Result<TrainOutcome> {
    let mut trainer = Trainer::new(n, cfg, rng)?;
    let mut trace = Vec::with_capacity(cfg.episodes);
    for episode in 0..cfg.episodes {
        trainer.begin_episode(env_factory(episode)?)?;
        let mut reward_sum = 0.0;
        let mut best = f64::NEG_INFINITY;
        let (mut loss_sum, mut loss_count) = (0.0, 0usize);
        for _ in 0..cfg.steps_per_episode {
            let (t, diag) = trainer.step()?;
            reward_sum += t.r;
            best = best.max(t.r);
            if let Some(d) = diag {
                loss_sum += d.critic_loss;
                loss_count += 1;
            }
        }
        let stats = EpisodeStats {
            episode,
            mean_reward: reward_sum / cfg.steps_per_episode as f64,
            best_reward: best,
            noise_std: trainer.noise_std(),
            critic_loss: if loss_count == 0 {
                f64::NAN
            } else {
                loss_sum / loss_count as f64
            },
        };
        log::debug!(
            "episode {episode}: mean {:.4}, best {:.4}, loss {:.3e}",
            stats.mean_reward,
            stats.best_reward,
            stats.critic_loss
        );
        trace.push(stats);
    }
    let (best_reward, a, w) = trainer.best().expect("at least one step ran");
    Ok(TrainOutcome {
        best_reward,
        best_phases: a.to_phases(),
        best_beamformers: w.clone(),
        trace,
    })
}

pub fn format_trace(trace: &[EpisodeStats]) -> String {
    let mut out = String::from("episode mean_reward best_reward noise_std critic_loss\n");
    for s in trace {
        writeln!(
            out,
            "{} {:.9e} {:.9e} {:.9e} {:.9e}",
            s.episode, s.mean_reward, s.best_reward, s.noise_std, s.critic_loss
        )
        .unwrap();
    }
    out
}

pub fn write_trace(trace: &[EpisodeStats], path: &Path) -> Result<()> {
    std::fs::write(path, format_trace(trace)).map_err(|e| Error::io(path, e))
}
