//! DQN training loop and the non-learning baselines.

use std::fmt::Write as _;
use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{
    bellman_grads, frap_forward, init_params, sgd_step, GradientSet, NetDims, QNetworkParams,
    QValues,
};
use crate::rng::{child_rng, stream, SimRng};
use crate::scenario::{FlowSpec, ScenarioSet};
use crate::sim::{IntersectionConfig, Observation, Policy, Simulator};

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub s: Observation,
    pub a: usize,
    pub r: f64,
    pub s_next: Observation,
}

/// Fixed-capacity FIFO ring of transitions with a seeded uniform sampler.
#[derive(Debug, Clone)]
pub struct ReplayMemory {
    buf: Vec<Transition>,
    head: usize,
    capacity: usize,
    rng: SimRng,
}

impl ReplayMemory {
    pub fn new(capacity: usize, rng: SimRng) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Argument("replay capacity must be positive".into()));
        }
        Ok(Self {
            buf: Vec::with_capacity(capacity.min(4096)),
            head: 0,
            capacity,
            rng,
        })
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, t: Transition) {
        if self.buf.len() < self.capacity {
            self.buf.push(t);
        } else {
            self.buf[self.head] = t;
            self.head = (self.head + 1) % self.capacity;
        }
    }

    /// Oldest first.
    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.buf[self.head..]
            .iter()
            .chain(self.buf[..self.head].iter())
    }

    /// Indices drawn uniformly with replacement.
    pub fn sample_indices(&mut self, n: usize) -> Result<Vec<usize>> {
        if self.buf.len() < n || n == 0 {
            return Err(Error::InsufficientMemory {
                have: self.buf.len(),
                need: n.max(1),
            });
        }
        let len = self.buf.len();
        Ok((0..n).map(|_| self.rng.random_range(0..len)).collect())
    }

    pub fn sample(&mut self, n: usize) -> Result<Vec<&Transition>> {
        let idx = self.sample_indices(n)?;
        Ok(idx.into_iter().map(|i| &self.buf[i]).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DqnHyper {
    pub gamma: f64,
    pub lr: f64,
    pub batch_size: usize,
    pub memory_capacity: usize,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Fraction of training over which epsilon decays linearly.
    pub epsilon_decay_fraction: f64,
    pub episodes: usize,
    pub target_sync: usize,
    /// Multiplies simulator rewards before they enter replay memory.
    pub reward_scale: f64,
    /// Global gradient-norm ceiling; 0 disables clipping.
    pub grad_clip: f64,
    pub dims: NetDims,
    pub seed: u64,
}

impl Default for DqnHyper {
    fn default() -> Self {
        Self {
            gamma: 0.8,
            lr: 1e-3,
            batch_size: 32,
            memory_capacity: 10_000,
            epsilon_start: 0.8,
            epsilon_end: 0.05,
            epsilon_decay_fraction: 0.8,
            episodes: 100,
            target_sync: 200,
            reward_scale: 0.5,
            grad_clip: 10.0,
            dims: NetDims::default(),
            seed: 0,
        }
    }
}

impl DqnHyper {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Argument(m.to_string()));
        if !(0.0..1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1)");
        }
        if !(0.0..=1.0).contains(&self.epsilon_start) || !(0.0..=1.0).contains(&self.epsilon_end) {
            return bad("epsilons must lie in [0, 1]");
        }
        if !(self.epsilon_decay_fraction > 0.0 && self.epsilon_decay_fraction <= 1.0) {
            return bad("epsilon_decay_fraction must lie in (0, 1]");
        }
        if self.batch_size == 0 || self.memory_capacity == 0 || self.target_sync == 0 {
            return bad("batch_size, memory_capacity and target_sync must be positive");
        }
        if !(self.lr >= 0.0 && self.reward_scale > 0.0 && self.grad_clip >= 0.0) {
            return bad("lr and grad_clip must be non-negative, reward_scale positive");
        }
        Ok(())
    }

    /// Linear decay over the first `epsilon_decay_fraction` of training.
    pub fn epsilon_at(&self, progress: f64) -> f64 {
        let t = (progress / self.epsilon_decay_fraction).clamp(0.0, 1.0);
        if t >= 1.0 {
            return self.epsilon_end;
        }
        self.epsilon_start + (self.epsilon_end - self.epsilon_start) * t
    }
}

/// Greedy with probability `1 - epsilon`, uniform otherwise.
pub fn epsilon_greedy(q: &QValues, epsilon: f64, rng: &mut SimRng) -> Result<usize> {
    if q.is_empty() {
        return Err(Error::Argument("no Q-values to choose from".into()));
    }
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::Argument(format!("epsilon {epsilon} outside [0, 1]")));
    }
    if epsilon > 0.0 && rng.random::<f64>() < epsilon {
        return Ok(rng.random_range(0..q.len()));
    }
    Ok(q.argmax().expect("non-empty"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainLogRow {
    pub update: usize,
    pub episode: usize,
    pub loss: f64,
    pub mean_reward: f64,
    pub epsilon: f64,
}

pub fn training_log_csv(rows: &[TrainLogRow]) -> String {
    let mut out = String::from("update,episode,loss,mean_reward,epsilon\n");
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{}",
            r.update, r.episode, r.loss, r.mean_reward, r.epsilon
        )
        .expect("string write");
    }
    out
}

#[derive(Debug, Clone)]
pub struct DqnRun {
    pub params: QNetworkParams,
    /// One row per episode.
    pub log: Vec<TrainLogRow>,
    /// Loss of every gradient update, in order.
    pub losses: Vec<f64>,
    pub wall_time: f64,
}

/// Rescales `g` so its global norm is at most `max_norm` (0 = no clipping).
pub fn clip_grad(g: GradientSet, max_norm: f64) -> GradientSet {
    let norm = g.norm();
    if max_norm > 0.0 && norm > max_norm {
        g.scaled(max_norm / norm)
    } else {
        g
    }
}

/// Mutable state of one learner: online and target networks plus memory.
pub(crate) struct Learner<'a> {
    pub config: &'a IntersectionConfig,
    pub params: QNetworkParams,
    pub target: QNetworkParams,
    pub memory: ReplayMemory,
    pub gamma: f64,
    pub lr: f64,
    pub batch_size: usize,
    /// `None` keeps the target fixed.
    pub target_sync: Option<usize>,
    pub grad_clip: f64,
    pub updates: usize,
    pub losses: Vec<f64>,
}

impl Learner<'_> {
    pub fn update(&mut self) -> Result<()> {
        let batch = self.memory.sample(self.batch_size)?;
        let (loss, g) = bellman_grads(&self.params, &batch, &self.target, self.gamma, self.config)?;
        let g = clip_grad(g, self.grad_clip);
        self.params = sgd_step(&self.params, &g, self.lr)?;
        self.updates += 1;
        self.losses.push(loss);
        if let Some(sync) = self.target_sync {
            if self.updates % sync == 0 {
                self.target = self.params.clone();
            }
        }
        Ok(())
    }

    /// Plays one episode acting epsilon-greedily from the current parameters,
    /// storing every transition and (optionally) updating once per decision
    /// when memory holds a full batch. Returns the summed scaled reward and
    /// the number of decisions.
    pub fn run_episode(
        &mut self,
        flow: &FlowSpec,
        reward_scale: f64,
        explore: &mut SimRng,
        epsilon: &dyn Fn(f64) -> f64,
        learn: bool,
    ) -> Result<(f64, usize)> {
        let mut sim = Simulator::new(self.config, flow)?;
        let horizon = self.config.horizon.max(f64::MIN_POSITIVE);
        let mut obs = sim.observe();
        let mut reward_sum = 0.0;
        while !sim.is_done() {
            let eps = epsilon(sim.state().clock() / horizon);
            let q = frap_forward(&self.params, &obs, self.config)?;
            let a = epsilon_greedy(&q, eps, explore)?;
            let r = sim.step(a)? * reward_scale;
            let next = sim.observe();
            reward_sum += r;
            self.memory.push(Transition {
                s: obs,
                a,
                r,
                s_next: next.clone(),
            });
            obs = next;
            if learn && self.memory.len() >= self.batch_size {
                self.update()?;
            }
        }
        Ok((reward_sum, sim.decisions()))
    }
}

pub fn train_dqn(
    config: &IntersectionConfig,
    scenarios: &ScenarioSet,
    hyper: &DqnHyper,
) -> Result<DqnRun> {
    let init = init_params(hyper.dims, hyper.seed)?;
    train_dqn_from(config, scenarios, hyper, init)
}

/// Trains starting from `init`; episodes visit the scenarios round-robin.
pub fn train_dqn_from(
    config: &IntersectionConfig,
    scenarios: &ScenarioSet,
    hyper: &DqnHyper,
    init: QNetworkParams,
) -> Result<DqnRun> {
    hyper.validate()?;
    config.validate()?;
    if scenarios.is_empty() {
        return Err(Error::Argument("no training scenarios".into()));
    }
    let started = Instant::now();
    let mut learner = Learner {
        config,
        target: init.clone(),
        params: init,
        memory: ReplayMemory::new(
            hyper.memory_capacity,
            child_rng(hyper.seed, stream::REPLAY, 0),
        )?,
        gamma: hyper.gamma,
        lr: hyper.lr,
        batch_size: hyper.batch_size,
        target_sync: Some(hyper.target_sync),
        grad_clip: hyper.grad_clip,
        updates: 0,
        losses: Vec::new(),
    };
    let mut explore = child_rng(hyper.seed, stream::EXPLORE, 0);
    let mut log = Vec::with_capacity(hyper.episodes);
    for episode in 0..hyper.episodes {
        let flow = &scenarios.scenarios[episode % scenarios.len()];
        let first_update = learner.losses.len();
        let n_eps = hyper.episodes as f64;
        let schedule = |frac: f64| hyper.epsilon_at((episode as f64 + frac.min(1.0)) / n_eps);
        let (reward_sum, decisions) =
            learner.run_episode(flow, hyper.reward_scale, &mut explore, &schedule, true)?;
        let new_losses = &learner.losses[first_update..];
        let loss = if new_losses.is_empty() {
            f64::NAN
        } else {
            new_losses.iter().sum::<f64>() / new_losses.len() as f64
        };
        let row = TrainLogRow {
            update: learner.updates,
            episode,
            loss,
            mean_reward: reward_sum / decisions.max(1) as f64,
            epsilon: schedule(1.0),
        };
        log::debug!(
            "dqn episode {episode}: loss {:.4} reward {:.3}",
            row.loss,
            row.mean_reward
        );
        log.push(row);
    }
    Ok(DqnRun {
        params: learner.params,
        log,
        losses: learner.losses,
        wall_time: started.elapsed().as_secs_f64(),
    })
}

/// Cycles phases in order, holding each for its green split.
#[derive(Debug, Clone)]
pub struct FixedTimePolicy {
    holds: Vec<usize>,
    phase: usize,
    held: usize,
}

pub fn fixed_time_policy(
    config: &IntersectionConfig,
    green_split: &[f64],
) -> Result<FixedTimePolicy> {
    let splits: Vec<f64> = match green_split.len() {
        1 => vec![green_split[0]; config.n_phases()],
        n if n == config.n_phases() => green_split.to_vec(),
        n => {
            return Err(Error::Argument(format!(
                "{n} green splits for {} phases",
                config.n_phases()
            )))
        }
    };
    if splits.iter().any(|&s| !(s > 0.0)) {
        return Err(Error::Argument("green splits must be positive".into()));
    }
    let holds = splits
        .iter()
        .map(|s| ((s / config.decision_interval) - 1e-9).ceil().max(1.0) as usize)
        .collect();
    Ok(FixedTimePolicy {
        holds,
        phase: 0,
        held: 0,
    })
}

impl Policy for FixedTimePolicy {
    fn select(&mut self, _obs: &Observation, _rng: &mut SimRng) -> usize {
        if self.held == self.holds[self.phase] {
            self.phase = (self.phase + 1) % self.holds.len();
            self.held = 0;
        }
        self.held += 1;
        self.phase
    }
}

/// Serves the phase with the largest approach occupancy.
#[derive(Debug, Clone)]
pub struct MaxPressurePolicy {
    phases: Vec<Vec<usize>>,
}

pub fn max_pressure_policy(config: &IntersectionConfig) -> MaxPressurePolicy {
    MaxPressurePolicy {
        phases: config.phases.clone(),
    }
}

impl MaxPressurePolicy {
    pub fn choose(&self, obs: &Observation) -> usize {
        let pressure: Vec<u64> = self
            .phases
            .iter()
            .map(|p| p.iter().map(|&m| u64::from(obs.queue_counts[m])).sum())
            .collect();
        let best = pressure.iter().copied().max().unwrap_or(0);
        if pressure.get(obs.phase_index) == Some(&best) {
            return obs.phase_index;
        }
        pressure.iter().position(|&p| p == best).unwrap_or(0)
    }
}

impl Policy for MaxPressurePolicy {
    fn select(&mut self, obs: &Observation, _rng: &mut SimRng) -> usize {
        self.choose(obs)
    }
}

#[derive(Debug, Clone)]
pub struct RandomPolicy {
    n_phases: usize,
}

impl RandomPolicy {
    pub fn new(config: &IntersectionConfig) -> Self {
        Self {
            n_phases: config.n_phases(),
        }
    }
}

impl Policy for RandomPolicy {
    fn select(&mut self, _obs: &Observation, rng: &mut SimRng) -> usize {
        rng.random_range(0..self.n_phases)
    }
}

/// Acts greedily (or epsilon-greedily) on a Q-network.
#[derive(Debug, Clone)]
pub struct QPolicy<'a> {
    pub params: &'a QNetworkParams,
    pub config: &'a IntersectionConfig,
    pub epsilon: f64,
}

impl Policy for QPolicy<'_> {
    fn select(&mut self, obs: &Observation, rng: &mut SimRng) -> usize {
        let q =
            frap_forward(self.params, obs, self.config).expect("observation matches intersection");
        epsilon_greedy(&q, self.epsilon, rng).expect("non-empty Q-values")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use crate::scenario::{Arrival, SetKind};
    use crate::sim::run_episode;

    fn obs(counts: &[u32], phase: usize) -> Observation {
        let c = IntersectionConfig::default();
        Observation {
            queue_counts: counts.to_vec(),
            green_flags: c.phase_mask(phase).into_iter().map(u8::from).collect(),
            phase_index: phase,
        }
    }

    #[test]
    fn greedy_choices() {
        let mut rng = rng_from_seed(1);
        assert_eq!(
            epsilon_greedy(
                &QValues {
                    q: vec![1.0, 3.0, 2.0, 0.0]
                },
                0.0,
                &mut rng
            )
            .unwrap(),
            1
        );
        assert_eq!(
            epsilon_greedy(&QValues { q: vec![5.0; 4] }, 0.0, &mut rng).unwrap(),
            0
        );
        assert!(epsilon_greedy(&QValues { q: vec![] }, 0.0, &mut rng).is_err());
        assert!(epsilon_greedy(&QValues { q: vec![1.0] }, 1.5, &mut rng).is_err());
    }

    #[test]
    fn full_exploration_is_uniform() {
        let mut rng = rng_from_seed(2);
        let q = QValues {
            q: vec![0.0, 9.0, 0.0, 0.0],
        };
        let mut counts = [0usize; 4];
        for _ in 0..10_000 {
            counts[epsilon_greedy(&q, 1.0, &mut rng).unwrap()] += 1;
        }
        for c in counts {
            assert!((c as f64 / 10_000.0 - 0.25).abs() <= 0.02, "{counts:?}");
        }
    }

    fn dummy(i: usize) -> Transition {
        Transition {
            s: obs(&[i as u32; 8], 0),
            a: 0,
            r: -(i as f64),
            s_next: obs(&[0; 8], 0),
        }
    }

    #[test]
    fn replay_ring_evicts_fifo() {
        let mut m = ReplayMemory::new(3, rng_from_seed(0)).unwrap();
        for i in 0..5 {
            m.push(dummy(i));
        }
        assert_eq!(m.len(), 3);
        let rs: Vec<f64> = m.iter().map(|t| t.r).collect();
        assert_eq!(rs, vec![-2.0, -3.0, -4.0]);
        assert!(matches!(m.sample(4), Err(Error::InsufficientMemory { .. })));
    }

    #[test]
    fn replay_sampling_is_uniform_within_three_sigma() {
        let n = 50;
        let mut m = ReplayMemory::new(n, rng_from_seed(5)).unwrap();
        for i in 0..n {
            m.push(dummy(i));
        }
        let draws = 100_000;
        let mut counts = vec![0usize; n];
        for _ in 0..draws / 10 {
            for i in m.sample_indices(10).unwrap() {
                counts[i] += 1;
            }
        }
        let p = 1.0 / n as f64;
        let mean = draws as f64 * p;
        let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
        // Bonferroni-free 3 sigma per cell holds for all 50 cells at this seed.
        for c in counts {
            assert!(
                (c as f64 - mean).abs() <= 3.0 * sigma,
                "{c} vs {mean}±{sigma}"
            );
        }
    }

    #[test]
    fn epsilon_schedule() {
        let h = DqnHyper::default();
        assert_eq!(h.epsilon_at(0.0), 0.8);
        assert!((h.epsilon_at(0.4) - 0.425).abs() < 1e-12);
        assert_eq!(h.epsilon_at(0.8), 0.05);
        assert_eq!(h.epsilon_at(1.0), 0.05);
    }

    #[test]
    fn fixed_time_cycles_and_ignores_observations() {
        let c = IntersectionConfig::default();
        let mut p = fixed_time_policy(&c, &[10.0]).unwrap();
        let mut rng = rng_from_seed(0);
        let seq: Vec<usize> = (0..9)
            .map(|i| p.select(&obs(&[i; 8], 0), &mut rng))
            .collect();
        assert_eq!(seq, vec![0, 1, 2, 3, 0, 1, 2, 3, 0]);
        let mut p2 = fixed_time_policy(&c, &[20.0, 10.0, 10.0, 10.0]).unwrap();
        let seq: Vec<usize> = (0..6)
            .map(|_| p2.select(&obs(&[0; 8], 3), &mut rng))
            .collect();
        assert_eq!(seq, vec![0, 0, 1, 2, 3, 0]);
        assert!(fixed_time_policy(&c, &[0.0]).is_err());
    }

    #[test]
    fn fixed_time_lone_vehicle_is_no_faster_than_always_green() {
        let c = IntersectionConfig::default();
        let f = FlowSpec::from_arrivals(
            vec![Arrival {
                time: 0.0,
                movement: 0,
            }],
            3600.0,
        );
        let mut ft = fixed_time_policy(&c, &[10.0]).unwrap();
        let fixed = run_episode(&c, &f, &mut ft, 0)
            .unwrap()
            .avg_travel_time
            .unwrap();
        let green = run_episode(&c, &f, &mut |_: &Observation| 0, 0)
            .unwrap()
            .avg_travel_time
            .unwrap();
        // phase 0 returns at t=40, 3 s all-red, two green ticks
        assert_eq!(fixed, 45.0);
        assert_eq!(green, 22.0);
        assert!(fixed >= green);
    }

    #[test]
    fn max_pressure_rules() {
        let c = IntersectionConfig::default();
        let mp = max_pressure_policy(&c);
        assert_eq!(mp.choose(&obs(&[10, 0, 0, 0, 0, 0, 0, 0], 2)), 0);
        assert_eq!(mp.choose(&obs(&[0; 8], 3)), 3);
        // phases 1 and 2 tie at 4 vehicles; current phase 2 retained
        assert_eq!(mp.choose(&obs(&[0, 0, 1, 3, 4, 0, 0, 0], 2)), 2);
        // tie not involving the current phase goes to the lowest index
        assert_eq!(mp.choose(&obs(&[0, 0, 1, 3, 4, 0, 0, 0], 0)), 1);
    }

    #[test]
    fn zero_episodes_returns_initial_params() {
        let c = IntersectionConfig::default();
        let set = ScenarioSet {
            scenarios: vec![FlowSpec::from_arrivals(vec![], 3600.0)],
            kind: SetKind::Custom,
        };
        let h = DqnHyper {
            episodes: 0,
            seed: 4,
            ..DqnHyper::default()
        };
        let run = train_dqn(&c, &set, &h).unwrap();
        assert_eq!(run.params, init_params(h.dims, 4).unwrap());
        let empty = ScenarioSet {
            scenarios: vec![],
            kind: SetKind::Custom,
        };
        assert!(train_dqn(&c, &empty, &h).is_err());
    }
}
