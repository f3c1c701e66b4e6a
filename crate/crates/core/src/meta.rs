//! First-order MetaLight: meta-training an initialization, adapting it to a
//! new scenario, and the adaptation-step ablation.
//!
//! Each meta-iteration samples a batch of training scenarios. For every task
//! a base learner starts from `theta0`, plays one episode and takes one
//! individual-level step per decision on batches from its own memory. At the
//! end of the episode a fresh batch `D'_i` is drawn, the gradient is taken at
//! the adapted parameters, and the sum of those gradients updates `theta0`
//! (the first-order approximation of the meta-gradient).

use std::time::Instant;

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::dqn::{clip_grad, Learner, QPolicy, ReplayMemory, TrainLogRow};
use crate::error::{Error, Result};
use crate::nn::{bellman_grads, init_params, sgd_step, GradientSet, NetDims, QNetworkParams};
use crate::rng::{child_rng, derive_seed, stream};
use crate::scenario::{read_text, FlowSpec, ScenarioSet};
use crate::sim::{run_episode, IntersectionConfig};

pub const DEFAULT_ABLATION_KS: [usize; 5] = [1, 2, 3, 5, 10];

/// Parameters that can take a gradient step.
pub trait Descend: Clone {
    type Grad: Clone;
    fn descend(&self, grad: &Self::Grad, lr: f64) -> Result<Self>;
    fn accumulate(acc: &mut Self::Grad, grad: &Self::Grad) -> Result<()>;
}

impl Descend for QNetworkParams {
    type Grad = GradientSet;

    fn descend(&self, grad: &GradientSet, lr: f64) -> Result<Self> {
        sgd_step(self, grad, lr)
    }

    fn accumulate(acc: &mut GradientSet, grad: &GradientSet) -> Result<()> {
        acc.add_assign(grad)
    }
}

impl Descend for f64 {
    type Grad = f64;

    fn descend(&self, grad: &f64, lr: f64) -> Result<Self> {
        Ok(self - lr * grad)
    }

    fn accumulate(acc: &mut f64, grad: &f64) -> Result<()> {
        *acc += grad;
        Ok(())
    }
}

/// `theta_{k+1} = theta_k - alpha * grad(theta_k)`, `steps` times.
pub fn adapt_with<P, F>(theta: &P, alpha: f64, steps: usize, mut grad: F) -> Result<P>
where
    P: Descend,
    F: FnMut(&P) -> Result<P::Grad>,
{
    if steps == 0 {
        return Err(Error::Argument("adaptation needs at least one step".into()));
    }
    let mut current = theta.clone();
    for _ in 0..steps {
        let g = grad(&current)?;
        current = current.descend(&g, alpha)?;
    }
    Ok(current)
}

/// `theta0 - beta * sum_i g_i`.
pub fn global_update<P: Descend>(theta0: &P, task_grads: &[P::Grad], beta: f64) -> Result<P> {
    let (first, rest) = task_grads
        .split_first()
        .ok_or_else(|| Error::Argument("global update needs at least one task gradient".into()))?;
    let mut total = first.clone();
    for g in rest {
        P::accumulate(&mut total, g)?;
    }
    theta0.descend(&total, beta)
}

/// One meta-iteration over `n_tasks` tasks: adapt from `theta0` with
/// `inner`, evaluate `outer` at the adapted point, apply the summed outer
/// gradients to `theta0`.
pub fn first_order_meta_step<P, FI, FO>(
    theta0: &P,
    alpha: f64,
    beta: f64,
    steps: usize,
    n_tasks: usize,
    mut inner: FI,
    mut outer: FO,
) -> Result<P>
where
    P: Descend,
    FI: FnMut(usize, &P) -> Result<P::Grad>,
    FO: FnMut(usize, &P) -> Result<P::Grad>,
{
    let mut grads = Vec::with_capacity(n_tasks);
    for task in 0..n_tasks {
        let adapted = adapt_with(theta0, alpha, steps, |p| inner(task, p))?;
        grads.push(outer(task, &adapted)?);
    }
    global_update(theta0, &grads, beta)
}

/// Settings shared by the Bellman updates of an adaptation run.
#[derive(Debug, Clone, Copy)]
pub struct BellmanSetup<'a> {
    pub config: &'a IntersectionConfig,
    pub gamma: f64,
    pub batch_size: usize,
    /// Frozen network supplying the bootstrap term.
    pub target: &'a QNetworkParams,
    /// 0 disables clipping.
    pub grad_clip: f64,
}

/// Individual-level adaptation: `steps` SGD steps at rate `alpha`, each on a
/// freshly sampled batch. `theta` is left untouched.
pub fn individual_adapt(
    theta: &QNetworkParams,
    memory: &mut ReplayMemory,
    alpha: f64,
    steps: usize,
    setup: &BellmanSetup<'_>,
) -> Result<QNetworkParams> {
    if memory.len() < setup.batch_size {
        return Err(Error::InsufficientMemory {
            have: memory.len(),
            need: setup.batch_size,
        });
    }
    adapt_with(theta, alpha, steps, |p| {
        let batch = memory.sample(setup.batch_size)?;
        let g = bellman_grads(p, &batch, setup.target, setup.gamma, setup.config)?.1;
        Ok(clip_grad(g, setup.grad_clip))
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetaHyper {
    /// Individual-level learning rate.
    pub alpha: f64,
    /// Global-level learning rate.
    pub beta: f64,
    pub task_batch: usize,
    pub meta_iterations: usize,
    pub adapt_steps: usize,
    /// Episodes of experience collected in a new scenario before adapting.
    pub adapt_data_budget: usize,
    pub adapt_epsilon: f64,
    pub gamma: f64,
    pub batch_size: usize,
    pub memory_capacity: usize,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub reward_scale: f64,
    pub grad_clip: f64,
    pub dims: NetDims,
    pub seed: u64,
}

impl Default for MetaHyper {
    fn default() -> Self {
        Self {
            alpha: 1e-3,
            beta: 1e-3,
            task_batch: 3,
            meta_iterations: 100,
            adapt_steps: 3,
            adapt_data_budget: 1,
            adapt_epsilon: 0.05,
            gamma: 0.8,
            batch_size: 32,
            memory_capacity: 10_000,
            epsilon_start: 0.8,
            epsilon_end: 0.05,
            reward_scale: 0.5,
            grad_clip: 10.0,
            dims: NetDims::default(),
            seed: 0,
        }
    }
}

impl MetaHyper {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Argument(m.to_string()));
        if !(self.alpha >= 0.0 && self.beta >= 0.0) {
            return bad("alpha and beta must be non-negative");
        }
        if self.task_batch == 0 || self.adapt_steps == 0 || self.adapt_data_budget == 0 {
            return bad("task_batch, adapt_steps and adapt_data_budget must be positive");
        }
        if self.batch_size == 0 || self.memory_capacity < self.batch_size {
            return bad("memory_capacity must hold at least one batch");
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1)");
        }
        for e in [self.epsilon_start, self.epsilon_end, self.adapt_epsilon] {
            if !(0.0..=1.0).contains(&e) {
                return bad("epsilons must lie in [0, 1]");
            }
        }
        if !(self.reward_scale > 0.0 && self.grad_clip >= 0.0) {
            return bad("reward_scale must be positive and grad_clip non-negative");
        }
        Ok(())
    }

    fn epsilon_at(&self, progress: f64) -> f64 {
        let t = progress.clamp(0.0, 1.0);
        self.epsilon_start + (self.epsilon_end - self.epsilon_start) * t
    }
}

/// Meta-learned initialization plus what produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct MetaCheckpoint {
    pub theta0: QNetworkParams,
    pub hyper: MetaHyper,
    /// Digest of the training scenario files.
    pub digest: String,
}

#[derive(Serialize, Deserialize)]
struct MetaFile {
    schema: u32,
    digest: String,
    hyper: MetaHyper,
    params: String,
}

impl MetaCheckpoint {
    pub fn to_text(&self) -> String {
        let file = MetaFile {
            schema: 1,
            digest: self.digest.clone(),
            hyper: self.hyper.clone(),
            params: self.theta0.to_text(),
        };
        toml::to_string(&file).expect("meta checkpoint serializes")
    }

    pub fn from_text(text: &str, source: &str) -> Result<Self> {
        let file: MetaFile =
            toml::from_str(text).map_err(|e| Error::parse(source, 0, e.to_string()))?;
        if file.schema != 1 {
            return Err(Error::parse(
                source,
                0,
                format!("unsupported schema {}", file.schema),
            ));
        }
        let theta0 = QNetworkParams::from_text(&file.params, source)?;
        Ok(Self {
            theta0,
            hyper: file.hyper,
            digest: file.digest,
        })
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_text(&read_text(path)?, &path.display().to_string())
    }

    /// Fails unless `set` is the scenario set the checkpoint was trained on.
    pub fn verify_digest(&self, set: &ScenarioSet) -> Result<()> {
        let d = set.digest();
        if d != self.digest {
            return Err(Error::Argument(format!(
                "scenario digest {d} does not match checkpoint digest {}",
                self.digest
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct MetaRun {
    pub checkpoint: MetaCheckpoint,
    /// One row per meta-iteration (loss and reward averaged over tasks).
    pub log: Vec<TrainLogRow>,
    pub wall_time: f64,
}

struct TaskOutcome {
    grad: GradientSet,
    outer_loss: f64,
    mean_reward: f64,
    updates: usize,
}

fn run_task(
    config: &IntersectionConfig,
    flow: &FlowSpec,
    theta0: &QNetworkParams,
    hyper: &MetaHyper,
    stream_index: u64,
    epsilon: f64,
) -> Result<TaskOutcome> {
    let mut learner = Learner {
        config,
        params: theta0.clone(),
        target: theta0.clone(),
        memory: ReplayMemory::new(
            hyper.memory_capacity,
            child_rng(hyper.seed, stream::REPLAY, stream_index),
        )?,
        gamma: hyper.gamma,
        lr: hyper.alpha,
        batch_size: hyper.batch_size,
        target_sync: None,
        grad_clip: hyper.grad_clip,
        updates: 0,
        losses: Vec::new(),
    };
    let mut explore = child_rng(hyper.seed, stream::EXPLORE, stream_index);
    let (reward_sum, decisions) =
        learner.run_episode(flow, hyper.reward_scale, &mut explore, &|_| epsilon, true)?;
    let batch = learner.memory.sample(hyper.batch_size)?;
    let (outer_loss, grad) = bellman_grads(&learner.params, &batch, theta0, hyper.gamma, config)?;
    Ok(TaskOutcome {
        grad,
        outer_loss,
        mean_reward: reward_sum / decisions.max(1) as f64,
        updates: learner.updates,
    })
}

pub fn train_metalight(
    config: &IntersectionConfig,
    train_scenarios: &ScenarioSet,
    hyper: &MetaHyper,
) -> Result<MetaRun> {
    hyper.validate()?;
    config.validate()?;
    if train_scenarios.len() < hyper.task_batch {
        return Err(Error::Argument(format!(
            "{} training scenarios for a task batch of {}",
            train_scenarios.len(),
            hyper.task_batch
        )));
    }
    let started = Instant::now();
    let mut theta0 = init_params(hyper.dims, hyper.seed)?;
    let mut task_rng = child_rng(hyper.seed, stream::TASKS, 0);
    let mut log = Vec::with_capacity(hyper.meta_iterations);
    let mut updates = 0;
    for it in 0..hyper.meta_iterations {
        let tasks = sample(&mut task_rng, train_scenarios.len(), hyper.task_batch).into_vec();
        let epsilon = hyper.epsilon_at(it as f64 / hyper.meta_iterations as f64);
        let base = (it * hyper.task_batch) as u64;
        let current = &theta0;
        // Tasks are independent given theta0; the reduction below is ordered.
        let outcomes: Vec<Result<TaskOutcome>> = std::thread::scope(|scope| {
            let handles: Vec<_> = tasks
                .iter()
                .enumerate()
                .map(|(slot, &ti)| {
                    let flow = &train_scenarios.scenarios[ti];
                    scope.spawn(move || {
                        run_task(config, flow, current, hyper, base + slot as u64, epsilon)
                    })
                })
                .collect();
            handles
                .into_iter()
                .map(|h| {
                    h.join()
                        .unwrap_or_else(|_| Err(Error::Internal("task thread panicked".into())))
                })
                .collect()
        });
        let outcomes = outcomes.into_iter().collect::<Result<Vec<_>>>()?;
        let grads: Vec<GradientSet> = outcomes.iter().map(|o| o.grad.clone()).collect();
        theta0 = global_update(&theta0, &grads, hyper.beta)?;
        let n = outcomes.len() as f64;
        updates += outcomes.iter().map(|o| o.updates).sum::<usize>();
        log.push(TrainLogRow {
            update: updates,
            episode: it,
            loss: outcomes.iter().map(|o| o.outer_loss).sum::<f64>() / n,
            mean_reward: outcomes.iter().map(|o| o.mean_reward).sum::<f64>() / n,
            epsilon,
        });
        log::debug!("meta iteration {it}: outer loss {:.4}", log[it].loss);
    }
    Ok(MetaRun {
        checkpoint: MetaCheckpoint {
            theta0,
            hyper: hyper.clone(),
            digest: train_scenarios.digest(),
        },
        log,
        wall_time: started.elapsed().as_secs_f64(),
    })
}

#[derive(Debug, Clone)]
pub struct Adaptation {
    pub params: QNetworkParams,
    pub episodes: usize,
    pub steps: usize,
    pub transitions: usize,
    pub wall_time: f64,
}

/// Collects `adapt_data_budget` episodes acting epsilon-greedily from
/// `theta0`, then takes `k` individual-level steps (target frozen at `theta0`).
pub fn adapt_params(
    theta0: &QNetworkParams,
    hyper: &MetaHyper,
    scenario: &FlowSpec,
    k: usize,
    config: &IntersectionConfig,
    seed: u64,
) -> Result<Adaptation> {
    hyper.validate()?;
    if k == 0 {
        return Err(Error::Argument("k must be at least 1".into()));
    }
    let started = Instant::now();
    let mut learner = Learner {
        config,
        params: theta0.clone(),
        target: theta0.clone(),
        memory: ReplayMemory::new(hyper.memory_capacity, child_rng(seed, stream::REPLAY, 0))?,
        gamma: hyper.gamma,
        lr: hyper.alpha,
        batch_size: hyper.batch_size,
        target_sync: None,
        grad_clip: hyper.grad_clip,
        updates: 0,
        losses: Vec::new(),
    };
    let mut explore = child_rng(seed, stream::ADAPT, 0);
    for _ in 0..hyper.adapt_data_budget {
        learner.run_episode(
            scenario,
            hyper.reward_scale,
            &mut explore,
            &|_| hyper.adapt_epsilon,
            false,
        )?;
    }
    let transitions = learner.memory.len();
    let setup = BellmanSetup {
        config,
        gamma: hyper.gamma,
        batch_size: hyper.batch_size,
        target: theta0,
        grad_clip: hyper.grad_clip,
    };
    let params = individual_adapt(theta0, &mut learner.memory, hyper.alpha, k, &setup)?;
    Ok(Adaptation {
        params,
        episodes: hyper.adapt_data_budget,
        steps: k,
        transitions,
        wall_time: started.elapsed().as_secs_f64(),
    })
}

pub fn adapt_to_scenario(
    checkpoint: &MetaCheckpoint,
    scenario: &FlowSpec,
    k_override: Option<usize>,
    config: &IntersectionConfig,
    seed: u64,
) -> Result<Adaptation> {
    let k = k_override.unwrap_or(checkpoint.hyper.adapt_steps);
    adapt_params(
        &checkpoint.theta0,
        &checkpoint.hyper,
        scenario,
        k,
        config,
        seed,
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub k: usize,
    pub avg_travel_time: f64,
    pub scenario_count: usize,
    pub seed: u64,
}

pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let mut out = String::from("k,avg_travel_time_s,scenario_count,seed\n");
    for r in rows {
        out.push_str(&format!(
            "{},{:.6},{},{}\n",
            r.k, r.avg_travel_time, r.scenario_count, r.seed
        ));
    }
    out
}

/// Adapts with each `k` and reports mean greedy travel time over the scenarios.
/// Experience for scenario `i` is seeded identically for every `k`.
pub fn ablate_steps(
    checkpoint: &MetaCheckpoint,
    scenarios: &ScenarioSet,
    ks: &[usize],
    config: &IntersectionConfig,
    seed: u64,
) -> Result<Vec<AblationRow>> {
    if ks.is_empty() {
        return Err(Error::Argument("no adaptation step counts given".into()));
    }
    if scenarios.is_empty() {
        return Err(Error::Argument("no scenarios to evaluate".into()));
    }
    let mut rows = Vec::with_capacity(ks.len());
    for &k in ks {
        let mut total = 0.0;
        for (i, flow) in scenarios.scenarios.iter().enumerate() {
            let s = derive_seed(seed, stream::ADAPT, i as u64);
            let adapted = adapt_to_scenario(checkpoint, flow, Some(k), config, s)?;
            let mut policy = QPolicy {
                params: &adapted.params,
                config,
                epsilon: 0.0,
            };
            let res = run_episode(
                config,
                flow,
                &mut policy,
                derive_seed(seed, stream::EVAL, i as u64),
            )?;
            total += res.avg_travel_time.unwrap_or(0.0);
        }
        rows.push(AblationRow {
            k,
            avg_travel_time: total / scenarios.len() as f64,
            scenario_count: scenarios.len(),
            seed,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{make_training_set, table_i_bases};

    /// Gradient of (theta - 2)^2.
    fn probe_grad(theta: &f64) -> Result<f64> {
        Ok(2.0 * (theta - 2.0))
    }

    #[test]
    fn scalar_probe_individual_step() {
        let t = adapt_with(&0.0, 0.25, 1, probe_grad).unwrap();
        assert_eq!(t, 1.0);
        assert_eq!(adapt_with(&0.7, 0.0, 5, probe_grad).unwrap(), 0.7);
        assert!(adapt_with(&0.0, 0.25, 0, probe_grad).is_err());
    }

    #[test]
    fn scalar_probe_global_update() {
        assert!((global_update(&0.0, &[1.0, 3.0], 0.1).unwrap() - -0.4).abs() < 1e-15);
        assert_eq!(global_update(&0.3, &[1.0, 3.0], 0.0).unwrap(), 0.3);
        assert!(global_update::<f64>(&0.0, &[], 0.1).is_err());
    }

    #[test]
    fn single_task_global_update_is_an_sgd_step() {
        let c = IntersectionConfig::default();
        let p = init_params(NetDims::default(), 1).unwrap();
        let o = crate::sim::Observation {
            queue_counts: vec![3, 0, 7, 1, 0, 2, 5, 0],
            green_flags: vec![0, 0, 1, 1, 0, 0, 0, 0],
            phase_index: 1,
        };
        let t = crate::dqn::Transition {
            s: o.clone(),
            a: 2,
            r: -1.5,
            s_next: o,
        };
        let (_, g) = bellman_grads(&p, &[&t], &p, 0.8, &c).unwrap();
        assert_eq!(
            global_update(&p, &[g.clone()], 0.1).unwrap(),
            sgd_step(&p, &g, 0.1).unwrap()
        );
    }

    #[test]
    fn first_order_reduction_on_scalar_probe() {
        // inner loss (theta - 2)^2 on D, outer loss (theta + 1)^2 on D'
        let (alpha, beta, theta0) = (0.1, 0.05, 0.5);
        let meta = first_order_meta_step(
            &theta0,
            alpha,
            beta,
            1,
            1,
            |_, t| Ok(2.0 * (t - 2.0)),
            |_, t| Ok(2.0 * (t + 1.0)),
        )
        .unwrap();
        let adapted = theta0 - alpha * 2.0 * (theta0 - 2.0);
        let expected = theta0 - beta * 2.0 * (adapted + 1.0);
        assert!((meta - expected).abs() < 1e-15);
    }

    fn tiny_config() -> IntersectionConfig {
        IntersectionConfig {
            horizon: 400.0,
            drain: 100.0,
            ..IntersectionConfig::default()
        }
    }

    fn tiny_set() -> ScenarioSet {
        make_training_set(&table_i_bases()[..1], 400.0, 5).unwrap()
    }

    fn tiny_hyper() -> MetaHyper {
        MetaHyper {
            meta_iterations: 2,
            task_batch: 2,
            batch_size: 8,
            seed: 3,
            ..MetaHyper::default()
        }
    }

    #[test]
    fn zero_beta_freezes_theta0() {
        let h = MetaHyper {
            beta: 0.0,
            ..tiny_hyper()
        };
        let run = train_metalight(&tiny_config(), &tiny_set(), &h).unwrap();
        assert_eq!(run.checkpoint.theta0, init_params(h.dims, h.seed).unwrap());
        assert_eq!(run.log.len(), 2);
    }

    #[test]
    fn meta_training_is_deterministic_and_moves_theta0() {
        let c = tiny_config();
        let set = tiny_set();
        let a = train_metalight(&c, &set, &tiny_hyper()).unwrap();
        let b = train_metalight(&c, &set, &tiny_hyper()).unwrap();
        assert_eq!(a.checkpoint, b.checkpoint);
        assert_ne!(
            a.checkpoint.theta0,
            init_params(NetDims::default(), 3).unwrap()
        );
        a.checkpoint.verify_digest(&set).unwrap();
        let too_few = MetaHyper {
            task_batch: 6,
            ..tiny_hyper()
        };
        assert!(train_metalight(&c, &set, &too_few).is_err());
    }

    #[test]
    fn adaptation_accounting_and_locality() {
        let c = tiny_config();
        let set = tiny_set();
        let run = train_metalight(&c, &set, &tiny_hyper()).unwrap();
        let before = run.checkpoint.clone();
        let ad = adapt_to_scenario(&run.checkpoint, &set.scenarios[0], Some(4), &c, 9).unwrap();
        assert_eq!(ad.episodes, 1);
        assert_eq!(ad.steps, 4);
        assert_eq!(ad.transitions, 50);
        assert_eq!(run.checkpoint, before);
        let again = adapt_to_scenario(&run.checkpoint, &set.scenarios[0], Some(4), &c, 9).unwrap();
        assert_eq!(ad.params, again.params);

        let mut frozen = run.checkpoint.clone();
        frozen.hyper.alpha = 0.0;
        let ad0 = adapt_to_scenario(&frozen, &set.scenarios[0], None, &c, 9).unwrap();
        assert_eq!(ad0.params, frozen.theta0);
    }

    #[test]
    fn individual_adapt_needs_a_batch() {
        let c = tiny_config();
        let p = init_params(NetDims::default(), 0).unwrap();
        let mut mem = ReplayMemory::new(10, child_rng(0, 0, 0)).unwrap();
        let setup = BellmanSetup {
            config: &c,
            gamma: 0.8,
            batch_size: 4,
            target: &p,
            grad_clip: 0.0,
        };
        assert!(matches!(
            individual_adapt(&p, &mut mem, 0.1, 1, &setup),
            Err(Error::InsufficientMemory { have: 0, need: 4 })
        ));
    }

    #[test]
    fn ablation_rows() {
        let c = tiny_config();
        let set = tiny_set();
        let run = train_metalight(&c, &set, &tiny_hyper()).unwrap();
        let small = ScenarioSet {
            scenarios: set.scenarios[..2].to_vec(),
            kind: set.kind,
        };
        let rows = ablate_steps(&run.checkpoint, &small, &[3, 3], &c, 1).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0], rows[1]);
        let rows = ablate_steps(&run.checkpoint, &small, &DEFAULT_ABLATION_KS, &c, 1).unwrap();
        assert_eq!(
            rows.iter().map(|r| r.k).collect::<Vec<_>>(),
            vec![1, 2, 3, 5, 10]
        );
        assert!(ablate_steps(&run.checkpoint, &small, &[], &c, 1).is_err());
    }

    #[test]
    fn checkpoint_text_roundtrip() {
        let run = train_metalight(&tiny_config(), &tiny_set(), &tiny_hyper()).unwrap();
        let text = run.checkpoint.to_text();
        let back = MetaCheckpoint::from_text(&text, "mem").unwrap();
        assert_eq!(back, run.checkpoint);
        assert_eq!(back.to_text(), text);
    }
}
