//! Point-queue simulator of one signalized intersection.
//!
//! Vehicles travel a fixed approach time to the stop line, join a vertical
//! FIFO queue on their movement and leave at the saturation rate while their
//! movement is green. Switching phase costs `lost_time` seconds of all-red.
//! Time advances in whole ticks; the agent acts once per decision interval.

use std::collections::VecDeque;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{rng_from_seed, SimRng};
use crate::scenario::FlowSpec;

const CREDIT_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntersectionConfig {
    pub n_movements: usize,
    /// Movement indices (0-based) served by each phase.
    pub phases: Vec<Vec<usize>>,
    /// Vehicles per second discharged by one green movement.
    pub saturation_rate: f64,
    pub approach_time: f64,
    pub lost_time: f64,
    pub decision_interval: f64,
    pub tick: f64,
    pub horizon: f64,
    pub drain: f64,
}

impl Default for IntersectionConfig {
    fn default() -> Self {
        Self {
            n_movements: 8,
            phases: vec![vec![0, 1], vec![2, 3], vec![4, 5], vec![6, 7]],
            saturation_rate: 0.5,
            approach_time: 20.0,
            lost_time: 3.0,
            decision_interval: 10.0,
            tick: 1.0,
            horizon: 3600.0,
            drain: 600.0,
        }
    }
}

fn is_multiple(value: f64, unit: f64) -> bool {
    let ratio = value / unit;
    (ratio - ratio.round()).abs() < 1e-9
}

impl IntersectionConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.n_movements == 0 {
            return bad("n_movements must be positive".into());
        }
        if self.phases.is_empty() {
            return bad("at least one phase required".into());
        }
        let mut covered = vec![false; self.n_movements];
        for (p, phase) in self.phases.iter().enumerate() {
            if phase.is_empty() {
                return bad(format!("phase {p} is empty"));
            }
            for &m in phase {
                if m >= self.n_movements {
                    return bad(format!(
                        "phase {p} names movement {m} of {}",
                        self.n_movements
                    ));
                }
                covered[m] = true;
            }
        }
        for a in 0..self.phases.len() {
            for b in a + 1..self.phases.len() {
                let mut x = self.phases[a].clone();
                let mut y = self.phases[b].clone();
                x.sort_unstable();
                x.dedup();
                y.sort_unstable();
                y.dedup();
                if x == y {
                    return bad(format!("phases {a} and {b} serve the same movements"));
                }
            }
        }
        if let Some(m) = covered.iter().position(|c| !c) {
            return bad(format!("movement {m} is not served by any phase"));
        }
        for (name, v) in [
            ("saturation_rate", self.saturation_rate),
            ("approach_time", self.approach_time),
            ("lost_time", self.lost_time),
            ("decision_interval", self.decision_interval),
            ("tick", self.tick),
            ("horizon", self.horizon),
            ("drain", self.drain),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be strictly positive, got {v}"));
            }
        }
        if !is_multiple(self.decision_interval, self.tick) {
            return bad("decision_interval must be a multiple of tick".into());
        }
        if self.lost_time >= self.decision_interval {
            return bad("lost_time must be shorter than decision_interval".into());
        }
        Ok(())
    }

    pub fn n_phases(&self) -> usize {
        self.phases.len()
    }

    pub fn ticks_per_decision(&self) -> u64 {
        (self.decision_interval / self.tick).round() as u64
    }

    fn lost_ticks(&self) -> u64 {
        (self.lost_time / self.tick - CREDIT_EPS).ceil() as u64
    }

    pub fn horizon_decisions(&self) -> usize {
        (self.horizon / self.decision_interval - CREDIT_EPS).ceil() as usize
    }

    pub fn drain_decisions(&self) -> usize {
        (self.drain / self.decision_interval - CREDIT_EPS).ceil() as usize
    }

    pub fn phase_mask(&self, phase: usize) -> Vec<bool> {
        let mut mask = vec![false; self.n_movements];
        for &m in &self.phases[phase] {
            mask[m] = true;
        }
        mask
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Vehicle {
    pub id: usize,
    pub movement: usize,
    pub arrival_time: f64,
    join_tick: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompletedVehicle {
    pub id: usize,
    pub movement: usize,
    pub arrival_time: f64,
    pub exit_time: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    ticks: u64,
    pub current_phase: usize,
    pub phase_elapsed: f64,
    pub queues: Vec<VecDeque<Vehicle>>,
    /// Vehicles not yet at the stop line, ordered by the tick they reach it.
    pub pending: VecDeque<Vehicle>,
    pub completed: Vec<CompletedVehicle>,
    yellow_ticks: u64,
    credit: Vec<f64>,
    tick: f64,
}

impl SimState {
    /// Fresh state at clock 0 with phase 0 green.
    pub fn new(config: &IntersectionConfig, flow: &FlowSpec) -> Result<Self> {
        config.validate()?;
        let mut pending = Vec::with_capacity(flow.arrivals.len());
        for (id, a) in flow.arrivals.iter().enumerate() {
            if a.movement >= config.n_movements {
                return Err(Error::Config(format!(
                    "flow names movement {} but intersection has {}",
                    a.movement + 1,
                    config.n_movements
                )));
            }
            let reach = (a.time + config.approach_time) / config.tick;
            pending.push(Vehicle {
                id,
                movement: a.movement,
                arrival_time: a.time,
                join_tick: (reach - CREDIT_EPS).ceil().max(0.0) as u64,
            });
        }
        pending.sort_by(|a, b| a.join_tick.cmp(&b.join_tick).then(a.id.cmp(&b.id)));
        Ok(Self {
            ticks: 0,
            current_phase: 0,
            phase_elapsed: 0.0,
            queues: vec![VecDeque::new(); config.n_movements],
            pending: pending.into(),
            completed: Vec::new(),
            yellow_ticks: 0,
            credit: vec![0.0; config.n_movements],
            tick: config.tick,
        })
    }

    pub fn clock(&self) -> f64 {
        self.ticks as f64 * self.tick
    }

    /// Remaining all-red seconds.
    pub fn in_yellow(&self) -> f64 {
        self.yellow_ticks as f64 * self.tick
    }

    pub fn queued(&self) -> usize {
        self.queues.iter().map(VecDeque::len).sum()
    }

    /// Vehicles that have entered the network but not reached the stop line.
    pub fn approaching(&self) -> usize {
        let clock = self.clock();
        self.pending
            .iter()
            .filter(|v| v.arrival_time <= clock)
            .count()
    }

    pub fn is_empty(&self) -> bool {
        self.pending.is_empty() && self.queued() == 0
    }

    pub fn step_in_place(&mut self, action: usize, config: &IntersectionConfig) -> Result<f64> {
        self.step_observed(action, config, &mut |_| {})
    }

    /// Like [`SimState::step_in_place`], calling `on_tick` after every tick.
    pub fn step_observed(
        &mut self,
        action: usize,
        config: &IntersectionConfig,
        on_tick: &mut dyn FnMut(&SimState),
    ) -> Result<f64> {
        if action >= config.n_phases() {
            return Err(Error::Argument(format!(
                "phase {action} out of range (intersection has {})",
                config.n_phases()
            )));
        }
        if self.queues.len() != config.n_movements {
            return Err(Error::Config("state does not match intersection".into()));
        }
        if action != self.current_phase {
            self.current_phase = action;
            self.phase_elapsed = 0.0;
            self.yellow_ticks = config.lost_ticks();
        }
        let green = config.phase_mask(self.current_phase);
        let per_tick = config.saturation_rate * config.tick;
        for _ in 0..config.ticks_per_decision() {
            self.tick_once(&green, per_tick);
            on_tick(self);
        }
        Ok(-(self.queued() as f64))
    }

    fn tick_once(&mut self, green: &[bool], per_tick: f64) {
        while let Some(v) = self.pending.front() {
            if v.join_tick > self.ticks {
                break;
            }
            let v = self.pending.pop_front().expect("front checked");
            self.queues[v.movement].push_back(v);
        }
        let exit_time = (self.ticks + 1) as f64 * self.tick;
        if self.yellow_ticks > 0 {
            self.yellow_ticks -= 1;
            self.credit.iter_mut().for_each(|c| *c = 0.0);
        } else {
            for (m, queue) in self.queues.iter_mut().enumerate() {
                if !green[m] || queue.is_empty() {
                    self.credit[m] = 0.0;
                    continue;
                }
                self.credit[m] += per_tick;
                while self.credit[m] >= 1.0 - CREDIT_EPS {
                    let Some(v) = queue.pop_front() else { break };
                    self.credit[m] -= 1.0;
                    self.completed.push(CompletedVehicle {
                        id: v.id,
                        movement: v.movement,
                        arrival_time: v.arrival_time,
                        exit_time,
                    });
                }
            }
        }
        self.ticks += 1;
        self.phase_elapsed += self.tick;
    }
}

/// What the agent sees at a decision point.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub queue_counts: Vec<u32>,
    pub green_flags: Vec<u8>,
    pub phase_index: usize,
}

pub fn observe(state: &SimState, config: &IntersectionConfig) -> Result<Observation> {
    if state.queues.len() != config.n_movements {
        return Err(Error::Config(format!(
            "state tracks {} movements, intersection has {}",
            state.queues.len(),
            config.n_movements
        )));
    }
    if state.current_phase >= config.n_phases() {
        return Err(Error::Config("current phase out of range".into()));
    }
    let green_flags = config
        .phase_mask(state.current_phase)
        .into_iter()
        .map(u8::from)
        .collect();
    Ok(Observation {
        queue_counts: state.queues.iter().map(|q| q.len() as u32).collect(),
        green_flags,
        phase_index: state.current_phase,
    })
}

/// Advances one decision interval; returns the successor state and the reward
/// (negative total queue at interval end).
pub fn step(
    state: &SimState,
    action: usize,
    config: &IntersectionConfig,
) -> Result<(SimState, f64)> {
    let mut next = state.clone();
    let reward = next.step_in_place(action, config)?;
    Ok((next, reward))
}

/// Maps observations to phase indices.
pub trait Policy {
    fn select(&mut self, obs: &Observation, rng: &mut SimRng) -> usize;
}

impl<F: FnMut(&Observation) -> usize> Policy for F {
    fn select(&mut self, obs: &Observation, _rng: &mut SimRng) -> usize {
        self(obs)
    }
}

/// Stateful driver for one episode: horizon plus drain, stopping the drain
/// early once the network is empty.
#[derive(Debug, Clone)]
pub struct Simulator<'a> {
    config: &'a IntersectionConfig,
    state: SimState,
    decisions: usize,
    total: usize,
    rewards: Vec<f64>,
}

impl<'a> Simulator<'a> {
    pub fn new(config: &'a IntersectionConfig, flow: &FlowSpec) -> Result<Self> {
        let state = SimState::new(config, flow)?;
        Ok(Self {
            config,
            state,
            decisions: 0,
            total: flow.arrivals.len(),
            rewards: Vec::new(),
        })
    }

    pub fn state(&self) -> &SimState {
        &self.state
    }

    pub fn decisions(&self) -> usize {
        self.decisions
    }

    pub fn observe(&self) -> Observation {
        observe(&self.state, self.config).expect("simulator state matches its config")
    }

    pub fn is_done(&self) -> bool {
        let horizon = self.config.horizon_decisions();
        self.decisions >= horizon
            && (self.state.is_empty() || self.decisions >= horizon + self.config.drain_decisions())
    }

    pub fn step(&mut self, action: usize) -> Result<f64> {
        let r = self.state.step_in_place(action, self.config)?;
        self.decisions += 1;
        self.rewards.push(r);
        Ok(r)
    }

    pub fn finish(self) -> EpisodeResult {
        let end_clock = self.state.clock();
        let mut per_vehicle: Vec<VehicleRecord> = Vec::with_capacity(self.total);
        per_vehicle.extend(self.state.completed.iter().map(|c| VehicleRecord {
            id: c.id,
            movement: c.movement,
            arrival_time: c.arrival_time,
            exit_time: c.exit_time,
            censored: false,
        }));
        let residual = self
            .state
            .queues
            .iter()
            .flatten()
            .chain(self.state.pending.iter());
        per_vehicle.extend(residual.map(|v| VehicleRecord {
            id: v.id,
            movement: v.movement,
            arrival_time: v.arrival_time,
            exit_time: end_clock,
            censored: true,
        }));
        per_vehicle.sort_by_key(|v| v.id);
        let completed_count = self.state.completed.len();
        let avg_travel_time = if per_vehicle.is_empty() {
            None
        } else {
            let sum: f64 = per_vehicle.iter().map(VehicleRecord::travel_time).sum();
            Some(sum / per_vehicle.len() as f64)
        };
        EpisodeResult {
            avg_travel_time,
            completed_count,
            residual_count: per_vehicle.len() - completed_count,
            end_clock,
            per_vehicle,
            reward_trace: self.rewards,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VehicleRecord {
    pub id: usize,
    pub movement: usize,
    pub arrival_time: f64,
    /// End clock for censored vehicles.
    pub exit_time: f64,
    pub censored: bool,
}

impl VehicleRecord {
    pub fn travel_time(&self) -> f64 {
        self.exit_time - self.arrival_time
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeResult {
    /// Mean over completed and censored vehicles; `None` for an empty flow.
    pub avg_travel_time: Option<f64>,
    pub completed_count: usize,
    pub residual_count: usize,
    pub end_clock: f64,
    pub per_vehicle: Vec<VehicleRecord>,
    pub reward_trace: Vec<f64>,
}

impl EpisodeResult {
    pub fn write_trace_csv(&self, path: &Path) -> Result<()> {
        let mut out = Vec::new();
        writeln!(out, "# schema=1").expect("vec write");
        writeln!(out, "arrival_s,exit_s,movement,censored").expect("vec write");
        for v in &self.per_vehicle {
            writeln!(
                out,
                "{},{},{},{}",
                v.arrival_time,
                v.exit_time,
                v.movement + 1,
                u8::from(v.censored)
            )
            .expect("vec write");
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

pub fn run_episode(
    config: &IntersectionConfig,
    flow: &FlowSpec,
    policy: &mut dyn Policy,
    seed: u64,
) -> Result<EpisodeResult> {
    let mut rng = rng_from_seed(seed);
    let mut sim = Simulator::new(config, flow)?;
    while !sim.is_done() {
        let obs = sim.observe();
        let action = policy.select(&obs, &mut rng);
        sim.step(action)?;
    }
    Ok(sim.finish())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{Arrival, FlowSpec};

    fn flow(arrivals: &[(f64, usize)]) -> FlowSpec {
        FlowSpec::from_arrivals(
            arrivals
                .iter()
                .map(|&(time, movement)| Arrival { time, movement })
                .collect(),
            3600.0,
        )
    }

    fn state_with_queues(config: &IntersectionConfig, counts: &[usize]) -> SimState {
        let mut s = SimState::new(config, &flow(&[])).unwrap();
        let mut id = 0;
        for (m, &c) in counts.iter().enumerate() {
            for _ in 0..c {
                s.queues[m].push_back(Vehicle {
                    id,
                    movement: m,
                    arrival_time: 0.0,
                    join_tick: 0,
                });
                id += 1;
            }
        }
        s
    }

    #[test]
    fn default_config_is_valid() {
        IntersectionConfig::default().validate().unwrap();
    }

    #[test]
    fn config_rejects_uncovered_movement_and_duplicate_phases() {
        let mut c = IntersectionConfig::default();
        c.phases = vec![vec![0, 1], vec![2, 3], vec![4, 5]];
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let mut c = IntersectionConfig::default();
        c.phases.push(vec![1, 0]);
        assert!(c.validate().is_err());
        let mut c = IntersectionConfig::default();
        c.lost_time = 10.0;
        assert!(c.validate().is_err());
        let mut c = IntersectionConfig::default();
        c.decision_interval = 10.5;
        assert!(c.validate().is_err());
    }

    #[test]
    fn observe_empty_state() {
        let c = IntersectionConfig::default();
        let s = SimState::new(&c, &flow(&[])).unwrap();
        let o = observe(&s, &c).unwrap();
        assert_eq!(o.queue_counts, vec![0; 8]);
        assert_eq!(o.green_flags, vec![1, 1, 0, 0, 0, 0, 0, 0]);
        assert_eq!(o.phase_index, 0);
    }

    #[test]
    fn observe_counts_and_flags() {
        let c = IntersectionConfig::default();
        let s = state_with_queues(&c, &[2, 3, 0, 0, 0, 0, 0, 0]);
        let o = observe(&s, &c).unwrap();
        assert_eq!(o.queue_counts, vec![2, 3, 0, 0, 0, 0, 0, 0]);
        assert_eq!(o.green_flags, vec![1, 1, 0, 0, 0, 0, 0, 0]);
        assert_eq!(o, observe(&s, &c).unwrap());
    }

    #[test]
    fn observe_rejects_mismatched_config() {
        let c = IntersectionConfig::default();
        let s = SimState::new(&c, &flow(&[])).unwrap();
        let mut other = c.clone();
        other.n_movements = 4;
        other.phases = vec![vec![0], vec![1], vec![2], vec![3]];
        assert!(matches!(observe(&s, &other), Err(Error::Config(_))));
    }

    #[test]
    fn green_queue_of_five_drains_in_one_interval() {
        let c = IntersectionConfig::default();
        let s = state_with_queues(&c, &[5, 0, 0, 0, 0, 0, 0, 0]);
        let (next, r) = step(&s, 0, &c).unwrap();
        assert_eq!(next.queues[0].len(), 0);
        assert_eq!(next.completed.len(), 5);
        assert_eq!(r, 0.0);
        // input state untouched
        assert_eq!(s.queues[0].len(), 5);
    }

    #[test]
    fn empty_step_advances_clock() {
        let c = IntersectionConfig::default();
        let s = SimState::new(&c, &flow(&[])).unwrap();
        let (next, r) = step(&s, 0, &c).unwrap();
        assert_eq!(r, 0.0);
        assert_eq!(next.clock(), 10.0);
    }

    #[test]
    fn reward_is_negative_queue_sum() {
        let c = IntersectionConfig::default();
        // phase 3 serves movements 7 and 8, which are empty
        let s = state_with_queues(&c, &[2, 3, 0, 0, 0, 0, 0, 0]);
        let (_, r) = step(&s, 3, &c).unwrap();
        assert_eq!(r, -5.0);
    }

    #[test]
    fn switching_costs_lost_time() {
        let c = IntersectionConfig::default();
        let s = state_with_queues(&c, &[0, 0, 5, 0, 0, 0, 0, 0]);
        let (next, _) = step(&s, 1, &c).unwrap();
        // 7 green seconds at 0.5 veh/s
        assert_eq!(next.completed.len(), 3);
        assert_eq!(next.current_phase, 1);
        assert_eq!(next.phase_elapsed, 10.0);
    }

    #[test]
    fn invalid_phase_is_argument_error() {
        let c = IntersectionConfig::default();
        let s = SimState::new(&c, &flow(&[])).unwrap();
        assert!(matches!(step(&s, 4, &c), Err(Error::Argument(_))));
    }

    #[test]
    fn lone_vehicle_travel_time() {
        let c = IntersectionConfig::default();
        let f = flow(&[(0.0, 0)]);
        let res = run_episode(&c, &f, &mut |_: &Observation| 0, 1).unwrap();
        assert_eq!(res.completed_count, 1);
        let tt = res.avg_travel_time.unwrap();
        assert!((20.0..=22.0).contains(&tt), "{tt}");
        assert_eq!(res.end_clock, 3600.0);
    }

    #[test]
    fn empty_flow_has_absent_average() {
        let c = IntersectionConfig::default();
        let res = run_episode(&c, &flow(&[]), &mut |_: &Observation| 0, 1).unwrap();
        assert_eq!(res.completed_count, 0);
        assert_eq!(res.residual_count, 0);
        assert_eq!(res.avg_travel_time, None);
    }

    #[test]
    fn starved_vehicle_is_censored() {
        let c = IntersectionConfig::default();
        let f = flow(&[(100.0, 0)]);
        let res = run_episode(&c, &f, &mut |_: &Observation| 2, 1).unwrap();
        assert_eq!(res.completed_count, 0);
        assert_eq!(res.residual_count, 1);
        assert_eq!(res.end_clock, 4200.0);
        assert_eq!(res.avg_travel_time, Some(4100.0));
        let v = &res.per_vehicle[0];
        assert!(v.censored);
        assert_eq!(v.travel_time(), 4200.0 - 100.0);
    }
}
