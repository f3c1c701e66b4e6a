//! FRAP++ phase-competition Q-network with hand-written reverse-mode gradients.
//!
//! Every movement is embedded by one shared layer from `[demand, green]`.
//! A phase is the mean of its movements' embeddings. Each ordered pair of
//! distinct phases `(p, q)` goes through one shared competition layer, and a
//! shared linear readout turns the pair features into a score. The Q-value of
//! phase `p` is the sum of its scores against every rival `q`. Because all
//! weights are shared, relabeling phases (with their movements) permutes the
//! Q-values and nothing else.

use std::fmt::Write as _;
use std::ops::Range;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dqn::Transition;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed, stream};
use crate::sim::{IntersectionConfig, Observation};

const INPUT_DIM: usize = 2;
const HEADER: &str = "# tscshift-qnet schema=1";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetDims {
    pub embed_dim: usize,
    pub compete_dim: usize,
    /// Queue counts are multiplied by this before entering the network.
    pub demand_scale: f64,
}

impl Default for NetDims {
    fn default() -> Self {
        Self {
            embed_dim: 16,
            compete_dim: 16,
            demand_scale: 0.1,
        }
    }
}

impl NetDims {
    fn validate(&self) -> Result<()> {
        if self.embed_dim == 0 || self.compete_dim == 0 {
            return Err(Error::Argument(
                "network dimensions must be positive".into(),
            ));
        }
        if !(self.demand_scale.is_finite() && self.demand_scale > 0.0) {
            return Err(Error::Argument("demand_scale must be positive".into()));
        }
        Ok(())
    }
}

/// The six parameter tensors, in storage order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TensorId {
    EmbedWeight,
    EmbedBias,
    CompeteWeight,
    CompeteBias,
    ReadoutWeight,
    ReadoutBias,
}

impl TensorId {
    pub const ALL: [TensorId; 6] = [
        TensorId::EmbedWeight,
        TensorId::EmbedBias,
        TensorId::CompeteWeight,
        TensorId::CompeteBias,
        TensorId::ReadoutWeight,
        TensorId::ReadoutBias,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TensorId::EmbedWeight => "movement_embed.weight",
            TensorId::EmbedBias => "movement_embed.bias",
            TensorId::CompeteWeight => "pair_compete.weight",
            TensorId::CompeteBias => "pair_compete.bias",
            TensorId::ReadoutWeight => "readout.weight",
            TensorId::ReadoutBias => "readout.bias",
        }
    }

    fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.name() == name)
    }

    pub fn shape(self, dims: &NetDims) -> Vec<usize> {
        let (e, c) = (dims.embed_dim, dims.compete_dim);
        match self {
            TensorId::EmbedWeight => vec![e, INPUT_DIM],
            TensorId::EmbedBias => vec![e],
            TensorId::CompeteWeight => vec![c, 2 * e],
            TensorId::CompeteBias => vec![c],
            TensorId::ReadoutWeight => vec![c],
            TensorId::ReadoutBias => vec![1],
        }
    }

    fn is_bias(self) -> bool {
        matches!(
            self,
            TensorId::EmbedBias | TensorId::CompeteBias | TensorId::ReadoutBias
        )
    }

    fn fan_in(self, dims: &NetDims) -> usize {
        match self {
            TensorId::EmbedWeight | TensorId::EmbedBias => INPUT_DIM,
            TensorId::CompeteWeight | TensorId::CompeteBias => 2 * dims.embed_dim,
            TensorId::ReadoutWeight | TensorId::ReadoutBias => dims.compete_dim,
        }
    }

    pub fn range(self, dims: &NetDims) -> Range<usize> {
        let mut start = 0;
        for t in Self::ALL {
            let len: usize = t.shape(dims).iter().product();
            if t == self {
                return start..start + len;
            }
            start += len;
        }
        unreachable!("every tensor id is in ALL")
    }
}

fn total_len(dims: &NetDims) -> usize {
    TensorId::ReadoutBias.range(dims).end
}

/// All network weights in one flat buffer laid out in [`TensorId::ALL`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct QNetworkParams {
    dims: NetDims,
    data: Vec<f64>,
}

/// Gradient of a scalar loss, laid out like [`QNetworkParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    dims: NetDims,
    data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QValues {
    pub q: Vec<f64>,
}

impl QValues {
    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    /// Greedy action; ties go to the lowest index.
    pub fn argmax(&self) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (i, &v) in self.q.iter().enumerate() {
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((i, v));
            }
        }
        best.map(|(i, _)| i)
    }

    pub fn max(&self) -> f64 {
        self.q.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

pub fn init_params(dims: NetDims, seed: u64) -> Result<QNetworkParams> {
    dims.validate()?;
    let mut data = vec![0.0; total_len(&dims)];
    let mut rng = rng_from_seed(derive_seed(seed, stream::INIT, 0));
    for t in TensorId::ALL {
        if t.is_bias() {
            continue;
        }
        let bound = 1.0 / (t.fan_in(&dims) as f64).sqrt();
        for w in &mut data[t.range(&dims)] {
            *w = rng.random_range(-bound..=bound);
        }
    }
    Ok(QNetworkParams { dims, data })
}

impl QNetworkParams {
    pub fn zeros(dims: NetDims) -> Result<Self> {
        dims.validate()?;
        Ok(Self {
            dims,
            data: vec![0.0; total_len(&dims)],
        })
    }

    pub fn dims(&self) -> &NetDims {
        &self.dims
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn tensor(&self, id: TensorId) -> &[f64] {
        &self.data[id.range(&self.dims)]
    }

    pub fn tensor_mut(&mut self, id: TensorId) -> &mut [f64] {
        let r = id.range(&self.dims);
        &mut self.data[r]
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "{HEADER}").expect("string write");
        let d = &self.dims;
        writeln!(
            out,
            "dims embed_dim={} compete_dim={} demand_scale={:e}",
            d.embed_dim, d.compete_dim, d.demand_scale
        )
        .expect("string write");
        for t in TensorId::ALL {
            let shape = t.shape(d);
            let shape_s: Vec<String> = shape.iter().map(usize::to_string).collect();
            writeln!(out, "tensor {} {}", t.name(), shape_s.join(" ")).expect("string write");
            let vals: Vec<String> = self.tensor(t).iter().map(|v| format!("{v:e}")).collect();
            writeln!(out, "{}", vals.join(" ")).expect("string write");
        }
        out
    }

    /// Parses the text produced by [`QNetworkParams::to_text`]; values are
    /// restored bit for bit.
    pub fn from_text(text: &str, source: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
        let mut next = |what: &str| {
            lines.find(|(_, l)| !l.is_empty()).ok_or_else(|| {
                Error::parse(source, 0, format!("unexpected end of file, wanted {what}"))
            })
        };
        let (n, header) = next("header")?;
        if header != HEADER {
            return Err(Error::parse(source, n, "not a Q-network checkpoint"));
        }
        let (n, dims_line) = next("dims")?;
        let mut dims = NetDims::default();
        let mut parts = dims_line.split_whitespace();
        if parts.next() != Some("dims") {
            return Err(Error::parse(source, n, "expected `dims` line"));
        }
        for kv in parts {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::parse(source, n, "bad dims entry"))?;
            let bad = || Error::parse(source, n, format!("bad value for {k}"));
            match k {
                "embed_dim" => dims.embed_dim = v.parse().map_err(|_| bad())?,
                "compete_dim" => dims.compete_dim = v.parse().map_err(|_| bad())?,
                "demand_scale" => dims.demand_scale = v.parse().map_err(|_| bad())?,
                _ => return Err(Error::parse(source, n, format!("unknown dims key {k}"))),
            }
        }
        dims.validate()
            .map_err(|e| Error::parse(source, n, e.to_string()))?;
        let mut params = QNetworkParams::zeros(dims)?;
        for t in TensorId::ALL {
            let (n, decl) = next("tensor declaration")?;
            let mut parts = decl.split_whitespace();
            if parts.next() != Some("tensor") {
                return Err(Error::parse(source, n, "expected `tensor` line"));
            }
            let name = parts.next().unwrap_or_default();
            if TensorId::from_name(name) != Some(t) {
                return Err(Error::parse(
                    source,
                    n,
                    format!("expected tensor {}, found {name}", t.name()),
                ));
            }
            let shape: Vec<usize> = parts
                .map(|s| s.parse().map_err(|_| Error::parse(source, n, "bad shape")))
                .collect::<Result<_>>()?;
            if shape != t.shape(&dims) {
                return Err(Error::parse(
                    source,
                    n,
                    format!("shape {shape:?} does not match dims"),
                ));
            }
            let (n, values) = next("tensor values")?;
            let vals: Vec<f64> = values
                .split_whitespace()
                .map(|s| {
                    s.parse()
                        .map_err(|_| Error::parse(source, n, format!("bad value `{s}`")))
                })
                .collect::<Result<_>>()?;
            let slot = params.tensor_mut(t);
            if vals.len() != slot.len() {
                return Err(Error::parse(source, n, "value count does not match shape"));
            }
            slot.copy_from_slice(&vals);
        }
        Ok(params)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = crate::scenario::read_text(path)?;
        Self::from_text(&text, &path.display().to_string())
    }
}

impl GradientSet {
    pub fn zeros_like(params: &QNetworkParams) -> Self {
        Self {
            dims: params.dims,
            data: vec![0.0; params.data.len()],
        }
    }

    pub fn dims(&self) -> &NetDims {
        &self.dims
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn tensor(&self, id: TensorId) -> &[f64] {
        &self.data[id.range(&self.dims)]
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|g| g * g).sum::<f64>().sqrt()
    }

    pub fn add_assign(&mut self, other: &GradientSet) -> Result<()> {
        if self.dims != other.dims {
            return Err(Error::Shape("gradient sets have different layouts".into()));
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self {
            dims: self.dims,
            data: self.data.iter().map(|g| g * k).collect(),
        }
    }
}

/// `theta - lr * g`, returned as a new value.
pub fn sgd_step(params: &QNetworkParams, grads: &GradientSet, lr: f64) -> Result<QNetworkParams> {
    if params.dims != grads.dims {
        return Err(Error::Shape(
            "gradient layout does not match parameters".into(),
        ));
    }
    let data = params
        .data
        .iter()
        .zip(&grads.data)
        .map(|(w, g)| w - lr * g)
        .collect();
    Ok(QNetworkParams {
        dims: params.dims,
        data,
    })
}

/// Intermediate activations kept for the backward pass.
struct Trace {
    inputs: Vec<[f64; INPUT_DIM]>,
    embed_pre: Vec<f64>,
    embed: Vec<f64>,
    rho: Vec<f64>,
    pair_pre: Vec<f64>,
    q: Vec<f64>,
}

fn check_obs(obs: &Observation, config: &IntersectionConfig) -> Result<()> {
    if obs.queue_counts.len() != config.n_movements || obs.green_flags.len() != config.n_movements {
        return Err(Error::Shape(format!(
            "observation has {} counts and {} flags, intersection has {} movements",
            obs.queue_counts.len(),
            obs.green_flags.len(),
            config.n_movements
        )));
    }
    if config.n_phases() < 2 {
        return Err(Error::Shape(
            "phase competition needs at least two phases".into(),
        ));
    }
    Ok(())
}

fn forward_trace(params: &QNetworkParams, obs: &Observation, config: &IntersectionConfig) -> Trace {
    let dims = &params.dims;
    let (e_dim, c_dim) = (dims.embed_dim, dims.compete_dim);
    let n_mov = config.n_movements;
    let n_ph = config.n_phases();
    let we = params.tensor(TensorId::EmbedWeight);
    let be = params.tensor(TensorId::EmbedBias);
    let wc = params.tensor(TensorId::CompeteWeight);
    let bc = params.tensor(TensorId::CompeteBias);
    let wr = params.tensor(TensorId::ReadoutWeight);
    let br = params.tensor(TensorId::ReadoutBias)[0];

    let inputs: Vec<[f64; INPUT_DIM]> = (0..n_mov)
        .map(|i| {
            [
                f64::from(obs.queue_counts[i]) * dims.demand_scale,
                f64::from(obs.green_flags[i]),
            ]
        })
        .collect();
    let mut embed_pre = vec![0.0; n_mov * e_dim];
    let mut embed = vec![0.0; n_mov * e_dim];
    for (i, x) in inputs.iter().enumerate() {
        for k in 0..e_dim {
            let z = we[k * INPUT_DIM] * x[0] + we[k * INPUT_DIM + 1] * x[1] + be[k];
            embed_pre[i * e_dim + k] = z;
            embed[i * e_dim + k] = z.max(0.0);
        }
    }

    let mut rho = vec![0.0; n_ph * e_dim];
    for (p, phase) in config.phases.iter().enumerate() {
        let inv = 1.0 / phase.len() as f64;
        for &m in phase {
            for k in 0..e_dim {
                rho[p * e_dim + k] += embed[m * e_dim + k];
            }
        }
        for k in 0..e_dim {
            rho[p * e_dim + k] *= inv;
        }
    }

    // The competition layer splits into a "self" half and a "rival" half.
    let mut own = vec![0.0; n_ph * c_dim];
    let mut rival = vec![0.0; n_ph * c_dim];
    for p in 0..n_ph {
        let r = &rho[p * e_dim..(p + 1) * e_dim];
        for j in 0..c_dim {
            let row = &wc[j * 2 * e_dim..(j + 1) * 2 * e_dim];
            let (a, b) = row.split_at(e_dim);
            own[p * c_dim + j] = a.iter().zip(r).map(|(w, x)| w * x).sum();
            rival[p * c_dim + j] = b.iter().zip(r).map(|(w, x)| w * x).sum();
        }
    }

    let mut pair_pre = vec![0.0; n_ph * n_ph * c_dim];
    let mut q = vec![0.0; n_ph];
    for p in 0..n_ph {
        let mut total = 0.0;
        for qq in 0..n_ph {
            if qq == p {
                continue;
            }
            let base = (p * n_ph + qq) * c_dim;
            let mut score = br;
            for j in 0..c_dim {
                let z = own[p * c_dim + j] + rival[qq * c_dim + j] + bc[j];
                pair_pre[base + j] = z;
                score += wr[j] * z.max(0.0);
            }
            total += score;
        }
        q[p] = total;
    }
    Trace {
        inputs,
        embed_pre,
        embed,
        rho,
        pair_pre,
        q,
    }
}

/// Adds `dq[p] * dQ(p)/dtheta` for every phase into `grads`.
fn backward(
    params: &QNetworkParams,
    config: &IntersectionConfig,
    trace: &Trace,
    dq: &[f64],
    grads: &mut GradientSet,
) {
    let dims = params.dims;
    let (e_dim, c_dim) = (dims.embed_dim, dims.compete_dim);
    let n_mov = config.n_movements;
    let n_ph = config.n_phases();
    let wc = params.tensor(TensorId::CompeteWeight);
    let wr = params.tensor(TensorId::ReadoutWeight);

    let mut d_own = vec![0.0; n_ph * c_dim];
    let mut d_rival = vec![0.0; n_ph * c_dim];
    {
        let g = &mut grads.data;
        let r_bias = TensorId::ReadoutBias.range(&dims).start;
        let r_w = TensorId::ReadoutWeight.range(&dims).start;
        let c_b = TensorId::CompeteBias.range(&dims).start;
        for p in 0..n_ph {
            let up = dq[p];
            if up == 0.0 {
                continue;
            }
            g[r_bias] += up * (n_ph - 1) as f64;
            for qq in 0..n_ph {
                if qq == p {
                    continue;
                }
                let base = (p * n_ph + qq) * c_dim;
                for j in 0..c_dim {
                    let z = trace.pair_pre[base + j];
                    if z > 0.0 {
                        g[r_w + j] += up * z;
                        let dz = up * wr[j];
                        g[c_b + j] += dz;
                        d_own[p * c_dim + j] += dz;
                        d_rival[qq * c_dim + j] += dz;
                    }
                }
            }
        }
    }

    let mut d_rho = vec![0.0; n_ph * e_dim];
    {
        let c_w = TensorId::CompeteWeight.range(&dims).start;
        let g = &mut grads.data;
        for p in 0..n_ph {
            let r = &trace.rho[p * e_dim..(p + 1) * e_dim];
            for j in 0..c_dim {
                let (da, db) = (d_own[p * c_dim + j], d_rival[p * c_dim + j]);
                if da == 0.0 && db == 0.0 {
                    continue;
                }
                let row = c_w + j * 2 * e_dim;
                for k in 0..e_dim {
                    g[row + k] += da * r[k];
                    g[row + e_dim + k] += db * r[k];
                    d_rho[p * e_dim + k] +=
                        da * wc[j * 2 * e_dim + k] + db * wc[j * 2 * e_dim + e_dim + k];
                }
            }
        }
    }

    let mut d_embed = vec![0.0; n_mov * e_dim];
    for (p, phase) in config.phases.iter().enumerate() {
        let inv = 1.0 / phase.len() as f64;
        for &m in phase {
            for k in 0..e_dim {
                d_embed[m * e_dim + k] += d_rho[p * e_dim + k] * inv;
            }
        }
    }

    let e_w = TensorId::EmbedWeight.range(&dims).start;
    let e_b = TensorId::EmbedBias.range(&dims).start;
    let g = &mut grads.data;
    for (i, x) in trace.inputs.iter().enumerate() {
        for k in 0..e_dim {
            if trace.embed_pre[i * e_dim + k] <= 0.0 {
                continue;
            }
            let dz = d_embed[i * e_dim + k];
            g[e_w + k * INPUT_DIM] += dz * x[0];
            g[e_w + k * INPUT_DIM + 1] += dz * x[1];
            g[e_b + k] += dz;
        }
    }
    debug_assert_eq!(trace.embed.len(), n_mov * e_dim);
}

pub fn frap_forward(
    params: &QNetworkParams,
    obs: &Observation,
    config: &IntersectionConfig,
) -> Result<QValues> {
    check_obs(obs, config)?;
    Ok(QValues {
        q: forward_trace(params, obs, config).q,
    })
}

/// Mean squared Bellman error over the batch and its gradient. The bootstrap
/// term `r + gamma * max_a' Q_target(s', a')` is held constant.
pub fn bellman_grads(
    params: &QNetworkParams,
    batch: &[&Transition],
    target_params: &QNetworkParams,
    gamma: f64,
    config: &IntersectionConfig,
) -> Result<(f64, GradientSet)> {
    if batch.is_empty() {
        return Err(Error::Argument("empty batch".into()));
    }
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::Argument(format!("gamma {gamma} outside [0, 1)")));
    }
    if params.dims != target_params.dims {
        return Err(Error::Shape("target network layout differs".into()));
    }
    let n_ph = config.n_phases();
    let scale = 1.0 / batch.len() as f64;
    let mut grads = GradientSet::zeros_like(params);
    let mut loss = 0.0;
    let mut dq = vec![0.0; n_ph];
    for t in batch {
        check_obs(&t.s, config)?;
        check_obs(&t.s_next, config)?;
        if t.a >= n_ph {
            return Err(Error::Argument(format!(
                "transition action {} out of range",
                t.a
            )));
        }
        let trace = forward_trace(params, &t.s, config);
        let next_max = forward_trace(target_params, &t.s_next, config)
            .q
            .into_iter()
            .fold(f64::NEG_INFINITY, f64::max);
        let td = trace.q[t.a] - t.r - gamma * next_max;
        loss += td * td * scale;
        dq.iter_mut().for_each(|d| *d = 0.0);
        dq[t.a] = 2.0 * td * scale;
        backward(params, config, &trace, &dq, &mut grads);
    }
    Ok((loss, grads))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obs(counts: &[u32], phase: usize, config: &IntersectionConfig) -> Observation {
        Observation {
            queue_counts: counts.to_vec(),
            green_flags: config.phase_mask(phase).into_iter().map(u8::from).collect(),
            phase_index: phase,
        }
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let dims = NetDims::default();
        let a = init_params(dims, 3).unwrap();
        assert_eq!(a, init_params(dims, 3).unwrap());
        assert_ne!(a, init_params(dims, 4).unwrap());
        for t in TensorId::ALL {
            let vals = a.tensor(t);
            if t.is_bias() {
                assert!(vals.iter().all(|&v| v == 0.0));
            } else {
                let bound = 1.0 / (t.fan_in(&dims) as f64).sqrt();
                assert!(vals.iter().all(|v| v.abs() <= bound));
            }
        }
        assert!(init_params(
            NetDims {
                embed_dim: 0,
                ..dims
            },
            1
        )
        .is_err());
    }

    #[test]
    fn equal_demand_gives_equal_q() {
        let c = IntersectionConfig::default();
        let p = init_params(NetDims::default(), 11).unwrap();
        let o = Observation {
            queue_counts: vec![4; 8],
            green_flags: vec![0; 8],
            phase_index: 0,
        };
        let q = frap_forward(&p, &o, &c).unwrap();
        assert_eq!(q.len(), 4);
        assert!(q.q.iter().all(|&v| (v - q.q[0]).abs() < 1e-12));
    }

    #[test]
    fn forward_rejects_wrong_shape() {
        let c = IntersectionConfig::default();
        let p = init_params(NetDims::default(), 1).unwrap();
        let o = Observation {
            queue_counts: vec![0; 4],
            green_flags: vec![0; 4],
            phase_index: 0,
        };
        assert!(matches!(frap_forward(&p, &o, &c), Err(Error::Shape(_))));
    }

    #[test]
    fn argmax_breaks_ties_low() {
        assert_eq!(
            QValues {
                q: vec![1.0, 3.0, 2.0, 0.0]
            }
            .argmax(),
            Some(1)
        );
        assert_eq!(QValues { q: vec![2.0; 4] }.argmax(), Some(0));
        assert_eq!(QValues { q: vec![] }.argmax(), None);
    }

    #[test]
    fn fixed_point_has_zero_loss_and_gradient() {
        let c = IntersectionConfig::default();
        let p = QNetworkParams::zeros(NetDims::default()).unwrap();
        let t = Transition {
            s: obs(&[3, 1, 0, 0, 2, 0, 0, 0], 0, &c),
            a: 2,
            r: 0.0,
            s_next: obs(&[0; 8], 2, &c),
        };
        let (loss, g) = bellman_grads(&p, &[&t], &p, 0.8, &c).unwrap();
        assert_eq!(loss, 0.0);
        assert!(g.as_slice().iter().all(|&v| v == 0.0));
        assert!(bellman_grads(&p, &[], &p, 0.8, &c).is_err());
    }

    #[test]
    fn scalar_bellman_term() {
        // Q(s,a) = 1.0 via the readout bias alone (3 rivals -> b_r = 1/3),
        // target net gives max 1.0 the same way; r = 0.5, gamma = 0.9.
        let c = IntersectionConfig::default();
        let mut p = QNetworkParams::zeros(NetDims::default()).unwrap();
        p.tensor_mut(TensorId::ReadoutBias)[0] = 1.0 / 3.0;
        let t = Transition {
            s: obs(&[1; 8], 0, &c),
            a: 0,
            r: 0.5,
            s_next: obs(&[1; 8], 0, &c),
        };
        let (loss, _) = bellman_grads(&p, &[&t], &p, 0.9, &c).unwrap();
        assert!((loss - 0.16).abs() < 1e-12, "{loss}");
    }

    #[test]
    fn sgd_step_arithmetic() {
        let dims = NetDims::default();
        let p = QNetworkParams::zeros(dims).unwrap();
        let mut g = GradientSet::zeros_like(&p);
        g.data.iter_mut().for_each(|v| *v = 1.0);
        let next = sgd_step(&p, &g, 0.25).unwrap();
        assert!(next.as_slice().iter().all(|&v| v == -0.25));
        assert_eq!(sgd_step(&p, &g, 0.0).unwrap(), p);
        assert!(p.as_slice().iter().all(|&v| v == 0.0));

        let base = init_params(dims, 2).unwrap();
        let mut g2 = GradientSet::zeros_like(&base);
        for (i, v) in g2.data.iter_mut().enumerate() {
            *v = (i as f64 * 0.37).sin();
        }
        let two = sgd_step(&sgd_step(&base, &g2, 0.1).unwrap(), &g2, 0.2).unwrap();
        let one = sgd_step(&base, &g2, 0.3).unwrap();
        for (a, b) in two.as_slice().iter().zip(one.as_slice()) {
            assert!((a - b).abs() < 1e-12);
        }
        let other = QNetworkParams::zeros(NetDims {
            embed_dim: 8,
            ..dims
        })
        .unwrap();
        assert!(sgd_step(&other, &g2, 0.1).is_err());
    }

    #[test]
    fn checkpoint_text_is_bit_exact() {
        let p = init_params(NetDims::default(), 99).unwrap();
        let back = QNetworkParams::from_text(&p.to_text(), "mem").unwrap();
        assert_eq!(
            p.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            back.as_slice()
                .iter()
                .map(|v| v.to_bits())
                .collect::<Vec<_>>()
        );
        assert_eq!(back.to_text(), p.to_text());
        assert!(QNetworkParams::from_text("garbage", "mem").is_err());
    }
}
