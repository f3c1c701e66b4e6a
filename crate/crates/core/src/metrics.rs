//! Movement-share distributions and the KL distance between them.

use std::path::Path;

use crate::error::{Error, Result};
use crate::scenario::{read_text, FlowSpec, ScenarioSet};

pub const DEFAULT_KL_EPSILON: f64 = 1e-6;

/// Share of vehicles on each movement.
#[derive(Debug, Clone, PartialEq)]
pub struct MovementDistribution {
    p: Vec<f64>,
}

impl MovementDistribution {
    /// Validates that `p` is a probability vector (sum 1 within 1e-9).
    pub fn new(p: Vec<f64>) -> Result<Self> {
        if p.is_empty() {
            return Err(Error::UndefinedDistribution("no movements".into()));
        }
        if p.iter().any(|&x| !x.is_finite() || x < 0.0) {
            return Err(Error::UndefinedDistribution(
                "negative or non-finite share".into(),
            ));
        }
        let sum: f64 = p.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::UndefinedDistribution(format!("shares sum to {sum}")));
        }
        Ok(Self { p })
    }

    pub fn probs(&self) -> &[f64] {
        &self.p
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }
}

/// `P(i) = n(i) / sum_j n(j)`.
pub fn movement_distribution<T: Copy + Into<f64>>(volumes: &[T]) -> Result<MovementDistribution> {
    let total: f64 = volumes.iter().map(|&v| v.into()).sum();
    if !(total > 0.0) {
        return Err(Error::UndefinedDistribution("total volume is zero".into()));
    }
    let p = volumes.iter().map(|&v| v.into() / total).collect();
    MovementDistribution::new(p)
}

/// Distribution from integer counts (u64 does not convert losslessly into f64
/// via `Into`, hence the separate entry point).
pub fn distribution_from_counts(counts: &[u64]) -> Result<MovementDistribution> {
    let as_f: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
    movement_distribution(&as_f)
}

/// Zero cells are raised to `epsilon` and the vector renormalized; a vector
/// without zero cells is returned untouched.
fn smooth(p: &[f64], epsilon: f64) -> Vec<f64> {
    if epsilon <= 0.0 || p.iter().all(|&x| x > 0.0) {
        return p.to_vec();
    }
    let raised: Vec<f64> = p
        .iter()
        .map(|&x| if x > 0.0 { x } else { epsilon })
        .collect();
    let sum: f64 = raised.iter().sum();
    raised.into_iter().map(|x| x / sum).collect()
}

/// `D(train | test) = sum_i p_train(i) ln(p_train(i) / p_test(i))` in nats.
///
/// Returns `+inf` when `epsilon` is zero and the test distribution has a zero
/// cell where the training one does not.
pub fn kl_distance(
    p_train: &MovementDistribution,
    p_test: &MovementDistribution,
    epsilon: f64,
) -> Result<f64> {
    if p_train.len() != p_test.len() {
        return Err(Error::Argument(format!(
            "distributions differ in length ({} vs {})",
            p_train.len(),
            p_test.len()
        )));
    }
    if !(epsilon >= 0.0) {
        return Err(Error::Argument("epsilon must be non-negative".into()));
    }
    let p = smooth(&p_train.p, epsilon);
    let q = smooth(&p_test.p, epsilon);
    let mut d = 0.0;
    for (&pi, &qi) in p.iter().zip(&q) {
        if pi == 0.0 {
            continue;
        }
        if qi == 0.0 {
            return Ok(f64::INFINITY);
        }
        d += pi * (pi / qi).ln();
    }
    Ok(d.max(0.0))
}

/// Arithmetic mean of the per-scenario movement distributions, renormalized.
pub fn average_training_distribution(
    set: &ScenarioSet,
    n_movements: usize,
) -> Result<MovementDistribution> {
    if set.is_empty() {
        return Err(Error::Argument("empty scenario set".into()));
    }
    let mut acc = vec![0.0; n_movements];
    for s in &set.scenarios {
        let d = distribution_from_counts(&s.movement_counts(n_movements))?;
        for (a, p) in acc.iter_mut().zip(d.probs()) {
            *a += p;
        }
    }
    movement_distribution(&acc)
}

/// Reads a distribution from any of:
/// - a scenario directory (average over its flows),
/// - a flow file (`arrival_s,movement`; counts per movement),
/// - a one-row `label,mov1,...,movN` file holding counts or shares.
pub fn load_distribution(path: &Path, n_movements: usize) -> Result<MovementDistribution> {
    if path.is_dir() {
        return average_training_distribution(&ScenarioSet::read_dir(path)?, n_movements);
    }
    let text = read_text(path)?;
    let source = path.display().to_string();
    let header = text
        .lines()
        .map(str::trim)
        .find(|l| !l.is_empty() && !l.starts_with('#'))
        .ok_or_else(|| Error::parse(&source, 1, "empty distribution file"))?;
    if header.starts_with("arrival_s") {
        let flow = FlowSpec::read(path)?;
        return distribution_from_counts(&flow.movement_counts(n_movements));
    }
    parse_distribution_row(&text, &source)
}

fn parse_distribution_row(text: &str, source: &str) -> Result<MovementDistribution> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = rdr
        .headers()
        .map_err(|e| Error::parse(source, 1, e.to_string()))?
        .clone();
    if headers.len() < 2 || &headers[0] != "label" {
        return Err(Error::parse(
            source,
            1,
            "expected header `label,mov1,...` or `arrival_s,movement`",
        ));
    }
    let rows = rdr
        .records()
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| Error::parse(source, 0, e.to_string()))?;
    let [row] = rows.as_slice() else {
        return Err(Error::parse(
            source,
            0,
            format!("expected exactly one row, found {}", rows.len()),
        ));
    };
    let line = row.position().map_or(0, |p| p.line() as usize);
    let values = row
        .iter()
        .skip(1)
        .map(|f| match f.parse::<f64>() {
            Ok(v) if v.is_finite() && v >= 0.0 => Ok(v),
            _ => Err(Error::parse(source, line, format!("bad value `{f}`"))),
        })
        .collect::<Result<Vec<_>>>()?;
    movement_distribution(&values)
}
