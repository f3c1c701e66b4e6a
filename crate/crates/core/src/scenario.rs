//! Scenario generation and count ingestion.
//!
//! Training sets follow a three-step recipe per base distribution: scale all
//! movements by one of five uniform factors, jitter each movement
//! independently, then draw arrival times uniformly over the horizon. Test
//! sets widen the per-movement jitter (variability shift) or raise the total
//! volume (volume shift).
//!
//! Files are versioned with a leading `# schema=1` comment. Movements are
//! 1-based in every file and 0-based in memory.

use std::fmt::Write as _;
use std::io::Read;
use std::path::{Path, PathBuf};

use chrono::{NaiveDateTime, NaiveTime, Timelike};
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed, stream};

pub const SCHEMA_LINE: &str = "# schema=1";
pub const DEFAULT_HORIZON: f64 = 3600.0;
pub const TRAINING_SCALES: [f64; 5] = [-0.2, -0.1, 0.0, 0.1, 0.2];
pub const TRAINING_HALF_RANGE: f64 = 0.20;
/// Training jitter widened by an additional 0.15.
pub const VARIABILITY_HALF_RANGE: f64 = 0.35;
pub const VOLUME_HALF_RANGE: f64 = 0.10;
pub const VOLUME_SCALE: f64 = 0.30;
const BUCKET_MINUTES: u32 = 5;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BaseDistribution {
    pub label: String,
    /// Vehicles per hour on each movement.
    pub volumes: Vec<u32>,
}

impl BaseDistribution {
    pub fn new(label: impl Into<String>, volumes: Vec<u32>) -> Result<Self> {
        if volumes.is_empty() {
            return Err(Error::Argument("base distribution has no movements".into()));
        }
        if volumes.iter().all(|&v| v == 0) {
            return Err(Error::Argument(
                "base distribution has zero total volume".into(),
            ));
        }
        Ok(Self {
            label: label.into(),
            volumes,
        })
    }

    pub fn total(&self) -> u64 {
        self.volumes.iter().map(|&v| u64::from(v)).sum()
    }
}

/// The five synthetic base distributions (vehicles per hour).
pub fn table_i_bases() -> Vec<BaseDistribution> {
    [
        ("scenario-1", [98, 159, 114, 147, 157, 174, 165, 289]),
        ("scenario-2", [164, 332, 73, 308, 339, 58, 25, 45]),
        ("scenario-3", [345, 85, 190, 101, 153, 127, 125, 188]),
        ("scenario-4", [188, 418, 98, 445, 436, 72, 27, 74]),
        ("scenario-5", [451, 101, 252, 139, 169, 159, 170, 250]),
    ]
    .into_iter()
    .map(|(l, v)| BaseDistribution {
        label: l.into(),
        volumes: v.to_vec(),
    })
    .collect()
}

/// Peak-hour movement counts of the real-world intersection.
pub fn table_iii_bases() -> Vec<BaseDistribution> {
    [
        ("am-peak", [45, 218, 58, 290, 30, 476, 54, 65]),
        ("midday-peak", [36, 101, 35, 309, 53, 415, 49, 288]),
        ("pm-peak", [93, 304, 87, 446, 89, 358, 107, 489]),
    ]
    .into_iter()
    .map(|(l, v)| BaseDistribution {
        label: l.into(),
        volumes: v.to_vec(),
    })
    .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    Training,
    TestVariability,
    TestVolume,
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub label: String,
    pub kind: ScenarioKind,
    pub base_label: String,
    pub uniform_scale: f64,
    pub half_range: f64,
    pub seed: u64,
}

impl Default for Provenance {
    fn default() -> Self {
        Self {
            label: "custom".into(),
            kind: ScenarioKind::Custom,
            base_label: String::new(),
            uniform_scale: 0.0,
            half_range: 0.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Arrival {
    pub time: f64,
    pub movement: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowSpec {
    /// Sorted by time, ties by movement.
    pub arrivals: Vec<Arrival>,
    pub horizon: f64,
    pub provenance: Provenance,
}

#[derive(Serialize, Deserialize)]
struct FlowMeta {
    schema: u32,
    horizon: f64,
    #[serde(flatten)]
    provenance: Provenance,
}

impl FlowSpec {
    pub fn from_arrivals(mut arrivals: Vec<Arrival>, horizon: f64) -> Self {
        arrivals.sort_by(|a, b| a.time.total_cmp(&b.time).then(a.movement.cmp(&b.movement)));
        Self {
            arrivals,
            horizon,
            provenance: Provenance::default(),
        }
    }

    pub fn label(&self) -> &str {
        &self.provenance.label
    }

    pub fn movement_counts(&self, n_movements: usize) -> Vec<u64> {
        let mut counts = vec![0u64; n_movements];
        for a in &self.arrivals {
            counts[a.movement] += 1;
        }
        counts
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(16 * self.arrivals.len() + 32);
        out.push_str(SCHEMA_LINE);
        out.push_str("\narrival_s,movement\n");
        for a in &self.arrivals {
            writeln!(out, "{},{}", a.time, a.movement + 1).expect("string write");
        }
        out
    }

    pub fn meta_toml(&self) -> String {
        let meta = FlowMeta {
            schema: 1,
            horizon: self.horizon,
            provenance: self.provenance.clone(),
        };
        toml::to_string(&meta).expect("flow metadata serializes")
    }

    /// Writes `<path>` plus the sidecar `<stem>.meta.toml`.
    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))?;
        let meta = sidecar_path(path);
        std::fs::write(&meta, self.meta_toml()).map_err(|e| Error::io(&meta, e))
    }

    /// Reads a flow file; the sidecar is optional (defaults: 3600 s horizon,
    /// label from the file stem).
    pub fn read(path: &Path) -> Result<Self> {
        let text = read_text(path)?;
        let arrivals = parse_flow_csv(&text, &path.display().to_string())?;
        let meta_path = sidecar_path(path);
        let (horizon, provenance) = if meta_path.exists() {
            let meta_text = read_text(&meta_path)?;
            let meta: FlowMeta = toml::from_str(&meta_text)
                .map_err(|e| Error::parse(meta_path.display(), 0, e.to_string()))?;
            (meta.horizon, meta.provenance)
        } else {
            let label = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            (
                DEFAULT_HORIZON,
                Provenance {
                    label,
                    ..Provenance::default()
                },
            )
        };
        let mut flow = FlowSpec::from_arrivals(arrivals, horizon);
        flow.provenance = provenance;
        Ok(flow)
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!("{stem}.meta.toml"))
}

pub(crate) fn read_text(path: &Path) -> Result<String> {
    let mut s = String::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_string(&mut s))
        .map_err(|e| Error::io(path, e))?;
    Ok(s)
}

fn csv_reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes())
}

fn record_line(r: &csv::StringRecord) -> usize {
    r.position().map(|p| p.line() as usize).unwrap_or(0)
}

fn parse_movement(field: &str, source: &str, line: usize) -> Result<usize> {
    match field.parse::<usize>() {
        Ok(m) if m >= 1 => Ok(m - 1),
        _ => Err(Error::parse(
            source,
            line,
            format!("bad movement `{field}` (1-based index expected)"),
        )),
    }
}

fn parse_flow_csv(text: &str, source: &str) -> Result<Vec<Arrival>> {
    let mut rdr = csv_reader(text);
    let headers = rdr
        .headers()
        .map_err(|e| Error::parse(source, 1, e.to_string()))?
        .clone();
    if headers.iter().collect::<Vec<_>>() != ["arrival_s", "movement"] {
        return Err(Error::parse(
            source,
            1,
            "expected header `arrival_s,movement`",
        ));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            Error::parse(source, line, e.to_string())
        })?;
        let line = record_line(&rec);
        let time: f64 = rec[0]
            .parse()
            .map_err(|_| Error::parse(source, line, format!("bad arrival time `{}`", &rec[0])))?;
        if !time.is_finite() || time < 0.0 {
            return Err(Error::parse(
                source,
                line,
                "arrival time must be finite and non-negative",
            ));
        }
        let movement = parse_movement(&rec[1], source, line)?;
        out.push(Arrival { time, movement });
    }
    Ok(out)
}

/// Reads a base-distribution file (`label,mov1,...,movN`, one row per base).
pub fn read_bases(path: &Path) -> Result<Vec<BaseDistribution>> {
    let text = read_text(path)?;
    parse_bases(&text, &path.display().to_string())
}

pub fn parse_bases(text: &str, source: &str) -> Result<Vec<BaseDistribution>> {
    let mut rdr = csv_reader(text);
    let headers = rdr
        .headers()
        .map_err(|e| Error::parse(source, 1, e.to_string()))?
        .clone();
    if headers.len() < 2 || &headers[0] != "label" {
        return Err(Error::parse(source, 1, "expected header `label,mov1,...`"));
    }
    let n = headers.len() - 1;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            Error::parse(source, line, e.to_string())
        })?;
        let line = record_line(&rec);
        let volumes = (1..=n)
            .map(|i| {
                rec[i]
                    .parse::<u32>()
                    .map_err(|_| Error::parse(source, line, format!("bad volume `{}`", &rec[i])))
            })
            .collect::<Result<Vec<_>>>()?;
        let base = BaseDistribution::new(&rec[0], volumes)
            .map_err(|e| Error::parse(source, line, e.to_string()))?;
        out.push(base);
    }
    if out.is_empty() {
        return Err(Error::parse(source, 1, "no base distributions"));
    }
    Ok(out)
}

pub fn bases_to_csv(bases: &[BaseDistribution]) -> String {
    let n = bases.first().map_or(0, |b| b.volumes.len());
    let mut out = String::from(SCHEMA_LINE);
    out.push_str("\nlabel");
    for i in 1..=n {
        write!(out, ",mov{i}").expect("string write");
    }
    out.push('\n');
    for b in bases {
        out.push_str(&b.label);
        for v in &b.volumes {
            write!(out, ",{v}").expect("string write");
        }
        out.push('\n');
    }
    out
}

pub fn write_bases(path: &Path, bases: &[BaseDistribution]) -> Result<()> {
    std::fs::write(path, bases_to_csv(bases)).map_err(|e| Error::io(path, e))
}

fn round_half_up(x: f64) -> u32 {
    (x + 0.5).floor().max(0.0) as u32
}

/// Scales every movement by `1 + uniform_scale`, then each one by its own
/// `1 + r_i` with `r_i ~ U(-h, h)`, rounding half up.
pub fn perturb_base(
    base: &BaseDistribution,
    uniform_scale: f64,
    per_move_half_range: f64,
    seed: u64,
) -> Result<Vec<u32>> {
    if base.volumes.iter().all(|&v| v == 0) {
        return Err(Error::Argument("cannot perturb an all-zero base".into()));
    }
    if !(-0.5..=0.5).contains(&uniform_scale) {
        return Err(Error::Argument(format!(
            "uniform_scale {uniform_scale} outside [-0.5, 0.5]"
        )));
    }
    if !(0.0..=0.5).contains(&per_move_half_range) {
        return Err(Error::Argument(format!(
            "per-movement half range {per_move_half_range} outside [0, 0.5]"
        )));
    }
    let mut rng = rng_from_seed(seed);
    Ok(base
        .volumes
        .iter()
        .map(|&v| {
            let r = if per_move_half_range > 0.0 {
                rng.random_range(-per_move_half_range..=per_move_half_range)
            } else {
                0.0
            };
            round_half_up(f64::from(v) * (1.0 + uniform_scale) * (1.0 + r))
        })
        .collect())
}

/// Exactly `volumes[i]` arrivals on movement `i`, times uniform on `[0, horizon)`.
pub fn sample_arrivals(volumes: &[u32], horizon: f64, seed: u64) -> Result<FlowSpec> {
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(Error::Argument(format!(
            "horizon must be positive, got {horizon}"
        )));
    }
    let mut rng = rng_from_seed(seed);
    let total: u64 = volumes.iter().map(|&v| u64::from(v)).sum();
    let mut arrivals = Vec::with_capacity(total as usize);
    for (movement, &count) in volumes.iter().enumerate() {
        for _ in 0..count {
            arrivals.push(Arrival {
                time: rng.random_range(0.0..horizon),
                movement,
            });
        }
    }
    Ok(FlowSpec::from_arrivals(arrivals, horizon))
}

fn generate(
    base: &BaseDistribution,
    kind: ScenarioKind,
    label: String,
    uniform_scale: f64,
    half_range: f64,
    horizon: f64,
    seed: u64,
) -> Result<FlowSpec> {
    let volumes = perturb_base(
        base,
        uniform_scale,
        half_range,
        derive_seed(seed, stream::PERTURB, 0),
    )?;
    let mut flow = sample_arrivals(&volumes, horizon, derive_seed(seed, stream::ARRIVALS, 0))?;
    flow.provenance = Provenance {
        label,
        kind,
        base_label: base.label.clone(),
        uniform_scale,
        half_range,
        seed,
    };
    Ok(flow)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SetKind {
    Training,
    Test,
    Custom,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSet {
    pub scenarios: Vec<FlowSpec>,
    pub kind: SetKind,
}

#[derive(Serialize, Deserialize)]
struct SetIndex {
    schema: u32,
    kind: SetKind,
    scenarios: Vec<String>,
}

fn check_bases(bases: &[BaseDistribution]) -> Result<()> {
    if bases.is_empty() {
        return Err(Error::Argument(
            "at least one base distribution required".into(),
        ));
    }
    let n = bases[0].volumes.len();
    if bases.iter().any(|b| b.volumes.len() != n) {
        return Err(Error::Argument(
            "base distributions disagree on movement count".into(),
        ));
    }
    Ok(())
}

/// Five uniformly scaled, jittered scenarios per base (25 for five bases).
pub fn make_training_set(
    bases: &[BaseDistribution],
    horizon: f64,
    seed: u64,
) -> Result<ScenarioSet> {
    check_bases(bases)?;
    let mut scenarios = Vec::with_capacity(bases.len() * TRAINING_SCALES.len());
    for (b, base) in bases.iter().enumerate() {
        for (j, &scale) in TRAINING_SCALES.iter().enumerate() {
            let index = (b * TRAINING_SCALES.len() + j) as u64;
            let label = format!("train-{:02}-{}{:+.0}", b + 1, base.label, scale * 100.0);
            scenarios.push(generate(
                base,
                ScenarioKind::Training,
                label,
                scale,
                TRAINING_HALF_RANGE,
                horizon,
                derive_seed(seed, stream::TRAINING_SET, index),
            )?);
        }
    }
    Ok(ScenarioSet {
        scenarios,
        kind: SetKind::Training,
    })
}

/// Three variability-shift scenarios on bases 1, 2, 3 and two volume-shift
/// scenarios on bases 2, 3 (indices wrap when fewer bases are given).
pub fn make_test_scenarios(
    bases: &[BaseDistribution],
    horizon: f64,
    seed: u64,
) -> Result<ScenarioSet> {
    check_bases(bases)?;
    let n = bases.len();
    let mut scenarios = Vec::with_capacity(5);
    for i in 0..3 {
        let base = &bases[i % n];
        scenarios.push(generate(
            base,
            ScenarioKind::TestVariability,
            format!("test-{}-variability-{}", i + 1, base.label),
            0.0,
            VARIABILITY_HALF_RANGE,
            horizon,
            derive_seed(seed, stream::TEST_SET, i as u64),
        )?);
    }
    for j in 0..2 {
        let base = &bases[(j + 1) % n];
        scenarios.push(generate(
            base,
            ScenarioKind::TestVolume,
            format!("test-{}-volume-{}", j + 4, base.label),
            VOLUME_SCALE,
            VOLUME_HALF_RANGE,
            horizon,
            derive_seed(seed, stream::TEST_SET, 3 + j as u64),
        )?);
    }
    Ok(ScenarioSet {
        scenarios,
        kind: SetKind::Test,
    })
}

/// One unperturbed scenario per base, labelled by the base, for tests on
/// measured distributions (AM / midday / PM peaks).
pub fn make_base_scenarios(
    bases: &[BaseDistribution],
    horizon: f64,
    seed: u64,
) -> Result<ScenarioSet> {
    check_bases(bases)?;
    let scenarios = bases
        .iter()
        .enumerate()
        .map(|(i, base)| {
            generate(
                base,
                ScenarioKind::Custom,
                base.label.clone(),
                0.0,
                0.0,
                horizon,
                derive_seed(seed, stream::TEST_SET, i as u64),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ScenarioSet {
        scenarios,
        kind: SetKind::Test,
    })
}

impl ScenarioSet {
    pub fn len(&self) -> usize {
        self.scenarios.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenarios.is_empty()
    }

    fn file_name(i: usize) -> String {
        format!("scenario_{i:03}.csv")
    }

    /// SHA-256 over the flow files in set order, hex encoded.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for (i, s) in self.scenarios.iter().enumerate() {
            h.update(Self::file_name(i).as_bytes());
            h.update([0u8]);
            h.update(s.to_csv().as_bytes());
        }
        hex::encode(h.finalize())
    }

    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let names: Vec<String> = (0..self.scenarios.len()).map(Self::file_name).collect();
        for (s, name) in self.scenarios.iter().zip(&names) {
            s.write(&dir.join(name))?;
        }
        let index = SetIndex {
            schema: 1,
            kind: self.kind,
            scenarios: names,
        };
        let path = dir.join("set.toml");
        std::fs::write(
            &path,
            toml::to_string(&index).expect("set index serializes"),
        )
        .map_err(|e| Error::io(&path, e))
    }

    pub fn read_dir(dir: &Path) -> Result<Self> {
        let path = dir.join("set.toml");
        let text = read_text(&path)?;
        let index: SetIndex =
            toml::from_str(&text).map_err(|e| Error::parse(path.display(), 0, e.to_string()))?;
        let scenarios = index
            .scenarios
            .iter()
            .map(|name| FlowSpec::read(&dir.join(name)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            scenarios,
            kind: index.kind,
        })
    }
}

fn parse_window_time(s: &str) -> Result<NaiveTime> {
    NaiveTime::parse_from_str(s, "%H:%M")
        .or_else(|_| NaiveTime::parse_from_str(s, "%H:%M:%S"))
        .map_err(|_| Error::Argument(format!("bad clock time `{s}` (HH:MM expected)")))
}

fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S")
        .ok()
        .or_else(|| NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M").ok())
        .or_else(|| {
            chrono::DateTime::parse_from_rfc3339(s)
                .ok()
                .map(|d| d.naive_local())
        })
}

/// Time-of-day window `[start, end)` aligned to 5-minute buckets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CountWindow {
    pub start: NaiveTime,
    pub end: NaiveTime,
}

impl CountWindow {
    pub fn parse(start: &str, end: &str) -> Result<Self> {
        Self::new(parse_window_time(start)?, parse_window_time(end)?)
    }

    pub fn new(start: NaiveTime, end: NaiveTime) -> Result<Self> {
        for t in [start, end] {
            if t.minute() % BUCKET_MINUTES != 0 || t.second() != 0 {
                return Err(Error::Argument(format!(
                    "{t} is not aligned to 5-minute buckets"
                )));
            }
        }
        if end <= start {
            return Err(Error::Argument(
                "window end must follow window start".into(),
            ));
        }
        Ok(Self { start, end })
    }

    pub fn label(&self) -> String {
        format!(
            "{}-{}",
            self.start.format("%H:%M"),
            self.end.format("%H:%M")
        )
    }

    fn contains(&self, t: NaiveTime) -> bool {
        t >= self.start && t < self.end
    }
}

/// Sums 5-minute movement counts whose time of day falls in the window.
pub fn ingest_counts(
    text: &str,
    source: &str,
    window: CountWindow,
    n_movements: usize,
) -> Result<BaseDistribution> {
    let mut rdr = csv_reader(text);
    let headers = rdr
        .headers()
        .map_err(|e| Error::parse(source, 1, e.to_string()))?
        .clone();
    if headers.iter().collect::<Vec<_>>() != ["timestamp_iso8601", "movement", "count"] {
        return Err(Error::parse(
            source,
            1,
            "expected header `timestamp_iso8601,movement,count`",
        ));
    }
    let mut volumes = vec![0u64; n_movements];
    let mut rows_in_window = 0usize;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            Error::parse(source, line, e.to_string())
        })?;
        let line = record_line(&rec);
        let ts = parse_timestamp(&rec[0])
            .ok_or_else(|| Error::parse(source, line, format!("bad timestamp `{}`", &rec[0])))?;
        let movement = parse_movement(&rec[1], source, line)?;
        if movement >= n_movements {
            return Err(Error::parse(
                source,
                line,
                format!("movement {} exceeds {n_movements}", movement + 1),
            ));
        }
        let count: u64 = rec[2]
            .parse()
            .map_err(|_| Error::parse(source, line, format!("bad count `{}`", &rec[2])))?;
        if window.contains(ts.time()) {
            rows_in_window += 1;
            volumes[movement] += count;
        }
    }
    if rows_in_window == 0 {
        return Err(Error::EmptyWindow(window.label()));
    }
    let volumes = volumes
        .into_iter()
        .map(|v| u32::try_from(v).map_err(|_| Error::Argument("volume overflow".into())))
        .collect::<Result<Vec<_>>>()?;
    BaseDistribution::new(window.label(), volumes)
}

pub fn ingest_counts_csv(
    path: &Path,
    window: CountWindow,
    n_movements: usize,
) -> Result<BaseDistribution> {
    let text = read_text(path)?;
    ingest_counts(&text, &path.display().to_string(), window, n_movements)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform(v: u32) -> BaseDistribution {
        BaseDistribution::new("u", vec![v; 8]).unwrap()
    }

    #[test]
    fn identity_perturbation() {
        let b = &table_i_bases()[1];
        assert_eq!(perturb_base(b, 0.0, 0.0, 9).unwrap(), b.volumes);
    }

    #[test]
    fn uniform_scale_only() {
        assert_eq!(
            perturb_base(&uniform(100), 0.10, 0.0, 1).unwrap(),
            vec![110; 8]
        );
    }

    #[test]
    fn perturbation_is_seeded() {
        let b = &table_i_bases()[0];
        assert_eq!(
            perturb_base(b, 0.1, 0.2, 5).unwrap(),
            perturb_base(b, 0.1, 0.2, 5).unwrap()
        );
        assert_ne!(
            perturb_base(b, 0.1, 0.2, 5).unwrap(),
            perturb_base(b, 0.1, 0.2, 6).unwrap()
        );
    }

    #[test]
    fn perturbation_rejects_bad_inputs() {
        let zero = BaseDistribution {
            label: "z".into(),
            volumes: vec![0; 8],
        };
        assert!(perturb_base(&zero, 0.0, 0.0, 1).is_err());
        assert!(perturb_base(&uniform(10), 0.6, 0.0, 1).is_err());
        assert!(perturb_base(&uniform(10), 0.0, 0.7, 1).is_err());
        assert!(BaseDistribution::new("z", vec![0; 8]).is_err());
    }

    #[test]
    fn round_half_up_rule() {
        assert_eq!(round_half_up(2.5), 3);
        assert_eq!(round_half_up(2.4999), 2);
        assert_eq!(round_half_up(0.0), 0);
    }

    #[test]
    fn sampling_edge_cases() {
        assert!(sample_arrivals(&[0; 8], 3600.0, 1)
            .unwrap()
            .arrivals
            .is_empty());
        let f = sample_arrivals(&[1, 0, 0, 0, 0, 0, 0, 0], 3600.0, 1).unwrap();
        assert_eq!(f.arrivals.len(), 1);
        assert_eq!(f.arrivals[0].movement, 0);
        assert!((0.0..3600.0).contains(&f.arrivals[0].time));
        assert!(sample_arrivals(&[1], 0.0, 1).is_err());
    }

    #[test]
    fn sampling_preserves_table_counts() {
        let v = [164, 332, 73, 308, 339, 58, 25, 45];
        let f = sample_arrivals(&v, 3600.0, 3).unwrap();
        let counts = f.movement_counts(8);
        assert_eq!(counts, v.iter().map(|&x| u64::from(x)).collect::<Vec<_>>());
        assert!(f.arrivals.windows(2).all(|w| w[0].time <= w[1].time));
    }

    #[test]
    fn training_set_cardinality_and_determinism() {
        let bases = table_i_bases();
        let set = make_training_set(&bases, 3600.0, 42).unwrap();
        assert_eq!(set.len(), 25);
        assert_eq!(set, make_training_set(&bases, 3600.0, 42).unwrap());
        assert_eq!(make_training_set(&bases[..1], 3600.0, 42).unwrap().len(), 5);
        assert!(make_training_set(&[], 3600.0, 42).is_err());
    }

    #[test]
    fn appending_a_base_keeps_existing_scenarios() {
        let bases = table_i_bases();
        let small = make_training_set(&bases[..2], 3600.0, 7).unwrap();
        let big = make_training_set(&bases, 3600.0, 7).unwrap();
        assert_eq!(small.scenarios[..], big.scenarios[..10]);
    }

    #[test]
    fn test_set_shape() {
        let set = make_test_scenarios(&table_i_bases(), 3600.0, 42).unwrap();
        assert_eq!(set.len(), 5);
        let kinds: Vec<_> = set.scenarios.iter().map(|s| s.provenance.kind).collect();
        assert_eq!(&kinds[..3], &[ScenarioKind::TestVariability; 3]);
        assert_eq!(&kinds[3..], &[ScenarioKind::TestVolume; 2]);
        assert_eq!(
            set,
            make_test_scenarios(&table_i_bases(), 3600.0, 42).unwrap()
        );
    }

    #[test]
    fn volume_scenarios_scale_total_by_thirty_percent() {
        let bases = table_i_bases();
        let mut ratios = Vec::new();
        for seed in 0..40 {
            let set = make_test_scenarios(&bases, 3600.0, seed).unwrap();
            for (j, s) in set.scenarios[3..].iter().enumerate() {
                let base_total = bases[j + 1].total() as f64;
                ratios.push(s.arrivals.len() as f64 / base_total);
            }
        }
        let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
        assert!((mean - 1.3).abs() < 0.02, "mean ratio {mean}");
        assert!(ratios
            .iter()
            .all(|r| (1.3 * 0.9 - 0.01..=1.3 * 1.1 + 0.01).contains(r)));
    }

    const COUNTS_HEADER: &str = "# schema=1\ntimestamp_iso8601,movement,count\n";

    #[test]
    fn single_bucket_ingest() {
        let text = format!("{COUNTS_HEADER}2023-05-02T07:00:00,3,7\n");
        let w = CountWindow::parse("07:00", "08:00").unwrap();
        let b = ingest_counts(&text, "t", w, 8).unwrap();
        assert_eq!(b.volumes, vec![0, 0, 7, 0, 0, 0, 0, 0]);
        assert_eq!(b.label, "07:00-08:00");
    }

    #[test]
    fn empty_window_is_an_error() {
        let text = format!("{COUNTS_HEADER}2023-05-02T07:00:00,3,7\n");
        let w = CountWindow::parse("09:00", "10:00").unwrap();
        assert!(matches!(
            ingest_counts(&text, "t", w, 8),
            Err(Error::EmptyWindow(_))
        ));
        // rows present but all zero is a different failure
        let zero = format!("{COUNTS_HEADER}2023-05-02T09:00:00,3,0\n");
        let err = ingest_counts(&zero, "t", w, 8).unwrap_err();
        assert!(matches!(err, Error::Argument(_)));
    }

    #[test]
    fn malformed_row_reports_line() {
        let text = format!("{COUNTS_HEADER}2023-05-02T07:00:00,3,7\n2023-05-02T07:05:00,x,1\n");
        let w = CountWindow::parse("07:00", "08:00").unwrap();
        match ingest_counts(&text, "counts.csv", w, 8) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn misaligned_window_rejected() {
        assert!(CountWindow::parse("07:03", "08:00").is_err());
        assert!(CountWindow::parse("08:00", "07:00").is_err());
    }

    #[test]
    fn bases_file_roundtrip() {
        let bases = table_iii_bases();
        let text = bases_to_csv(&bases);
        assert_eq!(parse_bases(&text, "b").unwrap(), bases);
    }

    #[test]
    fn flow_and_set_files_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let set = make_training_set(&table_i_bases()[..1], 600.0, 3).unwrap();
        set.write_dir(dir.path()).unwrap();
        let back = ScenarioSet::read_dir(dir.path()).unwrap();
        assert_eq!(back, set);
        assert_eq!(back.digest(), set.digest());
    }

    #[test]
    fn base_scenarios_keep_exact_volumes() {
        let bases = table_iii_bases();
        let set = make_base_scenarios(&bases, 3600.0, 4).unwrap();
        assert_eq!(set.len(), 3);
        for (flow, base) in set.scenarios.iter().zip(&bases) {
            assert_eq!(flow.label(), base.label);
            let want: Vec<u64> = base.volumes.iter().map(|&v| u64::from(v)).collect();
            assert_eq!(flow.movement_counts(8), want);
        }
    }
}
