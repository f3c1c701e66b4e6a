//! Experiment matrices: train, adapt and evaluate every algorithm on every
//! test scenario, then emit the long-form, pivoted, timing and KL-curve
//! reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dqn::{fixed_time_policy, max_pressure_policy, train_dqn, QPolicy, RandomPolicy};
use crate::error::{Error, Result};
use crate::meta::{adapt_to_scenario, train_metalight};
use crate::metrics::{
    average_training_distribution, distribution_from_counts, kl_distance, MovementDistribution,
};
use crate::nn::QNetworkParams;
use crate::rng::{derive_seed, stream};
use crate::scenario::{
    make_base_scenarios, make_test_scenarios, make_training_set, read_bases, read_text,
    table_i_bases, table_iii_bases, BaseDistribution, FlowSpec, ScenarioSet, SetKind,
};
use crate::settings::Settings;
use crate::sim::{run_episode, IntersectionConfig, Policy};

pub const REPORT_LONG: &str = "report_long.csv";
pub const REPORT_PIVOT: &str = "report_pivot.csv";
pub const TIMING: &str = "timing.csv";
pub const CURVE: &str = "curve.csv";
/// Present in the output directory while (or because) a run is incomplete.
pub const INCOMPLETE_MARKER: &str = "INCOMPLETE";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Metalight,
    RlAdapt,
    RlNoAdapt,
    FixedTime,
    MaxPressure,
    Random,
}

impl Algorithm {
    pub const ALL: [Algorithm; 6] = [
        Algorithm::Metalight,
        Algorithm::RlAdapt,
        Algorithm::RlNoAdapt,
        Algorithm::FixedTime,
        Algorithm::MaxPressure,
        Algorithm::Random,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Algorithm::Metalight => "metalight",
            Algorithm::RlAdapt => "rl_adapt",
            Algorithm::RlNoAdapt => "rl_no_adapt",
            Algorithm::FixedTime => "fixed_time",
            Algorithm::MaxPressure => "max_pressure",
            Algorithm::Random => "random",
        }
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.tag() == s)
            .ok_or_else(|| Error::Argument(format!("unknown algorithm `{s}`")))
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.tag())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRecord {
    pub algorithm: Algorithm,
    pub scenario: String,
    pub avg_travel_time: f64,
    pub completed: usize,
    pub residual: usize,
    /// Nats; `None` when no training distribution was attached.
    pub kl_to_train: Option<f64>,
    pub seed: u64,
    pub wall_time: f64,
}

/// What every evaluation needs besides the policy.
#[derive(Debug, Clone)]
pub struct EvalContext {
    pub config: IntersectionConfig,
    pub train_distribution: Option<MovementDistribution>,
    pub kl_epsilon: f64,
}

impl EvalContext {
    pub fn kl_to_train(&self, scenario: &FlowSpec) -> Result<Option<f64>> {
        let Some(train) = &self.train_distribution else {
            return Ok(None);
        };
        let test = distribution_from_counts(&scenario.movement_counts(self.config.n_movements))?;
        kl_distance(train, &test, self.kl_epsilon).map(Some)
    }
}

/// One episode of `policy` on `scenario`; the policy is expected to act greedily.
pub fn evaluate(
    ctx: &EvalContext,
    algorithm: Algorithm,
    policy: &mut dyn Policy,
    scenario: &FlowSpec,
    seed: u64,
) -> Result<EvalRecord> {
    let kl_to_train = ctx.kl_to_train(scenario)?;
    let started = Instant::now();
    let res = run_episode(&ctx.config, scenario, policy, seed)?;
    let avg_travel_time = res.avg_travel_time.ok_or_else(|| {
        Error::Argument(format!("scenario `{}` has no vehicles", scenario.label()))
    })?;
    Ok(EvalRecord {
        algorithm,
        scenario: scenario.label().to_string(),
        avg_travel_time,
        completed: res.completed_count,
        residual: res.residual_count,
        kl_to_train,
        seed,
        wall_time: started.elapsed().as_secs_f64(),
    })
}

/// Greedy (epsilon = 0) evaluation of a Q-network.
pub fn evaluate_params(
    ctx: &EvalContext,
    algorithm: Algorithm,
    params: &QNetworkParams,
    scenario: &FlowSpec,
    seed: u64,
) -> Result<EvalRecord> {
    let mut policy = QPolicy {
        params,
        config: &ctx.config,
        epsilon: 0.0,
    };
    evaluate(ctx, algorithm, &mut policy, scenario, seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TestMode {
    /// Three variability-shift and two volume-shift scenarios.
    #[default]
    Shifted,
    /// One unperturbed scenario per base.
    PerBase,
}

/// Where a scenario set comes from: exactly one of `builtin`, `bases`, `dir`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SetSpec {
    /// `table-i` or `table-iii`.
    pub builtin: Option<String>,
    /// Base-distribution CSV.
    pub bases: Option<PathBuf>,
    /// Pre-generated scenario directory (`set.toml` plus flow files).
    pub dir: Option<PathBuf>,
    /// Keep only these base labels, in this order.
    pub labels: Option<Vec<String>>,
    /// Test sets only.
    pub mode: TestMode,
    pub seed: u64,
    /// Defaults to the intersection horizon.
    pub horizon: Option<f64>,
}

impl SetSpec {
    fn resolve(&mut self, root: &Path) {
        for p in [&mut self.bases, &mut self.dir].into_iter().flatten() {
            if p.is_relative() {
                *p = root.join(&*p);
            }
        }
    }

    fn check(&self, what: &str) -> Result<()> {
        let sources = [
            self.builtin.is_some(),
            self.bases.is_some(),
            self.dir.is_some(),
        ];
        if sources.iter().filter(|&&s| s).count() != 1 {
            return Err(Error::Config(format!(
                "{what}: give exactly one of builtin, bases, dir"
            )));
        }
        if self.dir.is_some() && self.labels.is_some() {
            return Err(Error::Config(format!(
                "{what}: labels only apply to base distributions"
            )));
        }
        let file = self
            .bases
            .as_ref()
            .map(|b| b.to_path_buf())
            .or(self.dir.as_ref().map(|d| d.join("set.toml")));
        if let Some(f) = file {
            if !f.exists() {
                return Err(Error::NotFound(f));
            }
        }
        Ok(())
    }

    fn load_bases(&self) -> Result<Vec<BaseDistribution>> {
        let all = match (&self.builtin, &self.bases) {
            (Some(b), _) => match b.as_str() {
                "table-i" => table_i_bases(),
                "table-iii" => table_iii_bases(),
                other => return Err(Error::Config(format!("unknown builtin base set `{other}`"))),
            },
            (None, Some(path)) => read_bases(path)?,
            (None, None) => return Err(Error::Internal("set spec has no base source".into())),
        };
        let Some(labels) = &self.labels else {
            return Ok(all);
        };
        labels
            .iter()
            .map(|l| {
                all.iter()
                    .find(|b| &b.label == l)
                    .cloned()
                    .ok_or_else(|| Error::Config(format!("no base distribution labelled `{l}`")))
            })
            .collect()
    }

    pub fn build_training(&self, config: &IntersectionConfig) -> Result<ScenarioSet> {
        if let Some(dir) = &self.dir {
            return ScenarioSet::read_dir(dir);
        }
        make_training_set(
            &self.load_bases()?,
            self.horizon.unwrap_or(config.horizon),
            self.seed,
        )
    }

    pub fn build_test(&self, config: &IntersectionConfig) -> Result<ScenarioSet> {
        if let Some(dir) = &self.dir {
            return ScenarioSet::read_dir(dir);
        }
        let bases = self.load_bases()?;
        let horizon = self.horizon.unwrap_or(config.horizon);
        match self.mode {
            TestMode::Shifted => make_test_scenarios(&bases, horizon, self.seed),
            TestMode::PerBase => make_base_scenarios(&bases, horizon, self.seed),
        }
    }
}

/// Versioned experiment description. Relative paths resolve against the
/// manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentManifest {
    pub schema: u32,
    /// Optional settings file (see [`crate::settings`]).
    #[serde(default)]
    pub config: Option<PathBuf>,
    pub training: SetSpec,
    pub test: SetSpec,
    pub algorithms: Vec<Algorithm>,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
}

impl ExperimentManifest {
    pub fn from_toml(text: &str, source: &str, root: &Path) -> Result<Self> {
        let mut m: ExperimentManifest =
            toml::from_str(text).map_err(|e| Error::parse(source, 0, e.message()))?;
        if let Some(c) = &mut m.config {
            if c.is_relative() {
                *c = root.join(&*c);
            }
        }
        if m.out_dir.is_relative() {
            m.out_dir = root.join(&m.out_dir);
        }
        m.training.resolve(root);
        m.test.resolve(root);
        m.validate()?;
        Ok(m)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let root = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&read_text(path)?, &path.display().to_string(), root)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema != 1 {
            return Err(Error::Config(format!(
                "unsupported manifest schema {}",
                self.schema
            )));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("manifest needs at least one seed".into()));
        }
        if self.algorithms.is_empty() {
            return Err(Error::Config("manifest lists no algorithms".into()));
        }
        let mut seen = self.algorithms.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.algorithms.len() {
            return Err(Error::Config("algorithms listed twice".into()));
        }
        if let Some(c) = &self.config {
            if !c.exists() {
                return Err(Error::NotFound(c.clone()));
            }
        }
        self.training.check("training")?;
        self.test.check("test")
    }

    pub fn settings(&self) -> Result<Settings> {
        match &self.config {
            Some(p) => Settings::load(p),
            None => Ok(Settings::default()),
        }
    }
}

/// Mean wall time of one of the three timed tasks.
#[derive(Debug, Clone, PartialEq)]
pub struct TimingRow {
    pub task: &'static str,
    pub mean_seconds: Option<f64>,
    pub runs: usize,
}

#[derive(Debug, Clone)]
pub struct EvalReport {
    /// Every (algorithm, scenario, seed) cell.
    pub records: Vec<EvalRecord>,
    /// Means over seeds, one per (algorithm, scenario).
    pub summary: Vec<EvalRecord>,
    pub timing: Vec<TimingRow>,
    pub scenario_labels: Vec<String>,
    pub algorithms: Vec<Algorithm>,
}

#[derive(Default)]
struct Timers {
    train_base: Vec<f64>,
    adapt: Vec<f64>,
    from_scratch: Vec<f64>,
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

impl Timers {
    fn rows(&self) -> Vec<TimingRow> {
        [
            ("train_base_model", &self.train_base),
            ("adapt_base_model", &self.adapt),
            ("train_from_scratch", &self.from_scratch),
        ]
        .into_iter()
        .map(|(task, xs)| TimingRow {
            task,
            mean_seconds: mean(xs),
            runs: xs.len(),
        })
        .collect()
    }
}

fn run_seed(
    settings: &Settings,
    ctx: &EvalContext,
    algorithms: &[Algorithm],
    train: &ScenarioSet,
    test: &ScenarioSet,
    seed: u64,
    timers: &mut Timers,
) -> Result<Vec<EvalRecord>> {
    let config = &ctx.config;
    let eval_seed = |i: usize| derive_seed(seed, stream::EVAL, i as u64);
    let mut out = Vec::new();
    for &alg in algorithms {
        match alg {
            Algorithm::Metalight => {
                let hyper = crate::meta::MetaHyper {
                    seed,
                    ..settings.meta.clone()
                };
                let run =
                    train_metalight(config, train, &hyper).map_err(|e| e.in_stage("train-meta"))?;
                timers.train_base.push(run.wall_time);
                for (i, flow) in test.scenarios.iter().enumerate() {
                    let ad = adapt_to_scenario(
                        &run.checkpoint,
                        flow,
                        None,
                        config,
                        derive_seed(seed, stream::ADAPT, i as u64),
                    )
                    .map_err(|e| e.in_stage("adapt"))?;
                    timers.adapt.push(ad.wall_time);
                    out.push(
                        evaluate_params(ctx, alg, &ad.params, flow, eval_seed(i))
                            .map_err(|e| e.in_stage("evaluate"))?,
                    );
                }
            }
            Algorithm::RlNoAdapt => {
                let hyper = crate::dqn::DqnHyper {
                    seed,
                    ..settings.dqn.clone()
                };
                let run = train_dqn(config, train, &hyper).map_err(|e| e.in_stage("train-dqn"))?;
                timers.from_scratch.push(run.wall_time);
                for (i, flow) in test.scenarios.iter().enumerate() {
                    out.push(
                        evaluate_params(ctx, alg, &run.params, flow, eval_seed(i))
                            .map_err(|e| e.in_stage("evaluate"))?,
                    );
                }
            }
            Algorithm::RlAdapt => {
                for (i, flow) in test.scenarios.iter().enumerate() {
                    let hyper = crate::dqn::DqnHyper {
                        seed: derive_seed(seed, stream::POLICY, i as u64),
                        ..settings.dqn.clone()
                    };
                    let own = ScenarioSet {
                        scenarios: vec![flow.clone()],
                        kind: SetKind::Custom,
                    };
                    let run =
                        train_dqn(config, &own, &hyper).map_err(|e| e.in_stage("train-dqn"))?;
                    timers.from_scratch.push(run.wall_time);
                    out.push(
                        evaluate_params(ctx, alg, &run.params, flow, eval_seed(i))
                            .map_err(|e| e.in_stage("evaluate"))?,
                    );
                }
            }
            Algorithm::FixedTime | Algorithm::MaxPressure | Algorithm::Random => {
                for (i, flow) in test.scenarios.iter().enumerate() {
                    let mut policy: Box<dyn Policy> = match alg {
                        Algorithm::FixedTime => Box::new(
                            fixed_time_policy(config, &settings.baselines.green_split)
                                .map_err(|e| e.in_stage("evaluate"))?,
                        ),
                        Algorithm::MaxPressure => Box::new(max_pressure_policy(config)),
                        _ => Box::new(RandomPolicy::new(config)),
                    };
                    out.push(
                        evaluate(ctx, alg, policy.as_mut(), flow, eval_seed(i))
                            .map_err(|e| e.in_stage("evaluate"))?,
                    );
                }
            }
        }
    }
    Ok(out)
}

/// Means over seeds per (algorithm, scenario), in algorithm-then-scenario order.
pub fn summarize(
    records: &[EvalRecord],
    algorithms: &[Algorithm],
    scenarios: &[String],
) -> Result<Vec<EvalRecord>> {
    let mut groups: BTreeMap<(Algorithm, &str), Vec<&EvalRecord>> = BTreeMap::new();
    for r in records {
        groups
            .entry((r.algorithm, r.scenario.as_str()))
            .or_default()
            .push(r);
    }
    let mut out = Vec::with_capacity(algorithms.len() * scenarios.len());
    for &alg in algorithms {
        for label in scenarios {
            let g = groups
                .get(&(alg, label.as_str()))
                .ok_or_else(|| Error::Internal(format!("no records for {alg} on {label}")))?;
            let n = g.len() as f64;
            out.push(EvalRecord {
                algorithm: alg,
                scenario: label.clone(),
                avg_travel_time: g.iter().map(|r| r.avg_travel_time).sum::<f64>() / n,
                completed: g.iter().map(|r| r.completed).sum::<usize>() / g.len(),
                residual: g.iter().map(|r| r.residual).sum::<usize>() / g.len(),
                kl_to_train: g[0].kl_to_train,
                seed: g[0].seed,
                wall_time: g.iter().map(|r| r.wall_time).sum::<f64>() / n,
            });
        }
    }
    Ok(out)
}

/// `round(100 (t - best) / best)`.
pub fn percent_delta(t: f64, best: f64) -> i64 {
    (100.0 * (t - best) / best).round() as i64
}

pub fn long_csv(records: &[EvalRecord]) -> String {
    let mut out =
        String::from("algorithm,scenario,seed,avg_travel_time_s,completed,residual,kl_to_train\n");
    for r in records {
        let kl = r.kl_to_train.map(|k| k.to_string()).unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.algorithm, r.scenario, r.seed, r.avg_travel_time, r.completed, r.residual, kl
        )
        .expect("string write");
    }
    out
}

/// Algorithms x scenarios. Each cell reads `mean [min..max] (+N%)`, or
/// `(best)` for the lowest mean in its column.
pub fn pivot_csv(
    records: &[EvalRecord],
    algorithms: &[Algorithm],
    scenarios: &[String],
) -> Result<String> {
    let mut stats: BTreeMap<(Algorithm, &str), (f64, f64, f64)> = BTreeMap::new();
    for &alg in algorithms {
        for label in scenarios {
            let times: Vec<f64> = records
                .iter()
                .filter(|r| r.algorithm == alg && &r.scenario == label)
                .map(|r| r.avg_travel_time)
                .collect();
            let m = mean(&times)
                .ok_or_else(|| Error::Internal(format!("no records for {alg} on {label}")))?;
            let lo = times.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = times.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            stats.insert((alg, label.as_str()), (m, lo, hi));
        }
    }
    let best: Vec<f64> = scenarios
        .iter()
        .map(|l| {
            algorithms
                .iter()
                .map(|&a| stats[&(a, l.as_str())].0)
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    if best.iter().any(|&b| !(b > 0.0)) {
        return Err(Error::Internal("non-positive best travel time".into()));
    }
    let mut out = String::from("algorithm");
    for l in scenarios {
        out.push(',');
        out.push_str(l);
    }
    out.push('\n');
    for &alg in algorithms {
        out.push_str(alg.tag());
        for (l, &b) in scenarios.iter().zip(&best) {
            let (m, lo, hi) = stats[&(alg, l.as_str())];
            let mark = if m == b {
                "(best)".to_string()
            } else {
                format!("(+{}%)", percent_delta(m, b))
            };
            write!(out, ",{m:.2} [{lo:.2}..{hi:.2}] {mark}").expect("string write");
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn timing_csv(rows: &[TimingRow]) -> String {
    let mut out = String::from("task,mean_seconds,runs\n");
    for r in rows {
        let s = r
            .mean_seconds
            .map(|s| format!("{s:.3}"))
            .unwrap_or_default();
        writeln!(out, "{},{},{}", r.task, s, r.runs).expect("string write");
    }
    out
}

/// Travel time against KL distance, sorted ascending by KL (stable).
pub fn emit_curve(records: &[EvalRecord]) -> Result<String> {
    let mut points = records
        .iter()
        .map(|r| {
            r.kl_to_train.map(|k| (k, r)).ok_or_else(|| {
                Error::Argument(format!(
                    "record for {} on {} has no kl_to_train",
                    r.algorithm, r.scenario
                ))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    points.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out = String::from("kl,algorithm,avg_travel_time_s\n");
    for (k, r) in points {
        writeln!(out, "{},{},{}", k, r.algorithm, r.avg_travel_time).expect("string write");
    }
    Ok(out)
}

/// Inverse of [`long_csv`]; wall times are not stored and read back as 0.
pub fn parse_long_csv(text: &str, source: &str) -> Result<Vec<EvalRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let headers = rdr
        .headers()
        .map_err(|e| Error::parse(source, 1, e.to_string()))?
        .clone();
    let want = [
        "algorithm",
        "scenario",
        "seed",
        "avg_travel_time_s",
        "completed",
        "residual",
        "kl_to_train",
    ];
    if headers.iter().collect::<Vec<_>>() != want {
        return Err(Error::parse(
            source,
            1,
            format!("expected header `{}`", want.join(",")),
        ));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            Error::parse(
                source,
                e.position().map_or(0, |p| p.line() as usize),
                e.to_string(),
            )
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let field = |i: usize| -> Result<&str> { Ok(&rec[i]) };
        let num = |i: usize| -> Result<f64> {
            rec[i]
                .parse()
                .map_err(|_| Error::parse(source, line, format!("bad number `{}`", &rec[i])))
        };
        let int = |i: usize| -> Result<u64> {
            rec[i]
                .parse()
                .map_err(|_| Error::parse(source, line, format!("bad integer `{}`", &rec[i])))
        };
        out.push(EvalRecord {
            algorithm: field(0)?
                .parse()
                .map_err(|e: Error| Error::parse(source, line, e.to_string()))?,
            scenario: field(1)?.to_string(),
            seed: int(2)?,
            avg_travel_time: num(3)?,
            completed: int(4)? as usize,
            residual: int(5)? as usize,
            kl_to_train: if rec[6].is_empty() {
                None
            } else {
                Some(num(6)?)
            },
            wall_time: 0.0,
        });
    }
    if out.is_empty() {
        return Err(Error::parse(source, 1, "no records"));
    }
    Ok(out)
}

pub fn read_long_csv(path: &Path) -> Result<Vec<EvalRecord>> {
    parse_long_csv(&read_text(path)?, &path.display().to_string())
}

fn first_appearance<T: PartialEq + Clone>(items: impl Iterator<Item = T>) -> Vec<T> {
    let mut out: Vec<T> = Vec::new();
    for it in items {
        if !out.contains(&it) {
            out.push(it);
        }
    }
    out
}

/// Writes the pivot and curve files derived from long-form records.
/// Algorithms and scenarios keep their order of first appearance.
pub fn write_reports(dir: &Path, records: &[EvalRecord]) -> Result<()> {
    let algorithms = first_appearance(records.iter().map(|r| r.algorithm));
    let scenarios = first_appearance(records.iter().map(|r| r.scenario.clone()));
    let pivot = pivot_csv(records, &algorithms, &scenarios)?;
    let curve = emit_curve(&summarize(records, &algorithms, &scenarios)?)?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_file(dir, REPORT_PIVOT, &pivot)?;
    write_file(dir, CURVE, &curve)
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<()> {
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| Error::io(&path, e))
}

fn execute(manifest: &ExperimentManifest) -> Result<EvalReport> {
    let out = &manifest.out_dir;
    let settings = manifest.settings().map_err(|e| e.in_stage("config"))?;
    let config = settings.intersection.clone();
    let train = manifest
        .training
        .build_training(&config)
        .map_err(|e| e.in_stage("scenarios"))?;
    let test = manifest
        .test
        .build_test(&config)
        .map_err(|e| e.in_stage("scenarios"))?;
    train
        .write_dir(&out.join("train"))
        .map_err(|e| e.in_stage("scenarios"))?;
    test.write_dir(&out.join("test"))
        .map_err(|e| e.in_stage("scenarios"))?;
    let labels: Vec<String> = test
        .scenarios
        .iter()
        .map(|s| s.label().to_string())
        .collect();
    let mut unique = labels.clone();
    unique.sort();
    unique.dedup();
    if unique.len() != labels.len() {
        return Err(
            Error::Config("test scenario labels are not unique".into()).in_stage("scenarios")
        );
    }
    let ctx = EvalContext {
        train_distribution: Some(
            average_training_distribution(&train, config.n_movements)
                .map_err(|e| e.in_stage("metrics"))?,
        ),
        config,
        kl_epsilon: settings.metrics.kl_epsilon,
    };
    let mut timers = Timers::default();
    let mut records = Vec::new();
    for &seed in &manifest.seeds {
        log::info!("experiment seed {seed}");
        records.extend(run_seed(
            &settings,
            &ctx,
            &manifest.algorithms,
            &train,
            &test,
            seed,
            &mut timers,
        )?);
    }
    let summary =
        summarize(&records, &manifest.algorithms, &labels).map_err(|e| e.in_stage("report"))?;
    Ok(EvalReport {
        records,
        summary,
        timing: timers.rows(),
        scenario_labels: labels,
        algorithms: manifest.algorithms.clone(),
    })
}

/// Runs the whole matrix and writes the four report files into `out_dir`.
///
/// The `INCOMPLETE` marker is written first and removed only after every
/// report file is in place, so a failed run leaves its partial outputs
/// flagged. All files except `timing.csv` are deterministic in the manifest.
pub fn run_experiment(manifest: &ExperimentManifest) -> Result<EvalReport> {
    let out = &manifest.out_dir;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    write_file(out, INCOMPLETE_MARKER, "run in progress\n")?;
    let result = execute(manifest).and_then(|report| {
        write_reports(out, &report.records).map_err(|e| e.in_stage("report"))?;
        write_file(out, REPORT_LONG, &long_csv(&report.records))?;
        write_file(out, TIMING, &timing_csv(&report.timing))?;
        Ok(report)
    });
    match &result {
        Ok(_) => {
            let marker = out.join(INCOMPLETE_MARKER);
            std::fs::remove_file(&marker).map_err(|e| Error::io(&marker, e))?;
        }
        Err(e) => write_file(out, INCOMPLETE_MARKER, &format!("{e}\n"))?,
    }
    result
}
