//! `tscshift` — command-line front end over the workbench pipeline.
//!
//! Exit codes: 0 success, 2 missing file, 3 validation failure, 4 internal
//! error. Failures print one line `error[<tag>]: <message>` on stderr.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use tscshift::dqn::{self, fixed_time_policy, max_pressure_policy, train_dqn, RandomPolicy};
use tscshift::error::ErrorClass;
use tscshift::eval::{
    self, evaluate, evaluate_params, long_csv, read_long_csv, run_experiment, write_reports,
    Algorithm, EvalContext, ExperimentManifest,
};
use tscshift::meta::{ablate_steps, ablation_csv, adapt_to_scenario, train_metalight, MetaCheckpoint};
use tscshift::metrics::{kl_distance, load_distribution};
use tscshift::nn::QNetworkParams;
use tscshift::rng::{derive_seed, stream};
use tscshift::scenario::{
    ingest_counts_csv, make_base_scenarios, make_test_scenarios, make_training_set, read_bases,
    table_i_bases, table_iii_bases, write_bases, CountWindow, FlowSpec, ScenarioSet, SetKind,
};
use tscshift::settings::Settings;
use tscshift::sim::Policy;
use tscshift::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "tscshift", version, about = "Distribution-shift workbench for RL traffic signal control")]
struct Cli {
    /// Root seed for every random stream.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// TOML file overriding defaults ([intersection], [dqn], [meta], [metrics], [baselines]).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory [default: out].
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate training and test scenario sets from base distributions.
    Gen(GenArgs),
    /// Sum 5-minute movement counts inside a time-of-day window into a base distribution.
    Ingest(IngestArgs),
    /// Print the KL distance D(a | b) between two distributions (6 decimals).
    Kl(KlArgs),
    /// Train a FRAP++ Q-network with DQN.
    TrainDqn(TrainDqnArgs),
    /// Meta-train an initialization with first-order MetaLight.
    TrainMeta(TrainMetaArgs),
    /// Adapt a meta-trained initialization to one scenario.
    Adapt(AdaptArgs),
    /// Evaluate a policy on scenarios, or run a full experiment manifest.
    Eval(EvalArgs),
    /// Sweep the number of adaptation steps.
    Ablate(AblateArgs),
    /// Build the pivot table and KL curve from a long-form report.
    Report(ReportArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Builtin {
    TableI,
    TableIii,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum TestShape {
    /// Three variability-shift and two volume-shift scenarios.
    Shifted,
    /// One unperturbed scenario per base.
    PerBase,
}

#[derive(Args, Debug)]
struct GenArgs {
    /// Base-distribution CSV (`label,mov1,...`); defaults to the built-in synthetic bases.
    #[arg(long, conflicts_with = "builtin")]
    bases: Option<PathBuf>,
    #[arg(long, value_enum)]
    builtin: Option<Builtin>,
    /// Seconds of arrivals per scenario; defaults to the intersection horizon.
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long, value_enum, default_value = "shifted")]
    test_shape: TestShape,
}

#[derive(Args, Debug)]
struct IngestArgs {
    /// CSV with `timestamp_iso8601,movement,count` rows.
    #[arg(long)]
    counts: PathBuf,
    /// Window start, HH:MM.
    #[arg(long)]
    start: String,
    /// Window end (exclusive), HH:MM.
    #[arg(long)]
    end: String,
    /// Label for the base distribution (defaults to the window).
    #[arg(long)]
    label: Option<String>,
    /// Append to an existing `bases.csv` under --out instead of replacing it.
    #[arg(long)]
    append: bool,
}

#[derive(Args, Debug)]
struct KlArgs {
    /// Training-side distribution: flow file, one-row `label,mov...` file, or scenario directory.
    #[arg(long)]
    a: PathBuf,
    /// Test-side distribution, same formats.
    #[arg(long)]
    b: PathBuf,
    /// Zero-cell smoothing; defaults to the configured value.
    #[arg(long, allow_negative_numbers = true)]
    epsilon: Option<f64>,
}

#[derive(Args, Debug)]
struct TrainDqnArgs {
    /// Scenario directory to train on.
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    episodes: Option<usize>,
}

#[derive(Args, Debug)]
struct TrainMetaArgs {
    /// Scenario directory to meta-train on.
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    iterations: Option<usize>,
}

#[derive(Args, Debug)]
struct AdaptArgs {
    /// Checkpoint written by `train-meta`.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Flow file of the new scenario.
    #[arg(long)]
    scenario: PathBuf,
    /// Adaptation steps; defaults to the checkpoint's value.
    #[arg(long)]
    steps: Option<usize>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Experiment manifest; runs the whole matrix (the output directory is --out if given).
    #[arg(long, conflicts_with_all = ["scenarios", "params", "policy"])]
    manifest: Option<PathBuf>,
    /// Scenario directory or single flow file.
    #[arg(long)]
    scenarios: Option<PathBuf>,
    /// Q-network parameter file to evaluate greedily.
    #[arg(long, conflicts_with = "policy")]
    params: Option<PathBuf>,
    /// Baseline policy: fixed_time, max_pressure or random.
    #[arg(long)]
    policy: Option<String>,
    /// Algorithm tag recorded for --params.
    #[arg(long, default_value = "rl_no_adapt")]
    algorithm: String,
    /// Training scenario directory; when given, records carry kl_to_train.
    #[arg(long)]
    train: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct AblateArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Scenario directory.
    #[arg(long)]
    scenarios: PathBuf,
    /// Comma-separated adaptation step counts.
    #[arg(long, value_delimiter = ',', default_values_t = tscshift::meta::DEFAULT_ABLATION_KS)]
    ks: Vec<usize>,
}

#[derive(Args, Debug)]
struct ReportArgs {
    /// Long-form report (`report_long.csv`).
    #[arg(long)]
    long: PathBuf,
}

impl Cli {
    fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("out"))
    }
}

fn out_file(cli: &Cli, name: &str) -> Result<PathBuf> {
    let dir = cli.out_dir();
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    Ok(dir.join(name))
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn settings(cli: &Cli) -> Result<Settings> {
    match &cli.config {
        Some(p) => Settings::load(p),
        None => Ok(Settings::default()),
    }
}

/// A scenario directory or a single flow file.
fn load_scenarios(path: &Path) -> Result<ScenarioSet> {
    if path.is_dir() {
        ScenarioSet::read_dir(path)
    } else {
        Ok(ScenarioSet { scenarios: vec![FlowSpec::read(path)?], kind: SetKind::Custom })
    }
}

fn gen(cli: &Cli, args: &GenArgs) -> Result<()> {
    let s = settings(cli)?;
    let bases = match (&args.bases, args.builtin) {
        (Some(p), _) => read_bases(p)?,
        (None, Some(Builtin::TableIii)) => table_iii_bases(),
        _ => table_i_bases(),
    };
    let horizon = args.horizon.unwrap_or(s.intersection.horizon);
    let train = make_training_set(&bases, horizon, cli.seed)?;
    let test = match args.test_shape {
        TestShape::Shifted => make_test_scenarios(&bases, horizon, cli.seed)?,
        TestShape::PerBase => make_base_scenarios(&bases, horizon, cli.seed)?,
    };
    write_bases(&out_file(cli, "bases.csv")?, &bases)?;
    train.write_dir(&cli.out_dir().join("train"))?;
    test.write_dir(&cli.out_dir().join("test"))?;
    println!(
        "{} training and {} test scenarios in {}",
        train.len(),
        test.len(),
        cli.out_dir().display()
    );
    Ok(())
}

fn ingest(cli: &Cli, args: &IngestArgs) -> Result<()> {
    let s = settings(cli)?;
    let window = CountWindow::parse(&args.start, &args.end)?;
    let mut base = ingest_counts_csv(&args.counts, window, s.intersection.n_movements)?;
    if let Some(l) = &args.label {
        base.label = l.clone();
    }
    let path = out_file(cli, "bases.csv")?;
    let mut bases = if args.append && path.exists() { read_bases(&path)? } else { Vec::new() };
    bases.retain(|b| b.label != base.label);
    println!("{}: {} vehicles", base.label, base.total());
    bases.push(base);
    write_bases(&path, &bases)
}

fn kl(cli: &Cli, args: &KlArgs) -> Result<()> {
    let s = settings(cli)?;
    let n = s.intersection.n_movements;
    let a = load_distribution(&args.a, n)?;
    let b = load_distribution(&args.b, n)?;
    let d = kl_distance(&a, &b, args.epsilon.unwrap_or(s.metrics.kl_epsilon))?;
    println!("{d:.6}");
    Ok(())
}

fn train_dqn_cmd(cli: &Cli, args: &TrainDqnArgs) -> Result<()> {
    let s = settings(cli)?;
    let set = ScenarioSet::read_dir(&args.train)?;
    let mut hyper = dqn::DqnHyper { seed: cli.seed, ..s.dqn };
    if let Some(e) = args.episodes {
        hyper.episodes = e;
    }
    let run = train_dqn(&s.intersection, &set, &hyper)?;
    run.params.save(&out_file(cli, "dqn.params")?)?;
    write(&out_file(cli, "dqn_log.csv")?, &dqn::training_log_csv(&run.log))?;
    println!("trained {} episodes in {:.1}s", hyper.episodes, run.wall_time);
    Ok(())
}

fn train_meta_cmd(cli: &Cli, args: &TrainMetaArgs) -> Result<()> {
    let s = settings(cli)?;
    let set = ScenarioSet::read_dir(&args.train)?;
    let mut hyper = tscshift::meta::MetaHyper { seed: cli.seed, ..s.meta };
    if let Some(i) = args.iterations {
        hyper.meta_iterations = i;
    }
    let run = train_metalight(&s.intersection, &set, &hyper)?;
    run.checkpoint.save(&out_file(cli, "meta.toml")?)?;
    write(&out_file(cli, "meta_log.csv")?, &dqn::training_log_csv(&run.log))?;
    println!("meta-trained {} iterations in {:.1}s", hyper.meta_iterations, run.wall_time);
    Ok(())
}

fn adapt(cli: &Cli, args: &AdaptArgs) -> Result<()> {
    let s = settings(cli)?;
    let ckpt = MetaCheckpoint::load(&args.checkpoint)?;
    let flow = FlowSpec::read(&args.scenario)?;
    let ad = adapt_to_scenario(&ckpt, &flow, args.steps, &s.intersection, cli.seed)?;
    ad.params.save(&out_file(cli, "adapted.params")?)?;
    println!(
        "adapted with {} steps on {} transitions in {:.2}s",
        ad.steps, ad.transitions, ad.wall_time
    );
    Ok(())
}

fn eval_cmd(cli: &Cli, args: &EvalArgs) -> Result<()> {
    if let Some(m) = &args.manifest {
        let mut manifest = ExperimentManifest::load(m)?;
        if let Some(o) = &cli.out {
            manifest.out_dir = o.clone();
        }
        let report = run_experiment(&manifest)?;
        println!(
            "{} records over {} algorithms x {} scenarios in {}",
            report.records.len(),
            report.algorithms.len(),
            report.scenario_labels.len(),
            manifest.out_dir.display()
        );
        return Ok(());
    }
    let s = settings(cli)?;
    let scenarios_path = args
        .scenarios
        .as_ref()
        .ok_or_else(|| Error::Argument("eval needs --manifest or --scenarios".into()))?;
    let set = load_scenarios(scenarios_path)?;
    let train_distribution = match &args.train {
        Some(t) => Some(load_distribution(t, s.intersection.n_movements)?),
        None => None,
    };
    let ctx = EvalContext {
        config: s.intersection.clone(),
        train_distribution,
        kl_epsilon: s.metrics.kl_epsilon,
    };
    let params = args.params.as_deref().map(QNetworkParams::load).transpose()?;
    let algorithm: Algorithm = match (&params, &args.policy) {
        (Some(_), _) => args.algorithm.parse()?,
        (None, Some(p)) => p.parse()?,
        (None, None) => return Err(Error::Argument("eval needs --params or --policy".into())),
    };
    let mut records = Vec::with_capacity(set.len());
    for (i, flow) in set.scenarios.iter().enumerate() {
        let seed = derive_seed(cli.seed, stream::EVAL, i as u64);
        let rec = match &params {
            Some(p) => evaluate_params(&ctx, algorithm, p, flow, seed)?,
            None => {
                let mut policy: Box<dyn Policy> = match algorithm {
                    Algorithm::FixedTime => {
                        Box::new(fixed_time_policy(&ctx.config, &s.baselines.green_split)?)
                    }
                    Algorithm::MaxPressure => Box::new(max_pressure_policy(&ctx.config)),
                    Algorithm::Random => Box::new(RandomPolicy::new(&ctx.config)),
                    other => {
                        return Err(Error::Argument(format!(
                            "`{other}` is a learned policy; pass --params"
                        )))
                    }
                };
                evaluate(&ctx, algorithm, policy.as_mut(), flow, seed)?
            }
        };
        println!("{}: {:.2}s", rec.scenario, rec.avg_travel_time);
        records.push(rec);
    }
    write(&out_file(cli, "eval.csv")?, &long_csv(&records))
}

fn ablate(cli: &Cli, args: &AblateArgs) -> Result<()> {
    let s = settings(cli)?;
    let ckpt = MetaCheckpoint::load(&args.checkpoint)?;
    let set = ScenarioSet::read_dir(&args.scenarios)?;
    let rows = ablate_steps(&ckpt, &set, &args.ks, &s.intersection, cli.seed)?;
    let csv = ablation_csv(&rows);
    print!("{csv}");
    write(&out_file(cli, "ablation.csv")?, &csv)
}

fn report(cli: &Cli, args: &ReportArgs) -> Result<()> {
    let records = read_long_csv(&args.long)?;
    write_reports(&cli.out_dir(), &records)?;
    println!(
        "wrote {} and {} to {}",
        eval::REPORT_PIVOT,
        eval::CURVE,
        cli.out_dir().display()
    );
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Gen(a) => gen(cli, a),
        Command::Ingest(a) => ingest(cli, a),
        Command::Kl(a) => kl(cli, a),
        Command::TrainDqn(a) => train_dqn_cmd(cli, a),
        Command::TrainMeta(a) => train_meta_cmd(cli, a),
        Command::Adapt(a) => adapt(cli, a),
        Command::Eval(a) => eval_cmd(cli, a),
        Command::Ablate(a) => ablate(cli, a),
        Command::Report(a) => report(cli, a),
    }
}

fn exit_code(e: &Error) -> u8 {
    match e.class() {
        ErrorClass::MissingFile => 2,
        ErrorClass::Validation => 3,
        ErrorClass::Internal => 4,
    }
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            let rendered = e.render().to_string();
            let first = rendered.lines().next().unwrap_or("usage error");
            eprintln!("error[usage]: {}", one_line(first.trim_start_matches("error: ")));
            eprint!("{rendered}");
            return ExitCode::from(3);
        }
    };
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {}", e.tag(), one_line(&e.to_string()));
            ExitCode::from(exit_code(&e))
        }
    }
}
