use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ifaad::data::{self, ClassMapping, CsvSchema, LabeledDataset};
use ifaad::forest_io::{deserialize_forest, serialize_forest};
use ifaad::harness::{self, Arm, ExperimentConfig};
use ifaad::service::{self, ServiceConfig};
use ifaad::session::SessionFile;
use ifaad::{Error, Result};
use ifaad_core::{baseline_rank, AadConfig, FeedbackLoop, Forest, ForestParams, WeightVector};

#[derive(Parser)]
#[command(name = "ifaad", version, about = "Isolation forest with analyst feedback")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a forest from a dataset and write it in the binary forest format.
    Build(Common),
    /// Rank instances by the uniform-weight (plain isolation forest) score.
    Rank {
        #[command(flatten)]
        common: Common,
        /// Use a previously built forest instead of building one.
        #[arg(long)]
        forest: Option<PathBuf>,
    },
    /// Run one simulated-analyst feedback session against ground truth.
    Loop {
        #[command(flatten)]
        common: Common,
        /// Also write the final session file here.
        #[arg(long)]
        session_out: Option<PathBuf>,
    },
    /// Multi-run experiment: discovery curves with 95% intervals per arm.
    Experiment {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 10)]
        runs: usize,
    },
    /// Start the HTTP labeling service.
    Serve {
        #[arg(long, env = "IFAAD_BIND", default_value = "127.0.0.1:8080")]
        bind: String,
        #[arg(long, env = "IFAAD_DATA_DIR")]
        data_dir: Option<PathBuf>,
        #[arg(long, env = "IFAAD_SESSION_DIR")]
        session_dir: Option<PathBuf>,
    },
    /// Turn a raw benchmark file into a canonical CSV plus manifest.
    Prepare {
        /// One of: abalone, ann-thyroid-1v3, cardiotocography, covtype,
        /// mammography, shuttle, yeast.
        #[arg(long)]
        preset: String,
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "prepared")]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args, Clone)]
struct Common {
    /// `synthetic`, `synthetic:<nominal>:<anomalies>:<seed>`, or a CSV path.
    #[arg(long, default_value = "synthetic")]
    dataset: String,
    /// Label column of a raw CSV (default: canonical `label` column).
    #[arg(long)]
    label_column: Option<String>,
    /// Comma-separated raw classes treated as nominal.
    #[arg(long, value_delimiter = ',')]
    nominal: Vec<String>,
    /// Comma-separated raw classes treated as anomalies.
    #[arg(long, value_delimiter = ',')]
    anomaly: Vec<String>,
    /// if-aad, if-aad-leaf, if-baseline; `experiment` also accepts `all`.
    #[arg(long, default_value = "if-aad")]
    arm: String,
    #[arg(long, default_value_t = 60)]
    budget: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.03)]
    tau: f64,
    #[arg(long = "ca", default_value_t = 100.0)]
    c_a: f64,
    #[arg(long = "cxi", default_value_t = 0.001)]
    c_xi: f64,
    #[arg(long, default_value_t = 100)]
    trees: usize,
    #[arg(long, default_value_t = 256)]
    subsample: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn dataset(&self) -> Result<LabeledDataset> {
        if let Some(spec) = self.dataset.strip_prefix("synthetic") {
            let parts: Vec<&str> = spec.split(':').skip(1).collect();
            return match parts.as_slice() {
                [] => Ok(data::make_synthetic_2d(500, 15, 0)),
                [n, a, s] => {
                    let num = |v: &str| v.parse::<u64>().map_err(|_| Error::Config(format!("bad synthetic spec {:?}", self.dataset)));
                    let (n, a) = (num(n)? as usize, num(a)? as usize);
                    if n == 0 || a == 0 {
                        return Err(Error::Config("synthetic counts must be at least 1".into()));
                    }
                    Ok(data::make_synthetic_2d(n, a, num(s)?))
                }
                _ => Err(Error::Config(format!("bad synthetic spec {:?}", self.dataset))),
            };
        }
        let mut schema = CsvSchema::canonical();
        if let Some(col) = &self.label_column {
            schema.label_column = col.clone();
        }
        if !self.nominal.is_empty() || !self.anomaly.is_empty() {
            schema.mapping = ClassMapping::new(self.nominal.clone(), self.anomaly.clone())?;
        }
        data::load_csv(Path::new(&self.dataset), &schema)
    }

    fn arm(&self) -> Result<Arm> {
        Arm::parse(&self.arm).ok_or_else(|| Error::Config(format!("unknown arm {:?}", self.arm)))
    }

    fn forest_params(&self, arm: Arm) -> ForestParams {
        ForestParams {
            num_trees: self.trees,
            subsample_size: self.subsample,
            scheme: arm.scheme(),
            seed: self.seed,
        }
    }

    fn aad(&self) -> AadConfig {
        AadConfig {
            tau: self.tau,
            c_a: self.c_a,
            c_xi: self.c_xi,
            budget: self.budget,
            ..AadConfig::default()
        }
    }
}

/// Writes to `--out` when given, stdout otherwise.
fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(path) => fs::write(path, bytes)?,
        None => std::io::stdout().write_all(bytes)?,
    }
    Ok(())
}

fn build(c: &Common) -> Result<()> {
    let ds = c.dataset()?;
    let params = c.forest_params(c.arm()?);
    let forest = harness::build_forest_parallel(&ds, &params)?;
    let out = c.out.clone().unwrap_or_else(|| PathBuf::from("forest.ifaf"));
    fs::write(&out, serialize_forest(&forest))?;
    println!(
        "{}",
        serde_json::json!({
            "forest": out.display().to_string(),
            "trees": forest.trees().len(),
            "nodes": forest.num_nodes(),
            "features": forest.num_features(),
            "scheme": forest.scheme().name(),
            "seed": forest.seed(),
        })
    );
    Ok(())
}

fn rank(c: &Common, forest_path: Option<&Path>) -> Result<()> {
    let ds = c.dataset()?;
    let forest: Forest = match forest_path {
        Some(p) => deserialize_forest(&fs::read(p)?)?,
        None => harness::build_forest_parallel(&ds, &c.forest_params(Arm::IfBaseline))?,
    };
    let order = baseline_rank(&forest, &ds.instances)?;
    let w = WeightVector::uniform(forest.num_nodes());
    let mut out = csv::Writer::from_writer(Vec::new());
    out.write_record(["rank", "instance_id", "score", "truth"])?;
    for (rank, &id) in order.iter().enumerate() {
        let z = forest.traverse(&ds.instances[id].features)?;
        out.write_record([
            (rank + 1).to_string(),
            id.to_string(),
            format!("{:?}", ifaad_core::score(&z, &w)?),
            ds.truth[id].as_str().to_owned(),
        ])?;
    }
    emit(c.out.as_deref(), &out.into_inner().map_err(|e| Error::Io(e.into_error()))?)
}

fn run_loop(c: &Common, session_out: Option<&Path>) -> Result<()> {
    let ds = c.dataset()?;
    let arm = c.arm()?;
    let params = c.forest_params(arm);
    let forest = harness::build_forest_parallel(&ds, &params)?;
    let mut out = csv::Writer::from_writer(Vec::new());
    out.write_record(["iteration", "instance_id", "label", "anomalies_found"])?;
    let queried: Vec<usize> = if arm == Arm::IfBaseline {
        let mut order = baseline_rank(&forest, &ds.instances)?;
        order.truncate(c.budget);
        order
    } else {
        let mut feedback = FeedbackLoop::new(forest.traverse_all(&ds.instances)?.into(), c.aad())?;
        while feedback.remaining_budget() > 0 {
            feedback.step(&mut |id| ds.label_of(id))?;
        }
        if let Some(path) = session_out {
            SessionFile::snapshot("cli", &ds.name, &params, &feedback, 0, 0).save(path)?;
        }
        feedback.state().query_history.iter().map(|&(id, _)| id).collect()
    };
    for (i, (&id, found)) in queried.iter().zip(harness::cumulative(&queried, &ds.truth)).enumerate() {
        out.write_record([
            (i + 1).to_string(),
            id.to_string(),
            ds.truth[id].as_str().to_owned(),
            found.to_string(),
        ])?;
    }
    emit(c.out.as_deref(), &out.into_inner().map_err(|e| Error::Io(e.into_error()))?)
}

fn experiment(c: &Common, runs: usize) -> Result<()> {
    let ds = c.dataset()?;
    let arms = if c.arm == "all" { Arm::ALL.to_vec() } else { vec![c.arm()?] };
    let out_dir = c.out.clone().unwrap_or_else(|| PathBuf::from("results"));
    fs::create_dir_all(&out_dir)?;
    let mut curves = Vec::new();
    for arm in arms {
        let cfg = ExperimentConfig {
            arm,
            budget: c.budget,
            num_runs: runs,
            base_seed: c.seed,
            num_trees: c.trees,
            subsample_size: c.subsample,
            aad: c.aad(),
        };
        let curve = harness::run_experiment(&ds, &cfg)?;
        harness::export_results(&curve, &ds, &out_dir.join(format!("{}.csv", arm.name())))?;
        curves.push(curve);
    }
    print!("{}", harness::compare_arms(&curves)?.render());
    Ok(())
}

fn prepare(preset: &str, input: &Path, out: &Path, seed: u64) -> Result<()> {
    let preset = data::preset(preset).ok_or_else(|| Error::Config(format!("unknown preset {preset:?}")))?;
    let raw = fs::read_to_string(input)?;
    let mut ds = data::prepare(&preset, &raw, seed)?;
    ds.provenance = format!("{} ({})", input.display(), preset.name);
    let manifest = data::write_prepared(&ds, &preset.schema.mapping, out)?;
    println!("{}", serde_json::to_string(&manifest)?);
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Build(c) => build(&c)?,
        Command::Rank { common, forest } => rank(&common, forest.as_deref())?,
        Command::Loop { common, session_out } => run_loop(&common, session_out.as_deref())?,
        Command::Experiment { common, runs } => experiment(&common, runs)?,
        Command::Prepare {
            preset,
            input,
            out,
            seed,
        } => prepare(&preset, &input, &out, seed)?,
        Command::Serve {
            bind,
            data_dir,
            session_dir,
        } => {
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(service::serve(&bind, ServiceConfig { data_dir, session_dir }))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = e.downcast_ref::<Error>().map_or("error", Error::code);
            eprintln!("{}", serde_json::json!({ "error": { "code": code, "message": e.to_string() } }));
            ExitCode::FAILURE
        }
    }
}
