use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use robotseg_core::dataset::{load_dataset, write_record, DatasetRecord};
use robotseg_core::energy::Params;
use robotseg_core::eval::{evaluate, EvalSpec, Protocol, Transfer};
use robotseg_core::linesearch::{coordinate_learn, ParamName, SweepSpec};
use robotseg_core::maxmargin::{crossval_dynamic, CrossvalConfig, DynamicConfig};
use robotseg_core::robot::{run_robot, PolicyKind, Robot};
use robotseg_core::segment::{start_session, SegmenterConfig, System};
use robotseg_core::synthetic::synthetic_suite;
use robotseg_service::{serve, ServiceConfig};

#[derive(Parser)]
#[command(
    name = "robotseg",
    version,
    about = "Interactive segmentation with a robot user"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a procedural dataset with ground truth and brush strokes.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 10)]
        count: usize,
        #[arg(long, default_value_t = 2024)]
        seed: u64,
    },
    /// Score a segmentation system on a dataset.
    Evaluate {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        w_c: Option<f64>,
        #[arg(long)]
        w_i: Option<f64>,
        #[arg(long)]
        w_beta: Option<f64>,
        /// Directory for per_image.csv, summary.json and curves.jsonl.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the robot on one image and write its trace as JSONL.
    Robot {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        image: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-parameter line search with leave-one-out selection.
    LearnLinesearch {
        #[command(flatten)]
        run: RunArgs,
        /// JSON object mapping w_c / w_i / w_beta to grids; missing ones use defaults.
        #[arg(long)]
        grid_file: Option<PathBuf>,
        /// Sweep order.
        #[arg(long, value_delimiter = ',', default_value = "w_c,w_i,w_beta")]
        params: Vec<ParamName>,
        #[arg(long, default_value = "sigmoid", value_parser = parse_transfer)]
        transfer: Transfer,
        #[arg(long)]
        out: PathBuf,
    },
    /// Interleaved max-margin training under k-fold cross-validation.
    LearnMaxmargin {
        #[arg(long, env = "ROBOTSEG_DATASET")]
        dataset: PathBuf,
        /// Total slack price; defaults to 10 per image.
        #[arg(long = "C")]
        c: Option<f64>,
        /// Training strokes per image.
        #[arg(long = "T", default_value_t = 25)]
        t: usize,
        #[arg(long, default_value_t = 5)]
        folds: usize,
        #[arg(long, default_value_t = 1.0)]
        w_beta: f64,
        /// Evaluation budget on held-out images.
        #[arg(long = "B", default_value_t = 20)]
        budget: usize,
        #[arg(long, default_value = "center")]
        strategy: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Start the HTTP session service.
    Serve {
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        port: Option<u16>,
        #[arg(long)]
        state_dir: Option<PathBuf>,
        #[arg(long)]
        static_dir: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, env = "ROBOTSEG_DATASET")]
    dataset: PathBuf,
    #[arg(long, default_value = "GCS")]
    system: System,
    #[arg(long, default_value = "dynamic")]
    protocol: Protocol,
    #[arg(long = "B", default_value_t = 20)]
    budget: usize,
    #[arg(long, default_value = "center")]
    policy: String,
    /// Seed of the random policy.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Candidate stride of the roisize and hamming policies.
    #[arg(long, default_value_t = robotseg_core::robot::DEFAULT_STRIDE)]
    stride: usize,
    /// JSON segmenter config; flags above override its system.
    #[arg(long)]
    config: Option<PathBuf>,
}

fn parse_transfer(s: &str) -> Result<Transfer, String> {
    match s {
        "sigmoid" => Ok(Transfer::Sigmoid),
        "identity" => Ok(Transfer::Identity),
        _ => Err(format!("unknown transfer {s:?}")),
    }
}

fn policy(name: &str, seed: u64, stride: usize) -> Result<PolicyKind> {
    Ok(match PolicyKind::parse(name)? {
        PolicyKind::Random { .. } => PolicyKind::Random { seed },
        PolicyKind::RoiSize { .. } => PolicyKind::RoiSize { stride },
        PolicyKind::Hamming { .. } => PolicyKind::Hamming { stride },
        p => p,
    })
}

impl RunArgs {
    fn dataset(&self) -> Result<Vec<DatasetRecord>> {
        let d = load_dataset(&self.dataset)
            .with_context(|| format!("loading {}", self.dataset.display()))?;
        if d.is_empty() {
            bail!("no images in {}", self.dataset.display());
        }
        Ok(d)
    }

    fn config(&self) -> Result<SegmenterConfig> {
        let mut cfg = match &self.config {
            Some(p) => serde_json::from_str(&fs::read_to_string(p)?)
                .with_context(|| format!("parsing {}", p.display()))?,
            None => SegmenterConfig::new(self.system, Params::default()),
        };
        cfg.system = self.system;
        cfg.validate()?;
        Ok(cfg)
    }

    fn spec(&self) -> Result<EvalSpec> {
        Ok(match self.protocol {
            Protocol::StaticTrimap => EvalSpec::static_trimap(),
            Protocol::StaticBrush => EvalSpec::static_brush(),
            Protocol::DynamicBrush => {
                EvalSpec::dynamic(self.budget, policy(&self.policy, self.seed, self.stride)?)
            }
        })
    }
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    serde_json::to_writer_pretty(BufWriter::new(File::create(path)?), value)?;
    Ok(())
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Synth { out, count, seed } => {
            for rec in synthetic_suite(count, seed)? {
                write_record(&out, &rec)?;
            }
            println!("wrote {count} images to {}", out.display());
        }
        Command::Evaluate {
            run,
            w_c,
            w_i,
            w_beta,
            out,
        } => {
            let data = run.dataset()?;
            let mut cfg = run.config()?;
            cfg.params.w_c = w_c.unwrap_or(cfg.params.w_c);
            cfg.params.w_i = w_i.unwrap_or(cfg.params.w_i);
            cfg.params.w_beta = w_beta.unwrap_or(cfg.params.w_beta);
            cfg.params.validate()?;
            let report = evaluate(&data, &cfg, &run.spec()?);
            fs::create_dir_all(&out)?;
            report.write_csv(File::create(out.join("per_image.csv"))?)?;
            fs::write(out.join("summary.json"), report.summary_json()?)?;
            report.write_curves_jsonl(BufWriter::new(File::create(out.join("curves.jsonl"))?))?;
            let s = &report.summary;
            println!(
                "{} images ({} failed), Er sigmoid {:.4}, Er identity {:.4}",
                s.evaluated,
                s.failed,
                s.er_sigmoid.as_ref().map_or(f64::NAN, |m| m.mean),
                s.er_identity.as_ref().map_or(f64::NAN, |m| m.mean)
            );
        }
        Command::Robot { run, image, out } => {
            let data = run.dataset()?;
            let Some(rec) = data.iter().find(|r| r.name == image) else {
                bail!("no image {image}")
            };
            let mut session = start_session(rec.image.clone(), rec.brush.clone(), run.config()?)?;
            let mut robot = Robot::new(policy(&run.policy, run.seed, run.stride)?);
            let trace = run_robot(&mut session, &mut robot, &rec.gt, run.budget)?;
            trace.write_jsonl(BufWriter::new(File::create(&out)?))?;
            println!("er {:.3} -> {:.3}", trace.errors[0], trace.final_error());
        }
        Command::LearnLinesearch {
            run,
            grid_file,
            params,
            transfer,
            out,
        } => {
            let data = run.dataset()?;
            let cfg = run.config()?;
            let eval = run.spec()?;
            let grids: BTreeMap<String, Vec<f64>> = match &grid_file {
                Some(p) => serde_json::from_str(&fs::read_to_string(p)?)
                    .with_context(|| format!("parsing {}", p.display()))?,
                None => BTreeMap::new(),
            };
            if let Some(k) = grids.keys().find(|k| k.parse::<ParamName>().is_err()) {
                bail!("grid file names unknown parameter {k:?}");
            }
            let specs: Vec<SweepSpec> = params
                .iter()
                .map(|&p| {
                    let mut s = SweepSpec::new(p, eval);
                    s.transfer = transfer;
                    if let Some(g) = grids.get(p.name()) {
                        s.grid = g.clone();
                    }
                    s
                })
                .collect();
            let result = coordinate_learn(&data, &cfg, &specs)?;
            write_json(&out, &result)?;
            for (p, sd) in &result.stdevs {
                println!("{} = {:.4} ± {:.4}", p.name(), p.get(&result.params), sd);
            }
        }
        Command::LearnMaxmargin {
            dataset,
            c,
            t,
            folds,
            w_beta,
            budget,
            strategy,
            out,
        } => {
            let data =
                load_dataset(&dataset).with_context(|| format!("loading {}", dataset.display()))?;
            let strategy = PolicyKind::parse(&strategy)?;
            let mut dynamic = DynamicConfig::new(data.len(), t);
            dynamic.strategy = strategy;
            if let Some(c) = c {
                dynamic.c = c;
            }
            let cfg = CrossvalConfig {
                folds,
                dynamic,
                w_beta,
                gmm_k: robotseg_core::color::DEFAULT_GMM_K,
                gmm_seed: 0,
                eval: EvalSpec::dynamic(budget, PolicyKind::Center),
            };
            let report = crossval_dynamic(&data, &cfg)?;
            write_json(&out, &report)?;
            for f in &report.folds {
                let w = f.training.trajectory.last().expect("w^0");
                println!(
                    "fold {}: w_unary {:.4}, w_i {:.4}, w_c {:.4}",
                    f.fold, w[0], w[1], w[2]
                );
            }
        }
        Command::Serve {
            dataset,
            port,
            state_dir,
            static_dir,
        } => {
            let mut cfg = ServiceConfig::from_env()?;
            cfg.dataset = dataset.or(cfg.dataset);
            cfg.port = port.unwrap_or(cfg.port);
            cfg.state_dir = state_dir.or(cfg.state_dir);
            cfg.static_dir = static_dir.or(cfg.static_dir);
            tokio::runtime::Runtime::new()?.block_on(serve(cfg))?;
        }
    }
    Ok(())
}

fn main() {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    if let Err(e) = run(Cli::parse().command) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
