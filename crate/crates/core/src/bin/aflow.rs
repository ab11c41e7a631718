use std::path::{Path, PathBuf};
use std::process::ExitCode;

use aflow::harness::{
    self, emit_report, load_classifier, load_flow, parse_list, prepare_data, run_attack_suite_with, save_classifier,
    save_flow, train_classifier, train_flow, ExperimentConfig, Method, Mode,
};
use aflow::{Error, Result};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "aflow", version, about = "Latent-space flow attacks and baselines on small image tasks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the normalizing flow and save it as OUT/flow.json.
    TrainFlow(Common),
    /// Train the classifier and save it as OUT/classifier.json.
    TrainClassifier(Common),
    /// Run the attack grid and write ASR tables.
    Attack(Common),
    /// Run the attack grid with image-quality metrics.
    EvaluateQuality(Common),
    /// Run the attack grid with the Mahalanobis and LID detectors.
    EvaluateDetection(Common),
    /// Run the full configured experiment and write every report file.
    Report(Common),
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (flat JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Random seed for data, training and attacks.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for checkpoints and reports.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Budgets in units of 1/255, comma separated.
    #[arg(long)]
    epsilon: Option<String>,
    /// Attack methods, comma separated: aflow, fgsm, bim, pgd, mifgsm.
    #[arg(long)]
    method: Option<String>,
    /// untargeted or targeted.
    #[arg(long)]
    mode: Option<String>,
    /// Target label in targeted mode.
    #[arg(long)]
    target: Option<usize>,
}

impl Common {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(o) = &self.out {
            cfg.out_dir = o.clone();
        }
        if let Some(e) = &self.epsilon {
            cfg.epsilons = parse_list(e)?;
            cfg.detection_epsilon = None;
        }
        if let Some(m) = &self.method {
            cfg.methods = parse_list::<Method>(m)?;
        }
        if let Some(m) = &self.mode {
            cfg.mode = m.parse::<Mode>()?;
        }
        if self.target.is_some() {
            cfg.target = self.target;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("serializable") + "\n";
    std::fs::write(path, text).map_err(|e| Error::Io {
        path: path.into(),
        source: e,
    })
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.into(),
        source: e,
    })
}

fn run_suite(cfg: ExperimentConfig) -> Result<()> {
    let out = cfg.out_dir.clone();
    ensure_dir(&out)?;
    let data = prepare_data(&cfg)?;
    let clf_path = out.join("classifier.json");
    let classifier = if clf_path.exists() {
        load_classifier(&clf_path)?
    } else {
        let (model, _) = train_classifier(&cfg, &data.train)?;
        save_classifier(&model, &clf_path)?;
        model
    };
    let flow = if cfg.methods.contains(&Method::Aflow) {
        let flow_path = out.join("flow.json");
        Some(if flow_path.exists() {
            load_flow(&flow_path)?
        } else {
            let (model, _) = train_flow(&cfg, &data.train)?;
            save_flow(&model, &flow_path)?;
            model
        })
    } else {
        None
    };
    let report = run_attack_suite_with(&cfg, &data, &classifier, flow.as_ref())?;
    emit_report(&report, &out)?;
    print!("{}", harness::report::asr_csv(&report));
    if !report.metrics.is_empty() {
        print!("{}", harness::report::metrics_csv(&report));
    }
    if !report.detection.is_empty() {
        print!("{}", harness::report::detection_csv(&report));
    }
    eprintln!("wrote {}", out.join("report.json").display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::TrainFlow(c) => {
            let cfg = c.config()?;
            ensure_dir(&cfg.out_dir)?;
            let data = prepare_data(&cfg)?;
            let (flow, trace) = train_flow(&cfg, &data.train)?;
            save_flow(&flow, &cfg.out_dir.join("flow.json"))?;
            write_json(&cfg.out_dir.join("flow_trace.json"), &trace)?;
            println!("initial_nll={} final_nll={}", trace.initial_nll, trace.final_nll);
            Ok(())
        }
        Command::TrainClassifier(c) => {
            let cfg = c.config()?;
            ensure_dir(&cfg.out_dir)?;
            let data = prepare_data(&cfg)?;
            let (model, trace) = train_classifier(&cfg, &data.train)?;
            save_classifier(&model, &cfg.out_dir.join("classifier.json"))?;
            write_json(&cfg.out_dir.join("classifier_trace.json"), &trace)?;
            println!(
                "train_accuracy={} test_accuracy={}",
                trace.final_accuracy(),
                model.accuracy(&data.test)?
            );
            Ok(())
        }
        Command::Attack(c) => {
            let mut cfg = c.config()?;
            cfg.metrics = false;
            cfg.detection = false;
            run_suite(cfg)
        }
        Command::EvaluateQuality(c) => {
            let mut cfg = c.config()?;
            cfg.metrics = true;
            cfg.detection = false;
            run_suite(cfg)
        }
        Command::EvaluateDetection(c) => {
            let mut cfg = c.config()?;
            cfg.metrics = false;
            cfg.detection = true;
            run_suite(cfg)
        }
        Command::Report(c) => run_suite(c.config()?),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
