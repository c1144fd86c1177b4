use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use log::info;

use enrnn_core::analysis::{
    jacobian_norms, jacobian_norms_per_example, probe_batch, spectrum_csv, spectrum_dump, sweep, theorem_bound_report,
    BoundAudit,
};
use enrnn_core::net::Activation;
use enrnn_core::tasks::{write_enr1, Task, TaskBatch};
use enrnn_core::train::{
    gradcheck, train, write_manifest, Checkpoint, Datasets, Model, ModelKind, OptimizerKind, TrainConfig, TrainState,
    Trainer,
};

#[derive(Parser, Debug)]
#[command(name = "enrnn", version, about = "Train and analyse eigenvalue-normalized recurrent networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a model, writing metrics, checkpoint and manifest to --out.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Continue from a checkpoint instead of initializing.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on its test set.
    Eval {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Compare analytic gradients with central finite differences.
    Gradcheck {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
        #[arg(long, default_value_t = 1e-5)]
        step: f64,
    },
    /// Jacobian-norm heatmaps of the short and long states.
    Heatmap {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Write one grid pair per example instead of the batch average.
        #[arg(long)]
        per_example: bool,
        /// Also audit the contraction bound at these lags (e.g. `1,2,5` or `1-20`).
        #[arg(long)]
        bound_lags: Option<String>,
    },
    /// Eigenvalues of the effective short-state matrix.
    Spectrum {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Train over a grid of (split, hidden) values.
    Sweep {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Long-state sizes, comma separated.
        #[arg(long, value_delimiter = ',')]
        splits: Vec<usize>,
        /// Total hidden sizes, comma separated; defaults to the configured size.
        #[arg(long, value_delimiter = ',')]
        hiddens: Vec<usize>,
    },
    /// Write the seeded train and test sets as ENR1 tensors.
    GenData {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
}

/// Config file plus per-key overrides.
#[derive(Args, Debug, Default)]
struct ConfigArgs {
    /// JSON config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    task: Option<Task>,
    #[arg(long)]
    seq_len: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    model: Option<ModelKind>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    split: Option<usize>,
    #[arg(long, action = clap::ArgAction::Set)]
    coupling: Option<bool>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    lr_recurrent: Option<f64>,
    #[arg(long)]
    optimizer: Option<OptimizerKind>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    neg_ones: Option<usize>,
    #[arg(long)]
    activation: Option<Activation>,
    #[arg(long)]
    train_size: Option<usize>,
    #[arg(long)]
    test_size: Option<usize>,
    #[arg(long)]
    eval_every: Option<usize>,
    #[arg(long)]
    forget_bias: Option<f64>,
    #[arg(long)]
    clip: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl ConfigArgs {
    /// `base`, then the config file, then flags; validated.
    fn resolve(&self, base: TrainConfig) -> anyhow::Result<TrainConfig> {
        let c = self.merge(base)?;
        c.validate()?;
        Ok(c)
    }

    fn merge(&self, base: TrainConfig) -> anyhow::Result<TrainConfig> {
        let mut c = match &self.config {
            Some(path) => TrainConfig::load(path)?,
            None => base,
        };
        macro_rules! set {
            ($($field:ident),*) => {
                $(if let Some(v) = &self.$field { c.$field = v.clone(); })*
            };
        }
        set!(task, seq_len, batch_size, iterations, model, hidden, split, coupling, epsilon, lr, lr_recurrent);
        set!(optimizer, seed, activation, train_size, test_size, eval_every, forget_bias);
        if self.neg_ones.is_some() {
            c.neg_ones = self.neg_ones;
        }
        if self.clip.is_some() {
            c.clip = self.clip;
        }
        if let Some(out) = &self.out {
            c.out = Some(out.display().to_string());
        }
        Ok(c)
    }

    fn overrides_batch_size(&self) -> anyhow::Result<bool> {
        if self.batch_size.is_some() {
            return Ok(true);
        }
        match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).with_context(|| path.display().to_string())?;
                let value: serde_json::Value = serde_json::from_str(&text)?;
                Ok(value.get("batch_size").is_some())
            }
            None => Ok(false),
        }
    }
}

fn out_dir(cfg: &TrainConfig) -> Option<PathBuf> {
    cfg.out.as_ref().map(PathBuf::from)
}

fn require_out(cfg: &TrainConfig) -> anyhow::Result<PathBuf> {
    let dir = out_dir(cfg).ok_or_else(|| Usage::new("an output directory is required (--out or `out` in the config)"))?;
    std::fs::create_dir_all(&dir).with_context(|| dir.display().to_string())?;
    Ok(dir)
}

/// Usage error raised after parsing.
#[derive(Debug)]
struct Usage(String);

impl Usage {
    fn new(msg: impl Into<String>) -> anyhow::Error {
        anyhow::Error::new(Usage(msg.into()))
    }
}

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

/// Model and resolved config: from a checkpoint when given, otherwise freshly initialized.
fn load_model(cfg: &ConfigArgs, checkpoint: Option<&Path>) -> anyhow::Result<(Model, TrainConfig)> {
    match checkpoint {
        Some(path) => {
            let ck = Checkpoint::load(path).with_context(|| path.display().to_string())?;
            let state = TrainState::from_checkpoint(&ck)?;
            let resolved = cfg.resolve(ck.config.clone())?;
            Ok((state.model, resolved))
        }
        None => {
            let resolved = cfg.resolve(TrainConfig::default())?;
            let state = TrainState::new(resolved.clone())?;
            Ok((state.model, resolved))
        }
    }
}

fn parse_lags(text: &str) -> anyhow::Result<Vec<usize>> {
    let mut lags = Vec::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if let Some((a, b)) = part.split_once('-') {
            let (a, b): (usize, usize) = (a.trim().parse()?, b.trim().parse()?);
            if a > b {
                bail!("empty lag range `{part}`");
            }
            lags.extend(a..=b);
        } else {
            lags.push(part.parse()?);
        }
    }
    Ok(lags)
}

fn write(dir: &Path, name: &str, text: &str) -> anyhow::Result<()> {
    let path = dir.join(name);
    std::fs::write(&path, text).with_context(|| path.display().to_string())
}

fn cmd_train(cfg: &ConfigArgs, resume: Option<&Path>) -> anyhow::Result<ExitCode> {
    let (metrics, config) = match resume {
        Some(path) => {
            let ck = Checkpoint::load(path).with_context(|| path.display().to_string())?;
            let config = cfg.resolve(ck.config.clone())?;
            let comparable = |c: &TrainConfig| TrainConfig { iterations: 0, eval_every: 0, out: None, ..c.clone() };
            if comparable(&config) != comparable(&ck.config) {
                return Err(Usage::new("a resumed run may only change iterations, eval_every and out"));
            }
            let dir = require_out(&config)?;
            write_manifest(&dir, "train", &config, Some(&serde_json::json!({ "resumed_from": path.display().to_string() })))?;
            let mut trainer = Trainer::resume(&ck)?;
            trainer.state.config = config.clone();
            (trainer.run(Some(&dir))?, config)
        }
        None => {
            let config = cfg.resolve(TrainConfig::default())?;
            let dir = require_out(&config)?;
            write_manifest(&dir, "train", &config, None)?;
            (train(config.clone(), Some(&dir))?.0, config)
        }
    };
    match metrics.last_eval() {
        Some(loss) => println!("final eval loss {loss}"),
        None => println!("no evaluation recorded"),
    }
    info!("outputs in {}", config.out.as_deref().unwrap_or(""));
    Ok(ExitCode::SUCCESS)
}

fn cmd_eval(cfg: &ConfigArgs, checkpoint: &Path) -> anyhow::Result<ExitCode> {
    let ck = Checkpoint::load(checkpoint).with_context(|| checkpoint.display().to_string())?;
    let state = TrainState::from_checkpoint(&ck)?;
    let config = cfg.resolve(ck.config.clone())?;
    let data = Datasets::generate(&TrainConfig { train_size: 0, ..config.clone() })?;
    let loss = state.model.evaluate(&data.test, 1000)?;
    println!("{} test loss {loss}", config.task);
    if let Some(dir) = out_dir(&config) {
        std::fs::create_dir_all(&dir)?;
        let result = serde_json::json!({ "checkpoint": checkpoint.display().to_string(), "iteration": state.iteration, "test_loss": loss });
        write(&dir, "eval.json", &(serde_json::to_string_pretty(&result)? + "\n"))?;
        write_manifest(&dir, "eval", &config, None)?;
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_gradcheck(cfg: &ConfigArgs, tolerance: f64, step: f64) -> anyhow::Result<ExitCode> {
    let mut base = TrainConfig::default();
    if !cfg.overrides_batch_size()? {
        base.batch_size = 3;
    }
    let config = cfg.resolve(base)?;
    let report = gradcheck(&config, step, tolerance)?;
    let text = report.to_text();
    print!("{text}");
    println!("max relative error {:e} (tolerance {tolerance:e})", report.max_error());
    if let Some(dir) = out_dir(&config) {
        std::fs::create_dir_all(&dir)?;
        write(&dir, "gradcheck.csv", &text)?;
        write_manifest(&dir, "gradcheck", &config, Some(&serde_json::json!({ "instance_seed": report.seed })))?;
    }
    Ok(if report.passed() { ExitCode::SUCCESS } else { ExitCode::from(2) })
}

fn enrnn_of(model: Model) -> anyhow::Result<enrnn_core::net::EnrnnParams> {
    match model {
        Model::Enrnn(p) => Ok(p),
        Model::Lstm(_) => Err(Usage::new("this command needs an ENRNN model")),
    }
}

fn probe(config: &TrainConfig, params: &enrnn_core::net::EnrnnParams) -> anyhow::Result<TaskBatch> {
    if config.task.input_size() != params.u_l.cols() {
        return Err(Usage::new(format!("task {} does not match the model input size", config.task)));
    }
    Ok(probe_batch(config)?)
}

fn cmd_heatmap(cfg: &ConfigArgs, checkpoint: Option<&Path>, per_example: bool, bound_lags: Option<&str>) -> anyhow::Result<ExitCode> {
    let (model, config) = load_model(cfg, checkpoint)?;
    let params = enrnn_of(model)?;
    let batch = probe(&config, &params)?;
    let dir = require_out(&config)?;
    if per_example {
        for (b, (short, long)) in jacobian_norms_per_example(&params, &batch.inputs)?.iter().enumerate() {
            write(&dir, &format!("heatmap_short_{b}.csv"), &short.to_csv())?;
            write(&dir, &format!("heatmap_long_{b}.csv"), &long.to_csv())?;
        }
    } else {
        let (short, long) = jacobian_norms(&params, &batch.inputs)?;
        write(&dir, "heatmap_short.csv", &short.to_csv())?;
        write(&dir, "heatmap_long.csv", &long.to_csv())?;
    }
    let mut code = ExitCode::SUCCESS;
    if let Some(spec) = bound_lags {
        let lags = parse_lags(spec).map_err(|e| Usage::new(format!("--bound-lags: {e}")))?;
        match theorem_bound_report(&params, &batch.inputs, &lags)? {
            BoundAudit::Report(report) => {
                write(&dir, "bound_report.csv", &report.to_csv())?;
                println!("bound audit {}", if report.passed() { "passed" } else { "FAILED" });
                if !report.passed() {
                    code = ExitCode::from(2);
                }
            }
            BoundAudit::Refused(reason) => println!("bound audit refused: {reason}"),
        }
    }
    write_manifest(&dir, "heatmap", &config, checkpoint.map(|p| serde_json::json!({ "checkpoint": p.display().to_string() })).as_ref())?;
    Ok(code)
}

fn cmd_spectrum(cfg: &ConfigArgs, checkpoint: Option<&Path>) -> anyhow::Result<ExitCode> {
    let (model, config) = load_model(cfg, checkpoint)?;
    let params = enrnn_of(model)?;
    let text = spectrum_csv(&spectrum_dump(&params.w_s)?);
    match out_dir(&config) {
        Some(dir) => {
            std::fs::create_dir_all(&dir)?;
            write(&dir, "spectrum.csv", &text)?;
            write_manifest(&dir, "spectrum", &config, checkpoint.map(|p| serde_json::json!({ "checkpoint": p.display().to_string() })).as_ref())?;
        }
        None => print!("{text}"),
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_sweep(cfg: &ConfigArgs, splits: &[usize], hiddens: &[usize]) -> anyhow::Result<ExitCode> {
    let base = cfg.merge(TrainConfig::default())?;
    let dir = require_out(&base)?;
    let hiddens = if hiddens.is_empty() { vec![base.hidden] } else { hiddens.to_vec() };
    let splits = if splits.is_empty() { vec![base.split] } else { splits.to_vec() };
    let configs: Vec<TrainConfig> = hiddens
        .iter()
        .flat_map(|&n| splits.iter().filter(move |&&q| q <= n).map(move |&q| (q, n)))
        .map(|(q, n)| TrainConfig { split: q, hidden: n, neg_ones: base.neg_ones.map(|k| k.min(q)), ..base.clone() })
        .collect();
    if configs.is_empty() {
        return Err(Usage::new("no (split, hidden) pair with split ≤ hidden"));
    }
    write_manifest(&dir, "sweep", &base, Some(&serde_json::json!({ "splits": splits, "hiddens": hiddens })))?;
    let table = sweep(&configs, Some(&dir))?;
    println!("{} runs, {} failed", table.runs.len(), table.failures());
    Ok(ExitCode::SUCCESS)
}

fn cmd_gen_data(cfg: &ConfigArgs) -> anyhow::Result<ExitCode> {
    let config = cfg.resolve(TrainConfig::default())?;
    let dir = require_out(&config)?;
    let data = Datasets::generate(&config)?;
    let dump = |name: &str, batch: &TaskBatch| -> anyhow::Result<()> {
        write_enr1(&dir.join(format!("{name}_inputs.enr1")), &batch.inputs.shape(), batch.inputs.data())?;
        let targets = batch.targets_dense();
        write_enr1(&dir.join(format!("{name}_targets.enr1")), &[targets.rows(), targets.cols()], targets.data())?;
        Ok(())
    };
    if let Some(train) = &data.train {
        dump("train", train)?;
    }
    dump("test", &data.test)?;
    write_manifest(&dir, "gen-data", &config, None)?;
    Ok(ExitCode::SUCCESS)
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match &cli.command {
        Command::Train { cfg, resume } => cmd_train(cfg, resume.as_deref()),
        Command::Eval { cfg, checkpoint } => cmd_eval(cfg, checkpoint),
        Command::Gradcheck { cfg, tolerance, step } => cmd_gradcheck(cfg, *tolerance, *step),
        Command::Heatmap { cfg, checkpoint, per_example, bound_lags } => {
            cmd_heatmap(cfg, checkpoint.as_deref(), *per_example, bound_lags.as_deref())
        }
        Command::Spectrum { cfg, checkpoint } => cmd_spectrum(cfg, checkpoint.as_deref()),
        Command::Sweep { cfg, splits, hiddens } => cmd_sweep(cfg, splits, hiddens),
        Command::GenData { cfg } => cmd_gen_data(cfg),
    }
}

fn exit_code(err: &anyhow::Error) -> ExitCode {
    match err.downcast_ref::<enrnn_core::Error>() {
        Some(e) if e.is_numerical() => ExitCode::from(2),
        _ => ExitCode::from(1),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lag_lists_and_ranges() {
        assert_eq!(parse_lags("1,3-5, 9").unwrap(), vec![1, 3, 4, 5, 9]);
        assert!(parse_lags("5-2").is_err());
        assert!(parse_lags("x").is_err());
    }

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, r#"{"seed": 3, "hidden": 12, "split": 4}"#).unwrap();
        let args = ConfigArgs { config: Some(path), seed: Some(7), ..Default::default() };
        let c = args.resolve(TrainConfig::default()).unwrap();
        assert_eq!((c.seed, c.hidden, c.split), (7, 12, 4));
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }

    #[test]
    fn unknown_flag_is_usage_error() {
        let err = Cli::try_parse_from(["enrnn", "train", "--bogus"]).unwrap_err();
        assert!(err.use_stderr());
    }
}
