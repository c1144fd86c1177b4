use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use log::{info, warn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::checkpoint::{Checkpoint, Record};
use super::config::TrainConfig;
use super::model::Model;
use super::optimizer::{OptimizerState, Slot};
use crate::error::{Error, Result};
use crate::net::{EnrnnParams, LstmParams};
use crate::params::{CayleyOrthogonalBlock, EigenNormBlock};
use crate::tasks::TaskBatch;

pub const METRICS_HEADER: &str = "iteration,epoch,train_loss,eval_loss,rho_T,specnorm_WS,active,wall_s";
pub const METRICS_FILE: &str = "metrics.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.ckpt";
pub const LAST_GOOD_FILE: &str = "last_good.ckpt";
pub const MANIFEST_FILE: &str = "run.json";
const EVAL_CHUNK: usize = 1000;

const STREAM_INIT: u64 = 0;
const STREAM_TRAIN_SET: u64 = 1;
pub(crate) const STREAM_TEST_SET: u64 = 2;
const STREAM_BATCHES: u64 = 3;

pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// One row of the metrics file.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricRecord {
    pub iteration: u64,
    pub epoch: u64,
    pub train_loss: f64,
    pub eval_loss: Option<f64>,
    pub rho_t: Option<f64>,
    pub specnorm_ws: Option<f64>,
    pub active: Option<bool>,
    pub wall_s: f64,
}

impl MetricRecord {
    /// CSV fields; `with_wall` controls the wall-clock column.
    pub fn csv_row(&self, with_wall: bool) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut row = format!(
            "{},{},{},{},{},{},{}",
            self.iteration,
            self.epoch,
            self.train_loss,
            opt(self.eval_loss),
            opt(self.rho_t),
            opt(self.specnorm_ws),
            self.active.map(|a| u8::from(a).to_string()).unwrap_or_default(),
        );
        if with_wall {
            let _ = write!(row, ",{:.3}", self.wall_s);
        }
        row
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunMetrics {
    pub records: Vec<MetricRecord>,
}

impl RunMetrics {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(METRICS_HEADER);
        out.push('\n');
        for r in &self.records {
            out.push_str(&r.csv_row(true));
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    /// Evaluation points as `(iteration, eval_loss)`.
    pub fn evals(&self) -> Vec<(u64, f64)> {
        self.records.iter().filter_map(|r| r.eval_loss.map(|l| (r.iteration, l))).collect()
    }

    pub fn last_eval(&self) -> Option<f64> {
        self.evals().last().map(|&(_, l)| l)
    }

    /// First iteration whose evaluation loss is strictly below `threshold`.
    pub fn first_eval_below(&self, threshold: f64) -> Option<u64> {
        self.evals().into_iter().find(|&(_, l)| l < threshold).map(|(i, _)| i)
    }
}

/// Fixed datasets derived from the run seed.
#[derive(Clone, Debug)]
pub struct Datasets {
    /// `None` when batches are drawn fresh each iteration.
    pub train: Option<TaskBatch>,
    pub test: TaskBatch,
}

impl Datasets {
    pub fn generate(cfg: &TrainConfig) -> Result<Self> {
        let train = if cfg.train_size > 0 {
            Some(cfg.task.generate(cfg.train_size, cfg.seq_len, &mut stream_rng(cfg.seed, STREAM_TRAIN_SET))?)
        } else {
            None
        };
        let test = cfg.task.generate(cfg.test_size, cfg.seq_len, &mut stream_rng(cfg.seed, STREAM_TEST_SET))?;
        Ok(Self { train, test })
    }
}

/// Everything needed to continue a run exactly.
#[derive(Clone, Debug)]
pub struct TrainState {
    pub config: TrainConfig,
    pub model: Model,
    pub optimizer: OptimizerState,
    /// Batch sampling stream.
    pub rng: ChaCha8Rng,
    pub iteration: u64,
    pub epoch: u64,
    /// Example order of the current epoch (fixed-dataset mode).
    pub order: Vec<usize>,
    pub cursor: usize,
}

impl TrainState {
    pub fn new(config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let model = Model::init(&config, &mut stream_rng(config.seed, STREAM_INIT))?;
        let mut rng = stream_rng(config.seed, STREAM_BATCHES);
        let mut order: Vec<usize> = (0..config.train_size).collect();
        order.shuffle(&mut rng);
        let optimizer = OptimizerState::new(config.optimizer);
        Ok(Self { config, model, optimizer, rng, iteration: 0, epoch: 0, order, cursor: 0 })
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new(self.config.clone());
        match &self.model {
            Model::Enrnn(p) => {
                ck.insert("enrnn/U_L", Record::matrix(&p.u_l));
                ck.insert("enrnn/U_S", Record::matrix(&p.u_s));
                ck.insert("enrnn/A_upper", Record::vector(p.w_l.upper()));
                ck.insert("enrnn/D", Record::vector(p.w_l.d()));
                ck.insert("enrnn/T", Record::matrix(p.w_s.t()));
                ck.insert("enrnn/active", Record::U64(vec![u64::from(p.w_s.is_active())]));
                if let Some(w_c) = &p.w_c {
                    ck.insert("enrnn/W_C", Record::matrix(w_c));
                }
                ck.insert("enrnn/b_L", Record::vector(&p.b_l));
                ck.insert("enrnn/b_S", Record::vector(&p.b_s));
                ck.insert("enrnn/V_L", Record::matrix(&p.v_l));
                ck.insert("enrnn/V_S", Record::matrix(&p.v_s));
                ck.insert("enrnn/c", Record::vector(&p.c));
            }
            Model::Lstm(p) => {
                ck.insert("lstm/W_x", Record::matrix(&p.w_x));
                ck.insert("lstm/W_h", Record::matrix(&p.w_h));
                ck.insert("lstm/b", Record::vector(&p.b));
                ck.insert("lstm/V", Record::matrix(&p.v));
                ck.insert("lstm/c", Record::vector(&p.c));
            }
        }
        for (name, slot) in &self.optimizer.slots {
            ck.insert(format!("opt/{name}/m"), Record::vector(&slot.m));
            ck.insert(format!("opt/{name}/v"), Record::vector(&slot.v));
            ck.insert(format!("opt/{name}/step"), Record::U64(vec![slot.step]));
        }
        let mut rng = Vec::with_capacity(56);
        rng.extend_from_slice(&self.rng.get_seed());
        rng.extend_from_slice(&self.rng.get_word_pos().to_le_bytes());
        rng.extend_from_slice(&self.rng.get_stream().to_le_bytes());
        ck.insert("state/rng", Record::Bytes(rng));
        ck.insert("state/counters", Record::U64(vec![self.iteration, self.epoch, self.cursor as u64]));
        ck.insert("state/order", Record::U64(self.order.iter().map(|&i| i as u64).collect()));
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let config = ck.config.clone();
        config.validate()?;
        let model = if ck.has("enrnn/T") {
            let active = ck.u64s("enrnn/active")?.first().copied().unwrap_or(0) != 0;
            let w_s = EigenNormBlock::restore(ck.matrix("enrnn/T")?, config.epsilon, active)?;
            let w_l = CayleyOrthogonalBlock::new(ck.vector("enrnn/A_upper")?, ck.vector("enrnn/D")?)?;
            Model::Enrnn(EnrnnParams {
                u_l: ck.matrix("enrnn/U_L")?,
                u_s: ck.matrix("enrnn/U_S")?,
                w_l,
                w_s,
                w_c: if ck.has("enrnn/W_C") { Some(ck.matrix("enrnn/W_C")?) } else { None },
                b_l: ck.vector("enrnn/b_L")?,
                b_s: ck.vector("enrnn/b_S")?,
                v_l: ck.matrix("enrnn/V_L")?,
                v_s: ck.matrix("enrnn/V_S")?,
                c: ck.vector("enrnn/c")?,
                activation: config.activation,
            })
        } else {
            Model::Lstm(LstmParams {
                w_x: ck.matrix("lstm/W_x")?,
                w_h: ck.matrix("lstm/W_h")?,
                b: ck.vector("lstm/b")?,
                v: ck.matrix("lstm/V")?,
                c: ck.vector("lstm/c")?,
            })
        };
        let mut optimizer = OptimizerState::new(config.optimizer);
        for name in ck.records.keys() {
            if let Some(slot) = name.strip_prefix("opt/").and_then(|s| s.strip_suffix("/step")) {
                optimizer.slots.insert(
                    slot.to_string(),
                    Slot {
                        m: ck.vector(&format!("opt/{slot}/m"))?,
                        v: ck.vector(&format!("opt/{slot}/v"))?,
                        step: ck.u64s(name)?.first().copied().unwrap_or(0),
                    },
                );
            }
        }
        let raw = ck.bytes("state/rng")?;
        if raw.len() != 56 {
            return Err(Error::Checkpoint("rng record has wrong length".into()));
        }
        let mut rng = ChaCha8Rng::from_seed(raw[..32].try_into().unwrap());
        rng.set_stream(u64::from_le_bytes(raw[48..56].try_into().unwrap()));
        rng.set_word_pos(u128::from_le_bytes(raw[32..48].try_into().unwrap()));
        let counters = ck.u64s("state/counters")?;
        if counters.len() != 3 {
            return Err(Error::Checkpoint("counters record has wrong length".into()));
        }
        let order = ck.u64s("state/order")?.into_iter().map(|i| i as usize).collect();
        Ok(Self {
            config,
            model,
            optimizer,
            rng,
            iteration: counters[0],
            epoch: counters[1],
            order,
            cursor: counters[2] as usize,
        })
    }
}

/// Drives a [`TrainState`] over its datasets.
pub struct Trainer {
    pub state: TrainState,
    pub data: Datasets,
    start: Instant,
}

impl Trainer {
    pub fn new(config: TrainConfig) -> Result<Self> {
        let data = Datasets::generate(&config)?;
        Ok(Self { state: TrainState::new(config)?, data, start: Instant::now() })
    }

    pub fn resume(ck: &Checkpoint) -> Result<Self> {
        let state = TrainState::from_checkpoint(ck)?;
        let data = Datasets::generate(&state.config)?;
        Ok(Self { state, data, start: Instant::now() })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.state.config
    }

    fn next_batch(&mut self) -> Result<TaskBatch> {
        let cfg = &self.state.config;
        match &self.data.train {
            None => {
                self.state.epoch = self.state.iteration / cfg.eval_period() as u64;
                cfg.task.generate(cfg.batch_size, cfg.seq_len, &mut self.state.rng)
            }
            Some(train) => {
                if self.state.cursor + cfg.batch_size > self.state.order.len() {
                    self.state.order.shuffle(&mut self.state.rng);
                    self.state.cursor = 0;
                    self.state.epoch += 1;
                }
                let idx = &self.state.order[self.state.cursor..self.state.cursor + cfg.batch_size];
                self.state.cursor += cfg.batch_size;
                Ok(train.select(idx))
            }
        }
    }

    pub fn evaluate(&self) -> Result<f64> {
        self.state.model.evaluate(&self.data.test, EVAL_CHUNK)
    }

    /// One training iteration. On error the state is left as it was before the call.
    pub fn step(&mut self) -> Result<MetricRecord> {
        let saved = self.state.clone();
        match self.step_inner() {
            Ok(r) => Ok(r),
            Err(e) => {
                self.state = saved;
                Err(e)
            }
        }
    }

    fn step_inner(&mut self) -> Result<MetricRecord> {
        let batch = self.next_batch()?;
        let epoch = self.state.epoch;
        let (train_loss, grads) = self.state.model.loss_and_grads(&batch)?;
        if !train_loss.is_finite() {
            return Err(Error::NonFinite("training loss"));
        }
        let cfg = self.state.config.clone();
        let was_active = self.active();
        self.state.model.apply(grads, &mut self.state.optimizer, &cfg)?;
        self.state.iteration += 1;
        if !was_active && self.active() {
            info!("normalization activated at iteration {}", self.state.iteration);
        }
        let it = self.state.iteration;
        let due = it % cfg.eval_period() as u64 == 0 || it == cfg.iterations as u64;
        let eval_loss = if due && cfg.test_size > 0 { Some(self.evaluate()?) } else { None };
        let summary = self.state.model.spectral_summary()?;
        Ok(MetricRecord {
            iteration: it,
            epoch,
            train_loss,
            eval_loss,
            rho_t: summary.map(|s| s.0),
            specnorm_ws: summary.map(|s| s.1),
            active: summary.map(|s| s.2),
            wall_s: self.start.elapsed().as_secs_f64(),
        })
    }

    fn active(&self) -> bool {
        matches!(&self.state.model, Model::Enrnn(p) if p.w_s.is_active())
    }

    /// Runs the remaining iterations. With `out`, writes the metrics file and final
    /// checkpoint there; on failure, writes the metrics so far and the last good state.
    pub fn run(&mut self, out: Option<&Path>) -> Result<RunMetrics> {
        let mut metrics = RunMetrics::default();
        let total = self.state.config.iterations as u64;
        while self.state.iteration < total {
            match self.step() {
                Ok(r) => {
                    if let Some(l) = r.eval_loss {
                        info!("iteration {}: train {:.6} eval {:.6}", r.iteration, r.train_loss, l);
                    }
                    metrics.records.push(r);
                }
                Err(e) => {
                    warn!("iteration {} failed: {e}", self.state.iteration + 1);
                    if let Some(dir) = out {
                        metrics.write_csv(&dir.join(METRICS_FILE))?;
                        self.state.to_checkpoint().save(&dir.join(LAST_GOOD_FILE))?;
                    }
                    return Err(e);
                }
            }
        }
        if let Some(dir) = out {
            metrics.write_csv(&dir.join(METRICS_FILE))?;
            self.state.to_checkpoint().save(&dir.join(CHECKPOINT_FILE))?;
        }
        Ok(metrics)
    }
}

/// Trains from scratch per `config`.
pub fn train(config: TrainConfig, out: Option<&Path>) -> Result<(RunMetrics, TrainState)> {
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
    }
    let mut trainer = Trainer::new(config)?;
    let metrics = trainer.run(out)?;
    Ok((metrics, trainer.state))
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    seed: u64,
    config: &'a TrainConfig,
    build: BuildInfo,
    #[serde(skip_serializing_if = "Option::is_none")]
    extra: Option<&'a serde_json::Value>,
}

#[derive(Serialize)]
struct BuildInfo {
    package: &'static str,
    version: &'static str,
    debug_assertions: bool,
}

/// Writes `run.json` (resolved config, seed, build identifier) into `dir`.
pub fn write_manifest(dir: &Path, command: &str, config: &TrainConfig, extra: Option<&serde_json::Value>) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let manifest = Manifest {
        command,
        seed: config.seed,
        config,
        build: BuildInfo {
            package: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            debug_assertions: cfg!(debug_assertions),
        },
        extra,
    };
    std::fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(())
}
