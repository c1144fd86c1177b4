use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::config::TrainConfig;
use super::model::{Model, ModelGrads};
use crate::error::{Error, Result};
use crate::linalg::spectral_radius;
use crate::net::{sequence_forward, Activation, EnrnnParams};
use crate::params::CayleyOrthogonalBlock;
use crate::tasks::TaskBatch;

/// Pre-activations closer than this to an activation kink trigger a redraw.
const KINK_MARGIN: f64 = 1e-3;
const MAX_DRAWS: u64 = 200;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TensorCheck {
    pub name: String,
    /// `max|a − n| / max(max|a|, max|n|)`, with `0/0 = 0`.
    pub rel_error: f64,
    pub max_analytic: f64,
    pub max_numeric: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradcheckReport {
    pub tolerance: f64,
    pub seed: u64,
    pub tensors: Vec<TensorCheck>,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.tensors.iter().all(|t| t.rel_error <= self.tolerance)
    }

    pub fn max_error(&self) -> f64 {
        self.tensors.iter().fold(0.0, |m, t| m.max(t.rel_error))
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("tensor,rel_error,max_analytic,max_numeric,pass\n");
        for t in &self.tensors {
            out.push_str(&format!(
                "{},{:e},{:e},{:e},{}\n",
                t.name,
                t.rel_error,
                t.max_analytic,
                t.max_numeric,
                t.rel_error <= self.tolerance
            ));
        }
        out
    }
}

pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff = analytic.iter().zip(numeric).fold(0.0f64, |m, (a, n)| m.max((a - n).abs()));
    let scale = analytic.iter().chain(numeric).fold(0.0f64, |m, x| m.max(x.abs()));
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

/// Distance of the nearest pre-activation to a kink of the activation.
fn kink_margin(p: &EnrnnParams, batch: &TaskBatch) -> Result<f64> {
    let w = p.effective();
    let tape = sequence_forward(&w, p.activation, &batch.inputs, batch.task.output_mode())?;
    let mut margin = f64::INFINITY;
    for (zs, bias) in [(&tape.z_l, &w.b_l), (&tape.z_s, &w.b_s)] {
        for z in zs {
            for r in 0..z.rows() {
                for (j, &zj) in z.row(r).iter().enumerate() {
                    let m = match p.activation {
                        Activation::Modrelu => zj.abs().min((zj.abs() + bias[j]).abs()),
                        Activation::Relu => (zj + bias[j]).abs(),
                        Activation::Linear => f64::INFINITY,
                    };
                    margin = margin.min(m);
                }
            }
        }
    }
    Ok(margin)
}

/// Scales `T` so that `ρ(T) = 2` when needed and switches normalization on.
fn force_active(p: &mut EnrnnParams) -> Result<()> {
    if p.w_s.size() == 0 {
        return Ok(());
    }
    let rho = spectral_radius(p.w_s.t())?;
    if rho <= 1.0 && rho > 0.0 {
        let t = p.w_s.t().scale(2.0 / rho);
        p.w_s.set_t(t)?;
    }
    p.w_s.activate()
}

/// Names and flat values of the raw trainable parameters.
fn raw_params(model: &Model) -> Vec<(String, Vec<f64>)> {
    match model {
        Model::Enrnn(p) => {
            let mut out = vec![
                ("U_L".to_string(), p.u_l.data().to_vec()),
                ("U_S".to_string(), p.u_s.data().to_vec()),
                ("A".to_string(), p.w_l.upper().to_vec()),
                ("T".to_string(), p.w_s.t().data().to_vec()),
            ];
            if let Some(w_c) = &p.w_c {
                out.push(("W_C".to_string(), w_c.data().to_vec()));
            }
            out.extend([
                ("b_L".to_string(), p.b_l.clone()),
                ("b_S".to_string(), p.b_s.clone()),
                ("V_L".to_string(), p.v_l.data().to_vec()),
                ("V_S".to_string(), p.v_s.data().to_vec()),
                ("c".to_string(), p.c.clone()),
            ]);
            out
        }
        Model::Lstm(p) => p.named().into_iter().map(|(n, v)| (n.to_string(), v.to_vec())).collect(),
    }
}

fn with_param(model: &Model, name: &str, values: Vec<f64>) -> Result<Model> {
    let mut m = model.clone();
    match &mut m {
        Model::Enrnn(p) => match name {
            "A" => p.w_l = CayleyOrthogonalBlock::new(values, p.w_l.d().to_vec())?,
            "T" => {
                let (r, c) = p.w_s.t().shape();
                p.w_s.set_t(crate::linalg::DenseMatrix::new(r, c, values)?)?;
            }
            "U_L" => p.u_l.data_mut().copy_from_slice(&values),
            "U_S" => p.u_s.data_mut().copy_from_slice(&values),
            "W_C" => p.w_c.as_mut().expect("coupled").data_mut().copy_from_slice(&values),
            "b_L" => p.b_l = values,
            "b_S" => p.b_s = values,
            "V_L" => p.v_l.data_mut().copy_from_slice(&values),
            "V_S" => p.v_s.data_mut().copy_from_slice(&values),
            "c" => p.c = values,
            other => return Err(Error::contract(format!("unknown parameter `{other}`"))),
        },
        Model::Lstm(p) => {
            for (n, slot) in p.named_mut() {
                if n == name {
                    slot.copy_from_slice(&values);
                }
            }
        }
    }
    Ok(m)
}

fn analytic_grads(model: &Model, batch: &TaskBatch) -> Result<Vec<(String, Vec<f64>)>> {
    let (_, grads) = model.loss_and_grads(batch)?;
    match (model, grads) {
        (Model::Enrnn(p), ModelGrads::Enrnn(g)) => {
            let dt = if p.w_s.size() == 0 { Vec::new() } else { p.w_s.eigennorm_gradient(&g.w_s)?.into_vec() };
            let mut out = vec![
                ("U_L".to_string(), g.u_l.data().to_vec()),
                ("U_S".to_string(), g.u_s.data().to_vec()),
                ("A".to_string(), p.w_l.upper_gradient(&g.w_l)?),
                ("T".to_string(), dt),
            ];
            if let Some(w_c) = &g.w_c {
                out.push(("W_C".to_string(), w_c.data().to_vec()));
            }
            out.extend([
                ("b_L".to_string(), g.b_l.clone()),
                ("b_S".to_string(), g.b_s.clone()),
                ("V_L".to_string(), g.v_l.data().to_vec()),
                ("V_S".to_string(), g.v_s.data().to_vec()),
                ("c".to_string(), g.c.clone()),
            ]);
            Ok(out)
        }
        (Model::Lstm(_), ModelGrads::Lstm(g)) => Ok(g.named().into_iter().map(|(n, v)| (n.to_string(), v.to_vec())).collect()),
        _ => Err(Error::contract("gradcheck: gradient type does not match model")),
    }
}

/// Draws a model and batch from `seed`, forcing normalization on and redrawing
/// until no pre-activation sits within the kink margin.
pub fn gradcheck_instance(cfg: &TrainConfig) -> Result<(Model, TaskBatch, u64)> {
    for attempt in 0..MAX_DRAWS {
        let seed = cfg.seed.wrapping_add(attempt);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut model = Model::init(cfg, &mut rng)?;
        let batch = cfg.task.generate(cfg.batch_size, cfg.seq_len, &mut rng)?;
        if let Model::Enrnn(p) = &mut model {
            force_active(p)?;
            if kink_margin(p, &batch)? < KINK_MARGIN {
                continue;
            }
        }
        return Ok((model, batch, seed));
    }
    Err(Error::Config(format!("no kink-free instance found in {MAX_DRAWS} draws")))
}

/// Central finite differences against analytic gradients for every raw parameter.
pub fn gradcheck(cfg: &TrainConfig, h: f64, tolerance: f64) -> Result<GradcheckReport> {
    cfg.validate()?;
    let (model, batch, seed) = gradcheck_instance(cfg)?;
    gradcheck_model(&model, &batch, h, tolerance, seed)
}

pub fn gradcheck_model(model: &Model, batch: &TaskBatch, h: f64, tolerance: f64, seed: u64) -> Result<GradcheckReport> {
    let analytic = analytic_grads(model, batch)?;
    let mut tensors = Vec::new();
    for ((name, values), (_, grad)) in raw_params(model).into_iter().zip(analytic) {
        let mut numeric = vec![0.0; values.len()];
        for i in 0..values.len() {
            let mut plus = values.clone();
            plus[i] += h;
            let mut minus = values.clone();
            minus[i] -= h;
            let lp = with_param(model, &name, plus)?.loss(batch)?;
            let lm = with_param(model, &name, minus)?.loss(batch)?;
            numeric[i] = (lp - lm) / (2.0 * h);
        }
        let max_abs = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        tensors.push(TensorCheck {
            rel_error: relative_error(&grad, &numeric),
            max_analytic: max_abs(&grad),
            max_numeric: max_abs(&numeric),
            name,
        });
    }
    Ok(GradcheckReport { tolerance, seed, tensors })
}
