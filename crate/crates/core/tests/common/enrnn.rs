use enrnn_core::linalg::DenseMatrix;
use enrnn_core::net::EnrnnParams;
use enrnn_core::params::CayleyOrthogonalBlock;
use enrnn_core::tasks::{Task, TaskBatch};
use enrnn_core::train::{gradcheck_instance, Model, ModelGrads, ModelKind, TrainConfig};

use super::{central_diff, rel_err};

pub const NAMES: [&str; 10] = ["U_L", "U_S", "A", "T", "W_C", "b_L", "b_S", "V_L", "V_S", "c"];

pub fn raw(p: &EnrnnParams, name: &str) -> Vec<f64> {
    match name {
        "U_L" => p.u_l.data().to_vec(),
        "U_S" => p.u_s.data().to_vec(),
        "A" => p.w_l.upper().to_vec(),
        "T" => p.w_s.t().data().to_vec(),
        "W_C" => p.w_c.as_ref().unwrap().data().to_vec(),
        "b_L" => p.b_l.clone(),
        "b_S" => p.b_s.clone(),
        "V_L" => p.v_l.data().to_vec(),
        "V_S" => p.v_s.data().to_vec(),
        "c" => p.c.clone(),
        _ => unreachable!(),
    }
}

pub fn with_raw(p: &EnrnnParams, name: &str, v: &[f64]) -> EnrnnParams {
    let mut q = p.clone();
    let reshape = |m: &DenseMatrix| DenseMatrix::new(m.rows(), m.cols(), v.to_vec()).unwrap();
    match name {
        "U_L" => q.u_l = reshape(&p.u_l),
        "U_S" => q.u_s = reshape(&p.u_s),
        "A" => q.w_l = CayleyOrthogonalBlock::new(v.to_vec(), p.w_l.d().to_vec()).unwrap(),
        "T" => q.w_s.set_t(reshape(p.w_s.t())).unwrap(),
        "W_C" => q.w_c = Some(reshape(p.w_c.as_ref().unwrap())),
        "b_L" => q.b_l = v.to_vec(),
        "b_S" => q.b_s = v.to_vec(),
        "V_L" => q.v_l = reshape(&p.v_l),
        "V_S" => q.v_s = reshape(&p.v_s),
        "c" => q.c = v.to_vec(),
        _ => unreachable!(),
    }
    q
}

pub fn analytic(p: &EnrnnParams, batch: &TaskBatch, name: &str) -> Vec<f64> {
    let (_, grads) = Model::Enrnn(p.clone()).loss_and_grads(batch).unwrap();
    let ModelGrads::Enrnn(g) = grads else { unreachable!() };
    match name {
        "A" => p.w_l.upper_gradient(&g.w_l).unwrap(),
        "T" => p.w_s.eigennorm_gradient(&g.w_s).unwrap().into_vec(),
        _ => g.named().into_iter().find(|(n, _)| *n == name).unwrap().1.to_vec(),
    }
}

/// Relative error of every ENRNN tensor on the standard small instance.
pub fn enrnn_errors(task: Task, seq_len: usize) -> Vec<(&'static str, f64)> {
    let cfg = TrainConfig { task, seq_len, hidden: 10, split: 6, batch_size: 3, seed: 4, ..TrainConfig::default() };
    let (model, batch, _) = gradcheck_instance(&cfg).unwrap();
    let Model::Enrnn(p) = model else { unreachable!() };
    assert!(p.w_s.is_active());
    NAMES
        .iter()
        .map(|&name| {
            let numeric = central_diff(&raw(&p, name), 1e-5, |v| Model::Enrnn(with_raw(&p, name, v)).loss(&batch).unwrap());
            (name, rel_err(&analytic(&p, &batch, name), &numeric))
        })
        .collect()
}

/// Relative error of every LSTM tensor on a small instance.
pub fn lstm_errors() -> Vec<(&'static str, f64)> {
    let cfg = TrainConfig { model: ModelKind::Lstm, hidden: 6, seq_len: 8, batch_size: 3, forget_bias: 1.0, ..TrainConfig::default() };
    let (model, batch, _) = gradcheck_instance(&cfg).unwrap();
    let Model::Lstm(p) = &model else { unreachable!() };
    let (_, grads) = model.loss_and_grads(&batch).unwrap();
    let ModelGrads::Lstm(g) = grads else { unreachable!() };
    p.named()
        .into_iter()
        .map(|(name, values)| {
            let numeric = central_diff(values, 1e-5, |v| {
                let mut q = p.clone();
                for (n, slot) in q.named_mut() {
                    if n == name {
                        slot.copy_from_slice(v);
                    }
                }
                Model::Lstm(q).loss(&batch).unwrap()
            });
            let analytic = g.named().into_iter().find(|(n, _)| *n == name).unwrap().1.to_vec();
            (name, rel_err(&analytic, &numeric))
        })
        .collect()
}
