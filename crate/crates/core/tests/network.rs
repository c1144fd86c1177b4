mod common;

use common::enrnn::{enrnn_errors, lstm_errors};
use common::rng;
use enrnn_core::net::{cell_forward, sequence_forward, Activation, EnrnnConfig, EnrnnParams, OutputMode, SequenceBatch};
use enrnn_core::tasks::Task;
use proptest::prelude::*;
use rand::Rng;

#[test]
fn enrnn_gradients_match_differences_adding() {
    for (name, err) in enrnn_errors(Task::Adding, 8) {
        assert!(err <= 1e-4, "adding {name}: relative error {err:e}");
    }
}

#[test]
fn enrnn_gradients_match_differences_copying() {
    for (name, err) in enrnn_errors(Task::Copying, 3) {
        assert!(err <= 1e-4, "copying {name}: relative error {err:e}");
    }
}

#[test]
fn lstm_gradients_match_differences() {
    for (name, err) in lstm_errors() {
        assert!(err <= 1e-4, "LSTM {name}: relative error {err:e}");
    }
}

fn random_params(hidden: usize, long: usize, act: Activation, seed: u64) -> EnrnnParams {
    let cfg = EnrnnConfig { inputs: 3, outputs: 2, hidden, long, coupling: true, epsilon: 0.0, neg_ones: 0, activation: act };
    EnrnnParams::init(&cfg, &mut rng(seed)).unwrap()
}

fn random_inputs(batch: usize, steps: usize, seed: u64) -> SequenceBatch {
    let mut r = rng(seed);
    SequenceBatch::new(batch, steps, 3, (0..batch * steps * 3).map(|_| r.gen_range(-1.0..1.0)).collect()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn long_state_never_feeds_short_state(seed in 0u64..10_000, t in 0usize..6, unit in 0usize..4, delta in -1.0f64..1.0) {
        let p = random_params(7, 4, Activation::Modrelu, seed);
        let w = p.effective();
        let x = random_inputs(2, 8, seed + 1);
        let tape = sequence_forward(&w, p.activation, &x, OutputMode::Sequence).unwrap();
        let mut h_l = tape.h_l[t + 1].clone();
        h_l[(0, unit)] += delta;
        let mut h_s = tape.h_s[t + 1].clone();
        for s in t + 1..8 {
            let step = cell_forward(&w, p.activation, &x.step(s), &h_l, &h_s).unwrap();
            prop_assert_eq!(step.h_s.data(), tape.h_s[s + 1].data());
            h_l = step.h_l;
            h_s = step.h_s;
        }
    }

    #[test]
    fn outputs_are_affine_in_the_states(seed in 0u64..10_000, k in -3.0f64..3.0) {
        let p = random_params(6, 3, Activation::Relu, seed);
        let x = random_inputs(2, 5, seed + 7);
        let w = p.effective();
        let base = sequence_forward(&w, p.activation, &x, OutputMode::Sequence).unwrap();
        let mut scaled = w.clone();
        scaled.v_l = w.v_l.scale(k);
        scaled.v_s = w.v_s.scale(k);
        let out = sequence_forward(&scaled, p.activation, &x, OutputMode::Sequence).unwrap();
        for (y, y2) in base.outputs.iter().zip(&out.outputs) {
            for i in 0..y.rows() {
                for j in 0..y.cols() {
                    let expect = k * (y[(i, j)] - w.c[j]) + w.c[j];
                    prop_assert!((y2[(i, j)] - expect).abs() <= 1e-12 * (1.0 + expect.abs()));
                }
            }
        }
    }
}

#[test]
fn terminal_mode_emits_one_output() {
    let p = random_params(5, 2, Activation::Modrelu, 1);
    let x = random_inputs(4, 6, 2);
    let tape = sequence_forward(&p.effective(), p.activation, &x, OutputMode::Terminal).unwrap();
    assert_eq!(tape.outputs.len(), 1);
    assert_eq!(tape.outputs[0].shape(), (4, 2));
    let seq = sequence_forward(&p.effective(), p.activation, &x, OutputMode::Sequence).unwrap();
    assert_eq!(seq.outputs.len(), 6);
    assert_eq!(seq.outputs[5].data(), tape.outputs[0].data());
}
