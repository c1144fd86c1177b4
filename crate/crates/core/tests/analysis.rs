mod common;

use common::{random_matrix, rng};
use enrnn_core::analysis::{jacobian_norms_per_example, spectrum_dump, theorem_bound_report, BoundAudit};
use enrnn_core::linalg::{spectral_norm, DenseMatrix};
use enrnn_core::net::{sequence_forward, Activation, EnrnnConfig, EnrnnParams, OutputMode, SequenceBatch};
use enrnn_core::params::EigenNormBlock;
use proptest::prelude::*;
use rand::Rng;

const FEATURES: usize = 3;

fn params(hidden: usize, long: usize, act: Activation, seed: u64) -> EnrnnParams {
    let cfg = EnrnnConfig {
        inputs: FEATURES,
        outputs: 1,
        hidden,
        long,
        coupling: true,
        epsilon: 0.0,
        neg_ones: long / 2,
        activation: act,
    };
    EnrnnParams::init(&cfg, &mut rng(seed)).unwrap()
}

fn inputs(batch: usize, steps: usize, seed: u64) -> SequenceBatch {
    let mut r = rng(seed);
    SequenceBatch::new(batch, steps, FEATURES, (0..batch * steps * FEATURES).map(|_| r.gen_range(-1.0..1.0)).collect())
        .unwrap()
}

/// States `(h_L, h_S)` of example 0 after step `tau`.
fn states(p: &EnrnnParams, x: &SequenceBatch, tau: usize) -> (Vec<f64>, Vec<f64>) {
    let tape = sequence_forward(&p.effective(), p.activation, x, OutputMode::Terminal).unwrap();
    (tape.h_l[tau + 1].row(0).to_vec(), tape.h_s[tau + 1].row(0).to_vec())
}

/// Largest singular value from many power steps on the Gram matrix.
fn norm_oracle(cols: &[Vec<f64>]) -> f64 {
    let k = cols.len();
    let gram: Vec<Vec<f64>> =
        (0..k).map(|i| (0..k).map(|j| cols[i].iter().zip(&cols[j]).map(|(a, b)| a * b).sum()).collect()).collect();
    let mut v = vec![1.0; k];
    let mut lam = 0.0;
    for _ in 0..2000 {
        let w: Vec<f64> = (0..k).map(|i| (0..k).map(|j| gram[i][j] * v[j]).sum()).collect();
        lam = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if lam == 0.0 {
            return 0.0;
        }
        v = w.into_iter().map(|x| x / lam).collect();
    }
    lam.sqrt()
}

/// Finite-difference Jacobian columns of both state blocks at `tau` with respect to `x_t`.
fn fd_columns(p: &EnrnnParams, x: &SequenceBatch, tau: usize, t: usize) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let h = 1e-6;
    let mut long = Vec::new();
    let mut short = Vec::new();
    for f in 0..FEATURES {
        let mut plus = x.clone();
        plus.set(0, t, f, x.get(0, t, f) + h);
        let mut minus = x.clone();
        minus.set(0, t, f, x.get(0, t, f) - h);
        let (lp, sp) = states(p, &plus, tau);
        let (lm, sm) = states(p, &minus, tau);
        long.push(lp.iter().zip(&lm).map(|(a, b)| (a - b) / (2.0 * h)).collect());
        short.push(sp.iter().zip(&sm).map(|(a, b)| (a - b) / (2.0 * h)).collect());
    }
    (long, short)
}

#[test]
fn heatmap_matches_finite_difference_jacobians() {
    for act in [Activation::Modrelu, Activation::Linear] {
        let p = params(7, 3, act, 40);
        let x = inputs(1, 6, 41);
        let (short, long) = &jacobian_norms_per_example(&p, &x).unwrap()[0];
        for tau in 0..6 {
            for t in 0..=tau {
                let (fl, fs) = fd_columns(&p, &x, tau, t);
                let (es, el) = (norm_oracle(&fs), norm_oracle(&fl));
                assert!((short.get(tau, t) - es).abs() <= 1e-6 * es.max(1.0), "{act:?} short ({tau},{t})");
                assert!((long.get(tau, t) - el).abs() <= 1e-6 * el.max(1.0), "{act:?} long ({tau},{t})");
            }
        }
    }
}

fn with_norm(mut p: EnrnnParams, target: f64, seed: u64) -> EnrnnParams {
    let n = p.w_s.t().rows();
    let t = random_matrix(n, &mut rng(seed));
    let scaled = t.scale(target / spectral_norm(&t).unwrap());
    p.w_s = EigenNormBlock::new(scaled, 0.0).unwrap();
    p
}

#[test]
fn bound_audit_passes_below_unit_norm() {
    let lags: Vec<usize> = (1..=20).collect();
    for target in [0.5, 0.9] {
        let p = with_norm(params(12, 4, Activation::Relu, 9), target, 10);
        let BoundAudit::Report(report) = theorem_bound_report(&p, &inputs(4, 24, 11), &lags).unwrap() else {
            panic!("audit refused at ‖W_S‖ = {target}");
        };
        assert!((report.norm_ws - target).abs() < 1e-10);
        assert_eq!(report.rows.len(), 20);
        for row in &report.rows {
            assert!((row.bound_state - target.powi(row.lag as i32)).abs() < 1e-10);
            assert!(row.pass, "lag {}: {row:?}", row.lag);
        }
    }
}

#[test]
fn bound_audit_refuses_outside_hypotheses() {
    let x = inputs(2, 5, 1);
    let p = with_norm(params(8, 3, Activation::Relu, 2), 1.2, 3);
    assert!(matches!(theorem_bound_report(&p, &x, &[1]).unwrap(), BoundAudit::Refused(_)));
    let p = with_norm(params(8, 3, Activation::Modrelu, 2), 0.5, 3);
    assert!(matches!(theorem_bound_report(&p, &x, &[1]).unwrap(), BoundAudit::Refused(_)));
}

#[test]
fn active_unit_radius_spectrum_has_single_peripheral_eigenvalue() {
    let mut r = rng(31);
    for trial in 0..20 {
        let n = 3 + trial % 8;
        let t = DenseMatrix::from_fn(n, n, |_, _| r.gen_range(-1.0..1.0));
        let block = EigenNormBlock::restore(t, 0.0, true).unwrap();
        let spec = spectrum_dump(&block).unwrap();
        let on_circle: Vec<_> = spec.iter().filter(|z| (z.norm() - 1.0).abs() <= 1e-10).collect();
        let expect = if spec[0].im == 0.0 { 1 } else { 2 };
        assert_eq!(on_circle.len(), expect, "trial {trial}: {spec:?}");
        assert!(spec[expect..].iter().all(|z| z.norm() < 1.0 - 1e-10));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn heatmap_is_causal(seed in 0u64..10_000, steps in 2usize..8) {
        let p = params(6, 3, Activation::Modrelu, seed);
        let x = inputs(1, steps, seed + 1);
        let (short, long) = &jacobian_norms_per_example(&p, &x).unwrap()[0];
        for tau in 0..steps {
            for t in tau + 1..steps {
                prop_assert_eq!(short.get(tau, t), 0.0);
                prop_assert_eq!(long.get(tau, t), 0.0);
                let mut y = x.clone();
                y.set(0, t, 0, x.get(0, t, 0) + 0.5);
                prop_assert_eq!(states(&p, &x, tau), states(&p, &y, tau));
            }
        }
    }
}
