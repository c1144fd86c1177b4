//! Jacobian-norm heatmaps, contraction-bound audits, spectrum dumps and
//! state-size sweeps.

mod bound;
mod jacobian;
mod spectrum;
mod sweep;

pub use bound::{theorem_bound_report, BoundAudit, BoundReport, BoundRow, BOUND_HEADER, BOUND_SLACK};
pub use jacobian::{jacobian_norms, jacobian_norms_per_example, HeatmapGrid, StateBlock, JACOBIAN_TOL};
pub use spectrum::{spectrum_csv, spectrum_dump};
pub use sweep::{run_dir_name, sweep, validate_sweep, SweepRun, SweepTable, SWEEP_FILE, SWEEP_HEADER};

use crate::error::Result;
use crate::tasks::TaskBatch;
use crate::train::trainer::{stream_rng, STREAM_TEST_SET};
use crate::train::TrainConfig;

/// The first `batch_size` sequences of the run's test set.
pub fn probe_batch(cfg: &TrainConfig) -> Result<TaskBatch> {
    cfg.task.generate(cfg.batch_size, cfg.seq_len, &mut stream_rng(cfg.seed, STREAM_TEST_SET))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{matmul, DenseMatrix};
    use crate::net::{Activation, EnrnnConfig, EnrnnParams, SequenceBatch};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params(hidden: usize, long: usize, coupling: bool, act: Activation, seed: u64) -> EnrnnParams {
        let cfg = EnrnnConfig {
            inputs: 2,
            outputs: 1,
            hidden,
            long,
            coupling,
            epsilon: 0.0,
            neg_ones: long / 2,
            activation: act,
        };
        EnrnnParams::init(&cfg, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
    }

    fn inputs(batch: usize, steps: usize, seed: u64) -> SequenceBatch {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..batch * steps * 2).map(|_| rng.gen_range(-1.0..1.0)).collect();
        SequenceBatch::new(batch, steps, 2, data).unwrap()
    }

    /// Largest singular value of a matrix with two columns, from the closed-form
    /// eigenvalues of its 2×2 Gram matrix.
    fn two_column_norm(m: &DenseMatrix) -> f64 {
        let (mut a, mut b, mut d) = (0.0, 0.0, 0.0);
        for i in 0..m.rows() {
            a += m[(i, 0)] * m[(i, 0)];
            b += m[(i, 0)] * m[(i, 1)];
            d += m[(i, 1)] * m[(i, 1)];
        }
        let half = 0.5 * (a + d);
        (half + (0.25 * (a - d) * (a - d) + b * b).sqrt()).sqrt()
    }

    #[test]
    fn linear_uncoupled_matches_matrix_power_chain() {
        let p = params(6, 2, false, Activation::Linear, 3);
        let (short, _) = jacobian_norms(&p, &inputs(1, 7, 1)).unwrap();
        let w = p.w_s.w().clone();
        let mut chain = p.u_s.clone();
        for lag in 0..7 {
            let expect = two_column_norm(&chain);
            for t in 0..7 - lag {
                let got = short.get(t + lag, t);
                assert!((got - expect).abs() <= 1e-8 * expect.max(1.0), "lag {lag}: {got} vs {expect}");
            }
            chain = matmul(&w, &chain).unwrap();
        }
    }

    #[test]
    fn zero_short_matrix_gives_diagonal_only() {
        let mut p = params(5, 2, true, Activation::Modrelu, 4);
        p.w_s.set_t(DenseMatrix::zeros(3, 3)).unwrap();
        let (short, long) = jacobian_norms(&p, &inputs(2, 6, 2)).unwrap();
        for tau in 0..6 {
            for t in 0..6 {
                if tau != t {
                    assert_eq!(short.get(tau, t), 0.0);
                }
                if tau < t {
                    assert_eq!(long.get(tau, t), 0.0);
                }
            }
        }
        assert!((0..6).any(|t| short.get(t, t) > 0.0));
    }

    #[test]
    fn orthogonal_long_block_preserves_norm_in_linear_case() {
        let p = params(5, 5, false, Activation::Linear, 6);
        let eff = p.w_l.w().clone();
        let mut j = DenseMatrix::identity(5);
        for _ in 0..12 {
            j = matmul(&eff, &j).unwrap();
            assert!((jacobian::block_norm(&j).unwrap() - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn bound_report_refuses_outside_hypotheses() {
        let p = params(6, 3, true, Activation::Modrelu, 2);
        assert!(matches!(theorem_bound_report(&p, &inputs(1, 5, 0), &[1]).unwrap(), BoundAudit::Refused(_)));
        let mut p = params(6, 3, true, Activation::Relu, 2);
        p.w_s.set_t(DenseMatrix::identity(3).scale(1.5)).unwrap();
        assert!(matches!(theorem_bound_report(&p, &inputs(1, 5, 0), &[1]).unwrap(), BoundAudit::Refused(_)));
    }

    #[test]
    fn bound_report_lag_zero_is_identity() {
        let mut p = params(6, 3, true, Activation::Relu, 8);
        let t = p.w_s.t().scale(0.1);
        p.w_s.set_t(t).unwrap();
        let BoundAudit::Report(report) = theorem_bound_report(&p, &inputs(2, 6, 5), &[0, 1, 5]).unwrap() else {
            panic!("refused");
        };
        assert_eq!(report.rows[0].bound_state, 1.0);
        assert!((report.rows[0].empirical_state - 1.0).abs() < 1e-12);
        assert!(report.passed());
        assert!(report.to_csv().starts_with(BOUND_HEADER));
    }

    #[test]
    fn spectrum_sorted_and_csv() {
        let p = params(8, 2, true, Activation::Modrelu, 1);
        let eig = spectrum_dump(&p.w_s).unwrap();
        assert_eq!(eig.len(), 6);
        assert!(eig.windows(2).all(|w| w[0].norm() >= w[1].norm()));
        assert_eq!(spectrum_csv(&eig).lines().count(), 7);
    }

    #[test]
    fn sweep_rejects_differing_configs() {
        let a = TrainConfig::default();
        let b = TrainConfig { split: 10, hidden: 20, ..a.clone() };
        assert!(validate_sweep(&[a.clone(), b]).is_ok());
        let c = TrainConfig { lr: 0.5, ..a.clone() };
        assert!(validate_sweep(&[a, c]).is_err());
        assert!(validate_sweep(&[]).is_err());
    }
}
