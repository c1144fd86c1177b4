//! Trainable parameterizations of the recurrent blocks and their initializers.

mod cayley;
mod eigennorm;
mod init;

pub use cayley::{upper_len, upper_of, CayleyOrthogonalBlock};
pub use eigennorm::{normalized_gradient, EigenNormBlock, StepOutcome, DEFECT_THRESHOLD};
pub use init::{glorot_uniform, init_rotation_blocks, RotationBlockInit};
