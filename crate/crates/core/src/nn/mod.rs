//! Dense networks with their output heads and optimizer.

mod adam;
mod checkpoint;
mod dense;
pub mod gradcheck;
mod loss;

pub use adam::Adam;
pub use checkpoint::{Checkpoint, HeadKind, MAGIC as CHECKPOINT_MAGIC};
pub use dense::{param_count, DenseNet, ForwardCache, GradVector, OUTPUT_INIT_SCALE};
pub use loss::{
    argmax, categorical_nll, categorical_nll_into, log_sum_exp, sample_categorical, softmax, MdnOutput,
    MixtureHead, LN_2PI, LOG_STD_MAX, LOG_STD_MIN,
};

/// `[in, hidden, hidden, out]` with two equal-width hidden layers.
pub fn trunk_sizes(in_dim: usize, hidden: usize, out_dim: usize) -> Vec<usize> {
    vec![in_dim, hidden, hidden, out_dim]
}
