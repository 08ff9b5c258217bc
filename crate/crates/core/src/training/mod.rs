//! Optimizers, joint training, MAML meta-training and per-task adaptation.

mod adapt;
mod curve;
mod joint;
mod maml;
mod optimizer;

pub use adapt::{adapt, AdaptConfig};
pub use curve::{curve_csv, write_curve, CurveRow, CURVE_HEADER};
pub use joint::{JointConfig, JointTrainer};
pub use maml::{member_gradient, IterationStats, MamlTrainer, MemberOutput, MetaConfig};
pub use optimizer::{OptimizerConfig, OptimizerKind, OptimizerState};

use crate::nn::{Gradients, Real};

/// Sum in list order, then scale by the reciprocal of the count.
fn ordered_mean<F: Real>(parts: Vec<Gradients<F>>) -> Gradients<F> {
    let n = parts.len();
    let mut it = parts.into_iter();
    let mut acc = it.next().expect("at least one batch member");
    for g in it {
        acc.add_assign(&g);
    }
    if n > 1 {
        acc.scale(F::one() / F::of(n as f64));
    }
    acc
}
