//! Shared fixtures for the benchmarks in `benches/`.

use phantom_core::covariance::{GammaPair, SeparableCovariance};
use phantom_core::sampling::{FieldModel, Marginal};

/// The default separable Gaussian field in two dimensions.
pub fn example_field() -> FieldModel {
    FieldModel::GaussianSeparable(
        SeparableCovariance::example(GammaPair::default(), 2).expect("default gammas are valid"),
    )
}

pub fn moving_max_uniform() -> FieldModel {
    FieldModel::MovingMax {
        window: vec![2, 2],
        innovation: Marginal::Uniform,
    }
}
