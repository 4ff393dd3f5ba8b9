use noisesim_autodiff::{Real, Tensor};
use rand::Rng;
use rand_distr::{Distribution, Normal};

pub(crate) fn normal<T: Real>(shape: &[usize], std: f64, r: &mut impl Rng) -> Tensor<T> {
    let d = Normal::new(0.0, std).expect("finite std");
    Tensor::from_fn(shape, |_| T::from_f64_lossy(d.sample(r)))
}

/// He initialisation for ReLU layers: `std = sqrt(2 / fan_in)`.
pub(crate) fn he<T: Real>(shape: &[usize], r: &mut impl Rng) -> Tensor<T> {
    let fan_in: usize = shape[1..].iter().product();
    normal(shape, (2.0 / fan_in as f64).sqrt(), r)
}

/// `U(-1/sqrt(fan_in), 1/sqrt(fan_in))` for linear layers.
pub(crate) fn uniform<T: Real>(shape: &[usize], fan_in: usize, r: &mut impl Rng) -> Tensor<T> {
    let a = 1.0 / (fan_in as f64).sqrt();
    Tensor::from_fn(shape, |_| T::from_f64_lossy(r.random_range(-a..a)))
}
