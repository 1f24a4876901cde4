use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Tensor;

pub const FD_STEP: f64 = 1e-5;

pub fn random_tensor(shape: &[usize], seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

/// Asserts `analytic` equals the central difference of `f` at `x`, element
/// by element, to relative error `tol` (absolute below unit magnitude).
pub fn check_grad(f: impl Fn(&Tensor<f64>) -> f64, x: &Tensor<f64>, analytic: &Tensor<f64>, tol: f64) {
    assert_eq!(x.shape(), analytic.shape());
    let mut probe = x.clone();
    for i in 0..x.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + FD_STEP;
        let up = f(&probe);
        probe.data_mut()[i] = orig - FD_STEP;
        let down = f(&probe);
        probe.data_mut()[i] = orig;
        let numeric = (up - down) / (2.0 * FD_STEP);
        let a = analytic.data()[i];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1.0);
        assert!(rel < tol, "element {i}: analytic {a}, numeric {numeric}, rel {rel}");
    }
}
