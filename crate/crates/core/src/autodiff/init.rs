use rand::Rng;

use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Half-width of the Glorot uniform interval for a `fan_in×fan_out` kernel.
pub fn glorot_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// Glorot (Xavier) uniform initialization of a rank-two kernel.
pub fn glorot_init<T: Scalar, R: Rng + ?Sized>(shape: [usize; 2], rng: &mut R) -> Tensor<T> {
    let bound = glorot_bound(shape[0], shape[1]);
    let data = (0..shape[0] * shape[1])
        .map(|_| T::from_f64_lossy(rng.gen_range(-bound..bound)))
        .collect();
    Tensor::new(shape.to_vec(), data).expect("glorot shape is consistent")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn same_seed_gives_identical_tensor() {
        let a: Tensor<f64> = glorot_init([5, 7], &mut ChaCha8Rng::seed_from_u64(9));
        let b: Tensor<f64> = glorot_init([5, 7], &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
    }

    #[test]
    fn entries_respect_bound() {
        let t: Tensor<f64> = glorot_init([64, 64], &mut ChaCha8Rng::seed_from_u64(1));
        let bound = (6.0f64 / 128.0).sqrt();
        assert!(t.data().iter().all(|x| x.abs() <= bound));
    }

    #[test]
    fn empirical_mean_is_near_zero() {
        let t: Tensor<f64> = glorot_init([100, 1000], &mut ChaCha8Rng::seed_from_u64(3));
        let bound = glorot_bound(100, 1000);
        let mean = t.sum() / t.len() as f64;
        assert!(mean.abs() < 0.01 * bound, "mean {mean}");
    }
}
