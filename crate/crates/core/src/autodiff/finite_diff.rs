use crate::scalar::Scalar;

/// Central-difference gradient of `f` at `x`:
/// `(f(x + eps e_i) - f(x - eps e_i)) / (2 eps)` per coordinate.
pub fn finite_diff_grad<T, F>(mut f: F, x: &[T], eps: T) -> Vec<T>
where
    T: Scalar,
    F: FnMut(&[T]) -> T,
{
    assert!(eps > T::zero(), "finite difference step must be positive");
    let mut probe = x.to_vec();
    let two = T::of(2.0);
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + eps;
            let up = f(&probe);
            probe[i] = orig - eps;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (two * eps)
        })
        .collect()
}
