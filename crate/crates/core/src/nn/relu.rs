use crate::scalar::Real;

/// `max(0, x)` in place.
pub fn relu_inplace<T: Real>(x: &mut [T]) {
    for v in x {
        if !(*v > T::zero()) {
            *v = T::zero();
        }
    }
}

pub fn relu<T: Real>(x: &[T]) -> Vec<T> {
    let mut y = x.to_vec();
    relu_inplace(&mut y);
    y
}

/// Zeroes `grad` wherever the forward input was not strictly positive.
pub fn relu_backward<T: Real>(grad: &mut [T], input: &[T]) {
    for (g, &x) in grad.iter_mut().zip(input) {
        if !(x > T::zero()) {
            *g = T::zero();
        }
    }
}
