use crate::nn::{Scalar, Tensor4};

pub fn relu<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        x
    } else {
        T::zero()
    }
}

pub fn relu_inplace<T: Scalar>(x: &mut Tensor4<T>) {
    for v in x.data_mut() {
        *v = relu(*v);
    }
}

/// Passes gradient where the forward input (or, equivalently, output) was positive.
pub fn relu_backward_inplace<T: Scalar>(grad: &mut Tensor4<T>, activation: &Tensor4<T>) {
    for (g, &a) in grad.data_mut().iter_mut().zip(activation.data()) {
        if a <= T::zero() {
            *g = T::zero();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relu_values() {
        assert_eq!(relu(-1.0f64), 0.0);
        assert_eq!(relu(2.0f64), 2.0);
        assert_eq!(relu(0.0f32), 0.0);
    }
}
