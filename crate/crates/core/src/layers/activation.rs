use crate::tensor::Tensor;

pub fn leaky_relu_forward(x: &Tensor, slope: f64) -> Tensor {
    let mut y = x.clone();
    leaky_relu_inplace(&mut y, slope);
    y
}

pub(crate) fn leaky_relu_inplace(x: &mut Tensor, slope: f64) {
    x.map_inplace(|v| if v >= 0.0 { v } else { slope * v });
}

/// Gradient through the activation, using its output to pick the branch.
/// The slope is positive, so the output sign equals the input sign.
pub fn leaky_relu_backward(output: &Tensor, dy: &Tensor, slope: f64) -> Tensor {
    let mut dx = dy.clone();
    leaky_relu_backward_inplace(output, &mut dx, slope);
    dx
}

pub(crate) fn leaky_relu_backward_inplace(output: &Tensor, dy: &mut Tensor, slope: f64) {
    for (g, &a) in dy.data_mut().iter_mut().zip(output.data()) {
        if a < 0.0 {
            *g *= slope;
        }
    }
}
