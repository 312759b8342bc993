use super::ComplexTensor;

pub const LEAKY_SLOPE: f64 = 0.1;

fn leaky(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        LEAKY_SLOPE * v
    }
}

fn leaky_grad(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else {
        LEAKY_SLOPE
    }
}

/// Leaky rectifier applied to the real and imaginary parts independently.
pub fn complex_activation(x: &ComplexTensor) -> ComplexTensor {
    ComplexTensor {
        re: x.re.mapv(leaky),
        im: x.im.mapv(leaky),
    }
}

pub fn complex_activation_backward(x: &ComplexTensor, dy: &ComplexTensor) -> ComplexTensor {
    ComplexTensor {
        re: &dy.re * &x.re.mapv(leaky_grad),
        im: &dy.im * &x.im.mapv(leaky_grad),
    }
}

pub fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}
