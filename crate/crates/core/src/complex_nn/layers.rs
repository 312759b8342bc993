//! Complex convolution layers built from four real convolutions:
//! `y = W * x` with `W = W_re + i W_im`, i.e.
//! `y_re = W_re*x_re - W_im*x_im + b_re`, `y_im = W_im*x_re + W_re*x_im + b_im`.

use ndarray::{Array1, Array4, Axis};
use rand::Rng;

use super::conv::{conv2d, conv2d_input_grad, conv2d_weight_grad, ConvGeometry};
use super::ComplexTensor;
use crate::error::{Error, Result};
use crate::params::{join, uniform, Parameters, VisitFn, VisitMutFn};

/// Elements in a standard complex convolution (real + imaginary weights and biases).
pub fn param_count_conv(c_in: usize, c_out: usize, k_f: usize, k_t: usize) -> usize {
    2 * c_in * c_out * k_f * k_t + 2 * c_out
}

/// Elements in a complex depthwise-separable convolution, including the
/// depthwise (`2 * c_in`) and pointwise (`2 * c_out`) biases.
pub fn param_count_dsc(c_in: usize, c_out: usize, k_f: usize, k_t: usize) -> usize {
    2 * c_in * k_f * k_t + 2 * c_in * c_out + 2 * c_out + 2 * c_in
}

fn add_bias(y: &mut Array4<f64>, b: &Array1<f64>) {
    for (mut plane, &bv) in y.axis_iter_mut(Axis(1)).zip(b.iter()) {
        plane += bv;
    }
}

fn bias_grad(dy: &Array4<f64>) -> Array1<f64> {
    dy.sum_axis(Axis(3)).sum_axis(Axis(2)).sum_axis(Axis(0))
}

/// Standard complex 2-D convolution; kernels `[out, in / groups, k_f, k_t]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexConv2d {
    pub w_re: Array4<f64>,
    pub w_im: Array4<f64>,
    pub b_re: Array1<f64>,
    pub b_im: Array1<f64>,
    pub geometry: ConvGeometry,
}

crate::impl_parameters!(ComplexConv2d { w_re, w_im, b_re, b_im });

impl ComplexConv2d {
    /// Uniform fan-in initialization, `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    pub fn new(c_in: usize, c_out: usize, kernel: (usize, usize), geometry: ConvGeometry, rng: &mut impl Rng) -> Self {
        let cg = c_in / geometry.groups;
        let bound = 1.0 / ((cg * kernel.0 * kernel.1) as f64).sqrt();
        let shape = (c_out, cg, kernel.0, kernel.1);
        Self {
            w_re: uniform(shape, bound, rng),
            w_im: uniform(shape, bound, rng),
            b_re: uniform(c_out, bound, rng),
            b_im: uniform(c_out, bound, rng),
            geometry,
        }
    }

    pub fn zeros(c_in: usize, c_out: usize, kernel: (usize, usize), geometry: ConvGeometry) -> Self {
        let shape = (c_out, c_in / geometry.groups, kernel.0, kernel.1);
        Self {
            w_re: Array4::zeros(shape),
            w_im: Array4::zeros(shape),
            b_re: Array1::zeros(c_out),
            b_im: Array1::zeros(c_out),
            geometry,
        }
    }

    /// 1x1 convolution with unit stride and no padding.
    pub fn pointwise(c_in: usize, c_out: usize, rng: &mut impl Rng) -> Self {
        Self::new(c_in, c_out, (1, 1), ConvGeometry::default(), rng)
    }

    pub fn in_channels(&self) -> usize {
        self.w_re.dim().1 * self.geometry.groups
    }

    pub fn out_channels(&self) -> usize {
        self.w_re.dim().0
    }

    pub fn kernel(&self) -> (usize, usize) {
        let d = self.w_re.dim();
        (d.2, d.3)
    }

    fn check_input(&self, x: &ComplexTensor) -> Result<()> {
        if x.channels() != self.in_channels() {
            return Err(Error::shape(format!(
                "convolution expects {} input channels, got {}",
                self.in_channels(),
                x.channels()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: &ComplexTensor) -> Result<ComplexTensor> {
        self.check_input(x)?;
        let g = &self.geometry;
        let mut re = conv2d(&x.re, &self.w_re, g)? - conv2d(&x.im, &self.w_im, g)?;
        let mut im = conv2d(&x.re, &self.w_im, g)? + conv2d(&x.im, &self.w_re, g)?;
        add_bias(&mut re, &self.b_re);
        add_bias(&mut im, &self.b_im);
        Ok(ComplexTensor { re, im })
    }

    /// Accumulates parameter gradients into `grad` and returns the input gradient.
    pub fn backward(&self, x: &ComplexTensor, dy: &ComplexTensor, grad: &mut Self) -> Result<ComplexTensor> {
        self.check_input(x)?;
        let g = &self.geometry;
        let k = self.kernel();
        let dims = (x.freq(), x.time());
        let dx_re = conv2d_input_grad(&dy.re, &self.w_re, g, dims)? + conv2d_input_grad(&dy.im, &self.w_im, g, dims)?;
        let dx_im = conv2d_input_grad(&dy.im, &self.w_re, g, dims)? - conv2d_input_grad(&dy.re, &self.w_im, g, dims)?;
        grad.w_re += &(conv2d_weight_grad(&x.re, &dy.re, g, k)? + conv2d_weight_grad(&x.im, &dy.im, g, k)?);
        grad.w_im += &(conv2d_weight_grad(&x.re, &dy.im, g, k)? - conv2d_weight_grad(&x.im, &dy.re, g, k)?);
        grad.b_re += &bias_grad(&dy.re);
        grad.b_im += &bias_grad(&dy.im);
        Ok(ComplexTensor { re: dx_re, im: dx_im })
    }
}

/// Transposed (fractionally strided) complex convolution; kernels
/// `[in, out / groups, k_f, k_t]`. It is the adjoint of [`ComplexConv2d`]
/// with the same geometry, so the padding pairs crop the output.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexConvTranspose2d {
    pub w_re: Array4<f64>,
    pub w_im: Array4<f64>,
    pub b_re: Array1<f64>,
    pub b_im: Array1<f64>,
    pub geometry: ConvGeometry,
}

crate::impl_parameters!(ComplexConvTranspose2d { w_re, w_im, b_re, b_im });

impl ComplexConvTranspose2d {
    pub fn new(c_in: usize, c_out: usize, kernel: (usize, usize), geometry: ConvGeometry, rng: &mut impl Rng) -> Self {
        let og = c_out / geometry.groups;
        let bound = 1.0 / ((og * kernel.0 * kernel.1) as f64).sqrt();
        let shape = (c_in, og, kernel.0, kernel.1);
        Self {
            w_re: uniform(shape, bound, rng),
            w_im: uniform(shape, bound, rng),
            b_re: uniform(c_out, bound, rng),
            b_im: uniform(c_out, bound, rng),
            geometry,
        }
    }

    pub fn zeros(c_in: usize, c_out: usize, kernel: (usize, usize), geometry: ConvGeometry) -> Self {
        let shape = (c_in, c_out / geometry.groups, kernel.0, kernel.1);
        Self {
            w_re: Array4::zeros(shape),
            w_im: Array4::zeros(shape),
            b_re: Array1::zeros(c_out),
            b_im: Array1::zeros(c_out),
            geometry,
        }
    }

    pub fn in_channels(&self) -> usize {
        self.w_re.dim().0
    }

    pub fn out_channels(&self) -> usize {
        self.w_re.dim().1 * self.geometry.groups
    }

    pub fn kernel(&self) -> (usize, usize) {
        let d = self.w_re.dim();
        (d.2, d.3)
    }

    pub fn output_dims(&self, input: (usize, usize)) -> Result<(usize, usize)> {
        self.geometry.transposed_output_dims(input, self.kernel())
    }

    fn check_input(&self, x: &ComplexTensor) -> Result<()> {
        if x.channels() != self.in_channels() {
            return Err(Error::shape(format!(
                "transposed convolution expects {} input channels, got {}",
                self.in_channels(),
                x.channels()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: &ComplexTensor) -> Result<ComplexTensor> {
        self.check_input(x)?;
        let g = &self.geometry;
        let out = self.output_dims((x.freq(), x.time()))?;
        let t = |a: &Array4<f64>, w: &Array4<f64>| conv2d_input_grad(a, w, g, out);
        let mut re = t(&x.re, &self.w_re)? - t(&x.im, &self.w_im)?;
        let mut im = t(&x.re, &self.w_im)? + t(&x.im, &self.w_re)?;
        add_bias(&mut re, &self.b_re);
        add_bias(&mut im, &self.b_im);
        Ok(ComplexTensor { re, im })
    }

    pub fn backward(&self, x: &ComplexTensor, dy: &ComplexTensor, grad: &mut Self) -> Result<ComplexTensor> {
        self.check_input(x)?;
        let g = &self.geometry;
        let k = self.kernel();
        let dx_re = conv2d(&dy.re, &self.w_re, g)? + conv2d(&dy.im, &self.w_im, g)?;
        let dx_im = conv2d(&dy.im, &self.w_re, g)? - conv2d(&dy.re, &self.w_im, g)?;
        grad.w_re += &(conv2d_weight_grad(&dy.re, &x.re, g, k)? + conv2d_weight_grad(&dy.im, &x.im, g, k)?);
        grad.w_im += &(conv2d_weight_grad(&dy.im, &x.re, g, k)? - conv2d_weight_grad(&dy.re, &x.im, g, k)?);
        grad.b_re += &bias_grad(&dy.re);
        grad.b_im += &bias_grad(&dy.im);
        Ok(ComplexTensor { re: dx_re, im: dx_im })
    }
}

/// Depthwise (one complex filter per input channel) followed by a pointwise
/// 1x1 complex convolution.
#[derive(Debug, Clone, PartialEq)]
pub struct DscConv2d {
    pub depthwise: ComplexConv2d,
    pub pointwise: ComplexConv2d,
}

crate::impl_parameters!(DscConv2d {} nested { depthwise, pointwise });

impl DscConv2d {
    pub fn new(c_in: usize, c_out: usize, kernel: (usize, usize), geometry: ConvGeometry, rng: &mut impl Rng) -> Self {
        Self {
            depthwise: ComplexConv2d::new(c_in, c_in, kernel, geometry.with_groups(c_in), rng),
            pointwise: ComplexConv2d::pointwise(c_in, c_out, rng),
        }
    }

    pub fn zeros(c_in: usize, c_out: usize, kernel: (usize, usize), geometry: ConvGeometry) -> Self {
        Self {
            depthwise: ComplexConv2d::zeros(c_in, c_in, kernel, geometry.with_groups(c_in)),
            pointwise: ComplexConv2d::zeros(c_in, c_out, (1, 1), ConvGeometry::default()),
        }
    }

    pub fn forward(&self, x: &ComplexTensor) -> Result<ComplexTensor> {
        self.pointwise.forward(&self.depthwise.forward(x)?)
    }

    pub fn backward(&self, x: &ComplexTensor, dy: &ComplexTensor, grad: &mut Self) -> Result<ComplexTensor> {
        let mid = self.depthwise.forward(x)?;
        let d_mid = self.pointwise.backward(&mid, dy, &mut grad.pointwise)?;
        self.depthwise.backward(x, &d_mid, &mut grad.depthwise)
    }
}

/// Depthwise transposed convolution followed by a pointwise 1x1 convolution.
#[derive(Debug, Clone, PartialEq)]
pub struct DscConvTranspose2d {
    pub depthwise: ComplexConvTranspose2d,
    pub pointwise: ComplexConv2d,
}

crate::impl_parameters!(DscConvTranspose2d {} nested { depthwise, pointwise });

impl DscConvTranspose2d {
    pub fn new(c_in: usize, c_out: usize, kernel: (usize, usize), geometry: ConvGeometry, rng: &mut impl Rng) -> Self {
        Self {
            depthwise: ComplexConvTranspose2d::new(c_in, c_in, kernel, geometry.with_groups(c_in), rng),
            pointwise: ComplexConv2d::pointwise(c_in, c_out, rng),
        }
    }

    pub fn forward(&self, x: &ComplexTensor) -> Result<ComplexTensor> {
        self.pointwise.forward(&self.depthwise.forward(x)?)
    }

    pub fn backward(&self, x: &ComplexTensor, dy: &ComplexTensor, grad: &mut Self) -> Result<ComplexTensor> {
        let mid = self.depthwise.forward(x)?;
        let d_mid = self.pointwise.backward(&mid, dy, &mut grad.pointwise)?;
        self.depthwise.backward(x, &d_mid, &mut grad.depthwise)
    }
}

/// Encoder convolution: standard or depthwise-separable.
#[derive(Debug, Clone, PartialEq)]
pub enum SpatialConv {
    Standard(ComplexConv2d),
    Separable(DscConv2d),
}

impl SpatialConv {
    pub fn forward(&self, x: &ComplexTensor) -> Result<ComplexTensor> {
        match self {
            SpatialConv::Standard(c) => c.forward(x),
            SpatialConv::Separable(c) => c.forward(x),
        }
    }

    pub fn backward(&self, x: &ComplexTensor, dy: &ComplexTensor, grad: &mut Self) -> Result<ComplexTensor> {
        match (self, grad) {
            (SpatialConv::Standard(c), SpatialConv::Standard(g)) => c.backward(x, dy, g),
            (SpatialConv::Separable(c), SpatialConv::Separable(g)) => c.backward(x, dy, g),
            _ => Err(Error::shape("gradient layout does not match layer kind")),
        }
    }

    pub fn is_standard(&self) -> bool {
        matches!(self, SpatialConv::Standard(_))
    }
}

impl Parameters for SpatialConv {
    fn visit(&self, prefix: &str, f: &mut VisitFn<'_>) {
        match self {
            SpatialConv::Standard(c) => c.visit(&join(prefix, "conv"), f),
            SpatialConv::Separable(c) => c.visit(&join(prefix, "dsc"), f),
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut VisitMutFn<'_>) {
        match self {
            SpatialConv::Standard(c) => c.visit_mut(&join(prefix, "conv"), f),
            SpatialConv::Separable(c) => c.visit_mut(&join(prefix, "dsc"), f),
        }
    }
}

/// Decoder convolution: standard or depthwise-separable transposed.
#[derive(Debug, Clone, PartialEq)]
pub enum SpatialConvTranspose {
    Standard(ComplexConvTranspose2d),
    Separable(DscConvTranspose2d),
}

impl SpatialConvTranspose {
    pub fn forward(&self, x: &ComplexTensor) -> Result<ComplexTensor> {
        match self {
            SpatialConvTranspose::Standard(c) => c.forward(x),
            SpatialConvTranspose::Separable(c) => c.forward(x),
        }
    }

    pub fn backward(&self, x: &ComplexTensor, dy: &ComplexTensor, grad: &mut Self) -> Result<ComplexTensor> {
        match (self, grad) {
            (SpatialConvTranspose::Standard(c), SpatialConvTranspose::Standard(g)) => c.backward(x, dy, g),
            (SpatialConvTranspose::Separable(c), SpatialConvTranspose::Separable(g)) => c.backward(x, dy, g),
            _ => Err(Error::shape("gradient layout does not match layer kind")),
        }
    }

    pub fn is_standard(&self) -> bool {
        matches!(self, SpatialConvTranspose::Standard(_))
    }
}

impl Parameters for SpatialConvTranspose {
    fn visit(&self, prefix: &str, f: &mut VisitFn<'_>) {
        match self {
            SpatialConvTranspose::Standard(c) => c.visit(&join(prefix, "deconv"), f),
            SpatialConvTranspose::Separable(c) => c.visit(&join(prefix, "dsc"), f),
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut VisitMutFn<'_>) {
        match self {
            SpatialConvTranspose::Standard(c) => c.visit_mut(&join(prefix, "deconv"), f),
            SpatialConvTranspose::Separable(c) => c.visit_mut(&join(prefix, "dsc"), f),
        }
    }
}
