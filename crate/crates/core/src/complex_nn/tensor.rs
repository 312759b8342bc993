use ndarray::{concatenate, s, Array4, Axis};
use rand::Rng;

use crate::error::{Error, Result};

/// Paired real/imaginary feature maps, each `[batch, channels, freq, time]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexTensor {
    pub re: Array4<f64>,
    pub im: Array4<f64>,
}

impl ComplexTensor {
    pub fn new(re: Array4<f64>, im: Array4<f64>) -> Result<Self> {
        if re.dim() != im.dim() {
            return Err(Error::shape(format!(
                "real part {:?} vs imaginary part {:?}",
                re.dim(),
                im.dim()
            )));
        }
        Ok(Self { re, im })
    }

    pub fn zeros(dim: (usize, usize, usize, usize)) -> Self {
        Self {
            re: Array4::zeros(dim),
            im: Array4::zeros(dim),
        }
    }

    pub fn random(dim: (usize, usize, usize, usize), rng: &mut impl Rng) -> Self {
        Self {
            re: Array4::from_shape_simple_fn(dim, || rng.gen_range(-1.0..1.0)),
            im: Array4::from_shape_simple_fn(dim, || rng.gen_range(-1.0..1.0)),
        }
    }

    pub fn dim(&self) -> (usize, usize, usize, usize) {
        self.re.dim()
    }

    pub fn batch(&self) -> usize {
        self.re.dim().0
    }

    pub fn channels(&self) -> usize {
        self.re.dim().1
    }

    pub fn freq(&self) -> usize {
        self.re.dim().2
    }

    pub fn time(&self) -> usize {
        self.re.dim().3
    }

    pub fn is_finite(&self) -> bool {
        self.re.iter().chain(self.im.iter()).all(|v| v.is_finite())
    }

    /// Real inner product `<a, b>` over both parts.
    pub fn dot(&self, other: &Self) -> f64 {
        (&self.re * &other.re).sum() + (&self.im * &other.im).sum()
    }

    pub fn add_assign(&mut self, other: &Self) {
        self.re += &other.re;
        self.im += &other.im;
    }

    pub fn scale(&self, alpha: f64) -> Self {
        Self {
            re: &self.re * alpha,
            im: &self.im * alpha,
        }
    }

    /// Multiplication by a complex scalar.
    pub fn mul_complex(&self, a_re: f64, a_im: f64) -> Self {
        Self {
            re: &self.re * a_re - &self.im * a_im,
            im: &self.re * a_im + &self.im * a_re,
        }
    }

    pub fn concat_channels(a: &Self, b: &Self) -> Result<Self> {
        let (ab, _, af, at) = a.dim();
        let (bb, _, bf, bt) = b.dim();
        if (ab, af, at) != (bb, bf, bt) {
            return Err(Error::shape(format!(
                "cannot concatenate {:?} and {:?} along channels",
                a.dim(),
                b.dim()
            )));
        }
        Ok(Self {
            re: concatenate(Axis(1), &[a.re.view(), b.re.view()]).expect("checked dims"),
            im: concatenate(Axis(1), &[a.im.view(), b.im.view()]).expect("checked dims"),
        })
    }

    /// Splits channels into `[0, at)` and `[at, C)`.
    pub fn split_channels(&self, at: usize) -> (Self, Self) {
        (
            Self {
                re: self.re.slice(s![.., ..at, .., ..]).to_owned(),
                im: self.im.slice(s![.., ..at, .., ..]).to_owned(),
            },
            Self {
                re: self.re.slice(s![.., at.., .., ..]).to_owned(),
                im: self.im.slice(s![.., at.., .., ..]).to_owned(),
            },
        )
    }
}
