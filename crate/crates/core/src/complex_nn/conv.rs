//! Real-valued grouped 2-D convolution kernels over `[batch, channel, freq, time]`
//! arrays: forward correlation, its adjoint with respect to the input (which
//! is also the transposed convolution), and the weight gradient.

use ndarray::Array4;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Stride, asymmetric zero padding `(before, after)` per axis, and group count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvGeometry {
    pub stride: (usize, usize),
    pub pad_freq: (usize, usize),
    pub pad_time: (usize, usize),
    pub groups: usize,
}

impl Default for ConvGeometry {
    fn default() -> Self {
        Self {
            stride: (1, 1),
            pad_freq: (0, 0),
            pad_time: (0, 0),
            groups: 1,
        }
    }
}

impl ConvGeometry {
    pub fn with_groups(mut self, groups: usize) -> Self {
        self.groups = groups;
        self
    }

    /// Output `(freq, time)` of the forward convolution.
    pub fn output_dims(&self, input: (usize, usize), kernel: (usize, usize)) -> Result<(usize, usize)> {
        let f = input.0 + self.pad_freq.0 + self.pad_freq.1;
        let t = input.1 + self.pad_time.0 + self.pad_time.1;
        if f < kernel.0 || t < kernel.1 {
            return Err(Error::shape(format!(
                "padded input {f}x{t} smaller than kernel {}x{}",
                kernel.0, kernel.1
            )));
        }
        Ok(((f - kernel.0) / self.stride.0 + 1, (t - kernel.1) / self.stride.1 + 1))
    }

    /// Output `(freq, time)` of the transposed convolution, the inverse of
    /// [`Self::output_dims`] when the forward division is exact.
    pub fn transposed_output_dims(&self, input: (usize, usize), kernel: (usize, usize)) -> Result<(usize, usize)> {
        let f = (input.0 - 1) * self.stride.0 + kernel.0;
        let t = (input.1 - 1) * self.stride.1 + kernel.1;
        let pf = self.pad_freq.0 + self.pad_freq.1;
        let pt = self.pad_time.0 + self.pad_time.1;
        if f <= pf || t <= pt {
            return Err(Error::shape("transposed convolution output would be empty"));
        }
        Ok((f - pf, t - pt))
    }
}

/// Output index range `[lo, hi)` whose input index `o * stride + k - pad`
/// lies inside `[0, in_len)`.
fn valid_range(out_len: usize, in_len: usize, stride: usize, pad: usize, k: usize) -> (usize, usize) {
    let off = k as isize - pad as isize;
    let lo = if off >= 0 {
        0
    } else {
        ((-off) as usize).div_ceil(stride)
    };
    let last_in = in_len as isize - 1 - off;
    if last_in < 0 {
        return (0, 0);
    }
    let hi = (last_in as usize / stride + 1).min(out_len);
    (lo.min(hi), hi)
}

struct Dims {
    batch: usize,
    cin: usize,
    cout: usize,
    fin: usize,
    tin: usize,
    fout: usize,
    tout: usize,
    kf: usize,
    kt: usize,
}

/// Visits every (output row, input row, weight tap) triple; `run` receives
/// the flat offsets of the input and output rows, the weight index, the
/// starting input/output time positions and the run length.
fn drive(d: &Dims, g: &ConvGeometry, mut run: impl FnMut(usize, usize, usize, usize, usize, usize)) {
    let cin_g = d.cin / g.groups;
    let cout_g = d.cout / g.groups;
    for b in 0..d.batch {
        for o in 0..d.cout {
            let grp = o / cout_g;
            for cl in 0..cin_g {
                let c = grp * cin_g + cl;
                for kf in 0..d.kf {
                    let (flo, fhi) = valid_range(d.fout, d.fin, g.stride.0, g.pad_freq.0, kf);
                    for kt in 0..d.kt {
                        let (tlo, thi) = valid_range(d.tout, d.tin, g.stride.1, g.pad_time.0, kt);
                        if tlo >= thi {
                            continue;
                        }
                        let widx = ((o * cin_g + cl) * d.kf + kf) * d.kt + kt;
                        let ti0 = tlo * g.stride.1 + kt - g.pad_time.0;
                        for fo in flo..fhi {
                            let fi = fo * g.stride.0 + kf - g.pad_freq.0;
                            let x_row = ((b * d.cin + c) * d.fin + fi) * d.tin;
                            let y_row = ((b * d.cout + o) * d.fout + fo) * d.tout;
                            run(x_row, y_row, widx, ti0, tlo, thi - tlo);
                        }
                    }
                }
            }
        }
    }
}

fn check_groups(cin: usize, cout: usize, w_in: usize, g: &ConvGeometry) -> Result<()> {
    if g.groups == 0 || cin % g.groups != 0 || cout % g.groups != 0 {
        return Err(Error::shape(format!(
            "groups {} must divide channels {cin} -> {cout}",
            g.groups
        )));
    }
    if w_in != cin / g.groups {
        return Err(Error::shape(format!(
            "kernel expects {} input channels per group, got {}",
            w_in,
            cin / g.groups
        )));
    }
    if g.stride.0 == 0 || g.stride.1 == 0 {
        return Err(Error::shape("strides must be >= 1"));
    }
    Ok(())
}

/// `y[b,o,f,t] = sum w[o,c,i,j] * x[b,c,f*sf+i-pf, t*st+j-pt]` (no bias).
pub fn conv2d(x: &Array4<f64>, w: &Array4<f64>, g: &ConvGeometry) -> Result<Array4<f64>> {
    let (batch, cin, fin, tin) = x.dim();
    let (cout, w_in, kf, kt) = w.dim();
    check_groups(cin, cout, w_in, g)?;
    let (fout, tout) = g.output_dims((fin, tin), (kf, kt))?;
    let d = Dims {
        batch,
        cin,
        cout,
        fin,
        tin,
        fout,
        tout,
        kf,
        kt,
    };
    let mut y = Array4::zeros((batch, cout, fout, tout));
    let xs = x.as_standard_layout();
    let xs = xs.as_slice().expect("standard layout");
    let ws = w.as_standard_layout();
    let ws = ws.as_slice().expect("standard layout");
    let ys = y.as_slice_mut().expect("fresh array");
    let st = g.stride.1;
    drive(&d, g, |x_row, y_row, widx, ti0, to0, n| {
        let wv = ws[widx];
        let out = &mut ys[y_row + to0..y_row + to0 + n];
        if st == 1 {
            let inp = &xs[x_row + ti0..x_row + ti0 + n];
            for (o, i) in out.iter_mut().zip(inp) {
                *o += wv * i;
            }
        } else {
            for (j, o) in out.iter_mut().enumerate() {
                *o += wv * xs[x_row + ti0 + j * st];
            }
        }
    });
    Ok(y)
}

/// Adjoint of [`conv2d`] with respect to its input, producing an array of
/// `input_dims` `(freq, time)`. Also serves as the transposed convolution
/// with kernel layout `[in, out / groups, kf, kt]`.
pub fn conv2d_input_grad(
    dy: &Array4<f64>,
    w: &Array4<f64>,
    g: &ConvGeometry,
    input_dims: (usize, usize),
) -> Result<Array4<f64>> {
    let (batch, cout, fout, tout) = dy.dim();
    let (w_out, w_in, kf, kt) = w.dim();
    if w_out != cout {
        return Err(Error::shape(format!(
            "gradient has {cout} channels, kernel produces {w_out}"
        )));
    }
    let cin = w_in * g.groups;
    check_groups(cin, cout, w_in, g)?;
    let (fin, tin) = input_dims;
    let expect = g.output_dims(input_dims, (kf, kt))?;
    if expect != (fout, tout) {
        return Err(Error::shape(format!(
            "input dims {input_dims:?} map to {expect:?}, not {:?}",
            (fout, tout)
        )));
    }
    let d = Dims {
        batch,
        cin,
        cout,
        fin,
        tin,
        fout,
        tout,
        kf,
        kt,
    };
    let mut dx = Array4::zeros((batch, cin, fin, tin));
    let dys = dy.as_standard_layout();
    let dys = dys.as_slice().expect("standard layout");
    let ws = w.as_standard_layout();
    let ws = ws.as_slice().expect("standard layout");
    let dxs = dx.as_slice_mut().expect("fresh array");
    let st = g.stride.1;
    drive(&d, g, |x_row, y_row, widx, ti0, to0, n| {
        let wv = ws[widx];
        let grad = &dys[y_row + to0..y_row + to0 + n];
        if st == 1 {
            let out = &mut dxs[x_row + ti0..x_row + ti0 + n];
            for (o, gv) in out.iter_mut().zip(grad) {
                *o += wv * gv;
            }
        } else {
            for (j, gv) in grad.iter().enumerate() {
                dxs[x_row + ti0 + j * st] += wv * gv;
            }
        }
    });
    Ok(dx)
}

/// Gradient of `<dy, conv2d(x, w)>` with respect to `w`.
pub fn conv2d_weight_grad(
    x: &Array4<f64>,
    dy: &Array4<f64>,
    g: &ConvGeometry,
    kernel: (usize, usize),
) -> Result<Array4<f64>> {
    let (batch, cin, fin, tin) = x.dim();
    let (b2, cout, fout, tout) = dy.dim();
    if b2 != batch {
        return Err(Error::shape("batch sizes differ"));
    }
    if g.groups == 0 || cin % g.groups != 0 {
        return Err(Error::shape("groups must divide input channels"));
    }
    check_groups(cin, cout, cin / g.groups, g)?;
    let (kf, kt) = kernel;
    if g.output_dims((fin, tin), kernel)? != (fout, tout) {
        return Err(Error::shape("gradient dims inconsistent with input and kernel"));
    }
    let d = Dims {
        batch,
        cin,
        cout,
        fin,
        tin,
        fout,
        tout,
        kf,
        kt,
    };
    let mut dw = Array4::zeros((cout, cin / g.groups, kf, kt));
    let xs = x.as_standard_layout();
    let xs = xs.as_slice().expect("standard layout");
    let dys = dy.as_standard_layout();
    let dys = dys.as_slice().expect("standard layout");
    let dws = dw.as_slice_mut().expect("fresh array");
    let st = g.stride.1;
    drive(&d, g, |x_row, y_row, widx, ti0, to0, n| {
        let grad = &dys[y_row + to0..y_row + to0 + n];
        let acc: f64 = if st == 1 {
            grad.iter()
                .zip(&xs[x_row + ti0..x_row + ti0 + n])
                .map(|(a, b)| a * b)
                .sum()
        } else {
            grad.iter()
                .enumerate()
                .map(|(j, gv)| gv * xs[x_row + ti0 + j * st])
                .sum()
        };
        dws[widx] += acc;
    });
    Ok(dw)
}
