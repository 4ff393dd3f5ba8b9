use crate::error::{Error, Result};
use crate::graph::Var;
use crate::real::{gemm, Real};
use crate::tensor::Tensor;

/// Geometry of a 2-D convolution window sweep over one input plane stack.
#[derive(Clone, Copy, Debug)]
struct Geometry {
    channels: usize,
    height: usize,
    width: usize,
    kernel: (usize, usize),
    stride: (usize, usize),
    pad: (usize, usize),
    out_h: usize,
    out_w: usize,
}

impl Geometry {
    fn rows(&self) -> usize {
        self.channels * self.kernel.0 * self.kernel.1
    }

    fn cols(&self) -> usize {
        self.out_h * self.out_w
    }
}

/// Unfolds `[C, H, W]` into `[C*kh*kw, out_h*out_w]` (zero padding).
fn im2col<T: Real>(x: &[T], g: &Geometry, col: &mut [T]) {
    let (kh, kw) = g.kernel;
    let (sh, sw) = g.stride;
    let (ph, pw) = g.pad;
    let cols = g.cols();
    for c in 0..g.channels {
        let plane = &x[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ki in 0..kh {
            for kj in 0..kw {
                let row = (c * kh + ki) * kw + kj;
                let dst = &mut col[row * cols..(row + 1) * cols];
                for oy in 0..g.out_h {
                    let iy = (oy * sh + ki) as isize - ph as isize;
                    let line = &mut dst[oy * g.out_w..(oy + 1) * g.out_w];
                    if iy < 0 || iy >= g.height as isize {
                        line.iter_mut().for_each(|v| *v = T::zero());
                        continue;
                    }
                    let src = &plane[iy as usize * g.width..(iy as usize + 1) * g.width];
                    for (ox, v) in line.iter_mut().enumerate() {
                        let ix = (ox * sw + kj) as isize - pw as isize;
                        *v = if ix < 0 || ix >= g.width as isize {
                            T::zero()
                        } else {
                            src[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatter-adds columns back into `[C, H, W]`.
fn col2im<T: Real>(col: &[T], g: &Geometry, x: &mut [T]) {
    let (kh, kw) = g.kernel;
    let (sh, sw) = g.stride;
    let (ph, pw) = g.pad;
    let cols = g.cols();
    for c in 0..g.channels {
        let plane = &mut x[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ki in 0..kh {
            for kj in 0..kw {
                let row = (c * kh + ki) * kw + kj;
                let src = &col[row * cols..(row + 1) * cols];
                for oy in 0..g.out_h {
                    let iy = (oy * sh + ki) as isize - ph as isize;
                    if iy < 0 || iy >= g.height as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * g.width..(iy as usize + 1) * g.width];
                    let line = &src[oy * g.out_w..(oy + 1) * g.out_w];
                    for (ox, &v) in line.iter().enumerate() {
                        let ix = (ox * sw + kj) as isize - pw as isize;
                        if ix >= 0 && ix < g.width as isize {
                            dst[ix as usize] += v;
                        }
                    }
                }
            }
        }
    }
}

fn add_channel_bias<T: Real>(out: &mut [T], bias: &[T], plane: usize) {
    for (chunk, &b) in out.chunks_exact_mut(plane).zip(bias.iter().cycle()) {
        chunk.iter_mut().for_each(|v| *v += b);
    }
}

fn channel_sums<T: Real>(g: &[T], channels: usize, plane: usize, shape: &[usize]) -> Tensor<T> {
    let mut db = vec![T::zero(); channels];
    for (i, chunk) in g.chunks_exact(plane).enumerate() {
        db[i % channels] += chunk.iter().copied().sum::<T>();
    }
    Tensor::new(shape, db).expect("bias shape")
}

/// Convolution hyper-parameters for both directions.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvParams {
    pub stride: (usize, usize),
    pub pad: (usize, usize),
}

impl ConvParams {
    pub fn new(stride: usize, pad: usize) -> Self {
        Self {
            stride: (stride, stride),
            pad: (pad, pad),
        }
    }
}

/// Output size of a strided window sweep.
pub fn conv_out_size(input: usize, kernel: usize, stride: usize, pad: usize) -> Option<usize> {
    (input + 2 * pad).checked_sub(kernel).map(|v| v / stride + 1)
}

impl<'g, T: Real> Var<'g, T> {
    /// Cross-correlation of `[N, Ci, H, W]` with `[Co, Ci, kh, kw]` plus
    /// optional bias `[Co]`, zero padding.
    pub fn conv2d(
        &self,
        weight: &Var<'g, T>,
        bias: Option<&Var<'g, T>>,
        p: ConvParams,
    ) -> Result<Var<'g, T>> {
        let x = self.value();
        let w = weight.value();
        let (n, ci, h, wd) = x.dims4()?;
        let (co, wci, kh, kw) = w.dims4()?;
        if wci != ci {
            return Err(Error::Shape(format!(
                "conv2d: input {:?}, weight {:?}",
                x.shape(),
                w.shape()
            )));
        }
        let out_h = conv_out_size(h, kh, p.stride.0, p.pad.0);
        let out_w = conv_out_size(wd, kw, p.stride.1, p.pad.1);
        let (Some(out_h), Some(out_w)) = (out_h, out_w) else {
            return Err(Error::Shape(format!("conv2d: kernel larger than input {:?}", x.shape())));
        };
        let geo = Geometry {
            channels: ci,
            height: h,
            width: wd,
            kernel: (kh, kw),
            stride: p.stride,
            pad: p.pad,
            out_h,
            out_w,
        };
        let (k, cols) = (geo.rows(), geo.cols());
        let in_plane = ci * h * wd;
        let mut col_all = vec![T::zero(); n * k * cols];
        let mut out = vec![T::zero(); n * co * cols];
        for b in 0..n {
            let col = &mut col_all[b * k * cols..(b + 1) * k * cols];
            im2col(&x.data()[b * in_plane..(b + 1) * in_plane], &geo, col);
            gemm(
                false,
                false,
                co,
                cols,
                k,
                w.data(),
                col,
                &mut out[b * co * cols..(b + 1) * co * cols],
                false,
            );
        }
        let mut parents = vec![*self, *weight];
        if let Some(b) = bias {
            let bv = b.value();
            if bv.numel() != co {
                return Err(Error::Shape(format!("conv2d: bias {:?} for {co} channels", bv.shape())));
            }
            add_channel_bias(&mut out, bv.data(), cols);
            parents.push(*b);
        }
        let bias_shape = bias.map(|b| b.shape());
        let value = Tensor::new(&[n, co, out_h, out_w], out)?;
        Ok(self.graph.push(value, &parents, move |g, needs| {
            let gd = g.data();
            let dx = needs[0].then(|| {
                let mut dx = Tensor::zeros(&[n, ci, h, wd]);
                let mut dcol = vec![T::zero(); k * cols];
                for b in 0..n {
                    gemm(
                        true,
                        false,
                        k,
                        cols,
                        co,
                        w.data(),
                        &gd[b * co * cols..(b + 1) * co * cols],
                        &mut dcol,
                        false,
                    );
                    col2im(&dcol, &geo, &mut dx.data_mut()[b * in_plane..(b + 1) * in_plane]);
                }
                dx
            });
            let dw = needs[1].then(|| {
                let mut dw = vec![T::zero(); co * k];
                for b in 0..n {
                    gemm(
                        false,
                        true,
                        co,
                        k,
                        cols,
                        &gd[b * co * cols..(b + 1) * co * cols],
                        &col_all[b * k * cols..(b + 1) * k * cols],
                        &mut dw,
                        true,
                    );
                }
                Tensor::new(&[co, ci, kh, kw], dw).expect("weight shape")
            });
            let mut grads = vec![dx, dw];
            if let Some(shape) = &bias_shape {
                grads.push(needs[2].then(|| channel_sums(gd, co, cols, shape)));
            }
            grads
        }))
    }

    /// Transposed convolution of `[N, Ci, H, W]` with `[Ci, Co, kh, kw]`,
    /// the adjoint of [`Var::conv2d`] with the same stride and padding.
    /// `output_pad` adds rows/columns at the bottom/right.
    pub fn conv_transpose2d(
        &self,
        weight: &Var<'g, T>,
        bias: Option<&Var<'g, T>>,
        p: ConvParams,
        output_pad: (usize, usize),
    ) -> Result<Var<'g, T>> {
        let x = self.value();
        let w = weight.value();
        let (n, ci, h, wd) = x.dims4()?;
        let (wci, co, kh, kw) = w.dims4()?;
        if wci != ci {
            return Err(Error::Shape(format!(
                "conv_transpose2d: input {:?}, weight {:?}",
                x.shape(),
                w.shape()
            )));
        }
        if output_pad.0 >= p.stride.0 || output_pad.1 >= p.stride.1 {
            return Err(Error::Shape("conv_transpose2d: output padding must be < stride".into()));
        }
        let out_h = ((h - 1) * p.stride.0 + kh + output_pad.0)
            .checked_sub(2 * p.pad.0)
            .ok_or_else(|| Error::Shape("conv_transpose2d: padding too large".into()))?;
        let out_w = ((wd - 1) * p.stride.1 + kw + output_pad.1)
            .checked_sub(2 * p.pad.1)
            .ok_or_else(|| Error::Shape("conv_transpose2d: padding too large".into()))?;
        // The forward sweep of the matching convolution runs from the output
        // plane (size out_h x out_w, Co channels) back to the input grid.
        let geo = Geometry {
            channels: co,
            height: out_h,
            width: out_w,
            kernel: (kh, kw),
            stride: p.stride,
            pad: p.pad,
            out_h: h,
            out_w: wd,
        };
        let (k, cols) = (geo.rows(), geo.cols());
        let in_plane = ci * cols;
        let out_plane = co * out_h * out_w;
        let mut out = vec![T::zero(); n * out_plane];
        let mut col = vec![T::zero(); k * cols];
        for b in 0..n {
            gemm(
                true,
                false,
                k,
                cols,
                ci,
                w.data(),
                &x.data()[b * in_plane..(b + 1) * in_plane],
                &mut col,
                false,
            );
            col2im(&col, &geo, &mut out[b * out_plane..(b + 1) * out_plane]);
        }
        let mut parents = vec![*self, *weight];
        if let Some(b) = bias {
            let bv = b.value();
            if bv.numel() != co {
                return Err(Error::Shape(format!(
                    "conv_transpose2d: bias {:?} for {co} channels",
                    bv.shape()
                )));
            }
            add_channel_bias(&mut out, bv.data(), out_h * out_w);
            parents.push(*b);
        }
        let bias_shape = bias.map(|b| b.shape());
        let value = Tensor::new(&[n, co, out_h, out_w], out)?;
        Ok(self.graph.push(value, &parents, move |g, needs| {
            let gd = g.data();
            let mut gcol_all = vec![T::zero(); n * k * cols];
            for b in 0..n {
                im2col(
                    &gd[b * out_plane..(b + 1) * out_plane],
                    &geo,
                    &mut gcol_all[b * k * cols..(b + 1) * k * cols],
                );
            }
            let dx = needs[0].then(|| {
                let mut dx = vec![T::zero(); n * in_plane];
                for b in 0..n {
                    gemm(
                        false,
                        false,
                        ci,
                        cols,
                        k,
                        w.data(),
                        &gcol_all[b * k * cols..(b + 1) * k * cols],
                        &mut dx[b * in_plane..(b + 1) * in_plane],
                        false,
                    );
                }
                Tensor::new(&[n, ci, h, wd], dx).expect("input shape")
            });
            let dw = needs[1].then(|| {
                let mut dw = vec![T::zero(); ci * k];
                for b in 0..n {
                    gemm(
                        false,
                        true,
                        ci,
                        k,
                        cols,
                        &x.data()[b * in_plane..(b + 1) * in_plane],
                        &gcol_all[b * k * cols..(b + 1) * k * cols],
                        &mut dw,
                        true,
                    );
                }
                Tensor::new(&[ci, co, kh, kw], dw).expect("weight shape")
            });
            let mut grads = vec![dx, dw];
            if let Some(shape) = &bias_shape {
                grads.push(needs[2].then(|| channel_sums(gd, co, out_h * out_w, shape)));
            }
            grads
        }))
    }
}
