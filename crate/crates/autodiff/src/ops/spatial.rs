use crate::error::{Error, Result};
use crate::graph::Var;
use crate::real::Real;
use crate::tensor::Tensor;

/// Padding amounts `(top, bottom, left, right)`.
pub type Pad4 = (usize, usize, usize, usize);

fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let r = if i < 0 {
        -i
    } else if i >= n {
        2 * n - 2 - i
    } else {
        i
    };
    r as usize
}

impl<'g, T: Real> Var<'g, T> {
    /// Mirror padding without repeating the edge sample.
    pub fn reflect_pad2d(&self, pad: usize) -> Result<Var<'g, T>> {
        let x = self.value();
        let (n, c, h, w) = x.dims4()?;
        if pad >= h || pad >= w {
            return Err(Error::Shape(format!(
                "reflect_pad2d: pad {pad} too large for {:?}",
                x.shape()
            )));
        }
        let (oh, ow) = (h + 2 * pad, w + 2 * pad);
        let rows: Vec<usize> = (0..oh).map(|i| reflect(i as isize - pad as isize, h)).collect();
        let cols: Vec<usize> = (0..ow).map(|j| reflect(j as isize - pad as isize, w)).collect();
        let mut out = vec![T::zero(); n * c * oh * ow];
        for (src, dst) in x.data().chunks_exact(h * w).zip(out.chunks_exact_mut(oh * ow)) {
            for (i, &r) in rows.iter().enumerate() {
                for (j, &cc) in cols.iter().enumerate() {
                    dst[i * ow + j] = src[r * w + cc];
                }
            }
        }
        Ok(self
            .graph
            .push(Tensor::new(&[n, c, oh, ow], out)?, &[*self], move |g, _| {
                let mut dx = Tensor::zeros(&[n, c, h, w]);
                for (src, dst) in g.data().chunks_exact(oh * ow).zip(dx.data_mut().chunks_exact_mut(h * w)) {
                    for (i, &r) in rows.iter().enumerate() {
                        for (j, &cc) in cols.iter().enumerate() {
                            dst[r * w + cc] += src[i * ow + j];
                        }
                    }
                }
                vec![Some(dx)]
            }))
    }

    /// Zero padding with independent amounts per side.
    pub fn pad2d(&self, pad: Pad4) -> Result<Var<'g, T>> {
        let x = self.value();
        let (n, c, h, w) = x.dims4()?;
        let (top, bottom, left, right) = pad;
        let (oh, ow) = (h + top + bottom, w + left + right);
        let mut out = vec![T::zero(); n * c * oh * ow];
        for (src, dst) in x.data().chunks_exact(h * w).zip(out.chunks_exact_mut(oh * ow)) {
            for i in 0..h {
                dst[(i + top) * ow + left..(i + top) * ow + left + w]
                    .copy_from_slice(&src[i * w..(i + 1) * w]);
            }
        }
        Ok(self
            .graph
            .push(Tensor::new(&[n, c, oh, ow], out)?, &[*self], move |g, _| {
                let mut dx = vec![T::zero(); n * c * h * w];
                for (src, dst) in g.data().chunks_exact(oh * ow).zip(dx.chunks_exact_mut(h * w)) {
                    for i in 0..h {
                        dst[i * w..(i + 1) * w]
                            .copy_from_slice(&src[(i + top) * ow + left..(i + top) * ow + left + w]);
                    }
                }
                vec![Some(Tensor::new(&[n, c, h, w], dx).expect("shape"))]
            }))
    }

    /// Spatial window `[h0, h0+hl) x [w0, w0+wl)` of `[N, C, H, W]`.
    pub fn crop2d(&self, h0: usize, hl: usize, w0: usize, wl: usize) -> Result<Var<'g, T>> {
        let x = self.value();
        let (n, c, h, w) = x.dims4()?;
        if h0 + hl > h || w0 + wl > w {
            return Err(Error::Shape(format!(
                "crop2d: window ({h0}+{hl}, {w0}+{wl}) outside {:?}",
                x.shape()
            )));
        }
        let mut out = vec![T::zero(); n * c * hl * wl];
        for (src, dst) in x.data().chunks_exact(h * w).zip(out.chunks_exact_mut(hl * wl)) {
            for i in 0..hl {
                dst[i * wl..(i + 1) * wl]
                    .copy_from_slice(&src[(h0 + i) * w + w0..(h0 + i) * w + w0 + wl]);
            }
        }
        Ok(self
            .graph
            .push(Tensor::new(&[n, c, hl, wl], out)?, &[*self], move |g, _| {
                let mut dx = vec![T::zero(); n * c * h * w];
                for (src, dst) in g.data().chunks_exact(hl * wl).zip(dx.chunks_exact_mut(h * w)) {
                    for i in 0..hl {
                        dst[(h0 + i) * w + w0..(h0 + i) * w + w0 + wl]
                            .copy_from_slice(&src[i * wl..(i + 1) * wl]);
                    }
                }
                vec![Some(Tensor::new(&[n, c, h, w], dx).expect("shape"))]
            }))
    }

    /// Per-sample, per-channel standardisation over the spatial axes
    /// (no affine parameters, biased variance).
    pub fn instance_norm(&self, eps: T) -> Result<Var<'g, T>> {
        let x = self.value();
        let (_, _, h, w) = x.dims4()?;
        let hw = h * w;
        let inv_n = T::one() / T::from_f64_lossy(hw as f64);
        let mut out = (*x).clone();
        let mut inv_std = Vec::with_capacity(x.numel() / hw);
        for plane in out.data_mut().chunks_exact_mut(hw) {
            let mean = plane.iter().copied().sum::<T>() * inv_n;
            let var = plane.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() * inv_n;
            let istd = T::one() / (var + eps).sqrt();
            plane.iter_mut().for_each(|v| *v = (*v - mean) * istd);
            inv_std.push(istd);
        }
        let xhat = out.clone();
        Ok(self.graph.push(out, &[*self], move |g, _| {
            let mut dx = g.clone();
            for ((dplane, yplane), &istd) in dx
                .data_mut()
                .chunks_exact_mut(hw)
                .zip(xhat.data().chunks_exact(hw))
                .zip(&inv_std)
            {
                let mean_g = dplane.iter().copied().sum::<T>() * inv_n;
                let mean_gy = dplane.iter().zip(yplane).map(|(&a, &b)| a * b).sum::<T>() * inv_n;
                for (d, &y) in dplane.iter_mut().zip(yplane) {
                    *d = istd * (*d - mean_g - y * mean_gy);
                }
            }
            vec![Some(dx)]
        }))
    }

    /// Per-channel affine map `y[n,c,:,:] = scale[n,c] * x[n,c,:,:] + shift[n,c]`.
    pub fn channel_affine(&self, scale: &Var<'g, T>, shift: &Var<'g, T>) -> Result<Var<'g, T>> {
        let x = self.value();
        let s = scale.value();
        let b = shift.value();
        let (n, c, h, w) = x.dims4()?;
        if s.shape() != [n, c] || b.shape() != [n, c] {
            return Err(Error::Shape(format!(
                "channel_affine: features {:?}, scale {:?}, shift {:?}",
                x.shape(),
                s.shape(),
                b.shape()
            )));
        }
        let hw = h * w;
        let mut out = (*x).clone();
        for ((plane, &sv), &bv) in out.data_mut().chunks_exact_mut(hw).zip(s.data()).zip(b.data()) {
            plane.iter_mut().for_each(|v| *v = sv * *v + bv);
        }
        Ok(self.graph.push(out, &[*self, *scale, *shift], move |g, needs| {
            let dx = needs[0].then(|| {
                let mut dx = g.clone();
                for (plane, &sv) in dx.data_mut().chunks_exact_mut(hw).zip(s.data()) {
                    plane.iter_mut().for_each(|v| *v *= sv);
                }
                dx
            });
            let ds = needs[1].then(|| {
                let d: Vec<T> = g
                    .data()
                    .chunks_exact(hw)
                    .zip(x.data().chunks_exact(hw))
                    .map(|(gp, xp)| gp.iter().zip(xp).map(|(&a, &b)| a * b).sum())
                    .collect();
                Tensor::new(&[n, c], d).expect("shape")
            });
            let db = needs[2].then(|| {
                let d: Vec<T> = g.data().chunks_exact(hw).map(|gp| gp.iter().copied().sum()).collect();
                Tensor::new(&[n, c], d).expect("shape")
            });
            vec![dx, ds, db]
        }))
    }
    /// Batch items `[start, start + len)` of `[N, ...]`.
    pub fn narrow_batch(&self, start: usize, len: usize) -> Result<Var<'g, T>> {
        let x = self.value();
        let shape = x.shape().to_vec();
        if shape.is_empty() || start + len > shape[0] {
            return Err(Error::Shape(format!(
                "narrow_batch: items {start}..{} of {:?}",
                start + len,
                shape
            )));
        }
        let item: usize = shape[1..].iter().product();
        let mut out_shape = shape.clone();
        out_shape[0] = len;
        let out = x.data()[start * item..(start + len) * item].to_vec();
        Ok(self
            .graph
            .push(Tensor::new(&out_shape, out)?, &[*self], move |g, _| {
                let mut dx = Tensor::zeros(&shape);
                dx.data_mut()[start * item..(start + len) * item].copy_from_slice(g.data());
                vec![Some(dx)]
            }))
    }

    /// Stacks tensors of equal trailing shape along the batch axis.
    pub fn concat_batch(items: &[Var<'g, T>]) -> Result<Var<'g, T>> {
        let first = items
            .first()
            .ok_or_else(|| Error::Shape("concat_batch of nothing".into()))?;
        let tail = first.value().shape()[1..].to_vec();
        let mut sizes = Vec::with_capacity(items.len());
        let mut data = Vec::new();
        for v in items {
            let t = v.value();
            if t.shape().is_empty() || t.shape()[1..] != tail[..] {
                return Err(Error::Shape(format!(
                    "concat_batch: {:?} vs trailing {:?}",
                    t.shape(),
                    tail
                )));
            }
            sizes.push(t.numel());
            data.extend_from_slice(t.data());
        }
        let mut shape = vec![sizes.iter().sum::<usize>() / tail.iter().product::<usize>().max(1)];
        shape.extend_from_slice(&tail);
        let shapes: Vec<Vec<usize>> = items.iter().map(|v| v.value().shape().to_vec()).collect();
        Ok(first.graph.push(Tensor::new(&shape, data)?, items, move |g, _| {
            let mut at = 0;
            shapes
                .iter()
                .zip(&sizes)
                .map(|(s, &n)| {
                    let t = Tensor::new(s, g.data()[at..at + n].to_vec()).expect("shape");
                    at += n;
                    Some(t)
                })
                .collect()
        }))
    }
}
