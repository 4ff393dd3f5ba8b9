use crate::error::{Error, Result};
use crate::graph::Var;
use crate::real::{gemm, Real};
use crate::tensor::Tensor;

impl<'g, T: Real> Var<'g, T> {
    pub fn sum_all(&self) -> Var<'g, T> {
        let x = self.value();
        let shape = x.shape().to_vec();
        self.graph
            .push(Tensor::scalar(x.sum()), &[*self], move |g, _| {
                vec![Some(Tensor::full(&shape, g.item()))]
            })
    }

    pub fn mean_all(&self) -> Var<'g, T> {
        let n = T::from_f64_lossy(self.value().numel() as f64);
        self.sum_all().scale(T::one() / n)
    }

    /// Global average over the two trailing axes: `[N, C, H, W] -> [N, C]`.
    pub fn mean_hw(&self) -> Result<Var<'g, T>> {
        let x = self.value();
        let (n, c, h, w) = x.dims4()?;
        let hw = h * w;
        let inv = T::one() / T::from_f64_lossy(hw as f64);
        let out: Vec<T> = x
            .data()
            .chunks_exact(hw)
            .map(|plane| plane.iter().copied().sum::<T>() * inv)
            .collect();
        Ok(self
            .graph
            .push(Tensor::new(&[n, c], out)?, &[*self], move |g, _| {
                let mut dx = Tensor::zeros(&[n, c, h, w]);
                for (plane, &gv) in dx.data_mut().chunks_exact_mut(hw).zip(g.data()) {
                    plane.iter_mut().for_each(|v| *v = gv * inv);
                }
                vec![Some(dx)]
            }))
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Var<'g, T>> {
        let x = self.value();
        let in_shape = x.shape().to_vec();
        let out = (*x).clone().reshape(shape)?;
        Ok(self.graph.push(out, &[*self], move |g, _| {
            vec![Some(g.clone().reshape(&in_shape).expect("same numel"))]
        }))
    }

    /// `[m, k] x [k, n] -> [m, n]`.
    pub fn matmul(&self, rhs: &Var<'g, T>) -> Result<Var<'g, T>> {
        self.matmul_impl(rhs, false)
    }

    /// `[m, k] x [n, k]^T -> [m, n]`.
    pub fn matmul_nt(&self, rhs: &Var<'g, T>) -> Result<Var<'g, T>> {
        self.matmul_impl(rhs, true)
    }

    fn matmul_impl(&self, rhs: &Var<'g, T>, trans_b: bool) -> Result<Var<'g, T>> {
        let a = self.value();
        let b = rhs.value();
        let (m, k) = a.dims2()?;
        let (n, kb) = if trans_b { b.dims2()? } else {
            let (r, c) = b.dims2()?;
            (c, r)
        };
        if k != kb {
            return Err(Error::Shape(format!(
                "matmul: {:?} x {:?} (trans_b={trans_b})",
                a.shape(),
                b.shape()
            )));
        }
        let mut out = vec![T::zero(); m * n];
        gemm(false, trans_b, m, n, k, a.data(), b.data(), &mut out, false);
        Ok(self
            .graph
            .push(Tensor::new(&[m, n], out)?, &[*self, *rhs], move |g, needs| {
                let da = needs[0].then(|| {
                    // dA = G * op(B)^T
                    let mut d = vec![T::zero(); m * k];
                    gemm(false, !trans_b, m, k, n, g.data(), b.data(), &mut d, false);
                    Tensor::new(&[m, k], d).expect("shape")
                });
                let db = needs[1].then(|| {
                    if trans_b {
                        // B is [n, k]: dB = G^T * A
                        let mut d = vec![T::zero(); n * k];
                        gemm(true, false, n, k, m, g.data(), a.data(), &mut d, false);
                        Tensor::new(&[n, k], d).expect("shape")
                    } else {
                        // B is [k, n]: dB = A^T * G
                        let mut d = vec![T::zero(); k * n];
                        gemm(true, false, k, n, m, a.data(), g.data(), &mut d, false);
                        Tensor::new(&[k, n], d).expect("shape")
                    }
                });
                vec![da, db]
            }))
    }

    /// Affine map `x W^T + b` with `x: [N, in]`, `W: [out, in]`, `b: [out]`.
    pub fn linear(&self, weight: &Var<'g, T>, bias: Option<&Var<'g, T>>) -> Result<Var<'g, T>> {
        let y = self.matmul_nt(weight)?;
        match bias {
            Some(b) => y.add_row_bias(b),
            None => Ok(y),
        }
    }

    /// Adds `b: [n]` to every row of `[m, n]`.
    pub fn add_row_bias(&self, bias: &Var<'g, T>) -> Result<Var<'g, T>> {
        let x = self.value();
        let b = bias.value();
        let (_, n) = x.dims2()?;
        if b.numel() != n {
            return Err(Error::Shape(format!(
                "add_row_bias: rows of width {n}, bias {:?}",
                b.shape()
            )));
        }
        let mut out = (*x).clone();
        for row in out.data_mut().chunks_exact_mut(n) {
            for (v, &bv) in row.iter_mut().zip(b.data()) {
                *v += bv;
            }
        }
        let b_shape = b.shape().to_vec();
        Ok(self.graph.push(out, &[*self, *bias], move |g, needs| {
            let db = needs[1].then(|| {
                let mut d = vec![T::zero(); n];
                for row in g.data().chunks_exact(n) {
                    for (dv, &gv) in d.iter_mut().zip(row) {
                        *dv += gv;
                    }
                }
                Tensor::new(&b_shape, d).expect("shape")
            });
            vec![needs[0].then(|| g.clone()), db]
        }))
    }

    /// Row-wise log-softmax of `[rows, k]`.
    pub fn log_softmax_rows(&self) -> Result<Var<'g, T>> {
        let x = self.value();
        let (_, k) = x.dims2()?;
        let mut out = (*x).clone();
        for row in out.data_mut().chunks_exact_mut(k) {
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            let lse = row.iter().map(|&v| (v - max).exp()).sum::<T>().ln() + max;
            row.iter_mut().for_each(|v| *v -= lse);
        }
        let y = out.clone();
        Ok(self.graph.push(out, &[*self], move |g, _| {
            let mut dx = g.clone();
            for (drow, yrow) in dx.data_mut().chunks_exact_mut(k).zip(y.data().chunks_exact(k)) {
                let gsum: T = drow.iter().copied().sum();
                for (d, &yv) in drow.iter_mut().zip(yrow) {
                    *d -= yv.exp() * gsum;
                }
            }
            vec![Some(dx)]
        }))
    }

    /// Picks `x[r, idx[r]]` for every row: `[rows, k] -> [rows]`.
    pub fn select_per_row(&self, idx: &[usize]) -> Result<Var<'g, T>> {
        let x = self.value();
        let (rows, k) = x.dims2()?;
        if idx.len() != rows || idx.iter().any(|&i| i >= k) {
            return Err(Error::Shape(format!(
                "select_per_row: {rows}x{k} with {} indices",
                idx.len()
            )));
        }
        let out: Vec<T> = idx
            .iter()
            .enumerate()
            .map(|(r, &i)| x.data()[r * k + i])
            .collect();
        let idx = idx.to_vec();
        Ok(self
            .graph
            .push(Tensor::new(&[rows], out)?, &[*self], move |g, _| {
                let mut dx = Tensor::zeros(&[rows, k]);
                for (r, &i) in idx.iter().enumerate() {
                    dx.data_mut()[r * k + i] = g.data()[r];
                }
                vec![Some(dx)]
            }))
    }

    /// Scales every row of `[rows, d]` to unit L2 norm; `eps` guards zero rows.
    pub fn l2_normalize_rows(&self, eps: T) -> Result<Var<'g, T>> {
        let x = self.value();
        let (_, d) = x.dims2()?;
        let mut out = (*x).clone();
        let mut norms = Vec::new();
        for row in out.data_mut().chunks_exact_mut(d) {
            let norm = row.iter().map(|&v| v * v).sum::<T>().sqrt().max(eps);
            row.iter_mut().for_each(|v| *v /= norm);
            norms.push(norm);
        }
        let y = out.clone();
        Ok(self.graph.push(out, &[*self], move |g, _| {
            let mut dx = g.clone();
            for ((drow, yrow), &norm) in dx
                .data_mut()
                .chunks_exact_mut(d)
                .zip(y.data().chunks_exact(d))
                .zip(&norms)
            {
                if norm <= eps {
                    drow.iter_mut().for_each(|v| *v /= eps);
                    continue;
                }
                let dot: T = drow.iter().zip(yrow).map(|(&a, &b)| a * b).sum();
                for (dv, &yv) in drow.iter_mut().zip(yrow) {
                    *dv = (*dv - yv * dot) / norm;
                }
            }
            vec![Some(dx)]
        }))
    }

    /// Gathers channel vectors at flattened spatial positions of batch item
    /// `n`: `[N, C, H, W] -> [P, C]`.
    pub fn gather_positions(&self, n: usize, positions: &[usize]) -> Result<Var<'g, T>> {
        let x = self.value();
        let (nb, c, h, w) = x.dims4()?;
        let hw = h * w;
        if n >= nb || positions.iter().any(|&p| p >= hw) {
            return Err(Error::Shape(format!(
                "gather_positions: item {n} / positions out of range for {:?}",
                x.shape()
            )));
        }
        let base = n * c * hw;
        let p = positions.len();
        let mut out = vec![T::zero(); p * c];
        for (row, &pos) in out.chunks_exact_mut(c).zip(positions) {
            for (ch, v) in row.iter_mut().enumerate() {
                *v = x.data()[base + ch * hw + pos];
            }
        }
        let positions = positions.to_vec();
        Ok(self
            .graph
            .push(Tensor::new(&[p, c], out)?, &[*self], move |g, _| {
                let mut dx = Tensor::zeros(&[nb, c, h, w]);
                let d = dx.data_mut();
                for (row, &pos) in g.data().chunks_exact(c).zip(&positions) {
                    for (ch, &gv) in row.iter().enumerate() {
                        d[base + ch * hw + pos] += gv;
                    }
                }
                vec![Some(dx)]
            }))
    }

    /// Slices overlapping frames out of a flat signal: `numel = L -> [T, size]`
    /// with frame `t` starting at `t * hop`. Samples past the end read zero.
    pub fn frames(&self, size: usize, hop: usize, count: usize) -> Result<Var<'g, T>> {
        let x = self.value();
        let len = x.numel();
        let in_shape = x.shape().to_vec();
        if hop == 0 || size == 0 {
            return Err(Error::Shape("frames: zero size or hop".into()));
        }
        let mut out = vec![T::zero(); count * size];
        for (t, frame) in out.chunks_exact_mut(size).enumerate() {
            let start = t * hop;
            for (i, v) in frame.iter_mut().enumerate() {
                if start + i < len {
                    *v = x.data()[start + i];
                }
            }
        }
        Ok(self
            .graph
            .push(Tensor::new(&[count, size], out)?, &[*self], move |g, _| {
                let mut dx = Tensor::zeros(&in_shape);
                let d = dx.data_mut();
                for (t, frame) in g.data().chunks_exact(size).enumerate() {
                    let start = t * hop;
                    for (i, &gv) in frame.iter().enumerate() {
                        if start + i < len {
                            d[start + i] += gv;
                        }
                    }
                }
                vec![Some(dx)]
            }))
    }
    /// Per-row column gather: `out[r, j] = x[r, idx[r * m + j]]`,
    /// `[rows, k] -> [rows, m]`.
    pub fn gather_cols(&self, idx: &[usize], m: usize) -> Result<Var<'g, T>> {
        let x = self.value();
        let (rows, k) = x.dims2()?;
        if idx.len() != rows * m || idx.iter().any(|&i| i >= k) {
            return Err(Error::Shape(format!(
                "gather_cols: {rows}x{k} with {} indices for width {m}",
                idx.len()
            )));
        }
        let out: Vec<T> = idx
            .iter()
            .enumerate()
            .map(|(e, &i)| x.data()[(e / m) * k + i])
            .collect();
        let idx = idx.to_vec();
        Ok(self
            .graph
            .push(Tensor::new(&[rows, m], out)?, &[*self], move |g, _| {
                let mut dx = Tensor::zeros(&[rows, k]);
                let d = dx.data_mut();
                for (e, (&i, &gv)) in idx.iter().zip(g.data()).enumerate() {
                    d[(e / m) * k + i] += gv;
                }
                vec![Some(dx)]
            }))
    }

    /// Stacks `[a, c]` on top of `[b, c]`.
    pub fn concat_rows(&self, other: &Var<'g, T>) -> Result<Var<'g, T>> {
        let x = self.value();
        let y = other.value();
        let (a, c) = x.dims2()?;
        let (b, c2) = y.dims2()?;
        if c != c2 {
            return Err(Error::Shape(format!(
                "concat_rows: {:?} and {:?}",
                x.shape(),
                y.shape()
            )));
        }
        let mut out = x.data().to_vec();
        out.extend_from_slice(y.data());
        Ok(self
            .graph
            .push(Tensor::new(&[a + b, c], out)?, &[*self, *other], move |g, needs| {
                let top = needs[0]
                    .then(|| Tensor::new(&[a, c], g.data()[..a * c].to_vec()).expect("shape"));
                let bottom = needs[1]
                    .then(|| Tensor::new(&[b, c], g.data()[a * c..].to_vec()).expect("shape"));
                vec![top, bottom]
            }))
    }
}
