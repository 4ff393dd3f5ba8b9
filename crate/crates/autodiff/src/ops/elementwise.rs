use std::rc::Rc;

use crate::error::{Error, Result};
use crate::graph::Var;
use crate::real::Real;
use crate::tensor::Tensor;

fn same_shape<T: Real>(op: &str, a: &Tensor<T>, b: &Tensor<T>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!(
            "{op}: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

impl<'g, T: Real> Var<'g, T> {
    /// Applies `f` elementwise; `df(x, y)` is the local derivative given
    /// input `x` and output `y`.
    fn unary(
        &self,
        f: impl Fn(T) -> T,
        df: impl Fn(T, T) -> T + 'static,
    ) -> Var<'g, T> {
        let x = self.value();
        let y = Rc::new(x.map(f));
        let y_keep = Rc::clone(&y);
        let value = (*y).clone();
        self.graph.push(value, &[*self], move |g, _| {
            let mut out = g.clone();
            for ((o, &xv), &yv) in out.data_mut().iter_mut().zip(x.data()).zip(y_keep.data()) {
                *o *= df(xv, yv);
            }
            vec![Some(out)]
        })
    }

    pub fn neg(&self) -> Var<'g, T> {
        self.scale(-T::one())
    }

    pub fn scale(&self, c: T) -> Var<'g, T> {
        let value = self.value().map(|v| v * c);
        self.graph
            .push(value, &[*self], move |g, _| vec![Some(g.map(|v| v * c))])
    }

    pub fn add_scalar(&self, c: T) -> Var<'g, T> {
        let value = self.value().map(|v| v + c);
        self.graph.push(value, &[*self], |g, _| vec![Some(g.clone())])
    }

    pub fn relu(&self) -> Var<'g, T> {
        self.unary(
            |v| v.max(T::zero()),
            |x, _| if x > T::zero() { T::one() } else { T::zero() },
        )
    }

    pub fn leaky_relu(&self, slope: T) -> Var<'g, T> {
        self.unary(
            move |v| if v > T::zero() { v } else { v * slope },
            move |x, _| if x > T::zero() { T::one() } else { slope },
        )
    }

    pub fn sigmoid(&self) -> Var<'g, T> {
        self.unary(
            |v| T::one() / (T::one() + (-v).exp()),
            |_, y| y * (T::one() - y),
        )
    }

    pub fn tanh(&self) -> Var<'g, T> {
        self.unary(|v| v.tanh(), |_, y| T::one() - y * y)
    }

    pub fn exp(&self) -> Var<'g, T> {
        self.unary(|v| v.exp(), |_, y| y)
    }

    pub fn ln(&self) -> Var<'g, T> {
        self.unary(|v| v.ln(), |x, _| T::one() / x)
    }

    /// `ln(max(x, floor))`; no gradient where the floor is active.
    pub fn ln_floor(&self, floor: T) -> Var<'g, T> {
        self.unary(
            move |v| v.max(floor).ln(),
            move |x, _| if x > floor { T::one() / x } else { T::zero() },
        )
    }

    pub fn sqrt(&self) -> Var<'g, T> {
        let two = T::one() + T::one();
        self.unary(|v| v.sqrt(), move |_, y| T::one() / (two * y))
    }

    pub fn square(&self) -> Var<'g, T> {
        let two = T::one() + T::one();
        self.unary(|v| v * v, move |x, _| two * x)
    }

    /// Subgradient 0 at the origin.
    pub fn abs(&self) -> Var<'g, T> {
        self.unary(
            |v| v.abs(),
            |x, _| {
                if x > T::zero() {
                    T::one()
                } else if x < T::zero() {
                    -T::one()
                } else {
                    T::zero()
                }
            },
        )
    }

    /// Clamp with straight-through gradient inside `[lo, hi]`.
    pub fn clamp(&self, lo: T, hi: T) -> Var<'g, T> {
        self.unary(
            move |v| v.max(lo).min(hi),
            move |x, _| {
                if x >= lo && x <= hi {
                    T::one()
                } else {
                    T::zero()
                }
            },
        )
    }

    pub fn add(&self, other: &Var<'g, T>) -> Result<Var<'g, T>> {
        let (a, b) = (self.value(), other.value());
        same_shape("add", &a, &b)?;
        let value = a.zip_map(&b, |x, y| x + y);
        Ok(self.graph.push(value, &[*self, *other], |g, _| {
            vec![Some(g.clone()), Some(g.clone())]
        }))
    }

    pub fn sub(&self, other: &Var<'g, T>) -> Result<Var<'g, T>> {
        let (a, b) = (self.value(), other.value());
        same_shape("sub", &a, &b)?;
        let value = a.zip_map(&b, |x, y| x - y);
        Ok(self.graph.push(value, &[*self, *other], |g, _| {
            vec![Some(g.clone()), Some(g.map(|v| -v))]
        }))
    }

    pub fn mul(&self, other: &Var<'g, T>) -> Result<Var<'g, T>> {
        let (a, b) = (self.value(), other.value());
        same_shape("mul", &a, &b)?;
        let value = a.zip_map(&b, |x, y| x * y);
        Ok(self.graph.push(value, &[*self, *other], move |g, needs| {
            vec![
                needs[0].then(|| g.zip_map(&b, |gv, bv| gv * bv)),
                needs[1].then(|| g.zip_map(&a, |gv, av| gv * av)),
            ]
        }))
    }

    pub fn div(&self, other: &Var<'g, T>) -> Result<Var<'g, T>> {
        let (a, b) = (self.value(), other.value());
        same_shape("div", &a, &b)?;
        let value = a.zip_map(&b, |x, y| x / y);
        Ok(self.graph.push(value, &[*self, *other], move |g, needs| {
            let ga = needs[0].then(|| g.zip_map(&b, |gv, bv| gv / bv));
            let gb = needs[1].then(|| {
                let mut out = g.clone();
                for ((o, &av), &bv) in out.data_mut().iter_mut().zip(a.data()).zip(b.data()) {
                    *o = -*o * av / (bv * bv);
                }
                out
            });
            vec![ga, gb]
        }))
    }

    /// Elementwise product with a constant tensor (e.g. a dropout mask).
    pub fn mul_const(&self, mask: &Tensor<T>) -> Result<Var<'g, T>> {
        let a = self.value();
        same_shape("mul_const", &a, mask)?;
        let value = a.zip_map(mask, |x, m| x * m);
        let mask = mask.clone();
        Ok(self.graph.push(value, &[*self], move |g, _| {
            vec![Some(g.zip_map(&mask, |gv, m| gv * m))]
        }))
    }

    /// Sum of scalar-shaped (one element) nodes.
    pub fn sum_scalars(items: &[Var<'g, T>]) -> Result<Var<'g, T>> {
        let first = items
            .first()
            .ok_or_else(|| Error::Shape("sum_scalars of nothing".into()))?;
        let mut total = T::zero();
        let mut shapes = Vec::with_capacity(items.len());
        for v in items {
            let val = v.value();
            if val.numel() != 1 {
                return Err(Error::Shape(format!("sum_scalars: shape {:?}", val.shape())));
            }
            total += val.item();
            shapes.push(val.shape().to_vec());
        }
        Ok(first
            .graph
            .push(Tensor::scalar(total), items, move |g, _| {
                shapes.iter().map(|s| Some(Tensor::full(s, g.item()))).collect()
            }))
    }
}
