//! Truncated power series in time.
//!
//! A [`Series`] holds normalized Taylor coefficients `c_k` of
//! `f(t0 + s) = Σ c_k s^k`. Binary operations extend shorter operands with
//! zeros, which is exact for constants (length one).

use std::ops::{Add, Div, Mul, Neg, Sub};

use super::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct Series(pub Vec<f64>);

impl Series {
    pub fn constant(c: f64) -> Self {
        Series(vec![c])
    }

    /// `t0 + s` truncated to `len` coefficients.
    pub fn variable(t0: f64, len: usize) -> Self {
        let mut c = vec![0.0; len.max(1)];
        c[0] = t0;
        if len > 1 {
            c[1] = 1.0;
        }
        Series(c)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn coeff(&self, k: usize) -> f64 {
        self.0.get(k).copied().unwrap_or(0.0)
    }

    fn zeros(len: usize) -> Self {
        Series(vec![0.0; len])
    }

    fn lift(&self, f: impl Fn(f64) -> f64) -> Self {
        let mut out = Self::zeros(self.len());
        out.0[0] = f(self.0[0]);
        out
    }
}

impl Add for Series {
    type Output = Series;
    fn add(self, rhs: Series) -> Series {
        let len = self.len().max(rhs.len());
        Series((0..len).map(|k| self.coeff(k) + rhs.coeff(k)).collect())
    }
}

impl Sub for Series {
    type Output = Series;
    fn sub(self, rhs: Series) -> Series {
        let len = self.len().max(rhs.len());
        Series((0..len).map(|k| self.coeff(k) - rhs.coeff(k)).collect())
    }
}

impl Neg for Series {
    type Output = Series;
    fn neg(self) -> Series {
        Series(self.0.into_iter().map(|c| -c).collect())
    }
}

impl Mul for Series {
    type Output = Series;
    fn mul(self, rhs: Series) -> Series {
        let len = self.len().max(rhs.len());
        let mut out = vec![0.0; len];
        for (i, &a) in self.0.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            for (j, &b) in rhs.0.iter().enumerate().take(len - i) {
                out[i + j] += a * b;
            }
        }
        Series(out)
    }
}

impl Div for Series {
    type Output = Series;
    fn div(self, rhs: Series) -> Series {
        let len = self.len().max(rhs.len());
        let b0 = rhs.0[0];
        let mut q = vec![0.0; len];
        for k in 0..len {
            let mut acc = self.coeff(k);
            for j in 1..=k {
                acc -= rhs.coeff(j) * q[k - j];
            }
            q[k] = acc / b0;
        }
        Series(q)
    }
}

impl Scalar for Series {
    fn from_f64(c: f64) -> Self {
        Series::constant(c)
    }

    fn value(&self) -> f64 {
        self.0[0]
    }

    fn scale(&self, c: f64) -> Self {
        Series(self.0.iter().map(|v| c * v).collect())
    }

    fn exp(&self) -> Self {
        let a = &self.0;
        let mut e = vec![0.0; a.len()];
        e[0] = a[0].exp();
        for k in 1..a.len() {
            let s: f64 = (1..=k).map(|j| j as f64 * a[j] * e[k - j]).sum();
            e[k] = s / k as f64;
        }
        Series(e)
    }

    fn sin(&self) -> Self {
        sin_cos(self).0
    }

    fn cos(&self) -> Self {
        sin_cos(self).1
    }

    fn ln(&self) -> Self {
        let a = &self.0;
        let mut l = vec![0.0; a.len()];
        l[0] = a[0].ln();
        for k in 1..a.len() {
            let s: f64 = (1..k).map(|j| j as f64 * l[j] * a[k - j]).sum();
            l[k] = (a[k] - s / k as f64) / a[0];
        }
        Series(l)
    }

    fn sqrt(&self) -> Self {
        let a = &self.0;
        let r0 = a[0].sqrt();
        if r0 == 0.0 {
            // not differentiable at the origin; keep the value, drop the slope
            return self.lift(|_| 0.0);
        }
        let mut r = vec![0.0; a.len()];
        r[0] = r0;
        for k in 1..a.len() {
            let s: f64 = (1..k).map(|j| r[j] * r[k - j]).sum();
            r[k] = (a[k] - s) / (2.0 * r0);
        }
        Series(r)
    }

    fn abs(&self) -> Self {
        if self.0[0] < 0.0 {
            -self.clone()
        } else {
            self.clone()
        }
    }

    fn powi(&self, n: i32) -> Self {
        if n < 0 {
            return Series::constant(1.0) / self.powi(-n);
        }
        let mut result = Series::constant(1.0);
        let mut base = self.clone();
        let mut e = n as u32;
        while e > 0 {
            if e & 1 == 1 {
                result = result * base.clone();
            }
            e >>= 1;
            if e > 0 {
                base = base.clone() * base;
            }
        }
        if result.len() < self.len() {
            result.0.resize(self.len(), 0.0);
        }
        result
    }

    fn powf(&self, r: f64) -> Self {
        let a = &self.0;
        let mut y = vec![0.0; a.len()];
        y[0] = a[0].powf(r);
        if a[0] == 0.0 {
            return Series(y);
        }
        for k in 1..a.len() {
            let s: f64 = (1..=k).map(|j| ((r + 1.0) * j as f64 - k as f64) * a[j] * y[k - j]).sum();
            y[k] = s / (k as f64 * a[0]);
        }
        Series(y)
    }
}

fn sin_cos(x: &Series) -> (Series, Series) {
    let a = &x.0;
    let n = a.len();
    let mut s = vec![0.0; n];
    let mut c = vec![0.0; n];
    s[0] = a[0].sin();
    c[0] = a[0].cos();
    for k in 1..n {
        let mut ss = 0.0;
        let mut cc = 0.0;
        for j in 1..=k {
            ss += j as f64 * a[j] * c[k - j];
            cc += j as f64 * a[j] * s[k - j];
        }
        s[k] = ss / k as f64;
        c[k] = -cc / k as f64;
    }
    (Series(s), Series(c))
}
