//! Scalar functions carrying their first two derivatives.

use std::fmt;
use std::sync::Arc;

/// A twice-differentiable scalar function of one variable.
pub trait ScalarFn: Send + Sync + fmt::Debug {
    fn value(&self, x: f64) -> f64;
    fn d1(&self, x: f64) -> f64;
    fn d2(&self, x: f64) -> f64;
}

pub type SharedFn = Arc<dyn ScalarFn>;

impl<F: ScalarFn + ?Sized> ScalarFn for Arc<F> {
    fn value(&self, x: f64) -> f64 {
        (**self).value(x)
    }
    fn d1(&self, x: f64) -> f64 {
        (**self).d1(x)
    }
    fn d2(&self, x: f64) -> f64 {
        (**self).d2(x)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Constant(pub f64);

impl ScalarFn for Constant {
    fn value(&self, _: f64) -> f64 {
        self.0
    }
    fn d1(&self, _: f64) -> f64 {
        0.0
    }
    fn d2(&self, _: f64) -> f64 {
        0.0
    }
}

/// `offset + slope · x`
#[derive(Clone, Copy, Debug)]
pub struct Linear {
    pub offset: f64,
    pub slope: f64,
}

impl ScalarFn for Linear {
    fn value(&self, x: f64) -> f64 {
        self.offset + self.slope * x
    }
    fn d1(&self, _: f64) -> f64 {
        self.slope
    }
    fn d2(&self, _: f64) -> f64 {
        0.0
    }
}

/// `base + amplitude · tanh(x)`, a bounded sigmoid diffusion coefficient.
#[derive(Clone, Copy, Debug)]
pub struct Sigmoid {
    pub base: f64,
    pub amplitude: f64,
}

impl ScalarFn for Sigmoid {
    fn value(&self, x: f64) -> f64 {
        self.base + self.amplitude * x.tanh()
    }
    fn d1(&self, x: f64) -> f64 {
        let th = x.tanh();
        self.amplitude * (1.0 - th * th)
    }
    fn d2(&self, x: f64) -> f64 {
        let th = x.tanh();
        -2.0 * self.amplitude * th * (1.0 - th * th)
    }
}

/// `base + amplitude · x² / (1 + x²)`
#[derive(Clone, Copy, Debug)]
pub struct RationalStep {
    pub base: f64,
    pub amplitude: f64,
}

impl ScalarFn for RationalStep {
    fn value(&self, x: f64) -> f64 {
        self.base + self.amplitude * x * x / (1.0 + x * x)
    }
    fn d1(&self, x: f64) -> f64 {
        let q = 1.0 + x * x;
        self.amplitude * 2.0 * x / (q * q)
    }
    fn d2(&self, x: f64) -> f64 {
        let q = 1.0 + x * x;
        self.amplitude * (2.0 - 6.0 * x * x) / (q * q * q)
    }
}

/// `amplitude · sin(frequency · x)`
#[derive(Clone, Copy, Debug)]
pub struct Sine {
    pub amplitude: f64,
    pub frequency: f64,
}

impl ScalarFn for Sine {
    fn value(&self, x: f64) -> f64 {
        self.amplitude * (self.frequency * x).sin()
    }
    fn d1(&self, x: f64) -> f64 {
        self.amplitude * self.frequency * (self.frequency * x).cos()
    }
    fn d2(&self, x: f64) -> f64 {
        -self.amplitude * self.frequency * self.frequency * (self.frequency * x).sin()
    }
}

/// Polynomial with coefficients in increasing degree.
#[derive(Clone, Debug)]
pub struct Polynomial(pub Vec<f64>);

impl Polynomial {
    fn eval(c: &[f64], x: f64) -> f64 {
        c.iter().rev().fold(0.0, |acc, &a| acc * x + a)
    }

    pub fn derivative(&self) -> Polynomial {
        Polynomial(self.0.iter().enumerate().skip(1).map(|(k, &a)| k as f64 * a).collect())
    }
}

impl ScalarFn for Polynomial {
    fn value(&self, x: f64) -> f64 {
        Self::eval(&self.0, x)
    }
    fn d1(&self, x: f64) -> f64 {
        Self::eval(&self.derivative().0, x)
    }
    fn d2(&self, x: f64) -> f64 {
        Self::eval(&self.derivative().derivative().0, x)
    }
}

type Real = dyn Fn(f64) -> f64 + Send + Sync;

/// A function assembled from closures, mostly for tests and ad-hoc models.
#[derive(Clone)]
pub struct FromClosures {
    pub f: Arc<Real>,
    pub df: Arc<Real>,
    pub d2f: Arc<Real>,
}

impl FromClosures {
    pub fn new(
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
        df: impl Fn(f64) -> f64 + Send + Sync + 'static,
        d2f: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self { f: Arc::new(f), df: Arc::new(df), d2f: Arc::new(d2f) }
    }
}

impl fmt::Debug for FromClosures {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("FromClosures")
    }
}

impl ScalarFn for FromClosures {
    fn value(&self, x: f64) -> f64 {
        (self.f)(x)
    }
    fn d1(&self, x: f64) -> f64 {
        (self.df)(x)
    }
    fn d2(&self, x: f64) -> f64 {
        (self.d2f)(x)
    }
}

/// Natural cubic spline through tabulated points, constant beyond the ends.
#[derive(Clone, Debug)]
pub struct Tabulated {
    xs: Vec<f64>,
    ys: Vec<f64>,
    m: Vec<f64>,
}

impl Tabulated {
    /// `xs` must be strictly increasing with at least two points.
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> crate::Result<Self> {
        let n = xs.len();
        if n < 2 || ys.len() != n {
            return Err(crate::Error::InvalidArgument(
                "tabulated function needs matching grid and values with at least two points".into(),
            ));
        }
        if xs.windows(2).any(|w| w[1] <= w[0]) || xs.iter().chain(&ys).any(|v| !v.is_finite()) {
            return Err(crate::Error::InvalidArgument(
                "tabulated grid must be finite and strictly increasing".into(),
            ));
        }
        // second derivatives by the tridiagonal (Thomas) solve
        let mut m = vec![0.0; n];
        if n > 2 {
            let mut c = vec![0.0; n];
            let mut d = vec![0.0; n];
            for i in 1..n - 1 {
                let h0 = xs[i] - xs[i - 1];
                let h1 = xs[i + 1] - xs[i];
                let rhs = 6.0 * ((ys[i + 1] - ys[i]) / h1 - (ys[i] - ys[i - 1]) / h0);
                let diag = 2.0 * (h0 + h1) - h0 * c[i - 1];
                c[i] = h1 / diag;
                d[i] = (rhs - h0 * d[i - 1]) / diag;
            }
            for i in (1..n - 1).rev() {
                m[i] = d[i] - c[i] * m[i + 1];
            }
        }
        Ok(Self { xs, ys, m })
    }

    fn locate(&self, x: f64) -> Option<usize> {
        let n = self.xs.len();
        if x < self.xs[0] || x > self.xs[n - 1] {
            return None;
        }
        let k = self.xs.partition_point(|&v| v <= x);
        Some(k.clamp(1, n - 1) - 1)
    }
}

impl ScalarFn for Tabulated {
    fn value(&self, x: f64) -> f64 {
        match self.locate(x) {
            None if x < self.xs[0] => self.ys[0],
            None => *self.ys.last().unwrap(),
            Some(i) => {
                let h = self.xs[i + 1] - self.xs[i];
                let a = (self.xs[i + 1] - x) / h;
                let b = (x - self.xs[i]) / h;
                a * self.ys[i]
                    + b * self.ys[i + 1]
                    + ((a * a * a - a) * self.m[i] + (b * b * b - b) * self.m[i + 1]) * h * h / 6.0
            }
        }
    }
    fn d1(&self, x: f64) -> f64 {
        match self.locate(x) {
            None => 0.0,
            Some(i) => {
                let h = self.xs[i + 1] - self.xs[i];
                let a = (self.xs[i + 1] - x) / h;
                let b = (x - self.xs[i]) / h;
                (self.ys[i + 1] - self.ys[i]) / h - (3.0 * a * a - 1.0) * h * self.m[i] / 6.0
                    + (3.0 * b * b - 1.0) * h * self.m[i + 1] / 6.0
            }
        }
    }
    fn d2(&self, x: f64) -> f64 {
        match self.locate(x) {
            None => 0.0,
            Some(i) => {
                let h = self.xs[i + 1] - self.xs[i];
                let a = (self.xs[i + 1] - x) / h;
                a * self.m[i] + (1.0 - a) * self.m[i + 1]
            }
        }
    }
}

/// Values on a uniform grid `t0 + k·step`, linearly interpolated and held
/// constant outside. Derivatives are the piecewise slopes.
#[derive(Clone, Debug)]
pub struct GridFn {
    pub t0: f64,
    pub step: f64,
    pub values: Vec<f64>,
}

impl GridFn {
    fn position(&self, t: f64) -> (usize, f64) {
        let n = self.values.len();
        let s = ((t - self.t0) / self.step).max(0.0);
        let k = (s.floor() as usize).min(n.saturating_sub(2));
        (k, (s - k as f64).min(1.0))
    }
}

impl ScalarFn for GridFn {
    fn value(&self, t: f64) -> f64 {
        if self.values.len() == 1 {
            return self.values[0];
        }
        let (k, w) = self.position(t);
        self.values[k] * (1.0 - w) + self.values[k + 1] * w
    }
    fn d1(&self, t: f64) -> f64 {
        if self.values.len() == 1 {
            return 0.0;
        }
        let (k, _) = self.position(t);
        (self.values[k + 1] - self.values[k]) / self.step
    }
    fn d2(&self, _: f64) -> f64 {
        0.0
    }
}

/// `inner(t + shift) − inner(shift)`: the forcing seen by a process restarted at `shift`.
#[derive(Clone, Debug)]
pub struct Shifted {
    pub inner: SharedFn,
    pub shift: f64,
}

impl ScalarFn for Shifted {
    fn value(&self, t: f64) -> f64 {
        self.inner.value(t + self.shift) - self.inner.value(self.shift)
    }
    fn d1(&self, t: f64) -> f64 {
        self.inner.d1(t + self.shift)
    }
    fn d2(&self, t: f64) -> f64 {
        self.inner.d2(t + self.shift)
    }
}
