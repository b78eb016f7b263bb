//! Scalar abstraction over `f64` and forward-mode dual numbers.
//!
//! All smoothed dynamics, cost and boundary functions in this crate are
//! written generically over [`Scalar`] so the same code path yields values
//! (`f64`), first derivatives (`Dual<N, f64>`) and second derivatives
//! (`Dual<N, Dual<M, f64>>`, nested) without hand-derived Jacobians.

use std::fmt::Debug;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

/// Field-like scalar with the elementary functions the dynamics need.
pub trait Scalar:
    Copy
    + Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
{
    /// Lift a constant. Derivative parts are zero.
    fn c(x: f64) -> Self;
    /// Innermost real part; used for branch decisions only.
    fn value(self) -> f64;

    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn tan(self) -> Self;
    fn sqrt(self) -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn tanh(self) -> Self;
    /// Four-quadrant arctangent, `self` is the ordinate.
    fn atan2(self, x: Self) -> Self;
    fn powi(self, n: i32) -> Self;
    fn abs(self) -> Self;

    fn zero() -> Self {
        Self::c(0.0)
    }
    fn one() -> Self {
        Self::c(1.0)
    }
    fn max_by_value(self, other: Self) -> Self {
        if self.value() >= other.value() {
            self
        } else {
            other
        }
    }
    fn min_by_value(self, other: Self) -> Self {
        if self.value() <= other.value() {
            self
        } else {
            other
        }
    }
    /// Clamp by value part; derivative is that of the active branch.
    fn clamp_by_value(self, lo: f64, hi: f64) -> Self {
        if self.value() < lo {
            Self::c(lo)
        } else if self.value() > hi {
            Self::c(hi)
        } else {
            self
        }
    }
}

impl Scalar for f64 {
    #[inline]
    fn c(x: f64) -> Self {
        x
    }
    #[inline]
    fn value(self) -> f64 {
        self
    }
    #[inline]
    fn sin(self) -> Self {
        f64::sin(self)
    }
    #[inline]
    fn cos(self) -> Self {
        f64::cos(self)
    }
    #[inline]
    fn tan(self) -> Self {
        f64::tan(self)
    }
    #[inline]
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    #[inline]
    fn exp(self) -> Self {
        f64::exp(self)
    }
    #[inline]
    fn ln(self) -> Self {
        f64::ln(self)
    }
    #[inline]
    fn tanh(self) -> Self {
        f64::tanh(self)
    }
    #[inline]
    fn atan2(self, x: Self) -> Self {
        f64::atan2(self, x)
    }
    #[inline]
    fn powi(self, n: i32) -> Self {
        f64::powi(self, n)
    }
    #[inline]
    fn abs(self) -> Self {
        f64::abs(self)
    }
}

/// Forward-mode dual number with `N` tangent lanes over a base scalar `T`.
///
/// Nesting (`Dual<N, Dual<M, f64>>`) propagates exact second derivatives,
/// which is how collocation Jacobians of the costate equations are built.
#[derive(Copy, Clone, Debug)]
pub struct Dual<const N: usize, T> {
    pub re: T,
    pub eps: [T; N],
}

impl<const N: usize, T: Scalar> Dual<N, T> {
    #[inline]
    pub fn new(re: T) -> Self {
        Dual { re, eps: [T::zero(); N] }
    }

    /// Variable seeded with unit tangent in `lane`.
    #[inline]
    pub fn var(re: T, lane: usize) -> Self {
        let mut d = Self::new(re);
        d.eps[lane] = T::one();
        d
    }

    /// Apply a scalar function with value `v` and derivative `d` at `self.re`.
    #[inline]
    fn chain(self, v: T, d: T) -> Self {
        let mut eps = self.eps;
        for e in eps.iter_mut() {
            *e = *e * d;
        }
        Dual { re: v, eps }
    }
}

impl<const N: usize, T: Scalar> Add for Dual<N, T> {
    type Output = Self;
    #[inline]
    fn add(mut self, rhs: Self) -> Self {
        self.re = self.re + rhs.re;
        for i in 0..N {
            self.eps[i] = self.eps[i] + rhs.eps[i];
        }
        self
    }
}

impl<const N: usize, T: Scalar> Sub for Dual<N, T> {
    type Output = Self;
    #[inline]
    fn sub(mut self, rhs: Self) -> Self {
        self.re = self.re - rhs.re;
        for i in 0..N {
            self.eps[i] = self.eps[i] - rhs.eps[i];
        }
        self
    }
}

impl<const N: usize, T: Scalar> Mul for Dual<N, T> {
    type Output = Self;
    #[inline]
    fn mul(self, rhs: Self) -> Self {
        let mut eps = [T::zero(); N];
        for i in 0..N {
            eps[i] = self.eps[i] * rhs.re + self.re * rhs.eps[i];
        }
        Dual { re: self.re * rhs.re, eps }
    }
}

impl<const N: usize, T: Scalar> Div for Dual<N, T> {
    type Output = Self;
    #[inline]
    fn div(self, rhs: Self) -> Self {
        let q = self.re / rhs.re;
        let mut eps = [T::zero(); N];
        for i in 0..N {
            eps[i] = (self.eps[i] - q * rhs.eps[i]) / rhs.re;
        }
        Dual { re: q, eps }
    }
}

impl<const N: usize, T: Scalar> Neg for Dual<N, T> {
    type Output = Self;
    #[inline]
    fn neg(mut self) -> Self {
        self.re = -self.re;
        for e in self.eps.iter_mut() {
            *e = -*e;
        }
        self
    }
}

impl<const N: usize, T: Scalar> AddAssign for Dual<N, T> {
    #[inline]
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}
impl<const N: usize, T: Scalar> SubAssign for Dual<N, T> {
    #[inline]
    fn sub_assign(&mut self, rhs: Self) {
        *self = *self - rhs;
    }
}
impl<const N: usize, T: Scalar> MulAssign for Dual<N, T> {
    #[inline]
    fn mul_assign(&mut self, rhs: Self) {
        *self = *self * rhs;
    }
}

impl<const N: usize, T: Scalar> Scalar for Dual<N, T> {
    #[inline]
    fn c(x: f64) -> Self {
        Dual::new(T::c(x))
    }
    #[inline]
    fn value(self) -> f64 {
        self.re.value()
    }
    #[inline]
    fn sin(self) -> Self {
        self.chain(self.re.sin(), self.re.cos())
    }
    #[inline]
    fn cos(self) -> Self {
        self.chain(self.re.cos(), -self.re.sin())
    }
    #[inline]
    fn tan(self) -> Self {
        let v = self.re.tan();
        self.chain(v, T::one() + v * v)
    }
    #[inline]
    fn sqrt(self) -> Self {
        let v = self.re.sqrt();
        self.chain(v, T::c(0.5) / v)
    }
    #[inline]
    fn exp(self) -> Self {
        let v = self.re.exp();
        self.chain(v, v)
    }
    #[inline]
    fn ln(self) -> Self {
        self.chain(self.re.ln(), T::one() / self.re)
    }
    #[inline]
    fn tanh(self) -> Self {
        let v = self.re.tanh();
        self.chain(v, T::one() - v * v)
    }
    fn atan2(self, x: Self) -> Self {
        let v = self.re.atan2(x.re);
        let s = x.re * x.re + self.re * self.re;
        let mut eps = [T::zero(); N];
        for i in 0..N {
            eps[i] = (x.re * self.eps[i] - self.re * x.eps[i]) / s;
        }
        Dual { re: v, eps }
    }
    fn powi(self, n: i32) -> Self {
        if n == 0 {
            return Self::one();
        }
        self.chain(self.re.powi(n), T::c(n as f64) * self.re.powi(n - 1))
    }
    #[inline]
    fn abs(self) -> Self {
        if self.re.value() >= 0.0 {
            self
        } else {
            -self
        }
    }
}

/// Value and gradient of `f` at `x` using one dual pass per `LANES` inputs.
pub fn gradient<const LANES: usize>(
    f: impl Fn(&[Dual<LANES, f64>]) -> Dual<LANES, f64>,
    x: &[f64],
) -> (f64, Vec<f64>) {
    let n = x.len();
    let mut grad = vec![0.0; n];
    let mut value = 0.0;
    let mut base = 0;
    while base < n || (n == 0 && base == 0) {
        let args: Vec<Dual<LANES, f64>> = x
            .iter()
            .enumerate()
            .map(|(j, &xj)| {
                if j >= base && j < base + LANES {
                    Dual::var(xj, j - base)
                } else {
                    Dual::new(xj)
                }
            })
            .collect();
        let out = f(&args);
        value = out.re;
        for lane in 0..LANES.min(n.saturating_sub(base)) {
            grad[base + lane] = out.eps[lane];
        }
        base += LANES.max(1);
        if n == 0 {
            break;
        }
    }
    (value, grad)
}
