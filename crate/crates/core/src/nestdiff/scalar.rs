use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

/// Real scalar type that residuals and objectives are written against.
///
/// Implemented by `f64` and by [`Dual`] over any `Scalar`, so a single
/// generic evaluator can be run at any derivative depth.
pub trait Scalar:
    Clone
    + Debug
    + Send
    + Sync
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
{
    fn from_f64(v: f64) -> Self;
    /// The depth-0 real value.
    fn value(&self) -> f64;
    fn exp(&self) -> Self;
    fn ln(&self) -> Self;
    fn sqrt(&self) -> Self;
    fn sin(&self) -> Self;
    fn cos(&self) -> Self;
    fn powi(&self, n: i32) -> Self;

    fn recip(&self) -> Self {
        Self::from_f64(1.0) / self.clone()
    }
}

impl Scalar for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn value(&self) -> f64 {
        *self
    }
    fn exp(&self) -> Self {
        f64::exp(*self)
    }
    fn ln(&self) -> Self {
        f64::ln(*self)
    }
    fn sqrt(&self) -> Self {
        f64::sqrt(*self)
    }
    fn sin(&self) -> Self {
        f64::sin(*self)
    }
    fn cos(&self) -> Self {
        f64::cos(*self)
    }
    fn powi(&self, n: i32) -> Self {
        f64::powi(*self, n)
    }
}

/// Forward-mode dual number `re + du·ε` with `ε² = 0`.
///
/// Nesting `Dual<Dual<f64>>` gives independent infinitesimals per level, so
/// the innermost-to-outermost `du` chain carries mixed partial derivatives.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dual<T> {
    pub re: T,
    pub du: T,
}

pub type D1 = Dual<f64>;
pub type D2 = Dual<D1>;
pub type D3 = Dual<D2>;

impl<T: Scalar> Dual<T> {
    pub fn new(re: T, du: T) -> Self {
        Dual { re, du }
    }

    pub fn constant(re: T) -> Self {
        Dual {
            re,
            du: T::from_f64(0.0),
        }
    }
}

impl<T: Scalar> Add for Dual<T> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Dual::new(self.re + rhs.re, self.du + rhs.du)
    }
}

impl<T: Scalar> Sub for Dual<T> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Dual::new(self.re - rhs.re, self.du - rhs.du)
    }
}

impl<T: Scalar> Mul for Dual<T> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        let du = self.du * rhs.re.clone() + self.re.clone() * rhs.du;
        Dual::new(self.re * rhs.re, du)
    }
}

impl<T: Scalar> Div for Dual<T> {
    type Output = Self;
    fn div(self, rhs: Self) -> Self {
        let q = self.re / rhs.re.clone();
        let du = (self.du - q.clone() * rhs.du) / rhs.re;
        Dual::new(q, du)
    }
}

impl<T: Scalar> Neg for Dual<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Dual::new(-self.re, -self.du)
    }
}

impl<T: Scalar> Add<f64> for Dual<T> {
    type Output = Self;
    fn add(self, rhs: f64) -> Self {
        Dual::new(self.re + rhs, self.du)
    }
}

impl<T: Scalar> Sub<f64> for Dual<T> {
    type Output = Self;
    fn sub(self, rhs: f64) -> Self {
        Dual::new(self.re - rhs, self.du)
    }
}

impl<T: Scalar> Mul<f64> for Dual<T> {
    type Output = Self;
    fn mul(self, rhs: f64) -> Self {
        Dual::new(self.re * rhs, self.du * rhs)
    }
}

impl<T: Scalar> Div<f64> for Dual<T> {
    type Output = Self;
    fn div(self, rhs: f64) -> Self {
        Dual::new(self.re / rhs, self.du / rhs)
    }
}

impl<T: Scalar> Scalar for Dual<T> {
    fn from_f64(v: f64) -> Self {
        Dual::constant(T::from_f64(v))
    }

    fn value(&self) -> f64 {
        self.re.value()
    }

    fn exp(&self) -> Self {
        let e = self.re.exp();
        Dual::new(e.clone(), self.du.clone() * e)
    }

    fn ln(&self) -> Self {
        Dual::new(self.re.ln(), self.du.clone() / self.re.clone())
    }

    fn sqrt(&self) -> Self {
        let s = self.re.sqrt();
        Dual::new(s.clone(), self.du.clone() / (s * 2.0))
    }

    fn sin(&self) -> Self {
        Dual::new(self.re.sin(), self.du.clone() * self.re.cos())
    }

    fn cos(&self) -> Self {
        Dual::new(self.re.cos(), -(self.du.clone() * self.re.sin()))
    }

    fn powi(&self, n: i32) -> Self {
        match n {
            0 => Self::from_f64(1.0),
            1 => self.clone(),
            _ => Dual::new(
                self.re.powi(n),
                self.du.clone() * self.re.powi(n - 1) * f64::from(n),
            ),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn depth_zero_is_plain_f64() {
        let a: f64 = Scalar::exp(&0.5);
        assert_eq!(a, 0.5f64.exp());
        assert_eq!(<f64 as Scalar>::powi(&3.0, 3), 27.0);
    }

    #[test]
    fn product_rule() {
        // Δy = Δx₁·x₂ + x₁·Δx₂
        let x1 = Dual::new(3.0, 0.5);
        let x2 = Dual::new(-2.0, 4.0);
        let y = x1 * x2;
        assert_eq!(y.re, -6.0);
        assert_eq!(y.du, 0.5 * -2.0 + 3.0 * 4.0);
    }

    #[test]
    fn elementary_derivatives() {
        let x = Dual::new(0.7, 1.0);
        assert!((x.exp().du - 0.7f64.exp()).abs() < 1e-15);
        assert!((x.ln().du - 1.0 / 0.7).abs() < 1e-15);
        assert!((x.sqrt().du - 0.5 / 0.7f64.sqrt()).abs() < 1e-15);
        assert!((x.sin().du - 0.7f64.cos()).abs() < 1e-15);
        assert!((x.cos().du + 0.7f64.sin()).abs() < 1e-15);
        assert!((x.powi(3).du - 3.0 * 0.49).abs() < 1e-15);
        assert!((x.recip().du + 1.0 / 0.49).abs() < 1e-14);
        assert!(((x / Dual::new(2.0, 0.0)).du - 0.5).abs() < 1e-15);
    }

    #[test]
    fn nested_second_derivative() {
        // f(x) = x³ at x = 2: f'' = 12
        let x: D2 = Dual::new(Dual::new(2.0, 1.0), Dual::new(1.0, 0.0));
        let y = x.clone() * x.clone() * x;
        assert_eq!(y.re.re, 8.0);
        assert_eq!(y.du.re, 12.0);
        assert_eq!(y.re.du, 12.0);
        assert_eq!(y.du.du, 12.0);
    }
}
