//! Probability scalar abstraction.
//!
//! The engine, the exact enumerator and the residual/composition algebra are
//! written once against [`Scalar`] and instantiated with `f64` for production
//! runs, `f32` for low-footprint sweeps and [`BigRational`] when results must
//! be compared bit-for-bit against the exhaustive oracle.

use std::fmt::Debug;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Num, ToPrimitive};

/// Probability-valued number used throughout the model.
pub trait Scalar: Num + Clone + Debug + PartialOrd + Send + Sync + 'static {
    /// `num / den`; `den` must be non-zero.
    fn from_ratio(num: u64, den: u64) -> Self;

    fn from_f64(x: f64) -> Self;

    fn to_f64(&self) -> f64;

    /// One step of a compensated running sum. Exact types just add.
    fn compensated_add(sum: &mut Self, _carry: &mut Self, x: Self) {
        let s = std::mem::replace(sum, Self::zero());
        *sum = s + x;
    }

    fn from_count(n: u64) -> Self {
        Self::from_ratio(n, 1)
    }

    /// Clamps tiny negative round-off to zero. Exact types are returned as-is.
    fn clamp_non_negative(self) -> Self {
        if self < Self::zero() {
            Self::zero()
        } else {
            self
        }
    }
}

macro_rules! float_scalar {
    ($t:ty) => {
        impl Scalar for $t {
            fn from_ratio(num: u64, den: u64) -> Self {
                (num as f64 / den as f64) as $t
            }

            fn from_f64(x: f64) -> Self {
                x as $t
            }

            fn to_f64(&self) -> f64 {
                *self as f64
            }

            // Neumaier's variant of Kahan summation.
            fn compensated_add(sum: &mut Self, carry: &mut Self, x: Self) {
                let t = *sum + x;
                if sum.abs() >= x.abs() {
                    *carry += (*sum - t) + x;
                } else {
                    *carry += (x - t) + *sum;
                }
                *sum = t;
            }
        }
    };
}

float_scalar!(f32);
float_scalar!(f64);

impl Scalar for BigRational {
    fn from_ratio(num: u64, den: u64) -> Self {
        BigRational::new(BigInt::from(num), BigInt::from(den))
    }

    fn from_f64(x: f64) -> Self {
        BigRational::from_float(x).expect("finite probability")
    }

    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }
}

/// Running compensated sum over a [`Scalar`].
#[derive(Debug, Clone)]
pub struct Accumulator<T: Scalar> {
    sum: T,
    carry: T,
}

impl<T: Scalar> Default for Accumulator<T> {
    fn default() -> Self {
        Self {
            sum: T::zero(),
            carry: T::zero(),
        }
    }
}

impl<T: Scalar> Accumulator<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: T) {
        T::compensated_add(&mut self.sum, &mut self.carry, x);
    }

    pub fn value(&self) -> T {
        self.sum.clone() + self.carry.clone()
    }
}

/// Compensated sum of an iterator.
pub fn sum<T: Scalar, I: IntoIterator<Item = T>>(iter: I) -> T {
    let mut acc = Accumulator::new();
    for x in iter {
        acc.add(x);
    }
    acc.value()
}

/// `base^exp` by repeated squaring; `0^0 == 1`.
pub fn powu<T: Scalar>(base: &T, exp: u32) -> T {
    if exp == 0 {
        return T::one();
    }
    num_traits::pow(base.clone(), exp as usize)
}

/// Pascal's triangle up to `n` rows, stored in the scalar type.
#[derive(Debug, Clone)]
pub struct Binomials<T: Scalar> {
    rows: Vec<Vec<T>>,
}

impl<T: Scalar> Binomials<T> {
    pub fn new(n: usize) -> Self {
        let mut rows: Vec<Vec<T>> = Vec::with_capacity(n + 1);
        for r in 0..=n {
            let mut row = vec![T::one(); r + 1];
            for k in 1..r {
                row[k] = rows[r - 1][k - 1].clone() + rows[r - 1][k].clone();
            }
            rows.push(row);
        }
        Self { rows }
    }

    /// `C(n, k)`, zero when `k > n`.
    pub fn choose(&self, n: usize, k: usize) -> T {
        if k > n {
            return T::zero();
        }
        self.rows[n][k].clone()
    }

    /// Multinomial coefficient `n! / (a! b! (n-a-b)!)`.
    pub fn trinomial(&self, n: usize, a: usize, b: usize) -> T {
        if a + b > n {
            return T::zero();
        }
        self.choose(n, a) * self.choose(n - a, b)
    }
}

pub(crate) fn is_zero<T: Scalar>(x: &T) -> bool {
    x.is_zero()
}

pub(crate) fn is_one<T: Scalar>(x: &T) -> bool {
    x.is_one()
}
