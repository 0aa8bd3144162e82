//! Floating-point scalar abstraction shared by every grid operation.

use std::fmt::{Debug, Display};

use ndarray::ScalarOperand;
use num_traits::{Float, FloatConst, FromPrimitive, NumAssignOps, ToPrimitive};
use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rustdct::DctNum;
use rustfft::FftNum;

/// Real scalar type the simulation and solvers are generic over: `f32` or `f64`.
pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssignOps
    + FftNum
    + DctNum
    + ScalarOperand
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from an `f64` literal.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal representable in scalar type")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    #[inline]
    fn from_usize_lossy(v: usize) -> Self {
        Self::from_usize(v).expect("usize representable in scalar type")
    }

    /// Draws from a Poisson law with the given (possibly non-integer) mean.
    /// A non-positive mean yields zero.
    fn sample_poisson<R: Rng + ?Sized>(mean: Self, rng: &mut R) -> Self;

    /// Draws from the standard normal law.
    fn sample_standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self;
}

macro_rules! impl_scalar {
    ($t:ty) => {
        impl Scalar for $t {
            fn sample_poisson<R: Rng + ?Sized>(mean: Self, rng: &mut R) -> Self {
                if !(mean > 0.0) {
                    return 0.0;
                }
                match Poisson::new(mean) {
                    Ok(d) => d.sample(rng),
                    // Beyond rand_distr's supported range the normal limit is exact to
                    // far better than the sensor's quantization step.
                    Err(_) => {
                        let z: $t = StandardNormal.sample(rng);
                        (mean + mean.sqrt() * z).round().max(0.0)
                    }
                }
            }

            fn sample_standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
                StandardNormal.sample(rng)
            }
        }
    };
}

impl_scalar!(f32);
impl_scalar!(f64);
