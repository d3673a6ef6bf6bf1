//! Scalar abstraction for the numeric kernels.
//!
//! Mesh geometry, sparse linear algebra, quadrature and spline fitting are
//! generic over [`Real`], so the kernels run in `f32` as well as `f64`.
//! The simulation layers use the `f64` aliases exported at the crate root.

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating-point scalar usable by the numeric kernels.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + std::fmt::Debug
    + std::fmt::Display
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from `f64`, used for literals inside generic code.
    fn from_f64_lit(v: f64) -> Self {
        Self::from_f64(v).expect("literal not representable in scalar type")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().expect("scalar not representable as f64")
    }
}

impl Real for f32 {}
impl Real for f64 {}
