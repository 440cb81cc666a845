use std::fmt;

use num_traits::Float;

/// Element type for tensor math. The toolkit runs in two precisions:
/// `f32` for training and inference, `f64` for gradient-check mode.
pub trait Scalar:
    Float + num_traits::NumAssignOps + Default + fmt::Debug + fmt::Display + Send + Sync + 'static
{
    fn from_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Scalar for f32 {
    #[inline]
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    #[inline]
    fn from_f64(v: f64) -> Self {
        v
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
}
