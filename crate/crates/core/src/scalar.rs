/// Floating-point scalar for all numerics: f32 or f64.
pub trait Real:
    num_traits::Float
    + num_traits::FromPrimitive
    + num_traits::NumCast
    + std::iter::Sum
    + std::fmt::Debug
    + std::fmt::Display
    + std::fmt::LowerExp
    + Send
    + Sync
    + 'static
{
    /// Shorthand for lossy conversion from f64 literals.
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 converts into every Real")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("every Real converts to f64")
    }

    fn of_usize(x: usize) -> Self {
        Self::from_usize(x).expect("usize fits every Real (lossily)")
    }
}

impl Real for f32 {}
impl Real for f64 {}
