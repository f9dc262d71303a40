//! Scalar types flowing through the network.
//!
//! The forward and backward passes are written once, generic over
//! [`Scalar`]. Running them with [`Dual`] activations (tangent along a
//! fixed image-space direction) differentiates the whole adjoint graph in
//! forward mode, which yields Hessian–vector products and the mixed
//! parameter derivative `∂θ ⟨∇ₓR, v⟩` without a second reverse sweep.

use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use super::activation::{phi, phi_d1, phi_d2};

pub trait Scalar:
    Copy
    + Default
    + Send
    + Sync
    + std::fmt::Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + 'static
{
    fn from_f64(v: f64) -> Self;
    fn value(self) -> f64;
    fn scale(self, w: f64) -> Self;
    /// `φ(self)` with the tangent propagated.
    fn act(self) -> Self;
    /// `φ'(self)` with the tangent propagated.
    fn act_d1(self) -> Self;

    /// Number of `f64` components; a slice of scalars is laid out as
    /// interleaved components.
    const LANES: usize;
    fn as_lanes(s: &[Self]) -> &[f64];
    fn as_lanes_mut(s: &mut [Self]) -> &mut [f64];
}

impl Scalar for f64 {
    #[inline(always)]
    fn from_f64(v: f64) -> Self {
        v
    }
    #[inline(always)]
    fn value(self) -> f64 {
        self
    }
    #[inline(always)]
    fn scale(self, w: f64) -> Self {
        self * w
    }
    #[inline(always)]
    fn act(self) -> Self {
        phi(self)
    }
    #[inline(always)]
    fn act_d1(self) -> Self {
        phi_d1(self)
    }

    const LANES: usize = 1;

    fn as_lanes(s: &[Self]) -> &[f64] {
        s
    }

    fn as_lanes_mut(s: &mut [Self]) -> &mut [f64] {
        s
    }
}

/// First-order dual number `v + ε d`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
#[repr(C)]
pub struct Dual {
    pub v: f64,
    pub d: f64,
}

impl Dual {
    #[inline(always)]
    pub fn new(v: f64, d: f64) -> Self {
        Dual { v, d }
    }
}

impl Add for Dual {
    type Output = Dual;
    #[inline(always)]
    fn add(self, o: Dual) -> Dual {
        Dual::new(self.v + o.v, self.d + o.d)
    }
}

impl Sub for Dual {
    type Output = Dual;
    #[inline(always)]
    fn sub(self, o: Dual) -> Dual {
        Dual::new(self.v - o.v, self.d - o.d)
    }
}

impl Mul for Dual {
    type Output = Dual;
    #[inline(always)]
    fn mul(self, o: Dual) -> Dual {
        Dual::new(self.v * o.v, self.d * o.v + self.v * o.d)
    }
}

impl Neg for Dual {
    type Output = Dual;
    #[inline(always)]
    fn neg(self) -> Dual {
        Dual::new(-self.v, -self.d)
    }
}

impl AddAssign for Dual {
    #[inline(always)]
    fn add_assign(&mut self, o: Dual) {
        self.v += o.v;
        self.d += o.d;
    }
}

impl Scalar for Dual {
    #[inline(always)]
    fn from_f64(v: f64) -> Self {
        Dual::new(v, 0.0)
    }
    #[inline(always)]
    fn value(self) -> f64 {
        self.v
    }
    #[inline(always)]
    fn scale(self, w: f64) -> Self {
        Dual::new(self.v * w, self.d * w)
    }
    #[inline(always)]
    fn act(self) -> Self {
        Dual::new(phi(self.v), phi_d1(self.v) * self.d)
    }
    #[inline(always)]
    fn act_d1(self) -> Self {
        Dual::new(phi_d1(self.v), phi_d2(self.v) * self.d)
    }

    const LANES: usize = 2;

    fn as_lanes(s: &[Self]) -> &[f64] {
        // SAFETY: `Dual` is `repr(C)` with two `f64` fields and no padding.
        unsafe { std::slice::from_raw_parts(s.as_ptr() as *const f64, 2 * s.len()) }
    }

    fn as_lanes_mut(s: &mut [Self]) -> &mut [f64] {
        // SAFETY: as above; the borrow is exclusive.
        unsafe { std::slice::from_raw_parts_mut(s.as_mut_ptr() as *mut f64, 2 * s.len()) }
    }
}
