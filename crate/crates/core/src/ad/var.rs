use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use super::tape::{NodeId, OpKind, TapeBuilder};

/// A scalar recorded on a [`TapeBuilder`].
///
/// Carries its value and, on nested builders, a tangent (the dual component
/// used for forward-over-reverse second derivatives). On non-nested builders
/// the tangent is always zero.
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t TapeBuilder,
    id: NodeId,
    value: f64,
    tangent: f64,
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Var")
            .field("id", &self.id)
            .field("value", &self.value)
            .field("tangent", &self.tangent)
            .finish()
    }
}

impl<'t> Var<'t> {
    pub(crate) fn from_parts(tape: &'t TapeBuilder, id: NodeId, value: f64, tangent: f64) -> Self {
        Self {
            tape,
            id,
            value,
            tangent,
        }
    }

    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn tangent(&self) -> f64 {
        self.tangent
    }

    pub fn tape(&self) -> &'t TapeBuilder {
        self.tape
    }

    /// A constant on the same tape.
    pub fn lift(&self, value: f64) -> Var<'t> {
        self.tape.constant(value)
    }

    fn unary(self, op: OpKind, value: f64, tangent: f64, partial: f64, partial_tangent: f64) -> Var<'t> {
        let id = self
            .tape
            .push(op, &[self.id], value, &[partial], tangent, &[partial_tangent]);
        Var::from_parts(self.tape, id, value, tangent)
    }

    #[allow(clippy::too_many_arguments)]
    fn binary(
        self,
        other: Var<'t>,
        op: OpKind,
        value: f64,
        tangent: f64,
        partials: [f64; 2],
        partial_tangents: [f64; 2],
    ) -> Var<'t> {
        debug_assert!(
            std::ptr::eq(self.tape, other.tape),
            "operands recorded on different tapes"
        );
        let id = self
            .tape
            .push(op, &[self.id, other.id], value, &partials, tangent, &partial_tangents);
        Var::from_parts(self.tape, id, value, tangent)
    }

    pub fn exp(self) -> Var<'t> {
        let e = self.value.exp();
        let de = e * self.tangent;
        self.unary(OpKind::Exp, e, de, e, de)
    }

    pub fn ln(self) -> Var<'t> {
        let (a, da) = (self.value, self.tangent);
        self.unary(OpKind::Log, a.ln(), da / a, 1.0 / a, -da / (a * a))
    }

    pub fn sin(self) -> Var<'t> {
        let (s, c) = self.value.sin_cos();
        let da = self.tangent;
        self.unary(OpKind::Sin, s, c * da, c, -s * da)
    }

    pub fn cos(self) -> Var<'t> {
        let (s, c) = self.value.sin_cos();
        let da = self.tangent;
        self.unary(OpKind::Cos, c, -s * da, -s, -c * da)
    }

    /// `self` raised to a constant power.
    pub fn powf(self, exponent: f64) -> Var<'t> {
        let (a, da) = (self.value, self.tangent);
        let value = a.powf(exponent);
        let partial = if exponent == 0.0 { 0.0 } else { exponent * a.powf(exponent - 1.0) };
        let partial_t = if exponent == 0.0 || exponent == 1.0 {
            0.0
        } else {
            exponent * (exponent - 1.0) * a.powf(exponent - 2.0) * da
        };
        self.unary(OpKind::Pow, value, partial * da, partial, partial_t)
    }

    /// `self` raised to a recorded power. The exponent partial uses ln(base) and
    /// is taken as zero for non-positive bases, which is only meaningful when
    /// the exponent is constant.
    pub fn pow(self, exponent: Var<'t>) -> Var<'t> {
        let (a, da) = (self.value, self.tangent);
        let (b, db) = (exponent.value, exponent.tangent);
        let value = a.powf(b);
        let ln_a = if a > 0.0 { a.ln() } else { 0.0 };
        let d_base = if b == 0.0 { 0.0 } else { b * a.powf(b - 1.0) };
        let d_exp = value * ln_a;
        let d_value = d_base * da + d_exp * db;
        let d_base_t = {
            let pow_b1 = if b == 0.0 { 0.0 } else { a.powf(b - 1.0) };
            let second = if b == 0.0 || b == 1.0 {
                0.0
            } else {
                b * (b - 1.0) * a.powf(b - 2.0) * da
            };
            db * pow_b1 + second + b * pow_b1 * ln_a * db
        };
        let d_exp_t = d_value * ln_a + if a > 0.0 { value * da / a } else { 0.0 };
        self.binary(
            exponent,
            OpKind::Pow,
            value,
            d_value,
            [d_base, d_exp],
            [d_base_t, d_exp_t],
        )
    }

    pub fn powi(self, n: i32) -> Var<'t> {
        self.powf(n as f64)
    }

    pub fn sqrt(self) -> Var<'t> {
        self.powf(0.5)
    }

    pub fn square(self) -> Var<'t> {
        self * self
    }
}

impl<'t> Add for Var<'t> {
    type Output = Var<'t>;
    fn add(self, rhs: Var<'t>) -> Var<'t> {
        self.binary(
            rhs,
            OpKind::Add,
            self.value + rhs.value,
            self.tangent + rhs.tangent,
            [1.0, 1.0],
            [0.0, 0.0],
        )
    }
}

impl<'t> Sub for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, rhs: Var<'t>) -> Var<'t> {
        self.binary(
            rhs,
            OpKind::Sub,
            self.value - rhs.value,
            self.tangent - rhs.tangent,
            [1.0, -1.0],
            [0.0, 0.0],
        )
    }
}

impl<'t> Mul for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, rhs: Var<'t>) -> Var<'t> {
        let (a, da, b, db) = (self.value, self.tangent, rhs.value, rhs.tangent);
        self.binary(rhs, OpKind::Mul, a * b, da * b + a * db, [b, a], [db, da])
    }
}

impl<'t> Div for Var<'t> {
    type Output = Var<'t>;
    fn div(self, rhs: Var<'t>) -> Var<'t> {
        let (a, da, b, db) = (self.value, self.tangent, rhs.value, rhs.tangent);
        let inv = 1.0 / b;
        let value = a * inv;
        let d_value = (da - value * db) * inv;
        // ∂/∂a = 1/b, ∂/∂b = −a/b²
        let pa = inv;
        let pb = -value * inv;
        let pa_t = -db * inv * inv;
        let pb_t = -(da * b - 2.0 * a * db) * inv * inv * inv;
        self.binary(rhs, OpKind::Div, value, d_value, [pa, pb], [pa_t, pb_t])
    }
}

impl<'t> Neg for Var<'t> {
    type Output = Var<'t>;
    fn neg(self) -> Var<'t> {
        self.unary(OpKind::Neg, -self.value, -self.tangent, -1.0, 0.0)
    }
}

impl<'t> Add<f64> for Var<'t> {
    type Output = Var<'t>;
    fn add(self, c: f64) -> Var<'t> {
        self.unary(OpKind::Add, self.value + c, self.tangent, 1.0, 0.0)
    }
}

impl<'t> Sub<f64> for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, c: f64) -> Var<'t> {
        self.unary(OpKind::Sub, self.value - c, self.tangent, 1.0, 0.0)
    }
}

impl<'t> Mul<f64> for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, c: f64) -> Var<'t> {
        self.unary(OpKind::Mul, self.value * c, self.tangent * c, c, 0.0)
    }
}

impl<'t> Div<f64> for Var<'t> {
    type Output = Var<'t>;
    fn div(self, c: f64) -> Var<'t> {
        self.unary(OpKind::Div, self.value / c, self.tangent / c, 1.0 / c, 0.0)
    }
}

impl<'t> Add<Var<'t>> for f64 {
    type Output = Var<'t>;
    fn add(self, v: Var<'t>) -> Var<'t> {
        v + self
    }
}

impl<'t> Sub<Var<'t>> for f64 {
    type Output = Var<'t>;
    fn sub(self, v: Var<'t>) -> Var<'t> {
        v.unary(OpKind::Sub, self - v.value, -v.tangent, -1.0, 0.0)
    }
}

impl<'t> Mul<Var<'t>> for f64 {
    type Output = Var<'t>;
    fn mul(self, v: Var<'t>) -> Var<'t> {
        v * self
    }
}

impl<'t> Div<Var<'t>> for f64 {
    type Output = Var<'t>;
    fn div(self, v: Var<'t>) -> Var<'t> {
        let (b, db) = (v.value, v.tangent);
        let value = self / b;
        let partial = -value / b;
        let d_value = partial * db;
        let partial_t = 2.0 * value / (b * b) * db;
        v.unary(OpKind::Div, value, d_value, partial, partial_t)
    }
}

/// Sum of a slice of recorded values; `None` for an empty slice.
pub fn sum<'t>(terms: &[Var<'t>]) -> Option<Var<'t>> {
    let (first, rest) = terms.split_first()?;
    Some(rest.iter().fold(*first, |acc, &t| acc + t))
}

/// Inner product of recorded values with constant weights.
pub fn dot_const<'t>(terms: &[Var<'t>], weights: &[f64]) -> Option<Var<'t>> {
    let scaled: Vec<Var<'t>> = terms.iter().zip(weights).map(|(&t, &w)| t * w).collect();
    sum(&scaled)
}
