//! Arrow potentials carried in two parallel representations: a 64-bit float
//! used for all log-domain numerics, and an exact rational used for
//! tie-sensitive comparisons (minimal potentials, tight arrows, geodesics).
//!
//! Every float is itself a dyadic rational, so the exact track is always
//! populated: inputs given as `p/q` strings carry that value, inputs given as
//! decimal numbers carry the exact binary value of the parsed float.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};
use std::fmt;
use std::str::FromStr;

#[derive(Clone, PartialEq)]
pub struct Potential {
    approx: f64,
    exact: BigRational,
}

impl Potential {
    pub fn from_f64(x: f64) -> Self {
        let exact = BigRational::from_float(x).expect("finite potential");
        Potential { approx: x, exact }
    }

    pub fn from_rational(r: BigRational) -> Self {
        let approx = rational_to_f64(&r);
        Potential { approx, exact: r }
    }

    /// Parse either a decimal number or an exact `p/q` string.
    pub fn parse(text: &str) -> Result<Self, String> {
        if let Some((p, q)) = text.split_once('/') {
            let num = BigInt::from_str(p.trim()).map_err(|e| format!("bad numerator: {e}"))?;
            let den = BigInt::from_str(q.trim()).map_err(|e| format!("bad denominator: {e}"))?;
            if den.is_zero() {
                return Err("zero denominator".into());
            }
            Ok(Potential::from_rational(BigRational::new(num, den)))
        } else {
            let x: f64 = text
                .trim()
                .parse()
                .map_err(|e| format!("bad potential `{text}`: {e}"))?;
            if !x.is_finite() {
                return Err(format!("potential `{text}` is not finite"));
            }
            Ok(Potential::from_f64(x))
        }
    }

    pub fn zero() -> Self {
        Potential {
            approx: 0.0,
            exact: BigRational::zero(),
        }
    }

    pub fn f64(&self) -> f64 {
        self.approx
    }

    pub fn exact(&self) -> &BigRational {
        &self.exact
    }

    pub fn is_zero(&self) -> bool {
        self.exact.is_zero()
    }

    pub fn add(&self, other: &Potential) -> Potential {
        Potential {
            approx: self.approx + other.approx,
            exact: &self.exact + &other.exact,
        }
    }

    pub fn neg(&self) -> Potential {
        Potential {
            approx: -self.approx,
            exact: -self.exact.clone(),
        }
    }

    /// self + k * other; used to expand arithmetic-progression potentials in
    /// periodic tails.
    pub fn add_scaled(&self, other: &Potential, k: u64) -> Potential {
        let kk = BigRational::from_integer(BigInt::from(k));
        Potential {
            approx: self.approx + (k as f64) * other.approx,
            exact: &self.exact + kk * &other.exact,
        }
    }

    /// True when the exact value was supplied as a non-dyadic rational, in
    /// which case serialization must keep the `p/q` form to round-trip.
    pub fn needs_rational_form(&self) -> bool {
        BigRational::from_float(self.approx).map(|d| d != self.exact) != Some(false)
    }

    pub fn rational_string(&self) -> String {
        format!("{}/{}", self.exact.numer(), self.exact.denom())
    }
}

impl fmt::Debug for Potential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.needs_rational_form() {
            write!(f, "{}", self.rational_string())
        } else {
            write!(f, "{}", self.approx)
        }
    }
}

fn rational_to_f64(r: &BigRational) -> f64 {
    // to_f64 handles magnitudes beyond f64 by saturating through the big_ln
    // fallback below; potentials in practice are small.
    r.to_f64().unwrap_or_else(|| {
        let num = crate::util::big_ln(r.numer().magnitude());
        let den = crate::util::big_ln(r.denom().magnitude());
        let mag = (num - den).exp();
        if r.is_negative() {
            -mag
        } else {
            mag
        }
    })
}

/// How potential comparisons are resolved.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TieMode {
    /// f64 arithmetic; two values are tied when their difference is within
    /// `1e-9 * (1 + |reference|)`.
    Float,
    /// Exact rational arithmetic; ties are exact equalities.
    Exact,
}

impl TieMode {
    pub fn from_env() -> Self {
        match std::env::var("BRATTELI_EXACT") {
            Ok(v) if v == "1" || v.eq_ignore_ascii_case("true") => TieMode::Exact,
            _ => TieMode::Float,
        }
    }

    pub fn float_tol(reference: f64) -> f64 {
        1e-9 * (1.0 + reference.abs())
    }
}
