use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::ser::{Serialize, SerializeStruct, Serializer};

/// Significant digits of [`Price::decimal`].
pub const DECIMAL_DIGITS: usize = 12;

/// Exact rational in scrip units, serialized as
/// `{"num": "...", "den": "...", "decimal": "..."}`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Price(pub BigRational);

impl Price {
    pub fn one() -> Price {
        Price(BigRational::one())
    }

    pub fn from_ratio(num: i64, den: i64) -> Price {
        Price(BigRational::new(num.into(), den.into()))
    }

    pub fn numer(&self) -> &BigInt {
        self.0.numer()
    }

    pub fn denom(&self) -> &BigInt {
        self.0.denom()
    }

    pub fn to_f64(&self) -> f64 {
        self.0.to_f64().unwrap_or(f64::NAN)
    }

    pub fn decimal(&self) -> String {
        to_decimal(&self.0, DECIMAL_DIGITS)
    }

    /// `floor(p)`, saturated to `usize`.
    pub fn capacity(&self) -> usize {
        self.0.floor().to_integer().to_usize().unwrap_or(usize::MAX)
    }

    /// `floor(p) + 1` if `p` is an integer, else `ceil(p)`.
    pub fn next_integer(&self) -> BigRational {
        if self.0.is_integer() {
            self.0.clone() + BigRational::one()
        } else {
            self.0.ceil()
        }
    }
}

impl std::fmt::Display for Price {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl Serialize for Price {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut st = s.serialize_struct("Price", 3)?;
        st.serialize_field("num", &self.0.numer().to_string())?;
        st.serialize_field("den", &self.0.denom().to_string())?;
        st.serialize_field("decimal", &self.decimal())?;
        st.end()
    }
}

/// The exact decimal written by Rust's shortest round-trip formatting of `x`,
/// so `0.1` becomes `1/10` rather than its binary expansion.
pub fn decimal_rational(x: f64) -> Option<BigRational> {
    if !x.is_finite() {
        return None;
    }
    let s = format!("{}", x.abs());
    let (int, frac) = s.split_once('.').unwrap_or((&s, ""));
    let num: BigInt = format!("{int}{frac}").parse().ok()?;
    let den = BigInt::from(10u8).pow(frac.len() as u32);
    let r = BigRational::new(num, den);
    Some(if x < 0.0 { -r } else { r })
}

/// Rounds `r` half away from zero to `digits` significant digits and writes
/// it in positional notation without trailing zeros.
pub fn to_decimal(r: &BigRational, digits: usize) -> String {
    if r.is_zero() {
        return "0".into();
    }
    let sign = if r.is_negative() { "-" } else { "" };
    let a = r.abs();
    // exponent e with 10^e <= a < 10^(e+1)
    let mut e = a.numer().to_string().len() as i64 - a.denom().to_string().len() as i64;
    while pow10(e) > a {
        e -= 1;
    }
    while pow10(e + 1) <= a {
        e += 1;
    }
    let shift = digits as i64 - 1 - e;
    let scaled = a * pow10(shift);
    let half = BigRational::new(1.into(), 2.into());
    let mut mantissa = (scaled + half).floor().to_integer();
    if BigRational::from_integer(mantissa.clone()) >= pow10(digits as i64) {
        mantissa /= 10;
        e += 1;
    }
    let ds = mantissa.to_string();
    let body = if e >= digits as i64 - 1 {
        format!("{ds}{}", "0".repeat((e - digits as i64 + 1) as usize))
    } else if e >= 0 {
        let (a, b) = ds.split_at(e as usize + 1);
        trim(format!("{a}.{b}"))
    } else {
        trim(format!("0.{}{ds}", "0".repeat((-e - 1) as usize)))
    };
    format!("{sign}{body}")
}

fn pow10(e: i64) -> BigRational {
    let p = BigInt::from(10).pow(e.unsigned_abs() as u32);
    if e >= 0 {
        BigRational::from_integer(p)
    } else {
        BigRational::new(BigInt::one(), p)
    }
}

fn trim(s: String) -> String {
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}
