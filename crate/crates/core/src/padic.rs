//! Exact arithmetic on the subring `Z[1/p]` of `Q_p`.
//!
//! Every value handled by the library (points, frequencies, residue
//! representatives, ball centers) is a finite p-adic digit expansion, so
//! valuations, norms and the additive character are all computed exactly.
//! The only inexact step anywhere in this module is [`UnitPhase::to_complex`].

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_bigint::{BigInt, BigUint, Sign};
use num_complex::Complex64;
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default cap on the number of points any enumeration may produce.
pub const DEFAULT_MAX_POINTS: u64 = 10_000_000;

/// A small positive prime shared by all values of a computation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u64", into = "u64")]
pub struct Prime(u64);

impl Prime {
    /// Largest prime accepted; keeps residue products inside `u128`.
    pub const MAX: u64 = 1 << 31;

    pub fn new(p: u64) -> Result<Self> {
        if p < 2 || p > Self::MAX || !is_prime(p) {
            return Err(Error::NotPrime(p));
        }
        Ok(Prime(p))
    }

    #[inline]
    pub fn get(self) -> u64 {
        self.0
    }

    /// `p^e` as a machine integer, if it fits.
    pub fn checked_pow(self, e: u32) -> Option<u64> {
        self.0.checked_pow(e)
    }

    /// `p^e` as a float; exact whenever the result is representable.
    #[inline]
    pub fn powf(self, e: i64) -> f64 {
        (self.0 as f64).powi(e as i32)
    }

    pub fn big(self) -> BigInt {
        BigInt::from(self.0)
    }
}

impl TryFrom<u64> for Prime {
    type Error = Error;
    fn try_from(p: u64) -> Result<Self> {
        Prime::new(p)
    }
}

impl From<Prime> for u64 {
    fn from(p: Prime) -> u64 {
        p.0
    }
}

impl fmt::Display for Prime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

fn is_prime(n: u64) -> bool {
    if n < 4 {
        return n >= 2;
    }
    if n % 2 == 0 {
        return false;
    }
    let mut d = 3;
    while d * d <= n {
        if n % d == 0 {
            return false;
        }
        d += 2;
    }
    true
}

/// A p-adic valuation, `ord(x) ∈ Z ∪ {+∞}`.
///
/// The derived order places every finite value below `Infinite`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Valuation {
    Finite(i64),
    Infinite,
}

impl Valuation {
    pub fn finite(self) -> Option<i64> {
        match self {
            Valuation::Finite(v) => Some(v),
            Valuation::Infinite => None,
        }
    }

    /// The absolute value `p^{-ord}` this valuation induces.
    pub fn abs(self) -> PPower {
        match self {
            Valuation::Finite(v) => PPower::Pow(-v),
            Valuation::Infinite => PPower::Zero,
        }
    }
}

/// An exact non-negative power of `p` or zero: the value set of `|·|_p`,
/// `‖·‖_p`, Haar volumes of balls and `|f(ξ)|_p`.
///
/// `Zero` orders below every `Pow(e)`, and powers compare by exponent.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PPower {
    Zero,
    Pow(i64),
}

impl PPower {
    pub const ONE: PPower = PPower::Pow(0);

    pub fn exponent(self) -> Option<i64> {
        match self {
            PPower::Zero => None,
            PPower::Pow(e) => Some(e),
        }
    }

    pub fn to_f64(self, p: Prime) -> f64 {
        match self {
            PPower::Zero => 0.0,
            PPower::Pow(e) => p.powf(e),
        }
    }

    /// Product of two such values.
    pub fn mul(self, other: PPower) -> PPower {
        match (self, other) {
            (PPower::Pow(a), PPower::Pow(b)) => PPower::Pow(a + b),
            _ => PPower::Zero,
        }
    }

    /// Integer power (`k ≥ 0`).
    pub fn pow(self, k: u32) -> PPower {
        match self {
            PPower::Zero if k == 0 => PPower::ONE,
            PPower::Zero => PPower::Zero,
            PPower::Pow(e) => PPower::Pow(e * k as i64),
        }
    }
}

/// An element `numerator · p^exponent` of `Z[1/p]` in canonical form: the
/// numerator is zero or coprime to `p`, so `exponent` is the exact valuation.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PAdicScalar {
    prime: Prime,
    numerator: BigInt,
    exponent: i64,
}

impl PAdicScalar {
    /// Builds `numerator · p^exponent`, normalizing the representation.
    pub fn new(prime: Prime, numerator: BigInt, exponent: i64) -> Self {
        if numerator.is_zero() {
            return Self::zero(prime);
        }
        let p = prime.big();
        let mut num = numerator;
        let mut exp = exponent;
        loop {
            let (q, r) = num.div_rem(&p);
            if !r.is_zero() {
                break;
            }
            num = q;
            exp += 1;
        }
        PAdicScalar {
            prime,
            numerator: num,
            exponent: exp,
        }
    }

    pub fn zero(prime: Prime) -> Self {
        PAdicScalar {
            prime,
            numerator: BigInt::zero(),
            exponent: 0,
        }
    }

    pub fn one(prime: Prime) -> Self {
        Self::from_int(prime, 1)
    }

    pub fn from_int(prime: Prime, n: i64) -> Self {
        Self::new(prime, BigInt::from(n), 0)
    }

    /// `n · p^e`.
    pub fn from_int_scaled(prime: Prime, n: i64, e: i64) -> Self {
        Self::new(prime, BigInt::from(n), e)
    }

    /// `p^e`.
    pub fn p_power(prime: Prime, e: i64) -> Self {
        PAdicScalar {
            prime,
            numerator: BigInt::one(),
            exponent: e,
        }
    }

    #[inline]
    pub fn prime(&self) -> Prime {
        self.prime
    }

    pub fn numerator(&self) -> &BigInt {
        &self.numerator
    }

    pub fn exponent(&self) -> i64 {
        self.exponent
    }

    pub fn is_zero(&self) -> bool {
        self.numerator.is_zero()
    }

    pub fn valuation(&self) -> Valuation {
        if self.is_zero() {
            Valuation::Infinite
        } else {
            Valuation::Finite(self.exponent)
        }
    }

    /// `|x|_p = p^{-ord(x)}`.
    pub fn abs(&self) -> PPower {
        self.valuation().abs()
    }

    /// True when the value lies in `Z_p`.
    pub fn is_integral(&self) -> bool {
        self.is_zero() || self.exponent >= 0
    }

    /// Multiplies by `p^j`.
    pub fn shift(&self, j: i64) -> Self {
        if self.is_zero() {
            return self.clone();
        }
        PAdicScalar {
            prime: self.prime,
            numerator: self.numerator.clone(),
            exponent: self.exponent + j,
        }
    }

    /// The unique rational in `[0, 1)` with p-power denominator that is
    /// congruent to `self` modulo `Z_p`.
    pub fn fractional_part(&self) -> Self {
        if self.is_integral() {
            return Self::zero(self.prime);
        }
        let modulus = self.prime.big().pow((-self.exponent) as u32);
        let r = self.numerator.mod_floor(&modulus);
        Self::new(self.prime, r, self.exponent)
    }

    /// The standard additive character `Ψ(x) = exp(2πi {x}_p)`.
    pub fn character(&self) -> UnitPhase {
        let frac = self.fractional_part();
        if frac.is_zero() {
            return UnitPhase::trivial(self.prime);
        }
        UnitPhase {
            prime: self.prime,
            numerator: frac.numerator.to_biguint().expect("fractional part is non-negative"),
            denominator_exponent: (-frac.exponent) as u32,
        }
    }

    /// The residue of an integral value modulo `p^k`, in `[0, p^k)`.
    ///
    /// Panics when `self` is not integral or `p^k` overflows `u64`.
    pub fn residue(&self, k: u32) -> u64 {
        assert!(self.is_integral(), "residue of a non-integral value");
        let modulus = self.prime.checked_pow(k).expect("p^k overflows u64");
        if self.is_zero() || self.exponent >= k as i64 {
            return 0;
        }
        let m = BigInt::from(modulus);
        let v = (&self.numerator * self.prime.big().pow(self.exponent as u32)).mod_floor(&m);
        v.to_u64().expect("residue fits in u64")
    }

    /// Nearest double to the real rational number this element denotes.
    pub fn to_f64(&self) -> f64 {
        if self.is_zero() {
            return 0.0;
        }
        let n = self.numerator.to_f64().unwrap_or(f64::NAN);
        n * self.prime.powf(self.exponent)
    }

    /// Renders the value as base-`p` digits, lowest place first, followed
    /// by the place of the first digit: `"d_k d_{k+1} …;k"`. Negative values
    /// carry a leading `-` on the digits of their magnitude.
    pub fn to_digit_string(&self) -> String {
        if self.is_zero() {
            return "0;0".to_string();
        }
        let p = self.prime.big();
        let mut mag = self.numerator.abs();
        let mut digits = Vec::new();
        while !mag.is_zero() {
            let (q, r) = mag.div_rem(&p);
            digits.push(r.to_string());
            mag = q;
        }
        let sign = if self.numerator.sign() == Sign::Minus { "-" } else { "" };
        format!("{sign}{};{}", digits.join(" "), self.exponent)
    }

    /// Parses the format produced by [`PAdicScalar::to_digit_string`]. Leading
    /// zero digits and a missing `;k` suffix (meaning `k = 0`) are accepted.
    pub fn parse_digit_string(prime: Prime, input: &str) -> Result<Self> {
        let err = |reason: &str| Error::DigitString {
            input: input.to_string(),
            reason: reason.to_string(),
        };
        let s = input.trim();
        let (negative, body) = match s.strip_prefix('-') {
            Some(rest) => (true, rest.trim_start()),
            None => (false, s),
        };
        let (digit_part, exp_part) = match body.split_once(';') {
            Some((d, e)) => (d, Some(e.trim())),
            None => (body, None),
        };
        let exponent: i64 = match exp_part {
            Some(e) => e.parse().map_err(|_| err("start exponent is not an integer"))?,
            None => 0,
        };
        let words: Vec<&str> = digit_part.split_whitespace().collect();
        if words.is_empty() {
            return Err(err("no digits"));
        }
        let p = prime.big();
        let mut value = BigInt::zero();
        for w in words.iter().rev() {
            let d: u64 = w.parse().map_err(|_| err("digit is not a non-negative integer"))?;
            if d >= prime.get() {
                return Err(err(&format!("digit {d} is not below the prime {prime}")));
            }
            value = value * &p + BigInt::from(d);
        }
        if negative {
            value = -value;
        }
        Ok(Self::new(prime, value, exponent))
    }

    fn check_prime(&self, other: &Self) {
        assert_eq!(
            self.prime, other.prime,
            "arithmetic between different primes"
        );
    }
}

impl fmt::Display for PAdicScalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_digit_string())
    }
}

impl<'a> Add<&'a PAdicScalar> for &'a PAdicScalar {
    type Output = PAdicScalar;
    fn add(self, rhs: &'a PAdicScalar) -> PAdicScalar {
        self.check_prime(rhs);
        if self.is_zero() {
            return rhs.clone();
        }
        if rhs.is_zero() {
            return self.clone();
        }
        let e = self.exponent.min(rhs.exponent);
        let p = self.prime.big();
        let a = &self.numerator * p.pow((self.exponent - e) as u32);
        let b = &rhs.numerator * p.pow((rhs.exponent - e) as u32);
        PAdicScalar::new(self.prime, a + b, e)
    }
}

impl<'a> Sub<&'a PAdicScalar> for &'a PAdicScalar {
    type Output = PAdicScalar;
    fn sub(self, rhs: &'a PAdicScalar) -> PAdicScalar {
        self + &(-rhs)
    }
}

impl Neg for &PAdicScalar {
    type Output = PAdicScalar;
    fn neg(self) -> PAdicScalar {
        PAdicScalar {
            prime: self.prime,
            numerator: -&self.numerator,
            exponent: self.exponent,
        }
    }
}

impl<'a> Mul<&'a PAdicScalar> for &'a PAdicScalar {
    type Output = PAdicScalar;
    fn mul(self, rhs: &'a PAdicScalar) -> PAdicScalar {
        self.check_prime(rhs);
        if self.is_zero() || rhs.is_zero() {
            return PAdicScalar::zero(self.prime);
        }
        // Product of numerators coprime to p stays coprime to p.
        PAdicScalar {
            prime: self.prime,
            numerator: &self.numerator * &rhs.numerator,
            exponent: self.exponent + rhs.exponent,
        }
    }
}

macro_rules! forward_owned {
    ($tr:ident, $m:ident) => {
        impl $tr<PAdicScalar> for PAdicScalar {
            type Output = PAdicScalar;
            fn $m(self, rhs: PAdicScalar) -> PAdicScalar {
                (&self).$m(&rhs)
            }
        }
    };
}
forward_owned!(Add, add);
forward_owned!(Sub, sub);
forward_owned!(Mul, mul);

impl Neg for PAdicScalar {
    type Output = PAdicScalar;
    fn neg(self) -> PAdicScalar {
        -&self
    }
}

/// A point `e^{2πi q}` of the unit circle with `q = numerator / p^k ∈ [0, 1)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct UnitPhase {
    prime: Prime,
    numerator: BigUint,
    denominator_exponent: u32,
}

impl UnitPhase {
    pub fn trivial(prime: Prime) -> Self {
        UnitPhase {
            prime,
            numerator: BigUint::zero(),
            denominator_exponent: 0,
        }
    }

    pub fn is_trivial(&self) -> bool {
        self.numerator.is_zero()
    }

    /// The angle `q` as an element of `Z[1/p] ∩ [0, 1)`.
    pub fn angle(&self) -> PAdicScalar {
        PAdicScalar::new(
            self.prime,
            BigInt::from(self.numerator.clone()),
            -(self.denominator_exponent as i64),
        )
    }

    /// `(numerator, k)` with angle `numerator / p^k`, `k` minimal.
    pub fn angle_parts(&self) -> (&BigUint, u32) {
        (&self.numerator, self.denominator_exponent)
    }

    /// Angles add modulo one.
    pub fn mul(&self, other: &UnitPhase) -> UnitPhase {
        (&self.angle() + &other.angle()).character()
    }

    pub fn to_complex(&self) -> Complex64 {
        if self.is_trivial() {
            return Complex64::new(1.0, 0.0);
        }
        let q = self.numerator.to_f64().unwrap_or(0.0) / self.prime.powf(self.denominator_exponent as i64);
        let (s, c) = (std::f64::consts::TAU * q).sin_cos();
        Complex64::new(c, s)
    }
}

/// A point of `Q_p^n` with coordinates in `Z[1/p]`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PAdicVector {
    coords: Vec<PAdicScalar>,
}

impl PAdicVector {
    pub fn new(coords: Vec<PAdicScalar>) -> Result<Self> {
        let first = coords
            .first()
            .ok_or_else(|| Error::InvalidParameter("vector of dimension zero".into()))?;
        let p = first.prime();
        if let Some(bad) = coords.iter().find(|c| c.prime() != p) {
            return Err(Error::PrimeMismatch(p.get(), bad.prime().get()));
        }
        Ok(PAdicVector { coords })
    }

    pub fn zero(prime: Prime, n: usize) -> Self {
        assert!(n > 0, "vector of dimension zero");
        PAdicVector {
            coords: vec![PAdicScalar::zero(prime); n],
        }
    }

    pub fn from_ints(prime: Prime, values: &[i64]) -> Self {
        assert!(!values.is_empty(), "vector of dimension zero");
        PAdicVector {
            coords: values.iter().map(|&v| PAdicScalar::from_int(prime, v)).collect(),
        }
    }

    /// `p^e · (values)`.
    pub fn from_ints_scaled(prime: Prime, values: &[i64], e: i64) -> Self {
        Self::from_ints(prime, values).shift(e)
    }

    pub fn coords(&self) -> &[PAdicScalar] {
        &self.coords
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn prime(&self) -> Prime {
        self.coords[0].prime()
    }

    pub fn is_zero(&self) -> bool {
        self.coords.iter().all(PAdicScalar::is_zero)
    }

    /// `min_i ord(x_i)`, so that `‖x‖_p = p^{-ord(x)}`.
    pub fn ord(&self) -> Valuation {
        self.coords.iter().map(PAdicScalar::valuation).min().expect("non-empty")
    }

    /// `‖x‖_p = max_i |x_i|_p`.
    pub fn norm(&self) -> PPower {
        self.ord().abs()
    }

    pub fn is_integral(&self) -> bool {
        self.coords.iter().all(PAdicScalar::is_integral)
    }

    fn check_compatible(&self, other: &Self) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: other.dim(),
            });
        }
        if self.prime() != other.prime() {
            return Err(Error::PrimeMismatch(self.prime().get(), other.prime().get()));
        }
        Ok(())
    }

    /// The bilinear pairing `x·y = Σ x_i y_i`.
    pub fn dot(&self, other: &Self) -> Result<PAdicScalar> {
        self.check_compatible(other)?;
        Ok(self
            .coords
            .iter()
            .zip(&other.coords)
            .fold(PAdicScalar::zero(self.prime()), |acc, (a, b)| &acc + &(a * b)))
    }

    pub fn try_add(&self, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        Ok(PAdicVector {
            coords: self.coords.iter().zip(&other.coords).map(|(a, b)| a + b).collect(),
        })
    }

    pub fn try_sub(&self, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        Ok(PAdicVector {
            coords: self.coords.iter().zip(&other.coords).map(|(a, b)| a - b).collect(),
        })
    }

    pub fn neg(&self) -> Self {
        PAdicVector {
            coords: self.coords.iter().map(|c| -c).collect(),
        }
    }

    /// Multiplies every coordinate by `p^j`.
    pub fn shift(&self, j: i64) -> Self {
        PAdicVector {
            coords: self.coords.iter().map(|c| c.shift(j)).collect(),
        }
    }

    /// Residues of an integral vector modulo `p^k`.
    pub fn residues(&self, k: u32) -> Vec<u64> {
        self.coords.iter().map(|c| c.residue(k)).collect()
    }

    pub fn to_digit_strings(&self) -> Vec<String> {
        self.coords.iter().map(PAdicScalar::to_digit_string).collect()
    }

    pub fn parse_digit_strings<S: AsRef<str>>(prime: Prime, items: &[S]) -> Result<Self> {
        let coords = items
            .iter()
            .map(|s| PAdicScalar::parse_digit_string(prime, s.as_ref()))
            .collect::<Result<Vec<_>>>()?;
        PAdicVector::new(coords)
    }
}

impl fmt::Display for PAdicVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({})", self.to_digit_strings().join(", "))
    }
}

/// The closed ball `center + (p^{-r} Z_p)^n` of radius `p^r`.
///
/// The center is stored in canonical form: each coordinate is reduced modulo
/// `p^{-r} Z_p` to its representative with digits only below place `-r`, so
/// equal balls compare equal.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Ball {
    center: PAdicVector,
    radius_exponent: i64,
}

impl Ball {
    pub fn new(center: PAdicVector, radius_exponent: i64) -> Self {
        let r = radius_exponent;
        let coords = center
            .coords
            .iter()
            .map(|c| c.shift(r).fractional_part().shift(-r))
            .collect();
        Ball {
            center: PAdicVector { coords },
            radius_exponent: r,
        }
    }

    /// `(p^{-r} Z_p)^n`, the ball of radius `p^r` about the origin.
    pub fn centered(prime: Prime, n: usize, radius_exponent: i64) -> Self {
        Ball {
            center: PAdicVector::zero(prime, n),
            radius_exponent,
        }
    }

    /// `Z_p^n`.
    pub fn unit(prime: Prime, n: usize) -> Self {
        Self::centered(prime, n, 0)
    }

    pub fn center(&self) -> &PAdicVector {
        &self.center
    }

    pub fn radius_exponent(&self) -> i64 {
        self.radius_exponent
    }

    pub fn dim(&self) -> usize {
        self.center.dim()
    }

    pub fn prime(&self) -> Prime {
        self.center.prime()
    }

    /// Haar volume `p^{r n}`, normalized so that `vol(Z_p^n) = 1`.
    pub fn volume(&self) -> PPower {
        PPower::Pow(self.radius_exponent * self.dim() as i64)
    }

    pub fn contains(&self, x: &PAdicVector) -> bool {
        match x.try_sub(&self.center) {
            Ok(d) => d.norm() <= PPower::Pow(self.radius_exponent),
            Err(_) => false,
        }
    }

    pub fn contains_origin(&self) -> bool {
        self.center.is_zero()
    }

    /// True when `other ⊆ self`.
    pub fn contains_ball(&self, other: &Ball) -> bool {
        other.radius_exponent <= self.radius_exponent && self.contains(&other.center)
    }

    /// Ultrametric balls are either nested or disjoint.
    pub fn is_disjoint(&self, other: &Ball) -> bool {
        !(self.contains_ball(other) || other.contains_ball(self))
    }

    /// The ball translated by `v`.
    pub fn translate(&self, v: &PAdicVector) -> Result<Ball> {
        Ok(Ball::new(self.center.try_add(v)?, self.radius_exponent))
    }

    /// The ball `v - self = { v - y : y ∈ self }`.
    pub fn reflect_from(&self, v: &PAdicVector) -> Result<Ball> {
        Ok(Ball::new(v.try_sub(&self.center)?, self.radius_exponent))
    }

    /// The parent ball of radius `p^{r+1}`.
    pub fn parent(&self) -> Ball {
        Ball::new(self.center.clone(), self.radius_exponent + 1)
    }

    /// Centers of the `p^{n·depth}` sub-balls of radius `p^{r-depth}` that
    /// partition this ball, in lexicographic digit order (first coordinate
    /// most significant, each coordinate by increasing digit value).
    pub fn enumerate_residues(&self, depth: u32, max_points: u64) -> Result<Vec<PAdicVector>> {
        let n = self.dim();
        let p = self.prime();
        let per_coord = p.checked_pow(depth).ok_or(Error::ResourceCap {
            requested: u128::MAX,
            cap: max_points,
        })?;
        let total = (per_coord as u128).checked_pow(n as u32).unwrap_or(u128::MAX);
        if total > max_points as u128 {
            return Err(Error::ResourceCap {
                requested: total,
                cap: max_points,
            });
        }
        let step = -self.radius_exponent;
        let offsets: Vec<PAdicScalar> = (0..per_coord)
            .map(|j| PAdicScalar::from_int_scaled(p, j as i64, step))
            .collect();
        let mut out = Vec::with_capacity(total as usize);
        let mut idx = vec![0usize; n];
        loop {
            let coords = self
                .center
                .coords
                .iter()
                .zip(&idx)
                .map(|(c, &i)| c + &offsets[i])
                .collect();
            out.push(PAdicVector { coords });
            // Odometer with the last coordinate varying fastest.
            let mut pos = n;
            loop {
                if pos == 0 {
                    return Ok(out);
                }
                pos -= 1;
                idx[pos] += 1;
                if (idx[pos] as u64) < per_coord {
                    break;
                }
                idx[pos] = 0;
            }
        }
    }

    /// The sub-balls matching [`Ball::enumerate_residues`].
    pub fn sub_balls(&self, depth: u32, max_points: u64) -> Result<Vec<Ball>> {
        let r = self.radius_exponent - depth as i64;
        Ok(self
            .enumerate_residues(depth, max_points)?
            .into_iter()
            .map(|c| Ball {
                center: c,
                radius_exponent: r,
            })
            .collect())
    }
}

impl fmt::Display for Ball {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} + p^{}Z_p^{}", self.center, -self.radius_exponent, self.dim())
    }
}

/// `∫_B Ψ(a·y) dy`, which is `Ψ(a·center)·vol(B)` when `a·(B - center) ⊆ Z_p`
/// and zero otherwise.
pub fn character_integral(frequency: &PAdicVector, ball: &Ball) -> Result<Option<(UnitPhase, PPower)>> {
    let phase = frequency.dot(ball.center())?.character();
    let constant = match frequency.norm() {
        PPower::Zero => true,
        PPower::Pow(e) => e + ball.radius_exponent() <= 0,
    };
    Ok(constant.then(|| (phase, ball.volume())))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(n: u64) -> Prime {
        Prime::new(n).unwrap()
    }

    fn q(prime: u64, num: i64, e: i64) -> PAdicScalar {
        PAdicScalar::from_int_scaled(p(prime), num, e)
    }

    #[test]
    fn valuation_examples() {
        assert_eq!(q(2, 12, 0).valuation(), Valuation::Finite(2));
        assert_eq!(q(2, 12, 0).abs(), PPower::Pow(-2));
        assert_eq!(PAdicScalar::zero(p(2)).valuation(), Valuation::Infinite);
        assert_eq!(q(2, 3, -2).valuation(), Valuation::Finite(-2));
    }

    #[test]
    fn vector_norm_examples() {
        for prime in [2, 3, 5] {
            let x = PAdicVector::from_ints(p(prime), &[prime as i64, 1]);
            assert_eq!(x.norm(), PPower::ONE);
        }
        assert_eq!(PAdicVector::zero(p(3), 2).norm(), PPower::Zero);
        let x = PAdicVector::new(vec![q(3, 1, -2), q(3, 1, 1)]).unwrap();
        assert_eq!(x.norm(), PPower::Pow(2));
        assert_eq!(x.norm().to_f64(p(3)), 9.0);
    }

    #[test]
    fn fractional_part_examples() {
        assert_eq!(q(2, 1, -1).fractional_part(), q(2, 1, -1));
        assert!(q(5, 7, 0).fractional_part().is_zero());
        assert_eq!(q(5, 7, -2).fractional_part(), q(5, 7, -2));
        // -1/2 ≡ 1/2 mod Z_2
        assert_eq!(q(2, -1, -1).fractional_part(), q(2, 1, -1));
        // 13/9 ≡ 4/9 mod Z_3
        assert_eq!(q(3, 13, -2).fractional_part(), q(3, 4, -2));
    }

    #[test]
    fn character_examples() {
        let half = q(2, 1, -1).character();
        assert_eq!(half.angle(), q(2, 1, -1));
        assert!((half.to_complex() - Complex64::new(-1.0, 0.0)).norm() < 1e-15);
        assert!(q(7, 123, 3).character().is_trivial());
        let a = q(3, 1, -1).character();
        let b = q(3, 2, -1).character();
        assert!(a.mul(&b).is_trivial());
    }

    #[test]
    fn dot_examples() {
        let pr = p(3);
        let x = PAdicVector::from_ints(pr, &[1, 0]);
        let y = PAdicVector::from_ints(pr, &[5, 7]);
        assert_eq!(x.dot(&y).unwrap(), PAdicScalar::from_int(pr, 5));
        let z = PAdicVector::zero(pr, 2);
        assert!(z.dot(&z).unwrap().is_zero());
        let x = PAdicVector::new(vec![q(3, 1, -1), q(3, 1, 0)]).unwrap();
        let y = PAdicVector::from_ints(pr, &[3, 3]);
        assert_eq!(x.dot(&y).unwrap(), PAdicScalar::from_int(pr, 4));
        let short = PAdicVector::from_ints(pr, &[1]);
        assert!(matches!(x.dot(&short), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn enumerate_residues_examples() {
        let z2 = Ball::unit(p(2), 2);
        let got: Vec<Vec<u64>> = z2
            .enumerate_residues(1, DEFAULT_MAX_POINTS)
            .unwrap()
            .iter()
            .map(|v| v.residues(4))
            .collect();
        assert_eq!(got, vec![vec![0, 0], vec![0, 1], vec![1, 0], vec![1, 1]]);

        let b = Ball::new(PAdicVector::new(vec![q(3, 2, -3)]).unwrap(), 1);
        assert_eq!(b.enumerate_residues(0, 10).unwrap(), vec![b.center().clone()]);

        let z3 = Ball::unit(p(3), 1);
        let got: Vec<u64> = z3
            .enumerate_residues(2, 100)
            .unwrap()
            .iter()
            .map(|v| v.residues(3)[0])
            .collect();
        assert_eq!(got, (0..9).collect::<Vec<_>>());

        assert!(matches!(
            z3.enumerate_residues(5, 100),
            Err(Error::ResourceCap { requested: 243, cap: 100 })
        ));
    }

    #[test]
    fn ball_volume_examples() {
        assert_eq!(Ball::unit(p(5), 3).volume(), PPower::ONE);
        assert_eq!(Ball::centered(p(2), 2, -1).volume().to_f64(p(2)), 0.25);
        assert_eq!(Ball::centered(p(3), 1, 1).volume().to_f64(p(3)), 3.0);
    }

    #[test]
    fn ball_canonical_center() {
        let pr = p(3);
        let a = Ball::new(PAdicVector::new(vec![q(3, 10, -1)]).unwrap(), 0);
        let b = Ball::new(PAdicVector::new(vec![q(3, 1, -1)]).unwrap(), 0);
        assert_eq!(a, b);
        assert!(a.contains(&PAdicVector::new(vec![q(3, 4, -1)]).unwrap()));
        assert!(!a.contains(&PAdicVector::from_ints(pr, &[0])));
    }

    #[test]
    fn digit_strings() {
        let pr = p(2);
        let x = PAdicScalar::parse_digit_string(pr, "1 0 1;-2").unwrap();
        assert_eq!(x, q(2, 5, -2));
        assert_eq!(x.to_digit_string(), "1 0 1;-2");
        assert_eq!(PAdicScalar::parse_digit_string(pr, "0 0 1").unwrap(), q(2, 1, 2));
        assert_eq!(PAdicScalar::parse_digit_string(pr, "-1;0").unwrap(), q(2, -1, 0));
        assert_eq!(PAdicScalar::zero(pr).to_digit_string(), "0;0");
        assert!(PAdicScalar::parse_digit_string(pr, "2;0").is_err());
        assert!(PAdicScalar::parse_digit_string(pr, ";3").is_err());
        assert!(PAdicScalar::parse_digit_string(pr, "1;x").is_err());
    }

    #[test]
    fn rejects_composites() {
        assert!(Prime::new(1).is_err());
        assert!(Prime::new(9).is_err());
        assert!(Prime::new(7).is_ok());
    }

    #[test]
    fn character_integral_vanishing() {
        let pr = p(2);
        let unit = Ball::unit(pr, 1);
        let a = PAdicVector::from_ints(pr, &[3]);
        let (phase, vol) = character_integral(&a, &unit).unwrap().unwrap();
        assert!(phase.is_trivial());
        assert_eq!(vol, PPower::ONE);
        let a = PAdicVector::from_ints_scaled(pr, &[1], -1);
        assert!(character_integral(&a, &unit).unwrap().is_none());
    }
}
