//! Elliptic homogeneous polynomials and their certified constants.
//!
//! [`HomogeneousPolynomial::certify`] refines residue classes of the set
//! `A = {z ∈ Z_p^n : |z_i|_p = 1 for some i}` until `|f|` is provably
//! constant on each class. The resulting [`EllipticCertificate`] carries the
//! sandwich constants `C₀ = p^{-m₀}`, `C₁ = p^{-m₁}` with
//! `C₀‖ξ‖^d ≤ |f(ξ)|_p ≤ C₁‖ξ‖^d`, the local-constancy modulus `M` (so that
//! `|f|` is constant on every `z + (p^{M+1}Z_p)^n ⊆ A`), and the full table
//! of `|f|` on `A` modulo `p^{M+1}`.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_traits::Zero;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::padic::{PAdicScalar, PAdicVector, PPower, Prime, Valuation};

/// Depth cap used when the caller has no preference.
pub const DEFAULT_DEPTH_CAP: u32 = 12;

/// A homogeneous polynomial `f ∈ Z[ξ₁,…,ξ_n]` of degree `d ≥ 1`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct HomogeneousPolynomial {
    prime: Prime,
    dim: usize,
    degree: u32,
    terms: BTreeMap<Vec<u32>, i64>,
}

impl HomogeneousPolynomial {
    /// Builds the polynomial from `(multi-index, coefficient)` pairs. Repeated
    /// multi-indices are summed; zero coefficients are dropped.
    pub fn new(
        prime: Prime,
        dim: usize,
        degree: u32,
        terms: impl IntoIterator<Item = (Vec<u32>, i64)>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Polynomial("dimension must be at least 1".into()));
        }
        if degree == 0 {
            return Err(Error::Polynomial("degree must be at least 1".into()));
        }
        let mut map: BTreeMap<Vec<u32>, i64> = BTreeMap::new();
        for (i, (alpha, c)) in terms.into_iter().enumerate() {
            if alpha.len() != dim {
                return Err(Error::Polynomial(format!(
                    "term {i}: multi-index has {} entries, expected {dim}",
                    alpha.len()
                )));
            }
            let total: u32 = alpha.iter().sum();
            if total != degree {
                return Err(Error::Polynomial(format!(
                    "term {i}: multi-index {alpha:?} has total degree {total}, expected {degree}"
                )));
            }
            let slot = map.entry(alpha).or_insert(0);
            *slot = slot
                .checked_add(c)
                .ok_or_else(|| Error::Polynomial(format!("term {i}: coefficient overflow")))?;
        }
        map.retain(|_, c| *c != 0);
        if map.is_empty() {
            return Err(Error::Polynomial("polynomial has no nonzero coefficient".into()));
        }
        Ok(HomogeneousPolynomial {
            prime,
            dim,
            degree,
            terms: map,
        })
    }

    pub fn prime(&self) -> Prime {
        self.prime
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    pub fn terms(&self) -> &BTreeMap<Vec<u32>, i64> {
        &self.terms
    }

    /// Exact value `f(ξ) ∈ Z[1/p]`.
    pub fn evaluate(&self, xi: &PAdicVector) -> Result<PAdicScalar> {
        if xi.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: xi.dim(),
            });
        }
        if xi.prime() != self.prime {
            return Err(Error::PrimeMismatch(self.prime.get(), xi.prime().get()));
        }
        let coords = xi.coords();
        let mut acc = PAdicScalar::zero(self.prime);
        for (alpha, &c) in &self.terms {
            let mut term = PAdicScalar::from_int(self.prime, c);
            for (x, &e) in coords.iter().zip(alpha) {
                for _ in 0..e {
                    term = &term * x;
                }
            }
            acc = &acc + &term;
        }
        Ok(acc)
    }

    /// `|f(ξ)|_p`, computed by exact evaluation.
    pub fn abs_symbol(&self, xi: &PAdicVector) -> Result<PPower> {
        Ok(self.evaluate(xi)?.abs())
    }

    /// `f(c) mod m` for a non-negative integer point `c`.
    pub(crate) fn eval_mod(&self, c: &[u64], m: u64) -> u64 {
        let m128 = m as u128;
        let mut acc: u128 = 0;
        for (alpha, &coef) in &self.terms {
            let mut term = (coef as i128).rem_euclid(m as i128) as u128;
            for (&x, &e) in c.iter().zip(alpha) {
                let x = x as u128 % m128;
                for _ in 0..e {
                    term = term * x % m128;
                }
            }
            acc = (acc + term) % m128;
        }
        acc as u64
    }

    /// `f(c)` as an exact integer for a non-negative integer point `c`.
    fn eval_integer(&self, c: &[u64]) -> BigInt {
        let mut acc = BigInt::zero();
        for (alpha, &coef) in &self.terms {
            let mut term = BigInt::from(coef);
            for (&x, &e) in c.iter().zip(alpha) {
                term *= BigInt::from(x).pow(e);
            }
            acc += term;
        }
        acc
    }

    /// Certifies ellipticity by breadth-first refinement of the residue
    /// classes of `A`.
    ///
    /// A class `c + (p^k Z_p)^n` is resolved once `ord f(c) < k`; then
    /// `|f| = |f(c)|` on the whole class. Classes with `f(c) ≡ 0 mod p^k`
    /// are split into their `p^n` children, unless `f(c) = 0` exactly, which
    /// is a nonzero zero of `f` and refutes ellipticity.
    pub fn certify(&self, depth_cap: u32, max_points: u64) -> Result<Certification> {
        if depth_cap == 0 {
            return Err(Error::InvalidParameter("depth_cap must be at least 1".into()));
        }
        let p = self.prime.get();
        let n = self.dim;
        let mut level: Vec<Vec<u64>> = lattice_points(p, n, max_points)?
            .into_iter()
            .filter(|c| c.iter().any(|&x| x != 0))
            .collect();
        let mut min_val = u32::MAX;
        let mut max_val = 0u32;
        let mut witness_depth = 0u32;
        for k in 1..=depth_cap {
            let modulus = match self.prime.checked_pow(k) {
                Some(m) if m < (1 << 62) => m,
                _ => {
                    return Ok(Certification::Inconclusive {
                        depth: k - 1,
                        unresolved: level,
                    })
                }
            };
            let mut next = Vec::new();
            for c in level {
                let r = self.eval_mod(&c, modulus);
                if r != 0 {
                    let v = valuation_u64(r, p);
                    min_val = min_val.min(v);
                    max_val = max_val.max(v);
                    witness_depth = witness_depth.max(k);
                    continue;
                }
                if self.eval_integer(&c).is_zero() {
                    let witness = PAdicVector::from_ints(
                        self.prime,
                        &c.iter().map(|&x| x as i64).collect::<Vec<_>>(),
                    );
                    return Ok(Certification::NotElliptic { witness });
                }
                if k == depth_cap {
                    next.push(c);
                    continue;
                }
                for j in lattice_points(p, n, max_points)? {
                    next.push(c.iter().zip(&j).map(|(&ci, &ji)| ci + ji * modulus).collect());
                }
                let cap = max_points as usize;
                if next.len() > cap {
                    return Err(Error::ResourceCap {
                        requested: next.len() as u128,
                        cap: max_points,
                    });
                }
            }
            if next.is_empty() {
                let m = max_val;
                let table = ValueTable::build(self, m + 1, max_points)?;
                return Ok(Certification::Elliptic(EllipticCertificate {
                    prime: self.prime,
                    dim: n,
                    degree: self.degree,
                    c0_exponent: max_val as i64,
                    c1_exponent: min_val as i64,
                    modulus_exponent: m,
                    witness_depth,
                    table,
                }));
            }
            if k == depth_cap {
                return Ok(Certification::Inconclusive {
                    depth: depth_cap,
                    unresolved: next,
                });
            }
            level = next;
        }
        unreachable!("loop returns at depth_cap")
    }
}

/// All points of `[0, p)^n` in lexicographic order.
fn lattice_points(p: u64, n: usize, max_points: u64) -> Result<Vec<Vec<u64>>> {
    let total = (p as u128).checked_pow(n as u32).unwrap_or(u128::MAX);
    if total > max_points as u128 {
        return Err(Error::ResourceCap {
            requested: total,
            cap: max_points,
        });
    }
    Ok(box_points(p, n))
}

/// All points of `[0, side)^n`, first coordinate most significant.
pub(crate) fn box_points(side: u64, n: usize) -> Vec<Vec<u64>> {
    let mut out = Vec::new();
    let mut idx = vec![0u64; n];
    loop {
        out.push(idx.clone());
        let mut pos = n;
        loop {
            if pos == 0 {
                return out;
            }
            pos -= 1;
            idx[pos] += 1;
            if idx[pos] < side {
                break;
            }
            idx[pos] = 0;
        }
    }
}

fn valuation_u64(mut r: u64, p: u64) -> u32 {
    debug_assert!(r != 0);
    let mut v = 0;
    while r % p == 0 {
        r /= p;
        v += 1;
    }
    v
}

/// Outcome of [`HomogeneousPolynomial::certify`].
#[derive(Clone, Debug, PartialEq)]
pub enum Certification {
    Elliptic(EllipticCertificate),
    /// A nonzero point where `f` vanishes.
    NotElliptic { witness: PAdicVector },
    /// Classes (as integer centers modulo `p^depth`) still unresolved when the
    /// depth cap was reached.
    Inconclusive { depth: u32, unresolved: Vec<Vec<u64>> },
}

impl Certification {
    pub fn elliptic(self) -> Result<EllipticCertificate> {
        match self {
            Certification::Elliptic(c) => Ok(c),
            Certification::NotElliptic { witness } => {
                Err(Error::NotCertified(format!("f vanishes at {witness}")))
            }
            Certification::Inconclusive { depth, unresolved } => Err(Error::NotCertified(format!(
                "{} classes unresolved at depth {depth}",
                unresolved.len()
            ))),
        }
    }
}

/// `|f|` on `A` modulo `p^{M+1}`: one entry per residue class, stored as the
/// valuation `v` with `|f| = p^{-v}` on the class.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ValueTable {
    modulus_exponent: u32,
    #[serde(skip)]
    side: u64,
    entries: Vec<TableEntry>,
    #[serde(skip)]
    index: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TableEntry {
    pub center: Vec<u64>,
    pub valuation: u32,
}

const ABSENT: u32 = u32::MAX;

impl ValueTable {
    fn build(f: &HomogeneousPolynomial, modulus_exponent: u32, max_points: u64) -> Result<Self> {
        let side = f.prime.checked_pow(modulus_exponent).ok_or(Error::ResourceCap {
            requested: u128::MAX,
            cap: max_points,
        })?;
        let total = (side as u128).checked_pow(f.dim as u32).unwrap_or(u128::MAX);
        if total > max_points as u128 {
            return Err(Error::ResourceCap {
                requested: total,
                cap: max_points,
            });
        }
        let p = f.prime.get();
        let mut entries = Vec::new();
        let mut index = vec![ABSENT; total as usize];
        for (flat, c) in box_points(side, f.dim).into_iter().enumerate() {
            if c.iter().all(|&x| x % p == 0) {
                continue;
            }
            let r = f.eval_mod(&c, side);
            assert!(r != 0, "class {c:?} not resolved at modulus p^{modulus_exponent}");
            let v = valuation_u64(r, p);
            index[flat] = v;
            entries.push(TableEntry { center: c, valuation: v });
        }
        Ok(ValueTable {
            modulus_exponent,
            side,
            entries,
            index,
        })
    }

    /// `M + 1`: the table resolves classes modulo `p^{M+1}`.
    pub fn modulus_exponent(&self) -> u32 {
        self.modulus_exponent
    }

    /// `p^{M+1}`.
    pub fn side(&self) -> u64 {
        self.side
    }

    pub fn entries(&self) -> &[TableEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Valuation of `f` on the class of `residues` (each in `[0, p^{M+1})`).
    pub fn lookup(&self, residues: &[u64]) -> Option<u32> {
        let mut flat = 0u64;
        for &r in residues {
            if r >= self.side {
                return None;
            }
            flat = flat * self.side + r;
        }
        match self.index.get(flat as usize) {
            Some(&v) if v != ABSENT => Some(v),
            _ => None,
        }
    }

    /// Removes the last class; used to fault-inject a corrupted certificate.
    pub(crate) fn drop_last_entry(&mut self) {
        if let Some(e) = self.entries.pop() {
            let flat = e.center.iter().fold(0u64, |acc, &r| acc * self.side + r);
            self.index[flat as usize] = ABSENT;
        }
    }
}

/// Certified constants of an elliptic polynomial.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct EllipticCertificate {
    prime: Prime,
    dim: usize,
    degree: u32,
    /// `m₀` with `C₀ = p^{-m₀} = min_A |f|_p`.
    c0_exponent: i64,
    /// `m₁` with `C₁ = p^{-m₁} = max_A |f|_p`.
    c1_exponent: i64,
    /// `M`: `|f|` is constant on `z + (p^{M+1}Z_p)^n` for `z ∈ A`.
    modulus_exponent: u32,
    /// Refinement depth at which the last class was resolved.
    witness_depth: u32,
    table: ValueTable,
}

impl EllipticCertificate {
    pub fn prime(&self) -> Prime {
        self.prime
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    pub fn c0_exponent(&self) -> i64 {
        self.c0_exponent
    }

    pub fn c1_exponent(&self) -> i64 {
        self.c1_exponent
    }

    pub fn c0(&self) -> f64 {
        self.prime.powf(-self.c0_exponent)
    }

    pub fn c1(&self) -> f64 {
        self.prime.powf(-self.c1_exponent)
    }

    pub fn modulus(&self) -> u32 {
        self.modulus_exponent
    }

    pub fn witness_depth(&self) -> u32 {
        self.witness_depth
    }

    pub fn table(&self) -> &ValueTable {
        &self.table
    }

    /// `|f(ξ)|_p` by table lookup: with `ξ = p^{-k}η`, `η ∈ A`, this is
    /// `p^{kd}·|f(η)|_p`.
    pub fn scaled_abs(&self, xi: &PAdicVector) -> Result<PPower> {
        if xi.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: xi.dim(),
            });
        }
        let k = match xi.ord() {
            Valuation::Infinite => return Err(Error::ZeroVector),
            Valuation::Finite(o) => -o,
        };
        let eta = xi.shift(k);
        let residues = eta.residues(self.table.modulus_exponent);
        let v = self
            .table
            .lookup(&residues)
            .ok_or_else(|| Error::NotCertified(format!("class {residues:?} missing from table")))?;
        Ok(PPower::Pow(k * self.degree as i64 - v as i64))
    }

    /// Corrupted copy for fault injection: one table class removed.
    pub(crate) fn corrupted(&self) -> Self {
        let mut c = self.clone();
        c.table.drop_last_entry();
        c
    }
}
