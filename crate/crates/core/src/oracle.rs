//! Brute-force reference values for the kernel, independent of the shell
//! machinery: it shares only the `padic` arithmetic and re-evaluates the
//! polynomial itself.
//!
//! `Z_L(x,t)` is integrated over a recursive partition of `(p^{-L}Z_p)^n`.
//! A cell away from the origin is a leaf once a Taylor estimate proves `|f|`
//! constant on it; there the integral is exact (`Ψ` integrates to its center
//! value times the volume, or to zero). Cells still unresolved at the depth
//! limit, which only happens next to the origin, contribute a midpoint value
//! and a rigorous slack.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::padic::{character_integral, Ball, PAdicScalar, PAdicVector, PPower, Prime};
use crate::par::{self, Execution};
use crate::symbol::HomogeneousPolynomial;

/// Integration region `(p^{-L}Z_p)^n` and the refinement depth below it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LatticeSpec {
    /// Outer radius exponent: the region is the ball of radius `p^L`.
    pub outer: i64,
    /// Cells are refined down to radius `p^{L - depth}` at most.
    pub depth: u32,
}

/// Oracle output: `|true − value| ≤ slack` up to floating rounding.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OracleValue {
    pub value: Complex64,
    pub slack: f64,
    /// True when every cell was integrated exactly.
    pub exact: bool,
    pub cells: u64,
}

impl OracleValue {
    fn zero() -> Self {
        OracleValue {
            value: Complex64::new(0.0, 0.0),
            slack: 0.0,
            exact: true,
            cells: 0,
        }
    }

    fn absorb(&mut self, other: OracleValue) {
        self.value += other.value;
        self.slack += other.slack;
        self.exact &= other.exact;
        self.cells += other.cells;
    }
}

/// The polynomial as plain data, evaluated with local code.
struct Poly {
    prime: Prime,
    degree: i64,
    terms: Vec<(Vec<u32>, PAdicScalar)>,
}

impl Poly {
    fn new(f: &HomogeneousPolynomial) -> Self {
        Poly {
            prime: f.prime(),
            degree: f.degree() as i64,
            terms: f
                .terms()
                .iter()
                .map(|(a, &c)| (a.clone(), PAdicScalar::from_int(f.prime(), c)))
                .collect(),
        }
    }

    fn abs_at(&self, xi: &PAdicVector) -> PPower {
        let mut acc = PAdicScalar::zero(self.prime);
        for (alpha, c) in &self.terms {
            let mut m = c.clone();
            for (x, &e) in xi.coords().iter().zip(alpha) {
                for _ in 0..e {
                    m = &m * x;
                }
            }
            acc = &acc + &m;
        }
        acc.abs()
    }
}

struct Integrand<'a> {
    poly: Poly,
    beta: f64,
    x: &'a PAdicVector,
    t: f64,
    min_radius: i64,
}

impl Integrand<'_> {
    fn p_pow(&self, e: f64) -> f64 {
        (self.poly.prime.get() as f64).powf(e)
    }

    fn vol(&self, b: &Ball) -> f64 {
        self.p_pow((b.radius_exponent() * b.dim() as i64) as f64)
    }

    /// `∫_B Ψ(x·ξ) e^{-t|f(ξ)|^β} dξ`.
    fn cell(&self, b: &Ball) -> Result<OracleValue> {
        let rho = b.radius_exponent();
        let vol = self.vol(b);
        if b.contains_origin() {
            if rho <= self.min_radius {
                // On the origin cell |f(ξ)| ≤ ‖ξ‖^d ≤ p^{ρd}, so e^{-tλ} ∈ [e^{-t p^{ρdβ}}, 1].
                let floor = (-self.t * self.p_pow(rho as f64 * self.poly.degree as f64 * self.beta)).exp();
                return Ok(match character_integral(self.x, b)? {
                    Some(_) => OracleValue {
                        value: Complex64::new(vol * (1.0 + floor) / 2.0, 0.0),
                        slack: vol * (1.0 - floor) / 2.0,
                        exact: false,
                        cells: 1,
                    },
                    // ∫_B Ψ = 0, so the cell equals ∫_B Ψ·(e^{-tλ} - 1).
                    None => OracleValue {
                        value: Complex64::new(0.0, 0.0),
                        slack: vol * (1.0 - floor),
                        exact: false,
                        cells: 1,
                    },
                });
            }
            return self.split(b);
        }
        let c = b.center();
        let norm_c = c.norm().exponent().expect("center of a cell avoiding 0 is nonzero");
        let fc = self.poly.abs_at(c);
        // |f(c+h) - f(c)| ≤ ‖c‖^{d-1}‖h‖ for ‖h‖ < ‖c‖ and integral coefficients.
        let constant = match fc {
            PPower::Pow(e) => (self.poly.degree - 1) * norm_c + rho < e,
            PPower::Zero => false,
        };
        if constant {
            let lambda = fc.to_f64(self.poly.prime).powf(self.beta);
            let w = (-self.t * lambda).exp();
            let value = match character_integral(self.x, b)? {
                Some((phase, v)) => phase.to_complex() * v.to_f64(self.poly.prime) * w,
                None => Complex64::new(0.0, 0.0),
            };
            return Ok(OracleValue {
                value,
                slack: 0.0,
                exact: true,
                cells: 1,
            });
        }
        if rho <= self.min_radius {
            return Ok(OracleValue {
                value: Complex64::new(0.0, 0.0),
                slack: vol,
                exact: false,
                cells: 1,
            });
        }
        self.split(b)
    }

    fn split(&self, b: &Ball) -> Result<OracleValue> {
        let mut acc = OracleValue::zero();
        for child in b.sub_balls(1, u64::MAX)? {
            acc.absorb(self.cell(&child)?);
        }
        Ok(acc)
    }
}

fn check(f: &HomogeneousPolynomial, beta: f64, x: &PAdicVector, t: f64) -> Result<()> {
    if !(t.is_finite() && t > 0.0) {
        return Err(Error::NonPositiveTime(t));
    }
    if !(beta.is_finite() && beta > 0.0) {
        return Err(Error::InvalidParameter(format!("beta must be positive, got {beta}")));
    }
    if x.dim() != f.dim() {
        return Err(Error::DimensionMismatch {
            expected: f.dim(),
            found: x.dim(),
        });
    }
    if x.prime() != f.prime() {
        return Err(Error::PrimeMismatch(f.prime().get(), x.prime().get()));
    }
    Ok(())
}

/// `Z_L(x,t) = ∫_{(p^{-L}Z_p)^n} Ψ(x·ξ) e^{-t|f(ξ)|^β} dξ` by recursive cells.
pub fn brute_force_z(
    f: &HomogeneousPolynomial,
    beta: f64,
    x: &PAdicVector,
    t: f64,
    spec: LatticeSpec,
) -> Result<OracleValue> {
    check(f, beta, x, t)?;
    let integrand = Integrand {
        poly: Poly::new(f),
        beta,
        x,
        t,
        min_radius: spec.outer - spec.depth as i64,
    };
    integrand.cell(&Ball::centered(f.prime(), f.dim(), spec.outer))
}

/// `∫_B Z_L(y,t) dy`, summing `vol · Z_L(center)` over the cells of radius
/// `p^{-L}` inside `B`, on which `Z_L` is constant. Equals the mass of `B`
/// under `Z` when `L ≥ -r`.
pub fn brute_force_ball_mass(
    f: &HomogeneousPolynomial,
    beta: f64,
    ball: &Ball,
    t: f64,
    spec: LatticeSpec,
    max_points: u64,
    exec: Execution,
) -> Result<OracleValue> {
    check(f, beta, ball.center(), t)?;
    let r = ball.radius_exponent();
    let levels = r + spec.outer;
    if levels < 0 {
        return Err(Error::InvalidParameter(format!(
            "outer exponent {} is too small for a ball of radius p^{r}",
            spec.outer
        )));
    }
    let cells = ball.sub_balls(levels as u32, max_points)?;
    let vol = (f.prime().get() as f64).powf((-spec.outer * f.dim() as i64) as f64);
    let parts = par::map(exec, &cells, |c| brute_force_z(f, beta, c.center(), t, spec));
    let mut acc = OracleValue::zero();
    for part in parts {
        let part = part?;
        acc.absorb(OracleValue {
            value: part.value * vol,
            slack: part.slack * vol,
            ..part
        });
    }
    Ok(acc)
}
