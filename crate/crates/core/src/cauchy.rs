//! Cauchy problem `∂u/∂t + f(D,β)u = 0`, `u(·,0) = φ`, for Schwartz–Bruhat data.
//!
//! With `φ = Σ c_j 1_{B_j}` the solution `u(x,t) = ∫ Z(x-η,t) φ(η) dη` is the
//! finite sum `Σ c_j ∫_{x - B_j} Z(y,t) dy` of kernel ball masses, and the
//! generator term is the same sum with the weight `|f|^β e^{-t|f|^β}`.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::kernel::{ErrorReceipt, KernelEvaluator, Weight};
use crate::padic::{Ball, PAdicVector, PPower};
use crate::par::{self, Execution};

/// A finite combination of ball indicators with pairwise disjoint balls.
#[derive(Clone, Debug, PartialEq)]
pub struct SchwartzBruhat {
    atoms: Vec<(Ball, Complex64)>,
}

impl SchwartzBruhat {
    /// Refines nested atoms until all balls are disjoint. Equal balls merge;
    /// a ball strictly containing another is replaced by its `p^n` children.
    /// Input order is kept for atoms that need no refinement.
    pub fn normalize(atoms: Vec<(Ball, Complex64)>) -> Result<Self> {
        let mut atoms = atoms;
        if let Some((first, _)) = atoms.first() {
            let (p, n) = (first.prime(), first.dim());
            if let Some((b, _)) = atoms.iter().find(|(b, _)| b.prime() != p || b.dim() != n) {
                return Err(if b.prime() != p {
                    Error::PrimeMismatch(p.get(), b.prime().get())
                } else {
                    Error::DimensionMismatch {
                        expected: n,
                        found: b.dim(),
                    }
                });
            }
        }
        'outer: loop {
            for i in 0..atoms.len() {
                for j in i + 1..atoms.len() {
                    let (a, b) = (&atoms[i].0, &atoms[j].0);
                    if a == b {
                        let c = atoms.remove(j).1;
                        atoms[i].1 += c;
                        continue 'outer;
                    }
                    let split = if a.contains_ball(b) {
                        i
                    } else if b.contains_ball(a) {
                        j
                    } else {
                        continue;
                    };
                    let (ball, c) = atoms.remove(split);
                    let children = ball.sub_balls(1, u64::MAX)?.into_iter().map(|k| (k, c));
                    atoms.splice(split..split, children);
                    continue 'outer;
                }
            }
            return Ok(SchwartzBruhat { atoms });
        }
    }

    pub fn zero() -> Self {
        SchwartzBruhat { atoms: Vec::new() }
    }

    pub fn atoms(&self) -> &[(Ball, Complex64)] {
        &self.atoms
    }

    pub fn is_zero(&self) -> bool {
        self.atoms.iter().all(|(_, c)| *c == Complex64::new(0.0, 0.0))
    }

    /// `φ(x)`.
    pub fn value_at(&self, x: &PAdicVector) -> Complex64 {
        self.atoms
            .iter()
            .filter(|(b, _)| b.contains(x))
            .map(|(_, c)| *c)
            .sum()
    }

    pub fn sup_norm(&self) -> f64 {
        self.atoms.iter().map(|(_, c)| c.norm()).fold(0.0, f64::max)
    }

    pub fn l1_norm(&self) -> f64 {
        self.atoms
            .iter()
            .map(|(b, c)| c.norm() * b.volume().to_f64(b.prime()))
            .sum()
    }
}

/// `u(·,t)` for a datum on `(0, horizon]`, with `u(·,0) = φ`.
#[derive(Clone, Debug)]
pub struct SolutionHandle {
    evaluator: KernelEvaluator,
    datum: SchwartzBruhat,
    horizon: f64,
}

/// Grid estimates of `‖u(·,t)‖_∞` and `‖u(·,t)‖_1` with bounds on the parts
/// outside the grid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolutionNorms {
    pub sup: f64,
    pub l1: f64,
    /// Bound on `|u|` outside the grid.
    pub sup_tail_bound: f64,
    /// Bound on `∫|u|` outside the grid.
    pub l1_tail_bound: f64,
    /// Bound on the evaluation error of the grid values.
    pub receipt_bound: f64,
    pub cells: usize,
}

impl SolutionHandle {
    pub fn new(evaluator: KernelEvaluator, datum: SchwartzBruhat, horizon: f64) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::InvalidParameter(format!("horizon must be positive, got {horizon}")));
        }
        if let Some((b, _)) = datum.atoms.first() {
            if b.prime() != evaluator.prime() {
                return Err(Error::PrimeMismatch(evaluator.prime().get(), b.prime().get()));
            }
            if b.dim() != evaluator.dim() {
                return Err(Error::DimensionMismatch {
                    expected: evaluator.dim(),
                    found: b.dim(),
                });
            }
        }
        Ok(SolutionHandle {
            evaluator,
            datum,
            horizon,
        })
    }

    pub fn evaluator(&self) -> &KernelEvaluator {
        &self.evaluator
    }

    pub fn datum(&self) -> &SchwartzBruhat {
        &self.datum
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    fn convolve(&self, x: &PAdicVector, t: f64, weight: Weight, tol: f64) -> Result<ErrorReceipt> {
        let share = tol / self.datum.atoms.len().max(1) as f64;
        let parts = self
            .datum
            .atoms
            .iter()
            .map(|(b, c)| {
                let mirrored = b.reflect_from(x)?;
                Ok(self.evaluator.weighted_ball_mass(&mirrored, t, weight, share)?.scale(*c))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ErrorReceipt::combine(&parts))
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if !(t.is_finite() && t >= 0.0) {
            return Err(Error::NonPositiveTime(t));
        }
        if t > self.horizon {
            return Err(Error::InvalidParameter(format!("t = {t} exceeds the horizon {}", self.horizon)));
        }
        Ok(())
    }

    /// `u(x,t)`; at `t = 0` this is `φ(x)` exactly.
    pub fn evaluate_solution(&self, x: &PAdicVector, t: f64, tol: f64) -> Result<ErrorReceipt> {
        self.check_time(t)?;
        if x.dim() != self.evaluator.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.evaluator.dim(),
                found: x.dim(),
            });
        }
        if t == 0.0 {
            let value = self.datum.value_at(x);
            return Ok(ErrorReceipt {
                value,
                imaginary_magnitude: value.im.abs(),
                ..ErrorReceipt::zero()
            });
        }
        self.convolve(x, t, Weight::Heat, tol)
    }

    /// `(f(D,β)u)(x,t)`.
    pub fn apply_generator(&self, x: &PAdicVector, t: f64, tol: f64) -> Result<ErrorReceipt> {
        self.check_time(t)?;
        if t == 0.0 {
            return Err(Error::NonPositiveTime(t));
        }
        self.convolve(x, t, Weight::SymbolPower(1), tol)
    }

    /// `∂u/∂t(x,t)` from the differentiated kernel.
    pub fn time_derivative(&self, x: &PAdicVector, t: f64, tol: f64) -> Result<ErrorReceipt> {
        self.check_time(t)?;
        if t == 0.0 {
            return Err(Error::NonPositiveTime(t));
        }
        self.convolve(x, t, Weight::DheatDt, tol)
    }

    /// `u` over a list of `(x, t)` points, in input order.
    pub fn evaluate_grid(&self, points: &[(PAdicVector, f64)], tol: f64, exec: Execution) -> Vec<Result<ErrorReceipt>> {
        par::map(exec, points, |(x, t)| self.evaluate_solution(x, *t, tol))
    }

    /// Norms of `u(·,t)`.
    ///
    /// `u(·,t)` is constant on balls of the smallest atom radius `p^s`, so
    /// the grid over `‖x‖ ≤ p^R` is exact. Outside it every atom satisfies
    /// `‖x - η‖ = ‖x‖`, and the kernel envelope bounds both tails.
    pub fn solution_norms(&self, t: f64, tol: f64, exec: Execution) -> Result<SolutionNorms> {
        if !(t.is_finite() && t > 0.0) {
            return Err(Error::NonPositiveTime(t));
        }
        self.check_time(t)?;
        if self.datum.atoms.is_empty() {
            return Ok(SolutionNorms {
                sup: 0.0,
                l1: 0.0,
                sup_tail_bound: 0.0,
                l1_tail_bound: 0.0,
                receipt_bound: 0.0,
                cells: 0,
            });
        }
        let ev = &self.evaluator;
        let p = ev.prime();
        let n = ev.dim();
        let fine = self.datum.atoms.iter().map(|(b, _)| b.radius_exponent()).min().unwrap();
        let extent = self
            .datum
            .atoms
            .iter()
            .map(|(b, _)| match b.center().norm() {
                PPower::Zero => b.radius_exponent(),
                PPower::Pow(e) => e.max(b.radius_exponent()),
            })
            .max()
            .unwrap();
        let outer = extent + 2;
        let cells = Ball::centered(p, n, outer).sub_balls((outer - fine) as u32, ev.config().max_points)?;
        let share = tol / cells.len() as f64;
        let values = par::map(exec, &cells, |c| self.evaluate_solution(c.center(), t, share));
        let vol = p.powf(fine * n as i64);
        let mut sup: f64 = 0.0;
        let mut l1 = 0.0;
        let mut receipt = 0.0;
        for v in values {
            let v = v?;
            sup = sup.max(v.value.norm());
            l1 += vol * v.value.norm();
            receipt += v.error_bound();
        }
        let mass = self.datum.l1_norm();
        let db = ev.order();
        let pf = p.get() as f64;
        let l1_tail = mass * ev.envelope_at(0, t) * (1.0 - pf.powf(-(n as f64)))
            * pf.powf(-((outer + 1) as f64) * db)
            / (1.0 - pf.powf(-db));
        Ok(SolutionNorms {
            sup,
            l1,
            sup_tail_bound: mass * ev.envelope_at(outer + 1, t),
            l1_tail_bound: l1_tail,
            receipt_bound: receipt,
            cells: cells.len(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::padic::{PAdicScalar, Prime};
    use crate::symbol::HomogeneousPolynomial;

    fn prime(p: u64) -> Prime {
        Prime::new(p).unwrap()
    }

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn square(p: u64) -> KernelEvaluator {
        let f = HomogeneousPolynomial::new(prime(p), 1, 2, [(vec![2], 1)]).unwrap();
        KernelEvaluator::certified(f, 1.0).unwrap()
    }

    #[test]
    fn normalize_nested_pair() {
        let p = prime(3);
        let outer = Ball::unit(p, 1);
        let inner = Ball::new(PAdicVector::from_ints(p, &[1]), -1);
        let sb = SchwartzBruhat::normalize(vec![(outer, c(1.0)), (inner.clone(), c(2.0))]).unwrap();
        assert_eq!(sb.atoms().len(), 3);
        assert!(sb.atoms().contains(&(inner, c(3.0))));
        assert_eq!(sb.atoms().iter().filter(|(_, v)| *v == c(1.0)).count(), 2);
        for x in [0, 1, 2, 4, 5, 7] {
            let x = PAdicVector::from_ints(p, &[x]);
            let expected = if x.try_sub(&PAdicVector::from_ints(p, &[1])).unwrap().norm() <= PPower::Pow(-1) {
                3.0
            } else {
                1.0
            };
            assert_eq!(sb.value_at(&x), c(expected));
        }
    }

    #[test]
    fn normalize_trivial_cases() {
        assert!(SchwartzBruhat::normalize(vec![]).unwrap().atoms().is_empty());
        let p = prime(2);
        let atoms = vec![
            (Ball::new(PAdicVector::from_ints(p, &[1]), -1), c(1.0)),
            (Ball::new(PAdicVector::from_ints(p, &[0]), -1), c(-2.0)),
        ];
        assert_eq!(SchwartzBruhat::normalize(atoms.clone()).unwrap().atoms(), &atoms[..]);
    }

    #[test]
    fn normalize_deep_nesting_preserves_values() {
        let p = prime(2);
        let big = Ball::centered(p, 1, 1);
        let small = Ball::new(PAdicVector::from_ints(p, &[3]), -2);
        let sb = SchwartzBruhat::normalize(vec![(small.clone(), c(5.0)), (big.clone(), c(1.0)), (big, c(1.0))]).unwrap();
        for (i, a) in sb.atoms().iter().enumerate() {
            for b in &sb.atoms()[i + 1..] {
                assert!(a.0.is_disjoint(&b.0));
            }
        }
        let vol: f64 = sb.atoms().iter().map(|(b, _)| b.volume().to_f64(p)).sum();
        assert_eq!(vol, 2.0);
        assert_eq!(sb.value_at(&PAdicVector::from_ints(p, &[7])), c(7.0));
        assert_eq!(sb.value_at(&PAdicVector::from_ints(p, &[1])), c(2.0));
        let half = PAdicVector::new(vec![PAdicScalar::from_int_scaled(p, 1, -1)]).unwrap();
        assert_eq!(sb.value_at(&half), c(2.0));
    }

    #[test]
    fn single_atom_is_ball_mass() {
        let ev = square(3);
        let b = Ball::unit(prime(3), 1);
        let h = SolutionHandle::new(ev.clone(), SchwartzBruhat::normalize(vec![(b.clone(), c(1.0))]).unwrap(), 10.0)
            .unwrap();
        let x = PAdicVector::from_ints(prime(3), &[4]);
        let u = h.evaluate_solution(&x, 1.0, 1e-12).unwrap();
        let m = ev.ball_mass(&b.reflect_from(&x).unwrap(), 1.0, 1e-12).unwrap();
        assert!((u.value - m.value).norm() < 1e-15);
    }

    #[test]
    fn initial_value_and_small_time_limit() {
        let ev = square(2);
        let b = Ball::unit(prime(2), 1);
        let h = SolutionHandle::new(ev, SchwartzBruhat::normalize(vec![(b, c(1.0))]).unwrap(), 1.0).unwrap();
        let x = PAdicVector::from_ints(prime(2), &[6]);
        assert_eq!(h.evaluate_solution(&x, 0.0, 1e-12).unwrap().value, c(1.0));
        let u = h.evaluate_solution(&x, 1e-9, 1e-12).unwrap();
        assert!((u.re() - 1.0).abs() < 1e-6);
        assert!(h.evaluate_solution(&x, 2.0, 1e-12).is_err());
    }

    #[test]
    fn zero_datum() {
        let h = SolutionHandle::new(square(2), SchwartzBruhat::zero(), 1.0).unwrap();
        let x = PAdicVector::from_ints(prime(2), &[1]);
        assert_eq!(h.evaluate_solution(&x, 0.5, 1e-10).unwrap().value, c(0.0));
        assert_eq!(h.apply_generator(&x, 0.5, 1e-10).unwrap().value, c(0.0));
        let norms = h.solution_norms(0.5, 1e-10, Execution::Sequential).unwrap();
        assert_eq!((norms.sup, norms.l1), (0.0, 0.0));
    }

    #[test]
    fn generator_balances_time_derivative() {
        let ev = square(3);
        let p = prime(3);
        let datum = SchwartzBruhat::normalize(vec![
            (Ball::unit(p, 1), c(1.0)),
            (Ball::new(PAdicVector::new(vec![PAdicScalar::from_int_scaled(p, 1, -2)]).unwrap(), -1), c(0.5)),
        ])
        .unwrap();
        let h = SolutionHandle::new(ev, datum, 4.0).unwrap();
        for x in [0, 1, 5] {
            let x = PAdicVector::from_ints(p, &[x]);
            for t in [0.25, 1.0] {
                let dt = h.time_derivative(&x, t, 1e-13).unwrap();
                let g = h.apply_generator(&x, t, 1e-13).unwrap();
                assert!((dt.value + g.value).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn norms_respect_mass_and_sup() {
        let ev = square(2);
        let p = prime(2);
        let datum = SchwartzBruhat::normalize(vec![(Ball::unit(p, 1), c(1.0))]).unwrap();
        let h = SolutionHandle::new(ev, datum, 4.0).unwrap();
        let norms = h.solution_norms(1.0, 1e-10, Execution::Parallel).unwrap();
        assert!(norms.sup <= 1.0 + 1e-9);
        assert!(norms.l1 <= 1.0 + 1e-9);
        assert!(norms.l1 + norms.l1_tail_bound >= 1.0 - 1e-9);
    }
}
