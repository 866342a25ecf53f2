//! Sampling the Markov process with transition density `Z(x,t)`.
//!
//! The process is a random walk with i.i.d. increments of law `Z(·,Δt)dy`.
//! An increment is drawn by descending the ball tree from a root
//! `(p^{-K}Z_p)^n` whose mass is at least `1 - ε_outer`: at each node one of
//! the `p^n` children is chosen with probability proportional to its exact
//! ball mass, down to radius `p^{-precision}`. The missing outer mass is
//! redistributed over the annulus `‖y‖ = p^{K+1}` by the masses there.

use std::collections::HashMap;
use std::sync::Arc;

use parking_lot::RwLock;
use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::kernel::{ErrorReceipt, KernelEvaluator};
use crate::padic::{Ball, PAdicVector};
use crate::par::{self, Execution};
use crate::rng::step_rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    /// Time step `Δt`.
    pub dt: f64,
    /// Leaves are balls of radius `p^{-precision}`.
    pub precision: i64,
    /// Mass allowed outside the root ball.
    pub eps_outer: f64,
    /// Truncation tolerance for each ball mass.
    pub mass_tol: f64,
    /// Maximum number of cached tree nodes.
    pub cache_capacity: usize,
    /// Largest admissible root exponent `K`.
    pub max_outer: i64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            dt: 1.0,
            precision: 2,
            eps_outer: 1e-8,
            mass_tol: 1e-12,
            cache_capacity: 1 << 16,
            max_outer: 400,
        }
    }
}

/// Children of a tree node with their clamped masses.
#[derive(Debug)]
struct NodeProbs {
    children: Vec<Ball>,
    probs: Vec<f64>,
}

/// Draws increments of the process over one time step.
pub struct IncrementSampler {
    evaluator: KernelEvaluator,
    config: SamplerConfig,
    outer: i64,
    root_mass: f64,
    cache: RwLock<HashMap<Ball, Arc<NodeProbs>>>,
}

impl std::fmt::Debug for IncrementSampler {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("IncrementSampler")
            .field("config", &self.config)
            .field("outer", &self.outer)
            .field("root_mass", &self.root_mass)
            .finish_non_exhaustive()
    }
}

/// One increment: the chain of nested balls chosen from the root down.
#[derive(Clone, Debug, PartialEq)]
pub struct Increment {
    pub chain: Vec<Ball>,
    /// Canonical center of the leaf ball.
    pub representative: PAdicVector,
    /// True when the draw fell outside the root ball.
    pub outside: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PathStep {
    /// Leaf ball of the increment.
    pub increment: Ball,
    pub representative: PAdicVector,
    /// Position after this step.
    pub position: PAdicVector,
    pub outside: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PathSample {
    pub start: PAdicVector,
    pub steps: Vec<PathStep>,
    pub seed: u64,
    pub path_index: u64,
    pub dt: f64,
    pub precision: i64,
}

impl PathSample {
    /// Position after `step` steps; step 0 is the start.
    pub fn position(&self, step: usize) -> Option<&PAdicVector> {
        match step {
            0 => Some(&self.start),
            s => self.steps.get(s - 1).map(|st| &st.position),
        }
    }
}

impl IncrementSampler {
    /// Builds a sampler, choosing the smallest root exponent `K ≥ -precision`
    /// whose certified mass deficit is at most `eps_outer`.
    pub fn new(evaluator: KernelEvaluator, config: SamplerConfig) -> Result<Self> {
        if !(config.dt.is_finite() && config.dt > 0.0) {
            return Err(Error::NonPositiveTime(config.dt));
        }
        if !(config.eps_outer > 0.0 && config.eps_outer < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "eps_outer must lie in (0, 1), got {}",
                config.eps_outer
            )));
        }
        let n = evaluator.dim();
        let p = evaluator.prime();
        let deficit = |k: i64| -> Result<f64> {
            let m = evaluator.ball_mass(&Ball::centered(p, n, k), config.dt, config.mass_tol)?;
            Ok(1.0 - m.re() + m.error_bound())
        };
        let mut k = -config.precision;
        let mut step = 1i64;
        // Exponential search followed by bisection on the monotone deficit.
        while deficit(k)? > config.eps_outer {
            if k > config.max_outer {
                return Err(Error::OuterDeficiency {
                    deficiency: deficit(k)?,
                    budget: config.eps_outer,
                });
            }
            k += step;
            step *= 2;
        }
        let mut lo = (k - step / 2).max(-config.precision);
        let mut hi = k;
        if lo < hi && deficit(lo)? <= config.eps_outer {
            hi = lo;
        }
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if deficit(mid)? <= config.eps_outer {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let outer = hi;
        let root_mass = evaluator.ball_mass(&Ball::centered(p, n, outer), config.dt, config.mass_tol)?.re();
        Ok(IncrementSampler {
            evaluator,
            config,
            outer,
            root_mass: root_mass.min(1.0),
            cache: RwLock::new(HashMap::new()),
        })
    }

    pub fn evaluator(&self) -> &KernelEvaluator {
        &self.evaluator
    }

    pub fn config(&self) -> &SamplerConfig {
        &self.config
    }

    /// Root exponent `K`.
    pub fn outer(&self) -> i64 {
        self.outer
    }

    pub fn root(&self) -> Ball {
        Ball::centered(self.evaluator.prime(), self.evaluator.dim(), self.outer)
    }

    pub fn root_mass(&self) -> f64 {
        self.root_mass
    }

    /// Raw receipts for a node and its children, before clamping.
    pub fn node_masses(&self, node: &Ball) -> Result<(ErrorReceipt, Vec<ErrorReceipt>)> {
        let (dt, tol) = (self.config.dt, self.config.mass_tol);
        let parent = self.evaluator.ball_mass(node, dt, tol)?;
        let children = node
            .sub_balls(1, self.evaluator.config().max_points)?
            .iter()
            .map(|c| self.evaluator.ball_mass(c, dt, tol))
            .collect::<Result<Vec<_>>>()?;
        Ok((parent, children))
    }

    fn node(&self, node: &Ball) -> Result<Arc<NodeProbs>> {
        if let Some(hit) = self.cache.read().get(node) {
            return Ok(Arc::clone(hit));
        }
        let (parent, kids) = self.node_masses(node)?;
        let cap = parent.re().max(0.0);
        let mut probs = Vec::with_capacity(kids.len());
        for k in &kids {
            if k.re() < -(k.error_bound() + 4.0 * f64::EPSILON) {
                return Err(Error::NegativeMass {
                    mass: k.re(),
                    bound: k.error_bound(),
                });
            }
            probs.push(k.re().clamp(0.0, cap));
        }
        let entry = Arc::new(NodeProbs {
            children: node.sub_balls(1, self.evaluator.config().max_points)?,
            probs,
        });
        let mut cache = self.cache.write();
        if cache.len() < self.config.cache_capacity {
            cache.insert(node.clone(), Arc::clone(&entry));
        }
        Ok(entry)
    }

    /// Children of `node` with masses clamped to `[0, mass(node)]`.
    pub fn increment_tree_probabilities(&self, node: &Ball) -> Result<Vec<(Ball, f64)>> {
        let e = self.node(node)?;
        Ok(e.children.iter().cloned().zip(e.probs.iter().copied()).collect())
    }

    fn choose<R: Rng>(probs: &[f64], rng: &mut R) -> usize {
        let total: f64 = probs.iter().sum();
        let u = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut last = 0;
        for (i, &p) in probs.iter().enumerate() {
            if p <= 0.0 {
                continue;
            }
            acc += p;
            last = i;
            if u < acc {
                return i;
            }
        }
        last
    }

    /// Draws one increment.
    pub fn sample_increment<R: Rng>(&self, rng: &mut R) -> Result<Increment> {
        let root = self.root();
        let outside = rng.random::<f64>() >= self.root_mass;
        let mut chain = Vec::new();
        let mut node = if outside {
            let annulus = root.parent();
            let e = self.node(&annulus)?;
            let probs: Vec<f64> = e
                .children
                .iter()
                .zip(&e.probs)
                .map(|(c, &p)| if c.contains_origin() { 0.0 } else { p })
                .collect();
            if probs.iter().all(|&p| p <= 0.0) {
                return Err(Error::OuterDeficiency {
                    deficiency: 1.0 - self.root_mass,
                    budget: self.config.eps_outer,
                });
            }
            let pick = e.children[Self::choose(&probs, rng)].clone();
            chain.push(annulus);
            pick
        } else {
            root
        };
        while node.radius_exponent() > -self.config.precision {
            let e = self.node(&node)?;
            let next = e.children[Self::choose(&e.probs, rng)].clone();
            chain.push(node);
            node = next;
        }
        let representative = node.center().clone();
        chain.push(node);
        Ok(Increment {
            chain,
            representative,
            outside,
        })
    }

    /// `x_{k+1} = x_k + ΔX_k` with the increment of step `k` drawn from the
    /// stream `(seed, path_index, k)`.
    pub fn simulate_path(&self, start: &PAdicVector, steps: usize, seed: u64, path_index: u64) -> Result<PathSample> {
        if start.dim() != self.evaluator.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.evaluator.dim(),
                found: start.dim(),
            });
        }
        let mut position = start.clone();
        let mut out = Vec::with_capacity(steps);
        for k in 0..steps {
            let mut rng = step_rng(seed, path_index, k as u64);
            let inc = self.sample_increment(&mut rng)?;
            position = position.try_add(&inc.representative)?;
            out.push(PathStep {
                increment: inc.chain.last().expect("chain ends at a leaf").clone(),
                representative: inc.representative,
                position: position.clone(),
                outside: inc.outside,
            });
        }
        Ok(PathSample {
            start: start.clone(),
            steps: out,
            seed,
            path_index,
            dt: self.config.dt,
            precision: self.config.precision,
        })
    }

    /// Paths `0..count`, in index order regardless of `exec`.
    pub fn simulate_paths(
        &self,
        start: &PAdicVector,
        steps: usize,
        seed: u64,
        count: usize,
        exec: Execution,
    ) -> Result<Vec<PathSample>> {
        par::map_range(exec, count, |i| self.simulate_path(start, steps, seed, i as u64))
            .into_iter()
            .collect()
    }

    /// Increments drawn from streams `(seed, i, 0)` for `i < count`.
    pub fn sample_increments(&self, seed: u64, count: usize, exec: Execution) -> Result<Vec<Increment>> {
        par::map_range(exec, count, |i| self.sample_increment(&mut step_rng(seed, i as u64, 0)))
            .into_iter()
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HistogramBin {
    pub ball: Ball,
    pub count: u64,
    pub frequency: f64,
    pub exact_mass: Option<f64>,
}

/// Occupancy of a disjoint ball partition at one step of a path batch.
#[derive(Clone, Debug, PartialEq)]
pub struct Histogram {
    pub step: usize,
    pub total: u64,
    pub bins: Vec<HistogramBin>,
    /// Paths outside every bin.
    pub outside: u64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChiSquareReport {
    pub statistic: f64,
    pub degrees_of_freedom: usize,
    /// 99.9% quantile of the χ² law with that many degrees of freedom.
    pub quantile: f64,
}

impl ChiSquareReport {
    pub fn passes(&self) -> bool {
        self.statistic <= self.quantile
    }
}

/// Counts the positions at `step` of `paths` in each ball of `partition`.
pub fn occupancy_histogram(paths: &[PathSample], partition: &[Ball], step: usize) -> Result<Histogram> {
    for (i, a) in partition.iter().enumerate() {
        if partition[i + 1..].iter().any(|b| !a.is_disjoint(b)) {
            return Err(Error::InvalidParameter(format!("partition ball {a} overlaps another")));
        }
    }
    let mut counts = vec![0u64; partition.len()];
    let mut outside = 0;
    let mut total = 0;
    for path in paths {
        let x = path.position(step).ok_or_else(|| {
            Error::InvalidParameter(format!("path has {} steps, asked for step {step}", path.steps.len()))
        })?;
        total += 1;
        match partition.iter().position(|b| b.contains(x)) {
            Some(i) => counts[i] += 1,
            None => outside += 1,
        }
    }
    let bins = partition
        .iter()
        .zip(counts)
        .map(|(b, count)| HistogramBin {
            ball: b.clone(),
            count,
            frequency: if total == 0 { 0.0 } else { count as f64 / total as f64 },
            exact_mass: None,
        })
        .collect();
    Ok(Histogram {
        step,
        total,
        bins,
        outside,
    })
}

impl Histogram {
    /// Fills in `P(x₀ + X_t ∈ B)` for each bin.
    pub fn attach_exact(&mut self, ev: &KernelEvaluator, start: &PAdicVector, t: f64, tol: f64) -> Result<()> {
        for bin in &mut self.bins {
            let shifted = bin.ball.translate(&start.neg())?;
            bin.exact_mass = Some(ev.ball_mass(&shifted, t, tol)?.re());
        }
        Ok(())
    }

    /// Largest `|count - N·m| / sqrt(N·m(1-m))` over bins with exact masses.
    pub fn max_sigma(&self) -> f64 {
        let n = self.total as f64;
        self.bins
            .iter()
            .filter_map(|b| b.exact_mass.map(|m| (b.count as f64, m)))
            .map(|(c, m)| {
                let sd = (n * m * (1.0 - m)).sqrt();
                let dev = (c - n * m).abs();
                if sd > 0.0 {
                    dev / sd
                } else if dev == 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            })
            .fold(0.0, f64::max)
    }

    /// Pearson χ² over bins with expected count at least 5; the remaining
    /// bins and the outside are pooled into one cell.
    pub fn chi_square(&self) -> Option<ChiSquareReport> {
        let n = self.total as f64;
        let mut stat = 0.0;
        let mut cells = 0usize;
        let mut rest_obs = self.outside as f64;
        let mut rest_exp = n;
        for b in &self.bins {
            let m = b.exact_mass?;
            let e = n * m;
            rest_exp -= e;
            if e >= 5.0 {
                stat += (b.count as f64 - e).powi(2) / e;
                cells += 1;
            } else {
                rest_obs += b.count as f64;
            }
        }
        if rest_exp >= 5.0 {
            stat += (rest_obs - rest_exp).powi(2) / rest_exp;
            cells += 1;
        }
        if cells < 2 {
            return None;
        }
        let dof = cells - 1;
        let quantile = ChiSquared::new(dof as f64).ok()?.inverse_cdf(0.999);
        Some(ChiSquareReport {
            statistic: stat,
            degrees_of_freedom: dof,
            quantile,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::padic::Prime;
    use crate::symbol::HomogeneousPolynomial;

    fn prime(p: u64) -> Prime {
        Prime::new(p).unwrap()
    }

    fn sampler(p: u64, d: u32, dt: f64) -> IncrementSampler {
        let f = HomogeneousPolynomial::new(prime(p), 1, d, [(vec![d], 1)]).unwrap();
        let ev = KernelEvaluator::certified(f, 1.0).unwrap();
        IncrementSampler::new(
            ev,
            SamplerConfig {
                dt,
                ..SamplerConfig::default()
            },
        )
        .unwrap()
    }

    #[test]
    fn root_is_minimal() {
        let s = sampler(2, 1, 1.0);
        let k = s.outer();
        let ev = s.evaluator();
        let below = ev.ball_mass(&Ball::centered(prime(2), 1, k - 1), 1.0, 1e-12).unwrap();
        assert!(1.0 - below.re() > 1e-8 - below.error_bound());
        assert!(1.0 - s.root_mass() <= 1e-8);
    }

    #[test]
    fn probabilities_sum_to_parent() {
        let s = sampler(3, 2, 0.5);
        let node = Ball::unit(prime(3), 1);
        let kids = s.increment_tree_probabilities(&node).unwrap();
        let total: f64 = kids.iter().map(|(_, p)| p).sum();
        let parent = s.evaluator().ball_mass(&node, 0.5, 1e-12).unwrap().re();
        assert_eq!(kids.len(), 3);
        assert!((total - parent).abs() < 1e-11);
    }

    #[test]
    fn symmetric_children_have_equal_mass() {
        let s = sampler(5, 2, 1.0);
        let kids = s.increment_tree_probabilities(&Ball::unit(prime(5), 1)).unwrap();
        // Children u and -u ≡ 5 - u.
        for u in 1..5usize {
            assert!((kids[u].1 - kids[5 - u].1).abs() < 1e-14);
        }
    }

    #[test]
    fn chains_are_nested_and_reproducible() {
        let s = sampler(2, 1, 1.0);
        let a = s.sample_increment(&mut step_rng(11, 0, 0)).unwrap();
        let b = s.sample_increment(&mut step_rng(11, 0, 0)).unwrap();
        assert_eq!(a, b);
        for w in a.chain.windows(2) {
            assert!(w[0].contains_ball(&w[1]));
            assert_eq!(w[1].radius_exponent(), w[0].radius_exponent() - 1);
        }
        assert_eq!(a.chain.last().unwrap().radius_exponent(), -2);
    }

    #[test]
    fn zero_steps_and_parallel_batches() {
        let s = sampler(3, 1, 1.0);
        let x0 = PAdicVector::from_ints(prime(3), &[1]);
        let p = s.simulate_path(&x0, 0, 5, 0).unwrap();
        assert!(p.steps.is_empty());
        assert_eq!(p.position(0), Some(&x0));
        let a = s.simulate_paths(&x0, 3, 9, 50, Execution::Sequential).unwrap();
        let b = s.simulate_paths(&x0, 3, 9, 50, Execution::Parallel).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn degenerate_histogram() {
        let s = sampler(2, 1, 1.0);
        let x0 = PAdicVector::from_ints(prime(2), &[0]);
        let path = s.simulate_path(&x0, 1, 1, 0).unwrap();
        let x1 = path.position(1).unwrap().clone();
        let h = occupancy_histogram(&[path], &[Ball::new(x1, 0)], 1).unwrap();
        assert_eq!((h.total, h.outside, h.bins[0].count), (1, 0, 1));
        assert_eq!(h.bins[0].frequency, 1.0);
    }

    #[test]
    fn overlapping_partition_rejected() {
        let b = Ball::unit(prime(2), 1);
        assert!(occupancy_histogram(&[], &[b.clone(), b.parent()], 0).is_err());
    }
}
