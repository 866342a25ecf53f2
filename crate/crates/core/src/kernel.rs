//! Heat kernel `Z(x,t) = ∫ Ψ(x·ξ) e^{-t|f(ξ)|_p^β} dξ` by exact character-shell sums.
//!
//! On the shell `‖ξ‖ = p^k` write `ξ = p^{-k}η` with `η ∈ A`. The certificate
//! table partitions `A` into balls `η_i + (p^{M+1}Z_p)^n` on which `|f|` is
//! constant, and the character integral over each such ball is either
//! `Ψ(p^{-k}x·η_i)·p^{-(M+1)n}` or exactly zero. With `o = ord(x)`:
//!
//! * `k ≤ o`: the character is trivial on the whole ball `‖ξ‖ ≤ p^k`;
//! * `o < k ≤ o + M + 1`: the phase is `a/p^{k-o}` with
//!   `a = p^{-o}x·η_i mod p^{k-o}`, an exact integer;
//! * `k > o + M + 1`: the shell integral vanishes exactly.
//!
//! Phases are bucketed by exact angle before a single conversion to floating
//! point, so the only rounding is in `e^{-tλ}` and the final summation.

use std::collections::HashMap;
use std::f64::consts::TAU;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use num_complex::Complex64;
use parking_lot::RwLock;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::padic::{Ball, PAdicVector, PPower, Prime, Valuation, DEFAULT_MAX_POINTS};
use crate::par::{self, Execution};
use crate::symbol::{EllipticCertificate, HomogeneousPolynomial, DEFAULT_DEPTH_CAP};

/// Tunables for a [`KernelEvaluator`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KernelConfig {
    /// Maximum number of memoized shell character sums.
    pub cache_capacity: usize,
    /// Maximum number of shells a single evaluation may visit.
    pub max_shells: u32,
    /// Resource cap on residue enumeration.
    pub max_points: u64,
}

impl Default for KernelConfig {
    fn default() -> Self {
        KernelConfig {
            cache_capacity: 256,
            max_shells: 4096,
            max_points: DEFAULT_MAX_POINTS,
        }
    }
}

/// The integrand weight `w(λ)` multiplying `Ψ(x·ξ)`, where `λ = |f(ξ)|_p^β`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weight {
    /// `e^{-tλ}`.
    Heat,
    /// `-λ e^{-tλ}`, so that the result is `∂Z/∂t`.
    DheatDt,
    /// `λ^m e^{-tλ}`.
    SymbolPower(u32),
}

impl Weight {
    fn power(self) -> u32 {
        match self {
            Weight::Heat => 0,
            Weight::DheatDt => 1,
            Weight::SymbolPower(m) => m,
        }
    }

    fn sign(self) -> f64 {
        match self {
            Weight::DheatDt => -1.0,
            _ => 1.0,
        }
    }
}

/// A value together with a rigorous bound on its truncation error and an
/// estimate of its floating-point rounding error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ErrorReceipt {
    pub value: Complex64,
    /// Bound on the omitted inner and outer tails.
    pub truncation_bound: f64,
    pub rounding_bound: f64,
    /// Innermost and outermost shell indices summed explicitly.
    pub shells_used: (i64, i64),
    pub imaginary_magnitude: f64,
}

impl ErrorReceipt {
    pub fn re(&self) -> f64 {
        self.value.re
    }

    pub fn im(&self) -> f64 {
        self.value.im
    }

    /// Truncation plus rounding.
    pub fn error_bound(&self) -> f64 {
        self.truncation_bound + self.rounding_bound
    }

    /// `c·self` with bounds scaled accordingly.
    pub fn scale(&self, c: Complex64) -> ErrorReceipt {
        let a = c.norm();
        let value = self.value * c;
        ErrorReceipt {
            value,
            truncation_bound: self.truncation_bound * a,
            rounding_bound: self.rounding_bound * a + f64::EPSILON * value.norm(),
            shells_used: self.shells_used,
            imaginary_magnitude: value.im.abs(),
        }
    }

    /// Sum of receipts; bounds add.
    pub fn combine<'a>(parts: impl IntoIterator<Item = &'a ErrorReceipt>) -> ErrorReceipt {
        let mut re = Kahan::default();
        let mut im = Kahan::default();
        let mut trunc = 0.0;
        let mut round = 0.0;
        let mut lo = i64::MAX;
        let mut hi = i64::MIN;
        let mut count = 0usize;
        let mut abs = 0.0;
        for r in parts {
            re.add(r.value.re);
            im.add(r.value.im);
            trunc += r.truncation_bound;
            round += r.rounding_bound;
            lo = lo.min(r.shells_used.0);
            hi = hi.max(r.shells_used.1);
            abs += r.value.norm();
            count += 1;
        }
        if count == 0 {
            return ErrorReceipt::zero();
        }
        let value = Complex64::new(re.sum(), im.sum());
        ErrorReceipt {
            value,
            truncation_bound: trunc,
            rounding_bound: round + 2.0 * f64::EPSILON * abs,
            shells_used: (lo, hi),
            imaginary_magnitude: value.im.abs(),
        }
    }

    pub fn zero() -> ErrorReceipt {
        ErrorReceipt {
            value: Complex64::new(0.0, 0.0),
            truncation_bound: 0.0,
            rounding_bound: 0.0,
            shells_used: (0, 0),
            imaginary_magnitude: 0.0,
        }
    }
}

/// Compensated summation.
#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct Kahan {
    sum: f64,
    c: f64,
}

impl Kahan {
    pub(crate) fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.c += (self.sum - t) + x;
        } else {
            self.c += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub(crate) fn sum(&self) -> f64 {
        self.sum + self.c
    }
}

type ShellKey = (u32, Vec<u64>);

struct CacheEntry {
    sums: Arc<Vec<Complex64>>,
    stamp: AtomicU64,
}

/// Memoized per-class character sums keyed by `(k - ord x, x̃ mod p^{k - ord x})`.
/// Reads take a shared lock; eviction drops the least recently used entry.
struct ShellCache {
    map: RwLock<HashMap<ShellKey, CacheEntry>>,
    clock: AtomicU64,
    hits: AtomicU64,
    misses: AtomicU64,
    capacity: usize,
}

impl ShellCache {
    fn new(capacity: usize) -> Self {
        ShellCache {
            map: RwLock::new(HashMap::new()),
            clock: AtomicU64::new(0),
            hits: AtomicU64::new(0),
            misses: AtomicU64::new(0),
            capacity,
        }
    }

    fn get_or_insert(&self, key: ShellKey, compute: impl FnOnce() -> Vec<Complex64>) -> Arc<Vec<Complex64>> {
        let now = self.clock.fetch_add(1, Ordering::Relaxed);
        if let Some(e) = self.map.read().get(&key) {
            e.stamp.store(now, Ordering::Relaxed);
            self.hits.fetch_add(1, Ordering::Relaxed);
            return Arc::clone(&e.sums);
        }
        self.misses.fetch_add(1, Ordering::Relaxed);
        let sums = Arc::new(compute());
        if self.capacity == 0 {
            return sums;
        }
        let mut map = self.map.write();
        if !map.contains_key(&key) && map.len() >= self.capacity {
            let victim = map
                .iter()
                .min_by_key(|(_, e)| e.stamp.load(Ordering::Relaxed))
                .map(|(k, _)| k.clone());
            if let Some(v) = victim {
                map.remove(&v);
            }
        }
        let entry = map.entry(key).or_insert_with(|| CacheEntry {
            sums: Arc::clone(&sums),
            stamp: AtomicU64::new(now),
        });
        Arc::clone(&entry.sums)
    }
}

/// Cache counters.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CacheStats {
    pub hits: u64,
    pub misses: u64,
    pub len: usize,
}

/// Residues of one valuation class of `A mod p^{M+1}`.
struct ValuationClass {
    valuation: u32,
    count: u64,
    /// Row-major `count × n` residues.
    residues: Vec<u64>,
}

struct Inner {
    symbol: HomogeneousPolynomial,
    cert: EllipticCertificate,
    beta: f64,
    config: KernelConfig,
    prime: Prime,
    ln_p: f64,
    n: usize,
    d: u32,
    /// `M + 1`.
    m1: u32,
    classes: Vec<ValuationClass>,
    table_len: u64,
    /// `C₀^β`, `C₁^β`.
    c0b: f64,
    c1b: f64,
    cache: ShellCache,
}

/// Evaluates `Z`, `Z_L`, ball masses and weighted variants for one certified
/// symbol and exponent `β`. Cheap to clone; clones share the shell cache.
#[derive(Clone)]
pub struct KernelEvaluator {
    inner: Arc<Inner>,
}

impl std::fmt::Debug for KernelEvaluator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("KernelEvaluator")
            .field("symbol", &self.inner.symbol)
            .field("beta", &self.inner.beta)
            .finish_non_exhaustive()
    }
}

/// Where a shell sum starts, ends, and what it is scaled by.
struct Plan<'a> {
    x: &'a PAdicVector,
    t: f64,
    weight: Weight,
    /// Outer radius exponent `L`; `None` integrates over all of `Q_p^n`.
    top: Option<i64>,
    /// Multiply the result by `p^{scale·n}`.
    scale: i64,
    tol: f64,
}

impl KernelEvaluator {
    pub fn new(symbol: HomogeneousPolynomial, cert: EllipticCertificate, beta: f64) -> Result<Self> {
        Self::with_config(symbol, cert, beta, KernelConfig::default())
    }

    /// Certifies `symbol` with default limits and builds an evaluator.
    pub fn certified(symbol: HomogeneousPolynomial, beta: f64) -> Result<Self> {
        let cert = symbol.certify(DEFAULT_DEPTH_CAP, DEFAULT_MAX_POINTS)?.elliptic()?;
        Self::new(symbol, cert, beta)
    }

    pub fn with_config(
        symbol: HomogeneousPolynomial,
        cert: EllipticCertificate,
        beta: f64,
        config: KernelConfig,
    ) -> Result<Self> {
        if !(beta.is_finite() && beta > 0.0) {
            return Err(Error::InvalidParameter(format!("beta must be positive, got {beta}")));
        }
        if cert.prime() != symbol.prime() || cert.dim() != symbol.dim() || cert.degree() != symbol.degree() {
            return Err(Error::NotCertified("certificate does not belong to this symbol".into()));
        }
        let prime = symbol.prime();
        let n = symbol.dim();
        let mut by_val: std::collections::BTreeMap<u32, Vec<u64>> = Default::default();
        for e in cert.table().entries() {
            by_val.entry(e.valuation).or_default().extend_from_slice(&e.center);
        }
        let classes = by_val
            .into_iter()
            .map(|(valuation, residues)| ValuationClass {
                valuation,
                count: (residues.len() / n) as u64,
                residues,
            })
            .collect();
        let ln_p = (prime.get() as f64).ln();
        let inner = Inner {
            c0b: (-(cert.c0_exponent() as f64) * beta * ln_p).exp(),
            c1b: (-(cert.c1_exponent() as f64) * beta * ln_p).exp(),
            m1: cert.modulus() + 1,
            table_len: cert.table().len() as u64,
            d: symbol.degree(),
            cache: ShellCache::new(config.cache_capacity),
            symbol,
            cert,
            beta,
            config,
            prime,
            ln_p,
            n,
            classes,
        };
        Ok(KernelEvaluator { inner: Arc::new(inner) })
    }

    /// An evaluator built from a certificate with one table class removed;
    /// its ball masses no longer integrate to one.
    pub(crate) fn corrupted(&self) -> Result<Self> {
        let i = &self.inner;
        Self::with_config(i.symbol.clone(), i.cert.corrupted(), i.beta, i.config.clone())
    }

    pub fn symbol(&self) -> &HomogeneousPolynomial {
        &self.inner.symbol
    }

    pub fn certificate(&self) -> &EllipticCertificate {
        &self.inner.cert
    }

    pub fn beta(&self) -> f64 {
        self.inner.beta
    }

    pub fn prime(&self) -> Prime {
        self.inner.prime
    }

    pub fn dim(&self) -> usize {
        self.inner.n
    }

    pub fn degree(&self) -> u32 {
        self.inner.d
    }

    pub fn config(&self) -> &KernelConfig {
        &self.inner.config
    }

    /// `dβ`, the homogeneity exponent of the symbol.
    pub fn order(&self) -> f64 {
        self.inner.d as f64 * self.inner.beta
    }

    pub fn cache_stats(&self) -> CacheStats {
        let c = &self.inner.cache;
        CacheStats {
            hits: c.hits.load(Ordering::Relaxed),
            misses: c.misses.load(Ordering::Relaxed),
            len: c.map.read().len(),
        }
    }

    /// `|f|^β` on the shell `‖ξ‖ = p^k` for the valuation class `v`.
    fn lambda(&self, k: i64, v: u32) -> f64 {
        let i = &self.inner;
        (((k * i.d as i64 - v as i64) as f64) * i.beta * i.ln_p).exp()
    }

    fn pow_p(&self, e: f64) -> f64 {
        (e * self.inner.ln_p).exp()
    }

    /// Per-class sums `Σ_i Ψ(a_i/p^D)` with `a_i = x̃·η_i mod p^D`.
    fn character_sums(&self, depth: u32, x_res: &[u64]) -> Arc<Vec<Complex64>> {
        let i = &self.inner;
        let modulus = i.prime.checked_pow(depth).expect("depth ≤ M+1 fits the table modulus");
        let key: ShellKey = (depth, x_res.iter().map(|r| r % modulus).collect());
        let xr = key.1.clone();
        i.cache.get_or_insert(key, || {
            let m = modulus as u128;
            let mut counts = vec![0u64; modulus as usize];
            i.classes
                .iter()
                .map(|class| {
                    counts.iter_mut().for_each(|c| *c = 0);
                    for eta in class.residues.chunks_exact(i.n) {
                        let a = eta
                            .iter()
                            .zip(&xr)
                            .fold(0u128, |acc, (&e, &x)| (acc + e as u128 * x as u128) % m);
                        counts[a as usize] += 1;
                    }
                    let mut re = Kahan::default();
                    let mut im = Kahan::default();
                    for (a, &c) in counts.iter().enumerate() {
                        if c == 0 {
                            continue;
                        }
                        let angle = TAU * a as f64 / modulus as f64;
                        re.add(c as f64 * angle.cos());
                        im.add(c as f64 * angle.sin());
                    }
                    Complex64::new(re.sum(), im.sum())
                })
                .collect()
        })
    }

    /// `w(λ)` without sign, in log space to avoid `∞·0`.
    fn weight_value(&self, m: u32, lambda: f64, t: f64) -> f64 {
        if m == 0 {
            (-t * lambda).exp()
        } else {
            (m as f64 * lambda.ln() - t * lambda).exp()
        }
    }

    /// Shell `k` of `p^{scale·n}∫ Ψ(x·ξ) w(|f(ξ)|^β) dξ`, with its rounding
    /// weight. `frame` is `(ord x, x̃ mod p^{M+1})` for `x ≠ 0`.
    fn shell(&self, frame: Option<(i64, &[u64])>, t: f64, m: u32, k: i64, scale: i64) -> (Complex64, f64) {
        let i = &self.inner;
        let depth = match frame {
            Some((o, _)) => k - o,
            None => 0,
        };
        if depth > i.m1 as i64 {
            return (Complex64::new(0.0, 0.0), 0.0);
        }
        let prefactor = self.pow_p(((k + scale) * i.n as i64 - (i.m1 as i64) * i.n as i64) as f64);
        let sums = match frame {
            Some((_, xr)) if depth > 0 => Some(self.character_sums(depth as u32, xr)),
            _ => None,
        };
        let mut re = Kahan::default();
        let mut im = Kahan::default();
        let mut err = 0.0;
        for (ci, class) in i.classes.iter().enumerate() {
            let lambda = self.lambda(k, class.valuation);
            let w = self.weight_value(m, lambda, t);
            let chi = match &sums {
                Some(s) => s[ci],
                None => Complex64::new(class.count as f64, 0.0),
            };
            re.add(chi.re * w);
            im.add(chi.im * w);
            err += class.count as f64 * w * (8.0 + t * lambda + m as f64);
        }
        (Complex64::new(re.sum(), im.sum()) * prefactor, err * prefactor)
    }

    /// `log` of the bound `p^{(k+s)n}(1-p^{-n}) λhi^m e^{-tλlo}` on shell `k`
    /// and `log` of the ratio of consecutive bounds.
    fn upper_shell_bound(&self, k: i64, t: f64, m: u32, scale: i64) -> (f64, f64) {
        let i = &self.inner;
        let n = i.n as f64;
        let db = self.order();
        let pk = ((k as f64) * db * i.ln_p).exp();
        let lo = i.c0b * pk;
        let hi = i.c1b * pk;
        let measure = ((k + scale) as f64) * n * i.ln_p + (1.0 - self.pow_p(-n)).ln();
        let log_t = measure + if m > 0 { m as f64 * hi.ln() } else { 0.0 } - t * lo;
        let log_r = n * i.ln_p + m as f64 * db * i.ln_p - t * lo * (self.pow_p(db) - 1.0);
        (log_t, log_r)
    }

    /// Bound on `Σ_{j ≥ k}` of the upper shell bounds, when the ratio test
    /// applies at `k`.
    fn upper_tail(&self, k: i64, t: f64, m: u32, scale: i64) -> Option<f64> {
        let (log_t, log_r) = self.upper_shell_bound(k, t, m, scale);
        if log_r >= 0.0 {
            return None;
        }
        Some(log_t.exp() / -log_r.exp_m1())
    }

    /// Bound on the inner remainder `Σ_{j < k}`; `m = 0` refers to the
    /// `1 - e^{-tλ}` deficit.
    fn inner_tail(&self, k: i64, t: f64, m: u32, scale: i64) -> f64 {
        let i = &self.inner;
        let n = i.n as f64;
        let db = self.order();
        let (amp, gamma) = if m == 0 { (t * i.c1b, db) } else { (i.c1b.powi(m as i32), m as f64 * db) };
        let log = (scale as f64) * n * i.ln_p
            + (1.0 - self.pow_p(-n)).ln()
            + amp.ln()
            + ((k - 1) as f64) * (n + gamma) * i.ln_p
            - (1.0 - self.pow_p(-(n + gamma))).ln();
        log.exp()
    }

    fn validate(&self, x: &PAdicVector, t: f64, tol: f64) -> Result<()> {
        if !(t.is_finite() && t > 0.0) {
            return Err(Error::NonPositiveTime(t));
        }
        if !(tol.is_finite() && tol > 0.0) {
            return Err(Error::InvalidParameter(format!("tolerance must be positive, got {tol}")));
        }
        if x.dim() != self.inner.n {
            return Err(Error::DimensionMismatch {
                expected: self.inner.n,
                found: x.dim(),
            });
        }
        if x.prime() != self.inner.prime {
            return Err(Error::PrimeMismatch(self.inner.prime.get(), x.prime().get()));
        }
        Ok(())
    }

    fn integrate(&self, plan: Plan<'_>) -> Result<ErrorReceipt> {
        self.validate(plan.x, plan.t, plan.tol)?;
        let i = &self.inner;
        let Plan {
            x,
            t,
            weight,
            top,
            scale,
            tol,
        } = plan;
        let m = weight.power();
        let n = i.n as i64;
        let ord = match x.ord() {
            Valuation::Finite(o) => Some(o),
            Valuation::Infinite => None,
        };
        let x_res = ord.map(|o| x.shift(-o).residues(i.m1));
        let frame = ord.zip(x_res.as_deref());

        // Largest K with t·C₁^β·p^{Kdβ} ≤ 1/2, so the inner deficit stays small.
        let k0 = ((0.5 / (t * i.c1b)).ln() / (self.order() * i.ln_p)).floor() as i64;
        let k_in = [Some(k0), ord, top].into_iter().flatten().min().unwrap();

        let mut re = Kahan::default();
        let mut im = Kahan::default();
        let mut abs_sum = 0.0;
        let mut err = 0.0;
        let mut terms = 0u32;
        let mut truncation = 0.0;
        let cap = i.config.max_shells;

        // Inner ball ‖ξ‖ ≤ p^{k_in}: character trivial.
        if m == 0 {
            let denom = self.pow_p(((i.m1 as i64) * n) as f64) - self.pow_p(((i.m1 as i64 - 1) * n) as f64);
            let vol = self.pow_p(((k_in + scale) * n) as f64) * (i.table_len as f64 / denom);
            re.add(vol);
            abs_sum += vol;
            terms += 1;
        }
        let mut k = k_in;
        let k_low = loop {
            if terms > cap {
                return Err(Error::ToleranceUnreachable {
                    requested: tol,
                    achievable: self.inner_tail(k + 1, t, m, scale),
                });
            }
            let prefactor = self.pow_p(((k + scale) * n - i.m1 as i64 * n) as f64);
            let mut s = Kahan::default();
            let mut e = 0.0;
            for class in &i.classes {
                let lambda = self.lambda(k, class.valuation);
                let g = if m == 0 {
                    -(-t * lambda).exp_m1()
                } else {
                    self.weight_value(m, lambda, t)
                };
                s.add(class.count as f64 * g);
                e += class.count as f64 * g * (8.0 + t * lambda + m as f64);
            }
            let term = prefactor * s.sum();
            if m == 0 {
                re.add(-term);
            } else {
                re.add(term);
            }
            abs_sum += term.abs();
            err += e * prefactor;
            terms += 1;
            let rem = self.inner_tail(k, t, m, scale);
            if rem <= tol / 2.0 {
                truncation += rem;
                break k;
            }
            k -= 1;
        };

        // Shells above k_in, up to the exact vanishing threshold or the tail cut.
        let k_stop = [ord.map(|o| o + i.m1 as i64), top].into_iter().flatten().min();
        let mut k = k_in + 1;
        loop {
            if k_stop.is_some_and(|s| k > s) {
                break;
            }
            if let Some(b) = self.upper_tail(k, t, m, scale) {
                if b <= tol / 2.0 {
                    truncation += b;
                    break;
                }
            }
            if terms > cap {
                return Err(Error::ToleranceUnreachable {
                    requested: tol,
                    achievable: self.upper_tail(k, t, m, scale).unwrap_or(f64::INFINITY),
                });
            }
            let (s, e) = self.shell(frame, t, m, k, scale);
            re.add(s.re);
            im.add(s.im);
            abs_sum += s.norm();
            err += e;
            terms += 1;
            k += 1;
        }
        let k_high = k - 1;

        let sign = weight.sign();
        let value = Complex64::new(sign * re.sum(), sign * im.sum());
        let rounding = f64::EPSILON * (err + 4.0 * abs_sum * (terms as f64 + 2.0).log2());
        Ok(ErrorReceipt {
            value,
            truncation_bound: truncation,
            rounding_bound: rounding,
            shells_used: (k_low, k_high),
            imaginary_magnitude: value.im.abs(),
        })
    }

    /// `∫_{‖ξ‖ = p^k} Ψ(x·ξ) e^{-t|f(ξ)|^β} dξ`.
    pub fn shell_integral(&self, x: &PAdicVector, t: f64, k: i64) -> Result<Complex64> {
        self.validate(x, t, 1.0)?;
        let ord = x.ord().finite();
        let x_res = ord.map(|o| x.shift(-o).residues(self.inner.m1));
        let frame = ord.zip(x_res.as_deref());
        Ok(self.shell(frame, t, 0, k, 0).0)
    }

    /// `Z(x,t)` with truncation error at most `tol`.
    pub fn eval_z(&self, x: &PAdicVector, t: f64, tol: f64) -> Result<ErrorReceipt> {
        self.eval_weighted(x, t, Weight::Heat, tol)
    }

    /// `Z_L(x,t) = ∫_{(p^{-L}Z_p)^n} Ψ(x·ξ) e^{-t|f(ξ)|^β} dξ`.
    pub fn eval_z_l(&self, x: &PAdicVector, t: f64, l: i64, tol: f64) -> Result<ErrorReceipt> {
        self.integrate(Plan {
            x,
            t,
            weight: Weight::Heat,
            top: Some(l),
            scale: 0,
            tol,
        })
    }

    /// `∫ Ψ(x·ξ) w(|f(ξ)|^β) dξ` over all of `Q_p^n`.
    pub fn eval_weighted(&self, x: &PAdicVector, t: f64, weight: Weight, tol: f64) -> Result<ErrorReceipt> {
        self.integrate(Plan {
            x,
            t,
            weight,
            top: None,
            scale: 0,
            tol,
        })
    }

    /// `∫_B Z(y,t) dy = p^{rn}·Z_{-r}(c,t)` for `B = c + (p^{-r}Z_p)^n`.
    pub fn ball_mass(&self, ball: &Ball, t: f64, tol: f64) -> Result<ErrorReceipt> {
        self.weighted_ball_mass(ball, t, Weight::Heat, tol)
    }

    /// `∫_B` of the weighted kernel `∫ Ψ(y·ξ) w(|f(ξ)|^β) dξ`.
    pub fn weighted_ball_mass(&self, ball: &Ball, t: f64, weight: Weight, tol: f64) -> Result<ErrorReceipt> {
        let r = ball.radius_exponent();
        self.integrate(Plan {
            x: ball.center(),
            t,
            weight,
            top: Some(-r),
            scale: r,
            tol,
        })
    }

    /// `|Z(z,t)| ≤ t·C₁^β·p^{(M+1)(n+dβ)}·‖z‖^{-(n+dβ)}` for `z ≠ 0`.
    ///
    /// For `‖z‖ = p^r` the shells above `M + 1 - r` vanish and the ball
    /// `‖ξ‖ ≤ p^{M+1-r}` integrates `Ψ(z·ξ)` to zero, leaving
    /// `Z = ∫_{‖ξ‖ ≤ p^{M+1-r}} Ψ(z·ξ)(e^{-tλ} - 1) dξ`.
    pub fn envelope(&self, z: &PAdicVector, t: f64) -> Result<f64> {
        match z.norm() {
            PPower::Zero => Err(Error::ZeroVector),
            PPower::Pow(r) => Ok(self.envelope_at(r, t)),
        }
    }

    /// [`KernelEvaluator::envelope`] at norm `p^r`.
    pub fn envelope_at(&self, r: i64, t: f64) -> f64 {
        let i = &self.inner;
        let a = i.n as f64 + self.order();
        t * i.c1b * self.pow_p(((i.m1 as i64 - r) as f64) * a)
    }

    /// `Z` over a grid of `(x, t)` points, in input order.
    pub fn eval_grid(&self, points: &[(PAdicVector, f64)], tol: f64, exec: Execution) -> Vec<Result<ErrorReceipt>> {
        par::map(exec, points, |(x, t)| self.eval_z(x, *t, tol))
    }

    /// Ball masses for a list of balls at a common time, in input order.
    pub fn ball_masses(&self, balls: &[Ball], t: f64, tol: f64, exec: Execution) -> Vec<Result<ErrorReceipt>> {
        par::map(exec, balls, |b| self.ball_mass(b, t, tol))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::padic::PAdicScalar;

    fn prime(p: u64) -> Prime {
        Prime::new(p).unwrap()
    }

    fn linear(p: u64, beta: f64) -> KernelEvaluator {
        let f = HomogeneousPolynomial::new(prime(p), 1, 1, [(vec![1], 1)]).unwrap();
        KernelEvaluator::certified(f, beta).unwrap()
    }

    fn anisotropic(p: u64, beta: f64) -> KernelEvaluator {
        let f = HomogeneousPolynomial::new(prime(p), 2, 2, [(vec![2, 0], 1), (vec![0, 2], p as i64)]).unwrap();
        KernelEvaluator::certified(f, beta).unwrap()
    }

    #[test]
    fn unit_shell_of_linear_symbol() {
        for p in [2u64, 3, 5] {
            let ev = linear(p, 1.0);
            let x = PAdicVector::from_ints(prime(p), &[7]);
            let s = ev.shell_integral(&x, 1.0, 0).unwrap();
            let expected = (1.0 - 1.0 / p as f64) * (-1.0f64).exp();
            assert!((s.re - expected).abs() < 1e-15 && s.im.abs() < 1e-15);
        }
    }

    #[test]
    fn shells_vanish_beyond_threshold() {
        let ev = anisotropic(3, 1.0);
        let x = PAdicVector::from_ints_scaled(prime(3), &[1, 2], -2);
        // ord x = -2, M + 1 = 2: shells k > 0 vanish.
        for k in 1..6 {
            assert_eq!(ev.shell_integral(&x, 0.5, k).unwrap(), Complex64::new(0.0, 0.0));
        }
        assert!(ev.shell_integral(&x, 0.5, 0).unwrap().norm() > 0.0);
    }

    #[test]
    fn trivial_character_shell_is_measure_times_mean() {
        let ev = anisotropic(2, 0.5);
        let x = PAdicVector::from_ints_scaled(prime(2), &[1, 0], 5);
        let t = 0.7;
        let k = 3;
        let s = ev.shell_integral(&x, t, k).unwrap();
        let table = ev.certificate().table();
        let mean: f64 = table
            .entries()
            .iter()
            .map(|e| (-(t) * 2f64.powf((2.0 * k as f64 - e.valuation as f64) * 0.5)).exp())
            .sum::<f64>()
            / table.len() as f64;
        let measure = 4f64.powi(k as i32) * 0.75;
        assert!((s.re - measure * mean).abs() < 1e-12 * s.re.abs());
    }

    #[test]
    fn scaling_identity_for_truncated_kernel() {
        // Z_L(x,t) = p^{Ln} Z_0(p^{-L}x, p^{Ldβ}t).
        let ev = anisotropic(3, 1.0);
        let p = prime(3);
        let x = PAdicVector::new(vec![PAdicScalar::from_int_scaled(p, 5, -1), PAdicScalar::from_int(p, 2)]).unwrap();
        for l in [-2i64, 1, 3] {
            let lhs = ev.eval_z_l(&x, 0.3, l, 1e-14).unwrap();
            let rhs = ev
                .eval_z_l(&x.shift(-l), 0.3 * 3f64.powi((2 * l) as i32), 0, 1e-14)
                .unwrap()
                .scale(Complex64::new(9f64.powi(l as i32), 0.0));
            assert!((lhs.value - rhs.value).norm() < 1e-10 * (1.0 + lhs.value.norm()));
        }
    }

    #[test]
    fn unit_ball_limit_as_time_vanishes() {
        let ev = anisotropic(2, 1.0);
        let x = PAdicVector::from_ints(prime(2), &[3, 1]);
        let z = ev.eval_z_l(&x, 1e-12, 0, 1e-14).unwrap();
        assert!((z.re() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn huge_ball_has_unit_mass() {
        for beta in [0.5, 1.0, 2.0] {
            let ev = anisotropic(3, beta);
            for t in [0.25, 1.0, 4.0] {
                let b = Ball::centered(prime(3), 2, 40);
                let m = ev.ball_mass(&b, t, 1e-12).unwrap();
                assert!((m.re() - 1.0).abs() < 1e-9, "beta {beta} t {t}: {}", m.re());
            }
        }
    }

    #[test]
    fn corrupted_certificate_breaks_normalization() {
        let ev = anisotropic(2, 1.0).corrupted().unwrap();
        let m = ev.ball_mass(&Ball::centered(prime(2), 2, 40), 1.0, 1e-12).unwrap();
        assert!((m.re() - 1.0).abs() > 1e-3);
    }

    #[test]
    fn children_sum_to_parent() {
        let ev = linear(2, 0.5);
        let parent = Ball::new(PAdicVector::from_ints_scaled(prime(2), &[3], -2), 1);
        let pm = ev.ball_mass(&parent, 1.0, 1e-13).unwrap();
        let kids: Vec<_> = parent
            .sub_balls(1, 100)
            .unwrap()
            .iter()
            .map(|b| ev.ball_mass(b, 1.0, 1e-13).unwrap())
            .collect();
        let total = ErrorReceipt::combine(&kids);
        assert!((total.value - pm.value).norm() < 1e-12);
    }

    #[test]
    fn dheat_matches_finite_difference() {
        let ev = anisotropic(3, 0.5);
        let x = PAdicVector::from_ints_scaled(prime(3), &[2, 1], -1);
        let t = 1.0;
        let h = 1e-5;
        let fd = (ev.eval_z(&x, t + h, 1e-14).unwrap().re() - ev.eval_z(&x, t - h, 1e-14).unwrap().re()) / (2.0 * h);
        let d = ev.eval_weighted(&x, t, Weight::DheatDt, 1e-14).unwrap();
        assert!((fd - d.re()).abs() < 1e-7, "{fd} vs {}", d.re());
    }

    #[test]
    fn envelope_dominates() {
        let ev = linear(3, 1.0);
        for e in -3..5 {
            let z = PAdicVector::from_ints_scaled(prime(3), &[1], -e);
            for t in [0.1, 1.0, 10.0] {
                let v = ev.eval_z(&z, t, 1e-13).unwrap();
                assert!(v.value.norm() <= ev.envelope(&z, t).unwrap() + v.error_bound());
            }
        }
    }

    #[test]
    fn rejects_bad_input() {
        let ev = linear(2, 1.0);
        let x = PAdicVector::from_ints(prime(2), &[1]);
        assert!(matches!(ev.eval_z(&x, 0.0, 1e-9), Err(Error::NonPositiveTime(_))));
        assert!(matches!(ev.eval_z(&x, -1.0, 1e-9), Err(Error::NonPositiveTime(_))));
        let y = PAdicVector::from_ints(prime(2), &[1, 1]);
        assert!(matches!(ev.eval_z(&y, 1.0, 1e-9), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn cache_is_reused_across_times() {
        let ev = anisotropic(3, 1.0);
        let x = PAdicVector::from_ints_scaled(prime(3), &[1, 1], -1);
        ev.eval_z(&x, 1.0, 1e-10).unwrap();
        let before = ev.cache_stats();
        ev.eval_z(&x, 2.0, 1e-10).unwrap();
        let after = ev.cache_stats();
        assert_eq!(before.misses, after.misses);
        assert!(after.hits > before.hits);
    }

    #[test]
    fn grid_strategies_agree() {
        let ev = anisotropic(2, 1.0);
        let points: Vec<_> = (-3..5)
            .flat_map(|e| [0.25, 1.0].map(|t| (PAdicVector::from_ints_scaled(prime(2), &[1, 2], -e), t)))
            .collect();
        let a = ev.eval_grid(&points, 1e-10, Execution::Sequential);
        let b = ev.eval_grid(&points, 1e-10, Execution::Parallel);
        assert_eq!(a, b);
    }
}
