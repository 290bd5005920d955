//! Coefficient sequences `c = (c_k)` defining `μ(c) = Σ c_k m_{G_k}`, their
//! tails, the convolution semigroup `μ_t`, Poisson rates and subordination.

use std::f64::consts::LN_2;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{ln_factorial, ln_hurwitz_zeta, ln_one_minus_exp, log_iter, CompensatedSum, LogSum};
use crate::tower::{GroupElement, Tower, TowerKind};

/// Default relative truncation tolerance for infinite series.
pub const DEFAULT_TOL: f64 = 1e-14;

/// How an explicit list of coefficients continues past its last entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum TailRule {
    /// The list is the whole support.
    Finite,
    /// `c_{n+j} = c_{n-1} · ratio^{j+1}` beyond the list of length `n`.
    Geometric { ratio: f64 },
}

/// Closed-form tails produced by the decay designers; `ln v` is the log
/// volume of the level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum DesignRule {
    /// `σ = exp(-(ln v)^{1/α})`, solving `(ln 1/σ)^α = ln v`.
    LogPower { alpha: f64 },
    /// `σ = (log_(depth+1) v)^{-1/ν}`, solving `exp_(depth)(σ^{-ν}) = ln v`.
    IteratedExp { depth: u32, nu: f64 },
    /// `σ = M⁻¹(ln v)/δ` with `M` the conjugate transform of `t^a`.
    ConjugatePower { exponent: f64, delta: f64 },
    /// `σ(k) = 1/(e^{v_{k+1}} - 1)`.
    InverseLogEnvelope,
}

/// A labelled real function shared across threads.
#[derive(Clone)]
pub struct SharedFn {
    label: String,
    f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl SharedFn {
    pub fn new(label: impl Into<String>, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self { label: label.into(), f: Arc::new(f) }
    }

    pub fn call(&self, x: f64) -> f64 {
        (self.f)(x)
    }

    pub fn label(&self) -> &str {
        &self.label
    }
}

impl fmt::Debug for SharedFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SharedFn({})", self.label)
    }
}

impl PartialEq for SharedFn {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.f, &other.f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "phi", rename_all = "snake_case")]
pub enum Subordinator {
    /// `φ(λ) = λ^α`, `0 < α`.
    Power { alpha: f64 },
    #[serde(skip)]
    Custom(SharedFn),
}

impl Subordinator {
    fn ln_apply(&self, ln_x: f64) -> f64 {
        match self {
            Subordinator::Power { alpha } => alpha * ln_x,
            Subordinator::Custom(f) => f.call(ln_x.exp()).ln(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family {
    /// `c_k = (1-q) q^k`, `σ(k) = q^{k+1}`.
    Geometric { q: f64 },
    /// `c_k = (k+1)^{-p} / ζ(p)`.
    Polynomial { p: f64 },
    /// `σ(k) = (1 + log_(depth)(k+1))^{1-p}`.
    IteratedLog { depth: u32, p: f64 },
    /// `σ(k) = ((k+shift)!)^{-γ}`, `shift ∈ {1, 2}` so that `σ(-1) = 1`.
    FactorialPower { gamma: f64, shift: u32 },
    Explicit { coeffs: Vec<f64>, tail: TailRule },
    Designed { provenance: String, rule: DesignRule, tower: TowerKind },
    Subordinated { base: Box<Family>, phi: Subordinator },
}

#[derive(Debug, Clone)]
enum Cache {
    None,
    LnZeta(f64),
    Explicit { coeffs: Vec<f64>, tails: Vec<f64>, ln_coeffs: Vec<f64>, ln_tails: Vec<f64>, ratio: Option<f64> },
    Designed { k0: usize, head_mass: f64 },
    Subordinated(Box<CoefficientSequence>),
}

/// The coefficient sequence `c`, immutable after construction.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "Family", into = "Family")]
pub struct CoefficientSequence {
    family: Family,
    cache: Cache,
}

impl PartialEq for CoefficientSequence {
    fn eq(&self, other: &Self) -> bool {
        self.family == other.family
    }
}

impl TryFrom<Family> for CoefficientSequence {
    type Error = Error;

    fn try_from(family: Family) -> Result<Self> {
        Self::from_family(family)
    }
}

impl From<CoefficientSequence> for Family {
    fn from(seq: CoefficientSequence) -> Self {
        seq.family
    }
}

fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidSequence(msg.into()))
}

/// Raw designed tail before the head adjustment.
fn design_ln_tail(rule: &DesignRule, tower: &TowerKind, k: usize) -> f64 {
    let ln_v = tower.ln_volume(k);
    match *rule {
        DesignRule::LogPower { alpha } => -ln_v.powf(1.0 / alpha),
        DesignRule::IteratedExp { depth, nu } => {
            let ln1p_v = ln_v + (-ln_v).exp().ln_1p();
            -log_iter(depth, ln1p_v).ln() / nu
        }
        DesignRule::ConjugatePower { exponent: a, delta } => {
            a.ln() + (1.0 - a) / a * ((1.0 - a).ln() - ln_v.ln()) - delta.ln()
        }
        DesignRule::InverseLogEnvelope => {
            let v = tower.ln_volume(k + 1).exp();
            -v - ln_one_minus_exp(-v)
        }
    }
}

impl CoefficientSequence {
    pub fn from_family(family: Family) -> Result<Self> {
        let cache = match &family {
            Family::Geometric { q } => {
                if !(*q > 0.0 && *q < 1.0) {
                    return invalid("q ∈ (0,1) required");
                }
                Cache::None
            }
            Family::Polynomial { p } => {
                if !(*p > 1.0) || !p.is_finite() {
                    return invalid("polynomial exponent p > 1 required");
                }
                Cache::LnZeta(ln_hurwitz_zeta(*p, 1.0))
            }
            Family::IteratedLog { depth, p } => {
                if *depth < 1 || !(*p > 1.0) || !p.is_finite() {
                    return invalid("iterated-log family needs depth >= 1 and p > 1");
                }
                Cache::None
            }
            Family::FactorialPower { gamma, shift } => {
                if !(*gamma > 0.0) || !gamma.is_finite() {
                    return invalid("gamma > 0 required");
                }
                if !(1..=2).contains(shift) {
                    return invalid("shift must be 1 or 2 so that σ(-1) = 1");
                }
                Cache::None
            }
            Family::Explicit { coeffs, tail } => Self::explicit_cache(coeffs, tail)?,
            Family::Designed { rule, tower, .. } => Self::designed_cache(rule, tower)?,
            Family::Subordinated { base, phi } => {
                let base = Self::from_family((**base).clone())?;
                check_subordinator(phi)?;
                Cache::Subordinated(Box::new(base))
            }
        };
        Ok(Self { family, cache })
    }

    pub fn geometric(q: f64) -> Result<Self> {
        Self::from_family(Family::Geometric { q })
    }

    pub fn polynomial(p: f64) -> Result<Self> {
        Self::from_family(Family::Polynomial { p })
    }

    pub fn iterated_log(depth: u32, p: f64) -> Result<Self> {
        Self::from_family(Family::IteratedLog { depth, p })
    }

    pub fn factorial_power(gamma: f64, shift: u32) -> Result<Self> {
        Self::from_family(Family::FactorialPower { gamma, shift })
    }

    pub fn explicit(coeffs: Vec<f64>, tail: TailRule) -> Result<Self> {
        Self::from_family(Family::Explicit { coeffs, tail })
    }

    pub fn designed(provenance: impl Into<String>, rule: DesignRule, tower: TowerKind) -> Result<Self> {
        Self::from_family(Family::Designed { provenance: provenance.into(), rule, tower })
    }

    fn explicit_cache(coeffs: &[f64], tail: &TailRule) -> Result<Cache> {
        if coeffs.is_empty() {
            return invalid("empty coefficient list");
        }
        if let Some(c) = coeffs.iter().find(|c| !(**c >= 0.0) || !c.is_finite()) {
            return invalid(format!("coefficient {c} is not a finite non-negative number"));
        }
        let last = *coeffs.last().unwrap();
        let (tail_mass, ratio) = match *tail {
            TailRule::Finite => {
                if last == 0.0 {
                    return invalid("finite list must end with a positive coefficient");
                }
                (0.0, None)
            }
            TailRule::Geometric { ratio } => {
                if !(ratio > 0.0 && ratio < 1.0) || last == 0.0 {
                    return invalid("geometric tail needs ratio ∈ (0,1) and a positive last coefficient");
                }
                (last * ratio / (1.0 - ratio), Some(ratio))
            }
        };
        let total: f64 = coeffs.iter().copied().collect::<CompensatedSum>().value() + tail_mass;
        if (total - 1.0).abs() > 1e-9 {
            return invalid(format!("coefficients sum to {total}, expected 1"));
        }
        let n = coeffs.len();
        let coeffs: Vec<f64> = coeffs.iter().map(|c| c / total).collect();
        let mut tails = vec![0.0; n];
        let mut acc = CompensatedSum::new();
        acc.add(tail_mass / total);
        tails[n - 1] = acc.value();
        for k in (0..n - 1).rev() {
            acc.add(coeffs[k + 1]);
            tails[k] = acc.value();
        }
        let ln_coeffs = coeffs.iter().map(|c| c.ln()).collect();
        let ln_tails = tails.iter().map(|c| c.ln()).collect();
        Ok(Cache::Explicit { coeffs, tails, ln_coeffs, ln_tails, ratio })
    }

    fn designed_cache(rule: &DesignRule, tower: &TowerKind) -> Result<Cache> {
        match *rule {
            DesignRule::LogPower { alpha } if !(alpha > 0.0) => return invalid("alpha > 0 required"),
            DesignRule::IteratedExp { nu, .. } if !(nu > 0.0) => return invalid("nu > 0 required"),
            DesignRule::ConjugatePower { exponent, delta }
                if !(exponent > 0.0 && exponent < 1.0) || !(delta > 0.0) =>
            {
                return invalid("conjugate exponent in (0,1) and delta > 0 required")
            }
            _ => {}
        }
        let half = -LN_2;
        let k0 = (0..crate::tower::DEFAULT_LEVEL_CAP)
            .find(|&k| design_ln_tail(rule, tower, k) < half)
            .ok_or_else(|| Error::InvalidSequence("designed tail never drops below 1/2".into()))?;
        let mut prev = design_ln_tail(rule, tower, k0);
        for k in k0 + 1..k0 + 256 {
            let cur = design_ln_tail(rule, tower, k);
            if !(cur < prev) && cur != f64::NEG_INFINITY {
                return invalid(format!("designed tail is not strictly decreasing at level {k}"));
            }
            prev = cur;
        }
        Ok(Cache::Designed { k0, head_mass: -design_ln_tail(rule, tower, k0).exp_m1() })
    }

    /// First level `k₀` where a designed tail follows its rule.
    pub fn design_level(&self) -> Option<usize> {
        match self.cache {
            Cache::Designed { k0, .. } => Some(k0),
            _ => None,
        }
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    /// Short human-readable description.
    pub fn label(&self) -> String {
        match &self.family {
            Family::Geometric { q } => format!("geometric(q={q})"),
            Family::Polynomial { p } => format!("polynomial(p={p})"),
            Family::IteratedLog { depth, p } => format!("iterated-log(n={depth},p={p})"),
            Family::FactorialPower { gamma, shift } => format!("factorial-power(gamma={gamma},shift={shift})"),
            Family::Explicit { coeffs, .. } => format!("explicit({} terms)", coeffs.len()),
            Family::Designed { provenance, .. } => format!("designed({provenance})"),
            Family::Subordinated { phi, .. } => match phi {
                Subordinator::Power { alpha } => format!("subordinated(alpha={alpha})"),
                Subordinator::Custom(f) => format!("subordinated({})", f.label),
            },
        }
    }

    /// `ln σ(k)` for `k ≥ -1` (`σ(-1) = 1`; `-inf` past a finite support).
    pub fn ln_tail(&self, k: i64) -> f64 {
        if k < 0 {
            return 0.0;
        }
        let ku = k as usize;
        match (&self.family, &self.cache) {
            (Family::Geometric { q }, _) => {
                let direct = q.powi(k as i32 + 1);
                if k < 900 && direct > 1e-290 {
                    direct.ln()
                } else {
                    (k + 1) as f64 * q.ln()
                }
            }
            (Family::Polynomial { p }, Cache::LnZeta(lz)) => ln_hurwitz_zeta(*p, k as f64 + 2.0) - lz,
            (Family::IteratedLog { depth, p }, _) => (1.0 - p) * log_iter(*depth, k as f64 + 1.0).ln_1p(),
            (Family::FactorialPower { gamma, shift }, _) => -gamma * ln_factorial(k as u64 + *shift as u64),
            (Family::Explicit { .. }, Cache::Explicit { ln_tails, ratio, .. }) => {
                let n = ln_tails.len();
                if ku < n {
                    ln_tails[ku]
                } else if let Some(r) = ratio {
                    ln_tails[n - 1] + (ku - n + 1) as f64 * r.ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
            (Family::Designed { rule, tower, .. }, Cache::Designed { k0, head_mass }) => {
                if ku >= *k0 {
                    design_ln_tail(rule, tower, ku)
                } else {
                    // σ(k) = σ(k₀) + Σ_{k<i≤k₀} c_i with the geometric head of `head_coeff`.
                    let scale = head_mass / -(-(((*k0 + 1) as f64) * LN_2)).exp_m1();
                    let above = scale * (0.5f64.powi(ku as i32 + 1) - 0.5f64.powi(*k0 as i32 + 1));
                    (design_ln_tail(rule, tower, *k0).exp() + above).ln()
                }
            }
            (Family::Subordinated { phi, .. }, Cache::Subordinated(base)) => phi.ln_apply(base.ln_tail(k)),
            _ => unreachable!("cache matches family"),
        }
    }

    pub fn tail(&self, k: i64) -> f64 {
        match (&self.family, &self.cache) {
            (Family::Geometric { q }, _) if (0..900).contains(&k) => q.powi(k as i32 + 1),
            (_, Cache::Explicit { tails, .. }) if (0..tails.len() as i64).contains(&k) => tails[k as usize],
            _ => self.ln_tail(k).exp(),
        }
    }

    /// `ln c_k`.
    pub fn ln_coeff(&self, k: usize) -> f64 {
        match (&self.family, &self.cache) {
            (Family::Geometric { q }, _) => (-q).ln_1p() + k as f64 * q.ln(),
            (Family::Polynomial { p }, Cache::LnZeta(lz)) => -p * ((k + 1) as f64).ln() - lz,
            (Family::Explicit { .. }, Cache::Explicit { ln_coeffs, ratio, .. }) => {
                let n = ln_coeffs.len();
                if k < n {
                    ln_coeffs[k]
                } else if let Some(r) = ratio {
                    ln_coeffs[n - 1] + (k - n + 1) as f64 * r.ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
            (Family::Designed { .. }, Cache::Designed { k0, head_mass }) if k <= *k0 => {
                head_mass.ln() - ((k + 1) as f64) * LN_2 - ln_one_minus_exp(-((*k0 + 1) as f64) * LN_2)
            }
            _ => {
                let prev = self.ln_tail(k as i64 - 1);
                let cur = self.ln_tail(k as i64);
                if prev == f64::NEG_INFINITY {
                    f64::NEG_INFINITY
                } else {
                    prev + ln_one_minus_exp(cur - prev)
                }
            }
        }
    }

    pub fn coeff(&self, k: usize) -> f64 {
        match (&self.family, &self.cache) {
            (Family::Geometric { q }, _) if k < 900 => (1.0 - q) * q.powi(k as i32),
            (_, Cache::Explicit { coeffs, .. }) if k < coeffs.len() => coeffs[k],
            _ => self.ln_coeff(k).exp(),
        }
    }

    /// `ln S_k = ln(1 - σ(k))`; `S_{-1} = 0`.
    pub fn ln_partial(&self, k: i64) -> f64 {
        if k < 0 {
            f64::NEG_INFINITY
        } else {
            ln_one_minus_exp(self.ln_tail(k))
        }
    }

    pub fn partial_sum(&self, k: i64) -> f64 {
        if k < 0 {
            0.0
        } else {
            -self.ln_tail(k).exp_m1()
        }
    }

    /// Last level carrying mass, when the support is finite.
    pub fn support_end(&self) -> Option<usize> {
        match (&self.family, &self.cache) {
            (Family::Explicit { coeffs, tail: TailRule::Finite }, _) => Some(coeffs.len() - 1),
            (Family::Subordinated { .. }, Cache::Subordinated(base)) => base.support_end(),
            _ => None,
        }
    }

    /// Checks Condition (A), `c_k ≤ λ σ(k)` for all `k`.
    pub fn condition_a(&self, horizon: usize) -> ConditionA {
        let scan = || {
            let mut sup = 0f64;
            for k in 0..=horizon {
                let ln_t = self.ln_tail(k as i64);
                if ln_t == f64::NEG_INFINITY {
                    return f64::INFINITY;
                }
                sup = sup.max((self.ln_coeff(k) - ln_t).exp());
            }
            sup
        };
        let analytic = |holds: bool, lambda: f64| ConditionA { holds, lambda, analytic: true, horizon };
        match (&self.family, &self.cache) {
            (Family::Geometric { q }, _) => analytic(true, (1.0 - q) / q),
            (Family::Polynomial { .. } | Family::IteratedLog { .. }, _) => analytic(true, scan()),
            (Family::FactorialPower { .. }, _) => analytic(false, scan()),
            (Family::Explicit { coeffs, .. }, Cache::Explicit { ratio, .. }) => match ratio {
                None => analytic(false, f64::INFINITY),
                Some(r) => {
                    let sup = (0..coeffs.len())
                        .map(|k| (self.ln_coeff(k) - self.ln_tail(k as i64)).exp())
                        .fold((1.0 - r) / r, f64::max);
                    analytic(true, sup)
                }
            },
            (Family::Designed { rule, .. }, _) => {
                let holds = !matches!(rule, DesignRule::InverseLogEnvelope);
                analytic(holds, scan())
            }
            (Family::Subordinated { phi: Subordinator::Power { alpha }, .. }, Cache::Subordinated(base)) => {
                let b = base.condition_a(horizon);
                ConditionA { lambda: (1.0 + b.lambda).powf(*alpha) - 1.0, ..b }
            }
            _ => {
                let lambda = scan();
                let tail_sup = {
                    let mut s = 0f64;
                    for k in horizon / 2..=horizon {
                        s = s.max((self.ln_coeff(k) - self.ln_tail(k as i64)).exp());
                    }
                    s
                };
                ConditionA { holds: lambda.is_finite() && tail_sup < lambda, lambda, analytic: false, horizon }
            }
        }
    }

    /// `ln π_k = ln ln(S_k/S_{k-1})` for `k ≥ 1`.
    fn ln_rate(&self, k: usize) -> f64 {
        (self.ln_coeff(k) - self.ln_partial(k as i64 - 1)).exp().ln_1p().ln()
    }

    /// Poisson rates `π_k = ln(S_k/S_{k-1})` for `k ≥ 1`; `π_0 = pi0`.
    pub fn poisson_rate(&self, k: usize, pi0: f64) -> f64 {
        if k == 0 {
            pi0
        } else {
            self.ln_rate(k).exp()
        }
    }

    pub fn poisson_rates(&self, pi0: f64, levels: usize) -> Result<Vec<f64>> {
        if !(pi0 > 0.0) {
            return Err(Error::Domain("pi0 > 0 required".into()));
        }
        Ok((0..=levels).map(|k| self.poisson_rate(k, pi0)).collect())
    }

    /// Total Poisson mass `π = π_0 - ln c_0`.
    pub fn poisson_total(&self, pi0: f64) -> f64 {
        pi0 - self.ln_coeff(0)
    }

    /// `ln C_k(t)` where `C_k(t) = S_k^t - S_{k-1}^t`.
    pub fn ln_semigroup_coeff(&self, k: usize, t: f64) -> Result<f64> {
        if !(t > 0.0) {
            return Err(Error::Domain(format!("semigroup time t > 0 required, got {t}")));
        }
        Ok(if k == 0 {
            t * self.ln_coeff(0)
        } else {
            let rate = self.ln_rate(k).exp();
            t * self.ln_partial(k as i64) + ln_one_minus_exp(-t * rate)
        })
    }

    pub fn semigroup_coeff(&self, k: usize, t: f64) -> Result<f64> {
        Ok(self.ln_semigroup_coeff(k, t)?.exp())
    }

    /// Subordinated sequence with tails `φ(σ(k))`.
    pub fn subordinate(&self, phi: Subordinator) -> Result<Self> {
        Self::from_family(Family::Subordinated { base: Box::new(self.family.clone()), phi })
    }

    pub fn fractional_power(&self, alpha: f64) -> Result<Self> {
        self.subordinate(Subordinator::Power { alpha })
    }
}

fn check_subordinator(phi: &Subordinator) -> Result<()> {
    match phi {
        Subordinator::Power { alpha } => {
            if !(*alpha > 0.0) || !alpha.is_finite() {
                return invalid("subordinator exponent alpha > 0 required");
            }
        }
        Subordinator::Custom(f) => {
            let at = |x: f64| f.call(x);
            if at(0.0).abs() > 1e-12 || (at(1.0) - 1.0).abs() > 1e-12 {
                return invalid("φ(0) = 0 and φ(1) = 1 required");
            }
            let mut prev = 0.0;
            for i in 1..=64 {
                let y = at(i as f64 / 64.0);
                if !(y > prev) || y > 1.0 + 1e-12 {
                    return invalid("φ must be increasing into [0,1]");
                }
                prev = y;
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConditionA {
    pub holds: bool,
    /// `sup c_k/σ(k)` (analytic when available, else over the horizon).
    pub lambda: f64,
    pub analytic: bool,
    pub horizon: usize,
}

/// A truncated series value with a certified bound on the omitted tail.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Truncated {
    pub value: f64,
    pub tail_bound: f64,
    /// Last level included.
    pub last_level: usize,
}

/// A tower together with a compatible coefficient sequence.
#[derive(Debug, Clone)]
pub struct Model {
    tower: Tower,
    seq: CoefficientSequence,
    tol: f64,
}

impl Model {
    pub fn new(tower: Tower, seq: CoefficientSequence) -> Result<Self> {
        if let Some(max) = tower.truncation() {
            match seq.support_end() {
                Some(end) if end <= max => {}
                Some(end) => return Err(Error::BeyondTruncation { level: end, max }),
                None => {
                    return Err(Error::InvalidSequence(format!(
                        "tower truncated at level {max} needs a finitely supported sequence"
                    )))
                }
            }
        }
        if let Family::Designed { tower: kind, .. } = seq.family() {
            let base = match tower.kind() {
                TowerKind::FiniteTruncated { base, .. } => base.as_ref(),
                k => k,
            };
            if base != kind {
                return Err(Error::InvalidSequence("sequence was designed for a different tower".into()));
            }
        }
        Ok(Self { tower, seq, tol: DEFAULT_TOL })
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn tower(&self) -> &Tower {
        &self.tower
    }

    pub fn seq(&self) -> &CoefficientSequence {
        &self.seq
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    pub fn ln_volume(&self, k: usize) -> f64 {
        self.tower.ln_volume(k)
    }

    /// Iterates levels from `start`, stopping after the first level whose
    /// tail is zero or at the tower's maximum level.
    pub(crate) fn level_range(&self, start: usize) -> impl Iterator<Item = usize> + '_ {
        let end = self.seq.support_end().map_or(self.tower.max_level(), |e| e.min(self.tower.max_level()));
        start..=end.max(start)
    }

    fn no_convergence(&self, what: &'static str, level: usize) -> Error {
        if level >= self.tower.cap() {
            Error::LevelCap { level: level + 1, cap: self.tower.cap() }
        } else {
            Error::NoConvergence { what, detail: format!("stopped at level {level}") }
        }
    }

    /// `μ_t(x)` for `x ∈ G_k \ G_{k-1}`: `Σ_{n≥k} C_n(t)/v_n`.
    pub fn point_mass_at_level(&self, t: f64, k: usize) -> Result<Truncated> {
        let ln = self.ln_point_mass_at_level(t, k)?;
        Ok(Truncated { value: ln.value.exp(), tail_bound: ln.tail_bound.exp(), last_level: ln.last_level })
    }

    /// [`Self::point_mass_at_level`] with `value` and `tail_bound` as logarithms,
    /// usable after `μ_t(x)` underflows.
    pub fn ln_point_mass_at_level(&self, t: f64, k: usize) -> Result<Truncated> {
        self.tower.check_level(k)?;
        let mut acc = LogSum::new();
        let mut last = k;
        for n in self.level_range(k) {
            last = n;
            acc.add_ln(self.seq.ln_semigroup_coeff(n, t)? - self.ln_volume(n));
            let ln_tail = self.seq.ln_tail(n as i64);
            if ln_tail == f64::NEG_INFINITY {
                return Ok(Truncated { value: acc.ln(), tail_bound: f64::NEG_INFINITY, last_level: n });
            }
            let ln_bound = ln_one_minus_exp(t * self.seq.ln_partial(n as i64)) - self.ln_volume(n + 1);
            if ln_bound <= acc.ln() + self.tol.ln() {
                return Ok(Truncated { value: acc.ln(), tail_bound: ln_bound, last_level: n });
            }
        }
        Err(self.no_convergence("point mass series", last))
    }

    pub fn point_mass(&self, t: f64, x: &GroupElement) -> Result<Truncated> {
        self.point_mass_at_level(t, x.min_level())
    }

    /// `μ_t(G \ G_k) = Σ_{l>k} C_l(t)(1 - v_k/v_l)`, evaluated as
    /// `(1 - S_k^t) - v_k Σ_{l>k} C_l(t)/v_l`; the subtracted part is at most
    /// half of the first.
    pub fn exit_mass(&self, t: f64, k: usize) -> Result<Truncated> {
        self.tower.check_level(k)?;
        if self.seq.ln_tail(k as i64) == f64::NEG_INFINITY {
            return Ok(Truncated { value: 0.0, tail_bound: 0.0, last_level: k });
        }
        self.seq.ln_semigroup_coeff(k, t)?;
        let escape = -(t * self.seq.ln_partial(k as i64)).exp_m1();
        let ln_vk = self.ln_volume(k);
        let mut acc = LogSum::new();
        let mut last = k;
        for l in self.level_range(k + 1) {
            last = l;
            acc.add_ln(self.seq.ln_semigroup_coeff(l, t)? + ln_vk - self.ln_volume(l));
            let ln_bound = if self.seq.ln_tail(l as i64) == f64::NEG_INFINITY {
                f64::NEG_INFINITY
            } else {
                ln_one_minus_exp(t * self.seq.ln_partial(l as i64)) + ln_vk - self.ln_volume(l + 1)
            };
            if ln_bound <= escape.ln() + self.tol.ln() {
                let value = escape - acc.value();
                return Ok(Truncated { value, tail_bound: ln_bound.exp(), last_level: l });
            }
        }
        Err(self.no_convergence("exit mass series", last))
    }
}

/// Canonical configurations.
pub mod fixtures {
    use super::*;

    /// `Z(2)^∞` with `c_k = 2^{-(k+1)}`.
    pub fn cfg_g() -> Model {
        Model::new(Tower::powers_of_two(), CoefficientSequence::geometric(0.5).unwrap()).unwrap()
    }

    /// `S_∞` with `σ(k) = 1/(k+2)!`.
    pub fn cfg_s() -> Model {
        Model::new(Tower::factorial(), CoefficientSequence::factorial_power(1.0, 2).unwrap()).unwrap()
    }

    /// `S_∞` with `c_k = 2^{-(k+1)}`.
    pub fn cfg_sa() -> Model {
        Model::new(Tower::factorial(), CoefficientSequence::geometric(0.5).unwrap()).unwrap()
    }

    /// `c` truncated at level `k` with the tail mass folded into `c_k`.
    pub fn fold(seq: &CoefficientSequence, k: usize) -> Result<CoefficientSequence> {
        if k == 0 {
            return Err(Error::Domain("fold level K >= 1 required".into()));
        }
        let mut coeffs: Vec<f64> = (0..k).map(|i| seq.coeff(i)).collect();
        coeffs.push(seq.coeff(k) + seq.tail(k as i64));
        CoefficientSequence::explicit(coeffs, TailRule::Finite)
    }

    /// A fixture model on the tower truncated at `k`, with folded `c`.
    pub fn folded(model: &Model, k: usize) -> Result<Model> {
        Model::new(model.tower().truncated(k), fold(model.seq(), k)?)
    }
}
