//! Legendre, conjugate Legendre and Köhlbecker transforms, the Table-1
//! closed forms, and the coefficient designers built on them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::{CoefficientSequence, DesignRule, Model, SharedFn};
use crate::numeric::{exp_iter, golden_min, integrate, log_iter, CompensatedSum};
use crate::tower::Tower;

const GRID_LO: f64 = 1e-12;
const GRID_HI: f64 = 1e12;
/// Search range for the optimising `τ`, wider than the shape-check domain so
/// that minimisers like `τ ≈ 2 ln x/x` stay interior for very large `x`.
const OPT_LO: f64 = 1e-250;
const OPT_HI: f64 = 1e250;
const OPT_POINTS: usize = 1500;
const SHAPE_POINTS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Monotone {
    Increasing,
    Decreasing,
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Curvature {
    Convex,
    Concave,
    Unknown,
}

/// A function on `(lo, hi) ⊆ R⁺` with declared shape.
#[derive(Debug, Clone)]
pub struct ScalarFunction {
    f: SharedFn,
    monotone: Monotone,
    curvature: Curvature,
    domain: (f64, f64),
}

impl ScalarFunction {
    /// Builds the function and spot-checks the declared shape on a 64-point grid.
    pub fn new(
        label: impl Into<String>,
        monotone: Monotone,
        curvature: Curvature,
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        Self::on(label, monotone, curvature, (GRID_LO, GRID_HI), f)
    }

    pub fn on(
        label: impl Into<String>,
        monotone: Monotone,
        curvature: Curvature,
        domain: (f64, f64),
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        let label = label.into();
        if !(domain.0 > 0.0 && domain.1 > domain.0) {
            return Err(Error::Domain(format!("{label}: empty domain {domain:?}")));
        }
        let out = Self { f: SharedFn::new(label, f), monotone, curvature, domain };
        out.check_shape()?;
        Ok(out)
    }

    fn check_shape(&self) -> Result<()> {
        let grid = crate::numeric::log_grid(self.domain.0, self.domain.1, SHAPE_POINTS);
        let vals: Vec<f64> = grid.iter().map(|&x| self.call(x)).collect();
        let fail = |what: &str, x: f64| {
            Err(Error::Domain(format!("{} is not {what} near x = {x:e}", self.label())))
        };
        for i in 1..grid.len() {
            if !(vals[i].is_finite() && vals[i - 1].is_finite()) {
                continue;
            }
            let slack = 1e-12 * vals[i].abs().max(vals[i - 1].abs());
            let ok = match self.monotone {
                Monotone::Increasing => vals[i] >= vals[i - 1] - slack,
                Monotone::Decreasing => vals[i] <= vals[i - 1] + slack,
                Monotone::Unknown => true,
            };
            if !ok {
                return fail("monotone as declared", grid[i]);
            }
        }
        for i in 1..grid.len() - 1 {
            let (x0, x1, x2) = (grid[i - 1], grid[i], grid[i + 1]);
            let chord = vals[i - 1] + (vals[i + 1] - vals[i - 1]) * (x1 - x0) / (x2 - x0);
            if !chord.is_finite() {
                continue;
            }
            let slack = 1e-9 * chord.abs().max(vals[i].abs());
            let ok = match self.curvature {
                Curvature::Convex => vals[i] <= chord + slack,
                Curvature::Concave => vals[i] >= chord - slack,
                Curvature::Unknown => true,
            };
            if !ok {
                return fail("of the declared curvature", x1);
            }
        }
        Ok(())
    }

    pub fn call(&self, x: f64) -> f64 {
        self.f.call(x)
    }

    pub fn label(&self) -> &str {
        self.f.label()
    }

    pub fn monotone(&self) -> Monotone {
        self.monotone
    }

    pub fn curvature(&self) -> Curvature {
        self.curvature
    }

    pub fn domain(&self) -> (f64, f64) {
        self.domain
    }
}

/// Where an optimisation over `τ` settled.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Extremum {
    pub tau: f64,
    pub value: f64,
}

/// Minimises `g(ln τ)` on the log grid, then refines by golden section.
fn minimise_ln(g: impl Fn(f64) -> f64, what: &'static str, x: f64) -> Result<Extremum> {
    let (a, b) = (OPT_LO.ln(), OPT_HI.ln());
    let step = (b - a) / (OPT_POINTS - 1) as f64;
    let h = |s: f64| {
        let v = g(s);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let (best, _) = (0..OPT_POINTS)
        .map(|i| (i, h(a + step * i as f64)))
        .fold((0, f64::INFINITY), |acc, (i, v)| if v < acc.1 { (i, v) } else { acc });
    if best == 0 || best == OPT_POINTS - 1 {
        return Err(Error::NoConvergence {
            what,
            detail: format!("no interior bracket at x = {x:e}; optimum runs off τ ∈ [{OPT_LO:e}, {OPT_HI:e}]"),
        });
    }
    let lo = a + step * (best - 1) as f64;
    let (s, value) = golden_min(h, lo, lo + 2.0 * step, 1e-14);
    Ok(Extremum { tau: s.exp(), value })
}

/// The minimiser and value of `xτ + M(τ)`.
pub fn legendre_extremum(m: &ScalarFunction, x: f64) -> Result<Extremum> {
    if !(x > 0.0) {
        return Err(Error::Domain(format!("legendre needs x > 0, got {x}")));
    }
    minimise_ln(|s| x * s.exp() + m.call(s.exp()), "legendre", x)
}

/// `L(M)(x) = inf_{τ>0} {xτ + M(τ)}`.
pub fn legendre(m: &ScalarFunction, x: f64) -> Result<f64> {
    Ok(legendre_extremum(m, x)?.value)
}

/// `L*(F)(x) = sup_{τ>0} {F(τ) - xτ}`.
pub fn conjugate_legendre(f: &ScalarFunction, x: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::Domain(format!("conjugate_legendre needs x > 0, got {x}")));
    }
    let e = minimise_ln(|s| x * s.exp() - f.call(s.exp()), "conjugate legendre", x)?;
    Ok(-e.value)
}

/// `L*(F)` as a function in its own right, so it can be fed back into [`legendre`].
pub fn conjugate_function(f: &ScalarFunction) -> Result<ScalarFunction> {
    let inner = f.clone();
    ScalarFunction::on(
        format!("L*({})", f.label()),
        Monotone::Decreasing,
        Curvature::Unknown,
        (1e-5, 1e5),
        move |x| conjugate_legendre(&inner, x).unwrap_or(f64::NAN),
    )
}

/// `K(M)(x) = -ln(x ∫ e^{-(xt + M(t))} dt)`, integrated in `s = ln t`
/// around the Legendre minimiser.
pub fn kohlbecker(m: &ScalarFunction, x: f64) -> Result<f64> {
    let ext = legendre_extremum(m, x)?;
    let s0 = ext.tau.ln();
    let l = ext.value;
    // Integrand relative to its peak: exp(-(φ(s) - L) + (s - s0)).
    let g = |s: f64| {
        let t = s.exp();
        let e = x * t + m.call(t) - l;
        if e.is_nan() {
            0.0
        } else {
            (-(e) + (s - s0)).exp()
        }
    };
    let phi = |s: f64| x * s.exp() + m.call(s.exp());
    let h = 1e-3;
    let curv = (phi(s0 + h) - 2.0 * phi(s0) + phi(s0 - h)) / (h * h);
    let width = if curv > 0.0 { (1.0 / curv.sqrt()).clamp(1e-9, 1.0) } else { 1.0 };
    let mut total = CompensatedSum::new();
    for dir in [-1.0f64, 1.0] {
        let mut a = s0;
        let mut w = width;
        for _ in 0..20_000 {
            let b = a + dir * w;
            let (lo, hi) = if dir > 0.0 { (a, b) } else { (b, a) };
            // The integrand is 1 at s0, so `width` bounds the integral from below.
            let scale = width + total.value();
            let (v, err) = integrate(&g, lo, hi, 1e-16 * scale, 1e-12);
            if !v.is_finite() || err > 1e-10 * (scale + v) {
                return Err(Error::NoConvergence { what: "kohlbecker", detail: format!("quadrature at x = {x:e}") });
            }
            total.add(v);
            if g(b) < 1e-30 && v < 1e-30 * total.value() || b.abs() > 700.0 {
                break;
            }
            a = b;
            w *= 1.25;
        }
    }
    let integral = total.value();
    if !(integral > 0.0) {
        return Err(Error::NoConvergence { what: "kohlbecker", detail: format!("vanishing integral at x = {x:e}") });
    }
    Ok(l - x.ln() - s0 - integral.ln())
}

/// The three columns of the examples table: a rate function `M` near zero
/// and the leading behaviour of `L(M)` at infinity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rate", rename_all = "snake_case")]
pub enum Table1 {
    /// `M(s) = (ln⁺ 1/s)^α`, `L(M)(t) ~ (ln t)^α`.
    LogPower { alpha: f64 },
    /// `M(s) = s^{-β}`, `L(M)(t) = c_β t^{β/(1+β)}` exactly.
    InversePower { beta: f64 },
    /// `M(s) = exp_(k)(s^{-ν})`, `L(M)(t) ~ t/(log_(k) t)^{1/ν}`.
    IteratedExp { depth: u32, nu: f64 },
}

impl Table1 {
    pub fn rate(&self) -> Result<ScalarFunction> {
        match *self {
            Table1::LogPower { alpha } if alpha > 0.0 => ScalarFunction::new(
                format!("(ln+ 1/s)^{alpha}"),
                Monotone::Decreasing,
                Curvature::Unknown,
                move |s| (-s.ln()).max(0.0).powf(alpha),
            ),
            Table1::InversePower { beta } if beta > 0.0 => ScalarFunction::new(
                format!("s^-{beta}"),
                Monotone::Decreasing,
                Curvature::Convex,
                move |s| s.powf(-beta),
            ),
            Table1::IteratedExp { depth, nu } if depth >= 1 && nu > 0.0 => ScalarFunction::new(
                format!("exp_({depth})(s^-{nu})"),
                Monotone::Decreasing,
                Curvature::Unknown,
                move |s| exp_iter(depth, s.powf(-nu)),
            ),
            other => Err(Error::Domain(format!("{other:?}: parameters must be positive"))),
        }
    }

    /// Leading-order `L(M)(t)`.
    pub fn reference(&self, t: f64) -> f64 {
        match *self {
            Table1::LogPower { alpha } => t.ln().powf(alpha),
            Table1::InversePower { beta } => {
                let b0 = beta / (1.0 + beta);
                (1.0 + beta) / beta.powf(b0) * t.powf(b0)
            }
            Table1::IteratedExp { depth, nu } => t / log_iter(depth, t).powf(1.0 / nu),
        }
    }
}

/// Target decay `F` for the designers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "target", rename_all = "snake_case")]
pub enum DecayTarget {
    /// `F(t) = (ln t)^β`.
    LogPower { beta: f64 },
    /// `F(t) = t^β`.
    Power { beta: f64 },
    /// `F(t) = t/(log_(depth) t)^{1/ν}`.
    NearLinear { depth: u32, nu: f64 },
}

impl DecayTarget {
    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            DecayTarget::LogPower { beta } => t.ln().powf(beta),
            DecayTarget::Power { beta } => t.powf(beta),
            DecayTarget::NearLinear { depth, nu } => t / log_iter(depth, t).powf(1.0 / nu),
        }
    }

    fn check(&self, need_growth: bool) -> Result<()> {
        let bad = |msg: String| Err(Error::Domain(msg));
        match *self {
            DecayTarget::Power { beta } if beta >= 1.0 => bad(format!("F(t) = t^{beta} is not o(t)")),
            DecayTarget::Power { beta } | DecayTarget::LogPower { beta } if beta < 0.0 => {
                bad(format!("F must be non-decreasing, got exponent {beta}"))
            }
            DecayTarget::Power { beta } | DecayTarget::LogPower { beta } if need_growth && beta == 0.0 => {
                bad("F is constant, it must tend to infinity".into())
            }
            DecayTarget::NearLinear { depth, nu } if depth == 0 || !(nu > 0.0) => {
                bad("near-linear target needs depth >= 1 and nu > 0".into())
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Direction {
    Increasing,
    Decreasing,
}

/// `-ln p(n)/F(n)` along a grid, with the first grid point beyond which the
/// sequence is strictly monotone in the wanted direction.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrendCheck {
    pub direction: Direction,
    pub grid: Vec<f64>,
    pub ratios: Vec<f64>,
    pub n0: Option<f64>,
}

impl TrendCheck {
    pub fn holds(&self) -> bool {
        self.n0 == self.grid.first().copied()
    }
}

/// Builds the ratio sequence `-ln p(n)/F(n)` for a model.
pub fn decay_trend(model: &Model, f: impl Fn(f64) -> f64, grid: &[f64], direction: Direction) -> Result<TrendCheck> {
    let sp = model.spectral();
    let ratios = grid
        .iter()
        .map(|&n| Ok(sp.decay_rate(n)? * n / f(n)))
        .collect::<Result<Vec<f64>>>()?;
    let ok = |a: f64, b: f64| match direction {
        Direction::Increasing => b > a,
        Direction::Decreasing => b < a,
    };
    let mut start = grid.len().saturating_sub(1);
    while start > 0 && ok(ratios[start - 1], ratios[start]) {
        start -= 1;
    }
    let n0 = (grid.len() >= 2 && start < grid.len() - 1).then(|| grid[start]);
    Ok(TrendCheck { direction, grid: grid.to_vec(), ratios, n0 })
}

#[derive(Debug, Clone)]
pub struct Design {
    pub seq: CoefficientSequence,
    pub k0: usize,
    pub check: TrendCheck,
}

fn finish(tower: &Tower, provenance: &str, rule: DesignRule, f: impl Fn(f64) -> f64, grid: &[f64], dir: Direction) -> Result<Design> {
    let seq = CoefficientSequence::designed(provenance, rule, tower.kind().clone())?;
    let k0 = seq.design_level().expect("designed sequences record k0");
    let model = Model::new(tower.clone(), seq.clone())?;
    let check = decay_trend(&model, f, grid, dir)?;
    Ok(Design { seq, k0, check })
}

/// Coefficients with `-ln p(n)/F(n) → ∞`, from `e^{-M(σ(k))} = 1/v_k` with `L(M)/F → ∞`.
pub fn design_fast_decay(tower: &Tower, target: DecayTarget, grid: &[f64]) -> Result<Design> {
    target.check(false)?;
    let rule = match target {
        DecayTarget::LogPower { beta } => DesignRule::LogPower { alpha: beta + 1.0 },
        DecayTarget::Power { beta } => DesignRule::ConjugatePower { exponent: 0.5 * (1.0 + beta), delta: 1.0 },
        DecayTarget::NearLinear { depth, nu } => DesignRule::IteratedExp { depth, nu: 2.0 * nu },
    };
    finish(tower, "fast decay", rule, |t| target.eval(t), grid, Direction::Increasing)
}

/// Coefficients with `-ln p(n)/F(n) → 0`, from `σ(k) = M⁻¹(ln v_k)/δ` with
/// `M = L*(F̃)` and `F̃/F → 0`.
pub fn design_slow_decay(tower: &Tower, target: DecayTarget, grid: &[f64]) -> Result<Design> {
    target.check(true)?;
    let rule = match target {
        DecayTarget::LogPower { beta } => DesignRule::LogPower { alpha: 0.5 * beta },
        DecayTarget::Power { beta } => DesignRule::ConjugatePower { exponent: 0.5 * beta, delta: 2.0 * std::f64::consts::LN_2 },
        DecayTarget::NearLinear { .. } => {
            return Err(Error::Unsupported("slow-decay design for near-linear targets".into()))
        }
    };
    finish(tower, "slow decay", rule, |t| target.eval(t), grid, Direction::Decreasing)
}

/// `σ(k) = (log_(l+1) v_k)^{-1/ν}`, for which `p(n) ≤ exp(-cn/(log_(l) n)^{1/ν})`.
pub fn near_linear_example(tower: &Tower, depth: u32, nu: f64) -> Result<CoefficientSequence> {
    CoefficientSequence::designed("near-linear example", DesignRule::IteratedExp { depth, nu }, tower.kind().clone())
}

/// `σ(k) = 1/(e^{v_{k+1}} - 1)`, for which `p(n) ≥ c/ln n`.
pub fn inverse_log_example(tower: &Tower) -> Result<CoefficientSequence> {
    CoefficientSequence::designed("inverse-log envelope", DesignRule::InverseLogEnvelope, tower.kind().clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::{bisect, log_grid};

    fn inv(beta: f64) -> ScalarFunction {
        Table1::InversePower { beta }.rate().unwrap()
    }

    #[test]
    fn legendre_inverse_power() {
        assert!((legendre(&inv(1.0), 4.0).unwrap() - 4.0).abs() < 1e-10);
        let m = inv(0.5);
        for x in [3.0, 300.0, 3e5] {
            let r = Table1::InversePower { beta: 0.5 }.reference(x);
            assert!((legendre(&m, x).unwrap() / r - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn legendre_log_power_matches_stationary_point() {
        // xτ + y² with y = ln 1/τ, stationary at 2y e^y = x.
        let x: f64 = 1e8;
        let y = bisect(|y| (2.0 * y).ln() + y - x.ln(), 1.0, 100.0, 1e-15);
        let expect = 2.0 * y + y * y;
        let got = legendre(&Table1::LogPower { alpha: 2.0 }.rate().unwrap(), x).unwrap();
        assert!((got / expect - 1.0).abs() < 1e-10);
    }

    #[test]
    fn conjugate_of_root() {
        let f = ScalarFunction::new("2 sqrt", Monotone::Increasing, Curvature::Concave, |t| 2.0 * t.sqrt()).unwrap();
        assert!((conjugate_legendre(&f, 1.0).unwrap() - 1.0).abs() < 1e-12);
        assert!((conjugate_legendre(&f, 5.0).unwrap() - 0.2).abs() < 1e-12);
    }

    #[test]
    fn shape_check_rejects_lies() {
        assert!(ScalarFunction::new("t", Monotone::Decreasing, Curvature::Unknown, |t| t).is_err());
        assert!(ScalarFunction::new("t^2", Monotone::Increasing, Curvature::Concave, |t| t * t).is_err());
    }

    #[test]
    fn kohlbecker_sandwich() {
        let m = inv(1.0);
        for x in log_grid(1e-2, 1e8, 15) {
            let l = legendre(&m, x).unwrap();
            let k = kohlbecker(&m, x).unwrap();
            assert!(k <= l + 1e-9 && k >= l - (1.0 + l).ln() - 1e-9, "x = {x}: L = {l}, K = {k}");
        }
        let k = kohlbecker(&m, 1e6).unwrap();
        assert!((k / 2000.0 - 1.0).abs() < 0.1);
    }

    #[test]
    fn designers_reject_bad_targets() {
        let t = Tower::powers_of_two();
        let grid = [1e2, 1e3];
        assert!(design_fast_decay(&t, DecayTarget::Power { beta: 1.0 }, &grid).is_err());
        assert!(design_slow_decay(&t, DecayTarget::Power { beta: 0.0 }, &grid).is_err());
    }

    #[test]
    fn fast_design_is_normalized() {
        let t = Tower::powers_of_two();
        let d = design_fast_decay(&t, DecayTarget::LogPower { beta: 1.0 }, &[1e2, 1e3, 1e4]).unwrap();
        let s = &d.seq;
        assert!((s.tail(-1) - 1.0).abs() < 1e-15);
        for k in 0..200 {
            assert!(s.coeff(k) > 0.0);
            assert!((s.tail(k as i64 - 1) - s.tail(k as i64) - s.coeff(k)).abs() < 1e-12);
        }
        for k in d.k0..d.k0 + 20 {
            let expect = -((k as f64) * std::f64::consts::LN_2).sqrt();
            assert!((s.ln_tail(k as i64) - expect).abs() < 1e-12);
        }
        assert!(d.check.holds());
    }
}
