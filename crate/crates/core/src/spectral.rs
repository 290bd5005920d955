//! Spectral distribution `N`, return probability, heat kernel, bounds and the
//! recurrence criterion.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::measure::{Family, Model, Truncated};
use crate::numeric::{ln_one_minus_exp, LogSum};
use crate::tower::{ball_level, ball_radius, TowerKind};

/// Right-continuous step function with `N(σ(k)) = 1/v_k`.
#[derive(Debug, Clone, Copy)]
pub struct StepSpectralDistribution<'a> {
    model: &'a Model,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Spectrum {
    /// `σ(0) > σ(1) > ...`, descending.
    pub points: Vec<f64>,
    /// `0` is an accumulation point (infinite support) rather than an isolated eigenvalue.
    pub accumulates_at_zero: bool,
}

/// Two-sided bound on `h(t; ρ)` with the constants used.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HeatBand {
    pub lower: f64,
    pub upper: f64,
    /// `δ = 1/(1 - σ(0))`.
    pub delta: f64,
    /// `(1 - σ(0))² / (2e²)`.
    pub diagonal_constant: f64,
    /// Multiplier of the upper envelope, `2/C`.
    pub upper_constant: f64,
}

impl Model {
    pub fn spectral(&self) -> StepSpectralDistribution<'_> {
        StepSpectralDistribution { model: self }
    }
}

impl<'a> StepSpectralDistribution<'a> {
    pub fn model(&self) -> &'a Model {
        self.model
    }

    /// Smallest `j` with `σ(j) ≤ λ` (strict when `strict`). Tails that are
    /// normal doubles are compared as the values [`Self::spectrum_points`]
    /// reports, so jump points resolve exactly; smaller ones in log space.
    fn first_level_below(&self, lambda: f64, ln_lambda: f64, strict: bool) -> Result<usize> {
        let seq = self.model.seq();
        let max = self.model.tower().max_level();
        let below = |j: usize| {
            let t = seq.tail(j as i64);
            let (s, l) = if t >= f64::MIN_POSITIVE && lambda >= f64::MIN_POSITIVE {
                (t, lambda)
            } else {
                (seq.ln_tail(j as i64), ln_lambda)
            };
            if strict {
                s < l
            } else {
                s <= l
            }
        };
        if below(0) {
            return Ok(0);
        }
        let mut hi = 1usize;
        while !below(hi.min(max)) {
            if hi >= max {
                return Err(Error::LevelCap { level: max + 1, cap: self.model.tower().cap() });
            }
            hi = hi.saturating_mul(2);
        }
        let mut hi = hi.min(max);
        let mut lo = hi / 2;
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if below(mid) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(hi)
    }

    /// `ln N(λ)` given `ln λ`.
    pub fn ln_n_at(&self, ln_lambda: f64) -> Result<f64> {
        if ln_lambda == f64::NEG_INFINITY {
            return Ok(f64::NEG_INFINITY);
        }
        Ok(-self.model.ln_volume(self.first_level_below(ln_lambda.exp(), ln_lambda, false)?))
    }

    pub fn n_at(&self, lambda: f64) -> Result<f64> {
        if lambda <= 0.0 {
            return Ok(0.0);
        }
        Ok(1.0 / self.model.tower().volume_f64(self.first_level_below(lambda, lambda.ln(), false)?))
    }

    /// Left-continuous modification `N_-(λ) = lim_{s↑λ} N(s)`.
    pub fn n_left(&self, lambda: f64) -> Result<f64> {
        if lambda <= 0.0 {
            return Ok(0.0);
        }
        Ok(1.0 / self.model.tower().volume_f64(self.first_level_below(lambda, lambda.ln(), true)?))
    }

    /// Generalized inverse `inf{λ : N(λ) ≥ y}` for `y ∈ (0, 1]`.
    pub fn n_inverse(&self, y: f64) -> Result<f64> {
        if !(y > 0.0 && y <= 1.0) {
            return Err(Error::Domain(format!("N_inverse needs y ∈ (0,1], got {y}")));
        }
        let target = -y.ln();
        let tower = self.model.tower();
        let max = tower.max_level();
        let mut j = 0usize;
        while j < max && tower.ln_volume(j + 1) <= target * (1.0 + 1e-15) {
            j += 1;
        }
        if j == max && tower.truncation().is_none() {
            return Err(Error::LevelCap { level: max + 1, cap: tower.cap() });
        }
        Ok(self.model.seq().tail(j as i64))
    }

    pub fn spectrum_points(&self, levels: usize) -> Result<Spectrum> {
        self.model.tower().check_level(levels)?;
        let seq = self.model.seq();
        let mut points = Vec::with_capacity(levels + 1);
        for k in 0..=levels {
            let s = seq.tail(k as i64);
            points.push(s);
            if s == 0.0 {
                break;
            }
        }
        Ok(Spectrum { points, accumulates_at_zero: seq.support_end().is_none() })
    }

    /// `p(t) = μ_t(e)`.
    pub fn return_probability(&self, t: f64) -> Result<Truncated> {
        self.model.point_mass_at_level(t, 0)
    }

    /// `ln p(t)`, finite even where `p(t)` underflows.
    pub fn ln_return_probability(&self, t: f64) -> Result<f64> {
        Ok(self.model.ln_point_mass_at_level(t, 0)?.value)
    }

    /// `R(t) = -ln p(t)/t`.
    pub fn decay_rate(&self, t: f64) -> Result<f64> {
        Ok(-self.ln_return_probability(t)? / t)
    }

    /// Heat kernel on the shell at level `k` (`ρ = r_k`).
    pub fn heat_kernel_at_level(&self, t: f64, k: usize) -> Result<Truncated> {
        self.model.point_mass_at_level(t, k)
    }

    /// Resolves `ρ` to its level, rejecting values outside the radius set.
    pub fn radius_level(&self, rho: f64) -> Result<usize> {
        let k = ball_level(self.model.tower(), self.model.seq(), rho)?;
        let r = ball_radius(self.model.seq(), k);
        if (r - rho).abs() > 1e-12 * rho.max(1.0) {
            return Err(Error::ForeignRadius(rho));
        }
        Ok(k)
    }

    /// `h(t; ρ)`.
    pub fn heat_kernel(&self, t: f64, rho: f64) -> Result<Truncated> {
        self.heat_kernel_at_level(t, self.radius_level(rho)?)
    }

    /// Dilated two-sided band around `h(t; ρ)` for `t ≥ 1`.
    pub fn heat_kernel_bounds(&self, t: f64, rho: f64) -> Result<HeatBand> {
        if !(t >= 1.0) {
            return Err(Error::Domain(format!("heat-kernel band needs t >= 1, got {t}")));
        }
        if !(rho >= 0.0) {
            return Err(Error::Domain(format!("rho >= 0 required, got {rho}")));
        }
        let s0 = self.model.seq().tail(0);
        let delta = 1.0 / (1.0 - s0);
        let c0 = (1.0 - s0).powi(2) / (2.0 * std::f64::consts::E.powi(2));
        let upper_constant = 2.0 / c0;
        let w = t / (t + rho);
        let mut lower = 0.5 * (-delta).exp() * w * self.n_at(0.5 / (t + rho))?;
        if rho == 0.0 {
            lower = lower.max(c0 * self.n_at(1.0 / t)?);
        }
        let p_t = self.return_probability(t)?.value;
        let upper = (upper_constant * w * self.return_probability(0.5 * (t + rho))?.value).min(p_t);
        Ok(HeatBand { lower, upper, delta, diagonal_constant: c0, upper_constant })
    }

    /// `Σ_k e^{-nσ(k)} (1/v_k - 1/v_{k+1})`.
    pub fn convolution_power_bound(&self, n: f64) -> Result<Truncated> {
        if !(n >= 0.0) {
            return Err(Error::Domain(format!("n >= 0 required, got {n}")));
        }
        let seq = self.model.seq();
        let mut acc = LogSum::new();
        let mut last = 0;
        for k in self.model.level_range(0) {
            last = k;
            let ln_v = self.model.ln_volume(k);
            let ln_s = seq.ln_tail(k as i64);
            if ln_s == f64::NEG_INFINITY {
                acc.add_ln(-ln_v);
                return Ok(Truncated { value: acc.value(), tail_bound: 0.0, last_level: k });
            }
            let ln_w = -ln_v + ln_one_minus_exp(ln_v - self.model.ln_volume(k + 1));
            acc.add_ln(-n * ln_s.exp() + ln_w);
            let ln_bound = -self.model.ln_volume(k + 1);
            if ln_bound <= acc.ln() + self.model.tol().ln() {
                return Ok(Truncated { value: acc.value(), tail_bound: ln_bound.exp(), last_level: k });
            }
        }
        Err(Error::NoConvergence { what: "convolution power bound", detail: format!("level {last}") })
    }

    /// `Σ_{n=1}^{big_n} p(n)` in closed form.
    pub fn return_partial_sum(&self, big_n: f64) -> Result<Truncated> {
        let seq = self.model.seq();
        let mut acc = LogSum::new();
        let mut last = 0;
        for k in self.model.level_range(0) {
            last = k;
            let ln_v = self.model.ln_volume(k);
            let ln_s = seq.ln_tail(k as i64);
            if ln_s == f64::NEG_INFINITY {
                acc.add_ln(-ln_v + big_n.ln());
                return Ok(Truncated { value: acc.value(), tail_bound: 0.0, last_level: k });
            }
            let ln_w = -ln_v + ln_one_minus_exp(ln_v - self.model.ln_volume(k + 1));
            let ln_partial = seq.ln_partial(k as i64);
            acc.add_ln(ln_w + ln_partial + ln_one_minus_exp(big_n * ln_partial) - ln_s);
            let ln_bound = big_n.ln() - self.model.ln_volume(k + 1);
            if ln_bound <= acc.ln() + self.model.tol().ln() {
                return Ok(Truncated { value: acc.value(), tail_bound: ln_bound.exp(), last_level: k });
            }
        }
        Err(Error::NoConvergence { what: "return partial sum", detail: format!("level {last}") })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    Recurrent,
    Transient,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeriesTerm {
    pub level: usize,
    /// `1/(v_k σ(k))`.
    pub tail_term: f64,
    /// `1/(v_k (1 - μ(G_k)))`.
    pub lawler_term: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecurrenceReport {
    pub verdict: Verdict,
    pub analytic: bool,
    pub reason: String,
    pub terms: Vec<SeriesTerm>,
    /// `(N, Σ_{n≤N} p(n))` on decades.
    pub partial_sums: Vec<(f64, f64)>,
    /// Ratio of the last two decade increments of the partial sums.
    pub trend_ratio: f64,
    /// Direction suggested by the partial-sum trend.
    pub trend: Verdict,
}

/// Classifies a positive series from its log-terms by geometric and
/// harmonic envelopes over the second half of the horizon.
pub fn classify_series(ln_terms: &[f64]) -> (Verdict, String) {
    let n = ln_terms.len();
    if n < 8 {
        return (Verdict::Inconclusive, "horizon too short".into());
    }
    if ln_terms.iter().any(|t| *t == f64::INFINITY) {
        return (Verdict::Recurrent, "infinite term".into());
    }
    let tail = &ln_terms[n / 2..];
    let max_ratio = tail.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max);
    if max_ratio < -1e-3 {
        return (
            Verdict::Transient,
            format!("geometric envelope: term ratio <= {:.6} over levels {}..{}", max_ratio.exp(), n / 2, n - 1),
        );
    }
    let harmonic_ok = (n / 2..n - 1)
        .all(|k| ln_terms[k + 1] + ((k + 2) as f64).ln() >= ln_terms[k] + ((k + 1) as f64).ln() - 1e-12);
    if harmonic_ok {
        return (
            Verdict::Recurrent,
            format!("harmonic envelope: (k+1)·term non-decreasing over levels {}..{}", n / 2, n - 1),
        );
    }
    (Verdict::Inconclusive, "neither envelope certifies".into())
}

fn analytic_verdict(model: &Model) -> Option<(Verdict, String)> {
    let seq = model.seq();
    if seq.support_end().is_some() {
        return Some((Verdict::Recurrent, "finitely supported walk lives on a finite group".into()));
    }
    let kind = match model.tower().kind() {
        TowerKind::FiniteTruncated { .. } => return None,
        k => k,
    };
    match (seq.family(), kind) {
        (Family::Geometric { q }, TowerKind::PowersOfTwo) => {
            let ratio = 1.0 / (2.0 * q);
            let v = if ratio >= 1.0 { Verdict::Recurrent } else { Verdict::Transient };
            Some((v, format!("terms (1/(2q))^k/q with ratio {ratio}")))
        }
        (Family::Geometric { q }, TowerKind::CustomVolumes { indices }) => {
            let growth: f64 = indices.iter().map(|&m| (m as f64).ln()).sum();
            let decay = indices.len() as f64 * -q.ln();
            let v = if decay >= growth { Verdict::Recurrent } else { Verdict::Transient };
            Some((v, format!("per-period log-term drift {}", decay - growth)))
        }
        (Family::Geometric { .. }, TowerKind::Factorial) => {
            Some((Verdict::Transient, "terms decay like q^{-k}/(k+1)!".into()))
        }
        (Family::FactorialPower { gamma, .. }, TowerKind::Factorial) => {
            let v = if *gamma >= 1.0 { Verdict::Recurrent } else { Verdict::Transient };
            Some((v, format!("terms ((k+s)!)^gamma/(k+1)! with gamma = {gamma}")))
        }
        (Family::FactorialPower { .. }, _) => {
            Some((Verdict::Recurrent, "superexponential tail decay against exponential volumes".into()))
        }
        (Family::Polynomial { .. } | Family::IteratedLog { .. }, _) => {
            Some((Verdict::Transient, "sub-exponential tails against volumes >= 2^k".into()))
        }
        _ => None,
    }
}

/// Recurrence of `μ(c)` via divergence of `Σ 1/(v_k σ(k))`.
pub fn classify_recurrence(model: &Model, horizon: usize) -> Result<RecurrenceReport> {
    let seq = model.seq();
    let horizon = horizon.min(model.tower().max_level());
    let mut terms = Vec::new();
    let mut ln_terms = Vec::new();
    for k in model.level_range(0).take(horizon + 1) {
        let ln_t = -model.ln_volume(k) - seq.ln_tail(k as i64);
        let escape = model.exit_mass(1.0, k)?.value;
        ln_terms.push(ln_t);
        terms.push(SeriesTerm {
            level: k,
            tail_term: ln_t.exp(),
            lawler_term: (-model.ln_volume(k)).exp() / escape,
        });
        if ln_t == f64::INFINITY {
            break;
        }
    }
    let (verdict, reason, analytic) = match analytic_verdict(model) {
        Some((v, r)) => (v, r, true),
        None => {
            let (v, r) = classify_series(&ln_terms);
            (v, r, false)
        }
    };
    let sp = model.spectral();
    let mut partial_sums = Vec::new();
    for e in 3..=6 {
        let n = 10f64.powi(e);
        partial_sums.push((n, sp.return_partial_sum(n)?.value));
    }
    let d = |i: usize| partial_sums[i].1 - partial_sums[i - 1].1;
    let trend_ratio = d(3) / d(2);
    let trend = if trend_ratio >= 0.5 { Verdict::Recurrent } else { Verdict::Transient };
    Ok(RecurrenceReport { verdict, analytic, reason, terms, partial_sums, trend_ratio, trend })
}

/// Lawler's sufficient condition for an arbitrary walk: given the escape
/// masses `1 - μ(G_n)` and log-volumes, divergence of `Σ 1/(v_n (1-μ(G_n)))`
/// implies recurrence.
pub fn lawler_criterion(escape: &[f64], ln_volumes: &[f64]) -> (Verdict, String) {
    let ln_terms: Vec<f64> = escape.iter().zip(ln_volumes).map(|(e, v)| -v - e.ln()).collect();
    match classify_series(&ln_terms) {
        (Verdict::Transient, _) => (Verdict::Inconclusive, "series converges; the condition is only sufficient".into()),
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::fixtures::*;
    use crate::measure::CoefficientSequence;
    use crate::tower::Tower;

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * b.abs()
    }

    #[test]
    fn step_function_values() {
        let g = cfg_g();
        let n = g.spectral();
        assert_eq!(n.n_at(0.125).unwrap(), 0.25);
        assert_eq!(n.n_at(0.3).unwrap(), 0.5);
        assert_eq!(n.n_at(1.0).unwrap(), 1.0);
        assert_eq!(n.n_at(0.0).unwrap(), 0.0);
        assert_eq!(n.n_left(0.125).unwrap(), 0.125);
        assert_eq!(n.n_inverse(0.25).unwrap(), 0.125);
        assert_eq!(n.n_inverse(0.3).unwrap(), 0.25);
        assert!(n.n_inverse(0.0).is_err());
    }

    #[test]
    fn spectrum() {
        let g = cfg_g();
        assert_eq!(g.spectral().spectrum_points(2).unwrap().points, vec![0.5, 0.25, 0.125]);
        let s = cfg_s().spectral().spectrum_points(1).unwrap().points;
        assert!(close(s[0], 0.5, 1e-15) && close(s[1], 1.0 / 6.0, 1e-14));
    }

    #[test]
    fn return_probability_values() {
        let g = cfg_g();
        let sp = g.spectral();
        assert!(close(sp.return_probability(1.0).unwrap().value, 2.0 / 3.0, 1e-14));
        assert!(close(sp.return_probability(2.0).unwrap().value, 10.0 / 21.0, 1e-13));
        for t in [1e3, 1e4, 1e5, 1e6] {
            let pt = sp.return_probability(t).unwrap().value * t;
            assert!((0.5..=2.5).contains(&pt), "p(t)·t = {pt}");
        }
        assert!(sp.decay_rate(1e4).unwrap() <= 1e-2);
    }

    #[test]
    fn heat_kernel_shell() {
        let g = cfg_g();
        let sp = g.spectral();
        assert!(close(sp.heat_kernel(1.0, 3.0).unwrap().value, 1.0 / 24.0, 1e-13));
        assert!(matches!(sp.heat_kernel(1.0, 2.5), Err(Error::ForeignRadius(_))));
        let band = sp.heat_kernel_bounds(10.0, 0.0).unwrap();
        let p = sp.return_probability(10.0).unwrap().value;
        assert!(band.lower <= p && p <= band.upper);
    }

    #[test]
    fn convolution_bound() {
        let g = cfg_g();
        let sp = g.spectral();
        assert!(close(sp.convolution_power_bound(0.0).unwrap().value, 1.0, 1e-14));
        let direct: f64 = (0..60).map(|k| (-(0.5f64).powi(k + 1)).exp() * 0.5f64.powi(k + 1)).sum();
        assert!(close(sp.convolution_power_bound(1.0).unwrap().value, direct, 1e-13));
    }

    #[test]
    fn partial_sums_match_direct() {
        let g = cfg_g();
        let sp = g.spectral();
        let direct: f64 = (1..=50).map(|n| sp.return_probability(n as f64).unwrap().value).sum();
        assert!(close(sp.return_partial_sum(50.0).unwrap().value, direct, 1e-12));
    }

    #[test]
    fn recurrence_examples() {
        let g = classify_recurrence(&cfg_g(), 60).unwrap();
        assert_eq!(g.verdict, Verdict::Recurrent);
        assert!(close(g.terms[5].tail_term, 2.0, 1e-12));
        let s = classify_recurrence(&cfg_s(), 30).unwrap();
        assert_eq!(s.verdict, Verdict::Recurrent);
        assert!(close(s.terms[3].tail_term, 5.0, 1e-12));
        let m = Model::new(Tower::powers_of_two(), CoefficientSequence::polynomial(2.0).unwrap()).unwrap();
        assert_eq!(classify_recurrence(&m, 60).unwrap().verdict, Verdict::Transient);
        let (v, _) = classify_series(&vec![0.0; 40]);
        assert_eq!(v, Verdict::Recurrent);
    }
}
