//! The isospectral-profile machinery: `T(u)`, `λ₁(G_k)`, the Følner upper
//! bound `Λ_F`, the bridge `N ≃ 1/T⁻¹` and order estimates.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::measure::Model;
use crate::numeric::{least_squares, ln_one_minus_exp, LogSum};

/// Below this value of `u/v_i` the factor `1 - u/v_i` equals one in double precision.
const LN_NEGLIGIBLE: f64 = -40.0;

#[derive(Debug, Clone, Copy)]
pub struct Profile<'a> {
    model: &'a Model,
}

impl Model {
    pub fn profile(&self) -> Profile<'_> {
        Profile { model: self }
    }
}

impl<'a> Profile<'a> {
    /// Largest `k` with `ln v_k ≤ ln_u` (requires `ln_u ≥ 0`).
    fn level_of(&self, ln_u: f64) -> Result<usize> {
        let tower = self.model.tower();
        let max = tower.max_level();
        if tower.ln_volume(max) <= ln_u {
            if tower.truncation().is_some() {
                return Ok(max);
            }
            return Err(Error::LevelCap { level: max + 1, cap: tower.cap() });
        }
        let (mut lo, mut hi) = (0usize, max);
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if tower.ln_volume(mid) <= ln_u {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(lo)
    }

    /// `ln Σ_{i>k} c_i (1 - u/v_i)` for `v_k ≤ u < v_{k+1}`.
    fn ln_t_from(&self, k: usize, ln_u: f64) -> f64 {
        let seq = self.model.seq();
        let mut acc = LogSum::new();
        let mut i = k;
        loop {
            if seq.ln_tail(i as i64) == f64::NEG_INFINITY {
                return acc.ln();
            }
            let gap = ln_u - self.model.ln_volume(i + 1);
            if gap < LN_NEGLIGIBLE || i >= self.model.tower().max_level() {
                acc.add_ln(seq.ln_tail(i as i64));
                return acc.ln();
            }
            acc.add_ln(seq.ln_coeff(i + 1) + ln_one_minus_exp(gap));
            i += 1;
        }
    }

    /// `ln T(u)` given `ln u`.
    pub fn ln_t_of(&self, ln_u: f64) -> Result<f64> {
        if ln_u < 0.0 {
            let p1 = self.model.point_mass_at_level(1.0, 0)?.value;
            return Ok((-(ln_u.exp() * p1)).ln_1p());
        }
        Ok(self.ln_t_from(self.level_of(ln_u)?, ln_u))
    }

    /// `T(u) = 1 - Σ c_i min(1, u/v_i)`.
    pub fn t_of(&self, u: f64) -> Result<f64> {
        if !(u >= 0.0) {
            return Err(Error::Domain(format!("T needs u >= 0, got {u}")));
        }
        if u == 0.0 {
            return Ok(1.0);
        }
        Ok(self.ln_t_of(u.ln())?.exp())
    }

    /// `ln λ₁(G_k) = ln T(v_k)`.
    pub fn ln_lambda1(&self, k: usize) -> Result<f64> {
        self.model.tower().check_level(k)?;
        if self.model.seq().ln_tail(k as i64) == f64::NEG_INFINITY {
            return Err(Error::Domain(format!("no mass above level {k}: λ₁(G_{k}) degenerates to 0")));
        }
        Ok(self.ln_t_from(k, self.model.ln_volume(k)))
    }

    pub fn lambda1_subgroup(&self, k: usize) -> Result<f64> {
        Ok(self.ln_lambda1(k)?.exp())
    }

    /// `ln(v_k Σ_{i>k} c_i/v_i)`, the slope of `T` on `[v_k, v_{k+1}]` times `v_k`.
    fn ln_scaled_slope(&self, k: usize) -> f64 {
        let seq = self.model.seq();
        let ln_vk = self.model.ln_volume(k);
        let mut acc = LogSum::new();
        for i in k + 1..=self.model.tower().max_level() {
            acc.add_ln(seq.ln_coeff(i) + ln_vk - self.model.ln_volume(i));
            let ln_tail = seq.ln_tail(i as i64);
            if ln_tail == f64::NEG_INFINITY || ln_tail + ln_vk - self.model.ln_volume(i + 1) < acc.ln() - 40.0 {
                break;
            }
        }
        acc.ln()
    }

    /// `ln T⁻¹(y)` for `y ∈ (0, 1)`; `T` is affine between consecutive volumes.
    pub fn ln_t_inverse(&self, y: f64) -> Result<f64> {
        if !(y > 0.0 && y < 1.0) {
            return Err(Error::Domain(format!("T_inverse needs y ∈ (0,1), got {y}")));
        }
        let ln_y = y.ln();
        let t1 = self.ln_lambda1(0)?;
        if ln_y >= t1 {
            let p1 = self.model.point_mass_at_level(1.0, 0)?.value;
            return Ok(((1.0 - y) / p1).ln());
        }
        let max = self.model.tower().max_level();
        let below = |k: usize| -> Result<bool> {
            if self.model.seq().ln_tail(k as i64) == f64::NEG_INFINITY {
                return Ok(true);
            }
            Ok(self.ln_lambda1(k)? < ln_y)
        };
        let mut hi = 1usize;
        while !below(hi.min(max))? {
            if hi >= max {
                return Err(Error::LevelCap { level: max + 1, cap: self.model.tower().cap() });
            }
            hi *= 2;
        }
        let mut hi = hi.min(max);
        let mut lo = hi / 2;
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if below(mid)? {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let k = lo;
        let tk = self.ln_lambda1(k)?.exp();
        let ratio = (tk - y) / self.ln_scaled_slope(k).exp();
        Ok(self.model.ln_volume(k) + ratio.ln_1p())
    }

    pub fn t_inverse(&self, y: f64) -> Result<f64> {
        Ok(self.ln_t_inverse(y)?.exp())
    }

    /// Builds the Følner bound from `λ₁(G_k)` for `k ≤ levels`.
    pub fn band(&self, levels: usize) -> Result<ProfileBand<'a>> {
        let mut knots = Vec::new();
        let mut prev_n = 0.0f64;
        for k in 0..=levels.min(self.model.tower().max_level()) {
            if self.model.seq().ln_tail(k as i64) == f64::NEG_INFINITY {
                break;
            }
            let ln_l = self.ln_lambda1(k)?;
            let raw = (-0.5 * ln_l).exp();
            let n = if raw < 1e15 { (raw * (1.0 + 1e-15)).floor() } else { raw };
            if n > prev_n {
                knots.push(FolnerKnot { level: k, n, ln_volume: self.model.ln_volume(k) });
                prev_n = n;
            }
        }
        Ok(ProfileBand { profile: *self, knots })
    }

    /// Checks `T⁻¹((1+λ)u) < 1/N(u) < T⁻¹(u/(2(1+λ)))` on a grid.
    pub fn spectral_check(&self, grid: &[f64], horizon: usize) -> Result<SpectralCheck> {
        let cond = self.model.seq().condition_a(horizon);
        let lambda = cond.lambda;
        let sp = self.model.spectral();
        let inv = |y: f64| -> Result<f64> {
            if y >= 1.0 {
                Ok(f64::NEG_INFINITY)
            } else {
                self.ln_t_inverse(y)
            }
        };
        let mut rows = Vec::with_capacity(grid.len());
        for &u in grid {
            let ln_left = inv((1.0 + lambda) * u)?;
            let ln_mid = -sp.ln_n_at(u.ln())?;
            let ln_right = inv(u / (2.0 * (1.0 + lambda)))?;
            rows.push(SpectralCheckRow {
                u,
                ln_lower: ln_left,
                ln_inverse_n: ln_mid,
                ln_upper: ln_right,
                holds: ln_left < ln_mid && ln_mid < ln_right,
            });
        }
        let holds = rows.iter().all(|r| r.holds);
        Ok(SpectralCheck { lambda, advisory: !cond.holds, holds, rows })
    }

    /// `σ` extended to the reals by log-linear interpolation.
    pub fn ln_sigma_continuous(&self, s: f64) -> f64 {
        let seq = self.model.seq();
        let k = s.floor();
        let frac = s - k;
        let a = seq.ln_tail(k as i64);
        if frac == 0.0 {
            return a;
        }
        a + frac * (seq.ln_tail(k as i64 + 1) - a)
    }

    /// Minimum of `σ(ln 2x)/σ(ln x)` over the grid together with `(1+λ)^{-3}`.
    pub fn doubling_check(&self, grid: &[f64], horizon: usize) -> DoublingCheck {
        let lambda = self.model.seq().condition_a(horizon).lambda;
        let min_ratio = grid
            .iter()
            .map(|&x| (self.ln_sigma_continuous((2.0 * x).ln()) - self.ln_sigma_continuous(x.ln())).exp())
            .fold(f64::INFINITY, f64::min);
        DoublingCheck { min_ratio, constant: (1.0 + lambda).powi(-3) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FolnerKnot {
    pub level: usize,
    /// Largest `n` with `k(n) = level`.
    pub n: f64,
    pub ln_volume: f64,
}

/// The band `T ≤ Λ ≤ Λ_F`.
#[derive(Debug, Clone)]
pub struct ProfileBand<'a> {
    profile: Profile<'a>,
    knots: Vec<FolnerKnot>,
}

impl ProfileBand<'_> {
    pub fn knots(&self) -> &[FolnerKnot] {
        &self.knots
    }

    /// `k(n) = min{k : λ₁(G_k) ≤ 1/n²}`.
    pub fn k_of_n(&self, n: f64) -> Result<usize> {
        self.knots
            .iter()
            .find(|kn| kn.n >= n)
            .map(|kn| kn.level)
            .ok_or_else(|| Error::NoConvergence { what: "Følner knots", detail: format!("n = {n} beyond last knot") })
    }

    /// `ln T(u)`, the lower edge.
    pub fn ln_lower(&self, ln_u: f64) -> Result<f64> {
        self.profile.ln_t_of(ln_u)
    }

    /// `F⁻¹(v) = sup{x : F(x) ≤ v}`, with `F` piecewise linear through `(n, v_{k(n)})`.
    pub fn ln_f_inverse_arg(&self, ln_v: f64) -> Result<f64> {
        let pos = self.knots.iter().rposition(|kn| kn.ln_volume <= ln_v).ok_or_else(|| {
            Error::Domain(format!("v = e^{ln_v} below F(1)"))
        })?;
        let here = self.knots[pos];
        let next = self.knots.get(pos + 1).ok_or_else(|| Error::NoConvergence {
            what: "Følner knots",
            detail: format!("v = e^{ln_v} beyond the last materialized level {}", here.level),
        })?;
        let a = (ln_v - next.ln_volume).exp();
        let b = (here.ln_volume - next.ln_volume).exp();
        Ok(here.n + (a - b) / (1.0 - b))
    }

    /// `ln Λ_F(v)` with `Λ_F(v) = (F⁻¹(v) - 1)^{-2}`.
    pub fn ln_upper(&self, ln_v: f64) -> Result<f64> {
        if !(ln_v > 0.0) {
            return Err(Error::Domain("Λ_F needs v > 1".into()));
        }
        let x = self.ln_f_inverse_arg(ln_v)?;
        Ok(-2.0 * (x - 1.0).ln())
    }

    pub fn upper(&self, v: f64) -> Result<f64> {
        Ok(self.ln_upper(v.ln())?.exp())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectralCheckRow {
    pub u: f64,
    pub ln_lower: f64,
    pub ln_inverse_n: f64,
    pub ln_upper: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectralCheck {
    pub lambda: f64,
    /// Condition (A) fails, so failures are expected rather than defects.
    pub advisory: bool,
    pub holds: bool,
    pub rows: Vec<SpectralCheckRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DoublingCheck {
    pub min_ratio: f64,
    pub constant: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OrderEstimate {
    /// `sup ln f / ln x` over the tail half.
    pub upper: f64,
    /// `inf ln f / ln x` over the tail half.
    pub lower: f64,
    /// Least-squares slope of `ln f` on `ln x` over the tail half.
    pub slope: f64,
}

/// Upper and lower order of `f` from samples `(ln x, ln f(x))`.
pub fn order_of(samples: &[(f64, f64)]) -> Result<OrderEstimate> {
    if samples.len() < 20 {
        return Err(Error::Domain(format!("order estimate needs >= 20 samples, got {}", samples.len())));
    }
    let mut s = samples.to_vec();
    s.sort_by(|a, b| a.0.total_cmp(&b.0));
    if s[0].0 <= 0.0 {
        return Err(Error::Domain("order estimate needs x > 1".into()));
    }
    if s[s.len() - 1].0 - s[0].0 < 4.0 * std::f64::consts::LN_10 {
        return Err(Error::Domain("samples span fewer than 4 decades".into()));
    }
    let tail = &s[s.len() / 2..];
    let ratios = tail.iter().map(|(lx, lf)| lf / lx);
    let upper = ratios.clone().fold(f64::NEG_INFINITY, f64::max);
    let lower = ratios.fold(f64::INFINITY, f64::min);
    let (xs, ys): (Vec<f64>, Vec<f64>) = tail.iter().copied().unzip();
    let (slope, _) = least_squares(&xs, &ys);
    Ok(OrderEstimate { upper, lower, slope })
}
