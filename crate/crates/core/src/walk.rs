//! Monte-Carlo walks `X(n) = X_1 ⋯ X_n` and the exact escape quantities they
//! are checked against.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::measure::{Family, Model, Truncated};
use crate::numeric::CompensatedSum;
use crate::tower::{ball_radius, GroupElement};

/// RNG for walk number `index` under `seed`; independent of how walks are
/// spread across workers.
pub fn walk_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Draws the level `min{k : σ(k) < u}` with `u ~ U(0,1)`.
pub fn sample_level<R: Rng + ?Sized>(model: &Model, rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let seq = model.seq();
    let max = model.tower().max_level();
    if let Family::Geometric { q } = *seq.family() {
        if u == 0.0 {
            return max;
        }
        return ((u.ln() / q.ln()).floor() as usize).min(max);
    }
    let ln_u = u.ln();
    let below = |k: usize| seq.ln_tail(k as i64) < ln_u;
    if below(0) {
        return 0;
    }
    let mut hi = 1usize;
    while hi < max && !below(hi) {
        hi = (hi * 2).min(max);
    }
    if !below(hi) {
        return max;
    }
    let mut lo = hi / 2;
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if below(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// One step: a level with probability `c_k`, then a uniform element of `G_k`.
pub fn sample_step<R: Rng + ?Sized>(model: &Model, rng: &mut R) -> Result<GroupElement> {
    let k = sample_level(model, rng);
    model.tower().sample_uniform(k, rng)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WalkTrace {
    pub seed: u64,
    pub steps: usize,
    /// Minimal level containing `X(m)` for `m = 1..=steps`.
    pub min_levels: Vec<usize>,
    /// `ρ(e, X(m))`.
    pub radii: Vec<f64>,
}

fn walk_levels<R: Rng + ?Sized>(model: &Model, n: usize, rng: &mut R, out: &mut Vec<usize>) -> Result<GroupElement> {
    let tower = model.tower();
    let mut x = tower.identity();
    for _ in 0..n {
        let step = sample_step(model, rng)?;
        x = tower.multiply(&x, &step)?;
        out.push(x.min_level());
    }
    Ok(x)
}

/// A single walk of `n` steps, reproducible from `seed`.
pub fn run_walk(model: &Model, n: usize, seed: u64) -> Result<WalkTrace> {
    if n == 0 {
        return Err(Error::Domain("a walk needs at least one step".into()));
    }
    let mut rng = walk_rng(seed, 0);
    let mut min_levels = Vec::with_capacity(n);
    walk_levels(model, n, &mut rng, &mut min_levels)?;
    let radii = min_levels.iter().map(|&k| ball_radius(model.seq(), k)).collect();
    Ok(WalkTrace { seed, steps: n, min_levels, radii })
}

/// Counts of `min_level(X(n))` at the observed times, summed over walks.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WalkStats {
    pub seed: u64,
    pub walks: u64,
    pub observed: Vec<usize>,
    /// `histograms[i][k]` counts walks with `min_level(X(observed[i])) = k`.
    pub histograms: Vec<Vec<u64>>,
}

impl WalkStats {
    /// Empirical `P(X(observed[i]) = e)` (identity is the only element of level 0).
    pub fn return_frequency(&self, i: usize) -> f64 {
        self.histograms[i].first().copied().unwrap_or(0) as f64 / self.walks as f64
    }

    /// Empirical `P(X(observed[i]) ∉ G_k)`.
    pub fn exit_frequency(&self, i: usize, k: usize) -> f64 {
        let out: u64 = self.histograms[i].iter().skip(k + 1).sum();
        out as f64 / self.walks as f64
    }
}

fn add_into(acc: &mut Vec<Vec<u64>>, other: &[Vec<u64>]) {
    for (a, b) in acc.iter_mut().zip(other) {
        if a.len() < b.len() {
            a.resize(b.len(), 0);
        }
        for (x, y) in a.iter_mut().zip(b) {
            *x += y;
        }
    }
}

/// Runs `walks` independent walks in parallel and histograms their levels at
/// the `observed` times. The result does not depend on the worker count.
pub fn simulate(model: &Model, walks: u64, observed: &[usize], seed: u64) -> Result<WalkStats> {
    let horizon = observed.iter().copied().max().ok_or_else(|| Error::Domain("no observation times".into()))?;
    if observed.contains(&0) {
        return Err(Error::Domain("observation times start at 1".into()));
    }
    let empty = || vec![Vec::<u64>::new(); observed.len()];
    let histograms = (0..walks)
        .into_par_iter()
        .try_fold(empty, |mut acc, w| -> Result<Vec<Vec<u64>>> {
            let mut rng = walk_rng(seed, w);
            let mut levels = Vec::with_capacity(horizon);
            walk_levels(model, horizon, &mut rng, &mut levels)?;
            for (i, &m) in observed.iter().enumerate() {
                let k = levels[m - 1];
                if acc[i].len() <= k {
                    acc[i].resize(k + 1, 0);
                }
                acc[i][k] += 1;
            }
            Ok(acc)
        })
        .try_reduce(empty, |mut a, b| {
            add_into(&mut a, &b);
            Ok(a)
        })?;
    Ok(WalkStats { seed, walks, observed: observed.to_vec(), histograms })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExitMass {
    /// `μ_n(G \ G_k)` with its truncation bound.
    pub exact: Truncated,
    /// `1 - (1 - σ(k))^n`, the chance that some step leaves `G_k`.
    pub crude: f64,
    /// `min(n/r_{k+1}, 1)`.
    pub envelope: f64,
}

pub fn exact_exit_mass(model: &Model, n: f64, k: usize) -> Result<ExitMass> {
    if !(n >= 1.0) {
        return Err(Error::Domain(format!("exit mass needs n >= 1, got {n}")));
    }
    let exact = model.exit_mass(n, k)?;
    let ln_s = model.seq().ln_partial(k as i64);
    let crude = -(n * ln_s).exp_m1();
    let envelope = (n / ball_radius(model.seq(), k + 1)).min(1.0);
    Ok(ExitMass { exact, crude, envelope })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum DisplacementMode {
    Exact,
    MonteCarlo { walks: u64, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Displacement {
    Exact { value: f64, tail_bound: f64, last_level: usize },
    MonteCarlo { mean: f64, standard_error: f64, walks: u64 },
    /// `α ≥ 1`: the mean is infinite.
    Divergent,
}

impl Displacement {
    pub fn value(&self) -> Option<f64> {
        match *self {
            Displacement::Exact { value, .. } => Some(value),
            Displacement::MonteCarlo { mean, .. } => Some(mean),
            Displacement::Divergent => None,
        }
    }
}

/// `M_X(α, n) = E ρ(e, X(n))^α`.
pub fn mean_displacement(model: &Model, alpha: f64, n: usize, mode: DisplacementMode) -> Result<Displacement> {
    if !(alpha > 0.0) {
        return Err(Error::Domain(format!("alpha > 0 required, got {alpha}")));
    }
    if n == 0 {
        return Err(Error::Domain("n >= 1 required".into()));
    }
    if alpha >= 1.0 && model.seq().support_end().is_none() {
        return Ok(Displacement::Divergent);
    }
    match mode {
        DisplacementMode::Exact => exact_displacement(model, alpha, n as f64),
        DisplacementMode::MonteCarlo { walks, seed } => monte_carlo_displacement(model, alpha, n, walks, seed),
    }
}

/// Sums `(r_{k+1}^α - r_k^α) μ_n(G \ G_k)`; the tail past `K` is at most
/// `n α r_{K+1}^{α-1}/(1-α)` because `σ(k) ≤ 1/r` on `[r_k, r_{k+1}]`.
fn exact_displacement(model: &Model, alpha: f64, n: f64) -> Result<Displacement> {
    let seq = model.seq();
    let mut acc = CompensatedSum::new();
    let mut r_prev = 0.0f64;
    let max = model.tower().max_level();
    for k in 0..=max {
        if seq.ln_tail(k as i64) == f64::NEG_INFINITY {
            return Ok(Displacement::Exact { value: acc.value(), tail_bound: 0.0, last_level: k });
        }
        let r_next = ball_radius(seq, k + 1);
        let exit = model.exit_mass(n, k)?.value;
        acc.add((r_next.powf(alpha) - r_prev.powf(alpha)) * exit);
        let tail = n * alpha * r_next.powf(alpha - 1.0) / (1.0 - alpha);
        if tail <= model.tol() * acc.value() {
            return Ok(Displacement::Exact { value: acc.value(), tail_bound: tail, last_level: k });
        }
        r_prev = r_next;
    }
    Err(Error::NoConvergence { what: "mean displacement", detail: format!("tail still large at level {max}") })
}

fn monte_carlo_displacement(model: &Model, alpha: f64, n: usize, walks: u64, seed: u64) -> Result<Displacement> {
    if walks < 2 {
        return Err(Error::Domain("Monte-Carlo mean needs at least 2 walks".into()));
    }
    let stats = simulate(model, walks, &[n], seed)?;
    let hist = &stats.histograms[0];
    let (mut s1, mut s2) = (CompensatedSum::new(), CompensatedSum::new());
    for (k, &count) in hist.iter().enumerate() {
        let v = ball_radius(model.seq(), k).powf(alpha);
        s1.add(count as f64 * v);
        s2.add(count as f64 * v * v);
    }
    let w = walks as f64;
    let mean = s1.value() / w;
    let var = (s2.value() / w - mean * mean).max(0.0) * w / (w - 1.0);
    Ok(Displacement::MonteCarlo { mean, standard_error: (var / w).sqrt(), walks })
}
