//! Brute-force ground truth on a finite group `G_K`: dense convolution,
//! Dirichlet eigenvalues by power iteration, and eigenfunction residuals.

use std::sync::{Arc, OnceLock};

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::measure::{fixtures, Model};
use crate::tower::{GroupElement, Tower, TowerKind};

/// Largest group for which a full multiplication table is kept.
const TABLE_LIMIT: usize = 5040;

/// The elements of `G_K` in rank order.
#[derive(Debug)]
pub struct Enumeration {
    tower: Tower,
    level: usize,
    elements: Vec<GroupElement>,
    inverse: Vec<usize>,
    xor: bool,
    table: OnceLock<Option<Vec<u16>>>,
}

impl Enumeration {
    pub fn new(tower: &Tower, level: usize) -> Result<Arc<Self>> {
        let n = tower.volume_usize(level)?;
        if n > 1 << 24 {
            return Err(Error::Unsupported(format!("dense enumeration of {n} elements")));
        }
        let elements = (0..n).map(|r| tower.unrank(level, r)).collect::<Result<Vec<_>>>()?;
        let inverse = elements
            .iter()
            .map(|x| tower.rank(&tower.inverse(x)?, level))
            .collect::<Result<Vec<_>>>()?;
        let xor = matches!(tower.kind(), TowerKind::PowersOfTwo)
            || matches!(tower.kind(), TowerKind::FiniteTruncated { base, .. } if **base == TowerKind::PowersOfTwo);
        Ok(Arc::new(Self { tower: tower.clone(), level, elements, inverse, xor, table: OnceLock::new() }))
    }

    pub fn tower(&self) -> &Tower {
        &self.tower
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn element(&self, i: usize) -> &GroupElement {
        &self.elements[i]
    }

    pub fn index_of(&self, x: &GroupElement) -> Result<usize> {
        self.tower.rank(x, self.level)
    }

    pub fn inverse_index(&self, i: usize) -> usize {
        self.inverse[i]
    }

    fn slow_product(&self, i: usize, j: usize) -> usize {
        let p = self.tower.multiply(&self.elements[i], &self.elements[j]).expect("elements of one tower");
        self.tower.rank(&p, self.level).expect("G_K is closed")
    }

    fn table(&self) -> Option<&Vec<u16>> {
        self.table
            .get_or_init(|| {
                let n = self.len();
                (!self.xor && n <= TABLE_LIMIT).then(|| {
                    (0..n * n).into_par_iter().map(|ij| self.slow_product(ij / n, ij % n) as u16).collect()
                })
            })
            .as_ref()
    }

    /// Index of `x_i x_j`.
    pub fn product(&self, i: usize, j: usize) -> usize {
        if self.xor {
            return i ^ j;
        }
        match self.table() {
            Some(t) => t[i * self.len() + j] as usize,
            None => self.slow_product(i, j),
        }
    }
}

/// A finitely supported measure on `G_K`, indexed by the enumeration.
#[derive(Debug, Clone)]
pub struct DenseDistribution {
    enumeration: Arc<Enumeration>,
    probs: Vec<f64>,
}

impl DenseDistribution {
    pub fn new(enumeration: Arc<Enumeration>, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != enumeration.len() {
            return Err(Error::Enumeration(format!("{} weights for {} elements", probs.len(), enumeration.len())));
        }
        if let Some(i) = probs.iter().position(|&p| !(p >= 0.0)) {
            return Err(Error::Domain(format!("negative or NaN weight at index {i}")));
        }
        Ok(Self { enumeration, probs })
    }

    pub fn delta(enumeration: Arc<Enumeration>, i: usize) -> Self {
        let mut probs = vec![0.0; enumeration.len()];
        probs[i] = 1.0;
        Self { enumeration, probs }
    }

    /// Haar measure `m_{G_k}`.
    pub fn uniform(enumeration: Arc<Enumeration>, k: usize) -> Result<Self> {
        let v = enumeration.tower().volume_f64(k);
        let probs = enumeration.elements.iter().map(|x| if x.min_level() <= k { 1.0 / v } else { 0.0 }).collect();
        Self::new(enumeration, probs)
    }

    /// `Σ_k w_k m_{G_k}` for `k ≤ K`.
    pub fn from_level_weights(enumeration: Arc<Enumeration>, weights: &[f64]) -> Result<Self> {
        let tower = enumeration.tower().clone();
        let k_max = enumeration.level();
        // f(level j) = Σ_{k ≥ j} w_k / v_k
        let mut by_level = vec![0.0; k_max + 2];
        for j in (0..=k_max).rev() {
            by_level[j] = by_level[j + 1] + weights.get(j).copied().unwrap_or(0.0) / tower.volume_f64(j);
        }
        let probs = enumeration.elements.iter().map(|x| by_level[x.min_level()]).collect();
        Self::new(enumeration, probs)
    }

    /// `μ_t` of a model whose support fits in `G_K`, built from `C_k(t)`.
    pub fn from_model(enumeration: Arc<Enumeration>, model: &Model, t: f64) -> Result<Self> {
        let k_max = enumeration.level();
        match model.seq().support_end() {
            Some(end) if end <= k_max => {}
            _ => return Err(Error::BeyondTruncation { level: model.seq().support_end().unwrap_or(usize::MAX), max: k_max }),
        }
        let weights = (0..=k_max).map(|k| model.seq().semigroup_coeff(k, t)).collect::<Result<Vec<_>>>()?;
        Self::from_level_weights(enumeration, &weights)
    }

    /// Point masses of an infinite-support model on the elements of `G_K`;
    /// a sub-probability, exact for kernels of operators restricted to `G_K`.
    pub fn restricted(enumeration: Arc<Enumeration>, model: &Model) -> Result<Self> {
        let k_max = enumeration.level();
        let by_level = (0..=k_max)
            .map(|k| Ok(model.point_mass_at_level(1.0, k)?.value))
            .collect::<Result<Vec<f64>>>()?;
        let probs = enumeration.elements.iter().map(|x| by_level[x.min_level()]).collect();
        Self::new(enumeration, probs)
    }

    pub fn enumeration(&self) -> &Arc<Enumeration> {
        &self.enumeration
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn at(&self, i: usize) -> f64 {
        self.probs[i]
    }

    pub fn at_element(&self, x: &GroupElement) -> Result<f64> {
        Ok(self.probs[self.enumeration.index_of(x)?])
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    /// `(a * b)(x) = Σ_y a(y) b(y⁻¹x)`.
    pub fn convolve(&self, other: &Self) -> Result<Self> {
        if !Arc::ptr_eq(&self.enumeration, &other.enumeration) {
            return Err(Error::Enumeration("convolution of distributions on different enumerations".into()));
        }
        let e = &self.enumeration;
        let support: Vec<(usize, f64)> = self
            .probs
            .iter()
            .enumerate()
            .filter(|(_, &p)| p != 0.0)
            .map(|(y, &p)| (e.inverse_index(y), p))
            .collect();
        let probs = (0..e.len())
            .into_par_iter()
            .map(|x| support.iter().map(|&(yinv, p)| p * other.probs[e.product(yinv, x)]).sum())
            .collect();
        Ok(Self { enumeration: Arc::clone(e), probs })
    }

    /// `self^{*n}`, computed by repeated convolution.
    pub fn power(&self, n: usize) -> Result<Self> {
        let mut out = Self::delta(Arc::clone(&self.enumeration), 0);
        for _ in 0..n {
            out = out.convolve(self)?;
        }
        Ok(out)
    }

    /// Recovers `w_k` for a combination `Σ w_k m_{G_k}`; errors if the
    /// distribution is not constant on each shell.
    pub fn level_weights(&self) -> Result<Vec<f64>> {
        let e = &self.enumeration;
        let k_max = e.level();
        let mut sums = vec![0.0; k_max + 1];
        let mut counts = vec![0usize; k_max + 1];
        for (x, &p) in e.elements.iter().zip(&self.probs) {
            sums[x.min_level()] += p;
            counts[x.min_level()] += 1;
        }
        let f: Vec<f64> = sums.iter().zip(&counts).map(|(s, &c)| s / c as f64).collect();
        for (x, &p) in e.elements.iter().zip(&self.probs) {
            let mean = f[x.min_level()];
            if (p - mean).abs() > 1e-10 * mean.abs().max(1e-300) {
                return Err(Error::Domain(format!(
                    "not a level combination: {p} against shell mean {mean} on shell {}",
                    x.min_level()
                )));
            }
        }
        Ok((0..=k_max)
            .map(|k| e.tower().volume_f64(k) * (f[k] - f.get(k + 1).copied().unwrap_or(0.0)))
            .collect())
    }
}

/// Power-iteration result for `λ₁(U) = 1 - ‖P_U‖`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DirichletEigen {
    pub lambda1: f64,
    pub iterations: usize,
    pub residual: f64,
}

/// `λ₁(U)` for `P_U f = 1_U((1_U f) * μ)`, iterating `(I + P_U)/2`.
pub fn dirichlet_lambda1(u: &[usize], mu: &DenseDistribution) -> Result<DirichletEigen> {
    if u.is_empty() {
        return Err(Error::Domain("U must be nonempty".into()));
    }
    let e = mu.enumeration();
    let m = u.len();
    // (f * μ)(x) = Σ_y f(y) μ(y⁻¹x)
    let kernel: Vec<f64> = (0..m * m)
        .map(|ij| {
            let (x, y) = (u[ij / m], u[ij % m]);
            mu.at(e.product(e.inverse_index(y), x))
        })
        .collect();
    let apply = |v: &[f64]| -> Vec<f64> {
        (0..m).map(|i| kernel[i * m..(i + 1) * m].iter().zip(v).map(|(k, x)| k * x).sum()).collect()
    };
    let mut v = vec![1.0 / (m as f64).sqrt(); m];
    let mut residual = f64::INFINITY;
    for it in 1..=100_000 {
        let pv = apply(&v);
        let theta: f64 = pv.iter().zip(&v).map(|(a, b)| a * b).sum();
        residual = pv.iter().zip(&v).map(|(a, b)| (a - theta * b).powi(2)).sum::<f64>().sqrt();
        if residual <= 1e-12 {
            return Ok(DirichletEigen { lambda1: 1.0 - theta, iterations: it, residual });
        }
        let mut next: Vec<f64> = v.iter().zip(&pv).map(|(a, b)| 0.5 * (a + b)).collect();
        let norm = next.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Ok(DirichletEigen { lambda1: 1.0, iterations: it, residual: 0.0 });
        }
        next.iter_mut().for_each(|x| *x /= norm);
        v = next;
    }
    Err(Error::NoConvergence { what: "power iteration", detail: format!("residual {residual:e} after 1e5 iterations") })
}

/// `f_{k,a} = (P_k - P_{k+1})δ_a` with `P_k f = f * m_{G_k}`.
pub fn eigenfunction(enumeration: &Arc<Enumeration>, k: usize, a: usize) -> Result<Vec<f64>> {
    if k + 1 > enumeration.level() {
        return Err(Error::Domain(format!("eigenfunction needs k + 1 <= K, got k = {k}")));
    }
    let delta = DenseDistribution::delta(Arc::clone(enumeration), a);
    let pk = delta.convolve(&DenseDistribution::uniform(Arc::clone(enumeration), k)?)?;
    let pk1 = delta.convolve(&DenseDistribution::uniform(Arc::clone(enumeration), k + 1)?)?;
    Ok(pk.probs.iter().zip(&pk1.probs).map(|(x, y)| x - y).collect())
}

/// `‖(-Δ)f_{k,a} - σ(k) f_{k,a}‖₂ / ‖f_{k,a}‖₂` for a model folded onto `G_K`.
pub fn verify_eigenfunction(model: &Model, k: usize, a: &GroupElement) -> Result<f64> {
    let level = model
        .tower()
        .truncation()
        .ok_or_else(|| Error::Unsupported("eigenfunction check needs a truncated tower".into()))?;
    let e = Enumeration::new(model.tower(), level)?;
    let mu = DenseDistribution::from_model(Arc::clone(&e), model, 1.0)?;
    let f = eigenfunction(&e, k, e.index_of(a)?)?;
    let fm = DenseDistribution { enumeration: Arc::clone(&e), probs: f.clone() }.convolve(&mu)?;
    let sigma = model.seq().tail(k as i64);
    let (mut num, mut den) = (0.0, 0.0);
    for (x, y) in f.iter().zip(fm.probs()) {
        num += (x - y - sigma * x).powi(2);
        den += x * x;
    }
    Ok((num / den).sqrt())
}

/// A model folded onto `G_K`, with the size of the change.
#[derive(Debug, Clone)]
pub struct Folded {
    pub model: Model,
    /// `σ(K)` of the original sequence, now carried by level `K`.
    pub moved_mass: f64,
    /// Bound `σ(K)/v_K` on the change of `p(1)`.
    pub p1_bound: f64,
}

/// Moves `Σ_{k>K} c_k` onto level `K` and freezes the tower at `G_K`.
pub fn fold_truncation(model: &Model, level: usize) -> Result<Folded> {
    if level < 1 {
        return Err(Error::Domain("fold level must be at least 1".into()));
    }
    let moved_mass = model.seq().tail(level as i64);
    let folded = fixtures::folded(model, level)?;
    Ok(Folded { p1_bound: moved_mass / model.tower().volume_f64(level), model: folded, moved_mass })
}
