//! Oracle suite over the canonical fixtures.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ultrawalk::fixtures::{cfg_g, cfg_s};
use ultrawalk::oracle::{dirichlet_lambda1, fold_truncation, verify_eigenfunction};
use ultrawalk::spectral::classify_recurrence;
use ultrawalk::transforms::{Curvature, Monotone};
use ultrawalk::walk::simulate;
use ultrawalk::{legendre, CoefficientSequence, DenseDistribution, Enumeration, Model, Result, ScalarFunction, Tower, Verdict};

use crate::output::Table;

struct Check {
    name: &'static str,
    pass: bool,
    measured: f64,
    limit: f64,
    detail: String,
}

fn dense_convolution() -> Result<Check> {
    let f = fold_truncation(&cfg_g(), 8)?;
    let e = Enumeration::new(f.model.tower(), 8)?;
    let mu = DenseDistribution::from_model(Arc::clone(&e), &f.model, 1.0)?;
    let mut power = mu.clone();
    let mut worst = 0.0f64;
    for n in 1..=8 {
        if n > 1 {
            power = power.convolve(&mu)?;
        }
        for i in 0..e.len() {
            let pm = f.model.point_mass(n as f64, e.element(i))?.value;
            worst = worst.max((pm - power.at(i)).abs());
        }
    }
    Ok(Check {
        name: "dense_convolution",
        pass: worst <= 1e-12,
        measured: worst,
        limit: 1e-12,
        detail: "point masses vs dense powers, folded Z(2) K=8, n <= 8".into(),
    })
}

fn semigroup() -> Result<Check> {
    let mut worst = 0.0f64;
    for (model, level) in [(cfg_g(), 8), (cfg_s(), 5)] {
        let f = fold_truncation(&model, level)?;
        let e = Enumeration::new(f.model.tower(), level)?;
        let half = DenseDistribution::from_model(Arc::clone(&e), &f.model, 0.5)?;
        for (k, w) in half.convolve(&half)?.level_weights()?.iter().enumerate() {
            worst = worst.max((w - f.model.seq().coeff(k)).abs());
        }
    }
    Ok(Check {
        name: "semigroup",
        pass: worst <= 1e-12,
        measured: worst,
        limit: 1e-12,
        detail: "level weights of mu_1/2 * mu_1/2 vs c_k".into(),
    })
}

fn spectral_identity() -> Result<Check> {
    let mut worst = 0.0f64;
    let mut sandwiched = true;
    for model in [cfg_g(), cfg_s()] {
        let prof = model.profile();
        for k in 0..=20 {
            let l = prof.lambda1_subgroup(k)?;
            let t = prof.t_of(model.tower().volume_f64(k))?;
            let s = model.seq().tail(k as i64);
            worst = worst.max(((l - t) / t).abs());
            sandwiched &= s / 2.0 < l && l < s;
        }
    }
    Ok(Check {
        name: "spectral_identity",
        pass: worst <= 1e-12 && sandwiched,
        measured: worst,
        limit: 1e-12,
        detail: format!("relative |lambda1(G_k) - T(v_k)|, k <= 20; sigma/2 < lambda1 < sigma: {sandwiched}"),
    })
}

fn power_iteration() -> Result<Check> {
    let f = fold_truncation(&cfg_g(), 10)?;
    let e = Enumeration::new(f.model.tower(), 10)?;
    let mu = DenseDistribution::from_model(Arc::clone(&e), &f.model, 1.0)?;
    let power = dirichlet_lambda1(&[0, 1], &mu)?.lambda1;
    let gap = (power - cfg_g().profile().lambda1_subgroup(1)?).abs();
    Ok(Check {
        name: "power_iteration",
        pass: gap <= 1e-6,
        measured: gap,
        limit: 1e-6,
        detail: "Dirichlet lambda1 of G_1 by power iteration vs closed form".into(),
    })
}

fn faber_krahn(seed: u64) -> Result<Check> {
    let g = cfg_g();
    let e = Enumeration::new(&Tower::powers_of_two(), 5)?;
    let mu = DenseDistribution::restricted(Arc::clone(&e), &g)?;
    let prof = g.profile();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut violations = 0u32;
    let mut slack = f64::INFINITY;
    for _ in 0..50 {
        let size = rng.random_range(1..=e.len());
        let mut all: Vec<usize> = (0..e.len()).collect();
        for i in 0..size {
            let j = rng.random_range(i..all.len());
            all.swap(i, j);
        }
        let l = dirichlet_lambda1(&all[..size], &mu)?.lambda1;
        let t = prof.t_of(size as f64)?;
        if l < t - 1e-12 {
            violations += 1;
        }
        slack = slack.min(l - t);
    }
    Ok(Check {
        name: "faber_krahn",
        pass: violations == 0,
        measured: f64::from(violations),
        limit: 0.0,
        detail: format!("50 random subsets of G_5; min lambda1(U) - T(|U|) = {slack:e}"),
    })
}

fn eigenfunctions() -> Result<Check> {
    let f = fold_truncation(&cfg_g(), 6)?;
    let e = Enumeration::new(f.model.tower(), 6)?;
    let mut worst = 0.0f64;
    for k in 0..6 {
        worst = worst.max(verify_eigenfunction(&f.model, k, e.element(e.len() - 1))?);
    }
    Ok(Check {
        name: "eigenfunctions",
        pass: worst <= 1e-12,
        measured: worst,
        limit: 1e-12,
        detail: "relative residual of (-Laplacian) f_{k,a} = sigma(k) f_{k,a}, k < 6".into(),
    })
}

fn spectral_jumps() -> Result<Check> {
    let mut worst = 0.0f64;
    for model in [cfg_g(), cfg_s()] {
        let sp = model.spectral();
        for k in 0..=20 {
            let n = sp.n_at(model.seq().tail(k as i64))?;
            worst = worst.max((n * model.tower().volume_f64(k) - 1.0).abs());
        }
    }
    Ok(Check {
        name: "spectral_jumps",
        pass: worst <= 1e-12,
        measured: worst,
        limit: 1e-12,
        detail: "|N(sigma(k)) v_k - 1|, k <= 20".into(),
    })
}

fn recurrence() -> Result<Check> {
    let mut wrong = 0u32;
    let mut rows = Vec::new();
    for q in [0.3, 0.5, 0.7, 0.9] {
        let model = Model::new(Tower::powers_of_two(), CoefficientSequence::geometric(q)?)?;
        let report = classify_recurrence(&model, 200)?;
        let exact = if 2.0 * q <= 1.0 { Verdict::Recurrent } else { Verdict::Transient };
        wrong += u32::from(report.verdict != exact);
        rows.push(format!("q={q}:{:?}", report.verdict));
    }
    Ok(Check {
        name: "recurrence",
        pass: wrong == 0,
        measured: f64::from(wrong),
        limit: 0.0,
        detail: rows.join(" "),
    })
}

fn monte_carlo(seed: u64) -> Result<Check> {
    let g = cfg_g();
    let walks = 20_000u64;
    let stats = simulate(&g, walks, &[2], seed)?;
    let p = g.spectral().return_probability(2.0)?.value;
    let z = (stats.return_frequency(0) - p) / (p * (1.0 - p) / walks as f64).sqrt();
    Ok(Check {
        name: "monte_carlo",
        pass: z.abs() <= 3.0,
        measured: z.abs(),
        limit: 3.0,
        detail: format!("{walks} walks, P(X(2)=e) exact {p}"),
    })
}

fn legendre_closed_form() -> Result<Check> {
    let m = ScalarFunction::new("1/s", Monotone::Decreasing, Curvature::Convex, |s| 1.0 / s)?;
    let mut worst = 0.0f64;
    for t in [1.0, 1e2, 1e4, 1e6] {
        let want = 2.0 * f64::sqrt(t);
        worst = worst.max((legendre(&m, t)? / want - 1.0).abs());
    }
    Ok(Check {
        name: "legendre",
        pass: worst <= 1e-6,
        measured: worst,
        limit: 1e-6,
        detail: "L(1/s)(t) vs 2 sqrt(t)".into(),
    })
}

/// Runs every check; a check that errors counts as failed.
pub fn run(seed: u64) -> (Table, bool) {
    let checks: Vec<(&'static str, Result<Check>)> = vec![
        ("dense_convolution", dense_convolution()),
        ("semigroup", semigroup()),
        ("spectral_identity", spectral_identity()),
        ("power_iteration", power_iteration()),
        ("faber_krahn", faber_krahn(seed)),
        ("eigenfunctions", eigenfunctions()),
        ("spectral_jumps", spectral_jumps()),
        ("recurrence", recurrence()),
        ("monte_carlo", monte_carlo(seed)),
        ("legendre", legendre_closed_form()),
    ];
    let mut table = Table::new(&["check", "status", "measured", "limit", "detail"]);
    let mut all = true;
    for (name, res) in checks {
        match res {
            Ok(c) => {
                all &= c.pass;
                let status = if c.pass { "PASS" } else { "FAIL" };
                table.push(vec![c.name.into(), status.into(), c.measured.into(), c.limit.into(), c.detail.into()]);
            }
            Err(e) => {
                all = false;
                table.push(vec![name.into(), "FAIL".into(), f64::NAN.into(), f64::NAN.into(), e.to_string().into()]);
            }
        }
    }
    table.note("all_pass", all);
    (table, all)
}
