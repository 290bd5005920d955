//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ultrawalk::fixtures::{cfg_g, cfg_s, cfg_sa};
use ultrawalk::numeric::{least_squares, log_grid};
use ultrawalk::oracle::{dirichlet_lambda1, fold_truncation};
use ultrawalk::profile::order_of;
use ultrawalk::spectral::classify_recurrence;
use ultrawalk::tower::ball_radius;
use ultrawalk::transforms::{
    conjugate_function, design_fast_decay, design_slow_decay, kohlbecker, legendre, Curvature, DecayTarget,
    Monotone, ScalarFunction, Table1,
};
use ultrawalk::walk::{exact_exit_mass, mean_displacement, simulate, Displacement, DisplacementMode};
use ultrawalk::{CoefficientSequence, DenseDistribution, Enumeration, Model, Result, Tower, Verdict};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Result<Outcome> {
    Ok(Outcome { pass, detail: detail.into() })
}

fn timed(limit: Duration, f: impl FnOnce() -> Result<Outcome>) -> Result<Outcome> {
    let start = Instant::now();
    let mut out = f()?;
    let took = start.elapsed();
    out.detail = format!("{}; {:.2}s (limit {}s)", out.detail, took.as_secs_f64(), limit.as_secs());
    out.pass &= took <= limit;
    Ok(out)
}

fn geometric_z2(q: f64) -> Model {
    Model::new(Tower::powers_of_two(), CoefficientSequence::geometric(q).unwrap()).unwrap()
}

fn oracle_equivalence() -> Result<Outcome> {
    timed(Duration::from_secs(10), || {
        let f = fold_truncation(&cfg_g(), 10)?;
        let e = Enumeration::new(f.model.tower(), 10)?;
        let mu = DenseDistribution::from_model(Arc::clone(&e), &f.model, 1.0)?;
        let sp = f.model.spectral();
        let mut power = mu.clone();
        let mut worst = 0.0f64;
        for n in 1..=16 {
            if n > 1 {
                power = power.convolve(&mu)?;
            }
            let p = sp.return_probability(n as f64)?.value;
            worst = worst.max((p - power.at(0)).abs());
            for i in 0..e.len() {
                let pm = f.model.point_mass(n as f64, e.element(i))?.value;
                worst = worst.max((pm - power.at(i)).abs());
            }
        }
        outcome(worst <= 1e-12, format!("max |Δ| = {worst:.2e} over n ≤ 16, 1024 elements"))
    })
}

fn semigroup_law() -> Result<Outcome> {
    let mut worst = 0.0f64;
    for (model, level) in [(cfg_g(), 10), (cfg_s(), 6), (cfg_sa(), 5)] {
        let f = fold_truncation(&model, level)?;
        let e = Enumeration::new(f.model.tower(), level)?;
        let half = DenseDistribution::from_model(Arc::clone(&e), &f.model, 0.5)?;
        let weights = half.convolve(&half)?.level_weights()?;
        for (k, w) in weights.iter().enumerate() {
            worst = worst.max((w - f.model.seq().coeff(k)).abs());
        }
    }
    outcome(worst <= 1e-12, format!("max |C_k(1/2)² coefficient - c_k| = {worst:.2e} on three folded fixtures"))
}

fn spectral_identities() -> Result<Outcome> {
    let mut ok = true;
    let mut worst = 0.0f64;
    for model in [cfg_g(), cfg_s()] {
        let prof = model.profile();
        for k in 0..=20 {
            let l = prof.lambda1_subgroup(k)?;
            let t = prof.t_of(model.tower().volume_f64(k))?;
            let exit = model.exit_mass(1.0, k)?.value;
            let s = model.seq().tail(k as i64);
            worst = worst.max(((l - t) / t).abs()).max(((l - exit) / exit).abs());
            ok &= s / 2.0 < l && l < s;
        }
    }
    let f = fold_truncation(&cfg_g(), 12)?;
    let e = Enumeration::new(f.model.tower(), 12)?;
    let mu = DenseDistribution::from_model(Arc::clone(&e), &f.model, 1.0)?;
    let power = dirichlet_lambda1(&[0, 1], &mu)?.lambda1;
    let exact = cfg_g().profile().lambda1_subgroup(1)?;
    let gap = (power - exact).abs();
    outcome(
        ok && worst <= 1e-12 && gap <= 1e-6,
        format!("σ/2 < λ₁ < σ: {ok}; rel |λ₁ - T(v_k)| ≤ {worst:.1e}; power iteration off by {gap:.1e}"),
    )
}

fn faber_krahn() -> Result<Outcome> {
    let g = cfg_g();
    let e = Enumeration::new(&Tower::powers_of_two(), 6)?;
    let mu = DenseDistribution::restricted(Arc::clone(&e), &g)?;
    let prof = g.profile();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut violations = 0;
    let mut min_slack = f64::INFINITY;
    for _ in 0..200 {
        let size = rng.random_range(1..=e.len());
        let mut all: Vec<usize> = (0..e.len()).collect();
        for i in 0..size {
            let j = rng.random_range(i..all.len());
            all.swap(i, j);
        }
        let u = &all[..size];
        let l = dirichlet_lambda1(u, &mu)?.lambda1;
        let t = prof.t_of(size as f64)?;
        // Power iteration stops at residual 1e-12.
        if l < t - 1e-12 {
            violations += 1;
        }
        min_slack = min_slack.min(l - t);
    }
    outcome(violations == 0, format!("{violations} violations in 200 sets; min λ₁(U) - T(|U|) = {min_slack:.2e}"))
}

fn polynomial_regime() -> Result<Outcome> {
    timed(Duration::from_secs(30), || {
        let mut ok = true;
        let mut rows = Vec::new();
        for q in [0.3, 0.5, 0.7] {
            let m = geometric_z2(q);
            let sp = m.spectral();
            let ts = log_grid(1e3, 1e6, 61);
            let ln_t: Vec<f64> = ts.iter().map(|t| t.ln()).collect();
            let ln_p = ts.iter().map(|&t| Ok(sp.return_probability(t)?.value.ln())).collect::<Result<Vec<_>>>()?;
            let (slope, _) = least_squares(&ln_t, &ln_p);
            let expect = -std::f64::consts::LN_2 / (1.0 / q).ln();
            let rel = (slope / expect - 1.0).abs();
            ok &= rel <= 0.03;
            rows.push(format!("q={q}: {slope:.4} vs {expect:.4} ({:.2}%)", 100.0 * rel));
        }
        outcome(ok, rows.join(", "))
    })
}

fn heat_kernel_shape() -> Result<Outcome> {
    let g = cfg_g();
    let sp = g.spectral();
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for t in log_grid(1.0, 1e4, 41) {
        for k in 0..=20 {
            let rho = ball_radius(g.seq(), k);
            let h = sp.heat_kernel_at_level(t, k)?.value;
            let s = h * (t + rho).powi(2) / t;
            lo = lo.min(s);
            hi = hi.max(s);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut violations = 0;
    for _ in 0..1000 {
        let t = (rng.random::<f64>() * 1e4f64.ln()).exp();
        let k = rng.random_range(0..=20);
        let rho = ball_radius(g.seq(), k);
        let h = sp.heat_kernel(t, rho)?.value;
        let band = sp.heat_kernel_bounds(t, rho)?;
        if !(band.lower <= h && h <= band.upper) {
            violations += 1;
        }
    }
    outcome(
        hi / lo <= 20.0 && violations == 0,
        format!("h(t;ρ)(t+ρ)²/t ∈ [{lo:.3}, {hi:.3}], ratio {:.2}; band violations {violations}/1000", hi / lo),
    )
}

fn recurrence_dichotomy() -> Result<Outcome> {
    let mut ok = true;
    let mut rows = Vec::new();
    for (q, want) in [(0.3, Verdict::Recurrent), (0.5, Verdict::Recurrent), (0.7, Verdict::Transient), (0.9, Verdict::Transient)] {
        let report = classify_recurrence(&geometric_z2(q), 200)?;
        let exact = if 1.0 / (2.0 * q) >= 1.0 { Verdict::Recurrent } else { Verdict::Transient };
        ok &= report.verdict == want && exact == want && report.trend == want;
        rows.push(format!("q={q}: {:?} (trend ratio {:.3})", report.verdict, report.trend_ratio));
    }
    outcome(ok, rows.join(", "))
}

fn monte_carlo_agreement() -> Result<Outcome> {
    timed(Duration::from_secs(60), || {
        let g = cfg_g();
        let walks = 200_000u64;
        let stats = simulate(&g, walks, &[2, 16], 20_240_601)?;
        let w = walks as f64;
        let sd = |p: f64| (p * (1.0 - p) / w).sqrt();
        let p2 = 10.0 / 21.0;
        let z_ret = (stats.return_frequency(0) - p2) / sd(p2);
        let mut z_max = 0.0f64;
        for k in 0..=5 {
            let exact = exact_exit_mass(&g, 16.0, k)?.exact.value;
            z_max = z_max.max(((stats.exit_frequency(1, k) - exact) / sd(exact)).abs());
        }
        outcome(
            z_ret.abs() <= 3.0 && z_max <= 3.0,
            format!("P(X(2)=e) z = {z_ret:.2}; max shell z at n=16, k ≤ 5: {z_max:.2}"),
        )
    })
}

fn transform_suite() -> Result<Outcome> {
    let m = Table1::InversePower { beta: 1.0 }.rate()?;
    let mut worst = 0.0f64;
    for t in log_grid(1.0, 1e6, 121) {
        worst = worst.max((legendre(&m, t)? / (2.0 * t.sqrt()) - 1.0).abs());
    }
    let ratio = kohlbecker(&m, 1e6)? / legendre(&m, 1e6)?;
    let f = ScalarFunction::new("2√τ", Monotone::Increasing, Curvature::Concave, |t| 2.0 * t.sqrt())?;
    let conj = conjugate_function(&f)?;
    let mut round = 0.0f64;
    for x in log_grid(1.0, 1e4, 17) {
        round = round.max((legendre(&conj, x)? / f.call(x) - 1.0).abs());
    }
    outcome(
        worst <= 1e-6 && (ratio - 1.0).abs() <= 0.05 && round <= 1e-6,
        format!("L(1/τ) vs 2√t rel {worst:.1e}; K/L at 1e6 = {ratio:.4}; biconjugate rel {round:.1e}"),
    )
}

fn order_estimates() -> Result<Outcome> {
    let s = cfg_s();
    let sp = s.spectral();
    // Samples uniform in ln x, so the tail half is ln x ≥ half the range.
    let ln_grid = |hi: f64| (0..200).map(move |i| 10f64.ln() + (hi - 10f64.ln()) * i as f64 / 199.0);
    let first = ln_grid(290.0 * std::f64::consts::LN_10)
        .map(|ln_x| Ok((ln_x, -sp.ln_n_at(-ln_x)?)))
        .collect::<Result<Vec<_>>>()?;
    let o1 = order_of(&first)?;
    let sa = cfg_sa();
    let prof = sa.profile();
    let top = sa.tower().ln_volume(9_000);
    let second = ln_grid(top)
        .map(|ln_x| Ok((ln_x, prof.ln_t_of(ln_x)?)))
        .collect::<Result<Vec<_>>>()?;
    let o2 = order_of(&second)?;
    let ok1 = o1.lower >= 0.85 && o1.upper <= 1.15;
    let ok2 = o2.lower >= -0.1 && o2.upper <= 0.0;
    outcome(
        ok1 && ok2,
        format!(
            "order of 1/N(1/x) ∈ [{:.4}, {:.4}]; order of the profile lower edge under geometric S_∞ ∈ [{:.4}, {:.4}]",
            o1.lower, o1.upper, o2.lower, o2.upper
        ),
    )
}

fn mean_displacement_band() -> Result<Outcome> {
    let g = cfg_g();
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for alpha in [0.25, 0.5, 0.75, 0.9] {
        for n in [10usize, 100, 1000, 10_000] {
            let v = mean_displacement(&g, alpha, n, DisplacementMode::Exact)?
                .value()
                .expect("finite for alpha < 1");
            let s = v * (1.0 - alpha) / (n as f64).powf(alpha);
            lo = lo.min(s);
            hi = hi.max(s);
        }
    }
    let divergent = mean_displacement(&g, 1.0, 100, DisplacementMode::Exact)? == Displacement::Divergent;
    outcome(
        hi / lo <= 10.0 && divergent,
        format!("M(1-α)/n^α ∈ [{lo:.3}, {hi:.3}], ratio {:.2}; α = 1 divergent: {divergent}", hi / lo),
    )
}

fn designer_contracts() -> Result<Outcome> {
    let tower = Tower::powers_of_two();
    let grid = [1e2, 1e3, 1e4, 1e5];
    let fast = design_fast_decay(&tower, DecayTarget::LogPower { beta: 1.0 }, &grid)?;
    let slow = design_slow_decay(&tower, DecayTarget::Power { beta: 0.5 }, &grid)?;
    let fmt = |r: &[f64]| r.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join(" ");
    outcome(
        fast.check.holds() && slow.check.holds(),
        format!("-ln p/ln n: {}; -ln p/√n: {}", fmt(&fast.check.ratios), fmt(&slow.check.ratios)),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Result<Outcome>); 12] = [
        ("oracle equivalence", oracle_equivalence),
        ("semigroup law", semigroup_law),
        ("exact spectral identities", spectral_identities),
        ("Faber-Krahn property", faber_krahn),
        ("polynomial return regime", polynomial_regime),
        ("heat-kernel shape", heat_kernel_shape),
        ("recurrence dichotomy", recurrence_dichotomy),
        ("Monte-Carlo agreement", monte_carlo_agreement),
        ("transform suite", transform_suite),
        ("order estimates", order_estimates),
        ("mean displacement", mean_displacement_band),
        ("designer contracts", designer_contracts),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let (pass, detail) = match check() {
            Ok(o) => (o.pass, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        if !pass {
            failed += 1;
        }
        println!("{} {:>2} {name}: {detail}", if pass { "PASS" } else { "FAIL" }, i + 1);
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
