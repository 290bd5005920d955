use std::fs;
use std::path::Path;

use ultrawalk::numeric::least_squares;
use ultrawalk::spectral::classify_recurrence;
use ultrawalk::tower::ball_radius;
use ultrawalk::transforms::{design_fast_decay, design_slow_decay, Monotone, Curvature, Table1};
use ultrawalk::walk::{exact_exit_mass, simulate};
use ultrawalk::{conjugate_legendre, kohlbecker, legendre, Family, ScalarFunction, Verdict};

use crate::config::{DesignMode, RunConfig};
use crate::error::CliError;
use crate::output::{Cell, Table};

/// Columns: `level, lambda, n, n_left`, with `n = N(λ_k) = 1/v_k`.
pub fn spectrum(cfg: &RunConfig) -> Result<Table, CliError> {
    let model = cfg.model()?;
    let sp = model.spectral();
    let levels = cfg.grids.levels.min(model.tower().max_level());
    let spectrum = sp.spectrum_points(levels)?;
    let mut table = Table::new(&["level", "lambda", "n", "n_left"]);
    for (k, &lambda) in spectrum.points.iter().enumerate() {
        if lambda == 0.0 {
            break;
        }
        table.push(vec![k.into(), lambda.into(), sp.n_at(lambda)?.into(), sp.n_left(lambda)?.into()]);
    }
    table.note("accumulates_at_zero", spectrum.accumulates_at_zero);
    table.note("sequence", model.seq().label());
    Ok(table)
}

/// Columns: `t, p, tail_bound, rate, convolution_power_bound`, with `rate = -ln p(t)/t`.
pub fn return_probability(cfg: &RunConfig) -> Result<Table, CliError> {
    let model = cfg.model()?;
    let sp = model.spectral();
    let ts = cfg.grids.t.values();
    let mut table = Table::new(&["t", "p", "tail_bound", "rate", "convolution_power_bound"]);
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for &t in &ts {
        let p = sp.return_probability(t)?;
        let ln_p = sp.ln_return_probability(t)?;
        xs.push(t.ln());
        ys.push(ln_p);
        let bound = sp.convolution_power_bound(t)?;
        table.push(vec![t.into(), p.value.into(), p.tail_bound.into(), (-ln_p / t).into(), bound.value.into()]);
    }
    if ts.len() >= 2 {
        let (slope, intercept) = least_squares(&xs, &ys);
        table.note("loglog_slope", slope);
        table.note("loglog_intercept", intercept);
        table.note("fit_grid", format!("{} points on [{}, {}]", ts.len(), ts[0], ts[ts.len() - 1]));
    }
    Ok(table)
}

/// Columns: `u, t, lambda_f`, the isospectral profile `T(u)` and the Følner bound `Λ_F(u)`.
pub fn profile(cfg: &RunConfig) -> Result<Table, CliError> {
    let model = cfg.model()?;
    let prof = model.profile();
    let band = prof.band(cfg.grids.levels)?;
    let mut table = Table::new(&["u", "t", "lambda_f"]);
    for u in cfg.grids.u.values() {
        let upper = band.upper(u).ok();
        table.push(vec![u.into(), prof.t_of(u)?.into(), upper.into()]);
    }
    let cond = model.seq().condition_a(cfg.grids.horizon);
    table.note("condition_a_holds", cond.holds);
    table.note("condition_a_lambda", cond.lambda);
    table.note("condition_a_analytic", cond.analytic);
    table.note("condition_a_horizon", cond.horizon);
    table.note("folner_knots", band.knots().len());
    Ok(table)
}

/// Columns: `t, level, rho, h, lower, upper, within`.
pub fn heat(cfg: &RunConfig) -> Result<Table, CliError> {
    let model = cfg.model()?;
    let sp = model.spectral();
    let levels = cfg.grids.levels.min(model.tower().max_level());
    let mut table = Table::new(&["t", "level", "rho", "h", "lower", "upper", "within"]);
    let mut violations = 0usize;
    let mut band_constants = None;
    for t in cfg.grids.t.values() {
        for k in 0..=levels {
            if model.seq().ln_tail(k as i64 - 1) == f64::NEG_INFINITY {
                break;
            }
            let rho = ball_radius(model.seq(), k);
            let h = sp.heat_kernel_at_level(t, k)?.value;
            let (lower, upper) = if t >= 1.0 {
                let band = sp.heat_kernel_bounds(t, rho)?;
                band_constants.get_or_insert((band.delta, band.diagonal_constant, band.upper_constant));
                (Some(band.lower), Some(band.upper))
            } else {
                (None, None)
            };
            let within = lower.zip(upper).map(|(l, u)| l <= h && h <= u);
            violations += usize::from(within == Some(false));
            table.push(vec![t.into(), k.into(), rho.into(), h.into(), lower.into(), upper.into(), within.into()]);
        }
    }
    if let Some((delta, c0, cu)) = band_constants {
        table.note("band_delta", delta);
        table.note("band_diagonal_constant", c0);
        table.note("band_upper_constant", cu);
    }
    table.note("band_violations", violations);
    Ok(table)
}

/// Columns: `n, quantity, level, empirical, exact, ci_low, ci_high, z`.
///
/// `quantity` is `return` for `P(X(n) = e)` and `exit` for `P(X(n) ∉ G_k)`;
/// the interval is the 95% normal interval around the empirical frequency
/// and `z` is measured in binomial standard deviations of the exact value.
pub fn walk(cfg: &RunConfig) -> Result<Table, CliError> {
    let model = cfg.model()?;
    let g = &cfg.grids;
    let stats = simulate(&model, g.walks, &g.steps, cfg.seed)?;
    let w = g.walks as f64;
    let mut table = Table::new(&["n", "quantity", "level", "empirical", "exact", "ci_low", "ci_high", "z"]);
    let mut worst = 0.0f64;
    let mut row = |table: &mut Table, n: usize, what: &str, k: usize, emp: f64, exact: f64| {
        let half = 1.96 * (emp * (1.0 - emp) / w).sqrt();
        let sd = (exact * (1.0 - exact) / w).sqrt();
        let z = if sd > 0.0 { (emp - exact) / sd } else if emp == exact { 0.0 } else { f64::INFINITY };
        worst = worst.max(z.abs());
        table.push(vec![n.into(), what.into(), k.into(), emp.into(), exact.into(), (emp - half).into(), (emp + half).into(), z.into()]);
    };
    for (i, &n) in g.steps.iter().enumerate() {
        let p = model.spectral().return_probability(n as f64)?.value;
        row(&mut table, n, "return", 0, stats.return_frequency(i), p);
        for k in 0..=g.walk_levels.min(model.tower().max_level()) {
            let exact = exact_exit_mass(&model, n as f64, k)?.exact.value;
            row(&mut table, n, "exit", k, stats.exit_frequency(i, k), exact);
        }
    }
    table.note("walks", g.walks);
    table.note("max_abs_z", worst);
    Ok(table)
}

/// Columns: `level, tail_term, lawler_term`; the verdict and partial sums go to the notes.
pub fn recurrence(cfg: &RunConfig) -> Result<(Table, Verdict), CliError> {
    let model = cfg.model()?;
    let report = classify_recurrence(&model, cfg.grids.horizon)?;
    let mut table = Table::new(&["level", "tail_term", "lawler_term"]);
    for term in &report.terms {
        table.push(vec![term.level.into(), term.tail_term.into(), term.lawler_term.into()]);
    }
    table.note("verdict", format!("{:?}", report.verdict));
    table.note("analytic", report.analytic);
    table.note("reason", &report.reason);
    table.note("trend", format!("{:?}", report.trend));
    table.note("trend_ratio", report.trend_ratio);
    let sums: Vec<String> = report.partial_sums.iter().map(|(n, s)| format!("{n:e}:{s}")).collect();
    table.note("partial_sums", sums.join(" "));
    Ok((table, report.verdict))
}

/// Columns: `n, f, neg_ln_p, ratio`, with `ratio = -ln p(n)/F(n)`.
/// Writes the designed family to `out` when given.
pub fn design(cfg: &RunConfig, out: Option<&Path>) -> Result<(Table, bool), CliError> {
    let tower = cfg.tower()?;
    let spec = &cfg.grids.design;
    let d = match spec.mode {
        DesignMode::Fast => design_fast_decay(&tower, spec.target, &spec.n)?,
        DesignMode::Slow => design_slow_decay(&tower, spec.target, &spec.n)?,
    };
    let mut table = Table::new(&["n", "f", "neg_ln_p", "ratio"]);
    for (&n, &r) in d.check.grid.iter().zip(&d.check.ratios) {
        let f = spec.target.eval(n);
        table.push(vec![n.into(), f.into(), (r * f).into(), r.into()]);
    }
    let holds = d.check.holds();
    table.note("k0", d.k0);
    table.note("direction", format!("{:?}", d.check.direction));
    table.note("trend_holds", holds);
    table.note("sequence", d.seq.label());
    if let Some(path) = out {
        let family: Family = d.seq.family().clone();
        let json = serde_json::to_string_pretty(&family).expect("family serializes");
        fs::write(path, json + "\n")?;
        table.note("coefficient_file", path.display());
    }
    Ok((table, holds))
}

/// Columns: `x, legendre, kohlbecker, reference, legendre_over_reference,
/// kohlbecker_over_legendre, s, m, conjugate_of_reference`, where `s = 1/x`,
/// `m = M(s)` and the last column is `L*(F)(s)` for `F` the reference column.
pub fn transform(cfg: &RunConfig) -> Result<Table, CliError> {
    let spec = &cfg.grids.transform;
    let rate: Table1 = spec.rate;
    let m = rate.rate()?;
    let reference = ScalarFunction::on("reference", Monotone::Unknown, Curvature::Unknown, (1e-12, 1e12), move |t| {
        rate.reference(t)
    })?;
    let mut table = Table::new(&[
        "x",
        "legendre",
        "kohlbecker",
        "reference",
        "legendre_over_reference",
        "kohlbecker_over_legendre",
        "s",
        "m",
        "conjugate_of_reference",
    ]);
    for x in spec.x.values() {
        let l = legendre(&m, x).ok();
        let k = kohlbecker(&m, x).ok();
        let r = rate.reference(x);
        let s = 1.0 / x;
        let lstar = conjugate_legendre(&reference, s).ok();
        table.push(vec![
            x.into(),
            l.into(),
            k.into(),
            r.into(),
            l.map(|l| l / r).into(),
            k.zip(l).map(|(k, l)| k / l).into(),
            s.into(),
            m.call(s).into(),
            lstar.into(),
        ]);
    }
    table.note("rate", m.label());
    let missing = table.rows().iter().flatten().filter(|c| **c == Cell::Missing).count();
    table.note("unconverged_cells", missing);
    Ok(table)
}
