//! Small numerical kernels shared by the analytic modules: compensated and
//! log-domain summation, iterated logarithms, 1-D search and quadrature.

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = Self::new();
        for x in iter {
            s.add(x);
        }
        s
    }
}

/// Running sum of `exp(ln_x)` terms, kept in log form so that terms far below
/// the smallest normal double still contribute.
#[derive(Debug, Clone, Copy)]
pub struct LogSum {
    max: f64,
    scaled: f64,
}

impl Default for LogSum {
    fn default() -> Self {
        Self { max: f64::NEG_INFINITY, scaled: 0.0 }
    }
}

impl LogSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_ln(&mut self, ln_x: f64) {
        if ln_x == f64::NEG_INFINITY {
            return;
        }
        if ln_x > self.max {
            self.scaled = self.scaled * (self.max - ln_x).exp() + 1.0;
            self.max = ln_x;
        } else {
            self.scaled += (ln_x - self.max).exp();
        }
    }

    /// Natural log of the accumulated sum (`-inf` when empty).
    pub fn ln(&self) -> f64 {
        if self.max == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            self.max + self.scaled.ln()
        }
    }

    pub fn value(&self) -> f64 {
        self.ln().exp()
    }
}

/// `ln(1 - e^x)` for `x <= 0`, accurate on both ends.
pub fn ln_one_minus_exp(x: f64) -> f64 {
    if x > -std::f64::consts::LN_2 {
        (-x.exp_m1()).ln()
    } else {
        (-x.exp()).ln_1p()
    }
}

/// `log(1 + log(1 + ... log(1 + t)))`, `depth` times.
pub fn log_iter(depth: u32, t: f64) -> f64 {
    (0..depth).fold(t, |acc, _| acc.ln_1p())
}

/// `exp(exp(... exp(t)))`, `depth` times.
pub fn exp_iter(depth: u32, t: f64) -> f64 {
    (0..depth).fold(t, |acc, _| acc.exp())
}

/// Golden-section search for the minimum of a unimodal `f` on `[a, b]`.
/// Returns `(argmin, min)`.
pub fn golden_min<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, rel_tol: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..400 {
        if (b - a).abs() <= rel_tol * (a.abs() + b.abs()) {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    if fc < fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Bisection for the root of a monotone `f` with `f(lo)` and `f(hi)` of
/// opposite sign. Stops when the bracket is below `rel_tol` relative width.
pub fn bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, rel_tol: f64) -> f64 {
    let f_lo = f(lo);
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if (hi - lo).abs() <= rel_tol * mid.abs().max(f64::MIN_POSITIVE) {
            return mid;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return mid;
        }
        if (fm < 0.0) == (f_lo < 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

const GK_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const GK_WEIGHTS: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728_8,
];
const G_WEIGHTS: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = fc * GK_WEIGHTS[7];
    let mut gauss = fc * G_WEIGHTS[3];
    for i in 0..7 {
        let x = h * GK_NODES[i];
        let s = f(c - x) + f(c + x);
        kron += GK_WEIGHTS[i] * s;
        if i % 2 == 1 {
            gauss += G_WEIGHTS[i / 2] * s;
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

/// Adaptive Gauss-Kronrod (7/15) quadrature. Returns `(value, error_estimate)`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> (f64, f64) {
    let mut stack = vec![(a, b, 0u32)];
    let mut total = CompensatedSum::new();
    let mut err = 0.0;
    let (whole, _) = gk15(&f, a, b);
    let scale = whole.abs();
    while let Some((lo, hi, depth)) = stack.pop() {
        let (val, e) = gk15(&f, lo, hi);
        let width_share = (hi - lo) / (b - a);
        if e <= (abs_tol.max(rel_tol * scale)) * width_share.max(1e-12) || depth >= 40 {
            total.add(val);
            err += e;
        } else {
            let mid = 0.5 * (lo + hi);
            stack.push((lo, mid, depth + 1));
            stack.push((mid, hi, depth + 1));
        }
    }
    (total.value(), err)
}

/// Ordinary least-squares slope and intercept of `y` on `x`.
pub fn least_squares(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (xi, yi) in x.iter().zip(y) {
        sxy += (xi - mx) * (yi - my);
        sxx += (xi - mx) * (xi - mx);
    }
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// `n` log-spaced points from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

/// `ln(n!)`, exact summation for small `n`, Stirling series beyond.
pub fn ln_factorial(n: u64) -> f64 {
    if n < 32 {
        return (2..=n).map(|i| (i as f64).ln()).sum();
    }
    let x = n as f64;
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    x * x.ln() - x + 0.5 * (std::f64::consts::TAU * x).ln()
        + inv * (1.0 / 12.0 - inv2 * (1.0 / 360.0 - inv2 * (1.0 / 1260.0 - inv2 / 1680.0)))
}

const BERNOULLI_EVEN: [f64; 7] = [
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
];

/// `ln ζ(s, a)` for the Hurwitz zeta function, `s > 1`, `a > 0`, by
/// Euler-Maclaurin summation after shifting `a` past 20.
pub fn ln_hurwitz_zeta(s: f64, a: f64) -> f64 {
    let shift = if a >= 20.0 { 0 } else { (20.0 - a).ceil() as usize };
    let b = a + shift as f64;
    // bracket = ζ(s, b) / b^(1-s)
    let mut bracket = 1.0 / (s - 1.0) + 0.5 / b;
    let mut rising = s;
    let mut fact = 2.0;
    let mut pow = 1.0 / (b * b);
    for (j, bern) in BERNOULLI_EVEN.iter().enumerate() {
        let j = j as f64 + 1.0;
        bracket += bern / fact * rising * pow;
        rising *= (s + 2.0 * j - 1.0) * (s + 2.0 * j);
        fact *= (2.0 * j + 1.0) * (2.0 * j + 2.0);
        pow /= b * b;
    }
    let mut acc = LogSum::new();
    acc.add_ln((1.0 - s) * b.ln() + bracket.ln());
    for n in 0..shift {
        acc.add_ln(-s * (a + n as f64).ln());
    }
    acc.ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let mut s = CompensatedSum::new();
        s.add(1.0);
        for _ in 0..1000 {
            s.add(1e-17);
        }
        s.add(-1.0);
        assert!((s.value() - 1e-14).abs() < 1e-26);
    }

    #[test]
    fn log_sum_handles_underflow() {
        let mut s = LogSum::new();
        s.add_ln(-1000.0);
        s.add_ln(-1000.0);
        assert!((s.ln() - (-1000.0 + 2f64.ln())).abs() < 1e-12);
        assert_eq!(LogSum::new().ln(), f64::NEG_INFINITY);
    }

    #[test]
    fn ln_one_minus_exp_both_regimes() {
        assert!((ln_one_minus_exp(-1e-20) - (1e-20f64).ln()).abs() < 1e-9);
        assert!((ln_one_minus_exp(-50.0) + (-50f64).exp()).abs() < 1e-30);
    }

    #[test]
    fn iterated_log_is_shifted() {
        assert_eq!(log_iter(2, 0.0), 0.0);
        assert!((log_iter(1, std::f64::consts::E - 1.0) - 1.0).abs() < 1e-15);
        assert!((exp_iter(2, 0.0) - std::f64::consts::E).abs() < 1e-15);
    }

    #[test]
    fn golden_and_bisect() {
        let (x, fx) = golden_min(|t| (t - 2.0).powi(2) + 1.0, 0.0, 5.0, 1e-12);
        assert!((x - 2.0).abs() < 1e-6 && (fx - 1.0).abs() < 1e-12);
        let r = bisect(|t| t * t - 2.0, 0.0, 2.0, 1e-14);
        assert!((r - 2f64.sqrt()).abs() < 1e-13);
    }

    #[test]
    fn factorial_and_zeta() {
        let direct: f64 = (2..=40u64).map(|i| (i as f64).ln()).sum();
        assert!((ln_factorial(40) - direct).abs() < 1e-12 * direct);
        assert_eq!(ln_factorial(0), 0.0);
        let z2 = ln_hurwitz_zeta(2.0, 1.0).exp();
        assert!((z2 - std::f64::consts::PI.powi(2) / 6.0).abs() < 1e-14);
        let direct: f64 = (0..200_000).map(|n| (n as f64 + 50.0).powf(-3.0)).sum::<f64>()
            + 0.5 * (200_050f64).powi(-2);
        assert!((ln_hurwitz_zeta(3.0, 50.0).exp() / direct - 1.0).abs() < 1e-10);
    }

    #[test]
    fn quadrature_exact_on_smooth() {
        let (v, _) = integrate(|t| (-t).exp(), 0.0, 50.0, 1e-14, 1e-13);
        assert!((v - (1.0 - (-50f64).exp())).abs() < 1e-12);
    }
}
