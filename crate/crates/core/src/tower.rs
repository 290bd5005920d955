//! Increasing towers of finite groups `G_0 = {e} ⊂ G_1 ⊂ ...`, their exact
//! volumes, concrete element arithmetic and the ultra-metric induced by a
//! coefficient sequence.

use std::fmt;

use num_bigint::BigUint;
use num_traits::One;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::CoefficientSequence;
use crate::numeric::ln_factorial;

/// Default bound on the number of levels any computation may touch.
pub const DEFAULT_LEVEL_CAP: usize = 10_000;

/// Shape of the tower.
///
/// `Factorial` is the finitary symmetric group with `G_k = S_{k+1}`, so
/// `v_k = (k+1)!` and every index `v_{k+1}/v_k = k+2` is at least two.
/// `CustomVolumes` is `⊕ Z(m_i)` where the indices `m_i` repeat cyclically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TowerKind {
    PowersOfTwo,
    Factorial,
    CustomVolumes { indices: Vec<u32> },
    FiniteTruncated { base: Box<TowerKind>, level: usize },
}

impl TowerKind {
    fn base(&self) -> &TowerKind {
        match self {
            TowerKind::FiniteTruncated { base, .. } => base,
            other => other,
        }
    }

    /// `ln v_k` as a closed form valid for every `k`.
    pub fn ln_volume(&self, k: usize) -> f64 {
        match self.base() {
            TowerKind::PowersOfTwo => k as f64 * std::f64::consts::LN_2,
            TowerKind::Factorial => ln_factorial(k as u64 + 1),
            TowerKind::CustomVolumes { indices } => {
                let period: f64 = indices.iter().map(|&m| (m as f64).ln()).sum();
                let full = k / indices.len();
                let rest: f64 = indices[..k % indices.len()].iter().map(|&m| (m as f64).ln()).sum();
                full as f64 * period + rest
            }
            TowerKind::FiniteTruncated { .. } => unreachable!("nested truncation rejected"),
        }
    }

    /// Index `[G_{k+1} : G_k]`.
    pub fn index(&self, k: usize) -> u64 {
        match self.base() {
            TowerKind::PowersOfTwo => 2,
            TowerKind::Factorial => k as u64 + 2,
            TowerKind::CustomVolumes { indices } => indices[k % indices.len()] as u64,
            TowerKind::FiniteTruncated { .. } => unreachable!("nested truncation rejected"),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            TowerKind::CustomVolumes { indices } => {
                if indices.is_empty() {
                    return Err(Error::InvalidTower("custom index list is empty".into()));
                }
                if let Some(m) = indices.iter().find(|&&m| m < 2) {
                    return Err(Error::InvalidTower(format!(
                        "subgroup index {m} < 2 (v_{{k+1}} >= 2 v_k required)"
                    )));
                }
                Ok(())
            }
            TowerKind::FiniteTruncated { base, .. } => match **base {
                TowerKind::FiniteTruncated { .. } => {
                    Err(Error::InvalidTower("nested truncation".into()))
                }
                ref b => b.validate(),
            },
            _ => Ok(()),
        }
    }
}

/// An immutable tower with a hard cap on materialized levels.
#[derive(Debug, Clone, PartialEq)]
pub struct Tower {
    kind: TowerKind,
    cap: usize,
}

impl Tower {
    pub fn new(kind: TowerKind) -> Result<Self> {
        Self::with_cap(kind, DEFAULT_LEVEL_CAP)
    }

    pub fn with_cap(kind: TowerKind, cap: usize) -> Result<Self> {
        kind.validate()?;
        Ok(Self { kind, cap })
    }

    pub fn powers_of_two() -> Self {
        Self { kind: TowerKind::PowersOfTwo, cap: DEFAULT_LEVEL_CAP }
    }

    pub fn factorial() -> Self {
        Self { kind: TowerKind::Factorial, cap: DEFAULT_LEVEL_CAP }
    }

    /// Freezes this tower at level `level` (`G = G_level`).
    pub fn truncated(&self, level: usize) -> Self {
        let base = self.kind.base().clone();
        Self {
            kind: TowerKind::FiniteTruncated { base: Box::new(base), level },
            cap: self.cap,
        }
    }

    pub fn kind(&self) -> &TowerKind {
        &self.kind
    }

    pub fn cap(&self) -> usize {
        self.cap
    }

    /// Top level for truncated towers.
    pub fn truncation(&self) -> Option<usize> {
        match self.kind {
            TowerKind::FiniteTruncated { level, .. } => Some(level),
            _ => None,
        }
    }

    /// Largest level computations may reach.
    pub fn max_level(&self) -> usize {
        self.truncation().map_or(self.cap, |t| t.min(self.cap))
    }

    pub fn check_level(&self, k: usize) -> Result<()> {
        if let Some(max) = self.truncation() {
            if k > max {
                return Err(Error::BeyondTruncation { level: k, max });
            }
        }
        if k > self.cap {
            return Err(Error::LevelCap { level: k, cap: self.cap });
        }
        Ok(())
    }

    pub fn ln_volume(&self, k: usize) -> f64 {
        self.kind.ln_volume(k)
    }

    /// `v_k` as a float (may be `inf` for deep levels); exact while `v_k < 2^53`.
    pub fn volume_f64(&self, k: usize) -> f64 {
        if k <= 170 {
            (0..k).fold(1.0, |acc, i| acc * self.index(i) as f64)
        } else {
            self.ln_volume(k).exp()
        }
    }

    pub fn index(&self, k: usize) -> u64 {
        self.kind.index(k)
    }

    /// Exact `v_k`.
    pub fn volume(&self, k: usize) -> Result<BigUint> {
        self.check_level(k)?;
        Ok((0..k).fold(BigUint::one(), |acc, i| acc * self.index(i)))
    }

    /// `v_k` as `usize` when it fits (used by the dense oracle).
    pub fn volume_usize(&self, k: usize) -> Result<usize> {
        let v = self.volume(k)?;
        usize::try_from(v).map_err(|_| Error::Unsupported(format!("|G_{k}| does not fit in usize")))
    }

    fn label(&self) -> &'static str {
        payload_label(self.kind.base())
    }

    pub fn identity(&self) -> GroupElement {
        let payload = match self.kind.base() {
            TowerKind::PowersOfTwo => Payload::Bits(Vec::new()),
            TowerKind::Factorial => Payload::Perm(Vec::new()),
            _ => Payload::Digits(Vec::new()),
        };
        GroupElement { payload, min_level: 0 }
    }

    fn check_element(&self, x: &GroupElement) -> Result<()> {
        if x.payload.label() != self.label() {
            return Err(Error::MixedTowers { left: self.label(), right: x.payload.label() });
        }
        if let Payload::Digits(d) = &x.payload {
            for (i, &digit) in d.iter().enumerate() {
                if digit as u64 >= self.index(i) {
                    return Err(Error::InvalidTower(format!(
                        "digit {digit} at coordinate {i} exceeds modulus {}",
                        self.index(i)
                    )));
                }
            }
        }
        self.check_level(x.min_level)
    }

    pub fn multiply(&self, a: &GroupElement, b: &GroupElement) -> Result<GroupElement> {
        self.check_element(a)?;
        self.check_element(b)?;
        Ok(match (&a.payload, &b.payload) {
            (Payload::Bits(x), Payload::Bits(y)) => {
                let n = x.len().max(y.len());
                let words = (0..n)
                    .map(|i| x.get(i).copied().unwrap_or(0) ^ y.get(i).copied().unwrap_or(0))
                    .collect();
                GroupElement::from_payload(Payload::Bits(words))
            }
            (Payload::Perm(x), Payload::Perm(y)) => {
                let n = x.len().max(y.len());
                let at = |p: &[u32], i: u32| p.get(i as usize).copied().unwrap_or(i);
                let images = (0..n as u32).map(|i| at(x, at(y, i))).collect();
                GroupElement::from_payload(Payload::Perm(images))
            }
            (Payload::Digits(x), Payload::Digits(y)) => {
                let n = x.len().max(y.len());
                let digits = (0..n)
                    .map(|i| {
                        let m = self.index(i);
                        let s = x.get(i).copied().unwrap_or(0) as u64 + y.get(i).copied().unwrap_or(0) as u64;
                        (s % m) as u32
                    })
                    .collect();
                GroupElement::from_payload(Payload::Digits(digits))
            }
            _ => unreachable!("payload kinds checked"),
        })
    }

    pub fn inverse(&self, a: &GroupElement) -> Result<GroupElement> {
        self.check_element(a)?;
        Ok(match &a.payload {
            Payload::Bits(_) => a.clone(),
            Payload::Perm(p) => {
                let mut inv = vec![0u32; p.len()];
                for (i, &img) in p.iter().enumerate() {
                    inv[img as usize] = i as u32;
                }
                GroupElement::from_payload(Payload::Perm(inv))
            }
            Payload::Digits(d) => {
                let digits = d
                    .iter()
                    .enumerate()
                    .map(|(i, &x)| ((self.index(i) - x as u64) % self.index(i)) as u32)
                    .collect();
                GroupElement::from_payload(Payload::Digits(digits))
            }
        })
    }

    /// Exactly uniform sample from `G_k`.
    pub fn sample_uniform<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> Result<GroupElement> {
        self.check_level(k)?;
        let payload = match self.kind.base() {
            TowerKind::PowersOfTwo => {
                let mut words: Vec<u64> = (0..k.div_ceil(64)).map(|_| rng.random()).collect();
                if k % 64 != 0 {
                    if let Some(last) = words.last_mut() {
                        *last &= (1u64 << (k % 64)) - 1;
                    }
                }
                Payload::Bits(words)
            }
            TowerKind::Factorial => {
                let n = k + 1;
                let mut p: Vec<u32> = (0..n as u32).collect();
                for i in (1..n).rev() {
                    let j = rng.random_range(0..=i);
                    p.swap(i, j);
                }
                Payload::Perm(p)
            }
            _ => Payload::Digits((0..k).map(|i| rng.random_range(0..self.index(i)) as u32).collect()),
        };
        Ok(GroupElement::from_payload(payload))
    }

    /// Position of `x` in the canonical enumeration of `G_level`
    /// (binary value, Lehmer code, or mixed-radix value).
    pub fn rank(&self, x: &GroupElement, level: usize) -> Result<usize> {
        self.check_element(x)?;
        if x.min_level > level {
            return Err(Error::Enumeration(format!(
                "element of level {} outside G_{level}",
                x.min_level
            )));
        }
        Ok(match &x.payload {
            Payload::Bits(w) => w.first().copied().unwrap_or(0) as usize,
            Payload::Perm(p) => {
                let n = level + 1;
                let at = |i: usize| p.get(i).copied().unwrap_or(i as u32);
                let mut r = 0usize;
                for i in 0..n {
                    let smaller = (i + 1..n).filter(|&j| at(j) < at(i)).count();
                    r = r * (n - i) + smaller;
                }
                r
            }
            Payload::Digits(d) => {
                let mut r = 0usize;
                for i in (0..level).rev() {
                    r = r * self.index(i) as usize + d.get(i).copied().unwrap_or(0) as usize;
                }
                r
            }
        })
    }

    /// Inverse of [`Tower::rank`].
    pub fn unrank(&self, level: usize, mut r: usize) -> Result<GroupElement> {
        self.check_level(level)?;
        let payload = match self.kind.base() {
            TowerKind::PowersOfTwo => {
                if level > 63 {
                    return Err(Error::Unsupported("enumeration beyond 2^63 elements".into()));
                }
                Payload::Bits(vec![r as u64])
            }
            TowerKind::Factorial => {
                let n = level + 1;
                let mut code = vec![0usize; n];
                for i in (0..n).rev() {
                    let radix = n - i;
                    code[i] = r % radix;
                    r /= radix;
                }
                let mut pool: Vec<u32> = (0..n as u32).collect();
                Payload::Perm(code.into_iter().map(|c| pool.remove(c)).collect())
            }
            _ => Payload::Digits(
                (0..level)
                    .map(|i| {
                        let m = self.index(i) as usize;
                        let d = r % m;
                        r /= m;
                        d as u32
                    })
                    .collect(),
            ),
        };
        Ok(GroupElement::from_payload(payload))
    }
}

fn payload_label(kind: &TowerKind) -> &'static str {
    match kind {
        TowerKind::PowersOfTwo => "Z(2)^inf",
        TowerKind::Factorial => "S_inf",
        _ => "mixed-radix",
    }
}

/// Tower-specific element data in canonical (trailing-identity-stripped) form.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Payload {
    /// Coordinates of `Z(2)^∞`; bit `i` is the coordinate entering at level `i+1`.
    Bits(Vec<u64>),
    /// Zero-based image list of a finitary permutation.
    Perm(Vec<u32>),
    /// Mixed-radix digits; digit `i` enters at level `i+1`.
    Digits(Vec<u32>),
}

impl Payload {
    fn label(&self) -> &'static str {
        match self {
            Payload::Bits(_) => "Z(2)^inf",
            Payload::Perm(_) => "S_inf",
            Payload::Digits(_) => "mixed-radix",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GroupElement {
    payload: Payload,
    min_level: usize,
}

impl GroupElement {
    fn from_payload(mut payload: Payload) -> Self {
        let min_level = match &mut payload {
            Payload::Bits(w) => {
                while w.last() == Some(&0) {
                    w.pop();
                }
                w.last().map_or(0, |&top| 64 * (w.len() - 1) + 64 - top.leading_zeros() as usize)
            }
            Payload::Perm(p) => {
                while let Some(&last) = p.last() {
                    if last as usize == p.len() - 1 {
                        p.pop();
                    } else {
                        break;
                    }
                }
                p.len().saturating_sub(1)
            }
            Payload::Digits(d) => {
                while d.last() == Some(&0) {
                    d.pop();
                }
                d.len()
            }
        };
        Self { payload, min_level }
    }

    /// Element of `Z(2)^∞` from a coordinate string such as `"1011"`
    /// (first character is the level-1 coordinate).
    pub fn from_bit_str(s: &str) -> Result<Self> {
        let mut words = vec![0u64; s.len().div_ceil(64)];
        for (i, ch) in s.chars().enumerate() {
            match ch {
                '0' => {}
                '1' => words[i / 64] |= 1 << (i % 64),
                _ => return Err(Error::Domain(format!("bad coordinate character {ch:?}"))),
            }
        }
        Ok(Self::from_payload(Payload::Bits(words)))
    }

    /// Permutation from a one-based image list, e.g. `[2, 1]` for a transposition.
    pub fn from_images(images: &[u32]) -> Result<Self> {
        let n = images.len();
        let mut seen = vec![false; n];
        for &i in images {
            if i == 0 || i as usize > n || seen[i as usize - 1] {
                return Err(Error::Domain(format!("{images:?} is not a permutation of 1..={n}")));
            }
            seen[i as usize - 1] = true;
        }
        Ok(Self::from_payload(Payload::Perm(images.iter().map(|i| i - 1).collect())))
    }

    pub fn from_digits(digits: &[u32]) -> Self {
        Self::from_payload(Payload::Digits(digits.to_vec()))
    }

    pub fn payload(&self) -> &Payload {
        &self.payload
    }

    /// Smallest `k` with `x ∈ G_k`.
    pub fn min_level(&self) -> usize {
        self.min_level
    }

    pub fn is_identity(&self) -> bool {
        self.min_level == 0
    }
}

impl fmt::Display for GroupElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.payload {
            Payload::Bits(_) => {
                write!(f, "(")?;
                for i in 0..self.min_level {
                    let Payload::Bits(w) = &self.payload else { unreachable!() };
                    write!(f, "{}", (w[i / 64] >> (i % 64)) & 1)?;
                }
                write!(f, ")")
            }
            Payload::Perm(p) => {
                let s: Vec<String> = p.iter().map(|i| (i + 1).to_string()).collect();
                write!(f, "({})", s.join(" "))
            }
            Payload::Digits(d) => {
                let s: Vec<String> = d.iter().map(u32::to_string).collect();
                write!(f, "[{}]", s.join(","))
            }
        }
    }
}

/// Radius of the ball `G_k`: `r_k = 1/σ(k-1) - 1` (`r_0 = 0`).
pub fn ball_radius(seq: &CoefficientSequence, k: usize) -> f64 {
    if k == 0 {
        return 0.0;
    }
    let tail = seq.tail(k as i64 - 1);
    if tail > 0.0 && tail <= 0.5 {
        // Exact for dyadic tails, so `1/(1+r_k)` lands back on `σ(k-1)`.
        1.0 / tail - 1.0
    } else {
        (-seq.ln_tail(k as i64 - 1)).exp_m1()
    }
}

/// `|x|_σ`.
pub fn sigma_value(x: &GroupElement, seq: &CoefficientSequence) -> f64 {
    ball_radius(seq, x.min_level())
}

/// Ultra-metric `ρ(x, y) = |x⁻¹y|_σ`.
pub fn distance(tower: &Tower, x: &GroupElement, y: &GroupElement, seq: &CoefficientSequence) -> Result<f64> {
    let z = tower.multiply(&tower.inverse(x)?, y)?;
    Ok(sigma_value(&z, seq))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BallDescriptor {
    pub center: GroupElement,
    pub level: usize,
    pub radius: f64,
    pub volume: BigUint,
}

/// Largest level `k` with `r_k ≤ r`.
pub fn ball_level(tower: &Tower, seq: &CoefficientSequence, r: f64) -> Result<usize> {
    if !(r >= 0.0) || r.is_infinite() {
        return Err(Error::Domain(format!("ball radius must be finite and >= 0, got {r}")));
    }
    let max = tower.max_level();
    let fits = |k: usize| ball_radius(seq, k) <= r;
    let mut hi = 1usize;
    while hi <= max && fits(hi) {
        hi = hi.saturating_mul(2);
    }
    if hi > max && fits(max) {
        return match tower.truncation() {
            Some(t) if t <= tower.cap() => Ok(t),
            _ => Err(Error::LevelCap { level: max + 1, cap: tower.cap() }),
        };
    }
    let mut lo = hi / 2;
    let mut hi = hi.min(max);
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if fits(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(if fits(hi) { hi } else { lo })
}

pub fn ball(tower: &Tower, seq: &CoefficientSequence, center: GroupElement, r: f64) -> Result<BallDescriptor> {
    let level = ball_level(tower, seq, r)?;
    Ok(BallDescriptor { center, level, radius: ball_radius(seq, level), volume: tower.volume(level)? })
}

pub fn ball_volume(tower: &Tower, seq: &CoefficientSequence, r: f64) -> Result<BigUint> {
    tower.volume(ball_level(tower, seq, r)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn volumes() {
        let z = Tower::powers_of_two();
        assert_eq!(z.volume(0).unwrap(), BigUint::from(1u32));
        assert_eq!(z.volume(10).unwrap(), BigUint::from(1024u32));
        let s = Tower::factorial();
        assert_eq!(s.volume(4).unwrap(), BigUint::from(120u32));
        assert_eq!(s.volume(3).unwrap(), BigUint::from(24u32));
        assert!(matches!(z.volume(10_001), Err(Error::LevelCap { .. })));
        let c = Tower::new(TowerKind::CustomVolumes { indices: vec![2, 3] }).unwrap();
        assert_eq!(c.volume(3).unwrap(), BigUint::from(12u32));
        assert!((c.ln_volume(3) - 12f64.ln()).abs() < 1e-14);
        assert!(Tower::new(TowerKind::CustomVolumes { indices: vec![1] }).is_err());
    }

    #[test]
    fn bit_arithmetic() {
        let z = Tower::powers_of_two();
        let a = GroupElement::from_bit_str("1011").unwrap();
        assert!(z.multiply(&a, &a).unwrap().is_identity());
        let x = GroupElement::from_bit_str("1").unwrap();
        let y = GroupElement::from_bit_str("01").unwrap();
        let p = z.multiply(&x, &y).unwrap();
        assert_eq!(p, GroupElement::from_bit_str("11").unwrap());
        assert_eq!(p.min_level(), 2);
        assert_eq!(GroupElement::from_bit_str("0100").unwrap().min_level(), 2);
    }

    #[test]
    fn perm_arithmetic() {
        let s = Tower::factorial();
        let t = GroupElement::from_images(&[2, 1]).unwrap();
        assert_eq!(t.min_level(), 1);
        assert!(s.multiply(&t, &t).unwrap().is_identity());
        let c = GroupElement::from_images(&[2, 3, 1]).unwrap();
        let ci = s.inverse(&c).unwrap();
        assert!(s.multiply(&c, &ci).unwrap().is_identity());
        assert_eq!(GroupElement::from_images(&[1, 2, 3]).unwrap().min_level(), 0);
        assert!(matches!(
            s.multiply(&t, &GroupElement::from_bit_str("1").unwrap()),
            Err(Error::MixedTowers { .. })
        ));
    }

    #[test]
    fn rank_round_trip() {
        for tower in [
            Tower::powers_of_two(),
            Tower::factorial(),
            Tower::new(TowerKind::CustomVolumes { indices: vec![3, 2] }).unwrap(),
        ] {
            let n = tower.volume_usize(4).unwrap();
            for r in 0..n {
                let x = tower.unrank(4, r).unwrap();
                assert_eq!(tower.rank(&x, 4).unwrap(), r);
            }
            assert!(tower.unrank(4, 0).unwrap().is_identity());
        }
    }

    #[test]
    fn truncation_is_enforced() {
        let t = Tower::powers_of_two().truncated(3);
        let x = GroupElement::from_bit_str("0001").unwrap();
        assert!(matches!(t.multiply(&x, &x), Err(Error::BeyondTruncation { level: 4, max: 3 })));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(t.sample_uniform(4, &mut rng).is_err());
    }

    #[test]
    fn sampler_stays_in_level() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let z = Tower::powers_of_two();
        for _ in 0..200 {
            assert!(z.sample_uniform(70, &mut rng).unwrap().min_level() <= 70);
            assert!(z.sample_uniform(0, &mut rng).unwrap().is_identity());
        }
    }
}
