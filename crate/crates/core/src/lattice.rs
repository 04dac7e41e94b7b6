//! The hierarchical group: a direct sum of copies of `Z_n`, `n = L^4`, with the
//! ultrametric norm `|x| = L^N` where `N - 1` is the position of the highest
//! nonzero digit.

use std::cmp::Ordering;
use std::fmt;

use rand::{Rng, RngExt};
use smallvec::SmallVec;

use crate::error::{Error, Result};
use crate::free::jump_constant;

/// Default number of digit positions a [`Site`] may occupy.
pub const DEFAULT_MAX_DEPTH: usize = 64;

/// Lattice constants derived from the scale factor `L`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeParams {
    l: u32,
    n: u32,
    b: f64,
    c: f64,
    gamma: f64,
    max_depth: usize,
}

impl LatticeParams {
    pub fn new(l: u32) -> Result<Self> {
        Self::with_max_depth(l, DEFAULT_MAX_DEPTH)
    }

    pub fn with_max_depth(l: u32, max_depth: usize) -> Result<Self> {
        if l < 2 {
            return Err(Error::InvalidParameter(format!("L must be >= 2, got {l}")));
        }
        let n = l
            .checked_pow(4)
            .ok_or_else(|| Error::InvalidParameter(format!("L = {l} overflows n = L^4")))?;
        if max_depth == 0 {
            return Err(Error::InvalidParameter("max_depth must be positive".into()));
        }
        let lf = l as f64;
        let b = 1.0 - lf.powi(-4);
        let c = jump_constant(l);
        // shell_count(N) L^{-6N} = B L^{-2N}, summed over N >= 1.
        let gamma = c * b * lf.powi(-2) / (1.0 - lf.powi(-2));
        Ok(Self { l, n, b, c, gamma, max_depth })
    }

    /// Scale factor `L`.
    pub fn l(&self) -> u32 {
        self.l
    }

    pub fn l_f64(&self) -> f64 {
        self.l as f64
    }

    /// Branching number `n = L^4`.
    pub fn n(&self) -> u32 {
        self.n
    }

    /// `B = 1 - L^{-4}`.
    pub fn b(&self) -> f64 {
        self.b
    }

    /// Jump-rate constant `C` in the rate `C |x - y|^{-6}`.
    pub fn c(&self) -> f64 {
        self.c
    }

    /// Total jump rate out of a site.
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn max_depth(&self) -> usize {
        self.max_depth
    }

    /// Number of sites with norm exactly `L^level`, `(n - 1) n^{level - 1}`.
    /// `None` when the count does not fit in a `u128`.
    pub fn shell_count(&self, level: u32) -> Option<u128> {
        if level == 0 {
            return Some(1);
        }
        let n = self.n as u128;
        n.checked_pow(level - 1)?.checked_mul(n - 1)
    }

    /// `shell_count` as a float, `B L^{4 level}`; level 0 gives 1.
    pub fn shell_weight(&self, level: u32) -> f64 {
        if level == 0 {
            1.0
        } else {
            let n = self.n as f64;
            (n - 1.0) * n.powi(level as i32 - 1)
        }
    }

    /// Norm `L^level` of a site at the given level (0 for the origin).
    pub fn norm_of_level(&self, level: u32) -> f64 {
        if level == 0 {
            0.0
        } else {
            self.l_f64().powi(level as i32)
        }
    }

    /// Jump rate into the whole shell at `level`, `C shell_count L^{-6 level}`.
    pub fn shell_rate(&self, level: u32) -> f64 {
        debug_assert!(level >= 1);
        self.c * self.b * self.l_f64().powi(-2 * level as i32)
    }
}

/// A point of the hierarchical group.
///
/// Digits are stored least significant first with trailing (high) zeros
/// trimmed, so equality of the digit vectors is equality of sites.
#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct Site {
    digits: SmallVec<[u32; 8]>,
}

impl Site {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn from_digits(digits: &[u32], p: &LatticeParams) -> Result<Self> {
        if let Some(&d) = digits.iter().find(|&&d| d >= p.n) {
            return Err(Error::InvalidParameter(format!("digit {d} outside Z_{}", p.n)));
        }
        let mut site = Site { digits: SmallVec::from_slice(digits) };
        site.trim();
        if site.digits.len() > p.max_depth {
            return Err(Error::DepthOverflow { max_depth: p.max_depth });
        }
        Ok(site)
    }

    fn trim(&mut self) {
        while self.digits.last() == Some(&0) {
            self.digits.pop();
        }
    }

    /// Digits from position 0 upward, without trailing zeros.
    pub fn digits(&self) -> &[u32] {
        &self.digits
    }

    pub fn digit(&self, position: usize) -> u32 {
        self.digits.get(position).copied().unwrap_or(0)
    }

    /// `N(x)`: index of the highest nonzero digit plus one; 0 for the origin.
    pub fn level(&self) -> u32 {
        self.digits.len() as u32
    }

    pub fn is_zero(&self) -> bool {
        self.digits.is_empty()
    }

    pub fn norm(&self, p: &LatticeParams) -> f64 {
        p.norm_of_level(self.level())
    }

    /// Group law: componentwise addition mod `n`.
    pub fn add(&self, other: &Site, p: &LatticeParams) -> Site {
        self.combine(other, p, |a, b, n| (a + b) % n)
    }

    pub fn sub(&self, other: &Site, p: &LatticeParams) -> Site {
        self.combine(other, p, |a, b, n| (a + n - b) % n)
    }

    fn combine(&self, other: &Site, p: &LatticeParams, op: impl Fn(u32, u32, u32) -> u32) -> Site {
        let len = self.digits.len().max(other.digits.len());
        let mut digits = SmallVec::with_capacity(len);
        for i in 0..len {
            digits.push(op(self.digit(i), other.digit(i), p.n));
        }
        let mut site = Site { digits };
        site.trim();
        site
    }

    /// `x / L`: drop the digit at position 0 and shift the rest down.
    pub fn scale_down(&self) -> Site {
        if self.digits.is_empty() {
            return Site::zero();
        }
        Site { digits: SmallVec::from_slice(&self.digits[1..]) }
    }
}

impl Ord for Site {
    /// Lexicographic on the digit sequence, most significant position first.
    fn cmp(&self, other: &Self) -> Ordering {
        self.level().cmp(&other.level()).then_with(|| {
            self.digits.iter().rev().cmp(other.digits.iter().rev())
        })
    }
}

impl PartialOrd for Site {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Debug for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Site(")?;
        for (i, d) in self.digits.iter().rev().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{d}")?;
        }
        write!(f, ")")
    }
}

pub fn norm(x: &Site, p: &LatticeParams) -> f64 {
    x.norm(p)
}

/// Ultrametric distance `|x - y|`.
pub fn distance(x: &Site, y: &Site, p: &LatticeParams) -> f64 {
    x.sub(y, p).norm(p)
}

/// Uniform draw from the sites of norm exactly `L^level`.
pub fn sample_shell<R: Rng + ?Sized>(level: u32, p: &LatticeParams, rng: &mut R) -> Result<Site> {
    if level == 0 {
        return Err(Error::InvalidParameter("shell level must be >= 1".into()));
    }
    let len = level as usize;
    if len > p.max_depth {
        return Err(Error::DepthOverflow { max_depth: p.max_depth });
    }
    let mut digits: SmallVec<[u32; 8]> = SmallVec::with_capacity(len);
    for _ in 0..len - 1 {
        digits.push(rng.random_range(0..p.n));
    }
    digits.push(rng.random_range(1..p.n));
    Ok(Site { digits })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn l2() -> LatticeParams {
        LatticeParams::new(2).unwrap()
    }

    #[test]
    fn norm_examples() {
        let p = l2();
        assert_eq!(Site::zero().norm(&p), 0.0);
        assert_eq!(Site::from_digits(&[1], &p).unwrap().norm(&p), 2.0);
        assert_eq!(Site::from_digits(&[0, 0, 5], &p).unwrap().norm(&p), 8.0);
        // trailing zeros do not count
        assert_eq!(Site::from_digits(&[3, 0, 0], &p).unwrap().level(), 1);
    }

    #[test]
    fn distance_examples() {
        let p = l2();
        let x = Site::from_digits(&[3], &p).unwrap();
        let y = Site::from_digits(&[5], &p).unwrap();
        assert_eq!(distance(&x, &x, &p), 0.0);
        assert_eq!(distance(&x, &y, &p), 2.0);
        assert_eq!(distance(&y, &x, &p), 2.0);
    }

    #[test]
    fn rejects_bad_digits_and_depth() {
        let p = LatticeParams::with_max_depth(2, 3).unwrap();
        assert!(Site::from_digits(&[16], &p).is_err());
        assert_eq!(
            Site::from_digits(&[1, 1, 1, 1], &p),
            Err(Error::DepthOverflow { max_depth: 3 })
        );
        assert!(LatticeParams::new(1).is_err());
    }

    #[test]
    fn shell_counts() {
        let p = l2();
        assert_eq!(p.shell_count(1), Some(15));
        assert_eq!(p.shell_count(2), Some(240));
        for l in 2..6 {
            let p = LatticeParams::new(l).unwrap();
            for level in 2..8 {
                let here = p.shell_count(level).unwrap();
                assert_eq!(here, p.n() as u128 * p.shell_count(level - 1).unwrap());
                assert_eq!(here as f64, p.shell_weight(level));
            }
        }
    }

    #[test]
    fn gamma_is_the_shell_rate_sum() {
        let p = l2();
        let partial: f64 = (1..=20).map(|lvl| p.shell_rate(lvl)).sum();
        let explicit: f64 = (1..=20)
            .map(|lvl| p.c() * p.shell_count(lvl).unwrap() as f64 * 2f64.powi(-6 * lvl as i32))
            .sum();
        assert!((partial - explicit).abs() < 1e-14);
        assert!((p.gamma() - partial).abs() < 1e-12);
        assert!((p.gamma() - 20.0 / 21.0).abs() < 1e-14);
    }

    #[test]
    fn scale_down_shifts() {
        let p = l2();
        assert_eq!(Site::zero().scale_down(), Site::zero());
        assert!(Site::from_digits(&[7], &p).unwrap().scale_down().is_zero());
        let x = Site::from_digits(&[1, 2, 3], &p).unwrap();
        let y = x.scale_down();
        assert_eq!(y.digits(), &[2, 3]);
        assert_eq!(y.norm(&p), x.norm(&p) / 2.0);
        let mut z = x.clone();
        for _ in 0..x.level() {
            z = z.scale_down();
        }
        assert!(z.is_zero());
    }

    #[test]
    fn ultrametric_exhaustive_level_two() {
        let p = l2();
        let sites: Vec<Site> = (0..256u32)
            .map(|v| Site::from_digits(&[v % 16, v / 16], &p).unwrap())
            .collect();
        let mut dist = vec![0.0; 256 * 256];
        for (i, x) in sites.iter().enumerate() {
            for (j, y) in sites.iter().enumerate() {
                dist[i * 256 + j] = distance(x, y, &p);
            }
        }
        for i in 0..256 {
            for j in 0..256 {
                let dij = dist[i * 256 + j];
                assert_eq!(dij, dist[j * 256 + i]);
                assert_eq!(dij == 0.0, i == j);
                for k in 0..256 {
                    assert!(dist[i * 256 + k] <= dij.max(dist[j * 256 + k]));
                }
            }
        }
    }

    #[test]
    fn ultrametric_exhaustive_small() {
        // L = 2, all sites of level <= 3 restricted to digits {0, 1, 15}
        // in each position: 27 sites, 19683 triples.
        let p = l2();
        let alphabet = [0u32, 1, 15];
        let mut sites = Vec::new();
        for a in alphabet {
            for b in alphabet {
                for c in alphabet {
                    sites.push(Site::from_digits(&[a, b, c], &p).unwrap());
                }
            }
        }
        for x in &sites {
            for y in &sites {
                let dxy = distance(x, y, &p);
                assert_eq!(dxy, distance(y, x, &p));
                for z in &sites {
                    let dxz = distance(x, z, &p);
                    assert!(dxz <= dxy.max(distance(y, z, &p)));
                }
            }
        }
    }

    #[test]
    fn order_is_most_significant_first() {
        let p = l2();
        let a = Site::from_digits(&[15, 1], &p).unwrap();
        let b = Site::from_digits(&[0, 2], &p).unwrap();
        let c = Site::from_digits(&[0, 0, 1], &p).unwrap();
        assert!(a < b && b < c);
        assert!(Site::zero() < a);
    }

    #[test]
    fn sample_shell_norm_and_determinism() {
        let p = l2();
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..50).map(|i| sample_shell(1 + i % 4, &p, &mut rng).unwrap()).collect::<Vec<_>>()
        };
        let a = draw(7);
        assert_eq!(a, draw(7));
        for (i, s) in a.iter().enumerate() {
            assert_eq!(s.level(), 1 + i as u32 % 4);
        }
    }

    #[test]
    fn sample_shell_uniform_level_one() {
        // chi-square over the 15 sites; 14 d.o.f., mean 14, sd sqrt(28).
        let p = l2();
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let draws = 1_000_000;
        let mut counts = [0u64; 16];
        for _ in 0..draws {
            let s = sample_shell(1, &p, &mut rng).unwrap();
            counts[s.digit(0) as usize] += 1;
        }
        assert_eq!(counts[0], 0);
        let expected = draws as f64 / 15.0;
        let chi2: f64 = counts[1..]
            .iter()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        assert!(chi2 < 14.0 + 4.0 * 28f64.sqrt(), "chi2 = {chi2}");
        let sigma = (expected * (1.0 - 1.0 / 15.0)).sqrt();
        for &c in &counts[1..] {
            assert!((c as f64 - expected).abs() < 4.0 * sigma);
        }
    }
}
