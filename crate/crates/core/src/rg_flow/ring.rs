//! Arithmetic backends for the recursion: `f64` complex numbers and
//! binary floating point of arbitrary precision (real and complex).

use dashu_float::round::mode::HalfEven;
use dashu_float::FBig;
use num_complex::Complex64;

use crate::lattice::LatticeParams;
use crate::numeric::cdiv;

pub(crate) type Big = FBig<HalfEven, 2>;

pub(crate) trait Ring: Clone {
    fn add(&self, o: &Self) -> Self;
    fn sub(&self, o: &Self) -> Self;
    fn mul(&self, o: &Self) -> Self;
    fn div(&self, o: &Self) -> Self;
    fn abs_f64(&self) -> f64;
    fn to_c64(&self) -> Complex64;
}

/// Constants of the map in the arithmetic of `S`.
pub(crate) struct MapConsts<S> {
    pub one: S,
    pub b2: S,
    pub b8: S,
    pub b16: S,
    pub l2: S,
}

impl<S: Ring> MapConsts<S> {
    /// `ratio(num, den)` must return `num / den` correctly rounded in `S`.
    pub fn from_ratio(ratio: impl Fn(u64, u64) -> S, p: &LatticeParams) -> Self {
        let n = p.n() as u64;
        let l = p.l() as u64;
        Self {
            one: ratio(1, 1),
            b2: ratio(2 * (n - 1), n),
            b8: ratio(8 * (n - 1), n),
            b16: ratio(16 * (n - 1), n),
            l2: ratio(l * l, 1),
        }
    }
}

impl MapConsts<Complex64> {
    pub fn new(embed: impl Fn(f64) -> Complex64, p: &LatticeParams) -> Self {
        Self::from_ratio(|a, b| embed(a as f64 / b as f64), p)
    }
}

impl Ring for Complex64 {
    fn add(&self, o: &Self) -> Self {
        self + o
    }
    fn sub(&self, o: &Self) -> Self {
        self - o
    }
    fn mul(&self, o: &Self) -> Self {
        self * o
    }
    fn div(&self, o: &Self) -> Self {
        cdiv(*self, *o)
    }
    fn abs_f64(&self) -> f64 {
        self.norm()
    }
    fn to_c64(&self) -> Complex64 {
        *self
    }
}

pub(crate) fn big(x: f64, prec: usize) -> Big {
    Big::try_from(x).expect("finite value").with_precision(prec).value()
}

pub(crate) fn big_ratio(num: u64, den: u64, prec: usize) -> Big {
    let a = Big::from(num).with_precision(prec).value();
    &a / &Big::from(den)
}

pub(crate) fn big_to_f64(x: &Big) -> f64 {
    x.to_f64().value()
}

/// Real number at fixed binary precision.
#[derive(Clone, Debug)]
pub(crate) struct PReal(pub Big);

impl Ring for PReal {
    fn add(&self, o: &Self) -> Self {
        PReal(&self.0 + &o.0)
    }
    fn sub(&self, o: &Self) -> Self {
        PReal(&self.0 - &o.0)
    }
    fn mul(&self, o: &Self) -> Self {
        PReal(&self.0 * &o.0)
    }
    fn div(&self, o: &Self) -> Self {
        PReal(&self.0 / &o.0)
    }
    fn abs_f64(&self) -> f64 {
        big_to_f64(&self.0).abs()
    }
    fn to_c64(&self) -> Complex64 {
        Complex64::new(big_to_f64(&self.0), 0.0)
    }
}

/// Complex number at fixed binary precision.
#[derive(Clone, Debug)]
pub(crate) struct PComplex {
    pub re: Big,
    pub im: Big,
}

impl PComplex {
    pub fn from_c64(z: Complex64, prec: usize) -> Self {
        Self { re: big(z.re, prec), im: big(z.im, prec) }
    }

    pub fn real(re: Big) -> Self {
        Self { re, im: Big::ZERO }
    }

    pub fn scale(&self, s: &Big) -> Self {
        Self { re: &self.re * s, im: &self.im * s }
    }
}

impl Ring for PComplex {
    fn add(&self, o: &Self) -> Self {
        Self { re: &self.re + &o.re, im: &self.im + &o.im }
    }
    fn sub(&self, o: &Self) -> Self {
        Self { re: &self.re - &o.re, im: &self.im - &o.im }
    }
    fn mul(&self, o: &Self) -> Self {
        Self {
            re: &(&self.re * &o.re) - &(&self.im * &o.im),
            im: &(&self.re * &o.im) + &(&self.im * &o.re),
        }
    }
    fn div(&self, o: &Self) -> Self {
        let den = &(&o.re * &o.re) + &(&o.im * &o.im);
        let re = &(&self.re * &o.re) + &(&self.im * &o.im);
        let im = &(&self.im * &o.re) - &(&self.re * &o.im);
        Self { re: &re / &den, im: &im / &den }
    }
    fn abs_f64(&self) -> f64 {
        self.to_c64().norm()
    }
    fn to_c64(&self) -> Complex64 {
        Complex64::new(big_to_f64(&self.re), big_to_f64(&self.im))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precise_constants_are_exact_ratios() {
        let p = LatticeParams::new(3).unwrap();
        let c = MapConsts::from_ratio(|a, b| PReal(big_ratio(a, b, 300)), &p);
        // 81 * (2B) - 160 vanishes at full precision
        let resid = &(&c.b2.0 * &Big::from(81u32)) - &Big::from(160u32);
        assert!(big_to_f64(&resid).abs() < 1e-80);
    }

    #[test]
    fn complex_division_round_trips() {
        let a = PComplex::from_c64(Complex64::new(0.3, -1.7), 200);
        let b = PComplex::from_c64(Complex64::new(-2.5, 0.25), 200);
        let back = a.div(&b).mul(&b).sub(&a);
        assert!(back.abs_f64() < 1e-55);
    }
}
