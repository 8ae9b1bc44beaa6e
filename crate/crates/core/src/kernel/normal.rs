//! Standard normal distribution: CDF, survival function and quantile.
//!
//! The CDF follows Cody's rational Chebyshev approximations (relative accuracy
//! near machine precision in both tails); the quantile is Wichura's AS 241
//! followed by one Halley correction step against the CDF, so that the two
//! functions invert each other to a few ulps.

// Published coefficients are kept digit for digit.
#![allow(clippy::excessive_precision, clippy::inconsistent_digit_grouping)]

use crate::error::{Error, Result};
use crate::scalar::Real;

const SQRT_32: f64 = 5.656_854_249_492_380_195_206_754_896_838_792_314_f64;
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_677_939_946_059_934_381_868_f64;
const SPLIT_CENTRAL: f64 = 0.674_489_75;

const A: [f64; 5] = [
    2.235_252_035_460_683_928_7,
    161.028_231_068_555_878_81,
    1_067.689_485_460_370_958_2,
    18_154.981_253_343_561_249,
    0.065_682_337_918_207_449_113,
];
const B: [f64; 4] = [
    47.202_581_904_688_241_87,
    976.098_551_737_776_693_22,
    10_260.932_208_618_978_205,
    45_507.789_335_026_729_956,
];
const C: [f64; 9] = [
    0.398_941_512_088_134_667_64,
    8.883_149_794_388_375_941_2,
    93.506_656_132_177_855_979,
    597.270_276_394_800_262_26,
    2_494.537_585_290_372_671_1,
    6_848.190_450_536_282_332_6,
    11_602.651_437_647_350_124,
    9_842.714_838_383_978_021_8,
    1.076_557_677_372_019_231_7e-8,
];
const D: [f64; 8] = [
    22.266_688_044_328_115_691,
    235.387_901_782_624_998_61,
    1_519.377_599_407_554_805,
    6_485.558_298_266_760_755,
    18_615.571_640_885_098_091,
    34_900.952_721_145_977_266,
    38_912.003_286_093_271_411,
    19_685.429_676_859_990_727,
];
const P: [f64; 6] = [
    0.215_898_534_057_956_99,
    0.127_401_161_160_247_363_9,
    0.022_235_277_870_649_807,
    0.001_421_619_193_227_893_466,
    2.911_287_495_116_879_2e-5,
    0.023_073_441_764_940_173_03,
];
const Q: [f64; 5] = [
    1.284_260_096_144_911_21,
    0.468_238_212_480_865_118,
    0.065_988_137_868_928_551_5,
    0.003_782_396_332_027_582_44,
    7.297_515_550_839_662_05e-5,
];

/// Returns `(lower, upper)` tail probabilities `(Φ(x), 1 − Φ(x))`, each
/// computed without cancellation.
pub fn norm_tails<T: Real>(x: T) -> (T, T) {
    let l = T::lit;
    if x.is_nan() {
        return (x, x);
    }
    let y = x.abs();
    if y <= l(SPLIT_CENTRAL) {
        let xsq = if y > T::epsilon() * l(0.5) { x * x } else { T::zero() };
        let mut num = l(A[4]) * xsq;
        let mut den = xsq;
        for i in 0..3 {
            num = (num + l(A[i])) * xsq;
            den = (den + l(B[i])) * xsq;
        }
        let t = x * (num + l(A[3])) / (den + l(B[3]));
        return (l(0.5) + t, l(0.5) - t);
    }

    let small_tail = if y <= l(SQRT_32) {
        let mut num = l(C[8]) * y;
        let mut den = y;
        for i in 0..7 {
            num = (num + l(C[i])) * y;
            den = (den + l(D[i])) * y;
        }
        let t = (num + l(C[7])) / (den + l(D[7]));
        gauss_factor(y) * t
    } else {
        let xsq = T::one() / (x * x);
        let mut num = l(P[5]) * xsq;
        let mut den = xsq;
        for i in 0..4 {
            num = (num + l(P[i])) * xsq;
            den = (den + l(Q[i])) * xsq;
        }
        let t = xsq * (num + l(P[4])) / (den + l(Q[4]));
        let t = (l(INV_SQRT_2PI) - t) / y;
        gauss_factor(y) * t
    };
    let big = T::one() - small_tail;
    if x > T::zero() {
        (big, small_tail)
    } else {
        (small_tail, big)
    }
}

/// `exp(-y²/2)` split so that the leading term is exact in floating point.
fn gauss_factor<T: Real>(y: T) -> T {
    let sixteen = T::lit(16.0);
    let ysq = (y * sixteen).trunc() / sixteen;
    let del = (y - ysq) * (y + ysq);
    (-ysq * ysq * T::lit(0.5)).exp() * (-del * T::lit(0.5)).exp()
}

/// Standard normal CDF Φ(z).
pub fn norm_cdf<T: Real>(z: T) -> T {
    norm_tails(z).0
}

/// Standard normal survival function 1 − Φ(z), accurate in the upper tail.
pub fn norm_sf<T: Real>(z: T) -> T {
    norm_tails(z).1
}

/// Standard normal density.
pub fn norm_pdf<T: Real>(z: T) -> T {
    T::lit(INV_SQRT_2PI) * (-(z * z) * T::lit(0.5)).exp()
}

/// Standard normal quantile Φ⁻¹(p) for `0 < p < 1`.
pub fn norm_quantile<T: Real>(p: T) -> Result<T> {
    if !(p > T::zero() && p < T::one()) {
        return Err(Error::Domain(format!(
            "normal quantile requires 0 < p < 1, got {p}"
        )));
    }
    Ok(quantile_unchecked(p, T::one() - p))
}

/// Upper quantile: the `z` with `1 − Φ(z) = q`, i.e. `Φ⁻¹(1 − q)` computed
/// without forming `1 − q`.
pub fn norm_upper_quantile<T: Real>(q: T) -> Result<T> {
    if !(q > T::zero() && q < T::one()) {
        return Err(Error::Domain(format!(
            "normal quantile requires 0 < q < 1, got {q}"
        )));
    }
    Ok(-quantile_unchecked(q, T::one() - q))
}

// `p` is the lower-tail probability; `pc` its complement as supplied by the caller.
fn quantile_unchecked<T: Real>(p: T, pc: T) -> T {
    let l = T::lit;
    let q = p - l(0.5);
    let z0 = if q.abs() <= l(0.425) {
        let r = l(0.180625) - q * q;
        q * (((((((r * l(2509.080_928_730_122_672_7) + l(33430.575_583_588_128_105)) * r
            + l(67265.770_927_008_700_853))
            * r
            + l(45921.953_931_549_871_457))
            * r
            + l(13731.693_765_509_461_125))
            * r
            + l(1971.590_950_306_551_442_7))
            * r
            + l(133.141_667_891_784_377_45))
            * r
            + l(3.387_132_872_796_366_608))
            / (((((((r * l(5226.495_278_852_545_925) + l(28729.085_735_721_942_674)) * r
                + l(39307.895_800_092_710_61))
                * r
                + l(21213.794_301_586_595_867))
                * r
                + l(5394.196_021_424_751_107_7))
                * r
                + l(687.187_007_492_057_908_3))
                * r
                + l(42.313_330_701_600_911_252))
                * r
                + T::one())
    } else {
        let tail = if q < T::zero() { p } else { pc };
        let mut r = (-tail.ln()).sqrt();
        let val = if r <= l(5.0) {
            r = r - l(1.6);
            (((((((r * l(7.745_450_142_783_414_076_4e-4) + l(0.022_723_844_989_269_184_583_3))
                * r
                + l(0.241_780_725_177_450_611_77))
                * r
                + l(1.270_458_252_452_368_382_58))
                * r
                + l(3.647_848_324_763_204_605_04))
                * r
                + l(5.769_497_221_460_691_405_5))
                * r
                + l(4.630_337_846_156_545_295_9))
                * r
                + l(1.423_437_110_749_683_577_34))
                / (((((((r * l(1.050_750_071_644_416_843_24e-9)
                    + l(5.475_938_084_995_344_946e-4))
                    * r
                    + l(0.015_198_666_563_616_457_196_6))
                    * r
                    + l(0.148_103_976_427_480_074_59))
                    * r
                    + l(0.689_767_334_985_100_004_55))
                    * r
                    + l(1.676_384_830_183_803_849_4))
                    * r
                    + l(2.053_191_626_637_758_821_87))
                    * r
                    + T::one())
        } else {
            r = r - l(5.0);
            (((((((r * l(2.010_334_399_292_288_132_65e-7) + l(2.711_555_568_743_487_578_15e-5))
                * r
                + l(0.001_242_660_947_388_078_438_6))
                * r
                + l(0.026_532_189_526_576_123_093))
                * r
                + l(0.296_560_571_828_504_891_23))
                * r
                + l(1.784_826_539_917_291_335_8))
                * r
                + l(5.463_784_911_164_114_369_9))
                * r
                + l(6.657_904_643_501_103_777_2))
                / (((((((r * l(2.044_263_103_389_939_785_64e-15)
                    + l(1.421_511_758_316_445_888_7e-7))
                    * r
                    + l(1.846_318_317_510_054_681_8e-5))
                    * r
                    + l(7.868_691_311_456_132_591e-4))
                    * r
                    + l(0.014_875_361_290_850_614_852_5))
                    * r
                    + l(0.136_929_880_922_735_805_31))
                    * r
                    + l(0.599_832_206_555_887_937_69))
                    * r
                    + T::one())
        };
        if q < T::zero() {
            -val
        } else {
            val
        }
    };
    refine(z0, p, pc)
}

/// One Halley step on the tail with the smaller probability.
fn refine<T: Real>(z: T, p: T, pc: T) -> T {
    let pdf = norm_pdf(z);
    if !(pdf > T::min_positive_value()) || !z.is_finite() {
        return z;
    }
    let (lo, hi) = norm_tails(z);
    // Residual measured in whichever tail keeps relative precision.
    let e = if p <= pc { lo - p } else { pc - hi };
    let u = e / pdf;
    z - u / (T::one() + z * u * T::lit(0.5))
}
