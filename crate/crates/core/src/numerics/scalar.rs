//! Numerically stable scalar transforms.

/// Logistic sigmoid 1/(1+exp(-u)), evaluated through the branch that never
/// exponentiates a large positive argument.
pub fn sigmoid(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

/// log(1 + exp(u)) with the standard stable branching (Maechler cutoffs):
/// exp(u) for very negative u, u + exp(-u) near the asymptote, u for large u.
pub fn log1pexp(u: f64) -> f64 {
    if u <= -37.0 {
        u.exp()
    } else if u <= 18.0 {
        u.exp().ln_1p()
    } else if u <= 33.3 {
        u + (-u).exp()
    } else {
        u
    }
}

/// log(sum(exp(x_i))) with max-shift; returns -inf on an empty slice.
pub fn logsumexp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    let s: f64 = xs.iter().map(|&x| (x - m).exp()).sum();
    m + s.ln()
}

/// Standard normal CDF via the regularized incomplete gamma function,
/// Phi(x) = erfc(-x/sqrt(2))/2. Accurate to ~1e-14.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x * std::f64::consts::FRAC_1_SQRT_2)
}

/// Inverse standard normal CDF (Wichura's PPND16 rational approximation).
/// `p` must lie strictly in (0, 1).
pub fn normal_quantile(p: f64) -> f64 {
    debug_assert!(p > 0.0 && p < 1.0, "quantile argument must be in (0,1)");
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        return q * poly(&PPND_A, r) / poly(&PPND_B, r);
    }
    let mut r = if q < 0.0 { p } else { 1.0 - p };
    r = (-r.ln()).sqrt();
    let z = if r <= 5.0 {
        let r = r - 1.6;
        poly(&PPND_C, r) / poly(&PPND_D, r)
    } else {
        let r = r - 5.0;
        poly(&PPND_E, r) / poly(&PPND_F, r)
    };
    if q < 0.0 {
        -z
    } else {
        z
    }
}

fn poly(coef: &[f64], x: f64) -> f64 {
    coef.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

// PPND16 coefficients, central region.
const PPND_A: [f64; 8] = [
    3.387_132_872_796_366_608e0,
    1.331_416_678_917_843_774_5e2,
    1.971_590_950_306_551_442_7e3,
    1.373_169_376_550_946_112_5e4,
    4.592_195_393_154_987_145_7e4,
    6.726_577_092_700_870_085_3e4,
    3.343_057_558_358_812_810_5e4,
    2.509_080_928_730_122_672_7e3,
];
const PPND_B: [f64; 8] = [
    1.0,
    4.231_333_070_160_091_125_2e1,
    6.871_870_074_920_579_083e2,
    5.394_196_021_424_751_107_7e3,
    2.121_379_430_158_659_586_7e4,
    3.930_789_580_009_271_061e4,
    2.872_908_573_572_194_267_4e4,
    5.226_495_278_852_854_561e3,
];
// Tail region sqrt(-ln r) in (1.6, 5].
const PPND_C: [f64; 8] = [
    1.423_437_110_749_683_577_34e0,
    4.630_337_846_156_545_295_9e0,
    5.769_497_221_460_691_405_5e0,
    3.647_848_324_763_204_605_04e0,
    1.270_458_252_452_368_382_58e0,
    2.417_807_251_774_506_117_7e-1,
    2.272_384_498_926_918_458_33e-2,
    7.745_450_142_783_414_076_4e-4,
];
const PPND_D: [f64; 8] = [
    1.0,
    2.053_191_626_637_758_821_87e0,
    1.676_384_830_183_803_849_4e0,
    6.897_673_349_851_000_045_5e-1,
    1.481_039_764_274_800_745_9e-1,
    1.519_866_656_361_645_719_66e-2,
    5.475_938_084_995_344_946e-4,
    1.050_750_071_644_416_843_24e-9,
];
// Far tail sqrt(-ln r) > 5.
const PPND_E: [f64; 8] = [
    6.657_904_643_501_103_777_2e0,
    5.463_784_911_164_114_369_9e0,
    1.784_826_539_917_291_335_8e0,
    2.965_605_718_285_048_912_3e-1,
    2.653_218_952_657_612_309_3e-2,
    1.242_660_947_388_078_438_6e-3,
    2.711_555_568_743_487_578_15e-5,
    2.010_334_399_292_288_132_65e-7,
];
const PPND_F: [f64; 8] = [
    1.0,
    5.998_322_065_558_879_376_9e-1,
    1.369_298_809_227_358_053_1e-1,
    1.487_536_129_085_061_485_25e-2,
    7.868_691_311_456_132_591e-4,
    1.846_318_317_510_054_681_8e-5,
    1.421_511_758_316_445_888_7e-7,
    2.044_263_103_389_939_785_64e-15,
];

/// Complementary error function via the regularized incomplete gamma
/// function: erfc(x) = Q(1/2, x^2) for x >= 0, reflected for x < 0.
fn erfc(x: f64) -> f64 {
    if x < 0.0 {
        return 2.0 - erfc(-x);
    }
    if x == 0.0 {
        return 1.0;
    }
    let x2 = x * x;
    if x2 < 1.5 {
        1.0 - gamma_p_series(0.5, x2)
    } else {
        gamma_q_contfrac(0.5, x2)
    }
}

/// Regularized lower incomplete gamma P(a, x) by series expansion
/// (converges for x < a + 1).
fn gamma_p_series(a: f64, x: f64) -> f64 {
    let mut term = 1.0 / a;
    let mut sum = term;
    let mut ap = a;
    for _ in 0..500 {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if term.abs() < sum.abs() * 1e-17 {
            break;
        }
    }
    sum * (-x + a * x.ln() - ln_gamma(a)).exp()
}

/// Regularized upper incomplete gamma Q(a, x) by a modified Lentz continued
/// fraction (converges for x >= a + 1).
fn gamma_q_contfrac(a: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..500 {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < 1e-17 {
            break;
        }
    }
    (-x + a * x.ln() - ln_gamma(a)).exp() * h
}

/// ln Gamma(a); only a = 1/2 is exercised here but the Lanczos form is kept
/// general for clarity.
fn ln_gamma(a: f64) -> f64 {
    // Lanczos (g=7, n=9) coefficients.
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_93,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_13,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if a < 0.5 {
        // Reflection.
        return std::f64::consts::PI.ln()
            - (std::f64::consts::PI * a).sin().ln()
            - ln_gamma(1.0 - a);
    }
    let a = a - 1.0;
    let mut x = COEF[0];
    for (i, &c) in COEF.iter().enumerate().skip(1) {
        x += c / (a + i as f64);
    }
    let t = a + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (a + 0.5) * t.ln() - t + x.ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_at_zero_is_half() {
        assert_eq!(sigmoid(0.0), 0.5);
    }

    #[test]
    fn sigmoid_saturates() {
        assert!((sigmoid(40.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn sigmoid_antisymmetry() {
        assert!((sigmoid(-1.0) - (1.0 - sigmoid(1.0))).abs() < 1e-15);
        for i in -80..=80 {
            let u = i as f64 * 0.25;
            assert!(
                (sigmoid(u) + sigmoid(-u) - 1.0).abs() < 1e-15,
                "symmetry fails at u={u}"
            );
        }
    }

    #[test]
    fn log1pexp_known_values() {
        assert_eq!(log1pexp(0.0), std::f64::consts::LN_2);
        assert!((log1pexp(1000.0) - 1000.0).abs() / 1000.0 < 1e-12);
        assert!(log1pexp(-1000.0).abs() < 1e-300);
    }

    #[test]
    fn log1pexp_derivative_is_sigmoid() {
        // Central finite difference, 1e-8 relative over [-20, 20].
        let h = 1e-6;
        for i in -200..=200 {
            let u = i as f64 * 0.1;
            let fd = (log1pexp(u + h) - log1pexp(u - h)) / (2.0 * h);
            let s = sigmoid(u);
            let denom = s.abs().max(1e-12);
            assert!(
                ((fd - s) / denom).abs() < 1e-8,
                "d/du log1pexp != sigmoid at u={u}: fd={fd}, sig={s}"
            );
        }
    }

    #[test]
    fn logsumexp_matches_direct_sum() {
        let xs: [f64; 3] = [3.0, 1.0, 0.0];
        let direct = (xs.iter().map(|x| x.exp()).sum::<f64>()).ln();
        assert!((logsumexp(&xs) - direct).abs() < 1e-14);
        assert_eq!(logsumexp(&[]), f64::NEG_INFINITY);
    }

    #[test]
    fn normal_cdf_reference_values() {
        assert_eq!(normal_cdf(0.0), 0.5);
        assert!((normal_cdf(1.0) - 0.841_344_746_068_542_9).abs() < 1e-12);
        assert!((normal_cdf(1.96) - 0.975_002_104_851_779_5).abs() < 1e-12);
        assert!((normal_cdf(-1.96) - 0.024_997_895_148_220_435).abs() < 1e-12);
        assert!((normal_cdf(5.0) - 0.999_999_713_348_428).abs() < 1e-12);
    }

    #[test]
    fn quantile_inverts_cdf() {
        for i in 1..200 {
            let p = i as f64 / 200.0;
            let x = normal_quantile(p);
            assert!(
                (normal_cdf(x) - p).abs() < 1e-12,
                "round trip fails at p={p}: x={x}"
            );
        }
        assert_eq!(normal_quantile(0.5), 0.0);
        assert!((normal_quantile(0.975) - 1.959_963_984_540_054).abs() < 1e-12);
    }
}
