//! Quadrature referee for the closed forms.
//!
//! Integrates `f_Z(z) · F_Y(uz)` directly with adaptive Gauss–Kronrod,
//! reusing the same hop CDF as the closed forms. Agreement therefore checks
//! the series algebra only; model error is the simulator's business.

use std::collections::BinaryHeap;

use crate::channel::{
    best_relay_cdf, interference_plus_one_pdf, interference_plus_one_survival, HopModel,
    InterferenceProfile, SystemConfig,
};
use crate::error::{Error, Result};

// 15-point Kronrod extension of the 7-point Gauss rule (QUADPACK qk15).
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// Tolerances for the oracle integrals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureSettings {
    /// Target relative error of the integral.
    pub rel_tol: f64,
    /// Interference tail mass dropped beyond the initial integration limit.
    pub abs_tol: f64,
    /// Subdivision budget.
    pub max_intervals: usize,
}

impl Default for QuadratureSettings {
    fn default() -> Self {
        QuadratureSettings {
            rel_tol: 1e-10,
            abs_tol: 1e-14,
            max_intervals: 4000,
        }
    }
}

impl QuadratureSettings {
    fn check(&self) -> Result<()> {
        if !(self.rel_tol > 0.0) || !(self.abs_tol > 0.0) || self.max_intervals == 0 {
            return Err(Error::Domain("quadrature tolerances must be positive".into()));
        }
        Ok(())
    }
}

/// One Gauss–Kronrod panel: (Kronrod estimate, error estimate).
fn gauss_kronrod<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = half * XGK[j];
        let pair = f(center - dx) + f(center + dx);
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Globally adaptive Gauss–Kronrod on `[a, b]`, bisecting the panel with the
/// largest error until the total error is below `rel_tol · |I|`.
pub fn integrate<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    rel_tol: f64,
    max_intervals: usize,
) -> Result<(f64, f64)> {
    const INITIAL_PANELS: usize = 8;
    let mut heap = BinaryHeap::new();
    let width = (b - a) / INITIAL_PANELS as f64;
    for i in 0..INITIAL_PANELS {
        let lo = a + i as f64 * width;
        let hi = if i + 1 == INITIAL_PANELS { b } else { lo + width };
        let (value, error) = gauss_kronrod(&f, lo, hi);
        heap.push(Panel { a: lo, b: hi, value, error });
    }
    let mut total: f64 = heap.iter().map(|p| p.value).sum();
    let mut total_err: f64 = heap.iter().map(|p| p.error).sum();
    while total_err > rel_tol * total.abs() && total_err > f64::MIN_POSITIVE {
        if heap.len() >= max_intervals {
            return Err(Error::QuadratureNonConvergence {
                estimate: total,
                error: total_err,
                intervals: heap.len(),
            });
        }
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.a + worst.b);
        let (lv, le) = gauss_kronrod(&f, worst.a, mid);
        let (rv, re) = gauss_kronrod(&f, mid, worst.b);
        heap.push(Panel {
            a: worst.a,
            b: mid,
            value: lv,
            error: le,
        });
        heap.push(Panel {
            a: mid,
            b: worst.b,
            value: rv,
            error: re,
        });
        // re-sum to avoid drift from repeated subtraction
        total = heap.iter().map(|p| p.value).sum();
        total_err = heap.iter().map(|p| p.error).sum();
    }
    Ok((total, total_err))
}

/// Smallest `z` with `P[Z > z] < mass`, by bracketing and bisection.
fn survival_cut(prof: &InterferenceProfile, mass: f64) -> f64 {
    let mean_excess = prof.count() as f64 / prof.rate();
    let mut hi = 1.0 + mean_excess.max(1e-300);
    while interference_plus_one_survival(hi, prof) >= mass {
        hi = 1.0 + 2.0 * (hi - 1.0);
    }
    let mut lo = 1.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if interference_plus_one_survival(mid, prof) >= mass {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-12 * hi {
            break;
        }
    }
    hi
}

/// `∫_1^∞ f_Z(z) F(uz)^L dz` by quadrature.
///
/// The integration limit starts where the interference survival drops below
/// `abs_tol` and is pushed out until the dropped tail is also negligible
/// relative to the integral itself.
pub fn quad_hop_outage(
    hop: &HopModel,
    set_size: u32,
    prof: &InterferenceProfile,
    u: f64,
    settings: &QuadratureSettings,
) -> Result<f64> {
    settings.check()?;
    if set_size == 0 {
        return Ok(1.0);
    }
    if u == 0.0 {
        return Ok(0.0);
    }
    if prof.is_absent() {
        return best_relay_cdf(u, hop, set_size);
    }
    let integrand = |z: f64| {
        let f = interference_plus_one_pdf(z, prof);
        if f == 0.0 {
            return 0.0;
        }
        f * best_relay_cdf(u * z, hop, set_size).unwrap_or(f64::NAN)
    };
    let mut lo = 1.0;
    let mut hi = survival_cut(prof, settings.abs_tol);
    let mut total = 0.0;
    loop {
        let (v, _) = integrate(integrand, lo, hi, settings.rel_tol, settings.max_intervals)?;
        total += v;
        let tail = interference_plus_one_survival(hi, prof);
        if tail <= 1e-3 * settings.rel_tol * total || tail == 0.0 {
            return Ok(total);
        }
        lo = hi;
        hi = survival_cut(prof, (1e-4 * settings.rel_tol * total).max(f64::MIN_POSITIVE));
        if hi <= lo {
            return Ok(total);
        }
    }
}

/// Quadrature value of `P[γ_d < u | |B| = L]`.
pub fn quad_dest_outage(
    cfg: &SystemConfig,
    set_size: u32,
    settings: &QuadratureSettings,
) -> Result<f64> {
    cfg.validate()?;
    quad_hop_outage(
        &cfg.second_hop()?,
        set_size,
        &cfg.dest_interference()?,
        cfg.threshold(),
        settings,
    )
}

/// Quadrature value of the per-relay decoding failure `P[γ_{s,k} < u]`.
pub fn quad_relay_outage(cfg: &SystemConfig, settings: &QuadratureSettings) -> Result<f64> {
    cfg.validate()?;
    quad_hop_outage(
        &cfg.first_hop()?,
        1,
        &cfg.relay_interference()?,
        cfg.threshold(),
        settings,
    )
}

/// End-to-end outage assembled from quadrature pieces.
pub fn quad_outage_probability(cfg: &SystemConfig, settings: &QuadratureSettings) -> Result<f64> {
    let q = quad_relay_outage(cfg, settings)?.clamp(0.0, 1.0);
    crate::analytic::decoding_set_pmf(cfg.k_relays, q)
        .into_iter()
        .map(|(l, w)| Ok(w * quad_dest_outage(cfg, l, settings)?))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_kronrod_rules_are_exact_on_polynomials() {
        // K15 integrates degree <= 22 exactly; G7 degree <= 13.
        let (v, _) = gauss_kronrod(&|x: f64| x.powi(22), -1.0, 1.0);
        assert!((v - 2.0 / 23.0).abs() < 1e-15);
        let (v, e) = gauss_kronrod(&|x: f64| x.powi(12) + 3.0 * x.powi(5), 0.0, 1.0);
        assert!((v - (1.0 / 13.0 + 0.5)).abs() < 1e-15);
        assert!(e < 1e-15);
        assert!((WGK.iter().sum::<f64>() * 2.0 - WGK[7] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn adaptive_handles_peaked_integrands() {
        let (v, _) = integrate(|x: f64| (-(x * 1e3)).exp() * 1e3, 0.0, 50.0, 1e-12, 2000).unwrap();
        assert!((v - 1.0).abs() < 1e-11);
        assert!(integrate(|x: f64| 1.0 / x, 0.0, 1.0, 1e-12, 20).is_err());
    }

    #[test]
    fn empty_set_and_zero_threshold() {
        let cfg = SystemConfig::default();
        let s = QuadratureSettings::default();
        assert_eq!(quad_dest_outage(&cfg, 0, &s).unwrap(), 1.0);
        let zero = SystemConfig {
            rate_threshold: 0.0,
            ..cfg
        };
        assert_eq!(quad_relay_outage(&zero, &s).unwrap(), 0.0);
    }

    #[test]
    fn pdf_normalizes() {
        for count in [1u32, 2, 3, 5] {
            for lambda in [0.1, 1.0, 10.0] {
                let prof = InterferenceProfile::new(count, lambda).unwrap();
                let hi = survival_cut(&prof, 1e-18);
                let (v, _) = integrate(
                    |z| interference_plus_one_pdf(z, &prof),
                    1.0,
                    hi,
                    1e-13,
                    4000,
                )
                .unwrap();
                assert!((v - 1.0).abs() < 1e-10, "I={count} λ={lambda}: {v}");
            }
        }
    }

    #[test]
    fn single_element_closed_form() {
        let s = QuadratureSettings::default();
        for (snr_db, inr_db, rate) in [(10.0, 0.0, 0.5), (0.0, 10.0, 1.0), (25.0, 3.0, 1.0)] {
            let cfg = SystemConfig {
                n1: 1,
                n2: 1,
                k_relays: 1,
                snr_db,
                rho_i_relay_db: inr_db,
                rho_i_dest_db: inr_db,
                rate_threshold: rate,
                ..SystemConfig::default()
            };
            let (ls, li, u) = (cfg.hop_rate(), 1.0 / 10f64.powf(inr_db / 10.0), cfg.threshold());
            let expected = 1.0 - li * (-ls * u).exp() / (li + ls * u);
            for v in [quad_relay_outage(&cfg, &s).unwrap(), quad_dest_outage(&cfg, 1, &s).unwrap()] {
                assert!((v - expected).abs() < 1e-10 * expected, "{v} vs {expected}");
            }
        }
    }

    #[test]
    fn halving_tolerance_is_stable() {
        let cfg = SystemConfig {
            n2: 3,
            k_relays: 3,
            i_dest: 2,
            snr_db: 15.0,
            rho_i_dest_db: 10.0,
            ..SystemConfig::default()
        };
        let s = QuadratureSettings::default();
        let tight = QuadratureSettings {
            rel_tol: s.rel_tol / 2.0,
            ..s
        };
        for l in 1..=3 {
            let a = quad_dest_outage(&cfg, l, &s).unwrap();
            let b = quad_dest_outage(&cfg, l, &tight).unwrap();
            assert!((a - b).abs() <= 10.0 * s.rel_tol * b.abs(), "L={l}");
        }
    }
}
