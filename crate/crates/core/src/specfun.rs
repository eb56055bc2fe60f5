//! Special functions and series machinery.
//!
//! Everything that multiplies factorials, powers and exponentials goes
//! through [`LogScaledValue`], a sign/mantissa/binary-exponent triple that
//! cannot overflow or underflow for any magnitude reachable here. Values are
//! converted back to `f64` only at the final summation.

use std::cmp::Ordering;
use std::f64::consts::LN_2;
use std::sync::OnceLock;

use crate::error::{Error, Result};

/// High and low parts of ln 2 for exact argument reduction in `exp`.
const LN2_HI: f64 = 6.931_471_803_691_238_164_90e-1;
const LN2_LO: f64 = 1.908_214_929_270_587_700_02e-10;

/// Largest `n` served from the precomputed factorial tables.
const FACTORIAL_TABLE_LEN: usize = 10_001;

/// A real number stored as `mantissa * 2^exponent` with `|mantissa|` in
/// `[0.5, 1)`, or exactly zero.
///
/// Multiplication and powers never leave the representable range, and the
/// conversion from and to `f64` is exact for every finite `f64`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogScaledValue {
    mantissa: f64,
    exponent: i64,
}

impl LogScaledValue {
    pub const ZERO: LogScaledValue = LogScaledValue {
        mantissa: 0.0,
        exponent: 0,
    };
    pub const ONE: LogScaledValue = LogScaledValue {
        mantissa: 0.5,
        exponent: 1,
    };

    /// Exact conversion of a finite `f64`.
    pub fn from_f64(x: f64) -> Self {
        debug_assert!(x.is_finite(), "non-finite value {x}");
        let (mantissa, exponent) = frexp(x);
        LogScaledValue { mantissa, exponent }
    }

    /// The positive value `e^log_magnitude`.
    pub fn from_ln(log_magnitude: f64) -> Self {
        if log_magnitude == f64::NEG_INFINITY {
            return Self::ZERO;
        }
        debug_assert!(log_magnitude.is_finite());
        let k = (log_magnitude / LN_2).floor();
        // reduction loses all digits once k*ln2 exceeds 2^53
        let r = ((log_magnitude - k * LN2_HI) - k * LN2_LO).clamp(0.0, LN_2);
        let mut v = Self::from_f64(r.exp());
        v.exponent += k as i64;
        v
    }

    /// `sign * e^log_magnitude`; `sign == 0` yields zero.
    pub fn from_sign_ln(sign: i8, log_magnitude: f64) -> Self {
        match sign.signum() {
            0 => Self::ZERO,
            1 => Self::from_ln(log_magnitude),
            _ => -Self::from_ln(log_magnitude),
        }
    }

    pub fn sign(&self) -> i8 {
        if self.mantissa > 0.0 {
            1
        } else if self.mantissa < 0.0 {
            -1
        } else {
            0
        }
    }

    pub fn is_zero(&self) -> bool {
        self.mantissa == 0.0
    }

    /// Natural log of the magnitude; `-inf` for zero.
    pub fn log_magnitude(&self) -> f64 {
        if self.is_zero() {
            return f64::NEG_INFINITY;
        }
        self.mantissa.abs().ln() + self.exponent as f64 * LN_2
    }

    pub fn abs(self) -> Self {
        LogScaledValue {
            mantissa: self.mantissa.abs(),
            exponent: self.exponent,
        }
    }

    /// Rounds to the nearest `f64`, saturating to `±inf` or flushing to zero.
    pub fn to_f64(&self) -> f64 {
        ldexp(self.mantissa, self.exponent)
    }

    /// `self * 2^shift` as an `f64`.
    fn to_f64_shifted(self, shift: i64) -> f64 {
        ldexp(self.mantissa, self.exponent + shift)
    }

    pub fn powi(self, n: u32) -> Self {
        let mut base = self;
        let mut acc = Self::ONE;
        let mut n = n;
        while n > 0 {
            if n & 1 == 1 {
                acc = acc * base;
            }
            base = base * base;
            n >>= 1;
        }
        acc
    }

    pub fn recip(self) -> Self {
        Self::ONE / self
    }

    fn normalized(mantissa: f64, exponent: i64) -> Self {
        if mantissa == 0.0 {
            return Self::ZERO;
        }
        let (m, e) = frexp(mantissa);
        LogScaledValue {
            mantissa: m,
            exponent: exponent + e,
        }
    }

    /// Ordering by magnitude.
    pub fn cmp_magnitude(&self, other: &Self) -> Ordering {
        match (self.is_zero(), other.is_zero()) {
            (true, true) => Ordering::Equal,
            (true, false) => Ordering::Less,
            (false, true) => Ordering::Greater,
            _ => self.exponent.cmp(&other.exponent).then(
                self.mantissa
                    .abs()
                    .partial_cmp(&other.mantissa.abs())
                    .unwrap_or(Ordering::Equal),
            ),
        }
    }
}

impl std::ops::Mul for LogScaledValue {
    type Output = LogScaledValue;
    fn mul(self, rhs: Self) -> Self {
        Self::normalized(self.mantissa * rhs.mantissa, self.exponent + rhs.exponent)
    }
}

impl std::ops::Div for LogScaledValue {
    type Output = LogScaledValue;
    fn div(self, rhs: Self) -> Self {
        assert!(!rhs.is_zero(), "division by zero");
        Self::normalized(self.mantissa / rhs.mantissa, self.exponent - rhs.exponent)
    }
}

impl std::ops::Neg for LogScaledValue {
    type Output = LogScaledValue;
    fn neg(self) -> Self {
        LogScaledValue {
            mantissa: -self.mantissa,
            exponent: self.exponent,
        }
    }
}

impl From<f64> for LogScaledValue {
    fn from(x: f64) -> Self {
        Self::from_f64(x)
    }
}

/// Splits a finite `x` into `(m, e)` with `x = m * 2^e` and `|m|` in `[0.5, 1)`.
fn frexp(x: f64) -> (f64, i64) {
    if x == 0.0 || !x.is_finite() {
        return (x, 0);
    }
    let bits = x.to_bits();
    let raw_exp = ((bits >> 52) & 0x7ff) as i64;
    if raw_exp == 0 {
        // subnormal: lift into the normal range first
        let (m, e) = frexp(x * 2f64.powi(64));
        return (m, e - 64);
    }
    let mantissa_bits = (bits & !(0x7ffu64 << 52)) | (1022u64 << 52);
    (f64::from_bits(mantissa_bits), raw_exp - 1022)
}

/// `m * 2^e` with correct saturation.
fn ldexp(m: f64, e: i64) -> f64 {
    if m == 0.0 {
        return m;
    }
    if e > 2100 {
        return m.signum() * f64::INFINITY;
    }
    if e < -2200 {
        return m.signum() * 0.0;
    }
    let mut x = m;
    let mut e = e;
    while e > 1000 {
        x *= 2f64.powi(1000);
        e -= 1000;
    }
    while e < -1000 {
        x *= 2f64.powi(-1000);
        e += 1000;
    }
    x * 2f64.powi(e as i32)
}

/// Coefficients `c_s` of a polynomial in ascending powers.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyCoeffs {
    coefficients: Vec<LogScaledValue>,
}

impl PolyCoeffs {
    pub fn len(&self) -> usize {
        self.coefficients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coefficients.is_empty()
    }

    /// Coefficient of `x^s` as `f64` (zero past the end).
    pub fn coefficient(&self, s: usize) -> f64 {
        self.coefficients.get(s).map_or(0.0, |c| c.to_f64())
    }

    /// Coefficient of `x^s` in scaled form.
    pub fn scaled(&self, s: usize) -> LogScaledValue {
        self.coefficients
            .get(s)
            .copied()
            .unwrap_or(LogScaledValue::ZERO)
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.coefficients.iter().map(|c| c.to_f64()).collect()
    }

    /// Horner evaluation in `f64`.
    pub fn eval(&self, x: f64) -> f64 {
        self.coefficients
            .iter()
            .rev()
            .fold(0.0, |acc, c| acc * x + c.to_f64())
    }
}

fn ln_factorial_table() -> &'static [f64] {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut table = Vec::with_capacity(FACTORIAL_TABLE_LEN);
        let mut acc = NeumaierSum::default();
        table.push(0.0);
        for k in 1..FACTORIAL_TABLE_LEN {
            acc.add((k as f64).ln());
            table.push(acc.total());
        }
        table
    })
}

fn scaled_factorial_table() -> &'static [LogScaledValue] {
    static TABLE: OnceLock<Vec<LogScaledValue>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut table = Vec::with_capacity(FACTORIAL_TABLE_LEN);
        let mut acc = LogScaledValue::ONE;
        table.push(acc);
        for k in 1..FACTORIAL_TABLE_LEN {
            acc = acc * LogScaledValue::from_f64(k as f64);
            table.push(acc);
        }
        table
    })
}

/// `ln(n!)`.
pub fn log_factorial(n: u64) -> f64 {
    if (n as usize) < FACTORIAL_TABLE_LEN {
        return ln_factorial_table()[n as usize];
    }
    // Stirling series; the truncation error is far below one ulp here.
    let x = n as f64;
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    x * x.ln() - x
        + 0.5 * (2.0 * std::f64::consts::PI * x).ln()
        + inv * (1.0 / 12.0 - inv2 * (1.0 / 360.0 - inv2 * (1.0 / 1260.0 - inv2 / 1680.0)))
}

/// `n!` in scaled form.
pub fn factorial(n: u64) -> LogScaledValue {
    if (n as usize) < FACTORIAL_TABLE_LEN {
        scaled_factorial_table()[n as usize]
    } else {
        LogScaledValue::from_ln(log_factorial(n))
    }
}

/// Binomial coefficient `C(n, k)`.
pub fn binomial(n: u64, k: u64) -> Result<LogScaledValue> {
    if k > n {
        return Err(Error::Domain(format!("binomial({n}, {k}) requires k <= n")));
    }
    let k = k.min(n - k);
    let mut exact: u128 = 1;
    for i in 0..k {
        match exact.checked_mul((n - i) as u128) {
            Some(v) => exact = v / (i as u128 + 1),
            None => {
                return Ok(LogScaledValue::from_ln(
                    log_factorial(n) - log_factorial(k) - log_factorial(n - k),
                ))
            }
        }
    }
    Ok(LogScaledValue::from_f64(exact as f64))
}

/// Binomial coefficient as `f64`; callers guarantee `k <= n`.
#[cfg(test)]
pub(crate) fn binomial_f64(n: u64, k: u64) -> f64 {
    binomial(n, k).map_or(0.0, |b| b.to_f64())
}

/// `x^m / m!` for `m = 0..=max` via the running product.
fn exp_series_terms(x: f64, max: usize) -> Vec<LogScaledValue> {
    let mut terms = Vec::with_capacity(max + 1);
    let mut t = LogScaledValue::ONE;
    terms.push(t);
    let xs = LogScaledValue::from_f64(x);
    for m in 1..=max {
        t = t * xs / LogScaledValue::from_f64(m as f64);
        terms.push(t);
    }
    terms
}

/// Upper incomplete gamma `Γ(a, x)` for integer `a >= 1`, from the finite
/// sum `Γ(n+1, x) = n! e^{-x} Σ_{m=0}^{n} x^m/m!`.
pub fn upper_gamma_int(a: u32, x: f64) -> Result<LogScaledValue> {
    if a == 0 {
        return Err(Error::Domain(
            "integer-shape incomplete gamma requires a >= 1".into(),
        ));
    }
    if !(x >= 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!(
            "incomplete gamma argument must be finite and >= 0, got {x}"
        )));
    }
    let n = (a - 1) as usize;
    let series = sum_positive(&exp_series_terms(x, n));
    Ok(factorial(n as u64) * LogScaledValue::from_ln(-x) * series)
}

/// `Γ(n, x)` for `n = 1..=max_a` by the upward recurrence
/// `Γ(n+1, x) = n Γ(n, x) + x^n e^{-x}`. Index 0 holds `Γ(1, x)`.
pub fn upper_gamma_int_ladder(max_a: u32, x: f64) -> Result<Vec<LogScaledValue>> {
    if max_a == 0 {
        return Ok(Vec::new());
    }
    if !(x >= 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!(
            "incomplete gamma argument must be finite and >= 0, got {x}"
        )));
    }
    let e = LogScaledValue::from_ln(-x);
    let xs = LogScaledValue::from_f64(x);
    let mut out = Vec::with_capacity(max_a as usize);
    let mut g = e;
    let mut power = e; // x^n e^{-x}
    out.push(g);
    for n in 1..max_a {
        power = power * xs;
        g = add_positive(g * LogScaledValue::from_f64(n as f64), power);
        out.push(g);
    }
    Ok(out)
}

/// Regularized lower incomplete gamma `P(n, x)` for integer `n >= 1`,
/// accurate in relative terms on both tails.
pub fn regularized_lower_gamma_int(n: u32, x: f64) -> f64 {
    debug_assert!(n >= 1);
    if x <= 0.0 {
        return 0.0;
    }
    if x.is_infinite() {
        return 1.0;
    }
    let nf = n as f64;
    if x < nf {
        // P = e^{-x} x^n/n! Σ_{m>=0} x^m / ((n+1)...(n+m))
        let mut term = 1.0;
        let mut sum = 1.0;
        let mut m = 1.0;
        loop {
            term *= x / (nf + m);
            sum += term;
            if term < sum * 1e-17 {
                break;
            }
            m += 1.0;
        }
        let head = LogScaledValue::from_f64(x).powi(n) / factorial(n as u64)
            * LogScaledValue::from_ln(-x);
        (head.to_f64() * sum).min(1.0)
    } else {
        1.0 - regularized_upper_gamma_int(n, x)
    }
}

/// Regularized upper incomplete gamma `Q(n, x) = e^{-x} Σ_{j<n} x^j/j!`.
pub fn regularized_upper_gamma_int(n: u32, x: f64) -> f64 {
    debug_assert!(n >= 1);
    if x <= 0.0 {
        return 1.0;
    }
    if x.is_infinite() {
        return 0.0;
    }
    let terms = exp_series_terms(x, n as usize - 1);
    (sum_positive(&terms) * LogScaledValue::from_ln(-x))
        .to_f64()
        .min(1.0)
}

/// Sum of non-negative scaled values.
pub(crate) fn sum_positive(terms: &[LogScaledValue]) -> LogScaledValue {
    scaled_sum(terms).0
}

fn add_positive(a: LogScaledValue, b: LogScaledValue) -> LogScaledValue {
    sum_positive(&[a, b])
}

/// Compensated sum of scaled values of any sign, returning the sum and the
/// cancellation ratio `Σ|t| / |Σt|`.
pub fn scaled_sum(terms: &[LogScaledValue]) -> (LogScaledValue, f64) {
    let Some(top) = terms.iter().filter(|t| !t.is_zero()).map(|t| t.exponent).max() else {
        return (LogScaledValue::ZERO, 1.0);
    };
    let mut sorted: Vec<f64> = terms
        .iter()
        .map(|t| t.to_f64_shifted(-top))
        .filter(|v| *v != 0.0)
        .collect();
    sorted.sort_by(|a, b| a.abs().total_cmp(&b.abs()));
    let (sum, ratio) = compensated_sum(&sorted);
    let mut out = LogScaledValue::from_f64(sum);
    if !out.is_zero() {
        out.exponent += top;
    }
    (out, ratio)
}

/// Running Neumaier (improved Kahan–Babuška) accumulator.
#[derive(Debug, Default, Clone, Copy)]
pub struct NeumaierSum {
    sum: f64,
    compensation: f64,
    abs_sum: f64,
}

impl NeumaierSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
        self.abs_sum += x.abs();
    }

    pub fn total(&self) -> f64 {
        self.sum + self.compensation
    }

    /// `Σ|t| / max(|Σt|, tiny)`; 1 for an empty or all-zero sum.
    pub fn cancellation_ratio(&self) -> f64 {
        if self.abs_sum == 0.0 {
            return 1.0;
        }
        self.abs_sum / self.total().abs().max(f64::MIN_POSITIVE)
    }
}

/// Compensated sum and cancellation ratio of `terms`.
pub fn compensated_sum(terms: &[f64]) -> (f64, f64) {
    let mut acc = NeumaierSum::default();
    for &t in terms {
        acc.add(t);
    }
    (acc.total(), acc.cancellation_ratio())
}

/// Coefficients of `T(x)^p` with `T(x) = Σ_{j=0}^{n-1} x^j/j!`.
///
/// The `(p)`-fold sum over `j_1..j_p` collapses into `p` convolutions, so the
/// cost is `O(p² n²)` instead of `O(n^p)`.
pub fn trunc_exp_poly_power(n: u32, p: u32) -> Result<PolyCoeffs> {
    if n == 0 {
        return Err(Error::Domain(
            "truncated exponential series needs at least one term".into(),
        ));
    }
    let factor: Vec<LogScaledValue> = (0..n as u64).map(|j| factorial(j).recip()).collect();
    let mut acc = vec![LogScaledValue::ONE];
    for _ in 0..p {
        acc = convolve(&acc, &factor, usize::MAX);
    }
    Ok(PolyCoeffs { coefficients: acc })
}

/// Coefficients of `(Σ_{j>=n} x^j/j!)^p` up to and including degree `max_degree`.
pub(crate) fn exp_tail_poly_power(n: u32, p: u32, max_degree: usize) -> Vec<LogScaledValue> {
    let factor: Vec<LogScaledValue> = (0..=max_degree as u64)
        .map(|j| {
            if j < n as u64 {
                LogScaledValue::ZERO
            } else {
                factorial(j).recip()
            }
        })
        .collect();
    let mut acc = vec![LogScaledValue::ONE];
    for _ in 0..p {
        acc = convolve(&acc, &factor, max_degree + 1);
    }
    acc.resize(max_degree + 1, LogScaledValue::ZERO);
    acc
}

/// Plain convolution truncated to `max_len` coefficients.
fn convolve(a: &[LogScaledValue], b: &[LogScaledValue], max_len: usize) -> Vec<LogScaledValue> {
    let len = (a.len() + b.len() - 1).min(max_len);
    let mut out = Vec::with_capacity(len);
    let mut products = Vec::new();
    for s in 0..len {
        products.clear();
        let lo = s.saturating_sub(b.len() - 1);
        let hi = s.min(a.len() - 1);
        for i in lo..=hi {
            let (x, y) = (a[i], b[s - i]);
            if !x.is_zero() && !y.is_zero() {
                products.push(x * y);
            }
        }
        out.push(sum_positive(&products));
    }
    out
}
