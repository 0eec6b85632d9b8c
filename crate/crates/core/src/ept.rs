//! Integer-shape Variance Gamma laws as two-sided exponential-polynomial
//! (2-EPT) densities.
//!
//! With shape `C` a positive integer the VG density is
//! `c e^{A_N x} b` for `x <= 0` and `c e^{A_P x} b` for `x > 0`, where
//! `A_N = G I - S`, `A_P = -M I + S` and `S` is the lower shift matrix. All
//! tail integrals are then matrix expressions, which gives a call price
//! without numerical integration.
//!
//! Two evaluation routes are provided. [`EPTRealization`] works with dense
//! matrices. The free functions exploit the shift structure and run in
//! `O(C)` in log space, which keeps large shapes from overflowing.

use nalgebra::{DMatrix, DVector, RowDVector};
use statrs::function::gamma::ln_gamma;

use crate::error::{domain, Error, Result};
use crate::gammapp::log_add_exp;

/// Shape/rate description `(C, G, M)` of a VG law with chf
/// `(GM / (GM + (M - G) i u + u^2))^C`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CGMParams {
    c: u32,
    g: f64,
    m: f64,
}

impl CGMParams {
    pub fn new(c: u32, g: f64, m: f64) -> Result<Self> {
        if c == 0 {
            return domain("VG shape C must be a positive integer");
        }
        if !(g > 0.0 && g.is_finite()) || !(m > 0.0 && m.is_finite()) {
            return domain(format!("G and M must be positive, got G = {g}, M = {m}"));
        }
        Ok(Self { c, g, m })
    }

    pub fn c(&self) -> u32 {
        self.c
    }

    pub fn g(&self) -> f64 {
        self.g
    }

    pub fn m(&self) -> f64 {
        self.m
    }
}

/// `(G, M)` for the VG law obtained by running a Brownian motion with drift
/// `theta` and volatility `sigma` on a gamma clock of rate `beta`.
///
/// Roots of `GM = 2 beta / sigma^2` and `M - G = -2 theta / sigma^2`.
pub fn cgm_from_vg(beta: f64, sigma: f64, theta: f64) -> (f64, f64) {
    let s2 = sigma * sigma;
    let root = (theta * theta + 2.0 * beta * s2).sqrt();
    // For theta of either sign one of the two roots suffers cancellation.
    let (g, m) = if theta == 0.0 {
        (root / s2, root / s2)
    } else if theta > 0.0 {
        let g = (theta + root) / s2;
        (g, 2.0 * beta / (s2 * g))
    } else {
        let m = (root - theta) / s2;
        (2.0 * beta / (s2 * m), m)
    };
    (g, m)
}

/// Log-correction `C ln((1 - 1/M)(1 + 1/G))` making `e^{omega + X}` have unit mean.
pub fn vg_omega(params: &CGMParams) -> Result<f64> {
    if !(params.m > 1.0) {
        return domain(format!(
            "the exponential moment requires M > 1, got M = {}",
            params.m
        ));
    }
    Ok(params.c as f64 * ((1.0 - 1.0 / params.m) * (1.0 + 1.0 / params.g)).ln())
}

/// `ln c_s` for `s = 0..C`, with
/// `c_s = (MG)^C / (C-1)! * (2(C-1)-s)! (G+M)^{-2C+1+s} / (C-1-s)!`.
pub fn vg_ept_ln_coefficients(params: &CGMParams) -> Vec<f64> {
    ln_coefficients_with(params, &ln_factorials(2 * params.c as usize))
}

/// `ln k!` for `k = 0..n`.
pub(crate) fn ln_factorials(n: usize) -> Vec<f64> {
    (0..n).map(|k| ln_gamma(k as f64 + 1.0)).collect()
}

/// [`vg_ept_ln_coefficients`] with a table of `ln k!` covering `k <= 2C - 2`.
pub(crate) fn ln_coefficients_with(params: &CGMParams, ln_fact: &[f64]) -> Vec<f64> {
    let c = params.c as usize;
    let ln_gm = (params.g * params.m).ln();
    let ln_sum = (params.g + params.m).ln();
    let head = c as f64 * ln_gm - ln_fact[c - 1];
    (0..c)
        .map(|s| head + ln_fact[2 * c - 2 - s] - (2 * c - 1 - s) as f64 * ln_sum - ln_fact[c - 1 - s])
        .collect()
}

/// Dense matrix realization `(A_N, A_P, b, c)` of an integer-shape VG density.
#[derive(Clone, Debug)]
pub struct EPTRealization {
    pub a_n: DMatrix<f64>,
    pub a_p: DMatrix<f64>,
    pub b: DVector<f64>,
    pub c: RowDVector<f64>,
}

pub fn vg_ept_realization(params: &CGMParams) -> EPTRealization {
    let n = params.c as usize;
    let shift = DMatrix::from_fn(n, n, |i, j| if i == j + 1 { 1.0 } else { 0.0 });
    let id = DMatrix::<f64>::identity(n, n);
    let coeffs: Vec<f64> = vg_ept_ln_coefficients(params)
        .into_iter()
        .map(f64::exp)
        .collect();
    EPTRealization {
        a_n: &id * params.g - &shift,
        a_p: &shift - &id * params.m,
        b: DVector::from_fn(n, |i, _| if i == 0 { 1.0 } else { 0.0 }),
        c: RowDVector::from_vec(coeffs),
    }
}

impl EPTRealization {
    pub fn dim(&self) -> usize {
        self.b.len()
    }

    pub fn density(&self, x: f64) -> f64 {
        let a = if x <= 0.0 { &self.a_n } else { &self.a_p };
        (&self.c * mat_exp(&(a * x)) * &self.b)[(0, 0)]
    }

    /// Call price with the matrix formulas, branching on the sign of
    /// `d = ln(F0/K) + (r + omega) T`.
    pub fn call_price(&self, f0: f64, k: f64, r: f64, t: f64, omega: f64) -> Result<f64> {
        let n = self.dim();
        let id = DMatrix::<f64>::identity(n, n);
        let d = (f0 / k).ln() + (r + omega) * t;
        let fwd = f0 * (omega * t).exp();
        let disc = k * (-r * t).exp();
        let quad = |m: &DMatrix<f64>| (&self.c * m * &self.b)[(0, 0)];
        let price = if d <= 0.0 {
            let ap1 = &self.a_p + &id;
            let t1 = quad(&(mat_inv(&ap1)? * mat_exp(&(&ap1 * -d))));
            let t2 = quad(&(mat_inv(&self.a_p)? * mat_exp(&(&self.a_p * -d))));
            -fwd * t1 + disc * t2
        } else {
            let an1 = &self.a_n + &id;
            let an1_inv = mat_inv(&an1)?;
            let ap1_inv = mat_inv(&(&self.a_p + &id))?;
            let an_inv = mat_inv(&self.a_n)?;
            let bracket = quad(&an1_inv) - quad(&(&an1_inv * mat_exp(&(&an1 * -d)))) - quad(&ap1_inv);
            fwd * bracket - disc * (1.0 - quad(&(an_inv * mat_exp(&(&self.a_n * -d)))))
        };
        if !price.is_finite() {
            return Err(Error::Numerical(format!("non-finite EPT call price at K = {k}")));
        }
        Ok(price.max(0.0))
    }
}

/// Density of the integer-shape VG law.
pub fn vg_ept_density(params: &CGMParams, x: f64) -> f64 {
    vg_ept_ln_density(params, &vg_ept_ln_coefficients(params), x).exp()
}

/// `ln f(x)` given precomputed `ln c_s`.
pub(crate) fn vg_ept_ln_density(params: &CGMParams, ln_coeffs: &[f64], x: f64) -> f64 {
    let ln_exp = if x <= 0.0 { params.g * x } else { -params.m * x };
    if x == 0.0 {
        return ln_coeffs[0];
    }
    let ln_abs = x.abs().ln();
    let mut acc = f64::NEG_INFINITY;
    for (s, &lc) in ln_coeffs.iter().enumerate() {
        let sf = s as f64;
        acc = log_add_exp(acc, lc + sf * ln_abs - ln_gamma(sf + 1.0));
    }
    acc + ln_exp
}

/// `ln sum_s c_s int_L^inf x^s/s! e^{-lambda x} dx` for `L >= 0`.
///
/// The inner incomplete-gamma sums are reorganised so that
/// `u_k = sum_{s >= k} c_s lambda^{-(s-k+1)}` is built by back-recursion.
pub(crate) fn ln_tail_sum(ln_coeffs: &[f64], ln_fact: &[f64], lambda: f64, lower: f64) -> f64 {
    let ln_lambda = lambda.ln();
    let mut ln_u = f64::NEG_INFINITY;
    let mut acc = f64::NEG_INFINITY;
    let ln_l = lower.ln();
    for k in (0..ln_coeffs.len()).rev() {
        ln_u = log_add_exp(ln_coeffs[k], ln_u) - ln_lambda;
        let kf = k as f64;
        let ln_poly = if k == 0 {
            0.0
        } else if lower == 0.0 {
            f64::NEG_INFINITY
        } else {
            kf * ln_l - ln_fact[k]
        };
        acc = log_add_exp(acc, ln_poly + ln_u);
    }
    acc - lambda * lower
}

/// Call price `e^{-rT} E[(F0 e^{(r + omega) T + X} - K)^+]` for `X` following the
/// integer-shape VG law, without numerical integration.
///
/// `omega` is a rate; the whole-law correction of [`vg_omega`] corresponds to
/// `omega = vg_omega(params) / T`.
pub fn vg_ept_call(params: &CGMParams, f0: f64, k: f64, r: f64, t: f64, omega: f64) -> Result<f64> {
    let ln_fact = ln_factorials(2 * params.c as usize);
    vg_ept_call_with(params, &ln_coefficients_with(params, &ln_fact), &ln_fact, f0, k, r, t, omega)
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn vg_ept_call_with(
    params: &CGMParams,
    ln_coeffs: &[f64],
    ln_fact: &[f64],
    f0: f64,
    k: f64,
    r: f64,
    t: f64,
    omega: f64,
) -> Result<f64> {
    if !(f0 > 0.0 && k > 0.0 && t > 0.0) {
        return domain(format!("need F0, K, T > 0, got F0 = {f0}, K = {k}, T = {t}"));
    }
    if !(params.m > 1.0) {
        return domain(format!("call pricing requires M > 1, got M = {}", params.m));
    }
    let d = (f0 / k).ln() + (r + omega) * t;
    let fwd = f0 * (omega * t).exp();
    let disc = k * (-r * t).exp();
    let (g, m) = (params.g, params.m);
    let price = if d <= 0.0 {
        let l = -d;
        fwd * ln_tail_sum(ln_coeffs, ln_fact, m - 1.0, l).exp() - disc * ln_tail_sum(ln_coeffs, ln_fact, m, l).exp()
    } else {
        let mean_exp = ln_tail_sum(ln_coeffs, ln_fact, m - 1.0, 0.0).exp() + ln_tail_sum(ln_coeffs, ln_fact, g + 1.0, 0.0).exp();
        let left_exp = ln_tail_sum(ln_coeffs, ln_fact, g + 1.0, d).exp();
        let left = ln_tail_sum(ln_coeffs, ln_fact, g, d).exp();
        fwd * (mean_exp - left_exp) - disc * (1.0 - left)
    };
    if !price.is_finite() {
        return Err(Error::Numerical(format!("non-finite EPT call price at K = {k}")));
    }
    Ok(price.max(0.0))
}

/// Matrix exponential. Exact for a constant diagonal plus a strictly lower
/// triangular part; other inputs use scaling and squaring of a Taylor series.
pub fn mat_exp(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "mat_exp needs a square matrix");
    if n == 0 {
        return a.clone();
    }
    let diag = a[(0, 0)];
    let structured = (0..n).all(|i| a[(i, i)] == diag)
        && (0..n).all(|i| (i + 1..n).all(|j| a[(i, j)] == 0.0));
    if structured {
        let nil = a - DMatrix::<f64>::identity(n, n) * diag;
        let mut term = DMatrix::<f64>::identity(n, n);
        let mut sum = term.clone();
        for k in 1..n {
            term = &term * &nil / k as f64;
            sum += &term;
        }
        return sum * diag.exp();
    }
    let norm = a.iter().map(|v| v.abs()).fold(0.0, f64::max) * n as f64;
    let squarings = if norm > 0.5 { (norm / 0.5).log2().ceil() as i32 } else { 0 };
    let scaled = a / 2f64.powi(squarings);
    let mut term = DMatrix::<f64>::identity(n, n);
    let mut sum = term.clone();
    for k in 1..30 {
        term = &term * &scaled / k as f64;
        sum += &term;
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum
}

pub fn mat_inv(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    a.clone()
        .try_inverse()
        .ok_or_else(|| Error::Numerical("singular matrix".into()))
}
