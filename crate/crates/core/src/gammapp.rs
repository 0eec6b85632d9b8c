//! The Gamma++ subordinator: the Lévy process generated by the a-remainder of
//! a gamma law.
//!
//! For `Z ~ Gamma(alpha, beta)` (shape-rate) and `a` in `(0, 1)`, the
//! a-remainder `Z_a` satisfies `Z =d a Z' + Z_a` with `Z'` an independent copy
//! of `Z`. Its characteristic function is `((beta - i u a) / (beta - i u))^alpha`
//! and `Z_a` is a Polya(alpha, 1 - a) mixture of Erlang(n, beta / a) laws plus
//! an atom of mass `a^alpha` at zero. The associated Lévy process is a
//! compound Poisson subordinator with intensity `alpha * ln(1/a)`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::distributions::{
    beta_binomial_sample, beta_draw, exp_draw, gamma_draw, poisson_draw, polya_sample,
    PolyaParams, RngStream,
};
use crate::error::{domain, Result};
use crate::path::{validate_grid, SamplePath};

/// Relative size below which a mixture term stops the series.
pub const SERIES_REL_TOL: f64 = 1e-10;

const MAX_SERIES_TERMS: u64 = 2_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGammaPP")]
pub struct GammaPPParams {
    a: f64,
    alpha: f64,
    beta: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGammaPP {
    a: f64,
    alpha: f64,
    beta: f64,
}

impl TryFrom<RawGammaPP> for GammaPPParams {
    type Error = crate::error::Error;

    fn try_from(raw: RawGammaPP) -> Result<Self> {
        GammaPPParams::new(raw.a, raw.alpha, raw.beta)
    }
}

impl GammaPPParams {
    pub fn new(a: f64, alpha: f64, beta: f64) -> Result<Self> {
        if !(a > 0.0 && a < 1.0) {
            return domain(format!("a must lie in (0, 1), got {a}"));
        }
        if !(alpha > 0.0 && alpha.is_finite()) {
            return domain(format!("alpha must be positive, got {alpha}"));
        }
        if !(beta > 0.0 && beta.is_finite()) {
            return domain(format!("beta must be positive, got {beta}"));
        }
        Ok(Self { a, alpha, beta })
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Rate of the Erlang components and of the compound jumps' upper tail.
    pub fn mixture_rate(&self) -> f64 {
        self.beta / self.a
    }

    /// Law of the Polya counter `S(t)` behind the Erlang mixture.
    pub fn counter(&self, t: f64) -> PolyaParams {
        PolyaParams::new(self.alpha * t, 1.0 - self.a).expect("validated parameters")
    }

    /// Jump intensity of the compound Poisson representation.
    pub fn jump_intensity(&self) -> f64 {
        -self.alpha * self.a.ln()
    }

    /// `P(Z(t) = 0) = a^(alpha t)`.
    pub fn atom(&self, t: f64) -> f64 {
        (self.alpha * t * self.a.ln()).exp()
    }
}

/// Characteristic function of `Z(t)` at a real argument.
pub fn gpp_chf(params: &GammaPPParams, t: f64, u: f64) -> Complex64 {
    gpp_chf_at(params, t, Complex64::new(u, 0.0))
}

/// Characteristic function continued to a complex argument `w`, evaluated as
/// `exp(alpha t Log((beta - i w a) / (beta - i w)))` with the principal `Log`.
pub fn gpp_chf_at(params: &GammaPPParams, t: f64, w: Complex64) -> Complex64 {
    let iw = Complex64::i() * w;
    let ratio = (params.beta - iw * params.a) / (params.beta - iw);
    (params.alpha * t * ratio.ln()).exp()
}

/// Value of a law with an atom at zero: the atom's mass and the density of the
/// absolutely continuous part at the requested point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AtomicDensity {
    pub atom_weight: f64,
    pub continuous: f64,
}

/// `ln(e^x + e^y)` without overflow.
pub(crate) fn log_add_exp(x: f64, y: f64) -> f64 {
    if x == f64::NEG_INFINITY {
        return y;
    }
    if y == f64::NEG_INFINITY {
        return x;
    }
    let m = x.max(y);
    m + ((x - m).exp() + (y - m).exp()).ln()
}

/// `sum_{n >= 1} w_n exp(ln_component(n))` where `w_n` are the Polya(shape, 1 - a)
/// weights. Stops once the terms are decreasing and the current one is below
/// `SERIES_REL_TOL` of the running sum. Returns the log of the sum.
pub(crate) fn polya_mixture_ln_sum(
    shape: f64,
    a: f64,
    mut ln_component: impl FnMut(u64) -> f64,
) -> f64 {
    let ln_keep = (1.0 - a).ln();
    let ln_tol = SERIES_REL_TOL.ln();
    let mut ln_w = shape.ln() + shape * a.ln() + ln_keep;
    let mut acc = f64::NEG_INFINITY;
    let mut prev = f64::NEG_INFINITY;
    for n in 1..MAX_SERIES_TERMS {
        let lt = ln_w + ln_component(n);
        acc = log_add_exp(acc, lt);
        if lt < prev && lt < acc + ln_tol {
            break;
        }
        if acc == f64::NEG_INFINITY && n > 1 {
            break;
        }
        prev = lt;
        let nf = n as f64;
        ln_w += ((shape + nf) / (nf + 1.0)).ln() + ln_keep;
    }
    acc
}

/// Atom and continuous density of `Z(t)` at `x`.
///
/// The continuous part is the Polya(alpha t, 1 - a) mixture of Erlang(n, beta/a)
/// densities. Negative `x` has zero density.
pub fn gpp_density(params: &GammaPPParams, t: f64, x: f64) -> AtomicDensity {
    let atom_weight = params.atom(t);
    if !(x >= 0.0) {
        return AtomicDensity {
            atom_weight,
            continuous: 0.0,
        };
    }
    let rate = params.mixture_rate();
    let ln_rate = rate.ln();
    let ln_x = x.ln();
    let ln_erlang = |n: u64| {
        let nf = n as f64;
        if x == 0.0 {
            return if n == 1 { ln_rate } else { f64::NEG_INFINITY };
        }
        nf * ln_rate + (nf - 1.0) * ln_x - rate * x - ln_gamma(nf)
    };
    let continuous = polya_mixture_ln_sum(params.alpha * t, params.a, ln_erlang).exp();
    AtomicDensity {
        atom_weight,
        continuous,
    }
}

/// Characteristic triplet `(drift, diffusion, Lévy density)` of the Gamma++
/// process, with respect to the truncation function `1_{|x| <= 1}`.
///
/// The drift carries the `alpha / beta` prefactor; it equals
/// `int_0^1 x nu(x) dx`, so the process has zero drift once that
/// compensator is removed.
#[derive(Clone, Copy, Debug)]
pub struct LevyTriplet {
    pub drift: f64,
    pub diffusion: f64,
    params: GammaPPParams,
}

impl LevyTriplet {
    /// `(alpha / x) (e^{-beta x} - e^{-beta x / a})` on `(0, inf)`, zero elsewhere.
    pub fn levy_density(&self, x: f64) -> f64 {
        if !(x > 0.0) {
            return 0.0;
        }
        let GammaPPParams { a, alpha, beta } = self.params;
        // e^{-bx} - e^{-bx/a} = -e^{-bx} expm1(-bx(1/a - 1))
        -alpha / x * (-beta * x).exp() * (-beta * x * (1.0 / a - 1.0)).exp_m1()
    }

    /// `nu((0, inf)) = alpha ln(1/a)`.
    pub fn total_mass(&self) -> f64 {
        self.params.jump_intensity()
    }
}

pub fn gpp_levy_triplet(params: &GammaPPParams) -> LevyTriplet {
    let GammaPPParams { a, alpha, beta } = *params;
    let drift = alpha / beta * (-(-beta).exp_m1() + a * (-beta / a).exp_m1());
    LevyTriplet {
        drift,
        diffusion: 0.0,
        params: *params,
    }
}

/// `n`-th cumulant of `Z(t)`: `(n-1)! alpha t (1 - a^n) / beta^n`, `n` in 1..=4.
pub fn gpp_cumulant(params: &GammaPPParams, t: f64, n: u32) -> Result<f64> {
    if !(1..=4).contains(&n) {
        return domain(format!("cumulant order must be in 1..=4, got {n}"));
    }
    let fact = [1.0, 1.0, 2.0, 6.0][(n - 1) as usize];
    let GammaPPParams { a, alpha, beta } = *params;
    Ok(fact * alpha * t * (1.0 - a.powi(n as i32)) / beta.powi(n as i32))
}

/// Compound Poisson draw of `Z(t)`: `N ~ Poisson(alpha t ln(1/a))` jumps, each
/// exponential with rate `beta a^{-U}`, `U` uniform, so the rate spans `[beta, beta/a]`.
pub fn gpp_sample_cp(params: &GammaPPParams, t: f64, rng: &mut RngStream) -> f64 {
    let n = poisson_draw(params.jump_intensity() * t, rng);
    let mut total = 0.0;
    for _ in 0..n {
        let y = params.a.powf(-rng.uniform());
        total += exp_draw(params.beta * y, rng);
    }
    total
}

/// Polya-Erlang draw of `Z(t)`: `s ~ Polya(alpha t, 1 - a)`, then Erlang(s, beta/a).
pub fn gpp_sample_polya(params: &GammaPPParams, t: f64, rng: &mut RngStream) -> f64 {
    gpp_sample_with_count(params, t, rng).0
}

/// Same as [`gpp_sample_polya`] but also returns the Polya count `s`.
pub fn gpp_sample_with_count(params: &GammaPPParams, t: f64, rng: &mut RngStream) -> (f64, u64) {
    let s = polya_sample(params.counter(t), rng);
    if s == 0 {
        (0.0, 0)
    } else {
        (gamma_draw(s as f64, params.mixture_rate(), rng), s)
    }
}

pub fn gpp_path_forward(
    params: &GammaPPParams,
    grid: &[f64],
    rng: &mut RngStream,
) -> Result<SamplePath> {
    validate_grid(grid)?;
    let mut z = Vec::with_capacity(grid.len());
    z.push(0.0);
    let mut level = 0.0;
    for w in grid.windows(2) {
        level += gpp_sample_polya(params, w[1] - w[0], rng);
        z.push(level);
    }
    Ok(SamplePath {
        grid: grid.to_vec(),
        z,
        x: None,
        seed: rng.seed(),
        stream_id: rng.stream_id(),
    })
}

/// Draws `(Z(t), S(t))` given `Z(T) = z_end`, `S(T) = s_end` and `Z(0) = S(0) = 0`.
///
/// The Polya counter bridges as a beta-binomial law and, given the counts,
/// the gamma clock bridges as a Beta split. The split is degenerate when
/// `s_t = 0` (ratio 0) or `s_t = s_end` (ratio 1).
pub fn gpp_bridge(
    params: &GammaPPParams,
    t: f64,
    horizon: f64,
    z_end: f64,
    s_end: u64,
    rng: &mut RngStream,
) -> Result<(f64, u64)> {
    if !(t > 0.0 && t < horizon) {
        return domain(format!("bridge time {t} must lie in (0, {horizon})"));
    }
    if !(z_end >= 0.0) || ((z_end == 0.0) != (s_end == 0)) {
        return domain(format!(
            "inconsistent bridge end point: z = {z_end}, s = {s_end}"
        ));
    }
    Ok(bridge_unchecked(params.alpha, t, horizon, z_end, s_end, rng))
}

pub(crate) fn bridge_unchecked(
    alpha: f64,
    t: f64,
    horizon: f64,
    z_end: f64,
    s_end: u64,
    rng: &mut RngStream,
) -> (f64, u64) {
    if s_end == 0 {
        return (0.0, 0);
    }
    let s_t = beta_binomial_sample(alpha * t, alpha * (horizon - t), s_end, rng)
        .expect("positive bridge parameters");
    let z_t = if s_t == 0 {
        0.0
    } else if s_t == s_end {
        z_end
    } else {
        z_end * beta_draw(s_t as f64, (s_end - s_t) as f64, rng)
    };
    (z_t, s_t)
}

/// Backward construction: terminal value first, then interior points in
/// decreasing time, each bridged between the origin and its right neighbour.
pub fn gpp_path_backward(
    params: &GammaPPParams,
    grid: &[f64],
    rng: &mut RngStream,
) -> Result<SamplePath> {
    let (z, _) = backward_clock(params, grid, rng)?;
    Ok(SamplePath {
        grid: grid.to_vec(),
        z,
        x: None,
        seed: rng.seed(),
        stream_id: rng.stream_id(),
    })
}

/// Backward clock with the Polya counts alongside.
pub(crate) fn backward_clock(
    params: &GammaPPParams,
    grid: &[f64],
    rng: &mut RngStream,
) -> Result<(Vec<f64>, Vec<u64>)> {
    validate_grid(grid)?;
    let n = grid.len();
    let mut z = vec![0.0; n];
    let mut s = vec![0u64; n];
    if n == 1 {
        return Ok((z, s));
    }
    let horizon = grid[n - 1];
    let (z_end, s_end) = gpp_sample_with_count(params, horizon, rng);
    z[n - 1] = z_end;
    s[n - 1] = s_end;
    for i in (1..n - 1).rev() {
        let (zi, si) = bridge_unchecked(params.alpha, grid[i], grid[i + 1], z[i + 1], s[i + 1], rng);
        z[i] = zi;
        s[i] = si;
    }
    Ok((z, s))
}
