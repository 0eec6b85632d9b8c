//! The VG++ process `X(t) = theta Z(t) + sigma W(Z(t))`, a Brownian motion with
//! drift run on a Gamma++ clock `Z`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::distributions::{gamma_draw, polya_sample, std_normal, RngStream};
use crate::ept::{cgm_from_vg, vg_ept_ln_coefficients, vg_ept_ln_density, CGMParams};
use crate::error::{domain, Result};
use crate::gammapp::{
    backward_clock, bridge_unchecked, gpp_chf_at, gpp_sample_polya, gpp_sample_with_count,
    log_add_exp, polya_mixture_ln_sum, AtomicDensity, GammaPPParams,
};
use crate::path::{validate_grid, SamplePath};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawVGPP")]
pub struct VGPPParams {
    theta: f64,
    sigma: f64,
    a: f64,
    alpha: f64,
    beta: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawVGPP {
    theta: f64,
    sigma: f64,
    a: f64,
    alpha: f64,
    beta: f64,
}

impl TryFrom<RawVGPP> for VGPPParams {
    type Error = crate::error::Error;

    fn try_from(r: RawVGPP) -> Result<Self> {
        VGPPParams::new(r.theta, r.sigma, r.a, r.alpha, r.beta)
    }
}

impl VGPPParams {
    pub fn new(theta: f64, sigma: f64, a: f64, alpha: f64, beta: f64) -> Result<Self> {
        if !theta.is_finite() {
            return domain(format!("theta must be finite, got {theta}"));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return domain(format!("sigma must be positive, got {sigma}"));
        }
        GammaPPParams::new(a, alpha, beta)?;
        Ok(Self {
            theta,
            sigma,
            a,
            alpha,
            beta,
        })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
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

    /// The Gamma++ clock.
    pub fn subordinator(&self) -> GammaPPParams {
        GammaPPParams::new(self.a, self.alpha, self.beta).expect("validated parameters")
    }

    /// `(C, G, M)` of the VG law reached after `n` clock jumps, i.e. a
    /// Brownian motion on an Erlang(n, beta/a) clock.
    pub fn component_cgm(&self, n: u32) -> CGMParams {
        let (g, m) = cgm_from_vg(self.beta / self.a, self.sigma, self.theta);
        CGMParams::new(n, g, m).expect("positive rates")
    }
}

/// `theta u + i u^2 sigma^2 / 2`: the clock argument matching the chf at `u`.
fn clock_argument(params: &VGPPParams, u: Complex64) -> Complex64 {
    params.theta * u + Complex64::i() * u * u * (params.sigma * params.sigma / 2.0)
}

pub fn vgpp_chf(params: &VGPPParams, t: f64, u: f64) -> Complex64 {
    vgpp_chf_at(params, t, Complex64::new(u, 0.0))
}

/// Chf of `X(t)` continued to complex `u` (used for exponential moments).
pub fn vgpp_chf_at(params: &VGPPParams, t: f64, u: Complex64) -> Complex64 {
    gpp_chf_at(&params.subordinator(), t, clock_argument(params, u))
}

/// Rates of the two Gamma++ processes whose difference is `X`.
///
/// `X = Z_p - Z_n` with `Z_p ~ Gamma++(a_p, alpha, beta_p)` and
/// `Z_n ~ Gamma++(a_n, alpha, beta_n)`; the tilde rates use `beta / a` in
/// place of `beta`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DecomposedBetas {
    pub beta_p: f64,
    pub beta_n: f64,
    pub tbeta_p: f64,
    pub tbeta_n: f64,
    pub a_p: f64,
    pub a_n: f64,
}

impl DecomposedBetas {
    pub fn positive_side(&self, alpha: f64) -> GammaPPParams {
        GammaPPParams::new(self.a_p, alpha, self.beta_p).expect("valid decomposition")
    }

    pub fn negative_side(&self, alpha: f64) -> GammaPPParams {
        GammaPPParams::new(self.a_n, alpha, self.beta_n).expect("valid decomposition")
    }
}

pub fn vgpp_decompose(params: &VGPPParams) -> DecomposedBetas {
    let (beta_n, beta_p) = cgm_from_vg(params.beta, params.sigma, params.theta);
    let (tbeta_n, tbeta_p) = cgm_from_vg(params.beta / params.a, params.sigma, params.theta);
    DecomposedBetas {
        beta_p,
        beta_n,
        tbeta_p,
        tbeta_n,
        a_p: beta_p / tbeta_p,
        a_n: beta_n / tbeta_n,
    }
}

/// Lévy density, `(alpha/|x|)(e^{-|x| b} - e^{-|x| b / a_b})` with
/// `b = beta_p` for jumps up and `beta_n` for jumps down.
pub fn vgpp_levy_density(params: &VGPPParams, x: f64) -> Result<f64> {
    if x == 0.0 || !x.is_finite() {
        return domain(format!("the Lévy density is defined for finite x != 0, got {x}"));
    }
    let d = vgpp_decompose(params);
    let (rate, tilde) = if x > 0.0 {
        (d.beta_p, d.tbeta_p)
    } else {
        (d.beta_n, d.tbeta_n)
    };
    let ax = x.abs();
    Ok(-params.alpha / ax * (-rate * ax).exp() * (-(tilde - rate) * ax).exp_m1())
}

/// `n`-th cumulant of `X(t)`, `n` in 1..=4.
pub fn vgpp_cumulant(params: &VGPPParams, t: f64, n: u32) -> Result<f64> {
    if !(1..=4).contains(&n) {
        return domain(format!("cumulant order must be in 1..=4, got {n}"));
    }
    let d = vgpp_decompose(params);
    let k = n as i32;
    let fact = [1.0, 1.0, 2.0, 6.0][(n - 1) as usize];
    let sign = if n.is_multiple_of(2) { 1.0 } else { -1.0 };
    let pos = d.beta_p.powi(-k) - d.tbeta_p.powi(-k);
    let neg = d.beta_n.powi(-k) - d.tbeta_n.powi(-k);
    Ok(fact * params.alpha * t * (pos + sign * neg))
}

/// `c3 / c2^{3/2}`.
pub fn vgpp_skewness(params: &VGPPParams, t: f64) -> f64 {
    let c2 = vgpp_cumulant(params, t, 2).expect("order in range");
    vgpp_cumulant(params, t, 3).expect("order in range") / c2.powf(1.5)
}

/// Pearson kurtosis `mu4 / mu2^2 = 3 + c4 / c2^2`.
pub fn vgpp_kurtosis(params: &VGPPParams, t: f64) -> f64 {
    3.0 + vgpp_excess_kurtosis(params, t)
}

/// `c4 / c2^2`.
pub fn vgpp_excess_kurtosis(params: &VGPPParams, t: f64) -> f64 {
    let c2 = vgpp_cumulant(params, t, 2).expect("order in range");
    vgpp_cumulant(params, t, 4).expect("order in range") / (c2 * c2)
}

/// Atom at zero and continuous density of `X(t)` at `x`: a Polya mixture of
/// integer-shape VG densities evaluated in closed form.
pub fn vgpp_density(params: &VGPPParams, t: f64, x: f64) -> AtomicDensity {
    let sub = params.subordinator();
    let atom_weight = sub.atom(t);
    let base = params.component_cgm(1);
    let mut ln_component = |n: u64| {
        let cgm = CGMParams::new(n as u32, base.g(), base.m()).expect("positive rates");
        vg_ept_ln_density(&cgm, &vg_ept_ln_coefficients(&cgm), x)
    };
    let continuous = if x.is_finite() {
        polya_mixture_ln_sum(params.alpha * t, params.a, &mut ln_component).exp()
    } else {
        0.0
    };
    AtomicDensity {
        atom_weight,
        continuous,
    }
}

/// Continuous part of the density of `X(t)` for repeated evaluation at fixed
/// parameters. Swapping the Polya and EPT sums turns the mixture into a single
/// series `e^{Gx or -Mx} sum_s d_s |x|^s / s!` with precomputed `d_s`.
#[derive(Clone, Debug)]
pub struct ContinuousDensity {
    g: f64,
    m: f64,
    ln_coeffs: Vec<f64>,
}

const TABLE_REL_TOL: f64 = 1e-16;
const MAX_TABLE_TERMS: usize = 4000;

impl ContinuousDensity {
    pub fn new(params: &VGPPParams, t: f64) -> Self {
        let base = params.component_cgm(1);
        let (g, m) = (base.g(), base.m());
        let shape = params.alpha * t;
        let (ln_a, ln_keep) = (params.a.ln(), (1.0 - params.a).ln());
        let ln_cont_mass = (-(shape * ln_a).exp()).ln_1p();
        // Polya weights w_n, n >= 1. Successive ratios tend to 1 - a
        // monotonically, so max(ratio, 1 - a) bounds the geometric tail.
        let mut ln_w = vec![shape.ln() + shape * ln_a + ln_keep];
        let ln_tol = TABLE_REL_TOL.ln() + ln_cont_mass;
        while ln_w.len() < MAX_TABLE_TERMS {
            let n = ln_w.len() as f64;
            let last = ln_w[ln_w.len() - 1];
            let ratio = ((shape + n) / (n + 1.0)) * (1.0 - params.a);
            let bound = ratio.max(1.0 - params.a);
            if bound < 1.0 && last + (bound / (1.0 - bound)).ln() < ln_tol {
                break;
            }
            ln_w.push(last + ratio.ln());
        }
        let n_max = ln_w.len();
        let mut ln_fact = vec![0.0; 2 * n_max + 1];
        for k in 1..ln_fact.len() {
            ln_fact[k] = ln_fact[k - 1] + (k as f64).ln();
        }
        let (ln_gm, ln_sum) = ((g * m).ln(), (g + m).ln());
        let mut ln_coeffs = vec![f64::NEG_INFINITY; n_max];
        for (i, &lw) in ln_w.iter().enumerate() {
            let n = i + 1;
            let head = lw + n as f64 * ln_gm - ln_fact[n - 1];
            for (s, slot) in ln_coeffs.iter_mut().enumerate().take(n) {
                let e = 2 * n - 1 - s;
                let lc = head + ln_fact[e - 1] - e as f64 * ln_sum - ln_fact[n - s - 1];
                *slot = log_add_exp(*slot, lc);
            }
        }
        for (s, c) in ln_coeffs.iter_mut().enumerate() {
            *c -= ln_fact[s];
        }
        Self { g, m, ln_coeffs }
    }

    /// Log of the continuous density at `x`.
    pub fn ln_eval(&self, x: f64) -> f64 {
        if x == 0.0 {
            return self.ln_coeffs[0];
        }
        if !x.is_finite() {
            return f64::NEG_INFINITY;
        }
        let ln_abs = x.abs().ln();
        let mut peak = f64::NEG_INFINITY;
        for (s, c) in self.ln_coeffs.iter().enumerate() {
            peak = peak.max(c + s as f64 * ln_abs);
        }
        let sum: f64 = self
            .ln_coeffs
            .iter()
            .enumerate()
            .map(|(s, c)| (c + s as f64 * ln_abs - peak).exp())
            .sum();
        let ln_exp = if x < 0.0 { self.g * x } else { -self.m * x };
        peak + sum.ln() + ln_exp
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.ln_eval(x).exp()
    }
}

/// `P(X(t + dt) - X(t) = 0) = a^{alpha dt}`.
pub fn prob_zero_increment(params: &VGPPParams, dt: f64) -> f64 {
    params.subordinator().atom(dt)
}

fn brownian_on_clock(params: &VGPPParams, dz: f64, rng: &mut RngStream) -> f64 {
    if dz == 0.0 {
        0.0
    } else {
        params.theta * dz + params.sigma * dz.sqrt() * std_normal(rng)
    }
}

/// `X(t)` by subordination: clock from the Polya-Erlang sampler, then a
/// Gaussian given the clock. Exactly zero when the clock does not move.
pub fn vgpp_sample(params: &VGPPParams, t: f64, rng: &mut RngStream) -> f64 {
    let dz = gpp_sample_polya(&params.subordinator(), t, rng);
    brownian_on_clock(params, dz, rng)
}

/// `X(t)` as a Polya(alpha t, 1 - a) sum of differences of exponentials with
/// rates `tbeta_p` and `tbeta_n`.
pub fn vgpp_sample_compound(params: &VGPPParams, t: f64, rng: &mut RngStream) -> f64 {
    let d = vgpp_decompose(params);
    vgpp_sample_compound_with(params, &d, t, rng)
}

pub(crate) fn vgpp_sample_compound_with(
    params: &VGPPParams,
    d: &DecomposedBetas,
    t: f64,
    rng: &mut RngStream,
) -> f64 {
    let s = polya_sample(params.subordinator().counter(t), rng);
    if s == 0 {
        return 0.0;
    }
    let s = s as f64;
    gamma_draw(s, d.tbeta_p, rng) - gamma_draw(s, d.tbeta_n, rng)
}

pub fn vgpp_path_forward(
    params: &VGPPParams,
    grid: &[f64],
    rng: &mut RngStream,
) -> Result<SamplePath> {
    validate_grid(grid)?;
    let sub = params.subordinator();
    let n = grid.len();
    let mut z = Vec::with_capacity(n);
    let mut x = Vec::with_capacity(n);
    z.push(0.0);
    x.push(0.0);
    let (mut zl, mut xl) = (0.0, 0.0);
    for w in grid.windows(2) {
        let dz = gpp_sample_polya(&sub, w[1] - w[0], rng);
        zl += dz;
        xl += brownian_on_clock(params, dz, rng);
        z.push(zl);
        x.push(xl);
    }
    Ok(SamplePath {
        grid: grid.to_vec(),
        z,
        x: Some(x),
        seed: rng.seed(),
        stream_id: rng.stream_id(),
    })
}

/// `X(t)` given `X(T) = x_end` on the clock values `z_t <= z_end`: a
/// Brownian bridge in business time.
fn brownian_bridge(params: &VGPPParams, z_t: f64, z_end: f64, x_end: f64, rng: &mut RngStream) -> f64 {
    if z_t == 0.0 {
        0.0
    } else if z_t == z_end {
        x_end
    } else {
        let w = z_t / z_end;
        x_end * w + params.sigma * (z_t * (1.0 - w)).sqrt() * std_normal(rng)
    }
}

/// Backward construction: the terminal pair `(Z(T), X(T))` first, then each
/// interior time in decreasing order, bridged between the origin and its
/// right neighbour.
pub fn vgpp_path_backward(
    params: &VGPPParams,
    grid: &[f64],
    rng: &mut RngStream,
) -> Result<SamplePath> {
    let (z, _) = backward_clock(&params.subordinator(), grid, rng)?;
    let n = grid.len();
    let mut x = vec![0.0; n];
    if n > 1 {
        x[n - 1] = brownian_on_clock(params, z[n - 1], rng);
        for i in (1..n - 1).rev() {
            x[i] = brownian_bridge(params, z[i], z[i + 1], x[i + 1], rng);
        }
    }
    Ok(SamplePath {
        grid: grid.to_vec(),
        z,
        x: Some(x),
        seed: rng.seed(),
        stream_id: rng.stream_id(),
    })
}

/// The state of many backward-simulated paths at one time: Polya count,
/// clock and process value per path. Stepping to an earlier time produces a
/// new slice from this one alone.
#[derive(Clone, Debug)]
pub struct BackwardSlice {
    pub t: f64,
    pub s: Vec<u64>,
    pub z: Vec<f64>,
    pub x: Vec<f64>,
}

impl BackwardSlice {
    pub fn terminal(params: &VGPPParams, horizon: f64, n_paths: usize, rng: &mut RngStream) -> Result<Self> {
        if !(horizon > 0.0) {
            return domain(format!("horizon must be positive, got {horizon}"));
        }
        let sub = params.subordinator();
        let mut s = Vec::with_capacity(n_paths);
        let mut z = Vec::with_capacity(n_paths);
        let mut x = Vec::with_capacity(n_paths);
        for _ in 0..n_paths {
            let (zi, si) = gpp_sample_with_count(&sub, horizon, rng);
            s.push(si);
            z.push(zi);
            x.push(brownian_on_clock(params, zi, rng));
        }
        Ok(Self { t: horizon, s, z, x })
    }

    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    /// Slice at the earlier time `t`, `0 <= t < self.t`. At `t = 0` every
    /// path is at the origin.
    pub fn step_back(&self, params: &VGPPParams, t: f64, rng: &mut RngStream) -> Result<Self> {
        let n = self.len();
        if t == 0.0 {
            return Ok(Self {
                t,
                s: vec![0; n],
                z: vec![0.0; n],
                x: vec![0.0; n],
            });
        }
        if !(t > 0.0 && t < self.t) {
            return domain(format!("step_back target {t} must lie in [0, {})", self.t));
        }
        let mut s = Vec::with_capacity(n);
        let mut z = Vec::with_capacity(n);
        let mut x = Vec::with_capacity(n);
        for i in 0..n {
            let (zi, si) = bridge_unchecked(params.alpha, t, self.t, self.z[i], self.s[i], rng);
            s.push(si);
            z.push(zi);
            x.push(brownian_bridge(params, zi, self.z[i], self.x[i], rng));
        }
        Ok(Self { t, s, z, x })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table3() -> VGPPParams {
        VGPPParams::new(1.025, 0.2, 0.7, 5.0, 15.0).unwrap()
    }

    #[test]
    fn table3_moments() {
        let p = table3();
        assert!((vgpp_cumulant(&p, 1.0, 1).unwrap() - 0.10250).abs() < 5e-6);
        assert!((vgpp_cumulant(&p, 1.0, 2).unwrap() - 0.01591).abs() < 5e-6);
        assert!((vgpp_skewness(&p, 1.0) - 1.73973).abs() < 5e-6);
        assert!((vgpp_kurtosis(&p, 1.0) - 7.11923).abs() < 5e-6);
    }

    #[test]
    fn density_table_matches_mixture() {
        for (p, t) in [(table3(), 1.0), (VGPPParams::new(-0.1436, 0.2, 0.5, 10.0, 5.0).unwrap(), 1.0 / 252.0)] {
            let table = ContinuousDensity::new(&p, t);
            for x in [-0.5, -0.05, -1e-3, 0.0, 2e-3, 0.03, 0.2, 0.9] {
                let direct = vgpp_density(&p, t, x).continuous;
                let fast = table.eval(x);
                assert!((fast - direct).abs() < 1e-10 * direct, "x={x}: {fast} vs {direct}");
            }
        }
    }

    #[test]
    fn symmetric_case() {
        let p = VGPPParams::new(0.0, 1.0, 0.5, 3.0, 2.0).unwrap();
        let d = vgpp_decompose(&p);
        assert!((d.beta_p - 2.0).abs() < 1e-15 && (d.beta_n - 2.0).abs() < 1e-15);
        assert_eq!(vgpp_cumulant(&p, 1.0, 1).unwrap(), 0.0);
        assert_eq!(vgpp_cumulant(&p, 1.0, 3).unwrap(), 0.0);
        for x in [0.1, 0.7, 2.0] {
            assert_eq!(vgpp_levy_density(&p, x).unwrap(), vgpp_levy_density(&p, -x).unwrap());
        }
        assert!(vgpp_levy_density(&p, 0.0).is_err());
    }

    #[test]
    fn chf_normalization_and_zero_increment() {
        let p = table3();
        assert!((vgpp_chf(&p, 1.0, 0.0) - 1.0).norm() < 1e-15);
        let q = VGPPParams::new(0.1, 0.2, 0.5, 10.0, 3.0).unwrap();
        assert!((prob_zero_increment(&q, 0.1) - 0.5).abs() < 1e-15);
        let d = vgpp_density(&q, 1.0, 0.0);
        assert!((d.atom_weight - 0.5f64.powi(10)).abs() < 1e-18);
    }

    #[test]
    fn zero_clock_gives_zero_increment() {
        let p = VGPPParams::new(0.1, 0.2, 0.9, 1.0, 1.0).unwrap();
        let mut rng = RngStream::new(3, 0);
        let grid = [0.0, 0.01, 0.02, 0.03];
        for _ in 0..500 {
            for path in [
                vgpp_path_forward(&p, &grid, &mut rng).unwrap(),
                vgpp_path_backward(&p, &grid, &mut rng).unwrap(),
            ] {
                let x = path.x.as_ref().unwrap();
                for i in 1..grid.len() {
                    if path.z[i] == path.z[i - 1] {
                        assert_eq!(x[i], x[i - 1]);
                    }
                }
                if path.terminal_z() == 0.0 {
                    assert!(x.iter().all(|&v| v == 0.0));
                }
            }
        }
    }

    #[test]
    fn backward_slice_steps() {
        let p = table3();
        let mut rng = RngStream::new(4, 0);
        let end = BackwardSlice::terminal(&p, 1.0, 1000, &mut rng).unwrap();
        let mid = end.step_back(&p, 0.5, &mut rng).unwrap();
        for i in 0..1000 {
            assert!(mid.z[i] <= end.z[i] && mid.s[i] <= end.s[i]);
        }
        assert!(mid.step_back(&p, 0.7, &mut rng).is_err());
        let origin = mid.step_back(&p, 0.0, &mut rng).unwrap();
        assert!(origin.x.iter().all(|&v| v == 0.0));
    }
}
