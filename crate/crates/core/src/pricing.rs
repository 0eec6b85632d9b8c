//! European options on `F(T) = F0 e^{(r + omega) T + X(T)}` with `X` a VG++
//! process and `omega` the martingale correction.
//!
//! Three pricers are provided: the Polya-weighted series of integer-shape VG
//! calls, Carr-Madan FFT inversion of the chf, and Monte Carlo.

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::distributions::{polya_ln_pmf, RngStream};
use crate::ept::{ln_coefficients_with, ln_factorials, vg_ept_call_with, CGMParams};
use crate::error::{domain, Error, Result};
use crate::mc::run_chunks;
use crate::vgpp::{vgpp_chf_at, vgpp_sample, VGPPParams};

const MAX_SERIES_TERMS: u64 = 100_000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMarket")]
pub struct MarketModel {
    f0: f64,
    r: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMarket {
    f0: f64,
    r: f64,
}

impl TryFrom<RawMarket> for MarketModel {
    type Error = Error;

    fn try_from(m: RawMarket) -> Result<Self> {
        MarketModel::new(m.f0, m.r)
    }
}

impl MarketModel {
    pub fn new(f0: f64, r: f64) -> Result<Self> {
        if !(f0 > 0.0 && f0.is_finite()) {
            return domain(format!("F0 must be positive, got {f0}"));
        }
        if !r.is_finite() {
            return domain(format!("r must be finite, got {r}"));
        }
        Ok(Self { f0, r })
    }

    pub fn f0(&self) -> f64 {
        self.f0
    }

    pub fn r(&self) -> f64 {
        self.r
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FFTConfig {
    pub damping: f64,
    pub grid_size: usize,
    pub eta: f64,
}

impl Default for FFTConfig {
    fn default() -> Self {
        Self {
            damping: 1.5,
            grid_size: 1 << 14,
            eta: 0.25,
        }
    }
}

impl FFTConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.damping.is_finite() && self.damping != 0.0 && self.damping != -1.0) {
            return domain(format!("invalid damping {}", self.damping));
        }
        if !self.grid_size.is_power_of_two() || self.grid_size < 1 << 10 {
            return domain(format!(
                "grid_size must be a power of two >= 1024, got {}",
                self.grid_size
            ));
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return domain(format!("eta must be positive, got {}", self.eta));
        }
        Ok(())
    }
}

/// `alpha ln((beta - (theta + sigma^2/2)) / (beta - a (theta + sigma^2/2)))`.
pub fn vgpp_omega(params: &VGPPParams) -> Result<f64> {
    let k = params.theta() + params.sigma() * params.sigma() / 2.0;
    let b = params.beta();
    if !(b > k && b > params.a() * k) {
        return domain(format!(
            "E[e^X] is infinite: need beta > theta + sigma^2/2 and beta > a (theta + sigma^2/2), \
             got beta = {b}, theta + sigma^2/2 = {k}"
        ));
    }
    Ok(params.alpha() * ((b - k) / (b - params.a() * k)).ln())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SeriesPrice {
    pub price: f64,
    pub terms_used: u64,
}

/// Series price with the default truncation rule.
pub fn price_call_closed(
    params: &VGPPParams,
    market: &MarketModel,
    k: f64,
    t: f64,
    cutoff: f64,
) -> Result<f64> {
    Ok(price_call_series(params, market, k, t, cutoff)?.price)
}

/// Call price as the atom term plus the Polya(alpha T, 1 - a) weighted sum of
/// integer-shape VG calls on the clock rate `beta / a`.
///
/// Summation stops once the terms decrease and the remainder, extrapolated
/// geometrically from the last two terms, is below `cutoff` times the partial
/// sum, or once the remaining Polya mass is negligible.
pub fn price_call_series(
    params: &VGPPParams,
    market: &MarketModel,
    k: f64,
    t: f64,
    cutoff: f64,
) -> Result<SeriesPrice> {
    SeriesPricer::new(params, market)?.price(k, t, cutoff)
}

/// Closed-form prices for a list of `(K, T)` pairs. The integer-shape
/// coefficient tables are shared across the list.
pub fn price_calls_closed(
    params: &VGPPParams,
    market: &MarketModel,
    contracts: &[(f64, f64)],
    cutoff: f64,
) -> Result<Vec<f64>> {
    let mut pricer = SeriesPricer::new(params, market)?;
    contracts
        .iter()
        .map(|&(k, t)| Ok(pricer.price(k, t, cutoff)?.price))
        .collect()
}

struct SeriesPricer<'a> {
    params: &'a VGPPParams,
    market: &'a MarketModel,
    omega: f64,
    g: f64,
    m: f64,
    ln_fact: Vec<f64>,
    // ln_coeffs[n - 1] belongs to shape n
    ln_coeffs: Vec<Vec<f64>>,
}

impl<'a> SeriesPricer<'a> {
    fn new(params: &'a VGPPParams, market: &'a MarketModel) -> Result<Self> {
        let omega = vgpp_omega(params)?;
        let base = params.component_cgm(1);
        if !(base.m() > 1.0) {
            return domain(format!(
                "the VG components need M > 1 for a finite forward, got M = {}",
                base.m()
            ));
        }
        Ok(Self {
            params,
            market,
            omega,
            g: base.g(),
            m: base.m(),
            ln_fact: Vec::new(),
            ln_coeffs: Vec::new(),
        })
    }

    fn component(&mut self, n: usize) -> Result<CGMParams> {
        let cgm = CGMParams::new(n as u32, self.g, self.m)?;
        if self.ln_fact.len() < 2 * n {
            self.ln_fact = ln_factorials((4 * n).max(64));
        }
        while self.ln_coeffs.len() < n {
            let shape = self.ln_coeffs.len() + 1;
            let c = CGMParams::new(shape as u32, self.g, self.m)?;
            self.ln_coeffs.push(ln_coefficients_with(&c, &self.ln_fact));
        }
        Ok(cgm)
    }

    fn price(&mut self, k: f64, t: f64, cutoff: f64) -> Result<SeriesPrice> {
        if !(cutoff > 0.0 && cutoff <= 1e-2) {
            return domain(format!("cutoff must lie in (0, 1e-2], got {cutoff}"));
        }
        if !(k > 0.0 && t > 0.0) {
            return domain(format!("need K > 0 and T > 0, got K = {k}, T = {t}"));
        }
        let (f0, r, omega) = (self.market.f0, self.market.r, self.omega);
        let sub = self.params.subordinator();
        let counter = sub.counter(t);
        let atom = sub.atom(t);
        let mut total = atom * (f0 * (omega * t).exp() - k * (-r * t).exp()).max(0.0);
        let mut mass = atom;
        let mut prev = f64::NAN;
        let mut n = 0u64;
        while n < MAX_SERIES_TERMS {
            n += 1;
            let w = polya_ln_pmf(counter, n).exp();
            mass += w;
            let cgm = self.component(n as usize)?;
            let call = vg_ept_call_with(&cgm, &self.ln_coeffs[n as usize - 1], &self.ln_fact, f0, k, r, t, omega)?;
            let term = w * call;
            total += term;
            let ratio = term / prev;
            if (ratio < 1.0 && term * ratio / (1.0 - ratio) <= cutoff * total) || 1.0 - mass < 1e-15 {
                break;
            }
            prev = term;
        }
        if !total.is_finite() {
            return Err(Error::Numerical(format!("series price is not finite at K = {k}")));
        }
        Ok(SeriesPrice {
            price: total,
            terms_used: n,
        })
    }
}

/// Chf of `X(T)` minus the atom, continued to complex arguments, times the
/// forward phase.
fn continuous_log_price_chf(
    params: &VGPPParams,
    market: &MarketModel,
    t: f64,
    omega: f64,
    atom: f64,
    u: Complex64,
) -> Complex64 {
    let drift = market.f0.ln() + (market.r + omega) * t;
    (Complex64::i() * u * drift).exp() * (vgpp_chf_at(params, t, u) - atom)
}

/// Carr-Madan call or put prices (`damping > 0` gives calls, `damping < -1`
/// puts).
///
/// The atom at zero is priced exactly and only the continuous part is
/// inverted, so the integrand decays like the diffuse part of the law. The
/// log-strike grid is centred at `ln F0` and strikes are interpolated
/// linearly in log-strike.
pub fn price_fft(
    params: &VGPPParams,
    market: &MarketModel,
    strikes: &[f64],
    t: f64,
    cfg: &FFTConfig,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    if !(t > 0.0) {
        return domain(format!("maturity must be positive, got {t}"));
    }
    if let Some(k) = strikes.iter().find(|k| !(**k > 0.0 && k.is_finite())) {
        return domain(format!("strikes must be positive, got {k}"));
    }
    let omega = vgpp_omega(params)?;
    let d = cfg.damping;
    let kappa = (d + 1.0) * params.theta() + (d + 1.0).powi(2) * params.sigma().powi(2) / 2.0;
    let b = params.beta();
    if !(b > kappa && b > params.a() * kappa) {
        return domain(format!(
            "damping {d} needs the moment E[e^((damping+1) X)], which is infinite for these parameters"
        ));
    }
    let atom = params.subordinator().atom(t);
    let n = cfg.grid_size;
    let eta = cfg.eta;
    let lambda = 2.0 * std::f64::consts::PI / (n as f64 * eta);
    let k0 = market.f0.ln() - lambda * n as f64 / 2.0;
    let disc = (-market.r * t).exp();
    let i = Complex64::i();
    let mut buf: Vec<Complex64> = (0..n)
        .map(|j| {
            let v = eta * j as f64;
            let u = Complex64::new(v, -(d + 1.0));
            let phi = continuous_log_price_chf(params, market, t, omega, atom, u);
            let denom = Complex64::new(d * d + d - v * v, (2.0 * d + 1.0) * v);
            let psi = disc * phi / denom;
            let simpson = if j == 0 {
                1.0 / 3.0
            } else if j % 2 == 1 {
                4.0 / 3.0
            } else {
                2.0 / 3.0
            };
            (-i * v * k0).exp() * psi * (eta * simpson)
        })
        .collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let fwd = market.f0 * ((market.r + omega) * t).exp();
    // Intrinsic value of the continuous part; subtracting it before
    // interpolation keeps call and put grids consistent with parity.
    let cont_fwd = market.f0 * (market.r * t).exp() - atom * fwd;
    let cont_intrinsic = |strike: f64| {
        let v = disc * (cont_fwd - (1.0 - atom) * strike);
        if d > 0.0 { v.max(0.0) } else { (-v).max(0.0) }
    };
    let time_value = |idx: usize| {
        let ku = k0 + lambda * idx as f64;
        (-d * ku).exp() / std::f64::consts::PI * buf[idx].re - cont_intrinsic(ku.exp())
    };
    let mut out = Vec::with_capacity(strikes.len());
    for &k in strikes {
        let pos = (k.ln() - k0) / lambda;
        if !(pos >= 0.0 && pos < (n - 1) as f64) {
            return domain(format!("strike {k} lies outside the FFT log-strike grid"));
        }
        let lo = pos.floor() as usize;
        let w = pos - lo as f64;
        let cont = (1.0 - w) * time_value(lo) + w * time_value(lo + 1) + cont_intrinsic(k);
        let intrinsic = if d > 0.0 { fwd - k } else { k - fwd };
        let mut price = cont + atom * disc * intrinsic.max(0.0);
        if price < 0.0 {
            log::warn!("FFT price {price} at K = {k} floored at 0");
            price = 0.0;
        }
        out.push(price);
    }
    Ok(out)
}

pub fn price_call_fft(
    params: &VGPPParams,
    market: &MarketModel,
    strikes: &[f64],
    t: f64,
    cfg: &FFTConfig,
) -> Result<Vec<f64>> {
    if !(cfg.damping > 0.0) {
        return domain(format!("call damping must be positive, got {}", cfg.damping));
    }
    price_fft(params, market, strikes, t, cfg)
}

/// Put prices from the same inversion with the damping reflected to
/// `-(1 + damping)`.
pub fn price_put_fft(
    params: &VGPPParams,
    market: &MarketModel,
    strikes: &[f64],
    t: f64,
    cfg: &FFTConfig,
) -> Result<Vec<f64>> {
    let reflected = FFTConfig {
        damping: -(1.0 + cfg.damping.abs()),
        ..*cfg
    };
    price_fft(params, market, strikes, t, &reflected)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct McPrice {
    pub price: f64,
    pub stderr: f64,
}

/// Monte Carlo call price from `n_paths` terminal draws.
pub fn price_call_mc(
    params: &VGPPParams,
    market: &MarketModel,
    k: f64,
    t: f64,
    n_paths: usize,
    rng: &RngStream,
) -> Result<McPrice> {
    Ok(price_calls_mc(params, market, &[k], t, n_paths, rng)?[0])
}

/// Monte Carlo call prices for several strikes on common draws.
pub fn price_calls_mc(
    params: &VGPPParams,
    market: &MarketModel,
    strikes: &[f64],
    t: f64,
    n_paths: usize,
    rng: &RngStream,
) -> Result<Vec<McPrice>> {
    if n_paths < 1000 {
        return domain(format!("Monte Carlo needs at least 1000 paths, got {n_paths}"));
    }
    if !(t > 0.0) {
        return domain(format!("maturity must be positive, got {t}"));
    }
    let omega = vgpp_omega(params)?;
    let fwd = market.f0 * ((market.r + omega) * t).exp();
    let disc = (-market.r * t).exp();
    let nk = strikes.len();
    let partial = run_chunks(n_paths, rng, |len, r| {
        let mut acc = vec![(0.0f64, 0.0f64); nk];
        for _ in 0..len {
            let f = fwd * vgpp_sample(params, t, r).exp();
            for (a, &k) in acc.iter_mut().zip(strikes) {
                let p = disc * (f - k).max(0.0);
                a.0 += p;
                a.1 += p * p;
            }
        }
        acc
    });
    let nf = n_paths as f64;
    Ok((0..nk)
        .map(|j| {
            let (s, s2) = partial
                .iter()
                .fold((0.0, 0.0), |(a, b), c| (a + c[j].0, b + c[j].1));
            let mean = s / nf;
            let var = (s2 / nf - mean * mean).max(0.0) * nf / (nf - 1.0);
            McPrice {
                price: mean,
                stderr: (var / nf).sqrt(),
            }
        })
        .collect())
}
