//! Parameter estimation with the clock constraint `beta = (1 - a) alpha`:
//! maximum likelihood and moment matching on return series, least squares on
//! call quotes.

mod data;
pub mod optim;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use data::{Quote, QuoteSet, ReturnSeries, DEFAULT_DT};
use optim::{levenberg_marquardt, nelder_mead, Minimum, Termination};

use crate::error::{domain, Result};
use crate::pricing::{price_calls_closed, price_call_fft, vgpp_omega, FFTConfig};
use crate::stats::sample_moments;
use crate::vgpp::{prob_zero_increment, vgpp_cumulant, ContinuousDensity, VGPPParams};

/// Increments with `|dx| <= atom_eps` are read as the atom at zero.
pub const DEFAULT_ATOM_EPS: f64 = 1e-10;
/// Series truncation used by the closed-form pricer inside the least-squares fit.
pub const NLLS_CUTOFF: f64 = 1e-12;
/// Objective value returned where the model cannot be evaluated.
pub const PENALTY: f64 = 1e10;
const N_STARTS: usize = 5;
const SIMPLEX_STEP: f64 = 0.5;
const START_SPREAD: f64 = 0.6;

/// Parameters with the clock constraint applied.
pub fn constrained_params(theta: f64, sigma: f64, a: f64, alpha: f64) -> Result<VGPPParams> {
    VGPPParams::new(theta, sigma, a, alpha, (1.0 - a) * alpha)
}

fn satisfies_constraint(p: &VGPPParams) -> bool {
    (p.beta() - (1.0 - p.a()) * p.alpha()).abs() <= 1e-12 * p.beta().abs().max(1.0)
}

/// Open box for `(theta, sigma, a, alpha)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibBounds {
    pub theta: (f64, f64),
    pub sigma: (f64, f64),
    pub a: (f64, f64),
    pub alpha: (f64, f64),
}

impl Default for CalibBounds {
    fn default() -> Self {
        Self {
            theta: (-5.0, 5.0),
            sigma: (1e-3, 5.0),
            a: (0.01, 0.99),
            alpha: (0.1, 1e5),
        }
    }
}

const NAMES: [&str; 4] = ["theta", "sigma", "a", "alpha"];
// sigma and alpha vary over orders of magnitude and are mapped on a log scale
const LOG_SCALE: [bool; 4] = [false, true, false, true];

fn logistic(y: f64) -> f64 {
    1.0 / (1.0 + (-y).exp())
}

impl CalibBounds {
    fn ranges(&self) -> [(f64, f64); 4] {
        [self.theta, self.sigma, self.a, self.alpha]
    }

    pub fn validate(&self) -> Result<()> {
        for ((name, (lo, hi)), log) in NAMES.iter().zip(self.ranges()).zip(LOG_SCALE) {
            if !(lo < hi && lo.is_finite() && hi.is_finite()) || (log && !(lo > 0.0)) {
                return domain(format!("bad bounds for {name}: ({lo}, {hi})"));
            }
        }
        if !(self.a.0 > 0.0 && self.a.1 < 1.0) {
            return domain("bounds for a must lie inside (0, 1)");
        }
        Ok(())
    }

    pub fn to_free(&self, p: &VGPPParams) -> Result<Vec<f64>> {
        let values = [p.theta(), p.sigma(), p.a(), p.alpha()];
        let mut y = Vec::with_capacity(4);
        for (((v, (lo, hi)), log), name) in values.into_iter().zip(self.ranges()).zip(LOG_SCALE).zip(NAMES) {
            if !(v > lo && v < hi) {
                return domain(format!("initial {name} = {v} outside the bounds ({lo}, {hi})"));
            }
            let (v, lo, hi) = if log { (v.ln(), lo.ln(), hi.ln()) } else { (v, lo, hi) };
            y.push(((v - lo) / (hi - v)).ln());
        }
        Ok(y)
    }

    pub fn from_free(&self, y: &[f64]) -> Result<VGPPParams> {
        let mut v = [0.0; 4];
        for (i, ((lo, hi), log)) in self.ranges().into_iter().zip(LOG_SCALE).enumerate() {
            v[i] = if log {
                (lo.ln() + (hi.ln() - lo.ln()) * logistic(y[i])).exp()
            } else {
                lo + (hi - lo) * logistic(y[i])
            };
        }
        constrained_params(v[0], v[1], v[2], v[3])
    }

    /// Names of parameters pinned against a bound.
    fn boundary_flags(&self, y: &[f64]) -> Vec<String> {
        NAMES
            .iter()
            .zip(y)
            .filter_map(|(name, &yi)| {
                if yi > 9.0 {
                    Some(format!("{name}_at_upper_bound"))
                } else if yi < -9.0 {
                    Some(format!("{name}_at_lower_bound"))
                } else {
                    None
                }
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StartReport {
    pub objective: f64,
    pub converged: bool,
    pub n_evals: usize,
}

/// Outcome of a fit. `p_zero` is the probability of a zero increment over `dt`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CalibResult {
    pub method: String,
    pub params: VGPPParams,
    pub objective: f64,
    pub converged: bool,
    pub n_evals: usize,
    pub dt: f64,
    pub p_zero: f64,
    /// Model minus quoted price, for quote fits.
    pub residuals: Vec<f64>,
    pub rmse: Option<f64>,
    pub flags: Vec<String>,
    pub starts: Vec<StartReport>,
}

fn start_points(y0: &[f64]) -> Vec<Vec<f64>> {
    const PATTERNS: [[f64; 4]; 4] = [
        [1.0, 1.0, -1.0, -1.0],
        [-1.0, 1.0, 1.0, -1.0],
        [1.0, -1.0, 1.0, 1.0],
        [-1.0, -1.0, -1.0, 1.0],
    ];
    let mut starts = vec![y0.to_vec()];
    for pat in PATTERNS.iter().take(N_STARTS - 1) {
        starts.push(y0.iter().zip(pat).map(|(y, s)| y + START_SPREAD * s).collect());
    }
    starts
}

/// Runs `search` from every start concurrently; the best objective wins, ties
/// going to the earlier start.
fn multistart(
    method: &str,
    bounds: &CalibBounds,
    init: &VGPPParams,
    dt: f64,
    search: impl Fn(&[f64]) -> Minimum + Sync,
) -> Result<CalibResult> {
    bounds.validate()?;
    let init = constrained_params(init.theta(), init.sigma(), init.a(), init.alpha())?;
    let y0 = bounds.to_free(&init)?;
    let runs: Vec<Minimum> = start_points(&y0).par_iter().map(|y| search(y)).collect();
    let mut best = 0;
    for (i, r) in runs.iter().enumerate() {
        if r.value < runs[best].value {
            best = i;
        }
    }
    let winner = &runs[best];
    let params = bounds.from_free(&winner.x)?;
    let mut flags = bounds.boundary_flags(&winner.x);
    if !runs.iter().any(|r| r.converged) {
        flags.push("no_start_converged".into());
    }
    Ok(CalibResult {
        method: method.into(),
        params,
        objective: winner.value,
        converged: winner.converged,
        n_evals: runs.iter().map(|r| r.n_evals).sum(),
        dt,
        p_zero: prob_zero_increment(&params, dt),
        residuals: Vec::new(),
        rmse: None,
        flags,
        starts: runs
            .iter()
            .map(|r| StartReport {
                objective: r.value,
                converged: r.converged,
                n_evals: r.n_evals,
            })
            .collect(),
    })
}

/// Censored-mixture log-likelihood of the series increments: increments with
/// `|dx| <= atom_eps` contribute the atom mass `a^{alpha dt}`, the others the
/// continuous density. Returns `-inf` where the density underflows.
pub fn log_likelihood(params: &VGPPParams, series: &ReturnSeries, atom_eps: f64) -> Result<f64> {
    if !satisfies_constraint(params) {
        return domain(format!(
            "likelihood requires beta = (1 - a) alpha, got beta = {} with a = {}, alpha = {}",
            params.beta(),
            params.a(),
            params.alpha()
        ));
    }
    if !(atom_eps >= 0.0) {
        return domain(format!("atom_eps must be nonnegative, got {atom_eps}"));
    }
    let dt = series.dt();
    let ln_atom = params.alpha() * dt * params.a().ln();
    let density = ContinuousDensity::new(params, dt);
    let mut total = 0.0;
    for dx in series.increments() {
        if dx.abs() <= atom_eps {
            total += ln_atom;
        } else {
            let lf = density.ln_eval(dx);
            if !lf.is_finite() {
                return Ok(f64::NEG_INFINITY);
            }
            total += lf;
        }
    }
    Ok(total)
}

/// Moment-based starting point: `a = 1/2`, `alpha` matching the zero
/// fraction, `theta` the mean and `sigma` the variance of the increments.
pub fn initial_guess(series: &ReturnSeries, atom_eps: f64) -> Result<VGPPParams> {
    let inc = series.increments();
    if inc.len() < 2 {
        return domain("need at least three observations");
    }
    let dt = series.dt();
    let n = inc.len() as f64;
    let zeros = inc.iter().filter(|d| d.abs() <= atom_eps).count() as f64;
    let p0 = ((zeros + 0.5) / (n + 1.0)).clamp(0.01, 0.99);
    let a = 0.5f64;
    let alpha = (p0.ln() / (dt * a.ln())).clamp(0.2, 5e4);
    let m = sample_moments(&inc);
    let theta = (m.mean / dt).clamp(-4.0, 4.0);
    let beta = (1.0 - a) * alpha;
    let clock_var_rate = alpha * (1.0 - a * a) / (beta * beta);
    let sigma = ((m.variance / dt - theta * theta * clock_var_rate).max(1e-4)).sqrt().clamp(2e-3, 4.0);
    constrained_params(theta, sigma, a, alpha)
}

/// Maximum likelihood with multi-start Nelder-Mead.
pub fn mle_fit(
    series: &ReturnSeries,
    init: &VGPPParams,
    bounds: &CalibBounds,
    atom_eps: f64,
) -> Result<CalibResult> {
    if series.len() < 3 {
        return domain("need at least three observations");
    }
    let objective = |y: &[f64]| match bounds.from_free(y) {
        Ok(p) => match log_likelihood(&p, series, atom_eps) {
            Ok(l) if l.is_finite() => -l,
            _ => f64::INFINITY,
        },
        Err(_) => f64::INFINITY,
    };
    let mut res = multistart("mle", bounds, init, series.dt(), |y| {
        nelder_mead(objective, y, SIMPLEX_STEP, Termination::default())
    })?;
    if series.increments().iter().all(|d| d.abs() <= atom_eps) {
        res.flags.push("degenerate_series".into());
    }
    Ok(res)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GmmWeighting {
    /// Squared relative distance to each target.
    Relative,
    /// Plain squared distance.
    Equal,
}

/// Mean, variance, skewness `c3/c2^{3/2}` and kurtosis `c4/c2^2` of increments.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MomentTargets {
    pub mean: f64,
    pub variance: f64,
    pub skewness: f64,
    pub kurtosis: f64,
}

impl MomentTargets {
    fn as_array(&self) -> [f64; 4] {
        [self.mean, self.variance, self.skewness, self.kurtosis]
    }

    pub fn of_model(params: &VGPPParams, dt: f64) -> Self {
        let c: Vec<f64> = (1..=4)
            .map(|n| vgpp_cumulant(params, dt, n).expect("order in range"))
            .collect();
        Self {
            mean: c[0],
            variance: c[1],
            skewness: c[2] / c[1].powf(1.5),
            kurtosis: c[3] / (c[1] * c[1]),
        }
    }

    pub fn of_sample(increments: &[f64]) -> Result<Self> {
        let m = sample_moments(increments);
        if !(m.variance > 0.0) {
            return domain("moment matching needs increments with positive sample variance");
        }
        Ok(Self {
            mean: m.mean,
            variance: m.variance,
            skewness: m.skewness,
            kurtosis: m.kurtosis - 3.0,
        })
    }
}

pub fn gmm_objective(params: &VGPPParams, targets: &MomentTargets, dt: f64, weighting: GmmWeighting) -> f64 {
    let model = MomentTargets::of_model(params, dt).as_array();
    model
        .iter()
        .zip(targets.as_array())
        .map(|(m, t)| {
            let d = match weighting {
                GmmWeighting::Relative => (m - t) / t.abs().max(f64::MIN_POSITIVE),
                GmmWeighting::Equal => m - t,
            };
            d * d
        })
        .sum()
}

/// Moment matching with relative weighting.
pub fn gmm_fit(series: &ReturnSeries, init: &VGPPParams, bounds: &CalibBounds) -> Result<CalibResult> {
    gmm_fit_weighted(series, init, bounds, GmmWeighting::Relative)
}

pub fn gmm_fit_weighted(
    series: &ReturnSeries,
    init: &VGPPParams,
    bounds: &CalibBounds,
    weighting: GmmWeighting,
) -> Result<CalibResult> {
    if series.len() < 100 {
        return domain(format!("moment matching needs at least 100 observations, got {}", series.len()));
    }
    let targets = MomentTargets::of_sample(&series.increments())?;
    let dt = series.dt();
    let objective = |y: &[f64]| match bounds.from_free(y) {
        Ok(p) => gmm_objective(&p, &targets, dt, weighting),
        Err(_) => f64::INFINITY,
    };
    multistart("gmm", bounds, init, dt, |y| {
        nelder_mead(objective, y, SIMPLEX_STEP, Termination::default())
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QuotePricer {
    Closed,
    Fft,
}

/// Model minus quoted price for every quote.
pub fn quote_residuals(params: &VGPPParams, quotes: &QuoteSet, pricer: QuotePricer) -> Result<Vec<f64>> {
    let market = quotes.market();
    match pricer {
        QuotePricer::Closed => {
            let contracts: Vec<(f64, f64)> = quotes.quotes().iter().map(|q| (q.k, q.t)).collect();
            let prices = price_calls_closed(params, market, &contracts, NLLS_CUTOFF)?;
            Ok(prices.iter().zip(quotes.quotes()).map(|(p, q)| p - q.mid).collect())
        }
        QuotePricer::Fft => {
            let mut out = vec![0.0; quotes.len()];
            let mut maturities: Vec<f64> = quotes.quotes().iter().map(|q| q.t).collect();
            maturities.sort_by(f64::total_cmp);
            maturities.dedup();
            for t in maturities {
                let idx: Vec<usize> = (0..quotes.len()).filter(|&i| quotes.quotes()[i].t == t).collect();
                let strikes: Vec<f64> = idx.iter().map(|&i| quotes.quotes()[i].k).collect();
                let prices = price_call_fft(params, market, &strikes, t, &FFTConfig::default())?;
                for (&i, p) in idx.iter().zip(prices) {
                    out[i] = p - quotes.quotes()[i].mid;
                }
            }
            Ok(out)
        }
    }
}

/// Least squares on call quotes with multi-start Levenberg-Marquardt.
///
/// The starts search with FFT residuals, whose cost does not grow with the
/// clock intensity; with [`QuotePricer::Closed`] the best start is then
/// polished on the series prices.
pub fn nlls_fit(
    quotes: &QuoteSet,
    init: &VGPPParams,
    bounds: &CalibBounds,
    pricer: QuotePricer,
) -> Result<CalibResult> {
    let init = constrained_params(init.theta(), init.sigma(), init.a(), init.alpha())?;
    vgpp_omega(&init)?;
    let residuals = |pricer| {
        move |y: &[f64]| {
            let p = bounds.from_free(y).ok()?;
            quote_residuals(&p, quotes, pricer).ok()
        }
    };
    let search = residuals(QuotePricer::Fft);
    let mut res = multistart("nlls", bounds, &init, DEFAULT_DT, |y| {
        let mut m = levenberg_marquardt(search, y, Termination::default());
        if !m.value.is_finite() {
            m.value = PENALTY;
        }
        m
    })?;
    if pricer == QuotePricer::Closed {
        let y = bounds.to_free(&res.params)?;
        let polish = levenberg_marquardt(residuals(QuotePricer::Closed), &y, Termination::default());
        res.n_evals += polish.n_evals;
        if polish.value.is_finite() {
            res.params = bounds.from_free(&polish.x)?;
            res.objective = polish.value;
            res.converged = polish.converged;
            res.p_zero = prob_zero_increment(&res.params, DEFAULT_DT);
            res.flags = bounds.boundary_flags(&polish.x);
        } else {
            res.flags.push("polish_failed".into());
        }
    }
    res.residuals = quote_residuals(&res.params, quotes, pricer)?;
    res.rmse = Some((res.residuals.iter().map(|r| r * r).sum::<f64>() / quotes.len() as f64).sqrt());
    if quotes.len() < NAMES.len() {
        res.flags.push("under_identified".into());
    }
    Ok(res)
}
