//! Early-exercise and path-dependent contracts by Monte Carlo: Longstaff-Schwartz
//! American puts on forward or backward simulated paths, and fixed-strike
//! lookback calls on the discretely monitored maximum. A plain Variance Gamma
//! model is included as the liquid benchmark.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::distributions::{gamma_draw, std_normal, RngStream};
use crate::ept::cgm_from_vg;
use crate::error::{domain, Result};
use crate::mc::run_chunks;
use crate::pricing::{vgpp_omega, MarketModel, McPrice};
use crate::vgpp::{vgpp_sample, BackwardSlice, VGPPParams};

/// Order in which path values are generated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// Full path matrix, generated from the origin onwards.
    Forward,
    /// Terminal values first, then bridged back one time slice at a time.
    Backward,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LSMCConfig {
    pub n_paths: usize,
    pub n_steps: usize,
    pub basis_degree: usize,
    pub direction: Direction,
}

impl Default for LSMCConfig {
    fn default() -> Self {
        Self {
            n_paths: 100_000,
            n_steps: 66,
            basis_degree: 3,
            direction: Direction::Backward,
        }
    }
}

impl LSMCConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_paths < 10_000 {
            return domain(format!("LSMC needs at least 10^4 paths, got {}", self.n_paths));
        }
        if self.n_steps < 4 {
            return domain(format!("LSMC needs at least 4 exercise dates, got {}", self.n_steps));
        }
        if !(2..=5).contains(&self.basis_degree) {
            return domain(format!("basis degree must be in 2..=5, got {}", self.basis_degree));
        }
        Ok(())
    }
}

/// LSMC estimate together with the European put on the same paths.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LsmcPrice {
    pub price: f64,
    pub stderr: f64,
    pub european: f64,
    pub european_stderr: f64,
    /// Immediate exercise beats the continuation estimate.
    pub exercise_now: bool,
}

fn mean_and_stderr(sum: f64, sum_sq: f64, n: usize) -> (f64, f64) {
    let nf = n as f64;
    let mean = sum / nf;
    let var = (sum_sq / nf - mean * mean).max(0.0) * nf / (nf - 1.0);
    (mean, (var / nf).sqrt())
}

/// Least-squares fit of `value` on powers of `F/K - 1` over in-the-money paths,
/// accumulated as normal equations. `None` when too few paths are in the money.
fn regress_continuation(prices: &[f64], value: &[f64], k: f64, degree: usize) -> Option<DVector<f64>> {
    let p = degree + 1;
    let mut xtx = DMatrix::<f64>::zeros(p, p);
    let mut xty = DVector::<f64>::zeros(p);
    let mut basis = vec![0.0; p];
    let mut count = 0;
    for (&f, &v) in prices.iter().zip(value) {
        if f >= k {
            continue;
        }
        count += 1;
        fill_basis(f / k - 1.0, &mut basis);
        for i in 0..p {
            xty[i] += basis[i] * v;
            for j in 0..=i {
                xtx[(i, j)] += basis[i] * basis[j];
            }
        }
    }
    if count <= p {
        return None;
    }
    for i in 0..p {
        for j in 0..i {
            xtx[(j, i)] = xtx[(i, j)];
        }
    }
    match xtx.clone().cholesky() {
        Some(c) => Some(c.solve(&xty)),
        None => xtx.lu().solve(&xty),
    }
}

fn fill_basis(z: f64, out: &mut [f64]) {
    let mut v = 1.0;
    for b in out.iter_mut() {
        *b = v;
        v *= z;
    }
}

fn fitted(coef: &DVector<f64>, z: f64) -> f64 {
    coef.iter().rev().fold(0.0, |acc, c| acc * z + c)
}

/// Backward induction shared by both directions. `prices_at(j, buf)` fills
/// `buf` with the forward prices on exercise date `j` (1..=n_steps); it is
/// called for decreasing `j`.
fn lsmc_induction(
    market: &MarketModel,
    k: f64,
    t: f64,
    cfg: &LSMCConfig,
    mut prices_at: impl FnMut(usize, &mut Vec<f64>) -> Result<()>,
) -> Result<LsmcPrice> {
    let n = cfg.n_paths;
    let step_disc = (-market.r() * t / cfg.n_steps as f64).exp();
    let mut prices = Vec::with_capacity(n);
    prices_at(cfg.n_steps, &mut prices)?;
    let mut cash: Vec<f64> = prices.iter().map(|f| (k - f).max(0.0)).collect();
    let (s, s2) = cash.iter().fold((0.0, 0.0), |(a, b), c| (a + c, b + c * c));
    let (euro, euro_se) = mean_and_stderr(s, s2, n);
    let disc_t = (-market.r() * t).exp();
    for j in (1..cfg.n_steps).rev() {
        cash.iter_mut().for_each(|c| *c *= step_disc);
        prices_at(j, &mut prices)?;
        if let Some(coef) = regress_continuation(&prices, &cash, k, cfg.basis_degree) {
            for (c, &f) in cash.iter_mut().zip(&prices) {
                let intrinsic = k - f;
                if intrinsic > 0.0 && intrinsic >= fitted(&coef, f / k - 1.0) {
                    *c = intrinsic;
                }
            }
        }
    }
    let (s, s2) = cash
        .iter()
        .map(|c| c * step_disc)
        .fold((0.0, 0.0), |(a, b), c| (a + c, b + c * c));
    let (cont, se) = mean_and_stderr(s, s2, n);
    let intrinsic = (k - market.f0()).max(0.0);
    Ok(LsmcPrice {
        price: cont.max(intrinsic),
        stderr: se,
        european: disc_t * euro,
        european_stderr: disc_t * euro_se,
        exercise_now: intrinsic > cont,
    })
}

/// American put by Longstaff-Schwartz on `cfg.n_steps` equispaced exercise
/// dates, with exercise at the origin when it beats continuation.
pub fn price_american_put_lsmc(
    params: &VGPPParams,
    market: &MarketModel,
    k: f64,
    t: f64,
    cfg: &LSMCConfig,
    rng: &RngStream,
) -> Result<LsmcPrice> {
    cfg.validate()?;
    if !(k > 0.0 && t > 0.0) {
        return domain(format!("K and T must be positive, got K={k}, T={t}"));
    }
    let omega = vgpp_omega(params)?;
    let n_steps = cfg.n_steps;
    let dt = t / n_steps as f64;
    let drift = market.r() + omega;
    let f0 = market.f0();
    match cfg.direction {
        Direction::Forward => {
            // Path-major log-increment sums, n_steps values per path.
            let x: Vec<f64> = run_chunks(cfg.n_paths, rng, |len, r| {
                let mut out = Vec::with_capacity(len * n_steps);
                for _ in 0..len {
                    let mut acc = 0.0;
                    for _ in 0..n_steps {
                        acc += vgpp_sample(params, dt, r);
                        out.push(acc);
                    }
                }
                out
            })
            .into_iter()
            .flatten()
            .collect();
            lsmc_induction(market, k, t, cfg, |j, buf| {
                let level = f0 * (drift * j as f64 * dt).exp();
                buf.clear();
                buf.extend(x[j - 1..].iter().step_by(n_steps).map(|v| level * v.exp()));
                Ok(())
            })
        }
        Direction::Backward => {
            let mut r = rng.clone();
            let mut slice: Option<BackwardSlice> = None;
            lsmc_induction(market, k, t, cfg, |j, buf| {
                let tj = j as f64 * dt;
                let next = match slice.take() {
                    None => BackwardSlice::terminal(params, t, cfg.n_paths, &mut r)?,
                    Some(s) => s.step_back(params, tj, &mut r)?,
                };
                let level = f0 * (drift * tj).exp();
                buf.clear();
                buf.extend(next.x.iter().map(|v| level * v.exp()));
                slice = Some(next);
                Ok(())
            })
        }
    }
}

/// Fixed-strike lookback calls `(max_i F(t_i) - K)^+` for several monitoring
/// frequencies on the same simulated paths. Every entry of `n_steps` must
/// divide the largest one, so the coarser grids are subsets of the finest.
pub fn price_lookback_ladder(
    params: &VGPPParams,
    market: &MarketModel,
    k: f64,
    t: f64,
    n_steps: &[usize],
    n_paths: usize,
    rng: &RngStream,
) -> Result<Vec<McPrice>> {
    let omega = vgpp_omega(params)?;
    lookback_ladder(market, omega, k, t, n_steps, n_paths, rng, |dt, r| vgpp_sample(params, dt, r))
}

/// Fixed-strike lookback call on the maximum over `n_steps` equispaced dates.
pub fn price_lookback_call_max(
    params: &VGPPParams,
    market: &MarketModel,
    k: f64,
    t: f64,
    n_steps: usize,
    n_paths: usize,
    rng: &RngStream,
) -> Result<McPrice> {
    Ok(price_lookback_ladder(params, market, k, t, &[n_steps], n_paths, rng)?[0])
}

#[allow(clippy::too_many_arguments)]
fn lookback_ladder(
    market: &MarketModel,
    omega: f64,
    k: f64,
    t: f64,
    n_steps: &[usize],
    n_paths: usize,
    rng: &RngStream,
    increment: impl Fn(f64, &mut RngStream) -> f64 + Sync,
) -> Result<Vec<McPrice>> {
    if !(k > 0.0 && t > 0.0) {
        return domain(format!("K and T must be positive, got K={k}, T={t}"));
    }
    if n_paths < 2 {
        return domain("need at least two paths");
    }
    let finest = n_steps.iter().copied().max().unwrap_or(0);
    if finest == 0 || n_steps.iter().any(|&m| m == 0 || finest % m != 0) {
        return domain(format!("monitoring counts {n_steps:?} must be positive and divide the largest"));
    }
    let dt = t / finest as f64;
    let drift = market.r() + omega;
    let disc = (-market.r() * t).exp();
    let partial = run_chunks(n_paths, rng, |len, r| {
        let mut acc = vec![(0.0f64, 0.0f64); n_steps.len()];
        let mut peak = vec![0.0f64; n_steps.len()];
        for _ in 0..len {
            peak.iter_mut().for_each(|p| *p = f64::NEG_INFINITY);
            let mut x = 0.0;
            for i in 1..=finest {
                x += increment(dt, r);
                let f = market.f0() * (drift * i as f64 * dt + x).exp();
                for (p, &m) in peak.iter_mut().zip(n_steps) {
                    if i % (finest / m) == 0 {
                        *p = p.max(f);
                    }
                }
            }
            for (a, p) in acc.iter_mut().zip(&peak) {
                let v = disc * (p - k).max(0.0);
                a.0 += v;
                a.1 += v * v;
            }
        }
        acc
    });
    Ok((0..n_steps.len())
        .map(|j| {
            let (s, s2) = partial.iter().fold((0.0, 0.0), |(a, b), c| (a + c[j].0, b + c[j].1));
            let (price, stderr) = mean_and_stderr(s, s2, n_paths);
            McPrice { price, stderr }
        })
        .collect())
}

/// Variance Gamma: Brownian motion with drift `theta` and volatility `sigma`
/// on a Gamma(alpha t, beta) clock.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VGParams {
    pub theta: f64,
    pub sigma: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl VGParams {
    pub fn new(theta: f64, sigma: f64, alpha: f64, beta: f64) -> Result<Self> {
        if !(theta.is_finite() && sigma > 0.0 && alpha > 0.0 && beta > 0.0)
            || !(sigma.is_finite() && alpha.is_finite() && beta.is_finite())
        {
            return domain(format!(
                "VG needs finite theta and positive sigma, alpha, beta; got ({theta}, {sigma}, {alpha}, {beta})"
            ));
        }
        Ok(Self { theta, sigma, alpha, beta })
    }

    /// Rates `(G, M)` of the negative and positive jumps.
    pub fn cgm_rates(&self) -> (f64, f64) {
        cgm_from_vg(self.beta, self.sigma, self.theta)
    }

    /// Rate `omega` making `e^{omega t + X(t)}` a martingale.
    pub fn omega(&self) -> Result<f64> {
        let (g, m) = self.cgm_rates();
        if !(m > 1.0) {
            return domain(format!("the exponential moment requires M > 1, got M = {m}"));
        }
        Ok(self.alpha * ((m - 1.0) * (g + 1.0) / (g * m)).ln())
    }

    pub fn sample(&self, t: f64, rng: &mut RngStream) -> f64 {
        let z = gamma_draw(self.alpha * t, self.beta, rng);
        self.theta * z + self.sigma * z.sqrt() * std_normal(rng)
    }
}

/// VG with the same Brownian part whose clock has the mean and variance of the
/// VG++ clock, so the two processes share their first two moments.
pub fn vg_matched_to(params: &VGPPParams) -> VGParams {
    let (a, alpha, beta) = (params.a(), params.alpha(), params.beta());
    let mean = alpha * (1.0 - a) / beta;
    let var = alpha * (1.0 - a * a) / (beta * beta);
    VGParams {
        theta: params.theta(),
        sigma: params.sigma(),
        alpha: mean * mean / var,
        beta: mean / var,
    }
}

/// European call under VG by simulation.
pub fn price_european_vg_mc(
    params: &VGParams,
    market: &MarketModel,
    k: f64,
    t: f64,
    n_paths: usize,
    rng: &RngStream,
) -> Result<McPrice> {
    let omega = params.omega()?;
    if !(k > 0.0 && t > 0.0) {
        return domain(format!("K and T must be positive, got K={k}, T={t}"));
    }
    if n_paths < 2 {
        return domain("need at least two paths");
    }
    let fwd = market.f0() * ((market.r() + omega) * t).exp();
    let disc = (-market.r() * t).exp();
    let partial = run_chunks(n_paths, rng, |len, r| {
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..len {
            let v = disc * (fwd * params.sample(t, r).exp() - k).max(0.0);
            s += v;
            s2 += v * v;
        }
        (s, s2)
    });
    let (s, s2) = partial.iter().fold((0.0, 0.0), |(a, b), c| (a + c.0, b + c.1));
    let (price, stderr) = mean_and_stderr(s, s2, n_paths);
    Ok(McPrice { price, stderr })
}

/// Lookback ladder as in [`price_lookback_ladder`] under VG.
pub fn price_lookback_ladder_vg(
    params: &VGParams,
    market: &MarketModel,
    k: f64,
    t: f64,
    n_steps: &[usize],
    n_paths: usize,
    rng: &RngStream,
) -> Result<Vec<McPrice>> {
    let omega = params.omega()?;
    lookback_ladder(market, omega, k, t, n_steps, n_paths, rng, |dt, r| params.sample(dt, r))
}
