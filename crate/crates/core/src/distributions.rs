//! Seedable random streams and the base laws consumed by the simulation
//! algorithms.
//!
//! Every continuous law here is parameterized by shape and **rate**, never by
//! scale: `gamma_sample(shape, rate, ..)` has mean `shape / rate`.
//!
//! The Polya law (negative binomial with real shape) uses the convention
//! `P(S = k) = C(shape + k - 1, k) (1 - p)^shape p^k`, so `p` is the
//! probability attached to each counted event and the mean is
//! `shape * p / (1 - p)`.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Binomial, Distribution, Exp, Gamma, Normal, Poisson, StandardUniform};
use statrs::function::gamma::ln_gamma;

use crate::error::{domain, Result};

/// A reproducible random stream identified by `(seed, stream_id)`.
///
/// Two streams with the same pair produce bit-identical sequences; distinct
/// `stream_id`s select disjoint ChaCha streams under the same key, so workers
/// that own distinct ids draw independent numbers.
#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        Self {
            seed,
            stream_id,
            rng,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Child stream for the `index`-th work partition of this stream.
    ///
    /// The child depends only on `(seed, stream_id, index)`, not on how much
    /// of the parent has been consumed.
    pub fn partition(&self, index: u64) -> RngStream {
        let id = splitmix64(self.stream_id ^ splitmix64(index.wrapping_add(0x5851_F42D_4C95_7F2D)));
        RngStream::new(self.seed, id)
    }

    /// Uniform draw on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        StandardUniform.sample(&mut self.rng)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

/// Parameters of the Polya (real-shape negative binomial) law.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PolyaParams {
    shape: f64,
    success_prob: f64,
}

impl PolyaParams {
    pub fn new(shape: f64, success_prob: f64) -> Result<Self> {
        if !(shape.is_finite() && shape > 0.0) {
            return domain(format!("Polya shape must be positive, got {shape}"));
        }
        if !(success_prob > 0.0 && success_prob < 1.0) {
            return domain(format!(
                "Polya success probability must lie in (0, 1), got {success_prob}"
            ));
        }
        Ok(Self {
            shape,
            success_prob,
        })
    }

    pub fn shape(&self) -> f64 {
        self.shape
    }

    pub fn success_prob(&self) -> f64 {
        self.success_prob
    }

    pub fn mean(&self) -> f64 {
        self.shape * self.success_prob / (1.0 - self.success_prob)
    }
}

/// Log of the generalized binomial coefficient `C(shape + k - 1, k)`.
pub(crate) fn ln_rising_binomial(shape: f64, k: u64) -> f64 {
    let k = k as f64;
    ln_gamma(shape + k) - ln_gamma(k + 1.0) - ln_gamma(shape)
}

pub fn polya_ln_pmf(params: PolyaParams, k: u64) -> f64 {
    let p = params.success_prob;
    ln_rising_binomial(params.shape, k) + params.shape * (-p).ln_1p() + k as f64 * p.ln()
}

pub fn polya_pmf(params: PolyaParams, k: u64) -> f64 {
    polya_ln_pmf(params, k).exp()
}

/// Polya draw through the gamma-Poisson mixture: `S | L ~ Poisson(L)` with
/// `L ~ Gamma(shape, rate = (1 - p) / p)`. Exact for every real shape.
pub fn polya_sample(params: PolyaParams, rng: &mut RngStream) -> u64 {
    let p = params.success_prob;
    let lambda = gamma_draw(params.shape, (1.0 - p) / p, rng);
    poisson_draw(lambda, rng)
}

/// Beta-binomial draw in two stages: `p ~ Beta(a, b)`, then `Binomial(k, p)`.
pub fn beta_binomial_sample(a: f64, b: f64, k: u64, rng: &mut RngStream) -> Result<u64> {
    if !(a > 0.0 && b > 0.0) {
        return domain(format!("beta-binomial needs a, b > 0, got a={a}, b={b}"));
    }
    if k == 0 {
        return Ok(0);
    }
    let p = beta_draw(a, b, rng);
    Ok(binomial_draw(k, p, rng))
}

/// `C(k, j) B(a + j, b + k - j) / B(a, b)`.
pub fn beta_binomial_pmf(a: f64, b: f64, k: u64, j: u64) -> f64 {
    if j > k {
        return 0.0;
    }
    let (kf, jf) = (k as f64, j as f64);
    let ln_choose = ln_gamma(kf + 1.0) - ln_gamma(jf + 1.0) - ln_gamma(kf - jf + 1.0);
    let ln_beta = |x: f64, y: f64| ln_gamma(x) + ln_gamma(y) - ln_gamma(x + y);
    (ln_choose + ln_beta(a + jf, b + kf - jf) - ln_beta(a, b)).exp()
}

pub fn gamma_sample(shape: f64, rate: f64, rng: &mut RngStream) -> Result<f64> {
    if !(shape > 0.0 && rate > 0.0) {
        return domain(format!("gamma needs shape, rate > 0, got shape={shape}, rate={rate}"));
    }
    Ok(gamma_draw(shape, rate, rng))
}

pub fn beta_sample(a: f64, b: f64, rng: &mut RngStream) -> Result<f64> {
    if !(a > 0.0 && b > 0.0) {
        return domain(format!("beta needs a, b > 0, got a={a}, b={b}"));
    }
    Ok(beta_draw(a, b, rng))
}

pub fn exp_sample(rate: f64, rng: &mut RngStream) -> Result<f64> {
    if !(rate > 0.0) {
        return domain(format!("exponential needs rate > 0, got {rate}"));
    }
    Ok(exp_draw(rate, rng))
}

pub fn poisson_sample(mean: f64, rng: &mut RngStream) -> Result<u64> {
    if !(mean >= 0.0 && mean.is_finite()) {
        return domain(format!("Poisson needs a finite mean >= 0, got {mean}"));
    }
    Ok(poisson_draw(mean, rng))
}

/// Normal draw with the given mean and **variance**.
pub fn normal_sample(mean: f64, variance: f64, rng: &mut RngStream) -> Result<f64> {
    if !(variance > 0.0) {
        return domain(format!("normal needs variance > 0, got {variance}"));
    }
    Ok(mean + variance.sqrt() * std_normal(rng))
}

pub fn binomial_sample(n: u64, p: f64, rng: &mut RngStream) -> Result<u64> {
    if !(0.0..=1.0).contains(&p) {
        return domain(format!("binomial needs p in [0, 1], got {p}"));
    }
    Ok(binomial_draw(n, p, rng))
}

// Unchecked draws for hot loops; callers guarantee the parameters.

pub(crate) fn gamma_draw(shape: f64, rate: f64, rng: &mut RngStream) -> f64 {
    Gamma::new(shape, 1.0 / rate)
        .expect("validated gamma parameters")
        .sample(rng)
}

pub(crate) fn beta_draw(a: f64, b: f64, rng: &mut RngStream) -> f64 {
    Beta::new(a, b).expect("validated beta parameters").sample(rng)
}

pub(crate) fn exp_draw(rate: f64, rng: &mut RngStream) -> f64 {
    Exp::new(rate).expect("validated rate").sample(rng)
}

pub(crate) fn poisson_draw(mean: f64, rng: &mut RngStream) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).expect("validated mean").sample(rng) as u64
}

pub(crate) fn binomial_draw(n: u64, p: f64, rng: &mut RngStream) -> u64 {
    Binomial::new(n, p).expect("validated probability").sample(rng)
}

pub(crate) fn std_normal(rng: &mut RngStream) -> f64 {
    Normal::new(0.0, 1.0).expect("unit normal").sample(rng)
}
