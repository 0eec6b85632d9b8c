//! Multivariate Gamma++ subordinator `H_i(t) = X_i(t) + c_i Z(t)` with a common
//! factor `Z ~ Gamma++(a, alpha, beta)` and independent idiosyncratic parts
//! `X_i ~ Gamma++(a, alpha_i, beta / c_i)`, so that every
//! `H_i ~ Gamma++(a, alpha_i + alpha, beta / c_i)`.
//!
//! The subordinated Brownian paths are an extension on top of the subordinator.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::distributions::{std_normal, RngStream};
use crate::error::{domain, Result};
use crate::gammapp::{gpp_path_forward, GammaPPParams};
use crate::path::{validate_grid, SamplePath};

/// Loading of one asset: idiosyncratic shape `alpha >= 0` and common-factor
/// scale `c > 0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssetLoading {
    pub alpha: f64,
    pub c: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMulti")]
pub struct MultiGPPParams {
    a: f64,
    alpha_common: f64,
    beta: f64,
    assets: Vec<AssetLoading>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMulti {
    a: f64,
    alpha_common: f64,
    beta: f64,
    assets: Vec<AssetLoading>,
}

impl TryFrom<RawMulti> for MultiGPPParams {
    type Error = crate::error::Error;

    fn try_from(r: RawMulti) -> Result<Self> {
        MultiGPPParams::new(r.a, r.alpha_common, r.beta, r.assets)
    }
}

impl MultiGPPParams {
    pub fn new(a: f64, alpha_common: f64, beta: f64, assets: Vec<AssetLoading>) -> Result<Self> {
        GammaPPParams::new(a, alpha_common, beta)?;
        if assets.is_empty() {
            return domain("at least one asset is required");
        }
        for (i, l) in assets.iter().enumerate() {
            if !(l.alpha >= 0.0 && l.alpha.is_finite()) {
                return domain(format!("asset {i}: alpha must be nonnegative, got {}", l.alpha));
            }
            if !(l.c > 0.0 && l.c.is_finite()) {
                return domain(format!("asset {i}: c must be positive, got {}", l.c));
            }
        }
        Ok(Self {
            a,
            alpha_common,
            beta,
            assets,
        })
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn alpha_common(&self) -> f64 {
        self.alpha_common
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn assets(&self) -> &[AssetLoading] {
        &self.assets
    }

    pub fn n_assets(&self) -> usize {
        self.assets.len()
    }

    pub fn common_factor(&self) -> GammaPPParams {
        GammaPPParams::new(self.a, self.alpha_common, self.beta).expect("validated parameters")
    }

    fn loading(&self, i: usize) -> Result<AssetLoading> {
        match self.assets.get(i) {
            Some(l) => Ok(*l),
            None => domain(format!("asset index {i} out of range for {} assets", self.assets.len())),
        }
    }

    /// Law of `X_i`, or `None` when asset `i` has no idiosyncratic part.
    pub fn idiosyncratic(&self, i: usize) -> Result<Option<GammaPPParams>> {
        let l = self.loading(i)?;
        if l.alpha == 0.0 {
            return Ok(None);
        }
        GammaPPParams::new(self.a, l.alpha, self.beta / l.c).map(Some)
    }
}

/// Law of `H_i`: `Gamma++(a, alpha_i + alpha, beta / c_i)`.
pub fn marginal_params(params: &MultiGPPParams, i: usize) -> Result<GammaPPParams> {
    let l = params.loading(i)?;
    GammaPPParams::new(params.a, l.alpha + params.alpha_common, params.beta / l.c)
}

/// One path per asset on `grid`, all sharing one common-factor path. The
/// common factor draws from partition 0 of `rng`, asset `i` from partition `i + 1`.
pub fn sample_multivariate_subordinator(
    params: &MultiGPPParams,
    grid: &[f64],
    rng: &RngStream,
) -> Result<Vec<SamplePath>> {
    validate_grid(grid)?;
    let common = gpp_path_forward(&params.common_factor(), grid, &mut rng.partition(0))?;
    (0..params.n_assets())
        .map(|i| {
            let c = params.assets[i].c;
            let mut own = rng.partition(i as u64 + 1);
            let h = match params.idiosyncratic(i)? {
                Some(p) => {
                    let x = gpp_path_forward(&p, grid, &mut own)?;
                    x.z.iter().zip(&common.z).map(|(x, z)| x + c * z).collect()
                }
                None => common.z.iter().map(|z| c * z).collect(),
            };
            Ok(SamplePath {
                grid: grid.to_vec(),
                z: h,
                x: None,
                seed: own.seed(),
                stream_id: own.stream_id(),
            })
        })
        .collect()
}

/// Drift and volatility of the Brownian motion driving one asset.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssetBrownian {
    pub theta: f64,
    pub sigma: f64,
}

/// Subordinator paths plus, for each asset, its own Brownian motion run on
/// `H_i`. The Brownian draws of asset `i` use partition `n_assets + 1 + i`.
pub fn sample_multivariate_vgpp(
    params: &MultiGPPParams,
    brownian: &[AssetBrownian],
    grid: &[f64],
    rng: &RngStream,
) -> Result<Vec<SamplePath>> {
    if brownian.len() != params.n_assets() {
        return domain(format!(
            "{} Brownian specifications for {} assets",
            brownian.len(),
            params.n_assets()
        ));
    }
    for b in brownian {
        if !(b.theta.is_finite() && b.sigma > 0.0 && b.sigma.is_finite()) {
            return domain(format!("invalid Brownian parameters {b:?}"));
        }
    }
    let mut paths = sample_multivariate_subordinator(params, grid, rng)?;
    let n = params.n_assets();
    for (i, (path, b)) in paths.iter_mut().zip(brownian).enumerate() {
        let mut r = rng.partition((n + 1 + i) as u64);
        let mut x = Vec::with_capacity(path.z.len());
        x.push(0.0);
        let mut level = 0.0;
        for w in path.z.windows(2) {
            let dh = w[1] - w[0];
            if dh > 0.0 {
                level += b.theta * dh + b.sigma * dh.sqrt() * std_normal(&mut r);
            }
            x.push(level);
        }
        path.x = Some(x);
    }
    Ok(paths)
}

/// CSV `t,h_1,...,h_n`, followed by `x_1,...,x_n` when the paths carry them.
pub fn write_multi_csv<W: Write>(paths: &[SamplePath], out: W) -> Result<()> {
    let Some(first) = paths.first() else {
        return domain("no paths to write");
    };
    if paths.iter().any(|p| p.grid != first.grid) {
        return domain("paths must share one grid");
    }
    let with_x = paths.iter().all(|p| p.x.is_some());
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string()];
    header.extend((1..=paths.len()).map(|i| format!("h_{i}")));
    if with_x {
        header.extend((1..=paths.len()).map(|i| format!("x_{i}")));
    }
    w.write_record(&header)?;
    for (row, t) in first.grid.iter().enumerate() {
        let mut rec = vec![t.to_string()];
        rec.extend(paths.iter().map(|p| p.z[row].to_string()));
        if with_x {
            rec.extend(paths.iter().map(|p| p.x.as_ref().expect("checked")[row].to_string()));
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
