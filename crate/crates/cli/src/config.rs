use std::fs;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use serde::{Deserialize, Serialize};
use vgpp_core::calibration::{CalibBounds, GmmWeighting, QuotePricer};
use vgpp_core::exotics::{Direction, LSMCConfig};
use vgpp_core::gammapp::GammaPPParams;
use vgpp_core::multivariate::{AssetBrownian, MultiGPPParams};
use vgpp_core::pricing::{FFTConfig, MarketModel};
use vgpp_core::vgpp::VGPPParams;

use crate::CliError;

/// Whole-run configuration file. Every section is optional; command-line
/// flags override the values read here.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub params: Option<VGPPParams>,
    /// Subordinator used by `simulate --process gpp`; defaults to the clock of `params`.
    pub subordinator: Option<GammaPPParams>,
    pub market: Option<MarketModel>,
    #[serde(default)]
    pub simulate: SimulateSection,
    #[serde(default)]
    pub price: PriceSection,
    #[serde(default)]
    pub calibrate: CalibrateSection,
    #[serde(default)]
    pub exotic: ExoticSection,
    #[serde(default)]
    pub multisim: MultisimSection,
    #[serde(default)]
    pub triangle: TriangleSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    pub process: Option<Process>,
    pub direction: Option<PathDirection>,
    pub paths: Option<usize>,
    pub steps: Option<usize>,
    pub horizon: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriceSection {
    pub method: Option<PriceMethod>,
    pub strike: Option<f64>,
    pub maturity: Option<f64>,
    pub paths: Option<usize>,
    pub cutoff: Option<f64>,
    pub fft: Option<FFTConfig>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrateSection {
    pub method: Option<CalibMethod>,
    pub data: Option<PathBuf>,
    pub dt: Option<f64>,
    pub atom_eps: Option<f64>,
    pub init: Option<InitGuess>,
    pub bounds: Option<CalibBounds>,
    pub pricer: Option<QuotePricer>,
    pub weighting: Option<GmmWeighting>,
}

/// Starting point of a fit; `beta` follows from the unit-mean clock.
#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitGuess {
    pub theta: f64,
    pub sigma: f64,
    pub a: f64,
    pub alpha: f64,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExoticSection {
    pub contract: Option<Contract>,
    pub strike: Option<f64>,
    pub maturity: Option<f64>,
    pub lsmc: Option<LSMCConfig>,
    pub sweep_f0: Option<Vec<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MultisimSection {
    pub model: Option<MultiGPPParams>,
    pub brownian: Option<Vec<AssetBrownian>>,
    pub steps: Option<usize>,
    pub horizon: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TriangleSection {
    pub strikes: Option<Vec<f64>>,
    pub maturities: Option<Vec<f64>>,
    pub paths: Option<usize>,
    pub cutoff: Option<f64>,
    pub fft: Option<FFTConfig>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Process {
    /// Gamma++ subordinator alone
    Gpp,
    /// Brownian motion run on the Gamma++ clock
    Vgpp,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum PathDirection {
    Forward,
    Backward,
}

impl From<PathDirection> for Direction {
    fn from(d: PathDirection) -> Self {
        match d {
            PathDirection::Forward => Direction::Forward,
            PathDirection::Backward => Direction::Backward,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum PriceMethod {
    /// Series over integer-shape VG prices
    Closed,
    /// Carr-Madan FFT inversion
    Fft,
    /// Monte Carlo on terminal draws
    Mc,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum CalibMethod {
    /// Maximum likelihood on a price series
    Mle,
    /// Moment matching on a price series
    Gmm,
    /// Least squares on call quotes
    Nlls,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Contract {
    #[value(name = "american_put")]
    AmericanPut,
    #[value(name = "lookback_call_max")]
    LookbackCallMax,
}

impl Contract {
    pub fn name(self) -> &'static str {
        match self {
            Contract::AmericanPut => "american_put",
            Contract::LookbackCallMax => "lookback_call_max",
        }
    }
}

pub const CONTRACTS: [&str; 2] = ["american_put", "lookback_call_max"];

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

impl RunConfig {
    /// Reads `config` (if any) and replaces `params` by the contents of `params_file`.
    pub fn load(config: Option<&Path>, params_file: Option<&Path>) -> Result<Self, CliError> {
        let mut cfg: RunConfig = match config {
            Some(p) => read_json(p)?,
            None => RunConfig::default(),
        };
        if let Some(p) = params_file {
            cfg.params = Some(read_json(p)?);
        }
        Ok(cfg)
    }

    pub fn params(&self) -> Result<VGPPParams, CliError> {
        self.params
            .ok_or_else(|| CliError::Usage("model parameters missing: give --params FILE or a `params` section".into()))
    }

    pub fn seed(&self, flag: Option<u64>) -> Result<u64, CliError> {
        flag.or(self.seed)
            .ok_or_else(|| CliError::Usage("this command is stochastic and needs --seed (or `seed` in the config)".into()))
    }

    /// Market from the config with `--f0` / `--rate` applied on top.
    pub fn market(&self, f0: Option<f64>, rate: Option<f64>) -> Result<MarketModel, CliError> {
        let base = self.market;
        let f0 = f0.or(base.map(|m| m.f0()));
        let r = rate.or(base.map(|m| m.r()));
        match (f0, r) {
            (Some(f0), Some(r)) => Ok(MarketModel::new(f0, r)?),
            _ => Err(CliError::Usage(
                "market missing: give --f0 and --rate or a `market` section".into(),
            )),
        }
    }
}
