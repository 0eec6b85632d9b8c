use std::fs::File;
use std::path::PathBuf;

use serde::Serialize;
use vgpp_core::calibration::{
    constrained_params, gmm_fit_weighted, initial_guess, mle_fit, nlls_fit, CalibResult, GmmWeighting, QuotePricer,
    QuoteSet, ReturnSeries, DEFAULT_ATOM_EPS, DEFAULT_DT,
};
use vgpp_core::distributions::RngStream;
use vgpp_core::exotics::{price_american_put_lsmc, price_lookback_call_max, LSMCConfig};
use vgpp_core::gammapp::{gpp_cumulant, gpp_path_backward, gpp_path_forward, GammaPPParams};
use vgpp_core::mc::run_chunks;
use vgpp_core::multivariate::{sample_multivariate_subordinator, sample_multivariate_vgpp, write_multi_csv};
use vgpp_core::path::{uniform_grid, SamplePath};
use vgpp_core::pricing::{
    price_call_fft, price_call_mc, price_call_series, price_calls_closed, price_calls_mc, FFTConfig, MarketModel,
};
use vgpp_core::stats::{moments_with_stderr, sample_moments, MomentSummary};
use vgpp_core::vgpp::{vgpp_cumulant, vgpp_path_backward, vgpp_path_forward, VGPPParams};

use crate::config::{CalibMethod, Contract, InitGuess, PathDirection, PriceMethod, Process, RunConfig, CONTRACTS};
use crate::{emit, CalibrateArgs, CliError, ExoticArgs, MultisimArgs, PriceArgs, SimulateArgs, TriangleArgs};

pub const SCHEMA_VERSION: u32 = 1;

const PRICE_CUTOFF: f64 = 1e-12;
const DEFAULT_MC_PATHS: usize = 1_000_000;
const SWEEP_F0: [f64; 5] = [45.0, 50.0, 55.0, 60.0, 65.0];
const TRIANGLE_STRIKES: [f64; 5] = [80.0, 90.0, 100.0, 110.0, 120.0];
const TRIANGLE_MATURITIES: [f64; 3] = [0.25, 0.5, 1.0];

fn json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("reports serialize");
    out.push(b'\n');
    out
}

fn required<T>(name: &str, v: Option<T>) -> Result<T, CliError> {
    v.ok_or_else(|| CliError::Usage(format!("missing --{name}")))
}

fn positive(name: &str, v: f64) -> Result<f64, CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(CliError::Usage(format!("{name} must be positive, got {v}")))
    }
}

fn nonzero(name: &str, v: usize) -> Result<usize, CliError> {
    if v == 0 {
        Err(CliError::Usage(format!("{name} must be at least 1")))
    } else {
        Ok(v)
    }
}

fn flag(v: Option<u64>) -> Option<usize> {
    v.map(|v| v as usize)
}

fn csv_bytes(header: &[&str], rows: &[Vec<f64>]) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| CliError::Core(e.into());
    w.write_record(header).map_err(io)?;
    for row in rows {
        w.write_record(row.iter().map(|v| v.to_string())).map_err(io)?;
    }
    w.into_inner().map_err(|e| CliError::Io(e.into_error()))
}

#[derive(Serialize)]
struct Moments {
    mean: f64,
    variance: f64,
    skewness: f64,
    kurtosis: f64,
}

impl From<MomentSummary> for Moments {
    fn from(m: MomentSummary) -> Self {
        Moments {
            mean: m.mean,
            variance: m.variance,
            skewness: m.skewness,
            kurtosis: m.kurtosis,
        }
    }
}

impl Moments {
    fn from_cumulants(k: [f64; 4]) -> Self {
        Moments {
            mean: k[0],
            variance: k[1],
            skewness: k[2] / k[1].powf(1.5),
            kurtosis: 3.0 + k[3] / (k[1] * k[1]),
        }
    }
}

#[derive(Clone, Copy, Serialize)]
#[serde(untagged)]
enum Model {
    Vgpp(VGPPParams),
    Gpp(GammaPPParams),
}

#[derive(Serialize)]
struct SimulateReport {
    schema_version: u32,
    process: Process,
    direction: PathDirection,
    params: Model,
    seed: u64,
    n_paths: usize,
    n_steps: usize,
    horizon: f64,
    /// Moments of the terminal values; absent for a single path.
    terminal: Option<Moments>,
    /// Batch-means standard errors, from 100 paths on.
    stderr: Option<Moments>,
    exact: Moments,
}

pub fn simulate(a: SimulateArgs) -> Result<(), CliError> {
    let cfg = RunConfig::load(a.common.config.as_deref(), a.common.params.as_deref())?;
    let s = &cfg.simulate;
    let process = a.process.or(s.process).unwrap_or(Process::Vgpp);
    let direction = a.direction.or(s.direction).unwrap_or(PathDirection::Forward);
    let n_paths = nonzero("paths", flag(a.paths).or(s.paths).unwrap_or(1))?;
    let n_steps = nonzero("steps", flag(a.steps).or(s.steps).unwrap_or(252))?;
    let horizon = positive("horizon", a.horizon.or(s.horizon).unwrap_or(1.0))?;
    let seed = cfg.seed(a.common.seed)?;
    let model = match process {
        Process::Vgpp => Model::Vgpp(cfg.params()?),
        Process::Gpp => Model::Gpp(match cfg.subordinator {
            Some(z) => z,
            None => cfg.params()?.subordinator(),
        }),
    };
    let grid = uniform_grid(horizon, n_steps);
    let one = |r: &mut RngStream| match (model, direction) {
        (Model::Vgpp(p), PathDirection::Forward) => vgpp_path_forward(&p, &grid, r),
        (Model::Vgpp(p), PathDirection::Backward) => vgpp_path_backward(&p, &grid, r),
        (Model::Gpp(p), PathDirection::Forward) => gpp_path_forward(&p, &grid, r),
        (Model::Gpp(p), PathDirection::Backward) => gpp_path_backward(&p, &grid, r),
    };
    let keep = a.csv.is_some();
    let chunks = run_chunks(n_paths, &RngStream::new(seed, 0), |len, r| {
        let mut terminal = Vec::with_capacity(len);
        let mut kept = Vec::new();
        for _ in 0..len {
            let path = one(r)?;
            terminal.push(path.terminal_x().unwrap_or_else(|| path.terminal_z()));
            if keep {
                kept.push(path);
            }
        }
        Ok::<_, vgpp_core::error::Error>((terminal, kept))
    });
    let mut terminal = Vec::with_capacity(n_paths);
    let mut paths: Vec<SamplePath> = Vec::new();
    for chunk in chunks {
        let (t, p) = chunk?;
        terminal.extend(t);
        paths.extend(p);
    }

    let mut cumulants = [0.0; 4];
    for (n, k) in cumulants.iter_mut().enumerate() {
        *k = match model {
            Model::Vgpp(p) => vgpp_cumulant(&p, horizon, n as u32 + 1)?,
            Model::Gpp(p) => gpp_cumulant(&p, horizon, n as u32 + 1)?,
        };
    }
    let (moments, stderr) = match n_paths {
        1 => (None, None),
        n if n < 100 => (Some(sample_moments(&terminal).into()), None),
        _ => {
            let (m, se) = moments_with_stderr(&terminal, 20);
            (Some(m.into()), Some(se.into()))
        }
    };
    let report = SimulateReport {
        schema_version: SCHEMA_VERSION,
        process,
        direction,
        params: model,
        seed,
        n_paths,
        n_steps,
        horizon,
        terminal: moments,
        stderr,
        exact: Moments::from_cumulants(cumulants),
    };
    if let Some(path) = &a.csv {
        let bytes = if paths.len() == 1 {
            let mut buf = Vec::new();
            paths[0].write_csv(&mut buf)?;
            buf
        } else {
            let with_x = process == Process::Vgpp;
            let header: &[&str] = if with_x { &["path", "t", "z", "x"] } else { &["path", "t", "z"] };
            let mut rows = Vec::new();
            for (i, p) in paths.iter().enumerate() {
                for j in 0..p.len() {
                    let mut row = vec![i as f64, p.grid[j], p.z[j]];
                    if let Some(x) = &p.x {
                        row.push(x[j]);
                    }
                    rows.push(row);
                }
            }
            csv_bytes(header, &rows)?
        };
        emit(Some(path), &bytes)?;
    }
    emit(a.common.out.as_deref(), &json(&report))
}

#[derive(Serialize)]
struct PriceReport {
    schema_version: u32,
    method: PriceMethod,
    params: VGPPParams,
    market: MarketModel,
    #[serde(rename = "K")]
    k: f64,
    #[serde(rename = "T")]
    t: f64,
    price: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    stderr: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    terms_used: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

pub fn price(a: PriceArgs) -> Result<(), CliError> {
    let cfg = RunConfig::load(a.common.config.as_deref(), a.common.params.as_deref())?;
    let s = &cfg.price;
    let method = a.method.or(s.method).unwrap_or(PriceMethod::Closed);
    let k = positive("strike", required("strike", a.strike.or(s.strike))?)?;
    let t = positive("maturity", required("maturity", a.maturity.or(s.maturity))?)?;
    let params = cfg.params()?;
    let market = cfg.market(a.market.f0, a.market.rate)?;
    let mut report = PriceReport {
        schema_version: SCHEMA_VERSION,
        method,
        params,
        market,
        k,
        t,
        price: f64::NAN,
        stderr: None,
        terms_used: None,
        seed: None,
    };
    match method {
        PriceMethod::Closed => {
            let sp = price_call_series(&params, &market, k, t, s.cutoff.unwrap_or(PRICE_CUTOFF))?;
            report.price = sp.price;
            report.terms_used = Some(sp.terms_used);
        }
        PriceMethod::Fft => {
            report.price = price_call_fft(&params, &market, &[k], t, &s.fft.unwrap_or_default())?[0];
        }
        PriceMethod::Mc => {
            let seed = cfg.seed(a.common.seed)?;
            let n = nonzero("paths", flag(a.paths).or(s.paths).unwrap_or(DEFAULT_MC_PATHS))?;
            let mc = price_call_mc(&params, &market, k, t, n, &RngStream::new(seed, 0))?;
            report.price = mc.price;
            report.stderr = Some(mc.stderr);
            report.seed = Some(seed);
        }
    }
    emit(a.common.out.as_deref(), &json(&report))
}

#[derive(Serialize)]
struct CalibReport<'a> {
    schema_version: u32,
    data: &'a PathBuf,
    #[serde(flatten)]
    result: &'a CalibResult,
}

fn init_params(g: InitGuess) -> Result<VGPPParams, CliError> {
    Ok(constrained_params(g.theta, g.sigma, g.a, g.alpha)?)
}

pub fn calibrate(a: CalibrateArgs) -> Result<(), CliError> {
    let cfg = RunConfig::load(a.common.config.as_deref(), a.common.params.as_deref())?;
    let s = &cfg.calibrate;
    let method = a
        .method
        .or(s.method)
        .ok_or_else(|| CliError::Usage("missing --method (one of mle, gmm, nlls)".into()))?;
    let data = required("data", a.data.clone().or_else(|| s.data.clone()))?;
    let file = File::open(&data).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", data.display())))?;
    let in_file = |e: vgpp_core::error::Error| match e {
        vgpp_core::error::Error::Numerical(_) => CliError::Core(e),
        other => CliError::Usage(format!("{}: {other}", data.display())),
    };
    let bounds = s.bounds.unwrap_or_default();
    let result = match method {
        CalibMethod::Mle | CalibMethod::Gmm => {
            let dt = positive("dt", s.dt.unwrap_or(DEFAULT_DT))?;
            let series = ReturnSeries::read_csv(file, dt).map_err(in_file)?;
            let eps = s.atom_eps.unwrap_or(DEFAULT_ATOM_EPS);
            let init = match s.init {
                Some(g) => init_params(g)?,
                None => initial_guess(&series, eps)?,
            };
            if method == CalibMethod::Mle {
                mle_fit(&series, &init, &bounds, eps)?
            } else {
                gmm_fit_weighted(&series, &init, &bounds, s.weighting.unwrap_or(GmmWeighting::Relative))?
            }
        }
        CalibMethod::Nlls => {
            let market = cfg.market(a.market.f0, a.market.rate)?;
            let quotes = QuoteSet::read_csv(file, market).map_err(in_file)?;
            let init = init_params(s.init.unwrap_or(InitGuess {
                theta: 0.0,
                sigma: 0.3,
                a: 0.3,
                alpha: 5.0,
            }))?;
            nlls_fit(&quotes, &init, &bounds, s.pricer.unwrap_or(QuotePricer::Closed))?
        }
    };
    eprintln!("p_zero = {:.6} (probability of no move over dt = {:.6})", result.p_zero, result.dt);
    let report = CalibReport {
        schema_version: SCHEMA_VERSION,
        data: &data,
        result: &result,
    };
    emit(a.common.out.as_deref(), &json(&report))
}

#[derive(Clone, Copy, Serialize)]
struct ExoticConfig {
    strike: f64,
    maturity: f64,
    market: MarketModel,
    seed: u64,
    #[serde(flatten)]
    lsmc: LSMCConfig,
}

#[derive(Serialize)]
struct ExoticReport {
    schema_version: u32,
    contract: &'static str,
    params: VGPPParams,
    config: ExoticConfig,
    price: f64,
    stderr: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    european: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    european_stderr: Option<f64>,
}

struct ExoticPrice {
    price: f64,
    stderr: f64,
    european: Option<(f64, f64)>,
}

pub fn exotic(a: ExoticArgs) -> Result<(), CliError> {
    let cfg = RunConfig::load(a.common.config.as_deref(), a.common.params.as_deref())?;
    let s = &cfg.exotic;
    let contract = a.contract.or(s.contract).ok_or_else(|| {
        CliError::Usage(format!("missing --contract; valid contracts: {}", CONTRACTS.join(", ")))
    })?;
    let k = positive("strike", required("strike", a.strike.or(s.strike))?)?;
    let t = positive("maturity", required("maturity", a.maturity.or(s.maturity))?)?;
    let params = cfg.params()?;
    let seed = cfg.seed(a.common.seed)?;
    let mut lsmc = s.lsmc.unwrap_or_default();
    if let Some(n) = flag(a.paths) {
        lsmc.n_paths = n;
    }
    if let Some(n) = flag(a.steps) {
        lsmc.n_steps = n;
    }
    if let Some(d) = a.direction {
        lsmc.direction = d.into();
    }
    if let Some(d) = a.degree {
        lsmc.basis_degree = d;
    }
    let price_at = |market: &MarketModel, stream: u64| -> Result<ExoticPrice, CliError> {
        let rng = RngStream::new(seed, stream);
        Ok(match contract {
            Contract::AmericanPut => {
                let p = price_american_put_lsmc(&params, market, k, t, &lsmc, &rng)?;
                ExoticPrice {
                    price: p.price,
                    stderr: p.stderr,
                    european: Some((p.european, p.european_stderr)),
                }
            }
            Contract::LookbackCallMax => {
                let p = price_lookback_call_max(&params, market, k, t, lsmc.n_steps, lsmc.n_paths, &rng)?;
                ExoticPrice {
                    price: p.price,
                    stderr: p.stderr,
                    european: None,
                }
            }
        })
    };

    if a.sweep {
        let rate = a
            .market
            .rate
            .or(cfg.market.map(|m| m.r()))
            .ok_or_else(|| CliError::Usage("missing --rate".into()))?;
        let f0s = s.sweep_f0.clone().unwrap_or(SWEEP_F0.to_vec());
        let mut rows = Vec::new();
        for (i, &f0) in f0s.iter().enumerate() {
            let m = MarketModel::new(f0, rate)?;
            let p = price_at(&m, i as u64)?;
            rows.push(match (contract, p.european) {
                (Contract::AmericanPut, Some((e, se))) => vec![f0, p.price, p.stderr, e, se, (k - f0).max(0.0)],
                _ => vec![f0, p.price, p.stderr],
            });
        }
        let header: &[&str] = match contract {
            Contract::AmericanPut => &["F0", "price", "stderr", "european", "european_stderr", "intrinsic"],
            Contract::LookbackCallMax => &["F0", "price", "stderr"],
        };
        return emit(a.common.out.as_deref(), &csv_bytes(header, &rows)?);
    }

    let market = cfg.market(a.market.f0, a.market.rate)?;
    let p = price_at(&market, 0)?;
    let report = ExoticReport {
        schema_version: SCHEMA_VERSION,
        contract: contract.name(),
        params,
        config: ExoticConfig {
            strike: k,
            maturity: t,
            market,
            seed,
            lsmc,
        },
        price: p.price,
        stderr: p.stderr,
        european: p.european.map(|e| e.0),
        european_stderr: p.european.map(|e| e.1),
    };
    emit(a.common.out.as_deref(), &json(&report))
}

pub fn multisim(a: MultisimArgs) -> Result<(), CliError> {
    let cfg = RunConfig::load(a.common.config.as_deref(), a.common.params.as_deref())?;
    let s = &cfg.multisim;
    let model = s
        .model
        .clone()
        .ok_or_else(|| CliError::Usage("multisim needs a `multisim.model` section".into()))?;
    let n_steps = nonzero("steps", flag(a.steps).or(s.steps).unwrap_or(252))?;
    let horizon = positive("horizon", a.horizon.or(s.horizon).unwrap_or(1.0))?;
    let seed = cfg.seed(a.common.seed)?;
    let grid = uniform_grid(horizon, n_steps);
    let rng = RngStream::new(seed, 0);
    let paths = match &s.brownian {
        Some(b) => sample_multivariate_vgpp(&model, b, &grid, &rng)?,
        None => sample_multivariate_subordinator(&model, &grid, &rng)?,
    };
    let mut buf = Vec::new();
    write_multi_csv(&paths, &mut buf)?;
    emit(a.common.out.as_deref(), &buf)
}

#[derive(Serialize)]
struct TriangleRow {
    #[serde(rename = "K")]
    k: f64,
    #[serde(rename = "T")]
    t: f64,
    closed: f64,
    fft: f64,
    mc: f64,
    mc_stderr: f64,
    closed_minus_fft: f64,
    closed_minus_mc: f64,
    fft_minus_mc: f64,
}

#[derive(Serialize)]
struct TriangleConfig {
    strikes: Vec<f64>,
    maturities: Vec<f64>,
    paths: usize,
    cutoff: f64,
    fft: FFTConfig,
    seed: u64,
}

#[derive(Serialize)]
struct TriangleReport {
    schema_version: u32,
    params: VGPPParams,
    market: MarketModel,
    config: TriangleConfig,
    rows: Vec<TriangleRow>,
    max_abs_closed_minus_fft: f64,
    max_abs_closed_minus_mc: f64,
    /// Largest `|closed - mc|` in Monte Carlo standard errors.
    max_closed_mc_in_stderr: f64,
    /// Closed prices fall as the strike rises, at every maturity.
    closed_decreasing_in_strike: bool,
}

pub fn triangle(a: TriangleArgs) -> Result<(), CliError> {
    let cfg = RunConfig::load(a.common.config.as_deref(), a.common.params.as_deref())?;
    let s = &cfg.triangle;
    let params = cfg.params()?;
    let market = cfg.market(a.market.f0, a.market.rate)?;
    let seed = cfg.seed(a.common.seed)?;
    let strikes = s.strikes.clone().unwrap_or(TRIANGLE_STRIKES.to_vec());
    let maturities = s.maturities.clone().unwrap_or(TRIANGLE_MATURITIES.to_vec());
    if strikes.is_empty() || maturities.is_empty() {
        return Err(CliError::Usage("strikes and maturities must not be empty".into()));
    }
    let paths = nonzero("paths", flag(a.paths).or(s.paths).unwrap_or(DEFAULT_MC_PATHS))?;
    let cutoff = s.cutoff.unwrap_or(PRICE_CUTOFF);
    let fft_cfg = s.fft.unwrap_or_default();

    let mut rows = Vec::new();
    let mut decreasing = true;
    for (j, &t) in maturities.iter().enumerate() {
        let contracts: Vec<(f64, f64)> = strikes.iter().map(|&k| (k, t)).collect();
        let closed = price_calls_closed(&params, &market, &contracts, cutoff)?;
        let fft = price_call_fft(&params, &market, &strikes, t, &fft_cfg)?;
        let mc = price_calls_mc(&params, &market, &strikes, t, paths, &RngStream::new(seed, j as u64))?;
        for i in 0..strikes.len() {
            if i > 0 && strikes[i] > strikes[i - 1] && closed[i] > closed[i - 1] {
                decreasing = false;
            }
            rows.push(TriangleRow {
                k: strikes[i],
                t,
                closed: closed[i],
                fft: fft[i],
                mc: mc[i].price,
                mc_stderr: mc[i].stderr,
                closed_minus_fft: closed[i] - fft[i],
                closed_minus_mc: closed[i] - mc[i].price,
                fft_minus_mc: fft[i] - mc[i].price,
            });
        }
    }
    let max_of = |f: fn(&TriangleRow) -> f64| rows.iter().map(f).fold(0.0, f64::max);
    let report = TriangleReport {
        schema_version: SCHEMA_VERSION,
        params,
        market,
        max_abs_closed_minus_fft: max_of(|r| r.closed_minus_fft.abs()),
        max_abs_closed_minus_mc: max_of(|r| r.closed_minus_mc.abs()),
        max_closed_mc_in_stderr: max_of(|r| r.closed_minus_mc.abs() / r.mc_stderr),
        closed_decreasing_in_strike: decreasing,
        config: TriangleConfig {
            strikes,
            maturities,
            paths,
            cutoff,
            fft: fft_cfg,
            seed,
        },
        rows,
    };
    if let Some(path) = &a.csv {
        let table: Vec<Vec<f64>> = report
            .rows
            .iter()
            .map(|r| vec![r.k, r.t, r.closed, r.fft, r.mc, r.mc_stderr, r.closed_minus_fft, r.closed_minus_mc, r.fft_minus_mc])
            .collect();
        let header = [
            "K",
            "T",
            "closed",
            "fft",
            "mc",
            "mc_stderr",
            "closed_minus_fft",
            "closed_minus_mc",
            "fft_minus_mc",
        ];
        emit(Some(path), &csv_bytes(&header, &table)?)?;
    }
    emit(a.common.out.as_deref(), &json(&report))
}
