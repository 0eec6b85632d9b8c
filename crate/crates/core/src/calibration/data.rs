//! Return series and option quote sets, with their CSV forms
//! (`date,price` and `K,T,mid`).

use std::io::{Read, Write};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::pricing::MarketModel;

pub const DEFAULT_DT: f64 = 1.0 / 252.0;
const DATE_FORMAT: &str = "%Y-%m-%d";

/// Log prices observed on strictly increasing dates, `dt` years apart.
#[derive(Clone, Debug, PartialEq)]
pub struct ReturnSeries {
    timestamps: Vec<NaiveDate>,
    log_prices: Vec<f64>,
    dt: f64,
}

#[derive(Deserialize, Serialize)]
struct PriceRow {
    date: String,
    price: f64,
}

impl ReturnSeries {
    pub fn new(timestamps: Vec<NaiveDate>, log_prices: Vec<f64>, dt: f64) -> Result<Self> {
        if timestamps.len() != log_prices.len() {
            return domain(format!(
                "{} timestamps for {} prices",
                timestamps.len(),
                log_prices.len()
            ));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return domain(format!("dt must be positive, got {dt}"));
        }
        if let Some(w) = timestamps.windows(2).find(|w| w[1] <= w[0]) {
            return domain(format!("timestamps must increase strictly: {} then {}", w[0], w[1]));
        }
        if let Some(x) = log_prices.iter().find(|x| !x.is_finite()) {
            return domain(format!("log price {x} is not finite"));
        }
        Ok(Self {
            timestamps,
            log_prices,
            dt,
        })
    }

    /// Series on consecutive calendar days starting at `start`.
    pub fn from_log_prices(start: NaiveDate, log_prices: Vec<f64>, dt: f64) -> Result<Self> {
        let timestamps = start
            .iter_days()
            .take(log_prices.len())
            .collect::<Vec<_>>();
        Self::new(timestamps, log_prices, dt)
    }

    /// Reads `date,price` rows; prices must be positive.
    pub fn read_csv<R: Read>(input: R, dt: f64) -> Result<Self> {
        let mut reader = csv::Reader::from_reader(input);
        let mut timestamps = Vec::new();
        let mut log_prices = Vec::new();
        for (line, row) in reader.deserialize::<PriceRow>().enumerate() {
            let row = row?;
            let date = NaiveDate::parse_from_str(row.date.trim(), DATE_FORMAT)
                .map_err(|e| Error::Data(format!("row {}: bad date {:?}: {e}", line + 1, row.date)))?;
            if !(row.price > 0.0 && row.price.is_finite()) {
                return Err(Error::Data(format!("row {}: price must be positive, got {}", line + 1, row.price)));
            }
            timestamps.push(date);
            log_prices.push(row.price.ln());
        }
        Self::new(timestamps, log_prices, dt)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for (d, x) in self.timestamps.iter().zip(&self.log_prices) {
            w.serialize(PriceRow {
                date: d.format(DATE_FORMAT).to_string(),
                price: x.exp(),
            })?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn timestamps(&self) -> &[NaiveDate] {
        &self.timestamps
    }

    pub fn log_prices(&self) -> &[f64] {
        &self.log_prices
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn len(&self) -> usize {
        self.log_prices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_prices.is_empty()
    }

    /// Log returns between consecutive observations.
    pub fn increments(&self) -> Vec<f64> {
        self.log_prices.windows(2).map(|w| w[1] - w[0]).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Quote {
    #[serde(rename = "K")]
    pub k: f64,
    #[serde(rename = "T")]
    pub t: f64,
    pub mid: f64,
}

/// Call quotes on one underlying.
#[derive(Clone, Debug, PartialEq)]
pub struct QuoteSet {
    quotes: Vec<Quote>,
    market: MarketModel,
}

impl QuoteSet {
    pub fn new(quotes: Vec<Quote>, market: MarketModel) -> Result<Self> {
        if quotes.is_empty() {
            return domain("a quote set needs at least one quote");
        }
        for q in &quotes {
            let ok = |v: f64| v > 0.0 && v.is_finite();
            if !(ok(q.k) && ok(q.t) && ok(q.mid)) {
                return domain(format!("K, T and mid must be positive, got {q:?}"));
            }
        }
        Ok(Self { quotes, market })
    }

    pub fn read_csv<R: Read>(input: R, market: MarketModel) -> Result<Self> {
        let mut reader = csv::Reader::from_reader(input);
        let quotes = reader
            .deserialize::<Quote>()
            .collect::<std::result::Result<Vec<_>, _>>()?;
        Self::new(quotes, market)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for q in &self.quotes {
            w.serialize(q)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn quotes(&self) -> &[Quote] {
        &self.quotes
    }

    pub fn market(&self) -> &MarketModel {
        &self.market
    }

    pub fn len(&self) -> usize {
        self.quotes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.quotes.is_empty()
    }
}
