//! Long-format price tables (`date,ticker,value`) and their conversion to
//! market paths.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::format::fmt_f64;
use crate::ledger::MarketPath;
use crate::simplex::SimplexVector;

/// What the `value` column holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueMode {
    /// Prices; capitalizations are synthesized from initial weights.
    #[default]
    Price,
    Capitalization,
}

/// Date-aligned table of strictly positive values.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceTable {
    pub tickers: Vec<String>,
    /// Opaque, ordered labels.
    pub dates: Vec<String>,
    /// `values[t][i]` for date `t` and ticker `i`.
    pub values: Vec<Vec<f64>>,
    pub mode: ValueMode,
    /// Dates dropped during ingestion because some ticker was missing.
    pub dropped_dates: usize,
}

#[derive(Debug, Deserialize)]
struct Record {
    date: String,
    ticker: String,
    value: f64,
}

impl PriceTable {
    pub fn new(tickers: Vec<String>, dates: Vec<String>, values: Vec<Vec<f64>>, mode: ValueMode) -> Result<Self> {
        if values.len() != dates.len() {
            return Err(Error::LengthMismatch {
                what: "value rows",
                expected: dates.len(),
                found: values.len(),
            });
        }
        for (t, row) in values.iter().enumerate() {
            if row.len() != tickers.len() {
                return Err(Error::DimensionMismatch {
                    expected: tickers.len(),
                    found: row.len(),
                });
            }
            if let Some(i) = row.iter().position(|&v| !(v > 0.0) || !v.is_finite()) {
                return Err(Error::Data(format!(
                    "value for {} on {} is not strictly positive ({})",
                    tickers[i], dates[t], row[i]
                )));
            }
        }
        Ok(Self {
            tickers,
            dates,
            values,
            mode,
            dropped_dates: 0,
        })
    }

    pub fn n_dates(&self) -> usize {
        self.dates.len()
    }

    pub fn n_tickers(&self) -> usize {
        self.tickers.len()
    }

    /// Reads `date,ticker,value` rows. Tickers and dates keep their order of
    /// first appearance; dates missing any ticker are dropped and counted.
    pub fn from_reader<R: Read>(reader: R, mode: ValueMode) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["date", "ticker", "value"] {
            return Err(Error::Data(format!(
                "expected header `date,ticker,value`, found `{}`",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut tickers: Vec<String> = Vec::new();
        let mut ticker_index: HashMap<String, usize> = HashMap::new();
        let mut dates: Vec<String> = Vec::new();
        let mut date_index: HashMap<String, usize> = HashMap::new();
        let mut cells: Vec<HashMap<usize, f64>> = Vec::new();
        for (line, record) in rdr.deserialize::<Record>().enumerate() {
            let record = record?;
            if !(record.value > 0.0) || !record.value.is_finite() {
                return Err(Error::Data(format!(
                    "row {}: value {} for {} on {} is not strictly positive",
                    line + 2,
                    record.value,
                    record.ticker,
                    record.date
                )));
            }
            let ti = *ticker_index.entry(record.ticker.clone()).or_insert_with(|| {
                tickers.push(record.ticker.clone());
                tickers.len() - 1
            });
            let di = *date_index.entry(record.date.clone()).or_insert_with(|| {
                dates.push(record.date.clone());
                cells.push(HashMap::new());
                dates.len() - 1
            });
            if cells[di].insert(ti, record.value).is_some() {
                return Err(Error::Data(format!(
                    "duplicate entry for {} on {}",
                    record.ticker, record.date
                )));
            }
        }
        let mut kept_dates = Vec::new();
        let mut values = Vec::new();
        let mut dropped = 0;
        for (date, row) in dates.into_iter().zip(cells) {
            if row.len() == tickers.len() {
                values.push((0..tickers.len()).map(|i| row[&i]).collect());
                kept_dates.push(date);
            } else {
                dropped += 1;
            }
        }
        if dropped > 0 {
            log::warn!("dropped {dropped} dates with missing tickers");
        }
        if kept_dates.is_empty() {
            return Err(Error::Data("no complete dates in input".into()));
        }
        let mut table = Self::new(tickers, kept_dates, values, mode)?;
        table.dropped_dates = dropped;
        Ok(table)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["date", "ticker", "value"])?;
        for (date, row) in self.dates.iter().zip(&self.values) {
            for (ticker, v) in self.tickers.iter().zip(row) {
                w.write_record([date.as_str(), ticker.as_str(), &fmt_f64(*v)])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

pub fn ingest_csv<P: AsRef<Path>>(path: P, mode: ValueMode) -> Result<PriceTable> {
    let file = std::fs::File::open(path.as_ref())
        .map_err(|e| Error::Data(format!("cannot open {}: {e}", path.as_ref().display())))?;
    PriceTable::from_reader(file, mode)
}

pub fn export_csv<P: AsRef<Path>>(table: &PriceTable, path: P) -> Result<()> {
    table.write_csv(std::fs::File::create(path)?)
}

/// Market path of the table. Capitalizations are used as given; prices are
/// turned into capitalizations `w_i P_i(t)/P_i(0)` so that `μ(0)` equals
/// the initial weights exactly (equal weights when none are given).
pub fn to_market_path(table: &PriceTable, initial_weights: Option<&SimplexVector>) -> Result<MarketPath> {
    let n = table.n_tickers();
    if let Some(w) = initial_weights {
        if w.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: w.len(),
            });
        }
    }
    match table.mode {
        ValueMode::Capitalization => {
            let path = MarketPath::with_labels(table.dates.clone(), table.values.clone())?;
            if let Some(w) = initial_weights {
                if path.weight(0).l1_distance(w)? > 1e-12 {
                    return Err(Error::Data(
                        "initial weights disagree with the capitalizations at the first date".into(),
                    ));
                }
            }
            Ok(path)
        }
        ValueMode::Price => {
            let w0 = match initial_weights {
                Some(w) => w.clone(),
                None => SimplexVector::uniform(n)?,
            };
            if let Some(i) = w0.iter().position(|&w| w <= 0.0) {
                return Err(Error::ZeroMarketWeight { asset: i });
            }
            let base = &table.values[0];
            let caps: Vec<Vec<f64>> = table
                .values
                .iter()
                .map(|row| {
                    row.iter()
                        .zip(base)
                        .zip(w0.iter())
                        .map(|((p, p0), w)| w * p / p0)
                        .collect()
                })
                .collect();
            let mut weights = caps
                .iter()
                .map(|row| SimplexVector::from_positive(row))
                .collect::<Result<Vec<_>>>()?;
            weights[0] = w0;
            MarketPath::with_weights(table.dates.clone(), caps, weights)
        }
    }
}
