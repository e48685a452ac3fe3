//! Chain storage, posterior summaries, inefficiency factors, efficiency
//! reports and kernel density export.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::domain::parse_f64;
use crate::error::{Error, Result};

/// Minimum series length for autocorrelation-based diagnostics.
pub const MIN_SERIES: usize = 100;
/// Upper bound on the autocorrelation truncation lag.
pub const MAX_LAG: usize = 1000;

/// Run metadata stored next to a chain.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ChainMeta {
    pub sampler: String,
    pub seed: Option<u64>,
    pub acceptance_rate: Option<f64>,
    pub burn_in: usize,
    pub total_seconds: f64,
}

/// Retained draws with named columns, one draw per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    pub names: Vec<String>,
    pub draws: Vec<Vec<f64>>,
    pub meta: ChainMeta,
}

impl Chain {
    pub fn new(names: Vec<String>, draws: Vec<Vec<f64>>, meta: ChainMeta) -> Result<Self> {
        let mut seen = HashSet::new();
        for n in &names {
            if !seen.insert(n.as_str()) {
                return Err(Error::Config(format!("duplicate column name {n}")));
            }
        }
        for row in &draws {
            if row.len() != names.len() {
                return Err(Error::DimensionMismatch { expected: names.len(), got: row.len() });
            }
            if row.iter().any(|v| v.is_nan()) {
                return Err(Error::Parse("chain contains a missing value".into()));
            }
        }
        Ok(Self { names, draws, meta })
    }

    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.draws.iter().map(|r| r[j]).collect()
    }

    pub fn column_by_name(&self, name: &str) -> Option<Vec<f64>> {
        self.column_index(name).map(|j| self.column(j))
    }

    /// Per-draw product of columns, e.g. `"sigma2*phi"`.
    pub fn derived(&self, expr: &str) -> Result<Vec<f64>> {
        let idx: Vec<usize> = expr
            .split('*')
            .map(|t| {
                let t = t.trim();
                self.column_index(t).ok_or_else(|| Error::Config(format!("unknown column {t} in {expr}")))
            })
            .collect::<Result<_>>()?;
        Ok(self.draws.iter().map(|r| idx.iter().map(|&j| r[j]).product()).collect())
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(&self.names)?;
        for row in &self.draws {
            w.write_record(row.iter().map(|v| v.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
        let names: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        let mut draws = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            draws.push(rec.iter().map(parse_f64).collect::<Result<Vec<f64>>>()?);
        }
        Chain::new(names, draws, ChainMeta::default())
    }
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Empirical quantile with linear interpolation between order statistics.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = p.clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn sorted(x: &[f64]) -> Vec<f64> {
    let mut v = x.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    v
}

/// `1 + 2 Σ ρ_t`, summed up to the lag before the first non-positive
/// autocorrelation and at most `min(1000, n/10)` lags; floored at 1.
///
/// A series with zero variance never decorrelates and gets the capped value.
pub fn inefficiency_factor(series: &[f64]) -> Result<f64> {
    let n = series.len();
    if n < MIN_SERIES {
        return Err(Error::TooShort { need: MIN_SERIES, got: n });
    }
    let cap = MAX_LAG.min(n / 10);
    let m = mean(series);
    let centered: Vec<f64> = series.iter().map(|x| x - m).collect();
    let c0: f64 = centered.iter().map(|x| x * x).sum();
    if c0 <= 0.0 {
        return Ok(1.0 + 2.0 * cap as f64);
    }
    let mut sum = 0.0;
    for t in 1..=cap {
        let ct: f64 = centered[..n - t].iter().zip(&centered[t..]).map(|(a, b)| a * b).sum();
        let rho = ct / c0;
        if rho <= 0.0 {
            break;
        }
        sum += rho;
    }
    Ok((1.0 + 2.0 * sum).max(1.0))
}

/// One row of a posterior summary table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub name: String,
    pub mean: f64,
    pub stdev: f64,
    pub q025: f64,
    pub q975: f64,
    /// `NaN` when the chain is too short.
    pub inefficiency: f64,
}

/// Summary of one series.
pub fn summarize_series(name: &str, x: &[f64]) -> SummaryRow {
    let n = x.len();
    let m = mean(x);
    let var = if n > 1 { x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1) as f64 } else { 0.0 };
    let s = sorted(x);
    SummaryRow {
        name: name.to_string(),
        mean: m,
        stdev: var.sqrt(),
        q025: quantile(&s, 0.025),
        q975: quantile(&s, 0.975),
        inefficiency: inefficiency_factor(x).unwrap_or(f64::NAN),
    }
}

/// Summaries of every column followed by the requested derived products.
pub fn summarize(chain: &Chain, derived: &[String]) -> Result<Vec<SummaryRow>> {
    if chain.is_empty() {
        return Err(Error::TooShort { need: 1, got: 0 });
    }
    let mut rows: Vec<SummaryRow> =
        chain.names.iter().enumerate().map(|(j, n)| summarize_series(n, &chain.column(j))).collect();
    for expr in derived {
        rows.push(summarize_series(expr.trim(), &chain.derived(expr)?));
    }
    Ok(rows)
}

pub fn write_summary_csv(rows: &[SummaryRow], path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Cost of one effectively independent draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyReport {
    pub time: f64,
    pub iterations: usize,
    pub if_min: f64,
    pub if_max: f64,
    pub time_per_iteration: f64,
    pub cost_min: f64,
    pub cost_max: f64,
}

/// Report from a wall time, a retained length and per-parameter IFs.
pub fn efficiency_from_ifs(time: f64, iterations: usize, ifs: &[f64]) -> EfficiencyReport {
    let if_min = ifs.iter().cloned().fold(f64::INFINITY, f64::min);
    let if_max = ifs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let per = time / iterations as f64;
    EfficiencyReport {
        time,
        iterations,
        if_min,
        if_max,
        time_per_iteration: per,
        cost_min: per * if_min,
        cost_max: per * if_max,
    }
}

pub fn efficiency_report(chain: &Chain, time: f64) -> Result<EfficiencyReport> {
    let ifs = (0..chain.names.len()).map(|j| inefficiency_factor(&chain.column(j))).collect::<Result<Vec<_>>>()?;
    Ok(efficiency_from_ifs(time, chain.len(), &ifs))
}

/// Gaussian kernel density estimate with Silverman's bandwidth on
/// `n_grid` equispaced points over the data range padded by one bandwidth.
pub fn density_export(series: &[f64], n_grid: usize) -> Result<Vec<(f64, f64)>> {
    let n = series.len();
    if n < MIN_SERIES {
        return Err(Error::TooShort { need: MIN_SERIES, got: n });
    }
    let s = sorted(series);
    let m = mean(series);
    let sd = (series.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
    let iqr = quantile(&s, 0.75) - quantile(&s, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    let mut h = 0.9 * spread * (n as f64).powf(-0.2);
    if !(h > 0.0) {
        h = 1e-3 * s[0].abs().max(1.0);
    }
    let (lo, hi) = (s[0] - h, s[n - 1] + h);
    let g = n_grid.max(2);
    let norm = 1.0 / (n as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
    Ok((0..g)
        .map(|i| {
            let x = lo + (hi - lo) * i as f64 / (g - 1) as f64;
            // Only points within 8 bandwidths contribute.
            let a = s.partition_point(|v| *v < x - 8.0 * h);
            let b = s.partition_point(|v| *v <= x + 8.0 * h);
            let d: f64 = s[a..b].iter().map(|v| (-0.5 * ((x - v) / h).powi(2)).exp()).sum();
            (x, d * norm)
        })
        .collect())
}
