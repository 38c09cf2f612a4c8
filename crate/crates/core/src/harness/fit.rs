use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{MetricKind, SweepRecord};
use crate::error::{Error, Result};

/// Least-squares fit of `y = a * ln(x) + b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogFit {
    pub a: f64,
    pub b: f64,
    pub residual_sum: f64,
}

impl LogFit {
    pub fn predict(&self, x: f64) -> f64 {
        self.a * x.ln() + self.b
    }
}

pub fn fit_log_curve(points: &[(f64, f64)]) -> Result<LogFit> {
    if let Some(&(x, _)) = points.iter().find(|(x, y)| !(*x > 0.0) || !x.is_finite() || !y.is_finite()) {
        return Err(Error::format(format!("log fit needs finite points with x > 0, got x = {x}")));
    }
    let first = match points.first() {
        Some(p) => p.0,
        None => return Err(Error::DegenerateFit),
    };
    if points.iter().all(|p| p.0 == first) {
        return Err(Error::DegenerateFit);
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0.ln()).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for &(x, y) in points {
        let dx = x.ln() - mx;
        sxx += dx * dx;
        sxy += dx * (y - my);
    }
    let a = sxy / sxx;
    let b = my - a * mx;
    let residual_sum = points.iter().map(|&(x, y)| (y - (a * x.ln() + b)).powi(2)).sum();
    Ok(LogFit { a, b, residual_sum })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeoffRow {
    pub model: String,
    pub strategy: String,
    pub param: Option<f64>,
    pub x: Option<f64>,
    pub y: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFit {
    pub model: String,
    pub fit: Option<LogFit>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeoffTable {
    pub quality: MetricKind,
    pub diversity: MetricKind,
    pub rows: Vec<TradeoffRow>,
    pub fits: Vec<ModelFit>,
}

/// Plot data with both axes oriented lower-is-better: higher-better quality
/// metrics are negated. Rows with a missing value stay in the table but are
/// left out of the per-model fit.
pub fn tradeoff_table(records: &[SweepRecord], quality: MetricKind, diversity: MetricKind) -> TradeoffTable {
    let sign = if quality.higher_is_better() { -1.0 } else { 1.0 };
    let rows: Vec<TradeoffRow> = records
        .iter()
        .map(|r| TradeoffRow {
            model: r.model.clone(),
            strategy: r.strategy.clone(),
            param: r.param,
            x: r.metric(diversity),
            y: r.metric(quality).map(|v| sign * v),
        })
        .collect();
    let mut models: Vec<&str> = Vec::new();
    for r in &rows {
        if !models.contains(&r.model.as_str()) {
            models.push(&r.model);
        }
    }
    let fits = models
        .into_iter()
        .map(|m| {
            let pts: Vec<(f64, f64)> = rows
                .iter()
                .filter(|r| r.model == m)
                .filter_map(|r| Some((r.x?, r.y?)))
                .filter(|&(x, _)| x > 0.0)
                .collect();
            match fit_log_curve(&pts) {
                Ok(fit) => ModelFit { model: m.to_string(), fit: Some(fit), error: None },
                Err(e) => ModelFit { model: m.to_string(), fit: None, error: Some(e.to_string()) },
            }
        })
        .collect();
    TradeoffTable { quality, diversity, rows, fits }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl TradeoffTable {
    pub fn write_rows_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["model", "strategy", "param", "x", "y"])?;
        for r in &self.rows {
            out.write_record([r.model.clone(), r.strategy.clone(), opt(r.param), opt(r.x), opt(r.y)])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn write_fits_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["model", "a", "b", "residual_sum", "error"])?;
        for f in &self.fits {
            let (a, b, rs) = match f.fit {
                Some(fit) => (Some(fit.a), Some(fit.b), Some(fit.residual_sum)),
                None => (None, None, None),
            };
            out.write_record([f.model.clone(), opt(a), opt(b), opt(rs), f.error.clone().unwrap_or_default()])?;
        }
        out.flush()?;
        Ok(())
    }
}
