//! On-demand computation cost: `dollars = price_per_hour * seconds / 3600`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SECONDS_PER_HOUR: f64 = 3600.0;

/// Hourly on-demand prices keyed by instance type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceTable {
    pub currency: String,
    pub entries: BTreeMap<String, f64>,
    #[serde(default)]
    pub source_note: String,
}

impl PriceTable {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let table: PriceTable = serde_json::from_str(text)?;
        table.validate()?;
        Ok(table)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, &price) in &self.entries {
            if !(price.is_finite() && price > 0.0) {
                return Err(Error::arg(format!(
                    "price for '{name}' must be positive, got {price}"
                )));
            }
        }
        Ok(())
    }

    pub fn price(&self, instance: &str) -> Result<f64> {
        self.entries
            .get(instance)
            .copied()
            .ok_or_else(|| Error::UnknownInstance {
                name: instance.to_string(),
                available: self.entries.keys().cloned().collect::<Vec<_>>().join(", "),
            })
    }

    /// A small bundled table of US-East on-demand Linux prices.
    pub fn bundled() -> Self {
        Self::from_json(include_str!("../data/prices.json")).expect("bundled price table is valid")
    }
}

/// `price * seconds / 3600`, rounded once.
///
/// The product is split into an exact head and tail with a fused multiply-add
/// and the quotient is corrected by its exact remainder.
pub fn computation_cost(price_per_hour: f64, time_s: f64) -> Result<f64> {
    if !(price_per_hour >= 0.0 && price_per_hour.is_finite()) {
        return Err(Error::arg(format!(
            "price must be non-negative, got {price_per_hour}"
        )));
    }
    if !(time_s >= 0.0 && time_s.is_finite()) {
        return Err(Error::arg(format!("time must be non-negative, got {time_s}")));
    }
    let hi = price_per_hour * time_s;
    let lo = price_per_hour.mul_add(time_s, -hi);
    let q = hi / SECONDS_PER_HOUR;
    let rem = (-q).mul_add(SECONDS_PER_HOUR, hi) + lo;
    Ok(q + rem / SECONDS_PER_HOUR)
}

/// `time_actual / time_full`; smaller is more cost effective.
pub fn cost_effectiveness(time_actual_s: f64, time_full_s: f64) -> Result<f64> {
    if !(time_full_s > 0.0 && time_full_s.is_finite()) {
        return Err(Error::arg(format!(
            "full computation time must be positive, got {time_full_s}"
        )));
    }
    if time_actual_s.is_nan() || time_actual_s <= 0.0 {
        return Err(Error::arg(format!(
            "actual computation time must be positive, got {time_actual_s}"
        )));
    }
    if time_actual_s > time_full_s {
        return Err(Error::arg(format!(
            "actual time {time_actual_s}s exceeds full time {time_full_s}s"
        )));
    }
    Ok(time_actual_s / time_full_s)
}

/// Training, early-stopped and full-convergence wall times in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostTimes {
    pub train_s: f64,
    pub actual_s: f64,
    pub full_s: f64,
}

impl CostTimes {
    /// The same workload repeated `units` times.
    pub fn scaled(self, units: f64) -> Self {
        Self {
            train_s: self.train_s,
            actual_s: self.actual_s * units,
            full_s: self.full_s * units,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub instance_type: String,
    pub currency: String,
    pub price_per_hour: f64,
    pub time_train_s: f64,
    pub time_actual_s: f64,
    pub time_full_s: f64,
    /// Training plus early-stopped time.
    pub time_comp_s: f64,
    pub cost_effective: f64,
    pub dollars_train: f64,
    pub dollars_actual: f64,
    pub dollars_full: f64,
    pub dollars_comp: f64,
    pub dollars_saved: f64,
}

pub fn build_cost_report(times: CostTimes, table: &PriceTable, instance: &str) -> Result<CostReport> {
    let price = table.price(instance)?;
    if times.train_s < 0.0 {
        return Err(Error::arg("training time must be non-negative"));
    }
    let cost_effective = cost_effectiveness(times.actual_s, times.full_s)?;
    let time_comp_s = times.train_s + times.actual_s;
    let dollars_actual = computation_cost(price, times.actual_s)?;
    let dollars_full = computation_cost(price, times.full_s)?;
    Ok(CostReport {
        instance_type: instance.to_string(),
        currency: table.currency.clone(),
        price_per_hour: price,
        time_train_s: times.train_s,
        time_actual_s: times.actual_s,
        time_full_s: times.full_s,
        time_comp_s,
        cost_effective,
        dollars_train: computation_cost(price, times.train_s)?,
        dollars_actual,
        dollars_full,
        dollars_comp: computation_cost(price, time_comp_s)?,
        dollars_saved: dollars_full - dollars_actual,
    })
}

impl CostReport {
    /// Plain-text summary table.
    pub fn render(&self) -> String {
        let mut s = String::new();
        let cur = &self.currency;
        let _ = writeln!(s, "instance           {} @ {} {cur}/h", self.instance_type, self.price_per_hour);
        let _ = writeln!(s, "time (train)       {:.3} s", self.time_train_s);
        let _ = writeln!(s, "time (early stop)  {:.3} s", self.time_actual_s);
        let _ = writeln!(s, "time (full)        {:.3} s", self.time_full_s);
        let _ = writeln!(s, "time (comp)        {:.3} s", self.time_comp_s);
        let _ = writeln!(s, "cost effective     {:.2}%", self.cost_effective * 100.0);
        let _ = writeln!(s, "cost (early stop)  {:.4} {cur}", self.dollars_actual);
        let _ = writeln!(s, "cost (full)        {:.4} {cur}", self.dollars_full);
        let _ = writeln!(s, "cost (comp)        {:.4} {cur}", self.dollars_comp);
        let _ = writeln!(s, "saved              {:.4} {cur}", self.dollars_saved);
        s
    }
}
