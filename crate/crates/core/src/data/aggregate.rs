use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::model::{Observation, ObservationTable};

/// Handling of multi-day recordings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DailyAggregation {
    /// Keep every row; days are replicates of the same daily curve.
    #[default]
    StackDays,
    /// One row per subject and minute, averaging the days present.
    MeanOverDays,
}

impl std::str::FromStr for DailyAggregation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s.trim().to_ascii_lowercase().as_str() {
            "stack_days" | "stack" => Ok(Self::StackDays),
            "mean_over_days" | "mean" => Ok(Self::MeanOverDays),
            other => Err(Error::Domain(format!("unknown aggregation {other}"))),
        }
    }
}

/// Collapse days. Rows are keyed by subject, minute and factor levels, and
/// emitted in order of first appearance.
pub fn aggregate_daily(table: &ObservationTable, mode: DailyAggregation) -> ObservationTable {
    if mode == DailyAggregation::StackDays {
        return table.clone();
    }
    let mut index: HashMap<(&str, u64, &[String]), usize> = HashMap::new();
    let mut sums: Vec<(Observation, f64, usize)> = Vec::new();
    for o in table.observations() {
        let key = (o.subject_id.as_str(), o.time.to_bits(), o.levels.as_slice());
        match index.get(&key) {
            Some(&i) => {
                sums[i].1 += o.response;
                sums[i].2 += 1;
            }
            None => {
                index.insert(key, sums.len());
                sums.push((o.clone(), o.response, 1));
            }
        }
    }
    let rows = sums
        .into_iter()
        .map(|(mut o, sum, count)| {
            o.day = None;
            o.response = sum / count as f64;
            o
        })
        .collect();
    ObservationTable::new(rows, table.factor_defs().to_vec()).expect("aggregation keeps rows valid")
}
