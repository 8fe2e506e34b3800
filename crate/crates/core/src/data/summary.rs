use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ObservationTable;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub mean: f64,
    /// Sample standard deviation; 0 for a single value.
    pub std: f64,
    pub min: f64,
    pub median: f64,
    pub max: f64,
}

impl Stats {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let median = if n % 2 == 1 {
            sorted[n / 2]
        } else {
            (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
        };
        Some(Self {
            mean,
            std,
            min: sorted[0],
            median,
            max: sorted[n - 1],
        })
    }
}

/// Share of a group's subjects at the second level of a binary factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelShare {
    pub factor: String,
    pub level: String,
    pub percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub group: String,
    pub subjects: usize,
    pub rows: usize,
    pub vm: Stats,
    pub time: Stats,
    pub shares: Vec<LevelShare>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryTable {
    pub group_factor: String,
    pub groups: Vec<GroupSummary>,
}

/// Per-group summaries of the response and time columns, plus subject
/// percentages for every other two-level factor. A subject's level is taken
/// from its first row.
pub fn summarize(table: &ObservationTable, group_factor: &str) -> Result<SummaryTable> {
    let (gf, def) = table
        .factor(group_factor)
        .ok_or_else(|| Error::Domain(format!("unknown factor {group_factor}")))?;
    let binary: Vec<(usize, &crate::model::FactorDef)> = table
        .factor_defs()
        .iter()
        .enumerate()
        .filter(|(j, f)| *j != gf && f.len() == 2)
        .collect();

    let mut groups = Vec::new();
    for level in def.levels() {
        let rows: Vec<_> = table.observations().iter().filter(|o| &o.levels[gf] == level).collect();
        if rows.is_empty() {
            continue;
        }
        let vm: Vec<f64> = rows.iter().map(|o| o.response).collect();
        let time: Vec<f64> = rows.iter().map(|o| o.time).collect();
        let mut first: BTreeMap<&str, &Vec<String>> = BTreeMap::new();
        for o in &rows {
            first.entry(o.subject_id.as_str()).or_insert(&o.levels);
        }
        let shares = binary
            .iter()
            .map(|(j, f)| {
                let hit = first.values().filter(|l| l[*j] == f.levels()[1]).count();
                LevelShare {
                    factor: f.name().to_owned(),
                    level: f.levels()[1].clone(),
                    percent: 100.0 * hit as f64 / first.len() as f64,
                }
            })
            .collect();
        groups.push(GroupSummary {
            group: level.clone(),
            subjects: first.len(),
            rows: rows.len(),
            vm: Stats::of(&vm).expect("non-empty group"),
            time: Stats::of(&time).expect("non-empty group"),
            shares,
        });
    }
    Ok(SummaryTable {
        group_factor: group_factor.to_owned(),
        groups,
    })
}

impl SummaryTable {
    /// One row per group; share columns are named `pct_<factor>_<level>`.
    pub fn to_csv_string(&self) -> Result<String> {
        let mut wtr = csv::Writer::from_writer(Vec::new());
        let mut header: Vec<String> = ["group", "subjects", "rows"].map(String::from).to_vec();
        for var in ["vm", "time"] {
            for stat in ["mean", "std", "min", "median", "max"] {
                header.push(format!("{var}_{stat}"));
            }
        }
        if let Some(g) = self.groups.first() {
            header.extend(g.shares.iter().map(|s| format!("pct_{}_{}", s.factor, s.level)));
        }
        wtr.write_record(&header)?;
        for g in &self.groups {
            let mut row = vec![g.group.clone(), g.subjects.to_string(), g.rows.to_string()];
            for s in [g.vm, g.time] {
                row.extend([s.mean, s.std, s.min, s.median, s.max].map(|v| v.to_string()));
            }
            row.extend(g.shares.iter().map(|s| s.percent.to_string()));
            wtr.write_record(&row)?;
        }
        let bytes = wtr.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Observation;

    fn row(s: &str, g: &str, falls: &str, time: f64, vm: f64) -> Observation {
        Observation {
            subject_id: s.into(),
            day: None,
            time,
            levels: vec![g.into(), falls.into()],
            response: vm,
        }
    }

    fn fixture() -> ObservationTable {
        ObservationTable::from_observations(
            vec![
                row("a", "c", "no", 0.0, 1.0),
                row("a", "c", "no", 10.0, 2.0),
                row("b", "c", "yes", 20.0, 3.0),
                row("b", "c", "yes", 30.0, 10.0),
                row("d", "c", "no", 40.0, 0.0),
                row("e", "i", "yes", 50.0, 7.0),
            ],
            &["group".into(), "falls".into()],
        )
        .unwrap()
    }

    #[test]
    fn hand_computed_group() {
        let s = summarize(&fixture(), "group").unwrap();
        let c = &s.groups[0];
        assert_eq!(c.group, "c");
        assert_eq!((c.subjects, c.rows), (3, 5));
        // vm: 1 2 3 10 0 -> mean 16/5, median 2
        assert!((c.vm.mean - 3.2).abs() < 1e-15);
        assert_eq!(c.vm.median, 2.0);
        // sum of squares about 3.2: 4.84 + 1.44 + 0.04 + 46.24 + 10.24 = 62.8
        assert!((c.vm.std - (62.8f64 / 4.0).sqrt()).abs() < 1e-12);
        assert_eq!((c.vm.min, c.vm.max), (0.0, 10.0));
        assert_eq!(c.time.median, 20.0);
        assert_eq!(c.shares[0].level, "yes");
        assert!((c.shares[0].percent - 100.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn single_row_group() {
        let s = summarize(&fixture(), "group").unwrap();
        let i = &s.groups[1];
        assert_eq!(i.vm.std, 0.0);
        assert_eq!(i.vm.min, i.vm.median);
        assert_eq!(i.vm.median, i.vm.max);
    }

    #[test]
    fn unknown_factor() {
        assert!(summarize(&fixture(), "site").is_err());
    }

    #[test]
    fn csv_has_one_row_per_group() {
        let text = summarize(&fixture(), "group").unwrap().to_csv_string().unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.lines().next().unwrap().ends_with("pct_falls_yes"));
    }
}
