use std::collections::BTreeSet;

use proptest::prelude::*;
use ssanova::data::{
    aggregate_daily, read_csv, read_table, synthesize, write_csv, write_table, DailyAggregation, GroupDef,
    SchemaConfig, Shape, SyntheticScenario,
};
use ssanova::model::{Observation, ObservationTable};

fn table_strategy() -> impl Strategy<Value = ObservationTable> {
    let row = (
        0usize..6,
        0u32..3,
        0u32..1440,
        0usize..4,
        -1e3f64..1e5,
        prop::bool::ANY,
        prop::bool::ANY,
    );
    (prop::collection::vec(row, 4..60), prop::bool::ANY).prop_filter_map(
        "need two levels per factor",
        |(rows, with_day)| {
            let obs: Vec<Observation> = rows
                .iter()
                .enumerate()
                .map(|(i, &(s, d, m, g, vm, f, frac))| Observation {
                    subject_id: format!("p{s}"),
                    day: with_day.then_some(d),
                    time: m as f64 + if frac { 0.25 } else { 0.0 },
                    levels: vec![
                        ["a", "b", "c", "d"][(g + i) % 4].to_owned(),
                        if f { "yes" } else { "no" }.to_owned(),
                    ],
                    response: vm,
                })
                .collect();
            ObservationTable::from_observations(obs, &["group".into(), "falls".into()]).ok()
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn csv_round_trip_is_exact(table in table_strategy()) {
        let schema = SchemaConfig::default();
        let mut buf = Vec::new();
        write_table(&mut buf, &table, &schema).unwrap();
        let (back, report) = read_table(buf.as_slice(), &schema).unwrap();
        prop_assert_eq!(report.dropped, 0);
        prop_assert_eq!(back, table);
    }

    #[test]
    fn mean_over_days_has_one_row_per_subject_minute(table in table_strategy()) {
        let out = aggregate_daily(&table, DailyAggregation::MeanOverDays);
        let keys: BTreeSet<(String, u64)> = table
            .observations()
            .iter()
            .map(|o| (o.subject_id.clone(), o.time.to_bits()))
            .collect();
        // levels vary within a subject here, so the key includes them
        let full: BTreeSet<(String, u64, Vec<String>)> = table
            .observations()
            .iter()
            .map(|o| (o.subject_id.clone(), o.time.to_bits(), o.levels.clone()))
            .collect();
        prop_assert_eq!(out.n(), full.len());
        prop_assert!(out.n() >= keys.len());
        prop_assert!(out.observations().iter().all(|o| o.day.is_none()));
        prop_assert_eq!(aggregate_daily(&table, DailyAggregation::StackDays), table);
    }

    #[test]
    fn synthetic_truth_satisfies_side_conditions(
        heights in prop::collection::vec((-2.0f64..2.0, 100.0f64..1300.0, 0.1f64..1.0), 2..5),
        offsets in prop::collection::vec(-1.0f64..1.0, 5),
        amp in -1.0f64..1.0,
    ) {
        let groups: Vec<GroupDef> = heights
            .iter()
            .enumerate()
            .map(|(i, &(h, c, w))| GroupDef {
                label: format!("g{i}"),
                curve: vec![
                    Shape::Constant { value: offsets[i] },
                    Shape::RaisedCosine { center: c, half_width: w * c.min(1440.0 - c), height: h },
                    Shape::Sine { amplitude: amp * i as f64, cycles: 2, phase: 0.3 },
                ],
            })
            .collect();
        let k = groups.len();
        let synth = synthesize(&SyntheticScenario {
            groups,
            subjects_per_group: 1,
            minutes_per_day: 4,
            ..SyntheticScenario::default()
        })
        .unwrap();
        let truth = &synth.truth;

        // Simpson's rule on a fine grid; every shape is smooth enough for 1e-8.
        let steps = 28_800;
        let h = 1440.0 / steps as f64;
        let simpson = |f: &dyn Fn(f64) -> f64| {
            let mut s = f(0.0) + f(1440.0);
            for i in 1..steps {
                s += f(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
            }
            s * h / 3.0 / 1440.0
        };
        prop_assert!(simpson(&|t| truth.eta1(t)).abs() <= 1e-8);
        prop_assert!((0..k).map(|g| truth.eta2(g)).sum::<f64>().abs() <= 1e-8);
        for g in 0..k {
            prop_assert!(simpson(&|t| truth.eta12(t, g)).abs() <= 1e-8);
        }
        for t in [0.0, 333.0, 720.0, 1100.5] {
            prop_assert!((0..k).map(|g| truth.eta12(t, g)).sum::<f64>().abs() <= 1e-8);
            for g in 0..k {
                let parts = truth.eta0() + truth.eta1(t) + truth.eta2(g) + truth.eta12(t, g);
                prop_assert!((parts - truth.eta(t, g)).abs() <= 1e-10);
            }
        }
    }
}

#[test]
fn file_round_trip_with_hhmm_schema() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.csv");
    let synth = synthesize(&SyntheticScenario {
        subjects_per_group: 2,
        minutes_per_day: 24,
        days: 2,
        ..SyntheticScenario::default()
    })
    .unwrap();
    let schema = SchemaConfig {
        time_format: "hhmm".parse().unwrap(),
        ..SchemaConfig::default()
    };
    write_csv(&path, &synth.table, &schema).unwrap();
    let (back, _) = read_csv(&path, &schema).unwrap();
    assert_eq!(back, synth.table);
    let mean = aggregate_daily(&back, DailyAggregation::MeanOverDays);
    assert_eq!(mean.n(), 4 * 2 * 24);
}

#[test]
fn missing_file_is_io_error() {
    let err = read_csv("/nonexistent/dir/x.csv".as_ref(), &SchemaConfig::default()).unwrap_err();
    assert!(err.is_io());
}
