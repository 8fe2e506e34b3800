use std::collections::HashSet;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::kernel::CovariatePoint;
use crate::model::{unit_time, KnotCount, ObservationTable};

/// `min(n, max(30, ceil(10 n^{2/9})))`.
pub fn auto_knot_count(n: usize) -> usize {
    let q = (10.0 * (n as f64).powf(2.0 / 9.0)).ceil() as usize;
    q.max(30).min(n)
}

pub fn resolve_knot_count(count: KnotCount, n: usize) -> Result<usize> {
    match count {
        KnotCount::Auto => Ok(auto_knot_count(n)),
        KnotCount::Fixed(q) if q > n => Err(Error::Domain(format!("requested {q} knots but only {n} observations"))),
        KnotCount::Fixed(0) => Err(Error::Domain("knot count must be positive".into())),
        KnotCount::Fixed(q) => Ok(q),
    }
}

/// Sample knots from the distinct covariate points (time and factor levels;
/// subjects are ignored), uniformly without replacement. When fewer distinct
/// points exist than requested, all of them are used. Returned in
/// first-occurrence order.
pub fn select_knot_points(points: &[CovariatePoint], count: KnotCount, seed: u64) -> Result<Vec<CovariatePoint>> {
    let q = resolve_knot_count(count, points.len())?;
    let mut seen = HashSet::new();
    let distinct: Vec<&CovariatePoint> = points
        .iter()
        .filter(|p| seen.insert((p.t.to_bits(), p.levels.clone())))
        .collect();
    let q = q.min(distinct.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = index::sample(&mut rng, distinct.len(), q).into_vec();
    picked.sort_unstable();
    Ok(picked
        .into_iter()
        .map(|i| CovariatePoint {
            t: distinct[i].t,
            levels: distinct[i].levels.clone(),
            subject: None,
        })
        .collect())
}

/// Knots for a table: rows are mapped to unit time and level indices first.
pub fn select_knots(table: &ObservationTable, count: KnotCount, seed: u64) -> Result<Vec<CovariatePoint>> {
    let points: Vec<CovariatePoint> = table
        .observations()
        .iter()
        .map(|o| CovariatePoint {
            t: unit_time(o.time),
            levels: o
                .levels
                .iter()
                .zip(table.factor_defs())
                .map(|(l, f)| f.index_of(l).expect("validated level"))
                .collect(),
            subject: None,
        })
        .collect();
    select_knot_points(&points, count, seed)
}
