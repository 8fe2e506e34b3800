//! Observations, factor definitions, and the declarative model specification.
//!
//! A [`ModelSpec`] lists the ANOVA terms to fit. [`validate_spec`] binds it to
//! an [`ObservationTable`] and produces a [`ModelPlan`], which is what the
//! kernel and solver modules consume.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, SpecError};

/// Length of the daily time domain in minutes.
pub const DAY_MINUTES: f64 = 1440.0;

/// Map a minute of the day onto the unit interval used by every kernel.
pub fn unit_time(minute: f64) -> f64 {
    minute / DAY_MINUTES
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub subject_id: String,
    /// Day index for multi-day recordings, if known.
    pub day: Option<u32>,
    /// Minute of the day in `[0, 1440)`.
    pub time: f64,
    /// One level label per declared factor, in factor order.
    pub levels: Vec<String>,
    pub response: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactorDef {
    name: String,
    levels: Vec<String>,
}

impl FactorDef {
    pub fn new(name: impl Into<String>, levels: Vec<String>) -> Result<Self> {
        let name = name.into();
        let unique: BTreeSet<&String> = levels.iter().collect();
        if unique.len() != levels.len() {
            return Err(Error::Data(format!("factor {name}: duplicate level labels")));
        }
        if levels.len() < 2 {
            return Err(Error::Data(format!(
                "factor {name}: needs at least 2 levels, found {}",
                levels.len()
            )));
        }
        Ok(Self { name, levels })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn levels(&self) -> &[String] {
        &self.levels
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn index_of(&self, level: &str) -> Option<usize> {
        self.levels.iter().position(|l| l == level)
    }
}

/// Long-format table of observations with its factor definitions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationTable {
    observations: Vec<Observation>,
    factor_defs: Vec<FactorDef>,
}

impl ObservationTable {
    pub fn new(observations: Vec<Observation>, factor_defs: Vec<FactorDef>) -> Result<Self> {
        if observations.is_empty() {
            return Err(Error::Data("table has no rows".into()));
        }
        for (row, obs) in observations.iter().enumerate() {
            if !(0.0..DAY_MINUTES).contains(&obs.time) {
                return Err(Error::Data(format!("row {row}: time {} outside [0, 1440)", obs.time)));
            }
            if !obs.response.is_finite() {
                return Err(Error::Data(format!("row {row}: non-finite response")));
            }
            if obs.levels.len() != factor_defs.len() {
                return Err(Error::Data(format!(
                    "row {row}: {} factor levels for {} factors",
                    obs.levels.len(),
                    factor_defs.len()
                )));
            }
            for (level, def) in obs.levels.iter().zip(&factor_defs) {
                if def.index_of(level).is_none() {
                    return Err(Error::Data(format!(
                        "row {row}: level \"{level}\" not declared for factor {}",
                        def.name()
                    )));
                }
            }
        }
        Ok(Self {
            observations,
            factor_defs,
        })
    }

    /// Build a table whose factor levels are the sorted distinct labels seen
    /// in each column.
    pub fn from_observations(observations: Vec<Observation>, factor_names: &[String]) -> Result<Self> {
        let mut defs = Vec::with_capacity(factor_names.len());
        for (j, name) in factor_names.iter().enumerate() {
            let levels: BTreeSet<&str> = observations
                .iter()
                .filter_map(|o| o.levels.get(j).map(String::as_str))
                .collect();
            defs.push(FactorDef::new(
                name.clone(),
                levels.into_iter().map(str::to_owned).collect(),
            )?);
        }
        Self::new(observations, defs)
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn factor_defs(&self) -> &[FactorDef] {
        &self.factor_defs
    }

    pub fn factor(&self, name: &str) -> Option<(usize, &FactorDef)> {
        self.factor_defs.iter().enumerate().find(|(_, f)| f.name() == name)
    }

    pub fn n(&self) -> usize {
        self.observations.len()
    }

    /// Sorted distinct subject labels.
    pub fn subjects(&self) -> Vec<String> {
        let set: BTreeSet<&str> = self.observations.iter().map(|o| o.subject_id.as_str()).collect();
        set.into_iter().map(str::to_owned).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ResponseTransform {
    Identity,
    #[default]
    Log1p,
}

impl ResponseTransform {
    pub fn apply(self, y: f64) -> Result<f64> {
        match self {
            ResponseTransform::Identity => Ok(y),
            ResponseTransform::Log1p if y > -1.0 => Ok(y.ln_1p()),
            ResponseTransform::Log1p => Err(Error::Domain(format!("log1p transform undefined for response {y}"))),
        }
    }
}

impl std::str::FromStr for ResponseTransform {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "identity" | "none" => Ok(Self::Identity),
            "log1p" | "log" => Ok(Self::Log1p),
            other => Err(Error::Domain(format!("unknown transform {other}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    #[default]
    Gcv,
    Gml,
}

impl std::str::FromStr for Criterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gcv" => Ok(Self::Gcv),
            "gml" | "reml" => Ok(Self::Gml),
            other => Err(Error::Domain(format!("unknown criterion {other}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum KnotCount {
    #[default]
    Auto,
    Fixed(usize),
}

impl std::str::FromStr for KnotCount {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("auto") {
            return Ok(Self::Auto);
        }
        s.parse::<usize>()
            .map(Self::Fixed)
            .map_err(|_| Error::Domain(format!("knot count must be \"auto\" or an integer, got {s}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "factor", rename_all = "snake_case")]
pub enum TermKind {
    Constant,
    TimeLinear,
    TimeSmooth,
    NominalMain(String),
    TimeByNominalLinear(String),
    TimeByNominalSmooth(String),
    RandomIntercept,
}

impl TermKind {
    pub fn factor(&self) -> Option<&str> {
        match self {
            TermKind::NominalMain(f) | TermKind::TimeByNominalLinear(f) | TermKind::TimeByNominalSmooth(f) => Some(f),
            _ => None,
        }
    }

    fn default_penalized(&self) -> bool {
        !matches!(self, TermKind::Constant | TermKind::TimeLinear)
    }
}

impl fmt::Display for TermKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TermKind::Constant => write!(f, "constant"),
            TermKind::TimeLinear => write!(f, "time_linear"),
            TermKind::TimeSmooth => write!(f, "time_smooth"),
            TermKind::NominalMain(g) => write!(f, "nominal_main({g})"),
            TermKind::TimeByNominalLinear(g) => write!(f, "time_by_nominal_linear({g})"),
            TermKind::TimeByNominalSmooth(g) => write!(f, "time_by_nominal_smooth({g})"),
            TermKind::RandomIntercept => write!(f, "random_intercept"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TermSpec {
    pub kind: TermKind,
    pub penalized: bool,
}

impl TermSpec {
    pub fn new(kind: TermKind) -> Self {
        let penalized = kind.default_penalized();
        Self { kind, penalized }
    }

    pub fn constant() -> Self {
        Self::new(TermKind::Constant)
    }

    pub fn time_linear() -> Self {
        Self::new(TermKind::TimeLinear)
    }

    pub fn time_smooth() -> Self {
        Self::new(TermKind::TimeSmooth)
    }

    pub fn nominal_main(factor: &str) -> Self {
        Self::new(TermKind::NominalMain(factor.to_owned()))
    }

    pub fn time_by_nominal_linear(factor: &str) -> Self {
        Self::new(TermKind::TimeByNominalLinear(factor.to_owned()))
    }

    pub fn time_by_nominal_smooth(factor: &str) -> Self {
        Self::new(TermKind::TimeByNominalSmooth(factor.to_owned()))
    }

    pub fn random_intercept() -> Self {
        Self::new(TermKind::RandomIntercept)
    }

    /// Move a term into the unpenalized null space (only valid for nominal main effects).
    pub fn unpenalized(mut self) -> Self {
        self.penalized = false;
        self
    }

    pub fn label(&self) -> String {
        self.kind.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub terms: Vec<TermSpec>,
    pub response_transform: ResponseTransform,
    pub criterion: Criterion,
    pub knot_count: KnotCount,
    pub seed: u64,
    /// Run the coordinate-descent refinement of per-term weights after the
    /// single-lambda search.
    pub tune_term_weights: bool,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            terms: vec![TermSpec::constant(), TermSpec::time_linear(), TermSpec::time_smooth()],
            response_transform: ResponseTransform::default(),
            criterion: Criterion::default(),
            knot_count: KnotCount::default(),
            seed: 0,
            tune_term_weights: true,
        }
    }
}

impl ModelSpec {
    pub fn with_terms(terms: Vec<TermSpec>) -> Self {
        Self {
            terms,
            ..Self::default()
        }
    }

    /// Time x group model with additive nominal main effects and an optional
    /// subject random intercept.
    pub fn time_by_group(group: &str, additive: &[&str], random_intercept: bool) -> Self {
        let mut terms = vec![
            TermSpec::constant(),
            TermSpec::time_linear(),
            TermSpec::time_smooth(),
            TermSpec::nominal_main(group),
            TermSpec::time_by_nominal_linear(group),
            TermSpec::time_by_nominal_smooth(group),
        ];
        terms.extend(additive.iter().map(|f| TermSpec::nominal_main(f)));
        if random_intercept {
            terms.push(TermSpec::random_intercept());
        }
        Self::with_terms(terms)
    }
}

/// A term with its factor bound to a column of the table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlannedTerm {
    pub spec: TermSpec,
    /// `(factor index, level count)` for nominal and interaction terms.
    pub factor: Option<(usize, usize)>,
}

impl PlannedTerm {
    pub fn label(&self) -> String {
        self.spec.label()
    }

    pub fn is_penalized(&self) -> bool {
        self.spec.penalized
    }

    pub fn is_random(&self) -> bool {
        self.spec.kind == TermKind::RandomIntercept
    }
}

/// Result of [`validate_spec`]: the spec with every factor resolved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelPlan {
    pub spec: ModelSpec,
    pub terms: Vec<PlannedTerm>,
    pub factor_defs: Vec<FactorDef>,
}

impl ModelPlan {
    pub fn unpenalized_count(&self) -> usize {
        self.terms.iter().filter(|t| !t.is_penalized()).count()
    }

    pub fn penalized_count(&self) -> usize {
        self.terms.iter().filter(|t| t.is_penalized()).count()
    }

    pub fn has_random_intercept(&self) -> bool {
        self.terms.iter().any(PlannedTerm::is_random)
    }

    pub fn term_index(&self, term: &TermSpec) -> Option<usize> {
        self.terms.iter().position(|t| t.spec.kind == term.kind)
    }
}

/// Bind a spec to a table, reporting every problem found.
pub fn validate_spec(spec: &ModelSpec, table: &ObservationTable) -> std::result::Result<ModelPlan, Vec<SpecError>> {
    let mut errors = Vec::new();
    if table.n() == 0 {
        errors.push(SpecError::EmptyTable);
    }
    if spec.terms.is_empty() {
        errors.push(SpecError::NoTerms);
    }
    if spec.knot_count == KnotCount::Fixed(0) {
        errors.push(SpecError::ZeroKnots);
    }

    let mut seen = BTreeSet::new();
    let mut terms = Vec::with_capacity(spec.terms.len());
    for term in &spec.terms {
        let label = term.label();
        if !seen.insert(label.clone()) {
            errors.push(SpecError::DuplicateTerm(label.clone()));
            continue;
        }
        let allowed = match term.kind {
            TermKind::NominalMain(_) => true,
            ref k => term.penalized == k.default_penalized(),
        };
        if !allowed {
            errors.push(SpecError::PenalizationNotAllowed(label.clone()));
        }
        let factor = match term.kind.factor() {
            None => None,
            Some(name) => match table.factor(name) {
                Some((idx, def)) => Some((idx, def.len())),
                None => {
                    errors.push(SpecError::UnknownFactor {
                        term: label.clone(),
                        factor: name.to_owned(),
                    });
                    None
                }
            },
        };
        terms.push(PlannedTerm {
            spec: term.clone(),
            factor,
        });
    }

    for term in &spec.terms {
        if let TermKind::TimeByNominalLinear(f) | TermKind::TimeByNominalSmooth(f) = &term.kind {
            let has_main = spec.terms.iter().any(|t| t.kind == TermKind::NominalMain(f.clone()));
            if !has_main {
                errors.push(SpecError::InteractionWithoutFactor {
                    term: term.label(),
                    factor: f.clone(),
                });
            }
        }
    }

    if errors.is_empty() {
        Ok(ModelPlan {
            spec: spec.clone(),
            terms,
            factor_defs: table.factor_defs().to_vec(),
        })
    } else {
        Err(errors)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table_with_group() -> ObservationTable {
        let obs = (0..8)
            .map(|i| Observation {
                subject_id: format!("s{}", i % 4),
                day: None,
                time: 100.0 * i as f64,
                levels: vec![
                    ["a", "b", "c", "d"][i % 4].into(),
                    ["no", "yes"][i % 2].into(),
                    ["no", "yes"][(i / 2) % 2].into(),
                ],
                response: i as f64,
            })
            .collect();
        ObservationTable::from_observations(obs, &["group".into(), "falls".into(), "injury".into()]).unwrap()
    }

    #[test]
    fn minimal_cubic_model() {
        let plan = validate_spec(&ModelSpec::default(), &table_with_group()).unwrap();
        assert_eq!(plan.unpenalized_count(), 2);
        assert_eq!(plan.penalized_count(), 1);
    }

    #[test]
    fn unknown_factor() {
        let obs = vec![Observation {
            subject_id: "s".into(),
            day: None,
            time: 1.0,
            levels: vec![],
            response: 1.0,
        }];
        let table = ObservationTable::new(obs, vec![]).unwrap();
        let spec = ModelSpec::with_terms(vec![TermSpec::constant(), TermSpec::nominal_main("group")]);
        let errs = validate_spec(&spec, &table).unwrap_err();
        assert!(errs.iter().any(|e| e.to_string().contains("unknown factor")));
    }

    #[test]
    fn full_model_term_counts() {
        let spec = ModelSpec::time_by_group("group", &["falls", "injury"], true);
        let plan = validate_spec(&spec, &table_with_group()).unwrap();
        assert_eq!(plan.unpenalized_count(), 2);
        assert_eq!(plan.penalized_count(), 7);
        assert_eq!(plan.terms[3].factor, Some((0, 4)));
    }

    #[test]
    fn errors_are_exhaustive() {
        let spec = ModelSpec::with_terms(vec![
            TermSpec::constant(),
            TermSpec::constant(),
            TermSpec::nominal_main("nope"),
            TermSpec::time_by_nominal_smooth("group"),
            TermSpec::time_linear().unpenalized(),
            TermSpec {
                kind: TermKind::TimeSmooth,
                penalized: false,
            },
        ]);
        let errs = validate_spec(&spec, &table_with_group()).unwrap_err();
        assert_eq!(errs.len(), 4, "{errs:?}");
        assert!(errs.contains(&SpecError::DuplicateTerm("constant".into())));
        assert!(errs.contains(&SpecError::PenalizationNotAllowed("time_smooth".into())));
        assert!(errs.iter().any(|e| matches!(e, SpecError::UnknownFactor { .. })));
        assert!(errs
            .iter()
            .any(|e| matches!(e, SpecError::InteractionWithoutFactor { .. })));
    }

    #[test]
    fn validation_is_idempotent_and_ordered() {
        let table = table_with_group();
        let spec = ModelSpec::time_by_group("group", &["falls"], true);
        let plan = validate_spec(&spec, &table).unwrap();
        let again = validate_spec(&plan.spec, &table).unwrap();
        assert_eq!(plan, again);
        let labels: Vec<String> = plan.terms.iter().map(PlannedTerm::label).collect();
        let declared: Vec<String> = spec.terms.iter().map(TermSpec::label).collect();
        assert_eq!(labels, declared);
    }

    #[test]
    fn nominal_main_may_be_unpenalized() {
        let spec = ModelSpec::with_terms(vec![
            TermSpec::constant(),
            TermSpec::nominal_main("group").unpenalized(),
        ]);
        let plan = validate_spec(&spec, &table_with_group()).unwrap();
        assert_eq!(plan.unpenalized_count(), 2);
    }

    #[test]
    fn factor_def_invariants() {
        assert!(FactorDef::new("g", vec!["a".into()]).is_err());
        assert!(FactorDef::new("g", vec!["a".into(), "a".into()]).is_err());
        assert!(FactorDef::new("g", vec!["a".into(), "b".into()]).is_ok());
    }

    #[test]
    fn table_rejects_out_of_domain_time() {
        let obs = vec![Observation {
            subject_id: "s".into(),
            day: None,
            time: 1440.0,
            levels: vec![],
            response: 1.0,
        }];
        assert!(ObservationTable::new(obs, vec![]).is_err());
        assert!(ObservationTable::new(vec![], vec![]).is_err());
    }
}
