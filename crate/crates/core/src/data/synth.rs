//! Synthetic cohorts with a known truth.
//!
//! The true mean is `η(t, g) = intercept + base(t) + curve_g(t)`, built from
//! closed-form shapes whose integrals over the day are known exactly. The
//! ANOVA components reported by [`Truth`] are therefore exact, not numerical.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Bernoulli, Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{FactorDef, Observation, ObservationTable, DAY_MINUTES};

/// Closed-form daily shapes; all arguments are in minutes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum Shape {
    Constant {
        value: f64,
    },
    /// `height · (1 + cos(π (t − center) / half_width)) / 2` inside the support.
    RaisedCosine {
        center: f64,
        half_width: f64,
        height: f64,
    },
    /// Zero outside `(start, end)`, `height` in the middle, joined by
    /// smoothstep ramps of length `ramp`.
    Plateau {
        start: f64,
        end: f64,
        ramp: f64,
        height: f64,
    },
    /// `amplitude · sin(2π cycles t / 1440 + phase)`.
    Sine {
        amplitude: f64,
        cycles: u32,
        phase: f64,
    },
}

fn smoothstep(x: f64) -> f64 {
    x * x * (3.0 - 2.0 * x)
}

impl Shape {
    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            Shape::Constant { value } => value,
            Shape::RaisedCosine {
                center,
                half_width,
                height,
            } => {
                let u = (t - center) / half_width;
                if u.abs() < 1.0 {
                    height * (1.0 + (std::f64::consts::PI * u).cos()) / 2.0
                } else {
                    0.0
                }
            }
            Shape::Plateau {
                start,
                end,
                ramp,
                height,
            } => {
                if t <= start || t >= end {
                    0.0
                } else if t < start + ramp {
                    height * smoothstep((t - start) / ramp)
                } else if t > end - ramp {
                    height * smoothstep((end - t) / ramp)
                } else {
                    height
                }
            }
            Shape::Sine {
                amplitude,
                cycles,
                phase,
            } => amplitude * (std::f64::consts::TAU * f64::from(cycles) * t / DAY_MINUTES + phase).sin(),
        }
    }

    /// Exact integral over `[0, 1440]`.
    pub fn integral(&self) -> f64 {
        match *self {
            Shape::Constant { value } => value * DAY_MINUTES,
            Shape::RaisedCosine { half_width, height, .. } => height * half_width,
            Shape::Plateau {
                start,
                end,
                ramp,
                height,
            } => height * (end - start - ramp),
            Shape::Sine {
                amplitude,
                cycles,
                phase,
            } => {
                if cycles == 0 {
                    amplitude * phase.sin() * DAY_MINUTES
                } else {
                    0.0
                }
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Shape::Constant { value } => value.is_finite(),
            Shape::RaisedCosine {
                center,
                half_width,
                height,
            } => {
                half_width > 0.0
                    && center - half_width >= 0.0
                    && center + half_width <= DAY_MINUTES
                    && height.is_finite()
            }
            Shape::Plateau {
                start,
                end,
                ramp,
                height,
            } => start >= 0.0 && end <= DAY_MINUTES && ramp > 0.0 && 2.0 * ramp <= end - start && height.is_finite(),
            Shape::Sine { amplitude, phase, .. } => amplitude.is_finite() && phase.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Domain(format!("invalid shape {self:?}")))
        }
    }
}

/// Sum of shapes.
pub type Curve = Vec<Shape>;

fn eval_curve(curve: &[Shape], t: f64) -> f64 {
    curve.iter().map(|s| s.eval(t)).sum()
}

fn mean_curve(curve: &[Shape]) -> f64 {
    curve.iter().map(Shape::integral).sum::<f64>() / DAY_MINUTES
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupDef {
    pub label: String,
    pub curve: Curve,
}

/// A per-subject two-level factor with an additive effect: `+effect/2` at the
/// second level, `−effect/2` at the first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryFactor {
    pub name: String,
    pub levels: [String; 2],
    pub effect: f64,
    /// Probability that a subject is at the second level.
    pub share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticScenario {
    pub group_factor: String,
    pub intercept: f64,
    pub base: Curve,
    /// With a single group no factor column is emitted.
    pub groups: Vec<GroupDef>,
    pub binary_factors: Vec<BinaryFactor>,
    pub subjects_per_group: usize,
    /// Equally spaced observation minutes per day: `i · 1440 / count`.
    pub minutes_per_day: usize,
    pub days: u32,
    pub sigma_b: f64,
    pub sigma_eps: f64,
    pub seed: u64,
}

/// Inactive night, rising morning, peak at noon.
fn daily_bump() -> Curve {
    vec![Shape::RaisedCosine {
        center: 720.0,
        half_width: 660.0,
        height: 2.0,
    }]
}

impl Default for SyntheticScenario {
    /// Four fall-risk groups, 10 subjects each, 144 minutes per subject.
    fn default() -> Self {
        let group = |label: &str, curve: Curve| GroupDef {
            label: label.into(),
            curve,
        };
        Self {
            group_factor: "group".into(),
            intercept: 1.0,
            base: daily_bump(),
            groups: vec![
                group(
                    "rational",
                    vec![
                        Shape::Constant { value: 0.4 },
                        Shape::RaisedCosine {
                            center: 720.0,
                            half_width: 300.0,
                            height: 0.3,
                        },
                    ],
                ),
                group("irrational", vec![Shape::Constant { value: 0.1 }]),
                group(
                    "congruent",
                    vec![
                        Shape::Constant { value: -0.4 },
                        Shape::RaisedCosine {
                            center: 780.0,
                            half_width: 240.0,
                            height: -0.3,
                        },
                    ],
                ),
                group(
                    "incongruent",
                    vec![Shape::Sine {
                        amplitude: 0.2,
                        cycles: 1,
                        phase: 0.0,
                    }],
                ),
            ],
            binary_factors: Vec::new(),
            subjects_per_group: 10,
            minutes_per_day: 144,
            days: 1,
            sigma_b: 0.5,
            sigma_eps: 1.0,
            seed: 1,
        }
    }
}

impl SyntheticScenario {
    /// Two groups whose difference is a plateau of the given height that is
    /// nonzero exactly on minutes `(360, 600)`.
    pub fn region(height: f64) -> Self {
        Self {
            groups: vec![
                GroupDef {
                    label: "a".into(),
                    curve: Vec::new(),
                },
                GroupDef {
                    label: "b".into(),
                    curve: vec![Shape::Plateau {
                        start: 360.0,
                        end: 600.0,
                        ramp: 60.0,
                        height,
                    }],
                },
            ],
            ..Self::default()
        }
    }

    pub fn n(&self) -> usize {
        self.groups.len() * self.subjects_per_group * self.minutes_per_day * self.days as usize
    }

    fn validate(&self) -> Result<()> {
        if !(self.sigma_b.is_finite() && self.sigma_b >= 0.0 && self.sigma_eps.is_finite() && self.sigma_eps >= 0.0) {
            return Err(Error::Domain(format!(
                "standard deviations must be finite and nonnegative (sigma_b = {}, sigma_eps = {})",
                self.sigma_b, self.sigma_eps
            )));
        }
        if self.groups.is_empty() || self.subjects_per_group == 0 || self.minutes_per_day == 0 || self.days == 0 {
            return Err(Error::Domain(
                "scenario must have groups, subjects, minutes and days".into(),
            ));
        }
        for b in &self.binary_factors {
            if !(0.0..=1.0).contains(&b.share) || !b.effect.is_finite() || b.levels[0] == b.levels[1] {
                return Err(Error::Domain(format!("invalid binary factor {}", b.name)));
            }
        }
        self.base
            .iter()
            .chain(self.groups.iter().flat_map(|g| &g.curve))
            .try_for_each(Shape::validate)
    }
}

/// Exact ANOVA decomposition of a scenario's mean function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    scenario: SyntheticScenario,
    group_means: Vec<f64>,
    base_mean: f64,
}

impl Truth {
    fn new(scenario: SyntheticScenario) -> Self {
        let group_means = scenario.groups.iter().map(|g| mean_curve(&g.curve)).collect();
        let base_mean = mean_curve(&scenario.base);
        Self {
            scenario,
            group_means,
            base_mean,
        }
    }

    pub fn groups(&self) -> Vec<String> {
        self.scenario.groups.iter().map(|g| g.label.clone()).collect()
    }

    pub fn group_index(&self, label: &str) -> Option<usize> {
        self.scenario.groups.iter().position(|g| g.label == label)
    }

    fn avg_group_mean(&self) -> f64 {
        self.group_means.iter().sum::<f64>() / self.group_means.len() as f64
    }

    fn avg_group_curve(&self, t: f64) -> f64 {
        let k = self.scenario.groups.len() as f64;
        self.scenario
            .groups
            .iter()
            .map(|g| eval_curve(&g.curve, t))
            .sum::<f64>()
            / k
    }

    /// `η(t, g)` excluding binary-factor effects.
    pub fn eta(&self, minute: f64, g: usize) -> f64 {
        self.scenario.intercept
            + eval_curve(&self.scenario.base, minute)
            + eval_curve(&self.scenario.groups[g].curve, minute)
    }

    pub fn eta0(&self) -> f64 {
        self.scenario.intercept + self.base_mean + self.avg_group_mean()
    }

    pub fn eta1(&self, minute: f64) -> f64 {
        eval_curve(&self.scenario.base, minute) - self.base_mean + self.avg_group_curve(minute) - self.avg_group_mean()
    }

    pub fn eta2(&self, g: usize) -> f64 {
        self.group_means[g] - self.avg_group_mean()
    }

    pub fn eta12(&self, minute: f64, g: usize) -> f64 {
        eval_curve(&self.scenario.groups[g].curve, minute) - self.group_means[g] - self.avg_group_curve(minute)
            + self.avg_group_mean()
    }

    /// `δ(t | g, h) = η(t, g) − η(t, h)`.
    pub fn delta(&self, minute: f64, g: usize, h: usize) -> f64 {
        eval_curve(&self.scenario.groups[g].curve, minute) - eval_curve(&self.scenario.groups[h].curve, minute)
    }

    /// Effect of level `level` of binary factor `f`.
    pub fn binary_effect(&self, f: usize, level: usize) -> f64 {
        let e = self.scenario.binary_factors[f].effect / 2.0;
        if level == 1 {
            e
        } else {
            -e
        }
    }

    pub fn samples(&self, grid: &[f64]) -> TruthSamples {
        let k = self.scenario.groups.len();
        TruthSamples {
            groups: self.groups(),
            grid: grid.to_vec(),
            eta0: self.eta0(),
            eta1: grid.iter().map(|&t| self.eta1(t)).collect(),
            eta2: (0..k).map(|g| self.eta2(g)).collect(),
            eta12: (0..k)
                .map(|g| grid.iter().map(|&t| self.eta12(t, g)).collect())
                .collect(),
            eta: (0..k).map(|g| grid.iter().map(|&t| self.eta(t, g)).collect()).collect(),
        }
    }
}

/// Truth evaluated on a grid, for serialization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthSamples {
    pub groups: Vec<String>,
    pub grid: Vec<f64>,
    pub eta0: f64,
    pub eta1: Vec<f64>,
    pub eta2: Vec<f64>,
    /// Indexed `[group][grid point]`.
    pub eta12: Vec<Vec<f64>>,
    pub eta: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct Synthetic {
    pub table: ObservationTable,
    pub truth: Truth,
    /// Realized subject intercepts, in table subject order.
    pub subject_effects: Vec<(String, f64)>,
}

/// Draw a cohort: `y = η(t, g) + binary effects + b_s + ε`, rows ordered by
/// subject, day and minute.
pub fn synthesize(scenario: &SyntheticScenario) -> Result<Synthetic> {
    scenario.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    let b_dist = Normal::new(0.0, scenario.sigma_b).map_err(|e| Error::Domain(e.to_string()))?;
    let e_dist = Normal::new(0.0, scenario.sigma_eps).map_err(|e| Error::Domain(e.to_string()))?;
    let truth = Truth::new(scenario.clone());
    let with_group = scenario.groups.len() > 1;
    let step = DAY_MINUTES / scenario.minutes_per_day as f64;

    let mut rows = Vec::with_capacity(scenario.n());
    let mut effects = Vec::new();
    for (g, group) in scenario.groups.iter().enumerate() {
        for s in 0..scenario.subjects_per_group {
            let subject = format!("{}-{:03}", group.label, s + 1);
            let b = b_dist.sample(&mut rng);
            let mut levels = Vec::new();
            if with_group {
                levels.push(group.label.clone());
            }
            let mut offset = 0.0;
            for (f, bf) in scenario.binary_factors.iter().enumerate() {
                let hit = Bernoulli::new(bf.share).expect("validated share").sample(&mut rng);
                let level = usize::from(hit);
                levels.push(bf.levels[level].clone());
                offset += truth.binary_effect(f, level);
            }
            effects.push((subject.clone(), b));
            for day in 1..=scenario.days {
                for i in 0..scenario.minutes_per_day {
                    let minute = i as f64 * step;
                    rows.push(Observation {
                        subject_id: subject.clone(),
                        day: (scenario.days > 1).then_some(day),
                        time: minute,
                        levels: levels.clone(),
                        response: truth.eta(minute, g) + offset + b + e_dist.sample(&mut rng),
                    });
                }
            }
        }
    }

    // Sorted levels, as ingestion produces them.
    let sorted = |mut v: Vec<String>| {
        v.sort();
        v
    };
    let mut defs = Vec::new();
    if with_group {
        defs.push(FactorDef::new(scenario.group_factor.clone(), sorted(truth.groups()))?);
    }
    for bf in &scenario.binary_factors {
        defs.push(FactorDef::new(bf.name.clone(), sorted(bf.levels.to_vec()))?);
    }
    effects.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(Synthetic {
        table: ObservationTable::new(rows, defs)?,
        truth,
        subject_effects: effects,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Composite Simpson on `[0, 1440]`, independent of the closed forms.
    fn simpson(f: impl Fn(f64) -> f64) -> f64 {
        let n = 1 << 20;
        let h = DAY_MINUTES / n as f64;
        let mut s = f(0.0) + f(DAY_MINUTES);
        for i in 1..n {
            s += f(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    }

    #[test]
    fn shape_integrals_match_quadrature() {
        let shapes = [
            Shape::Constant { value: 1.7 },
            Shape::RaisedCosine {
                center: 700.0,
                half_width: 333.0,
                height: 1.3,
            },
            Shape::Plateau {
                start: 360.0,
                end: 600.0,
                ramp: 60.0,
                height: 2.0,
            },
            Shape::Sine {
                amplitude: 0.5,
                cycles: 3,
                phase: 0.4,
            },
        ];
        for s in &shapes {
            let q = simpson(|t| s.eval(t));
            assert!((q - s.integral()).abs() < 1e-6, "{s:?}: {q} vs {}", s.integral());
        }
    }

    #[test]
    fn plateau_support_is_open_interval() {
        let s = Shape::Plateau {
            start: 360.0,
            end: 600.0,
            ramp: 60.0,
            height: 1.0,
        };
        assert_eq!(s.eval(360.0), 0.0);
        assert_eq!(s.eval(600.0), 0.0);
        assert!(s.eval(360.5) > 0.0 && s.eval(599.5) > 0.0);
        assert_eq!(s.eval(480.0), 1.0);
    }

    #[test]
    fn side_conditions_hold() {
        let syn = synthesize(&SyntheticScenario::default()).unwrap();
        let t = &syn.truth;
        let k = t.groups().len();
        assert!((simpson(|m| t.eta1(m)) / DAY_MINUTES).abs() < 1e-8);
        assert!((0..k).map(|g| t.eta2(g)).sum::<f64>().abs() < 1e-8);
        for g in 0..k {
            assert!((simpson(|m| t.eta12(m, g)) / DAY_MINUTES).abs() < 1e-8);
        }
        for m in [0.0, 123.0, 720.0, 1439.0] {
            assert!((0..k).map(|g| t.eta12(m, g)).sum::<f64>().abs() < 1e-8);
            for g in 0..k {
                let sum = t.eta0() + t.eta1(m) + t.eta2(g) + t.eta12(m, g);
                assert!((sum - t.eta(m, g)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn noiseless_equals_truth() {
        let sc = SyntheticScenario {
            sigma_b: 0.0,
            sigma_eps: 0.0,
            ..SyntheticScenario::default()
        };
        let syn = synthesize(&sc).unwrap();
        assert_eq!(syn.table.n(), 4 * 10 * 144);
        for o in syn.table.observations() {
            let g = syn.truth.group_index(&o.levels[0]).unwrap();
            assert_eq!(o.response, syn.truth.eta(o.time, g));
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let a = synthesize(&SyntheticScenario::default()).unwrap();
        let b = synthesize(&SyntheticScenario::default()).unwrap();
        assert_eq!(a.table, b.table);
        let c = synthesize(&SyntheticScenario {
            seed: 2,
            ..SyntheticScenario::default()
        })
        .unwrap();
        assert_ne!(a.table, c.table);
    }

    #[test]
    fn rejects_negative_sigma() {
        let sc = SyntheticScenario {
            sigma_b: -1.0,
            ..SyntheticScenario::default()
        };
        assert!(synthesize(&sc).is_err());
    }

    #[test]
    fn subject_variance_by_moments() {
        // 200 subjects; var(subject means) - σ²_ε / m estimates σ²_b.
        let sc = SyntheticScenario {
            groups: vec![GroupDef {
                label: "all".into(),
                curve: Vec::new(),
            }],
            subjects_per_group: 200,
            minutes_per_day: 48,
            sigma_b: 0.5,
            sigma_eps: 1.0,
            seed: 11,
            ..SyntheticScenario::default()
        };
        let syn = synthesize(&sc).unwrap();
        let m = 48usize;
        let means: Vec<f64> = syn
            .table
            .observations()
            .chunks(m)
            .map(|rows| rows.iter().map(|o| o.response - syn.truth.eta(o.time, 0)).sum::<f64>() / m as f64)
            .collect();
        let mu = means.iter().sum::<f64>() / means.len() as f64;
        let var = means.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / (means.len() - 1) as f64;
        let est = var - 1.0 / m as f64;
        assert!((est - 0.25).abs() <= 0.25 * 0.25, "estimate {est}");
    }
}
