//! Subcommand implementations. Each resolves its settings, computes, then
//! writes every output atomically.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use clap::Args;
use serde_json::json;
use ssanova::data::{
    aggregate_daily, read_csv, summarize, synthesize, write_table, DailyAggregation, SchemaConfig, SyntheticScenario,
    TimeFormat,
};
use ssanova::inference::{
    anova_components, daily_grid, difference_curve, eval_effect, predict as predict_curve, significant_regions,
    summarize_fit,
};
use ssanova::{
    fit as fit_model, Criterion, CurveEstimate, FittedModel, KnotCount, ModelSpec, ObservationTable, ResponseTransform,
    TermKind, TermSpec,
};

use crate::config::Resolver;
use crate::error::CliError;
use crate::output::{curves_csv, levels_csv, regions_json, slug, write_atomic};
use crate::svg::{Plot, Series};
use crate::{Common, CurveArgs};

const DEFAULT_GROUP: &str = "group";

#[derive(Args, Debug)]
pub struct FitArgs {
    #[command(flatten)]
    common: Common,
    /// Activity CSV.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Where to write the model [default: <out-dir>/model.json].
    #[arg(long)]
    model: Option<PathBuf>,
    /// Response transform: log1p or identity [default: log1p].
    #[arg(long)]
    transform: Option<ResponseTransform>,
    /// Smoothing criterion: gcv or gml [default: gcv].
    #[arg(long)]
    criterion: Option<Criterion>,
    /// Knot count: auto or an integer [default: auto].
    #[arg(long)]
    knots: Option<KnotCount>,
    /// Seed for knot sampling [default: 0].
    #[arg(long)]
    seed: Option<u64>,
    /// Factor crossed with time [default: group].
    #[arg(long)]
    group: Option<String>,
    /// Additive nominal factors, comma separated [default: none].
    #[arg(long)]
    factors: Option<String>,
    /// Subject random intercept [default: true].
    #[arg(long)]
    random_intercept: Option<bool>,
    /// Tune per-term smoothing weights after the single-lambda search [default: true].
    #[arg(long)]
    tune_weights: Option<bool>,
    /// Multi-day handling: stack_days or mean_over_days [default: stack_days].
    #[arg(long)]
    aggregation: Option<DailyAggregation>,
}

#[derive(Args, Debug)]
pub struct ComponentsArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    curve: CurveArgs,
    /// Also write curves.svg.
    #[arg(long)]
    plot: bool,
    /// Factor whose level curves are plotted [default: group].
    #[arg(long)]
    group: Option<String>,
}

#[derive(Args, Debug)]
pub struct DiffArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    curve: CurveArgs,
    /// Also write one SVG per contrast.
    #[arg(long)]
    plot: bool,
    /// Factor whose levels are contrasted [default: group].
    #[arg(long)]
    group: Option<String>,
    /// First level; with --vs omitted too, every pair is written.
    #[arg(long)]
    g: Option<String>,
    /// Second level.
    #[arg(long)]
    vs: Option<String>,
}

#[derive(Args, Debug)]
pub struct PredictArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    curve: CurveArgs,
    /// One level per model factor, comma separated, in model order
    /// [default: every combination].
    #[arg(long)]
    at: Option<String>,
}

#[derive(Args, Debug)]
pub struct SummaryArgs {
    #[command(flatten)]
    common: Common,
    /// Activity CSV.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Grouping factor [default: group].
    #[arg(long)]
    group: Option<String>,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[command(flatten)]
    common: Common,
    /// default (four groups) or region (two groups differing on 360-600 min) [default: default].
    #[arg(long)]
    scenario: Option<String>,
    /// Random seed [default: 1].
    #[arg(long)]
    seed: Option<u64>,
    /// Subjects in each group [default: 10].
    #[arg(long)]
    subjects_per_group: Option<usize>,
    /// Equally spaced observation minutes per day [default: 144].
    #[arg(long)]
    minutes_per_day: Option<usize>,
    /// Days observed per subject [default: 1].
    #[arg(long)]
    days: Option<u32>,
    /// Standard deviation of the subject effects [default: 0.5].
    #[arg(long, allow_hyphen_values = true)]
    sigma_b: Option<f64>,
    /// Standard deviation of the noise [default: 1].
    #[arg(long, allow_hyphen_values = true)]
    sigma_eps: Option<f64>,
    /// Constant level of every truth curve [default: 1].
    #[arg(long, allow_hyphen_values = true)]
    intercept: Option<f64>,
    /// Plateau height of the region scenario [default: 1].
    #[arg(long, allow_hyphen_values = true)]
    height: Option<f64>,
    /// Spacing of the grid the truth is sampled on [default: 1].
    #[arg(long)]
    grid_minutes: Option<f64>,
}

fn resolver(common: &Common) -> Result<(Resolver, PathBuf), CliError> {
    let r = Resolver::new(common.config.as_deref())?;
    let out_dir = r
        .path(common.out_dir.clone(), "out_dir")?
        .unwrap_or_else(|| PathBuf::from("out"));
    Ok((r, out_dir))
}

fn schema(r: &Resolver, group: &str) -> Result<SchemaConfig, CliError> {
    let d = SchemaConfig::default();
    let default_factors: Vec<&str> = d.factors.iter().map(String::as_str).collect();
    let mut factors = r.list(None, "factor_columns", &default_factors);
    if !factors.iter().any(|f| f == group) {
        factors.insert(0, group.to_owned());
    }
    Ok(SchemaConfig {
        subject: r.get(None, "subject_column", d.subject)?,
        day: r.get(None, "day_column", d.day)?,
        minute: r.get(None, "minute_column", d.minute)?,
        vm: r.get(None, "vm_column", d.vm)?,
        factors,
        time_format: r.get(None, "time_format", TimeFormat::Minutes)?,
        require_all: r.get(None, "strict_schema", false)?,
    })
}

fn grid(r: &Resolver, args: &CurveArgs) -> Result<(Vec<f64>, f64), CliError> {
    let step = r.get(args.grid_minutes, "grid_minutes", 1.0)?;
    if !(step > 0.0 && step <= 1440.0) {
        return Err(CliError::domain(format!(
            "grid spacing must be in (0, 1440] minutes, got {step}"
        )));
    }
    let level = r.get(args.level, "level", 0.95)?;
    if !(level > 0.0 && level < 1.0) {
        return Err(CliError::domain(format!(
            "confidence level must be in (0, 1), got {level}"
        )));
    }
    Ok((daily_grid(step), level))
}

fn model_path(r: &Resolver, flag: Option<PathBuf>, out_dir: &Path) -> Result<PathBuf, CliError> {
    Ok(r.path(flag, "model")?.unwrap_or_else(|| out_dir.join("model.json")))
}

fn load_model(path: &Path) -> Result<FittedModel, CliError> {
    FittedModel::load(path).map_err(|e| CliError::io(format!("{}: {e}", path.display())))
}

fn read_input(r: &Resolver, flag: Option<PathBuf>, group: &str) -> Result<ObservationTable, CliError> {
    let input = r.require_path(flag, "input")?;
    let (table, report) = read_csv(&input, &schema(r, group)?).map_err(|e| {
        let msg = format!("{}: {e}", input.display());
        if e.is_io() {
            CliError::io(msg)
        } else {
            CliError::domain(msg)
        }
    })?;
    if report.dropped > 0 {
        eprintln!("skipped {} rows with a blank response", report.dropped);
    }
    Ok(table)
}

pub fn fit(args: FitArgs) -> Result<(), CliError> {
    let (r, out_dir) = resolver(&args.common)?;
    let group = r.get(args.group, "group", DEFAULT_GROUP.to_owned())?;
    let table = read_input(&r, args.input, &group)?;
    let table = aggregate_daily(
        &table,
        r.get(args.aggregation, "aggregation", DailyAggregation::StackDays)?,
    );

    let additive = r.list(args.factors, "factors", &[]);
    let random = r.get(args.random_intercept, "random_intercept", true)?;
    let mut spec = if table.factor(&group).is_some() {
        let additive: Vec<&str> = additive.iter().map(String::as_str).collect();
        ModelSpec::time_by_group(&group, &additive, random)
    } else {
        let mut terms = ModelSpec::default().terms;
        terms.extend(additive.iter().map(|f| TermSpec::nominal_main(f)));
        if random {
            terms.push(TermSpec::random_intercept());
        }
        ModelSpec::with_terms(terms)
    };
    spec.response_transform = r.get(args.transform, "transform", ResponseTransform::default())?;
    spec.criterion = r.get(args.criterion, "criterion", Criterion::default())?;
    spec.knot_count = r.get(args.knots, "knots", KnotCount::default())?;
    spec.seed = r.get(args.seed, "seed", 0)?;
    spec.tune_term_weights = r.get(args.tune_weights, "tune_weights", true)?;

    let model = fit_model(&table, &spec)?;
    let path = model_path(&r, args.model, &out_dir)?;
    let mut text = model.to_json()?;
    text.push('\n');
    write_atomic(&path, text.as_bytes())?;

    let report = summarize_fit(&model);
    println!("observations  {}", report.n);
    println!("knots         {}", report.knots);
    println!("R^2           {:.4}", report.r_squared);
    println!("sigma_eps     {:.6}", report.sigma_eps);
    if let Some(sb) = report.sigma_b {
        println!("sigma_b       {sb:.6}");
    }
    println!("tr(A)         {:.3}", report.trace_a);
    println!("{:<13} {:.6e}", report.criterion, report.criterion_value);
    println!("log10 lambda  {:.4}", report.log10_lambda);
    if let Some(lb) = report.log10_lambda_b {
        println!("log10 lambda_b {lb:.4}");
    }
    for w in &report.theta {
        println!("theta {:<32} {:.4e}", w.term, w.theta);
    }
    println!("model written to {}", path.display());
    Ok(())
}

/// The model's factor named `group`, if any, with its index.
fn model_factor(model: &FittedModel, group: &str) -> Option<usize> {
    model.plan.factor_defs.iter().position(|f| f.name() == group)
}

fn series(curve: &CurveEstimate, label: String) -> Series {
    Series {
        label,
        x: curve.grid.clone(),
        y: curve.value.clone(),
        lower: curve.lower.clone(),
        upper: curve.upper.clone(),
    }
}

pub fn components(args: ComponentsArgs) -> Result<(), CliError> {
    let (r, out_dir) = resolver(&args.common)?;
    let model = load_model(&model_path(&r, args.curve.model.clone(), &out_dir)?)?;
    let (grid, level) = grid(&r, &args.curve)?;

    for (name, terms) in anova_components(&model) {
        let curves = eval_effect(&model, &name, &terms, &grid, level)?;
        let factor = terms.iter().find_map(|t| t.kind.factor()).map(str::to_owned);
        let nominal = terms.iter().all(|t| matches!(t.kind, TermKind::NominalMain(_)));
        let bytes = match factor {
            Some(f) if nominal => levels_csv(&curves[0], &f)?,
            Some(f) => {
                let levels = &model.plan.factor_defs[model_factor(&model, &f).expect("planned factor")];
                let labelled: Vec<(Vec<String>, &CurveEstimate)> = levels
                    .levels()
                    .iter()
                    .zip(&curves)
                    .map(|(l, c)| (vec![l.clone()], c))
                    .collect();
                curves_csv(&labelled, &[f])?
            }
            None => curves_csv(&[(Vec::new(), &curves[0])], &[])?,
        };
        let path = out_dir.join(format!("component_{}.csv", slug(&name)));
        write_atomic(&path, &bytes)?;
        println!("{}", path.display());
    }

    if r.get(args.plot.then_some(true), "plot", false)? {
        let group = r.get(args.group, "group", DEFAULT_GROUP.to_owned())?;
        let f = model_factor(&model, &group);
        // the group curves: every function term not involving another factor
        let terms: Vec<TermSpec> = model
            .plan
            .terms
            .iter()
            .filter(|t| !t.is_random() && t.factor.is_none_or(|(i, _)| Some(i) == f))
            .map(|t| t.spec.clone())
            .collect();
        let curves = eval_effect(&model, "eta", &terms, &grid, level)?;
        let labels = match f {
            Some(i) => model.plan.factor_defs[i].levels().to_vec(),
            None => vec!["all".to_owned()],
        };
        let plot = Plot {
            title: format!("Fitted daily curves, {:.0}% bands", level * 100.0),
            y_label: format!("{:?}(response)", model.spec().response_transform).to_lowercase(),
            series: curves.iter().zip(labels).map(|(c, l)| series(c, l)).collect(),
            zero_line: false,
        };
        let path = out_dir.join("curves.svg");
        write_atomic(&path, plot.render().as_bytes())?;
        println!("{}", path.display());
    }
    Ok(())
}

struct Contrast {
    g: String,
    h: String,
    curve: CurveEstimate,
}

pub fn diff(args: DiffArgs) -> Result<(), CliError> {
    let (r, out_dir) = resolver(&args.common)?;
    let model = load_model(&model_path(&r, args.curve.model.clone(), &out_dir)?)?;
    let (grid, level) = grid(&r, &args.curve)?;
    let group = r.get(args.group, "group", DEFAULT_GROUP.to_owned())?;
    let f = model_factor(&model, &group).ok_or_else(|| CliError::domain(format!("model has no factor {group}")))?;

    let pairs: Vec<(String, String)> = match (args.g, args.vs) {
        (Some(g), Some(h)) => vec![(g, h)],
        (None, None) => {
            let levels = model.plan.factor_defs[f].levels();
            (0..levels.len())
                .flat_map(|i| (i + 1..levels.len()).map(move |j| (levels[i].clone(), levels[j].clone())))
                .collect()
        }
        _ => return Err(CliError::domain("give both --g and --vs, or neither for every pair")),
    };

    // contrasts are independent reads of one model
    let results: Vec<Result<Contrast, CliError>> = std::thread::scope(|s| {
        let handles: Vec<_> = pairs
            .iter()
            .map(|(g, h)| {
                let (model, grid, group) = (&model, &grid, &group);
                s.spawn(move || {
                    let curve = difference_curve(model, group, g, h, grid, level)?;
                    Ok(Contrast {
                        g: g.clone(),
                        h: h.clone(),
                        curve,
                    })
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("contrast thread panicked"))
            .collect()
    });

    let plot = r.get(args.plot.then_some(true), "plot", false)?;
    for result in results {
        let c = result?;
        let stem = format!("{}_vs_{}", slug(&c.g), slug(&c.h));
        let regions = significant_regions(&c.curve);
        write_atomic(
            &out_dir.join(format!("diff_{stem}.csv")),
            &curves_csv(&[(Vec::new(), &c.curve)], &[])?,
        )?;
        write_atomic(&out_dir.join(format!("regions_{stem}.json")), &regions_json(&regions)?)?;
        if plot {
            let svg = Plot {
                title: format!("{} minus {}, {:.0}% bands", c.g, c.h, level * 100.0),
                y_label: "difference".into(),
                series: vec![series(&c.curve, format!("{} - {}", c.g, c.h))],
                zero_line: true,
            };
            write_atomic(&out_dir.join(format!("diff_{stem}.svg")), svg.render().as_bytes())?;
        }
        let spans: Vec<String> = regions
            .intervals
            .iter()
            .map(|iv| format!("{}-{}", iv.start_minute, iv.end_minute))
            .collect();
        println!("{} vs {}: {} region(s) {}", c.g, c.h, spans.len(), spans.join(" "));
    }
    Ok(())
}

pub fn predict(args: PredictArgs) -> Result<(), CliError> {
    let (r, out_dir) = resolver(&args.common)?;
    let model = load_model(&model_path(&r, args.curve.model.clone(), &out_dir)?)?;
    let (grid, level) = grid(&r, &args.curve)?;
    let defs = &model.plan.factor_defs;

    let combos: Vec<Vec<String>> = match args.at {
        Some(at) => vec![at
            .split(',')
            .map(|s| s.trim().to_owned())
            .filter(|s| !s.is_empty())
            .collect()],
        None => defs.iter().fold(vec![Vec::new()], |acc, def| {
            acc.iter()
                .flat_map(|prefix| {
                    def.levels().iter().map(move |l| {
                        let mut next = prefix.clone();
                        next.push(l.clone());
                        next
                    })
                })
                .collect()
        }),
    };
    let curves = combos
        .iter()
        .map(|levels| {
            let refs: Vec<&str> = levels.iter().map(String::as_str).collect();
            predict_curve(&model, &grid, &refs, level)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let labelled: Vec<(Vec<String>, &CurveEstimate)> = combos.into_iter().zip(&curves).collect();
    let columns: Vec<String> = defs.iter().map(|d| d.name().to_owned()).collect();
    let path = out_dir.join("predict.csv");
    write_atomic(&path, &curves_csv(&labelled, &columns)?)?;
    println!("{}", path.display());
    Ok(())
}

pub fn summary(args: SummaryArgs) -> Result<(), CliError> {
    let (r, out_dir) = resolver(&args.common)?;
    let group = r.get(args.group, "group", DEFAULT_GROUP.to_owned())?;
    let table = read_input(&r, args.input, &group)?;
    let summary = summarize(&table, &group)?;
    let csv = summary.to_csv_string()?;
    let mut json = serde_json::to_string_pretty(&summary)?;
    json.push('\n');
    write_atomic(&out_dir.join("summary.csv"), csv.as_bytes())?;
    write_atomic(&out_dir.join("summary.json"), json.as_bytes())?;
    print!("{csv}");
    Ok(())
}

pub fn simulate(args: SimulateArgs) -> Result<(), CliError> {
    let (r, out_dir) = resolver(&args.common)?;
    let name = r.get(args.scenario, "scenario", "default".to_owned())?;
    let mut scenario = match name.as_str() {
        "default" => SyntheticScenario::default(),
        "region" => SyntheticScenario::region(r.get(args.height, "height", 1.0)?),
        other => {
            return Err(CliError::domain(format!(
                "unknown scenario {other}; expected default or region"
            )))
        }
    };
    scenario.seed = r.get(args.seed, "seed", scenario.seed)?;
    scenario.subjects_per_group = r.get(
        args.subjects_per_group,
        "subjects_per_group",
        scenario.subjects_per_group,
    )?;
    scenario.minutes_per_day = r.get(args.minutes_per_day, "minutes_per_day", scenario.minutes_per_day)?;
    scenario.days = r.get(args.days, "days", scenario.days)?;
    scenario.sigma_b = r.get(args.sigma_b, "sigma_b", scenario.sigma_b)?;
    scenario.sigma_eps = r.get(args.sigma_eps, "sigma_eps", scenario.sigma_eps)?;
    scenario.intercept = r.get(args.intercept, "intercept", scenario.intercept)?;
    let step = r.get(args.grid_minutes, "grid_minutes", 1.0)?;
    if !(step > 0.0 && step <= 1440.0) {
        return Err(CliError::domain(format!(
            "grid spacing must be in (0, 1440] minutes, got {step}"
        )));
    }

    let synth = synthesize(&scenario)?;
    let mut table_bytes = Vec::new();
    write_table(&mut table_bytes, &synth.table, &schema(&r, &scenario.group_factor)?)?;

    // the truth grid also covers every observed minute so rows join exactly
    let mut minutes: BTreeSet<u64> = daily_grid(step).into_iter().map(f64::to_bits).collect();
    minutes.extend(synth.table.observations().iter().map(|o| o.time.to_bits()));
    let mut grid: Vec<f64> = minutes.into_iter().map(f64::from_bits).collect();
    grid.sort_by(f64::total_cmp);
    let effects: Vec<_> = synth
        .subject_effects
        .iter()
        .map(|(s, b)| json!({ "subject": s, "effect": b }))
        .collect();
    let truth = json!({
        "scenario": scenario,
        "truth": synth.truth.samples(&grid),
        "subject_effects": effects,
    });
    let mut truth_text = serde_json::to_string_pretty(&truth)?;
    truth_text.push('\n');

    let csv_path = out_dir.join("simulated.csv");
    write_atomic(&csv_path, &table_bytes)?;
    write_atomic(&out_dir.join("truth.json"), truth_text.as_bytes())?;
    println!("{} rows written to {}", synth.table.n(), csv_path.display());
    Ok(())
}
