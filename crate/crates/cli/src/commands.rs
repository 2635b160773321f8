use std::fs::File;
use std::io::{self, Write};
use std::path::Path;

use serde::Serialize;
use serde_json::{json, Value};
use stopwalk_core::estimation::{estimate_closed_form, estimate_from_table, EstimateReport};
use stopwalk_core::formats::{DesignSpec, LoadedModel, ModelSpec, RegionSpec, TableSpec};
use stopwalk_core::paths::PointKind;
use stopwalk_core::region_analysis::ClosednessReport;
use stopwalk_core::scalar::{format_rational, rational_from_ints, rational_to_f64};
use stopwalk_core::simulation::{run_study, EstimatorSource, Family, PathOutcome, Study, StudyConfig};
use stopwalk_core::trial::stop_states;
use stopwalk_core::{
    count_paths, count_paths_with, is_closed, is_simple, ml_estimate, trial_region,
    trial_unbiased_estimate, trial_verify as verify_trial, unbiased_estimate, validate_region,
    verify_estimator, ClosedForm, ClosureVerdict, Decision, Error, LatticePoint, Region, Rational,
    Retention,
};

use crate::render::{point, Render};
use crate::Failure;

/// Decimal places for simulation statistics when `--digits` is absent.
const SUMMARY_DIGITS: u32 = 6;

fn emit(value: &Value) -> Result<(), Failure> {
    let mut out = io::stdout().lock();
    writeln!(out, "{value}")?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    let mut file = File::create(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
    serde_json::to_writer_pretty(&mut file, value).map_err(|e| Failure::Io(e.to_string()))?;
    writeln!(file)?;
    Ok(())
}

fn read_json(path: &Path) -> Result<Value, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    Ok(serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?)
}

fn load_table(path: &Path) -> Result<stopwalk_core::PathCountTable, Failure> {
    let spec: TableSpec = serde_json::from_value(read_json(path)?)
        .map_err(|e| Error::Parse(format!("table: {e}")))?;
    Ok(spec.build()?)
}

pub fn count(
    region_path: &Path,
    horizon: usize,
    x: &LatticePoint,
    emit_path: Option<&Path>,
    digits: Option<u32>,
) -> Result<(), Failure> {
    let region = RegionSpec::load(region_path)?;
    if x.dim() != region.dim() {
        return Err(Error::DimensionMismatch { expected: region.dim(), found: x.dim() }.into());
    }
    if x.order() > horizon {
        return Err(Error::UnknownPoint(x.clone()).into());
    }
    let table = count_paths(&region, horizon)?;
    if let Some(path) = emit_path {
        write_json(path, &TableSpec::from_table(&table))?;
    }
    let counts = table
        .get(x)
        .ok_or_else(|| Error::InvalidArgument(format!("{x} is neither accessible nor a boundary point")))?;
    let render = Render::choose(digits, true);
    let (kind, estimate) = match counts.kind {
        PointKind::Boundary => ("boundary", render.rationals(&unbiased_estimate(&table, x)?)),
        PointKind::Accessible => ("accessible", Value::Null),
    };
    emit(&json!({
        "point": point(x),
        "kind": kind,
        "k": counts.total.to_string(),
        "k_star": counts.from_unit.iter().map(ToString::to_string).collect::<Vec<_>>(),
        "estimate": estimate,
    }))
}

pub struct EstimateInput<'a> {
    pub region: Option<&'a Path>,
    pub horizon: Option<usize>,
    pub table: Option<&'a Path>,
    pub closed_form: Option<ClosedForm>,
    pub b: Option<u32>,
}

fn closed_form_threshold(form: ClosedForm, region: Option<&Region>, b: Option<u32>) -> Result<u32, Failure> {
    let from_region = match region {
        Some(r) => Some(form.matches(r).ok_or_else(|| {
            Failure::Usage(format!(
                "region is not the {} walk (coefficients {:?})",
                form.name(),
                form.coeffs()
            ))
        })?),
        None => None,
    };
    match (b, from_region) {
        (Some(b), Some(rb)) if b != rb => {
            Err(Failure::Usage(format!("--b {b} disagrees with the region threshold {rb}")))
        }
        (Some(b), _) | (None, Some(b)) => Ok(b),
        (None, None) => Err(Failure::Usage("--closed-form needs --b or a matching --region".into())),
    }
}

pub fn estimate(input: EstimateInput<'_>, y: &LatticePoint, digits: Option<u32>) -> Result<(), Failure> {
    let region = input.region.map(RegionSpec::load).transpose()?;
    let report: EstimateReport = if let Some(form) = input.closed_form {
        let b = closed_form_threshold(form, region.as_ref(), input.b)?;
        estimate_closed_form(form, y, b)?
    } else if let Some(path) = input.table {
        estimate_from_table(&load_table(path)?, y)?
    } else {
        let region = region.ok_or_else(|| Failure::Usage("one of --region, --table or --closed-form is required".into()))?;
        let horizon = input.horizon.unwrap_or(y.order());
        if y.order() > horizon {
            return Err(Error::UnknownPoint(y.clone()).into());
        }
        let table = count_paths_with(&region, horizon, Retention::BoundaryAndFrontier)?;
        estimate_from_table(&table, y)?
    };
    let render = Render::choose(digits, true);
    emit(&json!({
        "unbiased": render.rationals(&report.unbiased),
        "ml": render.rationals(&report.ml),
    }))
}

pub fn verify_simple(region_path: &Path, horizon: usize, certificates: bool, digits: Option<u32>) -> Result<(), Failure> {
    let region = RegionSpec::load(region_path)?;
    let report = is_simple(&region, horizon)?;
    let render = Render::choose(digits, true);
    let verified = report.certificates_verified(&region);
    let mut body = json!({
        "verdict": if report.passed() { "PASS" } else { "FAIL" },
        "horizon": report.horizon,
        "horizon_limited": report.horizon_limited,
        "orders_checked": report.orders_checked,
        "violations": report.violations.iter().map(|v| json!({
            "order": v.order,
            "point": point(&v.point),
            "witness": v.witness.iter().map(|(g, w)| json!({
                "point": point(g),
                "weight": render.rational(w),
            })).collect::<Vec<_>>(),
        })).collect::<Vec<_>>(),
        "separations": report.separations.len(),
        "certificates_verified": verified,
    });
    if certificates {
        body["certificates"] = report
            .separations
            .iter()
            .map(|s| {
                json!({
                    "order": s.order,
                    "point": point(&s.point),
                    "coeffs": render.rationals(&s.certificate.coeffs),
                    "offset": render.rational(&s.certificate.offset),
                    "margin": render.rational(&s.certificate.margin),
                })
            })
            .collect();
    }
    emit(&body)?;
    if let Some(first) = report.violations.first() {
        return Err(Failure::Check(format!("region is not simple: {} lies in the hull of order {}", first.point, first.order)));
    }
    if !verified {
        return Err(Failure::Check("a separation certificate failed to verify".into()));
    }
    Ok(())
}

fn closedness_json<P>(report: &ClosednessReport<P>, threshold: &str, by_order: bool, fmt: impl Fn(&P) -> String) -> Value {
    let verdict = match report.verdict {
        ClosureVerdict::ClosedExact => "closed_exact",
        ClosureVerdict::ClosedNumerically { .. } => "closed_numerically",
        ClosureVerdict::Inconclusive { .. } => "inconclusive",
    };
    let mut body = json!({
        "verdict": verdict,
        "horizon": report.horizon,
        "threshold": threshold,
        "absorbed_mass": fmt(&report.absorbed_mass),
        "residual_mass": fmt(&report.residual_mass),
    });
    if by_order {
        body["absorbed_by_order"] = report.absorbed_by_order.iter().map(|m| Value::String(fmt(m))).collect();
    }
    body
}

pub fn verify_closed(
    region_path: &Path,
    model_path: &Path,
    horizon: usize,
    threshold: &Rational,
    by_order: bool,
    digits: Option<u32>,
) -> Result<(), Failure> {
    let region = RegionSpec::load(region_path)?;
    let model = ModelSpec::load(model_path)?;
    let limit = rational_to_f64(threshold);
    let (body, verdict) = match &model {
        LoadedModel::Exact(m) => {
            let render = Render::choose(digits, true);
            let report = is_closed(&region, m, horizon, limit)?;
            (closedness_json(&report, &render.rational(threshold), by_order, |v| render.rational(v)), report.verdict)
        }
        LoadedModel::Float(m) => {
            let render = Render::choose(digits, false);
            let report = is_closed(&region, m, horizon, limit)?;
            (closedness_json(&report, &render.rational(threshold), by_order, |v| render.float(*v)), report.verdict)
        }
    };
    emit(&body)?;
    match verdict {
        ClosureVerdict::Inconclusive { .. } => Err(Failure::Check(format!(
            "residual mass at horizon {horizon} exceeds the threshold"
        ))),
        _ => Ok(()),
    }
}

pub fn verify_unbiased(
    region_path: &Path,
    horizon: usize,
    grid: &[Vec<Rational>],
    use_ml: bool,
    digits: Option<u32>,
) -> Result<(), Failure> {
    let region = RegionSpec::load(region_path)?;
    let report = verify_estimator(&region, horizon, grid, |table, y| {
        if use_ml {
            ml_estimate(y)
        } else {
            unbiased_estimate(table, y)
        }
    })?;
    let render = Render::choose(digits, true);
    emit(&json!({
        "estimator": if use_ml { "ml" } else { "unbiased" },
        "horizon": report.horizon,
        "boundary_points": report.boundary_points,
        "holds": report.all_hold(),
        "failing_points": report.failing_points().iter().map(|p| render.rationals(p)).collect::<Vec<_>>(),
        "checks": report.checks.iter().map(|c| json!({
            "p": render.rationals(&c.p),
            "category": c.category + 1,
            "expected": render.rational(&c.expected),
            "actual": render.rational(&c.actual),
            "holds": c.holds(),
        })).collect::<Vec<_>>(),
    }))?;
    if report.all_hold() {
        Ok(())
    } else {
        Err(Failure::Check(format!("expectation differs from p at {} grid points", report.failing_points().len())))
    }
}

pub enum Source {
    Auto,
    Closed(ClosedForm),
    Table,
}

pub struct SimulateInput<'a> {
    pub model: &'a Path,
    pub region: &'a Path,
    pub paths: usize,
    pub seed: u64,
    pub ml: bool,
    pub unbiased: bool,
    pub out: Option<&'a Path>,
    pub per_path: Option<&'a Path>,
    pub source: Source,
    pub horizon: Option<usize>,
    pub max_steps: usize,
    pub failure_limit: f64,
    pub threads: Option<usize>,
}

fn csv_writer(path: Option<&Path>) -> Result<csv::Writer<Box<dyn Write>>, Failure> {
    let sink: Box<dyn Write> = match path {
        Some(p) => Box::new(File::create(p).map_err(|e| Failure::Io(format!("{}: {e}", p.display())))?),
        None => Box::new(io::stdout()),
    };
    Ok(csv::Writer::from_writer(sink))
}

fn write_summary(study: &Study, path: Option<&Path>, digits: u32) -> Result<(), Failure> {
    let mut w = csv_writer(path)?;
    w.write_record(["category", "estimator", "mean", "sd", "mse", "n_absorbed", "n_failed", "seed"])?;
    let s = &study.summary;
    let f = |v: f64| format!("{v:.*}", digits as usize);
    for row in &s.rows {
        w.write_record([
            row.label.clone(),
            row.family.name().to_string(),
            f(row.stats.mean),
            f(row.stats.sd),
            f(row.stats.mse),
            s.n_absorbed.to_string(),
            s.n_failed.to_string(),
            s.seed.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn write_per_path(study: &Study, labels: &[String], path: &Path, render: Render, ml: bool, unbiased: bool) -> Result<(), Failure> {
    let mut w = csv_writer(Some(path))?;
    let mut header = vec!["path".to_string(), "status".into(), "steps".into(), "point".into()];
    for (on, family) in [(ml, "ml"), (unbiased, "unbiased")] {
        if on {
            header.extend(labels.iter().map(|l| format!("{family}_{l}")));
        }
    }
    w.write_record(&header)?;
    for record in &study.records {
        let mut row = vec![record.index.to_string()];
        match &record.outcome {
            PathOutcome::Absorbed(obs) => {
                row.extend(["absorbed".to_string(), obs.order().to_string(), obs.point().to_string()]);
            }
            PathOutcome::NonAbsorbed { steps } => {
                row.extend(["not_absorbed".to_string(), steps.to_string(), String::new()]);
            }
        }
        for (on, values) in [(ml, &record.ml), (unbiased, &record.unbiased)] {
            if on {
                match values {
                    Some(v) => row.extend(v.iter().map(|x| render.rational(x))),
                    None => row.extend(labels.iter().map(|_| String::new())),
                }
            }
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Lattice points in orders `0..=horizon` above which `--source auto` refuses
/// to fall back to a count table.
const AUTO_TABLE_LIMIT: u128 = 5_000_000;

fn guard_table_size(dim: usize, horizon: usize) -> Result<(), Failure> {
    // C(horizon + dim, dim), saturating.
    let mut points: u128 = 1;
    for i in 1..=dim as u128 {
        points = points.saturating_mul(horizon as u128 + i) / i;
    }
    if points > AUTO_TABLE_LIMIT {
        return Err(Failure::Usage(format!(
            "no closed form matches this region and a count table to horizon {horizon} spans {points} points; \
             lower --horizon or pass --source table"
        )));
    }
    Ok(())
}

pub fn simulate(input: SimulateInput<'_>, digits: Option<u32>) -> Result<(), Failure> {
    if !(input.ml || input.unbiased) {
        return Err(Failure::Usage("no estimators selected".into()));
    }
    let model = ModelSpec::load(input.model)?.to_float();
    let region = RegionSpec::load(input.region)?;
    let table = EstimatorSource::PathCounts { horizon: input.horizon.unwrap_or(region.horizon()) };
    let source = match input.source {
        Source::Auto => match [ClosedForm::Lattice2d, ClosedForm::NullStep]
            .into_iter()
            .find(|f| f.matches(&region).is_some())
        {
            Some(form) => EstimatorSource::ClosedForm(form),
            None => {
                if let EstimatorSource::PathCounts { horizon } = table {
                    guard_table_size(region.dim(), horizon)?;
                }
                table
            }
        },
        Source::Closed(form) => EstimatorSource::ClosedForm(form),
        Source::Table => table,
    };
    let labels = model.labels().to_vec();
    let mut config = StudyConfig::new(model, region, source);
    config.families = [(input.ml, Family::Ml), (input.unbiased, Family::Unbiased)]
        .into_iter()
        .filter_map(|(on, f)| on.then_some(f))
        .collect();
    config.paths = input.paths;
    config.seed = input.seed;
    config.max_steps = input.max_steps;
    config.failure_limit = input.failure_limit;
    config.threads = input.threads;
    let study = run_study(&config)?;
    write_summary(&study, input.out, digits.unwrap_or(SUMMARY_DIGITS))?;
    if let Some(path) = input.per_path {
        write_per_path(&study, &labels, path, Render::choose(digits, true), input.ml, input.unbiased)?;
    }
    Ok(())
}

fn decision_name(d: Decision) -> &'static str {
    match d {
        Decision::Promising => "promising",
        Decision::Ineffective => "ineffective",
        Decision::Continue => "continue",
    }
}

pub fn trial_validate(design_path: &Path) -> Result<(), Failure> {
    let design = DesignSpec::load(design_path)?;
    let stops = stop_states(&design);
    let tally = |d: Decision| stops.iter().filter(|s| s.decision == d).count();
    let region = trial_region(&design);
    let simple = is_simple(&region, region.horizon())?;
    emit(&json!({
        "stages": design.max_stages(),
        "cumulative": design.cumulative(),
        "reachable_states": (1..=design.max_stages()).map(|s| design.reachable_states(s).len()).collect::<Vec<_>>(),
        "stop_states": stops.len(),
        "promising": tally(Decision::Promising),
        "ineffective": tally(Decision::Ineffective),
        "unreachable_stages": design.unreachable_stages(),
        "simplicity": {
            "verdict": if simple.passed() { "PASS" } else { "FAIL" },
            "horizon": simple.horizon,
        },
    }))
}

pub fn trial_estimate(design_path: &Path, r: u32, e: u32, stage: usize, digits: Option<u32>) -> Result<(), Failure> {
    let design = DesignSpec::load(design_path)?;
    let est = trial_unbiased_estimate(&design, r, e, stage)?;
    let render = Render::choose(digits, true);
    let j = est.terminal.j as i64;
    let ml = |count: u32| render.rational(&rational_from_ints(count as i64, j));
    emit(&json!({
        "stage": est.stage,
        "patients": est.terminal.j,
        "responses": est.terminal.r,
        "progressions": est.terminal.e,
        "decision": decision_name(est.decision),
        "sequences": est.sequences.to_string(),
        "unbiased": {
            "response": render.rational(&est.response),
            "non_response": render.rational(&est.non_response),
            "progression": render.rational(&est.progression),
        },
        "ml": {
            "response": ml(r),
            "non_response": ml(est.terminal.j - r - e),
            "progression": ml(e),
        },
    }))
}

pub fn trial_verify(design_path: &Path, p: &[Rational], digits: Option<u32>) -> Result<(), Failure> {
    let design = DesignSpec::load(design_path)?;
    let [a, b, c]: [Rational; 3] = p
        .to_vec()
        .try_into()
        .map_err(|_| Failure::Usage(format!("--p needs 3 probabilities, got {}", p.len())))?;
    let v = verify_trial(&design, [a, b, c])?;
    let render = Render::choose(digits, true);
    emit(&json!({
        "p": render.rationals(&v.p),
        "mass": render.rational(&v.mass),
        "expectation": render.rationals(&v.expectation),
        "stop_states": v.stop_states,
        "holds": v.holds(),
    }))?;
    if v.holds() {
        Ok(())
    } else {
        Err(Failure::Check("estimator expectation differs from p".into()))
    }
}

pub fn validate(region_path: &Path) -> Result<(), Failure> {
    let region = RegionSpec::load(region_path)?;
    let report = validate_region(&region)?;
    emit(&json!({
        "dim": report.dim,
        "horizon": report.horizon,
        "accessible_points": report.accessible_points,
        "boundary_points": report.boundary_points,
        "pruned": report.pruned,
        "pruned_examples": report.pruned_examples.iter().map(point).collect::<Vec<_>>(),
        "pruned_checked_to": report.pruned_checked_to,
        "warnings": report.warnings,
    }))
}

fn normalized_model(model: &LoadedModel) -> Value {
    let (p, labels): (Vec<Value>, &[String]) = match model {
        LoadedModel::Exact(m) => (m.p().iter().map(|v| Value::String(format_rational(v))).collect(), m.labels()),
        LoadedModel::Float(m) => (m.p().iter().map(|&v| json!(v)).collect(), m.labels()),
    };
    json!({ "k": model.k(), "p": p, "labels": labels })
}

/// Re-emits a model, region, design or count table in canonical form. The
/// output is itself accepted by every command that reads that file type.
pub fn inspect(path: &Path) -> Result<(), Failure> {
    let value = read_json(path)?;
    let parse = |what: &str, e: serde_json::Error| Error::Parse(format!("{what}: {e}"));
    let base = path.parent().unwrap_or(Path::new("."));
    let normalized = if value.get("type").is_some() {
        let spec: RegionSpec = serde_json::from_value(value).map_err(|e| parse("region", e))?;
        validate_region(&spec.build(base)?)?;
        serde_json::to_value(&spec).map_err(|e| parse("region", e))?
    } else if value.get("stages").is_some() {
        let spec: DesignSpec = serde_json::from_value(value).map_err(|e| parse("design", e))?;
        serde_json::to_value(DesignSpec::from_design(&spec.build()?)).map_err(|e| parse("design", e))?
    } else if value.get("points").is_some() {
        let spec: TableSpec = serde_json::from_value(value).map_err(|e| parse("table", e))?;
        serde_json::to_value(TableSpec::from_table(&spec.build()?)).map_err(|e| parse("table", e))?
    } else if value.get("p").is_some() {
        let spec: ModelSpec = serde_json::from_value(value).map_err(|e| parse("model", e))?;
        normalized_model(&spec.build()?)
    } else {
        return Err(Error::Parse(format!("{}: not a model, region, design or table", path.display())).into());
    };
    emit(&normalized)
}
