use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::Args;
use mixmono::expr::{infer_variables, parse_expr};
use mixmono::inclusion::{enclose, error_bounds, max_cell_error, sampled_range, subdivide_apply, DEFAULT_CELL_CAP};
use mixmono::model::{write_plot, write_tube_csv, write_tube_json};
use mixmono::observer::{load_measurements, measurements_to_csv, observe, Measurement};
use mixmono::reach::{random_measurement, random_trajectory, reach_tube, ReachOptions, DEFAULT_SUBSTEPS};
use mixmono::setinv::set_invert;
use mixmono::{Error, InversionConfig, IntervalBox, MethodId, ReachTube, SystemModel, VectorFunction};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::{Cli, CliError, CliResult, Command};

pub fn run(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Range(a) => range(cli, a),
        Command::Reach(a) => reach(a),
        Command::Invert(a) => invert(a),
        Command::Observe(a) => observe_cmd(a),
        Command::Compare(a) => compare(a),
        Command::Simulate(a) => simulate(cli, a),
    }
}

// ---------------------------------------------------------------- shared input handling

fn load_model(name_or_path: &str) -> CliResult<SystemModel> {
    Ok(SystemModel::load(name_or_path)?)
}

fn parse_box(text: &str, what: &str) -> CliResult<IntervalBox> {
    text.parse()
        .map_err(|e| CliError::Invalid(format!("{what}: {e}")))
}

fn parse_methods(text: &str) -> CliResult<Vec<MethodId>> {
    let list = MethodId::parse_list(text)?;
    if list.is_empty() {
        return Err(CliError::Invalid("empty method list".into()));
    }
    Ok(list)
}

fn parse_reals(text: &str, what: &str) -> CliResult<Vec<f64>> {
    text.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| CliError::Invalid(format!("{what}: '{t}' is not a number")))
        })
        .collect()
}

/// Parses one or more expressions; variables come from `vars` or are inferred.
fn parse_exprs(texts: &[String], vars: Option<&str>) -> CliResult<(VectorFunction, Vec<String>)> {
    let names: Vec<String> = match vars {
        Some(v) => v.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect(),
        None => infer_variables(&texts.iter().map(String::as_str).collect::<Vec<_>>()),
    };
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let exprs = texts
        .iter()
        .map(|t| parse_expr(t, &refs).map_err(|e| CliError::Invalid(format!("expression '{t}': {e}"))))
        .collect::<CliResult<Vec<_>>>()?;
    Ok((VectorFunction::new(exprs, names.len())?, names))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Format {
    Csv,
    Json,
    Svg,
}

fn format_of(p: &Path) -> CliResult<Format> {
    match p.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("csv") => Ok(Format::Csv),
        Some("json") => Ok(Format::Json),
        Some("svg") => Ok(Format::Svg),
        _ => Err(CliError::Invalid(format!(
            "cannot infer an output format from '{}' (use .csv, .json or .svg)",
            p.display()
        ))),
    }
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(|e| CliError::Compute(format!("writing {}: {e}", path.display())))
}

fn fmt_box(b: &IntervalBox) -> String {
    b.to_string()
}

fn widths(b: &IntervalBox) -> String {
    b.widths().iter().map(|w| format!("{w:.6e}")).collect::<Vec<_>>().join(" ")
}

// ---------------------------------------------------------------- range

#[derive(Debug, Args)]
pub struct RangeArgs {
    /// Model file or bundled name; encloses the dynamics over init x disturbance box.
    #[arg(long, conflicts_with_all = ["expr", "vars"])]
    pub model: Option<String>,
    /// Expression (repeat for a vector map).
    #[arg(long)]
    pub expr: Vec<String>,
    /// Comma-separated variable order for --expr (inferred and naturally sorted otherwise).
    #[arg(long)]
    pub vars: Option<String>,
    /// Box such as "[-1,3]", "[-2,2]^3" or "[0,1] x [2,3]".
    #[arg(long)]
    pub domain: Option<String>,
    #[arg(long, default_value = "natural,centered,mixed-centered,jacobian-sign,remainder,tight,best")]
    pub methods: String,
    /// Split each dimension into k cells and report the hull.
    #[arg(long, default_value_t = 1)]
    pub subdivide: usize,
    /// Add error-bound columns (remainder form, per component).
    #[arg(long)]
    pub bounds: bool,
    /// Also write the table as .csv or .json.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct RangeRow {
    method: String,
    component: usize,
    lo: Option<f64>,
    hi: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    max_cell_error: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    note: Option<String>,
}

#[derive(Debug, Serialize)]
struct BoundsRow {
    component: usize,
    q_upper: f64,
    q_upper_hat: f64,
    q_lower_estimate: Option<f64>,
}

fn range(cli: &Cli, a: &RangeArgs) -> CliResult<()> {
    let (func, domain) = match (&a.model, a.expr.is_empty()) {
        (Some(m), true) => {
            let model = load_model(m)?;
            let b = match &a.domain {
                Some(d) => parse_box(d, "--domain")?,
                None => model.init.product(&model.disturbance_box),
            };
            (model.dynamics_fn()?, b)
        }
        (None, false) => {
            let d = a
                .domain
                .as_deref()
                .ok_or_else(|| CliError::Invalid("--expr needs --domain".into()))?;
            let (f, _) = parse_exprs(&a.expr, a.vars.as_deref())?;
            (f, parse_box(d, "--domain")?)
        }
        _ => return Err(CliError::Invalid("give exactly one of --model or --expr".into())),
    };
    if domain.len() != func.n_vars() {
        return Err(CliError::Invalid(format!(
            "--domain has {} dimensions but the map has {} variables",
            domain.len(),
            func.n_vars()
        )));
    }
    if a.subdivide == 0 {
        return Err(CliError::Invalid("--subdivide must be at least 1".into()));
    }
    let methods = parse_methods(&a.methods)?;
    let cell_samples = (cli.samples / a.subdivide.pow(domain.len() as u32)).clamp(64, 4_000);
    let results: Vec<Result<(IntervalBox, Option<f64>), Error>> = methods
        .par_iter()
        .map(|m| {
            if a.subdivide == 1 {
                Ok((enclose(m, &func, &domain)?, None))
            } else {
                let sub = subdivide_apply(m, &func, &domain, a.subdivide, DEFAULT_CELL_CAP)?;
                let err = max_cell_error(m, &func, &domain, a.subdivide, cell_samples, cli.seed)?;
                Ok((sub.hull, Some(err)))
            }
        })
        .collect();
    let mut rows = Vec::new();
    let mut any_ok = false;
    for (m, r) in methods.iter().zip(results) {
        match r {
            Ok((b, err)) => {
                any_ok = true;
                for (k, d) in b.iter().enumerate() {
                    rows.push(RangeRow {
                        method: m.to_string(),
                        component: k,
                        lo: Some(d.lo()),
                        hi: Some(d.hi()),
                        max_cell_error: err,
                        note: None,
                    });
                }
            }
            Err(e) if e.is_validation() => return Err(e.into()),
            Err(e) => rows.push(RangeRow {
                method: m.to_string(),
                component: 0,
                lo: None,
                hi: None,
                max_cell_error: None,
                note: Some(format!("n/a: {e}")),
            }),
        }
    }
    let oracle = if cli.samples > 0 {
        let o = sampled_range(&func, &domain, cli.samples, cli.seed)?;
        for (k, d) in o.iter().enumerate() {
            rows.push(RangeRow {
                method: "sampled".into(),
                component: k,
                lo: Some(d.lo()),
                hi: Some(d.hi()),
                max_cell_error: None,
                note: None,
            });
        }
        Some(o)
    } else {
        None
    };
    let mut bounds = Vec::new();
    if a.bounds {
        let jac = func.jacobian(&domain)?;
        for (k, f) in func.exprs().iter().enumerate() {
            let eb = error_bounds(f, jac.row(k), &domain, oracle.as_ref().map(|o| o[k]))?;
            bounds.push(BoundsRow {
                component: k,
                q_upper: eb.q_upper,
                q_upper_hat: eb.q_upper_hat,
                q_lower_estimate: eb.q_lower_estimate,
            });
        }
    }

    let mut out = String::new();
    let _ = writeln!(out, "{:<28} {:>4} {:>24} {:>24}{}", "method", "comp", "lo", "hi", if a.subdivide > 1 { "    max_cell_error" } else { "" });
    for r in &rows {
        match (r.lo, r.hi) {
            (Some(lo), Some(hi)) => {
                let _ = write!(out, "{:<28} {:>4} {:>24} {:>24}", r.method, r.component, lo, hi);
                if let Some(e) = r.max_cell_error {
                    let _ = write!(out, " {e:>18.6e}");
                }
                out.push('\n');
            }
            _ => {
                let _ = writeln!(out, "{:<28} {:>4} {}", r.method, "-", r.note.as_deref().unwrap_or(""));
            }
        }
    }
    if a.bounds {
        let _ = writeln!(out, "\n{:<6} {:>24} {:>24} {:>24}", "comp", "q_upper", "q_upper_hat", "q_lower_est");
        for b in &bounds {
            let lower = b.q_lower_estimate.map_or("-".to_string(), |v| v.to_string());
            let _ = writeln!(out, "{:<6} {:>24} {:>24} {:>24}", b.component, b.q_upper, b.q_upper_hat, lower);
        }
    }
    print!("{out}");

    if let Some(p) = &a.out {
        let text = match format_of(p)? {
            Format::Json => serde_json::to_string_pretty(&serde_json::json!({ "rows": rows, "bounds": bounds }))
                .map_err(|e| CliError::Compute(e.to_string()))?,
            Format::Csv => {
                let mut s = String::from("method,component,lo,hi,max_cell_error,note\n");
                for r in &rows {
                    let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.16e}"));
                    let note = r.note.as_deref().unwrap_or("").replace([',', '\n'], ";");
                    let _ = writeln!(s, "{},{},{},{},{},{}", r.method, r.component, opt(r.lo), opt(r.hi), opt(r.max_cell_error), note);
                }
                s
            }
            Format::Svg => return Err(CliError::Invalid("range output must be .csv or .json".into())),
        };
        write_text(p, &text)?;
    }
    if !any_ok {
        return Err(CliError::Compute("no method produced an enclosure".into()));
    }
    Ok(())
}

// ---------------------------------------------------------------- reach / compare / observe

#[derive(Debug, Args)]
pub struct TubeArgs {
    /// Model file or bundled name.
    #[arg(long)]
    pub model: String,
    /// Number of steps of length dt.
    #[arg(long, conflicts_with = "horizon")]
    pub steps: Option<usize>,
    /// Time horizon; rounded to a whole number of steps.
    #[arg(long)]
    pub horizon: Option<f64>,
    /// RK4 substeps per dt for continuous-time models.
    #[arg(long, default_value_t = DEFAULT_SUBSTEPS)]
    pub substeps: usize,
    /// Bisection width for set inversion.
    #[arg(long, default_value_t = 1e-3)]
    pub epsilon: f64,
    /// Sweeps per set inversion.
    #[arg(long, default_value_t = 1)]
    pub passes: usize,
}

impl TubeArgs {
    fn steps(&self, model: &SystemModel, default: usize) -> CliResult<usize> {
        match (self.steps, self.horizon) {
            (Some(s), _) => Ok(s),
            (None, Some(h)) if h.is_finite() && h >= 0.0 => Ok((h / model.dt).round() as usize),
            (None, Some(h)) => Err(CliError::Invalid(format!("--horizon must be non-negative, got {h}"))),
            (None, None) => Ok(default),
        }
    }

    fn inversion(&self, method: MethodId) -> CliResult<InversionConfig> {
        let cfg = InversionConfig {
            epsilon: self.epsilon,
            passes: self.passes,
            method,
            ..InversionConfig::default()
        };
        cfg.validate(0).or_else(|e| match e {
            // The order check needs the real dimension; only scalar settings matter here.
            Error::Validation(msg) if msg.contains("permutation") => Ok(()),
            e => Err(e),
        })?;
        Ok(cfg)
    }

    fn options(&self) -> CliResult<ReachOptions> {
        if self.substeps == 0 {
            return Err(CliError::Invalid("--substeps must be at least 1".into()));
        }
        Ok(ReachOptions {
            substeps: self.substeps,
            ..ReachOptions::default()
        })
    }
}

#[derive(Debug, Args)]
pub struct ReachArgs {
    #[command(flatten)]
    pub tube: TubeArgs,
    /// Method or comma-separated list.
    #[arg(long, alias = "methods", default_value = "remainder")]
    pub method: String,
    /// Refine every step against the model's constraint block.
    #[arg(long)]
    pub refine: bool,
    /// Tube output (.csv or .json); with several methods the method name is appended.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// SVG plot of all tubes.
    #[arg(long)]
    pub plot: Option<PathBuf>,
    /// Exit 0 even when a tube stops early; partial tubes are written either way.
    #[arg(long)]
    pub keep_going: bool,
}

struct TubeRun {
    method: MethodId,
    tube: ReachTube,
    stopped: Option<(usize, String)>,
    /// Stopped because the method does not apply, not because the tube diverged.
    inapplicable: bool,
}

fn split_result(method: MethodId, r: Result<ReachTube, Error>) -> CliResult<TubeRun> {
    match r {
        Ok(tube) => Ok(TubeRun {
            method,
            tube,
            stopped: None,
            inapplicable: false,
        }),
        Err(Error::Reach { step, partial, source }) if !source.is_validation() => Ok(TubeRun {
            method,
            tube: *partial,
            stopped: Some((step, source.to_string())),
            inapplicable: source.is_inapplicable(),
        }),
        Err(Error::Reach { source, .. }) => Err(CliError::Core(*source)),
        Err(e) => Err(e.into()),
    }
}

fn output_path(base: &Path, method: &MethodId, many: bool) -> PathBuf {
    if !many {
        return base.to_path_buf();
    }
    let stem = base.file_stem().and_then(|s| s.to_str()).unwrap_or("tube");
    let ext = base.extension().and_then(|s| s.to_str()).unwrap_or("csv");
    let tag: String = method
        .to_string()
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' })
        .collect();
    base.with_file_name(format!("{stem}_{tag}.{ext}"))
}

fn write_tubes(runs: &[TubeRun], out: Option<&Path>, plot: Option<&Path>) -> CliResult<()> {
    if let Some(p) = out {
        let fmt = format_of(p)?;
        for r in runs {
            let path = output_path(p, &r.method, runs.len() > 1);
            match fmt {
                Format::Csv => write_tube_csv(&r.tube, &path)?,
                Format::Json => write_tube_json(&r.tube, &path)?,
                Format::Svg => write_plot(std::slice::from_ref(&r.tube), &path)?,
            }
        }
    }
    if let Some(p) = plot {
        let tubes: Vec<ReachTube> = runs.iter().map(|r| r.tube.clone()).collect();
        write_plot(&tubes, p)?;
    }
    Ok(())
}

fn print_summary(runs: &[TubeRun]) {
    println!("{:<28} {:>6} {:>10}  final widths", "method", "steps", "status");
    for r in runs {
        let last = r.tube.last().map(|s| widths(s.current())).unwrap_or_default();
        let status = if r.stopped.is_some() { "stopped" } else { "ok" };
        println!("{:<28} {:>6} {:>10}  {last}", r.method.to_string(), r.tube.len().saturating_sub(1), status);
    }
    for r in runs {
        if let Some((step, why)) = &r.stopped {
            println!("# {} stopped at step {step}: {why}", r.method);
        }
    }
}

fn check_outputs(out: Option<&Path>, plot: Option<&Path>) -> CliResult<()> {
    if let Some(p) = out {
        if format_of(p)? == Format::Svg {
            return Err(CliError::Invalid("use --plot for SVG output".into()));
        }
    }
    if let Some(p) = plot {
        if format_of(p)? != Format::Svg {
            return Err(CliError::Invalid("--plot must end in .svg".into()));
        }
    }
    Ok(())
}

fn reach(a: &ReachArgs) -> CliResult<()> {
    let model = load_model(&a.tube.model)?;
    let methods = parse_methods(&a.method)?;
    let steps = a.tube.steps(&model, 50)?;
    check_outputs(a.out.as_deref(), a.plot.as_deref())?;
    let mut opts = a.tube.options()?;
    if a.refine {
        if model.constraints.is_empty() {
            return Err(CliError::Invalid("--refine needs a constraint block in the model".into()));
        }
        opts.refine = Some(a.tube.inversion(MethodId::Remainder)?);
    }
    let runs = methods
        .par_iter()
        .map(|m| split_result(m.clone(), reach_tube(&model, m, steps, &opts)))
        .collect::<CliResult<Vec<_>>>()?;
    write_tubes(&runs, a.out.as_deref(), a.plot.as_deref())?;
    print_summary(&runs);
    finish(&runs, a.keep_going)
}

fn finish(runs: &[TubeRun], keep_going: bool) -> CliResult<()> {
    match runs.iter().find(|r| r.stopped.is_some()) {
        Some(r) if !keep_going => {
            let (step, why) = r.stopped.as_ref().expect("stopped");
            Err(CliError::Compute(format!("{} stopped at step {step}: {why}", r.method)))
        }
        _ => Ok(()),
    }
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub tube: TubeArgs,
    #[arg(long, default_value = "natural,centered,mixed-centered,jacobian-sign,remainder,tight,best")]
    pub methods: String,
    #[arg(long)]
    pub refine: bool,
    #[arg(long)]
    pub plot: Option<PathBuf>,
    /// Also write the table as .csv or .json.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct CompareRow {
    method: String,
    steps_reached: usize,
    status: String,
    widths_at_common_step: Option<Vec<f64>>,
    final_widths: Vec<f64>,
}

fn compare(a: &CompareArgs) -> CliResult<()> {
    let model = load_model(&a.tube.model)?;
    let methods = parse_methods(&a.methods)?;
    let steps = a.tube.steps(&model, 50)?;
    check_outputs(None, a.plot.as_deref())?;
    if let Some(p) = &a.out {
        if format_of(p)? == Format::Svg {
            return Err(CliError::Invalid("compare output must be .csv or .json".into()));
        }
    }
    let mut opts = a.tube.options()?;
    if a.refine {
        if model.constraints.is_empty() {
            return Err(CliError::Invalid("--refine needs a constraint block in the model".into()));
        }
        opts.refine = Some(a.tube.inversion(MethodId::Remainder)?);
    }
    let runs = methods
        .par_iter()
        .map(|m| split_result(m.clone(), reach_tube(&model, m, steps, &opts)))
        .collect::<CliResult<Vec<_>>>()?;
    // Compare at the last step every applicable tube reached; methods that stop because
    // they do not apply (e.g. loss of sign stability) do not drag the comparison back.
    let applicable: Vec<usize> = runs.iter().filter(|r| !r.inapplicable).map(|r| r.tube.len()).collect();
    let lens = if applicable.is_empty() {
        runs.iter().map(|r| r.tube.len()).collect()
    } else {
        applicable
    };
    let common = lens.into_iter().min().unwrap_or(1).saturating_sub(1);
    let rows: Vec<CompareRow> = runs
        .iter()
        .map(|r| CompareRow {
            method: r.method.to_string(),
            steps_reached: r.tube.len().saturating_sub(1),
            status: r.stopped.as_ref().map_or("ok".into(), |(s, why)| format!("stopped at step {s}: {why}")),
            widths_at_common_step: r.tube.steps.get(common).map(|s| s.current().widths()),
            final_widths: r.tube.last().map(|s| s.current().widths()).unwrap_or_default(),
        })
        .collect();
    println!("# widths at step {common} (last step reached by every applicable method)");
    println!("{:<28} {:>6}  {:<40} status", "method", "steps", "widths");
    for r in &rows {
        let w = match &r.widths_at_common_step {
            Some(ws) => ws.iter().map(|w| format!("{w:.6e}")).collect::<Vec<_>>().join(" "),
            None => "-".into(),
        };
        println!("{:<28} {:>6}  {:<40} {}", r.method, r.steps_reached, w, r.status);
    }
    if let Some(p) = &a.out {
        let text = match format_of(p)? {
            Format::Json => serde_json::to_string_pretty(&rows).map_err(|e| CliError::Compute(e.to_string()))?,
            _ => {
                let mut s = String::from("method,steps_reached,dim,width_at_common_step,final_width\n");
                for r in &rows {
                    for (d, f) in r.final_widths.iter().enumerate() {
                        let w = r.widths_at_common_step.as_ref().map_or(String::new(), |ws| format!("{:.16e}", ws[d]));
                        let _ = writeln!(s, "{},{},{d},{w},{f:.16e}", r.method, r.steps_reached);
                    }
                }
                s
            }
        };
        write_text(p, &text)?;
    }
    write_tubes(&runs, None, a.plot.as_deref())
}

#[derive(Debug, Args)]
pub struct ObserveArgs {
    #[command(flatten)]
    pub tube: TubeArgs,
    /// CSV with a `t,y1,...` header.
    #[arg(long)]
    pub measurements: PathBuf,
    #[arg(long, default_value = "remainder")]
    pub method: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub plot: Option<PathBuf>,
    #[arg(long)]
    pub keep_going: bool,
}

fn observe_cmd(a: &ObserveArgs) -> CliResult<()> {
    let model = load_model(&a.tube.model)?;
    let method: MethodId = a.method.parse()?;
    check_outputs(a.out.as_deref(), a.plot.as_deref())?;
    let ms = load_measurements(&a.measurements)?;
    let steps = match (a.tube.steps, a.tube.horizon) {
        (None, None) => None,
        _ => Some(a.tube.steps(&model, 0)?),
    };
    let cfg = a.tube.inversion(method.clone())?;
    let opts = a.tube.options()?;
    let run = split_result(method.clone(), observe(&model, &method, &ms, &cfg, &opts, steps))?;
    let runs = [run];
    write_tubes(&runs, a.out.as_deref(), a.plot.as_deref())?;
    print_summary(&runs);
    let updates = runs[0].tube.steps.iter().filter(|s| s.updated.is_some()).count();
    println!("# {updates} measurement updates applied");
    finish(&runs, a.keep_going)
}

// ---------------------------------------------------------------- invert

#[derive(Debug, Args)]
pub struct InvertArgs {
    /// Model file or bundled name; inverts its constraint block.
    #[arg(long, conflicts_with_all = ["expr", "vars"])]
    pub model: Option<String>,
    #[arg(long)]
    pub expr: Vec<String>,
    #[arg(long)]
    pub vars: Option<String>,
    /// Prior box (defaults to the model's init box).
    #[arg(long)]
    pub prior: Option<String>,
    /// Comma-separated lower targets, one per output.
    #[arg(long, allow_hyphen_values = true)]
    pub ylo: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub yhi: Option<String>,
    #[arg(long, default_value_t = 1e-3)]
    pub epsilon: f64,
    /// Interpret epsilon relative to each prior width.
    #[arg(long)]
    pub relative: bool,
    #[arg(long, default_value_t = 1)]
    pub passes: usize,
    #[arg(long, default_value = "remainder")]
    pub method: String,
}

fn invert(a: &InvertArgs) -> CliResult<()> {
    let (func, prior, lo, hi) = match (&a.model, a.expr.is_empty()) {
        (Some(m), true) => {
            let model = load_model(m)?;
            let (f, lo, hi) = model
                .constraint_fn()?
                .ok_or_else(|| CliError::Invalid(format!("model '{}' has no constraint block", model.name)))?;
            let prior = match &a.prior {
                Some(p) => parse_box(p, "--prior")?,
                None => model.init.clone(),
            };
            (f, prior, lo, hi)
        }
        (None, false) => {
            let (f, _) = parse_exprs(&a.expr, a.vars.as_deref())?;
            let p = a
                .prior
                .as_deref()
                .ok_or_else(|| CliError::Invalid("--expr needs --prior".into()))?;
            let n = f.len();
            (f, parse_box(p, "--prior")?, vec![f64::NEG_INFINITY; n], vec![f64::INFINITY; n])
        }
        _ => return Err(CliError::Invalid("give exactly one of --model or --expr".into())),
    };
    let lo = match &a.ylo {
        Some(t) => parse_reals(t, "--ylo")?,
        None if a.model.is_some() => lo,
        None => return Err(CliError::Invalid("--expr needs --ylo and --yhi".into())),
    };
    let hi = match &a.yhi {
        Some(t) => parse_reals(t, "--yhi")?,
        None if a.model.is_some() => hi,
        None => return Err(CliError::Invalid("--expr needs --ylo and --yhi".into())),
    };
    if prior.len() != func.n_vars() {
        return Err(CliError::Invalid(format!(
            "--prior has {} dimensions but the map has {} variables",
            prior.len(),
            func.n_vars()
        )));
    }
    let cfg = InversionConfig {
        epsilon: a.epsilon,
        relative: a.relative,
        passes: a.passes,
        method: a.method.parse()?,
        ..InversionConfig::default()
    };
    match set_invert(&func, None, &prior, &lo, &hi, &cfg) {
        Ok(b) => {
            println!("result: {}", fmt_box(&b));
            for (d, iv) in b.iter().enumerate() {
                println!("dim {d}: {} {}", iv.lo(), iv.hi());
            }
            Ok(())
        }
        Err(Error::EmptySolution) => {
            println!("result: empty");
            Ok(())
        }
        Err(e) => Err(e.into()),
    }
}

// ---------------------------------------------------------------- simulate

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub model: String,
    #[arg(long, default_value_t = 50)]
    pub steps: usize,
    #[arg(long, default_value_t = 1)]
    pub trajectories: usize,
    #[arg(long, default_value_t = DEFAULT_SUBSTEPS)]
    pub substeps: usize,
    /// Trajectory CSV (`run,t,<states>`); printed to stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Measurement CSV generated along the first trajectory.
    #[arg(long)]
    pub measurements: Option<PathBuf>,
    /// Measure every k-th step (starting at step k).
    #[arg(long, default_value_t = 1)]
    pub every: usize,
}

fn simulate(cli: &Cli, a: &SimulateArgs) -> CliResult<()> {
    let model = load_model(&a.model)?;
    if a.every == 0 || a.substeps == 0 {
        return Err(CliError::Invalid("--every and --substeps must be at least 1".into()));
    }
    if a.measurements.is_some() && model.observation.is_none() {
        return Err(CliError::Invalid(format!("model '{}' has no observe block", model.name)));
    }
    let func = model.dynamics_fn()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cli.seed);
    let mut csv = String::from("run,t");
    for n in &model.state {
        let _ = write!(csv, ",{n}");
    }
    csv.push('\n');
    let mut first = Vec::new();
    for run in 0..a.trajectories {
        let traj = random_trajectory(&model, &func, a.steps, a.substeps, &mut rng)?;
        for (k, x) in traj.iter().enumerate() {
            let _ = write!(csv, "{run},{:.16e}", k as f64 * model.dt);
            for v in x {
                let _ = write!(csv, ",{v:.16e}");
            }
            csv.push('\n');
        }
        if run == 0 {
            first = traj;
        }
    }
    if let Some(p) = &a.measurements {
        // Separate stream so the trajectories do not depend on whether noise is drawn.
        let mut noise = ChaCha8Rng::seed_from_u64(cli.seed ^ 0x6d65_6173);
        let ms = (a.every..first.len())
            .step_by(a.every)
            .map(|k| {
                Ok(Measurement {
                    t: k as f64 * model.dt,
                    y: random_measurement(&model, &first[k], &mut noise)?,
                })
            })
            .collect::<Result<Vec<_>, Error>>()?;
        write_text(p, &measurements_to_csv(&ms))?;
    }
    match &a.out {
        Some(p) => write_text(p, &csv),
        None => {
            print!("{csv}");
            Ok(())
        }
    }
}
