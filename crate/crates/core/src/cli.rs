//! Configuration-driven experiment runner.
//!
//! # Config files
//!
//! Flat `key = value` lines; `#` starts a comment. Grid keys accept
//! comma-separated lists and the grid is the Cartesian product of those lists
//! in declaration order (first declared key varies slowest).
//!
//! | key            | modes    | meaning                                            |
//! |----------------|----------|----------------------------------------------------|
//! | `mode`         | all      | `twostate`, `table` or `random`                    |
//! | `p`, `eps`, `delta` | twostate | grid of two-state parameters                |
//! | `n`            | all      | grid of horizons                                   |
//! | `nominal`, `perturbed` | table | grid of kernel table files                    |
//! | `states`, `scale` | random | state count and perturbation scale grids         |
//! | `history`      | random   | `markov` or `full` (grid, default `markov`)        |
//! | `zero_prob`    | random   | chance of zeroing a weight (grid, default 0)       |
//! | `replicates`   | random   | instances per grid point (default 1)               |
//! | `exact`        | all      | enumerate exact distances (default `true`)         |
//! | `exact_cap`    | all      | max trajectories for enumeration (default 10⁷)     |
//! | `mc_samples`   | all      | coupled-sampler draws per row (default 0: off)     |
//! | `mc_check`     | all      | compare sampler against exact coupled diagonal     |
//! | `rng_seed`     | all      | seed for generators and sampler (default 0)        |
//! | `scope`        | all      | `reachable` (default) or `all` histories           |
//! | `budget`       | all      | explicit constants `c_0, c_1, …` (last repeats)    |
//! | `output`       | all      | CSV path (stdout when absent)                      |
//! | `curves`       | all      | optional CSV of n against distance and bounds      |
//!
//! # Kernel table files
//!
//! ```text
//! states 2
//! initial 0.5 0.5
//! step 1 markov
//! 1 0
//! 0 1
//! step 2 full
//! <one row per history (x_0, x_1) in row-major order>
//! ```

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::bounds::{
    make_report, BoundReport, HistoryScope, PerturbationBudget, ReportOptions, BOUND_TOL,
};
use crate::coupling::{coupled_diagonal_mass, coupled_sampler};
use crate::error::Error as ModelError;
use crate::generate::{random_pair, RandomChainSpec};
use crate::kernel::FiniteKernel;
use crate::measure::{AtomSpace, ProbMeasure, SignedMeasure};
use crate::product::{EnumerationOptions, KernelSequence, StepKernel, DEFAULT_CAP};
use crate::twostate::{build_chain, classify_case, Case, TwoStateSpec};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config line {line}: {msg}")]
    Config { line: usize, msg: String },
    #[error("config: {0}")]
    ConfigInvalid(String),
    #[error("grid point {point}: {source}")]
    GridPoint {
        point: String,
        #[source]
        source: ModelError,
    },
    #[error("{file}:{line}: {msg}")]
    Table {
        file: String,
        line: usize,
        msg: String,
    },
    #[error("report line {line}: {msg}")]
    Report { line: usize, msg: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("{} bound violation(s):\n{}", .0.len(), .0.join("\n"))]
    Violations(Vec<String>),
}

fn config_err(line: usize, msg: impl Into<String>) -> CliError {
    CliError::Config {
        line,
        msg: msg.into(),
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// 17 significant digits in scientific notation; independent of locale.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    TwoState,
    Table,
    Random,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Kind {
    Real,
    Int,
    Path,
    History,
}

fn axis_kind(mode: Mode, key: &str) -> Option<Kind> {
    match (mode, key) {
        (_, "n") => Some(Kind::Int),
        (Mode::TwoState, "p" | "eps" | "delta") => Some(Kind::Real),
        (Mode::Table, "nominal" | "perturbed") => Some(Kind::Path),
        (Mode::Random, "states") => Some(Kind::Int),
        (Mode::Random, "scale" | "zero_prob") => Some(Kind::Real),
        (Mode::Random, "history") => Some(Kind::History),
        _ => None,
    }
}

fn required_axes(mode: Mode) -> &'static [&'static str] {
    match mode {
        Mode::TwoState => &["p", "eps", "delta", "n"],
        Mode::Table => &["nominal", "perturbed", "n"],
        Mode::Random => &["states", "n", "scale"],
    }
}

/// One grid dimension with its raw values.
#[derive(Clone, Debug, PartialEq)]
pub struct Axis {
    pub name: String,
    kind: Kind,
    pub values: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub axes: Vec<Axis>,
    pub exact: bool,
    pub exact_cap: usize,
    pub mc_samples: u64,
    pub mc_check: bool,
    pub rng_seed: u64,
    pub scope: HistoryScope,
    pub budget: Option<Vec<f64>>,
    pub replicates: usize,
    pub output: Option<PathBuf>,
    pub curves: Option<PathBuf>,
    /// Directory relative paths are resolved against.
    pub base_dir: PathBuf,
}

fn parse_value<T: std::str::FromStr>(line: usize, key: &str, v: &str) -> Result<T, CliError> {
    v.parse()
        .map_err(|_| config_err(line, format!("cannot parse `{v}` for `{key}`")))
}

fn parse_bool(line: usize, key: &str, v: &str) -> Result<bool, CliError> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(config_err(
            line,
            format!("`{key}` expects true or false, got `{v}`"),
        )),
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = read(path)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, &base)
    }

    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, CliError> {
        let mut entries: Vec<(usize, String, Vec<String>)> = Vec::new();
        let mut seen = HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| config_err(line, "expected `key = value`"))?;
            let key = key.trim().to_string();
            if !seen.insert(key.clone()) {
                return Err(config_err(line, format!("duplicate key `{key}`")));
            }
            let values: Vec<String> = value
                .split(',')
                .map(|v| v.trim().to_string())
                .filter(|v| !v.is_empty())
                .collect();
            entries.push((line, key, values));
        }

        let mode = match entries.iter().find(|(_, k, _)| k == "mode") {
            None => return Err(CliError::ConfigInvalid("missing `mode`".into())),
            Some((line, _, v)) => match v.as_slice() {
                [m] if m == "twostate" => Mode::TwoState,
                [m] if m == "table" => Mode::Table,
                [m] if m == "random" => Mode::Random,
                _ => {
                    return Err(config_err(
                        *line,
                        "`mode` must be twostate, table or random",
                    ))
                }
            },
        };

        let mut cfg = ExperimentConfig {
            mode,
            axes: Vec::new(),
            exact: true,
            exact_cap: DEFAULT_CAP,
            mc_samples: 0,
            mc_check: false,
            rng_seed: 0,
            scope: HistoryScope::Reachable,
            budget: None,
            replicates: 1,
            output: None,
            curves: None,
            base_dir: base_dir.to_path_buf(),
        };

        for (line, key, values) in entries {
            if key == "mode" {
                continue;
            }
            if let Some(kind) = axis_kind(mode, &key) {
                if values.is_empty() {
                    return Err(config_err(line, format!("grid key `{key}` has no values")));
                }
                for v in &values {
                    match kind {
                        Kind::Real => {
                            let x: f64 = parse_value(line, &key, v)?;
                            if !x.is_finite() {
                                return Err(config_err(line, format!("`{key}` must be finite")));
                            }
                        }
                        Kind::Int => {
                            parse_value::<usize>(line, &key, v)?;
                        }
                        Kind::History => {
                            if v != "markov" && v != "full" {
                                return Err(config_err(line, "`history` expects markov or full"));
                            }
                        }
                        Kind::Path => {}
                    }
                }
                cfg.axes.push(Axis {
                    name: key,
                    kind,
                    values,
                });
                continue;
            }
            let single = |values: &[String]| -> Result<String, CliError> {
                match values {
                    [v] => Ok(v.clone()),
                    _ => Err(config_err(line, format!("`{key}` takes exactly one value"))),
                }
            };
            match key.as_str() {
                "exact" => cfg.exact = parse_bool(line, &key, &single(&values)?)?,
                "exact_cap" => {
                    cfg.exact_cap = parse_value(line, &key, &single(&values)?)?;
                    if cfg.exact_cap < 1 {
                        return Err(config_err(line, "`exact_cap` must be at least 1"));
                    }
                }
                "mc_samples" => cfg.mc_samples = parse_value(line, &key, &single(&values)?)?,
                "mc_check" => cfg.mc_check = parse_bool(line, &key, &single(&values)?)?,
                "rng_seed" => cfg.rng_seed = parse_value(line, &key, &single(&values)?)?,
                "replicates" if mode == Mode::Random => {
                    cfg.replicates = parse_value(line, &key, &single(&values)?)?;
                    if cfg.replicates < 1 {
                        return Err(config_err(line, "`replicates` must be at least 1"));
                    }
                }
                "scope" => {
                    cfg.scope = match single(&values)?.as_str() {
                        "reachable" => HistoryScope::Reachable,
                        "all" => HistoryScope::All,
                        _ => return Err(config_err(line, "`scope` expects reachable or all")),
                    }
                }
                "budget" => {
                    if values.is_empty() {
                        return Err(config_err(line, "`budget` has no values"));
                    }
                    let b = values
                        .iter()
                        .map(|v| parse_value::<f64>(line, &key, v))
                        .collect::<Result<Vec<_>, _>>()?;
                    PerturbationBudget::new(b.clone())
                        .map_err(|e| config_err(line, e.to_string()))?;
                    cfg.budget = Some(b);
                }
                "output" => cfg.output = Some(cfg.base_dir.join(single(&values)?)),
                "curves" => cfg.curves = Some(cfg.base_dir.join(single(&values)?)),
                _ => {
                    return Err(config_err(
                        line,
                        format!("unknown key `{key}` for this mode"),
                    ))
                }
            }
        }

        for req in required_axes(mode) {
            if !cfg.axes.iter().any(|a| a.name == *req) {
                return Err(CliError::ConfigInvalid(format!("missing grid key `{req}`")));
            }
        }
        if cfg.mc_check && cfg.mc_samples == 0 {
            return Err(CliError::ConfigInvalid(
                "`mc_check` needs `mc_samples` > 0".into(),
            ));
        }
        Ok(cfg)
    }

    /// Grid points in declaration order, as `(key, value)` lists.
    pub fn grid(&self) -> Vec<Vec<(String, String)>> {
        let mut points: Vec<Vec<(String, String)>> = vec![Vec::new()];
        for axis in &self.axes {
            let mut next = Vec::with_capacity(points.len() * axis.values.len());
            for p in &points {
                for v in &axis.values {
                    let mut q = p.clone();
                    q.push((axis.name.clone(), v.clone()));
                    next.push(q);
                }
            }
            points = next;
        }
        if self.mode == Mode::Random {
            let mut next = Vec::with_capacity(points.len() * self.replicates);
            for p in &points {
                for r in 0..self.replicates {
                    let mut q = p.clone();
                    q.push(("replicate".into(), r.to_string()));
                    next.push(q);
                }
            }
            points = next;
        }
        points
    }

    fn kind_of(&self, key: &str) -> Option<Kind> {
        self.axes.iter().find(|a| a.name == key).map(|a| a.kind)
    }

    fn enumeration(&self) -> EnumerationOptions {
        EnumerationOptions {
            cap: self.exact_cap,
            prune_below: 0.0,
        }
    }
}

fn lookup<'a>(point: &'a [(String, String)], key: &str) -> Option<&'a str> {
    point
        .iter()
        .find(|(k, _)| k == key)
        .map(|(_, v)| v.as_str())
}

fn real(point: &[(String, String)], key: &str) -> f64 {
    lookup(point, key)
        .and_then(|v| v.parse().ok())
        .unwrap_or(0.0)
}

fn int(point: &[(String, String)], key: &str) -> usize {
    lookup(point, key).and_then(|v| v.parse().ok()).unwrap_or(0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RowStatus {
    Ok,
    /// Enumeration cap exceeded; exact columns are blank.
    CapExceeded,
    /// Enumeration cap exceeded; the two-state closed form filled `exact_tv`.
    Analytic,
}

impl RowStatus {
    fn label(self) -> &'static str {
        match self {
            RowStatus::Ok => "ok",
            RowStatus::CapExceeded => "cap_exceeded",
            RowStatus::Analytic => "analytic",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResultRow {
    pub params: Vec<(String, String)>,
    pub case_label: Option<Case>,
    pub exact_tv: Option<f64>,
    pub mc_estimate: Option<f64>,
    pub half_width: Option<f64>,
    pub linear_bound: f64,
    pub multiplicative_bound: f64,
    pub overlap_lower_bound: f64,
    pub gap: Option<f64>,
    pub status: RowStatus,
    /// Inequalities the row fails; empty for a verified row.
    pub violations: Vec<String>,
}

const TRAILING_COLUMNS: [&str; 9] = [
    "case_label",
    "exact_tv",
    "mc_estimate",
    "half_width",
    "linear_bound",
    "multiplicative_bound",
    "overlap_lower_bound",
    "gap",
    "status",
];

fn csv_text(header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("UTF-8 fields")
}

fn opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

impl ExperimentConfig {
    fn param_field(&self, key: &str, value: &str) -> String {
        match self.kind_of(key) {
            Some(Kind::Real) => value
                .parse::<f64>()
                .map(fmt_f64)
                .unwrap_or_else(|_| value.into()),
            _ => value.to_string(),
        }
    }

    /// CSV text for `rows`; header first, rows in grid order.
    pub fn render_csv(&self, rows: &[ResultRow]) -> String {
        let mut header: Vec<String> = self.grid_header();
        header.extend(TRAILING_COLUMNS.iter().map(|s| s.to_string()));
        csv_text(
            &header,
            rows.iter().map(|r| {
                let mut fields: Vec<String> = r
                    .params
                    .iter()
                    .map(|(k, v)| self.param_field(k, v))
                    .collect();
                fields.push(r.case_label.map(|c| c.to_string()).unwrap_or_default());
                fields.push(opt(r.exact_tv));
                fields.push(opt(r.mc_estimate));
                fields.push(opt(r.half_width));
                fields.push(fmt_f64(r.linear_bound));
                fields.push(fmt_f64(r.multiplicative_bound));
                fields.push(fmt_f64(r.overlap_lower_bound));
                fields.push(opt(r.gap));
                fields.push(r.status.label().into());
                fields
            }),
        )
    }

    fn grid_header(&self) -> Vec<String> {
        let mut h: Vec<String> = self.axes.iter().map(|a| a.name.clone()).collect();
        if self.mode == Mode::Random {
            h.push("replicate".into());
        }
        h
    }

    /// Curve data: one line per row with its series label and horizon.
    pub fn render_curves(&self, rows: &[ResultRow]) -> String {
        let header: Vec<String> = [
            "series",
            "n",
            "exact_tv",
            "linear_bound",
            "multiplicative_bound",
            "overlap_lower_bound",
        ]
        .map(String::from)
        .to_vec();
        csv_text(
            &header,
            rows.iter().map(|r| {
                let series: Vec<String> = r
                    .params
                    .iter()
                    .filter(|(k, _)| k != "n")
                    .map(|(k, v)| format!("{k}={v}"))
                    .collect();
                vec![
                    series.join(";"),
                    lookup(&r.params, "n").unwrap_or("").to_string(),
                    opt(r.exact_tv),
                    fmt_f64(r.linear_bound),
                    fmt_f64(r.multiplicative_bound),
                    fmt_f64(r.overlap_lower_bound),
                ]
            }),
        )
    }
}

fn mc_seed(base: u64, index: usize) -> u64 {
    base.wrapping_add(index as u64)
}

fn evaluate(
    cfg: &ExperimentConfig,
    index: usize,
    point: &[(String, String)],
) -> Result<ResultRow, CliError> {
    let n = int(point, "n");
    let mut case_label = None;
    let mut analytic = None;
    let (seq, seq_t) = match cfg.mode {
        Mode::TwoState => {
            let spec = TwoStateSpec::new(
                real(point, "p"),
                real(point, "eps"),
                real(point, "delta"),
                n,
            )?;
            let case = classify_case(&spec);
            case_label = Some(case.case);
            analytic = Some(case.exact_tv);
            build_chain(&spec)
        }
        Mode::Table => {
            let nominal = cfg
                .base_dir
                .join(lookup(point, "nominal").unwrap_or_default());
            let perturbed = cfg
                .base_dir
                .join(lookup(point, "perturbed").unwrap_or_default());
            load_table_pair(&nominal, &perturbed)?
        }
        Mode::Random => {
            let spec = RandomChainSpec {
                states: int(point, "states"),
                horizon: n,
                scale: real(point, "scale"),
                history: lookup(point, "history") == Some("full"),
                zero_prob: real(point, "zero_prob"),
            };
            if spec.states == 0
                || !(0.0..=1.0).contains(&spec.scale)
                || !(0.0..1.0).contains(&spec.zero_prob)
            {
                return Err(ModelError::OutOfRange {
                    name: "random chain parameter",
                    value: spec.scale,
                    range: "states ≥ 1, scale in [0, 1], zero_prob in [0, 1)",
                }
                .into());
            }
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
            rng.set_stream(index as u64);
            random_pair(&mut rng, &spec)
        }
    };

    let opts = ReportOptions {
        exact: cfg.exact,
        enumeration: cfg.enumeration(),
        scope: cfg.scope,
        budget_override: cfg.budget.clone(),
    };
    let mut violations = Vec::new();
    let mut status = RowStatus::Ok;
    let report = match make_report(&seq, &seq_t, n, &opts) {
        Ok(r) => r,
        Err(ModelError::BoundViolation(msg)) => {
            violations.push(msg);
            unchecked_report(&seq, &seq_t, n, &opts)?
        }
        Err(ModelError::EnumerationCap { .. }) if cfg.exact => {
            let mut inexact = opts.clone();
            inexact.exact = false;
            let r = make_report(&seq, &seq_t, n, &inexact)?;
            if let Some(tv) = analytic {
                status = RowStatus::Analytic;
                let with_tv =
                    BoundReport::from_parts(r.budget.clone(), r.overlaps.clone(), Some(tv), None)?;
                violations.extend(with_tv.violations());
                with_tv
            } else {
                status = RowStatus::CapExceeded;
                r
            }
        }
        Err(e) => return Err(e.into()),
    };

    if let (Some(a), Some(e), RowStatus::Ok) = (analytic, report.exact_tv, status) {
        if (a - e).abs() > BOUND_TOL {
            violations.push(format!("closed form {a} differs from enumeration {e}"));
        }
    }
    // the two-state closed form is exact even without enumeration
    let exact_tv = report.exact_tv.or(if cfg.exact { analytic } else { None });

    let (mut mc_estimate, mut half_width) = (None, None);
    if cfg.mc_samples > 0 {
        let est = coupled_sampler(
            &seq,
            &seq_t,
            n,
            cfg.mc_samples,
            mc_seed(cfg.rng_seed, index),
        )?;
        mc_estimate = Some(est.estimate);
        half_width = Some(est.half_width);
        if cfg.mc_check {
            match coupled_diagonal_mass(&seq, &seq_t, n, &cfg.enumeration()) {
                Ok(d) => {
                    if (est.estimate - d).abs() > 3.0 * est.half_width {
                        violations.push(format!(
                            "sampler estimate {} is more than 3 half-widths ({}) from the exact coupled diagonal mass {d}",
                            est.estimate, est.half_width
                        ));
                    }
                }
                Err(ModelError::EnumerationCap { .. }) => {}
                Err(e) => return Err(e.into()),
            }
        }
    }

    let gap = exact_tv.map(|tv| report.multiplicative_bound - tv);
    Ok(ResultRow {
        params: point.to_vec(),
        case_label,
        exact_tv,
        mc_estimate,
        half_width,
        linear_bound: report.linear_bound,
        multiplicative_bound: report.multiplicative_bound,
        overlap_lower_bound: report.overlap_lower_bound,
        gap,
        status,
        violations,
    })
}

/// Recomputes a report without enforcing its inequalities, so a violating
/// row can still be shown.
fn unchecked_report(
    seq: &KernelSequence,
    seq_t: &KernelSequence,
    n: usize,
    opts: &ReportOptions,
) -> Result<BoundReport, CliError> {
    let (tight, overlaps) = crate::bounds::step_constants(seq, seq_t, n, opts.scope)?;
    let constants = match &opts.budget_override {
        Some(list) if !list.is_empty() => (0..=n).map(|k| list[k.min(list.len() - 1)]).collect(),
        _ => tight,
    };
    let (tv, meet) = if opts.exact {
        let p = crate::product::ionescu_tulcea(seq, n, &opts.enumeration)?;
        let p_t = crate::product::ionescu_tulcea(seq_t, n, &opts.enumeration)?;
        (Some(p.tv_distance(&p_t)?), Some(p.meet_mass(&p_t)?))
    } else {
        (None, None)
    };
    Ok(BoundReport::from_parts(
        PerturbationBudget::new(constants)?,
        overlaps,
        tv,
        meet,
    )?)
}

/// Evaluates every grid point. Rows come back in grid order regardless of
/// how the work was scheduled.
pub fn evaluate_grid(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>, CliError> {
    let grid = cfg.grid();
    grid.par_iter()
        .enumerate()
        .map(|(i, p)| evaluate(cfg, i, p).map_err(|e| annotate(e, p)))
        .collect()
}

fn annotate(e: CliError, point: &[(String, String)]) -> CliError {
    match e {
        CliError::Model(source) => CliError::GridPoint {
            point: describe(point),
            source,
        },
        other => other,
    }
}

fn describe(point: &[(String, String)]) -> String {
    point
        .iter()
        .map(|(k, v)| format!("{k}={v}"))
        .collect::<Vec<_>>()
        .join(" ")
}

fn collect_violations(rows: &[ResultRow]) -> Vec<String> {
    rows.iter()
        .flat_map(|r| {
            let d = describe(&r.params);
            r.violations.iter().map(move |v| format!("[{d}] {v}"))
        })
        .collect()
}

/// Runs the grid, checks every row and writes the CSV (and curves, when
/// configured). Returns the CSV text.
pub fn run(cfg: &ExperimentConfig) -> Result<String, CliError> {
    let rows = evaluate_grid(cfg)?;
    let violations = collect_violations(&rows);
    if !violations.is_empty() {
        return Err(CliError::Violations(violations));
    }
    let csv = cfg.render_csv(&rows);
    if let Some(path) = &cfg.output {
        write(path, &csv)?;
    }
    if let Some(path) = &cfg.curves {
        write(path, &cfg.render_curves(&rows))?;
    }
    Ok(csv)
}

/// Assert-only mode: one line per row, error if any row fails.
pub fn verify(cfg: &ExperimentConfig) -> Result<String, CliError> {
    let rows = evaluate_grid(cfg)?;
    let mut out = String::new();
    for r in &rows {
        let verdict = if r.violations.is_empty() {
            "PASS"
        } else {
            "FAIL"
        };
        let _ = writeln!(out, "{verdict} {}", describe(&r.params));
    }
    let violations = collect_violations(&rows);
    if violations.is_empty() {
        Ok(out)
    } else {
        Err(CliError::Violations(violations))
    }
}

/// Re-checks the inequalities recorded in a previously written CSV report.
pub fn verify_report(text: &str) -> Result<usize, CliError> {
    let report_err = |line: u64, msg: String| CliError::Report {
        line: line as usize,
        msg,
    };
    let mut reader = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| report_err(1, e.to_string()))?
        .clone();
    if header.is_empty() {
        return Err(report_err(1, "empty report".into()));
    }
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| report_err(1, format!("missing column `{name}`")))
    };
    let (c_tv, c_lin, c_mult, c_gap) = (
        col("exact_tv")?,
        col("linear_bound")?,
        col("multiplicative_bound")?,
        col("gap")?,
    );
    let mut violations = Vec::new();
    let mut checked = 0;
    for record in reader.records() {
        let fields = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            report_err(line, e.to_string())
        })?;
        let line = fields.position().map_or(0, |p| p.line());
        let num = |c: usize| -> Result<Option<f64>, CliError> {
            let f = fields[c].trim();
            let line = line as usize;
            if f.is_empty() {
                return Ok(None);
            }
            f.parse::<f64>().map(Some).map_err(|_| CliError::Report {
                line,
                msg: format!("`{f}` is not a number"),
            })
        };
        let lin = num(c_lin)?.ok_or_else(|| report_err(line, "linear_bound is blank".into()))?;
        let mult =
            num(c_mult)?.ok_or_else(|| report_err(line, "multiplicative_bound is blank".into()))?;
        if !(0.0..=2.0 + BOUND_TOL).contains(&mult) {
            violations.push(format!(
                "line {line}: multiplicative bound {mult} outside [0, 2]"
            ));
        }
        if mult > lin + BOUND_TOL {
            violations.push(format!(
                "line {line}: multiplicative bound {mult} exceeds linear bound {lin}"
            ));
        }
        if let Some(tv) = num(c_tv)? {
            if tv > mult + BOUND_TOL {
                violations.push(format!(
                    "line {line}: exact distance {tv} exceeds multiplicative bound {mult}"
                ));
            }
            if tv > lin + BOUND_TOL {
                violations.push(format!(
                    "line {line}: exact distance {tv} exceeds linear bound {lin}"
                ));
            }
            match num(c_gap)? {
                Some(g) if (g - (mult - tv)).abs() > BOUND_TOL => violations.push(format!(
                    "line {line}: gap {g} is not multiplicative bound minus exact distance"
                )),
                Some(g) if g < -BOUND_TOL => {
                    violations.push(format!("line {line}: negative gap {g}"))
                }
                None => violations.push(format!(
                    "line {line}: gap is blank although exact_tv is present"
                )),
                _ => {}
            }
        }
        checked += 1;
    }
    if violations.is_empty() {
        Ok(checked)
    } else {
        Err(CliError::Violations(violations))
    }
}

/// Human-readable or CSV report for a single two-state instance.
pub fn twostate_report(spec: &TwoStateSpec, csv: bool) -> String {
    let r = classify_case(spec);
    if csv {
        format!(
            "p,eps,delta,n,case_label,f_n,exact_tv,bound,gap\n{},{},{},{},{},{},{},{},{}\n",
            fmt_f64(spec.p),
            fmt_f64(spec.eps),
            fmt_f64(spec.delta),
            spec.n,
            r.case,
            fmt_f64(r.f_n),
            fmt_f64(r.exact_tv),
            fmt_f64(r.bound),
            fmt_f64(r.gap()),
        )
    } else {
        format!(
            "p = {}, eps = {}, delta = {}, n = {}\ncase      {}\nf_n       {}\nexact_tv  {}\nbound     {}\ngap       {}\n",
            spec.p,
            spec.eps,
            spec.delta,
            spec.n,
            r.case,
            r.f_n,
            r.exact_tv,
            r.bound,
            r.gap()
        )
    }
}

fn table_err(file: &str, line: usize, msg: impl Into<String>) -> CliError {
    CliError::Table {
        file: file.to_string(),
        line,
        msg: msg.into(),
    }
}

fn parse_row(file: &str, line: usize, text: &str, k: usize) -> Result<Vec<f64>, CliError> {
    let row = text
        .split_whitespace()
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| table_err(file, line, format!("`{t}` is not a number")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    if row.len() != k {
        return Err(table_err(
            file,
            line,
            format!("expected {k} probabilities, found {}", row.len()),
        ));
    }
    Ok(row)
}

fn row_measure(
    file: &str,
    line: usize,
    space: &AtomSpace,
    row: Vec<f64>,
) -> Result<ProbMeasure, CliError> {
    let m = SignedMeasure::from_weights(space, row)
        .map_err(|e| table_err(file, line, e.to_string()))?;
    ProbMeasure::new(m).map_err(|e| match e {
        ModelError::MassOutOfTolerance { mass } => table_err(
            file,
            line,
            format!("row sums to {mass}, outside [1 - 1e-9, 1 + 1e-9]"),
        ),
        other => table_err(file, line, other.to_string()),
    })
}

/// Parses a kernel table; `file` names the source in diagnostics.
pub fn parse_table_chain(text: &str, file: &str) -> Result<KernelSequence, CliError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty())
        .peekable();

    let (line, first) = lines
        .next()
        .ok_or_else(|| table_err(file, 1, "empty table file"))?;
    let k: usize = match first.split_whitespace().collect::<Vec<_>>().as_slice() {
        ["states", k] => k
            .parse()
            .ok()
            .filter(|&k| k >= 1)
            .ok_or_else(|| table_err(file, line, "state count must be a positive integer"))?,
        _ => return Err(table_err(file, line, "expected `states <k>`")),
    };
    let space = AtomSpace::range(k)?;

    let (line, init) = lines
        .next()
        .ok_or_else(|| table_err(file, line, "missing `initial` line"))?;
    let rest = init
        .strip_prefix("initial")
        .ok_or_else(|| table_err(file, line, "expected `initial <k probabilities>`"))?;
    let initial = row_measure(file, line, &space, parse_row(file, line, rest, k)?)?;

    let mut steps = Vec::new();
    while let Some((line, head)) = lines.next() {
        let parts: Vec<&str> = head.split_whitespace().collect();
        let expected = steps.len() + 1;
        let (index, kind) = match parts.as_slice() {
            ["step", i, kind] => (
                i.parse::<usize>()
                    .map_err(|_| table_err(file, line, format!("bad step index `{i}`")))?,
                *kind,
            ),
            _ => return Err(table_err(file, line, "expected `step <i> markov|full`")),
        };
        if index != expected {
            return Err(table_err(
                file,
                line,
                format!("step {index} out of order, expected step {expected}"),
            ));
        }
        let (source, full) = match kind {
            "markov" => (space.clone(), false),
            "full" => (AtomSpace::product(&vec![space.clone(); index])?, true),
            _ => {
                return Err(table_err(
                    file,
                    line,
                    format!("step {index}: unknown kind `{kind}`"),
                ))
            }
        };
        let mut rows = Vec::with_capacity(source.len());
        for r in 0..source.len() {
            let (l, text) = lines.next().ok_or_else(|| {
                table_err(
                    file,
                    line,
                    format!("step {index}: expected {} rows, found {r}", source.len()),
                )
            })?;
            if text.starts_with("step") {
                return Err(table_err(
                    file,
                    l,
                    format!("step {index}: expected {} rows, found {r}", source.len()),
                ));
            }
            rows.push(row_measure(file, l, &space, parse_row(file, l, text, k)?)?);
        }
        let kernel = FiniteKernel::new(&source, &space, rows)?;
        steps.push(if full {
            StepKernel::History(kernel)
        } else {
            StepKernel::Markov(kernel)
        });
    }
    KernelSequence::new(initial, steps).map_err(|e| table_err(file, 0, e.to_string()))
}

pub fn load_table_chain(path: &Path) -> Result<KernelSequence, CliError> {
    parse_table_chain(&read(path)?, &path.display().to_string())
}

/// Nominal and perturbed tables, checked for matching shape.
pub fn load_table_pair(
    nominal: &Path,
    perturbed: &Path,
) -> Result<(KernelSequence, KernelSequence), CliError> {
    let a = load_table_chain(nominal)?;
    let b = load_table_chain(perturbed)?;
    if a.spaces()[0] != b.spaces()[0] {
        return Err(table_err(
            &perturbed.display().to_string(),
            1,
            "state count differs from the nominal table",
        ));
    }
    if a.horizon() != b.horizon() {
        return Err(table_err(
            &perturbed.display().to_string(),
            0,
            format!(
                "step {}: nominal table has {} steps, perturbed has {}",
                a.horizon().min(b.horizon()) + 1,
                a.horizon(),
                b.horizon()
            ),
        ));
    }
    Ok((a, b))
}

/// Serializes a sequence on `{0, …, k − 1}` in the table format. Numbers use
/// the shortest representation that parses back to the same value.
pub fn write_table_chain(seq: &KernelSequence) -> String {
    let k = seq.spaces()[0].len();
    let row = |m: &ProbMeasure| {
        m.weights()
            .iter()
            .map(|w| w.to_string())
            .collect::<Vec<_>>()
            .join(" ")
    };
    let mut out = format!("states {k}\ninitial {}\n", row(seq.initial()));
    for (i, step) in seq.steps().iter().enumerate() {
        let kind = if step.is_markov() { "markov" } else { "full" };
        let _ = writeln!(out, "step {} {kind}", i + 1);
        for r in step.kernel().rows() {
            out.push_str(&row(r));
            out.push('\n');
        }
    }
    out
}
