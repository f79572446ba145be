//! Configuration documents, field snapshots and report files.
//!
//! Configs are TOML with the sections `[model]`, `[grid]`, `[solve]`,
//! `[continuation]`, `[analysis]` and `[initial]`; every key is optional
//! and unknown keys are rejected. Snapshots are versioned text files with a
//! `#` header and one tab-separated row per node. Report tables are
//! tab-delimited with a single `#` header line.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{
    holder_seminorm, segregation_report, BoundReport, ComplementarityReport, DecayFit, FaberKrahnRecord,
    InequalityKind, IsolationOutcome, IsolationReport, SegregationReport, SurvivorReport,
};
use crate::grid::{Grid, GridError, ScalarField};
use crate::model::{validate_uniform, ModelError, ModelParams};
use crate::solver::{ContinuationTrace, FieldSet, SolveReport, SolveSettings};

pub const SNAPSHOT_VERSION: &str = "strongcomp-snapshot v1";

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File { path: PathBuf, source: std::io::Error },
    #[error("config error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("config error: {0}")]
    Config(String),
    #[error("bad override `{0}`: {1}")]
    Override(String, String),
    #[error("structural error: {0}")]
    Structure(#[from] ModelError),
    #[error("snapshot version mismatch: expected `{SNAPSHOT_VERSION}`, found `{0}`")]
    Version(String),
    #[error("snapshot header: {0}")]
    Header(String),
    #[error("row count mismatch: header implies {expected} rows, found {got}")]
    RowCount { expected: usize, got: usize },
    #[error("column count mismatch at line {line}: expected {expected}, found {got}")]
    ColumnCount { line: usize, expected: usize, got: usize },
    #[error("bad number at line {line}: `{text}`")]
    Number { line: usize, text: String },
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn read_file(path: &Path) -> Result<String, IoError> {
    fs::read_to_string(path).map_err(|source| IoError::File { path: path.to_path_buf(), source })
}

fn write_file(path: &Path, text: &str) -> Result<(), IoError> {
    fs::write(path, text).map_err(|source| IoError::File { path: path.to_path_buf(), source })
}

// ---------------------------------------------------------------- config

/// A per-group coefficient given once for all groups or as a list.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum PerGroup {
    All(f64),
    Each(Vec<f64>),
}

impl PerGroup {
    fn len(&self) -> Option<usize> {
        match self {
            PerGroup::All(_) => None,
            PerGroup::Each(v) => Some(v.len()),
        }
    }

    fn expand(&self, n: usize, key: &str) -> Result<Vec<f64>, IoError> {
        match self {
            PerGroup::All(v) => Ok(vec![*v; n]),
            PerGroup::Each(v) if v.len() == n => Ok(v.clone()),
            PerGroup::Each(v) => Err(IoError::Config(format!("model.{key} has {} entries, expected {n}", v.len()))),
        }
    }
}

/// The interaction coefficients: one off-diagonal value or a full matrix.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum InteractionSpec {
    All(f64),
    Matrix(Vec<Vec<f64>>),
}

/// `[model]`. Defaults: `n = 1`, `D = lambda = mu = d = k = a = 1`,
/// `omega = 0.2`, `beta = 0`, `delta = 0.2`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub n: Option<usize>,
    #[serde(rename = "D", default = "one")]
    pub prey_diffusion: f64,
    #[serde(rename = "lambda", default = "one")]
    pub prey_growth: f64,
    #[serde(rename = "mu", default = "one")]
    pub prey_limitation: f64,
    #[serde(rename = "d", default = "one_each")]
    pub diffusion: PerGroup,
    #[serde(rename = "omega", default = "default_mortality")]
    pub mortality: PerGroup,
    #[serde(rename = "k", default = "one_each")]
    pub conversion: PerGroup,
    #[serde(rename = "a", default = "default_interaction")]
    pub interaction: InteractionSpec,
    #[serde(rename = "beta", default)]
    pub competition: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
}

fn one() -> f64 {
    1.0
}
fn one_each() -> PerGroup {
    PerGroup::All(1.0)
}
fn default_mortality() -> PerGroup {
    PerGroup::All(0.2)
}
fn default_interaction() -> InteractionSpec {
    InteractionSpec::All(1.0)
}
fn default_delta() -> f64 {
    0.2
}

impl Default for ModelSection {
    fn default() -> Self {
        toml::from_str("").expect("empty model section")
    }
}

impl ModelSection {
    pub fn resolve(&self) -> Result<ModelParams, IoError> {
        let lens = [
            self.diffusion.len(),
            self.mortality.len(),
            self.conversion.len(),
            match &self.interaction {
                InteractionSpec::Matrix(m) => Some(m.len()),
                InteractionSpec::All(_) => None,
            },
        ];
        let n = match (self.n, lens.iter().flatten().next()) {
            (Some(n), _) => n,
            (None, Some(&n)) => n,
            (None, None) => 1,
        };
        if n == 0 {
            return Err(IoError::Config("model.n must be at least 1".into()));
        }
        let interaction = match &self.interaction {
            InteractionSpec::All(a) => {
                (0..n).map(|i| (0..n).map(|j| if i == j { 0.0 } else { *a }).collect()).collect()
            }
            InteractionSpec::Matrix(m) => m.clone(),
        };
        let params = ModelParams {
            prey_diffusion: self.prey_diffusion,
            prey_growth: self.prey_growth,
            prey_limitation: self.prey_limitation,
            diffusion: self.diffusion.expand(n, "d")?,
            mortality: self.mortality.expand(n, "omega")?,
            conversion: self.conversion.expand(n, "k")?,
            interaction,
            competition: self.competition,
            delta: self.delta,
        };
        params.check_structure()?;
        Ok(params)
    }
}

/// `[grid]`. Defaults to the unit interval with 201 nodes.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub dim: Option<usize>,
    pub extents: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Default for GridSection {
    fn default() -> Self {
        Self { dim: None, extents: vec![1.0], counts: vec![201] }
    }
}

impl GridSection {
    pub fn build(&self) -> Result<Grid, IoError> {
        if let Some(d) = self.dim {
            if d != self.extents.len() || d != self.counts.len() {
                return Err(IoError::Config(format!(
                    "grid.dim = {d} but {} extents and {} counts given",
                    self.extents.len(),
                    self.counts.len()
                )));
            }
        }
        Ok(Grid::new(&self.extents, &self.counts)?)
    }
}

/// `[continuation]`: an explicit `betas` list or a geometric schedule
/// `start·factor^k`, `k < count`. Empty means the single `model.beta`.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ContinuationSection {
    pub betas: Option<Vec<f64>>,
    pub start: Option<f64>,
    pub factor: Option<f64>,
    pub count: Option<usize>,
}

impl ContinuationSection {
    pub fn schedule(&self, model_beta: f64) -> Result<Vec<f64>, IoError> {
        match (&self.betas, self.start, self.factor, self.count) {
            (Some(b), None, None, None) => Ok(b.clone()),
            (None, Some(start), Some(factor), Some(count)) => {
                Ok((0..count).map(|k| start * factor.powi(k as i32)).collect())
            }
            (None, None, None, None) => Ok(vec![model_beta]),
            _ => Err(IoError::Config(
                "continuation needs either `betas` or all of `start`, `factor`, `count`".into(),
            )),
        }
    }
}

/// `[analysis]`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisSection {
    /// Hölder exponent.
    pub alpha: f64,
    /// Support threshold; `0.01·max_i ‖w_i‖_sup` when absent.
    pub threshold: Option<f64>,
    /// Decay-fit center; the peak of `component` at the first β when absent.
    pub center: Option<Vec<f64>>,
    /// Decay-fit radius; `0.9·min extent` when absent.
    pub rho: Option<f64>,
    /// Group whose territory the decay fit probes.
    pub component: usize,
    /// Number of complementarity test functions.
    pub n_test: usize,
    pub max_pairs: usize,
    pub seed: u64,
    /// Snapshot read by `analyze` and `eig`.
    pub snapshot: Option<PathBuf>,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            threshold: None,
            center: None,
            rho: None,
            component: 0,
            n_test: 20,
            max_pairs: 250_000,
            seed: 0,
            snapshot: None,
        }
    }
}

/// `[initial]`: the state marching starts from.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialSection {
    Constant {
        #[serde(default = "one")]
        u: f64,
        #[serde(default = "default_w0")]
        w: PerGroup,
    },
    /// `w_i = amplitude_i · exp(−|x − center_i|² / width²)`.
    Bumps {
        #[serde(default = "one")]
        u: f64,
        amplitudes: Vec<f64>,
        centers: Vec<Vec<f64>>,
        #[serde(default = "one")]
        width: f64,
    },
    /// Independent uniform nodal values in `[0, u_max)` and `[0, w_max)`.
    Random {
        #[serde(default = "one")]
        u_max: f64,
        #[serde(default = "half")]
        w_max: f64,
        #[serde(default)]
        seed: u64,
    },
}

fn default_w0() -> PerGroup {
    PerGroup::All(0.1)
}
fn half() -> f64 {
    0.5
}

impl Default for InitialSection {
    fn default() -> Self {
        InitialSection::Constant { u: 1.0, w: default_w0() }
    }
}

impl InitialSection {
    pub fn build(&self, grid: &Grid, n: usize) -> Result<FieldSet, IoError> {
        let state = match self {
            InitialSection::Constant { u, w } => FieldSet::constant(*grid, *u, &w.expand(n, "initial.w")?),
            InitialSection::Bumps { u, amplitudes, centers, width } => {
                if amplitudes.len() != n || centers.len() != n {
                    return Err(IoError::Config(format!("initial bumps need {n} amplitudes and centers")));
                }
                if centers.iter().any(|c| c.len() != grid.dim()) {
                    return Err(IoError::Config(format!("initial bump centers must have {} coordinates", grid.dim())));
                }
                let w = amplitudes
                    .iter()
                    .zip(centers)
                    .map(|(a, c)| {
                        ScalarField::from_fn(*grid, |x| {
                            let r2: f64 = c.iter().zip(x).map(|(ci, xi)| (xi - ci).powi(2)).sum();
                            a * (-r2 / (width * width)).exp()
                        })
                    })
                    .collect();
                FieldSet { u: ScalarField::constant(*grid, *u), w, params_hash: 0 }
            }
            InitialSection::Random { u_max, w_max, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                let mut field = |max: f64| ScalarField {
                    grid: *grid,
                    values: (0..grid.len()).map(|_| max * rng.gen::<f64>()).collect(),
                };
                let u = field(*u_max);
                let w = (0..n).map(|_| field(*w_max)).collect();
                FieldSet { u, w, params_hash: 0 }
            }
        };
        if !(state.min_value() >= 0.0) {
            return Err(IoError::Config("initial state must be nonnegative".into()));
        }
        Ok(state)
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDocument {
    #[serde(default)]
    model: ModelSection,
    #[serde(default)]
    grid: GridSection,
    #[serde(default)]
    solve: SolveSettings,
    #[serde(default)]
    continuation: ContinuationSection,
    #[serde(default)]
    analysis: AnalysisSection,
    #[serde(default)]
    initial: InitialSection,
}

/// A fully resolved run configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigDocument {
    pub model: ModelParams,
    pub grid: Grid,
    pub solve: SolveSettings,
    pub schedule: Vec<f64>,
    pub analysis: AnalysisSection,
    pub initial: InitialSection,
    /// Admissibility violations; the run proceeds but results carry no
    /// guarantee.
    pub warnings: Vec<String>,
}

impl ConfigDocument {
    pub fn initial_state(&self) -> Result<FieldSet, IoError> {
        self.initial.build(&self.grid, self.model.n_groups())
    }
}

const SECTIONS: &[(&str, &[&str])] = &[
    ("model", &["n", "D", "lambda", "mu", "d", "omega", "k", "a", "beta", "delta"]),
    ("grid", &["dim", "extents", "counts"]),
    ("solve", &["tau", "tol_residual", "tol_update", "max_steps", "newton", "linear_tol"]),
    ("continuation", &["betas", "start", "factor", "count"]),
    (
        "analysis",
        &["alpha", "threshold", "center", "rho", "component", "n_test", "max_pairs", "seed", "snapshot"],
    ),
    ("initial", &["kind", "u", "w", "amplitudes", "centers", "width", "u_max", "w_max", "seed"]),
];

fn parse_error(text: &str, err: toml::de::Error) -> IoError {
    let offset = err.span().map(|s| s.start).unwrap_or(0).min(text.len());
    let before = &text[..offset];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    IoError::Parse { line, column, message: err.message().trim().to_string() }
}

/// Resolves `section.key` or a bare key that names exactly one known key.
fn resolve_key(key: &str) -> Result<(&'static str, String), String> {
    if let Some((section, name)) = key.split_once('.') {
        let (sec, keys) =
            SECTIONS.iter().find(|(s, _)| *s == section).ok_or_else(|| format!("unknown section `{section}`"))?;
        if !keys.contains(&name) {
            return Err(format!("unknown key `{name}` in section `{section}`"));
        }
        return Ok((sec, name.to_string()));
    }
    let hits: Vec<&str> = SECTIONS.iter().filter(|(_, keys)| keys.contains(&key)).map(|(s, _)| *s).collect();
    match hits.as_slice() {
        [one] => Ok((one, key.to_string())),
        [] => Err(format!("unknown key `{key}`")),
        many => Err(format!("ambiguous key `{key}` (in {}); qualify it with a section", many.join(", "))),
    }
}

fn override_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

/// Applies `key=value` overrides to a parsed document.
pub fn apply_overrides(table: &mut toml::Table, overrides: &[String]) -> Result<(), IoError> {
    for item in overrides {
        let (key, raw) = item
            .split_once('=')
            .ok_or_else(|| IoError::Override(item.clone(), "expected key=value".into()))?;
        let (section, name) = resolve_key(key.trim()).map_err(|m| IoError::Override(item.clone(), m))?;
        let entry = table.entry(section).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        let toml::Value::Table(sec) = entry else {
            return Err(IoError::Override(item.clone(), format!("`{section}` is not a section")));
        };
        sec.insert(name, override_value(raw.trim()));
    }
    Ok(())
}

/// Parses a config document, applying `overrides` before validation.
pub fn parse_config(text: &str, overrides: &[String]) -> Result<ConfigDocument, IoError> {
    let mut table: toml::Table = toml::from_str(text).map_err(|e| parse_error(text, e))?;
    apply_overrides(&mut table, overrides)?;
    // Reserialize so that errors point into the effective document.
    let effective = toml::to_string(&table).map_err(|e| IoError::Config(e.to_string()))?;
    let source = if overrides.is_empty() { text } else { effective.as_str() };
    let raw: RawDocument = toml::from_str(source).map_err(|e| parse_error(source, e))?;
    let model = raw.model.resolve()?;
    let grid = raw.grid.build()?;
    raw.solve.validate().map_err(|e| IoError::Config(e.to_string()))?;
    let schedule = raw.continuation.schedule(model.competition)?;
    if schedule.is_empty() {
        return Err(IoError::Config("continuation schedule is empty".into()));
    }
    let a = &raw.analysis;
    if !(a.alpha > 0.0 && a.alpha < 1.0) {
        return Err(IoError::Config(format!("analysis.alpha must lie in (0,1), got {}", a.alpha)));
    }
    if a.component >= model.n_groups() {
        return Err(IoError::Config(format!("analysis.component {} out of range", a.component)));
    }
    let warnings = validate_uniform(&model)?.violations.into_iter().map(|v| v.message).collect();
    Ok(ConfigDocument {
        model,
        grid,
        solve: raw.solve,
        schedule,
        analysis: raw.analysis,
        initial: raw.initial,
        warnings,
    })
}

pub fn load_config(path: &Path, overrides: &[String]) -> Result<ConfigDocument, IoError> {
    parse_config(&read_file(path)?, overrides)
}

// -------------------------------------------------------------- snapshot

/// Run metadata stored in a snapshot header.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotMeta {
    pub beta: f64,
    pub residual: f64,
    /// Seconds since the Unix epoch, or any label the writer chose.
    pub timestamp: String,
    pub params: Option<ModelParams>,
}

impl SnapshotMeta {
    /// Metadata stamped with `SOURCE_DATE_EPOCH` when set (reproducible
    /// builds), otherwise the current time.
    pub fn now(beta: f64, residual: f64, params: Option<ModelParams>) -> Self {
        let timestamp = std::env::var("SOURCE_DATE_EPOCH").unwrap_or_else(|_| {
            std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs().to_string())
                .unwrap_or_else(|_| "0".into())
        });
        Self { beta, residual, timestamp, params }
    }
}

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn join(values: impl IntoIterator<Item = String>) -> String {
    values.into_iter().collect::<Vec<_>>().join("\t")
}

pub fn snapshot_to_string(state: &FieldSet, meta: &SnapshotMeta) -> Result<String, IoError> {
    let grid = state.grid();
    let dim = grid.dim();
    let mut out = String::new();
    let params = match &meta.params {
        Some(p) => serde_json::to_string(p)?,
        None => "null".into(),
    };
    let mut columns: Vec<String> = ["x", "y"][..dim].iter().map(|s| s.to_string()).collect();
    columns.push("u".into());
    columns.extend((1..=state.n_groups()).map(|i| format!("w{i}")));
    let _ = writeln!(out, "# {SNAPSHOT_VERSION}");
    let _ = writeln!(out, "# dim {dim}");
    let _ = writeln!(out, "# extents {}", join(grid.extents().iter().map(|v| num(*v))));
    let _ = writeln!(out, "# counts {}", join(grid.counts()[..dim].iter().map(|v| v.to_string())));
    let _ = writeln!(out, "# components {}", state.n_groups());
    let _ = writeln!(out, "# beta {}", num(meta.beta));
    let _ = writeln!(out, "# residual {}", num(meta.residual));
    let _ = writeln!(out, "# timestamp {}", meta.timestamp);
    let _ = writeln!(out, "# params {params}");
    let _ = writeln!(out, "# columns {}", columns.join("\t"));
    for p in 0..grid.len() {
        let x = grid.coords(p);
        let row = x[..dim]
            .iter()
            .copied()
            .chain(std::iter::once(state.u.values[p]))
            .chain(state.w.iter().map(|f| f.values[p]))
            .map(num);
        out.push_str(&join(row));
        out.push('\n');
    }
    Ok(out)
}

pub fn write_snapshot(state: &FieldSet, meta: &SnapshotMeta, path: &Path) -> Result<(), IoError> {
    write_file(path, &snapshot_to_string(state, meta)?)
}

fn header_value<'a>(lines: &[(usize, &'a str)], key: &str) -> Result<&'a str, IoError> {
    lines
        .iter()
        .find_map(|(_, l)| l.strip_prefix(key).and_then(|rest| rest.strip_prefix(' ')))
        .ok_or_else(|| IoError::Header(format!("missing `{key}` (truncated file?)")))
}

fn parse_num<T: std::str::FromStr>(line: usize, text: &str) -> Result<T, IoError> {
    text.trim().parse().map_err(|_| IoError::Number { line, text: text.to_string() })
}

/// Parses a snapshot; the grid is rebuilt from the header.
pub fn snapshot_from_str(text: &str) -> Result<(FieldSet, SnapshotMeta), IoError> {
    let mut header = Vec::new();
    let mut rows = Vec::new();
    for (k, line) in text.lines().enumerate() {
        if let Some(h) = line.strip_prefix('#') {
            header.push((k + 1, h.trim()));
        } else if !line.trim().is_empty() {
            rows.push((k + 1, line));
        }
    }
    let version = header.first().map(|(_, h)| *h).unwrap_or("");
    if version != SNAPSHOT_VERSION {
        return Err(IoError::Version(version.to_string()));
    }
    let dim: usize = parse_num(header[0].0, header_value(&header, "dim")?)?;
    let extents = header_value(&header, "extents")?
        .split('\t')
        .map(|t| parse_num(0, t))
        .collect::<Result<Vec<f64>, _>>()?;
    let counts = header_value(&header, "counts")?
        .split('\t')
        .map(|t| parse_num(0, t))
        .collect::<Result<Vec<usize>, _>>()?;
    if extents.len() != dim || counts.len() != dim {
        return Err(IoError::Header(format!("dim {dim} disagrees with extents/counts")));
    }
    let grid = Grid::new(&extents, &counts)?;
    let n: usize = parse_num(0, header_value(&header, "components")?)?;
    let beta = parse_num(0, header_value(&header, "beta")?)?;
    let residual = parse_num(0, header_value(&header, "residual")?)?;
    let timestamp = header_value(&header, "timestamp")?.to_string();
    let params: Option<ModelParams> = serde_json::from_str(header_value(&header, "params")?)?;
    let columns = header_value(&header, "columns")?.split('\t').count();
    if columns != dim + 1 + n {
        return Err(IoError::Header(format!("{columns} columns for dim {dim} and {n} components")));
    }
    if rows.len() != grid.len() {
        return Err(IoError::RowCount { expected: grid.len(), got: rows.len() });
    }
    let mut u = vec![0.0; grid.len()];
    let mut w = vec![vec![0.0; grid.len()]; n];
    for (p, (line, row)) in rows.iter().enumerate() {
        let cells: Vec<&str> = row.split('\t').collect();
        if cells.len() != columns {
            return Err(IoError::ColumnCount { line: *line, expected: columns, got: cells.len() });
        }
        u[p] = parse_num(*line, cells[dim])?;
        for (i, field) in w.iter_mut().enumerate() {
            field[p] = parse_num(*line, cells[dim + 1 + i])?;
        }
    }
    let hash = params.as_ref().map_or(0, ModelParams::fingerprint);
    let state = FieldSet {
        u: ScalarField { grid, values: u },
        w: w.into_iter().map(|values| ScalarField { grid, values }).collect(),
        params_hash: hash,
    };
    Ok((state, SnapshotMeta { beta, residual, timestamp, params }))
}

pub fn read_snapshot(path: &Path) -> Result<(FieldSet, SnapshotMeta), IoError> {
    snapshot_from_str(&read_file(path)?)
}

// --------------------------------------------------------------- reports

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    /// Tab-delimited rows under one `#` header line.
    Table,
    /// Pretty-printed JSON.
    Structured,
}

impl ReportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ReportFormat::Table => "tsv",
            ReportFormat::Structured => "json",
        }
    }
}

/// Column names and rows of a report table.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(columns: &[&str]) -> Self {
        Self { columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    pub fn render(&self) -> String {
        let mut out = format!("# {}\n", self.columns.join("\t"));
        for row in &self.rows {
            out.push_str(&row.join("\t"));
            out.push('\n');
        }
        out
    }
}

fn cell(v: f64) -> String {
    format!("{v:.10e}")
}

/// Reports that can be written in both formats.
pub trait Report: Serialize {
    fn table(&self) -> Table;
}

pub fn render_report<R: Report + ?Sized>(report: &R, format: ReportFormat) -> Result<String, IoError> {
    Ok(match format {
        ReportFormat::Table => report.table().render(),
        ReportFormat::Structured => serde_json::to_string_pretty(report)? + "\n",
    })
}

pub fn write_report<R: Report + ?Sized>(report: &R, path: &Path, format: ReportFormat) -> Result<(), IoError> {
    write_file(path, &render_report(report, format)?)
}

impl Report for BoundReport {
    fn table(&self) -> Table {
        let mut t = Table::new(&["bound", "value", "cap", "pass"]);
        let rows = [
            ("u_min", self.u_min, 0.0, self.u_min >= 0.0),
            ("w_min", self.w_min, 0.0, self.w_min >= 0.0),
            ("u_max", self.u_max, self.u_cap, self.u_pass),
            ("s_max", self.s_max, self.s_cap, self.s_pass),
            ("wsum_max", self.wsum_max, self.wsum_cap, self.wsum_pass),
        ];
        for (name, v, cap, pass) in rows {
            t.push(vec![name.into(), cell(v), cell(cap), pass.to_string()]);
        }
        t
    }
}

impl Report for SegregationReport {
    fn table(&self) -> Table {
        let mut t = Table::new(&["i", "j", "overlap", "scaled_overlap", "product_sup", "mass_i", "mass_j"]);
        let n = self.overlap.len();
        for i in 0..n {
            for j in (i + 1)..n {
                t.push(vec![
                    (i + 1).to_string(),
                    (j + 1).to_string(),
                    cell(self.overlap[i][j]),
                    cell(self.scaled_overlap[i][j]),
                    cell(self.product_sup[i][j]),
                    cell(self.interaction_mass[i]),
                    cell(self.interaction_mass[j]),
                ]);
            }
        }
        t
    }
}

impl Report for [FaberKrahnRecord] {
    fn table(&self) -> Table {
        let mut t = Table::new(&["component", "support_measure", "lambda1", "cap", "pass"]);
        for r in self {
            t.push(vec![
                (r.component + 1).to_string(),
                cell(r.support_measure),
                cell(r.lambda1),
                cell(r.cap),
                r.pass.to_string(),
            ]);
        }
        t
    }
}

impl Report for ComplementarityReport {
    fn table(&self) -> Table {
        let mut t = Table::new(&["component", "test", "kind", "lhs", "rhs", "margin", "tol"]);
        for e in &self.entries {
            let kind = match e.kind {
                InequalityKind::Subsolution => "subsolution",
                InequalityKind::Difference => "difference",
            };
            t.push(vec![
                (e.component + 1).to_string(),
                e.test_index.to_string(),
                kind.into(),
                cell(e.lhs),
                cell(e.rhs),
                cell(e.margin),
                cell(e.tol),
            ]);
        }
        t
    }
}

impl Report for SurvivorReport {
    fn table(&self) -> Table {
        let mut t = Table::new(&["component", "sup_norm", "survivor", "threshold", "nhat_weyl"]);
        for (i, s) in self.sup_norms.iter().enumerate() {
            t.push(vec![
                (i + 1).to_string(),
                cell(*s),
                self.survivors.contains(&i).to_string(),
                cell(self.threshold),
                cell(self.nhat_weyl),
            ]);
        }
        t
    }
}

impl Report for DecayFit {
    fn table(&self) -> Table {
        let mut t = Table::new(&["beta", "sqrt_beta", "sup_h", "log_sup_h"]);
        for (b, h) in self.betas.iter().zip(&self.sup_h) {
            t.push(vec![cell(*b), cell(b.sqrt()), cell(*h), cell(h.ln())]);
        }
        t
    }
}

impl Report for IsolationReport {
    fn table(&self) -> Table {
        let mut t = Table::new(&["trial", "outcome", "converged", "final_u_max"]);
        for (k, o) in self.outcomes.iter().enumerate() {
            let (name, conv, u) = match o {
                IsolationOutcome::Zero => ("zero", true, 0.0),
                IsolationOutcome::Escaped { converged, final_u_max } => ("escaped", *converged, *final_u_max),
                IsolationOutcome::Unresolved { final_u_max } => ("unresolved", false, *final_u_max),
            };
            t.push(vec![k.to_string(), name.into(), conv.to_string(), cell(u)]);
        }
        t
    }
}

/// Serializable digest of a [`SolveReport`]; wall time is left out so
/// that files are reproducible.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveSummary {
    pub beta: f64,
    pub residual_sup: f64,
    pub steps_taken: usize,
    pub newton_iterations: usize,
    pub converged: bool,
    pub projected: bool,
}

impl SolveSummary {
    pub fn new(report: &SolveReport, beta: f64) -> Self {
        Self {
            beta,
            residual_sup: report.residual_sup,
            steps_taken: report.steps_taken,
            newton_iterations: report.newton_iterations,
            converged: report.converged,
            projected: report.projected,
        }
    }
}

impl Report for SolveSummary {
    fn table(&self) -> Table {
        let mut t = Table::new(&["quantity", "value"]);
        t.push(vec!["beta".into(), cell(self.beta)]);
        t.push(vec!["residual_sup".into(), cell(self.residual_sup)]);
        t.push(vec!["steps_taken".into(), self.steps_taken.to_string()]);
        t.push(vec!["newton_iterations".into(), self.newton_iterations.to_string()]);
        t.push(vec!["converged".into(), self.converged.to_string()]);
        t.push(vec!["projected".into(), self.projected.to_string()]);
        t
    }
}

impl Report for [SolveSummary] {
    fn table(&self) -> Table {
        let mut t = Table::new(&["beta", "residual_sup", "steps_taken", "newton_iterations", "converged", "projected"]);
        for s in self {
            t.push(vec![
                cell(s.beta),
                cell(s.residual_sup),
                s.steps_taken.to_string(),
                s.newton_iterations.to_string(),
                s.converged.to_string(),
                s.projected.to_string(),
            ]);
        }
        t
    }
}

fn pair_columns(n: usize, prefix: &str) -> Vec<String> {
    (0..n).flat_map(|i| ((i + 1)..n).map(move |j| format!("{prefix}_{}{}", i + 1, j + 1))).collect()
}

/// One row per β: `β`, then `∫w_iw_j` and `β∫w_iw_j` for every pair.
pub fn trace_overlap_table(trace: &ContinuationTrace) -> Table {
    let n = trace.params.n_groups();
    let mut columns = vec!["beta".to_string()];
    columns.extend(pair_columns(n, "overlap"));
    columns.extend(pair_columns(n, "scaled_overlap"));
    let mut t = Table { columns, rows: Vec::new() };
    for (k, report) in trace.reports.iter().enumerate() {
        let seg = segregation_report(&report.state, &trace.params_at(k));
        let mut row = vec![cell(trace.betas[k])];
        for m in [&seg.overlap, &seg.scaled_overlap] {
            for i in 0..n {
                for j in (i + 1)..n {
                    row.push(cell(m[i][j]));
                }
            }
        }
        t.rows.push(row);
    }
    t
}

/// One row per β with the Hölder seminorm of every group at `alpha` and a
/// Lipschitz proxy at exponent 0.99 (reported without a verdict).
pub fn trace_holder_table(trace: &ContinuationTrace, alpha: f64, max_pairs: usize) -> Result<Table, IoError> {
    let n = trace.params.n_groups();
    let mut columns = vec!["beta".to_string()];
    columns.extend((1..=n).map(|i| format!("holder_w{i}")));
    columns.extend((1..=n).map(|i| format!("lipschitz_proxy_w{i}")));
    let mut t = Table { columns, rows: Vec::new() };
    for (k, report) in trace.reports.iter().enumerate() {
        let mut row = vec![cell(trace.betas[k])];
        for a in [alpha, 0.99] {
            for w in &report.state.w {
                let h = holder_seminorm(w, a, max_pairs).map_err(|e| IoError::Config(e.to_string()))?;
                row.push(cell(h));
            }
        }
        t.rows.push(row);
    }
    Ok(t)
}

pub fn write_table(table: &Table, path: &Path) -> Result<(), IoError> {
    write_file(path, &table.render())
}
