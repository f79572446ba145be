use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use strongcomp::analysis::{
    check_linf_bounds, complementarity_check, cosine_test_functions, decay_fit, default_threshold,
    faber_krahn_check, segregation_report, survivor_count,
};
use strongcomp::grid::{lambda1_restricted, SupportMask};
use strongcomp::io::{
    load_config, parse_config, read_snapshot, trace_holder_table, trace_overlap_table, write_report, write_snapshot,
    write_table, ConfigDocument, IoError, Report, ReportFormat, SnapshotMeta, SolveSummary, Table,
};
use strongcomp::model::ModelParams;
use strongcomp::solver::{continue_in_beta, solve_steady, FieldSet};
use strongcomp::verify;

/// Steady states and segregation diagnostics for strongly competing
/// predator groups sharing one prey.
#[derive(Debug, Parser)]
#[command(name = "strongcomp", version, subcommand_required = true, arg_required_else_help = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// March to a steady state (optionally Newton-polished) at `model.beta`.
    Solve(Common),
    /// Continue in β along the configured schedule.
    Sweep(Common),
    /// Diagnose the snapshot named by `analysis.snapshot`.
    Analyze(Common),
    /// Run the acceptance suite; exit 0 iff every criterion passes.
    Verify(Common),
    /// Restricted first eigenvalue of each group's support in a snapshot.
    Eig(Common),
}

#[derive(Debug, Args)]
struct Common {
    /// TOML config; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "strongcomp-out")]
    out: PathBuf,
    /// Override a config key after parsing, e.g. `--set beta=1e5`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

enum Failure {
    /// A check ran and did not pass.
    Check(String),
    /// Bad invocation, config or file.
    Usage(String),
}

impl From<IoError> for Failure {
    fn from(e: IoError) -> Self {
        Failure::Usage(e.to_string())
    }
}

type Outcome = Result<(), Failure>;

fn load(common: &Common) -> Result<ConfigDocument, Failure> {
    let doc = match &common.config {
        Some(path) => load_config(path, &common.overrides)?,
        None => parse_config("", &common.overrides)?,
    };
    for w in &doc.warnings {
        eprintln!("warning: parameters are not admissible: {w}");
    }
    Ok(doc)
}

fn out_dir(common: &Common) -> Result<&Path, Failure> {
    std::fs::create_dir_all(&common.out)
        .map_err(|e| Failure::Usage(format!("cannot create {}: {e}", common.out.display())))?;
    Ok(&common.out)
}

fn emit<R: Report + ?Sized>(report: &R, dir: &Path, stem: &str) -> Result<(), Failure> {
    for format in [ReportFormat::Table, ReportFormat::Structured] {
        write_report(report, &dir.join(format!("{stem}.{}", format.extension())), format)?;
    }
    Ok(())
}

fn solve(common: &Common) -> Outcome {
    let doc = load(common)?;
    let dir = out_dir(common)?;
    let initial = doc.initial_state()?;
    let report = solve_steady(&initial, &doc.model, &doc.solve).map_err(|e| Failure::Check(e.to_string()))?;
    let meta = SnapshotMeta::now(doc.model.competition, report.residual_sup, Some(doc.model.clone()));
    write_snapshot(&report.state, &meta, &dir.join("state.txt"))?;
    emit(&SolveSummary::new(&report, doc.model.competition), dir, "solve")?;
    eprintln!(
        "solve: converged {} residual {:.3e} steps {} newton {} ({:.2} s)",
        report.converged, report.residual_sup, report.steps_taken, report.newton_iterations, report.wall_time
    );
    if report.converged {
        Ok(())
    } else {
        Err(Failure::Check(format!("not converged (residual {:.3e})", report.residual_sup)))
    }
}

fn sweep(common: &Common) -> Outcome {
    let doc = load(common)?;
    let dir = out_dir(common)?;
    let initial = doc.initial_state()?;
    let trace = continue_in_beta(&initial, &doc.model, &doc.schedule, &doc.solve, "sweep")
        .map_err(|e| Failure::Check(e.to_string()))?;
    let mut summaries = Vec::new();
    for (k, report) in trace.reports.iter().enumerate() {
        let beta = trace.betas[k];
        let meta = SnapshotMeta::now(beta, report.residual_sup, Some(trace.params_at(k)));
        write_snapshot(&report.state, &meta, &dir.join(format!("state_{k:02}.txt")))?;
        summaries.push(SolveSummary::new(report, beta));
        eprintln!("beta {beta:e}: converged {} residual {:.3e}", report.converged, report.residual_sup);
    }
    emit(summaries.as_slice(), dir, "trace")?;
    write_table(&trace_overlap_table(&trace), &dir.join("overlap.tsv"))?;
    write_table(&trace_holder_table(&trace, doc.analysis.alpha, doc.analysis.max_pairs)?, &dir.join("holder.tsv"))?;
    if trace.len() >= 3 {
        let a = &doc.analysis;
        let grid = doc.grid;
        let center = match &a.center {
            Some(c) => c.clone(),
            None => grid.coords(trace.reports[0].state.w[a.component].argmax())[..grid.dim()].to_vec(),
        };
        let rho = a.rho.unwrap_or(0.9 * grid.extents().iter().cloned().fold(f64::INFINITY, f64::min));
        let threshold = a.threshold.unwrap_or(verify::SUITE_THRESHOLD);
        match decay_fit(&trace, a.component, &center, rho, threshold) {
            Ok(fit) => emit(&fit, dir, "decay")?,
            Err(e) => eprintln!("warning: decay fit skipped: {e}"),
        }
    }
    match summaries.iter().find(|s| !s.converged) {
        Some(s) => Err(Failure::Check(format!("beta {} did not converge", s.beta))),
        None => Ok(()),
    }
}

fn snapshot_input(doc: &ConfigDocument) -> Result<(FieldSet, SnapshotMeta, ModelParams), Failure> {
    let path = doc
        .analysis
        .snapshot
        .as_ref()
        .ok_or_else(|| Failure::Usage("no snapshot given (set analysis.snapshot)".into()))?;
    let (state, meta) = read_snapshot(path)?;
    let params = match &meta.params {
        Some(p) => p.clone(),
        None => doc.model.with_competition(meta.beta),
    };
    if params.n_groups() != state.n_groups() {
        return Err(Failure::Usage(format!(
            "snapshot has {} groups but the parameters describe {}",
            state.n_groups(),
            params.n_groups()
        )));
    }
    Ok((state, meta, params))
}

fn analyze(common: &Common) -> Outcome {
    let doc = load(common)?;
    let (state, _, params) = snapshot_input(&doc)?;
    let dir = out_dir(common)?;
    let threshold = doc.analysis.threshold.unwrap_or_else(|| default_threshold(&state));
    let check = |e: strongcomp::analysis::AnalysisError| Failure::Check(e.to_string());

    let bounds = check_linf_bounds(&state, &params);
    emit(&bounds, dir, "bounds")?;
    emit(&segregation_report(&state, &params), dir, "segregation")?;
    let tests = cosine_test_functions(&state.grid(), doc.analysis.n_test);
    let comp = complementarity_check(&state, &params, &tests).map_err(check)?;
    emit(&comp, dir, "complementarity")?;
    let mut failed = Vec::new();
    if threshold > 0.0 {
        let fk = faber_krahn_check(&state, &params, threshold).map_err(check)?;
        emit(fk.as_slice(), dir, "faber_krahn")?;
        emit(&survivor_count(&state, &params, threshold).map_err(check)?, dir, "survivors")?;
        if fk.iter().any(|r| !r.pass) {
            failed.push("eigenvalue inequality");
        }
    } else {
        eprintln!("warning: zero state; support reports skipped");
    }
    if !bounds.pass() {
        failed.push("L-infinity bounds");
    }
    if !comp.pass {
        failed.push("complementarity");
    }
    eprintln!("analyze: threshold {threshold:.3e}, worst complementarity margin {:.3e}", comp.worst_margin);
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Check(format!("failed: {}", failed.join(", "))))
    }
}

fn verify_suite(common: &Common) -> Outcome {
    let dir = out_dir(common)?;
    let outcomes = verify::run_all();
    let mut table = Table { columns: vec!["criterion".into(), "name".into(), "pass".into(), "detail".into()], rows: vec![] };
    for o in &outcomes {
        println!("{}", o.line());
        table.rows.push(vec![o.id.to_string(), o.name.to_string(), o.pass.to_string(), o.detail.replace('\t', " ")]);
    }
    write_table(&table, &dir.join("verify.tsv"))?;
    let failed: Vec<String> = outcomes.iter().filter(|o| !o.pass).map(|o| o.id.to_string()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Check(format!("criteria failed: {}", failed.join(", "))))
    }
}

fn eig(common: &Common) -> Outcome {
    let doc = load(common)?;
    let (state, _, _) = snapshot_input(&doc)?;
    let dir = out_dir(common)?;
    let threshold = doc.analysis.threshold.unwrap_or_else(|| default_threshold(&state));
    let mut table = Table {
        columns: ["component", "threshold", "support_nodes", "lambda1"].iter().map(|s| s.to_string()).collect(),
        rows: vec![],
    };
    for (i, w) in state.w.iter().enumerate() {
        let mask = SupportMask::from_fn(state.grid(), |p| w.values[p] > threshold);
        let l1 = if mask.is_empty() {
            "nan".to_string()
        } else {
            format!("{:.10e}", lambda1_restricted(&mask).map_err(|e| Failure::Check(e.to_string()))?)
        };
        println!("w{}: lambda1 {l1} on {} nodes", i + 1, mask.count());
        table.rows.push(vec![(i + 1).to_string(), format!("{threshold:.10e}"), mask.count().to_string(), l1]);
    }
    write_table(&table, &dir.join("eig.tsv"))?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Solve(c) => solve(c),
        Command::Sweep(c) => sweep(c),
        Command::Analyze(c) => analyze(c),
        Command::Verify(c) => verify_suite(c),
        Command::Eig(c) => eig(c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Check(msg)) => {
            eprintln!("check failed: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
