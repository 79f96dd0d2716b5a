//! `netlocal`: fit local hidden-variable models to network behaviours,
//! scan target families and verify exported models.

mod args;

use std::fs;
use std::io::{self, Write};
use std::process::ExitCode;

use clap::Parser;
use netlocal::analytic;
use netlocal::experiments::{self, ordered_triples};
use netlocal::optimizer::{fit, BOUNDARY_RMSE_THRESHOLD, EJM_RMSE_THRESHOLD};
use netlocal::targets::{FamilySpec, VisibilityFamily};
use netlocal::{evaluate_model, load_model, Behaviour, Error, LocalModel, NetworkTopology};

use args::{Cli, Command, ExportName, NetworkArgs, Target, TargetArgs};

const EXIT_USAGE: u8 = 1;
const EXIT_THRESHOLD: u8 = 2;
const EXIT_INPUT: u8 = 3;
const EXIT_NUMERICAL: u8 = 4;

#[derive(Debug)]
enum CliError {
    Usage(String),
    Threshold(String),
    Lib(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Lib(e)
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Lib(Error::Io(e))
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Threshold(_) => EXIT_THRESHOLD,
            CliError::Lib(e) => match e {
                Error::Bracket(_) => EXIT_THRESHOLD,
                Error::Numerical(_) | Error::Selection(_) => EXIT_NUMERICAL,
                _ => EXIT_INPUT,
            },
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Threshold(m) => f.write_str(m),
            CliError::Lib(e) => write!(f, "{e}"),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("netlocal: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("cannot configure {n} threads: {e}")))?;
    }
    match cli.command {
        Command::Fit(a) => cmd_fit(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Grid(a) => cmd_grid(a),
        Command::CriticalV(a) => cmd_critical(a),
        Command::EjmTable(a) => cmd_ejm_table(a),
        Command::Bound(a) => cmd_bound(a),
        Command::Verify(a) => cmd_verify(a),
        Command::ExportModel(a) => cmd_export(a),
    }
}

fn emit(out: Option<&std::path::Path>, text: &str) -> CliResult<()> {
    match out {
        Some(path) => fs::write(path, text)?,
        None => io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn emit_csv(out: Option<&std::path::Path>, write: impl FnOnce(&mut Vec<u8>) -> netlocal::Result<()>) -> CliResult<()> {
    let mut buf = Vec::new();
    write(&mut buf)?;
    emit(out, &String::from_utf8(buf).expect("CSV output is UTF-8"))
}

fn need<T>(value: Option<T>, flag: &str, target: Target) -> CliResult<T> {
    value.ok_or_else(|| CliError::Usage(format!("--{flag} is required for target {target}")))
}

fn parse_v(raw: Option<&str>, target: Target) -> CliResult<Option<f64>> {
    match raw {
        None => Ok(None),
        Some("auto") => Err(CliError::Usage("--v auto is only accepted by verify".into())),
        Some(s) => s
            .parse::<f64>()
            .map(Some)
            .map_err(|_| CliError::Usage(format!("--v expects a number for target {target}, got {s:?}"))),
    }
}

/// Target family spec with every parameter resolved.
fn family_spec(t: &TargetArgs, v: Option<f64>) -> CliResult<FamilySpec> {
    let target = t.target;
    Ok(match target {
        Target::Ghz => FamilySpec::Ghz {
            v: need(v, "v", target)?,
        },
        Target::W => FamilySpec::W {
            v: need(v, "v", target)?,
        },
        Target::Ejm => FamilySpec::Ejm {
            v: need(v, "v", target)?,
        },
        Target::BilocalIj => FamilySpec::BilocalIJ {
            i: need(t.i, "i", target)?,
            j: need(t.j, "j", target)?,
        },
        Target::BilocalXy => FamilySpec::BilocalXY {
            x: need(t.x, "x", target)?,
            y: need(t.y, "y", target)?,
        },
        Target::File => FamilySpec::CustomFile(need(t.target_file.clone(), "target-file", target)?),
    })
}

fn default_outputs(target: Option<Target>) -> usize {
    match target {
        Some(Target::Ejm) => 4,
        _ => 2,
    }
}

fn resolve_topology(n: &NetworkArgs, target: Option<Target>) -> CliResult<NetworkTopology> {
    if let Some(path) = &n.topology {
        if n.network.is_some() {
            return Err(CliError::Usage(
                "--network and --topology are mutually exclusive".into(),
            ));
        }
        return Ok(netlocal::load_topology(path)?);
    }
    let name = n.network.unwrap_or(match target {
        Some(Target::BilocalIj | Target::BilocalXy) => args::Network::Bilocal,
        _ => args::Network::Triangle,
    });
    match name {
        args::Network::Bilocal => {
            if n.outputs.is_some_and(|m| m != 2) {
                return Err(CliError::Usage("the bilocal network has binary outputs".into()));
            }
            Ok(NetworkTopology::bilocal())
        }
        args::Network::Triangle => Ok(NetworkTopology::triangle(n.outputs.unwrap_or(default_outputs(target)))?),
    }
}

fn visibility_family(target: Target) -> CliResult<VisibilityFamily> {
    match target {
        Target::Ghz => Ok(VisibilityFamily::Ghz),
        Target::W => Ok(VisibilityFamily::W),
        Target::Ejm => Ok(VisibilityFamily::Ejm),
        other => Err(CliError::Usage(format!("target {other} has no visibility parameter"))),
    }
}

fn default_threshold(target: Target) -> f64 {
    if target == Target::Ejm {
        EJM_RMSE_THRESHOLD
    } else {
        BOUNDARY_RMSE_THRESHOLD
    }
}

fn cmd_fit(a: args::FitArgs) -> CliResult<()> {
    let v = parse_v(a.target.v.as_deref(), a.target.target)?;
    let spec = family_spec(&a.target, v)?;
    let topology = resolve_topology(&a.network, Some(a.target.target))?;
    let settings = a
        .solver
        .settings(a.threshold.unwrap_or(default_threshold(a.target.target)));
    let behaviour = spec.behaviour()?;
    let result = fit(&behaviour, &topology, &a.solver.cards, &settings)?;
    emit(a.out.as_deref(), &result.to_json()?)?;
    if result.success {
        Ok(())
    } else {
        Err(CliError::Threshold(format!(
            "best rmse {:e} above threshold {:e}",
            result.best_rmse, settings.success_rmse
        )))
    }
}

fn cmd_sweep(a: args::SweepArgs) -> CliResult<()> {
    let family = visibility_family(a.target)?;
    let values = match (&a.v_list, a.v_min, a.v_max) {
        (Some(list), None, None) => list.clone(),
        (None, Some(lo), Some(hi)) => experiments::linspace(lo, hi, a.points),
        _ => {
            return Err(CliError::Usage(
                "give either --v-list or both --v-min and --v-max".into(),
            ))
        }
    };
    let topology = resolve_topology(&a.network, Some(a.target))?;
    let settings = a.solver.settings(a.threshold.unwrap_or(default_threshold(a.target)));
    let records = if a.warm_start {
        experiments::visibility_sweep_warm(family, &values, &topology, &a.solver.cards, &settings)?
    } else {
        experiments::visibility_sweep(family, &values, &topology, &a.solver.cards, &settings)?
    };
    emit_csv(a.out.as_deref(), |buf| experiments::write_sweep_csv(&records, buf))
}

fn cmd_grid(a: args::GridArgs) -> CliResult<()> {
    let family = match a.target {
        Target::BilocalIj => netlocal::targets::SliceFamily::BilocalIJ,
        Target::BilocalXy => netlocal::targets::SliceFamily::BilocalXY,
        other => return Err(CliError::Usage(format!("target {other} is not a two-parameter slice"))),
    };
    let axis = match a.preset {
        Some(args::GridPreset::Dense) => experiments::dense_grid_axis(),
        None => experiments::linspace(a.min, a.max, a.points),
    };
    let topology = resolve_topology(&a.network, Some(a.target))?;
    let settings = a.solver.settings(a.threshold.unwrap_or(BOUNDARY_RMSE_THRESHOLD));
    let records = experiments::grid_sweep(family, &axis, &axis, &topology, &a.solver.cards, &settings)?;
    emit_csv(a.out.as_deref(), |buf| experiments::write_grid_csv(&records, buf))
}

fn cmd_critical(a: args::CriticalArgs) -> CliResult<()> {
    let family = visibility_family(a.target)?;
    let topology = resolve_topology(&a.network, Some(a.target))?;
    let threshold = a.threshold.unwrap_or(default_threshold(a.target));
    let settings = a.solver.settings(threshold);
    let v = experiments::critical_visibility(
        family,
        &topology,
        &a.solver.cards,
        threshold,
        a.v_lo,
        a.v_hi,
        a.v_tol,
        &settings,
    )?;
    let text = format!(
        "{{\n  \"family\": \"{family}\",\n  \"cardinalities\": {:?},\n  \"v_critical\": {},\n  \"threshold\": {},\n  \"v_tol\": {}\n}}\n",
        a.solver.cards,
        netlocal::json::fmt_f64(v),
        netlocal::json::fmt_f64(threshold),
        netlocal::json::fmt_f64(a.v_tol),
    );
    emit(a.out.as_deref(), &text)
}

fn cmd_ejm_table(a: args::EjmTableArgs) -> CliResult<()> {
    let triples: Vec<[usize; 3]> = if a.cell.is_empty() {
        if a.c_max < 2 {
            return Err(CliError::Usage(format!("--c-max must be at least 2, got {}", a.c_max)));
        }
        ordered_triples(a.c_max)
    } else {
        a.cell
            .iter()
            .map(|c| match c.0.as_slice() {
                &[x, y, z] => Ok([x, y, z]),
                _ => Err(CliError::Usage(format!(
                    "--cell expects three cardinalities, got {c:?}"
                ))),
            })
            .collect::<CliResult<_>>()?
    };
    let settings = a.settings();
    let cells = experiments::ejm_cells(&triples, a.threshold, a.v_tol, &settings)?;
    emit_csv(a.out.as_deref(), |buf| experiments::write_ejm_csv(&cells, buf))
}

fn cmd_bound(a: args::BoundArgs) -> CliResult<()> {
    let topology = resolve_topology(&a.network, None)?;
    let b = topology.cardinality_upper_bound(a.source)?;
    emit(a.out.as_deref(), &format!("{b}\n"))
}

/// Critical visibilities with an exact model in the analytic module.
fn auto_candidates(target: Target) -> CliResult<Vec<f64>> {
    match target {
        Target::Ghz => Ok(vec![0.25, 1.0 / 3.0, analytic::ghz333_visibility()]),
        Target::W => Ok(vec![analytic::w_critical_visibility()]),
        other => Err(CliError::Usage(format!("--v auto is not defined for target {other}"))),
    }
}

fn cmd_verify(a: args::VerifyArgs) -> CliResult<()> {
    let model = load_model(&a.model)?;
    let produced = evaluate_model(&model)?;
    let target = a.target.target;
    let (v, behaviour): (Option<f64>, Behaviour) = if a.target.v.as_deref() == Some("auto") {
        let mut best: Option<(f64, f64, Behaviour)> = None;
        for v in auto_candidates(target)? {
            let b = family_spec(&a.target, Some(v))?.behaviour()?;
            let r = produced.rmse(&b)?;
            if best.as_ref().is_none_or(|(_, r0, _)| r < *r0) {
                best = Some((v, r, b));
            }
        }
        let (v, _, b) = best.expect("candidate lists are nonempty");
        (Some(v), b)
    } else {
        let v = parse_v(a.target.v.as_deref(), target)?;
        (v, family_spec(&a.target, v)?.behaviour()?)
    };
    let rmse = produced.rmse(&behaviour)?;
    let max_abs = produced.max_abs_diff(&behaviour)?;
    let violations = model.validate();
    let mut text = String::from("{\n");
    if let Some(v) = v {
        text += &format!("  \"v\": {},\n", netlocal::json::fmt_f64(v));
    }
    text += &format!(
        "  \"rmse\": {},\n  \"max_abs_diff\": {},\n  \"violations\": {},\n  \"pass\": {}\n}}\n",
        netlocal::json::fmt_f64(rmse),
        netlocal::json::fmt_f64(max_abs),
        violations.len(),
        rmse <= a.threshold && violations.is_empty()
    );
    emit(a.out.as_deref(), &text)?;
    if !violations.is_empty() {
        let list: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
        return Err(CliError::Lib(Error::InputData(format!(
            "model is not valid: {}",
            list.join("; ")
        ))));
    }
    if rmse > a.threshold {
        return Err(CliError::Threshold(format!(
            "rmse {rmse:e} above threshold {:e}",
            a.threshold
        )));
    }
    Ok(())
}

fn cmd_export(a: args::ExportArgs) -> CliResult<()> {
    let param = |name: &str| {
        a.param
            .ok_or_else(|| CliError::Usage(format!("--param is required for {name}")))
    };
    let model: LocalModel = match a.name {
        ExportName::Ghz222 => analytic::ghz_model_222(),
        ExportName::Ghz322 => analytic::ghz_model_322(param("ghz322")?)?,
        ExportName::Ghz333 => analytic::ghz_model_333(),
        ExportName::W => analytic::w_model(a.param.unwrap_or_else(analytic::w_critical_visibility))?,
        ExportName::BilocalBoundary => analytic::bilocal_boundary_model(param("bilocal-boundary")?)?,
    };
    emit(a.out.as_deref(), &model.to_json()?)
}
