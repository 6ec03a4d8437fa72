//! Command-line front end: inference on CSV data, flag hypothesis tests,
//! simulation of the pivotal statistic, coverage studies and direct access
//! to the geometry primitives.
//!
//! Exit codes: 0 success/accept, 1 reject, 2 validation error.

mod io;

use std::collections::HashMap;
use std::process::ExitCode;

use flagstat_core::flag::FlagType;
use flagstat_core::grassmann::{grass_dist, grass_exp, grass_log, GrassTangent, Projector};
use flagstat_core::inference::{
    flag_hypothesis_test, pivotal_statistic, sample_covariance, CovModel, Denominator,
    PivotalReport, TestDecision,
};
use flagstat_core::matcore::{chi2_pdf, haar_orthogonal, Mat, OrthoMatrix, RngStream};
use flagstat_core::montecarlo::{replicate_pivotal, McConfig, McResult};
use flagstat_core::stiefel::{holonomy, Frame};

use io::{emit, matrix_to_csv, matrix_to_json, read_matrix_csv};

/// Stream index reserved for drawing the model's reference rotation, apart
/// from the replicate streams.
const GAMMA_STREAM: u64 = 1 << 48;

const USAGE: &str = "\
flagstat - inference on flags of principal subspaces

USAGE:
  flagstat infer <data.csv> --type q1,q2,... --gamma <file|identity> [--alpha A]
           [--denominator n|n-1] [--skip-header] [--output PATH]
  flagstat test <data.csv> --q0 <file> --type q1,q2,... [--alpha A]
           [--denominator n|n-1] [--skip-header] [--output PATH]
  flagstat simulate [--type q1,q2,...] [--lambdas l1,l2,...] [--d D] [--n N]
           [--reps R] [--seed S] [--alpha A] [--output PATH] [--histogram PATH]
  flagstat coverage [--type q1,q2,...] [--lambdas l1,l2,...] [--n N] [--reps R]
           [--seed S] [--alpha A] [--output PATH]
  flagstat geom <log|exp|dist|holonomy> <matrix.csv> ... [--format json|csv]
           [--output PATH]

Simulation defaults reproduce the reference configuration: d=4,
type 1,1,1,1, lambdas 8,4,2,1, n=10000, reps=2000. The environment
variable FLAGSTAT_THREADS caps simulation parallelism (0 = auto).

Exit codes: 0 success/accept, 1 reject, 2 validation error.";

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    match run(&args) {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

struct Parsed {
    positionals: Vec<String>,
    flags: HashMap<String, String>,
    switches: Vec<String>,
}

const SWITCHES: &[&str] = &["--skip-header", "--help"];

fn parse(args: &[String]) -> Result<Parsed, String> {
    let mut positionals = Vec::new();
    let mut flags = HashMap::new();
    let mut switches = Vec::new();
    let mut it = args.iter().peekable();
    while let Some(arg) = it.next() {
        if let Some(name) = arg.strip_prefix("--") {
            if SWITCHES.contains(&arg.as_str()) {
                switches.push(arg.clone());
            } else {
                let value = it
                    .next()
                    .ok_or_else(|| format!("flag --{name} expects a value"))?;
                flags.insert(name.to_string(), value.clone());
            }
        } else {
            positionals.push(arg.clone());
        }
    }
    Ok(Parsed { positionals, flags, switches })
}

fn run(args: &[String]) -> Result<ExitCode, String> {
    if args.is_empty() || args[0] == "--help" || args[0] == "help" {
        println!("{USAGE}");
        return Ok(ExitCode::SUCCESS);
    }
    let command = args[0].as_str();
    let parsed = parse(&args[1..])?;
    if parsed.switches.iter().any(|s| s == "--help") {
        println!("{USAGE}");
        return Ok(ExitCode::SUCCESS);
    }
    match command {
        "infer" => cmd_infer(&parsed),
        "test" => cmd_test(&parsed),
        "simulate" => cmd_simulate(&parsed),
        "coverage" => cmd_coverage(&parsed),
        "geom" => cmd_geom(&parsed),
        other => Err(format!("unknown command {other:?}; run with --help for usage")),
    }
}

fn ensure_known_flags(parsed: &Parsed, known: &[&str]) -> Result<(), String> {
    for key in parsed.flags.keys() {
        if !known.contains(&key.as_str()) {
            return Err(format!("unknown flag --{key}; run with --help for usage"));
        }
    }
    Ok(())
}

/// Reports are always JSON; reject a stray `--format csv`.
fn ensure_json_format(parsed: &Parsed) -> Result<(), String> {
    match parsed.flags.get("format").map(|s| s.as_str()) {
        None | Some("json") => Ok(()),
        Some(other) => Err(format!("reports are JSON only; --format {other:?} unsupported")),
    }
}

fn parse_type(parsed: &Parsed) -> Result<FlagType, String> {
    let spec = parsed
        .flags
        .get("type")
        .ok_or("--type q1,q2,... is required")?;
    let mult = spec
        .split(',')
        .map(|tok| {
            tok.trim()
                .parse::<usize>()
                .map_err(|_| format!("invalid multiplicity {tok:?} in --type"))
        })
        .collect::<Result<Vec<usize>, String>>()?;
    FlagType::new(mult).map_err(|e| e.to_string())
}

fn parse_alpha(parsed: &Parsed) -> Result<f64, String> {
    let alpha = match parsed.flags.get("alpha") {
        Some(a) => a.parse::<f64>().map_err(|_| format!("invalid --alpha {a:?}"))?,
        None => 0.05,
    };
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(format!("--alpha {alpha} outside (0, 1)"));
    }
    Ok(alpha)
}

fn parse_denominator(parsed: &Parsed) -> Result<Denominator, String> {
    match parsed.flags.get("denominator").map(|s| s.as_str()) {
        None | Some("n") => Ok(Denominator::N),
        Some("n-1") => Ok(Denominator::NMinusOne),
        Some(other) => Err(format!("--denominator must be n or n-1, got {other:?}")),
    }
}

fn parse_seed(parsed: &Parsed) -> Result<u64, String> {
    match parsed.flags.get("seed") {
        Some(s) => s.parse::<u64>().map_err(|_| format!("invalid --seed {s:?}")),
        None => Ok(0),
    }
}

fn parse_usize(parsed: &Parsed, name: &str, default: usize) -> Result<usize, String> {
    match parsed.flags.get(name) {
        Some(s) => s.parse::<usize>().map_err(|_| format!("invalid --{name} {s:?}")),
        None => Ok(default),
    }
}

fn threads_from_env() -> Result<usize, String> {
    match std::env::var("FLAGSTAT_THREADS") {
        Ok(v) => v
            .parse::<usize>()
            .map_err(|_| format!("FLAGSTAT_THREADS must be a non-negative integer, got {v:?}")),
        Err(_) => Ok(0),
    }
}

fn read_orthogonal(spec: &str, d: usize) -> Result<OrthoMatrix, String> {
    if spec == "identity" {
        return Ok(OrthoMatrix::identity(d));
    }
    let m = read_matrix_csv(spec, false)?;
    if m.rows() != d || m.cols() != d {
        return Err(format!(
            "{spec}: expected a {d}x{d} matrix, found {}x{}",
            m.rows(),
            m.cols()
        ));
    }
    OrthoMatrix::new(m).map_err(|e| format!("{spec}: {e}"))
}

fn report_json(report: &PivotalReport, alpha: f64, decision: TestDecision) -> String {
    let value = serde_json::json!({
        "statistic": report.statistic,
        "dof": report.dof,
        "p_value": report.p_value,
        "truncated": report.truncated,
        "truncation_applied": report.truncation_applied,
        "alpha": alpha,
        "decision": decision.to_string(),
    });
    serde_json::to_string_pretty(&value).expect("report serialization cannot fail")
}

fn cmd_infer(parsed: &Parsed) -> Result<ExitCode, String> {
    ensure_known_flags(parsed, &["type", "gamma", "alpha", "denominator", "output", "format"])?;
    ensure_json_format(parsed)?;
    let data_path = parsed
        .positionals
        .first()
        .ok_or("infer needs a data CSV path")?;
    let flag_type = parse_type(parsed)?;
    let alpha = parse_alpha(parsed)?;
    let denominator = parse_denominator(parsed)?;
    let skip_header = parsed.switches.iter().any(|s| s == "--skip-header");
    let data = read_matrix_csv(data_path, skip_header)?;
    if data.cols() != flag_type.d() {
        return Err(format!(
            "--type sums to {} but the data has {} columns",
            flag_type.d(),
            data.cols()
        ));
    }
    let gamma_spec = parsed.flags.get("gamma").ok_or("--gamma <file|identity> is required")?;
    let gamma = read_orthogonal(gamma_spec, flag_type.d())?;
    let n = data.rows();
    let sigma_hat = sample_covariance(&data, denominator).map_err(|e| e.to_string())?;
    let report =
        pivotal_statistic(&gamma, &sigma_hat, &flag_type, n).map_err(|e| e.to_string())?;
    let decision = if !report.truncation_applied && report.p_value >= alpha {
        TestDecision::Accept
    } else {
        TestDecision::Reject
    };
    emit(
        parsed.flags.get("output").map(|s| s.as_str()),
        &report_json(&report, alpha, decision),
    )?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_test(parsed: &Parsed) -> Result<ExitCode, String> {
    ensure_known_flags(parsed, &["type", "q0", "alpha", "denominator", "output", "format"])?;
    ensure_json_format(parsed)?;
    let data_path = parsed
        .positionals
        .first()
        .ok_or("test needs a data CSV path")?;
    let flag_type = parse_type(parsed)?;
    let alpha = parse_alpha(parsed)?;
    let denominator = parse_denominator(parsed)?;
    let skip_header = parsed.switches.iter().any(|s| s == "--skip-header");
    let data = read_matrix_csv(data_path, skip_header)?;
    if data.cols() != flag_type.d() {
        return Err(format!(
            "--type sums to {} but the data has {} columns",
            flag_type.d(),
            data.cols()
        ));
    }
    let q0_path = parsed.flags.get("q0").ok_or("--q0 <file> is required")?;
    let q0 = read_orthogonal(q0_path, flag_type.d())?;
    let (decision, report) =
        flag_hypothesis_test(&q0, &data, &flag_type, alpha, denominator)
            .map_err(|e| e.to_string())?;
    emit(
        parsed.flags.get("output").map(|s| s.as_str()),
        &report_json(&report, alpha, decision),
    )?;
    Ok(match decision {
        TestDecision::Accept => ExitCode::SUCCESS,
        TestDecision::Reject => ExitCode::from(1),
    })
}

fn build_simulation_config(parsed: &Parsed) -> Result<McConfig, String> {
    let flag_type = match parsed.flags.get("type") {
        Some(_) => parse_type(parsed)?,
        None => FlagType::new(vec![1, 1, 1, 1]).expect("default type is valid"),
    };
    if let Some(d_spec) = parsed.flags.get("d") {
        let d: usize = d_spec.parse().map_err(|_| format!("invalid --d {d_spec:?}"))?;
        if d != flag_type.d() {
            return Err(format!("--d {d} does not match --type (sums to {})", flag_type.d()));
        }
    }
    let lambdas: Vec<f64> = match parsed.flags.get("lambdas") {
        Some(spec) => spec
            .split(',')
            .map(|tok| {
                tok.trim()
                    .parse::<f64>()
                    .map_err(|_| format!("invalid eigenvalue {tok:?} in --lambdas"))
            })
            .collect::<Result<_, String>>()?,
        None => (0..flag_type.r())
            .map(|i| 2.0_f64.powi((flag_type.r() - 1 - i) as i32))
            .collect(),
    };
    let seed = parse_seed(parsed)?;
    let n = parse_usize(parsed, "n", 10_000)?;
    let reps = parse_usize(parsed, "reps", 2000)?;
    let alpha = parse_alpha(parsed)?;
    // The reference rotation is a Haar draw from a stream reserved for it,
    // so one seed pins the whole experiment.
    let mut gamma_rng = RngStream::substream(seed, GAMMA_STREAM);
    let gamma = haar_orthogonal(flag_type.d(), &mut gamma_rng);
    let model = CovModel::new(gamma, lambdas, flag_type).map_err(|e| e.to_string())?;
    Ok(McConfig { model, n, reps, alpha, seed })
}

fn simulation_json(cfg: &McConfig, result: &McResult) -> String {
    let value = serde_json::json!({
        "config": {
            "d": cfg.model.d(),
            "type": cfg.model.flag_type().multiplicities(),
            "lambdas": cfg.model.lambdas(),
            "n": cfg.n,
            "reps": cfg.reps,
            "alpha": cfg.alpha,
            "seed": cfg.seed,
        },
        "result": result,
    });
    serde_json::to_string_pretty(&value).expect("simulation serialization cannot fail")
}

fn histogram_csv(result: &McResult) -> String {
    let mut out = String::from("bin_left,bin_right,count,chi2_density_at_midpoint\n");
    let h = &result.histogram;
    for (i, &count) in h.counts.iter().enumerate() {
        let left = h.edges[i];
        let right = h.edges[i + 1];
        let density = chi2_pdf(result.dof, 0.5 * (left + right));
        out.push_str(&format!("{left:.16e},{right:.16e},{count},{density:.16e}\n"));
    }
    out
}

fn cmd_simulate(parsed: &Parsed) -> Result<ExitCode, String> {
    ensure_known_flags(
        parsed,
        &["type", "lambdas", "d", "n", "reps", "seed", "alpha", "output", "histogram"],
    )?;
    let cfg = build_simulation_config(parsed)?;
    let threads = threads_from_env()?;
    let result = replicate_pivotal(&cfg, threads).map_err(|e| e.to_string())?;
    eprintln!(
        "D^I = {}; KS distance to chi-square({}) = {:.4}; truncated {}/{} replicates",
        result.dof,
        result.dof,
        result.ks_distance,
        result.truncation_count,
        result.statistics.len()
    );
    emit(
        parsed.flags.get("output").map(|s| s.as_str()),
        &simulation_json(&cfg, &result),
    )?;
    if let Some(path) = parsed.flags.get("histogram") {
        std::fs::write(path, histogram_csv(&result))
            .map_err(|e| format!("cannot write {path}: {e}"))?;
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_coverage(parsed: &Parsed) -> Result<ExitCode, String> {
    ensure_known_flags(
        parsed,
        &["type", "lambdas", "d", "n", "reps", "seed", "alpha", "output"],
    )?;
    let cfg = build_simulation_config(parsed)?;
    let threads = threads_from_env()?;
    let result = replicate_pivotal(&cfg, threads).map_err(|e| e.to_string())?;
    let value = serde_json::json!({
        "coverage": result.coverage,
        "alpha": cfg.alpha,
        "nominal": 1.0 - cfg.alpha,
        "reps": cfg.reps,
        "aborted": result.aborted,
        "n": cfg.n,
        "dof": result.dof,
        "seed": cfg.seed,
    });
    emit(
        parsed.flags.get("output").map(|s| s.as_str()),
        &serde_json::to_string_pretty(&value).expect("coverage serialization cannot fail"),
    )?;
    Ok(ExitCode::SUCCESS)
}

fn read_projector(path: &str) -> Result<Projector, String> {
    let m = read_matrix_csv(path, false)?;
    Projector::new(m).map_err(|e| format!("{path}: {e}"))
}

fn cmd_geom(parsed: &Parsed) -> Result<ExitCode, String> {
    ensure_known_flags(parsed, &["format", "output"])?;
    let sub = parsed
        .positionals
        .first()
        .ok_or("geom needs a subcommand: log, exp, dist or holonomy")?;
    let format = match parsed.flags.get("format").map(|s| s.as_str()) {
        None | Some("csv") => "csv",
        Some("json") => "json",
        Some(other) => return Err(format!("--format must be json or csv, got {other:?}")),
    };
    let output = parsed.flags.get("output").map(|s| s.as_str());
    let args = &parsed.positionals[1..];
    let matrix_out = |m: &Mat| -> Result<(), String> {
        let text = if format == "json" {
            serde_json::to_string_pretty(&matrix_to_json(m)).expect("matrix serialization")
        } else {
            matrix_to_csv(m)
        };
        emit(output, text.trim_end())
    };
    match sub.as_str() {
        "log" => {
            let [p_path, r_path] = two(args, "geom log <P.csv> <R.csv>")?;
            let p = read_projector(p_path)?;
            let r = read_projector(r_path)?;
            let t = grass_log(&p, &r).map_err(|e| e.to_string())?;
            matrix_out(t.as_mat())?;
            Ok(ExitCode::SUCCESS)
        }
        "exp" => {
            let [p_path, d_path] = two(args, "geom exp <P.csv> <Delta.csv>")?;
            let p = read_projector(p_path)?;
            let delta = read_matrix_csv(d_path, false)?;
            let tangent =
                GrassTangent::new(delta, p.clone()).map_err(|e| format!("{d_path}: {e}"))?;
            let out = grass_exp(&p, &tangent).map_err(|e| e.to_string())?;
            matrix_out(out.as_mat())?;
            Ok(ExitCode::SUCCESS)
        }
        "dist" => {
            let [p_path, r_path] = two(args, "geom dist <P.csv> <R.csv>")?;
            let p = read_projector(p_path)?;
            let r = read_projector(r_path)?;
            let d = grass_dist(&p, &r).map_err(|e| e.to_string())?;
            emit(output, &format!("{d:.16e}"))?;
            Ok(ExitCode::SUCCESS)
        }
        "holonomy" => {
            if args.len() != 3 {
                return Err("geom holonomy <P.csv> <R.csv> <U.csv>".into());
            }
            let p = read_projector(&args[0])?;
            let r = read_projector(&args[1])?;
            let u_mat = read_matrix_csv(&args[2], false)?;
            let u = Frame::new(u_mat).map_err(|e| format!("{}: {e}", args[2]))?;
            let moved = holonomy(&p, &r, &u).map_err(|e| e.to_string())?;
            matrix_out(moved.as_mat())?;
            Ok(ExitCode::SUCCESS)
        }
        other => Err(format!("unknown geom subcommand {other:?}")),
    }
}

fn two<'a>(args: &'a [String], usage: &str) -> Result<[&'a str; 2], String> {
    if args.len() != 2 {
        return Err(usage.to_string());
    }
    Ok([&args[0], &args[1]])
}
