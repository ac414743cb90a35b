use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nlpflow::dynamics::{DynamicsConfig, GainSet, PtsError, PtsState, WorkingSet};
use nlpflow::integrate::{solve, Event, FailureKind, IntegratorConfig, SolveConfig, SolveError, Trajectory, Verdict};
use nlpflow::linalg::{Matrix, Vector};
use nlpflow::monitor::{KktReport, MonitorConfig};
use nlpflow::problem::{builtin, builtin_catalog, parse_problem, Dims, NlpProblem, ProblemError, BUILTIN_NAMES};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::args::{MultistartArgs, RunArgs};
use crate::input::{build_gains, parse_gains_json, parse_pts, parse_theta0, InputError, Theta0};

/// Bumped whenever a field of the JSON summaries changes meaning or disappears.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Input(#[from] InputError),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: {source}", path.display())]
    ProblemFile { path: PathBuf, source: ProblemError },
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error("invalid priority groups: {0}")]
    Pts(#[from] PtsError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error("writing {}: {source}", path.display())]
    Csv { path: PathBuf, source: csv::Error },
}

impl CliError {
    /// 1 for solver failures, 2 for bad input or I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Solve(_) => 1,
            _ => 2,
        }
    }
}

fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ProblemSource {
    Builtin { name: String, size: Option<usize> },
    File { path: PathBuf },
}

/// A built-in name wins over a file of the same name.
pub fn load_problem(spec: &str, size: Option<usize>) -> Result<(NlpProblem, ProblemSource), CliError> {
    if BUILTIN_NAMES.contains(&spec) {
        let problem = builtin(spec, size)?;
        return Ok((
            problem,
            ProblemSource::Builtin {
                name: spec.to_string(),
                size,
            },
        ));
    }
    let path = PathBuf::from(spec);
    if !path.exists() {
        return Err(InputError::NoSuchProblem(spec.to_string()).into());
    }
    if size.is_some() {
        return Err(InputError::SizeForFile.into());
    }
    let text = fs::read_to_string(&path).map_err(io_error(&path))?;
    let name = path
        .file_stem()
        .map_or_else(|| spec.to_string(), |s| s.to_string_lossy().into_owned());
    let problem = parse_problem(&text)
        .map_err(|source| CliError::ProblemFile {
            path: path.clone(),
            source,
        })?
        .with_name(name);
    Ok((problem, ProblemSource::File { path }))
}

#[derive(Debug, Clone, Serialize)]
pub struct GainsEcho {
    pub k_theta: Vec<Vec<f64>>,
    pub k_h: Vec<Vec<f64>>,
    pub k_g: Vec<f64>,
}

fn rows(m: &Matrix) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn to_vec(v: &Vector) -> Vec<f64> {
    v.iter().copied().collect()
}

/// The effective configuration, echoed into every summary.
#[derive(Debug, Clone, Serialize)]
pub struct ConfigEcho {
    pub problem: ProblemSource,
    pub dims: Dims,
    pub theta0: Theta0,
    pub gains: GainsEcho,
    /// 1-based rows.
    pub pts_groups: Vec<Vec<usize>>,
    pub integrator: IntegratorConfig,
    pub monitor: MonitorConfig,
    pub dynamics: DynamicsConfig,
    pub sample_stride: Option<f64>,
}

/// Everything a run needs except the start point.
pub struct Setup {
    pub problem: NlpProblem,
    pub gains: GainSet,
    pub pts: PtsState,
    pub solve: SolveConfig,
    pub theta0: Theta0,
    pub echo: ConfigEcho,
}

pub fn setup(args: &RunArgs) -> Result<Setup, CliError> {
    let (problem, source) = load_problem(&args.problem, args.size)?;
    let dims = problem.dims();
    let file = match &args.gains {
        Some(path) => Some(parse_gains_json(&fs::read_to_string(path).map_err(io_error(path))?)?),
        None => None,
    };
    let gains = build_gains(dims, (args.k_theta, args.k_h, args.k_g), file.as_ref())?;
    let groups = match &args.pts {
        Some(text) => parse_pts(text)?,
        None if dims.r == 0 => Vec::new(),
        None => vec![(0..dims.r).collect()],
    };
    let pts = if groups.is_empty() {
        PtsState::single(0)
    } else {
        PtsState::new(groups.clone(), dims.r)?
    };

    let mut solve = SolveConfig::new(args.method.into(), args.t_end);
    solve.integrator.rel_tol = args.rel_tol;
    solve.integrator.abs_tol = args.abs_tol;
    if let Some(m) = args.max_steps {
        solve.integrator.max_steps = m;
    }
    solve.monitor.fixed_horizon = args.fixed_horizon;
    solve.sample_stride = args.sample_stride;
    solve.integrator.validate().map_err(SolveError::from)?;

    let theta0 = parse_theta0(&args.theta0)?;
    let echo = ConfigEcho {
        problem: source,
        dims,
        theta0: theta0.clone(),
        gains: GainsEcho {
            k_theta: rows(gains.k_theta()),
            k_h: rows(gains.k_h()),
            k_g: to_vec(gains.k_g()),
        },
        pts_groups: groups.iter().map(|g| g.iter().map(|i| i + 1).collect()).collect(),
        integrator: solve.integrator.clone(),
        monitor: solve.monitor.clone(),
        dynamics: solve.dynamics.clone(),
        sample_stride: solve.sample_stride,
    };
    Ok(Setup {
        problem,
        gains,
        pts,
        solve,
        theta0,
        echo,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct FinalState {
    pub tau: f64,
    pub theta: Vec<f64>,
    pub pi_e: Vec<f64>,
    pub pi_i: Vec<f64>,
    pub objective: f64,
    pub kkt: KktReport,
    pub lyapunov: f64,
    pub working_set: WorkingSet,
}

#[derive(Debug, Clone, Serialize)]
pub struct Counts {
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    pub rhs_evals: usize,
    pub jacobian_evals: usize,
    pub samples: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub schema_version: u32,
    pub problem: String,
    #[serde(flatten)]
    pub verdict: Verdict,
    pub theta0: Vec<f64>,
    pub final_state: FinalState,
    /// `|theta - theta_hat|_2` when the problem has a known optimum.
    pub error: Option<f64>,
    pub counts: Counts,
    pub wall_time_s: f64,
    pub events: Vec<Event>,
    pub seed: u64,
    pub config: ConfigEcho,
}

pub struct RunReport {
    pub summary: RunSummary,
    pub trajectory: Trajectory,
}

fn distance_to_optimum(problem: &NlpProblem, theta: &Vector) -> Option<f64> {
    problem.known_optimum().map(|opt| (theta - opt).norm())
}

pub fn run_from(setup: &Setup, theta0: &Vector, seed: u64) -> Result<RunReport, CliError> {
    let start = Instant::now();
    let trajectory = solve(&setup.problem, &setup.gains, theta0, setup.pts.clone(), &setup.solve)?;
    let wall_time_s = start.elapsed().as_secs_f64();
    let last = trajectory.last();
    let summary = RunSummary {
        schema_version: SCHEMA_VERSION,
        problem: setup.problem.name().to_string(),
        verdict: trajectory.verdict.clone(),
        theta0: to_vec(theta0),
        final_state: FinalState {
            tau: last.tau,
            theta: to_vec(&last.theta),
            pi_e: to_vec(&last.pi_e),
            pi_i: to_vec(&last.pi_i),
            objective: last.objective,
            kkt: last.kkt,
            lyapunov: last.lyapunov,
            working_set: last.working_set.clone(),
        },
        error: distance_to_optimum(&setup.problem, &last.theta),
        counts: Counts {
            accepted_steps: trajectory.step_count,
            rejected_steps: trajectory.rejected_steps,
            rhs_evals: trajectory.rhs_eval_count,
            jacobian_evals: trajectory.jacobian_evals,
            samples: trajectory.samples.len(),
        },
        wall_time_s,
        events: trajectory.events.clone(),
        seed,
        config: setup.echo.clone(),
    };
    Ok(RunReport { summary, trajectory })
}

/// Shortest round-trip form, in exponent notation for very small or large values.
pub fn format_number(x: f64) -> String {
    let a = x.abs();
    if a != 0.0 && a.is_finite() && !(1e-4..1e15).contains(&a) {
        format!("{x:e}")
    } else {
        format!("{x}")
    }
}

pub fn csv_header(dims: Dims) -> Vec<String> {
    let mut h = vec!["tau".to_string()];
    h.extend((1..=dims.n).map(|i| format!("theta_{i}")));
    h.extend((1..=dims.s).map(|i| format!("pi_e_{i}")));
    h.extend((1..=dims.r).map(|i| format!("pi_i_{i}")));
    h.extend(["kkt_stationarity", "ec_violation", "iec_violation", "lyapunov"].map(String::from));
    h
}

pub fn write_trajectory_csv<W: Write>(out: W, dims: Dims, tr: &Trajectory) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(csv_header(dims))?;
    for s in &tr.samples {
        let mut row = vec![s.tau];
        row.extend(s.theta.iter().chain(&s.pi_e).chain(&s.pi_i));
        row.extend([s.kkt.stationarity, s.kkt.ec_violation, s.kkt.iec_violation, s.lyapunov]);
        w.write_record(row.into_iter().map(format_number))?;
    }
    w.flush()?;
    Ok(())
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("summaries serialize");
    text.push('\n');
    fs::write(path, text).map_err(io_error(path))
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(io_error(dir))
}

fn brief(s: &RunSummary, dir: &Path) -> String {
    let mut line = format!("{}: {} at tau {}", s.problem, s.verdict.label(), s.final_state.tau);
    if let Some(e) = s.error {
        line.push_str(&format!(", |theta - theta_hat| = {e:.3e}"));
    }
    if let Verdict::Failed { message, .. } = &s.verdict {
        line.push_str(&format!(" ({message})"));
    }
    line.push_str(&format!(", {} steps; wrote {}", s.counts.accepted_steps, dir.display()));
    line
}

/// Runs one solve. Returns the exit code: 0 for converged or horizon
/// reached, 1 when the flow failed part way.
pub fn cmd_run(args: &RunArgs, stdout: &mut impl Write) -> Result<i32, CliError> {
    let setup = setup(args)?;
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let theta0 = setup.theta0.resolve(setup.problem.dims().n, &mut rng)?;
    let report = run_from(&setup, &theta0, args.seed)?;
    if let Some(dir) = &args.out {
        create_dir(dir)?;
        let path = dir.join("trajectory.csv");
        let file = fs::File::create(&path).map_err(io_error(&path))?;
        write_trajectory_csv(std::io::BufWriter::new(file), setup.problem.dims(), &report.trajectory).map_err(
            |source| CliError::Csv {
                path: path.clone(),
                source,
            },
        )?;
        write_json(&dir.join("summary.json"), &report.summary)?;
    }
    let text = match &args.out {
        Some(dir) => brief(&report.summary, dir),
        None => serde_json::to_string_pretty(&report.summary).expect("summaries serialize"),
    };
    writeln!(stdout, "{text}").map_err(io_error(Path::new("<stdout>")))?;
    Ok(i32::from(report.summary.verdict.is_failure()))
}

#[derive(Debug, Clone, Serialize)]
pub struct MultistartRow {
    pub run: usize,
    pub theta0: Vec<f64>,
    pub verdict: String,
    pub failure: Option<FailureKind>,
    pub message: Option<String>,
    pub error: Option<f64>,
    pub final_tau: Option<f64>,
    pub accepted_steps: Option<usize>,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Stats {
    pub average: f64,
    pub min: f64,
    pub max: f64,
}

impl Stats {
    fn of(values: impl IntoIterator<Item = f64>) -> Option<Stats> {
        let v: Vec<f64> = values.into_iter().collect();
        if v.is_empty() {
            return None;
        }
        Some(Stats {
            average: v.iter().sum::<f64>() / v.len() as f64,
            min: v.iter().copied().fold(f64::INFINITY, f64::min),
            max: v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MultistartSummary {
    pub schema_version: u32,
    pub problem: String,
    pub count: usize,
    pub failures: usize,
    pub error: Option<Stats>,
    pub wall_time_s: Option<Stats>,
    pub runs: Vec<MultistartRow>,
    pub seed: u64,
    pub config: ConfigEcho,
}

/// Start points are drawn in sequence from one generator seeded with
/// `seed`, so the first run of a multistart repeats a single `run`.
pub fn multistart(args: &MultistartArgs) -> Result<MultistartSummary, CliError> {
    let setup = setup(&args.run)?;
    let mut rng = ChaCha8Rng::seed_from_u64(args.run.seed);
    let n = setup.problem.dims().n;
    let mut runs = Vec::new();
    for run in 0..args.count as usize {
        let theta0 = setup.theta0.resolve(n, &mut rng)?;
        let start = Instant::now();
        let row = match run_from(&setup, &theta0, args.run.seed) {
            Ok(report) => {
                let s = report.summary;
                let (failure, message) = match &s.verdict {
                    Verdict::Failed { kind, message } => (Some(*kind), Some(message.clone())),
                    _ => (None, None),
                };
                MultistartRow {
                    run: run + 1,
                    theta0: s.theta0,
                    verdict: s.verdict.label().to_string(),
                    failure,
                    message,
                    error: s.error,
                    final_tau: Some(s.final_state.tau),
                    accepted_steps: Some(s.counts.accepted_steps),
                    wall_time_s: s.wall_time_s,
                }
            }
            Err(CliError::Solve(e)) => MultistartRow {
                run: run + 1,
                theta0: to_vec(&theta0),
                verdict: "error".to_string(),
                failure: None,
                message: Some(e.to_string()),
                error: None,
                final_tau: None,
                accepted_steps: None,
                wall_time_s: start.elapsed().as_secs_f64(),
            },
            Err(e) => return Err(e),
        };
        runs.push(row);
    }
    let ok: Vec<&MultistartRow> = runs.iter().filter(|r| r.verdict != "error").collect();
    Ok(MultistartSummary {
        schema_version: SCHEMA_VERSION,
        problem: setup.problem.name().to_string(),
        count: runs.len(),
        failures: runs.len() - ok.len(),
        error: Stats::of(ok.iter().filter_map(|r| r.error)),
        wall_time_s: Stats::of(ok.iter().map(|r| r.wall_time_s)),
        runs,
        seed: args.run.seed,
        config: setup.echo,
    })
}

fn or_dash(x: Option<f64>, f: impl Fn(f64) -> String) -> String {
    x.map_or_else(|| "-".to_string(), f)
}

pub fn write_multistart_table(out: &mut impl Write, s: &MultistartSummary) -> std::io::Result<()> {
    writeln!(out, "{}: {} runs, seed {}", s.problem, s.count, s.seed)?;
    writeln!(
        out,
        "{:>7}  {:>12}  {:>10}  {:>10}  verdict",
        "run", "error", "tau", "wall [s]"
    )?;
    for r in &s.runs {
        writeln!(
            out,
            "{:>7}  {:>12}  {:>10}  {:>10.4}  {}",
            r.run,
            or_dash(r.error, |e| format!("{e:.4e}")),
            or_dash(r.final_tau, |t| format!("{t:.2}")),
            r.wall_time_s,
            r.verdict
        )?;
    }
    for (label, pick) in [("average", 0), ("min", 1), ("max", 2)] {
        let get = |st: Option<Stats>| st.map(|st| [st.average, st.min, st.max][pick]);
        writeln!(
            out,
            "{label:>7}  {:>12}  {:>10}  {:>10}",
            or_dash(get(s.error), |e| format!("{e:.4e}")),
            "",
            or_dash(get(s.wall_time_s), |t| format!("{t:.4}"))
        )?;
    }
    if s.failures > 0 {
        writeln!(out, "{} of {} runs failed", s.failures, s.count)?;
    }
    Ok(())
}

fn write_multistart_csv(path: &Path, s: &MultistartSummary) -> Result<(), CliError> {
    let csv_err = |source| CliError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    let n = s.config.dims.n;
    let mut header = vec!["run".to_string()];
    header.extend((1..=n).map(|i| format!("theta0_{i}")));
    header.extend(["verdict", "error", "final_tau", "accepted_steps", "wall_time_s"].map(String::from));
    w.write_record(&header).map_err(csv_err)?;
    for r in &s.runs {
        let mut row = vec![r.run.to_string()];
        row.extend(r.theta0.iter().map(|&x| format_number(x)));
        row.push(r.verdict.clone());
        row.push(r.error.map(format_number).unwrap_or_default());
        row.push(r.final_tau.map(format_number).unwrap_or_default());
        row.push(r.accepted_steps.map(|k| k.to_string()).unwrap_or_default());
        row.push(format_number(r.wall_time_s));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| CliError::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

/// Exit code 0 when every run converged or reached the horizon, 1 otherwise.
pub fn cmd_multistart(args: &MultistartArgs, stdout: &mut impl Write) -> Result<i32, CliError> {
    let summary = multistart(args)?;
    if let Some(dir) = &args.run.out {
        create_dir(dir)?;
        write_multistart_csv(&dir.join("multistart.csv"), &summary)?;
        write_json(&dir.join("summary.json"), &summary)?;
    }
    write_multistart_table(stdout, &summary).map_err(io_error(Path::new("<stdout>")))?;
    Ok(i32::from(summary.failures > 0))
}

fn short_vector(v: &[f64]) -> String {
    if v.len() > 4 && v.iter().all(|&x| x == v[0]) {
        return format!("[{}; {}]", v[0], v.len());
    }
    let parts: Vec<String> = v.iter().map(|x| x.to_string()).collect();
    format!("[{}]", parts.join(", "))
}

pub fn cmd_list(json: bool, stdout: &mut impl Write) -> Result<i32, CliError> {
    let catalog = builtin_catalog();
    let io = io_error(Path::new("<stdout>"));
    let text = if json {
        serde_json::to_string_pretty(&catalog).expect("catalog serializes") + "\n"
    } else {
        let mut t = format!(
            "{:<25} {:>5} {:>5} {:>5} {:>6}  {:<12}  description\n",
            "name", "n", "r", "s", "size", "optimum"
        );
        for b in &catalog {
            let size = b.default_size.map_or_else(|| "-".to_string(), |k| k.to_string());
            t.push_str(&format!(
                "{:<25} {:>5} {:>5} {:>5} {:>6}  {:<12}  {}\n",
                b.name,
                b.dims.n,
                b.dims.r,
                b.dims.s,
                size,
                short_vector(&b.known_optimum),
                b.description
            ));
        }
        t
    };
    stdout.write_all(text.as_bytes()).map_err(io)?;
    Ok(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip() {
        for x in [0.0, 1.0, -2.5, 0.1, 1e-20, 3.5e200, -7.25e-5, 123456.789] {
            assert_eq!(format_number(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(format_number(1e-20), "1e-20");
        assert_eq!(format_number(0.25), "0.25");
    }

    #[test]
    fn header_names_every_column() {
        let h = csv_header(Dims { n: 2, r: 1, s: 1 });
        assert_eq!(
            h,
            [
                "tau",
                "theta_1",
                "theta_2",
                "pi_e_1",
                "pi_i_1",
                "kkt_stationarity",
                "ec_violation",
                "iec_violation",
                "lyapunov"
            ]
        );
    }

    #[test]
    fn short_vectors() {
        assert_eq!(short_vector(&[2.0, 0.5, 0.5]), "[2, 0.5, 0.5]");
        assert_eq!(short_vector(&vec![1.0; 100]), "[1; 100]");
    }
}
