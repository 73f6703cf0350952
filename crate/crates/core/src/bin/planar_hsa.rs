//! Command-line front end: reproducible simulation, planning, control, and
//! identification runs with CSV artifacts.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::Vector2;

use planar_hsa::control::{
    baseline_pid_step, p_sati_d_gc_step, p_sati_d_step, saturate, ControllerState, PidGains,
    PsatidGains,
};
use planar_hsa::dynamics::{ActuationAngles, RobotState};
use planar_hsa::error::{HsaError, Result};
use planar_hsa::params::HsaParams;
use planar_hsa::planning::{plan, PlannerMethod, PlannerOptions, PlanResult};
use planar_hsa::sim::{
    gbn_sequence, simulate_open_loop, step_staircase_sequence, run_loop, SimConfig, Trajectory,
};
use planar_hsa::sysid::{
    calibrate_rest_strain, extract_steady_states, regress_elongation, regress_stiffness,
};
use planar_hsa::verify::run_suite;

#[derive(Parser)]
#[command(name = "planar-hsa", version, about = "Planar HSA robot modeling, planning, and control")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonOpts {
    /// Material parameter set: fpu, epu, or a path to a parameter JSON file.
    #[arg(long, default_value = "fpu")]
    material: String,
    /// Optional experiment config (JSON) overriding gains, planner, and
    /// simulation settings.
    #[arg(long)]
    config: Option<PathBuf>,
    /// RNG seed for stochastic excitations and references.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for CSV/JSON artifacts.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum ControllerChoice {
    Pid,
    Psatid,
    PsatidGc,
}

#[derive(Clone, Copy, ValueEnum)]
enum ExcitationKind {
    Gbn,
    Step,
    Staircase,
    Constant,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodChoice {
    StaticInversion,
    Rollout,
}

#[derive(Subcommand)]
enum Command {
    /// Open-loop simulation under a chosen excitation; writes a trajectory CSV.
    Simulate {
        #[command(flatten)]
        common: CommonOpts,
        #[arg(long, value_enum, default_value_t = ExcitationKind::Gbn)]
        excitation: ExcitationKind,
        /// Run length [s] (gbn/constant; step and staircase derive it).
        #[arg(long, default_value_t = 10.0)]
        duration: f64,
        /// Mean holding time of the GBN switching process [s].
        #[arg(long, default_value_t = 0.5)]
        settling_time: f64,
        /// Twist command for constant/step excitation [rad].
        #[arg(long, num_args = 2, default_values_t = [1.0, 1.0])]
        phi: Vec<f64>,
        /// Number of staircase levels.
        #[arg(long, default_value_t = 5)]
        levels: usize,
        /// Hold time per staircase/step level [s].
        #[arg(long, default_value_t = 5.0)]
        hold: f64,
    },
    /// Steady-state planning for an end-effector target; prints the plan.
    Plan {
        #[command(flatten)]
        common: CommonOpts,
        /// Target end-effector position x y [m].
        #[arg(long, num_args = 2, allow_negative_numbers = true)]
        target: Vec<f64>,
        #[arg(long, value_enum, default_value_t = MethodChoice::StaticInversion)]
        method: MethodChoice,
    },
    /// Closed-loop setpoint regulation; writes a trajectory CSV and a summary.
    Control {
        #[command(flatten)]
        common: CommonOpts,
        #[arg(long, value_enum, default_value_t = ControllerChoice::Psatid)]
        controller: ControllerChoice,
        /// Waypoint CSV (columns t,x,y, zero-order hold); defaults to the
        /// built-in eleven-step reference when omitted.
        #[arg(long)]
        reference: Option<PathBuf>,
        /// Workspace box of the built-in reference: x_min x_max y_min y_max [m].
        #[arg(long, num_args = 4, allow_negative_numbers = true, default_values_t = [-0.012, 0.012, 0.066, 0.082])]
        r#box: Vec<f64>,
        /// Hold time per generated step [s].
        #[arg(long, default_value_t = 10.0)]
        hold: f64,
        /// Number of generated steps.
        #[arg(long, default_value_t = 11)]
        steps: usize,
    },
    /// Steady-state workspace sweep over the actuation grid; writes a CSV.
    Workspace {
        #[command(flatten)]
        common: CommonOpts,
        /// Grid points per actuation axis.
        #[arg(long, default_value_t = 9)]
        grid: usize,
    },
    /// Run the model verification suite; exit 1 on any failed property.
    Verify {
        #[command(flatten)]
        common: CommonOpts,
        /// Use the full acceptance-grade sample counts.
        #[arg(long)]
        thorough: bool,
    },
    /// Identify elongation/stiffness coefficients from trajectory data.
    Sysid {
        #[command(flatten)]
        common: CommonOpts,
        /// Trajectory CSV with staircase data; simulated from the shipped
        /// truth when omitted.
        #[arg(long)]
        data: Option<PathBuf>,
    },
}

/// Optional experiment-level overrides loaded from --config.
#[derive(Debug, Clone, Default, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ExperimentConfig {
    sim: Option<SimConfig>,
    planner: Option<PlannerOptions>,
    psatid_gains: Option<PsatidGains>,
    pid_gains: Option<PidGains>,
}

struct Setup {
    params: HsaParams,
    sim: SimConfig,
    planner: PlannerOptions,
    psatid: PsatidGains,
    pid: PidGains,
}

fn load_params(material: &str) -> Result<HsaParams> {
    let params = match material {
        "fpu" => HsaParams::fpu()?,
        "epu" => HsaParams::epu()?,
        path => {
            let text = std::fs::read_to_string(path)?;
            serde_json::from_str(&text)?
        }
    };
    params.validate()?;
    Ok(params)
}

fn load_setup(common: &CommonOpts) -> Result<Setup> {
    let params = load_params(&common.material)?;
    let cfg: ExperimentConfig = match &common.config {
        Some(path) => serde_json::from_str(&std::fs::read_to_string(path)?)?,
        None => ExperimentConfig::default(),
    };
    let mut sim = cfg.sim.unwrap_or_default();
    sim.seed = common.seed;
    sim.validate()?;
    Ok(Setup {
        params,
        sim,
        planner: cfg.planner.unwrap_or_default(),
        psatid: cfg.psatid_gains.unwrap_or_default(),
        pid: cfg.pid_gains.unwrap_or_default(),
    })
}

fn exit_code_for(err: &HsaError) -> u8 {
    match err {
        HsaError::InvalidArgument(_)
        | HsaError::InvalidParams(_)
        | HsaError::EmptyDataset(_)
        | HsaError::Io(_)
        | HsaError::ConfigParse(_) => 2,
        HsaError::PlannerNoConverge { .. } | HsaError::SteadyStateNotReached { .. } => 4,
        HsaError::NonSpdInertia(_)
        | HsaError::SingularDynamics { .. }
        | HsaError::CollocationSingularity { .. }
        | HsaError::IntegrationDiverged { .. }
        | HsaError::IllPosedRegression(_)
        | HsaError::CalibrationFailed(_) => 3,
    }
}

fn ensure_out_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

fn cmd_simulate(
    common: &CommonOpts,
    excitation: ExcitationKind,
    duration: f64,
    settling_time: f64,
    phi: &[f64],
    levels: usize,
    hold: f64,
) -> Result<()> {
    let setup = load_setup(common)?;
    let params = &setup.params;
    let dt_c = setup.sim.control_period();
    let seq = match excitation {
        ExcitationKind::Gbn => {
            gbn_sequence(settling_time, params.phi_max, duration, dt_c, common.seed)?
        }
        ExcitationKind::Constant => {
            let n = (duration / dt_c).round().max(1.0) as usize;
            vec![ActuationAngles::new(phi[0], phi[1]); n]
        }
        ExcitationKind::Step => step_staircase_sequence(
            &[ActuationAngles::zero(), ActuationAngles::new(phi[0], phi[1])],
            hold,
            dt_c,
        )?,
        ExcitationKind::Staircase => {
            if levels < 2 {
                return Err(HsaError::InvalidArgument("need at least 2 staircase levels".into()));
            }
            let steps: Vec<ActuationAngles> = (0..levels)
                .map(|i| {
                    let f = i as f64 / (levels - 1) as f64;
                    ActuationAngles::new(f * params.phi_max, f * params.phi_max)
                })
                .collect();
            step_staircase_sequence(&steps, hold, dt_c)?
        }
    };
    let traj = simulate_open_loop(params, &RobotState::at_rest(params.rest_config), &seq, &setup.sim)?;
    ensure_out_dir(&common.out)?;
    let path = common.out.join("trajectory.csv");
    traj.write_csv_path(&path)?;
    println!(
        "wrote {} ({} samples, max embedded integrator error {:.3e})",
        path.display(),
        traj.samples.len(),
        traj.max_embedded_error
    );
    Ok(())
}

fn cmd_plan(common: &CommonOpts, target: &[f64], method: MethodChoice) -> Result<()> {
    let setup = load_setup(common)?;
    let mut opts = setup.planner.clone();
    opts.method = match method {
        MethodChoice::StaticInversion => PlannerMethod::StaticInversion,
        MethodChoice::Rollout => PlannerMethod::Rollout,
    };
    let result = plan(&Vector2::new(target[0], target[1]), &setup.params, &opts)?;
    println!("{}", serde_json::to_string_pretty(&result).map_err(HsaError::from)?);
    Ok(())
}

/// Reference schedule: setpoints with activation times and their plans.
struct ScheduledStep {
    t_start: f64,
    target: Vector2<f64>,
    plan: Option<PlanResult>,
}

fn read_waypoints(path: &Path) -> Result<Vec<(f64, Vector2<f64>)>> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (i == 0 && line.starts_with("t")) {
            continue;
        }
        let fields: Vec<f64> = line
            .split(',')
            .map(|f| {
                f.trim().parse::<f64>().map_err(|_| {
                    HsaError::InvalidArgument(format!("bad number in waypoint row {}", i + 1))
                })
            })
            .collect::<Result<_>>()?;
        if fields.len() != 3 {
            return Err(HsaError::InvalidArgument(format!(
                "waypoint row {} has {} fields, expected t,x,y",
                i + 1,
                fields.len()
            )));
        }
        out.push((fields[0], Vector2::new(fields[1], fields[2])));
    }
    if out.is_empty() {
        return Err(HsaError::EmptyDataset("no waypoints in reference file".into()));
    }
    if out[0].0 != 0.0 {
        return Err(HsaError::InvalidArgument("first waypoint must activate at t = 0".into()));
    }
    if out.windows(2).any(|w| w[1].0 <= w[0].0) {
        return Err(HsaError::InvalidArgument("waypoint times must be strictly increasing".into()));
    }
    Ok(out)
}

fn eleven_step_reference(
    bounds: &[f64],
    hold: f64,
    steps: usize,
    seed: u64,
) -> Result<Vec<(f64, Vector2<f64>)>> {
    use rand::{Rng, SeedableRng};
    if bounds.len() != 4 || bounds[0] >= bounds[1] || bounds[2] >= bounds[3] {
        return Err(HsaError::InvalidArgument("reference box must be x_min < x_max, y_min < y_max".into()));
    }
    if steps == 0 || hold <= 0.0 {
        return Err(HsaError::InvalidArgument("need at least one step with a positive hold".into()));
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    Ok((0..steps)
        .map(|i| {
            (
                i as f64 * hold,
                Vector2::new(
                    rng.gen_range(bounds[0]..bounds[1]),
                    rng.gen_range(bounds[2]..bounds[3]),
                ),
            )
        })
        .collect())
}

#[derive(serde::Serialize)]
struct StepSummary {
    t_start: f64,
    target: [f64; 2],
    /// Time from activation until the error first drops below 10% of the
    /// initial step error [s].
    time_to_90: Option<f64>,
    /// Mean error over the final 20% of the hold [m].
    steady_state_error: f64,
}

#[derive(serde::Serialize)]
struct ControlSummary {
    controller: String,
    rmse: f64,
    steps: Vec<StepSummary>,
}

fn summarize_steps(traj: &Trajectory, schedule: &[ScheduledStep], t_end: f64) -> Vec<StepSummary> {
    let mut out = Vec::new();
    for (i, step) in schedule.iter().enumerate() {
        let t_stop = schedule.get(i + 1).map_or(t_end, |s| s.t_start);
        let samples: Vec<_> = traj
            .samples
            .iter()
            .filter(|s| s.t >= step.t_start && s.t < t_stop)
            .collect();
        if samples.is_empty() {
            continue;
        }
        let err = |s: &planar_hsa::sim::TrajectorySample| {
            ((s.p_ee[0] - step.target[0]).powi(2) + (s.p_ee[1] - step.target[1]).powi(2)).sqrt()
        };
        let e0 = err(samples[0]);
        let time_to_90 = samples
            .iter()
            .find(|s| err(s) <= 0.1 * e0)
            .map(|s| s.t - step.t_start);
        let tail = samples.len() - (samples.len() / 5).max(1);
        let sse = samples[tail..].iter().map(|s| err(s)).sum::<f64>()
            / (samples.len() - tail) as f64;
        out.push(StepSummary {
            t_start: step.t_start,
            target: [step.target[0], step.target[1]],
            time_to_90,
            steady_state_error: sse,
        });
    }
    out
}

fn cmd_control(
    common: &CommonOpts,
    controller: ControllerChoice,
    reference: Option<&Path>,
    bounds: &[f64],
    hold: f64,
    steps: usize,
) -> Result<()> {
    let setup = load_setup(common)?;
    let params = &setup.params;
    let waypoints = match reference {
        Some(path) => read_waypoints(path)?,
        None => eleven_step_reference(bounds, hold, steps, common.seed)?,
    };
    let needs_plan = !matches!(controller, ControllerChoice::Pid);
    let mut schedule = Vec::with_capacity(waypoints.len());
    for (t_start, target) in &waypoints {
        let plan = if needs_plan {
            Some(plan(target, params, &setup.planner)?)
        } else {
            None
        };
        schedule.push(ScheduledStep { t_start: *t_start, target: *target, plan });
    }
    let mut sim = setup.sim.clone();
    sim.duration = waypoints.last().unwrap().0 + hold;
    let dt_c = sim.control_period();

    let active = |t: f64| -> &ScheduledStep {
        let idx = schedule.iter().rposition(|s| s.t_start <= t + 1e-12).unwrap_or(0);
        &schedule[idx]
    };
    let mut ctrl = ControllerState::new();
    let traj = run_loop(
        params,
        &RobotState::at_rest(params.rest_config),
        &sim,
        |t| active(t).target,
        |t, state| {
            let step = active(t);
            let raw = match controller {
                ControllerChoice::Pid => {
                    baseline_pid_step(state, &step.target, &setup.pid, params, dt_c, &mut ctrl)?
                }
                ControllerChoice::Psatid => p_sati_d_step(
                    state,
                    step.plan.as_ref().expect("plan exists"),
                    &setup.psatid,
                    params,
                    dt_c,
                    &mut ctrl,
                )?,
                ControllerChoice::PsatidGc => p_sati_d_gc_step(
                    state,
                    step.plan.as_ref().expect("plan exists"),
                    &setup.psatid,
                    params,
                    dt_c,
                    &mut ctrl,
                )?,
            };
            Ok(saturate(&raw, params.phi_max))
        },
    )?;

    ensure_out_dir(&common.out)?;
    let csv_path = common.out.join("control_trajectory.csv");
    traj.write_csv_path(&csv_path)?;
    let summary = ControlSummary {
        controller: match controller {
            ControllerChoice::Pid => "pid",
            ControllerChoice::Psatid => "psatid",
            ControllerChoice::PsatidGc => "psatid-gc",
        }
        .into(),
        rmse: traj.rmse_vs_reference(0.0)?,
        steps: summarize_steps(&traj, &schedule, sim.duration),
    };
    let summary_path = common.out.join("control_summary.json");
    std::fs::write(
        &summary_path,
        serde_json::to_string_pretty(&summary).map_err(HsaError::from)?,
    )?;
    println!("{}", serde_json::to_string_pretty(&summary).map_err(HsaError::from)?);
    println!("wrote {} and {}", csv_path.display(), summary_path.display());
    Ok(())
}

fn cmd_workspace(common: &CommonOpts, grid: usize) -> Result<()> {
    let setup = load_setup(common)?;
    let points = planar_hsa::planning::workspace_map(&setup.params, grid, &setup.planner)?;
    ensure_out_dir(&common.out)?;
    let path = common.out.join("workspace.csv");
    let mut text = String::from("pee_x,pee_y,mean_phi\n");
    for p in &points {
        if p.settled {
            text.push_str(&format!("{:.12e},{:.12e},{:.12e}\n", p.p_ee[0], p.p_ee[1], p.mean_phi));
        }
    }
    std::fs::write(&path, text)?;
    println!("wrote {} ({} settled of {} grid points)", path.display(), points.iter().filter(|p| p.settled).count(), points.len());
    Ok(())
}

fn cmd_verify(common: &CommonOpts, thorough: bool) -> Result<bool> {
    let setup = load_setup(common)?;
    let results = run_suite(&setup.params, thorough);
    for r in &results {
        println!("{} {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
    }
    ensure_out_dir(&common.out)?;
    let path = common.out.join("verify_report.json");
    std::fs::write(&path, serde_json::to_string_pretty(&results).map_err(HsaError::from)?)?;
    Ok(results.iter().all(|r| r.passed))
}

fn cmd_sysid(common: &CommonOpts, data: Option<&Path>) -> Result<()> {
    let setup = load_setup(common)?;
    let params = &setup.params;
    let (traj, source) = match data {
        Some(path) => (Trajectory::read_csv_path(path)?, path.display().to_string()),
        None => (
            planar_hsa::verify::simulate_sysid_staircase(params, 5.0)?,
            format!("simulated staircase ({} truth, seed {})", common.material, common.seed),
        ),
    };
    let points = extract_steady_states(&traj, 0.2, 2e-4)?;
    let elo = regress_elongation(&points, params)?;
    let stiff = regress_stiffness(&points, params)?;
    let rest = calibrate_rest_strain(&points[0].q, params).ok();

    let mut identified = params.clone();
    identified.elongation_coeff = elo.coeff;
    identified.stiffness = stiff;
    if let Some(r) = rest {
        for xi in &mut identified.rod_rest_strains {
            xi.sigma_ax = r;
        }
    }
    identified.notes = vec![
        format!("identified from {source}"),
        format!(
            "{} steady-state points, elongation fit rmse {:.3e}",
            points.len(),
            elo.rmse
        ),
    ];
    ensure_out_dir(&common.out)?;
    let path = common.out.join("identified_params.json");
    std::fs::write(
        &path,
        serde_json::to_string_pretty(&identified).map_err(HsaError::from)?,
    )?;
    println!("{}", serde_json::to_string_pretty(&identified.stiffness).map_err(HsaError::from)?);
    println!(
        "elongation coefficient {:.6e} (fit over {} points), wrote {}",
        elo.coeff,
        elo.n_points,
        path.display()
    );
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    match &cli.command {
        Command::Simulate { common, excitation, duration, settling_time, phi, levels, hold } => {
            cmd_simulate(common, *excitation, *duration, *settling_time, phi, *levels, *hold)?;
            Ok(true)
        }
        Command::Plan { common, target, method } => {
            cmd_plan(common, target, *method)?;
            Ok(true)
        }
        Command::Control { common, controller, reference, r#box, hold, steps } => {
            cmd_control(common, *controller, reference.as_deref(), r#box, *hold, *steps)?;
            Ok(true)
        }
        Command::Workspace { common, grid } => {
            cmd_workspace(common, *grid)?;
            Ok(true)
        }
        Command::Verify { common, thorough } => cmd_verify(common, *thorough),
        Command::Sysid { common, data } => {
            cmd_sysid(common, data.as_deref())?;
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
