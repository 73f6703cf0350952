//! Simulation engine: dual-rate closed-loop runner, open-loop playback, and
//! trajectory logging.
//!
//! The plant is integrated at a fast physics step while the controller runs
//! at a fixed, slower rate with zero-order hold on its command. Trajectories
//! are logged at the control rate and can be round-tripped through CSV.

pub mod dopri;
pub mod excitation;
pub mod savgol;

use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::dynamics::{state_derivative, ActuationAngles, RobotState};
use crate::error::{HsaError, Result};
use crate::kinematics::end_effector_pose;
use crate::params::HsaParams;

pub use dopri::{dopri_step, integrate_dopri, DopriTrajectory};
pub use excitation::{gbn_sequence, step_staircase_sequence};
pub use savgol::{rmse, savgol_derivative};

/// Velocity source handed to the controller.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "mode")]
pub enum ObserverMode {
    /// Feed back the integrator state directly.
    TrueState,
    /// Differentiate the sampled configuration with a causal
    /// Savitzky-Golay fit over `window` seconds of control samples.
    SavgolVelocity { window: f64, poly_order: usize },
}

/// Timing and logging setup of a simulation run.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    /// Integration step of the plant [s].
    pub dt_physics: f64,
    /// Controller rate [Hz]; the command is held between updates.
    pub control_rate: f64,
    /// Run length [s], rounded to whole control periods.
    pub duration: f64,
    /// Log every n-th control step.
    pub log_every: usize,
    pub observer: ObserverMode,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt_physics: 1e-4,
            control_rate: 40.0,
            duration: 10.0,
            log_every: 1,
            observer: ObserverMode::TrueState,
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn control_period(&self) -> f64 {
        1.0 / self.control_rate
    }

    /// Physics steps per control period.
    pub fn steps_per_control(&self) -> usize {
        (self.control_period() / self.dt_physics).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt_physics > 0.0 && self.dt_physics.is_finite()) {
            return Err(HsaError::InvalidArgument("dt_physics must be > 0".into()));
        }
        if !(self.control_rate > 0.0 && self.control_rate.is_finite()) {
            return Err(HsaError::InvalidArgument("control_rate must be > 0".into()));
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(HsaError::InvalidArgument("duration must be > 0".into()));
        }
        if self.log_every == 0 {
            return Err(HsaError::InvalidArgument("log_every must be >= 1".into()));
        }
        let n = self.steps_per_control();
        if n == 0 {
            return Err(HsaError::InvalidArgument(
                "control period shorter than one physics step".into(),
            ));
        }
        let exact = self.control_period() / self.dt_physics;
        if (exact - n as f64).abs() > 1e-6 * exact {
            return Err(HsaError::InvalidArgument(format!(
                "control period {} s is not a whole number of physics steps ({} x {})",
                self.control_period(),
                exact,
                self.dt_physics
            )));
        }
        if let ObserverMode::SavgolVelocity { window, poly_order } = self.observer {
            if !(window > 0.0) || window < (poly_order + 1) as f64 * self.control_period() {
                return Err(HsaError::InvalidArgument(
                    "observer window too short for its polynomial order".into(),
                ));
            }
        }
        Ok(())
    }
}

/// One logged sample of a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub t: f64,
    pub q: [f64; 3],
    pub q_dot: [f64; 3],
    pub phi: [f64; 2],
    pub p_ee: [f64; 2],
    pub theta_ee: f64,
    /// Reference end-effector position active at `t`.
    pub reference: [f64; 2],
}

/// A logged run plus the worst embedded integrator error seen along it.
#[derive(Debug, Clone, Default)]
pub struct Trajectory {
    pub samples: Vec<TrajectorySample>,
    pub max_embedded_error: f64,
}

const CSV_HEADER: &str = "t,q1,q2,q3,qd1,qd2,qd3,phi1,phi2,pee_x,pee_y,theta_ee,ref_x,ref_y";

impl Trajectory {
    pub fn final_sample(&self) -> Result<&TrajectorySample> {
        self.samples
            .last()
            .ok_or_else(|| HsaError::EmptyDataset("trajectory has no samples".into()))
    }

    pub fn final_state(&self) -> Result<RobotState> {
        let s = self.final_sample()?;
        Ok(RobotState {
            q: crate::kinematics::Configuration::new(s.q[0], s.q[1], s.q[2]),
            q_dot: s.q_dot,
        })
    }

    /// RMS end-effector error against the logged reference from `from_t` on.
    pub fn rmse_vs_reference(&self, from_t: f64) -> Result<f64> {
        let (reference, actual): (Vec<[f64; 2]>, Vec<[f64; 2]>) = self
            .samples
            .iter()
            .filter(|s| s.t >= from_t)
            .map(|s| (s.reference, s.p_ee))
            .unzip();
        rmse(&reference, &actual)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = BufWriter::new(out);
        writeln!(w, "{CSV_HEADER}")?;
        for s in &self.samples {
            let row = [
                s.t, s.q[0], s.q[1], s.q[2], s.q_dot[0], s.q_dot[1], s.q_dot[2], s.phi[0],
                s.phi[1], s.p_ee[0], s.p_ee[1], s.theta_ee, s.reference[0], s.reference[1],
            ];
            let line: Vec<String> = row.iter().map(|v| format!("{v:.12e}")).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_csv_path(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let reader = BufReader::new(input);
        let mut lines = reader.lines();
        let header = lines
            .next()
            .ok_or_else(|| HsaError::EmptyDataset("CSV input is empty".into()))?
            .map_err(HsaError::from)?;
        if header.trim() != CSV_HEADER {
            return Err(HsaError::InvalidArgument(format!(
                "unexpected CSV header: {header}"
            )));
        }
        let mut samples = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<f64> = line
                .split(',')
                .map(|f| {
                    f.trim().parse::<f64>().map_err(|_| {
                        HsaError::InvalidArgument(format!("bad number in CSV row {}", i + 2))
                    })
                })
                .collect::<Result<_>>()?;
            if fields.len() != 14 {
                return Err(HsaError::InvalidArgument(format!(
                    "CSV row {} has {} fields, expected 14",
                    i + 2,
                    fields.len()
                )));
            }
            samples.push(TrajectorySample {
                t: fields[0],
                q: [fields[1], fields[2], fields[3]],
                q_dot: [fields[4], fields[5], fields[6]],
                phi: [fields[7], fields[8]],
                p_ee: [fields[9], fields[10]],
                theta_ee: fields[11],
                reference: [fields[12], fields[13]],
            });
        }
        Ok(Self { samples, max_embedded_error: 0.0 })
    }

    pub fn read_csv_path(path: &Path) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }
}

/// Causal velocity estimator used by the Savitzky-Golay observer mode.
struct VelocityObserver {
    mode: ObserverMode,
    dt: f64,
    history: [Vec<f64>; 3],
}

impl VelocityObserver {
    fn new(mode: ObserverMode, dt: f64) -> Self {
        Self { mode, dt, history: Default::default() }
    }

    fn estimate(&mut self, state: &RobotState) -> Result<RobotState> {
        let ObserverMode::SavgolVelocity { window, poly_order } = self.mode else {
            return Ok(*state);
        };
        let q = state.q.as_vector();
        let window_samples = {
            let mut w = (window / self.dt).round() as usize;
            if w % 2 == 0 {
                w += 1;
            }
            w
        };
        let mut q_dot = [0.0; 3];
        for (c, hist) in self.history.iter_mut().enumerate() {
            hist.push(q[c]);
            // keep only what the filter can see
            if hist.len() > 4 * window_samples {
                hist.drain(..hist.len() - 2 * window_samples);
            }
            if hist.len() >= window_samples {
                let deriv = savgol_derivative(hist, window, poly_order, self.dt)?;
                q_dot[c] = *deriv.last().expect("non-empty derivative");
            }
        }
        Ok(RobotState { q: state.q, q_dot })
    }
}

fn log_sample(
    traj: &mut Trajectory,
    t: f64,
    state: &RobotState,
    phi: &ActuationAngles,
    reference: &Vector2<f64>,
    params: &HsaParams,
) -> Result<()> {
    let ee = end_effector_pose(&state.q, &params.geom)?;
    traj.samples.push(TrajectorySample {
        t,
        q: [state.q.kappa_be, state.q.sigma_sh, state.q.sigma_ax],
        q_dot: state.q_dot,
        phi: phi.phi,
        p_ee: [ee.p_x, ee.p_y],
        theta_ee: ee.theta,
        reference: [reference[0], reference[1]],
    });
    Ok(())
}

/// Run the plant under a command source called once per control period.
///
/// `command(t, state_estimate)` returns the actuation to hold for the next
/// period; `reference(t)` is only logged. Sampling happens at the start of
/// each logged control period and once more at the final time.
pub fn run_loop<C, R>(
    params: &HsaParams,
    x0: &RobotState,
    config: &SimConfig,
    mut reference: R,
    mut command: C,
) -> Result<Trajectory>
where
    C: FnMut(f64, &RobotState) -> Result<ActuationAngles>,
    R: FnMut(f64) -> Vector2<f64>,
{
    config.validate()?;
    params.validate()?;
    x0.validate()?;
    let dt = config.dt_physics;
    let dt_c = config.control_period();
    let n_control = (config.duration / dt_c).round().max(1.0) as usize;
    let steps = config.steps_per_control();

    let mut observer = VelocityObserver::new(config.observer, dt_c);
    let mut traj = Trajectory::default();
    let mut state = *x0;

    for ic in 0..n_control {
        let t = ic as f64 * dt_c;
        let estimate = observer.estimate(&state)?;
        let phi = command(t, &estimate)?;
        phi.validate()?;
        if ic % config.log_every == 0 {
            log_sample(&mut traj, t, &state, &phi, &reference(t), params)?;
        }
        let mut x = state.as_vector();
        let mut f = |_t: f64, x: &nalgebra::Vector6<f64>| state_derivative(x, &phi, params);
        // the vector field changed with phi, so re-seed the FSAL stage
        let mut k1 = f(t, &x)?;
        for is in 0..steps {
            let ts = t + is as f64 * dt;
            let (x_next, err) = dopri_step(&mut f, ts, &x, dt, &mut k1)?;
            if x_next.iter().any(|v| !v.is_finite()) {
                return Err(HsaError::IntegrationDiverged { t: ts });
            }
            traj.max_embedded_error = traj.max_embedded_error.max(err);
            x = x_next;
        }
        state = RobotState::from_vector(&x);
    }
    let t_end = n_control as f64 * dt_c;
    let phi_last = ActuationAngles::new(
        traj.samples.last().map_or(0.0, |s| s.phi[0]),
        traj.samples.last().map_or(0.0, |s| s.phi[1]),
    );
    log_sample(&mut traj, t_end, &state, &phi_last, &reference(t_end), params)?;
    Ok(traj)
}

/// Play back a per-control-step actuation sequence with zero-order hold.
pub fn simulate_open_loop(
    params: &HsaParams,
    x0: &RobotState,
    sequence: &[ActuationAngles],
    config: &SimConfig,
) -> Result<Trajectory> {
    if sequence.is_empty() {
        return Err(HsaError::InvalidArgument("empty actuation sequence".into()));
    }
    let mut cfg = config.clone();
    cfg.duration = sequence.len() as f64 * cfg.control_period();
    let dt_c = cfg.control_period();
    run_loop(
        params,
        x0,
        &cfg,
        |_t| Vector2::zeros(),
        |t, _state| {
            let idx = ((t / dt_c).round() as usize).min(sequence.len() - 1);
            Ok(sequence[idx])
        },
    )
}
