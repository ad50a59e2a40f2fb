//! Planar surrogate of the scorpion robot.
//!
//! The legged gait is replaced by a differential-drive (unicycle) model whose
//! forward speed is modulated by a tail-driven pitch. Everything the policy
//! sees goes through the same interface a physics-engine backend would expose:
//! a 5-component normalized observation, a 3-component normalized action and a
//! distance-based reward evaluated in a frame centred on the active waypoint.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Half side of the square arena.
pub const ARENA_HALF: f64 = 100.0;
/// Constant body height.
pub const BODY_HEIGHT: f64 = 15.0;
/// Motor speed at a normalized command of 1, rad/s.
pub const MAX_MOTOR_SPEED: f64 = 3.5;
pub const TAIL_MIN: f64 = 0.26;
pub const TAIL_MAX: f64 = 0.47;
/// Midpoint of the tail range.
pub const TAIL_CENTER: f64 = 0.365;
/// Half width of the tail range.
pub const TAIL_HALF_RANGE: f64 = 0.105;
/// Reward per unit of distance to the waypoint.
pub const REWARD_SCALE: f64 = 2e-3;

pub const OBS_DIM: usize = 5;
pub const ACTION_DIM: usize = 3;

/// Wraps an angle into `[-pi, pi)`.
pub fn wrap_angle(angle: f64) -> f64 {
    (angle + PI).rem_euclid(2.0 * PI) - PI
}

/// Ground-truth pose in some planar frame (world or goal-shifted).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
    pub tail: f64,
}

impl RobotState {
    /// Level pose at `(x, y)` facing `yaw`, tail at `tail`.
    pub fn new(x: f64, y: f64, yaw: f64, tail: f64) -> Self {
        Self {
            x: x.clamp(-ARENA_HALF, ARENA_HALF),
            y: y.clamp(-ARENA_HALF, ARENA_HALF),
            z: BODY_HEIGHT,
            roll: 0.0,
            pitch: 0.0,
            yaw: wrap_angle(yaw),
            tail: tail.clamp(TAIL_MIN, TAIL_MAX),
        }
    }

    pub fn distance_to(&self, point: (f64, f64)) -> f64 {
        (self.x - point.0).hypot(self.y - point.1)
    }
}

/// Normalized network input: `(x/100, y/100, roll/pi, pitch/pi, yaw/pi)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation(pub [f64; OBS_DIM]);

impl Observation {
    /// Normalizes a pose. Components are saturated to `[-1, 1]`, which only
    /// bites when a goal-shifted position lies outside the arena extent.
    pub fn from_state(state: &RobotState) -> Self {
        let raw = [
            state.x / ARENA_HALF,
            state.y / ARENA_HALF,
            state.roll / PI,
            state.pitch / PI,
            state.yaw / PI,
        ];
        Self(raw.map(|v| v.clamp(-1.0, 1.0)))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Policy output before physical scaling; every channel lives in `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActionNorm {
    pub m_left: f64,
    pub m_right: f64,
    pub tail: f64,
}

impl ActionNorm {
    pub fn new(m_left: f64, m_right: f64, tail: f64) -> Self {
        Self {
            m_left,
            m_right,
            tail,
        }
    }

    pub fn from_slice(values: &[f64]) -> Self {
        Self::new(values[0], values[1], values[2])
    }

    pub fn clamped(&self) -> Self {
        Self::new(
            self.m_left.clamp(-1.0, 1.0),
            self.m_right.clamp(-1.0, 1.0),
            self.tail.clamp(-1.0, 1.0),
        )
    }
}

/// Physically scaled actuator command.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotorCommand {
    /// rad/s
    pub omega_left: f64,
    /// rad/s
    pub omega_right: f64,
    /// rad
    pub tail_angle: f64,
}

/// Maps a normalized action onto motor speeds and a tail angle.
pub fn scale_action(action: ActionNorm) -> MotorCommand {
    let a = action.clamped();
    MotorCommand {
        omega_left: MAX_MOTOR_SPEED * a.m_left,
        omega_right: MAX_MOTOR_SPEED * a.m_right,
        tail_angle: TAIL_CENTER + TAIL_HALF_RANGE * a.tail,
    }
}

fn default_dt() -> f64 {
    0.1
}
fn default_horizon() -> usize {
    500
}
fn default_speed_gain() -> f64 {
    1.0
}
fn default_wheelbase() -> f64 {
    5.0
}
fn default_tail_neutral() -> f64 {
    TAIL_CENTER
}
fn default_pitch_gain() -> f64 {
    1.0
}
fn default_pitch_lag() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvConfig {
    /// Simulation step, seconds.
    #[serde(default = "default_dt")]
    pub dt: f64,
    /// Episode length in steps.
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    /// Arena units travelled per radian of wheel rotation.
    #[serde(default = "default_speed_gain")]
    pub speed_gain: f64,
    /// Distance between the left and right drive lines.
    #[serde(default = "default_wheelbase")]
    pub wheelbase: f64,
    #[serde(default = "default_tail_neutral")]
    pub tail_neutral: f64,
    /// Pitch per radian of tail deflection from neutral.
    #[serde(default = "default_pitch_gain")]
    pub pitch_gain: f64,
    /// First-order filter coefficient pulling the tail toward its command.
    #[serde(default = "default_pitch_lag")]
    pub pitch_lag: f64,
    /// Target point in world coordinates.
    #[serde(default)]
    pub waypoint: (f64, f64),
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            dt: default_dt(),
            horizon: default_horizon(),
            speed_gain: default_speed_gain(),
            wheelbase: default_wheelbase(),
            tail_neutral: default_tail_neutral(),
            pitch_gain: default_pitch_gain(),
            pitch_lag: default_pitch_lag(),
            waypoint: (0.0, 0.0),
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        fn check(ok: bool, field: &str, msg: &str) -> Result<()> {
            if ok {
                Ok(())
            } else {
                Err(Error::InvalidConfig {
                    field: format!("env.{field}"),
                    reason: msg.to_string(),
                })
            }
        }
        check(self.dt.is_finite() && self.dt > 0.0, "dt", "must be > 0")?;
        check(self.horizon >= 1, "horizon", "must be >= 1")?;
        check(
            self.speed_gain.is_finite() && self.speed_gain > 0.0,
            "speed_gain",
            "must be > 0",
        )?;
        check(
            self.wheelbase.is_finite() && self.wheelbase > 0.0,
            "wheelbase",
            "must be > 0",
        )?;
        check(
            (TAIL_MIN..=TAIL_MAX).contains(&self.tail_neutral),
            "tail_neutral",
            "must lie in [0.26, 0.47]",
        )?;
        check(self.pitch_gain.is_finite(), "pitch_gain", "must be finite")?;
        check(
            self.pitch_lag > 0.0 && self.pitch_lag <= 1.0,
            "pitch_lag",
            "must lie in (0, 1]",
        )?;
        check(
            self.waypoint.0.is_finite() && self.waypoint.1.is_finite(),
            "waypoint",
            "must be finite",
        )
    }

    /// Largest distance covered in one step.
    pub fn max_step_distance(&self) -> f64 {
        self.speed_gain * MAX_MOTOR_SPEED * self.dt
    }
}

/// Advances the surrogate dynamics by one `config.dt`.
pub fn dynamics_step(state: &RobotState, cmd: &MotorCommand, config: &EnvConfig) -> RobotState {
    let dt = config.dt;
    let v = config.speed_gain * 0.5 * (cmd.omega_left + cmd.omega_right) * state.pitch.cos();
    let yaw_rate = config.speed_gain * (cmd.omega_right - cmd.omega_left) / config.wheelbase;

    let x = (state.x + v * state.yaw.cos() * dt).clamp(-ARENA_HALF, ARENA_HALF);
    let y = (state.y + v * state.yaw.sin() * dt).clamp(-ARENA_HALF, ARENA_HALF);
    let yaw = wrap_angle(state.yaw + yaw_rate * dt);
    let tail = (state.tail + config.pitch_lag * (cmd.tail_angle - state.tail))
        .clamp(TAIL_MIN, TAIL_MAX);
    let pitch = wrap_angle(config.pitch_gain * (tail - config.tail_neutral));

    RobotState {
        x,
        y,
        z: BODY_HEIGHT,
        roll: 0.0,
        pitch,
        yaw,
        tail,
    }
}

/// Reward of a pose expressed in the goal frame (waypoint at the origin).
pub fn reward(state: &RobotState) -> f64 {
    -REWARD_SCALE * state.x.hypot(state.y)
}

/// Re-expresses `state` in a frame whose origin is `waypoint`.
pub fn shift_frame(state: &RobotState, waypoint: (f64, f64)) -> RobotState {
    RobotState {
        x: state.x - waypoint.0,
        y: state.y - waypoint.1,
        ..*state
    }
}

/// Inverse of [`shift_frame`].
pub fn unshift_frame(state: &RobotState, waypoint: (f64, f64)) -> RobotState {
    RobotState {
        x: state.x + waypoint.0,
        y: state.y + waypoint.1,
        ..*state
    }
}

/// Diagnostics returned with every transition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    /// World-frame pose after the step.
    pub pose: RobotState,
    /// Action after clamping.
    pub action: ActionNorm,
    pub command: MotorCommand,
    pub waypoint: (f64, f64),
    /// Number of steps taken so far, including this one.
    pub step: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub observation: Observation,
    pub reward: f64,
    pub done: bool,
    pub info: StepInfo,
}

/// Episodic environment wrapping the surrogate dynamics.
#[derive(Debug, Clone)]
pub struct ScorpionEnv {
    config: EnvConfig,
    state: RobotState,
    waypoint: (f64, f64),
    steps: usize,
    ready: bool,
}

impl ScorpionEnv {
    pub fn new(config: EnvConfig) -> Result<Self> {
        config.validate()?;
        let waypoint = config.waypoint;
        Ok(Self {
            state: RobotState::new(0.0, 0.0, 0.0, config.tail_neutral),
            config,
            waypoint,
            steps: 0,
            ready: false,
        })
    }

    /// Starts an episode from a uniformly random position and heading.
    pub fn reset(&mut self, seed: u64) -> Observation {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = rng.random_range(-ARENA_HALF..=ARENA_HALF);
        let y = rng.random_range(-ARENA_HALF..=ARENA_HALF);
        let yaw = rng.random_range(-PI..PI);
        self.reset_to(RobotState::new(x, y, yaw, self.config.tail_neutral))
    }

    /// Starts an episode from an explicit world-frame pose.
    pub fn reset_to(&mut self, pose: RobotState) -> Observation {
        self.state = RobotState::new(pose.x, pose.y, pose.yaw, pose.tail);
        self.state.pitch =
            wrap_angle(self.config.pitch_gain * (self.state.tail - self.config.tail_neutral));
        self.waypoint = self.config.waypoint;
        self.steps = 0;
        self.ready = true;
        self.observation()
    }

    /// Moves the goal; the next observation and reward use the new frame.
    pub fn set_waypoint(&mut self, waypoint: (f64, f64)) -> Observation {
        self.waypoint = waypoint;
        self.observation()
    }

    pub fn step(&mut self, action: ActionNorm) -> Result<StepOutcome> {
        if !self.ready {
            return Err(Error::NotReset);
        }
        if self.steps >= self.config.horizon {
            return Err(Error::EpisodeFinished {
                horizon: self.config.horizon,
            });
        }
        let action = action.clamped();
        let command = scale_action(action);
        self.state = dynamics_step(&self.state, &command, &self.config);
        self.steps += 1;

        let local = shift_frame(&self.state, self.waypoint);
        Ok(StepOutcome {
            observation: Observation::from_state(&local),
            reward: reward(&local),
            done: self.steps >= self.config.horizon,
            info: StepInfo {
                pose: self.state,
                action,
                command,
                waypoint: self.waypoint,
                step: self.steps,
            },
        })
    }

    pub fn observation(&self) -> Observation {
        Observation::from_state(&shift_frame(&self.state, self.waypoint))
    }

    pub fn state(&self) -> &RobotState {
        &self.state
    }

    pub fn waypoint(&self) -> (f64, f64) {
        self.waypoint
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }
}
