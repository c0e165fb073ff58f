//! Longitudinal AV model: PI adaptive cruise control on time headway, a
//! latching emergency brake triggered on time-to-collision, and a
//! first-order actuator lag, stepped with explicit Euler against a
//! constant-speed cut-in vehicle.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenario::ScenarioSample;

/// Headway used when the AV is (nearly) stopped and `r / v` blows up.
pub const MAX_HEADWAY: f64 = 20.0;

/// 30 ft behind the LCV rear bumper.
pub const DEFAULT_CONFLICT_RANGE: f64 = 9.144;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AvConfig {
    pub t_hw_desired: f64,
    pub a_acc_max: f64,
    pub kp_acc: f64,
    pub ki_acc: f64,
    /// Emergency deceleration magnitude.
    pub a_aeb: f64,
    /// Slope limit on the braking command, negative.
    pub r_aeb: f64,
    pub tau_av: f64,
    pub ts: f64,
    pub t_lc_max: f64,
    /// `(speed [m/s], TTC threshold [s])`. Placeholder values; the source
    /// schedule is only available graphically.
    pub ttc_aeb_schedule: Vec<(f64, f64)>,
    pub r_conflict: f64,
    /// `err = error_sign * (t_hw - t_hw_desired)`.
    pub error_sign: f64,
}

impl Default for AvConfig {
    fn default() -> Self {
        AvConfig {
            t_hw_desired: 2.0,
            a_acc_max: 5.0,
            kp_acc: -38.6,
            ki_acc: -1.35,
            a_aeb: 10.0,
            r_aeb: -16.0,
            tau_av: 0.0796,
            ts: 0.1,
            t_lc_max: 8.0,
            ttc_aeb_schedule: vec![(5.0, 1.0), (15.0, 1.3), (25.0, 1.5), (40.0, 1.5)],
            r_conflict: DEFAULT_CONFLICT_RANGE,
            error_sign: -1.0,
        }
    }
}

impl AvConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("plant.ts", self.ts),
            ("plant.tau_av", self.tau_av),
            ("plant.t_lc_max", self.t_lc_max),
            ("plant.a_aeb", self.a_aeb),
            ("plant.r_conflict", self.r_conflict),
            ("plant.a_acc_max", self.a_acc_max),
            ("plant.t_hw_desired", self.t_hw_desired),
        ];
        for (key, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(key, format!("must be positive, got {v}")));
            }
        }
        if !(self.r_aeb < 0.0) {
            return Err(Error::config("plant.r_aeb", format!("must be negative, got {}", self.r_aeb)));
        }
        if !self.kp_acc.is_finite() || !self.ki_acc.is_finite() {
            return Err(Error::config("plant.kp_acc", "gains must be finite"));
        }
        if self.error_sign != 1.0 && self.error_sign != -1.0 {
            return Err(Error::config("plant.error_sign", "must be +1 or -1"));
        }
        let s = &self.ttc_aeb_schedule;
        if s.is_empty() || s.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(Error::config(
                "plant.ttc_aeb_schedule",
                "needs at least one node with strictly increasing speeds",
            ));
        }
        // a zero threshold disables the emergency brake
        if s.iter().any(|&(_, t)| !(t >= 0.0)) {
            return Err(Error::config("plant.ttc_aeb_schedule", "thresholds must be >= 0"));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.t_lc_max / self.ts).round() as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Acc,
    Aeb,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimState {
    pub t: f64,
    pub r: f64,
    pub v: f64,
    pub a: f64,
    pub a_cmd: f64,
    pub mode: Mode,
    pub prev_err: f64,
    pub a_d_prev: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    None,
    Conflict,
    Crash,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimTrace {
    pub states: Vec<SimState>,
    pub outcome: Outcome,
    pub t_end: f64,
    pub min_range: f64,
    /// Largest closing rate `(v - v_L) / r` seen; infinite on a crash.
    pub max_ttc_inv: f64,
    pub delta_v: Option<f64>,
    /// AV distance traveled up to `t_end`.
    pub distance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub conflict: bool,
    pub crash: bool,
    pub delta_v: Option<f64>,
}

pub fn headway(r: f64, v: f64) -> f64 {
    if v <= r / MAX_HEADWAY {
        MAX_HEADWAY
    } else {
        r / v
    }
}

pub fn headway_error(t_hw: f64, cfg: &AvConfig) -> f64 {
    cfg.error_sign * (t_hw - cfg.t_hw_desired)
}

/// Velocity-form PI update of the ACC acceleration command, saturated to
/// `±a_acc_max`. Returns the new command and the error it was built from.
pub fn acc_command(t_hw: f64, prev_err: f64, a_d_prev: f64, cfg: &AvConfig) -> (f64, f64) {
    let err = headway_error(t_hw, cfg);
    let a_d = a_d_prev
        + cfg.kp_acc * (err - prev_err)
        + cfg.ki_acc * (err + prev_err) * cfg.ts / 2.0;
    (a_d.clamp(-cfg.a_acc_max, cfg.a_acc_max), err)
}

/// TTC trigger level at speed `v`, interpolated and clamped to the schedule.
pub fn aeb_threshold(v: f64, cfg: &AvConfig) -> f64 {
    let s = &cfg.ttc_aeb_schedule;
    if v <= s[0].0 {
        return s[0].1;
    }
    if v >= s[s.len() - 1].0 {
        return s[s.len() - 1].1;
    }
    let i = s.partition_point(|&(x, _)| x <= v);
    let (v0, t0) = s[i - 1];
    let (v1, t1) = s[i];
    t0 + (t1 - t0) * (v - v0) / (v1 - v0)
}

pub fn time_to_collision(r: f64, v: f64, v_l: f64) -> f64 {
    if v > v_l {
        r / (v - v_l)
    } else {
        f64::INFINITY
    }
}

/// Advance one sample period.
pub fn step(state: &SimState, scenario: &ScenarioSample, cfg: &AvConfig) -> SimState {
    let v_l = scenario.v_l;
    let mut next = *state;

    if state.mode == Mode::Acc && time_to_collision(state.r, state.v, v_l) < aeb_threshold(state.v, cfg) {
        next.mode = Mode::Aeb;
    }
    match next.mode {
        Mode::Acc => {
            let (a_d, err) = acc_command(headway(state.r, state.v), state.prev_err, state.a_d_prev, cfg);
            next.a_cmd = a_d;
            next.a_d_prev = a_d;
            next.prev_err = err;
        }
        Mode::Aeb => {
            next.a_cmd = (state.a_cmd + cfg.r_aeb * cfg.ts).max(-cfg.a_aeb);
        }
    }

    next.a = state.a + (cfg.ts / cfg.tau_av) * (next.a_cmd - state.a);
    next.v = (state.v + next.a * cfg.ts).max(0.0);
    next.r = state.r + (v_l - state.v) * cfg.ts;
    next.t = state.t + cfg.ts;
    next
}

pub fn initial_state(scenario: &ScenarioSample, cfg: &AvConfig) -> SimState {
    let ttc = time_to_collision(scenario.r0, scenario.v0, scenario.v_l);
    SimState {
        t: 0.0,
        r: scenario.r0,
        v: scenario.v0,
        a: 0.0,
        a_cmd: 0.0,
        mode: if ttc < aeb_threshold(scenario.v0, cfg) {
            Mode::Aeb
        } else {
            Mode::Acc
        },
        prev_err: 0.0,
        a_d_prev: 0.0,
    }
}

/// Run one cut-in event to a crash or the end of the horizon.
pub fn simulate(scenario: &ScenarioSample, cfg: &AvConfig) -> Result<SimTrace> {
    run(scenario, cfg, true)
}

/// As [`simulate`] but without keeping the state history.
pub fn simulate_summary(scenario: &ScenarioSample, cfg: &AvConfig) -> Result<SimTrace> {
    run(scenario, cfg, false)
}

fn run(scenario: &ScenarioSample, cfg: &AvConfig, record: bool) -> Result<SimTrace> {
    let mut state = initial_state(scenario, cfg);
    let mut states = Vec::new();
    if record {
        states.reserve(cfg.steps() + 1);
        states.push(state);
    }
    let mut min_range = state.r;
    let mut max_ttc_inv = (state.v - scenario.v_l) / state.r;
    let mut distance = 0.0;
    let mut t_end = 0.0;
    let mut delta_v = None;

    for k in 0..cfg.steps() {
        let mut next = step(&state, scenario, cfg);
        next.t = (k + 1) as f64 * cfg.ts;
        if !(next.r.is_finite() && next.v.is_finite() && next.a.is_finite() && next.a_cmd.is_finite()) {
            return Err(Error::NonFiniteState {
                t: next.t,
                what: format!("r={}, v={}, a={}, a_cmd={}", next.r, next.v, next.a, next.a_cmd),
            });
        }
        min_range = min_range.min(next.r);
        max_ttc_inv = if next.r > 0.0 {
            max_ttc_inv.max((next.v - scenario.v_l) / next.r)
        } else {
            f64::INFINITY
        };
        if next.r <= 0.0 {
            // crash inside this step: closing speed was constant over it
            let closing = state.v - scenario.v_l;
            let dt = (state.r / closing).clamp(0.0, cfg.ts);
            distance += state.v * dt;
            t_end = state.t + dt;
            delta_v = Some(closing);
            if record {
                states.push(next);
            }
            break;
        }
        distance += state.v * cfg.ts;
        t_end = next.t;
        if record {
            states.push(next);
        }
        state = next;
    }

    let outcome = if delta_v.is_some() {
        Outcome::Crash
    } else if min_range < cfg.r_conflict {
        Outcome::Conflict
    } else {
        Outcome::None
    };
    Ok(SimTrace {
        states,
        outcome,
        t_end,
        min_range,
        max_ttc_inv,
        delta_v,
        distance,
    })
}

/// Conflict when the range dropped strictly below the proximity-zone depth;
/// crash when it reached zero.
pub fn classify_events(trace: &SimTrace, cfg: &AvConfig) -> EventRecord {
    let crash = trace.delta_v.is_some() && trace.min_range <= 0.0;
    EventRecord {
        conflict: trace.min_range < cfg.r_conflict,
        crash,
        delta_v: if crash { trace.delta_v } else { None },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::derive_kinematics;

    pub(crate) fn scenario(v_l: f64, r0: f64, closing: f64) -> ScenarioSample {
        let k = derive_kinematics(v_l, 1.0 / r0, closing / r0).unwrap();
        ScenarioSample {
            v_l,
            r_inv: 1.0 / r0,
            ttc_inv: closing / r0,
            r0: k.r0,
            rdot: k.rdot,
            v0: k.v0,
            likelihood: 1.0,
        }
    }

    fn passive() -> AvConfig {
        AvConfig {
            kp_acc: 0.0,
            ki_acc: 0.0,
            ttc_aeb_schedule: vec![(0.0, 0.0)],
            ..AvConfig::default()
        }
    }

    #[test]
    fn acc_equilibrium() {
        let cfg = AvConfig::default();
        let (a, err) = acc_command(2.0, 0.0, 1.25, &cfg);
        assert_eq!(a, 1.25);
        assert_eq!(err, 0.0);
    }

    #[test]
    fn acc_saturates() {
        let cfg = AvConfig::default();
        assert_eq!(acc_command(0.5, 0.0, 0.0, &cfg).0, -5.0);
        assert_eq!(acc_command(6.0, 0.0, 0.0, &cfg).0, 5.0);
    }

    #[test]
    fn acc_single_step_expansion() {
        let cfg = AvConfig {
            kp_acc: -0.5,
            ki_acc: -0.2,
            ..AvConfig::default()
        };
        // t_hw = 2.4 → err = -(2.4 - 2) = -0.4
        let e = -0.4;
        let want = 0.3 + (-0.5) * e + (-0.2) * e * 0.1 / 2.0;
        let (a, err) = acc_command(2.4, 0.0, 0.3, &cfg);
        assert!((err - e).abs() < 1e-15);
        assert!((a - want).abs() < 1e-12);
    }

    #[test]
    fn threshold_schedule() {
        let cfg = AvConfig::default();
        assert_eq!(aeb_threshold(15.0, &cfg), 1.3);
        assert!((aeb_threshold(10.0, &cfg) - 1.15).abs() < 1e-12);
        assert_eq!(aeb_threshold(60.0, &cfg), 1.5);
        assert_eq!(aeb_threshold(1.0, &cfg), 1.0);
    }

    #[test]
    fn equilibrium_step_keeps_range() {
        let cfg = AvConfig::default();
        let s = scenario(20.0, 40.0, 0.0);
        let st = SimState {
            t: 0.0,
            r: 40.0,
            v: 20.0,
            a: 0.0,
            a_cmd: 0.0,
            mode: Mode::Acc,
            prev_err: 0.0,
            a_d_prev: 0.0,
        };
        let n = step(&st, &s, &cfg);
        assert_eq!(n.r, 40.0);
        assert_eq!(n.v, 20.0);
        assert_eq!(n.a, 0.0);
    }

    #[test]
    fn aeb_rate_limited_onset() {
        let cfg = AvConfig::default();
        // closing 10 m/s at 5 m: TTC 0.5 s, below any threshold
        let s = scenario(10.0, 5.0, 10.0);
        let st = SimState {
            t: 0.0,
            r: 5.0,
            v: 20.0,
            a: 0.0,
            a_cmd: 0.0,
            mode: Mode::Acc,
            prev_err: 0.0,
            a_d_prev: 0.0,
        };
        let n = step(&st, &s, &cfg);
        assert_eq!(n.mode, Mode::Aeb);
        assert!((n.a_cmd + 1.6).abs() < 1e-12);
    }

    #[test]
    fn first_order_lag_recursion() {
        let cfg = AvConfig {
            tau_av: 0.5,
            ..AvConfig::default()
        };
        let c = -3.0;
        let g = cfg.ts / cfg.tau_av;
        let s = scenario(20.0, 1000.0, 0.0);
        let mut st = SimState {
            t: 0.0,
            r: 1000.0,
            v: 20.0,
            a: 0.0,
            a_cmd: c,
            mode: Mode::Aeb,
            prev_err: 0.0,
            a_d_prev: 0.0,
        };
        let cfg = AvConfig { a_aeb: 3.0, ..cfg };
        for k in 1..=10 {
            st = step(&st, &s, &cfg);
            let want = c * (1.0 - (1.0 - g).powi(k));
            assert!((st.a - want).abs() < 1e-12, "step {k}: {} vs {want}", st.a);
        }
    }

    #[test]
    fn passive_crash_closed_form() {
        let cfg = passive();
        let tr = simulate(&scenario(10.0, 4.0, 2.0), &cfg).unwrap();
        assert_eq!(tr.outcome, Outcome::Crash);
        assert!((tr.t_end - 2.0).abs() <= cfg.ts);
        assert_eq!(tr.delta_v, Some(2.0));
        let ev = classify_events(&tr, &cfg);
        assert!(ev.crash && ev.conflict);
    }

    #[test]
    fn equal_speeds_far_away() {
        let cfg = AvConfig::default();
        let tr = simulate(&scenario(20.0, 70.0, 0.0), &cfg).unwrap();
        assert_eq!(tr.outcome, Outcome::None);
        assert!(tr.min_range > cfg.r_conflict);
        assert!(tr.delta_v.is_none());
    }

    #[test]
    fn starting_inside_the_zone_is_a_conflict() {
        let cfg = AvConfig::default();
        let tr = simulate(&scenario(20.0, 8.0, 0.0), &cfg).unwrap();
        assert!(classify_events(&tr, &cfg).conflict);
    }

    #[test]
    fn conflict_boundary_is_strict() {
        let cfg = AvConfig::default();
        let tr = SimTrace {
            states: vec![],
            outcome: Outcome::None,
            t_end: 8.0,
            min_range: cfg.r_conflict,
            max_ttc_inv: 0.0,
            delta_v: None,
            distance: 100.0,
        };
        let ev = classify_events(&tr, &cfg);
        assert!(!ev.conflict && !ev.crash && ev.delta_v.is_none());
    }

    #[test]
    fn constant_speed_distance() {
        let tr = simulate(&scenario(20.0, 1000.0, 0.0), &passive()).unwrap();
        assert_eq!(tr.distance, 160.0);
        assert_eq!(tr.t_end, 8.0);
        assert_eq!(tr.states.len(), 81);
    }

    fn settled_headway(r0: f64, horizon: f64) -> f64 {
        let cfg = AvConfig {
            t_lc_max: horizon,
            ..AvConfig::default()
        };
        let tr = simulate(&scenario(20.0, r0, 0.0), &cfg).unwrap();
        assert!(tr.states.iter().all(|s| s.mode == Mode::Acc));
        let last = tr.states.last().unwrap();
        last.r / last.v
    }

    #[test]
    fn headway_converges_over_long_horizon() {
        let thw = settled_headway(44.0, 60.0);
        assert!((thw - 2.0).abs() / 2.0 < 0.05, "t_hw = {thw}");
    }

    #[test]
    fn saturated_start_settles_on_the_slow_integral_mode() {
        // the first command saturates, leaving the integral far from rest;
        // the remaining error decays with a time constant of roughly 30 s
        let at_60 = settled_headway(70.0, 60.0);
        let at_120 = settled_headway(70.0, 120.0);
        assert!(at_120 < at_60 && at_60 > 2.0);
        assert!((at_120 - 2.0).abs() / 2.0 < 0.05, "t_hw = {at_120}");
    }

    #[test]
    fn config_validation() {
        assert!(AvConfig::default().validate().is_ok());
        let bad = AvConfig {
            r_aeb: 16.0,
            ..AvConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = AvConfig {
            error_sign: 0.5,
            ..AvConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
