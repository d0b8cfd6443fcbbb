//! Reservoir-capacitor model for a batteryless token.
//!
//! While the MCU runs, the capacitor voltage follows
//! `dV/dt = c·(V_max − V) − D`, where `c = κ·n / d²` is the harvest rate at
//! distance `d` (with per-session log-normal noise `n`) and `D` is the drain
//! per second of execution. Sleeping drains nothing. The ODE has a closed
//! form, so brownout cycles are computed exactly rather than integrated.

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};

use crate::puf::mix;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerModel {
    pub clock_hz: f64,
    /// Volts drawn per executed cycle.
    pub drain_per_cycle: f64,
    /// Harvest constant in cm²/s.
    pub kappa: f64,
    /// Log-normal sigma of the per-session harvest noise.
    pub kappa_sigma: f64,
    pub v_max: f64,
    pub v_min: f64,
    pub v_boot: f64,
}

impl Default for PowerModel {
    fn default() -> Self {
        PowerModel {
            clock_hz: 4.0e6,
            drain_per_cycle: 2.5e-6,
            kappa: 4500.0,
            kappa_sigma: 0.3,
            v_max: 2.6,
            v_min: 1.8,
            v_boot: 2.0,
        }
    }
}

impl PowerModel {
    pub fn zero_harvest() -> Self {
        PowerModel {
            kappa: 0.0,
            ..PowerModel::default()
        }
    }

    /// Harvest rate (1/s) at `distance_cm` for a given noise multiplier.
    pub fn rate(&self, distance_cm: f64, noise: f64) -> f64 {
        assert!(distance_cm > 0.0, "distance must be positive");
        self.kappa * noise / (distance_cm * distance_cm)
    }

    /// Per-session harvest noise drawn from `seed`.
    pub fn sample_noise(&self, seed: u64) -> f64 {
        if self.kappa_sigma == 0.0 {
            return 1.0;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, 0xE4E7));
        LogNormal::new(0.0, self.kappa_sigma)
            .expect("valid sigma")
            .sample(&mut rng)
    }

    fn drain_per_sec(&self) -> f64 {
        self.drain_per_cycle * self.clock_hz
    }

    /// Cycles executable from `v_max` down to `v_min` at a given rate.
    pub fn single_charge_budget(&self, rate: f64) -> f64 {
        let span = self.v_max - self.v_min;
        if rate == 0.0 {
            return span / self.drain_per_cycle;
        }
        let x = self.drain_per_sec() / rate;
        if x <= span {
            return f64::INFINITY;
        }
        self.clock_hz / rate * (x / (x - span)).ln()
    }
}

/// Samples single-charge budgets at one distance.
pub fn sample_budgets(model: &PowerModel, distance_cm: f64, n: usize, seed: u64) -> Vec<f64> {
    (0..n as u64)
        .map(|i| model.single_charge_budget(model.rate(distance_cm, model.sample_noise(mix(seed, i)))))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyState {
    pub v_cap: f64,
    pub distance_cm: f64,
    /// Harvest rate `c` in 1/s.
    pub rate: f64,
    pub time_ms: f64,
    pub cycles_consumed: u64,
    pub model: PowerModel,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Brownout {
    /// Cycles of the failed step that ran before the voltage fell below the floor.
    pub after_cycles: u64,
    pub state: EnergyState,
}

impl EnergyState {
    pub fn new(model: PowerModel, distance_cm: f64, noise: f64, v_cap: f64) -> Self {
        EnergyState {
            v_cap,
            distance_cm,
            rate: model.rate(distance_cm, noise),
            time_ms: 0.0,
            cycles_consumed: 0,
            model,
        }
    }

    fn steady(&self) -> f64 {
        self.model.v_max - self.model.drain_per_sec() / self.rate
    }

    /// Voltage after `secs` of execution from `v0`.
    fn run_voltage(&self, v0: f64, secs: f64) -> f64 {
        if self.rate == 0.0 {
            return v0 - self.model.drain_per_sec() * secs;
        }
        let vs = self.steady();
        vs + (v0 - vs) * (-self.rate * secs).exp()
    }

    /// Executes `cycles`; fails at the first cycle that leaves `v_cap` below `v_min`.
    pub fn step(&self, cycles: u64) -> Result<EnergyState, Brownout> {
        let m = &self.model;
        assert!(self.v_cap >= m.v_min, "step below the operating threshold");
        let secs = cycles as f64 / m.clock_hz;
        let v_end = self.run_voltage(self.v_cap, secs);
        if v_end >= m.v_min {
            return Ok(EnergyState {
                v_cap: v_end,
                time_ms: self.time_ms + secs * 1e3,
                cycles_consumed: self.cycles_consumed + cycles,
                ..*self
            });
        }
        // first cycle count whose end voltage is below the floor
        let t_cross = if self.rate == 0.0 {
            (self.v_cap - m.v_min) / m.drain_per_sec()
        } else {
            let vs = self.steady();
            ((self.v_cap - vs) / (m.v_min - vs)).ln() / self.rate
        };
        let mut k = (t_cross * m.clock_hz).floor().max(0.0) as u64 + 1;
        while k > 1 && self.run_voltage(self.v_cap, (k - 1) as f64 / m.clock_hz) < m.v_min {
            k -= 1;
        }
        while self.run_voltage(self.v_cap, k as f64 / m.clock_hz) >= m.v_min {
            k += 1;
        }
        let k = k.min(cycles);
        let secs = k as f64 / m.clock_hz;
        Err(Brownout {
            after_cycles: k,
            state: EnergyState {
                v_cap: self.run_voltage(self.v_cap, secs),
                time_ms: self.time_ms + secs * 1e3,
                cycles_consumed: self.cycles_consumed + k,
                ..*self
            },
        })
    }

    /// Idle (sleep or radio wait) for `ms`: charging only.
    pub fn sleep(&self, ms: f64) -> EnergyState {
        let v = self.model.v_max - (self.model.v_max - self.v_cap) * (-self.rate * ms / 1e3).exp();
        EnergyState {
            v_cap: v,
            time_ms: self.time_ms + ms,
            ..*self
        }
    }

    /// Charges until `target`; `None` if the harvest can never reach it.
    pub fn charge_to(&self, target: f64) -> Option<EnergyState> {
        if self.v_cap >= target {
            return Some(*self);
        }
        if self.rate == 0.0 || target >= self.model.v_max {
            return None;
        }
        let secs = ((self.model.v_max - self.v_cap) / (self.model.v_max - target)).ln() / self.rate;
        Some(EnergyState {
            v_cap: target,
            time_ms: self.time_ms + secs * 1e3,
            ..*self
        })
    }
}

/// Clock-cycle costs of token operations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CostTable {
    pub trng: u64,
    pub puf_readout: u64,
    pub temp_check: u64,
    pub fe_gen: u64,
    /// Cycles per 240 MAC'd bytes.
    pub mac_per_240: u64,
    pub frame: u64,
    pub boot_init: u64,
    pub commit_per_byte: u64,
}

impl Default for CostTable {
    fn default() -> Self {
        CostTable {
            trng: 375,
            puf_readout: 615,
            temp_check: 734,
            fe_gen: 109_234,
            mac_per_240: 22_197,
            frame: 1_500,
            boot_init: 2_000,
            commit_per_byte: 4,
        }
    }
}

impl CostTable {
    pub fn mac_cycles(&self, bytes: usize) -> u64 {
        (self.mac_per_240 * bytes as u64 + 120) / 240
    }

    /// Work before key generation: init, temperature check, two TRNG draws
    /// (nonce and challenge) and one PUF readout.
    pub fn boot_prelude(&self) -> u64 {
        self.boot_init + self.temp_check + 2 * self.trng + self.puf_readout
    }
}

/// Bytes per MAC subtask: 32 AES block operations.
pub const MAC_SUBTASK_BYTES: usize = 32 * 16;

#[derive(Debug, Clone, PartialEq)]
pub struct IemPlan {
    pub subtasks: Vec<u64>,
    pub sleep_ms: f64,
}

fn split_even(total: u64, parts: usize) -> Vec<u64> {
    let parts = parts.max(1) as u64;
    (0..parts)
        .map(|i| total / parts + u64::from(i < total % parts))
        .collect()
}

impl IemPlan {
    pub fn single(cycles: u64) -> Self {
        IemPlan {
            subtasks: vec![cycles],
            sleep_ms: 0.0,
        }
    }

    /// One subtask per BCH block.
    pub fn fe_gen(costs: &CostTable, blocks: usize, sleep_ms: f64) -> Self {
        IemPlan {
            subtasks: split_even(costs.fe_gen, blocks),
            sleep_ms,
        }
    }

    pub fn mac(costs: &CostTable, bytes: usize, sleep_ms: f64) -> Self {
        let total = costs.mac_cycles(bytes);
        IemPlan {
            subtasks: split_even(total, bytes.div_ceil(MAC_SUBTASK_BYTES)),
            sleep_ms,
        }
    }

    pub fn total_cycles(&self) -> u64 {
        self.subtasks.iter().sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IemResult {
    pub success: bool,
    pub latency_ms: f64,
    pub state: EnergyState,
    /// Cycles executed before the end or the brownout.
    pub cycles: u64,
}

/// Trace rows for plotting voltage against time.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    pub rows: Vec<(f64, f64, &'static str)>,
}

impl Trace {
    fn push(&mut self, s: &EnergyState, event: &'static str) {
        self.rows.push((s.time_ms, s.v_cap, event));
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("time_ms,v_cap_V,event\n");
        for (t, v, e) in &self.rows {
            let _ = writeln!(out, "{t:.4},{v:.5},{e}");
        }
        out
    }
}

pub fn run_with_iem(plan: &IemPlan, state: &EnergyState) -> IemResult {
    run_with_iem_traced(plan, state, &mut Trace::default())
}

/// Runs subtasks in order with `sleep_ms` between consecutive ones.
pub fn run_with_iem_traced(plan: &IemPlan, state: &EnergyState, trace: &mut Trace) -> IemResult {
    let start = state.time_ms;
    let mut s = *state;
    let mut cycles = 0;
    trace.push(&s, "start");
    for (i, &sub) in plan.subtasks.iter().enumerate() {
        match s.step(sub) {
            Ok(next) => {
                s = next;
                cycles += sub;
                trace.push(&s, "subtask");
            }
            Err(b) => {
                trace.push(&b.state, "brownout");
                return IemResult {
                    success: false,
                    latency_ms: b.state.time_ms - start,
                    state: b.state,
                    cycles: cycles + b.after_cycles,
                };
            }
        }
        if i + 1 < plan.subtasks.len() && plan.sleep_ms > 0.0 {
            s = s.sleep(plan.sleep_ms);
            trace.push(&s, "sleep");
        }
    }
    IemResult {
        success: true,
        latency_ms: s.time_ms - start,
        state: s,
        cycles,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColdStart {
    pub success: bool,
    /// Power-on to first reply; `None` when the boot voltage is never reached.
    pub latency_ms: Option<f64>,
}

/// Charge from empty, boot at `v_boot`, derive the key under IEM, send the
/// first reply.
pub fn cold_start_session(
    model: &PowerModel,
    costs: &CostTable,
    distance_cm: f64,
    sleep_ms: f64,
    seed: u64,
) -> ColdStart {
    cold_start_traced(model, costs, distance_cm, sleep_ms, seed, &mut Trace::default())
}

pub fn cold_start_traced(
    model: &PowerModel,
    costs: &CostTable,
    distance_cm: f64,
    sleep_ms: f64,
    seed: u64,
    trace: &mut Trace,
) -> ColdStart {
    let empty = EnergyState::new(*model, distance_cm, model.sample_noise(seed), 0.0);
    let Some(booted) = empty.charge_to(model.v_boot) else {
        return ColdStart {
            success: false,
            latency_ms: None,
        };
    };
    trace.push(&empty, "power_on");
    trace.push(&booted, "boot");
    let prelude = IemPlan::single(costs.boot_prelude());
    let plan = IemPlan::fe_gen(costs, 8, sleep_ms);
    let r = run_with_iem_traced(&prelude, &booted, trace);
    if !r.success {
        return ColdStart {
            success: false,
            latency_ms: Some(r.state.time_ms),
        };
    }
    let r = run_with_iem_traced(&plan, &r.state, trace);
    if !r.success {
        return ColdStart {
            success: false,
            latency_ms: Some(r.state.time_ms),
        };
    }
    match r.state.step(costs.frame) {
        Ok(done) => {
            trace.push(&done, "reply");
            ColdStart {
                success: true,
                latency_ms: Some(done.time_ms),
            }
        }
        Err(b) => {
            trace.push(&b.state, "brownout");
            ColdStart {
                success: false,
                latency_ms: Some(b.state.time_ms),
            }
        }
    }
}

/// Fraction of successful cold starts over `trials` seeds.
pub fn cold_start_success_rate(
    model: &PowerModel,
    costs: &CostTable,
    distance_cm: f64,
    sleep_ms: f64,
    trials: usize,
    seed: u64,
) -> f64 {
    let ok = (0..trials as u64)
        .filter(|&i| cold_start_session(model, costs, distance_cm, sleep_ms, mix(seed, i)).success)
        .count();
    ok as f64 / trials as f64
}
