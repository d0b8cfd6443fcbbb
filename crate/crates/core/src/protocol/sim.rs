//! A simulated token behind the reader antenna, optionally energy-limited.

use crate::fuzzy::FeConfig;
use crate::gen2::Gen2Frame;
use crate::powersim::{run_with_iem, CostTable, EnergyState, IemPlan, PowerModel};
use crate::puf::{mix, PufDevice};

use super::token::{commit_firmware, token_boot, token_handle, Effect, Mode, Nvm, Reply, TokenState};
use super::{Endpoint, LinkFault};

/// Boot retries after a brownout before the token is considered dead.
const MAX_BOOT_TRIES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerEnv {
    pub model: PowerModel,
    pub costs: CostTable,
    pub distance_cm: f64,
    pub sleep_ms: f64,
    /// Reader-to-tag air time per bit.
    pub ms_per_bit: f64,
}

impl PowerEnv {
    pub fn new(distance_cm: f64, sleep_ms: f64) -> Self {
        PowerEnv {
            model: PowerModel::default(),
            costs: CostTable::default(),
            distance_cm,
            sleep_ms,
            ms_per_bit: 0.025,
        }
    }
}

/// Forced power failures, on top of those the energy model produces.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BrownoutPlan {
    /// 1-based delivery counts at which power fails before handling.
    pub at_deliveries: Vec<usize>,
    /// Power fails after this many bytes of the next commit.
    pub during_commit_after: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SimEvent {
    Boot { otf: bool, mode: Mode },
    Brownout { delivery: usize },
    Reset,
    Commit { bytes: usize, complete: bool },
}

/// What the bootloader copied into the application area.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommitRecord {
    pub start_block: u16,
    pub bytes: Vec<u8>,
    pub complete: bool,
}

pub struct TokenSim {
    pub dev: PufDevice,
    pub fe: FeConfig,
    pub state: TokenState,
    pub temperature: f64,
    pub power: Option<(PowerEnv, EnergyState)>,
    pub brownouts: BrownoutPlan,
    pub events: Vec<SimEvent>,
    pub commits: Vec<CommitRecord>,
    seed: u64,
    boots: u64,
    deliveries: usize,
}

impl TokenSim {
    /// A token with unlimited power; it boots on the first frame.
    pub fn new(dev: PufDevice, fe: FeConfig, nvm: Nvm, temperature: f64, seed: u64) -> Self {
        TokenSim {
            dev,
            fe,
            state: TokenState {
                mode: Mode::Booting,
                volatile: Default::default(),
                nvm,
            },
            temperature,
            power: None,
            brownouts: BrownoutPlan::default(),
            events: Vec::new(),
            commits: Vec::new(),
            seed,
            boots: 0,
            deliveries: 0,
        }
    }

    /// Starts from an empty capacitor in the reader field.
    pub fn with_power(mut self, env: PowerEnv, noise_seed: u64) -> Self {
        let noise = env.model.sample_noise(noise_seed);
        self.power = Some((env, EnergyState::new(env.model, env.distance_cm, noise, 0.0)));
        self
    }

    pub fn elapsed_ms(&self) -> f64 {
        self.power.map_or(0.0, |(_, e)| e.time_ms)
    }

    fn power_fail(&mut self) {
        self.state.reset();
        assert!(self.state.volatile.is_zeroed(), "volatile state survived a reset");
        self.events.push(SimEvent::Brownout {
            delivery: self.deliveries,
        });
        if let Some((env, e)) = &mut self.power {
            // the MCU is off below the floor; it drains nothing more
            e.v_cap = e.v_cap.min(env.model.v_min);
        }
    }

    /// Runs `plan` on the capacitor; false on brownout.
    fn spend(&mut self, plan: &IemPlan) -> bool {
        let Some((_, e)) = &mut self.power else {
            return true;
        };
        let r = run_with_iem(plan, e);
        *e = r.state;
        r.success
    }

    fn boot(&mut self) -> bool {
        for _ in 0..MAX_BOOT_TRIES {
            if let Some((env, e)) = &mut self.power {
                match e.charge_to(env.model.v_boot) {
                    Some(charged) => *e = charged,
                    None => return false,
                }
            }
            let costs = self.power.map(|(env, _)| (env.costs, env.sleep_ms));
            if let Some((costs, sleep)) = costs {
                let ok = self.spend(&IemPlan::single(costs.boot_prelude()))
                    && self.spend(&IemPlan::fe_gen(&costs, self.fe.blocks, sleep));
                if !ok {
                    self.power_fail();
                    continue;
                }
            }
            let nvm = self.state.nvm.clone();
            self.boots += 1;
            self.state = token_boot(&self.dev, nvm, self.temperature, &self.fe, mix(self.seed, self.boots));
            self.events.push(SimEvent::Boot {
                otf: self.state.volatile.otf,
                mode: self.state.mode,
            });
            return true;
        }
        false
    }

    fn after_reset(&mut self) {
        assert!(self.state.volatile.is_zeroed(), "volatile state survived a reset");
        self.events.push(SimEvent::Reset);
    }
}

impl Endpoint for TokenSim {
    fn transact(&mut self, frame: &Gen2Frame) -> Result<Reply, LinkFault> {
        self.deliveries += 1;
        if self.state.mode == Mode::Booting && !self.boot() {
            return Err(LinkFault::Timeout);
        }
        if self.brownouts.at_deliveries.contains(&self.deliveries) {
            self.power_fail();
            return Err(LinkFault::Brownout);
        }
        if let Some((env, e)) = &mut self.power {
            *e = e.sleep(frame.len() as f64 * env.ms_per_bit);
        }
        let env = self.power.map(|(env, _)| env);
        if let Some(env) = env {
            if !self.spend(&IemPlan::single(env.costs.frame)) {
                self.power_fail();
                return Err(LinkFault::Brownout);
            }
        }

        let setup = self.state.volatile.setup;
        let handled = token_handle(&mut self.state, frame);
        if handled.mac_bytes > 0 {
            if let Some(env) = env {
                if !self.spend(&IemPlan::mac(&env.costs, handled.mac_bytes, env.sleep_ms)) {
                    self.power_fail();
                    return Err(LinkFault::Brownout);
                }
            }
        }
        match handled.effect {
            Effect::None => {}
            Effect::Reset => self.after_reset(),
            Effect::Commit => {
                let setup = setup.expect("commit follows a setup");
                let size = setup.size as usize;
                let mut limit = self.brownouts.during_commit_after.take();
                if let Some((env, e)) = &mut self.power {
                    let cycles = size as u64 * env.costs.commit_per_byte;
                    match e.step(cycles) {
                        Ok(next) => *e = next,
                        Err(b) => {
                            *e = b.state;
                            let done = (b.after_cycles.saturating_sub(1) / env.costs.commit_per_byte) as usize;
                            limit = Some(limit.map_or(done, |l| l.min(done)));
                        }
                    }
                }
                let copied = commit_firmware(&mut self.state, limit);
                let complete = copied == size;
                self.commits.push(CommitRecord {
                    start_block: setup.start_block,
                    bytes: self.state.nvm.download_area[..copied].to_vec(),
                    complete,
                });
                self.events.push(SimEvent::Commit { bytes: copied, complete });
                self.after_reset();
                if !complete {
                    self.power_fail();
                    return Err(LinkFault::Brownout);
                }
            }
        }
        handled.reply.ok_or(LinkFault::Timeout)
    }
}
