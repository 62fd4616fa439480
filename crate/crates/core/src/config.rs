//! Simulation configuration.
//!
//! All quantitative knobs of the platform live here: memory map bases and
//! bank sizes, the timing model constants, the scrub interval, the
//! resynchronization cost parameters and the CLIC shape. The defaults
//! reproduce the calibration targets the model is built around: 6-cycle
//! banked interrupt entry, sub-110-cycle spilled context switch round
//! trip, and a resynchronization budget of at most 600 cycles.
//!
//! Configs deserialize from TOML; every field has a default so partial
//! files work.

use serde::{Deserialize, Serialize};

/// How the core complex executes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CoreMode {
    /// One hart, no voting. The golden reference configuration.
    Single,
    /// Three harts in lockstep with majority voting and recovery.
    #[default]
    Tcls,
}

/// Per-step cycle costs of the core timing model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct TimingModel {
    /// Base cost of any retired non-multiply/divide instruction.
    pub alu: u32,
    /// Cost of MUL/MULH/MULHSU/MULHU.
    pub mul: u32,
    /// Cost of DIV/DIVU/REM/REMU.
    pub div: u32,
    /// Extra cycles per data-memory transaction.
    pub mem_latency: u32,
    /// Base cost of a banked interrupt entry or exit (register file swap
    /// plus vector fetch).
    pub irq_entry_base: u32,
}

impl Default for TimingModel {
    fn default() -> Self {
        TimingModel { alu: 1, mul: 1, div: 3, mem_latency: 1, irq_entry_base: 6 }
    }
}

/// Fault-recovery (resynchronization) cost parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ResyncParams {
    /// Words of state saved and restored through the voter: pc + 31
    /// integer registers + 10 CSRs + 32 FPU placeholder words by default.
    pub state_words: u32,
    /// Fixed cycles charged for resetting the three cores.
    pub reset_overhead: u32,
    /// Base address of the dedicated save region in the data bank.
    pub stack_base: u32,
}

impl Default for ResyncParams {
    fn default() -> Self {
        ResyncParams { state_words: 74, reset_overhead: 20, stack_base: 0x0002_FE00 }
    }
}

/// Full simulator configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub core_mode: CoreMode,

    /// Boot ROM base (reset vector) and size in bytes.
    pub rom_base: u32,
    pub rom_size: u32,
    /// Instruction bank base and size in bytes.
    pub instr_base: u32,
    pub instr_size: u32,
    /// Data bank base and size in bytes.
    pub data_base: u32,
    pub data_size: u32,
    /// Peripheral window base (CLIC, timer, DMA, platform control).
    pub periph_base: u32,
    /// External-port window base and size.
    pub ext_base: u32,
    pub ext_size: u32,
    /// Extra cycles charged on external-window accesses.
    pub ext_latency: u32,

    /// Cycles between background scrub steps; 0 disables scrubbing.
    pub scrub_interval: u64,

    pub timing: TimingModel,
    pub resync: ResyncParams,

    /// Number of CLIC interrupt lines.
    pub clic_lines: usize,
    /// Shadow register file count; nesting beyond this depth spills to
    /// memory.
    pub bank_depth: u32,
    /// Words auto-saved per spilled interrupt context.
    pub irq_frame_words: u32,

    /// Simulation stops with a timeout classification at this cycle.
    pub max_cycles: u64,
    /// Base seed for campaign schedule generation.
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            core_mode: CoreMode::Tcls,
            rom_base: 0x0000_0000,
            rom_size: 0x1000,
            instr_base: 0x0001_0000,
            instr_size: 64 * 1024,
            data_base: 0x0002_0000,
            data_size: 64 * 1024,
            periph_base: 0x0003_0000,
            ext_base: 0x4000_0000,
            ext_size: 64 * 1024,
            ext_latency: 2,
            scrub_interval: 64,
            timing: TimingModel::default(),
            resync: ResyncParams::default(),
            clic_lines: 64,
            bank_depth: 1,
            irq_frame_words: 16,
            max_cycles: 10_000_000,
            seed: 1,
        }
    }
}

/// Configuration errors (invalid files or inconsistent values).
#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config file: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot parse config file: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

impl SimConfig {
    /// Load a TOML config file. Missing keys keep their defaults.
    pub fn from_toml_file(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        let cfg: SimConfig = toml::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Check internal consistency: sizes positive and word-aligned, the
    /// resync stack inside the data bank, cost parameters in budget.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let err = |m: String| Err(ConfigError::Invalid(m));
        if self.rom_size == 0 || self.rom_size % 4 != 0 {
            return err(format!("rom_size {} must be a positive multiple of 4", self.rom_size));
        }
        for (name, size) in [("instr_size", self.instr_size), ("data_size", self.data_size)] {
            if size == 0 || size % 4 != 0 {
                return err(format!("{name} {size} must be a positive multiple of 4"));
            }
        }
        if self.resync.state_words < 42 {
            return err("resync.state_words must cover pc + 31 xregs + 10 CSRs (42 words)".into());
        }
        let save_bytes = self.resync.state_words * 4;
        let stack_end = self.resync.stack_base.checked_add(save_bytes);
        let data_end = self.data_base + self.data_size;
        match stack_end {
            Some(end) if self.resync.stack_base >= self.data_base && end <= data_end => {}
            _ => {
                return err(format!(
                    "resync stack [{:#x}, +{save_bytes}) must lie inside the data bank",
                    self.resync.stack_base
                ))
            }
        }
        if self.clic_lines == 0 || self.clic_lines > 256 {
            return err(format!("clic_lines {} must be in 1..=256", self.clic_lines));
        }
        if self.bank_depth == 0 {
            return err("bank_depth must be at least 1".into());
        }
        if self.irq_frame_words < 16 {
            return err("irq_frame_words must cover the 16-word architectural frame".into());
        }
        if self.max_cycles == 0 {
            return err("max_cycles must be positive".into());
        }
        if self.timing.alu == 0 || self.timing.mul == 0 || self.timing.div == 0 {
            return err("timing costs must be at least 1 cycle".into());
        }
        Ok(())
    }

    /// Save + reset + restore cycle count of one resynchronization under
    /// this configuration.
    pub fn resync_cost(&self) -> u64 {
        resync_cost(self.resync.state_words, self.timing.mem_latency, self.resync.reset_overhead)
    }

    /// Entry cost of a banked (fast-path) interrupt.
    pub fn irq_banked_cost(&self) -> u32 {
        self.timing.irq_entry_base
    }

    /// Entry or exit cost of a spilled (memory save/restore) interrupt.
    pub fn irq_spilled_cost(&self) -> u32 {
        self.timing.irq_entry_base + self.irq_frame_words * (1 + self.timing.mem_latency)
    }
}

/// Cycle cost of one resynchronization: each state word crosses the
/// memory system twice (save and restore), plus a fixed reset overhead.
pub fn resync_cost(n_state_words: u32, mem_latency: u32, reset_overhead: u32) -> u64 {
    assert!(n_state_words > 0);
    n_state_words as u64 * (1 + mem_latency as u64) * 2 + reset_overhead as u64
}
