//! System composition: address decoding, crossbar arbitration, the
//! global cycle loop and run control.
//!
//! Default memory map (all bases configurable):
//!
//! | region            | base          | size    |
//! |-------------------|---------------|---------|
//! | boot ROM          | `0x0000_0000` | 4 KiB   |
//! | instruction bank  | `0x0001_0000` | 64 KiB  |
//! | data bank         | `0x0002_0000` | 64 KiB  |
//! | CLIC registers    | `0x0003_0000` | 4 KiB   |
//! | timer             | `0x0003_1000` | 256 B   |
//! | DMA registers     | `0x0003_2000` | 256 B   |
//! | platform control  | `0x0003_3000` | 256 B   |
//! | external window   | `0x4000_0000` | 64 KiB  |
//!
//! Every cycle advances the devices in a fixed order: timer, CLIC
//! arbitration, core step, DMA cycle, scrub step. The order is part of
//! the determinism contract: identical (image, config, seed) inputs
//! produce bit-identical traces and run results.
//!
//! Exit conventions: `ecall` with the magic in `a7` terminates with `a0`
//! as exit code, and a store to the platform-control exit register
//! terminates with the stored value.

use std::collections::BTreeMap;
use std::io::Write;

use crate::campaign::{FaultEvent, FaultTarget};
use crate::clic::{
    self, clic_arbitrate, clic_read, clic_write, timer_read, timer_write, ClicState, TimerState,
};
use crate::config::{CoreMode, SimConfig};
use crate::dma::{self, dma_reg_read, dma_reg_write, DmaEngine, DmaEvent, Launch};
use crate::ecc::MemoryBank;
use crate::isa::{
    cause, disasm, execute_step, BusError, CoreBus, CoreState, IrqRequest, LockstepBus, Retired,
    StepCtx, StepResult,
};
use crate::tcls::{LockstepEnsemble, ResyncRecord, VotedStep};
use crate::trace::TraceWriter;

/// Devices reachable through the crossbar.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeviceId {
    Rom,
    InstrBank,
    DataBank,
    Clic,
    Timer,
    Dma,
    PlatCtrl,
    Ext,
}

/// One contiguous decode region.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Region {
    pub base: u32,
    pub size: u32,
    pub dev: DeviceId,
}

/// Total address decode: every address maps to exactly one region or to
/// a bus error.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MemoryMap {
    regions: Vec<Region>,
}

impl MemoryMap {
    pub fn from_config(cfg: &SimConfig) -> Self {
        let regions = vec![
            Region { base: cfg.rom_base, size: cfg.rom_size, dev: DeviceId::Rom },
            Region { base: cfg.instr_base, size: cfg.instr_size, dev: DeviceId::InstrBank },
            Region { base: cfg.data_base, size: cfg.data_size, dev: DeviceId::DataBank },
            Region { base: cfg.periph_base, size: 0x1000, dev: DeviceId::Clic },
            Region { base: cfg.periph_base + 0x1000, size: 0x100, dev: DeviceId::Timer },
            Region { base: cfg.periph_base + 0x2000, size: 0x100, dev: DeviceId::Dma },
            Region { base: cfg.periph_base + 0x3000, size: 0x100, dev: DeviceId::PlatCtrl },
            Region { base: cfg.ext_base, size: cfg.ext_size, dev: DeviceId::Ext },
        ];
        let map = MemoryMap { regions };
        map.validate();
        map
    }

    fn validate(&self) {
        let mut sorted = self.regions.clone();
        sorted.sort_by_key(|r| r.base);
        for w in sorted.windows(2) {
            assert!(
                w[0].base as u64 + w[0].size as u64 <= w[1].base as u64,
                "memory map regions overlap: {:?} and {:?}",
                w[0],
                w[1]
            );
        }
        for r in &sorted {
            assert!(r.base % 4 == 0 && r.size % 4 == 0, "region not word aligned: {r:?}");
        }
    }

    /// Decode an address to its device and offset; `None` is a bus error.
    pub fn decode(&self, addr: u32) -> Option<(DeviceId, u32)> {
        self.regions
            .iter()
            .find(|r| addr >= r.base && (addr - r.base) < r.size)
            .map(|r| (r.dev, addr - r.base))
    }

    pub fn regions(&self) -> &[Region] {
        &self.regions
    }
}

/// Crossbar requesters, in fixed priority-rotation order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Requester {
    Core = 0,
    Dma = 1,
    External = 2,
}

const N_REQUESTERS: usize = 3;

/// Crossbar targets: the two banks decode independently, everything
/// behind the peripheral port shares one target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Target {
    Rom = 0,
    InstrBank = 1,
    DataBank = 2,
    Periph = 3,
    Ext = 4,
}

pub fn device_target(dev: DeviceId) -> Target {
    match dev {
        DeviceId::Rom => Target::Rom,
        DeviceId::InstrBank => Target::InstrBank,
        DeviceId::DataBank => Target::DataBank,
        DeviceId::Clic | DeviceId::Timer | DeviceId::Dma | DeviceId::PlatCtrl => Target::Periph,
        DeviceId::Ext => Target::Ext,
    }
}

/// One request for a target this cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct XbarRequest {
    pub requester: Requester,
    pub target: Target,
}

/// Round-robin grant cursors, one per target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CrossbarState {
    cursors: [u8; 5],
}

/// Grant requests to targets: distinct targets proceed in parallel,
/// conflicting requesters are granted round-robin and losers stall one
/// cycle. Returns one grant flag per request, in order.
pub fn crossbar_arbitrate(requests: &[XbarRequest], state: &mut CrossbarState) -> Vec<bool> {
    let mut grants = vec![false; requests.len()];
    for target_idx in 0..5 {
        let mut requesters: Vec<Requester> = Vec::new();
        for r in requests.iter().filter(|r| r.target as usize == target_idx) {
            if !requesters.contains(&r.requester) {
                requesters.push(r.requester);
            }
        }
        if requesters.is_empty() {
            continue;
        }
        let winner = if requesters.len() == 1 {
            requesters[0]
        } else {
            let cursor = state.cursors[target_idx] as usize;
            *requesters
                .iter()
                .min_by_key(|r| (**r as usize + N_REQUESTERS - cursor) % N_REQUESTERS)
                .unwrap()
        };
        state.cursors[target_idx] = ((winner as usize + 1) % N_REQUESTERS) as u8;
        for (i, r) in requests.iter().enumerate() {
            if r.target as usize == target_idx && r.requester == winner {
                grants[i] = true;
            }
        }
    }
    grants
}

/// Host-side handler for the external-port window.
pub trait ExternalPort {
    /// Read `width` bytes at the window offset; `None` is a bus error.
    fn read(&mut self, offset: u32, width: u8) -> Option<u32>;
    /// Write into the window. External writes are always accepted.
    fn write(&mut self, offset: u32, width: u8, value: u32);
}

/// Platform control registers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PlatCtrl {
    pub exit_req: Option<u32>,
}

pub const PLAT_EXIT: u32 = 0x00;
pub const PLAT_ID: u32 = 0x04;
pub const PLAT_CYCLE_LO: u32 = 0x08;
pub const PLAT_CYCLE_HI: u32 = 0x0C;
pub const PLATFORM_ID_VALUE: u32 = 0x53454E54;

/// Per-step side notes from committed bus traffic.
#[derive(Debug, Clone, Default)]
pub struct BusEvents {
    /// Demand corrections (address, flipped bit) seen this step.
    pub corrections: Vec<(u32, u8)>,
}

/// All addressable devices behind the crossbar.
pub struct SystemBus {
    pub map: MemoryMap,
    pub rom: Vec<u32>,
    pub instr_bank: MemoryBank,
    pub data_bank: MemoryBank,
    pub clic: ClicState,
    pub timer: TimerState,
    pub dma: DmaEngine,
    pub plat: PlatCtrl,
    pub ext: Option<Box<dyn ExternalPort>>,
    ext_memo: Vec<(u32, u8, u32)>,
    pub now: u64,
    pub events: BusEvents,
}

impl SystemBus {
    pub fn new(cfg: &SimConfig) -> Self {
        SystemBus {
            map: MemoryMap::from_config(cfg),
            rom: vec![0; (cfg.rom_size / 4) as usize],
            instr_bank: MemoryBank::new(cfg.instr_base, cfg.instr_size),
            data_bank: MemoryBank::new(cfg.data_base, cfg.data_size),
            clic: ClicState::new(cfg.clic_lines),
            timer: TimerState::default(),
            dma: DmaEngine::new(),
            plat: PlatCtrl::default(),
            ext: None,
            ext_memo: Vec::new(),
            now: 0,
            events: BusEvents::default(),
        }
    }

    /// Reset the per-step external-read memo. Called once per core step
    /// so all lockstep replicas and the committed replay observe exactly
    /// one callback invocation per access.
    pub fn begin_step(&mut self) {
        self.ext_memo.clear();
    }

    fn bank_mut(&mut self, dev: DeviceId) -> &mut MemoryBank {
        match dev {
            DeviceId::InstrBank => &mut self.instr_bank,
            DeviceId::DataBank => &mut self.data_bank,
            _ => unreachable!("not a bank"),
        }
    }

    fn extract(word: u32, addr: u32, width: u8) -> u32 {
        let shift = (addr & 3) * 8;
        match width {
            1 => (word >> shift) & 0xFF,
            2 => (word >> shift) & 0xFFFF,
            _ => word,
        }
    }

    fn read_inner(&mut self, addr: u32, width: u8, commit: bool) -> Result<u32, BusError> {
        debug_assert!(matches!(width, 1 | 2 | 4) && addr % width as u32 == 0);
        let (dev, off) = self.map.decode(addr).ok_or(BusError::Unmapped(addr))?;
        match dev {
            DeviceId::Rom => {
                let word = self.rom[(off / 4) as usize];
                Ok(Self::extract(word, addr, width))
            }
            DeviceId::InstrBank | DeviceId::DataBank => {
                let word_addr = addr & !3;
                let bank = self.bank_mut(dev);
                let (word, status) = if commit {
                    bank.read_word(word_addr)
                } else {
                    bank.peek_word(word_addr)
                }
                .expect("decoded address inside bank");
                match status {
                    crate::ecc::DecodeStatus::Uncorrectable => Err(BusError::Uncorrectable(addr)),
                    crate::ecc::DecodeStatus::Corrected(bit) => {
                        if commit {
                            self.events.corrections.push((word_addr, bit));
                        }
                        Ok(Self::extract(word, addr, width))
                    }
                    crate::ecc::DecodeStatus::Ok => Ok(Self::extract(word, addr, width)),
                }
            }
            DeviceId::Clic if width == 4 => {
                clic_read(&self.clic, off).ok_or(BusError::Unmapped(addr))
            }
            DeviceId::Timer if width == 4 => {
                timer_read(&self.timer, off).ok_or(BusError::Unmapped(addr))
            }
            DeviceId::Dma if width == 4 => {
                dma_reg_read(&self.dma, off).ok_or(BusError::Unmapped(addr))
            }
            DeviceId::PlatCtrl if width == 4 => match off {
                PLAT_ID => Ok(PLATFORM_ID_VALUE),
                PLAT_CYCLE_LO => Ok(self.now as u32),
                PLAT_CYCLE_HI => Ok((self.now >> 32) as u32),
                _ => Err(BusError::Unmapped(addr)),
            },
            DeviceId::Ext => {
                if let Some(&(_, _, v)) =
                    self.ext_memo.iter().find(|&&(a, w, _)| a == addr && w == width)
                {
                    return Ok(v);
                }
                let port = self.ext.as_mut().ok_or(BusError::Unmapped(addr))?;
                let v = port.read(off, width).ok_or(BusError::Unmapped(addr))?;
                self.ext_memo.push((addr, width, v));
                Ok(v)
            }
            _ => Err(BusError::Unmapped(addr)),
        }
    }

    fn write_inner(&mut self, addr: u32, width: u8, value: u32) -> Result<(), BusError> {
        debug_assert!(matches!(width, 1 | 2 | 4) && addr % width as u32 == 0);
        let (dev, off) = self.map.decode(addr).ok_or(BusError::Unmapped(addr))?;
        match dev {
            DeviceId::Rom => Err(BusError::Unmapped(addr)),
            DeviceId::InstrBank | DeviceId::DataBank => {
                let bank = self.bank_mut(dev);
                if width == 4 {
                    bank.write_word(addr, value).expect("decoded address inside bank");
                    Ok(())
                } else {
                    let status = bank
                        .write_subword(addr, width, value)
                        .expect("decoded address inside bank");
                    if status.is_uncorrectable() {
                        return Err(BusError::Uncorrectable(addr));
                    }
                    if let crate::ecc::DecodeStatus::Corrected(bit) = status {
                        self.events.corrections.push((addr & !3, bit));
                    }
                    Ok(())
                }
            }
            DeviceId::Clic if width == 4 => {
                clic_write(&mut self.clic, off, value).ok_or(BusError::Unmapped(addr))
            }
            DeviceId::Timer if width == 4 => {
                timer_write(&mut self.timer, off, value).ok_or(BusError::Unmapped(addr))
            }
            DeviceId::Dma if width == 4 => {
                dma_reg_write(&mut self.dma, off, value).ok_or(BusError::Unmapped(addr))
            }
            DeviceId::PlatCtrl if width == 4 => match off {
                PLAT_EXIT => {
                    self.plat.exit_req = Some(value);
                    Ok(())
                }
                _ => Err(BusError::Unmapped(addr)),
            },
            DeviceId::Ext => {
                let port = self.ext.as_mut().ok_or(BusError::Unmapped(addr))?;
                port.write(off, width, value);
                Ok(())
            }
            _ => Err(BusError::Unmapped(addr)),
        }
    }

    /// Is the aligned word at `addr` currently uncorrectable?
    pub fn word_is_uncorrectable(&self, addr: u32) -> bool {
        match self.map.decode(addr) {
            Some((DeviceId::InstrBank, _)) => self
                .instr_bank
                .peek_word(addr & !3)
                .map(|(_, s)| s.is_uncorrectable())
                .unwrap_or(false),
            Some((DeviceId::DataBank, _)) => self
                .data_bank
                .peek_word(addr & !3)
                .map(|(_, s)| s.is_uncorrectable())
                .unwrap_or(false),
            _ => false,
        }
    }
}

impl CoreBus for SystemBus {
    fn fetch(&mut self, addr: u32) -> Result<u32, BusError> {
        self.read_inner(addr, 4, true)
    }

    fn load(&mut self, addr: u32, width: u8) -> Result<u32, BusError> {
        self.read_inner(addr, width, true)
    }

    fn store(&mut self, addr: u32, width: u8, value: u32) -> Result<(), BusError> {
        self.write_inner(addr, width, value)
    }
}

impl LockstepBus for SystemBus {
    fn peek(&mut self, addr: u32, width: u8) -> Result<u32, BusError> {
        self.read_inner(addr, width, false)
    }

    fn probe_store(&mut self, addr: u32, width: u8) -> Result<(), BusError> {
        let (dev, off) = self.map.decode(addr).ok_or(BusError::Unmapped(addr))?;
        match dev {
            DeviceId::Rom => Err(BusError::Unmapped(addr)),
            DeviceId::InstrBank | DeviceId::DataBank => {
                if width < 4 {
                    // Sub-word stores read-modify-write the codeword.
                    self.read_inner(addr & !3, 4, false).map(|_| ())
                } else {
                    Ok(())
                }
            }
            DeviceId::Clic if width == 4 => {
                if off == clic::CLIC_THRESHOLD_OFF
                    || off == clic::CLIC_VECTOR_BASE_OFF
                    || (off % 4 == 0 && (off / 4) < self.clic.lines.len() as u32)
                {
                    Ok(())
                } else {
                    Err(BusError::Unmapped(addr))
                }
            }
            DeviceId::Timer if width == 4 => match off {
                clic::TIMER_COMPARE_LO
                | clic::TIMER_COMPARE_HI
                | clic::TIMER_CTRL
                | clic::TIMER_PERIOD_LO
                | clic::TIMER_PERIOD_HI
                | clic::TIMER_LINE => Ok(()),
                _ => Err(BusError::Unmapped(addr)),
            },
            DeviceId::Dma if width == 4 => match off {
                dma::DMA_SRC
                | dma::DMA_DST
                | dma::DMA_INNER_LEN
                | dma::DMA_REPS1
                | dma::DMA_REPS2
                | dma::DMA_SRC_STRIDE1
                | dma::DMA_SRC_STRIDE2
                | dma::DMA_DST_STRIDE1
                | dma::DMA_DST_STRIDE2
                | dma::DMA_COMPLETION_LINE
                | dma::DMA_LAUNCH
                | dma::DMA_SCHED_START_LO
                | dma::DMA_SCHED_START_HI
                | dma::DMA_SCHED_PERIOD_LO
                | dma::DMA_SCHED_PERIOD_HI
                | dma::DMA_SCHED_COUNT
                | dma::DMA_SCHED_ARM
                | dma::DMA_ERROR_LINE => Ok(()),
                _ => Err(BusError::Unmapped(addr)),
            },
            DeviceId::PlatCtrl if width == 4 && off == PLAT_EXIT => Ok(()),
            DeviceId::Ext => {
                if self.ext.is_some() {
                    Ok(())
                } else {
                    Err(BusError::Unmapped(addr))
                }
            }
            _ => Err(BusError::Unmapped(addr)),
        }
    }
}

/// The execution complex: one hart (golden reference) or the lockstep
/// triple.
pub enum CoreComplex {
    Single(Box<CoreState>),
    Tcls(Box<LockstepEnsemble>),
}

fn majority_of<T: PartialEq + Copy>(v: &[T; 3]) -> T {
    if v[0] == v[1] || v[0] == v[2] {
        v[0]
    } else {
        v[1]
    }
}

/// Mode-independent step outcome.
pub struct ComplexStep {
    pub committed: StepResult,
    pub resync_started: bool,
    pub uncorrectable_vote: bool,
}

impl CoreComplex {
    fn new(mode: CoreMode, boot_addr: u32) -> Self {
        match mode {
            CoreMode::Single => CoreComplex::Single(Box::new(CoreState::new(boot_addr))),
            CoreMode::Tcls => CoreComplex::Tcls(Box::new(LockstepEnsemble::new(boot_addr))),
        }
    }

    pub fn irq_gate(&self) -> (bool, u8) {
        match self {
            CoreComplex::Single(c) => {
                (c.csrs.mstatus & crate::isa::csr::MSTATUS_MIE != 0, c.priv_irq_level)
            }
            CoreComplex::Tcls(e) => e.irq_gate(),
        }
    }

    pub fn halted(&self) -> bool {
        match self {
            CoreComplex::Single(c) => c.halted,
            CoreComplex::Tcls(e) => e.halted(),
        }
    }

    pub fn is_resyncing(&self) -> bool {
        matches!(self, CoreComplex::Tcls(e) if e.is_resyncing())
    }

    pub fn resume_at(&self) -> Option<u64> {
        match self {
            CoreComplex::Tcls(e) => e.resume_at(),
            CoreComplex::Single(_) => None,
        }
    }

    /// Majority pc, for trace lines.
    pub fn trace_pc(&self) -> u32 {
        match self {
            CoreComplex::Single(c) => c.pc,
            CoreComplex::Tcls(e) => {
                crate::tcls::vote3(e.cores[0].pc, e.cores[1].pc, e.cores[2].pc).value
            }
        }
    }

    pub fn instret(&self) -> u64 {
        match self {
            CoreComplex::Single(c) => c.csrs.minstret,
            CoreComplex::Tcls(e) => {
                let v = [0, 1, 2].map(|i| e.cores[i].csrs.minstret);
                majority_of(&v)
            }
        }
    }

    /// Depth of the interrupt context stack (majority view).
    pub fn irq_depth(&self) -> usize {
        match self {
            CoreComplex::Single(c) => c.irq_frames.len(),
            CoreComplex::Tcls(e) => {
                let v = [0, 1, 2].map(|i| e.cores[i].irq_frames.len());
                majority_of(&v)
            }
        }
    }

    fn step(
        &mut self,
        bus: &mut SystemBus,
        irq: Option<&IrqRequest>,
        ctx: &StepCtx,
        cfg: &SimConfig,
    ) -> ComplexStep {
        match self {
            CoreComplex::Single(c) => {
                let committed = execute_step(c, bus, irq, ctx);
                ComplexStep { committed, resync_started: false, uncorrectable_vote: false }
            }
            CoreComplex::Tcls(e) => {
                let VotedStep { committed, resync_started, uncorrectable, .. } =
                    e.lockstep_step(bus, irq, ctx, cfg);
                ComplexStep { committed, resync_started, uncorrectable_vote: uncorrectable }
            }
        }
    }

    /// Mutable access to one replica, for fault injection.
    pub fn core_mut(&mut self, idx: usize) -> &mut CoreState {
        match self {
            CoreComplex::Single(c) => c,
            CoreComplex::Tcls(e) => &mut e.cores[idx],
        }
    }

    pub fn ensemble(&self) -> Option<&LockstepEnsemble> {
        match self {
            CoreComplex::Tcls(e) => Some(e),
            CoreComplex::Single(_) => None,
        }
    }
}

/// How a run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// The guest fired an exit convention.
    Exited,
    /// max_cycles elapsed.
    Timeout,
    /// A double fault: all-distinct vote, an uncorrectable ECC word on a
    /// demand access, or a failed recovery.
    Uncorrectable,
}

/// One interrupt's measured life cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IrqRecord {
    pub line: u16,
    pub level: u8,
    pub banked: bool,
    pub pend_cycle: u64,
    pub accept_cycle: u64,
    pub entry_cost: u32,
    pub first_insn_cycle: Option<u64>,
    pub exit_cost: Option<u32>,
}

/// Aggregate counters of one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Counters {
    pub mismatch_count: u64,
    pub resync_count: u64,
    pub ecc_demand_corrected: u64,
    pub ecc_scrubbed: u64,
    pub ecc_detected_uncorrectable: u64,
    pub dma_completed: u64,
    pub dma_overruns: u64,
    pub dma_errors: u64,
    pub irq_entries: u64,
}

/// Everything a finished run reports.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub exit_code: Option<u32>,
    pub termination: Termination,
    pub cycles: u64,
    pub instret: u64,
    pub counters: Counters,
    pub resyncs: Vec<ResyncRecord>,
    pub irq_records: Vec<IrqRecord>,
    pub dma_launches: Vec<Launch>,
    pub dma_completions_at: Vec<u64>,
    /// FNV digest over the corrected end-of-run memory image (both
    /// banks).
    pub mem_digest: u64,
    /// Residual uncorrectable words found by the end-of-run sweep.
    pub mem_uncorrectable: u64,
}

/// The simulator: devices, cores and the cycle loop.
pub struct Soc {
    pub cfg: SimConfig,
    pub bus: SystemBus,
    pub cores: CoreComplex,
    pub cycle: u64,
    core_busy_until: u64,
    xbar: CrossbarState,
    faults: Vec<FaultEvent>,
    next_fault: usize,
    deferred_faults: Vec<FaultEvent>,
    termination: Option<(Termination, Option<u32>)>,
    pub resyncs: Vec<ResyncRecord>,
    pub irq_records: Vec<IrqRecord>,
    open_irqs: Vec<usize>,
    pend_cycles: BTreeMap<u16, u64>,
    pub dma_launches: Vec<Launch>,
    trace: Option<TraceWriter>,
    entry_point: u32,
}

impl Soc {
    pub fn new(cfg: SimConfig) -> Self {
        cfg.validate().expect("invalid configuration");
        let bus = SystemBus::new(&cfg);
        let cores = CoreComplex::new(cfg.core_mode, cfg.rom_base);
        Soc {
            bus,
            cores,
            cycle: 0,
            core_busy_until: 0,
            xbar: CrossbarState::default(),
            faults: Vec::new(),
            next_fault: 0,
            deferred_faults: Vec::new(),
            termination: None,
            resyncs: Vec::new(),
            irq_records: Vec::new(),
            open_irqs: Vec::new(),
            pend_cycles: BTreeMap::new(),
            dma_launches: Vec::new(),
            trace: None,
            entry_point: cfg.rom_base,
            cfg,
        }
    }

    /// Attach a trace sink; one line per retired instruction.
    pub fn set_trace(&mut self, sink: Box<dyn Write>) {
        self.trace = Some(TraceWriter::new(sink));
    }

    pub fn set_external_port(&mut self, port: Box<dyn ExternalPort>) {
        self.bus.ext = Some(port);
    }

    /// Install the fault schedule (sorted by cycle).
    pub fn set_faults(&mut self, mut faults: Vec<FaultEvent>) {
        faults.sort_by_key(|f| f.at_cycle);
        self.faults = faults;
        self.next_fault = 0;
    }

    pub fn entry_point(&self) -> u32 {
        self.entry_point
    }

    /// Write raw bytes into mapped memory (banks only). Used by loaders.
    pub fn poke_bytes(&mut self, addr: u32, bytes: &[u8]) -> Result<(), BusError> {
        let mut a = addr;
        let mut i = 0;
        while i < bytes.len() {
            if a % 4 == 0 && bytes.len() - i >= 4 {
                let w = u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
                self.poke_word(a, w)?;
                a = a.wrapping_add(4);
                i += 4;
            } else {
                self.poke_subbyte(a, bytes[i])?;
                a = a.wrapping_add(1);
                i += 1;
            }
        }
        Ok(())
    }

    fn poke_word(&mut self, addr: u32, word: u32) -> Result<(), BusError> {
        match self.bus.map.decode(addr) {
            Some((DeviceId::InstrBank, _)) => {
                self.bus.instr_bank.write_word(addr, word).unwrap();
                Ok(())
            }
            Some((DeviceId::DataBank, _)) => {
                self.bus.data_bank.write_word(addr, word).unwrap();
                Ok(())
            }
            _ => Err(BusError::Unmapped(addr)),
        }
    }

    fn poke_subbyte(&mut self, addr: u32, byte: u8) -> Result<(), BusError> {
        match self.bus.map.decode(addr) {
            Some((DeviceId::InstrBank, _)) => {
                self.bus.instr_bank.write_subword(addr, 1, byte as u32).unwrap();
                Ok(())
            }
            Some((DeviceId::DataBank, _)) => {
                self.bus.data_bank.write_subword(addr, 1, byte as u32).unwrap();
                Ok(())
            }
            _ => Err(BusError::Unmapped(addr)),
        }
    }

    /// Point the boot ROM at the entry: `lui t0, hi; jalr zero, lo(t0)`.
    pub fn install_boot_stub(&mut self, entry: u32) {
        let hi = entry.wrapping_add(0x800) >> 12;
        let lo = entry.wrapping_sub(hi << 12) as i32;
        self.bus.rom[0] = crate::asm::lui(5, hi & 0xFFFFF);
        self.bus.rom[1] = crate::asm::jalr(0, 5, lo);
        self.entry_point = entry;
    }

    /// Load a flat word image at the instruction-bank base and aim the
    /// boot stub at it.
    pub fn load_words(&mut self, words: &[u32]) -> u32 {
        let base = self.cfg.instr_base;
        for (i, w) in words.iter().enumerate() {
            self.poke_word(base + i as u32 * 4, *w).expect("image fits the instruction bank");
        }
        self.install_boot_stub(base);
        base
    }

    fn terminate(&mut self, kind: Termination, code: Option<u32>) {
        if self.termination.is_none() {
            self.termination = Some((kind, code));
        }
    }

    fn note_pend(&mut self, line: u16, now: u64) {
        self.pend_cycles.insert(line, now);
    }

    fn apply_due_faults(&mut self, now: u64) {
        while self.next_fault < self.faults.len() && self.faults[self.next_fault].at_cycle <= now {
            let ev = self.faults[self.next_fault];
            self.next_fault += 1;
            self.apply_fault(ev);
        }
        if !self.cores.is_resyncing() && !self.deferred_faults.is_empty() {
            let deferred = std::mem::take(&mut self.deferred_faults);
            for ev in deferred {
                self.apply_fault(ev);
            }
        }
    }

    fn apply_fault(&mut self, ev: FaultEvent) {
        match ev.target {
            FaultTarget::CoreReg { core, reg } => {
                if self.cores.is_resyncing() {
                    // Core state is being rebuilt; land the flip when
                    // lockstep resumes.
                    self.deferred_faults.push(ev);
                    return;
                }
                let c = self.cores.core_mut(core as usize);
                if reg != 0 {
                    c.xregs[reg as usize] ^= ev.flip_mask;
                }
            }
            FaultTarget::CorePc { core } => {
                if self.cores.is_resyncing() {
                    self.deferred_faults.push(ev);
                    return;
                }
                let c = self.cores.core_mut(core as usize);
                c.pc ^= ev.flip_mask;
            }
            FaultTarget::MemBit { addr, bit } => {
                let bank = match self.bus.map.decode(addr) {
                    Some((DeviceId::InstrBank, _)) => &mut self.bus.instr_bank,
                    Some((DeviceId::DataBank, _)) => &mut self.bus.data_bank,
                    _ => return,
                };
                bank.inject_bit_flip(addr, bit).expect("decoded address inside bank");
            }
        }
    }

    /// Run until an exit convention fires, an unrecoverable fault is
    /// declared, or max_cycles elapse.
    pub fn run(&mut self) -> RunResult {
        while self.termination.is_none() {
            if self.cycle >= self.cfg.max_cycles {
                self.terminate(Termination::Timeout, None);
                break;
            }
            self.step_cycle();
        }
        if let Some(t) = self.trace.as_mut() {
            t.flush(self.cycle);
        }
        self.build_result()
    }

    /// Advance cycles until exactly `instret` instructions retired (or
    /// the run ends first). Used to sample golden reference states.
    pub fn run_until_instret(&mut self, instret: u64) {
        while self.termination.is_none()
            && self.cores.instret() < instret
            && self.cycle < self.cfg.max_cycles
        {
            self.step_cycle();
        }
    }

    fn step_cycle(&mut self) {
        let now = self.cycle;
        self.bus.now = now;
        self.apply_due_faults(now);

        // 1. Timer.
        if self.bus.timer.tick(now) {
            let line = self.bus.timer.line;
            self.bus.clic.set_pending(line);
            self.note_pend(line, now);
        }

        // 2.+3. CLIC arbitration and core step.
        if self.cores.resume_at() == Some(now) {
            self.finish_resync(now);
        }
        let mut core_targets: Vec<Target> = Vec::new();
        if self.termination.is_none()
            && !self.cores.is_resyncing()
            && now >= self.core_busy_until
            && !self.cores.halted()
        {
            core_targets = self.step_core(now);
        }

        // 4. DMA engine.
        if self.termination.is_none() {
            self.dma_cycle(now, &core_targets);
        }

        // 5. Scrubbers.
        if self.cfg.scrub_interval > 0 && now % self.cfg.scrub_interval == 0 {
            self.bus.instr_bank.scrub_step();
            self.bus.data_bank.scrub_step();
        }

        self.cycle = now + 1;
    }

    fn accepted_irq(&self) -> Option<IrqRequest> {
        let (mie, running) = self.cores.irq_gate();
        if !mie {
            return None;
        }
        clic_arbitrate(&self.bus.clic, running)
    }

    fn step_core(&mut self, now: u64) -> Vec<Target> {
        let irq = self.accepted_irq();
        let pend_before: Vec<bool> = self.bus.clic.lines.iter().map(|l| l.pending).collect();
        let depth_before = self.cores.irq_depth();
        let pc_before = self.cores.trace_pc();

        self.bus.begin_step();
        let ctx = StepCtx {
            timing: &self.cfg.timing,
            now,
            bank_depth: self.cfg.bank_depth,
            frame_words: self.cfg.irq_frame_words,
        };
        let cfg = self.cfg.clone();
        let out = self.cores.step(&mut self.bus, irq.as_ref(), &ctx, &cfg);

        // Cycle cost: the step's own cost plus the external-window
        // penalty for committed transactions into the window.
        let ext_txs = out
            .committed
            .transactions
            .iter()
            .filter(|t| matches!(self.bus.map.decode(t.address), Some((DeviceId::Ext, _))))
            .count() as u32;
        let cost = out.committed.cycles.max(1) + ext_txs * self.cfg.ext_latency;
        self.core_busy_until = now + cost as u64;

        let mut targets: Vec<Target> = Vec::new();
        for tx in &out.committed.transactions {
            if let Some((dev, _)) = self.bus.map.decode(tx.address) {
                let t = device_target(dev);
                if !targets.contains(&t) {
                    targets.push(t);
                }
            }
        }

        // Software-raised pendings (stores into the CLIC window).
        let raised: Vec<u16> = self
            .bus
            .clic
            .lines
            .iter()
            .zip(&pend_before)
            .enumerate()
            .filter(|(_, (l, was))| l.pending && !**was)
            .map(|(i, _)| i as u16)
            .collect();
        for line in raised {
            self.note_pend(line, now);
        }

        // Interrupt bookkeeping.
        if let Retired::IrqEntry { line, level, banked } = out.committed.retired {
            self.bus.clic.clear_pending(line);
            let pend_cycle = self.pend_cycles.get(&line).copied().unwrap_or(now);
            self.irq_records.push(IrqRecord {
                line,
                level,
                banked,
                pend_cycle,
                accept_cycle: now,
                entry_cost: out.committed.cycles,
                first_insn_cycle: None,
                exit_cost: None,
            });
            self.open_irqs.push(self.irq_records.len() - 1);
        }
        if let Retired::Instr(ins) = &out.committed.retired {
            if let Some(&open) = self.open_irqs.last() {
                if self.irq_records[open].first_insn_cycle.is_none() {
                    self.irq_records[open].first_insn_cycle = Some(now);
                }
            }
            if self.cores.irq_depth() < depth_before {
                if let Some(open) = self.open_irqs.pop() {
                    self.irq_records[open].exit_cost = Some(out.committed.cycles);
                }
            }
            let _ = ins;
        }

        // Trace.
        let corrections = std::mem::take(&mut self.bus.events.corrections);
        if let Some(tr) = self.trace.as_mut() {
            for (addr, bit) in &corrections {
                tr.event(format!("ecc-corrected {addr:#010x} bit {bit}"));
            }
            match &out.committed.retired {
                Retired::Instr(ins) => {
                    tr.line(now, pc_before, ins.raw, &disasm(ins));
                }
                Retired::Trap(t) => {
                    tr.event(format!("trap cause={} tval={:#010x}", t.cause, t.tval));
                }
                Retired::IrqEntry { line, level, banked } => {
                    let path = if *banked { "banked" } else { "spilled" };
                    tr.event(format!(
                        "irq-entry line={line} level={level} {path} cost={}",
                        out.committed.cycles
                    ));
                }
                Retired::Idle => {}
            }
        }

        // Termination checks.
        if out.uncorrectable_vote {
            if let Some(tr) = self.trace.as_mut() {
                tr.event("vote uncorrectable".to_string());
            }
            self.terminate(Termination::Uncorrectable, None);
            return targets;
        }
        if let Retired::Trap(t) = &out.committed.retired {
            let access_fault = matches!(
                t.cause,
                cause::INSTR_ACCESS_FAULT | cause::LOAD_ACCESS_FAULT | cause::STORE_ACCESS_FAULT
            );
            if access_fault && self.bus.word_is_uncorrectable(t.tval) {
                self.terminate(Termination::Uncorrectable, None);
                return targets;
            }
        }
        if let Some(code) = out.committed.exit {
            self.terminate(Termination::Exited, Some(code));
            return targets;
        }
        if let Some(code) = self.bus.plat.exit_req.take() {
            self.terminate(Termination::Exited, Some(code));
            return targets;
        }
        if out.resync_started {
            let resume = self.cores.resume_at().expect("resync pending");
            self.core_busy_until = resume;
            if let Some(tr) = self.trace.as_mut() {
                tr.event(format!("resync-start resume={resume}"));
            }
        }
        targets
    }

    fn finish_resync(&mut self, now: u64) {
        let CoreComplex::Tcls(ensemble) = &mut self.cores else {
            unreachable!("resync only exists in lockstep mode");
        };
        match ensemble.finish_resync(&mut self.bus, &self.cfg) {
            Ok(record) => {
                if let Some(tr) = self.trace.as_mut() {
                    tr.event(format!("resync-done duration={}", record.duration));
                }
                self.resyncs.push(record);
                let _ = now;
            }
            Err(_) => {
                self.terminate(Termination::Uncorrectable, None);
            }
        }
    }

    fn dma_cycle(&mut self, now: u64, core_targets: &[Target]) {
        let launches = self.bus.dma.schedule_tick(now);
        self.dma_launches.extend(launches);

        let Some(chunk) = self.bus.dma.current_chunk() else {
            return;
        };

        // Determine this cycle's targets and arbitrate against the core.
        let src_dev = self.bus.map.decode(chunk.src).map(|(d, _)| d);
        let dst_dev = self.bus.map.decode(chunk.dst).map(|(d, _)| d);
        let (Some(src_dev), Some(dst_dev)) = (src_dev, dst_dev) else {
            let bad = if src_dev.is_none() { chunk.src } else { chunk.dst };
            self.dma_abort(bad, now);
            return;
        };
        let mut requests: Vec<XbarRequest> = core_targets
            .iter()
            .map(|&t| XbarRequest { requester: Requester::Core, target: t })
            .collect();
        let mut dma_targets = vec![device_target(src_dev)];
        if !dma_targets.contains(&device_target(dst_dev)) {
            dma_targets.push(device_target(dst_dev));
        }
        let first_dma_req = requests.len();
        requests.extend(
            dma_targets.iter().map(|&t| XbarRequest { requester: Requester::Dma, target: t }),
        );
        let grants = crossbar_arbitrate(&requests, &mut self.xbar);
        if grants[..first_dma_req].iter().any(|&g| !g) {
            // The core lost a conflicted bank this cycle.
            self.core_busy_until += 1;
        }
        if grants[first_dma_req..].iter().any(|&g| !g) {
            return; // DMA stalls this cycle.
        }

        if let Err(addr) = self.dma_move_chunk(chunk) {
            self.dma_abort(addr, now);
            return;
        }
        if let Some(DmaEvent::Completed { line }) = self.bus.dma.advance_chunk(now) {
            if let Some(line) = line {
                self.bus.clic.set_pending(line);
                self.note_pend(line, now);
            }
            if let Some(tr) = self.trace.as_mut() {
                tr.event(format!("dma-complete at={now}"));
            }
        }
        // DMA demand corrections show up in the trace as well.
        let corrections = std::mem::take(&mut self.bus.events.corrections);
        if let Some(tr) = self.trace.as_mut() {
            for (addr, bit) in &corrections {
                tr.event(format!("ecc-corrected {addr:#010x} bit {bit}"));
            }
        }
    }

    /// Move one chunk: read fully, validate the destination, then write.
    /// Nothing is written if any part fails.
    fn dma_move_chunk(&mut self, chunk: dma::Chunk) -> Result<(), u32> {
        let aligned = chunk.len == 4 && chunk.src % 4 == 0 && chunk.dst % 4 == 0;
        if aligned {
            let word = self.bus.read_inner(chunk.src, 4, true).map_err(|_| chunk.src)?;
            self.bus.probe_store(chunk.dst, 4).map_err(|_| chunk.dst)?;
            self.bus.write_inner(chunk.dst, 4, word).map_err(|_| chunk.dst)?;
            return Ok(());
        }
        let mut bytes = [0u8; 4];
        for k in 0..chunk.len {
            let b = self
                .bus
                .read_inner(chunk.src.wrapping_add(k), 1, true)
                .map_err(|_| chunk.src.wrapping_add(k))?;
            bytes[k as usize] = b as u8;
        }
        for k in 0..chunk.len {
            self.bus
                .probe_store(chunk.dst.wrapping_add(k), 1)
                .map_err(|_| chunk.dst.wrapping_add(k))?;
        }
        for k in 0..chunk.len {
            self.bus
                .write_inner(chunk.dst.wrapping_add(k), 1, bytes[k as usize] as u32)
                .map_err(|_| chunk.dst.wrapping_add(k))?;
        }
        Ok(())
    }

    fn dma_abort(&mut self, addr: u32, now: u64) {
        let ev = self.bus.dma.abort_current(addr);
        if let DmaEvent::Error { line: Some(line), .. } = ev {
            self.bus.clic.set_pending(line);
            self.note_pend(line, now);
        }
        if let Some(tr) = self.trace.as_mut() {
            tr.event(format!("dma-error addr={addr:#010x}"));
        }
    }

    fn build_result(&mut self) -> RunResult {
        let (termination, exit_code) =
            self.termination.unwrap_or((Termination::Timeout, None));
        // The recovery save region is architectural scratch, not program
        // output; leave it out of the comparison digest.
        let skip = (self.cfg.resync.stack_base, self.cfg.resync.state_words * 4);
        let instr_sweep = self.bus.instr_bank.sweep_excluding(Some(skip));
        let data_sweep = self.bus.data_bank.sweep_excluding(Some(skip));
        let mut digest = 0xcbf2_9ce4_8422_2325u64;
        for v in [instr_sweep.digest, data_sweep.digest] {
            digest ^= v;
            digest = digest.wrapping_mul(0x0000_0100_0000_01B3);
        }
        let (mismatch_count, resync_count) = match self.cores.ensemble() {
            Some(e) => (e.mismatch_count, e.resync_count),
            None => (0, 0),
        };
        RunResult {
            exit_code,
            termination,
            cycles: self.cycle,
            instret: self.cores.instret(),
            counters: Counters {
                mismatch_count,
                resync_count,
                ecc_demand_corrected: self.bus.instr_bank.corrected_count
                    + self.bus.data_bank.corrected_count,
                ecc_scrubbed: self.bus.instr_bank.scrubbed_corrections
                    + self.bus.data_bank.scrubbed_corrections,
                ecc_detected_uncorrectable: self.bus.instr_bank.detected_uncorrectable_count
                    + self.bus.data_bank.detected_uncorrectable_count,
                dma_completed: self.bus.dma.completed_count,
                dma_overruns: self.bus.dma.overruns,
                dma_errors: self.bus.dma.error_count,
                irq_entries: self.irq_records.len() as u64,
            },
            resyncs: self.resyncs.clone(),
            irq_records: self.irq_records.clone(),
            dma_launches: self.dma_launches.clone(),
            dma_completions_at: self.bus.dma.completions.clone(),
            mem_digest: digest,
            mem_uncorrectable: instr_sweep.uncorrectable_words + data_sweep.uncorrectable_words,
        }
    }
}
