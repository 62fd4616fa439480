//! RV32IM+Zicsr hart model: architectural state, decode and execution.
//!
//! Machine mode only, little-endian, no compressed instructions. The
//! hart executes against an abstract bus so the same core can run
//! standalone (golden reference) or replicated behind the lockstep
//! voter. Every step reports its retired instruction, bus transactions
//! and cycle cost.

mod decode;
mod exec;

pub use decode::{decode, disasm, InstrKind, Instruction};
pub use exec::{execute_step, raise_trap, reset_core, StepCtx};

use crate::config::TimingModel;

/// Trap causes (mcause values, exception interrupt bit clear).
pub mod cause {
    pub const INSTR_MISALIGNED: u32 = 0;
    pub const INSTR_ACCESS_FAULT: u32 = 1;
    pub const ILLEGAL_INSTRUCTION: u32 = 2;
    pub const BREAKPOINT: u32 = 3;
    pub const LOAD_MISALIGNED: u32 = 4;
    pub const LOAD_ACCESS_FAULT: u32 = 5;
    pub const STORE_MISALIGNED: u32 = 6;
    pub const STORE_ACCESS_FAULT: u32 = 7;
    pub const ECALL_M: u32 = 11;
    /// Set in mcause for interrupt entries.
    pub const INTERRUPT_BIT: u32 = 0x8000_0000;
}

/// CSR numbers of the implemented subset. Accessing anything else traps
/// as an illegal instruction.
pub mod csr {
    pub const MSTATUS: u16 = 0x300;
    pub const MTVEC: u16 = 0x305;
    pub const MSCRATCH: u16 = 0x340;
    pub const MEPC: u16 = 0x341;
    pub const MCAUSE: u16 = 0x342;
    pub const MTVAL: u16 = 0x343;
    pub const MCYCLE: u16 = 0xB00;
    pub const MINSTRET: u16 = 0xB02;
    pub const MCYCLEH: u16 = 0xB80;
    pub const MINSTRETH: u16 = 0xB82;
    /// Read-only: current running interrupt level in bits 31:24.
    pub const MINTSTATUS: u16 = 0xFB1;

    pub const MSTATUS_MIE: u32 = 1 << 3;
    pub const MSTATUS_MPIE: u32 = 1 << 7;
}

/// `a7` value selecting the simulator exit call: `ecall` with this magic
/// terminates the run with `a0` as exit code.
pub const EXIT_CALL_MAGIC: u32 = 93;

/// The implemented CSR file. `mcycle`/`minstret` are held as full 64-bit
/// counters; CSR accesses see the split low/high words.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CsrFile {
    pub mstatus: u32,
    pub mtvec: u32,
    pub mscratch: u32,
    pub mepc: u32,
    pub mcause: u32,
    pub mtval: u32,
    pub mcycle: u64,
    pub minstret: u64,
}

impl CsrFile {
    /// Read a CSR by number; `None` means unimplemented.
    pub fn read(&self, id: u16, irq_level: u8) -> Option<u32> {
        Some(match id {
            csr::MSTATUS => self.mstatus,
            csr::MTVEC => self.mtvec,
            csr::MSCRATCH => self.mscratch,
            csr::MEPC => self.mepc,
            csr::MCAUSE => self.mcause,
            csr::MTVAL => self.mtval,
            csr::MCYCLE => self.mcycle as u32,
            csr::MCYCLEH => (self.mcycle >> 32) as u32,
            csr::MINSTRET => self.minstret as u32,
            csr::MINSTRETH => (self.minstret >> 32) as u32,
            csr::MINTSTATUS => (irq_level as u32) << 24,
            _ => return None,
        })
    }

    /// Write a CSR by number; `None` means unimplemented or read-only.
    pub fn write(&mut self, id: u16, value: u32) -> Option<()> {
        match id {
            csr::MSTATUS => {
                self.mstatus = value & (csr::MSTATUS_MIE | csr::MSTATUS_MPIE);
            }
            csr::MTVEC => self.mtvec = value,
            csr::MSCRATCH => self.mscratch = value,
            csr::MEPC => self.mepc = value & !1,
            csr::MCAUSE => self.mcause = value,
            csr::MTVAL => self.mtval = value,
            csr::MCYCLE => self.mcycle = (self.mcycle & !0xFFFF_FFFF) | value as u64,
            csr::MCYCLEH => self.mcycle = (self.mcycle & 0xFFFF_FFFF) | ((value as u64) << 32),
            csr::MINSTRET => self.minstret = (self.minstret & !0xFFFF_FFFF) | value as u64,
            csr::MINSTRETH => {
                self.minstret = (self.minstret & 0xFFFF_FFFF) | ((value as u64) << 32)
            }
            _ => return None,
        }
        Some(())
    }
}

/// Saved context for one interrupt nesting level.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum IrqFrame {
    /// Fast path: the whole register file lives in a shadow bank; the
    /// pre-entry mepc/mstatus ride along for nesting.
    Banked { prev_level: u8, prev_mepc: u32, prev_mstatus: u32, snapshot: Box<[u32; 32]> },
    /// Spill path: 16 words were auto-saved to the stack at `sp`.
    Spilled { prev_level: u8, sp: u32 },
}

impl IrqFrame {
    pub fn is_banked(&self) -> bool {
        matches!(self, IrqFrame::Banked { .. })
    }
}

/// One hart's complete architectural state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoreState {
    pub pc: u32,
    pub xregs: [u32; 32],
    pub csrs: CsrFile,
    /// Current running interrupt level; 0 means no interrupt context.
    pub priv_irq_level: u8,
    pub halted: bool,
    /// Set by WFI; the hart idles until an interrupt is accepted.
    pub wfi: bool,
    /// LIFO of active interrupt contexts.
    pub irq_frames: Vec<IrqFrame>,
}

impl CoreState {
    pub fn new(boot_addr: u32) -> Self {
        CoreState {
            pc: boot_addr,
            xregs: [0; 32],
            csrs: CsrFile::default(),
            priv_irq_level: 0,
            halted: false,
            wfi: false,
            irq_frames: Vec::new(),
        }
    }

    /// Register write with the x0 hardwire.
    pub fn write_xreg(&mut self, rd: u8, value: u32) {
        if rd != 0 {
            self.xregs[rd as usize] = value;
        }
    }

    pub fn xreg(&self, r: u8) -> u32 {
        self.xregs[r as usize]
    }

    /// Shadow register banks currently occupied by interrupt contexts.
    pub fn banked_in_use(&self) -> usize {
        self.irq_frames.iter().filter(|f| f.is_banked()).count()
    }
}

/// Kind of a bus access.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum TxKind {
    Fetch,
    Load,
    Store,
}

/// One voted unit of outbound bus traffic.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BusTransaction {
    pub kind: TxKind,
    pub address: u32,
    /// 1, 2 or 4 bytes.
    pub width: u8,
    /// Store data; zero for fetches and loads.
    pub data: u32,
    /// SoC cycle at which the step issuing this transaction began.
    pub cycle: u64,
}

/// Failure of a bus access.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BusError {
    /// No device decodes the address (or the offset is undefined).
    Unmapped(u32),
    /// The target ECC word holds an uncorrectable error.
    Uncorrectable(u32),
}

/// Abstract memory interface the hart executes against.
pub trait CoreBus {
    fn fetch(&mut self, addr: u32) -> Result<u32, BusError>;
    fn load(&mut self, addr: u32, width: u8) -> Result<u32, BusError>;
    fn store(&mut self, addr: u32, width: u8, value: u32) -> Result<(), BusError>;
}

/// Bus capable of backing speculative lockstep execution: reads without
/// side effects and store validation without committing.
pub trait LockstepBus: CoreBus {
    /// Side-effect-free read (no inline scrubbing, no counters).
    fn peek(&mut self, addr: u32, width: u8) -> Result<u32, BusError>;
    /// Check whether a store of this shape would succeed, without
    /// performing it.
    fn probe_store(&mut self, addr: u32, width: u8) -> Result<(), BusError>;
}

/// An interrupt offered to the hart for this step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IrqRequest {
    pub line: u16,
    pub level: u8,
    /// Address of the vector table entry to fetch the handler from;
    /// `None` routes to the common trap base in mtvec.
    pub vector_entry_addr: Option<u32>,
}

/// Trap descriptor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrapInfo {
    pub cause: u32,
    pub tval: u32,
}

/// What one step retired.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Retired {
    /// A retired instruction.
    Instr(Instruction),
    /// The step ended in a trap; no instruction retired.
    Trap(TrapInfo),
    /// An interrupt entry sequence; no instruction retired.
    IrqEntry { line: u16, level: u8, banked: bool },
    /// WFI idle cycle; nothing retired.
    Idle,
}

/// Result of advancing the hart by one step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepResult {
    pub retired: Retired,
    pub transactions: Vec<BusTransaction>,
    /// Cycle cost of the step; always at least 1.
    pub cycles: u32,
    /// Exit code if the simulator exit convention fired.
    pub exit: Option<u32>,
}

impl StepResult {
    pub fn trap(&self) -> Option<&TrapInfo> {
        match &self.retired {
            Retired::Trap(t) => Some(t),
            _ => None,
        }
    }
}

/// Convenience bundle used by tests: a flat little-endian RAM.
#[derive(Debug, Clone)]
pub struct FlatMem {
    pub base: u32,
    pub bytes: Vec<u8>,
}

impl FlatMem {
    pub fn new(base: u32, size: usize) -> Self {
        FlatMem { base, bytes: vec![0; size] }
    }

    pub fn load_words(&mut self, offset: usize, words: &[u32]) {
        for (i, w) in words.iter().enumerate() {
            self.bytes[offset + i * 4..offset + i * 4 + 4].copy_from_slice(&w.to_le_bytes());
        }
    }

    fn read(&self, addr: u32, width: u8) -> Result<u32, BusError> {
        let off = addr.wrapping_sub(self.base) as usize;
        if addr < self.base || off + width as usize > self.bytes.len() {
            return Err(BusError::Unmapped(addr));
        }
        let mut v = 0u32;
        for i in (0..width as usize).rev() {
            v = (v << 8) | self.bytes[off + i] as u32;
        }
        Ok(v)
    }
}

impl CoreBus for FlatMem {
    fn fetch(&mut self, addr: u32) -> Result<u32, BusError> {
        self.read(addr, 4)
    }

    fn load(&mut self, addr: u32, width: u8) -> Result<u32, BusError> {
        self.read(addr, width)
    }

    fn store(&mut self, addr: u32, width: u8, value: u32) -> Result<(), BusError> {
        let off = addr.wrapping_sub(self.base) as usize;
        if addr < self.base || off + width as usize > self.bytes.len() {
            return Err(BusError::Unmapped(addr));
        }
        for i in 0..width as usize {
            self.bytes[off + i] = (value >> (8 * i)) as u8;
        }
        Ok(())
    }
}

impl LockstepBus for FlatMem {
    fn peek(&mut self, addr: u32, width: u8) -> Result<u32, BusError> {
        self.read(addr, width)
    }

    fn probe_store(&mut self, addr: u32, width: u8) -> Result<(), BusError> {
        let off = addr.wrapping_sub(self.base) as usize;
        if addr < self.base || off + width as usize > self.bytes.len() {
            return Err(BusError::Unmapped(addr));
        }
        Ok(())
    }
}

/// Default step context for tests.
pub fn test_ctx(timing: &TimingModel) -> StepCtx<'_> {
    StepCtx { timing, now: 0, bank_depth: 1, frame_words: 16 }
}
