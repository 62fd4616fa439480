//! Core-local interrupt controller and general-purpose timer.
//!
//! The controller keeps per-line pending/enable/level/vectored state
//! plus a global threshold and a hardware vector table base. Arbitration
//! picks the pending+enabled line with the highest level strictly above
//! both the threshold and the current running level; ties go to the
//! lowest line id. Entry latency comes from the fast-interrupt model:
//! the first nesting level swaps to a shadow register file (6 cycles by
//! default), deeper nesting auto-saves a 16-word frame through the
//! memory system.
//!
//! Register window layout (word access only):
//!
//! | offset        | register                                         |
//! |---------------|--------------------------------------------------|
//! | `0x000 + 4*i` | line i: bit0 pending, bit1 enable, bit2 vectored,|
//! |               | bits 15:8 level                                  |
//! | `0x800`       | threshold (bits 7:0)                             |
//! | `0x804`       | vector table base address                        |
//!
//! Timer window (word access only):
//!
//! | offset | register                         |
//! |--------|----------------------------------|
//! | `0x00` | counter low (read-only)          |
//! | `0x04` | counter high (read-only)         |
//! | `0x08` | compare low                      |
//! | `0x0C` | compare high                     |
//! | `0x10` | ctrl: bit0 enable, bit1 periodic |
//! | `0x14` | period low                       |
//! | `0x18` | period high                      |
//! | `0x1C` | interrupt line id                |

use crate::isa::IrqRequest;

/// Per-line interrupt state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ClicLine {
    pub pending: bool,
    pub enabled: bool,
    pub level: u8,
    pub vectored: bool,
}

/// The interrupt controller.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClicState {
    pub lines: Vec<ClicLine>,
    pub threshold: u8,
    pub vector_table_base: u32,
}

impl ClicState {
    pub fn new(n_lines: usize) -> Self {
        // Hardware vectoring defaults on for every line.
        ClicState {
            lines: vec![ClicLine { vectored: true, ..Default::default() }; n_lines],
            threshold: 0,
            vector_table_base: 0,
        }
    }

    pub fn set_pending(&mut self, line: u16) {
        if let Some(l) = self.lines.get_mut(line as usize) {
            l.pending = true;
        }
    }

    pub fn clear_pending(&mut self, line: u16) {
        if let Some(l) = self.lines.get_mut(line as usize) {
            l.pending = false;
        }
    }
}

/// Pick the interrupt to offer at the current running level, if any.
///
/// Pure: repeated calls without state changes return the same line.
pub fn clic_arbitrate(clic: &ClicState, running_level: u8) -> Option<IrqRequest> {
    let floor = clic.threshold.max(running_level);
    let mut best: Option<(u8, u16)> = None;
    for (i, line) in clic.lines.iter().enumerate() {
        if line.pending && line.enabled && line.level > floor {
            let better = match best {
                Some((level, _)) => line.level > level,
                None => true,
            };
            if better {
                best = Some((line.level, i as u16));
            }
        }
    }
    best.map(|(level, line)| IrqRequest {
        line,
        level,
        vector_entry_addr: if clic.lines[line as usize].vectored {
            Some(clic.vector_table_base.wrapping_add(4 * line as u32))
        } else {
            None
        },
    })
}

pub const CLIC_THRESHOLD_OFF: u32 = 0x800;
pub const CLIC_VECTOR_BASE_OFF: u32 = 0x804;

/// Word read from the CLIC register window; `None` for undefined offsets.
pub fn clic_read(clic: &ClicState, offset: u32) -> Option<u32> {
    if offset % 4 != 0 {
        return None;
    }
    match offset {
        CLIC_THRESHOLD_OFF => Some(clic.threshold as u32),
        CLIC_VECTOR_BASE_OFF => Some(clic.vector_table_base),
        _ => {
            let idx = (offset / 4) as usize;
            let l = clic.lines.get(idx)?;
            Some(
                (l.pending as u32)
                    | (l.enabled as u32) << 1
                    | (l.vectored as u32) << 2
                    | (l.level as u32) << 8,
            )
        }
    }
}

/// Word write to the CLIC register window; `None` for undefined offsets.
pub fn clic_write(clic: &mut ClicState, offset: u32, value: u32) -> Option<()> {
    if offset % 4 != 0 {
        return None;
    }
    match offset {
        CLIC_THRESHOLD_OFF => {
            clic.threshold = value as u8;
            Some(())
        }
        CLIC_VECTOR_BASE_OFF => {
            clic.vector_table_base = value;
            Some(())
        }
        _ => {
            let idx = (offset / 4) as usize;
            let l = clic.lines.get_mut(idx)?;
            l.pending = value & 1 != 0;
            l.enabled = value & 2 != 0;
            l.vectored = value & 4 != 0;
            l.level = (value >> 8) as u8;
            Some(())
        }
    }
}

/// The general-purpose timer: one interrupt source driven by the SoC
/// cycle counter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct TimerState {
    pub counter: u64,
    pub compare: u64,
    pub enabled: bool,
    pub periodic: bool,
    pub period: u64,
    pub line: u16,
}

impl TimerState {
    /// Advance to the given SoC cycle (the counter tracks it 1:1) and
    /// report whether the compare fired. Periodic timers re-arm by
    /// adding the period.
    pub fn tick(&mut self, now: u64) -> bool {
        self.counter = now;
        if self.enabled && self.counter == self.compare {
            if self.periodic && self.period > 0 {
                self.compare = self.compare.wrapping_add(self.period);
            }
            return true;
        }
        false
    }
}

pub const TIMER_COUNTER_LO: u32 = 0x00;
pub const TIMER_COUNTER_HI: u32 = 0x04;
pub const TIMER_COMPARE_LO: u32 = 0x08;
pub const TIMER_COMPARE_HI: u32 = 0x0C;
pub const TIMER_CTRL: u32 = 0x10;
pub const TIMER_PERIOD_LO: u32 = 0x14;
pub const TIMER_PERIOD_HI: u32 = 0x18;
pub const TIMER_LINE: u32 = 0x1C;

pub fn timer_read(t: &TimerState, offset: u32) -> Option<u32> {
    Some(match offset {
        TIMER_COUNTER_LO => t.counter as u32,
        TIMER_COUNTER_HI => (t.counter >> 32) as u32,
        TIMER_COMPARE_LO => t.compare as u32,
        TIMER_COMPARE_HI => (t.compare >> 32) as u32,
        TIMER_CTRL => (t.enabled as u32) | (t.periodic as u32) << 1,
        TIMER_PERIOD_LO => t.period as u32,
        TIMER_PERIOD_HI => (t.period >> 32) as u32,
        TIMER_LINE => t.line as u32,
        _ => return None,
    })
}

pub fn timer_write(t: &mut TimerState, offset: u32, value: u32) -> Option<()> {
    match offset {
        TIMER_COMPARE_LO => t.compare = (t.compare & !0xFFFF_FFFF) | value as u64,
        TIMER_COMPARE_HI => t.compare = (t.compare & 0xFFFF_FFFF) | ((value as u64) << 32),
        TIMER_CTRL => {
            t.enabled = value & 1 != 0;
            t.periodic = value & 2 != 0;
        }
        TIMER_PERIOD_LO => t.period = (t.period & !0xFFFF_FFFF) | value as u64,
        TIMER_PERIOD_HI => t.period = (t.period & 0xFFFF_FFFF) | ((value as u64) << 32),
        TIMER_LINE => t.line = value as u16,
        _ => return None,
    }
    Some(())
}
