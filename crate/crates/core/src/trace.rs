//! Text execution traces.
//!
//! One line per retired instruction:
//!
//! ```text
//! <cycle> <pc> <raw-insn> <disasm> [event; event]
//! ```
//!
//! Cycle is decimal, pc and the raw word are zero-padded hex. Events
//! occurring between retired instructions (traps, interrupt entries,
//! resynchronizations, ECC corrections, DMA completions) attach to the
//! next retired line; any leftovers flush as a final marker line.

use std::io::Write;

pub struct TraceWriter {
    sink: Box<dyn Write>,
    pending: Vec<String>,
}

impl TraceWriter {
    pub fn new(sink: Box<dyn Write>) -> Self {
        TraceWriter { sink, pending: Vec::new() }
    }

    /// Queue an event for the next retired-instruction line.
    pub fn event(&mut self, text: String) {
        self.pending.push(text);
    }

    pub fn line(&mut self, cycle: u64, pc: u32, raw: u32, disasm: &str) {
        let _ = if self.pending.is_empty() {
            writeln!(self.sink, "{cycle:>10} {pc:08x} {raw:08x} {disasm}")
        } else {
            let events = self.pending.join("; ");
            self.pending.clear();
            writeln!(self.sink, "{cycle:>10} {pc:08x} {raw:08x} {disasm} [{events}]")
        };
    }

    /// Flush trailing events at end of run.
    pub fn flush(&mut self, cycle: u64) {
        if !self.pending.is_empty() {
            let events = self.pending.join("; ");
            self.pending.clear();
            let _ = writeln!(self.sink, "{cycle:>10} -------- -------- (end) [{events}]");
        }
        let _ = self.sink.flush();
    }
}
