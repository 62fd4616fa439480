//! Single-step execution engine.
//!
//! `execute_step` advances a hart by exactly one retired instruction,
//! one trap entry, one interrupt entry, or one idle (WFI) cycle. All
//! memory effects go through the abstract bus and are reported as
//! transactions so a voter can intercept them. Steps are deterministic
//! given (state, memory contents, pending interrupt).

use super::*;

/// Per-step execution parameters.
pub struct StepCtx<'a> {
    pub timing: &'a TimingModel,
    /// SoC cycle at which this step begins (stamped on transactions).
    pub now: u64,
    /// Shadow register file count for the fast interrupt path.
    pub bank_depth: u32,
    /// Words auto-saved per spilled interrupt context (>= 16).
    pub frame_words: u32,
}

/// Registers auto-saved on the spilled interrupt path, after the
/// mepc/mstatus pair: ra, t0-t2, a0-a7, t3, t4.
const SPILL_REGS: [u8; 14] = [1, 5, 6, 7, 10, 11, 12, 13, 14, 15, 16, 17, 28, 29];

/// Architectural words in a spill frame (mepc + mstatus + SPILL_REGS).
pub const SPILL_FRAME_ARCH_WORDS: u32 = 2 + SPILL_REGS.len() as u32;

/// Reset a hart: pc at the boot address, registers and CSRs cleared,
/// no interrupt context. Nothing from the prior state survives.
pub fn reset_core(state: &mut CoreState, boot_addr: u32) {
    *state = CoreState::new(boot_addr);
}

/// Take a synchronous trap: record cause/tval, stack MIE into MPIE and
/// redirect to the trap vector base.
pub fn raise_trap(state: &mut CoreState, cause: u32, tval: u32) {
    state.csrs.mepc = state.pc;
    state.csrs.mcause = cause;
    state.csrs.mtval = tval;
    let mie = state.csrs.mstatus & csr::MSTATUS_MIE != 0;
    let mut st = state.csrs.mstatus & !(csr::MSTATUS_MIE | csr::MSTATUS_MPIE);
    if mie {
        st |= csr::MSTATUS_MPIE;
    }
    state.csrs.mstatus = st;
    state.pc = state.csrs.mtvec & !0x3;
}

struct StepBuilder {
    txs: Vec<BusTransaction>,
    now: u64,
}

impl StepBuilder {
    fn tx(&mut self, kind: TxKind, address: u32, width: u8, data: u32) {
        self.txs.push(BusTransaction { kind, address, width, data, cycle: self.now });
    }
}

enum StepEnd {
    Retired { cost: u32 },
    Trapped(TrapInfo),
    IrqEntered { cost: u32 },
    Exit(u32),
    Idle,
}

/// Advance the hart by one step.
pub fn execute_step(
    state: &mut CoreState,
    bus: &mut dyn CoreBus,
    pending_irq: Option<&IrqRequest>,
    ctx: &StepCtx,
) -> StepResult {
    debug_assert!(!state.halted, "stepping a halted hart");
    let mut b = StepBuilder { txs: Vec::new(), now: ctx.now };

    let (retired, end) = if let Some(irq) = pending_irq {
        let line = irq.line;
        let level = irq.level;
        match enter_interrupt(state, bus, irq, ctx, &mut b) {
            Ok((cost, banked)) => {
                (Retired::IrqEntry { line, level, banked }, StepEnd::IrqEntered { cost })
            }
            Err(trap) => (Retired::Trap(trap), StepEnd::Trapped(trap)),
        }
    } else if state.wfi {
        (Retired::Idle, StepEnd::Idle)
    } else {
        match exec_instruction(state, bus, ctx, &mut b) {
            Ok((ins, cost)) => (Retired::Instr(ins), StepEnd::Retired { cost }),
            Err(Outcome::Trap(trap)) => (Retired::Trap(trap), StepEnd::Trapped(trap)),
            Err(Outcome::Exit { ins, code }) => (Retired::Instr(ins), StepEnd::Exit(code)),
        }
    };

    let (cycles, exit) = match end {
        StepEnd::Retired { cost } => {
            state.csrs.minstret += 1;
            (cost, None)
        }
        StepEnd::Trapped(t) => {
            raise_trap(state, t.cause, t.tval);
            (1, None)
        }
        StepEnd::IrqEntered { cost } => (cost, None),
        StepEnd::Exit(code) => {
            state.csrs.minstret += 1;
            state.halted = true;
            (ctx.timing.alu, Some(code))
        }
        StepEnd::Idle => (1, None),
    };
    let cycles = cycles.max(1);
    state.csrs.mcycle += cycles as u64;
    debug_assert_eq!(state.xregs[0], 0, "x0 must stay hardwired to zero");

    StepResult { retired, transactions: b.txs, cycles, exit }
}

fn enter_interrupt(
    state: &mut CoreState,
    bus: &mut dyn CoreBus,
    irq: &IrqRequest,
    ctx: &StepCtx,
    b: &mut StepBuilder,
) -> Result<(u32, bool), TrapInfo> {
    state.wfi = false;
    let prev_level = state.priv_irq_level;
    let prev_mepc = state.csrs.mepc;
    let prev_mstatus = state.csrs.mstatus;

    let banked = state.banked_in_use() < ctx.bank_depth as usize;
    let cost = if banked {
        state.irq_frames.push(IrqFrame::Banked {
            prev_level,
            prev_mepc,
            prev_mstatus,
            snapshot: Box::new(state.xregs),
        });
        ctx.timing.irq_entry_base
    } else {
        let frame_bytes = ctx.frame_words * 4;
        let sp = state.xreg(2).wrapping_sub(frame_bytes);
        let mut words = vec![prev_mepc, prev_mstatus];
        words.extend(SPILL_REGS.iter().map(|&r| state.xreg(r)));
        // Configured words beyond the architectural 16 model FPU context:
        // they cost bus traffic but carry placeholder zeros.
        words.resize(ctx.frame_words as usize, 0);
        for (i, w) in words.iter().enumerate() {
            let addr = sp.wrapping_add(i as u32 * 4);
            bus.store(addr, 4, *w).map_err(|e| store_fault(e, addr))?;
            b.tx(TxKind::Store, addr, 4, *w);
        }
        state.irq_frames.push(IrqFrame::Spilled { prev_level, sp });
        state.write_xreg(2, sp);
        ctx.timing.irq_entry_base + ctx.frame_words * (1 + ctx.timing.mem_latency)
    };

    state.csrs.mepc = state.pc;
    state.csrs.mcause = cause::INTERRUPT_BIT | irq.line as u32;
    state.priv_irq_level = irq.level;

    let handler = match irq.vector_entry_addr {
        Some(vaddr) => {
            let h = bus.load(vaddr, 4).map_err(|e| load_fault(e, vaddr))?;
            b.tx(TxKind::Load, vaddr, 4, 0);
            h
        }
        None => state.csrs.mtvec & !0x3,
    };
    if handler & 0x3 != 0 {
        return Err(TrapInfo { cause: cause::INSTR_MISALIGNED, tval: handler });
    }
    state.pc = handler;
    Ok((cost, banked))
}

fn complete_interrupt(
    state: &mut CoreState,
    bus: &mut dyn CoreBus,
    ctx: &StepCtx,
    b: &mut StepBuilder,
) -> Result<u32, TrapInfo> {
    let frame = state.irq_frames.pop().expect("caller checked for an irq frame");
    let return_pc = state.csrs.mepc;
    let cost = match frame {
        IrqFrame::Banked { prev_level, prev_mepc, prev_mstatus, snapshot } => {
            state.xregs = *snapshot;
            state.csrs.mepc = prev_mepc;
            state.csrs.mstatus = prev_mstatus;
            state.priv_irq_level = prev_level;
            ctx.timing.irq_entry_base
        }
        IrqFrame::Spilled { prev_level, sp } => {
            let mut words = Vec::with_capacity(SPILL_FRAME_ARCH_WORDS as usize);
            for i in 0..SPILL_FRAME_ARCH_WORDS {
                let addr = sp.wrapping_add(i * 4);
                let w = bus.load(addr, 4).map_err(|e| load_fault(e, addr))?;
                b.tx(TxKind::Load, addr, 4, 0);
                words.push(w);
            }
            state.csrs.mepc = words[0];
            state.csrs.mstatus = words[1];
            for (i, &r) in SPILL_REGS.iter().enumerate() {
                state.write_xreg(r, words[2 + i]);
            }
            state.write_xreg(2, sp.wrapping_add(ctx.frame_words * 4));
            state.priv_irq_level = prev_level;
            ctx.timing.irq_entry_base + ctx.frame_words * (1 + ctx.timing.mem_latency)
        }
    };
    if return_pc & 0x3 != 0 {
        return Err(TrapInfo { cause: cause::INSTR_MISALIGNED, tval: return_pc });
    }
    state.pc = return_pc;
    Ok(cost)
}

enum Outcome {
    Trap(TrapInfo),
    Exit { ins: Instruction, code: u32 },
}

fn trap(cause: u32, tval: u32) -> Outcome {
    Outcome::Trap(TrapInfo { cause, tval })
}

fn load_fault(e: BusError, addr: u32) -> TrapInfo {
    let _ = e;
    TrapInfo { cause: cause::LOAD_ACCESS_FAULT, tval: addr }
}

fn store_fault(e: BusError, addr: u32) -> TrapInfo {
    let _ = e;
    TrapInfo { cause: cause::STORE_ACCESS_FAULT, tval: addr }
}

fn exec_instruction(
    state: &mut CoreState,
    bus: &mut dyn CoreBus,
    ctx: &StepCtx,
    b: &mut StepBuilder,
) -> Result<(Instruction, u32), Outcome> {
    use InstrKind::*;

    let pc = state.pc;
    if pc & 0x3 != 0 {
        return Err(trap(cause::INSTR_MISALIGNED, pc));
    }
    let raw = match bus.fetch(pc) {
        Ok(w) => w,
        Err(_) => return Err(trap(cause::INSTR_ACCESS_FAULT, pc)),
    };
    b.tx(TxKind::Fetch, pc, 4, 0);

    let ins = decode(raw);
    if ins.is_illegal() {
        return Err(trap(cause::ILLEGAL_INSTRUCTION, raw));
    }

    let rs1v = state.xreg(ins.rs1);
    let rs2v = state.xreg(ins.rs2);
    let imm = ins.imm;
    let mut next_pc = pc.wrapping_add(4);
    let mut base_cost = ctx.timing.alu;
    let mut mem_txns = 0u32;

    match ins.kind {
        Lui => state.write_xreg(ins.rd, imm as u32),
        Auipc => state.write_xreg(ins.rd, pc.wrapping_add(imm as u32)),
        Jal => {
            let target = pc.wrapping_add(imm as u32);
            if target & 0x3 != 0 {
                return Err(trap(cause::INSTR_MISALIGNED, target));
            }
            state.write_xreg(ins.rd, pc.wrapping_add(4));
            next_pc = target;
        }
        Jalr => {
            let target = rs1v.wrapping_add(imm as u32) & !1;
            if target & 0x3 != 0 {
                return Err(trap(cause::INSTR_MISALIGNED, target));
            }
            state.write_xreg(ins.rd, pc.wrapping_add(4));
            next_pc = target;
        }
        Beq | Bne | Blt | Bge | Bltu | Bgeu => {
            let taken = match ins.kind {
                Beq => rs1v == rs2v,
                Bne => rs1v != rs2v,
                Blt => (rs1v as i32) < (rs2v as i32),
                Bge => (rs1v as i32) >= (rs2v as i32),
                Bltu => rs1v < rs2v,
                _ => rs1v >= rs2v,
            };
            if taken {
                let target = pc.wrapping_add(imm as u32);
                if target & 0x3 != 0 {
                    return Err(trap(cause::INSTR_MISALIGNED, target));
                }
                next_pc = target;
            }
        }
        Lb | Lh | Lw | Lbu | Lhu => {
            let addr = rs1v.wrapping_add(imm as u32);
            let width: u8 = match ins.kind {
                Lb | Lbu => 1,
                Lh | Lhu => 2,
                _ => 4,
            };
            if addr % width as u32 != 0 {
                return Err(trap(cause::LOAD_MISALIGNED, addr));
            }
            let v = match bus.load(addr, width) {
                Ok(v) => v,
                Err(_) => return Err(trap(cause::LOAD_ACCESS_FAULT, addr)),
            };
            b.tx(TxKind::Load, addr, width, 0);
            mem_txns += 1;
            let v = match ins.kind {
                Lb => v as u8 as i8 as i32 as u32,
                Lh => v as u16 as i16 as i32 as u32,
                _ => v,
            };
            state.write_xreg(ins.rd, v);
        }
        Sb | Sh | Sw => {
            let addr = rs1v.wrapping_add(imm as u32);
            let width: u8 = match ins.kind {
                Sb => 1,
                Sh => 2,
                _ => 4,
            };
            if addr % width as u32 != 0 {
                return Err(trap(cause::STORE_MISALIGNED, addr));
            }
            let data = match width {
                1 => rs2v & 0xFF,
                2 => rs2v & 0xFFFF,
                _ => rs2v,
            };
            if bus.store(addr, width, data).is_err() {
                return Err(trap(cause::STORE_ACCESS_FAULT, addr));
            }
            b.tx(TxKind::Store, addr, width, data);
            mem_txns += 1;
        }
        Addi => state.write_xreg(ins.rd, rs1v.wrapping_add(imm as u32)),
        Slti => state.write_xreg(ins.rd, ((rs1v as i32) < imm) as u32),
        Sltiu => state.write_xreg(ins.rd, (rs1v < imm as u32) as u32),
        Xori => state.write_xreg(ins.rd, rs1v ^ imm as u32),
        Ori => state.write_xreg(ins.rd, rs1v | imm as u32),
        Andi => state.write_xreg(ins.rd, rs1v & imm as u32),
        Slli => state.write_xreg(ins.rd, rs1v << (imm & 0x1F)),
        Srli => state.write_xreg(ins.rd, rs1v >> (imm & 0x1F)),
        Srai => state.write_xreg(ins.rd, ((rs1v as i32) >> (imm & 0x1F)) as u32),
        Add => state.write_xreg(ins.rd, rs1v.wrapping_add(rs2v)),
        Sub => state.write_xreg(ins.rd, rs1v.wrapping_sub(rs2v)),
        Sll => state.write_xreg(ins.rd, rs1v << (rs2v & 0x1F)),
        Slt => state.write_xreg(ins.rd, ((rs1v as i32) < (rs2v as i32)) as u32),
        Sltu => state.write_xreg(ins.rd, (rs1v < rs2v) as u32),
        Xor => state.write_xreg(ins.rd, rs1v ^ rs2v),
        Srl => state.write_xreg(ins.rd, rs1v >> (rs2v & 0x1F)),
        Sra => state.write_xreg(ins.rd, ((rs1v as i32) >> (rs2v & 0x1F)) as u32),
        Or => state.write_xreg(ins.rd, rs1v | rs2v),
        And => state.write_xreg(ins.rd, rs1v & rs2v),
        Mul => {
            base_cost = ctx.timing.mul;
            state.write_xreg(ins.rd, rs1v.wrapping_mul(rs2v));
        }
        Mulh => {
            base_cost = ctx.timing.mul;
            let p = (rs1v as i32 as i64).wrapping_mul(rs2v as i32 as i64);
            state.write_xreg(ins.rd, (p >> 32) as u32);
        }
        Mulhsu => {
            base_cost = ctx.timing.mul;
            let p = (rs1v as i32 as i64).wrapping_mul(rs2v as u64 as i64);
            state.write_xreg(ins.rd, (p >> 32) as u32);
        }
        Mulhu => {
            base_cost = ctx.timing.mul;
            let p = (rs1v as u64).wrapping_mul(rs2v as u64);
            state.write_xreg(ins.rd, (p >> 32) as u32);
        }
        Div => {
            base_cost = ctx.timing.div;
            let (a, d) = (rs1v as i32, rs2v as i32);
            let q = if d == 0 {
                -1
            } else if a == i32::MIN && d == -1 {
                i32::MIN
            } else {
                a.wrapping_div(d)
            };
            state.write_xreg(ins.rd, q as u32);
        }
        Divu => {
            base_cost = ctx.timing.div;
            let q = if rs2v == 0 { u32::MAX } else { rs1v / rs2v };
            state.write_xreg(ins.rd, q);
        }
        Rem => {
            base_cost = ctx.timing.div;
            let (a, d) = (rs1v as i32, rs2v as i32);
            let rm = if d == 0 {
                a
            } else if a == i32::MIN && d == -1 {
                0
            } else {
                a.wrapping_rem(d)
            };
            state.write_xreg(ins.rd, rm as u32);
        }
        Remu => {
            base_cost = ctx.timing.div;
            let rm = if rs2v == 0 { rs1v } else { rs1v % rs2v };
            state.write_xreg(ins.rd, rm);
        }
        Fence => {}
        Ecall => {
            if state.xreg(17) == EXIT_CALL_MAGIC {
                state.pc = next_pc;
                return Err(Outcome::Exit { ins, code: state.xreg(10) });
            }
            return Err(trap(cause::ECALL_M, 0));
        }
        Ebreak => return Err(trap(cause::BREAKPOINT, pc)),
        Wfi => state.wfi = true,
        Mret => {
            if state.irq_frames.is_empty() {
                // Exception return: unstack MIE and jump to mepc.
                let mepc = state.csrs.mepc;
                if mepc & 0x3 != 0 {
                    return Err(trap(cause::INSTR_MISALIGNED, mepc));
                }
                let mpie = state.csrs.mstatus & csr::MSTATUS_MPIE != 0;
                let mut st = state.csrs.mstatus & !csr::MSTATUS_MIE;
                if mpie {
                    st |= csr::MSTATUS_MIE;
                }
                st |= csr::MSTATUS_MPIE;
                state.csrs.mstatus = st;
                next_pc = mepc;
            } else {
                let cost = complete_interrupt(state, bus, ctx, b).map_err(Outcome::Trap)?;
                // The restore path already set pc; skip the common epilogue.
                return Ok((ins, cost));
            }
        }
        Csrrw | Csrrs | Csrrc | Csrrwi | Csrrsi | Csrrci => {
            let id = (imm & 0xFFF) as u16;
            let Some(old) = state.csrs.read(id, state.priv_irq_level) else {
                return Err(trap(cause::ILLEGAL_INSTRUCTION, raw));
            };
            let operand = match ins.kind {
                Csrrwi | Csrrsi | Csrrci => ins.rs1 as u32,
                _ => rs1v,
            };
            let write = match ins.kind {
                Csrrw | Csrrwi => Some(operand),
                Csrrs | Csrrsi if ins.rs1 != 0 => Some(old | operand),
                Csrrc | Csrrci if ins.rs1 != 0 => Some(old & !operand),
                _ => None,
            };
            if let Some(v) = write {
                if state.csrs.write(id, v).is_none() {
                    return Err(trap(cause::ILLEGAL_INSTRUCTION, raw));
                }
            }
            state.write_xreg(ins.rd, old);
        }
        Illegal => unreachable!("filtered above"),
    }

    state.pc = next_pc;
    Ok((ins, base_cost + mem_txns * ctx.timing.mem_latency))
}
