//! Built-in guest programs.
//!
//! The simulator ships its campaign corpus, the interrupt-latency bench
//! firmware and a few utility kernels as assembled word images so no
//! cross toolchain is needed. Each corpus program self-checks its result
//! and exits 0 on success; host-side oracles recompute the expected
//! values independently so tests can verify guest memory as well.

use crate::asm::{reg, Asm};
use crate::asm::*;
use crate::clic;
use crate::config::SimConfig;
use crate::isa::EXIT_CALL_MAGIC;

/// A ready-to-load guest program.
#[derive(Debug, Clone)]
pub struct Program {
    pub name: String,
    pub words: Vec<u32>,
}

/// Data-layout addresses shared by the corpus programs and their host
/// oracles.
#[derive(Debug, Clone, Copy)]
pub struct Layout {
    /// Scratch array base.
    pub work: u32,
    /// Result word address.
    pub result: u32,
    /// Guest stack top (kept well below the resync save region).
    pub sp_top: u32,
    /// Interrupt vector table base.
    pub vtab: u32,
}

impl Layout {
    pub fn from_config(cfg: &SimConfig) -> Self {
        Layout {
            work: cfg.data_base + 0x100,
            result: cfg.data_base + 0x80,
            sp_top: cfg.data_base + 0xE000,
            vtab: cfg.data_base + 0x8000,
        }
    }
}

fn exit_with(asm: &mut Asm, code: u32) {
    asm.li(reg::A0, code);
    asm.li(reg::A7, EXIT_CALL_MAGIC);
    asm.emit(ecall());
}

const CHECKSUM_LEN: u32 = 64;
const CHECKSUM_SEED: u32 = 0x1234_5678;
const SORT_LEN: u32 = 32;
const SORT_SEED: u32 = 0xCAFE_1234;
const DIVMIX_BASE: u32 = 0x7654_3210;
const DIVMIX_ROUNDS: u32 = 48;

/// LCG+rotate checksum over a filled array; ALU and load/store heavy.
pub fn checksum(cfg: &SimConfig) -> Program {
    let lay = Layout::from_config(cfg);
    let mut a = Asm::new(cfg.instr_base);
    a.li(reg::SP, lay.sp_top);

    // Fill work[0..64] with an LCG stream.
    a.li(reg::T0, lay.work);
    a.li(reg::T1, CHECKSUM_LEN);
    a.li(reg::T2, CHECKSUM_SEED);
    a.li(reg::S0, 1_664_525);
    a.li(reg::S1, 1_013_904_223);
    let fill = a.label_here();
    a.emit(mul(reg::T2, reg::T2, reg::S0));
    a.emit(add(reg::T2, reg::T2, reg::S1));
    a.emit(sw(reg::T2, reg::T0, 0));
    a.emit(addi(reg::T0, reg::T0, 4));
    a.emit(addi(reg::T1, reg::T1, -1));
    a.bne_to(reg::T1, reg::ZERO, fill);

    // Two independent checksum passes must agree.
    let sum = a.new_label();
    let fail = a.new_label();
    a.jal_to(reg::RA, sum);
    a.emit(addi(reg::S2, reg::A0, 0));
    a.jal_to(reg::RA, sum);
    a.bne_to(reg::A0, reg::S2, fail);
    a.li(reg::T0, lay.result);
    a.emit(sw(reg::A0, reg::T0, 0));
    exit_with(&mut a, 0);
    a.bind(fail);
    exit_with(&mut a, 1);

    // sum: a0 = fold(work[0..64])
    a.bind(sum);
    a.li(reg::T0, lay.work);
    a.li(reg::T1, CHECKSUM_LEN);
    a.li(reg::A0, 0);
    let loop_ = a.label_here();
    a.emit(lw(reg::T3, reg::T0, 0));
    a.emit(xor(reg::A0, reg::A0, reg::T3));
    a.emit(slli(reg::T4, reg::A0, 5));
    a.emit(srli(reg::T5, reg::A0, 27));
    a.emit(or(reg::A0, reg::T4, reg::T5));
    a.emit(add(reg::A0, reg::A0, reg::T3));
    a.emit(addi(reg::T0, reg::T0, 4));
    a.emit(addi(reg::T1, reg::T1, -1));
    a.bne_to(reg::T1, reg::ZERO, loop_);
    a.emit(jalr(reg::ZERO, reg::RA, 0));

    Program { name: "checksum".into(), words: a.finish() }
}

/// Bubble sort over an LCG-filled array with an ascending verify pass.
pub fn sort(cfg: &SimConfig) -> Program {
    let lay = Layout::from_config(cfg);
    let mut a = Asm::new(cfg.instr_base);
    a.li(reg::SP, lay.sp_top);

    a.li(reg::T0, lay.work);
    a.li(reg::T1, SORT_LEN);
    a.li(reg::T2, SORT_SEED);
    a.li(reg::S0, 1_103_515_245);
    a.li(reg::S1, 12345);
    let fill = a.label_here();
    a.emit(mul(reg::T2, reg::T2, reg::S0));
    a.emit(add(reg::T2, reg::T2, reg::S1));
    a.emit(sw(reg::T2, reg::T0, 0));
    a.emit(addi(reg::T0, reg::T0, 4));
    a.emit(addi(reg::T1, reg::T1, -1));
    a.bne_to(reg::T1, reg::ZERO, fill);

    a.li(reg::S2, SORT_LEN - 1);
    let outer = a.label_here();
    a.li(reg::T0, lay.work);
    a.li(reg::T1, 0);
    let inner = a.label_here();
    let noswap = a.new_label();
    a.emit(lw(reg::T3, reg::T0, 0));
    a.emit(lw(reg::T4, reg::T0, 4));
    a.bgeu_to(reg::T4, reg::T3, noswap);
    a.emit(sw(reg::T4, reg::T0, 0));
    a.emit(sw(reg::T3, reg::T0, 4));
    a.bind(noswap);
    a.emit(addi(reg::T0, reg::T0, 4));
    a.emit(addi(reg::T1, reg::T1, 1));
    a.blt_to(reg::T1, reg::S2, inner);
    a.emit(addi(reg::S2, reg::S2, -1));
    a.bne_to(reg::S2, reg::ZERO, outer);

    // Verify ascending order.
    let fail = a.new_label();
    a.li(reg::T0, lay.work);
    a.li(reg::T1, SORT_LEN - 1);
    let vloop = a.label_here();
    a.emit(lw(reg::T3, reg::T0, 0));
    a.emit(lw(reg::T4, reg::T0, 4));
    a.bltu_to(reg::T4, reg::T3, fail);
    a.emit(addi(reg::T0, reg::T0, 4));
    a.emit(addi(reg::T1, reg::T1, -1));
    a.bne_to(reg::T1, reg::ZERO, vloop);
    exit_with(&mut a, 0);
    a.bind(fail);
    exit_with(&mut a, 1);

    Program { name: "sort".into(), words: a.finish() }
}

/// Divider/multiplier mix including the division edge cases.
pub fn divmix(cfg: &SimConfig) -> Program {
    let lay = Layout::from_config(cfg);
    let mut a = Asm::new(cfg.instr_base);
    a.li(reg::SP, lay.sp_top);
    a.li(reg::S0, DIVMIX_BASE);
    a.li(reg::S1, 0);
    a.li(reg::T1, 1);
    a.li(reg::S3, DIVMIX_ROUNDS);
    let loop_ = a.label_here();
    a.emit(div(reg::T2, reg::S0, reg::T1));
    a.emit(rem(reg::T3, reg::S0, reg::T1));
    a.emit(mul(reg::T4, reg::T3, reg::T1));
    a.emit(add(reg::T5, reg::T2, reg::T4));
    a.emit(xor(reg::S1, reg::S1, reg::T5));
    a.emit(slli(reg::T4, reg::S1, 1));
    a.emit(srli(reg::T5, reg::S1, 31));
    a.emit(or(reg::S1, reg::T4, reg::T5));
    a.emit(addi(reg::T1, reg::T1, 1));
    a.blt_to(reg::T1, reg::S3, loop_);

    // Division edge cases fold into the accumulator.
    a.li(reg::T0, 0);
    a.emit(div(reg::T2, reg::S0, reg::T0));
    a.emit(xor(reg::S1, reg::S1, reg::T2));
    a.emit(rem(reg::T3, reg::S0, reg::T0));
    a.emit(xor(reg::S1, reg::S1, reg::T3));
    a.li(reg::T0, 0x8000_0000);
    a.emit(addi(reg::T1, reg::ZERO, -1));
    a.emit(div(reg::T2, reg::T0, reg::T1));
    a.emit(xor(reg::S1, reg::S1, reg::T2));
    a.emit(rem(reg::T3, reg::T0, reg::T1));
    a.emit(add(reg::S1, reg::S1, reg::T3));
    a.emit(mulhu(reg::T4, reg::S0, reg::S1));
    a.emit(xor(reg::S1, reg::S1, reg::T4));

    let fail = a.new_label();
    a.li(reg::T0, lay.result);
    a.emit(sw(reg::S1, reg::T0, 0));
    a.emit(lw(reg::T5, reg::T0, 0));
    a.bne_to(reg::T5, reg::S1, fail);
    exit_with(&mut a, 0);
    a.bind(fail);
    exit_with(&mut a, 1);

    Program { name: "divmix".into(), words: a.finish() }
}

/// Busy loop for `iters` iterations, then exit 0. Used by schedules that
/// need the platform alive for a while.
pub fn spin(cfg: &SimConfig, iters: u32) -> Program {
    let mut a = Asm::new(cfg.instr_base);
    a.li(reg::T0, iters);
    let loop_ = a.label_here();
    a.emit(addi(reg::T0, reg::T0, -1));
    a.bne_to(reg::T0, reg::ZERO, loop_);
    exit_with(&mut a, 0);
    Program { name: "spin".into(), words: a.finish() }
}

/// Poll the DMA completion counter until it reaches `k`, then exit 0.
pub fn dma_poll(cfg: &SimConfig, k: u32) -> Program {
    let mut a = Asm::new(cfg.instr_base);
    a.li(reg::S0, cfg.periph_base + 0x2000);
    a.li(reg::S1, k);
    let poll = a.label_here();
    a.emit(lw(reg::T0, reg::S0, crate::dma::DMA_COMPLETED_LO as i32));
    a.bltu_to(reg::T0, reg::S1, poll);
    exit_with(&mut a, 0);
    Program { name: "dma-poll".into(), words: a.finish() }
}

/// Interrupt lines used by the bench firmware.
pub const BENCH_LINE_LO: u16 = 3;
pub const BENCH_LINE_HI: u16 = 4;
pub const BENCH_LEVEL_LO: u8 = 10;
pub const BENCH_LEVEL_HI: u8 = 200;
/// Cycle at which the bench timer fires.
pub const BENCH_TIMER_AT: u64 = 200;

/// `lui`+`addi` pair of fixed width, for constants whose value is only
/// known on the second assembly pass.
fn li_wide(a: &mut Asm, rd: u8, value: u32) {
    let hi = value.wrapping_add(0x800) >> 12;
    let lo = value.wrapping_sub(hi << 12) as i32;
    a.emit(lui(rd, hi & 0xFFFFF));
    a.emit(addi(rd, rd, lo));
}

/// Latency bench: a timer interrupt enters a banked (fast-path) handler
/// which immediately raises a higher-level software interrupt; with the
/// single shadow bank occupied, the nested entry takes the spilled
/// (auto-save) path. Entry and exit costs of both paths land in the run
/// report.
pub fn irq_bench(cfg: &SimConfig) -> Program {
    let lay = Layout::from_config(cfg);
    let clic_base = cfg.periph_base;
    let timer_base = cfg.periph_base + 0x1000;

    // Two passes: the first resolves handler addresses (all emitted
    // sequences have pass-independent widths), the second bakes them in.
    let mut handler_lo_addr = 0u32;
    let mut handler_hi_addr = 0u32;
    let mut words = Vec::new();
    for _ in 0..2 {
        let mut a = Asm::new(cfg.instr_base);
        a.li(reg::SP, lay.sp_top);

        // Vector table: vtab[line] = handler address.
        a.li(reg::T0, lay.vtab);
        li_wide(&mut a, reg::T1, handler_lo_addr);
        a.emit(sw(reg::T1, reg::T0, 4 * BENCH_LINE_LO as i32));
        li_wide(&mut a, reg::T1, handler_hi_addr);
        a.emit(sw(reg::T1, reg::T0, 4 * BENCH_LINE_HI as i32));

        // CLIC: vector table base, then both lines enabled + vectored.
        a.li(reg::T0, clic_base + clic::CLIC_VECTOR_BASE_OFF);
        a.li(reg::T1, lay.vtab);
        a.emit(sw(reg::T1, reg::T0, 0));
        a.li(reg::T0, clic_base);
        a.li(reg::T1, ((BENCH_LEVEL_LO as u32) << 8) | 0b110);
        a.emit(sw(reg::T1, reg::T0, 4 * BENCH_LINE_LO as i32));
        a.li(reg::T1, ((BENCH_LEVEL_HI as u32) << 8) | 0b110);
        a.emit(sw(reg::T1, reg::T0, 4 * BENCH_LINE_HI as i32));

        // One-shot timer on the low line.
        a.li(reg::T0, timer_base);
        a.li(reg::T1, BENCH_LINE_LO as u32);
        a.emit(sw(reg::T1, reg::T0, clic::TIMER_LINE as i32));
        a.li(reg::T1, BENCH_TIMER_AT as u32);
        a.emit(sw(reg::T1, reg::T0, clic::TIMER_COMPARE_LO as i32));
        a.emit(sw(reg::ZERO, reg::T0, clic::TIMER_COMPARE_HI as i32));
        a.li(reg::T1, 1);
        a.emit(sw(reg::T1, reg::T0, clic::TIMER_CTRL as i32));

        // Global interrupt enable, then idle until the timer fires.
        a.emit(csrrsi(reg::ZERO, crate::isa::csr::MSTATUS, 8));
        a.emit(wfi());
        exit_with(&mut a, 0);

        // Low-level handler: raise the high line (nested, spilled entry
        // since the single shadow bank is in use), spin briefly, return.
        handler_lo_addr = a.here();
        a.li(reg::T0, clic_base);
        a.emit(lw(reg::T1, reg::T0, 4 * BENCH_LINE_HI as i32));
        a.emit(ori(reg::T1, reg::T1, 1));
        a.emit(sw(reg::T1, reg::T0, 4 * BENCH_LINE_HI as i32));
        a.emit(nop());
        a.emit(nop());
        a.emit(nop());
        a.emit(nop());
        a.emit(mret());

        // High-level handler: immediate return.
        handler_hi_addr = a.here();
        a.emit(nop());
        a.emit(mret());

        words = a.finish();
    }
    Program { name: "irq-bench".into(), words }
}

/// The fault-injection campaign corpus.
pub fn corpus(cfg: &SimConfig) -> Vec<Program> {
    vec![checksum(cfg), sort(cfg), divmix(cfg)]
}

/// Look up a built-in program by name (`builtin:` prefix already
/// stripped).
pub fn by_name(cfg: &SimConfig, name: &str) -> Option<Program> {
    match name {
        "checksum" => Some(checksum(cfg)),
        "sort" => Some(sort(cfg)),
        "divmix" => Some(divmix(cfg)),
        "irq-bench" => Some(irq_bench(cfg)),
        "spin" => Some(spin(cfg, 20_000)),
        _ => None,
    }
}

/// Host-side oracles recomputing what the corpus programs compute, via
/// an independent implementation path.
pub mod oracle {
    use super::*;

    pub fn checksum_fill() -> Vec<u32> {
        let mut x = CHECKSUM_SEED;
        (0..CHECKSUM_LEN)
            .map(|_| {
                x = x.wrapping_mul(1_664_525).wrapping_add(1_013_904_223);
                x
            })
            .collect()
    }

    pub fn checksum_expected() -> u32 {
        let mut acc = 0u32;
        for w in checksum_fill() {
            acc ^= w;
            acc = acc.rotate_left(5);
            acc = acc.wrapping_add(w);
        }
        acc
    }

    pub fn sort_expected() -> Vec<u32> {
        let mut x = SORT_SEED;
        let mut v: Vec<u32> = (0..SORT_LEN)
            .map(|_| {
                x = x.wrapping_mul(1_103_515_245).wrapping_add(12345);
                x
            })
            .collect();
        v.sort_unstable();
        v
    }

    pub fn divmix_expected() -> u32 {
        let base = DIVMIX_BASE as i32;
        let mut acc = 0u32;
        for i in 1..DIVMIX_ROUNDS as i32 {
            let q = base.wrapping_div(i) as u32;
            let r = base.wrapping_rem(i) as u32;
            acc ^= q.wrapping_add(r.wrapping_mul(i as u32));
            acc = acc.rotate_left(1);
        }
        // Edge cases exactly as the guest folds them.
        acc ^= u32::MAX; // div by zero
        acc ^= DIVMIX_BASE; // rem by zero
        acc ^= 0x8000_0000; // INT_MIN / -1
        acc = acc.wrapping_add(0); // INT_MIN % -1
        let m = ((DIVMIX_BASE as u64) * (acc as u64)) >> 32;
        acc ^= m as u32;
        acc
    }
}
