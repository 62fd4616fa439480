//! Full-system integration: boot, exit conventions, interrupts through
//! the memory-mapped CLIC, crossbar behavior, the external port, fault
//! injection and the loaders.

use sentrysim_core::asm::{self, reg};
use sentrysim_core::campaign::{self, FaultEvent, FaultTarget};
use sentrysim_core::clic;
use sentrysim_core::config::{CoreMode, SimConfig};
use sentrysim_core::dma::{DmaJob, DmaSchedule};
use sentrysim_core::firmware;
use sentrysim_core::isa::EXIT_CALL_MAGIC;
use sentrysim_core::loader::{self, build_elf, ImageFormat};
use sentrysim_core::soc::{
    crossbar_arbitrate, CrossbarState, ExternalPort, Requester, Soc, Target, Termination,
    XbarRequest,
};

fn cfg_single() -> SimConfig {
    SimConfig { core_mode: CoreMode::Single, ..Default::default() }
}

fn exit_words(code: u32) -> Vec<u32> {
    let mut w = asm::li(reg::A0, code);
    w.extend(asm::li(reg::A7, EXIT_CALL_MAGIC));
    w.push(asm::ecall());
    w
}

#[test]
fn empty_program_exits_quickly_with_its_code() {
    for mode in [CoreMode::Single, CoreMode::Tcls] {
        let mut soc = Soc::new(SimConfig { core_mode: mode, ..Default::default() });
        soc.load_words(&exit_words(7));
        let r = soc.run();
        assert_eq!(r.termination, Termination::Exited);
        assert_eq!(r.exit_code, Some(7));
        assert!(r.cycles < 100, "trivial exit should take only a few cycles");
    }
}

#[test]
fn platform_exit_register_terminates_the_run() {
    let mut words = asm::li(reg::T0, SimConfig::default().periph_base + 0x3000);
    words.extend(asm::li(reg::T1, 42));
    words.push(asm::sw(reg::T1, reg::T0, 0));
    words.push(asm::jal(0, 0)); // would hang without the exit register
    let mut soc = Soc::new(SimConfig::default());
    soc.load_words(&words);
    let r = soc.run();
    assert_eq!(r.termination, Termination::Exited);
    assert_eq!(r.exit_code, Some(42));
}

#[test]
fn timeout_when_no_exit_fires() {
    let mut soc = Soc::new(SimConfig { max_cycles: 2_000, ..Default::default() });
    soc.load_words(&[asm::jal(0, 0)]);
    let r = soc.run();
    assert_eq!(r.termination, Termination::Timeout);
    assert_eq!(r.cycles, 2_000);
}

#[test]
fn run_results_are_deterministic() {
    let run = || {
        let mut soc = Soc::new(SimConfig::default());
        soc.load_words(&firmware::checksum(&SimConfig::default()).words);
        soc.run()
    };
    let (a, b) = (run(), run());
    assert_eq!(a.cycles, b.cycles);
    assert_eq!(a.instret, b.instret);
    assert_eq!(a.mem_digest, b.mem_digest);
    assert_eq!(a.counters, b.counters);
}

#[test]
fn corpus_results_match_host_oracles() {
    let cfg = cfg_single();
    let lay = firmware::Layout::from_config(&cfg);

    let mut soc = Soc::new(cfg.clone());
    soc.load_words(&firmware::checksum(&cfg).words);
    let r = soc.run();
    assert_eq!(r.exit_code, Some(0));
    let (word, status) = soc.bus.data_bank.peek_word(lay.result).unwrap();
    assert!(status.is_ok());
    assert_eq!(word, firmware::oracle::checksum_expected());
    for (i, expect) in firmware::oracle::checksum_fill().iter().enumerate() {
        let (w, _) = soc.bus.data_bank.peek_word(lay.work + i as u32 * 4).unwrap();
        assert_eq!(w, *expect, "fill word {i}");
    }

    let mut soc = Soc::new(cfg.clone());
    soc.load_words(&firmware::sort(&cfg).words);
    assert_eq!(soc.run().exit_code, Some(0));
    for (i, expect) in firmware::oracle::sort_expected().iter().enumerate() {
        let (w, _) = soc.bus.data_bank.peek_word(lay.work + i as u32 * 4).unwrap();
        assert_eq!(w, *expect, "sorted word {i}");
    }

    let mut soc = Soc::new(cfg.clone());
    soc.load_words(&firmware::divmix(&cfg).words);
    assert_eq!(soc.run().exit_code, Some(0));
    let (w, _) = soc.bus.data_bank.peek_word(lay.result).unwrap();
    assert_eq!(w, firmware::oracle::divmix_expected());
}

#[test]
fn timer_interrupt_enters_vectored_handler_and_returns() {
    // The handler counts in memory: the banked fast path restores the
    // whole register file on exit, so registers cannot carry handler
    // results (exactly like a shadow register file).
    let cfg = SimConfig::default();
    let lay = firmware::Layout::from_config(&cfg);
    let clic_base = cfg.periph_base;
    let timer_base = cfg.periph_base + 0x1000;
    let counter = lay.result;

    let mut handler_addr = 0u32;
    let mut words = Vec::new();
    for _ in 0..2 {
        let mut a = asm::Asm::new(cfg.instr_base);
        a.li(reg::SP, lay.sp_top);
        a.li(reg::T0, lay.vtab);
        a.emit(asm::lui(reg::T1, handler_addr.wrapping_add(0x800) >> 12));
        a.emit(asm::addi(
            reg::T1,
            reg::T1,
            handler_addr.wrapping_sub((handler_addr.wrapping_add(0x800) >> 12) << 12) as i32,
        ));
        a.emit(asm::sw(reg::T1, reg::T0, 4 * 7));
        a.li(reg::T0, clic_base + clic::CLIC_VECTOR_BASE_OFF);
        a.li(reg::T1, lay.vtab);
        a.emit(asm::sw(reg::T1, reg::T0, 0));
        a.li(reg::T0, clic_base);
        a.li(reg::T1, (50 << 8) | 0b110);
        a.emit(asm::sw(reg::T1, reg::T0, 4 * 7));
        a.li(reg::T0, timer_base);
        a.li(reg::T1, 7);
        a.emit(asm::sw(reg::T1, reg::T0, clic::TIMER_LINE as i32));
        a.li(reg::T1, 300);
        a.emit(asm::sw(reg::T1, reg::T0, clic::TIMER_COMPARE_LO as i32));
        a.li(reg::T1, 200);
        a.emit(asm::sw(reg::T1, reg::T0, clic::TIMER_PERIOD_LO as i32));
        a.li(reg::T1, 0b11); // enable, periodic
        a.emit(asm::sw(reg::T1, reg::T0, clic::TIMER_CTRL as i32));
        a.emit(asm::csrrsi(reg::ZERO, sentrysim_core::isa::csr::MSTATUS, 8));
        let wait = a.label_here();
        let done = a.new_label();
        a.li(reg::T4, counter);
        a.emit(asm::lw(reg::T3, reg::T4, 0));
        a.li(reg::T2, 3);
        a.bge_to(reg::T3, reg::T2, done);
        a.jal_to(reg::ZERO, wait);
        a.bind(done);
        a.li(reg::A0, 0);
        a.li(reg::A7, EXIT_CALL_MAGIC);
        a.emit(asm::ecall());
        handler_addr = a.here();
        a.li(reg::T4, counter);
        a.emit(asm::lw(reg::T3, reg::T4, 0));
        a.emit(asm::addi(reg::T3, reg::T3, 1));
        a.emit(asm::sw(reg::T3, reg::T4, 0));
        a.emit(asm::mret());
        words = a.finish();
    }

    for mode in [CoreMode::Single, CoreMode::Tcls] {
        let mut soc = Soc::new(SimConfig { core_mode: mode, ..Default::default() });
        soc.load_words(&words);
        let r = soc.run();
        assert_eq!(r.termination, Termination::Exited, "mode {mode:?}");
        assert_eq!(r.exit_code, Some(0));
        assert_eq!(r.counters.irq_entries, 3);
        // Timer pends land exactly at 300, 500, 700.
        let pends: Vec<u64> = r.irq_records.iter().map(|i| i.pend_cycle).collect();
        assert_eq!(pends, vec![300, 500, 700]);
        assert!(r.irq_records.iter().all(|i| i.banked && i.entry_cost == 6));
        assert!(r.irq_records.iter().all(|i| i.exit_cost == Some(6)));
    }
}

#[test]
fn single_core_fault_recovers_and_matches_golden() {
    let cfg = SimConfig::default();
    let program = firmware::checksum(&cfg).words;
    let (golden, _) = campaign::golden_run(&cfg, &program).unwrap();

    // s2 holds the first-pass checksum across the whole second pass,
    // so a flip there must survive to the vote.
    let ev = FaultEvent {
        at_cycle: 700,
        target: FaultTarget::CoreReg { core: 2, reg: 18 },
        flip_mask: 1 << 13,
    };
    let r = campaign::fault_run(&cfg, &program, &[ev]);
    assert_eq!(r.termination, Termination::Exited);
    assert_eq!(r.exit_code, Some(0));
    assert_eq!(r.counters.resync_count, 1);
    assert!(r.counters.mismatch_count >= 1);
    assert_eq!(r.mem_digest, golden.mem_digest);
    let resync = &r.resyncs[0];
    assert_eq!(resync.duration, cfg.resync_cost());
    let golden_state = campaign::golden_state_at(&cfg, &program, resync.instret);
    assert_eq!(*resync.restored, golden_state, "restored state equals golden at same instret");
}

#[test]
fn two_consecutive_single_faults_both_recover() {
    let cfg = SimConfig::default();
    let program = firmware::sort(&cfg).words;
    let (golden, _) = campaign::golden_run(&cfg, &program).unwrap();
    let evs = [
        FaultEvent { at_cycle: 500, target: FaultTarget::CoreReg { core: 0, reg: 7 }, flip_mask: 1 },
        FaultEvent {
            at_cycle: 3000,
            target: FaultTarget::CoreReg { core: 1, reg: 28 },
            flip_mask: 1 << 31,
        },
    ];
    let r = campaign::fault_run(&cfg, &program, &evs);
    assert_eq!(r.exit_code, Some(0));
    assert_eq!(r.counters.resync_count, 2);
    assert_eq!(r.mem_digest, golden.mem_digest);
    for resync in &r.resyncs {
        assert!(resync.duration <= campaign::RESYNC_BUDGET_CYCLES);
        let g = campaign::golden_state_at(&cfg, &program, resync.instret);
        assert_eq!(*resync.restored, g);
    }
}

#[test]
fn faults_in_two_cores_same_step_are_uncorrectable() {
    let cfg = SimConfig::default();
    let program = firmware::checksum(&cfg).words;
    let evs = [
        FaultEvent { at_cycle: 600, target: FaultTarget::CoreReg { core: 0, reg: 6 }, flip_mask: 1 },
        FaultEvent { at_cycle: 600, target: FaultTarget::CoreReg { core: 1, reg: 6 }, flip_mask: 2 },
    ];
    let r = campaign::fault_run(&cfg, &program, &evs);
    assert_eq!(r.termination, Termination::Uncorrectable);
}

#[test]
fn pc_flip_recovers_like_register_flips() {
    let cfg = SimConfig::default();
    let program = firmware::divmix(&cfg).words;
    let (golden, _) = campaign::golden_run(&cfg, &program).unwrap();
    let ev = FaultEvent { at_cycle: 300, target: FaultTarget::CorePc { core: 1 }, flip_mask: 4 };
    let r = campaign::fault_run(&cfg, &program, &[ev]);
    assert_eq!(r.exit_code, Some(0));
    assert_eq!(r.counters.resync_count, 1);
    assert_eq!(r.mem_digest, golden.mem_digest);
}

#[test]
fn uncorrectable_fetch_terminates_the_run_as_detected() {
    let cfg = SimConfig::default();
    let program = firmware::checksum(&cfg).words;
    // Two flips in the fill-loop head (hot fetch path): the word decodes
    // uncorrectable within a few cycles and the run must stop.
    let addr = cfg.instr_base + 0x28;
    let evs = [
        FaultEvent { at_cycle: 50, target: FaultTarget::MemBit { addr, bit: 2 }, flip_mask: 0 },
        FaultEvent { at_cycle: 50, target: FaultTarget::MemBit { addr, bit: 33 }, flip_mask: 0 },
    ];
    let r = campaign::fault_run(&cfg, &program, &evs);
    assert_eq!(r.termination, Termination::Uncorrectable);
}

struct ConstPort(u32);

impl ExternalPort for ConstPort {
    fn read(&mut self, _offset: u32, _width: u8) -> Option<u32> {
        Some(self.0)
    }
    fn write(&mut self, _offset: u32, _width: u8, _value: u32) {}
}

#[test]
fn external_port_callback_serves_core_loads() {
    let cfg = SimConfig::default();
    let mut words = asm::li(reg::T0, cfg.ext_base);
    words.push(asm::lw(reg::A0, reg::T0, 0));
    words.extend(asm::li(reg::A7, EXIT_CALL_MAGIC));
    words.push(asm::ecall());

    for mode in [CoreMode::Single, CoreMode::Tcls] {
        let mut soc = Soc::new(SimConfig { core_mode: mode, ..Default::default() });
        soc.set_external_port(Box::new(ConstPort(0x42)));
        soc.load_words(&words);
        let r = soc.run();
        assert_eq!(r.exit_code, Some(0x42), "mode {mode:?}");
    }
}

#[test]
fn external_window_without_callback_is_a_bus_error() {
    let cfg = SimConfig::default();
    let mut words = asm::li(reg::T0, cfg.ext_base);
    words.push(asm::lw(reg::A0, reg::T0, 0));
    words.extend(asm::li(reg::A7, EXIT_CALL_MAGIC));
    words.push(asm::ecall());
    let mut soc = Soc::new(cfg);
    soc.load_words(&words);
    // mtvec is 0, so the trap loops through the boot stub forever.
    let r = soc.run();
    assert_eq!(r.termination, Termination::Timeout);
}

/// Counts reads so lockstep exactly-once semantics are observable.
struct CountingPort {
    reads: std::rc::Rc<std::cell::Cell<u32>>,
}

impl ExternalPort for CountingPort {
    fn read(&mut self, offset: u32, _width: u8) -> Option<u32> {
        self.reads.set(self.reads.get() + 1);
        Some(0x1000 + offset)
    }
    fn write(&mut self, _offset: u32, _width: u8, _value: u32) {}
}

#[test]
fn lockstep_invokes_the_external_callback_exactly_once_per_access() {
    let cfg = SimConfig::default();
    let mut words = asm::li(reg::T0, cfg.ext_base);
    words.push(asm::lw(reg::A0, reg::T0, 8));
    words.extend(asm::li(reg::A7, EXIT_CALL_MAGIC));
    words.push(asm::ecall());

    let reads = std::rc::Rc::new(std::cell::Cell::new(0));
    let mut soc = Soc::new(SimConfig::default());
    soc.set_external_port(Box::new(CountingPort { reads: reads.clone() }));
    soc.load_words(&words);
    let r = soc.run();
    assert_eq!(r.exit_code, Some(0x1008));
    assert_eq!(reads.get(), 1, "three replicas and the commit share one callback read");
}

#[test]
fn dma_sources_from_the_external_window() {
    let cfg = SimConfig::default();
    let mut soc = Soc::new(cfg.clone());
    soc.set_external_port(Box::new(ConstPort(0xA5A5_A5A5)));
    let dst = cfg.data_base + 0x400;
    soc.bus.dma.schedules.push(DmaSchedule::new(
        DmaJob::copy(cfg.ext_base + 0x100, dst, 32),
        10,
        0,
        1,
    ));
    soc.load_words(&firmware::dma_poll(&cfg, 1).words);
    let r = soc.run();
    assert_eq!(r.exit_code, Some(0));
    for i in 0..8 {
        let (w, _) = soc.bus.data_bank.peek_word(dst + i * 4).unwrap();
        assert_eq!(w, 0xA5A5_A5A5);
    }
}

#[test]
fn crossbar_grants_distinct_targets_in_parallel() {
    let mut st = CrossbarState::default();
    let reqs = [
        XbarRequest { requester: Requester::Core, target: Target::InstrBank },
        XbarRequest { requester: Requester::Dma, target: Target::DataBank },
    ];
    assert_eq!(crossbar_arbitrate(&reqs, &mut st), vec![true, true]);
}

#[test]
fn crossbar_conflicts_alternate_round_robin() {
    let mut st = CrossbarState::default();
    let reqs = [
        XbarRequest { requester: Requester::Core, target: Target::DataBank },
        XbarRequest { requester: Requester::Dma, target: Target::DataBank },
    ];
    let mut core_grants = Vec::new();
    for _ in 0..6 {
        let g = crossbar_arbitrate(&reqs, &mut st);
        assert_ne!(g[0], g[1], "exactly one grant per conflicted target");
        core_grants.push(g[0]);
    }
    assert_eq!(core_grants, vec![true, false, true, false, true, false]);
}

#[test]
fn crossbar_never_starves_any_requester() {
    let mut st = CrossbarState::default();
    let reqs = [
        XbarRequest { requester: Requester::Core, target: Target::DataBank },
        XbarRequest { requester: Requester::Dma, target: Target::DataBank },
        XbarRequest { requester: Requester::External, target: Target::DataBank },
    ];
    let mut waits = [0u32; 3];
    let mut max_wait = [0u32; 3];
    for _ in 0..60 {
        let g = crossbar_arbitrate(&reqs, &mut st);
        assert_eq!(g.iter().filter(|&&x| x).count(), 1);
        for i in 0..3 {
            if g[i] {
                max_wait[i] = max_wait[i].max(waits[i]);
                waits[i] = 0;
            } else {
                waits[i] += 1;
            }
        }
    }
    // Under continuous contention every requester is granted within the
    // requester count.
    assert!(max_wait.iter().all(|&w| w < 3), "max waits {max_wait:?}");
}

#[test]
fn dma_contention_on_the_data_bank_slows_the_transfer() {
    let cfg = SimConfig::default();
    // Program that hammers the data bank with stores while DMA copies.
    let mut hammer = asm::li(reg::T0, cfg.data_base + 0x7000);
    let hammer_loop = hammer.len() as u32;
    hammer.push(asm::sw(reg::T0, reg::T0, 0));
    hammer.push(asm::jal(0, -4));
    let _ = hammer_loop;

    let run_with = |guest: &[u32]| {
        let mut soc = Soc::new(SimConfig { max_cycles: 20_000, ..cfg.clone() });
        soc.bus.dma.schedules.push(DmaSchedule::new(
            DmaJob::copy(cfg.data_base + 0x1000, cfg.data_base + 0x2000, 256),
            100,
            0,
            1,
        ));
        soc.load_words(guest);
        let r = soc.run();
        r.dma_completions_at.first().copied().expect("transfer completes")
    };

    // Spin loop touches only the instruction bank.
    let spin = firmware::spin(&cfg, 50_000).words;
    let uncontended = run_with(&spin);
    let contended = run_with(&hammer);
    assert!(
        contended > uncontended,
        "data-bank contention must stall the engine ({contended} vs {uncontended})"
    );
}

#[test]
fn flat_and_elf_loaders_agree() {
    let cfg = cfg_single();
    let program = firmware::divmix(&cfg).words;
    let bytes: Vec<u8> = program.iter().flat_map(|w| w.to_le_bytes()).collect();

    let mut flat = Soc::new(cfg.clone());
    loader::load_bytes(&mut flat, &bytes, ImageFormat::Auto).unwrap();
    let flat_result = flat.run();

    let elf = build_elf(cfg.instr_base, &[(cfg.instr_base, bytes)]);
    let mut soc = Soc::new(cfg.clone());
    let entry = loader::load_bytes(&mut soc, &elf, ImageFormat::Auto).unwrap();
    assert_eq!(entry, cfg.instr_base);
    let elf_result = soc.run();

    assert_eq!(flat_result.exit_code, elf_result.exit_code);
    assert_eq!(flat_result.cycles, elf_result.cycles);
    assert_eq!(flat_result.mem_digest, elf_result.mem_digest);
}

#[test]
fn elf_segments_land_at_their_addresses() {
    let cfg = cfg_single();
    let data = vec![0x11, 0x22, 0x33, 0x44];
    let code: Vec<u8> = exit_words(0).iter().flat_map(|w| w.to_le_bytes()).collect();
    let elf = build_elf(
        cfg.instr_base,
        &[(cfg.instr_base, code), (cfg.data_base + 0x40, data)],
    );
    let mut soc = Soc::new(cfg.clone());
    loader::load_bytes(&mut soc, &elf, ImageFormat::Elf).unwrap();
    let (w, _) = soc.bus.data_bank.peek_word(cfg.data_base + 0x40).unwrap();
    assert_eq!(w, 0x4433_2211);
    assert_eq!(soc.run().exit_code, Some(0));
}

#[test]
fn elf_segment_overlapping_peripherals_is_a_load_error() {
    let cfg = cfg_single();
    let elf = build_elf(cfg.instr_base, &[(cfg.periph_base, vec![0u8; 16])]);
    let mut soc = Soc::new(cfg);
    let err = loader::load_bytes(&mut soc, &elf, ImageFormat::Elf);
    assert!(matches!(err, Err(loader::LoadError::SegmentUnmapped { .. })));
}

#[test]
fn malformed_elf_is_rejected_with_a_diagnostic() {
    let cfg = cfg_single();
    let mut soc = Soc::new(cfg);
    let short = vec![0x7F, b'E', b'L', b'F', 1, 1];
    assert!(loader::load_bytes(&mut soc, &short, ImageFormat::Elf).is_err());
    let mut big_endian = build_elf(0x10000, &[(0x10000, vec![0; 4])]);
    big_endian[5] = 2;
    assert!(matches!(
        loader::load_bytes(&mut soc, &big_endian, ImageFormat::Elf),
        Err(loader::LoadError::Unsupported(_))
    ));
}

#[test]
fn address_decode_is_total_over_the_map() {
    let cfg = SimConfig::default();
    let soc = Soc::new(cfg.clone());
    let map = &soc.bus.map;
    assert_eq!(map.decode(cfg.rom_base).map(|(_, o)| o).unwrap(), 0);
    assert!(map.decode(cfg.rom_base + cfg.rom_size).is_none(), "gap between regions");
    let last_data = cfg.data_base + cfg.data_size - 1;
    assert!(map.decode(last_data).is_some());
    assert!(map.decode(0xFFFF_FFFF).is_none());
    // Every region decodes its first and last byte to itself.
    for r in map.regions() {
        assert_eq!(map.decode(r.base).unwrap().0, r.dev);
        assert_eq!(map.decode(r.base + r.size - 1).unwrap().0, r.dev);
    }
}

#[test]
fn single_word_flat_binary_fetches_and_decodes() {
    let cfg = cfg_single();
    let mut soc = Soc::new(cfg.clone());
    // addi x1, x0, 5 as a one-word flat image.
    loader::load_bytes(&mut soc, &0x0050_0093u32.to_le_bytes(), ImageFormat::Flat).unwrap();
    let mut soc2 = Soc::new(SimConfig { max_cycles: 10, ..cfg });
    loader::load_bytes(&mut soc2, &0x0050_0093u32.to_le_bytes(), ImageFormat::Flat).unwrap();
    let r = soc2.run(); // runs into zero words and traps forever
    assert_eq!(r.termination, Termination::Timeout);
    // The instruction did execute from the bank base before the timeout.
    match &soc2.cores {
        sentrysim_core::soc::CoreComplex::Single(c) => assert_eq!(c.xreg(1), 5),
        _ => unreachable!(),
    }
}

#[test]
fn dma_into_undecoded_range_aborts_with_error_status() {
    let cfg = SimConfig::default();
    let mut soc = Soc::new(SimConfig { max_cycles: 5_000, ..cfg.clone() });
    // Destination starts at the timer's last defined registers and walks
    // into undefined offsets: two chunks land, the third aborts.
    let src = cfg.data_base + 0x100;
    let dst = cfg.periph_base + 0x1000 + 0x18;
    for k in 0..16 {
        soc.poke_bytes(src + k, &[0x5A]).unwrap();
    }
    soc.bus.dma.schedules.push(DmaSchedule::new(DmaJob::copy(src, dst, 16), 10, 0, 1));
    soc.load_words(&firmware::spin(&cfg, 2_000).words);
    let r = soc.run();
    assert_eq!(r.counters.dma_errors, 1);
    assert_eq!(r.counters.dma_completed, 0);
    // The two defined registers received the pattern; the aborted chunk
    // wrote nothing anywhere.
    assert_eq!(soc.bus.timer.period >> 32, 0x5A5A_5A5A, "period high word was written");
    assert_eq!(soc.bus.timer.line, 0x5A5A, "line register was written");
}

#[test]
fn dma_job_aborts_cleanly_when_nothing_is_mapped() {
    let cfg = SimConfig::default();
    let mut soc = Soc::new(SimConfig { max_cycles: 5_000, ..cfg.clone() });
    let before = soc.bus.data_bank.sweep();
    // Entirely unmapped destination: zero bytes move.
    let dst = cfg.periph_base + 0x8000;
    soc.bus.dma.schedules.push(DmaSchedule::new(
        DmaJob::copy(cfg.data_base + 0x100, dst, 32),
        10,
        0,
        1,
    ));
    soc.load_words(&firmware::spin(&cfg, 2_000).words);
    let r = soc.run();
    assert_eq!(r.counters.dma_errors, 1);
    assert_eq!(soc.bus.data_bank.sweep().digest, before.digest, "memory unchanged");
}

#[test]
fn corpus_results_match_pinned_golden_values() {
    // Frozen from the first verified run; guards the guest programs and
    // the host oracles against drifting together.
    assert_eq!(firmware::oracle::checksum_expected(), 0x270c_71a4);
    assert_eq!(firmware::oracle::divmix_expected(), 0x1d41_cb5c);
    let sorted = firmware::oracle::sort_expected();
    assert_eq!(sorted[0], 0x0787_c9f7);
    assert_eq!(sorted[31], 0xd9ec_d5d2);

    let cfg = cfg_single();
    let lay = firmware::Layout::from_config(&cfg);
    let mut soc = Soc::new(cfg.clone());
    soc.load_words(&firmware::checksum(&cfg).words);
    soc.run();
    assert_eq!(soc.bus.data_bank.peek_word(lay.result).unwrap().0, 0x270c_71a4);
}

#[test]
fn vector_fetch_from_unmapped_memory_traps_as_program_error() {
    use sentrysim_core::config::TimingModel;
    use sentrysim_core::isa::{self, cause, CoreState, FlatMem, IrqRequest, Retired};
    let mut mem = FlatMem::new(0, 0x1000);
    let mut st = CoreState::new(0);
    st.xregs[2] = 0xF00;
    let timing = TimingModel::default();
    let ctx = isa::test_ctx(&timing);
    let irq = IrqRequest { line: 1, level: 9, vector_entry_addr: Some(0xDEAD_0000) };
    let r = isa::execute_step(&mut st, &mut mem, Some(&irq), &ctx);
    match r.retired {
        Retired::Trap(t) => {
            assert_eq!(t.cause, cause::LOAD_ACCESS_FAULT);
            assert_eq!(t.tval, 0xDEAD_0000);
        }
        other => panic!("expected a trap, got {other:?}"),
    }
}

#[test]
fn double_flip_in_the_save_region_makes_recovery_unrecoverable() {
    let cfg = SimConfig::default();
    let program = firmware::checksum(&cfg).words;
    // A core fault triggers the resync; two flips land in the first
    // saved word inside the recovery window (detection .. restore).
    let trigger_at = 600u64;
    let evs = [
        FaultEvent {
            at_cycle: trigger_at,
            target: FaultTarget::CoreReg { core: 1, reg: 18 },
            flip_mask: 1,
        },
        FaultEvent {
            at_cycle: trigger_at + 50,
            target: FaultTarget::MemBit { addr: cfg.resync.stack_base, bit: 3 },
            flip_mask: 0,
        },
        FaultEvent {
            at_cycle: trigger_at + 51,
            target: FaultTarget::MemBit { addr: cfg.resync.stack_base, bit: 17 },
            flip_mask: 0,
        },
    ];
    let r = campaign::fault_run(&cfg, &program, &evs);
    assert_eq!(r.termination, Termination::Uncorrectable);
    assert_eq!(r.counters.resync_count, 1, "the resync started but could not complete");

    // A single flip in the save region is corrected during the reload.
    let evs = [
        FaultEvent {
            at_cycle: trigger_at,
            target: FaultTarget::CoreReg { core: 1, reg: 18 },
            flip_mask: 1,
        },
        FaultEvent {
            at_cycle: trigger_at + 50,
            target: FaultTarget::MemBit { addr: cfg.resync.stack_base, bit: 3 },
            flip_mask: 0,
        },
    ];
    let r = campaign::fault_run(&cfg, &program, &evs);
    assert_eq!(r.termination, Termination::Exited);
    assert_eq!(r.exit_code, Some(0));
}

#[test]
fn memory_fault_campaign_is_never_silent_or_uncorrectable_with_scrubbing() {
    use sentrysim_core::campaign::{CampaignConfig, TargetMix};
    let cfg = SimConfig::default();
    let program = firmware::checksum(&cfg);
    let cc = CampaignConfig {
        n_runs: 300,
        seed: 31,
        mix: TargetMix::mem_only(),
        single_fault: true,
        n_faults: 1,
        parallel: true,
    };
    let out = campaign::run_campaign(&cfg, &program.name, &program.words, &cc).unwrap();
    assert_eq!(out.report.outcomes["silent_corruption"], 0);
    assert_eq!(out.report.outcomes["uncorrectable"], 0);
    assert_eq!(out.report.outcomes["timeout"], 0);
}

#[test]
fn zero_fault_schedule_classifies_as_masked() {
    let cfg = SimConfig::default();
    let program = firmware::divmix(&cfg).words;
    let (golden, _) = campaign::golden_run(&cfg, &program).unwrap();
    let r = campaign::fault_run(&cfg, &program, &[]);
    assert_eq!(campaign::classify_outcome(&r, &golden), campaign::Outcome::Masked);
}

#[test]
fn campaign_aborts_when_the_golden_run_fails() {
    use sentrysim_core::campaign::{CampaignConfig, CampaignError};
    let cfg = SimConfig::default();
    // Exits 1: not a valid golden run.
    let mut words = asm::li(reg::A0, 1);
    words.extend(asm::li(reg::A7, EXIT_CALL_MAGIC));
    words.push(asm::ecall());
    let err = campaign::run_campaign(&cfg, "bad", &words, &CampaignConfig::default());
    assert!(matches!(err, Err(CampaignError::GoldenRunFailed(_))));
}

#[test]
fn guest_programs_a_dma_job_through_the_register_window() {
    use sentrysim_core::dma;
    let cfg = SimConfig::default();
    let dma_base = cfg.periph_base + 0x2000;
    let src = cfg.data_base + 0x600;
    let dst = cfg.data_base + 0x900;

    let mut words = asm::li(reg::S0, dma_base);
    let mut reg_write = |w: &mut Vec<u32>, off: u32, val: u32| {
        w.extend(asm::li(reg::T0, val));
        w.push(asm::sw(reg::T0, reg::S0, off as i32));
    };
    reg_write(&mut words, dma::DMA_SRC, src);
    reg_write(&mut words, dma::DMA_DST, dst);
    reg_write(&mut words, dma::DMA_INNER_LEN, 8);
    reg_write(&mut words, dma::DMA_REPS1, 2);
    reg_write(&mut words, dma::DMA_REPS2, 1);
    reg_write(&mut words, dma::DMA_SRC_STRIDE1, 8);
    reg_write(&mut words, dma::DMA_DST_STRIDE1, 8);
    reg_write(&mut words, dma::DMA_COMPLETION_LINE, u32::MAX);
    reg_write(&mut words, dma::DMA_LAUNCH, 1);
    // Poll the completion counter, then exit 0.
    let poll_at = words.len();
    words.push(asm::lw(reg::T1, reg::S0, dma::DMA_COMPLETED_LO as i32));
    words.push(asm::beq(reg::T1, reg::ZERO, -(4 * 1)));
    let _ = poll_at;
    words.extend(exit_words(0));

    for mode in [CoreMode::Single, CoreMode::Tcls] {
        let mut soc = Soc::new(SimConfig { core_mode: mode, ..Default::default() });
        for k in 0..16u32 {
            soc.poke_bytes(src + k, &[(0x30 + k) as u8]).unwrap();
        }
        soc.load_words(&words);
        let r = soc.run();
        assert_eq!(r.exit_code, Some(0), "mode {mode:?}");
        assert_eq!(r.counters.dma_completed, 1);
        for k in 0..16u32 {
            let (w, _) = soc.bus.data_bank.peek_word((dst + k) & !3).unwrap();
            let byte = (w >> (8 * (k & 3))) & 0xFF;
            assert_eq!(byte, 0x30 + k, "byte {k} in mode {mode:?}");
        }
    }
}

#[test]
fn bank_depth_two_banks_two_nesting_levels() {
    use sentrysim_core::config::TimingModel;
    use sentrysim_core::isa::{self, CoreState, FlatMem, IrqRequest, Retired, StepCtx};
    let mut mem = FlatMem::new(0, 0x1000);
    mem.load_words(0x800, &[0x400, 0x440, 0x480]);
    let mut st = CoreState::new(0);
    st.xregs[2] = 0xF00;
    let timing = TimingModel::default();
    let ctx = StepCtx { timing: &timing, now: 0, bank_depth: 2, frame_words: 16 };
    let irq = |line: u16, level: u8| IrqRequest {
        line,
        level,
        vector_entry_addr: Some(0x800 + 4 * line as u32),
    };
    let r = isa::execute_step(&mut st, &mut mem, Some(&irq(0, 10)), &ctx);
    assert!(matches!(r.retired, Retired::IrqEntry { banked: true, .. }));
    assert_eq!(r.cycles, 6);
    let r = isa::execute_step(&mut st, &mut mem, Some(&irq(1, 20)), &ctx);
    assert!(matches!(r.retired, Retired::IrqEntry { banked: true, .. }), "second shadow bank");
    assert_eq!(r.cycles, 6);
    let r = isa::execute_step(&mut st, &mut mem, Some(&irq(2, 30)), &ctx);
    assert!(matches!(r.retired, Retired::IrqEntry { banked: false, .. }), "third level spills");
    assert_eq!(r.cycles, 38);
}

#[test]
fn structured_single_fault_sweep_always_masks() {
    // Grid sweep over (cycle, register, bit, core) on the shortest
    // corpus program: every single flip must either vanish (overwritten
    // before the next vote) or be corrected and recovered; outputs equal
    // golden in all cases.
    let cfg = SimConfig::default();
    let program = firmware::divmix(&cfg).words;
    let (golden, golden_run) = campaign::golden_run(&cfg, &program).unwrap();
    let horizon = golden_run.cycles;

    let mut runs = 0;
    let mut recovered = 0;
    for step in 0..40u64 {
        let at_cycle = 5 + step * (horizon - 10) / 40;
        let reg = [1u8, 8, 10, 19][(step % 4) as usize];
        let bit = [0u32, 31][(step % 2) as usize];
        let core = (step % 3) as u8;
        for target in [
            FaultTarget::CoreReg { core, reg },
            FaultTarget::CorePc { core },
        ] {
            let ev = FaultEvent { at_cycle, target, flip_mask: 1 << bit };
            let r = campaign::fault_run(&cfg, &program, &[ev]);
            let outcome = campaign::classify_outcome(&r, &golden);
            assert!(
                matches!(
                    outcome,
                    campaign::Outcome::Masked | campaign::Outcome::TclsRecovered
                ),
                "fault {ev:?} produced {outcome:?}"
            );
            assert_eq!(r.exit_code, golden.exit_code, "fault {ev:?}");
            assert_eq!(r.mem_digest, golden.mem_digest, "fault {ev:?}");
            runs += 1;
            if r.counters.resync_count > 0 {
                recovered += 1;
            }
        }
    }
    assert_eq!(runs, 80);
    assert!(recovered > 40, "most flips in live state must trigger recovery");
}

#[test]
fn overlapping_dma_copies_in_generation_order() {
    // src and dst overlap with dst 4 bytes ahead: generation order means
    // later segments read bytes already rewritten by earlier ones
    // (memcpy-like, not memmove).
    let cfg = SimConfig::default();
    let base = cfg.data_base + 0x800;
    let mut soc = Soc::new(cfg.clone());
    for k in 0..20u32 {
        soc.poke_bytes(base + k, &[k as u8]).unwrap();
    }
    soc.bus.dma.schedules.push(DmaSchedule::new(DmaJob::copy(base, base + 4, 16), 10, 0, 1));
    soc.load_words(&firmware::dma_poll(&cfg, 1).words);
    assert_eq!(soc.run().exit_code, Some(0));

    // Generation-order oracle over a byte model.
    let mut model: Vec<u8> = (0..20u8).collect();
    for k in 0..16usize {
        model[k + 4] = model[k];
    }
    for (k, expect) in model.iter().enumerate() {
        let addr = base + k as u32;
        let (w, _) = soc.bus.data_bank.peek_word(addr & !3).unwrap();
        assert_eq!(((w >> (8 * (addr & 3))) & 0xFF) as u8, *expect, "byte {k}");
    }
}

#[test]
fn interrupt_heavy_lockstep_trace_is_transparent_too() {
    // The bench firmware exercises vectored entry, the banked swap and
    // the 16-word spill path; the lockstep trace must still match the
    // single-core trace bit for bit.
    #[derive(Clone, Default)]
    struct Buf(std::rc::Rc<std::cell::RefCell<Vec<u8>>>);
    impl std::io::Write for Buf {
        fn write(&mut self, b: &[u8]) -> std::io::Result<usize> {
            self.0.borrow_mut().extend_from_slice(b);
            Ok(b.len())
        }
        fn flush(&mut self) -> std::io::Result<()> {
            Ok(())
        }
    }
    let run = |mode: CoreMode| {
        let cfg = SimConfig { core_mode: mode, ..Default::default() };
        let buf = Buf::default();
        let mut soc = Soc::new(cfg.clone());
        soc.set_trace(Box::new(buf.clone()));
        soc.load_words(&firmware::irq_bench(&cfg).words);
        let r = soc.run();
        assert_eq!(r.exit_code, Some(0));
        let bytes = buf.0.borrow().clone();
        (bytes, r.cycles)
    };
    let (ts, cs) = run(CoreMode::Single);
    let (tt, ct) = run(CoreMode::Tcls);
    assert_eq!(cs, ct);
    assert_eq!(ts, tt);
    let text = String::from_utf8(ts).unwrap();
    assert!(text.contains("irq-entry"), "events appear in the trace");
}
