//! Triple-core lockstep: majority voting and software-style recovery.
//!
//! Three harts execute the same step on the same inputs. Each core runs
//! speculatively against a side-effect-free bus view (loads peek, stores
//! buffer); the three step results are then voted and only the majority
//! outcome is committed to the real bus, exactly once. The post-step
//! architectural states are voted as well, so any single-core divergence
//! is caught at instruction-retire granularity.
//!
//! A non-unanimous vote starts resynchronization: the majority state is
//! written through the voter to a dedicated stack region in ECC memory,
//! all three cores are reset, and the saved state is reloaded so
//! execution resumes at the saved pc. The cycle cost follows the
//! documented model (`resync_cost`), 316 cycles under defaults and
//! bounded by the 600-cycle recovery budget. A vote with three pairwise
//! distinct results is uncorrectable: lockstep masks single faults only,
//! and the run terminates with a distinct classification.

use crate::config::SimConfig;
pub use crate::config::resync_cost;
use crate::isa::{
    execute_step, reset_core, BusError, CoreBus, CoreState, IrqRequest, LockstepBus, StepCtx,
    StepResult,
};

/// How a 3-way vote went.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VoteStatus {
    Unanimous,
    /// Exactly one input disagreed with the two equal ones.
    Corrected { dissenting_core: u8 },
    /// All three inputs pairwise distinct; no majority exists.
    Uncorrectable,
}

/// Where a vote was taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VoteSite {
    /// Bare value vote (the `vote3` primitive).
    Raw,
    Pc,
    Xreg(u8),
    Csr(u16),
    PrivLevel,
    /// The step's outbound transaction list / retired record.
    BusTransactions,
    Exit,
    /// WFI flag, halt flag or interrupt context bookkeeping.
    ContextExtra,
}

/// Result of one vote.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VoteOutcome {
    /// The majority value (representative hash for aggregate sites).
    /// Unspecified when the vote is uncorrectable.
    pub value: u32,
    pub status: VoteStatus,
    pub site: VoteSite,
}

impl VoteOutcome {
    pub fn majority(&self) -> Option<u32> {
        match self.status {
            VoteStatus::Uncorrectable => None,
            _ => Some(self.value),
        }
    }
}

/// Majority vote over three words. Permutation-symmetric in the
/// majority value; all-distinct inputs are uncorrectable.
pub fn vote3(a: u32, b: u32, c: u32) -> VoteOutcome {
    let (value, status) = if a == b && b == c {
        (a, VoteStatus::Unanimous)
    } else if a == b {
        (a, VoteStatus::Corrected { dissenting_core: 2 })
    } else if a == c {
        (a, VoteStatus::Corrected { dissenting_core: 1 })
    } else if b == c {
        (b, VoteStatus::Corrected { dissenting_core: 0 })
    } else {
        (a, VoteStatus::Uncorrectable)
    };
    VoteOutcome { value, status, site: VoteSite::Raw }
}

/// Index-level majority over any comparable triple.
fn majority3<T: PartialEq>(xs: &[T; 3]) -> VoteStatus {
    if xs[0] == xs[1] && xs[1] == xs[2] {
        VoteStatus::Unanimous
    } else if xs[0] == xs[1] {
        VoteStatus::Corrected { dissenting_core: 2 }
    } else if xs[0] == xs[2] {
        VoteStatus::Corrected { dissenting_core: 1 }
    } else if xs[1] == xs[2] {
        VoteStatus::Corrected { dissenting_core: 0 }
    } else {
        VoteStatus::Uncorrectable
    }
}

fn majority_index(status: VoteStatus) -> Option<usize> {
    match status {
        VoteStatus::Unanimous => Some(0),
        VoteStatus::Corrected { dissenting_core } => Some(((dissenting_core as usize) + 1) % 3),
        VoteStatus::Uncorrectable => None,
    }
}

/// Recovery phase as observable from outside.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResyncPhase {
    Idle,
    /// State saved and cores reset; the reload happens when the cost
    /// window elapses.
    Restore,
}

/// Ensemble execution mode.
#[derive(Debug, Clone, PartialEq)]
pub enum EnsembleMode {
    Lockstep,
    Resyncing { detect_cycle: u64, resume_at: u64, majority: Box<CoreState> },
}

/// A completed resynchronization, for budget checks and reports.
#[derive(Debug, Clone, PartialEq)]
pub struct ResyncRecord {
    pub detect_cycle: u64,
    pub resume_cycle: u64,
    /// resume_cycle - detect_cycle; must equal the cost formula.
    pub duration: u64,
    /// Retired-instruction count of the restored state.
    pub instret: u64,
    /// The state all three cores resumed from.
    pub restored: Box<CoreState>,
}

/// Why a resynchronization could not complete.
#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum ResyncFailure {
    #[error("uncorrectable ECC error in the save region at {0:#010x}")]
    SaveRegionUncorrectable(u32),
    #[error("bus error reading the save region at {0:#010x}")]
    SaveRegionUnmapped(u32),
}

/// One voted lockstep step.
#[derive(Debug, Clone, PartialEq)]
pub struct VotedStep {
    /// The majority step, committed exactly once.
    pub committed: StepResult,
    /// Non-unanimous vote outcomes observed this step.
    pub outcomes: Vec<VoteOutcome>,
    /// Set when a resynchronization was started at the end of this step.
    pub resync_started: bool,
    /// Set when no majority existed (double fault); the run cannot
    /// recover.
    pub uncorrectable: bool,
}

/// Three harts stepped in lockstep behind a majority voter.
#[derive(Debug, Clone, PartialEq)]
pub struct LockstepEnsemble {
    pub cores: [CoreState; 3],
    pub mode: EnsembleMode,
    pub mismatch_count: u64,
    pub resync_count: u64,
    boot_addr: u32,
}

/// Speculative bus view for phase-1 execution: loads peek through to the
/// real bus without side effects, stores are buffered locally and become
/// visible to this core's own later loads within the step.
struct SpecBus<'a, B: LockstepBus + ?Sized> {
    inner: &'a mut B,
    stores: Vec<(u32, u8, u32)>,
}

impl<'a, B: LockstepBus + ?Sized> SpecBus<'a, B> {
    fn new(inner: &'a mut B) -> Self {
        SpecBus { inner, stores: Vec::new() }
    }

    fn read_overlay(&mut self, addr: u32, width: u8) -> Result<u32, BusError> {
        let mut value = self.inner.peek(addr, width)?;
        for &(sa, sw, sv) in &self.stores {
            for k in 0..sw as u32 {
                let byte_addr = sa.wrapping_add(k);
                let rel = byte_addr.wrapping_sub(addr);
                if rel < width as u32 {
                    let byte = (sv >> (8 * k)) & 0xFF;
                    value = (value & !(0xFF << (8 * rel))) | (byte << (8 * rel));
                }
            }
        }
        Ok(value)
    }
}

impl<B: LockstepBus + ?Sized> CoreBus for SpecBus<'_, B> {
    fn fetch(&mut self, addr: u32) -> Result<u32, BusError> {
        self.read_overlay(addr, 4)
    }

    fn load(&mut self, addr: u32, width: u8) -> Result<u32, BusError> {
        self.read_overlay(addr, width)
    }

    fn store(&mut self, addr: u32, width: u8, value: u32) -> Result<(), BusError> {
        // Validate the target so phase-1 execution traps exactly where
        // the committed store would fault.
        self.inner.probe_store(addr, width)?;
        self.stores.push((addr, width, value));
        Ok(())
    }
}

const CSR_SAVE_COUNT: usize = 10;

fn state_to_words(state: &CoreState, n_words: u32) -> Vec<u32> {
    let mut words = Vec::with_capacity(n_words as usize);
    words.push(state.pc);
    words.extend_from_slice(&state.xregs[1..]);
    let c = &state.csrs;
    words.extend([
        c.mstatus,
        c.mtvec,
        c.mscratch,
        c.mepc,
        c.mcause,
        c.mtval,
        c.mcycle as u32,
        (c.mcycle >> 32) as u32,
        c.minstret as u32,
        (c.minstret >> 32) as u32,
    ]);
    debug_assert_eq!(words.len(), 32 + CSR_SAVE_COUNT);
    // FPU placeholder words (and any configured extras) pad the frame.
    words.resize(n_words as usize, 0);
    words
}

fn words_to_state(words: &[u32], template: &CoreState) -> CoreState {
    let mut state = template.clone();
    state.pc = words[0];
    state.xregs[0] = 0;
    state.xregs[1..].copy_from_slice(&words[1..32]);
    let c = &mut state.csrs;
    c.mstatus = words[32];
    c.mtvec = words[33];
    c.mscratch = words[34];
    c.mepc = words[35];
    c.mcause = words[36];
    c.mtval = words[37];
    c.mcycle = words[38] as u64 | ((words[39] as u64) << 32);
    c.minstret = words[40] as u64 | ((words[41] as u64) << 32);
    state
}

impl LockstepEnsemble {
    pub fn new(boot_addr: u32) -> Self {
        LockstepEnsemble {
            cores: [CoreState::new(boot_addr), CoreState::new(boot_addr), CoreState::new(boot_addr)],
            mode: EnsembleMode::Lockstep,
            mismatch_count: 0,
            resync_count: 0,
            boot_addr,
        }
    }

    pub fn resync_phase(&self) -> ResyncPhase {
        match self.mode {
            EnsembleMode::Lockstep => ResyncPhase::Idle,
            EnsembleMode::Resyncing { .. } => ResyncPhase::Restore,
        }
    }

    pub fn is_resyncing(&self) -> bool {
        matches!(self.mode, EnsembleMode::Resyncing { .. })
    }

    /// Cycle at which the pending resynchronization completes.
    pub fn resume_at(&self) -> Option<u64> {
        match &self.mode {
            EnsembleMode::Resyncing { resume_at, .. } => Some(*resume_at),
            EnsembleMode::Lockstep => None,
        }
    }

    /// Majority view of the interrupt gate: (MIE set, running level).
    pub fn irq_gate(&self) -> (bool, u8) {
        let gates: [(bool, u8); 3] = [0, 1, 2].map(|i| {
            let c = &self.cores[i];
            (c.csrs.mstatus & crate::isa::csr::MSTATUS_MIE != 0, c.priv_irq_level)
        });
        match majority_index(majority3(&gates)) {
            Some(idx) => gates[idx],
            None => gates[0],
        }
    }

    /// Majority view of the halt flag.
    pub fn halted(&self) -> bool {
        let flags = [self.cores[0].halted, self.cores[1].halted, self.cores[2].halted];
        match majority_index(majority3(&flags)) {
            Some(idx) => flags[idx],
            None => flags[0],
        }
    }

    /// Execute one voted step. Phase 1 steps each core speculatively on
    /// identical inputs; phase 2 votes the step results and post-step
    /// states, commits the majority outcome once, and starts
    /// resynchronization on any non-unanimous vote.
    pub fn lockstep_step<B: LockstepBus + ?Sized>(
        &mut self,
        bus: &mut B,
        irq: Option<&IrqRequest>,
        ctx: &StepCtx,
        cfg: &SimConfig,
    ) -> VotedStep {
        debug_assert!(!self.is_resyncing(), "stepping while resyncing");

        let mut results: Vec<StepResult> = Vec::with_capacity(3);
        for core in self.cores.iter_mut() {
            let mut spec = SpecBus::new(bus);
            results.push(execute_step(core, &mut spec, irq, ctx));
        }
        let results: [StepResult; 3] = results.try_into().expect("three results");

        let mut outcomes = Vec::new();

        // Vote the outbound step: transaction list, retire record, cost
        // and exit, as one unit.
        let result_vote = majority3(&results);
        if result_vote != VoteStatus::Unanimous {
            outcomes.push(VoteOutcome {
                value: results_digest(&results, result_vote),
                status: result_vote,
                site: VoteSite::BusTransactions,
            });
        }

        // Vote the post-step architectural states.
        let state_vote = majority3(&self.cores);
        if state_vote != VoteStatus::Unanimous {
            self.record_state_sites(state_vote, &mut outcomes);
        }

        // Both votes must agree on who the dissenter is; disjoint
        // dissent means more than one faulty core.
        let uncorrectable = matches!(result_vote, VoteStatus::Uncorrectable)
            || matches!(state_vote, VoteStatus::Uncorrectable)
            || (result_vote != VoteStatus::Unanimous
                && state_vote != VoteStatus::Unanimous
                && result_vote != state_vote);

        self.mismatch_count +=
            outcomes.iter().filter(|o| matches!(o.status, VoteStatus::Corrected { .. })).count()
                as u64;

        // The committed step is the result-vote majority; the recovery
        // state is the state-vote majority. They coincide whenever the
        // step is recoverable.
        let committed_idx = match result_vote {
            VoteStatus::Corrected { .. } => majority_index(result_vote).unwrap(),
            _ => majority_index(state_vote).unwrap_or(0),
        };
        let majority_state_idx = match state_vote {
            VoteStatus::Corrected { .. } => majority_index(state_vote).unwrap(),
            _ => committed_idx,
        };
        let committed = results[committed_idx].clone();

        let mut resync_started = false;
        if !uncorrectable {
            commit_transactions(bus, &committed);
            if !outcomes.is_empty() {
                // Mismatch detected at the end of this step: save the
                // majority state through the voter and reset the cores.
                let majority = Box::new(self.cores[majority_state_idx].clone());
                let detect_cycle = ctx.now + committed.cycles.max(1) as u64;
                let resume_at = detect_cycle + cfg.resync_cost();
                self.begin_resync(bus, cfg, &majority, detect_cycle, resume_at);
                resync_started = true;
            }
        }

        VotedStep { committed, outcomes, resync_started, uncorrectable }
    }

    fn record_state_sites(&self, state_vote: VoteStatus, outcomes: &mut Vec<VoteOutcome>) {
        let Some(maj) = majority_index(state_vote) else {
            outcomes.push(VoteOutcome { value: 0, status: state_vote, site: VoteSite::Pc });
            return;
        };
        let dissent = match state_vote {
            VoteStatus::Corrected { dissenting_core } => dissenting_core as usize,
            _ => unreachable!("majority implies a dissenter here"),
        };
        let (m, d) = (&self.cores[maj], &self.cores[dissent]);
        let mut push = |site: VoteSite, value: u32| {
            outcomes.push(VoteOutcome { value, status: state_vote, site });
        };
        if m.pc != d.pc {
            push(VoteSite::Pc, m.pc);
        }
        for i in 1..32u8 {
            if m.xregs[i as usize] != d.xregs[i as usize] {
                push(VoteSite::Xreg(i), m.xregs[i as usize]);
            }
        }
        use crate::isa::csr;
        let pairs = [
            (csr::MSTATUS, m.csrs.mstatus, d.csrs.mstatus),
            (csr::MTVEC, m.csrs.mtvec, d.csrs.mtvec),
            (csr::MSCRATCH, m.csrs.mscratch, d.csrs.mscratch),
            (csr::MEPC, m.csrs.mepc, d.csrs.mepc),
            (csr::MCAUSE, m.csrs.mcause, d.csrs.mcause),
            (csr::MTVAL, m.csrs.mtval, d.csrs.mtval),
        ];
        for (id, mv, dv) in pairs {
            if mv != dv {
                push(VoteSite::Csr(id), mv);
            }
        }
        if m.csrs.mcycle != d.csrs.mcycle {
            push(VoteSite::Csr(csr::MCYCLE), m.csrs.mcycle as u32);
        }
        if m.csrs.minstret != d.csrs.minstret {
            push(VoteSite::Csr(csr::MINSTRET), m.csrs.minstret as u32);
        }
        if m.priv_irq_level != d.priv_irq_level {
            push(VoteSite::PrivLevel, m.priv_irq_level as u32);
        }
        if (m.halted, m.wfi, &m.irq_frames) != (d.halted, d.wfi, &d.irq_frames) {
            push(VoteSite::ContextExtra, 0);
        }
    }

    /// Save the voted state to the resync stack and reset all cores.
    /// The reload happens in [`finish_resync`] when the cost window
    /// elapses, so latent faults in the save region are observable.
    fn begin_resync<B: LockstepBus + ?Sized>(
        &mut self,
        bus: &mut B,
        cfg: &SimConfig,
        majority: &CoreState,
        detect_cycle: u64,
        resume_at: u64,
    ) {
        let words = state_to_words(majority, cfg.resync.state_words);
        for (i, w) in words.iter().enumerate() {
            let addr = cfg.resync.stack_base + i as u32 * 4;
            bus.store(addr, 4, *w).expect("resync stack write within the data bank");
        }
        for core in self.cores.iter_mut() {
            reset_core(core, self.boot_addr);
        }
        self.resync_count += 1;
        self.mode = EnsembleMode::Resyncing {
            detect_cycle,
            resume_at,
            majority: Box::new(majority.clone()),
        };
    }

    /// Reload the saved state through the voter into all three cores and
    /// resume lockstep. Fails if the save region decoded uncorrectable.
    pub fn finish_resync<B: LockstepBus + ?Sized>(
        &mut self,
        bus: &mut B,
        cfg: &SimConfig,
    ) -> Result<ResyncRecord, ResyncFailure> {
        let EnsembleMode::Resyncing { detect_cycle, resume_at, majority } =
            std::mem::replace(&mut self.mode, EnsembleMode::Lockstep)
        else {
            panic!("finish_resync without a pending resync");
        };

        let mut words = Vec::with_capacity(cfg.resync.state_words as usize);
        for i in 0..cfg.resync.state_words {
            let addr = cfg.resync.stack_base + i * 4;
            match bus.load(addr, 4) {
                Ok(w) => words.push(w),
                Err(BusError::Uncorrectable(a)) => {
                    return Err(ResyncFailure::SaveRegionUncorrectable(a))
                }
                Err(BusError::Unmapped(a)) => return Err(ResyncFailure::SaveRegionUnmapped(a)),
            }
        }
        // Interrupt context bookkeeping is restored from the voter's
        // copy; the cost model already charges for it via the
        // placeholder words.
        let restored = words_to_state(&words, &majority);
        for core in self.cores.iter_mut() {
            *core = restored.clone();
        }
        Ok(ResyncRecord {
            detect_cycle,
            resume_cycle: resume_at,
            duration: resume_at - detect_cycle,
            instret: restored.csrs.minstret,
            restored: Box::new(restored),
        })
    }
}

fn results_digest(results: &[StepResult; 3], vote: VoteStatus) -> u32 {
    let idx = majority_index(vote).unwrap_or(0);
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    let mut mix = |v: u64| {
        h ^= v;
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    };
    for tx in &results[idx].transactions {
        mix(tx.address as u64);
        mix(tx.data as u64);
        mix(tx.width as u64);
    }
    mix(results[idx].cycles as u64);
    h as u32
}

fn commit_transactions<B: LockstepBus + ?Sized>(bus: &mut B, committed: &StepResult) {
    use crate::isa::TxKind;
    for tx in &committed.transactions {
        // The majority cores already completed these accesses in the
        // speculative phase, so the committed replay cannot fault; a
        // demand correction or external read lands exactly once here.
        match tx.kind {
            TxKind::Fetch => {
                let _ = bus.fetch(tx.address);
            }
            TxKind::Load => {
                let _ = bus.load(tx.address, tx.width);
            }
            TxKind::Store => {
                let _ = bus.store(tx.address, tx.width, tx.data);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vote3_unanimous() {
        let v = vote3(7, 7, 7);
        assert_eq!(v.value, 7);
        assert_eq!(v.status, VoteStatus::Unanimous);
    }

    #[test]
    fn vote3_corrects_single_dissent() {
        let v = vote3(7, 9, 7);
        assert_eq!(v.value, 7);
        assert_eq!(v.status, VoteStatus::Corrected { dissenting_core: 1 });
        assert_eq!(vote3(9, 7, 7).status, VoteStatus::Corrected { dissenting_core: 0 });
        assert_eq!(vote3(7, 7, 9).status, VoteStatus::Corrected { dissenting_core: 2 });
    }

    #[test]
    fn vote3_all_distinct_is_uncorrectable() {
        let v = vote3(1, 2, 3);
        assert_eq!(v.status, VoteStatus::Uncorrectable);
        assert_eq!(v.majority(), None);
    }

    #[test]
    fn vote3_is_permutation_symmetric_in_the_majority() {
        for (a, b, c) in [(5u32, 5, 9), (5, 9, 5), (9, 5, 5)] {
            assert_eq!(vote3(a, b, c).value, 5);
        }
    }

    #[test]
    fn vote3_equals_bitwise_majority_when_majority_exists() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..500 {
            let v: u32 = rng.gen();
            let mut fault: u32 = rng.gen();
            if fault == v {
                fault ^= 1;
            }
            let slot = rng.gen_range(0..3);
            let mut inputs = [v, v, v];
            inputs[slot] = fault;
            let out = vote3(inputs[0], inputs[1], inputs[2]);
            // Bitwise majority function per bit position.
            let bitwise = (inputs[0] & inputs[1]) | (inputs[0] & inputs[2]) | (inputs[1] & inputs[2]);
            assert_eq!(out.value, bitwise);
            assert_eq!(out.status, VoteStatus::Corrected { dissenting_core: slot as u8 });
        }
    }

    #[test]
    fn resync_cost_examples() {
        assert_eq!(resync_cost(74, 1, 20), 316);
        assert_eq!(resync_cost(64, 1, 20), 276);
        assert!(resync_cost(74, 1, 20) <= 600);
    }

    #[test]
    fn state_word_round_trip() {
        let mut st = CoreState::new(0x1234);
        for i in 1..32 {
            st.xregs[i] = (i as u32) * 0x0101_0101;
        }
        st.csrs.mscratch = 0xABCD_EF01;
        st.csrs.mcycle = 0x1_2345_6789;
        st.csrs.minstret = 42;
        let words = state_to_words(&st, 74);
        assert_eq!(words.len(), 74);
        let back = words_to_state(&words, &st);
        assert_eq!(back, st);
    }

    mod lockstep {
        use super::super::*;
        use crate::asm::{self, reg};
        use crate::config::TimingModel;
        use crate::isa::{FlatMem, TxKind};

        // Lockstep over a flat 256 KiB test memory; the default resync
        // stack address lands inside it.
        fn setup(words: &[u32]) -> (LockstepEnsemble, FlatMem, SimConfig) {
            let mut mem = FlatMem::new(0, 0x40000);
            mem.load_words(0, words);
            let cfg = SimConfig::default();
            (LockstepEnsemble::new(0), mem, cfg)
        }

        fn step(
            ens: &mut LockstepEnsemble,
            mem: &mut FlatMem,
            cfg: &SimConfig,
            now: u64,
        ) -> VotedStep {
            let timing = TimingModel::default();
            let ctx = StepCtx { timing: &timing, now, bank_depth: 1, frame_words: 16 };
            ens.lockstep_step(mem, None, &ctx, cfg)
        }

        #[test]
        fn fault_free_steps_match_a_single_core_run() {
            let words = vec![
                asm::addi(reg::T0, 0, 0x77),
                asm::sw(reg::T0, 0, 0x100),
                asm::lw(reg::T1, 0, 0x100),
                asm::add(reg::T2, reg::T0, reg::T1),
            ];
            let (mut ens, mut mem, cfg) = setup(&words);
            let mut solo_mem = mem.clone();
            let mut solo = CoreState::new(0);
            let timing = TimingModel::default();
            for now in 0..4 {
                let ctx = StepCtx { timing: &timing, now, bank_depth: 1, frame_words: 16 };
                let voted = ens.lockstep_step(&mut mem, None, &ctx, &cfg);
                let single = execute_step(&mut solo, &mut solo_mem, None, &ctx);
                assert_eq!(voted.committed, single, "step at {now}");
                assert!(voted.outcomes.is_empty());
                assert!(!voted.resync_started);
            }
            assert_eq!(ens.cores[0], solo);
            assert_eq!(mem.bytes, solo_mem.bytes, "committed effects land exactly once");
            assert_eq!(ens.mismatch_count, 0);
        }

        #[test]
        fn store_data_vote_corrects_a_flipped_register() {
            // One bit flipped in core 2's t0 before a store: the store
            // data vote corrects with dissenting core 2, the committed
            // value is the majority one, and a resync begins.
            let words = vec![asm::sw(reg::T0, 0, 0x200)];
            let (mut ens, mut mem, cfg) = setup(&words);
            for c in ens.cores.iter_mut() {
                c.xregs[reg::T0 as usize] = 0xAAAA_5555;
            }
            ens.cores[2].xregs[reg::T0 as usize] ^= 1 << 9;

            let voted = step(&mut ens, &mut mem, &cfg, 0);
            let tx_outcome = voted
                .outcomes
                .iter()
                .find(|o| o.site == VoteSite::BusTransactions)
                .expect("transaction vote must flag the store");
            assert_eq!(tx_outcome.status, VoteStatus::Corrected { dissenting_core: 2 });
            assert!(voted
                .outcomes
                .iter()
                .any(|o| o.site == VoteSite::Xreg(reg::T0) && o.value == 0xAAAA_5555));
            let store = voted
                .committed
                .transactions
                .iter()
                .find(|t| t.kind == TxKind::Store)
                .unwrap();
            assert_eq!(store.data, 0xAAAA_5555, "only the voted value reaches the bus");
            assert!(voted.resync_started);
            assert_eq!(ens.resync_count, 1);
            assert!(ens.mismatch_count >= 1);
        }

        #[test]
        fn resync_restores_all_cores_to_the_majority_state() {
            let words = vec![asm::addi(reg::T0, reg::T0, 1), asm::addi(reg::T1, reg::T1, 2)];
            let (mut ens, mut mem, cfg) = setup(&words);
            ens.cores[1].xregs[reg::S3 as usize] ^= 1 << 4;
            let voted = step(&mut ens, &mut mem, &cfg, 0);
            assert!(voted.resync_started);
            let majority_before = {
                let mut s = CoreState::new(0);
                execute_step(
                    &mut s,
                    &mut {
                        let mut m = FlatMem::new(0, 0x1000);
                        m.load_words(0, &words);
                        m
                    },
                    None,
                    &crate::isa::test_ctx(&TimingModel::default()),
                );
                s
            };
            let resume = ens.resume_at().unwrap();
            assert_eq!(resume, voted.committed.cycles as u64 + cfg.resync_cost());
            let record = ens.finish_resync(&mut mem, &cfg).unwrap();
            assert_eq!(record.duration, cfg.resync_cost());
            assert!(record.duration <= 600);
            for core in &ens.cores {
                assert_eq!(*core, majority_before);
            }
            assert_eq!(*record.restored, majority_before);
            assert!(!ens.is_resyncing());
        }

        #[test]
        fn flips_in_two_cores_are_uncorrectable() {
            let words = vec![asm::sw(reg::T0, 0, 0x200)];
            let (mut ens, mut mem, cfg) = setup(&words);
            ens.cores[0].xregs[reg::T0 as usize] = 1;
            ens.cores[1].xregs[reg::T0 as usize] = 2;
            // cores[2] keeps 0: all three store values pairwise distinct.
            let voted = step(&mut ens, &mut mem, &cfg, 0);
            assert!(voted.uncorrectable);
            assert!(!voted.resync_started);
        }

        #[test]
        fn uncorrectable_commits_nothing() {
            let words = vec![asm::sw(reg::T0, 0, 0x200)];
            let (mut ens, mut mem, cfg) = setup(&words);
            ens.cores[0].xregs[reg::T0 as usize] = 1;
            ens.cores[1].xregs[reg::T0 as usize] = 2;
            ens.cores[2].xregs[reg::T0 as usize] = 3;
            let before = mem.bytes.clone();
            let voted = step(&mut ens, &mut mem, &cfg, 0);
            assert!(voted.uncorrectable);
            assert_eq!(mem.bytes, before);
        }

        #[test]
        fn counter_consistency() {
            // Two separate single faults: each corrected outcome bumps
            // mismatch_count once and resync_count never exceeds it.
            let words = vec![
                asm::addi(reg::T0, reg::T0, 1),
                asm::addi(reg::T0, reg::T0, 1),
                asm::addi(reg::T0, reg::T0, 1),
            ];
            let (mut ens, mut mem, cfg) = setup(&words);
            ens.cores[0].xregs[reg::S2 as usize] ^= 4;
            let v = step(&mut ens, &mut mem, &cfg, 0);
            assert!(v.resync_started);
            ens.finish_resync(&mut mem, &cfg).unwrap();
            ens.cores[2].xregs[reg::S3 as usize] ^= 8;
            let v = step(&mut ens, &mut mem, &cfg, 1000);
            assert!(v.resync_started);
            ens.finish_resync(&mut mem, &cfg).unwrap();
            assert_eq!(ens.resync_count, 2);
            assert!(ens.resync_count <= ens.mismatch_count);
            assert_eq!(ens.mismatch_count, 2, "one corrected outcome per injected flip");
        }
    }
}
