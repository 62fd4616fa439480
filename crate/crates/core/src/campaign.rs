//! Fault-injection campaigns: reproducible schedules, many runs,
//! outcome classification and aggregated statistics.
//!
//! The fault model covers bit flips in core architectural state (one
//! core at a time, matching the transient single-fault assumption the
//! lockstep trio protects against) and in memory codewords. Voter, CLIC
//! and DMA internal state are assumed fault-free.
//!
//! A campaign first executes the fault-free golden run on a single core,
//! then replays the program under lockstep once per scheduled fault and
//! classifies each run by comparing detection events and the final
//! memory image / exit code against golden. Runs execute in parallel
//! with per-run derived seeds; the aggregate is independent of thread
//! count.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{CoreMode, SimConfig};
use crate::isa::CoreState;
use crate::soc::{RunResult, Soc, Termination};
use crate::tcls::ResyncRecord;

/// The recovery budget the resynchronization path must meet.
pub const RESYNC_BUDGET_CYCLES: u64 = 600;

/// What one fault event flips.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FaultTarget {
    /// XOR `flip_mask` into one core's integer register (1..=31).
    CoreReg { core: u8, reg: u8 },
    /// XOR `flip_mask` into one core's pc.
    CorePc { core: u8 },
    /// Toggle one stored codeword bit (0..39) in a memory bank.
    MemBit { addr: u32, bit: u8 },
}

impl FaultTarget {
    pub fn is_core(&self) -> bool {
        matches!(self, FaultTarget::CoreReg { .. } | FaultTarget::CorePc { .. })
    }
}

/// A scheduled bit flip.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaultEvent {
    pub at_cycle: u64,
    pub target: FaultTarget,
    /// XOR mask for core targets; ignored for memory bits.
    pub flip_mask: u32,
}

/// Relative weights of the fault target classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct TargetMix {
    pub core_reg: u32,
    pub core_pc: u32,
    pub mem_bit: u32,
}

impl Default for TargetMix {
    fn default() -> Self {
        TargetMix { core_reg: 8, core_pc: 2, mem_bit: 6 }
    }
}

impl TargetMix {
    pub fn core_only() -> Self {
        TargetMix { core_reg: 8, core_pc: 2, mem_bit: 0 }
    }

    pub fn mem_only() -> Self {
        TargetMix { core_reg: 0, core_pc: 0, mem_bit: 1 }
    }

    fn total(&self) -> u32 {
        self.core_reg + self.core_pc + self.mem_bit
    }
}

/// Classified outcome of one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    /// No detection event and outputs equal golden.
    Masked,
    /// ECC corrected something; outputs equal golden.
    EccCorrected,
    /// At least one resynchronization; outputs equal golden.
    TclsRecovered,
    /// A detected-unrecoverable condition (double fault, uncorrectable
    /// word, failed recovery).
    Uncorrectable,
    /// Wrong output with no detection event anywhere.
    SilentCorruption,
    /// The run hit max_cycles.
    Timeout,
}

impl Outcome {
    pub fn name(self) -> &'static str {
        match self {
            Outcome::Masked => "masked",
            Outcome::EccCorrected => "ecc_corrected",
            Outcome::TclsRecovered => "tcls_recovered",
            Outcome::Uncorrectable => "uncorrectable",
            Outcome::SilentCorruption => "silent_corruption",
            Outcome::Timeout => "timeout",
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CampaignError {
    #[error("empty fault target set")]
    EmptyTargets,
    #[error("golden run failed: {0}")]
    GoldenRunFailed(String),
    #[error("campaign config: {0}")]
    Config(String),
}

/// Campaign parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct CampaignConfig {
    pub n_runs: u64,
    pub seed: u64,
    pub mix: TargetMix,
    /// One fault per run, the transient model the architecture claims to
    /// mask. When false, `n_faults` independent events land per run.
    pub single_fault: bool,
    pub n_faults: u32,
    /// Run the simulations on a thread pool.
    pub parallel: bool,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        CampaignConfig {
            n_runs: 100,
            seed: 1,
            mix: TargetMix::default(),
            single_fault: true,
            n_faults: 1,
            parallel: true,
        }
    }
}

/// `[campaign]` section of a TOML config file. Keys mirror
/// [`CampaignConfig`] plus the program to run.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct CampaignFileSection {
    /// Image path or `builtin:<name>`.
    pub program: Option<String>,
    pub n_runs: Option<u64>,
    pub seed: Option<u64>,
    /// `core`, `mem` or `both`.
    pub targets: Option<String>,
    pub single_fault: Option<bool>,
    pub n_faults: Option<u32>,
    pub mix: Option<TargetMix>,
}

impl CampaignFileSection {
    /// Overlay the file section onto a base config.
    pub fn apply(&self, base: &mut CampaignConfig) -> Result<(), CampaignError> {
        if let Some(n) = self.n_runs {
            base.n_runs = n;
        }
        if let Some(s) = self.seed {
            base.seed = s;
        }
        if let Some(t) = &self.targets {
            base.mix = match t.as_str() {
                "core" => TargetMix::core_only(),
                "mem" => TargetMix::mem_only(),
                "both" => TargetMix::default(),
                other => {
                    return Err(CampaignError::Config(format!(
                        "unknown targets `{other}` (use core, mem or both)"
                    )))
                }
            };
        }
        if let Some(m) = self.mix {
            base.mix = m;
        }
        if let Some(sf) = self.single_fault {
            base.single_fault = sf;
        }
        if let Some(nf) = self.n_faults {
            base.n_faults = nf;
        }
        Ok(())
    }
}

/// Parse the `[campaign]` section of a config file (absent section gives
/// all-`None` fields).
pub fn load_campaign_section(path: &std::path::Path) -> Result<CampaignFileSection, CampaignError> {
    #[derive(Deserialize, Default)]
    #[serde(default)]
    struct Wrap {
        campaign: CampaignFileSection,
    }
    let text = std::fs::read_to_string(path)
        .map_err(|e| CampaignError::Config(format!("cannot read {}: {e}", path.display())))?;
    let wrap: Wrap = toml::from_str(&text)
        .map_err(|e| CampaignError::Config(format!("cannot parse {}: {e}", path.display())))?;
    Ok(wrap.campaign)
}

/// Golden-run reference for classification.
#[derive(Debug, Clone, Copy)]
pub struct GoldenRef {
    pub mem_digest: u64,
    pub exit_code: Option<u32>,
    pub cycles: u64,
    pub instret: u64,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Per-run seed: campaign seed XOR the hashed run index.
pub fn run_seed(campaign_seed: u64, run_idx: u64) -> u64 {
    splitmix64(campaign_seed ^ splitmix64(run_idx.wrapping_add(1)))
}

/// Generate a reproducible fault schedule, sorted by cycle.
///
/// In single-fault mode at most one core-target event is generated per
/// schedule, so no two core faults can land within one vote window by
/// construction.
pub fn gen_schedule(
    seed: u64,
    n_faults: u32,
    mix: &TargetMix,
    window: (u64, u64),
    cfg: &SimConfig,
    single_fault: bool,
) -> Result<Vec<FaultEvent>, CampaignError> {
    if mix.total() == 0 {
        return Err(CampaignError::EmptyTargets);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = window;
    let hi = hi.max(lo + 1);
    let n = if single_fault { n_faults.min(1) } else { n_faults };
    let mut events = Vec::with_capacity(n as usize);
    let mut core_used = false;
    for _ in 0..n {
        let at_cycle = rng.gen_range(lo..hi);
        let mut pick = rng.gen_range(0..mix.total());
        let target = if pick < mix.core_reg && !(single_fault && core_used) {
            core_used = true;
            FaultTarget::CoreReg { core: rng.gen_range(0..3), reg: rng.gen_range(1..32) }
        } else {
            pick = pick.saturating_sub(mix.core_reg);
            if pick < mix.core_pc && mix.core_pc > 0 && !(single_fault && core_used) {
                core_used = true;
                FaultTarget::CorePc { core: rng.gen_range(0..3) }
            } else if mix.mem_bit > 0 {
                FaultTarget::MemBit { addr: random_mem_addr(&mut rng, cfg), bit: rng.gen_range(0..39) }
            } else {
                core_used = true;
                FaultTarget::CoreReg { core: rng.gen_range(0..3), reg: rng.gen_range(1..32) }
            }
        };
        let flip_mask = 1u32 << rng.gen_range(0..32);
        events.push(FaultEvent { at_cycle, target, flip_mask });
    }
    events.sort_by_key(|e| e.at_cycle);
    Ok(events)
}

fn random_mem_addr(rng: &mut ChaCha8Rng, cfg: &SimConfig) -> u32 {
    let instr_words = cfg.instr_size / 4;
    let data_words = cfg.data_size / 4;
    let pick = rng.gen_range(0..instr_words + data_words);
    if pick < instr_words {
        cfg.instr_base + pick * 4
    } else {
        cfg.data_base + (pick - instr_words) * 4
    }
}

/// One run's record in the campaign output.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub run_idx: u64,
    pub seed: u64,
    pub outcome: Outcome,
    pub schedule: Vec<FaultEvent>,
    pub resyncs: Vec<ResyncRecord>,
    pub result: RunResult,
}

/// Aggregated resynchronization statistics.
#[derive(Debug, Clone, Serialize, Deserialize, Default, PartialEq, Eq)]
pub struct ResyncSummary {
    pub count: u64,
    pub min_cycles: u64,
    pub max_cycles: u64,
    /// duration -> occurrences.
    pub histogram: BTreeMap<u64, u64>,
    pub budget_cycles: u64,
    pub over_budget: u64,
    /// Resyncs whose measured duration differed from the cost formula.
    pub formula_mismatches: u64,
}

/// The serialized campaign report.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct CampaignReport {
    pub schema_version: u32,
    pub program: String,
    pub seed: u64,
    pub n_runs: u64,
    pub single_fault: bool,
    pub outcomes: BTreeMap<String, u64>,
    pub resync: ResyncSummary,
    pub golden_cycles: u64,
    pub golden_instret: u64,
    pub golden_exit: Option<u32>,
    pub totals: CampaignTotals,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default, PartialEq, Eq)]
pub struct CampaignTotals {
    pub mismatches: u64,
    pub ecc_demand_corrected: u64,
    pub ecc_scrubbed: u64,
    pub ecc_detected_uncorrectable: u64,
    pub injected_faults: u64,
}

/// Campaign output: the serializable report plus per-run records for
/// deeper verification.
pub struct CampaignOutput {
    pub report: CampaignReport,
    pub records: Vec<RunRecord>,
    pub golden: GoldenRef,
}

fn fresh_soc(cfg: &SimConfig, mode: CoreMode, program: &[u32]) -> Soc {
    let mut run_cfg = cfg.clone();
    run_cfg.core_mode = mode;
    let mut soc = Soc::new(run_cfg);
    soc.load_words(program);
    soc
}

/// Execute the fault-free single-core reference run.
pub fn golden_run(cfg: &SimConfig, program: &[u32]) -> Result<(GoldenRef, RunResult), CampaignError> {
    let mut soc = fresh_soc(cfg, CoreMode::Single, program);
    let result = soc.run();
    if result.termination != Termination::Exited || result.exit_code != Some(0) {
        return Err(CampaignError::GoldenRunFailed(format!(
            "termination {:?}, exit {:?}",
            result.termination, result.exit_code
        )));
    }
    let golden = GoldenRef {
        mem_digest: result.mem_digest,
        exit_code: result.exit_code,
        cycles: result.cycles,
        instret: result.instret,
    };
    Ok((golden, result))
}

/// Classify one run against the golden reference.
///
/// Detection events and output equality drive the decision table; a
/// wrong output can never classify as silent when any detection event
/// exists.
pub fn classify_outcome(run: &RunResult, golden: &GoldenRef) -> Outcome {
    match run.termination {
        Termination::Timeout => Outcome::Timeout,
        Termination::Uncorrectable => Outcome::Uncorrectable,
        Termination::Exited => {
            if run.mem_uncorrectable > 0 {
                // The end-of-run integrity sweep stands in for the
                // scrubber eventually reaching the word: detected, not
                // silent.
                return Outcome::Uncorrectable;
            }
            let outputs_match =
                run.mem_digest == golden.mem_digest && run.exit_code == golden.exit_code;
            let c = &run.counters;
            let detected = c.mismatch_count > 0
                || c.ecc_demand_corrected > 0
                || c.ecc_scrubbed > 0
                || c.ecc_detected_uncorrectable > 0;
            if outputs_match {
                if c.resync_count > 0 {
                    Outcome::TclsRecovered
                } else if c.ecc_demand_corrected > 0 || c.ecc_scrubbed > 0 {
                    Outcome::EccCorrected
                } else {
                    Outcome::Masked
                }
            } else if detected {
                Outcome::Uncorrectable
            } else {
                // Soundness: a silent classification can never coincide
                // with a detection event.
                debug_assert!(!detected);
                Outcome::SilentCorruption
            }
        }
    }
}

/// Execute one fault run under lockstep.
pub fn fault_run(cfg: &SimConfig, program: &[u32], schedule: &[FaultEvent]) -> RunResult {
    let mut soc = fresh_soc(cfg, CoreMode::Tcls, program);
    soc.set_faults(schedule.to_vec());
    soc.run()
}

/// Run a full campaign.
pub fn run_campaign(
    cfg: &SimConfig,
    program_name: &str,
    program: &[u32],
    cc: &CampaignConfig,
) -> Result<CampaignOutput, CampaignError> {
    if cc.n_runs == 0 {
        return Err(CampaignError::Config("n_runs must be positive".into()));
    }
    if cc.mix.total() == 0 {
        return Err(CampaignError::EmptyTargets);
    }
    let (golden, _) = golden_run(cfg, program)?;
    // Land faults while the program is still running.
    let window = (golden.cycles / 20, golden.cycles.saturating_mul(4) / 5);

    let one_run = |run_idx: u64| -> Result<RunRecord, CampaignError> {
        let seed = run_seed(cc.seed, run_idx);
        let schedule =
            gen_schedule(seed, cc.n_faults, &cc.mix, window, cfg, cc.single_fault)?;
        let result = fault_run(cfg, program, &schedule);
        let outcome = classify_outcome(&result, &golden);
        Ok(RunRecord {
            run_idx,
            seed,
            outcome,
            schedule,
            resyncs: result.resyncs.clone(),
            result,
        })
    };

    let records: Result<Vec<RunRecord>, CampaignError> = if cc.parallel {
        (0..cc.n_runs).into_par_iter().map(one_run).collect()
    } else {
        (0..cc.n_runs).map(one_run).collect()
    };
    let records = records?;

    let mut outcomes: BTreeMap<String, u64> = BTreeMap::new();
    for o in [
        Outcome::Masked,
        Outcome::EccCorrected,
        Outcome::TclsRecovered,
        Outcome::Uncorrectable,
        Outcome::SilentCorruption,
        Outcome::Timeout,
    ] {
        outcomes.insert(o.name().to_string(), 0);
    }
    let mut resync = ResyncSummary {
        budget_cycles: RESYNC_BUDGET_CYCLES,
        min_cycles: u64::MAX,
        ..Default::default()
    };
    let mut totals = CampaignTotals::default();
    let formula = cfg.resync_cost();
    for r in &records {
        *outcomes.get_mut(r.outcome.name()).unwrap() += 1;
        for rs in &r.resyncs {
            resync.count += 1;
            resync.min_cycles = resync.min_cycles.min(rs.duration);
            resync.max_cycles = resync.max_cycles.max(rs.duration);
            *resync.histogram.entry(rs.duration).or_insert(0) += 1;
            if rs.duration > RESYNC_BUDGET_CYCLES {
                resync.over_budget += 1;
            }
            if rs.duration != formula {
                resync.formula_mismatches += 1;
            }
        }
        totals.mismatches += r.result.counters.mismatch_count;
        totals.ecc_demand_corrected += r.result.counters.ecc_demand_corrected;
        totals.ecc_scrubbed += r.result.counters.ecc_scrubbed;
        totals.ecc_detected_uncorrectable += r.result.counters.ecc_detected_uncorrectable;
        totals.injected_faults += r.schedule.len() as u64;
    }
    if resync.count == 0 {
        resync.min_cycles = 0;
    }
    debug_assert_eq!(outcomes.values().sum::<u64>(), cc.n_runs, "outcome counts sum to runs");

    let report = CampaignReport {
        schema_version: 1,
        program: program_name.to_string(),
        seed: cc.seed,
        n_runs: cc.n_runs,
        single_fault: cc.single_fault,
        outcomes,
        resync,
        golden_cycles: golden.cycles,
        golden_instret: golden.instret,
        golden_exit: golden.exit_code,
        totals,
    };
    Ok(CampaignOutput { report, records, golden })
}

/// Architectural state of the golden single-core run at exactly
/// `instret` retired instructions. Used to check restored states after
/// resynchronization.
pub fn golden_state_at(cfg: &SimConfig, program: &[u32], instret: u64) -> CoreState {
    let mut soc = fresh_soc(cfg, CoreMode::Single, program);
    soc.run_until_instret(instret);
    match &soc.cores {
        crate::soc::CoreComplex::Single(c) => (**c).clone(),
        crate::soc::CoreComplex::Tcls(_) => unreachable!("golden runs are single-core"),
    }
}
