//! Command-line front end for the dependable co-processor simulator.
//!
//! Exit codes: 0 = guest success, 1 = guest nonzero exit, 2 =
//! usage/config error, 3 = timeout, 4 = uncorrectable-fault termination.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use sentrysim_core::campaign::{self, CampaignConfig, TargetMix};
use sentrysim_core::config::{CoreMode, SimConfig};
use sentrysim_core::dma::{DmaJob, DmaSchedule};
use sentrysim_core::ecc::{ecc_decode, ecc_encode, DecodeStatus};
use sentrysim_core::firmware;
use sentrysim_core::loader::{self, ImageFormat};
use sentrysim_core::soc::{Soc, Termination};

const EXIT_OK: u8 = 0;
const EXIT_GUEST_NONZERO: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_TIMEOUT: u8 = 3;
const EXIT_UNCORRECTABLE: u8 = 4;

#[derive(Parser)]
#[command(name = "sentrysim", about = "Deterministic simulator of a triple-core lockstep RV32 co-processor with ECC memory, CLIC interrupts and a real-time DMA engine", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonFlags {
    /// TOML configuration file (defaults apply for missing keys).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed override (falls back to SENTRYSIM_SEED, then the config).
    #[arg(long)]
    seed: Option<u64>,
    /// Stop the simulation after this many cycles.
    #[arg(long)]
    max_cycles: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run a guest image to completion and print a run summary.
    Run {
        #[command(flatten)]
        common: CommonFlags,
        /// Image path, or `builtin:<name>` for a built-in program.
        #[arg(long)]
        image: String,
        /// Image format (flat binaries load at the instruction bank).
        #[arg(long, default_value = "auto")]
        format: String,
        /// Write an execution trace to this file.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Run a single hart instead of the lockstep triple.
        #[arg(long)]
        single_core: bool,
    },
    /// Run a fault-injection campaign and emit a JSON report.
    Campaign {
        #[command(flatten)]
        common: CommonFlags,
        /// Program path or `builtin:<name>` (overrides the config file).
        #[arg(long)]
        program: Option<String>,
        /// Number of fault runs (default 100).
        #[arg(long)]
        runs: Option<u64>,
        /// Fault targets: core, mem or both (default both).
        #[arg(long)]
        targets: Option<String>,
        /// Faults per run (clamped to 1 in single-fault mode).
        #[arg(long)]
        faults: Option<u32>,
        /// Allow multiple faults per run (disables the single-transient
        /// model).
        #[arg(long)]
        multi_fault: bool,
        /// Disable parallel execution of the runs.
        #[arg(long)]
        serial: bool,
        /// Write the JSON report here (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Measure interrupt entry latency and context-switch round trips.
    IrqBench {
        #[command(flatten)]
        common: CommonFlags,
        /// Override the memory latency the cost model charges.
        #[arg(long)]
        mem_latency: Option<u32>,
        /// Emit the report as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Exercise a periodic 3-D DMA schedule and print the timing table.
    DmaDemo {
        #[command(flatten)]
        common: CommonFlags,
    },
    /// Exhaustive SEC-DED self-test over sampled words.
    EccSelftest {
        /// Number of random data words to sample.
        #[arg(long, default_value_t = 256)]
        words: u32,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}

fn env_seed() -> Option<u64> {
    std::env::var("SENTRYSIM_SEED").ok().and_then(|s| s.parse().ok())
}

fn load_config(common: &CommonFlags) -> Result<SimConfig> {
    let mut cfg = match &common.config {
        Some(path) => SimConfig::from_toml_file(path)
            .with_context(|| format!("loading {}", path.display()))?,
        None => SimConfig::default(),
    };
    if let Some(seed) = common.seed.or_else(env_seed) {
        cfg.seed = seed;
    }
    if let Some(mc) = common.max_cycles {
        cfg.max_cycles = mc;
    }
    cfg.validate().map_err(|e| anyhow!("{e}"))?;
    Ok(cfg)
}

/// Resolve `builtin:<name>` or an on-disk image into a loaded SoC.
fn load_program(soc: &mut Soc, source: &str, format: &str) -> Result<()> {
    if let Some(name) = source.strip_prefix("builtin:") {
        let program = firmware::by_name(&soc.cfg.clone(), name)
            .ok_or_else(|| anyhow!("unknown built-in program `{name}`"))?;
        soc.load_words(&program.words);
        return Ok(());
    }
    let fmt = match format {
        "flat" => ImageFormat::Flat,
        "elf" => ImageFormat::Elf,
        "auto" => ImageFormat::Auto,
        other => bail!("unknown image format `{other}`"),
    };
    loader::load_image(soc, std::path::Path::new(source), fmt)
        .with_context(|| format!("loading {source}"))?;
    Ok(())
}

fn dispatch(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Run { common, image, format, trace, single_core } => {
            let mut cfg = load_config(&common)?;
            if single_core {
                cfg.core_mode = CoreMode::Single;
            }
            let mut soc = Soc::new(cfg);
            load_program(&mut soc, &image, &format)?;
            if let Some(path) = trace {
                let f = std::fs::File::create(&path)
                    .with_context(|| format!("creating {}", path.display()))?;
                soc.set_trace(Box::new(std::io::BufWriter::new(f)));
            }
            let result = soc.run();
            print_run_summary(&result);
            Ok(match result.termination {
                Termination::Exited if result.exit_code == Some(0) => EXIT_OK,
                Termination::Exited => EXIT_GUEST_NONZERO,
                Termination::Timeout => EXIT_TIMEOUT,
                Termination::Uncorrectable => EXIT_UNCORRECTABLE,
            })
        }

        Command::Campaign {
            common,
            program,
            runs,
            targets,
            faults,
            multi_fault,
            serial,
            out,
        } => {
            let cfg = load_config(&common)?;
            // Precedence: flags > config-file [campaign] section > defaults.
            let mut cc = CampaignConfig { seed: cfg.seed, parallel: !serial, ..Default::default() };
            let mut file_program = None;
            if let Some(path) = &common.config {
                let section =
                    campaign::load_campaign_section(path).map_err(|e| anyhow!("{e}"))?;
                file_program = section.program.clone();
                section.apply(&mut cc).map_err(|e| anyhow!("{e}"))?;
            }
            if let Some(seed) = common.seed.or_else(env_seed) {
                cc.seed = seed;
            }
            if let Some(n) = runs {
                cc.n_runs = n;
            }
            if let Some(t) = &targets {
                cc.mix = match t.as_str() {
                    "core" => TargetMix::core_only(),
                    "mem" => TargetMix::mem_only(),
                    "both" => TargetMix::default(),
                    other => bail!("unknown target set `{other}` (use core, mem or both)"),
                };
            }
            if let Some(f) = faults {
                cc.n_faults = f;
            }
            if multi_fault {
                cc.single_fault = false;
            }
            let program = program
                .or(file_program)
                .ok_or_else(|| anyhow!("no program given (flag --program or config file)"))?;
            let words = resolve_program_words(&cfg, &program)?;
            let output = campaign::run_campaign(&cfg, &program, &words, &cc)
                .map_err(|e| anyhow!("{e}"))?;
            let json = serde_json::to_string_pretty(&output.report)?;
            match out {
                Some(path) => {
                    std::fs::write(&path, json.as_bytes())
                        .with_context(|| format!("writing {}", path.display()))?;
                }
                None => println!("{json}"),
            }
            print_campaign_summary(&output.report);
            Ok(EXIT_OK)
        }

        Command::IrqBench { common, mem_latency, json } => {
            let mut cfg = load_config(&common)?;
            if let Some(ml) = mem_latency {
                cfg.timing.mem_latency = ml;
            }
            irq_bench(&cfg, json)
        }

        Command::DmaDemo { common } => {
            let cfg = load_config(&common)?;
            dma_demo(&cfg)
        }

        Command::EccSelftest { words, seed } => {
            let seed = seed.or_else(env_seed).unwrap_or(1);
            ecc_selftest(words, seed)
        }
    }
}

fn resolve_program_words(cfg: &SimConfig, source: &str) -> Result<Vec<u32>> {
    if let Some(name) = source.strip_prefix("builtin:") {
        let program =
            firmware::by_name(cfg, name).ok_or_else(|| anyhow!("unknown built-in `{name}`"))?;
        return Ok(program.words);
    }
    let bytes = std::fs::read(source).with_context(|| format!("reading {source}"))?;
    if bytes.len() % 4 != 0 {
        bail!("flat campaign images must be whole words");
    }
    Ok(bytes.chunks_exact(4).map(|c| u32::from_le_bytes(c.try_into().unwrap())).collect())
}

fn print_run_summary(result: &sentrysim_core::RunResult) {
    let status = match result.termination {
        Termination::Exited => "exited",
        Termination::Timeout => "timeout",
        Termination::Uncorrectable => "uncorrectable-fault",
    };
    println!("status:            {status}");
    if let Some(code) = result.exit_code {
        println!("guest exit code:   {code}");
    }
    println!("cycles:            {}", result.cycles);
    println!("instret:           {}", result.instret);
    let c = &result.counters;
    println!("vote mismatches:   {}", c.mismatch_count);
    println!("resyncs:           {}", c.resync_count);
    println!("ecc corrected:     {} demand, {} scrubbed", c.ecc_demand_corrected, c.ecc_scrubbed);
    println!("ecc uncorrectable: {}", c.ecc_detected_uncorrectable);
    println!("irq entries:       {}", c.irq_entries);
    println!("dma:               {} completed, {} overruns", c.dma_completed, c.dma_overruns);
}

fn print_campaign_summary(report: &campaign::CampaignReport) {
    eprintln!("campaign `{}`: {} runs, seed {}", report.program, report.n_runs, report.seed);
    for (name, count) in &report.outcomes {
        eprintln!("  {name:<18} {count}");
    }
    if report.resync.count > 0 {
        eprintln!(
            "  resyncs: {} (duration {}..{} cycles, budget {}, over-budget {})",
            report.resync.count,
            report.resync.min_cycles,
            report.resync.max_cycles,
            report.resync.budget_cycles,
            report.resync.over_budget
        );
    }
}

fn irq_bench(cfg: &SimConfig, json: bool) -> Result<u8> {
    let program = firmware::irq_bench(cfg);
    let mut soc = Soc::new(cfg.clone());
    soc.load_words(&program.words);
    let result = soc.run();
    if result.termination != Termination::Exited || result.exit_code != Some(0) {
        bail!("bench firmware did not complete: {:?}", result.termination);
    }

    let banked = result
        .irq_records
        .iter()
        .find(|r| r.banked)
        .ok_or_else(|| anyhow!("no banked interrupt was recorded"))?;
    let spilled = result
        .irq_records
        .iter()
        .find(|r| !r.banked)
        .ok_or_else(|| anyhow!("no spilled interrupt was recorded"))?;
    let banked_latency = banked.first_insn_cycle.unwrap() - banked.pend_cycle;
    let banked_round = banked.entry_cost + banked.exit_cost.unwrap();
    let spilled_round = spilled.entry_cost + spilled.exit_cost.unwrap();
    let worst = banked_round.max(spilled_round);

    if json {
        let report = serde_json::json!({
            "schema_version": 1,
            "mem_latency": cfg.timing.mem_latency,
            "banked": {
                "pend_to_first_insn_cycles": banked_latency,
                "entry_cost": banked.entry_cost,
                "exit_cost": banked.exit_cost,
                "round_trip": banked_round,
            },
            "spilled": {
                "entry_cost": spilled.entry_cost,
                "exit_cost": spilled.exit_cost,
                "round_trip": spilled_round,
            },
            "worst_context_switch": worst,
            "target_entry_cycles": 6,
            "target_context_switch_below": 110,
        });
        println!("{}", serde_json::to_string_pretty(&report)?);
    } else {
        println!("interrupt latency bench (mem_latency={})", cfg.timing.mem_latency);
        println!("  banked entry latency:   {banked_latency} cycles (pend to first handler instruction)");
        println!("  banked entry/exit:      {}/{} cycles", banked.entry_cost, banked.exit_cost.unwrap());
        println!("  spilled entry/exit:     {}/{} cycles", spilled.entry_cost, spilled.exit_cost.unwrap());
        println!("  spilled round trip:     {spilled_round} cycles");
        println!("  worst context switch:   {worst} cycles (target < 110)");
    }
    Ok(EXIT_OK)
}

fn dma_demo(cfg: &SimConfig) -> Result<u8> {
    const LAUNCHES: u64 = 4;
    const PERIOD: u64 = 2000;
    const START: u64 = 1000;

    let mut soc = Soc::new(cfg.clone());
    // "Sensor" source data in the data bank; destination ring below it.
    let src = cfg.data_base + 0x1000;
    let dst = cfg.data_base + 0x2000;
    for i in 0..32u32 {
        soc.poke_bytes(src + i * 4, &(0xA000_0000u32 + i).to_le_bytes())
            .map_err(|_| anyhow!("demo source outside the data bank"))?;
    }
    let job = DmaJob {
        src_base: src,
        dst_base: dst,
        inner_len: 16,
        reps1: 4,
        reps2: 2,
        src_stride1: 16,
        src_stride2: 64,
        dst_stride1: 16,
        dst_stride2: 64,
        completion_line: Some(9),
    };
    soc.bus.dma.schedules.push(DmaSchedule::new(job, START, PERIOD, LAUNCHES));

    let poll = firmware::dma_poll(cfg, LAUNCHES as u32);
    soc.load_words(&poll.words);
    let result = soc.run();
    if result.termination != Termination::Exited {
        bail!("demo did not complete: {:?}", result.termination);
    }

    println!("periodic 3-D DMA schedule: start={START} period={PERIOD} count={LAUNCHES}");
    println!("job: {} bytes per launch ({}x{}x{} segments)", job.total_bytes(), job.reps2, job.reps1, job.inner_len);
    println!("{:>8} {:>12} {:>12}", "launch", "at cycle", "completed");
    for (k, launch) in result.dma_launches.iter().enumerate() {
        let completed = result
            .dma_completions_at
            .get(k)
            .map(|c| c.to_string())
            .unwrap_or_else(|| "-".into());
        println!("{:>8} {:>12} {:>12}", k, launch.cycle, completed);
        let expect = START + k as u64 * PERIOD;
        if launch.cycle != expect {
            bail!("launch {k} at {} but the schedule says {expect}", launch.cycle);
        }
    }
    println!("completions: {}, overruns: {}", result.counters.dma_completed, result.counters.dma_overruns);
    Ok(EXIT_OK)
}

fn ecc_selftest(words: u32, seed: u64) -> Result<u8> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut singles_ok = 0u64;
    let mut singles = 0u64;
    let mut doubles_ok = 0u64;
    let mut doubles = 0u64;
    for _ in 0..words {
        let w: u32 = rng.gen();
        let cw = ecc_encode(w);
        for i in 0..39u32 {
            singles += 1;
            if ecc_decode(cw ^ (1 << i)) == (w, DecodeStatus::Corrected(i as u8)) {
                singles_ok += 1;
            }
        }
        for i in 0..39u32 {
            for j in (i + 1)..39 {
                doubles += 1;
                let (_, status) = ecc_decode(cw ^ (1 << i) ^ (1 << j));
                if status == DecodeStatus::Uncorrectable {
                    doubles_ok += 1;
                }
            }
        }
    }
    let pass = singles_ok == singles && doubles_ok == doubles;
    println!(
        "ecc-selftest: {words} words sampled; {singles_ok}/{singles} single-flip corrected; {doubles_ok}/{doubles} double-flip detected; {}",
        if pass { "PASS" } else { "FAIL" }
    );
    let _ = std::io::stdout().flush();
    Ok(if pass { EXIT_OK } else { EXIT_GUEST_NONZERO })
}
