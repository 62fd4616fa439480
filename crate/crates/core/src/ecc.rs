//! SEC-DED protected memory banks.
//!
//! Every 32-bit word is stored as a 39-bit extended Hamming codeword:
//! 32 data bits, 6 Hamming parity bits and one overall parity bit. The
//! code corrects any single bit flip and detects (without miscorrecting)
//! any double flip. Banks keep per-word codewords, correct on demand
//! reads, and expose a background scrub step that sweeps the bank and
//! rewrites corrected words so single-bit errors cannot accumulate into
//! uncorrectable doubles.
//!
//! Codeword bit layout (bit index == classic Hamming position):
//!
//! * bit 0              — overall (even) parity over all 39 bits
//! * bits 1,2,4,8,16,32 — Hamming parity p0..p5; pk covers every
//!   position whose index has bit k set
//! * remaining 32 positions, in increasing order — data bits d0..d31
//!
//! The layout is fixed so golden vectors stay stable across versions.

/// Total bits per codeword.
pub const CODEWORD_BITS: u32 = 39;

/// Mask selecting the 39 valid codeword bits.
pub const CODEWORD_MASK: u64 = (1 << CODEWORD_BITS) - 1;

const PARITY_POSITIONS: [u32; 6] = [1, 2, 4, 8, 16, 32];

/// Codeword positions holding data bits d0..d31, in order.
pub const DATA_POSITIONS: [u32; 32] = [
    3, 5, 6, 7, 9, 10, 11, 12, 13, 14, 15, 17, 18, 19, 20, 21, 22, 23, 24, 25, 26, 27, 28, 29,
    30, 31, 33, 34, 35, 36, 37, 38,
];

/// Result of decoding one codeword.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecodeStatus {
    /// No error detected.
    Ok,
    /// Exactly one bit was flipped and has been corrected; the payload is
    /// the codeword bit index (0..39) that was in error.
    Corrected(u8),
    /// Two (or more even-weight) flips detected; the data cannot be trusted.
    Uncorrectable,
}

impl DecodeStatus {
    pub fn is_ok(self) -> bool {
        self == DecodeStatus::Ok
    }

    pub fn is_uncorrectable(self) -> bool {
        self == DecodeStatus::Uncorrectable
    }
}

/// Encode a 32-bit word into a 39-bit SEC-DED codeword.
pub fn ecc_encode(word: u32) -> u64 {
    let mut cw: u64 = 0;
    for (i, &pos) in DATA_POSITIONS.iter().enumerate() {
        if word >> i & 1 == 1 {
            cw |= 1 << pos;
        }
    }
    for (k, &pos) in PARITY_POSITIONS.iter().enumerate() {
        let mut p = 0u64;
        for &dp in DATA_POSITIONS.iter() {
            if dp >> k & 1 == 1 {
                p ^= cw >> dp & 1;
            }
        }
        cw |= p << pos;
    }
    // Overall bit makes the weight of the full 39-bit word even.
    cw | (cw.count_ones() as u64 & 1)
}

/// Decode a codeword, correcting a single flip if present.
///
/// Returns the recovered data word together with the decode status. For
/// `Uncorrectable` the returned word is the raw data-bit extraction and
/// must not be trusted.
pub fn ecc_decode(cw: u64) -> (u32, DecodeStatus) {
    let cw = cw & CODEWORD_MASK;
    let mut syndrome: u32 = 0;
    for pos in 1..CODEWORD_BITS {
        if cw >> pos & 1 == 1 {
            syndrome ^= pos;
        }
    }
    let overall = (cw.count_ones() & 1) as u64;

    if syndrome == 0 && overall == 0 {
        return (extract_data(cw), DecodeStatus::Ok);
    }
    if overall == 1 {
        // Odd weight error: a single flip at position `syndrome`
        // (syndrome 0 means the overall parity bit itself flipped).
        if syndrome < CODEWORD_BITS {
            let fixed = cw ^ (1 << syndrome);
            return (extract_data(fixed), DecodeStatus::Corrected(syndrome as u8));
        }
        return (extract_data(cw), DecodeStatus::Uncorrectable);
    }
    // Even weight, nonzero syndrome: double error.
    (extract_data(cw), DecodeStatus::Uncorrectable)
}

fn extract_data(cw: u64) -> u32 {
    let mut word = 0u32;
    for (i, &pos) in DATA_POSITIONS.iter().enumerate() {
        if cw >> pos & 1 == 1 {
            word |= 1 << i;
        }
    }
    word
}

/// Return the corrected codeword for `cw` if it is clean or singly
/// flipped, without touching any counters. Used by pure (peek) reads.
fn corrected_codeword(cw: u64) -> Option<u64> {
    let (word, status) = ecc_decode(cw);
    match status {
        DecodeStatus::Ok | DecodeStatus::Corrected(_) => {
            let _ = word;
            Some(repair(cw))
        }
        DecodeStatus::Uncorrectable => None,
    }
}

fn repair(cw: u64) -> u64 {
    let (word, _) = ecc_decode(cw);
    ecc_encode(word)
}

/// Outcome of one background scrub step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScrubEvent {
    /// A single-bit error was found at the given address and rewritten.
    Corrected { addr: u32, bit: u8 },
    /// A multi-bit error was found; the word is left untouched.
    Uncorrectable { addr: u32 },
}

/// Summary of a full pure decode pass over a bank.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SweepReport {
    /// FNV-1a digest over the corrected data words (raw data bits for
    /// uncorrectable words).
    pub digest: u64,
    /// Words that decoded with a correctable single-bit error.
    pub correctable_words: u64,
    /// Words that decoded uncorrectable.
    pub uncorrectable_words: u64,
}

/// One word-addressable SEC-DED protected memory bank.
#[derive(Debug, Clone)]
pub struct MemoryBank {
    base: u32,
    words: Vec<u64>,
    scrub_ptr: usize,
    /// Single-bit errors corrected on demand accesses.
    pub corrected_count: u64,
    /// Uncorrectable errors seen on demand accesses or scrub steps.
    pub detected_uncorrectable_count: u64,
    /// Single-bit errors corrected by the scrubber.
    pub scrubbed_corrections: u64,
}

/// Error for accesses or injections outside the bank range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("address {addr:#010x} outside bank [{base:#010x}, {end:#010x})")]
pub struct OutOfRange {
    pub addr: u32,
    pub base: u32,
    pub end: u32,
}

impl MemoryBank {
    /// Create a zero-filled bank. `size_bytes` must be a positive
    /// multiple of 4.
    pub fn new(base: u32, size_bytes: u32) -> Self {
        assert!(size_bytes > 0 && size_bytes % 4 == 0, "bank size must be a multiple of 4");
        assert!(base.checked_add(size_bytes - 1).is_some(), "bank wraps the address space");
        MemoryBank {
            base,
            words: vec![ecc_encode(0); (size_bytes / 4) as usize],
            scrub_ptr: 0,
            corrected_count: 0,
            detected_uncorrectable_count: 0,
            scrubbed_corrections: 0,
        }
    }

    pub fn base(&self) -> u32 {
        self.base
    }

    pub fn size_bytes(&self) -> u32 {
        self.words.len() as u32 * 4
    }

    pub fn size_words(&self) -> usize {
        self.words.len()
    }

    pub fn contains(&self, addr: u32) -> bool {
        addr >= self.base && (addr - self.base) < self.size_bytes()
    }

    fn index(&self, addr: u32) -> Result<usize, OutOfRange> {
        if self.contains(addr) {
            Ok(((addr - self.base) / 4) as usize)
        } else {
            Err(OutOfRange { addr, base: self.base, end: self.base + self.size_bytes() })
        }
    }

    /// Demand read of the aligned word containing `addr`. A corrected
    /// read rewrites the clean codeword in place (inline scrubbing) and
    /// bumps `corrected_count`.
    pub fn read_word(&mut self, addr: u32) -> Result<(u32, DecodeStatus), OutOfRange> {
        let idx = self.index(addr)?;
        let (word, status) = ecc_decode(self.words[idx]);
        match status {
            DecodeStatus::Ok => {}
            DecodeStatus::Corrected(_) => {
                self.words[idx] = ecc_encode(word);
                self.corrected_count += 1;
            }
            DecodeStatus::Uncorrectable => {
                self.detected_uncorrectable_count += 1;
            }
        }
        Ok((word, status))
    }

    /// Side-effect-free read: decodes without rewriting or counting.
    pub fn peek_word(&self, addr: u32) -> Result<(u32, DecodeStatus), OutOfRange> {
        let idx = self.index(addr)?;
        Ok(ecc_decode(self.words[idx]))
    }

    /// Store a freshly encoded word at the aligned address.
    pub fn write_word(&mut self, addr: u32, word: u32) -> Result<(), OutOfRange> {
        let idx = self.index(addr)?;
        self.words[idx] = ecc_encode(word);
        Ok(())
    }

    /// Sub-word store: read-modify-write over the codeword. `width` is 1
    /// or 2 and `addr` must be width-aligned (the bus checks alignment).
    /// Returns the decode status of the read-out (uncorrectable means the
    /// merge used untrusted data and the caller should raise a bus error).
    pub fn write_subword(&mut self, addr: u32, width: u8, value: u32) -> Result<DecodeStatus, OutOfRange> {
        debug_assert!(width == 1 || width == 2);
        debug_assert_eq!(addr % width as u32, 0);
        let word_addr = addr & !3;
        let (old, status) = self.read_word(word_addr)?;
        if status.is_uncorrectable() {
            return Ok(status);
        }
        let shift = (addr & 3) * 8;
        let mask = if width == 1 { 0xFFu32 } else { 0xFFFFu32 } << shift;
        let merged = (old & !mask) | ((value << shift) & mask);
        self.write_word(word_addr, merged)?;
        Ok(status)
    }

    /// One background scrub step: decode the word under the scrub
    /// pointer, rewrite it if a single-bit error is found, and advance
    /// the pointer cyclically.
    pub fn scrub_step(&mut self) -> Option<ScrubEvent> {
        if self.words.is_empty() {
            return None;
        }
        let idx = self.scrub_ptr;
        let addr = self.base + idx as u32 * 4;
        self.scrub_ptr = (self.scrub_ptr + 1) % self.words.len();
        let (word, status) = ecc_decode(self.words[idx]);
        match status {
            DecodeStatus::Ok => None,
            DecodeStatus::Corrected(bit) => {
                self.words[idx] = ecc_encode(word);
                self.scrubbed_corrections += 1;
                Some(ScrubEvent::Corrected { addr, bit })
            }
            DecodeStatus::Uncorrectable => {
                self.detected_uncorrectable_count += 1;
                Some(ScrubEvent::Uncorrectable { addr })
            }
        }
    }

    /// Word index the next scrub step will visit.
    pub fn scrub_ptr(&self) -> usize {
        self.scrub_ptr
    }

    /// Toggle exactly one stored codeword bit. Counters are untouched
    /// until the word is next decoded.
    pub fn inject_bit_flip(&mut self, addr: u32, bit_index: u8) -> Result<(), OutOfRange> {
        assert!((bit_index as u32) < CODEWORD_BITS, "bit index out of codeword range");
        let idx = self.index(addr & !3)?;
        self.words[idx] ^= 1 << bit_index;
        Ok(())
    }

    /// Raw codeword access for tests and golden-vector dumps.
    pub fn raw_codeword(&self, addr: u32) -> Result<u64, OutOfRange> {
        Ok(self.words[self.index(addr)?])
    }

    /// Pure decode pass over the whole bank: digest of the corrected
    /// data image plus residual error counts. Does not modify the bank.
    pub fn sweep(&self) -> SweepReport {
        self.sweep_excluding(None)
    }

    /// Sweep skipping one `(base, size_bytes)` window from the digest
    /// (architectural scratch such as the recovery save region). Error
    /// counts still cover the whole bank.
    pub fn sweep_excluding(&self, skip: Option<(u32, u32)>) -> SweepReport {
        let mut report = SweepReport { digest: 0xcbf2_9ce4_8422_2325, ..Default::default() };
        for (idx, &cw) in self.words.iter().enumerate() {
            let (word, status) = ecc_decode(cw);
            match status {
                DecodeStatus::Ok => {}
                DecodeStatus::Corrected(_) => report.correctable_words += 1,
                DecodeStatus::Uncorrectable => report.uncorrectable_words += 1,
            }
            let addr = self.base + idx as u32 * 4;
            if let Some((skip_base, skip_len)) = skip {
                if addr >= skip_base && addr < skip_base.saturating_add(skip_len) {
                    continue;
                }
            }
            for byte in word.to_le_bytes() {
                report.digest ^= byte as u64;
                report.digest = report.digest.wrapping_mul(0x0000_0100_0000_01B3);
            }
        }
        report
    }

    /// Reset error counters (used between campaign runs on a shared bank).
    pub fn clear_counters(&mut self) {
        self.corrected_count = 0;
        self.detected_uncorrectable_count = 0;
        self.scrubbed_corrections = 0;
    }
}

/// Clean (peek) correction helper exposed for the voter's restore path.
pub fn peek_corrected(cw: u64) -> Option<u64> {
    corrected_codeword(cw)
}
