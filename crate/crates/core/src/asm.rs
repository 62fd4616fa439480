//! Tiny RV32IM instruction encoder and program builder.
//!
//! The simulator ships its benchmark and campaign firmware as built-in
//! programs, so a minimal assembler keeps those programs readable
//! without requiring a cross toolchain. Encoders are straight
//! transcriptions of the base ISA formats; the `Asm` builder adds labels
//! with branch/jump fixups.

#![allow(clippy::too_many_arguments)]

fn enc_r(funct7: u32, rs2: u8, rs1: u8, funct3: u32, rd: u8) -> u32 {
    (funct7 << 25)
        | ((rs2 as u32) << 20)
        | ((rs1 as u32) << 15)
        | (funct3 << 12)
        | ((rd as u32) << 7)
        | 0b0110011
}

fn enc_i(opcode: u32, funct3: u32, rd: u8, rs1: u8, imm: i32) -> u32 {
    debug_assert!((-2048..=2047).contains(&imm), "I-imm {imm} out of range");
    ((imm as u32 & 0xFFF) << 20) | ((rs1 as u32) << 15) | (funct3 << 12) | ((rd as u32) << 7) | opcode
}

fn enc_s(funct3: u32, rs2: u8, rs1: u8, imm: i32) -> u32 {
    debug_assert!((-2048..=2047).contains(&imm), "S-imm {imm} out of range");
    let imm = imm as u32;
    ((imm >> 5 & 0x7F) << 25)
        | ((rs2 as u32) << 20)
        | ((rs1 as u32) << 15)
        | (funct3 << 12)
        | ((imm & 0x1F) << 7)
        | 0b0100011
}

fn enc_b(funct3: u32, rs1: u8, rs2: u8, offset: i32) -> u32 {
    debug_assert!(offset % 2 == 0 && (-4096..=4094).contains(&offset), "B-offset {offset}");
    let imm = offset as u32;
    ((imm >> 12 & 1) << 31)
        | ((imm >> 5 & 0x3F) << 25)
        | ((rs2 as u32) << 20)
        | ((rs1 as u32) << 15)
        | (funct3 << 12)
        | ((imm >> 1 & 0xF) << 8)
        | ((imm >> 11 & 1) << 7)
        | 0b1100011
}

fn enc_u(opcode: u32, rd: u8, imm20: u32) -> u32 {
    debug_assert!(imm20 < (1 << 20));
    (imm20 << 12) | ((rd as u32) << 7) | opcode
}

fn enc_j(rd: u8, offset: i32) -> u32 {
    debug_assert!(offset % 2 == 0 && (-(1 << 20)..(1 << 20)).contains(&offset), "J-offset {offset}");
    let imm = offset as u32;
    ((imm >> 20 & 1) << 31)
        | ((imm >> 1 & 0x3FF) << 21)
        | ((imm >> 11 & 1) << 20)
        | ((imm >> 12 & 0xFF) << 12)
        | ((rd as u32) << 7)
        | 0b1101111
}

// R-type
pub fn add(rd: u8, rs1: u8, rs2: u8) -> u32 { enc_r(0, rs2, rs1, 0b000, rd) }
pub fn sub(rd: u8, rs1: u8, rs2: u8) -> u32 { enc_r(0b0100000, rs2, rs1, 0b000, rd) }
pub fn sll(rd: u8, rs1: u8, rs2: u8) -> u32 { enc_r(0, rs2, rs1, 0b001, rd) }
pub fn slt(rd: u8, rs1: u8, rs2: u8) -> u32 { enc_r(0, rs2, rs1, 0b010, rd) }
pub fn sltu(rd: u8, rs1: u8, rs2: u8) -> u32 { enc_r(0, rs2, rs1, 0b011, rd) }
pub fn xor(rd: u8, rs1: u8, rs2: u8) -> u32 { enc_r(0, rs2, rs1, 0b100, rd) }
pub fn srl(rd: u8, rs1: u8, rs2: u8) -> u32 { enc_r(0, rs2, rs1, 0b101, rd) }
pub fn sra(rd: u8, rs1: u8, rs2: u8) -> u32 { enc_r(0b0100000, rs2, rs1, 0b101, rd) }
pub fn or(rd: u8, rs1: u8, rs2: u8) -> u32 { enc_r(0, rs2, rs1, 0b110, rd) }
pub fn and(rd: u8, rs1: u8, rs2: u8) -> u32 { enc_r(0, rs2, rs1, 0b111, rd) }
pub fn mul(rd: u8, rs1: u8, rs2: u8) -> u32 { enc_r(1, rs2, rs1, 0b000, rd) }
pub fn mulh(rd: u8, rs1: u8, rs2: u8) -> u32 { enc_r(1, rs2, rs1, 0b001, rd) }
pub fn mulhsu(rd: u8, rs1: u8, rs2: u8) -> u32 { enc_r(1, rs2, rs1, 0b010, rd) }
pub fn mulhu(rd: u8, rs1: u8, rs2: u8) -> u32 { enc_r(1, rs2, rs1, 0b011, rd) }
pub fn div(rd: u8, rs1: u8, rs2: u8) -> u32 { enc_r(1, rs2, rs1, 0b100, rd) }
pub fn divu(rd: u8, rs1: u8, rs2: u8) -> u32 { enc_r(1, rs2, rs1, 0b101, rd) }
pub fn rem(rd: u8, rs1: u8, rs2: u8) -> u32 { enc_r(1, rs2, rs1, 0b110, rd) }
pub fn remu(rd: u8, rs1: u8, rs2: u8) -> u32 { enc_r(1, rs2, rs1, 0b111, rd) }

// I-type
pub fn addi(rd: u8, rs1: u8, imm: i32) -> u32 { enc_i(0b0010011, 0b000, rd, rs1, imm) }
pub fn slti(rd: u8, rs1: u8, imm: i32) -> u32 { enc_i(0b0010011, 0b010, rd, rs1, imm) }
pub fn sltiu(rd: u8, rs1: u8, imm: i32) -> u32 { enc_i(0b0010011, 0b011, rd, rs1, imm) }
pub fn xori(rd: u8, rs1: u8, imm: i32) -> u32 { enc_i(0b0010011, 0b100, rd, rs1, imm) }
pub fn ori(rd: u8, rs1: u8, imm: i32) -> u32 { enc_i(0b0010011, 0b110, rd, rs1, imm) }
pub fn andi(rd: u8, rs1: u8, imm: i32) -> u32 { enc_i(0b0010011, 0b111, rd, rs1, imm) }
pub fn slli(rd: u8, rs1: u8, shamt: u8) -> u32 { enc_i(0b0010011, 0b001, rd, rs1, shamt as i32) }
pub fn srli(rd: u8, rs1: u8, shamt: u8) -> u32 { enc_i(0b0010011, 0b101, rd, rs1, shamt as i32) }
pub fn srai(rd: u8, rs1: u8, shamt: u8) -> u32 {
    enc_i(0b0010011, 0b101, rd, rs1, shamt as i32) | (0b0100000 << 25)
}
pub fn lb(rd: u8, rs1: u8, imm: i32) -> u32 { enc_i(0b0000011, 0b000, rd, rs1, imm) }
pub fn lh(rd: u8, rs1: u8, imm: i32) -> u32 { enc_i(0b0000011, 0b001, rd, rs1, imm) }
pub fn lw(rd: u8, rs1: u8, imm: i32) -> u32 { enc_i(0b0000011, 0b010, rd, rs1, imm) }
pub fn lbu(rd: u8, rs1: u8, imm: i32) -> u32 { enc_i(0b0000011, 0b100, rd, rs1, imm) }
pub fn lhu(rd: u8, rs1: u8, imm: i32) -> u32 { enc_i(0b0000011, 0b101, rd, rs1, imm) }
pub fn jalr(rd: u8, rs1: u8, imm: i32) -> u32 { enc_i(0b1100111, 0b000, rd, rs1, imm) }

// S-type
pub fn sb(rs2: u8, rs1: u8, imm: i32) -> u32 { enc_s(0b000, rs2, rs1, imm) }
pub fn sh(rs2: u8, rs1: u8, imm: i32) -> u32 { enc_s(0b001, rs2, rs1, imm) }
pub fn sw(rs2: u8, rs1: u8, imm: i32) -> u32 { enc_s(0b010, rs2, rs1, imm) }

// U/J-type
pub fn lui(rd: u8, imm20: u32) -> u32 { enc_u(0b0110111, rd, imm20) }
pub fn auipc(rd: u8, imm20: u32) -> u32 { enc_u(0b0010111, rd, imm20) }
pub fn jal(rd: u8, offset: i32) -> u32 { enc_j(rd, offset) }

// Branches (raw offsets; prefer the `Asm` builder with labels)
pub fn beq(rs1: u8, rs2: u8, off: i32) -> u32 { enc_b(0b000, rs1, rs2, off) }
pub fn bne(rs1: u8, rs2: u8, off: i32) -> u32 { enc_b(0b001, rs1, rs2, off) }
pub fn blt(rs1: u8, rs2: u8, off: i32) -> u32 { enc_b(0b100, rs1, rs2, off) }
pub fn bge(rs1: u8, rs2: u8, off: i32) -> u32 { enc_b(0b101, rs1, rs2, off) }
pub fn bltu(rs1: u8, rs2: u8, off: i32) -> u32 { enc_b(0b110, rs1, rs2, off) }
pub fn bgeu(rs1: u8, rs2: u8, off: i32) -> u32 { enc_b(0b111, rs1, rs2, off) }

// System
pub fn ecall() -> u32 { 0x0000_0073 }
pub fn ebreak() -> u32 { 0x0010_0073 }
pub fn mret() -> u32 { 0x3020_0073 }
pub fn wfi() -> u32 { 0x1050_0073 }
pub fn fence() -> u32 { 0x0000_000F }
pub fn nop() -> u32 { addi(0, 0, 0) }

pub fn csrrw(rd: u8, csr: u16, rs1: u8) -> u32 { enc_csr(0b001, rd, csr, rs1 as u32) }
pub fn csrrs(rd: u8, csr: u16, rs1: u8) -> u32 { enc_csr(0b010, rd, csr, rs1 as u32) }
pub fn csrrc(rd: u8, csr: u16, rs1: u8) -> u32 { enc_csr(0b011, rd, csr, rs1 as u32) }
pub fn csrrwi(rd: u8, csr: u16, zimm: u8) -> u32 { enc_csr(0b101, rd, csr, zimm as u32) }
pub fn csrrsi(rd: u8, csr: u16, zimm: u8) -> u32 { enc_csr(0b110, rd, csr, zimm as u32) }
pub fn csrrci(rd: u8, csr: u16, zimm: u8) -> u32 { enc_csr(0b111, rd, csr, zimm as u32) }

fn enc_csr(funct3: u32, rd: u8, csr: u16, src: u32) -> u32 {
    debug_assert!(csr < 0x1000 && src < 32);
    ((csr as u32) << 20) | (src << 15) | (funct3 << 12) | ((rd as u32) << 7) | 0b1110011
}

/// `lui`/`addi` pair materializing an arbitrary 32-bit constant.
/// Returns one instruction when the value fits an I-immediate.
pub fn li(rd: u8, value: u32) -> Vec<u32> {
    let v = value as i32;
    if (-2048..=2047).contains(&v) {
        return vec![addi(rd, 0, v)];
    }
    let hi = value.wrapping_add(0x800) >> 12;
    let lo = (value.wrapping_sub(hi << 12)) as i32;
    if lo == 0 {
        vec![lui(rd, hi & 0xFFFFF)]
    } else {
        vec![lui(rd, hi & 0xFFFFF), addi(rd, rd, lo)]
    }
}

/// Pending label reference kinds.
#[derive(Debug, Clone, Copy)]
enum Fixup {
    Branch { funct3: u32, rs1: u8, rs2: u8 },
    Jal { rd: u8 },
}

/// Label handle issued by [`Asm::new_label`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Label(usize);

/// Label-aware program builder emitting a flat word image.
pub struct Asm {
    base: u32,
    words: Vec<u32>,
    labels: Vec<Option<u32>>,
    fixups: Vec<(usize, Label, Fixup)>,
}

impl Asm {
    pub fn new(base: u32) -> Self {
        Asm { base, words: Vec::new(), labels: Vec::new(), fixups: Vec::new() }
    }

    /// Address of the next emitted instruction.
    pub fn here(&self) -> u32 {
        self.base + self.words.len() as u32 * 4
    }

    pub fn new_label(&mut self) -> Label {
        self.labels.push(None);
        Label(self.labels.len() - 1)
    }

    pub fn bind(&mut self, l: Label) {
        assert!(self.labels[l.0].is_none(), "label bound twice");
        self.labels[l.0] = Some(self.here());
    }

    /// Create and bind a label at the current position.
    pub fn label_here(&mut self) -> Label {
        let l = self.new_label();
        self.bind(l);
        l
    }

    pub fn emit(&mut self, word: u32) -> &mut Self {
        self.words.push(word);
        self
    }

    pub fn emit_all(&mut self, words: impl IntoIterator<Item = u32>) -> &mut Self {
        self.words.extend(words);
        self
    }

    pub fn li(&mut self, rd: u8, value: u32) -> &mut Self {
        self.emit_all(li(rd, value))
    }

    fn branch_to(&mut self, funct3: u32, rs1: u8, rs2: u8, l: Label) -> &mut Self {
        self.fixups.push((self.words.len(), l, Fixup::Branch { funct3, rs1, rs2 }));
        self.words.push(0);
        self
    }

    pub fn beq_to(&mut self, rs1: u8, rs2: u8, l: Label) -> &mut Self { self.branch_to(0b000, rs1, rs2, l) }
    pub fn bne_to(&mut self, rs1: u8, rs2: u8, l: Label) -> &mut Self { self.branch_to(0b001, rs1, rs2, l) }
    pub fn blt_to(&mut self, rs1: u8, rs2: u8, l: Label) -> &mut Self { self.branch_to(0b100, rs1, rs2, l) }
    pub fn bge_to(&mut self, rs1: u8, rs2: u8, l: Label) -> &mut Self { self.branch_to(0b101, rs1, rs2, l) }
    pub fn bltu_to(&mut self, rs1: u8, rs2: u8, l: Label) -> &mut Self { self.branch_to(0b110, rs1, rs2, l) }
    pub fn bgeu_to(&mut self, rs1: u8, rs2: u8, l: Label) -> &mut Self { self.branch_to(0b111, rs1, rs2, l) }

    pub fn jal_to(&mut self, rd: u8, l: Label) -> &mut Self {
        self.fixups.push((self.words.len(), l, Fixup::Jal { rd }));
        self.words.push(0);
        self
    }

    /// Resolve all fixups and return the finished word image.
    pub fn finish(mut self) -> Vec<u32> {
        for (idx, label, fix) in self.fixups.drain(..) {
            let target = self.labels[label.0].expect("unbound label");
            let at = self.base + idx as u32 * 4;
            let off = target.wrapping_sub(at) as i32;
            self.words[idx] = match fix {
                Fixup::Branch { funct3, rs1, rs2 } => enc_b(funct3, rs1, rs2, off),
                Fixup::Jal { rd } => enc_j(rd, off),
            };
        }
        self.words
    }
}

/// ABI register indices used by the built-in firmware.
pub mod reg {
    pub const ZERO: u8 = 0;
    pub const RA: u8 = 1;
    pub const SP: u8 = 2;
    pub const T0: u8 = 5;
    pub const T1: u8 = 6;
    pub const T2: u8 = 7;
    pub const S0: u8 = 8;
    pub const S1: u8 = 9;
    pub const A0: u8 = 10;
    pub const A1: u8 = 11;
    pub const A2: u8 = 12;
    pub const A3: u8 = 13;
    pub const A4: u8 = 14;
    pub const A5: u8 = 15;
    pub const A6: u8 = 16;
    pub const A7: u8 = 17;
    pub const S2: u8 = 18;
    pub const S3: u8 = 19;
    pub const T3: u8 = 28;
    pub const T4: u8 = 29;
    pub const T5: u8 = 30;
    pub const T6: u8 = 31;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::isa::{decode, disasm, InstrKind};

    #[test]
    fn encoders_round_trip_through_decode() {
        let cases = vec![
            (addi(1, 0, 5), "addi ra, zero, 5"),
            (addi(0, 0, 0), "addi zero, zero, 0"),
            (sw(5, 2, -8), "sw t0, -8(sp)"),
            (lw(10, 2, 16), "lw a0, 16(sp)"),
            (lui(5, 0x20), "lui t0, 0x20"),
            (jal(0, -16), "jal zero, -16"),
            (jalr(0, 1, 0), "jalr zero, 0(ra)"),
            (beq(5, 6, 12), "beq t0, t1, 12"),
            (div(7, 5, 6), "div t2, t0, t1"),
            (mulhu(7, 5, 6), "mulhu t2, t0, t1"),
            (csrrw(0, 0x305, 5), "csrrw zero, 0x305, t0"),
            (csrrsi(6, 0x300, 8), "csrrsi t1, 0x300, 8"),
            (srai(3, 3, 31), "srai gp, gp, 31"),
            (mret(), "mret"),
            (wfi(), "wfi"),
            (ecall(), "ecall"),
        ];
        for (raw, text) in cases {
            assert_eq!(disasm(&decode(raw)), text, "raw {raw:#010x}");
        }
    }

    #[test]
    fn pinned_canonical_encodings() {
        assert_eq!(nop(), 0x0000_0013);
        assert_eq!(addi(1, 0, 5), 0x0050_0093);
    }

    #[test]
    fn li_materializes_arbitrary_constants() {
        use crate::isa::{CoreState, FlatMem};
        for v in [0u32, 5, 0x800, 0xFFF, 0x1000, 0xDEAD_BEEF, 0x8000_0000, u32::MAX, 0x7FFF_F800] {
            let words = li(5, v);
            let mut mem = FlatMem::new(0, 64);
            let mut imm = words.clone();
            imm.push(nop());
            mem.load_words(0, &imm);
            let mut st = CoreState::new(0);
            let timing = crate::config::TimingModel::default();
            let ctx = crate::isa::test_ctx(&timing);
            for _ in 0..words.len() {
                crate::isa::execute_step(&mut st, &mut mem, None, &ctx);
            }
            assert_eq!(st.xreg(5), v, "li {v:#x}");
        }
    }

    #[test]
    fn label_fixups_resolve() {
        let mut asm = Asm::new(0x100);
        let top = asm.label_here();
        asm.emit(addi(5, 5, 1));
        asm.bne_to(5, 6, top);
        let end = asm.new_label();
        asm.jal_to(0, end);
        asm.emit(nop());
        asm.bind(end);
        asm.emit(nop());
        let words = asm.finish();
        let branch = decode(words[1]);
        assert_eq!(branch.kind, InstrKind::Bne);
        assert_eq!(branch.imm, -4);
        let j = decode(words[2]);
        assert_eq!(j.kind, InstrKind::Jal);
        assert_eq!(j.imm, 8);
    }
}
