//! RV32IM+Zicsr instruction decoding and disassembly.
//!
//! Decode is total: every 32-bit word maps to a structurally valid
//! `Instruction`, with unknown encodings marked `InstrKind::Illegal`.

/// Operation selected by decode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InstrKind {
    Lui,
    Auipc,
    Jal,
    Jalr,
    Beq,
    Bne,
    Blt,
    Bge,
    Bltu,
    Bgeu,
    Lb,
    Lh,
    Lw,
    Lbu,
    Lhu,
    Sb,
    Sh,
    Sw,
    Addi,
    Slti,
    Sltiu,
    Xori,
    Ori,
    Andi,
    Slli,
    Srli,
    Srai,
    Add,
    Sub,
    Sll,
    Slt,
    Sltu,
    Xor,
    Srl,
    Sra,
    Or,
    And,
    Mul,
    Mulh,
    Mulhsu,
    Mulhu,
    Div,
    Divu,
    Rem,
    Remu,
    Fence,
    Ecall,
    Ebreak,
    Csrrw,
    Csrrs,
    Csrrc,
    Csrrwi,
    Csrrsi,
    Csrrci,
    Mret,
    Wfi,
    Illegal,
}

/// A decoded instruction. For CSR instructions `imm` carries the
/// zero-extended CSR number; for immediate CSR forms `rs1` is the 5-bit
/// unsigned immediate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Instruction {
    pub kind: InstrKind,
    pub rd: u8,
    pub rs1: u8,
    pub rs2: u8,
    pub imm: i32,
    pub raw: u32,
}

impl Instruction {
    pub fn is_illegal(&self) -> bool {
        self.kind == InstrKind::Illegal
    }
}

fn imm_i(raw: u32) -> i32 {
    (raw as i32) >> 20
}

fn imm_s(raw: u32) -> i32 {
    (((raw & 0xFE00_0000) as i32) >> 20) | ((raw >> 7) & 0x1F) as i32
}

fn imm_b(raw: u32) -> i32 {
    (((raw & 0x8000_0000) as i32) >> 19)
        | (((raw >> 7) & 1) << 11) as i32
        | (((raw >> 25) & 0x3F) << 5) as i32
        | (((raw >> 8) & 0xF) << 1) as i32
}

fn imm_u(raw: u32) -> i32 {
    (raw & 0xFFFF_F000) as i32
}

fn imm_j(raw: u32) -> i32 {
    (((raw & 0x8000_0000) as i32) >> 11)
        | (raw & 0x000F_F000) as i32
        | (((raw >> 20) & 1) << 11) as i32
        | (((raw >> 21) & 0x3FF) << 1) as i32
}

/// Decode one 32-bit word. Never fails; unknown encodings come back as
/// `InstrKind::Illegal`.
pub fn decode(raw: u32) -> Instruction {
    let opcode = raw & 0x7F;
    let rd = ((raw >> 7) & 0x1F) as u8;
    let funct3 = (raw >> 12) & 0x7;
    let rs1 = ((raw >> 15) & 0x1F) as u8;
    let rs2 = ((raw >> 20) & 0x1F) as u8;
    let funct7 = (raw >> 25) & 0x7F;

    let mut rd_out = rd;
    let mut rs1_out = rs1;
    let mut rs2_out = rs2;
    let mut imm = 0i32;

    let kind = match opcode {
        0b0110111 => {
            imm = imm_u(raw);
            rs1_out = 0;
            rs2_out = 0;
            InstrKind::Lui
        }
        0b0010111 => {
            imm = imm_u(raw);
            rs1_out = 0;
            rs2_out = 0;
            InstrKind::Auipc
        }
        0b1101111 => {
            imm = imm_j(raw);
            rs1_out = 0;
            rs2_out = 0;
            InstrKind::Jal
        }
        0b1100111 if funct3 == 0 => {
            imm = imm_i(raw);
            rs2_out = 0;
            InstrKind::Jalr
        }
        0b1100011 => {
            imm = imm_b(raw);
            rd_out = 0;
            match funct3 {
                0b000 => InstrKind::Beq,
                0b001 => InstrKind::Bne,
                0b100 => InstrKind::Blt,
                0b101 => InstrKind::Bge,
                0b110 => InstrKind::Bltu,
                0b111 => InstrKind::Bgeu,
                _ => InstrKind::Illegal,
            }
        }
        0b0000011 => {
            imm = imm_i(raw);
            rs2_out = 0;
            match funct3 {
                0b000 => InstrKind::Lb,
                0b001 => InstrKind::Lh,
                0b010 => InstrKind::Lw,
                0b100 => InstrKind::Lbu,
                0b101 => InstrKind::Lhu,
                _ => InstrKind::Illegal,
            }
        }
        0b0100011 => {
            imm = imm_s(raw);
            rd_out = 0;
            match funct3 {
                0b000 => InstrKind::Sb,
                0b001 => InstrKind::Sh,
                0b010 => InstrKind::Sw,
                _ => InstrKind::Illegal,
            }
        }
        0b0010011 => {
            imm = imm_i(raw);
            rs2_out = 0;
            match funct3 {
                0b000 => InstrKind::Addi,
                0b010 => InstrKind::Slti,
                0b011 => InstrKind::Sltiu,
                0b100 => InstrKind::Xori,
                0b110 => InstrKind::Ori,
                0b111 => InstrKind::Andi,
                0b001 if funct7 == 0 => {
                    imm = rs2 as i32;
                    InstrKind::Slli
                }
                0b101 if funct7 == 0 => {
                    imm = rs2 as i32;
                    InstrKind::Srli
                }
                0b101 if funct7 == 0b0100000 => {
                    imm = rs2 as i32;
                    InstrKind::Srai
                }
                _ => InstrKind::Illegal,
            }
        }
        0b0110011 => match (funct7, funct3) {
            (0b0000000, 0b000) => InstrKind::Add,
            (0b0100000, 0b000) => InstrKind::Sub,
            (0b0000000, 0b001) => InstrKind::Sll,
            (0b0000000, 0b010) => InstrKind::Slt,
            (0b0000000, 0b011) => InstrKind::Sltu,
            (0b0000000, 0b100) => InstrKind::Xor,
            (0b0000000, 0b101) => InstrKind::Srl,
            (0b0100000, 0b101) => InstrKind::Sra,
            (0b0000000, 0b110) => InstrKind::Or,
            (0b0000000, 0b111) => InstrKind::And,
            (0b0000001, 0b000) => InstrKind::Mul,
            (0b0000001, 0b001) => InstrKind::Mulh,
            (0b0000001, 0b010) => InstrKind::Mulhsu,
            (0b0000001, 0b011) => InstrKind::Mulhu,
            (0b0000001, 0b100) => InstrKind::Div,
            (0b0000001, 0b101) => InstrKind::Divu,
            (0b0000001, 0b110) => InstrKind::Rem,
            (0b0000001, 0b111) => InstrKind::Remu,
            _ => InstrKind::Illegal,
        },
        0b0001111 if funct3 == 0 => InstrKind::Fence,
        0b1110011 => match funct3 {
            0b000 => match raw >> 7 {
                0 => InstrKind::Ecall,
                _ if raw == 0x0010_0073 => InstrKind::Ebreak,
                _ if raw == 0x3020_0073 => InstrKind::Mret,
                _ if raw == 0x1050_0073 => InstrKind::Wfi,
                _ => InstrKind::Illegal,
            },
            0b001 | 0b010 | 0b011 | 0b101 | 0b110 | 0b111 => {
                imm = ((raw >> 20) & 0xFFF) as i32;
                rs2_out = 0;
                match funct3 {
                    0b001 => InstrKind::Csrrw,
                    0b010 => InstrKind::Csrrs,
                    0b011 => InstrKind::Csrrc,
                    0b101 => InstrKind::Csrrwi,
                    0b110 => InstrKind::Csrrsi,
                    _ => InstrKind::Csrrci,
                }
            }
            _ => InstrKind::Illegal,
        },
        _ => InstrKind::Illegal,
    };

    if kind == InstrKind::Illegal {
        return Instruction { kind, rd: 0, rs1: 0, rs2: 0, imm: 0, raw };
    }
    Instruction { kind, rd: rd_out, rs1: rs1_out, rs2: rs2_out, imm, raw }
}

const REG_NAMES: [&str; 32] = [
    "zero", "ra", "sp", "gp", "tp", "t0", "t1", "t2", "s0", "s1", "a0", "a1", "a2", "a3", "a4",
    "a5", "a6", "a7", "s2", "s3", "s4", "s5", "s6", "s7", "s8", "s9", "s10", "s11", "t3", "t4",
    "t5", "t6",
];

fn r(i: u8) -> &'static str {
    REG_NAMES[i as usize]
}

/// Render an instruction as assembly text for traces.
pub fn disasm(ins: &Instruction) -> String {
    use InstrKind::*;
    let Instruction { kind, rd, rs1, rs2, imm, raw } = *ins;
    match kind {
        Lui => format!("lui {}, {:#x}", r(rd), (imm as u32) >> 12),
        Auipc => format!("auipc {}, {:#x}", r(rd), (imm as u32) >> 12),
        Jal => format!("jal {}, {}", r(rd), imm),
        Jalr => format!("jalr {}, {}({})", r(rd), imm, r(rs1)),
        Beq | Bne | Blt | Bge | Bltu | Bgeu => {
            let m = match kind {
                Beq => "beq",
                Bne => "bne",
                Blt => "blt",
                Bge => "bge",
                Bltu => "bltu",
                _ => "bgeu",
            };
            format!("{m} {}, {}, {}", r(rs1), r(rs2), imm)
        }
        Lb | Lh | Lw | Lbu | Lhu => {
            let m = match kind {
                Lb => "lb",
                Lh => "lh",
                Lw => "lw",
                Lbu => "lbu",
                _ => "lhu",
            };
            format!("{m} {}, {}({})", r(rd), imm, r(rs1))
        }
        Sb | Sh | Sw => {
            let m = match kind {
                Sb => "sb",
                Sh => "sh",
                _ => "sw",
            };
            format!("{m} {}, {}({})", r(rs2), imm, r(rs1))
        }
        Addi | Slti | Sltiu | Xori | Ori | Andi => {
            let m = match kind {
                Addi => "addi",
                Slti => "slti",
                Sltiu => "sltiu",
                Xori => "xori",
                Ori => "ori",
                _ => "andi",
            };
            format!("{m} {}, {}, {}", r(rd), r(rs1), imm)
        }
        Slli | Srli | Srai => {
            let m = match kind {
                Slli => "slli",
                Srli => "srli",
                _ => "srai",
            };
            format!("{m} {}, {}, {}", r(rd), r(rs1), imm)
        }
        Add | Sub | Sll | Slt | Sltu | Xor | Srl | Sra | Or | And | Mul | Mulh | Mulhsu | Mulhu
        | Div | Divu | Rem | Remu => {
            let m = match kind {
                Add => "add",
                Sub => "sub",
                Sll => "sll",
                Slt => "slt",
                Sltu => "sltu",
                Xor => "xor",
                Srl => "srl",
                Sra => "sra",
                Or => "or",
                And => "and",
                Mul => "mul",
                Mulh => "mulh",
                Mulhsu => "mulhsu",
                Mulhu => "mulhu",
                Div => "div",
                Divu => "divu",
                Rem => "rem",
                _ => "remu",
            };
            format!("{m} {}, {}, {}", r(rd), r(rs1), r(rs2))
        }
        Fence => "fence".to_string(),
        Ecall => "ecall".to_string(),
        Ebreak => "ebreak".to_string(),
        Mret => "mret".to_string(),
        Wfi => "wfi".to_string(),
        Csrrw | Csrrs | Csrrc => {
            let m = match kind {
                Csrrw => "csrrw",
                Csrrs => "csrrs",
                _ => "csrrc",
            };
            format!("{m} {}, {:#x}, {}", r(rd), imm, r(rs1))
        }
        Csrrwi | Csrrsi | Csrrci => {
            let m = match kind {
                Csrrwi => "csrrwi",
                Csrrsi => "csrrsi",
                _ => "csrrci",
            };
            format!("{m} {}, {:#x}, {}", r(rd), imm, rs1)
        }
        Illegal => format!(".word {raw:#010x}"),
    }
}
