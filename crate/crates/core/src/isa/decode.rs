//! RV32I instruction decoding, re-encoding and disassembly.
//!
//! Only the RV32I base ISA is accepted. Everything else, including the
//! RV64I `*W` opcodes, the M/A/F/C extensions, CSR access and `fence.i`,
//! decodes to [`IsaError::IllegalInstruction`].

use std::fmt;

use super::IsaError;

/// Major opcode groups of RV32I.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum InstClass {
    Alu,
    AluImm,
    Branch,
    Jal,
    Jalr,
    Load,
    Store,
    Lui,
    Auipc,
    System,
    Fence,
}

/// Operation selector within an [`InstClass`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Op {
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
    Fence,
    Ecall,
    Ebreak,
}

impl Op {
    pub fn class(self) -> InstClass {
        use Op::*;
        match self {
            Lui => InstClass::Lui,
            Auipc => InstClass::Auipc,
            Jal => InstClass::Jal,
            Jalr => InstClass::Jalr,
            Beq | Bne | Blt | Bge | Bltu | Bgeu => InstClass::Branch,
            Lb | Lh | Lw | Lbu | Lhu => InstClass::Load,
            Sb | Sh | Sw => InstClass::Store,
            Addi | Slti | Sltiu | Xori | Ori | Andi | Slli | Srli | Srai => InstClass::AluImm,
            Add | Sub | Sll | Slt | Sltu | Xor | Srl | Sra | Or | And => InstClass::Alu,
            Fence => InstClass::Fence,
            Ecall | Ebreak => InstClass::System,
        }
    }

    pub fn mnemonic(self) -> &'static str {
        use Op::*;
        match self {
            Lui => "lui",
            Auipc => "auipc",
            Jal => "jal",
            Jalr => "jalr",
            Beq => "beq",
            Bne => "bne",
            Blt => "blt",
            Bge => "bge",
            Bltu => "bltu",
            Bgeu => "bgeu",
            Lb => "lb",
            Lh => "lh",
            Lw => "lw",
            Lbu => "lbu",
            Lhu => "lhu",
            Sb => "sb",
            Sh => "sh",
            Sw => "sw",
            Addi => "addi",
            Slti => "slti",
            Sltiu => "sltiu",
            Xori => "xori",
            Ori => "ori",
            Andi => "andi",
            Slli => "slli",
            Srli => "srli",
            Srai => "srai",
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
            Fence => "fence",
            Ecall => "ecall",
            Ebreak => "ebreak",
        }
    }

    /// Access width in bytes for loads and stores.
    pub fn mem_width(self) -> Option<u32> {
        use Op::*;
        match self {
            Lb | Lbu | Sb => Some(1),
            Lh | Lhu | Sh => Some(2),
            Lw | Sw => Some(4),
            _ => None,
        }
    }
}

/// One decoded RV32I instruction.
///
/// Register fields that the format does not carry are zero. `imm` holds the
/// sign-extended immediate; for U-type it is the already shifted upper value
/// and for FENCE it is the raw `fm/pred/succ` field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DecodedInst {
    pub raw: u32,
    pub op: Op,
    pub rd: u8,
    pub rs1: u8,
    pub rs2: u8,
    pub imm: i32,
}

pub const NOP: u32 = 0x0000_0013;

const OPC_LOAD: u32 = 0x03;
const OPC_MISC_MEM: u32 = 0x0f;
const OPC_OP_IMM: u32 = 0x13;
const OPC_AUIPC: u32 = 0x17;
const OPC_STORE: u32 = 0x23;
const OPC_OP: u32 = 0x33;
const OPC_LUI: u32 = 0x37;
const OPC_BRANCH: u32 = 0x63;
const OPC_JALR: u32 = 0x67;
const OPC_JAL: u32 = 0x6f;
const OPC_SYSTEM: u32 = 0x73;

fn sext(value: u32, bits: u32) -> i32 {
    let shift = 32 - bits;
    ((value << shift) as i32) >> shift
}

fn imm_i(w: u32) -> i32 {
    (w as i32) >> 20
}

fn imm_s(w: u32) -> i32 {
    sext(((w >> 25) << 5) | ((w >> 7) & 0x1f), 12)
}

fn imm_b(w: u32) -> i32 {
    let v = (((w >> 31) & 1) << 12)
        | (((w >> 7) & 1) << 11)
        | (((w >> 25) & 0x3f) << 5)
        | (((w >> 8) & 0xf) << 1);
    sext(v, 13)
}

fn imm_j(w: u32) -> i32 {
    let v = (((w >> 31) & 1) << 20)
        | (((w >> 12) & 0xff) << 12)
        | (((w >> 20) & 1) << 11)
        | (((w >> 21) & 0x3ff) << 1);
    sext(v, 21)
}

/// Decodes one 32-bit word.
pub fn decode(word: u32) -> Result<DecodedInst, IsaError> {
    let illegal = Err(IsaError::IllegalInstruction(word));
    let opcode = word & 0x7f;
    let rd = ((word >> 7) & 0x1f) as u8;
    let funct3 = (word >> 12) & 0x7;
    let rs1 = ((word >> 15) & 0x1f) as u8;
    let rs2 = ((word >> 20) & 0x1f) as u8;
    let funct7 = word >> 25;

    let inst = |op, rd, rs1, rs2, imm| {
        Ok(DecodedInst {
            raw: word,
            op,
            rd,
            rs1,
            rs2,
            imm,
        })
    };

    match opcode {
        OPC_LUI => inst(Op::Lui, rd, 0, 0, (word & 0xffff_f000) as i32),
        OPC_AUIPC => inst(Op::Auipc, rd, 0, 0, (word & 0xffff_f000) as i32),
        OPC_JAL => inst(Op::Jal, rd, 0, 0, imm_j(word)),
        OPC_JALR if funct3 == 0 => inst(Op::Jalr, rd, rs1, 0, imm_i(word)),
        OPC_BRANCH => {
            let op = match funct3 {
                0 => Op::Beq,
                1 => Op::Bne,
                4 => Op::Blt,
                5 => Op::Bge,
                6 => Op::Bltu,
                7 => Op::Bgeu,
                _ => return illegal,
            };
            inst(op, 0, rs1, rs2, imm_b(word))
        }
        OPC_LOAD => {
            let op = match funct3 {
                0 => Op::Lb,
                1 => Op::Lh,
                2 => Op::Lw,
                4 => Op::Lbu,
                5 => Op::Lhu,
                _ => return illegal,
            };
            inst(op, rd, rs1, 0, imm_i(word))
        }
        OPC_STORE => {
            let op = match funct3 {
                0 => Op::Sb,
                1 => Op::Sh,
                2 => Op::Sw,
                _ => return illegal,
            };
            inst(op, 0, rs1, rs2, imm_s(word))
        }
        OPC_OP_IMM => {
            let op = match (funct3, funct7) {
                (0, _) => Op::Addi,
                (2, _) => Op::Slti,
                (3, _) => Op::Sltiu,
                (4, _) => Op::Xori,
                (6, _) => Op::Ori,
                (7, _) => Op::Andi,
                (1, 0x00) => Op::Slli,
                (5, 0x00) => Op::Srli,
                (5, 0x20) => Op::Srai,
                _ => return illegal,
            };
            let imm = match op {
                Op::Slli | Op::Srli | Op::Srai => i32::from(rs2),
                _ => imm_i(word),
            };
            inst(op, rd, rs1, 0, imm)
        }
        OPC_OP => {
            let op = match (funct3, funct7) {
                (0, 0x00) => Op::Add,
                (0, 0x20) => Op::Sub,
                (1, 0x00) => Op::Sll,
                (2, 0x00) => Op::Slt,
                (3, 0x00) => Op::Sltu,
                (4, 0x00) => Op::Xor,
                (5, 0x00) => Op::Srl,
                (5, 0x20) => Op::Sra,
                (6, 0x00) => Op::Or,
                (7, 0x00) => Op::And,
                _ => return illegal,
            };
            inst(op, rd, rs1, rs2, 0)
        }
        OPC_MISC_MEM if funct3 == 0 => inst(Op::Fence, rd, rs1, 0, imm_i(word)),
        OPC_SYSTEM => match word {
            0x0000_0073 => inst(Op::Ecall, 0, 0, 0, 0),
            0x0010_0073 => inst(Op::Ebreak, 0, 0, 0, 0),
            _ => illegal,
        },
        _ => illegal,
    }
}

impl DecodedInst {
    pub fn class(&self) -> InstClass {
        self.op.class()
    }

    /// Architectural destination, `None` for formats without one and for x0.
    pub fn dest(&self) -> Option<u8> {
        match self.class() {
            InstClass::Branch | InstClass::Store | InstClass::Fence | InstClass::System => None,
            _ if self.rd == 0 => None,
            _ => Some(self.rd),
        }
    }

    /// Source registers read by the instruction (x0 reads included).
    pub fn sources(&self) -> [Option<u8>; 2] {
        match self.class() {
            InstClass::Alu | InstClass::Branch | InstClass::Store => {
                [Some(self.rs1), Some(self.rs2)]
            }
            InstClass::AluImm | InstClass::Jalr | InstClass::Load => [Some(self.rs1), None],
            _ => [None, None],
        }
    }

    pub fn is_control(&self) -> bool {
        matches!(
            self.class(),
            InstClass::Branch | InstClass::Jal | InstClass::Jalr
        )
    }

    /// Re-encodes the decoded fields into an instruction word.
    pub fn encode(&self) -> u32 {
        encode(self.op, self.rd, self.rs1, self.rs2, self.imm)
    }
}

fn r_type(opcode: u32, funct3: u32, funct7: u32, rd: u8, rs1: u8, rs2: u8) -> u32 {
    (funct7 << 25)
        | (u32::from(rs2) << 20)
        | (u32::from(rs1) << 15)
        | (funct3 << 12)
        | (u32::from(rd) << 7)
        | opcode
}

fn i_type(opcode: u32, funct3: u32, rd: u8, rs1: u8, imm: i32) -> u32 {
    ((imm as u32 & 0xfff) << 20)
        | (u32::from(rs1) << 15)
        | (funct3 << 12)
        | (u32::from(rd) << 7)
        | opcode
}

fn s_type(opcode: u32, funct3: u32, rs1: u8, rs2: u8, imm: i32) -> u32 {
    let imm = imm as u32;
    (((imm >> 5) & 0x7f) << 25)
        | (u32::from(rs2) << 20)
        | (u32::from(rs1) << 15)
        | (funct3 << 12)
        | ((imm & 0x1f) << 7)
        | opcode
}

fn b_type(funct3: u32, rs1: u8, rs2: u8, imm: i32) -> u32 {
    let imm = imm as u32;
    (((imm >> 12) & 1) << 31)
        | (((imm >> 5) & 0x3f) << 25)
        | (u32::from(rs2) << 20)
        | (u32::from(rs1) << 15)
        | (funct3 << 12)
        | (((imm >> 1) & 0xf) << 8)
        | (((imm >> 11) & 1) << 7)
        | OPC_BRANCH
}

fn j_type(rd: u8, imm: i32) -> u32 {
    let imm = imm as u32;
    (((imm >> 20) & 1) << 31)
        | (((imm >> 1) & 0x3ff) << 21)
        | (((imm >> 11) & 1) << 20)
        | (((imm >> 12) & 0xff) << 12)
        | (u32::from(rd) << 7)
        | OPC_JAL
}

/// Encodes an instruction from its fields. Fields the format does not carry
/// are ignored; immediates are truncated to the format's width.
pub fn encode(op: Op, rd: u8, rs1: u8, rs2: u8, imm: i32) -> u32 {
    use Op::*;
    let (rd, rs1, rs2) = (rd & 0x1f, rs1 & 0x1f, rs2 & 0x1f);
    match op {
        Lui => (imm as u32 & 0xffff_f000) | (u32::from(rd) << 7) | OPC_LUI,
        Auipc => (imm as u32 & 0xffff_f000) | (u32::from(rd) << 7) | OPC_AUIPC,
        Jal => j_type(rd, imm),
        Jalr => i_type(OPC_JALR, 0, rd, rs1, imm),
        Beq => b_type(0, rs1, rs2, imm),
        Bne => b_type(1, rs1, rs2, imm),
        Blt => b_type(4, rs1, rs2, imm),
        Bge => b_type(5, rs1, rs2, imm),
        Bltu => b_type(6, rs1, rs2, imm),
        Bgeu => b_type(7, rs1, rs2, imm),
        Lb => i_type(OPC_LOAD, 0, rd, rs1, imm),
        Lh => i_type(OPC_LOAD, 1, rd, rs1, imm),
        Lw => i_type(OPC_LOAD, 2, rd, rs1, imm),
        Lbu => i_type(OPC_LOAD, 4, rd, rs1, imm),
        Lhu => i_type(OPC_LOAD, 5, rd, rs1, imm),
        Sb => s_type(OPC_STORE, 0, rs1, rs2, imm),
        Sh => s_type(OPC_STORE, 1, rs1, rs2, imm),
        Sw => s_type(OPC_STORE, 2, rs1, rs2, imm),
        Addi => i_type(OPC_OP_IMM, 0, rd, rs1, imm),
        Slti => i_type(OPC_OP_IMM, 2, rd, rs1, imm),
        Sltiu => i_type(OPC_OP_IMM, 3, rd, rs1, imm),
        Xori => i_type(OPC_OP_IMM, 4, rd, rs1, imm),
        Ori => i_type(OPC_OP_IMM, 6, rd, rs1, imm),
        Andi => i_type(OPC_OP_IMM, 7, rd, rs1, imm),
        Slli => i_type(OPC_OP_IMM, 1, rd, rs1, imm & 0x1f),
        Srli => i_type(OPC_OP_IMM, 5, rd, rs1, imm & 0x1f),
        Srai => i_type(OPC_OP_IMM, 5, rd, rs1, (imm & 0x1f) | 0x400),
        Add => r_type(OPC_OP, 0, 0x00, rd, rs1, rs2),
        Sub => r_type(OPC_OP, 0, 0x20, rd, rs1, rs2),
        Sll => r_type(OPC_OP, 1, 0x00, rd, rs1, rs2),
        Slt => r_type(OPC_OP, 2, 0x00, rd, rs1, rs2),
        Sltu => r_type(OPC_OP, 3, 0x00, rd, rs1, rs2),
        Xor => r_type(OPC_OP, 4, 0x00, rd, rs1, rs2),
        Srl => r_type(OPC_OP, 5, 0x00, rd, rs1, rs2),
        Sra => r_type(OPC_OP, 5, 0x20, rd, rs1, rs2),
        Or => r_type(OPC_OP, 6, 0x00, rd, rs1, rs2),
        And => r_type(OPC_OP, 7, 0x00, rd, rs1, rs2),
        Fence => i_type(OPC_MISC_MEM, 0, rd, rs1, imm),
        Ecall => 0x0000_0073,
        Ebreak => 0x0010_0073,
    }
}

impl fmt::Display for DecodedInst {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let m = self.op.mnemonic();
        let (rd, rs1, rs2, imm) = (self.rd, self.rs1, self.rs2, self.imm);
        match self.class() {
            InstClass::Lui | InstClass::Auipc => {
                write!(f, "{m} x{rd}, 0x{:x}", (imm as u32) >> 12)
            }
            InstClass::Jal => write!(f, "{m} x{rd}, {imm}"),
            InstClass::Jalr | InstClass::Load => write!(f, "{m} x{rd}, {imm}(x{rs1})"),
            InstClass::Branch => write!(f, "{m} x{rs1}, x{rs2}, {imm}"),
            InstClass::Store => write!(f, "{m} x{rs2}, {imm}(x{rs1})"),
            InstClass::AluImm => write!(f, "{m} x{rd}, x{rs1}, {imm}"),
            InstClass::Alu => write!(f, "{m} x{rd}, x{rs1}, x{rs2}"),
            InstClass::Fence | InstClass::System => f.write_str(m),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_nop() {
        let d = decode(NOP).unwrap();
        assert_eq!(d.op, Op::Addi);
        assert_eq!((d.rd, d.rs1, d.imm), (0, 0, 0));
        assert_eq!(d.dest(), None);
        assert_eq!(d.to_string(), "addi x0, x0, 0");
    }

    #[test]
    fn add_registers() {
        let d = decode(0x00B5_0533).unwrap();
        assert_eq!(d.op, Op::Add);
        assert_eq!((d.rd, d.rs1, d.rs2), (10, 10, 11));
        assert_eq!(d.encode(), 0x00B5_0533);
    }

    #[test]
    fn rv64_word_ops_are_illegal() {
        assert_eq!(decode(0x0000_003B), Err(IsaError::IllegalInstruction(0x3B)));
        // addiw a0, a0, 1
        assert!(decode(0x0015_051B).is_err());
        // ld a0, 0(a1)
        assert!(decode(0x0005_B503).is_err());
        // sd a0, 0(a1)
        assert!(decode(0x00A5_B023).is_err());
    }

    #[test]
    fn csr_and_compressed_are_illegal() {
        // csrrs a0, cycle, x0
        assert!(decode(0xC000_2573).is_err());
        // fence.i
        assert!(decode(0x0000_100F).is_err());
        // mul a0, a0, a1
        assert!(decode(0x02B5_0533).is_err());
        assert!(decode(0x0000_4501).is_err());
        assert!(decode(0).is_err());
    }

    #[test]
    fn branch_and_store_have_no_destination() {
        let beq = decode(encode(Op::Beq, 0, 1, 2, 16)).unwrap();
        assert_eq!(beq.dest(), None);
        assert_eq!(beq.imm, 16);
        let sw = decode(encode(Op::Sw, 0, 2, 5, -8)).unwrap();
        assert_eq!(sw.dest(), None);
        assert_eq!(sw.imm, -8);
    }

    #[test]
    fn shift_immediates_reject_bad_funct7() {
        // slli with imm[11:5] = 1 would be a 64-bit shamt
        assert!(decode(0x0205_1513).is_err());
        let srai = decode(encode(Op::Srai, 5, 6, 0, 31)).unwrap();
        assert_eq!((srai.op, srai.imm), (Op::Srai, 31));
    }
}
