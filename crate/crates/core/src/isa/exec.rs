//! Single-step functional execution of RV32I.

use super::{
    decode, handle_ecall, DecodedInst, InstClass, IsaError, Memory, Op, Program, SyscallEffect,
};

/// Architectural state of one hart: pc, integer registers and memory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArchState {
    pub pc: u32,
    xregs: [u32; 32],
    pub mem: Memory,
}

/// Data-memory side effect of a committed load or store.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MemEffect {
    pub addr: u32,
    pub width: u32,
    /// `Some` for stores, `None` for loads.
    pub store_data: Option<u32>,
}

/// Everything one architectural step did.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommitRecord {
    pub pc: u32,
    pub raw: u32,
    pub dest: Option<(u8, u32)>,
    pub mem: Option<MemEffect>,
    pub next_pc: u32,
    pub syscall: Option<SyscallEffect>,
}

impl CommitRecord {
    pub fn is_syscall(&self) -> bool {
        self.syscall.is_some()
    }
}

impl ArchState {
    pub fn new(pc: u32, mem: Memory) -> Self {
        Self {
            pc,
            xregs: [0; 32],
            mem,
        }
    }

    /// Initial state for `program`: pc at the entry point, sp set.
    pub fn from_program(program: &Program, ram_base: u32, ram_size: u32) -> Self {
        let mut state = Self::new(program.entry, program.memory(ram_base, ram_size));
        state.set_reg(super::reg::SP, program.initial_sp);
        state
    }

    pub fn reg(&self, index: u8) -> u32 {
        if index == 0 {
            0
        } else {
            self.xregs[usize::from(index)]
        }
    }

    pub fn set_reg(&mut self, index: u8, value: u32) {
        if index != 0 {
            self.xregs[usize::from(index)] = value;
        }
    }

    pub fn regs(&self) -> [u32; 32] {
        let mut r = self.xregs;
        r[0] = 0;
        r
    }

    /// Executes the instruction at `pc` and advances to the next one.
    ///
    /// On error the state is left unchanged.
    pub fn step(&mut self) -> Result<CommitRecord, IsaError> {
        let pc = self.pc;
        let word = self.mem.fetch(pc)?;
        let inst = decode(word)?;
        let rs1 = self.reg(inst.rs1);
        let rs2 = self.reg(inst.rs2);
        let fallthrough = pc.wrapping_add(4);

        let mut record = CommitRecord {
            pc,
            raw: word,
            dest: None,
            mem: None,
            next_pc: fallthrough,
            syscall: None,
        };

        let mut write = None;
        match inst.class() {
            InstClass::Alu | InstClass::AluImm | InstClass::Lui | InstClass::Auipc => {
                write = Some(alu(&inst, pc, rs1, rs2));
            }
            InstClass::Jal => {
                write = Some(fallthrough);
                record.next_pc = pc.wrapping_add(inst.imm as u32);
            }
            InstClass::Jalr => {
                write = Some(fallthrough);
                record.next_pc = rs1.wrapping_add(inst.imm as u32) & !1;
            }
            InstClass::Branch => {
                if branch_taken(inst.op, rs1, rs2) {
                    record.next_pc = pc.wrapping_add(inst.imm as u32);
                }
            }
            InstClass::Load => {
                let addr = rs1.wrapping_add(inst.imm as u32);
                let width = inst.op.mem_width().unwrap_or(4);
                let raw = self.mem.load(addr, width)?;
                write = Some(load_extend(inst.op, raw));
                record.mem = Some(MemEffect {
                    addr,
                    width,
                    store_data: None,
                });
            }
            InstClass::Store => {
                let addr = rs1.wrapping_add(inst.imm as u32);
                let width = inst.op.mem_width().unwrap_or(4);
                let data = truncate(rs2, width);
                self.mem.store(addr, width, data)?;
                record.mem = Some(MemEffect {
                    addr,
                    width,
                    store_data: Some(data),
                });
            }
            InstClass::Fence => {}
            InstClass::System => match inst.op {
                Op::Ecall => {
                    let effect = handle_ecall(self)?;
                    record.dest = Some((super::reg::A0, self.reg(super::reg::A0)));
                    record.syscall = Some(effect);
                }
                _ => return Err(IsaError::Breakpoint(pc)),
            },
        }

        if let (Some(rd), Some(value)) = (inst.dest(), write) {
            self.set_reg(rd, value);
            record.dest = Some((rd, value));
        }
        self.pc = record.next_pc;
        Ok(record)
    }
}

/// Result of an ALU-class instruction (register, immediate, LUI, AUIPC).
pub fn alu(inst: &DecodedInst, pc: u32, rs1: u32, rs2: u32) -> u32 {
    let imm = inst.imm as u32;
    match inst.op {
        Op::Lui => imm,
        Op::Auipc => pc.wrapping_add(imm),
        Op::Add => rs1.wrapping_add(rs2),
        Op::Sub => rs1.wrapping_sub(rs2),
        Op::Sll => rs1 << (rs2 & 31),
        Op::Slt => u32::from((rs1 as i32) < (rs2 as i32)),
        Op::Sltu => u32::from(rs1 < rs2),
        Op::Xor => rs1 ^ rs2,
        Op::Srl => rs1 >> (rs2 & 31),
        Op::Sra => ((rs1 as i32) >> (rs2 & 31)) as u32,
        Op::Or => rs1 | rs2,
        Op::And => rs1 & rs2,
        Op::Addi => rs1.wrapping_add(imm),
        Op::Slti => u32::from((rs1 as i32) < inst.imm),
        Op::Sltiu => u32::from(rs1 < imm),
        Op::Xori => rs1 ^ imm,
        Op::Ori => rs1 | imm,
        Op::Andi => rs1 & imm,
        Op::Slli => rs1 << (imm & 31),
        Op::Srli => rs1 >> (imm & 31),
        Op::Srai => ((rs1 as i32) >> (imm & 31)) as u32,
        _ => 0,
    }
}

pub fn branch_taken(op: Op, rs1: u32, rs2: u32) -> bool {
    match op {
        Op::Beq => rs1 == rs2,
        Op::Bne => rs1 != rs2,
        Op::Blt => (rs1 as i32) < (rs2 as i32),
        Op::Bge => (rs1 as i32) >= (rs2 as i32),
        Op::Bltu => rs1 < rs2,
        Op::Bgeu => rs1 >= rs2,
        _ => false,
    }
}

/// Sign- or zero-extends a raw little-endian load value.
pub fn load_extend(op: Op, raw: u32) -> u32 {
    match op {
        Op::Lb => raw as u8 as i8 as i32 as u32,
        Op::Lh => raw as u16 as i16 as i32 as u32,
        Op::Lbu => raw & 0xff,
        Op::Lhu => raw & 0xffff,
        _ => raw,
    }
}

fn truncate(value: u32, width: u32) -> u32 {
    match width {
        1 => value & 0xff,
        2 => value & 0xffff,
        _ => value,
    }
}
