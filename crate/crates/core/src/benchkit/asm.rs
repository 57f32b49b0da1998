//! A small label-resolving RV32I assembler used to build the suite.

use std::collections::HashMap;

use thiserror::Error;

use crate::isa::{encode, Op};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AsmError {
    #[error("label {0:?} defined twice")]
    DuplicateLabel(String),
    #[error("undefined label {0:?}")]
    UndefinedLabel(String),
    #[error("target of {label:?} is {offset} bytes away, out of range")]
    OutOfRange { label: String, offset: i64 },
}

#[derive(Debug, Clone)]
struct Fixup {
    index: usize,
    op: Op,
    rd: u8,
    rs1: u8,
    rs2: u8,
    label: String,
}

/// Emits instructions at consecutive addresses from `base`.
#[derive(Debug, Clone)]
pub struct Assembler {
    base: u32,
    words: Vec<u32>,
    labels: HashMap<String, u32>,
    fixups: Vec<Fixup>,
    error: Option<AsmError>,
}

impl Assembler {
    pub fn new(base: u32) -> Self {
        Self {
            base,
            words: Vec::new(),
            labels: HashMap::new(),
            fixups: Vec::new(),
            error: None,
        }
    }

    /// Address of the next instruction.
    pub fn pc(&self) -> u32 {
        self.base + 4 * self.words.len() as u32
    }

    pub fn label(&mut self, name: &str) -> &mut Self {
        let pc = self.pc();
        if self.labels.insert(name.to_string(), pc).is_some() && self.error.is_none() {
            self.error = Some(AsmError::DuplicateLabel(name.to_string()));
        }
        self
    }

    pub fn emit(&mut self, op: Op, rd: u8, rs1: u8, rs2: u8, imm: i32) -> &mut Self {
        self.words.push(encode(op, rd, rs1, rs2, imm));
        self
    }

    /// Register-register ALU op.
    pub fn r(&mut self, op: Op, rd: u8, rs1: u8, rs2: u8) -> &mut Self {
        self.emit(op, rd, rs1, rs2, 0)
    }

    /// Immediate ALU op, load or `jalr`.
    pub fn i(&mut self, op: Op, rd: u8, rs1: u8, imm: i32) -> &mut Self {
        self.emit(op, rd, rs1, 0, imm)
    }

    /// Store `rs2` to `imm(rs1)`.
    pub fn s(&mut self, op: Op, rs2: u8, rs1: u8, imm: i32) -> &mut Self {
        self.emit(op, 0, rs1, rs2, imm)
    }

    pub fn addi(&mut self, rd: u8, rs1: u8, imm: i32) -> &mut Self {
        self.i(Op::Addi, rd, rs1, imm)
    }

    pub fn mv(&mut self, rd: u8, rs: u8) -> &mut Self {
        self.addi(rd, rs, 0)
    }

    /// Loads a 32-bit constant with `addi` or `lui` + `addi`.
    pub fn li(&mut self, rd: u8, value: u32) -> &mut Self {
        let v = value as i32;
        if (-2048..2048).contains(&v) {
            return self.addi(rd, 0, v);
        }
        let hi = value.wrapping_add(0x800) & 0xffff_f000;
        let lo = value.wrapping_sub(hi) as i32;
        self.emit(Op::Lui, rd, 0, 0, hi as i32);
        if lo != 0 {
            self.addi(rd, rd, lo);
        }
        self
    }

    /// Conditional branch to a label.
    pub fn branch(&mut self, op: Op, rs1: u8, rs2: u8, label: &str) -> &mut Self {
        self.fixup(op, 0, rs1, rs2, label)
    }

    pub fn jal(&mut self, rd: u8, label: &str) -> &mut Self {
        self.fixup(Op::Jal, rd, 0, 0, label)
    }

    pub fn j(&mut self, label: &str) -> &mut Self {
        self.jal(0, label)
    }

    pub fn call(&mut self, label: &str) -> &mut Self {
        self.jal(crate::isa::reg::RA, label)
    }

    pub fn ret(&mut self) -> &mut Self {
        self.i(Op::Jalr, 0, crate::isa::reg::RA, 0)
    }

    pub fn ecall(&mut self) -> &mut Self {
        self.emit(Op::Ecall, 0, 0, 0, 0)
    }

    /// `exit(code)` through the syscall interface.
    pub fn exit(&mut self, code: u32) -> &mut Self {
        use crate::isa::reg::{A0, A7};
        self.li(A0, code).li(A7, crate::isa::SYS_EXIT).ecall()
    }

    fn fixup(&mut self, op: Op, rd: u8, rs1: u8, rs2: u8, label: &str) -> &mut Self {
        self.fixups.push(Fixup {
            index: self.words.len(),
            op,
            rd,
            rs1,
            rs2,
            label: label.to_string(),
        });
        self.words.push(0);
        self
    }

    /// Resolves labels and returns the instruction words.
    pub fn finish(mut self) -> Result<Vec<u32>, AsmError> {
        if let Some(e) = self.error.take() {
            return Err(e);
        }
        for f in &self.fixups {
            let target = *self
                .labels
                .get(&f.label)
                .ok_or_else(|| AsmError::UndefinedLabel(f.label.clone()))?;
            let pc = self.base + 4 * f.index as u32;
            let offset = i64::from(target) - i64::from(pc);
            let limit = if f.op == Op::Jal { 1 << 20 } else { 1 << 12 };
            if !(-limit..limit).contains(&offset) {
                return Err(AsmError::OutOfRange {
                    label: f.label.clone(),
                    offset,
                });
            }
            self.words[f.index] = encode(f.op, f.rd, f.rs1, f.rs2, offset as i32);
        }
        Ok(self.words)
    }

    /// [`Assembler::finish`] as little-endian bytes.
    pub fn finish_bytes(self) -> Result<Vec<u8>, AsmError> {
        Ok(self
            .finish()?
            .iter()
            .flat_map(|w| w.to_le_bytes())
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::isa::{decode, reg::*};

    #[test]
    fn backward_and_forward_labels() {
        let mut a = Assembler::new(0x8000_0000);
        a.label("top")
            .addi(T0, T0, 1)
            .branch(Op::Bne, T0, T1, "top")
            .j("end")
            .addi(0, 0, 0)
            .label("end");
        let w = a.finish().unwrap();
        assert_eq!(decode(w[1]).unwrap().imm, -4);
        assert_eq!(decode(w[2]).unwrap().imm, 8);
    }

    #[test]
    fn li_covers_sign_boundaries() {
        for v in [
            0u32,
            2047,
            2048,
            0xffff_f800,
            0x8000_0000,
            0x7fff_ffff,
            0x1234_5fff,
            u32::MAX,
        ] {
            let mut a = Assembler::new(0x8000_0000);
            a.li(T0, v);
            let mut acc = 0u32;
            for w in a.finish().unwrap() {
                let d = decode(w).unwrap();
                acc = match d.op {
                    Op::Lui => d.imm as u32,
                    Op::Addi if d.rs1 == 0 => d.imm as u32,
                    Op::Addi => acc.wrapping_add(d.imm as u32),
                    other => panic!("{other:?}"),
                };
            }
            assert_eq!(acc, v, "{v:#x}");
        }
    }

    #[test]
    fn errors() {
        let mut a = Assembler::new(0);
        a.j("nowhere");
        assert_eq!(a.finish(), Err(AsmError::UndefinedLabel("nowhere".into())));
        let mut a = Assembler::new(0);
        a.label("x").label("x");
        assert!(matches!(a.finish(), Err(AsmError::DuplicateLabel(_))));
        let mut a = Assembler::new(0);
        a.branch(Op::Beq, 0, 0, "far");
        for _ in 0..1024 {
            a.addi(0, 0, 0);
        }
        a.label("far");
        assert!(matches!(a.finish(), Err(AsmError::OutOfRange { .. })));
    }
}
