//! RV32I decoding, program images and the functional reference executor.

mod decode;
mod exec;
mod loader;
mod memory;
mod syscall;

pub use decode::{decode, encode, DecodedInst, InstClass, Op, NOP};
pub use exec::{alu, branch_taken, load_extend, ArchState, CommitRecord, MemEffect};
pub use loader::{load_program, ImageFormat, Program, Segment};
pub use memory::{Memory, DEFAULT_RAM_BASE, DEFAULT_RAM_SIZE};
pub use syscall::{handle_ecall, SyscallEffect, SYS_EXIT, SYS_WRITE};

use thiserror::Error;

/// ABI register numbers used by the syscall convention.
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
    pub const S4: u8 = 20;
    pub const S5: u8 = 21;
    pub const S6: u8 = 22;
    pub const S7: u8 = 23;
    pub const T3: u8 = 28;
    pub const T4: u8 = 29;
    pub const T5: u8 = 30;
    pub const T6: u8 = 31;
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IsaError {
    #[error("illegal instruction 0x{0:08x}")]
    IllegalInstruction(u32),
    #[error("misaligned {width}-byte access at 0x{addr:08x}")]
    MisalignedAccess { addr: u32, width: u32 },
    #[error("access outside the loaded image at 0x{addr:08x}")]
    OutOfImageAccess { addr: u32 },
    #[error("unsupported syscall {0}")]
    UnsupportedSyscall(u32),
    #[error("breakpoint at 0x{0:08x}")]
    Breakpoint(u32),
    #[error("malformed image: {0}")]
    MalformedImage(String),
}
