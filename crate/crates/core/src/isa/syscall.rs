use super::{reg, ArchState, IsaError};

pub const SYS_WRITE: u32 = 64;
pub const SYS_EXIT: u32 = 93;

/// Host-visible outcome of an `ecall`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SyscallEffect {
    Exit(i32),
    Write { fd: u32, bytes: Vec<u8> },
}

/// Services the `ecall` at the current pc using the Linux RISC-V convention
/// (number in a7, arguments in a0..a2). Only `exit` and `write` exist.
pub fn handle_ecall(state: &mut ArchState) -> Result<SyscallEffect, IsaError> {
    let number = state.reg(reg::A7);
    match number {
        SYS_EXIT => Ok(SyscallEffect::Exit(state.reg(reg::A0) as i32)),
        SYS_WRITE => {
            let fd = state.reg(reg::A0);
            let len = state.reg(reg::A2);
            let bytes = state.mem.read_bytes(state.reg(reg::A1), len)?;
            state.set_reg(reg::A0, len);
            Ok(SyscallEffect::Write { fd, bytes })
        }
        n => Err(IsaError::UnsupportedSyscall(n)),
    }
}
