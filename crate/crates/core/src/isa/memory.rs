use std::collections::HashMap;

use super::IsaError;

const PAGE_BITS: u32 = 12;
const PAGE_SIZE: usize = 1 << PAGE_BITS;

pub const DEFAULT_RAM_BASE: u32 = 0x8000_0000;
pub const DEFAULT_RAM_SIZE: u32 = 16 * 1024 * 1024;

/// Sparse little-endian guest memory.
///
/// An address is mapped if it lies inside the RAM window or inside one of
/// the loaded segments. Unmapped accesses fail with
/// [`IsaError::OutOfImageAccess`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Memory {
    ram_base: u32,
    ram_size: u32,
    extra: Vec<(u32, u32)>,
    pages: HashMap<u32, Box<[u8; PAGE_SIZE]>>,
}

impl Memory {
    pub fn new(ram_base: u32, ram_size: u32) -> Self {
        Self {
            ram_base,
            ram_size,
            extra: Vec::new(),
            pages: HashMap::new(),
        }
    }

    pub fn ram_window(&self) -> (u32, u32) {
        (self.ram_base, self.ram_size)
    }

    fn in_ram(&self, addr: u32) -> bool {
        addr.wrapping_sub(self.ram_base) < self.ram_size
    }

    /// True if every byte of `[addr, addr + len)` is mapped.
    pub fn is_mapped(&self, addr: u32, len: u32) -> bool {
        (0..len).all(|i| {
            let a = addr.wrapping_add(i);
            self.in_ram(a)
                || self
                    .extra
                    .iter()
                    .any(|&(base, size)| a.wrapping_sub(base) < size)
        })
    }

    /// Copies `bytes` to `base`, extending the mapped region to cover them.
    pub fn map_segment(&mut self, base: u32, bytes: &[u8]) {
        let len = bytes.len() as u32;
        if len > 0 && !self.is_mapped(base, len) {
            self.extra.push((base, len));
        }
        for (i, &b) in bytes.iter().enumerate() {
            self.write_byte(base.wrapping_add(i as u32), b);
        }
    }

    /// Maps a zero-filled region (e.g. `.bss` beyond file size).
    pub fn map_zeroed(&mut self, base: u32, len: u32) {
        if len > 0 && !self.is_mapped(base, len) {
            self.extra.push((base, len));
        }
    }

    fn read_byte(&self, addr: u32) -> u8 {
        self.pages
            .get(&(addr >> PAGE_BITS))
            .map_or(0, |p| p[(addr as usize) & (PAGE_SIZE - 1)])
    }

    fn write_byte(&mut self, addr: u32, value: u8) {
        let page = self
            .pages
            .entry(addr >> PAGE_BITS)
            .or_insert_with(|| Box::new([0; PAGE_SIZE]));
        page[(addr as usize) & (PAGE_SIZE - 1)] = value;
    }

    /// Checks alignment and mapping for an access of `width` bytes.
    pub fn check(&self, addr: u32, width: u32) -> Result<(), IsaError> {
        if !addr.is_multiple_of(width) {
            return Err(IsaError::MisalignedAccess { addr, width });
        }
        if !self.is_mapped(addr, width) {
            return Err(IsaError::OutOfImageAccess { addr });
        }
        Ok(())
    }

    /// Reads `width` (1, 2 or 4) bytes, zero-extended.
    pub fn load(&self, addr: u32, width: u32) -> Result<u32, IsaError> {
        self.check(addr, width)?;
        Ok(self.load_unchecked(addr, width))
    }

    pub(crate) fn load_unchecked(&self, addr: u32, width: u32) -> u32 {
        (0..width).fold(0, |acc, i| {
            acc | (u32::from(self.read_byte(addr.wrapping_add(i))) << (8 * i))
        })
    }

    pub fn store(&mut self, addr: u32, width: u32, value: u32) -> Result<(), IsaError> {
        self.check(addr, width)?;
        for i in 0..width {
            self.write_byte(addr.wrapping_add(i), (value >> (8 * i)) as u8);
        }
        Ok(())
    }

    pub fn fetch(&self, pc: u32) -> Result<u32, IsaError> {
        self.load(pc, 4)
    }

    pub fn read_bytes(&self, addr: u32, len: u32) -> Result<Vec<u8>, IsaError> {
        if !self.is_mapped(addr, len) {
            return Err(IsaError::OutOfImageAccess { addr });
        }
        Ok((0..len)
            .map(|i| self.read_byte(addr.wrapping_add(i)))
            .collect())
    }

    pub fn read_word_unchecked(&self, addr: u32) -> u32 {
        self.load_unchecked(addr, 4)
    }
}
