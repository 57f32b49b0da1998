//! Program images: flat binaries and statically linked ELF32 executables.

use super::{IsaError, Memory, DEFAULT_RAM_BASE, DEFAULT_RAM_SIZE};

/// Default stack pointer: 16 bytes below the top of the default RAM window.
pub const DEFAULT_STACK_TOP: u32 = DEFAULT_RAM_BASE + DEFAULT_RAM_SIZE - 16;

const ELF_MAGIC: &[u8; 4] = b"\x7fELF";
const ELFCLASS32: u8 = 1;
const ELFDATA2LSB: u8 = 1;
const EM_RISCV: u16 = 243;
const ET_EXEC: u16 = 2;
const PT_LOAD: u32 = 1;
const EHDR_SIZE: usize = 52;
const PHDR_SIZE: usize = 32;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    pub base: u32,
    pub bytes: Vec<u8>,
}

impl Segment {
    pub fn end(&self) -> u64 {
        u64::from(self.base) + self.bytes.len() as u64
    }

    pub fn contains(&self, addr: u32) -> bool {
        addr >= self.base && u64::from(addr) < self.end()
    }
}

/// A loadable guest program.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Program {
    pub segments: Vec<Segment>,
    pub entry: u32,
    pub initial_sp: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageFormat {
    FlatBinary { base: u32, entry: u32 },
    Elf32,
}

impl Program {
    /// Builds a program, checking that segments do not overlap and that the
    /// entry point lies inside one of them.
    pub fn new(mut segments: Vec<Segment>, entry: u32, initial_sp: u32) -> Result<Self, IsaError> {
        segments.retain(|s| !s.bytes.is_empty());
        segments.sort_by_key(|s| s.base);
        for pair in segments.windows(2) {
            if pair[0].end() > u64::from(pair[1].base) {
                return Err(IsaError::MalformedImage(format!(
                    "segments at 0x{:08x} and 0x{:08x} overlap",
                    pair[0].base, pair[1].base
                )));
            }
        }
        if segments.iter().any(|s| s.end() > 1 << 32) {
            return Err(IsaError::MalformedImage(
                "segment extends past the 32-bit address space".into(),
            ));
        }
        if !segments.iter().any(|s| s.contains(entry)) {
            return Err(IsaError::MalformedImage(format!(
                "entry 0x{entry:08x} is not inside a loadable segment"
            )));
        }
        Ok(Self {
            segments,
            entry,
            initial_sp,
        })
    }

    /// Guest memory with the RAM window and every segment mapped.
    pub fn memory(&self, ram_base: u32, ram_size: u32) -> Memory {
        let mut mem = Memory::new(ram_base, ram_size);
        for seg in &self.segments {
            mem.map_segment(seg.base, &seg.bytes);
        }
        mem
    }

    /// Contiguous image from the lowest to the highest segment byte, with
    /// gaps zero-filled. Returns the image and its base address.
    pub fn flat_image(&self) -> (u32, Vec<u8>) {
        let Some(first) = self.segments.first() else {
            return (self.entry, Vec::new());
        };
        let base = first.base;
        let end = self.segments.iter().map(Segment::end).max().unwrap_or(0);
        let mut image = vec![0u8; (end - u64::from(base)) as usize];
        for seg in &self.segments {
            let off = (seg.base - base) as usize;
            image[off..off + seg.bytes.len()].copy_from_slice(&seg.bytes);
        }
        (base, image)
    }
}

/// Parses a program image.
pub fn load_program(bytes: &[u8], format: ImageFormat) -> Result<Program, IsaError> {
    match format {
        ImageFormat::FlatBinary { base, entry } => Program::new(
            vec![Segment {
                base,
                bytes: bytes.to_vec(),
            }],
            entry,
            DEFAULT_STACK_TOP,
        ),
        ImageFormat::Elf32 => load_elf32(bytes),
    }
}

fn malformed(msg: impl Into<String>) -> IsaError {
    IsaError::MalformedImage(msg.into())
}

fn u16_at(b: &[u8], off: usize) -> Result<u16, IsaError> {
    b.get(off..off + 2)
        .map(|s| u16::from_le_bytes([s[0], s[1]]))
        .ok_or_else(|| malformed("truncated header"))
}

fn u32_at(b: &[u8], off: usize) -> Result<u32, IsaError> {
    b.get(off..off + 4)
        .map(|s| u32::from_le_bytes([s[0], s[1], s[2], s[3]]))
        .ok_or_else(|| malformed("truncated header"))
}

fn load_elf32(bytes: &[u8]) -> Result<Program, IsaError> {
    if bytes.len() < 16 || &bytes[..4] != ELF_MAGIC {
        return Err(malformed("bad ELF magic"));
    }
    if bytes[4] != ELFCLASS32 {
        return Err(malformed(format!(
            "unsupported ELF class {} (need 32-bit)",
            bytes[4]
        )));
    }
    if bytes[5] != ELFDATA2LSB {
        return Err(malformed("ELF image is not little-endian"));
    }
    if bytes.len() < EHDR_SIZE {
        return Err(malformed("truncated ELF header"));
    }
    let e_type = u16_at(bytes, 16)?;
    let machine = u16_at(bytes, 18)?;
    if machine != EM_RISCV {
        return Err(malformed(format!("ELF machine {machine} is not RISC-V")));
    }
    if e_type != ET_EXEC {
        return Err(malformed(format!(
            "ELF type {e_type} is not a static executable"
        )));
    }
    let entry = u32_at(bytes, 24)?;
    let phoff = u32_at(bytes, 28)? as usize;
    let phentsize = usize::from(u16_at(bytes, 42)?);
    let phnum = usize::from(u16_at(bytes, 44)?);
    if phnum > 0 && phentsize < PHDR_SIZE {
        return Err(malformed("program header entries too small"));
    }

    let mut segments = Vec::new();
    for i in 0..phnum {
        let ph = phoff
            .checked_add(i * phentsize)
            .ok_or_else(|| malformed("program header offset overflow"))?;
        if ph + PHDR_SIZE > bytes.len() {
            return Err(malformed("truncated program header table"));
        }
        if u32_at(bytes, ph)? != PT_LOAD {
            continue;
        }
        let offset = u32_at(bytes, ph + 4)? as usize;
        let vaddr = u32_at(bytes, ph + 8)?;
        let filesz = u32_at(bytes, ph + 16)? as usize;
        let memsz = u32_at(bytes, ph + 20)? as usize;
        if memsz < filesz {
            return Err(malformed("segment memsz smaller than filesz"));
        }
        let payload = offset
            .checked_add(filesz)
            .and_then(|end| bytes.get(offset..end))
            .ok_or_else(|| malformed(format!("truncated segment at 0x{vaddr:08x}")))?;
        let mut data = payload.to_vec();
        data.resize(memsz, 0);
        segments.push(Segment {
            base: vaddr,
            bytes: data,
        });
    }
    if segments.is_empty() {
        return Err(malformed("no loadable segments"));
    }
    Program::new(segments, entry, DEFAULT_STACK_TOP)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_binary_is_one_segment() {
        let p = load_program(
            &[0x13, 0, 0, 0],
            ImageFormat::FlatBinary {
                base: 0x8000_0000,
                entry: 0x8000_0000,
            },
        )
        .unwrap();
        assert_eq!(p.segments.len(), 1);
        assert_eq!(p.entry, 0x8000_0000);
        assert_eq!(p.segments[0].bytes, vec![0x13, 0, 0, 0]);
    }

    #[test]
    fn flat_binary_entry_outside() {
        assert!(load_program(
            &[0; 4],
            ImageFormat::FlatBinary {
                base: 0x8000_0000,
                entry: 0x9000_0000
            }
        )
        .is_err());
    }

    #[test]
    fn bad_magic_and_class() {
        assert!(matches!(
            load_program(b"not an elf at all", ImageFormat::Elf32),
            Err(IsaError::MalformedImage(_))
        ));
        let mut hdr = vec![0u8; 64];
        hdr[..4].copy_from_slice(ELF_MAGIC);
        hdr[4] = 2;
        hdr[5] = 1;
        let err = load_program(&hdr, ImageFormat::Elf32).unwrap_err();
        assert!(err.to_string().contains("class"), "{err}");
    }

    #[test]
    fn overlapping_segments_rejected() {
        let segs = vec![
            Segment {
                base: 0x100,
                bytes: vec![0; 8],
            },
            Segment {
                base: 0x104,
                bytes: vec![0; 8],
            },
        ];
        assert!(Program::new(segs, 0x100, 0).is_err());
    }

    #[test]
    fn flat_image_fills_gaps() {
        let p = Program::new(
            vec![
                Segment {
                    base: 0x10,
                    bytes: vec![1, 2],
                },
                Segment {
                    base: 0x14,
                    bytes: vec![3],
                },
            ],
            0x10,
            0,
        )
        .unwrap();
        assert_eq!(p.flat_image(), (0x10, vec![1, 2, 0, 0, 3]));
    }
}
