//! Program image loading: flat binaries and ELF32 little-endian
//! executables.
//!
//! Flat binaries load at the instruction-bank base. ELF images place
//! each PT_LOAD segment at its physical address, which must fall inside
//! the memory banks; the entry point comes from the header. Either way
//! the boot ROM receives a jump-to-entry stub.

use std::path::Path;

use crate::soc::Soc;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageFormat {
    Flat,
    Elf,
    /// Decide by the ELF magic.
    Auto,
}

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("cannot read image: {0}")]
    Io(#[from] std::io::Error),
    #[error("not an ELF file")]
    BadMagic,
    #[error("unsupported ELF: {0}")]
    Unsupported(String),
    #[error("malformed ELF: {0}")]
    Malformed(String),
    #[error("segment [{base:#010x}, +{len:#x}) outside the memory banks")]
    SegmentUnmapped { base: u32, len: u32 },
}

/// Load an image file into the SoC and return the entry point.
pub fn load_image(soc: &mut Soc, path: &Path, format: ImageFormat) -> Result<u32, LoadError> {
    let bytes = std::fs::read(path)?;
    load_bytes(soc, &bytes, format)
}

/// Load an in-memory image and return the entry point.
pub fn load_bytes(soc: &mut Soc, bytes: &[u8], format: ImageFormat) -> Result<u32, LoadError> {
    let is_elf = bytes.len() >= 4 && bytes[..4] == [0x7F, b'E', b'L', b'F'];
    match format {
        ImageFormat::Flat => load_flat(soc, bytes),
        ImageFormat::Elf => load_elf(soc, bytes),
        ImageFormat::Auto if is_elf => load_elf(soc, bytes),
        ImageFormat::Auto => load_flat(soc, bytes),
    }
}

fn load_flat(soc: &mut Soc, bytes: &[u8]) -> Result<u32, LoadError> {
    let base = soc.cfg.instr_base;
    soc.poke_bytes(base, bytes)
        .map_err(|_| LoadError::SegmentUnmapped { base, len: bytes.len() as u32 })?;
    soc.install_boot_stub(base);
    Ok(base)
}

fn rd16(b: &[u8], off: usize) -> Result<u16, LoadError> {
    b.get(off..off + 2)
        .map(|s| u16::from_le_bytes(s.try_into().unwrap()))
        .ok_or_else(|| LoadError::Malformed("truncated header".into()))
}

fn rd32(b: &[u8], off: usize) -> Result<u32, LoadError> {
    b.get(off..off + 4)
        .map(|s| u32::from_le_bytes(s.try_into().unwrap()))
        .ok_or_else(|| LoadError::Malformed("truncated header".into()))
}

fn load_elf(soc: &mut Soc, bytes: &[u8]) -> Result<u32, LoadError> {
    if bytes.len() < 52 || bytes[..4] != [0x7F, b'E', b'L', b'F'] {
        return Err(LoadError::BadMagic);
    }
    if bytes[4] != 1 {
        return Err(LoadError::Unsupported("only ELF32 is supported".into()));
    }
    if bytes[5] != 1 {
        return Err(LoadError::Unsupported("only little-endian is supported".into()));
    }
    let machine = rd16(bytes, 18)?;
    if machine != 0xF3 {
        return Err(LoadError::Unsupported(format!("machine {machine:#x} is not RISC-V")));
    }
    let entry = rd32(bytes, 24)?;
    let phoff = rd32(bytes, 28)? as usize;
    let phentsize = rd16(bytes, 42)? as usize;
    let phnum = rd16(bytes, 44)? as usize;
    if phentsize < 32 {
        return Err(LoadError::Malformed("program header entry too small".into()));
    }

    const PT_LOAD: u32 = 1;
    for i in 0..phnum {
        let ph = phoff + i * phentsize;
        let p_type = rd32(bytes, ph)?;
        if p_type != PT_LOAD {
            continue;
        }
        let p_offset = rd32(bytes, ph + 4)? as usize;
        let p_vaddr = rd32(bytes, ph + 8)?;
        let p_paddr = rd32(bytes, ph + 12)?;
        let p_filesz = rd32(bytes, ph + 16)? as usize;
        let p_memsz = rd32(bytes, ph + 20)? as usize;
        if p_memsz == 0 {
            continue;
        }
        let base = if p_paddr != 0 { p_paddr } else { p_vaddr };
        let data = bytes
            .get(p_offset..p_offset + p_filesz)
            .ok_or_else(|| LoadError::Malformed("segment data out of file bounds".into()))?;
        let mut image = data.to_vec();
        image.resize(p_memsz, 0);
        soc.poke_bytes(base, &image)
            .map_err(|_| LoadError::SegmentUnmapped { base, len: p_memsz as u32 })?;
    }
    soc.install_boot_stub(entry);
    Ok(entry)
}

/// Build a minimal ELF32 executable from (address, bytes) segments.
/// Used by tests and kept public for tooling.
pub fn build_elf(entry: u32, segments: &[(u32, Vec<u8>)]) -> Vec<u8> {
    let ehsize = 52u32;
    let phentsize = 32u32;
    let phnum = segments.len() as u32;
    let mut out = Vec::new();
    out.extend([0x7F, b'E', b'L', b'F', 1, 1, 1, 0]);
    out.extend([0u8; 8]);
    out.extend(2u16.to_le_bytes()); // ET_EXEC
    out.extend(0xF3u16.to_le_bytes()); // EM_RISCV
    out.extend(1u32.to_le_bytes());
    out.extend(entry.to_le_bytes());
    out.extend(ehsize.to_le_bytes()); // e_phoff
    out.extend(0u32.to_le_bytes()); // e_shoff
    out.extend(0u32.to_le_bytes()); // e_flags
    out.extend((ehsize as u16).to_le_bytes());
    out.extend((phentsize as u16).to_le_bytes());
    out.extend((phnum as u16).to_le_bytes());
    out.extend([0u8; 6]); // shentsize/shnum/shstrndx
    let mut data_off = ehsize + phentsize * phnum;
    for (addr, data) in segments {
        out.extend(1u32.to_le_bytes()); // PT_LOAD
        out.extend(data_off.to_le_bytes());
        out.extend(addr.to_le_bytes()); // vaddr
        out.extend(addr.to_le_bytes()); // paddr
        out.extend((data.len() as u32).to_le_bytes());
        out.extend((data.len() as u32).to_le_bytes());
        out.extend(6u32.to_le_bytes()); // RW
        out.extend(4u32.to_le_bytes()); // align
        data_off += data.len() as u32;
    }
    for (_, data) in segments {
        out.extend(data);
    }
    out
}
