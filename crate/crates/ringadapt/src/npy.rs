//! Minimal NPY v1.0 and ZIP-of-NPY (NPZ) support for uint8 arrays.
//!
//! The writer produces byte-deterministic output: fixed header padding,
//! stored (uncompressed) ZIP members, and zeroed timestamps, so identical
//! datasets hash identically. The reader additionally understands
//! deflate-compressed members so genuine archives load too.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};

/// A parsed uint8 NPY array.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NpyArray {
    pub shape: Vec<usize>,
    pub data: Vec<u8>,
}

impl NpyArray {
    pub fn new(shape: Vec<usize>, data: Vec<u8>) -> Result<Self> {
        let count: usize = shape.iter().product();
        if count != data.len() {
            return Err(Error::NpyHeader(format!(
                "shape {shape:?} implies {count} elements, data has {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }
}

const MAGIC: &[u8; 6] = b"\x93NUMPY";

/// Serializes a uint8 array in NPY v1.0 layout with the conventional
/// 64-byte-aligned, space-padded, newline-terminated header.
pub fn format_npy(array: &NpyArray) -> Vec<u8> {
    let shape_txt = match array.shape.len() {
        1 => format!("({},)", array.shape[0]),
        _ => {
            let dims: Vec<String> = array.shape.iter().map(|d| d.to_string()).collect();
            format!("({})", dims.join(", "))
        }
    };
    let dict = format!("{{'descr': '|u1', 'fortran_order': False, 'shape': {shape_txt}, }}");
    let unpadded = MAGIC.len() + 2 + 2 + dict.len() + 1; // version + header len + newline
    let padding = (64 - unpadded % 64) % 64;
    let header_len = dict.len() + padding + 1;

    let mut out = Vec::with_capacity(MAGIC.len() + 4 + header_len + array.data.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&[1, 0]);
    out.extend_from_slice(&(header_len as u16).to_le_bytes());
    out.extend_from_slice(dict.as_bytes());
    out.extend(std::iter::repeat(b' ').take(padding));
    out.push(b'\n');
    out.extend_from_slice(&array.data);
    out
}

/// Parses an NPY v1.0 (or v2.0) uint8 array, little-endian C order.
pub fn parse_npy(bytes: &[u8]) -> Result<NpyArray> {
    if bytes.len() < 10 || &bytes[..6] != MAGIC {
        return Err(Error::NpyMagic);
    }
    let (major, minor) = (bytes[6], bytes[7]);
    let (header_len, header_start) = match (major, minor) {
        (1, 0) => (u16::from_le_bytes([bytes[8], bytes[9]]) as usize, 10),
        (2, 0) => {
            if bytes.len() < 12 {
                return Err(Error::NpyHeader("truncated v2 header length".into()));
            }
            (
                u32::from_le_bytes([bytes[8], bytes[9], bytes[10], bytes[11]]) as usize,
                12,
            )
        }
        (maj, min) => return Err(Error::NpyVersion(maj, min)),
    };
    let data_start = header_start + header_len;
    if bytes.len() < data_start {
        return Err(Error::NpyHeader("header extends past end of file".into()));
    }
    let header = std::str::from_utf8(&bytes[header_start..data_start])
        .map_err(|_| Error::NpyHeader("header is not ASCII".into()))?;

    let descr = extract_field(header, "descr")?;
    let descr = descr.trim_matches(|c| c == '\'' || c == '"');
    if !matches!(descr, "|u1" | "<u1" | "u1" | ">u1") {
        return Err(Error::NpyDtype(descr.to_string()));
    }
    let fortran = extract_field(header, "fortran_order")?;
    match fortran {
        "False" => {}
        "True" => {
            return Err(Error::NpyHeader(
                "fortran_order arrays are not supported".into(),
            ))
        }
        other => return Err(Error::NpyHeader(format!("bad fortran_order {other:?}"))),
    }
    let shape_txt = extract_field(header, "shape")?;
    let shape = parse_shape(shape_txt)?;

    let count: usize = shape.iter().product();
    let data = bytes[data_start..]
        .get(..count)
        .ok_or_else(|| {
            Error::NpyHeader(format!(
                "shape {shape:?} needs {count} bytes, file has {}",
                bytes.len() - data_start
            ))
        })?
        .to_vec();
    Ok(NpyArray { shape, data })
}

/// Pulls `'key': value` out of the header dict literal. Values are either
/// quoted strings, booleans, or parenthesized tuples; none of them nest, so
/// scanning for the closing delimiter is enough.
fn extract_field<'a>(header: &'a str, key: &str) -> Result<&'a str> {
    let quoted = format!("'{key}':");
    let start = header
        .find(&quoted)
        .ok_or_else(|| Error::NpyHeader(format!("missing {key:?} field")))?
        + quoted.len();
    let rest = header[start..].trim_start();
    let end = if rest.starts_with('(') {
        rest.find(')')
            .map(|i| i + 1)
            .ok_or_else(|| Error::NpyHeader("unterminated shape tuple".into()))?
    } else {
        rest.find([',', '}'])
            .ok_or_else(|| Error::NpyHeader(format!("unterminated {key:?} value")))?
    };
    Ok(rest[..end].trim())
}

fn parse_shape(text: &str) -> Result<Vec<usize>> {
    let inner = text
        .strip_prefix('(')
        .and_then(|t| t.strip_suffix(')'))
        .ok_or_else(|| Error::NpyHeader(format!("bad shape {text:?}")))?;
    inner
        .split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<usize>()
                .map_err(|_| Error::NpyHeader(format!("bad shape dimension {t:?}")))
        })
        .collect()
}

// --- ZIP container ---------------------------------------------------------

fn crc32(data: &[u8]) -> u32 {
    // Standard IEEE CRC-32, bitwise; fast enough for dataset-sized buffers.
    let mut table = [0u32; 256];
    for (i, slot) in table.iter_mut().enumerate() {
        let mut c = i as u32;
        for _ in 0..8 {
            c = if c & 1 != 0 { 0xEDB8_8320 ^ (c >> 1) } else { c >> 1 };
        }
        *slot = c;
    }
    let mut crc = 0xFFFF_FFFFu32;
    for &b in data {
        crc = table[((crc ^ b as u32) & 0xFF) as usize] ^ (crc >> 8);
    }
    crc ^ 0xFFFF_FFFF
}

/// Writes entries as a stored (method 0) ZIP archive with zeroed DOS
/// timestamps: output bytes depend only on entry names and contents.
pub fn write_zip_stored(path: &Path, entries: &[(String, Vec<u8>)]) -> Result<()> {
    let mut out: Vec<u8> = Vec::new();
    let mut central: Vec<u8> = Vec::new();
    let mut offsets = Vec::with_capacity(entries.len());

    for (name, data) in entries {
        let offset = out.len() as u32;
        offsets.push(offset);
        let crc = crc32(data);
        let name_bytes = name.as_bytes();

        out.extend_from_slice(&0x0403_4b50u32.to_le_bytes());
        out.extend_from_slice(&20u16.to_le_bytes()); // version needed
        out.extend_from_slice(&0u16.to_le_bytes()); // flags
        out.extend_from_slice(&0u16.to_le_bytes()); // method: stored
        out.extend_from_slice(&0u16.to_le_bytes()); // mod time
        out.extend_from_slice(&0x0021u16.to_le_bytes()); // mod date: 1980-01-01
        out.extend_from_slice(&crc.to_le_bytes());
        out.extend_from_slice(&(data.len() as u32).to_le_bytes());
        out.extend_from_slice(&(data.len() as u32).to_le_bytes());
        out.extend_from_slice(&(name_bytes.len() as u16).to_le_bytes());
        out.extend_from_slice(&0u16.to_le_bytes()); // extra len
        out.extend_from_slice(name_bytes);
        out.extend_from_slice(data);
    }

    for ((name, data), offset) in entries.iter().zip(&offsets) {
        let crc = crc32(data);
        let name_bytes = name.as_bytes();
        central.extend_from_slice(&0x0201_4b50u32.to_le_bytes());
        central.extend_from_slice(&20u16.to_le_bytes()); // version made by
        central.extend_from_slice(&20u16.to_le_bytes()); // version needed
        central.extend_from_slice(&0u16.to_le_bytes()); // flags
        central.extend_from_slice(&0u16.to_le_bytes()); // method
        central.extend_from_slice(&0u16.to_le_bytes()); // mod time
        central.extend_from_slice(&0x0021u16.to_le_bytes()); // mod date
        central.extend_from_slice(&crc.to_le_bytes());
        central.extend_from_slice(&(data.len() as u32).to_le_bytes());
        central.extend_from_slice(&(data.len() as u32).to_le_bytes());
        central.extend_from_slice(&(name_bytes.len() as u16).to_le_bytes());
        central.extend_from_slice(&0u16.to_le_bytes()); // extra
        central.extend_from_slice(&0u16.to_le_bytes()); // comment
        central.extend_from_slice(&0u16.to_le_bytes()); // disk
        central.extend_from_slice(&0u16.to_le_bytes()); // internal attrs
        central.extend_from_slice(&0u32.to_le_bytes()); // external attrs
        central.extend_from_slice(&offset.to_le_bytes());
        central.extend_from_slice(name_bytes);
    }

    let central_offset = out.len() as u32;
    out.extend_from_slice(&central);
    out.extend_from_slice(&0x0605_4b50u32.to_le_bytes());
    out.extend_from_slice(&0u16.to_le_bytes()); // disk
    out.extend_from_slice(&0u16.to_le_bytes()); // central dir disk
    out.extend_from_slice(&(entries.len() as u16).to_le_bytes());
    out.extend_from_slice(&(entries.len() as u16).to_le_bytes());
    out.extend_from_slice(&(central.len() as u32).to_le_bytes());
    out.extend_from_slice(&central_offset.to_le_bytes());
    out.extend_from_slice(&0u16.to_le_bytes()); // comment len

    std::fs::write(path, out)?;
    Ok(())
}

/// Reads all members of a ZIP archive (stored or deflate), keyed by entry
/// name, using the central directory as the source of truth.
pub fn read_zip(path: &Path) -> Result<BTreeMap<String, Vec<u8>>> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    read_zip_bytes(&bytes)
}

pub fn read_zip_bytes(bytes: &[u8]) -> Result<BTreeMap<String, Vec<u8>>> {
    const EOCD_SIG: u32 = 0x0605_4b50;
    const EOCD_MIN: usize = 22;
    if bytes.len() < EOCD_MIN {
        return Err(Error::Zip("file too small".into()));
    }
    let scan_floor = bytes.len().saturating_sub(EOCD_MIN + 65_535);
    let eocd = (scan_floor..=bytes.len() - EOCD_MIN)
        .rev()
        .find(|&i| u32::from_le_bytes([bytes[i], bytes[i + 1], bytes[i + 2], bytes[i + 3]]) == EOCD_SIG)
        .ok_or_else(|| Error::Zip("end-of-central-directory record not found".into()))?;
    let count = u16::from_le_bytes([bytes[eocd + 10], bytes[eocd + 11]]) as usize;
    let cd_offset =
        u32::from_le_bytes([bytes[eocd + 16], bytes[eocd + 17], bytes[eocd + 18], bytes[eocd + 19]])
            as usize;

    let mut entries = BTreeMap::new();
    let mut pos = cd_offset;
    for _ in 0..count {
        let header = bytes
            .get(pos..pos + 46)
            .ok_or_else(|| Error::Zip("truncated central directory".into()))?;
        if u32::from_le_bytes([header[0], header[1], header[2], header[3]]) != 0x0201_4b50 {
            return Err(Error::Zip("bad central directory signature".into()));
        }
        let method = u16::from_le_bytes([header[10], header[11]]);
        let comp_size = u32::from_le_bytes([header[20], header[21], header[22], header[23]]) as usize;
        let raw_size = u32::from_le_bytes([header[24], header[25], header[26], header[27]]) as usize;
        let name_len = u16::from_le_bytes([header[28], header[29]]) as usize;
        let extra_len = u16::from_le_bytes([header[30], header[31]]) as usize;
        let comment_len = u16::from_le_bytes([header[32], header[33]]) as usize;
        let local_offset =
            u32::from_le_bytes([header[42], header[43], header[44], header[45]]) as usize;
        let name = std::str::from_utf8(
            bytes
                .get(pos + 46..pos + 46 + name_len)
                .ok_or_else(|| Error::Zip("truncated entry name".into()))?,
        )
        .map_err(|_| Error::Zip("entry name is not UTF-8".into()))?
        .to_string();
        pos += 46 + name_len + extra_len + comment_len;

        let local = bytes
            .get(local_offset..local_offset + 30)
            .ok_or_else(|| Error::Zip("truncated local header".into()))?;
        if u32::from_le_bytes([local[0], local[1], local[2], local[3]]) != 0x0403_4b50 {
            return Err(Error::Zip("bad local header signature".into()));
        }
        let l_name = u16::from_le_bytes([local[26], local[27]]) as usize;
        let l_extra = u16::from_le_bytes([local[28], local[29]]) as usize;
        let data_start = local_offset + 30 + l_name + l_extra;
        let raw = bytes
            .get(data_start..data_start + comp_size)
            .ok_or_else(|| Error::Zip("truncated entry data".into()))?;

        let data = match method {
            0 => raw.to_vec(),
            8 => miniz_oxide::inflate::decompress_to_vec_with_limit(raw, raw_size.max(1))
                .map_err(|e| Error::Zip(format!("deflate error in {name:?}: {e:?}")))?,
            other => {
                return Err(Error::Zip(format!(
                    "unsupported compression method {other} for {name:?}"
                )))
            }
        };
        if data.len() != raw_size {
            return Err(Error::Zip(format!(
                "entry {name:?} decompressed to {} bytes, expected {raw_size}",
                data.len()
            )));
        }
        entries.insert(name, data);
    }
    Ok(entries)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn npy_round_trip_3d() {
        let arr = NpyArray::new(vec![3, 2, 2], (0..12).collect()).unwrap();
        let bytes = format_npy(&arr);
        assert_eq!(bytes.len() % 64, 12 % 64); // header block is 64-aligned
        let back = parse_npy(&bytes).unwrap();
        assert_eq!(back, arr);
    }

    #[test]
    fn npy_round_trip_1d_and_empty() {
        for arr in [
            NpyArray::new(vec![5], vec![9, 8, 7, 6, 5]).unwrap(),
            NpyArray::new(vec![0], vec![]).unwrap(),
            NpyArray::new(vec![0, 28, 28], vec![]).unwrap(),
        ] {
            let back = parse_npy(&format_npy(&arr)).unwrap();
            assert_eq!(back, arr);
        }
    }

    #[test]
    fn npy_header_is_python_compatible_layout() {
        let arr = NpyArray::new(vec![2, 3], vec![1, 2, 3, 4, 5, 6]).unwrap();
        let bytes = format_npy(&arr);
        assert_eq!(&bytes[..6], b"\x93NUMPY");
        assert_eq!(&bytes[6..8], &[1, 0]);
        let hlen = u16::from_le_bytes([bytes[8], bytes[9]]) as usize;
        assert_eq!((10 + hlen) % 64, 0);
        let header = std::str::from_utf8(&bytes[10..10 + hlen]).unwrap();
        assert!(header.starts_with("{'descr': '|u1', 'fortran_order': False, 'shape': (2, 3), }"));
        assert!(header.ends_with('\n'));
    }

    #[test]
    fn npy_rejects_bad_magic() {
        assert!(matches!(parse_npy(b"NOPE______"), Err(Error::NpyMagic)));
    }

    #[test]
    fn npy_rejects_unknown_version() {
        let arr = NpyArray::new(vec![1], vec![0]).unwrap();
        let mut bytes = format_npy(&arr);
        bytes[6] = 3;
        assert!(matches!(parse_npy(&bytes), Err(Error::NpyVersion(3, 0))));
    }

    #[test]
    fn npy_rejects_wrong_dtype() {
        let text = "{'descr': '<f8', 'fortran_order': False, 'shape': (1,), }";
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"\x93NUMPY\x01\x00");
        bytes.extend_from_slice(&(text.len() as u16 + 1).to_le_bytes());
        bytes.extend_from_slice(text.as_bytes());
        bytes.push(b'\n');
        bytes.extend_from_slice(&[0u8; 8]);
        assert!(matches!(parse_npy(&bytes), Err(Error::NpyDtype(_))));
    }

    #[test]
    fn npy_rejects_short_data() {
        let arr = NpyArray::new(vec![4], vec![1, 2, 3, 4]).unwrap();
        let bytes = format_npy(&arr);
        assert!(matches!(
            parse_npy(&bytes[..bytes.len() - 2]),
            Err(Error::NpyHeader(_))
        ));
    }

    #[test]
    fn crc32_known_vector() {
        assert_eq!(crc32(b"123456789"), 0xCBF4_3926);
        assert_eq!(crc32(b""), 0);
    }

    #[test]
    fn zip_round_trip_and_determinism() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.npz");
        let entries = vec![
            ("alpha.npy".to_string(), vec![1u8, 2, 3]),
            ("beta.npy".to_string(), vec![]),
            ("gamma.npy".to_string(), (0..255).collect()),
        ];
        write_zip_stored(&path, &entries).unwrap();
        let first = std::fs::read(&path).unwrap();
        write_zip_stored(&path, &entries).unwrap();
        let second = std::fs::read(&path).unwrap();
        assert_eq!(first, second, "writer is not byte-deterministic");

        let back = read_zip(&path).unwrap();
        assert_eq!(back.len(), 3);
        for (name, data) in &entries {
            assert_eq!(back.get(name.as_str()).unwrap(), data);
        }
    }

    #[test]
    fn zip_reads_deflate_members() {
        // Hand-build an archive whose single member is deflate-compressed.
        let payload: Vec<u8> = std::iter::repeat(b"pattern".iter().copied())
            .take(100)
            .flatten()
            .collect();
        let compressed = miniz_oxide::deflate::compress_to_vec(&payload, 6);
        let name = b"data.npy";
        let crc = crc32(&payload);

        let mut out = Vec::new();
        out.extend_from_slice(&0x0403_4b50u32.to_le_bytes());
        out.extend_from_slice(&20u16.to_le_bytes());
        out.extend_from_slice(&0u16.to_le_bytes());
        out.extend_from_slice(&8u16.to_le_bytes());
        out.extend_from_slice(&0u32.to_le_bytes()); // time+date
        out.extend_from_slice(&crc.to_le_bytes());
        out.extend_from_slice(&(compressed.len() as u32).to_le_bytes());
        out.extend_from_slice(&(payload.len() as u32).to_le_bytes());
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(&0u16.to_le_bytes());
        out.extend_from_slice(name);
        out.extend_from_slice(&compressed);

        let cd_offset = out.len() as u32;
        out.extend_from_slice(&0x0201_4b50u32.to_le_bytes());
        out.extend_from_slice(&20u16.to_le_bytes());
        out.extend_from_slice(&20u16.to_le_bytes());
        out.extend_from_slice(&0u16.to_le_bytes());
        out.extend_from_slice(&8u16.to_le_bytes());
        out.extend_from_slice(&0u32.to_le_bytes()); // time+date
        out.extend_from_slice(&crc.to_le_bytes());
        out.extend_from_slice(&(compressed.len() as u32).to_le_bytes());
        out.extend_from_slice(&(payload.len() as u32).to_le_bytes());
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(&[0u8; 12]);
        out.extend_from_slice(&0u32.to_le_bytes()); // local offset
        out.extend_from_slice(name);
        let cd_len = out.len() as u32 - cd_offset;
        out.extend_from_slice(&0x0605_4b50u32.to_le_bytes());
        out.extend_from_slice(&[0u8; 4]);
        out.extend_from_slice(&1u16.to_le_bytes());
        out.extend_from_slice(&1u16.to_le_bytes());
        out.extend_from_slice(&cd_len.to_le_bytes());
        out.extend_from_slice(&cd_offset.to_le_bytes());
        out.extend_from_slice(&0u16.to_le_bytes());

        let entries = read_zip_bytes(&out).unwrap();
        assert_eq!(entries.get("data.npy").unwrap(), &payload);
    }

    #[test]
    fn zip_rejects_garbage() {
        assert!(read_zip_bytes(b"not a zip at all").is_err());
        assert!(read_zip_bytes(&[0u8; 100]).is_err());
    }
}
