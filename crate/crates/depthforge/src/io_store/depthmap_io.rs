use std::path::Path;

use super::IoError;
use crate::camrig::ProjectionKind;
use crate::depthcodec::{DepthMap, MAX_BITS, MIN_BITS};

const FORMAT: &str = "DFDM";
const MAGIC: [u8; 4] = *b"DFDM";
const VERSION: u8 = 1;
pub const HEADER_SIZE: usize = 16;

/// Total file size for a square map: the fixed 16-byte header plus one
/// code byte per pixel.
pub fn depthmap_file_size(resolution: usize) -> usize {
    HEADER_SIZE + resolution * resolution
}

/// Serializes a depth map into the `DFDM` container:
///
/// ```text
/// offset  size  field
/// 0       4     magic "DFDM"
/// 4       1     version (1)
/// 5       1     log2(resolution)
/// 6       1     bits
/// 7       1     flags: bit 7 = projection (0 persp, 1 ortho),
///               bits 0..=4 = view_id
/// 8       4     near, f32 LE
/// 12      4     far, f32 LE
/// 16      n^2   depth codes, row-major u8
/// ```
pub fn encode_depthmap(dm: &DepthMap) -> Result<Vec<u8>, IoError> {
    if !dm.resolution.is_power_of_two() || dm.resolution < 2 || dm.resolution > (1 << 15) {
        return Err(IoError::BadHeader {
            format: FORMAT,
            reason: format!("resolution {} is not an in-range power of two", dm.resolution),
        });
    }
    if !(MIN_BITS..=MAX_BITS).contains(&dm.bits) {
        return Err(IoError::BadHeader {
            format: FORMAT,
            reason: format!("bits {} outside {MIN_BITS}..={MAX_BITS}", dm.bits),
        });
    }
    if dm.view_id >= 20 {
        return Err(IoError::BadHeader {
            format: FORMAT,
            reason: format!("view_id {} outside 0..20", dm.view_id),
        });
    }
    if dm.codes.len() != dm.resolution * dm.resolution {
        return Err(IoError::BadHeader {
            format: FORMAT,
            reason: "code buffer does not match resolution".into(),
        });
    }
    let max_code = dm.max_code();
    for &c in &dm.codes {
        if c as u16 > max_code {
            return Err(IoError::CodeOutOfRange { code: c, bits: dm.bits });
        }
    }
    let mut out = Vec::with_capacity(depthmap_file_size(dm.resolution));
    out.extend_from_slice(&MAGIC);
    out.push(VERSION);
    out.push(dm.resolution.trailing_zeros() as u8);
    out.push(dm.bits);
    out.push((dm.projection.as_u8() << 7) | dm.view_id);
    out.extend_from_slice(&dm.near.to_le_bytes());
    out.extend_from_slice(&dm.far.to_le_bytes());
    out.extend_from_slice(&dm.codes);
    Ok(out)
}

/// Parses a `DFDM` byte stream; the inverse of `encode_depthmap`.
pub fn decode_depthmap(bytes: &[u8]) -> Result<DepthMap, IoError> {
    if bytes.len() < 4 {
        return Err(IoError::Truncated {
            format: FORMAT,
            expected: HEADER_SIZE,
            found: bytes.len(),
        });
    }
    if bytes[..4] != MAGIC {
        return Err(IoError::BadMagic {
            format: FORMAT,
            found: [bytes[0], bytes[1], bytes[2], bytes[3]],
        });
    }
    if bytes.len() < HEADER_SIZE {
        return Err(IoError::Truncated {
            format: FORMAT,
            expected: HEADER_SIZE,
            found: bytes.len(),
        });
    }
    if bytes[4] != VERSION {
        return Err(IoError::BadVersion {
            format: FORMAT,
            found: bytes[4],
        });
    }
    let res_log2 = bytes[5];
    if res_log2 < 1 || res_log2 > 15 {
        return Err(IoError::BadHeader {
            format: FORMAT,
            reason: format!("resolution exponent {res_log2} outside 1..=15"),
        });
    }
    let resolution = 1usize << res_log2;
    let bits = bytes[6];
    if !(MIN_BITS..=MAX_BITS).contains(&bits) {
        return Err(IoError::BadHeader {
            format: FORMAT,
            reason: format!("bits {bits} outside {MIN_BITS}..={MAX_BITS}"),
        });
    }
    let flags = bytes[7];
    let view_id = flags & 0x1f;
    if view_id >= 20 {
        return Err(IoError::BadHeader {
            format: FORMAT,
            reason: format!("view_id {view_id} outside 0..20"),
        });
    }
    let projection = ProjectionKind::from_u8(flags >> 7).ok_or(IoError::BadHeader {
        format: FORMAT,
        reason: "bad projection flag".into(),
    })?;
    let near = f32::from_le_bytes([bytes[8], bytes[9], bytes[10], bytes[11]]);
    let far = f32::from_le_bytes([bytes[12], bytes[13], bytes[14], bytes[15]]);
    if !near.is_finite() || !far.is_finite() || near >= far {
        return Err(IoError::BadHeader {
            format: FORMAT,
            reason: format!("bad depth range [{near}, {far}]"),
        });
    }
    let expected = depthmap_file_size(resolution);
    if bytes.len() < expected {
        return Err(IoError::Truncated {
            format: FORMAT,
            expected,
            found: bytes.len(),
        });
    }
    let codes = bytes[HEADER_SIZE..expected].to_vec();
    let max_code = (1u16 << bits) - 1;
    for &c in &codes {
        if c as u16 > max_code {
            return Err(IoError::CodeOutOfRange { code: c, bits });
        }
    }
    Ok(DepthMap {
        resolution,
        bits,
        near,
        far,
        view_id,
        projection,
        codes,
    })
}

pub fn write_depthmap(dm: &DepthMap, path: &Path) -> Result<(), IoError> {
    let bytes = encode_depthmap(dm)?;
    std::fs::write(path, bytes)?;
    Ok(())
}

pub fn read_depthmap(path: &Path) -> Result<DepthMap, IoError> {
    let bytes = std::fs::read(path)?;
    decode_depthmap(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_map(seed: u64) -> DepthMap {
        let mut state = seed;
        let codes: Vec<u8> = (0..64 * 64)
            .map(|_| {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
                (state >> 33) as u8
            })
            .collect();
        DepthMap {
            resolution: 64,
            bits: 8,
            near: 2.0,
            far: 3.0,
            view_id: 7,
            projection: ProjectionKind::Perspective,
            codes,
        }
    }

    #[test]
    fn round_trip_is_bitwise_identity() {
        let dm = sample_map(1);
        let bytes = encode_depthmap(&dm).unwrap();
        let back = decode_depthmap(&bytes).unwrap();
        assert_eq!(dm, back);
        // Re-encoding gives identical bytes.
        assert_eq!(bytes, encode_depthmap(&back).unwrap());
    }

    #[test]
    fn file_size_is_header_plus_payload() {
        let dm = sample_map(2);
        let bytes = encode_depthmap(&dm).unwrap();
        assert_eq!(bytes.len(), 16 + 64 * 64);
        assert_eq!(depthmap_file_size(64), 4112);
    }

    #[test]
    fn corrupt_magic_truncation_and_bad_codes_are_distinct_errors() {
        let dm = sample_map(3);
        let bytes = encode_depthmap(&dm).unwrap();

        let mut bad_magic = bytes.clone();
        bad_magic[0] = b'X';
        assert!(matches!(
            decode_depthmap(&bad_magic),
            Err(IoError::BadMagic { .. })
        ));

        assert!(matches!(
            decode_depthmap(&bytes[..100]),
            Err(IoError::Truncated { .. })
        ));

        let mut bad_version = bytes.clone();
        bad_version[4] = 9;
        assert!(matches!(
            decode_depthmap(&bad_version),
            Err(IoError::BadVersion { found: 9, .. })
        ));

        // 5-bit map with an 8-bit code.
        let mut small = sample_map(4);
        small.bits = 5;
        small.codes.iter_mut().for_each(|c| *c &= 31);
        small.codes[10] = 200;
        assert!(matches!(
            encode_depthmap(&small),
            Err(IoError::CodeOutOfRange { code: 200, bits: 5 })
        ));
        let mut enc_ok = small.clone();
        enc_ok.codes[10] = 3;
        let mut tampered = encode_depthmap(&enc_ok).unwrap();
        tampered[HEADER_SIZE + 10] = 200;
        assert!(matches!(
            decode_depthmap(&tampered),
            Err(IoError::CodeOutOfRange { code: 200, bits: 5 })
        ));
    }

    #[test]
    fn header_rejects_out_of_range_fields() {
        let mut dm = sample_map(5);
        dm.view_id = 20;
        assert!(encode_depthmap(&dm).is_err());
        let mut dm = sample_map(6);
        dm.resolution = 48;
        assert!(encode_depthmap(&dm).is_err());
    }

    #[test]
    fn write_read_through_the_filesystem() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("map.dfdm");
        let dm = sample_map(7);
        write_depthmap(&dm, &path).unwrap();
        assert_eq!(std::fs::metadata(&path).unwrap().len(), 4112);
        assert_eq!(read_depthmap(&path).unwrap(), dm);
    }
}
