use std::path::Path;

use super::IoError;

const FORMAT: &str = "DFID";
const MAGIC: [u8; 4] = *b"DFID";
const VERSION: u8 = 1;
const HEADER_SIZE: usize = 13;

/// Serializes identity codes as the `DFID` container: magic, version,
/// `count` and `dim` as u32 LE, then `count * dim` f64 LE values.
pub fn encode_identity_bank(codes: &[Vec<f64>]) -> Result<Vec<u8>, IoError> {
    let count = codes.len();
    let dim = codes.first().map_or(0, |c| c.len());
    for c in codes {
        if c.len() != dim {
            return Err(IoError::BadHeader {
                format: FORMAT,
                reason: "identity codes have inconsistent dimensions".into(),
            });
        }
    }
    let mut out = Vec::with_capacity(HEADER_SIZE + count * dim * 8);
    out.extend_from_slice(&MAGIC);
    out.push(VERSION);
    out.extend_from_slice(&(count as u32).to_le_bytes());
    out.extend_from_slice(&(dim as u32).to_le_bytes());
    for code in codes {
        for v in code {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_identity_bank(bytes: &[u8]) -> Result<Vec<Vec<f64>>, IoError> {
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
    let count = u32::from_le_bytes([bytes[5], bytes[6], bytes[7], bytes[8]]) as usize;
    let dim = u32::from_le_bytes([bytes[9], bytes[10], bytes[11], bytes[12]]) as usize;
    let payload = (count as u64)
        .checked_mul(dim as u64)
        .and_then(|n| n.checked_mul(8))
        .ok_or(IoError::BadHeader {
            format: FORMAT,
            reason: "count * dim overflows".into(),
        })?;
    let expected = HEADER_SIZE as u64 + payload;
    if (bytes.len() as u64) < expected {
        return Err(IoError::Truncated {
            format: FORMAT,
            expected: expected as usize,
            found: bytes.len(),
        });
    }
    let mut codes = Vec::with_capacity(count.min(1 << 20));
    let mut off = HEADER_SIZE;
    for _ in 0..count {
        let mut row = Vec::with_capacity(dim.min(1 << 20));
        for _ in 0..dim {
            let mut b = [0u8; 8];
            b.copy_from_slice(&bytes[off..off + 8]);
            row.push(f64::from_le_bytes(b));
            off += 8;
        }
        codes.push(row);
    }
    Ok(codes)
}

pub fn write_identity_bank(codes: &[Vec<f64>], path: &Path) -> Result<(), IoError> {
    std::fs::write(path, encode_identity_bank(codes)?)?;
    Ok(())
}

pub fn read_identity_bank(path: &Path) -> Result<Vec<Vec<f64>>, IoError> {
    decode_identity_bank(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bank_round_trips_bitwise() {
        let codes = vec![
            vec![1.0, -2.5, 1e-300, f64::MAX],
            vec![0.0, 3.25, -0.125, 42.0],
        ];
        let bytes = encode_identity_bank(&codes).unwrap();
        let back = decode_identity_bank(&bytes).unwrap();
        assert_eq!(codes, back);
    }

    #[test]
    fn bank_error_taxonomy() {
        let codes = vec![vec![1.0, 2.0]];
        let bytes = encode_identity_bank(&codes).unwrap();
        let mut bad = bytes.clone();
        bad[1] = b'X';
        assert!(matches!(decode_identity_bank(&bad), Err(IoError::BadMagic { .. })));
        assert!(matches!(
            decode_identity_bank(&bytes[..bytes.len() - 1]),
            Err(IoError::Truncated { .. })
        ));
        let mut vbad = bytes.clone();
        vbad[4] = 2;
        assert!(matches!(
            decode_identity_bank(&vbad),
            Err(IoError::BadVersion { .. })
        ));
        // Oversized header counts must not allocate or panic.
        let mut huge = bytes.clone();
        huge[5..9].copy_from_slice(&u32::MAX.to_le_bytes());
        huge[9..13].copy_from_slice(&u32::MAX.to_le_bytes());
        assert!(decode_identity_bank(&huge).is_err());
    }

    #[test]
    fn inconsistent_rows_are_rejected() {
        let codes = vec![vec![1.0], vec![1.0, 2.0]];
        assert!(encode_identity_bank(&codes).is_err());
    }
}
