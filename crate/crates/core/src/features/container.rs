//! Self-describing binary containers.
//!
//! Layout: 4 magic bytes, a little-endian `u32` header length `L`, `L` bytes of
//! UTF-8 JSON, then a payload of little-endian IEEE-754 `f32` values. Feature
//! files (`.gsf`) and model checkpoints share this layout and differ only in
//! magic and header schema.

use std::fs;
use std::path::Path;

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use super::matrix::FeatureMatrix;
use crate::error::{Error, Result};

pub const FEATURE_MAGIC: [u8; 4] = *b"GSF1";

/// Serializes a container to bytes.
pub fn encode<H: Serialize>(magic: [u8; 4], header: &H, payload: &[f32]) -> Result<Vec<u8>> {
    let json = serde_json::to_vec(header)?;
    let len = u32::try_from(json.len()).map_err(|_| Error::format("header too large"))?;
    let mut out = Vec::with_capacity(8 + json.len() + payload.len() * 4);
    out.extend_from_slice(&magic);
    out.extend_from_slice(&len.to_le_bytes());
    out.extend_from_slice(&json);
    for v in payload {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

/// Parses a container, checking the magic and that the payload is a whole
/// number of `f32` values. The caller validates the payload length against the
/// header.
pub fn decode<H: DeserializeOwned>(magic: [u8; 4], bytes: &[u8]) -> Result<(H, Vec<f32>)> {
    if bytes.len() < 8 {
        return Err(Error::format("truncated container prefix"));
    }
    if bytes[0..4] != magic {
        return Err(Error::format(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&bytes[0..4]),
            String::from_utf8_lossy(&magic)
        )));
    }
    let len = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
    let body = &bytes[8..];
    if body.len() < len {
        return Err(Error::format("truncated header"));
    }
    let header: H = serde_json::from_slice(&body[..len])
        .map_err(|e| Error::format(format!("invalid header: {e}")))?;
    let raw = &body[len..];
    if !raw.len().is_multiple_of(4) {
        return Err(Error::format("payload is not a whole number of f32 values"));
    }
    let payload = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    Ok((header, payload))
}

#[derive(Debug, Serialize, Deserialize)]
struct FeatureHeader {
    t: usize,
    d: usize,
    hop_s: f64,
    dim_labels: Vec<String>,
    song_id: String,
    singer_id: String,
    pad_frames: usize,
}

pub fn encode_features(m: &FeatureMatrix) -> Result<Vec<u8>> {
    let header = FeatureHeader {
        t: m.n_frames(),
        d: m.dim(),
        hop_s: m.hop_s,
        dim_labels: m.dim_labels.clone(),
        song_id: m.song_id.clone(),
        singer_id: m.singer_id.clone(),
        pad_frames: m.pad_frames,
    };
    encode(FEATURE_MAGIC, &header, m.as_slice())
}

pub fn decode_features(bytes: &[u8]) -> Result<FeatureMatrix> {
    let (h, payload): (FeatureHeader, _) = decode(FEATURE_MAGIC, bytes)?;
    if payload.len() != h.t * h.d {
        return Err(Error::format(format!(
            "header declares {}x{} values but payload holds {}",
            h.t,
            h.d,
            payload.len()
        )));
    }
    let mut m = FeatureMatrix::new(h.t, h.d, payload, h.hop_s, h.dim_labels)
        .map_err(|e| Error::format(e.to_string()))?;
    m.song_id = h.song_id;
    m.singer_id = h.singer_id;
    m.pad_frames = h.pad_frames;
    Ok(m)
}

pub fn write_container(m: &FeatureMatrix, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_features(m)?)?;
    Ok(())
}

pub fn read_container(path: impl AsRef<Path>) -> Result<FeatureMatrix> {
    decode_features(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn labels(d: usize) -> Vec<String> {
        (0..d).map(|i| format!("x{i}")).collect()
    }

    #[test]
    fn file_size_is_header_plus_payload() {
        let m = FeatureMatrix::new(2, 3, vec![1., 2., 3., 4., 5., 6.], 0.005, labels(3)).unwrap();
        let bytes = encode_features(&m).unwrap();
        let header_len = 8 + u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        assert_eq!(bytes.len(), header_len + 24);
        assert_eq!(&bytes[..4], b"GSF1");
    }

    #[test]
    fn corrupted_magic_is_rejected() {
        let m = FeatureMatrix::new(1, 1, vec![1.0], 0.005, labels(1)).unwrap();
        let mut bytes = encode_features(&m).unwrap();
        bytes[0] = b'X';
        assert!(matches!(decode_features(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let m = FeatureMatrix::new(2, 2, vec![1., 2., 3., 4.], 0.005, labels(2)).unwrap();
        let bytes = encode_features(&m).unwrap();
        assert!(matches!(decode_features(&bytes[..bytes.len() - 4]), Err(Error::Format(_))));
        assert!(matches!(decode_features(&bytes[..bytes.len() - 1]), Err(Error::Format(_))));
        assert!(matches!(decode_features(&bytes[..6]), Err(Error::Format(_))));
    }

    #[test]
    fn header_payload_mismatch_is_rejected() {
        let m = FeatureMatrix::new(1, 2, vec![1., 2.], 0.005, labels(2)).unwrap();
        let mut bytes = encode_features(&m).unwrap();
        bytes.extend_from_slice(&0f32.to_le_bytes());
        bytes.extend_from_slice(&0f32.to_le_bytes());
        assert!(matches!(decode_features(&bytes), Err(Error::Format(_))));
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(
            t in 1usize..20,
            d in 1usize..8,
            seed in any::<u64>(),
            pad in 0usize..4,
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let vals: Vec<f32> = (0..t * d).map(|_| f32::from_bits(rng.gen::<u32>() & 0xbf7f_ffff)).collect();
            let mut m = FeatureMatrix::new(t, d, vals, 0.005, labels(d)).unwrap().with_ids("song", "singer");
            m.pad_frames = pad;
            let back = decode_features(&encode_features(&m).unwrap()).unwrap();
            prop_assert_eq!(back.n_frames(), t);
            prop_assert!(back.as_slice().iter().zip(m.as_slice()).all(|(a, b)| a.to_bits() == b.to_bits()));
            prop_assert_eq!(back.song_id, m.song_id);
            prop_assert_eq!(back.pad_frames, pad);
        }
    }
}
