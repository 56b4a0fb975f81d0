//! Cutting songs into fixed-length overlapping blocks and merging them back
//! with a triangular cross-fade.

use super::matrix::FrameArray;
use crate::error::{Error, Result};

pub const DEFAULT_BLOCK_LEN: usize = 128;
pub const DEFAULT_BLOCK_HOP: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct BlockSequence {
    pub blocks: Vec<FrameArray>,
    pub block_len: usize,
    pub hop: usize,
    /// Frames in the source before padding.
    pub n_frames: usize,
    /// Zero frames appended after the source to fill the final block.
    pub pad_frames: usize,
    pub song_id: String,
}

/// Number of blocks needed to cover `n_frames`.
pub fn block_count(n_frames: usize, block_len: usize, hop: usize) -> usize {
    if n_frames <= block_len {
        1
    } else {
        (n_frames - block_len).div_ceil(hop) + 1
    }
}

fn check_geometry(block_len: usize, hop: usize) -> Result<()> {
    if block_len == 0 || hop == 0 || hop > block_len {
        return Err(Error::config(format!(
            "block geometry requires 0 < hop <= block_len, got hop {hop}, block_len {block_len}"
        )));
    }
    Ok(())
}

pub fn make_blocks(frames: &FrameArray, block_len: usize, hop: usize) -> Result<BlockSequence> {
    check_geometry(block_len, hop)?;
    if frames.t == 0 {
        return Err(Error::shape("cannot block an empty sequence"));
    }
    let n = block_count(frames.t, block_len, hop);
    let blocks = (0..n).map(|b| frames.window(b * hop, block_len)).collect();
    Ok(BlockSequence {
        blocks,
        block_len,
        hop,
        n_frames: frames.t,
        pad_frames: (n - 1) * hop + block_len - frames.t,
        song_id: String::new(),
    })
}

/// Cross-fade weight of frame `n` within a block of length `len`. At 50%
/// overlap the weights of the two blocks covering any frame sum to one.
pub fn crossfade_weight(n: usize, len: usize) -> f64 {
    1.0 - ((2 * n + 1) as f64 - len as f64).abs() / len as f64
}

/// Merges blocks by weighted summation, normalizing by the accumulated weight so
/// the un-overlapped head and tail come through unchanged. Frames covered by a
/// single block are copied verbatim. Padding is trimmed.
pub fn overlap_add(seq: &BlockSequence) -> Result<FrameArray> {
    check_geometry(seq.block_len, seq.hop)?;
    let first = seq
        .blocks
        .first()
        .ok_or_else(|| Error::shape("no blocks to merge"))?;
    let d = first.d;
    let total = (seq.blocks.len() - 1) * seq.hop + seq.block_len;
    let mut cover = vec![0usize; total];
    for (b, block) in seq.blocks.iter().enumerate() {
        if block.t != seq.block_len || block.d != d {
            return Err(Error::shape(format!(
                "block {b} is {}x{}, expected {}x{d}",
                block.t, block.d, seq.block_len
            )));
        }
        for c in &mut cover[b * seq.hop..b * seq.hop + seq.block_len] {
            *c += 1;
        }
    }
    let mut acc = FrameArray::zeros(total, d);
    let mut wsum = vec![0.0; total];
    for (b, block) in seq.blocks.iter().enumerate() {
        let start = b * seq.hop;
        for n in 0..seq.block_len {
            let t = start + n;
            if cover[t] == 1 {
                acc.row_mut(t).copy_from_slice(block.row(n));
                continue;
            }
            let w = crossfade_weight(n, seq.block_len);
            wsum[t] += w;
            for (a, v) in acc.row_mut(t).iter_mut().zip(block.row(n)) {
                *a += w * v;
            }
        }
    }
    for (t, &w) in wsum.iter().enumerate() {
        if cover[t] > 1 {
            for a in acc.row_mut(t) {
                *a /= w;
            }
        }
    }
    acc.truncate(seq.n_frames);
    Ok(acc)
}
