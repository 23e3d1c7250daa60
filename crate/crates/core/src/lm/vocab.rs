//! Byte-level vocabulary with three specials.

use crate::error::{Error, Result};

pub const BOS: u32 = 256;
pub const EOS: u32 = 257;
pub const PAD: u32 = 258;
pub const VOCAB_SIZE: usize = 259;

/// `[BOS] ++ bytes ++ [EOS]`.
pub fn encode_text(s: &[u8]) -> Vec<u32> {
    let mut ids = Vec::with_capacity(s.len() + 2);
    ids.push(BOS);
    ids.extend(s.iter().map(|&b| u32::from(b)));
    ids.push(EOS);
    ids
}

/// Bytes of `ids` with specials dropped.
pub fn decode_text(ids: &[u32]) -> Vec<u8> {
    ids.iter().filter(|&&id| id < 256).map(|&id| id as u8).collect()
}

pub fn check_ids(ids: &[u32]) -> Result<()> {
    match ids.iter().find(|&&id| id as usize >= VOCAB_SIZE) {
        Some(&id) => Err(Error::Vocab {
            id,
            size: VOCAB_SIZE,
        }),
        None => Ok(()),
    }
}
