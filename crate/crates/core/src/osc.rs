//! OSC 1.0 encoding of single-float messages.
//!
//! A message is the address as an OSC-string, the type tag string `",f"`
//! and one big-endian IEEE-754 `float32`. OSC-strings are null terminated
//! and padded with nulls to a multiple of four bytes.

use alloc::string::String;
use alloc::vec::Vec;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum OscError {
    #[error("OSC address must start with '/': `{0}`")]
    MissingSlash(String),
    #[error("OSC address contains an illegal character at byte {index}: `{address}`")]
    IllegalChar { address: String, index: usize },
}

/// Printable ASCII, leading `/`, no blanks.
pub fn validate_address(address: &str) -> Result<(), OscError> {
    if !address.starts_with('/') {
        return Err(OscError::MissingSlash(address.into()));
    }
    if let Some(index) = address.bytes().position(|b| !(0x21..=0x7e).contains(&b)) {
        return Err(OscError::IllegalChar {
            address: address.into(),
            index,
        });
    }
    Ok(())
}

fn padded_len(n: usize) -> usize {
    (n + 4) & !3
}

fn push_osc_string(buf: &mut Vec<u8>, s: &str) {
    let start = buf.len();
    buf.extend_from_slice(s.as_bytes());
    buf.resize(start + padded_len(s.len()), 0);
}

/// Size of the encoded message for `address`.
pub fn encoded_len(address: &str) -> usize {
    padded_len(address.len()) + 4 + 4
}

/// Appends the encoded message to `buf`.
pub fn encode_into(buf: &mut Vec<u8>, address: &str, value: f32) -> Result<(), OscError> {
    validate_address(address)?;
    buf.reserve(encoded_len(address));
    push_osc_string(buf, address);
    push_osc_string(buf, ",f");
    buf.extend_from_slice(&value.to_be_bytes());
    Ok(())
}

pub fn encode(address: &str, value: f32) -> Result<Vec<u8>, OscError> {
    let mut buf = Vec::with_capacity(encoded_len(address));
    encode_into(&mut buf, address, value)?;
    Ok(buf)
}
