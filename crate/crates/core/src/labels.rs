//! Binary-string labels for tree nodes and partition regions.
//!
//! The root is the empty string. Appending `0` descends to the side where the
//! separator gate is `p`, appending `1` to the side weighted `1 - p`. Characters
//! are 1-indexed, so `bit(1)` is the first step from the root.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub const MAX_LABEL_LEN: usize = 31;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeLabel {
    // first character in the most significant of the `len` low bits
    bits: u32,
    len: u8,
}

impl NodeLabel {
    pub const ROOT: NodeLabel = NodeLabel { bits: 0, len: 0 };

    /// Label of length `len` whose characters are the binary digits of `bits`.
    pub fn new(bits: u32, len: usize) -> Result<Self> {
        if len > MAX_LABEL_LEN || (len < 32 && bits >> len != 0) {
            return Err(Error::InvalidLabel(format!("bits={bits:b} len={len}")));
        }
        Ok(Self {
            bits,
            len: len as u8,
        })
    }

    #[inline]
    pub fn len(self) -> usize {
        self.len as usize
    }

    #[inline]
    pub fn is_empty(self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn is_root(self) -> bool {
        self.len == 0
    }

    /// The label read as a binary number (its rank within labels of equal length).
    #[inline]
    pub fn bits(self) -> u32 {
        self.bits
    }

    /// `r(i)`, the i-th character (1-indexed).
    pub fn bit(self, i: usize) -> Result<u8> {
        if i == 0 || i > self.len() {
            return Err(Error::IndexOutOfRange {
                index: i,
                len: self.len(),
            });
        }
        Ok(((self.bits >> (self.len() - i)) & 1) as u8)
    }

    /// `r_i`, the first `i - 1` characters. `prefix(1)` is the root.
    pub fn prefix(self, i: usize) -> Result<NodeLabel> {
        if i == 0 || i > self.len() + 1 {
            return Err(Error::IndexOutOfRange {
                index: i,
                len: self.len(),
            });
        }
        let keep = i - 1;
        Ok(NodeLabel {
            bits: self.bits >> (self.len() - keep),
            len: keep as u8,
        })
    }

    pub fn concat(self, suffix: NodeLabel) -> Result<NodeLabel> {
        let len = self.len() + suffix.len();
        if len > MAX_LABEL_LEN {
            return Err(Error::InvalidLabel(format!("{self}{suffix}")));
        }
        Ok(NodeLabel {
            bits: (self.bits << suffix.len) | suffix.bits,
            len: len as u8,
        })
    }

    pub fn child(self, bit: u8) -> Result<NodeLabel> {
        self.concat(NodeLabel {
            bits: (bit & 1) as u32,
            len: 1,
        })
    }

    pub fn is_prefix_of(self, other: NodeLabel) -> bool {
        self.len <= other.len && other.bits >> (other.len - self.len) == self.bits
    }

    /// Breadth-first position: root 0, children of `i` at `2i+1` and `2i+2`.
    #[inline]
    pub fn heap_index(self) -> usize {
        (1usize << self.len) - 1 + self.bits as usize
    }

    pub fn from_heap_index(index: usize) -> Result<NodeLabel> {
        let len = (usize::BITS - 1 - (index + 1).leading_zeros()) as usize;
        NodeLabel::new((index + 1 - (1 << len)) as u32, len)
    }

    /// `R_len`: every label of length `len`, in increasing order.
    pub fn all_of_length(len: usize) -> impl Iterator<Item = NodeLabel> {
        assert!(len <= MAX_LABEL_LEN);
        (0..(1u32 << len)).map(move |bits| NodeLabel {
            bits,
            len: len as u8,
        })
    }
}

impl PartialOrd for NodeLabel {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for NodeLabel {
    /// Breadth-first order.
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.heap_index().cmp(&other.heap_index())
    }
}

impl fmt::Display for NodeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.len == 0 {
            return f.write_str("ε");
        }
        for i in 1..=self.len() {
            let b = (self.bits >> (self.len() - i)) & 1;
            f.write_str(if b == 0 { "0" } else { "1" })?;
        }
        Ok(())
    }
}

impl FromStr for NodeLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.is_empty() || s == "ε" {
            return Ok(NodeLabel::ROOT);
        }
        if s.len() > MAX_LABEL_LEN {
            return Err(Error::InvalidLabel(s.to_string()));
        }
        let mut bits = 0u32;
        for c in s.chars() {
            bits = (bits << 1)
                | match c {
                    '0' => 0,
                    '1' => 1,
                    _ => return Err(Error::InvalidLabel(s.to_string())),
                };
        }
        NodeLabel::new(bits, s.len())
    }
}

impl Serialize for NodeLabel {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for NodeLabel {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
