//! Bit-accurate AES-128 model.
//!
//! Besides plain ECB encryption this module exposes the two quantities the
//! attack is built on: the intermediate register value latched in the second
//! clock cycle (plaintext XOR key) and the per-byte hypothetical power model
//! derived from it. The TMR majority voter lives here as well.

/// A 128-bit block. Byte 0 is the first (most significant) plaintext byte.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct Block128 {
    pub bytes: [u8; 16],
}

impl Block128 {
    pub const ZERO: Block128 = Block128 { bytes: [0; 16] };

    pub fn new(bytes: [u8; 16]) -> Self {
        Block128 { bytes }
    }

    /// Parses exactly 32 hex digits.
    pub fn from_hex(s: &str) -> Result<Self, HexError> {
        Ok(Block128 {
            bytes: parse_hex16(s)?,
        })
    }

    pub fn to_hex(&self) -> String {
        self.bytes.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn xor(&self, other: &Block128) -> Block128 {
        let mut out = [0u8; 16];
        for (o, (a, b)) in out.iter_mut().zip(self.bytes.iter().zip(&other.bytes)) {
            *o = a ^ b;
        }
        Block128 { bytes: out }
    }

    /// Number of set bits over the whole block.
    pub fn hamming_weight(&self) -> u32 {
        self.bytes.iter().map(|b| b.count_ones()).sum()
    }

    /// S-box applied to every byte.
    pub fn sub_bytes(&self) -> Block128 {
        let mut out = self.bytes;
        for b in &mut out {
            *b = sbox(*b);
        }
        Block128 { bytes: out }
    }
}

/// A 128-bit cipher key. The attacked subkey is byte 0 (the 8 MSBs).
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct Key128 {
    pub bytes: [u8; 16],
}

impl Key128 {
    pub fn new(bytes: [u8; 16]) -> Self {
        Key128 { bytes }
    }

    pub fn from_hex(s: &str) -> Result<Self, HexError> {
        Ok(Key128 {
            bytes: parse_hex16(s)?,
        })
    }

    pub fn to_hex(&self) -> String {
        Block128 { bytes: self.bytes }.to_hex()
    }

    pub fn as_block(&self) -> Block128 {
        Block128 { bytes: self.bytes }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum HexError {
    #[error("expected 32 hex digits, got {0} characters")]
    BadLength(usize),
    #[error("invalid hex digit {0:?}")]
    BadDigit(char),
}

fn parse_hex16(s: &str) -> Result<[u8; 16], HexError> {
    let s = s.trim();
    if s.len() != 32 {
        return Err(HexError::BadLength(s.len()));
    }
    let mut out = [0u8; 16];
    for (i, chunk) in s.as_bytes().chunks(2).enumerate() {
        let hi = hex_val(chunk[0] as char)?;
        let lo = hex_val(chunk[1] as char)?;
        out[i] = (hi << 4) | lo;
    }
    Ok(out)
}

fn hex_val(c: char) -> Result<u8, HexError> {
    c.to_digit(16).map(|d| d as u8).ok_or(HexError::BadDigit(c))
}

/// The 11 round keys of the AES-128 key schedule; `keys[0]` is the cipher key.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RoundKeys {
    pub keys: [Block128; 11],
}

/// What the intermediate register held before latching p XOR k.
///
/// The default throughout the crate is [`PowerModelKind::HwZeroPrev`]: the
/// register starts all-zero, so the hypothesis is the Hamming weight of the
/// new content. A previous content equal to the plaintext degenerates to
/// `popcount(guess)`, which carries no plaintext dependence and therefore no
/// attackable signal; it is kept for experiments on model mismatch.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Default)]
pub enum PowerModelKind {
    #[default]
    HwZeroPrev,
    HdPlaintextPrev,
    HdCustomPrev(Block128),
}

impl PowerModelKind {
    /// Previous register content for a whole block with plaintext `pt`.
    pub fn prev_block(&self, pt: &Block128) -> Block128 {
        match self {
            PowerModelKind::HwZeroPrev => Block128::ZERO,
            PowerModelKind::HdPlaintextPrev => *pt,
            PowerModelKind::HdCustomPrev(prev) => *prev,
        }
    }

    /// Previous register content at one byte position.
    pub fn prev_byte(&self, pt_byte: u8, byte_index: usize) -> u8 {
        match self {
            PowerModelKind::HwZeroPrev => 0,
            PowerModelKind::HdPlaintextPrev => pt_byte,
            PowerModelKind::HdCustomPrev(prev) => prev.bytes[byte_index],
        }
    }
}

const SBOX: [u8; 256] = [
    0x63, 0x7c, 0x77, 0x7b, 0xf2, 0x6b, 0x6f, 0xc5, 0x30, 0x01, 0x67, 0x2b, 0xfe, 0xd7, 0xab, 0x76,
    0xca, 0x82, 0xc9, 0x7d, 0xfa, 0x59, 0x47, 0xf0, 0xad, 0xd4, 0xa2, 0xaf, 0x9c, 0xa4, 0x72, 0xc0,
    0xb7, 0xfd, 0x93, 0x26, 0x36, 0x3f, 0xf7, 0xcc, 0x34, 0xa5, 0xe5, 0xf1, 0x71, 0xd8, 0x31, 0x15,
    0x04, 0xc7, 0x23, 0xc3, 0x18, 0x96, 0x05, 0x9a, 0x07, 0x12, 0x80, 0xe2, 0xeb, 0x27, 0xb2, 0x75,
    0x09, 0x83, 0x2c, 0x1a, 0x1b, 0x6e, 0x5a, 0xa0, 0x52, 0x3b, 0xd6, 0xb3, 0x29, 0xe3, 0x2f, 0x84,
    0x53, 0xd1, 0x00, 0xed, 0x20, 0xfc, 0xb1, 0x5b, 0x6a, 0xcb, 0xbe, 0x39, 0x4a, 0x4c, 0x58, 0xcf,
    0xd0, 0xef, 0xaa, 0xfb, 0x43, 0x4d, 0x33, 0x85, 0x45, 0xf9, 0x02, 0x7f, 0x50, 0x3c, 0x9f, 0xa8,
    0x51, 0xa3, 0x40, 0x8f, 0x92, 0x9d, 0x38, 0xf5, 0xbc, 0xb6, 0xda, 0x21, 0x10, 0xff, 0xf3, 0xd2,
    0xcd, 0x0c, 0x13, 0xec, 0x5f, 0x97, 0x44, 0x17, 0xc4, 0xa7, 0x7e, 0x3d, 0x64, 0x5d, 0x19, 0x73,
    0x60, 0x81, 0x4f, 0xdc, 0x22, 0x2a, 0x90, 0x88, 0x46, 0xee, 0xb8, 0x14, 0xde, 0x5e, 0x0b, 0xdb,
    0xe0, 0x32, 0x3a, 0x0a, 0x49, 0x06, 0x24, 0x5c, 0xc2, 0xd3, 0xac, 0x62, 0x91, 0x95, 0xe4, 0x79,
    0xe7, 0xc8, 0x37, 0x6d, 0x8d, 0xd5, 0x4e, 0xa9, 0x6c, 0x56, 0xf4, 0xea, 0x65, 0x7a, 0xae, 0x08,
    0xba, 0x78, 0x25, 0x2e, 0x1c, 0xa6, 0xb4, 0xc6, 0xe8, 0xdd, 0x74, 0x1f, 0x4b, 0xbd, 0x8b, 0x8a,
    0x70, 0x3e, 0xb5, 0x66, 0x48, 0x03, 0xf6, 0x0e, 0x61, 0x35, 0x57, 0xb9, 0x86, 0xc1, 0x1d, 0x9e,
    0xe1, 0xf8, 0x98, 0x11, 0x69, 0xd9, 0x8e, 0x94, 0x9b, 0x1e, 0x87, 0xe9, 0xce, 0x55, 0x28, 0xdf,
    0x8c, 0xa1, 0x89, 0x0d, 0xbf, 0xe6, 0x42, 0x68, 0x41, 0x99, 0x2d, 0x0f, 0xb0, 0x54, 0xbb, 0x16,
];

const INV_SBOX: [u8; 256] = [
    0x52, 0x09, 0x6a, 0xd5, 0x30, 0x36, 0xa5, 0x38, 0xbf, 0x40, 0xa3, 0x9e, 0x81, 0xf3, 0xd7, 0xfb,
    0x7c, 0xe3, 0x39, 0x82, 0x9b, 0x2f, 0xff, 0x87, 0x34, 0x8e, 0x43, 0x44, 0xc4, 0xde, 0xe9, 0xcb,
    0x54, 0x7b, 0x94, 0x32, 0xa6, 0xc2, 0x23, 0x3d, 0xee, 0x4c, 0x95, 0x0b, 0x42, 0xfa, 0xc3, 0x4e,
    0x08, 0x2e, 0xa1, 0x66, 0x28, 0xd9, 0x24, 0xb2, 0x76, 0x5b, 0xa2, 0x49, 0x6d, 0x8b, 0xd1, 0x25,
    0x72, 0xf8, 0xf6, 0x64, 0x86, 0x68, 0x98, 0x16, 0xd4, 0xa4, 0x5c, 0xcc, 0x5d, 0x65, 0xb6, 0x92,
    0x6c, 0x70, 0x48, 0x50, 0xfd, 0xed, 0xb9, 0xda, 0x5e, 0x15, 0x46, 0x57, 0xa7, 0x8d, 0x9d, 0x84,
    0x90, 0xd8, 0xab, 0x00, 0x8c, 0xbc, 0xd3, 0x0a, 0xf7, 0xe4, 0x58, 0x05, 0xb8, 0xb3, 0x45, 0x06,
    0xd0, 0x2c, 0x1e, 0x8f, 0xca, 0x3f, 0x0f, 0x02, 0xc1, 0xaf, 0xbd, 0x03, 0x01, 0x13, 0x8a, 0x6b,
    0x3a, 0x91, 0x11, 0x41, 0x4f, 0x67, 0xdc, 0xea, 0x97, 0xf2, 0xcf, 0xce, 0xf0, 0xb4, 0xe6, 0x73,
    0x96, 0xac, 0x74, 0x22, 0xe7, 0xad, 0x35, 0x85, 0xe2, 0xf9, 0x37, 0xe8, 0x1c, 0x75, 0xdf, 0x6e,
    0x47, 0xf1, 0x1a, 0x71, 0x1d, 0x29, 0xc5, 0x89, 0x6f, 0xb7, 0x62, 0x0e, 0xaa, 0x18, 0xbe, 0x1b,
    0xfc, 0x56, 0x3e, 0x4b, 0xc6, 0xd2, 0x79, 0x20, 0x9a, 0xdb, 0xc0, 0xfe, 0x78, 0xcd, 0x5a, 0xf4,
    0x1f, 0xdd, 0xa8, 0x33, 0x88, 0x07, 0xc7, 0x31, 0xb1, 0x12, 0x10, 0x59, 0x27, 0x80, 0xec, 0x5f,
    0x60, 0x51, 0x7f, 0xa9, 0x19, 0xb5, 0x4a, 0x0d, 0x2d, 0xe5, 0x7a, 0x9f, 0x93, 0xc9, 0x9c, 0xef,
    0xa0, 0xe0, 0x3b, 0x4d, 0xae, 0x2a, 0xf5, 0xb0, 0xc8, 0xeb, 0xbb, 0x3c, 0x83, 0x53, 0x99, 0x61,
    0x17, 0x2b, 0x04, 0x7e, 0xba, 0x77, 0xd6, 0x26, 0xe1, 0x69, 0x14, 0x63, 0x55, 0x21, 0x0c, 0x7d,
];

/// Standard AES S-box lookup.
#[inline]
pub fn sbox(x: u8) -> u8 {
    SBOX[x as usize]
}

/// Inverse S-box lookup.
#[inline]
pub fn inv_sbox(x: u8) -> u8 {
    INV_SBOX[x as usize]
}

const RCON: [u8; 10] = [0x01, 0x02, 0x04, 0x08, 0x10, 0x20, 0x40, 0x80, 0x1b, 0x36];

/// AES-128 key schedule: 11 round keys, `keys[0]` equal to the cipher key.
pub fn expand_key(key: &Key128) -> RoundKeys {
    let mut w = [[0u8; 4]; 44];
    for (word, chunk) in w.iter_mut().zip(key.bytes.chunks_exact(4)) {
        word.copy_from_slice(chunk);
    }
    for i in 4..44 {
        let mut temp = w[i - 1];
        if i % 4 == 0 {
            temp = [
                sbox(temp[1]) ^ RCON[i / 4 - 1],
                sbox(temp[2]),
                sbox(temp[3]),
                sbox(temp[0]),
            ];
        }
        for j in 0..4 {
            w[i][j] = w[i - 4][j] ^ temp[j];
        }
    }
    let mut keys = [Block128::ZERO; 11];
    for (r, rk) in keys.iter_mut().enumerate() {
        for c in 0..4 {
            rk.bytes[4 * c..4 * c + 4].copy_from_slice(&w[4 * r + c]);
        }
    }
    RoundKeys { keys }
}

// State layout follows the block: state[r][c] lives at bytes[r + 4c].

fn shift_rows(state: &mut [u8; 16]) {
    let old = *state;
    for r in 1..4 {
        for c in 0..4 {
            state[r + 4 * c] = old[r + 4 * ((c + r) % 4)];
        }
    }
}

#[inline]
fn xtime(x: u8) -> u8 {
    (x << 1) ^ (((x >> 7) & 1) * 0x1b)
}

fn mix_columns(state: &mut [u8; 16]) {
    for c in 0..4 {
        let col = &mut state[4 * c..4 * c + 4];
        let (a0, a1, a2, a3) = (col[0], col[1], col[2], col[3]);
        let all = a0 ^ a1 ^ a2 ^ a3;
        col[0] = a0 ^ all ^ xtime(a0 ^ a1);
        col[1] = a1 ^ all ^ xtime(a1 ^ a2);
        col[2] = a2 ^ all ^ xtime(a2 ^ a3);
        col[3] = a3 ^ all ^ xtime(a3 ^ a0);
    }
}

fn add_round_key(state: &mut [u8; 16], rk: &Block128) {
    for (s, k) in state.iter_mut().zip(&rk.bytes) {
        *s ^= k;
    }
}

/// Single-block AES-128 encryption (ECB).
pub fn encrypt(pt: &Block128, key: &Key128) -> Block128 {
    let rk = expand_key(key);
    let mut state = pt.bytes;
    add_round_key(&mut state, &rk.keys[0]);
    for round in 1..10 {
        for b in &mut state {
            *b = sbox(*b);
        }
        shift_rows(&mut state);
        mix_columns(&mut state);
        add_round_key(&mut state, &rk.keys[round]);
    }
    for b in &mut state {
        *b = sbox(*b);
    }
    shift_rows(&mut state);
    add_round_key(&mut state, &rk.keys[10]);
    Block128 { bytes: state }
}

/// Content of the attacked intermediate register: plaintext XOR key.
pub fn intermediate_register(pt: &Block128, key: &Key128) -> Block128 {
    pt.xor(&key.as_block())
}

/// Per-byte hypothetical power value for a key guess, in 0..=8.
///
/// For [`PowerModelKind::HdCustomPrev`] the previous content of byte 0 is
/// used; see [`hypothesis_at`] when attacking another byte position.
pub fn hypothesis(pt_byte: u8, guess: u8, model: &PowerModelKind) -> u32 {
    hypothesis_at(pt_byte, guess, model, 0)
}

/// [`hypothesis`] with an explicit byte position for the previous-content
/// lookup of [`PowerModelKind::HdCustomPrev`].
pub fn hypothesis_at(pt_byte: u8, guess: u8, model: &PowerModelKind, byte_index: usize) -> u32 {
    let new = pt_byte ^ guess;
    (new ^ model.prev_byte(pt_byte, byte_index)).count_ones()
}

/// Bitwise majority of three blocks: `(a & b) | (a & c) | (b & c)`.
pub fn majority_vote(a: &Block128, b: &Block128, c: &Block128) -> Block128 {
    let mut out = [0u8; 16];
    for (i, byte) in out.iter_mut().enumerate() {
        let (x, y, z) = (a.bytes[i], b.bytes[i], c.bytes[i]);
        *byte = (x & y) | (x & z) | (y & z);
    }
    Block128 { bytes: out }
}
