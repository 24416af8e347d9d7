//! Canonical encoding primitives and content digests.
//!
//! Every value that participates in a digest (transactions, events, blocks,
//! contract state) is encoded with the same fixed textual grammar so that two
//! independent implementations produce byte-identical files and therefore
//! byte-identical digests:
//!
//! ```text
//! record := name "(" field ("," field)* ")" | name "()"
//! uint   := "0" | [1-9][0-9]*                   u64, no leading zeros
//! bool   := "0" | "1"
//! ratio  := uint "/" uint                       lowest terms, denominator >= 1
//! string := '"' (escape | byte)* '"'            escapes: \\ \" \n \r
//! word   := [A-Za-z]+                           enum tokens
//! digest := 64 lowercase hex characters
//! list   := "[" field ("," field)* "]" | "[]"
//! ```
//!
//! No whitespace anywhere. Fields appear in declared order. The grammar is
//! injective: every value has exactly one encoding, and the strict parser in
//! this module rejects anything else (leading zeros, uppercase hex, unreduced
//! ratios, stray bytes). Parsing works on raw bytes, not `str`, so corrupted
//! files that are no longer valid UTF-8 still fail with a position instead of
//! an upstream panic.

use std::fmt;

use sha2::{Digest as _, Sha256};
use thiserror::Error;

/// A 32-byte SHA-256 digest, rendered as 64 lowercase hex characters.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Digest([u8; 32]);

impl Digest {
    /// The all-zero sentinel used as the previous-block link at height 0.
    pub const ZERO: Digest = Digest([0u8; 32]);

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    /// First 8 hex characters, used in human-readable trace footers.
    pub fn short_hex(&self) -> String {
        self.to_hex()[..8].to_string()
    }

    pub fn from_hex(s: &str) -> Option<Digest> {
        if s.len() != 64 || !s.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b)) {
            return None;
        }
        let bytes = hex::decode(s).ok()?;
        let mut out = [0u8; 32];
        out.copy_from_slice(&bytes);
        Some(Digest(out))
    }
}

impl From<[u8; 32]> for Digest {
    fn from(bytes: [u8; 32]) -> Self {
        Digest(bytes)
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({})", self.short_hex())
    }
}

/// SHA-256 over arbitrary bytes.
pub fn sha256(bytes: &[u8]) -> Digest {
    let out: [u8; 32] = Sha256::digest(bytes).into();
    Digest(out)
}

// ---------------------------------------------------------------------------
// Writers
// ---------------------------------------------------------------------------

pub fn write_uint(out: &mut String, v: u64) {
    out.push_str(&v.to_string());
}

pub fn write_bool(out: &mut String, v: bool) {
    out.push(if v { '1' } else { '0' });
}

/// Escaped, double-quoted string. The escape set keeps encoded records on a
/// single line regardless of the source bytes.
pub fn write_string(out: &mut String, s: &str) {
    out.push('"');
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '"' => out.push_str("\\\""),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out.push('"');
}

pub fn write_digest(out: &mut String, d: &Digest) {
    out.push_str(&d.to_hex());
}

pub fn write_uint_list(out: &mut String, items: impl IntoIterator<Item = u64>) {
    out.push('[');
    for (i, v) in items.into_iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        write_uint(out, v);
    }
    out.push(']');
}

// ---------------------------------------------------------------------------
// Strict parser
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("parse error at byte {pos}: {msg}")]
pub struct ParseError {
    pub pos: usize,
    pub msg: String,
}

/// Byte cursor over one encoded record. All `expect_*` methods are strict:
/// they accept exactly the canonical form or fail with the current position.
pub struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    pub fn new(bytes: &'a [u8]) -> Self {
        Cursor { bytes, pos: 0 }
    }

    pub fn pos(&self) -> usize {
        self.pos
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T, ParseError> {
        Err(ParseError { pos: self.pos, msg: msg.into() })
    }

    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    pub fn at_end(&self) -> bool {
        self.pos == self.bytes.len()
    }

    pub fn expect_end(&self) -> Result<(), ParseError> {
        if self.at_end() {
            Ok(())
        } else {
            self.err("trailing bytes after record")
        }
    }

    pub fn expect_byte(&mut self, b: u8) -> Result<(), ParseError> {
        match self.peek() {
            Some(got) if got == b => {
                self.pos += 1;
                Ok(())
            }
            Some(got) => self.err(format!("expected {:?}, found {:?}", b as char, got as char)),
            None => self.err(format!("expected {:?}, found end of input", b as char)),
        }
    }

    /// Bare identifier: one or more ASCII letters.
    pub fn expect_word(&mut self) -> Result<&'a str, ParseError> {
        let start = self.pos;
        while matches!(self.peek(), Some(b) if b.is_ascii_alphabetic()) {
            self.pos += 1;
        }
        if self.pos == start {
            return self.err("expected identifier");
        }
        // Safe: the range contains only ASCII letters.
        Ok(std::str::from_utf8(&self.bytes[start..self.pos]).unwrap())
    }

    /// Base-10 u64 with no leading zeros.
    pub fn expect_uint(&mut self) -> Result<u64, ParseError> {
        let start = self.pos;
        while matches!(self.peek(), Some(b) if b.is_ascii_digit()) {
            self.pos += 1;
        }
        if self.pos == start {
            return self.err("expected unsigned integer");
        }
        let digits = &self.bytes[start..self.pos];
        if digits.len() > 1 && digits[0] == b'0' {
            return self.err("leading zero in integer");
        }
        std::str::from_utf8(digits)
            .unwrap()
            .parse::<u64>()
            .map_err(|_| ParseError { pos: start, msg: "integer out of u64 range".into() })
    }

    pub fn expect_bool(&mut self) -> Result<bool, ParseError> {
        match self.peek() {
            Some(b'0') => {
                self.pos += 1;
                Ok(false)
            }
            Some(b'1') => {
                self.pos += 1;
                Ok(true)
            }
            _ => self.err("expected boolean 0 or 1"),
        }
    }

    /// Quoted string with the canonical escape set. Rejects raw control
    /// bytes that the writer would have escaped, and invalid UTF-8.
    pub fn expect_string(&mut self) -> Result<String, ParseError> {
        self.expect_byte(b'"')?;
        let mut raw = Vec::new();
        loop {
            match self.peek() {
                None => return self.err("unterminated string"),
                Some(b'"') => {
                    self.pos += 1;
                    break;
                }
                Some(b'\\') => {
                    self.pos += 1;
                    match self.peek() {
                        Some(b'\\') => raw.push(b'\\'),
                        Some(b'"') => raw.push(b'"'),
                        Some(b'n') => raw.push(b'\n'),
                        Some(b'r') => raw.push(b'\r'),
                        _ => return self.err("invalid escape sequence"),
                    }
                    self.pos += 1;
                }
                Some(b'\n') | Some(b'\r') => return self.err("raw line break in string"),
                Some(b) => {
                    raw.push(b);
                    self.pos += 1;
                }
            }
        }
        match String::from_utf8(raw) {
            Ok(s) => Ok(s),
            Err(_) => self.err("string is not valid UTF-8"),
        }
    }

    /// Exactly 64 lowercase hex characters.
    pub fn expect_digest(&mut self) -> Result<Digest, ParseError> {
        let start = self.pos;
        if self.bytes.len() < start + 64 {
            return self.err("truncated digest");
        }
        let hexpart = &self.bytes[start..start + 64];
        if !hexpart.iter().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(b)) {
            return self.err("digest must be 64 lowercase hex characters");
        }
        self.pos += 64;
        let mut out = [0u8; 32];
        hex::decode_to_slice(hexpart, &mut out)
            .map_err(|_| ParseError { pos: start, msg: "invalid digest hex".into() })?;
        Ok(Digest(out))
    }

    pub(crate) fn set_pos(&mut self, pos: usize) {
        self.pos = pos;
    }

    pub(crate) fn peek_byte(&self) -> Option<u8> {
        self.peek()
    }

    pub(crate) fn slice_from(&self, start: usize) -> &'a [u8] {
        &self.bytes[start..self.pos]
    }

    /// Skip one field of unknown type: a quoted string, a (possibly nested)
    /// list, or an alphanumeric scalar with an optional `/` ratio separator.
    /// Used to preserve the raw parameter bytes of unrecognized ops so they
    /// survive re-encoding verbatim.
    pub(crate) fn skip_generic_field(&mut self) -> Result<(), ParseError> {
        match self.peek() {
            Some(b'"') => {
                self.expect_string()?;
                Ok(())
            }
            Some(b'[') => {
                self.pos += 1;
                if self.peek() == Some(b']') {
                    self.pos += 1;
                    return Ok(());
                }
                loop {
                    self.skip_generic_field()?;
                    match self.peek() {
                        Some(b',') => self.pos += 1,
                        Some(b']') => {
                            self.pos += 1;
                            return Ok(());
                        }
                        _ => return self.err("expected ',' or ']' in list"),
                    }
                }
            }
            Some(b) if b.is_ascii_alphanumeric() => {
                while matches!(self.peek(), Some(b) if b.is_ascii_alphanumeric()) {
                    self.pos += 1;
                }
                if self.peek() == Some(b'/') {
                    self.pos += 1;
                    let start = self.pos;
                    while matches!(self.peek(), Some(b) if b.is_ascii_alphanumeric()) {
                        self.pos += 1;
                    }
                    if self.pos == start {
                        return self.err("expected denominator after '/'");
                    }
                }
                Ok(())
            }
            _ => self.err("expected field"),
        }
    }

    /// `[u,u,...]` of uints, possibly empty.
    pub fn expect_uint_list(&mut self) -> Result<Vec<u64>, ParseError> {
        self.expect_byte(b'[')?;
        let mut items = Vec::new();
        if self.peek() == Some(b']') {
            self.pos += 1;
            return Ok(items);
        }
        loop {
            items.push(self.expect_uint()?);
            match self.peek() {
                Some(b',') => self.pos += 1,
                Some(b']') => {
                    self.pos += 1;
                    return Ok(items);
                }
                _ => return self.err("expected ',' or ']' in list"),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_input_digest_matches_reference_vector() {
        // SHA-256 of the empty string, from FIPS 180 test vectors.
        assert_eq!(
            sha256(b"").to_hex(),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
    }

    #[test]
    fn string_escaping_round_trips() {
        let cases = ["", "mix", "a\"b", "back\\slash", "line\nbreak", "cr\rhere", "tab\tok"];
        for case in cases {
            let mut out = String::new();
            write_string(&mut out, case);
            assert!(!out.contains('\n'), "encoded form must stay on one line: {out:?}");
            let mut cur = Cursor::new(out.as_bytes());
            assert_eq!(cur.expect_string().unwrap(), case);
            cur.expect_end().unwrap();
        }
    }

    #[test]
    fn uint_rejects_leading_zero() {
        let mut cur = Cursor::new(b"007");
        assert!(cur.expect_uint().is_err());
        let mut cur = Cursor::new(b"0");
        assert_eq!(cur.expect_uint().unwrap(), 0);
        let mut cur = Cursor::new(b"10");
        assert_eq!(cur.expect_uint().unwrap(), 10);
    }

    #[test]
    fn uint_rejects_overflow() {
        let mut cur = Cursor::new(b"18446744073709551616"); // u64::MAX + 1
        assert!(cur.expect_uint().is_err());
        let mut cur = Cursor::new(b"18446744073709551615");
        assert_eq!(cur.expect_uint().unwrap(), u64::MAX);
    }

    #[test]
    fn digest_hex_is_strict() {
        let d = sha256(b"x");
        let mut out = String::new();
        write_digest(&mut out, &d);
        let mut cur = Cursor::new(out.as_bytes());
        assert_eq!(cur.expect_digest().unwrap(), d);

        let upper = out.to_uppercase();
        let mut cur = Cursor::new(upper.as_bytes());
        assert!(cur.expect_digest().is_err());
    }

    #[test]
    fn uint_list_round_trips() {
        for items in [vec![], vec![1], vec![1, 2, 99]] {
            let mut out = String::new();
            write_uint_list(&mut out, items.iter().copied());
            let mut cur = Cursor::new(out.as_bytes());
            assert_eq!(cur.expect_uint_list().unwrap(), items);
        }
    }

    #[test]
    fn string_rejects_raw_linebreak_and_bad_escape() {
        let mut cur = Cursor::new(b"\"a\nb\"");
        assert!(cur.expect_string().is_err());
        let mut cur = Cursor::new(b"\"a\\tb\"");
        assert!(cur.expect_string().is_err());
    }
}
