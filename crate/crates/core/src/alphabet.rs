//! Alphabets, sequence spaces and the mixed-radix index convention.
//!
//! Indices are little-endian: position 0 is the least significant digit, so
//! `(1, 2)` over three symbols encodes to `1 + 2 * 3 = 5`. Masked sequences
//! use the same convention with radix `S + 1`, the mask sentinel being the
//! digit `S`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A finite alphabet of `S >= 2` real symbols `0..S` plus the mask sentinel `S`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub struct Alphabet {
    size: usize,
}

impl Alphabet {
    pub fn new(size: usize) -> Result<Self> {
        if size < 2 {
            return Err(Error::Domain(format!("alphabet size must be >= 2, got {size}")));
        }
        if size > u16::MAX as usize {
            return Err(Error::Size(format!("alphabet size {size} too large")));
        }
        Ok(Self { size })
    }

    #[inline]
    pub fn size(&self) -> usize {
        self.size
    }

    #[inline]
    pub fn mask_index(&self) -> usize {
        self.size
    }

    #[inline]
    pub fn is_real(&self, token: usize) -> bool {
        token < self.size
    }

    /// Letter used for `token` in text formats: `A`, `B`, ... and `?` for the mask.
    pub fn symbol_char(&self, token: usize) -> Result<char> {
        if token == self.size {
            return Ok('?');
        }
        if token < self.size && token < 26 {
            return Ok((b'A' + token as u8) as char);
        }
        Err(Error::Domain(format!(
            "token {token} has no letter form for alphabet of size {}",
            self.size
        )))
    }

    pub fn parse_char(&self, c: char) -> Result<usize> {
        if c == '?' {
            return Ok(self.size);
        }
        let upper = c.to_ascii_uppercase();
        if upper.is_ascii_uppercase() {
            let token = (upper as u8 - b'A') as usize;
            if token < self.size {
                return Ok(token);
            }
        }
        Err(Error::InvalidData(format!(
            "character {c:?} is not a symbol of an alphabet of size {}",
            self.size
        )))
    }
}

impl TryFrom<usize> for Alphabet {
    type Error = Error;

    fn try_from(size: usize) -> Result<Self> {
        Alphabet::new(size)
    }
}

impl From<Alphabet> for usize {
    fn from(a: Alphabet) -> usize {
        a.size
    }
}

/// Fixed length `D` together with the alphabet: the space of `S^D` sequences.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SequenceSpace {
    len: usize,
    alphabet: Alphabet,
    num_states: usize,
    num_masked_states: Option<usize>,
}

impl SequenceSpace {
    /// Fails with a size error when `S^D` does not fit in a `usize`.
    pub fn new(len: usize, alphabet: Alphabet) -> Result<Self> {
        if len == 0 {
            return Err(Error::Domain("sequence length must be positive".into()));
        }
        let num_states = checked_pow(alphabet.size(), len).ok_or_else(|| {
            Error::Size(format!("{}^{} states overflow the index range", alphabet.size(), len))
        })?;
        Ok(Self {
            len,
            alphabet,
            num_states,
            num_masked_states: checked_pow(alphabet.size() + 1, len),
        })
    }

    pub fn with_sizes(len: usize, size: usize) -> Result<Self> {
        Self::new(len, Alphabet::new(size)?)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.len
    }

    /// Always false: spaces have at least one position.
    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn alphabet(&self) -> Alphabet {
        self.alphabet
    }

    #[inline]
    pub fn size(&self) -> usize {
        self.alphabet.size()
    }

    /// `S^D`.
    #[inline]
    pub fn num_states(&self) -> usize {
        self.num_states
    }

    /// `(S+1)^D`, the number of partially masked sequences.
    pub fn num_masked_states(&self) -> Result<usize> {
        self.num_masked_states.ok_or_else(|| {
            Error::Size(format!(
                "{}^{} masked states overflow the index range",
                self.size() + 1,
                self.len
            ))
        })
    }

    pub fn decode(&self, index: usize) -> Result<TokenSequence> {
        decode_index(index, self.len, self.size())
    }

    pub fn all_masked(&self) -> MaskedSequence {
        MaskedSequence {
            alphabet: self.alphabet,
            tokens: vec![self.alphabet.mask_index(); self.len],
        }
    }

    pub fn check_clean(&self, x: &TokenSequence) -> Result<()> {
        if x.len() != self.len || x.alphabet() != self.alphabet {
            return Err(Error::Shape(format!(
                "sequence of length {} over {} symbols does not belong to a space of length {} over {} symbols",
                x.len(),
                x.alphabet().size(),
                self.len,
                self.size()
            )));
        }
        Ok(())
    }

    pub fn check_masked(&self, x: &MaskedSequence) -> Result<()> {
        if x.len() != self.len || x.alphabet() != self.alphabet {
            return Err(Error::Shape(format!(
                "masked sequence of length {} over {} symbols does not belong to a space of length {} over {} symbols",
                x.len(),
                x.alphabet().size(),
                self.len,
                self.size()
            )));
        }
        Ok(())
    }

    /// Iterator over every clean sequence in index order.
    pub fn iter(&self) -> impl Iterator<Item = TokenSequence> + '_ {
        (0..self.num_states).map(move |i| self.decode(i).expect("index in range"))
    }
}

fn checked_pow(base: usize, exp: usize) -> Option<usize> {
    let mut acc: usize = 1;
    for _ in 0..exp {
        acc = acc.checked_mul(base)?;
    }
    Some(acc)
}

/// A clean sequence: every token is a real symbol.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TokenSequence {
    alphabet: Alphabet,
    tokens: Vec<usize>,
}

impl TokenSequence {
    pub fn new(tokens: Vec<usize>, alphabet: Alphabet) -> Result<Self> {
        if tokens.is_empty() {
            return Err(Error::Domain("sequence must be nonempty".into()));
        }
        if let Some((i, &t)) = tokens.iter().enumerate().find(|(_, &t)| !alphabet.is_real(t)) {
            return Err(Error::Domain(format!(
                "token {t} at position {i} is not a real symbol of an alphabet of size {}",
                alphabet.size()
            )));
        }
        Ok(Self { alphabet, tokens })
    }

    pub fn parse(text: &str, alphabet: Alphabet) -> Result<Self> {
        let tokens = text
            .trim()
            .chars()
            .map(|c| alphabet.parse_char(c))
            .collect::<Result<Vec<_>>>()?;
        Self::new(tokens, alphabet)
    }

    #[inline]
    pub fn tokens(&self) -> &[usize] {
        &self.tokens
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    #[inline]
    pub fn alphabet(&self) -> Alphabet {
        self.alphabet
    }

    pub fn encode(&self) -> usize {
        encode_index(self)
    }

    /// The same tokens, all observed.
    pub fn to_masked(&self) -> MaskedSequence {
        MaskedSequence {
            alphabet: self.alphabet,
            tokens: self.tokens.clone(),
        }
    }

    pub fn hamming(&self, other: &TokenSequence) -> usize {
        self.tokens
            .iter()
            .zip(&other.tokens)
            .filter(|(a, b)| a != b)
            .count()
    }
}

impl fmt::Display for TokenSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_tokens(f, &self.tokens, self.alphabet)
    }
}

fn write_tokens(f: &mut fmt::Formatter<'_>, tokens: &[usize], alphabet: Alphabet) -> fmt::Result {
    if alphabet.size() <= 26 {
        for &t in tokens {
            write!(f, "{}", alphabet.symbol_char(t).map_err(|_| fmt::Error)?)?;
        }
        Ok(())
    } else {
        let parts: Vec<String> = tokens
            .iter()
            .map(|&t| if t == alphabet.mask_index() { "?".to_string() } else { t.to_string() })
            .collect();
        write!(f, "{}", parts.join(","))
    }
}

/// A partially masked sequence `x_t`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct MaskedSequence {
    alphabet: Alphabet,
    tokens: Vec<usize>,
}

impl MaskedSequence {
    pub fn new(tokens: Vec<usize>, alphabet: Alphabet) -> Result<Self> {
        if tokens.is_empty() {
            return Err(Error::Domain("sequence must be nonempty".into()));
        }
        if let Some((i, &t)) = tokens.iter().enumerate().find(|(_, &t)| t > alphabet.mask_index()) {
            return Err(Error::Domain(format!("token {t} at position {i} is out of range")));
        }
        Ok(Self { alphabet, tokens })
    }

    pub fn parse(text: &str, alphabet: Alphabet) -> Result<Self> {
        let tokens = text
            .trim()
            .chars()
            .map(|c| alphabet.parse_char(c))
            .collect::<Result<Vec<_>>>()?;
        Self::new(tokens, alphabet)
    }

    #[inline]
    pub fn tokens(&self) -> &[usize] {
        &self.tokens
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    #[inline]
    pub fn alphabet(&self) -> Alphabet {
        self.alphabet
    }

    #[inline]
    pub fn is_masked(&self, position: usize) -> bool {
        self.tokens[position] == self.alphabet.mask_index()
    }

    /// The set `M_t`.
    pub fn masked_positions(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.is_masked(i)).collect()
    }

    /// The set `U_t`.
    pub fn unmasked_positions(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| !self.is_masked(i)).collect()
    }

    pub fn num_masked(&self) -> usize {
        self.tokens.iter().filter(|&&t| t == self.alphabet.mask_index()).count()
    }

    pub fn is_clean(&self) -> bool {
        self.num_masked() == 0
    }

    /// Converts to a clean sequence; fails if any position is still masked.
    pub fn to_clean(&self) -> Result<TokenSequence> {
        if let Some(i) = (0..self.len()).find(|&i| self.is_masked(i)) {
            return Err(Error::Domain(format!("position {i} is still masked")));
        }
        Ok(TokenSequence {
            alphabet: self.alphabet,
            tokens: self.tokens.clone(),
        })
    }

    /// Copy with `position` set to `token` (which may be the mask sentinel).
    pub fn with_token(&self, position: usize, token: usize) -> MaskedSequence {
        let mut tokens = self.tokens.clone();
        tokens[position] = token;
        MaskedSequence {
            alphabet: self.alphabet,
            tokens,
        }
    }

    pub fn set(&mut self, position: usize, token: usize) {
        debug_assert!(token <= self.alphabet.mask_index());
        self.tokens[position] = token;
    }

    /// Little-endian index with radix `S + 1`.
    pub fn masked_index(&self) -> usize {
        let radix = self.alphabet.size() + 1;
        self.tokens.iter().rev().fold(0usize, |acc, &t| acc * radix + t)
    }

    /// Observed `(position, token)` pairs.
    pub fn observed(&self) -> Vec<(usize, usize)> {
        self.tokens
            .iter()
            .enumerate()
            .filter(|(_, &t)| t != self.alphabet.mask_index())
            .map(|(i, &t)| (i, t))
            .collect()
    }

    /// Whether the clean sequence agrees with every unmasked token.
    pub fn is_consistent_with(&self, x: &TokenSequence) -> bool {
        self.tokens
            .iter()
            .zip(x.tokens())
            .all(|(&m, &c)| m == self.alphabet.mask_index() || m == c)
    }
}

impl fmt::Display for MaskedSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_tokens(f, &self.tokens, self.alphabet)
    }
}

/// Mixed-radix index of a clean sequence (little-endian).
pub fn encode_index(x: &TokenSequence) -> usize {
    let radix = x.alphabet.size();
    x.tokens.iter().rev().fold(0usize, |acc, &t| acc * radix + t)
}

/// Inverse of [`encode_index`].
pub fn decode_index(index: usize, len: usize, size: usize) -> Result<TokenSequence> {
    let alphabet = Alphabet::new(size)?;
    let total = checked_pow(size, len)
        .ok_or_else(|| Error::Size(format!("{size}^{len} states overflow the index range")))?;
    if index >= total {
        return Err(Error::Domain(format!("index {index} out of range for {total} states")));
    }
    let mut rest = index;
    let tokens = (0..len)
        .map(|_| {
            let t = rest % size;
            rest /= size;
            t
        })
        .collect();
    TokenSequence::new(tokens, alphabet)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn index_examples() {
        let a = Alphabet::new(3).unwrap();
        assert_eq!(encode_index(&TokenSequence::new(vec![0, 0], a).unwrap()), 0);
        // Position 0 is the least significant digit: 1 + 2 * 3.
        assert_eq!(encode_index(&TokenSequence::new(vec![1, 2], a).unwrap()), 7);
        assert_eq!(decode_index(7, 2, 3).unwrap().tokens(), &[1, 2]);
        assert_eq!(encode_index(&TokenSequence::new(vec![2, 1], a).unwrap()), 5);
    }

    #[test]
    fn exhaustive_round_trip() {
        for (len, size) in [(4, 3), (1, 2), (8, 4), (16, 2)] {
            let space = SequenceSpace::with_sizes(len, size).unwrap();
            assert!(space.num_states() <= 65536);
            for i in 0..space.num_states() {
                assert_eq!(space.decode(i).unwrap().encode(), i);
            }
        }
    }

    #[test]
    fn overflow_is_a_construction_error() {
        assert!(matches!(SequenceSpace::with_sizes(200, 20), Err(Error::Size(_))));
        assert!(matches!(decode_index(0, 200, 20), Err(Error::Size(_))));
    }

    #[test]
    fn out_of_range_tokens_rejected() {
        let a = Alphabet::new(2).unwrap();
        assert!(TokenSequence::new(vec![0, 2], a).is_err());
        assert!(MaskedSequence::new(vec![0, 2], a).is_ok());
        assert!(MaskedSequence::new(vec![0, 3], a).is_err());
        assert!(Alphabet::new(1).is_err());
    }

    #[test]
    fn masked_partition() {
        let a = Alphabet::new(2).unwrap();
        let x = MaskedSequence::parse("A?B?", a).unwrap();
        assert_eq!(x.masked_positions(), vec![1, 3]);
        assert_eq!(x.unmasked_positions(), vec![0, 2]);
        assert_eq!(x.to_string(), "A?B?");
        assert!(x.to_clean().is_err());
        assert_eq!(x.masked_index(), 0 + 2 * 3 + 1 * 9 + 2 * 27);
    }

    proptest! {
        #[test]
        fn decode_encode_round_trip(len in 1usize..10, size in 2usize..6, seed in any::<u64>()) {
            let space = SequenceSpace::with_sizes(len, size).unwrap();
            let index = (seed as usize) % space.num_states();
            let x = space.decode(index).unwrap();
            prop_assert_eq!(x.encode(), index);
            let text = x.to_string();
            prop_assert_eq!(TokenSequence::parse(&text, space.alphabet()).unwrap(), x);
        }
    }
}
