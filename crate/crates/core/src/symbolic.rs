//! Words over `{L, R}` and the rotational symbol sequences built from them.
//!
//! A rotational word `W[l, m, n]` is one period of the sequence whose `i`-th
//! element is `L` exactly when `i*m/n mod 1` lies in `[0, l/n)`. All index
//! arithmetic on words is taken modulo the word length.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Symbol {
    L,
    R,
}

impl Symbol {
    pub fn toggled(self) -> Symbol {
        match self {
            Symbol::L => Symbol::R,
            Symbol::R => Symbol::L,
        }
    }

    pub fn as_char(self) -> char {
        match self {
            Symbol::L => 'L',
            Symbol::R => 'R',
        }
    }
}

/// Non-negative remainder of `i` modulo `n`.
pub fn wrap(i: i64, n: usize) -> usize {
    i.rem_euclid(n as i64) as usize
}

/// Element `i` of the bi-infinite sequence `S[alpha, beta]`.
///
/// `i*alpha mod 1` is taken with the mathematical (non-negative) remainder,
/// so negative `i` is fine.
pub fn sequence_element(alpha: f64, beta: f64, i: i64) -> Symbol {
    let phase = (i as f64 * alpha).rem_euclid(1.0);
    if phase < beta {
        Symbol::L
    } else {
        Symbol::R
    }
}

/// Euclid's gcd on non-negative integers.
pub fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

/// The inverse `d` of `m` modulo `n`, with `d` in `[1, n-1]` (or `0` when `n == 1`).
pub fn mod_inverse(m: i64, n: i64) -> Result<i64> {
    if n < 1 {
        return Err(Error::InvalidWord(format!("modulus must be positive, got {n}")));
    }
    let (mut r0, mut r1) = (n, m.rem_euclid(n));
    let (mut t0, mut t1) = (0i64, 1i64);
    while r1 != 0 {
        let q = r0 / r1;
        (r0, r1) = (r1, r0 - q * r1);
        (t0, t1) = (t1, t0 - q * t1);
    }
    if r0 != 1 {
        return Err(Error::InvalidWord(format!("gcd({m}, {n}) = {r0}, no inverse")));
    }
    Ok(t0.rem_euclid(n))
}

/// `(l, m, n, d)` metadata of a rotational word.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RotationalParams {
    pub l: usize,
    pub m: usize,
    pub n: usize,
    pub d: usize,
}

impl RotationalParams {
    pub fn new(l: usize, m: usize, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidWord(format!("period n must be at least 2, got {n}")));
        }
        if l < 1 || l >= n {
            return Err(Error::InvalidWord(format!("l must lie in [1, {}], got {l}", n - 1)));
        }
        if m < 1 || m >= n {
            return Err(Error::InvalidWord(format!("m must lie in [1, {}], got {m}", n - 1)));
        }
        if gcd(m as u64, n as u64) != 1 {
            return Err(Error::InvalidWord(format!("gcd({m}, {n}) != 1")));
        }
        let d = mod_inverse(m as i64, n as i64)? as usize;
        Ok(Self { l, m, n, d })
    }

    /// `k*d mod n` for a possibly negative multiplier `k`.
    pub fn index(&self, k: i64) -> usize {
        wrap(k * self.d as i64, self.n)
    }
}

/// A finite word over `{L, R}`. Immutable; operations return new words.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SymbolWord {
    symbols: Vec<Symbol>,
    rotational: Option<RotationalParams>,
}

impl SymbolWord {
    pub fn new(symbols: Vec<Symbol>) -> Result<Self> {
        if symbols.is_empty() {
            return Err(Error::InvalidWord("word must have at least one symbol".into()));
        }
        Ok(Self { symbols, rotational: None })
    }

    /// The word `W[l, m, n]`: elements `0..n` of `S[m/n, l/n]`.
    ///
    /// Built with exact integer arithmetic (`i*m mod n < l`), which is the
    /// same condition as the real-valued definition without rounding.
    pub fn rotational(l: usize, m: usize, n: usize) -> Result<Self> {
        let params = RotationalParams::new(l, m, n)?;
        let symbols = (0..n).map(|i| if (i * m) % n < l { Symbol::L } else { Symbol::R }).collect();
        Ok(Self { symbols, rotational: Some(params) })
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn symbols(&self) -> &[Symbol] {
        &self.symbols
    }

    pub fn rotational_params(&self) -> Option<RotationalParams> {
        self.rotational
    }

    /// Element `i`, with `i` reduced modulo the length.
    pub fn get(&self, i: i64) -> Symbol {
        self.symbols[wrap(i, self.len())]
    }

    pub fn count(&self, s: Symbol) -> usize {
        self.symbols.iter().filter(|&&x| x == s).count()
    }

    /// The `i`-th left cyclic permutation: element `j` of the result is
    /// element `j + i` of `self`.
    pub fn cyclic_shift(&self, i: i64) -> SymbolWord {
        let n = self.len();
        let k = wrap(i, n);
        let mut symbols = Vec::with_capacity(n);
        symbols.extend_from_slice(&self.symbols[k..]);
        symbols.extend_from_slice(&self.symbols[..k]);
        SymbolWord { symbols, rotational: None }
    }

    /// The word that differs from `self` only in element `i`.
    pub fn flip(&self, i: i64) -> SymbolWord {
        let mut symbols = self.symbols.clone();
        let k = wrap(i, self.len());
        symbols[k] = symbols[k].toggled();
        SymbolWord { symbols, rotational: None }
    }

    /// Whether `other` equals `self` up to a cyclic shift; returns the shift.
    pub fn shift_to(&self, other: &SymbolWord) -> Option<usize> {
        if self.len() != other.len() {
            return None;
        }
        (0..self.len()).find(|&k| self.cyclic_shift(k as i64).symbols == other.symbols)
    }
}

impl fmt::Display for SymbolWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.symbols {
            write!(f, "{}", s.as_char())?;
        }
        Ok(())
    }
}

impl FromStr for SymbolWord {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let symbols = s
            .trim()
            .chars()
            .map(|c| match c {
                'L' | 'l' => Ok(Symbol::L),
                'R' | 'r' => Ok(Symbol::R),
                other => Err(Error::InvalidWord(format!("unexpected symbol '{other}' in \"{s}\""))),
            })
            .collect::<Result<Vec<_>>>()?;
        SymbolWord::new(symbols)
    }
}

impl Serialize for SymbolWord {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for SymbolWord {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
