//! CDCM code variants and per-cycle symbol encoding/decoding.
//!
//! Every codeword is one carrier-clock cycle of `n` unit intervals. Slots 0
//! and 1 carry the fixed "01" header that produces the single rising edge of
//! the cycle; the payload is unary (a run of ones followed by zeros), so the
//! only other transition is one falling edge whose position encodes the
//! symbol.

use std::fmt;

use serde::{Deserialize, Serialize};

/// Errors raised by scheme construction and per-cycle coding.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CodecError {
    /// Slot geometry violates the code family constraints.
    #[error("invalid geometry: n={n}, p={p} (require n >= 3 and p <= n-2)")]
    InvalidGeometry { n: usize, p: usize },
    /// Symbol not in the scheme's alphabet.
    #[error("symbol {0} out of range for this scheme")]
    SymbolOutOfRange(Symbol),
    /// Word length does not match the scheme's slot count.
    #[error("word length {got} does not match scheme length {want}")]
    LengthMismatch { want: usize, got: usize },
    /// Slots 0..2 are not the expected edge header.
    #[error("bad header: slots (0,1) are not the scheme's edge header")]
    BadHeader,
    /// Payload is not a single run of ones followed by zeros.
    #[error("payload is not unary (more than one high run)")]
    NonUnaryPayload,
    /// Well-formed word that is not part of this scheme's codebook.
    #[error("word has valid shape but is not in the codebook")]
    UnknownWord,
}

/// One symbol carried by a single carrier cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Symbol {
    /// No user data this cycle (only Ternary4 and Sparse20 have one).
    Idle,
    /// A user value in `0..=p` for general unary codes, one bit for
    /// minimal-distortion and sparse codes.
    Data(u32),
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Symbol::Idle => write!(f, "idle"),
            Symbol::Data(v) => write!(f, "{v}"),
        }
    }
}

/// An n-slot cycle word; slot index 0 is transmitted first.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CycleWord {
    bits: Vec<bool>,
}

impl CycleWord {
    pub fn new(bits: Vec<bool>) -> Self {
        Self { bits }
    }

    /// Parse from a "0101..." string, most significant slot first in time.
    pub fn from_str01(s: &str) -> Option<Self> {
        let mut bits = Vec::with_capacity(s.len());
        for c in s.chars() {
            match c {
                '0' => bits.push(false),
                '1' => bits.push(true),
                _ => return None,
            }
        }
        Some(Self { bits })
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    /// Fraction of slots spent high.
    pub fn duty(&self) -> f64 {
        let ones = self.bits.iter().filter(|&&b| b).count();
        ones as f64 / self.bits.len() as f64
    }

    /// Render as a 0/1 string in transmit order.
    pub fn to_str01(&self) -> String {
        self.bits.iter().map(|&b| if b { '1' } else { '0' }).collect()
    }
}

impl fmt::Display for CycleWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_str01())
    }
}

/// Which member of the code family a scheme belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// "01" header plus unary payload of up to `p` ones.
    GeneralUnary,
    /// One bit per cycle with the smallest possible duty distortion.
    MinimalDistortionN1,
    /// 4-slot ternary code whose idle word is the pure 50% carrier.
    Ternary4,
    /// 20-slot code confining duty to 45%..55%.
    Sparse20,
}

/// Sensitive-edge convention. `Positive` words start "01" and the carrier
/// timing rides on rising edges; `Negative` is the bit-inverted mirror.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    #[default]
    Positive,
    Negative,
}

/// A concrete CDCM code: geometry, payload capacity and codebook.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scheme {
    n: usize,
    p: usize,
    q: f64,
    variant: Variant,
    polarity: Polarity,
    codebook: Vec<(Symbol, CycleWord)>,
}

impl Scheme {
    /// Slots per carrier cycle.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Payload slot count.
    pub fn p(&self) -> usize {
        self.p
    }

    /// Average user bits per carrier cycle.
    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn polarity(&self) -> Polarity {
        self.polarity
    }

    /// Codebook entries in symbol order.
    pub fn codebook(&self) -> &[(Symbol, CycleWord)] {
        &self.codebook
    }

    /// The alphabet, in codebook order.
    pub fn symbols(&self) -> impl Iterator<Item = Symbol> + '_ {
        self.codebook.iter().map(|(s, _)| *s)
    }

    /// Whole user bits carried per cycle when driving the scheme from a
    /// binary stream (`floor(log2(p+1))` for general unary, 1 for the
    /// single-bit codes).
    pub fn bits_per_cycle(&self) -> usize {
        match self.variant {
            Variant::GeneralUnary => {
                let vals = self.p + 1;
                (usize::BITS - 1 - vals.leading_zeros()) as usize
            }
            Variant::MinimalDistortionN1 | Variant::Ternary4 | Variant::Sparse20 => 1,
        }
    }

    /// A human-readable name such as `cdcm-5-2` or `cdcm-20-1.5`.
    pub fn name(&self) -> String {
        match self.variant {
            Variant::GeneralUnary => {
                let q = self.q;
                if (q - q.round()).abs() < 1e-9 {
                    format!("cdcm-{}-{}", self.n, q.round() as u64)
                } else {
                    format!("cdcm-{}-{:.1}", self.n, q)
                }
            }
            Variant::MinimalDistortionN1 => format!("cdcm-{}-1", self.n),
            Variant::Ternary4 => "cdcm-4-1.5".to_string(),
            Variant::Sparse20 => "cdcm-20-1.5".to_string(),
        }
    }

    /// Mirror of this scheme for the opposite sensitive edge: every codeword
    /// bit-inverted, header "10", timing carried by falling edges.
    pub fn with_polarity(&self, polarity: Polarity) -> Scheme {
        if polarity == self.polarity {
            return self.clone();
        }
        let codebook = self
            .codebook
            .iter()
            .map(|(s, w)| (*s, CycleWord::new(w.bits().iter().map(|&b| !b).collect())))
            .collect();
        Scheme { codebook, polarity, ..self.clone() }
    }

    /// Look up the codeword for `symbol`.
    pub fn encode_cycle(&self, symbol: Symbol) -> Result<&CycleWord, CodecError> {
        self.codebook
            .iter()
            .find(|(s, _)| *s == symbol)
            .map(|(_, w)| w)
            .ok_or(CodecError::SymbolOutOfRange(symbol))
    }

    /// Decode an n-slot word back to its symbol, classifying malformed words.
    pub fn decode_cycle(&self, word: &CycleWord) -> Result<Symbol, CodecError> {
        self.decode_slots(word.bits())
    }

    /// Slice-level decode used by receivers that reassemble words from
    /// sampled slots without allocating a `CycleWord` per cycle.
    pub fn decode_slots(&self, slots: &[bool]) -> Result<Symbol, CodecError> {
        if slots.len() != self.n {
            return Err(CodecError::LengthMismatch { want: self.n, got: slots.len() });
        }
        // Header check is polarity-aware: "01" for positive, "10" for negative.
        let (h0, h1) = match self.polarity {
            Polarity::Positive => (false, true),
            Polarity::Negative => (true, false),
        };
        if slots[0] != h0 || slots[1] != h1 {
            return Err(CodecError::BadHeader);
        }
        // A unary payload has a single high run starting at slot 2 (positive
        // polarity); any later low-to-high transition is malformed.
        let payload = &slots[2..];
        let active = h1; // payload "ones" have the header-one level
        let mut in_run = true;
        for &s in payload {
            if s == active {
                if !in_run {
                    return Err(CodecError::NonUnaryPayload);
                }
            } else {
                in_run = false;
            }
        }
        self.codebook
            .iter()
            .find(|(_, w)| w.bits() == slots)
            .map(|(s, _)| *s)
            .ok_or(CodecError::UnknownWord)
    }

    /// Serial slot rate needed to carry a carrier of `f0_hz`.
    pub fn required_baud(&self, f0_hz: f64) -> f64 {
        self.n as f64 * f0_hz
    }

    /// Codebook as CSV conformance vectors: `scheme,symbol,word,duty`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("scheme,symbol,word,duty\n");
        let name = self.name();
        for (sym, word) in &self.codebook {
            out.push_str(&format!("{name},{sym},{},{}\n", word.to_str01(), word.duty()));
        }
        out
    }
}

/// Build a general unary word: "01" + 1^u 0^(p-u) + 0^(n-2-p).
fn unary_word(n: usize, p: usize, u: usize) -> CycleWord {
    debug_assert!(u <= p && p <= n - 2);
    let mut bits = Vec::with_capacity(n);
    bits.push(false);
    bits.push(true);
    for i in 0..n - 2 {
        bits.push(i < u);
    }
    CycleWord::new(bits)
}

/// General unary scheme CDCM-N-Q with payload of `p` slots and
/// `q = log2(p+1)` user bits per cycle.
pub fn make_general_unary(n: usize, p: usize) -> Result<Scheme, CodecError> {
    if n < 3 || p == 0 || p > n - 2 {
        return Err(CodecError::InvalidGeometry { n, p });
    }
    let codebook = (0..=p as u32)
        .map(|u| (Symbol::Data(u), unary_word(n, p, u as usize)))
        .collect();
    Ok(Scheme {
        n,
        p,
        q: ((p + 1) as f64).log2(),
        variant: Variant::GeneralUnary,
        polarity: Polarity::Positive,
        codebook,
    })
}

/// Maximum data transport efficiency of an n-slot code: log2(n-1)/n,
/// reached when all n-2 payload slots are used.
pub fn max_efficiency(n: usize) -> Result<f64, CodecError> {
    if n < 3 {
        return Err(CodecError::InvalidGeometry { n, p: 0 });
    }
    Ok(((n - 1) as f64).log2() / n as f64)
}

/// Minimal-distortion one-bit-per-cycle scheme. Odd n = 2k+1 keeps duty at
/// 0.5 +/- 1/(2n); even n = 2k (k >= 2) at 0.5 +/- 1/n. n = 4 is rejected
/// here because its minimal-distortion form is the ternary code.
pub fn make_minimal_distortion(n: usize) -> Result<Scheme, CodecError> {
    if n < 3 || (n % 2 == 0 && n / 2 < 2) || n == 4 {
        return Err(CodecError::InvalidGeometry { n, p: n.saturating_sub(2) });
    }
    let k = n / 2;
    let (u0, u1) = if n % 2 == 1 { (k - 1, k) } else { (k - 2, k) };
    let codebook = vec![
        (Symbol::Data(0), unary_word(n, n - 2, u0)),
        (Symbol::Data(1), unary_word(n, n - 2, u1)),
    ];
    Ok(Scheme {
        n,
        p: n - 2,
        q: 1.0,
        variant: Variant::MinimalDistortionN1,
        polarity: Polarity::Positive,
        codebook,
    })
}

/// Ternary 4-slot scheme: idle is the pure 50% carrier, data bits swing the
/// duty to 25% or 75%.
pub fn make_ternary4() -> Scheme {
    let codebook = vec![
        (Symbol::Idle, CycleWord::from_str01("0110").unwrap()),
        (Symbol::Data(0), CycleWord::from_str01("0100").unwrap()),
        (Symbol::Data(1), CycleWord::from_str01("0111").unwrap()),
    ];
    Scheme {
        n: 4,
        p: 2,
        q: 3f64.log2(),
        variant: Variant::Ternary4,
        polarity: Polarity::Positive,
        codebook,
    }
}

/// Sparse 20-slot scheme: one ternary symbol per cycle with duty confined
/// to 45%..55%.
pub fn make_sparse20() -> Scheme {
    let codebook = vec![
        (Symbol::Idle, unary_word(20, 18, 9)),
        (Symbol::Data(0), unary_word(20, 18, 8)),
        (Symbol::Data(1), unary_word(20, 18, 10)),
    ];
    Scheme {
        n: 20,
        p: 18,
        q: 3f64.log2(),
        variant: Variant::Sparse20,
        polarity: Polarity::Positive,
        codebook,
    }
}
