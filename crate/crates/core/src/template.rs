//! Templates and the distance functions compared against decision thresholds.
//!
//! Every distance here is a symmetric prametric: `d(x, y) = d(y, x)`,
//! `d(x, y) >= 0` and `d(x, x) = 0`. Masked comparisons only look at
//! positions that are available in both masks; an empty joint mask is an
//! error rather than a zero distance, otherwise an all-zero mask would be
//! accepted against every template.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_LEN: usize = 2;
pub const MAX_LEN: usize = 4096;

/// Fixed-length bit vector. Position `i` is the `i`-th character of the
/// textual form (`"10110"` has position 0 set).
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BitTemplate {
    len: usize,
    words: Box<[u64]>,
}

impl BitTemplate {
    pub fn zeros(len: usize) -> Self {
        BitTemplate {
            len,
            words: vec![0u64; len.div_ceil(64)].into_boxed_slice(),
        }
    }

    pub fn ones(len: usize) -> Self {
        Self::from_fn(len, |_| true)
    }

    pub fn from_fn(len: usize, mut f: impl FnMut(usize) -> bool) -> Self {
        let mut words = vec![0u64; len.div_ceil(64)];
        for i in 0..len {
            if f(i) {
                words[i / 64] |= 1 << (i % 64);
            }
        }
        BitTemplate {
            len,
            words: words.into_boxed_slice(),
        }
    }

    /// Parses a string of `0`/`1` characters.
    pub fn parse_bits(s: &str) -> Result<Self> {
        let bytes = s.as_bytes();
        if let Some(bad) = bytes.iter().find(|b| **b != b'0' && **b != b'1') {
            return Err(Error::Validation(format!(
                "invalid bit character {:?} in {s:?}",
                *bad as char
            )));
        }
        Ok(Self::from_fn(bytes.len(), |i| bytes[i] == b'1'))
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len, "bit {i} out of range for length {}", self.len);
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn count_ones(&self) -> u32 {
        self.words.iter().map(|w| w.count_ones()).sum()
    }

    /// Copy with position `i` inverted.
    pub fn with_flipped(&self, i: usize) -> Self {
        assert!(i < self.len);
        let mut words = self.words.clone();
        words[i / 64] ^= 1 << (i % 64);
        BitTemplate {
            len: self.len,
            words,
        }
    }

    /// Integer value of the template read as a binary number, position 0
    /// being the most significant bit. Only defined for `len <= 64`.
    pub fn to_index(&self) -> u64 {
        assert!(self.len <= 64, "index form needs len <= 64");
        (0..self.len).fold(0u64, |acc, i| acc << 1 | self.get(i) as u64)
    }

    pub fn from_index(len: usize, index: u64) -> Self {
        assert!(len <= 64, "index form needs len <= 64");
        Self::from_fn(len, |i| index >> (len - 1 - i) & 1 == 1)
    }

    /// Hex form: four positions per digit, position `4j` is the high bit of
    /// digit `j`; trailing padding bits are zero.
    pub fn to_hex(&self) -> String {
        let digits = self.len.div_ceil(4);
        (0..digits)
            .map(|j| {
                let nibble = (0..4).fold(0u32, |acc, b| {
                    let pos = 4 * j + b;
                    acc << 1 | (pos < self.len && self.get(pos)) as u32
                });
                char::from_digit(nibble, 16).unwrap()
            })
            .collect()
    }

    pub fn from_hex(len: usize, s: &str) -> Result<Self> {
        let digits: Vec<u32> = s
            .chars()
            .map(|c| {
                c.to_digit(16)
                    .ok_or_else(|| Error::Validation(format!("invalid hex digit {c:?} in {s:?}")))
            })
            .collect::<Result<_>>()?;
        if digits.len() != len.div_ceil(4) {
            return Err(Error::Validation(format!(
                "hex template {s:?} has {} digits, expected {} for length {len}",
                digits.len(),
                len.div_ceil(4)
            )));
        }
        let bit_at = |pos: usize| digits[pos / 4] >> (3 - pos % 4) & 1 == 1;
        if (len..digits.len() * 4).any(bit_at) {
            return Err(Error::Validation(format!(
                "hex template {s:?} has padding bits set beyond length {len}"
            )));
        }
        Ok(Self::from_fn(len, bit_at))
    }
}

impl fmt::Display for BitTemplate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.len {
            f.write_str(if self.get(i) { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl fmt::Debug for BitTemplate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitTemplate({self})")
    }
}

/// Bits plus availability mask (1 = usable for comparison).
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct MaskedTemplate {
    bits: BitTemplate,
    mask: BitTemplate,
}

impl MaskedTemplate {
    pub fn new(bits: BitTemplate, mask: BitTemplate) -> Result<Self> {
        if bits.len() != mask.len() {
            return Err(Error::DimensionMismatch {
                left: bits.len(),
                right: mask.len(),
            });
        }
        Ok(MaskedTemplate { bits, mask })
    }

    pub fn full(bits: BitTemplate) -> Self {
        let mask = BitTemplate::ones(bits.len());
        MaskedTemplate { bits, mask }
    }

    pub fn bits(&self) -> &BitTemplate {
        &self.bits
    }

    pub fn mask(&self) -> &BitTemplate {
        &self.mask
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }
}

/// A point of the match space.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Template {
    Bits(BitTemplate),
    Masked(MaskedTemplate),
    /// Probe handle of a score-model world; distances to it are drawn from
    /// the model rather than computed.
    Score(u32),
}

impl Template {
    /// Stable text key: hex for bit templates, `bits/mask` hex for masked
    /// ones and `s<handle>` for score handles.
    pub fn key(&self) -> String {
        match self {
            Template::Bits(b) => b.to_hex(),
            Template::Masked(m) => format!("{}/{}", m.bits.to_hex(), m.mask.to_hex()),
            Template::Score(h) => format!("s{h}"),
        }
    }
}

impl fmt::Display for Template {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.key())
    }
}

/// Shape of the templates living in one space; handles key parsing and the
/// integer enumeration used by exact evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TemplateShape {
    Bits(usize),
    Masked(usize),
    Score(u32),
}

/// Single-word form of a template in an enumerable bit space.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct PackedPoint {
    pub bits: u64,
    pub mask: u64,
}

impl TemplateShape {
    pub fn parse_key(&self, key: &str) -> Result<Template> {
        match *self {
            TemplateShape::Bits(len) => Ok(Template::Bits(BitTemplate::from_hex(len, key)?)),
            TemplateShape::Masked(len) => {
                let (bits, mask) = key.split_once('/').ok_or_else(|| {
                    Error::Validation(format!("masked template key {key:?} lacks '/'"))
                })?;
                Ok(Template::Masked(MaskedTemplate::new(
                    BitTemplate::from_hex(len, bits)?,
                    BitTemplate::from_hex(len, mask)?,
                )?))
            }
            TemplateShape::Score(count) => {
                let handle = key
                    .strip_prefix('s')
                    .and_then(|h| h.parse::<u32>().ok())
                    .ok_or_else(|| Error::Validation(format!("invalid score handle {key:?}")))?;
                if handle >= count {
                    return Err(Error::Validation(format!(
                        "score handle {handle} out of range ({count} handles)"
                    )));
                }
                Ok(Template::Score(handle))
            }
        }
    }

    /// Checks that `t` belongs to this shape.
    pub fn check(&self, t: &Template) -> Result<()> {
        match (*self, t) {
            (TemplateShape::Bits(len), Template::Bits(b)) if b.len() == len => Ok(()),
            (TemplateShape::Masked(len), Template::Masked(m)) if m.len() == len => Ok(()),
            (TemplateShape::Score(count), Template::Score(h)) if *h < count => Ok(()),
            (TemplateShape::Bits(len) | TemplateShape::Masked(len), Template::Bits(b)) => {
                Err(Error::DimensionMismatch {
                    left: len,
                    right: b.len(),
                })
            }
            (TemplateShape::Bits(len) | TemplateShape::Masked(len), Template::Masked(m)) => {
                Err(Error::DimensionMismatch {
                    left: len,
                    right: m.len(),
                })
            }
            _ => Err(Error::Validation(format!(
                "template {t} does not belong to a {self:?} space"
            ))),
        }
    }

    /// Number of templates in the space.
    pub fn count(&self) -> u128 {
        match *self {
            TemplateShape::Bits(len) => 1u128 << len.min(127),
            TemplateShape::Masked(len) => 1u128 << (2 * len).min(127),
            TemplateShape::Score(count) => count as u128,
        }
    }

    /// Integer index of `t` in enumeration order. Bit templates are ordered
    /// by their binary value; masked templates by `(mask, bits)`.
    pub fn index_of(&self, t: &Template) -> Result<u64> {
        self.check(t)?;
        if self.count() > 1u128 << 63 {
            return Err(Error::SpaceTooLarge {
                templates: self.count(),
                limit: 1u128 << 63,
            });
        }
        Ok(match (*self, t) {
            (TemplateShape::Bits(_), Template::Bits(b)) => b.to_index(),
            (TemplateShape::Masked(len), Template::Masked(m)) => {
                m.mask.to_index() << len | m.bits.to_index()
            }
            (TemplateShape::Score(_), Template::Score(h)) => *h as u64,
            _ => unreachable!("checked above"),
        })
    }

    pub fn at_index(&self, index: u64) -> Template {
        match *self {
            TemplateShape::Bits(len) => Template::Bits(BitTemplate::from_index(len, index)),
            TemplateShape::Masked(len) => {
                let low = (1u64 << len) - 1;
                Template::Masked(MaskedTemplate {
                    bits: BitTemplate::from_index(len, index & low),
                    mask: BitTemplate::from_index(len, index >> len),
                })
            }
            TemplateShape::Score(_) => Template::Score(index as u32),
        }
    }

    pub fn packed(&self, index: u64) -> PackedPoint {
        match *self {
            TemplateShape::Bits(len) => PackedPoint {
                bits: index,
                mask: low_mask(len),
            },
            TemplateShape::Masked(len) => PackedPoint {
                bits: index & low_mask(len),
                mask: index >> len,
            },
            TemplateShape::Score(_) => PackedPoint {
                bits: index,
                mask: 0,
            },
        }
    }
}

fn low_mask(len: usize) -> u64 {
    if len >= 64 {
        u64::MAX
    } else {
        (1u64 << len) - 1
    }
}

/// Outcome of comparing two bit templates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Comparison {
    /// Differing positions among the jointly available ones.
    pub differing: u32,
    /// Jointly available positions.
    pub available: u32,
    pub distance: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DistanceFn {
    Hamming,
    FractionalHamming,
    AbsoluteScoreDifference,
}

impl DistanceFn {
    pub fn compare(&self, a: &Template, b: &Template) -> Result<Comparison> {
        if matches!(self, DistanceFn::AbsoluteScoreDifference) {
            return Err(Error::NotApplicable(
                "score-model distances are drawn from the model, not computed from templates"
                    .into(),
            ));
        }
        let (a_bits, a_mask) = bit_view(a)?;
        let (b_bits, b_mask) = bit_view(b)?;
        if a_bits.len() != b_bits.len() {
            return Err(Error::DimensionMismatch {
                left: a_bits.len(),
                right: b_bits.len(),
            });
        }
        let mut differing = 0u32;
        let mut available = 0u32;
        for w in 0..a_bits.words().len() {
            let joint = word_or_full(a_mask, w, a_bits) & word_or_full(b_mask, w, b_bits);
            available += joint.count_ones();
            differing += ((a_bits.words()[w] ^ b_bits.words()[w]) & joint).count_ones();
        }
        self.from_counts(differing, available)
    }

    /// Packed form of [`DistanceFn::compare`] for enumerable spaces.
    #[inline]
    pub fn compare_packed(&self, a: PackedPoint, b: PackedPoint) -> Result<Comparison> {
        let joint = a.mask & b.mask;
        self.from_counts(((a.bits ^ b.bits) & joint).count_ones(), joint.count_ones())
    }

    #[inline]
    pub fn from_counts(&self, differing: u32, available: u32) -> Result<Comparison> {
        if available == 0 {
            return Err(Error::NoComparableBits);
        }
        let distance = match self {
            DistanceFn::Hamming => differing as f64,
            DistanceFn::FractionalHamming => differing as f64 / available as f64,
            DistanceFn::AbsoluteScoreDifference => {
                return Err(Error::NotApplicable(
                    "score-model distances are not count based".into(),
                ))
            }
        };
        Ok(Comparison {
            differing,
            available,
            distance,
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            DistanceFn::Hamming => "hamming",
            DistanceFn::FractionalHamming => "fractional-hamming",
            DistanceFn::AbsoluteScoreDifference => "absolute-score-difference",
        }
    }
}

fn bit_view(t: &Template) -> Result<(&BitTemplate, Option<&BitTemplate>)> {
    match t {
        Template::Bits(b) => Ok((b, None)),
        Template::Masked(m) => Ok((&m.bits, Some(&m.mask))),
        Template::Score(_) => Err(Error::NotApplicable(
            "bit distances are undefined on score handles".into(),
        )),
    }
}

fn word_or_full(mask: Option<&BitTemplate>, w: usize, bits: &BitTemplate) -> u64 {
    match mask {
        Some(m) => m.words()[w],
        None => {
            let rem = bits.len() - 64 * w;
            low_mask(rem.min(64))
        }
    }
}

/// Number of differing positions.
pub fn hamming_distance(a: &BitTemplate, b: &BitTemplate) -> Result<u32> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    Ok(a.words()
        .iter()
        .zip(b.words())
        .map(|(x, y)| (x ^ y).count_ones())
        .sum())
}

/// Fractional Hamming distance over jointly unmasked positions, with the
/// number of such positions.
pub fn fractional_hd(a: &MaskedTemplate, b: &MaskedTemplate) -> Result<(f64, u32)> {
    let c = DistanceFn::FractionalHamming.compare(
        &Template::Masked(a.clone()),
        &Template::Masked(b.clone()),
    )?;
    Ok((c.distance, c.available))
}
