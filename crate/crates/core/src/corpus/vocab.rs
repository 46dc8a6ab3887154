use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng::{self, Purpose};

pub const PAD: usize = 0;
pub const UNK: usize = 1;

const PAD_TOKEN: &str = "<pad>";
const UNK_TOKEN: &str = "<unk>";

/// Token inventory; ids 0 and 1 are reserved for padding and unknowns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: BTreeMap<String, usize>,
}

impl Vocab {
    /// Vocabulary over `tokens`, which must be unique and must not repeat the
    /// reserved entries.
    pub fn new<I, S>(tokens: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut v = Vocab {
            tokens: Vec::new(),
            index: BTreeMap::new(),
        };
        for t in [PAD_TOKEN, UNK_TOKEN].into_iter().map(String::from).chain(tokens.into_iter().map(Into::into)) {
            if v.index.contains_key(&t) {
                return Err(Error::config(format!("duplicate vocabulary token {t:?}")));
            }
            v.index.insert(t.clone(), v.tokens.len());
            v.tokens.push(t);
        }
        Ok(v)
    }

    /// Full token list including the reserved entries, as stored on disk.
    pub fn from_stored(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < 2 || tokens[PAD] != PAD_TOKEN || tokens[UNK] != UNK_TOKEN {
            return Err(Error::config("stored vocabulary must start with <pad>, <unk>"));
        }
        Self::new(tokens.into_iter().skip(2))
    }

    /// `size` entries in total: the reserved pair plus `size − 2` distinct CJK
    /// ideographs picked and ordered by `grammar_seed`.
    pub fn synthetic(size: usize, grammar_seed: u64) -> Result<Self> {
        const FIRST: u32 = 0x4E00;
        const LAST: u32 = 0x9FA5;
        let real = size
            .checked_sub(2)
            .filter(|&n| n > 0)
            .ok_or_else(|| Error::config("vocabulary needs at least one non-reserved token"))?;
        let span = (LAST - FIRST + 1) as usize;
        if real > span {
            return Err(Error::config("synthetic vocabulary too large"));
        }
        let mut codes: Vec<u32> = (FIRST..=LAST).collect();
        let mut rng = rng::stream(grammar_seed, Purpose::Grammar, 0);
        codes.shuffle(&mut rng);
        Self::new(
            codes[..real]
                .iter()
                .map(|&c| char::from_u32(c).expect("CJK code point").to_string()),
        )
    }

    /// Vocabulary of the distinct characters of `texts` in first-seen order.
    pub fn from_chars<'a>(texts: impl IntoIterator<Item = &'a str>) -> Self {
        let mut seen = BTreeMap::new();
        let mut order = Vec::new();
        for t in texts {
            for c in t.chars() {
                let s = c.to_string();
                if s == PAD_TOKEN || s == UNK_TOKEN {
                    continue;
                }
                if seen.insert(s.clone(), ()).is_none() {
                    order.push(s);
                }
            }
        }
        Self::new(order).expect("distinct characters")
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.len() <= 2
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Ids of the non-reserved tokens.
    pub fn real_ids(&self) -> core::ops::Range<usize> {
        2..self.tokens.len()
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    /// Maps each character to its id, unknown characters to [`UNK`]. Returns
    /// the ids and the number of unknown characters.
    pub fn encode_chars(&self, text: &str) -> (Vec<usize>, usize) {
        let mut unknown = 0;
        let mut buf = [0u8; 4];
        let ids = text
            .chars()
            .map(|c| {
                self.id(c.encode_utf8(&mut buf)).unwrap_or_else(|| {
                    unknown += 1;
                    UNK
                })
            })
            .collect();
        (ids, unknown)
    }

    pub fn decode(&self, ids: &[usize]) -> String {
        ids.iter()
            .map(|&i| self.token(i).unwrap_or(UNK_TOKEN))
            .collect()
    }
}
