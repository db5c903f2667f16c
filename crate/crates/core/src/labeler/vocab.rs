//! Character-level vocabulary with three reserved ids.

use std::collections::HashMap;

pub const PAD_INDEX: usize = 0;
pub const UNK_INDEX: usize = 1;
pub const CLS_INDEX: usize = 2;

const RESERVED: [&str; 3] = ["<pad>", "<unk>", "<cls>"];

/// Maps characters to dense ids. Ids 0..3 are reserved (pad, unk, cls);
/// corpus characters follow in first-occurrence order, so building from
/// the same corpus always yields the same table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<char, usize>,
}

impl Vocab {
    /// Build from corpus texts, scanning texts and characters in order.
    pub fn build<'a>(texts: impl IntoIterator<Item = &'a str>) -> Self {
        let mut vocab = Self {
            tokens: RESERVED.iter().map(|s| s.to_string()).collect(),
            index: HashMap::new(),
        };
        for text in texts {
            for ch in text.chars() {
                vocab.intern(ch);
            }
        }
        vocab
    }

    fn intern(&mut self, ch: char) {
        if !self.index.contains_key(&ch) {
            let id = self.tokens.len();
            self.tokens.push(ch.to_string());
            self.index.insert(ch, id);
        }
    }

    /// Rebuild from a stored token list (checkpoint loading). The list must
    /// start with the three reserved tokens and contain single characters
    /// after that, each at most once.
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self, String> {
        if tokens.len() < RESERVED.len() || tokens[..RESERVED.len()] != RESERVED {
            return Err(format!("vocabulary must start with {:?}", RESERVED));
        }
        let mut index = HashMap::new();
        for (id, token) in tokens.iter().enumerate().skip(RESERVED.len()) {
            let mut chars = token.chars();
            let (ch, rest) = (chars.next(), chars.next());
            let ch = match (ch, rest) {
                (Some(c), None) => c,
                _ => return Err(format!("token {id} is not a single character: {token:?}")),
            };
            if index.insert(ch, id).is_some() {
                return Err(format!("duplicate character {ch:?} in vocabulary"));
            }
        }
        Ok(Self { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false // the reserved tokens are always present
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn id_of(&self, ch: char) -> usize {
        self.index.get(&ch).copied().unwrap_or(UNK_INDEX)
    }

    /// Token ids for a text: a leading CLS, then one id per character,
    /// truncated to `max_len` ids total. Empty text becomes a single PAD,
    /// so its pooled vector is the learned representation of padding.
    /// The flag reports whether truncation dropped characters.
    pub fn encode(&self, text: &str, max_len: usize) -> (Vec<usize>, bool) {
        debug_assert!(max_len > 0);
        if text.is_empty() {
            return (vec![PAD_INDEX], false);
        }
        let mut ids = vec![CLS_INDEX];
        let mut truncated = false;
        for ch in text.chars() {
            if ids.len() == max_len {
                truncated = true;
                break;
            }
            ids.push(self.id_of(ch));
        }
        (ids, truncated)
    }
}
