use std::collections::HashMap;

use serde::{Deserialize, Serialize};

/// Display name of index 0.
pub const UNKNOWN: &str = "<unk>";

/// Item-to-index map. Index 0 is the unknown item; known items follow in
/// first-appearance order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocab {
    items: Vec<String>,
    index: HashMap<String, usize>,
}

impl From<Vec<String>> for Vocab {
    fn from(items: Vec<String>) -> Self {
        Self::build(items)
    }
}

impl From<Vocab> for Vec<String> {
    fn from(v: Vocab) -> Self {
        v.items
    }
}

impl Vocab {
    pub fn build<I, S>(items: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut v = Self::default();
        for item in items {
            let item = item.into();
            if !v.index.contains_key(&item) {
                v.index.insert(item.clone(), v.items.len() + 1);
                v.items.push(item);
            }
        }
        v
    }

    /// Index of `item`, or 0 when unknown.
    pub fn get(&self, item: &str) -> usize {
        self.index.get(item).copied().unwrap_or(0)
    }

    pub fn contains(&self, item: &str) -> bool {
        self.index.contains_key(item)
    }

    /// Table size including the unknown row.
    pub fn len(&self) -> usize {
        self.items.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn item(&self, index: usize) -> Option<&str> {
        match index {
            0 => Some(UNKNOWN),
            i => self.items.get(i - 1).map(String::as_str),
        }
    }

    pub fn known(&self) -> &[String] {
        &self.items
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn five_tokens_give_six_rows() {
        let v = Vocab::build(["a", "b", "a", "c", "d", "e"]);
        assert_eq!(v.len(), 6);
        assert_eq!((v.get("a"), v.get("e"), v.get("zzz")), (1, 5, 0));
        assert_eq!(v.item(0), Some(UNKNOWN));
        let round: Vocab = serde_json::from_str(&serde_json::to_string(&v).unwrap()).unwrap();
        assert_eq!(round, v);
    }
}
