//! Seeded context-free grammar used to script dialogue text.

use rand::Rng;
use std::collections::BTreeMap;

/// Production rules. Alternatives are space-separated symbols; `<name>`
/// refers to another rule, anything else is a terminal word.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Grammar {
    rules: BTreeMap<String, Vec<Vec<String>>>,
}

impl Grammar {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn rule(mut self, name: &str, alternatives: &[&str]) -> Self {
        self.add(name, alternatives);
        self
    }

    pub fn add(&mut self, name: &str, alternatives: &[&str]) {
        let alts = alternatives.iter().map(|a| a.split_whitespace().map(str::to_string).collect()).collect();
        self.rules.insert(name.to_string(), alts);
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn has_rule(&self, name: &str) -> bool {
        self.rules.contains_key(name)
    }

    /// Every terminal reachable from any rule.
    pub fn terminals(&self) -> Vec<&str> {
        let mut out: Vec<&str> =
            self.rules.values().flatten().flatten().filter(|s| !is_nonterminal(s)).map(String::as_str).collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Expands `<name>` into words. Unknown rules expand to nothing; depth
    /// is capped so recursive grammars terminate.
    pub fn expand<R: Rng>(&self, name: &str, rng: &mut R) -> Vec<String> {
        let mut out = Vec::new();
        self.expand_into(name, rng, 0, &mut out);
        out
    }

    fn expand_into<R: Rng>(&self, name: &str, rng: &mut R, depth: usize, out: &mut Vec<String>) {
        if depth > 16 {
            return;
        }
        let Some(alts) = self.rules.get(name) else {
            return;
        };
        if alts.is_empty() {
            return;
        }
        let alt = &alts[rng.random_range(0..alts.len())];
        for sym in alt {
            if is_nonterminal(sym) {
                self.expand_into(&sym[1..sym.len() - 1], rng, depth + 1, out);
            } else {
                out.push(sym.clone());
            }
        }
    }

    pub fn sentence<R: Rng>(&self, name: &str, rng: &mut R) -> String {
        self.expand(name, rng).join(" ")
    }
}

fn is_nonterminal(s: &str) -> bool {
    s.len() > 2 && s.starts_with('<') && s.ends_with('>')
}
