//! Text similarity between findings.

use std::collections::BTreeSet;

use crate::model::Finding;

/// Lowercased alphanumeric tokens.
pub fn tokens(text: &str) -> BTreeSet<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Jaccard index. Two empty sets have similarity 0, not 1.
pub fn jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 0.0;
    }
    let shared = a.intersection(b).count();
    let union = a.len() + b.len() - shared;
    shared as f64 / union as f64
}

/// The parts of a finding that similarity looks at, pre-tokenized.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Profile {
    pub finding_key: String,
    pub title: BTreeSet<String>,
    pub description: BTreeSet<String>,
    pub cves: BTreeSet<String>,
    pub component: Option<String>,
}

impl Profile {
    pub fn of(finding: &Finding) -> Self {
        Profile {
            finding_key: finding.finding_key.clone(),
            title: tokens(&finding.title),
            description: tokens(&finding.description),
            cves: finding
                .identifiers
                .iter()
                .filter(|id| id.len() > 4 && id[..4].eq_ignore_ascii_case("cve-"))
                .map(|id| id.to_ascii_uppercase())
                .collect(),
            component: finding.location.component.clone(),
        }
    }
}

/// Similarity in [0, 1]. Exactly 1 for the same finding key, or for a shared
/// CVE identifier on the same component.
pub fn similarity(a: &Profile, b: &Profile) -> f64 {
    if a.finding_key == b.finding_key {
        return 1.0;
    }
    if a.component.is_some() && a.component == b.component && !a.cves.is_disjoint(&b.cves) {
        return 1.0;
    }
    jaccard(&a.title, &b.title).max(jaccard(&a.description, &b.description))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(words: &[&str]) -> BTreeSet<String> {
        words.iter().map(|w| w.to_string()).collect()
    }

    #[test]
    fn tokenizer_splits_on_non_alphanumerics_and_lowercases() {
        assert_eq!(tokens("SQL-Injection in /login (id=3)"), set(&["sql", "injection", "in", "login", "id", "3"]));
        assert!(tokens(" -- ").is_empty());
    }

    #[test]
    fn jaccard_values() {
        assert_eq!(jaccard(&set(&[]), &set(&[])), 0.0);
        assert_eq!(jaccard(&set(&["a"]), &set(&[])), 0.0);
        assert_eq!(jaccard(&set(&["a", "b"]), &set(&["b", "c"])), 1.0 / 3.0);
        assert_eq!(jaccard(&set(&["a", "b"]), &set(&["a", "b"])), 1.0);
    }

    fn profile(key: &str, title: &str, description: &str) -> Profile {
        Profile {
            finding_key: key.into(),
            title: tokens(title),
            description: tokens(description),
            cves: BTreeSet::new(),
            component: None,
        }
    }

    #[test]
    fn similarity_takes_the_better_field() {
        let a = profile("a", "x y", "p q r s");
        let b = profile("b", "z w", "p q r s");
        assert_eq!(similarity(&a, &b), 1.0);
        let c = profile("c", "x y", "unrelated");
        assert_eq!(similarity(&a, &c), 1.0);
        assert_eq!(similarity(&b, &c), 0.0);
    }

    #[test]
    fn shared_cve_on_same_component_is_a_match() {
        let mut a = profile("a", "one", "");
        let mut b = profile("b", "two", "");
        a.cves = set(&["CVE-2021-0001"]);
        b.cves = set(&["CVE-2021-0001"]);
        a.component = Some("libfoo@1.2".into());
        b.component = Some("libfoo@1.3".into());
        assert_eq!(similarity(&a, &b), 0.0);
        b.component = Some("libfoo@1.2".into());
        assert_eq!(similarity(&a, &b), 1.0);
    }
}
