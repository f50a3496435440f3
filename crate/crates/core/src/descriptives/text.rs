//! Word counts, URL counts and cited domains of note text.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{welch_t, Group, TestResult};
use crate::data::Note;
use crate::exposure::{summarize, Summary};

fn url_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"https?://\S+").expect("static regex"))
}

const TRAILING: &[char] = &['.', ',', ';', ':', '!', '?', ')', ']', '}', '"', '\''];

/// URLs in order of appearance, trailing punctuation trimmed.
pub fn extract_urls(text: &str) -> Vec<&str> {
    url_regex()
        .find_iter(text)
        .map(|m| m.as_str().trim_end_matches(TRAILING))
        .collect()
}

/// Whitespace-separated tokens once URLs are removed.
pub fn word_count(text: &str) -> usize {
    url_regex().replace_all(text, " ").split_whitespace().count()
}

/// Lowercased host without a leading `www.`; x.com links under `/i/grok`
/// or `/grok` map to `x.com/grok`.
pub fn extract_domain(raw: &str) -> Option<String> {
    let u = url::Url::parse(raw).ok()?;
    let host = u.host_str()?.to_ascii_lowercase();
    let host = host.strip_prefix("www.").unwrap_or(&host).to_string();
    if host == "x.com" {
        let mut segs = u.path_segments().into_iter().flatten().filter(|s| !s.is_empty());
        let first = segs.next().map(str::to_ascii_lowercase);
        let second = segs.next().map(str::to_ascii_lowercase);
        let grok = match first.as_deref() {
            Some("grok") => true,
            Some("i") => second.as_deref() == Some("grok"),
            _ => false,
        };
        if grok {
            return Some("x.com/grok".into());
        }
    }
    Some(host)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainShare {
    pub domain: String,
    pub n_notes: usize,
    /// Percent of the group's notes citing the domain at least once.
    pub pct_notes: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupTextStats {
    pub n_notes: usize,
    pub words: Summary,
    pub urls: Summary,
    /// Every cited domain, most cited first (ties by name).
    pub domains: Vec<DomainShare>,
}

impl GroupTextStats {
    pub fn top(&self, k: usize) -> &[DomainShare] {
        &self.domains[..k.min(self.domains.len())]
    }

    pub fn share(&self, domain: &str) -> f64 {
        self.domains
            .iter()
            .find(|d| d.domain == domain)
            .map_or(0.0, |d| d.pct_notes)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextProfileReport {
    pub groups: BTreeMap<Group, GroupTextStats>,
    /// Welch t on word counts, LLM minus human, when both groups allow it.
    pub word_test: Option<TestResult>,
    pub url_test: Option<TestResult>,
}

/// Word counts, URL counts and notes per cited domain.
type TextTally = (Vec<f64>, Vec<f64>, BTreeMap<String, usize>);

pub fn text_profile(notes: &[Note]) -> TextProfileReport {
    let mut per: BTreeMap<Group, TextTally> = BTreeMap::new();
    for n in notes {
        let e = per.entry(Group::of(n.is_ai)).or_default();
        let urls = extract_urls(&n.text);
        e.0.push(word_count(&n.text) as f64);
        e.1.push(urls.len() as f64);
        let distinct: BTreeSet<String> = urls.iter().filter_map(|u| extract_domain(u)).collect();
        for d in distinct {
            *e.2.entry(d).or_default() += 1;
        }
    }
    let groups: BTreeMap<Group, GroupTextStats> = per
        .iter()
        .map(|(g, (w, u, doms))| {
            let n = w.len();
            let mut domains: Vec<DomainShare> = doms
                .iter()
                .map(|(d, c)| DomainShare {
                    domain: d.clone(),
                    n_notes: *c,
                    pct_notes: 100.0 * *c as f64 / n as f64,
                })
                .collect();
            domains.sort_by(|a, b| b.n_notes.cmp(&a.n_notes).then_with(|| a.domain.cmp(&b.domain)));
            (
                *g,
                GroupTextStats {
                    n_notes: n,
                    words: summarize(w),
                    urls: summarize(u),
                    domains,
                },
            )
        })
        .collect();
    let test = |k: usize| {
        let a = per.get(&Group::Llm)?;
        let b = per.get(&Group::Human)?;
        let (x, y) = if k == 0 { (&a.0, &b.0) } else { (&a.1, &b.1) };
        welch_t(x, y).ok()
    };
    TextProfileReport {
        word_test: test(0),
        url_test: test(1),
        groups,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn note(text: &str, ai: bool) -> Note {
        Note {
            note_id: "n".into(),
            tweet_id: "t".into(),
            is_ai: ai,
            created_at: 0,
            text: text.into(),
            is_media_note: false,
            writer_id: None,
        }
    }

    #[test]
    fn distinct_domain_counted_once() {
        let text = "Wrong. See https://reuters.com/a and https://reuters.com/b";
        assert_eq!(extract_urls(text).len(), 2);
        assert_eq!(word_count(text), 3);
        let r = text_profile(&[note(text, true)]);
        let g = &r.groups[&Group::Llm];
        assert_eq!(g.domains.len(), 1);
        assert_eq!(g.domains[0].domain, "reuters.com");
        assert_eq!(g.domains[0].n_notes, 1);
        assert_eq!(g.share("reuters.com"), 100.0);
    }

    #[test]
    fn domain_rules() {
        assert_eq!(extract_domain("https://WWW.BBC.com/news").unwrap(), "bbc.com");
        assert_eq!(
            extract_domain("https://en.wikipedia.org/wiki/X").unwrap(),
            "en.wikipedia.org"
        );
        assert_eq!(
            extract_domain("https://x.com/i/grok?conversation=1").unwrap(),
            "x.com/grok"
        );
        assert_eq!(extract_domain("https://x.com/someone/status/1").unwrap(), "x.com");
        assert_eq!(extract_urls("(see https://t.co/abc).")[0], "https://t.co/abc");
    }

    #[test]
    fn empty_input() {
        let r = text_profile(&[]);
        assert!(r.groups.is_empty());
        assert!(r.word_test.is_none());
    }

    proptest! {
        #[test]
        fn url_order_does_not_matter(mut hosts in prop::collection::vec("[a-c]{1,2}\\.(com|org)", 1..6), seed in any::<u64>()) {
            let text = |h: &[String]| h.iter().map(|d| format!("https://{d}/p")).collect::<Vec<_>>().join(" then ");
            let a = text_profile(&[note(&text(&hosts), false)]);
            let k = (seed as usize) % hosts.len();
            hosts.rotate_left(k);
            hosts.reverse();
            let b = text_profile(&[note(&text(&hosts), false)]);
            prop_assert_eq!(a, b);
        }
    }
}
