//! The topics taxonomy: ids, slash-delimited names, and the parent forest.
//!
//! Files are tab-separated with an `id<TAB>name` header and ids ascending.
//! Parents are not stored in the file; they are derived by stripping the last
//! path segment, so a file cannot disagree with itself about the hierarchy.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const BUNDLED_V1: &str = include_str!("../data/taxonomy_v1.tsv");

/// Topic identifier. Id 0 is reserved for the Unknown sentinel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TopicId(pub u16);

impl TopicId {
    pub const UNKNOWN: TopicId = TopicId(0);

    pub fn is_unknown(self) -> bool {
        self == Self::UNKNOWN
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for TopicId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Topic {
    pub id: TopicId,
    pub name: String,
    pub parent: Option<TopicId>,
}

impl Topic {
    pub fn is_root(&self) -> bool {
        self.parent.is_none()
    }
}

/// A validated, immutable taxonomy.
#[derive(Debug, Clone)]
pub struct Taxonomy {
    topics: Vec<Topic>,
    by_name: HashMap<String, TopicId>,
    // dense id -> position in `topics`
    slots: Vec<Option<u32>>,
}

impl Taxonomy {
    /// The bundled v1 taxonomy (349 topics under 24 root categories).
    pub fn v1() -> Self {
        Self::parse(BUNDLED_V1, "taxonomy_v1.tsv").expect("bundled taxonomy is valid")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Parses the tab-separated taxonomy format. `source_name` is used in
    /// error messages only.
    pub fn parse(text: &str, source_name: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, header)) if header.trim_end() == "id\tname" => {}
            Some((_, header)) if !header.trim().is_empty() => {
                return Err(Error::parse(
                    source_name,
                    1,
                    format!("expected header `id<TAB>name`, found {header:?}"),
                ))
            }
            _ => return Err(Error::parse(source_name, 1, "no topics")),
        }

        let mut topics: Vec<Topic> = Vec::new();
        let mut by_name = HashMap::new();
        for (idx, raw) in lines {
            let line_no = idx + 1;
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            let (id_str, name) = line
                .split_once('\t')
                .ok_or_else(|| Error::parse(source_name, line_no, "expected `id<TAB>name`"))?;
            let id: u16 = id_str
                .trim()
                .parse()
                .map_err(|_| Error::parse(source_name, line_no, format!("bad id {id_str:?}")))?;
            if id == 0 {
                return Err(Error::parse(
                    source_name,
                    line_no,
                    "id 0 is reserved for Unknown",
                ));
            }
            let id = TopicId(id);
            if let Some(last) = topics.last() {
                if id == last.id {
                    return Err(Error::parse(
                        source_name,
                        line_no,
                        format!("duplicate id {id}"),
                    ));
                }
                if id < last.id {
                    return Err(Error::parse(
                        source_name,
                        line_no,
                        format!("id {id} out of ascending order"),
                    ));
                }
            }
            let name = name.trim().to_string();
            if !name.starts_with('/') || name.split('/').skip(1).any(|seg| seg.trim().is_empty()) {
                return Err(Error::parse(
                    source_name,
                    line_no,
                    format!("malformed topic path {name:?}"),
                ));
            }
            let parent = match name.rfind('/') {
                Some(0) => None,
                Some(cut) => {
                    let parent_name = &name[..cut];
                    match by_name.get(parent_name) {
                        Some(&pid) => Some(pid),
                        None => {
                            return Err(Error::parse(
                                source_name,
                                line_no,
                                format!("dangling parent {parent_name:?}"),
                            ))
                        }
                    }
                }
                None => unreachable!("path starts with '/'"),
            };
            if by_name.insert(name.clone(), id).is_some() {
                return Err(Error::parse(
                    source_name,
                    line_no,
                    format!("duplicate topic name {name:?}"),
                ));
            }
            topics.push(Topic { id, name, parent });
        }
        if topics.is_empty() {
            return Err(Error::parse(source_name, 1, "no topics"));
        }

        let max_id = topics.last().map(|t| t.id.index()).unwrap_or(0);
        let mut slots = vec![None; max_id + 1];
        for (pos, t) in topics.iter().enumerate() {
            slots[t.id.index()] = Some(pos as u32);
        }
        Ok(Taxonomy {
            topics,
            by_name,
            slots,
        })
    }

    /// Number of topics, not counting Unknown.
    pub fn omega(&self) -> usize {
        self.topics.len()
    }

    pub fn topics(&self) -> &[Topic] {
        &self.topics
    }

    pub fn ids(&self) -> impl Iterator<Item = TopicId> + '_ {
        self.topics.iter().map(|t| t.id)
    }

    /// The i-th topic in id order; the uniform sample space for noisy draws.
    pub fn topic_at(&self, i: usize) -> TopicId {
        self.topics[i].id
    }

    /// Largest topic id, for sizing dense per-topic arrays.
    pub fn max_id(&self) -> TopicId {
        self.topics.last().map(|t| t.id).unwrap_or(TopicId::UNKNOWN)
    }

    pub fn contains(&self, id: TopicId) -> bool {
        self.position(id).is_some()
    }

    pub fn position(&self, id: TopicId) -> Option<usize> {
        self.slots
            .get(id.index())
            .copied()
            .flatten()
            .map(|p| p as usize)
    }

    pub fn get(&self, id: TopicId) -> Option<&Topic> {
        self.position(id).map(|p| &self.topics[p])
    }

    pub fn by_name(&self, name: &str) -> Option<TopicId> {
        self.by_name.get(name).copied()
    }

    pub fn name(&self, id: TopicId) -> Option<&str> {
        if id.is_unknown() {
            return Some("Unknown");
        }
        self.get(id).map(|t| t.name.as_str())
    }

    /// Immediate parent. Roots and Unknown have none; ids outside the
    /// taxonomy are an error.
    pub fn parent_of(&self, id: TopicId) -> Result<Option<TopicId>> {
        if id.is_unknown() {
            return Ok(None);
        }
        self.get(id)
            .map(|t| t.parent)
            .ok_or_else(|| Error::Domain(format!("topic {id} is not in the taxonomy")))
    }

    pub fn root_of(&self, id: TopicId) -> Result<TopicId> {
        let mut cur = id;
        while let Some(p) = self.parent_of(cur)? {
            cur = p;
        }
        Ok(cur)
    }

    pub fn roots(&self) -> impl Iterator<Item = &Topic> {
        self.topics.iter().filter(|t| t.is_root())
    }

    /// Number of topics under each root category, the root included, in
    /// root id order.
    pub fn root_subtree_sizes(&self) -> Vec<(String, usize)> {
        let mut counts: HashMap<TopicId, usize> = HashMap::new();
        for t in &self.topics {
            let root = self.root_of(t.id).expect("ids come from the taxonomy");
            *counts.entry(root).or_default() += 1;
        }
        self.roots()
            .map(|r| (r.name.clone(), counts[&r.id]))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_v1_has_349_topics_and_24_roots() {
        let tax = Taxonomy::v1();
        assert_eq!(tax.omega(), 349);
        assert_eq!(tax.roots().count(), 24);
    }

    #[test]
    fn per_root_subtree_sizes() {
        let expected = [
            ("/Arts & Entertainment", 56),
            ("/Autos & Vehicles", 29),
            ("/Beauty & Fitness", 14),
            ("/Books & Literature", 3),
            ("/Business & Industrial", 23),
            ("/Computers & Electronics", 23),
            ("/Finance", 23),
            ("/Food & Drink", 8),
            ("/Games", 16),
            ("/Hobbies & Leisure", 11),
            ("/Home & Garden", 8),
            ("/Internet & Telecom", 11),
            ("/Jobs & Education", 13),
            ("/Law & Government", 4),
            ("/News", 7),
            ("/Online Communities", 4),
            ("/People & Society", 9),
            ("/Pets & Animals", 9),
            ("/Real Estate", 3),
            ("/Reference", 4),
            ("/Science", 10),
            ("/Shopping", 10),
            ("/Sports", 33),
            ("/Travel & Transportation", 18),
        ];
        let got = Taxonomy::v1().root_subtree_sizes();
        let got: Vec<(&str, usize)> = got.iter().map(|(n, c)| (n.as_str(), *c)).collect();
        assert_eq!(got, expected);
        assert_eq!(got.iter().map(|(_, c)| c).sum::<usize>(), 349);
    }

    #[test]
    fn parent_chain_example() {
        let tax = Taxonomy::v1();
        let sales = tax
            .by_name("/Business & Industrial/Advertising & Marketing/Sales")
            .unwrap();
        let parent = tax.parent_of(sales).unwrap().unwrap();
        assert_eq!(
            tax.name(parent),
            Some("/Business & Industrial/Advertising & Marketing")
        );
        let grand = tax.parent_of(parent).unwrap().unwrap();
        assert_eq!(tax.name(grand), Some("/Business & Industrial"));
        assert_eq!(tax.parent_of(grand).unwrap(), None);
    }

    #[test]
    fn roots_and_unknown_have_no_parent() {
        let tax = Taxonomy::v1();
        let news = tax.by_name("/News").unwrap();
        assert_eq!(tax.parent_of(news).unwrap(), None);
        assert_eq!(tax.parent_of(TopicId::UNKNOWN).unwrap(), None);
    }

    #[test]
    fn foreign_topic_is_a_domain_error() {
        let tax = Taxonomy::v1();
        assert!(matches!(tax.parent_of(TopicId(999)), Err(Error::Domain(_))));
    }

    #[test]
    fn parent_name_is_proper_prefix() {
        let tax = Taxonomy::v1();
        for t in tax.topics() {
            if let Some(p) = t.parent {
                let pname = tax.name(p).unwrap();
                assert!(t.name.len() > pname.len());
                assert!(t.name.starts_with(&format!("{pname}/")));
            }
        }
    }

    #[test]
    fn empty_file_is_rejected() {
        assert!(Taxonomy::parse("", "empty").is_err());
        assert!(Taxonomy::parse("id\tname\n", "header-only").is_err());
    }

    #[test]
    fn malformed_rows_name_the_line() {
        let err = Taxonomy::parse("id\tname\n1\t/A\nx\t/B\n", "t").unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");

        let dup = Taxonomy::parse("id\tname\n1\t/A\n1\t/B\n", "t").unwrap_err();
        assert!(dup.to_string().contains("duplicate id"), "{dup}");

        let dangling = Taxonomy::parse("id\tname\n1\t/A\n2\t/B/C\n", "t").unwrap_err();
        assert!(
            dangling.to_string().contains("dangling parent"),
            "{dangling}"
        );

        let order = Taxonomy::parse("id\tname\n2\t/A\n1\t/B\n", "t").unwrap_err();
        assert!(order.to_string().contains("ascending"), "{order}");
    }

    #[test]
    fn sparse_ids_are_supported() {
        let tax = Taxonomy::parse("id\tname\n3\t/A\n10\t/A/B\n", "t").unwrap();
        assert_eq!(tax.omega(), 2);
        assert_eq!(tax.max_id(), TopicId(10));
        assert_eq!(tax.parent_of(TopicId(10)).unwrap(), Some(TopicId(3)));
        assert!(!tax.contains(TopicId(4)));
    }
}
