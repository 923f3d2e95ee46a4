//! Category tree used to classify content and map profile data to keywords.
//!
//! Paths are slash-joined node names from a root, e.g. `technology/mobile`.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::text;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryNode {
    pub name: String,
    /// Keywords (possibly multi-word) whose presence selects this node.
    #[serde(default)]
    pub triggers: Vec<String>,
    #[serde(default)]
    pub children: Vec<CategoryNode>,
}

impl CategoryNode {
    pub fn new(name: &str, triggers: &[&str], children: Vec<CategoryNode>) -> Self {
        Self {
            name: name.to_string(),
            triggers: triggers.iter().map(|t| t.to_string()).collect(),
            children,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Taxonomy {
    pub categories: Vec<CategoryNode>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TaxonomyError {
    #[error("taxonomy has no categories")]
    Empty,
    #[error("category name {0:?} is empty or contains '/'")]
    BadName(String),
    #[error("duplicate category path {0}")]
    Duplicate(String),
}

/// A node together with its full path.
#[derive(Debug, Clone, Copy)]
pub struct NodeRef<'a> {
    pub path: &'a str,
    pub node: &'a CategoryNode,
}

impl Taxonomy {
    pub fn new(categories: Vec<CategoryNode>) -> Result<Self, TaxonomyError> {
        let taxonomy = Self { categories };
        taxonomy.validate()?;
        Ok(taxonomy)
    }

    pub fn validate(&self) -> Result<(), TaxonomyError> {
        if self.categories.is_empty() {
            return Err(TaxonomyError::Empty);
        }
        let mut seen = HashSet::new();
        for (path, node) in self.paths() {
            if node.name.is_empty() || node.name.contains('/') {
                return Err(TaxonomyError::BadName(node.name.clone()));
            }
            if !seen.insert(path.clone()) {
                return Err(TaxonomyError::Duplicate(path));
            }
        }
        Ok(())
    }

    /// Every node with its path, depth-first in declaration order.
    pub fn paths(&self) -> Vec<(String, &CategoryNode)> {
        fn walk<'a>(prefix: &str, nodes: &'a [CategoryNode], out: &mut Vec<(String, &'a CategoryNode)>) {
            for node in nodes {
                let path = if prefix.is_empty() {
                    node.name.clone()
                } else {
                    format!("{prefix}/{}", node.name)
                };
                out.push((path.clone(), node));
                walk(&path, &node.children, out);
            }
        }
        let mut out = Vec::new();
        walk("", &self.categories, &mut out);
        out
    }

    pub fn resolve(&self, path: &str) -> Option<&CategoryNode> {
        let mut level = &self.categories;
        let mut found = None;
        for part in path.split('/') {
            let node = level.iter().find(|n| n.name == part)?;
            level = &node.children;
            found = Some(node);
        }
        found
    }

    pub fn contains(&self, path: &str) -> bool {
        self.resolve(path).is_some()
    }

    /// All trigger keywords, lowercased and deduplicated, in tree order.
    pub fn triggers(&self) -> Vec<String> {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for (_, node) in self.paths() {
            for trigger in &node.triggers {
                if let Some(t) = text::normalize_keyword(trigger) {
                    if seen.insert(t.clone()) {
                        out.push(t);
                    }
                }
            }
        }
        out
    }

    /// Trigger keywords and lowercased category names, deduplicated.
    /// This is the vocabulary profile data is matched against.
    pub fn vocabulary(&self) -> Vec<String> {
        let mut out = self.triggers();
        let mut seen: HashSet<String> = out.iter().cloned().collect();
        for (_, node) in self.paths() {
            if let Some(name) = text::normalize_keyword(&node.name) {
                if seen.insert(name.clone()) {
                    out.push(name);
                }
            }
        }
        out
    }
}

impl Default for Taxonomy {
    fn default() -> Self {
        use CategoryNode as N;
        Self {
            categories: vec![
                N::new(
                    "technology",
                    &["technology", "tech", "software", "internet"],
                    vec![
                        N::new("mobile", &["android", "iphone", "smartphone", "tablet"], vec![]),
                        N::new("computing", &["linux", "windows", "laptop", "programming"], vec![]),
                        N::new("science", &["space", "physics", "research"], vec![]),
                    ],
                ),
                N::new(
                    "sports",
                    &["sports", "sport"],
                    vec![
                        N::new("cricket", &["cricket", "sachin tendulkar", "world cup", "ipl"], vec![]),
                        N::new("football", &["football", "soccer", "premier league"], vec![]),
                        N::new("golf", &["golf", "pga"], vec![]),
                        N::new("tennis", &["tennis", "wimbledon"], vec![]),
                    ],
                ),
                N::new(
                    "entertainment",
                    &["entertainment"],
                    vec![
                        N::new("movies", &["movies", "movie", "film", "cinema"], vec![]),
                        N::new("music", &["music", "album", "concert"], vec![]),
                    ],
                ),
                N::new(
                    "lifestyle",
                    &["lifestyle"],
                    vec![
                        N::new("travel", &["travel", "tourism"], vec![]),
                        N::new("food", &["food", "recipe", "restaurant"], vec![]),
                        N::new("health", &["health", "fitness"], vec![]),
                    ],
                ),
                N::new("business", &["business", "economy", "markets", "startup"], vec![]),
            ],
        }
    }
}
