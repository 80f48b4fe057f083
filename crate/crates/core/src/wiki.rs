//! Per-project knowledge graph: typed nodes stored as Markdown pages, typed
//! edges in an append-only JSON-lines file.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frontmatter::{self, Document, Frontmatter};
use crate::fsutil::{self, atomic_write, sha256_hex};

pub const QUERY_PACK_CAP: usize = 8000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntityType {
    Paper,
    Idea,
    Experiment,
    Claim,
}

impl EntityType {
    pub const ALL: [EntityType; 4] = [Self::Paper, Self::Idea, Self::Experiment, Self::Claim];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Paper => "paper",
            Self::Idea => "idea",
            Self::Experiment => "experiment",
            Self::Claim => "claim",
        }
    }

    pub fn statuses(self) -> &'static [&'static str] {
        match self {
            Self::Paper => &["ingested"],
            Self::Idea => &["proposed", "active", "rejected"],
            Self::Experiment => &["planned", "running", "done", "failed"],
            Self::Claim => &["untested", "supported", "partially_supported", "invalidated"],
        }
    }

    pub fn default_status(self) -> &'static str {
        self.statuses()[0]
    }
}

impl FromStr for EntityType {
    type Err = WikiError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|e| e.as_str() == s)
            .ok_or_else(|| WikiError::UnknownEntityType(s.to_string()))
    }
}

impl fmt::Display for EntityType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    Extends,
    Contradicts,
    AddressesGap,
    InspiredBy,
    TestedBy,
    Supports,
    Invalidates,
    Supersedes,
}

impl Relation {
    pub const ALL: [Relation; 8] = [
        Self::Extends,
        Self::Contradicts,
        Self::AddressesGap,
        Self::InspiredBy,
        Self::TestedBy,
        Self::Supports,
        Self::Invalidates,
        Self::Supersedes,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Extends => "extends",
            Self::Contradicts => "contradicts",
            Self::AddressesGap => "addresses_gap",
            Self::InspiredBy => "inspired_by",
            Self::TestedBy => "tested_by",
            Self::Supports => "supports",
            Self::Invalidates => "invalidates",
            Self::Supersedes => "supersedes",
        }
    }
}

impl FromStr for Relation {
    type Err = WikiError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| WikiError::UnknownRelation(s.to_string()))
    }
}

#[derive(Debug, Error)]
pub enum WikiError {
    #[error("node id `{0}` already exists")]
    DuplicateId(String),
    #[error("edge endpoint `{0}` does not exist")]
    UnknownEndpoint(String),
    #[error("unknown relation `{0}`")]
    UnknownRelation(String),
    #[error("edge {src} -{relation}-> {dst} already exists")]
    DuplicateEdge { src: String, dst: String, relation: String },
    #[error("unknown entity type `{0}`")]
    UnknownEntityType(String),
    #[error("status `{status}` is not valid for a {entity}")]
    InvalidStatus { entity: EntityType, status: String },
    #[error("node id `{0}` is not of the form <type>/<slug>-<hex>")]
    MalformedId(String),
    #[error("node `{0}` not found")]
    UnknownNode(String),
    #[error("node `{0}` is not a claim")]
    NotAClaim(String),
    #[error("wiki page {path}: {reason}")]
    CorruptPage { path: String, reason: String },
    #[error("wiki i/o: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WikiNode {
    pub node_id: String,
    pub entity_type: EntityType,
    pub title: String,
    pub status: String,
    pub body: String,
    pub created_seq: u64,
    pub updated_seq: u64,
    pub tombstoned: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WikiEdge {
    pub seq: u64,
    pub src: String,
    pub dst: String,
    pub relation: Relation,
}

#[derive(Debug, Clone, Default)]
pub struct NewNode {
    pub entity_type: Option<EntityType>,
    pub title: String,
    pub body: String,
    pub status: Option<String>,
    /// Explicit id, for imports. Generated when absent.
    pub node_id: Option<String>,
}

impl NewNode {
    pub fn new(entity_type: EntityType, title: impl Into<String>) -> Self {
        Self {
            entity_type: Some(entity_type),
            title: title.into(),
            ..Self::default()
        }
    }

    pub fn status(mut self, status: impl Into<String>) -> Self {
        self.status = Some(status.into());
        self
    }

    pub fn body(mut self, body: impl Into<String>) -> Self {
        self.body = body.into();
        self
    }
}

pub fn slugify(title: &str) -> String {
    let mut out = String::new();
    for c in title.chars().flat_map(char::to_lowercase) {
        if c.is_ascii_alphanumeric() {
            out.push(c);
        } else if !out.ends_with('-') && !out.is_empty() {
            out.push('-');
        }
        if out.len() >= 40 {
            break;
        }
    }
    let out = out.trim_end_matches('-');
    if out.is_empty() {
        "untitled".to_string()
    } else {
        out.to_string()
    }
}

fn valid_node_id(id: &str, entity: EntityType) -> bool {
    let Some(rest) = id.strip_prefix(entity.as_str()).and_then(|r| r.strip_prefix('/')) else {
        return false;
    };
    let Some((slug, hex)) = rest.rsplit_once('-') else {
        return false;
    };
    !slug.is_empty()
        && slug.chars().all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '-')
        && hex.len() == 6
        && hex.chars().all(|c| c.is_ascii_hexdigit() && !c.is_ascii_uppercase())
}

#[derive(Debug, Clone, Default)]
pub struct Wiki {
    root: Option<PathBuf>,
    nodes: BTreeMap<String, WikiNode>,
    edges: Vec<WikiEdge>,
    edge_keys: HashSet<(String, String, Relation)>,
    next_seq: u64,
}

impl PartialEq for Wiki {
    fn eq(&self, other: &Self) -> bool {
        self.nodes == other.nodes && self.edges == other.edges
    }
}

impl Wiki {
    pub fn in_memory() -> Self {
        Self {
            next_seq: 1,
            ..Self::default()
        }
    }

    pub fn dir(project_root: &Path) -> PathBuf {
        project_root.join(".aris/wiki")
    }

    /// Load the wiki stored under a project, or start an empty one there.
    pub fn open(project_root: &Path) -> Result<Self, WikiError> {
        let dir = Self::dir(project_root);
        let mut wiki = Self {
            root: Some(dir.clone()),
            next_seq: 1,
            ..Self::default()
        };
        for entity in EntityType::ALL {
            let sub = dir.join(entity.as_str());
            let Ok(rd) = fs::read_dir(&sub) else { continue };
            let mut paths: Vec<PathBuf> = rd
                .flatten()
                .map(|e| e.path())
                .filter(|p| p.extension().is_some_and(|x| x == "md"))
                .collect();
            paths.sort();
            for path in paths {
                let node = read_page(&path, entity)?;
                wiki.next_seq = wiki.next_seq.max(node.updated_seq + 1).max(node.created_seq + 1);
                wiki.nodes.insert(node.node_id.clone(), node);
            }
        }
        let (edges, skipped) = fsutil::read_jsonl::<WikiEdge>(&dir.join("edges.jsonl"))?;
        if let Some(bad) = skipped.iter().find(|s| !s.torn_tail) {
            return Err(WikiError::CorruptPage {
                path: dir.join("edges.jsonl").display().to_string(),
                reason: format!("line {}: {}", bad.line_no, bad.reason),
            });
        }
        for e in edges {
            wiki.next_seq = wiki.next_seq.max(e.seq + 1);
            wiki.edge_keys.insert((e.src.clone(), e.dst.clone(), e.relation));
            wiki.edges.push(e);
        }
        Ok(wiki)
    }

    fn bump(&mut self) -> u64 {
        let s = self.next_seq.max(1);
        self.next_seq = s + 1;
        s
    }

    pub fn node(&self, id: &str) -> Option<&WikiNode> {
        self.nodes.get(id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &WikiNode> {
        self.nodes.values()
    }

    pub fn edges(&self) -> &[WikiEdge] {
        &self.edges
    }

    pub fn add_node(&mut self, new: NewNode) -> Result<String, WikiError> {
        let entity = new
            .entity_type
            .ok_or_else(|| WikiError::UnknownEntityType(String::new()))?;
        let status = new.status.unwrap_or_else(|| entity.default_status().to_string());
        if !entity.statuses().contains(&status.as_str()) {
            return Err(WikiError::InvalidStatus { entity, status });
        }
        let seq = self.bump();
        let node_id = match new.node_id {
            Some(id) => {
                if !valid_node_id(&id, entity) {
                    return Err(WikiError::MalformedId(id));
                }
                if self.nodes.contains_key(&id) {
                    return Err(WikiError::DuplicateId(id));
                }
                id
            }
            None => {
                let slug = slugify(&new.title);
                let mut nonce = 0u32;
                loop {
                    let digest = sha256_hex(format!("{entity}\n{}\n{seq}\n{nonce}", new.title).as_bytes());
                    let id = format!("{entity}/{slug}-{}", &digest[..6]);
                    if !self.nodes.contains_key(&id) {
                        break id;
                    }
                    nonce += 1;
                }
            }
        };
        let node = WikiNode {
            node_id: node_id.clone(),
            entity_type: entity,
            title: new.title,
            status,
            body: new.body,
            created_seq: seq,
            updated_seq: seq,
            tombstoned: false,
        };
        self.persist_node(&node)?;
        self.nodes.insert(node_id.clone(), node);
        Ok(node_id)
    }

    pub fn add_edge(&mut self, src: &str, dst: &str, relation: &str) -> Result<(), WikiError> {
        let relation = Relation::from_str(relation)?;
        for end in [src, dst] {
            if !self.nodes.contains_key(end) {
                return Err(WikiError::UnknownEndpoint(end.to_string()));
            }
        }
        let key = (src.to_string(), dst.to_string(), relation);
        if self.edge_keys.contains(&key) {
            return Err(WikiError::DuplicateEdge {
                src: key.0,
                dst: key.1,
                relation: relation.as_str().to_string(),
            });
        }
        let edge = WikiEdge {
            seq: self.bump(),
            src: key.0.clone(),
            dst: key.1.clone(),
            relation,
        };
        if let Some(dir) = &self.root {
            fsutil::append_line(
                &dir.join("edges.jsonl"),
                &serde_json::to_string(&edge).expect("edge serializes"),
            )?;
        }
        self.edge_keys.insert(key);
        self.edges.push(edge);
        Ok(())
    }

    /// Replace a node's status and append the transition to its page history.
    pub fn set_status(&mut self, node_id: &str, status: &str) -> Result<&WikiNode, WikiError> {
        let entity = self
            .nodes
            .get(node_id)
            .ok_or_else(|| WikiError::UnknownNode(node_id.to_string()))?
            .entity_type;
        if !entity.statuses().contains(&status) {
            return Err(WikiError::InvalidStatus {
                entity,
                status: status.to_string(),
            });
        }
        let seq = self.bump();
        let mut node = self.nodes[node_id].clone();
        if !node.body.contains(HISTORY_HEADING) {
            if !node.body.is_empty() && !node.body.ends_with('\n') {
                node.body.push('\n');
            }
            node.body.push('\n');
            node.body.push_str(HISTORY_HEADING);
            node.body.push('\n');
        }
        node.body
            .push_str(&format!("- {} -> {} (seq {seq})\n", node.status, status));
        node.status = status.to_string();
        node.updated_seq = seq;
        self.persist_node(&node)?;
        self.nodes.insert(node_id.to_string(), node);
        Ok(&self.nodes[node_id])
    }

    pub fn update_claim_status(&mut self, claim_id: &str, verdict: &str) -> Result<&WikiNode, WikiError> {
        let node = self
            .nodes
            .get(claim_id)
            .ok_or_else(|| WikiError::UnknownNode(claim_id.to_string()))?;
        if node.entity_type != EntityType::Claim {
            return Err(WikiError::NotAClaim(claim_id.to_string()));
        }
        if !matches!(verdict, "supported" | "partially_supported" | "invalidated") {
            return Err(WikiError::InvalidStatus {
                entity: EntityType::Claim,
                status: verdict.to_string(),
            });
        }
        self.set_status(claim_id, verdict)
    }

    /// Mark a node deleted. The id stays reserved and its edges remain.
    pub fn tombstone(&mut self, node_id: &str) -> Result<(), WikiError> {
        let mut node = self
            .nodes
            .get(node_id)
            .cloned()
            .ok_or_else(|| WikiError::UnknownNode(node_id.to_string()))?;
        node.tombstoned = true;
        node.updated_seq = self.bump();
        self.persist_node(&node)?;
        self.nodes.insert(node_id.to_string(), node);
        Ok(())
    }

    /// Rejected ideas plus ideas a claim has invalidated.
    pub fn banlist(&self) -> BTreeSet<String> {
        let mut out: BTreeSet<String> = self
            .nodes
            .values()
            .filter(|n| n.entity_type == EntityType::Idea && n.status == "rejected")
            .map(|n| n.node_id.clone())
            .collect();
        for e in &self.edges {
            if e.relation != Relation::Invalidates {
                continue;
            }
            let (Some(src), Some(dst)) = (self.nodes.get(&e.src), self.nodes.get(&e.dst)) else {
                continue;
            };
            if src.entity_type == EntityType::Claim && dst.entity_type == EntityType::Idea {
                out.insert(dst.node_id.clone());
            }
        }
        out
    }

    fn persist_node(&self, node: &WikiNode) -> Result<(), WikiError> {
        let Some(dir) = &self.root else { return Ok(()) };
        let path = dir.join(format!("{}.md", node.node_id));
        atomic_write(&path, render_page(node).as_bytes())?;
        Ok(())
    }

    pub fn build_query_pack(&self) -> QueryPack {
        let entries = self.pack_entries();
        let keep = fitting_prefix(&entries, QUERY_PACK_CAP);
        let text = render_pack_prefix(&entries, keep);
        let mut sections = PackSections::default();
        for e in &entries[..keep] {
            sections.get_mut(e.section).push(e.node_id.clone());
        }
        QueryPack {
            char_count: text.chars().count(),
            text,
            sections,
            omitted: entries.len() - keep,
        }
    }

    pub fn write_query_pack(&self) -> Result<QueryPack, WikiError> {
        let pack = self.build_query_pack();
        if let Some(dir) = &self.root {
            atomic_write(&dir.join("query_pack.md"), pack.text.as_bytes())?;
        }
        Ok(pack)
    }

    /// All candidate pack entries in priority order.
    #[doc(hidden)]
    pub fn pack_entries(&self) -> Vec<PackEntry> {
        let one_line = |s: &str| s.split_whitespace().collect::<Vec<_>>().join(" ");
        let mut out = Vec::new();

        let mut gaps: Vec<&WikiEdge> = self
            .edges
            .iter()
            .filter(|e| e.relation == Relation::AddressesGap)
            .filter(|e| !self.nodes[&e.dst].tombstoned && !self.nodes[&e.src].tombstoned)
            .collect();
        gaps.sort_by(|a, b| b.seq.cmp(&a.seq));
        for e in gaps {
            let dst = &self.nodes[&e.dst];
            out.push(PackEntry {
                section: Section::Gaps,
                node_id: dst.node_id.clone(),
                line: format!("- {} ({}) <- {}", one_line(&dst.title), dst.node_id, e.src),
            });
        }

        let mut invalidated_at: BTreeMap<&str, u64> = BTreeMap::new();
        for e in self.edges.iter().filter(|e| e.relation == Relation::Invalidates) {
            let at = invalidated_at.entry(e.dst.as_str()).or_insert(0);
            *at = (*at).max(e.seq);
        }
        let mut banned: Vec<&WikiNode> = self.banlist().iter().map(|id| &self.nodes[id]).collect();
        let recency = |n: &WikiNode| n.updated_seq.max(*invalidated_at.get(n.node_id.as_str()).unwrap_or(&0));
        banned.sort_by(|a, b| recency(b).cmp(&recency(a)).then_with(|| a.node_id.cmp(&b.node_id)));
        for n in banned {
            out.push(PackEntry {
                section: Section::RejectedIdeas,
                node_id: n.node_id.clone(),
                line: format!("- {}: {}", n.node_id, one_line(&n.title)),
            });
        }

        let mut ranked = |section: Section, keep: &dyn Fn(&WikiNode) -> bool| {
            let mut picked: Vec<&WikiNode> = self.nodes.values().filter(|n| !n.tombstoned && keep(n)).collect();
            picked.sort_by(|a, b| b.updated_seq.cmp(&a.updated_seq).then_with(|| a.node_id.cmp(&b.node_id)));
            for n in picked {
                out.push(PackEntry {
                    section,
                    node_id: n.node_id.clone(),
                    line: format!("- {} ({}): {}", n.node_id, n.status, one_line(&n.title)),
                });
            }
        };
        ranked(Section::ValidatedClaims, &|n| {
            n.entity_type == EntityType::Claim && matches!(n.status.as_str(), "supported" | "partially_supported")
        });
        ranked(Section::RecentExperiments, &|n| n.entity_type == EntityType::Experiment);
        out
    }
}

const HISTORY_HEADING: &str = "## Status history";

fn render_page(node: &WikiNode) -> String {
    let mut fm = Frontmatter::new();
    fm.set_scalar("node_id", &node.node_id);
    fm.set_scalar("entity_type", node.entity_type.as_str());
    fm.set_scalar("status", &node.status);
    fm.set_scalar("title", &node.title);
    fm.set_scalar("created_seq", node.created_seq.to_string());
    fm.set_scalar("updated_seq", node.updated_seq.to_string());
    if node.tombstoned {
        fm.set_scalar("tombstoned", "true");
    }
    frontmatter::serialize(&Document {
        frontmatter: fm,
        body: node.body.clone(),
    })
}

fn read_page(path: &Path, entity: EntityType) -> Result<WikiNode, WikiError> {
    let corrupt = |reason: String| WikiError::CorruptPage {
        path: path.display().to_string(),
        reason,
    };
    let text = fs::read_to_string(path)?;
    let doc = frontmatter::parse(&text).map_err(|e| corrupt(e.to_string()))?;
    let fm = &doc.frontmatter;
    let field = |k: &str| fm.scalar(k).map(str::to_string).ok_or_else(|| corrupt(format!("missing `{k}`")));
    let num = |k: &str| -> Result<u64, WikiError> {
        field(k)?.parse().map_err(|_| corrupt(format!("`{k}` is not a number")))
    };
    let declared: EntityType = field("entity_type")?.parse()?;
    if declared != entity {
        return Err(corrupt(format!("stored under {entity} but declares {declared}")));
    }
    Ok(WikiNode {
        node_id: field("node_id")?,
        entity_type: declared,
        title: field("title")?,
        status: field("status")?,
        body: doc.body,
        created_seq: num("created_seq")?,
        updated_seq: num("updated_seq")?,
        tombstoned: fm.scalar("tombstoned") == Some("true"),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Section {
    Gaps,
    RejectedIdeas,
    ValidatedClaims,
    RecentExperiments,
}

impl Section {
    pub const ALL: [Section; 4] = [
        Self::Gaps,
        Self::RejectedIdeas,
        Self::ValidatedClaims,
        Self::RecentExperiments,
    ];

    fn heading(self) -> &'static str {
        match self {
            Self::Gaps => "## Gaps",
            Self::RejectedIdeas => "## Rejected ideas (banlist)",
            Self::ValidatedClaims => "## Validated claims",
            Self::RecentExperiments => "## Recent experiments",
        }
    }
}

#[doc(hidden)]
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PackEntry {
    pub section: Section,
    pub node_id: String,
    pub line: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct PackSections {
    pub gaps: Vec<String>,
    pub rejected_ideas: Vec<String>,
    pub validated_claims: Vec<String>,
    pub recent_experiments: Vec<String>,
}

impl PackSections {
    fn get_mut(&mut self, s: Section) -> &mut Vec<String> {
        match s {
            Section::Gaps => &mut self.gaps,
            Section::RejectedIdeas => &mut self.rejected_ideas,
            Section::ValidatedClaims => &mut self.validated_claims,
            Section::RecentExperiments => &mut self.recent_experiments,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct QueryPack {
    pub text: String,
    pub char_count: usize,
    pub sections: PackSections,
    pub omitted: usize,
}

const PACK_TITLE: &str = "# Query pack\n";

fn omitted_note(n: usize) -> String {
    format!("\n_{n} lower-priority entries omitted_\n")
}

/// Text of a pack holding the first `keep` entries.
#[doc(hidden)]
pub fn render_pack_prefix(entries: &[PackEntry], keep: usize) -> String {
    let mut out = String::from(PACK_TITLE);
    let kept = &entries[..keep];
    for section in Section::ALL {
        out.push('\n');
        out.push_str(section.heading());
        out.push('\n');
        for e in kept.iter().filter(|e| e.section == section) {
            out.push_str(&e.line);
            out.push('\n');
        }
    }
    if keep < entries.len() {
        out.push_str(&omitted_note(entries.len() - keep));
    }
    out
}

/// Largest `k` whose rendered prefix fits in `cap` characters, found from
/// prefix sums instead of rendering every candidate.
fn fitting_prefix(entries: &[PackEntry], cap: usize) -> usize {
    let base = render_pack_prefix(&[], 0).chars().count();
    let n = entries.len();
    let mut best = 0;
    let mut running = base;
    for k in 0..=n {
        if k > 0 {
            running += entries[k - 1].line.chars().count() + 1;
        }
        let note = if k < n { omitted_note(n - k).chars().count() } else { 0 };
        if running + note <= cap {
            best = k;
        } else if running > cap {
            break;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn node_ids_are_canonical() {
        let mut w = Wiki::in_memory();
        let id = w.add_node(NewNode::new(EntityType::Idea, "Sparse Attention, Revisited!")).unwrap();
        assert!(id.starts_with("idea/sparse-attention-revisited-"), "{id}");
        assert!(valid_node_id(&id, EntityType::Idea));
        let same = w.add_node(NewNode::new(EntityType::Idea, "Sparse Attention, Revisited!")).unwrap();
        assert_ne!(id, same);
    }

    #[test]
    fn edges_validate_relation_and_endpoints() {
        let mut w = Wiki::in_memory();
        let idea = w.add_node(NewNode::new(EntityType::Idea, "i")).unwrap();
        let exp = w.add_node(NewNode::new(EntityType::Experiment, "e")).unwrap();
        w.add_edge(&idea, &exp, "tested_by").unwrap();
        assert!(matches!(w.add_edge(&idea, &exp, "refines"), Err(WikiError::UnknownRelation(_))));
        assert!(matches!(w.add_edge(&idea, "idea/x-000000", "extends"), Err(WikiError::UnknownEndpoint(_))));
        assert!(matches!(w.add_edge(&idea, &exp, "tested_by"), Err(WikiError::DuplicateEdge { .. })));
    }

    #[test]
    fn statuses_follow_entity_type() {
        let mut w = Wiki::in_memory();
        let r = w.add_node(NewNode::new(EntityType::Idea, "x").status("supported"));
        assert!(matches!(r, Err(WikiError::InvalidStatus { .. })));
        let explicit = NewNode {
            node_id: Some("claim/a-abcdef".into()),
            ..NewNode::new(EntityType::Claim, "a")
        };
        w.add_node(explicit.clone()).unwrap();
        assert!(matches!(w.add_node(explicit), Err(WikiError::DuplicateId(_))));
    }

    #[test]
    fn claim_updates_record_history() {
        let mut w = Wiki::in_memory();
        let c = w.add_node(NewNode::new(EntityType::Claim, "c")).unwrap();
        let idea = w.add_node(NewNode::new(EntityType::Idea, "i")).unwrap();
        assert_eq!(w.update_claim_status(&c, "supported").unwrap().status, "supported");
        w.update_claim_status(&c, "invalidated").unwrap();
        let node = w.update_claim_status(&c, "supported").unwrap();
        assert_eq!(node.body.matches("\n- ").count(), 3);
        assert!(matches!(w.update_claim_status(&idea, "supported"), Err(WikiError::NotAClaim(_))));
        assert!(matches!(w.update_claim_status("claim/none-000000", "supported"), Err(WikiError::UnknownNode(_))));
    }

    #[test]
    fn banlist_rules() {
        let mut w = Wiki::in_memory();
        assert!(w.banlist().is_empty());
        let a = w.add_node(NewNode::new(EntityType::Idea, "A").status("rejected")).unwrap();
        let b = w.add_node(NewNode::new(EntityType::Idea, "B").status("active")).unwrap();
        let c = w.add_node(NewNode::new(EntityType::Claim, "C")).unwrap();
        assert_eq!(w.banlist(), BTreeSet::from([a.clone()]));
        w.add_edge(&c, &b, "invalidates").unwrap();
        assert_eq!(w.banlist(), BTreeSet::from([a, b]));
    }

    #[test]
    fn empty_pack_is_small_with_four_sections() {
        let pack = Wiki::in_memory().build_query_pack();
        assert!(pack.char_count < 200);
        for s in Section::ALL {
            assert!(pack.text.contains(s.heading()));
        }
        assert_eq!(pack.sections, PackSections::default());
    }

    #[test]
    fn three_rejected_ideas_all_listed() {
        let mut w = Wiki::in_memory();
        let ids: Vec<String> = (0..3)
            .map(|i| w.add_node(NewNode::new(EntityType::Idea, format!("idea {i}")).status("rejected")).unwrap())
            .collect();
        let pack = w.build_query_pack();
        for id in &ids {
            assert!(pack.sections.rejected_ideas.contains(id));
            assert!(pack.text.contains(id.as_str()));
        }
    }

    #[test]
    fn persisted_wiki_reloads_identically() {
        let dir = tempfile::tempdir().unwrap();
        let mut w = Wiki::open(dir.path()).unwrap();
        let p = w.add_node(NewNode::new(EntityType::Paper, "Base paper").body("# Notes\n\nkey: value\n")).unwrap();
        let i = w.add_node(NewNode::new(EntityType::Idea, "Idea: \"quoted\"")).unwrap();
        let c = w.add_node(NewNode::new(EntityType::Claim, "claim")).unwrap();
        w.add_edge(&i, &p, "addresses_gap").unwrap();
        w.add_edge(&c, &i, "supports").unwrap();
        w.update_claim_status(&c, "partially_supported").unwrap();
        w.tombstone(&p).unwrap();
        let back = Wiki::open(dir.path()).unwrap();
        assert_eq!(back, w);
        assert!(dir.path().join(".aris/wiki").join(format!("{p}.md")).is_file());
        let mut back = back;
        let next = back.add_node(NewNode::new(EntityType::Idea, "later")).unwrap();
        assert!(back.node(&next).unwrap().created_seq > w.node(&c).unwrap().updated_seq);
    }
}
