use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bundled::{BUNDLED_SKILLS, SHARED_REFERENCES};
use crate::frontmatter::{self, Document, FmValue, Frontmatter, FrontmatterError};

/// Where a skill file came from. Later variants win on name collisions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tier {
    Bundled,
    Project,
    User,
}

impl Tier {
    pub fn as_str(self) -> &'static str {
        match self {
            Tier::Bundled => "bundled",
            Tier::Project => "project",
            Tier::User => "user",
        }
    }
}

impl fmt::Display for Tier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

pub const DEFAULT_CATEGORY: &str = "Uncategorized";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkillSpec {
    pub name: String,
    pub description: String,
    pub triggers: Vec<String>,
    pub allowed_tools: Vec<String>,
    pub category: String,
    pub body: String,
    pub tier: Tier,
    pub source_path: PathBuf,
    /// Full frontmatter, unknown keys included, in file order.
    pub frontmatter: Frontmatter,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SkillError {
    #[error("{path}: missing frontmatter")]
    MissingFrontmatter { path: String },
    #[error("{path}: missing required field `{field}`")]
    MissingField { path: String, field: &'static str },
    #[error("{path}: malformed frontmatter: {reason}")]
    MalformedFrontmatter { path: String, reason: String },
    #[error("skill `{0}` not found")]
    SkillNotFound(String),
    #[error("skill `{name}` defined twice in the {tier} tier ({first} and {second})")]
    DuplicateInTier {
        name: String,
        tier: Tier,
        first: String,
        second: String,
    },
    #[error("unknown shared reference `{0}`")]
    UnknownReference(String),
    #[error("reading {path}: {reason}")]
    Io { path: String, reason: String },
}

fn list_field(fm: &Frontmatter, keys: &[&str]) -> Vec<String> {
    keys.iter().find_map(|k| fm.list(k)).unwrap_or_default()
}

pub fn parse_skill(text: &str, tier: Tier, path: impl Into<PathBuf>) -> Result<SkillSpec, SkillError> {
    let path = path.into();
    let shown = path.display().to_string();
    let doc = frontmatter::parse(text).map_err(|e| match e {
        FrontmatterError::Missing => SkillError::MissingFrontmatter { path: shown.clone() },
        FrontmatterError::Malformed { .. } => SkillError::MalformedFrontmatter {
            path: shown.clone(),
            reason: e.to_string(),
        },
    })?;
    let fm = doc.frontmatter;
    let required = |field: &'static str| -> Result<String, SkillError> {
        match fm.scalar(field).map(str::trim) {
            Some(v) if !v.is_empty() => Ok(v.to_string()),
            _ => Err(SkillError::MissingField {
                path: shown.clone(),
                field,
            }),
        }
    };
    let name = required("name")?;
    let description = required("description")?;
    let category = fm
        .scalar("category")
        .map(str::trim)
        .filter(|c| !c.is_empty())
        .unwrap_or(DEFAULT_CATEGORY)
        .to_string();
    Ok(SkillSpec {
        name,
        description,
        triggers: list_field(&fm, &["triggers", "trigger"]),
        allowed_tools: list_field(&fm, &["allowed-tools", "allowed_tools"]),
        category,
        body: doc.body,
        tier,
        source_path: path,
        frontmatter: fm,
    })
}

impl SkillSpec {
    pub fn to_markdown(&self) -> String {
        frontmatter::serialize(&Document {
            frontmatter: self.frontmatter.clone(),
            body: self.body.clone(),
        })
    }

    pub fn reviewer_backed(&self) -> bool {
        matches!(self.frontmatter.get("reviewer"), Some(FmValue::Scalar(s)) if s == "yes" || s == "true")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SkillListing {
    pub name: String,
    pub category: String,
    pub tier: Tier,
}

/// Immutable set of skills across all tiers.
#[derive(Debug, Clone, Default)]
pub struct SkillRegistry {
    by_name: BTreeMap<String, BTreeMap<Tier, SkillSpec>>,
}

impl SkillRegistry {
    pub fn from_specs(specs: impl IntoIterator<Item = SkillSpec>) -> Result<Self, SkillError> {
        let mut by_name: BTreeMap<String, BTreeMap<Tier, SkillSpec>> = BTreeMap::new();
        let mut clashes = Vec::new();
        for spec in specs {
            let tiers = by_name.entry(spec.name.clone()).or_default();
            if let Some(prev) = tiers.get(&spec.tier) {
                let (a, b) = (prev.source_path.clone(), spec.source_path.clone());
                let (first, second) = if a <= b { (a, b) } else { (b, a) };
                clashes.push(SkillError::DuplicateInTier {
                    name: spec.name.clone(),
                    tier: spec.tier,
                    first: first.display().to_string(),
                    second: second.display().to_string(),
                });
                continue;
            }
            tiers.insert(spec.tier, spec);
        }
        // report the same clash whatever order the files were found in
        clashes.sort_by(|a, b| a.to_string().cmp(&b.to_string()));
        match clashes.into_iter().next() {
            Some(e) => Err(e),
            None => Ok(Self { by_name }),
        }
    }

    pub fn bundled() -> Self {
        Self::from_specs(bundled_skills()).expect("bundled skills are unique")
    }

    /// Bundled skills plus whatever lives under the user and project roots.
    pub fn discover(user_root: Option<&Path>, project_root: Option<&Path>) -> Result<Self, SkillError> {
        let mut specs = bundled_skills();
        if let Some(root) = project_root {
            specs.extend(load_dir(root, Tier::Project)?);
        }
        if let Some(root) = user_root {
            specs.extend(load_dir(root, Tier::User)?);
        }
        Self::from_specs(specs)
    }

    pub fn resolve(&self, name: &str) -> Result<&SkillSpec, SkillError> {
        self.by_name
            .get(name)
            .and_then(|tiers| tiers.values().next_back())
            .ok_or_else(|| SkillError::SkillNotFound(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.by_name.contains_key(name)
    }

    pub fn list(&self, category: Option<&str>) -> Vec<SkillListing> {
        self.by_name
            .values()
            .filter_map(|tiers| tiers.values().next_back())
            .filter(|s| category.is_none_or(|c| s.category == c))
            .map(|s| SkillListing {
                name: s.name.clone(),
                category: s.category.clone(),
                tier: s.tier,
            })
            .collect()
    }

    pub fn len(&self) -> usize {
        self.by_name.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_name.is_empty()
    }
}

pub fn list_skills(registry: &SkillRegistry, category: Option<&str>) -> Vec<SkillListing> {
    registry.list(category)
}

pub fn bundled_skills() -> Vec<SkillSpec> {
    BUNDLED_SKILLS
        .iter()
        .map(|(name, text)| {
            parse_skill(text, Tier::Bundled, format!("bundled:{name}/SKILL.md"))
                .expect("bundled skill parses")
        })
        .collect()
}

/// Skill files under `root`: `<root>/<dir>/SKILL.md` and `<root>/<name>.md`.
pub fn load_dir(root: &Path, tier: Tier) -> Result<Vec<SkillSpec>, SkillError> {
    let io = |p: &Path, e: std::io::Error| SkillError::Io {
        path: p.display().to_string(),
        reason: e.to_string(),
    };
    let entries = match fs::read_dir(root) {
        Ok(rd) => rd,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(io(root, e)),
    };
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| io(root, e))?.path();
        if path.is_dir() {
            let candidate = path.join("SKILL.md");
            if candidate.is_file() {
                files.push(candidate);
            }
        } else if path.extension().is_some_and(|e| e == "md") {
            files.push(path);
        }
    }
    files.sort();
    files
        .into_iter()
        .map(|p| {
            let text = fs::read_to_string(&p).map_err(|e| io(&p, e))?;
            parse_skill(&text, tier, p)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SharedReference {
    pub name: &'static str,
    pub content: &'static str,
}

pub fn shared_reference_names() -> [&'static str; 5] {
    SHARED_REFERENCES.map(|(n, _)| n)
}

pub fn load_shared_reference(name: &str) -> Result<SharedReference, SkillError> {
    let name = name.strip_suffix(".md").unwrap_or(name);
    SHARED_REFERENCES
        .iter()
        .find(|(n, _)| *n == name)
        .map(|&(name, content)| SharedReference { name, content })
        .ok_or_else(|| SkillError::UnknownReference(name.to_string()))
}
