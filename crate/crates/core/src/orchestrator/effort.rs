//! Effort presets: scale breadth, depth and iteration params; leave
//! invariant params and reviewer reasoning alone.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

/// Reviewer reasoning effort under every preset.
pub const REVIEWER_REASONING: &str = "xhigh";

/// Upper bound for the configurable beast multiplier, in thousandths.
pub const BEAST_CAP_MILLI: u64 = 8000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Lite,
    Balanced,
    Max,
    Beast,
}

impl Preset {
    pub const ALL: [Preset; 4] = [Preset::Lite, Preset::Balanced, Preset::Max, Preset::Beast];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Lite => "lite",
            Self::Balanced => "balanced",
            Self::Max => "max",
            Self::Beast => "beast",
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Preset {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|p| p.as_str() == s.to_ascii_lowercase())
            .ok_or_else(|| format!("unknown effort preset `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamTag {
    Breadth,
    Depth,
    Iteration,
    Invariant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Param {
    pub tag: ParamTag,
    pub value: Value,
}

/// Multipliers in thousandths so scaling stays exact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EffortPreset {
    pub name: Preset,
    pub breadth_milli: u64,
    pub depth_milli: u64,
    pub iter_milli: u64,
}

impl EffortPreset {
    /// `beast_multiplier` comes from config and is clamped to the cap.
    pub fn new(name: Preset, beast_multiplier: f64) -> Self {
        let m = match name {
            Preset::Lite => 400,
            Preset::Balanced => 1000,
            Preset::Max => 2500,
            Preset::Beast => {
                let raw = (beast_multiplier * 1000.0).round();
                if raw.is_finite() && raw >= 1.0 {
                    (raw as u64).min(BEAST_CAP_MILLI)
                } else {
                    5000
                }
            }
        };
        Self { name, breadth_milli: m, depth_milli: m, iter_milli: m }
    }

    pub fn reviewer_reasoning(&self) -> &'static str {
        REVIEWER_REASONING
    }

    fn multiplier(&self, tag: ParamTag) -> Option<u64> {
        match tag {
            ParamTag::Breadth => Some(self.breadth_milli),
            ParamTag::Depth => Some(self.depth_milli),
            ParamTag::Iteration => Some(self.iter_milli),
            ParamTag::Invariant => None,
        }
    }
}

fn scale(v: &Value, milli: u64) -> Value {
    if let Some(n) = v.as_u64() {
        let scaled = (u128::from(n) * u128::from(milli)).div_ceil(1000).max(1);
        return Value::from(u64::try_from(scaled).unwrap_or(u64::MAX));
    }
    if v.is_i64() {
        // Only negative integers land here; clamp them like zero.
        return Value::from(1u64);
    }
    if let Some(f) = v.as_f64() {
        let scaled = (f * milli as f64 / 1000.0).ceil().max(1.0);
        return serde_json::Number::from_f64(scaled).map(Value::Number).unwrap_or_else(|| v.clone());
    }
    v.clone()
}

/// Scale every tagged numeric param, rounding up with a floor of one.
pub fn apply_effort(preset: &EffortPreset, base: &BTreeMap<String, Param>) -> BTreeMap<String, Param> {
    base.iter()
        .map(|(k, p)| {
            let value = match preset.multiplier(p.tag) {
                Some(m) if p.value.is_number() => scale(&p.value, m),
                _ => p.value.clone(),
            };
            (k.clone(), Param { tag: p.tag, value })
        })
        .collect()
}
