use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Target language of a code generation task.
///
/// `Baseline` is the general-purpose comparison language; its concrete
/// syntax throughout the harness (extraction anchors, the lexical
/// validator, prompt wording) is Python.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetLanguage {
    Ocl,
    Alloy,
    #[serde(alias = "baseline")]
    Python,
}

impl TargetLanguage {
    pub const ALL: [TargetLanguage; 3] =
        [TargetLanguage::Ocl, TargetLanguage::Alloy, TargetLanguage::Python];

    /// Name used inside prompts ("Code the following constraint in {name}:").
    pub fn prompt_name(&self) -> &'static str {
        match self {
            TargetLanguage::Ocl => "OCL",
            TargetLanguage::Alloy => "Alloy",
            TargetLanguage::Python => "Python",
        }
    }

    /// Fence info-string aliases accepted during extraction.
    pub fn fence_aliases(&self) -> &'static [&'static str] {
        match self {
            TargetLanguage::Ocl => &["ocl"],
            TargetLanguage::Alloy => &["alloy", "als"],
            TargetLanguage::Python => &["python", "py"],
        }
    }

    /// Keywords that mark bare (unfenced) text as code in this language.
    pub fn anchor_keywords(&self) -> &'static [&'static str] {
        match self {
            TargetLanguage::Ocl => &["context", "inv"],
            TargetLanguage::Alloy => &["fact"],
            TargetLanguage::Python => &["def"],
        }
    }

    /// Stable key used in config maps and file names.
    pub fn key(&self) -> &'static str {
        match self {
            TargetLanguage::Ocl => "ocl",
            TargetLanguage::Alloy => "alloy",
            TargetLanguage::Python => "python",
        }
    }
}

impl fmt::Display for TargetLanguage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.prompt_name())
    }
}

impl FromStr for TargetLanguage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "ocl" => Ok(TargetLanguage::Ocl),
            "alloy" => Ok(TargetLanguage::Alloy),
            "python" | "baseline" => Ok(TargetLanguage::Python),
            other => Err(format!("unknown language '{other}'")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_round_trip() {
        for lang in TargetLanguage::ALL {
            assert_eq!(lang.key().parse::<TargetLanguage>().unwrap(), lang);
        }
        assert_eq!("baseline".parse::<TargetLanguage>().unwrap(), TargetLanguage::Python);
        assert!("cobol".parse::<TargetLanguage>().is_err());
    }
}
