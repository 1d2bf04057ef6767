use std::collections::{BTreeMap, BTreeSet};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::coco::SetKind;
use super::{DatasetError, DatasetIndex};

/// Image regime: fish apart (Set1 and Set2), fish touching (All), or both.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Separated,
    Touching,
    Combined,
}

impl Regime {
    pub fn includes(self, set: SetKind) -> bool {
        match self {
            Regime::Separated => matches!(set, SetKind::Set1 | SetKind::Set2),
            Regime::Touching => set == SetKind::All,
            Regime::Combined => true,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Regime::Separated => "separated",
            Regime::Touching => "touching",
            Regime::Combined => "combined",
        }
    }
}

impl FromStr for Regime {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "separated" => Ok(Regime::Separated),
            "touching" => Ok(Regime::Touching),
            "combined" => Ok(Regime::Combined),
            other => Err(format!(
                "unknown regime {other:?} (expected separated, touching or combined)"
            )),
        }
    }
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitConfig {
    pub test_groups: BTreeSet<u32>,
    pub validation_groups: BTreeSet<u32>,
    pub regime: Regime,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            test_groups: [10, 14, 20, 21, 22].into(),
            validation_groups: [1, 6, 11, 17, 25].into(),
            regime: Regime::Combined,
        }
    }
}

impl SplitConfig {
    pub fn new(
        test_groups: BTreeSet<u32>,
        validation_groups: BTreeSet<u32>,
        regime: Regime,
    ) -> Result<Self, DatasetError> {
        let overlap: Vec<u32> = test_groups.intersection(&validation_groups).copied().collect();
        if !overlap.is_empty() {
            return Err(DatasetError::OverlappingSplit(overlap));
        }
        Ok(Self {
            test_groups,
            validation_groups,
            regime,
        })
    }

    pub fn test(&self) -> Selection {
        Selection {
            groups: Some(self.test_groups.clone()),
            regime: self.regime,
        }
    }

    pub fn validation(&self) -> Selection {
        Selection {
            groups: Some(self.validation_groups.clone()),
            regime: self.regime,
        }
    }

    /// Every group in neither the test nor the validation split.
    pub fn train(&self, index: &DatasetIndex) -> Selection {
        let groups = index
            .groups()
            .keys()
            .filter(|g| !self.test_groups.contains(g) && !self.validation_groups.contains(g))
            .copied()
            .collect();
        Selection {
            groups: Some(groups),
            regime: self.regime,
        }
    }
}

/// A subset request: some groups (all when `None`) under one regime.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Selection {
    pub groups: Option<BTreeSet<u32>>,
    pub regime: Regime,
}

impl Selection {
    pub fn all(regime: Regime) -> Self {
        Self {
            groups: None,
            regime,
        }
    }

    pub fn groups(groups: impl IntoIterator<Item = u32>, regime: Regime) -> Self {
        Self {
            groups: Some(groups.into_iter().collect()),
            regime,
        }
    }
}

/// Restricts the index to the requested groups and regime. Requested groups
/// stay listed in the result even when the regime leaves them without images.
pub fn select(index: &DatasetIndex, selection: &Selection) -> Result<DatasetIndex, DatasetError> {
    let groups: BTreeSet<u32> = match &selection.groups {
        Some(g) => {
            if let Some(&missing) = g.iter().find(|g| !index.groups().contains_key(g)) {
                return Err(DatasetError::UnknownGroup(missing));
            }
            g.clone()
        }
        None => index.groups().keys().copied().collect(),
    };
    let images: Vec<_> = index
        .images()
        .iter()
        .filter(|im| groups.contains(&im.group) && selection.regime.includes(im.set))
        .cloned()
        .collect();
    let kept: BTreeSet<u64> = images.iter().map(|im| im.id).collect();
    let instances = index
        .instances()
        .iter()
        .filter(|g| kept.contains(&g.image_id))
        .cloned()
        .collect();
    let group_map: BTreeMap<u32, Vec<u64>> = groups.into_iter().map(|g| (g, Vec::new())).collect();
    Ok(DatasetIndex::from_parts(
        images,
        instances,
        index.categories().to_vec(),
        group_map,
    ))
}
