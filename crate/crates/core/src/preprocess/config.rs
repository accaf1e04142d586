use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{RedRule, RoiConfig};
use crate::error::{Error, Result};
use crate::model::{BBox, Layout, ManuscriptId, PageRef, ScribeId, Side};

/// Per-manuscript configuration file (TOML).
///
/// ```toml
/// manuscript = "trento"
/// scribes = ["A", "B", "C"]
/// exclude = ["17v"]
///
/// [aliases]
/// B = "avila:F"
///
/// [red_rule]
/// red_min = 120
/// dominance_margin = 40
///
/// [[layouts]]
/// layout = "two_column"
/// rois = [{ x = 120, y = 300, w = 1200, h = 3700 }, { x = 1480, y = 300, w = 1200, h = 3700 }]
///
/// [[pages]]
/// page = 1
/// side = "recto"
/// layout = "two_column"
/// scribe = "B"
/// image = "pages/1r.png"
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManuscriptConfig {
    pub manuscript: ManuscriptId,
    /// Scribe alphabet for this manuscript.
    pub scribes: Vec<ScribeId>,
    /// Local scribe code → shared identity across manuscripts.
    #[serde(default)]
    pub aliases: BTreeMap<String, String>,
    #[serde(default)]
    pub red_rule: RedRule,
    pub layouts: Vec<LayoutRois>,
    /// Page labels (`12r`, `7v`) excluded from processing.
    #[serde(default)]
    pub exclude: Vec<String>,
    #[serde(default)]
    pub pages: Vec<PageEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutRois {
    pub layout: Layout,
    pub rois: Vec<BBox>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PageEntry {
    pub page: u32,
    pub side: Side,
    pub layout: Layout,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scribe: Option<ScribeId>,
    /// Path to the page scan, relative to the config file.
    pub image: PathBuf,
}

impl PageEntry {
    pub fn label(&self) -> String {
        format!("{}{}", self.page, self.side.suffix())
    }
}

impl ManuscriptConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for l in &self.layouts {
            if !seen.insert(l.layout) {
                return Err(Error::Config(format!("layout {} configured twice", l.layout)));
            }
            self.roi_config(l.layout)?;
        }
        let mut pages = std::collections::HashSet::new();
        for p in &self.pages {
            if p.page == 0 {
                return Err(Error::Config("page numbers start at 1".into()));
            }
            if !pages.insert((p.page, p.side)) {
                return Err(Error::Config(format!("page {} listed twice", p.label())));
            }
            if let Some(s) = &p.scribe {
                if !self.scribes.contains(s) {
                    return Err(Error::Config(format!(
                        "page {} names scribe {s}, not in the alphabet {:?}",
                        p.label(),
                        self.scribes.iter().map(ScribeId::as_str).collect::<Vec<_>>()
                    )));
                }
            }
            if !self.layouts.iter().any(|l| l.layout == p.layout) {
                return Err(Error::Config(format!(
                    "page {} uses unconfigured layout {}",
                    p.label(),
                    p.layout
                )));
            }
        }
        Ok(())
    }

    pub fn roi_config(&self, layout: Layout) -> Result<RoiConfig> {
        let l = self
            .layouts
            .iter()
            .find(|l| l.layout == layout)
            .ok_or_else(|| Error::Config(format!("no rois for layout {layout}")))?;
        RoiConfig::new(self.manuscript.clone(), layout, l.rois.clone())
    }

    pub fn is_excluded(&self, entry: &PageEntry) -> bool {
        self.exclude.iter().any(|e| *e == entry.label())
    }

    /// Pages not on the exclusion list, in file order.
    pub fn included_pages(&self) -> impl Iterator<Item = &PageEntry> {
        self.pages.iter().filter(|p| !self.is_excluded(p))
    }

    pub fn page_ref(&self, entry: &PageEntry, width_px: u32, height_px: u32) -> PageRef {
        PageRef {
            manuscript: self.manuscript.clone(),
            page_number: entry.page,
            side: entry.side,
            scribe: entry.scribe.clone(),
            layout: entry.layout,
            width_px,
            height_px,
        }
    }
}
