//! Deterministic synthetic manuscripts for tests and demos.
//!
//! Pages are two-column parchment scans with rows of small glyphs. Two
//! scribe hands draw the letter "a" differently; the other letters are
//! shared. Red initials and rubrication lines are scattered in the columns.

use std::path::Path;

use image::{GrayImage, Luma, Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matcher::{write_template_sidecar, TemplateEntry};
use crate::model::{BBox, ClassId, Layout, ManuscriptId, ScribeId, Side};
use crate::preprocess::{LayoutRois, ManuscriptConfig, PageEntry, RedRule};

const SCALE: u32 = 2;

// Two-story "a".
const A_FIRST: [&str; 8] = [
    ".#####..", "#.....#.", "......#.", ".######.", "#.....#.", "#.....#.", "#....##.", ".####.##",
];
// Single-story "a".
const A_SECOND: [&str; 8] = [
    "..###.#.", ".#...##.", "#.....#.", "#.....#.", "#.....#.", "#.....#.", ".#...##.", "..###..#",
];
const FILLERS: [&[&str]; 7] = [
    &[
        "#.###...", "##...#..", "#.......", "#.......", "#.......", "#.......", "#.......", "#.......",
    ],
    &[
        "#.....#.", "#.....#.", "#.....#.", "#.....#.", "#.....#.", "#.....#.", ".#...##.", "..###.#.",
    ],
    &[
        "#.##..##..",
        "##..##..#.",
        "#...#...#.",
        "#...#...#.",
        "#...#...#.",
        "#...#...#.",
        "#...#...#.",
        "#...#...#.",
    ],
    &[
        ".#....", ".#....", "#####.", ".#....", ".#....", ".#....", ".#...#", "..###.",
    ],
    &[
        "#.####..", "##....#.", "#.....#.", "#.....#.", "#.....#.", "#.....#.", "#.....#.", "#.....#.",
    ],
    &[
        "..####..", ".#....#.", "#.......", "#.......", "#.......", "#.......", ".#....#.", "..####..",
    ],
    &["##.", ".#.", ".#.", ".#.", ".#.", ".#.", ".#.", "###"],
];

fn mask(rows: &[&str]) -> GrayImage {
    let w = rows[0].len() as u32;
    let h = rows.len() as u32;
    GrayImage::from_fn(w * SCALE, h * SCALE, |x, y| {
        let on = rows[(y / SCALE) as usize].as_bytes()[(x / SCALE) as usize] == b'#';
        Luma([if on { 0 } else { 255 }])
    })
}

/// The binary "a" of a hand (0 or 1), ink 0 on background 255.
pub fn letter_a(hand: usize) -> GrayImage {
    mask(if hand == 0 { &A_FIRST } else { &A_SECOND })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthPageSpec {
    pub page: u32,
    pub side: Side,
    pub scribe: ScribeId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub manuscript: ManuscriptId,
    pub seed: u64,
    /// The two hands; `scribes[0]` writes the two-story "a".
    pub scribes: [ScribeId; 2],
    pub pages: Vec<SynthPageSpec>,
    /// Share of glyph slots holding an "a".
    pub a_rate: f64,
}

impl SynthSpec {
    /// `recto` recto pages by the first hand, then `verso_first` verso pages
    /// by the first hand and `verso_second` by the second.
    pub fn standard(manuscript: ManuscriptId, seed: u64, recto: u32, verso_first: u32, verso_second: u32) -> Self {
        let scribes = [ScribeId::new("B").expect("valid"), ScribeId::new("A").expect("valid")];
        let mut pages: Vec<SynthPageSpec> = (1..=recto)
            .map(|n| SynthPageSpec {
                page: n,
                side: Side::Recto,
                scribe: scribes[0].clone(),
            })
            .collect();
        pages.extend((1..=verso_first + verso_second).map(|n| SynthPageSpec {
            page: n,
            side: Side::Verso,
            scribe: scribes[if n <= verso_first { 0 } else { 1 }].clone(),
        }));
        Self {
            manuscript,
            seed,
            scribes,
            pages,
            a_rate: 0.2,
        }
    }
}

/// A planted "a", in column coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedGlyph {
    pub column: String,
    pub bbox: BBox,
    pub scribe: ScribeId,
}

#[derive(Debug, Clone)]
pub struct SynthPage {
    pub entry: PageEntry,
    pub image: RgbImage,
    pub glyphs: Vec<PlantedGlyph>,
}

#[derive(Debug, Clone)]
pub struct SynthManuscript {
    pub config: ManuscriptConfig,
    pub pages: Vec<SynthPage>,
}

pub const PAGE_WIDTH: u32 = 400;
pub const PAGE_HEIGHT: u32 = 560;
const LINE_PITCH: u32 = 28;
const SLOT_PITCH: u32 = 22;

pub fn rois() -> Vec<BBox> {
    vec![
        BBox {
            x: 20,
            y: 30,
            w: 170,
            h: 500,
        },
        BBox {
            x: 210,
            y: 30,
            w: 170,
            h: 500,
        },
    ]
}

fn jitter(rng: &mut ChaCha8Rng, base: [u8; 3], spread: i16) -> Rgb<u8> {
    Rgb(base.map(|c| (c as i16 + rng.random_range(-spread..=spread)).clamp(0, 255) as u8))
}

fn stamp(img: &mut RgbImage, m: &GrayImage, x0: u32, y0: u32, rng: &mut ChaCha8Rng, color: [u8; 3]) {
    for (x, y, p) in m.enumerate_pixels() {
        if p.0[0] == 0 {
            img.put_pixel(x0 + x, y0 + y, jitter(rng, color, 12));
        }
    }
}

fn render_page(spec: &SynthSpec, p: &SynthPageSpec, rng: &mut ChaCha8Rng) -> (RgbImage, Vec<PlantedGlyph>) {
    let hand = usize::from(p.scribe != spec.scribes[0]);
    let a = letter_a(hand);
    let fillers: Vec<GrayImage> = FILLERS.iter().map(|f| mask(f)).collect();
    let mut img = RgbImage::new(PAGE_WIDTH, PAGE_HEIGHT);
    for px in img.pixels_mut() {
        *px = jitter(rng, [226, 212, 178], 10);
    }
    let ink = [58, 42, 32];
    let red = [186, 44, 38];
    let mut glyphs = Vec::new();
    for (ci, roi) in rois().iter().enumerate() {
        let column = format!("{}_{}{}_c{}", spec.manuscript, p.page, p.side.suffix(), ci);
        let mut line_y = roi.y + 8;
        while line_y + 20 < roi.y + roi.h {
            let mut slot = 0;
            if rng.random_bool(0.12) {
                // red initial over the first two slots
                let (w, h) = (2 * SLOT_PITCH - 6, LINE_PITCH - 4);
                for y in 0..h {
                    for x in 0..w {
                        let edge = x < 4 || x >= w - 4 || y < 4 || y >= h - 4 || (y > h / 2 - 2 && y < h / 2 + 2);
                        if edge {
                            img.put_pixel(roi.x + 4 + x, line_y - 2 + y, jitter(rng, red, 10));
                        }
                    }
                }
                slot = 2;
            }
            while roi.x + 6 + slot * SLOT_PITCH + 16 < roi.x + roi.w {
                let x = roi.x + 6 + slot * SLOT_PITCH + rng.random_range(0..=2);
                let y = line_y + rng.random_range(0..=2);
                let r: f64 = rng.random();
                if r < spec.a_rate {
                    stamp(&mut img, &a, x, y, rng, ink);
                    glyphs.push(PlantedGlyph {
                        column: column.clone(),
                        bbox: BBox {
                            x: x - roi.x,
                            y: y - roi.y,
                            w: a.width(),
                            h: a.height(),
                        },
                        scribe: p.scribe.clone(),
                    });
                } else if r < spec.a_rate + 0.65 {
                    let f = &fillers[rng.random_range(0..fillers.len())];
                    stamp(&mut img, f, x, y, rng, ink);
                }
                slot += 1;
            }
            if rng.random_bool(0.08) {
                // rubrication stroke under the line
                for x in roi.x + 4..roi.x + roi.w - 4 {
                    img.put_pixel(x, line_y + 19, jitter(rng, red, 10));
                    img.put_pixel(x, line_y + 20, jitter(rng, red, 10));
                }
            }
            line_y += LINE_PITCH;
        }
    }
    (img, glyphs)
}

/// Renders every page of `spec`. Identical specs give identical pixels.
pub fn generate(spec: &SynthSpec) -> Result<SynthManuscript> {
    if spec.scribes[0] == spec.scribes[1] {
        return Err(Error::InvalidParameter("the two hands need distinct scribe ids".into()));
    }
    if !(0.0..=0.35).contains(&spec.a_rate) {
        return Err(Error::InvalidParameter(format!(
            "a_rate {} not in [0, 0.35]",
            spec.a_rate
        )));
    }
    let mut pages = Vec::with_capacity(spec.pages.len());
    for p in &spec.pages {
        if !spec.scribes.contains(&p.scribe) {
            return Err(Error::InvalidParameter(format!(
                "page {} has unknown scribe {}",
                p.page, p.scribe
            )));
        }
        // per-page stream, so pages do not depend on each other
        let seed =
            spec.seed ^ ((p.page as u64) << 1 | (p.side == Side::Verso) as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (image, glyphs) = render_page(spec, p, &mut rng);
        pages.push(SynthPage {
            entry: PageEntry {
                page: p.page,
                side: p.side,
                layout: Layout::TwoColumn,
                scribe: Some(p.scribe.clone()),
                image: format!("pages/{}{}.png", p.page, p.side.suffix()).into(),
            },
            image,
            glyphs,
        });
    }
    let config = ManuscriptConfig {
        manuscript: spec.manuscript.clone(),
        scribes: spec.scribes.to_vec(),
        aliases: Default::default(),
        red_rule: RedRule::default(),
        layouts: vec![LayoutRois {
            layout: Layout::TwoColumn,
            rois: rois(),
        }],
        exclude: Vec::new(),
        pages: pages.iter().map(|p| p.entry.clone()).collect(),
    };
    config.validate()?;
    Ok(SynthManuscript { config, pages })
}

impl SynthManuscript {
    pub fn glyphs(&self) -> impl Iterator<Item = &PlantedGlyph> {
        self.pages.iter().flat_map(|p| &p.glyphs)
    }

    /// Writes `dir/{manuscript}.toml`, `dir/pages/*.png`, `dir/templates/`
    /// (one "a" per hand plus `templates.toml`) and `dir/truth.json`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir.join("pages"))?;
        for p in &self.pages {
            p.image.save(dir.join(&p.entry.image))?;
        }
        std::fs::write(
            dir.join(format!("{}.toml", self.config.manuscript)),
            self.config.to_toml(),
        )?;
        let tdir = dir.join("templates");
        std::fs::create_dir_all(&tdir)?;
        let mut entries = Vec::new();
        for (hand, scribe) in self.config.scribes.iter().enumerate() {
            let file = format!("{scribe}_a.png");
            letter_a(hand).save(tdir.join(&file))?;
            entries.push(TemplateEntry {
                file,
                scribe: scribe.clone(),
                class: ClassId::Target,
            });
        }
        write_template_sidecar(&tdir, &entries)?;
        let truth: Vec<&PlantedGlyph> = self.glyphs().collect();
        std::fs::write(dir.join("truth.json"), serde_json::to_string_pretty(&truth)?)?;
        Ok(())
    }
}
