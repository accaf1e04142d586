//! Page scan → binarized column images: crop the configured regions of
//! interest, whiten red decoration, convert to luma and binarize each column
//! with its own Otsu threshold.

mod config;

use image::{GrayImage, Rgb, RgbImage};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{BBox, ColumnImage, Layout, ManuscriptId, PageRef, Raster, Stage};

pub use config::{LayoutRois, ManuscriptConfig, PageEntry};

/// Column rectangles for one page layout, left to right.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoiConfig {
    pub manuscript: ManuscriptId,
    pub layout: Layout,
    pub rois: Vec<BBox>,
}

impl RoiConfig {
    pub fn new(manuscript: ManuscriptId, layout: Layout, rois: Vec<BBox>) -> Result<Self> {
        let cfg = Self {
            manuscript,
            layout,
            rois,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Count matches the layout and the rectangles are pairwise disjoint.
    pub fn validate(&self) -> Result<()> {
        if self.rois.len() != self.layout.columns() {
            return Err(Error::InvalidRoiConfig(format!(
                "{} layout needs {} rois, got {}",
                self.layout,
                self.layout.columns(),
                self.rois.len()
            )));
        }
        for (i, a) in self.rois.iter().enumerate() {
            if a.w == 0 || a.h == 0 {
                return Err(Error::InvalidRoiConfig(format!("roi {i} is degenerate")));
            }
            for b in &self.rois[i + 1..] {
                if a.intersection_area(b) > 0 {
                    return Err(Error::InvalidRoiConfig(format!("rois {a} and {b} overlap")));
                }
            }
        }
        Ok(())
    }
}

/// Red-pixel classifier: `R >= red_min && R - max(G, B) >= dominance_margin`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RedRule {
    pub red_min: u8,
    pub dominance_margin: u8,
}

impl Default for RedRule {
    fn default() -> Self {
        Self {
            red_min: 120,
            dominance_margin: 40,
        }
    }
}

impl RedRule {
    pub fn is_red(&self, [r, g, b]: [u8; 3]) -> bool {
        r >= self.red_min && r as i16 - g.max(b) as i16 >= self.dominance_margin as i16
    }
}

pub fn crop_columns(page_raster: &RgbImage, page: &PageRef, cfg: &RoiConfig) -> Result<Vec<ColumnImage>> {
    if page.layout != cfg.layout {
        return Err(Error::LayoutMismatch {
            page: page.layout.to_string(),
            config: cfg.layout.to_string(),
        });
    }
    cfg.validate()?;
    let (w, h) = page_raster.dimensions();
    for roi in &cfg.rois {
        if !roi.fits(w, h) {
            return Err(Error::RoiOutOfBounds {
                bbox: *roi,
                width: w,
                height: h,
            });
        }
    }
    let page = PageRef {
        width_px: w,
        height_px: h,
        ..page.clone()
    };
    Ok(cfg
        .rois
        .iter()
        .enumerate()
        .map(|(i, roi)| {
            let crop = image::imageops::crop_imm(page_raster, roi.x, roi.y, roi.w, roi.h).to_image();
            ColumnImage {
                page: page.clone(),
                column_index: i,
                pixels: Raster::Rgb(crop),
                stage: Stage::RawRgb,
            }
        })
        .collect())
}

pub fn remove_red(img: &RgbImage, rule: RedRule) -> RgbImage {
    let mut out = img.clone();
    for px in out.pixels_mut() {
        if rule.is_red(px.0) {
            *px = Rgb([255, 255, 255]);
        }
    }
    out
}

/// Rec. 601 luma, `round(0.299 R + 0.587 G + 0.114 B)`, in exact integer arithmetic.
pub fn to_gray(img: &RgbImage) -> GrayImage {
    let (w, h) = img.dimensions();
    let data = img
        .pixels()
        .map(|p| {
            let [r, g, b] = p.0;
            ((299 * r as u32 + 587 * g as u32 + 114 * b as u32 + 500) / 1000) as u8
        })
        .collect();
    GrayImage::from_raw(w, h, data).expect("buffer size matches")
}

/// 256-bin intensity histogram.
pub fn histogram(img: &GrayImage) -> [u64; 256] {
    let mut hist = [0u64; 256];
    for &v in img.as_raw() {
        hist[v as usize] += 1;
    }
    hist
}

/// Otsu threshold over a histogram.
///
/// Class 0 is `<= t`. The between-class variance for threshold `t` is
/// proportional to `(N*S0 - n0*S)^2 / (n0*n1)`; candidates are compared
/// exactly by cross-multiplying in 256-bit integers, so ties resolve to the
/// smallest `t` without floating-point noise. A histogram with a single
/// occupied bin returns that intensity.
pub fn otsu_threshold(hist: &[u64; 256]) -> Result<u8> {
    let n: u64 = hist.iter().sum();
    if n == 0 {
        return Err(Error::EmptyImage);
    }
    let s: u128 = hist.iter().enumerate().map(|(i, &c)| i as u128 * c as u128).sum();
    let mut n0 = 0u64;
    let mut s0 = 0u128;
    // best = (numerator, denominator) of the scaled variance
    let mut best: Option<(u8, u128, u128)> = None;
    for (t, &c) in hist.iter().enumerate() {
        n0 += c;
        s0 += t as u128 * c as u128;
        let n1 = n - n0;
        if n0 == 0 || n1 == 0 {
            continue;
        }
        let d = (n as i128 * s0 as i128 - n0 as i128 * s as i128).unsigned_abs();
        let num = d * d;
        let den = n0 as u128 * n1 as u128;
        let better = match best {
            None => true,
            Some((_, bn, bd)) => mul_wide(num, bd) > mul_wide(bn, den),
        };
        if better {
            best = Some((t as u8, num, den));
        }
    }
    match best {
        Some((t, num, _)) if num > 0 => Ok(t),
        // Single occupied bin (or all candidates zero): the constant value.
        _ => Ok(hist.iter().position(|&c| c > 0).unwrap() as u8),
    }
}

/// Full 256-bit product as (high, low) halves, compared lexicographically.
fn mul_wide(a: u128, b: u128) -> (u128, u128) {
    const MASK: u128 = u64::MAX as u128;
    let (a_hi, a_lo) = (a >> 64, a & MASK);
    let (b_hi, b_lo) = (b >> 64, b & MASK);
    let ll = a_lo * b_lo;
    let lh = a_lo * b_hi;
    let hl = a_hi * b_lo;
    let hh = a_hi * b_hi;
    let mid = (ll >> 64) + (lh & MASK) + (hl & MASK);
    let lo = (ll & MASK) | (mid << 64);
    let hi = hh + (lh >> 64) + (hl >> 64) + (mid >> 64);
    (hi, lo)
}

/// Binarizes with Otsu's threshold: `<= t` becomes ink (0), `> t` background (255).
pub fn otsu_binarize(img: &GrayImage) -> Result<(GrayImage, u8)> {
    if img.width() == 0 || img.height() == 0 {
        return Err(Error::EmptyImage);
    }
    let t = otsu_threshold(&histogram(img))?;
    Ok((apply_threshold(img, t), t))
}

pub fn apply_threshold(img: &GrayImage, t: u8) -> GrayImage {
    let mut out = img.clone();
    for v in out.iter_mut() {
        *v = if *v <= t { 0 } else { 255 };
    }
    out
}

fn is_uniform(img: &GrayImage) -> bool {
    let raw = img.as_raw();
    raw.first().is_some_and(|&v0| raw.iter().all(|&v| v == v0))
}

/// Runs one column through red removal, luma conversion and binarization.
/// A uniform column has no ink and comes out as all background.
pub fn binarize_column(col: &ColumnImage, rule: RedRule) -> Result<ColumnImage> {
    let gray = match &col.pixels {
        Raster::Rgb(rgb) => {
            let cleaned = if col.stage == Stage::RawRgb {
                remove_red(rgb, rule)
            } else {
                rgb.clone()
            };
            to_gray(&cleaned)
        }
        Raster::Gray(g) => g.clone(),
    };
    let bin = if is_uniform(&gray) {
        // No contrast means no ink: blank parchment.
        GrayImage::from_pixel(gray.width(), gray.height(), image::Luma([255]))
    } else {
        otsu_binarize(&gray)?.0
    };
    Ok(ColumnImage {
        pixels: Raster::Gray(bin),
        stage: Stage::Binary,
        ..col.clone()
    })
}

/// crop → remove red → gray → Otsu, each column binarized independently.
pub fn preprocess_page(
    page_raster: &RgbImage,
    page: &PageRef,
    cfg: &RoiConfig,
    rule: RedRule,
) -> Result<Vec<ColumnImage>> {
    crop_columns(page_raster, page, cfg)?
        .par_iter()
        .map(|c| binarize_column(c, rule))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Side;

    fn page(layout: Layout) -> PageRef {
        PageRef {
            manuscript: ManuscriptId::new("trento").unwrap(),
            page_number: 1,
            side: Side::Recto,
            scribe: None,
            layout,
            width_px: 0,
            height_px: 0,
        }
    }

    fn two_col(w: u32, h: u32) -> RoiConfig {
        let half = w / 2;
        RoiConfig::new(
            ManuscriptId::new("trento").unwrap(),
            Layout::TwoColumn,
            vec![
                BBox::new(10, 10, half - 20, h - 20).unwrap(),
                BBox::new(half + 10, 10, half - 20, h - 20).unwrap(),
            ],
        )
        .unwrap()
    }

    #[test]
    fn trento_resolution_two_columns() {
        let img = RgbImage::new(2832, 4256);
        let cols = crop_columns(&img, &page(Layout::TwoColumn), &two_col(2832, 4256)).unwrap();
        assert_eq!(cols.len(), 2);
        assert_eq!(cols[0].dimensions(), (1396, 4236));
        assert_eq!(cols[1].column_index, 1);
        assert_eq!(cols[0].page.width_px, 2832);
    }

    #[test]
    fn three_columns() {
        let img = RgbImage::new(300, 100);
        let cfg = RoiConfig::new(
            ManuscriptId::new("trento").unwrap(),
            Layout::ThreeColumn,
            vec![
                BBox::new(0, 0, 100, 100).unwrap(),
                BBox::new(100, 0, 100, 100).unwrap(),
                BBox::new(200, 0, 100, 100).unwrap(),
            ],
        )
        .unwrap();
        assert_eq!(crop_columns(&img, &page(Layout::ThreeColumn), &cfg).unwrap().len(), 3);
        assert!(matches!(
            crop_columns(&img, &page(Layout::TwoColumn), &cfg),
            Err(Error::LayoutMismatch { .. })
        ));
    }

    #[test]
    fn roi_one_pixel_past_edge() {
        let img = RgbImage::new(200, 100);
        let cfg = RoiConfig::new(
            ManuscriptId::new("trento").unwrap(),
            Layout::TwoColumn,
            vec![BBox::new(0, 0, 100, 100).unwrap(), BBox::new(100, 0, 101, 100).unwrap()],
        )
        .unwrap();
        assert!(matches!(
            crop_columns(&img, &page(Layout::TwoColumn), &cfg),
            Err(Error::RoiOutOfBounds { .. })
        ));
    }

    #[test]
    fn roi_config_validation() {
        let m = ManuscriptId::new("x").unwrap();
        let b = BBox::new(0, 0, 10, 10).unwrap();
        assert!(RoiConfig::new(m.clone(), Layout::TwoColumn, vec![b]).is_err());
        assert!(RoiConfig::new(m, Layout::TwoColumn, vec![b, BBox::new(5, 5, 10, 10).unwrap()]).is_err());
    }

    #[test]
    fn red_removal() {
        let mut img = RgbImage::new(3, 1);
        img.put_pixel(0, 0, Rgb([255, 0, 0]));
        img.put_pixel(1, 0, Rgb([0, 0, 0]));
        img.put_pixel(2, 0, Rgb([200, 170, 120]));
        let out = remove_red(&img, RedRule::default());
        assert_eq!(out.get_pixel(0, 0).0, [255, 255, 255]);
        assert_eq!(out.get_pixel(1, 0).0, [0, 0, 0]);
        assert_eq!(out.get_pixel(2, 0).0, [200, 170, 120]);
        assert_eq!(remove_red(&out, RedRule::default()), out);
    }

    #[test]
    fn luma_values() {
        let mut img = RgbImage::new(3, 1);
        img.put_pixel(0, 0, Rgb([255, 255, 255]));
        img.put_pixel(1, 0, Rgb([255, 0, 0]));
        img.put_pixel(2, 0, Rgb([0, 128, 0]));
        let g = to_gray(&img);
        assert_eq!(g.as_raw(), &vec![255, 76, 75]);
    }

    #[test]
    fn otsu_bimodal() {
        let mut img = GrayImage::new(10, 10);
        for (i, v) in img.iter_mut().enumerate() {
            *v = if i % 2 == 0 { 30 } else { 220 };
        }
        let (bin, t) = otsu_binarize(&img).unwrap();
        assert!((30..220).contains(&t));
        assert_eq!(bin.iter().filter(|&&v| v == 0).count(), 50);
        assert_eq!(bin.iter().filter(|&&v| v == 255).count(), 50);
    }

    #[test]
    fn otsu_constant_image() {
        let img = GrayImage::from_pixel(8, 8, image::Luma([128]));
        let (bin, t) = otsu_binarize(&img).unwrap();
        assert_eq!(t, 128);
        assert!(bin.iter().all(|&v| v == 0));
    }

    #[test]
    fn otsu_empty() {
        assert!(matches!(otsu_binarize(&GrayImage::new(0, 5)), Err(Error::EmptyImage)));
    }

    #[test]
    fn wide_multiply() {
        let a = u128::MAX;
        assert_eq!(mul_wide(a, 1), (0, a));
        assert_eq!(mul_wide(a, 2), (1, a - 1));
        assert_eq!(mul_wide(1 << 64, 1 << 64), (1, 0));
    }

    #[test]
    fn all_white_page_is_background() {
        let img = RgbImage::from_pixel(200, 100, Rgb([255, 255, 255]));
        let cfg = RoiConfig::new(
            ManuscriptId::new("trento").unwrap(),
            Layout::TwoColumn,
            vec![BBox::new(0, 0, 100, 100).unwrap(), BBox::new(100, 0, 100, 100).unwrap()],
        )
        .unwrap();
        let cols = preprocess_page(&img, &page(Layout::TwoColumn), &cfg, RedRule::default()).unwrap();
        assert_eq!(cols.len(), 2);
        for c in &cols {
            assert_eq!(c.stage, Stage::Binary);
            assert!(c.pixels.as_gray().unwrap().iter().all(|&v| v == 255));
        }
    }
}
