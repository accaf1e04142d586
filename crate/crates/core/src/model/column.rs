use image::{GrayImage, RgbImage};

use super::{ColumnId, PageRef};

/// Processing stage a column raster has reached.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    RawRgb,
    RedRemoved,
    Gray,
    Binary,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Raster {
    Rgb(RgbImage),
    Gray(GrayImage),
}

impl Raster {
    pub fn dimensions(&self) -> (u32, u32) {
        match self {
            Raster::Rgb(img) => img.dimensions(),
            Raster::Gray(img) => img.dimensions(),
        }
    }

    pub fn as_gray(&self) -> Option<&GrayImage> {
        match self {
            Raster::Gray(img) => Some(img),
            Raster::Rgb(_) => None,
        }
    }

    pub fn as_rgb(&self) -> Option<&RgbImage> {
        match self {
            Raster::Rgb(img) => Some(img),
            Raster::Gray(_) => None,
        }
    }
}

/// A single cropped text column together with its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnImage {
    pub page: PageRef,
    pub column_index: usize,
    pub pixels: Raster,
    pub stage: Stage,
}

impl ColumnImage {
    pub fn id(&self) -> ColumnId {
        self.page.column_id(self.column_index)
    }

    pub fn dimensions(&self) -> (u32, u32) {
        self.pixels.dimensions()
    }

    /// `true` when the binary-stage invariant holds (only 0 and 255).
    pub fn is_binary(&self) -> bool {
        match &self.pixels {
            Raster::Gray(img) => img.as_raw().iter().all(|&v| v == 0 || v == 255),
            Raster::Rgb(_) => false,
        }
    }
}
