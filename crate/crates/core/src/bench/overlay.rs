//! Draws tracker output onto frames, one fixed color per track id.

use std::fs;
use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use thiserror::Error;

use crate::ingest::{ResultRecord, SequenceMeta};
use crate::types::BBox;

#[derive(Debug, Error)]
pub enum OverlayError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct OverlayStats {
    pub written: u32,
    /// Frames whose source image was missing or unreadable.
    pub skipped: u32,
}

const BACKGROUND: Rgb<u8> = Rgb([24, 24, 24]);
const LINE_WIDTH: i64 = 2;

/// Deterministic, reasonably bright color for a track id.
pub fn id_color(id: i64) -> [u8; 3] {
    // splitmix64 finalizer
    let mut z = (id as u64).wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    let b = z.to_le_bytes();
    [64 + b[0] % 192, 64 + b[1] % 192, 64 + b[2] % 192]
}

fn draw_box(img: &mut RgbImage, b: &BBox, color: Rgb<u8>) {
    let (w, h) = (i64::from(img.width()), i64::from(img.height()));
    let x0 = b.x.round() as i64;
    let y0 = b.y.round() as i64;
    let x1 = b.right().round() as i64 - 1;
    let y1 = b.bottom().round() as i64 - 1;
    let mut put = |x: i64, y: i64| {
        if (0..w).contains(&x) && (0..h).contains(&y) {
            img.put_pixel(x as u32, y as u32, color);
        }
    };
    for t in 0..LINE_WIDTH {
        for x in x0..=x1 {
            put(x, y0 + t);
            put(x, y1 - t);
        }
        for y in y0..=y1 {
            put(x0 + t, y);
            put(x1 - t, y);
        }
    }
}

fn load_frame(dir: &Path, frame: u32) -> Option<RgbImage> {
    for ext in ["jpg", "png"] {
        let path = dir.join(format!("{frame:06}.{ext}"));
        if path.is_file() {
            match image::open(&path) {
                Ok(img) => return Some(img.to_rgb8()),
                Err(e) => {
                    log::warn!("{}: {e}; frame skipped", path.display());
                    return None;
                }
            }
        }
    }
    log::warn!("no image for frame {frame} in {}; frame skipped", dir.display());
    None
}

/// Writes `{frame:06}.png` into `out_dir` for every frame of the sequence.
/// Without `images`, boxes are drawn on a blank canvas of the sequence size.
pub fn render_overlay(
    meta: &SequenceMeta,
    tracks: &[ResultRecord],
    images: Option<&Path>,
    out_dir: &Path,
) -> Result<OverlayStats, OverlayError> {
    fs::create_dir_all(out_dir).map_err(|source| OverlayError::Io { path: out_dir.to_path_buf(), source })?;
    let mut by_frame: Vec<Vec<&ResultRecord>> = vec![Vec::new(); meta.num_frames as usize];
    for r in tracks {
        if let Some(slot) = (r.frame as usize).checked_sub(1).and_then(|i| by_frame.get_mut(i)) {
            slot.push(r);
        }
    }
    let mut stats = OverlayStats::default();
    for (i, records) in by_frame.iter().enumerate() {
        let frame = i as u32 + 1;
        let mut img = match images {
            Some(dir) => match load_frame(dir, frame) {
                Some(img) => img,
                None => {
                    stats.skipped += 1;
                    continue;
                }
            },
            None => RgbImage::from_pixel(meta.width, meta.height, BACKGROUND),
        };
        for r in records {
            draw_box(&mut img, &r.bbox, Rgb(id_color(r.id)));
        }
        let path = out_dir.join(format!("{frame:06}.png"));
        img.save(&path).map_err(|source| OverlayError::Image { path, source })?;
        stats.written += 1;
    }
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta(n: u32) -> SequenceMeta {
        SequenceMeta { name: "s".into(), width: 40, height: 30, frame_rate: 30.0, num_frames: n }
    }

    #[test]
    fn colors_are_stable_and_distinct() {
        assert_eq!(id_color(7), id_color(7));
        assert_ne!(id_color(1), id_color(2));
    }

    #[test]
    fn empty_track_file_gives_blank_frames() {
        let dir = tempfile::tempdir().unwrap();
        let stats = render_overlay(&meta(2), &[], None, dir.path()).unwrap();
        assert_eq!(stats, OverlayStats { written: 2, skipped: 0 });
        let img = image::open(dir.path().join("000002.png")).unwrap().to_rgb8();
        assert!(img.pixels().all(|p| *p == BACKGROUND));
    }

    #[test]
    fn boxes_drawn_in_id_color_and_missing_images_skipped() {
        let dir = tempfile::tempdir().unwrap();
        let imgs = dir.path().join("img1");
        fs::create_dir_all(&imgs).unwrap();
        RgbImage::from_pixel(40, 30, Rgb([0, 0, 0])).save(imgs.join("000001.png")).unwrap();
        let r = ResultRecord { frame: 1, id: 5, bbox: BBox::new(5.0, 5.0, 10.0, 10.0), confidence: 1.0 };
        let out = dir.path().join("out");
        let stats = render_overlay(&meta(2), &[r], Some(&imgs), &out).unwrap();
        assert_eq!(stats, OverlayStats { written: 1, skipped: 1 });
        let img = image::open(out.join("000001.png")).unwrap().to_rgb8();
        assert_eq!(img.get_pixel(5, 5).0, id_color(5));
        assert_eq!(img.get_pixel(10, 10).0, [0, 0, 0]);
    }
}
