//! On-disk dataset layout: one directory per clip.
//!
//! ```text
//! <dir>/<clip_id>/
//!     index.json          clip id, geometry, frame count
//!     frames/f000.png     RGB frames
//!     fixations/f000.png  binary fixation maps (any nonzero pixel = fixation)
//!     saliency/f000.png   unit-interval ground-truth saliency
//!     annotations.json    per-frame [{"tag", "box": [x0,y0,x1,y1]}] lists
//! ```
//!
//! Reading a dataset directory visits clip subdirectories in sorted id
//! order, so downstream outputs are stable across filesystems.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{
    read_fixation_png, read_frame_png, read_map_png_unit, write_fixation_png, write_frame_png,
    write_map_png_unit,
};
use crate::map::{BoundingBox, VideoClip};

/// Contents of a clip's `index.json`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClipIndex {
    pub clip_id: String,
    pub n_frames: usize,
    pub width: usize,
    pub height: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct AnnotationEntry {
    tag: String,
    #[serde(rename = "box")]
    bbox: BoundingBox,
}

fn frame_name(i: usize) -> String {
    format!("f{i:03}.png")
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Writes one clip under `dir/<clip.id>/`.
pub fn write_clip(clip: &VideoClip, dir: &Path) -> Result<()> {
    clip.validate()?;
    let root = dir.join(&clip.id);
    for sub in ["frames", "fixations", "saliency"] {
        fs::create_dir_all(root.join(sub)).map_err(|e| Error::io(&root.join(sub), e))?;
    }
    write_json(
        &ClipIndex {
            clip_id: clip.id.clone(),
            n_frames: clip.len(),
            width: clip.width(),
            height: clip.height(),
        },
        &root.join("index.json"),
    )?;
    for (i, frame) in clip.frames.iter().enumerate() {
        write_frame_png(frame, &root.join("frames").join(frame_name(i)))?;
    }
    for (i, fix) in clip.fixations.iter().enumerate() {
        write_fixation_png(fix, &root.join("fixations").join(frame_name(i)))?;
    }
    for (i, sal) in clip.saliency.iter().enumerate() {
        write_map_png_unit(sal, &root.join("saliency").join(frame_name(i)))?;
    }
    let annotations: Vec<Vec<AnnotationEntry>> = clip
        .annotations
        .iter()
        .map(|objs| {
            objs.iter()
                .map(|(tag, bbox)| AnnotationEntry {
                    tag: tag.clone(),
                    bbox: *bbox,
                })
                .collect()
        })
        .collect();
    write_json(&annotations, &root.join("annotations.json"))
}

/// Reads one clip directory written by [`write_clip`].
pub fn read_clip(clip_dir: &Path) -> Result<VideoClip> {
    let index: ClipIndex = read_json(&clip_dir.join("index.json"))?;
    let mut frames = Vec::with_capacity(index.n_frames);
    let mut fixations = Vec::with_capacity(index.n_frames);
    let mut saliency = Vec::with_capacity(index.n_frames);
    for i in 0..index.n_frames {
        frames.push(read_frame_png(
            &clip_dir.join("frames").join(frame_name(i)),
            i,
        )?);
        fixations.push(read_fixation_png(
            &clip_dir.join("fixations").join(frame_name(i)),
        )?);
        saliency.push(read_map_png_unit(
            &clip_dir.join("saliency").join(frame_name(i)),
        )?);
    }
    let raw: Vec<Vec<AnnotationEntry>> = read_json(&clip_dir.join("annotations.json"))?;
    if raw.len() != index.n_frames {
        return Err(Error::IncompleteInput(format!(
            "clip {}: {} annotation frames for {} frames",
            index.clip_id,
            raw.len(),
            index.n_frames
        )));
    }
    let annotations = raw
        .into_iter()
        .map(|objs| objs.into_iter().map(|e| (e.tag, e.bbox)).collect())
        .collect();
    let clip = VideoClip {
        id: index.clip_id,
        frames,
        fixations,
        saliency,
        annotations,
    };
    clip.validate()?;
    Ok(clip)
}

/// Lists clip subdirectories (those containing `index.json`) in sorted order.
pub fn clip_dirs(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let path = entry.path();
        if path.is_dir() && path.join("index.json").is_file() {
            out.push(path);
        }
    }
    out.sort();
    if out.is_empty() {
        return Err(Error::EmptyInput(format!(
            "no clip directories under {}",
            dir.display()
        )));
    }
    Ok(out)
}

/// Writes every clip under `dir`.
pub fn write_dataset(clips: &[VideoClip], dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for clip in clips {
        write_clip(clip, dir)?;
    }
    Ok(())
}

/// Reads every clip under `dir`, sorted by clip id.
pub fn read_dataset(dir: &Path) -> Result<Vec<VideoClip>> {
    clip_dirs(dir)?.iter().map(|d| read_clip(d)).collect()
}
