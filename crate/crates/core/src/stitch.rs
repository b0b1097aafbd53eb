//! Reassembly of full-field micrographs from abutting grid patches.
//!
//! Patch positions come from filenames via a regular expression with named
//! captures `group`, `row` and `col`. Patches are placed edge to edge without
//! registration or blending.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use image::{DynamicImage, ImageBuffer, ImageFormat, Pixel};
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::LabelMask;
use crate::prep::UnionFind;

pub const DEFAULT_PATTERN: &str =
    r"^(?P<group>.+)_r(?P<row>\d+)_c(?P<col>\d+)\.(?i:png|tif|tiff)$";
pub const DEFAULT_MASK_PATTERN: &str =
    r"^(?P<group>.+)_r(?P<row>\d+)_c(?P<col>\d+)_mask\.(?i:png|tif|tiff)$";

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PatchCoordinate {
    pub group_id: String,
    pub row: u32,
    pub col: u32,
}

/// How stitched mask patches are interpreted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskKind {
    /// Edge-style grayscale annotations; placed verbatim.
    #[default]
    Raw,
    /// Instance label masks; instances cut by a seam are re-unified.
    Labels,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StitchPlan {
    pub rows: u32,
    pub cols: u32,
    /// Expected patch size; inferred from the first patch when absent.
    pub patch_width: Option<u32>,
    pub patch_height: Option<u32>,
    pub filename_pattern: String,
    pub mask_pattern: Option<String>,
    pub mask_kind: MaskKind,
}

impl Default for StitchPlan {
    fn default() -> Self {
        Self {
            rows: 3,
            cols: 4,
            patch_width: None,
            patch_height: None,
            filename_pattern: DEFAULT_PATTERN.to_string(),
            mask_pattern: None,
            mask_kind: MaskKind::Raw,
        }
    }
}

impl StitchPlan {
    pub fn grid(rows: u32, cols: u32) -> Self {
        Self {
            rows,
            cols,
            ..Self::default()
        }
    }

    pub fn patches_per_group(&self) -> usize {
        (self.rows as usize) * (self.cols as usize)
    }

    fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::InvalidParameter("grid must have at least one row and column".into()));
        }
        Ok(())
    }
}

/// Compiles a patch pattern, checking the required named captures.
pub fn compile_pattern(pattern: &str) -> Result<Regex> {
    let re = Regex::new(pattern).map_err(|e| Error::Pattern(e.to_string()))?;
    for name in ["group", "row", "col"] {
        if !re.capture_names().flatten().any(|n| n == name) {
            return Err(Error::Pattern(format!("missing named capture `{name}`")));
        }
    }
    Ok(re)
}

pub fn parse_coordinate(
    filename: &str,
    pattern: &Regex,
    rows: u32,
    cols: u32,
) -> Result<PatchCoordinate> {
    let caps = pattern
        .captures(filename)
        .ok_or_else(|| Error::NoPatternMatch(filename.to_string()))?;
    let num = |name: &str| -> Result<u32> {
        caps.name(name)
            .and_then(|m| m.as_str().parse().ok())
            .ok_or_else(|| Error::NoPatternMatch(filename.to_string()))
    };
    let (row, col) = (num("row")?, num("col")?);
    if row >= rows || col >= cols {
        return Err(Error::CoordinateOutOfGrid {
            row,
            col,
            rows,
            cols,
        });
    }
    Ok(PatchCoordinate {
        group_id: caps["group"].to_string(),
        row,
        col,
    })
}

type Buffer<P> = ImageBuffer<P, Vec<<P as Pixel>::Subpixel>>;

fn check_grid<T>(
    patches: &[(PatchCoordinate, T)],
    plan: &StitchPlan,
    dims: impl Fn(&T) -> (u32, u32),
) -> Result<(Vec<Option<usize>>, u32, u32)> {
    plan.validate()?;
    let mut slots = vec![None; plan.patches_per_group()];
    for (i, (c, _)) in patches.iter().enumerate() {
        if c.row >= plan.rows || c.col >= plan.cols {
            return Err(Error::CoordinateOutOfGrid {
                row: c.row,
                col: c.col,
                rows: plan.rows,
                cols: plan.cols,
            });
        }
        let s = &mut slots[(c.row * plan.cols + c.col) as usize];
        if s.is_some() {
            return Err(Error::DuplicatePatch {
                row: c.row,
                col: c.col,
            });
        }
        *s = Some(i);
    }
    if let Some(k) = slots.iter().position(Option::is_none) {
        return Err(Error::MissingPatch {
            row: k as u32 / plan.cols,
            col: k as u32 % plan.cols,
        });
    }
    let first = dims(&patches[slots[0].unwrap()].1);
    let (pw, ph) = (
        plan.patch_width.unwrap_or(first.0),
        plan.patch_height.unwrap_or(first.1),
    );
    for (_, p) in patches {
        if dims(p) != (pw, ph) {
            return Err(Error::DimensionMismatch {
                left: dims(p),
                right: (pw, ph),
            });
        }
    }
    Ok((slots, pw, ph))
}

/// Places patch `(r, c)` pixel `(x, y)` at `(c·pw + x, r·ph + y)`.
pub fn stitch_group<P: Pixel>(
    patches: &[(PatchCoordinate, Buffer<P>)],
    plan: &StitchPlan,
) -> Result<Buffer<P>> {
    let (slots, pw, ph) = check_grid(patches, plan, |p| p.dimensions())?;
    let mut out = ImageBuffer::new(pw * plan.cols, ph * plan.rows);
    for (k, slot) in slots.iter().enumerate() {
        let (r, c) = (k as u32 / plan.cols, k as u32 % plan.cols);
        let patch = &patches[slot.unwrap()].1;
        for (x, y, px) in patch.enumerate_pixels() {
            out.put_pixel(c * pw + x, r * ph + y, *px);
        }
    }
    Ok(out)
}

/// Stitches arbitrary decoded images, converting every patch to the first
/// patch's pixel layout.
pub fn stitch_dynamic(
    patches: &[(PatchCoordinate, DynamicImage)],
    plan: &StitchPlan,
) -> Result<DynamicImage> {
    let Some((_, first)) = patches.first() else {
        return Err(Error::MissingPatch { row: 0, col: 0 });
    };
    macro_rules! via {
        ($conv:ident, $variant:ident) => {{
            let conv: Vec<_> = patches
                .iter()
                .map(|(c, p)| (c.clone(), p.$conv()))
                .collect();
            Ok(DynamicImage::$variant(stitch_group(&conv, plan)?))
        }};
    }
    match first {
        DynamicImage::ImageLuma8(_) => via!(to_luma8, ImageLuma8),
        DynamicImage::ImageLuma16(_) => via!(to_luma16, ImageLuma16),
        DynamicImage::ImageRgb8(_) => via!(to_rgb8, ImageRgb8),
        _ => via!(to_rgba8, ImageRgba8),
    }
}

/// Stitches label-mask patches and re-unifies instances split by seams.
///
/// Labels from different patches that touch across a seam are joined,
/// strongest contact first, as long as the joined instance never holds two
/// labels from the same patch. Distinct instances of one patch therefore stay
/// distinct. Output IDs are contiguous in raster order.
pub fn stitch_label_masks(
    patches: &[(PatchCoordinate, LabelMask)],
    plan: &StitchPlan,
) -> Result<LabelMask> {
    let (slots, pw, ph) = check_grid(patches, plan, |m| m.dimensions())?;
    let (w, h) = (pw * plan.cols, ph * plan.rows);
    // Node per (patch slot, local label).
    let mut node_of: HashMap<(usize, u16), u32> = HashMap::new();
    let mut node_patch: Vec<usize> = Vec::new();
    let mut nodes = vec![u32::MAX; (w as usize) * (h as usize)];
    for (k, slot) in slots.iter().enumerate() {
        let (r, c) = (k as u32 / plan.cols, k as u32 % plan.cols);
        let m = &patches[slot.unwrap()].1;
        for y in 0..ph {
            for x in 0..pw {
                let id = m.get(x, y);
                if id == 0 {
                    continue;
                }
                let n = *node_of.entry((k, id)).or_insert_with(|| {
                    node_patch.push(k);
                    (node_patch.len() - 1) as u32
                });
                nodes[((r * ph + y) * w + c * pw + x) as usize] = n;
            }
        }
    }

    // Seam contacts between nodes, counted in pixels.
    let mut contact: BTreeMap<(u32, u32), usize> = BTreeMap::new();
    let wu = w as usize;
    let mut touch = |a: u32, b: u32| {
        if a != u32::MAX && b != u32::MAX && a != b {
            *contact.entry((a.min(b), a.max(b))).or_default() += 1;
        }
    };
    for c in 1..plan.cols {
        let x = (c * pw) as usize;
        for y in 0..h as usize {
            touch(nodes[y * wu + x - 1], nodes[y * wu + x]);
        }
    }
    for r in 1..plan.rows {
        let y = (r * ph) as usize;
        for x in 0..wu {
            touch(nodes[(y - 1) * wu + x], nodes[y * wu + x]);
        }
    }
    let mut edges: Vec<((u32, u32), usize)> = contact.into_iter().collect();
    edges.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));

    let mut uf = UnionFind::with_len(node_patch.len());
    let mut members: Vec<Vec<usize>> = node_patch.iter().map(|&p| vec![p]).collect();
    for ((a, b), _) in edges {
        let (ra, rb) = (uf.find(a), uf.find(b));
        if ra == rb {
            continue;
        }
        let clash = members[ra as usize]
            .iter()
            .any(|p| members[rb as usize].contains(p));
        if clash {
            continue;
        }
        let root = uf.union(ra, rb);
        let other = if root == ra { rb } else { ra };
        let moved = std::mem::take(&mut members[other as usize]);
        members[root as usize].extend(moved);
    }

    let mut out_id = vec![0u32; node_patch.len()];
    let mut next = 0u32;
    let mut labels = Vec::with_capacity(nodes.len());
    for n in nodes {
        if n == u32::MAX {
            labels.push(0);
            continue;
        }
        let root = uf.find(n) as usize;
        if out_id[root] == 0 {
            next += 1;
            if next > u32::from(u16::MAX) {
                return Err(Error::LabelOverflow {
                    count: next as usize,
                });
            }
            out_id[root] = next;
        }
        labels.push(out_id[root] as u16);
    }
    LabelMask::new(w, h, labels)
}

/// Inverse of [`stitch_group`]: cuts an image back into its grid patches.
pub fn split_grid<P: Pixel>(image: &Buffer<P>, rows: u32, cols: u32) -> Vec<Buffer<P>> {
    let (pw, ph) = (image.width() / cols, image.height() / rows);
    let mut out = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            out.push(ImageBuffer::from_fn(pw, ph, |x, y| {
                *image.get_pixel(c * pw + x, r * ph + y)
            }));
        }
    }
    out
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SkippedGroup {
    pub group: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FileFailure {
    pub path: PathBuf,
    pub error: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StitchSummary {
    pub groups: usize,
    pub written: Vec<PathBuf>,
    pub skipped: Vec<SkippedGroup>,
    pub failures: Vec<FileFailure>,
}

type GroupFiles = BTreeMap<String, Vec<(PatchCoordinate, PathBuf)>>;

fn scan_dir(
    dir: &Path,
    pattern: &Regex,
    plan: &StitchPlan,
    summary: &mut StitchSummary,
) -> Result<GroupFiles> {
    let mut groups: GroupFiles = BTreeMap::new();
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .collect();
    paths.sort();
    for path in paths {
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
            continue;
        };
        match parse_coordinate(name, pattern, plan.rows, plan.cols) {
            Ok(c) => groups.entry(c.group_id.clone()).or_default().push((c, path)),
            Err(Error::NoPatternMatch(_)) => {}
            Err(e) => summary.failures.push(FileFailure {
                path,
                error: e.to_string(),
            }),
        }
    }
    Ok(groups)
}

fn incomplete(files: &[(PatchCoordinate, PathBuf)], plan: &StitchPlan) -> Option<String> {
    (files.len() != plan.patches_per_group()).then(|| {
        format!(
            "{} of {} patches present",
            files.len(),
            plan.patches_per_group()
        )
    })
}

/// Stitches every complete group found in `input_dir` into `output_dir`.
///
/// Images go to `<group>.png`; masks (when `mask_pattern` is set) to
/// `<group>_mask.png` for raw masks or `<group>_mask.tif` for label masks.
/// Incomplete groups are skipped; per-file errors are collected.
pub fn stitch_dataset(
    input_dir: &Path,
    plan: &StitchPlan,
    output_dir: &Path,
) -> Result<StitchSummary> {
    plan.validate()?;
    let image_re = compile_pattern(&plan.filename_pattern)?;
    let mask_re = plan.mask_pattern.as_deref().map(compile_pattern).transpose()?;
    std::fs::create_dir_all(output_dir).map_err(|e| Error::io(output_dir, e))?;

    let mut summary = StitchSummary::default();
    let mut image_groups = scan_dir(input_dir, &image_re, plan, &mut summary)?;
    let mask_groups = match &mask_re {
        Some(re) => scan_dir(input_dir, re, plan, &mut summary)?,
        None => BTreeMap::new(),
    };
    // A mask file may also satisfy a loose image pattern; masks win.
    let mask_paths: std::collections::HashSet<&PathBuf> =
        mask_groups.values().flatten().map(|(_, p)| p).collect();
    for files in image_groups.values_mut() {
        files.retain(|(_, p)| !mask_paths.contains(p));
    }
    image_groups.retain(|_, f| !f.is_empty());

    for (group, files) in &image_groups {
        if let Some(reason) = incomplete(files, plan) {
            log::warn!("skipping group {group}: {reason}");
            summary.skipped.push(SkippedGroup {
                group: group.clone(),
                reason,
            });
            continue;
        }
        let out = output_dir.join(format!("{group}.png"));
        match load_and_stitch(files, plan).and_then(|img| {
            crate::io::write_image(&img, &out, ImageFormat::Png)
        }) {
            Ok(()) => {
                summary.groups += 1;
                summary.written.push(out);
            }
            Err(e) => summary.failures.push(FileFailure {
                path: out,
                error: e.to_string(),
            }),
        }

        let Some(mask_files) = mask_groups.get(group) else {
            continue;
        };
        if let Some(reason) = incomplete(mask_files, plan) {
            summary.skipped.push(SkippedGroup {
                group: format!("{group} (mask)"),
                reason,
            });
            continue;
        }
        let res = match plan.mask_kind {
            MaskKind::Raw => {
                let out = output_dir.join(format!("{group}_mask.png"));
                load_and_stitch(mask_files, plan)
                    .and_then(|img| crate::io::write_image(&img, &out, ImageFormat::Png))
                    .map(|()| out)
            }
            MaskKind::Labels => {
                let out = output_dir.join(format!("{group}_mask.tif"));
                mask_files
                    .iter()
                    .map(|(c, p)| Ok((c.clone(), crate::io::read_label_mask(p)?)))
                    .collect::<Result<Vec<_>>>()
                    .and_then(|patches| stitch_label_masks(&patches, plan))
                    .and_then(|m| crate::io::write_label_mask(&m, &out))
                    .map(|()| out)
            }
        };
        match res {
            Ok(p) => summary.written.push(p),
            Err(e) => summary.failures.push(FileFailure {
                path: output_dir.join(group),
                error: e.to_string(),
            }),
        }
    }
    for group in mask_groups.keys().filter(|g| !image_groups.contains_key(*g)) {
        summary.skipped.push(SkippedGroup {
            group: format!("{group} (mask)"),
            reason: "no matching image group".into(),
        });
    }
    Ok(summary)
}

fn load_and_stitch(files: &[(PatchCoordinate, PathBuf)], plan: &StitchPlan) -> Result<DynamicImage> {
    let patches = files
        .iter()
        .map(|(c, p)| Ok((c.clone(), crate::io::read_image(p)?)))
        .collect::<Result<Vec<_>>>()?;
    stitch_dynamic(&patches, plan)
}
