//! `{left/, right/, disp/}` directory datasets with matching file stems.

use std::fs;
use std::path::{Path, PathBuf};

use super::formats::{load_disp_png16, load_pfm, load_rgb, write_disp_png16, write_rgb_png};
use super::StereoSample;
use crate::error::{Error, Result};
use crate::regression::ValidityMask;

fn stems(dir: &Path) -> Result<Vec<(String, PathBuf)>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if let Some(stem) = path.is_file().then(|| path.file_stem()).flatten() {
            out.push((stem.to_string_lossy().into_owned(), path));
        }
    }
    out.sort();
    Ok(out)
}

fn find(dir: &Path, stem: &str, exts: &[&str]) -> Option<PathBuf> {
    exts.iter().map(|e| dir.join(format!("{stem}.{e}"))).find(|p| p.is_file())
}

/// Loads every pair under `root`. Disparities come from `disp/<stem>.pfm`
/// (finite values valid) or `disp/<stem>.png` (16-bit convention).
pub fn load_dir(root: &Path) -> Result<Vec<StereoSample>> {
    let (ld, rd, dd) = (root.join("left"), root.join("right"), root.join("disp"));
    let mut samples = Vec::new();
    for (stem, left_path) in stems(&ld)? {
        let missing = |what: &str| Error::InvalidArgument(format!("{}: no {what} for {stem}", root.display()));
        let right_path = find(&rd, &stem, &["png", "ppm", "pgm"]).ok_or_else(|| missing("right image"))?;
        let left = load_rgb(&left_path)?;
        let right = load_rgb(&right_path)?;
        let (gt, valid) = if let Some(p) = find(&dd, &stem, &["pfm"]) {
            let gt = load_pfm(&p)?;
            let bits = gt.data().iter().map(|v| v.is_finite()).collect();
            let valid = ValidityMask::new(gt.height(), gt.width(), bits)?;
            (gt, valid)
        } else {
            let p = find(&dd, &stem, &["png"]).ok_or_else(|| missing("disparity"))?;
            load_disp_png16(&p)?
        };
        samples.push(StereoSample::new(left, right, gt, valid)?);
    }
    if samples.is_empty() {
        return Err(Error::InvalidArgument(format!("{}: no samples found", root.display())));
    }
    Ok(samples)
}

/// Writes samples as `NNNN.png` views and 16-bit PNG disparities.
pub fn write_dir(root: &Path, samples: &[StereoSample]) -> Result<()> {
    for sub in ["left", "right", "disp"] {
        let d = root.join(sub);
        fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
    }
    for (i, s) in samples.iter().enumerate() {
        let name = format!("{i:04}.png");
        write_rgb_png(&root.join("left").join(&name), &s.left)?;
        write_rgb_png(&root.join("right").join(&name), &s.right)?;
        write_disp_png16(&root.join("disp").join(&name), &s.gt.values, &s.valid)?;
    }
    Ok(())
}
