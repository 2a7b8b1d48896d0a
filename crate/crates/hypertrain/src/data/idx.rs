use std::fs::File;
use std::io::{BufReader, Read};
use std::path::Path;

use crate::error::{Error, Result};
use crate::real::Real;

use super::{Dataset, Targets};

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

fn ingest(path: &Path, message: impl Into<String>) -> Error {
    Error::Ingest {
        path: path.display().to_string(),
        row: 0,
        col: 0,
        message: message.into(),
    }
}

fn read_u32_be(r: &mut impl Read, path: &Path) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)
        .map_err(|e| ingest(path, format!("truncated header: {e}")))?;
    Ok(u32::from_be_bytes(buf))
}

/// Load an IDX image/label pair as a classification dataset.
///
/// Pixels are scaled to `[0, 1]` (255 → 1.0); labels must be 0–9. Magic
/// numbers, counts, and buffer lengths are validated bit-exactly.
pub fn load_idx<F: Real>(
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
    name: &str,
) -> Result<Dataset<F>> {
    let images_path = images_path.as_ref();
    let labels_path = labels_path.as_ref();

    let mut img = BufReader::new(
        File::open(images_path).map_err(|e| ingest(images_path, format!("cannot open: {e}")))?,
    );
    let magic = read_u32_be(&mut img, images_path)?;
    if magic != IMAGES_MAGIC {
        return Err(ingest(
            images_path,
            format!("bad image magic {magic:#010x}, expected {IMAGES_MAGIC:#010x}"),
        ));
    }
    let n = read_u32_be(&mut img, images_path)? as usize;
    let rows = read_u32_be(&mut img, images_path)? as usize;
    let cols = read_u32_be(&mut img, images_path)? as usize;
    let d = rows * cols;
    let mut pixels = vec![0u8; n * d];
    img.read_exact(&mut pixels)
        .map_err(|e| ingest(images_path, format!("truncated pixel data: {e}")))?;
    let mut tail = [0u8; 1];
    if img.read(&mut tail).map_err(|e| ingest(images_path, e.to_string()))? != 0 {
        return Err(ingest(images_path, "trailing bytes after pixel data"));
    }

    let mut lab = BufReader::new(
        File::open(labels_path).map_err(|e| ingest(labels_path, format!("cannot open: {e}")))?,
    );
    let magic = read_u32_be(&mut lab, labels_path)?;
    if magic != LABELS_MAGIC {
        return Err(ingest(
            labels_path,
            format!("bad label magic {magic:#010x}, expected {LABELS_MAGIC:#010x}"),
        ));
    }
    let n_labels = read_u32_be(&mut lab, labels_path)? as usize;
    if n_labels != n {
        return Err(ingest(
            labels_path,
            format!("label count {n_labels} does not match image count {n}"),
        ));
    }
    let mut raw_labels = vec![0u8; n];
    lab.read_exact(&mut raw_labels)
        .map_err(|e| ingest(labels_path, format!("truncated label data: {e}")))?;

    let x: Vec<F> = pixels
        .iter()
        .map(|&p| F::from_f64(p as f64 / 255.0))
        .collect();
    let labels: Vec<usize> = raw_labels.iter().map(|&l| l as usize).collect();
    if let Some(&bad) = labels.iter().find(|&&l| l > 9) {
        return Err(ingest(labels_path, format!("label {bad} out of range 0-9")));
    }
    Dataset::new(
        name,
        d,
        x,
        Targets::Labels {
            labels,
            n_classes: 10,
        },
    )
}

#[cfg(test)]
pub(crate) fn write_idx_fixture(
    dir: &Path,
    n: usize,
    rows: usize,
    cols: usize,
    pixel: impl Fn(usize, usize) -> u8,
    label: impl Fn(usize) -> u8,
) -> (std::path::PathBuf, std::path::PathBuf) {
    use std::io::Write;
    let images = dir.join("images-idx3-ubyte");
    let labels = dir.join("labels-idx1-ubyte");
    let mut f = File::create(&images).unwrap();
    f.write_all(&IMAGES_MAGIC.to_be_bytes()).unwrap();
    f.write_all(&(n as u32).to_be_bytes()).unwrap();
    f.write_all(&(rows as u32).to_be_bytes()).unwrap();
    f.write_all(&(cols as u32).to_be_bytes()).unwrap();
    for i in 0..n {
        for p in 0..rows * cols {
            f.write_all(&[pixel(i, p)]).unwrap();
        }
    }
    let mut f = File::create(&labels).unwrap();
    f.write_all(&LABELS_MAGIC.to_be_bytes()).unwrap();
    f.write_all(&(n as u32).to_be_bytes()).unwrap();
    for i in 0..n {
        f.write_all(&[label(i)]).unwrap();
    }
    (images, labels)
}
