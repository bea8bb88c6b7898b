use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::math::Vector;

use super::{Dataset, Sample};

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

fn idx_err(path: &Path, msg: impl Into<String>) -> Error {
    Error::Idx {
        path: path.to_path_buf(),
        msg: msg.into(),
    }
}

fn read_u32(bytes: &[u8], offset: usize, path: &Path) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| idx_err(path, "truncated header"))
}

/// Reads an unsigned-byte image file and its label file. Pixels are scaled
/// to `[0, 1]`. `num_classes` defaults to 10.
pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>, num_classes: Option<usize>) -> Result<Dataset> {
    let (ip, lp) = (images_path.as_ref(), labels_path.as_ref());
    let images = fs::read(ip)?;
    let labels = fs::read(lp)?;

    let magic = read_u32(&images, 0, ip)?;
    if magic != IMAGES_MAGIC {
        return Err(idx_err(ip, format!("bad magic {magic:#010x}, expected {IMAGES_MAGIC:#010x}")));
    }
    let count = read_u32(&images, 4, ip)? as usize;
    let rows = read_u32(&images, 8, ip)? as usize;
    let cols = read_u32(&images, 12, ip)? as usize;
    let dim = rows * cols;
    let body = &images[16..];
    if body.len() != count * dim {
        return Err(idx_err(ip, format!("expected {} pixel bytes, found {}", count * dim, body.len())));
    }

    let magic = read_u32(&labels, 0, lp)?;
    if magic != LABELS_MAGIC {
        return Err(idx_err(lp, format!("bad magic {magic:#010x}, expected {LABELS_MAGIC:#010x}")));
    }
    let label_count = read_u32(&labels, 4, lp)? as usize;
    if label_count != count {
        return Err(idx_err(lp, format!("{label_count} labels for {count} images")));
    }
    let label_bytes = &labels[8..];
    if label_bytes.len() != count {
        return Err(idx_err(lp, format!("expected {count} label bytes, found {}", label_bytes.len())));
    }

    let samples = body
        .chunks_exact(dim.max(1))
        .take(count)
        .zip(label_bytes)
        .map(|(px, &label)| Sample {
            features: Vector::from_vec(px.iter().map(|&p| p as f64 / 255.0).collect()),
            label: label as usize,
        })
        .collect();
    Dataset::new(samples, num_classes.unwrap_or(10), dim)
}

/// Writes a pair of IDX files. Features are clamped to `[0, 1]` and
/// quantized to bytes.
pub fn write_idx(
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
    rows: usize,
    cols: usize,
    samples: &[Sample],
) -> Result<()> {
    let mut img = Vec::with_capacity(16 + samples.len() * rows * cols);
    img.extend_from_slice(&IMAGES_MAGIC.to_be_bytes());
    img.extend_from_slice(&(samples.len() as u32).to_be_bytes());
    img.extend_from_slice(&(rows as u32).to_be_bytes());
    img.extend_from_slice(&(cols as u32).to_be_bytes());
    let mut lab = Vec::with_capacity(8 + samples.len());
    lab.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    lab.extend_from_slice(&(samples.len() as u32).to_be_bytes());
    for s in samples {
        if s.features.len() != rows * cols {
            return Err(Error::dims("write_idx", rows * cols, s.features.len()));
        }
        let label = u8::try_from(s.label)
            .map_err(|_| Error::InvalidParameter(format!("label {} does not fit in a byte", s.label)))?;
        img.extend(s.features.iter().map(|&x| (x.clamp(0.0, 1.0) * 255.0).round() as u8));
        lab.push(label);
    }
    fs::write(images_path, img)?;
    fs::write(labels_path, lab)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture(labels: &[usize]) -> Vec<Sample> {
        labels
            .iter()
            .enumerate()
            .map(|(k, &label)| Sample {
                features: Vector::from_vec((0..16).map(|i| ((i * 17 + k * 40) % 256) as f64 / 255.0).collect()),
                label,
            })
            .collect()
    }

    #[test]
    fn two_image_fixture() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = (dir.path().join("img"), dir.path().join("lab"));
        let samples = fixture(&[3, 7]);
        write_idx(&ip, &lp, 4, 4, &samples).unwrap();
        let ds = load_idx(&ip, &lp, None).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.feature_dim, 16);
        assert_eq!(ds.num_classes, 10);
        for (a, b) in ds.samples.iter().zip(&samples) {
            assert_eq!(a.label, b.label);
            assert!(a.features.sub(&b.features).unwrap().max_abs() < 1e-12);
        }
    }

    #[test]
    fn header_only_is_empty() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = (dir.path().join("img"), dir.path().join("lab"));
        write_idx(&ip, &lp, 28, 28, &[]).unwrap();
        let ds = load_idx(&ip, &lp, None).unwrap();
        assert!(ds.is_empty());
        assert_eq!(ds.feature_dim, 784);
    }

    #[test]
    fn large_label_needs_more_classes() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = (dir.path().join("img"), dir.path().join("lab"));
        write_idx(&ip, &lp, 4, 4, &fixture(&[1, 12])).unwrap();
        assert!(matches!(load_idx(&ip, &lp, None), Err(Error::LabelOutOfRange { label: 12, .. })));
        assert_eq!(load_idx(&ip, &lp, Some(13)).unwrap().num_classes, 13);
    }

    #[test]
    fn rejects_bad_files() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = (dir.path().join("img"), dir.path().join("lab"));
        write_idx(&ip, &lp, 4, 4, &fixture(&[1, 2])).unwrap();

        let mut img = fs::read(&ip).unwrap();
        img.truncate(img.len() - 3);
        let bad = dir.path().join("short");
        fs::write(&bad, &img).unwrap();
        assert!(matches!(load_idx(&bad, &lp, None), Err(Error::Idx { .. })));

        img = fs::read(&ip).unwrap();
        img[3] = 0x01;
        fs::write(&bad, &img).unwrap();
        let err = load_idx(&bad, &lp, None).unwrap_err();
        assert!(err.to_string().contains("magic"), "{err}");

        let lab1 = dir.path().join("lab1");
        let img1 = dir.path().join("img1");
        write_idx(&img1, &lab1, 4, 4, &fixture(&[1])).unwrap();
        let err = load_idx(&ip, &lab1, None).unwrap_err();
        assert!(err.to_string().contains("1 labels for 2 images"), "{err}");

        fs::write(&bad, [0u8, 0]).unwrap();
        assert!(matches!(load_idx(&bad, &lp, None), Err(Error::Idx { .. })));
    }
}
