//! Dataset types, MNIST loading, and split construction.

pub mod idx;
pub mod transform;

use std::path::Path;

use crate::error::{Error, Result};
use crate::rng::RngState;
use crate::tensor::{Element, Tensor};

pub const CLASS_COUNT: usize = 10;

#[derive(Debug, Clone)]
pub struct LabeledImage<E: Element> {
    /// [1,H,W], values in [0,1].
    pub pixels: Tensor<E>,
    pub label: u8,
}

/// Ordered, immutable split with uniform image geometry.
#[derive(Debug, Clone)]
pub struct DatasetSplit<E: Element> {
    pub name: String,
    images: Vec<LabeledImage<E>>,
    height: usize,
    width: usize,
}

impl<E: Element> DatasetSplit<E> {
    pub fn new(name: impl Into<String>, images: Vec<LabeledImage<E>>) -> Result<Self> {
        let name = name.into();
        if images.is_empty() {
            return Err(Error::Data(format!("split '{name}' is empty")));
        }
        let (h, w) = match images[0].pixels.shape() {
            [1, h, w] => (*h, *w),
            s => return Err(Error::Data(format!("split '{name}': image shape {s:?}"))),
        };
        for (i, img) in images.iter().enumerate() {
            if img.pixels.shape() != [1, h, w] {
                return Err(Error::Data(format!(
                    "split '{name}': image {i} has shape {:?}, expected [1,{h},{w}]",
                    img.pixels.shape()
                )));
            }
            if usize::from(img.label) >= CLASS_COUNT {
                return Err(Error::Data(format!(
                    "split '{name}': image {i} has label {} (classes are 0..{CLASS_COUNT})",
                    img.label
                )));
            }
        }
        Ok(DatasetSplit { name, images, height: h, width: w })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn images(&self) -> &[LabeledImage<E>] {
        &self.images
    }

    pub fn get(&self, i: usize) -> &LabeledImage<E> {
        &self.images[i]
    }

    /// Copies the given indices into a batch tensor [B,1,H,W] plus labels.
    pub fn gather(&self, indices: &[usize]) -> Result<(Tensor<E>, Vec<usize>)> {
        if indices.is_empty() {
            return Err(Error::Data("empty batch".into()));
        }
        let hw = self.height * self.width;
        let mut data = Vec::with_capacity(indices.len() * hw);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            let img = self.images.get(i).ok_or_else(|| {
                Error::Data(format!("index {i} out of range for split of {}", self.images.len()))
            })?;
            data.extend_from_slice(img.pixels.data());
            labels.push(usize::from(img.label));
        }
        Ok((Tensor::from_vec(vec![indices.len(), 1, self.height, self.width], data)?, labels))
    }

    /// First `n` images as a new split (order preserved).
    pub fn truncated(&self, n: usize, name: impl Into<String>) -> Result<DatasetSplit<E>> {
        DatasetSplit::new(name, self.images[..n.min(self.images.len())].to_vec())
    }

    /// New split with every image's pixels transformed (labels kept).
    pub fn map_images(
        &self,
        name: impl Into<String>,
        mut f: impl FnMut(&Tensor<E>) -> Result<Tensor<E>>,
    ) -> Result<DatasetSplit<E>> {
        let mut images = Vec::with_capacity(self.images.len());
        for img in &self.images {
            images.push(LabeledImage { pixels: f(&img.pixels)?, label: img.label });
        }
        DatasetSplit::new(name, images)
    }
}

/// Splits `images` into disjoint (train, validation) sets of exactly the
/// requested sizes, drawn from a seeded shuffle. The canonical MNIST setup
/// passes (60k images, 45000, 5000): the shuffle's first 50k form the pool,
/// its head training, its tail validation; the remaining 10k are unused.
pub fn split_train_val<E: Element>(
    images: Vec<LabeledImage<E>>,
    train_count: usize,
    val_count: usize,
    seed: u64,
) -> Result<(DatasetSplit<E>, Option<DatasetSplit<E>>)> {
    let total = train_count
        .checked_add(val_count)
        .ok_or_else(|| Error::InvalidArgument("split sizes overflow".into()))?;
    if total > images.len() {
        return Err(Error::Data(format!(
            "requested {train_count}+{val_count} images, only {} available",
            images.len()
        )));
    }
    if train_count == 0 {
        return Err(Error::Data("train split must be non-empty".into()));
    }
    let order = RngState::new(seed).derive("split", 0).permutation(images.len());
    let mut train = Vec::with_capacity(train_count);
    let mut val = Vec::with_capacity(val_count);
    for (pos, &idx) in order[..total].iter().enumerate() {
        let img = images[idx].clone();
        if pos < train_count {
            train.push(img);
        } else {
            val.push(img);
        }
    }
    let train = DatasetSplit::new("train", train)?;
    let val = if val_count > 0 { Some(DatasetSplit::new("validation", val)?) } else { None };
    Ok((train, val))
}

/// The four standard MNIST files, accepted plain or gzipped.
pub const MNIST_FILE_NAMES: [&str; 4] = [
    "train-images-idx3-ubyte",
    "train-labels-idx1-ubyte",
    "t10k-images-idx3-ubyte",
    "t10k-labels-idx1-ubyte",
];

fn load_pair<E: Element>(
    dir: &Path,
    image_name: &str,
    label_name: &str,
    split_name: &str,
) -> Result<Vec<LabeledImage<E>>> {
    let img_path = idx::locate_file(dir, image_name).ok_or_else(|| missing_data_error(dir))?;
    let lbl_path = idx::locate_file(dir, label_name).ok_or_else(|| missing_data_error(dir))?;
    let images = idx::parse_idx_images::<E>(&idx::read_idx_file(&img_path)?)?;
    let labels = idx::parse_idx_labels(&idx::read_idx_file(&lbl_path)?)?;
    let (n, h, w) = match images.shape() {
        [n, 1, h, w] => (*n, *h, *w),
        s => return Err(Error::Data(format!("unexpected image tensor shape {s:?}"))),
    };
    if labels.len() != n {
        return Err(Error::Data(format!(
            "{split_name}: {n} images but {} labels",
            labels.len()
        )));
    }
    let hw = h * w;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        out.push(LabeledImage {
            pixels: Tensor::from_vec(vec![1, h, w], images.data()[i * hw..][..hw].to_vec())?,
            label: labels[i],
        });
    }
    Ok(out)
}

fn missing_data_error(dir: &Path) -> Error {
    Error::Data(format!(
        "MNIST files not found in {}; expected {} (each optionally .gz). \
         Point --data-dir or MNIST_DATA_DIR at the dataset, or run tools/fetch_mnist.sh",
        dir.display(),
        MNIST_FILE_NAMES.join(", "),
    ))
}

/// Raw train (60k) and test (10k) image collections.
pub fn load_mnist_raw<E: Element>(
    dir: &Path,
) -> Result<(Vec<LabeledImage<E>>, Vec<LabeledImage<E>>)> {
    let train = load_pair(dir, MNIST_FILE_NAMES[0], MNIST_FILE_NAMES[1], "train")?;
    let test = load_pair(dir, MNIST_FILE_NAMES[2], MNIST_FILE_NAMES[3], "test")?;
    Ok((train, test))
}

/// The standard splits: seeded 45k/5k carved from the 60k train set, plus the
/// 10k test set.
pub fn load_mnist_splits<E: Element>(
    dir: &Path,
    seed: u64,
) -> Result<(DatasetSplit<E>, DatasetSplit<E>, DatasetSplit<E>)> {
    let (train_raw, test_raw) = load_mnist_raw(dir)?;
    let (train, val) = split_train_val(train_raw, 45_000, 5_000, seed)?;
    let val = val.expect("val_count > 0");
    let test = DatasetSplit::new("test", test_raw)?;
    Ok((train, val, test))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fake_images(n: usize) -> Vec<LabeledImage<f32>> {
        (0..n)
            .map(|i| LabeledImage {
                pixels: Tensor::filled(&[1, 4, 4], i as f32 / n as f32),
                label: (i % 10) as u8,
            })
            .collect()
    }

    #[test]
    fn split_sizes_honored_and_disjoint() {
        let (train, val) = split_train_val(fake_images(100), 70, 20, 9).unwrap();
        let val = val.unwrap();
        assert_eq!(train.len(), 70);
        assert_eq!(val.len(), 20);
        // Pixel constants identify source images; check disjointness.
        let key = |img: &LabeledImage<f32>| (img.pixels.data()[0] * 1e6) as i64;
        let mut seen: std::collections::HashSet<i64> = std::collections::HashSet::new();
        for img in train.images().iter().chain(val.images()) {
            assert!(seen.insert(key(img)), "image in both splits");
        }
    }

    #[test]
    fn split_is_seed_deterministic() {
        let (t1, v1) = split_train_val(fake_images(50), 30, 10, 4).unwrap();
        let (t2, v2) = split_train_val(fake_images(50), 30, 10, 4).unwrap();
        for (a, b) in t1.images().iter().zip(t2.images()) {
            assert_eq!(a.pixels.data(), b.pixels.data());
        }
        for (a, b) in v1.unwrap().images().iter().zip(v2.unwrap().images()) {
            assert_eq!(a.pixels.data(), b.pixels.data());
        }
        let (t3, _) = split_train_val(fake_images(50), 30, 10, 5).unwrap();
        let same = t1
            .images()
            .iter()
            .zip(t3.images())
            .filter(|(a, b)| a.pixels.data() == b.pixels.data())
            .count();
        assert!(same < t1.len(), "different seeds gave identical order");
    }

    #[test]
    fn zero_val_count_gives_no_validation_split() {
        let (train, val) = split_train_val(fake_images(20), 20, 0, 1).unwrap();
        assert_eq!(train.len(), 20);
        assert!(val.is_none());
    }

    #[test]
    fn oversized_request_rejected() {
        assert!(split_train_val(fake_images(10), 9, 2, 1).is_err());
    }

    #[test]
    fn gather_builds_batches_in_index_order() {
        let split = DatasetSplit::new("t", fake_images(10)).unwrap();
        let (batch, labels) = split.gather(&[3, 1, 7]).unwrap();
        assert_eq!(batch.shape(), &[3, 1, 4, 4]);
        assert_eq!(labels, vec![3, 1, 7]);
        assert_eq!(batch.data()[0], 0.3);
        assert_eq!(batch.data()[16], 0.1);
        assert!(split.gather(&[10]).is_err());
    }

    #[test]
    fn split_rejects_mixed_geometry_and_bad_labels() {
        let mut imgs = fake_images(3);
        imgs.push(LabeledImage { pixels: Tensor::zeros(&[1, 5, 4]), label: 0 });
        assert!(DatasetSplit::new("t", imgs).is_err());
        let mut imgs = fake_images(3);
        imgs[1].label = 10;
        assert!(DatasetSplit::new("t", imgs).is_err());
        assert!(DatasetSplit::<f32>::new("t", Vec::new()).is_err());
    }
}
