//! Group-annotated image datasets and batch samplers.
//!
//! Every example carries a label `y`, a confounder `c`, an environment id and
//! a group `g = c·|Y| + y`. Images are `3×28×28` with values in `[0, 1]`.

mod cmnist;
mod glyph;
mod group_table;
mod idx;
mod sampler;

pub use cmnist::{cmnist_from_digits, gen_cmnist_style, CmnistSpec, ColorSource};
pub use glyph::{render_digit, GLYPH_SIZE};
pub use group_table::{gen_from_group_table, group_table_splits, EnvTable, GroupRow, GroupTable};
pub use idx::{load_mnist_idx, parse_idx_images, parse_idx_labels, RawDigits};
pub use sampler::{Sampler, SamplingKind};

use crate::error::{Error, Result};
use crate::tensor::NdArray;
use crate::Scalar;

/// Channels, height and width of every generated image.
pub const IMAGE_SHAPE: [usize; 3] = [3, GLYPH_SIZE, GLYPH_SIZE];

/// Mapping between `(confounder, label)` pairs and group ids.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GroupCoding {
    pub n_labels: usize,
    pub n_confounders: usize,
}

impl GroupCoding {
    pub fn n_groups(self) -> usize {
        self.n_labels * self.n_confounders
    }

    pub fn encode(self, confounder: usize, label: usize) -> usize {
        confounder * self.n_labels + label
    }

    /// `(confounder, label)` of a group id.
    pub fn decode(self, group: usize) -> (usize, usize) {
        (group / self.n_labels, group % self.n_labels)
    }
}

/// One sample, owned.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub image: NdArray,
    pub label: usize,
    pub confounder: usize,
    pub group: usize,
    pub env: usize,
}

/// A batch gathered from a [`Dataset`].
#[derive(Debug, Clone)]
pub struct Batch {
    /// `[B, C, H, W]`
    pub images: NdArray,
    pub labels: Vec<usize>,
    pub confounders: Vec<usize>,
    pub groups: Vec<usize>,
    pub envs: Vec<usize>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Column-oriented storage of examples sharing one image shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    image_shape: [usize; 3],
    coding: GroupCoding,
    images: Vec<Scalar>,
    labels: Vec<usize>,
    confounders: Vec<usize>,
    envs: Vec<usize>,
}

impl Dataset {
    pub fn new(image_shape: [usize; 3], coding: GroupCoding) -> Self {
        Dataset {
            image_shape,
            coding,
            images: Vec::new(),
            labels: Vec::new(),
            confounders: Vec::new(),
            envs: Vec::new(),
        }
    }

    pub fn push(
        &mut self,
        image: &[Scalar],
        label: usize,
        confounder: usize,
        env: usize,
    ) -> Result<()> {
        let pixels: usize = self.image_shape.iter().product();
        if image.len() != pixels {
            return Err(Error::data(format!(
                "image has {} values, expected {pixels}",
                image.len()
            )));
        }
        if label >= self.coding.n_labels || confounder >= self.coding.n_confounders {
            return Err(Error::data(format!(
                "label {label} / confounder {confounder} outside {}x{}",
                self.coding.n_labels, self.coding.n_confounders
            )));
        }
        self.images.extend_from_slice(image);
        self.labels.push(label);
        self.confounders.push(confounder);
        self.envs.push(env);
        Ok(())
    }

    /// Append every example of `other`, which must share shape and coding.
    pub fn extend(&mut self, other: &Dataset) -> Result<()> {
        if other.image_shape != self.image_shape || other.coding != self.coding {
            return Err(Error::data(
                "cannot concatenate datasets with different shapes or groups",
            ));
        }
        self.images.extend_from_slice(&other.images);
        self.labels.extend_from_slice(&other.labels);
        self.confounders.extend_from_slice(&other.confounders);
        self.envs.extend_from_slice(&other.envs);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image_shape(&self) -> [usize; 3] {
        self.image_shape
    }

    pub fn coding(&self) -> GroupCoding {
        self.coding
    }

    pub fn n_groups(&self) -> usize {
        self.coding.n_groups()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn confounders(&self) -> &[usize] {
        &self.confounders
    }

    pub fn envs(&self) -> &[usize] {
        &self.envs
    }

    pub fn group(&self, i: usize) -> usize {
        self.coding.encode(self.confounders[i], self.labels[i])
    }

    pub fn groups(&self) -> Vec<usize> {
        (0..self.len()).map(|i| self.group(i)).collect()
    }

    /// Number of examples in each group.
    pub fn group_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_groups()];
        for i in 0..self.len() {
            counts[self.group(i)] += 1;
        }
        counts
    }

    pub fn image(&self, i: usize) -> &[Scalar] {
        let p: usize = self.image_shape.iter().product();
        &self.images[i * p..(i + 1) * p]
    }

    pub fn example(&self, i: usize) -> Example {
        let [c, h, w] = self.image_shape;
        Example {
            image: NdArray::new(vec![c, h, w], self.image(i).to_vec())
                .expect("stored with this shape"),
            label: self.labels[i],
            confounder: self.confounders[i],
            group: self.group(i),
            env: self.envs[i],
        }
    }

    pub fn batch(&self, indices: &[usize]) -> Batch {
        let [c, h, w] = self.image_shape;
        let mut data = Vec::with_capacity(indices.len() * c * h * w);
        for &i in indices {
            data.extend_from_slice(self.image(i));
        }
        Batch {
            images: NdArray::new(vec![indices.len(), c, h, w], data).expect("non-empty batch"),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            confounders: indices.iter().map(|&i| self.confounders[i]).collect(),
            groups: indices.iter().map(|&i| self.group(i)).collect(),
            envs: indices.iter().map(|&i| self.envs[i]).collect(),
        }
    }

    /// Consecutive batches covering the dataset in order, for evaluation.
    pub fn chunks(&self, size: usize) -> impl Iterator<Item = Batch> + '_ {
        let size = size.max(1);
        (0..self.len()).step_by(size).map(move |start| {
            let idx: Vec<usize> = (start..(start + size).min(self.len())).collect();
            self.batch(&idx)
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn group_coding_round_trips() {
        let coding = GroupCoding {
            n_labels: 3,
            n_confounders: 4,
        };
        for c in 0..4 {
            for y in 0..3 {
                let g = coding.encode(c, y);
                assert!(g < coding.n_groups());
                assert_eq!(coding.decode(g), (c, y));
            }
        }
    }

    #[test]
    fn push_validates_and_batches_copy_rows() {
        let coding = GroupCoding {
            n_labels: 2,
            n_confounders: 2,
        };
        let mut d = Dataset::new([1, 1, 2], coding);
        d.push(&[0.1, 0.2], 1, 0, 0).unwrap();
        d.push(&[0.3, 0.4], 0, 1, 1).unwrap();
        assert!(d.push(&[0.0], 0, 0, 0).is_err());
        assert!(d.push(&[0.0, 0.0], 2, 0, 0).is_err());
        let b = d.batch(&[1, 0, 1]);
        assert_eq!(b.images.shape(), &[3, 1, 1, 2]);
        assert_eq!(b.images.data(), &[0.3, 0.4, 0.1, 0.2, 0.3, 0.4]);
        assert_eq!(b.groups, vec![2, 1, 2]);
        assert_eq!(d.group_counts(), vec![0, 1, 1, 0]);
        assert_eq!(d.chunks(1).count(), 2);
    }
}
