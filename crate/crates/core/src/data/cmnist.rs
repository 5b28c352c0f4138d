//! Colored-digit datasets with an environment-dependent color/label correlation.

use rand::Rng as _;

use super::glyph::{render_digit, GLYPH_SIZE};
use super::idx::RawDigits;
use super::{Dataset, GroupCoding, IMAGE_SHAPE};
use crate::error::{Error, Result};
use crate::rng::{self, Rng, Stream};
use crate::Scalar;

const CODING: GroupCoding = GroupCoding {
    n_labels: 2,
    n_confounders: 2,
};

/// Which label the color follows before the environment coin flip.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ColorSource {
    /// The observed (possibly flipped) label, so `P(c = y) = e`.
    #[default]
    NoisyLabel,
    /// The digit's clean label, so `P(c = y) = e(1−p) + (1−e)p`.
    BaseLabel,
}

impl ColorSource {
    pub fn name(self) -> &'static str {
        match self {
            ColorSource::NoisyLabel => "noisy-label",
            ColorSource::BaseLabel => "base-label",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "noisy-label" => Ok(ColorSource::NoisyLabel),
            "base-label" => Ok(ColorSource::BaseLabel),
            _ => Err(Error::config(format!(
                "unknown color source '{s}', expected noisy-label or base-label"
            ))),
        }
    }
}

/// Train, validation and test splits of a colored-digit task.
///
/// Label `y` is `digit ≥ 5`, flipped with probability `flip`. Confounder `c`
/// is the color: 0 tints channel 0 (red), 1 tints channel 1 (green). In an
/// environment with correlation `e` the color agrees with its source label
/// with probability `e`.
#[derive(Debug, Clone, PartialEq)]
pub struct CmnistSpec {
    pub train_envs: Vec<Scalar>,
    pub test_env: Scalar,
    pub flip: Scalar,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub color_source: ColorSource,
    pub seed: u64,
}

impl Default for CmnistSpec {
    fn default() -> Self {
        CmnistSpec {
            train_envs: vec![0.9, 0.8],
            test_env: 0.1,
            flip: 0.25,
            n_train: 10_000,
            n_val: 2_000,
            n_test: 2_000,
            color_source: ColorSource::NoisyLabel,
            seed: 0,
        }
    }
}

impl CmnistSpec {
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        let prob = |v: Scalar| (0.0..=1.0).contains(&v);
        if self.train_envs.is_empty() {
            errs.push("at least one training environment is required".into());
        }
        for &e in &self.train_envs {
            if !prob(e) {
                errs.push(format!("environment correlation {e} outside [0, 1]"));
            }
        }
        if !prob(self.test_env) {
            errs.push(format!("test correlation {} outside [0, 1]", self.test_env));
        }
        if !prob(self.flip) {
            errs.push(format!("label flip {} outside [0, 1]", self.flip));
        }
        for (name, n) in [
            ("train", self.n_train),
            ("val", self.n_val),
            ("test", self.n_test),
        ] {
            if n == 0 {
                errs.push(format!("{name} size must be at least 1"));
            }
        }
        errs
    }

    /// Training split, divided evenly across the training environments
    /// (environment ids `0..k`).
    pub fn train(&self) -> Dataset {
        self.split(self.n_train, &self.train_envs, 0, Stream::TrainData)
    }

    /// Validation split drawn from the training environments.
    pub fn val(&self) -> Dataset {
        self.split(self.n_val, &self.train_envs, 0, Stream::ValData)
    }

    /// Test split; its environment id is `k`, one past the training ones.
    pub fn test(&self) -> Dataset {
        self.split(
            self.n_test,
            &[self.test_env],
            self.train_envs.len(),
            Stream::TestData,
        )
    }

    fn split(&self, n: usize, envs: &[Scalar], env_base: usize, tag: Stream) -> Dataset {
        let mut d = Dataset::new(IMAGE_SHAPE, CODING);
        for i in 0..n {
            let k = i * envs.len() / n;
            let mut rng = rng::per_example(self.seed, tag as u64, i as u64);
            let digit = rng.gen_range(0..10);
            let (y, c) = draw_pair(&mut rng, digit, envs[k], self.flip, self.color_source);
            let glyph = render_digit(digit, &mut rng);
            d.push(&colorize(&glyph, c), y, c, env_base + k)
                .expect("generated example is valid");
        }
        d
    }
}

/// `n` examples from one environment with correlation `e` and label noise
/// `flip`, all with environment id 0.
pub fn gen_cmnist_style(n: usize, e: Scalar, flip: Scalar, seed: u64) -> Dataset {
    CmnistSpec {
        train_envs: vec![e],
        flip,
        n_train: n,
        seed,
        ..CmnistSpec::default()
    }
    .train()
}

/// Colorize real digits with the same recipe. Example `i` uses the stream of
/// index `i`, so results do not depend on how many digits precede it.
pub fn cmnist_from_digits(
    digits: &RawDigits,
    e: Scalar,
    flip: Scalar,
    source: ColorSource,
    env: usize,
    seed: u64,
) -> Result<Dataset> {
    if digits.rows != GLYPH_SIZE || digits.cols != GLYPH_SIZE {
        return Err(Error::data(format!(
            "digits are {}x{}, expected {GLYPH_SIZE}x{GLYPH_SIZE}",
            digits.rows, digits.cols
        )));
    }
    let mut d = Dataset::new(IMAGE_SHAPE, CODING);
    for i in 0..digits.len() {
        let mut rng = rng::per_example(seed, Stream::TrainData as u64, i as u64);
        let digit = digits.labels[i] as usize;
        if digit > 9 {
            return Err(Error::data(format!(
                "digit label {digit} at index {i} is not 0-9"
            )));
        }
        let (y, c) = draw_pair(&mut rng, digit, e, flip, source);
        d.push(&colorize(digits.image(i), c), y, c, env)?;
    }
    Ok(d)
}

fn draw_pair(
    rng: &mut Rng,
    digit: usize,
    e: Scalar,
    flip: Scalar,
    source: ColorSource,
) -> (usize, usize) {
    let base = usize::from(digit >= 5);
    let y = if rng.gen::<Scalar>() < flip {
        1 - base
    } else {
        base
    };
    let src = match source {
        ColorSource::NoisyLabel => y,
        ColorSource::BaseLabel => base,
    };
    let c = if rng.gen::<Scalar>() < e {
        src
    } else {
        1 - src
    };
    (y, c)
}

fn colorize(gray: &[Scalar], color: usize) -> Vec<Scalar> {
    let p = gray.len();
    let mut img = vec![0.0; 3 * p];
    img[color * p..(color + 1) * p].copy_from_slice(gray);
    img
}

#[cfg(test)]
mod tests {
    use super::*;

    fn agreement(d: &Dataset) -> Scalar {
        let same = d
            .labels()
            .iter()
            .zip(d.confounders())
            .filter(|(y, c)| y == c)
            .count();
        same as Scalar / d.len() as Scalar
    }

    #[test]
    fn extreme_correlations() {
        assert_eq!(agreement(&gen_cmnist_style(300, 1.0, 0.0, 3)), 1.0);
        assert_eq!(agreement(&gen_cmnist_style(300, 0.0, 0.0, 3)), 0.0);
    }

    #[test]
    fn color_lives_in_its_channel() {
        let d = gen_cmnist_style(20, 0.5, 0.25, 9);
        let p = GLYPH_SIZE * GLYPH_SIZE;
        for i in 0..d.len() {
            let img = d.image(i);
            let c = d.confounders()[i];
            assert!(img[c * p..(c + 1) * p].iter().sum::<Scalar>() > 10.0);
            for other in (0..3).filter(|&k| k != c) {
                assert!(img[other * p..(other + 1) * p].iter().all(|&v| v == 0.0));
            }
            assert!(img.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn splits_are_deterministic_and_environment_tagged() {
        let spec = CmnistSpec {
            n_train: 40,
            n_val: 10,
            n_test: 10,
            seed: 5,
            ..CmnistSpec::default()
        };
        assert_eq!(spec.train(), spec.train());
        let tr = spec.train();
        assert_eq!(tr.envs().iter().filter(|&&e| e == 0).count(), 20);
        assert_eq!(tr.envs().iter().filter(|&&e| e == 1).count(), 20);
        assert!(spec.test().envs().iter().all(|&e| e == 2));
        assert_ne!(spec.train().image(0), spec.val().image(0));
    }

    #[test]
    fn validation_collects_every_problem() {
        let spec = CmnistSpec {
            train_envs: vec![1.5],
            flip: -0.1,
            n_test: 0,
            ..CmnistSpec::default()
        };
        assert_eq!(spec.validate().len(), 3);
    }
}
