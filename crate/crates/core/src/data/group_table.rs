//! Environments defined by per-group proportions, with textured synthetic images.

use std::collections::HashMap;
use std::io::Read;
use std::path::Path;

use rand::Rng as _;

use super::glyph::{render_digit, GLYPH_SIZE};
use super::{Dataset, GroupCoding, IMAGE_SHAPE};
use crate::error::{Error, Result};
use crate::rng::{self, Rng, Stream};
use crate::Scalar;

/// Tables whose environments sum to within this of one are accepted and
/// renormalized; published tables are rounded to two decimals of a percent.
pub const SUM_TOLERANCE: Scalar = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct GroupRow {
    pub confounder: usize,
    pub label: usize,
    pub proportion: Scalar,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvTable {
    pub name: String,
    pub rows: Vec<GroupRow>,
}

/// Group proportions per environment. Names are indexed in order of first
/// appearance.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupTable {
    pub confounder_names: Vec<String>,
    pub label_names: Vec<String>,
    pub envs: Vec<EnvTable>,
}

impl GroupTable {
    /// Build from `(env, confounder, label, proportion)` records.
    pub fn from_records<S: AsRef<str>>(records: &[(S, S, S, Scalar)]) -> Result<Self> {
        let mut t = GroupTable {
            confounder_names: Vec::new(),
            label_names: Vec::new(),
            envs: Vec::new(),
        };
        let index = |names: &mut Vec<String>, s: &str| match names.iter().position(|n| n == s) {
            Some(i) => i,
            None => {
                names.push(s.to_string());
                names.len() - 1
            }
        };
        let mut env_index: HashMap<String, usize> = HashMap::new();
        for (env, conf, label, p) in records {
            let confounder = index(&mut t.confounder_names, conf.as_ref());
            let label = index(&mut t.label_names, label.as_ref());
            let k = *env_index
                .entry(env.as_ref().to_string())
                .or_insert_with(|| {
                    t.envs.push(EnvTable {
                        name: env.as_ref().to_string(),
                        rows: Vec::new(),
                    });
                    t.envs.len() - 1
                });
            t.envs[k].rows.push(GroupRow {
                confounder,
                label,
                proportion: *p,
            });
        }
        t.normalize()?;
        Ok(t)
    }

    /// Parse `env,confounder,label,proportion` CSV with a header row.
    /// Proportions are fractions.
    pub fn from_csv(reader: impl Read) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        let header = rdr.headers()?.clone();
        let want = ["env", "confounder", "label", "proportion"];
        if header.iter().collect::<Vec<_>>() != want {
            return Err(Error::data(format!(
                "group table header must be {}, got {}",
                want.join(","),
                header.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut records = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let p: Scalar = rec[3].parse().map_err(|_| {
                Error::data(format!("row {}: bad proportion '{}'", line + 2, &rec[3]))
            })?;
            records.push((
                rec[0].to_string(),
                rec[1].to_string(),
                rec[2].to_string(),
                p,
            ));
        }
        if records.is_empty() {
            return Err(Error::data("group table has no rows"));
        }
        Self::from_records(&records)
    }

    pub fn from_csv_path(path: &Path) -> Result<Self> {
        Self::from_csv(std::fs::File::open(path)?)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("env,confounder,label,proportion\n");
        for env in &self.envs {
            for r in &env.rows {
                out.push_str(&format!(
                    "{},{},{},{}\n",
                    env.name,
                    self.confounder_names[r.confounder],
                    self.label_names[r.label],
                    r.proportion
                ));
            }
        }
        out
    }

    /// Two environments, land-centric and balanced, for bird type by background.
    pub fn waterbirds() -> Self {
        let rows = [
            ("land-centric", "land", "waterbird", 0.0826),
            ("land-centric", "land", "landbird", 0.6180),
            ("land-centric", "water", "waterbird", 0.1158),
            ("land-centric", "water", "landbird", 0.1837),
            ("balanced", "land", "waterbird", 0.0598),
            ("balanced", "land", "landbird", 0.4477),
            ("balanced", "water", "waterbird", 0.1905),
            ("balanced", "water", "landbird", 0.3020),
        ];
        Self::from_records(&rows).expect("built-in table is valid")
    }

    /// Two environments, balanced and fewer males, for hair color by sex.
    pub fn celeba() -> Self {
        let rows = [
            ("balanced", "male", "blonde", 0.0108),
            ("balanced", "male", "non-blonde", 0.4694),
            ("balanced", "female", "blonde", 0.1020),
            ("balanced", "female", "non-blonde", 0.4177),
            ("less-males", "male", "blonde", 0.0066),
            ("less-males", "male", "non-blonde", 0.3519),
            ("less-males", "female", "blonde", 0.1736),
            ("less-males", "female", "non-blonde", 0.4679),
        ];
        Self::from_records(&rows).expect("built-in table is valid")
    }

    pub fn builtin(name: &str) -> Option<Self> {
        match name {
            "waterbirds" => Some(Self::waterbirds()),
            "celeba" => Some(Self::celeba()),
            _ => None,
        }
    }

    pub fn coding(&self) -> GroupCoding {
        GroupCoding {
            n_labels: self.label_names.len(),
            n_confounders: self.confounder_names.len(),
        }
    }

    /// An environment giving every `(confounder, label)` pair equal weight.
    pub fn balanced_env(&self) -> EnvTable {
        let coding = self.coding();
        let p = 1.0 / coding.n_groups() as Scalar;
        EnvTable {
            name: "uniform".into(),
            rows: (0..coding.n_groups())
                .map(|g| {
                    let (confounder, label) = coding.decode(g);
                    GroupRow {
                        confounder,
                        label,
                        proportion: p,
                    }
                })
                .collect(),
        }
    }

    fn normalize(&mut self) -> Result<()> {
        if self.label_names.len() > 10 {
            return Err(Error::data("at most 10 labels are supported"));
        }
        for env in &mut self.envs {
            if let Some(r) = env
                .rows
                .iter()
                .find(|r| !r.proportion.is_finite() || r.proportion < 0.0)
            {
                return Err(Error::data(format!(
                    "environment '{}': proportion {} is not a non-negative number",
                    env.name, r.proportion
                )));
            }
            let total: Scalar = env.rows.iter().map(|r| r.proportion).sum();
            if (total - 1.0).abs() > SUM_TOLERANCE {
                return Err(Error::data(format!(
                    "environment '{}': proportions sum to {total}, expected 1",
                    env.name
                )));
            }
            for r in &mut env.rows {
                r.proportion /= total;
            }
        }
        Ok(())
    }

    /// `n` examples from one environment; the example at position `i` uses its
    /// own random stream under `(seed, tag)`.
    pub fn generate_env(
        &self,
        env: &EnvTable,
        env_id: usize,
        n: usize,
        seed: u64,
        tag: u64,
    ) -> Dataset {
        let coding = self.coding();
        let mut d = Dataset::new(IMAGE_SHAPE, coding);
        for i in 0..n {
            let mut rng = rng::per_example(seed, tag, ((env_id as u64) << 32) | i as u64);
            let row = draw_row(&env.rows, rng.gen());
            let img = synthesize(row.label, row.confounder, coding.n_labels, &mut rng);
            d.push(&img, row.label, row.confounder, env_id)
                .expect("generated example is valid");
        }
        d
    }
}

/// `n_per_env` examples from every environment of the table, environment ids
/// following table order.
pub fn gen_from_group_table(table: &GroupTable, n_per_env: usize, seed: u64) -> Dataset {
    let mut d = Dataset::new(IMAGE_SHAPE, table.coding());
    for (k, env) in table.envs.iter().enumerate() {
        let part = table.generate_env(env, k, n_per_env, seed, Stream::TrainData as u64);
        d.extend(&part).expect("same coding");
    }
    d
}

/// Train, validation and test splits of a group table. Train and validation
/// divide their sizes evenly across the table's environments (ids `0..k`);
/// the test split draws every group equally and has environment id `k`.
pub fn group_table_splits(
    table: &GroupTable,
    n_train: usize,
    n_val: usize,
    n_test: usize,
    seed: u64,
) -> (Dataset, Dataset, Dataset) {
    let held_in = |n: usize, tag: Stream| {
        let k = table.envs.len();
        let mut d = Dataset::new(IMAGE_SHAPE, table.coding());
        for (i, env) in table.envs.iter().enumerate() {
            let part = table.generate_env(env, i, (i + 1) * n / k - i * n / k, seed, tag as u64);
            d.extend(&part).expect("same coding");
        }
        d
    };
    let test = table.generate_env(
        &table.balanced_env(),
        table.envs.len(),
        n_test,
        seed,
        Stream::TestData as u64,
    );
    (
        held_in(n_train, Stream::TrainData),
        held_in(n_val, Stream::ValData),
        test,
    )
}

fn draw_row(rows: &[GroupRow], u: Scalar) -> &GroupRow {
    let mut acc = 0.0;
    for r in rows {
        acc += r.proportion;
        if u < acc {
            return r;
        }
    }
    // rounding left u above the running total: take the last row with mass
    rows.iter()
        .rev()
        .find(|r| r.proportion > 0.0)
        .unwrap_or(&rows[rows.len() - 1])
}

/// The label picks the digit family (`digit ≡ label mod |Y|`); the confounder
/// picks the background texture.
fn synthesize(label: usize, confounder: usize, n_labels: usize, rng: &mut Rng) -> Vec<Scalar> {
    let choices: Vec<usize> = (label..10).step_by(n_labels).collect();
    let digit = choices[rng.gen_range(0..choices.len())];
    let glyph = render_digit(digit, rng);
    let n = GLYPH_SIZE;
    let period = 4 + 2 * (confounder / 2);
    let phase = rng.gen_range(0..period);
    let amp: Scalar = rng.gen_range(0.3..0.45);
    let mut img = vec![0.0; 3 * n * n];
    for y in 0..n {
        for x in 0..n {
            let on = if confounder.is_multiple_of(2) {
                (y + phase) % period < period / 2
            } else {
                ((x + phase) / (period / 2) + (y + phase) / (period / 2)).is_multiple_of(2)
            };
            let bg = if on { amp } else { 0.0 };
            let ink = glyph[y * n + x];
            // white glyph over a blue texture
            img[y * n + x] = ink;
            img[n * n + y * n + x] = ink;
            img[2 * n * n + y * n + x] = ink.max(bg);
        }
    }
    img
}
