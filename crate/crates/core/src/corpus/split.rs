use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::artifact::ArtifactHeader;
use crate::error::{Error, Result};

pub const DEFAULT_RATIOS: [f64; 3] = [0.70, 0.15, 0.15];
pub const SPLIT_SCHEMA: &str = "irvuln.split";
pub const SPLIT_VERSION: u32 = 1;

/// Train/test/validation partition. The validation part is held out for the
/// final out-of-sample evaluation; the test part drives training callbacks.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub validation: Vec<usize>,
    pub ratios: [f64; 3],
    pub seed: u64,
}

/// Stratified, seeded split: each class is shuffled independently and cut at
/// the rounded ratio boundaries, so every part holds `n_c × ratio ± 1` of it.
pub fn split_dataset(labels: &[usize], ratios: [f64; 3], seed: u64) -> Result<DatasetSplit> {
    if labels.len() < 3 {
        return Err(Error::InvalidArgument(format!("need at least 3 samples to split, got {}", labels.len())));
    }
    if ratios.iter().any(|&r| !(0.0..=1.0).contains(&r)) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!("split ratios {ratios:?} must be in [0, 1] and sum to 1")));
    }
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        by_class.entry(l).or_default().push(i);
    }
    if let Some((&label, members)) = by_class.iter().find(|(_, m)| m.len() < 3) {
        return Err(Error::ClassTooSmall { label, count: members.len() });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut test, mut validation) = (Vec::new(), Vec::new(), Vec::new());
    for members in by_class.values_mut() {
        members.shuffle(&mut rng);
        let n = members.len() as f64;
        let n_train = (n * ratios[0]).round() as usize;
        let n_test = ((n * ratios[1]).round() as usize).min(members.len() - n_train);
        train.extend_from_slice(&members[..n_train]);
        test.extend_from_slice(&members[n_train..n_train + n_test]);
        validation.extend_from_slice(&members[n_train + n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    validation.sort_unstable();
    Ok(DatasetSplit { train, test, validation, ratios, seed })
}

impl DatasetSplit {
    pub fn parts(&self) -> [(&'static str, &[usize]); 3] {
        [("train", &self.train), ("test", &self.test), ("validation", &self.validation)]
    }

    /// Header line, a `seed … ratios …` line, then one line per part: `<name> <idx>…`.
    pub fn write_to(&self, out: &mut impl Write, config_hash: &str) -> Result<()> {
        ArtifactHeader::new(SPLIT_SCHEMA, SPLIT_VERSION, config_hash).write_to(out)?;
        writeln!(out, "seed {} ratios {} {} {}", self.seed, self.ratios[0], self.ratios[1], self.ratios[2])?;
        for (name, idx) in self.parts() {
            let mut line = name.to_string();
            for i in idx {
                let _ = write!(line, " {i}");
            }
            writeln!(out, "{line}")?;
        }
        Ok(())
    }

    pub fn read_from(input: &mut impl BufRead, path: &Path) -> Result<(ArtifactHeader, Self)> {
        let header = ArtifactHeader::read_from(input, path, SPLIT_SCHEMA, SPLIT_VERSION)?;
        let bad = |what: &str| Error::format(path, format!("malformed split file: {what}"));
        let lines: Vec<String> = input.lines().collect::<std::io::Result<_>>()?;
        let [params, parts @ ..] = lines.as_slice() else {
            return Err(bad("missing seed line"));
        };
        let fields: Vec<&str> = params.split_whitespace().collect();
        let (seed, ratios) = match fields.as_slice() {
            ["seed", seed, "ratios", a, b, c] => {
                let r = |s: &str| s.parse::<f64>().map_err(|_| bad("ratio"));
                (seed.parse().map_err(|_| bad("seed"))?, [r(a)?, r(b)?, r(c)?])
            }
            _ => return Err(bad("seed line")),
        };
        let mut lists: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for line in parts.iter().filter(|l| !l.is_empty()) {
            let mut it = line.split_whitespace();
            let name = it.next().ok_or_else(|| bad("empty part line"))?;
            let idx = it.map(|s| s.parse().map_err(|_| bad("index"))).collect::<Result<Vec<usize>>>()?;
            lists.insert(name, idx);
        }
        let mut take = |name: &str| lists.remove(name).ok_or_else(|| bad(name));
        Ok((
            header,
            DatasetSplit {
                train: take("train")?,
                test: take("test")?,
                validation: take("validation")?,
                ratios,
                seed,
            },
        ))
    }
}
