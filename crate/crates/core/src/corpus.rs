//! Interaction datasets: loading, dense ID remapping, splits and negative sampling.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use log::{info, warn};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub type Pair = (usize, usize);

/// Users, items and the three interaction splits, all in dense 0-based indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InteractionSet {
    pub num_users: usize,
    pub num_items: usize,
    pub train: Vec<Pair>,
    pub validation: Vec<Pair>,
    pub test: Vec<Pair>,
}

impl InteractionSet {
    /// Validates index ranges, per-split uniqueness and split disjointness.
    pub fn new(
        num_users: usize,
        num_items: usize,
        train: Vec<Pair>,
        validation: Vec<Pair>,
        test: Vec<Pair>,
    ) -> Result<Self> {
        let mut seen: HashMap<Pair, &'static str> = HashMap::new();
        for (name, split) in [("train", &train), ("validation", &validation), ("test", &test)] {
            for &(u, i) in split.iter() {
                if u >= num_users || i >= num_items {
                    return Err(Error::InvalidArgument(format!(
                        "{name} pair ({u}, {i}) out of range for {num_users} users x {num_items} items"
                    )));
                }
                if let Some(prev) = seen.insert((u, i), name) {
                    return Err(Error::InvalidArgument(if prev == name {
                        format!("duplicate {name} pair ({u}, {i})")
                    } else {
                        format!("pair ({u}, {i}) appears in both {prev} and {name}")
                    }));
                }
            }
        }
        Ok(InteractionSet {
            num_users,
            num_items,
            train,
            validation,
            test,
        })
    }

    /// N = |U| + |I|
    pub fn num_entities(&self) -> usize {
        self.num_users + self.num_items
    }

    /// Entity-node index of an item.
    pub fn item_node(&self, item: usize) -> usize {
        self.num_users + item
    }

    pub fn num_interactions(&self) -> usize {
        self.train.len() + self.validation.len() + self.test.len()
    }

    /// Per-user sorted item lists for a split.
    pub fn items_by_user(&self, split: &[Pair]) -> Vec<Vec<usize>> {
        let mut by_user = vec![Vec::new(); self.num_users];
        for &(u, i) in split {
            by_user[u].push(i);
        }
        for items in &mut by_user {
            items.sort_unstable();
        }
        by_user
    }

    pub fn train_items_by_user(&self) -> Vec<Vec<usize>> {
        self.items_by_user(&self.train)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TrainingTriplet {
    pub user: usize,
    pub pos_item: usize,
    pub neg_item: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetStats {
    pub num_users: usize,
    pub num_items: usize,
    pub num_interactions: usize,
    pub density: f64,
}

impl fmt::Display for DatasetStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "users={} items={} interactions={} density={:.4}%",
            self.num_users,
            self.num_items,
            self.num_interactions,
            self.density * 100.0
        )
    }
}

/// Interactions counted over all splits.
pub fn dataset_stats(set: &InteractionSet) -> DatasetStats {
    let num_interactions = set.num_interactions();
    let cells = set.num_users as f64 * set.num_items as f64;
    DatasetStats {
        num_users: set.num_users,
        num_items: set.num_items,
        num_interactions,
        density: if cells > 0.0 { num_interactions as f64 / cells } else { 0.0 },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FileFormat {
    /// `user item` per line.
    PairPerLine,
    /// `user item item ...` per line.
    AdjacencyList,
}

impl FromStr for FileFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pair" | "pairs" | "pair-per-line" => Ok(FileFormat::PairPerLine),
            "adj" | "adjacency" | "adjacency-list" => Ok(FileFormat::AdjacencyList),
            other => Err(Error::InvalidArgument(format!(
                "unknown format `{other}` (expected pair-per-line or adjacency-list)"
            ))),
        }
    }
}

/// Bijection between observed raw IDs and `0..len`, assigned in ascending raw order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IdMap {
    to_dense: HashMap<u64, usize>,
    to_raw: Vec<u64>,
}

impl IdMap {
    pub fn from_raw_ids(ids: impl IntoIterator<Item = u64>) -> Self {
        let sorted: BTreeSet<u64> = ids.into_iter().collect();
        let to_raw: Vec<u64> = sorted.into_iter().collect();
        let to_dense = to_raw.iter().enumerate().map(|(i, &r)| (r, i)).collect();
        IdMap { to_dense, to_raw }
    }

    /// Identity map over `0..n`.
    pub fn identity(n: usize) -> Self {
        Self::from_raw_ids((0..n as u64).collect::<Vec<_>>())
    }

    pub fn len(&self) -> usize {
        self.to_raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.to_raw.is_empty()
    }

    pub fn dense(&self, raw: u64) -> Option<usize> {
        self.to_dense.get(&raw).copied()
    }

    pub fn raw(&self, dense: usize) -> u64 {
        self.to_raw[dense]
    }

    /// `raw_id<TAB>dense_index` per line.
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut out = Vec::new();
        for (dense, raw) in self.to_raw.iter().enumerate() {
            writeln!(out, "{raw}\t{dense}").expect("write to Vec");
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut to_raw = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let parse_err = |message: &str| Error::Parse {
                path: path.to_path_buf(),
                line: lineno + 1,
                message: message.to_string(),
            };
            let mut fields = line.split('\t');
            let raw: u64 = fields
                .next()
                .and_then(|f| f.trim().parse().ok())
                .ok_or_else(|| parse_err("expected raw_id<TAB>dense_index"))?;
            let dense: usize = fields
                .next()
                .and_then(|f| f.trim().parse().ok())
                .ok_or_else(|| parse_err("expected raw_id<TAB>dense_index"))?;
            if dense != to_raw.len() {
                return Err(parse_err("dense indices must be listed in order 0, 1, 2, ..."));
            }
            to_raw.push(raw);
        }
        let to_dense: HashMap<u64, usize> = to_raw.iter().enumerate().map(|(i, &r)| (r, i)).collect();
        if to_dense.len() != to_raw.len() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: 0,
                message: "raw ids are not unique".into(),
            });
        }
        Ok(IdMap { to_dense, to_raw })
    }
}

/// An interaction set together with the ID maps that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub set: InteractionSet,
    pub users: IdMap,
    pub items: IdMap,
}

pub const TRAIN_FILE: &str = "train.txt";
pub const VALID_FILE: &str = "valid.txt";
pub const TEST_FILE: &str = "test.txt";
pub const USER_MAP_FILE: &str = "user_ids.tsv";
pub const ITEM_MAP_FILE: &str = "item_ids.tsv";
pub const META_FILE: &str = "dataset.meta";

impl Dataset {
    /// Writes the dense splits, both ID maps and a small metadata file into `dir`.
    pub fn save_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_pairs(&dir.join(TRAIN_FILE), &self.set.train)?;
        write_pairs(&dir.join(VALID_FILE), &self.set.validation)?;
        write_pairs(&dir.join(TEST_FILE), &self.set.test)?;
        self.users.write(&dir.join(USER_MAP_FILE))?;
        self.items.write(&dir.join(ITEM_MAP_FILE))?;
        let meta = format!(
            "num_users = {}\nnum_items = {}\n",
            self.set.num_users, self.set.num_items
        );
        let path = dir.join(META_FILE);
        fs::write(&path, meta).map_err(|e| Error::io(&path, e))
    }

    /// Loads a directory written by [`Dataset::save_dir`].
    pub fn load_dir(dir: &Path) -> Result<Self> {
        let meta_path = dir.join(META_FILE);
        let meta = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
        let mut num_users = None;
        let mut num_items = None;
        for (lineno, line) in meta.lines().enumerate() {
            let Some((k, v)) = line.split_once('=') else { continue };
            let v: usize = v.trim().parse().map_err(|_| Error::Parse {
                path: meta_path.clone(),
                line: lineno + 1,
                message: format!("expected an integer, got `{}`", v.trim()),
            })?;
            match k.trim() {
                "num_users" => num_users = Some(v),
                "num_items" => num_items = Some(v),
                _ => {}
            }
        }
        let missing = |key: &str| Error::Parse {
            path: meta_path.clone(),
            line: 0,
            message: format!("missing `{key}`"),
        };
        let num_users = num_users.ok_or_else(|| missing("num_users"))?;
        let num_items = num_items.ok_or_else(|| missing("num_items"))?;
        let read_split = |name: &str| -> Result<Vec<Pair>> {
            let path = dir.join(name);
            if !path.exists() {
                return Ok(Vec::new());
            }
            let raw = parse_pairs(&path, FileFormat::PairPerLine)?;
            Ok(raw.into_iter().map(|(u, i)| (u as usize, i as usize)).collect())
        };
        let set = InteractionSet::new(
            num_users,
            num_items,
            read_split(TRAIN_FILE)?,
            read_split(VALID_FILE)?,
            read_split(TEST_FILE)?,
        )?;
        let load_map = |name: &str, n: usize| -> Result<IdMap> {
            let path = dir.join(name);
            if path.exists() {
                IdMap::read(&path)
            } else {
                Ok(IdMap::identity(n))
            }
        };
        let users = load_map(USER_MAP_FILE, num_users)?;
        let items = load_map(ITEM_MAP_FILE, num_items)?;
        if users.len() != num_users || items.len() != num_items {
            return Err(Error::InvalidArgument(format!(
                "ID maps in {} do not match dataset.meta counts",
                dir.display()
            )));
        }
        Ok(Dataset { set, users, items })
    }
}

fn write_pairs(path: &Path, pairs: &[Pair]) -> Result<()> {
    let mut out = Vec::with_capacity(pairs.len() * 10);
    for &(u, i) in pairs {
        writeln!(out, "{u} {i}").expect("write to Vec");
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Parses raw `(user, item)` pairs. Empty lines are skipped; users listed without
/// items in adjacency-list files contribute no pairs.
pub fn parse_pairs(path: &Path, format: FileFormat) -> Result<Vec<(u64, u64)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut pairs = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut ids = Vec::new();
        for tok in line.split_whitespace() {
            let id: u64 = tok.parse().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                line: lineno + 1,
                message: format!("`{tok}` is not a non-negative integer"),
            })?;
            ids.push(id);
        }
        match format {
            FileFormat::PairPerLine => {
                if ids.len() != 2 {
                    return Err(Error::Parse {
                        path: path.to_path_buf(),
                        line: lineno + 1,
                        message: format!("expected `user item`, found {} fields", ids.len()),
                    });
                }
                pairs.push((ids[0], ids[1]));
            }
            FileFormat::AdjacencyList => {
                let user = ids[0];
                pairs.extend(ids[1..].iter().map(|&i| (user, i)));
            }
        }
    }
    Ok(pairs)
}

fn dedup_pairs(pairs: Vec<Pair>, label: &str) -> Vec<Pair> {
    let mut seen = HashSet::with_capacity(pairs.len());
    let before = pairs.len();
    let out: Vec<Pair> = pairs.into_iter().filter(|p| seen.insert(*p)).collect();
    if out.len() < before {
        info!("{label}: dropped {} duplicate pairs", before - out.len());
    }
    out
}

/// Loads a single interaction file as the train split.
pub fn load_interactions(path: &Path, format: FileFormat) -> Result<Dataset> {
    load_splits(path, None, None, format)
}

/// Loads pre-split files. ID maps are built over the union of all splits; pairs that
/// repeat an earlier split are removed so that the splits stay disjoint.
pub fn load_splits(
    train: &Path,
    validation: Option<&Path>,
    test: Option<&Path>,
    format: FileFormat,
) -> Result<Dataset> {
    let train_raw = parse_pairs(train, format)?;
    if train_raw.is_empty() {
        return Err(Error::EmptyDataset(train.to_path_buf()));
    }
    let val_raw = validation.map(|p| parse_pairs(p, format)).transpose()?.unwrap_or_default();
    let test_raw = test.map(|p| parse_pairs(p, format)).transpose()?.unwrap_or_default();

    let all = || train_raw.iter().chain(&val_raw).chain(&test_raw);
    let users = IdMap::from_raw_ids(all().map(|p| p.0));
    let items = IdMap::from_raw_ids(all().map(|p| p.1));
    let remap = |raw: &[(u64, u64)]| -> Vec<Pair> {
        raw.iter()
            .map(|&(u, i)| (users.dense(u).unwrap(), items.dense(i).unwrap()))
            .collect()
    };

    let train_pairs = dedup_pairs(remap(&train_raw), "train");
    let mut taken: HashSet<Pair> = train_pairs.iter().copied().collect();
    let mut disjoint = |pairs: Vec<Pair>, label: &str| -> Vec<Pair> {
        let pairs = dedup_pairs(pairs, label);
        let before = pairs.len();
        let kept: Vec<Pair> = pairs.into_iter().filter(|p| taken.insert(*p)).collect();
        if kept.len() < before {
            warn!("{label}: dropped {} pairs already present in an earlier split", before - kept.len());
        }
        kept
    };
    let val_pairs = disjoint(remap(&val_raw), "validation");
    let test_pairs = disjoint(remap(&test_raw), "test");

    let set = InteractionSet::new(users.len(), items.len(), train_pairs, val_pairs, test_pairs)?;
    Ok(Dataset { set, users, items })
}

/// Seeded per-user 80/10/10 split of a pair list. Each user keeps at least one
/// train pair.
pub fn split_seeded(num_users: usize, num_items: usize, pairs: Vec<Pair>, seed: u64) -> Result<InteractionSet> {
    let pairs = dedup_pairs(pairs, "split");
    let mut by_user: Vec<Vec<usize>> = vec![Vec::new(); num_users];
    for (u, i) in pairs {
        by_user[u].push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut val, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for (u, items) in by_user.iter_mut().enumerate() {
        items.sort_unstable();
        items.shuffle(&mut rng);
        let n = items.len();
        let n_test = ((n as f64) * 0.1).round() as usize;
        let n_val = ((n as f64) * 0.1).round() as usize;
        let (n_test, n_val) = if n_test + n_val >= n {
            (n.saturating_sub(1).min(n_test), 0)
        } else {
            (n_test, n_val)
        };
        test.extend(items[..n_test].iter().map(|&i| (u, i)));
        val.extend(items[n_test..n_test + n_val].iter().map(|&i| (u, i)));
        train.extend(items[n_test + n_val..].iter().map(|&i| (u, i)));
    }
    InteractionSet::new(num_users, num_items, train, val, test)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSpec {
    pub users: usize,
    pub items: usize,
    pub blocks: usize,
    /// Within-block interaction probability; across blocks it is `density / 20`.
    pub density: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            users: 200,
            items: 100,
            blocks: 8,
            density: 0.4,
            seed: 7,
        }
    }
}

/// Clustered synthetic corpus: users and items get latent blocks (balanced, seeded),
/// and each user–item pair interacts with probability `density` inside a block and
/// `density/20` across blocks. Users left without interactions get one in-block item.
pub fn synthetic_clustered(spec: &SyntheticSpec) -> Result<Dataset> {
    let SyntheticSpec {
        users,
        items,
        blocks,
        density,
        seed,
    } = *spec;
    if users == 0 || items == 0 || blocks == 0 || blocks > users.min(items) {
        return Err(Error::InvalidArgument(format!(
            "synthetic corpus needs users, items >= blocks >= 1 (got {users}, {items}, {blocks})"
        )));
    }
    if !(density > 0.0 && density <= 1.0) {
        return Err(Error::InvalidArgument(format!("density must be in (0, 1], got {density}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut balanced = |n: usize| -> Vec<usize> {
        let mut b: Vec<usize> = (0..n).map(|x| x % blocks).collect();
        b.shuffle(&mut rng);
        b
    };
    let user_block = balanced(users);
    let item_block = balanced(items);
    let p_out = density / 20.0;
    let mut pairs = Vec::new();
    for u in 0..users {
        let mut any = false;
        for i in 0..items {
            let p = if user_block[u] == item_block[i] { density } else { p_out };
            if rng.gen::<f64>() < p {
                pairs.push((u, i));
                any = true;
            }
        }
        if !any {
            let in_block: Vec<usize> = (0..items).filter(|&i| item_block[i] == user_block[u]).collect();
            pairs.push((u, *in_block.choose(&mut rng).expect("every block has items")));
        }
    }
    let set = split_seeded(users, items, pairs, seed.wrapping_add(1))?;
    Ok(Dataset {
        set,
        users: IdMap::identity(users),
        items: IdMap::identity(items),
    })
}

/// Draws `negatives_per_positive` uniform negatives per train pair, each from the
/// items the user has not interacted with in train. Output order follows the train
/// pairs, so it is a pure function of `(set, negatives_per_positive, seed)`.
pub fn sample_triplets(set: &InteractionSet, negatives_per_positive: usize, seed: u64) -> Result<Vec<TrainingTriplet>> {
    if negatives_per_positive == 0 {
        return Err(Error::InvalidArgument("negatives_per_positive must be >= 1".into()));
    }
    let by_user = set.train_items_by_user();
    // Complements are only materialised for users whose item lists are dense.
    let mut complement: HashMap<usize, Vec<usize>> = HashMap::new();
    for (u, items) in by_user.iter().enumerate() {
        if items.is_empty() {
            continue;
        }
        if items.len() >= set.num_items {
            return Err(Error::SamplingExhausted { user: u });
        }
        if items.len() * 2 > set.num_items {
            let comp: Vec<usize> = (0..set.num_items).filter(|i| items.binary_search(i).is_err()).collect();
            complement.insert(u, comp);
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(set.train.len() * negatives_per_positive);
    for &(user, pos_item) in &set.train {
        for _ in 0..negatives_per_positive {
            let neg_item = match complement.get(&user) {
                Some(comp) => comp[rng.gen_range(0..comp.len())],
                None => loop {
                    let cand = rng.gen_range(0..set.num_items);
                    if by_user[user].binary_search(&cand).is_err() {
                        break cand;
                    }
                },
            };
            out.push(TrainingTriplet {
                user,
                pos_item,
                neg_item,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::PathBuf;

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn pair_file_remaps_ids() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "t.txt", "0 5\n0 7\n1 5\n");
        let ds = load_interactions(&p, FileFormat::PairPerLine).unwrap();
        assert_eq!(ds.set.num_users, 2);
        assert_eq!(ds.set.num_items, 2);
        assert_eq!(ds.set.train, vec![(0, 0), (0, 1), (1, 0)]);
        assert_eq!(ds.items.raw(1), 7);
        assert_eq!(ds.items.dense(5), Some(0));
    }

    #[test]
    fn adjacency_line_expands() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "t.txt", "3 10 11 12\n");
        let raw = parse_pairs(&p, FileFormat::AdjacencyList).unwrap();
        assert_eq!(raw, vec![(3, 10), (3, 11), (3, 12)]);
    }

    #[test]
    fn malformed_and_empty_files() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "bad.txt", "0 1\n0 x\n");
        match load_interactions(&p, FileFormat::PairPerLine) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
        let p = write(dir.path(), "neg.txt", "0 -1\n");
        assert!(matches!(load_interactions(&p, FileFormat::PairPerLine), Err(Error::Parse { line: 1, .. })));
        let p = write(dir.path(), "empty.txt", "\n");
        assert!(matches!(load_interactions(&p, FileFormat::PairPerLine), Err(Error::EmptyDataset(_))));
    }

    #[test]
    fn duplicates_dropped_and_splits_disjoint() {
        let dir = tempfile::tempdir().unwrap();
        let tr = write(dir.path(), "train.txt", "1 1\n1 1\n2 2\n");
        let va = write(dir.path(), "valid.txt", "1 1\n2 1\n");
        let te = write(dir.path(), "test.txt", "2 1\n1 2\n");
        let ds = load_splits(&tr, Some(&va), Some(&te), FileFormat::PairPerLine).unwrap();
        assert_eq!(ds.set.train.len(), 2);
        assert_eq!(ds.set.validation, vec![(1, 0)]);
        assert_eq!(ds.set.test, vec![(0, 1)]);
    }

    #[test]
    fn id_map_round_trip_and_dir_round_trip() {
        let ds = synthetic_clustered(&SyntheticSpec {
            users: 20,
            items: 10,
            blocks: 2,
            density: 0.5,
            seed: 3,
        })
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        ds.save_dir(dir.path()).unwrap();
        let back = Dataset::load_dir(dir.path()).unwrap();
        assert_eq!(back, ds);
        let line = fs::read_to_string(dir.path().join(USER_MAP_FILE)).unwrap();
        assert!(line.starts_with("0\t0\n1\t1\n"));
    }

    #[test]
    fn stats_examples() {
        let s = dataset_stats(&InteractionSet::new(1, 1, vec![(0, 0)], vec![], vec![]).unwrap());
        assert_eq!(s.density, 1.0);
        // Gowalla row of the published dataset statistics.
        let density: f64 = 1_027_370.0 / (29_858.0 * 40_981.0);
        assert!((density * 100.0 - 0.084).abs() < 5e-4);
    }

    #[test]
    fn invariants_enforced() {
        assert!(InteractionSet::new(1, 1, vec![(0, 1)], vec![], vec![]).is_err());
        assert!(InteractionSet::new(1, 2, vec![(0, 1), (0, 1)], vec![], vec![]).is_err());
        assert!(InteractionSet::new(1, 2, vec![(0, 1)], vec![(0, 1)], vec![]).is_err());
    }

    #[test]
    fn sampling_shapes_forced_choice_and_determinism() {
        let one = InteractionSet::new(1, 10, vec![(0, 3)], vec![], vec![]).unwrap();
        let t = sample_triplets(&one, 5, 1).unwrap();
        assert_eq!(t.len(), 5);
        assert!(t.iter().all(|x| x.user == 0 && x.pos_item == 3 && x.neg_item != 3));

        let forced = InteractionSet::new(1, 3, vec![(0, 0), (0, 2)], vec![], vec![]).unwrap();
        let t = sample_triplets(&forced, 4, 9).unwrap();
        assert!(t.iter().all(|x| x.neg_item == 1));

        let ds = synthetic_clustered(&SyntheticSpec::default()).unwrap();
        assert_eq!(sample_triplets(&ds.set, 5, 11).unwrap(), sample_triplets(&ds.set, 5, 11).unwrap());
    }

    #[test]
    fn sampling_exhausted_names_user() {
        let full = InteractionSet::new(2, 2, vec![(0, 0), (1, 0), (1, 1)], vec![], vec![]).unwrap();
        match sample_triplets(&full, 1, 0) {
            Err(Error::SamplingExhausted { user }) => assert_eq!(user, 1),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn synthetic_is_deterministic_and_clustered() {
        let spec = SyntheticSpec::default();
        let a = synthetic_clustered(&spec).unwrap();
        let b = synthetic_clustered(&spec).unwrap();
        assert_eq!(a, b);
        assert!(a.set.train.len() > a.set.validation.len());
        assert!(!a.set.validation.is_empty());
        let by_user = a.set.train_items_by_user();
        assert!(by_user.iter().all(|items| !items.is_empty()));
    }
}
