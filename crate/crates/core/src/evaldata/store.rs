//! Prepared-dataset directory.
//!
//! ```text
//! DIR/interactions.csv   user,item,timestamp   (loaded indices)
//! DIR/splits.csv         user,item,role        (role: train|validation|test)
//! DIR/negatives.csv      user,item
//! DIR/idmap/users.tsv    original id <TAB> index
//! DIR/idmap/items.tsv
//! DIR/summary.txt        key = value
//! ```
//!
//! All user columns hold loaded indices; [`load_prepared`] reindexes the
//! retained users exactly as [`super::leave_one_out_split`] does.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::BufReader;
use std::path::Path;

use super::{IdMap, InteractionDataset, LoadedInteractions};
use crate::{Error, Result};

pub const INTERACTIONS_FILE: &str = "interactions.csv";
pub const SPLITS_FILE: &str = "splits.csv";
pub const NEGATIVES_FILE: &str = "negatives.csv";
pub const IDMAP_DIR: &str = "idmap";
pub const SUMMARY_FILE: &str = "summary.txt";

/// Summary values recorded alongside a prepared dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct PrepareSummary {
    pub source: String,
    pub format: String,
    pub seed: u64,
    pub negatives: usize,
    pub interactions: usize,
    pub loaded_users: usize,
    pub num_items: usize,
    pub retained_users: usize,
    pub dropped_users: usize,
}

impl PrepareSummary {
    pub fn to_text(&self) -> String {
        format!(
            "source = {}\nformat = {}\nseed = {}\nnegatives = {}\ninteractions = {}\nloaded_users = {}\nnum_items = {}\nretained_users = {}\ndropped_users = {}\n",
            self.source,
            self.format,
            self.seed,
            self.negatives,
            self.interactions,
            self.loaded_users,
            self.num_items,
            self.retained_users,
            self.dropped_users
        )
    }
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn save_prepared(
    dir: &Path,
    loaded: &LoadedInteractions,
    ds: &InteractionDataset,
    summary: &PrepareSummary,
) -> Result<()> {
    fs::create_dir_all(dir.join(IDMAP_DIR)).map_err(|e| Error::io(dir, e))?;

    let mut text = String::from("user,item,timestamp\n");
    for it in &loaded.interactions {
        match it.timestamp {
            Some(ts) => writeln!(text, "{},{},{ts}", it.user, it.item).unwrap(),
            None => writeln!(text, "{},{},", it.user, it.item).unwrap(),
        }
    }
    write_file(&dir.join(INTERACTIONS_FILE), &text)?;

    let mut splits = String::from("user,item,role\n");
    let mut negs = String::from("user,item\n");
    for u in 0..ds.num_users {
        let origin = ds.user_origin[u];
        for &i in &ds.train[u] {
            writeln!(splits, "{origin},{i},train").unwrap();
        }
        writeln!(splits, "{origin},{},validation", ds.validation_item[u]).unwrap();
        writeln!(splits, "{origin},{},test", ds.test_item[u]).unwrap();
        for &j in &ds.eval_negatives[u] {
            writeln!(negs, "{origin},{j}").unwrap();
        }
    }
    write_file(&dir.join(SPLITS_FILE), &splits)?;
    write_file(&dir.join(NEGATIVES_FILE), &negs)?;

    let mut buf = Vec::new();
    loaded.users.write(&mut buf).unwrap();
    fs::write(dir.join(IDMAP_DIR).join("users.tsv"), &buf).map_err(|e| Error::io(dir.join(IDMAP_DIR), e))?;
    buf.clear();
    loaded.items.write(&mut buf).unwrap();
    fs::write(dir.join(IDMAP_DIR).join("items.tsv"), &buf).map_err(|e| Error::io(dir.join(IDMAP_DIR), e))?;

    write_file(&dir.join(SUMMARY_FILE), &summary.to_text())
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn read_pairs(path: &Path, header: &str, columns: usize) -> Result<Vec<Vec<String>>> {
    let text = read_text(path)?;
    let source = path.display().to_string();
    let mut lines = text.lines();
    if lines.next() != Some(header) {
        return Err(Error::parse(
            format!("{source}:1"),
            format!("expected header {header:?}"),
        ));
    }
    lines
        .enumerate()
        .map(|(n, line)| {
            let fields: Vec<String> = line.split(',').map(str::to_string).collect();
            if fields.len() != columns {
                return Err(Error::parse(
                    format!("{source}:{}", n + 2),
                    format!("expected {columns} columns"),
                ));
            }
            Ok(fields)
        })
        .collect()
}

fn parse_index(s: &str, path: &Path, what: &str) -> Result<usize> {
    s.parse()
        .map_err(|_| Error::parse(path.display().to_string(), format!("bad {what} {s:?}")))
}

/// Reads the id maps of a prepared directory.
pub fn load_id_maps(dir: &Path) -> Result<(IdMap, IdMap)> {
    let open = |name: &str| -> Result<IdMap> {
        let path = dir.join(IDMAP_DIR).join(name);
        let file = fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
        IdMap::read(BufReader::new(file), &path.display().to_string())
    };
    Ok((open("users.tsv")?, open("items.tsv")?))
}

/// Rebuilds the leave-one-out dataset from a prepared directory and checks
/// every split invariant.
pub fn load_prepared(dir: &Path) -> Result<InteractionDataset> {
    let (users, items) = load_id_maps(dir)?;
    let num_items = items.len();

    #[derive(Default)]
    struct Parts {
        train: Vec<usize>,
        validation: Option<usize>,
        test: Option<usize>,
        negatives: Vec<usize>,
    }
    let mut by_user: BTreeMap<usize, Parts> = BTreeMap::new();

    let splits_path = dir.join(SPLITS_FILE);
    for row in read_pairs(&splits_path, "user,item,role", 3)? {
        let user = parse_index(&row[0], &splits_path, "user")?;
        let item = parse_index(&row[1], &splits_path, "item")?;
        let parts = by_user.entry(user).or_default();
        let slot = match row[2].as_str() {
            "train" => {
                parts.train.push(item);
                continue;
            }
            "validation" => &mut parts.validation,
            "test" => &mut parts.test,
            other => {
                return Err(Error::parse(
                    splits_path.display().to_string(),
                    format!("unknown role {other:?}"),
                ))
            }
        };
        if slot.replace(item).is_some() {
            return Err(Error::Data(format!("user {user} has two {} items", row[2])));
        }
    }
    let neg_path = dir.join(NEGATIVES_FILE);
    for row in read_pairs(&neg_path, "user,item", 2)? {
        let user = parse_index(&row[0], &neg_path, "user")?;
        let item = parse_index(&row[1], &neg_path, "item")?;
        by_user
            .get_mut(&user)
            .ok_or_else(|| Error::Data(format!("negatives listed for unknown user {user}")))?
            .negatives
            .push(item);
    }

    let mut train = Vec::new();
    let mut validation = Vec::new();
    let mut test = Vec::new();
    let mut negatives = Vec::new();
    let mut origin = Vec::new();
    for (user, parts) in by_user {
        if user >= users.len() {
            return Err(Error::Data(format!("user {user} missing from the id map")));
        }
        let (Some(v), Some(t)) = (parts.validation, parts.test) else {
            return Err(Error::Data(format!("user {user} lacks a validation or test item")));
        };
        train.push(parts.train);
        validation.push(v);
        test.push(t);
        negatives.push(parts.negatives);
        origin.push(user);
    }
    let n = origin.len();
    let mut ds = InteractionDataset::from_parts(n, num_items, train, validation, test, negatives)?;
    ds.user_origin = origin;
    ds.dropped_users = read_summary_value(dir, "dropped_users")?.unwrap_or(0);
    Ok(ds)
}

fn read_summary_value(dir: &Path, key: &str) -> Result<Option<usize>> {
    let text = read_text(&dir.join(SUMMARY_FILE))?;
    for line in text.lines() {
        if let Some((k, v)) = line.split_once('=') {
            if k.trim() == key {
                return v
                    .trim()
                    .parse()
                    .map(Some)
                    .map_err(|_| Error::parse(SUMMARY_FILE, format!("bad value for {key}")));
            }
        }
    }
    Ok(None)
}
