use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InteractionFormat {
    /// `user::item::rating::timestamp`, as in the MovieLens ratings files.
    MovielensDat,
    /// `user<TAB>item[<TAB>timestamp]`.
    TsvTriples,
}

impl FromStr for InteractionFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "movielens_dat" => Ok(InteractionFormat::MovielensDat),
            "tsv_triples" => Ok(InteractionFormat::TsvTriples),
            other => Err(Error::Config(format!(
                "unknown format {other:?} (expected movielens_dat or tsv_triples)"
            ))),
        }
    }
}

impl fmt::Display for InteractionFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InteractionFormat::MovielensDat => "movielens_dat",
            InteractionFormat::TsvTriples => "tsv_triples",
        })
    }
}

/// One implicit-feedback event on dense indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Interaction {
    pub user: usize,
    pub item: usize,
    pub timestamp: Option<i64>,
}

/// Original identifiers in dense-index order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IdMap {
    ids: Vec<String>,
    index: HashMap<String, usize>,
}

impl IdMap {
    pub fn intern(&mut self, id: &str) -> usize {
        if let Some(&i) = self.index.get(id) {
            return i;
        }
        let i = self.ids.len();
        self.ids.push(id.to_string());
        self.index.insert(id.to_string(), i);
        i
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn original(&self, index: usize) -> Option<&str> {
        self.ids.get(index).map(String::as_str)
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    /// Two-column text: `original_id<TAB>dense_index`, one line per id.
    pub fn write<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for (i, id) in self.ids.iter().enumerate() {
            writeln!(out, "{id}\t{i}")?;
        }
        Ok(())
    }

    pub fn read<R: BufRead>(input: R, source: &str) -> Result<Self> {
        let mut map = IdMap::default();
        for (n, line) in input.lines().enumerate() {
            let line = line.map_err(|e| Error::parse(format!("{source}:{}", n + 1), e.to_string()))?;
            let (id, idx) = line
                .split_once('\t')
                .ok_or_else(|| Error::parse(format!("{source}:{}", n + 1), "expected two tab-separated columns"))?;
            let idx: usize = idx
                .parse()
                .map_err(|_| Error::parse(format!("{source}:{}", n + 1), format!("bad index {idx:?}")))?;
            if idx != map.len() || map.index_of(id).is_some() {
                return Err(Error::parse(
                    format!("{source}:{}", n + 1),
                    "indices must be dense, ascending and unique",
                ));
            }
            map.intern(id);
        }
        Ok(map)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedInteractions {
    pub interactions: Vec<Interaction>,
    pub users: IdMap,
    pub items: IdMap,
}

impl LoadedInteractions {
    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    pub fn num_items(&self) -> usize {
        self.items.len()
    }
}

pub fn load_interactions(path: &Path, format: InteractionFormat) -> Result<LoadedInteractions> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_interactions(BufReader::new(file), format, &path.display().to_string())
}

/// Parses interaction lines, reindexing users and items densely from 0 in
/// order of first appearance. Non-positive ratings are skipped; repeated
/// (user, item) pairs collapse into one interaction with the latest timestamp.
pub fn parse_interactions<R: BufRead>(input: R, format: InteractionFormat, source: &str) -> Result<LoadedInteractions> {
    let mut users = IdMap::default();
    let mut items = IdMap::default();
    let mut interactions: Vec<Interaction> = Vec::new();
    let mut seen: HashMap<(usize, usize), usize> = HashMap::new();

    for (n, line) in input.lines().enumerate() {
        let at = || format!("{source}:{}", n + 1);
        let line = line.map_err(|e| Error::parse(at(), e.to_string()))?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let (user, item, timestamp) = match format {
            InteractionFormat::MovielensDat => {
                let fields: Vec<&str> = line.split("::").collect();
                let [user, item, rating, ts] = fields[..] else {
                    return Err(Error::parse(
                        at(),
                        format!("expected 4 '::'-separated fields, found {}", fields.len()),
                    ));
                };
                let rating: f64 = rating
                    .trim()
                    .parse()
                    .map_err(|_| Error::parse(at(), format!("bad rating {rating:?}")))?;
                let ts: i64 = ts
                    .trim()
                    .parse()
                    .map_err(|_| Error::parse(at(), format!("bad timestamp {ts:?}")))?;
                if rating <= 0.0 {
                    continue;
                }
                (user.trim(), item.trim(), Some(ts))
            }
            InteractionFormat::TsvTriples => {
                let fields: Vec<&str> = line.split('\t').collect();
                match fields[..] {
                    [user, item] => (user.trim(), item.trim(), None),
                    [user, item, ts] => {
                        let ts: i64 = ts
                            .trim()
                            .parse()
                            .map_err(|_| Error::parse(at(), format!("bad timestamp {ts:?}")))?;
                        (user.trim(), item.trim(), Some(ts))
                    }
                    _ => {
                        return Err(Error::parse(
                            at(),
                            format!("expected 2 or 3 tab-separated fields, found {}", fields.len()),
                        ))
                    }
                }
            }
        };
        if user.is_empty() || item.is_empty() {
            return Err(Error::parse(at(), "empty user or item id"));
        }
        let u = users.intern(user);
        let i = items.intern(item);
        match seen.get(&(u, i)) {
            Some(&pos) => {
                let existing = &mut interactions[pos];
                if timestamp >= existing.timestamp {
                    existing.timestamp = timestamp;
                }
            }
            None => {
                seen.insert((u, i), interactions.len());
                interactions.push(Interaction {
                    user: u,
                    item: i,
                    timestamp,
                });
            }
        }
    }
    if interactions.is_empty() {
        return Err(Error::Data(format!("{source} contains no interactions")));
    }
    Ok(LoadedInteractions {
        interactions,
        users,
        items,
    })
}
