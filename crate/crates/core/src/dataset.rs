//! Interaction and provider-group ingestion, preprocessing filters, the
//! temporal split and catalog statistics.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Group label given to items that have no provider assignment.
pub const UNKNOWN_GROUP: &str = "UNKNOWN";

/// One implicit-feedback event. The rating is kept for round-tripping but
/// every interaction counts as a positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interaction {
    pub user: String,
    pub item: String,
    pub rating: f64,
    pub timestamp: u64,
}

/// Field separator for the delimiter-separated input files.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Delimiter(String);

impl Delimiter {
    pub fn tab() -> Self {
        Delimiter("\t".to_string())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl Default for Delimiter {
    fn default() -> Self {
        Delimiter::tab()
    }
}

impl FromStr for Delimiter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let sep = match s {
            "tab" | "\\t" | "\t" => "\t",
            "comma" => ",",
            "" => return Err(Error::domain("empty delimiter")),
            other => other,
        };
        Ok(Delimiter(sep.to_string()))
    }
}

impl TryFrom<String> for Delimiter {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Delimiter> for String {
    fn from(d: Delimiter) -> String {
        if d.0 == "\t" {
            "tab".to_string()
        } else {
            d.0
        }
    }
}

impl fmt::Display for Delimiter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0 == "\t" {
            f.write_str("tab")
        } else {
            f.write_str(&self.0)
        }
    }
}

/// Orders identifiers numerically when both parse as unsigned integers,
/// lexicographically otherwise. Used wherever a deterministic id order is
/// needed (index assignment, ranking tie-breaks).
pub fn compare_ids(a: &str, b: &str) -> Ordering {
    match (a.parse::<u64>(), b.parse::<u64>()) {
        (Ok(x), Ok(y)) => x.cmp(&y).then_with(|| a.cmp(b)),
        (Ok(_), Err(_)) => Ordering::Less,
        (Err(_), Ok(_)) => Ordering::Greater,
        (Err(_), Err(_)) => a.cmp(b),
    }
}

fn read_lines(path: &Path) -> Result<impl Iterator<Item = (usize, std::io::Result<String>)>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(BufReader::new(file)
        .lines()
        .enumerate()
        .map(|(n, line)| (n + 1, line)))
}

fn parse_error(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Reads `user<sep>item<sep>rating<sep>timestamp` rows in file order.
/// Blank lines are skipped; anything else that does not parse is an error
/// carrying the 1-based line number.
pub fn load_interactions(path: impl AsRef<Path>, sep: &Delimiter) -> Result<Vec<Interaction>> {
    let path = path.as_ref();
    let mut out = Vec::new();
    for (line_no, line) in read_lines(path)? {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(sep.as_str()).collect();
        if fields.len() != 4 {
            return Err(parse_error(
                path,
                line_no,
                format!("expected 4 fields, found {}", fields.len()),
            ));
        }
        let user = fields[0].trim();
        let item = fields[1].trim();
        if user.is_empty() || item.is_empty() {
            return Err(parse_error(path, line_no, "empty user or item identifier"));
        }
        let rating: f64 = fields[2]
            .trim()
            .parse()
            .map_err(|_| parse_error(path, line_no, format!("bad rating {:?}", fields[2])))?;
        let timestamp: u64 = fields[3]
            .trim()
            .parse()
            .map_err(|_| parse_error(path, line_no, format!("bad timestamp {:?}", fields[3])))?;
        out.push(Interaction {
            user: user.to_string(),
            item: item.to_string(),
            rating,
            timestamp,
        });
    }
    Ok(out)
}

/// Writes interactions in the same format `load_interactions` reads.
pub fn write_interactions(
    path: impl AsRef<Path>,
    data: &[Interaction],
    sep: &Delimiter,
) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let s = sep.as_str();
    for it in data {
        writeln!(w, "{}{s}{}{s}{}{s}{}", it.user, it.item, it.rating, it.timestamp)
            .map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupAssignment {
    pub item: String,
    pub provider: String,
    pub group: String,
}

/// The labeled item universe.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Catalog {
    pub items: BTreeSet<String>,
    pub groups: BTreeMap<String, String>,
    /// Fraction of labeled items per group.
    pub group_share: BTreeMap<String, f64>,
}

impl Catalog {
    /// Builds a catalog from assignments. A repeated item with the same group
    /// is folded silently; a repeated item with a different group is an error.
    pub fn from_assignments<'a>(
        assignments: impl IntoIterator<Item = &'a GroupAssignment>,
    ) -> Result<Self> {
        let mut groups: BTreeMap<String, String> = BTreeMap::new();
        for a in assignments {
            match groups.get(&a.item) {
                Some(existing) if existing != &a.group => {
                    return Err(Error::GroupConflict {
                        item: a.item.clone(),
                        first: existing.clone(),
                        second: a.group.clone(),
                    });
                }
                Some(_) => {}
                None => {
                    groups.insert(a.item.clone(), a.group.clone());
                }
            }
        }
        Ok(Self::from_groups(groups))
    }

    pub fn from_groups(groups: BTreeMap<String, String>) -> Self {
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for g in groups.values() {
            *counts.entry(g.clone()).or_default() += 1;
        }
        let total = groups.len() as f64;
        let group_share = counts
            .into_iter()
            .map(|(g, c)| (g, c as f64 / total))
            .collect();
        Catalog {
            items: groups.keys().cloned().collect(),
            groups,
            group_share,
        }
    }

    /// Group label of an item, or [`UNKNOWN_GROUP`].
    pub fn group_of(&self, item: &str) -> &str {
        self.groups.get(item).map(String::as_str).unwrap_or(UNKNOWN_GROUP)
    }

    /// Distinct labeled groups in ascending label order.
    pub fn labels(&self) -> Vec<String> {
        self.group_share.keys().cloned().collect()
    }

    /// Group with the largest catalog share (ties: smallest label).
    pub fn majority_group(&self) -> Option<&str> {
        self.group_share
            .iter()
            .max_by(|a, b| a.1.total_cmp(b.1).then_with(|| b.0.cmp(a.0)))
            .map(|(g, _)| g.as_str())
    }

    /// Group with the smallest catalog share (ties: smallest label).
    pub fn minority_group(&self) -> Option<&str> {
        self.group_share
            .iter()
            .min_by(|a, b| a.1.total_cmp(b.1).then_with(|| a.0.cmp(b.0)))
            .map(|(g, _)| g.as_str())
    }
}

/// Reads `item<sep>provider<sep>group` rows.
pub fn load_provider_groups(
    path: impl AsRef<Path>,
    sep: &Delimiter,
) -> Result<(Vec<GroupAssignment>, Catalog)> {
    let path = path.as_ref();
    let mut assignments = Vec::new();
    for (line_no, line) in read_lines(path)? {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(sep.as_str()).map(str::trim).collect();
        if fields.len() != 3 {
            return Err(parse_error(
                path,
                line_no,
                format!("expected 3 fields, found {}", fields.len()),
            ));
        }
        if fields.iter().any(|f| f.is_empty()) {
            return Err(parse_error(path, line_no, "empty field"));
        }
        assignments.push(GroupAssignment {
            item: fields[0].to_string(),
            provider: fields[1].to_string(),
            group: fields[2].to_string(),
        });
    }
    let catalog = Catalog::from_assignments(&assignments)?;
    Ok((assignments, catalog))
}

/// Drops items with fewer than `min_item` interactions and users with fewer
/// than `min_user`, repeating until neither rule removes anything.
pub fn filter_min_interactions(
    data: &[Interaction],
    min_item: usize,
    min_user: usize,
) -> Vec<Interaction> {
    let mut keep: Vec<bool> = vec![true; data.len()];
    loop {
        let mut item_counts: HashMap<&str, usize> = HashMap::new();
        let mut user_counts: HashMap<&str, usize> = HashMap::new();
        for (it, _) in data.iter().zip(&keep).filter(|(_, k)| **k) {
            *item_counts.entry(&it.item).or_default() += 1;
            *user_counts.entry(&it.user).or_default() += 1;
        }
        let mut changed = false;
        for (it, k) in data.iter().zip(keep.iter_mut()) {
            if *k && (item_counts[it.item.as_str()] < min_item || user_counts[it.user.as_str()] < min_user)
            {
                *k = false;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    data.iter()
        .zip(keep)
        .filter(|(_, k)| *k)
        .map(|(it, _)| it.clone())
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<Interaction>,
    pub validation: Vec<Interaction>,
    pub test: Vec<Interaction>,
}

impl DatasetSplit {
    pub fn len(&self) -> usize {
        self.train.len() + self.validation.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

// n * frac can land a hair above an integer (e.g. 0.1 * 30); treat that as exact.
fn ceil_count(n: usize, frac: f64) -> usize {
    let x = n as f64 * frac;
    let c = (x - 1e-9).ceil().max(0.0) as usize;
    c.min(n)
}

/// Global temporal split: the last `⌈n·test_frac⌉` interactions by timestamp
/// go to test, the preceding `⌈n·val_frac⌉` to validation, the rest to
/// train. Timestamp ties keep input order.
pub fn temporal_split(data: &[Interaction], test_frac: f64, val_frac: f64) -> Result<DatasetSplit> {
    if !(test_frac >= 0.0 && val_frac >= 0.0 && test_frac + val_frac < 1.0) {
        return Err(Error::domain(format!(
            "split fractions must satisfy 0 <= test + val < 1 (got test={test_frac}, val={val_frac})"
        )));
    }
    let n = data.len();
    let mut sorted: Vec<Interaction> = data.to_vec();
    sorted.sort_by_key(|it| it.timestamp);

    let n_test = ceil_count(n, test_frac);
    let n_val = ceil_count(n, val_frac).min(n - n_test);
    let n_train = n - n_test - n_val;

    let test = sorted.split_off(n_train + n_val);
    let validation = sorted.split_off(n_train);
    Ok(DatasetSplit {
        train: sorted,
        validation,
        test,
    })
}

/// Dataset statistics in the shape of the usual "users / items / interactions"
/// summary table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub n_users: usize,
    pub n_items_catalog: usize,
    pub n_items_interacted: usize,
    pub catalog_group_share: BTreeMap<String, f64>,
    pub n_interactions_total: usize,
    pub n_interactions_train: usize,
    pub n_interactions_validation: usize,
    pub n_interactions_test: usize,
    /// Share of train interactions per group; unlabeled items fall under
    /// [`UNKNOWN_GROUP`].
    pub train_group_share: BTreeMap<String, f64>,
    /// Interacted items that are missing from the catalog.
    pub n_unknown_items: usize,
}

pub fn catalog_stats(split: &DatasetSplit, catalog: &Catalog) -> DatasetStats {
    let all = || split.train.iter().chain(&split.validation).chain(&split.test);
    let users: BTreeSet<&str> = all().map(|it| it.user.as_str()).collect();
    let items: BTreeSet<&str> = all().map(|it| it.item.as_str()).collect();
    let n_unknown_items = items.iter().filter(|i| !catalog.groups.contains_key(**i)).count();

    let mut train_counts: BTreeMap<String, usize> = catalog
        .group_share
        .keys()
        .map(|g| (g.clone(), 0))
        .collect();
    for it in &split.train {
        *train_counts
            .entry(catalog.group_of(&it.item).to_string())
            .or_default() += 1;
    }
    let n_train = split.train.len();
    let train_group_share = train_counts
        .into_iter()
        .map(|(g, c)| {
            let share = if n_train == 0 { 0.0 } else { c as f64 / n_train as f64 };
            (g, share)
        })
        .collect();

    DatasetStats {
        n_users: users.len(),
        n_items_catalog: catalog.items.len(),
        n_items_interacted: items.len(),
        catalog_group_share: catalog.group_share.clone(),
        n_interactions_total: split.len(),
        n_interactions_train: n_train,
        n_interactions_validation: split.validation.len(),
        n_interactions_test: split.test.len(),
        train_group_share,
        n_unknown_items,
    }
}
