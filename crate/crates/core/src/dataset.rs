//! Rating-dataset loading, validation, splitting and summary statistics.
//!
//! Datasets are immutable once built: interactions are deduplicated
//! (keep-last), sorted by `(user_index, item_index)` and indexed densely so
//! that per-user slices are contiguous. Raw ids are kept for reporting.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A single (user, item, rating) observation. Timestamps are carried through
/// for caching but ignored by every computation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interaction {
    pub user_id: u64,
    pub item_id: u64,
    pub rating: f64,
    pub timestamp: Option<i64>,
}

/// Inclusive rating range with its step granularity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatingScale {
    pub min: f64,
    pub max: f64,
    pub step: f64,
}

impl RatingScale {
    pub fn new(min: f64, max: f64, step: f64) -> Result<Self> {
        if !(min.is_finite() && max.is_finite() && step.is_finite()) {
            return Err(Error::InvalidScale("non-finite bounds".into()));
        }
        if min >= max {
            return Err(Error::InvalidScale(format!(
                "min {min} must be < max {max}"
            )));
        }
        if step <= 0.0 {
            return Err(Error::InvalidScale(format!("step {step} must be > 0")));
        }
        let steps = (max - min) / step;
        if (steps - steps.round()).abs() > 1e-9 {
            return Err(Error::InvalidScale(format!(
                "range {min}..{max} is not divisible by step {step}"
            )));
        }
        Ok(Self { min, max, step })
    }

    /// MovieLens half-star scale (0.5 to 5.0 in 0.5 increments).
    pub fn half_stars() -> Self {
        Self {
            min: 0.5,
            max: 5.0,
            step: 0.5,
        }
    }

    /// Whole-star 1 to 5 scale (MovieLens 1M).
    pub fn one_to_five() -> Self {
        Self {
            min: 1.0,
            max: 5.0,
            step: 1.0,
        }
    }

    pub fn contains(&self, rating: f64) -> bool {
        rating >= self.min && rating <= self.max
    }

    pub fn clamp(&self, value: f64) -> f64 {
        value.clamp(self.min, self.max)
    }
}

/// Column mapping for delimited rating files.
#[derive(Debug, Clone)]
pub struct CsvSchema {
    pub user_col: usize,
    pub item_col: usize,
    pub rating_col: usize,
    pub timestamp_col: Option<usize>,
    /// When `None`, the first row is treated as a header iff its mapped
    /// columns do not parse as numbers.
    pub has_header: Option<bool>,
}

impl Default for CsvSchema {
    /// MovieLens `userId,movieId,rating,timestamp` layout.
    fn default() -> Self {
        Self {
            user_col: 0,
            item_col: 1,
            rating_col: 2,
            timestamp_col: Some(3),
            has_header: None,
        }
    }
}

/// Immutable rating dataset with dense user/item indices.
///
/// Interactions are stored sorted by `(user_index, item_index)`; per-user
/// slices are addressed through a CSR-style offset table.
#[derive(Debug, Clone)]
pub struct RatingDataset {
    interactions: Vec<Interaction>,
    scale: RatingScale,
    user_ids: Vec<u64>,
    item_ids: Vec<u64>,
    user_index: HashMap<u64, u32>,
    item_index: HashMap<u64, u32>,
    user_offsets: Vec<usize>,
}

/// Summary statistics in the shape reports print them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DatasetStats {
    pub n_users: usize,
    pub n_items: usize,
    pub n_ratings: usize,
    pub sparsity: f64,
    /// Sparsity rounded to 3 decimals, the precision used in summaries.
    pub sparsity_rounded: f64,
}

/// A user-stratified train/test partition of one dataset.
#[derive(Debug, Clone)]
pub struct SplitPair {
    pub train: RatingDataset,
    pub test: RatingDataset,
    pub seed: u64,
}

impl RatingDataset {
    /// Build a dataset from raw interactions. Duplicate `(user, item)` pairs
    /// keep the last occurrence; ratings are validated against the scale.
    pub fn from_interactions(rows: Vec<Interaction>, scale: RatingScale) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::EmptyDataset("no interactions".into()));
        }
        let mut seen: HashMap<(u64, u64), usize> = HashMap::with_capacity(rows.len());
        let mut deduped: Vec<Interaction> = Vec::with_capacity(rows.len());
        for row in rows {
            if !row.rating.is_finite() || !scale.contains(row.rating) {
                return Err(Error::InvalidArgument(format!(
                    "rating {} for user {} item {} outside scale [{}, {}]",
                    row.rating, row.user_id, row.item_id, scale.min, scale.max
                )));
            }
            match seen.entry((row.user_id, row.item_id)) {
                std::collections::hash_map::Entry::Occupied(e) => deduped[*e.get()] = row,
                std::collections::hash_map::Entry::Vacant(e) => {
                    e.insert(deduped.len());
                    deduped.push(row);
                }
            }
        }

        let mut user_ids: Vec<u64> = deduped.iter().map(|r| r.user_id).collect();
        user_ids.sort_unstable();
        user_ids.dedup();
        let mut item_ids: Vec<u64> = deduped.iter().map(|r| r.item_id).collect();
        item_ids.sort_unstable();
        item_ids.dedup();

        let user_index: HashMap<u64, u32> = user_ids
            .iter()
            .enumerate()
            .map(|(i, &u)| (u, i as u32))
            .collect();
        let item_index: HashMap<u64, u32> = item_ids
            .iter()
            .enumerate()
            .map(|(i, &v)| (v, i as u32))
            .collect();

        deduped.sort_unstable_by_key(|r| (user_index[&r.user_id], item_index[&r.item_id]));

        let mut user_offsets = Vec::with_capacity(user_ids.len() + 1);
        user_offsets.push(0);
        let mut current = 0u32;
        for (pos, row) in deduped.iter().enumerate() {
            let u = user_index[&row.user_id];
            while current < u {
                user_offsets.push(pos);
                current += 1;
            }
        }
        while user_offsets.len() <= user_ids.len() {
            user_offsets.push(deduped.len());
        }

        Ok(Self {
            interactions: deduped,
            scale,
            user_ids,
            item_ids,
            user_index,
            item_index,
            user_offsets,
        })
    }

    pub fn n_users(&self) -> usize {
        self.user_ids.len()
    }

    pub fn n_items(&self) -> usize {
        self.item_ids.len()
    }

    pub fn n_ratings(&self) -> usize {
        self.interactions.len()
    }

    pub fn scale(&self) -> RatingScale {
        self.scale
    }

    pub fn interactions(&self) -> &[Interaction] {
        &self.interactions
    }

    /// Raw user ids in dense-index order (ascending).
    pub fn user_ids(&self) -> &[u64] {
        &self.user_ids
    }

    /// Raw item ids in dense-index order (ascending).
    pub fn item_ids(&self) -> &[u64] {
        &self.item_ids
    }

    pub fn user_index(&self, user_id: u64) -> Option<u32> {
        self.user_index.get(&user_id).copied()
    }

    pub fn item_index(&self, item_id: u64) -> Option<u32> {
        self.item_index.get(&item_id).copied()
    }

    /// All interactions of the user at dense index `u`, sorted by item index.
    pub fn user_interactions(&self, u: u32) -> &[Interaction] {
        let u = u as usize;
        &self.interactions[self.user_offsets[u]..self.user_offsets[u + 1]]
    }

    /// Positions (into [`Self::interactions`]) of the user's interactions.
    pub fn user_interaction_range(&self, u: u32) -> std::ops::Range<usize> {
        let u = u as usize;
        self.user_offsets[u]..self.user_offsets[u + 1]
    }

    pub fn stats(&self) -> DatasetStats {
        let n_users = self.n_users();
        let n_items = self.n_items();
        let n_ratings = self.n_ratings();
        let sparsity = 1.0 - n_ratings as f64 / (n_users as f64 * n_items as f64);
        DatasetStats {
            n_users,
            n_items,
            n_ratings,
            sparsity,
            sparsity_rounded: (sparsity * 1000.0).round() / 1000.0,
        }
    }

    /// Restrict the dataset to a uniformly random subset of `n_users` users.
    pub fn subsample_users(&self, n_users: usize, seed: u64) -> Result<RatingDataset> {
        if n_users == 0 || n_users > self.n_users() {
            return Err(Error::InvalidArgument(format!(
                "n_users {} out of range 1..={}",
                n_users,
                self.n_users()
            )));
        }
        if n_users == self.n_users() {
            return Ok(self.clone());
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let chosen = rand::seq::index::sample(&mut rng, self.n_users(), n_users);
        let mut keep = vec![false; self.n_users()];
        for idx in chosen.iter() {
            keep[idx] = true;
        }
        let rows: Vec<Interaction> = self
            .interactions
            .iter()
            .filter(|r| keep[self.user_index[&r.user_id] as usize])
            .copied()
            .collect();
        RatingDataset::from_interactions(rows, self.scale)
    }

    /// Per-user stratified split: for each user with at least two ratings,
    /// `floor(test_fraction * n_u)` of their interactions go to the test
    /// side. Users with a single rating stay entirely in train, so every
    /// test user is guaranteed to be known at training time.
    pub fn split(&self, test_fraction: f64, seed: u64) -> Result<SplitPair> {
        if !(test_fraction > 0.0 && test_fraction < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "test_fraction {test_fraction} must be in (0, 1)"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut train_rows = Vec::with_capacity(self.interactions.len());
        let mut test_rows = Vec::new();
        for u in 0..self.n_users() as u32 {
            let slice = self.user_interactions(u);
            let n_u = slice.len();
            let n_test = if n_u >= 2 {
                (test_fraction * n_u as f64).floor() as usize
            } else {
                0
            };
            if n_test == 0 {
                train_rows.extend_from_slice(slice);
                continue;
            }
            let mut to_test = vec![false; n_u];
            for idx in rand::seq::index::sample(&mut rng, n_u, n_test).iter() {
                to_test[idx] = true;
            }
            for (pos, row) in slice.iter().enumerate() {
                if to_test[pos] {
                    test_rows.push(*row);
                } else {
                    train_rows.push(*row);
                }
            }
        }
        if test_rows.is_empty() {
            return Err(Error::EmptyDataset(
                "split produced an empty test set (all users have < 2 ratings?)".into(),
            ));
        }
        Ok(SplitPair {
            train: RatingDataset::from_interactions(train_rows, self.scale)?,
            test: RatingDataset::from_interactions(test_rows, self.scale)?,
            seed,
        })
    }

    /// Serialize to the internal cache format: a sorted CSV carrying both
    /// dense indices and raw ids. Byte-identical for identical datasets.
    pub fn to_cache_csv(&self) -> String {
        let mut out = String::with_capacity(self.interactions.len() * 24 + 64);
        let _ = writeln!(
            out,
            "# scale {} {} {}",
            self.scale.min, self.scale.max, self.scale.step
        );
        out.push_str("user_index,item_index,user_id,item_id,rating,timestamp\n");
        for row in &self.interactions {
            let u = self.user_index[&row.user_id];
            let i = self.item_index[&row.item_id];
            let _ = write!(
                out,
                "{u},{i},{},{},{}",
                row.user_id, row.item_id, row.rating
            );
            match row.timestamp {
                Some(ts) => {
                    let _ = writeln!(out, ",{ts}");
                }
                None => out.push_str(",\n"),
            }
        }
        out
    }

    pub fn write_cache_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_cache_csv()).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })
    }
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn parse_err(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn parse_fields(
    path: &Path,
    line_no: u64,
    fields: &[&str],
    schema: &CsvSchema,
    scale: &RatingScale,
) -> Result<Interaction> {
    // The timestamp column is optional; the other three are required.
    let need = schema.user_col.max(schema.item_col).max(schema.rating_col);
    if fields.len() <= need {
        return Err(parse_err(
            path,
            line_no,
            format!(
                "expected at least {} columns, found {}",
                need + 1,
                fields.len()
            ),
        ));
    }
    let get = |col: usize, what: &str| -> Result<&str> {
        fields
            .get(col)
            .copied()
            .ok_or_else(|| parse_err(path, line_no, format!("missing {what} column {col}")))
    };
    let user_id: u64 = get(schema.user_col, "user")?
        .trim()
        .parse()
        .map_err(|_| parse_err(path, line_no, "user id is not an integer"))?;
    let item_id: u64 = get(schema.item_col, "item")?
        .trim()
        .parse()
        .map_err(|_| parse_err(path, line_no, "item id is not an integer"))?;
    let rating: f64 = get(schema.rating_col, "rating")?
        .trim()
        .parse()
        .map_err(|_| parse_err(path, line_no, "rating is not a number"))?;
    if !scale.contains(rating) {
        return Err(parse_err(
            path,
            line_no,
            format!(
                "rating {rating} outside scale [{}, {}]",
                scale.min, scale.max
            ),
        ));
    }
    // Timestamps are optional even when the schema maps a column for them.
    let timestamp = schema
        .timestamp_col
        .and_then(|c| fields.get(c))
        .and_then(|s| s.trim().parse::<i64>().ok());
    Ok(Interaction {
        user_id,
        item_id,
        rating,
        timestamp,
    })
}

fn header_row(fields: &[&str], schema: &CsvSchema) -> bool {
    match schema.has_header {
        Some(h) => h,
        None => fields
            .get(schema.rating_col)
            .is_none_or(|s| s.trim().parse::<f64>().is_err()),
    }
}

/// Load a comma-separated rating file (MovieLens `ratings.csv` layout by
/// default). Duplicate `(user, item)` rows keep the last occurrence.
pub fn load_csv(path: &Path, schema: &CsvSchema, scale: RatingScale) -> Result<RatingDataset> {
    let file = std::fs::File::open(path).map_err(|e| io_err(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(BufReader::new(file));
    let mut rows = Vec::new();
    let mut record = csv::StringRecord::new();
    let mut line_no = 0u64;
    loop {
        match reader.read_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {
                line_no += 1;
                let fields: Vec<&str> = record.iter().collect();
                if fields.iter().all(|f| f.trim().is_empty()) {
                    continue;
                }
                if line_no == 1 && header_row(&fields, schema) {
                    continue;
                }
                rows.push(parse_fields(path, line_no, &fields, schema, &scale)?);
            }
            Err(e) => {
                return Err(parse_err(path, line_no + 1, e.to_string()));
            }
        }
    }
    if rows.is_empty() {
        return Err(Error::EmptyDataset(path.display().to_string()));
    }
    RatingDataset::from_interactions(rows, scale)
}

/// Load a separator-delimited rating file such as MovieLens 1M
/// `ratings.dat` (`user::item::rating::timestamp`).
pub fn load_dat(path: &Path, separator: &str, scale: RatingScale) -> Result<RatingDataset> {
    let file = std::fs::File::open(path).map_err(|e| io_err(path, e))?;
    let schema = CsvSchema {
        user_col: 0,
        item_col: 1,
        rating_col: 2,
        timestamp_col: Some(3),
        has_header: Some(false),
    };
    let mut rows = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line_no = idx as u64 + 1;
        let line = line.map_err(|e| io_err(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(separator).collect();
        if fields.len() < 3 {
            return Err(parse_err(
                path,
                line_no,
                format!(
                    "expected at least 3 fields separated by {separator:?}, found {}",
                    fields.len()
                ),
            ));
        }
        rows.push(parse_fields(path, line_no, &fields, &schema, &scale)?);
    }
    if rows.is_empty() {
        return Err(Error::EmptyDataset(path.display().to_string()));
    }
    RatingDataset::from_interactions(rows, scale)
}

/// Resolve a dataset argument: a ratings file, or a directory containing
/// `ratings.csv` / `ratings.dat`.
pub fn resolve_ratings_file(path: &Path) -> Result<PathBuf> {
    if path.is_dir() {
        for candidate in ["ratings.csv", "ratings.dat"] {
            let p = path.join(candidate);
            if p.is_file() {
                return Ok(p);
            }
        }
        return Err(Error::InvalidArgument(format!(
            "{} contains neither ratings.csv nor ratings.dat",
            path.display()
        )));
    }
    if path.is_file() {
        return Ok(path.to_path_buf());
    }
    Err(Error::InvalidArgument(format!(
        "dataset path {} does not exist",
        path.display()
    )))
}
