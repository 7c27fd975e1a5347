//! L1 locality-sensitive hashing over image codes.
//!
//! The hash family is axis-parallel stumps: a function picks one dimension
//! uniformly at random and a threshold uniformly within that dimension's
//! data range, and emits 1 when the component is at or below the threshold.
//! `k` stumps form one k-bit key; `l` independent keys index `l` hash
//! tables. A query collects the union of its matching buckets and evaluates
//! exact L1 distances only on those candidates. An empty candidate union is
//! reported as [`Error::EmptyCandidates`] rather than an empty result;
//! callers that must always produce an answer opt into a brute-force
//! fallback.
//!
//! All randomness comes from the pinned generator in [`crate::rng`], and
//! tables are drawn in order, so an index fitted with `l` tables agrees with
//! the first `l` tables of any larger fit under the same seed.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{BufReader, BufWriter};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::codes::{l1_distance, ImageCode};
use crate::error::{Error, Result};
use crate::rng::SeededRng;

pub type ItemId = u32;

/// One-bit hash: `1` iff `x[dim_index] <= threshold`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StumpHash {
    pub dim_index: usize,
    pub threshold: f64,
}

impl StumpHash {
    pub fn bit(&self, x: &ImageCode) -> Result<bool> {
        if self.dim_index >= x.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim_index + 1,
                got: x.dim(),
            });
        }
        Ok(x.values()[self.dim_index] <= self.threshold)
    }
}

/// `k` stumps concatenated into one k-bit key. The first stump is the most
/// significant bit, so keys print in stump order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositeHash {
    stumps: Vec<StumpHash>,
}

impl CompositeHash {
    pub fn new(stumps: Vec<StumpHash>) -> Self {
        assert!(
            !stumps.is_empty() && stumps.len() <= 64,
            "keys are stored in 64 bits"
        );
        CompositeHash { stumps }
    }

    pub fn k(&self) -> u32 {
        self.stumps.len() as u32
    }

    pub fn stumps(&self) -> &[StumpHash] {
        &self.stumps
    }

    pub fn key(&self, x: &ImageCode) -> Result<u64> {
        let mut key = 0u64;
        for stump in &self.stumps {
            key = (key << 1) | u64::from(stump.bit(x)?);
        }
        Ok(key)
    }
}

/// Radius query parameters: matches within `(1 + epsilon) * radius` are kept.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QueryParams {
    pub radius: f64,
    pub epsilon: f64,
}

/// Empirical sensitivity of the stump family on a dataset: collision
/// frequencies for near (`<= r`) and far (`>= far_radius`) pairs, estimated
/// over seeded random stumps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FamilySensitivity {
    pub p1: f64,
    pub p2: f64,
    pub r: f64,
    pub far_radius: f64,
}

impl FamilySensitivity {
    /// Monte Carlo estimate over `n_stumps` seeded stumps and all dataset
    /// pairs in each distance class. A class with no pairs reports 1.0 for
    /// p1 (vacuous) and 0.0 for p2.
    pub fn estimate(
        codes: &BTreeMap<ItemId, ImageCode>,
        r: f64,
        far_radius: f64,
        n_stumps: u32,
        seed: u64,
    ) -> Result<FamilySensitivity> {
        let (dim, bounds) = fit_bounds(codes)?;
        let items: Vec<&ImageCode> = codes.values().collect();
        let mut near = Vec::new();
        let mut far = Vec::new();
        for i in 0..items.len() {
            for j in (i + 1)..items.len() {
                let d = l1_distance(items[i], items[j])?;
                if d <= r {
                    near.push((i, j));
                }
                if d >= far_radius {
                    far.push((i, j));
                }
            }
        }
        let mut rng = SeededRng::new(seed);
        let mut near_hits = 0u64;
        let mut far_hits = 0u64;
        for _ in 0..n_stumps {
            let stump = draw_stump(&mut rng, dim, &bounds);
            for &(i, j) in &near {
                if stump.bit(items[i])? == stump.bit(items[j])? {
                    near_hits += 1;
                }
            }
            for &(i, j) in &far {
                if stump.bit(items[i])? == stump.bit(items[j])? {
                    far_hits += 1;
                }
            }
        }
        let rate = |hits: u64, pairs: usize, empty: f64| {
            if pairs == 0 {
                empty
            } else {
                hits as f64 / (pairs as u64 * n_stumps as u64) as f64
            }
        };
        Ok(FamilySensitivity {
            p1: rate(near_hits, near.len(), 1.0),
            p2: rate(far_hits, far.len(), 0.0),
            r,
            far_radius,
        })
    }
}

/// The fitted index: `l` hash tables of k-bit keys over a code store.
#[derive(Debug, Clone)]
pub struct LshIndex {
    k: u32,
    l: u32,
    seed: u64,
    dim: usize,
    bounds: Vec<(f64, f64)>,
    functions: Vec<CompositeHash>,
    tables: Vec<HashMap<u64, Vec<ItemId>>>,
    codes: BTreeMap<ItemId, ImageCode>,
}

fn fit_bounds(codes: &BTreeMap<ItemId, ImageCode>) -> Result<(usize, Vec<(f64, f64)>)> {
    let first = codes.values().next().ok_or(Error::EmptyDataset)?;
    let dim = first.dim();
    let mut bounds = vec![(f64::INFINITY, f64::NEG_INFINITY); dim];
    for code in codes.values() {
        if code.dim() != dim {
            return Err(Error::MixedDimensions);
        }
        for (b, &v) in bounds.iter_mut().zip(code.values()) {
            b.0 = b.0.min(v);
            b.1 = b.1.max(v);
        }
    }
    Ok((dim, bounds))
}

fn draw_stump(rng: &mut SeededRng, dim: usize, bounds: &[(f64, f64)]) -> StumpHash {
    let dim_index = rng.uniform_index(dim);
    let (lo, hi) = bounds[dim_index];
    StumpHash {
        dim_index,
        threshold: rng.uniform_in(lo, hi),
    }
}

impl LshIndex {
    /// Fits `l` composite functions of `k` stumps each over the dataset and
    /// inserts every code into every table. Stumps draw a dimension uniformly
    /// and a threshold uniformly within that dimension's dataset range;
    /// tables are drawn in order from the seeded stream (prefix property).
    pub fn fit(codes: BTreeMap<ItemId, ImageCode>, k: u32, l: u32, seed: u64) -> Result<Self> {
        assert!(k >= 1 && l >= 1, "k and l must be at least 1");
        assert!(k <= 64, "keys are stored in 64 bits");
        let (dim, bounds) = fit_bounds(&codes)?;

        let mut rng = SeededRng::new(seed);
        let functions: Vec<CompositeHash> = (0..l)
            .map(|_| {
                CompositeHash::new((0..k).map(|_| draw_stump(&mut rng, dim, &bounds)).collect())
            })
            .collect();

        Self::build(codes, k, l, seed, dim, bounds, functions)
    }

    /// Builds an index from explicitly supplied hash functions. Used by
    /// diagnostics and tests, e.g. to force exhaustive co-bucketing with a
    /// single stump whose threshold exceeds the data range.
    pub fn with_functions(
        codes: BTreeMap<ItemId, ImageCode>,
        functions: Vec<CompositeHash>,
    ) -> Result<Self> {
        assert!(!functions.is_empty(), "need at least one hash function");
        let k = functions[0].k();
        assert!(
            functions.iter().all(|g| g.k() == k),
            "all functions must share k"
        );
        let l = functions.len() as u32;
        let (dim, bounds) = fit_bounds(&codes)?;
        Self::build(codes, k, l, 0, dim, bounds, functions)
    }

    fn build(
        codes: BTreeMap<ItemId, ImageCode>,
        k: u32,
        l: u32,
        seed: u64,
        dim: usize,
        bounds: Vec<(f64, f64)>,
        functions: Vec<CompositeHash>,
    ) -> Result<Self> {
        let mut tables: Vec<HashMap<u64, Vec<ItemId>>> = vec![HashMap::new(); l as usize];
        for (table, g) in tables.iter_mut().zip(&functions) {
            // BTreeMap iteration is id-ascending, so buckets stay sorted.
            for (&id, code) in &codes {
                table.entry(g.key(code)?).or_default().push(id);
            }
        }
        Ok(LshIndex {
            k,
            l,
            seed,
            dim,
            bounds,
            functions,
            tables,
            codes,
        })
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn l(&self) -> u32 {
        self.l
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    /// Per-dimension `(min, max)` over the fitted dataset.
    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn functions(&self) -> &[CompositeHash] {
        &self.functions
    }

    pub fn codes(&self) -> &BTreeMap<ItemId, ImageCode> {
        &self.codes
    }

    fn check_dim(&self, q: &ImageCode) -> Result<()> {
        if q.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: q.dim(),
            });
        }
        Ok(())
    }

    /// Union of the buckets matching `q` across all tables. May be empty.
    pub fn candidates(&self, q: &ImageCode) -> Result<BTreeSet<ItemId>> {
        self.check_dim(q)?;
        let mut out = BTreeSet::new();
        for (table, g) in self.tables.iter().zip(&self.functions) {
            if let Some(bucket) = table.get(&g.key(q)?) {
                out.extend(bucket.iter().copied());
            }
        }
        Ok(out)
    }

    /// Candidates with exact L1 distance at most `(1 + epsilon) * radius`,
    /// ascending by distance then id. An empty candidate union is an error;
    /// a nonempty union with no match inside the radius is an empty list.
    pub fn query_radius(&self, q: &ImageCode, params: &QueryParams) -> Result<Vec<(ItemId, f64)>> {
        debug_assert!(params.radius >= 0.0 && params.epsilon >= 0.0);
        let cands = self.candidates(q)?;
        if cands.is_empty() {
            return Err(Error::EmptyCandidates);
        }
        let cutoff = (1.0 + params.epsilon) * params.radius;
        let mut out = Vec::new();
        for id in cands {
            let d = l1_distance(&self.codes[&id], q)?;
            if d <= cutoff {
                out.push((id, d));
            }
        }
        out.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        Ok(out)
    }

    /// Minimum-distance candidate, ties to the lowest id. With `fallback`
    /// an empty candidate union degrades to exact search over all codes;
    /// without it, the empty union is reported as an error.
    pub fn query_nearest(&self, q: &ImageCode, fallback: bool) -> Result<(ItemId, f64)> {
        let cands = self.candidates(q)?;
        if cands.is_empty() {
            return if fallback {
                brute_force_nn(&self.codes, q)
            } else {
                Err(Error::EmptyCandidates)
            };
        }
        let mut best: Option<(ItemId, f64)> = None;
        for id in cands {
            let d = l1_distance(&self.codes[&id], q)?;
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((id, d));
            }
        }
        Ok(best.expect("nonempty candidates"))
    }

    /// Bucket sizes per table, for occupancy diagnostics.
    pub fn bucket_sizes(&self) -> Vec<Vec<usize>> {
        self.tables
            .iter()
            .map(|t| {
                let mut sizes: Vec<usize> = t.values().map(Vec::len).collect();
                sizes.sort_unstable();
                sizes
            })
            .collect()
    }

    /// Writes the index as a versioned JSON archive. Tables are rebuilt on
    /// load from the stored functions and codes, which reproduces them
    /// exactly.
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = IndexFile {
            format: INDEX_FORMAT.into(),
            version: INDEX_VERSION,
            seed: self.seed,
            k: self.k,
            l: self.l,
            dim: self.dim,
            bounds: self.bounds.clone(),
            functions: self.functions.clone(),
            items: self
                .codes
                .iter()
                .map(|(&id, c)| (id, c.values().to_vec()))
                .collect(),
        };
        let out = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer(BufWriter::new(out), &file)
            .map_err(|e| Error::parse(path, e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let input = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let file: IndexFile = serde_json::from_reader(BufReader::new(input))
            .map_err(|e| Error::parse(path, e.to_string()))?;
        if file.format != INDEX_FORMAT || file.version != INDEX_VERSION {
            return Err(Error::parse(
                path,
                format!(
                    "unsupported index archive {} v{}",
                    file.format, file.version
                ),
            ));
        }
        let codes: BTreeMap<ItemId, ImageCode> = file
            .items
            .into_iter()
            .map(|(id, values)| (id, ImageCode::new(values)))
            .collect();
        let index = Self::build(
            codes,
            file.k,
            file.l,
            file.seed,
            file.dim,
            file.bounds,
            file.functions,
        )?;
        Ok(index)
    }
}

const INDEX_FORMAT: &str = "hashseg-lsh-index";
const INDEX_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct IndexFile {
    format: String,
    version: u32,
    seed: u64,
    k: u32,
    l: u32,
    dim: usize,
    bounds: Vec<(f64, f64)>,
    functions: Vec<CompositeHash>,
    items: Vec<(ItemId, Vec<f64>)>,
}

/// Exact nearest neighbor by linear scan; ties to the lowest id.
pub fn brute_force_nn(codes: &BTreeMap<ItemId, ImageCode>, q: &ImageCode) -> Result<(ItemId, f64)> {
    let mut best: Option<(ItemId, f64)> = None;
    for (&id, code) in codes {
        let d = l1_distance(code, q)?;
        if best.is_none_or(|(_, bd)| d < bd) {
            best = Some((id, d));
        }
    }
    best.ok_or(Error::EmptyDataset)
}

/// Exact probability that one random stump assigns `x` and `y` the same bit:
/// the mean over dimensions of `1 - |x_d - y_d| / width_d`, where a
/// zero-width dimension always collides. For components outside the fitted
/// bounds the separating interval is clipped to the threshold range, which
/// keeps the value a probability.
pub fn stump_collision_probability(
    x: &ImageCode,
    y: &ImageCode,
    bounds: &[(f64, f64)],
) -> Result<f64> {
    if x.dim() != y.dim() || x.dim() != bounds.len() {
        return Err(Error::DimensionMismatch {
            expected: bounds.len(),
            got: if x.dim() != bounds.len() { x.dim() } else { y.dim() },
        });
    }
    let mut total = 0.0;
    for ((&xv, &yv), &(lo, hi)) in x.values().iter().zip(y.values()).zip(bounds) {
        let width = hi - lo;
        if width <= 0.0 {
            total += 1.0;
            continue;
        }
        let a = xv.min(yv).max(lo);
        let b = xv.max(yv).min(hi);
        let separating = (b - a).max(0.0);
        total += 1.0 - separating / width;
    }
    Ok(total / x.dim() as f64)
}
