//! Blocked pairwise cosine kernel over a gathered subset of embedding rows.
//!
//! Rows are widened to f64 once and dot products are accumulated in the same
//! order as [`crate::model::cosine_similarity`], so a kernel score is
//! bit-identical to the scalar primitive on the same pair.

use std::ops::Range;

use crate::error::{Error, Result};
use crate::model::{norm, EmbeddingStore};

/// Rows per tile edge. Chosen so that two tiles of 768-d rows stay in L2.
pub const TILE: usize = 32;

#[derive(Debug, Clone)]
pub struct PackedRows {
    d: usize,
    data: Vec<f64>,
    norms: Vec<f64>,
}

impl PackedRows {
    /// Gathers `rows` of `store` in the given order. `labels` names each row in errors.
    pub fn gather(store: &EmbeddingStore, rows: &[usize], labels: &[&str]) -> Result<Self> {
        let d = store.d();
        let mut data = Vec::with_capacity(rows.len() * d);
        let mut norms = Vec::with_capacity(rows.len());
        for (k, &r) in rows.iter().enumerate() {
            let v = store.row(r);
            let nv = norm(v);
            if nv == 0.0 {
                return Err(Error::Degenerate(format!(
                    "zero-norm embedding for asset `{}`",
                    labels.get(k).copied().unwrap_or("?")
                )));
            }
            data.extend(v.iter().map(|&x| x as f64));
            norms.push(nv);
        }
        Ok(PackedRows { d, data, norms })
    }

    pub fn len(&self) -> usize {
        self.norms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.norms.is_empty()
    }

    #[inline]
    fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    #[inline]
    pub fn cosine(&self, i: usize, j: usize) -> f64 {
        let (a, b) = (self.row(i), self.row(j));
        let mut acc = 0.0f64;
        for k in 0..self.d {
            acc += a[k] * b[k];
        }
        acc / (self.norms[i] * self.norms[j])
    }

    /// Visits `(i, j, cosine)` for every `i` in `rows` and `j` in `cols`, tile by tile.
    /// `keep(i, j)` filters pairs before the dot product is computed.
    pub fn for_each_tile<K, F>(&self, rows: &[usize], cols: Range<usize>, keep: K, mut visit: F)
    where
        K: Fn(usize, usize) -> bool,
        F: FnMut(usize, usize, f64),
    {
        for row_tile in rows.chunks(TILE) {
            let mut c0 = cols.start;
            while c0 < cols.end {
                let c1 = (c0 + TILE).min(cols.end);
                for &i in row_tile {
                    for j in c0..c1 {
                        if keep(i, j) {
                            visit(i, j, self.cosine(i, j));
                        }
                    }
                }
                c0 = c1;
            }
        }
    }
}

/// Runs `f` on a dedicated pool when a worker count is given, else on the global pool.
pub(crate) fn with_workers<R: Send>(workers: Option<usize>, f: impl FnOnce() -> R + Send) -> R {
    match workers {
        Some(w) if w > 0 => match rayon::ThreadPoolBuilder::new().num_threads(w).build() {
            Ok(pool) => pool.install(f),
            Err(_) => f(),
        },
        _ => f(),
    }
}
