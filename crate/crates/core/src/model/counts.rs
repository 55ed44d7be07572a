use ndarray::Array2;

use crate::error::{Error, Result};

/// Row indices are stored as `u32`.
pub const MAX_VOCAB: usize = u32::MAX as usize;
/// Keeps the per-step offset table of a declared shape within reason.
pub const MAX_STEPS: usize = 1 << 24;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DataKind {
    Count,
    Binary,
}

/// A V×T matrix of nonnegative integer counts, stored column-sparse so that
/// each time step's nonzeros are contiguous.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CountMatrix {
    vocab: usize,
    steps: usize,
    col_ptr: Vec<usize>,
    rows: Vec<u32>,
    vals: Vec<u64>,
    kind: DataKind,
}

fn check_dims(vocab: usize, steps: usize) -> Result<()> {
    if vocab > MAX_VOCAB || steps > MAX_STEPS {
        return Err(Error::Shape(format!(
            "{vocab}x{steps} exceeds the supported {MAX_VOCAB}x{MAX_STEPS}"
        )));
    }
    Ok(())
}

impl CountMatrix {
    pub fn zeros(vocab: usize, steps: usize, kind: DataKind) -> Self {
        Self {
            vocab,
            steps,
            col_ptr: vec![0; steps + 1],
            rows: Vec::new(),
            vals: Vec::new(),
            kind,
        }
    }

    /// Build from a dense V×T array.
    pub fn from_dense(dense: &Array2<u64>, kind: DataKind) -> Result<Self> {
        let (vocab, steps) = dense.dim();
        check_dims(vocab, steps)?;
        let mut m = Self::zeros(vocab, steps, kind);
        for t in 0..steps {
            for v in 0..vocab {
                let x = dense[(v, t)];
                if x > 0 {
                    m.rows.push(v as u32);
                    m.vals.push(x);
                }
            }
            m.col_ptr[t + 1] = m.rows.len();
        }
        m.check_kind()?;
        Ok(m)
    }

    /// Build from `(v, t, count)` triplets; duplicate cells are summed.
    pub fn from_triplets(
        vocab: usize,
        steps: usize,
        triplets: impl IntoIterator<Item = (usize, usize, u64)>,
        kind: DataKind,
    ) -> Result<Self> {
        check_dims(vocab, steps)?;
        let mut cells: Vec<(usize, usize, u64)> = Vec::new();
        for (v, t, x) in triplets {
            if v >= vocab || t >= steps {
                return Err(Error::Shape(format!(
                    "triplet ({v},{t}) outside declared {vocab}x{steps}"
                )));
            }
            if x > 0 {
                cells.push((t, v, x));
            }
        }
        cells.sort_unstable_by_key(|&(t, v, _)| (t, v));
        let mut m = Self::zeros(vocab, steps, kind);
        let mut iter = cells.into_iter().peekable();
        for t in 0..steps {
            while let Some(&(ct, v, _)) = iter.peek() {
                if ct != t {
                    break;
                }
                let mut total = 0u64;
                while let Some(&(ct2, v2, x)) = iter.peek() {
                    if ct2 != t || v2 != v {
                        break;
                    }
                    total = total
                        .checked_add(x)
                        .ok_or_else(|| Error::domain("count overflow while summing duplicates"))?;
                    iter.next();
                }
                m.rows.push(v as u32);
                m.vals.push(total);
            }
            m.col_ptr[t + 1] = m.rows.len();
        }
        m.check_kind()?;
        Ok(m)
    }

    fn check_kind(&self) -> Result<()> {
        if self.kind == DataKind::Binary && self.vals.iter().any(|&x| x > 1) {
            return Err(Error::domain("binary matrix holds an entry greater than 1"));
        }
        Ok(())
    }

    pub fn with_kind(mut self, kind: DataKind) -> Result<Self> {
        self.kind = kind;
        self.check_kind()?;
        Ok(self)
    }

    pub fn vocab(&self) -> usize {
        self.vocab
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn kind(&self) -> DataKind {
        self.kind
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// Nonzero `(v, count)` pairs at time step `t`, ascending in `v`.
    pub fn column(&self, t: usize) -> impl Iterator<Item = (usize, u64)> + '_ {
        let (a, b) = (self.col_ptr[t], self.col_ptr[t + 1]);
        self.rows[a..b]
            .iter()
            .zip(&self.vals[a..b])
            .map(|(&v, &x)| (v as usize, x))
    }

    pub fn column_sum(&self, t: usize) -> u64 {
        self.column(t).map(|(_, x)| x).sum()
    }

    pub fn total(&self) -> u64 {
        self.vals.iter().sum()
    }

    pub fn get(&self, v: usize, t: usize) -> u64 {
        let (a, b) = (self.col_ptr[t], self.col_ptr[t + 1]);
        match self.rows[a..b].binary_search(&(v as u32)) {
            Ok(i) => self.vals[a + i],
            Err(_) => 0,
        }
    }

    pub fn dense_column(&self, t: usize) -> Vec<u64> {
        let mut out = vec![0; self.vocab];
        for (v, x) in self.column(t) {
            out[v] = x;
        }
        out
    }

    pub fn to_dense(&self) -> Array2<u64> {
        let mut out = Array2::zeros((self.vocab, self.steps));
        for t in 0..self.steps {
            for (v, x) in self.column(t) {
                out[(v, t)] = x;
            }
        }
        out
    }

    /// All `(v, t, count)` nonzeros in column-major order.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, u64)> + '_ {
        (0..self.steps).flat_map(move |t| self.column(t).map(move |(v, x)| (v, t, x)))
    }

    /// Contiguous time window `[start, start + len)`.
    pub fn window(&self, start: usize, len: usize) -> Result<Self> {
        if start + len > self.steps {
            return Err(Error::Index(format!(
                "window [{start}, {}) exceeds {} steps",
                start + len,
                self.steps
            )));
        }
        let a = self.col_ptr[start];
        let b = self.col_ptr[start + len];
        Ok(Self {
            vocab: self.vocab,
            steps: len,
            col_ptr: self.col_ptr[start..=start + len].iter().map(|p| p - a).collect(),
            rows: self.rows[a..b].to_vec(),
            vals: self.vals[a..b].to_vec(),
            kind: self.kind,
        })
    }

    /// The first `len` steps.
    pub fn truncate_steps(&self, len: usize) -> Result<Self> {
        self.window(0, len)
    }
}
