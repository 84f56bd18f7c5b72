//! Johnson-Lindenstrauss sign projections over a candidate node set.
//!
//! Entries are stored as small integers with one shared scale so that the
//! subtree aggregates built from them stay exact integers.

use std::ops::AddAssign;

use rand::Rng;

use crate::error::{CfcmError, Result};
use crate::graph::NONE;

#[derive(Debug, Clone, PartialEq)]
enum Entries {
    Identity,
    /// Column-major `w x cols`.
    Signs(Vec<i8>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct JlProjector {
    w: usize,
    candidates: Vec<usize>,
    col_of: Vec<usize>,
    entries: Entries,
    scale: f64,
}

/// Sketch width that gives relative accuracy `eps` for `n` columns:
/// `ceil(24 (eps/7)^-2 ln n)`.
pub fn jl_dimension(eps: f64, n: usize) -> usize {
    let e = eps / 7.0;
    (24.0 / (e * e) * (n.max(2) as f64).ln()).ceil() as usize
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ProjectorMode {
    /// Identity when there are no more candidates than the capped sketch
    /// width (no reduction needed), random signs otherwise.
    #[default]
    Auto,
    /// Always the identity; sketches become exact columns.
    Identity,
    /// Always random signs of the capped width.
    Random,
}

pub const DEFAULT_MAX_SKETCH_DIM: usize = 64;

fn column_index(candidates: &[usize], n: usize) -> Result<Vec<usize>> {
    let mut col_of = vec![NONE; n];
    for (c, &u) in candidates.iter().enumerate() {
        if u >= n {
            return Err(CfcmError::NodeOutOfRange { node: u, n });
        }
        if col_of[u] != NONE {
            return Err(CfcmError::invalid(format!("candidate {u} listed twice")));
        }
        col_of[u] = c;
    }
    Ok(col_of)
}

impl JlProjector {
    pub fn identity(candidates: &[usize], n: usize) -> Result<Self> {
        Ok(JlProjector {
            w: candidates.len(),
            col_of: column_index(candidates, n)?,
            candidates: candidates.to_vec(),
            entries: Entries::Identity,
            scale: 1.0,
        })
    }

    /// Random `w x |candidates|` matrix with entries `+-1/sqrt(w)`.
    pub fn random<R: Rng>(candidates: &[usize], n: usize, w: usize, rng: &mut R) -> Result<Self> {
        if w == 0 {
            return Err(CfcmError::invalid("sketch width must be positive"));
        }
        let signs = (0..w * candidates.len())
            .map(|_| if rng.random::<bool>() { 1i8 } else { -1 })
            .collect();
        Self::from_signs(candidates, n, w, signs, 1.0 / (w as f64).sqrt())
    }

    /// Explicit entries `scale * signs[col * w + j]`.
    pub fn from_signs(candidates: &[usize], n: usize, w: usize, signs: Vec<i8>, scale: f64) -> Result<Self> {
        if signs.len() != w * candidates.len() {
            return Err(CfcmError::DimensionMismatch(format!(
                "{} entries for a {w} x {} projector",
                signs.len(),
                candidates.len()
            )));
        }
        Ok(JlProjector {
            w,
            col_of: column_index(candidates, n)?,
            candidates: candidates.to_vec(),
            entries: Entries::Signs(signs),
            scale,
        })
    }

    /// Builds the projector for a round: `cap` bounds the width, and the
    /// identity is used whenever it is no wider than that.
    pub fn for_round<R: Rng>(
        mode: ProjectorMode,
        candidates: &[usize],
        n: usize,
        eps: f64,
        cap: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let w = jl_dimension(eps, n).min(cap.max(1));
        match mode {
            ProjectorMode::Identity => Self::identity(candidates, n),
            ProjectorMode::Auto if candidates.len() <= w => Self::identity(candidates, n),
            _ => Self::random(candidates, n, w, rng),
        }
    }

    pub fn w(&self) -> usize {
        self.w
    }

    pub fn cols(&self) -> usize {
        self.candidates.len()
    }

    pub fn candidates(&self) -> &[usize] {
        &self.candidates
    }

    /// Column of `node`, if it is a candidate.
    pub fn col(&self, node: usize) -> Option<usize> {
        match self.col_of.get(node) {
            Some(&c) if c != NONE => Some(c),
            _ => None,
        }
    }

    pub fn is_identity(&self) -> bool {
        self.entries == Entries::Identity
    }

    /// Multiplier applied to integer entries.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Integer entry `(j, col)`, before scaling.
    pub fn raw(&self, j: usize, col: usize) -> i64 {
        match &self.entries {
            Entries::Identity => (j == col) as i64,
            Entries::Signs(s) => s[col * self.w + j] as i64,
        }
    }

    pub fn entry(&self, j: usize, col: usize) -> f64 {
        self.raw(j, col) as f64 * self.scale
    }

    /// Adds the integer column of `node` (if a candidate) into `buf`.
    pub fn add_column<T: From<i8> + AddAssign>(&self, node: usize, buf: &mut [T]) {
        let Some(c) = self.col(node) else { return };
        match &self.entries {
            Entries::Identity => buf[c] += T::from(1),
            Entries::Signs(s) => {
                for (b, &x) in buf.iter_mut().zip(&s[c * self.w..(c + 1) * self.w]) {
                    *b += T::from(x);
                }
            }
        }
    }

    /// Scaled column of `node` as a dense vector.
    pub fn column(&self, node: usize) -> Vec<f64> {
        let mut buf = vec![0i64; self.w];
        self.add_column(node, &mut buf);
        buf.into_iter().map(|x| x as f64 * self.scale).collect()
    }
}
