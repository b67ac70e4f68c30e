use std::io::Write;

use crate::{Error, Real, Result};

/// Candidate models forming both the state and the action set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MdpSpace {
    candidates: Vec<usize>,
}

impl MdpSpace {
    /// `candidates` are pool column indices; at least two, all distinct.
    pub fn new(candidates: Vec<usize>) -> Result<Self> {
        if candidates.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "need at least 2 candidate models, got {}",
                candidates.len()
            )));
        }
        for (i, c) in candidates.iter().enumerate() {
            if candidates[..i].contains(c) {
                return Err(Error::InvalidInput(format!("duplicate candidate model {c}")));
            }
        }
        Ok(MdpSpace { candidates })
    }

    /// `0..n` as the candidate set.
    pub fn indices(n: usize) -> Result<Self> {
        Self::new((0..n).collect())
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn candidates(&self) -> &[usize] {
        &self.candidates
    }

    /// Pool column of the model behind state/action `k`.
    pub fn model(&self, k: usize) -> usize {
        self.candidates[k]
    }

    /// State/action index of a pool column, if it is a candidate.
    pub fn position(&self, model: usize) -> Option<usize> {
        self.candidates.iter().position(|&c| c == model)
    }
}

/// I×I state-action values, row = state, column = action.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable<T> {
    space: MdpSpace,
    values: Vec<T>,
}

impl<T: Real> QTable<T> {
    pub fn zeros(space: MdpSpace) -> Self {
        let n = space.len();
        QTable {
            space,
            values: vec![T::zero(); n * n],
        }
    }

    /// Table from explicit rows (square, matching the space).
    pub fn from_rows(space: MdpSpace, rows: &[Vec<T>]) -> Result<Self> {
        let n = space.len();
        if rows.len() != n || rows.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidInput(format!("Q-table must be {n}x{n}")));
        }
        Ok(QTable {
            space,
            values: rows.iter().flatten().copied().collect(),
        })
    }

    pub fn space(&self) -> &MdpSpace {
        &self.space
    }

    pub fn size(&self) -> usize {
        self.space.len()
    }

    pub fn get(&self, s: usize, a: usize) -> T {
        self.values[s * self.size() + a]
    }

    pub fn set(&mut self, s: usize, a: usize, v: T) {
        let n = self.size();
        self.values[s * n + a] = v;
    }

    pub fn row(&self, s: usize) -> &[T] {
        let n = self.size();
        &self.values[s * n..(s + 1) * n]
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn sum(&self) -> T {
        self.values.iter().copied().sum()
    }

    /// Largest value in row `s`.
    pub fn max_value(&self, s: usize) -> T {
        self.row(s)
            .iter()
            .copied()
            .fold(T::neg_infinity(), |m, v| if v > m { v } else { m })
    }

    /// Argmax over actions from state `s`; ties go to the lowest index.
    pub fn greedy(&self, s: usize) -> usize {
        let row = self.row(s);
        let mut best = 0;
        for (a, &v) in row.iter().enumerate().skip(1) {
            if v > row[best] {
                best = a;
            }
        }
        best
    }

    /// Greedy action for every state.
    pub fn policy(&self) -> Vec<usize> {
        (0..self.size()).map(|s| self.greedy(s)).collect()
    }

    /// CSV with one row per state and one column per action, labelled by model id.
    pub fn write_csv<W: Write>(&self, model_ids: &[String], mut w: W) -> Result<()> {
        let label = |k: usize| {
            model_ids
                .get(self.space.model(k))
                .cloned()
                .unwrap_or_else(|| format!("M{}", self.space.model(k) + 1))
        };
        let n = self.size();
        write!(w, "state")?;
        for a in 0..n {
            write!(w, ",{}", label(a))?;
        }
        writeln!(w)?;
        for s in 0..n {
            write!(w, "{}", label(s))?;
            for a in 0..n {
                write!(w, ",{}", self.get(s, a))?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// One temporal-difference step:
/// `Q(s,a) <- (1-alpha) Q(s,a) + alpha [r + gamma max_a' Q(s_next, a')]`.
pub fn q_update<T: Real>(
    q: &mut QTable<T>,
    s: usize,
    a: usize,
    reward: T,
    s_next: usize,
    alpha: T,
    gamma: T,
) -> Result<()> {
    let n = q.size();
    if s >= n || a >= n || s_next >= n {
        return Err(Error::IndexOutOfRange(format!(
            "(s={s}, a={a}, s'={s_next}) on a {n}x{n} table"
        )));
    }
    let target = reward + gamma * q.max_value(s_next);
    let v = (T::one() - alpha) * q.get(s, a) + alpha * target;
    q.set(s, a, v);
    Ok(())
}
