//! Named per-node parameter vectors with trainable/frozen flags.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use rand::Rng;
use std::io::{Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"PTB1";

/// A dense (n x d) matrix of node parameters, row-addressed by node id, with
/// a parallel list of node names and per-row trainable flags.
///
/// Gradients use the same type so loss functions can return "a table shaped
/// like the parameters".
#[derive(Debug, Clone, PartialEq)]
pub struct ParamTable<S> {
    names: Vec<String>,
    dim: usize,
    data: Vec<S>,
    trainable: Vec<bool>,
}

impl<S: Scalar> ParamTable<S> {
    pub fn zeros(names: Vec<String>, dim: usize) -> Self {
        assert!(dim >= 1, "dimension must be at least 1");
        let n = names.len();
        Self {
            names,
            dim,
            data: vec![S::zero(); n * dim],
            trainable: vec![true; n],
        }
    }

    /// Same shape and names, all entries zero. Trainable flags are copied so
    /// gradients inherit the frozen pattern.
    pub fn zeros_like(other: &Self) -> Self {
        Self {
            names: other.names.clone(),
            dim: other.dim,
            data: vec![S::zero(); other.data.len()],
            trainable: other.trainable.clone(),
        }
    }

    /// Skip-gram style init: every coordinate uniform in [-1/(2d), 1/(2d)].
    ///
    /// Draws happen in f64 so f32 and f64 tables see the same sequence.
    pub fn uniform_init(names: Vec<String>, dim: usize, rng: &mut impl Rng) -> Self {
        let mut t = Self::zeros(names, dim);
        let half = 1.0 / (2.0 * dim as f64);
        for v in &mut t.data {
            *v = S::from_real(rng.random_range(-half..half));
        }
        t
    }

    pub fn from_rows(names: Vec<String>, rows: &[Vec<f64>]) -> Result<Self> {
        if names.len() != rows.len() {
            return Err(Error::Config(format!(
                "{} names but {} rows",
                names.len(),
                rows.len()
            )));
        }
        let dim = rows.first().map(Vec::len).unwrap_or(1);
        let mut t = Self::zeros(names, dim.max(1));
        for (i, row) in rows.iter().enumerate() {
            if row.len() != dim {
                return Err(Error::DimMismatch {
                    expected: dim,
                    got: row.len(),
                });
            }
            for (j, &v) in row.iter().enumerate() {
                t.data[i * dim + j] = S::from_real(v);
            }
        }
        Ok(t)
    }

    pub fn n_rows(&self) -> usize {
        self.names.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, row: usize) -> &str {
        &self.names[row]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn row(&self, i: usize) -> &[S] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [S] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn set_row(&mut self, i: usize, values: &[S]) {
        assert_eq!(values.len(), self.dim);
        self.row_mut(i).copy_from_slice(values);
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    pub fn is_trainable(&self, row: usize) -> bool {
        self.trainable[row]
    }

    pub fn set_trainable(&mut self, row: usize, flag: bool) {
        self.trainable[row] = flag;
    }

    pub fn freeze_all(&mut self) {
        self.trainable.fill(false);
    }

    pub fn trainable_rows(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.n_rows()).filter(|&i| self.trainable[i])
    }

    /// Errors if any entry is NaN or infinite.
    pub fn check_finite(&self) -> Result<()> {
        for (i, v) in self.data.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::Config(format!(
                    "non-finite value {v} in row {} ({})",
                    i / self.dim,
                    self.names[i / self.dim]
                )));
            }
        }
        Ok(())
    }

    /// In-place SGD step on trainable rows: row -= lr * grad_row.
    pub fn step(&mut self, grad: &Self, lr: S) {
        assert_eq!(self.dim, grad.dim);
        assert_eq!(self.n_rows(), grad.n_rows());
        for i in 0..self.n_rows() {
            if !self.trainable[i] {
                continue;
            }
            let base = i * self.dim;
            for j in 0..self.dim {
                let g = grad.data[base + j];
                self.data[base + j] = self.data[base + j] - lr * g;
            }
        }
    }

    /// Global L2 norm over trainable rows.
    pub fn trainable_norm(&self) -> S {
        let mut acc = S::zero();
        for i in self.trainable_rows() {
            for &v in self.row(i) {
                acc += v * v;
            }
        }
        acc.sqrt()
    }

    /// Scales trainable rows so the global norm is at most `max_norm`.
    pub fn clip_trainable(&mut self, max_norm: S) {
        let norm = self.trainable_norm();
        if norm > max_norm && norm > S::zero() {
            let scale = max_norm / norm;
            for i in 0..self.n_rows() {
                if !self.trainable[i] {
                    continue;
                }
                for v in self.row_mut(i) {
                    *v = *v * scale;
                }
            }
        }
    }

    // --- serialization ---

    /// Binary format: magic, n, d as u64 LE, per row (name length u32 LE,
    /// UTF-8 name, trainable u8), then n*d entries as f64 LE bits.
    /// Round-trips bit-exactly for f32 and f64 tables.
    pub fn save_binary(&self, w: &mut impl Write) -> Result<()> {
        self.check_finite()?;
        w.write_all(MAGIC)?;
        w.write_all(&(self.n_rows() as u64).to_le_bytes())?;
        w.write_all(&(self.dim as u64).to_le_bytes())?;
        for (name, &flag) in self.names.iter().zip(&self.trainable) {
            w.write_all(&(name.len() as u32).to_le_bytes())?;
            w.write_all(name.as_bytes())?;
            w.write_all(&[u8::from(flag)])?;
        }
        for &v in &self.data {
            w.write_all(&v.to_real().to_bits().to_le_bytes())?;
        }
        Ok(())
    }

    pub fn load_binary(r: &mut impl Read) -> Result<Self> {
        let bad = |msg: &str| Error::Config(format!("param table: {msg}"));
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(bad("bad magic"));
        }
        let mut u64buf = [0u8; 8];
        r.read_exact(&mut u64buf)?;
        let n = u64::from_le_bytes(u64buf) as usize;
        r.read_exact(&mut u64buf)?;
        let dim = u64::from_le_bytes(u64buf) as usize;
        if dim == 0 || n == 0 {
            return Err(bad("empty table"));
        }
        let mut names = Vec::with_capacity(n);
        let mut trainable = Vec::with_capacity(n);
        for _ in 0..n {
            let mut lenbuf = [0u8; 4];
            r.read_exact(&mut lenbuf)?;
            let len = u32::from_le_bytes(lenbuf) as usize;
            let mut namebuf = vec![0u8; len];
            r.read_exact(&mut namebuf)?;
            names.push(String::from_utf8(namebuf).map_err(|_| bad("name not UTF-8"))?);
            let mut flag = [0u8; 1];
            r.read_exact(&mut flag)?;
            trainable.push(flag[0] != 0);
        }
        let mut data = Vec::with_capacity(n * dim);
        for _ in 0..n * dim {
            r.read_exact(&mut u64buf)?;
            data.push(S::from_real(f64::from_bits(u64::from_le_bytes(u64buf))));
        }
        let mut trailing = [0u8; 1];
        if r.read(&mut trailing)? != 0 {
            return Err(bad("trailing bytes after data"));
        }
        Ok(Self {
            names,
            dim,
            data,
            trainable,
        })
    }

    /// Text format: `paramtable n=<n> d=<d>` header, then one `<name> <v_1>
    /// ... <v_d>` line per row. Values print in shortest round-trip form.
    /// Trainable flags are not stored; loaded rows are all trainable.
    pub fn save_text(&self, w: &mut impl Write) -> Result<()> {
        self.check_finite()?;
        writeln!(w, "paramtable n={} d={}", self.n_rows(), self.dim)?;
        for i in 0..self.n_rows() {
            write!(w, "{}", self.names[i])?;
            for &v in self.row(i) {
                write!(w, " {:?}", v.to_real())?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn load_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or(Error::Parse { line: 1, msg: "empty file".into() })?;
        let parse_kv = |tok: &str, key: &str, line: usize| -> Result<usize> {
            tok.strip_prefix(key)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| Error::Parse {
                    line,
                    msg: format!("expected {key}<int>, got {tok:?}"),
                })
        };
        let mut toks = header.split_whitespace();
        if toks.next() != Some("paramtable") {
            return Err(Error::Parse { line: 1, msg: "missing paramtable header".into() });
        }
        let n = parse_kv(toks.next().unwrap_or(""), "n=", 1)?;
        let dim = parse_kv(toks.next().unwrap_or(""), "d=", 1)?;
        let mut names = Vec::with_capacity(n);
        let mut data = Vec::with_capacity(n * dim);
        for _ in 0..n {
            let (lineno, line) = lines.next().ok_or_else(|| Error::Parse {
                line: n + 1,
                msg: "fewer rows than header declares".into(),
            })?;
            let mut toks = line.split_whitespace();
            let name = toks.next().ok_or_else(|| Error::Parse {
                line: lineno + 1,
                msg: "empty row".into(),
            })?;
            names.push(name.to_string());
            let mut count = 0;
            for tok in toks {
                let v: f64 = tok.parse().map_err(|_| Error::Parse {
                    line: lineno + 1,
                    msg: format!("bad number {tok:?}"),
                })?;
                data.push(S::from_real(v));
                count += 1;
            }
            if count != dim {
                return Err(Error::DimMismatch { expected: dim, got: count });
            }
        }
        for (lineno, line) in lines {
            if !line.trim().is_empty() {
                return Err(Error::Parse {
                    line: lineno + 1,
                    msg: "trailing content after declared rows".into(),
                });
            }
        }
        Ok(Self {
            trainable: vec![true; names.len()],
            names,
            dim,
            data,
        })
    }

    pub fn save_binary_path(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.save_binary(&mut f)
    }

    pub fn load_binary_path(path: impl AsRef<Path>) -> Result<Self> {
        let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
        Self::load_binary(&mut f)
    }

    pub fn save_text_path(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.save_text(&mut f)
    }

    pub fn load_text_path(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::load_text(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("n{i}")).collect()
    }

    #[test]
    fn uniform_init_respects_range_and_seed() {
        let mut r1 = ChaCha8Rng::seed_from_u64(3);
        let mut r2 = ChaCha8Rng::seed_from_u64(3);
        let a: ParamTable<f64> = ParamTable::uniform_init(names(5), 4, &mut r1);
        let b: ParamTable<f64> = ParamTable::uniform_init(names(5), 4, &mut r2);
        assert_eq!(a, b);
        let half = 1.0 / 8.0;
        for &v in a.data() {
            assert!(v.abs() <= half);
        }
    }

    #[test]
    fn f32_and_f64_init_draw_the_same_sequence() {
        let mut r1 = ChaCha8Rng::seed_from_u64(9);
        let mut r2 = ChaCha8Rng::seed_from_u64(9);
        let a: ParamTable<f64> = ParamTable::uniform_init(names(3), 2, &mut r1);
        let b: ParamTable<f32> = ParamTable::uniform_init(names(3), 2, &mut r2);
        for (x, y) in a.data().iter().zip(b.data()) {
            assert_eq!(*x as f32, *y);
        }
    }

    #[test]
    fn binary_round_trip_is_bit_exact() {
        let mut t: ParamTable<f64> =
            ParamTable::from_rows(names(3), &[vec![0.1, -0.0], vec![1e-300, 3.5], vec![
                std::f64::consts::PI,
                -2.2250738585072014e-308,
            ]])
            .unwrap();
        t.set_trainable(1, false);
        let mut buf = Vec::new();
        t.save_binary(&mut buf).unwrap();
        let back: ParamTable<f64> = ParamTable::load_binary(&mut buf.as_slice()).unwrap();
        assert_eq!(t.names(), back.names());
        assert!(!back.is_trainable(1) && back.is_trainable(0));
        for (a, b) in t.data().iter().zip(back.data()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn binary_round_trip_f32() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t: ParamTable<f32> = ParamTable::uniform_init(names(4), 3, &mut rng);
        let mut buf = Vec::new();
        t.save_binary(&mut buf).unwrap();
        let back: ParamTable<f32> = ParamTable::load_binary(&mut buf.as_slice()).unwrap();
        for (a, b) in t.data().iter().zip(back.data()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn truncated_binary_is_rejected() {
        let t: ParamTable<f64> = ParamTable::zeros(names(2), 2);
        let mut buf = Vec::new();
        t.save_binary(&mut buf).unwrap();
        buf.truncate(buf.len() - 3);
        assert!(ParamTable::<f64>::load_binary(&mut buf.as_slice()).is_err());
        buf.clear();
        t.save_binary(&mut buf).unwrap();
        buf.push(0);
        assert!(ParamTable::<f64>::load_binary(&mut buf.as_slice()).is_err());
    }

    #[test]
    fn text_round_trip_preserves_f64_values() {
        let t: ParamTable<f64> =
            ParamTable::from_rows(names(2), &[vec![0.1, 2.0 / 3.0], vec![-1.5, 4e-17]]).unwrap();
        let mut buf = Vec::new();
        t.save_text(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let back: ParamTable<f64> = ParamTable::load_text(&text).unwrap();
        assert_eq!(t.data(), back.data());
        assert_eq!(t.names(), back.names());
    }

    #[test]
    fn text_rejects_trailing_garbage_and_bad_rows() {
        assert!(ParamTable::<f64>::load_text("paramtable n=1 d=2\na 1.0 2.0\nstray\n").is_err());
        assert!(ParamTable::<f64>::load_text("paramtable n=1 d=2\na 1.0\n").is_err());
        assert!(ParamTable::<f64>::load_text("not-a-header\n").is_err());
    }

    #[test]
    fn step_skips_frozen_rows() {
        let mut t: ParamTable<f64> =
            ParamTable::from_rows(names(2), &[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        t.set_trainable(0, false);
        let g = ParamTable::from_rows(names(2), &[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        t.step(&g, 0.5);
        assert_eq!(t.row(0), &[1.0, 1.0]);
        assert_eq!(t.row(1), &[0.5, 0.5]);
    }

    #[test]
    fn clip_caps_global_norm() {
        let mut g: ParamTable<f64> =
            ParamTable::from_rows(names(2), &[vec![3.0, 0.0], vec![0.0, 4.0]]).unwrap();
        g.clip_trainable(2.5);
        let norm = g.trainable_norm();
        assert!((norm - 2.5).abs() < 1e-12);
        // direction preserved
        assert!((g.row(0)[0] / g.row(1)[1] - 3.0 / 4.0).abs() < 1e-12);
    }

    #[test]
    fn check_finite_flags_nan() {
        let mut t: ParamTable<f64> = ParamTable::zeros(names(2), 2);
        t.row_mut(1)[0] = f64::NAN;
        assert!(t.check_finite().is_err());
    }
}
