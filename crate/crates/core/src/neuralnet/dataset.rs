use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::DOF;

pub const INPUT_WIDTH: usize = 3 * DOF + 2;
pub const OUTPUT_WIDTH: usize = DOF;
pub const ROW_WIDTH: usize = INPUT_WIDTH + OUTPUT_WIDTH;

pub type Row = [f64; ROW_WIDTH];

/// Column names, in file order.
pub fn header() -> Vec<String> {
    let mut cols = Vec::with_capacity(ROW_WIDTH);
    for prefix in ["theta_d", "dtheta_d", "ddtheta_d"] {
        cols.extend((1..=DOF).map(|j| format!("{prefix}{j}")));
    }
    cols.push("height_in".into());
    cols.push("weight_lb".into());
    cols.extend((1..=DOF).map(|j| format!("tau{j}")));
    cols
}

/// Training rows: 23 inputs (desired position, velocity, acceleration,
/// height, weight) followed by 7 joint torques.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub rows: Vec<Row>,
}

impl Dataset {
    pub fn new(rows: Vec<Row>) -> Self {
        Dataset { rows }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn inputs(&self, i: usize) -> &[f64] {
        &self.rows[i][..INPUT_WIDTH]
    }

    pub fn targets(&self, i: usize) -> &[f64] {
        &self.rows[i][INPUT_WIDTH..]
    }

    pub fn extend(&mut self, other: Dataset) {
        self.rows.extend(other.rows);
    }

    pub fn to_csv(&self) -> String {
        let mut out = header().join(",");
        out.push('\n');
        for row in &self.rows {
            for (j, v) in row.iter().enumerate() {
                if j > 0 {
                    out.push(',');
                }
                write!(out, "{v}").unwrap();
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str, path: &Path) -> Result<Self> {
        let parse_err = |row: usize, column: usize, message: String| Error::Parse {
            path: path.to_path_buf(),
            row,
            column,
            message,
        };
        let mut lines = text.lines().enumerate();
        let Some((_, head)) = lines.next() else {
            return Ok(Dataset::default());
        };
        let expected = header();
        let got: Vec<&str> = head.split(',').map(str::trim).collect();
        if got.len() != expected.len() {
            return Err(parse_err(
                1,
                got.len().min(expected.len()) + 1,
                format!("header has {} columns, expected {}", got.len(), expected.len()),
            ));
        }
        if let Some(j) = got.iter().zip(&expected).position(|(g, e)| g != e) {
            return Err(parse_err(1, j + 1, format!("header column '{}' should be '{}'", got[j], expected[j])));
        }
        let mut rows = Vec::new();
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let mut row = [0.0; ROW_WIDTH];
            let mut n = 0;
            for (j, field) in line.split(',').enumerate() {
                if j >= ROW_WIDTH {
                    return Err(parse_err(i + 1, j + 1, "too many fields".into()));
                }
                let v: f64 =
                    field.trim().parse().map_err(|_| parse_err(i + 1, j + 1, format!("not a number: '{field}'")))?;
                if !v.is_finite() {
                    return Err(parse_err(i + 1, j + 1, "non-finite value".into()));
                }
                row[j] = v;
                n += 1;
            }
            if n != ROW_WIDTH {
                return Err(parse_err(i + 1, n + 1, format!("expected {ROW_WIDTH} fields, found {n}")));
            }
            rows.push(row);
        }
        Ok(Dataset { rows })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Dataset::from_csv(&text, path)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitDataset {
    pub train: Dataset,
    pub validation: Dataset,
    pub test: Dataset,
}

/// Shuffled 70/15/15 partition. Validation and test each take
/// `floor(15% of n)` rows; the remainder goes to training.
pub fn split_dataset(data: &Dataset, seed: u64) -> Result<SplitDataset> {
    let n = data.len();
    if n < 10 {
        return Err(Error::domain(format!("need at least 10 rows to split, got {n}")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_hold = n * 15 / 100;
    let take = |ids: &[usize]| Dataset::new(ids.iter().map(|&i| data.rows[i]).collect());
    Ok(SplitDataset {
        validation: take(&idx[..n_hold]),
        test: take(&idx[n_hold..2 * n_hold]),
        train: take(&idx[2 * n_hold..]),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_rows(n: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Dataset::new((0..n).map(|_| std::array::from_fn(|_| rng.gen_range(-1e3..1e3))).collect())
    }

    #[test]
    fn header_has_thirty_columns() {
        let h = header();
        assert_eq!(h.len(), 30);
        assert_eq!(h[21], "height_in");
        assert_eq!(h[29], "tau7");
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let data = random_rows(1000, 1);
        let back = Dataset::from_csv(&data.to_csv(), Path::new("mem")).unwrap();
        for (a, b) in data.rows.iter().zip(&back.rows) {
            for (u, v) in a.iter().zip(b) {
                assert!((u - v).abs() <= 1e-12 * u.abs().max(1.0));
            }
        }
        assert_eq!(back, data);
    }

    #[test]
    fn empty_file_is_empty_dataset() {
        assert!(Dataset::from_csv("", Path::new("e")).unwrap().is_empty());
        let only_header = header().join(",") + "\n";
        assert!(Dataset::from_csv(&only_header, Path::new("e")).unwrap().is_empty());
    }

    #[test]
    fn header_mismatch_rejected() {
        let mut h = header();
        h[4] = "bogus".into();
        let err = Dataset::from_csv(&h.join(","), Path::new("x.csv")).unwrap_err();
        assert!(matches!(err, Error::Parse { row: 1, column: 5, .. }), "{err}");
    }

    #[test]
    fn bad_field_reports_position() {
        let mut text = random_rows(3, 2).to_csv();
        text = text.replacen('\n', "\n", 1);
        let mut lines: Vec<String> = text.lines().map(String::from).collect();
        let mut fields: Vec<&str> = lines[2].split(',').collect();
        fields[6] = "abc";
        lines[2] = fields.join(",");
        let err = Dataset::from_csv(&lines.join("\n"), Path::new("x.csv")).unwrap_err();
        assert!(matches!(err, Error::Parse { row: 3, column: 7, .. }), "{err}");
        let short = format!("{}\n1,2,3\n", header().join(","));
        assert!(matches!(Dataset::from_csv(&short, Path::new("x.csv")), Err(Error::Parse { row: 2, column: 4, .. })));
    }

    #[test]
    fn split_sizes() {
        let s = split_dataset(&random_rows(100, 3), 0).unwrap();
        assert_eq!((s.train.len(), s.validation.len(), s.test.len()), (70, 15, 15));
        for n in (20..=2000).step_by(20) {
            let s = split_dataset(&random_rows(n, 4), 1).unwrap();
            assert_eq!(s.validation.len() * 100, n * 15);
            assert_eq!(s.test.len() * 100, n * 15);
            assert_eq!(s.train.len() * 100, n * 70);
        }
        let s = split_dataset(&random_rows(17, 5), 2).unwrap();
        assert_eq!((s.train.len(), s.validation.len(), s.test.len()), (13, 2, 2));
        assert!(split_dataset(&random_rows(9, 5), 2).is_err());
    }

    #[test]
    fn split_is_a_seeded_partition() {
        let data = random_rows(200, 6);
        let a = split_dataset(&data, 42).unwrap();
        assert_eq!(a, split_dataset(&data, 42).unwrap());
        assert_ne!(a, split_dataset(&data, 43).unwrap());
        let mut all: Vec<Row> = a.train.rows.iter().chain(&a.validation.rows).chain(&a.test.rows).copied().collect();
        let mut orig = data.rows.clone();
        let key = |r: &Row| r.map(f64::to_bits);
        all.sort_by_key(key);
        orig.sort_by_key(key);
        assert_eq!(all, orig);
    }
}
