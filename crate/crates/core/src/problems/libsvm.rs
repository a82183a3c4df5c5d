//! LibSVM text-format ingestion and contiguous sharding.

use crate::error::{Result, SimError};
use crate::rng::{stream, Purpose};
use rand::Rng;
use std::io::BufRead;

/// One sample: binary label and sparse features (0-based indices, strictly
/// increasing).
#[derive(Debug, Clone, PartialEq)]
pub struct SparseRow {
    pub label: i8,
    pub features: Vec<(usize, f64)>,
}

impl SparseRow {
    /// `a^T x` against a dense vector that may be shorter than the row's
    /// largest index (missing coordinates count as zero).
    pub fn dot(&self, x: &nalgebra::DVector<f64>) -> f64 {
        self.features
            .iter()
            .filter(|(j, _)| *j < x.len())
            .map(|(j, v)| v * x[*j])
            .sum()
    }
}

#[derive(Debug, Clone, Default)]
pub struct LibSvmDataset {
    pub rows: Vec<SparseRow>,
    /// Feature dimension = largest 1-based index seen in the file.
    pub d: usize,
}

impl LibSvmDataset {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Parse LibSVM text: one `<label> <idx>:<val> ...` sample per line, `#`
/// starts a comment, 1-based indices must be strictly increasing within a
/// line. Binary label mapping: `+1`/`1` map to `+1`; `-1`/`0`/`2` map to `-1`;
/// anything else is rejected. Whitespace-only lines are skipped; a file with
/// no samples is an error.
pub fn parse_libsvm<R: BufRead>(reader: R) -> Result<LibSvmDataset> {
    let mut rows = Vec::new();
    let mut d = 0usize;
    for (line_idx, line) in reader.lines().enumerate() {
        let line_no = line_idx + 1;
        let line = line?;
        let content = match line.find('#') {
            Some(pos) => &line[..pos],
            None => &line[..],
        };
        let mut tokens = content.split_whitespace();
        let label_tok = match tokens.next() {
            Some(t) => t,
            None => continue,
        };
        let label = match label_tok {
            "+1" | "1" => 1i8,
            "-1" | "0" | "2" => -1i8,
            other => {
                return Err(SimError::Parse {
                    line: line_no,
                    msg: format!("unsupported label `{other}` (binary files only)"),
                })
            }
        };
        let mut features = Vec::new();
        let mut last_idx = 0usize;
        for tok in tokens {
            let (idx_str, val_str) = tok.split_once(':').ok_or_else(|| SimError::Parse {
                line: line_no,
                msg: format!("malformed feature token `{tok}`"),
            })?;
            let idx: usize = idx_str.parse().map_err(|_| SimError::Parse {
                line: line_no,
                msg: format!("bad feature index `{idx_str}`"),
            })?;
            if idx == 0 {
                return Err(SimError::Parse {
                    line: line_no,
                    msg: "feature indices are 1-based".into(),
                });
            }
            if idx <= last_idx {
                return Err(SimError::Parse {
                    line: line_no,
                    msg: format!("feature index {idx} is not strictly increasing"),
                });
            }
            let val: f64 = val_str.parse().map_err(|_| SimError::Parse {
                line: line_no,
                msg: format!("bad feature value `{val_str}`"),
            })?;
            last_idx = idx;
            features.push((idx - 1, val));
        }
        d = d.max(last_idx);
        rows.push(SparseRow { label, features });
    }
    if rows.is_empty() {
        return Err(SimError::Parse {
            line: 1,
            msg: "no samples in file".into(),
        });
    }
    Ok(LibSvmDataset { rows, d })
}

/// Split into `n` contiguous shards of `floor(m/n)` rows each, remainder
/// appended to the last shard. With `shuffle` a seeded permutation is applied
/// first; otherwise file order is kept.
pub fn shard(dataset: &LibSvmDataset, n: usize, shuffle: bool, seed: u64) -> Result<Vec<Vec<SparseRow>>> {
    let m = dataset.len();
    if n == 0 {
        return Err(SimError::InvalidParam("shard count must be >= 1".into()));
    }
    if m < n {
        return Err(SimError::InvalidParam(format!(
            "cannot split {m} rows into {n} shards"
        )));
    }
    let mut order: Vec<usize> = (0..m).collect();
    if shuffle {
        let mut rng = stream(seed, 0, 0, Purpose::Data);
        for i in (1..m).rev() {
            let j = rng.random_range(0..=i);
            order.swap(i, j);
        }
    }
    let base = m / n;
    let mut shards = Vec::with_capacity(n);
    for s in 0..n {
        let start = s * base;
        let end = if s + 1 == n { m } else { start + base };
        shards.push(order[start..end].iter().map(|&i| dataset.rows[i].clone()).collect());
    }
    Ok(shards)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<LibSvmDataset> {
        parse_libsvm(text.as_bytes())
    }

    #[test]
    fn dense_form_of_a_simple_row() {
        let ds = parse("+1 1:0.5 3:-2\n").unwrap();
        assert_eq!(ds.len(), 1);
        assert_eq!(ds.d, 3);
        assert_eq!(ds.rows[0].label, 1);
        assert_eq!(ds.rows[0].features, vec![(0, 0.5), (2, -2.0)]);
    }

    #[test]
    fn zero_label_maps_to_minus_one() {
        let ds = parse("0 2:1\n").unwrap();
        assert_eq!(ds.rows[0].label, -1);
        assert_eq!(ds.d, 2);
    }

    #[test]
    fn non_increasing_indices_are_rejected() {
        match parse("1 3:1 2:5\n") {
            Err(SimError::Parse { line, .. }) => assert_eq!(line, 1),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let ds = parse("# header\n+1 1:2 # trailing\n\n-1 2:3\n").unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.rows[1].label, -1);
    }

    #[test]
    fn empty_file_is_an_error() {
        assert!(parse("").is_err());
        assert!(parse("# only comments\n").is_err());
    }

    #[test]
    fn multiclass_labels_are_rejected() {
        match parse("+1 1:1\n3 1:1\n") {
            Err(SimError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn contiguous_shards_with_remainder_at_the_end() {
        let text: String = (0..10).map(|i| format!("+1 1:{i}\n")).collect();
        let ds = parse(&text).unwrap();
        let two = shard(&ds, 2, false, 0).unwrap();
        assert_eq!(two[0].len(), 5);
        assert_eq!(two[1].len(), 5);
        assert_eq!(two[0][0].features[0].1, 0.0);
        assert_eq!(two[1][0].features[0].1, 5.0);

        let three = shard(&ds, 3, false, 0).unwrap();
        assert_eq!(
            three.iter().map(Vec::len).collect::<Vec<_>>(),
            vec![3, 3, 4]
        );

        assert!(shard(&ds, 11, false, 0).is_err());
    }

    #[test]
    fn shuffled_shards_are_a_seeded_permutation() {
        let text: String = (0..12).map(|i| format!("+1 1:{i}\n")).collect();
        let ds = parse(&text).unwrap();
        let a = shard(&ds, 3, true, 7).unwrap();
        let b = shard(&ds, 3, true, 7).unwrap();
        assert_eq!(a, b);
        let mut all: Vec<f64> = a
            .iter()
            .flatten()
            .map(|r| r.features[0].1)
            .collect();
        all.sort_by(f64::total_cmp);
        assert_eq!(all, (0..12).map(|i| i as f64).collect::<Vec<_>>());
    }
}
