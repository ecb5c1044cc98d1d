//! Binary-classification datasets: IDX loading, a two-Gaussian generator, and
//! node partitioning.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Features with labels in {−1, +1}.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<f64>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.first().map_or(0, Vec::len)
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            features: idx.iter().map(|&i| self.features[i].clone()).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    /// Contiguous split into `n` shards whose sizes differ by at most one.
    pub fn split_even(&self, n: usize) -> Vec<Dataset> {
        shard_sizes(self.len(), n)
            .into_iter()
            .scan(0, |start, m| {
                let idx: Vec<usize> = (*start..*start + m).collect();
                *start += m;
                Some(self.subset(&idx))
            })
            .collect()
    }

    pub fn count_label(&self, y: f64) -> usize {
        self.labels.iter().filter(|&&l| l == y).count()
    }
}

fn shard_sizes(total: usize, n: usize) -> Vec<usize> {
    (0..n)
        .map(|i| total / n + usize::from(i < total % n))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub samples: usize,
    pub dim: usize,
    /// Distance between the two class means.
    pub separation: f64,
    pub seed: u64,
}

/// Two unit-variance Gaussians at `±(s/2)·u`, `u_c = (−1)^c/√p`, with exactly balanced
/// labels (the extra sample of an odd count goes to +1), then min–max scaled to
/// [0, 1] per coordinate.
pub fn synthesize(spec: &SyntheticSpec) -> Result<Dataset> {
    if spec.samples == 0 || spec.dim == 0 {
        return Err(Error::InvalidSize(format!(
            "synthetic dataset needs samples > 0 and dim > 0 (got {} x {})",
            spec.samples, spec.dim
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut labels: Vec<f64> = (0..spec.samples)
        .map(|i| if i < spec.samples / 2 { -1.0 } else { 1.0 })
        .collect();
    labels.shuffle(&mut rng);
    let offset = 0.5 * spec.separation / (spec.dim as f64).sqrt();
    let mut features: Vec<Vec<f64>> = labels
        .iter()
        .map(|&y| {
            (0..spec.dim)
                .map(|c| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    let sign = if c % 2 == 0 { 1.0 } else { -1.0 };
                    sign * y * offset + z
                })
                .collect()
        })
        .collect();
    for c in 0..spec.dim {
        let (lo, hi) = features
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), f| {
                (lo.min(f[c]), hi.max(f[c]))
            });
        let width = hi - lo;
        for f in features.iter_mut() {
            f[c] = if width > 0.0 {
                (f[c] - lo) / width
            } else {
                0.5
            };
        }
    }
    Ok(Dataset { features, labels })
}

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

fn read_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Parse {
            offset,
            msg: "truncated header".into(),
        })
}

/// Decoded IDX image file: `count` images of `rows × cols` unsigned bytes.
#[derive(Debug, Clone, PartialEq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
}

pub fn parse_idx_images(bytes: &[u8]) -> Result<IdxImages> {
    let magic = read_u32(bytes, 0)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::Parse {
            offset: 0,
            msg: format!("bad image magic {magic:#010x}, expected {IDX_IMAGES_MAGIC:#010x}"),
        });
    }
    let count = read_u32(bytes, 4)? as usize;
    let rows = read_u32(bytes, 8)? as usize;
    let cols = read_u32(bytes, 12)? as usize;
    let need = count * rows * cols;
    let body = &bytes[16..];
    if body.len() < need {
        return Err(Error::Parse {
            offset: 16 + body.len(),
            msg: format!(
                "image payload truncated: need {need} bytes, have {}",
                body.len()
            ),
        });
    }
    Ok(IdxImages {
        count,
        rows,
        cols,
        pixels: body[..need].to_vec(),
    })
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let magic = read_u32(bytes, 0)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::Parse {
            offset: 0,
            msg: format!("bad label magic {magic:#010x}, expected {IDX_LABELS_MAGIC:#010x}"),
        });
    }
    let count = read_u32(bytes, 4)? as usize;
    let body = &bytes[8..];
    if body.len() < count {
        return Err(Error::Parse {
            offset: 8 + body.len(),
            msg: format!(
                "label payload truncated: need {count} bytes, have {}",
                body.len()
            ),
        });
    }
    Ok(body[..count].to_vec())
}

/// Keeps the two classes, maps `classes.0 → −1` and `classes.1 → +1`, and
/// scales pixels to [0, 1].
pub fn binary_from_idx(
    images: &IdxImages,
    labels: &[u8],
    classes: (u8, u8),
    limit: Option<usize>,
) -> Result<Dataset> {
    if images.count != labels.len() {
        return Err(Error::InvalidSize(format!(
            "{} images but {} labels",
            images.count,
            labels.len()
        )));
    }
    let dim = images.rows * images.cols;
    let mut ds = Dataset::default();
    for (k, &lab) in labels.iter().enumerate() {
        let y = if lab == classes.0 {
            -1.0
        } else if lab == classes.1 {
            1.0
        } else {
            continue;
        };
        if limit.is_some_and(|l| ds.len() >= l) {
            break;
        }
        let px = &images.pixels[k * dim..(k + 1) * dim];
        ds.features
            .push(px.iter().map(|&b| f64::from(b) / 255.0).collect());
        ds.labels.push(y);
    }
    if ds.is_empty() {
        return Err(Error::InvalidSize(format!(
            "no samples with labels {} or {}",
            classes.0, classes.1
        )));
    }
    Ok(ds)
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Synthetic(SyntheticSpec),
    Idx {
        images: PathBuf,
        labels: PathBuf,
        classes: (u8, u8),
        limit: Option<usize>,
    },
}

pub fn load_or_synthesize(src: &DataSource) -> Result<Dataset> {
    match src {
        DataSource::Synthetic(spec) => synthesize(spec),
        DataSource::Idx {
            images,
            labels,
            classes,
            limit,
        } => {
            let img = parse_idx_images(&std::fs::read(images)?)?;
            let lab = parse_idx_labels(&std::fs::read(labels)?)?;
            binary_from_idx(&img, &lab, *classes, *limit)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Skew {
    Iid,
    /// Node `i` draws at least this fraction of its shard from class `i mod 2`.
    LabelSkew(f64),
}

impl fmt::Display for Skew {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Skew::Iid => f.write_str("iid"),
            Skew::LabelSkew(a) => write!(f, "label_skew:{a}"),
        }
    }
}

impl FromStr for Skew {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "iid" {
            return Ok(Skew::Iid);
        }
        let arg = s
            .strip_prefix("label_skew")
            .map(|r| r.trim_start_matches([':', '(']).trim_end_matches(')'))
            .ok_or_else(|| Error::Config(format!("unknown partition skew `{s}`")))?;
        let a: f64 = arg
            .parse()
            .map_err(|_| Error::Config(format!("bad label_skew fraction in `{s}`")))?;
        if !(0.0..=1.0).contains(&a) {
            return Err(Error::Config(format!(
                "label_skew fraction {a} outside [0, 1]"
            )));
        }
        Ok(Skew::LabelSkew(a))
    }
}

/// Splits `data` over `n` nodes with shard sizes differing by at most one.
pub fn partition(data: &Dataset, n: usize, skew: Skew, seed: u64) -> Result<Vec<Dataset>> {
    if data.is_empty() {
        return Err(Error::InvalidPartition("dataset is empty".into()));
    }
    if n == 0 || n > data.len() {
        return Err(Error::InvalidPartition(format!(
            "cannot split {} samples over {n} nodes",
            data.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sizes = shard_sizes(data.len(), n);
    match skew {
        Skew::Iid => {
            let mut idx: Vec<usize> = (0..data.len()).collect();
            idx.shuffle(&mut rng);
            let mut start = 0;
            Ok(sizes
                .iter()
                .map(|&m| {
                    let s = data.subset(&idx[start..start + m]);
                    start += m;
                    s
                })
                .collect())
        }
        Skew::LabelSkew(alpha) => {
            let mut pools: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
            for (k, &y) in data.labels.iter().enumerate() {
                pools[usize::from(y > 0.0)].push(k);
            }
            for p in pools.iter_mut() {
                p.shuffle(&mut rng);
            }
            let mut assigned: Vec<Vec<usize>> = vec![Vec::new(); n];
            for (i, &m) in sizes.iter().enumerate() {
                let want = (alpha * m as f64).ceil() as usize;
                let pool = &mut pools[i % 2];
                if pool.len() < want {
                    return Err(Error::InvalidPartition(format!(
                        "node {i} needs {want} samples of class {} but only {} remain",
                        i % 2,
                        pool.len()
                    )));
                }
                assigned[i].extend(pool.drain(pool.len() - want..));
            }
            let mut rest: Vec<usize> = pools.concat();
            rest.shuffle(&mut rng);
            for (i, &m) in sizes.iter().enumerate() {
                let fill = m - assigned[i].len();
                assigned[i].extend(rest.drain(rest.len() - fill..));
            }
            Ok(assigned.iter().map(|idx| data.subset(idx)).collect())
        }
    }
}
