//! Dataset ingestion and manipulation: IDX (EMNIST/MNIST) loading, CSV
//! round-trips, label-noise injection, and seeded splits.

use std::fs::File;
use std::io::Read;
use std::path::Path;

use byteorder::{BigEndian, ReadBytesExt};
use flate2::read::GzDecoder;
use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::dataset::{DataPoint, Dataset, PointId};
use crate::error::{Error, Result};

/// Decoded IDX file: magic, dimensions, unsigned-byte payload.
#[derive(Debug)]
pub struct IdxFile {
    pub magic: [u8; 4],
    pub dims: Vec<usize>,
    pub payload: Vec<u8>,
}

/// Reads an IDX file, transparently decompressing gzip.
pub fn read_idx(path: &Path) -> Result<IdxFile> {
    let mut raw = Vec::new();
    File::open(path)?.read_to_end(&mut raw)?;
    if raw.len() >= 2 && raw[0] == 0x1f && raw[1] == 0x8b {
        let mut decoded = Vec::new();
        GzDecoder::new(&raw[..]).read_to_end(&mut decoded)?;
        raw = decoded;
    }
    let mut cursor = &raw[..];
    let mut magic = [0u8; 4];
    cursor
        .read_exact(&mut magic)
        .map_err(|_| Error::IdxTruncated {
            path: path.display().to_string(),
            expected: 4,
            got: raw.len(),
        })?;
    if magic[0] != 0 || magic[1] != 0 || magic[2] != 0x08 {
        return Err(Error::IdxMagic {
            path: path.display().to_string(),
            magic,
            reason: "expected unsigned-byte IDX (third magic byte 0x08)".into(),
        });
    }
    let ndims = magic[3] as usize;
    if ndims == 0 || ndims > 4 {
        return Err(Error::IdxMagic {
            path: path.display().to_string(),
            magic,
            reason: format!("implausible dimension count {ndims}"),
        });
    }
    let mut dims = Vec::with_capacity(ndims);
    for _ in 0..ndims {
        let d = cursor.read_u32::<BigEndian>().map_err(|_| Error::IdxTruncated {
            path: path.display().to_string(),
            expected: 4 + 4 * ndims,
            got: raw.len(),
        })? as usize;
        dims.push(d);
    }
    let expected: usize = dims.iter().product();
    let payload = cursor.to_vec();
    if payload.len() != expected {
        return Err(Error::IdxTruncated {
            path: path.display().to_string(),
            expected,
            got: payload.len(),
        });
    }
    Ok(IdxFile {
        magic,
        dims,
        payload,
    })
}

/// Loads an image/label IDX pair, keeping `per_class` seeded samples of each
/// requested class. Pixels are scaled to `[0, 1]`; the requested classes are
/// re-indexed to `0..classes.len()` in ascending original order.
pub fn load_idx(
    images_path: &Path,
    labels_path: &Path,
    classes: &[usize],
    per_class: usize,
    seed: u64,
) -> Result<Dataset> {
    let images = read_idx(images_path)?;
    let labels = read_idx(labels_path)?;
    if images.dims.len() != 3 {
        return Err(Error::IdxMagic {
            path: images_path.display().to_string(),
            magic: images.magic,
            reason: format!("image file must have 3 dimensions, has {}", images.dims.len()),
        });
    }
    if labels.dims.len() != 1 {
        return Err(Error::IdxMagic {
            path: labels_path.display().to_string(),
            magic: labels.magic,
            reason: format!("label file must have 1 dimension, has {}", labels.dims.len()),
        });
    }
    let n = images.dims[0];
    if labels.dims[0] != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: labels.dims[0],
        });
    }
    let pixels = images.dims[1] * images.dims[2];

    let mut sorted_classes: Vec<usize> = classes.to_vec();
    sorted_classes.sort_unstable();
    sorted_classes.dedup();
    if sorted_classes.is_empty() {
        return Err(Error::invalid("classes", "must request at least one class"));
    }

    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut points = Vec::new();
    for (new_label, &class) in sorted_classes.iter().enumerate() {
        let members: Vec<usize> = (0..n)
            .filter(|&i| labels.payload[i] as usize == class)
            .collect();
        if members.len() < per_class {
            return Err(Error::InsufficientClass {
                class,
                available: members.len(),
                requested: per_class,
            });
        }
        let chosen = sample(&mut rng, members.len(), per_class);
        for pick in chosen.iter() {
            let i = members[pick];
            let features: Vec<f64> = images.payload[i * pixels..(i + 1) * pixels]
                .iter()
                .map(|&b| b as f64 / 255.0)
                .collect();
            points.push(DataPoint::new(features, new_label));
        }
    }
    Dataset::new(points, sorted_classes.len())
}

/// Relabels `⌊r·n⌋` uniformly chosen points, each to a uniform draw over the
/// other `C − 1` classes. Returns the new dataset and the corrupted ids.
pub fn mislabel(ds: &Dataset, r: f64, seed: u64) -> Result<(Dataset, Vec<PointId>)> {
    if !(0.0..=1.0).contains(&r) {
        return Err(Error::invalid("r", format!("rate {r} outside [0, 1]")));
    }
    if ds.n_classes() < 2 {
        return Err(Error::invalid("n_classes", "need at least 2 classes"));
    }
    let count = (r * ds.len() as f64).floor() as usize;
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let chosen = sample(&mut rng, ds.len(), count);
    let mut out = ds.clone();
    let mut corrupted = Vec::with_capacity(count);
    for index in chosen.iter() {
        let original = out.point(index).label;
        // uniform over the other C-1 classes, never the original
        let mut draw = rng.random_range(0..ds.n_classes() - 1);
        if draw >= original {
            draw += 1;
        }
        out = out.with_label(index, draw);
        corrupted.push(out.id(index));
    }
    corrupted.sort_unstable();
    Ok((out, corrupted))
}

#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub stratified: bool,
    pub seed: u64,
}

/// Seeded partition into (train, test). Stratified mode preserves per-class
/// proportions to within one point.
pub fn split(ds: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset)> {
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(Error::invalid(
            "train_fraction",
            format!("{} not in (0, 1)", spec.train_fraction),
        ));
    }
    if ds.len() < 2 {
        return Err(Error::DatasetTooSmall {
            min: 2,
            have: ds.len(),
        });
    }
    let target = (spec.train_fraction * ds.len() as f64).floor() as usize;
    if target == 0 || target == ds.len() {
        return Err(Error::invalid(
            "train_fraction",
            "split would leave one side empty",
        ));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(spec.seed);
    let train_indices: Vec<usize> = if spec.stratified {
        let counts = ds.class_counts();
        // floor per class, then distribute the remainder by largest
        // fractional part (ties by class index).
        let mut takes: Vec<usize> = counts
            .iter()
            .map(|&c| (spec.train_fraction * c as f64).floor() as usize)
            .collect();
        let mut remainders: Vec<(usize, f64)> = counts
            .iter()
            .enumerate()
            .map(|(k, &c)| (k, spec.train_fraction * c as f64 - takes[k] as f64))
            .collect();
        remainders.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        let mut shortfall = target - takes.iter().sum::<usize>().min(target);
        for (k, _) in remainders {
            if shortfall == 0 {
                break;
            }
            if takes[k] < counts[k] {
                takes[k] += 1;
                shortfall -= 1;
            }
        }
        let mut chosen = Vec::with_capacity(target);
        for (k, &take) in takes.iter().enumerate() {
            let mut members: Vec<usize> =
                (0..ds.len()).filter(|&i| ds.point(i).label == k).collect();
            members.shuffle(&mut rng);
            chosen.extend_from_slice(&members[..take]);
        }
        chosen.sort_unstable();
        chosen
    } else {
        let mut all: Vec<usize> = (0..ds.len()).collect();
        all.shuffle(&mut rng);
        let mut chosen = all[..target].to_vec();
        chosen.sort_unstable();
        chosen
    };
    let test_indices: Vec<usize> = (0..ds.len())
        .filter(|i| train_indices.binary_search(i).is_err())
        .collect();
    Ok((ds.select(&train_indices)?, ds.select(&test_indices)?))
}

fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes the dataset as CSV with header `id,f0..f{d-1},label[,component]`.
/// Floats carry 17 significant digits, enough for a bit-exact round-trip.
pub fn write_csv(ds: &Dataset, path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = vec!["id".into()];
    header.extend((0..ds.dim()).map(|j| format!("f{j}")));
    header.push("label".into());
    if ds.components().is_some() {
        header.push("component".into());
    }
    writer.write_record(&header)?;
    for i in 0..ds.len() {
        let mut record: Vec<String> = vec![ds.id(i).to_string()];
        record.extend(ds.point(i).features.iter().map(|&v| format_float(v)));
        record.push(ds.point(i).label.to_string());
        if let Some(comps) = ds.components() {
            record.push(comps[i].to_string());
        }
        writer.write_record(&record)?;
    }
    writer.flush()?;
    Ok(())
}

/// Reads the CSV format written by [`write_csv`]. The class count is inferred
/// as `max(label) + 1`.
pub fn read_csv(path: &Path) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let header = reader.headers()?.clone();
    let fields: Vec<&str> = header.iter().collect();
    if fields.first() != Some(&"id") {
        return Err(Error::Parse {
            line: 1,
            message: format!(
                "bad header: expected `id,f0..f{{d-1}},label[,component]`, got `{}`",
                fields.join(",")
            ),
        });
    }
    let has_component = fields.last() == Some(&"component");
    let d = fields.len() - 2 - usize::from(has_component);
    for (j, field) in fields[1..1 + d].iter().enumerate() {
        if *field != format!("f{j}") {
            return Err(Error::Parse {
                line: 1,
                message: format!("bad header: expected feature column f{j}, got {field}"),
            });
        }
    }
    if fields[1 + d] != "label" {
        return Err(Error::Parse {
            line: 1,
            message: "bad header: missing label column".into(),
        });
    }

    let mut points = Vec::new();
    let mut ids = Vec::new();
    let mut components = Vec::new();
    for (row_index, record) in reader.records().enumerate() {
        let line = row_index + 2;
        let record = record?;
        if record.len() != fields.len() {
            return Err(Error::Parse {
                line,
                message: format!(
                    "ragged row: expected {} cells, got {}",
                    fields.len(),
                    record.len()
                ),
            });
        }
        let parse_cell = |cell: &str, what: &str| -> Result<f64> {
            cell.parse::<f64>().map_err(|_| Error::Parse {
                line,
                message: format!("non-numeric {what} cell `{cell}`"),
            })
        };
        let id: PointId = record[0].parse().map_err(|_| Error::Parse {
            line,
            message: format!("non-numeric id `{}`", &record[0]),
        })?;
        let mut features = Vec::with_capacity(d);
        for j in 0..d {
            let v = parse_cell(&record[1 + j], "feature")?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line,
                    message: "non-finite feature".into(),
                });
            }
            features.push(v);
        }
        let label: usize = record[1 + d].parse().map_err(|_| Error::Parse {
            line,
            message: format!("non-numeric label `{}`", &record[1 + d]),
        })?;
        if has_component {
            components.push(record[2 + d].parse::<usize>().map_err(|_| Error::Parse {
                line,
                message: format!("non-numeric component `{}`", &record[2 + d]),
            })?);
        }
        ids.push(id);
        points.push(DataPoint::new(features, label));
    }
    let n_classes = points.iter().map(|p| p.label).max().map(|l| l + 1).unwrap_or(0);
    Dataset::with_ids(
        points,
        ids,
        n_classes,
        if has_component { Some(components) } else { None },
    )
}
