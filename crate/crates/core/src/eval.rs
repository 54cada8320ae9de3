//! Error metrics over active channels, CDF export, transfer matrices and
//! shot sweeps.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::split::gain_key;
use crate::dataset::{assemble_features, FeatureVector};
use crate::domain::{ConfigClass, MeasurementRecord};
use crate::error::{Error, Result};
use crate::nn::Network;
use crate::transfer::{heterogeneous_transfer, homogeneous_transfer, tl_shot_sampler, TransferConfig};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Error statistics over a set of absolute per-channel errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub mae_db: f64,
    pub mean_error_db: f64,
    pub p50_db: f64,
    pub p95_db: f64,
    pub max_db: f64,
    /// Records contributing.
    pub count: usize,
    /// Active channels contributing.
    pub n_samples: usize,
}

/// Nearest-rank percentile of ascending `sorted`; `p` in (0, 100].
pub fn percentile_nearest_rank(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty());
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

impl ErrorStats {
    /// `signed` are prediction minus measurement on active channels.
    pub fn from_signed(signed: &[f64], count: usize) -> Self {
        let n = signed.len();
        let mut abs: Vec<f64> = signed.iter().map(|e| e.abs()).collect();
        abs.sort_by(f64::total_cmp);
        Self {
            mae_db: abs.iter().sum::<f64>() / n as f64,
            mean_error_db: signed.iter().sum::<f64>() / n as f64,
            p50_db: percentile_nearest_rank(&abs, 50.0),
            p95_db: percentile_nearest_rank(&abs, 95.0),
            max_db: abs[n - 1],
            count,
            n_samples: n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalCell {
    pub device_id: String,
    pub gain_db: f64,
    pub config_class: ConfigClass,
    #[serde(flatten)]
    pub stats: ErrorStats,
    /// Signed errors in record order, active channels ascending.
    pub errors_db: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
    pub overall: ErrorStats,
    pub cells: Vec<EvalCell>,
}

impl EvalReport {
    /// All absolute errors, cell by cell.
    pub fn abs_samples(&self) -> Vec<f64> {
        self.cells.iter().flat_map(|c| c.errors_db.iter().map(|e| e.abs())).collect()
    }

    pub fn mae(&self) -> f64 {
        self.overall.mae_db
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }
}

fn class_rank(c: ConfigClass) -> u8 {
    match c {
        ConfigClass::Fixed => 0,
        ConfigClass::Random => 1,
        ConfigClass::Goalpost => 2,
    }
}

/// Absolute per-channel gain predictions (records x 95), inactive channels
/// included: the network output plus each record's target gain.
pub fn predict_gain(net: &Network, records: &[MeasurementRecord]) -> Result<Array2<f64>> {
    let s = net.standardizer.as_ref().ok_or_else(|| Error::InvalidConfig("network has no standardizer".into()))?;
    let feats: Vec<FeatureVector> = records.iter().map(assemble_features).collect();
    let mut pred = net.predict(s.apply_matrix(&feats).view())?;
    for (mut row, r) in pred.rows_mut().into_iter().zip(records) {
        row += r.gain_target_db;
    }
    Ok(pred)
}

/// Predicts every record and aggregates errors per (device, gain, class).
pub fn evaluate(net: &Network, test: &[MeasurementRecord]) -> Result<EvalReport> {
    if test.is_empty() {
        return Err(Error::EmptyTestSet);
    }
    let pred = predict_gain(net, test)?;
    let mut groups: BTreeMap<(String, i64, u8), (f64, ConfigClass, Vec<f64>, usize)> = BTreeMap::new();
    let mut all = Vec::new();
    for (k, r) in test.iter().enumerate() {
        let key = (r.device_id.clone(), gain_key(r.gain_target_db), class_rank(r.config_class));
        let cell = groups.entry(key).or_insert_with(|| (r.gain_target_db, r.config_class, Vec::new(), 0));
        cell.3 += 1;
        for (i, g) in r.gain()?.defined() {
            let e = pred[[k, i]] - g;
            cell.2.push(e);
            all.push(e);
        }
    }
    let cells = groups
        .into_iter()
        .map(|((device_id, _, _), (gain_db, config_class, errors_db, count))| EvalCell {
            device_id,
            gain_db,
            config_class,
            stats: ErrorStats::from_signed(&errors_db, count),
            errors_db,
        })
        .collect();
    Ok(EvalReport {
        schema_version: REPORT_SCHEMA_VERSION,
        config_hash: None,
        overall: ErrorStats::from_signed(&all, test.len()),
        cells,
    })
}

/// Ascending `(abs_error_db, cumulative_fraction)` pairs.
pub fn cdf_rows(samples: &[f64]) -> Result<Vec<(f64, f64)>> {
    if samples.is_empty() {
        return Err(Error::EmptyTestSet);
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    Ok(sorted.into_iter().enumerate().map(|(k, v)| (v, (k + 1) as f64 / n)).collect())
}

pub fn export_cdf(report: &EvalReport, path: &Path) -> Result<()> {
    let rows = cdf_rows(&report.abs_samples())?;
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["abs_error_db", "cumulative_fraction"])?;
    for (v, f) in rows {
        w.write_record([v.to_string(), f.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// A bare polyline plot of the CDF.
pub fn cdf_svg(report: &EvalReport) -> Result<String> {
    let rows = cdf_rows(&report.abs_samples())?;
    let (w, h, pad) = (480.0, 320.0, 40.0);
    let x_max = rows.last().map(|r| r.0).filter(|v| *v > 0.0).unwrap_or(1.0);
    let mut points = String::new();
    for (v, f) in &rows {
        let x = pad + (w - 2.0 * pad) * v / x_max;
        let y = h - pad - (h - 2.0 * pad) * f;
        let _ = write!(points, "{x:.2},{y:.2} ");
    }
    Ok(format!(
        concat!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\">\n",
            "<line x1=\"{p}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>\n",
            "<line x1=\"{p}\" y1=\"{b}\" x2=\"{p}\" y2=\"{p}\" stroke=\"black\"/>\n",
            "<text x=\"{r}\" y=\"{t}\" text-anchor=\"end\" font-size=\"12\">{xm:.3} dB</text>\n",
            "<polyline fill=\"none\" stroke=\"steelblue\" points=\"{pts}\"/>\n",
            "</svg>\n"
        ),
        w = w,
        h = h,
        p = pad,
        b = h - pad,
        r = w - pad,
        t = h - pad / 4.0,
        xm = x_max,
        pts = points.trim_end()
    ))
}

/// Records of one device, split for training and testing.
#[derive(Debug, Clone)]
pub struct DeviceData {
    pub id: String,
    pub train: Vec<MeasurementRecord>,
    pub test: Vec<MeasurementRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TlMatrix {
    pub schema_version: u32,
    pub devices: Vec<String>,
    /// `mae_db[i][j]`: model from device i evaluated on device j's test set.
    pub mae_db: Vec<Vec<f64>>,
    pub provenance: Vec<Vec<Vec<String>>>,
}

/// Direct models on the diagonal, source-i to target-j transfers elsewhere.
pub fn tl_matrix<D, T>(devices: &[DeviceData], mut direct: D, mut transfer: T) -> Result<TlMatrix>
where
    D: FnMut(&DeviceData) -> Result<Network>,
    T: FnMut(&Network, &DeviceData) -> Result<Network>,
{
    if devices.len() < 2 {
        return Err(Error::InsufficientData("a transfer matrix needs at least two devices".into()));
    }
    let models = devices.iter().map(&mut direct).collect::<Result<Vec<_>>>()?;
    let n = devices.len();
    let mut mae_db = vec![vec![0.0; n]; n];
    let mut provenance = vec![vec![Vec::new(); n]; n];
    for i in 0..n {
        for j in 0..n {
            let net = if i == j { models[i].clone() } else { transfer(&models[i], &devices[j])? };
            mae_db[i][j] = evaluate(&net, &devices[j].test)?.mae();
            provenance[i][j] = net.metadata.provenance.clone();
        }
    }
    Ok(TlMatrix { schema_version: REPORT_SCHEMA_VERSION, devices: devices.iter().map(|d| d.id.clone()).collect(), mae_db, provenance })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub seed: u64,
    pub shots: usize,
    pub mae_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub schema_version: u32,
    pub rows: Vec<SweepRow>,
    /// `(shots, mean MAE over seeds)` in the order requested.
    pub means: Vec<(usize, f64)>,
    pub spearman_rho: f64,
}

impl SweepTable {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("seed,shots,mae_db\n");
        for r in &self.rows {
            let _ = writeln!(s, "{},{},{}", r.seed, r.shots, r.mae_db);
        }
        s
    }
}

/// Average ranks, ties sharing the mean rank.
fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation; 0 when either side is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for i in 0..x.len() {
        let (a, b) = (rx[i] - mx, ry[i] - my);
        sxy += a * b;
        sxx += a * a;
        syy += b * b;
    }
    if sxx == 0.0 || syy == 0.0 {
        0.0
    } else {
        sxy / (sxx * syy).sqrt()
    }
}

/// Seeded stream for one (seed, shots) sweep cell.
pub fn sweep_rng(seed: u64, shots: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(shots as u64);
    rng
}

/// Target-test MAE after transfer, for every shot count and seed.
pub fn shot_sweep(
    source: &Network,
    target: &DeviceData,
    shots: &[usize],
    cfg: &TransferConfig,
    seeds: &[u64],
) -> Result<SweepTable> {
    let mut rows = Vec::new();
    for &seed in seeds {
        for &n in shots {
            let mut rng = sweep_rng(seed, n);
            let picked = tl_shot_sampler(&target.train, n, &mut rng)?;
            let net = match cfg {
                TransferConfig::Homogeneous(c) => homogeneous_transfer(source, &picked, c)?.0,
                TransferConfig::Heterogeneous(c) => heterogeneous_transfer(source, &picked, c, &mut rng)?.0,
            };
            rows.push(SweepRow { seed, shots: n, mae_db: evaluate(&net, &target.test)?.mae() });
        }
    }
    let means: Vec<(usize, f64)> = shots
        .iter()
        .map(|&n| {
            let v: Vec<f64> = rows.iter().filter(|r| r.shots == n).map(|r| r.mae_db).collect();
            (n, v.iter().sum::<f64>() / v.len().max(1) as f64)
        })
        .collect();
    let xs: Vec<f64> = means.iter().map(|m| m.0 as f64).collect();
    let ys: Vec<f64> = means.iter().map(|m| m.1).collect();
    Ok(SweepTable { schema_version: REPORT_SCHEMA_VERSION, rows, spearman_rho: spearman(&xs, &ys), means })
}
