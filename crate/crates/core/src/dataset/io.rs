//! CSV and JSONL record files.
//!
//! Both encodings share one flat field list: scalar columns, then
//! `p_in_1..p_in_95`, `p_out_1..p_out_95`, `mask_1..mask_95`. Absent VOA
//! telemetry is an empty CSV cell or a JSON `null`. Floats are written in
//! shortest round-trip form, so a write/read cycle is bit-exact.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::IlaRawRecord;
use crate::domain::{validate_record, ChannelMask, MeasurementRecord, PowerSpectrum, Violation, N_CHANNELS};
use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

const SCALAR_COLUMNS: [&str; 12] = [
    "schema_version",
    "device_id",
    "kind",
    "direction",
    "gain_target_db",
    "tilt_db",
    "config_class",
    "total_in_dbm",
    "total_out_dbm",
    "voa_in_dbm",
    "voa_out_dbm",
    "voa_attn_db",
];

const RAW_COLUMNS: [&str; 4] = ["p_in_aux_total_mw", "p_out_aux_total_mw", "p_in_ila_total_mw", "p_out_ila_total_mw"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Jsonl,
}

impl std::str::FromStr for Format {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "jsonl" => Ok(Format::Jsonl),
            other => Err(Error::InvalidConfig(format!("unknown format `{other}`"))),
        }
    }
}

/// Column names of the record schema, in file order.
pub fn record_columns() -> Vec<String> {
    let mut cols: Vec<String> = SCALAR_COLUMNS.iter().map(|s| s.to_string()).collect();
    for prefix in ["p_in", "p_out", "mask"] {
        cols.extend((1..=N_CHANNELS).map(|i| format!("{prefix}_{i}")));
    }
    cols
}

fn raw_columns() -> Vec<String> {
    let mut cols = record_columns();
    cols.extend(RAW_COLUMNS.iter().map(|s| s.to_string()));
    cols
}

/// A record rejected during ingestion. `row` is the 1-based data row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Rejected {
    pub row: usize,
    pub violations: Vec<Violation>,
}

#[derive(Debug, Clone, Default)]
pub struct Ingested {
    pub records: Vec<MeasurementRecord>,
    pub rejected: Vec<Rejected>,
}

fn opt_cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn record_cells(r: &MeasurementRecord) -> Vec<String> {
    let mut cells = vec![
        SCHEMA_VERSION.to_string(),
        r.device_id.clone(),
        r.kind.as_str().to_string(),
        r.direction.as_str().to_string(),
        r.gain_target_db.to_string(),
        r.tilt_db.to_string(),
        r.config_class.as_str().to_string(),
        r.total_in_dbm.to_string(),
        r.total_out_dbm.to_string(),
        opt_cell(r.voa_in_dbm),
        opt_cell(r.voa_out_dbm),
        opt_cell(r.voa_attn_db),
    ];
    cells.extend(r.p_in.values_dbm().iter().map(|v| v.to_string()));
    cells.extend(r.p_out.values_dbm().iter().map(|v| v.to_string()));
    cells.extend(r.mask.bits().iter().map(|b| if *b { "1" } else { "0" }.to_string()));
    cells
}

pub fn write_records_csv<W: Write>(w: W, records: &[MeasurementRecord]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(record_columns())?;
    for r in records {
        wtr.write_record(record_cells(r))?;
    }
    wtr.flush()?;
    Ok(())
}

fn record_json(r: &MeasurementRecord) -> Map<String, Value> {
    let num = |x: f64| serde_json::Number::from_f64(x).map(Value::Number).unwrap_or(Value::Null);
    let opt = |x: Option<f64>| x.map(num).unwrap_or(Value::Null);
    let mut m = Map::new();
    m.insert("schema_version".into(), Value::from(SCHEMA_VERSION));
    m.insert("device_id".into(), Value::from(r.device_id.clone()));
    m.insert("kind".into(), Value::from(r.kind.as_str()));
    m.insert("direction".into(), Value::from(r.direction.as_str()));
    m.insert("gain_target_db".into(), num(r.gain_target_db));
    m.insert("tilt_db".into(), num(r.tilt_db));
    m.insert("config_class".into(), Value::from(r.config_class.as_str()));
    m.insert("total_in_dbm".into(), num(r.total_in_dbm));
    m.insert("total_out_dbm".into(), num(r.total_out_dbm));
    m.insert("voa_in_dbm".into(), opt(r.voa_in_dbm));
    m.insert("voa_out_dbm".into(), opt(r.voa_out_dbm));
    m.insert("voa_attn_db".into(), opt(r.voa_attn_db));
    for i in 0..N_CHANNELS {
        m.insert(format!("p_in_{}", i + 1), num(r.p_in.values_dbm()[i]));
        m.insert(format!("p_out_{}", i + 1), num(r.p_out.values_dbm()[i]));
        m.insert(format!("mask_{}", i + 1), Value::from(u8::from(r.mask.is_active(i))));
    }
    m
}

pub fn write_records_jsonl<W: Write>(mut w: W, records: &[MeasurementRecord]) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, &record_json(r))?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_records(path: &Path, format: Format, records: &[MeasurementRecord]) -> Result<()> {
    let w = BufWriter::new(File::create(path)?);
    match format {
        Format::Csv => write_records_csv(w, records),
        Format::Jsonl => write_records_jsonl(w, records),
    }
}

/// Field lookup shared by the CSV and JSONL readers.
trait Row {
    fn text(&self, key: &str) -> Result<String>;
    fn opt_num(&self, key: &str) -> Result<Option<f64>>;
    fn row(&self) -> usize;

    fn num(&self, key: &str) -> Result<f64> {
        self.opt_num(key)?.ok_or_else(|| Error::ParseError { row: self.row(), message: format!("`{key}` is empty") })
    }

    fn parse<T: std::str::FromStr<Err = Error>>(&self, key: &str) -> Result<T> {
        self.text(key)?
            .parse()
            .map_err(|e: Error| Error::ParseError { row: self.row(), message: e.to_string() })
    }

    fn spectrum(&self, prefix: &str) -> Result<PowerSpectrum> {
        let v = (1..=N_CHANNELS).map(|i| self.num(&format!("{prefix}_{i}"))).collect::<Result<Vec<_>>>()?;
        PowerSpectrum::from_dbm(v)
    }

    fn mask(&self) -> Result<ChannelMask> {
        let bits = (1..=N_CHANNELS)
            .map(|i| match self.num(&format!("mask_{i}"))? {
                x if x == 0.0 => Ok(false),
                x if x == 1.0 => Ok(true),
                x => Err(Error::ParseError { row: self.row(), message: format!("mask_{i} = {x} is not 0/1") }),
            })
            .collect::<Result<Vec<_>>>()?;
        ChannelMask::from_bits(bits)
    }

    fn check_version(&self) -> Result<()> {
        let v = self.text("schema_version")?;
        if v.trim() != SCHEMA_VERSION.to_string() {
            return Err(Error::SchemaMismatch(format!(
                "row {}: schema_version {v}, expected {SCHEMA_VERSION}",
                self.row()
            )));
        }
        Ok(())
    }

    fn record(&self) -> Result<MeasurementRecord> {
        self.check_version()?;
        Ok(MeasurementRecord {
            device_id: self.text("device_id")?,
            kind: self.parse("kind")?,
            direction: self.parse("direction")?,
            gain_target_db: self.num("gain_target_db")?,
            tilt_db: self.num("tilt_db")?,
            p_in: self.spectrum("p_in")?,
            p_out: self.spectrum("p_out")?,
            mask: self.mask()?,
            total_in_dbm: self.num("total_in_dbm")?,
            total_out_dbm: self.num("total_out_dbm")?,
            voa_in_dbm: self.opt_num("voa_in_dbm")?,
            voa_out_dbm: self.opt_num("voa_out_dbm")?,
            voa_attn_db: self.opt_num("voa_attn_db")?,
            config_class: self.parse("config_class")?,
        })
    }
}

struct CsvRow<'a> {
    index: &'a std::collections::HashMap<String, usize>,
    rec: &'a csv::StringRecord,
    row: usize,
}

impl Row for CsvRow<'_> {
    fn text(&self, key: &str) -> Result<String> {
        let j = self.index[key];
        Ok(self.rec.get(j).unwrap_or_default().to_string())
    }

    fn opt_num(&self, key: &str) -> Result<Option<f64>> {
        let s = self.rec.get(self.index[key]).unwrap_or_default().trim();
        if s.is_empty() {
            return Ok(None);
        }
        s.parse::<f64>()
            .map(Some)
            .map_err(|e| Error::ParseError { row: self.row, message: format!("`{key}`: {e}") })
    }

    fn row(&self) -> usize {
        self.row
    }
}

struct JsonRow<'a> {
    obj: &'a Map<String, Value>,
    row: usize,
}

impl Row for JsonRow<'_> {
    fn text(&self, key: &str) -> Result<String> {
        match self.obj.get(key) {
            Some(Value::String(s)) => Ok(s.clone()),
            Some(Value::Number(n)) => Ok(n.to_string()),
            _ => Err(Error::ParseError { row: self.row, message: format!("missing `{key}`") }),
        }
    }

    fn opt_num(&self, key: &str) -> Result<Option<f64>> {
        match self.obj.get(key) {
            None => Err(Error::ParseError { row: self.row, message: format!("missing `{key}`") }),
            Some(Value::Null) => Ok(None),
            Some(Value::Number(n)) => Ok(n.as_f64()),
            Some(other) => Err(Error::ParseError { row: self.row, message: format!("`{key}` = {other} is not a number") }),
        }
    }

    fn row(&self) -> usize {
        self.row
    }
}

fn csv_header_index(
    headers: &csv::StringRecord,
    expected: &[String],
) -> Result<std::collections::HashMap<String, usize>> {
    let got: Vec<&str> = headers.iter().collect();
    if got.len() != expected.len() || got.iter().zip(expected).any(|(a, b)| a != b) {
        return Err(Error::SchemaMismatch(format!(
            "header has {} columns, expected the {}-column record schema",
            got.len(),
            expected.len()
        )));
    }
    Ok(expected.iter().enumerate().map(|(i, c)| (c.clone(), i)).collect())
}

fn accept(out: &mut Ingested, row: usize, r: MeasurementRecord) {
    let violations = validate_record(&r);
    if violations.is_empty() {
        out.records.push(r);
    } else {
        out.rejected.push(Rejected { row, violations });
    }
}

pub fn read_records_csv<R: Read>(r: R) -> Result<Ingested> {
    let mut rdr = csv::Reader::from_reader(r);
    let index = csv_header_index(rdr.headers()?, &record_columns())?;
    let mut out = Ingested::default();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = CsvRow { index: &index, rec: &rec, row: i + 1 };
        accept(&mut out, i + 1, row.record()?);
    }
    Ok(out)
}

pub fn read_records_jsonl<R: Read>(r: R) -> Result<Ingested> {
    let mut out = Ingested::default();
    let mut row = 0;
    for line in BufReader::new(r).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        row += 1;
        let value: Value = serde_json::from_str(&line)
            .map_err(|e| Error::ParseError { row, message: e.to_string() })?;
        let obj = value
            .as_object()
            .ok_or_else(|| Error::ParseError { row, message: "line is not a JSON object".into() })?;
        accept(&mut out, row, JsonRow { obj, row }.record()?);
    }
    Ok(out)
}

/// Reads and validates a record file. Records that break an invariant are
/// returned in `rejected` with their row number instead of failing the read.
pub fn ingest(path: &Path, format: Format) -> Result<Ingested> {
    let f = File::open(path)?;
    match format {
        Format::Csv => read_records_csv(f),
        Format::Jsonl => read_records_jsonl(f),
    }
}

pub fn write_ila_raw_csv<W: Write>(w: W, raws: &[IlaRawRecord]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(raw_columns())?;
    for r in raws {
        let total = |mw: f64| crate::domain::mw_to_dbm(mw).map(|d| d.to_string());
        let mut cells = vec![
            SCHEMA_VERSION.to_string(),
            r.device_id.clone(),
            "ILA".to_string(),
            r.direction.as_str().to_string(),
            r.gain_target_db.to_string(),
            "0".to_string(),
            r.config_class.as_str().to_string(),
            total(r.p_in_ila_total_mw)?,
            total(r.p_out_ila_total_mw)?,
            String::new(),
            String::new(),
            String::new(),
        ];
        cells.extend(r.aux_in_spectrum_dbm.values_dbm().iter().map(|v| v.to_string()));
        cells.extend(r.aux_out_spectrum_dbm.values_dbm().iter().map(|v| v.to_string()));
        cells.extend(r.mask.bits().iter().map(|b| if *b { "1" } else { "0" }.to_string()));
        for v in [r.p_in_aux_total_mw, r.p_out_aux_total_mw, r.p_in_ila_total_mw, r.p_out_ila_total_mw] {
            cells.push(v.to_string());
        }
        wtr.write_record(cells)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_ila_raw_csv<R: Read>(r: R) -> Result<Vec<IlaRawRecord>> {
    let mut rdr = csv::Reader::from_reader(r);
    let index = csv_header_index(rdr.headers()?, &raw_columns())?;
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = CsvRow { index: &index, rec: &rec, row: i + 1 };
        row.check_version()?;
        out.push(IlaRawRecord {
            device_id: row.text("device_id")?,
            direction: row.parse("direction")?,
            gain_target_db: row.num("gain_target_db")?,
            config_class: row.parse("config_class")?,
            mask: row.mask()?,
            aux_in_spectrum_dbm: row.spectrum("p_in")?,
            aux_out_spectrum_dbm: row.spectrum("p_out")?,
            p_in_aux_total_mw: row.num("p_in_aux_total_mw")?,
            p_out_aux_total_mw: row.num("p_out_aux_total_mw")?,
            p_in_ila_total_mw: row.num("p_in_ila_total_mw")?,
            p_out_ila_total_mw: row.num("p_out_ila_total_mw")?,
        });
    }
    Ok(out)
}

pub fn ingest_ila_raw(path: &Path) -> Result<Vec<IlaRawRecord>> {
    read_ila_raw_csv(File::open(path)?)
}
