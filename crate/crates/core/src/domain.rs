//! Channel grid, unit conversions and the measurement record shared by every
//! other module.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of 50 GHz channels on the C-band grid.
pub const N_CHANNELS: usize = 95;
/// Grid spacing.
pub const SPACING_GHZ: f64 = 50.0;
/// Reported power on dark channels.
pub const DARK_FLOOR_DBM: f64 = -60.0;

/// Fixed 95 x 50 GHz grid.
///
/// Absolute frequencies are a convention: channel 1 sits at `f_start_ghz`
/// (191.35 THz by default) and the grid ascends from there. Frequencies are
/// kept in GHz so the spacing is exact in floating point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelPlan {
    f_start_ghz: f64,
}

impl Default for ChannelPlan {
    fn default() -> Self {
        Self { f_start_ghz: 191_350.0 }
    }
}

impl ChannelPlan {
    pub fn with_start_ghz(f_start_ghz: f64) -> Self {
        Self { f_start_ghz }
    }

    pub fn n_channels(&self) -> usize {
        N_CHANNELS
    }

    pub fn spacing_ghz(&self) -> f64 {
        SPACING_GHZ
    }

    /// Center frequency of the zero-based channel `i`.
    pub fn frequency_ghz(&self, i: usize) -> f64 {
        self.f_start_ghz + SPACING_GHZ * i as f64
    }

    pub fn frequency_thz(&self, i: usize) -> f64 {
        self.frequency_ghz(i) / 1000.0
    }

    /// Normalized position of channel `i` across the band, in [0, 1].
    pub fn position(i: usize) -> f64 {
        i as f64 / (N_CHANNELS - 1) as f64
    }
}

/// Which channels carry signal.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<bool>", into = "Vec<bool>")]
pub struct ChannelMask(Vec<bool>);

impl ChannelMask {
    pub fn from_bits(bits: Vec<bool>) -> Result<Self> {
        if bits.len() != N_CHANNELS {
            return Err(Error::DimensionMismatch { expected: N_CHANNELS, actual: bits.len() });
        }
        Ok(Self(bits))
    }

    pub fn full() -> Self {
        Self(vec![true; N_CHANNELS])
    }

    pub fn empty() -> Self {
        Self(vec![false; N_CHANNELS])
    }

    /// Mask with exactly the listed zero-based channels active.
    pub fn from_indices<I: IntoIterator<Item = usize>>(indices: I) -> Self {
        let mut bits = vec![false; N_CHANNELS];
        for i in indices {
            bits[i] = true;
        }
        Self(bits)
    }

    pub fn bits(&self) -> &[bool] {
        &self.0
    }

    pub fn is_active(&self, i: usize) -> bool {
        self.0[i]
    }

    pub fn set(&mut self, i: usize, on: bool) {
        self.0[i] = on;
    }

    pub fn popcount(&self) -> usize {
        self.0.iter().filter(|b| **b).count()
    }

    pub fn is_full(&self) -> bool {
        self.0.iter().all(|b| *b)
    }

    pub fn is_empty(&self) -> bool {
        !self.0.iter().any(|b| *b)
    }

    pub fn active_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().enumerate().filter(|(_, b)| **b).map(|(i, _)| i)
    }

    /// 0/1 weights, one per channel.
    pub fn weights(&self) -> Vec<f64> {
        self.0.iter().map(|b| if *b { 1.0 } else { 0.0 }).collect()
    }
}

impl TryFrom<Vec<bool>> for ChannelMask {
    type Error = Error;
    fn try_from(bits: Vec<bool>) -> Result<Self> {
        Self::from_bits(bits)
    }
}

impl From<ChannelMask> for Vec<bool> {
    fn from(m: ChannelMask) -> Self {
        m.0
    }
}

/// Per-channel power in dBm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct PowerSpectrum(Vec<f64>);

impl PowerSpectrum {
    pub fn from_dbm(values: Vec<f64>) -> Result<Self> {
        if values.len() != N_CHANNELS {
            return Err(Error::DimensionMismatch { expected: N_CHANNELS, actual: values.len() });
        }
        Ok(Self(values))
    }

    /// `level_dbm` on active channels, the dark floor elsewhere.
    pub fn flat(mask: &ChannelMask, level_dbm: f64) -> Self {
        Self(
            mask.bits()
                .iter()
                .map(|on| if *on { level_dbm } else { DARK_FLOOR_DBM })
                .collect(),
        )
    }

    pub fn values_dbm(&self) -> &[f64] {
        &self.0
    }

    pub fn values_dbm_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }

    /// Total power of the active channels, in mW.
    pub fn total_mw(&self, mask: &ChannelMask) -> f64 {
        mask.active_indices().map(|i| dbm_to_mw(self.0[i])).sum()
    }
}

impl TryFrom<Vec<f64>> for PowerSpectrum {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::from_dbm(v)
    }
}

impl From<PowerSpectrum> for Vec<f64> {
    fn from(p: PowerSpectrum) -> Self {
        p.0
    }
}

/// Per-channel gain in dB; `None` on inactive channels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainSpectrum {
    pub values_db: Vec<Option<f64>>,
}

impl GainSpectrum {
    /// Dense copy with `fill` on undefined channels.
    pub fn to_dense(&self, fill: f64) -> Vec<f64> {
        self.values_db.iter().map(|v| v.unwrap_or(fill)).collect()
    }

    pub fn defined(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.values_db.iter().enumerate().filter_map(|(i, v)| v.map(|g| (i, g)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DeviceKind {
    Booster,
    Preamp,
    #[serde(rename = "ILA")]
    Ila,
}

impl DeviceKind {
    /// Boosters and preamps expose internal VOA telemetry; ILAs do not.
    pub fn has_voa(self) -> bool {
        !matches!(self, DeviceKind::Ila)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DeviceKind::Booster => "Booster",
            DeviceKind::Preamp => "Preamp",
            DeviceKind::Ila => "ILA",
        }
    }
}

impl std::str::FromStr for DeviceKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "booster" => Ok(DeviceKind::Booster),
            "preamp" => Ok(DeviceKind::Preamp),
            "ila" => Ok(DeviceKind::Ila),
            other => Err(Error::InvalidConfig(format!("unknown device kind `{other}`"))),
        }
    }
}

impl std::fmt::Display for DeviceKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Direction {
    AB,
    BA,
    NA,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::AB => "AB",
            Direction::BA => "BA",
            Direction::NA => "NA",
        }
    }
}

impl std::str::FromStr for Direction {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "AB" => Ok(Direction::AB),
            "BA" => Ok(Direction::BA),
            "NA" => Ok(Direction::NA),
            other => Err(Error::InvalidConfig(format!("unknown direction `{other}`"))),
        }
    }
}

/// Channel-loading family a measurement was taken under.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ConfigClass {
    Fixed,
    Random,
    Goalpost,
}

impl ConfigClass {
    pub fn as_str(self) -> &'static str {
        match self {
            ConfigClass::Fixed => "Fixed",
            ConfigClass::Random => "Random",
            ConfigClass::Goalpost => "Goalpost",
        }
    }
}

impl std::str::FromStr for ConfigClass {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "Fixed" => Ok(ConfigClass::Fixed),
            "Random" => Ok(ConfigClass::Random),
            "Goalpost" => Ok(ConfigClass::Goalpost),
            other => Err(Error::InvalidConfig(format!("unknown config class `{other}`"))),
        }
    }
}

/// One gain-spectrum observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementRecord {
    pub device_id: String,
    pub kind: DeviceKind,
    pub direction: Direction,
    pub gain_target_db: f64,
    pub tilt_db: f64,
    pub p_in: PowerSpectrum,
    pub p_out: PowerSpectrum,
    pub mask: ChannelMask,
    pub total_in_dbm: f64,
    pub total_out_dbm: f64,
    pub voa_in_dbm: Option<f64>,
    pub voa_out_dbm: Option<f64>,
    pub voa_attn_db: Option<f64>,
    pub config_class: ConfigClass,
}

impl MeasurementRecord {
    /// Measured gain on the active channels.
    pub fn gain(&self) -> Result<GainSpectrum> {
        compute_gain(&self.p_in, &self.p_out, &self.mask)
    }
}

/// A broken [`MeasurementRecord`] invariant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Violation {
    VoaOnIla,
    VoaMissing,
    EmptyMask,
    GainNotInSettings,
    NonFinitePower,
}

impl Violation {
    pub fn code(self) -> &'static str {
        match self {
            Violation::VoaOnIla => "voa_on_ila",
            Violation::VoaMissing => "voa_missing",
            Violation::EmptyMask => "empty_mask",
            Violation::GainNotInSettings => "gain_not_in_settings",
            Violation::NonFinitePower => "non_finite_power",
        }
    }
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.code())
    }
}

pub fn dbm_to_mw(p_dbm: f64) -> f64 {
    10f64.powf(p_dbm / 10.0)
}

pub fn mw_to_dbm(p_mw: f64) -> Result<f64> {
    if !(p_mw > 0.0) {
        return Err(Error::NonPositivePower(p_mw));
    }
    Ok(10.0 * p_mw.log10())
}

/// Per-channel `p_out - p_in` on active channels.
pub fn compute_gain(p_in: &PowerSpectrum, p_out: &PowerSpectrum, mask: &ChannelMask) -> Result<GainSpectrum> {
    if mask.is_empty() {
        return Err(Error::EmptyMask);
    }
    let values_db = (0..N_CHANNELS)
        .map(|i| mask.is_active(i).then(|| p_out.0[i] - p_in.0[i]))
        .collect();
    Ok(GainSpectrum { values_db })
}

/// Checks every record invariant that does not need device context.
pub fn validate_record(r: &MeasurementRecord) -> Vec<Violation> {
    validate_record_with(r, None)
}

/// Like [`validate_record`], also checking the gain target against the
/// device's declared settings when they are known.
pub fn validate_record_with(r: &MeasurementRecord, gain_settings: Option<&[f64]>) -> Vec<Violation> {
    let mut out = Vec::new();
    let voa = [r.voa_in_dbm, r.voa_out_dbm, r.voa_attn_db];
    let present = voa.iter().filter(|v| v.is_some()).count();
    if r.kind.has_voa() {
        if present != 3 {
            out.push(Violation::VoaMissing);
        }
    } else if present > 0 {
        out.push(Violation::VoaOnIla);
    }
    if r.mask.is_empty() {
        out.push(Violation::EmptyMask);
    }
    if let Some(settings) = gain_settings {
        if !settings.iter().any(|g| (g - r.gain_target_db).abs() < 1e-9) {
            out.push(Violation::GainNotInSettings);
        }
    }
    let active_finite = r
        .mask
        .active_indices()
        .all(|i| r.p_in.0[i].is_finite() && r.p_out.0[i].is_finite());
    let scalars_finite = [r.gain_target_db, r.tilt_db, r.total_in_dbm, r.total_out_dbm]
        .iter()
        .chain(voa.iter().flatten())
        .all(|v| v.is_finite());
    if !active_finite || !scalars_finite {
        out.push(Violation::NonFinitePower);
    }
    out
}
