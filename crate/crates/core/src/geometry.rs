//! Room geometry, LED placement and the line-of-sight optical channel.

use std::f64::consts::{LN_2, PI};

use nalgebra::{DMatrix, Point3};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::SystemConfig;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoomGeometry {
    pub length: f64,
    pub width: f64,
    pub height: f64,
    pub led_mount_height: f64,
    pub receiver_plane_height: f64,
}

impl RoomGeometry {
    pub fn new(
        length: f64,
        width: f64,
        height: f64,
        led_mount_height: f64,
        receiver_plane_height: f64,
    ) -> Result<Self> {
        let dims = [length, width, height, led_mount_height, receiver_plane_height];
        if dims.iter().any(|d| !(*d > 0.0) || !d.is_finite()) {
            return Err(Error::InvalidConfig("room dimensions must be strictly positive".into()));
        }
        if !(receiver_plane_height < led_mount_height && led_mount_height <= height) {
            return Err(Error::InvalidConfig("need receiver_plane_height < led_mount_height <= height".into()));
        }
        Ok(Self { length, width, height, led_mount_height, receiver_plane_height })
    }

    pub fn center(&self) -> (f64, f64) {
        (self.length / 2.0, self.width / 2.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LedLayout {
    pub grid_rows: usize,
    pub grid_cols: usize,
    pub positions: Vec<Point3<f64>>,
}

impl LedLayout {
    /// A `rows x cols` grid with the given pitch, centered in the room at the
    /// LED mounting height. Columns run along the room length.
    pub fn centered_grid(room: &RoomGeometry, rows: usize, cols: usize, pitch: f64) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidConfig("LED grid needs at least one row and column".into()));
        }
        if !(pitch > 0.0) {
            return Err(Error::InvalidConfig("LED pitch must be positive".into()));
        }
        let (cx, cy) = room.center();
        let mut positions = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                let x = cx + (c as f64 - (cols as f64 - 1.0) / 2.0) * pitch;
                let y = cy + (r as f64 - (rows as f64 - 1.0) / 2.0) * pitch;
                if !(0.0..=room.length).contains(&x) || !(0.0..=room.width).contains(&y) {
                    return Err(Error::InvalidConfig(format!("LED at ({x:.3}, {y:.3}) lies outside the room")));
                }
                positions.push(Point3::new(x, y, room.led_mount_height));
            }
        }
        Ok(Self { grid_rows: rows, grid_cols: cols, positions })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// Transmitter and receiver device constants (SI units, angles in degrees).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviceConstants {
    pub bandwidth: f64,
    pub half_intensity_semiangle_deg: f64,
    pub conversion_factor: f64,
    pub pd_area: f64,
    pub responsivity: f64,
    pub fov_deg: f64,
    pub filter_gain: f64,
    pub concentrator_index: f64,
    pub ambient_photocurrent: f64,
    pub preamp_noise_density: f64,
    pub elementary_charge: f64,
}

impl DeviceConstants {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.bandwidth,
            self.half_intensity_semiangle_deg,
            self.conversion_factor,
            self.pd_area,
            self.responsivity,
            self.fov_deg,
            self.filter_gain,
            self.concentrator_index,
            self.ambient_photocurrent,
            self.preamp_noise_density,
            self.elementary_charge,
        ];
        if all.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidConfig("device constants must be strictly positive".into()));
        }
        if self.half_intensity_semiangle_deg >= 90.0 || self.fov_deg > 90.0 {
            return Err(Error::InvalidConfig("need 0 < semiangle < 90 and 0 < FoV <= 90 degrees".into()));
        }
        Ok(())
    }

    /// Lambertian order `m = -ln 2 / ln cos(semiangle)`.
    pub fn lambertian_order(&self) -> f64 {
        -LN_2 / self.half_intensity_semiangle_deg.to_radians().cos().ln()
    }

    /// Ideal non-imaging concentrator gain inside the field of view.
    pub fn concentrator_gain(&self) -> f64 {
        let s = self.fov_deg.to_radians().sin();
        self.concentrator_index * self.concentrator_index / (s * s)
    }
}

/// Line-of-sight DC gain between a downward-facing LED and an upward-facing photodiode.
///
/// Returns exactly zero when the incidence angle exceeds the field of view.
pub fn lambertian_gain(led: &Point3<f64>, user: &Point3<f64>, dev: &DeviceConstants) -> Result<f64> {
    let vertical = led.z - user.z;
    if !(vertical > 0.0) {
        return Err(Error::Domain(format!("LED must be strictly above the receiver (vertical separation {vertical})")));
    }
    let d2 = (led - user).norm_squared();
    let cos_angle = vertical / d2.sqrt();
    // irradiance and incidence angles coincide for parallel, facing planes
    if cos_angle < dev.fov_deg.to_radians().cos() {
        return Ok(0.0);
    }
    let m = dev.lambertian_order();
    Ok((m + 1.0) * dev.pd_area / (2.0 * PI * d2)
        * cos_angle.powf(m)
        * dev.filter_gain
        * dev.concentrator_gain()
        * cos_angle)
}

/// The three additive receiver noise contributions, in A².
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseTerms {
    pub shot: f64,
    pub ambient: f64,
    pub thermal: f64,
}

impl NoiseTerms {
    pub fn total(&self) -> f64 {
        self.shot + self.ambient + self.thermal
    }
}

/// Receiver noise for a user with channel vector `h` under DC biases `i_dc`.
pub fn noise_terms(h: &[f64], i_dc: &[f64], dev: &DeviceConstants) -> Result<NoiseTerms> {
    if h.len() != i_dc.len() {
        return Err(Error::Dimension(format!("h has {} entries, I_dc has {}", h.len(), i_dc.len())));
    }
    if h.iter().any(|v| !(*v >= 0.0)) || i_dc.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::Domain("need h >= 0 and I_dc > 0".into()));
    }
    let e = dev.elementary_charge;
    let b = dev.bandwidth;
    let received: f64 = dev.conversion_factor * h.iter().zip(i_dc).map(|(h, i)| h * i).sum::<f64>();
    Ok(NoiseTerms {
        shot: 2.0 * dev.responsivity * e * received * b,
        ambient: 4.0
            * PI
            * e
            * dev.pd_area
            * dev.responsivity
            * dev.ambient_photocurrent
            * (1.0 - dev.fov_deg.to_radians().cos())
            * b,
        thermal: dev.preamp_noise_density * dev.preamp_noise_density * b,
    })
}

pub fn noise_variance(h: &[f64], i_dc: &[f64], dev: &DeviceConstants) -> Result<f64> {
    noise_terms(h, i_dc, dev).map(|t| t.total())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SymbolDistribution {
    /// Uniform on [-1, 1].
    UniformOnUnitInterval,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SymbolModel {
    pub distribution: SymbolDistribution,
    pub variance: f64,
    /// Differential entropy in nats.
    pub entropy: f64,
}

impl SymbolModel {
    pub fn uniform() -> Self {
        Self { distribution: SymbolDistribution::UniformOnUnitInterval, variance: 1.0 / 3.0, entropy: LN_2 }
    }
}

impl Default for SymbolModel {
    fn default() -> Self {
        Self::uniform()
    }
}

/// One channel realization together with every per-user constant derived from it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "ChannelStateRepr", try_from = "ChannelStateRepr")]
pub struct ChannelState {
    /// `N_T x K`; column `k` is user `k`'s channel vector.
    pub h: DMatrix<f64>,
    pub sigma_sq: Vec<f64>,
    pub sigma_bar_sq: Vec<f64>,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub i_dc: Vec<f64>,
    pub i_max: f64,
    pub symbol: SymbolModel,
    pub led_positions: Vec<Point3<f64>>,
    pub user_positions: Vec<Point3<f64>>,
}

impl ChannelState {
    /// Builds the channel for explicit user positions. Degenerate users are
    /// kept; callers check [`ChannelState::degenerate_users`].
    pub fn from_positions(
        leds: &[Point3<f64>],
        users: &[Point3<f64>],
        dev: &DeviceConstants,
        symbol: SymbolModel,
        i_dc: Vec<f64>,
        i_max: f64,
    ) -> Result<Self> {
        if i_dc.len() != leds.len() {
            return Err(Error::Dimension("one DC bias per LED required".into()));
        }
        if i_dc.iter().any(|&i| !(i > 0.0 && i < i_max)) {
            return Err(Error::Domain("need 0 < I_dc < I_max for every LED".into()));
        }
        let (n_t, k) = (leds.len(), users.len());
        let mut h = DMatrix::zeros(n_t, k);
        for (ki, user) in users.iter().enumerate() {
            for (n, led) in leds.iter().enumerate() {
                h[(n, ki)] = lambertian_gain(led, user, dev)?;
            }
        }
        let gain = dev.responsivity * dev.conversion_factor;
        let mut sigma_sq = Vec::with_capacity(k);
        for ki in 0..k {
            let col: Vec<f64> = h.column(ki).iter().copied().collect();
            sigma_sq.push(noise_variance(&col, &i_dc, dev)?);
        }
        let sigma_bar_sq: Vec<f64> = sigma_sq.iter().map(|s| s / (gain * gain)).collect();
        let a_num = (2.0 * symbol.entropy).exp() / (2.0 * PI * std::f64::consts::E);
        let a = sigma_bar_sq.iter().map(|s| a_num / s).collect();
        let b = sigma_bar_sq.iter().map(|s| symbol.variance / s).collect();
        Ok(Self {
            h,
            sigma_sq,
            sigma_bar_sq,
            a,
            b,
            i_dc,
            i_max,
            symbol,
            led_positions: leds.to_vec(),
            user_positions: users.to_vec(),
        })
    }

    pub fn n_leds(&self) -> usize {
        self.h.nrows()
    }

    pub fn n_users(&self) -> usize {
        self.h.ncols()
    }

    /// Users whose channel column is identically zero.
    pub fn degenerate_users(&self) -> Vec<usize> {
        (0..self.n_users()).filter(|&k| self.h.column(k).iter().all(|&v| v == 0.0)).collect()
    }

    pub fn is_degenerate(&self) -> bool {
        !self.degenerate_users().is_empty()
    }

    /// Whether `H` has full column rank, judged by `s_min > 1e-12 s_max`.
    pub fn has_full_column_rank(&self) -> bool {
        if self.n_leds() < self.n_users() {
            return false;
        }
        let s = self.h.clone().singular_values();
        s.min() > 1e-12 * s.max()
    }

    /// Per-row amplitude budget `min(I_dc, I_max - I_dc)`.
    pub fn amplitude_budget(&self) -> Vec<f64> {
        self.i_dc.iter().map(|&i| i.min(self.i_max - i)).collect()
    }

    pub fn channel(&self, k: usize) -> Vec<f64> {
        self.h.column(k).iter().copied().collect()
    }
}

/// Independent RNG stream for realization `index` of a batch seeded with `seed`.
pub fn realization_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Seed for the random initial precoder of realization `index`, drawn from a
/// stream disjoint from the one that places the users.
pub fn init_seed(seed: u64, index: u64) -> u64 {
    realization_rng(seed, index | 1 << 63).next_u64()
}

/// Draws one non-degenerate scenario for `cfg`, reproducible from `seed`.
pub fn generate_scenario(cfg: &SystemConfig, seed: u64) -> Result<ChannelState> {
    generate_realization(cfg, seed, 0)
}

/// Draws realization `index` of the batch seeded with `seed`.
///
/// Users are uniform over the receiver plane. Placements closer than the
/// configured minimum separation, leaving some user without any
/// line-of-sight LED, or giving a rank-deficient `H` (two users seen by the
/// same single LED) are redrawn.
pub fn generate_realization(cfg: &SystemConfig, seed: u64, index: u64) -> Result<ChannelState> {
    cfg.validate()?;
    let room = cfg.room_geometry()?;
    let layout = cfg.led_layout()?;
    let dev = cfg.device.constants();
    let i_dc_each = cfg.drive.dc_bias(dev.conversion_factor);
    let i_max = cfg.drive.max_current(i_dc_each);
    let i_dc = vec![i_dc_each; layout.len()];
    let mut rng = realization_rng(seed, index);
    let k = cfg.users.count;
    let mut last_reason = String::new();
    for _ in 0..cfg.users.max_resample {
        let users: Vec<Point3<f64>> = (0..k)
            .map(|_| {
                Point3::new(rng.gen::<f64>() * room.length, rng.gen::<f64>() * room.width, room.receiver_plane_height)
            })
            .collect();
        if let Some((i, j)) = too_close(&users, cfg.users.min_separation) {
            last_reason = format!("users {i} and {j} closer than {} m", cfg.users.min_separation);
            continue;
        }
        let state =
            ChannelState::from_positions(&layout.positions, &users, &dev, SymbolModel::uniform(), i_dc.clone(), i_max)?;
        if state.is_degenerate() {
            last_reason = format!("users {:?} outside every field of view", state.degenerate_users());
            continue;
        }
        if !state.has_full_column_rank() {
            last_reason = "channel matrix is rank deficient".into();
            continue;
        }
        return Ok(state);
    }
    Err(Error::ScenarioRetriesExhausted { attempts: cfg.users.max_resample, reason: last_reason })
}

fn too_close(users: &[Point3<f64>], min_sep: f64) -> Option<(usize, usize)> {
    for i in 0..users.len() {
        for j in i + 1..users.len() {
            if (users[i] - users[j]).norm() < min_sep {
                return Some((i, j));
            }
        }
    }
    None
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChannelStateRepr {
    h: Vec<Vec<f64>>,
    sigma_sq: Vec<f64>,
    sigma_bar_sq: Vec<f64>,
    a: Vec<f64>,
    b: Vec<f64>,
    i_dc: Vec<f64>,
    i_max: f64,
    symbol: SymbolModel,
    led_positions: Vec<[f64; 3]>,
    user_positions: Vec<[f64; 3]>,
}

impl From<ChannelState> for ChannelStateRepr {
    fn from(s: ChannelState) -> Self {
        let p = |v: &[Point3<f64>]| v.iter().map(|p| [p.x, p.y, p.z]).collect();
        Self {
            h: s.h.row_iter().map(|r| r.iter().copied().collect()).collect(),
            led_positions: p(&s.led_positions),
            user_positions: p(&s.user_positions),
            sigma_sq: s.sigma_sq,
            sigma_bar_sq: s.sigma_bar_sq,
            a: s.a,
            b: s.b,
            i_dc: s.i_dc,
            i_max: s.i_max,
            symbol: s.symbol,
        }
    }
}

impl TryFrom<ChannelStateRepr> for ChannelState {
    type Error = String;

    fn try_from(r: ChannelStateRepr) -> std::result::Result<Self, String> {
        let n_t = r.h.len();
        let k = r.h.first().map_or(0, Vec::len);
        if r.h.iter().any(|row| row.len() != k) {
            return Err("ragged channel matrix".into());
        }
        if [r.sigma_sq.len(), r.sigma_bar_sq.len(), r.a.len(), r.b.len(), r.user_positions.len()]
            .iter()
            .any(|&l| l != k)
            || r.i_dc.len() != n_t
            || r.led_positions.len() != n_t
        {
            return Err("channel state vectors disagree on N_T or K".into());
        }
        let p = |v: Vec<[f64; 3]>| v.into_iter().map(|[x, y, z]| Point3::new(x, y, z)).collect();
        Ok(Self {
            h: DMatrix::from_fn(n_t, k, |i, j| r.h[i][j]),
            sigma_sq: r.sigma_sq,
            sigma_bar_sq: r.sigma_bar_sq,
            a: r.a,
            b: r.b,
            i_dc: r.i_dc,
            i_max: r.i_max,
            symbol: r.symbol,
            led_positions: p(r.led_positions),
            user_positions: p(r.user_positions),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dev() -> DeviceConstants {
        crate::config::DeviceConfig::default().constants()
    }

    #[test]
    fn gain_directly_below_at_two_meters() {
        // (m+1) A_r / (2 pi d^2) * g with m = 1, g = 1.5^2 / sin^2(60 deg) = 3
        let h = lambertian_gain(&Point3::new(0.0, 0.0, 2.0), &Point3::origin(), &dev()).unwrap();
        assert!((h - 2.3873241463784304e-05).abs() / h < 1e-12, "{h}");
        assert!((dev().lambertian_order() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gain_vanishes_outside_fov() {
        // incidence of 75 degrees
        let x = 75f64.to_radians().tan();
        let h = lambertian_gain(&Point3::new(x, 0.0, 1.0), &Point3::origin(), &dev()).unwrap();
        assert_eq!(h, 0.0);
    }

    #[test]
    fn inverse_square_at_fixed_angles() {
        let near = lambertian_gain(&Point3::new(0.3, 0.4, 1.0), &Point3::origin(), &dev()).unwrap();
        let far = lambertian_gain(&Point3::new(0.6, 0.8, 2.0), &Point3::origin(), &dev()).unwrap();
        assert!((near / far - 4.0).abs() < 1e-12);
    }

    #[test]
    fn led_level_with_receiver_is_a_domain_error() {
        let r = lambertian_gain(&Point3::new(1.0, 0.0, 0.0), &Point3::origin(), &dev());
        assert!(matches!(r, Err(Error::Domain(_))));
    }

    #[test]
    fn noise_with_dark_channel_matches_golden() {
        // ambient + thermal only; frozen from an independent evaluation
        let s = noise_variance(&[0.0; 4], &[0.5; 4], &dev()).unwrap();
        assert!((s - 1.2383221149763142e-14).abs() / s < 1e-12, "{s:e}");
    }

    #[test]
    fn doubling_bias_doubles_shot_noise_only() {
        let h = [1e-5, 2e-5, 0.0, 3e-6];
        let t1 = noise_terms(&h, &[0.5; 4], &dev()).unwrap();
        let t2 = noise_terms(&h, &[1.0; 4], &dev()).unwrap();
        assert!((t2.shot / t1.shot - 2.0).abs() < 1e-14);
        assert_eq!(t1.ambient, t2.ambient);
        assert_eq!(t1.thermal, t2.thermal);
        assert!(t1.shot >= 0.0 && t1.ambient >= 0.0 && t1.thermal > 0.0);
    }

    #[test]
    fn layouts_have_expected_sizes() {
        for (r, c, k, n) in [(2, 2, 3, 4), (2, 3, 4, 6), (3, 3, 6, 9)] {
            let cfg = SystemConfig::with_layout(r, c, k);
            let ch = generate_scenario(&cfg, 7).unwrap();
            assert_eq!(ch.h.nrows(), n);
            assert_eq!(ch.h.ncols(), k);
            assert!(!ch.is_degenerate());
        }
    }

    #[test]
    fn same_seed_same_scenario() {
        let cfg = SystemConfig::default();
        let a = crate::json::to_string(&generate_scenario(&cfg, 11).unwrap()).unwrap();
        let b = crate::json::to_string(&generate_scenario(&cfg, 11).unwrap()).unwrap();
        assert_eq!(a, b);
        let c = crate::json::to_string(&generate_scenario(&cfg, 12).unwrap()).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn user_outside_every_fov_is_flagged() {
        // LEDs 1.65 m above the receiver plane see at most 1.65 * tan(60 deg) = 2.86 m sideways.
        let room = RoomGeometry::new(20.0, 20.0, 3.0, 2.5, 0.85).unwrap();
        let layout = LedLayout::centered_grid(&room, 2, 2, 2.0).unwrap();
        let users = [Point3::new(10.0, 10.0, 0.85), Point3::new(19.5, 19.5, 0.85)];
        let ch =
            ChannelState::from_positions(&layout.positions, &users, &dev(), SymbolModel::uniform(), vec![0.5; 4], 1.0)
                .unwrap();
        assert_eq!(ch.degenerate_users(), vec![1]);
        assert!(ch.h.column(0).iter().all(|&v| v > 0.0));
    }

    #[test]
    fn a_times_sigma_bar_is_geometry_free() {
        let ch = generate_scenario(&SystemConfig::with_layout(3, 3, 6), 3).unwrap();
        let expected = 2.0 / (PI * std::f64::consts::E);
        for k in 0..6 {
            assert!((ch.a[k] * ch.sigma_bar_sq[k] - expected).abs() / expected < 1e-14);
            assert!((ch.b[k] * ch.sigma_bar_sq[k] - 1.0 / 3.0).abs() < 1e-14);
        }
    }

    #[test]
    fn channel_state_json_round_trip() {
        let ch = generate_scenario(&SystemConfig::default(), 5).unwrap();
        let text = crate::json::to_string_pretty(&ch).unwrap();
        let back: ChannelState = serde_json::from_str(&text).unwrap();
        assert_eq!(back, ch);
    }
}
