//! Image-source room impulse responses (Allen & Berkley) with fractional
//! delays realized by a Hann-windowed sinc.

use std::f64::consts::{LN_10, PI};
use std::sync::OnceLock;

use super::{RoomSpec, Vec3};
use crate::error::{Error, Result};

/// Half-width of the fractional-delay interpolator in samples.
pub const SINC_HALF_WIDTH: usize = 8;
/// Hard cap on the reflection order.
pub const MAX_ORDER_CAP: usize = 20;

const TABLE_RES: usize = 1024;
/// Cutoff of the high-pass applied to reverberant responses.
pub const HIGHPASS_HZ: f64 = 100.0;

/// Hann-windowed sinc sampled on [-8, 8] with `TABLE_RES` points per sample.
fn sinc_table() -> &'static [f64] {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let half = SINC_HALF_WIDTH as f64;
        let n = 2 * SINC_HALF_WIDTH * TABLE_RES + 2;
        (0..n)
            .map(|i| {
                if i % TABLE_RES == 0 {
                    // integer offsets: exact zeros except at the center
                    return if i == SINC_HALF_WIDTH * TABLE_RES { 1.0 } else { 0.0 };
                }
                let t = i as f64 / TABLE_RES as f64 - half;
                if t.abs() >= half {
                    return 0.0;
                }
                let window = 0.5 * (1.0 + (PI * t / half).cos());
                let x = PI * t;
                window * x.sin() / x
            })
            .collect()
    })
}

/// Wall reflection coefficient from Eyring's reverberation formula.
///
/// Returns an error when `t60` cannot be realized by a coefficient strictly below one.
pub fn eyring_coefficient(room: &RoomSpec) -> Result<f64> {
    room.validate()?;
    if room.t60 == 0.0 {
        return Ok(0.0);
    }
    let exponent = -12.0 * LN_10 * room.volume() / (room.speed_of_sound * room.surface() * room.t60);
    let beta = exponent.exp();
    if !(beta < 1.0) || !beta.is_finite() {
        return Err(Error::Config(format!(
            "t60 = {} s needs a reflection coefficient >= 1",
            room.t60
        )));
    }
    Ok(beta)
}

/// Wall reflection coefficient whose image lattice decays at the requested `t60`.
///
/// With a uniform coefficient, a shoebox image lattice decays more slowly than
/// the diffuse-field formulas predict: near-axial image families reflect less
/// often per meter than the average. The coefficient is therefore solved
/// numerically so the Schroeder curve of the lattice energy (source and
/// receiver at the room center, direct path excluded) falls 60 dB in `t60`
/// when fitted between -5 and -25 dB. All six walls share the coefficient.
pub fn reflection_coefficient(room: &RoomSpec) -> Result<f64> {
    let eyring = eyring_coefficient(room)?;
    if eyring == 0.0 {
        return Ok(0.0);
    }
    let hist = LatticeHistogram::new(room);
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if hist.decay_time(mid) < room.t60 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Image energy `1/r^2` binned by arrival time and reflection order.
struct LatticeHistogram {
    /// `bins[order][t]`
    bins: Vec<Vec<f64>>,
    bin_width: f64,
}

impl LatticeHistogram {
    const BIN: f64 = 1e-3;

    fn new(room: &RoomSpec) -> Self {
        let c = room.speed_of_sound;
        let horizon = 1.5 * room.t60;
        let n_bins = (horizon / Self::BIN).ceil() as usize;
        let reach = horizon * c;
        let mut bins: Vec<Vec<f64>> = Vec::new();
        let axis = |len: f64| -> Vec<(f64, usize)> {
            // source and receiver at the center: offsets 2 u L (q = 0) and 2 u L - L (q = 1)
            let n = (reach / len).ceil() as i64 + 1;
            let mut v = Vec::new();
            for u in -n..=n {
                for q in 0..=1i64 {
                    let d = 2.0 * u as f64 * len - q as f64 * len;
                    if d.abs() <= reach {
                        v.push((d, (2 * u - q).unsigned_abs() as usize));
                    }
                }
            }
            v
        };
        let [lx, ly, lz] = room.dimensions;
        let (xs, ys, zs) = (axis(lx), axis(ly), axis(lz));
        for &(dx, ox) in &xs {
            for &(dy, oy) in &ys {
                let dxy = dx * dx + dy * dy;
                if dxy > reach * reach {
                    continue;
                }
                for &(dz, oz) in &zs {
                    let order = ox + oy + oz;
                    if order == 0 {
                        continue;
                    }
                    let r2 = dxy + dz * dz;
                    let bin = (r2.sqrt() / c / Self::BIN) as usize;
                    if bin >= n_bins {
                        continue;
                    }
                    if bins.len() <= order {
                        bins.resize(order + 1, vec![0.0; n_bins]);
                    }
                    bins[order][bin] += 1.0 / r2;
                }
            }
        }
        LatticeHistogram {
            bins,
            bin_width: Self::BIN,
        }
    }

    /// -5..-25 dB Schroeder fit extrapolated to -60 dB for coefficient `beta`.
    fn decay_time(&self, beta: f64) -> f64 {
        let n_bins = self.bins.first().map_or(0, Vec::len);
        let mut energy = vec![0.0; n_bins];
        let b2 = beta * beta;
        let mut g = 1.0;
        for row in &self.bins {
            for (e, h) in energy.iter_mut().zip(row) {
                *e += g * h;
            }
            g *= b2;
        }
        let mut edc = energy;
        for i in (0..edc.len().saturating_sub(1)).rev() {
            edc[i] += edc[i + 1];
        }
        let total = edc.first().copied().unwrap_or(0.0);
        if !(total > 0.0) {
            return 0.0;
        }
        let (mut n, mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (i, e) in edc.iter().enumerate() {
            let db = 10.0 * (e / total).log10();
            if (-25.0..=-5.0).contains(&db) {
                let t = i as f64 * self.bin_width;
                n += 1.0;
                sx += t;
                sy += db;
                sxx += t * t;
                sxy += t * db;
            }
        }
        if n < 2.0 {
            return 0.0;
        }
        let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
        if slope < 0.0 {
            -60.0 / slope
        } else {
            f64::INFINITY
        }
    }
}

/// Reflection order whose image paths cover 1.5 x t60, capped at [`MAX_ORDER_CAP`].
pub fn default_max_order(room: &RoomSpec) -> usize {
    if room.t60 == 0.0 {
        return 0;
    }
    let min_dim = room.dimensions.iter().cloned().fold(f64::INFINITY, f64::min);
    let order = (1.5 * room.t60 * room.speed_of_sound / min_dim).ceil() as usize;
    order.min(MAX_ORDER_CAP)
}

/// Impulse response length in samples: 1.5 x t60 plus the time to cross the room diagonal.
pub fn default_length(room: &RoomSpec) -> usize {
    let diag = room.dimensions.iter().map(|d| d * d).sum::<f64>().sqrt();
    let reverb = (1.5 * room.t60 * room.sample_rate).ceil() as usize;
    let direct = (diag * room.sample_rate / room.speed_of_sound).ceil() as usize;
    reverb + direct + 2 * SINC_HALF_WIDTH
}

/// Precomputed per-room state, reused across source/microphone pairs.
#[derive(Debug, Clone)]
pub struct RirGenerator {
    room: RoomSpec,
    beta: f64,
    max_order: usize,
    length: usize,
}

impl RirGenerator {
    pub fn new(room: &RoomSpec, max_order: usize) -> Result<Self> {
        let beta = reflection_coefficient(room)?;
        Ok(RirGenerator {
            room: room.clone(),
            beta,
            max_order,
            length: default_length(room),
        })
    }

    pub fn with_default_order(room: &RoomSpec) -> Result<Self> {
        Self::new(room, default_max_order(room))
    }

    pub fn room(&self) -> &RoomSpec {
        &self.room
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn max_order(&self) -> usize {
        self.max_order
    }

    pub fn length(&self) -> usize {
        self.length
    }

    /// Image offsets along one axis: (signed distance component, reflection count).
    fn axis_images(&self, src: f64, mic: f64, len: f64) -> Vec<(f64, usize)> {
        let n = self.max_order as i64;
        let mut out = Vec::new();
        for u in -(n / 2 + 1)..=(n / 2 + 1) {
            for q in 0..=1i64 {
                let order = (2 * u - q).unsigned_abs() as usize;
                if order > self.max_order {
                    continue;
                }
                let d = (1 - 2 * q) as f64 * src + 2.0 * u as f64 * len - mic;
                out.push((d, order));
            }
        }
        out.sort_by_key(|&(_, o)| o);
        out
    }

    pub fn generate(&self, src: &Vec3, mic: &Vec3) -> Result<Vec<f64>> {
        if !self.room.contains(src) {
            return Err(Error::Geometry(format!("source {src:?} is outside the room")));
        }
        if !self.room.contains(mic) {
            return Err(Error::Geometry(format!("microphone {mic:?} is outside the room")));
        }
        if src == mic {
            return Err(Error::Geometry("source and microphone coincide".into()));
        }

        let fs = self.room.sample_rate;
        let c = self.room.speed_of_sound;
        let samples_per_meter = fs / c;
        let table = sinc_table();
        let mut h = vec![0.0; self.length];
        let max_delay = (self.length + SINC_HALF_WIDTH) as f64;

        let beta_pow: Vec<f64> = (0..=self.max_order)
            .map(|k| if k == 0 { 1.0 } else { self.beta.powi(k as i32) })
            .collect();

        let [lx, ly, lz] = self.room.dimensions;
        let xs = self.axis_images(src[0], mic[0], lx);
        let ys = self.axis_images(src[1], mic[1], ly);
        let zs = self.axis_images(src[2], mic[2], lz);

        for &(dx, ox) in &xs {
            for &(dy, oy) in &ys {
                if ox + oy > self.max_order {
                    break;
                }
                for &(dz, oz) in &zs {
                    let order = ox + oy + oz;
                    if order > self.max_order {
                        break;
                    }
                    let gain = beta_pow[order];
                    if gain == 0.0 {
                        continue;
                    }
                    let dist = (dx * dx + dy * dy + dz * dz).sqrt();
                    let delay = dist * samples_per_meter;
                    if delay >= max_delay {
                        continue;
                    }
                    let amp = gain / (4.0 * PI * dist);
                    add_fractional_impulse(&mut h, delay, amp, table);
                }
            }
        }
        if self.beta > 0.0 {
            highpass(&mut h, fs);
        }
        Ok(h)
    }
}

/// Allen & Berkley 100 Hz high-pass. Same-sign images otherwise pile up
/// into a slowly decaying low-frequency component.
fn highpass(h: &mut [f64], fs: f64) {
    let w = 2.0 * PI * HIGHPASS_HZ / fs;
    let r1 = (-w).exp();
    let b1 = 2.0 * r1 * w.cos();
    let b2 = -r1 * r1;
    let a1 = -(1.0 + r1);
    let mut y = [0.0f64; 3];
    for v in h.iter_mut() {
        y[2] = y[1];
        y[1] = y[0];
        y[0] = b1 * y[1] + b2 * y[2] + *v;
        *v = y[0] + a1 * y[1] + r1 * y[2];
    }
}

fn add_fractional_impulse(h: &mut [f64], delay: f64, amp: f64, table: &[f64]) {
    let whole = delay.floor();
    let frac = delay - whole;
    let first = whole as i64 - (SINC_HALF_WIDTH as i64 - 1);
    // table position of the first tap, t = -(half - 1) - frac
    let pos = (1.0 - frac) * TABLE_RES as f64;
    let base = pos.floor() as usize;
    let w = pos - base as f64;
    for j in 0..2 * SINC_HALF_WIDTH {
        let n = first + j as i64;
        if n < 0 || n as usize >= h.len() {
            continue;
        }
        let i = base + j * TABLE_RES;
        let g = table[i] * (1.0 - w) + table[i + 1] * w;
        h[n as usize] += amp * g;
    }
}

/// Impulse response from `src` to `mic`, `room.sample_rate` samples per second.
pub fn generate_rir(room: &RoomSpec, src: &Vec3, mic: &Vec3, max_order: usize) -> Result<Vec<f64>> {
    RirGenerator::new(room, max_order)?.generate(src, mic)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn room(t60: f64) -> RoomSpec {
        RoomSpec::new([5.2, 6.2, 3.5], t60).unwrap()
    }

    /// Schroeder backward integration, line fit from -5 to -25 dB, extrapolated to -60 dB.
    fn schroeder_t60(h: &[f64], fs: f64) -> f64 {
        let mut edc: Vec<f64> = h.iter().rev().scan(0.0, |acc, x| {
            *acc += x * x;
            Some(*acc)
        }).collect();
        edc.reverse();
        let total = edc[0];
        let db: Vec<f64> = edc.iter().map(|e| 10.0 * (e / total).log10()).collect();
        let pts: Vec<(f64, f64)> = db
            .iter()
            .enumerate()
            .filter(|(_, &d)| d <= -5.0 && d >= -25.0)
            .map(|(i, &d)| (i as f64 / fs, d))
            .collect();
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        let slope = sxy / sxx;
        -60.0 / slope
    }

    #[test]
    fn anechoic_direct_path() {
        let r = room(0.0);
        // 343 m/s at 16 kHz: 2.1438 m is exactly 100 samples
        let d = 100.0 * 343.0 / 16000.0;
        let src = [1.0, 1.0, 1.5];
        let mic = [1.0 + d, 1.0, 1.5];
        let h = generate_rir(&r, &src, &mic, 0).unwrap();
        let peak = h
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().partial_cmp(&b.1.abs()).unwrap())
            .unwrap();
        assert_eq!(peak.0, 100);
        assert!((peak.1 - 1.0 / (4.0 * PI * d)).abs() < 1e-12);
        let rest: f64 = h.iter().enumerate().filter(|(i, _)| *i != 100).map(|(_, v)| v.abs()).sum();
        assert!(rest < 1e-12, "{rest}");
    }

    #[test]
    fn inverse_distance_law() {
        let r = room(0.0);
        let d = 50.0 * 343.0 / 16000.0;
        let src = [1.0, 2.0, 1.5];
        let h1 = generate_rir(&r, &src, &[1.0 + d, 2.0, 1.5], 0).unwrap();
        let h2 = generate_rir(&r, &src, &[1.0 + 2.0 * d, 2.0, 1.5], 0).unwrap();
        assert!((h2[100] / h1[50] - 0.5).abs() < 1e-12);
        assert!(h2[50].abs() < 1e-15 && h1[100].abs() < 1e-15);
    }

    #[test]
    fn reciprocity_of_direct_path() {
        let r = room(0.0);
        let a = [1.2, 2.3, 1.1];
        let b = [3.7, 4.1, 2.0];
        let h_ab = generate_rir(&r, &a, &b, 0).unwrap();
        let h_ba = generate_rir(&r, &b, &a, 0).unwrap();
        for (x, y) in h_ab.iter().zip(&h_ba) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn decay_matches_t60() {
        for t60 in [0.2, 0.3, 0.5, 0.7, 1.0] {
            let r = room(t60);
            // enough orders to cover the whole response
            let reach = default_length(&r) as f64 / r.sample_rate * r.speed_of_sound;
            let g = RirGenerator::new(&r, (reach / 3.5).ceil() as usize).unwrap();
            let h = g.generate(&[2.0, 3.0, 1.5], &[4.1, 1.2, 1.4]).unwrap();
            let est = schroeder_t60(&h, r.sample_rate);
            assert!(
                (est - t60).abs() <= 0.2 * t60,
                "t60 {t60}: Schroeder estimate {est} (order {})",
                g.max_order()
            );
        }
    }

    #[test]
    fn geometry_errors() {
        let r = room(0.3);
        assert!(matches!(
            generate_rir(&r, &[6.0, 1.0, 1.0], &[1.0, 1.0, 1.0], 2),
            Err(Error::Geometry(_))
        ));
        assert!(matches!(
            generate_rir(&r, &[1.0, 1.0, 1.0], &[1.0, 1.0, 1.0], 2),
            Err(Error::Geometry(_))
        ));
    }

    #[test]
    fn infinite_t60_is_config_error() {
        let mut r = room(0.3);
        r.t60 = f64::INFINITY;
        assert!(matches!(reflection_coefficient(&r), Err(Error::Config(_))));
    }

    #[test]
    fn order_cap() {
        assert_eq!(default_max_order(&room(0.0)), 0);
        assert_eq!(default_max_order(&room(0.7)), MAX_ORDER_CAP);
        assert_eq!(default_max_order(&room(0.02)), 3);
    }
}
