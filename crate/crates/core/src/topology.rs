//! Static node placement around the parameter server at the origin.

use serde::{Deserialize, Serialize};

use crate::rng::{substream, RngStream, StreamKind, StreamLabel};
use crate::{Error, Result};

/// Symmetric placement band `[-hi, -lo] ∪ [lo, hi]` for one coordinate axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub lo: f64,
    pub hi: f64,
}

impl Band {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn validate(&self, field: &str) -> Result<()> {
        if !(self.lo.is_finite() && self.hi.is_finite()) {
            return Err(Error::config(field, "band bounds must be finite"));
        }
        if self.lo < 0.0 {
            return Err(Error::config(field, "band lower bound must be >= 0"));
        }
        if self.lo > self.hi {
            return Err(Error::config(
                field,
                format!("invalid band: lo {} > hi {}", self.lo, self.hi),
            ));
        }
        if self.hi <= 0.0 {
            return Err(Error::config(field, "band upper bound must be > 0"));
        }
        Ok(())
    }

    /// Both halves have equal length, so a fair sign flip followed by a
    /// uniform magnitude is uniform over the union.
    fn sample(&self, rng: &mut RngStream) -> f64 {
        let magnitude = self.lo + (self.hi - self.lo) * rng.sample_unit();
        if rng.sample_unit() < 0.5 {
            -magnitude
        } else {
            magnitude
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        let a = x.abs();
        a >= self.lo && a <= self.hi
    }
}

/// Node counts and placement bands.
#[derive(Debug, Clone, PartialEq)]
pub struct Placement {
    pub devices: usize,
    pub inband: usize,
    pub outband: usize,
    pub device_band: Band,
    pub inband_band: Band,
    pub outband_band: Band,
}

pub type Point = (f64, f64);

/// Positions and all pairwise distances, frozen for the whole run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Geometry {
    pub device_pos: Vec<Point>,
    pub inband_pos: Vec<Point>,
    pub outband_pos: Vec<Point>,
    /// Device to PS.
    pub d_m: Vec<f64>,
    /// In-band interferer to PS.
    pub d_i_in: Vec<f64>,
    /// `d_mi_in[m][i]`: in-band interferer `i` to device `m`.
    pub d_mi_in: Vec<Vec<f64>>,
    /// `d_mk_out[m][k]`: out-band source `k` to device `m`.
    pub d_mk_out: Vec<Vec<f64>>,
}

fn dist(a: Point, b: Point) -> f64 {
    (a.0 - b.0).hypot(a.1 - b.1)
}

fn sample_points(seed: u64, entity: u64, n: usize, band: Band) -> Vec<Point> {
    let mut rng = substream(seed, StreamLabel::new(StreamKind::Geometry, entity, 0));
    (0..n)
        .map(|_| {
            let x = band.sample(&mut rng);
            let y = band.sample(&mut rng);
            (x, y)
        })
        .collect()
}

/// Samples a deployment. Each node class draws from its own substream, so
/// the first `m` device positions do not depend on the total device count.
pub fn build_geometry(placement: &Placement, seed: u64) -> Result<Geometry> {
    placement.device_band.validate("device_band")?;
    placement.inband_band.validate("inband_band")?;
    placement.outband_band.validate("outband_band")?;
    let devices = sample_points(seed, 0, placement.devices, placement.device_band);
    let inband = sample_points(seed, 1, placement.inband, placement.inband_band);
    let outband = sample_points(seed, 2, placement.outband, placement.outband_band);
    Geometry::from_positions(devices, inband, outband)
}

impl Geometry {
    pub fn from_positions(
        device_pos: Vec<Point>,
        inband_pos: Vec<Point>,
        outband_pos: Vec<Point>,
    ) -> Result<Self> {
        const PS: Point = (0.0, 0.0);
        let d_m: Vec<f64> = device_pos.iter().map(|&p| dist(p, PS)).collect();
        let d_i_in: Vec<f64> = inband_pos.iter().map(|&p| dist(p, PS)).collect();
        let d_mi_in: Vec<Vec<f64>> = device_pos
            .iter()
            .map(|&m| inband_pos.iter().map(|&i| dist(m, i)).collect())
            .collect();
        let d_mk_out: Vec<Vec<f64>> = device_pos
            .iter()
            .map(|&m| outband_pos.iter().map(|&k| dist(m, k)).collect())
            .collect();

        let all = d_m
            .iter()
            .chain(&d_i_in)
            .chain(d_mi_in.iter().flatten())
            .chain(d_mk_out.iter().flatten());
        for &d in all {
            if !(d > 0.0 && d.is_finite()) {
                return Err(Error::Domain(format!(
                    "node distances must be strictly positive, got {d}"
                )));
            }
        }
        Ok(Self {
            device_pos,
            inband_pos,
            outband_pos,
            d_m,
            d_i_in,
            d_mi_in,
            d_mk_out,
        })
    }

    pub fn num_devices(&self) -> usize {
        self.device_pos.len()
    }

    pub fn num_inband(&self) -> usize {
        self.inband_pos.len()
    }

    pub fn num_outband(&self) -> usize {
        self.outband_pos.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn default_placement(m: usize) -> Placement {
        Placement {
            devices: m,
            inband: 100,
            outband: 100,
            device_band: Band::new(20.0, 100.0),
            inband_band: Band::new(120.0, 140.0),
            outband_band: Band::new(25.0, 100.0),
        }
    }

    #[test]
    fn three_four_five() {
        let g = Geometry::from_positions(vec![(60.0, 80.0)], vec![], vec![]).unwrap();
        assert_eq!(g.d_m[0], 100.0);
    }

    #[test]
    fn collinear_interferer() {
        let g = Geometry::from_positions(vec![(20.0, 0.0)], vec![(120.0, 0.0)], vec![]).unwrap();
        assert_eq!(g.d_mi_in[0][0], 100.0);
        assert_eq!(g.d_i_in[0], 120.0);
    }

    #[test]
    fn coordinates_stay_in_bands() {
        let mut p = default_placement(10_000);
        p.inband = 200;
        let g = build_geometry(&p, 3).unwrap();
        for &(x, y) in &g.device_pos {
            assert!(x.abs() >= 20.0 && y.abs() >= 20.0, "({x}, {y})");
            assert!(p.device_band.contains(x) && p.device_band.contains(y));
        }
        for &(x, y) in &g.inband_pos {
            assert!(p.inband_band.contains(x) && p.inband_band.contains(y));
        }
        // Both signs show up on each axis.
        assert!(g.device_pos.iter().any(|p| p.0 < 0.0));
        assert!(g.device_pos.iter().any(|p| p.0 > 0.0));
    }

    #[test]
    fn inverted_band_rejected() {
        let mut p = default_placement(3);
        p.device_band = Band::new(100.0, 20.0);
        assert!(matches!(build_geometry(&p, 1), Err(Error::Config { .. })));
    }

    #[test]
    fn device_prefix_independent_of_count() {
        let small = build_geometry(&default_placement(10), 5).unwrap();
        let large = build_geometry(&default_placement(50), 5).unwrap();
        assert_eq!(small.device_pos[..], large.device_pos[..10]);
        assert_eq!(small.inband_pos, large.inband_pos);
    }

    #[test]
    fn empty_counts_are_fine() {
        let mut p = default_placement(0);
        p.inband = 0;
        p.outband = 0;
        let g = build_geometry(&p, 0).unwrap();
        assert_eq!(g.num_devices(), 0);
    }

    proptest! {
        #[test]
        fn matrices_consistent_with_positions(seed in any::<u64>()) {
            let mut p = default_placement(6);
            p.inband = 5;
            p.outband = 5;
            let g = build_geometry(&p, seed).unwrap();
            for (m, &pm) in g.device_pos.iter().enumerate() {
                prop_assert!((g.d_m[m] - (pm.0 * pm.0 + pm.1 * pm.1).sqrt()).abs() < 1e-12);
                for (i, &pi) in g.inband_pos.iter().enumerate() {
                    let d = g.d_mi_in[m][i];
                    prop_assert!(d > 0.0);
                    prop_assert_eq!(d, dist(pi, pm));
                    // triangle: device -> PS -> interferer
                    prop_assert!(d <= g.d_m[m] + g.d_i_in[i] + 1e-9);
                    prop_assert!(g.d_i_in[i] <= g.d_m[m] + d + 1e-9);
                }
                for &d in &g.d_mk_out[m] {
                    prop_assert!(d > 0.0);
                }
            }
        }
    }
}
