//! Closed-form stand-in for the EM simulator.
//!
//! The oracle maps a plate to a (resonance frequency, |S21|) pair through
//! three plate features: metal fill ρ, connectivity κ of the metal reachable
//! from the feed point, and a sine-mode-weighted fill τ. The coefficients are
//! pinned constants spanning the 1–5 GHz band and a −15…−2 dB coupling range;
//! they carry no electromagnetic meaning.

use std::f64::consts::PI;

use serde::Serialize;

use crate::geometry::{PlateMatrix, CROSS_INDEX, PLATE_SIDE};
use crate::sparams::ResonancePoint;

pub const ORACLE_F_MIN_GHZ: f64 = 1.0;
pub const ORACLE_F_SPAN_GHZ: f64 = 4.0;
pub const ORACLE_S21_MIN_DB: f64 = -15.0;
pub const ORACLE_S21_SPAN_DB: f64 = 13.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct OracleFeatures {
    /// Fraction of cells that are metal.
    pub fill: f64,
    /// Fraction of metal cells 4-connected to the center cell.
    pub connectivity: f64,
    /// Sine-mode-weighted fill.
    pub mode_weight: f64,
}

fn mode_weights() -> Vec<f64> {
    let n = PLATE_SIDE as f64 + 1.0;
    let s: Vec<f64> = (0..PLATE_SIDE).map(|i| (PI * (i as f64 + 1.0) / n).sin()).collect();
    let mut w = Vec::with_capacity(PLATE_SIDE * PLATE_SIDE);
    for si in &s {
        for sj in &s {
            w.push(si * sj);
        }
    }
    w
}

/// Size of the 4-connected metal component containing the center cell.
fn center_component_size(plate: &PlateMatrix) -> usize {
    let side = plate.side();
    let cells = plate.cells();
    let start = CROSS_INDEX * side + CROSS_INDEX;
    if cells[start] == 0 {
        return 0;
    }
    let mut seen = vec![false; cells.len()];
    let mut stack = vec![start];
    seen[start] = true;
    let mut size = 0;
    while let Some(k) = stack.pop() {
        size += 1;
        let (r, c) = (k / side, k % side);
        let mut visit = |nk: usize| {
            if cells[nk] == 1 && !seen[nk] {
                seen[nk] = true;
                stack.push(nk);
            }
        };
        if r > 0 {
            visit(k - side);
        }
        if r + 1 < side {
            visit(k + side);
        }
        if c > 0 {
            visit(k - 1);
        }
        if c + 1 < side {
            visit(k + 1);
        }
    }
    size
}

pub fn features(plate: &PlateMatrix) -> OracleFeatures {
    let ones = plate.count_ones();
    let total = plate.cells().len() as f64;
    let fill = ones as f64 / total;
    let connectivity = if ones == 0 {
        0.0
    } else {
        center_component_size(plate) as f64 / ones as f64
    };

    // row-major accumulation keeps results bit-identical across platforms
    let w = mode_weights();
    let (mut num, mut den) = (0.0, 0.0);
    for (&c, &wk) in plate.cells().iter().zip(&w) {
        if c == 1 {
            num += wk;
        }
        den += wk;
    }
    OracleFeatures {
        fill,
        connectivity,
        mode_weight: num / den,
    }
}

pub fn response(feat: &OracleFeatures) -> ResonancePoint {
    let OracleFeatures {
        fill: rho,
        connectivity: kappa,
        mode_weight: tau,
    } = *feat;
    let loading = (0.3 * rho + 0.5 * kappa * rho + 0.2 * tau).clamp(0.0, 1.0);
    let coupling = (kappa * rho.sqrt() * (0.7 + 0.3 * tau)).clamp(0.0, 1.0);
    ResonancePoint::new(
        ORACLE_F_MIN_GHZ + ORACLE_F_SPAN_GHZ * (1.0 - loading),
        ORACLE_S21_MIN_DB + ORACLE_S21_SPAN_DB * coupling,
    )
}

pub fn synthetic_em(plate: &PlateMatrix) -> ResonancePoint {
    response(&features(plate))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{assemble_plate, random_genome, PlateGenome, PLATE_CELLS};

    fn cells_of(plate: &PlateMatrix) -> Vec<u8> {
        plate.cells().to_vec()
    }

    /// Breadth-first labeling of every component; independent of the
    /// depth-first fill used by the oracle.
    fn component_sizes(cells: &[u8]) -> (Vec<usize>, Vec<usize>) {
        let side = PLATE_SIDE;
        let mut label = vec![usize::MAX; cells.len()];
        let mut sizes = Vec::new();
        for s in 0..cells.len() {
            if cells[s] == 0 || label[s] != usize::MAX {
                continue;
            }
            let id = sizes.len();
            let mut queue = std::collections::VecDeque::from([s]);
            label[s] = id;
            let mut n = 0;
            while let Some(k) = queue.pop_front() {
                n += 1;
                let (r, c) = ((k / side) as i64, (k % side) as i64);
                for (dr, dc) in [(-1, 0), (1, 0), (0, -1), (0, 1)] {
                    let (nr, nc) = (r + dr, c + dc);
                    if nr < 0 || nc < 0 || nr >= side as i64 || nc >= side as i64 {
                        continue;
                    }
                    let nk = (nr as usize) * side + nc as usize;
                    if cells[nk] == 1 && label[nk] == usize::MAX {
                        label[nk] = id;
                        queue.push_back(nk);
                    }
                }
            }
            sizes.push(n);
        }
        (label, sizes)
    }

    #[test]
    fn all_metal_saturates() {
        let plate = assemble_plate(&PlateGenome::filled(true));
        let f = features(&plate);
        assert_eq!(f.fill, 1.0);
        assert_eq!(f.connectivity, 1.0);
        assert!((f.mode_weight - 1.0).abs() < 1e-15);
        let p = synthetic_em(&plate);
        assert_eq!(p.f_res_ghz, 1.0);
        assert_eq!(p.s21_db, -2.0);
    }

    #[test]
    fn cross_only_plate() {
        let plate = assemble_plate(&PlateGenome::filled(false));
        let f = features(&plate);
        assert!((f.fill - 85.0 / 1849.0).abs() < 1e-15);
        assert!((f.fill - 0.045_97).abs() < 1e-5);
        assert_eq!(f.connectivity, 1.0);

        // separable form of the weight sums: Σw = (Σs)², cross = 2·s21·Σs − s21²
        let s: Vec<f64> = (1..=43).map(|i| (PI * i as f64 / 44.0).sin()).collect();
        let sum_s: f64 = s.iter().sum();
        let tau = (2.0 * s[21] * sum_s - s[21] * s[21]) / (sum_s * sum_s);
        assert!((f.mode_weight - tau).abs() < 1e-12);

        let rho = 85.0 / 1849.0;
        let expect_f = 1.0 + 4.0 * (1.0 - (0.3 * rho + 0.5 * rho + 0.2 * tau));
        let expect_s = -15.0 + 13.0 * (rho.sqrt() * (0.7 + 0.3 * tau));
        let p = synthetic_em(&plate);
        assert!((p.f_res_ghz - expect_f).abs() < 1e-12);
        assert!((p.s21_db - expect_s).abs() < 1e-12);
    }

    #[test]
    fn isolated_island_lowers_connectivity() {
        // T1 (0,0) lands on plate corners, far from the cross
        let mut g = PlateGenome::filled(false);
        g.tiles[0].set(0, 0, true);
        let plate = assemble_plate(&g);
        let f = features(&plate);
        assert!(f.connectivity < 1.0);
        let (label, sizes) = component_sizes(&cells_of(&plate));
        let center = sizes[label[CROSS_INDEX * PLATE_SIDE + CROSS_INDEX]];
        assert_eq!(center, 85);
        assert!((f.connectivity - center as f64 / plate.count_ones() as f64).abs() < 1e-15);
    }

    #[test]
    fn connectivity_matches_bfs_labeling() {
        for seed in 0..200 {
            let plate = assemble_plate(&random_genome(seed));
            let (label, sizes) = component_sizes(&cells_of(&plate));
            let center = sizes[label[CROSS_INDEX * PLATE_SIDE + CROSS_INDEX]];
            let expect = center as f64 / plate.count_ones() as f64;
            assert_eq!(features(&plate).connectivity, expect);
        }
    }

    #[test]
    fn responses_stay_in_range() {
        for seed in 0..10_000 {
            let p = synthetic_em(&assemble_plate(&random_genome(seed)));
            assert!((1.0..=5.0).contains(&p.f_res_ghz), "{p:?}");
            assert!((-15.0..=-2.0).contains(&p.s21_db), "{p:?}");
        }
    }

    #[test]
    fn deterministic() {
        let plate = assemble_plate(&random_genome(42));
        let a = synthetic_em(&plate);
        let b = synthetic_em(&plate.clone());
        assert_eq!(a.f_res_ghz.to_bits(), b.f_res_ghz.to_bits());
        assert_eq!(a.s21_db.to_bits(), b.s21_db.to_bits());
    }

    #[test]
    fn adding_connected_metal_never_raises_frequency() {
        // grow the center component one adjacent (symmetric) cell orbit at a time
        for seed in 0..20 {
            let plate = assemble_plate(&random_genome(seed));
            let mut cells = cells_of(&plate);
            let (label, _) = component_sizes(&cells);
            let center_label = label[CROSS_INDEX * PLATE_SIDE + CROSS_INDEX];
            let candidate = (0..PLATE_CELLS).find(|&k| {
                let (r, c) = (k / PLATE_SIDE, k % PLATE_SIDE);
                cells[k] == 0
                    && [(r.wrapping_sub(1), c), (r + 1, c), (r, c.wrapping_sub(1)), (r, c + 1)]
                        .iter()
                        .any(|&(nr, nc)| nr < PLATE_SIDE && nc < PLATE_SIDE && label[nr * PLATE_SIDE + nc] == center_label)
            });
            let Some(k) = candidate else { continue };
            let (r, c) = (k / PLATE_SIDE, k % PLATE_SIDE);
            let last = PLATE_SIDE - 1;
            for (rr, cc) in [(r, c), (last - r, c), (r, last - c), (last - r, last - c)] {
                cells[rr * PLATE_SIDE + cc] = 1;
            }
            let grown = PlateMatrix::from_cells(cells).unwrap();
            let (a, b) = (features(&plate), features(&grown));
            assert!(b.fill >= a.fill);
            assert!(b.connectivity * b.fill >= a.connectivity * a.fill);
            assert!(b.mode_weight >= a.mode_weight);
            assert!(synthetic_em(&grown).f_res_ghz <= synthetic_em(&plate).f_res_ghz);
        }
    }
}
