//! Pixelated plate structures: tiles, genomes, the assembled 43×43 plate and
//! the physical sizing rules for the pixel grid.
//!
//! A plate is fully determined by three 7×7 tiles. Each 21×21 quadrant holds
//! nine tiles in the layout
//!
//! ```text
//! T1 T2 T1
//! T2 T3 T2
//! T1 T2 T1
//! ```
//!
//! and the four quadrants are mirror images of each other around a fixed
//! all-metal feed cross on row/column 21.

use std::fmt;

use num_bigint::BigUint;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const TILE_SIDE: usize = 7;
pub const TILE_CELLS: usize = TILE_SIDE * TILE_SIDE;
pub const TILES_PER_GENOME: usize = 3;
pub const GENOME_BITS: usize = TILE_CELLS * TILES_PER_GENOME;
/// Packed genome length in bytes (147 bits, MSB first, zero padded).
pub const GENOME_BYTES: usize = GENOME_BITS.div_ceil(8);
pub const GENOME_HEX_LEN: usize = GENOME_BYTES * 2;

pub const QUADRANT_SIDE: usize = 21;
pub const PLATE_SIDE: usize = 2 * QUADRANT_SIDE + 1;
pub const PLATE_CELLS: usize = PLATE_SIDE * PLATE_SIDE;
/// Row and column index of the feed cross.
pub const CROSS_INDEX: usize = QUADRANT_SIDE;
/// Cells on the feed cross (43 + 43 − 1).
pub const CROSS_CELLS: usize = 2 * PLATE_SIDE - 1;

/// Tile index (0 = T1, 1 = T2, 2 = T3) at each tile slot of a quadrant.
const QUADRANT_LAYOUT: [[usize; 3]; 3] = [[0, 1, 0], [1, 2, 1], [0, 1, 0]];

/// Speed of light in mm·GHz.
const C_MM_GHZ: f64 = 299.792_458;

/// A 7×7 binary tile, row-major, `true` = copper.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Tile {
    cells: [bool; TILE_CELLS],
}

impl Tile {
    pub fn filled(copper: bool) -> Self {
        Tile {
            cells: [copper; TILE_CELLS],
        }
    }

    pub fn from_cells(cells: [bool; TILE_CELLS]) -> Self {
        Tile { cells }
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.cells[row * TILE_SIDE + col]
    }

    pub fn set(&mut self, row: usize, col: usize, copper: bool) {
        self.cells[row * TILE_SIDE + col] = copper;
    }

    pub fn cells(&self) -> &[bool; TILE_CELLS] {
        &self.cells
    }

    pub fn count_ones(&self) -> usize {
        self.cells.iter().filter(|&&c| c).count()
    }
}

impl fmt::Debug for Tile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for row in self.cells.chunks(TILE_SIDE) {
            let line: String = row.iter().map(|&c| if c { '1' } else { '0' }).collect();
            writeln!(f, "{line}")?;
        }
        Ok(())
    }
}

/// The 147-bit search variable: three tiles T1, T2, T3.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct PlateGenome {
    pub tiles: [Tile; TILES_PER_GENOME],
}

impl PlateGenome {
    pub fn new(t1: Tile, t2: Tile, t3: Tile) -> Self {
        PlateGenome {
            tiles: [t1, t2, t3],
        }
    }

    pub fn filled(copper: bool) -> Self {
        let t = Tile::filled(copper);
        PlateGenome::new(t, t, t)
    }

    /// Builds a genome from 147 bits: 0–48 fill T1 row-major, 49–97 T2,
    /// 98–146 T3.
    pub fn from_bits(bits: &[bool]) -> Result<Self> {
        if bits.len() != GENOME_BITS {
            return Err(Error::Encoding(format!(
                "genome needs {GENOME_BITS} bits, got {}",
                bits.len()
            )));
        }
        let mut tiles = [Tile::filled(false); TILES_PER_GENOME];
        for (tile, chunk) in tiles.iter_mut().zip(bits.chunks(TILE_CELLS)) {
            tile.cells.copy_from_slice(chunk);
        }
        Ok(PlateGenome { tiles })
    }

    pub fn to_bits(&self) -> Vec<bool> {
        self.tiles.iter().flat_map(|t| t.cells).collect()
    }

    /// Packs the bits MSB-first into 19 bytes; the last 5 bits are zero.
    pub fn to_bytes(&self) -> [u8; GENOME_BYTES] {
        let mut out = [0u8; GENOME_BYTES];
        for (k, bit) in self.to_bits().into_iter().enumerate() {
            if bit {
                out[k / 8] |= 0x80 >> (k % 8);
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() != GENOME_BYTES {
            return Err(Error::Encoding(format!(
                "packed genome needs {GENOME_BYTES} bytes, got {}",
                bytes.len()
            )));
        }
        let padding_mask = 0xFFu8 >> (GENOME_BITS % 8);
        if bytes[GENOME_BYTES - 1] & padding_mask != 0 {
            return Err(Error::Encoding("nonzero padding bits in packed genome".into()));
        }
        let bits: Vec<bool> = (0..GENOME_BITS)
            .map(|k| bytes[k / 8] & (0x80 >> (k % 8)) != 0)
            .collect();
        PlateGenome::from_bits(&bits)
    }

    /// 38 lowercase hex characters.
    pub fn to_hex(&self) -> String {
        self.to_bytes().iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn from_hex(hex: &str) -> Result<Self> {
        let hex = hex.trim();
        if hex.len() != GENOME_HEX_LEN || !hex.is_ascii() {
            return Err(Error::Encoding(format!(
                "genome hex must be {GENOME_HEX_LEN} characters, got `{hex}`"
            )));
        }
        let bytes = (0..GENOME_BYTES)
            .map(|k| {
                u8::from_str_radix(&hex[2 * k..2 * k + 2], 16)
                    .map_err(|_| Error::Encoding(format!("invalid hex digit in `{hex}`")))
            })
            .collect::<Result<Vec<u8>>>()?;
        PlateGenome::from_bytes(&bytes)
    }

    pub fn count_ones(&self) -> usize {
        self.tiles.iter().map(Tile::count_ones).sum()
    }
}

pub fn genome_from_bits(bits: &[bool]) -> Result<PlateGenome> {
    PlateGenome::from_bits(bits)
}

pub fn genome_to_bits(genome: &PlateGenome) -> Vec<bool> {
    genome.to_bits()
}

/// Uniformly random genome; deterministic for a fixed seed.
pub fn random_genome(seed: u64) -> PlateGenome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_genome_with(&mut rng)
}

pub fn random_genome_with<R: Rng + ?Sized>(rng: &mut R) -> PlateGenome {
    let bits: Vec<bool> = (0..GENOME_BITS).map(|_| rng.random::<bool>()).collect();
    PlateGenome::from_bits(&bits).expect("generated exactly GENOME_BITS bits")
}

/// Binary plate grid, row-major, 1 = copper.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct PlateMatrix {
    side: usize,
    cells: Vec<u8>,
}

impl PlateMatrix {
    pub fn side(&self) -> usize {
        self.side
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.cells[row * self.side + col]
    }

    pub fn cells(&self) -> &[u8] {
        &self.cells
    }

    pub fn count_ones(&self) -> usize {
        self.cells.iter().map(|&c| c as usize).sum()
    }

    /// Wraps raw cells after checking the plate invariants.
    pub fn from_cells(cells: Vec<u8>) -> Result<Self> {
        if cells.len() != PLATE_CELLS {
            return Err(Error::Encoding(format!(
                "plate needs {PLATE_CELLS} cells, got {}",
                cells.len()
            )));
        }
        if cells.iter().any(|&c| c > 1) {
            return Err(Error::Encoding("plate cells must be 0 or 1".into()));
        }
        let plate = PlateMatrix {
            side: PLATE_SIDE,
            cells,
        };
        if !plate.has_feed_cross() {
            return Err(Error::Encoding("feed cross is not fully metal".into()));
        }
        if !plate.is_mirror_symmetric() {
            return Err(Error::Encoding("plate is not mirror symmetric".into()));
        }
        Ok(plate)
    }

    pub fn has_feed_cross(&self) -> bool {
        (0..self.side).all(|k| self.get(CROSS_INDEX, k) == 1 && self.get(k, CROSS_INDEX) == 1)
    }

    pub fn is_mirror_symmetric(&self) -> bool {
        let last = self.side - 1;
        (0..self.side).all(|i| {
            (0..self.side).all(|j| {
                let c = self.get(i, j);
                c == self.get(last - i, j) && c == self.get(i, last - j)
            })
        })
    }

    /// 43 lines of 43 comma-separated 0/1 values.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.side * self.side * 2);
        for row in self.cells.chunks(self.side) {
            let line: Vec<&str> = row.iter().map(|&c| if c == 1 { "1" } else { "0" }).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut cells = Vec::with_capacity(PLATE_CELLS);
        let mut rows = 0;
        for (idx, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            rows += 1;
            let before = cells.len();
            for field in line.split(',') {
                match field.trim() {
                    "0" => cells.push(0),
                    "1" => cells.push(1),
                    other => {
                        return Err(Error::parse(idx + 1, format!("expected 0 or 1, got `{other}`")))
                    }
                }
            }
            if cells.len() - before != PLATE_SIDE {
                return Err(Error::parse(
                    idx + 1,
                    format!("expected {PLATE_SIDE} columns, got {}", cells.len() - before),
                ));
            }
        }
        if rows != PLATE_SIDE {
            return Err(Error::Encoding(format!("expected {PLATE_SIDE} rows, got {rows}")));
        }
        PlateMatrix::from_cells(cells)
    }

    /// Plain PBM (P1), 1 = black = copper.
    pub fn to_pbm(&self) -> String {
        let mut out = format!("P1\n{} {}\n", self.side, self.side);
        for row in self.cells.chunks(self.side) {
            let line: Vec<&str> = row.iter().map(|&c| if c == 1 { "1" } else { "0" }).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }
}

impl fmt::Debug for PlateMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for row in self.cells.chunks(self.side) {
            let line: String = row.iter().map(|&c| if c == 1 { '#' } else { '.' }).collect();
            writeln!(f, "{line}")?;
        }
        Ok(())
    }
}

/// Expands a genome to the 21×21 quadrant (tiles unreflected).
pub fn quadrant(genome: &PlateGenome) -> [[u8; QUADRANT_SIDE]; QUADRANT_SIDE] {
    let mut q = [[0u8; QUADRANT_SIDE]; QUADRANT_SIDE];
    for (i, row) in q.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            let tile = &genome.tiles[QUADRANT_LAYOUT[i / TILE_SIDE][j / TILE_SIDE]];
            *cell = tile.get(i % TILE_SIDE, j % TILE_SIDE) as u8;
        }
    }
    q
}

/// Places the quadrant in all four corners by mirroring and forces the feed
/// cross to metal.
pub fn assemble_plate(genome: &PlateGenome) -> PlateMatrix {
    let q = quadrant(genome);
    let last = PLATE_SIDE - 1;
    let mut cells = vec![0u8; PLATE_CELLS];
    for (i, row) in q.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            for (r, k) in [(i, j), (i, last - j), (last - i, j), (last - i, last - j)] {
                cells[r * PLATE_SIDE + k] = c;
            }
        }
    }
    for k in 0..PLATE_SIDE {
        cells[CROSS_INDEX * PLATE_SIDE + k] = 1;
        cells[k * PLATE_SIDE + CROSS_INDEX] = 1;
    }
    PlateMatrix {
        side: PLATE_SIDE,
        cells,
    }
}

/// Number of distinct plates, 2^147, as an exact decimal string.
pub fn design_space_size() -> String {
    (BigUint::from(1u8) << GENOME_BITS).to_string()
}

/// Number of distinct 7×7 tiles, 2^49.
pub fn tile_space_size() -> u64 {
    1u64 << TILE_CELLS
}

/// Wavelength inside a substrate of relative permittivity `permittivity`,
/// approximated as λ0/√εr, in mm.
pub fn guided_wavelength(freq_ghz: f64, permittivity: f64) -> Result<f64> {
    if !(freq_ghz > 0.0) || !freq_ghz.is_finite() {
        return Err(Error::Domain(format!("frequency must be positive, got {freq_ghz} GHz")));
    }
    if !(permittivity >= 1.0) || !permittivity.is_finite() {
        return Err(Error::Domain(format!(
            "relative permittivity must be at least 1, got {permittivity}"
        )));
    }
    Ok(C_MM_GHZ / (freq_ghz * permittivity.sqrt()))
}

/// Physical dimensions of the coupler (FR-4 defaults).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeometryConfig {
    pub plate_side_mm: f64,
    pub pixel_side_mm: f64,
    pub substrate_permittivity: f64,
    pub substrate_height_mm: f64,
    pub loss_tangent: f64,
    pub plate_gap_mm: f64,
    pub copper_thickness_mm: f64,
    pub band_min_ghz: f64,
    pub band_max_ghz: f64,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        GeometryConfig {
            plate_side_mm: 62.0,
            pixel_side_mm: 1.4,
            substrate_permittivity: 4.3,
            substrate_height_mm: 1.6,
            loss_tangent: 0.025,
            plate_gap_mm: 5.0,
            copper_thickness_mm: 0.035,
            band_min_ghz: 1.0,
            band_max_ghz: 5.0,
        }
    }
}

impl GeometryConfig {
    pub fn validate(&self) -> Result<()> {
        let lengths = [
            ("plate_side_mm", self.plate_side_mm),
            ("pixel_side_mm", self.pixel_side_mm),
            ("substrate_height_mm", self.substrate_height_mm),
            ("plate_gap_mm", self.plate_gap_mm),
            ("copper_thickness_mm", self.copper_thickness_mm),
        ];
        for (name, v) in lengths {
            if !(v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.band_min_ghz > 0.0 && self.band_min_ghz < self.band_max_ghz) {
            return Err(Error::Config(format!(
                "band must satisfy 0 < min < max, got [{}, {}]",
                self.band_min_ghz, self.band_max_ghz
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConstraintCheck {
    pub name: &'static str,
    pub passed: bool,
    /// Value being constrained.
    pub value: f64,
    /// Bound it is compared against.
    pub bound: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConstraintReport {
    pub checks: Vec<ConstraintCheck>,
}

impl ConstraintReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn get(&self, name: &str) -> Option<&ConstraintCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

pub const CHECK_PIXEL_SIZE: &str = "pixel_below_lambda_g_over_20";
pub const CHECK_GRID_FIT: &str = "plate_fits_pixel_grid";
pub const CHECK_PLATE_SIZE: &str = "plate_below_lambda_g_at_band_min";

/// Evaluates the sizing rules. Failures are report entries; a config whose
/// band or permittivity makes the wavelength undefined fails those checks.
pub fn validate_constraints(config: &GeometryConfig) -> ConstraintReport {
    let eps = config.substrate_permittivity;
    let lambda_hi = guided_wavelength(config.band_max_ghz, eps).unwrap_or(f64::NAN);
    let lambda_lo = guided_wavelength(config.band_min_ghz, eps).unwrap_or(f64::NAN);

    let pixel_bound = lambda_hi / 20.0;
    let grid_bound = PLATE_SIDE as f64 * config.pixel_side_mm;
    ConstraintReport {
        checks: vec![
            ConstraintCheck {
                name: CHECK_PIXEL_SIZE,
                passed: config.pixel_side_mm < pixel_bound,
                value: config.pixel_side_mm,
                bound: pixel_bound,
            },
            ConstraintCheck {
                name: CHECK_GRID_FIT,
                passed: config.plate_side_mm >= grid_bound,
                value: config.plate_side_mm,
                bound: grid_bound,
            },
            ConstraintCheck {
                name: CHECK_PLATE_SIZE,
                passed: config.plate_side_mm < lambda_lo,
                value: config.plate_side_mm,
                bound: lambda_lo,
            },
        ],
    }
}
