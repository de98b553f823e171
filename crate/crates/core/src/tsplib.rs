//! TSPLIB node-coordinate files (`EUC_2D` and `GEO`) and tour files.
//!
//! `EUC_2D` distances are rounded to the nearest integer, as in the
//! published optima. `GEO` coordinates are `DDD.MM` (degrees and minutes);
//! distances are either exact great-circle (haversine) lengths on the
//! TSPLIB sphere, or the integer TSPLIB formula.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::graph::{is_permutation, TspInstance};

/// Earth radius used by TSPLIB, in kilometers.
pub const TSPLIB_EARTH_RADIUS: f64 = 6378.388;
/// π as truncated in the TSPLIB reference code.
const TSPLIB_PI: f64 = 3.141592;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeoMode {
    /// Great-circle distance by the haversine formula, not rounded.
    Haversine,
    /// The TSPLIB reference formula, truncated to integers.
    Tsplib,
}

impl std::str::FromStr for GeoMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "haversine" => Ok(GeoMode::Haversine),
            "tsplib" => Ok(GeoMode::Tsplib),
            other => Err(Error::InvalidArgument(format!(
                "GEO mode must be `haversine` or `tsplib`, got `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightConvention {
    Euc2d,
    Geo(GeoMode),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TsplibInstance {
    pub name: String,
    pub convention: WeightConvention,
    pub coords: Vec<[f64; 2]>,
    /// Row-major `n×n` distances under `convention`.
    pub raw: Vec<f64>,
    /// Model input: `raw / scale`, so weights lie in `[0, 1]`.
    pub normalized: TspInstance,
    /// Largest raw distance.
    pub scale: f64,
}

impl TsplibInstance {
    pub fn n(&self) -> usize {
        self.coords.len()
    }

    pub fn raw_distance(&self, i: usize, j: usize) -> f64 {
        self.raw[i * self.n() + j]
    }

    /// Raw cost of a closed tour given as zero-based city indices.
    pub fn tour_cost(&self, order: &[usize]) -> Result<f64> {
        let n = self.n();
        if !is_permutation(order, n) {
            return Err(Error::InvalidArgument(format!("tour is not a permutation of 0..{n}")));
        }
        Ok((0..n).map(|k| self.raw_distance(order[k], order[(k + 1) % n])).sum())
    }

    /// Converts a cost in normalized units back to raw distance units.
    pub fn denormalize(&self, cost: f64) -> f64 {
        cost * self.scale
    }
}

fn nint(x: f64) -> f64 {
    (x + 0.5).floor()
}

/// `DDD.MM` to radians, as TSPLIB does it.
fn geo_radians(x: f64, pi: f64) -> f64 {
    let deg = x.trunc();
    let min = x - deg;
    pi * (deg + 5.0 * min / 3.0) / 180.0
}

pub fn euc_2d(a: [f64; 2], b: [f64; 2]) -> f64 {
    nint((a[0] - b[0]).hypot(a[1] - b[1]))
}

/// TSPLIB `GEO` distance (integer kilometers).
pub fn geo_tsplib(a: [f64; 2], b: [f64; 2]) -> f64 {
    let (lat1, lon1) = (geo_radians(a[0], TSPLIB_PI), geo_radians(a[1], TSPLIB_PI));
    let (lat2, lon2) = (geo_radians(b[0], TSPLIB_PI), geo_radians(b[1], TSPLIB_PI));
    let q1 = (lon1 - lon2).cos();
    let q2 = (lat1 - lat2).cos();
    let q3 = (lat1 + lat2).cos();
    let arg = (0.5 * ((1.0 + q1) * q2 - (1.0 - q1) * q3)).clamp(-1.0, 1.0);
    (TSPLIB_EARTH_RADIUS * arg.acos() + 1.0).trunc()
}

/// Great-circle distance between two `DDD.MM` points by the haversine formula.
pub fn geo_haversine(a: [f64; 2], b: [f64; 2]) -> f64 {
    let pi = std::f64::consts::PI;
    let (lat1, lon1) = (geo_radians(a[0], pi), geo_radians(a[1], pi));
    let (lat2, lon2) = (geo_radians(b[0], pi), geo_radians(b[1], pi));
    let h = ((lat2 - lat1) / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * ((lon2 - lon1) / 2.0).sin().powi(2);
    2.0 * TSPLIB_EARTH_RADIUS * h.sqrt().min(1.0).asin()
}

fn header_field(line: &str) -> Option<(String, String)> {
    let (k, v) = line.split_once(':')?;
    Some((k.trim().to_ascii_uppercase(), v.trim().to_string()))
}

/// Parses TSPLIB text. `geo` picks the distance for `GEO` files.
pub fn parse_tsplib(text: &str, geo: GeoMode) -> Result<TsplibInstance> {
    let mut name = String::new();
    let mut dimension: Option<usize> = None;
    let mut weight_type: Option<String> = None;
    let mut coords: Vec<Option<[f64; 2]>> = Vec::new();
    let mut in_coords = false;
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if trimmed == "EOF" {
            break;
        }
        if in_coords {
            let fields: Vec<&str> = trimmed.split_ascii_whitespace().collect();
            let [id, x, y] = fields[..] else {
                return Err(Error::parse(lineno, format!("expected `id x y`, got `{trimmed}`")));
            };
            let id: usize = id
                .parse()
                .map_err(|_| Error::parse(lineno, format!("bad node id `{id}`")))?;
            let x: f64 = x
                .parse()
                .map_err(|_| Error::parse(lineno, format!("bad coordinate `{x}`")))?;
            let y: f64 = y
                .parse()
                .map_err(|_| Error::parse(lineno, format!("bad coordinate `{y}`")))?;
            if id == 0 || id > coords.len() {
                return Err(Error::parse(lineno, format!("node id {id} outside 1..={}", coords.len())));
            }
            if coords[id - 1].replace([x, y]).is_some() {
                return Err(Error::parse(lineno, format!("node {id} listed twice")));
            }
            continue;
        }
        if trimmed.eq_ignore_ascii_case("NODE_COORD_SECTION") {
            let n = dimension.ok_or_else(|| Error::parse(lineno, "NODE_COORD_SECTION before DIMENSION"))?;
            coords = vec![None; n];
            in_coords = true;
            continue;
        }
        if trimmed.ends_with("_SECTION") {
            return Err(Error::Unsupported(format!("TSPLIB section `{trimmed}`")));
        }
        let (key, value) =
            header_field(trimmed).ok_or_else(|| Error::parse(lineno, format!("expected `KEY: value`, got `{trimmed}`")))?;
        match key.as_str() {
            "NAME" => name = value,
            "DIMENSION" => {
                dimension = Some(
                    value
                        .parse()
                        .map_err(|_| Error::parse(lineno, format!("bad DIMENSION `{value}`")))?,
                )
            }
            "EDGE_WEIGHT_TYPE" => weight_type = Some(value),
            "TYPE" if value != "TSP" => return Err(Error::Unsupported(format!("TSPLIB problem type `{value}`"))),
            _ => {}
        }
    }
    let convention = match weight_type.as_deref() {
        Some("EUC_2D") => WeightConvention::Euc2d,
        Some("GEO") => WeightConvention::Geo(geo),
        Some(other) => return Err(Error::Unsupported(format!("EDGE_WEIGHT_TYPE `{other}`"))),
        None => return Err(Error::Unsupported("missing EDGE_WEIGHT_TYPE".into())),
    };
    if !in_coords {
        return Err(Error::parse(text.lines().count(), "missing NODE_COORD_SECTION"));
    }
    let coords: Vec<[f64; 2]> = coords
        .into_iter()
        .enumerate()
        .map(|(i, c)| c.ok_or_else(|| Error::parse(text.lines().count(), format!("node {} has no coordinates", i + 1))))
        .collect::<Result<_>>()?;
    build(name, convention, coords)
}

fn build(name: String, convention: WeightConvention, coords: Vec<[f64; 2]>) -> Result<TsplibInstance> {
    let n = coords.len();
    if n < 3 {
        return Err(Error::InvalidInstance(format!("need at least 3 cities, got {n}")));
    }
    let dist: fn([f64; 2], [f64; 2]) -> f64 = match convention {
        WeightConvention::Euc2d => euc_2d,
        WeightConvention::Geo(GeoMode::Haversine) => geo_haversine,
        WeightConvention::Geo(GeoMode::Tsplib) => geo_tsplib,
    };
    let mut raw = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let d = dist(coords[i], coords[j]);
            raw[i * n + j] = d;
            raw[j * n + i] = d;
        }
    }
    let scale = raw.iter().copied().fold(0.0, f64::max);
    if !(scale > 0.0) {
        return Err(Error::InvalidInstance("all cities coincide".into()));
    }
    let normalized = TspInstance::from_weights(n, raw.iter().map(|d| d / scale).collect())?;
    Ok(TsplibInstance {
        name,
        convention,
        coords,
        raw,
        normalized,
        scale,
    })
}

pub fn load_tsplib(path: impl AsRef<Path>, geo: GeoMode) -> Result<TsplibInstance> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_tsplib(&text, geo)
}

/// Parses a TSPLIB tour file into zero-based city indices.
pub fn parse_tour(text: &str) -> Result<Vec<usize>> {
    let mut order = Vec::new();
    let mut in_tour = false;
    for (idx, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if !in_tour {
            in_tour = trimmed.eq_ignore_ascii_case("TOUR_SECTION");
            continue;
        }
        if trimmed.is_empty() {
            continue;
        }
        for tok in trimmed.split_ascii_whitespace() {
            let id: i64 = tok
                .parse()
                .map_err(|_| Error::parse(idx + 1, format!("bad tour entry `{tok}`")))?;
            if id == -1 {
                return Ok(order);
            }
            if id < 1 {
                return Err(Error::parse(idx + 1, format!("bad city id {id}")));
            }
            order.push(id as usize - 1);
        }
    }
    if in_tour {
        Ok(order)
    } else {
        Err(Error::parse(text.lines().count(), "missing TOUR_SECTION"))
    }
}

/// An instance shipped with the crate, with its published optimal tour.
#[derive(Debug, Clone, Copy)]
pub struct Bundled {
    pub name: &'static str,
    pub problem: &'static str,
    pub optimal_tour: &'static str,
    /// Published optimum under the TSPLIB convention.
    pub optimum: f64,
}

pub const BUNDLED: [Bundled; 2] = [
    Bundled {
        name: "ulysses16",
        problem: include_str!("../data/ulysses16.tsp"),
        optimal_tour: include_str!("../data/ulysses16.opt.tour"),
        optimum: 6859.0,
    },
    Bundled {
        name: "berlin52",
        problem: include_str!("../data/berlin52.tsp"),
        optimal_tour: include_str!("../data/berlin52.opt.tour"),
        optimum: 7542.0,
    },
];

pub fn bundled(name: &str) -> Option<&'static Bundled> {
    BUNDLED.iter().find(|b| b.name == name)
}
