//! Offline dispersion-tensor tables: build D̄(p) on a parameter grid (one
//! corrector solve per knot, embarrassingly parallel), interpolate online by
//! entrywise piecewise-linear interpolation with constant extrapolation, and
//! persist the table as a self-describing CSV artifact.

use crate::cell::{CellContext, DispersionTensor};
use crate::{Error, Result};
use rayon::prelude::*;
use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::path::Path;

const TABLE_MAGIC: &str = "# dispersim-table v1";
const COLUMN_HEADER: &str = "p,d11,d12,d21,d22";

/// Upper bound for |G| over the reachable solution range [−m, m] with
/// m = ‖u₀‖∞ + T·‖f‖∞, estimated on a 10⁴-point uniform grid (exact for
/// affine G, whose extrema sit at the included endpoints).
pub fn compute_l<G: Fn(f64) -> f64>(g: G, u0_sup: f64, f_sup: f64, t_final: f64) -> f64 {
    let m = (u0_sup + t_final * f_sup).max(0.0);
    const SAMPLES: usize = 10_000;
    let mut l = 0.0f64;
    for k in 0..SAMPLES {
        let r = -m + 2.0 * m * k as f64 / (SAMPLES - 1) as f64;
        l = l.max(g(r).abs());
    }
    l
}

fn outer_magnitude(per_sign: usize, k: usize) -> f64 {
    10f64.powf(1.0 + 10.0 * k as f64 / per_sign as f64)
}

/// Parameter grid with `inner` uniform knots on [−10, 10] plus (inner − 1)/2
/// log-spaced magnitudes per sign on (10, 10¹¹], so refining the inner
/// segment densifies the outer coverage in proportion and the interpolation
/// gap shrinks everywhere the solution can reach, not just near zero.
/// `p_grid(101)` is the default 201-knot grid.
pub fn p_grid(inner: usize) -> Result<Vec<f64>> {
    if inner < 2 {
        return Err(Error::InvalidInput(format!(
            "inner grid needs at least 2 knots, got {inner}"
        )));
    }
    let outer = (inner - 1) / 2;
    let mut knots = Vec::with_capacity(inner + 2 * outer);
    for k in (1..=outer).rev() {
        knots.push(-outer_magnitude(outer, k));
    }
    for k in 0..inner {
        knots.push(-10.0 + 20.0 * k as f64 / (inner - 1) as f64);
    }
    for k in 1..=outer {
        knots.push(outer_magnitude(outer, k));
    }
    Ok(knots)
}

/// The default 201-knot grid: 101 uniform on [−10, 10] and 50 log-spaced
/// magnitudes per sign out to ±10¹¹.
pub fn default_p_grid() -> Vec<f64> {
    p_grid(101).expect("static grid parameters")
}

/// Uniform knots on [lo, hi], for refinement studies.
pub fn uniform_knots(lo: f64, hi: f64, count: usize) -> Result<Vec<f64>> {
    if count < 2 || !(hi > lo) {
        return Err(Error::InvalidInput(format!(
            "uniform knot grid needs count ≥ 2 and hi > lo, got {count} on [{lo}, {hi}]"
        )));
    }
    Ok((0..count).map(|k| lo + (hi - lo) * k as f64 / (count - 1) as f64).collect())
}

/// Ordered key=value provenance metadata stored in the table header.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TableMeta {
    entries: Vec<(String, String)>,
}

impl TableMeta {
    pub fn new() -> TableMeta {
        TableMeta::default()
    }

    /// Values must be whitespace-free (the header is space-delimited).
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if key.is_empty()
            || key.contains(|c: char| c.is_whitespace() || c == '=')
            || value.contains(char::is_whitespace)
        {
            return Err(Error::InvalidInput(format!(
                "metadata entries must be whitespace-free `key=value` pairs, got {key:?}={value:?}"
            )));
        }
        match self.entries.iter_mut().find(|(k, _)| k == key) {
            Some(slot) => slot.1 = value.to_string(),
            None => self.entries.push((key.to_string(), value.to_string())),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }
}

/// Dispersion tensors sampled on a strictly increasing knot grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DispersionTable {
    knots: Vec<f64>,
    tensors: Vec<DispersionTensor>,
    meta: TableMeta,
}

impl DispersionTable {
    pub fn new(
        knots: Vec<f64>,
        tensors: Vec<DispersionTensor>,
        meta: TableMeta,
    ) -> Result<DispersionTable> {
        if knots.is_empty() || knots.len() != tensors.len() {
            return Err(Error::InvalidInput(format!(
                "table needs matching nonempty knots/tensors, got {} and {}",
                knots.len(),
                tensors.len()
            )));
        }
        if !knots.iter().all(|k| k.is_finite()) {
            return Err(Error::InvalidInput("table knots must be finite".into()));
        }
        if knots.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidInput("table knots must be strictly increasing".into()));
        }
        if tensors.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidInput("table tensors must be finite".into()));
        }
        Ok(DispersionTable { knots, tensors, meta })
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn tensors(&self) -> &[DispersionTensor] {
        &self.tensors
    }

    pub fn meta(&self) -> &TableMeta {
        &self.meta
    }

    pub fn len(&self) -> usize {
        self.knots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.knots.is_empty()
    }

    /// Largest knot spacing over the whole grid.
    pub fn max_gap(&self) -> f64 {
        self.knots.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    }

    /// Largest knot spacing restricted to knots inside [lo, hi] — the δ that
    /// governs interpolation error claims on that sub-range.
    pub fn max_gap_within(&self, lo: f64, hi: f64) -> f64 {
        self.knots
            .windows(2)
            .filter(|w| w[0] >= lo && w[1] <= hi)
            .map(|w| w[1] - w[0])
            .fold(0.0, f64::max)
    }

    /// Entrywise linear interpolation with constant extrapolation outside the
    /// knot range. Exact at knots (bitwise) and exactly the entrywise average
    /// at midpoints.
    pub fn interp(&self, p: f64) -> DispersionTensor {
        if p.is_nan() {
            return self.tensors[0];
        }
        let first = self.knots[0];
        let last = *self.knots.last().expect("nonempty");
        if p <= first {
            return self.tensors[0];
        }
        if p >= last {
            return *self.tensors.last().expect("nonempty");
        }
        match self.knots.binary_search_by(|k| k.total_cmp(&p)) {
            Ok(i) => self.tensors[i],
            Err(i) => {
                let (a, b) = (self.knots[i - 1], self.knots[i]);
                let t = (p - a) / (b - a);
                let (ta, tb) = (self.tensors[i - 1], self.tensors[i]);
                let mut d = [[0.0; 2]; 2];
                for r in 0..2 {
                    for c in 0..2 {
                        d[r][c] = (1.0 - t) * ta.d[r][c] + t * tb.d[r][c];
                    }
                }
                DispersionTensor { d }
            }
        }
    }

    pub fn write_to(&self, out: &mut dyn Write) -> Result<()> {
        let mut text = String::new();
        let _ = writeln!(text, "{TABLE_MAGIC}");
        let header: Vec<String> =
            self.meta.entries.iter().map(|(k, v)| format!("{k}={v}")).collect();
        let _ = writeln!(text, "# {}", header.join(" "));
        let _ = writeln!(text, "{COLUMN_HEADER}");
        for (k, tensor) in self.knots.iter().zip(&self.tensors) {
            let _ = writeln!(
                text,
                "{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}",
                k, tensor.d[0][0], tensor.d[0][1], tensor.d[1][0], tensor.d[1][1]
            );
        }
        out.write_all(text.as_bytes())?;
        Ok(())
    }

    pub fn write_file(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut file = std::fs::File::create(path)?;
        self.write_to(&mut file)?;
        file.flush()?;
        Ok(())
    }

    pub fn read_from(reader: impl BufRead) -> Result<DispersionTable> {
        let mut lines = reader.lines();
        let magic = lines
            .next()
            .transpose()?
            .ok_or_else(|| Error::Format("empty table file".into()))?;
        if magic.trim_end() != TABLE_MAGIC {
            return Err(Error::Format(format!(
                "not a dispersion table: expected `{TABLE_MAGIC}`, found `{magic}`"
            )));
        }
        let meta_line = lines
            .next()
            .transpose()?
            .ok_or_else(|| Error::Format("missing metadata line".into()))?;
        let mut meta = TableMeta::new();
        if let Some(body) = meta_line.strip_prefix('#') {
            for pair in body.split_whitespace() {
                let (k, v) = pair
                    .split_once('=')
                    .ok_or_else(|| Error::Format(format!("malformed metadata `{pair}`")))?;
                meta.set(k, v)?;
            }
        } else {
            return Err(Error::Format(format!("expected `# key=value` line, found `{meta_line}`")));
        }
        let mut knots = Vec::new();
        let mut tensors = Vec::new();
        for (lineno, line) in lines.enumerate() {
            let line = line?;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed == COLUMN_HEADER {
                continue;
            }
            let fields: Vec<&str> = trimmed.split(',').collect();
            if fields.len() != 5 {
                return Err(Error::Format(format!(
                    "row {}: expected 5 comma-separated values, found {}",
                    lineno + 4,
                    fields.len()
                )));
            }
            let mut vals = [0.0f64; 5];
            for (slot, field) in vals.iter_mut().zip(&fields) {
                *slot = field.trim().parse().map_err(|_| {
                    Error::Format(format!("row {}: bad number `{field}`", lineno + 4))
                })?;
            }
            knots.push(vals[0]);
            tensors.push(DispersionTensor { d: [[vals[1], vals[2]], [vals[3], vals[4]]] });
        }
        DispersionTable::new(knots, tensors, meta)
    }

    pub fn read_file(path: impl AsRef<Path>) -> Result<DispersionTable> {
        let file = std::fs::File::open(path)?;
        Self::read_from(std::io::BufReader::new(file))
    }

    /// Guards against loading a table built for different data: the stored
    /// geometry identifier must match the expected one.
    pub fn check_geometry(&self, expected: &str) -> Result<()> {
        match self.meta.get("geometry") {
            Some(found) if found == expected => Ok(()),
            Some(found) => Err(Error::InvalidInput(format!(
                "table was built for geometry {found}, expected {expected}; \
                 rebuild the table or override explicitly"
            ))),
            None => Err(Error::InvalidInput(
                "table carries no geometry identifier; rebuild the table or override explicitly"
                    .into(),
            )),
        }
    }
}

/// One corrector solve and tensor assembly per knot, in parallel; the result
/// is independent of the execution schedule.
pub fn build_table(
    ctx: &CellContext,
    knots: &[f64],
    meta: TableMeta,
) -> Result<DispersionTable> {
    if knots.is_empty() {
        return Err(Error::InvalidInput("cannot build a table over zero knots".into()));
    }
    let tensors: Vec<DispersionTensor> =
        knots.par_iter().map(|&p| ctx.tensor_at(p)).collect::<Result<Vec<_>>>()?;
    DispersionTable::new(knots.to_vec(), tensors, meta)
}
