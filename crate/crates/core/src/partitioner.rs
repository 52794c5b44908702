// SPDX-License-Identifier: Apache-2.0

//! Horizontal and vertical partitioning of DNN layers onto square subarrays.
//!
//! A layer with `n` inputs and `m` outputs is cut into `h_p` row blocks
//! (horizontal partitions, whose partial output currents are summed) and `v_p`
//! column blocks (vertical partitions, whose outputs are concatenated). The
//! subarray size `A` counts weight cells: one differential pair per cell.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PlanError {
    #[error("subarray size must be at least 1")]
    ZeroSubarray,
    #[error("layer {layer}: {what} = {given} is below the minimum {minimum} for a {size}-wide subarray")]
    BelowMinimum {
        layer: usize,
        what: &'static str,
        given: usize,
        minimum: usize,
        size: usize,
    },
    #[error("layer {layer}: {what} = {given} exceeds the {extent} lines available")]
    TooFine {
        layer: usize,
        what: &'static str,
        given: usize,
        extent: usize,
    },
    #[error("expected {expected} per-layer overrides, got {actual}")]
    OverrideCount { expected: usize, actual: usize },
    #[error("layer {0} has a zero dimension")]
    EmptyLayer(usize),
    #[error("structural error: {0}")]
    Structure(String),
}

/// Partitioning of one layer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerPlan {
    pub n: usize,
    pub m: usize,
    pub h_p: usize,
    pub v_p: usize,
    /// Rows of each horizontal block; sums to `n`.
    pub row_heights: Vec<usize>,
    /// Columns of each vertical block; sums to `m`.
    pub col_widths: Vec<usize>,
}

impl LayerPlan {
    pub fn tiles(&self) -> usize {
        self.h_p * self.v_p
    }

    pub fn is_partitioned(&self) -> bool {
        self.tiles() > 1
    }

    /// Row blocks once an always-on bias line is added: it joins the last
    /// block when that block has a spare row, otherwise it gets its own tile.
    pub fn row_heights_with_bias(&self, subarray_size: usize) -> Vec<usize> {
        let mut rows = self.row_heights.clone();
        match rows.last_mut() {
            Some(last) if *last < subarray_size => *last += 1,
            _ => rows.push(1),
        }
        rows
    }

    /// Longest wire in segments over all tiles of this layer.
    pub fn max_line_segments(&self) -> usize {
        let rows = self.row_heights.iter().copied().max().unwrap_or(0);
        let cols = self.col_widths.iter().copied().max().unwrap_or(0);
        rows.max(cols)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionPlan {
    pub subarray_size: usize,
    pub layers: Vec<LayerPlan>,
}

impl PartitionPlan {
    pub fn h_p(&self) -> Vec<usize> {
        self.layers.iter().map(|l| l.h_p).collect()
    }

    pub fn v_p(&self) -> Vec<usize> {
        self.layers.iter().map(|l| l.v_p).collect()
    }

    /// Sum of horizontal and vertical partition counts over all layers.
    pub fn total_partitions(&self) -> usize {
        self.layers.iter().map(|l| l.h_p + l.v_p).sum()
    }

    pub fn tiles(&self) -> usize {
        self.layers.iter().map(LayerPlan::tiles).sum()
    }

    /// Occupied weight cells over provisioned cells of every tile used.
    pub fn utilization(&self, bias: bool) -> f64 {
        let a2 = (self.subarray_size * self.subarray_size) as f64;
        let mut used = 0usize;
        let mut tiles = 0usize;
        for l in &self.layers {
            let rows = if bias {
                l.row_heights_with_bias(self.subarray_size)
            } else {
                l.row_heights.clone()
            };
            used += rows.iter().sum::<usize>() * l.m;
            tiles += rows.len() * l.v_p;
        }
        used as f64 / (tiles as f64 * a2)
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "subarray_size": self.subarray_size,
            "layers": self.layers.iter().map(|l| serde_json::json!({
                "n": l.n,
                "m": l.m,
                "h_p": l.h_p,
                "v_p": l.v_p,
                "tile_rows": l.row_heights,
                "tile_cols": l.col_widths,
            })).collect::<Vec<_>>(),
        })
    }
}

/// Block sizes for cutting `extent` lines into `parts` blocks of at most
/// `capacity` lines. The minimum block count fills every block to capacity
/// and leaves the remainder in the last one; finer cuts use blocks of
/// `ceil(extent / parts)`, again with the remainder last. When that would
/// leave the last block empty the lines are spread evenly instead.
pub fn block_sizes(extent: usize, parts: usize, capacity: usize) -> Vec<usize> {
    assert!(parts >= 1 && parts <= extent, "cannot cut {extent} lines into {parts} blocks");
    let size = if parts == extent.div_ceil(capacity) {
        capacity
    } else {
        extent.div_ceil(parts)
    };
    if (parts - 1) * size < extent {
        let mut v = vec![size; parts - 1];
        v.push(extent - (parts - 1) * size);
        v
    } else {
        let base = extent / parts;
        let extra = extent % parts;
        (0..parts).map(|k| base + usize::from(k < extra)).collect()
    }
}

pub fn plan_partitions(
    layer_dims: &[(usize, usize)],
    subarray_size: usize,
    overrides: Option<&[(usize, usize)]>,
) -> Result<PartitionPlan, PlanError> {
    if subarray_size == 0 {
        return Err(PlanError::ZeroSubarray);
    }
    if let Some(o) = overrides {
        if o.len() != layer_dims.len() {
            return Err(PlanError::OverrideCount {
                expected: layer_dims.len(),
                actual: o.len(),
            });
        }
    }
    let layers = layer_dims
        .iter()
        .enumerate()
        .map(|(idx, &(n, m))| {
            if n == 0 || m == 0 {
                return Err(PlanError::EmptyLayer(idx));
            }
            let min_h = n.div_ceil(subarray_size);
            let min_v = m.div_ceil(subarray_size);
            let (h_p, v_p) = overrides.map_or((min_h, min_v), |o| o[idx]);
            for (what, given, minimum, extent) in [("h_p", h_p, min_h, n), ("v_p", v_p, min_v, m)] {
                if given < minimum {
                    return Err(PlanError::BelowMinimum {
                        layer: idx,
                        what,
                        given,
                        minimum,
                        size: subarray_size,
                    });
                }
                if given > extent {
                    return Err(PlanError::TooFine {
                        layer: idx,
                        what,
                        given,
                        extent,
                    });
                }
            }
            Ok(LayerPlan {
                n,
                m,
                h_p,
                v_p,
                row_heights: block_sizes(n, h_p, subarray_size),
                col_widths: block_sizes(m, v_p, subarray_size),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(PartitionPlan {
        subarray_size,
        layers,
    })
}

/// One rectangular piece of a layer's weight matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Tile {
    pub row_start: usize,
    pub col_start: usize,
    pub rows: usize,
    pub cols: usize,
    /// Row-major `rows × cols`.
    pub weights: Vec<f64>,
}

/// Cut a row-major matrix into a grid of tiles, `grid[r][c]` covering row
/// block `r` and column block `c`.
pub fn split_matrix(
    weights: &[f64],
    n: usize,
    m: usize,
    row_heights: &[usize],
    col_widths: &[usize],
) -> Result<Vec<Vec<Tile>>, PlanError> {
    if weights.len() != n * m {
        return Err(PlanError::Structure(format!(
            "{n}x{m} layer needs {} weights, got {}",
            n * m,
            weights.len()
        )));
    }
    if row_heights.iter().sum::<usize>() != n || col_widths.iter().sum::<usize>() != m {
        return Err(PlanError::Structure(format!(
            "plan covers {}x{} but the layer is {n}x{m}",
            row_heights.iter().sum::<usize>(),
            col_widths.iter().sum::<usize>()
        )));
    }
    let mut grid = Vec::with_capacity(row_heights.len());
    let mut row_start = 0;
    for &rows in row_heights {
        let mut band = Vec::with_capacity(col_widths.len());
        let mut col_start = 0;
        for &cols in col_widths {
            let mut w = Vec::with_capacity(rows * cols);
            for r in row_start..row_start + rows {
                w.extend_from_slice(&weights[r * m + col_start..r * m + col_start + cols]);
            }
            band.push(Tile {
                row_start,
                col_start,
                rows,
                cols,
                weights: w,
            });
            col_start += cols;
        }
        grid.push(band);
        row_start += rows;
    }
    Ok(grid)
}

pub fn split_layer(weights: &[f64], plan: &LayerPlan) -> Result<Vec<Vec<Tile>>, PlanError> {
    split_matrix(weights, plan.n, plan.m, &plan.row_heights, &plan.col_widths)
}

/// Sum partial output currents of horizontal partitions.
///
/// Partitions are joined through ideal switches: `_switch_on_r` enters the
/// power budget only and does not perturb the merged currents.
pub fn merge_partials(partials: &[Vec<f64>], _switch_on_r: f64) -> Result<Vec<f64>, PlanError> {
    let Some(first) = partials.first() else {
        return Err(PlanError::Structure("no partial currents to merge".into()));
    };
    let mut out = vec![0.0; first.len()];
    for (k, p) in partials.iter().enumerate() {
        if p.len() != out.len() {
            return Err(PlanError::Structure(format!(
                "partial {k} has {} currents, expected {}",
                p.len(),
                out.len()
            )));
        }
        for (o, v) in out.iter_mut().zip(p) {
            *o += v;
        }
    }
    Ok(out)
}

/// Peripheral circuits added by partitioning.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OverheadCount {
    pub demux_units: usize,
    pub switch_units: usize,
    pub extra_amp_stages: usize,
}

/// Every tile output line of a partitioned layer gets a switch (accumulate or
/// not) and a DEMUX (local neuron or next subarray). Each horizontal block
/// beyond the first needs its own bank of sense amplifiers.
pub fn count_overheads(plan: &PartitionPlan) -> OverheadCount {
    let mut c = OverheadCount::default();
    for l in plan.layers.iter().filter(|l| l.is_partitioned()) {
        let tile_outputs = l.h_p * l.m;
        c.demux_units += tile_outputs;
        c.switch_units += tile_outputs;
        c.extra_amp_stages += (l.h_p - 1) * l.m;
    }
    c
}
