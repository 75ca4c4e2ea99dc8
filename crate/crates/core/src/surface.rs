//! Tabulation of functions of `(s, x)` that are smooth except for kinks or
//! jumps across the pinning levels.
//!
//! Rows sit on a grid that is uniform in `ln s` (or in `ln(s / (𝔱 - s))` when
//! the support of τ is bounded), so they cluster where the tabulated functions
//! vary fastest. Each row holds a uniform grid in `x` plus the two one-sided
//! values at every pin in range. Lookups use cubic Lagrange interpolation in
//! `x` within the segment between pins, then cubic Lagrange across rows.

use rayon::prelude::*;

use crate::error::Result;
use crate::kernels::Side;

/// Where rows go and how dense they are.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceLayout {
    pub s_min: f64,
    pub s_max: f64,
    /// Upper end of the support of τ; `INFINITY` if unbounded.
    pub support_sup: f64,
    /// Lower end of the support of τ. Stencils do not cross it in `s`.
    pub support_inf: f64,
    /// Additional value of `s` across which stencils do not reach, for
    /// functions with a kink there.
    pub extra_break: Option<f64>,
    /// Row spacing in the log coordinate.
    pub row_step: f64,
    /// Node spacing in `x`, relative to `min(1, √(𝔱 - s))`.
    pub node_step: f64,
    pub max_nodes: usize,
    /// Half-width of the `x` range beyond the pins, in units of the bridge
    /// standard deviation at `s`.
    pub spread: f64,
}

impl SurfaceLayout {
    pub fn new(s_min: f64, s_max: f64, support_inf: f64, support_sup: f64) -> Self {
        SurfaceLayout {
            s_min,
            s_max,
            support_sup,
            support_inf,
            extra_break: None,
            row_step: 0.05,
            node_step: 0.02,
            max_nodes: 1200,
            spread: 6.0,
        }
    }

    fn coord(&self, s: f64) -> f64 {
        if self.support_sup.is_finite() {
            s.ln() - (self.support_sup - s).ln()
        } else {
            s.ln()
        }
    }

    fn inverse(&self, eta: f64) -> f64 {
        if self.support_sup.is_finite() {
            self.support_sup / (1.0 + (-eta).exp())
        } else {
            eta.exp()
        }
    }
}

#[derive(Debug, Clone)]
struct Row {
    eta: f64,
    x0: f64,
    h: f64,
    values: Vec<f64>,
    /// (pin, value below, value above) for pins inside the row range.
    pins: Vec<(f64, f64, f64)>,
}

impl Row {
    fn x_max(&self) -> f64 {
        self.x0 + self.h * (self.values.len() - 1) as f64
    }

    fn eval(&self, x: f64) -> Option<f64> {
        if !(x >= self.x0 && x <= self.x_max()) {
            return None;
        }
        let below = self.pins.iter().rev().find(|p| p.0 < x);
        let above = self.pins.iter().find(|p| p.0 >= x);
        let seg_lo = below.map_or(f64::NEG_INFINITY, |p| p.0);
        let seg_hi = above.map_or(f64::INFINITY, |p| p.0);
        let mut nodes: [(f64, f64); 8] = [(0.0, 0.0); 8];
        let mut count = 0;
        if let Some(p) = below {
            nodes[count] = (p.0, p.2);
            count += 1;
        }
        if let Some(p) = above {
            nodes[count] = (p.0, p.1);
            count += 1;
        }
        let last = self.values.len() as isize - 1;
        let centre = ((x - self.x0) / self.h).floor() as isize;
        let guard = 0.1 * self.h;
        for k in (centre - 2)..=(centre + 3) {
            if k < 0 || k > last {
                continue;
            }
            let xk = self.x0 + self.h * k as f64;
            if xk > seg_lo + guard && xk < seg_hi - guard {
                nodes[count] = (xk, self.values[k as usize]);
                count += 1;
            }
        }
        if count < 2 {
            return None;
        }
        let chosen = &mut nodes[..count];
        chosen.sort_by(|a, b| (a.0 - x).abs().total_cmp(&(b.0 - x).abs()));
        let m = count.min(4);
        Some(lagrange(&chosen[..m], x))
    }
}

fn lagrange(nodes: &[(f64, f64)], x: f64) -> f64 {
    let mut total = 0.0;
    for (i, &(xi, yi)) in nodes.iter().enumerate() {
        let mut basis = 1.0;
        for (j, &(xj, _)) in nodes.iter().enumerate() {
            if i != j {
                basis *= (x - xj) / (xi - xj);
            }
        }
        total += basis * yi;
    }
    total
}

/// Rows of one `s`-interval, uniform in a coordinate `η(s)`.
#[derive(Debug, Clone)]
struct Segment {
    s_lo: f64,
    s_hi: f64,
    /// `Some(a)`: `η = -ln(a - s)`, rows accumulate towards `a` from below.
    approach: Option<f64>,
    rows: Vec<Row>,
}

impl Segment {
    fn new(s_lo: f64, s_hi: f64, approach: Option<f64>) -> Self {
        Segment {
            s_lo,
            s_hi,
            approach,
            rows: Vec::new(),
        }
    }

    fn coord(&self, layout: &SurfaceLayout, s: f64) -> f64 {
        match self.approach {
            Some(a) => -(a - s).ln(),
            None => layout.coord(s),
        }
    }

    fn inverse(&self, layout: &SurfaceLayout, eta: f64) -> f64 {
        match self.approach {
            Some(a) => a - (-eta).exp(),
            None => layout.inverse(eta),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SurfaceCache {
    layout: SurfaceLayout,
    segments: Vec<Segment>,
}

impl SurfaceCache {
    /// Tabulates `value(s, x)` with one-sided pin limits `pin_value(s, i, side)`.
    ///
    /// When the lower end `a` of the support of τ lies inside the range, the
    /// table is split there: below `a` rows accumulate geometrically towards
    /// `a`, and a thin gap `(a - 1e-3 a, a)` is left to the caller.
    pub fn build<V, P>(layout: SurfaceLayout, pins: &[f64], value: V, pin_value: P) -> Result<Self>
    where
        V: Fn(f64, f64) -> Result<f64> + Sync,
        P: Fn(f64, usize, Side) -> Result<f64> + Sync,
    {
        let inf = layout.support_inf;
        let mut segments = Vec::new();
        let mut start = layout.s_min;
        let inf_inside = inf > layout.s_min && inf < layout.s_max;
        let limit = if inf_inside { inf } else { layout.s_max };
        if let Some(b) = layout.extra_break.filter(|&b| b > start && b < limit) {
            segments.push(Segment::new(start, b, None));
            start = b;
        }
        if inf_inside {
            let gap_end = inf * (1.0 - 1e-3);
            if gap_end > start {
                segments.push(Segment::new(start, gap_end, Some(inf)));
            }
            start = inf;
        }
        segments.push(Segment::new(start, layout.s_max, None));
        let z_min = pins.iter().cloned().fold(0.0, f64::min);
        let z_max = pins.iter().cloned().fold(0.0, f64::max);
        for seg in &mut segments {
            let eta_lo = seg.coord(&layout, seg.s_lo);
            let eta_hi = seg.coord(&layout, seg.s_hi);
            let n_rows = (((eta_hi - eta_lo) / layout.row_step).ceil() as usize).max(3);
            let step = (eta_hi - eta_lo) / n_rows as f64;
            let etas: Vec<f64> = (0..=n_rows).map(|k| eta_lo + step * k as f64).collect();
            let seg_ref = &*seg;
            let rows = etas
                .par_iter()
                .enumerate()
                .map(|(k, &eta)| {
                    let s = match k {
                        0 => seg_ref.s_lo,
                        k if k == n_rows => seg_ref.s_hi,
                        _ => seg_ref.inverse(&layout, eta),
                    };
                    let sd = if layout.support_sup.is_finite() {
                        (s * (layout.support_sup - s) / layout.support_sup).sqrt()
                    } else {
                        s.sqrt()
                    };
                    let lo = z_min - layout.spread * sd;
                    let hi = z_max + layout.spread * sd;
                    let mut scale: f64 = 1.0;
                    if layout.support_sup.is_finite() {
                        scale = scale.min(layout.support_sup - s);
                    }
                    if let Some(a) = seg_ref.approach {
                        scale = scale.min(a - s);
                    }
                    let n = (((hi - lo) / (layout.node_step * scale.sqrt())).ceil() as usize)
                        .clamp(8, layout.max_nodes);
                    let h = (hi - lo) / n as f64;
                    let values = (0..=n)
                        .map(|k| value(s, lo + h * k as f64))
                        .collect::<Result<Vec<f64>>>()?;
                    let row_pins = pins
                        .iter()
                        .enumerate()
                        .filter(|(_, &z)| z > lo && z < hi)
                        .map(|(i, &z)| Ok((z, pin_value(s, i, Side::Below)?, pin_value(s, i, Side::Above)?)))
                        .collect::<Result<Vec<_>>>()?;
                    Ok(Row {
                        eta,
                        x0: lo,
                        h,
                        values,
                        pins: row_pins,
                    })
                })
                .collect::<Result<Vec<Row>>>()?;
            seg.rows = rows;
        }
        Ok(SurfaceCache { layout, segments })
    }

    pub fn layout(&self) -> &SurfaceLayout {
        &self.layout
    }

    pub fn n_nodes(&self) -> usize {
        self.segments
            .iter()
            .flat_map(|seg| &seg.rows)
            .map(|r| r.values.len() + 2 * r.pins.len())
            .sum()
    }

    /// Interpolated value; `None` when `(s, x)` lies outside the table.
    pub fn eval(&self, s: f64, x: f64) -> Option<f64> {
        let seg = self.segments.iter().find(|seg| s >= seg.s_lo && s <= seg.s_hi)?;
        let eta = seg.coord(&self.layout, s);
        let rows = &seg.rows;
        let last = rows.len() - 1;
        let k = rows.partition_point(|r| r.eta <= eta).clamp(1, last);
        let start = k.saturating_sub(2);
        let end = (start + 3).min(last);
        let start = end.saturating_sub(3);
        let mut nodes: [(f64, f64); 4] = [(0.0, 0.0); 4];
        let mut count = 0;
        for row in &rows[start..=end] {
            nodes[count] = (row.eta, row.eval(x)?);
            count += 1;
        }
        Some(lagrange(&nodes[..count], eta))
    }
}
