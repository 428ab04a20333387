//! Harmonic test fields with closed-form values and gradients.

use serde::{Deserialize, Serialize};

use crate::geometry::{dist, BoundarySet, Descriptor, Point, GEOM_TOL};
use crate::{Error, Result};

/// Boundary data for the half-plane Poisson extension.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BoundaryData {
    Indicator {
        a: f64,
        b: f64,
    },
    /// `values[i]` on `[breaks[i], breaks[i+1])`.
    PiecewiseConstant {
        breaks: Vec<f64>,
        values: Vec<f64>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum FieldSpec {
    Constant {
        value: f64,
    },
    /// `axis` 0 is x, 1 is t (the vertical coordinate).
    Coordinate {
        axis: usize,
    },
    /// Terms `[i, j, c]` meaning `c x^i t^j`.
    Polynomial {
        terms: Vec<[f64; 3]>,
    },
    PoissonExtension {
        data: BoundaryData,
    },
    /// `log|X - p|` with the pole `p` on E.
    FundamentalPole {
        pole: Point,
    },
    LinearCombination {
        terms: Vec<(f64, FieldSpec)>,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct HarmonicField {
    pub spec: FieldSpec,
    /// Intervals `(a, b, value)` for Poisson data.
    pieces: Vec<(f64, f64, f64)>,
    children: Vec<(f64, HarmonicField)>,
    poly: Vec<(i32, i32, f64)>,
}

fn check_polynomial(terms: &[[f64; 3]]) -> Result<Vec<(i32, i32, f64)>> {
    let mut out = Vec::new();
    for t in terms {
        let (i, j) = (t[0] as i32, t[1] as i32);
        if i < 0 || j < 0 || t[0].fract() != 0.0 || t[1].fract() != 0.0 {
            return Err(Error::Invalid("polynomial exponents must be non-negative integers".into()));
        }
        if i + j > 4 {
            return Err(Error::Invalid("polynomial degree exceeds 4".into()));
        }
        out.push((i, j, t[2]));
    }
    // Laplacian coefficients collected by monomial.
    let mut lap: std::collections::BTreeMap<(i32, i32), f64> = Default::default();
    for &(i, j, c) in &out {
        if i >= 2 {
            *lap.entry((i - 2, j)).or_default() += c * (i * (i - 1)) as f64;
        }
        if j >= 2 {
            *lap.entry((i, j - 2)).or_default() += c * (j * (j - 1)) as f64;
        }
    }
    let scale = out.iter().map(|t| t.2.abs()).fold(0.0, f64::max).max(1.0);
    if lap.values().any(|v| v.abs() > 1e-12 * scale) {
        return Err(Error::Invalid("polynomial is not harmonic".into()));
    }
    Ok(out)
}

pub fn make_field(spec: &FieldSpec, e: &BoundarySet) -> Result<HarmonicField> {
    let mut f = HarmonicField { spec: spec.clone(), pieces: Vec::new(), children: Vec::new(), poly: Vec::new() };
    match spec {
        FieldSpec::Constant { .. } => {}
        FieldSpec::Coordinate { axis } => {
            if *axis > 1 {
                return Err(Error::Invalid(format!("coordinate axis {axis} out of range")));
            }
        }
        FieldSpec::Polynomial { terms } => f.poly = check_polynomial(terms)?,
        FieldSpec::PoissonExtension { data } => {
            if !matches!(e.spec.descriptor, Descriptor::Hyperplane {}) {
                return Err(Error::Invalid("Poisson extension is available on the half-plane only".into()));
            }
            f.pieces = match data {
                BoundaryData::Indicator { a, b } => vec![(*a, *b, 1.0)],
                BoundaryData::PiecewiseConstant { breaks, values } => {
                    if breaks.len() != values.len() + 1 || breaks.windows(2).any(|w| w[1] <= w[0]) {
                        return Err(Error::Invalid(
                            "piecewise data needs increasing breaks, one more than values".into(),
                        ));
                    }
                    breaks.windows(2).zip(values).map(|(w, v)| (w[0], w[1], *v)).collect()
                }
            };
        }
        FieldSpec::FundamentalPole { pole } => {
            if e.distance(*pole) > GEOM_TOL {
                return Err(Error::PoleOffBoundary(pole[0], pole[1]));
            }
        }
        FieldSpec::LinearCombination { terms } => {
            for (c, s) in terms {
                f.children.push((*c, make_field(s, e)?));
            }
        }
    }
    Ok(f)
}

impl HarmonicField {
    pub fn constant(value: f64) -> Self {
        HarmonicField {
            spec: FieldSpec::Constant { value },
            pieces: Vec::new(),
            children: Vec::new(),
            poly: Vec::new(),
        }
    }

    pub fn is_constant(&self) -> bool {
        match &self.spec {
            FieldSpec::Constant { .. } => true,
            FieldSpec::LinearCombination { .. } => self.children.iter().all(|(c, f)| *c == 0.0 || f.is_constant()),
            _ => false,
        }
    }

    fn has_pole(&self) -> Option<Point> {
        match &self.spec {
            FieldSpec::FundamentalPole { pole } => Some(*pole),
            _ => self.children.iter().find_map(|(_, f)| f.has_pole()),
        }
    }

    pub fn eval(&self, p: Point) -> f64 {
        let (x, t) = (p[0], p[1]);
        match &self.spec {
            FieldSpec::Constant { value } => *value,
            FieldSpec::Coordinate { axis } => p[*axis],
            FieldSpec::Polynomial { .. } => self.poly.iter().map(|&(i, j, c)| c * x.powi(i) * t.powi(j)).sum(),
            FieldSpec::PoissonExtension { .. } => {
                let y = t.abs();
                self.pieces.iter().map(|&(a, b, v)| v * (((b - x) / y).atan() - ((a - x) / y).atan())).sum::<f64>()
                    / std::f64::consts::PI
            }
            FieldSpec::FundamentalPole { pole } => dist(p, *pole).ln(),
            FieldSpec::LinearCombination { .. } => self.children.iter().map(|(c, f)| c * f.eval(p)).sum(),
        }
    }

    pub fn grad(&self, p: Point) -> [f64; 2] {
        let (x, t) = (p[0], p[1]);
        match &self.spec {
            FieldSpec::Constant { .. } => [0.0, 0.0],
            FieldSpec::Coordinate { axis } => {
                let mut g = [0.0, 0.0];
                g[*axis] = 1.0;
                g
            }
            FieldSpec::Polynomial { .. } => {
                let mut g = [0.0, 0.0];
                for &(i, j, c) in &self.poly {
                    if i > 0 {
                        g[0] += c * i as f64 * x.powi(i - 1) * t.powi(j);
                    }
                    if j > 0 {
                        g[1] += c * j as f64 * x.powi(i) * t.powi(j - 1);
                    }
                }
                g
            }
            FieldSpec::PoissonExtension { .. } => {
                let y = t.abs();
                let s = if t < 0.0 { -1.0 } else { 1.0 };
                let (mut gx, mut gy) = (0.0, 0.0);
                for &(a, b, v) in &self.pieces {
                    let (db, da) = (b - x, a - x);
                    let (nb, na) = (y * y + db * db, y * y + da * da);
                    gx += v * (-y / nb + y / na);
                    gy += v * (-db / nb + da / na);
                }
                let pi = std::f64::consts::PI;
                [gx / pi, s * gy / pi]
            }
            FieldSpec::FundamentalPole { pole } => {
                let (dx, dy) = (x - pole[0], t - pole[1]);
                let r2 = dx * dx + dy * dy;
                [dx / r2, dy / r2]
            }
            FieldSpec::LinearCombination { .. } => {
                let mut g = [0.0, 0.0];
                for (c, f) in &self.children {
                    let h = f.grad(p);
                    g[0] += c * h[0];
                    g[1] += c * h[1];
                }
                g
            }
        }
    }

    /// Value with the singularity guard for pole fields.
    pub fn try_eval(&self, p: Point) -> Result<f64> {
        if let Some(pole) = self.has_pole() {
            if dist(p, pole) <= GEOM_TOL {
                return Err(Error::SingularPoint(p[0], p[1]));
            }
        }
        Ok(self.eval(p))
    }
}

/// Gauss-Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> (&'static [f64], &'static [f64]) {
    match n {
        1 => (&[0.0], &[2.0]),
        2 => (&[-0.577_350_269_189_625_8, 0.577_350_269_189_625_8], &[1.0, 1.0]),
        3 => (
            &[-0.774_596_669_241_483_4, 0.0, 0.774_596_669_241_483_4],
            &[0.555_555_555_555_555_6, 0.888_888_888_888_888_9, 0.555_555_555_555_555_6],
        ),
        _ => (
            &[-0.861_136_311_594_052_6, -0.339_981_043_584_856_3, 0.339_981_043_584_856_3, 0.861_136_311_594_052_6],
            &[0.347_854_845_137_453_9, 0.652_145_154_862_546_1, 0.652_145_154_862_546_1, 0.347_854_845_137_453_9],
        ),
    }
}

/// Tensor Gauss quadrature of `f` over the box `[lo, hi]`.
pub fn box_integral(lo: Point, hi: Point, n: usize, f: impl Fn(Point) -> f64) -> f64 {
    let (xs, ws) = gauss_legendre(n);
    let (cx, cy) = (0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1]));
    let (hx, hy) = (0.5 * (hi[0] - lo[0]), 0.5 * (hi[1] - lo[1]));
    let mut s = 0.0;
    for (xi, wi) in xs.iter().zip(ws) {
        for (yj, wj) in xs.iter().zip(ws) {
            s += wi * wj * f([cx + hx * xi, cy + hy * yj]);
        }
    }
    s * hx * hy
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualStats {
    pub probes: usize,
    pub max_abs: f64,
    pub max_normalized: f64,
}

/// Five-point Laplacian at each probe with δ ≥ 3h, normalized by |∇u|/δ.
pub fn laplacian_residual(u: &HarmonicField, e: &BoundarySet, probes: &[Point], h: f64) -> ResidualStats {
    let mut st = ResidualStats { probes: 0, max_abs: 0.0, max_normalized: 0.0 };
    for &p in probes {
        let d = e.distance(p);
        if d < 3.0 * h {
            continue;
        }
        let c = u.eval(p);
        let lap =
            (u.eval([p[0] + h, p[1]]) + u.eval([p[0] - h, p[1]]) + u.eval([p[0], p[1] + h]) + u.eval([p[0], p[1] - h])
                - 4.0 * c)
                / (h * h);
        let g = u.grad(p);
        let gn = g[0].hypot(g[1]);
        let norm = if lap == 0.0 {
            0.0
        } else if gn > 0.0 {
            lap.abs() * d / gn
        } else {
            lap.abs() * d * d
        };
        st.probes += 1;
        st.max_abs = st.max_abs.max(lap.abs());
        st.max_normalized = st.max_normalized.max(norm);
    }
    st
}

/// |⨏_{∂B(X,r)} u − u(X)| by the trapezoid rule on `m` points.
pub fn mean_value_defect(u: &HarmonicField, x: Point, r: f64, m: usize) -> f64 {
    let avg = (0..m)
        .map(|i| {
            let th = 2.0 * std::f64::consts::PI * i as f64 / m as f64;
            u.eval([x[0] + r * th.cos(), x[1] + r * th.sin()])
        })
        .sum::<f64>()
        / m as f64;
    (avg - u.eval(x)).abs()
}

/// ℓ(I)² ∬_I |∇u|² / ∬_{2I} |u − c|² with c the mean of u over 2I.
pub fn caccioppoli_ratio(u: &HarmonicField, center: Point, side: f64) -> f64 {
    let lo1 = [center[0] - side / 2.0, center[1] - side / 2.0];
    let hi1 = [center[0] + side / 2.0, center[1] + side / 2.0];
    let lo2 = [center[0] - side, center[1] - side];
    let hi2 = [center[0] + side, center[1] + side];
    let mut grad2 = 0.0;
    let mut mean = 0.0;
    let sub = 4;
    let cells = |lo: Point, hi: Point| {
        let (dx, dy) = ((hi[0] - lo[0]) / sub as f64, (hi[1] - lo[1]) / sub as f64);
        (0..sub * sub).map(move |k| {
            let (i, j) = ((k % sub) as f64, (k / sub) as f64);
            ([lo[0] + i * dx, lo[1] + j * dy], [lo[0] + (i + 1.0) * dx, lo[1] + (j + 1.0) * dy])
        })
    };
    for (a, b) in cells(lo1, hi1) {
        grad2 += box_integral(a, b, 4, |p| {
            let g = u.grad(p);
            g[0] * g[0] + g[1] * g[1]
        });
    }
    for (a, b) in cells(lo2, hi2) {
        mean += box_integral(a, b, 4, |p| u.eval(p));
    }
    mean /= 4.0 * side * side;
    let mut var = 0.0;
    for (a, b) in cells(lo2, hi2) {
        var += box_integral(a, b, 4, |p| (u.eval(p) - mean).powi(2));
    }
    if var <= 0.0 {
        0.0
    } else {
        side * side * grad2 / var
    }
}
