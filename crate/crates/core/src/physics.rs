//! Constitutive laws and coefficient fields of the two-phase model.

use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::mesh::TriMesh;
use crate::scalar::{Real, Vec2};

/// Phase densities, compressibilities, viscosities and residual saturations.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FluidModel<T> {
    pub rho_w0: T,
    pub rho_l0: T,
    pub c_w: T,
    pub c_l: T,
    pub mu_w: T,
    pub mu_l: T,
    pub s_rw: T,
    pub s_rl: T,
    /// Clamp the effective saturation to `[0, 1]` before evaluating mobilities.
    pub clamp_mobility: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RockModel<T> {
    pub phi0: T,
    pub c_r: T,
}

/// A value together with its derivative.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dual<T> {
    pub v: T,
    pub d: T,
}

impl<T: Real> FluidModel<T> {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("rho_w0", self.rho_w0),
            ("rho_l0", self.rho_l0),
            ("mu_w", self.mu_w),
            ("mu_l", self.mu_l),
        ];
        for (key, v) in positive {
            if !(v > T::zero()) || !v.is_finite() {
                return Err(Error::param(key, format!("must be positive, got {v}")));
            }
        }
        for (key, v) in [("c_w", self.c_w), ("c_l", self.c_l)] {
            if !(v >= T::zero()) {
                return Err(Error::param(key, format!("must be non-negative, got {v}")));
            }
        }
        if self.s_rw < T::zero() || self.s_rl < T::zero() || !(self.s_rw + self.s_rl < T::one()) {
            return Err(Error::param(
                "s_rw/s_rl",
                "residual saturations must satisfy 0 <= s_rw + s_rl < 1",
            ));
        }
        Ok(())
    }

    pub fn effective_saturation(&self, s: T) -> T {
        (s - self.s_rw) / (T::one() - self.s_rw - self.s_rl)
    }

    pub fn effective_saturation_clamped(&self, s: T) -> T {
        self.effective_saturation(s).max(T::zero()).min(T::one())
    }

    fn se_dual(&self, s: T) -> Dual<T> {
        let scale = T::one() / (T::one() - self.s_rw - self.s_rl);
        let se = self.effective_saturation(s);
        if self.clamp_mobility {
            if se <= T::zero() {
                return Dual {
                    v: T::zero(),
                    d: T::zero(),
                };
            }
            if se >= T::one() {
                return Dual {
                    v: T::one(),
                    d: T::zero(),
                };
            }
        }
        Dual { v: se, d: scale }
    }

    /// Brooks-Corey mobilities `(lambda_w, lambda_l)`.
    pub fn mobilities(&self, s: T) -> (T, T) {
        let (w, l) = self.mobilities_dual(s);
        (w.v, l.v)
    }

    /// Mobilities and their derivatives with respect to `s`.
    pub fn mobilities_dual(&self, s: T) -> (Dual<T>, Dual<T>) {
        let se = self.se_dual(s);
        let two = T::lit(2.0);
        let one_m = T::one() - se.v;
        (
            Dual {
                v: se.v * se.v / self.mu_w,
                d: two * se.v * se.d / self.mu_w,
            },
            Dual {
                v: one_m * one_m / self.mu_l,
                d: -two * one_m * se.d / self.mu_l,
            },
        )
    }

    pub fn lambda_w(&self, s: T) -> Dual<T> {
        self.mobilities_dual(s).0
    }

    pub fn lambda_l(&self, s: T) -> Dual<T> {
        self.mobilities_dual(s).1
    }

    pub fn fractional_flow_w(&self, s: T) -> T {
        let (w, l) = self.mobilities(s);
        let total = w + l;
        debug_assert!(total > T::zero(), "total mobility vanished");
        w / total
    }

    pub fn fractional_flow_l(&self, s: T) -> T {
        T::one() - self.fractional_flow_w(s)
    }

    pub fn rho_w(&self, p: T) -> Dual<T> {
        Dual {
            v: self.rho_w0 * (T::one() + self.c_w * p),
            d: self.rho_w0 * self.c_w,
        }
    }

    pub fn rho_l(&self, p: T) -> Dual<T> {
        Dual {
            v: self.rho_l0 * (T::one() + self.c_l * p),
            d: self.rho_l0 * self.c_l,
        }
    }
}

impl<T: Real> RockModel<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.phi0 > T::zero() && self.phi0 <= T::one()) {
            return Err(Error::param("phi0", format!("must lie in (0, 1], got {}", self.phi0)));
        }
        if !(self.c_r >= T::zero()) {
            return Err(Error::param("c_r", "must be non-negative"));
        }
        Ok(())
    }

    pub fn porosity(&self, p: T) -> Dual<T> {
        Dual {
            v: self.phi0 * (T::one() + self.c_r * p),
            d: self.phi0 * self.c_r,
        }
    }
}

/// `(rho_w, rho_l, phi)` at pressure `p`.
pub fn density_porosity<T: Real>(p: T, fluid: &FluidModel<T>, rock: &RockModel<T>) -> (T, T, T) {
    (fluid.rho_w(p).v, fluid.rho_l(p).v, rock.porosity(p).v)
}

/// Symmetric 2x2 tensor.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tensor2<T> {
    pub xx: T,
    pub xy: T,
    pub yy: T,
}

impl<T: Real> Tensor2<T> {
    pub fn isotropic(k: T) -> Self {
        Self {
            xx: k,
            xy: T::zero(),
            yy: k,
        }
    }

    #[inline]
    pub fn apply(&self, v: Vec2<T>) -> Vec2<T> {
        [self.xx * v[0] + self.xy * v[1], self.xy * v[0] + self.yy * v[1]]
    }

    /// Eigenvalues in increasing order.
    pub fn eigenvalues(&self) -> [T; 2] {
        let half = T::lit(0.5);
        let m = half * (self.xx + self.yy);
        let d = (half * (self.xx - self.yy)).hypot(self.xy);
        [m - d, m + d]
    }

    pub fn is_spd(&self) -> bool {
        let [lo, _] = self.eigenvalues();
        lo > T::zero() && self.xx > T::zero() && (self.xx * self.yy - self.xy * self.xy) > T::zero()
    }

    pub fn scaled(&self, a: T) -> Self {
        Self {
            xx: a * self.xx,
            xy: a * self.xy,
            yy: a * self.yy,
        }
    }
}

/// `R(theta) diag(k1, k2) R(theta)^T`.
pub fn anisotropic_tensor<T: Real>(k1: T, k2: T, theta: T) -> Result<Tensor2<T>> {
    if !(k1 > T::zero()) || !(k2 > T::zero()) {
        return Err(Error::param("k1/k2", "principal permeabilities must be positive"));
    }
    let (s, c) = theta.sin_cos();
    Ok(Tensor2 {
        xx: c * c * k1 + s * s * k2,
        xy: c * s * (k1 - k2),
        yy: s * s * k1 + c * c * k2,
    })
}

/// Axis-aligned rectangle `[x0, x1] x [y0, y1]`.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Rect {
    pub fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Self {
        Self { x0, x1, y0, y1 }
    }

    pub fn centered_square(cx: f64, cy: f64, side: f64) -> Self {
        let h = 0.5 * side;
        Self::new(cx - h, cx + h, cy - h, cy + h)
    }

    pub fn area(&self) -> f64 {
        (self.x1 - self.x0).max(0.0) * (self.y1 - self.y0).max(0.0)
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        p[0] >= self.x0 && p[0] <= self.x1 && p[1] >= self.y0 && p[1] <= self.y1
    }

    /// Area of the intersection with a triangle (Sutherland-Hodgman clipping).
    pub fn intersection_area(&self, tri: [[f64; 2]; 3]) -> f64 {
        let mut poly: Vec<[f64; 2]> = tri.to_vec();
        let planes: [(usize, f64, bool); 4] = [
            (0, self.x0, true),
            (0, self.x1, false),
            (1, self.y0, true),
            (1, self.y1, false),
        ];
        for (axis, bound, keep_above) in planes {
            if poly.is_empty() {
                break;
            }
            let inside = |p: &[f64; 2]| if keep_above { p[axis] >= bound } else { p[axis] <= bound };
            let mut out = Vec::with_capacity(poly.len() + 2);
            for i in 0..poly.len() {
                let a = poly[i];
                let b = poly[(i + 1) % poly.len()];
                let (ia, ib) = (inside(&a), inside(&b));
                if ia {
                    out.push(a);
                }
                if ia != ib {
                    let t = (bound - a[axis]) / (b[axis] - a[axis]);
                    out.push([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]);
                }
            }
            poly = out;
        }
        if poly.len() < 3 {
            return 0.0;
        }
        let mut twice = 0.0;
        for i in 0..poly.len() {
            let a = poly[i];
            let b = poly[(i + 1) % poly.len()];
            twice += a[0] * b[1] - b[0] * a[1];
        }
        0.5 * twice.abs()
    }
}

/// Regular grid of scalar permeabilities (m^2) covering a rectangle.
#[derive(Clone, Debug, PartialEq)]
pub struct Raster {
    pub nx: usize,
    pub ny: usize,
    pub x0: f64,
    pub y0: f64,
    pub dx: f64,
    pub dy: f64,
    /// Row-major: `values[j * nx + i]` is the cell in column `i`, row `j`.
    pub values: Vec<f64>,
}

impl Raster {
    /// Parses `nx ny x0 y0 dx dy` followed by `nx * ny` values.
    pub fn parse(text: &str) -> Result<Self> {
        let mut it = text.split_whitespace();
        let mut next = |what: &str| -> Result<f64> {
            let tok = it
                .next()
                .ok_or_else(|| Error::Config(format!("raster: missing {what}")))?;
            tok.parse::<f64>()
                .map_err(|_| Error::Config(format!("raster: `{tok}` is not a number ({what})")))
        };
        let nx = next("nx")?;
        let ny = next("ny")?;
        if nx < 1.0 || ny < 1.0 || nx.fract() != 0.0 || ny.fract() != 0.0 {
            return Err(Error::Config("raster: nx and ny must be positive integers".into()));
        }
        let (nx, ny) = (nx as usize, ny as usize);
        let x0 = next("x0")?;
        let y0 = next("y0")?;
        let dx = next("dx")?;
        let dy = next("dy")?;
        if !(dx > 0.0 && dy > 0.0) {
            return Err(Error::Config("raster: dx and dy must be positive".into()));
        }
        let mut values = Vec::with_capacity(nx * ny);
        for i in 0..nx * ny {
            let v = next(&format!("value {i}"))?;
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!(
                    "raster: value {i} = {v} is not a positive permeability in m^2 \
                     (log-scaled data is not accepted)"
                )));
            }
            values.push(v);
        }
        if it.next().is_some() {
            return Err(Error::Config("raster: trailing data after nx*ny values".into()));
        }
        Ok(Self {
            nx,
            ny,
            x0,
            y0,
            dx,
            dy,
            values,
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!(
            "{} {} {} {} {} {}\n",
            self.nx, self.ny, self.x0, self.y0, self.dx, self.dy
        );
        for row in self.values.chunks(self.nx) {
            let line: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
            s.push_str(&line.join(" "));
            s.push('\n');
        }
        s
    }

    pub fn lookup(&self, p: [f64; 2]) -> Option<f64> {
        let fx = (p[0] - self.x0) / self.dx;
        let fy = (p[1] - self.y0) / self.dy;
        if fx < 0.0 || fy < 0.0 {
            return None;
        }
        let (i, j) = (fx.floor() as usize, fy.floor() as usize);
        if i >= self.nx || j >= self.ny {
            return None;
        }
        Some(self.values[j * self.nx + i])
    }
}

/// Permeability description, evaluated as one tensor per element at its centroid.
#[derive(Clone, Debug, PartialEq)]
pub enum PermeabilityField {
    Constant(f64),
    /// Background value with rectangular blocks; later blocks win.
    Blocks {
        background: f64,
        blocks: Vec<(Rect, f64)>,
    },
    /// Raster values where the raster covers the centroid, background elsewhere.
    Raster {
        background: f64,
        raster: Raster,
    },
    /// Anisotropic tensor `R diag(k1, k2) R^T` with one angle (degrees) per
    /// quadrant around `split`: `[bottom-left, bottom-right, top-left, top-right]`.
    TensorQuadrants {
        k1: f64,
        k2: f64,
        split: [f64; 2],
        theta_deg: [f64; 4],
    },
}

impl PermeabilityField {
    pub fn evaluate<T: Real>(&self, mesh: &TriMesh<T>) -> Result<Vec<Tensor2<T>>> {
        let mut out = Vec::with_capacity(mesh.num_elements());
        for e in 0..mesh.num_elements() {
            let c = mesh.centroid(e);
            let c = [c[0].as_f64(), c[1].as_f64()];
            let k = self.at(c)?;
            if !k.is_spd() {
                return Err(Error::param(
                    "permeability",
                    format!("tensor at element {e} is not symmetric positive definite"),
                ));
            }
            out.push(Tensor2 {
                xx: T::lit(k.xx),
                xy: T::lit(k.xy),
                yy: T::lit(k.yy),
            });
        }
        Ok(out)
    }

    pub fn at(&self, p: [f64; 2]) -> Result<Tensor2<f64>> {
        Ok(match self {
            PermeabilityField::Constant(k) => Tensor2::isotropic(*k),
            PermeabilityField::Blocks { background, blocks } => {
                let k = blocks
                    .iter()
                    .rev()
                    .find(|(r, _)| r.contains(p))
                    .map_or(*background, |(_, k)| *k);
                Tensor2::isotropic(k)
            }
            PermeabilityField::Raster { background, raster } => {
                Tensor2::isotropic(raster.lookup(p).unwrap_or(*background))
            }
            PermeabilityField::TensorQuadrants {
                k1,
                k2,
                split,
                theta_deg,
            } => {
                let right = p[0] >= split[0];
                let top = p[1] >= split[1];
                let idx = usize::from(right) + 2 * usize::from(top);
                anisotropic_tensor(*k1, *k2, theta_deg[idx].to_radians())?
            }
        })
    }
}

/// Injector or producer: total volumetric rate spread uniformly over a box.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WellBox {
    pub region: Rect,
    pub total_rate: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WellModel<T> {
    pub s_in: T,
    /// Element averages of the injection rate density (1/s).
    pub injection: Vec<T>,
    /// Element averages of the production rate density (1/s).
    pub production: Vec<T>,
}

impl<T: Real> WellModel<T> {
    pub fn none(num_elements: usize) -> Self {
        Self {
            s_in: T::zero(),
            injection: vec![T::zero(); num_elements],
            production: vec![T::zero(); num_elements],
        }
    }

    /// Element-averaged rate densities of the given wells.
    pub fn from_boxes(mesh: &TriMesh<T>, s_in: T, injectors: &[WellBox], producers: &[WellBox]) -> Result<Self> {
        let spread = |wells: &[WellBox], key: &str| -> Result<Vec<T>> {
            let mut rates = vec![T::zero(); mesh.num_elements()];
            for w in wells {
                if !(w.total_rate >= 0.0) || !(w.region.area() > 0.0) {
                    return Err(Error::param(key, "well rates must be >= 0 on a box of positive area"));
                }
                let density = w.total_rate / w.region.area();
                for (e, r) in rates.iter_mut().enumerate() {
                    let v = mesh.element_vertices(e).map(|p| [p[0].as_f64(), p[1].as_f64()]);
                    let frac = w.region.intersection_area(v) / mesh.area(e).as_f64();
                    *r += T::lit(density * frac);
                }
            }
            Ok(rates)
        };
        Ok(Self {
            s_in,
            injection: spread(injectors, "wells.injector")?,
            production: spread(producers, "wells.producer")?,
        })
    }

    pub fn is_active(&self) -> bool {
        self.injection.iter().chain(&self.production).any(|&q| q != T::zero())
    }

    /// `(q_w, q_l)` at saturation `s` in element `elem`.
    pub fn rates(&self, s: T, elem: usize, fluid: &FluidModel<T>) -> (T, T) {
        let qi = self.injection[elem];
        let qp = self.production[elem];
        if qi == T::zero() && qp == T::zero() {
            return (T::zero(), T::zero());
        }
        let fin = fluid.fractional_flow_w(self.s_in);
        let fw = fluid.fractional_flow_w(s);
        (fin * qi - fw * qp, (T::one() - fin) * qi - (T::one() - fw) * qp)
    }
}

/// Scalar boundary datum, constant or a function of position and time.
#[derive(Clone)]
pub enum ScalarData<T> {
    Constant(T),
    Function(Arc<dyn Fn(Vec2<T>, T) -> T + Send + Sync>),
}

impl<T: Real> ScalarData<T> {
    #[inline]
    pub fn at(&self, x: Vec2<T>, t: T) -> T {
        match self {
            ScalarData::Constant(c) => *c,
            ScalarData::Function(f) => f(x, t),
        }
    }
}

impl<T: std::fmt::Debug> std::fmt::Debug for ScalarData<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ScalarData::Constant(c) => write!(f, "Constant({c:?})"),
            ScalarData::Function(_) => write!(f, "Function(..)"),
        }
    }
}

/// Data attached to one boundary rule. Only the entries matching the rule's
/// classes are used.
#[derive(Clone, Debug)]
pub struct BoundaryData<T> {
    pub g_p: ScalarData<T>,
    pub g_s: ScalarData<T>,
    pub j_p: ScalarData<T>,
    pub j_s: ScalarData<T>,
}

impl<T: Real> BoundaryData<T> {
    pub fn no_flow() -> Self {
        Self {
            g_p: ScalarData::Constant(T::zero()),
            g_s: ScalarData::Constant(T::zero()),
            j_p: ScalarData::Constant(T::zero()),
            j_s: ScalarData::Constant(T::zero()),
        }
    }

    pub fn dirichlet(g_p: T, g_s: T) -> Self {
        Self {
            g_p: ScalarData::Constant(g_p),
            g_s: ScalarData::Constant(g_s),
            ..Self::no_flow()
        }
    }
}
