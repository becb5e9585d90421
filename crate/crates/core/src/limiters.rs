//! Bound-preserving limiting of the wetting saturation.
//!
//! After each converged step the element means are corrected by an iterative
//! flux limiter acting on the net face mass fluxes `H`, and the slopes are then
//! reduced by a vertex-based slope limiter. Pressure is never limited.

use std::fmt::Write as _;

use crate::assembly::{boundary_face_rows, interior_face_rows, FlowState, LaggedVelocities, Problem};
use crate::dg::DgField;
use crate::error::{Error, Result};
use crate::mesh::TriMesh;
use crate::physics::FluidModel;
use crate::scalar::Real;

/// Admissible saturation range `[lo, hi]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LimiterBounds<T> {
    pub lo: T,
    pub hi: T,
}

impl<T: Real> LimiterBounds<T> {
    pub fn new(lo: T, hi: T) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::param("bounds", format!("need lo < hi, got [{lo}, {hi}]")));
        }
        Ok(Self { lo, hi })
    }

    /// `[s_rw, 1 - s_rl]`.
    pub fn from_fluid(fluid: &FluidModel<T>) -> Self {
        Self {
            lo: fluid.s_rw,
            hi: T::one() - fluid.s_rl,
        }
    }
}

/// Net mass flux `H_E(e)` leaving element `E` through its local face `k`.
#[derive(Clone, Debug, PartialEq)]
pub struct FluxTable<T> {
    values: Vec<[T; 3]>,
}

impl<T: Real> FluxTable<T> {
    pub fn from_values(values: Vec<[T; 3]>) -> Self {
        Self { values }
    }

    pub fn values(&self) -> &[[T; 3]] {
        &self.values
    }

    pub fn elem(&self, e: usize) -> [T; 3] {
        self.values[e]
    }

    pub fn get(&self, e: usize, k: usize) -> T {
        self.values[e][k]
    }

    /// `sum_e H_E(e)` per element.
    pub fn net(&self) -> Vec<T> {
        self.values.iter().map(|h| h[0] + h[1] + h[2]).collect()
    }

    pub fn max_abs(&self) -> T {
        self.values.iter().flatten().fold(T::zero(), |a, &b| a.max(b.abs()))
    }
}

/// Evaluates `H` from the face terms of the saturation equation, so that the
/// element balance tested with the indicator of `E` reads
/// `storage + sum_e H_E(e) = sources`. Interior values are stored once and
/// negated for the minus element.
pub fn flux_function<T: Real>(
    pb: &Problem<T>,
    new: &FlowState<T>,
    old: &FlowState<T>,
    lagged: &LaggedVelocities<T>,
) -> FluxTable<T> {
    let mesh = pb.space.mesh();
    let xv = new.to_vector();
    let local = |e: usize| -> [T; 6] { std::array::from_fn(|i| xv[6 * e + i]) };
    let mut values = vec![[T::zero(); 3]; mesh.num_elements()];
    for (f, face) in mesh.faces().iter().enumerate() {
        match face.minus {
            Some((em, km)) => {
                let rows = interior_face_rows::<T, T>(pb, f, &local(face.plus_elem), &local(em), old, lagged);
                let h = rows.plus[3] + rows.plus[4] + rows.plus[5];
                values[face.plus_elem][face.plus_local] = h;
                values[em][km] = -h;
            }
            None => {
                let rows = boundary_face_rows::<T, T>(pb, f, &local(face.plus_elem), new.time);
                values[face.plus_elem][face.plus_local] = rows[3] + rows[4] + rows[5];
            }
        }
    }
    FluxTable { values }
}

/// How the compressibility ratio `avg(rho_w phi)_n / avg(rho_w phi)_{n+1}`
/// enters the mean update.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompressionUpdate {
    /// Multiply the previous iterate by the ratio at every iteration, with the
    /// matching `Q` bounds built from `avg(rho_w phi)_n`.
    #[default]
    EveryIteration,
    /// Apply the ratio once; later iterations only redistribute the
    /// remaining flux at the new-time storage.
    FirstIterationOnly,
}

/// Sign of the production term in the admissible bounds `Q+-`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProductionSign {
    /// Both well terms enter `Q+-` with a plus sign, while the mean update
    /// subtracts production. Producer elements can then leave the bounds and
    /// are caught by the final clip.
    #[default]
    AsPrinted,
    /// `Q+-` use the same well term as the update.
    MatchUpdate,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FluxLimiterConfig<T> {
    pub eps1: T,
    pub eps2: T,
    pub max_iter: usize,
    pub compression: CompressionUpdate,
    /// Clip the limited means to the bounds, absorbing round-off and the
    /// storage change of compressible elements at a bound.
    pub clip: bool,
    pub production_sign: ProductionSign,
}

impl<T: Real> Default for FluxLimiterConfig<T> {
    fn default() -> Self {
        Self {
            eps1: T::lit(1e-6),
            eps2: T::lit(1e-6),
            max_iter: 1000,
            compression: CompressionUpdate::EveryIteration,
            clip: true,
            production_sign: ProductionSign::AsPrinted,
        }
    }
}

/// Per-element data of one step entering the mean update.
#[derive(Clone, Debug, PartialEq)]
pub struct AverageInputs<T> {
    pub areas: Vec<T>,
    /// `avg(rho_w(P_n) phi(P_n))`.
    pub storage_old: Vec<T>,
    /// `avg(rho_w(P_{n+1}) phi(P_{n+1}))`.
    pub storage_new: Vec<T>,
    /// `avg(rho_w(P_n) f_w(s_in)) qbar`.
    pub injection: Vec<T>,
    /// `avg(rho_w(P_n)) qunder`; multiplied by `f_w` of the current mean.
    pub production: Vec<T>,
    /// Element average of the wetting body force at `t_{n+1}`.
    pub source: Vec<T>,
    pub tau: T,
}

impl<T: Real> AverageInputs<T> {
    pub fn from_states(pb: &Problem<T>, new: &FlowState<T>, old: &FlowState<T>) -> Self {
        let space = &pb.space;
        let fluid = &pb.fluid;
        let rock = &pb.rock;
        let ne = space.num_elements();
        let rule = space.elem_rule();
        let fin = fluid.fractional_flow_w(pb.wells.s_in);
        let mut out = Self {
            areas: space.mesh().areas().to_vec(),
            storage_old: Vec::with_capacity(ne),
            storage_new: Vec::with_capacity(ne),
            injection: Vec::with_capacity(ne),
            production: Vec::with_capacity(ne),
            source: Vec::with_capacity(ne),
            tau: pb.scheme.tau,
        };
        for e in 0..ne {
            let (mut so, mut sn, mut ro, mut src) = (T::zero(), T::zero(), T::zero(), T::zero());
            for (b, &w) in rule.points.iter().zip(&rule.weights) {
                let po = old.pressure.value_at(e, b);
                let pn = new.pressure.value_at(e, b);
                let rwo = fluid.rho_w(po).v;
                so += w * rwo * rock.porosity(po).v;
                sn += w * fluid.rho_w(pn).v * rock.porosity(pn).v;
                ro += w * rwo;
                if let Some(f) = &pb.body_force {
                    src += w * f(space.map_point(e, b), new.time)[1];
                }
            }
            out.storage_old.push(so);
            out.storage_new.push(sn);
            out.injection.push(ro * fin * pb.wells.injection[e]);
            out.production.push(ro * pb.wells.production[e]);
            out.source.push(src);
        }
        out
    }
}

/// State of the iterative mean limiter between iterations.
#[derive(Clone, Debug)]
pub struct LimiterWorkspace<T> {
    /// `S^(k)`.
    pub means: Vec<T>,
    /// `H^(k)`.
    pub flux: Vec<[T; 3]>,
    /// Factors used in the last iteration.
    pub alpha: Vec<[T; 3]>,
    pub p_plus: Vec<T>,
    pub p_minus: Vec<T>,
    pub q_plus: Vec<T>,
    pub q_minus: Vec<T>,
    /// Completed iterations.
    pub k: usize,
    /// `max |H^(k) - H^(k-1)|` of the last iteration.
    pub last_change: T,
    pub production_sign: ProductionSign,
    neighbors: Vec<[Option<(usize, usize)>; 3]>,
}

impl<T: Real> LimiterWorkspace<T> {
    pub fn new(mesh: &TriMesh<T>, means_old: &[T], flux: &FluxTable<T>) -> Self {
        let ne = mesh.num_elements();
        let neighbors = (0..ne)
            .map(|e| {
                std::array::from_fn(|k| {
                    let f = &mesh.faces()[mesh.elem_faces()[e][k]];
                    if f.plus_elem == e && f.plus_local == k {
                        f.minus
                    } else {
                        Some((f.plus_elem, f.plus_local))
                    }
                })
            })
            .collect();
        Self {
            means: means_old.to_vec(),
            flux: flux.values.clone(),
            alpha: vec![[T::one(); 3]; ne],
            p_plus: vec![T::zero(); ne],
            p_minus: vec![T::zero(); ne],
            q_plus: vec![T::zero(); ne],
            q_minus: vec![T::zero(); ne],
            k: 0,
            last_change: T::infinity(),
            production_sign: ProductionSign::AsPrinted,
            neighbors,
        }
    }

    /// Steps 1 to 4 of one synchronous sweep over all elements.
    pub fn iterate(
        &mut self,
        inp: &AverageInputs<T>,
        fluid: &FluidModel<T>,
        bounds: LimiterBounds<T>,
        compression: CompressionUpdate,
    ) {
        let ne = self.means.len();
        let tau = inp.tau;
        let first = self.k == 0;
        let literal = compression == CompressionUpdate::EveryIteration || first;
        for e in 0..ne {
            let h = self.flux[e];
            let (mut pp, mut pm) = (T::zero(), T::zero());
            for &x in &h {
                pp += (-x).max(T::zero());
                pm += (-x).min(T::zero());
            }
            self.p_plus[e] = tau * pp;
            self.p_minus[e] = tau * pm;
            let area = inp.areas[e];
            let s = self.means[e];
            let stored = if literal {
                inp.storage_old[e]
            } else {
                inp.storage_new[e]
            } * s;
            let produced = inp.production[e] * fluid.fractional_flow_w(s);
            let produced = match self.production_sign {
                ProductionSign::AsPrinted => produced,
                ProductionSign::MatchUpdate => -produced,
            };
            let wells = if first {
                tau * (inp.injection[e] + produced + inp.source[e])
            } else {
                T::zero()
            };
            self.q_plus[e] = area * (inp.storage_new[e] * bounds.hi - stored) - area * wells;
            self.q_minus[e] = area * (inp.storage_new[e] * bounds.lo - stored) - area * wells;
        }
        let ratio = |num: T, den: T| -> T {
            if den == T::zero() {
                T::one()
            } else {
                (num / den).min(T::one()).max(T::zero())
            }
        };
        let r_plus: Vec<T> = (0..ne).map(|e| ratio(self.q_plus[e], self.p_plus[e])).collect();
        let r_minus: Vec<T> = (0..ne).map(|e| ratio(self.q_minus[e], self.p_minus[e])).collect();
        for e in 0..ne {
            for k in 0..3 {
                let h = self.flux[e][k];
                self.alpha[e][k] = match (self.neighbors[e][k], h) {
                    (_, h) if h == T::zero() => T::one(),
                    (Some((n, _)), h) if h < T::zero() => r_plus[e].min(r_minus[n]),
                    (Some((n, _)), _) => r_minus[e].min(r_plus[n]),
                    (None, h) if h < T::zero() => r_plus[e],
                    (None, _) => r_minus[e],
                };
            }
        }
        let mut change = T::zero();
        for e in 0..ne {
            let s = self.means[e];
            let sn = inp.storage_new[e];
            let mut limited = T::zero();
            for k in 0..3 {
                let ah = self.alpha[e][k] * self.flux[e][k];
                limited += ah;
                change = change.max(ah.abs());
            }
            let base = if literal { inp.storage_old[e] / sn * s } else { s };
            let mut next = base - tau / (sn * inp.areas[e]) * limited;
            if first {
                next += tau / sn * (inp.injection[e] - inp.production[e] * fluid.fractional_flow_w(s) + inp.source[e]);
            }
            self.means[e] = next;
        }
        for e in 0..ne {
            for k in 0..3 {
                self.flux[e][k] = (T::one() - self.alpha[e][k]) * self.flux[e][k];
            }
        }
        self.last_change = change;
        self.k += 1;
    }

    pub fn max_flux(&self) -> T {
        self.flux.iter().flatten().fold(T::zero(), |a, &b| a.max(b.abs()))
    }

    pub fn limited_faces(&self) -> usize {
        self.alpha.iter().flatten().filter(|&&a| a < T::one()).count()
    }
}

/// One row of the limiter trace.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LimiterIteration<T> {
    pub k: usize,
    pub max_flux: T,
    pub limited_faces: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LimiterReport<T> {
    pub means: Vec<T>,
    pub iterations: usize,
    pub history: Vec<LimiterIteration<T>>,
    /// `sum |E| |clipped - unclipped|` removed by the final clip.
    pub clipped_mass: T,
    /// Flux left unexchanged when the iteration stopped, `H^(k)`.
    pub remaining: FluxTable<T>,
}

impl<T: Real> LimiterReport<T> {
    /// Flux actually exchanged between elements, `H - H^(k)`.
    pub fn exchanged(&self, flux: &FluxTable<T>) -> FluxTable<T> {
        let values = flux
            .values
            .iter()
            .zip(&self.remaining.values)
            .map(|(h, r)| std::array::from_fn(|k| h[k] - r[k]))
            .collect();
        FluxTable { values }
    }
}

impl<T: Real> LimiterReport<T> {
    /// `k,max_abs_h,limited_faces` rows.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("k,max_abs_h,limited_faces\n");
        for r in &self.history {
            let _ = writeln!(s, "{},{:e},{}", r.k, r.max_flux, r.limited_faces);
        }
        s
    }
}

/// The mean limiter: returns bounded element means from the previous means
/// and the flux table of the converged step.
pub fn flux_limit_averages<T: Real>(
    mesh: &TriMesh<T>,
    means_old: &[T],
    flux: &FluxTable<T>,
    inputs: &AverageInputs<T>,
    fluid: &FluidModel<T>,
    bounds: LimiterBounds<T>,
    cfg: &FluxLimiterConfig<T>,
) -> Result<LimiterReport<T>> {
    let mut ws = LimiterWorkspace::new(mesh, means_old, flux);
    ws.production_sign = cfg.production_sign;
    let mut history = Vec::new();
    loop {
        ws.iterate(inputs, fluid, bounds, cfg.compression);
        let max_flux = ws.max_flux();
        history.push(LimiterIteration {
            k: ws.k,
            max_flux,
            limited_faces: ws.limited_faces(),
        });
        if max_flux < cfg.eps1 || (ws.k >= 2 && ws.last_change < cfg.eps2) {
            break;
        }
        if ws.k >= cfg.max_iter {
            return Err(Error::LimiterCap {
                cap: cfg.max_iter,
                max_flux: max_flux.as_f64(),
            });
        }
    }
    let mut clipped_mass = T::zero();
    if cfg.clip {
        for (m, a) in ws.means.iter_mut().zip(&inputs.areas) {
            let c = m.max(bounds.lo).min(bounds.hi);
            clipped_mass += *a * (c - *m).abs();
            *m = c;
        }
    }
    Ok(LimiterReport {
        means: ws.means,
        iterations: ws.k,
        history,
        clipped_mass,
        remaining: FluxTable { values: ws.flux },
    })
}

/// Shifts every element of `s` so that its mean becomes `means_fl`.
pub fn flux_limit_field<T: Real>(s: &DgField<T>, means_fl: &[T]) -> DgField<T> {
    let mut out = s.clone();
    for (e, &m) in means_fl.iter().enumerate() {
        let c = s.elem(e);
        let shift = m - (c[0] + c[1] + c[2]) / T::lit(3.0);
        out.set_elem(e, c.map(|v| v + shift));
    }
    out
}

/// Vertex-based slope limiter with patch bounds from neighbouring cell means,
/// intersected with `bounds`.
pub fn slope_limit<T: Real>(s: &DgField<T>, mesh: &TriMesh<T>, bounds: LimiterBounds<T>) -> DgField<T> {
    let means = s.cell_means();
    let vertex_bounds: Vec<(T, T)> = mesh
        .vertex_patches()
        .iter()
        .map(|patch| {
            let (lo, hi) = patch.iter().fold((T::infinity(), T::neg_infinity()), |(lo, hi), &e| {
                (lo.min(means[e]), hi.max(means[e]))
            });
            (lo.max(bounds.lo), hi.min(bounds.hi))
        })
        .collect();
    slope_limit_with_bounds(s, mesh, &vertex_bounds)
}

/// Scales each element's deviation from its mean so that every vertex value
/// lies in the given per-vertex bounds.
pub fn slope_limit_with_bounds<T: Real>(s: &DgField<T>, mesh: &TriMesh<T>, vertex_bounds: &[(T, T)]) -> DgField<T> {
    let mut out = s.clone();
    let three = T::lit(3.0);
    for (e, tri) in mesh.triangles().iter().enumerate() {
        let u = s.elem(e);
        let mean = (u[0] + u[1] + u[2]) / three;
        let mut alpha = T::one();
        for (i, &v) in tri.iter().enumerate() {
            let d = u[i] - mean;
            let (lo, hi) = vertex_bounds[v];
            if d > T::zero() {
                alpha = alpha.min((hi - mean) / d);
            } else if d < T::zero() {
                alpha = alpha.min((lo - mean) / d);
            }
        }
        let alpha = alpha.max(T::zero()).min(T::one());
        if alpha < T::one() {
            out.set_elem(e, u.map(|x| mean + alpha * (x - mean)));
        }
    }
    out
}
