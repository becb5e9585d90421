//! Residual and Jacobian of the fully implicit DG scheme.
//!
//! Unknown layout: element `e` owns entries `6e..6e+3` (pressure at its three
//! vertices) and `6e+3..6e+6` (saturation). Residual rows are "left-hand side
//! minus right-hand side" of the pressure and saturation weak forms tested
//! against each nodal basis function.

use std::sync::Arc;

use crate::ad::{Ad, Jet};
use crate::dg::{DgField, DgSpace};
use crate::error::{Error, Result};
use crate::linalg::{BlockMatrix, BlockPattern, BLOCK};
use crate::mesh::{PressureBc, SaturationBc};
use crate::physics::{BoundaryData, FluidModel, RockModel, Tensor2, WellModel};
use crate::scalar::{dot, Real, Vec2};

/// Pressure and saturation at one time level.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowState<T> {
    pub pressure: DgField<T>,
    pub saturation: DgField<T>,
    pub step: usize,
    /// Seconds.
    pub time: T,
}

impl<T: Real> FlowState<T> {
    pub fn new(pressure: DgField<T>, saturation: DgField<T>, step: usize, time: T) -> Self {
        assert_eq!(
            pressure.num_elements(),
            saturation.num_elements(),
            "pressure and saturation live on different meshes"
        );
        Self {
            pressure,
            saturation,
            step,
            time,
        }
    }

    pub fn num_elements(&self) -> usize {
        self.pressure.num_elements()
    }

    /// Interleaved unknown vector.
    pub fn to_vector(&self) -> Vec<T> {
        let mut v = Vec::with_capacity(BLOCK * self.num_elements());
        for e in 0..self.num_elements() {
            v.extend_from_slice(&self.pressure.elem(e));
            v.extend_from_slice(&self.saturation.elem(e));
        }
        v
    }

    pub fn from_vector(v: &[T], step: usize, time: T) -> Self {
        let ne = v.len() / BLOCK;
        let mut p = Vec::with_capacity(3 * ne);
        let mut s = Vec::with_capacity(3 * ne);
        for blk in v.chunks_exact(BLOCK) {
            p.extend_from_slice(&blk[..3]);
            s.extend_from_slice(&blk[3..]);
        }
        Self::new(DgField::from_coeffs(p), DgField::from_coeffs(s), step, time)
    }

    pub fn is_finite(&self) -> bool {
        self.pressure.is_finite() && self.saturation.is_finite()
    }
}

/// Penalty and time step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SchemeParams<T> {
    pub sigma: T,
    /// Penalty on Dirichlet faces, for both the jump and the data term.
    pub sigma_dirichlet: T,
    /// Seconds.
    pub tau: T,
}

impl<T: Real> SchemeParams<T> {
    pub fn new(sigma: T, tau: T) -> Self {
        Self {
            sigma,
            sigma_dirichlet: T::lit(10.0) * sigma,
            tau,
        }
    }
}

/// Volumetric source terms `[F_l, F_w]` at `(x, t)` added to the right-hand
/// sides of the pressure and saturation equations.
pub type BodyForce<T> = Arc<dyn Fn(Vec2<T>, T) -> [T; 2] + Send + Sync>;

/// Everything the discrete operator depends on besides the states.
#[derive(Clone)]
pub struct Problem<T> {
    pub space: DgSpace<T>,
    pub fluid: FluidModel<T>,
    pub rock: RockModel<T>,
    /// One tensor per element.
    pub permeability: Vec<Tensor2<T>>,
    pub wells: WellModel<T>,
    pub gravity: Vec2<T>,
    /// Indexed by the boundary rule that tagged each face.
    pub boundary: Vec<BoundaryData<T>>,
    pub scheme: SchemeParams<T>,
    pub body_force: Option<BodyForce<T>>,
    pattern: Arc<BlockPattern>,
}

impl<T: Real> std::fmt::Debug for Problem<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Problem")
            .field("elements", &self.space.num_elements())
            .field("fluid", &self.fluid)
            .field("rock", &self.rock)
            .field("gravity", &self.gravity)
            .field("scheme", &self.scheme)
            .field("body_force", &self.body_force.is_some())
            .finish_non_exhaustive()
    }
}

impl<T: Real> Problem<T> {
    /// A problem without wells, gravity or body force; boundary data defaults
    /// to no-flow for every rule until replaced.
    pub fn new(
        space: DgSpace<T>,
        fluid: FluidModel<T>,
        rock: RockModel<T>,
        permeability: Vec<Tensor2<T>>,
        scheme: SchemeParams<T>,
    ) -> Self {
        let ne = space.num_elements();
        let rules = space
            .mesh()
            .boundary_faces()
            .filter_map(|(_, f)| f.boundary.map(|t| t.rule + 1))
            .max()
            .unwrap_or(0);
        let pattern = Arc::new(BlockPattern::from_mesh(space.mesh()));
        Self {
            space,
            fluid,
            rock,
            permeability,
            wells: WellModel::none(ne),
            gravity: [T::zero(); 2],
            boundary: vec![BoundaryData::no_flow(); rules],
            scheme,
            body_force: None,
            pattern,
        }
    }

    pub fn pattern(&self) -> &Arc<BlockPattern> {
        &self.pattern
    }

    pub fn num_unknowns(&self) -> usize {
        BLOCK * self.space.num_elements()
    }

    pub fn validate(&self) -> Result<()> {
        self.fluid.validate()?;
        self.rock.validate()?;
        let ne = self.space.num_elements();
        let mesh = self.space.mesh();
        if !mesh.is_classified() {
            return Err(Error::Boundary("mesh boundary has not been classified".into()));
        }
        if self.permeability.len() != ne {
            return Err(Error::param("permeability", "expected one tensor per element"));
        }
        if let Some(e) = self.permeability.iter().position(|k| !k.is_spd()) {
            return Err(Error::param(
                "permeability",
                format!("tensor at element {e} is not positive definite"),
            ));
        }
        if self.wells.injection.len() != ne || self.wells.production.len() != ne {
            return Err(Error::param("wells", "expected one rate per element"));
        }
        if self
            .wells
            .injection
            .iter()
            .chain(&self.wells.production)
            .any(|&q| q < T::zero())
        {
            return Err(Error::param("wells", "rates must be non-negative"));
        }
        for (_, f) in mesh.boundary_faces() {
            let tag = f.boundary.expect("classified");
            if tag.rule >= self.boundary.len() {
                return Err(Error::param(
                    "boundary",
                    format!("no data for boundary rule {}", tag.rule),
                ));
            }
        }
        if !(self.scheme.sigma > T::zero()) || !(self.scheme.tau > T::zero()) {
            return Err(Error::param("sigma/tau", "penalty and time step must be positive"));
        }
        Ok(())
    }
}

/// Face-averaged normal components of the lagged phase velocities, one entry
/// per face, frozen for the Newton iterations of a step.
#[derive(Clone, Debug, PartialEq)]
pub struct LaggedVelocities<T> {
    pub v_l: Vec<T>,
    pub v_w: Vec<T>,
}

impl<T: Real> LaggedVelocities<T> {
    /// Whether the upwind side of `face` for phase `w` (true) or `l` is the plus element.
    #[inline]
    pub fn upwind_is_plus(&self, face: usize, wetting: bool) -> bool {
        let v = if wetting { self.v_w[face] } else { self.v_l[face] };
        v > T::zero()
    }
}

/// `v_a = -rho_a(P_n) K (grad P_n - rho_a(P_n) g)`, averaged over each face.
pub fn lagged_velocities<T: Real>(problem: &Problem<T>, old: &FlowState<T>) -> LaggedVelocities<T> {
    let space = &problem.space;
    let mesh = space.mesh();
    let g = problem.gravity;
    let half = T::lit(0.5);
    let mut v_l = Vec::with_capacity(mesh.faces().len());
    let mut v_w = Vec::with_capacity(mesh.faces().len());
    for (fi, face) in mesh.faces().iter().enumerate() {
        let q = space.face_quadrature(fi);
        let side_velocity = |elem: usize, b: &[T; 3]| -> (T, T) {
            let grad = old.pressure.gradient(elem, space.grads(elem));
            let p = old.pressure.value_at(elem, b);
            let k = problem.permeability[elem];
            let rl = problem.fluid.rho_l(p).v;
            let rw = problem.fluid.rho_w(p).v;
            let vl = -rl * dot(k.apply([grad[0] - rl * g[0], grad[1] - rl * g[1]]), face.normal);
            let vw = -rw * dot(k.apply([grad[0] - rw * g[0], grad[1] - rw * g[1]]), face.normal);
            (vl, vw)
        };
        let (mut al, mut aw) = (T::zero(), T::zero());
        for (qi, &w) in q.weights.iter().enumerate() {
            let (mut l, mut wv) = side_velocity(q.plus.elem, &q.plus.bary[qi]);
            if let Some(m) = &q.minus {
                let (lm, wm) = side_velocity(m.elem, &m.bary[qi]);
                l = half * (l + lm);
                wv = half * (wv + wm);
            }
            al += w * l;
            aw += w * wv;
        }
        v_l.push(al / face.length);
        v_w.push(aw / face.length);
    }
    LaggedVelocities { v_l, v_w }
}

/// Trace of `field` on an interior face taken from its upwind side.
pub fn upwind_trace<T: Real>(
    space: &DgSpace<T>,
    field: &DgField<T>,
    face: usize,
    avg_normal_velocity: T,
) -> Result<Vec<T>> {
    let q = space.face_quadrature(face);
    let minus = q
        .minus
        .as_ref()
        .ok_or_else(|| Error::Mesh(format!("face {face} is on the boundary and has no upwind side")))?;
    let side = if avg_normal_velocity > T::zero() {
        &q.plus
    } else {
        minus
    };
    Ok(space.trace(field, side))
}

/// Contributions of one face to the rows of its plus and (if interior) minus element.
#[derive(Clone, Copy, Debug)]
pub(crate) struct FaceRows<A> {
    pub plus: [A; BLOCK],
    pub minus: [A; BLOCK],
}

#[inline]
fn lin<T: Real, A: Ad<T>>(c: &[A], b: &[T; 3]) -> A {
    c[0].scale(b[0]) + c[1].scale(b[1]) + c[2].scale(b[2])
}

#[inline]
fn grad<T: Real, A: Ad<T>>(c: &[A], g: &[Vec2<T>; 3]) -> [A; 2] {
    [
        c[0].scale(g[0][0]) + c[1].scale(g[1][0]) + c[2].scale(g[2][0]),
        c[0].scale(g[0][1]) + c[1].scale(g[1][1]) + c[2].scale(g[2][1]),
    ]
}

/// `(K (G - rho g)) . n` for an `Ad` gradient and density.
#[inline]
fn darcy_normal<T: Real, A: Ad<T>>(k: &Tensor2<T>, gr: [A; 2], rho: A, g: Vec2<T>, n: Vec2<T>) -> A {
    let fx = gr[0] - rho.scale(g[0]);
    let fy = gr[1] - rho.scale(g[1]);
    let kn = k.apply(n);
    fx.scale(kn[0]) + fy.scale(kn[1])
}

/// Element (volume) rows.
pub(crate) fn element_rows<T: Real, A: Ad<T>>(
    pb: &Problem<T>,
    e: usize,
    x: &[A; BLOCK],
    old: &FlowState<T>,
    t_new: T,
) -> [A; BLOCK] {
    let space = &pb.space;
    let fluid = &pb.fluid;
    let rock = &pb.rock;
    let area = space.mesh().area(e);
    let grads = space.grads(e);
    let k = &pb.permeability[e];
    let g = pb.gravity;
    let inv_tau = T::one() / pb.scheme.tau;
    let (p, s) = x.split_at(3);
    let gp = grad(p, grads);
    let pn = old.pressure.elem(e);
    let sn = old.saturation.elem(e);
    let rule = space.elem_rule();
    let mut out = [A::cst(T::zero()); BLOCK];
    for (b, &w) in rule.points.iter().zip(&rule.weights) {
        let wa = w * area;
        let pq = lin(p, b);
        let sq = lin(s, b);
        let pnq = b[0] * pn[0] + b[1] * pn[1] + b[2] * pn[2];
        let snq = b[0] * sn[0] + b[1] * sn[1] + b[2] * sn[2];
        let (pv, sv) = (pq.val(), sq.val());
        let phi = pq.chain(rock.porosity(pv));
        let rl = pq.chain(fluid.rho_l(pv));
        let rw = pq.chain(fluid.rho_w(pv));
        let (lw_d, ll_d) = fluid.mobilities_dual(sv);
        let lw = sq.chain(lw_d);
        let ll = sq.chain(ll_d);
        let phin = rock.porosity(pnq).v;
        let rln = fluid.rho_l(pnq).v;
        let rwn = fluid.rho_w(pnq).v;
        let (qw, ql) = pb.wells.rates(snq, e, fluid);
        let (fl, fw) = match &pb.body_force {
            Some(f) => {
                let [a, c] = f(space.map_point(e, b), t_new);
                (a, c)
            }
            None => (T::zero(), T::zero()),
        };
        let one = A::cst(T::one());
        let store_l =
            (phi * rl * (one - sq)).scale(inv_tau) - A::cst(inv_tau * phin * rln * (T::one() - snq) + rln * ql + fl);
        let store_w = (phi * rw * sq).scale(inv_tau) - A::cst(inv_tau * phin * rwn * snq + rwn * qw + fw);
        let cl = rl * ll;
        let cw = rw * lw;
        let kl = [gp[0] - rl.scale(g[0]), gp[1] - rl.scale(g[1])];
        let kw = [gp[0] - rw.scale(g[0]), gp[1] - rw.scale(g[1])];
        for i in 0..3 {
            // K symmetric: (K v) . grad b = v . (K grad b)
            let kg = k.apply(grads[i]);
            let fl_i = kl[0].scale(kg[0]) + kl[1].scale(kg[1]);
            let fw_i = kw[0].scale(kg[0]) + kw[1].scale(kg[1]);
            out[i] = out[i] + (store_l.scale(b[i]) + cl * fl_i).scale(wa);
            out[3 + i] = out[3 + i] + (store_w.scale(b[i]) + cw * fw_i).scale(wa);
        }
    }
    out
}

/// Interior face rows; `xp` and `xm` are the unknowns of the plus and minus element.
pub(crate) fn interior_face_rows<T: Real, A: Ad<T>>(
    pb: &Problem<T>,
    f: usize,
    xp: &[A; BLOCK],
    xm: &[A; BLOCK],
    old: &FlowState<T>,
    lagged: &LaggedVelocities<T>,
) -> FaceRows<A> {
    let space = &pb.space;
    let fluid = &pb.fluid;
    let face = &space.mesh().faces()[f];
    let q = space.face_quadrature(f);
    let minus = q.minus.as_ref().expect("interior face");
    let (ep, em) = (q.plus.elem, minus.elem);
    let n = face.normal;
    let g = pb.gravity;
    let (kp, km) = (&pb.permeability[ep], &pb.permeability[em]);
    let pen = pb.scheme.sigma / space.mesh().h();
    let half = T::lit(0.5);
    let gp = grad(&xp[..3], space.grads(ep));
    let gm = grad(&xm[..3], space.grads(em));
    let up_l = lagged.upwind_is_plus(f, false);
    let up_w = lagged.upwind_is_plus(f, true);
    let mut rows = FaceRows {
        plus: [A::cst(T::zero()); BLOCK],
        minus: [A::cst(T::zero()); BLOCK],
    };
    for (qi, &w) in q.weights.iter().enumerate() {
        let (bp, bm) = (&q.plus.bary[qi], &minus.bary[qi]);
        let pp = lin(&xp[..3], bp);
        let pm = lin(&xm[..3], bm);
        let sp = lin(&xp[3..], bp);
        let sm = lin(&xm[3..], bm);
        let pnp = old.pressure.value_at(ep, bp);
        let pnm = old.pressure.value_at(em, bm);

        // non-wetting: density inside the average lagged at P_n, gravity density at P_{n+1}
        let rlp = pp.chain(fluid.rho_l(pp.val()));
        let rlm = pm.chain(fluid.rho_l(pm.val()));
        let avg_l = (darcy_normal(kp, gp, rlp, g, n).scale(fluid.rho_l(pnp).v)
            + darcy_normal(km, gm, rlm, g, n).scale(fluid.rho_l(pnm).v))
        .scale(half);
        let s_up_l = if up_l { sp } else { sm };
        let lam_l = s_up_l.chain(fluid.lambda_l(s_up_l.val()));
        let flux_l = lam_l * avg_l - (pp - pm).scale(pen);

        let rwp = pp.chain(fluid.rho_w(pp.val()));
        let rwm = pm.chain(fluid.rho_w(pm.val()));
        let avg_w = (rwp * darcy_normal(kp, gp, rwp, g, n) + rwm * darcy_normal(km, gm, rwm, g, n)).scale(half);
        let s_up_w = if up_w { sp } else { sm };
        let lam_w = s_up_w.chain(fluid.lambda_w(s_up_w.val()));
        let flux_w = lam_w * avg_w - (sp - sm).scale(pen);

        for i in 0..3 {
            rows.plus[i] = rows.plus[i] - flux_l.scale(w * bp[i]);
            rows.minus[i] = rows.minus[i] + flux_l.scale(w * bm[i]);
            rows.plus[3 + i] = rows.plus[3 + i] - flux_w.scale(w * bp[i]);
            rows.minus[3 + i] = rows.minus[3 + i] + flux_w.scale(w * bm[i]);
        }
    }
    rows
}

/// Boundary face rows of its (plus) element.
pub(crate) fn boundary_face_rows<T: Real, A: Ad<T>>(pb: &Problem<T>, f: usize, x: &[A; BLOCK], t_new: T) -> [A; BLOCK] {
    let space = &pb.space;
    let fluid = &pb.fluid;
    let face = &space.mesh().faces()[f];
    let tag = face.boundary.expect("boundary face is classified");
    let data = &pb.boundary[tag.rule];
    let q = space.face_quadrature(f);
    let e = q.plus.elem;
    let n = face.normal;
    let g = pb.gravity;
    let k = &pb.permeability[e];
    let pen_d = pb.scheme.sigma_dirichlet / space.mesh().h();
    let gp = grad(&x[..3], space.grads(e));
    let mut out = [A::cst(T::zero()); BLOCK];
    for (qi, &w) in q.weights.iter().enumerate() {
        let b = &q.plus.bary[qi];
        let xq = q.points[qi];
        let p = lin(&x[..3], b);
        let s = lin(&x[3..], b);
        let row_p = match tag.pressure {
            PressureBc::Dirichlet => {
                let gpv = data.g_p.at(xq, t_new);
                let rl = p.chain(fluid.rho_l(p.val()));
                let lam = s.chain(fluid.lambda_l(s.val()));
                -(lam * rl * darcy_normal(k, gp, rl, g, n)) + (p - A::cst(gpv)).scale(pen_d)
            }
            PressureBc::Neumann => A::cst(-data.j_p.at(xq, t_new)),
        };
        let row_s = match tag.saturation {
            SaturationBc::Dirichlet => {
                let gpv = data.g_p.at(xq, t_new);
                let gsv = data.g_s.at(xq, t_new);
                let rw = p.chain(fluid.rho_w(p.val()));
                let coef = fluid.lambda_w(gsv).v * fluid.rho_w(gpv).v;
                -(darcy_normal(k, gp, rw, g, n).scale(coef)) + (s - A::cst(gsv)).scale(pen_d)
            }
            SaturationBc::Outflow => {
                let gpv = data.g_p.at(xq, t_new);
                let rw = p.chain(fluid.rho_w(p.val()));
                let lam = s.chain(fluid.lambda_w(s.val()));
                -(lam * darcy_normal(k, gp, rw, g, n).scale(fluid.rho_w(gpv).v))
            }
            SaturationBc::Neumann => A::cst(-data.j_s.at(xq, t_new)),
        };
        for i in 0..3 {
            out[i] = out[i] + row_p.scale(w * b[i]);
            out[3 + i] = out[3 + i] + row_s.scale(w * b[i]);
        }
    }
    out
}

fn local<T: Real>(v: &[T], e: usize) -> [T; BLOCK] {
    let mut x = [T::zero(); BLOCK];
    x.copy_from_slice(&v[BLOCK * e..BLOCK * (e + 1)]);
    x
}

/// Nonlinear residual at the iterate `new` (its `time` is `t_{n+1}`).
pub fn residual<T: Real>(
    pb: &Problem<T>,
    new: &FlowState<T>,
    old: &FlowState<T>,
    lagged: &LaggedVelocities<T>,
) -> Vec<T> {
    let xv = new.to_vector();
    residual_vec(pb, &xv, old, lagged, new.time)
}

pub(crate) fn residual_vec<T: Real>(
    pb: &Problem<T>,
    xv: &[T],
    old: &FlowState<T>,
    lagged: &LaggedVelocities<T>,
    t_new: T,
) -> Vec<T> {
    let mesh = pb.space.mesh();
    let mut r = vec![T::zero(); xv.len()];
    for e in 0..mesh.num_elements() {
        let rows = element_rows(pb, e, &local(xv, e), old, t_new);
        for (dst, v) in r[BLOCK * e..].iter_mut().zip(rows) {
            *dst += v;
        }
    }
    for (f, face) in mesh.faces().iter().enumerate() {
        let ep = face.plus_elem;
        match face.minus_elem() {
            Some(em) => {
                let rows = interior_face_rows(pb, f, &local(xv, ep), &local(xv, em), old, lagged);
                for i in 0..BLOCK {
                    r[BLOCK * ep + i] += rows.plus[i];
                    r[BLOCK * em + i] += rows.minus[i];
                }
            }
            None => {
                let rows = boundary_face_rows(pb, f, &local(xv, ep), t_new);
                for i in 0..BLOCK {
                    r[BLOCK * ep + i] += rows[i];
                }
            }
        }
    }
    r
}

fn seed<T: Real, const N: usize>(x: &[T; BLOCK], offset: usize) -> [Jet<T, N>; BLOCK] {
    std::array::from_fn(|i| Jet::var(x[i], offset + i))
}

fn block_of<T: Real, const N: usize>(rows: &[Jet<T, N>; BLOCK], offset: usize) -> [[T; BLOCK]; BLOCK] {
    std::array::from_fn(|i| std::array::from_fn(|j| rows[i].d[offset + j]))
}

/// Residual and exact Jacobian (upwind sides and lagged data held fixed).
pub fn assemble<T: Real>(
    pb: &Problem<T>,
    new: &FlowState<T>,
    old: &FlowState<T>,
    lagged: &LaggedVelocities<T>,
) -> (Vec<T>, BlockMatrix<T>) {
    let xv = new.to_vector();
    let t_new = new.time;
    let mesh = pb.space.mesh();
    let mut r = vec![T::zero(); xv.len()];
    let mut jac = BlockMatrix::zeros(pb.pattern.clone());
    for e in 0..mesh.num_elements() {
        let x: [Jet<T, BLOCK>; BLOCK] = seed(&local(&xv, e), 0);
        let rows = element_rows(pb, e, &x, old, t_new);
        for i in 0..BLOCK {
            r[BLOCK * e + i] += rows[i].v;
        }
        jac.add_block(e, e, &block_of(&rows, 0));
    }
    for (f, face) in mesh.faces().iter().enumerate() {
        let ep = face.plus_elem;
        match face.minus_elem() {
            Some(em) => {
                let xp: [Jet<T, 12>; BLOCK] = seed(&local(&xv, ep), 0);
                let xm: [Jet<T, 12>; BLOCK] = seed(&local(&xv, em), BLOCK);
                let rows = interior_face_rows(pb, f, &xp, &xm, old, lagged);
                for i in 0..BLOCK {
                    r[BLOCK * ep + i] += rows.plus[i].v;
                    r[BLOCK * em + i] += rows.minus[i].v;
                }
                jac.add_block(ep, ep, &block_of(&rows.plus, 0));
                jac.add_block(ep, em, &block_of(&rows.plus, BLOCK));
                jac.add_block(em, ep, &block_of(&rows.minus, 0));
                jac.add_block(em, em, &block_of(&rows.minus, BLOCK));
            }
            None => {
                let x: [Jet<T, BLOCK>; BLOCK] = seed(&local(&xv, ep), 0);
                let rows = boundary_face_rows(pb, f, &x, t_new);
                for i in 0..BLOCK {
                    r[BLOCK * ep + i] += rows[i].v;
                }
                jac.add_block(ep, ep, &block_of(&rows, 0));
            }
        }
    }
    (r, jac)
}

pub fn jacobian<T: Real>(
    pb: &Problem<T>,
    new: &FlowState<T>,
    old: &FlowState<T>,
    lagged: &LaggedVelocities<T>,
) -> BlockMatrix<T> {
    assemble(pb, new, old, lagged).1
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::mesh::{self, TriMesh};
    use crate::physics::{anisotropic_tensor, ScalarData};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn fluid() -> FluidModel<f64> {
        FluidModel {
            rho_w0: 1000.0,
            rho_l0: 850.0,
            c_w: 1e-10,
            c_l: 1e-6,
            mu_w: 5e-4,
            mu_l: 2e-3,
            s_rw: 0.15,
            s_rl: 0.15,
            clamp_mobility: true,
        }
    }

    pub(crate) fn rock() -> RockModel<f64> {
        RockModel { phi0: 0.15, c_r: 9e-10 }
    }

    /// Small pressure-driven problem on an `n x n` crossed mesh of a 30 m square.
    pub(crate) fn pressure_driven(n: usize, gravity: bool) -> Problem<f64> {
        let mesh = TriMesh::generate_crossed(n, n, 30.0, 30.0)
            .unwrap()
            .classify_boundary(&mesh::pressure_driven_rules())
            .unwrap();
        let ne = mesh.num_elements();
        let space = DgSpace::new(mesh);
        let mut pb = Problem::new(
            space,
            fluid(),
            rock(),
            vec![Tensor2::isotropic(1e-12); ne],
            SchemeParams::new(100.0, 4320.0),
        );
        pb.boundary = vec![
            BoundaryData::dirichlet(3e6, 0.85),
            BoundaryData::dirichlet(1e6, 0.15),
            BoundaryData::no_flow(),
        ];
        if gravity {
            pb.gravity = [0.0, -9.81];
        }
        pb
    }

    pub(crate) fn random_state(pb: &Problem<f64>, seed: u64, time: f64) -> FlowState<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 3 * pb.space.num_elements();
        let p = (0..n).map(|_| rng.gen_range(1e6..3e6)).collect();
        let s = (0..n).map(|_| rng.gen_range(0.2..0.8)).collect();
        FlowState::new(DgField::from_coeffs(p), DgField::from_coeffs(s), 0, time)
    }

    fn uniform(pb: &Problem<f64>, p: f64, s: f64, time: f64) -> FlowState<f64> {
        let ne = pb.space.num_elements();
        FlowState::new(DgField::constant(ne, p), DgField::constant(ne, s), 0, time)
    }

    #[test]
    fn uniform_closed_state_is_steady() {
        let mesh = TriMesh::generate_crossed(3, 3, 30.0, 30.0)
            .unwrap()
            .classify_boundary(&mesh::no_flow_rules())
            .unwrap();
        let ne = mesh.num_elements();
        let pb = Problem::new(
            DgSpace::new(mesh),
            fluid(),
            rock(),
            vec![Tensor2::isotropic(1e-12); ne],
            SchemeParams::new(100.0, 4320.0),
        );
        let old = uniform(&pb, 1e6, 0.4, 0.0);
        let new = uniform(&pb, 1e6, 0.4, 4320.0);
        let lag = lagged_velocities(&pb, &old);
        assert!(lag.v_l.iter().chain(&lag.v_w).all(|&v| v == 0.0));
        let r = residual(&pb, &new, &old, &lag);
        // scale: storage term of one element
        let scale = 0.15 * 1000.0 * 0.4 * pb.space.mesh().area(0) / 4320.0;
        assert!(
            r.iter().all(|v| v.abs() <= 1e-11 * scale),
            "{:e}",
            r.iter().fold(0.0f64, |a, b| a.max(b.abs()))
        );
    }

    #[test]
    fn linear_pressure_velocity() {
        let mesh = TriMesh::generate_crossed(2, 2, 1.0, 1.0)
            .unwrap()
            .classify_boundary(&mesh::no_flow_rules())
            .unwrap();
        let ne = mesh.num_elements();
        let mut f = fluid();
        f.c_w = 0.0;
        let pb = Problem::new(
            DgSpace::new(mesh),
            f,
            rock(),
            vec![Tensor2::isotropic(1e-12); ne],
            SchemeParams::new(100.0, 1.0),
        );
        let p = DgField::interpolate(pb.space.mesh(), |x| -x[0]);
        let old = FlowState::new(p, DgField::constant(ne, 0.5), 0, 0.0);
        let lag = lagged_velocities(&pb, &old);
        for (fi, face) in pb.space.mesh().faces().iter().enumerate() {
            let expect = 1000.0 * 1e-12 * face.normal[0];
            assert!(
                (lag.v_w[fi] - expect).abs() < 1e-12 * 1e-9,
                "{} vs {}",
                lag.v_w[fi],
                expect
            );
        }
    }

    #[test]
    fn hydrostatic_state_has_no_wetting_velocity() {
        let mut pb = pressure_driven(3, true);
        pb.fluid.c_w = 0.0;
        // grad p = rho_w g with g = (0, -9.81)
        let p = DgField::interpolate(pb.space.mesh(), |x| 2e6 - 1000.0 * 9.81 * x[1]);
        let old = FlowState::new(p, DgField::constant(pb.space.num_elements(), 0.3), 0, 0.0);
        let lag = lagged_velocities(&pb, &old);
        let scale = 1000.0 * 1e-12 * 1000.0 * 9.81;
        assert!(lag.v_w.iter().all(|v| v.abs() <= 1e-12 * scale));
    }

    #[test]
    fn upwind_trace_examples() {
        let pb = pressure_driven(2, false);
        let space = &pb.space;
        let (f, face) = space.mesh().interior_faces().next().unwrap();
        let mut c = vec![0.0; 3 * space.num_elements()];
        for v in &mut c[3 * face.plus_elem..3 * face.plus_elem + 3] {
            *v = 2.0;
        }
        let fld = DgField::from_coeffs(c);
        assert!(upwind_trace(space, &fld, f, 1.0).unwrap().iter().all(|&v| v == 2.0));
        assert!(upwind_trace(space, &fld, f, 0.0).unwrap().iter().all(|&v| v == 0.0));
        let cont = DgField::constant(space.num_elements(), 0.7);
        assert_eq!(
            upwind_trace(space, &cont, f, 1.0).unwrap(),
            upwind_trace(space, &cont, f, -1.0).unwrap()
        );
        let (bf, _) = space.mesh().boundary_faces().next().unwrap();
        assert!(upwind_trace(space, &fld, bf, 1.0).is_err());
    }

    fn fd_check(pb: &Problem<f64>, seed: u64) {
        let old = random_state(pb, seed, 0.0);
        let new = random_state(pb, seed + 1, pb.scheme.tau);
        let lag = lagged_velocities(pb, &old);
        let (r0, jac) = assemble(pb, &new, &old, &lag);
        assert_eq!(r0, residual(pb, &new, &old, &lag));
        let x = new.to_vector();
        let n = x.len();
        let mut worst = 0.0f64;
        for j in 0..n {
            // residual entries reach 1e8, so saturation steps must be large
            // enough to beat cancellation; the fourth-order stencil keeps the
            // truncation error small
            let delta = if j % 6 < 3 { 1e-4 * x[j].abs().max(1.0) } else { 1e-3 };
            let eval = |h: f64| {
                let mut xh = x.clone();
                xh[j] += h;
                residual_vec(pb, &xh, &old, &lag, new.time)
            };
            let (r1, r2, rm1, rm2) = (eval(delta), eval(2.0 * delta), eval(-delta), eval(-2.0 * delta));
            let col_fd: Vec<f64> = (0..n)
                .map(|i| (8.0 * (r1[i] - rm1[i]) - (r2[i] - rm2[i])) / (12.0 * delta))
                .collect();
            let col: Vec<f64> = (0..n).map(|i| jac.get(i, j)).collect();
            let scale = col_fd.iter().fold(0.0f64, |a, b| a.max(b.abs()));
            if scale == 0.0 {
                continue;
            }
            let err = col.iter().zip(&col_fd).fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
            worst = worst.max(err / scale);
        }
        assert!(worst < 1e-5, "max relative column error {worst:e}");
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        fd_check(&pressure_driven(2, false), 11);
    }

    #[test]
    fn jacobian_matches_finite_differences_with_gravity_and_tensor() {
        let mut pb = pressure_driven(2, true);
        let k = anisotropic_tensor(2.25e-12, 2.25e-14, 0.6).unwrap();
        for (e, t) in pb.permeability.iter_mut().enumerate() {
            *t = if e % 2 == 0 { k } else { Tensor2::isotropic(1e-13) };
        }
        fd_check(&pb, 23);
    }

    #[test]
    fn jacobian_matches_finite_differences_with_wells_and_neumann_data() {
        let mesh = TriMesh::generate_crossed(2, 2, 20.0, 20.0)
            .unwrap()
            .classify_boundary(&mesh::no_flow_rules())
            .unwrap();
        let ne = mesh.num_elements();
        let mut pb = Problem::new(
            DgSpace::new(mesh),
            fluid(),
            rock(),
            vec![Tensor2::isotropic(1e-12); ne],
            SchemeParams::new(100.0, 4320.0),
        );
        pb.wells.s_in = 0.85;
        pb.wells.injection[0] = 1e-5;
        pb.wells.production[ne - 1] = 1e-5;
        pb.boundary[0].j_s = ScalarData::Constant(1e-4);
        pb.boundary[0].j_p = ScalarData::Constant(-2e-4);
        fd_check(&pb, 5);
    }

    #[test]
    fn single_element_storage_block() {
        let mesh = TriMesh::from_parts(vec![[0.0, 0.0], [2.0, 0.0], [0.0, 1.0]], vec![[0, 1, 2]])
            .unwrap()
            .classify_boundary(&mesh::no_flow_rules())
            .unwrap();
        let mut f = fluid();
        f.c_l = 0.0;
        f.c_w = 0.0;
        let mut r = rock();
        r.c_r = 0.0;
        let tau = 10.0;
        // negligible permeability isolates the time terms
        let pb = Problem::new(
            DgSpace::new(mesh),
            f,
            r,
            vec![Tensor2::isotropic(1e-30)],
            SchemeParams::new(1.0, tau),
        );
        let old = uniform(&pb, 1e6, 0.5, 0.0);
        let new = uniform(&pb, 1e6, 0.5, tau);
        let lag = lagged_velocities(&pb, &old);
        let jac = jacobian(&pb, &new, &old, &lag);
        let area = 1.0;
        let c = 0.15 / tau;
        for i in 0..3 {
            for j in 0..3 {
                let mass = area / 12.0 * if i == j { 2.0 } else { 1.0 };
                assert!((jac.get(3 + i, 3 + j) - c * 1000.0 * mass).abs() < 1e-9);
                assert!((jac.get(i, 3 + j) + c * 850.0 * mass).abs() < 1e-9);
                // incompressible: pressure does not enter the storage terms
                assert!(jac.get(i, j).abs() < 1e-20);
                assert!(jac.get(3 + i, j).abs() < 1e-20);
            }
        }
    }

    #[test]
    fn stencil_is_local() {
        let pb = pressure_driven(3, false);
        let old = random_state(&pb, 3, 0.0);
        let new = random_state(&pb, 4, pb.scheme.tau);
        let lag = lagged_velocities(&pb, &old);
        let r0 = residual(&pb, &new, &old, &lag);
        let e = 7;
        let mut pert = new.clone();
        pert.saturation.coeffs_mut()[3 * e + 1] += 1e-6;
        let r1 = residual(&pb, &pert, &old, &lag);
        let mesh = pb.space.mesh();
        let allowed: Vec<usize> = std::iter::once(e)
            .chain((0..3).filter_map(|k| mesh.neighbor(e, k)))
            .collect();
        for (i, (a, b)) in r0.iter().zip(&r1).enumerate() {
            if a != b {
                assert!(allowed.contains(&(i / BLOCK)), "row {i} changed");
            }
        }
    }

    #[test]
    fn face_rows_are_conservative() {
        let pb = pressure_driven(2, true);
        let old = random_state(&pb, 8, 0.0);
        let new = random_state(&pb, 9, pb.scheme.tau);
        let lag = lagged_velocities(&pb, &old);
        let xv = new.to_vector();
        for (f, face) in pb.space.mesh().interior_faces() {
            let em = face.minus_elem().unwrap();
            let rows = interior_face_rows(&pb, f, &local(&xv, face.plus_elem), &local(&xv, em), &old, &lag);
            for off in [0, 3] {
                let a: f64 = rows.plus[off..off + 3].iter().sum();
                let b: f64 = rows.minus[off..off + 3].iter().sum();
                assert!((a + b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1e-30));
            }
        }
    }

    #[test]
    fn residual_is_independent_of_element_labels() {
        // reverse the triangle order: plus/minus roles and assembly order change
        let base = TriMesh::<f64>::generate_crossed(2, 2, 30.0, 30.0).unwrap();
        let tris: Vec<[usize; 3]> = base.triangles().iter().rev().copied().collect();
        let rev = TriMesh::from_parts(base.vertices().to_vec(), tris)
            .unwrap()
            .classify_boundary(&mesh::pressure_driven_rules())
            .unwrap();
        let pb = pressure_driven(2, true);
        let ne = pb.space.num_elements();
        let mut pb2 = Problem::new(DgSpace::new(rev), pb.fluid, pb.rock, pb.permeability.clone(), pb.scheme);
        pb2.boundary = pb.boundary.clone();
        pb2.gravity = pb.gravity;
        let old = random_state(&pb, 1, 0.0);
        let new = random_state(&pb, 2, pb.scheme.tau);
        let permute = |st: &FlowState<f64>| {
            let mut p = Vec::new();
            let mut s = Vec::new();
            for e in (0..ne).rev() {
                p.extend_from_slice(&st.pressure.elem(e));
                s.extend_from_slice(&st.saturation.elem(e));
            }
            FlowState::new(DgField::from_coeffs(p), DgField::from_coeffs(s), st.step, st.time)
        };
        let r1 = residual(&pb, &new, &old, &lagged_velocities(&pb, &old));
        let (old2, new2) = (permute(&old), permute(&new));
        let r2 = residual(&pb2, &new2, &old2, &lagged_velocities(&pb2, &old2));
        let scale = r1.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        for e in 0..ne {
            for i in 0..BLOCK {
                let a = r1[BLOCK * e + i];
                let b = r2[BLOCK * (ne - 1 - e) + i];
                assert!((a - b).abs() <= 1e-12 * scale, "elem {e} row {i}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn f32_residual_runs() {
        let mesh = TriMesh::<f32>::generate_crossed(2, 2, 1.0, 1.0)
            .unwrap()
            .classify_boundary(&mesh::all_dirichlet_rules())
            .unwrap();
        let ne = mesh.num_elements();
        let f = FluidModel {
            rho_w0: 1.0f32,
            rho_l0: 1.0,
            c_w: 0.0,
            c_l: 0.0,
            mu_w: 1.0,
            mu_l: 1.0,
            s_rw: 0.0,
            s_rl: 0.0,
            clamp_mobility: true,
        };
        let mut pb = Problem::new(
            DgSpace::new(mesh),
            f,
            RockModel { phi0: 0.5, c_r: 0.0 },
            vec![Tensor2::isotropic(1.0); ne],
            SchemeParams::new(10.0, 0.1),
        );
        pb.boundary = vec![BoundaryData::dirichlet(1.0, 0.5)];
        let st = FlowState::new(DgField::constant(ne, 1.0f32), DgField::constant(ne, 0.5), 0, 0.1);
        let lag = lagged_velocities(&pb, &st);
        let r = residual(&pb, &st, &st, &lag);
        assert!(r.iter().all(|v| v.abs() < 1e-5));
    }
}
