//! Manufactured-solution problem on the unit square and the h-convergence
//! study built on it.
//!
//! Forcing terms are the exact fields substituted into both mass balances,
//! differentiated by hand. With zero residual saturations and unclamped
//! mobilities the Brooks-Corey laws stay smooth where the exact saturation
//! leaves `[0, 1]`.

use std::sync::Arc;

use crate::assembly::{FlowState, Problem, SchemeParams};
use crate::dg::DgSpace;
use crate::diagnostics::{convergence_rows, l2_error, ConvergenceRow};
use crate::error::{Error, Result};
use crate::limiters::LimiterBounds;
use crate::mesh::{all_dirichlet_rules, TriMesh};
use crate::physics::{BoundaryData, Dual, FluidModel, RockModel, ScalarData, Tensor2};
use crate::scalar::{Real, Vec2};
use crate::solver::{LimiterMode, Simulation, TimeLoopConfig};

/// Value and the partial derivatives the forcing needs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Derivs<T> {
    pub v: T,
    pub t: T,
    pub x: T,
    pub y: T,
    pub xx: T,
    pub yy: T,
}

/// A smooth pair of exact fields `(s, p)`.
pub trait Manufactured<T: Real>: Send + Sync {
    fn s(&self, x: Vec2<T>, t: T) -> Derivs<T>;
    fn p(&self, x: Vec2<T>, t: T) -> Derivs<T>;
}

/// `s = 0.4 + 0.4xy + cos(t + x)`,
/// `p = 2 + x^2 y - y^2 + x^2 sin(y + t) - cos(t)/3 + cos(t + 1)/3 - 11/6`.
#[derive(Clone, Copy, Debug, Default)]
pub struct UnitSquareSolution;

impl<T: Real> Manufactured<T> for UnitSquareSolution {
    fn s(&self, [x, y]: Vec2<T>, t: T) -> Derivs<T> {
        let c = T::lit(0.4);
        let (sn, cs) = (t + x).sin_cos();
        Derivs {
            v: c + c * x * y + cs,
            t: -sn,
            x: c * y - sn,
            y: c * x,
            xx: -cs,
            yy: T::zero(),
        }
    }

    fn p(&self, [x, y]: Vec2<T>, t: T) -> Derivs<T> {
        let third = T::one() / T::lit(3.0);
        let two = T::lit(2.0);
        let (sn, cs) = (y + t).sin_cos();
        let x2 = x * x;
        Derivs {
            v: two + x2 * y - y * y + x2 * sn - third * t.cos() + third * (t + T::one()).cos() - T::lit(11.0 / 6.0),
            t: x2 * cs + third * t.sin() - third * (t + T::one()).sin(),
            x: two * x * y + two * x * sn,
            y: x2 - two * y + x2 * cs,
            xx: two * y + two * sn,
            yy: -two - x2 * sn,
        }
    }
}

/// Constant fields; their forcing vanishes.
#[derive(Clone, Copy, Debug)]
pub struct ConstantSolution<T> {
    pub s: T,
    pub p: T,
}

impl<T: Real> Manufactured<T> for ConstantSolution<T> {
    fn s(&self, _: Vec2<T>, _: T) -> Derivs<T> {
        constant(self.s)
    }

    fn p(&self, _: Vec2<T>, _: T) -> Derivs<T> {
        constant(self.p)
    }
}

fn constant<T: Real>(v: T) -> Derivs<T> {
    let z = T::zero();
    Derivs {
        v,
        t: z,
        x: z,
        y: z,
        xx: z,
        yy: z,
    }
}

/// `[F_l, F_w]` such that the exact fields solve both mass balances with
/// `K = I` and no gravity:
/// `F_a = d_t(phi rho_a s_a) - div(rho_a lambda_a grad p)`.
pub fn forcing<T: Real, M: Manufactured<T> + ?Sized>(
    m: &M,
    fluid: &FluidModel<T>,
    rock: &RockModel<T>,
    x: Vec2<T>,
    t: T,
) -> [T; 2] {
    let s = m.s(x, t);
    let p = m.p(x, t);
    let phi = rock.porosity(p.v);
    let (lw, ll) = fluid.mobilities_dual(s.v);
    let gp2 = p.x * p.x + p.y * p.y;
    let gsp = s.x * p.x + s.y * p.y;
    let lap = p.xx + p.yy;
    let phase = |rho: Dual<T>, lam: Dual<T>, sat: T, sat_t: T| {
        let store = (phi.d * rho.v + phi.v * rho.d) * p.t * sat + phi.v * rho.v * sat_t;
        // div(rho(p) lam(s) grad p), with grad lam = lam' grad s for the phase saturation derivative.
        let flux = rho.d * lam.v * gp2 + rho.v * lam.d * gsp + rho.v * lam.v * lap;
        store - flux
    };
    let f_w = phase(fluid.rho_w(p.v), lw, s.v, s.t);
    let f_l = phase(fluid.rho_l(p.v), ll, T::one() - s.v, -s.t);
    [f_l, f_w]
}

/// Parameters of the manufactured problem: unit porosity and permeability,
/// nearly incompressible unit-density phases of unit viscosity.
pub fn fluid<T: Real>() -> FluidModel<T> {
    FluidModel {
        rho_w0: T::one(),
        rho_l0: T::one(),
        c_w: T::lit(1e-10),
        c_l: T::lit(1e-10),
        mu_w: T::one(),
        mu_l: T::one(),
        s_rw: T::zero(),
        s_rl: T::zero(),
        clamp_mobility: false,
    }
}

pub fn rock<T: Real>() -> RockModel<T> {
    RockModel {
        phi0: T::one(),
        c_r: T::lit(1e-10),
    }
}

/// Side of the square sample grid used for the time-varying bounds.
pub const BOUNDS_SAMPLES: usize = 65;

/// `[min s, max s]` of the exact saturation over a uniform sample grid at `t`.
pub fn exact_bounds<T: Real, M: Manufactured<T> + ?Sized>(m: &M, t: T) -> LimiterBounds<T> {
    let n = BOUNDS_SAMPLES - 1;
    let (mut lo, mut hi) = (T::infinity(), T::neg_infinity());
    for i in 0..=n {
        for j in 0..=n {
            let x = [T::of(i) / T::of(n), T::of(j) / T::of(n)];
            let v = m.s(x, t).v;
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    LimiterBounds { lo, hi }
}

/// Problem, initial state and time loop on an `n x n` crossed mesh of the
/// unit square with `tau = h^2` up to `t_final`.
pub fn setup<T: Real>(
    n: usize,
    t_final: T,
    limiter: LimiterMode,
) -> Result<(Problem<T>, FlowState<T>, TimeLoopConfig<T>)> {
    let sol: Arc<dyn Manufactured<T>> = Arc::new(UnitSquareSolution);
    let mesh = TriMesh::generate_crossed(n, n, T::one(), T::one())?.classify_boundary(&all_dirichlet_rules())?;
    let ne = mesh.num_elements();
    let h = T::one() / T::of(n);
    let space = DgSpace::new(mesh);
    let (fl, rk) = (fluid::<T>(), rock::<T>());
    let mut pb = Problem::new(
        space,
        fl,
        rk,
        vec![Tensor2::isotropic(T::one()); ne],
        SchemeParams::new(T::lit(100.0), h * h),
    );
    let (gs, gp) = (sol.clone(), sol.clone());
    pb.boundary = vec![BoundaryData {
        g_p: ScalarData::Function(Arc::new(move |x, t| gp.p(x, t).v)),
        g_s: ScalarData::Function(Arc::new(move |x, t| gs.s(x, t).v)),
        ..BoundaryData::no_flow()
    }];
    let f = sol.clone();
    pb.body_force = Some(Arc::new(move |x, t| forcing(f.as_ref(), &fl, &rk, x, t)));
    let initial = FlowState::new(
        pb.space.l2_project(|x| sol.p(x, T::zero()).v),
        pb.space.l2_project(|x| sol.s(x, T::zero()).v),
        0,
        T::zero(),
    );
    let mut cfg = TimeLoopConfig::new(t_final, limiter);
    let b = sol.clone();
    cfg.bounds = Some(Arc::new(move |t| exact_bounds(b.as_ref(), t)));
    Ok((pb, initial, cfg))
}

/// Runs one level and returns the final state and its L2 errors `(s, p)`.
pub fn solve_level(n: usize, t_final: f64, limiter: LimiterMode) -> Result<(FlowState<f64>, f64, f64)> {
    let (pb, initial, cfg) = setup::<f64>(n, t_final, limiter)?;
    let mut sim = Simulation::new(&pb, initial, cfg)?;
    while sim.step()?.is_some() {}
    let st = sim.state().clone();
    let sol = UnitSquareSolution;
    let t = st.time;
    let es = l2_error(&pb.space, &st.saturation, |x| Manufactured::<f64>::s(&sol, x, t).v);
    let ep = l2_error(&pb.space, &st.pressure, |x| Manufactured::<f64>::p(&sol, x, t).v);
    Ok((st, es, ep))
}

/// Saturation and pressure error tables of one limiter mode.
#[derive(Debug)]
pub struct Study {
    pub limiter: LimiterMode,
    pub saturation: Vec<ConvergenceRow>,
    pub pressure: Vec<ConvergenceRow>,
    /// Set when a level failed; the rows hold the levels before it.
    pub failure: Option<Error>,
}

/// h-convergence on `n = 2, 4, ..., 2^levels` cells per side at `t_final`.
pub fn convergence_study(levels: usize, limiter: LimiterMode, t_final: f64) -> Study {
    let mut s_lv = Vec::new();
    let mut p_lv = Vec::new();
    let mut failure = None;
    for l in 1..=levels {
        let n = 1usize << l;
        let h = 1.0 / n as f64;
        let dofs = 12 * n * n;
        match solve_level(n, t_final, limiter) {
            Ok((_, es, ep)) => {
                s_lv.push((h, dofs, es));
                p_lv.push((h, dofs, ep));
            }
            Err(e) => {
                failure = Some(e);
                break;
            }
        }
    }
    Study {
        limiter,
        saturation: convergence_rows(&s_lv),
        pressure: convergence_rows(&p_lv),
        failure,
    }
}
