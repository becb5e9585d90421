//! Post-processing: L2 errors and rates, bound violations, local mass balance,
//! wetting velocity and iteration statistics, plus CSV and text tables.

use serde::Serialize;

use crate::assembly::{FlowState, LaggedVelocities, Problem};
use crate::dg::{DgField, DgSpace};
use crate::error::{Error, Result};
use crate::limiters::{flux_function, FluxTable, LimiterBounds};
use crate::scalar::{Real, Vec2};
use crate::solver::StepRecord;

/// `||f - exact||_{L2}` with the degree-6 element rule.
pub fn l2_error<T: Real, G: Fn(Vec2<T>) -> T>(space: &DgSpace<T>, f: &DgField<T>, exact: G) -> T {
    space
        .integrate_elementwise(f, |x, v| {
            let d = v - exact(x);
            d * d
        })
        .into_iter()
        .sum::<T>()
        .sqrt()
}

/// Extremes of the saturation and their excursions beyond the admissible
/// range, in percent of that range.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ViolationStats {
    #[serde(rename = "min_S")]
    pub min_s: f64,
    #[serde(rename = "max_S")]
    pub max_s: f64,
    pub undershoot_pct: f64,
    pub overshoot_pct: f64,
}

impl ViolationStats {
    pub fn from_extremes(min_s: f64, max_s: f64, bounds: LimiterBounds<f64>) -> Self {
        let range = bounds.hi - bounds.lo;
        Self {
            min_s,
            max_s,
            undershoot_pct: (bounds.lo - min_s).max(0.0) / range * 100.0,
            overshoot_pct: (max_s - bounds.hi).max(0.0) / range * 100.0,
        }
    }

    /// Widens the extremes by another field (e.g. a later time step).
    pub fn accumulate<T: Real>(&mut self, s: &DgField<T>, bounds: LimiterBounds<f64>) {
        *self = Self::from_extremes(
            self.min_s.min(s.min().as_f64()),
            self.max_s.max(s.max().as_f64()),
            bounds,
        );
    }

    pub fn is_clean(&self) -> bool {
        self.undershoot_pct == 0.0 && self.overshoot_pct == 0.0
    }
}

/// Violation statistics over all nodal values of `s`.
pub fn violation_stats<T: Real>(s: &DgField<T>, bounds: LimiterBounds<f64>) -> ViolationStats {
    ViolationStats::from_extremes(s.min().as_f64(), s.max().as_f64(), bounds)
}

/// Local mass-balance error `B(E)` of the wetting phase per element:
/// storage change, plus net face flux `H` over `|E|`, minus well and body-force
/// sources. `flux` must be evaluated on `new` with the lagged data of `old`.
pub fn mass_balance_with_flux<T: Real>(
    pb: &Problem<T>,
    new: &FlowState<T>,
    old: &FlowState<T>,
    flux: &FluxTable<T>,
) -> Vec<T> {
    let space = &pb.space;
    let mesh = space.mesh();
    let rule = space.elem_rule();
    let inv_tau = T::one() / pb.scheme.tau;
    let net = flux.net();
    (0..mesh.num_elements())
        .map(|e| {
            let area = mesh.area(e);
            let (p, s) = (new.pressure.elem(e), new.saturation.elem(e));
            let (pn, sn) = (old.pressure.elem(e), old.saturation.elem(e));
            let lin = |c: &[T; 3], b: &[T; 3]| c[0] * b[0] + c[1] * b[1] + c[2] * b[2];
            let mut vol = T::zero();
            for (b, &w) in rule.points.iter().zip(&rule.weights) {
                let (pq, sq) = (lin(&p, b), lin(&s, b));
                let (pnq, snq) = (lin(&pn, b), lin(&sn, b));
                let store_new = pb.rock.porosity(pq).v * pb.fluid.rho_w(pq).v * sq;
                let rwn = pb.fluid.rho_w(pnq).v;
                let store_old = pb.rock.porosity(pnq).v * rwn * snq;
                let (qw, _) = pb.wells.rates(snq, e, &pb.fluid);
                let fw = match &pb.body_force {
                    Some(f) => f(space.map_point(e, b), new.time)[1],
                    None => T::zero(),
                };
                // The rule integrates over the reference triangle with unit total weight.
                vol += w * ((store_new - store_old) * inv_tau - rwn * qw - fw);
            }
            vol + net[e] / area
        })
        .collect()
}

/// [`mass_balance_with_flux`] with `H` evaluated on `new`.
pub fn mass_balance<T: Real>(
    pb: &Problem<T>,
    new: &FlowState<T>,
    old: &FlowState<T>,
    lagged: &LaggedVelocities<T>,
) -> Vec<T> {
    let flux = flux_function(pb, new, old, lagged);
    mass_balance_with_flux(pb, new, old, &flux)
}

/// `u_w = -lambda_w(S) K (grad P - rho_l(P) g)` per element, with the constant
/// gradient of the P1 pressure and `S`, `P` at the element mean.
pub fn wetting_velocity<T: Real>(pb: &Problem<T>, state: &FlowState<T>) -> Vec<Vec2<T>> {
    let space = &pb.space;
    let smean = state.saturation.cell_means();
    let pmean = state.pressure.cell_means();
    (0..space.num_elements())
        .map(|e| {
            let gp = state.pressure.gradient(e, space.grads(e));
            let rho = pb.fluid.rho_l(pmean[e]).v;
            let lw = pb.fluid.lambda_w(smean[e]).v;
            let d = [gp[0] - rho * pb.gravity[0], gp[1] - rho * pb.gravity[1]];
            let kd = pb.permeability[e].apply(d);
            [-lw * kd[0], -lw * kd[1]]
        })
        .collect()
}

pub fn magnitudes<T: Real>(v: &[Vec2<T>]) -> Vec<T> {
    v.iter().map(|u| (u[0] * u[0] + u[1] * u[1]).sqrt()).collect()
}

/// One refinement level of a convergence study.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub h: f64,
    pub dofs: usize,
    pub error_l2: f64,
    /// `log2(e_{2h} / e_h)` against the previous row; absent on the first.
    pub rate: Option<f64>,
}

/// Rows from `(h, dofs, error)` triples ordered coarse to fine.
pub fn convergence_rows(levels: &[(f64, usize, f64)]) -> Vec<ConvergenceRow> {
    let mut rows: Vec<ConvergenceRow> = Vec::with_capacity(levels.len());
    for &(h, dofs, error_l2) in levels {
        let rate = rows
            .last()
            .map(|prev| (prev.error_l2 / error_l2).ln() / (prev.h / h).ln());
        rows.push(ConvergenceRow {
            h,
            dofs,
            error_l2,
            rate,
        });
    }
    rows
}

/// Newton and flux-limiter iteration counts of a run.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct IterationStats {
    pub steps: usize,
    pub newton_min: usize,
    pub newton_max: usize,
    pub newton_mean: f64,
    pub fl_max: Option<usize>,
    /// Share of steps with at most 5 limiter iterations.
    pub fl_share_le5: Option<f64>,
}

impl IterationStats {
    pub fn from_records(records: &[StepRecord]) -> Self {
        if records.is_empty() {
            return Self::default();
        }
        let newton: Vec<usize> = records.iter().map(|r| r.newton_iters).collect();
        let fl: Vec<usize> = records.iter().filter_map(|r| r.fl_iters).collect();
        let n = records.len();
        Self {
            steps: n,
            newton_min: *newton.iter().min().unwrap(),
            newton_max: *newton.iter().max().unwrap(),
            newton_mean: newton.iter().sum::<usize>() as f64 / n as f64,
            fl_max: fl.iter().copied().max(),
            fl_share_le5: (!fl.is_empty()).then(|| fl.iter().filter(|&&k| k <= 5).count() as f64 / fl.len() as f64),
        }
    }
}

/// Share of common steps whose Newton counts differ by at most `tol`.
pub fn newton_agreement(a: &[StepRecord], b: &[StepRecord], tol: usize) -> f64 {
    let n = a.len().min(b.len());
    if n == 0 {
        return 0.0;
    }
    let ok = a
        .iter()
        .zip(b)
        .filter(|(x, y)| x.newton_iters.abs_diff(y.newton_iters) <= tol)
        .count();
    ok as f64 / n as f64
}

/// A rectangular table of preformatted cells.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(headers: impl IntoIterator<Item = S>) -> Self {
        Self {
            headers: headers.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        assert_eq!(row.len(), self.headers.len(), "row width differs from header");
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let to_err = |e: csv::Error| Error::Config(format!("csv: {e}"));
        w.write_record(&self.headers).map_err(to_err)?;
        for r in &self.rows {
            w.write_record(r).map_err(to_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Config(format!("csv: {e}")))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    /// Right-aligned columns separated by two spaces.
    pub fn to_text(&self) -> String {
        let mut width: Vec<usize> = self.headers.iter().map(|h| h.len()).collect();
        for r in &self.rows {
            for (w, c) in width.iter_mut().zip(r) {
                *w = (*w).max(c.len());
            }
        }
        let line = |cells: &[String]| {
            let parts: Vec<String> = cells.iter().zip(&width).map(|(c, &w)| format!("{c:>w$}")).collect();
            parts.join("  ")
        };
        let mut out = line(&self.headers);
        out.push('\n');
        out.push_str(&"-".repeat(out.len() - 1));
        out.push('\n');
        for r in &self.rows {
            out.push_str(&line(r));
            out.push('\n');
        }
        out
    }
}

/// Side-by-side convergence table: one `(error, rate)` column pair per study,
/// all studies over the same levels.
pub fn convergence_table(studies: &[(&str, &[ConvergenceRow])]) -> Table {
    let mut headers = vec!["h".to_string(), "dofs".to_string()];
    for (name, _) in studies {
        headers.push(format!("{name}_error"));
        headers.push(format!("{name}_rate"));
    }
    let mut t = Table::new(headers);
    let n = studies.iter().map(|(_, r)| r.len()).min().unwrap_or(0);
    for i in 0..n {
        let first = studies[0].1[i];
        let mut row = vec![format!("1/{}", (1.0 / first.h).round()), first.dofs.to_string()];
        for (_, rows) in studies {
            row.push(format!("{:.2e}", rows[i].error_l2));
            row.push(rows[i].rate.map_or("-".to_string(), |r| format!("{r:.2}")));
        }
        t.push(row);
    }
    t
}

/// Minimum and maximum saturation with violation percentages per scheme.
pub fn violation_table(entries: &[(&str, ViolationStats)]) -> Table {
    let mut t = Table::new(["scheme", "min_S", "undershoot_pct", "max_S", "overshoot_pct"]);
    for (name, v) in entries {
        t.push(vec![
            name.to_string(),
            format!("{:.2}", v.min_s),
            format!("{:.0}", v.undershoot_pct),
            format!("{:.2}", v.max_s),
            format!("{:.0}", v.overshoot_pct),
        ]);
    }
    t
}

/// Per-step iteration counts; `fl` is blank where the limiter did not run.
pub fn iteration_table(records: &[StepRecord]) -> Table {
    let mut t = Table::new(["step", "time_days", "newton_iters", "fl_iters", "min_S", "max_S"]);
    for r in records {
        t.push(vec![
            r.step.to_string(),
            format!("{:.4}", r.time / 86400.0),
            r.newton_iters.to_string(),
            r.fl_iters.map_or(String::new(), |k| k.to_string()),
            format!("{:.10}", r.min_s),
            format!("{:.10}", r.max_s),
        ]);
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::tests::{fluid, pressure_driven, random_state, rock};
    use crate::assembly::{lagged_velocities, residual, SchemeParams};
    use crate::mesh::{self, TriMesh};
    use crate::physics::{Rect, Tensor2, WellBox, WellModel};
    use approx::assert_relative_eq;

    const B: LimiterBounds<f64> = LimiterBounds { lo: 0.15, hi: 0.85 };

    #[test]
    fn violation_percentages_match_published_pairs() {
        // (value, printed percent, printed decimals) from the limiter comparison tables.
        let under = [
            (-137.97, 19731.0, 0),
            (0.033, 16.7, 1),
            (-1.39, 220.0, 0),
            (-0.1137, 37.7, 1),
        ];
        let over = [(38.16, 5330.0, 0), (10.51, 1380.0, 0), (0.86, 1.4, 1)];
        let printed = |x: f64, d: i32| (x * 10f64.powi(d)).round() / 10f64.powi(d);
        for (v, pct, d) in under {
            let s = ViolationStats::from_extremes(v, 0.5, B);
            assert_eq!(printed(s.undershoot_pct, d), pct, "{v}");
            assert_eq!(s.overshoot_pct, 0.0);
        }
        for (v, pct, d) in over {
            let s = ViolationStats::from_extremes(0.5, v, B);
            assert_eq!(printed(s.overshoot_pct, d), pct, "{v}");
        }
        let clean = ViolationStats::from_extremes(0.15, 0.85, B);
        assert!(clean.is_clean());
    }

    #[test]
    fn accumulate_widens() {
        let mut v = violation_stats(&DgField::constant(2, 0.5), B);
        v.accumulate(&DgField::from_coeffs(vec![0.1, 0.5, 0.9, 0.5, 0.5, 0.5]), B);
        assert_eq!((v.min_s, v.max_s), (0.1, 0.9));
        assert_relative_eq!(v.undershoot_pct, 0.05 / 0.7 * 100.0, epsilon = 1e-12);
        assert_relative_eq!(v.overshoot_pct, 0.05 / 0.7 * 100.0, epsilon = 1e-12);
    }

    fn with_wells(mut pb: Problem<f64>) -> Problem<f64> {
        let inj = WellBox {
            region: Rect::new(0.0, 8.0, 0.0, 8.0),
            total_rate: 1e-3,
        };
        let prod = WellBox {
            region: Rect::new(22.0, 30.0, 22.0, 30.0),
            total_rate: 1e-3,
        };
        pb.wells = WellModel::from_boxes(pb.space.mesh(), 0.85, &[inj], &[prod]).unwrap();
        pb
    }

    #[test]
    fn balance_equals_indicator_tested_residual() {
        for pb in [pressure_driven(3, false), with_wells(pressure_driven(3, true))] {
            let old = random_state(&pb, 3, 0.0);
            let mut new = random_state(&pb, 4, pb.scheme.tau);
            new.step = 1;
            let lag = lagged_velocities(&pb, &old);
            let b = mass_balance(&pb, &new, &old, &lag);
            let r = residual(&pb, &new, &old, &lag);
            for (e, be) in b.iter().enumerate() {
                let rows = r[6 * e + 3] + r[6 * e + 4] + r[6 * e + 5];
                let expect = rows / pb.space.mesh().area(e);
                assert!(
                    (be - expect).abs() <= 1e-10 * (1.0 + expect.abs()),
                    "{e}: {be} vs {expect}"
                );
            }
        }
    }

    fn closed_problem(n: usize) -> Problem<f64> {
        let mesh = TriMesh::generate_crossed(n, n, 30.0, 30.0)
            .unwrap()
            .classify_boundary(&mesh::no_flow_rules())
            .unwrap();
        let ne = mesh.num_elements();
        Problem::new(
            DgSpace::new(mesh),
            fluid(),
            rock(),
            vec![Tensor2::isotropic(1e-12); ne],
            SchemeParams::new(100.0, 4320.0),
        )
    }

    #[test]
    fn steady_closed_system_is_balanced() {
        let pb = closed_problem(3);
        let ne = pb.space.num_elements();
        let st = FlowState::new(DgField::constant(ne, 2e6), DgField::constant(ne, 0.4), 0, 0.0);
        let lag = lagged_velocities(&pb, &st);
        let b = mass_balance(&pb, &st, &st, &lag);
        assert!(b.iter().all(|v| v.abs() <= 1e-12), "{b:?}");
    }

    #[test]
    fn closed_system_telescopes() {
        // sum |E| B(E) reduces to the global storage change because H is antisymmetric.
        let pb = closed_problem(4);
        let old = random_state(&pb, 7, 0.0);
        let new = random_state(&pb, 8, pb.scheme.tau);
        let lag = lagged_velocities(&pb, &old);
        let flux = flux_function(&pb, &new, &old, &lag);
        let b = mass_balance_with_flux(&pb, &new, &old, &flux);
        let zero = FluxTable::from_values(vec![[0.0; 3]; pb.space.num_elements()]);
        let storage = mass_balance_with_flux(&pb, &new, &old, &zero);
        let mesh = pb.space.mesh();
        let total: f64 = (0..b.len()).map(|e| mesh.area(e) * b[e]).sum();
        let stored: f64 = (0..b.len()).map(|e| mesh.area(e) * storage[e]).sum();
        let mass: f64 = (0..b.len()).map(|e| mesh.area(e) * storage[e].abs()).sum::<f64>() * pb.scheme.tau;
        assert!(
            (total - stored).abs() * pb.scheme.tau <= 1e-8 * mass,
            "{total} vs {stored}"
        );
    }

    #[test]
    fn velocity_of_linear_pressure() {
        let mut pb = closed_problem(2);
        let k = 1e-12;
        let fl = pb.fluid;
        // Saturation where lambda_w = 500 for the default viscosity.
        let s_e = (500.0 * fl.mu_w).powf(0.5);
        let s = fl.s_rw + s_e * (1.0 - fl.s_rw - fl.s_rl);
        assert_relative_eq!(fl.lambda_w(s).v, 500.0, epsilon = 1e-9);
        let ne = pb.space.num_elements();
        let p = DgField::interpolate(pb.space.mesh(), |x| 2e6 - x[0]);
        let st = FlowState::new(p.clone(), DgField::constant(ne, s), 0, 0.0);
        for u in wetting_velocity(&pb, &st) {
            assert_relative_eq!(u[0], 500.0 * k, epsilon = 1e-20, max_relative = 1e-10);
            assert!(u[1].abs() < 1e-20);
        }
        // Residual saturation: no wetting flow whatever the gradient.
        let st = FlowState::new(p, DgField::constant(ne, fl.s_rw), 0, 0.0);
        assert!(magnitudes(&wetting_velocity(&pb, &st)).iter().all(|&m| m == 0.0));
        // Uniform pressure without gravity.
        pb.gravity = [0.0, 0.0];
        let st = FlowState::new(DgField::constant(ne, 1e6), DgField::constant(ne, 0.5), 0, 0.0);
        assert!(magnitudes(&wetting_velocity(&pb, &st)).iter().all(|&m| m == 0.0));
    }

    #[test]
    fn rates_from_errors() {
        let rows = convergence_rows(&[(0.5, 48, 4e-2), (0.25, 192, 1e-2), (0.125, 768, 2.5e-3)]);
        assert_eq!(rows[0].rate, None);
        assert_relative_eq!(rows[1].rate.unwrap(), 2.0, epsilon = 1e-12);
        assert_relative_eq!(rows[2].rate.unwrap(), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn tables_render() {
        let rows = convergence_rows(&[(0.5, 48, 4e-2), (0.25, 192, 1e-2)]);
        let t = convergence_table(&[("dg", &rows), ("dg_fl", &rows)]);
        let csv = t.to_csv().unwrap();
        assert_eq!(
            csv.lines().next().unwrap(),
            "h,dofs,dg_error,dg_rate,dg_fl_error,dg_fl_rate"
        );
        assert_eq!(csv.lines().nth(2).unwrap(), "1/4,192,1.00e-2,2.00,1.00e-2,2.00");
        let text = t.to_text();
        let widths: Vec<usize> = text.lines().map(str::len).collect();
        assert!(widths.windows(2).all(|w| w[0] == w[1]), "{text}");
    }

    #[test]
    fn iteration_summary() {
        let rec = |n, fl| StepRecord {
            step: 1,
            time: 0.0,
            newton_iters: n,
            residuals: vec![],
            fl_iters: fl,
            min_s: 0.15,
            max_s: 0.85,
        };
        let a = [rec(2, Some(3)), rec(3, Some(7)), rec(4, Some(5)), rec(2, Some(1))];
        let st = IterationStats::from_records(&a);
        assert_eq!((st.newton_min, st.newton_max, st.fl_max), (2, 4, Some(7)));
        assert_eq!(st.fl_share_le5, Some(0.75));
        let b = [rec(2, None), rec(5, None), rec(3, None), rec(2, None)];
        assert_eq!(newton_agreement(&a, &b, 1), 0.75);
    }
}
