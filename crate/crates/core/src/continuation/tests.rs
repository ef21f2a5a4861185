use super::*;
use crate::catalog;
use crate::compiler::{compile_model, CompiledSystem, History};
use crate::model::{parse_model, ModelSource};
use crate::spectral::ChebyshevGrid;
use crate::system::FnSystem;
use approx::assert_abs_diff_eq;
use std::f64::consts::FRAC_PI_2;

fn model(coords: &[&str], params: &[&str], lines: &[&str], m: usize) -> CompiledSystem {
    let ast =
        parse_model(&ModelSource::new("test", coords, params, lines).with_degrees(m, m)).unwrap();
    compile_model(&ast).unwrap()
}

fn saddle_node() -> CompiledSystem {
    model(&["x"], &["p"], &["x'=p-x^2"], 1)
}

fn negative_feedback() -> CompiledSystem {
    model(&["x"], &["a"], &["x'[t]=-a*x[t-1]"], 10)
}

fn mg() -> (CompiledSystem, Vec<f64>) {
    let sys = compile_model(&catalog::mackey_glass()).unwrap();
    let p = sys.default_params().unwrap();
    (sys, p)
}

#[test]
fn equilibria_by_newton() {
    let (sys, p) = mg();
    let mut guess = vec![1.05; 11];
    guess[0] = 0.97;
    let y = find_equilibrium(&sys, &guess, &p).unwrap();
    assert!(y.iter().all(|v| (v - 1.0).abs() < 1e-10), "{y:?}");

    let y = find_equilibrium(&saddle_node(), &[0.5], &[1.0]).unwrap();
    assert_abs_diff_eq!(y[0], 1.0, epsilon = 1e-12);

    let re = compile_model(&catalog::re_quadratic()).unwrap();
    let p = [3.0];
    let guess = re
        .initial_state_from_history(&[History::Constant(0.6)], &p)
        .unwrap();
    let y = find_equilibrium(&re, &guess, &p).unwrap();
    let grid = ChebyshevGrid::new(10, 3.0).unwrap();
    for k in 1..=10 {
        assert_abs_diff_eq!(y[k - 1], 2.0 / 3.0 * grid.nodes()[k], epsilon = 1e-8);
    }
}

#[test]
fn find_equilibrium_reports_failures() {
    let no_root = FnSystem::new(&["x"], &["p"], |y, p, out| out[0] = p[0] + y[0] * y[0]);
    assert!(matches!(
        find_equilibrium(&no_root, &[0.3], &[1.0]),
        Err(ContinuationError::NoConvergence { .. }) | Err(ContinuationError::SingularJacobian)
    ));
    let (sys, mut p) = mg();
    p[3] = -1.0;
    let err = find_equilibrium(&sys, &[1.0; 11], &p).unwrap_err();
    assert!(err.is_delay_violation());
}

#[test]
fn eigen_reports() {
    let diag = FnSystem::new(&["u", "v"], &[], |y, _, out| {
        out[0] = -2.0 * y[0];
        out[1] = -y[1];
    });
    let r = eigen_report(&diag, &[0.0, 0.0], &[], None).unwrap();
    assert_abs_diff_eq!(r.eigenvalues[0].re, -1.0, epsilon = 1e-8);
    assert_abs_diff_eq!(r.eigenvalues[1].re, -2.0, epsilon = 1e-8);
    assert_eq!(r.unstable, 0);

    let r = eigen_report(&negative_feedback(), &[0.0; 11], &[FRAC_PI_2], Some(2)).unwrap();
    assert_eq!(r.eigenvalues.len(), 2);
    assert_eq!(r.total, 11);
    assert_abs_diff_eq!(r.eigenvalues[0].re, 0.0, epsilon = 1e-8);
    assert_abs_diff_eq!(r.eigenvalues[0].im, FRAC_PI_2, epsilon = 1e-8);
    assert_abs_diff_eq!(r.eigenvalues[1].im, -FRAC_PI_2, epsilon = 1e-8);

    let (sys, p) = mg();
    let r = eigen_report(&sys, &[1.0; 11], &p, None).unwrap();
    assert!(r.eigenvalues.iter().all(|l| l.re < 0.0));
    assert!(r.eigenvalues.windows(2).all(|w| w[0].re >= w[1].re));
}

#[test]
fn fold_of_saddle_node() {
    let sys = saddle_node();
    let cfg = ContinuerConfig {
        direction: Direction::Backward,
        max_points: 60,
        ..Default::default()
    };
    let b = continue_equilibrium(&sys, &[1.0], &[1.0], 0, &cfg).unwrap();
    let folds: Vec<_> = b.events_of(EventKind::Fold).collect();
    assert_eq!(folds.len(), 1, "{:?}", b.events);
    let f = folds[0];
    assert!(f.point.param.abs() <= 1e-10, "p = {}", f.point.param);
    assert!(f.point.state[0].abs() <= 1e-8);
    assert!(f.residual <= cfg.test_tol);
    assert_eq!(b.events_of(EventKind::BranchPoint).count(), 0);
    assert_eq!(b.events_of(EventKind::Hopf).count(), 0);
    // past the fold the branch turns back to positive p on the lower half
    let last = b.points.last().unwrap();
    assert!(last.state[0] < 0.0 && last.param > 0.0);
    assert_eq!(last.n_unstable, 1);
    for pt in &b.points {
        let mut out = [0.0];
        sys.context(&[pt.param]).unwrap().rhs(&pt.state, &mut out).unwrap();
        assert!(out[0].abs() <= cfg.corrector_tol);
    }
}

#[test]
fn hopf_of_linear_delay_equation() {
    let sys = negative_feedback();
    let cfg = ContinuerConfig {
        init_stepsize: 0.05,
        param_range: Some((0.0, 2.0)),
        ..Default::default()
    };
    let b = continue_equilibrium(&sys, &[0.0; 11], &[1.0], 0, &cfg).unwrap();
    assert_eq!(b.stop, StopReason::User);
    let h: Vec<_> = b.events_of(EventKind::Hopf).collect();
    assert_eq!(h.len(), 1);
    assert!((h[0].point.param - FRAC_PI_2).abs() <= 1e-8, "{}", h[0].point.param);
    let lead = h[0].point.spectrum[0];
    assert!(lead.re.abs() <= 1e-8 && (lead.im - FRAC_PI_2).abs() <= 1e-8, "{lead}");
    // stability changes exactly across the event
    let k = h[0].after;
    assert_eq!(b.points[k].n_unstable, 0);
    assert_eq!(b.points[k + 1].n_unstable, 2);
    for w in b.points.windows(2) {
        if w[0].param > h[0].point.param || w[1].param < h[0].point.param {
            assert_eq!(w[0].n_unstable, w[1].n_unstable);
        }
    }
}

#[test]
fn mackey_glass_hopf_points_and_stability() {
    let (sys, p) = mg();
    let cfg = ContinuerConfig {
        param_range: Some((0.0, 5.5)),
        ..Default::default()
    };
    let b = continue_equilibrium(&sys, &[1.0; 11], &p, 3, &cfg).unwrap();
    let h: Vec<f64> = b.events_of(EventKind::Hopf).map(|e| e.point.param).collect();
    assert_eq!(h.len(), 2, "{h:?}");
    assert!((h[0] - 1.209_199_57).abs() <= 1e-5, "{h:?}");
    assert!((h[1] - 4.833_742_21).abs() <= 1e-5, "{h:?}");
    let mut flips = 0;
    for w in b.points.windows(2) {
        if w[0].n_unstable != w[1].n_unstable {
            flips += 1;
        }
    }
    assert_eq!(flips, 2);
    let csv = b.to_csv();
    let header = csv.lines().next().unwrap();
    assert!(header.starts_with("index,tau,x,x_aux01,"));
    assert!(header.ends_with(",n_unstable,psi_fold,psi_hopf,psi_bp"));
    assert_eq!(csv.lines().filter(|l| l.starts_with("H,")).count(), 2);
    assert_eq!(csv.lines().count(), 1 + b.points.len() + b.events.len());
}

#[test]
fn backward_in_delay_underflows_near_zero() {
    let (sys, p) = mg();
    let cfg = ContinuerConfig {
        direction: Direction::Backward,
        ..Default::default()
    };
    let b = continue_equilibrium(&sys, &[1.0; 11], &p, 3, &cfg).unwrap();
    assert_eq!(b.stop, StopReason::StepUnderflow);
    let last = b.points.last().unwrap().param;
    assert!(last > 0.0 && last < 1e-3, "last tau {last}");
}

#[test]
fn inadmissible_start_stops_with_delay_guard() {
    let (sys, mut p) = mg();
    p[3] = -0.5;
    let b = continue_equilibrium(&sys, &[1.0; 11], &p, 3, &ContinuerConfig::default()).unwrap();
    assert_eq!(b.stop, StopReason::DelayGuard);
    assert!(b.points.is_empty());
}

fn daphnia_trivial_state(sys: &CompiledSystem, p: &[f64]) -> Vec<f64> {
    sys.initial_state_from_history(&[History::Constant(0.0), History::Constant(1.0)], p)
        .unwrap()
}

#[test]
fn daphnia_transcritical_point() {
    let sys = compile_model(&catalog::daphnia()).unwrap();
    let mut p = sys.default_params().unwrap();
    let beta = sys.param_index("beta").unwrap();
    p[beta] = 0.5;
    let y0 = daphnia_trivial_state(&sys, &p);
    let y0 = find_equilibrium(&sys, &y0, &p).unwrap();
    let cfg = ContinuerConfig {
        init_stepsize: 0.05,
        param_range: Some((0.0, 1.6)),
        ..Default::default()
    };
    let b = continue_equilibrium(&sys, &y0, &p, beta, &cfg).unwrap();
    let bp: Vec<_> = b.events_of(EventKind::BranchPoint).collect();
    assert_eq!(bp.len(), 1, "{:?}", b.events);
    assert!((bp[0].point.param - 1.0).abs() <= 1e-6, "{}", bp[0].point.param);
    assert_eq!(b.events_of(EventKind::Fold).count(), 0);
}

#[test]
fn quadratic_renewal_branch_point_and_hopf() {
    let sys = compile_model(&catalog::re_quadratic()).unwrap();
    let cfg = ContinuerConfig {
        init_stepsize: 0.05,
        param_range: Some((0.0, 1.5)),
        ..Default::default()
    };
    let b = continue_equilibrium(&sys, &[0.0; 10], &[0.5], 0, &cfg).unwrap();
    let bp: Vec<f64> = b.events_of(EventKind::BranchPoint).map(|e| e.point.param).collect();
    assert_eq!(bp.len(), 1);
    assert!((bp[0] - 1.0).abs() <= 1e-6, "{bp:?}");

    let p = [3.0];
    let guess = sys
        .initial_state_from_history(&[History::Constant(2.0 / 3.0)], &p)
        .unwrap();
    let y0 = find_equilibrium(&sys, &guess, &p).unwrap();
    let cfg = ContinuerConfig {
        param_range: Some((0.0, 4.0)),
        ..Default::default()
    };
    let b = continue_equilibrium(&sys, &y0, &p, 0, &cfg).unwrap();
    let h: Vec<f64> = b.events_of(EventKind::Hopf).map(|e| e.point.param).collect();
    assert_eq!(h.len(), 1, "{h:?}");
    assert!((h[0] - (2.0 + FRAC_PI_2)).abs() <= 1e-3, "{h:?}");
}

#[test]
fn cycle_from_linear_hopf_has_period_four() {
    let sys = negative_feedback();
    let (dir, omega) = hopf_direction(&sys, &[0.0; 11], &[FRAC_PI_2]).unwrap();
    assert_abs_diff_eq!(2.0 * PI / omega, 4.0, epsilon = 1e-8);
    assert_abs_diff_eq!(dir.iter().map(|d| d * d).sum::<f64>(), 1.0, epsilon = 1e-12);
    let cyc =
        hopf_to_cycle(&sys, &[0.0; 11], &[FRAC_PI_2], 0, 0.1, &ContinuerConfig::default()).unwrap();
    assert!((cyc.period - 4.0).abs() < 1e-6, "{}", cyc.period);
    assert!((cyc.param() - FRAC_PI_2).abs() < 1e-6);
    assert!(cyc.defect <= 1e-8);
    assert!(cyc.trivial_multiplier_defect() <= 1e-3);
}

#[test]
fn mackey_glass_cycle_branch_from_hopf() {
    let (sys, mut p) = mg();
    let cfg = ContinuerConfig {
        param_range: Some((0.0, 5.5)),
        ..Default::default()
    };
    let eq = continue_equilibrium(&sys, &[1.0; 11], &p, 3, &cfg).unwrap();
    let h = eq.events_of(EventKind::Hopf).next().unwrap();
    p[3] = h.point.param;
    let (_, omega) = hopf_direction(&sys, &h.point.state, &p).unwrap();
    let cyc = hopf_to_cycle(&sys, &h.point.state, &p, 3, 0.01, &cfg).unwrap();
    assert!((cyc.period * omega / (2.0 * PI) - 1.0).abs() < 0.1);
    assert!(cyc.trivial_multiplier_defect() <= 1e-3);

    let lc_cfg = ContinuerConfig {
        max_points: 6,
        ..cfg
    };
    let b = continue_limit_cycle(&sys, &cyc, &lc_cfg).unwrap();
    assert_eq!(b.points.len(), 6);
    assert_eq!(b.stop, StopReason::MaxPoints);
    assert!(b.points.last().unwrap().param > b.points[0].param);
    for pt in &b.points {
        let c = cycle_at(&sys, &b, pt, &lc_cfg).unwrap();
        assert!(c.defect <= lc_cfg.corrector_tol, "{}", c.defect);
        assert!(c.trivial_multiplier_defect() <= 1e-3);
    }
    let csv = b.to_csv();
    assert!(csv
        .lines()
        .next()
        .unwrap()
        .starts_with("index,tau,period,n_unstable_multipliers,psi_pd,psi_lpc,x,x_aux01"));
}

#[test]
fn config_validation() {
    let bad = ContinuerConfig {
        min_stepsize: 0.1,
        init_stepsize: 0.01,
        ..Default::default()
    };
    assert!(bad.validate().is_err());
    assert!(ContinuerConfig::default().validate().is_ok());
    assert_eq!(EventKind::from_tag("LPC"), Some(EventKind::CycleFold));
    assert_eq!(StopReason::StepUnderflow.to_string(), "step_underflow");
}

/// Smallest `alpha2` at which the symmetric mode `u' = -u - c1 u(t-t1) +
/// b2 alpha2 u(t-t2)` of the linearised two-node network has roots `±iω`,
/// from the characteristic equation (bisection on the phase condition).
fn two_node_hopf_oracle() -> f64 {
    let (t1, t2, c1, b2) = (11.6, 20.3, 0.069 * 2.0, 1.2);
    let z = |w: f64| Complex64::new(1.0, w) + Complex64::from_polar(c1, -w * t1);
    let phase = |w: f64| (z(w) * Complex64::from_polar(1.0, w * t2)).im;
    let (mut lo, mut hi) = (0.25, 0.32);
    assert!(phase(lo) * phase(hi) < 0.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if phase(lo) * phase(mid) <= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    z(0.5 * (lo + hi)).norm() / b2
}

#[test]
fn close_hopf_points_are_not_skipped() {
    let sys = compile_model(&catalog::two_node()).unwrap();
    let p = sys.default_params().unwrap();
    let alpha2 = sys.param_index("alpha2").unwrap();
    let cfg = ContinuerConfig {
        param_range: Some((0.0, 0.9)),
        ..Default::default()
    };
    let b = continue_equilibrium(&sys, &vec![0.0; sys.dim()], &p, alpha2, &cfg).unwrap();
    let h: Vec<f64> = b.events_of(EventKind::Hopf).map(|e| e.point.param).collect();
    assert_eq!(h.len(), 2, "{h:?}");
    assert!((h[0] - two_node_hopf_oracle()).abs() < 1e-4, "{h:?}");
    for w in b.points.windows(2) {
        assert!(w[0].n_unstable.abs_diff(w[1].n_unstable) <= 2);
    }
}
