use super::*;
use crate::catalog;
use crate::model::{parse_model, ModelSource};
use crate::spectral::{clenshaw_curtis, ChebyshevGrid};
use crate::system::central_difference_jacobian;
use approx::assert_abs_diff_eq;
use num_complex::Complex64;

fn model(coords: &[&str], params: &[&str], lines: &[&str], m: usize) -> CompiledSystem {
    let ast = parse_model(&ModelSource::new("test", coords, params, lines).with_degrees(m, m)).unwrap();
    compile_model(&ast).unwrap()
}

fn negative_feedback(m: usize) -> CompiledSystem {
    model(&["x"], &["a"], &["x'[t]=-a*x[t-1]"], m)
}

fn rhs(sys: &CompiledSystem, y: &[f64], p: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; y.len()];
    sys.context(p).unwrap().rhs(y, &mut out).unwrap();
    out
}

/// xorshift sequence in [0, 1).
struct Rng(u64);

impl Rng {
    fn next(&mut self) -> f64 {
        self.0 ^= self.0 << 13;
        self.0 ^= self.0 >> 7;
        self.0 ^= self.0 << 17;
        (self.0 >> 11) as f64 / (1u64 << 53) as f64
    }
}

/// Rightmost root of `lambda = -a exp(-lambda)` by complex Newton.
fn characteristic_root(a: f64, guess: Complex64) -> Complex64 {
    let mut l = guess;
    for _ in 0..100 {
        let g = l + a * (-l).exp();
        let dg = 1.0 - a * (-l).exp();
        l -= g / dg;
        if g.norm() < 1e-15 {
            break;
        }
    }
    l
}

fn rightmost_upper(m: &DMatrix<f64>) -> Complex64 {
    let ev = m.clone().complex_eigenvalues();
    ev.iter()
        .copied()
        .filter(|z| z.im > 0.0)
        .max_by(|a, b| a.re.total_cmp(&b.re))
        .unwrap()
}

#[test]
fn layouts_and_labels() {
    let mg = compile_model(&catalog::mackey_glass()).unwrap();
    assert_eq!(mg.dim(), 11);
    assert_eq!(mg.label(0).unwrap(), "x");
    assert_eq!(mg.label(1).unwrap(), "x_aux01");
    assert_eq!(mg.label(10).unwrap(), "x_aux10");
    assert!(matches!(
        mg.label(11),
        Err(SystemError::IndexOutOfRange { index: 11, dim: 11 })
    ));

    let re = compile_model(&catalog::re_quadratic()).unwrap();
    assert_eq!(re.dim(), 10);
    assert_eq!(re.label(0).unwrap(), "x_aux01");
    assert_eq!(re.label(1).unwrap(), "x_aux02");
    assert!(re.labels().iter().all(|l| l.contains("_aux")));

    let daphnia = compile_model(&catalog::daphnia()).unwrap();
    assert_eq!(daphnia.dim(), 21);
    let layout = daphnia.layout();
    assert_eq!(layout.coords(), &["S".to_string(), "b".to_string()]);
    // independent count: one head for S, then S and b for every aux node
    let mut expected = vec!["S".to_string()];
    for k in 1..=10 {
        expected.push(format!("S_aux{k:02}"));
        expected.push(format!("b_aux{k:02}"));
    }
    assert_eq!(daphnia.labels(), expected);

    let two = compile_model(&catalog::two_node()).unwrap();
    assert_eq!(two.dim(), 2 * 21);
}

#[test]
fn labels_are_a_bijection() {
    for (name, text) in catalog::ALL {
        let sys = compile_model(&catalog::load(text, Some(12))).unwrap();
        let labels = sys.labels();
        let unique: std::collections::HashSet<_> = labels.iter().collect();
        assert_eq!(unique.len(), labels.len(), "{name}");
        for (i, l) in labels.iter().enumerate() {
            assert_eq!(sys.layout().index_of(l), Some(i));
        }
    }
}

#[test]
fn plain_ode_compiles_without_history() {
    let lorenz = compile_model(&catalog::lorenz()).unwrap();
    assert!(lorenz.is_ode());
    assert_eq!(lorenz.labels(), vec!["x", "y", "z"]);
    let p = lorenz.default_params().unwrap();
    let out = rhs(&lorenz, &[1.0, 2.0, 3.0], &p);
    assert_abs_diff_eq!(out[0], 10.0, epsilon = 1e-14);
    assert_abs_diff_eq!(out[1], 28.0 - 3.0 - 2.0, epsilon = 1e-14);
    assert_abs_diff_eq!(out[2], 2.0 - 8.0, epsilon = 1e-14);

    let fold = model(&["x"], &["p"], &["x'=p-x^2"], 10);
    assert_eq!(fold.dim(), 1);
    assert_eq!(rhs(&fold, &[0.5], &[1.0]), vec![0.75]);
    let j = fold.context(&[1.0]).unwrap().jacobian(&[0.5]).unwrap();
    assert_abs_diff_eq!(j[(0, 0)], -1.0, epsilon = 1e-8);
}

#[test]
fn constant_history_of_negative_feedback() {
    let sys = negative_feedback(10);
    let y = vec![0.7; 11];
    let out = rhs(&sys, &y, &[1.0]);
    assert_abs_diff_eq!(out[0], -0.7, epsilon = 1e-15);
    for v in &out[1..] {
        assert_abs_diff_eq!(*v, 0.0, epsilon = 1e-12);
    }
}

#[test]
fn mackey_glass_equilibrium() {
    let sys = compile_model(&catalog::mackey_glass()).unwrap();
    let p = sys.default_params().unwrap();
    let out = rhs(&sys, &vec![1.0; 11], &p);
    for v in out {
        assert_abs_diff_eq!(v, 0.0, epsilon = 1e-12);
    }
}

/// Independent assembly of the renewal discretisation for
/// `x = gamma/2 int_{-3}^{-1} x(1-x)`: product-rule differentiation
/// matrix, Lagrange interpolation by products, Clenshaw–Curtis weights.
fn quadratic_re_oracle(v: &[f64], gamma: f64, m: usize) -> Vec<f64> {
    let tau = 3.0;
    let nodes = ChebyshevGrid::new(m, tau).unwrap().nodes().to_vec();
    let n = m + 1;
    let dmat = |i: usize, j: usize| -> f64 {
        let denom: f64 = (0..n).filter(|&q| q != j).map(|q| nodes[j] - nodes[q]).product();
        if i != j {
            let num: f64 = (0..n)
                .filter(|&q| q != i && q != j)
                .map(|q| nodes[i] - nodes[q])
                .product();
            num / denom
        } else {
            (0..n).filter(|&q| q != j).map(|q| 1.0 / (nodes[j] - nodes[q])).sum()
        }
    };
    // history values z_i = sum_{j>=1} D_ij V_j
    let z: Vec<f64> = (0..n)
        .map(|i| (1..n).map(|j| dmat(i, j) * v[j - 1]).sum())
        .collect();
    let interp = |x: f64| -> f64 {
        (0..n)
            .map(|k| {
                let l: f64 = (0..n)
                    .filter(|&q| q != k)
                    .map(|q| (x - nodes[q]) / (nodes[k] - nodes[q]))
                    .product();
                l * z[k]
            })
            .sum()
    };
    let rule = clenshaw_curtis(m, -3.0, -1.0).unwrap();
    let integral: f64 = rule
        .nodes()
        .iter()
        .zip(rule.weights())
        .map(|(&x, &w)| {
            let h = interp(x);
            w * h * (1.0 - h)
        })
        .sum();
    let f = gamma / 2.0 * integral;
    (1..n)
        .map(|k| (1..n).map(|j| dmat(k, j) * v[j - 1]).sum::<f64>() - f)
        .collect()
}

#[test]
fn renewal_rhs_matches_independent_assembly() {
    let sys = compile_model(&catalog::re_quadratic()).unwrap();
    let mut rng = Rng(0x9E3779B97F4A7C15);
    for _ in 0..20 {
        let v: Vec<f64> = (0..10).map(|_| rng.next() - 0.5).collect();
        let gamma = 1.0 + 4.0 * rng.next();
        let got = rhs(&sys, &v, &[gamma]);
        let want = quadratic_re_oracle(&v, gamma, 10);
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() <= 1e-9 * (1.0 + w.abs()), "{g} vs {w}");
        }
    }
}

#[test]
fn renewal_constant_equilibrium() {
    let sys = compile_model(&catalog::re_quadratic()).unwrap();
    let nodes = ChebyshevGrid::new(10, 3.0).unwrap().nodes().to_vec();
    let mut gamma = 1.05;
    while gamma < 2.0 + std::f64::consts::FRAC_PI_2 {
        let xbar = 1.0 - 1.0 / gamma;
        let v: Vec<f64> = nodes[1..].iter().map(|th| xbar * th).collect();
        for r in rhs(&sys, &v, &[gamma]) {
            assert!(r.abs() <= 1e-10, "gamma={gamma}: {r}");
        }
        let out = sys.reconstruct_output(&v, &[gamma]).unwrap();
        assert_abs_diff_eq!(out[0], xbar, epsilon = 1e-10);
        gamma += 0.25;
    }
    let zero = sys.reconstruct_output(&[0.0; 10], &[3.0]).unwrap();
    assert_eq!(zero, vec![0.0]);
}

#[test]
fn semilinear_split_identity() {
    let systems = [
        compile_model(&catalog::mackey_glass()).unwrap(),
        compile_model(&catalog::daphnia()).unwrap(),
        compile_model(&catalog::re_quadratic()).unwrap(),
    ];
    let mut rng = Rng(12345);
    for sys in &systems {
        let base = sys.default_params().unwrap();
        for _ in 0..200 {
            let p: Vec<f64> = base.iter().map(|v| v * (0.9 + 0.2 * rng.next())).collect();
            let y: Vec<f64> = (0..sys.dim()).map(|_| 0.5 + rng.next()).collect();
            let mut ctx = sys.context(&p).unwrap();
            let mut full = vec![0.0; y.len()];
            ctx.rhs(&y, &mut full).unwrap();
            let mut nl = vec![0.0; y.len()];
            ctx.nonlinear(&y, &mut nl).unwrap();
            let lin = ctx.linear() * DVector::from_column_slice(&y);
            for i in 0..y.len() {
                let split = lin[i] + nl[i];
                assert!((full[i] - split).abs() <= 1e-12 * (1.0 + full[i].abs()) * 10.0);
            }
        }
    }
}

#[test]
fn jacobian_of_linear_delay_system() {
    let sys = negative_feedback(10);
    let mut ctx = sys.context(&[1.0]).unwrap();
    let mut rng = Rng(7);
    let y1: Vec<f64> = (0..11).map(|_| rng.next()).collect();
    let y2: Vec<f64> = (0..11).map(|_| 10.0 * rng.next()).collect();
    let j1 = ctx.jacobian(&y1).unwrap();
    let j2 = ctx.jacobian(&y2).unwrap();
    // constant in y up to the rounding of the difference quotient
    assert_abs_diff_eq!(j1, j2, epsilon = 1e-7);
    // head row couples to the theta_M node only
    assert_abs_diff_eq!(j1[(0, 10)], -1.0, epsilon = 1e-9);
    for j in 0..10 {
        assert_abs_diff_eq!(j1[(0, j)], 0.0, epsilon = 1e-12);
    }
    let grid = ChebyshevGrid::new(10, 1.0).unwrap();
    let dm = crate::spectral::DiffMatrices::new(&grid);
    let dc = dm.d_c();
    // aux rows are copied, not differenced
    for k in 0..10 {
        for j in 0..11 {
            assert_eq!(j1[(k + 1, j)], dc[(k, j)]);
        }
    }
    // the field is linear, so a wide central difference is exact up to rounding
    let h = 1e-2;
    let mut oracle = DMatrix::zeros(11, 11);
    let (mut fp, mut fm) = (vec![0.0; 11], vec![0.0; 11]);
    for j in 0..11 {
        let mut yp = y1.clone();
        yp[j] += h;
        ctx.rhs(&yp, &mut fp).unwrap();
        yp[j] -= 2.0 * h;
        ctx.rhs(&yp, &mut fm).unwrap();
        for i in 0..11 {
            oracle[(i, j)] = (fp[i] - fm[i]) / (2.0 * h);
        }
    }
    assert_abs_diff_eq!(j1, oracle, epsilon = 1e-9);
}

#[test]
fn jacobian_matches_full_difference_oracle() {
    let mg = compile_model(&catalog::mackey_glass()).unwrap();
    let p = mg.default_params().unwrap();
    let mut ctx = mg.context(&p).unwrap();
    let y = vec![1.0; 11];
    let j = ctx.jacobian(&y).unwrap();
    let oracle = central_difference_jacobian(|y, out| ctx.rhs(y, out), &y).unwrap();
    assert_abs_diff_eq!(j, oracle, epsilon = 1e-6);
    assert_eq!(ctx.read_columns(), &[0, 10]);

    let daphnia = compile_model(&catalog::daphnia()).unwrap();
    let p = daphnia.default_params().unwrap();
    let mut ctx = daphnia.context(&p).unwrap();
    let mut rng = Rng(99);
    let y: Vec<f64> = (0..21).map(|_| 0.2 + 0.3 * rng.next()).collect();
    let j = ctx.jacobian(&y).unwrap();
    let oracle = central_difference_jacobian(|y, out| ctx.rhs(y, out), &y).unwrap();
    assert_abs_diff_eq!(j, oracle, epsilon = 1e-6);
}

#[test]
fn rightmost_roots_converge_spectrally() {
    let exact = characteristic_root(1.0, Complex64::new(-0.3, 1.3));
    assert_abs_diff_eq!(exact.re, -0.318_131_505_204_764, epsilon = 1e-12);
    let mut roots = Vec::new();
    for m in [10, 20] {
        let sys = negative_feedback(m);
        let j = sys.context(&[1.0]).unwrap().jacobian(&vec![0.0; m + 1]).unwrap();
        roots.push(rightmost_upper(&j));
    }
    assert!((roots[0] - roots[1]).norm() < 1e-10, "{:?}", roots);
    assert!((roots[1] - exact).norm() < 1e-10, "{:?} vs {exact}", roots[1]);
}

#[test]
fn hopf_eigenvalues_at_half_pi() {
    let a = std::f64::consts::FRAC_PI_2;
    for m in [10, 15, 20] {
        let sys = negative_feedback(m);
        let j = sys.context(&[a]).unwrap().jacobian(&vec![0.0; m + 1]).unwrap();
        let z = rightmost_upper(&j);
        assert!((z - Complex64::new(0.0, a)).norm() < 1e-8, "M={m}: {z}");
    }
}

#[test]
fn initial_states() {
    let mg = compile_model(&catalog::mackey_glass()).unwrap();
    let p = mg.default_params().unwrap();
    let y = mg.initial_state_from_history(&[History::Constant(1.3)], &p).unwrap();
    assert_eq!(y, vec![1.3; 11]);
    let f = History::Function(Arc::new(|th: f64| th * th));
    let y = mg.initial_state_from_history(&[f], &p).unwrap();
    let nodes = ChebyshevGrid::new(10, 0.5).unwrap().nodes().to_vec();
    for (v, th) in y.iter().zip(&nodes) {
        assert_abs_diff_eq!(*v, th * th, epsilon = 1e-15);
    }
    assert_eq!(mg.reconstruct_output(&y, &p).unwrap(), vec![y[0]]);

    let re = compile_model(&catalog::re_quadratic()).unwrap();
    let nodes = ChebyshevGrid::new(10, 3.0).unwrap().nodes().to_vec();
    let y = re.initial_state_from_history(&[History::Constant(0.4)], &[4.6]).unwrap();
    for (v, th) in y.iter().zip(&nodes[1..]) {
        assert_abs_diff_eq!(*v, 0.4 * th, epsilon = 1e-10);
    }

    let unit = model(&["x"], &["g"], &["x[t]=g*DE_int(@(s)x[t+s],-1,0)"], 10);
    let expr = crate::model::parse_history_expression(unit.ast(), "theta").unwrap();
    let y = unit
        .initial_state_from_history(&[History::Expression(expr)], &[0.5])
        .unwrap();
    let nodes = ChebyshevGrid::new(10, 1.0).unwrap().nodes().to_vec();
    for (v, th) in y.iter().zip(&nodes[1..]) {
        assert_abs_diff_eq!(*v, th * th / 2.0, epsilon = 1e-8);
    }
    assert!(unit.initial_state_from_history(&[], &[0.5]).is_err());
}

#[test]
fn delay_guard() {
    let mg = compile_model(&catalog::mackey_glass()).unwrap();
    assert!(mg.delay_guard(&[2.0, 1.0, 6.0, 0.5]).is_ok());
    match mg.delay_guard(&[2.0, 1.0, 6.0, -1e-6]) {
        Err(SystemError::Delay { expr, value }) => {
            assert_eq!(expr, "tau");
            assert_eq!(value, -1e-6);
        }
        other => panic!("{other:?}"),
    }
    assert!(matches!(
        mg.delay_guard(&[2.0, 1.0, 6.0, 0.0]),
        Err(SystemError::Delay { .. })
    ));
    assert!(mg.evaluator(&[2.0, 1.0, 6.0, 0.0]).is_err());

    let two = compile_model(&catalog::two_node()).unwrap();
    let mut p = two.default_params().unwrap();
    assert!(two.delay_guard(&p).is_ok());
    assert_eq!(two.max_delay(&p), 20.3);
    p[1] = 0.0;
    p[2] = 0.0;
    assert!(two.delay_guard(&p).is_err());

    let daphnia = compile_model(&catalog::daphnia()).unwrap();
    let mut p = daphnia.default_params().unwrap();
    p[0] = 5.0; // a_repr > a_max
    assert!(daphnia.delay_guard(&p).is_err());
}

#[test]
fn every_bundled_model_evaluates() {
    for (name, text) in catalog::ALL {
        let sys = compile_model(&catalog::load(text, None)).unwrap();
        let p = sys.default_params().unwrap();
        let y = vec![0.1; sys.dim()];
        let out = rhs(&sys, &y, &p);
        assert!(out.iter().all(|v| v.is_finite()), "{name}");
    }
}

#[test]
fn description_round_trip() {
    let sys = compile(&catalog::daphnia(), 8, 6).unwrap();
    let desc = sys.describe();
    assert_eq!(desc.dimension, 1 + 2 * 8);
    assert_eq!(desc.delays, vec!["a_max".to_string()]);
    assert_eq!(desc.max_delay, "a_max");
    let json = serde_json::to_string(&desc).unwrap();
    let back: SystemDescription = serde_json::from_str(&json).unwrap();
    let again = CompiledSystem::from_description(&back).unwrap();
    assert_eq!(again.describe(), desc);
    let p = sys.default_params().unwrap();
    let y: Vec<f64> = (0..desc.dimension).map(|i| 0.1 + 0.01 * i as f64).collect();
    assert_eq!(rhs(&sys, &y, &p), rhs(&again, &y, &p));
}

#[test]
fn lambda_and_intermediate_values() {
    let sys = model(
        &["x"],
        &["k"],
        &["sq=@(u,v)u*v", "w=sq(x,k)", "x'=-w+sq(x[t-1],2)"],
        6,
    );
    let y = vec![1.5; 7];
    let out = rhs(&sys, &y, &[3.0]);
    assert_abs_diff_eq!(out[0], -4.5 + 3.0, epsilon = 1e-14);
}
