use proptest::prelude::*;

use super::*;
use crate::catalog;

fn src(coords: &[&str], params: &[&str], lines: &[&str]) -> ModelSource {
    ModelSource::new("m", coords, params, lines)
}

fn parse(coords: &[&str], params: &[&str], lines: &[&str]) -> Result<ModelAst, ModelError> {
    parse_model(&src(coords, params, lines))
}

#[test]
fn mackey_glass_listing() {
    let ast = parse(
        &["x"],
        &["beta", "gamma", "n", "tau"],
        &["x'[t]=beta*x[t-tau]/(1+x[t-tau]^n)-gamma*x[t]"],
    )
    .unwrap();
    assert_eq!(ast.equations.len(), 1);
    assert_eq!(ast.equations[0].kind, EquationKind::Differential);
    assert_eq!(ast.discrete_delays, vec![Expr::Param("tau".into())]);
    assert!(ast.distributed_specs.is_empty());
    let delays = collect_delays(&ast);
    assert_eq!(delays.delays.len(), 1);
    assert_eq!(delays.max_delay_display(), "tau");
}

#[test]
fn quadratic_renewal_listing() {
    let ast = parse(
        &["x"],
        &["gamma"],
        &["x[t]=gamma/2*DE_int(@(theta)x[t+theta]*(1-x[t+theta]),-3,-1)"],
    )
    .unwrap();
    assert_eq!(ast.equations[0].kind, EquationKind::Renewal);
    assert_eq!(ast.distributed_specs.len(), 1);
    let spec = &ast.distributed_specs[0];
    assert_eq!(spec.lower.folded(), Expr::Num(-3.0));
    assert_eq!(spec.upper.folded(), Expr::Num(-1.0));
    assert!(ast.discrete_delays.is_empty());
    let delays = collect_delays(&ast);
    assert_eq!(delays.delays.len(), 1);
    assert_eq!(delays.delays[0].magnitude, Expr::Num(3.0));
    assert_eq!(delays.max_delay, vec![Expr::Num(3.0)]);
}

#[test]
fn daphnia_listing() {
    let ast = catalog::daphnia();
    let class = classify(&ast).unwrap();
    assert_eq!((class.d_dde, class.d_re), (1, 1));
    assert_eq!(class.ordering, vec!["S".to_string(), "b".to_string()]);
    let delays = collect_delays(&ast);
    assert_eq!(delays.max_delay, vec![Expr::Param("a_max".into())]);
    assert_eq!(delays.delays[0].near, Some(Expr::Param("a_repr".into())));
}

#[test]
fn every_bundled_listing_parses() {
    for (name, text) in catalog::ALL {
        let ast = parse_model_file(text).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert!(!ast.equations.is_empty());
    }
    let two = catalog::two_node();
    let delays = collect_delays(&two);
    assert_eq!(delays.delays.len(), 2);
    assert_eq!(delays.max_delay_display(), "max(tau1,tau2)");
    assert!(catalog::lorenz().is_ode());
}

#[test]
fn classification_counts() {
    let c = classify(&catalog::mackey_glass()).unwrap();
    assert_eq!((c.d_dde, c.d_re), (1, 0));
    let c = classify(&catalog::re_quadratic()).unwrap();
    assert_eq!((c.d_dde, c.d_re), (0, 1));
}

#[test]
fn bare_name_equals_current_time() {
    let a = parse(&["x"], &[], &["x'=x"]).unwrap();
    let b = parse(&["x"], &[], &["x'[t]=x[t]"]).unwrap();
    assert_eq!(a, b);
}

#[test]
fn time_argument_must_start_with_t() {
    let err = parse(&["x"], &[], &["x'[t]=x[s-1]"]).unwrap_err();
    match err {
        ModelError::TimeArgument { found, pos } => {
            assert_eq!(found, "s-1");
            assert_eq!(pos.col, 9);
        }
        other => panic!("unexpected {other:?}"),
    }
    assert!(matches!(
        parse(&["x"], &[], &["x'=x[1-t]"]),
        Err(ModelError::TimeArgument { .. })
    ));
    assert!(matches!(
        parse(&["x"], &["a"], &["x'=x[t*a]"]),
        Err(ModelError::TimeArgument { .. })
    ));
}

#[test]
fn offsets_accumulate_like_subtraction() {
    let ast = parse(&["x"], &["a", "b"], &["x'=x[t-a-b]"]).unwrap();
    let magnitude = &ast.discrete_delays[0];
    // -( -a - b )
    assert_eq!(
        magnitude,
        &Expr::Neg(Box::new(Expr::binary(
            BinOp::Sub,
            Expr::Neg(Box::new(Expr::Param("a".into()))),
            Expr::Param("b".into())
        )))
    );
}

#[test]
fn matlab_precedence() {
    let ast = parse(&["x"], &["a"], &["x'=-a^2*x+2^-1"]).unwrap();
    let expected = Expr::binary(
        BinOp::Add,
        Expr::binary(
            BinOp::Mul,
            Expr::Neg(Box::new(Expr::binary(
                BinOp::Pow,
                Expr::Param("a".into()),
                Expr::Num(2.0),
            ))),
            Expr::Coord {
                name: "x".into(),
                offset: None,
            },
        ),
        Expr::binary(BinOp::Pow, Expr::Num(2.0), Expr::Neg(Box::new(Expr::Num(1.0)))),
    );
    assert_eq!(ast.equations[0].rhs, expected);
    // left associative power, as in MATLAB
    let ast = parse(&["x"], &[], &["x'=2^3^2"]).unwrap();
    assert_eq!(
        ast.equations[0].rhs,
        Expr::binary(
            BinOp::Pow,
            Expr::binary(BinOp::Pow, Expr::Num(2.0), Expr::Num(3.0)),
            Expr::Num(2.0)
        )
    );
}

#[test]
fn error_paths() {
    assert!(matches!(
        parse(&["x"], &[], &["x'=y"]),
        Err(ModelError::UnknownIdentifier { name, .. }) if name == "y"
    ));
    assert!(matches!(
        parse(&["x"], &[], &["x'=(x+1"]),
        Err(ModelError::Syntax { .. })
    ));
    assert!(matches!(
        parse(&["x"], &[], &["x'=x[t-1"]),
        Err(ModelError::Syntax { .. })
    ));
    assert!(matches!(
        parse(&["x"], &[], &["x'=x+1)"]),
        Err(ModelError::Syntax { .. })
    ));
    assert!(matches!(
        parse(&["x"], &[], &["x'=x", "x'=-x"]),
        Err(ModelError::DuplicateEquation(c)) if c == "x"
    ));
    assert!(matches!(
        parse(&["x"], &[], &["x'=x", "x=-x"]),
        Err(ModelError::MixedDefinition(c)) if c == "x"
    ));
    assert!(matches!(
        parse(&["x", "y"], &[], &["x'=y"]),
        Err(ModelError::MissingEquation(c)) if c == "y"
    ));
    assert!(matches!(
        parse(&["x"], &[], &["DE_int=x", "x'=x"]),
        Err(ModelError::ReservedName { .. })
    ));
    assert!(matches!(
        parse(&["x"], &["x"], &["x'=x"]),
        Err(ModelError::InvalidDeclaration(_))
    ));
    // implicit multiplication is not accepted
    assert!(matches!(
        parse(&["x"], &["a"], &["x'=2a"]),
        Err(ModelError::Syntax { .. })
    ));
    // explicit time dependence
    assert!(matches!(
        parse(&["x"], &[], &["x'=t"]),
        Err(ModelError::Syntax { .. })
    ));
    // bounds cannot depend on the state
    assert!(matches!(
        parse(&["x"], &[], &["x'=DE_int(@(s)x[t+s],-x,0)"]),
        Err(ModelError::Syntax { .. })
    ));
}

#[test]
fn intermediates_must_precede_use() {
    assert!(matches!(
        parse(&["x"], &[], &["x'=-y", "y=x"]),
        Err(ModelError::UnknownIdentifier { name, .. }) if name == "y"
    ));
    let ast = parse(&["x"], &[], &["y=2*x", "x'=-y"]).unwrap();
    assert_eq!(ast.intermediates().count(), 1);
}

#[test]
fn lambdas_bind_their_arguments() {
    let ast = catalog::two_node();
    let s = ast.intermediates().next().unwrap();
    assert_eq!(s.kind, EquationKind::IntermediateLambda);
    assert_eq!(s.lambda_params.as_deref(), Some(&["x".to_string()][..]));
    assert!(s.rhs.mentions_bound("x"));
    assert!(matches!(
        parse(&["x"], &[], &["f=@(u,v)u*v", "x'=f(x)"]),
        Err(ModelError::Syntax { .. })
    ));
}

#[test]
fn file_errors_report_file_lines() {
    let text = "name: m\ncoordinates: x\nparameters: a\n% comment\nequations:\n\nx'=x[s-a]\n";
    let err = parse_model_file(text).unwrap_err();
    assert!(err.is_syntax());
    match err {
        ModelFileError::Model(ModelError::TimeArgument { pos, .. }) => assert_eq!(pos.line, 7),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn file_defaults_and_degrees() {
    let file = ModelFile::parse(catalog::MACKEY_GLASS).unwrap();
    assert_eq!(file.source.collocation_degree, 10);
    assert_eq!(file.source.quadrature_degree, 10);
    assert_eq!(file.source.defaults, vec![Some(2.0), Some(1.0), Some(6.0), Some(0.5)]);
    let mut file = file;
    file.set_degrees(Some(5), None);
    assert_eq!(file.source.quadrature_degree, 5);
    assert!(ModelFile::parse("name: m\ncoordinates: x\nfoo: 1\nequations:\nx'=x").is_err());
    assert!(ModelFile::parse("name: m\ncoordinates: x\nM: 0\nequations:\nx'=x").is_err());
}

#[test]
fn offsets_are_nonpositive_shapes() {
    // every coordinate reference is at t, t - <expr>, or runs with a bound variable
    for (_, text) in catalog::ALL {
        let ast = parse_model_file(text).unwrap();
        for eq in &ast.equations {
            let mut bound_vars = Vec::new();
            eq.rhs.walk(&mut |e| {
                if let Expr::Integral { var, .. } = e {
                    bound_vars.push(var.clone());
                }
            });
            eq.rhs.walk(&mut |e| {
                if let Expr::Coord {
                    offset: Some(o), ..
                } = e
                {
                    let runs_with_var = bound_vars.iter().any(|v| o.mentions_bound(v));
                    assert!(matches!(o.as_ref(), Expr::Neg(_)) || runs_with_var, "{o}");
                }
            });
        }
    }
}

#[test]
fn bundled_models_round_trip() {
    for (name, text) in catalog::ALL {
        let ast = parse_model_file(text).unwrap();
        let printed = ast.to_model_text();
        let again = parse_model_file(&printed).unwrap_or_else(|e| panic!("{name}: {e}\n{printed}"));
        assert_eq!(ast, again, "{name}");
    }
}

fn arb_expr() -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![
        (0u32..1000).prop_map(|v| Expr::Num(v as f64 / 8.0)),
        Just(Expr::Param("a".into())),
        Just(Expr::Param("tau".into())),
        Just(Expr::Coord {
            name: "x".into(),
            offset: None
        }),
        Just(Expr::Coord {
            name: "y".into(),
            offset: Some(Box::new(Expr::Neg(Box::new(Expr::Param("tau".into())))))
        }),
    ];
    leaf.prop_recursive(5, 48, 3, |inner| {
        prop_oneof![
            inner.clone().prop_map(|e| Expr::Neg(Box::new(e))),
            (
                prop_oneof![
                    Just(BinOp::Add),
                    Just(BinOp::Sub),
                    Just(BinOp::Mul),
                    Just(BinOp::Div),
                    Just(BinOp::Pow)
                ],
                inner.clone(),
                inner.clone()
            )
                .prop_map(|(op, l, r)| Expr::binary(op, l, r)),
            inner.clone().prop_map(|e| Expr::Call {
                func: MathFn::Tanh,
                arg: Box::new(e)
            }),
            (inner.clone(), inner.clone()).prop_map(|(o, b)| Expr::Coord {
                name: "x".into(),
                offset: Some(Box::new(Expr::binary(BinOp::Sub, o.clone(), b))),
            }),
            inner.prop_map(|body| Expr::Integral {
                var: "s".into(),
                body: Box::new(Expr::binary(
                    BinOp::Mul,
                    body,
                    Expr::Coord {
                        name: "x".into(),
                        offset: Some(Box::new(Expr::Bound("s".into())))
                    }
                )),
                lower: Box::new(Expr::Neg(Box::new(Expr::Param("tau".into())))),
                upper: Box::new(Expr::Num(0.0)),
            }),
        ]
    })
}

fn strip_coords_in_offsets(e: &Expr) -> bool {
    let mut ok = true;
    e.walk(&mut |n| {
        if let Expr::Coord {
            offset: Some(o), ..
        } = n
        {
            if o.has_coordinates() {
                ok = false;
            }
        }
    });
    ok
}

proptest! {
    #[test]
    fn printed_expressions_reparse_identically(rhs in arb_expr()) {
        prop_assume!(strip_coords_in_offsets(&rhs));
        let eq = EquationDef { kind: EquationKind::Differential, target: "x".into(), rhs: rhs.clone(), lambda_params: None };
        let line = eq.to_string();
        let ast = parse(&["x", "y"], &["a", "tau"], &[&line, "y'=y"]);
        prop_assert!(ast.is_ok(), "{} -> {:?}", line, ast);
        prop_assert_eq!(&ast.unwrap().equations[0].rhs, &rhs);
    }
}
