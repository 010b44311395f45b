use outage_core::evaluator::{check_feasibility, compute_objective, ResidualMode};
use outage_core::io::{
    generate_instance, parse_instance, parse_solution, write_instance, write_solution,
    GeneratorParams, IoError,
};
use outage_core::model::{ModelError, Schedule};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random_params(seed: u64) -> GeneratorParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    GeneratorParams {
        plants: rng.gen_range(1..=6),
        flexible: rng.gen_range(1..=3),
        cycles: rng.gen_range(1..=3),
        weeks: rng.gen_range(8..=30),
        steps_per_week: rng.gen_range(1..=7),
        scenarios: rng.gen_range(1..=5),
        density: rng.gen_range(0.0..=1.0),
        seed,
        ..GeneratorParams::default()
    }
}

#[test]
fn witnesses_are_feasible() {
    for seed in 0..300 {
        let p = random_params(seed);
        let g = generate_instance(&p).unwrap_or_else(|e| panic!("seed {seed}: {e} {p:?}"));
        let v = check_feasibility(&g.instance, &g.witness.schedule, &g.witness.production).unwrap();
        assert!(v.is_empty(), "seed {seed}: {v:?}");
    }
}

#[test]
fn generation_is_deterministic() {
    let p = GeneratorParams {
        seed: 1,
        ..GeneratorParams::default()
    };
    let a = write_instance(&generate_instance(&p).unwrap().instance);
    let b = write_instance(&generate_instance(&p).unwrap().instance);
    assert_eq!(a, b);
}

#[test]
fn instances_round_trip() {
    for seed in 0..100 {
        let inst = generate_instance(&random_params(seed)).unwrap().instance;
        let text = write_instance(&inst);
        let back = parse_instance(&text).unwrap();
        assert_eq!(back, inst, "seed {seed}");
        assert_eq!(write_instance(&back), text);
    }
}

#[test]
fn witness_solution_round_trips_with_the_same_score() {
    let g = generate_instance(&GeneratorParams::default()).unwrap();
    let sol = &g.witness;
    let obj = compute_objective(
        &g.instance,
        &sol.schedule,
        &sol.production,
        ResidualMode::Summed,
    )
    .unwrap();
    let text = write_solution(&g.instance, &sol.schedule, &sol.production, obj).unwrap();
    let (schedule, prods, recorded) = parse_solution(&g.instance, &text).unwrap();
    assert_eq!(recorded, obj);
    assert_eq!(
        compute_objective(&g.instance, &schedule, &prods, ResidualMode::Summed).unwrap(),
        obj
    );
}

#[test]
fn empty_schedule_uses_the_sentinel_and_nan_is_rejected() {
    let g = generate_instance(&GeneratorParams::default()).unwrap();
    let empty = Schedule::empty(&g.instance);
    let text = write_solution(&g.instance, &empty, &g.witness.production, 0.0).unwrap();
    let file: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert!(file["ha"]
        .as_array()
        .unwrap()
        .iter()
        .flat_map(|r| r.as_array().unwrap())
        .all(|v| v == -1));

    let mut prods = g.witness.production.clone();
    prods[0].type2[0][0] = f64::NAN;
    assert!(matches!(
        write_solution(&g.instance, &g.witness.schedule, &prods, 0.0),
        Err(IoError::BadNumber(_))
    ));
}

#[test]
fn minimal_file_and_bound_order_error() {
    let text = r#"{
      "grid": {"hours_per_step": 1.0, "week_lengths": [1]},
      "type1": [{"pmin": [[0.0]], "pmax": [[10.0]], "cost": [[1.0]]}],
      "type2": [{"pmax": [5.0], "initial_fuel": 3.0, "final_fuel_price": 0.0,
                 "initial_campaign": {"threshold": 0.0, "max_modulation": 0.0, "profile": [[0.0, 1.0]]},
                 "cycles": []}],
      "scenarios": {"count": 1, "demand": [[4.0]], "epsilon": 0.0},
      "coupling": {"separations": [], "max_offline": [], "resources": [], "offline_capacity": []}
    }"#;
    let inst = parse_instance(text).unwrap();
    assert_eq!(
        (
            inst.type2.len(),
            inst.type1.len(),
            inst.scenario_count(),
            inst.steps()
        ),
        (1, 1, 1, 1)
    );

    let g = generate_instance(&GeneratorParams::default()).unwrap();
    let mut bad = g.instance.clone();
    bad.type2[0].cycles[0].min_refuel = bad.type2[0].cycles[0].max_refuel + 1.0;
    match parse_instance(&write_instance(&bad)) {
        Err(IoError::Model(ModelError::Validation { invariant, path })) => {
            assert!(invariant.contains("min_refuel <= max_refuel"));
            assert_eq!(path, "type2[0].cycles[0].min_refuel");
        }
        other => panic!("{other:?}"),
    }
    match parse_instance(r#"{"grid": {"hours_per_step": "x"}}"#) {
        Err(IoError::Parse { path, .. }) => assert_eq!(path, "grid.hours_per_step"),
        other => panic!("{other:?}"),
    }
}
