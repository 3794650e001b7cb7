//! Dominant mapping and feasible-set projection against reference solutions
//! computed by an interior-point conic solver (`tests/fixtures/generate.py`).

use adequa::mapping::{
    barrier_objective, compute_phi, empirical_margin, project_feasible, verify_domination, PhiConfig, PhiMethod,
};
use nalgebra::DMatrix;
use serde::Deserialize;

#[derive(Deserialize)]
struct ProjectionCase {
    lambda: Vec<f64>,
    mu: Vec<f64>,
    delta: f64,
    input: Vec<Vec<f64>>,
    projection: Vec<Vec<f64>>,
}

#[derive(Deserialize)]
struct PhiCase {
    lambda: Vec<f64>,
    mu: Vec<f64>,
    phi: Vec<Vec<f64>>,
    objective: f64,
}

fn load<T: for<'de> Deserialize<'de>>(name: &str) -> Vec<T> {
    let path = format!("{}/tests/fixtures/{name}", env!("CARGO_MANIFEST_DIR"));
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn matrix(rows: &[Vec<f64>]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), rows.len(), |i, j| rows[i][j])
}

#[test]
fn projection_matches_reference() {
    let cases: Vec<ProjectionCase> = load("projections.json");
    assert_eq!(cases.len(), 50);
    let mut worst = 0.0f64;
    for c in &cases {
        let p = project_feasible(&matrix(&c.input), &c.lambda, &c.mu, c.delta, 10_000).unwrap();
        let diff = (p.matrix() - matrix(&c.projection)).amax();
        worst = worst.max(diff);
        assert!(diff <= 1e-4, "max entry difference {diff}");
    }
    println!("projection: worst entry difference {worst:.2e}");
}

#[test]
fn dual_phi_matches_reference() {
    let cases: Vec<PhiCase> = load("phi.json");
    let cfg = PhiConfig::default();
    let mut worst = 0.0f64;
    for c in &cases {
        let p = compute_phi(&c.lambda, &c.mu, &cfg).unwrap();
        let diff = (p.matrix() - matrix(&c.phi)).amax();
        worst = worst.max(diff);
        assert!(diff <= 1e-5, "lambda {:?} mu {:?}: difference {diff}", c.lambda, c.mu);
        let (value, _) = barrier_objective(p.matrix(), &c.lambda, &c.mu);
        assert!(value <= c.objective + 1e-7, "objective {value} above reference {}", c.objective);
    }
    println!("dual: worst entry difference {worst:.2e}");
}

#[test]
fn subgradient_phi_is_feasible_and_near_reference() {
    let cases: Vec<PhiCase> = load("phi.json");
    let cfg = PhiConfig { method: PhiMethod::Subgradient, ..PhiConfig::default() };
    let mut gaps = Vec::new();
    let mut worst_diff = 0.0f64;
    for c in &cases {
        let p = compute_phi(&c.lambda, &c.mu, &cfg).unwrap();
        let floor = empirical_margin(&c.lambda, &c.mu) / std::f64::consts::E.sqrt() - 1e-6;
        assert!(verify_domination(&p, &c.lambda, &c.mu).iter().all(|m| *m >= floor));
        let (value, _) = barrier_objective(p.matrix(), &c.lambda, &c.mu);
        gaps.push(value - c.objective);
        worst_diff = worst_diff.max((p.matrix() - matrix(&c.phi)).norm());
    }
    gaps.sort_by(f64::total_cmp);
    let median = gaps[gaps.len() / 2];
    let worst = gaps[gaps.len() - 1];
    println!("subgradient: median suboptimality {median:.2e}, worst {worst:.2e}, worst Frobenius distance {worst_diff:.2e}");
    assert!(gaps[0] >= -1e-7, "beat the reference optimum by {}", -gaps[0]);
    assert!(median <= 5e-3);
    assert!(worst <= 0.3);
    assert!(worst_diff <= 0.2);
}

#[test]
fn easy_instance_reference_values() {
    let easy = &load::<PhiCase>("phi.json")[0];
    let expected = [
        [0.4643, 0.3214, 0.1786, 0.0357],
        [0.3214, 0.2738, 0.2262, 0.1786],
        [0.1786, 0.2262, 0.2738, 0.3214],
        [0.0357, 0.1786, 0.3214, 0.4643],
    ];
    let p = compute_phi(&easy.lambda, &easy.mu, &PhiConfig::default()).unwrap();
    for i in 0..4 {
        for j in 0..4 {
            assert!((p.get(i, j) - expected[i][j]).abs() < 1e-4);
        }
    }
}
