//! Simulator soundness: rest fixed point, action-reaction bookkeeping,
//! energy dissipation, grasp fidelity, collision, and the grasp-force
//! identity under uniform uniaxial stretch.

use ecloth::clothsim::{Cloth, GripperAction, SimConfig};
use ecloth::material::{MaterialLaw, SampleGeometry};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn cloth(rows: usize, cols: usize, law: MaterialLaw) -> Cloth {
    let g = SampleGeometry::new(0.18, 0.18e-3, rows, cols).unwrap();
    let config = SimConfig::default_for(&g);
    Cloth::new(g, law, config).unwrap()
}

#[test]
fn build_counts() {
    let c = cloth(25, 25, MaterialLaw::linear(0, 1e5).unwrap());
    let s = c.rest_state();
    assert_eq!(s.positions.len(), 625);
    assert_eq!(s.grasp_left.len() + s.grasp_right.len(), 50);
    let c = cloth(12, 12, MaterialLaw::linear(0, 1e5).unwrap());
    assert_eq!(c.rest_state().positions.len(), 144);
    let c = cloth(2, 2, MaterialLaw::linear(0, 1e5).unwrap());
    assert_eq!(c.rest_state().positions.len(), 4);
}

#[test]
fn rest_state_is_exact_fixed_point() {
    let c = cloth(15, 15, MaterialLaw::linear(0, 2e5).unwrap());
    let state = c.rest_state();
    let (forces, skipped) = c.internal_forces(&state);
    assert_eq!(skipped, 0);
    assert!(forces.iter().all(|f| f == &[0.0, 0.0, 0.0]));

    // Zero action, zero gravity: bitwise unchanged, zero force.
    let mut s = state.clone();
    let reading = c.step(&mut s, &GripperAction::zero()).unwrap();
    assert_eq!(reading.magnitude, 0.0);
    assert_eq!(s.positions, state.positions);
    assert_eq!(s.velocities, state.velocities);
}

#[test]
fn hooke_tension_arithmetic() {
    // Tension of one structural spring: σ(ε)·a = 1000·0.05·1e-4 = 5e-3 N.
    let law = MaterialLaw::linear(0, 1000.0).unwrap();
    let tension = law.stress_at(0.05).unwrap() * 1e-4;
    assert!((tension - 5e-3).abs() < 1e-15);
}

#[test]
fn newtons_third_law_on_random_states() {
    let c = cloth(4, 4, MaterialLaw::piecewise(0, vec![5e4, 2e5], vec![0.15]).unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let mut s = c.rest_state();
        for p in s.positions.iter_mut() {
            for v in p.iter_mut() {
                *v += rng.gen_range(-0.02..0.02);
            }
        }
        let (forces, _) = c.internal_forces(&s);
        let mut sum = [0.0; 3];
        for f in &forces {
            sum[0] += f[0];
            sum[1] += f[1];
            sum[2] += f[2];
        }
        for v in sum {
            assert!(v.abs() < 1e-9, "net internal force {v}");
        }
    }
}

#[test]
fn energy_non_increasing_without_input() {
    let law = MaterialLaw::linear(0, 1e5).unwrap();
    let g = SampleGeometry::new(0.18, 0.18e-3, 6, 6).unwrap();
    let mut config = SimConfig::default_for(&g);
    config.gravity = [0.0; 3];
    let probe = Cloth::new(g, law.clone(), config.clone()).unwrap();
    let settle = probe.settle_params();
    config.dt = settle.sub_dt * 8.0;
    config.substeps = 8;
    let c = Cloth::new(g, law, config).unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _trial in 0..10 {
        let mut s = c.rest_state();
        for (i, p) in s.positions.iter_mut().enumerate() {
            if i % 6 != 0 && i % 6 != 5 {
                for v in p.iter_mut() {
                    *v += rng.gen_range(-0.003..0.003);
                }
            }
        }
        let mut energy = c.elastic_energy(&s) + c.kinetic_energy(&s);
        for _ in 0..50 {
            c.step(&mut s, &GripperAction::zero()).unwrap();
            let next = c.elastic_energy(&s) + c.kinetic_energy(&s);
            assert!(
                next <= energy * (1.0 + 1e-9) + 1e-15,
                "energy grew: {energy} -> {next}"
            );
            energy = next;
        }
    }
}

#[test]
fn grasp_displacement_is_exact() {
    let c = cloth(8, 8, MaterialLaw::linear(0, 1e5).unwrap());
    let mut s = c.rest_state();
    let before: Vec<[f64; 3]> = s.grasp_right.iter().map(|&i| s.positions[i]).collect();
    let action = GripperAction {
        left: [0.0; 3],
        right: [0.001, 0.0, -0.002],
    };
    c.step(&mut s, &action).unwrap();
    for (&i, b) in s.grasp_right.iter().zip(before.iter()) {
        // One kinematic assignment: bitwise equality of the sum.
        assert_eq!(s.positions[i][0], b[0] + 0.001);
        assert_eq!(s.positions[i][1], b[1]);
        assert_eq!(s.positions[i][2], b[2] + -0.002);
    }
}

#[test]
fn uniform_stretch_force_identity() {
    // Linear E = 1.5e5 Pa stretched to ε = 0.2: grasp force ≈ σ·A₀ = 5.4 N.
    let law = MaterialLaw::linear(0, 1.5e5).unwrap();
    let g = SampleGeometry::new(0.18, 0.18e-3, 15, 15).unwrap();
    let mut config = SimConfig::default_for(&g);
    config.gravity = [0.0; 3];
    let c = Cloth::new(g, law, config).unwrap();
    let settle = c.settle_params();
    let mut s = c.rest_state();
    let mut reading = None;
    for _ in 0..40 {
        let r = c
            .step_settled(&mut s, &GripperAction::stretch_x(0.005 * 0.18), &settle)
            .unwrap();
        reading = Some(r);
    }
    let f = reading.unwrap().magnitude;
    let expect = 3.0e4 * 0.18e-3;
    assert!(
        (f - expect).abs() / expect < 0.02,
        "grasp force {f} N vs σ·A₀ = {expect} N"
    );
}

#[test]
fn stiffer_law_never_reads_less_force() {
    let g = SampleGeometry::new(0.18, 0.18e-3, 8, 8).unwrap();
    let mut config = SimConfig::default_for(&g);
    config.gravity = [0.0; 3];
    let soft = Cloth::new(g, MaterialLaw::linear(0, 8e4).unwrap(), config.clone()).unwrap();
    let stiff = Cloth::new(g, MaterialLaw::linear(1, 4e5).unwrap(), config).unwrap();
    let (sp_soft, sp_stiff) = (soft.settle_params(), stiff.settle_params());
    let mut s1 = soft.rest_state();
    let mut s2 = stiff.rest_state();
    for _ in 0..25 {
        let a = GripperAction::stretch_x(0.008 * 0.18);
        let f1 = soft.step_settled(&mut s1, &a, &sp_soft).unwrap().magnitude;
        let f2 = stiff.step_settled(&mut s2, &a, &sp_stiff).unwrap().magnitude;
        assert!(f2 >= f1, "stiff {f2} < soft {f1}");
    }
}

#[test]
fn sphere_collision_never_penetrates() {
    let law = MaterialLaw::linear(0, 1e5).unwrap();
    let g = SampleGeometry::new(0.18, 0.18e-3, 9, 9).unwrap();
    let mut config = SimConfig::default_for(&g);
    config.gravity = [0.0, 0.0, -9.81];
    config.sphere_center = [0.09, 0.0, -0.26];
    config.sphere_radius = 0.05;
    let c = Cloth::new(g, law, config.clone()).unwrap();
    let settle = c.settle_params();
    let mut s = c.rest_state();
    let mut min_clearance = f64::INFINITY;
    for _ in 0..45 {
        c.step_settled(&mut s, &GripperAction::both([0.0, 0.0, -0.004]), &settle)
            .unwrap();
        for p in &s.positions {
            let d = [
                p[0] - config.sphere_center[0],
                p[1] - config.sphere_center[1],
                p[2] - config.sphere_center[2],
            ];
            let dist = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
            min_clearance = min_clearance.min(dist - config.sphere_radius);
        }
    }
    assert!(
        min_clearance >= -1e-6,
        "sphere penetrated by {} m",
        -min_clearance
    );
    // The cloth actually met the sphere, otherwise the check is vacuous.
    assert!(min_clearance < 0.01, "cloth never approached the sphere");
}

#[test]
fn instability_reports_offending_node() {
    let law = MaterialLaw::linear(0, 1e6).unwrap();
    let g = SampleGeometry::new(0.18, 0.18e-3, 6, 6).unwrap();
    let mut config = SimConfig::default_for(&g);
    // Grossly unstable step size.
    config.dt = 0.5;
    config.substeps = 64;
    let c = Cloth::new(g, law, config).unwrap();
    let mut s = c.rest_state();
    let mut saw_error = false;
    for _ in 0..50 {
        match c.step(&mut s, &GripperAction::stretch_x(0.01)) {
            Err(ecloth::Error::Instability { .. }) => {
                saw_error = true;
                break;
            }
            Err(e) => panic!("unexpected error {e}"),
            Ok(_) => {}
        }
    }
    assert!(saw_error, "expected an instability error");
}

#[test]
fn degenerate_spring_skipped_with_counter() {
    let c = cloth(3, 3, MaterialLaw::linear(0, 1e5).unwrap());
    let mut s = c.rest_state();
    s.positions[4] = s.positions[5]; // coincident nodes
    let (forces, skipped) = c.internal_forces(&s);
    assert!(skipped >= 1);
    assert!(forces.iter().all(|f| f.iter().all(|v| v.is_finite())));
}
