use std::f64::consts::PI;

use freqmpc::grid::{
    build_one_area, build_two_area_coupled, discretize, plant_derivative, AreaInputs, AreaParams, BatteryParams,
    PlantParams, PlantState, TieLineParams, Topology,
};
use freqmpc::sim::integrate_plant;
use proptest::prelude::*;

fn area() -> AreaParams {
    AreaParams {
        f0: 50.0,
        inertia: 6.0,
        base_power: 1.0,
        load_damping: 66.67,
    }
}

fn battery() -> BatteryParams {
    BatteryParams {
        capacity: 50.0,
        self_discharge: 0.0,
        power_min: -0.15,
        power_max: 0.15,
        soc_min: -0.75,
        soc_max: 0.75,
        ramp_per_step: 1.0,
    }
}

#[test]
fn normalized_coefficients() {
    let a = area();
    // Δḟ = f0/(2 H S_B)·(ΔP − Δf/D_l), divided through by f0
    assert!((a.a_freq() - (-50.0 / (2.0 * 6.0 * 66.67))).abs() < 1e-15);
    assert!((a.b_norm() - 1.0 / 12.0).abs() < 1e-15);
    let m = build_one_area(&a, &battery()).unwrap();
    assert_eq!(m.b[(1, 1)], -1.0 / 50.0);
    assert_eq!(m.b[(1, 0)], 0.0);
}

#[test]
fn zoh_entries_closed_form() {
    let a = area();
    let ts = 0.1;
    let d = discretize(&build_one_area(&a, &battery()).unwrap(), ts).unwrap();
    let lam = a.a_freq();
    assert!((d.a_d[(0, 0)] - (lam * ts).exp()).abs() < 1e-12);
    let b = a.b_norm() * ((lam * ts).exp() - 1.0) / lam;
    assert!((d.b_d[(0, 0)] - b).abs() < 1e-14);
    assert!((d.b_d[(0, 1)] - b).abs() < 1e-14);
    assert!((d.b_d[(1, 1)] + ts / 50.0).abs() < 1e-15);
    assert!((d.a_d[(1, 1)] - 1.0).abs() < 1e-15);
}

fn two_area_plant(p_hat: f64) -> PlantParams {
    PlantParams {
        areas: vec![(area(), battery()); 2],
        tie: TieLineParams { p_hat },
    }
}

#[test]
fn coupled_model_is_the_jacobian_of_the_plant() {
    let params = two_area_plant(0.2);
    let lin = build_two_area_coupled(&area(), &area(), &battery(), &battery(), &params.tie).unwrap();
    let inputs = [AreaInputs::default(); 2];
    let h = 1e-6;
    for j in 0..5 {
        let mut xp = vec![0.0; 5];
        let mut xm = vec![0.0; 5];
        xp[j] = h;
        xm[j] = -h;
        let fp = plant_derivative(&PlantState::from_values(Topology::TwoArea, xp).unwrap(), &inputs, &params);
        let fm = plant_derivative(&PlantState::from_values(Topology::TwoArea, xm).unwrap(), &inputs, &params);
        for i in 0..5 {
            let fd = (fp[i] - fm[i]) / (2.0 * h);
            assert!((fd - lin.a[(i, j)]).abs() < 1e-6 * lin.a[(i, j)].abs().max(1.0), "a[{i},{j}]");
        }
    }
    // input columns: disturbance and battery of each area
    let x0 = PlantState::zero(Topology::TwoArea);
    let f0 = plant_derivative(&x0, &inputs, &params);
    for (col, (area_idx, field)) in [(0, 0), (0, 1), (1, 0), (1, 1)].into_iter().enumerate() {
        let mut inp = inputs;
        if field == 0 {
            inp[area_idx].disturbance = 1.0;
        } else {
            inp[area_idx].battery = 1.0;
        }
        let f1 = plant_derivative(&x0, &inp, &params);
        for i in 0..5 {
            assert!((f1[i] - f0[i] - lin.b[(i, col)]).abs() < 1e-14, "b[{i},{col}]");
        }
    }
    assert_eq!(lin.a[(4, 0)], 2.0 * PI * 50.0);
}

#[test]
fn rk4_matches_zoh_in_the_linear_regime() {
    let params = PlantParams {
        areas: vec![(area(), battery())],
        tie: TieLineParams { p_hat: 0.0 },
    };
    let d = discretize(&build_one_area(&area(), &battery()).unwrap(), 0.1).unwrap();
    let held = [AreaInputs {
        disturbance: 0.02,
        battery: -0.07,
        generation: 0.0,
        droop_gain: 0.0,
    }];
    let mut plant = PlantState::from_values(Topology::OneArea, vec![0.003, -0.2]).unwrap();
    let mut x = plant.values().to_vec();
    for k in 0..50 {
        plant = integrate_plant(&plant, &held, &params, k as f64 * 0.1, 0.01, 10, &|_, _| 0.0).unwrap();
        x = d.step(&x, &[0.02, -0.07]);
        for (a, b) in plant.values().iter().zip(&x) {
            assert!((a - b).abs() < 1e-9);
        }
    }
}

fn held(droop_gain: f64) -> [AreaInputs; 2] {
    [
        AreaInputs {
            disturbance: 0.1,
            battery: 0.05,
            generation: 0.0,
            droop_gain,
        },
        AreaInputs::default(),
    ]
}

fn end_state(droop_gain: f64, dt: f64, substeps: usize) -> Vec<f64> {
    let params = two_area_plant(0.2);
    let x0 = PlantState::from_values(Topology::TwoArea, vec![0.002, 0.1, -0.001, 0.0, 0.8]).unwrap();
    let fault = |t: f64, i: usize| if i == 0 { 0.05 * (2.0 * PI * 0.4 * t).sin() } else { 0.0 };
    integrate_plant(&x0, &held(droop_gain), &params, 0.0, dt, substeps, &fault)
        .unwrap()
        .values()
        .to_vec()
}

#[test]
fn rk4_step_doubling_without_droop() {
    let coarse = end_state(0.0, 0.01, 10);
    let fine = end_state(0.0, 0.005, 20);
    for (a, b) in coarse.iter().zip(&fine) {
        assert!((a - b).abs() <= 1e-8);
    }
}

#[test]
fn rk4_is_fourth_order_with_droop() {
    // the droop loop adds a fast mode near -21 1/s, so check the rate
    let e1 = end_state(5.0, 0.01, 10);
    let e2 = end_state(5.0, 0.005, 20);
    let e3 = end_state(5.0, 0.0025, 40);
    for i in [0, 4] {
        let order = ((e1[i] - e2[i]) / (e2[i] - e3[i])).log2();
        assert!((order - 4.0).abs() < 0.3, "state {i}: observed order {order}");
    }
}

#[test]
fn tie_flow_leaves_one_area_and_enters_the_other() {
    let params = two_area_plant(0.2);
    let x = PlantState::from_values(Topology::TwoArea, vec![0.0, 0.0, 0.0, 0.0, 0.6]).unwrap();
    let f = plant_derivative(&x, &[AreaInputs::default(); 2], &params);
    // equal inertias: the two frequency rates cancel
    assert!((f[0] + f[2]).abs() < 1e-16);
    assert!((f[0] + area().b_norm() * 0.2 * 0.6f64.sin()).abs() < 1e-16);
}

proptest! {
    #[test]
    fn discretization_is_a_semigroup(
        h in 1.0f64..10.0, dl in 10.0f64..100.0, c in 1.0f64..100.0, v in 0.0f64..0.1,
        t1 in 0.01f64..0.5, t2 in 0.01f64..0.5,
    ) {
        let a = AreaParams { f0: 50.0, inertia: h, base_power: 1.0, load_damping: dl };
        let b = BatteryParams { capacity: c, self_discharge: v, ..battery() };
        let m = build_one_area(&a, &b).unwrap();
        let d1 = discretize(&m, t1).unwrap();
        let d2 = discretize(&m, t2).unwrap();
        let d12 = discretize(&m, t1 + t2).unwrap();
        let prod = &d2.a_d * &d1.a_d;
        prop_assert!(prod.sub(&d12.a_d).max_abs() < 1e-13);
        // B_d(t1+t2) = A_d(t2)·B_d(t1) + B_d(t2)
        let b12 = (&d2.a_d * &d1.b_d).add(&d2.b_d);
        prop_assert!(b12.sub(&d12.b_d).max_abs() < 1e-13);
    }

    #[test]
    fn discrete_free_response_decays(h in 1.0f64..10.0, dl in 10.0f64..100.0) {
        let a = AreaParams { f0: 50.0, inertia: h, base_power: 1.0, load_damping: dl };
        let d = discretize(&build_one_area(&a, &battery()).unwrap(), 0.1).unwrap();
        prop_assert!(d.a_d[(0, 0)] > 0.0 && d.a_d[(0, 0)] < 1.0);
        prop_assert_eq!(d.a_d[(0, 1)], 0.0);
    }
}
