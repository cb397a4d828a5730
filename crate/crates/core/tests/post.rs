use fpm_core::assembly::{assemble_global, AssemblyOptions, DiffusionTensorField};
use fpm_core::geometry::{build_voxel_partition, Point};
use fpm_core::ionic::{IonicModel, MitchellSchaeffer, Region, StimulusProtocol};
use fpm_core::post::{compute_apd90, compute_lat, cv_probe_nodes, ProbeTrace};
use fpm_core::shape::build_shape_functions;
use fpm_core::stepper::{run_simulation, Recording, RunResult, Simulation, SimulationState, TimeIntegrationPlan};

/// Paced 2 cm strip, 0.5 mm spacing; probes at 25% and 75% along x.
fn strip(start: f64, total: f64) -> (RunResult, f64) {
    let h = 0.05;
    let part = build_voxel_partition(&[40, 3], &[h, h], &[0.0, 0.0]).unwrap();
    let tensors = DiffusionTensorField::uniform(2, part.len(), Point::x(), 0.0013, 0.15).unwrap();
    let shapes = build_shape_functions(&part).unwrap();
    let ops = assemble_global(&part, &shapes, &tensors, &AssemblyOptions::default()).unwrap();
    let model = MitchellSchaeffer::default();
    let stimuli = [StimulusProtocol {
        region: Region::Box {
            min: Point::new(-1.0, -1.0, 0.0),
            max: Point::new(0.1, 1.0, 0.0),
        },
        amplitude: 50.0,
        duration: 1.0,
        period: None,
        start,
    }];
    let plan = TimeIntegrationPlan {
        total,
        ..Default::default()
    };
    let (a, b) = cv_probe_nodes(part.points(), 2, 0, 0.25, 0.75).unwrap();
    let mut recording = Recording::new(-30.0);
    recording.probes = vec![("a".into(), a), ("b".into(), b)];
    let sim = Simulation {
        positions: part.points(),
        operators: &ops,
        model: &model,
        stimuli: &stimuli,
        plan: &plan,
    };
    let state = SimulationState::resting(part.len(), &model);
    let r = run_simulation(&sim, state, &recording, &mut |_, _, _| Ok(())).unwrap();
    let distance = (part.points()[b] - part.points()[a]).norm();
    (r, distance)
}

#[test]
fn delayed_stimulus_shifts_activation_times() {
    let (early, _) = strip(0.0, 80.0);
    let (late, _) = strip(5.0, 85.0);
    let mut compared = 0;
    for (a, b) in early.activation.lat.iter().zip(&late.activation.lat) {
        assert_eq!(a.is_finite(), b.is_finite());
        if a.is_finite() {
            assert!((b - a - 5.0).abs() <= 0.1, "{a} -> {b}");
            compared += 1;
        }
    }
    assert!(compared > 100);
}

fn every_other(tr: &ProbeTrace) -> (Vec<f64>, Vec<f64>) {
    (
        tr.times.iter().step_by(2).copied().collect(),
        tr.values.iter().step_by(2).copied().collect(),
    )
}

#[test]
fn conduction_velocity_survives_resampling() {
    let (r, distance) = strip(0.0, 80.0);
    let [a, b] = &r.traces[..] else { unreachable!() };
    let full = distance / (compute_lat(&b.times, &b.values, -30.0) - compute_lat(&a.times, &a.values, -30.0));
    let ((ta, va), (tb, vb)) = (every_other(a), every_other(b));
    let half = distance / (compute_lat(&tb, &vb, -30.0) - compute_lat(&ta, &va, -30.0));
    assert!(full.is_finite() && full > 0.0);
    assert!((half / full - 1.0).abs() <= 0.01, "{full} vs {half}");
}

#[test]
fn apd_ignores_a_voltage_offset() {
    let (r, _) = strip(0.0, 400.0);
    let tr = &r.traces[0];
    let apd = compute_apd90(&tr.times, &tr.values);
    assert!(apd.is_finite() && apd > 100.0, "{apd}");
    for offset in [-37.5, 12.25, 1000.0] {
        let shifted: Vec<f64> = tr.values.iter().map(|v| v + offset).collect();
        let s = compute_apd90(&tr.times, &shifted);
        assert!((s - apd).abs() <= 1e-9 * apd, "offset {offset}: {s} vs {apd}");
    }
}

#[test]
fn trace_lat_matches_activation_map() {
    let (r, _) = strip(0.0, 80.0);
    let model = MitchellSchaeffer::default();
    let threshold = 0.5 * (model.resting_potential() + model.peak_potential());
    for tr in &r.traces {
        let from_trace = tr.lat(threshold);
        assert!((from_trace - r.activation.lat[tr.node]).abs() <= 1e-12);
    }
}
