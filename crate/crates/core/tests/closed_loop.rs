//! Perfect sensor streams of a five-minute drive, replayed through the mechanization.

use mmfuse_core::geo::{EarthModel, GeodeticPosition, LocalFrame};
use mmfuse_core::ins::{mechanize_step, read_imu_csv, write_imu_csv};
use mmfuse_core::sim::{generate_trajectory, StopSpec, TrajectorySpec};

fn frame() -> LocalFrame {
    LocalFrame::new(GeodeticPosition::from_degrees(43.65, -79.38, 80.0).unwrap(), EarthModel::wgs84())
}

fn five_minute_drive() -> TrajectorySpec {
    TrajectorySpec {
        waypoints: vec![
            [0.0, 0.0],
            [0.0, 600.0],
            [400.0, 600.0],
            [400.0, 100.0],
            [150.0, 100.0],
            [150.0, 450.0],
            [-200.0, 450.0],
        ],
        stops: vec![StopSpec { at_m: 700.0, dwell_s: 20.0 }, StopSpec { at_m: 1500.0, dwell_s: 15.0 }],
        start_dwell_s: 5.0,
        end_dwell_s: 5.0,
        ..TrajectorySpec::default()
    }
}

#[test]
fn perfect_imu_reproduces_five_minute_truth() {
    let f = frame();
    let tr = generate_trajectory(&five_minute_drive(), &f, 1.5).unwrap();
    let duration = tr.samples.last().unwrap().t - tr.samples[0].t;
    assert!(duration >= 300.0, "drive lasts only {duration} s");

    // through the CSV layer first, as recorded streams would arrive
    let mut buf = Vec::new();
    write_imu_csv(&mut buf, &tr.imu).unwrap();
    let imu = read_imu_csv(buf.as_slice()).unwrap();
    assert_eq!(imu, tr.imu);

    let mut nav = tr.samples[0].nav;
    let mut worst: f64 = 0.0;
    for k in 1..tr.samples.len() {
        nav = mechanize_step(&nav, &imu[k], imu[k].t - imu[k - 1].t, &f.earth).unwrap();
        let err = f.to_enu(&nav.position).metric_distance(&f.to_enu(&tr.samples[k].nav.position));
        worst = worst.max(err);
    }
    assert!(worst <= 1e-3, "worst position error {worst} m");
}

#[test]
fn odometer_matches_truth_speed() {
    let f = frame();
    let tr = generate_trajectory(&five_minute_drive(), &f, 1.5).unwrap();
    for o in &tr.odometer {
        let s = tr.nearest(o.t);
        assert!((s.t - o.t).abs() < 1e-9);
        assert!((o.speed - s.nav.velocity.norm()).abs() < 1e-9, "t {}", o.t);
    }
    assert!(tr.odometer.iter().filter(|o| o.speed == 0.0).count() > 300, "stops are missing");
}
