use enkf_demo::{potential_decay, taper_samples, TwinRun};

#[test]
fn taper_curve_endpoints() {
    let gc = taper_samples("gc", 2.0, "half", 4.0, 9).unwrap();
    assert_eq!(gc.len(), 9);
    assert_eq!(gc[0], 1.0);
    assert_eq!(gc[8], 0.0);
    let full = taper_samples("gc", 4.0, "full", 4.0, 9).unwrap();
    assert_eq!(full, gc);
    assert!(taper_samples("triangle", 2.0, "half", 4.0, 9).is_err());
    assert!(taper_samples("gc", 2.0, "half", 4.0, 1).is_err());
}

#[test]
fn potential_trace_has_one_entry_per_step_and_decays() {
    for filter in ["cenkf1", "cenkf2"] {
        let trace = potential_decay(filter, 8, 1.02, 6.0, 3, 20).unwrap();
        assert_eq!(trace.len(), 9);
        assert!(trace.last().unwrap() < &trace[0], "{filter}: {trace:?}");
    }
    assert!(potential_decay("denkf", 4, 1.02, 6.0, 3, 0).is_err());
}

#[test]
fn twin_run_tracks_truth() {
    let mut run = TwinRun::create("cenkf1", 1.02, 6.0, 1).unwrap();
    assert_eq!(run.advance(200), 200);
    assert_eq!(run.cycles(), 200);
    assert!(run.failure().is_none());
    let rmse = run.analysis_rmse();
    let late: f64 = rmse[100..].iter().sum::<f64>() / 100.0;
    assert!(late < 1.0, "{late}");
    assert_eq!(run.truth().len(), 40);
    assert_eq!(run.members().len(), 40 * run.member_count());
    assert_eq!(run.observed_indices().len(), 20);
}

#[test]
fn unknown_filter_rejected() {
    assert!(TwinRun::create("kalman", 1.0, 4.0, 0).is_err());
}
