use spillover_ffi::*;
use std::ffi::{CStr, CString};
use std::ptr;

fn last_error() -> String {
    let p = spillover_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn logit_params(interaction: f64) -> *mut SpilloverParams {
    let cov = [0.3, 0.05];
    let mut p = ptr::null_mut();
    let st = unsafe {
        spillover_params_new(
            SpilloverDist::Logit,
            -0.012,
            0.00002,
            cov.as_ptr(),
            cov.len(),
            interaction,
            -0.5,
            &mut p,
        )
    };
    assert_eq!(st, SpilloverStatus::Ok);
    p
}

#[test]
fn contraction_bounds() {
    assert_eq!(spillover_contraction_bound(SpilloverDist::Logit), 4.0);
    let probit = spillover_contraction_bound(SpilloverDist::Probit);
    assert!((probit - (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-12);
}

#[test]
fn null_arguments_are_rejected() {
    let st = unsafe { spillover_dataset_read_csv(ptr::null(), ptr::null_mut()) };
    assert_eq!(st, SpilloverStatus::InvalidArgument);
    let mut ds = ptr::null_mut();
    let st = unsafe { spillover_dataset_read_csv(ptr::null(), &mut ds) };
    assert_eq!(st, SpilloverStatus::InvalidArgument);
    assert!(ds.is_null());
    assert!(last_error().contains("path"));
    unsafe {
        spillover_dataset_free(ptr::null_mut());
        spillover_params_free(ptr::null_mut());
        spillover_fit_free(ptr::null_mut());
        assert_eq!(spillover_fit_len(ptr::null()), 0);
        assert!(spillover_fit_loglik(ptr::null()).is_nan());
    }
}

#[test]
fn missing_file_is_an_input_error() {
    let path = CString::new("/nonexistent/households.csv").unwrap();
    let mut ds = ptr::null_mut();
    let st = unsafe { spillover_dataset_read_csv(path.as_ptr(), &mut ds) };
    assert_eq!(st, SpilloverStatus::InputError);
    assert!(ds.is_null());
    assert!(!last_error().is_empty());
}

#[test]
fn non_finite_parameters_are_rejected() {
    let mut p = ptr::null_mut();
    let st = unsafe {
        spillover_params_new(SpilloverDist::Probit, f64::NAN, 0.0, ptr::null(), 0, 0.0, 0.0, &mut p)
    };
    assert_eq!(st, SpilloverStatus::InputError);
    assert!(p.is_null());
}

#[test]
fn demand_probability_at_zero_index_is_one_half() {
    let mut p = ptr::null_mut();
    let st = unsafe {
        spillover_params_new(SpilloverDist::Logit, -0.01, 0.0, ptr::null(), 0, 2.0, 0.0, &mut p)
    };
    assert_eq!(st, SpilloverStatus::Ok);
    let mut q = 0.0;
    // -0.01 * 100 + 2 * 0.5 = 0
    let st = unsafe { spillover_demand_probability(p, 100.0, 0.0, ptr::null(), 0, 0.5, 0.0, &mut q) };
    assert_eq!(st, SpilloverStatus::Ok);
    assert!((q - 0.5).abs() < 1e-15);
    let bad = [1.0];
    let st = unsafe { spillover_demand_probability(p, 100.0, 0.0, bad.as_ptr(), 1, 0.5, 0.0, &mut q) };
    assert_eq!(st, SpilloverStatus::InputError);
    unsafe { spillover_params_free(p) };
}

#[test]
fn simulate_fit_and_evaluate() {
    let truth = logit_params(1.5);
    let mut ds = ptr::null_mut();
    assert_eq!(unsafe { spillover_dataset_simulate(truth, 3, 400, 5, &mut ds) }, SpilloverStatus::Ok);
    assert_eq!(unsafe { spillover_dataset_household_count(ds) }, 1200);
    assert_eq!(unsafe { spillover_dataset_village_count(ds) }, 3);

    let mut fit = ptr::null_mut();
    let st = unsafe { spillover_fit(ds, SpilloverEstimator::Br, SpilloverDist::Logit, true, &mut fit) };
    assert_eq!(st, SpilloverStatus::Ok);
    let n = unsafe { spillover_fit_len(fit) };
    assert_eq!(n, 6);
    let names: Vec<String> = (0..n)
        .map(|i| unsafe { CStr::from_ptr(spillover_fit_name(fit, i)) }.to_string_lossy().into_owned())
        .collect();
    assert_eq!(names, ["price", "wealth", "children", "female_edu", "interaction", "intercept"]);
    assert!(unsafe { spillover_fit_name(fit, n) }.is_null());
    let mut est = vec![0.0; n];
    let mut se = vec![0.0; n];
    assert_eq!(
        unsafe { spillover_fit_values(fit, est.as_mut_ptr(), se.as_mut_ptr(), n) },
        SpilloverStatus::Ok
    );
    assert!(se.iter().all(|s| *s > 0.0));
    assert!(est[0] < 0.0);
    assert_eq!(
        unsafe { spillover_fit_values(fit, est.as_mut_ptr(), ptr::null_mut(), n - 1) },
        SpilloverStatus::InvalidArgument
    );
    assert!(unsafe { spillover_fit_loglik(fit) } < 0.0);

    let mut fitted = ptr::null_mut();
    assert_eq!(unsafe { spillover_fit_params(fit, &mut fitted) }, SpilloverStatus::Ok);
    assert_eq!(unsafe { spillover_params_interaction(fitted) }, est[4]);

    let (mut pi0, mut pi1) = (0.0, 0.0);
    let st = unsafe { spillover_village_equilibrium(ds, truth, 1, 150.0, 50.0, f64::INFINITY, &mut pi0, &mut pi1) };
    assert_eq!(st, SpilloverStatus::Ok);
    assert!(pi1 > pi0 && pi0 > 0.0 && pi1 < 1.0);
    let st = unsafe { spillover_village_equilibrium(ds, truth, 99, 150.0, 50.0, 1e4, &mut pi0, &mut pi1) };
    assert_eq!(st, SpilloverStatus::InputError);
    assert!(last_error().contains("99"));

    let mut w = SpilloverWelfare::default();
    let st = unsafe { spillover_policy_welfare(ds, truth, 150.0, 50.0, 15000.0, 0.75, &mut w) };
    assert_eq!(st, SpilloverStatus::Ok);
    assert!((w.spending - w.net_gain - w.deadweight_loss).abs() < 1e-9);
    assert!(w.takeup1 > w.takeup0);
    let st = unsafe { spillover_policy_welfare(ds, truth, 150.0, 50.0, 15000.0, 2.0, &mut w) };
    assert_eq!(st, SpilloverStatus::InputError);

    unsafe {
        spillover_params_free(fitted);
        spillover_fit_free(fit);
        spillover_dataset_free(ds);
        spillover_params_free(truth);
    }
}

#[test]
fn header_is_valid_c() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/spillover.h");
    let text = std::fs::read_to_string(header).unwrap();
    for f in ["spillover_fit", "spillover_last_error", "spillover_policy_welfare", "SPILLOVER_STATUS_SOLVER_ERROR"] {
        assert!(text.contains(f), "{f} missing from header");
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"spillover.h\"\nint main(void) { SpilloverParams *p = 0; \
         return spillover_params_new(SPILLOVER_DIST_LOGIT, -1, 0, 0, 0, 0, 0, &p) == SPILLOVER_STATUS_OK ? 0 : 1; }\n",
    )
    .unwrap();
    let Ok(status) = std::process::Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(concat!(env!("CARGO_MANIFEST_DIR"), "/include"))
        .arg(&src)
        .status()
    else {
        eprintln!("no C compiler; header syntax check skipped");
        return;
    };
    assert!(status.success());
}
