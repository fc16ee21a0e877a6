use std::ffi::{c_char, CStr};
use std::ptr;

use lamperti_lab_ffi::*;

fn last_error() -> String {
    unsafe {
        let n = ll_last_error_message(ptr::null_mut(), 0);
        let mut buf = vec![0 as c_char; n];
        ll_last_error_message(buf.as_mut_ptr(), n);
        CStr::from_ptr(buf.as_ptr()).to_string_lossy().into_owned()
    }
}

fn params(kappa: f64, sigma: f64, kingman: f64) -> *mut LlParams {
    unsafe {
        let mut p = ptr::null_mut();
        assert_eq!(ll_params_new(kappa, sigma, kingman, &mut p), LlStatus::Ok);
        p
    }
}

#[test]
fn version_matches_crate() {
    let v = unsafe { CStr::from_ptr(ll_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn pair_rate_adds_kingman_mass() {
    unsafe {
        let p = params(0.0, 0.5, 0.75);
        let mut r = 0.0;
        assert_eq!(ll_params_pair_rate(p, &mut r), LlStatus::Ok);
        assert!((r - 1.0).abs() < 1e-15);
        ll_params_free(p);
    }
}

#[test]
fn beta_merger_rate_matches_beta_function() {
    unsafe {
        let mut p = ptr::null_mut();
        assert_eq!(ll_params_new_beta(0.0, 0.0, 0.0, 1.5, 1.0, &mut p), LlStatus::Ok);
        // beta_{3,3} = B(1.5, 1.5) = pi / 8
        let mut r = 0.0;
        assert_eq!(ll_params_merger_rate(p, 3, 3, &mut r), LlStatus::Ok);
        assert!((r - std::f64::consts::PI / 8.0).abs() < 1e-12, "{r}");
        assert_eq!(ll_params_merger_rate(p, 3, 4, &mut r), LlStatus::InvalidArgument);
        assert!(last_error().contains("2 <= i <= j"));
        ll_params_free(p);
    }
}

#[test]
fn atoms_rates_and_bad_input() {
    unsafe {
        let (z, m) = ([0.5], [2.0]);
        let mut p = ptr::null_mut();
        assert_eq!(
            ll_params_new_atoms(0.0, 0.0, 0.0, z.as_ptr(), m.as_ptr(), 1, &mut p),
            LlStatus::Ok
        );
        let mut r = 0.0;
        assert_eq!(ll_params_merger_rate(p, 4, 2, &mut r), LlStatus::Ok);
        assert!((r - 0.5).abs() < 1e-15);
        ll_params_free(p);

        let mut q = ptr::null_mut();
        assert_eq!(
            ll_params_new_atoms(0.0, 0.0, 0.0, ptr::null(), m.as_ptr(), 1, &mut q),
            LlStatus::NullPointer
        );
        assert!(q.is_null());
        assert_eq!(
            ll_params_new_beta(0.0, 1.0, 0.0, 2.5, 1.0, &mut q),
            LlStatus::InvalidArgument
        );
        assert_eq!(ll_params_new(0.0, 1.0, -1.0, &mut q), LlStatus::InvalidArgument);
        assert_eq!(ll_params_new(0.0, 1.0, 0.0, ptr::null_mut()), LlStatus::NullPointer);
        assert_eq!(last_error(), "null pointer: out");
    }
}

#[test]
fn kingman_absorption_mean() {
    unsafe {
        // E[T] from 10 singletons at pair rate 1: sum_{k=2}^{10} 2/(k(k-1)) = 1.8
        let p = params(0.0, 1.0, 0.0);
        let mut sim = ptr::null_mut();
        assert_eq!(ll_coalescent_new(p, 10, &mut sim), LlStatus::Ok);
        let n = 20_000;
        let mut sum = 0.0;
        let mut out = LlCoalescentSummary {
            absorption_time: 0.0,
            final_blocks: 0,
            events: 0,
        };
        for i in 0..n {
            assert_eq!(ll_coalescent_simulate(sim, 1e6, 11, i, &mut out), LlStatus::Ok);
            assert_eq!(out.final_blocks, 1);
            assert_eq!(out.events, 9);
            sum += out.absorption_time;
        }
        let mean = sum / n as f64;
        // sd of T is about 1.1
        assert!((mean - 1.8).abs() < 4.0 * 1.1 / (n as f64).sqrt(), "{mean}");

        let mut again = out;
        ll_coalescent_simulate(sim, 1e6, 11, n - 1, &mut again);
        assert_eq!(again, out);
        assert_eq!(ll_coalescent_simulate(sim, 1e-9, 11, 0, &mut out), LlStatus::Ok);
        assert!(out.absorption_time.is_nan());
        ll_coalescent_free(sim);
        ll_params_free(p);
    }
}

#[test]
fn battery_handle() {
    unsafe {
        let mut b = ptr::null_mut();
        assert_eq!(ll_battery_new(2000, 3, &mut b), LlStatus::Ok);
        assert_eq!(ll_battery_len(b), 24);
        assert_eq!(ll_battery_len(ptr::null()), 0);
        let mut needed = 0;
        assert_eq!(ll_battery_id(b, 0, ptr::null_mut(), 0, &mut needed), LlStatus::Ok);
        let mut buf = vec![0 as c_char; needed];
        assert_eq!(
            ll_battery_id(b, 0, buf.as_mut_ptr(), needed, ptr::null_mut()),
            LlStatus::Ok
        );
        let id = CStr::from_ptr(buf.as_ptr()).to_str().unwrap().to_string();
        assert!(id.starts_with("kingman_p2"), "{id}");

        let mut r = LlDualityReport {
            lhs_mean: 0.0,
            lhs_se: 0.0,
            rhs_mean: 0.0,
            rhs_se: 0.0,
            z: 0.0,
            pass: 0,
        };
        assert_eq!(ll_battery_run(b, 0, &mut r), LlStatus::Ok);
        assert!(r.lhs_se > 0.0 && r.rhs_se > 0.0);
        assert_eq!(r.pass, (r.z.abs() < 3.0) as i32);
        assert_eq!(ll_battery_run(b, 99, &mut r), LlStatus::InvalidArgument);
        ll_battery_free(b);
        assert_eq!(ll_battery_new(1, 3, &mut b), LlStatus::InvalidArgument);
    }
}

#[test]
fn kingman_closed_form_value() {
    assert!((ll_kingman_closed_form(1.0, 1.0, 0.5) - (1.0 - 0.5 * (-1f64).exp())).abs() < 1e-15);
}

#[test]
fn lamperti_clock_on_step_path() {
    unsafe {
        let t = [0.0, 1.0, 3.0];
        let m = [2.0, 0.5, 0.5];
        let mut out = [0.0; 3];
        assert_eq!(
            ll_lamperti_clock(t.as_ptr(), m.as_ptr(), 3, 1.0, out.as_mut_ptr()),
            LlStatus::Ok
        );
        // int m^{-1}: 0, 1/2, 1/2 + 2*2
        assert_eq!(out, [0.0, 0.5, 4.5]);

        // mass hits zero with alpha > 0: the clock explodes there
        let m0 = [1.0, 0.0, 0.0];
        assert_eq!(
            ll_lamperti_clock(t.as_ptr(), m0.as_ptr(), 3, 1.0, out.as_mut_ptr()),
            LlStatus::Ok
        );
        assert_eq!(out[..2], [0.0, 1.0]);
        assert_eq!(out[2], f64::INFINITY);

        let bad = [0.0, 0.0, 1.0];
        assert_eq!(
            ll_lamperti_clock(bad.as_ptr(), m.as_ptr(), 3, 1.0, out.as_mut_ptr()),
            LlStatus::InvalidArgument
        );
        assert_eq!(
            ll_lamperti_clock(t.as_ptr(), m.as_ptr(), 3, 1.0, ptr::null_mut()),
            LlStatus::NullPointer
        );
    }
}
