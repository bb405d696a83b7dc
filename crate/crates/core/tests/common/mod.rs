//! Independent oracles shared by the integration tests and the acceptance
//! suite. Nothing here calls the code under test except to compare against it.
#![allow(dead_code)]

pub mod derived;
pub mod oracle;

pub type Check = Result<(), String>;

pub fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Check {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

pub fn close(what: &str, got: f64, want: f64, tol: f64) -> Check {
    ensure((got - want).abs() <= tol, || {
        format!("{what}: got {got}, want {want} (tol {tol})")
    })
}
