mod common;

#[test]
fn jail_guard_and_screen_hold_up() {
    common::suites::guard_suite().unwrap();
}

#[test]
fn checkouts_reset_to_the_snapshot() {
    common::suites::sandbox_reset().unwrap();
}
