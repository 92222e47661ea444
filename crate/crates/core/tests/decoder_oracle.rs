//! BP decoding checked against Gaussian elimination of the stacked system on
//! random small instances, delivered in several arrival orders.

mod common;

#[test]
fn bp_fixpoint_is_order_independent_and_sound() {
    common::bp_fixpoint_is_order_independent_and_sound();
}
