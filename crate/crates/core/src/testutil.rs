//! Hand-built sessions for unit tests.

use crate::types::*;

/// A session of `len` docs with contacts at the given displayed positions, in
/// contact order. Docs are named after their natural position.
pub(crate) fn session_with(arm: ArmAssignment, len: u32, contacts: &[Position]) -> SearchSession {
    let mut natural: Vec<Position> = (1..=len).collect();
    if let Some((hi, lo)) = arm.applied_pair() {
        natural.swap(hi as usize - 1, lo as usize - 1);
    }
    let slots = (1..=len)
        .map(|k| {
            let order = contacts.iter().position(|&c| c == k).map(|i| i as u32 + 1);
            SlotRecord {
                doc: DocumentId::new(format!("d{}", natural[k as usize - 1])).unwrap(),
                natural_position: natural[k as usize - 1],
                displayed_position: k,
                viewed: true,
                contacted: order.is_some(),
                contact_order: order,
            }
        })
        .collect();
    SearchSession::new(
        QueryId::new("q").unwrap(),
        VisitorId::new("v").unwrap(),
        InterfaceId::new("search").unwrap(),
        0,
        arm,
        slots,
    )
    .unwrap()
}

/// Holdout session.
pub(crate) fn session(len: u32, contacts: &[Position]) -> SearchSession {
    session_with(ArmAssignment::holdout(), len, contacts)
}
