use alloc::string::ToString;

use super::{FeederError, FeederModel, PhaseSet, Shunt};
use crate::numerics::ComplexMatrix;

/// Copy of `f` with line `line_id` out of service.
pub fn apply_line_trip(f: &FeederModel, line_id: &str) -> Result<FeederModel, FeederError> {
    let mut g = f.clone();
    let l = g
        .lines
        .iter_mut()
        .find(|l| l.id == line_id)
        .ok_or_else(|| FeederError::UnknownLine(line_id.to_string()))?;
    if !l.in_service {
        return Err(FeederError::AlreadyTripped(line_id.to_string()));
    }
    l.in_service = false;
    Ok(g)
}

/// Copy of `f` with line `line_id` back in service.
pub fn apply_line_close(f: &FeederModel, line_id: &str) -> Result<FeederModel, FeederError> {
    let mut g = f.clone();
    let l = g
        .lines
        .iter_mut()
        .find(|l| l.id == line_id)
        .ok_or_else(|| FeederError::UnknownLine(line_id.to_string()))?;
    if l.in_service {
        return Err(FeederError::AlreadyClosed(line_id.to_string()));
    }
    l.in_service = true;
    Ok(g)
}

/// Copy of `f` with `delta` (siemens) added as a shunt on `bus`.
pub fn apply_shunt_change(
    f: &FeederModel,
    bus: &str,
    phases: PhaseSet,
    delta: ComplexMatrix,
) -> Result<FeederModel, FeederError> {
    let mut g = f.clone();
    g.shunts.push(Shunt {
        bus: bus.to_string(),
        phases,
        y: delta,
    });
    g.validate()?;
    Ok(g)
}
