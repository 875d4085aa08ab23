use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Vec3;

/// One agent command for a single step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ActionCommand {
    /// Hand twist in world frame; `press_force` is the declared downward push in N.
    MoveHand { hand: usize, linear: Vec3, angular: Vec3, press_force: f64 },
    SetTrigger { hand: usize, fraction: f64 },
    TeleportBase { x: f64, y: f64 },
    Noop,
}

impl ActionCommand {
    pub fn hand(&self) -> Option<usize> {
        match self {
            ActionCommand::MoveHand { hand, .. } | ActionCommand::SetTrigger { hand, .. } => Some(*hand),
            _ => None,
        }
    }

    pub fn move_hand(hand: usize, linear: Vec3) -> Self {
        ActionCommand::MoveHand { hand, linear, angular: Vec3::zeros(), press_force: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ActionError {
    #[error("hand {0} commanded more than once in one step")]
    DuplicateHand(usize),
    #[error("hand {0} does not exist")]
    UnknownHand(usize),
    #[error("press force must be finite and non-negative, got {0}")]
    BadForce(f64),
    #[error("trigger fraction must lie in [0, 1], got {0}")]
    BadTrigger(f64),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("more than one base teleport in one step")]
    DuplicateTeleport,
}

pub fn validate_actions(actions: &[ActionCommand], hands: usize) -> Result<(), ActionError> {
    let mut seen = vec![false; hands];
    let mut teleported = false;
    for a in actions {
        if let Some(h) = a.hand() {
            let slot = seen.get_mut(h).ok_or(ActionError::UnknownHand(h))?;
            if *slot {
                return Err(ActionError::DuplicateHand(h));
            }
            *slot = true;
        }
        match a {
            ActionCommand::MoveHand { linear, angular, press_force, .. } => {
                if !(linear.iter().chain(angular.iter()).all(|v| v.is_finite())) {
                    return Err(ActionError::NonFinite("hand twist"));
                }
                if !press_force.is_finite() || *press_force < 0.0 {
                    return Err(ActionError::BadForce(*press_force));
                }
            }
            ActionCommand::SetTrigger { fraction, .. } => {
                if !(0.0..=1.0).contains(fraction) {
                    return Err(ActionError::BadTrigger(*fraction));
                }
            }
            ActionCommand::TeleportBase { x, y } => {
                if !x.is_finite() || !y.is_finite() {
                    return Err(ActionError::NonFinite("teleport target"));
                }
                if teleported {
                    return Err(ActionError::DuplicateTeleport);
                }
                teleported = true;
            }
            ActionCommand::Noop => {}
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_command_per_hand() {
        let a = ActionCommand::move_hand(0, Vec3::x());
        let t = ActionCommand::SetTrigger { hand: 0, fraction: 1.0 };
        assert_eq!(validate_actions(&[a.clone(), t], 2), Err(ActionError::DuplicateHand(0)));
        assert_eq!(validate_actions(&[a, ActionCommand::SetTrigger { hand: 1, fraction: 1.0 }], 2), Ok(()));
        assert_eq!(validate_actions(&[ActionCommand::SetTrigger { hand: 2, fraction: 1.0 }], 2), Err(ActionError::UnknownHand(2)));
    }

    #[test]
    fn rejects_bad_values() {
        let neg = ActionCommand::MoveHand { hand: 0, linear: Vec3::zeros(), angular: Vec3::zeros(), press_force: -1.0 };
        assert_eq!(validate_actions(&[neg], 2), Err(ActionError::BadForce(-1.0)));
        assert!(validate_actions(&[ActionCommand::SetTrigger { hand: 0, fraction: 1.5 }], 2).is_err());
        assert!(validate_actions(&[ActionCommand::move_hand(0, Vec3::new(f64::NAN, 0.0, 0.0))], 2).is_err());
    }

    #[test]
    fn bincode_round_trip() {
        let a = vec![ActionCommand::MoveHand { hand: 1, linear: Vec3::new(0.1, -0.2, 0.3), angular: Vec3::z(), press_force: 12.0 }, ActionCommand::Noop];
        let b: Vec<ActionCommand> = bincode::deserialize(&bincode::serialize(&a).unwrap()).unwrap();
        assert_eq!(a, b);
    }
}
