//! Error codes and error types shared by all services and the client.

use std::fmt;

/// Stable wire-level error codes. Every error response carries exactly one of
/// these; the numeric values are part of the protocol and must not change.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum ErrorCode {
    /// Object, block or node does not exist.
    NotFound = 1,
    /// A block of the object was lost to a preemption and cannot be read.
    DataUnavailable = 2,
    /// Write rejected because the target datanode is draining.
    NodeDraining = 3,
    /// Compare-and-set version mismatch, or a data operation hit a location
    /// that no longer holds the block.
    StaleLocation = 4,
    /// No eligible datanode has free capacity.
    CapacityExhausted = 5,
    /// Object name already taken.
    AlreadyExists = 6,
    /// Malformed frame, payload, or argument.
    ProtocolError = 7,
    /// Operation is invalid in the current lifecycle state.
    Conflict = 8,
}

impl ErrorCode {
    pub fn from_wire(v: u8) -> Option<ErrorCode> {
        match v {
            1 => Some(ErrorCode::NotFound),
            2 => Some(ErrorCode::DataUnavailable),
            3 => Some(ErrorCode::NodeDraining),
            4 => Some(ErrorCode::StaleLocation),
            5 => Some(ErrorCode::CapacityExhausted),
            6 => Some(ErrorCode::AlreadyExists),
            7 => Some(ErrorCode::ProtocolError),
            8 => Some(ErrorCode::Conflict),
            _ => None,
        }
    }

    pub fn to_wire(self) -> u8 {
        self as u8
    }
}

impl fmt::Display for ErrorCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ErrorCode::NotFound => "not found",
            ErrorCode::DataUnavailable => "data unavailable",
            ErrorCode::NodeDraining => "node draining",
            ErrorCode::StaleLocation => "stale location",
            ErrorCode::CapacityExhausted => "capacity exhausted",
            ErrorCode::AlreadyExists => "already exists",
            ErrorCode::ProtocolError => "protocol error",
            ErrorCode::Conflict => "conflict",
        };
        f.write_str(s)
    }
}

/// A service-level failure: one error code plus a human-readable detail.
/// This is what travels in an error response frame.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{code}: {detail}")]
pub struct Fault {
    pub code: ErrorCode,
    pub detail: String,
}

impl Fault {
    pub fn new(code: ErrorCode, detail: impl Into<String>) -> Fault {
        Fault {
            code,
            detail: detail.into(),
        }
    }

    pub fn not_found(detail: impl Into<String>) -> Fault {
        Fault::new(ErrorCode::NotFound, detail)
    }

    pub fn data_unavailable(detail: impl Into<String>) -> Fault {
        Fault::new(ErrorCode::DataUnavailable, detail)
    }

    pub fn node_draining(detail: impl Into<String>) -> Fault {
        Fault::new(ErrorCode::NodeDraining, detail)
    }

    pub fn stale_location(detail: impl Into<String>) -> Fault {
        Fault::new(ErrorCode::StaleLocation, detail)
    }

    pub fn capacity_exhausted(detail: impl Into<String>) -> Fault {
        Fault::new(ErrorCode::CapacityExhausted, detail)
    }

    pub fn already_exists(detail: impl Into<String>) -> Fault {
        Fault::new(ErrorCode::AlreadyExists, detail)
    }

    pub fn protocol(detail: impl Into<String>) -> Fault {
        Fault::new(ErrorCode::ProtocolError, detail)
    }

    pub fn conflict(detail: impl Into<String>) -> Fault {
        Fault::new(ErrorCode::Conflict, detail)
    }
}

/// Client-facing error: either a remote/local fault with a stable code, or a
/// transport-level I/O failure. Transport failures are kept distinct because
/// the client maps them to the stale-location retry path rather than
/// surfacing them.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Fault(#[from] Fault),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// The error code, if this is a fault rather than an I/O failure.
    pub fn code(&self) -> Option<ErrorCode> {
        match self {
            Error::Fault(f) => Some(f.code),
            Error::Io(_) => None,
        }
    }

    pub fn is_code(&self, code: ErrorCode) -> bool {
        self.code() == Some(code)
    }

    /// True for failures that indicate the target is gone or no longer holds
    /// the data: connection errors and NotFound both invalidate cached
    /// locations.
    pub fn is_location_failure(&self) -> bool {
        match self {
            Error::Io(_) => true,
            Error::Fault(f) => {
                f.code == ErrorCode::NotFound || f.code == ErrorCode::StaleLocation
            }
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wire_codes_are_stable() {
        let all = [
            (ErrorCode::NotFound, 1),
            (ErrorCode::DataUnavailable, 2),
            (ErrorCode::NodeDraining, 3),
            (ErrorCode::StaleLocation, 4),
            (ErrorCode::CapacityExhausted, 5),
            (ErrorCode::AlreadyExists, 6),
            (ErrorCode::ProtocolError, 7),
            (ErrorCode::Conflict, 8),
        ];
        for (code, wire) in all {
            assert_eq!(code.to_wire(), wire);
            assert_eq!(ErrorCode::from_wire(wire), Some(code));
        }
        assert_eq!(ErrorCode::from_wire(0), None);
        assert_eq!(ErrorCode::from_wire(9), None);
    }

    #[test]
    fn location_failure_classification() {
        assert!(Error::from(Fault::not_found("x")).is_location_failure());
        assert!(Error::from(Fault::stale_location("x")).is_location_failure());
        assert!(!Error::from(Fault::node_draining("x")).is_location_failure());
        let io = Error::Io(std::io::Error::new(
            std::io::ErrorKind::ConnectionRefused,
            "refused",
        ));
        assert!(io.is_location_failure());
    }
}
