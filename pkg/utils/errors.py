"""Exception hierarchy shared by the ledger, the protocol agents and the runner."""


class ProtocolError(Exception):
    """Base class for every error raised by this package"""


class ConfigurationError(ProtocolError):
    """Invalid protocol settings or ladder parameters"""


class LedgerError(ProtocolError):
    """Ledger misuse or a broken ledger invariant"""


class AuthenticationError(LedgerError):
    """Seed does not authenticate the claimed address (msg.sender mismatch)"""


class AddressCollision(LedgerError):
    """An account for this seed already exists"""


class UnknownAccount(LedgerError):
    """Address has no account on the ledger"""


class TimeRewindError(LedgerError):
    """Logical time never moves backwards"""


class NonceLengthError(ProtocolError, ValueError):
    """Commitment nonce is not exactly lambda/8 bytes"""


class InvalidBid(ProtocolError, ValueError):
    """Bid violates its shape invariants"""


class UnknownActor(ProtocolError):
    """Address never joined the session"""


class IllegalTransition(ProtocolError):
    """Requested participant-state change is not an edge of the state graph"""


class Rejected(ProtocolError):
    """A protocol action was refused; the refusal is already in the event log"""

    def __init__(self, reason):
        super().__init__(reason)
        self.reason = reason


class ScenarioValidationError(ProtocolError):
    """Scenario file is malformed; `field` names the offending entry"""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field
        self.message = message


class OracleMismatch(ProtocolError):
    """Engine and reference oracle disagree on an auction instance"""
