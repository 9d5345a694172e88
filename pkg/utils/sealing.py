"""
Recipient-locked sealing: the stand-in for E_pk(G).

Only the named recipient can open a sealed payload. The fingerprint lets the
trace mention a sealed grant without revealing it.
"""

import json
from dataclasses import asdict, dataclass, is_dataclass

from utils.errors import ProtocolError


class SealError(ProtocolError):
    """Opening attempted by someone other than the recipient"""


@dataclass(frozen=True)
class SealedGrant:
    recipient: object
    payload: object

    def open(self, address):
        if address != self.recipient:
            raise SealError(f"sealed for {self.recipient.short()}, not {address.short()}")
        return self.payload

    def reseal(self, recipient):
        return SealedGrant(recipient, self.payload)

    def fingerprint(self, settings):
        body = asdict(self.payload) if is_dataclass(self.payload) else self.payload
        blob = json.dumps(body, sort_keys=True, default=str).encode("utf-8")
        return settings.digest(self.recipient.value + blob).hex()[:16]
