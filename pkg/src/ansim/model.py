"""Core domain types: node identities, roles, message envelopes, notifications.

Everything here is a plain value type. Mutable runtime state (monitor counters,
key tables, event queues) lives in the protocol, security and kernel modules;
this module only defines what those modules exchange.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum

# The management unit is a distinguished endpoint with reserved id 0. It is
# never a succession candidate and never appears in scenario node lists.
CMU_ID = 0

# Receiver sentinel for one-to-all transmissions over the shared medium.
BROADCAST = -1


class SimError(Exception):
    """Base class for every error raised by the simulator."""


class Role(Enum):
    CMU = "cmu"
    ADMINISTRATOR = "administrator"
    POLICY_APPLIER = "policy_applier"
    AUTHENTICITY_PROVIDER = "authenticity_provider"
    FIRE_SENSOR = "fire_sensor"
    LOW_RANK = "low_rank"


# Rank 0 is the supervisory root; larger numbers mean lower authority.
# The two rank-2 roles are deliberately equal: neither outranks the other.
_RANK: dict[Role, int] = {
    Role.CMU: 0,
    Role.ADMINISTRATOR: 1,
    Role.POLICY_APPLIER: 2,
    Role.AUTHENTICITY_PROVIDER: 2,
    Role.FIRE_SENSOR: 3,
    Role.LOW_RANK: 3,
}

# High-rank node roles. The management unit sits above the hierarchy and is
# deliberately excluded.
_HRN_ROLES = frozenset({
    Role.ADMINISTRATOR,
    Role.POLICY_APPLIER,
    Role.AUTHENTICITY_PROVIDER,
})

_LRN_ROLES = frozenset({Role.FIRE_SENSOR, Role.LOW_RANK})


def rank_of(role: Role) -> int:
    return _RANK[role]


def compare_rank(a: Role, b: Role) -> int:
    """Total pre-order on roles by authority.

    Returns a positive number when ``a`` outranks ``b``, zero when the two
    roles hold equal authority, negative when ``b`` outranks ``a``.
    """
    return _RANK[b] - _RANK[a]


def is_hrn(role: Role) -> bool:
    """True exactly for the three high-rank node roles."""
    return role in _HRN_ROLES


def is_lrn(role: Role) -> bool:
    return role in _LRN_ROLES


class NodeStatus(Enum):
    ACTIVE = "active"
    REMOVED = "removed"
    REENTERING = "reentering"


@dataclass(frozen=True)
class NodeProfile:
    """Identity and current standing of one network node.

    ``hardware_id`` is an opaque 64-bit value registered with the management
    unit; it never participates in ordering decisions.
    """

    node_id: int
    hardware_id: int
    processing_power: int
    role: Role
    status: NodeStatus = NodeStatus.ACTIVE

    def __post_init__(self) -> None:
        if self.node_id < 0:
            raise SimError(f"node_id must be >= 0, got {self.node_id}")
        if self.processing_power <= 0:
            raise SimError(
                f"processing_power must be > 0, got {self.processing_power}")

    def with_role(self, role: Role) -> "NodeProfile":
        return replace(self, role=role)

    def with_status(self, status: NodeStatus) -> "NodeProfile":
        return replace(self, status=status)


class EnvelopeKind(Enum):
    STATUS_BROADCAST = "status_broadcast"
    SENSOR_DATA = "sensor_data"
    PING = "ping"
    PONG = "pong"
    INFO_MESSAGE = "info_message"
    WARNING = "warning"
    ALERT = "alert"
    REMOVAL_NOTICE = "removal_notice"
    ROLE_ASSIGNMENT = "role_assignment"
    DIAGNOSTIC_PROBE = "diagnostic_probe"
    AUTH_CHALLENGE = "auth_challenge"
    AUTH_RESPONSE = "auth_response"
    KEY_EXCHANGE = "key_exchange"
    AUTHORIZATION_REQUEST = "authorization_request"
    AUTHORIZATION_GRANT = "authorization_grant"


class Category(Enum):
    CONTROL = "control"
    DATA = "data"
    SECURITY = "security"
    DIAGNOSTIC = "diagnostic"


# Every envelope kind maps to exactly one accounting category. The reporting
# module relies on this map being exhaustive; a test asserts it.
CATEGORY_BY_KIND: dict[EnvelopeKind, Category] = {
    EnvelopeKind.STATUS_BROADCAST: Category.CONTROL,
    EnvelopeKind.SENSOR_DATA: Category.DATA,
    EnvelopeKind.PING: Category.CONTROL,
    EnvelopeKind.PONG: Category.CONTROL,
    EnvelopeKind.INFO_MESSAGE: Category.CONTROL,
    EnvelopeKind.WARNING: Category.CONTROL,
    EnvelopeKind.ALERT: Category.CONTROL,
    EnvelopeKind.REMOVAL_NOTICE: Category.CONTROL,
    EnvelopeKind.ROLE_ASSIGNMENT: Category.CONTROL,
    EnvelopeKind.DIAGNOSTIC_PROBE: Category.DIAGNOSTIC,
    EnvelopeKind.AUTH_CHALLENGE: Category.SECURITY,
    EnvelopeKind.AUTH_RESPONSE: Category.SECURITY,
    EnvelopeKind.KEY_EXCHANGE: Category.SECURITY,
    EnvelopeKind.AUTHORIZATION_REQUEST: Category.SECURITY,
    EnvelopeKind.AUTHORIZATION_GRANT: Category.SECURITY,
}


def category_of(kind: EnvelopeKind) -> Category:
    return CATEGORY_BY_KIND[kind]


# Kinds that carry the join/key-agreement machinery itself. They are
# self-securing: profile wrapping never adds signature or encapsulation
# overhead to them, so their wire length always equals their payload length.
BOOTSTRAP_KINDS = frozenset({
    EnvelopeKind.AUTHORIZATION_REQUEST,
    EnvelopeKind.AUTHORIZATION_GRANT,
    EnvelopeKind.AUTH_CHALLENGE,
    EnvelopeKind.AUTH_RESPONSE,
    EnvelopeKind.KEY_EXCHANGE,
})

# Kinds a drop-next-n fault counts against. Control and diagnostic traffic is
# exempt by design: the fault models a defective data radio path.
DATA_PACKET_KINDS = frozenset({
    EnvelopeKind.SENSOR_DATA,
    EnvelopeKind.STATUS_BROADCAST,
})

# Kinds whose envelopes reference a subject node.
SUBJECT_KINDS = frozenset({
    EnvelopeKind.WARNING,
    EnvelopeKind.ALERT,
    EnvelopeKind.REMOVAL_NOTICE,
    EnvelopeKind.INFO_MESSAGE,
})


@dataclass(frozen=True)
class Envelope:
    """One message on the wire.

    ``payload`` is modeled content; ``payload_len`` is always its length.
    ``wire_len`` is set by the security layer when the envelope is wrapped
    and includes any signature and encapsulation overhead. ``subject`` names
    the node a notification-style envelope is about. ``detail`` carries small
    structured metadata (role names, handshake step, presented hardware id)
    that in a real implementation would be encoded inside the payload.
    """

    kind: EnvelopeKind
    sender: int
    receiver: int
    payload: bytes
    sent_at: int
    wire_len: int = -1
    subject: int | None = None
    detail: str = ""
    profile_name: str = ""
    tag: bytes | None = None
    sealed_key_id: str | None = None

    def __post_init__(self) -> None:
        if self.kind in SUBJECT_KINDS and self.subject is None:
            raise SimError(f"{self.kind.value} envelope requires a subject")

    @property
    def payload_len(self) -> int:
        return len(self.payload)

    @property
    def is_broadcast(self) -> bool:
        return self.receiver == BROADCAST

    @property
    def category(self) -> Category:
        return CATEGORY_BY_KIND[self.kind]


def make_payload(kind: EnvelopeKind, sender: int, at: int, length: int) -> bytes:
    """Deterministic filler payload of exactly ``length`` bytes."""
    head = f"{kind.value}|{sender}|{at}|".encode()
    if len(head) >= length:
        return head[:length]
    return head + bytes(length - len(head))


class Severity(Enum):
    WARNING = "warning"
    ALERT = "alert"
    INFO = "info"


class Cause(Enum):
    SINGLE_LOSS = "single_loss"
    TRIPLE_LOSS = "triple_loss"
    REMOVAL = "removal"
    ADMIN_FAILOVER = "admin_failover"
    REENTRY = "reentry"
    AUTH_FAILURE = "auth_failure"


# A third consecutive loss always escalates to an alert and a first loss in a
# streak is always a warning; the constructor enforces the pairing.
_FIXED_SEVERITY = {
    Cause.SINGLE_LOSS: Severity.WARNING,
    Cause.TRIPLE_LOSS: Severity.ALERT,
}


@dataclass(frozen=True)
class Notification:
    """An entry in the run-level notification log.

    ``reporter`` is the node whose observation produced the entry; the
    management unit reports its own actions under id 0.
    """

    severity: Severity
    subject: int
    cause: Cause
    at: int
    reporter: int = CMU_ID

    def __post_init__(self) -> None:
        fixed = _FIXED_SEVERITY.get(self.cause)
        if fixed is not None and self.severity is not fixed:
            raise SimError(
                f"{self.cause.value} notifications must have severity "
                f"{fixed.value}, got {self.severity.value}")
