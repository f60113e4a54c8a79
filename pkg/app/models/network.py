"""Network topology value types"""

from dataclasses import dataclass, field
from enum import IntEnum
from typing import NamedTuple, Optional

from app.utils.exceptions import DomainError
from app.utils.validators import validate_index, validate_positive


@dataclass(frozen=True)
class NetworkConfig:
    """A POPS(d, g) network: g groups of d processors and g*g couplers"""

    d: int
    g: int
    n: int = field(init=False)

    def __post_init__(self):
        validate_positive("d", self.d)
        validate_positive("g", self.g)
        object.__setattr__(self, "n", self.d * self.g)

    @property
    def coupler_count(self) -> int:
        return self.g * self.g

    def check_processor(self, i: int) -> None:
        validate_index("processor", i, self.n)

    def check_group(self, a: int) -> None:
        validate_index("group", a, self.g)

    def __str__(self) -> str:
        return f"POPS({self.d},{self.g})"


class CouplerId(NamedTuple):
    """Coupler c(b, a): senders are group a, listeners are group b"""

    dest_group: int
    src_group: int

    def index(self, cfg: NetworkConfig) -> int:
        """Flat index dest_group * g + src_group used by the slot engine"""
        cfg.check_group(self.dest_group)
        cfg.check_group(self.src_group)
        return self.dest_group * cfg.g + self.src_group

    @classmethod
    def from_index(cls, index: int, cfg: NetworkConfig) -> "CouplerId":
        if not 0 <= index < cfg.coupler_count:
            raise DomainError(f"coupler index {index} is out of range [0, {cfg.coupler_count})")
        return cls(index // cfg.g, index % cfg.g)


class MessageKind(IntEnum):
    """Message kinds carried through couplers"""

    COPY = 0
    ACK = 1


class CouplerState(IntEnum):
    """Per-slot state of a coupler after conflict resolution"""

    IDLE = 0
    DELIVERED = 1
    CONFLICT = 2


class MessageHeader(NamedTuple):
    """Routing header (source, destination, intermediate group, temporary destination group)"""

    source: int
    dest: int
    intermediate_group: int
    temp_dest_group: int


@dataclass(frozen=True)
class Message:
    """A packet copy or an empty acknowledgement"""

    kind: MessageKind
    packet_id: int
    header: MessageHeader

    @property
    def has_payload(self) -> bool:
        # acks are header-only
        return self.kind is MessageKind.COPY


@dataclass(frozen=True)
class CouplerReading:
    """What a single coupler did in one slot"""

    coupler: CouplerId
    state: CouplerState
    sender_count: int
    message: Optional[Message] = None
