"""Cost accounting for the butterfly engine and its parallel simulator.

Counting convention: one unit per complex multiply and one per complex add,
so a length-r modulation costs r units and a dense r x r matvec costs 2*r**2.
Phase-function evaluations are not flops; they are kernel samples and are
tracked separately where a caller cares.
"""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass(frozen=True)
class CostParams:
    """Machine constants of the alpha + beta*n communication model.

    alpha  : seconds of latency per message
    beta   : seconds per weight entry sent (inverse bandwidth)
    gamma  : seconds per flop unit
    """

    alpha: float = 1e-6
    beta: float = 1e-9
    gamma: float = 1e-10


@dataclass
class CostLedger:
    """Per-process tally of flops, messages, and entries sent.

    Ledgers are owned by a single (virtual) process; concurrent increments
    from several harness threads are never applied to one instance. Merging
    is explicit and order-independent, so totals are deterministic.
    """

    params: CostParams = field(default_factory=CostParams)
    flops: int = 0
    messages: int = 0
    entries_sent: int = 0

    def add_flops(self, n: int) -> None:
        self.flops += int(n)

    def add_comm(self, messages: int, entries: int) -> None:
        self.messages += int(messages)
        self.entries_sent += int(entries)

    def modeled_seconds(self) -> float:
        p = self.params
        return p.gamma * self.flops + p.alpha * self.messages + p.beta * self.entries_sent

    def merge(self, other: "CostLedger") -> None:
        self.flops += other.flops
        self.messages += other.messages
        self.entries_sent += other.entries_sent
