"""Dual-prediction protocol: one global LMS filter at the sink, one local
LMS filter per client, and threshold-driven switching between them.

Per-node life cycle (one protocol round = one sensed block per node):

    RAW_TRANSMIT      block goes to the sink, both filters idle (start,
                      and re-entry after a failed prediction)
    SINK_ADAPTIVE     block goes to the sink, sink filter active; when the
                      sink's prediction error for the node drops to the
                      alpha threshold it ships its global weight down
    CLIENT_ADAPTIVE   node runs its own filter seeded from the received
                      global weight; while its error exceeds beta it keeps
                      transmitting, once at or below beta it answers with
                      its own weight and falls silent
    CLIENT_PREDICTING no blocks on the wire; the node keeps monitoring its
                      frozen filter and re-enters RAW_TRANSMIT when the
                      error climbs back above beta

Weight messages travel with one round of latency; a round's data blocks
reach the sink within the round.  Nodes are processed in ascending id
order, so a full run is a deterministic function of (inputs, thresholds).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import TYPE_CHECKING, Callable, Iterable, Mapping, Sequence

import numpy as np

from .errors import DimensionMismatch, ProtocolViolation, UnknownNode
from .numerics import max_eigenvalue

if TYPE_CHECKING:
    from .fieldgen import ObservationBlock

SINK_ID = 0


class Phase(str, Enum):
    RAW_TRANSMIT = "RAW_TRANSMIT"
    SINK_ADAPTIVE = "SINK_ADAPTIVE"
    CLIENT_ADAPTIVE = "CLIENT_ADAPTIVE"
    CLIENT_PREDICTING = "CLIENT_PREDICTING"


class FilterState(str, Enum):
    ACTIVE = "ACTIVE"
    IDLE = "IDLE"


class MessageKind(str, Enum):
    QUERY = "QUERY"
    DATA_BLOCK = "DATA_BLOCK"
    GLOBAL_WEIGHT = "GLOBAL_WEIGHT"
    NODE_WEIGHT = "NODE_WEIGHT"


# Filter activity is a function of the phase alone.
_FILTERS = {
    Phase.RAW_TRANSMIT: (FilterState.IDLE, FilterState.IDLE),
    Phase.SINK_ADAPTIVE: (FilterState.ACTIVE, FilterState.IDLE),
    Phase.CLIENT_ADAPTIVE: (FilterState.IDLE, FilterState.ACTIVE),
    Phase.CLIENT_PREDICTING: (FilterState.IDLE, FilterState.IDLE),
}


@dataclass(frozen=True)
class NodeMode:
    sink_filter: FilterState
    client_filter: FilterState
    phase: Phase

    @classmethod
    def for_phase(cls, phase: Phase) -> "NodeMode":
        sink, client = _FILTERS[phase]
        return cls(sink_filter=sink, client_filter=client, phase=phase)


@dataclass(frozen=True)
class Thresholds:
    """User-defined error thresholds: alpha at the sink, beta at the client."""

    alpha: float
    beta: float

    def __post_init__(self):
        # beta == 0 is the degenerate always-transmit configuration.
        if self.alpha <= 0 or self.beta < 0:
            raise ValueError("alpha must be > 0 and beta >= 0")


@dataclass(frozen=True)
class Message:
    kind: MessageKind
    sender: int
    receiver: int
    payload: object = None


@dataclass
class TransmissionRecord:
    """Per-node counts of transmitted, suppressed and total sensed blocks."""

    transmitted: dict[int, int] = field(default_factory=dict)
    suppressed: dict[int, int] = field(default_factory=dict)
    total: dict[int, int] = field(default_factory=dict)

    def count(self, node_id: int, sent: bool) -> None:
        self.total[node_id] = self.total.get(node_id, 0) + 1
        key = self.transmitted if sent else self.suppressed
        key[node_id] = key.get(node_id, 0) + 1


def transmission_percentage(record: TransmissionRecord) -> dict[int, float]:
    """Percentage of sensed blocks each node actually transmitted."""
    if not record.total or any(t == 0 for t in record.total.values()):
        raise ValueError("record has nodes with no sensed blocks")
    return {
        i: 100.0 * record.transmitted.get(i, 0) / record.total[i]
        for i in sorted(record.total)
    }


@dataclass
class NodeState:
    mode: NodeMode
    client_weight: np.ndarray | None = None
    received_global: np.ndarray | None = None


@dataclass
class ProtocolState:
    """Mutable engine state for one scenario run."""

    n: int
    node_ids: tuple[int, ...]
    global_weight: np.ndarray
    nodes: dict[int, NodeState]
    record: TransmissionRecord
    pending: list[Message] = field(default_factory=list)
    round_index: int = 0
    mu: float | None = None
    # per node: (round_index, weight) at every client-filter update
    weight_history: dict[int, list[tuple[int, np.ndarray]]] = field(default_factory=dict)
    tracked_weights: dict[int, np.ndarray] = field(default_factory=dict)


@dataclass(frozen=True)
class TraceRow:
    round_index: int
    node_id: int
    phase: Phase
    kinds: tuple[MessageKind, ...]
    error_glob: float | None
    error_new: float | None
    transmitted: bool


@dataclass(frozen=True)
class RoundResult:
    messages: tuple[Message, ...]
    rows: tuple[TraceRow, ...]
    record: TransmissionRecord


def initial_weight(n: int) -> np.ndarray:
    """Unit-norm all-ones start vector (every tap 1/sqrt(n))."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return np.full(n, 1.0 / np.sqrt(n))


def _check_pair(u: np.ndarray, w: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    u = np.asarray(u, dtype=float)
    w = np.asarray(w, dtype=float)
    if u.shape != w.shape or u.ndim != 1:
        raise DimensionMismatch(f"shapes {u.shape} and {w.shape} do not agree")
    return u, w


def global_lms_update(
    w_prev: np.ndarray, blocks: Iterable[tuple[np.ndarray, float]], mu: float
) -> np.ndarray:
    """One simultaneous sweep w + mu * sum_i u_i^T (d_i - u_i w)."""
    w_prev = np.asarray(w_prev, dtype=float)
    step = np.zeros_like(w_prev)
    for u, d in blocks:
        u, _ = _check_pair(u, w_prev)
        step += u * (float(d) - float(u @ w_prev))
    return w_prev + mu * step


def global_ia_update(
    w_prev: np.ndarray, blocks: Iterable[tuple[np.ndarray, float]], mu: float
) -> np.ndarray:
    """Instantaneous-approximation form: w + mu * sum_i (u_i^T d_i - u_i^T u_i w).

    Algebraically identical to global_lms_update; kept as a separate code
    path so the equivalence is testable.
    """
    w_prev = np.asarray(w_prev, dtype=float)
    step = np.zeros_like(w_prev)
    for u, d in blocks:
        u, _ = _check_pair(u, w_prev)
        step += u * float(d) - np.outer(u, u) @ w_prev
    return w_prev + mu * step


def sink_predict(blocks_u: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Row-wise predictions u_i @ w for a stacked M x N observation matrix."""
    blocks_u = np.atleast_2d(np.asarray(blocks_u, dtype=float))
    w = np.asarray(w, dtype=float)
    if blocks_u.shape[1] != w.size:
        raise DimensionMismatch(
            f"blocks have {blocks_u.shape[1]} taps, weight has {w.size}"
        )
    return blocks_u @ w


def sink_errors(d: np.ndarray, y_sink: np.ndarray) -> np.ndarray:
    """Componentwise prediction errors d - y at the sink."""
    d = np.asarray(d, dtype=float)
    y_sink = np.asarray(y_sink, dtype=float)
    if d.shape != y_sink.shape:
        raise DimensionMismatch(f"shapes {d.shape} and {y_sink.shape} differ")
    return d - y_sink


def client_desired(u: np.ndarray, w_glob: np.ndarray, noise: float) -> float:
    """Client-side desired scalar u @ w_glob + noise (noise drawn by caller)."""
    u, w_glob = _check_pair(u, w_glob)
    return float(u @ w_glob) + float(noise)


def client_update(
    w_prev: np.ndarray, u: np.ndarray, d_new: float, mu: float
) -> np.ndarray:
    """Single-datum LMS step w + mu * u^T (d_new - u w)."""
    u, w_prev = _check_pair(u, w_prev)
    return w_prev + mu * u * (float(d_new) - float(u @ w_prev))


def new_protocol_state(
    node_ids: Sequence[int], n: int, mu: float | None = None
) -> ProtocolState:
    """Fresh engine state; queues the sink's initial query to every node."""
    ids = tuple(int(i) for i in node_ids)
    if len(set(ids)) != len(ids) or SINK_ID in ids:
        raise ValueError("node ids must be unique and non-zero (0 is the sink)")
    return ProtocolState(
        n=n,
        node_ids=ids,
        global_weight=initial_weight(n),
        nodes={i: NodeState(mode=NodeMode.for_phase(Phase.RAW_TRANSMIT)) for i in ids},
        record=TransmissionRecord(),
        pending=[Message(MessageKind.QUERY, SINK_ID, i) for i in ids],
        mu=mu,
    )


def _deliver(state: ProtocolState, message: Message) -> None:
    """Apply a queued weight/query message, validating the receiver's phase."""
    if message.kind is MessageKind.GLOBAL_WEIGHT:
        node = state.nodes.get(message.receiver)
        if node is None:
            raise UnknownNode(f"message to unknown node {message.receiver}")
        if node.mode.phase not in (Phase.RAW_TRANSMIT, Phase.SINK_ADAPTIVE):
            raise ProtocolViolation(
                f"GLOBAL_WEIGHT for node {message.receiver} in {node.mode.phase.value}"
            )
        weight = np.array(message.payload, dtype=float, copy=True)
        node.mode = NodeMode.for_phase(Phase.CLIENT_ADAPTIVE)
        node.client_weight = weight.copy()
        node.received_global = weight
    elif message.kind is MessageKind.NODE_WEIGHT:
        node = state.nodes.get(message.sender)
        if node is None:
            raise UnknownNode(f"message from unknown node {message.sender}")
        if node.mode.phase is not Phase.CLIENT_PREDICTING:
            raise ProtocolViolation(
                f"NODE_WEIGHT from node {message.sender} in {node.mode.phase.value}"
            )
        state.tracked_weights[message.sender] = np.array(message.payload, dtype=float)
    elif message.kind is MessageKind.QUERY:
        node = state.nodes.get(message.receiver)
        if node is None:
            raise UnknownNode(f"query to unknown node {message.receiver}")
        if node.mode.phase is not Phase.RAW_TRANSMIT:
            raise ProtocolViolation(
                f"QUERY for node {message.receiver} in {node.mode.phase.value}"
            )
    else:
        raise ProtocolViolation(f"{message.kind.value} cannot be queued between rounds")


def step_round(
    state: ProtocolState,
    blocks: Mapping[int, "ObservationBlock"],
    thresholds: Thresholds,
    mu: float | None = None,
    client_noise: Mapping[int, float] | None = None,
    channel: Callable[[int, "ObservationBlock"], "ObservationBlock"] | None = None,
) -> RoundResult:
    """Advance the protocol by one synchronous round.

    Every node senses exactly one block; which of them reach the sink, and
    which weight messages are exchanged, follows the phase table in the
    module docstring.  ``mu`` overrides the automatic step-size rule
    (0.5 / (M * lambda_max) of the empirical block covariance, refreshed
    whenever some node is in a raw round).  ``client_noise`` supplies the
    round's client-side noise draw per node; ``channel`` optionally maps a
    transmitted block to what the sink receives.
    """
    order = sorted(state.node_ids)
    missing = [i for i in order if i not in blocks]
    if missing:
        raise DimensionMismatch(f"no block for nodes {missing} this round")
    noise = client_noise or {}

    for message in state.pending:
        _deliver(state, message)
    state.pending = []

    start_phase = {i: state.nodes[i].mode.phase for i in order}
    kinds: dict[int, list[MessageKind]] = {i: [] for i in order}
    if state.round_index == 0:
        for i in order:
            kinds[i].append(MessageKind.QUERY)

    messages: list[Message] = []
    error_new: dict[int, float | None] = {i: None for i in order}
    transmit: dict[int, bool] = {}
    next_phase: dict[int, Phase] = {}

    # Client side: local filters and the beta decision.
    for i in order:
        node = state.nodes[i]
        block = blocks[i]
        u = np.asarray(block.samples, dtype=float)
        if u.size != state.n:
            raise DimensionMismatch(f"block of node {i} has {u.size} taps, expected {state.n}")
        phase = start_phase[i]
        if phase in (Phase.RAW_TRANSMIT, Phase.SINK_ADAPTIVE):
            transmit[i] = True
        elif phase is Phase.CLIENT_ADAPTIVE:
            d_new = client_desired(u, node.received_global, noise.get(i, 0.0))
            step = mu if mu is not None else (state.mu or 0.0)
            node.client_weight = client_update(node.client_weight, u, d_new, step)
            state.weight_history.setdefault(i, []).append(
                (state.round_index, node.client_weight.copy())
            )
            err = d_new - float(u @ node.client_weight)
            error_new[i] = err
            if abs(err) > thresholds.beta:
                transmit[i] = True
            else:
                transmit[i] = False
                messages.append(
                    Message(MessageKind.NODE_WEIGHT, i, SINK_ID, node.client_weight.copy())
                )
                kinds[i].append(MessageKind.NODE_WEIGHT)
                next_phase[i] = Phase.CLIENT_PREDICTING
        else:  # CLIENT_PREDICTING: monitor only, filter frozen
            d_new = client_desired(u, node.received_global, noise.get(i, 0.0))
            err = d_new - float(u @ node.client_weight)
            error_new[i] = err
            transmit[i] = False
            if abs(err) > thresholds.beta:
                next_phase[i] = Phase.RAW_TRANSMIT

    # Wire: data blocks of transmitting nodes, optionally through the channel.
    received: dict[int, "ObservationBlock"] = {}
    for i in order:
        if transmit[i]:
            wire = channel(i, blocks[i]) if channel is not None else blocks[i]
            received[i] = wire
            messages.append(Message(MessageKind.DATA_BLOCK, i, SINK_ID, wire))
            kinds[i].append(MessageKind.DATA_BLOCK)

    # Sink side: one global sweep over this round's arrivals, then the
    # alpha decision for nodes whose sink filter is (or is becoming) active.
    error_glob: dict[int, float | None] = {i: None for i in order}
    if received:
        if mu is not None:
            step = mu
        else:
            raw_round = any(start_phase[i] is Phase.RAW_TRANSMIT for i in order)
            if state.mu is None or raw_round:
                stack = np.array([received[i].samples for i in sorted(received)])
                emp = (stack.T @ stack) / stack.shape[0]
                lam = max_eigenvalue(emp)
                state.mu = 0.5 / (len(order) * lam) if lam > 0 else 0.0
            step = state.mu
        pairs = [(received[i].samples, received[i].desired) for i in sorted(received)]
        state.global_weight = global_lms_update(state.global_weight, pairs, step)
        stack = np.array([received[i].samples for i in sorted(received)])
        d_vec = np.array([received[i].desired for i in sorted(received)])
        errs = sink_errors(d_vec, sink_predict(stack, state.global_weight))
        for err, i in zip(errs, sorted(received)):
            error_glob[i] = float(err)
            if start_phase[i] in (Phase.RAW_TRANSMIT, Phase.SINK_ADAPTIVE):
                if abs(err) <= thresholds.alpha:
                    messages.append(
                        Message(
                            MessageKind.GLOBAL_WEIGHT,
                            SINK_ID,
                            i,
                            state.global_weight.copy(),
                        )
                    )
                    kinds[i].append(MessageKind.GLOBAL_WEIGHT)
                elif start_phase[i] is Phase.RAW_TRANSMIT:
                    next_phase[i] = Phase.SINK_ADAPTIVE

    rows = []
    for i in order:
        state.record.count(i, transmit[i])
        rows.append(
            TraceRow(
                round_index=state.round_index,
                node_id=i,
                phase=start_phase[i],
                kinds=tuple(kinds[i]),
                error_glob=error_glob[i],
                error_new=error_new[i],
                transmitted=transmit[i],
            )
        )

    # End-of-round transitions; weight messages are queued for next round.
    for i, phase in next_phase.items():
        node = state.nodes[i]
        node.mode = NodeMode.for_phase(phase)
        if phase is Phase.RAW_TRANSMIT:  # full restart for this node
            node.client_weight = None
            node.received_global = None
    state.pending = [m for m in messages if m.kind is not MessageKind.DATA_BLOCK]
    state.round_index += 1
    return RoundResult(messages=tuple(messages), rows=tuple(rows), record=state.record)
