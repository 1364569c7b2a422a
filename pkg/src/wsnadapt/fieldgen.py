"""Spatial field statistics and synthetic observation streams.

Node observations are zero-mean jointly Gaussian with a power-exponential
spatial correlation exp(-D/theta) over pairwise Euclidean distances, and
AR(1) temporal correlation within each node's sample sequence.  A stream
is generated by drawing cross-node innovation vectors through the Cholesky
factor of the spatial covariance, so the marginal covariance of every
sample index is exactly the configured R_uu.

Randomness discipline: one Philox substream per (seed, role, node), so
corrupting one node or toggling the channel never perturbs the draws of
any other node.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    CsvFormatError,
    DimensionMismatch,
    InvalidTheta,
    UnknownNode,
)
from .numerics import as_symmetric_matrix, as_vector, cholesky_factor
from .stdp import initial_weight

# Substream roles (third entropy word of the generator key).
ROLE_FIELD = 0      # shared cross-node innovations
ROLE_MEASURE = 1    # per-node measurement noise v_i
ROLE_MALICIOUS = 2  # per-node replacement samples for corrupted nodes
ROLE_CHANNEL = 3    # per-node channel noise
ROLE_PROTOCOL = 4   # per-node client-side noise draws during the protocol


def substream(seed: int, role: int, node_id: int = 0, extra: int = 0) -> np.random.Generator:
    """Independent, reproducible generator for one (seed, role, node) slot."""
    key = np.random.SeedSequence([int(seed), int(role), int(node_id), int(extra)])
    return np.random.Generator(np.random.Philox(key))


@dataclass(frozen=True)
class NodeLayout:
    """Sensor positions (meters), the sink position, and node ids."""

    positions: tuple[tuple[float, float], ...]
    sink: tuple[float, float]
    node_ids: tuple[int, ...]

    def __post_init__(self):
        if len(self.positions) < 1:
            raise ValueError("layout needs at least one node")
        if len(self.positions) != len(self.node_ids):
            raise DimensionMismatch("positions and node_ids lengths differ")
        if len(set(self.node_ids)) != len(self.node_ids):
            raise ValueError("node_ids must be unique")

    @property
    def size(self) -> int:
        return len(self.node_ids)

    def position_of(self, node_id: int) -> tuple[float, float]:
        try:
            return self.positions[self.node_ids.index(node_id)]
        except ValueError:
            raise UnknownNode(f"node {node_id} not in layout") from None

    def sink_distances(self) -> np.ndarray:
        p = np.asarray(self.positions, dtype=float)
        return np.hypot(p[:, 0] - self.sink[0], p[:, 1] - self.sink[1])

    def pair_distances(self) -> np.ndarray:
        p = np.asarray(self.positions, dtype=float)
        dx = p[:, 0][:, None] - p[:, 0][None, :]
        dy = p[:, 1][:, None] - p[:, 1][None, :]
        return np.hypot(dx, dy)

    def restrict(self, node_ids: Sequence[int]) -> "NodeLayout":
        """Sub-layout containing only the given nodes, in the given order."""
        pos = tuple(self.position_of(i) for i in node_ids)
        return NodeLayout(positions=pos, sink=self.sink, node_ids=tuple(node_ids))


@dataclass(frozen=True)
class FieldParams:
    """Field statistics: range parameter, signal scales, noises, AR(1) coefficient."""

    theta: float = 2.0
    sigma_u: float | tuple[float, ...] = 1.0
    sigma_d: float = 1.0
    noise_var: float = 0.01
    temporal_phi: float = 0.9

    def __post_init__(self):
        if self.theta <= 0:
            raise InvalidTheta(f"theta must be > 0, got {self.theta}")
        sig = np.atleast_1d(np.asarray(self.sigma_u, dtype=float))
        if np.any(sig <= 0) or self.sigma_d <= 0:
            raise ValueError("signal standard deviations must be positive")
        if self.noise_var < 0:
            raise ValueError("noise_var must be >= 0")
        if not 0.0 <= self.temporal_phi < 1.0:
            raise ValueError("temporal_phi must lie in [0, 1)")

    def sigma_vector(self, m: int) -> np.ndarray:
        """Per-node standard deviations, broadcasting a scalar to m nodes."""
        sig = np.atleast_1d(np.asarray(self.sigma_u, dtype=float))
        if sig.size == 1:
            return np.full(m, float(sig[0]))
        if sig.size != m:
            raise DimensionMismatch(f"sigma_u has {sig.size} entries for {m} nodes")
        return sig.astype(float)


@dataclass(frozen=True)
class ObservationBlock:
    """One node's window of n consecutive samples plus its desired scalar."""

    node_id: int
    block_index: int
    samples: np.ndarray
    desired: float

    def __post_init__(self):
        object.__setattr__(self, "samples", np.asarray(self.samples, dtype=float))
        if self.samples.ndim != 1 or self.samples.size < 1:
            raise DimensionMismatch("samples must be a non-empty 1-D vector")
        if not (np.all(np.isfinite(self.samples)) and np.isfinite(self.desired)):
            raise ValueError("block entries must be finite")


@dataclass(frozen=True)
class CovariancePair:
    """Global second-order statistics: R_uu, R_du and the desired-signal power."""

    ruu: np.ndarray
    rdu: np.ndarray
    sigma_d_sq: float

    def __post_init__(self):
        object.__setattr__(self, "ruu", as_symmetric_matrix(self.ruu))
        object.__setattr__(self, "rdu", as_vector(self.rdu))
        if self.rdu.size != self.ruu.shape[0]:
            raise DimensionMismatch("rdu length must equal ruu order")
        if self.sigma_d_sq <= 0:
            raise ValueError("sigma_d_sq must be positive")

    @property
    def order(self) -> int:
        return self.ruu.shape[0]

    def restrict(self, indices: Sequence[int]) -> "CovariancePair":
        idx = np.asarray(indices, dtype=int)
        return CovariancePair(
            ruu=self.ruu[np.ix_(idx, idx)],
            rdu=self.rdu[idx],
            sigma_d_sq=self.sigma_d_sq,
        )


@dataclass(frozen=True)
class Stream:
    """Per-node block sequences plus the configuration that produced them."""

    params: FieldParams
    n: int
    num_blocks: int
    seed: int
    blocks: Mapping[int, tuple[ObservationBlock, ...]]
    sigma_by_node: Mapping[int, float] = field(default_factory=dict)

    @property
    def node_ids(self) -> tuple[int, ...]:
        return tuple(self.blocks.keys())

    def restrict(self, node_ids: Sequence[int]) -> "Stream":
        missing = [i for i in node_ids if i not in self.blocks]
        if missing:
            raise UnknownNode(f"nodes {missing} not in stream")
        return replace(
            self,
            blocks={i: self.blocks[i] for i in node_ids},
            sigma_by_node={i: self.sigma_by_node[i] for i in node_ids},
        )


def correlation_coefficient(distance: float, theta: float) -> float:
    """Power-exponential correlation exp(-distance/theta); 1 at distance 0."""
    if theta <= 0:
        raise InvalidTheta(f"theta must be > 0, got {theta}")
    if distance < 0:
        raise ValueError("distance must be >= 0")
    return float(np.exp(-distance / theta))


def build_spatial_covariance(layout: NodeLayout, params: FieldParams) -> CovariancePair:
    """Spatial R_uu and sink-referenced R_du from geometry and signal scales.

    R_uu[i, j] = sigma_i * sigma_j * exp(-D_ij / theta) with D_ij the node
    pair distance; R_du[i] uses the node-to-sink distance.  The diagonal is
    exactly sigma_i**2 and the matrix is exactly symmetric.
    """
    m = layout.size
    sig = params.sigma_vector(m)
    ruu = np.outer(sig, sig) * np.exp(-layout.pair_distances() / params.theta)
    rdu = params.sigma_d * sig * np.exp(-layout.sink_distances() / params.theta)
    return CovariancePair(ruu=ruu, rdu=rdu, sigma_d_sq=params.sigma_d**2)


def _ar1_series(innovations: np.ndarray, phi: float) -> np.ndarray:
    """Stationary AR(1) path along the last axis from unit-scale innovations."""
    out = np.empty_like(innovations)
    out[..., 0] = innovations[..., 0]
    damp = np.sqrt(1.0 - phi * phi)
    for t in range(1, innovations.shape[-1]):
        out[..., t] = phi * out[..., t - 1] + damp * innovations[..., t]
    return out


def _blocks_from_series(
    node_id: int, series: np.ndarray, n: int, w0: np.ndarray, noise: np.ndarray
) -> tuple[ObservationBlock, ...]:
    windows = series.reshape(-1, n)
    return tuple(
        ObservationBlock(
            node_id=node_id,
            block_index=b,
            samples=windows[b],
            desired=float(windows[b] @ w0 + noise[b]),
        )
        for b in range(windows.shape[0])
    )


def generate_stream(
    layout: NodeLayout,
    params: FieldParams,
    n: int,
    num_blocks: int,
    seed: int,
    jitter: bool = False,
) -> Stream:
    """Seeded spatio-temporally correlated observation blocks for every node.

    At each sample index the cross-node vector is (an AR(1) blend of)
    L @ z with L the Cholesky factor of R_uu, so sample marginals carry the
    exact spatial covariance; consecutive samples of a node follow AR(1)
    with coefficient temporal_phi.  The desired scalar of each block is
    samples @ w0 + v with w0 the normalized all-ones initial weight and v
    drawn per node at variance noise_var.  Bit-identical for equal seeds.

    ``jitter`` adds 1e-10 * sigma_i**2 to the covariance diagonal before
    factoring; without it a degenerate layout raises NotPositiveDefinite.
    """
    if n < 1 or num_blocks < 1:
        raise ValueError("n and num_blocks must be >= 1")
    m = layout.size
    cov = build_spatial_covariance(layout, params)
    ruu = cov.ruu
    if jitter:
        sig = params.sigma_vector(m)
        ruu = ruu + np.diag(1e-10 * sig**2)
    low = cholesky_factor(ruu)

    total = n * num_blocks
    rng_field = substream(seed, ROLE_FIELD)
    # One draw of shape (total, m): all nodes' innovations for sample t sit
    # in row t, matching the per-sample-index draw order of the contract.
    z = rng_field.standard_normal((total, m))
    innovations = low @ z.T  # m x total, marginal covariance exactly ruu
    series = _ar1_series(innovations, params.temporal_phi)

    w0 = initial_weight(n)
    noise_std = float(np.sqrt(params.noise_var))
    sig = params.sigma_vector(m)
    blocks: dict[int, tuple[ObservationBlock, ...]] = {}
    for row, node_id in enumerate(layout.node_ids):
        v = substream(seed, ROLE_MEASURE, node_id).normal(0.0, noise_std, num_blocks)
        blocks[node_id] = _blocks_from_series(node_id, series[row], n, w0, v)
    return Stream(
        params=params,
        n=n,
        num_blocks=num_blocks,
        seed=seed,
        blocks=blocks,
        sigma_by_node={i: float(s) for i, s in zip(layout.node_ids, sig)},
    )


def inject_malicious(stream: Stream, node_ids: Iterable[int], scale: float, seed: int) -> Stream:
    """Replace the listed nodes' observations with abnormally spread ones.

    A corrupted node senses an independent AR(1) signal whose standard
    deviation is ``scale`` times its nominal one; its desired scalars are
    recomputed from the corrupted samples.  All draws come from that
    node's dedicated substream, so every other node's blocks are returned
    bit-for-bit untouched.
    """
    ids = sorted(set(int(i) for i in node_ids))
    if scale <= 1:
        raise ValueError(f"scale must exceed 1, got {scale}")
    unknown = [i for i in ids if i not in stream.blocks]
    if unknown:
        raise UnknownNode(f"nodes {unknown} not in stream")

    total = stream.n * stream.num_blocks
    w0 = initial_weight(stream.n)
    noise_std = float(np.sqrt(stream.params.noise_var))
    new_blocks = dict(stream.blocks)
    for node_id in ids:
        rng = substream(seed, ROLE_MALICIOUS, node_id)
        sigma = scale * stream.sigma_by_node.get(node_id, 1.0)
        series = sigma * _ar1_series(
            rng.standard_normal(total), stream.params.temporal_phi
        )
        v = rng.normal(0.0, noise_std, stream.num_blocks)
        new_blocks[node_id] = _blocks_from_series(node_id, series, stream.n, w0, v)
    return replace(stream, blocks=new_blocks)


def awgn_channel(
    block: ObservationBlock, snr_db: float | None, seed: int
) -> ObservationBlock:
    """Additive white Gaussian noise on a transmitted block.

    ``snr_db=None`` means the channel is off and the block is returned
    unchanged.  Otherwise the per-sample noise variance is the block's
    mean-square sample power scaled by 10**(-snr_db/10); the same variance
    is applied to the desired scalar.
    """
    if snr_db is None:
        return block
    rng = substream(seed, ROLE_CHANNEL, block.node_id, block.block_index)
    power = float(np.mean(block.samples**2))
    noise_std = float(np.sqrt(power * 10.0 ** (-snr_db / 10.0)))
    noisy = block.samples + rng.normal(0.0, noise_std, block.samples.size)
    return replace(
        block,
        samples=noisy,
        desired=float(block.desired + rng.normal(0.0, noise_std)),
    )


def ingest_csv(path, n: int, params: FieldParams, seed: int) -> Stream:
    """Build a stream from a ``timestamp,node_id,value`` CSV file.

    Rows are grouped per node into blocks of ``n`` in timestamp order
    (stable for ties); trailing samples short of a full block are dropped
    and node block counts are truncated to the common minimum.  Any
    malformed row is a hard CsvFormatError carrying its line number.
    Desired scalars are synthesized the same way as for generated streams.
    """
    rows: dict[int, list[tuple[float, float]]] = {}
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["timestamp", "node_id", "value"]:
            raise CsvFormatError("line 1: expected header 'timestamp,node_id,value'")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != 3:
                raise CsvFormatError(f"line {lineno}: expected 3 columns, got {len(row)}")
            try:
                ts = float(row[0])
                node_id = int(row[1])
                value = float(row[2])
            except ValueError as exc:
                raise CsvFormatError(f"line {lineno}: {exc}") from None
            if not (np.isfinite(ts) and np.isfinite(value)):
                raise CsvFormatError(f"line {lineno}: non-finite entry")
            rows.setdefault(node_id, []).append((ts, value))

    if not rows:
        raise CsvFormatError("line 2: file contains no data rows")
    num_blocks = min(len(r) for r in rows.values()) // n
    if num_blocks < 1:
        raise CsvFormatError(f"fewer than {n} samples for some node; no full block")

    w0 = initial_weight(n)
    noise_std = float(np.sqrt(params.noise_var))
    blocks: dict[int, tuple[ObservationBlock, ...]] = {}
    sigma_by_node: dict[int, float] = {}
    for node_id in sorted(rows):
        ordered = sorted(rows[node_id], key=lambda tv: tv[0])
        series = np.array([v for _, v in ordered[: num_blocks * n]])
        v = substream(seed, ROLE_MEASURE, node_id).normal(0.0, noise_std, num_blocks)
        blocks[node_id] = _blocks_from_series(node_id, series, n, w0, v)
        sigma_by_node[node_id] = float(np.std(series)) or 1.0
    return Stream(
        params=params,
        n=n,
        num_blocks=num_blocks,
        seed=seed,
        blocks=blocks,
        sigma_by_node=sigma_by_node,
    )
