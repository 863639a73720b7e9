"""
Cluster-state channels on Gaussian states: node deletion, the one- and
two-mode gates (outcome-conditioned and outcome-averaged) and the flowerbed
lattice bookkeeping they run on.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Dict, Hashable, List, NamedTuple, Optional, Sequence, Tuple

import networkx as nx
import numpy as np
from django.conf import settings
from django.core.exceptions import ValidationError

from .gaussian import (
    GaussianState,
    SeedLike,
    SqueezedThermalSpec,
    apply_symplectic,
    condition_on_quadrature,
    make_rng,
    move_mode,
    readout_vector,
    sample_quadrature,
    squeezed_thermal_state,
    standard_transform,
    tensor_product,
)
from .gkp_threshold import NoiseBudget
from .models import CorrectionKind, GateKind, NodeKind, Quadrature, TransformKind

logger = logging.getLogger(__name__)

SHEAR_VALUES = (0, 1)
CARRIES_MODE = (NodeKind.THERMAL_BASE, NodeKind.INPUT, NodeKind.OUTPUT)


@dataclass(frozen=True)
class Correction:
    kind: str
    mode: int
    amount: float

    @property
    def label(self) -> str:
        return f"{CorrectionKind(self.kind).value}({self.amount:+.6g}) on mode {self.mode}"


@dataclass(frozen=True)
class GateStepRecord:
    """One step of a gate sequence: what was measured and how it was corrected."""

    kind: str
    modes: Tuple[int, ...]
    shear: int = 0
    outcomes: Tuple[float, ...] = ()
    corrections: Tuple[Correction, ...] = ()
    density: Optional[float] = None

    def __post_init__(self):
        try:
            kind = GateKind(self.kind)
        except ValueError:
            raise ValidationError(f"Unknown step kind {self.kind!r}.")
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "modes", tuple(int(m) for m in self.modes))
        if kind in (GateKind.ONE_MODE, GateKind.TWO_MODE) and self.outcomes and not self.corrections:
            raise ValidationError(f"Conditioned {kind.label} step is missing its corrections.")

    @property
    def conditioned(self) -> bool:
        return bool(self.outcomes)

    @classmethod
    def averaged(cls, kind: str, modes: Sequence[int], shear: int = 0) -> "GateStepRecord":
        return cls(kind=kind, modes=tuple(modes), shear=shear)


class ChannelResult(NamedTuple):
    state: Optional[GaussianState]
    density: float
    record: GateStepRecord


class FlowerbedGraph:
    """
    Square-lattice cluster with GKP ancilla markers.

    Base nodes are (row, col) tuples and carry a mode index into the
    Gaussian state; markers are ("gkp", row, col) and carry none.
    """

    def __init__(self, graph: nx.Graph, rows: int, cols: int):
        self.graph = graph
        self.rows = rows
        self.cols = cols
        self.steps: List[GateStepRecord] = []

    @classmethod
    def square(cls, rows: int, cols: int, ancilla_interval: Optional[int] = None) -> "FlowerbedGraph":
        interval = settings.CVSIM_ANCILLA_INTERVAL if ancilla_interval is None else ancilla_interval
        if interval < 1:
            raise ValidationError("Ancilla interval must be >= 1.")
        graph = nx.grid_2d_graph(rows, cols)
        nx.set_edge_attributes(graph, 1.0, "weight")
        for mode, node in enumerate(sorted(graph.nodes)):
            row, col = node
            graph.nodes[node].update(kind=NodeKind.THERMAL_BASE, row=row, col=col, mode=mode)
        for row in range(0, rows, interval):
            for col in range(0, cols, interval):
                marker = ("gkp", row, col)
                graph.add_node(marker, kind=NodeKind.GKP_ANCILLA, row=row, col=col, mode=None)
                graph.add_edge(marker, (row, col), weight=1.0)
        return cls(graph, rows, cols)

    def copy(self) -> "FlowerbedGraph":
        clone = FlowerbedGraph(self.graph.copy(), self.rows, self.cols)
        clone.steps = list(self.steps)
        return clone

    @property
    def n_modes(self) -> int:
        return len(self.base_nodes())

    def kind(self, node: Hashable) -> NodeKind:
        self._require(node)
        return NodeKind(self.graph.nodes[node]["kind"])

    def mode_of(self, node: Hashable) -> int:
        mode = self.graph.nodes[self._require(node)]["mode"]
        if mode is None:
            raise ValidationError(f"Node {node} carries no Gaussian mode.")
        return mode

    def base_nodes(self) -> List[Hashable]:
        """Nodes that carry a mode, in mode order."""
        nodes = [n for n, d in self.graph.nodes(data=True) if d["kind"] in CARRIES_MODE]
        return sorted(nodes, key=lambda n: self.graph.nodes[n]["mode"])

    def ancilla_markers(self) -> List[Hashable]:
        return sorted(n for n, d in self.graph.nodes(data=True) if d["kind"] == NodeKind.GKP_ANCILLA)

    def base_neighbors(self, node: Hashable) -> List[Tuple[Hashable, float]]:
        self._require(node)
        return [
            (nb, self.graph.edges[node, nb]["weight"])
            for nb in sorted(self.graph.neighbors(node), key=str)
            if self.graph.nodes[nb]["kind"] in CARRIES_MODE
        ]

    def base_degree(self, node: Hashable) -> int:
        return len(self.base_neighbors(node))

    def base_edges(self) -> List[Tuple[int, int, float]]:
        """(mode_i, mode_j, weight) for every base-base edge, row-major."""
        edges = []
        for u, v, weight in self.graph.edges(data="weight"):
            if self.graph.nodes[u]["kind"] in CARRIES_MODE and self.graph.nodes[v]["kind"] in CARRIES_MODE:
                i, j = sorted((self.mode_of(u), self.mode_of(v)))
                edges.append((i, j, weight))
        return sorted(edges)

    def interior_nodes(self) -> List[Hashable]:
        return [
            n for n in self.base_nodes()
            if self.kind(n) == NodeKind.THERMAL_BASE
            and 0 < n[0] < self.rows - 1 and 0 < n[1] < self.cols - 1
        ]

    def mark(self, node: Hashable, kind: str) -> None:
        kind = NodeKind(kind)
        if kind not in (NodeKind.INPUT, NodeKind.OUTPUT, NodeKind.THERMAL_BASE):
            raise ValidationError("Only base nodes can be marked as input or output.")
        if self.kind(node) == NodeKind.GKP_ANCILLA:
            raise ValidationError(f"{node} is an ancilla marker.")
        self.graph.nodes[node]["kind"] = kind

    def without(self, node: Hashable) -> "FlowerbedGraph":
        """Copy with a base node, its edges and orphaned markers removed; modes renumbered."""
        removed_mode = self.mode_of(node)
        clone = self.copy()
        orphans = [
            nb for nb in clone.graph.neighbors(node)
            if clone.graph.nodes[nb]["kind"] == NodeKind.GKP_ANCILLA and clone.graph.degree(nb) == 1
        ]
        clone.graph.remove_nodes_from([node, *orphans])
        for _, data in clone.graph.nodes(data=True):
            if data["mode"] is not None and data["mode"] > removed_mode:
                data["mode"] -= 1
        return clone

    def _require(self, node: Hashable) -> Hashable:
        if node not in self.graph:
            raise ValidationError(f"Node {node} is not in the lattice.")
        return node


def lattice_state(graph: FlowerbedGraph, spec: SqueezedThermalSpec) -> GaussianState:
    """Squeezed-thermal product on every base node with CZ[g] on every base edge."""
    n = graph.n_modes
    if n == 0:
        raise ValidationError("Lattice has no base nodes.")
    state = tensor_product(*[squeezed_thermal_state(spec) for _ in range(n)])
    for i, j, weight in graph.base_edges():
        state = apply_symplectic(state, standard_transform(TransformKind.CZ, (i, j), n, weight))
    return state


def build_flowerbed(
    rows: int,
    cols: int,
    spec: SqueezedThermalSpec,
    ancilla_interval: Optional[int] = None,
    mode_cap: Optional[int] = None,
) -> Tuple[FlowerbedGraph, GaussianState]:
    cap = settings.CVSIM_MODE_CAP if mode_cap is None else mode_cap
    if rows < 1 or cols < 1:
        raise ValidationError("Lattice needs at least one row and one column.")
    if 2 * rows * cols > cap:
        raise ValidationError(
            f"A {rows}x{cols} flowerbed needs {2 * rows * cols} modes, above the cap of {cap}."
        )
    graph = FlowerbedGraph.square(rows, cols, ancilla_interval)
    logger.debug(f"Built {rows}x{cols} flowerbed with {len(graph.ancilla_markers())} markers")
    return graph, lattice_state(graph, spec)


def delete_node(
    state: GaussianState,
    graph: FlowerbedGraph,
    node: Hashable,
    outcome: Optional[float] = None,
    seed: SeedLike = None,
) -> Tuple[Optional[GaussianState], FlowerbedGraph]:
    """
    Remove a base node by measuring its position and undoing the kick.

    Each neighbour picks up a momentum shift g*s from the outcome s; Z(-g*s)
    cancels it, leaving the state the lattice would have without the node.
    """
    kind = graph.kind(node)
    if kind != NodeKind.THERMAL_BASE:
        raise ValidationError(f"Cannot delete {node}: it is a {kind.label} node.")
    mode = graph.mode_of(node)
    if state.n_modes != graph.n_modes:
        raise ValidationError("State and lattice disagree on the number of modes.")
    if outcome is None:
        outcome = sample_quadrature(state, mode, Quadrature.Q, seed)

    neighbors = graph.base_neighbors(node)
    remaining, measured = condition_on_quadrature(state, mode, Quadrature.Q, outcome)
    after = graph.without(node)

    corrections = []
    for nb, weight in neighbors:
        target = after.mode_of(nb)
        amount = -weight * measured.value
        remaining = apply_symplectic(
            remaining, standard_transform(TransformKind.DISPLACE_P, target, remaining.n_modes, amount)
        )
        corrections.append(Correction(CorrectionKind.Z, target, amount))

    after.steps.append(
        GateStepRecord(
            kind=GateKind.DELETION,
            modes=(mode,),
            outcomes=(measured.value,),
            corrections=tuple(corrections),
            density=measured.density,
        )
    )
    return remaining, after


def _check_shear(m) -> int:
    if m not in SHEAR_VALUES:
        raise ValidationError(f"Shear bit m must be 0 or 1, got {m}.")
    return int(m)


def _check_epsilon(epsilon: float) -> float:
    if not epsilon > 0:
        raise ValidationError(f"Momentum blur epsilon must be > 0, got {epsilon}.")
    return float(epsilon)


def _check_pair(state: GaussianState, modes: Sequence[int]) -> Tuple[int, int]:
    a, b = (int(m) for m in modes)
    for m in (a, b):
        if m < 0 or m >= state.n_modes:
            raise ValidationError(f"Mode index {m} out of range for {state.n_modes} modes.")
    if a == b:
        raise ValidationError("Two-mode gate needs two distinct modes.")
    return a, b


def _one_mode_pre_measurement(
    state: GaussianState, in_mode: int, spec: SqueezedThermalSpec, m: int
) -> GaussianState:
    """Shear the input, attach a fresh node as the last mode and entangle with CZ[1]."""
    n = state.n_modes
    joint = apply_symplectic(state, standard_transform(TransformKind.SHEAR, in_mode, n, m))
    joint = tensor_product(joint, squeezed_thermal_state(spec))
    return apply_symplectic(joint, standard_transform(TransformKind.CZ, (in_mode, n), n + 1, 1.0))


def _two_mode_pre_measurement(
    state: GaussianState, modes: Tuple[int, int], spec: SqueezedThermalSpec
) -> GaussianState:
    """Append connecting nodes f2, f3 and apply CZ[1] on (a, f2), (f2, f3), (f3, b)."""
    a, b = modes
    n = state.n_modes
    f2, f3 = n, n + 1
    joint = tensor_product(state, squeezed_thermal_state(spec), squeezed_thermal_state(spec))
    for i, j in ((a, f2), (f2, f3), (f3, b)):
        joint = apply_symplectic(joint, standard_transform(TransformKind.CZ, (i, j), n + 2, 1.0))
    return joint


def _feedforward_average(
    joint: GaussianState,
    measured_modes: Sequence[int],
    readouts: np.ndarray,
    feedforward: np.ndarray,
) -> GaussianState:
    """
    Outcome average of measure-then-correct in closed form.

    With readouts r = R x and a linear correction z = keep(x) + D r, the
    density-weighted mixture of corrected conditional states is the
    unconditional law of z.
    """
    n = joint.n_modes
    kept = [k for k in range(n) if k not in set(measured_modes)]
    keep = np.concatenate([kept, np.asarray(kept) + n])
    A = np.eye(2 * n)[keep] + feedforward @ readouts
    return GaussianState(A @ joint.mean, A @ joint.cov @ A.T)


def one_mode_gate_conditioned(
    state: GaussianState,
    in_mode: int,
    spec: SqueezedThermalSpec,
    m: int,
    outcome: float,
) -> ChannelResult:
    """
    Teleport the input through a fresh squeezed-thermal node.

    The input is sheared by m, coupled to the fresh node by CZ[1] and its
    momentum is read out as t. X(-t) on the fresh node completes the gate and
    the fresh node takes over the input's mode index. The returned state is
    normalized; `density` is the probability density of t.
    """
    m = _check_shear(m)
    if in_mode < 0 or in_mode >= state.n_modes:
        raise ValidationError(f"Input mode {in_mode} out of range for {state.n_modes} modes.")
    n = state.n_modes
    joint = _one_mode_pre_measurement(state, in_mode, spec, m)
    remaining, measured = condition_on_quadrature(joint, in_mode, Quadrature.P, outcome)
    fresh = n - 1
    remaining = apply_symplectic(
        remaining, standard_transform(TransformKind.DISPLACE_Q, fresh, n, -measured.value)
    )
    remaining = move_mode(remaining, fresh, in_mode)
    record = GateStepRecord(
        kind=GateKind.ONE_MODE,
        modes=(in_mode,),
        shear=m,
        outcomes=(measured.value,),
        corrections=(Correction(CorrectionKind.X, in_mode, -measured.value),),
        density=measured.density,
    )
    return ChannelResult(remaining, measured.density, record)


def one_mode_gate_averaged(state: GaussianState, in_mode: int, epsilon: float, m: int) -> GaussianState:
    """Outcome-averaged one-mode gate: Fourier after shear, then epsilon of blur on p."""
    m = _check_shear(m)
    epsilon = _check_epsilon(epsilon)
    n = state.n_modes
    rotation = standard_transform(TransformKind.FOURIER, in_mode, n).compose(
        standard_transform(TransformKind.SHEAR, in_mode, n, m)
    )
    out = apply_symplectic(state, rotation)
    cov = np.array(out.cov)
    cov[n + in_mode, n + in_mode] += epsilon
    return GaussianState(out.mean, cov)


def one_mode_gate_outcome_average(
    state: GaussianState, in_mode: int, spec: SqueezedThermalSpec, m: int
) -> GaussianState:
    """Exact average of the conditioned gate over its outcome, built from the kappa-dependent circuit."""
    m = _check_shear(m)
    n = state.n_modes
    joint = _one_mode_pre_measurement(state, in_mode, spec, m)
    readouts = readout_vector(n + 1, in_mode, Quadrature.P)[None, :]
    # kept variables: remaining n modes (fresh last), X(-t) on the fresh q
    feedforward = np.zeros((2 * n, 1))
    feedforward[n - 1, 0] = -1.0
    averaged = _feedforward_average(joint, [in_mode], readouts, feedforward)
    return move_mode(averaged, n - 1, in_mode)


def sample_one_mode_outcome(
    state: GaussianState, in_mode: int, spec: SqueezedThermalSpec, m: int, seed: SeedLike = None
) -> float:
    joint = _one_mode_pre_measurement(state, in_mode, spec, _check_shear(m))
    return sample_quadrature(joint, in_mode, Quadrature.P, seed)


def two_mode_gate_conditioned(
    state: GaussianState,
    modes: Sequence[int],
    spec: SqueezedThermalSpec,
    outcomes: Tuple[float, float],
) -> ChannelResult:
    """
    Two-mode gate through two connecting nodes with CZ[1] edges a-f2-f3-b.

    Momentum of f2 is read as r, then momentum of f3 as t; Z(-t) on a and
    Z(-r) on b complete the gate. `density` is the joint density of (r, t).
    """
    a, b = _check_pair(state, modes)
    r, t = (float(x) for x in outcomes)
    n = state.n_modes
    joint = _two_mode_pre_measurement(state, (a, b), spec)
    after_r, first = condition_on_quadrature(joint, n, Quadrature.P, r)
    remaining, second = condition_on_quadrature(after_r, n, Quadrature.P, t)
    remaining = apply_symplectic(remaining, standard_transform(TransformKind.DISPLACE_P, a, n, -t))
    remaining = apply_symplectic(remaining, standard_transform(TransformKind.DISPLACE_P, b, n, -r))
    density = first.density * second.density
    record = GateStepRecord(
        kind=GateKind.TWO_MODE,
        modes=(a, b),
        outcomes=(r, t),
        corrections=(Correction(CorrectionKind.Z, a, -t), Correction(CorrectionKind.Z, b, -r)),
        density=density,
    )
    return ChannelResult(remaining, density, record)


def two_mode_gate_averaged(
    state: GaussianState,
    modes: Sequence[int],
    epsilon: float,
    identity_gates: bool = False,
) -> GaussianState:
    """CZ[-1] between the two modes, then epsilon of blur on both momenta."""
    a, b = _check_pair(state, modes)
    epsilon = _check_epsilon(epsilon)
    n = state.n_modes
    out = apply_symplectic(state, standard_transform(TransformKind.CZ, (a, b), n, -1.0))
    cov = np.array(out.cov)
    cov[n + a, n + a] += epsilon
    cov[n + b, n + b] += epsilon
    out = GaussianState(out.mean, cov)
    if identity_gates:
        # only there to keep the gadget on a regular lattice
        out = one_mode_gate_averaged(out, a, epsilon, 0)
        out = one_mode_gate_averaged(out, b, epsilon, 0)
    return out


def two_mode_gate_outcome_average(
    state: GaussianState, modes: Sequence[int], spec: SqueezedThermalSpec
) -> GaussianState:
    a, b = _check_pair(state, modes)
    n = state.n_modes
    joint = _two_mode_pre_measurement(state, (a, b), spec)
    readouts = np.stack(
        [
            readout_vector(n + 2, n, Quadrature.P),
            readout_vector(n + 2, n + 1, Quadrature.P),
        ]
    )
    # columns are (r, t): Z(-t) on a, Z(-r) on b
    feedforward = np.zeros((2 * n, 2))
    feedforward[n + a, 1] = -1.0
    feedforward[n + b, 0] = -1.0
    return _feedforward_average(joint, [n, n + 1], readouts, feedforward)


def sample_two_mode_outcomes(
    state: GaussianState, modes: Sequence[int], spec: SqueezedThermalSpec, seed: SeedLike = None
) -> Tuple[float, float]:
    """Draw (r, t) from their joint law: r first, then t given r."""
    a, b = _check_pair(state, modes)
    rng = make_rng(seed)
    n = state.n_modes
    joint = _two_mode_pre_measurement(state, (a, b), spec)
    r = sample_quadrature(joint, n, Quadrature.P, rng)
    after_r, _ = condition_on_quadrature(joint, n, Quadrature.P, r)
    t = sample_quadrature(after_r, n, Quadrature.P, rng)
    return r, t


def _feedforward_monte_carlo(
    joint: GaussianState,
    measured_modes: Sequence[int],
    readouts: np.ndarray,
    feedforward: np.ndarray,
    outcomes: np.ndarray,
) -> GaussianState:
    """
    Equal-weight mixture of the corrected conditional states at sampled outcomes.

    The conditional covariance does not depend on the outcome and the
    corrected mean is affine in it, so one Schur update serves every sample.
    """
    n = joint.n_modes
    kept = [k for k in range(n) if k not in set(measured_modes)]
    keep = np.concatenate([kept, np.asarray(kept) + n])
    outcomes = np.asarray(outcomes, dtype=float).reshape(-1, readouts.shape[0])
    c_rr = readouts @ joint.cov @ readouts.T
    c_xr = joint.cov @ readouts.T
    gain = c_xr @ np.linalg.pinv(c_rr, hermitian=True)
    cov = (joint.cov - gain @ c_xr.T)[np.ix_(keep, keep)]
    means = (
        joint.mean[keep]
        + (outcomes - readouts @ joint.mean) @ gain[keep].T
        + outcomes @ feedforward.T
    )
    centered = means - means.mean(axis=0)
    spread = centered.T @ centered / len(means)
    cov = cov + spread
    return GaussianState(means.mean(axis=0), 0.5 * (cov + cov.T))


def _check_samples(samples: Optional[int]) -> int:
    samples = settings.CVSIM_MC_SAMPLES if samples is None else int(samples)
    if samples < 1:
        raise ValidationError("Monte-Carlo averaging needs at least one sample.")
    return samples


def one_mode_gate_monte_carlo(
    state: GaussianState,
    in_mode: int,
    spec: SqueezedThermalSpec,
    m: int,
    samples: Optional[int] = None,
    seed: SeedLike = None,
) -> GaussianState:
    """Average conditioned outputs over outcomes drawn from their own density."""
    samples = _check_samples(samples)
    m = _check_shear(m)
    n = state.n_modes
    joint = _one_mode_pre_measurement(state, in_mode, spec, m)
    outcomes = sample_quadrature(joint, in_mode, Quadrature.P, make_rng(seed), size=samples)
    readouts = readout_vector(n + 1, in_mode, Quadrature.P)[None, :]
    feedforward = np.zeros((2 * n, 1))
    feedforward[n - 1, 0] = -1.0
    averaged = _feedforward_monte_carlo(joint, [in_mode], readouts, feedforward, outcomes)
    return move_mode(averaged, n - 1, in_mode)


def two_mode_gate_monte_carlo(
    state: GaussianState,
    modes: Sequence[int],
    spec: SqueezedThermalSpec,
    samples: Optional[int] = None,
    seed: SeedLike = None,
) -> GaussianState:
    samples = _check_samples(samples)
    a, b = _check_pair(state, modes)
    n = state.n_modes
    joint = _two_mode_pre_measurement(state, (a, b), spec)
    readouts = np.stack(
        [
            readout_vector(n + 2, n, Quadrature.P),
            readout_vector(n + 2, n + 1, Quadrature.P),
        ]
    )
    # joint law of (r, t); same as drawing r, then t given r
    outcomes = make_rng(seed).multivariate_normal(
        readouts @ joint.mean, readouts @ joint.cov @ readouts.T, size=samples
    )
    feedforward = np.zeros((2 * n, 2))
    feedforward[n + a, 1] = -1.0
    feedforward[n + b, 0] = -1.0
    return _feedforward_monte_carlo(joint, [n, n + 1], readouts, feedforward, outcomes)


def noise_budget(
    steps: Sequence[GateStepRecord], epsilon: float, n_modes: Optional[int] = None
) -> NoiseBudget:
    """
    Per-quadrature noise accumulated by a step sequence under the averaged channels.

    The averaged maps are composed on a zero-covariance tracer, so Fourier
    rotations move earlier blur between quadratures. Deletions add nothing.
    """
    if not steps:
        raise ValidationError("Noise budget needs at least one step.")
    epsilon = _check_epsilon(epsilon)
    steps = [s if isinstance(s, GateStepRecord) else GateStepRecord.averaged(*s) for s in steps]
    width = max(max(s.modes) for s in steps) + 1
    n = max(n_modes or 0, width)
    tracer = GaussianState(np.zeros(2 * n), np.zeros((2 * n, 2 * n)))
    for step in steps:
        if step.kind in (GateKind.ONE_MODE, GateKind.IDENTITY):
            shear = 0 if step.kind == GateKind.IDENTITY else step.shear
            tracer = one_mode_gate_averaged(tracer, step.modes[0], epsilon, shear)
        elif step.kind == GateKind.TWO_MODE:
            tracer = two_mode_gate_averaged(tracer, step.modes, epsilon)
    variances = np.diag(tracer.cov)
    return NoiseBudget(variances[:n], variances[n:])


def graph_summary(graph: FlowerbedGraph) -> Dict[str, int]:
    return {
        "rows": graph.rows,
        "cols": graph.cols,
        "base_nodes": graph.n_modes,
        "ancilla_markers": len(graph.ancilla_markers()),
        "edges": len(graph.base_edges()),
    }
