"""
Experiment engines behind the management commands.

Each engine takes a RunConfig, runs one experiment end to end and returns an
ExperimentResult; writing files and recording the run is left to the caller.
"""
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional, Tuple
import logging

import numpy as np
from django.conf import settings
from django.core.exceptions import ValidationError

from . import __version__
from .cluster_ops import (
    build_flowerbed,
    delete_node,
    graph_summary,
    lattice_state,
    noise_budget,
    one_mode_gate_averaged,
    one_mode_gate_conditioned,
    one_mode_gate_monte_carlo,
    one_mode_gate_outcome_average,
    sample_one_mode_outcome,
    sample_two_mode_outcomes,
    two_mode_gate_averaged,
    two_mode_gate_conditioned,
    two_mode_gate_outcome_average,
)
from .gaussian import (
    GaussianState,
    SqueezedThermalSpec,
    random_gaussian_state,
    vacuum_state,
)
from .gkp_threshold import (
    budget_error_rates,
    calibrate_multiplier,
    required_squeezing,
    table_levels,
    threshold_table,
)
from .models import ExperimentCommand, GateKind, NodeKind, OutputFormat
from .serializers import (
    ErrorModelSerializer,
    FlowerbedGraphSerializer,
    GateStepRecordSerializer,
    GaussianStateSerializer,
    ThresholdRowSerializer,
)
from .wigner_grid import (
    GridSpec,
    GridWigner,
    average_over_outcomes,
    bruteforce_builder,
    compare,
    discretize,
    gkp_zero_grid,
    outcome_grid,
)

logger = logging.getLogger(__name__)

DEFAULT_DELTAS = (0.0, 0.5, 1.0, 2.0, 4.0)
DEFAULT_S = 1.78
DEFAULT_GKP_DELTA = 0.25
MC_RELATIVE_TOL = 0.02
MC_STANDARD_ERRORS = 5.0
GRID_LINF_TOL = 1e-4
GRID_MOMENT_TOL = 1e-3
CONTROL_MIN_SPREAD = 0.01
CONTROL_OUTCOME = 0.5
DELETION_TOL = 1e-10
TARGET_RATES = (1e-3, 1e-2)
DEFAULT_FORMATS = {
    ExperimentCommand.KAPPA_SWEEP: [OutputFormat.CSV],
    ExperimentCommand.THRESHOLD_TABLE: [OutputFormat.CSV],
    ExperimentCommand.DELETE_CHECK: [OutputFormat.JSON],
    ExperimentCommand.ELLIPSE_PLOT: [OutputFormat.SVG],
    ExperimentCommand.GATE_DEMO: [OutputFormat.JSON],
}
SUPPORTED_FORMATS = {
    ExperimentCommand.KAPPA_SWEEP: {OutputFormat.CSV, OutputFormat.JSON, OutputFormat.BIN},
    ExperimentCommand.THRESHOLD_TABLE: {OutputFormat.CSV, OutputFormat.JSON},
    ExperimentCommand.DELETE_CHECK: {OutputFormat.CSV, OutputFormat.JSON},
    ExperimentCommand.ELLIPSE_PLOT: {OutputFormat.SVG, OutputFormat.CSV, OutputFormat.JSON},
    ExperimentCommand.GATE_DEMO: {OutputFormat.JSON},
}


@dataclass
class RunConfig:
    """Everything a command run depends on; echoed into every output file."""

    command: str
    seed: int = 42
    output_dir: str = ""
    formats: List[str] = field(default_factory=list)
    tolerance: Optional[float] = None
    grid_n: Optional[int] = None
    grid_l: Optional[float] = None
    s: float = DEFAULT_S
    delta: float = 0.0
    squeeze_db: Optional[float] = None
    levels: List[float] = field(default_factory=list)
    anchor_db: float = 20.5
    anchor_p: float = 1e-6
    average: bool = False
    gate: str = "one-mode"
    shear: int = 0
    rows: int = 3
    cols: int = 3
    trials: int = 100
    states: Optional[List[Tuple[float, float]]] = None
    samples: Optional[int] = None
    deltas: List[float] = field(default_factory=lambda: list(DEFAULT_DELTAS))
    gkp_delta: float = DEFAULT_GKP_DELTA

    def __post_init__(self):
        self.command = ExperimentCommand(self.command)
        if not self.formats:
            self.formats = list(DEFAULT_FORMATS[self.command])
        self.formats = [OutputFormat(f) for f in self.formats]
        unsupported = [f.value for f in self.formats if f not in SUPPORTED_FORMATS[self.command]]
        if unsupported:
            raise ValidationError(f"{self.command.value} cannot write {', '.join(unsupported)} output.")
        # building the SqueezedThermalSpec validates s, delta and squeeze_db
        self.spec
        if self.tolerance is None:
            self.tolerance = (
                DELETION_TOL if self.command == ExperimentCommand.DELETE_CHECK else settings.CVSIM_TOLERANCE
            )

    @property
    def spec(self) -> SqueezedThermalSpec:
        if self.squeeze_db is not None:
            return SqueezedThermalSpec.from_db(self.squeeze_db, self.delta)
        return SqueezedThermalSpec(self.s, self.delta)

    def grid_spec(self, two_mode: bool = False) -> GridSpec:
        default = GridSpec.two_mode_default() if two_mode else GridSpec.one_mode_default()
        return GridSpec(
            self.grid_l if self.grid_l is not None else default.extent,
            self.grid_n if self.grid_n is not None else default.points,
        )

    def as_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["command"] = self.command.value
        data["formats"] = [f.value for f in self.formats]
        if self.states is not None:
            data["states"] = [list(pair) for pair in self.states]
        return data


@dataclass
class ExperimentResult:
    command: str
    columns: List[str] = field(default_factory=list)
    rows: List[Dict[str, Any]] = field(default_factory=list)
    metrics: Dict[str, Any] = field(default_factory=dict)
    breaches: List[str] = field(default_factory=list)
    payload: Dict[str, Any] = field(default_factory=dict)
    grids: Dict[str, GridWigner] = field(default_factory=dict)
    notes: List[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.breaches


def moments_row(state: GaussianState, mode: int = 0) -> Dict[str, float]:
    n = state.n_modes
    q, p = mode, n + mode
    return {
        "mean_q": float(state.mean[q]),
        "mean_p": float(state.mean[p]),
        "var_q": float(state.cov[q, q]),
        "var_p": float(state.cov[p, p]),
        "cov_qp": float(state.cov[q, p]),
    }


def moment_deviation(a: GaussianState, b: GaussianState) -> float:
    cov_dev, mean_dev = a.distance(b)
    return max(cov_dev, mean_dev)


def monte_carlo_deviation(sampled: GaussianState, reference: GaussianState, samples: int) -> Tuple[float, float]:
    """
    Relative deviation of a sampled mixture from the exact average, and the
    same deviation in standard errors of a sample of that size.
    """
    cov = reference.cov
    scale = max(1.0, float(np.abs(cov).max()))
    relative = moment_deviation(sampled, reference) / scale
    variances = np.diag(cov)
    mean_se = np.sqrt(variances / samples)
    cov_se = np.sqrt((np.outer(variances, variances) + cov**2) / samples)
    z = max(
        float((np.abs(sampled.mean - reference.mean) / mean_se).max()),
        float((np.abs(sampled.cov - cov) / cov_se).max()),
    )
    return relative, z


def state_payload(state: Optional[GaussianState]) -> Optional[Dict[str, Any]]:
    if state is None:
        return None
    return GaussianStateSerializer(state).data


class BaseEngine:
    command: str = ""

    def __init__(self, config: RunConfig):
        self.config = config
        self.seed_sequence = np.random.SeedSequence(config.seed)

    def run(self) -> ExperimentResult:
        try:
            result = self._run()
            for breach in result.breaches:
                logger.warning(f"{self.command}: {breach}")
            return result
        except Exception as e:
            logger.error(f"{self.command} failed: {str(e)}")
            raise

    def _run(self) -> ExperimentResult:
        raise NotImplementedError

    def _children(self, count: int) -> List[np.random.SeedSequence]:
        return self.seed_sequence.spawn(count)


class KappaSweepEngine(BaseEngine):
    """
    Runs the outcome-averaged one-mode channel across excess anti-squeezing
    values through three independent paths and checks that nothing moves.
    """

    command = ExperimentCommand.KAPPA_SWEEP
    columns = [
        "delta", "kappa", "mean_q", "mean_p", "var_q", "var_p", "cov_qp",
        "cov_dev", "two_mode_cov_dev", "mc_dev", "mc_z", "grid_gauss_linf", "grid_gkp_linf",
        "grid_moment_dev", "conditioned_var_q",
    ]

    def _run(self) -> ExperimentResult:
        cfg = self.config
        base = cfg.spec
        m = int(cfg.shear)
        inputs_seq, mc_seq = self._children(2)
        one_mode_inputs = [random_gaussian_state(1, s) for s in inputs_seq.spawn(cfg.trials)]
        two_mode_inputs = [random_gaussian_state(2, s) for s in inputs_seq.spawn(cfg.trials)]
        gauss_input = self._grid_gaussian_input()
        grid_spec = cfg.grid_spec()
        gauss_grid = discretize(gauss_input, grid_spec)
        gkp_grid = gkp_zero_grid(cfg.gkp_delta, grid_spec)
        mc_seeds = mc_seq.spawn(len(cfg.deltas))

        rows = []
        reference_grids = {}
        averaged_gauss = one_mode_gate_averaged(gauss_input, 0, base.epsilon, m)
        for delta, mc_seed in zip(cfg.deltas, mc_seeds):
            spec = SqueezedThermalSpec(base.s, delta)
            row = {"delta": float(delta), "kappa": spec.kappa}

            exact = one_mode_gate_outcome_average(gauss_input, 0, spec, m)
            row.update(moments_row(exact))
            row["cov_dev"] = max(
                moment_deviation(
                    one_mode_gate_outcome_average(st, 0, spec, m),
                    one_mode_gate_averaged(st, 0, spec.epsilon, m),
                )
                for st in one_mode_inputs
            )
            row["two_mode_cov_dev"] = max(
                moment_deviation(
                    two_mode_gate_outcome_average(st, (0, 1), spec),
                    two_mode_gate_averaged(st, (0, 1), spec.epsilon),
                )
                for st in two_mode_inputs
            )

            samples = settings.CVSIM_MC_SAMPLES if cfg.samples is None else cfg.samples
            sampled = one_mode_gate_monte_carlo(gauss_input, 0, spec, m, samples, mc_seed)
            row["mc_dev"], row["mc_z"] = monte_carlo_deviation(sampled, averaged_gauss, samples)

            grids = {}
            for label, grid in (("gauss", gauss_grid), ("gkp", gkp_grid)):
                builder = bruteforce_builder(grid, spec.epsilon, spec.kappa, m)
                grids[label] = average_over_outcomes(builder, outcome_grid(spec.kappa, grid_spec))
                reference_grids.setdefault(label, grids[label])
                if label == "gkp" and "gkp_conditioned" not in reference_grids:
                    reference_grids["gkp_conditioned"] = builder(CONTROL_OUTCOME)
            row["grid_gauss_linf"] = compare(grids["gauss"], reference_grids["gauss"]).linf
            row["grid_gkp_linf"] = compare(grids["gkp"], reference_grids["gkp"]).linf
            grid_mean, grid_cov = grids["gauss"].moments()
            row["grid_moment_dev"] = float(
                max(np.abs(grid_mean - averaged_gauss.mean).max(), np.abs(grid_cov - averaged_gauss.cov).max())
            )

            conditioned = one_mode_gate_conditioned(gauss_input, 0, spec, m, CONTROL_OUTCOME)
            row["conditioned_var_q"] = float(conditioned.state.cov[0, 0])
            rows.append(row)
            logger.info(f"kappa sweep: delta={delta} done (cov_dev={row['cov_dev']:.3e})")

        metrics = {
            "cov_path_max_dev": max(r["cov_dev"] for r in rows),
            "two_mode_cov_path_max_dev": max(r["two_mode_cov_dev"] for r in rows),
            "cross_delta_cov_dev": self._cross_delta_spread(rows, ["mean_q", "mean_p", "var_q", "var_p", "cov_qp"]),
            "mc_max_rel_dev": max(r["mc_dev"] for r in rows),
            "mc_max_z": max(r["mc_z"] for r in rows),
            "grid_gauss_max_linf": max(r["grid_gauss_linf"] for r in rows),
            "grid_gkp_max_linf": max(r["grid_gkp_linf"] for r in rows),
            "grid_moment_max_dev": max(r["grid_moment_dev"] for r in rows),
            "conditioned_control_spread": self._cross_delta_spread(rows, ["conditioned_var_q"]),
        }
        result = ExperimentResult(self.command, list(self.columns), rows, metrics)
        result.grids.update(
            gauss_input=gauss_grid,
            gkp_input=gkp_grid,
            gauss_averaged=reference_grids["gauss"],
            gkp_averaged=reference_grids["gkp"],
            # first delta, fixed outcome
            gkp_conditioned=reference_grids["gkp_conditioned"],
        )
        self._check(result)
        return result

    def _grid_gaussian_input(self) -> GaussianState:
        spec = SqueezedThermalSpec(1.3, 0.3)
        return GaussianState([0.4, -0.3], np.diag([spec.kappa, spec.epsilon]))

    @staticmethod
    def _cross_delta_spread(rows, keys) -> float:
        return max(max(r[k] for r in rows) - min(r[k] for r in rows) for k in keys)

    def _check(self, result: ExperimentResult) -> None:
        tol = self.config.tolerance
        m = result.metrics
        if m["cov_path_max_dev"] > tol or m["cross_delta_cov_dev"] > tol:
            result.breaches.append(f"averaged one-mode moments moved with delta ({m['cov_path_max_dev']:.3e})")
        if m["two_mode_cov_path_max_dev"] > tol:
            result.breaches.append(f"averaged two-mode moments moved with delta ({m['two_mode_cov_path_max_dev']:.3e})")
        if m["mc_max_rel_dev"] > MC_RELATIVE_TOL and m["mc_max_z"] > MC_STANDARD_ERRORS:
            result.breaches.append(
                f"Monte-Carlo average off by {m['mc_max_rel_dev']:.3e} ({m['mc_max_z']:.1f} standard errors)"
            )
        if m["grid_gauss_max_linf"] > GRID_LINF_TOL or m["grid_gkp_max_linf"] > GRID_LINF_TOL:
            result.breaches.append("grid-averaged outputs differ across delta")
        if m["grid_moment_max_dev"] > GRID_MOMENT_TOL:
            result.breaches.append(f"grid and covariance averages disagree ({m['grid_moment_max_dev']:.3e})")
        if len(result.rows) > 1 and m["conditioned_control_spread"] <= CONTROL_MIN_SPREAD:
            result.breaches.append("conditioned control does not depend on delta; sweep is vacuous")


class ThresholdTableEngine(BaseEngine):
    command = ExperimentCommand.THRESHOLD_TABLE
    columns = ["db", "epsilon", "sigma2_total", "p_err"]

    def _run(self) -> ExperimentResult:
        cfg = self.config
        model = calibrate_multiplier(cfg.anchor_db, cfg.anchor_p)
        rows = ThresholdRowSerializer(threshold_table(model, table_levels(cfg.levels)), many=True).data
        metrics = {
            "multiplier": model.multiplier,
            "anchor_db": model.anchor_db,
            "anchor_p": model.anchor_p,
            "required_squeezing_db": {
                repr(p): required_squeezing(model, p) for p in TARGET_RATES
            },
        }
        notes = [f"{r['db']!r} dB: {r['note']}" for r in rows if r["note"]]
        payload = {
            "calibration": ErrorModelSerializer(model).data,
        }
        return ExperimentResult(self.command, list(self.columns), rows, metrics, payload=payload, notes=notes)


class DeleteCheckEngine(BaseEngine):
    """Deletes random nodes over many trials and compares with the never-attached lattice."""

    command = ExperimentCommand.DELETE_CHECK
    columns = ["trial", "node", "outcome", "cov_dev", "mean_dev"]

    def _run(self) -> ExperimentResult:
        cfg = self.config
        spec = cfg.spec
        rows = []
        for trial, child in enumerate(self._children(cfg.trials)):
            rng = np.random.default_rng(child)
            graph, state = build_flowerbed(cfg.rows, cfg.cols, spec)
            candidates = graph.interior_nodes() or [
                n for n in graph.base_nodes() if graph.kind(n) == NodeKind.THERMAL_BASE
            ]
            node = candidates[int(rng.integers(len(candidates)))]
            remaining, after = delete_node(state, graph, node, seed=rng)
            cov_dev, mean_dev = (0.0, 0.0)
            if remaining is not None:
                cov_dev, mean_dev = remaining.distance(lattice_state(after, spec))
            rows.append({
                "trial": trial,
                "node": f"{node[0]},{node[1]}",
                "outcome": after.steps[-1].outcomes[0],
                "cov_dev": cov_dev,
                "mean_dev": mean_dev,
            })

        metrics = {
            "lattice": graph_summary(graph),
            "trials": cfg.trials,
            "max_deviation": max(max(r["cov_dev"], r["mean_dev"]) for r in rows),
            "rejection_exercised": self._input_rejected(spec),
        }
        payload = {"last_lattice": FlowerbedGraphSerializer(after).data}
        result = ExperimentResult(self.command, list(self.columns), rows, metrics, payload=payload)
        if metrics["max_deviation"] >= cfg.tolerance:
            result.breaches.append(f"deletion left a deviation of {metrics['max_deviation']:.3e}")
        if not metrics["rejection_exercised"]:
            result.breaches.append("deleting an input node was not rejected")
        return result

    def _input_rejected(self, spec: SqueezedThermalSpec) -> bool:
        graph, state = build_flowerbed(self.config.rows, self.config.cols, spec)
        node = graph.base_nodes()[0]
        graph.mark(node, NodeKind.INPUT)
        try:
            delete_node(state, graph, node, outcome=0.0)
        except ValidationError as e:
            logger.info(f"Input node deletion rejected: {e.messages[0]}")
            return True
        return False


class EllipsePlotEngine(BaseEngine):
    command = ExperimentCommand.ELLIPSE_PLOT
    columns = ["s", "delta", "kappa", "epsilon", "squeezing_db", "dashed"]
    default_states = ((1.0, 0.0), (DEFAULT_S, 0.0), (DEFAULT_S, 1.0))

    def _run(self) -> ExperimentResult:
        pairs = list(self.default_states) if self.config.states is None else list(self.config.states)
        if not pairs:
            raise ValidationError("Ellipse plot needs at least one (s, delta) state.")
        rows = []
        for s, delta in pairs:
            spec = SqueezedThermalSpec(float(s), float(delta))
            rows.append({
                "s": spec.s,
                "delta": spec.delta,
                "kappa": spec.kappa,
                "epsilon": spec.epsilon,
                "squeezing_db": spec.squeezing_db,
                "dashed": not spec.is_pure,
            })
        return ExperimentResult(self.command, list(self.columns), rows, {"states": len(rows)})


class GateDemoEngine(BaseEngine):
    """Runs one conditioned gate with sampled outcomes and records its trace."""

    command = ExperimentCommand.GATE_DEMO
    gates = ("one-mode", "two-mode")

    def _run(self) -> ExperimentResult:
        cfg = self.config
        if cfg.gate not in self.gates:
            raise ValidationError(f"Unknown gate {cfg.gate!r}; choose one of {self.gates}.")
        spec = cfg.spec
        rng = np.random.default_rng(self._children(1)[0])
        if cfg.gate == "one-mode":
            state = vacuum_state(1)
            t = sample_one_mode_outcome(state, 0, spec, cfg.shear, rng)
            result = one_mode_gate_conditioned(state, 0, spec, cfg.shear, t)
            averaged = one_mode_gate_averaged(state, 0, spec.epsilon, cfg.shear)
            exact = one_mode_gate_outcome_average(state, 0, spec, cfg.shear)
            budget = noise_budget([(GateKind.ONE_MODE, (0,), cfg.shear)], spec.epsilon)
        else:
            state = vacuum_state(2)
            r, t = sample_two_mode_outcomes(state, (0, 1), spec, rng)
            result = two_mode_gate_conditioned(state, (0, 1), spec, (r, t))
            averaged = two_mode_gate_averaged(state, (0, 1), spec.epsilon)
            exact = two_mode_gate_outcome_average(state, (0, 1), spec)
            budget = noise_budget([(GateKind.TWO_MODE, (0, 1))], spec.epsilon)

        record = result.record
        trace = GateStepRecordSerializer([record], many=True).data
        for step in trace:
            logger.info(f"gate demo step: {dict(step)}")
        payload = {
            "gate": cfg.gate,
            "spec": {"s": spec.s, "delta": spec.delta, "epsilon": spec.epsilon, "kappa": spec.kappa},
            "trace": trace,
            "final_state": state_payload(result.state),
            "averaged_state": state_payload(averaged),
            "noise_budget": {
                "variances": budget.as_matrix().tolist(),
                "misbin": budget_error_rates(budget).tolist(),
            },
        }
        metrics = {"density": result.density, "outcomes": list(record.outcomes)}
        if cfg.average:
            payload["outcome_average_state"] = state_payload(exact)
            metrics["outcome_average_dev"] = moment_deviation(exact, averaged)
            if metrics["outcome_average_dev"] > cfg.tolerance:
                breach = f"outcome average differs from the averaged channel by {metrics['outcome_average_dev']:.3e}"
                return ExperimentResult(self.command, [], [], metrics, [breach], payload=payload)
        return ExperimentResult(self.command, [], [], metrics, payload=payload)


ENGINES = {
    ExperimentCommand.KAPPA_SWEEP: KappaSweepEngine,
    ExperimentCommand.THRESHOLD_TABLE: ThresholdTableEngine,
    ExperimentCommand.DELETE_CHECK: DeleteCheckEngine,
    ExperimentCommand.ELLIPSE_PLOT: EllipsePlotEngine,
    ExperimentCommand.GATE_DEMO: GateDemoEngine,
}


def run_experiment(config: RunConfig) -> ExperimentResult:
    return ENGINES[config.command](config).run()


def provenance(config: RunConfig) -> Dict[str, Any]:
    return {
        "version": __version__,
        "command": config.command.value,
        "seed": config.seed,
        "tolerance": config.tolerance,
        "config": config.as_dict(),
    }
