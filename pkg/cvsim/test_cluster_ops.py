import time
from unittest import mock

import numpy as np
from django.core.exceptions import ValidationError
from django.test import SimpleTestCase
from scipy import stats

from . import cluster_ops
from .cluster_ops import (
    FlowerbedGraph,
    GateStepRecord,
    _one_mode_pre_measurement,
    _two_mode_pre_measurement,
    build_flowerbed,
    delete_node,
    graph_summary,
    lattice_state,
    noise_budget,
    one_mode_gate_averaged,
    one_mode_gate_conditioned,
    one_mode_gate_monte_carlo,
    one_mode_gate_outcome_average,
    two_mode_gate_averaged,
    two_mode_gate_conditioned,
    two_mode_gate_monte_carlo,
    two_mode_gate_outcome_average,
)
from .experiments import monte_carlo_deviation
from .gaussian import (
    SqueezedThermalSpec,
    apply_symplectic,
    permute_modes,
    random_gaussian_state,
    readout_vector,
    sample_quadrature,
    standard_transform,
    vacuum_state,
)
from .models import CorrectionKind, GateKind, NodeKind, Quadrature, TransformKind

SPEC = SqueezedThermalSpec(1.78, 0.0)


class OneModeGateTests(SimpleTestCase):
    def test_conditioned_vacuum_input(self):
        """Outcome t narrows q to kappa/(2 kappa + 1) and shifts it by -t/(2 kappa + 1)"""
        for delta in (0.0, 2.0):
            spec = SqueezedThermalSpec(1.78, delta)
            kappa, epsilon = spec.kappa, spec.epsilon
            t = 0.6
            result = one_mode_gate_conditioned(vacuum_state(1), 0, spec, 0, t)
            np.testing.assert_allclose(
                result.state.cov, np.diag([kappa / (2 * kappa + 1), 0.5 + epsilon]), atol=1e-12
            )
            np.testing.assert_allclose(result.state.mean, [-t / (2 * kappa + 1), 0.0], atol=1e-12)
            self.assertAlmostEqual(result.density, stats.norm.pdf(t, scale=np.sqrt(0.5 + kappa)))

    def test_outcome_density_is_normalized(self):
        state = random_gaussian_state(2, 4)
        spec = SqueezedThermalSpec(1.78, 1.0)
        outcomes = np.arange(-15.0, 15.0, 0.05)
        densities = [one_mode_gate_conditioned(state, 0, spec, 1, t).density for t in outcomes]
        self.assertAlmostEqual(np.sum(densities) * 0.05, 1.0, delta=1e-6)

    def test_conditioned_record(self):
        result = one_mode_gate_conditioned(vacuum_state(1), 0, SPEC, 1, -0.25)
        record = result.record
        self.assertEqual(record.kind, GateKind.ONE_MODE)
        self.assertEqual(record.shear, 1)
        self.assertEqual(record.outcomes, (-0.25,))
        self.assertEqual(record.corrections[0].kind, CorrectionKind.X)
        self.assertAlmostEqual(record.corrections[0].amount, 0.25)
        self.assertTrue(record.conditioned)

    def test_averaged_vacuum_input(self):
        """Averaging removes kappa: Fourier rotation plus epsilon on p"""
        out = one_mode_gate_averaged(vacuum_state(1), 0, SPEC.epsilon, 0)
        np.testing.assert_allclose(out.cov, np.diag([0.5, 0.5 + SPEC.epsilon]), atol=1e-15)

    def test_outcome_average_matches_averaged_channel(self):
        """Exact outcome average equals the kappa-free map for every delta"""
        for seed in range(25):
            state = random_gaussian_state(2, seed)
            for delta in (0.0, 0.5, 4.0):
                spec = SqueezedThermalSpec(1.78, delta)
                for m in (0, 1):
                    exact = one_mode_gate_outcome_average(state, 1, spec, m)
                    averaged = one_mode_gate_averaged(state, 1, spec.epsilon, m)
                    self.assertTrue(exact.allclose(averaged, atol=1e-9))

    def test_monte_carlo_converges(self):
        state = random_gaussian_state(1, 5)
        for delta in (0.0, 3.0):
            spec = SqueezedThermalSpec(1.78, delta)
            sampled = one_mode_gate_monte_carlo(state, 0, spec, 1, samples=4000, seed=17)
            averaged = one_mode_gate_averaged(state, 0, spec.epsilon, 1)
            _, z = monte_carlo_deviation(sampled, averaged, 4000)
            self.assertLess(z, 5.0)

    def test_monte_carlo_is_seeded(self):
        a = one_mode_gate_monte_carlo(vacuum_state(1), 0, SPEC, 0, samples=50, seed=3)
        b = one_mode_gate_monte_carlo(vacuum_state(1), 0, SPEC, 0, samples=50, seed=3)
        self.assertTrue(a.allclose(b, atol=0.0))

    def test_monte_carlo_matches_per_outcome_mixture(self):
        """One shared conditioning step gives the mixture of outcome-by-outcome conditioned states"""
        state = random_gaussian_state(2, 6)
        spec = SqueezedThermalSpec(1.5, 1.0)
        joint = _one_mode_pre_measurement(state, 0, spec, 1)
        outcomes = sample_quadrature(joint, 0, Quadrature.P, np.random.default_rng(31), size=200)
        outputs = [one_mode_gate_conditioned(state, 0, spec, 1, t).state for t in outcomes]
        means = np.array([out.mean for out in outputs])
        expected_cov = np.mean([out.cov for out in outputs], axis=0) + np.cov(means.T, bias=True)
        sampled = one_mode_gate_monte_carlo(state, 0, spec, 1, samples=200, seed=31)
        np.testing.assert_allclose(sampled.mean, means.mean(axis=0), atol=1e-10)
        np.testing.assert_allclose(sampled.cov, expected_cov, atol=1e-10)

    def test_monte_carlo_builds_joint_state_once(self):
        with mock.patch.object(
            cluster_ops, "_one_mode_pre_measurement", wraps=_one_mode_pre_measurement
        ) as pre:
            one_mode_gate_monte_carlo(vacuum_state(1), 0, SPEC, 1, samples=10_000, seed=1)
        self.assertEqual(pre.call_count, 1)

    def test_monte_carlo_throughput(self):
        """Ten thousand samples of either gate stay well inside a second"""
        state = random_gaussian_state(2, 3)
        start = time.perf_counter()
        one_mode_gate_monte_carlo(state, 0, SPEC, 1, samples=10_000, seed=2)
        two_mode_gate_monte_carlo(state, (0, 1), SPEC, samples=10_000, seed=2)
        self.assertLess(time.perf_counter() - start, 1.0)

    def test_monte_carlo_needs_samples(self):
        with self.assertRaises(ValidationError):
            one_mode_gate_monte_carlo(vacuum_state(1), 0, SPEC, 0, samples=0, seed=1)
        with self.assertRaises(ValidationError):
            two_mode_gate_monte_carlo(vacuum_state(2), (0, 1), SPEC, samples=0, seed=1)

    def test_large_squeezing_limit(self):
        """At s = 100 the conditioned gate barely disturbs the vacuum"""
        result = one_mode_gate_conditioned(vacuum_state(1), 0, SqueezedThermalSpec(100.0, 0.0), 0, 0.0)
        np.testing.assert_allclose(result.state.cov, 0.5 * np.eye(2), atol=1e-3)

    def test_invalid_shear(self):
        with self.assertRaises(ValidationError):
            one_mode_gate_averaged(vacuum_state(1), 0, SPEC.epsilon, 2)
        with self.assertRaises(ValidationError):
            one_mode_gate_conditioned(vacuum_state(1), 0, SPEC, -1, 0.0)


class TwoModeGateTests(SimpleTestCase):
    def test_averaged_vacuum_pair(self):
        """CZ[-1] then epsilon on both momenta"""
        out = two_mode_gate_averaged(vacuum_state(2), (0, 1), SPEC.epsilon)
        expected = np.array([
            [0.5, 0.0, 0.0, -0.5],
            [0.0, 0.5, -0.5, 0.0],
            [0.0, -0.5, 1.0 + SPEC.epsilon, 0.0],
            [-0.5, 0.0, 0.0, 1.0 + SPEC.epsilon],
        ])
        np.testing.assert_allclose(out.cov, expected, atol=1e-15)

    def test_identity_gates_option(self):
        state = random_gaussian_state(2, 8)
        plain = two_mode_gate_averaged(state, (0, 1), SPEC.epsilon)
        with_identities = two_mode_gate_averaged(state, (0, 1), SPEC.epsilon, identity_gates=True)
        expected = one_mode_gate_averaged(one_mode_gate_averaged(plain, 0, SPEC.epsilon, 0), 1, SPEC.epsilon, 0)
        self.assertTrue(with_identities.allclose(expected))

    def test_outcome_average_matches_averaged_channel(self):
        for seed in range(25):
            state = random_gaussian_state(3, seed)
            for delta in (0.0, 3.0):
                spec = SqueezedThermalSpec(1.5, delta)
                exact = two_mode_gate_outcome_average(state, (2, 0), spec)
                averaged = two_mode_gate_averaged(state, (2, 0), spec.epsilon)
                self.assertTrue(exact.allclose(averaged, atol=1e-9))

    def test_conditioned_record_and_shape(self):
        result = two_mode_gate_conditioned(vacuum_state(2), (0, 1), SPEC, (0.3, -0.4))
        self.assertEqual(result.state.n_modes, 2)
        record = result.record
        self.assertEqual(record.kind, GateKind.TWO_MODE)
        self.assertEqual(record.outcomes, (0.3, -0.4))
        amounts = {(c.kind, c.mode): c.amount for c in record.corrections}
        self.assertAlmostEqual(amounts[(CorrectionKind.Z, 0)], 0.4)
        self.assertAlmostEqual(amounts[(CorrectionKind.Z, 1)], -0.3)
        self.assertGreater(result.density, 0.0)

    def test_monte_carlo_converges(self):
        state = random_gaussian_state(2, 13)
        spec = SqueezedThermalSpec(1.78, 3.0)
        sampled = two_mode_gate_monte_carlo(state, (0, 1), spec, samples=4000, seed=23)
        averaged = two_mode_gate_averaged(state, (0, 1), spec.epsilon)
        _, z = monte_carlo_deviation(sampled, averaged, 4000)
        self.assertLess(z, 5.0)

    def test_monte_carlo_matches_per_outcome_mixture(self):
        state = random_gaussian_state(3, 9)
        spec = SqueezedThermalSpec(1.5, 2.0)
        joint = _two_mode_pre_measurement(state, (2, 0), spec)
        readouts = np.stack([readout_vector(5, 3, Quadrature.P), readout_vector(5, 4, Quadrature.P)])
        outcomes = np.random.default_rng(41).multivariate_normal(
            readouts @ joint.mean, readouts @ joint.cov @ readouts.T, size=200
        )
        outputs = [two_mode_gate_conditioned(state, (2, 0), spec, tuple(rt)).state for rt in outcomes]
        means = np.array([out.mean for out in outputs])
        expected_cov = np.mean([out.cov for out in outputs], axis=0) + np.cov(means.T, bias=True)
        sampled = two_mode_gate_monte_carlo(state, (2, 0), spec, samples=200, seed=41)
        np.testing.assert_allclose(sampled.mean, means.mean(axis=0), atol=1e-10)
        np.testing.assert_allclose(sampled.cov, expected_cov, atol=1e-10)

    def test_conditioned_output_depends_on_kappa(self):
        """Before averaging the connecting nodes' anti-squeezing shows up in the output"""
        pure, mixed = (
            two_mode_gate_conditioned(vacuum_state(2), (0, 1), SqueezedThermalSpec(1.78, delta), (0.3, -0.4)).state
            for delta in (0.0, 3.0)
        )
        self.assertGreater(np.abs(pure.cov - mixed.cov).max(), 0.01)

    def test_large_squeezing_limit(self):
        """At s = 100 the conditioned gate is CZ[-1] up to the residual blur"""
        result = two_mode_gate_conditioned(vacuum_state(2), (0, 1), SqueezedThermalSpec(100.0, 0.0), (0.0, 0.0))
        target = apply_symplectic(vacuum_state(2), standard_transform(TransformKind.CZ, (0, 1), 2, -1.0))
        cov_dev, _ = result.state.distance(target)
        self.assertLess(cov_dev, 1e-3)

    def test_zero_outcomes_keep_swap_symmetry(self):
        out = two_mode_gate_conditioned(vacuum_state(2), (0, 1), SqueezedThermalSpec(1.78, 1.0), (0.0, 0.0)).state
        self.assertTrue(permute_modes(out, [1, 0]).allclose(out, atol=1e-12))

    def test_joint_outcome_density_is_normalized(self):
        state = random_gaussian_state(2, 4)
        step = 0.5
        axis = np.arange(-15.0, 15.0, step)
        total = sum(
            two_mode_gate_conditioned(state, (0, 1), SPEC, (r, t)).density for r in axis for t in axis
        )
        self.assertAlmostEqual(total * step**2, 1.0, delta=1e-6)

    def test_rejects_bad_pairs(self):
        with self.assertRaises(ValidationError):
            two_mode_gate_averaged(vacuum_state(2), (1, 1), SPEC.epsilon)
        with self.assertRaises(ValidationError):
            two_mode_gate_averaged(vacuum_state(2), (0, 2), SPEC.epsilon)


class FlowerbedTests(SimpleTestCase):
    def test_square_lattice_layout(self):
        graph, state = build_flowerbed(3, 3, SPEC)
        self.assertEqual(graph_summary(graph), {
            "rows": 3, "cols": 3, "base_nodes": 9, "ancilla_markers": 4, "edges": 12,
        })
        self.assertEqual(state.n_modes, 9)
        self.assertTrue(state.is_physical())
        self.assertEqual(graph.interior_nodes(), [(1, 1)])

    def test_mode_cap(self):
        with self.assertRaises(ValidationError):
            build_flowerbed(5, 7, SPEC)
        graph, _ = build_flowerbed(5, 7, SPEC, mode_cap=70)
        self.assertEqual(graph.n_modes, 35)

    def test_deletion_matches_never_attached_lattice(self):
        """Measuring q and undoing the kicks leaves the lattice without that node"""
        spec = SqueezedThermalSpec(1.78, 1.5)
        graph, state = build_flowerbed(3, 4, spec)
        for node, outcome in [((1, 1), 0.7), ((1, 2), -1.3), ((0, 3), 0.2)]:
            remaining, after = delete_node(state, graph, node, outcome=outcome)
            self.assertEqual(after.n_modes, 11)
            cov_dev, mean_dev = remaining.distance(lattice_state(after, spec))
            self.assertLess(cov_dev, 1e-10)
            self.assertLess(mean_dev, 1e-10)

    def test_deletion_record(self):
        graph, state = build_flowerbed(3, 3, SPEC)
        _, after = delete_node(state, graph, (1, 1), outcome=0.5)
        step = after.steps[-1]
        self.assertEqual(step.kind, GateKind.DELETION)
        self.assertEqual(len(step.corrections), 4)
        for correction in step.corrections:
            self.assertEqual(correction.kind, CorrectionKind.Z)
            self.assertAlmostEqual(correction.amount, -0.5)
        self.assertEqual(graph.steps, [])

    def test_corner_deletion_drops_orphan_marker(self):
        graph, state = build_flowerbed(3, 3, SPEC)
        _, after = delete_node(state, graph, (0, 0), outcome=0.0)
        self.assertEqual(len(after.ancilla_markers()), 3)
        self.assertNotIn(("gkp", 0, 0), after.graph)

    def test_sampled_deletion_is_seeded(self):
        graph, state = build_flowerbed(2, 2, SPEC)
        a, _ = delete_node(state, graph, (0, 1), seed=9)
        b, _ = delete_node(state, graph, (0, 1), seed=9)
        self.assertTrue(a.allclose(b, atol=0.0))

    def test_only_base_nodes_can_be_deleted(self):
        graph, state = build_flowerbed(3, 3, SPEC)
        graph.mark((0, 0), NodeKind.INPUT)
        with self.assertRaises(ValidationError):
            delete_node(state, graph, (0, 0), outcome=0.0)
        with self.assertRaises(ValidationError):
            delete_node(state, graph, ("gkp", 0, 0), outcome=0.0)
        with self.assertRaises(ValidationError):
            delete_node(state, graph, (5, 5), outcome=0.0)

    def test_explicit_zero_is_not_the_default(self):
        with self.assertRaises(ValidationError):
            FlowerbedGraph.square(3, 3, ancilla_interval=0)
        with self.assertRaises(ValidationError):
            build_flowerbed(1, 1, SPEC, mode_cap=0)

    def test_ancilla_interval(self):
        graph = FlowerbedGraph.square(4, 4, ancilla_interval=1)
        self.assertEqual(len(graph.ancilla_markers()), 16)
        with self.assertRaises(ValidationError):
            graph.mark(("gkp", 0, 0), NodeKind.INPUT)


class NoiseBudgetTests(SimpleTestCase):
    def test_identity_gates_alternate_quadratures(self):
        """k identity gates give floor(k/2) eps on q and ceil(k/2) eps on p"""
        eps = 0.1
        for k in range(1, 7):
            budget = noise_budget([(GateKind.IDENTITY, (0,))] * k, eps)
            self.assertAlmostEqual(budget.q_variance[0], (k // 2) * eps)
            self.assertAlmostEqual(budget.p_variance[0], ((k + 1) // 2) * eps)

    def test_deletion_adds_nothing(self):
        eps = 0.2
        plain = noise_budget([(GateKind.ONE_MODE, (0,), 1)], eps)
        with_deletion = noise_budget(
            [GateStepRecord(GateKind.DELETION, (1,)), GateStepRecord.averaged(GateKind.ONE_MODE, (0,), 1)], eps
        )
        np.testing.assert_allclose(with_deletion.as_matrix()[0], plain.as_matrix()[0])
        np.testing.assert_allclose(with_deletion.as_matrix()[1], [0.0, 0.0])

    def test_two_mode_gate_budget(self):
        budget = noise_budget([(GateKind.TWO_MODE, (0, 1))], 0.3, n_modes=3)
        np.testing.assert_allclose(budget.as_matrix(), [[0.0, 0.3], [0.0, 0.3], [0.0, 0.0]])

    def test_invalid_steps(self):
        with self.assertRaises(ValidationError):
            noise_budget([], 0.1)
        with self.assertRaises(ValidationError):
            noise_budget([("TELEPORT", (0,))], 0.1)
        with self.assertRaises(ValidationError):
            GateStepRecord(GateKind.ONE_MODE, (0,), outcomes=(0.1,))
