import numpy as np
from django.core.exceptions import ValidationError
from django.test import SimpleTestCase
from scipy import stats

from .cluster_ops import (
    one_mode_gate_averaged,
    one_mode_gate_conditioned,
    two_mode_gate_averaged,
    two_mode_gate_conditioned,
)
from .gaussian import GaussianState, SqueezedThermalSpec, apply_symplectic, standard_transform, vacuum_state
from .models import TransformKind
from .wigner_grid import (
    GridSpec,
    GridWigner,
    average_over_outcomes,
    bruteforce_builder,
    compare,
    convolve_axis,
    discretize,
    gkp_zero_grid,
    marginal,
    negativity_volume,
    one_mode_gate_averaged_grid,
    one_mode_gate_bruteforce,
    one_mode_gate_closed_form,
    outcome_grid,
    resample,
    resolve_two_mode_argument,
    substitute_coordinates,
    two_mode_averaged_assembly,
    two_mode_direct_quadrature,
    two_mode_gate_bruteforce,
)

GRID = GridSpec(8.0, 128)
TWO_MODE_GRID = GridSpec(7.0, 32)
FINE_GRID = GridSpec(8.0, 256)
SPEC = SqueezedThermalSpec(1.78, 0.0)


def relative_linf(a: GridWigner, b: GridWigner) -> float:
    result = compare(a, b)
    return result.linf / np.abs(b.normalized().values).max()


class GridSpecTests(SimpleTestCase):
    def test_cell_centred_symmetric_axis(self):
        axis = GRID.axis
        self.assertEqual(axis.size, 128)
        self.assertAlmostEqual(GRID.step, 0.125)
        np.testing.assert_allclose(axis[::-1], -axis, atol=1e-14)
        self.assertAlmostEqual(axis[0], -8.0 + 0.0625)

    def test_invalid_specs(self):
        with self.assertRaises(ValidationError):
            GridSpec(0.0, 64)
        with self.assertRaises(ValidationError):
            GridSpec(8.0, 48)
        with self.assertRaises(ValidationError):
            GridSpec(8.0, 8)

    def test_defaults_follow_settings(self):
        self.assertEqual(GridSpec.one_mode_default(), GridSpec(8.0, 256))
        self.assertEqual(GridSpec.two_mode_default(), TWO_MODE_GRID)

    def test_values_must_fit(self):
        with self.assertRaises(ValidationError):
            GridWigner(np.zeros((16, 16)), GridSpec(8.0, 32))


class DiscretizeTests(SimpleTestCase):
    def test_mass_and_moments(self):
        state = GaussianState([0.4, -0.3], [[0.8, 0.2], [0.2, 0.6]])
        grid = discretize(state, GRID)
        self.assertAlmostEqual(grid.mass(), 1.0, places=6)
        mean, cov = grid.moments()
        np.testing.assert_allclose(mean, state.mean, atol=1e-6)
        np.testing.assert_allclose(cov, state.cov, atol=1e-6)

    def test_extent_must_cover_state(self):
        with self.assertRaises(ValidationError):
            discretize(GaussianState([7.0, 0.0], 0.5 * np.eye(2)), GRID)
        with self.assertRaises(ValidationError):
            discretize(vacuum_state(3), GRID)

    def test_marginal_is_the_normal_density(self):
        density = marginal(discretize(vacuum_state(1), GRID), 0)
        np.testing.assert_allclose(density, stats.norm.pdf(GRID.axis, scale=np.sqrt(0.5)), atol=1e-8)

    def test_resample_onto_coarser_grid(self):
        target = GridSpec(6.0, 64)
        resampled = resample(discretize(vacuum_state(1), GRID), target)
        expected = discretize(vacuum_state(1), target)
        np.testing.assert_allclose(resampled.values, expected.values, atol=1e-4)

    def test_bytes_layout(self):
        grid = discretize(vacuum_state(1), GRID)
        payload = grid.to_bytes()
        self.assertEqual(len(payload), 24 + 8 * 128 * 128)
        np.testing.assert_array_equal(np.frombuffer(payload[:16], dtype="<i8"), [1, 128])
        self.assertEqual(np.frombuffer(payload[16:24], dtype="<f8")[0], 8.0)
        np.testing.assert_array_equal(GridWigner.from_bytes(payload).values, grid.values)


class GridOperationTests(SimpleTestCase):
    def test_convolution_adds_variance(self):
        blurred = convolve_axis(0.3, discretize(vacuum_state(1), GRID), 0)
        _, cov = blurred.moments()
        np.testing.assert_allclose(cov, np.diag([0.8, 0.5]), atol=1e-6)
        with self.assertRaises(ValidationError):
            convolve_axis(0.0, blurred, 0)
        with self.assertRaises(ValidationError):
            convolve_axis(0.1, blurred, 2)

    def test_fourier_substitution_is_exact_on_nodes(self):
        """The rotation maps nodes to nodes, so no interpolation error appears"""
        state = GaussianState([0.5, -0.3], np.diag([1.0, 0.3]))
        fourier = standard_transform(TransformKind.FOURIER, 0, 1)
        rotated = substitute_coordinates(discretize(state, GRID), fourier)
        expected = discretize(apply_symplectic(state, fourier), GRID)
        np.testing.assert_allclose(rotated.values, expected.values, atol=1e-9)

    def test_shear_substitution_matches_covariance_path(self):
        state = GaussianState([0.2, 0.1], 0.5 * np.eye(2))
        shear = standard_transform(TransformKind.SHEAR, 0, 1, 1.0)
        sheared = substitute_coordinates(discretize(state, GRID), shear)
        mean, cov = sheared.moments()
        out = apply_symplectic(state, shear)
        np.testing.assert_allclose(mean, out.mean, atol=1e-3)
        np.testing.assert_allclose(cov, out.cov, atol=1e-3)

    def test_interpolation_error_shrinks_with_resolution(self):
        """Spline error falls faster than quadratically when N doubles"""
        state = GaussianState([0.0, 0.0], 0.5 * np.eye(2))
        shear = standard_transform(TransformKind.SHEAR, 0, 1, 1.0)
        errors = []
        for points in (64, 128):
            spec = GridSpec(8.0, points)
            sheared = substitute_coordinates(discretize(state, spec), shear)
            exact = discretize(apply_symplectic(state, shear), spec)
            errors.append(np.abs(sheared.values - exact.values).max())
        self.assertLess(errors[1], errors[0] / 4)

    def test_mass_leaving_the_grid_is_an_error(self):
        grid = discretize(vacuum_state(1), GRID)
        with self.assertRaises(ValidationError):
            substitute_coordinates(grid, standard_transform(TransformKind.DISPLACE_Q, 0, 1, 7.0))
        with self.assertRaises(ValidationError):
            substitute_coordinates(grid, standard_transform(TransformKind.CZ, (0, 1), 2, 1.0))

    def test_compare_needs_matching_grids(self):
        with self.assertRaises(ValidationError):
            compare(discretize(vacuum_state(1), GRID), discretize(vacuum_state(1), GridSpec(8.0, 64)))


class OneModeGridGateTests(SimpleTestCase):
    def setUp(self):
        self.vacuum = discretize(vacuum_state(1), GRID)

    def test_bruteforce_matches_closed_form(self):
        for m in (0, 1):
            brute = one_mode_gate_bruteforce(self.vacuum, SPEC.epsilon, SPEC.kappa, m, 0.6)
            closed = one_mode_gate_closed_form(self.vacuum, SPEC.epsilon, SPEC.kappa, m, 0.6)
            self.assertLess(relative_linf(brute, closed), 1e-6)

    def test_bruteforce_matches_covariance_path(self):
        """Grid mass is the outcome density and the moments are the conditioned state"""
        t = 0.6
        state = GaussianState([0.4, -0.3], [[0.7, 0.1], [0.1, 0.5]])
        grid = discretize(state, FINE_GRID)
        for m in (0, 1):
            brute = one_mode_gate_bruteforce(grid, SPEC.epsilon, SPEC.kappa, m, t)
            closed = one_mode_gate_closed_form(grid, SPEC.epsilon, SPEC.kappa, m, t)
            result = one_mode_gate_conditioned(state, 0, SPEC, m, t)
            self.assertAlmostEqual(brute.mass(), result.density, places=6)
            for oracle in (brute, closed):
                mean, cov = oracle.normalized().moments()
                np.testing.assert_allclose(mean, result.state.mean, atol=1e-4)
                np.testing.assert_allclose(cov, result.state.cov, atol=1e-4)

    def test_averaged_grid_matches_covariance_path(self):
        state = GaussianState([0.4, -0.3], [[0.7, 0.1], [0.1, 0.5]])
        for m in (0, 1):
            averaged = one_mode_gate_averaged_grid(discretize(state, FINE_GRID), SPEC.epsilon, m)
            mean, cov = averaged.normalized().moments()
            reference = one_mode_gate_averaged(state, 0, SPEC.epsilon, m)
            np.testing.assert_allclose(mean, reference.mean, atol=1e-4)
            np.testing.assert_allclose(cov, reference.cov, atol=1e-4)

    def test_outcome_average_is_kappa_free(self):
        """Averaging brute-force outputs over t reproduces the envelope-free grid for any kappa"""
        state = GaussianState([0.4, -0.3], [[0.7, 0.1], [0.1, 0.5]])
        grid = discretize(state, GRID)
        averaged = one_mode_gate_averaged_grid(grid, SPEC.epsilon, 1)
        for delta in (0.0, 2.0):
            spec = SqueezedThermalSpec(1.78, delta)
            builder = bruteforce_builder(grid, spec.epsilon, spec.kappa, 1)
            total = average_over_outcomes(builder, outcome_grid(spec.kappa, GRID))
            self.assertLess(relative_linf(total, averaged), 1e-4)
        mean, cov = averaged.normalized().moments()
        reference = one_mode_gate_averaged(state, 0, SPEC.epsilon, 1)
        np.testing.assert_allclose(mean, reference.mean, atol=1e-3)
        np.testing.assert_allclose(cov, reference.cov, atol=1e-3)

    def test_conditioned_gkp_outputs_depend_on_kappa(self):
        """Without averaging the envelope width shows up in the output"""
        gkp = gkp_zero_grid(0.25, GRID)
        outputs = [
            one_mode_gate_bruteforce(gkp, spec.epsilon, spec.kappa, 0, 0.5)
            for spec in (SqueezedThermalSpec(1.78, 0.0), SqueezedThermalSpec(1.78, 3.0))
        ]
        self.assertGreater(compare(*outputs).l1, 0.01)

    def test_outcome_grid_must_cover_density(self):
        builder = bruteforce_builder(self.vacuum, SPEC.epsilon, SPEC.kappa, 0)
        with self.assertRaises(ValidationError):
            average_over_outcomes(builder, np.linspace(-1.0, 1.0, 9))
        with self.assertRaises(ValidationError):
            average_over_outcomes(builder, [0.0])

    def test_needs_one_mode_grid(self):
        two_mode = discretize(vacuum_state(2), TWO_MODE_GRID)
        with self.assertRaises(ValidationError):
            bruteforce_builder(two_mode, SPEC.epsilon, SPEC.kappa, 0)


class GkpGridTests(SimpleTestCase):
    def test_comb_is_normalized_and_negative(self):
        grid = gkp_zero_grid(0.25, GridSpec(8.0, 256))
        self.assertAlmostEqual(grid.mass(), 1.0)
        self.assertGreater(negativity_volume(grid), 0.0)
        self.assertEqual(negativity_volume(discretize(vacuum_state(1), GRID)), 0.0)

    def test_position_teeth(self):
        """Peaks at even multiples of sqrt(pi), troughs in between"""
        spec = GridSpec(8.0, 256)
        density = marginal(gkp_zero_grid(0.25, spec), 0)
        at = lambda x: density[np.argmin(np.abs(spec.axis - x))]  # noqa: E731
        self.assertGreater(at(0.0), 10 * at(np.sqrt(np.pi)))
        self.assertGreater(at(2 * np.sqrt(np.pi)), 10 * at(np.sqrt(np.pi)))

    def test_invalid_width(self):
        with self.assertRaises(ValidationError):
            gkp_zero_grid(1.2, GRID)


class TwoModeGridGateTests(SimpleTestCase):
    def setUp(self):
        self.vacuum = vacuum_state(2)

    def test_averaged_bruteforce_matches_covariance_path(self):
        brute = two_mode_gate_bruteforce(self.vacuum, TWO_MODE_GRID, SPEC.epsilon).normalized()
        mean, cov = brute.moments()
        reference = two_mode_gate_averaged(self.vacuum, (0, 1), SPEC.epsilon)
        np.testing.assert_allclose(mean, reference.mean, atol=1e-4)
        np.testing.assert_allclose(cov, reference.cov, atol=1e-4)

    def test_averaged_assembly_matches_bruteforce(self):
        brute = two_mode_gate_bruteforce(self.vacuum, TWO_MODE_GRID, SPEC.epsilon).normalized()
        assembled = two_mode_averaged_assembly(discretize(self.vacuum, TWO_MODE_GRID), SPEC.epsilon)
        mean_a, cov_a = assembled.normalized().moments()
        mean_b, cov_b = brute.moments()
        np.testing.assert_allclose(mean_a, mean_b, atol=5e-3)
        np.testing.assert_allclose(cov_a, cov_b, atol=5e-3)

    def test_conditioned_bruteforce_matches_covariance_path(self):
        outcomes = (0.3, -0.2)
        brute = two_mode_gate_bruteforce(self.vacuum, TWO_MODE_GRID, SPEC.epsilon, SPEC.kappa, outcomes)
        result = two_mode_gate_conditioned(self.vacuum, (0, 1), SPEC, outcomes)
        mean, cov = brute.normalized().moments()
        np.testing.assert_allclose(mean, result.state.mean, atol=1e-4)
        np.testing.assert_allclose(cov, result.state.cov, atol=1e-4)

    def test_direct_quadrature_matches_bruteforce(self):
        """The literal slice integral agrees with the factorized assembly point by point"""
        outcomes = (0.3, -0.2)
        brute = two_mode_gate_bruteforce(self.vacuum, TWO_MODE_GRID, SPEC.epsilon, SPEC.kappa, outcomes)
        x = TWO_MODE_GRID.axis
        indices = [(15, 16, 16, 15), (12, 18, 14, 17), (16, 16, 20, 11), (19, 13, 15, 16)]
        points = np.array([[x[i] for i in idx] for idx in indices])
        direct = two_mode_direct_quadrature(self.vacuum, SPEC.epsilon, SPEC.kappa, outcomes, points)
        expected = np.array([brute.values[idx] for idx in indices])
        scale = np.abs(brute.values).max()
        np.testing.assert_allclose(direct, expected, rtol=0.0, atol=1e-5 * scale)

    def test_conditioned_oracle_needs_outcomes(self):
        with self.assertRaises(ValidationError):
            two_mode_gate_bruteforce(self.vacuum, TWO_MODE_GRID, SPEC.epsilon, SPEC.kappa)
        with self.assertRaises(ValidationError):
            two_mode_gate_bruteforce(vacuum_state(1), TWO_MODE_GRID, SPEC.epsilon)

    def test_last_argument_reads_p4_plus_q1(self):
        verdict = resolve_two_mode_argument(self.vacuum, TWO_MODE_GRID, SPEC.epsilon)
        self.assertEqual(verdict.argument, "p4+q1")
        self.assertLess(verdict.linf_p4_plus_q1, verdict.linf_p4_plus_p1)
