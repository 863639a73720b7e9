from django.conf import settings
from django.core.exceptions import ValidationError
from django.test import SimpleTestCase, TestCase

from .cluster_ops import FlowerbedGraph, GateStepRecord
from .factories import ExperimentRunFactory, SqueezedThermalSpecFactory
from .gaussian import GaussianState
from .models import ExperimentCommand, ExperimentRun, RunStatus
from .serializers import (
    ExperimentRunSerializer,
    FlowerbedGraphSerializer,
    GateStepRecordSerializer,
    GaussianStateSerializer,
    RunConfigSerializer,
)


class ModelTests(TestCase):
    def test_run_creation(self):
        """Test run creation and defaults"""
        run = ExperimentRunFactory(seed=7)
        self.assertEqual(run.status, RunStatus.PENDING)
        self.assertEqual(run.config['seed'], 7)
        self.assertFalse(run.succeeded)
        self.assertIn('threshold_table', str(run))

        run.status = RunStatus.COMPLETED
        run.save()
        self.assertTrue(ExperimentRun.objects.get(pk=run.pk).succeeded)

    def test_run_validation(self):
        """Seeds, tolerances and formats are checked by full_clean"""
        ExperimentRunFactory.build(seed=2**64 - 1).full_clean()

        with self.assertRaises(ValidationError):
            ExperimentRunFactory.build(seed=-1).full_clean()
        with self.assertRaises(ValidationError):
            ExperimentRunFactory.build(tolerance=0.0).full_clean()
        with self.assertRaises(ValidationError):
            ExperimentRunFactory.build(formats=['pdf']).full_clean()
        with self.assertRaises(ValidationError):
            ExperimentRunFactory.build(command='teleport').full_clean()

    def test_filter_by_command(self):
        ExperimentRunFactory()
        ExperimentRunFactory(command=ExperimentCommand.GATE_DEMO)
        self.assertEqual(ExperimentRun.objects.filter(command=ExperimentCommand.GATE_DEMO).count(), 1)

    def test_run_serializer(self):
        data = ExperimentRunSerializer(ExperimentRunFactory(status=RunStatus.BREACH, exit_code=2)).data
        self.assertEqual(data['status'], 'BREACH')
        self.assertEqual(data['exit_code'], 2)
        self.assertFalse(data['succeeded'])


class RunConfigSerializerTests(SimpleTestCase):
    def test_defaults_from_settings(self):
        serializer = RunConfigSerializer(data={'command': 'threshold_table', 'levels': '10, 12'})
        self.assertTrue(serializer.is_valid(), serializer.errors)
        data = serializer.validated_data
        self.assertEqual(data['levels'], [10.0, 12.0])
        self.assertEqual(data['seed'], settings.CVSIM_DEFAULT_SEED)
        self.assertEqual(data['output_dir'], settings.CVSIM_OUTPUT_DIR)

    def test_parsed_options(self):
        serializer = RunConfigSerializer(data={
            'command': 'ellipse_plot',
            'states': ['2:1', '1.5'],
            'anchor': '17.4:1e-3',
            'deltas': '0,0.5',
        })
        self.assertTrue(serializer.is_valid(), serializer.errors)
        data = serializer.validated_data
        self.assertEqual(data['states'], [(2.0, 1.0), (1.5, 0.0)])
        self.assertEqual((data['anchor_db'], data['anchor_p']), (17.4, 1e-3))
        self.assertEqual(data['deltas'], [0.0, 0.5])

    def test_invalid_options(self):
        for data in [
            {'command': 'gate_demo', 'squeeze_db': 5.0, 's': 1.5},
            {'command': 'kappa_sweep', 'deltas': '0,-1'},
            {'command': 'ellipse_plot', 'states': ['1:2:3']},
            {'command': 'threshold_table', 'anchor': 'x:y'},
            {'command': 'gate_demo', 'seed': -1},
            {'command': 'gate_demo', 'tolerance': 0},
            {'command': 'bell_test'},
        ]:
            self.assertFalse(RunConfigSerializer(data=data).is_valid(), data)


class DomainSerializerTests(SimpleTestCase):
    def test_gaussian_state(self):
        serializer = GaussianStateSerializer(data={'mean': [0, 0], 'cov': [[0.5, 0], [0, 0.5]]})
        self.assertTrue(serializer.is_valid(), serializer.errors)
        state = serializer.save()
        self.assertIsInstance(state, GaussianState)
        self.assertEqual(GaussianStateSerializer(state).data['n_modes'], 1)

        bad = GaussianStateSerializer(data={'mean': [0, 0], 'cov': [[0.5, 0.2], [0, 0.5]]})
        self.assertFalse(bad.is_valid())

    def test_gate_step_record(self):
        serializer = GateStepRecordSerializer(data={
            'kind': 'ONE_MODE',
            'modes': [0],
            'outcomes': [0.2],
            'corrections': [{'kind': 'X', 'mode': 0, 'amount': -0.2}],
        })
        self.assertTrue(serializer.is_valid(), serializer.errors)
        record = serializer.save()
        self.assertIsInstance(record, GateStepRecord)
        self.assertTrue(record.conditioned)

        missing = GateStepRecordSerializer(data={'kind': 'ONE_MODE', 'modes': [0], 'outcomes': [0.2]})
        self.assertFalse(missing.is_valid())

    def test_flowerbed_graph(self):
        data = FlowerbedGraphSerializer(FlowerbedGraph.square(2, 2)).data
        self.assertEqual(data['n_modes'], 4)
        self.assertEqual(len(data['nodes']), 5)
        self.assertEqual(len(data['edges']), 4)
        self.assertIn('gkp,0,0', [node['id'] for node in data['nodes']])
        self.assertEqual(data['steps'], [])


class FactoryTests(SimpleTestCase):
    def test_spec_factory_stays_in_range(self):
        for _ in range(20):
            spec = SqueezedThermalSpecFactory()
            self.assertTrue(1.0 <= spec.s <= 3.0)
            self.assertTrue(spec.epsilon * spec.kappa >= 0.25 - 1e-12)
