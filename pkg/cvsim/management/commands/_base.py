import json
import logging

from django.conf import settings
from django.core.exceptions import ValidationError
from django.core.management.base import BaseCommand, CommandError
from django.db import DatabaseError

from cvsim.experiments import ExperimentResult, RunConfig, run_experiment
from cvsim.models import ExperimentRun, RunStatus
from cvsim.reports import render_json, write_reports
from cvsim.serializers import ExperimentRunSerializer, RunConfigSerializer

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_BREACH = 2
EXIT_CONFIG = 3

OPTION_FIELDS = {
    'seed': 'seed',
    'out': 'output_dir',
    'tolerance': 'tolerance',
    'grid_n': 'grid_n',
    'grid_l': 'grid_l',
    'squeeze_db': 'squeeze_db',
    's': 's',
    'delta': 'delta',
    'levels': 'levels',
    'anchor': 'anchor',
    'gate': 'gate',
    'shear': 'shear',
    'rows': 'rows',
    'cols': 'cols',
    'trials': 'trials',
    'state': 'states',
    'samples': 'samples',
    'deltas': 'deltas',
    'gkp_delta': 'gkp_delta',
}


class ExperimentBaseCommand(BaseCommand):
    """
    Shared flags, run bookkeeping and exit codes for the experiment commands.

    Exit codes: 0 success, 2 invariant breach, 3 configuration error.
    """

    command = None

    def add_arguments(self, parser):
        parser.add_argument('--seed', type=int, help='Root seed (unsigned 64-bit)')
        parser.add_argument('--out', type=str, help='Output directory (default: CVSIM_OUTPUT_DIR)')
        parser.add_argument(
            '--format',
            action='append',
            help='Output format: csv, json, svg or bin; repeat or comma-separate'
        )
        parser.add_argument('--grid-n', type=int, help='Grid points per axis (power of two)')
        parser.add_argument('--grid-l', type=float, help='Grid half-width L')
        parser.add_argument('--squeeze-db', type=float, help='Squeezing magnitude in dB (instead of --s)')
        parser.add_argument('--s', type=float, help='Squeezing factor s >= 1')
        parser.add_argument('--delta', type=float, help='Excess anti-squeezing delta >= 0')
        parser.add_argument('--levels', type=str, help='Extra squeezing levels in dB, comma-separated')
        parser.add_argument('--anchor', type=str, help='Calibration anchor as <db>:<p>')
        parser.add_argument('--average', action='store_true', help='Add the outcome-averaged reference')
        parser.add_argument('--tolerance', type=float, help='Breach tolerance')
        parser.add_argument('--gate', type=str, help='one-mode or two-mode')
        parser.add_argument('--shear', type=int, help='Shear bit m (0 or 1)')
        parser.add_argument('--rows', type=int, help='Lattice rows')
        parser.add_argument('--cols', type=int, help='Lattice columns')
        parser.add_argument('--trials', type=int, help='Number of randomized trials')
        parser.add_argument('--state', action='append', help='State as s:delta; repeatable')
        parser.add_argument('--samples', type=int, help='Monte-Carlo samples per average')
        parser.add_argument('--deltas', type=str, help='Delta values for the sweep, comma-separated')
        parser.add_argument('--gkp-delta', type=float, help='Envelope width of the approximate GKP input')
        parser.add_argument('--no-record', action='store_true', help='Do not store an ExperimentRun row')

    def handle(self, *args, **options):
        config = self.build_config(options)
        run = self.start_run(config, options)

        try:
            result = run_experiment(config)
        except ValidationError as e:
            self.finish_run(run, RunStatus.FAILED, EXIT_CONFIG, notes='; '.join(e.messages))
            raise CommandError(f'Invalid configuration: {"; ".join(e.messages)}', returncode=EXIT_CONFIG)
        except Exception as e:
            self.finish_run(run, RunStatus.FAILED, 1, notes=str(e))
            raise CommandError(f'{config.command.label} failed: {str(e)}')

        paths = write_reports(result, config)
        self.report(result)
        for path in paths:
            self.stdout.write(f'  📄 {path}')

        if result.breaches:
            self.finish_run(run, RunStatus.BREACH, EXIT_BREACH, result, notes='; '.join(result.breaches))
            for breach in result.breaches:
                self.stdout.write(self.style.ERROR(f'❌ {breach}'))
            raise CommandError(f'{len(result.breaches)} invariant breach(es)', returncode=EXIT_BREACH)

        self.finish_run(run, RunStatus.COMPLETED, EXIT_OK, result)
        self.stdout.write(self.style.SUCCESS(f'✅ {config.command.label} completed'))

    def build_config(self, options) -> RunConfig:
        data = {'command': self.command}
        for option, name in OPTION_FIELDS.items():
            if options.get(option) is not None:
                data[name] = options[option]
        if options.get('format'):
            data['formats'] = [f.strip() for item in options['format'] for f in item.split(',') if f.strip()]
        if options.get('average'):
            data['average'] = True

        serializer = RunConfigSerializer(data=data)
        if not serializer.is_valid():
            raise CommandError(f'Invalid configuration: {serializer.errors}', returncode=EXIT_CONFIG)
        try:
            config = RunConfig(**serializer.validated_data)
        except ValidationError as e:
            raise CommandError(f'Invalid configuration: {"; ".join(e.messages)}', returncode=EXIT_CONFIG)
        return config

    def start_run(self, config: RunConfig, options):
        if options.get('no_record') or not settings.CVSIM_RECORD_RUNS:
            return None
        try:
            return ExperimentRun.objects.create(
                command=config.command,
                seed=config.seed,
                config=config.as_dict(),
                formats=[f.value for f in config.formats],
                output_dir=str(config.output_dir),
                tolerance=config.tolerance,
            )
        except DatabaseError as e:
            logger.warning(f'Run not recorded: {str(e)}')
            return None

    def finish_run(self, run, status, exit_code, result: ExperimentResult = None, notes=''):
        if run is None:
            return
        run.status = status
        run.exit_code = exit_code
        if result is not None:
            run.metrics = json.loads(render_json(result.metrics))
        run.notes = notes
        run.save()
        record = ExperimentRunSerializer(run).data
        self.stdout.write(f'  🗂️  Run #{record["id"]} {record["status"]} (exit {record["exit_code"]})')
        logger.debug(f'Recorded run: {json.dumps(record, default=str)}')

    def report(self, result: ExperimentResult):
        """Per-command console summary."""
        for key, value in result.metrics.items():
            self.stdout.write(f'  {key}: {value}')
