from cvsim.models import ExperimentCommand

from ._base import ExperimentBaseCommand


class Command(ExperimentBaseCommand):
    help = 'Delete random lattice nodes and compare with the lattice that never had them'

    command = ExperimentCommand.DELETE_CHECK

    def report(self, result):
        metrics = result.metrics
        lattice = metrics["lattice"]
        self.stdout.write(self.style.SUCCESS('🧹 Deletion check\n'))
        self.stdout.write(
            f'Lattice {lattice["rows"]}x{lattice["cols"]}: {lattice["base_nodes"]} base nodes, '
            f'{lattice["ancilla_markers"]} GKP markers'
        )
        self.stdout.write(f'Trials: {metrics["trials"]}')
        self.stdout.write(f'Max deviation: {metrics["max_deviation"]:.3e}')
        if metrics["rejection_exercised"]:
            self.stdout.write('Input-node deletion rejected as expected')
