from cvsim.models import ExperimentCommand

from ._base import ExperimentBaseCommand


class Command(ExperimentBaseCommand):
    help = 'Tabulate GKP misbin error rates against cluster squeezing'

    command = ExperimentCommand.THRESHOLD_TABLE

    def report(self, result):
        metrics = result.metrics
        self.stdout.write(self.style.SUCCESS('📈 Threshold table\n'))
        self.stdout.write(
            f'Multiplier k = {metrics["multiplier"]:.6g} '
            f'(anchor {metrics["anchor_db"]} dB ↔ {metrics["anchor_p"]:g})'
        )
        for row in result.rows:
            line = f'  {row["db"]:>6.2f} dB   σ² = {row["sigma2_total"]:.4e}   p = {row["p_err"]:.3e}'
            if row["note"]:
                self.stdout.write(self.style.WARNING(f'{line}   ({row["note"]})'))
            else:
                self.stdout.write(line)
        for target, db in metrics["required_squeezing_db"].items():
            self.stdout.write(f'Squeezing for p = {target}: {db:.3f} dB')
