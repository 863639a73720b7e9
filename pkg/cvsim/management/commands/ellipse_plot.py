from cvsim.models import ExperimentCommand

from ._base import ExperimentBaseCommand


class Command(ExperimentBaseCommand):
    help = 'Draw 1-sigma phase-space ellipses of squeezed-thermal states as SVG'

    command = ExperimentCommand.ELLIPSE_PLOT

    def report(self, result):
        self.stdout.write(self.style.SUCCESS('🥚 Ellipse plot\n'))
        for row in result.rows:
            style = 'dashed' if row["dashed"] else 'solid'
            self.stdout.write(
                f'  s={row["s"]:g} δ={row["delta"]:g}: κ={row["kappa"]:.4f} ε={row["epsilon"]:.4f} '
                f'({row["squeezing_db"]:.2f} dB, {style})'
            )
