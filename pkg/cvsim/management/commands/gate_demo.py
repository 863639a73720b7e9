from cvsim.models import ExperimentCommand

from ._base import ExperimentBaseCommand


class Command(ExperimentBaseCommand):
    help = 'Run one conditioned cluster gate with sampled outcomes and print its trace'

    command = ExperimentCommand.GATE_DEMO

    def report(self, result):
        payload = result.payload
        self.stdout.write(self.style.SUCCESS(f'🔗 Gate demo ({payload["gate"]})\n'))
        for step in payload["trace"]:
            self.stdout.write(f'  {step["kind"]} on modes {step["modes"]}, outcomes {step["outcomes"]}')
            for correction in step["corrections"]:
                self.stdout.write(f'    {correction["kind"]}({correction["amount"]:+.6g}) on mode {correction["mode"]}')
        self.stdout.write(f'Outcome density: {result.metrics["density"]:.6g}')
        final = payload["final_state"]
        self.stdout.write(f'Final mean: {final["mean"]}')
        self.stdout.write(f'Averaged reference mean: {payload["averaged_state"]["mean"]}')
        if "outcome_average_dev" in result.metrics:
            self.stdout.write(f'Outcome average vs averaged channel: {result.metrics["outcome_average_dev"]:.3e}')
