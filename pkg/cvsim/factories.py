import factory
from factory import fuzzy

from .gaussian import SqueezedThermalSpec
from .models import ExperimentCommand, ExperimentRun, OutputFormat, RunStatus


class ExperimentRunFactory(factory.django.DjangoModelFactory):
    class Meta:
        model = ExperimentRun

    command = ExperimentCommand.THRESHOLD_TABLE
    seed = factory.Sequence(lambda n: n)
    config = factory.LazyAttribute(lambda o: {"command": o.command, "seed": int(o.seed)})
    formats = factory.LazyFunction(lambda: [OutputFormat.CSV.value])
    output_dir = "output"
    tolerance = 1e-9
    status = RunStatus.PENDING


class SqueezedThermalSpecFactory(factory.Factory):
    class Meta:
        model = SqueezedThermalSpec

    s = fuzzy.FuzzyFloat(1.0, 3.0)
    delta = fuzzy.FuzzyFloat(0.0, 4.0)
