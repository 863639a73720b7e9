from __future__ import annotations

from django.core.exceptions import ValidationError
from django.db import models

U64_MAX = 2**64 - 1


class TimeStampedModel(models.Model):
    created_at = models.DateTimeField(auto_now_add=True, db_index=True)
    updated_at = models.DateTimeField(auto_now=True, db_index=True)

    class Meta:
        abstract = True


class TransformKind(models.TextChoices):
    CZ = "CZ", "Controlled phase CZ[g]"
    SHEAR = "SHEAR", "Shear P(m)"
    FOURIER = "FOURIER", "Fourier rotation"
    DISPLACE_Q = "DISPLACE_Q", "Position displacement X(t)"
    DISPLACE_P = "DISPLACE_P", "Momentum displacement Z(t)"


class Quadrature(models.TextChoices):
    Q = "Q", "Position"
    P = "P", "Momentum (p + m q)"
    HETERODYNE = "HETERODYNE", "Heterodyne pair"


class NodeKind(models.TextChoices):
    THERMAL_BASE = "THERMAL_BASE", "Squeezed-thermal base node"
    GKP_ANCILLA = "GKP_ANCILLA", "GKP ancilla marker"
    INPUT = "INPUT", "Input"
    OUTPUT = "OUTPUT", "Output"


class GateKind(models.TextChoices):
    ONE_MODE = "ONE_MODE", "One-mode gate"
    TWO_MODE = "TWO_MODE", "Two-mode gate"
    DELETION = "DELETION", "Node deletion"
    IDENTITY = "IDENTITY", "Identity one-mode gate"


class CorrectionKind(models.TextChoices):
    X = "X", "Position shift X"
    Z = "Z", "Momentum shift Z"


class ExperimentCommand(models.TextChoices):
    KAPPA_SWEEP = "kappa_sweep", "Kappa sweep"
    THRESHOLD_TABLE = "threshold_table", "Threshold table"
    DELETE_CHECK = "delete_check", "Deletion check"
    ELLIPSE_PLOT = "ellipse_plot", "Ellipse plot"
    GATE_DEMO = "gate_demo", "Gate demo"


class OutputFormat(models.TextChoices):
    CSV = "csv", "CSV"
    JSON = "json", "JSON"
    SVG = "svg", "SVG"
    BIN = "bin", "Binary grid"


class RunStatus(models.TextChoices):
    PENDING = "PENDING", "Pending"
    COMPLETED = "COMPLETED", "Completed"
    BREACH = "BREACH", "Invariant breach"
    FAILED = "FAILED", "Failed"


class ExperimentRun(TimeStampedModel):
    """
    One command invocation, kept so that runs can be compared later.
    """
    command = models.CharField(max_length=24, choices=ExperimentCommand.choices)
    seed = models.DecimalField(max_digits=20, decimal_places=0, default=0)
    config = models.JSONField(default=dict, blank=True)
    formats = models.JSONField(default=list, blank=True)
    output_dir = models.CharField(max_length=500, blank=True, default="")
    tolerance = models.FloatField(null=True, blank=True)

    status = models.CharField(max_length=12, choices=RunStatus.choices, default=RunStatus.PENDING)
    exit_code = models.PositiveSmallIntegerField(null=True, blank=True)
    metrics = models.JSONField(default=dict, blank=True)

    notes = models.TextField(blank=True, default="")

    class Meta:
        ordering = ["-created_at"]

    def clean(self):
        if self.seed < 0 or self.seed > U64_MAX:
            raise ValidationError("Seed must be an unsigned 64-bit integer.")
        if self.tolerance is not None and self.tolerance <= 0:
            raise ValidationError("Tolerance must be > 0.")
        unknown = set(self.formats or []) - set(OutputFormat.values)
        if unknown:
            raise ValidationError(f"Unknown output formats: {sorted(unknown)}")

    @property
    def succeeded(self) -> bool:
        return self.status == RunStatus.COMPLETED

    def __str__(self):
        return f"ExperimentRun({self.command}, seed={self.seed}, status={self.status})"
