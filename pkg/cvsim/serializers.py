from django.conf import settings
from django.core.exceptions import ValidationError as DjangoValidationError
from rest_framework import serializers

from .cluster_ops import Correction, GateStepRecord
from .gaussian import GaussianState
from .models import (
    U64_MAX,
    CorrectionKind,
    ExperimentCommand,
    ExperimentRun,
    GateKind,
    OutputFormat,
)

GATE_CHOICES = ["one-mode", "two-mode"]


def _node_label(node) -> str:
    return ",".join(str(part) for part in node) if isinstance(node, tuple) else str(node)


def _parse_floats(text: str, name: str):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise serializers.ValidationError(f"{name} must be a comma-separated list of numbers.")


class GaussianStateSerializer(serializers.Serializer):
    n_modes = serializers.IntegerField(read_only=True)
    mean = serializers.ListField(child=serializers.FloatField())
    cov = serializers.ListField(child=serializers.ListField(child=serializers.FloatField()))

    def validate(self, data):
        try:
            data["state"] = GaussianState(data["mean"], data["cov"])
        except DjangoValidationError as e:
            raise serializers.ValidationError(e.messages)
        return data

    def create(self, validated_data):
        return validated_data["state"]


class CorrectionSerializer(serializers.Serializer):
    kind = serializers.ChoiceField(choices=CorrectionKind.choices)
    mode = serializers.IntegerField(min_value=0)
    amount = serializers.FloatField()

    def create(self, validated_data):
        return Correction(**validated_data)


class GateStepRecordSerializer(serializers.Serializer):
    kind = serializers.ChoiceField(choices=GateKind.choices)
    modes = serializers.ListField(child=serializers.IntegerField(min_value=0), min_length=1)
    shear = serializers.IntegerField(min_value=0, max_value=1, default=0)
    outcomes = serializers.ListField(child=serializers.FloatField(), default=list)
    corrections = CorrectionSerializer(many=True, required=False)
    density = serializers.FloatField(allow_null=True, required=False)

    def validate(self, data):
        corrections = [Correction(**c) for c in data.get("corrections", [])]
        try:
            data["record"] = GateStepRecord(
                kind=data["kind"],
                modes=tuple(data["modes"]),
                shear=data.get("shear", 0),
                outcomes=tuple(data.get("outcomes", [])),
                corrections=tuple(corrections),
                density=data.get("density"),
            )
        except DjangoValidationError as e:
            raise serializers.ValidationError(e.messages)
        return data

    def create(self, validated_data):
        return validated_data["record"]


class FlowerbedGraphSerializer(serializers.Serializer):
    rows = serializers.IntegerField(read_only=True)
    cols = serializers.IntegerField(read_only=True)
    n_modes = serializers.IntegerField(read_only=True)
    nodes = serializers.SerializerMethodField()
    edges = serializers.SerializerMethodField()
    steps = GateStepRecordSerializer(many=True, read_only=True)

    def get_nodes(self, obj):
        return [
            {"id": _node_label(node), "kind": data["kind"], "row": data["row"], "col": data["col"], "mode": data["mode"]}
            for node, data in sorted(obj.graph.nodes(data=True), key=lambda item: _node_label(item[0]))
        ]

    def get_edges(self, obj):
        return [{"modes": [i, j], "weight": weight} for i, j, weight in obj.base_edges()]


class ThresholdRowSerializer(serializers.Serializer):
    db = serializers.FloatField()
    epsilon = serializers.FloatField()
    sigma2_total = serializers.FloatField()
    p_err = serializers.FloatField()
    note = serializers.CharField(allow_blank=True)


class ErrorModelSerializer(serializers.Serializer):
    multiplier = serializers.FloatField()
    anchor_db = serializers.FloatField(allow_null=True)
    anchor_p = serializers.FloatField(allow_null=True)


class RunConfigSerializer(serializers.Serializer):
    """Validates command-line options into the keyword arguments of a RunConfig."""

    command = serializers.ChoiceField(choices=ExperimentCommand.choices)
    seed = serializers.IntegerField(min_value=0, max_value=U64_MAX, required=False)
    output_dir = serializers.CharField(required=False, allow_blank=True)
    formats = serializers.ListField(child=serializers.ChoiceField(choices=OutputFormat.choices), required=False)
    tolerance = serializers.FloatField(required=False, allow_null=True)
    grid_n = serializers.IntegerField(required=False, allow_null=True, min_value=16)
    grid_l = serializers.FloatField(required=False, allow_null=True)
    squeeze_db = serializers.FloatField(required=False, allow_null=True, min_value=0)
    s = serializers.FloatField(required=False, allow_null=True, min_value=1)
    delta = serializers.FloatField(required=False, min_value=0)
    levels = serializers.CharField(required=False, allow_blank=True)
    anchor = serializers.CharField(required=False, allow_blank=True)
    average = serializers.BooleanField(required=False)
    gate = serializers.ChoiceField(choices=GATE_CHOICES, required=False)
    shear = serializers.IntegerField(required=False, min_value=0, max_value=1)
    rows = serializers.IntegerField(required=False, min_value=1)
    cols = serializers.IntegerField(required=False, min_value=1)
    trials = serializers.IntegerField(required=False, min_value=1)
    states = serializers.ListField(child=serializers.CharField(), required=False, allow_null=True)
    samples = serializers.IntegerField(required=False, allow_null=True, min_value=1)
    deltas = serializers.CharField(required=False, allow_blank=True)
    gkp_delta = serializers.FloatField(required=False)

    def validate_tolerance(self, value):
        if value is not None and value <= 0:
            raise serializers.ValidationError("Tolerance must be > 0.")
        return value

    def validate_grid_l(self, value):
        if value is not None and value <= 0:
            raise serializers.ValidationError("Grid half-width must be > 0.")
        return value

    def validate_gkp_delta(self, value):
        if value <= 0:
            raise serializers.ValidationError("GKP envelope width must be > 0.")
        return value

    def validate_states(self, value):
        if value is None:
            return None
        pairs = []
        for item in value:
            parts = item.split(":")
            try:
                s = float(parts[0])
                delta = float(parts[1]) if len(parts) > 1 else 0.0
            except ValueError:
                raise serializers.ValidationError(f"State {item!r} is not of the form s:delta.")
            if len(parts) > 2:
                raise serializers.ValidationError(f"State {item!r} is not of the form s:delta.")
            pairs.append((s, delta))
        return pairs

    def validate(self, data):
        if data.get("squeeze_db") is not None and data.get("s") is not None:
            raise serializers.ValidationError("Give either --squeeze-db or --s, not both.")
        if data.get("s") is None:
            data.pop("s", None)
        if "levels" in data:
            data["levels"] = _parse_floats(data["levels"], "Levels")
        if "deltas" in data:
            data["deltas"] = _parse_floats(data["deltas"], "Deltas")
            if not data["deltas"] or min(data["deltas"]) < 0:
                raise serializers.ValidationError("Deltas must be a non-empty list of values >= 0.")
        anchor = data.pop("anchor", "")
        if anchor:
            try:
                db, p = anchor.split(":")
                data["anchor_db"], data["anchor_p"] = float(db), float(p)
            except ValueError:
                raise serializers.ValidationError("Anchor must be of the form <db>:<p>.")
        data.setdefault("seed", settings.CVSIM_DEFAULT_SEED)
        if not data.get("output_dir"):
            data["output_dir"] = settings.CVSIM_OUTPUT_DIR
        return data


class ExperimentRunSerializer(serializers.ModelSerializer):
    succeeded = serializers.BooleanField(read_only=True)

    class Meta:
        model = ExperimentRun
        fields = [
            'id', 'command', 'seed', 'config', 'formats', 'output_dir',
            'tolerance', 'status', 'exit_code', 'metrics', 'notes',
            'succeeded', 'created_at', 'updated_at'
        ]
        read_only_fields = ['id', 'status', 'exit_code', 'metrics', 'created_at', 'updated_at']
