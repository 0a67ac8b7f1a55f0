from rest_framework import serializers

from .laws import SampleLaw
from .sweep import FAMILIES


class ReportSerializer(serializers.Serializer):
    """Read-only rendering of a lab report that provides as_dict()"""

    def to_representation(self, instance):
        if hasattr(instance, 'as_dict'):
            instance = instance.as_dict()
        return super().to_representation(instance)


class SweepReportSerializer(ReportSerializer):
    family = serializers.ChoiceField(choices=FAMILIES)
    radii = serializers.ListField(child=serializers.FloatField())
    errors = serializers.ListField(child=serializers.FloatField())
    slope = serializers.FloatField(allow_null=True)
    exact = serializers.BooleanField()
    trials = serializers.IntegerField()
    seconds = serializers.FloatField()


class CriticalReportSerializer(ReportSerializer):
    law = serializers.CharField()
    point = serializers.DictField(child=serializers.FloatField())
    r = serializers.FloatField()
    gradient = serializers.ListField(child=serializers.FloatField())
    gradient_norm = serializers.FloatField()
    is_critical = serializers.BooleanField()
    eigenvalues = serializers.ListField(child=serializers.FloatField())
    hessian_min_eig = serializers.FloatField()
    psd_margins = serializers.DictField(child=serializers.FloatField())
    cauchy_gap = serializers.FloatField()
    degenerate = serializers.BooleanField()
    moments = serializers.DictField(child=serializers.FloatField())


class LandscapeReportSerializer(ReportSerializer):
    law = serializers.CharField()
    point = serializers.DictField(child=serializers.FloatField())
    r = serializers.FloatField()
    gradient = serializers.ListField(child=serializers.FloatField())
    hessian = serializers.ListField(child=serializers.ListField(child=serializers.FloatField()))


class MultistartReportSerializer(ReportSerializer):
    starts = serializers.IntegerField()
    converged = serializers.IntegerField()
    residuals = serializers.ListField(child=serializers.FloatField())
    clusters = serializers.IntegerField()
    split_ratio = serializers.FloatField()
    low_cluster = serializers.ListField(child=serializers.FloatField())
    high_cluster = serializers.ListField(child=serializers.FloatField())


class SampleLawSerializer(serializers.Serializer):
    """Validates lab law options: x-law kind, intervals and k0"""

    x_law = serializers.ChoiceField(choices=['uniform', 'two-point'], default='uniform')
    x0 = serializers.FloatField(default=-1.0)
    x1 = serializers.FloatField(default=1.0)
    y0 = serializers.FloatField(default=0.0)
    y1 = serializers.FloatField(default=0.02)
    k0 = serializers.FloatField(default=1.0)
    order = serializers.IntegerField(min_value=8, required=False, allow_null=True)

    def validate(self, attrs):
        if attrs['x1'] <= attrs['x0']:
            raise serializers.ValidationError({'x1': 'Must exceed x0.'})
        if attrs['y1'] < attrs['y0']:
            raise serializers.ValidationError({'y1': 'Must not be below y0.'})
        return attrs

    def create(self, validated_data):
        data = dict(validated_data)
        kind = data.pop('x_law')
        if kind == 'two-point':
            data.pop('x0')
            data.pop('x1')
            return SampleLaw.two_point(**data)
        return SampleLaw.uniform(**data)
