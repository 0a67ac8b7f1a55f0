from rest_framework import serializers


class EvalReportSerializer(serializers.Serializer):
    """Read-only rendering of an EvalReport"""

    chamfer = serializers.FloatField(allow_null=True, min_value=0.0)
    chamfer_x1e4 = serializers.FloatField(allow_null=True)
    points = serializers.IntegerField()
    reference_points = serializers.IntegerField()
    resolution = serializers.IntegerField(allow_null=True)
    triangles = serializers.IntegerField(allow_null=True)
    seconds = serializers.FloatField()
    error = serializers.CharField(allow_null=True)

    def to_representation(self, instance):
        if hasattr(instance, 'as_dict'):
            instance = instance.as_dict()
        return super().to_representation(instance)
