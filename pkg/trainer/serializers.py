from rest_framework import serializers

from .config import InferConfig, TrainConfig


class StrictSerializer(serializers.Serializer):
    """Rejects keys that are not declared fields."""

    def validate(self, attrs):
        unknown = sorted(set(self.initial_data) - set(self.fields))
        if unknown:
            raise serializers.ValidationError({key: 'Unknown configuration key.' for key in unknown})
        return attrs


class TrainConfigSerializer(StrictSerializer):
    """Validates a training configuration given as strings or values"""

    shapes_per_batch = serializers.IntegerField(min_value=1, required=False)
    voxels_per_shape = serializers.IntegerField(min_value=1, required=False)
    points_per_voxel = serializers.IntegerField(min_value=1, required=False)
    lr_mlp = serializers.FloatField(required=False)
    lr_frames = serializers.FloatField(required=False)
    lr_latents = serializers.FloatField(required=False)
    iterations = serializers.IntegerField(min_value=0, required=False)
    halving_period = serializers.IntegerField(min_value=1, required=False)
    seed = serializers.IntegerField(min_value=0, required=False)
    log_every = serializers.IntegerField(min_value=1, required=False)
    frame_init = serializers.ChoiceField(choices=['pca', 'identity'], required=False)
    learn_frames = serializers.BooleanField(required=False)
    latent_size = serializers.IntegerField(min_value=1, required=False)
    hidden = serializers.IntegerField(min_value=1, required=False)
    depth = serializers.IntegerField(min_value=1, required=False)
    quadratic_layers = serializers.IntegerField(min_value=0, required=False)

    def validate_lr_mlp(self, value):
        return _positive(value)

    def validate_lr_frames(self, value):
        return _positive(value)

    def validate_lr_latents(self, value):
        return _positive(value)

    def validate(self, attrs):
        attrs = super().validate(attrs)
        base = self.context.get('base') or TrainConfig.from_settings()
        depth = attrs.get('depth', base.depth)
        if attrs.get('quadratic_layers', base.quadratic_layers) > depth:
            raise serializers.ValidationError({'quadratic_layers': f"Cannot exceed the depth ({depth})."})
        return attrs

    def create(self, validated_data):
        base = self.context.get('base') or TrainConfig.from_settings()
        return base.with_changes(**validated_data)


class InferConfigSerializer(StrictSerializer):
    lr = serializers.FloatField(required=False)
    iterations = serializers.IntegerField(min_value=0, required=False)
    seed = serializers.IntegerField(min_value=0, required=False)
    voxels_per_step = serializers.IntegerField(min_value=1, required=False)
    points_per_voxel = serializers.IntegerField(min_value=1, required=False)
    resolution = serializers.IntegerField(min_value=2, required=False, allow_null=True)
    per_voxel = serializers.IntegerField(min_value=1, required=False)
    frame_init = serializers.ChoiceField(choices=['pca', 'identity'], required=False, allow_null=True)
    learn_frames = serializers.BooleanField(required=False, allow_null=True)

    def validate_lr(self, value):
        return _positive(value)

    def create(self, validated_data):
        base = self.context.get('base') or InferConfig.from_settings()
        return base.with_changes(**validated_data)


class CheckpointMetaSerializer(serializers.Serializer):
    """Sidecar metadata stored next to a checkpoint"""

    iteration = serializers.IntegerField(min_value=0)
    loss_history = serializers.ListField(child=serializers.FloatField(), allow_empty=True)
    resolution = serializers.IntegerField(min_value=2, allow_null=True, required=False)
    bounds = serializers.ListField(child=serializers.FloatField(), min_length=6, max_length=6, required=False)
    train_config = serializers.DictField(required=False)


def _positive(value):
    if not value > 0:
        raise serializers.ValidationError('Learning rate must be positive.')
    return value
