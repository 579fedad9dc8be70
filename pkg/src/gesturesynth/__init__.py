"""Speech-to-gesture synthesis toolkit.

Train an adversarial mel-to-pose generator, evaluate it with PCK, and
export generated keypoint sequences as BVH animations. Public names are
re-exported lazily so importing the package stays cheap for the CLI.
"""

from importlib import import_module

__version__ = "0.1.0"

_EXPORTS = {
    "SkeletonTopology": "skeleton",
    "Pose": "skeleton",
    "PoseSequence": "skeleton",
    "bone_lengths": "skeleton",
    "motion": "skeleton",
    "root_normalize": "skeleton",
    "default_topology": "skeleton",
    "load_topology": "skeleton",
    "save_topology": "skeleton",
    "AudioClip": "audio",
    "MelSpectrogram": "audio",
    "stft": "audio",
    "mel_spectrogram": "audio",
    "segment_clips": "audio",
    "load_wav": "audio",
    "save_wav": "audio",
    "GestureSample": "data",
    "DatasetManifest": "data",
    "ManifestEntry": "data",
    "align": "data",
    "split": "data",
    "synth_unimodal": "data",
    "synth_multimodal": "data",
    "load_pose_file": "data",
    "write_pose_file": "data",
    "load_manifest": "data",
    "save_manifest": "data",
    "Tensor": "autodiff",
    "GeneratorConfig": "networks",
    "DiscriminatorConfig": "networks",
    "ModelParams": "networks",
    "init_params": "networks",
    "generator_forward": "networks",
    "discriminator_forward": "networks",
    "TrainConfig": "training",
    "TrainState": "training",
    "generator_loss": "training",
    "gan_loss_d": "training",
    "gan_loss_g": "training",
    "adam_step": "training",
    "train_step": "training",
    "train": "training",
    "save_checkpoint": "checkpoint",
    "load_checkpoint": "checkpoint",
    "EvalReport": "evaluation",
    "pck": "evaluation",
    "motion_scale": "evaluation",
    "collapse_ratio": "evaluation",
    "evaluate": "evaluation",
    "JointRotationSequence": "animation",
    "FingerLimits": "animation",
    "retarget": "animation",
    "solve_roll": "animation",
    "apply_finger_limits": "animation",
    "smooth": "animation",
    "forward_kinematics": "animation",
    "animation_pipeline": "animation",
    "export_bvh": "bvh",
    "parse_bvh": "bvh",
    "GestureGan": "estimator",
}

__all__ = sorted(_EXPORTS) + ["__version__"]


def __getattr__(name):
    module = _EXPORTS.get(name)
    if module is None:
        raise AttributeError(f"module 'gesturesynth' has no attribute {name!r}")
    return getattr(import_module(f".{module}", __name__), name)
