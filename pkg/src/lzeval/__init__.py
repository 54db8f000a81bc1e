"""Landing-zone evaluation for small UAVs from monocular and stereo cues."""

__version__ = "0.1.0"
