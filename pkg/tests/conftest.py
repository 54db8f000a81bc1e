import numpy as np
import pytest

from lzeval.simulator import SceneSpec, render_mono_sequence, render_stereo


@pytest.fixture(scope="session")
def stereo_scene():
    """Memoized ``render_stereo`` keyed by SceneSpec keyword arguments."""
    cache = {}

    def get(**kw):
        key = tuple(sorted(kw.items()))
        if key not in cache:
            cache[key] = render_stereo(SceneSpec(**kw))
        return cache[key]

    return get


@pytest.fixture(scope="session")
def mono_sequence():
    cache = {}

    def get(n_frames=20, motion=0.5, frame_dt=0.1, **kw):
        kw.setdefault("depth_m", 4.0)
        key = (n_frames, motion, frame_dt, tuple(sorted(kw.items())))
        if key not in cache:
            cache[key] = render_mono_sequence(SceneSpec(**kw), n_frames, motion, frame_dt)
        return cache[key]

    return get


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
