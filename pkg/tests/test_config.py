import pytest

from lzeval.config import ConfigError, PipelineConfig, config_to_text, load_config, parse_config


def test_defaults():
    cfg = PipelineConfig()
    assert cfg.mono.alpha == 0.9 and cfg.mono.threshold == 1.0
    assert cfg.stereo.params.block == 11 and cfg.stereo.lr_check
    assert cfg.terrain.cell_size == 0.5 and cfg.terrain.footprint == 1.0
    assert cfg.imu.beta == 0.1


def test_parse_overrides():
    cfg = parse_config(
        """
        # thresholds
        mono.threshold = 0.5
        flow.stride = 16
        stereo.max_disp = 96   # wider search
        stereo.lr_check = off
        imu.mount_roll_deg = 3
        terrain.slope_max = 10
        camera.fx = 350
        """
    )
    assert cfg.mono.threshold == 0.5 and cfg.mono.stride == 16
    assert cfg.stereo.params.max_disp == 96 and cfg.stereo.lr_check is False
    assert cfg.imu.mount_roll_deg == 3.0
    assert cfg.terrain.slope_max == 10.0
    assert cfg.camera.fx == 350.0


def test_round_trip():
    cfg = parse_config("terrain.rough_max = 0.03\nstereo.block = 9\n")
    assert parse_config(config_to_text(cfg)) == cfg


@pytest.mark.parametrize(
    "text",
    [
        "terrain.slope_mx = 10",
        "water.depth = 1",
        "flow.alpha = 0.5",
        "mono.stride = 3",
        "threshold = 1",
        "terrain.slope_max",
        "terrain.slope_max = steep",
        "stereo.block = 4",
        "stereo.min_disp = 70",
        "flow.window = 20",
        "mono.alpha = 1.0",
        "terrain.footprint = 0.25",
        "terrain.min_points = 2",
        "imu.beta = -1",
        "stereo.lr_check = maybe",
        "camera.fx = 0",
    ],
)
def test_invalid(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_load_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "nope.cfg")


def test_load_records_source(tmp_path):
    p = tmp_path / "a.cfg"
    p.write_text("terrain.cell_size = 0.25\n")
    cfg = load_config(p)
    assert cfg.source == str(p) and cfg.terrain.cell_size == 0.25
