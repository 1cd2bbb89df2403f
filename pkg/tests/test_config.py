import json

import pytest

from trussketch.config import Config, ConfigError, config_from_dict, load_config


def test_defaults():
    c = Config()
    assert c.member_coverage_min == 0.90
    assert (c.arrow_line_similarity_min, c.arrow_centroid_shift_min) == (0.95, 0.01)
    assert c.support_band == (0.65, 0.75)
    assert c.roller_dilation_fraction == 0.20
    assert c.ocr_area_band == (0.5, 1.4)
    assert c.flip_thresholds == (0.5, 0.3)
    assert c.joint_se_radius == "auto"


def test_no_file_gives_defaults(monkeypatch):
    monkeypatch.delenv("TRUSSKETCH_CONFIG", raising=False)
    assert load_config() == Config()


def test_partial_file_overrides_one_key(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"arrow_line_similarity_min": 0.9}))
    c = load_config(p)
    assert c.arrow_line_similarity_min == 0.9
    assert c.to_dict() == {**Config().to_dict(), "arrow_line_similarity_min": 0.9}


def test_band_not_ordered():
    with pytest.raises(ConfigError, match="support_band: band not ordered"):
        config_from_dict({"support_band": [0.8, 0.7]})


@pytest.mark.parametrize(
    "doc,key",
    [
        ({"member_coverage_min": 1.5}, "member_coverage_min"),
        ({"arrow_centroid_shift_min": -0.1}, "arrow_centroid_shift_min"),
        ({"flip_thresholds": [2, 0.3]}, "flip_thresholds"),
        ({"small_region_area": 0}, "small_region_area"),
        ({"joint_se_radius": "big"}, "joint_se_radius"),
        ({"threshold": 300}, "threshold"),
        ({"ocr_area_band": [1.4]}, "ocr_area_band"),
        ({"word_dilation_radius": "x"}, "word_dilation_radius"),
        ({"no_such_key": 1}, "no_such_key"),
    ],
)
def test_errors_name_the_key(doc, key):
    with pytest.raises(ConfigError, match=key):
        config_from_dict(doc)


def test_malformed_file(tmp_path):
    p = tmp_path / "c.json"
    p.write_text("{not json")
    with pytest.raises(ConfigError, match="malformed"):
        load_config(p)


def test_env_fallback(tmp_path, monkeypatch):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"joint_se_radius": 5}))
    monkeypatch.setenv("TRUSSKETCH_CONFIG", str(p))
    assert load_config().joint_se_radius == 5.0
    # an explicit path wins over the environment
    q = tmp_path / "d.json"
    q.write_text("{}")
    assert load_config(q) == Config()
