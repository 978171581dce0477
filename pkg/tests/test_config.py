import pytest

from skelfuse.config import config_from_dict, load_config, resolved_config_dict
from skelfuse.errors import ConfigError


class TestDefaults:
    def test_empty_config_loads_defaults(self):
        cfg = config_from_dict({})
        assert cfg.topology.n_joints == 12
        assert cfg.refiner.filter_spec.cutoff_hz == 10.0
        assert cfg.refiner.weights.w_los == 4.0
        assert cfg.ratio_mode == "reset"
        assert cfg.initial_ratios["femur"] == pytest.approx(0.1462)

    def test_none_path_loads_defaults(self):
        cfg = load_config(None)
        assert cfg.camera.image_size == (1280, 720)

    def test_resolved_dict_is_serializable(self):
        import yaml
        out = yaml.safe_dump(resolved_config_dict(config_from_dict({})))
        assert "initial_ratios" in out


class TestValidation:
    def test_unknown_top_level_key(self):
        with pytest.raises(ConfigError):
            config_from_dict({"filtering": {}})

    def test_unknown_nested_key(self):
        with pytest.raises(ConfigError):
            config_from_dict({"weights": {"w_w": 1.0}})

    def test_unknown_initial_ratio_segment(self):
        with pytest.raises(ConfigError):
            config_from_dict({"initial_ratios": {"skull": 0.1}})

    def test_bad_filter_cutoff(self):
        with pytest.raises(ConfigError):
            config_from_dict({"filter": {"cutoff_hz": 20.0, "sample_hz": 30.0}})

    def test_reuse_requires_session(self):
        with pytest.raises(ConfigError):
            config_from_dict({"ratio_mode": {"mode": "reuse"}})

    def test_torso_polynomial_neutral_invariant(self):
        with pytest.raises(ConfigError):
            config_from_dict({"torso_polynomials": {"spine": [0.8, 0.2]}})

    def test_missing_file(self):
        with pytest.raises(ConfigError):
            load_config("/nonexistent/config.yaml")


class TestOverrides:
    def test_camera_from_focal(self):
        cfg = config_from_dict({"camera": {"focal_px": 900.0,
                                           "image_size": [640, 480]}})
        assert cfg.camera.focal_length == 900.0
        assert cfg.camera.principal_point == (320.0, 240.0)

    def test_motion_block(self):
        cfg = config_from_dict({"motion": {"kind": "abduction", "duration_s": 2.0,
                                           "params": {"max_elevation_deg": 90.0},
                                           "subject": {"fixed_sum": 2.7}}})
        assert cfg.motion.kind == "abduction"
        assert cfg.motion.subject.fixed_sum == 2.7

    def test_ratio_mode_as_string(self):
        cfg = config_from_dict({"ratio_mode": "reset"})
        assert cfg.ratio_mode == "reset"

    def test_torso_polynomials_accepted(self):
        cfg = config_from_dict({"torso_polynomials": {"spine": [1.0, -0.05]}})
        assert cfg.torso_model.factor("spine", 1.0) == pytest.approx(0.95)
