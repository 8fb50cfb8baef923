import pytest

from goalplace.core import config
from goalplace.core.exceptions import InputError


class TestSettings:
    """Test settings resolution"""

    def test_defaults(self):
        settings = config.get_settings()

        assert settings.bin_scale == 10.0
        assert settings.prior_size == 50
        assert settings.r_max == 8.0
        assert settings.clique_net_cap == 64

    def test_environment_override(self, monkeypatch):
        monkeypatch.setenv("GOALPLACE_R_MAX", "4")

        assert config.get_settings().r_max == 4.0

    def test_proxy_follows_configure(self):
        config.configure(seed=11)

        assert config.settings.seed == 11

    def test_none_overrides_are_ignored(self):
        settings = config.configure(seed=None)

        assert settings.seed == 0

    def test_yaml_file(self, tmp_path):
        path = tmp_path / "goalplace.yaml"
        path.write_text("bin_scale: 5\nthreads: 2\n")

        settings = config.configure(path, threads=3)

        assert settings.bin_scale == 5.0
        assert settings.threads == 3

    def test_yaml_must_be_mapping(self, tmp_path):
        path = tmp_path / "list.yaml"
        path.write_text("- 1\n- 2\n")

        with pytest.raises(InputError, match="mapping"):
            config.configure(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(InputError, match="not found"):
            config.load_config_file(tmp_path / "absent.yaml")
