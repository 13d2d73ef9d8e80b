import pytest
from pydantic import ValidationError

from carnot_lab.config import RunConfig, current_settings, load_run_config, parse_config_file, settings, use_settings
from carnot_lab.exceptions.custom_exceptions import ConfigError


class TestRunConfig:
    """运行配置校验测试类"""

    def test_defaults(self):
        config = RunConfig()
        assert config.group == "heisenberg"
        assert config.p_values == settings.default_p_values
        assert config.k_values == [8, 16, 32, 64]
        assert config.alpha == settings.default_alpha

    def test_comma_lists(self):
        """测试逗号分隔的列表与 k 排序"""
        config = RunConfig(p_values="3, 1.5", k_values="16,8", amplitudes="0.2")
        assert config.p_values == [3.0, 1.5]
        assert config.k_values == [8, 16]
        assert config.amplitudes == [0.2]

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"p_values": []},
            {"p_values": "0.5,2"},
            {"k_values": [1, 8]},
            {"alpha": 1.0},
            {"resolution": 4},
            {"radius": 0.0},
            {"group": "engel"},
            {"unknown_key": 1},
        ],
    )
    def test_invalid(self, kwargs):
        with pytest.raises(ValidationError):
            RunConfig(**kwargs)

    def test_frozen(self):
        config = RunConfig()
        with pytest.raises(ValidationError):
            config.resolution = 64

    def test_group_alias(self):
        assert RunConfig(group="H1").group == "H1"


class TestConfigFile:
    """配置文件解析测试类"""

    def test_parse(self, tmp_path):
        """测试注释、空行与连字符键名"""
        path = tmp_path / "run.conf"
        path.write_text("# 注释\n\nresolution = 16\nlattice-stride=3  # 行尾注释\np = 1.5,2\n", encoding="utf-8")
        assert parse_config_file(path) == {"resolution": "16", "lattice_stride": "3", "p": "1.5,2"}

    @pytest.mark.parametrize("text", ["resolution 16\n", " = 3\n"])
    def test_malformed_line(self, tmp_path, text):
        path = tmp_path / "bad.conf"
        path.write_text(text, encoding="utf-8")
        with pytest.raises(ConfigError) as exc_info:
            parse_config_file(path)
        assert ":1:" in exc_info.value.detail

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            parse_config_file(tmp_path / "absent.conf")


class TestLoadRunConfig:
    """配置优先级测试类"""

    @pytest.fixture
    def config_file(self, tmp_path):
        path = tmp_path / "run.conf"
        path.write_text("resolution = 16\noutput_dir = from_file\nseed = 3\n", encoding="utf-8")
        return path

    def test_file_values(self, config_file, monkeypatch):
        monkeypatch.delenv("CARNOT_OUTPUT_DIR", raising=False)
        config = load_run_config(config_file)
        assert config.resolution == 16
        assert config.output_dir == "from_file"
        assert config.seed == 3

    def test_precedence(self, config_file, monkeypatch):
        """文件 < 环境变量 < 命令行参数"""
        monkeypatch.setenv("CARNOT_OUTPUT_DIR", "from_env")
        assert load_run_config(config_file).output_dir == "from_env"

        config = load_run_config(config_file, {"output_dir": "from_flag", "seed": None, "resolution": 24})
        assert config.output_dir == "from_flag"
        assert config.seed == 3
        assert config.resolution == 24

    def test_validation_error_becomes_config_error(self, monkeypatch):
        monkeypatch.delenv("CARNOT_OUTPUT_DIR", raising=False)
        with pytest.raises(ConfigError) as exc_info:
            load_run_config(overrides={"p_values": ""})
        assert "p 列表不能为空" in exc_info.value.detail

    def test_unknown_key_in_file(self, tmp_path):
        path = tmp_path / "run.conf"
        path.write_text("colour = blue\n", encoding="utf-8")
        with pytest.raises(ConfigError):
            load_run_config(path)


class TestScopedSettings:
    """运行配置对库级设置的作用域测试类"""

    def test_library_settings_is_a_copy(self):
        before = settings.model_dump()
        scoped = RunConfig(seed=11, solver_max_iterations=50, lattice_ratio=1.5).library_settings()
        assert scoped is not settings
        assert (scoped.seed, scoped.solver_max_iterations, scoped.lattice_ratio) == (11, 50, 1.5)
        assert scoped.chain_margin == settings.chain_margin
        assert settings.model_dump() == before

    def test_use_settings_restores(self):
        """测试作用域内外 current_settings 的切换, 嵌套时恢复外层"""
        outer = RunConfig(seed=1).library_settings()
        inner = RunConfig(seed=2).library_settings()
        assert current_settings() is settings
        with use_settings(outer):
            assert current_settings().seed == 1
            with use_settings(inner):
                assert current_settings().seed == 2
            assert current_settings() is outer
        assert current_settings() is settings

    def test_restored_after_error(self):
        with pytest.raises(ValueError):
            with use_settings(RunConfig(seed=3).library_settings()):
                raise ValueError("boom")
        assert current_settings() is settings
