import csv

import pytest

from carnot_lab.cli.commands import run_checks
from carnot_lab.config import RunConfig


def run_into(directory, seed=3):
    config = RunConfig(output_dir=str(directory), resolution=16, p_values=[2.0], seed=seed)
    return run_checks(config, ["maximal"])


@pytest.mark.slow
class TestRunChecks:
    """检查命令的输出文件测试类"""

    def test_same_seed_same_bytes(self, tmp_path):
        """测试相同配置与种子下报告与表格逐字节一致"""
        first, second = tmp_path / "a", tmp_path / "b"
        assert run_into(first) == run_into(second)
        for name in ("maximal.json", "maximal_samples.csv", "maximal_vmo_modulus.csv", "maximal_measurements.csv"):
            assert (first / name).read_bytes() == (second / name).read_bytes(), name

    def test_maximal_tables_written(self, tmp_path):
        """测试 (x, Mf, f♯) 与 η(r) 表经仓储写成 CSV"""
        run_into(tmp_path)
        with (tmp_path / "maximal_samples.csv").open(encoding="utf-8") as f:
            rows = list(csv.DictReader(f))
        assert list(rows[0]) == ["x", "y", "t", "Mf", "f_sharp"]
        assert len(rows) == 200
        assert all(float(row["f_sharp"]) <= 2.0 * float(row["Mf"]) + 1e-12 for row in rows)

        with (tmp_path / "maximal_vmo_modulus.csv").open(encoding="utf-8") as f:
            eta = [float(row["eta"]) for row in csv.DictReader(f)]
        assert eta == sorted(eta)
